//! Training-corpus construction: language tags, direction swapping and the
//! composition of real and synthetic components into one training set.
//!
//! Component notation follows the usual convention of marking the synthetic
//! side with an asterisk: `L1*>L2` pairs a machine-generated L1 source with a
//! real L2 target, while `L1>L2*` places the machine output on the target
//! side.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::artifact::Hasher;
use crate::error::{Error, Result};
use crate::text::{Lang, Sentence};

pub const DEFAULT_TAG_FORMAT: &str = "<2{lang}>";

/// Renders and recognizes target-language tags such as `<2en>`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct TagFormat {
    prefix: String,
    suffix: String,
}

impl Default for TagFormat {
    fn default() -> Self {
        TagFormat::new(DEFAULT_TAG_FORMAT).expect("default tag format is valid")
    }
}

impl TagFormat {
    /// `pattern` must contain `{lang}` exactly once and no whitespace.
    pub fn new(pattern: &str) -> Result<Self> {
        let (prefix, suffix) = pattern
            .split_once("{lang}")
            .filter(|(p, s)| !s.contains("{lang}") && !(p.is_empty() && s.is_empty()))
            .ok_or_else(|| Error::Config(format!("tag format {pattern:?} needs one {{lang}} and a prefix or suffix")))?;
        if pattern.chars().any(char::is_whitespace) {
            return Err(Error::Config(format!("tag format {pattern:?} contains whitespace")));
        }
        Ok(TagFormat {
            prefix: prefix.to_string(),
            suffix: suffix.to_string(),
        })
    }

    pub fn render(&self, lang: &Lang) -> String {
        format!("{}{}{}", self.prefix, lang, self.suffix)
    }

    /// The language named by `token`, if it is a tag.
    pub fn parse(&self, token: &str) -> Option<Lang> {
        token
            .strip_prefix(&self.prefix)?
            .strip_suffix(&self.suffix)
            .filter(|l| !l.is_empty())
            .map(Lang::new)
    }

    pub fn is_tag(&self, token: &str) -> bool {
        self.parse(token).is_some()
    }
}

impl TryFrom<String> for TagFormat {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        TagFormat::new(&s)
    }
}

impl From<TagFormat> for String {
    fn from(t: TagFormat) -> String {
        format!("{}{{lang}}{}", t.prefix, t.suffix)
    }
}

/// Prepends the tag of `target_lang` to `s`.
pub fn tag_source(s: &Sentence, target_lang: &Lang, format: &TagFormat) -> Result<Sentence> {
    if let Some(first) = s.tokens.first().filter(|t| format.is_tag(t)) {
        return Err(Error::AlreadyTagged(first.clone()));
    }
    let mut tokens = Vec::with_capacity(s.len() + 1);
    tokens.push(format.render(target_lang));
    tokens.extend(s.tokens.iter().cloned());
    Ok(Sentence::new(tokens, s.lang.clone()))
}

/// Removes a leading tag, if any.
pub fn untag(s: &Sentence, format: &TagFormat) -> Sentence {
    match s.tokens.first() {
        Some(t) if format.is_tag(t) => Sentence::new(s.tokens[1..].to_vec(), s.lang.clone()),
        _ => s.clone(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Direction {
    /// L1 → L2
    Forward,
    /// L2 → L1
    Backward,
}

impl Direction {
    pub fn flip(self) -> Self {
        match self {
            Direction::Forward => Direction::Backward,
            Direction::Backward => Direction::Forward,
        }
    }

    pub const BOTH: [Direction; 2] = [Direction::Forward, Direction::Backward];
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Provenance {
    Real,
    /// The source side is machine output, the target is real text.
    SyntheticSource,
    /// The target side is machine output.
    SyntheticTarget,
}

impl Provenance {
    fn flip(self) -> Self {
        match self {
            Provenance::Real => Provenance::Real,
            Provenance::SyntheticSource => Provenance::SyntheticTarget,
            Provenance::SyntheticTarget => Provenance::SyntheticSource,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Real => "real",
            Provenance::SyntheticSource => "synthetic-source",
            Provenance::SyntheticTarget => "synthetic-target",
        }
    }
}

impl FromStr for Provenance {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "real" => Ok(Provenance::Real),
            "synthetic-source" => Ok(Provenance::SyntheticSource),
            "synthetic-target" => Ok(Provenance::SyntheticTarget),
            _ => Err(Error::Config(format!("unknown provenance {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TaggedPair {
    pub source: Sentence,
    pub target: Sentence,
    pub provenance: Provenance,
    pub direction: Direction,
}

impl TaggedPair {
    pub fn real(source: Sentence, target: Sentence) -> Self {
        TaggedPair {
            source,
            target,
            provenance: Provenance::Real,
            direction: Direction::Forward,
        }
    }

    pub fn component(&self) -> Component {
        Component {
            provenance: self.provenance,
            direction: self.direction,
        }
    }

    /// Swaps sides (dropping any tag) and flips direction and provenance.
    pub fn swapped(&self, format: &TagFormat) -> Self {
        TaggedPair {
            source: self.target.clone(),
            target: untag(&self.source, format),
            provenance: self.provenance.flip(),
            direction: self.direction.flip(),
        }
    }
}

/// Aligned pairs between languages `l1` and `l2`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParallelCorpus {
    pub l1: Lang,
    pub l2: Lang,
    pub pairs: Vec<TaggedPair>,
}

impl ParallelCorpus {
    pub fn new(l1: Lang, l2: Lang) -> Self {
        ParallelCorpus {
            l1,
            l2,
            pairs: Vec::new(),
        }
    }

    /// Real L1 → L2 pairs, untagged.
    pub fn from_real(l1: Lang, l2: Lang, pairs: Vec<(Sentence, Sentence)>) -> Self {
        ParallelCorpus {
            l1,
            l2,
            pairs: pairs.into_iter().map(|(s, t)| TaggedPair::real(s, t)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn target_lang(&self, d: Direction) -> &Lang {
        match d {
            Direction::Forward => &self.l2,
            Direction::Backward => &self.l1,
        }
    }

    pub fn source_lang(&self, d: Direction) -> &Lang {
        self.target_lang(d.flip())
    }

    fn with_pairs(&self, pairs: Vec<TaggedPair>) -> Self {
        ParallelCorpus {
            l1: self.l1.clone(),
            l2: self.l2.clone(),
            pairs,
        }
    }

    /// Pairs of one direction only.
    pub fn direction(&self, d: Direction) -> Self {
        self.with_pairs(self.pairs.iter().filter(|p| p.direction == d).cloned().collect())
    }

    pub fn count(&self, c: Component) -> usize {
        self.pairs.iter().filter(|p| p.component() == c).count()
    }

    /// Re-tags every source with its target language (`tagged`) or strips tags.
    pub fn retag(&self, tagged: bool, format: &TagFormat) -> Result<Self> {
        let pairs = self
            .pairs
            .iter()
            .map(|p| {
                let body = untag(&p.source, format);
                let source = if tagged {
                    tag_source(&body, self.target_lang(p.direction), format)?
                } else {
                    body
                };
                Ok(TaggedPair { source, ..p.clone() })
            })
            .collect::<Result<_>>()?;
        Ok(self.with_pairs(pairs))
    }

    pub fn content_hash(&self) -> String {
        let mut h = Hasher::new();
        h.update_str(self.l1.as_str()).update_str(self.l2.as_str()).update_str(&self.to_tsv());
        h.finish()
    }

    /// `source TAB target TAB direction TAB provenance` lines; direction is
    /// rendered as `src>tgt` language ids.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for p in &self.pairs {
            out.push_str(&format!(
                "{}\t{}\t{}>{}\t{}\n",
                p.source.text(),
                p.target.text(),
                self.source_lang(p.direction),
                self.target_lang(p.direction),
                p.provenance.as_str()
            ));
        }
        out
    }

    pub fn from_tsv(text: &str, l1: Lang, l2: Lang) -> Result<Self> {
        let mut corpus = ParallelCorpus::new(l1, l2);
        for (i, line) in text.lines().enumerate() {
            let bad = |msg: &str| Error::format("corpus tsv", i + 1, msg.to_string());
            let cols: Vec<&str> = line.split('\t').collect();
            let [src, tgt, dir, prov] = cols[..] else {
                return Err(bad("expected source, target, direction, provenance"));
            };
            let direction = match dir.split_once('>') {
                Some((a, b)) if a == corpus.l1.as_str() && b == corpus.l2.as_str() => Direction::Forward,
                Some((a, b)) if a == corpus.l2.as_str() && b == corpus.l1.as_str() => Direction::Backward,
                _ => return Err(bad("direction does not match the language pair")),
            };
            let provenance = prov.parse().map_err(|_| bad("bad provenance"))?;
            corpus.pairs.push(TaggedPair {
                source: Sentence::from_line(src, corpus.source_lang(direction).clone()),
                target: Sentence::from_line(tgt, corpus.target_lang(direction).clone()),
                provenance,
                direction,
            });
        }
        Ok(corpus)
    }
}

/// Appends the swapped copy of every pair; sources are tagged with their
/// target language.
pub fn swap_and_concat(parallel: &ParallelCorpus, format: &TagFormat) -> Result<ParallelCorpus> {
    let mut pairs = parallel.pairs.clone();
    pairs.extend(parallel.pairs.iter().map(|p| p.swapped(format)));
    parallel.with_pairs(pairs).retag(true, format)
}

/// One building block of a training set.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Component {
    pub provenance: Provenance,
    pub direction: Direction,
}

impl Component {
    pub const fn new(provenance: Provenance, direction: Direction) -> Self {
        Component { provenance, direction }
    }

    pub const REAL_FORWARD: Component = Component::new(Provenance::Real, Direction::Forward);
    pub const REAL_BACKWARD: Component = Component::new(Provenance::Real, Direction::Backward);
}

impl fmt::Display for Component {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (src, tgt) = match self.direction {
            Direction::Forward => ("L1", "L2"),
            Direction::Backward => ("L2", "L1"),
        };
        match self.provenance {
            Provenance::Real => write!(f, "{src}>{tgt}"),
            Provenance::SyntheticSource => write!(f, "{src}*>{tgt}"),
            Provenance::SyntheticTarget => write!(f, "{src}>{tgt}*"),
        }
    }
}

impl FromStr for Component {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (src, tgt) = s.split_once('>').ok_or_else(|| Error::UnknownComponent(s.to_string()))?;
        let (src_syn, src) = src.strip_suffix('*').map_or((false, src), |x| (true, x));
        let (tgt_syn, tgt) = tgt.strip_suffix('*').map_or((false, tgt), |x| (true, x));
        let direction = match (src, tgt) {
            ("L1", "L2") => Direction::Forward,
            ("L2", "L1") => Direction::Backward,
            _ => return Err(Error::UnknownComponent(s.to_string())),
        };
        let provenance = match (src_syn, tgt_syn) {
            (false, false) => Provenance::Real,
            (true, false) => Provenance::SyntheticSource,
            (false, true) => Provenance::SyntheticTarget,
            (true, true) => return Err(Error::UnknownComponent(s.to_string())),
        };
        Ok(Component { provenance, direction })
    }
}

/// Which components make up a training set, in file order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DataRecipe {
    pub name: Option<String>,
    pub components: Vec<Component>,
    /// Whether sources carry a target-language tag.
    pub tagged: bool,
}

pub const PRESETS: &[(&str, &str)] = &[
    ("U-1", "L1>L2"),
    ("U-2", "L1>L2 L1*>L2"),
    ("U-3", "L1>L2 L1>L2*"),
    ("U-4", "L1>L2 L1*>L2 L1>L2*"),
    ("B-1", "L1<>L2"),
    ("B-2", "L1<>L2 L1*<>L2"),
    ("B-3", "L1<>L2 L2*<>L1"),
    ("B-4", "L1<>L2 L1*<>L2 L2*<>L1"),
    ("B-5", "L1<>L2 L1*>L2 L2*>L1"),
    ("B-6", "L1<>L2 L1*>L2 L2*>L1"),
];

fn expand(item: &str) -> Result<Vec<Component>> {
    let sym = match item {
        "L1<>L2" | "L2<>L1" => ["L1>L2", "L2>L1"],
        "L1*<>L2" => ["L1*>L2", "L2>L1*"],
        "L2*<>L1" => ["L2*>L1", "L1>L2*"],
        _ => return Ok(vec![item.parse()?]),
    };
    sym.iter().map(|s| s.parse()).collect()
}

impl DataRecipe {
    /// Builds a recipe from component strings; `L1<>L2` expands to both
    /// real directions and `L1*<>L2` to `L1*>L2` plus `L2>L1*`. Tagging is on
    /// when targets of both languages occur.
    pub fn from_components<S: AsRef<str>>(items: &[S]) -> Result<Self> {
        let mut components = Vec::new();
        for item in items {
            components.extend(expand(item.as_ref().trim())?);
        }
        let both = Direction::BOTH
            .iter()
            .all(|d| components.iter().any(|c| c.direction == *d));
        let recipe = DataRecipe {
            name: None,
            components,
            tagged: both,
        };
        recipe.validate()?;
        Ok(recipe)
    }

    pub fn preset(name: &str) -> Result<Self> {
        let (_, spec) = PRESETS
            .iter()
            .find(|(n, _)| *n == name)
            .ok_or_else(|| Error::UnknownComponent(name.to_string()))?;
        let items: Vec<&str> = spec.split(' ').collect();
        let mut r = DataRecipe::from_components(&items)?;
        r.name = Some(name.to_string());
        r.tagged = name.starts_with('B');
        Ok(r)
    }

    /// A preset name or a whitespace/`+`-separated component list.
    pub fn parse(s: &str) -> Result<Self> {
        if PRESETS.iter().any(|(n, _)| *n == s.trim()) {
            return DataRecipe::preset(s.trim());
        }
        let items: Vec<&str> = s.split(|c: char| c == '+' || c.is_whitespace()).filter(|x| !x.is_empty()).collect();
        DataRecipe::from_components(&items)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.components.iter().any(|c| c.provenance == Provenance::Real) {
            return Err(Error::Config("a recipe needs at least one real component".into()));
        }
        for (i, c) in self.components.iter().enumerate() {
            if self.components[..i].contains(c) {
                return Err(Error::Config(format!("recipe lists {c} twice")));
            }
        }
        Ok(())
    }

    pub fn has_synthetic_target(&self) -> bool {
        self.components.iter().any(|c| c.provenance == Provenance::SyntheticTarget)
    }

    pub fn label(&self) -> String {
        self.name.clone().unwrap_or_else(|| {
            self.components.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(" + ")
        })
    }
}

/// Synthetic pools produced by back-translation. `src_l1` holds
/// `(L1*, real L2)` pairs; `src_l2` holds `(L2*, real L1)` pairs.
#[derive(Clone, Debug, Default)]
pub struct SyntheticPools {
    pub src_l1: Vec<TaggedPair>,
    pub src_l2: Vec<TaggedPair>,
}

/// Concatenates the recipe's components, tagging sources when the recipe is
/// bi-directional. `real` holds untagged L1 → L2 pairs.
pub fn build_recipe(
    recipe: &DataRecipe,
    real: &ParallelCorpus,
    pools: &SyntheticPools,
    format: &TagFormat,
) -> Result<ParallelCorpus> {
    recipe.validate()?;
    let mut pairs = Vec::new();
    for &c in &recipe.components {
        let block: Vec<TaggedPair> = match (c.provenance, c.direction) {
            (Provenance::Real, Direction::Forward) => real.pairs.clone(),
            (Provenance::Real, Direction::Backward) => real.pairs.iter().map(|p| p.swapped(format)).collect(),
            (Provenance::SyntheticSource, Direction::Forward) => pools.src_l1.clone(),
            (Provenance::SyntheticSource, Direction::Backward) => pools.src_l2.clone(),
            (Provenance::SyntheticTarget, Direction::Forward) => pools.src_l2.iter().map(|p| p.swapped(format)).collect(),
            (Provenance::SyntheticTarget, Direction::Backward) => pools.src_l1.iter().map(|p| p.swapped(format)).collect(),
        };
        if block.is_empty() {
            return Err(Error::MissingComponent(c.to_string()));
        }
        debug_assert!(block.iter().all(|p| p.component() == c));
        pairs.extend(block);
    }
    real.with_pairs(pairs).retag(recipe.tagged, format)
}

/// Repeats each component's pairs `factors[c]` times (default 1). Components
/// keep their first-appearance order.
pub fn oversample(corpus: &ParallelCorpus, factors: &BTreeMap<Component, usize>) -> Result<ParallelCorpus> {
    if let Some((c, _)) = factors.iter().find(|(_, &f)| f == 0) {
        return Err(Error::Config(format!("oversampling factor for {c} must be at least 1")));
    }
    let mut order: Vec<Component> = Vec::new();
    for p in &corpus.pairs {
        if !order.contains(&p.component()) {
            order.push(p.component());
        }
    }
    let mut pairs = Vec::new();
    for c in order {
        let block: Vec<&TaggedPair> = corpus.pairs.iter().filter(|p| p.component() == c).collect();
        for _ in 0..factors.get(&c).copied().unwrap_or(1) {
            pairs.extend(block.iter().map(|p| (*p).clone()));
        }
    }
    Ok(corpus.with_pairs(pairs))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(text: &str, lang: &str) -> Sentence {
        Sentence::from_line(text, Lang::from(lang))
    }

    fn real(n: usize) -> ParallelCorpus {
        ParallelCorpus::from_real(
            Lang::from("en"),
            Lang::from("tl"),
            (0..n).map(|i| (s(&format!("e{i}"), "en"), s(&format!("t{i}"), "tl"))).collect(),
        )
    }

    fn pools(n1: usize, n2: usize) -> SyntheticPools {
        let mk = |src: &str, tgt: &str, n: usize, d: Direction| {
            (0..n)
                .map(|i| TaggedPair {
                    source: s(&format!("{src}*{i}"), src),
                    target: s(&format!("{tgt}{i}"), tgt),
                    provenance: Provenance::SyntheticSource,
                    direction: d,
                })
                .collect()
        };
        SyntheticPools {
            src_l1: mk("en", "tl", n1, Direction::Forward),
            src_l2: mk("tl", "en", n2, Direction::Backward),
        }
    }

    #[test]
    fn tags() {
        let f = TagFormat::default();
        assert_eq!(tag_source(&s("hello", "x"), &Lang::from("en"), &f).unwrap().tokens, ["<2en>", "hello"]);
        assert_eq!(tag_source(&s("", "x"), &Lang::from("tl"), &f).unwrap().tokens, ["<2tl>"]);
        assert!(matches!(tag_source(&s("<2en> a", "x"), &Lang::from("en"), &f), Err(Error::AlreadyTagged(_))));
        assert_eq!(f.parse("<2tl>"), Some(Lang::from("tl")));
        assert!(!f.is_tag("<2>"));
        let custom = TagFormat::new("__{lang}__").unwrap();
        assert_eq!(custom.render(&Lang::from("de")), "__de__");
        assert!(TagFormat::new("nolang").is_err());
    }

    #[test]
    fn swap_and_concat_doubles_and_balances() {
        let f = TagFormat::default();
        let out = swap_and_concat(&real(1), &f).unwrap();
        assert_eq!(out.len(), 2);
        assert_eq!(out.pairs[0].source.tokens, ["<2tl>", "e0"]);
        assert_eq!(out.pairs[1].source.tokens, ["<2en>", "t0"]);
        assert_eq!(out.pairs[1].target.tokens, ["e0"]);
        let out = swap_and_concat(&real(7), &f).unwrap();
        assert_eq!(out.direction(Direction::Forward).len(), 7);
        assert_eq!(out.direction(Direction::Backward).len(), 7);
        assert!(swap_and_concat(&real(0), &f).unwrap().is_empty());
    }

    #[test]
    fn double_swap_is_identity() {
        let f = TagFormat::default();
        for p in &real(3).pairs {
            assert_eq!(&p.swapped(&f).swapped(&f), p);
        }
    }

    #[test]
    fn component_strings() {
        for c in ["L1>L2", "L2>L1", "L1*>L2", "L2*>L1", "L1>L2*", "L2>L1*"] {
            assert_eq!(c.parse::<Component>().unwrap().to_string(), c);
        }
        assert!("L1*>L2*".parse::<Component>().is_err());
        assert!("L3>L1".parse::<Component>().is_err());
    }

    #[test]
    fn presets() {
        let b5 = DataRecipe::preset("B-5").unwrap();
        assert_eq!(b5.label(), "B-5");
        assert!(b5.tagged);
        let names: Vec<String> = b5.components.iter().map(|c| c.to_string()).collect();
        assert_eq!(names, ["L1>L2", "L2>L1", "L1*>L2", "L2*>L1"]);
        let u2 = DataRecipe::preset("U-2").unwrap();
        assert!(!u2.tagged);
        assert_eq!(u2.components.len(), 2);
        let b4 = DataRecipe::preset("B-4").unwrap();
        assert_eq!(b4.components.len(), 6);
        assert!(DataRecipe::parse("L1*>L2").is_err());
        assert!(DataRecipe::parse("L1>L2 L1>L2").is_err());
        assert_eq!(DataRecipe::parse("L1<>L2 + L1*>L2").unwrap().components.len(), 3);
        assert!(DataRecipe::parse("B-9").is_err());
    }

    #[test]
    fn build_b5_sizes_and_placement() {
        let f = TagFormat::default();
        let out = build_recipe(&DataRecipe::preset("B-5").unwrap(), &real(4), &pools(3, 2), &f).unwrap();
        assert_eq!(out.len(), 2 * 4 + 3 + 2);
        assert_eq!(out.count("L1*>L2".parse().unwrap()), 3);
        assert_eq!(out.count("L2*>L1".parse().unwrap()), 2);
        assert!(out.pairs.iter().all(|p| p.provenance != Provenance::SyntheticTarget));
        for p in &out.pairs {
            let tag = f.parse(&p.source.tokens[0]).unwrap();
            assert_eq!(&tag, out.target_lang(p.direction));
        }
    }

    #[test]
    fn build_b1_equals_swap_and_concat() {
        let f = TagFormat::default();
        let b1 = build_recipe(&DataRecipe::preset("B-1").unwrap(), &real(5), &SyntheticPools::default(), &f).unwrap();
        assert_eq!(b1, swap_and_concat(&real(5), &f).unwrap());
    }

    #[test]
    fn build_u3_places_synthetic_on_target() {
        let f = TagFormat::default();
        let out = build_recipe(&DataRecipe::preset("U-3").unwrap(), &real(2), &pools(0, 3), &f).unwrap();
        assert_eq!(out.len(), 5);
        let syn: Vec<_> = out.pairs.iter().filter(|p| p.provenance == Provenance::SyntheticTarget).collect();
        assert_eq!(syn.len(), 3);
        assert_eq!(syn[0].target.tokens, ["tl*0"]);
        assert_eq!(syn[0].source.tokens, ["en0"]);
        assert_eq!(syn[0].direction, Direction::Forward);
    }

    #[test]
    fn missing_pool_is_named() {
        let f = TagFormat::default();
        let err = build_recipe(&DataRecipe::preset("B-5").unwrap(), &real(2), &pools(3, 0), &f).unwrap_err();
        assert!(err.to_string().contains("L2*>L1"), "{err}");
    }

    #[test]
    fn oversampling() {
        let f = TagFormat::default();
        let c = build_recipe(&DataRecipe::preset("B-5").unwrap(), &real(4), &pools(3, 2), &f).unwrap();
        assert_eq!(oversample(&c, &BTreeMap::new()).unwrap(), c);
        let mut factors = BTreeMap::new();
        factors.insert(Component::REAL_FORWARD, 2);
        factors.insert("L2*>L1".parse().unwrap(), 3);
        let o = oversample(&c, &factors).unwrap();
        assert_eq!(o.count(Component::REAL_FORWARD), 8);
        assert_eq!(o.len(), 2 * 4 + 4 + 3 + 3 * 2);
        factors.insert(Component::REAL_BACKWARD, 0);
        assert!(oversample(&c, &factors).is_err());
    }

    #[test]
    fn tsv_round_trip() {
        let f = TagFormat::default();
        let c = build_recipe(&DataRecipe::preset("B-5").unwrap(), &real(2), &pools(1, 1), &f).unwrap();
        let tsv = c.to_tsv();
        assert!(tsv.lines().next().unwrap().ends_with("\ten>tl\treal"));
        assert_eq!(ParallelCorpus::from_tsv(&tsv, c.l1.clone(), c.l2.clone()).unwrap(), c);
    }
}

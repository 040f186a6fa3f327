//! Experiment configuration and the end-to-end runner that writes every
//! artifact of a cycle to an output directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::artifact::{hash_bytes, write_atomic, write_atomic_str};
use crate::corpus::{Direction, ParallelCorpus};
use crate::cycle::{direction_name, median, prepare, run_cycle, sweep_csv, sweep_k, CycleData, CyclePlan, CycleResult, Prepared, SweepRow};
use crate::error::{Error, Result};
use crate::eval::BleuScore;
use crate::lm::write_selection;
use crate::nmt::{write_checkpoint, Checkpoint};
use crate::text::{self, apply_truecase, filter_mono, filter_parallel, learn_truecaser, normalize, tokenize, Lang, Sentence};
use crate::toy::{self, ToyConfig};

/// Prefix of environment variables that override configured paths, e.g.
/// `BITRANS_OUT_DIR` or `BITRANS_DATA_MONO_L1`.
pub const ENV_PREFIX: &str = "BITRANS_";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessConfig {
    /// Parallel pairs with a side longer than this are dropped.
    pub max_len: usize,
    /// Monolingual sentences must be strictly longer than this.
    pub mono_min_exclusive: usize,
    /// Learn a truecaser per language on its training side.
    pub truecase: bool,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            max_len: text::DEFAULT_MAX_LEN,
            mono_min_exclusive: text::DEFAULT_MONO_MIN_EXCLUSIVE,
            truecase: true,
        }
    }
}

/// Raw text files, one sentence per line, aligned by line for parallel
/// sides.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataPaths {
    pub l1: Lang,
    pub l2: Lang,
    pub train_l1: PathBuf,
    pub train_l2: PathBuf,
    pub dev_l1: PathBuf,
    pub dev_l2: PathBuf,
    pub test_l1: PathBuf,
    pub test_l2: PathBuf,
    pub mono_l1: PathBuf,
    pub mono_l2: PathBuf,
    /// In-domain selection seeds; the training sides by default.
    #[serde(default)]
    pub seed_l1: Option<PathBuf>,
    #[serde(default)]
    pub seed_l2: Option<PathBuf>,
}

impl DataPaths {
    fn fields_mut(&mut self) -> Vec<(&'static str, &mut PathBuf)> {
        let mut v: Vec<(&'static str, &mut PathBuf)> = vec![
            ("TRAIN_L1", &mut self.train_l1),
            ("TRAIN_L2", &mut self.train_l2),
            ("DEV_L1", &mut self.dev_l1),
            ("DEV_L2", &mut self.dev_l2),
            ("TEST_L1", &mut self.test_l1),
            ("TEST_L2", &mut self.test_l2),
            ("MONO_L1", &mut self.mono_l1),
            ("MONO_L2", &mut self.mono_l2),
        ];
        if let Some(p) = self.seed_l1.as_mut() {
            v.push(("SEED_L1", p));
        }
        if let Some(p) = self.seed_l2.as_mut() {
            v.push(("SEED_L2", p));
        }
        v
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub out_dir: PathBuf,
    /// Global seed; cycle `i` uses `seed + i`.
    pub seed: u64,
    /// Number of independently seeded cycles.
    pub seeds: usize,
    /// Values of `k` for the monolingual-size sweep; empty skips it.
    pub sweep_k: Vec<usize>,
    /// Run the plan's comparison systems for the first this many seeds
    /// only; all seeds when unset.
    pub comparison_seeds: Option<usize>,
    pub data: Option<DataPaths>,
    pub toy: Option<ToyConfig>,
    pub preprocess: PreprocessConfig,
    pub plan: CyclePlan,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            name: "experiment".into(),
            out_dir: PathBuf::from("runs/experiment"),
            seed: 1,
            seeds: 1,
            sweep_k: Vec::new(),
            comparison_seeds: None,
            data: None,
            toy: None,
            preprocess: PreprocessConfig::default(),
            plan: CyclePlan::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads a config file, resolves relative paths against its directory,
    /// applies environment overrides and validates.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.resolve_paths(base, |k| std::env::var(k).ok());
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Makes paths absolute relative to `base`; an environment variable
    /// `BITRANS_<KEY>` replaces the configured value first.
    pub fn resolve_paths(&mut self, base: &Path, env: impl Fn(&str) -> Option<String>) {
        let fix = |key: &str, p: &mut PathBuf| {
            if let Some(v) = env(&format!("{ENV_PREFIX}{key}")) {
                *p = PathBuf::from(v);
            }
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix("OUT_DIR", &mut self.out_dir);
        if let Some(d) = self.data.as_mut() {
            for (key, p) in d.fields_mut() {
                fix(&format!("DATA_{key}"), p);
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        match (&self.data, &self.toy) {
            (Some(_), Some(_)) => return Err(Error::Config("set either [data] or [toy], not both".into())),
            (None, None) => return Err(Error::Config("no corpora: add a [data] or [toy] section".into())),
            (Some(d), None) => {
                let mut d = d.clone();
                for (key, p) in d.fields_mut() {
                    if !p.is_file() {
                        return Err(Error::Config(format!("data.{} = {} does not exist", key.to_lowercase(), p.display())));
                    }
                }
            }
            (None, Some(t)) => t.validate()?,
        }
        if self.seeds == 0 {
            return Err(Error::Config("seeds must be at least 1".into()));
        }
        if self.sweep_k.contains(&0) {
            return Err(Error::Config("sweep_k values must be at least 1".into()));
        }
        self.plan.validate()
    }

    pub fn seed_list(&self) -> Vec<u64> {
        (0..self.seeds as u64).map(|i| self.seed.wrapping_add(i)).collect()
    }

    /// Largest `k` any stage will ask for.
    pub fn max_k(&self) -> usize {
        self.sweep_k.iter().copied().chain([self.plan.k]).max().unwrap_or(1)
    }
}

/// Normalizes and tokenizes raw lines.
pub fn tokenize_lines(lines: &[String], lang: &Lang) -> Vec<Sentence> {
    lines.iter().map(|l| tokenize(&normalize(l), lang.clone())).collect()
}

fn read_raw(path: &Path, lang: &Lang) -> Result<Vec<Sentence>> {
    Ok(tokenize_lines(&text::io::read_lines(path)?, lang))
}

fn read_pairs(a: &Path, b: &Path, l1: &Lang, l2: &Lang) -> Result<Vec<(Sentence, Sentence)>> {
    let (x, y) = (read_raw(a, l1)?, read_raw(b, l2)?);
    if x.len() != y.len() {
        return Err(Error::Format {
            what: b.display().to_string(),
            line: y.len().min(x.len()) + 1,
            msg: format!("{} lines but {} has {}", y.len(), a.display(), x.len()),
        });
    }
    Ok(x.into_iter().zip(y).collect())
}

/// Loads and preprocesses the corpora of `cfg`.
pub fn load_data(cfg: &ExperimentConfig) -> Result<CycleData> {
    let pp = &cfg.preprocess;
    if let Some(t) = &cfg.toy {
        let d = toy::generate(t)?;
        let pairs = |c: ParallelCorpus| c.pairs.into_iter().map(|p| (p.source, p.target)).collect::<Vec<_>>();
        let real = ParallelCorpus::from_real(t.l1.clone(), t.l2.clone(), filter_parallel(pairs(d.train), pp.max_len));
        return Ok(CycleData {
            real,
            dev: d.dev,
            test: d.test,
            mono_l1: filter_mono(d.mono_l1, pp.mono_min_exclusive),
            mono_l2: filter_mono(d.mono_l2, pp.mono_min_exclusive),
            seed_l1: None,
            seed_l2: None,
        });
    }
    let d = cfg.data.as_ref().ok_or_else(|| Error::Config("no [data] section".into()))?;
    let (l1, l2) = (&d.l1, &d.l2);
    let mut train = read_pairs(&d.train_l1, &d.train_l2, l1, l2)?;
    let mut dev = read_pairs(&d.dev_l1, &d.dev_l2, l1, l2)?;
    let mut test = read_pairs(&d.test_l1, &d.test_l2, l1, l2)?;
    let mut mono_l1 = read_raw(&d.mono_l1, l1)?;
    let mut mono_l2 = read_raw(&d.mono_l2, l2)?;
    let mut seed_l1 = d.seed_l1.as_deref().map(|p| read_raw(p, l1)).transpose()?;
    let mut seed_l2 = d.seed_l2.as_deref().map(|p| read_raw(p, l2)).transpose()?;
    if pp.truecase {
        let side = |v: &[(Sentence, Sentence)], first: bool| -> Vec<Sentence> {
            v.iter().map(|(a, b)| if first { a.clone() } else { b.clone() }).collect()
        };
        let tc1 = learn_truecaser(&side(&train, true))?;
        let tc2 = learn_truecaser(&side(&train, false))?;
        for v in [&mut train, &mut dev, &mut test] {
            for (a, b) in v.iter_mut() {
                *a = apply_truecase(&tc1, a);
                *b = apply_truecase(&tc2, b);
            }
        }
        for (tc, group) in [(&tc1, [&mut mono_l1].into_iter().chain(seed_l1.as_mut())), (&tc2, [&mut mono_l2].into_iter().chain(seed_l2.as_mut()))] {
            for v in group {
                for s in v.iter_mut() {
                    *s = apply_truecase(tc, s);
                }
            }
        }
    }
    let nonempty = |v: Vec<(Sentence, Sentence)>| -> Vec<(Sentence, Sentence)> { v.into_iter().filter(|(a, b)| !a.is_empty() && !b.is_empty()).collect() };
    Ok(CycleData {
        real: ParallelCorpus::from_real(l1.clone(), l2.clone(), filter_parallel(train, pp.max_len)),
        dev: ParallelCorpus::from_real(l1.clone(), l2.clone(), filter_parallel(dev, pp.max_len)),
        test: ParallelCorpus::from_real(l1.clone(), l2.clone(), nonempty(test)),
        mono_l1: filter_mono(mono_l1, pp.mono_min_exclusive),
        mono_l2: filter_mono(mono_l2, pp.mono_min_exclusive),
        seed_l1,
        seed_l2,
    })
}

/// Tracks written files so the manifest lists every artifact with its hash.
#[derive(Debug)]
pub struct ArtifactWriter {
    root: PathBuf,
    files: BTreeMap<String, String>,
}

impl ArtifactWriter {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        ArtifactWriter {
            root: root.into(),
            files: BTreeMap::new(),
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn write(&mut self, rel: &str, bytes: &[u8]) -> Result<()> {
        write_atomic(&self.root.join(rel), bytes)?;
        let h = hash_bytes(bytes);
        log::debug!("wrote {rel} sha256={h}");
        self.files.insert(rel.to_string(), h);
        Ok(())
    }

    pub fn write_str(&mut self, rel: &str, text: &str) -> Result<()> {
        self.write(rel, text.as_bytes())
    }

    pub fn write_checkpoint(&mut self, rel: &str, ckpt: &Checkpoint) -> Result<()> {
        let path = self.root.join(rel);
        write_checkpoint(&path, ckpt)?;
        let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
        self.files.insert(rel.to_string(), hash_bytes(&bytes));
        Ok(())
    }

    pub fn files(&self) -> &BTreeMap<String, String> {
        &self.files
    }

    /// Writes `manifest.tsv` (path, sha256) and returns its text.
    pub fn finish(mut self) -> Result<String> {
        let mut out = String::from("path\tsha256\n");
        for (p, h) in &self.files {
            out += &format!("{p}\t{h}\n");
            log::info!("artifact {p} sha256={h}");
        }
        write_atomic_str(&self.root.join("manifest.tsv"), &out)?;
        self.files.clear();
        Ok(out)
    }
}

/// Everything an experiment produced, plus the text of its tables.
#[derive(Debug)]
pub struct ExperimentReport {
    pub cycles: Vec<CycleResult>,
    pub sweep: Vec<SweepRow>,
    pub scores_tsv: String,
    pub cost_tsv: String,
    pub sweep_csv: Option<String>,
    pub manifest: String,
}

impl ExperimentReport {
    /// Median BLEU over seeds of `system` in `direction`.
    pub fn median_bleu(&self, system: &str, direction: Direction) -> Option<f64> {
        let xs: Vec<f64> = self
            .cycles
            .iter()
            .filter_map(|c| c.systems().find(|s| s.system == system)?.score(direction))
            .collect();
        (!xs.is_empty()).then(|| median(&xs))
    }
}

fn slug(s: &str) -> String {
    s.chars()
        .map(|c| match c {
            '*' => 's',
            c if c.is_ascii_alphanumeric() || c == '-' => c,
            _ => '_',
        })
        .collect()
}

/// Score table: one row per seed, system and direction, then the medians
/// over seeds.
pub fn scores_tsv(prep: &Prepared, cycles: &[CycleResult]) -> String {
    let mut out = format!("seed\tsystem\tround\tdirection\tcheckpoints\t{}\n", BleuScore::TSV_HEADER);
    let mut by_key: Vec<(String, usize, String, Vec<f64>)> = Vec::new();
    for c in cycles {
        for s in c.systems() {
            for (d, b) in &s.bleu {
                let dir = direction_name(*d, &prep.l1, &prep.l2);
                out += &format!("{}\t{}\t{}\t{dir}\t{}\t{}\n", c.seed, s.system, s.round, s.checkpoints(), b.tsv_row());
                match by_key.iter_mut().find(|(sys, _, d2, _)| *sys == s.system && *d2 == dir) {
                    Some(e) => e.3.push(b.bleu),
                    None => by_key.push((s.system.clone(), s.round, dir, vec![b.bleu])),
                }
            }
        }
    }
    for (sys, round, dir, xs) in by_key {
        out += &format!("median\t{sys}\t{round}\t{dir}\t-\t{:.4}\t-\t-\t-\t-\t-\t-\t-\n", median(&xs));
    }
    out
}

fn write_prepared(w: &mut ArtifactWriter, prep: &Prepared) -> Result<()> {
    let mut bpe = Vec::new();
    prep.bpe.write_to(&mut bpe).map_err(|e| Error::io(w.root().join("prepared/bpe.codes"), e))?;
    w.write("prepared/bpe.codes", &bpe)?;
    w.write_str("prepared/vocab.json", &serde_json::to_string(&*prep.vocab).expect("vocab serializes"))?;
    w.write_str(&format!("prepared/selected.{}.tsv", prep.l1), &write_selection(&prep.selected_l1))?;
    w.write_str(&format!("prepared/selected.{}.tsv", prep.l2), &write_selection(&prep.selected_l2))?;
    w.write_str("prepared/real.tsv", &prep.real.to_tsv())?;
    w.write_str("prepared/dev.tsv", &prep.dev.to_tsv())
}

fn write_cycle(w: &mut ArtifactWriter, c: &CycleResult) -> Result<()> {
    let dir = format!("seed-{}", c.seed);
    for (r, pools) in c.pools.iter().enumerate().skip(1) {
        let l1 = c.rounds[0].corpus.l1.clone();
        let l2 = c.rounds[0].corpus.l2.clone();
        let mut corpus = ParallelCorpus::new(l1, l2);
        corpus.pairs = pools.src_l1.iter().chain(&pools.src_l2).cloned().collect();
        w.write_str(&format!("{dir}/round-{r}/synthetic.tsv"), &corpus.to_tsv())?;
    }
    for s in c.systems() {
        let sys = format!("{dir}/{}", slug(&s.system));
        w.write_checkpoint(&format!("{sys}/best.ckpt"), &s.outcome.best)?;
        let avg = Checkpoint {
            params: s.decoder.clone(),
            update_count: s.outcome.best.update_count,
            dev_perplexity: f64::NAN,
            data_hash: s.outcome.best.data_hash.clone(),
        };
        w.write_checkpoint(&format!("{sys}/decoder.ckpt"), &avg)?;
        let hist: String = std::iter::once("update\tdev_perplexity\n".to_string())
            .chain(s.outcome.history.iter().map(|h| format!("{}\t{:.6}\n", h.update_count, h.dev_perplexity)))
            .collect();
        w.write_str(&format!("{sys}/history.tsv"), &hist)?;
    }
    let mut cost = String::new();
    for (i, line) in c.cost.to_tsv().lines().enumerate() {
        cost += &if i == 0 { format!("seed\t{line}\n") } else { format!("{}\t{line}\n", c.seed) };
    }
    w.write_str(&format!("{dir}/cost.tsv"), &cost)
}

/// Runs every seed's cycle and the optional sweep, writing all artifacts
/// under `cfg.out_dir`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let data = load_data(cfg)?;
    let prep = prepare(&cfg.plan, &data, cfg.max_k())?;
    let mut w = ArtifactWriter::new(&cfg.out_dir);
    w.write_str("config.toml", &cfg.to_toml())?;
    write_prepared(&mut w, &prep)?;
    let mut cycles = Vec::new();
    for (i, seed) in cfg.seed_list().into_iter().enumerate() {
        log::info!("cycle seed {seed}");
        let mut plan = cfg.plan.clone();
        if cfg.comparison_seeds.is_some_and(|n| i >= n) {
            plan.compare_scratch = false;
            plan.compare_unidirectional = false;
        }
        let c = run_cycle(&plan, &prep, seed)?;
        write_cycle(&mut w, &c)?;
        cycles.push(c);
    }
    let scores = scores_tsv(&prep, &cycles);
    w.write_str("scores.tsv", &scores)?;
    let mut cost_tsv = String::new();
    for (i, c) in cycles.iter().enumerate() {
        for (j, line) in c.cost.to_tsv().lines().enumerate() {
            if j == 0 && i == 0 {
                cost_tsv += &format!("seed\t{line}\n");
            } else if j > 0 {
                cost_tsv += &format!("{}\t{line}\n", c.seed);
            }
        }
    }
    w.write_str("cost.tsv", &cost_tsv)?;
    let (sweep, csv) = if cfg.sweep_k.is_empty() {
        (Vec::new(), None)
    } else {
        let rows = sweep_k(&cfg.plan, &prep, &cycles, &cfg.sweep_k)?;
        let csv = sweep_csv(&rows);
        w.write_str("sweep.csv", &csv)?;
        (rows, Some(csv))
    };
    let manifest = w.finish()?;
    Ok(ExperimentReport {
        cycles,
        sweep,
        scores_tsv: scores,
        cost_tsv,
        sweep_csv: csv,
        manifest,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn env_overrides_paths_only() {
        let mut cfg = ExperimentConfig::from_toml(
            r#"
            out_dir = "out"
            [data]
            l1 = "en"
            l2 = "tl"
            train_l1 = "a.en"
            train_l2 = "a.tl"
            dev_l1 = "d.en"
            dev_l2 = "d.tl"
            test_l1 = "t.en"
            test_l2 = "t.tl"
            mono_l1 = "m.en"
            mono_l2 = "m.tl"
            "#,
        )
        .unwrap();
        let env = |k: &str| (k == "BITRANS_DATA_MONO_L2").then(|| "/elsewhere/m.tl".to_string());
        cfg.resolve_paths(Path::new("/cfg"), env);
        let d = cfg.data.as_ref().unwrap();
        assert_eq!(cfg.out_dir, PathBuf::from("/cfg/out"));
        assert_eq!(d.train_l1, PathBuf::from("/cfg/a.en"));
        assert_eq!(d.mono_l2, PathBuf::from("/elsewhere/m.tl"));
        assert!(matches!(cfg.validate(), Err(Error::Config(m)) if m.contains("train_l1")));
    }

    #[test]
    fn rejects_unknown_keys_and_missing_data() {
        assert!(ExperimentConfig::from_toml("bogus = 1").is_err());
        assert!(ExperimentConfig::from_toml("[plan]\nrounds = 1\nfoo = 2").is_err());
        let cfg = ExperimentConfig::default();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn toml_round_trip() {
        let cfg = ExperimentConfig {
            toy: Some(ToyConfig::default()),
            sweep_k: vec![1, 2],
            ..ExperimentConfig::default()
        };
        let back = ExperimentConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(cfg.max_k(), 3);
        assert_eq!(ExperimentConfig { seed: 7, seeds: 3, ..cfg }.seed_list(), [7, 8, 9]);
    }
}

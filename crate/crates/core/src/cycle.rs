//! The improvement cycle: train a bi-directional baseline, back-translate
//! selected monolingual data with it, fine-tune on the augmented recipe, and
//! repeat with re-decoded synthetic data.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::corpus::{build_recipe, oversample, Component, DataRecipe, Direction, ParallelCorpus, Provenance, SyntheticPools, TagFormat, TaggedPair};
use crate::error::{Error, Result};
use crate::eval::{bleu, BleuScore};
use crate::lm::{select, train_lm, train_lm_restricted, LmConfig, ScoredSentence, SelectionConfig};
use crate::nmt::{
    average_checkpoints, continue_training, init_model, train, translate_all, Checkpoint, DecodeConfig, ModelConfig, ModelParams, TrainConfig, TrainOutcome, Vocab,
};
use crate::subword::{learn_bpe, merge_bpe, BpeModel, JOINER};
use crate::text::{Lang, Sentence};

/// Word-level inputs of a cycle. `seed_l1`/`seed_l2` are the in-domain
/// samples for data selection; without them the real training sides are
/// used.
#[derive(Clone, Debug)]
pub struct CycleData {
    pub real: ParallelCorpus,
    pub dev: ParallelCorpus,
    pub test: ParallelCorpus,
    pub mono_l1: Vec<Sentence>,
    pub mono_l2: Vec<Sentence>,
    pub seed_l1: Option<Vec<Sentence>>,
    pub seed_l2: Option<Vec<Sentence>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CyclePlan {
    pub base_recipe: String,
    pub augment_recipe: String,
    /// Fine-tune / re-decode rounds after the baseline.
    pub rounds: usize,
    /// Selected monolingual sentences per language, as a multiple of the
    /// real parallel size.
    pub k: usize,
    pub bpe_ops: usize,
    pub lm: LmConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    /// Settings for continued training; defaults to `train`.
    pub finetune: Option<TrainConfig>,
    pub decode: DecodeConfig,
    /// Checkpoints averaged into the decoding model; 1 decodes with the
    /// best checkpoint.
    pub average_top_k: usize,
    pub tag_format: TagFormat,
    /// Oversampling factors keyed by component string such as `"L1>L2"`.
    pub oversample: BTreeMap<String, usize>,
    /// Also train the augmented recipe from scratch on first-round data.
    pub compare_scratch: bool,
    /// Also train one uni-directional baseline per direction.
    pub compare_unidirectional: bool,
}

impl Default for CyclePlan {
    fn default() -> Self {
        CyclePlan {
            base_recipe: "B-1".into(),
            augment_recipe: "B-5".into(),
            rounds: 2,
            k: 3,
            bpe_ops: 50_000,
            lm: LmConfig::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            finetune: None,
            decode: DecodeConfig::default(),
            average_top_k: 4,
            tag_format: TagFormat::default(),
            oversample: BTreeMap::new(),
            compare_scratch: false,
            compare_unidirectional: false,
        }
    }
}

impl CyclePlan {
    pub fn recipes(&self) -> Result<(DataRecipe, DataRecipe)> {
        Ok((DataRecipe::parse(&self.base_recipe)?, DataRecipe::parse(&self.augment_recipe)?))
    }

    fn oversample_factors(&self) -> Result<BTreeMap<Component, usize>> {
        self.oversample.iter().map(|(c, &f)| Ok((c.parse()?, f))).collect()
    }

    pub fn finetune_config(&self) -> &TrainConfig {
        self.finetune.as_ref().unwrap_or(&self.train)
    }

    pub fn validate(&self) -> Result<()> {
        let (base, aug) = self.recipes()?;
        if base.components.iter().any(|c| c.provenance != Provenance::Real) {
            return Err(Error::Config("the base recipe cannot use synthetic data".into()));
        }
        if self.rounds > 0 && !(base.tagged && aug.tagged) {
            return Err(Error::Config("the cycle back-translates with one bi-directional model; use B-* recipes".into()));
        }
        if self.k == 0 {
            return Err(Error::Config("k must be at least 1".into()));
        }
        if self.average_top_k == 0 {
            return Err(Error::Config("average_top_k must be at least 1".into()));
        }
        self.oversample_factors()?;
        self.model.validate()?;
        self.train.validate()?;
        self.finetune_config().validate()?;
        self.decode.validate()
    }

    /// Display name of round `r`: the base recipe, then `aug*`, with the
    /// conventional `B-6*` for the second B-5 round.
    pub fn system_name(&self, round: usize) -> String {
        match round {
            0 => self.base_recipe.clone(),
            1 => format!("{}*", self.augment_recipe),
            2 if self.augment_recipe == "B-5" => "B-6*".into(),
            r => format!("{}* round {r}", self.augment_recipe),
        }
    }
}

pub fn direction_name(d: Direction, l1: &Lang, l2: &Lang) -> String {
    match d {
        Direction::Forward => format!("{l1}>{l2}"),
        Direction::Backward => format!("{l2}>{l1}"),
    }
}

/// Corpora after selection and subword segmentation, shared by all seeds.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub l1: Lang,
    pub l2: Lang,
    pub bpe: BpeModel,
    pub vocab: Arc<Vocab>,
    pub tag_format: TagFormat,
    /// Segmented, untagged L1 → L2 pairs.
    pub real: ParallelCorpus,
    /// Segmented dev pairs of both directions, tagged.
    pub dev: ParallelCorpus,
    pub test: ParallelCorpus,
    /// Ranked selections, enough for the largest requested `k`.
    pub selected_l1: Vec<ScoredSentence>,
    pub selected_l2: Vec<ScoredSentence>,
    pub mono_bpe_l1: Vec<Sentence>,
    pub mono_bpe_l2: Vec<Sentence>,
}

impl Prepared {
    pub fn n_real(&self) -> usize {
        self.real.len()
    }

    pub fn max_k(&self) -> usize {
        self.mono_bpe_l1.len().min(self.mono_bpe_l2.len()) / self.n_real().max(1)
    }

    /// Dev data for a model trained on `recipe`.
    fn dev_for(&self, recipe: &DataRecipe) -> Result<ParallelCorpus> {
        let dirs: Vec<Direction> = Direction::BOTH
            .into_iter()
            .filter(|d| recipe.components.iter().any(|c| c.direction == *d))
            .collect();
        let mut dev = self.dev.clone();
        dev.pairs.retain(|p| dirs.contains(&p.direction));
        dev.retag(recipe.tagged, &self.tag_format)
    }
}

/// Selects `max_k · n` sentences per language by cross-entropy difference,
/// learns joint BPE on the real training data and fixes the vocabulary over
/// everything the cycle will see.
pub fn prepare(plan: &CyclePlan, data: &CycleData, max_k: usize) -> Result<Prepared> {
    plan.validate()?;
    let (l1, l2) = (data.real.l1.clone(), data.real.l2.clone());
    if data.real.is_empty() {
        return Err(Error::Empty("real parallel data"));
    }
    let n = data.real.len();
    let needed = SelectionConfig { n_real: n, k: plan.k };
    let side = |d: Direction| -> Vec<Sentence> {
        data.real
            .pairs
            .iter()
            .map(|p| if d == Direction::Forward { p.source.clone() } else { p.target.clone() })
            .collect()
    };
    let pick = |seed: &Option<Vec<Sentence>>, real_side: Vec<Sentence>, pool: &[Sentence]| -> Result<Vec<ScoredSentence>> {
        needed.validate(pool.len())?;
        // Larger sweep values than the pool allows are reported later as infeasible.
        let count = (max_k.max(plan.k) * n).min(pool.len());
        let in_domain = seed.clone().unwrap_or(real_side);
        let lm_in = train_lm(&in_domain, &plan.lm)?;
        let lm_out = train_lm_restricted(pool, &plan.lm, &lm_in)?;
        select(pool, &lm_in, &lm_out, count)
    };
    let selected_l1 = pick(&data.seed_l1, side(Direction::Forward), &data.mono_l1).map_err(|e| e.in_stage("select L1", 0))?;
    let selected_l2 = pick(&data.seed_l2, side(Direction::Backward), &data.mono_l2).map_err(|e| e.in_stage("select L2", 0))?;

    let tag_format = plan.tag_format.clone();
    let corpora: Vec<Sentence> = data.real.pairs.iter().flat_map(|p| [p.source.clone(), p.target.clone()]).collect();
    let mut bpe = learn_bpe(&corpora, plan.bpe_ops).map_err(|e| e.in_stage("learn BPE", 0))?;
    let tags = [tag_format.render(&l1), tag_format.render(&l2)];
    bpe.protect(tags.iter().cloned())?;
    let seg = |c: &ParallelCorpus| -> ParallelCorpus {
        let mut out = c.clone();
        for p in &mut out.pairs {
            p.source = bpe.apply(&p.source);
            p.target = bpe.apply(&p.target);
        }
        out
    };
    let real = seg(&data.real);
    let dev = crate::corpus::swap_and_concat(&seg(&data.dev), &tag_format)?;
    let mono_bpe_l1 = bpe.apply_all(&selected_l1.iter().map(|s| s.sentence.clone()).collect::<Vec<_>>());
    let mono_bpe_l2 = bpe.apply_all(&selected_l2.iter().map(|s| s.sentence.clone()).collect::<Vec<_>>());
    let vocab = Vocab::build(
        real.pairs
            .iter()
            .chain(&dev.pairs)
            .flat_map(|p| [&p.source, &p.target])
            .chain(&mono_bpe_l1)
            .chain(&mono_bpe_l2),
        &tags,
    );
    log::info!(
        "prepared: {n} real pairs, {} + {} selected sentences, {} BPE merges, vocabulary {}",
        mono_bpe_l1.len(),
        mono_bpe_l2.len(),
        bpe.merges().len(),
        vocab.len()
    );
    Ok(Prepared {
        l1,
        l2,
        bpe,
        vocab: Arc::new(vocab),
        tag_format,
        real,
        dev,
        test: data.test.clone(),
        selected_l1,
        selected_l2,
        mono_bpe_l1,
        mono_bpe_l2,
    })
}

#[derive(Clone, Debug)]
pub struct BackTranslation {
    pub corpus: ParallelCorpus,
    /// Indices of monolingual sentences that could not be translated.
    pub skipped: Vec<usize>,
}

/// Translates `mono` (the target language of `direction`) into the source
/// language and pairs each output with its real original, which stays on
/// the target side. With `tags` the sources are tagged for a bi-directional
/// model.
pub fn back_translate(
    models: &[&ModelParams],
    mono: &[Sentence],
    direction: Direction,
    l1: &Lang,
    l2: &Lang,
    tags: Option<&TagFormat>,
    decode: &DecodeConfig,
) -> Result<BackTranslation> {
    let (synth_lang, mono_lang) = match direction {
        Direction::Forward => (l1, l2),
        Direction::Backward => (l2, l1),
    };
    let inputs: Vec<Sentence> = mono
        .iter()
        .map(|s| match tags {
            Some(f) => crate::corpus::tag_source(s, synth_lang, f),
            None => Ok(s.clone()),
        })
        .collect::<Result<_>>()?;
    let outputs = translate_all(models, &inputs, synth_lang, decode);
    let mut corpus = ParallelCorpus::new(l1.clone(), l2.clone());
    let mut skipped = Vec::new();
    for (i, (out, real)) in outputs.into_iter().zip(mono).enumerate() {
        // A stray tag in the output would later read as a second tag.
        let out = out.map(|mut s| {
            if let Some(f) = tags {
                s.tokens.retain(|t| !f.is_tag(t));
            }
            s
        });
        match out {
            Ok(s) if !s.is_empty() => corpus.pairs.push(TaggedPair {
                source: s,
                target: Sentence::new(real.tokens.clone(), mono_lang.clone()),
                provenance: Provenance::SyntheticSource,
                direction,
            }),
            Ok(_) => {
                log::warn!("back-translation of monolingual sentence {i} is empty; skipped");
                skipped.push(i);
            }
            Err(e) => {
                log::warn!("back-translation of monolingual sentence {i} failed: {e}; skipped");
                skipped.push(i);
            }
        }
    }
    Ok(BackTranslation { corpus, skipped })
}

/// Undoes segmentation; a dangling joiner is dropped rather than failing.
pub fn desegment(s: &Sentence) -> Sentence {
    merge_bpe(s).unwrap_or_else(|_| {
        let mut t = s.clone();
        if let Some(last) = t.tokens.last_mut() {
            if let Some(stripped) = last.strip_suffix(JOINER) {
                *last = stripped.to_string();
            }
        }
        t.tokens.retain(|x| !x.is_empty());
        merge_bpe(&t).unwrap_or(t)
    })
}

/// Translates the test split in one direction and scores it against the
/// word-level references.
pub fn evaluate_direction(
    models: &[&ModelParams],
    prep: &Prepared,
    direction: Direction,
    tagged: bool,
    decode: &DecodeConfig,
) -> Result<(BleuScore, Vec<Sentence>)> {
    let test = &prep.test;
    let target = test.target_lang(direction).clone();
    let (sources, refs): (Vec<Sentence>, Vec<String>) = test
        .pairs
        .iter()
        .map(|p| match direction {
            Direction::Forward => (p.source.clone(), p.target.text()),
            Direction::Backward => (p.target.clone(), p.source.text()),
        })
        .unzip();
    let inputs: Vec<Sentence> = sources
        .iter()
        .map(|s| {
            let seg = prep.bpe.apply(s);
            if tagged {
                crate::corpus::tag_source(&seg, &target, &prep.tag_format)
            } else {
                Ok(seg)
            }
        })
        .collect::<Result<_>>()?;
    let hyps: Vec<Sentence> = translate_all(models, &inputs, &target, decode)
        .into_iter()
        .map(|r| r.map(|s| desegment(&s)))
        .collect::<Result<_>>()?;
    let texts: Vec<String> = hyps.iter().map(Sentence::text).collect();
    Ok((bleu(&texts, &refs, true)?, hyps))
}

/// One trained system of a cycle.
#[derive(Clone, Debug)]
pub struct SystemRun {
    pub system: String,
    pub round: usize,
    pub recipe: DataRecipe,
    pub train_size: usize,
    pub outcome: TrainOutcome,
    pub decoder: ModelParams,
    pub bleu: Vec<(Direction, BleuScore)>,
    pub fine_tuned: bool,
    /// Training corpus, kept for artifact output.
    pub corpus: ParallelCorpus,
}

impl SystemRun {
    pub fn checkpoints(&self) -> usize {
        self.outcome.history.len()
    }

    pub fn score(&self, d: Direction) -> Option<f64> {
        self.bleu.iter().find(|(x, _)| *x == d).map(|(_, b)| b.bleu)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CostStage {
    pub setup: String,
    pub stage: String,
    pub round: usize,
    pub checkpoints: usize,
    pub updates: usize,
}

/// Training cost in checkpoints, grouped by setup.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CostReport {
    pub stages: Vec<CostStage>,
}

impl CostReport {
    pub fn total(&self, setup: &str) -> usize {
        self.stages.iter().filter(|s| s.setup == setup).map(|s| s.checkpoints).sum()
    }

    pub fn trainings(&self, setup: &str) -> usize {
        self.stages.iter().filter(|s| s.setup == setup).count()
    }

    pub fn setups(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for s in &self.stages {
            if !out.contains(&s.setup) {
                out.push(s.setup.clone());
            }
        }
        out
    }

    /// Fraction of checkpoints saved by `stage_a` relative to `stage_b`.
    pub fn saving(&self, a: &CostStage, b: &CostStage) -> f64 {
        1.0 - a.checkpoints as f64 / b.checkpoints as f64
    }

    pub fn find(&self, setup: &str, stage: &str) -> Option<&CostStage> {
        self.stages.iter().find(|s| s.setup == setup && s.stage == stage)
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from("setup\tstage\tround\tcheckpoints\tupdates\n");
        for s in &self.stages {
            out += &format!("{}\t{}\t{}\t{}\t{}\n", s.setup, s.stage, s.round, s.checkpoints, s.updates);
        }
        for setup in self.setups() {
            let ups: usize = self.stages.iter().filter(|s| s.setup == setup).map(|s| s.updates).sum();
            out += &format!("{setup}\ttotal\t-\t{}\t{ups}\n", self.total(&setup));
        }
        if let (Some(ft), Some(scratch)) = (self.find(SETUP_BI, "B-5*"), self.find(SETUP_SCRATCH, "B-5")) {
            out += &format!("saving\tB-5* vs B-5\t-\t{:.4}\t-\n", self.saving(ft, scratch));
        }
        out
    }
}

pub const SETUP_BI: &str = "bi-directional";
pub const SETUP_UNI: &str = "uni-directional";
pub const SETUP_SCRATCH: &str = "from-scratch";

#[derive(Clone, Debug)]
pub struct CycleResult {
    pub seed: u64,
    pub rounds: Vec<SystemRun>,
    pub comparisons: Vec<SystemRun>,
    /// Synthetic pools per round (index 0 is empty).
    pub pools: Vec<SyntheticPools>,
    pub cost: CostReport,
}

impl CycleResult {
    pub fn systems(&self) -> impl Iterator<Item = &SystemRun> {
        self.rounds.iter().chain(&self.comparisons)
    }
}

enum Start<'a> {
    Scratch(u64),
    From(&'a Checkpoint),
}

#[allow(clippy::too_many_arguments)]
fn run_system(
    plan: &CyclePlan,
    prep: &Prepared,
    system: &str,
    round: usize,
    recipe: &DataRecipe,
    pools: &SyntheticPools,
    start: Start<'_>,
    cfg: &TrainConfig,
    eval_dirs: &[Direction],
) -> Result<SystemRun> {
    let stage = |name: &str| format!("{name} {system}");
    let corpus = build_recipe(recipe, &prep.real, pools, &prep.tag_format).map_err(|e| e.in_stage(stage("build"), round))?;
    let corpus = oversample(&corpus, &plan.oversample_factors()?)?;
    let dev = prep.dev_for(recipe)?;
    log::info!("training {system} (round {round}) on {} pairs", corpus.len());
    let (outcome, fine_tuned) = match start {
        Start::Scratch(seed) => {
            let init = init_model(&plan.model, prep.vocab.clone(), seed)?;
            (train(init, &corpus, &dev, cfg), false)
        }
        Start::From(ckpt) => (continue_training(ckpt, &corpus, &dev, cfg), true),
    };
    let outcome = outcome.map_err(|e| e.in_stage(stage("train"), round))?;
    let decoder = average_checkpoints(&outcome.history, plan.average_top_k)?;
    let mut bleu = Vec::new();
    for &d in eval_dirs {
        let (b, _) = evaluate_direction(&[&decoder], prep, d, recipe.tagged, &plan.decode).map_err(|e| e.in_stage(stage("evaluate"), round))?;
        log::info!("{system} {}: {b}", direction_name(d, &prep.l1, &prep.l2));
        bleu.push((d, b));
    }
    Ok(SystemRun {
        system: system.to_string(),
        round,
        recipe: recipe.clone(),
        train_size: corpus.len(),
        outcome,
        decoder,
        bleu,
        fine_tuned,
        corpus,
    })
}

/// Back-translates the first `k · n` selected sentences of both languages
/// with `decoder`.
pub fn synthesize(prep: &Prepared, decoder: &ModelParams, k: usize, decode: &DecodeConfig, round: usize) -> Result<SyntheticPools> {
    let count = k * prep.n_real();
    if count > prep.mono_bpe_l1.len() || count > prep.mono_bpe_l2.len() {
        return Err(Error::PoolTooSmall {
            requested: count,
            available: prep.mono_bpe_l1.len().min(prep.mono_bpe_l2.len()),
        });
    }
    let bt = |mono: &[Sentence], d: Direction| {
        back_translate(&[decoder], mono, d, &prep.l1, &prep.l2, Some(&prep.tag_format), decode).map_err(|e| e.in_stage("back-translate", round))
    };
    let src_l1 = bt(&prep.mono_bpe_l2[..count], Direction::Forward)?;
    let src_l2 = bt(&prep.mono_bpe_l1[..count], Direction::Backward)?;
    log::info!(
        "round {round}: {} + {} synthetic pairs ({} + {} skipped)",
        src_l1.corpus.len(),
        src_l2.corpus.len(),
        src_l1.skipped.len(),
        src_l2.skipped.len()
    );
    Ok(SyntheticPools {
        src_l1: src_l1.corpus.pairs,
        src_l2: src_l2.corpus.pairs,
    })
}

fn train_seed(cfg: &TrainConfig, seed: u64, round: usize) -> TrainConfig {
    TrainConfig {
        seed: seed.wrapping_mul(1_000_003).wrapping_add(round as u64),
        ..cfg.clone()
    }
}

/// Trains the baseline of `seed`.
pub fn run_baseline(plan: &CyclePlan, prep: &Prepared, seed: u64) -> Result<SystemRun> {
    let (base, _) = plan.recipes()?;
    run_system(
        plan,
        prep,
        &plan.system_name(0),
        0,
        &base,
        &SyntheticPools::default(),
        Start::Scratch(seed),
        &train_seed(&plan.train, seed, 0),
        &Direction::BOTH,
    )
}

/// Fine-tunes `prev` on the augmented recipe built from `pools`.
pub fn run_finetune(plan: &CyclePlan, prep: &Prepared, prev: &SystemRun, pools: &SyntheticPools, seed: u64, round: usize) -> Result<SystemRun> {
    let (_, aug) = plan.recipes()?;
    run_system(
        plan,
        prep,
        &plan.system_name(round),
        round,
        &aug,
        pools,
        Start::From(&prev.outcome.best),
        &train_seed(plan.finetune_config(), seed, round),
        &Direction::BOTH,
    )
}

/// Runs the baseline and `plan.rounds` fine-tune rounds for one seed, plus
/// the configured comparison systems.
pub fn run_cycle(plan: &CyclePlan, prep: &Prepared, seed: u64) -> Result<CycleResult> {
    run_cycle_from(plan, prep, seed, None)
}

/// [`run_cycle`] reusing an already trained baseline.
pub fn run_cycle_from(plan: &CyclePlan, prep: &Prepared, seed: u64, baseline: Option<SystemRun>) -> Result<CycleResult> {
    plan.validate()?;
    let base = match baseline {
        Some(b) => b,
        None => run_baseline(plan, prep, seed)?,
    };
    let mut rounds = vec![base];
    let mut pools = vec![SyntheticPools::default()];
    for r in 1..=plan.rounds {
        // Re-decoding replaces the previous round's synthetic data.
        let p = synthesize(prep, &rounds[r - 1].decoder, plan.k, &plan.decode, r)?;
        let run = run_finetune(plan, prep, &rounds[r - 1], &p, seed, r)?;
        pools.push(p);
        rounds.push(run);
    }
    let mut comparisons = Vec::new();
    if plan.compare_scratch && plan.rounds >= 1 {
        let (_, aug) = plan.recipes()?;
        comparisons.push(run_system(
            plan,
            prep,
            &plan.augment_recipe,
            1,
            &aug,
            &pools[1],
            Start::Scratch(seed),
            &train_seed(&plan.train, seed, 100),
            &Direction::BOTH,
        )?);
    }
    if plan.compare_unidirectional {
        for d in Direction::BOTH {
            let c = Component::new(Provenance::Real, d);
            let recipe = DataRecipe::from_components(&[c.to_string()])?;
            let name = format!("U-1 {}", direction_name(d, &prep.l1, &prep.l2));
            comparisons.push(run_system(
                plan,
                prep,
                &name,
                0,
                &recipe,
                &SyntheticPools::default(),
                Start::Scratch(seed),
                &train_seed(&plan.train, seed, 200 + d as usize),
                &[d],
            )?);
        }
    }
    let cost = cost_report(&rounds, &comparisons);
    Ok(CycleResult {
        seed,
        rounds,
        comparisons,
        pools,
        cost,
    })
}

fn cost_report(rounds: &[SystemRun], comparisons: &[SystemRun]) -> CostReport {
    let stage = |setup: &str, r: &SystemRun| CostStage {
        setup: setup.to_string(),
        stage: r.system.clone(),
        round: r.round,
        checkpoints: r.checkpoints(),
        updates: r.outcome.losses.len(),
    };
    let mut stages: Vec<CostStage> = rounds.iter().map(|r| stage(SETUP_BI, r)).collect();
    for c in comparisons {
        let setup = if c.recipe.tagged { SETUP_SCRATCH } else { SETUP_UNI };
        stages.push(stage(setup, c));
    }
    CostReport { stages }
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    match v.len() {
        0 => f64::NAN,
        n if n % 2 == 1 => v[n / 2],
        n => (v[n / 2 - 1] + v[n / 2]) / 2.0,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub k: usize,
    pub selected: usize,
    pub direction: String,
    /// Per-seed BLEU of the first fine-tuned round; empty when infeasible.
    pub bleu: Vec<f64>,
    pub feasible: bool,
}

impl SweepRow {
    pub fn median(&self) -> f64 {
        median(&self.bleu)
    }
}

/// For every `k`, fine-tunes each cycle's baseline once on data
/// back-translated from `k · n` selected sentences. A first round already
/// run at the same `k` is reused. Infeasible `k` values produce warning rows.
pub fn sweep_k(plan: &CyclePlan, prep: &Prepared, cycles: &[CycleResult], k_values: &[usize]) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::new();
    for &k in k_values {
        let feasible = k >= 1 && k <= prep.max_k();
        let mut per_dir: Vec<Vec<f64>> = vec![Vec::new(); 2];
        if feasible {
            for c in cycles {
                let reused = c.rounds.get(1).filter(|_| k == plan.k);
                let fresh;
                let run = match reused {
                    Some(r) => r,
                    None => {
                        let pools = synthesize(prep, &c.rounds[0].decoder, k, &plan.decode, 1)?;
                        fresh = run_finetune(plan, prep, &c.rounds[0], &pools, c.seed, 1)?;
                        &fresh
                    }
                };
                for (i, d) in Direction::BOTH.iter().enumerate() {
                    per_dir[i].push(run.score(*d).expect("both directions evaluated"));
                }
            }
        } else {
            log::warn!("k = {k} needs {} sentences per language, more than selected; skipped", k * prep.n_real());
        }
        for (i, d) in Direction::BOTH.iter().enumerate() {
            rows.push(SweepRow {
                k,
                selected: k * prep.n_real(),
                direction: direction_name(*d, &prep.l1, &prep.l2),
                bleu: std::mem::take(&mut per_dir[i]),
                feasible,
            });
        }
    }
    Ok(rows)
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("k,selected,direction,median_bleu,seed_bleu,status\n");
    for r in rows {
        if r.feasible {
            let seeds: Vec<String> = r.bleu.iter().map(|b| format!("{b:.4}")).collect();
            out += &format!("{},{},{},{:.4},{},ok\n", r.k, r.selected, r.direction, r.median(), seeds.join(" "));
        } else {
            out += &format!("{},{},{},,,infeasible\n", r.k, r.selected, r.direction);
        }
    }
    out
}

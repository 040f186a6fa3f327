//! `bitrans`: command-line front end for every pipeline stage.
//!
//! Logs go to standard error; data only to the named output files, each
//! written through a temp file and renamed into place.

use std::collections::BTreeMap;
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use bitrans::artifact::{hash_sentences, write_atomic, write_atomic_str};
use bitrans::corpus::{build_recipe, oversample, tag_source, DataRecipe, Direction, ParallelCorpus, SyntheticPools, TagFormat};
use bitrans::cycle::{back_translate, desegment};
use bitrans::eval::{bleu, perplexity};
use bitrans::experiment::{run_experiment, tokenize_lines, ExperimentConfig};
use bitrans::lm::{select, train_lm, train_lm_restricted, write_selection, LmConfig, NgramLm};
use bitrans::nmt::{
    average_checkpoints, continue_training, init_model, read_checkpoint, train, translate_all, write_checkpoint, Checkpoint, DecodeConfig, ModelConfig, TrainConfig,
    TrainOutcome, Vocab,
};
use bitrans::subword::{learn_bpe, BpeModel};
use bitrans::text::io::{read_lines, read_parallel_files, read_sentences, sentences_to_text};
use bitrans::text::{apply_truecase, filter_mono, filter_parallel, learn_truecaser, Lang, Sentence, TruecaseModel};
use bitrans::toy::{self, ToyConfig};

#[derive(Parser)]
#[command(name = "bitrans", version, about = "Bi-directional NMT with back-translation")]
struct Cli {
    /// Worker threads for decoding, evaluation and perplexity (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// More log output (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Normalize, tokenize, true-case and length-filter raw text.
    Preprocess(PreprocessArgs),
    /// Learn joint BPE merges on tokenized files.
    LearnBpe(LearnBpeArgs),
    /// Segment tokenized text with a BPE model.
    ApplyBpe(ApplyBpeArgs),
    /// Train an interpolated n-gram language model.
    TrainLm(TrainLmArgs),
    /// Rank a pool by cross-entropy difference and keep the best sentences.
    Select(SelectArgs),
    /// Assemble a training corpus from a recipe.
    BuildCorpus(BuildCorpusArgs),
    /// Train a model from scratch.
    Train(TrainArgs),
    /// Translate one sentence per line.
    Translate(TranslateArgs),
    /// Back-translate monolingual text into synthetic pairs.
    Backtranslate(BacktranslateArgs),
    /// Continue training a checkpoint on new data.
    Finetune(FinetuneArgs),
    /// Average the best checkpoints by dev perplexity.
    AvgCheckpoints(AvgArgs),
    /// Corpus BLEU of hypotheses against references, or model perplexity.
    Evaluate(EvaluateArgs),
    /// Run the full cycle described by an experiment config.
    RunExperiment(ExperimentArgs),
    /// Fine-tune baselines with several monolingual data sizes.
    SweepK(SweepArgs),
    /// Write the synthetic toy corpora to files.
    MakeToy(MakeToyArgs),
}

#[derive(Args)]
struct PreprocessArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    lang: Lang,
    #[arg(long)]
    output: PathBuf,
    /// Line-aligned second side; enables pair filtering.
    #[arg(long, requires_all = ["pair_lang", "pair_output"])]
    pair_input: Option<PathBuf>,
    #[arg(long)]
    pair_lang: Option<Lang>,
    #[arg(long)]
    pair_output: Option<PathBuf>,
    /// Learn a truecaser on the input and write it here.
    #[arg(long)]
    learn_truecaser: Option<PathBuf>,
    #[arg(long)]
    pair_learn_truecaser: Option<PathBuf>,
    /// Apply an existing truecaser.
    #[arg(long, conflicts_with = "learn_truecaser")]
    truecaser: Option<PathBuf>,
    #[arg(long, conflicts_with = "pair_learn_truecaser")]
    pair_truecaser: Option<PathBuf>,
    /// Pairs with a side longer than this are dropped.
    #[arg(long, default_value_t = bitrans::text::DEFAULT_MAX_LEN)]
    max_len: usize,
    /// Monolingual mode keeps lines strictly longer than this.
    #[arg(long, default_value_t = bitrans::text::DEFAULT_MONO_MIN_EXCLUSIVE)]
    mono_min_exclusive: usize,
    /// Skip length filtering.
    #[arg(long)]
    no_filter: bool,
}

#[derive(Args)]
struct LearnBpeArgs {
    /// Tokenized files of both languages.
    #[arg(long, required = true, num_args = 1..)]
    input: Vec<PathBuf>,
    #[arg(long)]
    ops: usize,
    #[arg(long)]
    output: PathBuf,
    /// Tokens never split, such as target-language tags.
    #[arg(long, num_args = 1..)]
    protect: Vec<String>,
}

#[derive(Args)]
struct ApplyBpeArgs {
    #[arg(long)]
    codes: PathBuf,
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    /// Files the model should have been learned on; refuses a mismatch.
    #[arg(long, num_args = 1..)]
    learned_on: Vec<PathBuf>,
    #[arg(long)]
    allow_stale: bool,
}

#[derive(Args)]
struct TrainLmArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 3)]
    order: usize,
    #[arg(long)]
    epsilon: Option<f64>,
    /// Reuse the vocabulary of this model (for the general-domain LM).
    #[arg(long)]
    restrict_to: Option<PathBuf>,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct SelectArgs {
    #[arg(long)]
    pool: PathBuf,
    #[arg(long)]
    lm_in: PathBuf,
    #[arg(long)]
    lm_out: PathBuf,
    /// Number to keep; defaults to k times n-real.
    #[arg(long)]
    count: Option<usize>,
    #[arg(long)]
    n_real: Option<usize>,
    #[arg(long, default_value_t = 1)]
    k: usize,
    /// Scored TSV output.
    #[arg(long)]
    output: PathBuf,
    /// Also write the selected sentences as plain text.
    #[arg(long)]
    text_output: Option<PathBuf>,
}

#[derive(Args)]
struct LangPair {
    #[arg(long)]
    l1: Lang,
    #[arg(long)]
    l2: Lang,
}

#[derive(Args)]
struct BuildCorpusArgs {
    #[command(flatten)]
    langs: LangPair,
    /// Preset name or components such as "L1<>L2 L1*>L2".
    #[arg(long)]
    recipe: String,
    #[arg(long)]
    real_l1: PathBuf,
    #[arg(long)]
    real_l2: PathBuf,
    /// Back-translated (L1*, L2) pairs.
    #[arg(long)]
    synthetic_l1: Option<PathBuf>,
    /// Back-translated (L2*, L1) pairs, in the TSV written by backtranslate.
    #[arg(long)]
    synthetic_l2: Option<PathBuf>,
    /// Repeat a component's block, e.g. "L1>L2=2".
    #[arg(long)]
    oversample: Vec<String>,
    #[arg(long, default_value = "<2{lang}>")]
    tag_format: String,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct TrainingArgs {
    #[command(flatten)]
    langs: LangPair,
    /// Corpus TSV from build-corpus.
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    dev: PathBuf,
    /// Experiment config whose [plan] model/train sections are used.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    max_updates: Option<usize>,
    /// Directory for best.ckpt, every history checkpoint and history.tsv.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    common: TrainingArgs,
    /// Vocabulary JSON; built from the training, dev and extra files otherwise.
    #[arg(long)]
    vocab: Option<PathBuf>,
    /// Further tokenized files whose tokens must be in the vocabulary.
    #[arg(long, num_args = 1..)]
    vocab_extra: Vec<PathBuf>,
    #[arg(long, default_value = "<2{lang}>")]
    tag_format: String,
}

#[derive(Args)]
struct FinetuneArgs {
    #[command(flatten)]
    common: TrainingArgs,
    #[arg(long)]
    checkpoint: PathBuf,
}

#[derive(Args)]
struct DecodeArgs {
    /// Checkpoints; more than one decodes as an ensemble.
    #[arg(long = "model", required = true, num_args = 1..)]
    models: Vec<PathBuf>,
    #[arg(long, default_value_t = 5)]
    beam: usize,
    #[arg(long, default_value_t = 2.0)]
    max_len_factor: f64,
    #[arg(long, default_value_t = 10)]
    max_len_offset: usize,
    /// Segment inputs with this BPE model and merge outputs.
    #[arg(long)]
    bpe: Option<PathBuf>,
    /// Inputs are not tagged (uni-directional models).
    #[arg(long)]
    no_tag: bool,
    #[arg(long, default_value = "<2{lang}>")]
    tag_format: String,
}

#[derive(Args)]
struct TranslateArgs {
    #[command(flatten)]
    decode: DecodeArgs,
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    target_lang: Lang,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct BacktranslateArgs {
    #[command(flatten)]
    decode: DecodeArgs,
    #[command(flatten)]
    langs: LangPair,
    /// Monolingual text in `mono_lang`; it stays on the target side.
    #[arg(long)]
    mono: PathBuf,
    #[arg(long)]
    mono_lang: Lang,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct AvgArgs {
    #[arg(long, required = true, num_args = 1..)]
    input: Vec<PathBuf>,
    #[arg(long, default_value_t = 4)]
    top_k: usize,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long, requires = "reference")]
    hyp: Option<PathBuf>,
    #[arg(long = "ref")]
    reference: Option<PathBuf>,
    /// Case-sensitive scoring.
    #[arg(long)]
    cased: bool,
    /// Report the perplexity of this model on --corpus instead.
    #[arg(long, requires_all = ["corpus", "l1", "l2"], conflicts_with = "hyp")]
    model: Option<PathBuf>,
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    l1: Option<Lang>,
    #[arg(long)]
    l2: Option<Lang>,
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(long)]
    config: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's sweep_k list.
    #[arg(long, value_delimiter = ',')]
    k: Vec<usize>,
}

#[derive(Args)]
struct MakeToyArgs {
    /// TOML with toy keys; defaults otherwise.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

fn main() {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "info",
        1 => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Err(e) = run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build_global()
        .context("configuring the thread pool")?;
    match cli.cmd {
        Cmd::Preprocess(a) => preprocess(a),
        Cmd::LearnBpe(a) => cmd_learn_bpe(a),
        Cmd::ApplyBpe(a) => cmd_apply_bpe(a),
        Cmd::TrainLm(a) => cmd_train_lm(a),
        Cmd::Select(a) => cmd_select(a),
        Cmd::BuildCorpus(a) => cmd_build_corpus(a),
        Cmd::Train(a) => cmd_train(a),
        Cmd::Translate(a) => cmd_translate(a),
        Cmd::Backtranslate(a) => cmd_backtranslate(a),
        Cmd::Finetune(a) => cmd_finetune(a),
        Cmd::AvgCheckpoints(a) => cmd_avg(a),
        Cmd::Evaluate(a) => cmd_evaluate(a),
        Cmd::RunExperiment(a) => cmd_experiment(a),
        Cmd::SweepK(a) => cmd_sweep(a),
        Cmd::MakeToy(a) => cmd_make_toy(a),
    }
}

fn write_text(path: &Path, sentences: &[Sentence]) -> Result<()> {
    Ok(write_atomic_str(path, &sentences_to_text(sentences))?)
}

fn truecaser(learn: Option<&Path>, apply: Option<&Path>, data: &[Sentence]) -> Result<Option<TruecaseModel>> {
    if let Some(p) = learn {
        let m = learn_truecaser(data)?;
        let mut buf = Vec::new();
        m.write_to(&mut buf)?;
        write_atomic(p, &buf)?;
        return Ok(Some(m));
    }
    match apply {
        Some(p) => {
            let f = fs::File::open(p).with_context(|| format!("opening {}", p.display()))?;
            Ok(Some(TruecaseModel::read_from(BufReader::new(f))?))
        }
        None => Ok(None),
    }
}

fn preprocess(a: PreprocessArgs) -> Result<()> {
    let mut first = tokenize_lines(&read_lines(&a.input)?, &a.lang);
    if let Some(tc) = truecaser(a.learn_truecaser.as_deref(), a.truecaser.as_deref(), &first)? {
        first = first.iter().map(|s| apply_truecase(&tc, s)).collect();
    }
    let Some(pair_input) = &a.pair_input else {
        let before = first.len();
        let kept = if a.no_filter { first } else { filter_mono(first, a.mono_min_exclusive) };
        log::info!("kept {} of {before} monolingual lines", kept.len());
        return write_text(&a.output, &kept);
    };
    let pair_lang = a.pair_lang.clone().expect("clap requires pair_lang");
    let mut second = tokenize_lines(&read_lines(pair_input)?, &pair_lang);
    if second.len() != first.len() {
        bail!("{} has {} lines but {} has {}", pair_input.display(), second.len(), a.input.display(), first.len());
    }
    if let Some(tc) = truecaser(a.pair_learn_truecaser.as_deref(), a.pair_truecaser.as_deref(), &second)? {
        second = second.iter().map(|s| apply_truecase(&tc, s)).collect();
    }
    let pairs: Vec<(Sentence, Sentence)> = first.into_iter().zip(second).collect();
    let before = pairs.len();
    let kept = if a.no_filter { pairs } else { filter_parallel(pairs, a.max_len) };
    log::info!("kept {} of {before} pairs", kept.len());
    let (x, y): (Vec<Sentence>, Vec<Sentence>) = kept.into_iter().unzip();
    write_text(&a.output, &x)?;
    write_text(a.pair_output.as_ref().expect("clap requires pair_output"), &y)
}

fn read_tokenized(paths: &[PathBuf]) -> Result<Vec<Sentence>> {
    let mut out = Vec::new();
    for p in paths {
        out.extend(read_sentences(p, &Lang::from("any"))?);
    }
    Ok(out)
}

fn read_bpe(path: &Path) -> Result<BpeModel> {
    let f = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(BpeModel::read_from(BufReader::new(f))?)
}

fn cmd_learn_bpe(a: LearnBpeArgs) -> Result<()> {
    let corpus = read_tokenized(&a.input)?;
    let mut m = learn_bpe(&corpus, a.ops)?;
    m.protect(a.protect)?;
    let mut buf = Vec::new();
    m.write_to(&mut buf)?;
    write_atomic(&a.output, &buf)?;
    log::info!("learned {} merges", m.merges().len());
    Ok(())
}

fn cmd_apply_bpe(a: ApplyBpeArgs) -> Result<()> {
    let m = read_bpe(&a.codes)?;
    if !a.learned_on.is_empty() {
        let hash = hash_sentences(&read_tokenized(&a.learned_on)?);
        m.ensure_fresh(&hash, a.allow_stale)?;
    }
    let input = read_sentences(&a.input, &Lang::from("any"))?;
    write_text(&a.output, &m.apply_all(&input))
}

fn read_lm(path: &Path) -> Result<NgramLm> {
    let f = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(NgramLm::read_from(BufReader::new(f))?)
}

fn cmd_train_lm(a: TrainLmArgs) -> Result<()> {
    let mut cfg = LmConfig::with_order(a.order);
    if let Some(e) = a.epsilon {
        cfg.epsilon = e;
    }
    let corpus = read_sentences(&a.input, &Lang::from("any"))?;
    let lm = match &a.restrict_to {
        Some(p) => train_lm_restricted(&corpus, &cfg, &read_lm(p)?)?,
        None => train_lm(&corpus, &cfg)?,
    };
    let mut buf = Vec::new();
    lm.write_to(&mut buf)?;
    Ok(write_atomic(&a.output, &buf)?)
}

fn cmd_select(a: SelectArgs) -> Result<()> {
    let pool = read_sentences(&a.pool, &Lang::from("any"))?;
    let count = match (a.count, a.n_real) {
        (Some(c), _) => c,
        (None, Some(n)) => {
            let sel = bitrans::lm::SelectionConfig { n_real: n, k: a.k };
            sel.validate(pool.len())?;
            sel.count()
        }
        (None, None) => bail!("pass --count or --n-real"),
    };
    if count > pool.len() {
        bail!("requested {count} sentences but the pool holds only {}", pool.len());
    }
    let chosen = select(&pool, &read_lm(&a.lm_in)?, &read_lm(&a.lm_out)?, count)?;
    write_atomic_str(&a.output, &write_selection(&chosen))?;
    if let Some(p) = &a.text_output {
        let s: Vec<Sentence> = chosen.into_iter().map(|c| c.sentence).collect();
        write_text(p, &s)?;
    }
    Ok(())
}

fn read_corpus(path: &Path, langs: &LangPair) -> Result<ParallelCorpus> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(ParallelCorpus::from_tsv(&text, langs.l1.clone(), langs.l2.clone())?)
}

fn cmd_build_corpus(a: BuildCorpusArgs) -> Result<()> {
    let recipe = DataRecipe::parse(&a.recipe)?;
    let format = TagFormat::new(&a.tag_format)?;
    let (l1, l2) = (&a.langs.l1, &a.langs.l2);
    let real = ParallelCorpus::from_real(l1.clone(), l2.clone(), read_parallel_files(&a.real_l1, &a.real_l2, l1, l2)?);
    let pool = |p: &Option<PathBuf>| -> Result<Vec<_>> {
        match p {
            Some(p) => Ok(read_corpus(p, &a.langs)?.pairs),
            None => Ok(Vec::new()),
        }
    };
    let pools = SyntheticPools {
        src_l1: pool(&a.synthetic_l1)?,
        src_l2: pool(&a.synthetic_l2)?,
    };
    let mut factors = BTreeMap::new();
    for o in &a.oversample {
        let (c, f) = o.rsplit_once('=').with_context(|| format!("--oversample {o:?}: expected COMPONENT=FACTOR"))?;
        factors.insert(c.parse()?, f.parse().with_context(|| format!("--oversample {o:?}: bad factor"))?);
    }
    let corpus = oversample(&build_recipe(&recipe, &real, &pools, &format)?, &factors)?;
    log::info!("{}: {} pairs", recipe.label(), corpus.len());
    Ok(write_atomic_str(&a.output, &corpus.to_tsv())?)
}

fn training_configs(a: &TrainingArgs, finetune: bool) -> Result<(ModelConfig, TrainConfig)> {
    let (model, mut train) = match &a.config {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            let cfg = ExperimentConfig::from_toml(&text)?;
            let t = if finetune { cfg.plan.finetune_config().clone() } else { cfg.plan.train.clone() };
            (cfg.plan.model, t)
        }
        None => (ModelConfig::default(), TrainConfig::default()),
    };
    if let Some(s) = a.seed {
        train.seed = s;
    }
    if let Some(m) = a.max_updates {
        train.max_updates = m;
    }
    model.validate()?;
    train.validate()?;
    Ok((model, train))
}

fn write_outcome(out: &Path, o: &TrainOutcome) -> Result<()> {
    write_checkpoint(&out.join("best.ckpt"), &o.best)?;
    let mut hist = String::from("update\tdev_perplexity\tfile\n");
    for c in &o.history {
        let name = format!("ckpt-{:07}.ckpt", c.update_count);
        write_checkpoint(&out.join(&name), c)?;
        hist += &format!("{}\t{:.6}\t{name}\n", c.update_count, c.dev_perplexity);
    }
    write_atomic_str(&out.join("history.tsv"), &hist)?;
    log::info!(
        "{} checkpoints; best at update {} with dev perplexity {:.4}",
        o.history.len(),
        o.best.update_count,
        o.best.dev_perplexity
    );
    Ok(())
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let (model, cfg) = training_configs(&a.common, false)?;
    let train_c = read_corpus(&a.common.train, &a.common.langs)?;
    let dev = read_corpus(&a.common.dev, &a.common.langs)?;
    let vocab = match &a.vocab {
        Some(p) => serde_json::from_str::<Vocab>(&fs::read_to_string(p)?).with_context(|| format!("parsing {}", p.display()))?,
        None => {
            let extra = read_tokenized(&a.vocab_extra)?;
            let format = TagFormat::new(&a.tag_format)?;
            let tags = [format.render(&a.common.langs.l1), format.render(&a.common.langs.l2)];
            Vocab::build(
                train_c.pairs.iter().chain(&dev.pairs).flat_map(|p| [&p.source, &p.target]).chain(&extra),
                &tags,
            )
        }
    };
    let init = init_model(&model, Arc::new(vocab), cfg.seed)?;
    let outcome = train(init, &train_c, &dev, &cfg)?;
    write_outcome(&a.common.out, &outcome)
}

fn cmd_finetune(a: FinetuneArgs) -> Result<()> {
    let (_, cfg) = training_configs(&a.common, true)?;
    let ckpt = read_checkpoint(&a.checkpoint)?;
    let train_c = read_corpus(&a.common.train, &a.common.langs)?;
    let dev = read_corpus(&a.common.dev, &a.common.langs)?;
    let outcome = continue_training(&ckpt, &train_c, &dev, &cfg)?;
    write_outcome(&a.common.out, &outcome)
}

struct Decoder {
    models: Vec<Checkpoint>,
    cfg: DecodeConfig,
    bpe: Option<BpeModel>,
    tags: Option<TagFormat>,
}

impl Decoder {
    fn load(a: &DecodeArgs) -> Result<Self> {
        let models = a.models.iter().map(|p| read_checkpoint(p).with_context(|| format!("loading {}", p.display()))).collect::<Result<Vec<_>>>()?;
        let cfg = DecodeConfig {
            beam: a.beam,
            max_len_factor: a.max_len_factor,
            max_len_offset: a.max_len_offset,
        };
        cfg.validate()?;
        Ok(Decoder {
            models,
            cfg,
            bpe: a.bpe.as_deref().map(read_bpe).transpose()?,
            tags: if a.no_tag { None } else { Some(TagFormat::new(&a.tag_format)?) },
        })
    }

    fn params(&self) -> Vec<&bitrans::nmt::ModelParams> {
        self.models.iter().map(|c| &c.params).collect()
    }

    fn segment(&self, s: &[Sentence]) -> Vec<Sentence> {
        match &self.bpe {
            Some(b) => b.apply_all(s),
            None => s.to_vec(),
        }
    }
}

fn cmd_translate(a: TranslateArgs) -> Result<()> {
    let d = Decoder::load(&a.decode)?;
    let input = read_sentences(&a.input, &Lang::from("src"))?;
    let inputs = d
        .segment(&input)
        .iter()
        .map(|s| match &d.tags {
            Some(f) => tag_source(s, &a.target_lang, f),
            None => Ok(s.clone()),
        })
        .collect::<bitrans::Result<Vec<_>>>()?;
    let mut out = String::new();
    for (i, r) in translate_all(&d.params(), &inputs, &a.target_lang, &d.cfg).into_iter().enumerate() {
        match r {
            Ok(s) => out += &if d.bpe.is_some() { desegment(&s) } else { s }.text(),
            Err(e) => log::warn!("line {}: {e}; writing an empty line", i + 1),
        }
        out.push('\n');
    }
    Ok(write_atomic_str(&a.output, &out)?)
}

fn cmd_backtranslate(a: BacktranslateArgs) -> Result<()> {
    let d = Decoder::load(&a.decode)?;
    let (l1, l2) = (&a.langs.l1, &a.langs.l2);
    let direction = if &a.mono_lang == l2 {
        Direction::Forward
    } else if &a.mono_lang == l1 {
        Direction::Backward
    } else {
        bail!("--mono-lang {} is neither --l1 nor --l2", a.mono_lang);
    };
    let mono = d.segment(&read_sentences(&a.mono, &a.mono_lang)?);
    let bt = back_translate(&d.params(), &mono, direction, l1, l2, d.tags.as_ref(), &d.cfg)?;
    log::info!("{} synthetic pairs, {} skipped", bt.corpus.len(), bt.skipped.len());
    Ok(write_atomic_str(&a.output, &bt.corpus.to_tsv())?)
}

fn cmd_avg(a: AvgArgs) -> Result<()> {
    let ckpts = a.input.iter().map(|p| read_checkpoint(p).with_context(|| format!("loading {}", p.display()))).collect::<Result<Vec<_>>>()?;
    let params = average_checkpoints(&ckpts, a.top_k)?;
    let best = ckpts.iter().min_by(|x, y| x.dev_perplexity.total_cmp(&y.dev_perplexity)).expect("nonempty");
    let out = Checkpoint {
        params,
        update_count: best.update_count,
        dev_perplexity: f64::NAN,
        data_hash: best.data_hash.clone(),
    };
    Ok(write_checkpoint(&a.output, &out)?)
}

fn cmd_evaluate(a: EvaluateArgs) -> Result<()> {
    if let Some(m) = &a.model {
        let ckpt = read_checkpoint(m)?;
        let langs = LangPair {
            l1: a.l1.clone().expect("clap requires l1"),
            l2: a.l2.clone().expect("clap requires l2"),
        };
        let corpus = read_corpus(a.corpus.as_ref().expect("clap requires corpus"), &langs)?;
        println!("perplexity = {:.4}", perplexity(&ckpt.params, &corpus)?);
        return Ok(());
    }
    let (Some(h), Some(r)) = (&a.hyp, &a.reference) else {
        bail!("pass --hyp and --ref, or --model with --corpus");
    };
    let score = bleu(&read_lines(h)?, &read_lines(r)?, !a.cased)?;
    println!("{score}");
    Ok(())
}

fn cmd_experiment(a: ExperimentArgs) -> Result<()> {
    let cfg = ExperimentConfig::load(&a.config)?;
    let report = run_experiment(&cfg)?;
    print!("{}", report.scores_tsv);
    log::info!("artifacts in {}", cfg.out_dir.display());
    Ok(())
}

fn cmd_sweep(a: SweepArgs) -> Result<()> {
    let mut cfg = ExperimentConfig::load(&a.config)?;
    if !a.k.is_empty() {
        cfg.sweep_k = a.k;
    }
    if cfg.sweep_k.is_empty() {
        bail!("no k values: pass --k or set sweep_k");
    }
    cfg.plan.rounds = 0;
    cfg.plan.compare_scratch = false;
    cfg.plan.compare_unidirectional = false;
    let report = run_experiment(&cfg)?;
    print!("{}", report.sweep_csv.unwrap_or_default());
    Ok(())
}

fn cmd_make_toy(a: MakeToyArgs) -> Result<()> {
    let mut cfg = match &a.config {
        Some(p) => toml::from_str::<ToyConfig>(&fs::read_to_string(p)?).with_context(|| format!("parsing {}", p.display()))?,
        None => ToyConfig::default(),
    };
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    let d = toy::generate(&cfg)?;
    let (l1, l2) = (&cfg.l1, &cfg.l2);
    for (name, c) in [("train", &d.train), ("dev", &d.dev), ("test", &d.test)] {
        let (x, y): (Vec<Sentence>, Vec<Sentence>) = c.pairs.iter().map(|p| (p.source.clone(), p.target.clone())).unzip();
        write_text(&a.out.join(format!("{name}.{l1}")), &x)?;
        write_text(&a.out.join(format!("{name}.{l2}")), &y)?;
    }
    write_text(&a.out.join(format!("mono.{l1}")), &d.mono_l1)?;
    write_text(&a.out.join(format!("mono.{l2}")), &d.mono_l2)?;
    let lex: String = d.lexicon.iter().map(|(x, y)| format!("{x}\t{y}\n")).collect();
    write_atomic_str(&a.out.join("lexicon.tsv"), &lex)?;
    log::info!("toy corpora in {}", a.out.display());
    Ok(())
}

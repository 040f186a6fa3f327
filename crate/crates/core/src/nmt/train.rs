use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::config::TrainConfig;
use super::model::{forward_loss, Batch};
use super::params::ModelParams;
use super::vocab::Vocab;
use crate::corpus::ParallelCorpus;
use crate::error::{Error, Result};

const EVAL_BATCH: usize = 64;

/// A snapshot taken at a dev evaluation.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub update_count: usize,
    pub dev_perplexity: f64,
    /// Content hash of the training corpus that produced it.
    pub data_hash: String,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub best: Checkpoint,
    /// Every checkpoint in order; its length is the training cost.
    pub history: Vec<Checkpoint>,
    /// Training loss of every update.
    pub losses: Vec<f64>,
}

impl TrainOutcome {
    pub fn checkpoints(&self) -> usize {
        self.history.len()
    }
}

pub(crate) type IdPair = (Vec<u32>, Vec<u32>);

pub(crate) fn encode_corpus(vocab: &Vocab, corpus: &ParallelCorpus) -> Result<Vec<IdPair>> {
    corpus
        .pairs
        .iter()
        .map(|p| Ok((vocab.encode(&p.source)?, vocab.encode(&p.target)?)))
        .collect()
}

fn batch_of(pairs: &[IdPair], idx: &[usize]) -> Result<Batch> {
    let refs: Vec<(&[u32], &[u32])> = idx.iter().map(|&i| (pairs[i].0.as_slice(), pairs[i].1.as_slice())).collect();
    Batch::new(&refs)
}

/// Summed token NLL and token count in eval mode. Chunks are scored in
/// parallel and reduced in order.
pub(crate) fn nll_sum(params: &ModelParams, pairs: &[IdPair]) -> Result<(f64, usize)> {
    let idx: Vec<usize> = (0..pairs.len()).collect();
    let parts = idx
        .par_chunks(EVAL_BATCH)
        .map(|chunk| {
            let out = forward_loss(params, &batch_of(pairs, chunk)?, None)?;
            Ok((out.loss * out.tokens as f64, out.tokens))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(parts.iter().fold((0.0, 0), |(s, n), (x, k)| (s + x, n + k)))
}

/// `exp` of the mean token NLL of `corpus` in eval mode.
pub fn corpus_perplexity(params: &ModelParams, corpus: &ParallelCorpus) -> Result<f64> {
    if corpus.is_empty() {
        return Err(Error::Empty("perplexity corpus"));
    }
    let pairs = encode_corpus(&params.vocab, corpus)?;
    let (nll, n) = nll_sum(params, &pairs)?;
    Ok((nll / n as f64).exp())
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn new(n: usize) -> Self {
        Adam {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, cfg: &TrainConfig, params: &mut [f64], grads: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - cfg.beta1.powi(self.t);
        let c2 = 1.0 - cfg.beta2.powi(self.t);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = cfg.beta1 * self.m[i] + (1.0 - cfg.beta1) * g;
            self.v[i] = cfg.beta2 * self.v[i] + (1.0 - cfg.beta2) * g * g;
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            params[i] -= cfg.learning_rate * mh / (vh.sqrt() + cfg.epsilon);
        }
    }
}

/// Adam on seeded shuffles of `train`, evaluating dev perplexity every
/// `checkpoint_interval` updates and stopping after `patience` evaluations
/// without a new best, or at `max_updates`.
pub fn train(params: ModelParams, train: &ParallelCorpus, dev: &ParallelCorpus, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::Empty("training corpus"));
    }
    if dev.is_empty() {
        return Err(Error::Empty("dev corpus"));
    }
    let data_hash = train.content_hash();
    let train_ids = encode_corpus(&params.vocab, train)?;
    let dev_ids = encode_corpus(&params.vocab, dev)?;
    let mut params = params;
    let mut adam = Adam::new(params.values().len());
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_d80b);
    let mut order: Vec<usize> = (0..train_ids.len()).collect();
    let mut history: Vec<Checkpoint> = Vec::new();
    let mut losses = Vec::new();
    let mut best: Option<usize> = None;
    let mut stale = 0;
    let mut updates = 0;
    'outer: loop {
        order.shuffle(&mut shuffle_rng);
        for chunk in order.chunks(cfg.batch_size) {
            let batch = batch_of(&train_ids, chunk)?;
            let out = forward_loss(&params, &batch, Some(&mut dropout_rng))?;
            updates += 1;
            let mut grads = out.grads.expect("train mode returns gradients");
            let norm = grads.iter().map(|g| g * g).sum::<f64>().sqrt();
            if !out.loss.is_finite() || !norm.is_finite() {
                return Err(Error::NonFiniteLoss { update: updates });
            }
            if let Some(clip) = cfg.clip_norm.filter(|&c| norm > c) {
                grads.iter_mut().for_each(|g| *g *= clip / norm);
            }
            adam.step(cfg, params.values_mut(), &grads);
            losses.push(out.loss);

            let at_limit = updates >= cfg.max_updates;
            if updates % cfg.checkpoint_interval == 0 || at_limit {
                let (nll, n) = nll_sum(&params, &dev_ids)?;
                let ppl = (nll / n as f64).exp();
                if !ppl.is_finite() {
                    return Err(Error::NonFiniteLoss { update: updates });
                }
                log::info!("update {updates}: train loss {:.4}, dev perplexity {ppl:.4}", out.loss);
                history.push(Checkpoint {
                    params: params.clone(),
                    update_count: updates,
                    dev_perplexity: ppl,
                    data_hash: data_hash.clone(),
                });
                if best.is_none_or(|b| ppl < history[b].dev_perplexity) {
                    best = Some(history.len() - 1);
                    stale = 0;
                } else {
                    stale += 1;
                }
                if stale >= cfg.patience || at_limit {
                    break 'outer;
                }
            }
        }
    }
    let best = history[best.expect("at least one checkpoint")].clone();
    Ok(TrainOutcome { best, history, losses })
}

/// [`train`] starting from `ckpt`'s parameters with fresh optimizer state.
/// Every token of the new data must already be in the checkpoint vocabulary.
pub fn continue_training(
    ckpt: &Checkpoint,
    new_train: &ParallelCorpus,
    dev: &ParallelCorpus,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    let vocab = &ckpt.params.vocab;
    let mut needed: BTreeSet<&str> = BTreeSet::new();
    for p in new_train.pairs.iter().chain(&dev.pairs) {
        needed.extend(p.source.tokens.iter().chain(&p.target.tokens).map(String::as_str));
    }
    if needed.iter().any(|t| !vocab.contains(t)) {
        let reserved: Vec<String> = vocab.tokens()[3..].iter().filter(|t| needed.contains(t.as_str())).cloned().collect();
        let found = Vocab::build(new_train.pairs.iter().chain(&dev.pairs).flat_map(|p| [&p.source, &p.target]), &reserved);
        return Err(Error::VocabMismatch {
            expected: vocab.len(),
            expected_hash: vocab.fingerprint(),
            found: found.len(),
            found_hash: found.fingerprint(),
        });
    }
    train(ckpt.params.clone(), new_train, dev, cfg)
}

/// Element-wise mean of the `top_k` checkpoints with the lowest dev
/// perplexity (all of them if fewer).
pub fn average_checkpoints(ckpts: &[Checkpoint], top_k: usize) -> Result<ModelParams> {
    if ckpts.is_empty() || top_k == 0 {
        return Err(Error::Empty("checkpoints to average"));
    }
    let mut ranked: Vec<&Checkpoint> = ckpts.iter().collect();
    ranked.sort_by(|a, b| a.dev_perplexity.total_cmp(&b.dev_perplexity));
    ranked.truncate(top_k);
    let first = &ranked[0].params;
    if let Some(bad) = ranked.iter().find(|c| !c.params.compatible(first)) {
        return Err(Error::ShapeMismatch(format!(
            "checkpoint at update {} differs in tensor layout or vocabulary",
            bad.update_count
        )));
    }
    let mut avg = first.clone();
    for (i, c) in ranked.iter().enumerate().skip(1) {
        let n = (i + 1) as f64;
        for (a, x) in avg.values_mut().iter_mut().zip(c.params.values()) {
            *a += (x - *a) / n;
        }
    }
    Ok(avg)
}

use std::cmp::Ordering;

use rayon::prelude::*;

use super::config::DecodeConfig;
use super::model::{decode_step, encode_source, DecState, SourceEncoding};
use super::params::ModelParams;
use super::vocab::{BOS, EOS, PAD};
use crate::error::{Error, Result};
use crate::text::{Lang, Sentence};

#[derive(Clone, Debug, PartialEq)]
pub struct Hypothesis {
    /// Output ids; ends with `</s>` exactly when `complete`.
    pub tokens: Vec<u32>,
    pub log_prob: f64,
    /// `log_prob` divided by the token count.
    pub score: f64,
    pub complete: bool,
}

impl Hypothesis {
    fn new(tokens: Vec<u32>, log_prob: f64) -> Self {
        let complete = tokens.last() == Some(&EOS);
        let score = if tokens.is_empty() { log_prob } else { log_prob / tokens.len() as f64 };
        Hypothesis {
            tokens,
            log_prob,
            score,
            complete,
        }
    }
}

/// One ensemble member's encoded source and running state.
struct Member<'a> {
    params: &'a ModelParams,
    enc: SourceEncoding,
    state: DecState,
}

fn start<'a>(models: &[&'a ModelParams], source: &[u32]) -> Result<Vec<Member<'a>>> {
    let first = *models.first().ok_or(Error::Empty("ensemble"))?;
    if source.is_empty() {
        return Err(Error::Empty("source sentence"));
    }
    if models.iter().any(|m| m.vocab.tokens() != first.vocab.tokens()) {
        return Err(Error::Config("ensemble members use different vocabularies".into()));
    }
    if let Some(&bad) = source.iter().find(|&&i| i as usize >= first.vocab.len()) {
        return Err(Error::UnknownToken(format!("id {bad}")));
    }
    Ok(models
        .iter()
        .map(|&params| {
            let enc = encode_source(params, source);
            let state = enc.init.clone();
            Member { params, enc, state }
        })
        .collect())
}

/// Advances all members; returns `ln` of the mean member probability for
/// every row and token.
fn step(members: &mut [Member<'_>], prev: &[u32]) -> Vec<f64> {
    let mut mean: Vec<f64> = Vec::new();
    for (i, m) in members.iter_mut().enumerate() {
        let (logp, next) = decode_step(m.params, &m.enc, &m.state, prev);
        m.state = next;
        if i == 0 {
            mean = logp.iter().map(|x| x.exp()).collect();
        } else {
            let n = (i + 1) as f64;
            mean.iter_mut().zip(&logp).for_each(|(a, x)| *a += (x.exp() - *a) / n);
        }
    }
    mean.iter_mut().for_each(|p| *p = p.ln());
    mean
}

fn reorder(members: &mut [Member<'_>], parents: &[usize]) {
    for m in members {
        let d = &m.params.layout().dims;
        m.state = m.state.select(parents, d.h, d.c);
    }
}

fn selectable(w: usize) -> bool {
    w != PAD as usize && w != BOS as usize
}

/// Beam search over the probability-averaged ensemble. The best complete
/// hypothesis by length-normalized score is returned; if none completes
/// within the length limit, the best partial one is returned instead.
pub fn beam_decode(models: &[&ModelParams], source: &[u32], cfg: &DecodeConfig) -> Result<Hypothesis> {
    cfg.validate()?;
    let mut members = start(models, source)?;
    let v = models[0].vocab.len();
    let max_len = cfg.max_len(source.len());
    let mut rows: Vec<(Vec<u32>, f64)> = vec![(Vec::new(), 0.0)];
    let mut prev = vec![BOS];
    let mut finished: Vec<Hypothesis> = Vec::new();
    for _ in 0..max_len {
        let logp = step(&mut members, &prev);
        let mut cand: Vec<(f64, usize, usize)> = Vec::with_capacity(rows.len() * v);
        for (r, (_, acc)) in rows.iter().enumerate() {
            for w in (0..v).filter(|&w| selectable(w)) {
                cand.push((acc + logp[r * v + w], r, w));
            }
        }
        cand.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        cand.truncate(cfg.beam);
        let mut next_rows = Vec::new();
        let mut parents = Vec::new();
        for (total, r, w) in cand {
            let mut tokens = rows[r].0.clone();
            tokens.push(w as u32);
            if w as u32 == EOS {
                finished.push(Hypothesis::new(tokens, total));
            } else {
                next_rows.push((tokens, total));
                parents.push(r);
            }
        }
        if finished.len() >= cfg.beam || next_rows.is_empty() {
            rows.clear();
            break;
        }
        reorder(&mut members, &parents);
        prev = next_rows.iter().map(|(t, _)| *t.last().expect("nonempty")).collect();
        rows = next_rows;
    }
    let pool = if finished.is_empty() {
        rows.into_iter().map(|(t, lp)| Hypothesis::new(t, lp)).collect()
    } else {
        finished
    };
    let best = pool
        .into_iter()
        .enumerate()
        .max_by(|(i, a), (j, b)| a.score.total_cmp(&b.score).then(j.cmp(i)))
        .map(|(_, h)| h)
        .expect("beam keeps at least one hypothesis");
    Ok(best)
}

/// Repeatedly appends the single most probable token.
pub fn greedy_decode(models: &[&ModelParams], source: &[u32], max_len: usize) -> Result<Hypothesis> {
    let mut members = start(models, source)?;
    let v = models[0].vocab.len();
    let mut tokens = Vec::new();
    let mut acc = 0.0;
    let mut prev = BOS;
    for _ in 0..max_len {
        let logp = step(&mut members, &[prev]);
        let (w, total) = (0..v)
            .filter(|&w| selectable(w))
            .map(|w| (w, acc + logp[w]))
            .fold((usize::MAX, f64::NEG_INFINITY), |best, x| match x.1.total_cmp(&best.1) {
                Ordering::Greater => x,
                _ => best,
            });
        tokens.push(w as u32);
        acc = total;
        if w as u32 == EOS {
            break;
        }
        prev = w as u32;
    }
    Ok(Hypothesis::new(tokens, acc))
}

/// Translates one tokenized (and tagged, for bi-directional models) sentence.
pub fn translate(models: &[&ModelParams], source: &Sentence, target: &Lang, cfg: &DecodeConfig) -> Result<(Sentence, Hypothesis)> {
    let vocab = &models.first().ok_or(Error::Empty("ensemble"))?.vocab;
    let ids = vocab.encode(source)?;
    let hyp = beam_decode(models, &ids, cfg)?;
    Ok((vocab.decode(&hyp.tokens, target.clone()), hyp))
}

/// [`translate`] over many sentences in parallel; output order follows input.
pub fn translate_all(models: &[&ModelParams], sources: &[Sentence], target: &Lang, cfg: &DecodeConfig) -> Vec<Result<Sentence>> {
    sources
        .par_iter()
        .map(|s| translate(models, s, target, cfg).map(|(t, _)| t))
        .collect()
}

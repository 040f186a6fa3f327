//! Bi-directional LSTM encoder, MLP-attention LSTM decoder with input
//! feeding, and the hand-written backward pass.
//!
//! Per decoder step `t` with previous state `s`, cell `m`, context `ctx`:
//!
//! ```text
//! s_t, m_t = LSTM([emb(y_{t-1}); ctx_{t-1}; s_{t-1}], m_{t-1})
//! a_tj     = v · tanh(Wq s_t + Wk h_j + b)        (masked softmax over j)
//! ctx_t    = Σ_j α_tj h_j
//! o_t      = tanh(LN(Wo [s_t; ctx_t] + bo))
//! p_t      = softmax(Out · o_t + b_out)
//! ```
//!
//! The initial decoder state is `tanh(W [→h_last; ←h_first] + b)`.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::linalg::{mm, mm_at_acc, mm_bt};
use super::params::{Dims, ModelParams, Offsets};
use super::vocab::{Vocab, BOS, EOS, PAD};
use crate::corpus::TaggedPair;
use crate::error::{Error, Result};

const LN_EPS: f64 = 1e-5;

/// A padded batch of id sequences. Targets are shifted: the decoder reads
/// `<s> y_1 .. y_m` and predicts `y_1 .. y_m </s>`.
#[derive(Clone, Debug)]
pub struct Batch {
    pub(crate) b: usize,
    pub(crate) ts: usize,
    pub(crate) tt: usize,
    pub(crate) src: Vec<u32>,
    pub(crate) src_len: Vec<usize>,
    pub(crate) tgt_in: Vec<u32>,
    pub(crate) tgt_out: Vec<u32>,
    pub(crate) tgt_mask: Vec<f64>,
}

impl Batch {
    pub fn new(seqs: &[(&[u32], &[u32])]) -> Result<Self> {
        if seqs.is_empty() {
            return Err(Error::Empty("batch"));
        }
        if seqs.iter().any(|(s, _)| s.is_empty()) {
            return Err(Error::Empty("source sentence"));
        }
        let b = seqs.len();
        let ts = seqs.iter().map(|(s, _)| s.len()).max().unwrap_or(0);
        let tt = seqs.iter().map(|(_, t)| t.len() + 1).max().unwrap_or(1);
        let mut batch = Batch {
            b,
            ts,
            tt,
            src: vec![PAD; b * ts],
            src_len: seqs.iter().map(|(s, _)| s.len()).collect(),
            tgt_in: vec![PAD; b * tt],
            tgt_out: vec![PAD; b * tt],
            tgt_mask: vec![0.0; b * tt],
        };
        for (i, (s, t)) in seqs.iter().enumerate() {
            batch.src[i * ts..i * ts + s.len()].copy_from_slice(s);
            batch.tgt_in[i * tt] = BOS;
            batch.tgt_in[i * tt + 1..i * tt + 1 + t.len()].copy_from_slice(t);
            batch.tgt_out[i * tt..i * tt + t.len()].copy_from_slice(t);
            batch.tgt_out[i * tt + t.len()] = EOS;
            batch.tgt_mask[i * tt..i * tt + t.len() + 1].fill(1.0);
        }
        Ok(batch)
    }

    pub fn from_pairs(vocab: &Vocab, pairs: &[TaggedPair]) -> Result<Self> {
        let ids = pairs
            .iter()
            .map(|p| Ok((vocab.encode(&p.source)?, vocab.encode(&p.target)?)))
            .collect::<Result<Vec<_>>>()?;
        let refs: Vec<(&[u32], &[u32])> = ids.iter().map(|(s, t)| (s.as_slice(), t.as_slice())).collect();
        Batch::new(&refs)
    }

    pub fn len(&self) -> usize {
        self.b
    }

    pub fn is_empty(&self) -> bool {
        self.b == 0
    }

    /// Predicted target tokens, end-of-sentence included.
    pub fn tokens(&self) -> usize {
        self.tgt_mask.iter().filter(|&&m| m > 0.0).count()
    }
}

#[derive(Clone, Debug)]
pub struct LossOutput {
    /// Mean negative log-likelihood per target token.
    pub loss: f64,
    pub tokens: usize,
    /// Gradient of `loss` in parameter storage order; present in train mode.
    pub grads: Option<Vec<f64>>,
}

/// Per-step distributions of an eval-mode pass, for inspection.
#[derive(Clone, Debug)]
pub struct Trace {
    pub batch: usize,
    pub src_len: usize,
    /// `attention[t]` is `batch × src_len`, row-major.
    pub attention: Vec<Vec<f64>>,
    /// `probs[t]` is `batch × vocab`.
    pub probs: Vec<Vec<f64>>,
}

/// Mean token NLL of `batch`. With `train` set, dropout masks are drawn from
/// it and gradients are returned.
pub fn forward_loss(params: &ModelParams, batch: &Batch, train: Option<&mut ChaCha8Rng>) -> Result<LossOutput> {
    check_ids(params, batch)?;
    let want_grad = train.is_some();
    let masks = Masks::draw(params, batch, train);
    let tape = forward(params, batch, &masks);
    let tokens = batch.tokens();
    let loss = tape.nll / tokens as f64;
    let grads = want_grad.then(|| backward(params, batch, &masks, &tape, tokens as f64));
    Ok(LossOutput { loss, tokens, grads })
}

pub fn forward_trace(params: &ModelParams, batch: &Batch) -> Result<Trace> {
    check_ids(params, batch)?;
    let tape = forward(params, batch, &Masks::default());
    Ok(Trace {
        batch: batch.b,
        src_len: batch.ts,
        attention: tape.dec.iter().map(|s| s.alpha.clone()).collect(),
        probs: tape.dec.iter().map(|s| s.out.logp.iter().map(|x| x.exp()).collect()).collect(),
    })
}

fn check_ids(params: &ModelParams, batch: &Batch) -> Result<()> {
    let v = params.vocab.len() as u32;
    match batch.src.iter().chain(&batch.tgt_in).find(|&&i| i >= v) {
        Some(i) => Err(Error::UnknownToken(format!("id {i}"))),
        None => Ok(()),
    }
}

#[derive(Default)]
struct Masks {
    src_emb: Option<Vec<f64>>,
    enc_out: Option<Vec<f64>>,
    tgt_emb: Option<Vec<f64>>,
    dec_state: Option<Vec<f64>>,
}

impl Masks {
    fn draw(params: &ModelParams, bt: &Batch, rng: Option<&mut ChaCha8Rng>) -> Self {
        let p = params.config.dropout;
        let Some(rng) = rng.filter(|_| p > 0.0) else {
            return Masks::default();
        };
        let d = params.layout().dims;
        let keep = 1.0 / (1.0 - p);
        let mut draw = |n: usize| -> Option<Vec<f64>> {
            Some((0..n).map(|_| if rng.gen::<f64>() < p { 0.0 } else { keep }).collect())
        };
        Masks {
            src_emb: draw(bt.b * bt.ts * d.e),
            enc_out: draw(bt.b * bt.ts * d.c),
            tgt_emb: draw(bt.b * bt.tt * d.e),
            dec_state: draw(bt.b * bt.tt * d.h),
        }
    }
}

fn apply_mask(x: &mut [f64], m: &Option<Vec<f64>>) {
    if let Some(m) = m {
        x.iter_mut().zip(m).for_each(|(a, b)| *a *= b);
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn gather(table: &[f64], ids: &[u32], width: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(ids.len() * width);
    for &i in ids {
        out.extend_from_slice(&table[i as usize * width..(i as usize + 1) * width]);
    }
    out
}

fn add_rows(rows: usize, x: &mut [f64], bias: &[f64]) {
    let n = bias.len();
    for r in 0..rows {
        x[r * n..(r + 1) * n].iter_mut().zip(bias).for_each(|(a, b)| *a += b);
    }
}

fn sum_rows(rows: usize, x: &[f64], acc: &mut [f64]) {
    let n = acc.len();
    for r in 0..rows {
        acc.iter_mut().zip(&x[r * n..(r + 1) * n]).for_each(|(a, b)| *a += b);
    }
}

/// Gate pre-activations `[i f o u]` are replaced by their activations.
fn lstm_cell(h: usize, gates: &mut [f64], c_prev: &[f64], c: &mut [f64], tc: &mut [f64], out: &mut [f64]) {
    for (r, g) in gates.chunks_exact_mut(4 * h).enumerate() {
        for j in 0..h {
            let i = sigmoid(g[j]);
            let f = sigmoid(g[h + j]);
            let o = sigmoid(g[2 * h + j]);
            let u = g[3 * h + j].tanh();
            g[j] = i;
            g[h + j] = f;
            g[2 * h + j] = o;
            g[3 * h + j] = u;
            let k = r * h + j;
            c[k] = f * c_prev[k] + i * u;
            tc[k] = c[k].tanh();
            out[k] = o * tc[k];
        }
    }
}

/// Backward through [`lstm_cell`] for the rows where `valid` holds. `dc`
/// carries the cell gradient in and the gradient w.r.t. `c_prev` out; rows
/// that are not valid get zero gate gradients and pass `dc` through.
fn lstm_cell_backward(
    h: usize,
    gates: &[f64],
    tc: &[f64],
    c_prev: &[f64],
    dh: &[f64],
    dc: &mut [f64],
    dg: &mut [f64],
    valid: impl Fn(usize) -> bool,
) {
    for (r, g) in gates.chunks_exact(4 * h).enumerate() {
        let dgr = &mut dg[r * 4 * h..(r + 1) * 4 * h];
        if !valid(r) {
            dgr.fill(0.0);
            continue;
        }
        for j in 0..h {
            let k = r * h + j;
            let (i, f, o, u) = (g[j], g[h + j], g[2 * h + j], g[3 * h + j]);
            let dct = dc[k] + dh[k] * o * (1.0 - tc[k] * tc[k]);
            dgr[j] = dct * u * i * (1.0 - i);
            dgr[h + j] = dct * c_prev[k] * f * (1.0 - f);
            dgr[2 * h + j] = dh[k] * tc[k] * o * (1.0 - o);
            dgr[3 * h + j] = dct * i * (1.0 - u * u);
            dc[k] = dct * f;
        }
    }
}

/// Source-side memory shared by every decoder row.
pub(crate) struct Memory {
    pub ts: usize,
    pub lens: Vec<usize>,
    /// Encoder outputs after dropout, `sources × ts × c`.
    pub hd: Vec<f64>,
    /// `Wk h + b`, `sources × ts × a`.
    pub keys: Vec<f64>,
}

/// Additive attention for `rows` queries; row `r` attends over source
/// `src_of(r)`. Writes `tanh` activations, weights and contexts.
#[allow(clippy::too_many_arguments)]
fn attend(
    d: &Dims,
    mem: &Memory,
    src_of: &dyn Fn(usize) -> usize,
    v: &[f64],
    q: &[f64],
    th: &mut [f64],
    alpha: &mut [f64],
    ctx: &mut [f64],
) {
    let (a, c, ts) = (d.a, d.c, mem.ts);
    let rows = q.len() / a;
    th.fill(0.0);
    alpha.fill(0.0);
    ctx.fill(0.0);
    for r in 0..rows {
        let s = src_of(r);
        let len = mem.lens[s];
        let qr = &q[r * a..(r + 1) * a];
        let al = &mut alpha[r * ts..(r + 1) * ts];
        for j in 0..len {
            let key = &mem.keys[(s * ts + j) * a..(s * ts + j + 1) * a];
            let t = &mut th[(r * ts + j) * a..(r * ts + j + 1) * a];
            let mut score = 0.0;
            for k in 0..a {
                t[k] = (qr[k] + key[k]).tanh();
                score += t[k] * v[k];
            }
            al[j] = score;
        }
        let max = al[..len].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for x in &mut al[..len] {
            *x = (*x - max).exp();
            z += *x;
        }
        al[..len].iter_mut().for_each(|x| *x /= z);
        let cr = &mut ctx[r * c..(r + 1) * c];
        for j in 0..len {
            let hj = &mem.hd[(s * ts + j) * c..(s * ts + j + 1) * c];
            cr.iter_mut().zip(hj).for_each(|(x, y)| *x += al[j] * y);
        }
    }
}

/// Buffers of the output layer for a block of rows.
pub(crate) struct OutStep {
    pub nrm: Vec<f64>,
    pub inv: Vec<f64>,
    pub out: Vec<f64>,
    pub logp: Vec<f64>,
}

fn output_layer(p: &[f64], o: &Offsets, d: &Dims, rows: usize, hid_in: &[f64]) -> OutStep {
    let e = d.e;
    let mut pre = vec![0.0; rows * e];
    mm_bt(rows, d.h + d.c, e, hid_in, &p[o.hid_w.clone()], 0.0, &mut pre);
    add_rows(rows, &mut pre, &p[o.hid_b.clone()]);
    let mut inv = Vec::new();
    let mut nrm = Vec::new();
    if let Some((g, b)) = &o.ln {
        let (g, b) = (&p[g.clone()], &p[b.clone()]);
        nrm = pre.clone();
        for (r, x) in nrm.chunks_exact_mut(e).enumerate() {
            let mean = x.iter().sum::<f64>() / e as f64;
            let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / e as f64;
            let is = 1.0 / (var + LN_EPS).sqrt();
            inv.push(is);
            x.iter_mut().for_each(|v| *v = (*v - mean) * is);
            for k in 0..e {
                pre[r * e + k] = g[k] * x[k] + b[k];
            }
        }
    }
    let out: Vec<f64> = pre.iter().map(|x| x.tanh()).collect();
    let mut logp = vec![0.0; rows * d.v];
    mm_bt(rows, e, d.v, &out, &p[o.out_w.clone()], 0.0, &mut logp);
    add_rows(rows, &mut logp, &p[o.out_b.clone()]);
    for row in logp.chunks_exact_mut(d.v) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
        row.iter_mut().for_each(|x| *x -= lse);
    }
    OutStep { nrm, inv, out, logp }
}

struct EncDir {
    z: Vec<Vec<f64>>,
    gates: Vec<Vec<f64>>,
    tc: Vec<Vec<f64>>,
    /// States before step 0 and after every step.
    c: Vec<Vec<f64>>,
    h: Vec<Vec<f64>>,
}

struct Encoded {
    dirs: [EncDir; 2],
    mem: Memory,
    init_in: Vec<f64>,
    s0: Vec<f64>,
}

fn encode(p: &[f64], o: &Offsets, d: &Dims, src: &[u32], lens: &[usize], ts: usize, masks: &Masks) -> Encoded {
    let (e, h, c) = (d.e, d.h, d.c);
    let b = lens.len();
    let mut x = gather(&p[o.embed.clone()], src, e);
    apply_mask(&mut x, &masks.src_emb);
    let run = |dir: usize| {
        let w = &p[o.enc_w[dir].clone()];
        let bias = &p[o.enc_b[dir].clone()];
        let mut st = EncDir {
            z: Vec::with_capacity(ts),
            gates: Vec::with_capacity(ts),
            tc: Vec::with_capacity(ts),
            c: vec![vec![0.0; b * h]],
            h: vec![vec![0.0; b * h]],
        };
        for k in 0..ts {
            let t = if dir == 0 { k } else { ts - 1 - k };
            let hp = &st.h[k];
            let mut z = vec![0.0; b * (e + h)];
            for r in 0..b {
                z[r * (e + h)..r * (e + h) + e].copy_from_slice(&x[(r * ts + t) * e..(r * ts + t + 1) * e]);
                z[r * (e + h) + e..(r + 1) * (e + h)].copy_from_slice(&hp[r * h..(r + 1) * h]);
            }
            let mut g = vec![0.0; b * 4 * h];
            mm_bt(b, e + h, 4 * h, &z, w, 0.0, &mut g);
            add_rows(b, &mut g, bias);
            let (mut cn, mut tc, mut hn) = (vec![0.0; b * h], vec![0.0; b * h], vec![0.0; b * h]);
            lstm_cell(h, &mut g, &st.c[k], &mut cn, &mut tc, &mut hn);
            for r in (0..b).filter(|&r| t >= lens[r]) {
                cn[r * h..(r + 1) * h].copy_from_slice(&st.c[k][r * h..(r + 1) * h]);
                hn[r * h..(r + 1) * h].copy_from_slice(&st.h[k][r * h..(r + 1) * h]);
            }
            st.z.push(z);
            st.gates.push(g);
            st.tc.push(tc);
            st.c.push(cn);
            st.h.push(hn);
        }
        st
    };
    let dirs = [run(0), run(1)];
    let mut hd = vec![0.0; b * ts * c];
    for r in 0..b {
        for t in 0..ts {
            let dst = &mut hd[(r * ts + t) * c..(r * ts + t + 1) * c];
            dst[..h].copy_from_slice(&dirs[0].h[t + 1][r * h..(r + 1) * h]);
            dst[h..].copy_from_slice(&dirs[1].h[ts - t][r * h..(r + 1) * h]);
        }
    }
    apply_mask(&mut hd, &masks.enc_out);
    let mut keys = vec![0.0; b * ts * d.a];
    mm_bt(b * ts, c, d.a, &hd, &p[o.att_k.clone()], 0.0, &mut keys);
    add_rows(b * ts, &mut keys, &p[o.att_b.clone()]);
    let mut init_in = vec![0.0; b * c];
    for r in 0..b {
        init_in[r * c..r * c + h].copy_from_slice(&dirs[0].h[ts][r * h..(r + 1) * h]);
        init_in[r * c + h..(r + 1) * c].copy_from_slice(&dirs[1].h[ts][r * h..(r + 1) * h]);
    }
    let mut s0 = vec![0.0; b * h];
    mm_bt(b, c, h, &init_in, &p[o.init_w.clone()], 0.0, &mut s0);
    add_rows(b, &mut s0, &p[o.init_b.clone()]);
    s0.iter_mut().for_each(|x| *x = x.tanh());
    Encoded {
        dirs,
        mem: Memory {
            ts,
            lens: lens.to_vec(),
            hd,
            keys,
        },
        init_in,
        s0,
    }
}

/// Decoder state for a block of rows.
#[derive(Clone)]
pub(crate) struct DecState {
    pub s: Vec<f64>,
    pub cell: Vec<f64>,
    pub ctx: Vec<f64>,
}

struct DecStep {
    z: Vec<f64>,
    gates: Vec<f64>,
    tc: Vec<f64>,
    s_d: Vec<f64>,
    th: Vec<f64>,
    alpha: Vec<f64>,
    hid_in: Vec<f64>,
    out: OutStep,
    next: DecState,
}

/// One decoder step for `rows` rows given already-embedded inputs.
#[allow(clippy::too_many_arguments)]
fn decoder_step(
    p: &[f64],
    o: &Offsets,
    d: &Dims,
    mem: &Memory,
    src_of: &dyn Fn(usize) -> usize,
    emb: &[f64],
    prev: &DecState,
    state_mask: Option<&[f64]>,
) -> DecStep {
    let (e, h, c, a) = (d.e, d.h, d.c, d.a);
    let rows = prev.s.len() / h;
    let zw = e + c + h;
    let mut z = vec![0.0; rows * zw];
    for r in 0..rows {
        z[r * zw..r * zw + e].copy_from_slice(&emb[r * e..(r + 1) * e]);
        z[r * zw + e..r * zw + e + c].copy_from_slice(&prev.ctx[r * c..(r + 1) * c]);
        z[r * zw + e + c..(r + 1) * zw].copy_from_slice(&prev.s[r * h..(r + 1) * h]);
    }
    let mut gates = vec![0.0; rows * 4 * h];
    mm_bt(rows, zw, 4 * h, &z, &p[o.dec_w.clone()], 0.0, &mut gates);
    add_rows(rows, &mut gates, &p[o.dec_b.clone()]);
    let (mut cell, mut tc, mut s) = (vec![0.0; rows * h], vec![0.0; rows * h], vec![0.0; rows * h]);
    lstm_cell(h, &mut gates, &prev.cell, &mut cell, &mut tc, &mut s);
    let mut s_d = s.clone();
    if let Some(m) = state_mask {
        s_d.iter_mut().zip(m).for_each(|(x, y)| *x *= y);
    }
    let mut q = vec![0.0; rows * a];
    mm_bt(rows, h, a, &s_d, &p[o.att_q.clone()], 0.0, &mut q);
    let mut th = vec![0.0; rows * mem.ts * a];
    let mut alpha = vec![0.0; rows * mem.ts];
    let mut ctx = vec![0.0; rows * c];
    attend(d, mem, src_of, &p[o.att_v.clone()], &q, &mut th, &mut alpha, &mut ctx);
    let hw = h + c;
    let mut hid_in = vec![0.0; rows * hw];
    for r in 0..rows {
        hid_in[r * hw..r * hw + h].copy_from_slice(&s_d[r * h..(r + 1) * h]);
        hid_in[r * hw + h..(r + 1) * hw].copy_from_slice(&ctx[r * c..(r + 1) * c]);
    }
    let out = output_layer(p, o, d, rows, &hid_in);
    DecStep {
        z,
        gates,
        tc,
        s_d,
        th,
        alpha,
        hid_in,
        out,
        next: DecState { s, cell, ctx },
    }
}

struct Tape {
    enc: Encoded,
    /// `states[t]` is the decoder state entering step `t`.
    states: Vec<DecState>,
    dec: Vec<DecStep>,
    nll: f64,
}

/// Rows `b*tt + t` for fixed `t`.
fn step_rows(x: &[f64], b: usize, tt: usize, t: usize, width: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(b * width);
    for r in 0..b {
        out.extend_from_slice(&x[(r * tt + t) * width..(r * tt + t + 1) * width]);
    }
    out
}

fn forward(params: &ModelParams, bt: &Batch, masks: &Masks) -> Tape {
    let p = params.values();
    let lay = params.layout();
    let (o, d) = (&lay.off, &lay.dims);
    let enc = encode(p, o, d, &bt.src, &bt.src_len, bt.ts, masks);
    let mut tgt_emb = gather(&p[o.embed.clone()], &bt.tgt_in, d.e);
    apply_mask(&mut tgt_emb, &masks.tgt_emb);
    let mut states = vec![DecState {
        s: enc.s0.clone(),
        cell: vec![0.0; bt.b * d.h],
        ctx: vec![0.0; bt.b * d.c],
    }];
    let mut dec = Vec::with_capacity(bt.tt);
    let mut nll = 0.0;
    for t in 0..bt.tt {
        let emb = step_rows(&tgt_emb, bt.b, bt.tt, t, d.e);
        let sm = masks.dec_state.as_ref().map(|m| step_rows(m, bt.b, bt.tt, t, d.h));
        let step = decoder_step(p, o, d, &enc.mem, &|r| r, &emb, &states[t], sm.as_deref());
        for r in 0..bt.b {
            let k = r * bt.tt + t;
            if bt.tgt_mask[k] > 0.0 {
                nll -= step.out.logp[r * d.v + bt.tgt_out[k] as usize];
            }
        }
        states.push(step.next.clone());
        dec.push(step);
    }
    Tape {
        enc,
        states,
        dec,
        nll,
    }
}

fn backward(params: &ModelParams, bt: &Batch, masks: &Masks, tape: &Tape, n_tokens: f64) -> Vec<f64> {
    let p = params.values();
    let lay = params.layout();
    let (o, d) = (&lay.off, &lay.dims);
    let (v, e, h, c, a) = (d.v, d.e, d.h, d.c, d.a);
    let (b, ts, tt) = (bt.b, bt.ts, bt.tt);
    let mut g = vec![0.0; lay.len()];
    let mem = &tape.enc.mem;

    let mut d_keys = vec![0.0; b * ts * a];
    let mut d_hd = vec![0.0; b * ts * c];
    let mut d_tgt_emb = vec![0.0; b * tt * e];
    let mut dctx_carry = vec![0.0; b * c];
    let mut ds_carry = vec![0.0; b * h];
    let mut dcell = vec![0.0; b * h];
    let hw = h + c;
    let zw = e + c + h;

    for t in (0..tt).rev() {
        let st = &tape.dec[t];
        // Output softmax and projection.
        let mut dlog = vec![0.0; b * v];
        for r in 0..b {
            let k = r * tt + t;
            let m = bt.tgt_mask[k];
            if m == 0.0 {
                continue;
            }
            let row = &mut dlog[r * v..(r + 1) * v];
            for (x, lp) in row.iter_mut().zip(&st.out.logp[r * v..(r + 1) * v]) {
                *x = lp.exp() * m / n_tokens;
            }
            row[bt.tgt_out[k] as usize] -= m / n_tokens;
        }
        sum_rows(b, &dlog, &mut g[o.out_b.clone()]);
        mm_at_acc(b, v, e, &dlog, &st.out.out, &mut g[o.out_w.clone()]);
        let mut dy = vec![0.0; b * e];
        mm(b, v, e, &dlog, &p[o.out_w.clone()], 0.0, &mut dy);
        for (x, y) in dy.iter_mut().zip(&st.out.out) {
            *x *= 1.0 - y * y;
        }
        let dpre = if let Some((gr, br)) = &o.ln {
            let gain = &p[gr.clone()];
            let mut dpre = vec![0.0; b * e];
            for r in 0..b {
                let n = &st.out.nrm[r * e..(r + 1) * e];
                let dyr = &dy[r * e..(r + 1) * e];
                for k in 0..e {
                    g[gr.start + k] += dyr[k] * n[k];
                    g[br.start + k] += dyr[k];
                }
                let dn: Vec<f64> = (0..e).map(|k| dyr[k] * gain[k]).collect();
                let mean_dn = dn.iter().sum::<f64>() / e as f64;
                let mean_dnn = dn.iter().zip(n).map(|(x, y)| x * y).sum::<f64>() / e as f64;
                for k in 0..e {
                    dpre[r * e + k] = st.out.inv[r] * (dn[k] - mean_dn - n[k] * mean_dnn);
                }
            }
            dpre
        } else {
            dy
        };
        sum_rows(b, &dpre, &mut g[o.hid_b.clone()]);
        mm_at_acc(b, e, hw, &dpre, &st.hid_in, &mut g[o.hid_w.clone()]);
        let mut dhid = vec![0.0; b * hw];
        mm(b, e, hw, &dpre, &p[o.hid_w.clone()], 0.0, &mut dhid);

        let mut ds_d = vec![0.0; b * h];
        let mut dctx = dctx_carry.clone();
        for r in 0..b {
            ds_d[r * h..(r + 1) * h].copy_from_slice(&dhid[r * hw..r * hw + h]);
            dctx[r * c..(r + 1) * c].iter_mut().zip(&dhid[r * hw + h..(r + 1) * hw]).for_each(|(x, y)| *x += y);
        }

        // Attention.
        let att_v = &p[o.att_v.clone()];
        let mut dq = vec![0.0; b * a];
        for r in 0..b {
            let len = mem.lens[r];
            let al = &st.alpha[r * ts..(r + 1) * ts];
            let dcr = &dctx[r * c..(r + 1) * c];
            let mut dal = vec![0.0; len];
            for j in 0..len {
                let base = (r * ts + j) * c;
                let hj = &mem.hd[base..base + c];
                dal[j] = dcr.iter().zip(hj).map(|(x, y)| x * y).sum();
                d_hd[base..base + c].iter_mut().zip(dcr).for_each(|(x, y)| *x += al[j] * y);
            }
            let dot: f64 = (0..len).map(|j| al[j] * dal[j]).sum();
            for j in 0..len {
                let ds = al[j] * (dal[j] - dot);
                let base = (r * ts + j) * a;
                let th = &st.th[base..base + a];
                for k in 0..a {
                    g[o.att_v.start + k] += ds * th[k];
                    let dp = ds * att_v[k] * (1.0 - th[k] * th[k]);
                    dq[r * a + k] += dp;
                    d_keys[base + k] += dp;
                }
            }
        }
        mm_at_acc(b, a, h, &dq, &st.s_d, &mut g[o.att_q.clone()]);
        mm(b, a, h, &dq, &p[o.att_q.clone()], 1.0, &mut ds_d);

        // Decoder LSTM.
        if let Some(m) = &masks.dec_state {
            let sm = step_rows(m, b, tt, t, h);
            ds_d.iter_mut().zip(&sm).for_each(|(x, y)| *x *= y);
        }
        let mut ds = ds_d;
        ds.iter_mut().zip(&ds_carry).for_each(|(x, y)| *x += y);
        let mut dg = vec![0.0; b * 4 * h];
        lstm_cell_backward(h, &st.gates, &st.tc, &tape.states[t].cell, &ds, &mut dcell, &mut dg, |_| true);
        sum_rows(b, &dg, &mut g[o.dec_b.clone()]);
        mm_at_acc(b, 4 * h, zw, &dg, &st.z, &mut g[o.dec_w.clone()]);
        let mut dz = vec![0.0; b * zw];
        mm(b, 4 * h, zw, &dg, &p[o.dec_w.clone()], 0.0, &mut dz);
        for r in 0..b {
            let k = r * tt + t;
            d_tgt_emb[k * e..(k + 1) * e].copy_from_slice(&dz[r * zw..r * zw + e]);
            dctx_carry[r * c..(r + 1) * c].copy_from_slice(&dz[r * zw + e..r * zw + e + c]);
            ds_carry[r * h..(r + 1) * h].copy_from_slice(&dz[r * zw + e + c..(r + 1) * zw]);
        }
    }

    // Initial decoder state.
    let s0 = &tape.enc.s0;
    let dpre0: Vec<f64> = ds_carry.iter().zip(s0).map(|(x, y)| x * (1.0 - y * y)).collect();
    sum_rows(b, &dpre0, &mut g[o.init_b.clone()]);
    mm_at_acc(b, h, c, &dpre0, &tape.enc.init_in, &mut g[o.init_w.clone()]);
    let mut d_init_in = vec![0.0; b * c];
    mm(b, h, c, &dpre0, &p[o.init_w.clone()], 0.0, &mut d_init_in);

    // Attention keys.
    sum_rows(b * ts, &d_keys, &mut g[o.att_b.clone()]);
    mm_at_acc(b * ts, a, c, &d_keys, &mem.hd, &mut g[o.att_k.clone()]);
    mm(b * ts, a, c, &d_keys, &p[o.att_k.clone()], 1.0, &mut d_hd);
    apply_mask(&mut d_hd, &masks.enc_out);

    // Encoder.
    let mut dx = vec![0.0; b * ts * e];
    for dir in 0..2 {
        let st = &tape.enc.dirs[dir];
        let mut dh_carry = vec![0.0; b * h];
        for r in 0..b {
            dh_carry[r * h..(r + 1) * h].copy_from_slice(&d_init_in[r * c + dir * h..r * c + (dir + 1) * h]);
        }
        let mut dc = vec![0.0; b * h];
        let ew = e + h;
        for k in (0..ts).rev() {
            let t = if dir == 0 { k } else { ts - 1 - k };
            let mut dh = dh_carry.clone();
            for r in 0..b {
                let src = &d_hd[(r * ts + t) * c + dir * h..(r * ts + t) * c + (dir + 1) * h];
                dh[r * h..(r + 1) * h].iter_mut().zip(src).for_each(|(x, y)| *x += y);
            }
            let valid = |r: usize| t < bt.src_len[r];
            let mut dg = vec![0.0; b * 4 * h];
            lstm_cell_backward(h, &st.gates[k], &st.tc[k], &st.c[k], &dh, &mut dc, &mut dg, valid);
            sum_rows(b, &dg, &mut g[o.enc_b[dir].clone()]);
            mm_at_acc(b, 4 * h, ew, &dg, &st.z[k], &mut g[o.enc_w[dir].clone()]);
            let mut dz = vec![0.0; b * ew];
            mm(b, 4 * h, ew, &dg, &p[o.enc_w[dir].clone()], 0.0, &mut dz);
            for r in 0..b {
                let dxr = &mut dx[(r * ts + t) * e..(r * ts + t + 1) * e];
                dxr.iter_mut().zip(&dz[r * ew..r * ew + e]).for_each(|(x, y)| *x += y);
                let carry = &mut dh_carry[r * h..(r + 1) * h];
                if valid(r) {
                    carry.copy_from_slice(&dz[r * ew + e..(r + 1) * ew]);
                } else {
                    carry.copy_from_slice(&dh[r * h..(r + 1) * h]);
                }
            }
        }
    }

    // Embedding rows.
    apply_mask(&mut dx, &masks.src_emb);
    apply_mask(&mut d_tgt_emb, &masks.tgt_emb);
    let ge = o.embed.start;
    let scatter = |g: &mut [f64], ids: &[u32], dx: &[f64]| {
        for (i, &id) in ids.iter().enumerate() {
            let row = &mut g[ge + id as usize * e..ge + (id as usize + 1) * e];
            row.iter_mut().zip(&dx[i * e..(i + 1) * e]).for_each(|(x, y)| *x += y);
        }
    };
    scatter(&mut g, &bt.src, &dx);
    scatter(&mut g, &bt.tgt_in, &d_tgt_emb);
    g
}

/// Encoded source for decoding: memory plus the initial decoder state.
pub(crate) struct SourceEncoding {
    pub mem: Memory,
    pub init: DecState,
}

pub(crate) fn encode_source(params: &ModelParams, src: &[u32]) -> SourceEncoding {
    let lay = params.layout();
    let (o, d) = (&lay.off, &lay.dims);
    let enc = encode(params.values(), o, d, src, &[src.len()], src.len(), &Masks::default());
    SourceEncoding {
        init: DecState {
            s: enc.s0,
            cell: vec![0.0; d.h],
            ctx: vec![0.0; d.c],
        },
        mem: enc.mem,
    }
}

/// Advances every row by one token; returns log-probabilities `rows × V`.
pub(crate) fn decode_step(params: &ModelParams, src: &SourceEncoding, prev: &DecState, tokens: &[u32]) -> (Vec<f64>, DecState) {
    let p = params.values();
    let lay = params.layout();
    let emb = gather(&p[lay.off.embed.clone()], tokens, lay.dims.e);
    let st = decoder_step(p, &lay.off, &lay.dims, &src.mem, &|_| 0, &emb, prev, None);
    (st.out.logp, st.next)
}

impl DecState {
    /// Rows picked (with repetition) by `parents`.
    pub(crate) fn select(&self, parents: &[usize], h: usize, c: usize) -> DecState {
        let pick = |x: &[f64], w: usize| {
            let mut out = Vec::with_capacity(parents.len() * w);
            for &r in parents {
                out.extend_from_slice(&x[r * w..(r + 1) * w]);
            }
            out
        };
        DecState {
            s: pick(&self.s, h),
            cell: pick(&self.cell, h),
            ctx: pick(&self.ctx, c),
        }
    }
}

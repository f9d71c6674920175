//! Forward and backward passes.
//!
//! Encoder: bidirectional LSTM over source embeddings with `</s>` appended.
//! Bridge: `s0 = tanh(W [h_fwd_last; h_bwd_first] + b)`, `c0 = 0`.
//! Decoder step `t`, fed `[emb(y_{t-1}); tilde_{t-1}]`:
//!
//! ```text
//! s_t      = LSTM(input, s_{t-1})
//! e_tj     = v · tanh(Wk h_j + Wq s_t + b)      alpha_t = softmax(e_t)
//! ctx_t    = Σ_j alpha_tj h_j
//! tilde_t  = tanh(LayerNorm(Wo [s_t; ctx_t] + bo))
//! p_t      = softmax(Emb · tilde_t + logit_bias)
//! ```
//!
//! Dropout (inverted) hits the embeddings and the RNN outputs `h_j`, `s_t`.

use std::sync::Arc;

use fsmt_core::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::params::{Params, Tensor};

const LN_EPS: f64 = 1e-5;
/// Examples per gradient shard; shards are summed in order.
const CHUNK: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Source and target ids without the closing `</s>`, which the model adds.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Example {
    pub src: Vec<u32>,
    pub tgt: Vec<u32>,
}

impl Example {
    /// Number of predicted tokens, including `</s>`.
    pub fn target_tokens(&self) -> usize {
        self.tgt.len() + 1
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// out += W x for row-major W (rows × cols).
fn matvec_acc(w: &[f64], rows: usize, cols: usize, x: &[f64], out: &mut [f64]) {
    for r in 0..rows {
        out[r] += dot(&w[r * cols..(r + 1) * cols], x);
    }
}

/// out += Wᵀ g.
fn matvec_t_acc(w: &[f64], rows: usize, cols: usize, g: &[f64], out: &mut [f64]) {
    for r in 0..rows {
        let gr = g[r];
        if gr == 0.0 {
            continue;
        }
        for (o, wv) in out.iter_mut().zip(&w[r * cols..(r + 1) * cols]) {
            *o += gr * wv;
        }
    }
}

/// dW += g xᵀ.
fn outer_acc(dw: &mut [f64], rows: usize, cols: usize, g: &[f64], x: &[f64]) {
    for r in 0..rows {
        let gr = g[r];
        if gr == 0.0 {
            continue;
        }
        for (d, xv) in dw[r * cols..(r + 1) * cols].iter_mut().zip(x) {
            *d += gr * xv;
        }
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

fn softmax_in_place(v: &mut [f64]) {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut z = 0.0;
    for x in v.iter_mut() {
        *x = (*x - m).exp();
        z += *x;
    }
    for x in v.iter_mut() {
        *x /= z;
    }
}

type Mask = Option<Vec<f64>>;

fn apply(v: &mut [f64], m: &Mask) {
    if let Some(m) = m {
        for (x, k) in v.iter_mut().zip(m) {
            *x *= k;
        }
    }
}

/// Inverted-dropout masks from a per-example stream.
struct Dropout {
    p: f64,
    rng: ChaCha8Rng,
}

impl Dropout {
    fn new(p: f64, seed: u64, update: u64, example: u64) -> Option<Dropout> {
        if p == 0.0 {
            return None;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ update.wrapping_mul(0x9E37_79B9_7F4A_7C15));
        rng.set_stream(example);
        Some(Dropout { p, rng })
    }

    fn mask(this: &mut Option<Dropout>, n: usize) -> Mask {
        let d = this.as_mut()?;
        let keep = 1.0 / (1.0 - d.p);
        Some(
            (0..n)
                .map(|_| if d.rng.random::<f64>() < d.p { 0.0 } else { keep })
                .collect(),
        )
    }
}

#[derive(Debug, Clone)]
struct LstmStep {
    xh: Vec<f64>,
    /// Activated gates i, f, g, o.
    gates: Vec<f64>,
    c_prev: Vec<f64>,
    c: Vec<f64>,
    tanh_c: Vec<f64>,
    h: Vec<f64>,
}

fn lstm_forward(w: &[f64], b: &[f64], hd: usize, x: &[f64], h_prev: &[f64], c_prev: &[f64]) -> LstmStep {
    let n_in = x.len() + hd;
    let mut xh = Vec::with_capacity(n_in);
    xh.extend_from_slice(x);
    xh.extend_from_slice(h_prev);
    let mut z = b.to_vec();
    matvec_acc(w, 4 * hd, n_in, &xh, &mut z);
    let mut c = vec![0.0; hd];
    let mut tanh_c = vec![0.0; hd];
    let mut h = vec![0.0; hd];
    for k in 0..hd {
        z[k] = sigmoid(z[k]);
        z[hd + k] = sigmoid(z[hd + k]);
        z[2 * hd + k] = z[2 * hd + k].tanh();
        z[3 * hd + k] = sigmoid(z[3 * hd + k]);
        c[k] = z[hd + k] * c_prev[k] + z[k] * z[2 * hd + k];
        tanh_c[k] = c[k].tanh();
        h[k] = z[3 * hd + k] * tanh_c[k];
    }
    LstmStep {
        xh,
        gates: z,
        c_prev: c_prev.to_vec(),
        c,
        tanh_c,
        h,
    }
}

/// Accumulates weight gradients; writes d[x; h_prev] into `dxh` and dc_prev into `dc_prev`.
#[allow(clippy::too_many_arguments)]
fn lstm_backward(
    w: &[f64],
    hd: usize,
    st: &LstmStep,
    dh: &[f64],
    dc: &[f64],
    dw: &mut [f64],
    db: &mut [f64],
    dxh: &mut [f64],
    dc_prev: &mut [f64],
) {
    let n_in = st.xh.len();
    let g = &st.gates;
    let mut dz = vec![0.0; 4 * hd];
    for k in 0..hd {
        let (i, f, gg, o) = (g[k], g[hd + k], g[2 * hd + k], g[3 * hd + k]);
        let tc = st.tanh_c[k];
        let dct = dc[k] + dh[k] * o * (1.0 - tc * tc);
        dz[k] = dct * gg * i * (1.0 - i);
        dz[hd + k] = dct * st.c_prev[k] * f * (1.0 - f);
        dz[2 * hd + k] = dct * i * (1.0 - gg * gg);
        dz[3 * hd + k] = dh[k] * tc * o * (1.0 - o);
        dc_prev[k] = dct * f;
    }
    outer_acc(dw, 4 * hd, n_in, &dz, &st.xh);
    add_into(db, &dz);
    dxh.fill(0.0);
    matvec_t_acc(w, 4 * hd, n_in, &dz, dxh);
}

/// Encoder output plus what backpropagation needs.
#[derive(Debug, Clone)]
pub struct Encoded {
    src: Vec<u32>,
    emb_masks: Vec<Mask>,
    fwd: Vec<LstmStep>,
    bwd: Vec<LstmStep>,
    h_masks: Vec<Mask>,
    /// Encoder states after dropout, `[fwd; bwd]` per position.
    hd: Vec<Vec<f64>>,
    keys: Vec<Vec<f64>>,
    bridge_in: Vec<f64>,
    s0: Vec<f64>,
}

impl Encoded {
    pub fn len(&self) -> usize {
        self.src.len()
    }

    pub fn is_empty(&self) -> bool {
        self.src.is_empty()
    }
}

fn encode(p: &Params, src: &[u32], drop: &mut Option<Dropout>) -> Encoded {
    let d = p.dims();
    let eos = p.config.vocab.eos();
    let mut ids = src.to_vec();
    ids.push(eos);
    let s = ids.len();
    let emb = p.get(Tensor::Embedding);
    let mut xs = Vec::with_capacity(s);
    let mut emb_masks = Vec::with_capacity(s);
    for &id in &ids {
        let mut x = emb[id as usize * d.e..(id as usize + 1) * d.e].to_vec();
        let m = Dropout::mask(drop, d.e);
        apply(&mut x, &m);
        xs.push(x);
        emb_masks.push(m);
    }
    let zero = vec![0.0; d.h];
    let (wf, bf) = (p.get(Tensor::EncFwdW), p.get(Tensor::EncFwdB));
    let mut fwd: Vec<LstmStep> = Vec::with_capacity(s);
    for x in &xs {
        let (h, c) = fwd.last().map_or((&zero, &zero), |st| (&st.h, &st.c));
        fwd.push(lstm_forward(wf, bf, d.h, x, h, c));
    }
    let (wb, bb) = (p.get(Tensor::EncBwdW), p.get(Tensor::EncBwdB));
    let mut bwd_rev: Vec<LstmStep> = Vec::with_capacity(s);
    for x in xs.iter().rev() {
        let (h, c) = bwd_rev.last().map_or((&zero, &zero), |st| (&st.h, &st.c));
        bwd_rev.push(lstm_forward(wb, bb, d.h, x, h, c));
    }
    bwd_rev.reverse();
    let bwd = bwd_rev;

    let wk = p.get(Tensor::AttKey);
    let mut hd = Vec::with_capacity(s);
    let mut h_masks = Vec::with_capacity(s);
    let mut keys = Vec::with_capacity(s);
    for j in 0..s {
        let mut h = fwd[j].h.clone();
        h.extend_from_slice(&bwd[j].h);
        let m = Dropout::mask(drop, 2 * d.h);
        apply(&mut h, &m);
        let mut k = vec![0.0; d.a];
        matvec_acc(wk, d.a, 2 * d.h, &h, &mut k);
        hd.push(h);
        h_masks.push(m);
        keys.push(k);
    }
    let mut bridge_in = fwd[s - 1].h.clone();
    bridge_in.extend_from_slice(&bwd[0].h);
    let mut s0 = p.get(Tensor::BridgeB).to_vec();
    matvec_acc(p.get(Tensor::BridgeW), d.d, 2 * d.h, &bridge_in, &mut s0);
    for x in s0.iter_mut() {
        *x = x.tanh();
    }
    Encoded {
        src: ids,
        emb_masks,
        fwd,
        bwd,
        h_masks,
        hd,
        keys,
        bridge_in,
        s0,
    }
}

#[derive(Debug, Clone)]
struct StepCache {
    prev: u32,
    ye_mask: Mask,
    lstm: LstmStep,
    s_mask: Mask,
    pre: Vec<Vec<f64>>,
    alpha: Vec<f64>,
    out_in: Vec<f64>,
    nrm: Vec<f64>,
    rstd: f64,
    tilde: Vec<f64>,
    probs: Vec<f64>,
}

fn decoder_step(
    p: &Params,
    enc: &Encoded,
    s_prev: &[f64],
    c_prev: &[f64],
    tilde_prev: &[f64],
    prev: u32,
    drop: &mut Option<Dropout>,
) -> StepCache {
    let d = p.dims();
    let emb = p.get(Tensor::Embedding);
    let mut input = emb[prev as usize * d.e..(prev as usize + 1) * d.e].to_vec();
    let ye_mask = Dropout::mask(drop, d.e);
    apply(&mut input, &ye_mask);
    input.extend_from_slice(tilde_prev);
    let lstm = lstm_forward(p.get(Tensor::DecW), p.get(Tensor::DecB), d.d, &input, s_prev, c_prev);

    let mut sd = lstm.h.clone();
    let s_mask = Dropout::mask(drop, d.d);
    apply(&mut sd, &s_mask);

    let mut q = p.get(Tensor::AttBias).to_vec();
    matvec_acc(p.get(Tensor::AttQuery), d.a, d.d, &sd, &mut q);
    let v = p.get(Tensor::AttV);
    let mut pre = Vec::with_capacity(enc.len());
    let mut alpha = Vec::with_capacity(enc.len());
    for k in &enc.keys {
        let t: Vec<f64> = k.iter().zip(&q).map(|(a, b)| (a + b).tanh()).collect();
        alpha.push(dot(v, &t));
        pre.push(t);
    }
    softmax_in_place(&mut alpha);
    let mut ctx = vec![0.0; 2 * d.h];
    for (a, h) in alpha.iter().zip(&enc.hd) {
        for (c, hv) in ctx.iter_mut().zip(h) {
            *c += a * hv;
        }
    }

    let mut out_in = sd;
    out_in.extend_from_slice(&ctx);
    let mut a = p.get(Tensor::OutB).to_vec();
    matvec_acc(p.get(Tensor::OutW), d.e, d.d + 2 * d.h, &out_in, &mut a);
    let mean = a.iter().sum::<f64>() / d.e as f64;
    let var = a.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / d.e as f64;
    let rstd = 1.0 / (var + LN_EPS).sqrt();
    let nrm: Vec<f64> = a.iter().map(|x| (x - mean) * rstd).collect();
    let (g, beta) = (p.get(Tensor::LnGain), p.get(Tensor::LnBias));
    let tilde: Vec<f64> = (0..d.e).map(|k| (g[k] * nrm[k] + beta[k]).tanh()).collect();

    let mut probs = p.get(Tensor::LogitBias).to_vec();
    matvec_acc(emb, d.v, d.e, &tilde, &mut probs);
    softmax_in_place(&mut probs);
    StepCache {
        prev,
        ye_mask,
        lstm,
        s_mask,
        pre,
        alpha,
        out_in,
        nrm,
        rstd,
        tilde,
        probs,
    }
}

struct Forward {
    enc: Encoded,
    steps: Vec<StepCache>,
    targets: Vec<u32>,
    nll: f64,
}

fn forward(p: &Params, ex: &Example, drop: &mut Option<Dropout>) -> Forward {
    let d = p.dims();
    let vocab = &p.config.vocab;
    let enc = encode(p, &ex.src, drop);
    let mut targets = ex.tgt.clone();
    targets.push(vocab.eos());
    let mut steps: Vec<StepCache> = Vec::with_capacity(targets.len());
    let zero_d = vec![0.0; d.d];
    let zero_e = vec![0.0; d.e];
    let mut nll = 0.0;
    for (t, &y) in targets.iter().enumerate() {
        let prev = if t == 0 { vocab.bos() } else { targets[t - 1] };
        let st = match steps.last() {
            None => decoder_step(p, &enc, &enc.s0, &zero_d, &zero_e, prev, drop),
            Some(last) => decoder_step(p, &enc, &last.lstm.h, &last.lstm.c, &last.tilde, prev, drop),
        };
        nll -= st.probs[y as usize].ln();
        steps.push(st);
    }
    Forward {
        enc,
        steps,
        targets,
        nll,
    }
}

/// Gradient of the summed NLL of one example, accumulated into `grad`.
fn backward(p: &Params, fw: &Forward, grad: &mut [f64]) {
    let d = p.dims();
    let lay = &p.layout;
    let emb = p.get(Tensor::Embedding);
    let enc = &fw.enc;
    let s_len = enc.len();
    let mut dhd = vec![vec![0.0; 2 * d.h]; s_len];

    let mut ds_next = vec![0.0; d.d];
    let mut dc_next = vec![0.0; d.d];
    let mut dtilde_next = vec![0.0; d.e];
    let mut dxh = vec![0.0; 2 * d.e + d.d];
    let mut dc_prev = vec![0.0; d.d];
    let (wo, wq, v) = (p.get(Tensor::OutW), p.get(Tensor::AttQuery), p.get(Tensor::AttV));
    let gain = p.get(Tensor::LnGain);

    for (st, &y) in fw.steps.iter().zip(&fw.targets).rev() {
        let mut dlogits = st.probs.clone();
        dlogits[y as usize] -= 1.0;
        outer_acc(&mut grad[lay.range(Tensor::Embedding)], d.v, d.e, &dlogits, &st.tilde);
        add_into(&mut grad[lay.range(Tensor::LogitBias)], &dlogits);
        let mut dtilde = dtilde_next.clone();
        matvec_t_acc(emb, d.v, d.e, &dlogits, &mut dtilde);

        // tanh and layer norm
        let dz: Vec<f64> = (0..d.e).map(|k| dtilde[k] * (1.0 - st.tilde[k] * st.tilde[k])).collect();
        {
            let dg = &mut grad[lay.range(Tensor::LnGain)];
            for k in 0..d.e {
                dg[k] += dz[k] * st.nrm[k];
            }
        }
        add_into(&mut grad[lay.range(Tensor::LnBias)], &dz);
        let dn: Vec<f64> = (0..d.e).map(|k| dz[k] * gain[k]).collect();
        let mean_dn = dn.iter().sum::<f64>() / d.e as f64;
        let mean_dn_n = dn.iter().zip(&st.nrm).map(|(a, b)| a * b).sum::<f64>() / d.e as f64;
        let da: Vec<f64> = (0..d.e)
            .map(|k| st.rstd * (dn[k] - mean_dn - st.nrm[k] * mean_dn_n))
            .collect();

        outer_acc(&mut grad[lay.range(Tensor::OutW)], d.e, d.d + 2 * d.h, &da, &st.out_in);
        add_into(&mut grad[lay.range(Tensor::OutB)], &da);
        let mut d_out_in = vec![0.0; d.d + 2 * d.h];
        matvec_t_acc(wo, d.e, d.d + 2 * d.h, &da, &mut d_out_in);
        let (dsd, dctx) = d_out_in.split_at_mut(d.d);

        // attention
        let dalpha: Vec<f64> = enc.hd.iter().map(|h| dot(dctx, h)).collect();
        let weighted = dot(&st.alpha, &dalpha);
        let mut dq = vec![0.0; d.a];
        for j in 0..s_len {
            let a = st.alpha[j];
            for (dh, c) in dhd[j].iter_mut().zip(dctx.iter()) {
                *dh += a * c;
            }
            let de = a * (dalpha[j] - weighted);
            if de == 0.0 {
                continue;
            }
            add_scaled(&mut grad[lay.range(Tensor::AttV)], de, &st.pre[j]);
            let dpre: Vec<f64> = (0..d.a)
                .map(|k| de * v[k] * (1.0 - st.pre[j][k] * st.pre[j][k]))
                .collect();
            // The key projection is linear in h_j, so route d(key) straight to W_k and h_j.
            outer_acc(&mut grad[lay.range(Tensor::AttKey)], d.a, 2 * d.h, &dpre, &enc.hd[j]);
            matvec_t_acc(p.get(Tensor::AttKey), d.a, 2 * d.h, &dpre, &mut dhd[j]);
            add_into(&mut dq, &dpre);
        }
        let sd = &st.out_in[..d.d];
        outer_acc(&mut grad[lay.range(Tensor::AttQuery)], d.a, d.d, &dq, sd);
        add_into(&mut grad[lay.range(Tensor::AttBias)], &dq);
        matvec_t_acc(wq, d.a, d.d, &dq, dsd);

        // decoder LSTM
        apply(dsd, &st.s_mask);
        add_into(dsd, &ds_next);
        {
            let r_w = lay.range(Tensor::DecW);
            let r_b = lay.range(Tensor::DecB);
            let (lo, hi) = grad.split_at_mut(r_b.start);
            lstm_backward(
                p.get(Tensor::DecW),
                d.d,
                &st.lstm,
                dsd,
                &dc_next,
                &mut lo[r_w],
                &mut hi[..r_b.len()],
                &mut dxh,
                &mut dc_prev,
            );
        }
        let mut dye = dxh[..d.e].to_vec();
        apply(&mut dye, &st.ye_mask);
        let row = st.prev as usize * d.e;
        add_into(&mut grad[lay.range(Tensor::Embedding)][row..row + d.e], &dye);
        dtilde_next.copy_from_slice(&dxh[d.e..2 * d.e]);
        ds_next.copy_from_slice(&dxh[2 * d.e..]);
        dc_next.copy_from_slice(&dc_prev);
    }

    // bridge
    let du: Vec<f64> = (0..d.d).map(|k| ds_next[k] * (1.0 - enc.s0[k] * enc.s0[k])).collect();
    outer_acc(&mut grad[lay.range(Tensor::BridgeW)], d.d, 2 * d.h, &du, &enc.bridge_in);
    add_into(&mut grad[lay.range(Tensor::BridgeB)], &du);
    let mut dbridge = vec![0.0; 2 * d.h];
    matvec_t_acc(p.get(Tensor::BridgeW), d.d, 2 * d.h, &du, &mut dbridge);

    // encoder states: undo dropout, then split by direction
    let mut dhf: Vec<Vec<f64>> = Vec::with_capacity(s_len);
    let mut dhb: Vec<Vec<f64>> = Vec::with_capacity(s_len);
    for j in 0..s_len {
        apply(&mut dhd[j], &enc.h_masks[j]);
        dhf.push(dhd[j][..d.h].to_vec());
        dhb.push(dhd[j][d.h..].to_vec());
    }
    add_into(&mut dhf[s_len - 1], &dbridge[..d.h]);
    add_into(&mut dhb[0], &dbridge[d.h..]);

    let mut dx = vec![vec![0.0; d.e]; s_len];
    let mut dxh = vec![0.0; d.e + d.h];
    let mut dc_prev = vec![0.0; d.h];
    for (dir, w_t, b_t) in [(0, Tensor::EncFwdW, Tensor::EncFwdB), (1, Tensor::EncBwdW, Tensor::EncBwdB)] {
        let mut dh_carry = vec![0.0; d.h];
        let mut dc_carry = vec![0.0; d.h];
        let order: Vec<usize> = if dir == 0 { (0..s_len).rev().collect() } else { (0..s_len).collect() };
        for j in order {
            let (st, dh_out) = if dir == 0 { (&enc.fwd[j], &dhf[j]) } else { (&enc.bwd[j], &dhb[j]) };
            let mut dh = dh_out.clone();
            add_into(&mut dh, &dh_carry);
            let r_w = lay.range(w_t);
            let r_b = lay.range(b_t);
            let (lo, hi) = grad.split_at_mut(r_b.start);
            lstm_backward(
                p.get(w_t),
                d.h,
                st,
                &dh,
                &dc_carry,
                &mut lo[r_w],
                &mut hi[..r_b.len()],
                &mut dxh,
                &mut dc_prev,
            );
            add_into(&mut dx[j], &dxh[..d.e]);
            dh_carry.copy_from_slice(&dxh[d.e..]);
            dc_carry.copy_from_slice(&dc_prev);
        }
    }
    let g_emb = &mut grad[lay.range(Tensor::Embedding)];
    for j in 0..s_len {
        apply(&mut dx[j], &enc.emb_masks[j]);
        let row = enc.src[j] as usize * d.e;
        add_into(&mut g_emb[row..row + d.e], &dx[j]);
    }
}

fn add_scaled(dst: &mut [f64], a: f64, x: &[f64]) {
    for (d, v) in dst.iter_mut().zip(x) {
        *d += a * v;
    }
}

fn dropout_for(p: &Params, mode: Mode, update: u64, example: u64) -> Option<Dropout> {
    match mode {
        Mode::Train => Dropout::new(p.config.dropout_p, p.config.seed, update, example),
        Mode::Eval => None,
    }
}

/// Summed NLL and predicted-token count of a batch.
pub fn batch_nll(p: &Params, batch: &[Example], mode: Mode, update: u64) -> Result<(f64, usize)> {
    if batch.is_empty() {
        return Err(Error::Argument("empty batch".into()));
    }
    let parts: Vec<(f64, usize)> = batch
        .par_chunks(CHUNK)
        .enumerate()
        .map(|(c, chunk)| {
            let mut sum = 0.0;
            let mut n = 0;
            for (i, ex) in chunk.iter().enumerate() {
                let mut drop = dropout_for(p, mode, update, (c * CHUNK + i) as u64);
                sum += forward(p, ex, &mut drop).nll;
                n += ex.target_tokens();
            }
            (sum, n)
        })
        .collect();
    Ok(parts.into_iter().fold((0.0, 0), |(s, n), (a, b)| (s + a, n + b)))
}

/// Mean per-token negative log-likelihood.
pub fn forward_loss(p: &Params, batch: &[Example], mode: Mode) -> Result<f64> {
    let (sum, n) = batch_nll(p, batch, mode, 0)?;
    Ok(sum / n as f64)
}

/// Mean per-token loss and its gradient. Dropout masks derive from the model
/// seed, `update` and the example's position in the batch.
pub fn loss_and_grad(p: &Params, batch: &[Example], mode: Mode, update: u64) -> Result<(f64, Vec<f64>)> {
    if batch.is_empty() {
        return Err(Error::Argument("empty batch".into()));
    }
    let parts: Vec<(f64, usize, Vec<f64>)> = batch
        .par_chunks(CHUNK)
        .enumerate()
        .map(|(c, chunk)| {
            let mut grad = vec![0.0; p.num_params()];
            let mut sum = 0.0;
            let mut n = 0;
            for (i, ex) in chunk.iter().enumerate() {
                let mut drop = dropout_for(p, mode, update, (c * CHUNK + i) as u64);
                let fw = forward(p, ex, &mut drop);
                backward(p, &fw, &mut grad);
                sum += fw.nll;
                n += ex.target_tokens();
            }
            (sum, n, grad)
        })
        .collect();
    let mut grad = vec![0.0; p.num_params()];
    let mut sum = 0.0;
    let mut n = 0;
    for (s, k, g) in parts {
        sum += s;
        n += k;
        add_into(&mut grad, &g);
    }
    let scale = 1.0 / n as f64;
    for g in grad.iter_mut() {
        *g *= scale;
    }
    Ok((sum * scale, grad))
}

/// Attention distribution over source positions (including `</s>`) for each
/// target step, in eval mode.
pub fn attention_weights(p: &Params, ex: &Example) -> Vec<Vec<f64>> {
    forward(p, ex, &mut None).steps.into_iter().map(|s| s.alpha).collect()
}

/// Per-step next-token distributions under teacher forcing, in eval mode.
pub fn step_distributions(p: &Params, ex: &Example) -> Vec<Vec<f64>> {
    forward(p, ex, &mut None).steps.into_iter().map(|s| s.probs).collect()
}

/// Incremental decoder state for search.
#[derive(Debug, Clone)]
pub struct DecoderState {
    enc: Arc<Encoded>,
    s: Vec<f64>,
    c: Vec<f64>,
    tilde: Vec<f64>,
}

pub fn start_decoding(p: &Params, src: &[u32]) -> DecoderState {
    let d = p.dims();
    let enc = encode(p, src, &mut None);
    DecoderState {
        s: enc.s0.clone(),
        c: vec![0.0; d.d],
        tilde: vec![0.0; d.e],
        enc: Arc::new(enc),
    }
}

/// Feeds `prev` and returns the next state with the next-token distribution.
pub fn decode_step(p: &Params, state: &DecoderState, prev: u32) -> (DecoderState, Vec<f64>) {
    let st = decoder_step(p, &state.enc, &state.s, &state.c, &state.tilde, prev, &mut None);
    (
        DecoderState {
            enc: state.enc.clone(),
            s: st.lstm.h,
            c: st.lstm.c,
            tilde: st.tilde,
        },
        st.probs,
    )
}

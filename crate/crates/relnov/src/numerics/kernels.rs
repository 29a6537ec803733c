//! Low-level compute kernels with data-parallel and sequential variants.
//!
//! Every kernel computes each output row (or element block) with a fixed
//! sequential reduction order, so results are bitwise identical whether the
//! work is split across threads or not. The `parallel` feature selects rayon
//! dispatch above a per-kernel work threshold; with the feature disabled the
//! sequential variants are the only path.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::numerics::Scalar;

/// Work (in flop or element units) below which parallel dispatch is not worth
/// the fork/join overhead.
pub const PAR_MATMUL_WORK: usize = 1 << 18;
pub const PAR_ELEMWISE_LEN: usize = 1 << 14;
pub const PAR_ROWS_WORK: usize = 1 << 14;
pub const PAR_ATTENTION_GROUPS: usize = 32;

#[cfg(feature = "parallel")]
#[inline]
fn par_matmul(m: usize, k: usize, n: usize) -> bool {
    m.saturating_mul(k).saturating_mul(n) >= PAR_MATMUL_WORK
}

// ---------------------------------------------------------------------------
// matmul: C = A[m x k] . B[k x n]
// ---------------------------------------------------------------------------

#[inline]
fn matmul_row<S: Scalar>(c_row: &mut [S], a_row: &[S], b: &[S], n: usize) {
    for (p, &aip) in a_row.iter().enumerate() {
        let b_row = &b[p * n..p * n + n];
        for (cv, &bv) in c_row.iter_mut().zip(b_row) {
            *cv = *cv + aip * bv;
        }
    }
}

pub fn matmul_seq<S: Scalar>(c: &mut [S], a: &[S], b: &[S], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    for (c_row, a_row) in c.chunks_exact_mut(n).zip(a.chunks_exact(k)) {
        matmul_row(c_row, a_row, b, n);
    }
}

#[cfg(feature = "parallel")]
pub fn matmul_par<S: Scalar>(c: &mut [S], a: &[S], b: &[S], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    c.par_chunks_exact_mut(n)
        .zip_eq(a.par_chunks_exact(k))
        .with_min_len(8)
        .for_each(|(c_row, a_row)| matmul_row(c_row, a_row, b, n));
}

/// C = A . B, overwriting zeroed `c`.
pub fn matmul<S: Scalar>(c: &mut [S], a: &[S], b: &[S], m: usize, k: usize, n: usize) {
    #[cfg(feature = "parallel")]
    if par_matmul(m, k, n) {
        return matmul_par(c, a, b, m, k, n);
    }
    matmul_seq(c, a, b, m, k, n);
}

// ---------------------------------------------------------------------------
// matmul_acc_nt: C[m x k] += G[m x n] . B[k x n]^T   (dA of matmul backward)
// ---------------------------------------------------------------------------

#[inline]
fn dot<S: Scalar>(x: &[S], y: &[S]) -> S {
    let mut acc = S::zero();
    for (&a, &b) in x.iter().zip(y) {
        acc = acc + a * b;
    }
    acc
}

fn acc_nt_row<S: Scalar>(c_row: &mut [S], g_row: &[S], b: &[S], n: usize) {
    for (p, cv) in c_row.iter_mut().enumerate() {
        *cv = *cv + dot(g_row, &b[p * n..p * n + n]);
    }
}

pub fn matmul_acc_nt_seq<S: Scalar>(c: &mut [S], g: &[S], b: &[S], m: usize, k: usize, n: usize) {
    debug_assert_eq!(c.len(), m * k);
    debug_assert_eq!(g.len(), m * n);
    debug_assert_eq!(b.len(), k * n);
    for (c_row, g_row) in c.chunks_exact_mut(k).zip(g.chunks_exact(n)) {
        acc_nt_row(c_row, g_row, b, n);
    }
}

#[cfg(feature = "parallel")]
pub fn matmul_acc_nt_par<S: Scalar>(c: &mut [S], g: &[S], b: &[S], _m: usize, k: usize, n: usize) {
    c.par_chunks_exact_mut(k)
        .zip_eq(g.par_chunks_exact(n))
        .with_min_len(8)
        .for_each(|(c_row, g_row)| acc_nt_row(c_row, g_row, b, n));
}

pub fn matmul_acc_nt<S: Scalar>(c: &mut [S], g: &[S], b: &[S], m: usize, k: usize, n: usize) {
    #[cfg(feature = "parallel")]
    if par_matmul(m, k, n) {
        return matmul_acc_nt_par(c, g, b, m, k, n);
    }
    matmul_acc_nt_seq(c, g, b, m, k, n);
}

// ---------------------------------------------------------------------------
// matmul_acc_tn: C[k x n] += A[m x k]^T . G[m x n]   (dB of matmul backward)
// ---------------------------------------------------------------------------

fn acc_tn_row<S: Scalar>(c_row: &mut [S], p: usize, a: &[S], g: &[S], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let aip = a[i * k + p];
        let g_row = &g[i * n..i * n + n];
        for (cv, &gv) in c_row.iter_mut().zip(g_row) {
            *cv = *cv + aip * gv;
        }
    }
}

pub fn matmul_acc_tn_seq<S: Scalar>(c: &mut [S], a: &[S], g: &[S], m: usize, k: usize, n: usize) {
    debug_assert_eq!(c.len(), k * n);
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(g.len(), m * n);
    for (p, c_row) in c.chunks_exact_mut(n).enumerate() {
        acc_tn_row(c_row, p, a, g, m, k, n);
    }
}

#[cfg(feature = "parallel")]
pub fn matmul_acc_tn_par<S: Scalar>(c: &mut [S], a: &[S], g: &[S], m: usize, k: usize, n: usize) {
    c.par_chunks_exact_mut(n)
        .enumerate()
        .with_min_len(4)
        .for_each(|(p, c_row)| acc_tn_row(c_row, p, a, g, m, k, n));
}

pub fn matmul_acc_tn<S: Scalar>(c: &mut [S], a: &[S], g: &[S], m: usize, k: usize, n: usize) {
    #[cfg(feature = "parallel")]
    if par_matmul(m, k, n) {
        return matmul_acc_tn_par(c, a, g, m, k, n);
    }
    matmul_acc_tn_seq(c, a, g, m, k, n);
}

// ---------------------------------------------------------------------------
// Elementwise maps
// ---------------------------------------------------------------------------

pub fn map_seq<S: Scalar, F: Fn(S) -> S + Sync>(out: &mut [S], x: &[S], f: F) {
    for (o, &v) in out.iter_mut().zip(x) {
        *o = f(v);
    }
}

#[cfg(feature = "parallel")]
pub fn map_par<S: Scalar, F: Fn(S) -> S + Sync>(out: &mut [S], x: &[S], f: F) {
    out.par_iter_mut()
        .zip_eq(x.par_iter())
        .with_min_len(1024)
        .for_each(|(o, &v)| *o = f(v));
}

pub fn map<S: Scalar, F: Fn(S) -> S + Sync>(out: &mut [S], x: &[S], f: F) {
    #[cfg(feature = "parallel")]
    if x.len() >= PAR_ELEMWISE_LEN {
        return map_par(out, x, f);
    }
    map_seq(out, x, f);
}

/// out[i] += f(a[i], b[i]); used by elementwise backward rules.
pub fn zip_acc<S: Scalar, F: Fn(S, S) -> S + Sync>(out: &mut [S], a: &[S], b: &[S], f: F) {
    #[cfg(feature = "parallel")]
    if out.len() >= PAR_ELEMWISE_LEN {
        return out
            .par_iter_mut()
            .zip_eq(a.par_iter().zip_eq(b.par_iter()))
            .with_min_len(1024)
            .for_each(|(o, (&av, &bv))| *o = *o + f(av, bv));
    }
    for (o, (&av, &bv)) in out.iter_mut().zip(a.iter().zip(b)) {
        *o = *o + f(av, bv);
    }
}

// ---------------------------------------------------------------------------
// Row-wise softmax with max subtraction
// ---------------------------------------------------------------------------

fn softmax_row<S: Scalar>(out_row: &mut [S], x_row: &[S]) {
    let mut m = x_row[0];
    for &v in &x_row[1..] {
        if v > m {
            m = v;
        }
    }
    let mut denom = S::zero();
    for (o, &v) in out_row.iter_mut().zip(x_row) {
        let e = (v - m).exp();
        *o = e;
        denom = denom + e;
    }
    for o in out_row.iter_mut() {
        *o = *o / denom;
    }
}

pub fn softmax_rows_seq<S: Scalar>(out: &mut [S], x: &[S], cols: usize) {
    for (o, r) in out.chunks_exact_mut(cols).zip(x.chunks_exact(cols)) {
        softmax_row(o, r);
    }
}

#[cfg(feature = "parallel")]
pub fn softmax_rows_par<S: Scalar>(out: &mut [S], x: &[S], cols: usize) {
    out.par_chunks_exact_mut(cols)
        .zip_eq(x.par_chunks_exact(cols))
        .with_min_len(32)
        .for_each(|(o, r)| softmax_row(o, r));
}

pub fn softmax_rows<S: Scalar>(out: &mut [S], x: &[S], cols: usize) {
    #[cfg(feature = "parallel")]
    if x.len() >= PAR_ROWS_WORK {
        return softmax_rows_par(out, x, cols);
    }
    softmax_rows_seq(out, x, cols);
}

// ---------------------------------------------------------------------------
// Row-wise layer norm (population variance over the last dimension)
// ---------------------------------------------------------------------------

fn layer_norm_row<S: Scalar>(out_row: &mut [S], x_row: &[S], gain: &[S], bias: &[S], eps: S) {
    let d = S::from_f64(x_row.len() as f64);
    let mean = x_row.iter().copied().sum::<S>() / d;
    let mut var = S::zero();
    for &v in x_row {
        let c = v - mean;
        var = var + c * c;
    }
    var = var / d;
    let inv = S::one() / (var + eps).sqrt();
    for ((o, &v), (&g, &b)) in out_row
        .iter_mut()
        .zip(x_row)
        .zip(gain.iter().zip(bias))
    {
        *o = (v - mean) * inv * g + b;
    }
}

pub fn layer_norm_rows_seq<S: Scalar>(out: &mut [S], x: &[S], gain: &[S], bias: &[S], eps: S) {
    let d = gain.len();
    for (o, r) in out.chunks_exact_mut(d).zip(x.chunks_exact(d)) {
        layer_norm_row(o, r, gain, bias, eps);
    }
}

#[cfg(feature = "parallel")]
pub fn layer_norm_rows_par<S: Scalar>(out: &mut [S], x: &[S], gain: &[S], bias: &[S], eps: S) {
    let d = gain.len();
    out.par_chunks_exact_mut(d)
        .zip_eq(x.par_chunks_exact(d))
        .with_min_len(32)
        .for_each(|(o, r)| layer_norm_row(o, r, gain, bias, eps));
}

pub fn layer_norm_rows<S: Scalar>(out: &mut [S], x: &[S], gain: &[S], bias: &[S], eps: S) {
    #[cfg(feature = "parallel")]
    if x.len() >= PAR_ROWS_WORK {
        return layer_norm_rows_par(out, x, gain, bias, eps);
    }
    layer_norm_rows_seq(out, x, gain, bias, eps);
}

// ---------------------------------------------------------------------------
// Grouped multi-head self-attention over short token groups
// ---------------------------------------------------------------------------

/// Forward attention for one (group, head): writes the attended values for
/// all `len` tokens of the group into `out`.
///
/// Reductions over tokens run in reverse token order so that the two pair
/// tokens of a `[label, z_i, z_j]` group combine with each other before the
/// label token; swapping z_i and z_j then yields bitwise-identical outputs.
fn attention_group_head<S: Scalar>(
    out: &mut [S],
    q: &[S],
    k: &[S],
    v: &[S],
    base: usize,
    head_off: usize,
    len: usize,
    d_model: usize,
    d_head: usize,
    scale: S,
    weights: &mut [S],
) {
    // scores[t*len + u] = <q_t, k_u> * scale
    for t in 0..len {
        let q_t = &q[(base + t) * d_model + head_off..(base + t) * d_model + head_off + d_head];
        for u in 0..len {
            let k_u = &k[(base + u) * d_model + head_off..(base + u) * d_model + head_off + d_head];
            weights[t * len + u] = dot(q_t, k_u) * scale;
        }
    }
    // row softmax, reverse-order reduction
    for t in 0..len {
        let row = &mut weights[t * len..(t + 1) * len];
        let mut m = row[0];
        for &s in &row[1..] {
            if s > m {
                m = s;
            }
        }
        let mut denom = S::zero();
        for u in (0..len).rev() {
            let e = (row[u] - m).exp();
            row[u] = e;
            denom = denom + e;
        }
        for e in row.iter_mut() {
            *e = *e / denom;
        }
    }
    // out_t = sum_u a[t][u] * v_u, reverse-order accumulation
    for t in 0..len {
        let o = &mut out[(base + t) * d_model + head_off..(base + t) * d_model + head_off + d_head];
        for u in (0..len).rev() {
            let a = weights[t * len + u];
            let v_u = &v[(base + u) * d_model + head_off..(base + u) * d_model + head_off + d_head];
            for (ov, &vv) in o.iter_mut().zip(v_u) {
                *ov = *ov + a * vv;
            }
        }
    }
}

fn attention_group<S: Scalar>(
    out: &mut [S],
    q: &[S],
    k: &[S],
    v: &[S],
    group: usize,
    len: usize,
    d_model: usize,
    heads: usize,
    weights: &mut [S],
) {
    let d_head = d_model / heads;
    let scale = S::one() / S::from_f64((d_head as f64).sqrt());
    let base = group * len;
    for h in 0..heads {
        attention_group_head(
            out,
            q,
            k,
            v,
            base,
            h * d_head,
            len,
            d_model,
            d_head,
            scale,
            weights,
        );
    }
}

pub fn attention_seq<S: Scalar>(
    out: &mut [S],
    q: &[S],
    k: &[S],
    v: &[S],
    groups: usize,
    len: usize,
    d_model: usize,
    heads: usize,
) {
    let mut weights = vec![S::zero(); len * len];
    for g in 0..groups {
        attention_group(out, q, k, v, g, len, d_model, heads, &mut weights);
    }
}

#[cfg(feature = "parallel")]
pub fn attention_par<S: Scalar>(
    out: &mut [S],
    q: &[S],
    k: &[S],
    v: &[S],
    groups: usize,
    len: usize,
    d_model: usize,
    heads: usize,
) {
    let row = len * d_model;
    debug_assert_eq!(out.len(), groups * row);
    out.par_chunks_exact_mut(row)
        .enumerate()
        .with_min_len(4)
        .for_each_init(
            || vec![S::zero(); len * len],
            |weights, (g, out_g)| {
                // out_g is the group's own rows; recompute with base 0 into it
                let qg = &q[g * row..(g + 1) * row];
                let kg = &k[g * row..(g + 1) * row];
                let vg = &v[g * row..(g + 1) * row];
                attention_group(out_g, qg, kg, vg, 0, len, d_model, heads, weights);
            },
        );
}

pub fn attention<S: Scalar>(
    out: &mut [S],
    q: &[S],
    k: &[S],
    v: &[S],
    groups: usize,
    len: usize,
    d_model: usize,
    heads: usize,
) {
    #[cfg(feature = "parallel")]
    if groups >= PAR_ATTENTION_GROUPS {
        return attention_par(out, q, k, v, groups, len, d_model, heads);
    }
    attention_seq(out, q, k, v, groups, len, d_model, heads);
}

/// Backward pass of grouped attention. Recomputes the softmax weights from
/// `q`/`k` (cheap for short groups) instead of saving them.
#[allow(clippy::too_many_arguments)]
pub fn attention_backward<S: Scalar>(
    dq: &mut [S],
    dk: &mut [S],
    dv: &mut [S],
    g_out: &[S],
    q: &[S],
    k: &[S],
    v: &[S],
    groups: usize,
    len: usize,
    d_model: usize,
    heads: usize,
) {
    let d_head = d_model / heads;
    let scale = S::one() / S::from_f64((d_head as f64).sqrt());
    let run = |dq: &mut [S], dk: &mut [S], dv: &mut [S], g_out: &[S], q: &[S], k: &[S], v: &[S], scratch: &mut Vec<S>| {
        scratch.resize(3 * len * len, S::zero());
        let (weights, rest) = scratch.split_at_mut(len * len);
        let (da, ds) = rest.split_at_mut(len * len);
        for h in 0..heads {
            let off = h * d_head;
            let idx = |t: usize| t * d_model + off;
            // recompute softmax weights
            for t in 0..len {
                for u in 0..len {
                    weights[t * len + u] = dot(&q[idx(t)..idx(t) + d_head], &k[idx(u)..idx(u) + d_head]) * scale;
                }
            }
            for t in 0..len {
                let row = &mut weights[t * len..(t + 1) * len];
                let mut m = row[0];
                for &s in &row[1..] {
                    if s > m {
                        m = s;
                    }
                }
                let mut denom = S::zero();
                for u in (0..len).rev() {
                    let e = (row[u] - m).exp();
                    row[u] = e;
                    denom = denom + e;
                }
                for e in row.iter_mut() {
                    *e = *e / denom;
                }
            }
            // dv_u += sum_t a[t][u] * g_t ; da[t][u] = <g_t, v_u>
            for t in 0..len {
                let g_t = &g_out[idx(t)..idx(t) + d_head];
                for u in 0..len {
                    let a = weights[t * len + u];
                    let dv_u = &mut dv[idx(u)..idx(u) + d_head];
                    for (d, &gv) in dv_u.iter_mut().zip(g_t) {
                        *d = *d + a * gv;
                    }
                    da[t * len + u] = dot(g_t, &v[idx(u)..idx(u) + d_head]);
                }
            }
            // softmax backward: ds = a * (da - sum_u da*a), then scale
            for t in 0..len {
                let mut inner = S::zero();
                for u in 0..len {
                    inner = inner + da[t * len + u] * weights[t * len + u];
                }
                for u in 0..len {
                    ds[t * len + u] = weights[t * len + u] * (da[t * len + u] - inner) * scale;
                }
            }
            // dq_t += sum_u ds[t][u] * k_u ; dk_u += sum_t ds[t][u] * q_t
            for t in 0..len {
                let dq_t = &mut dq[idx(t)..idx(t) + d_head];
                for u in 0..len {
                    let s = ds[t * len + u];
                    let k_u = &k[idx(u)..idx(u) + d_head];
                    for (d, &kv) in dq_t.iter_mut().zip(k_u) {
                        *d = *d + s * kv;
                    }
                }
            }
            for u in 0..len {
                let dk_u = &mut dk[idx(u)..idx(u) + d_head];
                for t in 0..len {
                    let s = ds[t * len + u];
                    let q_t = &q[idx(t)..idx(t) + d_head];
                    for (d, &qv) in dk_u.iter_mut().zip(q_t) {
                        *d = *d + s * qv;
                    }
                }
            }
        }
    };

    let row = len * d_model;
    #[cfg(feature = "parallel")]
    if groups >= PAR_ATTENTION_GROUPS {
        dq.par_chunks_exact_mut(row)
            .zip_eq(dk.par_chunks_exact_mut(row))
            .zip_eq(dv.par_chunks_exact_mut(row))
            .enumerate()
            .with_min_len(4)
            .for_each_init(Vec::new, |scratch, (g, ((dq_g, dk_g), dv_g))| {
                let s = g * row;
                run(
                    dq_g,
                    dk_g,
                    dv_g,
                    &g_out[s..s + row],
                    &q[s..s + row],
                    &k[s..s + row],
                    &v[s..s + row],
                    scratch,
                );
            });
        return;
    }
    let mut scratch = Vec::new();
    for g in 0..groups {
        let s = g * row;
        run(
            &mut dq[s..s + row],
            &mut dk[s..s + row],
            &mut dv[s..s + row],
            &g_out[s..s + row],
            &q[s..s + row],
            &k[s..s + row],
            &v[s..s + row],
            &mut scratch,
        );
    }
}

//! Layers with explicit forward and backward passes on flat `f64` buffers.
//!
//! Spatial tensors are channel-major `[channel][time][freq]`; sequences are
//! frame-major `[time][feature]`. Every `backward` accumulates parameter
//! gradients into a [`ParamSet`] laid out like the parameters and returns the
//! gradient with respect to the layer input.

use rand::Rng;

use super::params::{Init, ParamId, ParamSet};

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `y[i] = A[i,·]·x` for row-major `A` (`rows × x.len()`), accumulated.
fn gemv_acc(a: &[f64], x: &[f64], y: &mut [f64]) {
    let d = x.len();
    for (yi, row) in y.iter_mut().zip(a.chunks_exact(d)) {
        *yi += row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
    }
}

/// `x_grad += Aᵀ·g` and `A_grad += g ⊗ x`.
fn gemv_back(a: &[f64], x: &[f64], g: &[f64], a_grad: &mut [f64], x_grad: &mut [f64]) {
    let d = x.len();
    for ((row, grow), &gi) in a.chunks_exact(d).zip(a_grad.chunks_exact_mut(d)).zip(g) {
        if gi == 0.0 {
            continue;
        }
        for j in 0..d {
            x_grad[j] += row[j] * gi;
            grow[j] += x[j] * gi;
        }
    }
}

/// `c += a·b` for an `m×k` matrix `a` and a `k×n` matrix `b`; each matrix
/// is given as a slice with (row, column) element strides.
fn gemm_acc(
    (m, k, n): (usize, usize, usize),
    a: &[f64],
    sa: (usize, usize),
    b: &[f64],
    sb: (usize, usize),
    c: &mut [f64],
    sc: (usize, usize),
) {
    if m == 0 || k == 0 || n == 0 {
        return;
    }
    let last = |rows: usize, cols: usize, s: (usize, usize)| (rows - 1) * s.0 + (cols - 1) * s.1;
    assert!(last(m, k, sa) < a.len() && last(k, n, sb) < b.len() && last(m, n, sc) < c.len());
    // SAFETY: the assertion keeps every strided access inside its slice,
    // and `c` is exclusively borrowed.
    unsafe {
        matrixmultiply::dgemm(
            m, k, n, 1.0,
            a.as_ptr(), sa.0 as isize, sa.1 as isize,
            b.as_ptr(), sb.0 as isize, sb.1 as isize,
            1.0,
            c.as_mut_ptr(), sc.0 as isize, sc.1 as isize,
        );
    }
}

fn add_bias_grad(db: &mut [f64], dout: &[f64]) {
    for g in dout.chunks_exact(db.len()) {
        for (d, v) in db.iter_mut().zip(g) {
            *d += v;
        }
    }
}

/// 3×3 convolution with unit padding over a `[channel][rows][cols]` tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d {
    pub weight: ParamId,
    pub bias: ParamId,
    pub in_ch: usize,
    pub out_ch: usize,
}

/// Valid destination range along one axis for kernel tap `d` (0..3).
fn tap_range(d: usize, len: usize) -> (usize, usize) {
    let lo = if d == 0 { 1 } else { 0 };
    let hi = if d == 2 { len.saturating_sub(1) } else { len };
    (lo, hi.max(lo))
}

impl Conv2d {
    pub fn new(ps: &mut ParamSet, name: &str, in_ch: usize, out_ch: usize, rng: &mut impl Rng) -> Self {
        let weight = ps.add(format!("{name}.weight"), &[out_ch, in_ch, 3, 3], Init::He { fan_in: in_ch * 9 }, rng);
        let bias = ps.add(format!("{name}.bias"), &[out_ch], Init::Zeros, rng);
        Conv2d { weight, bias, in_ch, out_ch }
    }

    pub fn forward(&self, ps: &ParamSet, x: &[f64], rows: usize, cols: usize) -> Vec<f64> {
        let (w, b) = (ps.get(self.weight), ps.get(self.bias));
        let plane = rows * cols;
        let mut out = vec![0.0; self.out_ch * plane];
        for o in 0..self.out_ch {
            let dst = &mut out[o * plane..(o + 1) * plane];
            dst.iter_mut().for_each(|v| *v = b[o]);
            for c in 0..self.in_ch {
                let src = &x[c * plane..(c + 1) * plane];
                for dt in 0..3 {
                    let (t0, t1) = tap_range(dt, rows);
                    for df in 0..3 {
                        let (f0, f1) = tap_range(df, cols);
                        let k = w[((o * self.in_ch + c) * 3 + dt) * 3 + df];
                        if k == 0.0 {
                            continue;
                        }
                        for t in t0..t1 {
                            let d = &mut dst[t * cols + f0..t * cols + f1];
                            let s0 = (t + dt - 1) * cols + f0 + df - 1;
                            for (dv, sv) in d.iter_mut().zip(&src[s0..s0 + (f1 - f0)]) {
                                *dv += k * sv;
                            }
                        }
                    }
                }
            }
        }
        out
    }

    pub fn backward(&self, ps: &ParamSet, x: &[f64], rows: usize, cols: usize, dout: &[f64], grads: &mut ParamSet) -> Vec<f64> {
        let w = ps.get(self.weight);
        let plane = rows * cols;
        let mut dx = vec![0.0; self.in_ch * plane];
        {
            let db = grads.get_mut(self.bias);
            for o in 0..self.out_ch {
                db[o] += dout[o * plane..(o + 1) * plane].iter().sum::<f64>();
            }
        }
        let dw = grads.get_mut(self.weight);
        for o in 0..self.out_ch {
            let g = &dout[o * plane..(o + 1) * plane];
            for c in 0..self.in_ch {
                let src = &x[c * plane..(c + 1) * plane];
                let dsrc = &mut dx[c * plane..(c + 1) * plane];
                for dt in 0..3 {
                    let (t0, t1) = tap_range(dt, rows);
                    for df in 0..3 {
                        let (f0, f1) = tap_range(df, cols);
                        let wi = ((o * self.in_ch + c) * 3 + dt) * 3 + df;
                        let k = w[wi];
                        let mut acc = 0.0;
                        for t in t0..t1 {
                            let gr = &g[t * cols + f0..t * cols + f1];
                            let s0 = (t + dt - 1) * cols + f0 + df - 1;
                            let n = f1 - f0;
                            for ((gv, sv), dsv) in gr.iter().zip(&src[s0..s0 + n]).zip(&mut dsrc[s0..s0 + n]) {
                                acc += gv * sv;
                                *dsv += k * gv;
                            }
                        }
                        dw[wi] += acc;
                    }
                }
            }
        }
        dx
    }
}

pub fn relu(x: &mut [f64]) {
    x.iter_mut().for_each(|v| *v = v.max(0.0));
}

/// Masks `grad` where the ReLU output was zero.
pub fn relu_backward(out: &[f64], grad: &mut [f64]) {
    for (g, &y) in grad.iter_mut().zip(out) {
        if y <= 0.0 {
            *g = 0.0;
        }
    }
}

/// 2×2 average pooling, dropping a trailing odd row or column.
pub fn avg_pool2(x: &[f64], ch: usize, rows: usize, cols: usize) -> Vec<f64> {
    let (r2, c2) = (rows / 2, cols / 2);
    let mut out = vec![0.0; ch * r2 * c2];
    for c in 0..ch {
        for i in 0..r2 {
            for j in 0..c2 {
                let at = |a: usize, b: usize| x[(c * rows + a) * cols + b];
                out[(c * r2 + i) * c2 + j] =
                    0.25 * (at(2 * i, 2 * j) + at(2 * i, 2 * j + 1) + at(2 * i + 1, 2 * j) + at(2 * i + 1, 2 * j + 1));
            }
        }
    }
    out
}

pub fn avg_pool2_backward(dout: &[f64], ch: usize, rows: usize, cols: usize) -> Vec<f64> {
    let (r2, c2) = (rows / 2, cols / 2);
    let mut dx = vec![0.0; ch * rows * cols];
    for c in 0..ch {
        for i in 0..r2 {
            for j in 0..c2 {
                let g = 0.25 * dout[(c * r2 + i) * c2 + j];
                for (a, b) in [(2 * i, 2 * j), (2 * i, 2 * j + 1), (2 * i + 1, 2 * j), (2 * i + 1, 2 * j + 1)] {
                    dx[(c * rows + a) * cols + b] += g;
                }
            }
        }
    }
    dx
}

/// Frame-wise affine map `[n][in_dim] → [n][out_dim]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    pub fn new(ps: &mut ParamSet, name: &str, in_dim: usize, out_dim: usize, rng: &mut impl Rng) -> Self {
        let weight = ps.add(format!("{name}.weight"), &[out_dim, in_dim], Init::Lecun { fan_in: in_dim }, rng);
        let bias = ps.add(format!("{name}.bias"), &[out_dim], Init::Zeros, rng);
        Linear { weight, bias, in_dim, out_dim }
    }

    pub fn forward(&self, ps: &ParamSet, x: &[f64]) -> Vec<f64> {
        let (w, b) = (ps.get(self.weight), ps.get(self.bias));
        let (d, o) = (self.in_dim, self.out_dim);
        let n = x.len() / d;
        let mut out = b.repeat(n);
        gemm_acc((n, d, o), x, (d, 1), w, (1, d), &mut out, (o, 1));
        out
    }

    pub fn backward(&self, ps: &ParamSet, x: &[f64], dout: &[f64], grads: &mut ParamSet) -> Vec<f64> {
        let (d, o) = (self.in_dim, self.out_dim);
        let n = x.len() / d;
        let mut dx = vec![0.0; x.len()];
        add_bias_grad(grads.get_mut(self.bias), dout);
        gemm_acc((o, n, d), dout, (1, o), x, (d, 1), grads.get_mut(self.weight), (d, 1));
        gemm_acc((n, o, d), dout, (o, 1), ps.get(self.weight), (d, 1), &mut dx, (d, 1));
        dx
    }
}

/// Temporal convolution with kernel 3 and unit padding over `[time][in_dim]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeConv {
    /// Shape `[3, out_dim, in_dim]`; tap 0 reads the previous frame.
    pub weight: ParamId,
    pub bias: ParamId,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl TimeConv {
    pub fn new(ps: &mut ParamSet, name: &str, in_dim: usize, out_dim: usize, rng: &mut impl Rng) -> Self {
        let weight = ps.add(format!("{name}.weight"), &[3, out_dim, in_dim], Init::Lecun { fan_in: 3 * in_dim }, rng);
        let bias = ps.add(format!("{name}.bias"), &[out_dim], Init::Zeros, rng);
        TimeConv { weight, bias, in_dim, out_dim }
    }

    /// Output rows `lo..hi` read input rows starting at `lo + k − 1` for tap `k`.
    fn tap_rows(k: usize, frames: usize) -> (usize, usize, usize) {
        let (lo, hi) = tap_range(k, frames);
        (lo, hi - lo, lo + k - 1)
    }

    pub fn forward(&self, ps: &ParamSet, x: &[f64]) -> Vec<f64> {
        let (w, b) = (ps.get(self.weight), ps.get(self.bias));
        let (d, o) = (self.in_dim, self.out_dim);
        let frames = x.len() / d;
        let mut out = b.repeat(frames);
        for k in 0..3 {
            let (lo, n, src) = Self::tap_rows(k, frames);
            if n > 0 {
                gemm_acc((n, d, o), &x[src * d..], (d, 1), &w[k * o * d..(k + 1) * o * d], (1, d), &mut out[lo * o..], (o, 1));
            }
        }
        out
    }

    pub fn backward(&self, ps: &ParamSet, x: &[f64], dout: &[f64], grads: &mut ParamSet) -> Vec<f64> {
        let w = ps.get(self.weight);
        let (d, o) = (self.in_dim, self.out_dim);
        let frames = x.len() / d;
        let mut dx = vec![0.0; x.len()];
        add_bias_grad(grads.get_mut(self.bias), dout);
        let dw = grads.get_mut(self.weight);
        for k in 0..3 {
            let (lo, n, src) = Self::tap_rows(k, frames);
            if n == 0 {
                continue;
            }
            let tap = k * o * d..(k + 1) * o * d;
            gemm_acc((o, n, d), &dout[lo * o..], (1, o), &x[src * d..], (d, 1), &mut dw[tap.clone()], (d, 1));
            gemm_acc((n, o, d), &dout[lo * o..], (o, 1), &w[tap], (d, 1), &mut dx[src * d..], (d, 1));
        }
        dx
    }
}

/// Gated recurrent cell (reset, update, candidate gate order).
#[derive(Debug, Clone, PartialEq)]
pub struct GruCell {
    pub w_ih: ParamId,
    pub w_hh: ParamId,
    pub b_ih: ParamId,
    pub b_hh: ParamId,
    pub in_dim: usize,
    pub hidden: usize,
}

/// Per-step activations kept for the backward pass.
#[derive(Debug, Clone, Default)]
pub struct GruTrace {
    h_prev: Vec<Vec<f64>>,
    r: Vec<Vec<f64>>,
    z: Vec<Vec<f64>>,
    n: Vec<Vec<f64>>,
    gh_n: Vec<Vec<f64>>,
}

impl GruCell {
    pub fn new(ps: &mut ParamSet, name: &str, in_dim: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        let w_ih = ps.add(format!("{name}.w_ih"), &[3 * hidden, in_dim], Init::Lecun { fan_in: in_dim }, rng);
        let w_hh = ps.add(format!("{name}.w_hh"), &[3 * hidden, hidden], Init::Lecun { fan_in: hidden }, rng);
        let b_ih = ps.add(format!("{name}.b_ih"), &[3 * hidden], Init::Zeros, rng);
        let b_hh = ps.add(format!("{name}.b_hh"), &[3 * hidden], Init::Zeros, rng);
        GruCell { w_ih, w_hh, b_ih, b_hh, in_dim, hidden }
    }

    /// Runs over `x` (`[time][in_dim]`) in the given frame order and returns
    /// hidden states indexed by frame.
    fn run(&self, ps: &ParamSet, x: &[f64], order: &[usize]) -> (Vec<f64>, GruTrace) {
        let h = self.hidden;
        let (w_ih, w_hh, b_ih, b_hh) = (ps.get(self.w_ih), ps.get(self.w_hh), ps.get(self.b_ih), ps.get(self.b_hh));
        let frames = order.len();
        let mut out = vec![0.0; frames * h];
        let mut trace = GruTrace::default();
        let mut state = vec![0.0; h];
        // Input projections of every frame at once.
        let mut gi_all = b_ih.repeat(frames);
        gemm_acc((frames, self.in_dim, 3 * h), x, (self.in_dim, 1), w_ih, (1, self.in_dim), &mut gi_all, (3 * h, 1));
        for &t in order {
            let gi = &gi_all[t * 3 * h..(t + 1) * 3 * h];
            let mut gh = b_hh.to_vec();
            gemv_acc(w_hh, &state, &mut gh);
            let r: Vec<f64> = (0..h).map(|i| sigmoid(gi[i] + gh[i])).collect();
            let z: Vec<f64> = (0..h).map(|i| sigmoid(gi[h + i] + gh[h + i])).collect();
            let n: Vec<f64> = (0..h).map(|i| (gi[2 * h + i] + r[i] * gh[2 * h + i]).tanh()).collect();
            let next: Vec<f64> = (0..h).map(|i| (1.0 - z[i]) * n[i] + z[i] * state[i]).collect();
            out[t * h..(t + 1) * h].copy_from_slice(&next);
            trace.h_prev.push(std::mem::replace(&mut state, next));
            trace.gh_n.push(gh[2 * h..].to_vec());
            trace.r.push(r);
            trace.z.push(z);
            trace.n.push(n);
        }
        (out, trace)
    }

    fn run_backward(
        &self,
        ps: &ParamSet,
        x: &[f64],
        order: &[usize],
        trace: &GruTrace,
        dout: &[f64],
        grads: &mut ParamSet,
        dx: &mut [f64],
    ) {
        let h = self.hidden;
        let w_hh = ps.get(self.w_hh);
        let frames = order.len();
        let mut dgi_all = vec![0.0; frames * 3 * h];
        let mut dw_hh = grads.get(self.w_hh).to_vec();
        let mut db_ih = grads.get(self.b_ih).to_vec();
        let mut db_hh = grads.get(self.b_hh).to_vec();
        let mut dh_next = vec![0.0; h];
        for (step, &t) in order.iter().enumerate().rev() {
            let (r, z, n, gh_n, h_prev) =
                (&trace.r[step], &trace.z[step], &trace.n[step], &trace.gh_n[step], &trace.h_prev[step]);
            let dh: Vec<f64> = (0..h).map(|i| dh_next[i] + dout[t * h + i]).collect();
            let dgi = &mut dgi_all[t * 3 * h..(t + 1) * 3 * h];
            let mut dgh = vec![0.0; 3 * h];
            let mut dh_prev = vec![0.0; h];
            for i in 0..h {
                let dn = dh[i] * (1.0 - z[i]);
                let dz = dh[i] * (h_prev[i] - n[i]);
                dh_prev[i] = dh[i] * z[i];
                let dn_pre = dn * (1.0 - n[i] * n[i]);
                let dr = dn_pre * gh_n[i];
                let dr_pre = dr * r[i] * (1.0 - r[i]);
                let dz_pre = dz * z[i] * (1.0 - z[i]);
                dgi[i] = dr_pre;
                dgi[h + i] = dz_pre;
                dgi[2 * h + i] = dn_pre;
                dgh[i] = dr_pre;
                dgh[h + i] = dz_pre;
                dgh[2 * h + i] = dn_pre * r[i];
            }
            gemv_back(w_hh, h_prev, &dgh, &mut dw_hh, &mut dh_prev);
            for i in 0..3 * h {
                db_ih[i] += dgi[i];
                db_hh[i] += dgh[i];
            }
            dh_next = dh_prev;
        }
        let (d, g3) = (self.in_dim, 3 * h);
        gemm_acc((g3, frames, d), &dgi_all, (1, g3), x, (d, 1), grads.get_mut(self.w_ih), (d, 1));
        gemm_acc((frames, g3, d), &dgi_all, (g3, 1), ps.get(self.w_ih), (d, 1), dx, (d, 1));
        grads.get_mut(self.w_hh).copy_from_slice(&dw_hh);
        grads.get_mut(self.b_ih).copy_from_slice(&db_ih);
        grads.get_mut(self.b_hh).copy_from_slice(&db_hh);
    }
}

/// `[channel][time][freq]` → `[time][channel·freq]`.
pub fn to_frames(x: &[f64], ch: usize, t: usize, f: usize) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    for c in 0..ch {
        for ti in 0..t {
            out[ti * ch * f + c * f..ti * ch * f + (c + 1) * f].copy_from_slice(&x[(c * t + ti) * f..(c * t + ti + 1) * f]);
        }
    }
    out
}

/// Inverse of [`to_frames`].
pub fn from_frames(x: &[f64], ch: usize, t: usize, f: usize) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    for c in 0..ch {
        for ti in 0..t {
            out[(c * t + ti) * f..(c * t + ti + 1) * f].copy_from_slice(&x[ti * ch * f + c * f..ti * ch * f + (c + 1) * f]);
        }
    }
    out
}

/// Bidirectional recurrence: output frame `t` is `[forward_h(t), backward_h(t)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BiGru {
    pub forward: GruCell,
    pub backward: GruCell,
}

#[derive(Debug, Clone, Default)]
pub struct BiGruTrace {
    fwd: GruTrace,
    bwd: GruTrace,
}

impl BiGru {
    pub fn new(ps: &mut ParamSet, name: &str, in_dim: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        BiGru {
            forward: GruCell::new(ps, &format!("{name}.fwd"), in_dim, hidden, rng),
            backward: GruCell::new(ps, &format!("{name}.bwd"), in_dim, hidden, rng),
        }
    }

    pub fn out_dim(&self) -> usize {
        2 * self.forward.hidden
    }

    pub fn forward(&self, ps: &ParamSet, x: &[f64]) -> (Vec<f64>, BiGruTrace) {
        let frames = x.len() / self.forward.in_dim;
        let asc: Vec<usize> = (0..frames).collect();
        let desc: Vec<usize> = (0..frames).rev().collect();
        let (hf, tf) = self.forward.run(ps, x, &asc);
        let (hb, tb) = self.backward.run(ps, x, &desc);
        let h = self.forward.hidden;
        let mut out = Vec::with_capacity(frames * 2 * h);
        for t in 0..frames {
            out.extend_from_slice(&hf[t * h..(t + 1) * h]);
            out.extend_from_slice(&hb[t * h..(t + 1) * h]);
        }
        (out, BiGruTrace { fwd: tf, bwd: tb })
    }

    pub fn backward(&self, ps: &ParamSet, x: &[f64], trace: &BiGruTrace, dout: &[f64], grads: &mut ParamSet) -> Vec<f64> {
        let frames = x.len() / self.forward.in_dim;
        let h = self.forward.hidden;
        let mut df = vec![0.0; frames * h];
        let mut db = vec![0.0; frames * h];
        for t in 0..frames {
            df[t * h..(t + 1) * h].copy_from_slice(&dout[t * 2 * h..t * 2 * h + h]);
            db[t * h..(t + 1) * h].copy_from_slice(&dout[t * 2 * h + h..(t + 1) * 2 * h]);
        }
        let mut dx = vec![0.0; x.len()];
        let asc: Vec<usize> = (0..frames).collect();
        let desc: Vec<usize> = (0..frames).rev().collect();
        self.forward.run_backward(ps, x, &asc, &trace.fwd, &df, grads, &mut dx);
        self.backward.run_backward(ps, x, &desc, &trace.bwd, &db, grads, &mut dx);
        dx
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;

    /// Central-difference check of `loss = Σ dout ⊙ f(params, x)` for every
    /// parameter and input entry.
    fn check<F>(ps: &mut ParamSet, x: &mut Vec<f64>, f: F, backward: impl Fn(&ParamSet, &[f64], &[f64], &mut ParamSet) -> Vec<f64>)
    where
        F: Fn(&ParamSet, &[f64]) -> Vec<f64>,
    {
        let out = f(ps, x);
        let dout: Vec<f64> = (0..out.len()).map(|i| ((i * 7919) % 13) as f64 / 13.0 - 0.4).collect();
        let loss = |ps: &ParamSet, x: &[f64]| f(ps, x).iter().zip(&dout).map(|(a, b)| a * b).sum::<f64>();
        let mut grads = ps.zeros_like();
        let dx = backward(ps, x, &dout, &mut grads);
        let h = 1e-6;
        for ti in 0..ps.tensors.len() {
            for i in 0..ps.tensors[ti].data.len() {
                let orig = ps.tensors[ti].data[i];
                ps.tensors[ti].data[i] = orig + h;
                let up = loss(ps, x);
                ps.tensors[ti].data[i] = orig - h;
                let down = loss(ps, x);
                ps.tensors[ti].data[i] = orig;
                let fd = (up - down) / (2.0 * h);
                let an = grads.tensors[ti].data[i];
                assert!((fd - an).abs() <= 1e-6 * (1.0 + fd.abs()), "{} [{i}]: fd {fd} vs {an}", ps.tensors[ti].name);
            }
        }
        for i in 0..x.len() {
            let orig = x[i];
            x[i] = orig + h;
            let up = loss(ps, x);
            x[i] = orig - h;
            let down = loss(ps, x);
            x[i] = orig;
            let fd = (up - down) / (2.0 * h);
            assert!((fd - dx[i]).abs() <= 1e-6 * (1.0 + fd.abs()), "input[{i}]: fd {fd} vs {}", dx[i]);
        }
    }

    fn random_vec(n: usize, s: u64) -> Vec<f64> {
        let mut rng = seed::rng(s);
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    fn randomize_biases(ps: &mut ParamSet) {
        let mut rng = seed::rng(77);
        for t in &mut ps.tensors {
            for v in &mut t.data {
                if *v == 0.0 {
                    *v = rng.random_range(-0.3..0.3);
                }
            }
        }
    }

    #[test]
    fn conv2d_gradients() {
        let mut ps = ParamSet::default();
        let conv = Conv2d::new(&mut ps, "c", 2, 3, &mut seed::rng(1));
        randomize_biases(&mut ps);
        let mut x = random_vec(2 * 4 * 5, 2);
        check(&mut ps, &mut x, |p, x| conv.forward(p, x, 4, 5), |p, x, g, gr| conv.backward(p, x, 4, 5, g, gr));
    }

    #[test]
    fn linear_and_timeconv_gradients() {
        let mut ps = ParamSet::default();
        let lin = Linear::new(&mut ps, "l", 4, 3, &mut seed::rng(1));
        randomize_biases(&mut ps);
        let mut x = random_vec(5 * 4, 3);
        check(&mut ps, &mut x, |p, x| lin.forward(p, x), |p, x, g, gr| lin.backward(p, x, g, gr));

        let mut ps = ParamSet::default();
        let tc = TimeConv::new(&mut ps, "t", 3, 2, &mut seed::rng(4));
        randomize_biases(&mut ps);
        let mut x = random_vec(6 * 3, 5);
        check(&mut ps, &mut x, |p, x| tc.forward(p, x), |p, x, g, gr| tc.backward(p, x, g, gr));
    }

    #[test]
    fn bigru_gradients() {
        let mut ps = ParamSet::default();
        let gru = BiGru::new(&mut ps, "g", 3, 4, &mut seed::rng(6));
        randomize_biases(&mut ps);
        let mut x = random_vec(5 * 3, 7);
        check(&mut ps, &mut x, |p, x| gru.forward(p, x).0, |p, x, g, gr| {
            let (_, trace) = gru.forward(p, x);
            gru.backward(p, x, &trace, g, gr)
        });
    }

    #[test]
    fn pooling_adjoint() {
        let x = random_vec(2 * 5 * 7, 8);
        let y = avg_pool2(&x, 2, 5, 7);
        assert_eq!(y.len(), 2 * 2 * 3);
        let g = random_vec(y.len(), 9);
        let dx = avg_pool2_backward(&g, 2, 5, 7);
        let lhs: f64 = y.iter().zip(&g).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(&dx).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn sigmoid_is_stable() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(800.0) <= 1.0);
    }
}

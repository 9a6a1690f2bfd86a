//! GRU cell, Adam, and the flat parameter layout shared by the optimizer
//! and the checkpoint format. Double precision, no framework: analytic
//! gradients here are covered by finite-difference checks in the tests.

use ndarray::{Array1, Array2};
use rand::Rng;

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Gate weights for one GRU cell:
/// z = sigmoid(Wz x + Uz h + bz), r = sigmoid(Wr x + Ur h + br),
/// n = tanh(Wn x + Un (r*h) + bn), h' = (1-z)*n + z*h.
#[derive(Debug, Clone, PartialEq)]
pub struct GruParams {
    pub wz: Array2<f64>,
    pub uz: Array2<f64>,
    pub bz: Array1<f64>,
    pub wr: Array2<f64>,
    pub ur: Array2<f64>,
    pub br: Array1<f64>,
    pub wn: Array2<f64>,
    pub un: Array2<f64>,
    pub bn: Array1<f64>,
}

pub fn xavier<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> Array2<f64> {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-limit..=limit))
}

impl GruParams {
    pub fn zeros(n_in: usize, n_h: usize) -> GruParams {
        GruParams {
            wz: Array2::zeros((n_h, n_in)),
            uz: Array2::zeros((n_h, n_h)),
            bz: Array1::zeros(n_h),
            wr: Array2::zeros((n_h, n_in)),
            ur: Array2::zeros((n_h, n_h)),
            br: Array1::zeros(n_h),
            wn: Array2::zeros((n_h, n_in)),
            un: Array2::zeros((n_h, n_h)),
            bn: Array1::zeros(n_h),
        }
    }

    pub fn init<R: Rng>(rng: &mut R, n_in: usize, n_h: usize) -> GruParams {
        GruParams {
            wz: xavier(rng, n_h, n_in),
            uz: xavier(rng, n_h, n_h),
            bz: Array1::zeros(n_h),
            wr: xavier(rng, n_h, n_in),
            ur: xavier(rng, n_h, n_h),
            br: Array1::zeros(n_h),
            wn: xavier(rng, n_h, n_in),
            un: xavier(rng, n_h, n_h),
            bn: Array1::zeros(n_h),
        }
    }

    pub fn n_in(&self) -> usize {
        self.wz.ncols()
    }

    pub fn n_h(&self) -> usize {
        self.wz.nrows()
    }
}

/// Per-step forward cache needed by the backward pass.
#[derive(Debug, Clone)]
pub struct GruCache {
    pub x: Array1<f64>,
    pub h_prev: Array1<f64>,
    pub z: Array1<f64>,
    pub r: Array1<f64>,
    pub n: Array1<f64>,
    /// r * h_prev, the input Un actually saw.
    pub rh: Array1<f64>,
}

/// One GRU step; the pure operation without caching.
pub fn gru_step(p: &GruParams, x: &Array1<f64>, h: &Array1<f64>) -> Array1<f64> {
    gru_step_cached(p, x, h).0
}

pub fn gru_step_cached(p: &GruParams, x: &Array1<f64>, h: &Array1<f64>) -> (Array1<f64>, GruCache) {
    debug_assert_eq!(x.len(), p.n_in(), "input dimension mismatch");
    debug_assert_eq!(h.len(), p.n_h(), "hidden dimension mismatch");
    let z = (p.wz.dot(x) + p.uz.dot(h) + &p.bz).mapv(sigmoid);
    let r = (p.wr.dot(x) + p.ur.dot(h) + &p.br).mapv(sigmoid);
    let rh = &r * h;
    let n = (p.wn.dot(x) + p.un.dot(&rh) + &p.bn).mapv(f64::tanh);
    let h_next = (1.0 - &z) * &n + &z * h;
    let cache = GruCache {
        x: x.clone(),
        h_prev: h.clone(),
        z,
        r,
        n,
        rh,
    };
    (h_next, cache)
}

/// acc += a (outer) b.
pub fn add_outer(acc: &mut Array2<f64>, a: &Array1<f64>, b: &Array1<f64>) {
    for (i, &ai) in a.iter().enumerate() {
        if ai == 0.0 {
            continue;
        }
        let mut row = acc.row_mut(i);
        for (j, &bj) in b.iter().enumerate() {
            row[j] += ai * bj;
        }
    }
}

/// Backward through one step. `dh_next` is dL/dh'. Accumulates parameter
/// gradients into `grads` and returns (dx, dh_prev).
pub fn gru_step_backward(
    p: &GruParams,
    cache: &GruCache,
    dh_next: &Array1<f64>,
    grads: &mut GruParams,
) -> (Array1<f64>, Array1<f64>) {
    let GruCache { x, h_prev, z, r, n, rh } = cache;
    // da_z, da_r, da_n are gradients at the pre-activations.
    let da_z = dh_next * &(h_prev - n) * z * &(1.0 - z);
    let da_n = dh_next * &(1.0 - z) * &(1.0 - n * n);
    let d_rh = p.un.t().dot(&da_n);
    let da_r = &d_rh * h_prev * r * &(1.0 - r);

    add_outer(&mut grads.wz, &da_z, x);
    add_outer(&mut grads.uz, &da_z, h_prev);
    grads.bz += &da_z;
    add_outer(&mut grads.wr, &da_r, x);
    add_outer(&mut grads.ur, &da_r, h_prev);
    grads.br += &da_r;
    add_outer(&mut grads.wn, &da_n, x);
    add_outer(&mut grads.un, &da_n, rh);
    grads.bn += &da_n;

    let dx = p.wz.t().dot(&da_z) + p.wr.t().dot(&da_r) + p.wn.t().dot(&da_n);
    let dh_prev = dh_next * z + p.uz.t().dot(&da_z) + p.ur.t().dot(&da_r) + &d_rh * r;
    (dx, dh_prev)
}

/// Runs the cell across a sequence from h0; returns hidden states h_1..h_T
/// and the caches.
pub fn gru_forward(
    p: &GruParams,
    xs: &[Array1<f64>],
    h0: &Array1<f64>,
) -> (Vec<Array1<f64>>, Vec<GruCache>) {
    let mut hs = Vec::with_capacity(xs.len());
    let mut caches = Vec::with_capacity(xs.len());
    let mut h = h0.clone();
    for x in xs {
        let (h_next, cache) = gru_step_cached(p, x, &h);
        hs.push(h_next.clone());
        caches.push(cache);
        h = h_next;
    }
    (hs, caches)
}

/// Backward across a sequence. `dh_steps[t]` is the direct dL/dh_{t+1}
/// contribution (per-step heads); `dh_final` adds onto the last step.
/// Truncation: only the last `bptt` steps are processed, everything earlier
/// contributes nothing. Returns (grads, dxs, dh0); dxs entries for truncated
/// steps are zero, dh0 is zero whenever truncation cut the recurrence.
pub fn gru_backward(
    p: &GruParams,
    caches: &[GruCache],
    dh_steps: &[Array1<f64>],
    dh_final: &Array1<f64>,
    bptt: usize,
) -> (GruParams, Vec<Array1<f64>>, Array1<f64>) {
    let t_len = caches.len();
    assert_eq!(dh_steps.len(), t_len);
    let n_h = p.n_h();
    let mut grads = GruParams::zeros(p.n_in(), n_h);
    let mut dxs = vec![Array1::zeros(p.n_in()); t_len];
    let mut carry = Array1::zeros(n_h);
    let mut dh0 = Array1::zeros(n_h);
    let first = t_len.saturating_sub(bptt);
    for t in (first..t_len).rev() {
        let mut dh = &dh_steps[t] + &carry;
        if t == t_len - 1 {
            dh += dh_final;
        }
        let (dx, dh_prev) = gru_step_backward(p, &caches[t], &dh, &mut grads);
        dxs[t] = dx;
        if t == 0 {
            dh0 = dh_prev;
        } else {
            carry = dh_prev;
        }
    }
    if first > 0 {
        dh0 = Array1::zeros(n_h);
    }
    (grads, dxs, dh0)
}

// ── flat parameter layout ──
// Order inside a GRU block: wz, uz, bz, wr, ur, br, wn, un, bn, matrices
// row-major. Higher-level structs define their own field order on top of
// this; the checkpoint file stores exactly these flats.

pub fn push_mat(out: &mut Vec<f64>, m: &Array2<f64>) {
    out.extend(m.iter());
}

pub fn push_vec(out: &mut Vec<f64>, v: &Array1<f64>) {
    out.extend(v.iter());
}

pub fn read_mat(cur: &mut &[f64], rows: usize, cols: usize) -> Array2<f64> {
    let n = rows * cols;
    let (head, rest) = cur.split_at(n);
    *cur = rest;
    Array2::from_shape_vec((rows, cols), head.to_vec()).unwrap()
}

pub fn read_vec(cur: &mut &[f64], n: usize) -> Array1<f64> {
    let (head, rest) = cur.split_at(n);
    *cur = rest;
    Array1::from_vec(head.to_vec())
}

pub fn push_gru(out: &mut Vec<f64>, p: &GruParams) {
    push_mat(out, &p.wz);
    push_mat(out, &p.uz);
    push_vec(out, &p.bz);
    push_mat(out, &p.wr);
    push_mat(out, &p.ur);
    push_vec(out, &p.br);
    push_mat(out, &p.wn);
    push_mat(out, &p.un);
    push_vec(out, &p.bn);
}

pub fn read_gru(cur: &mut &[f64], n_in: usize, n_h: usize) -> GruParams {
    GruParams {
        wz: read_mat(cur, n_h, n_in),
        uz: read_mat(cur, n_h, n_h),
        bz: read_vec(cur, n_h),
        wr: read_mat(cur, n_h, n_in),
        ur: read_mat(cur, n_h, n_h),
        br: read_vec(cur, n_h),
        wn: read_mat(cur, n_h, n_in),
        un: read_mat(cur, n_h, n_h),
        bn: read_vec(cur, n_h),
    }
}

/// Plain Adam over a flat parameter vector.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(lr: f64, n_params: usize) -> Adam {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
        }
    }

    pub fn step(&mut self, theta: &mut [f64], grad: &[f64]) {
        assert_eq!(theta.len(), self.m.len());
        assert_eq!(grad.len(), self.m.len());
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..theta.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let mhat = self.m[i] / bc1;
            let vhat = self.v[i] / bc2;
            theta[i] -= self.lr * mhat / (vhat.sqrt() + self.eps);
        }
    }
}

/// theta_target <- tau * theta + (1 - tau) * theta_target, elementwise.
pub fn soft_update(target: &mut [f64], online: &[f64], tau: f64) {
    assert_eq!(target.len(), online.len());
    for (t, &o) in target.iter_mut().zip(online) {
        *t = tau * o + (1.0 - tau) * *t;
    }
}

//! Upward count propagation through the gamma layers and the per-document
//! conjugate updates that follow it.
//!
//! Layer-one weights `w_jks` are a priori independent `Gam(alpha_k, 1/c)`
//! with `alpha_k = r_k` (CPFA) or `a_k / S_j` with `a = Phi^(2) theta^(2)`
//! (the pooled model; a gamma-Dirichlet decomposition of the same law). The
//! upward pass therefore draws table counts per window start, which lets the
//! weights and the pooling proportions be integrated out when the layers
//! above are updated.

use rand::Rng;

use crate::error::Result;
use crate::model::{DocLocalState, Globals};
use crate::samplers::{sample_crt, sample_dirichlet_into, sample_gamma, sample_multinomial_into};

use super::augment::DocStats;
use super::conditionals::{
    c_params, next_q, pi_params, theta1_params, theta_params, w_cpfa_params, GammaParams,
};

/// Tables and splits produced by [`upward_pass`] for one document.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct UpwardCounts {
    /// `tables[t-1]` is `x^(t+1)` with one entry per node of layer `t`. The
    /// last vector holds the tables counted against `r`.
    pub tables: Vec<Vec<u32>>,
    /// `layer_counts[t-2]` is `m^(t)` for `t = 2..T`.
    pub layer_counts: Vec<Vec<u32>>,
    /// `splits[t-2]` lists `(row, column, count)` entries of `Phi^(t)`'s counts.
    pub splits: Vec<Vec<(u32, u32, u32)>>,
    /// `q[t-1]` is `q^(t)`, with `q^(1) = 1`.
    pub q: Vec<f64>,
    /// Rate multiplying `r_k` in the Poisson law of the top tables.
    pub r_rate: f64,
}

impl UpwardCounts {
    pub fn top_tables(&self) -> &[u32] {
        self.tables.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

fn positive(x: f64) -> f64 {
    x.max(f64::MIN_POSITIVE)
}

fn draw<R: Rng + ?Sized>(p: GammaParams, rng: &mut R) -> Result<f64> {
    sample_gamma(p.shape, p.scale(), rng)
}

/// Shape of `theta^(t)`'s prior: `Phi^(t+1) theta^(t+1)`, or `r` at the top.
pub fn prior_shape(globals: &Globals, state: &DocLocalState, t: usize) -> Vec<f64> {
    if t == globals.hyper.depth() {
        globals.layers.r.clone()
    } else {
        globals.layers.phi(t + 1).mul_vec(&state.theta[t])
    }
}

/// Per-window shape `alpha_k` of the layer-one weights.
pub fn layer1_shape(globals: &Globals, state: &DocLocalState) -> Vec<f64> {
    if globals.is_deep() {
        let s = state.windows as f64;
        prior_shape(globals, state, 1)
            .into_iter()
            .map(|a| positive(a / s))
            .collect()
    } else {
        globals.layers.r.clone()
    }
}

/// Scale recursion for a document: `q^(1) = 1`, `q^(t+1) = ln(1 + q^(t)/c^(t+1))`.
pub fn scale_chain(c: &[f64]) -> (Vec<f64>, f64) {
    let mut q = vec![1.0];
    for t in 1..c.len() {
        let next = next_q(q[t - 1], c[t - 1]);
        q.push(next);
    }
    let top = next_q(q[c.len() - 1], c[c.len() - 1]);
    (q, top)
}

/// Propagates the augmented layer-one counts up through every layer.
pub fn upward_pass<R: Rng + ?Sized>(
    globals: &Globals,
    stats: &DocStats,
    state: &DocLocalState,
    rng: &mut R,
) -> Result<UpwardCounts> {
    let depth = globals.hyper.depth();
    let k1 = globals.hyper.num_kernels();
    let windows = state.windows;
    let alpha = layer1_shape(globals, state);
    let mut x = vec![0u32; k1];
    for k in 0..k1 {
        for &n in stats.position_counts(k) {
            x[k] = x[k].saturating_add(sample_crt(n, alpha[k], rng)?);
        }
    }
    let (q, top_q) = scale_chain(&state.c);
    let mut out = UpwardCounts {
        tables: vec![x],
        q,
        ..Default::default()
    };
    if depth == 1 {
        out.r_rate = windows as f64 * (1.0 / state.c[0]).ln_1p();
        return Ok(out);
    }
    out.r_rate = top_q;
    let mut weights = Vec::new();
    let mut row = Vec::new();
    for t in 2..=depth {
        let phi = globals.layers.phi(t);
        let theta = &state.theta[t - 1];
        let below = out.tables.last().expect("seeded");
        let mut m = vec![0u32; phi.cols];
        let mut split = Vec::new();
        for (k, &xk) in below.iter().enumerate() {
            if xk == 0 {
                continue;
            }
            weights.clear();
            weights.extend(phi.row(k).iter().zip(theta).map(|(p, th)| p * th));
            row.clear();
            row.resize(phi.cols, 0);
            sample_multinomial_into(xk, &weights, &mut row, rng)?;
            for (kk, &y) in row.iter().enumerate() {
                if y > 0 {
                    m[kk] = m[kk].saturating_add(y);
                    split.push((k as u32, kk as u32, y));
                }
            }
        }
        let shape = prior_shape(globals, state, t);
        let mut next = vec![0u32; phi.cols];
        for (kk, &mk) in m.iter().enumerate() {
            next[kk] = sample_crt(mk, positive(shape[kk]), rng)?;
        }
        out.layer_counts.push(m);
        out.splits.push(split);
        out.tables.push(next);
    }
    Ok(out)
}

/// CPFA weights `w_jks ~ Gam(m_jk..s + r_k, rate 1 + c_j)`, laid out `[k][s]`.
pub fn update_w_cpfa<R: Rng + ?Sized>(
    stats: &DocStats,
    r: &[f64],
    c: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let windows = stats.windows;
    let mut w = vec![0.0; r.len() * windows];
    for (k, &rk) in r.iter().enumerate() {
        for (s, &n) in stats.position_counts(k).iter().enumerate() {
            w[k * windows + s] = draw(w_cpfa_params(n, rk, c), rng)?;
        }
    }
    Ok(w)
}

/// Layer-one updates of the pooled model: `theta^(1)`, `pi` and `w = pi theta^(1)`.
pub fn update_layer1_locals<R: Rng + ?Sized>(
    stats: &DocStats,
    a2: &[f64],
    c2: f64,
    rng: &mut R,
) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let windows = stats.windows;
    let k1 = a2.len();
    let mut theta = vec![0.0; k1];
    let mut pi = vec![0.0; k1 * windows];
    let mut w = vec![0.0; k1 * windows];
    for k in 0..k1 {
        let a = positive(a2[k]);
        theta[k] = draw(theta1_params(stats.totals[k], a, c2), rng)?;
        let alpha = pi_params(stats.position_counts(k), a);
        let alpha: Vec<f64> = alpha.into_iter().map(positive).collect();
        let pk = &mut pi[k * windows..(k + 1) * windows];
        sample_dirichlet_into(&alpha, pk, rng)?;
        for s in 0..windows {
            w[k * windows + s] = pk[s] * theta[k];
        }
    }
    Ok((theta, pi, w))
}

/// Resamples every local variable of a document given its counts.
pub fn downward_locals<R: Rng + ?Sized>(
    globals: &Globals,
    stats: &DocStats,
    up: &UpwardCounts,
    state: &mut DocLocalState,
    rng: &mut R,
) -> Result<()> {
    let hyper = &globals.hyper;
    let depth = hyper.depth();
    if depth == 1 {
        let r = &globals.layers.r;
        state.w = update_w_cpfa(stats, r, state.c[0], rng)?;
        state.theta[0] = (0..r.len()).map(|k| state.weights(k).iter().sum()).collect();
        let shape_sum = state.windows as f64 * r.iter().sum::<f64>();
        let mass: f64 = state.w.iter().sum();
        state.c[0] = draw(c_params(hyper.e0, hyper.f0, shape_sum, mass), rng)?;
        return Ok(());
    }
    for t in (2..=depth).rev() {
        let shape = prior_shape(globals, state, t);
        let m = &up.layer_counts[t - 2];
        let (c_next, q) = (state.c[t - 1], up.q[t - 1]);
        for k in 0..shape.len() {
            state.theta[t - 1][k] = draw(theta_params(positive(shape[k]), m[k], c_next, q), rng)?;
        }
    }
    let a2 = prior_shape(globals, state, 1);
    let (theta, pi, w) = update_layer1_locals(stats, &a2, state.c[0], rng)?;
    state.theta[0] = theta;
    state.pi = pi;
    state.w = w;
    for t in 1..=depth {
        let shape_sum: f64 = prior_shape(globals, state, t).iter().sum();
        let act: f64 = state.theta[t - 1].iter().sum();
        state.c[t - 1] = draw(c_params(hyper.e0, hyper.f0, shape_sum, act), rng)?;
    }
    Ok(())
}

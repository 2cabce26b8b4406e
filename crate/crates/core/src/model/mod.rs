//! Global and per-document model state, convolutional rates and likelihoods.
//!
//! Storage is 0-based: word position `l` in `0..L` and window start `s` in
//! `0..S` with `S = L - F + 1`. A window starting at `s` covers positions
//! `s..s + F`, and the kernel column used at position `l` is `f = l - s`.

mod checkpoint;
pub(crate) mod rate;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use checkpoint::{ArraySpec, Checkpoint, CheckpointHeader, EncoderSection, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use rate::{bp_loglik, conv_rate, log1mexp, point_loglik, pool_weights, total_rate, Loglik};

use crate::error::{Error, Result};
use crate::samplers::{sample_dirichlet_into, sample_gamma};

/// Model hyperparameters. `layer_widths[t]` is `K^(t+1)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub filter_width: usize,
    pub layer_widths: Vec<usize>,
    /// Dirichlet concentration per layer; `eta[0]` is for the kernels.
    pub eta: Vec<f64>,
    pub e0: f64,
    pub f0: f64,
    /// Shape and rate of the gamma prior on the top-layer vector `r`.
    pub gamma0_shape: f64,
    pub gamma0_rate: f64,
}

impl Hyperparams {
    /// Defaults: eta = 0.05 per layer, e0 = f0 = 0.1, r ~ Gam(1/K_top, 1).
    pub fn new(filter_width: usize, layer_widths: Vec<usize>) -> Self {
        let top = *layer_widths.last().unwrap_or(&1) as f64;
        let depth = layer_widths.len();
        Self {
            filter_width,
            layer_widths,
            eta: vec![0.05; depth],
            e0: 0.1,
            f0: 0.1,
            gamma0_shape: 1.0 / top,
            gamma0_rate: 1.0,
        }
    }

    pub fn depth(&self) -> usize {
        self.layer_widths.len()
    }

    pub fn num_kernels(&self) -> usize {
        self.layer_widths[0]
    }

    pub fn top_width(&self) -> usize {
        *self.layer_widths.last().expect("validated")
    }

    pub fn validate(&self) -> Result<()> {
        if self.filter_width == 0 {
            return Err(Error::invalid("filter width must be at least 1"));
        }
        if self.layer_widths.is_empty() || self.layer_widths.contains(&0) {
            return Err(Error::invalid("layer widths must be nonempty and positive"));
        }
        if self.eta.len() != self.layer_widths.len() {
            return Err(Error::invalid("need one eta per layer"));
        }
        let positive = self
            .eta
            .iter()
            .chain([&self.e0, &self.f0, &self.gamma0_shape, &self.gamma0_rate])
            .all(|&x| x.is_finite() && x > 0.0);
        if !positive {
            return Err(Error::invalid("eta, e0, f0 and the r prior must be positive"));
        }
        Ok(())
    }
}

/// Positive entries of a document's binary `|V| x L` matrix.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Observation {
    pub length: usize,
    /// `(word, position)` pairs, sorted by position then word, no duplicates.
    pub entries: Vec<(u32, u32)>,
}

impl Observation {
    pub fn from_tokens(tokens: &[u32]) -> Self {
        Self {
            length: tokens.len(),
            entries: tokens
                .iter()
                .enumerate()
                .map(|(l, &v)| (v, l as u32))
                .collect(),
        }
    }

    /// Builds an observation from arbitrary positive entries.
    pub fn from_entries(length: usize, mut entries: Vec<(u32, u32)>) -> Result<Self> {
        entries.sort_by_key(|&(v, l)| (l, v));
        entries.dedup();
        if entries.iter().any(|&(_, l)| l as usize >= length) {
            return Err(Error::PositionOutOfRange {
                position: entries.last().map(|e| e.1 as usize).unwrap_or(0),
                length,
            });
        }
        Ok(Self { length, entries })
    }

    /// Number of window starts `S = L - F + 1`.
    pub fn windows(&self, filter_width: usize) -> Option<usize> {
        (self.length >= filter_width).then(|| self.length - filter_width + 1)
    }
}

/// `K` nonnegative kernels of shape `|V| x F`, each summing to one when
/// flattened. Stored row-major as `[k][v][f]`.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelBank {
    vocab_size: usize,
    width: usize,
    num_kernels: usize,
    data: Vec<f64>,
}

impl KernelBank {
    pub fn from_data(
        num_kernels: usize,
        vocab_size: usize,
        width: usize,
        data: Vec<f64>,
    ) -> Result<Self> {
        if data.len() != num_kernels * vocab_size * width {
            return Err(Error::Shape(format!(
                "kernel data has {} entries, expected {num_kernels}x{vocab_size}x{width}",
                data.len()
            )));
        }
        if num_kernels == 0 || vocab_size == 0 || width == 0 {
            return Err(Error::Shape("kernel dimensions must be positive".into()));
        }
        Ok(Self {
            vocab_size,
            width,
            num_kernels,
            data,
        })
    }

    /// Draws every kernel from a symmetric Dirichlet(eta) over `|V| F` entries.
    pub fn from_prior<R: Rng + ?Sized>(
        num_kernels: usize,
        vocab_size: usize,
        width: usize,
        eta: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let mut bank = Self::from_data(
            num_kernels,
            vocab_size,
            width,
            vec![0.0; num_kernels * vocab_size * width],
        )?;
        let alpha = vec![eta; vocab_size * width];
        for k in 0..num_kernels {
            sample_dirichlet_into(&alpha, bank.kernel_mut(k), rng)?;
        }
        Ok(bank)
    }

    pub fn num_kernels(&self) -> usize {
        self.num_kernels
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn kernel_len(&self) -> usize {
        self.vocab_size * self.width
    }

    #[inline]
    pub fn get(&self, k: usize, v: usize, f: usize) -> f64 {
        self.data[(k * self.vocab_size + v) * self.width + f]
    }

    /// Flattened kernel `D_k(:)` in `[v][f]` order.
    pub fn kernel(&self, k: usize) -> &[f64] {
        let n = self.kernel_len();
        &self.data[k * n..(k + 1) * n]
    }

    pub fn kernel_mut(&mut self, k: usize) -> &mut [f64] {
        let n = self.kernel_len();
        &mut self.data[k * n..(k + 1) * n]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Checks nonnegativity and unit mass of every kernel within `tol`.
    pub fn check_simplex(&self, tol: f64) -> Result<()> {
        for k in 0..self.num_kernels {
            let d = self.kernel(k);
            if d.iter().any(|&x| !(x >= 0.0)) {
                return Err(Error::invalid(format!("kernel {k} has a negative entry")));
            }
            let total: f64 = d.iter().sum();
            if (total - 1.0).abs() > tol {
                return Err(Error::invalid(format!("kernel {k} sums to {total}")));
            }
        }
        Ok(())
    }
}

/// Row-major dense matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_data(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!("matrix data for {rows}x{cols}")));
        }
        Ok(Self { rows, cols, data })
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, x: f64) {
        self.data[r * self.cols + c] = x;
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    pub fn set_column(&mut self, c: usize, values: &[f64]) {
        for (r, &x) in values.iter().enumerate() {
            self.set(r, c, x);
        }
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// `self * x`.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.rows)
            .map(|r| self.row(r).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// `self^T * y`.
    pub fn tr_mul_vec(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for (r, &yr) in y.iter().enumerate() {
            for (o, a) in out.iter_mut().zip(self.row(r)) {
                *o += a * yr;
            }
        }
        out
    }
}

/// The gamma belief network above layer one: `phis[i]` is `Phi^(i+2)` of
/// shape `K^(i+1) x K^(i+2)` with simplex columns; `r` feeds the top layer.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerStack {
    pub phis: Vec<Matrix>,
    pub r: Vec<f64>,
}

impl LayerStack {
    pub fn from_prior<R: Rng + ?Sized>(hyper: &Hyperparams, rng: &mut R) -> Result<Self> {
        let mut phis = Vec::with_capacity(hyper.depth().saturating_sub(1));
        for t in 1..hyper.depth() {
            let (rows, cols) = (hyper.layer_widths[t - 1], hyper.layer_widths[t]);
            let mut m = Matrix::zeros(rows, cols);
            let alpha = vec![hyper.eta[t]; rows];
            let mut col = vec![0.0; rows];
            for c in 0..cols {
                sample_dirichlet_into(&alpha, &mut col, rng)?;
                m.set_column(c, &col);
            }
            phis.push(m);
        }
        let r = (0..hyper.top_width())
            .map(|_| sample_gamma(hyper.gamma0_shape, 1.0 / hyper.gamma0_rate, rng))
            .collect::<Result<_>>()?;
        Ok(Self { phis, r })
    }

    /// `Phi^(t)` for `t >= 2`.
    pub fn phi(&self, t: usize) -> &Matrix {
        &self.phis[t - 2]
    }

    pub fn depth(&self) -> usize {
        self.phis.len() + 1
    }

    pub fn check_simplex(&self, tol: f64) -> Result<()> {
        for (i, m) in self.phis.iter().enumerate() {
            for c in 0..m.cols {
                let col = m.column(c);
                let total: f64 = col.iter().sum();
                if col.iter().any(|&x| !(x >= 0.0)) || (total - 1.0).abs() > tol {
                    return Err(Error::invalid(format!(
                        "column {c} of layer {} sums to {total}",
                        i + 2
                    )));
                }
            }
        }
        if self.r.iter().any(|&x| !(x > 0.0)) {
            return Err(Error::invalid("r must be strictly positive"));
        }
        Ok(())
    }
}

/// Global parameters shared by all documents.
#[derive(Clone, Debug, PartialEq)]
pub struct Globals {
    pub hyper: Hyperparams,
    pub bank: KernelBank,
    pub layers: LayerStack,
}

impl Globals {
    pub fn from_prior<R: Rng + ?Sized>(
        hyper: Hyperparams,
        vocab_size: usize,
        rng: &mut R,
    ) -> Result<Self> {
        hyper.validate()?;
        let bank = KernelBank::from_prior(
            hyper.num_kernels(),
            vocab_size,
            hyper.filter_width,
            hyper.eta[0],
            rng,
        )?;
        let layers = LayerStack::from_prior(&hyper, rng)?;
        Ok(Self {
            hyper,
            bank,
            layers,
        })
    }

    pub fn is_deep(&self) -> bool {
        self.hyper.depth() >= 2
    }
}

/// Per-document latent variables.
#[derive(Clone, Debug, PartialEq)]
pub struct DocLocalState {
    /// Number of window starts `S`.
    pub windows: usize,
    /// `w[k * S + s]`.
    pub w: Vec<f64>,
    /// `theta[t]` is the layer-(t+1) activation.
    pub theta: Vec<Vec<f64>>,
    /// Pooling proportions `pi[k * S + s]`; empty for single-layer models.
    pub pi: Vec<f64>,
    /// Gamma rates `c[t]` = `c^(t+2)`.
    pub c: Vec<f64>,
    /// Latent counts aligned with the observation entries.
    pub counts: Vec<u32>,
}

impl DocLocalState {
    /// Draws local variables from their priors.
    pub fn from_prior<R: Rng + ?Sized>(
        globals: &Globals,
        obs: &Observation,
        rng: &mut R,
    ) -> Result<Self> {
        let hyper = &globals.hyper;
        let windows = obs.windows(hyper.filter_width).ok_or(Error::DocumentTooShort {
            doc: 0,
            length: obs.length,
            width: hyper.filter_width,
        })?;
        let k1 = hyper.num_kernels();
        let depth = hyper.depth();
        let c = (0..depth)
            .map(|_| sample_gamma(hyper.e0, 1.0 / hyper.f0, rng))
            .collect::<Result<Vec<_>>>()?;
        let mut theta: Vec<Vec<f64>> = hyper.layer_widths.iter().map(|&k| vec![0.0; k]).collect();
        let mut w = vec![0.0; k1 * windows];
        let mut pi = Vec::new();
        if depth == 1 {
            for k in 0..k1 {
                let r = globals.layers.r[k];
                for s in 0..windows {
                    w[k * windows + s] = sample_gamma(r, 1.0 / c[0], rng)?;
                }
                theta[0][k] = w[k * windows..(k + 1) * windows].iter().sum();
            }
        } else {
            let top = depth - 1;
            for k in 0..hyper.layer_widths[top] {
                theta[top][k] = sample_gamma(globals.layers.r[k], 1.0 / c[top], rng)?;
            }
            for t in (0..top).rev() {
                let shape = globals.layers.phi(t + 2).mul_vec(&theta[t + 1]);
                for k in 0..hyper.layer_widths[t] {
                    theta[t][k] = sample_gamma(shape[k].max(f64::MIN_POSITIVE), 1.0 / c[t], rng)?;
                }
            }
            let shape = globals.layers.phi(2).mul_vec(&theta[1]);
            pi = vec![0.0; k1 * windows];
            for k in 0..k1 {
                let alpha = vec![(shape[k] / windows as f64).max(f64::MIN_POSITIVE); windows];
                sample_dirichlet_into(&alpha, &mut pi[k * windows..(k + 1) * windows], rng)?;
                for s in 0..windows {
                    w[k * windows + s] = pi[k * windows + s] * theta[0][k];
                }
            }
        }
        Ok(Self {
            windows,
            w,
            theta,
            pi,
            c,
            counts: vec![1; obs.entries.len()],
        })
    }

    pub fn weights(&self, k: usize) -> &[f64] {
        &self.w[k * self.windows..(k + 1) * self.windows]
    }
}

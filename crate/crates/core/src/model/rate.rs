use std::ops::{Add, AddAssign};

use crate::error::{Error, Result};

use super::{DocLocalState, KernelBank, Observation};

/// Rate of one kernel at word `v`, position `l` (0-based):
/// `sum_s w[s] * d[v][l - s]` over the offsets inside the filter support.
pub fn conv_rate(kernel: &[f64], width: usize, w: &[f64], v: usize, l: usize) -> Result<f64> {
    let vocab = kernel.len() / width.max(1);
    let length = w.len() + width - 1;
    if l >= length {
        return Err(Error::PositionOutOfRange { position: l, length });
    }
    if v >= vocab {
        return Err(Error::PositionOutOfRange {
            position: v,
            length: vocab,
        });
    }
    Ok(conv_rate_unchecked(kernel, width, w, v, l))
}

#[inline]
pub(crate) fn conv_rate_unchecked(kernel: &[f64], width: usize, w: &[f64], v: usize, l: usize) -> f64 {
    let row = &kernel[v * width..(v + 1) * width];
    let f_min = (l + 1).saturating_sub(w.len());
    let f_max = width.min(l + 1);
    (f_min..f_max).map(|f| w[l - f] * row[f]).sum()
}

/// Sum of [`conv_rate`] over all kernels.
pub fn total_rate(bank: &KernelBank, state: &DocLocalState, v: usize, l: usize) -> Result<f64> {
    let mut total = 0.0;
    for k in 0..bank.num_kernels() {
        total += conv_rate(bank.kernel(k), bank.width(), state.weights(k), v, l)?;
    }
    Ok(total)
}

#[inline]
pub(crate) fn total_rate_unchecked(bank: &KernelBank, w: &[f64], windows: usize, v: usize, l: usize) -> f64 {
    let width = bank.width();
    let f_min = (l + 1).saturating_sub(windows);
    let f_max = width.min(l + 1);
    let mut total = 0.0;
    for k in 0..bank.num_kernels() {
        let wk = &w[k * windows..(k + 1) * windows];
        for f in f_min..f_max {
            total += wk[l - f] * bank.get(k, v, f);
        }
    }
    total
}

/// Document-level pooling `theta = sum_s w[s]`.
pub fn pool_weights(w: &[f64]) -> f64 {
    w.iter().sum()
}

/// `ln(1 - exp(-x))` for `x > 0`.
#[inline]
pub fn log1mexp(x: f64) -> f64 {
    if x > std::f64::consts::LN_2 {
        (-(-x).exp()).ln_1p()
    } else {
        (-(-x).exp_m1()).ln()
    }
}

/// A log-likelihood that records observations with zero rate.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Loglik {
    /// Finite part of the log-likelihood.
    pub value: f64,
    /// Number of positive entries whose rate was zero.
    pub impossible: usize,
}

impl Loglik {
    pub fn is_impossible(&self) -> bool {
        self.impossible > 0
    }

    /// The log-likelihood, `-inf` when any observation was impossible.
    pub fn total(&self) -> f64 {
        if self.is_impossible() {
            f64::NEG_INFINITY
        } else {
            self.value
        }
    }
}

impl Add for Loglik {
    type Output = Loglik;
    fn add(self, o: Loglik) -> Loglik {
        Loglik {
            value: self.value + o.value,
            impossible: self.impossible + o.impossible,
        }
    }
}

impl AddAssign for Loglik {
    fn add_assign(&mut self, o: Loglik) {
        *self = *self + o;
    }
}

/// Bernoulli-Poisson log-likelihood of one document.
///
/// Positive entries contribute `ln(1 - e^-rate)`; the zero entries contribute
/// `-rate` each, summed in closed form as `sum_k theta_k` minus the rates at
/// the positive entries (kernels have unit mass).
pub fn bp_loglik(obs: &Observation, bank: &KernelBank, state: &DocLocalState) -> Loglik {
    let mut out = Loglik::default();
    let mut observed_rate = 0.0;
    for &(v, l) in &obs.entries {
        let rate = total_rate_unchecked(bank, &state.w, state.windows, v as usize, l as usize);
        if rate > 0.0 {
            out.value += log1mexp(rate);
            observed_rate += rate;
        } else {
            out.impossible += 1;
        }
    }
    let mass: f64 = state.w.iter().sum();
    out.value += observed_rate - mass;
    out
}

/// Sum of [`bp_loglik`] over a corpus.
pub fn point_loglik(obs: &[Observation], bank: &KernelBank, states: &[DocLocalState]) -> Loglik {
    obs.iter()
        .zip(states)
        .map(|(o, s)| bp_loglik(o, bank, s))
        .fold(Loglik::default(), Add::add)
}

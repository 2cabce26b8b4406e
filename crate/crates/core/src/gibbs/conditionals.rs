//! Parameters of every conjugate conditional, as pure functions.
//!
//! The samplers in this module's siblings only ever draw from parameters
//! computed here, so fixture tests can check them exactly.

use serde::{Deserialize, Serialize};

/// Gamma parameters in shape/rate form.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammaParams {
    pub shape: f64,
    pub rate: f64,
}

impl GammaParams {
    pub fn scale(&self) -> f64 {
        1.0 / self.rate
    }

    pub fn mean(&self) -> f64 {
        self.shape / self.rate
    }
}

/// CPFA weight `w_jks | - ~ Gam(m_jk..s + r_k, rate 1 + c_j)`.
pub fn w_cpfa_params(count: u32, r_k: f64, c_j: f64) -> GammaParams {
    GammaParams {
        shape: count as f64 + r_k,
        rate: 1.0 + c_j,
    }
}

/// Layer-one activation `theta_jk^(1) | - ~ Gam(m_jk... + a_k, rate 1 + c_j^(2))`
/// with `a_k = Phi_k:^(2) theta_j^(2)`.
pub fn theta1_params(total: u32, a_k: f64, c2: f64) -> GammaParams {
    GammaParams {
        shape: total as f64 + a_k,
        rate: 1.0 + c2,
    }
}

/// Pooling proportions `pi_jk | - ~ Dir(m_jk..s + a_k / S_j)`.
pub fn pi_params(positions: &[u32], a_k: f64) -> Vec<f64> {
    let prior = a_k / positions.len() as f64;
    positions.iter().map(|&n| n as f64 + prior).collect()
}

/// Dirichlet posterior `counts + eta` for a kernel or a factor column.
pub fn dirichlet_params(counts: &[u32], eta: f64) -> Vec<f64> {
    counts.iter().map(|&n| n as f64 + eta).collect()
}

/// Deep activation `theta_j^(t) | - ~ Gam(shape + m_j^(t), rate c + q_j^(t))`,
/// where `shape` is `Phi^(t+1) theta^(t+1)` (or `r` at the top) and `c` is
/// `c_j^(t+1)`.
pub fn theta_params(prior_shape: f64, count: u32, c_next: f64, q: f64) -> GammaParams {
    GammaParams {
        shape: prior_shape + count as f64,
        rate: c_next + q,
    }
}

/// Top-layer shape `r_k | - ~ Gam(g_shape + sum_j x_jk, rate g_rate + sum_j q_j)`.
pub fn r_params(g_shape: f64, g_rate: f64, tables: f64, rate_sum: f64) -> GammaParams {
    GammaParams {
        shape: g_shape + tables,
        rate: g_rate + rate_sum,
    }
}

/// Rate variable `c | - ~ Gam(e0 + sum shapes, rate f0 + sum activations)`.
pub fn c_params(e0: f64, f0: f64, shape_sum: f64, activation_sum: f64) -> GammaParams {
    GammaParams {
        shape: e0 + shape_sum,
        rate: f0 + activation_sum,
    }
}

/// Scale recursion `q^(t+1) = ln(1 + q^(t) / c^(t+1))`.
pub fn next_q(q: f64, c_next: f64) -> f64 {
    (q / c_next).ln_1p()
}

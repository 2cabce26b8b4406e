//! Numerical KL divergence from a gamma density to a Weibull density.

use statrs::function::gamma::ln_gamma;

/// `KL(Weibull(k, lambda) || Gam(alpha, rate beta))` by double-exponential
/// quadrature. With `y = (x / lambda)^k ~ Exp(1)` the divergence is
/// `int_0^inf e^-y [ln q(x(y)) - ln p(x(y))] dy`, mapped to `(0, 1)` by
/// `y = t / (1 - t)`.
pub fn kl_quadrature(k: f64, lambda: f64, alpha: f64, beta: f64) -> f64 {
    let integrand = |t: f64| {
        if t <= 0.0 || t >= 1.0 {
            return 0.0;
        }
        let y = t / (1.0 - t);
        let jac = 1.0 / ((1.0 - t) * (1.0 - t));
        let ln_y = y.ln();
        let ln_x = lambda.ln() + ln_y / k;
        let x = ln_x.exp();
        let ln_q = k.ln() - lambda.ln() + (k - 1.0) / k * ln_y - y;
        let ln_p = alpha * beta.ln() - ln_gamma(alpha) + (alpha - 1.0) * ln_x - beta * x;
        let v = (-y).exp() * (ln_q - ln_p) * jac;
        if v.is_finite() { v } else { 0.0 }
    };
    quadrature::double_exponential::integrate(integrand, 0.0, 1.0, 1e-12).integral
}

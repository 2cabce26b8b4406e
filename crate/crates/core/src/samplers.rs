//! Random-variate generators shared by every inference engine.
//!
//! All generators take an explicit RNG. [`RngStream`] is a counter-based
//! ChaCha stream keyed by `(seed, stream_id)`, so each worker can own an
//! independent and reproducible sequence without shared mutable state.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Poisson, StandardNormal};

use statrs::function::gamma::digamma;

use crate::error::{Error, Result};

/// Smallest value returned by the gamma and Dirichlet generators.
///
/// Products of two floored draws stay representable, so a Poisson rate built
/// from them never underflows to exactly zero.
pub const MIN_DRAW: f64 = 1e-150;

/// A reproducible random stream identified by a seed and a substream id.
#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        Self {
            seed,
            stream_id,
            rng,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

/// Mixes a base seed with an epoch and a phase tag (SplitMix64 finalizer).
pub fn mix_seed(seed: u64, epoch: u64, phase: u64) -> u64 {
    let mut z = seed
        ^ epoch.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ phase.wrapping_mul(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Hands out streams for a given sweep/iteration, phase and worker item.
#[derive(Clone, Copy, Debug)]
pub struct RngPool {
    seed: u64,
}

impl RngPool {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self, epoch: u64, phase: u64, id: u64) -> RngStream {
        RngStream::new(mix_seed(self.seed, epoch, phase), id)
    }
}

fn check_positive(name: &str, x: f64) -> Result<()> {
    if x.is_finite() && x > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("{name} must be finite and positive, got {x}")))
    }
}

/// Natural log of a Gamma(shape, 1) draw. Stays finite for tiny shapes.
fn ln_standard_gamma<R: Rng + ?Sized>(shape: f64, rng: &mut R) -> f64 {
    if shape < 1.0 {
        // Boost: G(a) = G(a + 1) * U^(1/a), carried out in log space.
        let u: f64 = rng.random::<f64>();
        let u = if u > 0.0 { u } else { f64::MIN_POSITIVE };
        return ln_standard_gamma(shape + 1.0, rng) + u.ln() / shape;
    }
    // Marsaglia & Tsang.
    let d = shape - 1.0 / 3.0;
    let c = 1.0 / (9.0 * d).sqrt();
    loop {
        let x: f64 = rng.sample(StandardNormal);
        let v = 1.0 + c * x;
        if v <= 0.0 {
            continue;
        }
        let v = v * v * v;
        let u: f64 = rng.random::<f64>();
        if u < 1.0 - 0.0331 * x * x * x * x {
            return (d * v).ln();
        }
        if u.ln() < 0.5 * x * x + d * (1.0 - v + v.ln()) {
            return (d * v).ln();
        }
    }
}

/// Gamma draw with the given shape and scale, floored at [`MIN_DRAW`].
pub fn sample_gamma<R: Rng + ?Sized>(shape: f64, scale: f64, rng: &mut R) -> Result<f64> {
    check_positive("gamma shape", shape)?;
    check_positive("gamma scale", scale)?;
    let x = (ln_standard_gamma(shape, rng) + scale.ln()).exp();
    Ok(if x.is_finite() { x.max(MIN_DRAW) } else { f64::MAX })
}

/// Dirichlet draw; the result is nonnegative and sums to one.
pub fn sample_dirichlet<R: Rng + ?Sized>(alpha: &[f64], rng: &mut R) -> Result<Vec<f64>> {
    let mut out = vec![0.0; alpha.len()];
    sample_dirichlet_into(alpha, &mut out, rng)?;
    Ok(out)
}

/// In-place variant of [`sample_dirichlet`].
pub fn sample_dirichlet_into<R: Rng + ?Sized>(
    alpha: &[f64],
    out: &mut [f64],
    rng: &mut R,
) -> Result<()> {
    if alpha.is_empty() {
        return Err(Error::invalid("Dirichlet needs at least one component"));
    }
    if out.len() != alpha.len() {
        return Err(Error::Shape("Dirichlet output length".into()));
    }
    for &a in alpha {
        check_positive("Dirichlet concentration", a)?;
    }
    let mut max = f64::NEG_INFINITY;
    for (o, &a) in out.iter_mut().zip(alpha) {
        *o = ln_standard_gamma(a, rng);
        max = max.max(*o);
    }
    let mut total = 0.0;
    for o in out.iter_mut() {
        *o = (*o - max).exp();
        total += *o;
    }
    for o in out.iter_mut() {
        *o = (*o / total).max(MIN_DRAW);
    }
    let total: f64 = out.iter().sum();
    for o in out.iter_mut() {
        *o /= total;
    }
    Ok(())
}

/// Index drawn with probability proportional to `weights` given their total.
fn categorical<R: Rng + ?Sized>(weights: &[f64], total: f64, rng: &mut R) -> usize {
    let mut target = rng.random::<f64>() * total;
    let mut last = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            last = i;
            if target < w {
                return i;
            }
            target -= w;
        }
    }
    last
}

/// Multinomial split of `n` over nonnegative (not necessarily normalized) weights.
pub fn sample_multinomial_counts<R: Rng + ?Sized>(
    n: u32,
    weights: &[f64],
    rng: &mut R,
) -> Result<Vec<u32>> {
    let mut out = vec![0u32; weights.len()];
    sample_multinomial_into(n, weights, &mut out, rng)?;
    Ok(out)
}

/// Adds a multinomial split of `n` into `out` (which is not cleared).
pub fn sample_multinomial_into<R: Rng + ?Sized>(
    n: u32,
    weights: &[f64],
    out: &mut [u32],
    rng: &mut R,
) -> Result<()> {
    if out.len() != weights.len() {
        return Err(Error::Shape("multinomial output length".into()));
    }
    if n == 0 {
        return Ok(());
    }
    let mut total = 0.0;
    for &w in weights {
        if !(w >= 0.0) || !w.is_finite() {
            return Err(Error::invalid(format!("multinomial weight {w}")));
        }
        total += w;
    }
    if total <= 0.0 {
        return Err(Error::DegenerateAllocation);
    }
    if n <= 32 {
        for _ in 0..n {
            out[categorical(weights, total, rng)] += 1;
        }
        return Ok(());
    }
    // Conditional binomials for large totals.
    let mut remaining = n as u64;
    let mut mass = total;
    let last = weights.iter().rposition(|&w| w > 0.0).unwrap_or(0);
    for (i, &w) in weights.iter().enumerate() {
        if remaining == 0 {
            break;
        }
        if i == last {
            out[i] += remaining as u32;
            break;
        }
        if w <= 0.0 {
            continue;
        }
        let p = (w / mass).clamp(0.0, 1.0);
        let k = Binomial::new(remaining, p)
            .map_err(|e| Error::invalid(e.to_string()))?
            .sample(rng);
        out[i] += k as u32;
        remaining -= k;
        mass -= w;
        if mass <= 0.0 {
            out[last] += remaining as u32;
            break;
        }
    }
    Ok(())
}

/// Upper bound on a single latent count.
///
/// Only reached when a rate exceeds about a million, which happens transiently
/// when local variables start in the far tail of their prior.
pub const COUNT_CAP: u32 = 1 << 20;

/// Zero-truncated Poisson draw; support is {1, 2, ...}, capped at [`COUNT_CAP`].
pub fn sample_truncated_poisson<R: Rng + ?Sized>(rate: f64, rng: &mut R) -> Result<u32> {
    check_positive("truncated Poisson rate", rate)?;
    if rate >= COUNT_CAP as f64 {
        return Ok(COUNT_CAP);
    }
    if rate >= 1.0 {
        let pois = Poisson::new(rate).map_err(|e| Error::invalid(e.to_string()))?;
        loop {
            let x: f64 = pois.sample(rng);
            if x >= 1.0 {
                return Ok((x as u32).min(COUNT_CAP));
            }
        }
    }
    // Inverse CDF on the truncated pmf q_k = e^-r r^k / (k! (1 - e^-r)).
    let u: f64 = rng.random::<f64>();
    let mut q = rate * (-rate).exp() / -(-rate).exp_m1();
    let mut cdf = q;
    let mut k = 1u32;
    while u >= cdf && q > 0.0 {
        k += 1;
        q *= rate / k as f64;
        cdf += q;
    }
    Ok(k)
}

/// Chinese restaurant table count: sum of Bernoulli(r / (r + i - 1)), i = 1..m.
///
/// The first `max(1000, 10^4 r^2)` terms are drawn one by one. The remaining
/// terms all have success probability below `1/(100 r)` and are replaced by
/// a single Poisson with the same mean, `r (psi(r + m) - psi(r + n0))`; the
/// total variation error of that step is below `10^-4`.
pub fn sample_crt<R: Rng + ?Sized>(m: u32, r: f64, rng: &mut R) -> Result<u32> {
    check_positive("CRT concentration", r)?;
    if m == 0 {
        return Ok(0);
    }
    let exact = (1e4 * r * r).max(1000.0).min(u32::MAX as f64) as u32;
    let head = m.min(exact);
    let mut tables = 1;
    for i in 1..head {
        if rng.random::<f64>() < r / (r + i as f64) {
            tables += 1;
        }
    }
    if m > head {
        let mean = r * (digamma(r + m as f64) - digamma(r + head as f64));
        if mean > 0.0 {
            let pois = Poisson::new(mean).map_err(|e| Error::invalid(e.to_string()))?;
            let extra: f64 = pois.sample(rng);
            tables += (extra as u32).min(m - head);
        }
    }
    Ok(tables)
}

/// Clamp bound applied to uniforms before the Weibull transform.
pub const UNIFORM_EPS: f64 = f64::EPSILON;

/// Clamps a uniform to `[UNIFORM_EPS, 1 - UNIFORM_EPS]`.
pub fn clamp_uniform(u: f64) -> f64 {
    u.clamp(UNIFORM_EPS, 1.0 - UNIFORM_EPS)
}

/// Weibull variate `scale * (-ln(1 - u))^(1 / shape)` for a fixed uniform `u`.
pub fn sample_weibull(shape: f64, scale: f64, u: f64) -> Result<f64> {
    check_positive("Weibull shape", shape)?;
    check_positive("Weibull scale", scale)?;
    if !(u > 0.0 && u < 1.0) {
        return Err(Error::invalid(format!("uniform {u} outside (0, 1)")));
    }
    Ok(weibull_transform(shape, scale, clamp_uniform(u)))
}

/// The unchecked reparameterization used on hot paths.
#[inline]
pub(crate) fn weibull_transform(shape: f64, scale: f64, u: f64) -> f64 {
    let e = -(-u).ln_1p();
    scale * e.powf(1.0 / shape)
}

//! Central finite differences against the analytic encoder gradients.

use cpgbn_core::vae::{evaluate, EncoderParams, Noise, ParamSet, SupervisedHead};
use cpgbn_core::{Globals, Hyperparams, Observation, RngStream};

pub struct Fixture {
    pub globals: Globals,
    pub encoder: EncoderParams,
    pub head: SupervisedHead,
    pub label: usize,
    pub obs: Observation,
    pub noise: Noise,
}

/// `|V| = 8`, `K = [4, 3]`, `F = 2`, `L = 6`, three classes.
pub fn tiny_fixture(seed: u64) -> Fixture {
    fixture_with(seed, vec![4, 3], 2)
}

pub fn fixture_with(seed: u64, widths: Vec<usize>, width: usize) -> Fixture {
    let mut rng = RngStream::new(seed, 0);
    let mut hyper = Hyperparams::new(width, widths.clone());
    hyper.gamma0_shape = 2.0;
    let globals = Globals::from_prior(hyper.clone(), 8, &mut rng).unwrap();
    let encoder = EncoderParams::init(&hyper, 8, &mut rng);
    let head = SupervisedHead::init(3, &widths, 0.7, &mut rng).unwrap();
    let obs = Observation::from_tokens(&[3, 0, 7, 7, 2, 5]);
    let noise = Noise::draw(&widths, 6 - width + 1, &mut rng);
    Fixture {
        globals,
        encoder,
        head,
        label: 1,
        obs,
        noise,
    }
}

pub fn loss(fx: &Fixture, enc: &EncoderParams, head: &SupervisedHead) -> f64 {
    evaluate(&fx.obs, enc, Some((head, fx.label)), &fx.noise, &fx.globals, false)
        .unwrap()
        .parts
        .loss()
}

pub struct TensorCheck {
    pub name: String,
    /// `max |analytic - numeric| / max |numeric|`, or the absolute error
    /// when the numeric gradient vanishes.
    pub rel_error: f64,
}

fn compare(name: String, analytic: &[f64], numeric: &[f64]) -> TensorCheck {
    let scale = numeric.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let err = analytic
        .iter()
        .zip(numeric)
        .fold(0.0f64, |m, (a, n)| m.max((a - n).abs()));
    TensorCheck {
        name,
        rel_error: if scale > 1e-8 { err / scale } else { err },
    }
}

fn numeric<P: ParamSet>(p: &P, h: f64, f: impl Fn(&P) -> f64) -> Vec<Vec<f64>> {
    let sizes: Vec<usize> = p.tensors().iter().map(|t| t.2.len()).collect();
    let mut out = Vec::new();
    for (ti, &n) in sizes.iter().enumerate() {
        let mut g = Vec::with_capacity(n);
        for i in 0..n {
            let mut plus = p.clone();
            plus.tensors_mut()[ti][i] += h;
            let mut minus = p.clone();
            minus.tensors_mut()[ti][i] -= h;
            g.push((f(&plus) - f(&minus)) / (2.0 * h));
        }
        out.push(g);
    }
    out
}

/// Checks every encoder and head tensor with step `h`.
pub fn check_all(fx: &Fixture, h: f64) -> Vec<TensorCheck> {
    let e = evaluate(&fx.obs, &fx.encoder, Some((&fx.head, fx.label)), &fx.noise, &fx.globals, true)
        .unwrap();
    let ge = e.encoder_grad.unwrap();
    let gh = e.head_grad.unwrap();
    let mut out = Vec::new();
    let ne = numeric(&fx.encoder, h, |p| loss(fx, p, &fx.head));
    for ((name, _, a), n) in ge.tensors().into_iter().zip(ne) {
        out.push(compare(name, a, &n));
    }
    let nh = numeric(&fx.head, h, |p| loss(fx, &fx.encoder, p));
    for ((name, _, a), n) in gh.tensors().into_iter().zip(nh) {
        out.push(compare(name, a, &n));
    }
    out
}

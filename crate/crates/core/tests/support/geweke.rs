//! Joint-distribution test: forward ancestral draws against a successive
//! conditional chain that alternates data simulation with one Gibbs sweep.

use cpgbn_core::generate::{resample_data, sample_joint};
use cpgbn_core::{DocLocalState, GibbsSampler, Globals, Hyperparams, RngStream, Result};

pub struct GewekeConfig {
    pub hyper: Hyperparams,
    pub vocab_size: usize,
    pub docs: usize,
    pub length: usize,
    pub samples: usize,
    /// Gibbs sweeps between recorded chain samples.
    pub thin: usize,
    pub batches: usize,
    pub seed: u64,
    /// `(k, v, f)` kernel entries to track.
    pub kernel_entries: Vec<(usize, usize, usize)>,
    /// Also track corpus averages of every layer's activations and rates.
    pub extended: bool,
}

pub struct StatResult {
    pub name: String,
    pub forward: f64,
    pub chain: f64,
    pub se: f64,
}

impl StatResult {
    pub fn z(&self) -> f64 {
        (self.forward - self.chain) / self.se
    }

    pub fn passes(&self) -> bool {
        self.z().abs() < 3.0
    }
}

fn tracked(cfg: &GewekeConfig, globals: &Globals, locals: &[DocLocalState]) -> Vec<f64> {
    let mut out: Vec<f64> = locals[0].theta[0].to_vec();
    out.extend(&globals.layers.r);
    for &(k, v, f) in &cfg.kernel_entries {
        out.push(globals.bank.get(k, v, f));
    }
    if cfg.extended {
        let n = locals.len() as f64;
        for t in 0..locals[0].theta.len() {
            out.push(locals.iter().map(|s| s.theta[t].iter().sum::<f64>()).sum::<f64>() / n);
            out.push(locals.iter().map(|s| s.c[t]).sum::<f64>() / n);
        }
    }
    out
}

pub fn names(cfg: &GewekeConfig) -> Vec<String> {
    let mut out = Vec::new();
    for k in 0..cfg.hyper.num_kernels() {
        out.push(format!("theta1[0][{k}]"));
    }
    for k in 0..cfg.hyper.top_width() {
        out.push(format!("r[{k}]"));
    }
    for &(k, v, f) in &cfg.kernel_entries {
        out.push(format!("D[{k}][{v}][{f}]"));
    }
    if cfg.extended {
        for t in 0..cfg.hyper.depth() {
            out.push(format!("avg sum theta{}", t + 1));
            out.push(format!("avg c{}", t + 2));
        }
    }
    out
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Mean and its standard error for independent draws.
fn iid_mean(xs: &[f64]) -> (f64, f64) {
    let m = mean(xs);
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
    (m, (var / xs.len() as f64).sqrt())
}

/// Mean and its batch-means standard error for a correlated chain.
fn batch_mean(xs: &[f64], batches: usize) -> (f64, f64) {
    let size = xs.len() / batches;
    let means: Vec<f64> = (0..batches).map(|b| mean(&xs[b * size..(b + 1) * size])).collect();
    let (m, se) = iid_mean(&means);
    (m, se)
}

pub fn forward_draws(cfg: &GewekeConfig) -> Result<Vec<Vec<f64>>> {
    let mut rng = RngStream::new(cfg.seed, 1);
    let lengths = vec![cfg.length; cfg.docs];
    (0..cfg.samples)
        .map(|_| {
            let s = sample_joint(&cfg.hyper, cfg.vocab_size, &lengths, &mut rng)?;
            Ok(tracked(cfg, &s.globals, &s.locals))
        })
        .collect()
}

pub fn chain_draws(cfg: &GewekeConfig) -> Result<Vec<Vec<f64>>> {
    let mut rng = RngStream::new(cfg.seed, 2);
    let lengths = vec![cfg.length; cfg.docs];
    let start = sample_joint(&cfg.hyper, cfg.vocab_size, &lengths, &mut rng)?;
    let mut sampler = GibbsSampler::from_state(
        start.globals,
        start.locals,
        start.observations,
        cfg.seed.wrapping_add(17),
        0,
    )?;
    let mut out = Vec::with_capacity(cfg.samples);
    for _ in 0..cfg.samples {
        for _ in 0..cfg.thin {
            let obs = resample_data(&sampler.globals.bank, &mut sampler.locals, &mut rng)?;
            sampler.set_observations(obs)?;
            sampler.sweep()?;
        }
        out.push(tracked(cfg, &sampler.globals, &sampler.locals));
    }
    Ok(out)
}

/// Compares means and variances of every tracked scalar.
pub fn compare(cfg: &GewekeConfig, forward: &[Vec<f64>], chain: &[Vec<f64>]) -> Vec<StatResult> {
    let names = names(cfg);
    let mut out = Vec::new();
    for (i, name) in names.iter().enumerate() {
        let f: Vec<f64> = forward.iter().map(|x| x[i]).collect();
        let g: Vec<f64> = chain.iter().map(|x| x[i]).collect();
        let (fm, fse) = iid_mean(&f);
        let (gm, gse) = batch_mean(&g, cfg.batches);
        out.push(StatResult {
            name: format!("mean {name}"),
            forward: fm,
            chain: gm,
            se: (fse * fse + gse * gse).sqrt(),
        });
        let f2: Vec<f64> = f.iter().map(|x| (x - fm).powi(2)).collect();
        let g2: Vec<f64> = g.iter().map(|x| (x - gm).powi(2)).collect();
        let (fv, fvse) = iid_mean(&f2);
        let (gv, gvse) = batch_mean(&g2, cfg.batches);
        out.push(StatResult {
            name: format!("var {name}"),
            forward: fv,
            chain: gv,
            se: (fvse * fvse + gvse * gvse).sqrt(),
        });
    }
    out
}

/// The tiny two-layer model used by the acceptance run.
pub fn tiny_config(samples: usize, seed: u64) -> GewekeConfig {
    let mut hyper = Hyperparams::new(2, vec![3, 2]);
    hyper.eta = vec![0.5, 0.5];
    hyper.e0 = 10.0;
    hyper.f0 = 10.0;
    hyper.gamma0_shape = 2.0;
    hyper.gamma0_rate = 1.0;
    GewekeConfig {
        hyper,
        vocab_size: 10,
        docs: 20,
        length: 8,
        samples,
        thin: 5,
        batches: 50,
        seed,
        kernel_entries: vec![(0, 0, 0), (0, 3, 1), (1, 5, 0), (2, 9, 1), (2, 2, 0)],
        extended: false,
    }
}

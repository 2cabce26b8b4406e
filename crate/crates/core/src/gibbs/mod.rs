//! Batch Gibbs sampler.
//!
//! A sweep runs in three phases:
//!
//! 1. per document, in parallel: impute latent counts, augment them over
//!    kernels and window starts, and propagate table counts upward;
//! 2. single-threaded: draw the kernels, every `Phi^(t)` and `r`;
//! 3. per document, in parallel: draw `theta^(t)` top-down, then the layer-one
//!    weights and the rate variables `c`.
//!
//! Every document owns the RNG stream keyed by its index, so results do not
//! depend on the number of worker threads.

pub mod augment;
pub mod conditionals;
pub mod layers;

use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{bp_loglik, DocLocalState, Globals, KernelBank, Loglik, Matrix, Observation};
use crate::samplers::{sample_dirichlet_into, sample_gamma, RngPool};
use crate::trace::TraceRow;

pub use augment::{augment_counts, impute_counts, split_entry, DocStats, EntrySplit};
pub use conditionals::GammaParams;
pub use layers::{downward_locals, update_layer1_locals, update_w_cpfa, upward_pass, UpwardCounts};

pub(crate) const PHASE_INIT: u64 = 0;
pub(crate) const PHASE_UP: u64 = 1;
pub(crate) const PHASE_GLOBAL: u64 = 2;
pub(crate) const PHASE_DOWN: u64 = 3;

/// Counts aggregated over a set of documents.
#[derive(Clone, Debug, PartialEq)]
pub struct SuffStats {
    pub num_kernels: usize,
    pub vocab_size: usize,
    pub width: usize,
    /// Kernel counts `d_.kvf`, laid out like [`KernelBank::data`].
    pub kernel_counts: Vec<u64>,
    /// `phi_counts[t-2]` is the row-major count matrix for `Phi^(t)`.
    pub phi_counts: Vec<Vec<u64>>,
    /// Tables counted against `r`, summed over documents.
    pub top_tables: Vec<u64>,
    /// Sum over documents of the rate multiplying `r`.
    pub r_rate: f64,
    /// Total latent count assigned to each kernel.
    pub kernel_totals: Vec<u64>,
    pub documents: usize,
}

impl SuffStats {
    pub fn empty(globals: &Globals) -> Self {
        let bank = &globals.bank;
        Self {
            num_kernels: bank.num_kernels(),
            vocab_size: bank.vocab_size(),
            width: bank.width(),
            kernel_counts: vec![0; bank.data().len()],
            phi_counts: globals
                .layers
                .phis
                .iter()
                .map(|m| vec![0; m.rows * m.cols])
                .collect(),
            top_tables: vec![0; globals.hyper.top_width()],
            r_rate: 0.0,
            kernel_totals: vec![0; bank.num_kernels()],
            documents: 0,
        }
    }

    pub fn add(&mut self, stats: &DocStats, up: &UpwardCounts) {
        for &(i, n) in &stats.kernel_entries {
            self.kernel_counts[i as usize] += n as u64;
        }
        for (acc, &n) in self.kernel_totals.iter_mut().zip(&stats.totals) {
            *acc += n as u64;
        }
        for (t, split) in up.splits.iter().enumerate() {
            let cols = self.phi_counts[t].len() / up.tables[t].len();
            for &(k, kk, y) in split {
                self.phi_counts[t][k as usize * cols + kk as usize] += y as u64;
            }
        }
        for (acc, &x) in self.top_tables.iter_mut().zip(up.top_tables()) {
            *acc += x as u64;
        }
        self.r_rate += up.r_rate;
        self.documents += 1;
    }

    pub fn kernel(&self, k: usize) -> &[u64] {
        let n = self.vocab_size * self.width;
        &self.kernel_counts[k * n..(k + 1) * n]
    }

    /// Column `c` of the counts for `Phi^(t)`.
    pub fn phi_column(&self, t: usize, rows: usize, c: usize) -> Vec<u64> {
        let m = &self.phi_counts[t - 2];
        let cols = m.len() / rows;
        (0..rows).map(|r| m[r * cols + c]).collect()
    }
}

fn dirichlet_from_counts<R: Rng + ?Sized>(
    counts: &[u64],
    eta: f64,
    out: &mut [f64],
    rng: &mut R,
) -> Result<()> {
    let alpha: Vec<f64> = counts.iter().map(|&n| n as f64 + eta).collect();
    sample_dirichlet_into(&alpha, out, rng)
}

/// Draws every kernel from `Dir(d_.k.. + eta)`.
pub fn update_kernels<R: Rng + ?Sized>(
    stats: &SuffStats,
    eta: f64,
    rng: &mut R,
) -> Result<KernelBank> {
    let mut bank = KernelBank::from_data(
        stats.num_kernels,
        stats.vocab_size,
        stats.width,
        vec![0.0; stats.kernel_counts.len()],
    )?;
    for k in 0..stats.num_kernels {
        dirichlet_from_counts(stats.kernel(k), eta, bank.kernel_mut(k), rng)?;
    }
    Ok(bank)
}

/// Draws every column of `Phi^(t)` from `Dir(counts + eta^(t))`.
pub fn update_phi<R: Rng + ?Sized>(
    stats: &SuffStats,
    t: usize,
    rows: usize,
    cols: usize,
    eta: f64,
    rng: &mut R,
) -> Result<Matrix> {
    let mut m = Matrix::zeros(rows, cols);
    let mut col = vec![0.0; rows];
    for c in 0..cols {
        dirichlet_from_counts(&stats.phi_column(t, rows, c), eta, &mut col, rng)?;
        m.set_column(c, &col);
    }
    Ok(m)
}

/// Draws `r_k ~ Gam(gamma0_shape + scale * tables, rate gamma0_rate + scale * rate)`.
///
/// `scale` is 1 for batch Gibbs and the corpus-to-batch ratio for mini-batches.
pub fn update_r<R: Rng + ?Sized>(
    globals: &Globals,
    stats: &SuffStats,
    scale: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let h = &globals.hyper;
    stats
        .top_tables
        .iter()
        .map(|&x| {
            let p = conditionals::r_params(
                h.gamma0_shape,
                h.gamma0_rate,
                scale * x as f64,
                scale * stats.r_rate,
            );
            sample_gamma(p.shape, p.scale(), rng)
        })
        .collect()
}

/// One batch Gibbs update of all global parameters.
pub fn update_globals<R: Rng + ?Sized>(
    globals: &mut Globals,
    stats: &SuffStats,
    rng: &mut R,
) -> Result<()> {
    globals.bank = update_kernels(stats, globals.hyper.eta[0], rng)?;
    for t in 2..=globals.hyper.depth() {
        let (rows, cols) = (globals.hyper.layer_widths[t - 2], globals.hyper.layer_widths[t - 1]);
        globals.layers.phis[t - 2] = update_phi(stats, t, rows, cols, globals.hyper.eta[t - 1], rng)?;
    }
    globals.layers.r = update_r(globals, stats, 1.0, rng)?;
    Ok(())
}

/// Phase one for a single document; stores the imputed counts in `state`.
pub(crate) fn upward_document(
    globals: &Globals,
    obs: &Observation,
    state: &mut DocLocalState,
    rng: &mut impl Rng,
) -> Result<(DocStats, UpwardCounts)> {
    let counts = impute_counts(obs, &globals.bank, state, rng)?;
    let stats = augment_counts(obs, &counts, &globals.bank, state, rng)?;
    let up = upward_pass(globals, &stats, state, rng)?;
    state.counts = counts;
    Ok((stats, up))
}

/// Runs phase one over the given documents in parallel.
pub(crate) fn upward_phase(
    globals: &Globals,
    docs: &[(usize, &Observation)],
    states: &mut [&mut DocLocalState],
    pool: &RngPool,
    epoch: u64,
) -> Result<Vec<(DocStats, UpwardCounts)>> {
    docs.par_iter()
        .zip(states.par_iter_mut())
        .map(|(&(j, obs), state)| {
            let mut rng = pool.stream(epoch, PHASE_UP, j as u64);
            upward_document(globals, obs, state, &mut rng).map_err(|e| e.in_document(j))
        })
        .collect()
}

/// Runs phase three over the given documents in parallel and returns the
/// likelihood under the new local state.
pub(crate) fn downward_phase(
    globals: &Globals,
    docs: &[(usize, &Observation)],
    states: &mut [&mut DocLocalState],
    counts: &[(DocStats, UpwardCounts)],
    pool: &RngPool,
    epoch: u64,
) -> Result<Loglik> {
    let parts: Vec<Loglik> = docs
        .par_iter()
        .zip(states.par_iter_mut())
        .zip(counts.par_iter())
        .map(|((&(j, obs), state), (stats, up))| {
            let mut rng = pool.stream(epoch, PHASE_DOWN, j as u64);
            downward_locals(globals, stats, up, state, &mut rng).map_err(|e| e.in_document(j))?;
            Ok(bp_loglik(obs, &globals.bank, state))
        })
        .collect::<Result<_>>()?;
    // Fixed summation order by document index.
    Ok(parts.into_iter().fold(Loglik::default(), |a, b| a + b))
}

/// Summary of one sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepReport {
    pub sweep: u64,
    pub point_loglik: Loglik,
    pub seconds: f64,
    pub local_seconds: f64,
    pub global_seconds: f64,
}

impl TraceRow for SweepReport {
    fn header() -> &'static [&'static str] {
        &["sweep", "point_loglik", "seconds"]
    }

    fn fields(&self) -> Vec<String> {
        vec![
            self.sweep.to_string(),
            self.point_loglik.total().to_string(),
            self.seconds.to_string(),
        ]
    }
}

/// Initializes local states from their priors with stream `(epoch 0, init, j)`.
pub fn init_locals(
    globals: &Globals,
    observations: &[Observation],
    pool: &RngPool,
) -> Result<Vec<DocLocalState>> {
    observations
        .par_iter()
        .enumerate()
        .map(|(j, obs)| {
            let mut rng = pool.stream(0, PHASE_INIT, j as u64);
            DocLocalState::from_prior(globals, obs, &mut rng).map_err(|e| match e {
                Error::DocumentTooShort { length, width, .. } => Error::DocumentTooShort {
                    doc: j,
                    length,
                    width,
                },
                e => e.in_document(j),
            })
        })
        .collect()
}

/// The batch sampler: global parameters, one local state per document and
/// the RNG pool.
#[derive(Clone, Debug)]
pub struct GibbsSampler {
    pub globals: Globals,
    pub locals: Vec<DocLocalState>,
    observations: Vec<Observation>,
    pool: RngPool,
    sweeps: u64,
    frozen: bool,
}

impl GibbsSampler {
    /// Draws globals and locals from the prior.
    pub fn from_prior(
        hyper: crate::model::Hyperparams,
        vocab_size: usize,
        observations: Vec<Observation>,
        seed: u64,
    ) -> Result<Self> {
        let pool = RngPool::new(seed);
        let mut rng = pool.stream(u64::MAX, PHASE_INIT, 0);
        let globals = Globals::from_prior(hyper, vocab_size, &mut rng)?;
        Self::new(globals, observations, seed)
    }

    /// Uses the given globals and draws locals from the prior.
    pub fn new(globals: Globals, observations: Vec<Observation>, seed: u64) -> Result<Self> {
        if observations.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let pool = RngPool::new(seed);
        let locals = init_locals(&globals, &observations, &pool)?;
        Ok(Self {
            globals,
            locals,
            observations,
            pool,
            sweeps: 0,
            frozen: false,
        })
    }

    /// Resumes from explicit local states.
    pub fn from_state(
        globals: Globals,
        locals: Vec<DocLocalState>,
        observations: Vec<Observation>,
        seed: u64,
        sweeps: u64,
    ) -> Result<Self> {
        if locals.len() != observations.len() {
            return Err(Error::Shape("one local state per document".into()));
        }
        Ok(Self {
            globals,
            locals,
            observations,
            pool: RngPool::new(seed),
            sweeps,
            frozen: false,
        })
    }

    /// Keeps the global parameters fixed in subsequent sweeps.
    pub fn freeze_globals(&mut self, frozen: bool) {
        self.frozen = frozen;
    }

    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    pub fn sweeps_done(&self) -> u64 {
        self.sweeps
    }

    pub fn seed(&self) -> u64 {
        self.pool.seed()
    }

    /// Replaces the observations (same count), keeping all latent state.
    pub fn set_observations(&mut self, observations: Vec<Observation>) -> Result<()> {
        if observations.len() != self.locals.len() {
            return Err(Error::Shape("one observation per local state".into()));
        }
        self.observations = observations;
        Ok(())
    }

    pub fn sweep(&mut self) -> Result<SweepReport> {
        let start = Instant::now();
        let epoch = self.sweeps + 1;
        let docs: Vec<(usize, &Observation)> = self.observations.iter().enumerate().collect();
        let mut states: Vec<&mut DocLocalState> = self.locals.iter_mut().collect();
        let counts = upward_phase(&self.globals, &docs, &mut states, &self.pool, epoch)?;
        let local_a = start.elapsed().as_secs_f64();

        let global_start = Instant::now();
        if !self.frozen {
            let mut stats = SuffStats::empty(&self.globals);
            for (s, u) in &counts {
                stats.add(s, u);
            }
            let mut rng = self.pool.stream(epoch, PHASE_GLOBAL, 0);
            update_globals(&mut self.globals, &stats, &mut rng)?;
        }
        let global_seconds = global_start.elapsed().as_secs_f64();

        let down_start = Instant::now();
        let point_loglik =
            downward_phase(&self.globals, &docs, &mut states, &counts, &self.pool, epoch)?;
        let local_seconds = local_a + down_start.elapsed().as_secs_f64();
        self.sweeps = epoch;
        Ok(SweepReport {
            sweep: epoch,
            point_loglik,
            seconds: start.elapsed().as_secs_f64(),
            local_seconds,
            global_seconds,
        })
    }

    /// Runs `n` sweeps, calling `on_sweep` after each.
    pub fn run(
        &mut self,
        n: usize,
        mut on_sweep: impl FnMut(&Self, &SweepReport) -> Result<()>,
    ) -> Result<Vec<SweepReport>> {
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let report = self.sweep()?;
            on_sweep(self, &report)?;
            out.push(report);
        }
        Ok(out)
    }

    pub fn point_loglik(&self) -> Loglik {
        crate::model::point_loglik(&self.observations, &self.globals.bank, &self.locals)
    }
}

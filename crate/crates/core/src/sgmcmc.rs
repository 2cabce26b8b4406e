//! Mini-batch stochastic-gradient MCMC for the simplex-constrained global
//! parameters (kernels and factor columns), with preconditioned Langevin
//! steps followed by a clamp-and-renormalize projection.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gibbs::{
    downward_phase, init_locals, update_r, upward_phase, DocStats, SuffStats, UpwardCounts,
    PHASE_GLOBAL,
};
use crate::model::{DocLocalState, Globals, Loglik, Observation};
use crate::samplers::RngPool;
use crate::trace::TraceRow;

const PHASE_SHUFFLE: u64 = 10;

/// Step-size schedule and projection settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TlasgrConfig {
    pub batch_size: usize,
    pub eps0: f64,
    pub tau: f64,
    pub kappa: f64,
    /// Lower bound applied before renormalizing.
    pub floor: f64,
    /// Local Gibbs sweeps per mini-batch; the last one supplies the statistics.
    pub local_sweeps: usize,
    /// Adds the Langevin noise term; disabling it leaves the drift only.
    pub inject_noise: bool,
}

impl Default for TlasgrConfig {
    fn default() -> Self {
        Self {
            batch_size: 100,
            eps0: 1.0,
            tau: 20.0,
            kappa: 0.7,
            floor: 1e-10,
            local_sweeps: 1,
            inject_noise: true,
        }
    }
}

impl TlasgrConfig {
    /// `eps_i = eps0 (tau + i)^-kappa`.
    pub fn step_size(&self, i: u64) -> f64 {
        self.eps0 * (self.tau + i as f64).powf(-self.kappa)
    }

    pub fn validate(&self, simplex_len: usize) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be at least 1"));
        }
        if !(self.eps0 >= 0.0) || !(self.kappa >= 0.0) || !(self.tau >= 0.0) {
            return Err(Error::invalid("step schedule must be nonnegative"));
        }
        if self.tau == 0.0 && self.kappa > 0.0 {
            return Err(Error::invalid("tau must be positive when kappa is"));
        }
        if !(self.floor > 0.0) || self.floor * simplex_len as f64 >= 1.0 {
            return Err(Error::invalid("floor must lie in (0, 1/n)"));
        }
        if self.local_sweeps == 0 {
            return Err(Error::invalid("need at least one local sweep"));
        }
        Ok(())
    }
}

/// Clamps entries to at least `floor` and renormalizes. A vector with no
/// positive entry maps to the uniform vector.
pub fn simplex_project(v: &[f64], floor: f64) -> Result<Vec<f64>> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("simplex projection input".into()));
    }
    if v.iter().all(|&x| x <= 0.0) {
        return Ok(vec![1.0 / v.len() as f64; v.len()]);
    }
    let clamped: Vec<f64> = v.iter().map(|&x| x.max(floor)).collect();
    let total: f64 = clamped.iter().sum();
    Ok(clamped.into_iter().map(|x| x / total).collect())
}

/// Preconditioned Langevin update of one simplex vector.
///
/// `d + eps/M [(rho n + eta) - (rho n_tot + eta len) d] + N(0, 2 eps/M d)`,
/// followed by [`simplex_project`]. With `eps = 0` the input is returned as is.
#[allow(clippy::too_many_arguments)]
pub fn tlasgr_step<R: Rng + ?Sized>(
    current: &[f64],
    counts: &[f64],
    rho: f64,
    eta: f64,
    eps: f64,
    precond: f64,
    config: &TlasgrConfig,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if !(precond > 0.0) {
        return Err(Error::invalid("preconditioner must be positive"));
    }
    if counts.len() != current.len() {
        return Err(Error::Shape("counts and simplex vector differ in length".into()));
    }
    if eps == 0.0 {
        return Ok(current.to_vec());
    }
    let n = current.len() as f64;
    let total: f64 = counts.iter().sum();
    let step = eps / precond;
    let mut next = Vec::with_capacity(current.len());
    for (&d, &c) in current.iter().zip(counts) {
        let drift = (rho * c + eta) - (rho * total + eta * n) * d;
        let mut x = d + step * drift;
        if config.inject_noise {
            let z: f64 = rng.sample(StandardNormal);
            x += (2.0 * step * d).sqrt() * z;
        }
        next.push(x);
    }
    simplex_project(&next, config.floor)
}

/// Running averages of `rho n_tot + eta len` per kernel and per factor column.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Preconditioner {
    pub kernels: Vec<f64>,
    /// `columns[t-2][c]` for column `c` of `Phi^(t)`.
    pub columns: Vec<Vec<f64>>,
    pub updates: u64,
}

impl Preconditioner {
    fn blend(old: &mut f64, x: f64, n: u64) {
        *old += (x - *old) / n as f64;
    }
}

/// One iteration's summary.
#[derive(Clone, Debug, PartialEq)]
pub struct IterationReport {
    pub iteration: u64,
    pub batch_loglik: Loglik,
    pub step_size: f64,
    pub seconds: f64,
}

impl TraceRow for IterationReport {
    fn header() -> &'static [&'static str] {
        &["iteration", "batch_point_loglik", "step_size"]
    }

    fn fields(&self) -> Vec<String> {
        vec![
            self.iteration.to_string(),
            self.batch_loglik.total().to_string(),
            self.step_size.to_string(),
        ]
    }
}

/// Cycles through shuffled epochs of the corpus; batches within an epoch are
/// disjoint.
#[derive(Clone, Debug, Default)]
pub struct BatchSchedule {
    order: Vec<usize>,
    cursor: usize,
    epoch: u64,
}

impl BatchSchedule {
    pub fn next(&mut self, num_docs: usize, batch_size: usize, pool: &RngPool) -> Vec<usize> {
        let size = batch_size.min(num_docs);
        if self.cursor + size > self.order.len() {
            self.order = (0..num_docs).collect();
            if size < num_docs {
                let mut rng = pool.stream(self.epoch, PHASE_SHUFFLE, 0);
                self.order.shuffle(&mut rng);
            }
            self.epoch += 1;
            self.cursor = 0;
        }
        let batch = self.order[self.cursor..self.cursor + size].to_vec();
        self.cursor += size;
        batch
    }
}

/// Applies the stochastic-gradient updates for one batch of statistics to
/// every kernel, every factor column and `r`. Nothing changes when `eps = 0`.
pub fn apply_tlasgr<R: Rng + ?Sized>(
    globals: &mut Globals,
    precond: &mut Preconditioner,
    config: &TlasgrConfig,
    stats: &SuffStats,
    rho: f64,
    eps: f64,
    rng: &mut R,
) -> Result<()> {
    if eps == 0.0 {
        return Ok(());
    }
    let hyper = globals.hyper.clone();
    let k1 = hyper.num_kernels();
    let len = globals.bank.kernel_len();
    precond.updates += 1;
    let n_upd = precond.updates;
    if precond.kernels.len() != k1 {
        precond.kernels = vec![0.0; k1];
        precond.columns = hyper.layer_widths[1..].iter().map(|&c| vec![0.0; c]).collect();
    }
    for k in 0..k1 {
        let counts: Vec<f64> = stats.kernel(k).iter().map(|&n| n as f64).collect();
        let total: f64 = counts.iter().sum();
        Preconditioner::blend(&mut precond.kernels[k], rho * total + hyper.eta[0] * len as f64, n_upd);
        let next = tlasgr_step(
            globals.bank.kernel(k),
            &counts,
            rho,
            hyper.eta[0],
            eps,
            precond.kernels[k],
            config,
            rng,
        )?;
        globals.bank.kernel_mut(k).copy_from_slice(&next);
    }
    for t in 2..=hyper.depth() {
        let (rows, cols) = (hyper.layer_widths[t - 2], hyper.layer_widths[t - 1]);
        let eta = hyper.eta[t - 1];
        for c in 0..cols {
            let counts: Vec<f64> = stats.phi_column(t, rows, c).into_iter().map(|n| n as f64).collect();
            let total: f64 = counts.iter().sum();
            let m = &mut precond.columns[t - 2][c];
            Preconditioner::blend(m, rho * total + eta * rows as f64, n_upd);
            let m = *m;
            let phi = &mut globals.layers.phis[t - 2];
            let next = tlasgr_step(&phi.column(c), &counts, rho, eta, eps, m, config, rng)?;
            phi.set_column(c, &next);
        }
    }
    globals.layers.r = update_r(globals, stats, rho, rng)?;
    Ok(())
}

/// Mini-batch trainer holding the globals, every document's local state and
/// the preconditioner.
#[derive(Clone, Debug)]
pub struct TlasgrTrainer {
    pub globals: Globals,
    pub locals: Vec<DocLocalState>,
    pub config: TlasgrConfig,
    pub precond: Preconditioner,
    observations: Vec<Observation>,
    pool: RngPool,
    iteration: u64,
    schedule: BatchSchedule,
}

impl TlasgrTrainer {
    pub fn new(
        globals: Globals,
        observations: Vec<Observation>,
        config: TlasgrConfig,
        seed: u64,
    ) -> Result<Self> {
        if observations.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        config.validate(globals.bank.kernel_len())?;
        let pool = RngPool::new(seed);
        let locals = init_locals(&globals, &observations, &pool)?;
        Ok(Self {
            globals,
            locals,
            config,
            precond: Preconditioner::default(),
            observations,
            pool,
            iteration: 0,
            schedule: BatchSchedule::default(),
        })
    }

    pub fn iterations_done(&self) -> u64 {
        self.iteration
    }

    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    pub fn next_batch(&mut self) -> Vec<usize> {
        self.schedule.next(self.observations.len(), self.config.batch_size, &self.pool)
    }

    fn stream_epoch(&self, step: usize) -> u64 {
        ((self.iteration + 1) << 8) | step as u64
    }

    /// Runs the upward phase on `batch` and returns its augmented counts.
    pub fn batch_counts(&mut self, batch: &[usize], epoch: u64) -> Result<Vec<(DocStats, UpwardCounts)>> {
        let docs: Vec<(usize, &Observation)> =
            batch.iter().map(|&j| (j, &self.observations[j])).collect();
        let mut states = select_mut(&mut self.locals, batch);
        upward_phase(&self.globals, &docs, &mut states, &self.pool, epoch)
    }

    /// Aggregates batch counts; `SuffStats::documents` is the batch size.
    pub fn aggregate(&self, counts: &[(DocStats, UpwardCounts)]) -> SuffStats {
        let mut stats = SuffStats::empty(&self.globals);
        for (s, u) in counts {
            stats.add(s, u);
        }
        stats
    }

    /// One mini-batch iteration.
    pub fn minibatch_sweep(&mut self) -> Result<IterationReport> {
        let start = Instant::now();
        let batch = self.next_batch();
        let rho = self.observations.len() as f64 / batch.len() as f64;
        let docs: Vec<(usize, &Observation)> =
            batch.iter().map(|&j| (j, &self.observations[j])).collect();
        for step in 0..self.config.local_sweeps - 1 {
            let epoch = self.stream_epoch(step);
            let mut states = select_mut(&mut self.locals, &batch);
            let counts = upward_phase(&self.globals, &docs, &mut states, &self.pool, epoch)?;
            downward_phase(&self.globals, &docs, &mut states, &counts, &self.pool, epoch)?;
        }
        let epoch = self.stream_epoch(self.config.local_sweeps - 1);
        let mut states = select_mut(&mut self.locals, &batch);
        let counts = upward_phase(&self.globals, &docs, &mut states, &self.pool, epoch)?;
        let mut stats = SuffStats::empty(&self.globals);
        for (s, u) in &counts {
            stats.add(s, u);
        }
        let eps = self.config.step_size(self.iteration);
        let mut rng = self.pool.stream(epoch, PHASE_GLOBAL, 0);
        apply_tlasgr(&mut self.globals, &mut self.precond, &self.config, &stats, rho, eps, &mut rng)?;
        let batch_loglik = downward_phase(&self.globals, &docs, &mut states, &counts, &self.pool, epoch)?;
        self.iteration += 1;
        Ok(IterationReport {
            iteration: self.iteration,
            batch_loglik,
            step_size: eps,
            seconds: start.elapsed().as_secs_f64(),
        })
    }

    /// Point likelihood of every document under the current state.
    pub fn point_loglik(&self) -> Loglik {
        crate::model::point_loglik(&self.observations, &self.globals.bank, &self.locals)
    }
}

/// Mutable references to the selected entries, in the order given.
pub(crate) fn select_mut<'a, T>(items: &'a mut [T], idx: &[usize]) -> Vec<&'a mut T> {
    let mut slots: Vec<Option<&'a mut T>> = items.iter_mut().map(Some).collect();
    idx.iter()
        .map(|&i| slots[i].take().expect("indices are distinct"))
        .collect()
}

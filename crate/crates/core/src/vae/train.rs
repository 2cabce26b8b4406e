//! Hybrid training: encoder gradient steps per document, then a stochastic
//! MCMC step on the global parameters from counts augmented at the encoder's
//! weight samples.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gibbs::{augment_counts, impute_counts, upward_pass, SuffStats, PHASE_GLOBAL, PHASE_UP};
use crate::model::{DocLocalState, Globals, Observation};
use crate::samplers::RngPool;
use crate::sgmcmc::{apply_tlasgr, BatchSchedule, Preconditioner, TlasgrConfig};
use crate::trace::TraceRow;

use super::network::{draw_latents, encode, evaluate, Noise, PRIOR_RATE};
use super::params::{Adam, AdamConfig, EncoderParams, ParamSet, SupervisedHead};

const PHASE_NOISE: u64 = 20;
const PHASE_SAMPLE: u64 = 21;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HybridConfig {
    /// Mini-batch size and the global step schedule.
    pub tlasgr: TlasgrConfig,
    pub adam: AdamConfig,
    /// Classification weight when training with labels.
    pub xi: f64,
}

impl Default for HybridConfig {
    fn default() -> Self {
        Self {
            tlasgr: TlasgrConfig::default(),
            adam: AdamConfig::default(),
            xi: 1.0,
        }
    }
}

/// One iteration's batch averages.
#[derive(Clone, Debug, PartialEq)]
pub struct ElboReport {
    pub iteration: u64,
    /// Mean single-sample ELBO over the batch.
    pub elbo: f64,
    pub kl_total: f64,
    pub recon: f64,
    /// Mean cross-entropy; zero when unsupervised.
    pub class: f64,
}

impl TraceRow for ElboReport {
    fn header() -> &'static [&'static str] {
        &["iteration", "elbo", "kl_total", "recon"]
    }

    fn fields(&self) -> Vec<String> {
        vec![
            self.iteration.to_string(),
            self.elbo.to_string(),
            self.kl_total.to_string(),
            self.recon.to_string(),
        ]
    }
}

#[derive(Clone, Debug)]
pub struct HybridTrainer {
    pub globals: Globals,
    pub encoder: EncoderParams,
    pub head: Option<SupervisedHead>,
    pub config: HybridConfig,
    pub precond: Preconditioner,
    observations: Vec<Observation>,
    labels: Option<Vec<usize>>,
    encoder_opt: Adam<EncoderParams>,
    head_opt: Option<Adam<SupervisedHead>>,
    pool: RngPool,
    schedule: BatchSchedule,
    iteration: u64,
}

impl HybridTrainer {
    pub fn new(
        globals: Globals,
        encoder: EncoderParams,
        observations: Vec<Observation>,
        config: HybridConfig,
        seed: u64,
    ) -> Result<Self> {
        if observations.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        config.tlasgr.validate(globals.bank.kernel_len())?;
        encoder.check_compatible(&globals.hyper, globals.bank.vocab_size())?;
        let f = globals.hyper.filter_width;
        if let Some(j) = observations.iter().position(|o| o.windows(f).is_none()) {
            return Err(Error::DocumentTooShort {
                doc: j,
                length: observations[j].length,
                width: f,
            });
        }
        Ok(Self {
            encoder_opt: Adam::new(config.adam, &encoder),
            head_opt: None,
            globals,
            encoder,
            head: None,
            config,
            precond: Preconditioner::default(),
            observations,
            labels: None,
            pool: RngPool::new(seed),
            schedule: BatchSchedule::default(),
            iteration: 0,
        })
    }

    /// Adds a classifier head trained jointly with the encoder.
    pub fn with_labels(mut self, labels: Vec<usize>, head: SupervisedHead) -> Result<Self> {
        if labels.len() != self.observations.len() {
            return Err(Error::Shape("one label per document".into()));
        }
        if let Some(&y) = labels.iter().find(|&&y| y >= head.classes) {
            return Err(Error::invalid(format!("label {y} outside {} classes", head.classes)));
        }
        self.head_opt = Some(Adam::new(self.config.adam, &head));
        self.head = Some(head);
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn iterations_done(&self) -> u64 {
        self.iteration
    }

    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    fn noise(&self, epoch: u64, phase: u64, j: usize) -> Result<Noise> {
        let windows = self.observations[j]
            .windows(self.globals.hyper.filter_width)
            .expect("checked at construction");
        let mut rng = self.pool.stream(epoch, phase, j as u64);
        Ok(Noise::draw(&self.globals.hyper.layer_widths, windows, &mut rng))
    }

    /// Local state holding a draw from the encoder's approximate posterior.
    fn sampled_state(&self, j: usize, noise: &Noise) -> Result<DocLocalState> {
        let enc = encode(&self.observations[j], &self.encoder)?;
        let lat = draw_latents(&enc, &self.globals.layers, Some(noise));
        let depth = self.globals.hyper.depth();
        let windows = enc.windows;
        let pi = if depth >= 2 {
            let mut pi = lat.w.clone();
            for (k, &th) in lat.theta[0].iter().enumerate() {
                for x in &mut pi[k * windows..(k + 1) * windows] {
                    *x /= th;
                }
            }
            pi
        } else {
            Vec::new()
        };
        Ok(DocLocalState {
            windows,
            w: lat.w,
            theta: lat.theta,
            pi,
            c: vec![PRIOR_RATE; depth],
            counts: Vec::new(),
        })
    }

    /// One iteration: gradient steps per batch document, a fresh draw of the
    /// weights, augmentation and the global step.
    pub fn iterate(&mut self) -> Result<ElboReport> {
        let epoch = self.iteration + 1;
        let batch = self
            .schedule
            .next(self.observations.len(), self.config.tlasgr.batch_size, &self.pool);
        let (mut recon, mut kl, mut class) = (0.0, 0.0, 0.0);
        for &j in &batch {
            let noise = self.noise(epoch, PHASE_NOISE, j)?;
            let head = match (&self.head, &self.labels) {
                (Some(h), Some(l)) => Some((h, l[j])),
                _ => None,
            };
            let e = evaluate(&self.observations[j], &self.encoder, head, &noise, &self.globals, true)
                .map_err(|e| e.in_document(j))?;
            recon += e.parts.recon;
            kl += e.parts.kl_total();
            class += e.parts.class;
            self.encoder_opt.step(&mut self.encoder, &e.encoder_grad.expect("requested"));
            if let (Some(h), Some(opt), Some(g)) = (self.head.as_mut(), self.head_opt.as_mut(), e.head_grad) {
                opt.step(h, &g);
            }
        }
        let counts: Vec<_> = batch
            .par_iter()
            .map(|&j| {
                let noise = self.noise(epoch, PHASE_SAMPLE, j)?;
                let state = self.sampled_state(j, &noise)?;
                let mut rng = self.pool.stream(epoch, PHASE_UP, j as u64);
                let obs = &self.observations[j];
                let m = impute_counts(obs, &self.globals.bank, &state, &mut rng)?;
                let stats = augment_counts(obs, &m, &self.globals.bank, &state, &mut rng)?;
                let up = upward_pass(&self.globals, &stats, &state, &mut rng)?;
                Ok((stats, up))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut stats = SuffStats::empty(&self.globals);
        for (s, u) in &counts {
            stats.add(s, u);
        }
        let rho = self.observations.len() as f64 / batch.len() as f64;
        let eps = self.config.tlasgr.step_size(self.iteration);
        let mut rng = self.pool.stream(epoch, PHASE_GLOBAL, 0);
        apply_tlasgr(
            &mut self.globals,
            &mut self.precond,
            &self.config.tlasgr,
            &stats,
            rho,
            eps,
            &mut rng,
        )?;
        self.iteration += 1;
        let n = batch.len() as f64;
        Ok(ElboReport {
            iteration: self.iteration,
            elbo: (recon - kl) / n,
            kl_total: kl / n,
            recon: recon / n,
            class: class / n,
        })
    }

    /// Mean single-sample ELBO over every document with fixed noise streams.
    pub fn corpus_elbo(&self, epoch: u64) -> Result<f64> {
        let parts: Vec<f64> = (0..self.observations.len())
            .into_par_iter()
            .map(|j| {
                let noise = self.noise(epoch, PHASE_NOISE, j)?;
                Ok(evaluate(&self.observations[j], &self.encoder, None, &noise, &self.globals, false)?
                    .parts
                    .elbo())
            })
            .collect::<Result<_>>()?;
        Ok(parts.iter().sum::<f64>() / parts.len() as f64)
    }

    pub fn grad_params(&self) -> usize {
        self.encoder.num_params() + self.head.as_ref().map_or(0, |h| h.num_params())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Hyperparams;
    use crate::samplers::RngStream;

    fn docs() -> Vec<Observation> {
        (0..12)
            .map(|j| {
                let toks: Vec<u32> = (0..7).map(|l| ((j * 5 + l * 3) % 8) as u32).collect();
                Observation::from_tokens(&toks)
            })
            .collect()
    }

    fn trainer(config: HybridConfig) -> HybridTrainer {
        let mut rng = RngStream::new(8, 0);
        let hyper = Hyperparams::new(2, vec![4, 3]);
        let g = Globals::from_prior(hyper.clone(), 8, &mut rng).unwrap();
        let e = EncoderParams::init(&hyper, 8, &mut rng);
        HybridTrainer::new(g, e, docs(), config, 3).unwrap()
    }

    #[test]
    fn frozen_iteration_changes_nothing() {
        let mut cfg = HybridConfig::default();
        cfg.tlasgr.eps0 = 0.0;
        cfg.tlasgr.batch_size = 4;
        cfg.adam.lr = 0.0;
        let mut t = trainer(cfg);
        let (g, e) = (t.globals.clone(), t.encoder.clone());
        t.iterate().unwrap();
        assert_eq!(t.globals, g);
        assert_eq!(t.encoder, e);
    }

    #[test]
    fn trace_is_reproducible() {
        let run = || {
            let mut cfg = HybridConfig::default();
            cfg.tlasgr.batch_size = 5;
            let mut t = trainer(cfg);
            (0..4).map(|_| t.iterate().unwrap()).collect::<Vec<_>>()
        };
        let a = run();
        assert_eq!(a, run());
        assert!(a.iter().all(|r| r.elbo.is_finite()));
    }

    #[test]
    fn wrong_label_count_is_rejected() {
        let t = trainer(HybridConfig::default());
        let h = SupervisedHead::init(2, &[4, 3], 1.0, &mut RngStream::new(1, 0)).unwrap();
        assert!(t.with_labels(vec![0, 1], h).is_err());
    }
}

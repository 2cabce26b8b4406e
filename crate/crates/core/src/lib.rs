//! Convolutional Poisson factor analysis and its deep extension with
//! probabilistic pooling: generative model, batch Gibbs sampling, mini-batch
//! stochastic-gradient MCMC, a Weibull inference network and evaluation tools.

pub mod corpus;
pub mod error;
pub mod eval;
pub mod generate;
pub mod gibbs;
pub mod model;
pub mod samplers;
pub mod sgmcmc;
pub mod trace;
pub mod vae;

pub use corpus::{Corpus, Document, Vocabulary};
pub use error::{Error, Result};
pub use gibbs::{GibbsSampler, SuffStats, SweepReport};
pub use model::{
    Checkpoint, DocLocalState, Globals, Hyperparams, KernelBank, LayerStack, Loglik, Matrix,
    Observation,
};
pub use samplers::{RngPool, RngStream};

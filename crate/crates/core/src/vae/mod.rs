//! Weibull convolutional inference network with hand-written gradients,
//! hybrid training and the supervised extension.

mod kl;
mod network;
mod params;
mod train;

pub use kl::{kl_weibull_gamma, weibull_mean, KlTerms, EULER_GAMMA};
pub use network::{
    backward, draw_latents, elbo, encode, evaluate, predict_label, supervised_loss, Encoding,
    Evaluation, LatentDraw, LossParts, Noise, WeibullPosterior, PRE_MAX, PRE_MIN, PRIOR_RATE,
    SHAPE_MIN,
};
pub use params::{
    from_section, softmax, to_section, Adam, AdamConfig, DenseLayer, EncoderParams, ParamSet,
    SupervisedHead,
};
pub use train::{ElboReport, HybridConfig, HybridTrainer};

//! Encoder and classifier parameters, their initialization and the Adam optimizer.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ArraySpec, EncoderSection, Hyperparams};

/// A named collection of flat parameter tensors.
pub trait ParamSet: Clone {
    fn tensors(&self) -> Vec<(String, Vec<usize>, &[f64])>;
    fn tensors_mut(&mut self) -> Vec<&mut [f64]>;

    fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for t in z.tensors_mut() {
            t.iter_mut().for_each(|x| *x = 0.0);
        }
        z
    }

    fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.2.len()).sum()
    }

    /// Adds `other` entrywise.
    fn accumulate(&mut self, other: &Self) {
        let src: Vec<Vec<f64>> = other.tensors().into_iter().map(|t| t.2.to_vec()).collect();
        for (dst, src) in self.tensors_mut().into_iter().zip(src) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += s;
            }
        }
    }

    fn scale(&mut self, c: f64) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|x| *x *= c);
        }
    }
}

/// Dense block between layers `t-1` and `t`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    /// `K^(t)`.
    pub rows: usize,
    /// `K^(t-1)`.
    pub cols: usize,
    /// `rows x cols`, row-major.
    pub u1: Vec<f64>,
    /// `rows x rows`.
    pub u2: Vec<f64>,
    pub u3: Vec<f64>,
    pub b1: Vec<f64>,
    pub b2: Vec<f64>,
    pub b3: Vec<f64>,
}

/// Weights of the convolutional inference network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderParams {
    pub vocab_size: usize,
    pub num_kernels: usize,
    pub width: usize,
    /// `c1[(k * V + v) * F + f]`.
    pub c1: Vec<f64>,
    /// `c2[(k * K + k') * F + f]`.
    pub c2: Vec<f64>,
    pub c3: Vec<f64>,
    pub b1: Vec<f64>,
    pub b2: Vec<f64>,
    pub b3: Vec<f64>,
    /// `dense[t-2]` feeds layer `t`.
    pub dense: Vec<DenseLayer>,
}

fn gaussian<R: Rng + ?Sized>(n: usize, fan_in: usize, rng: &mut R) -> Vec<f64> {
    let sd = (2.0 / fan_in as f64).sqrt();
    (0..n).map(|_| sd * rng.sample::<f64, _>(StandardNormal)).collect()
}

impl EncoderParams {
    pub fn zeros(vocab_size: usize, layer_widths: &[usize], width: usize) -> Self {
        let k = layer_widths[0];
        let dense = layer_widths
            .windows(2)
            .map(|p| DenseLayer {
                rows: p[1],
                cols: p[0],
                u1: vec![0.0; p[1] * p[0]],
                u2: vec![0.0; p[1] * p[1]],
                u3: vec![0.0; p[1] * p[1]],
                b1: vec![0.0; p[1]],
                b2: vec![0.0; p[1]],
                b3: vec![0.0; p[1]],
            })
            .collect();
        Self {
            vocab_size,
            num_kernels: k,
            width,
            c1: vec![0.0; k * vocab_size * width],
            c2: vec![0.0; k * k * width],
            c3: vec![0.0; k * k * width],
            b1: vec![0.0; k],
            b2: vec![0.0; k],
            b3: vec![0.0; k],
            dense,
        }
    }

    /// Gaussian weights with standard deviation `sqrt(2 / fan_in)`, zero biases.
    pub fn init<R: Rng + ?Sized>(hyper: &Hyperparams, vocab_size: usize, rng: &mut R) -> Self {
        let mut p = Self::zeros(vocab_size, &hyper.layer_widths, hyper.filter_width);
        let (k, f) = (p.num_kernels, p.width);
        p.c1 = gaussian(p.c1.len(), vocab_size * f, rng);
        p.c2 = gaussian(p.c2.len(), k * f, rng);
        p.c3 = gaussian(p.c3.len(), k * f, rng);
        for d in &mut p.dense {
            d.u1 = gaussian(d.u1.len(), d.cols, rng);
            d.u2 = gaussian(d.u2.len(), d.rows, rng);
            d.u3 = gaussian(d.u3.len(), d.rows, rng);
        }
        p
    }

    pub fn depth(&self) -> usize {
        self.dense.len() + 1
    }

    pub fn layer_widths(&self) -> Vec<usize> {
        let mut out = vec![self.num_kernels];
        out.extend(self.dense.iter().map(|d| d.rows));
        out
    }

    pub fn check_compatible(&self, hyper: &Hyperparams, vocab_size: usize) -> Result<()> {
        if self.layer_widths() != hyper.layer_widths
            || self.width != hyper.filter_width
            || self.vocab_size != vocab_size
        {
            return Err(Error::Shape("encoder does not match the model dimensions".into()));
        }
        Ok(())
    }
}

impl ParamSet for EncoderParams {
    fn tensors(&self) -> Vec<(String, Vec<usize>, &[f64])> {
        let (k, v, f) = (self.num_kernels, self.vocab_size, self.width);
        let mut out: Vec<(String, Vec<usize>, &[f64])> = vec![
            ("C1".into(), vec![k, v, f], &self.c1),
            ("C2".into(), vec![k, k, f], &self.c2),
            ("C3".into(), vec![k, k, f], &self.c3),
            ("b1".into(), vec![k], &self.b1),
            ("b2".into(), vec![k], &self.b2),
            ("b3".into(), vec![k], &self.b3),
        ];
        for (i, d) in self.dense.iter().enumerate() {
            let t = i + 2;
            out.push((format!("U1_{t}"), vec![d.rows, d.cols], &d.u1));
            out.push((format!("U2_{t}"), vec![d.rows, d.rows], &d.u2));
            out.push((format!("U3_{t}"), vec![d.rows, d.rows], &d.u3));
            out.push((format!("b1_{t}"), vec![d.rows], &d.b1));
            out.push((format!("b2_{t}"), vec![d.rows], &d.b2));
            out.push((format!("b3_{t}"), vec![d.rows], &d.b3));
        }
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = vec![
            &mut self.c1,
            &mut self.c2,
            &mut self.c3,
            &mut self.b1,
            &mut self.b2,
            &mut self.b3,
        ];
        for d in &mut self.dense {
            out.push(&mut d.u1);
            out.push(&mut d.u2);
            out.push(&mut d.u3);
            out.push(&mut d.b1);
            out.push(&mut d.b2);
            out.push(&mut d.b3);
        }
        out
    }
}

/// Softmax classifier on the concatenated activations of every layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SupervisedHead {
    pub classes: usize,
    /// Length of the concatenated activation vector.
    pub inputs: usize,
    /// `weights[c * inputs + i]`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    /// Weight of the classification loss.
    pub xi: f64,
}

impl SupervisedHead {
    pub fn init<R: Rng + ?Sized>(classes: usize, layer_widths: &[usize], xi: f64, rng: &mut R) -> Result<Self> {
        if classes < 2 {
            return Err(Error::SingleClass);
        }
        if !(xi >= 0.0) {
            return Err(Error::invalid("xi must be nonnegative"));
        }
        let inputs = layer_widths.iter().sum();
        Ok(Self {
            classes,
            inputs,
            weights: gaussian(classes * inputs, inputs, rng),
            bias: vec![0.0; classes],
            xi,
        })
    }

    pub fn logits(&self, features: &[f64]) -> Vec<f64> {
        (0..self.classes)
            .map(|c| {
                let row = &self.weights[c * self.inputs..(c + 1) * self.inputs];
                self.bias[c] + row.iter().zip(features).map(|(w, x)| w * x).sum::<f64>()
            })
            .collect()
    }
}

impl ParamSet for SupervisedHead {
    fn tensors(&self) -> Vec<(String, Vec<usize>, &[f64])> {
        vec![
            ("head_W".into(), vec![self.classes, self.inputs], &self.weights),
            ("head_b".into(), vec![self.classes], &self.bias),
        ]
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        vec![&mut self.weights, &mut self.bias]
    }
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|z| (z - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|x| x / s).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam moments for one parameter set.
#[derive(Clone, Debug)]
pub struct Adam<P: ParamSet> {
    pub config: AdamConfig,
    m: P,
    v: P,
    steps: u64,
}

impl<P: ParamSet> Adam<P> {
    pub fn new(config: AdamConfig, like: &P) -> Self {
        Self {
            config,
            m: like.zeros_like(),
            v: like.zeros_like(),
            steps: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn step(&mut self, params: &mut P, grads: &P) {
        self.steps += 1;
        let c = self.config;
        let bc1 = 1.0 - c.beta1.powi(self.steps as i32);
        let bc2 = 1.0 - c.beta2.powi(self.steps as i32);
        let g: Vec<Vec<f64>> = grads.tensors().into_iter().map(|t| t.2.to_vec()).collect();
        let tensors = params.tensors_mut();
        let ms = self.m.tensors_mut();
        let vs = self.v.tensors_mut();
        for (((p, m), v), g) in tensors.into_iter().zip(ms).zip(vs).zip(g) {
            for i in 0..p.len() {
                m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
                v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
                let mh = m[i] / bc1;
                let vh = v[i] / bc2;
                p[i] -= c.lr * mh / (vh.sqrt() + c.eps);
            }
        }
    }
}

#[derive(Serialize, Deserialize)]
struct EncoderMeta {
    kind: String,
    vocab_size: usize,
    layer_widths: Vec<usize>,
    width: usize,
    #[serde(default)]
    head: Option<HeadMeta>,
    #[serde(default)]
    settings: serde_json::Value,
}

#[derive(Serialize, Deserialize)]
struct HeadMeta {
    classes: usize,
    xi: f64,
}

const ENCODER_KIND: &str = "weibull-conv-encoder";

/// Packs the encoder, and the classifier when present, into a checkpoint section.
pub fn to_section(
    encoder: &EncoderParams,
    head: Option<&SupervisedHead>,
    settings: serde_json::Value,
) -> Result<EncoderSection> {
    let meta = EncoderMeta {
        kind: ENCODER_KIND.into(),
        vocab_size: encoder.vocab_size,
        layer_widths: encoder.layer_widths(),
        width: encoder.width,
        head: head.map(|h| HeadMeta {
            classes: h.classes,
            xi: h.xi,
        }),
        settings,
    };
    let mut arrays: Vec<(ArraySpec, Vec<f64>)> = encoder
        .tensors()
        .into_iter()
        .map(|(name, shape, data)| (ArraySpec { name, shape }, data.to_vec()))
        .collect();
    if let Some(h) = head {
        arrays.extend(
            h.tensors()
                .into_iter()
                .map(|(name, shape, data)| (ArraySpec { name, shape }, data.to_vec())),
        );
    }
    Ok(EncoderSection {
        header: serde_json::to_value(meta)?,
        arrays,
    })
}

/// Inverse of [`to_section`].
pub fn from_section(section: &EncoderSection) -> Result<(EncoderParams, Option<SupervisedHead>)> {
    let meta: EncoderMeta = serde_json::from_value(section.header.clone())?;
    if meta.kind != ENCODER_KIND || meta.layer_widths.is_empty() {
        return Err(Error::Checkpoint("not an encoder section".into()));
    }
    let mut encoder = EncoderParams::zeros(meta.vocab_size, &meta.layer_widths, meta.width);
    let mut head = meta.head.map(|h| SupervisedHead {
        classes: h.classes,
        inputs: meta.layer_widths.iter().sum(),
        weights: vec![0.0; h.classes * meta.layer_widths.iter().sum::<usize>()],
        bias: vec![0.0; h.classes],
        xi: h.xi,
    });
    fn fill<P: ParamSet>(p: &mut P, section: &EncoderSection) -> Result<()> {
        let names: Vec<(String, usize)> = p.tensors().into_iter().map(|t| (t.0, t.2.len())).collect();
        for ((name, len), dst) in names.into_iter().zip(p.tensors_mut()) {
            let src = section
                .array(&name)
                .ok_or_else(|| Error::Checkpoint(format!("missing encoder array {name}")))?;
            if src.len() != len {
                return Err(Error::Checkpoint(format!("encoder array {name} has wrong size")));
            }
            dst.copy_from_slice(src);
        }
        Ok(())
    }
    fill(&mut encoder, section)?;
    if let Some(h) = head.as_mut() {
        fill(h, section)?;
    }
    Ok((encoder, head))
}

//! Encoder forward pass, Weibull reparameterized sampling, the negative ELBO
//! and its exact reverse-mode gradient.

use rand::Rng;

use crate::error::{Error, Result};
use crate::model::{log1mexp, Globals, LayerStack, Observation};
use crate::samplers::{clamp_uniform, MIN_DRAW};

use super::kl::{kl_terms, weibull_mean};
use super::params::{softmax, EncoderParams, ParamSet, SupervisedHead};

/// Upper clamp on every pre-activation fed to `exp`.
pub const PRE_MAX: f64 = 20.0;
/// Lower clamp on scale pre-activations.
pub const PRE_MIN: f64 = -20.0;
/// Smallest encoder-produced Weibull shape.
pub const SHAPE_MIN: f64 = 0.1;
/// Rate of every gamma prior used in the KL terms.
pub const PRIOR_RATE: f64 = 1.0;

fn shape_lo() -> f64 {
    SHAPE_MIN.ln()
}

fn exp_clamped(z: f64, lo: f64) -> f64 {
    z.clamp(lo, PRE_MAX).exp()
}

fn passes(z: f64, lo: f64) -> bool {
    z > lo && z < PRE_MAX
}

/// Intermediate values of the encoder for one document.
#[derive(Clone, Debug, PartialEq)]
pub struct Encoding {
    pub windows: usize,
    /// Zeros added before the first hidden column by `pad`.
    pub left_pad: usize,
    pub z1: Vec<f64>,
    /// Hidden map `H[k * S + s]`.
    pub hidden: Vec<f64>,
    pub z2: Vec<f64>,
    pub z3: Vec<f64>,
    /// Encoder part of the layer-one shapes, `K x S`.
    pub sigma1: Vec<f64>,
    /// Layer-one scales, `K x S`.
    pub lambda1: Vec<f64>,
    /// `pooled[t-1]` is `h^(t)`; `pooled[0]` is the mean over window starts.
    pub pooled: Vec<Vec<f64>>,
    pre1: Vec<Vec<f64>>,
    zs: Vec<Vec<f64>>,
    zl: Vec<Vec<f64>>,
    /// `sigma[t-2]` and `lambda[t-2]` parameterize layer `t`.
    pub sigma: Vec<Vec<f64>>,
    pub lambda: Vec<Vec<f64>>,
}

fn matvec(w: &[f64], rows: usize, cols: usize, x: &[f64], b: &[f64]) -> Vec<f64> {
    (0..rows)
        .map(|r| b[r] + w[r * cols..(r + 1) * cols].iter().zip(x).map(|(a, c)| a * c).sum::<f64>())
        .collect()
}

/// Width-`F` convolution of the zero-padded hidden map, output length `S`.
fn conv_padded(h: &[f64], c: &[f64], b: &[f64], k: usize, windows: usize, f: usize, left: usize) -> Vec<f64> {
    let mut out = vec![0.0; k * windows];
    for kk in 0..k {
        for s in 0..windows {
            let mut z = b[kk];
            for k2 in 0..k {
                let base = (kk * k + k2) * f;
                for ff in 0..f {
                    let p = s + ff;
                    if p >= left && p - left < windows {
                        z += c[base + ff] * h[k2 * windows + p - left];
                    }
                }
            }
            out[kk * windows + s] = z;
        }
    }
    out
}

fn conv_padded_backward(
    h: &[f64],
    c: &[f64],
    g_z: &[f64],
    dims: (usize, usize, usize, usize),
    g_c: &mut [f64],
    g_b: &mut [f64],
    g_h: &mut [f64],
) {
    let (k, windows, f, left) = dims;
    for kk in 0..k {
        for s in 0..windows {
            let g = g_z[kk * windows + s];
            if g == 0.0 {
                continue;
            }
            g_b[kk] += g;
            for k2 in 0..k {
                let base = (kk * k + k2) * f;
                for ff in 0..f {
                    let p = s + ff;
                    if p >= left && p - left < windows {
                        let idx = k2 * windows + p - left;
                        g_c[base + ff] += g * h[idx];
                        g_h[idx] += g * c[base + ff];
                    }
                }
            }
        }
    }
}

/// Runs the inference network on one document.
///
/// The first convolution is a gather: each positive entry `(v, l)` adds
/// column `C1[:, v, f]` to window start `l - f`.
pub fn encode(obs: &Observation, p: &EncoderParams) -> Result<Encoding> {
    let (k1, vocab, f) = (p.num_kernels, p.vocab_size, p.width);
    let windows = obs.windows(f).ok_or(Error::DocumentTooShort {
        doc: 0,
        length: obs.length,
        width: f,
    })?;
    let mut z1 = vec![0.0; k1 * windows];
    for k in 0..k1 {
        z1[k * windows..(k + 1) * windows].fill(p.b1[k]);
    }
    for &(v, l) in &obs.entries {
        let (v, l) = (v as usize, l as usize);
        if v >= vocab {
            return Err(Error::PositionOutOfRange {
                position: v,
                length: vocab,
            });
        }
        for ff in 0..f.min(l + 1) {
            let s = l - ff;
            if s >= windows {
                continue;
            }
            for k in 0..k1 {
                z1[k * windows + s] += p.c1[(k * vocab + v) * f + ff];
            }
        }
    }
    let hidden: Vec<f64> = z1.iter().map(|&z| z.max(0.0)).collect();
    let left = (f - 1) / 2;
    let z2 = conv_padded(&hidden, &p.c2, &p.b2, k1, windows, f, left);
    let z3 = conv_padded(&hidden, &p.c3, &p.b3, k1, windows, f, left);
    let sigma1 = z2.iter().map(|&z| exp_clamped(z, shape_lo())).collect();
    let lambda1 = z3.iter().map(|&z| exp_clamped(z, PRE_MIN)).collect();
    let h1: Vec<f64> = (0..k1)
        .map(|k| hidden[k * windows..(k + 1) * windows].iter().sum::<f64>() / windows as f64)
        .collect();
    let mut enc = Encoding {
        windows,
        left_pad: left,
        z1,
        hidden,
        z2,
        z3,
        sigma1,
        lambda1,
        pooled: vec![h1],
        pre1: Vec::new(),
        zs: Vec::new(),
        zl: Vec::new(),
        sigma: Vec::new(),
        lambda: Vec::new(),
    };
    for d in &p.dense {
        let below = enc.pooled.last().expect("seeded");
        let pre = matvec(&d.u1, d.rows, d.cols, below, &d.b1);
        let h: Vec<f64> = pre.iter().map(|&z| z.max(0.0)).collect();
        let zs = matvec(&d.u2, d.rows, d.rows, &h, &d.b2);
        let zl = matvec(&d.u3, d.rows, d.rows, &h, &d.b3);
        enc.sigma.push(zs.iter().map(|&z| exp_clamped(z, shape_lo())).collect());
        enc.lambda.push(zl.iter().map(|&z| exp_clamped(z, PRE_MIN)).collect());
        enc.pre1.push(pre);
        enc.zs.push(zs);
        enc.zl.push(zl);
        enc.pooled.push(h);
    }
    Ok(enc)
}

/// Uniform noise for one reparameterized draw.
#[derive(Clone, Debug, PartialEq)]
pub struct Noise {
    /// One uniform per `(k, s)`.
    pub w: Vec<f64>,
    /// `theta[t-2]`, one uniform per node of layer `t`.
    pub theta: Vec<Vec<f64>>,
}

impl Noise {
    pub fn draw<R: Rng + ?Sized>(layer_widths: &[usize], windows: usize, rng: &mut R) -> Self {
        let mut u = |n: usize| (0..n).map(|_| clamp_uniform(rng.random())).collect::<Vec<f64>>();
        let w = u(layer_widths[0] * windows);
        let theta = layer_widths[1..].iter().map(|&k| u(k)).collect();
        Self { w, theta }
    }
}

/// Weibull parameters of every latent after the top-down shape additions.
#[derive(Clone, Debug, PartialEq)]
pub struct WeibullPosterior {
    pub windows: usize,
    /// Layer-one shapes and scales, `K x S`.
    pub shape1: Vec<f64>,
    pub scale1: Vec<f64>,
    /// `shapes[t-2]` and `scales[t-2]` for layer `t`.
    pub shapes: Vec<Vec<f64>>,
    pub scales: Vec<Vec<f64>>,
}

/// A joint draw (or the deterministic mean path) of the latents.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentDraw {
    pub posterior: WeibullPosterior,
    /// `w[k * S + s]`.
    pub w: Vec<f64>,
    /// `theta[t-1]` for layer `t`; `theta[0][k] = sum_s w_ks`.
    pub theta: Vec<Vec<f64>>,
    /// Shape of the gamma prior of each layer-one weight, per kernel.
    pub prior1: Vec<f64>,
    /// `priors[t-2]`: gamma prior shapes of layer `t`.
    pub priors: Vec<Vec<f64>>,
    e_w: Vec<f64>,
    e_theta: Vec<Vec<f64>>,
}

fn positive(x: f64) -> f64 {
    x.max(f64::MIN_POSITIVE)
}

/// Draws `(x, -ln(1-u))`, or returns the Weibull mean when `u` is `None`.
fn weibull(k: f64, lambda: f64, u: Option<f64>) -> (f64, f64) {
    match u {
        Some(u) => {
            let e = -(-u).ln_1p();
            ((lambda * e.powf(1.0 / k)).max(MIN_DRAW), e)
        }
        None => (weibull_mean(k, lambda), f64::NAN),
    }
}

/// Samples top-down: layer `T` uses shape `sigma^(T) + r`, lower layers add
/// `Phi^(t+1) theta^(t+1)`. Without noise every latent is set to its mean.
pub fn draw_latents(enc: &Encoding, layers: &LayerStack, noise: Option<&Noise>) -> LatentDraw {
    let depth = enc.sigma.len() + 1;
    let windows = enc.windows;
    let k1 = enc.sigma1.len() / windows;
    let mut theta: Vec<Vec<f64>> = vec![Vec::new(); depth];
    let mut shapes = vec![Vec::new(); depth - 1];
    let mut priors = vec![Vec::new(); depth - 1];
    let mut e_theta = vec![Vec::new(); depth - 1];
    for t in (2..=depth).rev() {
        let i = t - 2;
        let add = if t == depth {
            layers.r.clone()
        } else {
            layers.phi(t + 1).mul_vec(&theta[t])
        };
        let shape: Vec<f64> = enc.sigma[i].iter().zip(&add).map(|(s, a)| s + a).collect();
        let mut th = Vec::with_capacity(shape.len());
        let mut es = Vec::with_capacity(shape.len());
        for (n, (&k, &l)) in shape.iter().zip(&enc.lambda[i]).enumerate() {
            let (x, e) = weibull(k, l, noise.map(|z| z.theta[i][n]));
            th.push(x);
            es.push(e);
        }
        theta[t - 1] = th;
        e_theta[i] = es;
        shapes[i] = shape;
        priors[i] = add.into_iter().map(positive).collect();
    }
    let (add1, prior1): (Vec<f64>, Vec<f64>) = if depth >= 2 {
        let a = layers.phi(2).mul_vec(&theta[1]);
        let p = a.iter().map(|&x| positive(x / windows as f64)).collect();
        (a, p)
    } else {
        (vec![0.0; k1], layers.r.clone())
    };
    let mut shape1 = Vec::with_capacity(k1 * windows);
    let mut w = Vec::with_capacity(k1 * windows);
    let mut e_w = Vec::with_capacity(k1 * windows);
    for k in 0..k1 {
        for s in 0..windows {
            let i = k * windows + s;
            let shape = enc.sigma1[i] + add1[k];
            let (x, e) = weibull(shape, enc.lambda1[i], noise.map(|z| z.w[i]));
            shape1.push(shape);
            w.push(x);
            e_w.push(e);
        }
    }
    theta[0] = (0..k1).map(|k| w[k * windows..(k + 1) * windows].iter().sum()).collect();
    LatentDraw {
        posterior: WeibullPosterior {
            windows,
            shape1,
            scale1: enc.lambda1.clone(),
            shapes,
            scales: enc.lambda.clone(),
        },
        w,
        theta,
        prior1,
        priors,
        e_w,
        e_theta,
    }
}

/// Terms of the per-document objective.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LossParts {
    /// Bernoulli-Poisson log-likelihood at the sampled weights.
    pub recon: f64,
    pub kl_layer1: f64,
    /// `kl_upper[t-2]` for layer `t`.
    pub kl_upper: Vec<f64>,
    /// Cross-entropy of the classifier; zero without a head.
    pub class: f64,
    pub xi: f64,
}

impl LossParts {
    pub fn kl_total(&self) -> f64 {
        self.kl_layer1 + self.kl_upper.iter().sum::<f64>()
    }

    pub fn elbo(&self) -> f64 {
        self.recon - self.kl_total()
    }

    /// `-ELBO + xi * cross-entropy`.
    pub fn loss(&self) -> f64 {
        -self.elbo() + self.xi * self.class
    }
}

/// Result of [`evaluate`].
#[derive(Clone, Debug)]
pub struct Evaluation {
    pub parts: LossParts,
    pub latents: LatentDraw,
    pub encoder_grad: Option<EncoderParams>,
    pub head_grad: Option<SupervisedHead>,
}

fn check(name: &str, x: f64) -> Result<f64> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(Error::NonFinite(name.into()))
    }
}

/// Weibull sample derivatives `(dx/dk, dx/dlambda)`.
fn weibull_partials(x: f64, k: f64, lambda: f64, e: f64) -> (f64, f64) {
    if x <= MIN_DRAW {
        return (0.0, 0.0);
    }
    (-x * e.ln() / (k * k), x / lambda)
}

fn concat(theta: &[Vec<f64>]) -> Vec<f64> {
    theta.iter().flatten().copied().collect()
}

/// Forward pass of the per-document loss and, when `grad` is set, its
/// gradient with respect to every encoder and head parameter.
pub fn evaluate(
    obs: &Observation,
    params: &EncoderParams,
    head: Option<(&SupervisedHead, usize)>,
    noise: &Noise,
    globals: &Globals,
    grad: bool,
) -> Result<Evaluation> {
    let bank = &globals.bank;
    let layers = &globals.layers;
    let enc = encode(obs, params)?;
    let lat = draw_latents(&enc, layers, Some(noise));
    let depth = enc.sigma.len() + 1;
    let windows = enc.windows;
    let (k1, vocab, f) = (params.num_kernels, params.vocab_size, params.width);
    if bank.num_kernels() != k1 || bank.vocab_size() != vocab || bank.width() != f {
        return Err(Error::Shape("encoder and kernels differ in shape".into()));
    }
    if noise.w.len() != k1 * windows {
        return Err(Error::Shape("noise does not match the document".into()));
    }
    let post = &lat.posterior;

    // Reconstruction.
    let totals: Vec<f64> = (0..k1).map(|k| bank.kernel(k).iter().sum()).collect();
    let mut recon = 0.0;
    for k in 0..k1 {
        recon -= totals[k] * lat.w[k * windows..(k + 1) * windows].iter().sum::<f64>();
    }
    let mut rates = Vec::with_capacity(obs.entries.len());
    for &(v, l) in &obs.entries {
        let (v, l) = (v as usize, l as usize);
        let mut lam = 0.0;
        for k in 0..k1 {
            for ff in 0..f.min(l + 1) {
                let s = l - ff;
                if s < windows {
                    lam += bank.get(k, v, ff) * lat.w[k * windows + s];
                }
            }
        }
        // Positive entries contribute ln(1 - e^-lam) in place of -lam.
        recon += log1mexp(lam) + lam;
        rates.push(lam);
    }
    let recon = check("reconstruction", recon)?;

    // KL terms.
    let mut kl1 = 0.0;
    for k in 0..k1 {
        for s in 0..windows {
            let i = k * windows + s;
            kl1 += kl_terms(post.shape1[i], post.scale1[i], lat.prior1[k], PRIOR_RATE).value;
        }
    }
    let kl_layer1 = check("KL of layer 1", kl1)?;
    let mut kl_upper = Vec::with_capacity(depth - 1);
    for i in 0..depth - 1 {
        let v: f64 = (0..post.shapes[i].len())
            .map(|n| kl_terms(post.shapes[i][n], post.scales[i][n], lat.priors[i][n], PRIOR_RATE).value)
            .sum();
        kl_upper.push(check(&format!("KL of layer {}", i + 2), v)?);
    }

    // Classifier.
    let features = concat(&lat.theta);
    let mut class = 0.0;
    let mut probs = Vec::new();
    let mut xi = 0.0;
    if let Some((h, y)) = head {
        if y >= h.classes {
            return Err(Error::invalid(format!("label {y} outside {} classes", h.classes)));
        }
        if h.inputs != features.len() {
            return Err(Error::Shape("classifier input size".into()));
        }
        probs = softmax(&h.logits(&features));
        class = check("classifier loss", -probs[y].max(f64::MIN_POSITIVE).ln())?;
        xi = h.xi;
    }
    let parts = LossParts {
        recon,
        kl_layer1,
        kl_upper,
        class,
        xi,
    };
    if !grad {
        return Ok(Evaluation {
            parts,
            latents: lat,
            encoder_grad: None,
            head_grad: None,
        });
    }

    let widths = params.layer_widths();
    let mut g_theta: Vec<Vec<f64>> = widths.iter().map(|&k| vec![0.0; k]).collect();
    let mut head_grad = None;
    if let Some((h, y)) = head {
        let mut gh = h.zeros_like();
        let mut g_feat = vec![0.0; h.inputs];
        for c in 0..h.classes {
            let gl = h.xi * (probs[c] - if c == y { 1.0 } else { 0.0 });
            gh.bias[c] = gl;
            for i in 0..h.inputs {
                gh.weights[c * h.inputs + i] = gl * features[i];
                g_feat[i] += h.weights[c * h.inputs + i] * gl;
            }
        }
        let mut off = 0;
        for g in g_theta.iter_mut() {
            let n = g.len();
            g.copy_from_slice(&g_feat[off..off + n]);
            off += n;
        }
        head_grad = Some(gh);
    }

    // d loss / d w, with loss = -recon + KL + xi * class.
    let mut g_w = vec![0.0; k1 * windows];
    for k in 0..k1 {
        for s in 0..windows {
            g_w[k * windows + s] = g_theta[0][k] + totals[k];
        }
    }
    for (&(v, l), &lam) in obs.entries.iter().zip(&rates) {
        let (v, l) = (v as usize, l as usize);
        let d = 1.0 / lam.exp_m1() + 1.0;
        for k in 0..k1 {
            for ff in 0..f.min(l + 1) {
                let s = l - ff;
                if s < windows {
                    g_w[k * windows + s] -= d * bank.get(k, v, ff);
                }
            }
        }
    }

    let mut g = params.zeros_like();
    let mut g_z2 = vec![0.0; k1 * windows];
    let mut g_z3 = vec![0.0; k1 * windows];
    let mut g_add1 = vec![0.0; k1];
    for k in 0..k1 {
        for s in 0..windows {
            let i = k * windows + s;
            let (shape, scale) = (post.shape1[i], post.scale1[i]);
            let kt = kl_terms(shape, scale, lat.prior1[k], PRIOR_RATE);
            let (dk, dl) = weibull_partials(lat.w[i], shape, scale, lat.e_w[i]);
            let gs = g_w[i] * dk + kt.d_shape;
            let gl = g_w[i] * dl + kt.d_scale;
            if depth >= 2 {
                g_add1[k] += gs + kt.d_alpha / windows as f64;
            }
            if passes(enc.z2[i], shape_lo()) {
                g_z2[i] = gs * enc.sigma1[i];
            }
            if passes(enc.z3[i], PRE_MIN) {
                g_z3[i] = gl * enc.lambda1[i];
            }
        }
    }
    if depth >= 2 {
        let back = layers.phi(2).tr_mul_vec(&g_add1);
        for (a, b) in g_theta[1].iter_mut().zip(back) {
            *a += b;
        }
    }
    let mut g_zs: Vec<Vec<f64>> = Vec::with_capacity(depth - 1);
    let mut g_zl: Vec<Vec<f64>> = Vec::with_capacity(depth - 1);
    for t in 2..=depth {
        let i = t - 2;
        let n = post.shapes[i].len();
        let mut g_add = vec![0.0; n];
        let mut zs = vec![0.0; n];
        let mut zl = vec![0.0; n];
        for c in 0..n {
            let (shape, scale) = (post.shapes[i][c], post.scales[i][c]);
            let kt = kl_terms(shape, scale, lat.priors[i][c], PRIOR_RATE);
            let (dk, dl) = weibull_partials(lat.theta[t - 1][c], shape, scale, lat.e_theta[i][c]);
            let gs = g_theta[t - 1][c] * dk + kt.d_shape;
            let gl = g_theta[t - 1][c] * dl + kt.d_scale;
            g_add[c] = gs + kt.d_alpha;
            if passes(enc.zs[i][c], shape_lo()) {
                zs[c] = gs * enc.sigma[i][c];
            }
            if passes(enc.zl[i][c], PRE_MIN) {
                zl[c] = gl * enc.lambda[i][c];
            }
        }
        if t < depth {
            let back = layers.phi(t + 1).tr_mul_vec(&g_add);
            for (a, b) in g_theta[t].iter_mut().zip(back) {
                *a += b;
            }
        }
        g_zs.push(zs);
        g_zl.push(zl);
    }

    let mut g_h: Vec<Vec<f64>> = enc.pooled.iter().map(|h| vec![0.0; h.len()]).collect();
    for t in (2..=depth).rev() {
        let i = t - 2;
        let d = &params.dense[i];
        let gd = &mut g.dense[i];
        let h = &enc.pooled[t - 1];
        let (rows, cols) = (d.rows, d.cols);
        for r in 0..rows {
            let (a, b) = (g_zs[i][r], g_zl[i][r]);
            gd.b2[r] += a;
            gd.b3[r] += b;
            for c in 0..rows {
                gd.u2[r * rows + c] += a * h[c];
                gd.u3[r * rows + c] += b * h[c];
                g_h[t - 1][c] += d.u2[r * rows + c] * a + d.u3[r * rows + c] * b;
            }
        }
        let below = &enc.pooled[t - 2];
        for r in 0..rows {
            if enc.pre1[i][r] <= 0.0 {
                continue;
            }
            let gp = g_h[t - 1][r];
            gd.b1[r] += gp;
            for c in 0..cols {
                gd.u1[r * cols + c] += gp * below[c];
                g_h[t - 2][c] += d.u1[r * cols + c] * gp;
            }
        }
    }

    let mut g_hidden = vec![0.0; k1 * windows];
    for k in 0..k1 {
        let gk = g_h[0][k] / windows as f64;
        g_hidden[k * windows..(k + 1) * windows].fill(gk);
    }
    let dims = (k1, windows, f, enc.left_pad);
    conv_padded_backward(&enc.hidden, &params.c2, &g_z2, dims, &mut g.c2, &mut g.b2, &mut g_hidden);
    conv_padded_backward(&enc.hidden, &params.c3, &g_z3, dims, &mut g.c3, &mut g.b3, &mut g_hidden);
    for (gh, &z) in g_hidden.iter_mut().zip(&enc.z1) {
        if z <= 0.0 {
            *gh = 0.0;
        }
    }
    for k in 0..k1 {
        g.b1[k] += g_hidden[k * windows..(k + 1) * windows].iter().sum::<f64>();
    }
    for &(v, l) in &obs.entries {
        let (v, l) = (v as usize, l as usize);
        for ff in 0..f.min(l + 1) {
            let s = l - ff;
            if s >= windows {
                continue;
            }
            for k in 0..k1 {
                g.c1[(k * vocab + v) * f + ff] += g_hidden[k * windows + s];
            }
        }
    }
    for (name, _, data) in g.tensors() {
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!("gradient of {name}")));
        }
    }
    Ok(Evaluation {
        parts,
        latents: lat,
        encoder_grad: Some(g),
        head_grad,
    })
}

/// Single-sample ELBO of one document.
pub fn elbo(obs: &Observation, params: &EncoderParams, noise: &Noise, globals: &Globals) -> Result<f64> {
    Ok(evaluate(obs, params, None, noise, globals, false)?.parts.elbo())
}

/// Gradients of the per-document loss.
pub fn backward(
    obs: &Observation,
    params: &EncoderParams,
    head: Option<(&SupervisedHead, usize)>,
    noise: &Noise,
    globals: &Globals,
) -> Result<(LossParts, EncoderParams, Option<SupervisedHead>)> {
    let e = evaluate(obs, params, head, noise, globals, true)?;
    Ok((e.parts, e.encoder_grad.expect("requested"), e.head_grad))
}

/// `L_g + xi * L_c` for a labeled document; a missing label is an error.
pub fn supervised_loss(
    obs: &Observation,
    label: Option<usize>,
    params: &EncoderParams,
    head: &SupervisedHead,
    noise: &Noise,
    globals: &Globals,
    doc: usize,
) -> Result<LossParts> {
    let y = label.ok_or(Error::MissingLabel(doc))?;
    Ok(evaluate(obs, params, Some((head, y)), noise, globals, false)?.parts)
}

/// Class probabilities from the deterministic mean path.
pub fn predict_label(
    obs: &Observation,
    params: &EncoderParams,
    layers: &LayerStack,
    head: &SupervisedHead,
) -> Result<(usize, Vec<f64>)> {
    let enc = encode(obs, params)?;
    let lat = draw_latents(&enc, layers, None);
    let probs = softmax(&head.logits(&concat(&lat.theta)));
    let best = probs
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, &p)| if p > acc.1 { (i, p) } else { acc })
        .0;
    Ok((best, probs))
}

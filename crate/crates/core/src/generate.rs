//! Forward sampling from the generative model and planted synthetic corpora.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Poisson};

use crate::error::{Error, Result};
use crate::model::{DocLocalState, Globals, Hyperparams, KernelBank, Observation};

/// Per-kernel cumulative sums for drawing `(v, f)` cells.
struct KernelSampler {
    cumulative: Vec<Vec<f64>>,
}

impl KernelSampler {
    fn new(bank: &KernelBank) -> Self {
        let cumulative = (0..bank.num_kernels())
            .map(|k| {
                let mut acc = 0.0;
                bank.kernel(k)
                    .iter()
                    .map(|&d| {
                        acc += d;
                        acc
                    })
                    .collect()
            })
            .collect();
        Self { cumulative }
    }

    fn draw<R: Rng + ?Sized>(&self, k: usize, rng: &mut R) -> usize {
        let c = &self.cumulative[k];
        let u = rng.random::<f64>() * c[c.len() - 1];
        c.partition_point(|&x| x <= u).min(c.len() - 1)
    }
}

/// Draws the latent count matrix of one document and binarizes it.
///
/// Each window start emits `Pois(w_jks)` events and each event lands on a
/// kernel cell `(v, f)` drawn from `D_k`, i.e. on word `v` at position
/// `s + f`. Returns the observation and the latent counts aligned with its
/// entries.
pub fn sample_observation<R: Rng + ?Sized>(
    bank: &KernelBank,
    state: &DocLocalState,
    rng: &mut R,
) -> Result<(Observation, Vec<u32>)> {
    let sampler = KernelSampler::new(bank);
    sample_with(&sampler, bank, state, rng)
}

fn sample_with<R: Rng + ?Sized>(
    sampler: &KernelSampler,
    bank: &KernelBank,
    state: &DocLocalState,
    rng: &mut R,
) -> Result<(Observation, Vec<u32>)> {
    let width = bank.width();
    let length = state.windows + width - 1;
    let mut cells: BTreeMap<(u32, u32), u32> = BTreeMap::new();
    for k in 0..bank.num_kernels() {
        for (s, &w) in state.weights(k).iter().enumerate() {
            if !(w > 0.0) {
                continue;
            }
            if w > 1e8 {
                return Err(Error::invalid(format!("weight {w} too large to simulate")));
            }
            let n: f64 = Poisson::new(w)
                .map_err(|e| Error::invalid(e.to_string()))?
                .sample(rng);
            for _ in 0..n as u64 {
                let idx = sampler.draw(k, rng);
                let (v, f) = (idx / width, idx % width);
                *cells.entry(((s + f) as u32, v as u32)).or_insert(0) += 1;
            }
        }
    }
    let entries = cells.keys().map(|&(l, v)| (v, l)).collect();
    let counts = cells.values().copied().collect();
    Ok((Observation::from_entries(length, entries)?, counts))
}

/// A complete draw from the joint model.
#[derive(Clone, Debug)]
pub struct ForwardSample {
    pub globals: Globals,
    pub locals: Vec<DocLocalState>,
    pub observations: Vec<Observation>,
    pub counts: Vec<Vec<u32>>,
}

/// Ancestral sampling of globals, locals and data for documents of the given lengths.
pub fn sample_joint<R: Rng + ?Sized>(
    hyper: &Hyperparams,
    vocab_size: usize,
    lengths: &[usize],
    rng: &mut R,
) -> Result<ForwardSample> {
    let globals = Globals::from_prior(hyper.clone(), vocab_size, rng)?;
    let (locals, observations, counts) = sample_locals_and_data(&globals, lengths, rng)?;
    Ok(ForwardSample {
        globals,
        locals,
        observations,
        counts,
    })
}

type LocalDraw = (Vec<DocLocalState>, Vec<Observation>, Vec<Vec<u32>>);

/// Draws local variables and data given fixed globals.
pub fn sample_locals_and_data<R: Rng + ?Sized>(
    globals: &Globals,
    lengths: &[usize],
    rng: &mut R,
) -> Result<LocalDraw> {
    let sampler = KernelSampler::new(&globals.bank);
    let mut locals = Vec::with_capacity(lengths.len());
    let mut observations = Vec::with_capacity(lengths.len());
    let mut counts = Vec::with_capacity(lengths.len());
    for &length in lengths {
        let placeholder = Observation {
            length,
            entries: Vec::new(),
        };
        let mut state = DocLocalState::from_prior(globals, &placeholder, rng)?;
        let (obs, m) = sample_with(&sampler, &globals.bank, &state, rng)?;
        state.counts = m.clone();
        locals.push(state);
        observations.push(obs);
        counts.push(m);
    }
    Ok((locals, observations, counts))
}

/// Redraws the data of every document given the current latent state.
pub fn resample_data<R: Rng + ?Sized>(
    bank: &KernelBank,
    locals: &mut [DocLocalState],
    rng: &mut R,
) -> Result<Vec<Observation>> {
    let sampler = KernelSampler::new(bank);
    locals
        .iter_mut()
        .map(|state| {
            let (obs, m) = sample_with(&sampler, bank, state, rng)?;
            state.counts = m;
            Ok(obs)
        })
        .collect()
}

/// Settings for a corpus built from planted phrase kernels.
#[derive(Clone, Debug)]
pub struct PlantedConfig {
    pub vocab_size: usize,
    pub num_kernels: usize,
    pub width: usize,
    /// Candidate words per kernel column.
    pub words_per_column: usize,
    pub num_docs: usize,
    /// Inclusive range of phrases per document.
    pub phrases: (usize, usize),
    /// Inclusive range of filler tokens between phrases.
    pub gap: (usize, usize),
}

impl Default for PlantedConfig {
    fn default() -> Self {
        Self {
            vocab_size: 50,
            num_kernels: 4,
            width: 3,
            words_per_column: 2,
            num_docs: 500,
            phrases: (3, 5),
            gap: (1, 2),
        }
    }
}

/// A labeled corpus and the kernels that generated it.
#[derive(Clone, Debug)]
pub struct PlantedCorpus {
    pub docs: Vec<Vec<u32>>,
    pub labels: Vec<usize>,
    /// Planted kernels, flattened `[v][f]` like [`KernelBank::kernel`].
    pub kernels: Vec<Vec<f64>>,
    /// Word ids reserved for filler tokens.
    pub fillers: Vec<u32>,
}

/// Generates documents that each repeat phrases of one planted kernel,
/// separated by filler words.
///
/// Kernel `g`, column `f` owns `words_per_column` distinct words with
/// probabilities proportional to `1, 1/2, ...`; a phrase draws one word per
/// column independently. Document `j` uses kernel `j mod num_kernels`.
pub fn planted_phrase_corpus<R: Rng + ?Sized>(
    config: &PlantedConfig,
    rng: &mut R,
) -> Result<PlantedCorpus> {
    let (nk, width, per) = (config.num_kernels, config.width, config.words_per_column);
    let reserved = nk * width * per;
    if reserved >= config.vocab_size || per == 0 || nk == 0 || width == 0 {
        return Err(Error::invalid("vocabulary too small for the planted words"));
    }
    if config.phrases.0 == 0 || config.phrases.0 > config.phrases.1 || config.gap.0 > config.gap.1 {
        return Err(Error::invalid("bad phrase or gap range"));
    }
    let raw: Vec<f64> = (1..=per).map(|i| 1.0 / i as f64).collect();
    let norm: f64 = raw.iter().sum();
    let probs: Vec<f64> = raw.iter().map(|p| p / norm).collect();
    let word = |g: usize, f: usize, i: usize| ((g * width + f) * per + i) as u32;

    let mut kernels = Vec::with_capacity(nk);
    for g in 0..nk {
        let mut d = vec![0.0; config.vocab_size * width];
        for f in 0..width {
            for (i, p) in probs.iter().enumerate() {
                d[word(g, f, i) as usize * width + f] = p / width as f64;
            }
        }
        kernels.push(d);
    }
    let fillers: Vec<u32> = (reserved as u32..config.vocab_size as u32).collect();

    let pick = |rng: &mut R| {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (i, p) in probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return i;
            }
        }
        per - 1
    };
    let mut docs = Vec::with_capacity(config.num_docs);
    let mut labels = Vec::with_capacity(config.num_docs);
    for j in 0..config.num_docs {
        let g = j % nk;
        let n_phrases = rng.random_range(config.phrases.0..=config.phrases.1);
        let mut tokens = Vec::new();
        for p in 0..n_phrases {
            if p > 0 || rng.random::<bool>() {
                let gap = rng.random_range(config.gap.0..=config.gap.1);
                for _ in 0..gap {
                    tokens.push(fillers[rng.random_range(0..fillers.len())]);
                }
            }
            for f in 0..width {
                tokens.push(word(g, f, pick(rng)));
            }
        }
        docs.push(tokens);
        labels.push(g);
    }
    Ok(PlantedCorpus {
        docs,
        labels,
        kernels,
        fillers,
    })
}

/// Cosine similarity of two equally long vectors.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

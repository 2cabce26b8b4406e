//! Latent-count imputation and the multinomial augmentation of counts over
//! kernels, window starts and kernel offsets.

use rand::Rng;

use crate::error::{Error, Result};
use crate::model::{DocLocalState, KernelBank, Observation};
use crate::model::rate::total_rate_unchecked;
use crate::samplers::{sample_multinomial_into, sample_truncated_poisson};

/// Zero-truncated Poisson counts at every positive entry, aligned with
/// `obs.entries`.
pub fn impute_counts<R: Rng + ?Sized>(
    obs: &Observation,
    bank: &KernelBank,
    state: &DocLocalState,
    rng: &mut R,
) -> Result<Vec<u32>> {
    let mut out = Vec::with_capacity(obs.entries.len());
    for &(v, l) in &obs.entries {
        let rate = total_rate_unchecked(bank, &state.w, state.windows, v as usize, l as usize);
        if !(rate > 0.0) || !rate.is_finite() {
            return Err(Error::ZeroRate {
                doc: 0,
                position: l as usize,
            });
        }
        out.push(sample_truncated_poisson(rate, rng)?);
    }
    Ok(out)
}

/// How one latent count was split.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct EntrySplit {
    /// Stage (i): count per kernel.
    pub kernels: Vec<u32>,
    /// Stages (ii) and (iii): `(k, s, f, count)` with `f = l - s`.
    pub cells: Vec<(u32, u32, u32, u32)>,
}

/// Reusable buffers for repeated splits.
#[derive(Default)]
pub(crate) struct SplitScratch {
    zeta: Vec<f64>,
    by_kernel: Vec<u32>,
    delta: Vec<f64>,
    by_offset: Vec<u32>,
}

/// Splits `count` at entry `(v, l)`, calling `emit(k, s, f, n)` for every
/// nonzero cell. Returns nothing; the kernel split is left in the scratch.
#[allow(clippy::too_many_arguments)]
pub(crate) fn split_with<R: Rng + ?Sized>(
    count: u32,
    v: usize,
    l: usize,
    bank: &KernelBank,
    w: &[f64],
    windows: usize,
    scratch: &mut SplitScratch,
    rng: &mut R,
    mut emit: impl FnMut(usize, usize, usize, u32),
) -> Result<()> {
    let nk = bank.num_kernels();
    let width = bank.width();
    if l >= windows + width - 1 {
        return Err(Error::PositionOutOfRange {
            position: l,
            length: windows + width - 1,
        });
    }
    let f_min = (l + 1).saturating_sub(windows);
    let f_max = width.min(l + 1);
    let nf = f_max - f_min;

    scratch.zeta.clear();
    for k in 0..nk {
        let wk = &w[k * windows..(k + 1) * windows];
        let mut z = 0.0;
        for f in f_min..f_max {
            z += wk[l - f] * bank.get(k, v, f);
        }
        scratch.zeta.push(z);
    }
    scratch.by_kernel.clear();
    scratch.by_kernel.resize(nk, 0);
    sample_multinomial_into(count, &scratch.zeta, &mut scratch.by_kernel, rng)?;

    for k in 0..nk {
        let mk = scratch.by_kernel[k];
        if mk == 0 {
            continue;
        }
        let wk = &w[k * windows..(k + 1) * windows];
        scratch.delta.clear();
        for f in f_min..f_max {
            scratch.delta.push(wk[l - f] * bank.get(k, v, f));
        }
        scratch.by_offset.clear();
        scratch.by_offset.resize(nf, 0);
        sample_multinomial_into(mk, &scratch.delta, &mut scratch.by_offset, rng)?;
        for (i, &n) in scratch.by_offset.iter().enumerate() {
            if n > 0 {
                let f = f_min + i;
                emit(k, l - f, f, n);
            }
        }
    }
    Ok(())
}

/// Splits one latent count at entry `(v, l)` over kernels, then window
/// starts; the offset is `f = l - s`.
pub fn split_entry<R: Rng + ?Sized>(
    count: u32,
    v: usize,
    l: usize,
    bank: &KernelBank,
    state: &DocLocalState,
    rng: &mut R,
) -> Result<EntrySplit> {
    let mut scratch = SplitScratch::default();
    let mut cells = Vec::new();
    split_with(count, v, l, bank, &state.w, state.windows, &mut scratch, rng, |k, s, f, n| {
        cells.push((k as u32, s as u32, f as u32, n))
    })?;
    Ok(EntrySplit {
        kernels: scratch.by_kernel,
        cells,
    })
}

/// Augmented counts contributed by one document.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DocStats {
    pub windows: usize,
    /// `positions[k * S + s]` = `m_jk..s`.
    pub positions: Vec<u32>,
    /// `totals[k]` = `m_jk...`.
    pub totals: Vec<u32>,
    /// Kernel counts as `(index into KernelBank::data, count)`; indices may repeat.
    pub kernel_entries: Vec<(u32, u32)>,
}

impl DocStats {
    pub fn position_counts(&self, k: usize) -> &[u32] {
        &self.positions[k * self.windows..(k + 1) * self.windows]
    }

    pub fn total(&self) -> u64 {
        self.totals.iter().map(|&n| n as u64).sum()
    }
}

/// Runs all augmentation stages over the positive entries of a document.
pub fn augment_counts<R: Rng + ?Sized>(
    obs: &Observation,
    counts: &[u32],
    bank: &KernelBank,
    state: &DocLocalState,
    rng: &mut R,
) -> Result<DocStats> {
    if counts.len() != obs.entries.len() {
        return Err(Error::Shape("one count per positive entry".into()));
    }
    let nk = bank.num_kernels();
    let windows = state.windows;
    let (vocab, width) = (bank.vocab_size(), bank.width());
    let mut stats = DocStats {
        windows,
        positions: vec![0; nk * windows],
        totals: vec![0; nk],
        kernel_entries: Vec::with_capacity(obs.entries.len()),
    };
    let mut scratch = SplitScratch::default();
    for (&(v, l), &m) in obs.entries.iter().zip(counts) {
        let v = v as usize;
        if v >= vocab {
            return Err(Error::PositionOutOfRange {
                position: v,
                length: vocab,
            });
        }
        split_with(m, v, l as usize, bank, &state.w, windows, &mut scratch, rng, |k, s, f, n| {
            let cell = &mut stats.positions[k * windows + s];
            *cell = cell.saturating_add(n);
            stats.totals[k] = stats.totals[k].saturating_add(n);
            stats
                .kernel_entries
                .push((((k * vocab + v) * width + f) as u32, n));
        })?;
    }
    Ok(stats)
}

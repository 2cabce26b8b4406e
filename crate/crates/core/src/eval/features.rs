//! Posterior-mean layer-one activations from a local-only Gibbs run.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gibbs::GibbsSampler;
use crate::model::{Globals, Observation};

/// One row per document, one column per kernel.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
    pub burn_in: usize,
    pub collect: usize,
}

impl FeatureMatrix {
    pub fn row(&self, j: usize) -> &[f64] {
        &self.data[j * self.cols..(j + 1) * self.cols]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|j| self.row(j).to_vec()).collect()
    }

    /// CSV with a header row of kernel indices.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record((0..self.cols).map(|k| k.to_string()))?;
        for j in 0..self.rows {
            out.write_record(self.row(j).iter().map(|x| x.to_string()))?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let cols = rdr.headers()?.len();
        let mut data = Vec::new();
        let mut rows = 0;
        for rec in rdr.records() {
            let rec = rec?;
            if rec.len() != cols {
                return Err(Error::Parse(format!("feature row {rows} has {} fields", rec.len())));
            }
            for f in rec.iter() {
                data.push(f.parse::<f64>().map_err(|e| Error::Parse(e.to_string()))?);
            }
            rows += 1;
        }
        Ok(Self {
            rows,
            cols,
            data,
            burn_in: 0,
            collect: 0,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtractConfig {
    pub burn_in: usize,
    pub collect: usize,
}

impl Default for ExtractConfig {
    fn default() -> Self {
        Self {
            burn_in: 500,
            collect: 200,
        }
    }
}

/// Runs local-only Gibbs sweeps with frozen globals and averages `theta^(1)`
/// over consecutive collection segments of the given lengths.
pub fn collect_segments(
    globals: &Globals,
    observations: Vec<Observation>,
    burn_in: usize,
    segments: &[usize],
    seed: u64,
) -> Result<Vec<FeatureMatrix>> {
    if segments.is_empty() || segments.contains(&0) {
        return Err(Error::invalid("collection count must be at least 1"));
    }
    let mut sampler = GibbsSampler::new(globals.clone(), observations, seed)?;
    sampler.freeze_globals(true);
    for _ in 0..burn_in {
        sampler.sweep()?;
    }
    let (rows, cols) = (sampler.locals.len(), globals.hyper.num_kernels());
    let mut out = Vec::with_capacity(segments.len());
    for &n in segments {
        let mut sum = vec![0.0; rows * cols];
        for _ in 0..n {
            sampler.sweep()?;
            for (j, st) in sampler.locals.iter().enumerate() {
                for (k, &th) in st.theta[0].iter().enumerate() {
                    sum[j * cols + k] += th;
                }
            }
        }
        out.push(FeatureMatrix {
            rows,
            cols,
            data: sum.into_iter().map(|x| x / n as f64).collect(),
            burn_in,
            collect: n,
        });
    }
    Ok(out)
}

/// Posterior-mean features with the globals held fixed.
pub fn extract_features(
    globals: &Globals,
    observations: Vec<Observation>,
    config: ExtractConfig,
    seed: u64,
) -> Result<FeatureMatrix> {
    if config.collect == 0 {
        return Err(Error::invalid("collection count must be at least 1"));
    }
    let mut m = collect_segments(globals, observations, config.burn_in, &[config.collect], seed)?;
    Ok(m.pop().expect("one segment"))
}

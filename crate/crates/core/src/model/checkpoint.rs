//! Binary checkpoint container.
//!
//! Layout: the 8-byte magic, then one or two sections. Each section is a
//! little-endian `u64` header length, a UTF-8 JSON header, and the arrays named
//! in the header as little-endian `f64` in row-major order. The first section
//! holds `D_1..D_K`, `Phi^(2)..Phi^(T)` and `r`; the optional second section
//! holds the inference network.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{Globals, Hyperparams, KernelBank, LayerStack, Matrix};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"CPGBNCKP";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArraySpec {
    pub name: String,
    pub shape: Vec<usize>,
}

impl ArraySpec {
    fn len(&self) -> usize {
        self.shape.iter().product()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub version: u32,
    pub vocab_size: usize,
    pub hyperparams: Hyperparams,
    pub seed: u64,
    /// Training settings recorded for reproducibility.
    #[serde(default)]
    pub settings: serde_json::Value,
    pub arrays: Vec<ArraySpec>,
}

/// An auxiliary section with its own header and named arrays.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderSection {
    pub header: serde_json::Value,
    pub arrays: Vec<(ArraySpec, Vec<f64>)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub globals: Globals,
    pub seed: u64,
    pub settings: serde_json::Value,
    pub encoder: Option<EncoderSection>,
}

#[derive(Serialize, Deserialize)]
struct SectionHeader {
    #[serde(flatten)]
    meta: serde_json::Value,
    arrays: Vec<ArraySpec>,
}

fn write_section<W: Write>(w: &mut W, header: &[u8], arrays: &[&[f64]]) -> Result<()> {
    w.write_all(&(header.len() as u64).to_le_bytes())?;
    w.write_all(header)?;
    for a in arrays {
        for x in a.iter() {
            w.write_all(&x.to_le_bytes())?;
        }
    }
    Ok(())
}

fn read_header<R: Read>(r: &mut R) -> Result<Option<Vec<u8>>> {
    let mut len = [0u8; 8];
    let mut filled = 0;
    while filled < 8 {
        let n = r.read(&mut len[filled..])?;
        if n == 0 {
            if filled == 0 {
                return Ok(None);
            }
            return Err(Error::Checkpoint("truncated section length".into()));
        }
        filled += n;
    }
    let len = u64::from_le_bytes(len) as usize;
    if len > 1 << 30 {
        return Err(Error::Checkpoint("implausible header length".into()));
    }
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)
        .map_err(|_| Error::Checkpoint("truncated header".into()))?;
    Ok(Some(buf))
}

fn read_array<R: Read>(r: &mut R, n: usize) -> Result<Vec<f64>> {
    let mut bytes = vec![0u8; n * 8];
    r.read_exact(&mut bytes)
        .map_err(|_| Error::Checkpoint("truncated array data".into()))?;
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect())
}

impl Checkpoint {
    pub fn new(globals: Globals, seed: u64, settings: serde_json::Value) -> Self {
        Self {
            globals,
            seed,
            settings,
            encoder: None,
        }
    }

    fn model_arrays(&self) -> Vec<(ArraySpec, &[f64])> {
        let bank = &self.globals.bank;
        let mut out = Vec::new();
        for k in 0..bank.num_kernels() {
            out.push((
                ArraySpec {
                    name: format!("D{}", k + 1),
                    shape: vec![bank.vocab_size(), bank.width()],
                },
                bank.kernel(k),
            ));
        }
        for (i, phi) in self.globals.layers.phis.iter().enumerate() {
            out.push((
                ArraySpec {
                    name: format!("Phi{}", i + 2),
                    shape: vec![phi.rows, phi.cols],
                },
                phi.data.as_slice(),
            ));
        }
        out.push((
            ArraySpec {
                name: "r".into(),
                shape: vec![self.globals.layers.r.len()],
            },
            self.globals.layers.r.as_slice(),
        ));
        out
    }

    pub fn header(&self) -> CheckpointHeader {
        CheckpointHeader {
            version: CHECKPOINT_VERSION,
            vocab_size: self.globals.bank.vocab_size(),
            hyperparams: self.globals.hyper.clone(),
            seed: self.seed,
            settings: self.settings.clone(),
            arrays: self.model_arrays().into_iter().map(|(s, _)| s).collect(),
        }
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(CHECKPOINT_MAGIC)?;
        let header = serde_json::to_vec(&self.header())?;
        let arrays: Vec<&[f64]> = self.model_arrays().into_iter().map(|(_, a)| a).collect();
        write_section(&mut w, &header, &arrays)?;
        if let Some(enc) = &self.encoder {
            let header = SectionHeader {
                meta: enc.header.clone(),
                arrays: enc.arrays.iter().map(|(s, _)| s.clone()).collect(),
            };
            for (spec, data) in &enc.arrays {
                if spec.len() != data.len() {
                    return Err(Error::Checkpoint(format!("array {} length", spec.name)));
                }
            }
            let bytes = serde_json::to_vec(&header)?;
            let arrays: Vec<&[f64]> = enc.arrays.iter().map(|(_, a)| a.as_slice()).collect();
            write_section(&mut w, &bytes, &arrays)?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)
            .map_err(|_| Error::Checkpoint("file too short".into()))?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let header = read_header(&mut r)?.ok_or_else(|| Error::Checkpoint("missing header".into()))?;
        let header: CheckpointHeader = serde_json::from_slice(&header)?;
        if header.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {}", header.version)));
        }
        let hyper = header.hyperparams.clone();
        hyper.validate()?;
        let (k1, vocab, width) = (hyper.num_kernels(), header.vocab_size, hyper.filter_width);
        let depth = hyper.depth();
        if header.arrays.len() != k1 + depth {
            return Err(Error::Checkpoint("unexpected array count".into()));
        }
        let mut kernels = Vec::with_capacity(k1 * vocab * width);
        let mut specs = header.arrays.iter();
        for _ in 0..k1 {
            let spec = specs.next().expect("counted");
            if spec.shape != [vocab, width] {
                return Err(Error::Checkpoint(format!("array {} shape", spec.name)));
            }
            kernels.extend(read_array(&mut r, spec.len())?);
        }
        let bank = KernelBank::from_data(k1, vocab, width, kernels)?;
        let mut phis = Vec::new();
        for t in 1..depth {
            let spec = specs.next().expect("counted");
            let (rows, cols) = (hyper.layer_widths[t - 1], hyper.layer_widths[t]);
            if spec.shape != [rows, cols] {
                return Err(Error::Checkpoint(format!("array {} shape", spec.name)));
            }
            phis.push(Matrix::from_data(rows, cols, read_array(&mut r, spec.len())?)?);
        }
        let spec = specs.next().expect("counted");
        if spec.shape != [hyper.top_width()] {
            return Err(Error::Checkpoint("r shape".into()));
        }
        let rvec = read_array(&mut r, spec.len())?;
        let globals = Globals {
            hyper,
            bank,
            layers: LayerStack { phis, r: rvec },
        };
        let encoder = match read_header(&mut r)? {
            None => None,
            Some(bytes) => {
                let sh: SectionHeader = serde_json::from_slice(&bytes)?;
                let mut arrays = Vec::with_capacity(sh.arrays.len());
                for spec in sh.arrays {
                    let data = read_array(&mut r, spec.len())?;
                    arrays.push((spec, data));
                }
                Some(EncoderSection {
                    header: sh.meta,
                    arrays,
                })
            }
        };
        Ok(Self {
            globals,
            seed: header.seed,
            settings: header.settings,
            encoder,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut buf = Vec::new();
        self.write_to(&mut buf)?;
        fs::write(path, buf)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let bytes = fs::read(path)?;
        Self::read_from(bytes.as_slice())
    }
}

impl EncoderSection {
    pub fn array(&self, name: &str) -> Option<&[f64]> {
        self.arrays
            .iter()
            .find(|(s, _)| s.name == name)
            .map(|(_, d)| d.as_slice())
    }
}

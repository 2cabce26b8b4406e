use std::fmt;
use std::path::Path;

use anyhow::{bail, Context, Result};
use cpgbn_core::corpus::{class_names, encode_document, read_raw_corpus, RawDocument};
use cpgbn_core::{Checkpoint, Corpus, Vocabulary};

/// A required input file that does not exist; reported with exit code 2.
#[derive(Debug)]
pub struct MissingInput(pub String);

impl fmt::Display for MissingInput {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "input file not found: {}", self.0)
    }
}

impl std::error::Error for MissingInput {}

pub fn require(path: &Path) -> Result<()> {
    if !path.is_file() {
        return Err(MissingInput(path.display().to_string()).into());
    }
    Ok(())
}

pub fn read_raw(path: &Path) -> Result<Vec<RawDocument>> {
    require(path)?;
    read_raw_corpus(path).with_context(|| format!("reading corpus {}", path.display()))
}

pub fn load_vocab(path: &Path) -> Result<Vocabulary> {
    require(path)?;
    Vocabulary::load(path).with_context(|| format!("reading vocabulary {}", path.display()))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    require(path)?;
    Checkpoint::load(path).with_context(|| format!("reading checkpoint {}", path.display()))
}

/// Encodes a corpus file. Labels map onto `names` when given so that train
/// and test files share class ids; otherwise the file's own labels are used.
/// Documents shorter than `min_len` are padded with the unknown term when
/// `pad` is set and rejected otherwise.
pub fn load_corpus(
    path: &Path,
    vocab: &Vocabulary,
    names: Option<&[String]>,
    min_len: usize,
    pad: bool,
) -> Result<Corpus> {
    let raw = read_raw(path)?;
    let names: Option<Vec<String>> = match names {
        Some(n) => Some(n.to_vec()),
        None => class_names(&raw),
    };
    let mut docs = Vec::with_capacity(raw.len());
    for (j, d) in raw.iter().enumerate() {
        let mut tokens = d.tokens.clone();
        if tokens.len() < min_len {
            if !pad {
                bail!(
                    "document {} of {} has {} tokens, fewer than the filter width {min_len}; pass --pad-short to pad it",
                    j + 1,
                    path.display(),
                    tokens.len()
                );
            }
            let unk = vocab.term(vocab.unk_id()).expect("unknown term exists").to_string();
            tokens.resize(min_len, unk);
        }
        let mut doc = encode_document(&tokens, vocab)?;
        if let (Some(label), Some(names)) = (&d.label, &names) {
            let id = names
                .iter()
                .position(|n| n == label)
                .with_context(|| format!("document {}: unknown class {label:?}", j + 1))?;
            doc = doc.with_label(id);
        }
        docs.push(doc);
    }
    Ok(Corpus::new(vocab.clone(), docs, names)?)
}

/// Class labels, failing when the corpus is unlabeled.
pub fn labels_of(corpus: &Corpus, path: &Path) -> Result<Vec<usize>> {
    corpus
        .labels()
        .with_context(|| format!("{} has no labels; use label<TAB>text lines", path.display()))
}

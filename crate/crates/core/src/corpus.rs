//! Tokenization, capped vocabularies and token-id documents.
//!
//! A document is stored as its ordered token ids, which is the lossless
//! sparse form of the `|V| x L` one-hot matrix the model factorizes.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::Observation;

/// Term used for every out-of-vocabulary word.
pub const UNK_TERM: &str = "⟨unk⟩";

/// Emoticons kept as single tokens.
pub const EMOTICONS: [&str; 5] = [":-)", ":)", ":-(", ":(", ";)"];

const TRAILING_PUNCT: [char; 6] = ['.', ',', '!', '?', ';', ':'];

/// Lowercases and splits a raw line into tokens.
///
/// Tokens are whitespace-delimited. Trailing sentence punctuation is split
/// off into its own tokens unless the whole token is a known emoticon.
pub fn tokenize(raw_line: &str) -> Vec<String> {
    let mut out = Vec::new();
    for word in raw_line.split_whitespace() {
        let word = word.to_lowercase();
        if EMOTICONS.contains(&word.as_str()) {
            out.push(word);
            continue;
        }
        let mut stem = word.as_str();
        let mut trailing = Vec::new();
        while let Some(c) = stem.chars().last() {
            if !TRAILING_PUNCT.contains(&c) || stem.len() == c.len_utf8() {
                break;
            }
            if EMOTICONS.contains(&stem) {
                break;
            }
            trailing.push(c);
            stem = &stem[..stem.len() - c.len_utf8()];
        }
        out.push(stem.to_string());
        out.extend(trailing.into_iter().rev().map(String::from));
    }
    out
}

/// A dense term/id mapping including the out-of-vocabulary term.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    terms: Vec<String>,
    index: HashMap<String, u32>,
    unk_id: u32,
}

impl Vocabulary {
    /// Vocabulary over an explicit ordered term list; ids follow list order and
    /// the unknown term is appended after the last term.
    pub fn from_terms<S: AsRef<str>>(terms: &[S]) -> Result<Self> {
        let mut list: Vec<String> = terms.iter().map(|t| t.as_ref().to_string()).collect();
        if list.iter().any(|t| t == UNK_TERM) {
            return Self::from_list(list);
        }
        list.push(UNK_TERM.to_string());
        Self::from_list(list)
    }

    fn from_list(terms: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(terms.len());
        for (i, t) in terms.iter().enumerate() {
            if index.insert(t.clone(), i as u32).is_some() {
                return Err(Error::Parse(format!("duplicate vocabulary term {t:?}")));
            }
        }
        let unk_id = *index
            .get(UNK_TERM)
            .ok_or_else(|| Error::Parse("vocabulary lacks the unknown term".into()))?;
        Ok(Self {
            terms,
            index,
            unk_id,
        })
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn unk_id(&self) -> u32 {
        self.unk_id
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn term(&self, id: u32) -> Option<&str> {
        self.terms.get(id as usize).map(String::as_str)
    }

    pub fn lookup(&self, term: &str) -> Option<u32> {
        self.index.get(term).copied()
    }

    /// Id of `term`, or the unknown id.
    pub fn id_or_unk(&self, term: &str) -> u32 {
        self.lookup(term).unwrap_or(self.unk_id)
    }

    /// Writes one term per line; line number is the id.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        for t in &self.terms {
            writeln!(w, "{t}")?;
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(file);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let terms: Vec<String> = text.lines().map(String::from).collect();
        Self::from_list(terms)
    }
}

/// Ranks terms by descending frequency (ties lexicographic) and keeps the
/// `cap` most frequent. The unknown term takes id 0 and kept terms follow.
pub fn build_vocabulary<S: AsRef<str>>(docs: &[Vec<S>], cap: usize) -> Result<Vocabulary> {
    if cap == 0 {
        return Err(Error::invalid("vocabulary cap must be at least 1"));
    }
    let mut freq: BTreeMap<&str, u64> = BTreeMap::new();
    for doc in docs {
        for t in doc {
            let t = t.as_ref();
            if t != UNK_TERM {
                *freq.entry(t).or_default() += 1;
            }
        }
    }
    if freq.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut ranked: Vec<(&str, u64)> = freq.into_iter().collect();
    // BTreeMap iteration is lexicographic, and the sort is stable.
    ranked.sort_by_key(|t| std::cmp::Reverse(t.1));
    let mut terms = Vec::with_capacity(cap.min(ranked.len()) + 1);
    terms.push(UNK_TERM.to_string());
    terms.extend(ranked.into_iter().take(cap).map(|(t, _)| t.to_string()));
    Vocabulary::from_list(terms)
}

/// Number of distinct terms before capping.
pub fn distinct_terms<S: AsRef<str>>(docs: &[Vec<S>]) -> usize {
    let mut seen: std::collections::HashSet<&str> = std::collections::HashSet::new();
    for doc in docs {
        for t in doc {
            seen.insert(t.as_ref());
        }
    }
    seen.len()
}

/// A document as ordered vocabulary ids.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Document {
    pub tokens: Vec<u32>,
    pub label: Option<usize>,
}

impl Document {
    pub fn new(tokens: Vec<u32>) -> Result<Self> {
        if tokens.is_empty() {
            return Err(Error::EmptyDocument);
        }
        Ok(Self {
            tokens,
            label: None,
        })
    }

    pub fn with_label(mut self, label: usize) -> Self {
        self.label = Some(label);
        self
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// The positive entries of the one-hot matrix.
    pub fn observation(&self) -> Observation {
        Observation::from_tokens(&self.tokens)
    }

    pub fn decode(&self, vocab: &Vocabulary) -> Vec<String> {
        self.tokens
            .iter()
            .map(|&id| vocab.term(id).unwrap_or(UNK_TERM).to_string())
            .collect()
    }
}

/// Maps tokens to ids, sending unknown words to the unknown id.
pub fn encode_document<S: AsRef<str>>(tokens: &[S], vocab: &Vocabulary) -> Result<Document> {
    Document::new(tokens.iter().map(|t| vocab.id_or_unk(t.as_ref())).collect())
}

/// Documents plus their vocabulary and optional class names.
#[derive(Clone, Debug)]
pub struct Corpus {
    pub vocabulary: Vocabulary,
    pub documents: Vec<Document>,
    pub class_names: Option<Vec<String>>,
}

impl Corpus {
    pub fn new(
        vocabulary: Vocabulary,
        documents: Vec<Document>,
        class_names: Option<Vec<String>>,
    ) -> Result<Self> {
        if documents.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let v = vocabulary.len() as u32;
        for (j, d) in documents.iter().enumerate() {
            if d.tokens.is_empty() {
                return Err(Error::EmptyDocument.in_document(j));
            }
            if let Some(&bad) = d.tokens.iter().find(|&&t| t >= v) {
                return Err(Error::Shape(format!(
                    "document {j} has token id {bad} outside vocabulary of size {v}"
                )));
            }
            if let (Some(label), Some(names)) = (d.label, &class_names) {
                if label >= names.len() {
                    return Err(Error::Shape(format!("document {j} label {label} out of range")));
                }
            }
        }
        Ok(Self {
            vocabulary,
            documents,
            class_names,
        })
    }

    pub fn num_classes(&self) -> Option<usize> {
        self.class_names.as_ref().map(Vec::len)
    }

    pub fn labels(&self) -> Option<Vec<usize>> {
        self.documents.iter().map(|d| d.label).collect()
    }

    pub fn observations(&self) -> Vec<Observation> {
        self.documents.iter().map(Document::observation).collect()
    }

    pub fn total_tokens(&self) -> usize {
        self.documents.iter().map(Document::len).sum()
    }
}

/// One line of a corpus file: tokens plus an optional raw label.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RawDocument {
    pub label: Option<String>,
    pub tokens: Vec<String>,
}

/// Reads a UTF-8 corpus: one document per line, optionally `label<TAB>text`.
/// Blank lines are skipped.
pub fn read_raw_corpus(path: impl AsRef<Path>) -> Result<Vec<RawDocument>> {
    let file = fs::File::open(path)?;
    parse_raw_corpus(BufReader::new(file))
}

pub fn parse_raw_corpus<R: BufRead>(reader: R) -> Result<Vec<RawDocument>> {
    let mut docs = Vec::new();
    let mut labeled: Option<bool> = None;
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let (label, text) = match line.split_once('\t') {
            Some((l, t)) => (Some(l.trim().to_string()), t),
            None => (None, line.as_str()),
        };
        match labeled {
            None => labeled = Some(label.is_some()),
            Some(was) if was != label.is_some() => {
                return Err(Error::Parse(format!(
                    "line {}: mixed labeled and unlabeled documents",
                    lineno + 1
                )))
            }
            _ => {}
        }
        docs.push(RawDocument {
            label,
            tokens: tokenize(text),
        });
    }
    if docs.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    Ok(docs)
}

/// Class names in id order. Integer labels sort numerically, others
/// lexicographically.
pub fn class_names(raw: &[RawDocument]) -> Option<Vec<String>> {
    let mut names: Vec<String> = raw.iter().filter_map(|d| d.label.clone()).collect();
    if names.is_empty() {
        return None;
    }
    names.sort();
    names.dedup();
    if names.iter().all(|n| n.parse::<i64>().is_ok()) {
        names.sort_by_key(|n| n.parse::<i64>().unwrap_or(0));
    }
    Some(names)
}

/// Encodes raw documents against a vocabulary, resolving class labels.
pub fn encode_corpus(raw: &[RawDocument], vocabulary: Vocabulary) -> Result<Corpus> {
    let names = class_names(raw);
    let mut documents = Vec::with_capacity(raw.len());
    for (j, d) in raw.iter().enumerate() {
        let mut doc = encode_document(&d.tokens, &vocabulary).map_err(|e| e.in_document(j))?;
        if let (Some(label), Some(names)) = (&d.label, &names) {
            let id = names.iter().position(|n| n == label).unwrap_or(0);
            doc = doc.with_label(id);
        }
        documents.push(doc);
    }
    Corpus::new(vocabulary, documents, names)
}

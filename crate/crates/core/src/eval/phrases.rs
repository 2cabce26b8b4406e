//! Phrase tables for convolutional kernels: the top words of each filter
//! column and the highest-scoring cross-column word sequences.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};

use serde::Serialize;

use crate::corpus::Vocabulary;
use crate::error::{Error, Result};
use crate::model::KernelBank;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Phrase {
    pub words: Vec<u32>,
    /// Product of the column-normalized word probabilities.
    pub score: f64,
}

impl Phrase {
    pub fn render(&self, vocab: Option<&Vocabulary>) -> String {
        self.words
            .iter()
            .map(|&w| match vocab.and_then(|v| v.term(w)) {
                Some(t) => t.to_string(),
                None => format!("#{w}"),
            })
            .collect::<Vec<_>>()
            .join(" ")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KernelPhrases {
    pub kernel: usize,
    /// `columns[f]` lists `(word, probability)` pairs, best first.
    pub columns: Vec<Vec<(u32, f64)>>,
    pub phrases: Vec<Phrase>,
}

/// Ranked entries of one column; probabilities descending, word id ascending on ties.
fn ranked_column(kernel: &[f64], vocab_size: usize, width: usize, f: usize) -> Vec<(u32, f64)> {
    let mass: f64 = (0..vocab_size).map(|v| kernel[v * width + f]).sum();
    let mut col: Vec<(u32, f64)> = (0..vocab_size)
        .map(|v| {
            let p = kernel[v * width + f];
            (v as u32, if mass > 0.0 { p / mass } else { 1.0 / vocab_size as f64 })
        })
        .collect();
    col.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    col
}

#[derive(PartialEq)]
struct Candidate {
    score: f64,
    idx: Vec<usize>,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        // Max-heap on score; among equal scores the lexicographically smaller tuple first.
        self.score.total_cmp(&other.score).then_with(|| other.idx.cmp(&self.idx))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// The `k` largest products `prod_f columns[f][i_f]` over index tuples, given
/// columns sorted in descending order. Returns `(indices, product)` best first.
pub fn kbest_products(columns: &[Vec<f64>], k: usize) -> Vec<(Vec<usize>, f64)> {
    if columns.is_empty() || columns.iter().any(|c| c.is_empty()) || k == 0 {
        return Vec::new();
    }
    let score = |idx: &[usize]| idx.iter().zip(columns).map(|(&i, c)| c[i]).product::<f64>();
    let start = vec![0; columns.len()];
    let mut heap = BinaryHeap::new();
    let mut seen = HashSet::new();
    heap.push(Candidate {
        score: score(&start),
        idx: start.clone(),
    });
    seen.insert(start);
    let total = columns.iter().fold(1usize, |n, c| n.saturating_mul(c.len()));
    let mut out = Vec::with_capacity(k.min(total));
    while let Some(Candidate { score: s, idx }) = heap.pop() {
        for f in 0..columns.len() {
            if idx[f] + 1 < columns[f].len() {
                let mut next = idx.clone();
                next[f] += 1;
                if seen.insert(next.clone()) {
                    heap.push(Candidate {
                        score: score(&next),
                        idx: next,
                    });
                }
            }
        }
        out.push((idx, s));
        if out.len() == k {
            break;
        }
    }
    out
}

/// Phrase table for one flattened `[v][f]` kernel. Each column keeps its
/// `top_n` words and at most `max_phrases` sequences are assembled from them.
pub fn kernel_phrases(
    kernel: &[f64],
    vocab_size: usize,
    width: usize,
    top_n: usize,
    max_phrases: usize,
) -> Result<(Vec<Vec<(u32, f64)>>, Vec<Phrase>)> {
    if top_n == 0 {
        return Err(Error::invalid("top_n must be at least 1"));
    }
    if kernel.len() != vocab_size * width || width == 0 {
        return Err(Error::Shape(format!(
            "kernel of length {} is not {vocab_size} x {width}",
            kernel.len()
        )));
    }
    let columns: Vec<Vec<(u32, f64)>> = (0..width)
        .map(|f| {
            let mut c = ranked_column(kernel, vocab_size, width, f);
            c.truncate(top_n);
            c
        })
        .collect();
    let probs: Vec<Vec<f64>> = columns.iter().map(|c| c.iter().map(|e| e.1).collect()).collect();
    let phrases = kbest_products(&probs, max_phrases)
        .into_iter()
        .map(|(idx, score)| Phrase {
            words: idx.iter().zip(&columns).map(|(&i, c)| c[i].0).collect(),
            score,
        })
        .collect();
    Ok((columns, phrases))
}

/// Per-kernel phrase tables with `top_n` candidates per column and the
/// `top_n` best assembled phrases.
pub fn top_phrases(bank: &KernelBank, top_n: usize) -> Result<Vec<KernelPhrases>> {
    (0..bank.num_kernels())
        .map(|k| {
            let (columns, phrases) =
                kernel_phrases(bank.kernel(k), bank.vocab_size(), bank.width(), top_n, top_n)?;
            Ok(KernelPhrases {
                kernel: k,
                columns,
                phrases,
            })
        })
        .collect()
}

/// Plain-text table: one block per kernel with its columns and phrases.
pub fn render_phrase_table(tables: &[KernelPhrases], vocab: Option<&Vocabulary>) -> String {
    let name = |w: u32| match vocab.and_then(|v| v.term(w)) {
        Some(t) => t.to_string(),
        None => format!("#{w}"),
    };
    let mut out = String::new();
    for t in tables {
        out.push_str(&format!("kernel {}\n", t.kernel));
        for (f, col) in t.columns.iter().enumerate() {
            let words: Vec<String> = col.iter().map(|&(w, p)| format!("{}:{p:.4}", name(w))).collect();
            out.push_str(&format!("  column {f}: {}\n", words.join(" ")));
        }
        for p in &t.phrases {
            out.push_str(&format!("  {:.6}  {}\n", p.score, p.render(vocab)));
        }
    }
    out
}

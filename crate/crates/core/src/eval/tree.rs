//! Topic hierarchies: follow the heaviest loadings downward from a node of an
//! upper layer and label every node with phrases of its projected kernel.

use serde::Serialize;

use crate::corpus::Vocabulary;
use crate::error::{Error, Result};
use crate::model::{KernelBank, LayerStack};

use super::phrases::{kernel_phrases, Phrase};

const LABEL_PHRASES: usize = 3;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TreeNode {
    /// 1-based layer; layer 1 nodes are kernels.
    pub layer: usize,
    pub index: usize,
    /// Loading on the parent, one for the root.
    pub weight: f64,
    pub phrases: Vec<Phrase>,
    pub children: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TopicTree {
    /// Node 0 is the root; children refer to positions in this list.
    pub nodes: Vec<TreeNode>,
}

/// Indices of the `m` largest entries, weight descending and index ascending on ties.
pub fn top_m(weights: &[f64], m: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..weights.len()).collect();
    idx.sort_by(|&a, &b| weights[b].total_cmp(&weights[a]).then(a.cmp(&b)));
    idx.truncate(m);
    idx
}

/// Weights over layer-one kernels for node `index` of layer `layer`.
pub fn project_to_kernels(layers: &LayerStack, layer: usize, index: usize) -> Vec<f64> {
    let mut x = vec![0.0; layers.phi(layer).cols];
    x[index] = 1.0;
    for t in (2..=layer).rev() {
        x = layers.phi(t).mul_vec(&x);
    }
    x
}

fn projected_kernel(bank: &KernelBank, weights: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; bank.kernel_len()];
    for (k, &a) in weights.iter().enumerate() {
        if a > 0.0 {
            for (o, d) in out.iter_mut().zip(bank.kernel(k)) {
                *o += a * d;
            }
        }
    }
    out
}

impl TopicTree {
    /// Tree rooted at `root = (layer, node)` with `fan_out[i]` children per
    /// node at depth `i` below the root. `fan_out` needs one entry per layer
    /// below the root.
    pub fn build(
        layers: &LayerStack,
        bank: &KernelBank,
        root: (usize, usize),
        fan_out: &[usize],
    ) -> Result<Self> {
        let depth = layers.depth();
        let (layer, node) = root;
        if depth < 2 {
            return Err(Error::invalid("a topic tree needs at least two layers"));
        }
        if layer < 2 || layer > depth {
            return Err(Error::InvalidNode { layer, node });
        }
        if node >= layers.phi(layer).cols {
            return Err(Error::InvalidNode { layer, node });
        }
        if fan_out.len() != layer - 1 || fan_out.contains(&0) {
            return Err(Error::invalid(format!(
                "fan-out needs {} positive entries for a layer-{layer} root",
                layer - 1
            )));
        }
        let labels = |t: usize, i: usize| -> Result<Vec<Phrase>> {
            let kernel = if t == 1 {
                bank.kernel(i).to_vec()
            } else {
                projected_kernel(bank, &project_to_kernels(layers, t, i))
            };
            Ok(kernel_phrases(&kernel, bank.vocab_size(), bank.width(), LABEL_PHRASES, LABEL_PHRASES)?.1)
        };
        let mut nodes = vec![TreeNode {
            layer,
            index: node,
            weight: 1.0,
            phrases: labels(layer, node)?,
            children: Vec::new(),
        }];
        let mut frontier = vec![0usize];
        for &m in fan_out {
            let mut next = Vec::new();
            for &p in &frontier {
                let (t, i) = (nodes[p].layer, nodes[p].index);
                let column = layers.phi(t).column(i);
                for c in top_m(&column, m) {
                    nodes.push(TreeNode {
                        layer: t - 1,
                        index: c,
                        weight: column[c],
                        phrases: labels(t - 1, c)?,
                        children: Vec::new(),
                    });
                    let id = nodes.len() - 1;
                    nodes[p].children.push(id);
                    next.push(id);
                }
            }
            frontier = next;
        }
        Ok(Self { nodes })
    }

    /// Node counts from layer one up to the root's layer.
    pub fn layer_counts(&self) -> Vec<usize> {
        let top = self.nodes[0].layer;
        (1..=top).map(|t| self.nodes.iter().filter(|n| n.layer == t).count()).collect()
    }

    /// Graphviz digraph with phrase labels and loading-weighted edges.
    pub fn to_dot(&self, vocab: Option<&Vocabulary>) -> String {
        let mut out = String::from("digraph topics {\n  rankdir=TB;\n  node [shape=box];\n");
        for (id, n) in self.nodes.iter().enumerate() {
            let mut label = format!("layer {} topic {}", n.layer, n.index);
            for p in &n.phrases {
                label.push_str("\\n");
                label.push_str(&escape(&p.render(vocab)));
            }
            out.push_str(&format!("  n{id} [label=\"{label}\"];\n"));
        }
        for (id, n) in self.nodes.iter().enumerate() {
            for &c in &n.children {
                let w = self.nodes[c].weight;
                out.push_str(&format!(
                    "  n{id} -> n{c} [label=\"{w:.3}\", penwidth={:.2}];\n",
                    0.5 + 4.0 * w
                ));
            }
        }
        out.push_str("}\n");
        out
    }
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Hyperparams, Matrix};
    use crate::samplers::RngStream;

    fn stack() -> (LayerStack, KernelBank) {
        let mut rng = RngStream::new(4, 0);
        let hyper = Hyperparams::new(2, vec![6, 4, 2]);
        let layers = LayerStack::from_prior(&hyper, &mut rng).unwrap();
        let bank = KernelBank::from_prior(6, 5, 2, 0.5, &mut rng).unwrap();
        (layers, bank)
    }

    #[test]
    fn fan_out_shapes() {
        let (layers, bank) = stack();
        let t = TopicTree::build(&layers, &bank, (3, 1), &[3, 2]).unwrap();
        assert_eq!(t.layer_counts(), vec![6, 3, 1]);
        let path = TopicTree::build(&layers, &bank, (3, 0), &[1, 1]).unwrap();
        assert_eq!(path.layer_counts(), vec![1, 1, 1]);
        assert!(path.nodes.iter().all(|n| n.children.len() <= 1));
        assert!(t.to_dot(None).starts_with("digraph"));
    }

    #[test]
    fn invalid_roots() {
        let (layers, bank) = stack();
        assert!(matches!(
            TopicTree::build(&layers, &bank, (3, 2), &[1, 1]),
            Err(Error::InvalidNode { layer: 3, node: 2 })
        ));
        assert!(TopicTree::build(&layers, &bank, (1, 0), &[]).is_err());
        assert!(TopicTree::build(&layers, &bank, (2, 0), &[1, 1]).is_err());
    }

    #[test]
    fn projection_composes_loadings() {
        let phis = vec![
            Matrix::from_data(2, 2, vec![0.25, 1.0, 0.75, 0.0]).unwrap(),
            Matrix::from_data(2, 1, vec![0.5, 0.5]).unwrap(),
        ];
        let layers = LayerStack { phis, r: vec![1.0] };
        let x = project_to_kernels(&layers, 3, 0);
        assert!((x[0] - 0.625).abs() < 1e-12 && (x[1] - 0.375).abs() < 1e-12);
    }
}

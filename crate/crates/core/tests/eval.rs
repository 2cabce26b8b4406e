use cpgbn_core::eval::{
    collect_segments, cross_validate, kbest_products, kernel_phrases, train_linear_svm,
    SvmConfig, TopicTree,
};
use cpgbn_core::generate::{planted_phrase_corpus, PlantedConfig};
use cpgbn_core::{Globals, Hyperparams, KernelBank, LayerStack, Observation, RngStream};
use proptest::prelude::*;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

#[test]
fn separable_toy_is_classified_perfectly() {
    let mut rng = RngStream::new(11, 0);
    let (mut x, mut y) = (Vec::new(), Vec::new());
    for i in 0..120 {
        let c = i % 4;
        let row: Vec<f64> = (0..4)
            .map(|d| if d == c { 3.0 } else { 0.0 } + 0.3 * rng.random::<f64>())
            .collect();
        x.push(row);
        y.push(c);
    }
    let acc = cross_validate(&x, &y, 10, &SvmConfig::default(), 2).unwrap();
    assert_eq!(acc, 1.0);
}

#[test]
fn shuffled_labels_give_chance_accuracy() {
    let mut rng = RngStream::new(12, 0);
    let classes = 4;
    let x: Vec<Vec<f64>> = (0..2000)
        .map(|_| (0..5).map(|_| StandardNormal.sample(&mut rng)).collect())
        .collect();
    let y: Vec<usize> = (0..2000).map(|_| rng.random_range(0..classes)).collect();
    let acc = cross_validate(&x, &y, 10, &SvmConfig::default(), 3).unwrap();
    assert!((acc - 1.0 / classes as f64).abs() < 0.05, "accuracy {acc}");
}

/// Planted kernels plus one kernel spread uniformly over the filler words.
fn planted_globals() -> (Globals, Vec<Observation>, Vec<usize>) {
    let mut rng = RngStream::new(13, 0);
    let cfg = PlantedConfig {
        num_docs: 80,
        ..PlantedConfig::default()
    };
    let pc = planted_phrase_corpus(&cfg, &mut rng).unwrap();
    let (v, f) = (cfg.vocab_size, cfg.width);
    let mut data: Vec<f64> = pc.kernels.concat();
    let mut filler = vec![0.0; v * f];
    for &w in &pc.fillers {
        for c in 0..f {
            filler[w as usize * f + c] = 1.0 / (pc.fillers.len() * f) as f64;
        }
    }
    data.extend(filler);
    let k = cfg.num_kernels + 1;
    let bank = KernelBank::from_data(k, v, f, data).unwrap();
    let hyper = Hyperparams::new(f, vec![k]);
    let layers = LayerStack::from_prior(&hyper, &mut rng).unwrap();
    let obs = pc.docs.iter().map(|d| Observation::from_tokens(d)).collect();
    (Globals { hyper, bank, layers }, obs, pc.labels)
}

#[test]
fn split_half_features_agree() {
    let (g, obs, labels) = planted_globals();
    let halves = collect_segments(&g, obs, 30, &[40, 40], 5).unwrap();
    let (a, b) = (halves[0].to_rows(), halves[1].to_rows());
    let planted = |row: &[f64]| (0..4).fold(0, |m, k| if row[k] > row[m] { k } else { m });
    let agree = a.iter().zip(&b).filter(|(p, q)| planted(p) == planted(q)).count();
    assert!(agree as f64 / a.len() as f64 >= 0.95, "dominant kernels agree on {agree}");
    let model = train_linear_svm(&a, &labels, &SvmConfig::default(), 1).unwrap();
    assert!(model.accuracy(&b, &labels) >= 0.95);
}

fn brute_force(columns: &[Vec<f64>]) -> Vec<f64> {
    let mut scores = vec![1.0];
    for col in columns {
        scores = scores.iter().flat_map(|s| col.iter().map(move |p| s * p)).collect();
    }
    scores.sort_by(|a, b| b.total_cmp(a));
    scores
}

proptest! {
    #[test]
    fn kbest_matches_enumeration(
        raw in prop::collection::vec(prop::collection::vec(0.0f64..1.0, 1..5), 1..4),
        k in 1usize..40,
    ) {
        let columns: Vec<Vec<f64>> = raw
            .into_iter()
            .map(|mut c| { c.sort_by(|a, b| b.total_cmp(a)); c })
            .collect();
        let want = brute_force(&columns);
        let got = kbest_products(&columns, k);
        prop_assert_eq!(got.len(), k.min(want.len()));
        let mut tuples = std::collections::HashSet::new();
        for ((idx, s), w) in got.iter().zip(&want) {
            prop_assert!((s - w).abs() < 1e-12);
            let direct: f64 = idx.iter().zip(&columns).map(|(&i, c)| c[i]).product();
            prop_assert!((direct - s).abs() < 1e-15);
            prop_assert!(tuples.insert(idx.clone()));
        }
    }

    #[test]
    fn phrase_ranking_matches_enumeration(seed in 0u64..500, top_n in 1usize..4) {
        let mut rng = RngStream::new(seed, 1);
        let (v, f) = (5, 3);
        let kernel: Vec<f64> = (0..v * f).map(|_| rng.random::<f64>()).collect();
        let (columns, phrases) = kernel_phrases(&kernel, v, f, top_n, usize::MAX).unwrap();
        // Every sequence of per-column top words, scored from the raw kernel.
        let col_mass: Vec<f64> = (0..f).map(|c| (0..v).map(|w| kernel[w * f + c]).sum()).collect();
        let mut want = Vec::new();
        for a in &columns[0] { for b in &columns[1] { for c in &columns[2] {
            let words = [a.0, b.0, c.0];
            let s: f64 = words.iter().enumerate()
                .map(|(c, &w)| kernel[w as usize * f + c] / col_mass[c]).product();
            want.push(s);
        }}}
        want.sort_by(|a, b| b.total_cmp(a));
        prop_assert_eq!(phrases.len(), want.len());
        for (p, w) in phrases.iter().zip(&want) {
            prop_assert!((p.score - w).abs() < 1e-12);
        }
    }

    #[test]
    fn tree_children_are_top_loadings(seed in 0u64..200, m1 in 1usize..5, m2 in 1usize..4) {
        let mut rng = RngStream::new(seed, 2);
        let hyper = Hyperparams::new(2, vec![5, 4, 3]);
        let layers = LayerStack::from_prior(&hyper, &mut rng).unwrap();
        let bank = KernelBank::from_prior(5, 6, 2, 0.3, &mut rng).unwrap();
        let root = rng.random_range(0..3);
        let tree = TopicTree::build(&layers, &bank, (3, root), &[m1, m2]).unwrap();
        for node in &tree.nodes {
            if node.layer == 1 {
                prop_assert!(node.children.is_empty());
                continue;
            }
            let col = layers.phi(node.layer).column(node.index);
            let mut order: Vec<usize> = (0..col.len()).collect();
            order.sort_by(|&a, &b| col[b].partial_cmp(&col[a]).unwrap().then(a.cmp(&b)));
            let m = if node.layer == 3 { m1 } else { m2 };
            let got: Vec<usize> = node.children.iter().map(|&c| tree.nodes[c].index).collect();
            prop_assert_eq!(got, order[..m.min(col.len())].to_vec());
        }
    }
}

use proptest::prelude::*;
use umhi_core::embed::{AliasTable, EmbeddingTable};
use umhi_core::eval::compute_metrics;
use umhi_core::fusion::{fusion_forward, FusionModel, Mlp, Standardizer};
use umhi_core::graph::{
    build_unfollow_matrix, kfold_split, mask_test_edges, EvalItem, EvalSet, Label, RelationRecord, TemporalGraph, UserId,
    Window,
};
use umhi_core::mf::FactorModel;
use umhi_core::netstats::{assign_roles, content_similarity, pagerank, rou, rou_curve, Idf, PageRankConfig};
use umhi_core::rng;
use umhi_core::text::{ContentEncoder, HanConfig, TokenizedPost};

fn edge_list(n: u32, max: usize) -> impl Strategy<Value = Vec<(u32, u32)>> {
    prop::collection::vec((0..n, 0..n), 0..max)
}

fn labeled_pairs(n: u32, max: usize) -> impl Strategy<Value = Vec<(u32, u32, bool)>> {
    prop::collection::vec((0..n, 0..n, any::<bool>()), 1..max).prop_map(|v| {
        let mut seen = std::collections::BTreeSet::new();
        v.into_iter().filter(|&(a, b, _)| a != b && seen.insert((a, b))).collect()
    })
}

fn to_eval(pairs: &[(u32, u32, bool)]) -> EvalSet {
    EvalSet::new(
        pairs.iter().map(|&(a, b, l)| EvalItem { follower: UserId(a), followee: UserId(b), label: Label::from_bool(l) }).collect(),
    )
}

fn records(pairs: &[(u32, u32, bool)]) -> Vec<RelationRecord> {
    pairs
        .iter()
        .map(|&(a, b, l)| RelationRecord::new(UserId(a), UserId(b), 0, l.then_some(5), Window::new(0, 10)))
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn masking_zeroes_exactly_the_eval_pairs(pairs in labeled_pairs(30, 120), pick in prop::collection::vec(any::<bool>(), 120)) {
        let r = build_unfollow_matrix(30, &records(&pairs));
        let test: Vec<_> = pairs.iter().zip(&pick).filter(|(_, &p)| p).map(|(x, _)| *x).collect();
        let masked = mask_test_edges(&r, &to_eval(&test));
        let test_set: std::collections::BTreeSet<_> = test.iter().map(|&(a, b, _)| (a as usize, b as usize)).collect();
        for i in 0..30 {
            for j in 0..30 {
                let expected = if test_set.contains(&(i, j)) { false } else { r.contains(i, j) };
                prop_assert_eq!(masked.contains(i, j), expected);
            }
        }
        let removed = test.iter().filter(|&&(a, b, _)| r.contains(a as usize, b as usize)).count();
        prop_assert_eq!(masked.len(), r.len() - removed);
    }

    #[test]
    fn unfollow_matrix_ignores_record_order(pairs in labeled_pairs(20, 60), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        let recs = records(&pairs);
        let mut shuffled = recs.clone();
        shuffled.shuffle(&mut rng::seeded(seed));
        let a: Vec<_> = build_unfollow_matrix(20, &recs).entries().collect();
        let b: Vec<_> = build_unfollow_matrix(20, &shuffled).entries().collect();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn folds_partition_the_eval_set(pairs in labeled_pairs(40, 200), k in 2usize..8, seed in any::<u64>()) {
        let eval = to_eval(&pairs);
        prop_assume!(eval.len() >= k);
        let split = kfold_split(&eval, k, seed).unwrap();
        let sizes = split.fold_sizes();
        prop_assert_eq!(sizes.iter().sum::<usize>(), eval.len());
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        let mut all: Vec<EvalItem> = (0..k).flat_map(|f| split.test_items(f)).collect();
        all.sort_by_key(|it| (it.follower, it.followee));
        let mut orig = eval.items.clone();
        orig.sort_by_key(|it| (it.follower, it.followee));
        prop_assert_eq!(all, orig);
        for f in 0..k {
            prop_assert_eq!(split.train_items(f).len() + split.test_items(f).len(), eval.len());
        }
    }

    #[test]
    fn pagerank_is_a_distribution(edges in edge_list(50, 300)) {
        let g = TemporalGraph::new(50, edges.into_iter().map(|(a, b)| (UserId(a), UserId(b))), vec![], Window::unbounded()).unwrap();
        let pr = pagerank(&g, &PageRankConfig::default()).unwrap();
        prop_assert!((pr.scores.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        prop_assert!(pr.scores.iter().all(|&s| s > 0.0));
    }

    #[test]
    fn roles_survive_monotone_rescaling(
        scores in prop::collection::vec((0.0f64..1.0, 0.0f64..1.0), 1..120),
        scale in 0.1f64..10.0,
        shift in -5.0f64..5.0,
    ) {
        let (pr, cons): (Vec<f64>, Vec<f64>) = scores.into_iter().unzip();
        let base = assign_roles(&pr, &cons);
        let pr2: Vec<f64> = pr.iter().map(|x| scale * x.exp() + shift).collect();
        let cons2: Vec<f64> = cons.iter().map(|x| x * x * scale + shift).collect();
        prop_assert_eq!(base, assign_roles(&pr2, &cons2));
    }

    #[test]
    fn similarity_is_symmetric_and_bounded(docs in prop::collection::vec(prop::collection::vec(0u32..12, 0..15), 2..8)) {
        let idf = Idf::fit(&docs, 12);
        for a in &docs {
            for b in &docs {
                let s = content_similarity(a, b, &idf);
                prop_assert!((0.0..=1.0 + 1e-12).contains(&s));
                prop_assert_eq!(s, content_similarity(b, a, &idf));
            }
            if !a.is_empty() {
                prop_assert!((content_similarity(a, a, &idf) - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rou_rows_recombine(pairs in labeled_pairs(60, 200), values in prop::collection::vec(0.0f64..1.0, 200), bins in 1usize..12) {
        let eval = to_eval(&pairs);
        let cond = &values[..eval.len()];
        let roles = assign_roles(&(0..60).map(|u| u as f64).collect::<Vec<_>>(), &vec![0.5; 60]);
        let table = rou_curve(&eval, cond, &roles, bins).unwrap();
        let un: usize = table.rows.iter().map(|r| r.n_unfollow).sum();
        prop_assert_eq!(table.total(), eval.len());
        prop_assert_eq!(un as f64 / eval.len() as f64, rou(eval.items.iter().map(|it| it.label)).unwrap());
        for row in &table.rows {
            prop_assert!((0.0..=1.0).contains(&row.rou));
        }
    }

    #[test]
    fn alias_table_probabilities_are_exact(weights in prop::collection::vec(0u32..20, 1..=16)) {
        prop_assume!(weights.iter().any(|&w| w > 0));
        let w: Vec<f64> = weights.iter().map(|&x| x as f64).collect();
        let total: f64 = w.iter().sum();
        let table = AliasTable::new(&w).unwrap();
        for (k, &wk) in w.iter().enumerate() {
            prop_assert!((table.probability(k) - wk / total).abs() < 1e-12);
        }
    }

    #[test]
    fn metrics_stay_in_unit_interval(scores in prop::collection::vec((0.0f64..1.0, any::<bool>()), 2..200), threshold in 0.0f64..1.0) {
        let mut scored: Vec<(f64, Label)> = scores.into_iter().map(|(s, l)| (s, Label::from_bool(l))).collect();
        scored[0].1 = Label::Unfollow;
        scored[1].1 = Label::Hold;
        let m = compute_metrics(&scored, threshold).unwrap();
        for v in [m.precision, m.recall, m.auc] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        prop_assert_eq!(m.n_pos + m.n_neg, scored.len());
    }

    #[test]
    fn attention_weights_form_a_distribution(
        posts in prop::collection::vec(prop::collection::vec(0u32..6, 1..12), 1..6),
        seed in any::<u64>(),
    ) {
        let mut r = rng::seeded(seed);
        let words = EmbeddingTable::uniform(5, 4, 1.0, &mut r);
        let cfg = HanConfig { word_hidden: 3, post_hidden: 3, word_att: 2, post_att: 2, ..Default::default() };
        let enc = ContentEncoder::new(words, cfg, &mut r);
        let posts: Vec<TokenizedPost> = posts.into_iter().map(|tokens| TokenizedPost { tokens, time: 0 }).collect();
        for p in &posts {
            let e = enc.encode_post(p).unwrap();
            prop_assert!(e.alpha.iter().all(|&a| a >= 0.0));
            prop_assert!((e.alpha.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        let u = enc.encode_user(&posts).unwrap();
        prop_assert_eq!(u.m.len(), 6);
        prop_assert!((u.alpha.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert_eq!(u.m, enc.encode_user(&posts).unwrap().m);
    }

    #[test]
    fn fusion_output_is_a_probability(x in prop::collection::vec(-50.0f64..50.0, 6), seed in any::<u64>()) {
        let mut r = rng::seeded(seed);
        let mlp = Mlp::new(6, &[5, 3], &mut r);
        let model = FusionModel { standardizer: Standardizer::identity(6), mlp };
        let y = fusion_forward(&model, &x).unwrap();
        prop_assert!(y > 0.0 && y < 1.0);
    }

    #[test]
    fn mf_step_descends(seed in any::<u64>(), target in prop_oneof![Just(0.0), Just(1.0)], i in 0usize..8, j in 0usize..8) {
        let mut r = rng::seeded(seed);
        let mut model = FactorModel::init(8, 4, 0.01, &mut r);
        let before = model.entry_loss(i, j, target);
        model.sgd_step(i, j, target, 1e-3);
        prop_assert!(model.entry_loss(i, j, target) <= before);
    }
}

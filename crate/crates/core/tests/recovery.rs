//! Planted-structure recovery and second-opinion solvers.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use umhi_core::audit::NoAudit;
use umhi_core::embed::{train_line, train_skipgram, train_walk_embedding, EmbeddingTable, LineConfig, Proximity, SkipGramConfig, WalkConfig};
use umhi_core::eval::logistic::objective;
use umhi_core::eval::{auc, fit_truncated_svd, train_logistic};
use umhi_core::fusion::Standardizer;
use umhi_core::graph::{EvalItem, Label, TemporalGraph, UnfollowMatrix, UserId, Window};
use umhi_core::math::cosine;
use umhi_core::mf::{factorize_history, mf_score, EntryMode, MfConfig};
use umhi_core::netstats::{Idf, SparseVector};
use umhi_core::rng;
use umhi_core::text::{pair_logits, pretrain_content_encoder, ContentEncoder, HanConfig, PretrainConfig, TokenizedPost};

/// Rows of `R` pick one of 8 binary patterns over columns, so rank(R) ≤ 8.
fn planted_rank8(n: usize, seed: u64) -> (UnfollowMatrix, Vec<Vec<f64>>) {
    let mut r = rng::seeded(seed);
    let group: Vec<usize> = (0..n).map(|_| r.gen_range(0..8)).collect();
    let pattern: Vec<[bool; 8]> = (0..n).map(|_| core::array::from_fn(|_| r.gen_bool(0.3))).collect();
    let dense: Vec<Vec<f64>> =
        (0..n).map(|i| (0..n).map(|j| if i != j && pattern[j][group[i]] { 1.0 } else { 0.0 }).collect()).collect();
    let pairs = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).filter(|&(i, j)| dense[i][j] == 1.0);
    (UnfollowMatrix::from_pairs(n, pairs.collect::<Vec<_>>()), dense)
}

#[test]
fn mf_recovers_planted_rank8_matrix() {
    let n = 200;
    let (r, dense) = planted_rank8(n, 3);
    let cfg = MfConfig { lambda: 0.0, seed: 1, ..Default::default() };
    let out = factorize_history(&r, &cfg, &mut NoAudit).unwrap();
    assert_eq!(out.mode, EntryMode::FullSum);
    let mut sq = 0.0;
    for (i, row) in dense.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            let e = mf_score(&out.model, i, j).unwrap() - v;
            sq += e * e;
        }
    }
    let rmse = (sq / (n * n) as f64).sqrt();
    assert!(rmse < 0.05, "RMSE {rmse}");
    for w in out.epoch_losses.windows(2) {
        assert!(w[1] <= w[0] + 1e-6, "loss rose from {} to {}", w[0], w[1]);
    }
}

#[test]
fn mf_regularization_shrinks_factors_on_empty_history() {
    let r = UnfollowMatrix::empty(30);
    let mut norms = Vec::new();
    for epochs in [0, 1, 2, 5] {
        let cfg = MfConfig { k: 8, lambda: 0.1, epochs, seed: 4, ..Default::default() };
        let m = factorize_history(&r, &cfg, &mut NoAudit).unwrap().model;
        norms.push(m.p.iter().chain(&m.q).map(|x| x * x).sum::<f64>());
    }
    for w in norms.windows(2) {
        assert!(w[1] < w[0]);
    }
}

fn sbm(n: usize, p_in: f64, p_out: f64, seed: u64) -> TemporalGraph {
    let mut r = rng::seeded(seed);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in 0..n {
            let p = if (i < n / 2) == (j < n / 2) { p_in } else { p_out };
            if i != j && r.gen_bool(p) {
                edges.push((UserId(i as u32), UserId(j as u32)));
            }
        }
    }
    TemporalGraph::new(n, edges, vec![], Window::unbounded()).unwrap()
}

/// Mean cosine within blocks minus mean cosine across blocks.
fn block_gap(t: &EmbeddingTable) -> f64 {
    let n = t.len();
    let (mut intra, mut ni, mut inter, mut nx) = (0.0, 0, 0.0, 0);
    for i in 0..n {
        for j in i + 1..n {
            let c = cosine(t.get(i), t.get(j));
            if (i < n / 2) == (j < n / 2) {
                intra += c;
                ni += 1;
            } else {
                inter += c;
                nx += 1;
            }
        }
    }
    intra / ni as f64 - inter / nx as f64
}

#[test]
fn line_separates_two_blocks() {
    let g = sbm(200, 0.1, 0.01, 7);
    for order in [Proximity::First, Proximity::Second] {
        let t = train_line(&g, &LineConfig { seed: 2, ..LineConfig::new(order) }).unwrap();
        assert!(t.is_finite());
        let gap = block_gap(&t);
        assert!(gap > 0.2, "{order:?}: gap {gap}");
    }
}

#[test]
fn uniform_walks_separate_two_blocks() {
    let g = sbm(200, 0.1, 0.01, 8);
    let t = train_walk_embedding(&g, &WalkConfig { seed: 3, ..Default::default() }).unwrap();
    assert!(block_gap(&t) > 0.0);
}

#[test]
fn skipgram_pulls_cooccurring_words_together() {
    let mut r = rng::seeded(12);
    let mut sentences: Vec<Vec<u32>> = vec![vec![0, 1, 2, 3]; 200];
    for _ in 0..400 {
        sentences.push((0..6).map(|_| r.gen_range(4..60)).collect());
    }
    let cfg = SkipGramConfig { dim: 20, ..Default::default() };
    let t = train_skipgram(&sentences, 60, &cfg, &mut rng::seeded(1)).unwrap();
    let mean = |pairs: &[(usize, usize)]| pairs.iter().map(|&(a, b)| cosine(t.get(a), t.get(b))).sum::<f64>() / pairs.len() as f64;
    let together: Vec<_> = (0..4).flat_map(|a| (a + 1..4).map(move |b| (a, b))).collect();
    let random: Vec<_> = (0..40).map(|_| (r.gen_range(0..4), r.gen_range(4..60))).collect();
    assert!(mean(&together) > mean(&random) + 0.2);
}

fn random_corpus(docs: usize, vocab: usize, seed: u64) -> Vec<SparseVector> {
    let mut r = rng::seeded(seed);
    let texts: Vec<Vec<u32>> = (0..docs)
        .map(|_| {
            // Zipf-like term draws give a decaying spectrum.
            (0..r.gen_range(5..40)).map(|_| ((vocab as f64).powf(r.gen::<f64>()) as u32 - 1).min(vocab as u32 - 1)).collect()
        })
        .collect();
    let idf = Idf::fit(&texts, vocab);
    texts.iter().map(|d| idf.vectorize(d)).collect()
}

fn dense(rows: &[SparseVector], vocab: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(rows.len(), vocab);
    for (i, r) in rows.iter().enumerate() {
        for &(t, w) in &r.entries {
            m[(i, t as usize)] = w;
        }
    }
    m
}

/// Squared Frobenius error of projecting `a` onto the SVD's components.
fn projection_error(a: &DMatrix<f64>, components: &[f64], rank: usize) -> f64 {
    let v = DMatrix::from_row_slice(rank, a.ncols(), components);
    let approx = a * v.transpose() * &v;
    (a - approx).norm_squared()
}

#[test]
fn svd_matches_dense_solver() {
    for (docs, vocab, tol) in [(100, 300, 1e-8), (300, 400, 1e-2)] {
        let rows = random_corpus(docs, vocab, docs as u64);
        let svd = fit_truncated_svd(&rows, vocab, 50, 5).unwrap();
        let a = dense(&rows, vocab);
        let mut oracle: Vec<f64> = a.clone().svd(false, false).singular_values.iter().copied().collect();
        oracle.sort_by(|x, y| y.total_cmp(x));
        for k in 0..10 {
            let rel = (svd.singular_values[k] - oracle[k]).abs() / oracle[k];
            assert!(rel < tol, "{docs} docs, σ{k}: {} vs {}", svd.singular_values[k], oracle[k]);
        }
        let optimal: f64 = oracle[50..].iter().map(|s| s * s).sum();
        let err = projection_error(&a, &svd.components, 50);
        assert!(err <= optimal * (1.0 + tol) + 1e-9, "{docs} docs: residual {err} vs optimal {optimal}");
    }
}

/// Damped Newton on the same standardized objective.
fn newton(rows: &[Vec<f64>], targets: &[f64], l2: f64) -> DVector<f64> {
    let d = rows[0].len();
    let mut theta = DVector::zeros(d + 1);
    let mut grad = vec![0.0; d + 1];
    for _ in 0..50 {
        objective(rows, targets, l2, &theta.as_slice()[..d], theta[d], &mut grad);
        let mut h = DMatrix::zeros(d + 1, d + 1);
        for x in rows {
            let xa = DVector::from_iterator(d + 1, x.iter().copied().chain([1.0]));
            let z: f64 = xa.dot(&theta);
            let s = 1.0 / (1.0 + (-z).exp());
            h += s * (1.0 - s) * &xa * xa.transpose();
        }
        for k in 0..d {
            h[(k, k)] += l2;
        }
        let step = h.lu().solve(&DVector::from_vec(grad.clone())).unwrap();
        theta -= step;
    }
    theta
}

#[test]
fn logistic_regression_matches_newton() {
    let mut r = rng::seeded(21);
    let truth: Vec<f64> = (0..5).map(|_| r.gen_range(-2.0..2.0)).collect();
    let features: Vec<Vec<f64>> =
        (0..100).map(|_| (0..5).map(|k| r.gen_range(-1.0..1.0) * (k + 1) as f64 + k as f64).collect()).collect();
    let labels: Vec<Label> = features
        .iter()
        .map(|x| {
            let z: f64 = x.iter().zip(&truth).map(|(a, b)| a * b).sum::<f64>() - 3.0;
            Label::from_bool(r.gen::<f64>() < 1.0 / (1.0 + (-z).exp()))
        })
        .collect();
    let model = train_logistic(&features, &labels, 1.0).unwrap();
    let st = Standardizer::fit(&features);
    let rows: Vec<Vec<f64>> = features
        .iter()
        .map(|f| {
            let mut z = Vec::new();
            st.apply(f, &mut z);
            z
        })
        .collect();
    let targets: Vec<f64> = labels.iter().map(|l| l.target()).collect();
    let oracle = newton(&rows, &targets, 1.0);
    for k in 0..5 {
        assert!((model.weights[k] - oracle[k]).abs() < 1e-4, "w{k}: {} vs {}", model.weights[k], oracle[k]);
    }
    assert!((model.bias - oracle[5]).abs() < 1e-4);
}

#[test]
fn pretraining_learns_a_planted_topic_word() {
    let n_users = 80;
    let mut r = rng::seeded(31);
    let words = EmbeddingTable::uniform(20, 8, 1.0, &mut r);
    let has_topic: Vec<bool> = (0..n_users).map(|u| u % 2 == 0).collect();
    let posts: Vec<Vec<TokenizedPost>> = has_topic
        .iter()
        .map(|&topic| {
            (0..3)
                .map(|t| {
                    let mut tokens: Vec<u32> = (0..r.gen_range(3..8)).map(|_| r.gen_range(1..20)).collect();
                    if topic {
                        let at = r.gen_range(0..=tokens.len());
                        tokens.insert(at, 0);
                    }
                    TokenizedPost { tokens, time: t }
                })
                .collect()
        })
        .collect();
    let mut pairs = Vec::new();
    for i in 0..n_users {
        for j in 0..n_users {
            if i != j {
                let both = has_topic[i] && has_topic[j];
                pairs.push(EvalItem { follower: UserId(i as u32), followee: UserId(j as u32), label: Label::from_bool(both) });
            }
        }
    }
    let han = HanConfig { word_hidden: 8, post_hidden: 8, word_att: 8, post_att: 8, ..Default::default() };
    let enc = ContentEncoder::new(words, han, &mut r);
    let cfg = PretrainConfig { seed: 4, ..Default::default() };
    let out = pretrain_content_encoder(enc, &posts, &pairs, &cfg, &mut NoAudit).unwrap();
    let first = out.first_batch_loss.unwrap();
    assert!((first - std::f64::consts::LN_2).abs() < 0.1, "first batch loss {first}");
    let logits = pair_logits(&out.encoder, &posts, &pairs).unwrap();
    let scored: Vec<(f64, Label)> = logits.into_iter().zip(&pairs).map(|(z, p)| (z, p.label)).collect();
    let a = auc(&scored).unwrap();
    assert!(a > 0.95, "training AUC {a}");
    let again = pair_logits(&out.encoder, &posts, &pairs[..10]).unwrap();
    assert_eq!(again, pair_logits(&out.encoder, &posts, &pairs[..10]).unwrap());
}

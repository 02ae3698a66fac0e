//! The generator's planted mechanisms show up in the observable statistics.

use umhi_core::eval::pipeline::{analyze_interactions, user_documents};
use umhi_core::eval::{generate_synthetic_benchmark, SynthConfig};
use umhi_core::netstats::{condition_values, rou_curve, Condition, PageRankConfig, Role, RoleAssignment, RouRow};
use umhi_core::text::prepare_corpus;

fn spearman(y: &[f64]) -> f64 {
    let n = y.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| y[a].total_cmp(&y[b]));
    let mut rank = vec![0.0; n];
    let mut k = 0;
    while k < n {
        let mut end = k + 1;
        while end < n && y[order[end]] == y[order[k]] {
            end += 1;
        }
        for &o in &order[k..end] {
            rank[o] = (k + end - 1) as f64 / 2.0;
        }
        k = end;
    }
    let mean = (n - 1) as f64 / 2.0;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, ry) in rank.iter().enumerate() {
        let (dx, dy) = (x as f64 - mean, ry - mean);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    sxy / (sxx * syy).sqrt()
}

/// Each bin's rou is at most the previous one plus two standard errors.
fn non_increasing_within_noise(rows: &[&RouRow]) -> bool {
    rows.windows(2).all(|w| {
        let var = |r: &RouRow| r.rou * (1.0 - r.rou) / r.count() as f64;
        w[1].rou <= w[0].rou + 2.0 * (var(w[0]) + var(w[1])).sqrt()
    })
}

#[test]
fn planted_mechanisms_are_visible() {
    let cfg = SynthConfig { seed: 7, ..Default::default() };
    let data = generate_synthetic_benchmark(&cfg).unwrap();
    let realized = data.records.iter().filter(|r| r.label.is_unfollow()).count() as f64 / data.records.len() as f64;
    assert!((realized - data.truth.expected_label_rate).abs() < 0.05, "{realized} vs {}", data.truth.expected_label_rate);
    assert!(data.eval.len() > 15_000 && data.eval.len() < 25_000, "{} eval pairs", data.eval.len());

    let analysis = analyze_interactions(&data.graph, &data.eval, &PageRankConfig::default(), 10).unwrap();
    assert_eq!(analysis.roles, data.truth.roles);

    let everyone = RoleAssignment { roles: vec![Role::OrdUsr; data.graph.num_users()] };
    let docs = user_documents(&prepare_corpus(&data.graph));
    let sim = condition_values(&data.eval, Condition::Similarity, &data.graph, &docs);
    let overall = rou_curve(&data.eval, &sim, &everyone, 10).unwrap();
    let means: Vec<f64> = overall.rows.iter().map(|r| r.rou).collect();
    let rho = spearman(&means);
    assert!(rho < 0.0, "Spearman {rho} over {means:?}");

    let leader_expo: Vec<&RouRow> = analysis.exposure.rows_for(Role::OpnLdr).collect();
    assert!(leader_expo.len() >= 2);
    assert!(non_increasing_within_noise(&leader_expo), "{leader_expo:?}");

    let range = |role| {
        let v: Vec<f64> = analysis.similarity.rows_for(role).map(|r| r.rou).collect();
        v.iter().cloned().fold(f64::MIN, f64::max) - v.iter().cloned().fold(f64::MAX, f64::min)
    };
    assert!(range(Role::OpnLdr) > range(Role::StrHole), "leader {} hole {}", range(Role::OpnLdr), range(Role::StrHole));
}

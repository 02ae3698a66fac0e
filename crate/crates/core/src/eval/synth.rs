//! Seeded synthetic benchmark with planted unfollow mechanisms.
//!
//! Users belong to communities and wire their follow edges by preferential
//! attachment, mostly inside their own community; a few brokers link across
//! communities. Active users post topic-word sequences drawn from a sparse
//! topic mixture; silent users never post. Each edge `(i, j)` dissolves with
//! probability `σ(logit)` where the logit combines content similarity and
//! followee exposure (both standardized over edges), their interactions with
//! the followee's role, a cross-community penalty, per-community churn offsets
//! and a low-rank history term `a_i · b_j`.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Dirichlet, Distribution, LogNormal, StandardNormal};

use crate::embed::AliasTable;
use crate::error::{Error, Result};
use crate::graph::{
    build_balanced_eval_set, build_unfollow_matrix, BalanceConfig, EvalSet, Post, RelationRecord, TemporalGraph,
    UnfollowMatrix, UserId, Window,
};
use crate::math::{self, sigmoid};
use crate::netstats::{assign_roles, burt_constraint, pagerank, sparse_cosine, Idf, PageRankConfig, Role, RoleAssignment};
use crate::rng;
use crate::text::prepare_corpus;

const DAY: i64 = 86_400;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SynthConfig {
    pub n_users: usize,
    pub n_communities: usize,
    pub vocab_size: usize,
    pub n_topics: usize,
    /// Dirichlet concentration of each user's topic mixture.
    pub topic_concentration: f64,
    pub mean_out_degree: f64,
    /// Share of ordinary edges that leave the follower's community.
    pub cross_fraction: f64,
    pub broker_fraction: f64,
    /// Share of a broker's edges that leave its community.
    pub broker_cross_fraction: f64,
    /// Users without any posts.
    pub silent_fraction: f64,
    pub mean_posts: f64,
    pub min_post_len: usize,
    pub max_post_len: usize,
    /// Chance that a word comes from the shared background distribution.
    pub background_rate: f64,
    pub window_days: i64,
    pub beta0: f64,
    pub beta_sim: f64,
    pub beta_expo: f64,
    /// Main effect of a leader followee.
    pub beta_leader: f64,
    pub beta_leader_sim: f64,
    pub beta_leader_expo: f64,
    pub beta_hole: f64,
    pub beta_cross: f64,
    /// Standard deviation of the per-community churn offsets, applied once
    /// for the follower's community and once for the followee's.
    pub community_effect: f64,
    pub history_rank: usize,
    pub beta_history: f64,
    pub hold_per_unfollow: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_users: 2000,
            n_communities: 8,
            vocab_size: 3000,
            n_topics: 20,
            topic_concentration: 0.15,
            mean_out_degree: 40.0,
            cross_fraction: 0.08,
            broker_fraction: 0.05,
            broker_cross_fraction: 0.6,
            silent_fraction: 0.3,
            mean_posts: 8.0,
            min_post_len: 6,
            max_post_len: 16,
            background_rate: 0.3,
            window_days: 30,
            beta0: -0.6,
            beta_sim: -0.8,
            beta_expo: -0.3,
            beta_leader: 0.2,
            beta_leader_sim: -0.6,
            beta_leader_expo: -0.5,
            beta_hole: 0.3,
            beta_cross: 1.0,
            community_effect: 0.4,
            history_rank: 4,
            beta_history: 1.2,
            hold_per_unfollow: crate::graph::DEFAULT_HOLD_PER_UNFOLLOW,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::InvalidArgument(String::from(m)));
        if self.n_users < 20 {
            return fail("n_users must be at least 20");
        }
        if self.n_communities == 0 || self.n_communities > self.n_users {
            return fail("n_communities must be between 1 and n_users");
        }
        if self.n_topics == 0 || self.vocab_size < self.n_topics {
            return fail("need at least one topic and one word per topic");
        }
        if !(self.topic_concentration > 0.0) {
            return fail("topic_concentration must be positive");
        }
        if !(self.mean_out_degree >= 1.0) || self.mean_out_degree >= self.n_users as f64 / 2.0 {
            return fail("mean_out_degree must be in [1, n_users / 2)");
        }
        for (name, p) in [
            ("cross_fraction", self.cross_fraction),
            ("broker_fraction", self.broker_fraction),
            ("broker_cross_fraction", self.broker_cross_fraction),
            ("silent_fraction", self.silent_fraction),
            ("background_rate", self.background_rate),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidArgument(format!("{name} must be a probability")));
            }
        }
        if self.silent_fraction >= 1.0 {
            return fail("silent_fraction must leave some active users");
        }
        if !(self.mean_posts >= 1.0) || self.min_post_len == 0 || self.max_post_len < self.min_post_len {
            return fail("invalid post size settings");
        }
        if self.window_days <= 0 {
            return fail("window_days must be positive");
        }
        if self.beta_sim >= 0.0 {
            return fail("beta_sim must be negative");
        }
        if self.beta_leader_sim > 0.0 {
            return fail("beta_leader_sim must not weaken the similarity effect");
        }
        if self.beta_expo + self.beta_leader_expo >= 0.0 {
            return fail("leader exposure effect must be negative");
        }
        if !(self.community_effect >= 0.0) {
            return fail("community_effect must be non-negative");
        }
        if !(self.hold_per_unfollow >= 0.0) {
            return fail("hold_per_unfollow must be non-negative");
        }
        Ok(())
    }
}

/// Planted quantities behind a generated dataset.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GroundTruth {
    pub community: Vec<u32>,
    pub broker: Vec<bool>,
    pub silent: Vec<bool>,
    pub topic_mixture: Vec<Vec<f64>>,
    /// Churn offset added when a follower belongs to the community.
    pub follower_offset: Vec<f64>,
    /// Churn offset added when a followee belongs to the community.
    pub followee_offset: Vec<f64>,
    /// Follower history factors `a_i`.
    pub history_follower: Vec<Vec<f64>>,
    /// Followee history factors `b_j`.
    pub history_followee: Vec<Vec<f64>>,
    pub roles: RoleAssignment,
    /// Unfollow probability per relation record, same order.
    pub edge_probability: Vec<f64>,
    /// Mean of `edge_probability`.
    pub expected_label_rate: f64,
}

#[derive(Debug, Clone)]
pub struct SynthData {
    pub graph: TemporalGraph,
    pub records: Vec<RelationRecord>,
    pub unfollow: UnfollowMatrix,
    pub eval: EvalSet,
    pub insufficient_holds: bool,
    pub truth: GroundTruth,
}

fn zipf_weights(n: usize) -> Vec<f64> {
    (1..=n).map(|r| 1.0 / r as f64).collect()
}

fn standardize(values: &mut [f64]) {
    let m = math::mean(values);
    let s = math::std_dev(values);
    let s = if s > 1e-12 { s } else { 1.0 };
    values.iter_mut().for_each(|v| *v = (*v - m) / s);
}

fn build_graph<R: Rng>(cfg: &SynthConfig, community: &[u32], broker: &[bool], r: &mut R) -> Result<Vec<(u32, u32)>> {
    let n = cfg.n_users;
    let k = cfg.n_communities;
    // Urn per community: every member once, plus one copy per received edge.
    let mut urns: Vec<Vec<u32>> = vec![Vec::new(); k];
    for u in 0..n {
        urns[community[u] as usize].push(u as u32);
    }
    let sigma = 0.8f64;
    let degree = LogNormal::new(math::ln(cfg.mean_out_degree) - 0.5 * sigma * sigma, sigma)
        .map_err(|_| Error::invalid("bad degree distribution"))?;
    let max_degree = n / 4;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(r);
    let mut out: Vec<Vec<u32>> = vec![Vec::new(); n];
    for &u in &order {
        let d = (math::round(degree.sample(r)) as usize).clamp(1, max_degree);
        let cross = if broker[u] { cfg.broker_cross_fraction } else { cfg.cross_fraction };
        let own = community[u] as usize;
        for _ in 0..d {
            let target_comm = if k > 1 && r.gen_bool(cross) {
                let c = r.gen_range(0..k - 1);
                if c >= own {
                    c + 1
                } else {
                    c
                }
            } else {
                own
            };
            let urn = &urns[target_comm];
            for _attempt in 0..10 {
                let v = urn[r.gen_range(0..urn.len())];
                if v as usize != u && !out[u].contains(&v) {
                    out[u].push(v);
                    urns[target_comm].push(v);
                    break;
                }
            }
        }
    }
    let mut edges: Vec<(u32, u32)> =
        out.iter().enumerate().flat_map(|(u, l)| l.iter().map(move |&v| (u as u32, v))).collect();
    edges.sort_unstable();
    Ok(edges)
}

pub fn generate_synthetic_benchmark(cfg: &SynthConfig) -> Result<SynthData> {
    cfg.validate()?;
    let n = cfg.n_users;
    let window = Window::new(0, cfg.window_days * DAY - 1);

    let mut r = rng::stream(cfg.seed, "synth-users");
    let mut community: Vec<u32> = (0..n).map(|u| (u % cfg.n_communities) as u32).collect();
    community.shuffle(&mut r);
    let broker: Vec<bool> = (0..n).map(|_| r.gen_bool(cfg.broker_fraction)).collect();
    let silent: Vec<bool> = (0..n).map(|_| r.gen_bool(cfg.silent_fraction)).collect();
    let rank = cfg.history_rank;
    let factor = |r: &mut rng::StageRng| -> Vec<f64> {
        (0..rank).map(|_| r.sample::<f64, _>(StandardNormal) / math::sqrt(rank.max(1) as f64)).collect()
    };
    let history_follower: Vec<Vec<f64>> = (0..n).map(|_| factor(&mut r)).collect();
    let history_followee: Vec<Vec<f64>> = (0..n).map(|_| factor(&mut r)).collect();

    let mut r = rng::stream(cfg.seed, "synth-community");
    let mut offsets = || -> Vec<f64> {
        (0..cfg.n_communities).map(|_| cfg.community_effect * r.sample::<f64, _>(StandardNormal)).collect()
    };
    let follower_offset = offsets();
    let followee_offset = offsets();

    let mut r = rng::stream(cfg.seed, "synth-graph");
    let edges = build_graph(cfg, &community, &broker, &mut r)?;

    // Posts.
    let mut r = rng::stream(cfg.seed, "synth-posts");
    let block = cfg.vocab_size / cfg.n_topics;
    let topic_words = AliasTable::new(&zipf_weights(block))?;
    let background = AliasTable::new(&zipf_weights(cfg.vocab_size))?;
    let mixture_dist = if cfg.n_topics > 1 {
        Some(Dirichlet::new_with_size(cfg.topic_concentration, cfg.n_topics).map_err(|_| Error::invalid("bad topic prior"))?)
    } else {
        None
    };
    let post_sigma = 0.9f64;
    let post_count = LogNormal::new(math::ln(cfg.mean_posts) - 0.5 * post_sigma * post_sigma, post_sigma)
        .map_err(|_| Error::invalid("bad post-count distribution"))?;
    let mut topic_mixture = Vec::with_capacity(n);
    let mut posts: Vec<Vec<Post>> = vec![Vec::new(); n];
    for u in 0..n {
        let mix: Vec<f64> = match &mixture_dist {
            Some(d) => d.sample(&mut r),
            None => vec![1.0],
        };
        if !silent[u] {
            let topics = AliasTable::new(&mix)?;
            let count = (math::round(post_count.sample(&mut r)) as usize).clamp(1, 60);
            for _ in 0..count {
                let t = topics.sample(&mut r);
                let len = r.gen_range(cfg.min_post_len..=cfg.max_post_len);
                let mut text = String::new();
                for w in 0..len {
                    let word = if r.gen_bool(cfg.background_rate) {
                        background.sample(&mut r)
                    } else {
                        t * block + topic_words.sample(&mut r)
                    };
                    if w > 0 {
                        text.push(' ');
                    }
                    text.push_str(&format!("w{word}"));
                }
                let time = r.gen_range(window.start..=window.end);
                let upvotes = math::exp(r.sample::<f64, _>(StandardNormal) + 1.0) as u64;
                posts[u].push(Post { user: UserId(u as u32), time, text, upvotes });
            }
        }
        topic_mixture.push(mix);
    }

    let graph = TemporalGraph::new(n, edges.iter().map(|&(a, b)| (UserId(a), UserId(b))), posts, window)?;

    // Observable covariates, computed exactly as the analysis does.
    let corpus = prepare_corpus(&graph);
    let documents = corpus.documents();
    let idf = Idf::fit(&documents, corpus.vocab.len());
    let docs: Vec<_> = documents.iter().map(|d| idf.vectorize(d)).collect();
    let pr = pagerank(&graph, &PageRankConfig::default())?;
    let roles = assign_roles(&pr.scores, &burt_constraint(&graph));

    let mut sim: Vec<f64> = edges.iter().map(|&(i, j)| sparse_cosine(&docs[i as usize], &docs[j as usize])).collect();
    let mut expo: Vec<f64> = edges
        .iter()
        .map(|&(_, j)| math::ln_1p(crate::netstats::exposure(graph.posts(j as usize), window) as f64))
        .collect();
    standardize(&mut sim);
    standardize(&mut expo);

    let mut r = rng::stream(cfg.seed, "synth-labels");
    let mut records = Vec::with_capacity(edges.len());
    let mut edge_probability = Vec::with_capacity(edges.len());
    for (e, &(i, j)) in edges.iter().enumerate() {
        let (iu, ju) = (i as usize, j as usize);
        let mut z = cfg.beta0 + cfg.beta_sim * sim[e] + cfg.beta_expo * expo[e];
        match roles.role(ju) {
            Role::OpnLdr => z += cfg.beta_leader + cfg.beta_leader_sim * sim[e] + cfg.beta_leader_expo * expo[e],
            Role::StrHole => z += cfg.beta_hole,
            Role::OrdUsr => {}
        }
        if community[iu] != community[ju] {
            z += cfg.beta_cross;
        }
        z += follower_offset[community[iu] as usize] + followee_offset[community[ju] as usize];
        z += cfg.beta_history * math::dot(&history_follower[iu], &history_followee[ju]);
        let p = sigmoid(z);
        let first_seen = window.start - r.gen_range(1..=365) * DAY;
        let dissolved = if r.gen_bool(p) { Some(r.gen_range(window.start..=window.end)) } else { None };
        records.push(RelationRecord::new(UserId(i), UserId(j), first_seen, dissolved, window));
        edge_probability.push(p);
    }
    let expected_label_rate = math::mean(&edge_probability);
    let unfollow = build_unfollow_matrix(n, &records);
    let balance = BalanceConfig { hold_per_unfollow: cfg.hold_per_unfollow, seed: rng::derive_seed(cfg.seed, "synth-balance") };
    let balanced = build_balanced_eval_set(&records, &graph, &balance)?;

    Ok(SynthData {
        graph,
        records,
        unfollow,
        eval: balanced.set,
        insufficient_holds: balanced.insufficient_holds,
        truth: GroundTruth {
            community,
            broker,
            silent,
            topic_mixture,
            follower_offset,
            followee_offset,
            history_follower,
            history_followee,
            roles,
            edge_probability,
            expected_label_rate,
        },
    })
}

//! Follow graph, unfollow matrix and evaluation-set construction.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::math;
use crate::rng;

/// Dense 0-based user index assigned at ingestion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct UserId(pub u32);

impl UserId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl From<usize> for UserId {
    fn from(i: usize) -> Self {
        UserId(i as u32)
    }
}

/// Status of a follow edge at the end of the observation window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Label {
    Hold = 0,
    Unfollow = 1,
}

impl Label {
    pub fn from_bool(unfollow: bool) -> Self {
        if unfollow {
            Label::Unfollow
        } else {
            Label::Hold
        }
    }

    #[inline]
    pub fn is_unfollow(self) -> bool {
        self == Label::Unfollow
    }

    #[inline]
    pub fn target(self) -> f64 {
        match self {
            Label::Hold => 0.0,
            Label::Unfollow => 1.0,
        }
    }
}

/// Closed observation interval `[start, end]` in epoch seconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Window {
    pub start: i64,
    pub end: i64,
}

impl Window {
    pub fn new(start: i64, end: i64) -> Self {
        Window { start, end }
    }

    pub fn unbounded() -> Self {
        Window { start: i64::MIN, end: i64::MAX }
    }

    #[inline]
    pub fn contains(&self, t: i64) -> bool {
        self.start <= t && t <= self.end
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RelationRecord {
    pub follower: UserId,
    pub followee: UserId,
    pub label: Label,
    pub first_seen: i64,
    pub dissolved_at: Option<i64>,
}

impl RelationRecord {
    /// Builds a record whose label is unfollow iff `dissolved_at` lies in `window`.
    pub fn new(
        follower: UserId,
        followee: UserId,
        first_seen: i64,
        dissolved_at: Option<i64>,
        window: Window,
    ) -> Self {
        let label = Label::from_bool(dissolved_at.is_some_and(|t| window.contains(t)));
        RelationRecord { follower, followee, label, first_seen, dissolved_at }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Post {
    pub user: UserId,
    pub time: i64,
    pub text: String,
    pub upvotes: u64,
}

/// Directed follow graph at the start of the window plus the users' posts.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TemporalGraph {
    num_users: usize,
    out_adj: Vec<Vec<u32>>,
    in_adj: Vec<Vec<u32>>,
    posts: Vec<Vec<Post>>,
    window: Window,
}

impl TemporalGraph {
    /// Builds the graph from directed edges. Self-loops and duplicates are
    /// dropped; posts are sorted by time per user.
    pub fn new(
        num_users: usize,
        edges: impl IntoIterator<Item = (UserId, UserId)>,
        mut posts: Vec<Vec<Post>>,
        window: Window,
    ) -> Result<Self> {
        let mut out_adj = alloc::vec![Vec::new(); num_users];
        let mut in_adj = alloc::vec![Vec::new(); num_users];
        for (a, b) in edges {
            if a.index() >= num_users {
                return Err(Error::UnknownUser(a.0));
            }
            if b.index() >= num_users {
                return Err(Error::UnknownUser(b.0));
            }
            if a == b {
                continue;
            }
            out_adj[a.index()].push(b.0);
            in_adj[b.index()].push(a.0);
        }
        for list in out_adj.iter_mut().chain(in_adj.iter_mut()) {
            list.sort_unstable();
            list.dedup();
        }
        posts.resize_with(num_users, Vec::new);
        for list in posts.iter_mut() {
            list.sort_by_key(|p| p.time);
        }
        Ok(TemporalGraph { num_users, out_adj, in_adj, posts, window })
    }

    pub fn from_records(
        num_users: usize,
        records: &[RelationRecord],
        posts: Vec<Vec<Post>>,
        window: Window,
    ) -> Result<Self> {
        Self::new(num_users, records.iter().map(|r| (r.follower, r.followee)), posts, window)
    }

    #[inline]
    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn num_edges(&self) -> usize {
        self.out_adj.iter().map(Vec::len).sum()
    }

    #[inline]
    pub fn out_neighbors(&self, u: usize) -> &[u32] {
        &self.out_adj[u]
    }

    #[inline]
    pub fn in_neighbors(&self, u: usize) -> &[u32] {
        &self.in_adj[u]
    }

    pub fn has_edge(&self, from: usize, to: usize) -> bool {
        self.out_adj[from].binary_search(&(to as u32)).is_ok()
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.out_adj
            .iter()
            .enumerate()
            .flat_map(|(i, list)| list.iter().map(move |&j| (i, j as usize)))
    }

    /// Sorted union of in- and out-neighbors for every user.
    pub fn symmetrized(&self) -> Vec<Vec<u32>> {
        (0..self.num_users)
            .map(|u| {
                let mut merged: Vec<u32> =
                    self.out_adj[u].iter().chain(&self.in_adj[u]).copied().collect();
                merged.sort_unstable();
                merged.dedup();
                merged
            })
            .collect()
    }

    #[inline]
    pub fn posts(&self, u: usize) -> &[Post] {
        &self.posts[u]
    }

    pub fn all_posts(&self) -> &[Vec<Post>] {
        &self.posts
    }

    #[inline]
    pub fn window(&self) -> Window {
        self.window
    }

    pub fn has_posts(&self, u: usize) -> bool {
        self.posts[u].iter().any(|p| self.window.contains(p.time))
    }
}

/// Sparse binary matrix of dissolution events, stored as sorted rows.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct UnfollowMatrix {
    num_users: usize,
    rows: Vec<Vec<u32>>,
}

impl UnfollowMatrix {
    pub fn empty(num_users: usize) -> Self {
        UnfollowMatrix { num_users, rows: alloc::vec![Vec::new(); num_users] }
    }

    pub fn from_pairs(num_users: usize, pairs: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut m = Self::empty(num_users);
        for (i, j) in pairs {
            m.rows[i].push(j as u32);
        }
        for row in m.rows.iter_mut() {
            row.sort_unstable();
            row.dedup();
        }
        m
    }

    #[inline]
    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.rows
            .get(i)
            .is_some_and(|row| row.binary_search(&(j as u32)).is_ok())
    }

    /// Value of `r_ij` (0 or 1).
    pub fn get(&self, i: usize, j: usize) -> f64 {
        if self.contains(i, j) {
            1.0
        } else {
            0.0
        }
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[u32] {
        &self.rows[i]
    }

    pub fn len(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.iter().all(Vec::is_empty)
    }

    pub fn entries(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.rows
            .iter()
            .enumerate()
            .flat_map(|(i, row)| row.iter().map(move |&j| (i, j as usize)))
    }
}

/// `r_ij = 1` iff some record `i -> j` is labeled unfollow.
pub fn build_unfollow_matrix(num_users: usize, records: &[RelationRecord]) -> UnfollowMatrix {
    UnfollowMatrix::from_pairs(
        num_users,
        records
            .iter()
            .filter(|r| r.label.is_unfollow())
            .map(|r| (r.follower.index(), r.followee.index())),
    )
}

/// Zeroes every evaluation pair in `r`, giving the training history matrix.
pub fn mask_test_edges(r: &UnfollowMatrix, eval: &EvalSet) -> UnfollowMatrix {
    let mut masked = r.clone();
    for item in &eval.items {
        let row = &mut masked.rows[item.follower.index()];
        if let Ok(pos) = row.binary_search(&item.followee.0) {
            row.remove(pos);
        }
    }
    masked
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EvalItem {
    pub follower: UserId,
    pub followee: UserId,
    pub label: Label,
}

/// Labeled evaluation pairs, optionally split into folds.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EvalSet {
    pub items: Vec<EvalItem>,
    /// Fold index per item; empty until [`kfold_split`] runs.
    pub folds: Vec<usize>,
    pub num_folds: usize,
}

impl EvalSet {
    pub fn new(items: Vec<EvalItem>) -> Self {
        EvalSet { items, folds: Vec::new(), num_folds: 0 }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn num_unfollow(&self) -> usize {
        self.items.iter().filter(|it| it.label.is_unfollow()).count()
    }

    pub fn has_folds(&self) -> bool {
        self.num_folds > 0 && self.folds.len() == self.items.len()
    }

    /// Items in fold `f`.
    pub fn test_items(&self, f: usize) -> Vec<EvalItem> {
        self.items
            .iter()
            .zip(&self.folds)
            .filter(|(_, &k)| k == f)
            .map(|(it, _)| *it)
            .collect()
    }

    /// Items outside fold `f`, in original order.
    pub fn train_items(&self, f: usize) -> Vec<EvalItem> {
        self.items
            .iter()
            .zip(&self.folds)
            .filter(|(_, &k)| k != f)
            .map(|(it, _)| *it)
            .collect()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = alloc::vec![0; self.num_folds];
        for &f in &self.folds {
            sizes[f] += 1;
        }
        sizes
    }

    pub fn pair_set(&self) -> BTreeSet<(u32, u32)> {
        self.items.iter().map(|it| (it.follower.0, it.followee.0)).collect()
    }
}

/// Hold-to-unfollow count ratio of the reference evaluation set (5802 : 6790).
pub const DEFAULT_HOLD_PER_UNFOLLOW: f64 = 5802.0 / 6790.0;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BalanceConfig {
    pub hold_per_unfollow: f64,
    pub seed: u64,
}

impl Default for BalanceConfig {
    fn default() -> Self {
        BalanceConfig { hold_per_unfollow: DEFAULT_HOLD_PER_UNFOLLOW, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BalancedEval {
    pub set: EvalSet,
    /// Fewer eligible hold edges than the ratio asked for.
    pub insufficient_holds: bool,
    pub excluded_without_posts: usize,
}

/// Every unfollow edge whose endpoints both posted in the window, plus a
/// uniform sample of eligible hold edges sized by `cfg.hold_per_unfollow`.
pub fn build_balanced_eval_set(
    records: &[RelationRecord],
    graph: &TemporalGraph,
    cfg: &BalanceConfig,
) -> Result<BalancedEval> {
    if !(cfg.hold_per_unfollow >= 0.0 && cfg.hold_per_unfollow.is_finite()) {
        return Err(Error::invalid("hold_per_unfollow must be a finite non-negative ratio"));
    }
    let has_posts: Vec<bool> = (0..graph.num_users()).map(|u| graph.has_posts(u)).collect();
    let mut seen = BTreeSet::new();
    let mut unfollows = Vec::new();
    let mut holds = Vec::new();
    let mut excluded = 0;
    for r in records {
        if !seen.insert((r.follower, r.followee)) {
            continue;
        }
        if !(has_posts[r.follower.index()] && has_posts[r.followee.index()]) {
            excluded += 1;
            continue;
        }
        let item = EvalItem { follower: r.follower, followee: r.followee, label: r.label };
        if r.label.is_unfollow() {
            unfollows.push(item);
        } else {
            holds.push(item);
        }
    }
    let target = math::round(cfg.hold_per_unfollow * unfollows.len() as f64) as usize;
    let insufficient_holds = target > holds.len();
    let mut rng = rng::stream(cfg.seed, "balance");
    let take = target.min(holds.len());
    let (chosen, _) = holds.partial_shuffle(&mut rng, take);
    let mut chosen = chosen.to_vec();
    chosen.sort_by_key(|it| (it.follower, it.followee));
    let mut items = unfollows;
    items.extend(chosen);
    Ok(BalancedEval { set: EvalSet::new(items), insufficient_holds, excluded_without_posts: excluded })
}

/// Seeded random partition into `k` folds whose sizes differ by at most one.
pub fn kfold_split(eval: &EvalSet, k: usize, seed: u64) -> Result<EvalSet> {
    if k <= 1 {
        return Err(Error::invalid("k must be at least 2"));
    }
    if eval.len() < k {
        return Err(Error::invalid("evaluation set smaller than the number of folds"));
    }
    let mut order: Vec<usize> = (0..eval.len()).collect();
    order.shuffle(&mut rng::stream(seed, "kfold"));
    let mut folds = alloc::vec![0; eval.len()];
    for (pos, &idx) in order.iter().enumerate() {
        folds[idx] = pos % k;
    }
    Ok(EvalSet { items: eval.items.clone(), folds, num_folds: k })
}

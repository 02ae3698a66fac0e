use alloc::vec::Vec;

use super::roles::{Role, RoleAssignment};
use super::tfidf::{sparse_cosine, SparseVector};
use crate::error::{Error, Result};
use crate::graph::{EvalSet, Label, Post, TemporalGraph, Window};

/// Rows (per role) with fewer pairs than this are merged into a neighbor.
pub const MIN_ROW_PAIRS: usize = 20;

/// Number of the followee's posts inside the closed window.
pub fn exposure(posts: &[Post], window: Window) -> usize {
    posts.iter().filter(|p| window.contains(p.time)).count()
}

/// Ratio of unfollow labels, `N_un / (N_ho + N_un)`.
pub fn rou(labels: impl IntoIterator<Item = Label>) -> Result<f64> {
    let (mut un, mut total) = (0usize, 0usize);
    for l in labels {
        total += 1;
        if l.is_unfollow() {
            un += 1;
        }
    }
    if total == 0 {
        return Err(Error::Undefined("rou of an empty subset"));
    }
    Ok(un as f64 / total as f64)
}

/// Interaction variable used to bin evaluation pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Condition {
    /// tf-idf similarity between follower and followee documents.
    Similarity,
    /// Followee's post count in the window.
    Exposure,
}

impl Condition {
    pub fn as_str(self) -> &'static str {
        match self {
            Condition::Similarity => "similarity",
            Condition::Exposure => "exposure",
        }
    }
}

/// Condition value for every item of `eval`. `docs` holds each user's
/// normalized tf-idf vector and is only read for [`Condition::Similarity`].
pub fn condition_values(
    eval: &EvalSet,
    condition: Condition,
    graph: &TemporalGraph,
    docs: &[SparseVector],
) -> Vec<f64> {
    eval.items
        .iter()
        .map(|it| match condition {
            Condition::Similarity => sparse_cosine(&docs[it.follower.index()], &docs[it.followee.index()]),
            Condition::Exposure => exposure(graph.posts(it.followee.index()), graph.window()) as f64,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RouRow {
    pub lo: f64,
    pub hi: f64,
    pub role: Role,
    pub n_unfollow: usize,
    pub n_hold: usize,
    pub rou: f64,
}

impl RouRow {
    pub fn count(&self) -> usize {
        self.n_unfollow + self.n_hold
    }

    fn merge(&mut self, other: &RouRow) {
        self.lo = self.lo.min(other.lo);
        self.hi = self.hi.max(other.hi);
        self.n_unfollow += other.n_unfollow;
        self.n_hold += other.n_hold;
        self.rou = self.n_unfollow as f64 / self.count() as f64;
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RouTable {
    pub rows: Vec<RouRow>,
}

impl RouTable {
    pub fn rows_for(&self, role: Role) -> impl Iterator<Item = &RouRow> + '_ {
        self.rows.iter().filter(move |r| r.role == role)
    }

    pub fn total(&self) -> usize {
        self.rows.iter().map(RouRow::count).sum()
    }
}

/// Quantile cut points: distinct values at positions `b·n/bins`, b ≥ 1.
fn quantile_thresholds(values: &[f64], bins: usize) -> Vec<f64> {
    let mut sorted: Vec<f64> = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let mut cuts: Vec<f64> = (1..bins).map(|b| sorted[b * n / bins]).collect();
    cuts.dedup();
    // A cut equal to the minimum would leave the first bin empty.
    cuts.retain(|&c| c > sorted[0]);
    cuts
}

/// Unfollow ratio per (quantile bin of `condition`, followee role).
///
/// `condition[k]` is the value for `eval.items[k]`. Bins with fewer than
/// [`MIN_ROW_PAIRS`] pairs for a role are merged into a neighboring bin of the
/// same role.
pub fn rou_curve(eval: &EvalSet, condition: &[f64], roles: &RoleAssignment, bins: usize) -> Result<RouTable> {
    if condition.len() != eval.len() {
        return Err(Error::DimensionMismatch { expected: eval.len(), found: condition.len() });
    }
    if bins == 0 {
        return Err(Error::invalid("rou_curve needs at least one bin"));
    }
    if eval.is_empty() {
        return Ok(RouTable::default());
    }
    let cuts = quantile_thresholds(condition, bins);
    let nbins = cuts.len() + 1;
    let bin_of = |x: f64| cuts.partition_point(|&c| c <= x);

    let mut rows = Vec::new();
    for role in Role::ALL {
        let mut per_bin: Vec<Option<RouRow>> = alloc::vec![None; nbins];
        for (item, &x) in eval.items.iter().zip(condition) {
            if roles.role(item.followee.index()) != role {
                continue;
            }
            let row = per_bin[bin_of(x)].get_or_insert(RouRow {
                lo: x,
                hi: x,
                role,
                n_unfollow: 0,
                n_hold: 0,
                rou: 0.0,
            });
            row.lo = row.lo.min(x);
            row.hi = row.hi.max(x);
            if item.label.is_unfollow() {
                row.n_unfollow += 1;
            } else {
                row.n_hold += 1;
            }
        }
        let mut merged: Vec<RouRow> = Vec::new();
        let mut pending: Option<RouRow> = None;
        for mut row in per_bin.into_iter().flatten() {
            row.rou = row.n_unfollow as f64 / row.count() as f64;
            if let Some(p) = pending.take() {
                row.merge(&p);
            }
            if row.count() < MIN_ROW_PAIRS {
                pending = Some(row);
            } else {
                merged.push(row);
            }
        }
        if let Some(p) = pending {
            match merged.last_mut() {
                Some(last) => last.merge(&p),
                None => merged.push(p),
            }
        }
        rows.extend(merged);
    }
    Ok(RouTable { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{EvalItem, UserId};
    use alloc::string::String;
    use alloc::vec;

    #[test]
    fn rou_examples() {
        assert_eq!(rou(vec![Label::Hold; 5]).unwrap(), 0.0);
        assert_eq!(rou(vec![Label::Unfollow; 5]).unwrap(), 1.0);
        assert!(rou(Vec::<Label>::new()).is_err());
        let paper = core::iter::repeat_n(Label::Unfollow, 6790).chain(core::iter::repeat_n(Label::Hold, 5802));
        assert!((rou(paper).unwrap() - 0.5392).abs() < 5e-5);
    }

    #[test]
    fn exposure_counts_closed_window() {
        let w = Window::new(0, 10);
        let posts: Vec<Post> = [0, 5, 10, 11]
            .iter()
            .map(|&t| Post { user: UserId(0), time: t, text: String::from("x"), upvotes: 0 })
            .collect();
        assert_eq!(exposure(&posts, w), 3);
        assert_eq!(exposure(&[], w), 0);
    }

    fn eval_with(n: usize, unfollow_every: usize) -> (EvalSet, RoleAssignment, Vec<f64>) {
        let items = (0..n)
            .map(|k| EvalItem {
                follower: UserId(0),
                followee: UserId((k % 3) as u32),
                label: Label::from_bool(unfollow_every > 0 && k % unfollow_every == 0),
            })
            .collect();
        let roles = RoleAssignment { roles: vec![Role::OrdUsr, Role::OpnLdr, Role::StrHole] };
        let cond = (0..n).map(|k| (k * 7 % 101) as f64).collect();
        (EvalSet::new(items), roles, cond)
    }

    #[test]
    fn all_hold_gives_zero_rows() {
        let (e, roles, cond) = eval_with(600, 0);
        let t = rou_curve(&e, &cond, &roles, 10).unwrap();
        assert!(t.rows.iter().all(|r| r.rou == 0.0));
        assert_eq!(t.total(), 600);
    }

    #[test]
    fn small_rows_are_merged_and_counts_preserved() {
        let (e, roles, cond) = eval_with(150, 4);
        let t = rou_curve(&e, &cond, &roles, 10).unwrap();
        assert_eq!(t.total(), 150);
        assert!(t.rows.iter().all(|r| r.count() >= MIN_ROW_PAIRS));
        let n_un: usize = t.rows.iter().map(|r| r.n_unfollow).sum();
        assert_eq!(n_un as f64 / 150.0, rou(e.items.iter().map(|i| i.label)).unwrap());
    }

    #[test]
    fn tied_values_share_a_bin() {
        let (e, roles, _) = eval_with(300, 2);
        let cond = vec![1.0; 300];
        let t = rou_curve(&e, &cond, &roles, 10).unwrap();
        assert_eq!(t.rows.len(), 3);
    }
}

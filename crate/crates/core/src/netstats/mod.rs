//! Graph and interaction statistics: PageRank, Burt's constraint, social
//! roles, tf-idf similarity, exposure and unfollow-ratio curves.

mod constraint;
mod pagerank;
mod roles;
mod rou;
mod tfidf;

pub use constraint::burt_constraint;
pub use pagerank::{pagerank, PageRank, PageRankConfig};
pub use roles::{assign_roles, Role, RoleAssignment};
pub use rou::{condition_values, exposure, rou, rou_curve, Condition, RouRow, RouTable, MIN_ROW_PAIRS};
pub use tfidf::{content_similarity, sparse_cosine, Idf, SparseVector};

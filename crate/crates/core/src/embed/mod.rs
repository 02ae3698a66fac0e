//! Node embeddings: LINE with first- and second-order proximity, and
//! skip-gram over (biased) random walks.

mod alias;
mod line;
mod sgns;
mod skipgram;
mod table;
mod walk;

pub use alias::AliasTable;
pub use line::{edge_loss, train_line, LineConfig, Proximity};
pub use sgns::sgns_step;
pub use skipgram::{train_skipgram, SkipGramConfig};
pub use table::EmbeddingTable;
pub use walk::{generate_walks, train_walk_embedding, WalkConfig};

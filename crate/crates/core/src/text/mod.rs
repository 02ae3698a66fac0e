//! Tokenization, word vectors and the hierarchical content encoder.

pub mod attention;
pub mod han;
pub mod lstm;
pub mod pretrain;
mod tokenize;
mod vocab;

use alloc::vec::Vec;

pub use han::{ContentEncoder, HanConfig, HanLayout, PostEncoding, TokenizedPost, UserEncoding, UserTrace};
pub use pretrain::{pair_logits, pair_loss_and_grad, pretrain_content_encoder, PretrainConfig, PretrainOutcome};
pub use tokenize::tokenize;
pub use vocab::Vocabulary;

use crate::embed::{train_skipgram, EmbeddingTable, SkipGramConfig};
use crate::error::{Error, Result};
use crate::graph::TemporalGraph;
use crate::rng;

/// Window posts of every user as vocabulary ids.
#[derive(Debug, Clone, PartialEq)]
pub struct TextCorpus {
    pub vocab: Vocabulary,
    /// Per user, chronological; posts empty after tokenization are dropped.
    pub posts: Vec<Vec<TokenizedPost>>,
}

impl TextCorpus {
    /// Each user's posts concatenated into one document.
    pub fn documents(&self) -> Vec<Vec<u32>> {
        self.posts.iter().map(|ps| ps.iter().flat_map(|p| p.tokens.iter().copied()).collect()).collect()
    }

    /// All posts in user order, for word-vector training.
    pub fn sentences(&self) -> Vec<Vec<u32>> {
        self.posts.iter().flat_map(|ps| ps.iter().map(|p| p.tokens.clone())).collect()
    }
}

/// Tokenizes the in-window posts of `graph` against a vocabulary built from them.
pub fn prepare_corpus(graph: &TemporalGraph) -> TextCorpus {
    let window = graph.window();
    let tokenized: Vec<Vec<(i64, Vec<alloc::string::String>)>> = graph
        .all_posts()
        .iter()
        .map(|ps| {
            ps.iter()
                .filter(|p| window.contains(p.time))
                .map(|p| (p.time, tokenize(&p.text)))
                .filter(|(_, t)| !t.is_empty())
                .collect()
        })
        .collect();
    let vocab = Vocabulary::build(tokenized.iter().flatten().flat_map(|(_, t)| t.iter().map(|s| s.as_str())));
    let posts = tokenized
        .iter()
        .map(|ps| ps.iter().map(|(time, t)| TokenizedPost { tokens: vocab.encode(t), time: *time }).collect())
        .collect();
    TextCorpus { vocab, posts }
}

/// Skip-gram word vectors over every post of the corpus.
pub fn train_word_vectors(corpus: &TextCorpus, cfg: &SkipGramConfig, seed: u64) -> Result<EmbeddingTable> {
    if corpus.vocab.is_empty() {
        return Err(Error::invalid("empty vocabulary"));
    }
    let mut r = rng::stream(seed, "word2vec");
    train_skipgram(&corpus.sentences(), corpus.vocab.len(), cfg, &mut r)
}

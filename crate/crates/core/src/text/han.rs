//! Two-level attention LSTM content encoder.
//!
//! Words of a post go through a bidirectional LSTM with attention pooling to
//! give a post vector `s`; the user's post vectors go through a second
//! bidirectional LSTM with attention to give the user vector `m`. Hidden
//! states are concatenated forward ⊕ backward.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::attention::{attention_backward, attention_forward, AttentionParams, AttentionTrace};
use super::lstm::{lstm_backward, lstm_forward, LstmParams, LstmTrace};
use crate::embed::EmbeddingTable;
use crate::error::{Error, Result};
use crate::math::dot;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct HanConfig {
    pub word_hidden: usize,
    pub post_hidden: usize,
    pub word_att: usize,
    pub post_att: usize,
    /// Tokens kept per post (the first ones).
    pub max_tokens: usize,
    /// Posts kept per user (the most recent ones).
    pub max_posts: usize,
    /// Parameters start uniform in `[-init_scale, init_scale)`.
    pub init_scale: f64,
}

impl Default for HanConfig {
    fn default() -> Self {
        HanConfig {
            word_hidden: 100,
            post_hidden: 100,
            word_att: 100,
            post_att: 100,
            max_tokens: 100,
            max_posts: 50,
            init_scale: 0.08,
        }
    }
}

/// A post as vocabulary ids. Ids outside the word table embed to zero.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TokenizedPost {
    pub tokens: Vec<u32>,
    pub time: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LevelParams {
    pub forward: LstmParams,
    pub backward: LstmParams,
    pub attention: AttentionParams,
}

impl LevelParams {
    fn allocate(input: usize, hidden: usize, att: usize, cursor: &mut usize) -> Self {
        let forward = LstmParams::allocate(input, hidden, cursor);
        let backward = LstmParams::allocate(input, hidden, cursor);
        let attention = AttentionParams::allocate(2 * hidden, att, cursor);
        LevelParams { forward, backward, attention }
    }

    pub fn output_dim(&self) -> usize {
        2 * self.forward.hidden
    }
}

/// Where each weight block sits in the flat parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct HanLayout {
    pub word: LevelParams,
    pub post: LevelParams,
    /// Pretraining head `σ(w·(m_i ⊕ m_j) + b)`.
    pub head_w: usize,
    pub head_b: usize,
    pub total: usize,
}

impl HanLayout {
    pub fn new(word_dim: usize, cfg: &HanConfig) -> Self {
        let mut cursor = 0;
        let word = LevelParams::allocate(word_dim, cfg.word_hidden, cfg.word_att, &mut cursor);
        let post = LevelParams::allocate(word.output_dim(), cfg.post_hidden, cfg.post_att, &mut cursor);
        let head_w = cursor;
        let head_b = head_w + 2 * post.output_dim();
        HanLayout { word, post, head_w, head_b, total: head_b + 1 }
    }
}

#[derive(Debug, Clone)]
struct LevelTrace {
    len: usize,
    forward: LstmTrace,
    backward: LstmTrace,
    states: Vec<f64>,
    attention: AttentionTrace,
}

fn level_forward(params: &[f64], level: &LevelParams, xs: &[f64], len: usize) -> (Vec<f64>, LevelTrace) {
    let h = level.forward.hidden;
    let forward = lstm_forward(params, &level.forward, xs, len, false);
    let backward = lstm_forward(params, &level.backward, xs, len, true);
    let mut states = vec![0.0; len * 2 * h];
    for t in 0..len {
        states[t * 2 * h..t * 2 * h + h].copy_from_slice(forward.hidden_at(t, h));
        states[t * 2 * h + h..(t + 1) * 2 * h].copy_from_slice(backward.hidden_at(t, h));
    }
    let (out, attention) = attention_forward(params, &level.attention, &states, len);
    (out, LevelTrace { len, forward, backward, states, attention })
}

fn level_backward(
    params: &[f64],
    level: &LevelParams,
    xs: &[f64],
    trace: &LevelTrace,
    dout: &[f64],
    grads: &mut [f64],
    dxs: &mut [f64],
) {
    let h = level.forward.hidden;
    let len = trace.len;
    let mut dstates = vec![0.0; len * 2 * h];
    attention_backward(params, &level.attention, &trace.states, &trace.attention, dout, grads, &mut dstates);
    let mut dh_f = vec![0.0; len * h];
    let mut dh_b = vec![0.0; len * h];
    for t in 0..len {
        dh_f[t * h..(t + 1) * h].copy_from_slice(&dstates[t * 2 * h..t * 2 * h + h]);
        dh_b[t * h..(t + 1) * h].copy_from_slice(&dstates[t * 2 * h + h..(t + 1) * 2 * h]);
    }
    lstm_backward(params, &level.forward, xs, &trace.forward, &dh_f, grads, dxs);
    lstm_backward(params, &level.backward, xs, &trace.backward, &dh_b, grads, dxs);
}

/// Post vector and its word attention weights.
#[derive(Debug, Clone, PartialEq)]
pub struct PostEncoding {
    pub s: Vec<f64>,
    pub alpha: Vec<f64>,
}

/// User vector and its post attention weights.
#[derive(Debug, Clone, PartialEq)]
pub struct UserEncoding {
    pub m: Vec<f64>,
    pub alpha: Vec<f64>,
}

struct PostTrace {
    tokens: Vec<u32>,
    xs: Vec<f64>,
    level: LevelTrace,
}

/// Forward activations for one user, consumed by [`ContentEncoder::backward_user`].
pub struct UserTrace {
    posts: Vec<PostTrace>,
    post_inputs: Vec<f64>,
    level: LevelTrace,
    m: Vec<f64>,
}

impl UserTrace {
    pub fn m(&self) -> &[f64] {
        &self.m
    }
}

/// Frozen word vectors plus the trainable encoder and pretraining head.
#[derive(Debug, Clone, PartialEq)]
pub struct ContentEncoder {
    cfg: HanConfig,
    layout: HanLayout,
    params: Vec<f64>,
    words: EmbeddingTable,
}

impl ContentEncoder {
    pub fn new<R: Rng>(words: EmbeddingTable, cfg: HanConfig, rng: &mut R) -> Self {
        let layout = HanLayout::new(words.dim(), &cfg);
        let s = cfg.init_scale;
        let params = (0..layout.total).map(|_| rng.gen_range(-s..s)).collect();
        ContentEncoder { cfg, layout, params, words }
    }

    pub fn from_parts(words: EmbeddingTable, cfg: HanConfig, params: Vec<f64>) -> Result<Self> {
        let layout = HanLayout::new(words.dim(), &cfg);
        if params.len() != layout.total {
            return Err(Error::DimensionMismatch { expected: layout.total, found: params.len() });
        }
        Ok(ContentEncoder { cfg, layout, params, words })
    }

    pub fn config(&self) -> &HanConfig {
        &self.cfg
    }

    pub fn layout(&self) -> &HanLayout {
        &self.layout
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn word_vectors(&self) -> &EmbeddingTable {
        &self.words
    }

    pub fn word_vectors_mut(&mut self) -> &mut EmbeddingTable {
        &mut self.words
    }

    /// Width of `m` (twice the post-level hidden size).
    pub fn output_dim(&self) -> usize {
        self.layout.post.output_dim()
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|x| x.is_finite())
    }

    fn embed_tokens(&self, tokens: &[u32]) -> Vec<f64> {
        let d = self.words.dim();
        let mut xs = vec![0.0; tokens.len() * d];
        for (t, &id) in tokens.iter().enumerate() {
            if (id as usize) < self.words.len() {
                xs[t * d..(t + 1) * d].copy_from_slice(self.words.get(id as usize));
            }
        }
        xs
    }

    fn truncate<'a>(&self, post: &'a TokenizedPost) -> &'a [u32] {
        &post.tokens[..post.tokens.len().min(self.cfg.max_tokens)]
    }

    pub fn encode_post(&self, post: &TokenizedPost) -> Result<PostEncoding> {
        let tokens = self.truncate(post);
        if tokens.is_empty() {
            return Err(Error::invalid("post has no tokens"));
        }
        let xs = self.embed_tokens(tokens);
        let (s, trace) = level_forward(&self.params, &self.layout.word, &xs, tokens.len());
        Ok(PostEncoding { s, alpha: trace.attention.alpha })
    }

    /// Runs both levels over the most recent `max_posts` non-empty posts.
    pub fn trace_user(&self, posts: &[TokenizedPost]) -> Result<UserTrace> {
        let usable: Vec<&TokenizedPost> = posts.iter().filter(|p| !p.tokens.is_empty()).collect();
        if usable.is_empty() {
            return Err(Error::invalid("user has no usable posts"));
        }
        let keep = &usable[usable.len().saturating_sub(self.cfg.max_posts)..];
        let sd = self.layout.word.output_dim();
        let mut post_inputs = vec![0.0; keep.len() * sd];
        let mut traces = Vec::with_capacity(keep.len());
        for (l, post) in keep.iter().enumerate() {
            let tokens = self.truncate(post).to_vec();
            let xs = self.embed_tokens(&tokens);
            let (s, level) = level_forward(&self.params, &self.layout.word, &xs, tokens.len());
            post_inputs[l * sd..(l + 1) * sd].copy_from_slice(&s);
            traces.push(PostTrace { tokens, xs, level });
        }
        let (m, level) = level_forward(&self.params, &self.layout.post, &post_inputs, keep.len());
        Ok(UserTrace { posts: traces, post_inputs, level, m })
    }

    pub fn encode_user(&self, posts: &[TokenizedPost]) -> Result<UserEncoding> {
        let trace = self.trace_user(posts)?;
        Ok(UserEncoding { alpha: trace.level.attention.alpha.clone(), m: trace.m })
    }

    /// Accumulates `∂L/∂params` given `dm = ∂L/∂m`. When `word_grads` is given
    /// (a `vocab x word_dim` buffer), input-embedding gradients land there too.
    pub fn backward_user(&self, trace: &UserTrace, dm: &[f64], grads: &mut [f64], mut word_grads: Option<&mut [f64]>) {
        let sd = self.layout.word.output_dim();
        let mut ds = vec![0.0; trace.post_inputs.len()];
        level_backward(&self.params, &self.layout.post, &trace.post_inputs, &trace.level, dm, grads, &mut ds);
        let d = self.words.dim();
        for (l, post) in trace.posts.iter().enumerate() {
            let mut dxs = vec![0.0; post.xs.len()];
            level_backward(&self.params, &self.layout.word, &post.xs, &post.level, &ds[l * sd..(l + 1) * sd], grads, &mut dxs);
            if let Some(wg) = word_grads.as_deref_mut() {
                for (t, &id) in post.tokens.iter().enumerate() {
                    if (id as usize) < self.words.len() {
                        let row = &mut wg[id as usize * d..(id as usize + 1) * d];
                        crate::math::axpy(1.0, &dxs[t * d..(t + 1) * d], row);
                    }
                }
            }
        }
    }

    /// Pretraining head logit `w·(m_i ⊕ m_j) + b`.
    pub fn pair_logit(&self, m_i: &[f64], m_j: &[f64]) -> f64 {
        let md = self.output_dim();
        let w = &self.params[self.layout.head_w..self.layout.head_w + 2 * md];
        dot(&w[..md], m_i) + dot(&w[md..], m_j) + self.params[self.layout.head_b]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use crate::testutil::{derivative, rel_err};

    fn small_encoder(seed: u64) -> ContentEncoder {
        let mut r = rng::seeded(seed);
        let words = EmbeddingTable::uniform(6, 4, 0.5, &mut r);
        let cfg = HanConfig { word_hidden: 3, post_hidden: 2, word_att: 3, post_att: 2, max_tokens: 5, max_posts: 4, init_scale: 0.5 };
        ContentEncoder::new(words, cfg, &mut r)
    }

    fn post(tokens: &[u32]) -> TokenizedPost {
        TokenizedPost { tokens: tokens.to_vec(), time: 0 }
    }

    #[test]
    fn attention_weights_sum_to_one() {
        let enc = small_encoder(1);
        let p = enc.encode_post(&post(&[0, 1, 2, 5, 3])).unwrap();
        assert_eq!(p.s.len(), 6);
        assert!((p.alpha.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(p.alpha.iter().all(|&a| a >= 0.0));
        let u = enc.encode_user(&[post(&[0, 1]), post(&[2]), post(&[3, 4, 5])]).unwrap();
        assert_eq!(u.m.len(), 4);
        assert!((u.alpha.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_token_post_is_its_hidden_state() {
        let enc = small_encoder(2);
        let p = enc.encode_post(&post(&[4])).unwrap();
        assert_eq!(p.alpha, vec![1.0]);
        let xs = enc.embed_tokens(&[4]);
        let f = lstm_forward(&enc.params, &enc.layout.word.forward, &xs, 1, false);
        let b = lstm_forward(&enc.params, &enc.layout.word.backward, &xs, 1, true);
        let mut h1 = f.h.clone();
        h1.extend_from_slice(&b.h);
        for (a, b) in p.s.iter().zip(&h1) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn single_post_user_is_post_level_state() {
        let enc = small_encoder(3);
        let posts = [post(&[1, 2, 3])];
        let s = enc.encode_post(&posts[0]).unwrap().s;
        let f = lstm_forward(&enc.params, &enc.layout.post.forward, &s, 1, false);
        let b = lstm_forward(&enc.params, &enc.layout.post.backward, &s, 1, true);
        let u = enc.encode_user(&posts).unwrap();
        let expected: Vec<f64> = f.h.iter().chain(&b.h).copied().collect();
        for (a, b) in u.m.iter().zip(&expected) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn post_order_matters() {
        let enc = small_encoder(4);
        let a = [post(&[0, 1]), post(&[2, 3, 4]), post(&[5])];
        let mut b = a.clone();
        b.reverse();
        let (ma, mb) = (enc.encode_user(&a).unwrap().m, enc.encode_user(&b).unwrap().m);
        assert!(ma.iter().zip(&mb).any(|(x, y)| (x - y).abs() > 1e-9));
    }

    #[test]
    fn empty_inputs_rejected() {
        let enc = small_encoder(5);
        assert!(enc.encode_post(&post(&[])).is_err());
        assert!(enc.encode_user(&[]).is_err());
        assert!(enc.encode_user(&[post(&[])]).is_err());
    }

    #[test]
    fn truncation_keeps_recent_posts_and_leading_tokens() {
        let enc = small_encoder(6);
        let many: Vec<TokenizedPost> = (0..7).map(|k| post(&[k % 6, 1, 2, 3, 4, 5, 0])).collect();
        let trace = enc.trace_user(&many).unwrap();
        assert_eq!(trace.posts.len(), 4);
        assert_eq!(trace.posts[0].tokens, vec![3, 1, 2, 3, 4]);
    }

    fn squared_norm_of_s(enc: &ContentEncoder, p: &TokenizedPost) -> f64 {
        let s = enc.encode_post(p).unwrap().s;
        dot(&s, &s)
    }

    #[test]
    fn post_gradient_matches_finite_differences() {
        // d‖s‖²/dθ via the word-level backward pass.
        let enc = small_encoder(7);
        let p = post(&[0, 3, 1, 3]);
        let tokens = enc.truncate(&p).to_vec();
        let xs = enc.embed_tokens(&tokens);
        let (s, trace) = level_forward(&enc.params, &enc.layout.word, &xs, tokens.len());
        let ds: Vec<f64> = s.iter().map(|v| 2.0 * v).collect();
        let mut grads = vec![0.0; enc.params.len()];
        let mut dxs = vec![0.0; xs.len()];
        level_backward(&enc.params, &enc.layout.word, &xs, &trace, &ds, &mut grads, &mut dxs);
        let word_end = enc.layout.post.forward.w;
        for k in 0..word_end {
            let fd = derivative(
                |h| {
                    let mut e = enc.clone();
                    e.params[k] += h;
                    squared_norm_of_s(&e, &p)
                },
                1e-4,
            );
            assert!(rel_err(fd, grads[k]) < 1e-4, "param {k}: fd {fd} analytic {}", grads[k]);
        }
    }
}

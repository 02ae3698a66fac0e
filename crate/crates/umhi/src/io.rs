//! On-disk formats: raw relation and post files, versioned JSON artifacts and
//! versioned text tables.
//!
//! Every artifact written here names its format and version. JSON artifacts
//! carry `format` and `version` fields next to `data`; text artifacts start
//! with a `#umhi <format> <version>` line. Readers check both before parsing
//! the body.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use umhi_core::embed::EmbeddingTable;
use umhi_core::graph::{
    build_balanced_eval_set, build_unfollow_matrix, BalanceConfig, EvalSet, Post, RelationRecord, TemporalGraph,
    UnfollowMatrix, UserId, Window,
};
use umhi_core::netstats::{RouRow, RouTable};
use umhi_core::rng;
use umhi_core::text::Vocabulary;

use crate::error::{CliError, Result};

pub const FORMAT_VERSION: u32 = 1;

pub fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| CliError::io(path, e))
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::Io { path: dir.to_path_buf(), source: e })?;
    }
    fs::write(path, bytes).map_err(|e| CliError::Io { path: path.to_path_buf(), source: e })
}

/// Lowercase hex SHA-256 of `bytes`.
pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

pub fn file_sha256(path: &Path) -> Result<String> {
    Ok(sha256_hex(&read_bytes(path)?))
}

// ---------------------------------------------------------------------------
// Versioned JSON

#[derive(Serialize)]
struct EnvelopeOut<'a, T> {
    format: &'a str,
    version: u32,
    data: &'a T,
}

#[derive(Deserialize)]
struct Header {
    format: String,
    version: u32,
}

#[derive(Deserialize)]
struct EnvelopeIn<T> {
    data: T,
}

pub fn json_bytes<T: Serialize>(format: &str, data: &T) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(&EnvelopeOut { format, version: FORMAT_VERSION, data })
        .map_err(|e| CliError::Usage(format!("cannot serialize {format}: {e}")))?;
    bytes.push(b'\n');
    Ok(bytes)
}

pub fn write_json<T: Serialize>(path: &Path, format: &str, data: &T) -> Result<()> {
    write_bytes(path, &json_bytes(format, data)?)
}

pub fn parse_json<T: DeserializeOwned>(path: &Path, bytes: &[u8], format: &str) -> Result<T> {
    let header: Header =
        serde_json::from_slice(bytes).map_err(|e| CliError::format(path, format!("not a {format} artifact: {e}")))?;
    if header.format != format || header.version != FORMAT_VERSION {
        return Err(CliError::Version {
            path: path.to_path_buf(),
            expected: format.to_string(),
            expected_version: FORMAT_VERSION,
            found: header.format,
            found_version: header.version,
        });
    }
    let env: EnvelopeIn<T> = serde_json::from_slice(bytes).map_err(|e| CliError::format(path, e.to_string()))?;
    Ok(env.data)
}

pub fn read_json<T: DeserializeOwned>(path: &Path, format: &str) -> Result<T> {
    parse_json(path, &read_bytes(path)?, format)
}

// ---------------------------------------------------------------------------
// Versioned text

fn text_header(format: &str) -> String {
    format!("#umhi {format} {FORMAT_VERSION}\n")
}

/// Checks the header line and returns the remaining lines with their 1-based numbers.
fn text_body<'a>(path: &Path, text: &'a str, format: &str) -> Result<impl Iterator<Item = (usize, &'a str)>> {
    let mut lines = text.lines();
    let first = lines.next().unwrap_or("");
    let mut parts = first.split_whitespace();
    let (tag, found, version) = (parts.next(), parts.next().unwrap_or(""), parts.next().unwrap_or(""));
    let found_version: u32 = version.parse().unwrap_or(0);
    if tag != Some("#umhi") || found != format || found_version != FORMAT_VERSION {
        return Err(CliError::Version {
            path: path.to_path_buf(),
            expected: format.to_string(),
            expected_version: FORMAT_VERSION,
            found: found.to_string(),
            found_version,
        });
    }
    Ok(lines.enumerate().map(|(k, l)| (k + 2, l)))
}

fn field<T: std::str::FromStr>(path: &Path, line: usize, s: Option<&str>, what: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    let s = s.ok_or_else(|| CliError::parse(path, line, format!("missing {what}")))?;
    s.parse().map_err(|e| CliError::parse(path, line, format!("bad {what} `{s}`: {e}")))
}

/// Writes rows as `<id> v1 ... vd` after a `count dim` line.
pub fn embedding_text(table: &EmbeddingTable) -> String {
    let mut s = text_header("embedding");
    let _ = writeln!(s, "{} {}", table.len(), table.dim());
    for id in 0..table.len() {
        let _ = write!(s, "{id}");
        for v in table.get(id) {
            let _ = write!(s, " {v}");
        }
        s.push('\n');
    }
    s
}

pub fn write_embedding(path: &Path, table: &EmbeddingTable) -> Result<()> {
    write_bytes(path, embedding_text(table).as_bytes())
}

pub fn parse_embedding(path: &Path, text: &str) -> Result<EmbeddingTable> {
    let mut body = text_body(path, text, "embedding")?;
    let (n, size) = body.next().ok_or_else(|| CliError::format(path, "missing size line"))?;
    let mut it = size.split_whitespace();
    let count: usize = field(path, n, it.next(), "row count")?;
    let dim: usize = field(path, n, it.next(), "dimension")?;
    let mut data = Vec::with_capacity(count * dim);
    let mut rows = 0;
    for (n, line) in body {
        let mut it = line.split_whitespace();
        let id: usize = field(path, n, it.next(), "row id")?;
        if id != rows {
            return Err(CliError::parse(path, n, format!("expected row {rows}, found {id}")));
        }
        for _ in 0..dim {
            data.push(field::<f64>(path, n, it.next(), "value")?);
        }
        if it.next().is_some() {
            return Err(CliError::parse(path, n, format!("more than {dim} values")));
        }
        rows += 1;
    }
    if rows != count {
        return Err(CliError::format(path, format!("declared {count} rows, found {rows}")));
    }
    Ok(EmbeddingTable::from_data(count, dim, data)?)
}

pub fn read_embedding(path: &Path) -> Result<EmbeddingTable> {
    parse_embedding(path, &read_text(path)?)
}

pub fn write_vocab(path: &Path, vocab: &Vocabulary) -> Result<()> {
    let mut s = text_header("vocab");
    for w in vocab.words() {
        s.push_str(w);
        s.push('\n');
    }
    write_bytes(path, s.as_bytes())
}

pub fn read_vocab(path: &Path) -> Result<Vocabulary> {
    let text = read_text(path)?;
    let words = text_body(path, &text, "vocab")?.map(|(_, w)| w.to_string()).collect();
    Ok(Vocabulary::from_words(words))
}

/// Tab-separated table with a header row.
pub fn write_table(path: &Path, format: &str, columns: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut s = text_header(format);
    s.push_str(&columns.join("\t"));
    s.push('\n');
    for r in rows {
        s.push_str(&r.join("\t"));
        s.push('\n');
    }
    write_bytes(path, s.as_bytes())
}

/// Rows of a table written by [`write_table`], checked against `columns`.
pub fn read_table(path: &Path, format: &str, columns: &[&str]) -> Result<Vec<Vec<String>>> {
    let text = read_text(path)?;
    let mut body = text_body(path, &text, format)?;
    let (n, head) = body.next().ok_or_else(|| CliError::format(path, "missing column header"))?;
    if head.split('\t').collect::<Vec<_>>() != columns {
        return Err(CliError::parse(path, n, format!("expected columns {}", columns.join(","))));
    }
    body.map(|(n, l)| {
        let row: Vec<String> = l.split('\t').map(str::to_string).collect();
        if row.len() != columns.len() {
            return Err(CliError::parse(path, n, format!("expected {} fields", columns.len())));
        }
        Ok(row)
    })
    .collect()
}

pub const ROU_COLUMNS: &[&str] = &["role", "lo", "hi", "n_unfollow", "n_hold", "rou"];

pub fn rou_rows(table: &RouTable, role_label: Option<&str>) -> Vec<Vec<String>> {
    table
        .rows
        .iter()
        .map(|r| {
            let role = role_label.unwrap_or(r.role.as_str()).to_string();
            vec![role, r.lo.to_string(), r.hi.to_string(), r.n_unfollow.to_string(), r.n_hold.to_string(), r.rou.to_string()]
        })
        .collect()
}

/// A row of an unfollow-ratio table; `role` is a role name or `All`.
#[derive(Debug, Clone, PartialEq)]
pub struct RouLine {
    pub role: String,
    pub row: RouRow,
}

pub fn read_rou_table(path: &Path) -> Result<Vec<RouLine>> {
    let rows = read_table(path, "rou", ROU_COLUMNS)?;
    rows.into_iter()
        .enumerate()
        .map(|(k, r)| {
            let n = k + 3;
            let parsed = RouRow {
                role: umhi_core::netstats::Role::OrdUsr,
                lo: field(path, n, Some(&r[1]), "lo")?,
                hi: field(path, n, Some(&r[2]), "hi")?,
                n_unfollow: field(path, n, Some(&r[3]), "n_unfollow")?,
                n_hold: field(path, n, Some(&r[4]), "n_hold")?,
                rou: field(path, n, Some(&r[5]), "rou")?,
            };
            let role = umhi_core::netstats::Role::parse(&r[0]).unwrap_or(umhi_core::netstats::Role::OrdUsr);
            Ok(RouLine { role: r[0].clone(), row: RouRow { role, ..parsed } })
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Raw inputs

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestStats {
    pub relation_lines: usize,
    pub duplicate_relations: usize,
    pub self_loops: usize,
    pub posts_kept: usize,
    pub posts_outside_window: usize,
    pub posts_empty: usize,
    pub posts_unknown_user: usize,
    pub eval_excluded_without_posts: usize,
    pub insufficient_holds: bool,
}

/// A parsed relation line with external ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawRelation {
    pub follower: String,
    pub followee: String,
    pub first_seen: i64,
    pub dissolved_at: Option<i64>,
}

/// Parses the relations format. Duplicate pairs keep the last occurrence.
pub fn parse_relations(path: &Path, text: &str, stats: &mut IngestStats) -> Result<Vec<RawRelation>> {
    let mut latest: BTreeMap<(String, String), (i64, Option<i64>)> = BTreeMap::new();
    for (k, raw) in text.lines().enumerate() {
        let n = k + 1;
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() < 4 {
            return Err(CliError::parse(path, n, format!("expected 4 tab-separated fields, found {}", fields.len())));
        }
        let (a, b) = (fields[0].trim(), fields[1].trim());
        if a.is_empty() || b.is_empty() {
            return Err(CliError::parse(path, n, "empty user id"));
        }
        let first_seen: i64 = field(path, n, Some(fields[2].trim()), "first_seen")?;
        let dissolved = match fields[3].trim() {
            "-" => None,
            t => Some(field::<i64>(path, n, Some(t), "dissolved_at")?),
        };
        stats.relation_lines += 1;
        if a == b {
            stats.self_loops += 1;
            continue;
        }
        if latest.insert((a.to_string(), b.to_string()), (first_seen, dissolved)).is_some() {
            stats.duplicate_relations += 1;
        }
    }
    Ok(latest
        .into_iter()
        .map(|((follower, followee), (first_seen, dissolved_at))| RawRelation { follower, followee, first_seen, dissolved_at })
        .collect())
}

#[derive(Deserialize)]
struct RawPost {
    user: String,
    time: i64,
    text: String,
    upvotes: u64,
}

/// Parses the posts format into per-user lists sorted by time.
pub fn parse_posts(
    path: &Path,
    text: &str,
    index: &HashMap<&str, UserId>,
    window: Window,
    stats: &mut IngestStats,
) -> Result<Vec<Vec<Post>>> {
    let mut posts: Vec<Vec<Post>> = vec![Vec::new(); index.len()];
    for (k, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawPost = serde_json::from_str(line).map_err(|e| CliError::parse(path, k + 1, e.to_string()))?;
        let Some(&user) = index.get(raw.user.as_str()) else {
            stats.posts_unknown_user += 1;
            continue;
        };
        if !window.contains(raw.time) {
            stats.posts_outside_window += 1;
            continue;
        }
        if raw.text.trim().is_empty() {
            stats.posts_empty += 1;
            continue;
        }
        stats.posts_kept += 1;
        posts[user.index()].push(Post { user, time: raw.time, text: raw.text, upvotes: raw.upvotes });
    }
    for list in &mut posts {
        list.sort_by_key(|p| p.time);
    }
    Ok(posts)
}

/// Ingested data: dense users, labeled relations, posts and the balanced
/// evaluation set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    /// External id of each dense user id.
    pub users: Vec<String>,
    pub window: Window,
    pub records: Vec<RelationRecord>,
    pub posts: Vec<Vec<Post>>,
    pub eval: EvalSet,
    pub stats: IngestStats,
}

pub const DATASET_FORMAT: &str = "dataset";

impl Dataset {
    /// Users are numbered in sorted order of their external ids, so the
    /// numbering does not depend on line order.
    pub fn build(
        relations: Vec<RawRelation>,
        posts_text: Option<(&Path, &str)>,
        window: Window,
        hold_per_unfollow: f64,
        seed: u64,
        mut stats: IngestStats,
    ) -> Result<Dataset> {
        let ids: BTreeSet<&str> = relations.iter().flat_map(|r| [r.follower.as_str(), r.followee.as_str()]).collect();
        let users: Vec<String> = ids.iter().map(|s| s.to_string()).collect();
        let index: HashMap<&str, UserId> = users.iter().enumerate().map(|(k, s)| (s.as_str(), UserId(k as u32))).collect();
        let mut records: Vec<RelationRecord> = relations
            .iter()
            .map(|r| RelationRecord::new(index[r.follower.as_str()], index[r.followee.as_str()], r.first_seen, r.dissolved_at, window))
            .collect();
        records.sort_by_key(|r| (r.follower, r.followee));
        let posts = match posts_text {
            Some((path, text)) => parse_posts(path, text, &index, window, &mut stats)?,
            None => vec![Vec::new(); users.len()],
        };
        let graph = TemporalGraph::from_records(users.len(), &records, posts.clone(), window)?;
        let balance = BalanceConfig { hold_per_unfollow, seed: rng::derive_seed(seed, "balance") };
        let balanced = build_balanced_eval_set(&records, &graph, &balance)?;
        stats.eval_excluded_without_posts = balanced.excluded_without_posts;
        stats.insufficient_holds = balanced.insufficient_holds;
        Ok(Dataset { users, window, records, posts, eval: balanced.set, stats })
    }

    pub fn graph(&self) -> Result<TemporalGraph> {
        Ok(TemporalGraph::from_records(self.users.len(), &self.records, self.posts.clone(), self.window)?)
    }

    pub fn unfollow(&self) -> UnfollowMatrix {
        build_unfollow_matrix(self.users.len(), &self.records)
    }

    pub fn index(&self) -> HashMap<&str, UserId> {
        self.users.iter().enumerate().map(|(k, s)| (s.as_str(), UserId(k as u32))).collect()
    }
}

/// Reads the raw relation and post files and builds the dataset.
pub fn ingest(
    relations: &Path,
    posts: Option<&Path>,
    window: Window,
    hold_per_unfollow: f64,
    seed: u64,
) -> Result<Dataset> {
    let mut stats = IngestStats::default();
    let raw = parse_relations(relations, &read_text(relations)?, &mut stats)?;
    let posts_text = posts.map(|p| read_text(p).map(|t| (p, t))).transpose()?;
    Dataset::build(raw, posts_text.as_ref().map(|(p, t)| (*p, t.as_str())), window, hold_per_unfollow, seed, stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use umhi_core::graph::Label;

    fn p() -> &'static Path {
        Path::new("input")
    }

    #[test]
    fn relation_lines_map_to_records() {
        let mut st = IngestStats::default();
        let r = parse_relations(p(), "# comment\nu1\tu2\t100\t-\n\nu2\tu1\t5\t7\textra\n", &mut st).unwrap();
        assert_eq!(r.len(), 2);
        assert_eq!(r[0], RawRelation { follower: "u1".into(), followee: "u2".into(), first_seen: 100, dissolved_at: None });
        assert_eq!(r[1].dissolved_at, Some(7));
        assert!(parse_relations(p(), "", &mut st).unwrap().is_empty());
    }

    #[test]
    fn short_relation_line_is_a_parse_error_with_line_number() {
        let e = parse_relations(p(), "u1\tu2\n", &mut IngestStats::default()).unwrap_err();
        assert!(matches!(e, CliError::Parse { line: 1, .. }), "{e}");
        let e = parse_relations(p(), "a\tb\t1\t-\nu1\tu2\tnope\t-\n", &mut IngestStats::default()).unwrap_err();
        assert!(matches!(e, CliError::Parse { line: 2, .. }), "{e}");
        assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn duplicates_keep_last_and_self_loops_are_rejected() {
        let mut st = IngestStats::default();
        let r = parse_relations(p(), "a\tb\t1\t-\na\ta\t1\t-\na\tb\t2\t9\n", &mut st).unwrap();
        assert_eq!(r.len(), 1);
        assert_eq!((r[0].first_seen, r[0].dissolved_at), (2, Some(9)));
        assert_eq!((st.duplicate_relations, st.self_loops), (1, 1));
    }

    #[test]
    fn posts_follow_window_and_text_rules() {
        let users = ["u1".to_string()];
        let index: HashMap<&str, UserId> = [(users[0].as_str(), UserId(0))].into_iter().collect();
        let line = r#"{"user":"u1","time":5,"text":"hi","upvotes":0}"#;
        let mut st = IngestStats::default();
        let kept = parse_posts(p(), line, &index, Window::new(0, 10), &mut st).unwrap();
        assert_eq!(kept[0].len(), 1);
        let mut st = IngestStats::default();
        let dropped = parse_posts(p(), line, &index, Window::new(6, 10), &mut st).unwrap();
        assert!(dropped[0].is_empty());
        assert_eq!(st.posts_outside_window, 1);
        let mut st = IngestStats::default();
        let text = "{\"user\":\"u1\",\"time\":5,\"text\":\"\",\"upvotes\":0}\n{\"user\":\"zz\",\"time\":5,\"text\":\"x\",\"upvotes\":0}";
        parse_posts(p(), text, &index, Window::new(0, 10), &mut st).unwrap();
        assert_eq!((st.posts_empty, st.posts_unknown_user), (1, 1));
        let e = parse_posts(p(), "\n{oops", &index, Window::new(0, 10), &mut st).unwrap_err();
        assert!(matches!(e, CliError::Parse { line: 2, .. }));
    }

    #[test]
    fn dataset_numbering_ignores_line_order() {
        let lines = ["b\ta\t1\t5", "a\tc\t1\t-", "c\tb\t1\t-"];
        let build = |order: &[usize]| {
            let text: String = order.iter().map(|&k| format!("{}\n", lines[k])).collect();
            let mut st = IngestStats::default();
            let raw = parse_relations(p(), &text, &mut st).unwrap();
            Dataset::build(raw, None, Window::new(0, 10), 1.0, 3, st).unwrap()
        };
        let a = build(&[0, 1, 2]);
        assert_eq!(a, build(&[2, 0, 1]));
        assert_eq!(a.users, vec!["a", "b", "c"]);
        let un: Vec<_> = a.unfollow().entries().collect();
        assert_eq!(un, vec![(1, 0)]);
        assert_eq!(a.records.iter().filter(|r| r.label == Label::Unfollow).count(), 1);
    }

    #[test]
    fn embedding_text_round_trips_exactly() {
        let data = vec![0.1, -1.0 / 3.0, 1e-300, 12345.678, f64::MIN_POSITIVE, -0.0];
        let t = EmbeddingTable::from_data(3, 2, data).unwrap();
        let back = parse_embedding(p(), &embedding_text(&t)).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn mismatched_versions_fail_loudly() {
        let text = embedding_text(&EmbeddingTable::zeros(1, 1)).replace("embedding 1", "embedding 2");
        assert!(matches!(parse_embedding(p(), &text), Err(CliError::Version { .. })));
        let bytes = json_bytes("dataset", &1u32).unwrap();
        assert_eq!(parse_json::<u32>(p(), &bytes, "dataset").unwrap(), 1);
        let wrong = String::from_utf8(bytes).unwrap().replace("\"version\": 1", "\"version\": 7");
        assert!(matches!(parse_json::<u32>(p(), wrong.as_bytes(), "dataset"), Err(CliError::Version { .. })));
        assert!(matches!(parse_json::<u32>(p(), b"{\"format\":\"mf\",\"version\":1,\"data\":1}", "dataset"), Err(CliError::Version { .. })));
    }

    #[test]
    fn sha256_of_empty_input() {
        assert_eq!(sha256_hex(b""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    }
}

//! Subcommands of the `umhi` binary.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use umhi_core::audit::NoAudit;
use umhi_core::embed::{train_line, EmbeddingTable, LineConfig, Proximity};
use umhi_core::eval::pipeline::{
    analyze_interactions, prepare_shared, robustness_sweep, run_fold, training_history, with_folds, CvReport,
    FoldResult, Method, PipelineConfig, SharedComponents,
};
use umhi_core::eval::{generate_synthetic_benchmark, SynthConfig, SynthData};
use umhi_core::fusion::{predict_edge, train_fusion, Components, ContentVectors, FusionConfig, FusionModel};
use umhi_core::graph::{EvalSet, Label, TemporalGraph, UserId};
use umhi_core::mf::{factorize_history, FactorModel, MfConfig};
use umhi_core::netstats::{condition_values, rou_curve, Condition, Role, RoleAssignment};
use umhi_core::rng;
use umhi_core::text::{
    pretrain_content_encoder, prepare_corpus, train_word_vectors, ContentEncoder, HanConfig, PretrainConfig, TextCorpus,
};

use crate::config::{parse_override, read_config_file, ExperimentConfig};
use crate::error::{CliError, Result};
use crate::io::{self, Dataset, DATASET_FORMAT, ROU_COLUMNS};
use crate::manifest::{FileChecksum, MetricsFile, RunManifest, Stopwatch, MANIFEST_FORMAT, METRICS_FORMAT};

#[derive(Debug, Parser)]
#[command(name = "umhi", version, about = "Unfollow prediction from structure, content and unfollow history")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Flat `key = value` configuration file.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Artifact directory (default: $UMHI_OUT, else ./umhi-out).
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Model size profile: `paper` or `desk`.
    #[arg(long, global = true)]
    pub profile: Option<String>,
    /// Override any configuration key; applied after the file and flags.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse the relations and posts files into dataset.json.
    Ingest {
        #[arg(long, value_name = "PATH")]
        relations: Option<PathBuf>,
        #[arg(long, value_name = "PATH")]
        posts: Option<PathBuf>,
        #[arg(long, allow_hyphen_values = true)]
        window_start: Option<i64>,
        #[arg(long, allow_hyphen_values = true)]
        window_end: Option<i64>,
        #[arg(long)]
        hold_per_unfollow: Option<f64>,
    },
    /// Roles and unfollow-ratio curves over similarity and exposure.
    Analyze {
        #[arg(long)]
        bins: Option<usize>,
    },
    /// LINE embeddings of both orders and word vectors.
    Embed,
    /// Content encoder pretraining and history factorization on all labeled pairs.
    Pretrain,
    /// Fusion head of the full model on all labeled pairs.
    Train,
    /// Scores pairs with the trained model.
    Predict {
        /// Tab-separated follower and followee ids; default is the evaluation set.
        #[arg(long, value_name = "PATH")]
        pairs: Option<PathBuf>,
    },
    /// Cross-validates every configured method.
    Evaluate {
        #[arg(long)]
        folds: Option<usize>,
        /// Comma-separated method names.
        #[arg(long)]
        methods: Option<String>,
        /// Also run the training-size sweep.
        #[arg(long)]
        sweep: bool,
    },
    /// Writes a synthetic dataset in the input formats and ingests it.
    Synth {
        #[arg(long, default_value_t = 2000)]
        users: usize,
    },
    /// Prints the stored metrics.json unchanged.
    Report,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Ingest { .. } => "ingest",
            Command::Analyze { .. } => "analyze",
            Command::Embed => "embed",
            Command::Pretrain => "pretrain",
            Command::Train => "train",
            Command::Predict { .. } => "predict",
            Command::Evaluate { .. } => "evaluate",
            Command::Synth { .. } => "synth",
            Command::Report => "report",
        }
    }

    fn flag_pairs(&self) -> Vec<(String, String)> {
        let mut v = Vec::new();
        let mut put = |k: &str, val: Option<String>| {
            if let Some(val) = val {
                v.push((k.to_string(), val));
            }
        };
        match self {
            Command::Ingest { relations, posts, window_start, window_end, hold_per_unfollow } => {
                put("relations", relations.as_ref().map(|p| p.display().to_string()));
                put("posts", posts.as_ref().map(|p| p.display().to_string()));
                put("window_start", window_start.map(|x| x.to_string()));
                put("window_end", window_end.map(|x| x.to_string()));
                put("hold_per_unfollow", hold_per_unfollow.map(|x| x.to_string()));
            }
            Command::Analyze { bins } => put("bins", bins.map(|x| x.to_string())),
            Command::Evaluate { folds, methods, sweep } => {
                put("folds", folds.map(|x| x.to_string()));
                put("methods", methods.clone());
                put("sweep", sweep.then(|| "true".to_string()));
            }
            _ => {}
        }
        v
    }
}

/// Builds the configuration: file, then flags, then `--set` overrides.
pub fn resolve_config(cli: &Cli) -> Result<ExperimentConfig> {
    let g = &cli.global;
    let mut pairs = match &g.config {
        Some(path) => read_config_file(path)?,
        None => Vec::new(),
    };
    let mut put = |k: &str, v: Option<String>| {
        if let Some(v) = v {
            pairs.push((k.to_string(), v));
        }
    };
    put("profile", g.profile.clone());
    put("seed", g.seed.map(|x| x.to_string()));
    put("workers", g.workers.map(|x| x.to_string()));
    put("out", g.out.as_ref().map(|p| p.display().to_string()));
    pairs.extend(cli.command.flag_pairs());
    for s in &g.set {
        pairs.push(parse_override(s)?);
    }
    ExperimentConfig::from_pairs(&pairs)
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 { stdout.write_all(text.as_bytes()) } else { stderr.write_all(text.as_bytes()) };
            return code;
        }
    };
    match resolve_config(&cli).and_then(|cfg| execute(&cli.command, &cfg, stdout, stderr)) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cmd: &Command, cfg: &ExperimentConfig, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<()> {
    let mut ctx = Run::new(cmd.name(), cfg);
    match cmd {
        Command::Ingest { .. } => ingest(&mut ctx, stderr)?,
        Command::Analyze { .. } => analyze(&mut ctx)?,
        Command::Embed => embed(&mut ctx)?,
        Command::Pretrain => pretrain(&mut ctx)?,
        Command::Train => train(&mut ctx)?,
        Command::Predict { pairs } => predict(&mut ctx, pairs.as_deref())?,
        Command::Evaluate { .. } => evaluate(&mut ctx)?,
        Command::Synth { users } => synth(&mut ctx, *users, stderr)?,
        Command::Report => return report(cfg, stdout),
    }
    ctx.finish()
}

/// Artifact file names inside the output directory.
pub mod files {
    pub const DATASET: &str = "dataset.json";
    pub const ROLES: &str = "roles.tsv";
    pub const ROU_SIMILARITY: &str = "rou_similarity.tsv";
    pub const ROU_EXPOSURE: &str = "rou_exposure.tsv";
    pub const LINE1: &str = "line1.emb";
    pub const LINE2: &str = "line2.emb";
    pub const WORDS: &str = "words.emb";
    pub const VOCAB: &str = "vocab.txt";
    pub const CONTENT_ENCODER: &str = "han.json";
    pub const HISTORY: &str = "mf.json";
    pub const MODEL: &str = "model.json";
    pub const PREDICTIONS: &str = "predictions.tsv";
    pub const METRICS_JSON: &str = "metrics.json";
    pub const METRICS_TSV: &str = "metrics.tsv";
    pub const AUDIT: &str = "audit.tsv";
    pub const SWEEP: &str = "sweep.tsv";
    pub const RELATIONS: &str = "relations.tsv";
    pub const POSTS: &str = "posts.jsonl";
    pub const TRUTH: &str = "truth.json";
    pub const SYNTH_CONFIG: &str = "synth.conf";

    pub fn manifest(command: &str) -> String {
        format!("manifest-{command}.json")
    }
}

/// Per-command bookkeeping for the manifest.
struct Run<'a> {
    command: &'static str,
    cfg: &'a ExperimentConfig,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    clock: Stopwatch,
    metrics: Option<MetricsFile>,
}

impl<'a> Run<'a> {
    fn new(command: &'static str, cfg: &'a ExperimentConfig) -> Self {
        Run { command, cfg, inputs: Vec::new(), outputs: Vec::new(), clock: Stopwatch::default(), metrics: None }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.cfg.out.join(name)
    }

    fn input(&mut self, name: &str) -> PathBuf {
        let p = self.path(name);
        self.inputs.push(p.clone());
        p
    }

    fn output(&mut self, name: &str) -> PathBuf {
        let p = self.path(name);
        self.outputs.push(p.clone());
        p
    }

    fn dataset(&mut self) -> Result<Dataset> {
        let p = self.input(files::DATASET);
        io::read_json(&p, DATASET_FORMAT)
    }

    fn finish(self) -> Result<()> {
        let path = self.path(&files::manifest(self.command));
        let checks = |ps: &[PathBuf]| ps.iter().map(|p| FileChecksum::of(p)).collect::<Result<Vec<_>>>();
        let manifest = RunManifest {
            command: self.command.to_string(),
            crate_version: env!("CARGO_PKG_VERSION").to_string(),
            config: self.cfg.entries(),
            inputs: checks(&self.inputs)?,
            outputs: checks(&self.outputs)?,
            stages: self.clock.stages,
            metrics: self.metrics.map(|m| m.summaries()).unwrap_or_default(),
        };
        io::write_json(&path, MANIFEST_FORMAT, &manifest)
    }
}

fn required<'p>(p: &'p Option<PathBuf>, key: &str) -> Result<&'p Path> {
    p.as_deref().ok_or_else(|| CliError::Usage(format!("no `{key}` file configured (use --{key} or `{key} = PATH`)")))
}

fn ingest(ctx: &mut Run, stderr: &mut dyn Write) -> Result<()> {
    let cfg = ctx.cfg;
    let relations = required(&cfg.relations, "relations")?.to_path_buf();
    ctx.inputs.push(relations.clone());
    if let Some(p) = &cfg.posts {
        ctx.inputs.push(p.clone());
    }
    let ds = ctx.clock.time("ingest", || {
        io::ingest(&relations, cfg.posts.as_deref(), cfg.window, cfg.hold_per_unfollow, cfg.pipeline.seed)
    })?;
    report_ingest(&ds, stderr);
    let out = ctx.output(files::DATASET);
    io::write_json(&out, DATASET_FORMAT, &ds)
}

fn report_ingest(ds: &Dataset, stderr: &mut dyn Write) {
    let s = &ds.stats;
    let _ = writeln!(
        stderr,
        "ingested {} users, {} relations ({} duplicates kept last, {} self-loops rejected), {} posts \
         ({} outside window, {} empty, {} unknown user dropped); {} evaluation pairs",
        ds.users.len(),
        ds.records.len(),
        s.duplicate_relations,
        s.self_loops,
        s.posts_kept,
        s.posts_outside_window,
        s.posts_empty,
        s.posts_unknown_user,
        ds.eval.len()
    );
    if s.insufficient_holds {
        let _ = writeln!(stderr, "warning: fewer eligible hold edges than the configured ratio asks for");
    }
}

fn float(x: f64) -> String {
    x.to_string()
}

fn analyze(ctx: &mut Run) -> Result<()> {
    let ds = ctx.dataset()?;
    let graph = ds.graph()?;
    let cfg = ctx.cfg;
    let analysis = ctx.clock.time("analyze", || analyze_interactions(&graph, &ds.eval, &cfg.pagerank, cfg.bins))?;
    let overall = ctx.clock.time("overall-curves", || -> Result<_> {
        let everyone = RoleAssignment { roles: vec![Role::OrdUsr; graph.num_users()] };
        let docs = umhi_core::eval::pipeline::user_documents(&prepare_corpus(&graph));
        let curve = |c| rou_curve(&ds.eval, &condition_values(&ds.eval, c, &graph, &docs), &everyone, cfg.bins);
        Ok((curve(Condition::Similarity)?, curve(Condition::Exposure)?))
    })?;
    let roles: Vec<Vec<String>> = (0..graph.num_users())
        .map(|u| {
            vec![
                ds.users[u].clone(),
                float(analysis.pagerank[u]),
                float(analysis.constraint[u]),
                analysis.roles.role(u).as_str().to_string(),
            ]
        })
        .collect();
    let p = ctx.output(files::ROLES);
    io::write_table(&p, "roles", &["user", "pagerank", "constraint", "role"], &roles)?;
    for (name, by_role, all) in
        [(files::ROU_SIMILARITY, &analysis.similarity, &overall.0), (files::ROU_EXPOSURE, &analysis.exposure, &overall.1)]
    {
        let mut rows = io::rou_rows(all, Some("All"));
        rows.extend(io::rou_rows(by_role, None));
        let p = ctx.output(name);
        io::write_table(&p, "rou", ROU_COLUMNS, &rows)?;
    }
    Ok(())
}

fn line_config(p: &PipelineConfig, order: Proximity, name: &str) -> LineConfig {
    LineConfig { order, seed: rng::derive_seed(p.seed, name), ..p.line }
}

fn embed(ctx: &mut Run) -> Result<()> {
    let ds = ctx.dataset()?;
    let graph = ds.graph()?;
    let p = &ctx.cfg.pipeline;
    let line1 = ctx.clock.time("line1", || train_line(&graph, &line_config(p, Proximity::First, "line1")))?;
    let line2 = ctx.clock.time("line2", || train_line(&graph, &line_config(p, Proximity::Second, "line2")))?;
    let corpus = prepare_corpus(&graph);
    let words = ctx.clock.time("word2vec", || train_word_vectors(&corpus, &p.word, rng::derive_seed(p.seed, "word2vec")))?;
    for (name, table) in [(files::LINE1, &line1), (files::LINE2, &line2), (files::WORDS, &words)] {
        let path = ctx.output(name);
        io::write_embedding(&path, table)?;
    }
    let path = ctx.output(files::VOCAB);
    io::write_vocab(&path, &corpus.vocab)
}

/// Stored content encoder: settings and parameters. The word vectors live in
/// their own file, identified by checksum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderFile {
    pub config: HanConfig,
    pub words_sha256: String,
    pub params: Vec<f64>,
    pub best_epoch: Option<usize>,
}

/// The corpus of `graph`, checked against the stored vocabulary.
fn corpus_for(ctx: &mut Run, graph: &TemporalGraph) -> Result<TextCorpus> {
    let path = ctx.input(files::VOCAB);
    let vocab = io::read_vocab(&path)?;
    let corpus = prepare_corpus(graph);
    if corpus.vocab != vocab {
        return Err(CliError::format(&path, "vocabulary does not match the dataset"));
    }
    Ok(corpus)
}

fn pretrain(ctx: &mut Run) -> Result<()> {
    let ds = ctx.dataset()?;
    let graph = ds.graph()?;
    let p = ctx.cfg.pipeline.clone();
    let corpus = corpus_for(ctx, &graph)?;
    let words_path = ctx.input(files::WORDS);
    let words = io::read_embedding(&words_path)?;
    let words_sha256 = io::file_sha256(&words_path)?;
    let mut r = rng::stream(rng::derive_seed(p.seed, "han-init"), "han");
    let encoder = ContentEncoder::new(words, p.han, &mut r);
    let pc = PretrainConfig { seed: rng::derive_seed(p.seed, "han-pretrain"), ..p.pretrain };
    let out = ctx
        .clock
        .time("content-pretrain", || pretrain_content_encoder(encoder, &corpus.posts, &ds.eval.items, &pc, &mut NoAudit))?;
    let file = EncoderFile {
        config: *out.encoder.config(),
        words_sha256,
        params: out.encoder.params().to_vec(),
        best_epoch: out.best_epoch,
    };
    let path = ctx.output(files::CONTENT_ENCODER);
    io::write_json(&path, "content-encoder", &file)?;

    let r_train = training_history(&ds.unfollow(), &ds.eval);
    let mc = MfConfig { seed: rng::derive_seed(p.seed, "mf"), ..p.mf };
    let mf = ctx.clock.time("history", || factorize_history(&r_train, &mc, &mut NoAudit))?;
    let path = ctx.output(files::HISTORY);
    io::write_json(&path, "history-factors", &mf.model)
}

/// Frozen components of the full model, loaded from the output directory.
struct LoadedComponents {
    line1: EmbeddingTable,
    line2: EmbeddingTable,
    content: ContentVectors,
    history: FactorModel,
    checksums: Vec<FileChecksum>,
}

impl LoadedComponents {
    fn load(ctx: &mut Run, graph: &TemporalGraph) -> Result<Self> {
        let corpus = corpus_for(ctx, graph)?;
        let mut checksums = Vec::new();
        let mut load_emb = |ctx: &mut Run, name: &str| -> Result<EmbeddingTable> {
            let p = ctx.input(name);
            let t = io::read_embedding(&p)?;
            checksums.push(FileChecksum { path: name.to_string(), sha256: io::file_sha256(&p)? });
            Ok(t)
        };
        let line1 = load_emb(ctx, files::LINE1)?;
        let line2 = load_emb(ctx, files::LINE2)?;
        let words = load_emb(ctx, files::WORDS)?;
        let enc_path = ctx.input(files::CONTENT_ENCODER);
        let enc: EncoderFile = io::read_json(&enc_path, "content-encoder")?;
        if enc.words_sha256 != checksums[2].sha256 {
            return Err(CliError::Checksum { path: ctx.path(files::WORDS) });
        }
        checksums.push(FileChecksum { path: files::CONTENT_ENCODER.to_string(), sha256: io::file_sha256(&enc_path)? });
        let encoder = ContentEncoder::from_parts(words, enc.config, enc.params)?;
        let content = ContentVectors::encode(&encoder, &corpus.posts);
        let mf_path = ctx.input(files::HISTORY);
        let history: FactorModel = io::read_json(&mf_path, "history-factors")?;
        checksums.push(FileChecksum { path: files::HISTORY.to_string(), sha256: io::file_sha256(&mf_path)? });
        for (name, n) in [(files::LINE1, line1.len()), (files::LINE2, line2.len()), (files::HISTORY, history.num_users)] {
            if n != graph.num_users() {
                return Err(CliError::format(&ctx.path(name), format!("{n} rows for {} users", graph.num_users())));
            }
        }
        Ok(LoadedComponents { line1, line2, content, history, checksums })
    }

    fn components(&self) -> Components<'_> {
        Components {
            structure: vec![("LINE1", &self.line1), ("LINE2", &self.line2)],
            content: Some(&self.content),
            history: Some(&self.history),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    /// Component files the model was trained on, by name relative to the
    /// output directory.
    pub components: Vec<FileChecksum>,
    pub best_epoch: Option<usize>,
    pub model: FusionModel,
}

fn train(ctx: &mut Run) -> Result<()> {
    let ds = ctx.dataset()?;
    let graph = ds.graph()?;
    let loaded = LoadedComponents::load(ctx, &graph)?;
    let p = &ctx.cfg.pipeline;
    let fc = FusionConfig { seed: rng::derive_seed(p.seed, "fusion"), ..p.fusion.clone() };
    let stream = format!("fusion-{}", Method::Umhi.as_str());
    let out =
        ctx.clock.time("fusion", || train_fusion(&ds.eval.items, &loaded.components(), &fc, &stream, &mut NoAudit))?;
    let file = ModelFile { components: loaded.checksums, best_epoch: out.best_epoch, model: out.model };
    let path = ctx.output(files::MODEL);
    io::write_json(&path, "fusion-model", &file)
}

fn read_pairs(path: &Path, ds: &Dataset) -> Result<Vec<(UserId, UserId, Option<Label>)>> {
    let index = ds.index();
    let text = io::read_text(path)?;
    let mut pairs = Vec::new();
    for (k, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').map(str::trim).collect();
        if fields.len() < 2 {
            return Err(CliError::parse(path, k + 1, "expected follower and followee ids"));
        }
        let id = |s: &str| index.get(s).copied().ok_or_else(|| CliError::parse(path, k + 1, format!("unknown user `{s}`")));
        pairs.push((id(fields[0])?, id(fields[1])?, None));
    }
    Ok(pairs)
}

fn predict(ctx: &mut Run, pairs_path: Option<&Path>) -> Result<()> {
    let ds = ctx.dataset()?;
    let graph = ds.graph()?;
    let model_path = ctx.input(files::MODEL);
    let model: ModelFile = io::read_json(&model_path, "fusion-model")?;
    let loaded = LoadedComponents::load(ctx, &graph)?;
    for c in &model.components {
        if loaded.checksums.iter().all(|l| l != c) {
            return Err(CliError::Checksum { path: ctx.path(&c.path) });
        }
    }
    let pairs = match pairs_path {
        Some(p) => {
            ctx.inputs.push(p.to_path_buf());
            read_pairs(p, &ds)?
        }
        None => ds.eval.items.iter().map(|it| (it.follower, it.followee, Some(it.label))).collect(),
    };
    let components = loaded.components();
    let rows = ctx.clock.time("predict", || -> Result<Vec<Vec<String>>> {
        pairs
            .iter()
            .map(|&(i, j, label)| {
                let rec = predict_edge(&model.model, &components, i, j)?;
                Ok(vec![
                    ds.users[i.index()].clone(),
                    ds.users[j.index()].clone(),
                    float(rec.score),
                    u8::from(rec.label.is_unfollow()).to_string(),
                    label.map_or_else(|| "-".to_string(), |l| u8::from(l.is_unfollow()).to_string()),
                ])
            })
            .collect()
    })?;
    let path = ctx.output(files::PREDICTIONS);
    io::write_table(&path, "predictions", &["follower", "followee", "score", "predicted", "label"], &rows)
}

/// Runs folds on up to `workers` threads; results come back in fold order.
fn run_folds(
    graph: &TemporalGraph,
    shared: &SharedComponents,
    eval: &EvalSet,
    cfg: &PipelineConfig,
    workers: usize,
) -> Result<Vec<(FoldResult, f64)>> {
    let k = eval.num_folds;
    let workers = workers.clamp(1, k.max(1));
    let mut out: Vec<Option<umhi_core::Result<(FoldResult, f64)>>> = (0..k).map(|_| None).collect();
    std::thread::scope(|s| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                s.spawn(move || {
                    (w..k)
                        .step_by(workers)
                        .map(|f| {
                            let start = std::time::Instant::now();
                            (f, run_fold(graph, shared, eval, f, cfg).map(|r| (r, start.elapsed().as_secs_f64())))
                        })
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        for h in handles {
            for (f, r) in h.join().expect("fold worker panicked") {
                out[f] = Some(r);
            }
        }
    });
    out.into_iter().map(|r| r.expect("every fold ran").map_err(CliError::from)).collect()
}

fn evaluate(ctx: &mut Run) -> Result<()> {
    let ds = ctx.dataset()?;
    let graph = ds.graph()?;
    let cfg = ctx.cfg;
    let p = &cfg.pipeline;
    let eval = with_folds(&ds.eval, p)?;
    let mut shared_cfg = p.clone();
    if cfg.sweep && !shared_cfg.methods.contains(&Method::Umhi) {
        shared_cfg.methods.push(Method::Umhi);
    }
    let shared = ctx.clock.time("shared-components", || prepare_shared(&graph, &ds.unfollow(), &eval, &shared_cfg))?;
    let start = std::time::Instant::now();
    let folds = run_folds(&graph, &shared, &eval, p, cfg.workers)?;
    ctx.clock.record("folds", start.elapsed().as_secs_f64());
    for (f, secs) in &folds {
        ctx.clock.record(&format!("fold{}", f.fold), *secs);
    }
    let report = CvReport::from_folds(folds.into_iter().map(|(f, _)| f).collect());
    let sweep = if cfg.sweep {
        Some(ctx.clock.time("sweep", || robustness_sweep(&shared, &eval, cfg.sweep_fold, &cfg.sweep_fractions, p))?)
    } else {
        None
    };
    let metrics = MetricsFile::new(&report, eval.len(), eval.num_unfollow(), sweep);

    let path = ctx.output(files::METRICS_JSON);
    io::write_json(&path, METRICS_FORMAT, &metrics)?;
    let mut rows = Vec::new();
    for m in &metrics.methods {
        for (f, r) in m.folds.iter().enumerate() {
            rows.push(vec![
                m.method.clone(),
                f.to_string(),
                float(r.precision),
                float(r.recall),
                float(r.auc),
                r.n_pos.to_string(),
                r.n_neg.to_string(),
            ]);
        }
        let s = &m.summary;
        rows.push(vec![m.method.clone(), "mean".into(), float(s.precision_mean), float(s.recall_mean), float(s.auc_mean), "-".into(), "-".into()]);
        rows.push(vec![m.method.clone(), "std".into(), float(s.precision_std), float(s.recall_std), float(s.auc_std), "-".into(), "-".into()]);
    }
    let path = ctx.output(files::METRICS_TSV);
    io::write_table(&path, "metrics", &["method", "fold", "precision", "recall", "auc", "n_pos", "n_neg"], &rows)?;
    let audit: Vec<Vec<String>> = metrics
        .folds
        .iter()
        .flat_map(|f| f.stages.iter().map(move |s| vec![f.fold.to_string(), s.stage.clone(), s.consumed.to_string(), s.leaked.to_string()]))
        .collect();
    let path = ctx.output(files::AUDIT);
    io::write_table(&path, "audit", &["fold", "stage", "consumed", "leaked"], &audit)?;
    if let Some(sw) = &metrics.sweep {
        let rows: Vec<Vec<String>> = sw
            .rows
            .iter()
            .map(|r| vec![float(r.fraction), r.n_train.to_string(), float(r.report.precision), float(r.report.recall), float(r.report.auc)])
            .collect();
        let path = ctx.output(files::SWEEP);
        io::write_table(&path, "sweep", &["fraction", "n_train", "precision", "recall", "auc"], &rows)?;
    }
    ctx.metrics = Some(metrics);
    Ok(())
}

#[derive(Serialize)]
struct PostLine<'a> {
    user: &'a str,
    time: i64,
    text: &'a str,
    upvotes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthFile {
    pub config: SynthConfig,
    /// External id of each generator user id.
    pub users: Vec<String>,
    pub truth: umhi_core::eval::GroundTruth,
}

fn synth_files(data: &SynthData) -> (Vec<String>, String, String) {
    let n = data.graph.num_users();
    let width = (n.max(2) - 1).to_string().len();
    let users: Vec<String> = (0..n).map(|u| format!("u{u:0width$}")).collect();
    let mut rel = String::from("# follower\tfollowee\tfirst_seen\tdissolved_at\n");
    for r in &data.records {
        let dissolved = r.dissolved_at.map_or_else(|| "-".to_string(), |t| t.to_string());
        rel.push_str(&format!(
            "{}\t{}\t{}\t{}\n",
            users[r.follower.index()],
            users[r.followee.index()],
            r.first_seen,
            dissolved
        ));
    }
    let mut posts = String::new();
    for (u, user) in users.iter().enumerate() {
        for p in data.graph.posts(u) {
            let line = PostLine { user, time: p.time, text: &p.text, upvotes: p.upvotes };
            posts.push_str(&serde_json::to_string(&line).expect("post serializes"));
            posts.push('\n');
        }
    }
    (users, rel, posts)
}

fn synth(ctx: &mut Run, users: usize, stderr: &mut dyn Write) -> Result<()> {
    let cfg = ctx.cfg;
    let sc = SynthConfig { n_users: users, seed: cfg.pipeline.seed, ..SynthConfig::default() };
    let data = ctx.clock.time("generate", || generate_synthetic_benchmark(&sc))?;
    let (ids, rel, posts) = synth_files(&data);
    let window = data.graph.window();
    let rel_path = ctx.output(files::RELATIONS);
    io::write_bytes(&rel_path, rel.as_bytes())?;
    let posts_path = ctx.output(files::POSTS);
    io::write_bytes(&posts_path, posts.as_bytes())?;
    let truth = TruthFile { config: sc, users: ids, truth: data.truth };
    let path = ctx.output(files::TRUTH);
    io::write_json(&path, "synth-truth", &truth)?;
    let conf = format!(
        "relations = {}\nposts = {}\nwindow_start = {}\nwindow_end = {}\nseed = {}\n",
        rel_path.display(),
        posts_path.display(),
        window.start,
        window.end,
        cfg.pipeline.seed
    );
    let path = ctx.output(files::SYNTH_CONFIG);
    io::write_bytes(&path, conf.as_bytes())?;
    let ds = ctx.clock.time("ingest", || {
        io::ingest(&rel_path, Some(&posts_path), window, cfg.hold_per_unfollow, cfg.pipeline.seed)
    })?;
    report_ingest(&ds, stderr);
    let path = ctx.output(files::DATASET);
    io::write_json(&path, DATASET_FORMAT, &ds)
}

fn report(cfg: &ExperimentConfig, stdout: &mut dyn Write) -> Result<()> {
    let path = cfg.out.join(files::METRICS_JSON);
    let bytes = io::read_bytes(&path)?;
    io::parse_json::<MetricsFile>(&path, &bytes, METRICS_FORMAT)?;
    stdout.write_all(&bytes).map_err(|e| CliError::Io { path: PathBuf::from("<stdout>"), source: e })
}


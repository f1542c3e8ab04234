use std::collections::BTreeMap;
use std::fmt::{Display, Write as _};
use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};

use gubm::analysis::{
    counts_tsv, direction_stats, direction_tsv, distance_tsv, interaction_counts,
    transition_distance_histogram,
};
use gubm::baselines::ubm_fit_with_policy;
use gubm::inference::persist::{format_value, ModelParams};
use gubm::logio::{
    load_annotations, load_sessions, save_sessions, split_sessions, Fold, LoadFilters,
    SplitManifest,
};
use gubm::metrics::{perplexity, query_ndcg, rerank, PerplexityReport};
use gubm::simulate::{simulate as run_simulation, SimConfig};
use gubm::{em_fit, EmConfig, Session};
use serde::Serialize;

use crate::{
    AnalyzeArgs, EvaluateArgs, FilterArgs, Metric, Model, RerankArgs, SimulateArgs, SplitArgs,
    Stat, TrainArgs,
};

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub const USAGE: u8 = 1;
    pub const DATA: u8 = 2;
    pub const NUMERICAL: u8 = 3;

    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            code: Self::USAGE,
            message: message.into(),
        }
    }

    fn data(message: impl Into<String>) -> Self {
        Self {
            code: Self::DATA,
            message: message.into(),
        }
    }
}

fn io_code(e: &io::Error) -> u8 {
    // A missing input is a usage mistake; anything else is a data problem.
    if e.kind() == io::ErrorKind::NotFound {
        Failure::USAGE
    } else {
        Failure::DATA
    }
}

trait Context<T> {
    fn context(self, what: impl Display) -> Result<T, Failure>;
}

impl<T> Context<T> for Result<T, gubm::Error> {
    fn context(self, what: impl Display) -> Result<T, Failure> {
        self.map_err(|e| {
            let code = match &e {
                gubm::Error::Numerical(_) => Failure::NUMERICAL,
                gubm::Error::InvalidConfig(_) => Failure::USAGE,
                gubm::Error::Io(io) => io_code(io),
                _ => Failure::DATA,
            };
            Failure {
                code,
                message: format!("{what}: {e}"),
            }
        })
    }
}

impl<T> Context<T> for io::Result<T> {
    fn context(self, what: impl Display) -> Result<T, Failure> {
        self.map_err(|e| Failure {
            code: io_code(&e),
            message: format!("{what}: {e}"),
        })
    }
}

fn read_text(path: &Path) -> Result<String, Failure> {
    if path == Path::new("-") {
        let mut text = String::new();
        io::stdin().read_to_string(&mut text).context("reading stdin")?;
        return Ok(text);
    }
    fs::read_to_string(path).context(path.display())
}

fn write_text(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| Failure::data(format!("{}: {e}", path.display())))
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), Failure> {
    match out {
        Some(path) => write_text(path, text),
        None => io::stdout()
            .lock()
            .write_all(text.as_bytes())
            .map_err(|e| Failure::data(format!("stdout: {e}"))),
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Failure::data(format!("encoding summary: {e}")))?;
    text.push('\n');
    write_text(path, &text)
}

fn load_filters(f: &FilterArgs) -> LoadFilters {
    LoadFilters {
        min_sessions_per_query: f.min_sessions,
        max_sessions_per_query: (f.max_sessions > 0).then_some(f.max_sessions),
        min_hover_dwell_ms: f.min_hover_dwell_ms,
        ..LoadFilters::none()
    }
}

fn read_params(path: &Path) -> Result<ModelParams, Failure> {
    ModelParams::from_text(&read_text(path)?).context(path.display())
}

/// Loads a log, then keeps one fold of a manifest when one is given.
fn load_fold(
    log: &Path,
    filters: LoadFilters,
    manifest: Option<&PathBuf>,
    fold: Fold,
) -> Result<Vec<Session>, Failure> {
    let sessions = load_sessions(log, &filters).context(log.display())?;
    let Some(manifest) = manifest else {
        return Ok(sessions);
    };
    let manifest = SplitManifest::from_text(&read_text(manifest)?).context(manifest.display())?;
    let selected = manifest.select(&sessions, fold);
    if selected.is_empty() {
        return Err(Failure::data(format!(
            "the {} fold of the manifest selects no session of {}",
            fold.name(),
            log.display()
        )));
    }
    Ok(selected)
}

pub fn simulate(args: SimulateArgs) -> Result<(), Failure> {
    let mut config = match &args.config {
        Some(path) => toml::from_str::<SimConfig>(&read_text(path)?)
            .map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?,
        None => SimConfig::default(),
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let out = run_simulation(&config).context("simulation")?;
    save_sessions(&args.out, &out.sessions).context(args.out.display())?;
    let truth_path = args.truth.unwrap_or_else(|| {
        let mut p = args.out.clone().into_os_string();
        p.push(".truth");
        p.into()
    });
    write_text(&truth_path, &ModelParams::Truth(out.truth(&config)).to_text())?;
    eprintln!(
        "simulated {} sessions over {} queries; truth in {}",
        out.sessions.len(),
        out.plans.len(),
        truth_path.display()
    );
    Ok(())
}

fn parse_ratio(ratio: &str) -> Result<(u32, u32), Failure> {
    let bad = || Failure::usage(format!("ratio {ratio:?} is not of the form TRAIN:TEST"));
    let (a, b) = ratio.split_once(':').ok_or_else(bad)?;
    let a = a.trim().parse().map_err(|_| bad())?;
    let b = b.trim().parse().map_err(|_| bad())?;
    if a == 0 && b == 0 {
        return Err(bad());
    }
    Ok((a, b))
}

pub fn split(args: SplitArgs) -> Result<(), Failure> {
    let (train, test) = parse_ratio(&args.ratio)?;
    let sessions = load_sessions(&args.log, &load_filters(&args.filters)).context(args.log.display())?;
    let manifest = split_sessions(&sessions, train, test, args.seed).context("split")?;
    write_text(&args.out, &manifest.to_text())?;
    let n_train = manifest
        .assignments
        .iter()
        .filter(|(_, f)| *f == Fold::Train)
        .count();
    eprintln!(
        "{n_train} train and {} test sessions",
        manifest.assignments.len() - n_train
    );
    Ok(())
}

pub fn train(args: TrainArgs) -> Result<(), Failure> {
    let mut filters = load_filters(&args.filters);
    filters.drop_hovers = args.model == Model::GubmC;
    let sessions = load_fold(
        &args.log,
        filters,
        args.manifest.as_ref(),
        args.split.unwrap_or(Fold::Train),
    )?;
    let config = EmConfig {
        iterations: args.iters,
        init_value: args.init,
        truncation: args.k,
        convergence_epsilon: args.epsilon,
        include_empty_sessions: !args.exclude_empty,
    };
    let (params, trace, iterations) = match args.model {
        Model::Gubm | Model::GubmC => {
            let fit = em_fit(&sessions, &config, args.direction).context("training")?;
            (ModelParams::Gubm(fit.params), fit.log_likelihood, fit.iterations)
        }
        Model::Ubm => {
            let fit = ubm_fit_with_policy(&sessions, &config, args.direction).context("training")?;
            (ModelParams::Ubm(fit.params), fit.log_likelihood, fit.iterations)
        }
    };
    write_text(&args.out, &params.to_text())?;
    if let Some(path) = &args.trace {
        let mut text = String::from("round\tlog_likelihood\n");
        for (round, ll) in trace.iter().enumerate() {
            let _ = writeln!(text, "{round}\t{ll:.12e}");
        }
        write_text(path, &text)?;
    }
    eprintln!(
        "{} on {} sessions: {iterations} rounds, log-likelihood {:.6} -> {:.6}",
        params.model_name(),
        sessions.len(),
        trace.first().copied().unwrap_or(f64::NAN),
        trace.last().copied().unwrap_or(f64::NAN),
    );
    Ok(())
}

#[derive(Serialize)]
struct PerplexitySummary<'a> {
    metric: &'static str,
    model: &'static str,
    sessions: usize,
    #[serde(flatten)]
    report: &'a PerplexityReport,
}

#[derive(Serialize)]
struct NdcgSummary {
    metric: &'static str,
    model: &'static str,
    queries: usize,
    degenerate_queries: usize,
    /// Mean over queries with at least one relevant image, keyed by depth.
    mean: BTreeMap<usize, f64>,
}

pub fn evaluate(args: EvaluateArgs) -> Result<(), Failure> {
    let params = read_params(&args.params)?;
    match args.metric {
        Metric::Perplexity => evaluate_perplexity(&args, &params),
        Metric::Ndcg => evaluate_ndcg(&args, &params),
    }
}

fn evaluate_perplexity(args: &EvaluateArgs, params: &ModelParams) -> Result<(), Failure> {
    let log = args
        .log
        .as_ref()
        .ok_or_else(|| Failure::usage("--metric perplexity needs --log"))?;
    let sessions = load_fold(
        log,
        load_filters(&args.filters),
        args.manifest.as_ref(),
        args.split.unwrap_or(Fold::Test),
    )?;
    let report = match params {
        ModelParams::Gubm(p) => perplexity(&sessions, p),
        ModelParams::Ubm(p) => perplexity(&sessions, p),
        ModelParams::Truth(_) => {
            return Err(Failure::usage(
                "a ground-truth file has no examination parameters to predict with",
            ))
        }
    }
    .context("perplexity")?;
    emit(args.out.as_deref(), &report.to_tsv())?;
    if let Some(path) = &args.summary {
        let summary = PerplexitySummary {
            metric: "perplexity",
            model: params.model_name(),
            sessions: sessions.len(),
            report: &report,
        };
        write_json(path, &summary)?;
    }
    Ok(())
}

fn evaluate_ndcg(args: &EvaluateArgs, params: &ModelParams) -> Result<(), Failure> {
    let path = args
        .annotations
        .as_ref()
        .ok_or_else(|| Failure::usage("--metric ndcg needs --annotations"))?;
    if args.depths.is_empty() || args.depths.contains(&0) {
        return Err(Failure::usage("--depths must be positive"));
    }
    let records = load_annotations(path).context(path.display())?;
    let mut judged: BTreeMap<&str, BTreeMap<String, u8>> = BTreeMap::new();
    for r in &records {
        judged
            .entry(r.query_id.as_str())
            .or_default()
            .insert(r.image_id.clone(), r.relevance());
    }

    let mut tsv = String::from("query");
    for d in &args.depths {
        let _ = write!(tsv, "\tndcg@{d}");
    }
    tsv.push_str("\tdegenerate\n");
    let mut sums: BTreeMap<usize, f64> = args.depths.iter().map(|&d| (d, 0.0)).collect();
    let mut counted = 0usize;
    for (query, judgements) in &judged {
        let candidates: Vec<&String> = judgements.keys().collect();
        let ranking = rerank(query, &candidates, params);
        let result = query_ndcg(query, &ranking, judgements, &args.depths);
        tsv.push_str(query);
        for d in &args.depths {
            let _ = write!(tsv, "\t{:.6}", result.ndcg[d]);
        }
        let _ = writeln!(tsv, "\t{}", result.degenerate);
        if !result.degenerate {
            counted += 1;
            for (d, v) in &result.ndcg {
                *sums.get_mut(d).expect("same depths") += v;
            }
        }
    }
    let mean: BTreeMap<usize, f64> = sums
        .into_iter()
        .map(|(d, s)| (d, if counted == 0 { 0.0 } else { s / counted as f64 }))
        .collect();
    tsv.push_str("mean");
    for v in mean.values() {
        let _ = write!(tsv, "\t{v:.6}");
    }
    let _ = writeln!(tsv, "\t{}", counted == 0);
    emit(args.out.as_deref(), &tsv)?;
    if let Some(path) = &args.summary {
        let summary = NdcgSummary {
            metric: "ndcg",
            model: params.model_name(),
            queries: judged.len(),
            degenerate_queries: judged.len() - counted,
            mean,
        };
        write_json(path, &summary)?;
    }
    Ok(())
}

pub fn rerank_command(args: RerankArgs) -> Result<(), Failure> {
    let params = read_params(&args.params)?;
    let text = read_text(&args.candidates)?;
    let candidates: Vec<&str> = text.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
    let mut out = String::new();
    for id in rerank(&args.query, &candidates, &params) {
        if args.scores {
            let _ = writeln!(out, "{id}\t{}", format_value(params.alpha(&args.query, &id)));
        } else {
            out.push_str(&id);
            out.push('\n');
        }
    }
    emit(None, &out)
}

pub fn analyze(args: AnalyzeArgs) -> Result<(), Failure> {
    let sessions = load_sessions(&args.log, &LoadFilters::none()).context(args.log.display())?;
    let report = match args.stat {
        Stat::Directions => direction_tsv(&direction_stats(&sessions)),
        Stat::Distances => distance_tsv(&transition_distance_histogram(&sessions)),
        Stat::Counts => counts_tsv(&interaction_counts(&sessions)),
    };
    emit(args.out.as_deref(), &report)
}

//! Command-line front end.
//!
//! Exit codes: 0 on success, 1 for data and I/O failures, 2 for usage
//! errors (bad flags, out-of-range parameters).
//!
//! `--config FILE` reads flat `key=value` lines whose keys are long flag
//! names of the subcommand; flags given on the command line win.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::dataset::{Dataset, FeatureSchema};
use crate::error::Error;
use crate::eval::{self, DataSource, SweepRow, TrialConfig};
use crate::explain::{explain, render_beanplot, render_histogram};
use crate::gower::{distance_matrix, DistanceMatrix};
use crate::qrf::ForestParams;
use crate::score::{self, QcadParams, ScoreRule, Scorer};
use crate::synth::{self, anomaly_count, Scheme, SchemeSpec};

/// Presentation factor for scores printed to the terminal.
const DISPLAY_SCALE: f64 = 100.0;

#[derive(Debug, Parser)]
#[command(
    name = "qcad",
    version,
    about = "Contextual anomaly detection with quantile regression forests",
    args_override_self = true
)]
pub struct Cli {
    /// Worker threads (defaults to all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic dataset (CSV + schema).
    Synth(SynthArgs),
    /// Inject labelled contextual anomalies into a dataset.
    Inject(InjectArgs),
    /// Score every object and write JSON Lines.
    Detect(DetectArgs),
    /// Write explanations and beanplots for scored objects.
    Explain(ExplainArgs),
    /// Run repeated injection trials and report ROC AUC, PRC AUC and P@n.
    Eval(EvalArgs),
    /// Repeat the trials over a range of k, eta or with/without scaling.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
struct ConfigArg {
    /// key=value file providing defaults for this command's flags.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SchemeArgs {
    /// Generation scheme, s1..s5.
    #[arg(long, default_value = "s1")]
    scheme: String,
    /// Sample size.
    #[arg(long, default_value_t = 2000)]
    n: usize,
    /// Contextual features.
    #[arg(long, default_value_t = 5)]
    p: usize,
    /// Categorical contextual features.
    #[arg(long, default_value_t = 2)]
    pcat: usize,
    /// Behavioral features.
    #[arg(long, default_value_t = 5)]
    q: usize,
}

impl SchemeArgs {
    fn spec(&self, seed: u64) -> Result<SchemeSpec, Error> {
        let scheme: Scheme = self.scheme.parse()?;
        let spec = SchemeSpec::new(scheme, self.p, self.pcat, self.q, self.n, seed);
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[command(flatten)]
    scheme: SchemeArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    /// Base name of the written `<name>.csv` and `<name>.schema`.
    #[arg(long, default_value = "synthetic")]
    name: String,
    #[command(flatten)]
    config: ConfigArg,
}

#[derive(Debug, Args)]
struct DataArgs {
    /// CSV file with a header row.
    #[arg(long)]
    data: PathBuf,
    /// Schema file (`name,role,kind` per line).
    #[arg(long)]
    schema: PathBuf,
    /// Behavioral columns are already min-max normalized (e.g. the output
    /// of `inject`); skip normalization.
    #[arg(long)]
    prenormalized: bool,
}

impl DataArgs {
    fn load(&self) -> Result<Dataset, Error> {
        let schema = FeatureSchema::load(&self.schema)?;
        let ds = Dataset::load_csv(&self.data, &schema)?;
        if self.prenormalized {
            return Ok(ds);
        }
        let (ds, warnings) = ds.minmax_normalize();
        for w in warnings {
            eprintln!("warning: {w}");
        }
        Ok(ds)
    }
}

#[derive(Debug, Args)]
struct InjectArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    schema: PathBuf,
    /// Number of anomalies; overrides --rate.
    #[arg(long)]
    m: Option<usize>,
    #[arg(long, default_value_t = 0.025)]
    rate: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV (with an `__anomaly__` column).
    #[arg(long)]
    out: PathBuf,
    /// Injection record JSON; defaults to `<out>.injection.json`.
    #[arg(long)]
    record: Option<PathBuf>,
    #[command(flatten)]
    config: ConfigArg,
}

#[derive(Debug, Args)]
struct DetectorArgs {
    /// Reference group size (default min(N/2, 500)).
    #[arg(long)]
    k: Option<usize>,
    /// Clipping constant, or `none` to disable clipping.
    #[arg(long, default_value = "10")]
    eta: String,
    /// Use the bare maximum width outside the estimated support.
    #[arg(long)]
    no_scaling: bool,
    /// Trees per forest.
    #[arg(long, default_value_t = 10)]
    trees: usize,
    /// Percentile intervals (grid of nq + 1 levels).
    #[arg(long, default_value_t = 100)]
    nq: usize,
    /// Features tried per split (default: all contextual features).
    #[arg(long)]
    nf: Option<usize>,
    /// Minimum samples to split a node.
    #[arg(long, default_value_t = 10)]
    ns: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn parse_eta(s: &str) -> Result<Option<f64>, Error> {
    if s.eq_ignore_ascii_case("none") {
        return Ok(None);
    }
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 => Ok(Some(v)),
        _ => Err(Error::param(format!("eta must be a positive number or `none`, got `{s}`"))),
    }
}

impl DetectorArgs {
    fn params(&self) -> Result<QcadParams, Error> {
        Ok(QcadParams {
            k: self.k,
            n_quantiles: self.nq,
            forest: ForestParams {
                n_trees: self.trees,
                max_features: self.nf,
                min_samples_split: self.ns,
                bootstrap: true,
            },
            rule: ScoreRule {
                eta: parse_eta(&self.eta)?,
                scale_outside: !self.no_scaling,
            },
            seed: self.seed,
        })
    }
}

#[derive(Debug, Args)]
struct DetectArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    detector: DetectorArgs,
    /// Output JSON Lines file.
    #[arg(long, default_value = "scores.jsonl")]
    out: PathBuf,
    /// Binary distance matrix cache: read if present, written otherwise.
    #[arg(long)]
    dist_cache: Option<PathBuf>,
    /// Rows of the terminal summary.
    #[arg(long, default_value_t = 10)]
    show: usize,
    #[command(flatten)]
    config: ConfigArg,
}

#[derive(Debug, Args)]
struct ExplainArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Detector settings; must match the `detect` run that wrote the scores.
    #[command(flatten)]
    detector: DetectorArgs,
    /// Scores written by `detect`.
    #[arg(long)]
    scores: PathBuf,
    /// Object to explain.
    #[arg(long, conflicts_with = "top")]
    index: Option<usize>,
    /// Explain the highest-scored objects.
    #[arg(long)]
    top: Option<usize>,
    /// Behavioral features listed per explanation.
    #[arg(long, default_value_t = 3)]
    h: usize,
    #[arg(long, default_value = "explanations")]
    out_dir: PathBuf,
    #[command(flatten)]
    config: ConfigArg,
}

#[derive(Debug, Args)]
struct TrialArgs {
    /// Evaluate on a CSV dataset instead of generated data.
    #[arg(long, requires = "schema")]
    data: Option<PathBuf>,
    #[arg(long)]
    schema: Option<PathBuf>,
    #[command(flatten)]
    scheme: SchemeArgs,
    /// Seed of the generated dataset (defaults to --seed).
    #[arg(long)]
    data_seed: Option<u64>,
    #[arg(long, default_value_t = 10)]
    trials: usize,
    #[arg(long, default_value_t = 0.025)]
    inject_rate: f64,
    #[command(flatten)]
    detector: DetectorArgs,
    /// Results CSV.
    #[arg(long, default_value = "results.csv")]
    out: PathBuf,
}

impl TrialArgs {
    fn source(&self) -> Result<DataSource, Error> {
        match (&self.data, &self.schema) {
            (Some(data), Some(schema)) => {
                let schema = FeatureSchema::load(schema)?;
                let ds = Dataset::load_csv(data, &schema)?;
                Ok(DataSource::Dataset(ds.minmax_normalize().0))
            }
            _ => Ok(DataSource::Synthetic(
                self.scheme.spec(self.data_seed.unwrap_or(self.detector.seed))?,
            )),
        }
    }

    fn config(&self) -> Result<TrialConfig, Error> {
        if self.trials == 0 {
            return Err(Error::param("--trials must be at least 1"));
        }
        Ok(TrialConfig {
            trials: self.trials,
            inject_rate: self.inject_rate,
            seed: self.detector.seed,
        })
    }
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[command(flatten)]
    trial: TrialArgs,
    #[command(flatten)]
    config: ConfigArg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
enum SweepKind {
    K,
    Eta,
    Scaling,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    trial: TrialArgs,
    #[arg(long, value_enum)]
    sweep: SweepKind,
    /// Comma-separated values (k: integers; eta: numbers or `none`).
    #[arg(long, default_value = "")]
    values: String,
    #[command(flatten)]
    config: ConfigArg,
}

/// Failure of a command, split by exit code.
#[derive(Debug)]
enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Param(_) => Failure::Usage(e.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

type CmdResult = Result<(), Failure>;

const SUBCOMMANDS: [&str; 6] = ["synth", "inject", "detect", "explain", "eval", "sweep"];

/// Reads `--config FILE` from the raw arguments and splices its entries in
/// right after the subcommand name so that explicit flags override them.
fn expand_config(args: Vec<OsString>) -> Result<Vec<OsString>, Failure> {
    let strs: Vec<String> = args.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    let mut path = None;
    for (i, a) in strs.iter().enumerate() {
        if a == "--config" {
            path = strs.get(i + 1).cloned();
        } else if let Some(p) = a.strip_prefix("--config=") {
            path = Some(p.to_string());
        }
    }
    let Some(path) = path else { return Ok(args) };
    let Some(sub) = strs.iter().position(|a| SUBCOMMANDS.contains(&a.as_str())) else {
        return Ok(args);
    };
    let text = fs::read_to_string(&path).map_err(|e| Failure::Runtime(format!("{path}: {e}")))?;
    let mut extra = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Failure::Usage(format!("{path}:{}: expected key=value", lineno + 1)));
        };
        let (key, value) = (key.trim(), value.trim());
        if key == "config" {
            continue;
        }
        match value {
            "true" => extra.push(OsString::from(format!("--{key}"))),
            "false" => {}
            _ => {
                extra.push(OsString::from(format!("--{key}")));
                extra.push(OsString::from(value));
            }
        }
    }
    let mut out = args;
    let tail = out.split_off(sub + 1);
    out.extend(extra);
    out.extend(tail);
    Ok(out)
}

/// Entry point used by the binary; returns the process exit code.
pub fn main() -> i32 {
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).try_init();
    run(std::env::args_os())
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let result = expand_config(args).and_then(|args| {
        let cli = match Cli::try_parse_from(args) {
            Ok(cli) => cli,
            Err(e) => {
                let _ = e.print();
                return if e.exit_code() == 0 { Ok(()) } else { Err(Failure::Usage(String::new())) };
            }
        };
        dispatch(cli)
    });
    match result {
        Ok(()) => 0,
        Err(Failure::Usage(msg)) => {
            if !msg.is_empty() {
                eprintln!("error: {msg}");
            }
            2
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            1
        }
    }
}

fn dispatch(cli: Cli) -> CmdResult {
    let command = cli.command;
    let go = move || match command {
        Command::Synth(a) => cmd_synth(&a),
        Command::Inject(a) => cmd_inject(&a),
        Command::Detect(a) => cmd_detect(&a),
        Command::Explain(a) => cmd_explain(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::Sweep(a) => cmd_sweep(&a),
    };
    match cli.threads {
        Some(0) => Err(Failure::Usage("--threads must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Failure::Runtime(e.to_string()))?
            .install(go),
        None => go(),
    }
}

fn create_file(path: &Path) -> Result<BufWriter<File>, Failure> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Failure::Runtime(format!("{}: {e}", parent.display())))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))
}

fn write_text(path: &Path, text: &str) -> CmdResult {
    let mut f = create_file(path)?;
    f.write_all(text.as_bytes())
        .and_then(|_| f.flush())
        .map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))
}

fn cmd_synth(a: &SynthArgs) -> CmdResult {
    let spec = a.scheme.spec(a.seed)?;
    let ds = synth::make_synthetic(&spec)?;
    fs::create_dir_all(&a.out_dir).map_err(|e| Failure::Runtime(format!("{}: {e}", a.out_dir.display())))?;
    let csv = a.out_dir.join(format!("{}.csv", a.name));
    let schema = a.out_dir.join(format!("{}.schema", a.name));
    ds.write_csv(create_file(&csv)?)?;
    write_text(&schema, &ds.schema().to_text())?;
    println!("wrote {} ({} rows) and {}", csv.display(), ds.len(), schema.display());
    Ok(())
}

fn cmd_inject(a: &InjectArgs) -> CmdResult {
    let schema = FeatureSchema::load(&a.schema)?;
    let (ds, _) = Dataset::load_csv(&a.data, &schema)?.minmax_normalize();
    let m = match a.m {
        Some(m) => m,
        None if a.rate > 0.0 && a.rate < 1.0 => anomaly_count(ds.len(), a.rate),
        None => return Err(Failure::Usage(format!("--rate must lie in (0, 1), got {}", a.rate))),
    };
    let (injected, record) = synth::inject_anomalies(&ds, m, a.seed)?;
    injected.write_csv(create_file(&a.out)?)?;
    let record_path = a.record.clone().unwrap_or_else(|| {
        let mut p = a.out.clone().into_os_string();
        p.push(".injection.json");
        PathBuf::from(p)
    });
    write_text(&record_path, &serde_json::to_string(&record).map_err(Error::from)?)?;
    println!("injected {m} anomalies into {} rows -> {}", ds.len(), a.out.display());
    Ok(())
}

fn load_or_build_matrix(ds: &Dataset, cache: Option<&Path>) -> Result<DistanceMatrix, Failure> {
    if let Some(path) = cache {
        if path.exists() {
            let m = DistanceMatrix::load(path)?;
            if m.n() != ds.len() {
                return Err(Failure::Runtime(format!(
                    "{}: cached matrix covers {} objects, dataset has {}",
                    path.display(),
                    m.n(),
                    ds.len()
                )));
            }
            return Ok(m);
        }
    }
    let m = distance_matrix(ds);
    if let Some(path) = cache {
        m.save(path)?;
    }
    Ok(m)
}

fn cmd_detect(a: &DetectArgs) -> CmdResult {
    let params = a.detector.params()?;
    let ds = a.data.load()?;
    params.validate(ds.len())?;
    let m = load_or_build_matrix(&ds, a.dist_cache.as_deref())?;
    let reports = score::detect_with_matrix(&ds, &m, &params)?;
    score::write_jsonl(create_file(&a.out)?, &reports, &ds)?;

    let names: Vec<&str> = ds.schema().behavioral_features().map(|f| f.name.as_str()).collect();
    let order = eval::ranking(&score::final_scores(&reports));
    println!("{:>4}  {:>8}  {:>8}  top feature", "rank", "index", "score");
    for (rank, &i) in order.iter().take(a.show).enumerate() {
        let r = &reports[i];
        let top = crate::explain::rank_features(&r.partial_scores, 1)[0];
        println!(
            "{:>4}  {:>8}  {:>8.2}  {} ({:.2})",
            rank + 1,
            i,
            r.final_score * DISPLAY_SCALE,
            names[top],
            r.partial_scores[top] * DISPLAY_SCALE
        );
    }
    println!("wrote {} scores to {}", reports.len(), a.out.display());
    Ok(())
}

fn file_stem(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

fn cmd_explain(a: &ExplainArgs) -> CmdResult {
    if a.h == 0 {
        return Err(Failure::Usage("--h must be at least 1".into()));
    }
    let params = a.detector.params()?;
    let ds = a.data.load()?;
    let file = File::open(&a.scores).map_err(|e| Failure::Runtime(format!("{}: {e}", a.scores.display())))?;
    let reports = score::read_jsonl(BufReader::new(file), &ds)?;
    if reports.len() != ds.len() || reports.iter().enumerate().any(|(i, r)| r.index != i) {
        return Err(Failure::Runtime(format!(
            "{} does not hold one score per object of the dataset",
            a.scores.display()
        )));
    }
    let targets: Vec<usize> = match (a.index, a.top) {
        (Some(i), _) if i >= ds.len() => {
            return Err(Failure::Usage(format!("--index {i} out of range for {} objects", ds.len())))
        }
        (Some(i), _) => vec![i],
        (None, Some(0)) => return Err(Failure::Usage("--top must be at least 1".into())),
        (None, Some(n)) => eval::ranking(&score::final_scores(&reports)).into_iter().take(n).collect(),
        (None, None) => return Err(Failure::Usage("either --index or --top is required".into())),
    };

    fs::create_dir_all(&a.out_dir).map_err(|e| Failure::Runtime(format!("{}: {e}", a.out_dir.display())))?;
    let scorer = Scorer::without_matrix(&ds, params)?;
    let behavioral: Vec<String> = ds.schema().behavioral_features().map(|f| f.name.clone()).collect();
    for &i in &targets {
        let report = &reports[i];
        let explanation = explain(report, &ds, a.h)?;
        write_text(&a.out_dir.join(format!("object_{i}.json")), &explanation.to_json()?)?;
        let profiles = scorer.profiles_for_group(i, report.reference_group.clone())?;
        for (q, name) in behavioral.iter().enumerate() {
            let svg = render_beanplot(&profiles.profiles[q], profiles.values[q], name);
            write_text(&a.out_dir.join(format!("object_{i}_{}.svg", file_stem(name))), &svg)?;
        }
        for hist in &explanation.group_profile {
            let svg = render_histogram(hist);
            write_text(
                &a.out_dir.join(format!("object_{i}_context_{}.svg", file_stem(hist.name()))),
                &svg,
            )?;
        }
        let top: Vec<String> = explanation
            .top_features
            .iter()
            .map(|f| format!("{} {:.2}", f.name, f.score * DISPLAY_SCALE))
            .collect();
        println!(
            "object {i}: score {:.2}; {}; {} reference objects",
            report.final_score * DISPLAY_SCALE,
            top.join(", "),
            report.reference_group.members.len()
        );
    }
    println!("wrote explanations to {}", a.out_dir.display());
    Ok(())
}

fn finish_trials(rows: &[SweepRow], out: &Path) -> CmdResult {
    eval::write_results_csv(create_file(out)?, rows)?;
    print!("{}", eval::format_table(rows));
    println!("wrote {}", out.display());
    Ok(())
}

fn cmd_eval(a: &EvalArgs) -> CmdResult {
    let t = &a.trial;
    let config = t.config()?;
    let params = t.detector.params()?;
    let result = eval::run_trials(&t.source()?, &params, &config)?;
    let label = match &t.data {
        Some(p) => p.display().to_string(),
        None => t.scheme.scheme.to_ascii_lowercase(),
    };
    finish_trials(&[SweepRow { config: label, result }], &t.out)
}

fn split_values(s: &str) -> Vec<&str> {
    s.split(',').map(str::trim).filter(|v| !v.is_empty()).collect()
}

fn cmd_sweep(a: &SweepArgs) -> CmdResult {
    let t = &a.trial;
    let config = t.config()?;
    let params = t.detector.params()?;
    let source = t.source()?;
    let rows = match a.sweep {
        SweepKind::K => {
            let ks = split_values(&a.values)
                .into_iter()
                .map(|v| v.parse::<usize>().map_err(|_| Failure::Usage(format!("bad k value `{v}`"))))
                .collect::<Result<Vec<_>, _>>()?;
            eval::sweep_k(&source, &params, &config, &ks)?
        }
        SweepKind::Eta => {
            let etas = split_values(&a.values)
                .into_iter()
                .map(parse_eta)
                .collect::<Result<Vec<_>, _>>()?;
            eval::sweep_eta(&source, &params, &config, &etas)?
        }
        SweepKind::Scaling => eval::sweep_scaling(&source, &params, &config)?,
    };
    finish_trials(&rows, &t.out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_entries_go_after_the_subcommand() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("run.cfg");
        fs::write(&cfg, "# comment\nk = 25\nno-scaling=true\nprenormalized=false\n").unwrap();
        let args: Vec<OsString> = ["qcad", "--threads", "2", "detect", "--config", cfg.to_str().unwrap(), "--k", "30"]
            .iter()
            .map(OsString::from)
            .collect();
        let out: Vec<String> = expand_config(args)
            .unwrap()
            .into_iter()
            .map(|a| a.into_string().unwrap())
            .collect();
        assert_eq!(
            out,
            ["qcad", "--threads", "2", "detect", "--k", "25", "--no-scaling", "--config", cfg.to_str().unwrap(), "--k", "30"]
        );
    }

    #[test]
    fn eta_values() {
        assert_eq!(parse_eta("none").unwrap(), None);
        assert_eq!(parse_eta("2.5").unwrap(), Some(2.5));
        assert!(parse_eta("0").is_err());
        assert!(parse_eta("x").is_err());
    }
}

//! Command-line entry point: explanation runs, Rademacher estimates, gap
//! reports, the scenario registry, brute-force oracles, model validation and
//! result-table summaries.
//!
//! Exit codes: 0 success, 1 domain error (machine-readable JSON on stderr),
//! 2 usage error.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde_json::json;

use xinform::error::{Error, Result};
use xinform::explainers::{
    anchor_metrics, gradient_explain, grow_anchor, model_domain, shap_explain,
    shap_permutation_oracle, single_axis_counterfactual, strong_counterfactual,
    top_gradient_component, weak_counterfactual, Explanation,
};
use xinform::geometry::{Distribution, Point};
use xinform::manifest::RunManifest;
use xinform::models::{ClassSpec, FunctionModel};
use xinform::oracles::{compare_grid_sup, compare_strong_counterfactual};
use xinform::rademacher::{
    conditional_rademacher, empirical_rademacher, gap_report, Constraint, EventSpec,
    LabeledSample, GAP_CSV_HEADER,
};
use xinform::scenarios::{
    find_scenario, list_scenarios, plot_data, run_scenario, ScenarioConfig, ScenarioOutcome,
};

#[derive(Parser)]
#[command(
    name = "xinform",
    about = "Exact local explanations and Rademacher-gap informativeness experiments",
    version
)]
struct Cli {
    /// Number of worker threads for parallel trials/scenarios (default: the
    /// XINFORM_WORKERS environment variable, else all cores). Outputs are
    /// identical for any worker count.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute a local explanation of a model at a point.
    Explain(ExplainArgs),
    /// Monte-Carlo estimate of a constrained Rademacher complexity.
    Rademacher(RademacherArgs),
    /// Paired predict/explain complexity estimate with a verdict.
    Gap(GapArgs),
    /// Run, list, or export data for the registered scenarios.
    #[command(subcommand)]
    Scenario(ScenarioCommand),
    /// Brute-force oracles cross-checking the fast paths.
    #[command(subcommand)]
    Oracle(OracleCommand),
    /// Model-document utilities.
    #[command(subcommand)]
    Models(ModelsCommand),
    /// Summarize a results CSV produced by `gap` or `scenario run`.
    Report(ReportArgs),
}

#[derive(Args)]
struct ExplainArgs {
    /// Model document (JSON).
    #[arg(long)]
    model: PathBuf,
    /// Distribution document (JSON); required for shap/anchor methods.
    #[arg(long)]
    dist: Option<PathBuf>,
    /// Explained point, comma-separated: "0.3,0.7".
    #[arg(long)]
    point: String,
    /// gradient | topgrad | shap | anchor | cf-weak | cf-strong | cf-axis
    #[arg(long)]
    method: String,
    /// Also run the permutation-enumeration attribution oracle.
    #[arg(long)]
    oracle: bool,
    /// Minimum anchor precision for the greedy search.
    #[arg(long, default_value_t = 0.9)]
    min_precision: f64,
    /// Seed for the weak-counterfactual probe search.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RademacherArgs {
    /// Class specification (JSON).
    #[arg(long)]
    class: PathBuf,
    /// Constraint list (JSON array).
    #[arg(long)]
    constraints: PathBuf,
    /// Distribution document (JSON).
    #[arg(long)]
    dist: PathBuf,
    #[arg(short = 'n', long)]
    n: usize,
    #[arg(long, default_value_t = 200)]
    trials: usize,
    /// Master seed (required: all randomness flows from it).
    #[arg(long)]
    seed: u64,
    /// Conditioning event (JSON); switches to the conditional estimator.
    #[arg(long)]
    event: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GapArgs {
    #[arg(long)]
    class: PathBuf,
    /// Prediction-consistency constraints (JSON array).
    #[arg(long)]
    predict: PathBuf,
    /// Explanation-consistency constraints (JSON array, superset of predict).
    #[arg(long)]
    explain: PathBuf,
    #[arg(long)]
    dist: PathBuf,
    #[arg(short = 'n', long)]
    n: usize,
    #[arg(long, default_value_t = 200)]
    trials: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    event: Option<PathBuf>,
    /// Identifier recorded in the report and CSV row.
    #[arg(long, default_value = "adhoc")]
    scenario_id: String,
    #[arg(long)]
    out: Option<PathBuf>,
    /// CSV file to append the report row to (header written when new).
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Subcommand)]
enum ScenarioCommand {
    /// Run one scenario (or all of them) and report gap verdicts.
    Run(ScenarioRunArgs),
    /// List the registry with expected verdicts.
    List,
    /// Emit a gap-versus-n series as tab-separated values.
    PlotData(PlotDataArgs),
}

#[derive(Args)]
struct ScenarioRunArgs {
    /// Scenario identifier (omit with --all).
    id: Option<String>,
    /// Run every registered scenario.
    #[arg(long)]
    all: bool,
    /// Master seed (required: all randomness flows from it).
    #[arg(long)]
    seed: u64,
    /// Parameter overrides, repeatable: --set n=8 --set trials=50
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct PlotDataArgs {
    id: String,
    #[arg(long)]
    seed: u64,
    /// Comma-separated sample sizes for the series.
    #[arg(long, default_value = "2,3,4,6,8")]
    ns: String,
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum OracleCommand {
    /// Attribution by permutation enumeration versus the exact fast path.
    ShapPermutation(ShapOracleArgs),
    /// Dense opposite-label scan versus the certified minimal radius.
    CfScan(CfScanArgs),
    /// Discretized exhaustive search versus the grid linear program.
    GridSup(GridSupArgs),
}

#[derive(Args)]
struct ShapOracleArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    dist: PathBuf,
    #[arg(long)]
    point: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CfScanArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    point: String,
    /// Scan resolution (minimum 1e-3).
    #[arg(long, default_value_t = 1e-3)]
    resolution: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GridSupArgs {
    /// Class specification (JSON); must be the grid class.
    #[arg(long)]
    class: PathBuf,
    #[arg(long)]
    constraints: PathBuf,
    /// Labeled sample (JSON with points and labels).
    #[arg(long)]
    sample: PathBuf,
    /// Value-discretization step (minimum 1e-2).
    #[arg(long, default_value_t = 1e-2)]
    step: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum ModelsCommand {
    /// Check model-document invariants; violations include paths into the
    /// document.
    Validate(ModelsValidateArgs),
}

#[derive(Args)]
struct ModelsValidateArgs {
    #[arg(long)]
    model: PathBuf,
    /// Optional distribution whose support the model must cover.
    #[arg(long)]
    dist: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// Results CSV produced by `gap` or `scenario run`.
    #[arg(long)]
    csv: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = configure_workers(cli.workers) {
        return fail(&e);
    }
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(&e),
    }
}

fn fail(e: &Error) -> ExitCode {
    let body = json!({"error": {"kind": e.kind(), "message": e.to_string()}});
    eprintln!("{body}");
    ExitCode::FAILURE
}

fn configure_workers(flag: Option<usize>) -> Result<()> {
    let workers = match flag {
        Some(w) => Some(w),
        None => match std::env::var("XINFORM_WORKERS") {
            Ok(v) => Some(v.parse::<usize>().map_err(|_| {
                Error::InvalidInput(format!("XINFORM_WORKERS={v} is not a number"))
            })?),
            Err(_) => None,
        },
    };
    if let Some(w) = workers {
        if w == 0 {
            return Err(Error::InvalidInput("worker count must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build_global()
            .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))?;
    }
    Ok(())
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Explain(a) => cmd_explain(a),
        Command::Rademacher(a) => cmd_rademacher(a),
        Command::Gap(a) => cmd_gap(a),
        Command::Scenario(ScenarioCommand::Run(a)) => cmd_scenario_run(a),
        Command::Scenario(ScenarioCommand::List) => cmd_scenario_list(),
        Command::Scenario(ScenarioCommand::PlotData(a)) => cmd_plot_data(a),
        Command::Oracle(OracleCommand::ShapPermutation(a)) => cmd_oracle_shap(a),
        Command::Oracle(OracleCommand::CfScan(a)) => cmd_oracle_cf(a),
        Command::Oracle(OracleCommand::GridSup(a)) => cmd_oracle_grid(a),
        Command::Models(ModelsCommand::Validate(a)) => cmd_models_validate(a),
        Command::Report(a) => cmd_report(a),
    }
}

// ---------------------------------------------------------------------------
// I/O helpers
// ---------------------------------------------------------------------------

fn read_json<T: DeserializeOwned>(path: &Path, what: &str) -> Result<T> {
    let body = fs::read_to_string(path)
        .map_err(|e| Error::InvalidInput(format!("cannot read {what} {path:?}: {e}")))?;
    serde_json::from_str(&body)
        .map_err(|e| Error::InvalidInput(format!("cannot parse {what} {path:?}: {e}")))
}

fn parse_point(text: &str) -> Result<Point> {
    let coords: std::result::Result<Vec<f64>, _> =
        text.split(',').map(|t| t.trim().parse::<f64>()).collect();
    coords
        .map(Point)
        .map_err(|e| Error::InvalidInput(format!("cannot parse point {text:?}: {e}")))
}

/// Emit a JSON value to stdout and, when `out` is given, to a file with a run
/// manifest alongside.
fn emit_json(
    value: &serde_json::Value,
    out: Option<&Path>,
    command: &str,
    config: serde_json::Value,
    seed: Option<u64>,
) -> Result<()> {
    let pretty = serde_json::to_string_pretty(value)
        .map_err(|e| Error::InvalidInput(format!("serialization: {e}")))?;
    println!("{pretty}");
    if let Some(path) = out {
        fs::write(path, format!("{pretty}\n"))
            .map_err(|e| Error::InvalidInput(format!("cannot write {path:?}: {e}")))?;
        let mut manifest = RunManifest::start(command, config, seed);
        manifest.record_output(path)?;
        manifest.finish(path)?;
    }
    Ok(())
}

/// Append one CSV row, writing the header first when the file is new.
fn append_csv(path: &Path, header: &str, row: &str) -> Result<()> {
    let existing = fs::read_to_string(path).unwrap_or_default();
    let mut body = existing;
    if body.is_empty() {
        body.push_str(header);
        body.push('\n');
    }
    body.push_str(row);
    body.push('\n');
    fs::write(path, body).map_err(|e| Error::InvalidInput(format!("cannot write {path:?}: {e}")))
}

fn parse_overrides(set: &[String]) -> Result<BTreeMap<String, f64>> {
    let mut overrides = BTreeMap::new();
    for item in set {
        let (key, value) = item.split_once('=').ok_or_else(|| {
            Error::InvalidInput(format!("override {item:?} is not of the form key=value"))
        })?;
        let value: f64 = value.parse().map_err(|e| {
            Error::InvalidInput(format!("override {item:?} has a non-numeric value: {e}"))
        })?;
        overrides.insert(key.to_string(), value);
    }
    Ok(overrides)
}

// ---------------------------------------------------------------------------
// subcommands
// ---------------------------------------------------------------------------

fn cmd_explain(a: ExplainArgs) -> Result<()> {
    let model: FunctionModel = read_json(&a.model, "model")?;
    let x0 = parse_point(&a.point)?;
    let dist = a.dist.as_ref().map(|p| read_json::<Distribution>(p, "distribution")).transpose()?;
    let need_dist = || {
        dist.clone().ok_or_else(|| {
            Error::InvalidInput("this method needs --dist (a distribution document)".into())
        })
    };
    let explanation = match a.method.as_str() {
        "gradient" => gradient_explain(&model, &x0)?,
        "topgrad" => top_gradient_component(&model, &x0)?,
        "shap" => shap_explain(&model, &need_dist()?, &x0)?,
        "anchor" => grow_anchor(&model, &need_dist()?, &x0, a.min_precision)?,
        "cf-weak" => weak_counterfactual(&model, &x0, &model_domain(&model), a.seed)?,
        "cf-strong" => strong_counterfactual(&model, &x0)?,
        "cf-axis" => single_axis_counterfactual(&model, &x0)?.0,
        other => {
            return Err(Error::InvalidInput(format!(
                "unknown method {other:?}; expected gradient|topgrad|shap|anchor|cf-weak|cf-strong|cf-axis"
            )))
        }
    };
    let mut body = serde_json::to_value(&explanation)
        .map_err(|e| Error::InvalidInput(format!("serialization: {e}")))?;
    if let Explanation::Anchor { ref rule, .. } = explanation {
        let d = need_dist()?;
        let (coverage, precision) = anchor_metrics(&model, &d, rule, &x0)?;
        body["coverage"] = json!(coverage);
        body["verified_precision"] = json!(precision);
    }
    if a.oracle {
        let oracle = shap_permutation_oracle(&model, &need_dist()?, &x0)?;
        body["permutation_oracle"] = serde_json::to_value(&oracle)
            .map_err(|e| Error::InvalidInput(format!("serialization: {e}")))?;
    }
    let config = json!({"model": a.model, "point": a.point, "method": a.method});
    emit_json(&body, a.out.as_deref(), "explain", config, None)
}

fn cmd_rademacher(a: RademacherArgs) -> Result<()> {
    let class: ClassSpec = read_json(&a.class, "class specification")?;
    let constraints: Vec<Constraint> = read_json(&a.constraints, "constraints")?;
    let dist: Distribution = read_json(&a.dist, "distribution")?;
    let estimate = match &a.event {
        Some(path) => {
            let event: EventSpec = read_json(path, "event")?;
            conditional_rademacher(&class, &constraints, &dist, &event, a.trials, a.seed)?
        }
        None => empirical_rademacher(&class, &constraints, &dist, a.n, a.trials, a.seed)?,
    };
    let body = serde_json::to_value(&estimate)
        .map_err(|e| Error::InvalidInput(format!("serialization: {e}")))?;
    let config = json!({
        "class": a.class, "constraints": a.constraints, "dist": a.dist,
        "n": a.n, "trials": a.trials, "event": a.event,
    });
    emit_json(&body, a.out.as_deref(), "rademacher", config, Some(a.seed))
}

fn cmd_gap(a: GapArgs) -> Result<()> {
    let class: ClassSpec = read_json(&a.class, "class specification")?;
    let predict: Vec<Constraint> = read_json(&a.predict, "predict constraints")?;
    let explain: Vec<Constraint> = read_json(&a.explain, "explain constraints")?;
    let dist: Distribution = read_json(&a.dist, "distribution")?;
    let event = a.event.as_ref().map(|p| read_json::<EventSpec>(p, "event")).transpose()?;
    let report = gap_report(
        &a.scenario_id,
        &class,
        &predict,
        &explain,
        &dist,
        a.n,
        a.trials,
        a.seed,
        event.as_ref(),
    )?;
    if let Some(csv) = &a.csv {
        append_csv(csv, GAP_CSV_HEADER, &report.csv_row())?;
    }
    let body = serde_json::to_value(&report)
        .map_err(|e| Error::InvalidInput(format!("serialization: {e}")))?;
    let config = json!({
        "class": a.class, "predict": a.predict, "explain": a.explain, "dist": a.dist,
        "n": a.n, "trials": a.trials, "event": a.event, "scenario_id": a.scenario_id,
    });
    emit_json(&body, a.out.as_deref(), "gap", config, Some(a.seed))
}

fn scenario_csv(outcomes: &[ScenarioOutcome]) -> String {
    let mut csv = String::from(GAP_CSV_HEADER);
    csv.push('\n');
    let mut informative = 0usize;
    let mut non_informative = 0usize;
    let mut inconclusive = 0usize;
    let mut conforming = 0usize;
    for o in outcomes {
        csv.push_str(&o.headline.csv_row());
        csv.push('\n');
        match o.headline.verdict.as_str() {
            "informative" => informative += 1,
            "non-informative-consistent" => non_informative += 1,
            _ => inconclusive += 1,
        }
        if o.conforms {
            conforming += 1;
        }
    }
    csv.push_str(&format!(
        "# summary: scenarios={} conforming={} informative={} non-informative-consistent={} inconclusive={}\n",
        outcomes.len(),
        conforming,
        informative,
        non_informative,
        inconclusive
    ));
    csv
}

fn cmd_scenario_run(a: ScenarioRunArgs) -> Result<()> {
    let mut overrides = parse_overrides(&a.set)?;
    overrides.insert("seed".into(), a.seed as f64);
    if a.all == a.id.is_some() {
        return Err(Error::InvalidInput(
            "pass exactly one of a scenario id or --all".into(),
        ));
    }
    let ids: Vec<&str> = if a.all {
        list_scenarios().iter().map(|e| e.id).collect()
    } else {
        let id = a.id.as_deref().unwrap();
        find_scenario(id)?; // fail fast on unknown ids
        vec![id]
    };
    // scenarios are independent; run them in parallel but aggregate in
    // registry order so outputs are scheduling-invariant
    use rayon::prelude::*;
    let outcomes: Result<Vec<ScenarioOutcome>> = ids
        .par_iter()
        .map(|id| {
            let cfg = ScenarioConfig {
                id: id.to_string(),
                overrides: overrides.clone(),
                ..Default::default()
            };
            run_scenario(&cfg)
        })
        .collect();
    let outcomes = outcomes?;
    if let Some(csv) = &a.csv {
        if a.all {
            fs::write(csv, scenario_csv(&outcomes))
                .map_err(|e| Error::InvalidInput(format!("cannot write {csv:?}: {e}")))?;
        } else {
            append_csv(csv, GAP_CSV_HEADER, &outcomes[0].headline.csv_row())?;
        }
    }
    let body = if a.all {
        serde_json::to_value(&outcomes)
    } else {
        serde_json::to_value(&outcomes[0])
    }
    .map_err(|e| Error::InvalidInput(format!("serialization: {e}")))?;
    let config = json!({"id": a.id, "all": a.all, "set": a.set});
    let primary = a.out.clone().or_else(|| a.csv.clone());
    emit_json(&body, a.out.as_deref(), "scenario run", config.clone(), Some(a.seed))?;
    // a CSV-only run still gets a manifest, alongside the CSV
    if a.out.is_none() {
        if let Some(csv) = primary {
            let mut manifest = RunManifest::start("scenario run", config, Some(a.seed));
            manifest.record_output(&csv)?;
            manifest.finish(&csv)?;
        }
    } else if let Some(csv) = &a.csv {
        let mut manifest = RunManifest::start("scenario run", config, Some(a.seed));
        manifest.record_output(csv)?;
        manifest.finish(csv)?;
    }
    Ok(())
}

fn cmd_scenario_list() -> Result<()> {
    let body = serde_json::to_value(list_scenarios())
        .map_err(|e| Error::InvalidInput(format!("serialization: {e}")))?;
    println!(
        "{}",
        serde_json::to_string_pretty(&body)
            .map_err(|e| Error::InvalidInput(format!("serialization: {e}")))?
    );
    Ok(())
}

fn cmd_plot_data(a: PlotDataArgs) -> Result<()> {
    let mut overrides = parse_overrides(&a.set)?;
    overrides.insert("seed".into(), a.seed as f64);
    let ns: std::result::Result<Vec<usize>, _> =
        a.ns.split(',').map(|t| t.trim().parse::<usize>()).collect();
    let ns = ns.map_err(|e| Error::InvalidInput(format!("cannot parse --ns {:?}: {e}", a.ns)))?;
    let cfg = ScenarioConfig { id: a.id.clone(), overrides, ..Default::default() };
    let tsv = plot_data(&cfg, &ns)?;
    print!("{tsv}");
    if let Some(path) = &a.out {
        fs::write(path, &tsv)
            .map_err(|e| Error::InvalidInput(format!("cannot write {path:?}: {e}")))?;
        let config = json!({"id": a.id, "ns": a.ns, "set": a.set});
        let mut manifest = RunManifest::start("scenario plot-data", config, Some(a.seed));
        manifest.record_output(path)?;
        manifest.finish(path)?;
    }
    Ok(())
}

fn cmd_oracle_shap(a: ShapOracleArgs) -> Result<()> {
    let model: FunctionModel = read_json(&a.model, "model")?;
    let dist: Distribution = read_json(&a.dist, "distribution")?;
    let x0 = parse_point(&a.point)?;
    let cmp = xinform::oracles::compare_shap(&model, &dist, &x0)?;
    let fast = shap_explain(&model, &dist, &x0)?;
    let oracle = shap_permutation_oracle(&model, &dist, &x0)?;
    let body = json!({
        "comparison": cmp,
        "fast": fast,
        "oracle": oracle,
    });
    let config = json!({"model": a.model, "dist": a.dist, "point": a.point});
    emit_json(&body, a.out.as_deref(), "oracle shap-permutation", config, None)
}

fn cmd_oracle_cf(a: CfScanArgs) -> Result<()> {
    let model: FunctionModel = read_json(&a.model, "model")?;
    let x0 = parse_point(&a.point)?;
    let cmp = compare_strong_counterfactual(&model, &x0, a.resolution)?;
    let body = serde_json::to_value(&cmp)
        .map_err(|e| Error::InvalidInput(format!("serialization: {e}")))?;
    let config = json!({"model": a.model, "point": a.point, "resolution": a.resolution});
    emit_json(&body, a.out.as_deref(), "oracle cf-scan", config, None)
}

fn cmd_oracle_grid(a: GridSupArgs) -> Result<()> {
    let class: ClassSpec = read_json(&a.class, "class specification")?;
    let ClassSpec::Grid { grid } = class else {
        return Err(Error::Unsupported("the grid-sup oracle needs the grid class".into()));
    };
    let constraints: Vec<Constraint> = read_json(&a.constraints, "constraints")?;
    let sample: LabeledSample = read_json(&a.sample, "sample")?;
    let cmp = compare_grid_sup(&grid, &constraints, &sample, a.step)?;
    let body = serde_json::to_value(&cmp)
        .map_err(|e| Error::InvalidInput(format!("serialization: {e}")))?;
    let config = json!({
        "class": a.class, "constraints": a.constraints, "sample": a.sample, "step": a.step,
    });
    emit_json(&body, a.out.as_deref(), "oracle grid-sup", config, None)
}

fn cmd_models_validate(a: ModelsValidateArgs) -> Result<()> {
    let model: FunctionModel = read_json(&a.model, "model")?;
    let dist = a.dist.as_ref().map(|p| read_json::<Distribution>(p, "distribution")).transpose()?;
    let problems = model.validate(dist.as_ref().map(|d| d.support()));
    let body = json!({"valid": problems.is_empty(), "problems": problems});
    println!(
        "{}",
        serde_json::to_string_pretty(&body)
            .map_err(|e| Error::InvalidInput(format!("serialization: {e}")))?
    );
    if problems.is_empty() {
        Ok(())
    } else {
        Err(Error::InvalidModel(format!("{} invariant violation(s)", problems.len())))
    }
}

fn cmd_report(a: ReportArgs) -> Result<()> {
    let body = fs::read_to_string(&a.csv)
        .map_err(|e| Error::InvalidInput(format!("cannot read {:?}: {e}", a.csv)))?;
    let mut rows = 0usize;
    let mut verdicts: BTreeMap<String, usize> = BTreeMap::new();
    let mut nonconforming: Vec<String> = Vec::new();
    for line in body.lines() {
        if line.is_empty() || line.starts_with('#') || line.starts_with("scenario_id,") {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() < 14 {
            return Err(Error::InvalidInput(format!("malformed CSV row: {line:?}")));
        }
        rows += 1;
        let (id, verdict) = (fields[0], fields[12]);
        *verdicts.entry(verdict.to_string()).or_insert(0) += 1;
        if let Ok(entry) = find_scenario(id) {
            let ok = match entry.expected.as_str() {
                "informative" => verdict == "informative",
                _ => verdict == "non-informative-consistent",
            };
            if !ok {
                nonconforming.push(format!("{id}: expected {}, got {verdict}", entry.expected.as_str()));
            }
        }
    }
    let summary = json!({
        "rows": rows,
        "verdicts": verdicts,
        "nonconforming": nonconforming,
    });
    let config = json!({"csv": a.csv});
    emit_json(&summary, a.out.as_deref(), "report", config, None)
}

//! `adaconc` command-line entry point.
//!
//! Exit codes: 0 success, 1 invalid input or arguments, 2 I/O failure.

use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use adaconc::bounds::{posi_intervals, BoundParams, BoundVariant, POSI_LABEL};
use adaconc::gac::{train_forest, GacConfig, DEFAULT_MAX_ATTEMPTS};
use adaconc::io::{forest_doc, forest_from_doc, load_csv, load_feature_rows, to_json_string, ModelDoc};
use adaconc::rects::{
    approximate, cardinality_bound, counter_tuple_count, family_size, union_family_log_size, ApproxFamilyParams,
};
use adaconc::sims::{
    concentration_experiment, consistency_experiment, lowerbound_experiment, mgf_check, noise_split_audit, AuditSpec,
    ConcentrationSpec, ConsistencyKind, ConsistencySpec, ExperimentReport, LowerBoundSpec,
};
use adaconc::geometry::Rectangle;
use adaconc::Error;
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

#[derive(Debug, Parser, Serialize)]
#[command(name = "adaconc", version, about = "Valid-partition trees, guess-and-check forests and their concentration bounds")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "snake_case")]
enum Command {
    /// Train a guess-and-check forest on a CSV dataset.
    Fit(FitArgs),
    /// Predict with a saved model.
    Predict(PredictArgs),
    /// Leaf means with the uniform concentration envelope.
    Posi(PosiArgs),
    /// Approximating rectangle families.
    #[command(subcommand)]
    Rects(RectsCommand),
    /// Verification experiments.
    #[command(subcommand)]
    Sim(SimCommand),
}

#[derive(Debug, Args, Serialize)]
struct FitArgs {
    #[arg(long)]
    csv: PathBuf,
    #[arg(long)]
    k: usize,
    #[arg(long)]
    alpha: f64,
    /// Response bound; defaults to max |y|.
    #[arg(long = "M")]
    m: Option<f64>,
    #[arg(long = "B", default_value_t = 100)]
    b: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Replace each feature column by its normalized ranks.
    #[arg(long)]
    rank_transform: bool,
    #[arg(long, default_value_t = DEFAULT_MAX_ATTEMPTS)]
    max_attempts: usize,
    #[arg(long, default_value_t = 1.0)]
    zeta: f64,
}

#[derive(Debug, Args, Serialize)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    csv: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct PosiArgs {
    #[arg(long)]
    model: PathBuf,
    /// Defaults to the training size stored in the model.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long = "M")]
    m: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    zeta: f64,
    #[arg(long, default_value = "simplified", value_parser = ["simplified", "full"])]
    bound: String,
    /// CSV output (standard output when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the report as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "snake_case")]
enum RectsCommand {
    /// Count the family on the first `s` axes and compare with the bound.
    Build(RectsBuildArgs),
    /// Inner and outer approximants of a rectangle read from JSON.
    Approx(RectsApproxArgs),
}

#[derive(Debug, Args, Serialize)]
struct RectsBuildArgs {
    #[arg(long)]
    s: usize,
    #[arg(long)]
    w: f64,
    #[arg(long)]
    eps: f64,
    /// Ambient dimension for the union over axis subsets.
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct RectsApproxArgs {
    /// JSON file `{"lo": [...], "hi": [...]}`; standard input when omitted.
    #[arg(long)]
    rect: Option<PathBuf>,
    #[arg(long)]
    w: f64,
    #[arg(long)]
    eps: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "snake_case")]
enum SimCommand {
    /// Envelope coverage over random valid trees
    Concentration(ConcentrationArgs),
    /// Maximal leaf statistic on pure noise against the envelope
    Lowerbound(LowerboundArgs),
    /// Sub-Gaussian constant of the absolute Gaussian, Monte Carlo against exact
    Mgf(MgfArgs),
    /// How often noise-only axes unlock under guess-and-check
    Audit(AuditArgs),
    /// Sup-norm and L2 error of forests as n grows
    Consistency(ConsistencyArgs),
}

#[derive(Debug, Args, Serialize)]
struct ReportArgs {
    /// Report destination (standard output when omitted).
    #[arg(long)]
    json: Option<PathBuf>,
    /// Summary table destination.
    #[arg(long)]
    summary: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args, Serialize)]
struct ConcentrationArgs {
    #[command(flatten)]
    report: ReportArgs,
    #[arg(long, default_value_t = 2000)]
    n: usize,
    #[arg(long, default_value_t = 50)]
    d: usize,
    #[arg(long, default_value_t = 150)]
    k: usize,
    #[arg(long, default_value_t = 0.25)]
    alpha: f64,
    #[arg(long = "M", default_value_t = 1.0)]
    m: f64,
    #[arg(long, default_value_t = 100)]
    reps: usize,
    #[arg(long, default_value_t = 50)]
    random_trees: usize,
}

#[derive(Debug, Args, Serialize)]
struct LowerboundArgs {
    #[command(flatten)]
    report: ReportArgs,
    #[arg(long, default_value_t = 20_000)]
    n: usize,
    /// `d = floor(n^r)`.
    #[arg(long, default_value_t = 0.6)]
    r: f64,
    #[arg(long, default_value_t = 0.2)]
    alpha: f64,
    #[arg(long)]
    s_override: Option<usize>,
    #[arg(long, default_value_t = 20_000)]
    n_max: usize,
    #[arg(long = "M", default_value_t = 1.0)]
    m: f64,
    #[arg(long, default_value_t = 20)]
    reps: usize,
}

#[derive(Debug, Args, Serialize)]
struct MgfArgs {
    #[command(flatten)]
    report: ReportArgs,
    #[arg(long, value_delimiter = ',', default_values_t = [0.1, 0.3, 0.5])]
    t: Vec<f64>,
    /// Monte Carlo samples per `t`.
    #[arg(long, default_value_t = 1_000_000)]
    reps: usize,
}

#[derive(Debug, Args, Serialize)]
struct AuditArgs {
    #[command(flatten)]
    report: ReportArgs,
    #[arg(long, default_value_t = 5000)]
    n: usize,
    #[arg(long, default_value_t = 100)]
    d: usize,
    #[arg(long, default_value_t = 2)]
    q: usize,
    #[arg(long, default_value_t = 300)]
    k: usize,
    #[arg(long, default_value_t = 0.25)]
    alpha: f64,
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
    #[arg(long = "M", default_value_t = 2.0)]
    m: f64,
    #[arg(long = "B", default_value_t = 50)]
    b: usize,
    /// Number of independent datasets.
    #[arg(long, default_value_t = 20)]
    reps: usize,
    /// Diagnostic: replace the bound-derived split threshold.
    #[arg(long)]
    threshold_override: Option<f64>,
}

#[derive(Debug, Args, Serialize)]
struct ConsistencyArgs {
    #[command(flatten)]
    report: ReportArgs,
    #[arg(long, default_value = "uniform", value_parser = ["uniform", "l2"])]
    kind: String,
    /// Sample sizes, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = [2000, 8000, 32000])]
    n: Vec<usize>,
    #[arg(long, default_value_t = 20)]
    d: usize,
    #[arg(long, default_value_t = 2)]
    q: usize,
    #[arg(long, default_value_t = 0.25)]
    beta: f64,
    #[arg(long = "M", default_value_t = 1.0)]
    m: f64,
    #[arg(long = "B", default_value_t = 10)]
    b: usize,
    #[arg(long, default_value_t = 10)]
    reps: usize,
    #[arg(long)]
    threshold_override: Option<f64>,
}

#[derive(Debug, Deserialize)]
struct RectInput {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error: cannot configure {t} threads: {e}");
            return ExitCode::from(1);
        }
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_io() { 2 } else { 1 })
        }
    }
}

fn config_of(cli: &Cli) -> Value {
    serde_json::to_value(cli).expect("arguments serialize")
}

fn emit(path: Option<&Path>, text: &str) -> Result<(), Error> {
    match path {
        Some(p) => fs::write(p, text)?,
        None => io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<(), Error> {
    let config = config_of(cli);
    match &cli.command {
        Command::Fit(a) => fit(a, config),
        Command::Predict(a) => predict(a),
        Command::Posi(a) => posi(a, config),
        Command::Rects(RectsCommand::Build(a)) => rects_build(a, config),
        Command::Rects(RectsCommand::Approx(a)) => rects_approx(a, config),
        Command::Sim(s) => sim(s, config),
    }
}

fn fit(a: &FitArgs, config: Value) -> Result<(), Error> {
    let data = load_csv(&a.csv, a.rank_transform, a.m)?;
    let mut cfg = GacConfig::new(a.k, a.alpha, data.m(), a.b, a.seed)?;
    cfg.max_attempts_per_node = a.max_attempts;
    cfg.zeta = a.zeta;
    cfg.check()?;
    let forest = train_forest(&data, &cfg)?;
    let config = json!({ "cli": config, "resolved": { "M": data.m(), "n": data.n(), "d": data.d() } });
    fs::write(&a.out, to_json_string(&forest_doc(&forest, config))?)?;
    Ok(())
}

fn read_model(path: &Path) -> Result<ModelDoc, Error> {
    let doc: ModelDoc = serde_json::from_str(&fs::read_to_string(path)?)?;
    Ok(doc)
}

fn predict(a: &PredictArgs) -> Result<(), Error> {
    let doc = read_model(&a.model)?;
    let forest = forest_from_doc(&doc)?;
    if doc.config.pointer("/cli/command/fit/rank_transform") == Some(&Value::Bool(true)) {
        eprintln!("warning: model was trained on rank-transformed features; inputs are used as given");
    }
    let rows = load_feature_rows(&a.csv)?;
    if let Some(r) = rows.iter().find(|r| r.len() != doc.header.d) {
        return Err(Error::DimensionMismatch {
            expected: doc.header.d,
            got: r.len(),
        });
    }
    let mut out = String::from("prediction\n");
    for p in forest.predict_many(&rows) {
        out.push_str(&format!("{p:.16e}\n"));
    }
    fs::write(&a.out, out)?;
    Ok(())
}

fn posi(a: &PosiArgs, config: Value) -> Result<(), Error> {
    let doc = read_model(&a.model)?;
    let forest = forest_from_doc(&doc)?;
    let h = &doc.header;
    let p = BoundParams::new(
        a.n.unwrap_or(h.n),
        a.d.unwrap_or(h.d),
        a.k.unwrap_or(h.k),
        a.alpha.unwrap_or(h.alpha),
        a.m.unwrap_or(h.m),
        a.zeta,
    )?;
    let variant: BoundVariant = a.bound.parse()?;
    let many = forest.len() > 1;
    let mut csv = String::from("leaf_id,count,mean,half_width,lower,upper,excludes_zero\n");
    let mut leaves = Vec::new();
    let mut warnings = Vec::new();
    let mut half_width = variant.half_width(&p);
    for (t, tree) in forest.trees().iter().enumerate() {
        let report = posi_intervals(tree, &p, variant)?;
        half_width = report.half_width;
        warnings = report.warnings;
        for l in report.leaves {
            let id = if many { format!("{t}:{}", l.leaf_id) } else { l.leaf_id.to_string() };
            csv.push_str(&format!(
                "{id},{},{:.16e},{:.16e},{:.16e},{:.16e},{}\n",
                l.count, l.mean, l.half_width, l.lower, l.upper, l.excludes_zero
            ));
            leaves.push(json!({ "tree": t, "leaf": l }));
        }
    }
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    emit(a.out.as_deref(), &csv)?;
    if let Some(path) = &a.json {
        let report = json!({
            "config": config,
            "label": POSI_LABEL,
            "variant": variant,
            "params": p,
            "half_width": half_width,
            "leaves": leaves,
            "warnings": warnings,
        });
        fs::write(path, to_json_string(&report)?)?;
    }
    Ok(())
}

fn rects_build(a: &RectsBuildArgs, config: Value) -> Result<(), Error> {
    let p = ApproxFamilyParams::leading(a.s, a.w, a.eps)?;
    let count = family_size(&p, true);
    let bound = cardinality_bound(a.s, a.w, a.eps);
    let mut out = json!({
        "config": config,
        "s": a.s,
        "w": a.w,
        "eps": a.eps,
        "count": count as f64,
        "count_exact": count.to_string(),
        "counter_tuples": counter_tuple_count(&p).to_string(),
        "bound": bound,
        "ratio": count as f64 / bound,
    });
    if let Some(d) = a.d {
        out["d"] = json!(d);
        out["union_log_size_bound"] = json!(union_family_log_size(a.s, a.w, a.eps, d)?);
    }
    emit(a.out.as_deref(), &to_json_string(&out)?)
}

fn rects_approx(a: &RectsApproxArgs, config: Value) -> Result<(), Error> {
    let text = match &a.rect {
        Some(p) => fs::read_to_string(p)?,
        None => {
            let mut s = String::new();
            io::stdin().read_to_string(&mut s)?;
            s
        }
    };
    let input: RectInput = serde_json::from_str(&text)?;
    let r = Rectangle::new(input.lo, input.hi)?;
    let support = r.support();
    if support.is_empty() {
        return Err(Error::InvalidRectangle("rectangle is the whole cube; nothing to approximate".into()));
    }
    let p = ApproxFamilyParams::new(support, a.w, a.eps)?;
    let approx = approximate(&r, &p)?;
    let out = json!({
        "config": config,
        "rectangle": r,
        "volume": r.volume(),
        "inner": approx.inner,
        "inner_volume": approx.inner.volume(),
        "outer": approx.outer,
        "outer_volume": approx.outer.volume(),
        "inner_counters": approx.inner_counters,
        "outer_counters": approx.outer_counters,
        "method": approx.method,
    });
    emit(a.out.as_deref(), &to_json_string(&out)?)
}

fn sim(s: &SimCommand, config: Value) -> Result<(), Error> {
    let (report, args): (ExperimentReport, &ReportArgs) = match s {
        SimCommand::Concentration(a) => {
            let mut spec = ConcentrationSpec::new(a.n, a.d, a.k, a.alpha, a.m, a.reps);
            spec.n_random_trees = a.random_trees;
            (concentration_experiment(&spec, a.report.seed)?, &a.report)
        }
        SimCommand::Lowerbound(a) => {
            let mut spec = LowerBoundSpec::new(a.n, a.r, a.alpha);
            spec.s_override = a.s_override;
            spec.n_max = a.n_max;
            spec.m = a.m;
            spec.n_reps = a.reps;
            (lowerbound_experiment(&spec, a.report.seed)?, &a.report)
        }
        SimCommand::Mgf(a) => (mgf_check(&a.t, a.reps, a.report.seed)?, &a.report),
        SimCommand::Audit(a) => {
            let mut spec = AuditSpec::new(a.n, a.d, a.q, a.k, a.alpha, a.m, a.beta, a.b, a.reps);
            spec.threshold_override = a.threshold_override;
            (noise_split_audit(&spec, a.report.seed)?, &a.report)
        }
        SimCommand::Consistency(a) => {
            let kind: ConsistencyKind = a.kind.parse()?;
            let mut spec = ConsistencySpec::new(kind, a.n.clone(), a.q);
            spec.d = a.d;
            spec.beta = a.beta;
            spec.m = a.m;
            spec.b = a.b;
            spec.n_seeds = a.reps;
            spec.threshold_override = a.threshold_override;
            (consistency_experiment(&spec, a.report.seed)?, &a.report)
        }
    };
    for c in &report.checks {
        eprintln!(
            "{} {}: observed {} {} {}",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.observed,
            c.relation,
            c.required
        );
    }
    for n in &report.notes {
        eprintln!("note: {n}");
    }
    let mut doc = serde_json::to_value(&report)?;
    doc["config"] = config;
    emit(args.json.as_deref(), &to_json_string(&doc)?)?;
    if let Some(p) = &args.summary {
        fs::write(p, report.summary_csv()?)?;
    }
    Ok(())
}

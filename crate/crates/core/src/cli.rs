//! Command-line front end: argument parsing, dispatch and report rendering.
//!
//! Exit codes: 0 on success, 2 for usage, configuration and I/O problems,
//! 3 for malformed input data (schema and parse errors), 1 otherwise.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use crate::cc::{cc_test_equal, cc_test_zero, CorrelationEstimate, QuantilePair};
use crate::cpc::{cpc_test_equal, cpc_test_zero, ConditioningDesign};
use crate::dataio::{ih_outlier_report, load_csv, load_table, Dataset};
use crate::empirical::KernelConfig;
use crate::error::{Error, Result};
use crate::evaluation::{prediction_error, PeOptions};
use crate::screening::{baseline_screeners, screen, Baseline, CaseMode, ScreeningConfig, ScreeningResult, ThresholdMode};
use crate::simbench::{run_screening_study, run_test_study, ErrorDist, Example, SimulationSpec, StudyMethod};

/// Output schema version for JSON reports.
pub const SCHEMA_VERSION: u32 = 1;

/// Environment variable overriding the worker thread count.
pub const THREADS_ENV: &str = "COPULA_SCREEN_THREADS";

#[derive(Debug, Parser)]
#[command(name = "copula-screen", version, about = "Copula-based correlation screening and tests")]
pub struct Cli {
    /// Worker threads (default: available cores; the environment variable
    /// COPULA_SCREEN_THREADS takes precedence).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[arg(long, value_enum, default_value = "table", global = true)]
    pub format: Format,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Table,
    Csv,
    Json,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Rank covariates by marginal or conditional copula correlation.
    Screen(ScreenArgs),
    /// Test zero correlation of one covariate, or equal correlation of two.
    Test(TestArgs),
    /// Run a simulation study for a built-in design.
    Simulate(SimulateArgs),
    /// Robust z-score outlier summary per column.
    Outliers(OutlierArgs),
    /// Prediction error of fits on the top screened covariates.
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Cc,
    CpcCase1,
    CpcCase2,
    CpcCase3,
    Pearson,
    Kendall,
}

impl Method {
    fn study_method(self, cfg: ScreeningConfig) -> StudyMethod {
        match self {
            Method::Pearson => StudyMethod::Baseline { method: Baseline::PearsonSis },
            Method::Kendall => StudyMethod::Baseline { method: Baseline::KendallSis },
            _ => StudyMethod::Screen(ScreeningConfig { case_mode: self.case_mode(), ..cfg }),
        }
    }

    fn case_mode(self) -> CaseMode {
        match self {
            Method::CpcCase1 => CaseMode::CpcCase1,
            Method::CpcCase2 => CaseMode::CpcCase2,
            Method::CpcCase3 => CaseMode::CpcCase3,
            _ => CaseMode::MarginalCc,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct DataArgs {
    /// Input CSV with a header row.
    #[arg(long)]
    pub data: PathBuf,
    /// Name of the response column.
    #[arg(long)]
    pub response: String,
    /// Comma-separated conditioning columns (excluded from the covariates).
    #[arg(long, value_delimiter = ',')]
    pub conditioning: Vec<String>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ScreenOptions {
    #[arg(long, value_enum, default_value = "cc")]
    pub method: Method,
    #[arg(long, default_value_t = 0.5)]
    pub tau: f64,
    #[arg(long, default_value_t = 0.5)]
    pub iota: f64,
    /// Model size d_n (default floor(n / ln n)).
    #[arg(long)]
    pub top: Option<usize>,
    /// `top`, `absolute:<level>` or `fdr:<expected false positives>`.
    #[arg(long, default_value = "top")]
    pub threshold: String,
    /// Confounder set size for the iterative conditional methods.
    #[arg(long, default_value_t = 3)]
    pub ell: usize,
}

impl ScreenOptions {
    fn config(&self) -> Result<ScreeningConfig> {
        let threshold_mode = parse_threshold(&self.threshold)?;
        let cfg = ScreeningConfig {
            pair: QuantilePair::new(self.tau, self.iota).map_err(|e| Error::Config(e.to_string()))?,
            d_n: self.top,
            threshold_mode,
            case_mode: self.method.case_mode(),
            ell: self.ell,
            kernel: KernelConfig::default(),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

fn parse_threshold(s: &str) -> Result<ThresholdMode> {
    let number = |v: &str| v.parse::<f64>().map_err(|_| Error::Config(format!("bad threshold value '{v}'")));
    match s.split_once(':') {
        None if s == "top" => Ok(ThresholdMode::TopDn),
        Some(("absolute", v)) => Ok(ThresholdMode::Absolute(number(v)?)),
        Some(("fdr", v)) => Ok(ThresholdMode::Fdr(number(v)?)),
        _ => Err(Error::Config(format!("unknown threshold '{s}'"))),
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ScreenArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub screen: ScreenOptions,
    /// Also write the full ranking as CSV to this file.
    #[arg(long)]
    pub ranking_out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TestArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Covariate to test.
    #[arg(long)]
    pub x1: String,
    /// Second covariate; switches to the test of equal correlation.
    #[arg(long)]
    pub x2: Option<String>,
    #[arg(long, default_value_t = 0.5)]
    pub tau: f64,
    #[arg(long, default_value_t = 0.5)]
    pub iota: f64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SimulateArgs {
    #[arg(long, value_parser = parse_example)]
    pub example: Example,
    #[arg(long, default_value_t = 200)]
    pub n: usize,
    #[arg(long, default_value_t = 1000)]
    pub p: usize,
    #[arg(long, default_value_t = 0.5)]
    pub rho: f64,
    #[arg(long, default_value_t = 0.0)]
    pub c0: f64,
    #[arg(long, value_parser = parse_error_dist, default_value = "normal")]
    pub error: ErrorDist,
    /// Quantile levels as `tau,iota`.
    #[arg(long, default_value = "0.5,0.5")]
    pub pair: String,
    #[arg(long, default_value_t = 100)]
    pub reps: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Screening methods for screening designs.
    #[arg(long, value_enum, value_delimiter = ',', default_value = "cc")]
    pub methods: Vec<Method>,
    /// Model size d_n for the screening methods.
    #[arg(long)]
    pub top: Option<usize>,
    #[arg(long, default_value_t = 3)]
    pub ell: usize,
    /// Significance level for testing designs.
    #[arg(long, default_value_t = 0.05)]
    pub level: f64,
    /// Write `<prefix>_summary.csv` and `<prefix>_reps.csv`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn parse_example(s: &str) -> std::result::Result<Example, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_error_dist(s: &str) -> std::result::Result<ErrorDist, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct OutlierArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Columns to skip, such as the response.
    #[arg(long, value_delimiter = ',')]
    pub exclude: Vec<String>,
    /// Flag only large positive scores.
    #[arg(long)]
    pub one_sided: bool,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub screen: ScreenOptions,
    /// Use these covariates instead of screening.
    #[arg(long, value_delimiter = ',')]
    pub columns: Vec<String>,
    #[arg(long, default_value_t = 500)]
    pub partitions: usize,
    #[arg(long, default_value_t = 0.8)]
    pub ratio: f64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

/// Map an error to the process exit code.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Io(_) | Error::Config(_) => 2,
        Error::Schema(_) | Error::Parse { .. } => 3,
        _ => 1,
    }
}

/// Resolve the thread count: environment first, then the flag.
pub fn resolve_threads(flag: Option<usize>) -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&t| t > 0)
            .map(Some)
            .ok_or_else(|| Error::Config(format!("{THREADS_ENV} must be a positive integer, got '{v}'"))),
        Err(_) => Ok(flag),
    }
}

/// Parse arguments, run the command, print the report. Returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            // Help and version output go to stdout and exit 0.
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(out) => {
            print!("{out}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

/// Run a parsed command and return the rendered report.
pub fn run(cli: &Cli) -> Result<String> {
    if let Some(t) = resolve_threads(cli.threads)? {
        // A second initialisation in the same process is harmless.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    match &cli.command {
        Command::Screen(a) => cmd_screen(a, cli.format),
        Command::Test(a) => cmd_test(a, cli.format),
        Command::Simulate(a) => cmd_simulate(a, cli.format),
        Command::Outliers(a) => cmd_outliers(a, cli.format),
        Command::Evaluate(a) => cmd_evaluate(a, cli.format),
    }
}

fn load(args: &DataArgs) -> Result<Dataset> {
    if !args.data.exists() {
        return Err(Error::Io(format!("{}: file not found", args.data.display())));
    }
    load_csv(&args.data, &args.response, &args.conditioning)
}

fn config_json(command: &str, args: &impl Serialize, extra: serde_json::Value) -> serde_json::Value {
    json!({ "schema": SCHEMA_VERSION, "command": command, "args": args, "resolved": extra })
}

/// Header line for table and CSV output carrying the resolved configuration.
fn header_line(config: &serde_json::Value) -> String {
    format!("# {config}\n")
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |v| v.to_string())
}

fn w_refs(ds: &Dataset) -> Vec<&[f64]> {
    ds.w.as_ref().map_or(Vec::new(), |w| (0..w.ncols()).map(|k| &w.as_slice()[k * ds.n()..(k + 1) * ds.n()]).collect())
}

fn run_screen(ds: &Dataset, opts: &ScreenOptions) -> Result<(ScreeningConfig, ScreeningResult)> {
    let cfg = opts.config()?;
    let result = match opts.method {
        Method::Pearson => baseline_screeners(&ds.y, &ds.x, Baseline::PearsonSis, cfg.resolved_d_n(ds.n()))?,
        Method::Kendall => baseline_screeners(&ds.y, &ds.x, Baseline::KendallSis, cfg.resolved_d_n(ds.n()))?,
        _ => screen(&ds.y, &ds.x, ds.w.as_ref(), &cfg)?,
    };
    Ok((cfg, result))
}

/// Inference for a selected covariate under the design it was screened with.
fn selected_inference(
    ds: &Dataset,
    method: Method,
    cfg: &ScreeningConfig,
    result: &ScreeningResult,
    j: usize,
) -> Option<CorrelationEstimate> {
    let kernel = KernelConfig::default();
    let x = ds.x.column(j);
    let design = |covs: &[usize]| {
        let cols: Vec<(usize, &[f64])> = covs.iter().map(|&k| (k, &ds.x.as_slice()[k * ds.n()..(k + 1) * ds.n()])).collect();
        ConditioningDesign::from_columns(ds.n(), &w_refs(ds), &cols)
    };
    match method {
        Method::Cc => cc_test_zero(&ds.y, x.as_slice(), cfg.pair, &kernel).ok(),
        Method::CpcCase2 => cpc_test_zero(&ds.y, x.as_slice(), &design(&[]).ok()?, cfg.pair, &kernel).ok().map(|e| e.estimate),
        Method::CpcCase1 | Method::CpcCase3 => {
            let rec = result.per_step_log.iter().find(|r| r.chosen_index == j)?;
            let d = design(&rec.conditional_set).ok()?;
            cpc_test_zero(&ds.y, x.as_slice(), &d, cfg.pair, &kernel).ok().map(|e| e.estimate)
        }
        Method::Pearson | Method::Kendall => None,
    }
}

fn ranking_csv(ds: &Dataset, result: &ScreeningResult) -> String {
    let mut out = String::from("rank,index,name,utility\n");
    for (r, &j) in result.ranking.iter().enumerate() {
        writeln!(out, "{},{},{},{}", r + 1, j + 1, csv_field(&ds.x_names[j]), result.utilities[j]).expect("writing to a String");
    }
    out
}

fn cmd_screen(a: &ScreenArgs, format: Format) -> Result<String> {
    let ds = load(&a.data)?;
    let (cfg, result) = run_screen(&ds, &a.screen)?;
    if let Some(path) = &a.ranking_out {
        std::fs::write(path, ranking_csv(&ds, &result)).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    }
    let config = config_json(
        "screen",
        a,
        json!({ "n": ds.n(), "p": ds.p(), "r": ds.r(), "dropped_rows": ds.dropped_rows, "screening": cfg }),
    );
    let rows: Vec<(usize, Option<CorrelationEstimate>)> =
        result.selected.iter().map(|&j| (j, selected_inference(&ds, a.screen.method, &cfg, &result, j))).collect();

    Ok(match format {
        Format::Json => {
            let selected: Vec<_> = rows
                .iter()
                .enumerate()
                .map(|(r, (j, est))| {
                    json!({
                        "rank": r + 1, "index": j + 1, "name": ds.x_names[*j], "utility": result.utilities[*j],
                        "z_stat": est.as_ref().and_then(|e| e.z_stat), "p_value": est.as_ref().and_then(|e| e.p_value),
                    })
                })
                .collect();
            let log: Vec<_> = result
                .per_step_log
                .iter()
                .map(|s| {
                    json!({
                        "iteration": s.iteration, "chosen": ds.x_names[s.chosen_index], "utility": s.utility,
                        "conditional_set": s.conditional_set.iter().map(|&k| &ds.x_names[k]).collect::<Vec<_>>(),
                        "ridge_candidates": s.ridge_candidates.len(),
                    })
                })
                .collect();
            let v = json!({ "config": config, "threshold_used": result.threshold_used, "selected": selected, "per_step_log": log });
            format!("{}\n", serde_json::to_string_pretty(&v).expect("serializable report"))
        }
        Format::Csv => {
            let mut out = header_line(&config);
            out.push_str("rank,index,name,utility,z_stat,p_value\n");
            for (r, (j, est)) in rows.iter().enumerate() {
                writeln!(
                    out,
                    "{},{},{},{},{},{}",
                    r + 1,
                    j + 1,
                    csv_field(&ds.x_names[*j]),
                    result.utilities[*j],
                    opt(est.as_ref().and_then(|e| e.z_stat)),
                    opt(est.as_ref().and_then(|e| e.p_value))
                )
                .expect("writing to a String");
            }
            out
        }
        Format::Table => {
            let mut out = header_line(&config);
            writeln!(out, "{:>5}  {:<20} {:>10} {:>10} {:>12}", "rank", "covariate", "utility", "z", "p-value").expect("writing to a String");
            for (r, (j, est)) in rows.iter().enumerate() {
                let z = est.as_ref().and_then(|e| e.z_stat).map_or("-".into(), |z| format!("{z:.3}"));
                let p = est.as_ref().and_then(|e| e.p_value).map_or("-".into(), |p| format!("{p:.3e}"));
                writeln!(out, "{:>5}  {:<20} {:>10.4} {:>10} {:>12}", r + 1, ds.x_names[*j], result.utilities[*j], z, p)
                    .expect("writing to a String");
            }
            if !result.per_step_log.is_empty() {
                out.push_str("\nselection log\n");
                for s in &result.per_step_log {
                    let set: Vec<&str> = s.conditional_set.iter().map(|&k| ds.x_names[k].as_str()).collect();
                    writeln!(out, "{:>4}  {:<20} {:>10.4}  given [{}]", s.iteration, ds.x_names[s.chosen_index], s.utility, set.join(", "))
                        .expect("writing to a String");
                }
            }
            out
        }
    })
}

fn column_of<'a>(ds: &'a Dataset, name: &str) -> Result<&'a [f64]> {
    let j = ds.x_names.iter().position(|c| c == name).ok_or_else(|| Error::Schema(format!("covariate '{name}' not found")))?;
    Ok(&ds.x.as_slice()[j * ds.n()..(j + 1) * ds.n()])
}

fn cmd_test(a: &TestArgs, format: Format) -> Result<String> {
    let ds = load(&a.data)?;
    let pair = QuantilePair::new(a.tau, a.iota).map_err(|e| Error::Config(e.to_string()))?;
    let kernel = KernelConfig::default();
    let x1 = column_of(&ds, &a.x1)?;
    let design = (ds.r() > 0).then(|| ConditioningDesign::from_columns(ds.n(), &w_refs(&ds), &[])).transpose()?;
    let (kind, estimate, z, p) = match (&a.x2, &design) {
        (None, None) => {
            let e = cc_test_zero(&ds.y, x1, pair, &kernel)?;
            ("cc_zero", e.value, e.z_stat, e.p_value)
        }
        (None, Some(d)) => {
            let e = cpc_test_zero(&ds.y, x1, d, pair, &kernel)?.estimate;
            ("cpc_zero", e.value, e.z_stat, e.p_value)
        }
        (Some(name), None) => {
            let t = cc_test_equal(&ds.y, x1, column_of(&ds, name)?, pair, &kernel)?;
            ("cc_equal", t.delta, Some(t.z_stat), Some(t.p_value))
        }
        (Some(name), Some(d)) => {
            let t = cpc_test_equal(&ds.y, x1, column_of(&ds, name)?, d, pair, &kernel)?;
            ("cpc_equal", t.delta, Some(t.z_stat), Some(t.p_value))
        }
    };
    let config = config_json("test", a, json!({ "n": ds.n(), "pair": pair.clamped(), "dropped_rows": ds.dropped_rows }));
    Ok(match format {
        Format::Json => format!(
            "{}\n",
            serde_json::to_string_pretty(&json!({ "config": config, "test": kind, "estimate": estimate, "z_stat": z, "p_value": p }))
                .expect("serializable report")
        ),
        Format::Csv => format!("{}test,estimate,z_stat,p_value\n{kind},{estimate},{},{}\n", header_line(&config), opt(z), opt(p)),
        Format::Table => format!(
            "{}{kind}: estimate {estimate:.4}  z {}  p-value {}\n",
            header_line(&config),
            z.map_or("-".into(), |z| format!("{z:.3}")),
            p.map_or("-".into(), |p| format!("{p:.4}"))
        ),
    })
}

fn parse_pair(s: &str) -> Result<QuantilePair> {
    let (t, i) = s.split_once(',').ok_or_else(|| Error::Config(format!("pair must be 'tau,iota', got '{s}'")))?;
    let num = |v: &str| v.trim().parse::<f64>().map_err(|_| Error::Config(format!("bad level '{v}'")));
    QuantilePair::new(num(t)?, num(i)?).map_err(|e| Error::Config(e.to_string()))
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn suffixed(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn cmd_simulate(a: &SimulateArgs, format: Format) -> Result<String> {
    let pair = parse_pair(&a.pair)?;
    let spec = SimulationSpec {
        example: a.example,
        n: a.n,
        p: a.p,
        rho: a.rho,
        c0: a.c0,
        error_dist: a.error,
        reps: a.reps,
        seed: a.seed,
    };
    spec.validate()?;
    let config = config_json("simulate", a, json!({ "spec": spec, "pair": pair }));

    let (summary, per_rep, table, report) = if spec.example.is_testing() {
        let r = run_test_study(&spec, pair, a.level)?;
        (r.summary_csv(), r.per_rep_csv(), r.table(), serde_json::to_value(&r))
    } else {
        let base = ScreeningConfig { pair, d_n: a.top, ell: a.ell, ..ScreeningConfig::default() };
        let methods: Vec<StudyMethod> = a.methods.iter().map(|m| m.study_method(base)).collect();
        let r = run_screening_study(&spec, &methods)?;
        (r.summary_csv(), r.per_rep_csv(), r.table(), serde_json::to_value(&r))
    };
    if let Some(prefix) = &a.out {
        let head = header_line(&config);
        write_file(&suffixed(prefix, "_summary.csv"), &format!("{head}{summary}"))?;
        write_file(&suffixed(prefix, "_reps.csv"), &format!("{head}{per_rep}"))?;
    }
    Ok(match format {
        Format::Json => {
            let v = json!({ "config": config, "report": report.expect("serializable report") });
            format!("{}\n", serde_json::to_string_pretty(&v).expect("serializable report"))
        }
        Format::Csv => format!("{}{summary}", header_line(&config)),
        Format::Table => format!("{}{table}", header_line(&config)),
    })
}

fn cmd_outliers(a: &OutlierArgs, format: Format) -> Result<String> {
    if !a.data.exists() {
        return Err(Error::Io(format!("{}: file not found", a.data.display())));
    }
    let table = load_table(&a.data)?;
    for e in &a.exclude {
        if !table.names.contains(e) {
            return Err(Error::Schema(format!("column '{e}' not found")));
        }
    }
    let n = table.values.nrows();
    let mut rows = Vec::new();
    for (c, name) in table.names.iter().enumerate() {
        if a.exclude.contains(name) {
            continue;
        }
        let col = &table.values.as_slice()[c * n..(c + 1) * n];
        let r = ih_outlier_report(col, !a.one_sided)?;
        rows.push((name.clone(), r.outliers.len(), r.degenerate));
    }
    let flagged = rows.iter().filter(|r| r.1 > 0).count();
    let fraction = flagged as f64 / rows.len().max(1) as f64;
    let config = config_json("outliers", a, json!({ "n": n, "columns": rows.len(), "dropped_rows": table.dropped_rows }));
    Ok(match format {
        Format::Json => {
            let cols: Vec<_> = rows.iter().map(|(name, k, d)| json!({ "name": name, "outliers": k, "degenerate": d })).collect();
            let v = json!({ "config": config, "flagged_fraction": fraction, "columns": cols });
            format!("{}\n", serde_json::to_string_pretty(&v).expect("serializable report"))
        }
        Format::Csv => {
            let mut out = header_line(&config);
            out.push_str("column,outliers,degenerate\n");
            for (name, k, d) in &rows {
                writeln!(out, "{},{k},{d}", csv_field(name)).expect("writing to a String");
            }
            out
        }
        Format::Table => format!(
            "{}{flagged} of {} columns ({:.1}%) have at least one outlier; {} degenerate\n",
            header_line(&config),
            rows.len(),
            100.0 * fraction,
            rows.iter().filter(|r| r.2).count()
        ),
    })
}

fn cmd_evaluate(a: &EvaluateArgs, format: Format) -> Result<String> {
    let ds = load(&a.data)?;
    let selected: Vec<usize> = if a.columns.is_empty() {
        run_screen(&ds, &a.screen)?.1.selected
    } else {
        a.columns
            .iter()
            .map(|c| ds.x_names.iter().position(|x| x == c).ok_or_else(|| Error::Schema(format!("covariate '{c}' not found"))))
            .collect::<Result<_>>()?
    };
    let opts = PeOptions { partitions: a.partitions, train_ratio: a.ratio, seed: a.seed };
    let report = prediction_error(&ds.y, &ds.x, &selected, &opts)?;
    let names: Vec<&str> = selected.iter().map(|&j| ds.x_names[j].as_str()).collect();
    let config = config_json("evaluate", a, json!({ "n": ds.n(), "selected": names }));
    Ok(match format {
        Format::Json => format!(
            "{}\n",
            serde_json::to_string_pretty(&json!({ "config": config, "report": report })).expect("serializable report")
        ),
        Format::Csv => format!(
            "{}k,partitions,train_ratio,pe1_mean,pe2_mean,ridge_partitions\n{},{},{},{},{},{}\n",
            header_line(&config),
            report.k,
            report.partitions,
            report.train_ratio,
            report.pe1_mean,
            report.pe2_mean,
            report.ridge_partitions
        ),
        Format::Table => format!(
            "{}k = {}  PE1 (median fit) {:.4}  PE2 (least squares) {:.4}  over {} partitions\n",
            header_line(&config),
            report.k,
            report.pe1_mean,
            report.pe2_mean,
            report.partitions
        ),
    })
}

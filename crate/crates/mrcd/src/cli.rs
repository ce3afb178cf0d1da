//! Command-line front end: argument parsing, report serialization, and the
//! process exit-code conventions.
//!
//! Exit codes: 0 success, 2 unreadable input, 3 degenerate column, 4 invalid
//! subset size, 5 config schema violation, 1 anything else.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::DataMatrix;
use crate::error::Error;
use crate::estimator::{fit, scan_h, FitOptions, MrcdFit, OutlierCutoff, TargetChoice};
use crate::ogk::ogk_fit;
use crate::regress::mrcd_regression;
use crate::sim::{parse_sim_config, run_experiment};
use crate::target::target_from_csv;

/// Matrices larger than this (rows = columns) go to a sidecar CSV instead of
/// inline JSON, to keep reports readable.
pub const INLINE_MATRIX_MAX: usize = 200;

#[derive(Parser, Debug)]
#[command(name = "mrcd", version, about = "Robust, well-conditioned covariance estimation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Fit the regularized robust scatter estimator to a CSV dataset.
    Fit(FitArgs),
    /// Sweep the estimator over a range of subset sizes.
    ScanH(ScanArgs),
    /// Run a Monte Carlo experiment described by a config file.
    Simulate(SimulateArgs),
    /// Robust linear regression through the joint scatter estimate.
    Regress(RegressArgs),
    /// Fit the orthogonalized pairwise (OGK) estimator.
    Ogk(OgkArgs),
}

#[derive(Args, Debug)]
pub struct FitArgs {
    pub input: PathBuf,
    /// Subset size; defaults to ceil(0.75 n).
    #[arg(long)]
    pub h: Option<usize>,
    /// Subset size as a fraction of n (ignored when --h is given).
    #[arg(long)]
    pub h_frac: Option<f64>,
    /// Target matrix: identity, equicorr, or file=<path to a p x p CSV>.
    #[arg(long, default_value = "identity")]
    pub target: String,
    /// Outlier cutoff probability for the chi-square rule.
    #[arg(long, default_value_t = 0.975)]
    pub cutoff: f64,
    /// Recorded in the report for provenance (the fit itself is deterministic).
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ScanArgs {
    pub input: PathBuf,
    #[arg(long)]
    pub h_min: usize,
    #[arg(long)]
    pub h_max: usize,
    #[arg(long, default_value = "identity")]
    pub target: String,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    pub config: PathBuf,
    /// Overrides the seed from the config file.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct RegressArgs {
    pub input: PathBuf,
    /// Name of the response column.
    #[arg(long)]
    pub response: String,
    #[arg(long)]
    pub h: Option<usize>,
    #[arg(long, default_value = "identity")]
    pub target: String,
}

#[derive(Args, Debug)]
pub struct OgkArgs {
    pub input: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Machine-readable summary of a fit. Serializes losslessly: floats are
/// written with the shortest representation that round-trips exactly.
#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct FitReport {
    pub version: String,
    pub seed: u64,
    pub n: usize,
    pub p: usize,
    pub h: usize,
    pub rho: f64,
    pub c_alpha: f64,
    pub objective: f64,
    pub condition_number: f64,
    pub location: Vec<f64>,
    /// Row-major; `None` when written to a sidecar file instead.
    pub scatter: Option<Vec<Vec<f64>>>,
    pub precision: Option<Vec<Vec<f64>>>,
    pub scatter_file: Option<String>,
    pub precision_file: Option<String>,
    /// 1-based indices of the selected subset.
    pub subset: Vec<usize>,
    pub distances: Vec<f64>,
    pub cutoff: f64,
    /// 1-based indices of observations beyond the cutoff.
    pub flagged: Vec<usize>,
    pub elapsed_seconds: f64,
}

fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

fn write_matrix_csv(path: &Path, m: &DMatrix<f64>) -> Result<(), Error> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Csv(e.to_string()))?;
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| format!("{:?}", m[(i, j)])).collect();
        w.write_record(&row).map_err(|e| Error::Csv(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// Builds a report from a fit, spilling large matrices to sidecar CSVs next
/// to `out` (or suppressing them when no output path was given).
pub fn build_report(
    f: &MrcdFit,
    seed: u64,
    cutoff: OutlierCutoff,
    elapsed_seconds: f64,
    out: Option<&Path>,
) -> Result<FitReport, Error> {
    let p = f.p();
    let inline = p <= INLINE_MATRIX_MAX;
    let (scatter, precision, scatter_file, precision_file) = if inline {
        (
            Some(matrix_rows(&f.scatter)),
            Some(matrix_rows(&f.precision)),
            None,
            None,
        )
    } else if let Some(out) = out {
        let scatter_path = out.with_extension("scatter.csv");
        let precision_path = out.with_extension("precision.csv");
        write_matrix_csv(&scatter_path, &f.scatter)?;
        write_matrix_csv(&precision_path, &f.precision)?;
        (
            None,
            None,
            Some(scatter_path.to_string_lossy().into_owned()),
            Some(precision_path.to_string_lossy().into_owned()),
        )
    } else {
        (None, None, None, None)
    };
    Ok(FitReport {
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed,
        n: f.n(),
        p,
        h: f.h,
        rho: f.rho,
        c_alpha: f.c_alpha,
        objective: f.objective,
        condition_number: f.scatter_condition_number(),
        location: f.location.iter().copied().collect(),
        scatter,
        precision,
        scatter_file,
        precision_file,
        subset: f.subset.one_based(),
        distances: f.distances.iter().copied().collect(),
        cutoff: f.cutoff_value(cutoff),
        flagged: f.flagged(cutoff),
        elapsed_seconds,
    })
}

fn parse_target(spec: &str) -> Result<TargetChoice, Error> {
    match spec {
        "identity" => Ok(TargetChoice::Identity),
        "equicorr" => Ok(TargetChoice::Equicorrelation),
        other => {
            if let Some(path) = other.strip_prefix("file=") {
                Ok(TargetChoice::Fixed(target_from_csv(Path::new(path))?))
            } else {
                Err(Error::ConfigSchema(format!(
                    "target: expected identity, equicorr or file=<path>, got {other:?}"
                )))
            }
        }
    }
}

fn default_h(n: usize) -> usize {
    (0.75 * n as f64).ceil() as usize
}

fn chosen_h(n: usize, h: Option<usize>, h_frac: Option<f64>) -> usize {
    match (h, h_frac) {
        (Some(h), _) => h,
        (None, Some(f)) => (f * n as f64).ceil() as usize,
        (None, None) => default_h(n),
    }
}

fn emit(text: &str, out: Option<&Path>) -> Result<(), Error> {
    match out {
        Some(path) => fs::write(path, text).map_err(Error::Io),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn cmd_fit(args: &FitArgs) -> Result<(), Error> {
    let data = DataMatrix::from_csv(&args.input)?;
    let target = parse_target(&args.target)?;
    let h = chosen_h(data.n(), args.h, args.h_frac);
    let cutoff = OutlierCutoff::ChiSquared { prob: args.cutoff };
    let opts = FitOptions {
        cutoff,
        ..FitOptions::default()
    };
    let start = Instant::now();
    let f = fit(&data, h, &target, &opts)?;
    let report = build_report(
        &f,
        args.seed,
        cutoff,
        start.elapsed().as_secs_f64(),
        args.out.as_deref(),
    )?;
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    emit(&json, args.out.as_deref())
}

fn cmd_scan_h(args: &ScanArgs) -> Result<(), Error> {
    let data = DataMatrix::from_csv(&args.input)?;
    let target = parse_target(&args.target)?;
    if args.h_min > args.h_max {
        return Err(Error::EmptyRange);
    }
    let hs: Vec<usize> = (args.h_min..=args.h_max).collect();
    let rows = scan_h(&data, &hs, &target, &FitOptions::default())?;
    let mut text = String::from("h,objective,frobenius_gap,rho\n");
    for r in &rows {
        let gap = r.scatter_gap.map(|g| format!("{g:?}")).unwrap_or_default();
        text.push_str(&format!("{},{:?},{},{:?}\n", r.h, r.objective, gap, r.rho));
    }
    emit(text.trim_end(), args.out.as_deref())
}

fn cmd_simulate(args: &SimulateArgs) -> Result<(), Error> {
    let text = fs::read_to_string(&args.config)?;
    let mut config = parse_sim_config(&text)?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let result = run_experiment(&config)?;
    for w in &result.warnings {
        eprintln!("warning: {w}");
    }
    let mut csv_text = String::from(
        "estimator,h_fraction,h,mse,average_rho,completed,failed,seed,version\n",
    );
    for c in &result.cells {
        csv_text.push_str(&format!(
            "{},{:?},{},{:?},{:?},{},{},{},{}\n",
            c.estimator.label(),
            c.h_fraction,
            c.h,
            c.mse,
            c.average_rho,
            c.completed,
            c.failed,
            config.seed,
            env!("CARGO_PKG_VERSION"),
        ));
    }
    if let Some(out) = &args.out {
        fs::write(out, &csv_text)?;
    }
    print!("{}", result.table());
    Ok(())
}

fn cmd_regress(args: &RegressArgs) -> Result<(), Error> {
    let data = DataMatrix::from_csv(&args.input)?;
    let target = parse_target(&args.target)?;
    let Some(resp_idx) = data.column_index(&args.response) else {
        return Err(Error::ConfigSchema(format!(
            "response: no column named {:?}",
            args.response
        )));
    };
    let n = data.n();
    let q = data.p() - 1;
    if q == 0 {
        return Err(Error::ConfigSchema(
            "response: dataset has no predictor columns".into(),
        ));
    }
    let mut predictors = DMatrix::zeros(n, q);
    let mut names = Vec::with_capacity(q);
    let mut col = 0;
    for j in 0..data.p() {
        if j == resp_idx {
            continue;
        }
        predictors.set_column(col, &data.column(j));
        names.push(data.names()[j].clone());
        col += 1;
    }
    let y: Vec<f64> = data.column(resp_idx).iter().copied().collect();
    let x = DataMatrix::new(names.clone(), predictors)?;
    let h = args.h.unwrap_or(default_h(n));
    let r = mrcd_regression(&x, &y, h, &target, &FitOptions::default())?;
    #[derive(Serialize)]
    struct RegressReport<'a> {
        version: &'a str,
        response: &'a str,
        h: usize,
        rho: f64,
        intercept: f64,
        ols_intercept: f64,
        slopes: Vec<(String, f64, f64)>,
        excluded_rows: Vec<usize>,
    }
    let report = RegressReport {
        version: env!("CARGO_PKG_VERSION"),
        response: &args.response,
        h,
        rho: r.rho,
        intercept: r.intercept,
        ols_intercept: r.ols_intercept,
        slopes: names
            .iter()
            .enumerate()
            .map(|(j, name)| (name.clone(), r.slopes[j], r.ols_slopes[j]))
            .collect(),
        excluded_rows: r.excluded_rows,
    };
    println!("{}", serde_json::to_string_pretty(&report).expect("serializes"));
    Ok(())
}

fn cmd_ogk(args: &OgkArgs) -> Result<(), Error> {
    let data = DataMatrix::from_csv(&args.input)?;
    let f = ogk_fit(&data)?;
    #[derive(Serialize)]
    struct OgkReport {
        version: String,
        n: usize,
        p: usize,
        location: Vec<f64>,
        scatter: Vec<Vec<f64>>,
    }
    let report = OgkReport {
        version: env!("CARGO_PKG_VERSION").to_string(),
        n: data.n(),
        p: data.p(),
        location: f.location.iter().copied().collect(),
        scatter: matrix_rows(&f.scatter),
    };
    let json = serde_json::to_string_pretty(&report).expect("serializes");
    emit(&json, args.out.as_deref())
}

/// Exit code for an error per the CLI contract.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Io(_) | Error::Csv(_) | Error::NonNumericCell { .. } => 2,
        Error::DegenerateColumn { .. } => 3,
        Error::BadSubsetSize { .. } => 4,
        Error::ConfigSchema(_) => 5,
        _ => 1,
    }
}

/// Runs a parsed command, printing errors to standard error.
pub fn run(cli: &Cli) -> i32 {
    let result = match &cli.command {
        Command::Fit(args) => cmd_fit(args),
        Command::ScanH(args) => cmd_scan_h(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Regress(args) => cmd_regress(args),
        Command::Ogk(args) => cmd_ogk(args),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

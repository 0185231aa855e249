//! Command-line front door: density tables, kernel grids, bulk/edge
//! universality comparisons, Monte Carlo runs, oracle reports, and contour
//! exports, as CSV or JSON for downstream plotting.
//!
//! Exit codes: 0 success, 2 validation error, 3 convergence failure.
//! Every output starts with a comment line (CSV) or fields (JSON) recording
//! the full configuration and artifact version.

use clap::{Args, Parser, Subcommand, ValueEnum};
use ginprod::contour;
use ginprod::kernel::{self, AiryMethod, BulkKernel, DirectKernel, EdgeKernel, EngineOptions, KernelError};
use ginprod::mc;
use ginprod::model::{self, BulkPoint, ModelSpec};
use ginprod::oracle;
use rayon::prelude::*;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "ginprod", version, about = "Correlation kernels of products of Ginibre matrices")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModelKind {
    Ginibre,
    WithInverses,
    TruncatedUnitary,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Args)]
struct ModelFlags {
    /// Which ensemble to use
    #[arg(long, value_enum, default_value = "ginibre")]
    model: ModelKind,
    /// Matrix size n
    #[arg(long, default_value_t = 100)]
    n: usize,
    /// Number of forward Ginibre factors M
    #[arg(long = "M", default_value_t = 2)]
    m: usize,
    /// Number of inverse factors K (with-inverses only)
    #[arg(long = "K", default_value_t = 1)]
    k: usize,
    /// Comma-separated exponents ν_1..ν_M (default all zero)
    #[arg(long)]
    nu: Option<String>,
    /// Comma-separated exponents ν̃_1..ν̃_K (default all zero)
    #[arg(long)]
    nutilde: Option<String>,
    /// Truncation parameter κ = l+1−2n (truncated-unitary only)
    #[arg(long, default_value_t = 3)]
    kappa: i64,
}

#[derive(Args)]
struct OutputFlags {
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
    /// Output file (stdout when absent); written atomically
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EngineFlags {
    /// Base quadrature panels per unit contour length (engine default when absent)
    #[arg(long)]
    panels: Option<f64>,
    /// Coarse Gauss-Legendre order; the error estimate compares against twice this
    #[arg(long, default_value_t = 16)]
    order: usize,
    /// Relative convergence tolerance
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
}

#[derive(Subcommand)]
enum Command {
    /// Limiting density table: rows (x, rho) across the support
    Density {
        #[command(flatten)]
        model: ModelFlags,
        /// Number of interior grid points
        #[arg(long, default_value_t = 200)]
        grid: usize,
        /// Upper x limit (required for unbounded support)
        #[arg(long)]
        x_max: Option<f64>,
        #[command(flatten)]
        output: OutputFlags,
    },
    /// Finite-n kernel on an x×y grid: rows (x, y, kernel, imag_residual, error_estimate)
    Kernel {
        #[command(flatten)]
        model: ModelFlags,
        /// x grid as lo:hi:count (inclusive)
        #[arg(long = "xi-grid")]
        xi_grid: String,
        /// y grid as lo:hi:count (defaults to the x grid)
        #[arg(long = "eta-grid")]
        eta_grid: Option<String>,
        #[command(flatten)]
        engine: EngineFlags,
        #[command(flatten)]
        output: OutputFlags,
    },
    /// Bulk-rescaled kernel vs sine kernel: rows (xi, eta, rescaled_K, sine_K, abs_err)
    Bulk {
        #[command(flatten)]
        model: ModelFlags,
        /// Bulk reference point by angle φ (exclusive with --x0)
        #[arg(long)]
        phi: Option<f64>,
        /// Bulk reference point by location x0 (exclusive with --phi)
        #[arg(long)]
        x0: Option<f64>,
        #[arg(long = "xi-grid")]
        xi_grid: String,
        #[arg(long = "eta-grid")]
        eta_grid: Option<String>,
        #[command(flatten)]
        engine: EngineFlags,
        #[command(flatten)]
        output: OutputFlags,
    },
    /// Edge-rescaled kernel vs Airy kernel: rows (xi, eta, rescaled_K, airy_K, abs_err)
    Edge {
        #[command(flatten)]
        model: ModelFlags,
        #[arg(long = "xi-grid")]
        xi_grid: String,
        #[arg(long = "eta-grid")]
        eta_grid: Option<String>,
        #[command(flatten)]
        engine: EngineFlags,
        #[command(flatten)]
        output: OutputFlags,
    },
    /// Monte Carlo batch of rescaled squared singular values
    Sample {
        #[command(flatten)]
        model: ModelFlags,
        #[arg(long)]
        trials: usize,
        /// RNG seed (required: no silent nondeterminism)
        #[arg(long)]
        seed: u64,
        /// Emit a density histogram with this many bins instead of raw values
        #[arg(long)]
        bins: Option<usize>,
        #[command(flatten)]
        output: OutputFlags,
    },
    /// Small-n oracle report (JSON): moment-matrix kernel vs contour kernel
    Oracle {
        #[command(flatten)]
        model: ModelFlags,
        #[command(flatten)]
        output: OutputFlags,
    },
    /// Contour polyline export: rows (contour, segment_index, param, re, im)
    Contours {
        #[command(flatten)]
        model: ModelFlags,
        /// Which contour family: direct, bulk, or edge
        #[arg(long, default_value = "direct")]
        kind: String,
        /// Bulk angle φ (bulk kind only)
        #[arg(long)]
        phi: Option<f64>,
        /// Sample points per contour segment
        #[arg(long, default_value_t = 64)]
        samples: usize,
        #[command(flatten)]
        output: OutputFlags,
    },
}

enum CliError {
    /// Bad flags or domain errors: exit 2
    Validation(String),
    /// Quadrature/conditioning failures: exit 3
    Convergence(String),
}

impl From<KernelError> for CliError {
    fn from(e: KernelError) -> Self {
        match e {
            KernelError::Convergence { .. } | KernelError::PoleClearance(_) => {
                CliError::Convergence(e.to_string())
            }
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<oracle::OracleError> for CliError {
    fn from(e: oracle::OracleError) -> Self {
        match e {
            oracle::OracleError::IllConditioned { .. } => CliError::Convergence(e.to_string()),
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<model::ModelError> for CliError {
    fn from(e: model::ModelError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<contour::ContourError> for CliError {
    fn from(e: contour::ContourError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<mc::McError> for CliError {
    fn from(e: mc::McError) -> Self {
        CliError::Validation(e.to_string())
    }
}

fn parse_exponents(s: &Option<String>, count: usize, name: &str) -> Result<Vec<u32>, CliError> {
    match s {
        None => Ok(vec![0; count]),
        Some(text) => {
            let vals: Result<Vec<u32>, _> = text.split(',').map(|p| p.trim().parse()).collect();
            let vals = vals
                .map_err(|_| CliError::Validation(format!("--{name} must be a comma list of nonnegative integers")))?;
            if vals.len() != count {
                return Err(CliError::Validation(format!(
                    "--{name} must list exactly {count} exponents"
                )));
            }
            Ok(vals)
        }
    }
}

fn build_spec(f: &ModelFlags) -> Result<ModelSpec, CliError> {
    if f.n < 1 || f.m < 1 {
        return Err(CliError::Validation("need n >= 1 and M >= 1".into()));
    }
    let nu = parse_exponents(&f.nu, f.m, "nu")?;
    match f.model {
        ModelKind::Ginibre => Ok(ModelSpec::ginibre(f.n, f.m, nu)),
        ModelKind::WithInverses => {
            if f.k < 1 {
                return Err(CliError::Validation("with-inverses needs K >= 1".into()));
            }
            let nutilde = parse_exponents(&f.nutilde, f.k, "nutilde")?;
            if *nutilde.last().unwrap() != 0 {
                return Err(CliError::Validation("the last entry of --nutilde must be 0".into()));
            }
            Ok(ModelSpec::with_inverses(f.n, f.m, f.k, nu, nutilde))
        }
        ModelKind::TruncatedUnitary => {
            if f.kappa <= i64::from(nu[0]) {
                return Err(CliError::Validation("truncated-unitary needs kappa > ν_1".into()));
            }
            Ok(ModelSpec::truncated_unitary(f.n, f.m, nu, f.kappa))
        }
    }
}

/// Inclusive grid lo:hi:count.
fn parse_grid(s: &str) -> Result<Vec<f64>, CliError> {
    let parts: Vec<&str> = s.split(':').collect();
    let bad = || CliError::Validation(format!("grid '{s}' must have the form lo:hi:count"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let lo: f64 = parts[0].parse().map_err(|_| bad())?;
    let hi: f64 = parts[1].parse().map_err(|_| bad())?;
    let count: usize = parts[2].parse().map_err(|_| bad())?;
    if count == 0 || hi < lo || (count == 1 && hi != lo) {
        return Err(bad());
    }
    if count == 1 {
        return Ok(vec![lo]);
    }
    Ok((0..count).map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64).collect())
}

fn engine_options(e: &EngineFlags) -> Result<EngineOptions, CliError> {
    if e.order < 2 || e.order > 64 {
        return Err(CliError::Validation("--order must be between 2 and 64".into()));
    }
    if !(e.tol > 0.0) {
        return Err(CliError::Validation("--tol must be positive".into()));
    }
    Ok(EngineOptions { panels_per_unit: e.panels, order: e.order, rel_tol: e.tol })
}

fn config_line() -> String {
    let args: Vec<String> = std::env::args().collect();
    format!("ginprod {} | {}", env!("CARGO_PKG_VERSION"), args.join(" "))
}

/// One tabular payload: a header plus float rows, rendered as CSV or JSON.
struct Table {
    columns: Vec<&'static str>,
    rows: Vec<Vec<f64>>,
}

impl Table {
    fn render(&self, format: Format) -> String {
        match format {
            Format::Csv => {
                let mut out = format!("# {}\n{}\n", config_line(), self.columns.join(","));
                for row in &self.rows {
                    let cells: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
                    out.push_str(&cells.join(","));
                    out.push('\n');
                }
                out
            }
            Format::Json => {
                let rows: Vec<serde_json::Value> = self
                    .rows
                    .iter()
                    .map(|row| {
                        let mut obj = serde_json::Map::new();
                        for (c, v) in self.columns.iter().zip(row) {
                            obj.insert((*c).into(), serde_json::json!(v));
                        }
                        serde_json::Value::Object(obj)
                    })
                    .collect();
                let doc = serde_json::json!({
                    "artifact_version": env!("CARGO_PKG_VERSION"),
                    "config": config_line(),
                    "rows": rows,
                });
                let mut s = serde_json::to_string_pretty(&doc).expect("json");
                s.push('\n');
                s
            }
        }
    }
}

fn emit(text: &str, out: &Option<PathBuf>) -> Result<(), CliError> {
    match out {
        None => {
            print!("{text}");
            Ok(())
        }
        Some(path) => {
            // atomic: write a sibling temp file, then rename into place
            let tmp = path.with_extension("tmp-partial");
            std::fs::write(&tmp, text)
                .and_then(|_| std::fs::rename(&tmp, path))
                .map_err(|e| CliError::Validation(format!("cannot write {}: {e}", path.display())))
        }
    }
}

/// Prefix a ready-made CSV body (with its own header) with the config line.
fn emit_csv_body(body: &str, out: &Option<PathBuf>) -> Result<(), CliError> {
    emit(&format!("# {}\n{body}", config_line()), out)
}

fn run_density(
    model: &ModelFlags,
    grid: usize,
    x_max: Option<f64>,
    output: &OutputFlags,
) -> Result<(), CliError> {
    let spec = build_spec(model)?;
    if grid < 2 {
        return Err(CliError::Validation("--grid must be at least 2".into()));
    }
    let sup = spec.support_sup();
    let hi = match x_max {
        Some(v) if v > 0.0 => v,
        Some(_) => return Err(CliError::Validation("--x-max must be positive".into())),
        None if sup.is_finite() => sup,
        None => {
            return Err(CliError::Validation(
                "unbounded support: pass --x-max for the table range".into(),
            ))
        }
    };
    // strictly interior points; the density diverges at the hard edge
    let rows: Vec<Vec<f64>> = (1..=grid)
        .map(|i| {
            let x = hi * i as f64 / (grid + 1) as f64;
            vec![x, mc::analytic_density(&spec, x)]
        })
        .collect();
    emit(&Table { columns: vec!["x", "rho"], rows }.render(output.format), &output.out)
}

fn run_kernel(
    model: &ModelFlags,
    xi_grid: &str,
    eta_grid: &Option<String>,
    engine: &EngineFlags,
    output: &OutputFlags,
) -> Result<(), CliError> {
    let spec = build_spec(model)?;
    let xs = parse_grid(xi_grid)?;
    let ys = match eta_grid {
        Some(g) => parse_grid(g)?,
        None => xs.clone(),
    };
    if xs.iter().chain(&ys).any(|&v| v <= 0.0) {
        return Err(CliError::Validation("kernel arguments must be positive".into()));
    }
    let eng = DirectKernel::with_options(&spec, engine_options(engine)?)?;
    let pairs: Vec<(f64, f64)> = xs.iter().flat_map(|&x| ys.iter().map(move |&y| (x, y))).collect();
    let rows: Result<Vec<Vec<f64>>, KernelError> = pairs
        .par_iter()
        .map(|&(x, y)| {
            let kv = eng.eval(x, y)?;
            Ok(vec![x, y, kv.value, kv.imag_residual, kv.error_estimate])
        })
        .collect();
    let table = Table {
        columns: vec!["x", "y", "kernel", "imag_residual", "error_estimate"],
        rows: rows?,
    };
    emit(&table.render(output.format), &output.out)
}

fn run_bulk(
    model: &ModelFlags,
    phi: Option<f64>,
    x0: Option<f64>,
    xi_grid: &str,
    eta_grid: &Option<String>,
    engine: &EngineFlags,
    output: &OutputFlags,
) -> Result<(), CliError> {
    let spec = build_spec(model)?;
    let point = match (phi, x0) {
        (Some(phi), None) => BulkPoint::at_phi(&spec, phi)?,
        (None, Some(x0)) => BulkPoint::at_x0(&spec, x0)?,
        _ => {
            return Err(CliError::Validation(
                "pass exactly one of --phi and --x0 for the bulk reference point".into(),
            ))
        }
    };
    let xis = parse_grid(xi_grid)?;
    let etas = match eta_grid {
        Some(g) => parse_grid(g)?,
        None => xis.clone(),
    };
    let eng = BulkKernel::with_options(&spec, &point, engine_options(engine)?)?;
    let pairs: Vec<(f64, f64)> =
        xis.iter().flat_map(|&a| etas.iter().map(move |&b| (a, b))).collect();
    let rows: Result<Vec<Vec<f64>>, KernelError> = pairs
        .par_iter()
        .map(|&(xi, eta)| {
            let v = eng.eval(xi, eta)?.value;
            let s = kernel::sine_kernel(xi, eta);
            Ok(vec![xi, eta, v, s, (v - s).abs()])
        })
        .collect();
    let table = Table {
        columns: vec!["xi", "eta", "rescaled_K", "sine_K", "abs_err"],
        rows: rows?,
    };
    emit(&table.render(output.format), &output.out)
}

fn run_edge(
    model: &ModelFlags,
    xi_grid: &str,
    eta_grid: &Option<String>,
    engine: &EngineFlags,
    output: &OutputFlags,
) -> Result<(), CliError> {
    let spec = build_spec(model)?;
    let xis = parse_grid(xi_grid)?;
    let etas = match eta_grid {
        Some(g) => parse_grid(g)?,
        None => xis.clone(),
    };
    let eng = EdgeKernel::with_options(&spec, engine_options(engine)?)?;
    let pairs: Vec<(f64, f64)> =
        xis.iter().flat_map(|&a| etas.iter().map(move |&b| (a, b))).collect();
    let rows: Result<Vec<Vec<f64>>, CliError> = pairs
        .par_iter()
        .map(|&(xi, eta)| {
            let v = eng.eval(xi, eta)?.value;
            let a = kernel::airy_kernel(xi, eta, AiryMethod::AiryFormula)?;
            Ok(vec![xi, eta, v, a, (v - a).abs()])
        })
        .collect();
    let table = Table {
        columns: vec!["xi", "eta", "rescaled_K", "airy_K", "abs_err"],
        rows: rows?,
    };
    emit(&table.render(output.format), &output.out)
}

fn run_sample(
    model: &ModelFlags,
    trials: usize,
    seed: u64,
    bins: Option<usize>,
    output: &OutputFlags,
) -> Result<(), CliError> {
    let spec = build_spec(model)?;
    if trials < 1 {
        return Err(CliError::Validation("--trials must be at least 1".into()));
    }
    let batch = mc::SampleBatch::sample(&spec, trials, seed)?;
    match bins {
        None => match output.format {
            Format::Csv => emit_csv_body(&batch.to_csv(), &output.out),
            Format::Json => {
                let n = spec.n;
                let rows: Vec<Vec<f64>> = batch
                    .rescaled_values
                    .iter()
                    .enumerate()
                    .map(|(i, &v)| vec![(i / n) as f64, (i % n) as f64, v])
                    .collect();
                let table = Table { columns: vec!["trial", "index", "value"], rows };
                emit(&table.render(Format::Json), &output.out)
            }
        },
        Some(bins) => {
            if bins < 8 {
                return Err(CliError::Validation("--bins must be at least 8".into()));
            }
            let (hist, sup) = mc::empirical_vs_density(&batch, bins)?;
            match output.format {
                Format::Csv => {
                    let body = format!("# sup_interior_error {sup:.16e}\n{}", hist.to_csv());
                    emit_csv_body(&body, &output.out)
                }
                Format::Json => {
                    let rows: Vec<Vec<f64>> = (0..hist.counts.len())
                        .map(|i| {
                            vec![
                                hist.edges[i],
                                hist.edges[i + 1],
                                hist.counts[i] as f64,
                                hist.normalized_density[i],
                                hist.analytic_density[i],
                            ]
                        })
                        .collect();
                    let table = Table {
                        columns: vec!["bin_left", "bin_right", "count", "density", "analytic_density"],
                        rows,
                    };
                    emit(&table.render(Format::Json), &output.out)
                }
            }
        }
    }
}

fn run_oracle(model: &ModelFlags, output: &OutputFlags) -> Result<(), CliError> {
    let spec = build_spec(model)?;
    if spec.n > 8 {
        return Err(CliError::Validation("oracle reports are for n <= 8".into()));
    }
    let eng = DirectKernel::new(&spec)?;
    let mut max_rel = 0.0f64;
    for &x in &[0.5, 1.75, 3.0] {
        for &y in &[0.5, 1.75, 3.0] {
            let reference = oracle::kernel_direct(&spec, spec.n, x, y)?;
            let kv = eng.eval(x, y)?;
            max_rel = max_rel.max((kv.value - reference).abs() / reference.abs().max(1e-300));
        }
    }
    let (lhs, rhs, det_ok) = oracle::normalization_check(&spec, spec.n)?;
    let matrix = oracle::moment_matrix(&spec, spec.n)?;
    let doc = serde_json::json!({
        "artifact_version": env!("CARGO_PKG_VERSION"),
        "config": config_line(),
        "oracle_vs_contour_max_rel_err": max_rel,
        "det_check": if det_ok { "pass" } else { "fail" },
        "log_det": lhs,
        "log_det_expected": rhs,
        "condition_estimate": matrix.condition_estimate,
    });
    let mut text = serde_json::to_string_pretty(&doc).expect("json");
    text.push('\n');
    emit(&text, &output.out)
}

fn run_contours(
    model: &ModelFlags,
    kind: &str,
    phi: Option<f64>,
    samples: usize,
    output: &OutputFlags,
) -> Result<(), CliError> {
    let spec = build_spec(model)?;
    if samples < 2 {
        return Err(CliError::Validation("--samples must be at least 2".into()));
    }
    let contours: Vec<ginprod::contour::Contour> = match kind {
        "direct" => {
            let (c, s) = contour::build_direct_contours(&spec)?;
            vec![c, s]
        }
        "edge" => {
            let (c, s) = contour::build_edge_contours(&spec)?;
            vec![c, s]
        }
        "bulk" => {
            let phi = phi.ok_or_else(|| {
                CliError::Validation("bulk contours need --phi".into())
            })?;
            let (c, sl, sr) =
                contour::build_bulk_contours(&spec, phi, contour::default_bulk_epsilons(spec.n))?;
            vec![c, sl, sr]
        }
        other => {
            return Err(CliError::Validation(format!(
                "unknown contour kind '{other}' (expected direct, bulk, or edge)"
            )))
        }
    };
    let mut body = String::from("contour,segment_index,param,re,im\n");
    for c in &contours {
        for line in c.to_csv(samples).lines().skip(1) {
            writeln!(body, "{},{}", c.name, line).expect("string write");
        }
    }
    match output.format {
        Format::Csv => emit_csv_body(&body, &output.out),
        Format::Json => Err(CliError::Validation(
            "contours are exported as CSV polylines only".into(),
        )),
    }
}

fn run(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Density { model, grid, x_max, output } => run_density(model, *grid, *x_max, output),
        Command::Kernel { model, xi_grid, eta_grid, engine, output } => {
            run_kernel(model, xi_grid, eta_grid, engine, output)
        }
        Command::Bulk { model, phi, x0, xi_grid, eta_grid, engine, output } => {
            run_bulk(model, *phi, *x0, xi_grid, eta_grid, engine, output)
        }
        Command::Edge { model, xi_grid, eta_grid, engine, output } => {
            run_edge(model, xi_grid, eta_grid, engine, output)
        }
        Command::Sample { model, trials, seed, bins, output } => {
            run_sample(model, *trials, *seed, *bins, output)
        }
        Command::Oracle { model, output } => run_oracle(model, output),
        Command::Contours { model, kind, phi, samples, output } => {
            run_contours(model, kind, *phi, *samples, output)
        }
    }
}

fn main() -> ExitCode {
    if let Ok(threads) = std::env::var("PRODUCT_ENSEMBLE_THREADS") {
        if let Ok(k) = threads.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(k).build_global();
        }
    }
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Validation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Convergence(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;

use clap::{Args, ValueEnum};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

use heatkernel::density::{circle_grid, line_grid, positive_support, unitary_support};
use heatkernel::flow::{self, Flow};
use heatkernel::linalg::{self, CMatrix};
use heatkernel::moments::{nu_moment, SAFE_MAX_ORDER};
use heatkernel::simulate::{
    self, EnsembleConfig, Group, Observable, ObservableKind, SpectrumKind,
};
use heatkernel::TracePoly;

use crate::manifest::Recorder;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] heatkernel::Error),
    #[error("{0}")]
    Usage(String),
    #[error("i/o: {0}")]
    Io(#[from] io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    CheckFailed(String),
}

type Result<T> = std::result::Result<T, CliError>;

fn sink(out: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(path) => Box::new(BufWriter::new(File::create(path)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn write_json(out: &Option<PathBuf>, value: &serde_json::Value) -> Result<()> {
    let mut w = sink(out)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn pair(z: Complex64) -> [f64; 2] {
    [z.re, z.im]
}

#[derive(Args, Debug, Serialize)]
#[command(allow_negative_numbers = true)]
pub struct MomentsArgs {
    /// Time parameter (negative values give the law on the half-line).
    #[arg(long)]
    pub t: f64,
    /// Largest moment order.
    #[arg(long = "max-n")]
    pub max_n: u32,
    /// Allow orders above 30, where the alternating sum loses precision.
    #[arg(long = "unsafe-precision")]
    pub unsafe_precision: bool,
    /// Output file (stdout if omitted).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn moments(args: MomentsArgs) -> Result<()> {
    let rec = Recorder::start("moments", &args, None);
    if args.max_n > SAFE_MAX_ORDER && !args.unsafe_precision {
        return Err(heatkernel::Error::PreconditionViolated(format!(
            "max-n {} exceeds {SAFE_MAX_ORDER}; pass --unsafe-precision to accept degraded precision",
            args.max_n
        ))
        .into());
    }
    let table: Vec<(u32, f64)> = (0..=args.max_n)
        .map(|n| (n, nu_moment(n as i32, args.t)))
        .collect();
    write_json(
        &args.out,
        &json!({"t": args.t, "moments": table, "manifest": rec.finish()}),
    )
}

#[derive(Args, Debug, Serialize)]
#[command(allow_negative_numbers = true)]
pub struct FlowArgs {
    /// Trace polynomial, e.g. `3*v2*v-1 + (0,-1)*v1`.
    #[arg(long)]
    pub poly: String,
    /// Flow time.
    #[arg(long)]
    pub u: f64,
    /// Matrix size, or `limit` for N → ∞.
    #[arg(long = "N", default_value = "limit")]
    pub n: String,
    /// Largest trace degree the engine accepts.
    #[arg(long = "degree-cap", default_value_t = flow::DEFAULT_DEGREE_CAP)]
    pub degree_cap: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn parse_size(s: &str) -> Result<Option<u32>> {
    if s == "limit" {
        return Ok(None);
    }
    match s.parse::<u32>() {
        Ok(n) if n >= 1 => Ok(Some(n)),
        _ => Err(CliError::Usage(format!(
            "--N expects a positive integer or `limit`, got {s:?}"
        ))),
    }
}

pub fn flow(args: FlowArgs) -> Result<()> {
    let rec = Recorder::start("flow", &args, None);
    let p: TracePoly = args.poly.parse()?;
    let engine = Flow::with_max_degree(args.degree_cap);
    let (value, size) = match parse_size(&args.n)? {
        Some(n) => (engine.finite_n_expectation(&p, args.u, n)?, json!(n)),
        None => (engine.flow_limit_expectation(&p, args.u)?, json!("limit")),
    };
    write_json(
        &args.out,
        &json!({
            "poly": p.to_string(),
            "u": args.u,
            "N": size,
            "value": pair(value),
            "manifest": rec.finish(),
        }),
    )
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum GroupArg {
    Unitary,
    Gl,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SpectrumArg {
    Circle,
    Complex,
    Positive,
}

#[derive(Args, Debug, Serialize)]
pub struct SimulateArgs {
    #[arg(long, value_enum)]
    pub group: GroupArg,
    /// Matrix size.
    #[arg(long = "N")]
    pub n: usize,
    #[arg(long)]
    pub t: f64,
    /// GL only; must exceed t/2.
    #[arg(long, default_value_t = 0.0)]
    pub s: f64,
    /// Increments per path (default: 100 per unit of heat time for U(N), 100 for GL(N)).
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long, default_value_t = simulate::DEFAULT_PATHS)]
    pub paths: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Eigenvalue CSV (`path,index,re,im`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Summary JSON (stdout if omitted).
    #[arg(long)]
    pub summary: Option<PathBuf>,
    /// Observables separated by `;`: trace polynomials in the sample, or
    /// `gram:<poly>` for polynomials in ZZ*.
    #[arg(long, value_delimiter = ';', default_value = "v1")]
    pub observables: Vec<String>,
    /// Spectrum written to the CSV (default: circle for U(N), complex for GL(N)).
    #[arg(long, value_enum)]
    pub spectrum: Option<SpectrumArg>,
}

fn ensemble(group: GroupArg, n: usize, s: f64, t: f64, steps: Option<usize>, paths: usize, seed: u64) -> EnsembleConfig {
    let cfg = match group {
        GroupArg::Unitary => EnsembleConfig::unitary(n, t),
        GroupArg::Gl => EnsembleConfig::general_linear(n, s, t),
    };
    let cfg = cfg.with_paths(paths).with_seed(seed);
    match steps {
        Some(k) => cfg.with_steps(k),
        None => cfg,
    }
}

fn parse_observable(spec: &str) -> Result<Observable> {
    let spec = spec.trim();
    if let Some(rest) = spec.strip_prefix("gram:") {
        Ok(Observable::new(spec, ObservableKind::GramTrace(rest.parse()?)))
    } else {
        Ok(Observable::new(spec, ObservableKind::Trace(spec.parse()?)))
    }
}

pub fn simulate(args: SimulateArgs) -> Result<()> {
    let rec = Recorder::start("simulate", &args, Some(args.seed));
    let cfg = ensemble(args.group, args.n, args.s, args.t, args.steps, args.paths, args.seed);
    cfg.validate()?;
    let observables = args
        .observables
        .iter()
        .filter(|s| !s.trim().is_empty())
        .map(|s| parse_observable(s))
        .collect::<Result<Vec<_>>>()?;
    let kind = match (args.spectrum, cfg.group) {
        (Some(SpectrumArg::Circle), Group::Unitary) | (None, Group::Unitary) => SpectrumKind::CircleEig,
        (Some(SpectrumArg::Circle), Group::GeneralLinear) => {
            return Err(CliError::Usage("circle spectrum needs --group unitary".into()))
        }
        (Some(SpectrumArg::Complex), _) | (None, Group::GeneralLinear) => SpectrumKind::ComplexEig,
        (Some(SpectrumArg::Positive), _) => SpectrumKind::PositiveEig,
    };
    let summary = if let Some(path) = &args.out {
        let (summary, spectra) = simulate::mc_experiment_with_spectra(&cfg, &observables, kind)?;
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(
            w,
            "# group={}, N={}, t={}, s={}, seed={}",
            match cfg.group {
                Group::Unitary => "unitary",
                Group::GeneralLinear => "gl",
            },
            cfg.n,
            cfg.t,
            cfg.s,
            cfg.seed
        )?;
        writeln!(w, "{}", rec.csv_comment())?;
        writeln!(w, "path,index,re,im")?;
        for (j, sample) in spectra.iter().enumerate() {
            for (i, l) in sample.values.iter().enumerate() {
                writeln!(w, "{j},{i},{:e},{:e}", l.re, l.im)?;
            }
        }
        w.flush()?;
        summary
    } else {
        simulate::mc_experiment(&cfg, &observables)?
    };
    write_json(
        &args.summary,
        &json!({
            "config": summary.config,
            "observables": summary.observables,
            "manifest": rec.finish(),
        }),
    )
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Law {
    Unitary,
    Positive,
}

#[derive(Args, Debug, Serialize)]
pub struct DensityArgs {
    #[arg(long, value_enum)]
    pub law: Law,
    /// Time; for the positive law this is |τ| and the law is taken at τ = −t.
    #[arg(long)]
    pub t: f64,
    /// Number of grid cells; the density is sampled at cell midpoints.
    #[arg(long, default_value_t = 512)]
    pub grid: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn density(args: DensityArgs) -> Result<()> {
    let rec = Recorder::start("density", &args, None);
    let (grid, support) = match args.law {
        Law::Unitary => (
            circle_grid(args.t, args.grid)?,
            json!(unitary_support(args.t)?),
        ),
        Law::Positive => {
            if !(args.t > 0.0) {
                return Err(heatkernel::Error::InvalidParameter(format!(
                    "positive law needs t = |τ| > 0, got {}",
                    args.t
                ))
                .into());
            }
            (line_grid(-args.t, args.grid)?, json!(positive_support(-args.t)?))
        }
    };
    let mut w = sink(&args.out)?;
    let law = match args.law {
        Law::Unitary => "unitary",
        Law::Positive => "positive",
    };
    writeln!(w, "# law={law}, t={}", args.t)?;
    writeln!(w, "{}", rec.csv_comment())?;
    writeln!(w, "# support: {support}")?;
    writeln!(w, "theta_or_x,density")?;
    for (x, d) in grid.points.iter().zip(&grid.values) {
        writeln!(w, "{x:e},{d:e}")?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Args, Debug, Serialize)]
pub struct VarianceScanArgs {
    /// Matrix sizes, comma separated.
    #[arg(long = "Ns", value_delimiter = ',', num_args = 0..)]
    pub ns: Vec<usize>,
    #[arg(long)]
    pub t: f64,
    /// Trace polynomial whose variance is scanned.
    #[arg(long, default_value = "v1")]
    pub observable: String,
    #[arg(long, default_value_t = simulate::DEFAULT_PATHS)]
    pub paths: usize,
    #[arg(long, value_enum, default_value = "unitary")]
    pub group: GroupArg,
    #[arg(long, default_value_t = 0.0)]
    pub s: f64,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Least-squares slope of `ln y` against `ln x`.
fn log_log_slope(points: &[(f64, f64)]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|(x, y)| *x > 0.0 && *y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

pub fn variance_scan(args: VarianceScanArgs) -> Result<()> {
    let rec = Recorder::start("variance-scan", &args, Some(args.seed));
    if args.ns.is_empty() {
        return Err(heatkernel::Error::InvalidConfig("--Ns must list at least one size".into()).into());
    }
    let p: TracePoly = args.observable.parse()?;
    let obs = [Observable::new(args.observable.clone(), ObservableKind::Trace(p.clone()))];
    let mut rows = Vec::new();
    let mut mc_points = Vec::new();
    let mut exact_points = Vec::new();
    for &n in &args.ns {
        let cfg = ensemble(args.group, n, args.s, args.t, args.steps, args.paths, args.seed);
        let summary = simulate::mc_experiment(&cfg, &obs)?;
        let variance = summary.observables[0].variance;
        let exact = match args.group {
            GroupArg::Unitary => {
                let cov = flow::finite_n_covariance_unitary(&p, &p, args.t, n as u32)?;
                exact_points.push((n as f64, cov.re));
                Some(cov.re)
            }
            GroupArg::Gl => None,
        };
        mc_points.push((n as f64, variance));
        rows.push(json!({"N": n, "variance": variance, "exact_variance": exact}));
    }
    write_json(
        &args.out,
        &json!({
            "observable": args.observable,
            "t": args.t,
            "rows": rows,
            "slope": log_log_slope(&mc_points),
            "exact_slope": log_log_slope(&exact_points),
            "manifest": rec.finish(),
        }),
    )
}

#[derive(Args, Debug, Serialize)]
pub struct CheckIntertwineArgs {
    /// Matrix size.
    #[arg(long = "N")]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Finite-difference step.
    #[arg(long, default_value_t = 1e-3)]
    pub hstep: f64,
    /// Relative-error threshold for a pass.
    #[arg(long, default_value_t = 1e-4)]
    pub tol: f64,
    /// Polynomials to check, separated by `;`.
    #[arg(long, value_delimiter = ';', default_value = "v2;v3;v2*v3")]
    pub polys: Vec<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn random_unitary(n: usize, seed: u64) -> CMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    simulate::sample_haar_unitary(n, &mut rng)
}

pub fn check_intertwine(args: CheckIntertwineArgs) -> Result<()> {
    let rec = Recorder::start("check-intertwine", &args, Some(args.seed));
    if args.n == 0 {
        return Err(heatkernel::Error::InvalidConfig("--N must be ≥ 1".into()).into());
    }
    if !(args.hstep > 0.0) {
        return Err(heatkernel::Error::InvalidConfig(format!(
            "--hstep must be positive, got {}",
            args.hstep
        ))
        .into());
    }
    let u = random_unitary(args.n, args.seed);
    let mut rows = Vec::new();
    let mut all_pass = true;
    for text in args.polys.iter().filter(|s| !s.trim().is_empty()) {
        let p: TracePoly = text.parse()?;
        let fd = flow::laplacian_fd(&p, &u, args.hstep)?;
        let exact = flow::intertwined_laplacian(&p, &u)?;
        let rel = (fd - exact).norm() / exact.norm().max(f64::MIN_POSITIVE);
        let mut pass = rel < args.tol;
        let mut row = json!({
            "poly": p.to_string(),
            "finite_difference": pair(fd),
            "intertwined": pair(exact),
            "relative_error": rel,
        });
        if args.n == 1 {
            // on U(1) every v_k is U^k, so Δ P = −m² P for signed degree m
            let degrees: Vec<i64> = p.terms().map(|(m, _)| m.signed_degree()).collect();
            if degrees.windows(2).all(|w| w[0] == w[1]) {
                let m = degrees.first().copied().unwrap_or(0) as f64;
                let closed = p.eval_on_matrix(&u)? * -(m * m);
                let err = (closed - exact).norm() / closed.norm().max(f64::MIN_POSITIVE);
                pass &= err < 1e-10;
                row["closed_form"] = json!(pair(closed));
            }
        }
        row["pass"] = json!(pass);
        all_pass &= pass;
        rows.push(row);
    }
    write_json(
        &args.out,
        &json!({
            "N": args.n,
            "hstep": args.hstep,
            "matrix_trace": pair(linalg::normalized_trace(&u)),
            "checks": rows,
            "pass": all_pass,
            "manifest": rec.finish(),
        }),
    )?;
    if all_pass {
        Ok(())
    } else {
        Err(CliError::CheckFailed("intertwining check failed".into()))
    }
}

//! Monte-Carlo sampling of the heat-kernel measures on `U(N)` and `GL(N)`.
//!
//! Brownian motion is run with the geometric Euler scheme: a path is the
//! product of exponentials of independent Gaussian Lie-algebra increments.
//! With GUE matrices `H` of entry variance `1/N`,
//!
//! ```text
//! U(N):  U = Π exp(i√δ H_j),                           δ = t/steps
//! GL(N): Z = Π exp(√(δ(s − t/2)) iH_j + √(δt/2) H'_j),  δ = 1/steps
//! ```
//!
//! Path `j` draws its randomness from a ChaCha8 stream selected by `j`
//! under the run seed, so results do not depend on scheduling.

use std::collections::BTreeMap;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix};
use crate::trace_poly::{TracePoly, WordPoly};

/// Steps between re-unitarization / condition checks.
const CHECK_INTERVAL: usize = 16;
/// Condition-number cap for `GL(N)` paths.
pub const CONDITION_CAP: f64 = 1e12;
/// Resampling attempts for an ill-conditioned `GL(N)` path.
const MAX_RETRIES: u64 = 3;
/// Unitarity drift allowed on a finished path.
pub const UNITARITY_TOL: f64 = 1e-10;
/// Default number of increments per unit of heat time.
pub const STEPS_PER_UNIT_TIME: usize = 100;
pub const DEFAULT_PATHS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Group {
    Unitary,
    GeneralLinear,
}

/// Parameters of one Monte-Carlo ensemble.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnsembleConfig {
    pub group: Group,
    pub n: usize,
    pub t: f64,
    /// Only used by [`Group::GeneralLinear`].
    pub s: f64,
    pub steps: usize,
    pub paths: usize,
    pub seed: u64,
}

impl EnsembleConfig {
    pub fn unitary(n: usize, t: f64) -> Self {
        EnsembleConfig {
            group: Group::Unitary,
            n,
            t,
            s: 0.0,
            steps: ((STEPS_PER_UNIT_TIME as f64 * t).ceil() as usize).max(1),
            paths: DEFAULT_PATHS,
            seed: 0,
        }
    }

    pub fn general_linear(n: usize, s: f64, t: f64) -> Self {
        EnsembleConfig {
            group: Group::GeneralLinear,
            n,
            t,
            s,
            steps: STEPS_PER_UNIT_TIME,
            paths: DEFAULT_PATHS,
            seed: 0,
        }
    }

    pub fn with_steps(mut self, steps: usize) -> Self {
        self.steps = steps;
        self
    }

    pub fn with_paths(mut self, paths: usize) -> Self {
        self.paths = paths;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidConfig("matrix size must be ≥ 1".into()));
        }
        if self.steps == 0 {
            return Err(Error::InvalidConfig("steps must be ≥ 1".into()));
        }
        if self.paths == 0 {
            return Err(Error::InvalidConfig("paths must be ≥ 1".into()));
        }
        if !self.t.is_finite() || !self.s.is_finite() {
            return Err(Error::InvalidConfig("s and t must be finite".into()));
        }
        match self.group {
            Group::Unitary if self.t < 0.0 => Err(Error::RegimeViolation(format!(
                "unitary heat kernel needs t ≥ 0, got {}",
                self.t
            ))),
            Group::GeneralLinear if !(self.t > 0.0 && self.s > 0.0 && self.s > self.t / 2.0) => {
                Err(Error::RegimeViolation(format!(
                    "GL heat kernel needs s > t/2 > 0, got s = {}, t = {}",
                    self.s, self.t
                )))
            }
            _ => Ok(()),
        }
    }

    fn path_rng(&self, path_index: u64, attempt: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(
            self.seed
                .wrapping_add(attempt.wrapping_mul(0x9E37_79B9_7F4A_7C15)),
        );
        rng.set_stream(path_index);
        rng
    }
}

/// GUE matrix with entry variance `1/N`: real `N(0, 1/N)` diagonal,
/// complex off-diagonal entries with real and imaginary parts `N(0, 1/2N)`.
pub fn sample_gue<R: rand::Rng + ?Sized>(n: usize, rng: &mut R) -> CMatrix {
    let mut h = CMatrix::zeros((n, n));
    let diag = (1.0 / n as f64).sqrt();
    let off = (0.5 / n as f64).sqrt();
    for i in 0..n {
        let x: f64 = StandardNormal.sample(rng);
        h[[i, i]] = Complex64::new(diag * x, 0.0);
        for j in i + 1..n {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            let z = Complex64::new(off * re, off * im);
            h[[i, j]] = z;
            h[[j, i]] = z.conj();
        }
    }
    h
}

/// Haar-distributed unitary via QR of a complex Ginibre matrix with the
/// phases of `R`'s diagonal absorbed.
pub fn sample_haar_unitary<R: rand::Rng + ?Sized>(n: usize, rng: &mut R) -> CMatrix {
    let mut g = nalgebra::DMatrix::<Complex64>::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            g[(i, j)] = Complex64::new(re, im);
        }
    }
    let qr = g.qr();
    let (mut q, r) = qr.unpack();
    for j in 0..n {
        let d = r[(j, j)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { Complex64::new(1.0, 0.0) };
        for i in 0..n {
            q[(i, j)] *= phase;
        }
    }
    linalg::from_nalgebra(&q)
}

/// One `U(N)` heat-kernel sample at time `cfg.t`.
pub fn sample_unitary_heat(cfg: &EnsembleConfig, path_index: u64) -> Result<CMatrix> {
    if cfg.group != Group::Unitary {
        return Err(Error::InvalidConfig("expected the unitary group".into()));
    }
    cfg.validate()?;
    let n = cfg.n;
    if cfg.t == 0.0 {
        return Ok(linalg::identity(n));
    }
    let mut rng = cfg.path_rng(path_index, 0);
    let scale = Complex64::new(0.0, (cfg.t / cfg.steps as f64).sqrt());
    let mut u = linalg::identity(n);
    for step in 1..=cfg.steps {
        let h = sample_gue(n, &mut rng);
        u = u.dot(&linalg::expm_pade(&(h * scale)));
        if step % CHECK_INTERVAL == 0 || step == cfg.steps {
            u = linalg::reunitarize(&u);
        }
    }
    Ok(u)
}

/// One `GL(N)` heat-kernel sample with parameters `(s, t)`.
pub fn sample_gl_heat(cfg: &EnsembleConfig, path_index: u64) -> Result<CMatrix> {
    if cfg.group != Group::GeneralLinear {
        return Err(Error::InvalidConfig("expected the general linear group".into()));
    }
    cfg.validate()?;
    let mut last = 0.0;
    for attempt in 0..=MAX_RETRIES {
        match gl_path(cfg, path_index, attempt) {
            Ok(z) => return Ok(z),
            Err(condition) => {
                log::warn!(
                    "GL path {path_index} attempt {attempt}: condition estimate {condition:.3e}, resampling"
                );
                last = condition;
            }
        }
    }
    Err(Error::IllConditioned(last))
}

fn gl_path(cfg: &EnsembleConfig, path_index: u64, attempt: u64) -> std::result::Result<CMatrix, f64> {
    let n = cfg.n;
    let mut rng = cfg.path_rng(path_index, attempt);
    let delta = 1.0 / cfg.steps as f64;
    let a = Complex64::new(0.0, (delta * (cfg.s - cfg.t / 2.0)).sqrt());
    let b = Complex64::new((delta * cfg.t / 2.0).sqrt(), 0.0);
    let mut z = linalg::identity(n);
    for step in 1..=cfg.steps {
        let h = sample_gue(n, &mut rng);
        let h2 = sample_gue(n, &mut rng);
        let x = h * a + h2 * b;
        z = z.dot(&linalg::expm_pade(&x));
        if step % CHECK_INTERVAL == 0 || step == cfg.steps {
            let (condition, _) = linalg::condition_1(&z);
            if !(condition <= CONDITION_CAP) {
                return Err(condition);
            }
        }
    }
    Ok(z)
}

/// Sample from the configured group.
pub fn sample_path(cfg: &EnsembleConfig, path_index: u64) -> Result<CMatrix> {
    match cfg.group {
        Group::Unitary => sample_unitary_heat(cfg, path_index),
        Group::GeneralLinear => sample_gl_heat(cfg, path_index),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectrumKind {
    /// Eigenvalues of a unitary, projected to the unit circle.
    CircleEig,
    /// Eigenvalues of a general invertible matrix.
    ComplexEig,
    /// Eigenvalues of `ZZ*`.
    PositiveEig,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectralSample {
    pub values: Vec<Complex64>,
    pub kind: SpectrumKind,
}

pub fn extract_spectrum(z: &CMatrix, kind: SpectrumKind) -> Result<SpectralSample> {
    let values = match kind {
        SpectrumKind::CircleEig => linalg::eigenvalues(z)?
            .iter()
            .map(|l| if l.norm() > 0.0 { l / l.norm() } else { *l })
            .collect(),
        SpectrumKind::ComplexEig => linalg::eigenvalues(z)?.to_vec(),
        SpectrumKind::PositiveEig => {
            let gram = z.dot(&linalg::adjoint(z));
            linalg::hermitian_eigenvalues(&gram)?
                .into_iter()
                .map(|x| Complex64::new(x, 0.0))
                .collect()
        }
    };
    Ok(SpectralSample { values, kind })
}

/// A Laurent polynomial `f(λ) = Σ f̂(k) λ^k` with finitely many terms.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct TestFunction {
    pub coeffs: BTreeMap<i32, Complex64>,
}

/// The three norms of a test function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Norms {
    pub sobolev: f64,
    pub gevrey: f64,
    pub lipschitz: f64,
}

impl TestFunction {
    pub fn new<I: IntoIterator<Item = (i32, Complex64)>>(coeffs: I) -> Self {
        let mut out = TestFunction::default();
        for (k, c) in coeffs {
            *out.coeffs.entry(k).or_insert(Complex64::new(0.0, 0.0)) += c;
        }
        out.coeffs.retain(|_, c| *c != Complex64::new(0.0, 0.0));
        out
    }

    /// `χ_k(λ) = λ^k`.
    pub fn chi(k: i32) -> Self {
        TestFunction::new([(k, Complex64::new(1.0, 0.0))])
    }

    pub fn eval(&self, lambda: Complex64) -> Result<Complex64> {
        let mut total = Complex64::new(0.0, 0.0);
        for (&k, c) in &self.coeffs {
            if k < 0 && lambda == Complex64::new(0.0, 0.0) {
                return Err(Error::ZeroSpectrumValue);
            }
            total += c * lambda.powi(k);
        }
        Ok(total)
    }

    /// `(Σ (1 + k²)^p |f̂(k)|²)^{1/2}`.
    pub fn sobolev_norm(&self, p: f64) -> f64 {
        self.coeffs
            .iter()
            .map(|(&k, c)| (1.0 + (k * k) as f64).powf(p) * c.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    /// `(Σ e^{2σk²} |f̂(k)|²)^{1/2}`; an overflowing weight makes the norm
    /// infinite.
    pub fn gevrey_norm(&self, sigma: f64) -> f64 {
        let mut sum = 0.0;
        for (&k, c) in &self.coeffs {
            let weight = (2.0 * sigma * (k * k) as f64).exp();
            if weight.is_infinite() && c.norm_sqr() > 0.0 {
                log::warn!("Gevrey weight e^(2σk²) overflows at k = {k}, σ = {sigma}");
                return f64::INFINITY;
            }
            sum += weight * c.norm_sqr();
        }
        sum.sqrt()
    }

    /// `Σ |k| |f̂(k)|`, an upper bound for `sup |f′|` on the circle.
    pub fn lipschitz_norm(&self) -> f64 {
        self.coeffs
            .iter()
            .map(|(&k, c)| k.unsigned_abs() as f64 * c.norm())
            .sum()
    }
}

pub fn test_function_norms(f: &TestFunction, p: f64, sigma: f64) -> Norms {
    Norms {
        sobolev: f.sobolev_norm(p),
        gevrey: f.gevrey_norm(sigma),
        lipschitz: f.lipschitz_norm(),
    }
}

/// `(1/N) Σ_i f(λ_i)`.
pub fn empirical_integral(sample: &SpectralSample, f: &TestFunction) -> Result<Complex64> {
    if sample.values.is_empty() {
        return Err(Error::InvalidParameter("empty spectrum".into()));
    }
    let mut total = Complex64::new(0.0, 0.0);
    for &l in &sample.values {
        total += f.eval(l)?;
    }
    Ok(total / sample.values.len() as f64)
}

/// Which variance inequality to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "regime", rename_all = "snake_case")]
pub enum Regime {
    /// `2t/N² · ‖f‖²_Lip` (unitary, Lipschitz `f`).
    Lipschitz,
    /// `(8/N^{2p−1}) ‖f‖_{H_p} (√(t/(3−2p)) + 1/√(2p−1))²`, `1 < p < 3/2`.
    Sobolev { p: f64 },
    /// `(1/N²)(4/δ²)(1 + ½√(π/(2sδ))) ‖f‖²_{G_σ}`, `δ = ½(σ/s − 1)`.
    Gevrey { sigma: f64, s: f64 },
    /// As [`Regime::Gevrey`] for the singular values: `δ = ½(σ/(4s) − 1)`
    /// and `π/(8sδ)` under the root.
    GevreyPositive { sigma: f64, s: f64 },
}

fn gevrey_rhs(norm: f64, delta: f64, root_denominator: f64, n: usize) -> Result<f64> {
    let n = n as f64;
    if n <= (2.0 / delta).sqrt() {
        return Err(Error::RegimeViolation(format!(
            "Gevrey bound needs N > √(2/δ) = {:.3}",
            (2.0 / delta).sqrt()
        )));
    }
    let constant = 4.0 / (delta * delta)
        * (1.0 + 0.5 * (std::f64::consts::PI / (root_denominator * delta)).sqrt());
    Ok(constant * norm * norm / (n * n))
}

/// Right-hand side of the variance inequality for `∫ f dν̃` in `regime`.
pub fn variance_bound_rhs(f: &TestFunction, t: f64, n: usize, regime: Regime) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidParameter("matrix size must be ≥ 1".into()));
    }
    let nf = n as f64;
    match regime {
        Regime::Lipschitz => {
            if t < 0.0 {
                return Err(Error::RegimeViolation("Lipschitz bound needs t ≥ 0".into()));
            }
            let lip = f.lipschitz_norm();
            Ok(2.0 * t / (nf * nf) * lip * lip)
        }
        Regime::Sobolev { p } => {
            if !(p > 1.0 && p < 1.5) || t < 0.0 {
                return Err(Error::RegimeViolation(format!(
                    "Sobolev bound needs 1 < p < 3/2 and t ≥ 0, got p = {p}, t = {t}"
                )));
            }
            let c = (t / (3.0 - 2.0 * p)).sqrt() + 1.0 / (2.0 * p - 1.0).sqrt();
            Ok(8.0 / nf.powf(2.0 * p - 1.0) * f.sobolev_norm(p) * c * c)
        }
        Regime::Gevrey { sigma, s } => {
            if !(s > 0.0 && sigma > s) {
                return Err(Error::RegimeViolation(format!(
                    "Gevrey bound needs σ > s > 0, got σ = {sigma}, s = {s}"
                )));
            }
            let delta = 0.5 * (sigma / s - 1.0);
            gevrey_rhs(f.gevrey_norm(sigma), delta, 2.0 * s, n)
        }
        Regime::GevreyPositive { sigma, s } => {
            if !(s > 0.0 && sigma > 4.0 * s) {
                return Err(Error::RegimeViolation(format!(
                    "positive Gevrey bound needs σ > 4s > 0, got σ = {sigma}, s = {s}"
                )));
            }
            let delta = 0.5 * (sigma / (4.0 * s) - 1.0);
            gevrey_rhs(f.gevrey_norm(sigma), delta, 8.0 * s, n)
        }
    }
}

/// Outcome of comparing an observed variance with a bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundCheck {
    Holds,
    /// Only for the Sobolev regime: the bound fails but holds once the
    /// norm factor is squared.
    Flagged,
    Violated,
}

/// Compares `observed` (plus a confidence `margin`) with the bound.
pub fn check_variance_bound(
    observed: f64,
    margin: f64,
    f: &TestFunction,
    t: f64,
    n: usize,
    regime: Regime,
) -> Result<BoundCheck> {
    let rhs = variance_bound_rhs(f, t, n, regime)?;
    let low = observed - margin;
    if low <= rhs {
        return Ok(BoundCheck::Holds);
    }
    if let Regime::Sobolev { p } = regime {
        let norm = f.sobolev_norm(p);
        if low <= rhs * norm.max(1.0) {
            return Ok(BoundCheck::Flagged);
        }
    }
    Ok(BoundCheck::Violated)
}

/// What is measured on each sampled matrix.
#[derive(Debug, Clone, PartialEq)]
pub enum ObservableKind {
    /// Trace polynomial in the sampled matrix.
    Trace(TracePoly),
    /// Trace polynomial in `ZZ*`.
    GramTrace(TracePoly),
    /// `∫ f` against the empirical eigenvalue measure.
    Spectral(TestFunction),
    /// `∫ f` against the empirical eigenvalue measure of `ZZ*`.
    GramSpectral(TestFunction),
    /// `‖f(Z)‖_p^p = tr[(f f*)^{p/2}]`.
    LpPower(WordPoly, u32),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Observable {
    pub name: String,
    pub kind: ObservableKind,
}

impl Observable {
    pub fn new(name: impl Into<String>, kind: ObservableKind) -> Self {
        Observable {
            name: name.into(),
            kind,
        }
    }

    fn measure(&self, z: &CMatrix, group: Group) -> Result<Complex64> {
        match &self.kind {
            ObservableKind::Trace(p) => p.eval_on_matrix(z),
            ObservableKind::GramTrace(p) => p.eval_on_matrix(&z.dot(&linalg::adjoint(z))),
            ObservableKind::Spectral(f) => {
                let kind = match group {
                    Group::Unitary => SpectrumKind::CircleEig,
                    Group::GeneralLinear => SpectrumKind::ComplexEig,
                };
                empirical_integral(&extract_spectrum(z, kind)?, f)
            }
            ObservableKind::GramSpectral(f) => {
                empirical_integral(&extract_spectrum(z, SpectrumKind::PositiveEig)?, f)
            }
            ObservableKind::LpPower(f, p) => {
                Ok(Complex64::new(lp_norm_trace(z, f, *p)?.powi(*p as i32), 0.0))
            }
        }
    }
}

/// Mean, variance and standard error of one observable.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ObservableSummary {
    pub name: String,
    /// `[re, im]`.
    pub mean: [f64; 2],
    /// Unbiased sample variance `Σ|X − X̄|²/(n − 1)`.
    pub variance: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McSummary {
    pub config: EnsembleConfig,
    pub observables: Vec<ObservableSummary>,
}

impl McSummary {
    pub fn get(&self, name: &str) -> Option<&ObservableSummary> {
        self.observables.iter().find(|o| o.name == name)
    }
}

/// Single-pass mean/variance accumulator for complex samples.
#[derive(Debug, Clone, Copy, Default)]
pub struct Welford {
    count: u64,
    mean: Complex64,
    m2: f64,
}

impl Welford {
    pub fn push(&mut self, x: Complex64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        let delta2 = x - self.mean;
        self.m2 += (delta.conj() * delta2).re;
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> Complex64 {
        self.mean
    }

    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            self.m2 / (self.count - 1) as f64
        }
    }

    pub fn stderr(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            (self.variance() / self.count as f64).sqrt()
        }
    }
}

/// Per-path observable values, in path order.
pub fn mc_values(cfg: &EnsembleConfig, observables: &[Observable]) -> Result<Vec<Vec<Complex64>>> {
    Ok(run_paths(cfg, observables, None)?.0)
}

type PathRecords = (Vec<Vec<Complex64>>, Vec<SpectralSample>);

fn run_paths(
    cfg: &EnsembleConfig,
    observables: &[Observable],
    spectrum: Option<SpectrumKind>,
) -> Result<PathRecords> {
    cfg.validate()?;
    if observables.is_empty() {
        return Err(Error::InvalidConfig("no observables requested".into()));
    }
    let rows: Vec<(Vec<Complex64>, Option<SpectralSample>)> = (0..cfg.paths as u64)
        .into_par_iter()
        .map(|j| {
            let z = sample_path(cfg, j)?;
            let values = observables
                .iter()
                .map(|o| o.measure(&z, cfg.group))
                .collect::<Result<Vec<_>>>()?;
            let spec = spectrum.map(|kind| extract_spectrum(&z, kind)).transpose()?;
            Ok((values, spec))
        })
        .collect::<Result<_>>()?;
    let mut values = Vec::with_capacity(rows.len());
    let mut spectra = Vec::new();
    for (v, s) in rows {
        values.push(v);
        spectra.extend(s);
    }
    Ok((values, spectra))
}

fn summarize(cfg: &EnsembleConfig, observables: &[Observable], values: &[Vec<Complex64>]) -> McSummary {
    let mut acc = vec![Welford::default(); observables.len()];
    for row in values {
        for (a, x) in acc.iter_mut().zip(row) {
            a.push(*x);
        }
    }
    McSummary {
        config: *cfg,
        observables: observables
            .iter()
            .zip(&acc)
            .map(|(o, a)| ObservableSummary {
                name: o.name.clone(),
                mean: [a.mean().re, a.mean().im],
                variance: a.variance(),
                stderr: a.stderr(),
            })
            .collect(),
    }
}

/// Runs the ensemble and summarizes every observable.
pub fn mc_experiment(cfg: &EnsembleConfig, observables: &[Observable]) -> Result<McSummary> {
    let (values, _) = run_paths(cfg, observables, None)?;
    Ok(summarize(cfg, observables, &values))
}

/// [`mc_experiment`] that also returns each path's spectrum, in path order.
pub fn mc_experiment_with_spectra(
    cfg: &EnsembleConfig,
    observables: &[Observable],
    kind: SpectrumKind,
) -> Result<(McSummary, Vec<SpectralSample>)> {
    let (values, spectra) = run_paths(cfg, observables, Some(kind))?;
    Ok((summarize(cfg, observables, &values), spectra))
}

/// Spectra of every path, in path order.
pub fn sample_spectra(cfg: &EnsembleConfig, kind: SpectrumKind) -> Result<Vec<SpectralSample>> {
    cfg.validate()?;
    (0..cfg.paths as u64)
        .into_par_iter()
        .map(|j| extract_spectrum(&sample_path(cfg, j)?, kind))
        .collect()
}

/// `((1/N) Tr[(AA*)^{p/2}])^{1/p}` with `A = f(Z, Z*)`.
pub fn lp_norm_trace(z: &CMatrix, f: &WordPoly, p: u32) -> Result<f64> {
    if p < 2 || p % 2 != 0 {
        return Err(Error::PreconditionViolated(format!(
            "L^p exponent must be an even integer ≥ 2, got {p}"
        )));
    }
    let a = f.eval_matrix(z)?;
    let gram = a.dot(&linalg::adjoint(&a));
    let power = linalg::matrix_power(&gram, p / 2);
    let tr = linalg::normalized_trace(&power).re.max(0.0);
    Ok(tr.powf(1.0 / p as f64))
}

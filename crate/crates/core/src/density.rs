//! Densities of the limit laws.
//!
//! For `t > 0` the law lives on the unit circle and its density with respect
//! to normalized Haar measure is `Re z`, where `z` is the root with positive
//! real part of
//!
//! ```text
//! (z − 1)/(z + 1) · e^{tz/2} = e^{iθ}.
//! ```
//!
//! For `τ < 0` the law lives on `ℝ₊` with Lebesgue density `Im z / (πx)`,
//! `z` the root with positive imaginary part of
//!
//! ```text
//! z/(z − 1) · e^{−τ(z − ½)} = x.
//! ```
//!
//! Roots are traced by Newton continuation from a point where they are known
//! in closed form (θ = 0, resp. x = 1).

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};

/// Largest continuation step in θ.
const MAX_THETA_STEP: f64 = PI / 512.0;
/// Largest continuation step in `ln x`.
const MAX_LOG_STEP: f64 = 1.0 / 256.0;
/// Required residual of every returned root.
const RESIDUAL_TOL: f64 = 1e-12;
/// Within this distance of a support edge a stalled solve returns 0.
const EDGE_BAND: f64 = 1e-6;
const NEWTON_ITERS: usize = 60;
/// Number of step halvings before a continuation gives up.
const RETRY_LADDER: usize = 24;
/// Largest accepted root displacement per continuation step, relative to
/// `1 + |z|`; larger moves mean Newton left the branch.
const MAX_JUMP: f64 = 0.25;
/// Roots with `|F'(z)|` below this are near-double and are not cached as
/// continuation seeds.
const CACHE_CONDITION: f64 = 1e-3;

/// Support `{e^{iθ} : |θ| ≤ half_width}` of the circle law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ArcSupport {
    pub half_width: f64,
}

impl ArcSupport {
    pub fn contains(&self, theta: f64) -> bool {
        theta.abs() <= self.half_width
    }

    pub fn is_full_circle(&self) -> bool {
        self.half_width >= PI
    }
}

/// Support `[r_minus, r_plus]` of the half-line law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IntervalSupport {
    pub r_minus: f64,
    pub r_plus: f64,
}

impl IntervalSupport {
    pub fn contains(&self, x: f64) -> bool {
        (self.r_minus..=self.r_plus).contains(&x)
    }
}

/// Half-width `½√(t(4−t)) + arccos(1 − t/2)` for `t < 4`, `π` beyond.
pub fn unitary_support(t: f64) -> Result<ArcSupport> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "circle law needs t > 0, got {t}"
        )));
    }
    let half_width = if t >= 4.0 {
        PI
    } else {
        (0.5 * (t * (4.0 - t)).sqrt() + (1.0 - t / 2.0).acos()).min(PI)
    };
    Ok(ArcSupport { half_width })
}

/// `r_± = ((2 − τ ± s)/2)·e^{±s/2}` with `s = √(τ(τ − 4))`.
pub fn positive_support(tau: f64) -> Result<IntervalSupport> {
    if !(tau < 0.0) || !tau.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "half-line law needs τ < 0, got {tau}"
        )));
    }
    let s = (tau * (tau - 4.0)).sqrt();
    Ok(IntervalSupport {
        r_minus: 0.5 * (2.0 - tau - s) * (-0.5 * s).exp(),
        r_plus: 0.5 * (2.0 - tau + s) * (0.5 * s).exp(),
    })
}

fn bisect(mut lo: f64, mut hi: f64, f: impl Fn(f64) -> f64) -> f64 {
    let f_lo = f(lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if (f(mid) > 0.0) == (f_lo > 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// The implicit equation of one law, in logarithmic form
/// `F(z) = log(lhs(z)/target) = 0`.
trait Equation {
    /// `lhs(z)/target`.
    fn ratio(&self, z: Complex64, param: f64) -> Complex64;
    /// `F'(z)`.
    fn log_derivative(&self, z: Complex64) -> Complex64;
    /// `∂F/∂param`.
    fn param_derivative(&self) -> Complex64;
    /// Branch condition on the root.
    fn admissible(&self, z: Complex64) -> bool;
    fn residual(&self, z: Complex64, param: f64) -> f64;
}

struct Circle {
    t: f64,
}

impl Equation for Circle {
    fn ratio(&self, z: Complex64, theta: f64) -> Complex64 {
        (z - 1.0) / (z + 1.0) * (z * (self.t / 2.0) - Complex64::new(0.0, theta)).exp()
    }

    fn log_derivative(&self, z: Complex64) -> Complex64 {
        2.0 / (z * z - 1.0) + self.t / 2.0
    }

    fn param_derivative(&self) -> Complex64 {
        Complex64::new(0.0, -1.0)
    }

    fn admissible(&self, z: Complex64) -> bool {
        z.re > 0.0
    }

    fn residual(&self, z: Complex64, theta: f64) -> f64 {
        ((z - 1.0) / (z + 1.0) * (z * (self.t / 2.0)).exp() - Complex64::from_polar(1.0, theta))
            .norm()
    }
}

/// Parameterized by `ln x`.
struct Line {
    tau: f64,
}

impl Equation for Line {
    fn ratio(&self, z: Complex64, log_x: f64) -> Complex64 {
        z / (z - 1.0) * (-(z - 0.5) * self.tau - log_x).exp()
    }

    fn log_derivative(&self, z: Complex64) -> Complex64 {
        -1.0 / (z * (z - 1.0)) - self.tau
    }

    fn param_derivative(&self) -> Complex64 {
        Complex64::new(-1.0, 0.0)
    }

    fn admissible(&self, z: Complex64) -> bool {
        z.im > 0.0
    }

    fn residual(&self, z: Complex64, log_x: f64) -> f64 {
        (self.ratio(z, log_x) - 1.0).norm()
    }
}

fn newton<E: Equation>(eq: &E, seed: Complex64, param: f64) -> Option<Complex64> {
    let mut z = seed;
    for _ in 0..NEWTON_ITERS {
        let f = eq.ratio(z, param).ln();
        let step = f / eq.log_derivative(z);
        if !step.re.is_finite() || !step.im.is_finite() {
            return None;
        }
        z -= step;
        if step.norm() <= 1e-15 * (1.0 + z.norm()) {
            break;
        }
    }
    (eq.residual(z, param) <= RESIDUAL_TOL && eq.admissible(z)).then_some(z)
}

/// Moves a root from `from` to `to` along the parameter, halving the step
/// on failure. Returns the root at the furthest parameter reached.
fn continue_root<E: Equation>(
    eq: &E,
    mut param: f64,
    mut z: Complex64,
    to: f64,
    max_step: f64,
) -> std::result::Result<Complex64, (f64, Complex64)> {
    let mut step = max_step;
    let mut failures = 0;
    while param != to {
        let h = (to - param).clamp(-step, step);
        let next = if (to - param).abs() <= step { to } else { param + h };
        let dp = next - param;
        let predictor = z - eq.param_derivative() / eq.log_derivative(z) * dp;
        let near = |root: &Complex64| (root - z).norm() <= MAX_JUMP * (1.0 + z.norm());
        let solved = newton(eq, predictor, next)
            .filter(near)
            .or_else(|| newton(eq, z, next).filter(near));
        match solved {
            Some(root) => {
                param = next;
                z = root;
                failures = 0;
                step = (step * 2.0).min(max_step);
            }
            None => {
                failures += 1;
                if failures > RETRY_LADDER {
                    return Err((param, z));
                }
                step *= 0.5;
            }
        }
    }
    Ok(z)
}

/// Circle density evaluator with a continuation cache. One instance serves
/// one sweep; it is not meant to be shared between threads.
#[derive(Debug, Clone)]
pub struct CircleDensity {
    t: f64,
    support: ArcSupport,
    /// Solved roots, sorted by θ ∈ [0, half_width].
    cache: Vec<(f64, Complex64)>,
}

impl CircleDensity {
    pub fn new(t: f64) -> Result<Self> {
        let support = unitary_support(t)?;
        let seed = bisect(1.0, 1.0 + 40.0 / t, |x| {
            ((x - 1.0) / (x + 1.0)).ln() + t * x / 2.0
        });
        let eq = Circle { t };
        let root = newton(&eq, Complex64::new(seed, 0.0), 0.0).ok_or_else(|| {
            Error::NoConvergence(format!("circle density seed at θ = 0, t = {t}"))
        })?;
        Ok(CircleDensity {
            t,
            support,
            cache: vec![(0.0, root)],
        })
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn support(&self) -> ArcSupport {
        self.support
    }

    /// The root `z` at angle θ, or `None` outside the support.
    pub fn root(&mut self, theta: f64) -> Result<Option<Complex64>> {
        let a = theta.abs();
        if !self.support.contains(a) {
            return Ok(None);
        }
        let pos = self.cache.partition_point(|(th, _)| *th < a);
        let (from, z0) = if pos == self.cache.len() {
            self.cache[pos - 1]
        } else if pos == 0 || (self.cache[pos].0 - a) < (a - self.cache[pos - 1].0) {
            self.cache[pos]
        } else {
            self.cache[pos - 1]
        };
        if from == a {
            return Ok(Some(conj_if(z0, theta < 0.0)));
        }
        let eq = Circle { t: self.t };
        match continue_root(&eq, from, z0, a, MAX_THETA_STEP) {
            Ok(z) => {
                if eq.log_derivative(z).norm() >= CACHE_CONDITION {
                    let pos = self.cache.partition_point(|(th, _)| *th < a);
                    self.cache.insert(pos, (a, z));
                }
                Ok(Some(conj_if(z, theta < 0.0)))
            }
            Err(_) if self.support.half_width - a <= EDGE_BAND => Ok(None),
            Err((reached, _)) => Err(Error::NoConvergence(format!(
                "circle density at θ = {theta}, t = {}: continuation stalled at θ = {reached}",
                self.t
            ))),
        }
    }

    /// Density at `e^{iθ}` with respect to normalized Haar measure.
    pub fn density(&mut self, theta: f64) -> Result<f64> {
        Ok(self.root(theta)?.map_or(0.0, |z| z.re.max(0.0)))
    }
}

fn conj_if(z: Complex64, flag: bool) -> Complex64 {
    if flag {
        z.conj()
    } else {
        z
    }
}

/// Half-line density evaluator with a continuation cache keyed by `ln x`.
#[derive(Debug, Clone)]
pub struct LineDensity {
    tau: f64,
    support: IntervalSupport,
    cache: Vec<(f64, Complex64)>,
}

impl LineDensity {
    pub fn new(tau: f64) -> Result<Self> {
        let support = positive_support(tau)?;
        let a = -tau;
        // on z = ½ + iy the modulus of the left side is 1; its argument is
        // 2·arctan(2y) − π + a·y, which rises from −π to a positive value on (0, π/a]
        let y = bisect(0.0, PI / a, |y| 2.0 * (2.0 * y).atan() - PI + a * y);
        let eq = Line { tau };
        let root = newton(&eq, Complex64::new(0.5, y), 0.0).ok_or_else(|| {
            Error::NoConvergence(format!("half-line density seed at x = 1, τ = {tau}"))
        })?;
        Ok(LineDensity {
            tau,
            support,
            cache: vec![(0.0, root)],
        })
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn support(&self) -> IntervalSupport {
        self.support
    }

    pub fn root(&mut self, x: f64) -> Result<Option<Complex64>> {
        if !(x > 0.0) || !self.support.contains(x) {
            return Ok(None);
        }
        let l = x.ln();
        let pos = self.cache.partition_point(|(p, _)| *p < l);
        let (from, z0) = if pos == self.cache.len() {
            self.cache[pos - 1]
        } else if pos == 0 || (self.cache[pos].0 - l) < (l - self.cache[pos - 1].0) {
            self.cache[pos]
        } else {
            self.cache[pos - 1]
        };
        if from == l {
            return Ok(Some(z0));
        }
        let eq = Line { tau: self.tau };
        match continue_root(&eq, from, z0, l, MAX_LOG_STEP) {
            Ok(z) => {
                if eq.log_derivative(z).norm() >= CACHE_CONDITION {
                    let pos = self.cache.partition_point(|(p, _)| *p < l);
                    self.cache.insert(pos, (l, z));
                }
                Ok(Some(z))
            }
            Err(_)
                if x - self.support.r_minus <= EDGE_BAND
                    || self.support.r_plus - x <= EDGE_BAND * self.support.r_plus =>
            {
                Ok(None)
            }
            Err((reached, _)) => Err(Error::NoConvergence(format!(
                "half-line density at x = {x}, τ = {}: continuation stalled at x = {}",
                self.tau,
                reached.exp()
            ))),
        }
    }

    /// Lebesgue density at `x`.
    pub fn density(&mut self, x: f64) -> Result<f64> {
        Ok(self
            .root(x)?
            .map_or(0.0, |z| (z.im / (PI * x)).max(0.0)))
    }
}

/// Circle density at `e^{iθ}` (normalized Haar reference measure).
pub fn unitary_density(theta: f64, t: f64) -> Result<f64> {
    if !theta.is_finite() || theta.abs() > PI {
        return Err(Error::InvalidParameter(format!("θ must lie in [−π, π], got {theta}")));
    }
    CircleDensity::new(t)?.density(theta)
}

/// Half-line density at `x` for `τ < 0`.
pub fn positive_density(x: f64, tau: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::InvalidParameter(format!("x must be positive, got {x}")));
    }
    LineDensity::new(tau)?.density(x)
}

/// Adaptive Simpson quadrature of `f` on `[a, b]` to absolute tolerance
/// `tol`.
pub fn integrate<F>(mut f: F, a: f64, b: f64, tol: f64) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    fn simpson(a: f64, fa: f64, b: f64, fb: f64, fm: f64) -> f64 {
        (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    }
    #[allow(clippy::too_many_arguments)]
    fn rec<F: FnMut(f64) -> Result<f64>>(
        f: &mut F,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        m: f64,
        fm: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> Result<f64> {
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm)?;
        let frm = f(rm)?;
        let left = simpson(a, fa, m, fm, flm);
        let right = simpson(m, fm, b, fb, frm);
        let diff = left + right - whole;
        if depth == 0 || diff.abs() <= 15.0 * tol {
            return Ok(left + right + diff / 15.0);
        }
        Ok(rec(f, a, fa, m, fm, lm, flm, left, tol / 2.0, depth - 1)?
            + rec(f, m, fm, b, fb, rm, frm, right, tol / 2.0, depth - 1)?)
    }
    if a == b {
        return Ok(0.0);
    }
    // a few fixed panels first so narrow features are not missed
    const PANELS: usize = 16;
    let width = (b - a) / PANELS as f64;
    let mut total = 0.0;
    for i in 0..PANELS {
        let lo = a + width * i as f64;
        let hi = if i + 1 == PANELS { b } else { lo + width };
        let mid = 0.5 * (lo + hi);
        let (flo, fhi, fmid) = (f(lo)?, f(hi)?, f(mid)?);
        let whole = simpson(lo, flo, hi, fhi, fmid);
        total += rec(&mut f, lo, flo, hi, fhi, mid, fmid, whole, tol / PANELS as f64, 40)?;
    }
    Ok(total)
}

/// Quadrature tolerance used by the moment and mass helpers.
pub const QUAD_TOL: f64 = 1e-8;

/// `∫ g(θ) ϱ_t(θ) dθ/2π` over the support.
pub fn circle_integral(
    density: &mut CircleDensity,
    g: impl Fn(f64) -> f64,
    tol: f64,
) -> Result<f64> {
    let w = density.support().half_width;
    let raw = integrate(|th| Ok(g(th) * density.density(th)?), -w, w, tol * 2.0 * PI)?;
    Ok(raw / (2.0 * PI))
}

/// `∫ g(x) ϱ_τ(x) dx` over the support.
pub fn line_integral(density: &mut LineDensity, g: impl Fn(f64) -> f64, tol: f64) -> Result<f64> {
    let s = density.support();
    integrate(|x| Ok(g(x) * density.density(x)?), s.r_minus, s.r_plus, tol)
}

/// `∫ cos(nθ) ϱ_t` (the imaginary part vanishes by symmetry).
pub fn circle_moment(t: f64, n: i32, tol: f64) -> Result<f64> {
    let mut d = CircleDensity::new(t)?;
    circle_integral(&mut d, |th| (n as f64 * th).cos(), tol)
}

/// `∫ xⁿ ϱ_τ(x) dx`.
pub fn line_moment(tau: f64, n: i32, tol: f64) -> Result<f64> {
    let mut d = LineDensity::new(tau)?;
    line_integral(&mut d, |x| x.powi(n), tol)
}

/// Evenly spaced samples of a density for plotting or export.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DensityGrid {
    pub points: Vec<f64>,
    pub values: Vec<f64>,
}

/// Circle density at the midpoints of `grid` equal cells of `[−π, π]`.
pub fn circle_grid(t: f64, grid: usize) -> Result<DensityGrid> {
    if grid == 0 {
        return Err(Error::InvalidConfig("grid must have at least one point".into()));
    }
    let mut d = CircleDensity::new(t)?;
    let h = 2.0 * PI / grid as f64;
    let points: Vec<f64> = (0..grid).map(|i| -PI + (i as f64 + 0.5) * h).collect();
    let values = points.iter().map(|&th| d.density(th)).collect::<Result<_>>()?;
    Ok(DensityGrid { points, values })
}

/// Half-line density at the midpoints of `grid` equal cells of the support.
pub fn line_grid(tau: f64, grid: usize) -> Result<DensityGrid> {
    if grid == 0 {
        return Err(Error::InvalidConfig("grid must have at least one point".into()));
    }
    let mut d = LineDensity::new(tau)?;
    let s = d.support();
    let h = (s.r_plus - s.r_minus) / grid as f64;
    let points: Vec<f64> = (0..grid).map(|i| s.r_minus + (i as f64 + 0.5) * h).collect();
    let values = points.iter().map(|&x| d.density(x)).collect::<Result<_>>()?;
    Ok(DensityGrid { points, values })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::moments::nu_moment;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn support_examples() {
        assert_eq!(unitary_support(4.0).unwrap().half_width, PI);
        assert_eq!(unitary_support(7.0).unwrap().half_width, PI);
        assert!((unitary_support(2.0).unwrap().half_width - (1.0 + PI / 2.0)).abs() < 1e-14);
        assert!(unitary_support(1e-10).unwrap().half_width < 1e-4);
        assert!(unitary_support(0.0).is_err());
        assert!(unitary_support(-1.0).is_err());

        let s = positive_support(-1.0).unwrap();
        let r5 = 5f64.sqrt();
        assert!((s.r_minus - 0.5 * (3.0 - r5) * (-r5 / 2.0).exp()).abs() < 1e-14);
        assert!((s.r_plus - 0.5 * (3.0 + r5) * (r5 / 2.0).exp()).abs() < 1e-12);
        assert!((s.r_minus - 0.124_873).abs() < 1e-5);
        assert!((s.r_plus - 8.005).abs() < 1e-2);
        let tiny = positive_support(-1e-12).unwrap();
        assert!((tiny.r_minus - 1.0).abs() < 1e-5 && (tiny.r_plus - 1.0).abs() < 1e-5);
        for tau in [-0.1, -1.0, -3.0, -10.0] {
            let s = positive_support(tau).unwrap();
            assert!((s.r_minus * s.r_plus - 1.0).abs() < 1e-12);
            assert!(s.r_minus <= 1.0 && 1.0 <= s.r_plus);
        }
        assert!(positive_support(0.0).is_err());
    }

    #[test]
    fn residual_contract_and_branch() {
        for t in [0.5, 1.0, 2.0, 4.0, 6.0] {
            let mut d = CircleDensity::new(t).unwrap();
            let w = d.support().half_width;
            for i in 0..50 {
                let th = -w + 2.0 * w * (i as f64 + 0.5) / 50.0;
                if let Some(z) = d.root(th).unwrap() {
                    let lhs = (z - 1.0) / (z + 1.0) * (z * (t / 2.0)).exp();
                    assert!((lhs - Complex64::from_polar(1.0, th)).norm() <= 1e-12);
                    assert!(z.re > 0.0);
                }
            }
        }
        for tau in [-0.5, -1.0, -2.0] {
            let mut d = LineDensity::new(tau).unwrap();
            let s = d.support();
            for i in 0..50 {
                let x = s.r_minus + (s.r_plus - s.r_minus) * (i as f64 + 0.5) / 50.0;
                let z = d.root(x).unwrap().unwrap();
                let lhs = z / (z - 1.0) * (-(z - 0.5) * tau).exp();
                assert!((lhs / x - 1.0).norm() <= 1e-12);
                assert!(z.im > 0.0);
            }
        }
    }

    #[test]
    fn outside_support_is_zero() {
        let w = unitary_support(1.0).unwrap().half_width;
        assert_eq!(unitary_density(w + 0.01, 1.0).unwrap(), 0.0);
        assert_eq!(unitary_density(-PI, 1.0).unwrap(), 0.0);
        let s = positive_support(-1.0).unwrap();
        assert_eq!(positive_density(s.r_plus * 1.01, -1.0).unwrap(), 0.0);
        assert_eq!(positive_density(s.r_minus * 0.99, -1.0).unwrap(), 0.0);
        assert!(unitary_density(4.0, 1.0).is_err());
        assert!(positive_density(-1.0, -1.0).is_err());
    }

    #[test]
    fn circle_density_is_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for t in [0.5, 2.0, 5.0] {
            let mut d = CircleDensity::new(t).unwrap();
            for _ in 0..20 {
                let th: f64 = rng.random_range(-PI..PI);
                assert!((d.density(th).unwrap() - d.density(-th).unwrap()).abs() < 1e-12);
                // fresh evaluator, different continuation path
                assert!((unitary_density(th, t).unwrap() - d.density(th).unwrap()).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn nonnegative_on_parameter_grids() {
        for t in [0.5, 1.0, 2.0, 4.0, 6.0] {
            let g = circle_grid(t, 400).unwrap();
            assert!(g.values.iter().all(|&v| v >= -1e-12));
        }
        for tau in [-0.5, -1.0, -2.0] {
            let g = line_grid(tau, 400).unwrap();
            assert!(g.values.iter().all(|&v| v >= -1e-12));
        }
    }

    #[test]
    fn full_circle_from_t_four() {
        let g = circle_grid(4.0, 256).unwrap();
        assert!(g.values.iter().all(|&v| v > 0.0));
        let g = circle_grid(6.0, 64).unwrap();
        assert!(g.values.iter().all(|&v| v > 0.0));
    }

    #[test]
    fn circle_mass_and_moments() {
        for t in [0.5, 1.0, 2.0, 4.0, 6.0] {
            let mut d = CircleDensity::new(t).unwrap();
            let mass = circle_integral(&mut d, |_| 1.0, QUAD_TOL).unwrap();
            assert!((mass - 1.0).abs() < 1e-6, "t={t} mass={mass}");
            for n in 1..=6 {
                let m = circle_integral(&mut d, |th| (n as f64 * th).cos(), QUAD_TOL).unwrap();
                assert!((m - nu_moment(n, t)).abs() < 1e-5, "t={t} n={n}");
                let odd = circle_integral(&mut d, |th| (n as f64 * th).sin(), QUAD_TOL).unwrap();
                assert!(odd.abs() < 1e-8);
            }
        }
    }

    #[test]
    fn line_mass_and_moments() {
        for tau in [-0.5, -1.0, -2.0] {
            let mut d = LineDensity::new(tau).unwrap();
            let mass = line_integral(&mut d, |_| 1.0, QUAD_TOL).unwrap();
            assert!((mass - 1.0).abs() < 1e-6, "τ={tau} mass={mass}");
            let first = line_integral(&mut d, |x| x, QUAD_TOL).unwrap();
            assert!((first - (-tau / 2.0).exp()).abs() < 1e-6);
            for n in 2..=6 {
                let want = nu_moment(n, tau);
                let got = line_integral(&mut d, |x| x.powi(n), QUAD_TOL * want).unwrap();
                assert!((got - want).abs() < 1e-5 * want.max(1.0), "τ={tau} n={n}");
            }
        }
    }

    #[test]
    fn second_moment_zero_at_t_one() {
        let got = circle_moment(1.0, 2, QUAD_TOL).unwrap();
        assert!(got.abs() < 1e-7);
        assert!(nu_moment(2, 1.0).abs() < 1e-15);
    }

    #[test]
    fn line_density_is_unimodal() {
        for tau in [-0.5, -1.0, -2.0] {
            let mut d = LineDensity::new(tau).unwrap();
            let s = d.support();
            // geometric grid: the peak sits close to r_minus
            let ratio = (s.r_plus / s.r_minus).ln() / 1025.0;
            let values: Vec<f64> = (1..=1024)
                .map(|i| d.density(s.r_minus * (ratio * i as f64).exp()).unwrap())
                .collect();
            let signs: Vec<bool> = values.windows(2).map(|w| w[1] > w[0]).collect();
            let changes = signs.windows(2).filter(|w| w[0] != w[1]).count();
            assert_eq!(changes, 1, "τ={tau}");
        }
    }

    #[test]
    fn no_mass_outside_support() {
        let mut d = CircleDensity::new(1.0).unwrap();
        let w = d.support().half_width;
        let outside = integrate(|th| d.density(th), w, PI, 1e-12).unwrap();
        assert!(outside.abs() < 1e-9);
        let mut d = LineDensity::new(-1.0).unwrap();
        let s = d.support();
        let outside = integrate(|x| d.density(x), s.r_plus, s.r_plus + 5.0, 1e-12).unwrap()
            + integrate(|x| d.density(x), 1e-6, s.r_minus, 1e-12).unwrap();
        assert!(outside.abs() < 1e-9);
    }

    #[test]
    fn quadrature_oracle() {
        let v = integrate(|x| Ok(x.sin()), 0.0, PI, 1e-10).unwrap();
        assert!((v - 2.0).abs() < 1e-9);
        let v = integrate(|x| Ok((1.0 - x * x).max(0.0).sqrt()), -1.0, 1.0, 1e-9).unwrap();
        assert!((v - PI / 2.0).abs() < 1e-7);
    }
}

//! Heat flow on holomorphic trace polynomials.
//!
//! On `HP`, half the Laplacian of `U(N)` acts through two differential
//! operators on the polynomial algebra:
//!
//! ```text
//! ½Δ(P∘V_N) = −[(D + N⁻²L) P]∘V_N
//! D = ½ Σ_{|k|≥1} |k| v_k ∂_k
//!   + ½ Σ_{k≥2} k [ (Σ_{j=1}^{k−1} v_j v_{k−j}) ∂_k + (Σ_{j=1}^{k−1} v_{−j} v_{−(k−j)}) ∂_{−k} ]
//! L = ½ Σ_{|j|,|k|≥1} j k v_{j+k} ∂_j ∂_k          (v_0 = 1)
//! ```
//!
//! `D` preserves trace degree, `L` never raises it, and both preserve the
//! signed degree `Σ k e_k`. The finite-dimensional blocks of fixed signed
//! degree and bounded trace degree are exponentiated densely, which gives
//! `E[P∘V_N] = (e^{−u(D + N⁻²L)} P)(1)` exactly.

use std::collections::{BTreeMap, HashMap};

use ndarray::Array2;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix};
use crate::moments::nu_moment;
use crate::trace_poly::{Monomial, TracePoly};

pub const DEFAULT_DEGREE_CAP: usize = 12;

/// Above this value of `(|u|/2)n²` a backward flow is reported as
/// ill-conditioned.
const BACKWARD_WARN_EXPONENT: f64 = 20.0;

/// Switch to fixed point once `Σ|E_ij c_j|` exceeds the result by this much,
/// or once the rounding estimate `ε·dim·‖E‖₁·‖c‖₁` exceeds the tolerance
/// relative to it.
const CANCELLATION_RATIO: f64 = 8.0;
const ROUNDOFF_TOLERANCE: f64 = 1e-12;

fn warn_backward(u: f64, degree: usize) {
    if u < 0.0 && (u.abs() / 2.0) * (degree * degree) as f64 > BACKWARD_WARN_EXPONENT {
        log::warn!(
            "backward flow u = {u} on trace degree {degree}: operator norm may exceed e^{BACKWARD_WARN_EXPONENT}"
        );
    }
}

fn half(x: f64) -> Complex64 {
    Complex64::new(0.5 * x, 0.0)
}

/// `D` applied to a polynomial.
pub fn apply_d10(p: &TracePoly) -> TracePoly {
    let mut out = TracePoly::zero();
    for (m, c) in p.terms() {
        for &(k, e) in m.exponents() {
            let weight = *c * half(k.unsigned_abs() as f64 * e as f64);
            out.add_term(m.clone(), weight);
            let a = k.unsigned_abs() as i32;
            if a >= 2 {
                let rest = m.divide_var(k).expect("v_k divides m");
                let sign = k.signum();
                for j in 1..a {
                    let split = Monomial::from_pairs([(sign * j, 1), (sign * (a - j), 1)]);
                    out.add_term(rest.mul(&split), weight);
                }
            }
        }
    }
    out
}

/// `L` applied to a polynomial; terms with `j + k = 0` produce `v_0 = 1`.
pub fn apply_l10(p: &TracePoly) -> TracePoly {
    let mut out = TracePoly::zero();
    for (m, c) in p.terms() {
        let exps = m.exponents();
        for &(j, ej) in exps {
            for &(k, ek) in exps {
                let mult = if j == k {
                    if ej < 2 {
                        continue;
                    }
                    ej as f64 * (ej - 1) as f64
                } else {
                    ej as f64 * ek as f64
                };
                let rest = m
                    .divide_var(j)
                    .and_then(|r| r.divide_var(k))
                    .expect("v_j v_k divides m");
                let coeff = *c * half(j as f64 * k as f64 * mult);
                out.add_term(rest.mul(&Monomial::var(j + k)), coeff);
            }
        }
    }
    out
}

/// `D + w·L`.
fn apply_generator(p: &TracePoly, inv_n_sq: f64) -> TracePoly {
    let d = apply_d10(p);
    if inv_n_sq == 0.0 {
        return d;
    }
    &d + &apply_l10(p).scale(Complex64::new(inv_n_sq, 0.0))
}

/// Parameters of the generator `u·(D + inv_n_sq·L)` restricted to `HP_n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeneratorSpec {
    /// Flow time: `t` for `U(N)`, `s − t` for `GL(N)` eigenvalues, negative
    /// for the backward flow of singular values.
    pub u: f64,
    /// Weight `1/N²` of `L`; zero is the `N → ∞` limit.
    pub inv_n_sq: f64,
    /// Trace-degree bound `n`.
    pub degree_cap: usize,
}

impl GeneratorSpec {
    pub fn new(u: f64, inv_n_sq: f64, degree_cap: usize) -> Result<Self> {
        if !(0.0..=1.0).contains(&inv_n_sq) {
            return Err(Error::InvalidParameter(format!(
                "1/N² weight must lie in [0, 1], got {inv_n_sq}"
            )));
        }
        if degree_cap == 0 {
            return Err(Error::InvalidParameter("degree cap must be positive".into()));
        }
        if !u.is_finite() {
            return Err(Error::InvalidParameter("flow time must be finite".into()));
        }
        Ok(GeneratorSpec {
            u,
            inv_n_sq,
            degree_cap,
        })
    }

    pub fn finite(u: f64, n: u32, degree_cap: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter("matrix size must be ≥ 1".into()));
        }
        GeneratorSpec::new(u, 1.0 / (n as f64 * n as f64), degree_cap)
    }

    pub fn limit(u: f64, degree_cap: usize) -> Result<Self> {
        GeneratorSpec::new(u, 0.0, degree_cap)
    }
}

/// A linear operator on a span of monomials, as a dense matrix whose column
/// `j` holds the image of `basis[j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorMatrix {
    pub basis: Vec<Monomial>,
    pub entries: CMatrix,
}

impl OperatorMatrix {
    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    fn index(&self) -> HashMap<&Monomial, usize> {
        self.basis.iter().enumerate().map(|(i, m)| (m, i)).collect()
    }

    /// Applies the operator to a polynomial supported on the basis.
    pub fn apply(&self, p: &TracePoly) -> Result<TracePoly> {
        let index = self.index();
        let mut coords = vec![Complex64::new(0.0, 0.0); self.dim()];
        for (m, c) in p.terms() {
            let i = *index.get(m).ok_or_else(|| {
                Error::InvalidParameter(format!("monomial {m} is outside the operator's basis"))
            })?;
            coords[i] = *c;
        }
        let image = self.entries.dot(&ndarray::Array1::from_vec(coords));
        Ok(TracePoly::from_terms(
            self.basis.iter().cloned().zip(image.iter().copied()),
        ))
    }

    /// ℓ¹-induced operator norm (maximum column sum).
    pub fn norm1(&self) -> f64 {
        linalg::norm1(&self.entries)
    }

    pub fn scaled(&self, c: f64) -> OperatorMatrix {
        OperatorMatrix {
            basis: self.basis.clone(),
            entries: &self.entries * Complex64::new(c, 0.0),
        }
    }
}

/// Matrix exponential of an operator, same basis.
pub fn expm(m: &OperatorMatrix) -> OperatorMatrix {
    OperatorMatrix {
        basis: m.basis.clone(),
        entries: linalg::expm_taylor(&m.entries),
    }
}

/// All partitions of every integer `0..=n`, each as `(part, multiplicity)`
/// pairs with ascending parts; `out[a]` lists the partitions of `a`.
fn partitions_up_to(n: usize) -> Vec<Vec<Vec<(i32, u32)>>> {
    fn rec(remaining: usize, max_part: usize, acc: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if remaining == 0 {
            out.push(acc.clone());
            return;
        }
        for part in (1..=max_part.min(remaining)).rev() {
            acc.push(part);
            rec(remaining - part, part, acc, out);
            acc.pop();
        }
    }
    (0..=n)
        .map(|a| {
            let mut raw = Vec::new();
            rec(a, a, &mut Vec::new(), &mut raw);
            raw.into_iter()
                .map(|parts| {
                    let mut counts: BTreeMap<i32, u32> = BTreeMap::new();
                    for p in parts {
                        *counts.entry(p as i32).or_insert(0) += 1;
                    }
                    counts.into_iter().collect()
                })
                .collect()
        })
        .collect()
}

fn sort_basis(basis: &mut [Monomial]) {
    basis.sort_by(|a, b| a.trace_degree().cmp(&b.trace_degree()).then_with(|| a.cmp(b)));
}

fn combine(pos: &[(i32, u32)], neg: &[(i32, u32)]) -> Monomial {
    Monomial::from_pairs(
        pos.iter()
            .copied()
            .chain(neg.iter().map(|&(k, e)| (-k, e))),
    )
}

/// Monomial basis of `HP_n`, sorted by trace degree then by monomial order.
pub fn basis(n: usize) -> Vec<Monomial> {
    let parts = partitions_up_to(n);
    let mut out = Vec::new();
    for a in 0..=n {
        for b in 0..=(n - a) {
            for p in &parts[a] {
                for q in &parts[b] {
                    out.push(combine(p, q));
                }
            }
        }
    }
    sort_basis(&mut out);
    out
}

/// Basis monomials of `HP_n` with signed degree `m`.
pub fn block_basis(n: usize, signed_degree: i64) -> Vec<Monomial> {
    let parts = partitions_up_to(n);
    let mut out = Vec::new();
    for b in 0..=n {
        let a = b as i64 + signed_degree;
        if a < 0 || a as usize + b > n {
            continue;
        }
        for p in &parts[a as usize] {
            for q in &parts[b] {
                out.push(combine(p, q));
            }
        }
    }
    sort_basis(&mut out);
    out
}

fn operator_on(basis: Vec<Monomial>, spec: &GeneratorSpec) -> OperatorMatrix {
    let dim = basis.len();
    let index: HashMap<&Monomial, usize> = basis.iter().enumerate().map(|(i, m)| (m, i)).collect();
    let mut entries = Array2::zeros((dim, dim));
    if spec.u != 0.0 {
        for (j, m) in basis.iter().enumerate() {
            let image = apply_generator(&TracePoly::monomial(m.clone(), Complex64::new(1.0, 0.0)), spec.inv_n_sq);
            for (mi, c) in image.terms() {
                let i = index[mi];
                entries[[i, j]] += c * spec.u;
            }
        }
    }
    OperatorMatrix { basis, entries }
}

/// Big-integer fixed-point evaluation of `1ᵀ e^{−G} c` for a real
/// generator `G`, used when the double-precision result has cancelled.
mod precise {
    use ndarray::Array2;
    use num_bigint::BigInt;
    use num_complex::Complex64;
    use num_traits::{ToPrimitive, Zero};

    /// Largest column-sum norm of a single Taylor step.
    const STEP_NORM: f64 = 16.0;

    fn to_fixed(x: f64, bits: u32) -> BigInt {
        if x == 0.0 {
            return BigInt::zero();
        }
        let (mantissa, exponent, sign) = num_traits::Float::integer_decode(x);
        let mut v = BigInt::from(mantissa);
        let shift = exponent as i64 + bits as i64;
        if shift >= 0 {
            v <<= shift as u64;
        } else {
            v >>= (-shift) as u64;
        }
        if sign < 0 {
            -v
        } else {
            v
        }
    }

    fn from_fixed(v: &BigInt, bits: u32) -> f64 {
        let lead = v.bits();
        // keep ~80 significant bits before the f64 conversion
        let drop = lead.saturating_sub(80);
        let top = (v >> drop).to_f64().unwrap_or(0.0);
        top * 2f64.powi(drop as i32 - bits as i32)
    }

    type SparseRows = Vec<Vec<(usize, BigInt)>>;

    fn propagate(h: &SparseRows, y: &mut Vec<BigInt>, bits: u32) {
        let mut acc = y.clone();
        let mut term = y.clone();
        let mut j: u64 = 1;
        loop {
            let next: Vec<BigInt> = h
                .iter()
                .map(|row| {
                    let mut s = BigInt::zero();
                    for (k, hik) in row {
                        if !term[*k].is_zero() {
                            s += hik * &term[*k];
                        }
                    }
                    -(s >> bits as u64) / j
                })
                .collect();
            let negligible = next.iter().all(|x| x.bits() <= 2);
            for (a, x) in acc.iter_mut().zip(&next) {
                *a += x;
            }
            term = next;
            if negligible && j as f64 > STEP_NORM {
                break;
            }
            j += 1;
        }
        *y = acc;
    }

    fn norm1(m: &Array2<f64>) -> f64 {
        m.columns()
            .into_iter()
            .map(|col| col.iter().map(|x| x.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// `Σ_i (e^{−u(D + N⁻²L)} c)_i` for real `D`, `L` whose entries are
    /// exact in binary; `n = None` drops `L`.
    pub fn sum_of_action(
        d: &Array2<f64>,
        l: &Array2<f64>,
        u: f64,
        n: Option<u32>,
        c: &[Complex64],
    ) -> Complex64 {
        let w = n.map_or(0.0, |n| 1.0 / (n as f64 * n as f64));
        let norm = u.abs() * (norm1(d) + w * norm1(l));
        let steps = (norm / STEP_NORM).ceil().max(1.0) as u64;
        let bits = 192 + (norm * std::f64::consts::LOG2_E).ceil() as u32;
        let u_fx = to_fixed(u, bits);
        let uw_fx = match n {
            Some(n) => &u_fx / (BigInt::from(n) * BigInt::from(n)),
            None => BigInt::zero(),
        };
        let h: SparseRows = d
            .rows()
            .into_iter()
            .zip(l.rows())
            .map(|(drow, lrow)| {
                drow.iter()
                    .zip(lrow.iter())
                    .enumerate()
                    .filter(|(_, (a, b))| **a != 0.0 || (**b != 0.0 && !uw_fx.is_zero()))
                    .map(|(k, (a, b))| {
                        let entry = (to_fixed(*a, bits) * &u_fx + to_fixed(*b, bits) * &uw_fx)
                            >> bits as u64;
                        (k, entry / steps)
                    })
                    .collect()
            })
            .collect();
        let mut re: Vec<BigInt> = c.iter().map(|z| to_fixed(z.re, bits)).collect();
        let mut im: Vec<BigInt> = c.iter().map(|z| to_fixed(z.im, bits)).collect();
        for _ in 0..steps {
            if re.iter().any(|x| !x.is_zero()) {
                propagate(&h, &mut re, bits);
            }
            if im.iter().any(|x| !x.is_zero()) {
                propagate(&h, &mut im, bits);
            }
        }
        let total_re: BigInt = re.iter().sum();
        let total_im: BigInt = im.iter().sum();
        Complex64::new(from_fixed(&total_re, bits), from_fixed(&total_im, bits))
    }

}

/// Flow engine with a configured maximum trace degree.
#[derive(Debug, Clone, Copy)]
pub struct Flow {
    max_degree: usize,
}

impl Default for Flow {
    fn default() -> Self {
        Flow {
            max_degree: DEFAULT_DEGREE_CAP,
        }
    }
}

impl Flow {
    pub fn with_max_degree(max_degree: usize) -> Self {
        Flow { max_degree }
    }

    pub fn max_degree(&self) -> usize {
        self.max_degree
    }

    fn check_degree(&self, degree: usize) -> Result<()> {
        if degree > self.max_degree {
            Err(Error::DegreeCapExceeded {
                degree,
                cap: self.max_degree,
            })
        } else {
            Ok(())
        }
    }

    /// Matrix of `u(D + inv_n_sq·L)` on the full monomial basis of `HP_n`.
    pub fn build_generator(&self, spec: &GeneratorSpec) -> Result<OperatorMatrix> {
        self.check_degree(spec.degree_cap)?;
        Ok(operator_on(basis(spec.degree_cap), spec))
    }

    /// The same generator restricted to one signed-degree block.
    pub fn build_block(&self, spec: &GeneratorSpec, signed_degree: i64) -> Result<OperatorMatrix> {
        self.check_degree(spec.degree_cap)?;
        Ok(operator_on(block_basis(spec.degree_cap, signed_degree), spec))
    }

    /// `e^{−u(D + inv_n_sq·L)} P` as a polynomial.
    pub fn evolve(&self, p: &TracePoly, u: f64, inv_n_sq: f64) -> Result<TracePoly> {
        let degree = p.trace_degree();
        self.check_degree(degree)?;
        warn_backward(u, degree);
        let mut groups: BTreeMap<i64, TracePoly> = BTreeMap::new();
        for (m, c) in p.terms() {
            groups
                .entry(m.signed_degree())
                .or_default()
                .add_term(m.clone(), *c);
        }
        let mut out = TracePoly::zero();
        for (signed_degree, part) in groups {
            let spec = GeneratorSpec::new(-u, inv_n_sq, part.trace_degree().max(1))?;
            let block = self.build_block(&spec, signed_degree)?;
            let flow = expm(&block);
            let threshold = 1e-15 * flow.norm1();
            let image = flow.apply(&part)?;
            out = &out + &image.pruned(threshold);
        }
        Ok(out)
    }

    /// `(e^{−u(D + N⁻²L)} P)(1)`, with `n = None` for the limit. When the
    /// double-precision sum has lost more than a few digits, the blocks are
    /// recomputed in big-integer fixed point from the exact half-integer
    /// entries of `D` and `L`.
    fn expectation(&self, p: &TracePoly, u: f64, n: Option<u32>) -> Result<Complex64> {
        let degree = p.trace_degree();
        self.check_degree(degree)?;
        warn_backward(u, degree);
        let inv_n_sq = n.map_or(0.0, |n| 1.0 / (n as f64 * n as f64));
        let mut groups: BTreeMap<i64, TracePoly> = BTreeMap::new();
        for (m, c) in p.terms() {
            groups
                .entry(m.signed_degree())
                .or_default()
                .add_term(m.clone(), *c);
        }
        let mut blocks = Vec::with_capacity(groups.len());
        let mut total = Complex64::new(0.0, 0.0);
        let mut magnitude = 0.0;
        let mut roundoff = 0.0;
        for (signed_degree, part) in groups {
            let spec = GeneratorSpec::new(u, inv_n_sq, part.trace_degree().max(1))?;
            let block = self.build_block(&spec, signed_degree)?;
            let index = block.index();
            let mut coords = vec![Complex64::new(0.0, 0.0); block.dim()];
            for (m, c) in part.terms() {
                coords[index[m]] = *c;
            }
            let flow = linalg::expm_taylor(&block.entries.mapv(|x| -x));
            let c_norm: f64 = coords.iter().map(|c| c.norm()).sum();
            roundoff += f64::EPSILON
                * (block.dim() as f64 + block.norm1())
                * linalg::norm1(&flow)
                * c_norm;
            for (j, c) in coords.iter().enumerate() {
                for i in 0..block.dim() {
                    total += flow[[i, j]] * c;
                    magnitude += flow[[i, j]].norm() * c.norm();
                }
            }
            blocks.push((spec.degree_cap, signed_degree, coords));
        }
        if magnitude <= CANCELLATION_RATIO * total.norm()
            && roundoff <= ROUNDOFF_TOLERANCE * total.norm()
        {
            return Ok(total);
        }
        log::debug!(
            "flow sum unreliable in f64 (|Σ| = {:e}, spread {magnitude:e}, rounding {roundoff:e}); using fixed point",
            total.norm()
        );
        let mut out = Complex64::new(0.0, 0.0);
        for (cap, signed_degree, coords) in blocks {
            let d = self.build_block(&GeneratorSpec::new(1.0, 0.0, cap)?, signed_degree)?;
            let dl = self.build_block(&GeneratorSpec::new(1.0, 1.0, cap)?, signed_degree)?;
            let d = d.entries.mapv(|x| x.re);
            let l = dl.entries.mapv(|x| x.re) - &d;
            out += precise::sum_of_action(&d, &l, u, n, &coords);
        }
        Ok(out)
    }

    /// `E[P∘V_N]` under the flow of time `u` at matrix size `N`.
    pub fn finite_n_expectation(&self, p: &TracePoly, u: f64, n: u32) -> Result<Complex64> {
        if n == 0 {
            return Err(Error::InvalidParameter("matrix size must be ≥ 1".into()));
        }
        self.expectation(p, u, Some(n))
    }

    /// Limit of [`Flow::finite_n_expectation`] as `N → ∞`, from the flow
    /// with `L` switched off.
    pub fn flow_limit_expectation(&self, p: &TracePoly, u: f64) -> Result<Complex64> {
        self.expectation(p, u, None)
    }

    /// `Cov(P∘V_N, Q∘V_N)` on `U(N)` at time `t`.
    pub fn finite_n_covariance_unitary(
        &self,
        p: &TracePoly,
        q: &TracePoly,
        t: f64,
        n: u32,
    ) -> Result<Complex64> {
        let q_star = q.star();
        let joint = self.finite_n_expectation(&(p * &q_star), t, n)?;
        let ep = self.finite_n_expectation(p, t, n)?;
        let eq = self.finite_n_expectation(&q_star, t, n)?;
        Ok(joint - ep * eq)
    }
}

/// `E[P∘V_N]` with the default degree cap.
pub fn finite_n_expectation(p: &TracePoly, u: f64, n: u32) -> Result<Complex64> {
    Flow::default().finite_n_expectation(p, u, n)
}

/// `N → ∞` expectation: every `v_j` is replaced by the limit moment
/// `ν_j(u)`, which is valid because the limit flow is an algebra
/// homomorphism.
pub fn limit_expectation(p: &TracePoly, u: f64) -> Complex64 {
    p.eval_with(|k| Complex64::new(nu_moment(k, u), 0.0))
}

/// Unitary covariance with the default degree cap.
pub fn finite_n_covariance_unitary(p: &TracePoly, q: &TracePoly, t: f64, n: u32) -> Result<Complex64> {
    Flow::default().finite_n_covariance_unitary(p, q, t, n)
}

/// `r = |s − t/2| + |t|/2`.
pub fn flow_radius(s: f64, t: f64) -> f64 {
    (s - t / 2.0).abs() + t.abs() / 2.0
}

/// Upper bound on `|finite-N − limit|` for the `(s, t)` flow:
/// `N⁻² (r/2) n² exp((r/2) n² (1 + N⁻²)) ‖P‖₁`.
pub fn concentration_bound(p: &TracePoly, s: f64, t: f64, n: u32) -> f64 {
    let r = flow_radius(s, t);
    let deg = p.trace_degree() as f64;
    let w = 1.0 / (n as f64 * n as f64);
    let a = r / 2.0 * deg * deg;
    w * a * (a * (1.0 + w)).exp() * p.l1_norm()
}

/// Degree-uniform version: `N⁻² δ⁻¹ exp((r/2)(1+δ) n²) ‖P‖₁`, valid for
/// `N > √(2/δ)`.
pub fn refined_bound(p: &TracePoly, s: f64, t: f64, delta: f64, n: u32) -> Result<f64> {
    if !(delta > 0.0) {
        return Err(Error::PreconditionViolated(format!("δ must be positive, got {delta}")));
    }
    if n as f64 <= (2.0 / delta).sqrt() {
        return Err(Error::PreconditionViolated(format!(
            "N = {n} must exceed √(2/δ) = {:.6}",
            (2.0 / delta).sqrt()
        )));
    }
    let r = flow_radius(s, t);
    let deg = p.trace_degree() as f64;
    let w = 1.0 / (n as f64 * n as f64);
    Ok(w / delta * (r / 2.0 * (1.0 + delta) * deg * deg).exp() * p.l1_norm())
}

/// Orthonormal basis of the Lie algebra `u(N)` for `⟨X,Y⟩ = −N Tr(XY)`.
pub fn unitary_algebra_basis(n: usize) -> Vec<CMatrix> {
    let mut out = Vec::with_capacity(n * n);
    let i = Complex64::new(0.0, 1.0);
    let diag = 1.0 / (n as f64).sqrt();
    let off = 1.0 / (2.0 * n as f64).sqrt();
    for j in 0..n {
        let mut x = Array2::zeros((n, n));
        x[[j, j]] = i * diag;
        out.push(x);
    }
    for j in 0..n {
        for k in (j + 1)..n {
            let mut x = Array2::zeros((n, n));
            x[[j, k]] = Complex64::new(off, 0.0);
            x[[k, j]] = Complex64::new(-off, 0.0);
            out.push(x);
            let mut y = Array2::zeros((n, n));
            y[[j, k]] = i * off;
            y[[k, j]] = i * off;
            out.push(y);
        }
    }
    out
}

/// `Σ_X d²/dε² (P∘V_N)(U e^{εX})|_{ε=0}` over an orthonormal basis of
/// `u(N)`, by second-order central differences with step `h`.
pub fn laplacian_fd(p: &TracePoly, u: &CMatrix, h: f64) -> Result<Complex64> {
    if !(h > 0.0) {
        return Err(Error::InvalidConfig(format!("finite-difference step must be positive, got {h}")));
    }
    let n = u.nrows();
    let centre = p.eval_on_matrix(u)?;
    let mut total = Complex64::new(0.0, 0.0);
    for x in unitary_algebra_basis(n) {
        let step = &x * Complex64::new(h, 0.0);
        let plus = p.eval_on_matrix(&u.dot(&linalg::expm_pade(&step)))?;
        let minus = p.eval_on_matrix(&u.dot(&linalg::expm_pade(&(-&step))))?;
        total += (plus - centre * 2.0 + minus) / (h * h);
    }
    Ok(total)
}

/// `−2 [(D + N⁻²L) P](U)`, the Laplacian predicted by the intertwining
/// formulas.
pub fn intertwined_laplacian(p: &TracePoly, u: &CMatrix) -> Result<Complex64> {
    let n = u.nrows() as f64;
    let image = apply_generator(p, 1.0 / (n * n));
    Ok(image.eval_on_matrix(u)? * -2.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn v(k: i32) -> TracePoly {
        TracePoly::var(k)
    }

    fn mono(pairs: &[(i32, u32)]) -> TracePoly {
        TracePoly::monomial(Monomial::from_pairs(pairs.iter().copied()), c(1.0))
    }

    /// Symbolic differentiation oracle: `∂_k` of a polynomial.
    fn partial(p: &TracePoly, k: i32) -> TracePoly {
        TracePoly::from_terms(p.terms().filter_map(|(m, coeff)| {
            let e = m.exponent(k);
            (e > 0).then(|| (m.divide_var(k).unwrap(), coeff * e as f64))
        }))
    }

    /// `D` and `L` assembled from `partial`, independently of the
    /// monomial-level loops in `apply_d10`/`apply_l10`.
    fn d_oracle(p: &TracePoly, max_index: i32) -> TracePoly {
        let mut out = TracePoly::zero();
        for k in (-max_index..=max_index).filter(|&k| k != 0) {
            let dk = partial(p, k);
            if dk.is_zero() {
                continue;
            }
            let a = k.abs();
            let mut mult = v(k).scale(c(0.5 * a as f64));
            for j in 1..a {
                let s = k.signum();
                mult = &mult + &(&v(s * j) * &v(s * (a - j))).scale(c(0.5 * a as f64));
            }
            out = &out + &(&mult * &dk);
        }
        out
    }

    fn l_oracle(p: &TracePoly, max_index: i32) -> TracePoly {
        let mut out = TracePoly::zero();
        for j in (-max_index..=max_index).filter(|&k| k != 0) {
            for k in (-max_index..=max_index).filter(|&k| k != 0) {
                let dd = partial(&partial(p, j), k);
                if dd.is_zero() {
                    continue;
                }
                out = &out + &(&v(j + k) * &dd).scale(c(0.5 * (j * k) as f64));
            }
        }
        out
    }

    #[test]
    fn d_examples() {
        assert_eq!(apply_d10(&v(1)), v(1).scale(c(0.5)));
        assert_eq!(apply_d10(&v(2)), &v(2) + &mono(&[(1, 2)]));
        assert_eq!(apply_d10(&TracePoly::one()), TracePoly::zero());
        assert_eq!(apply_d10(&v(-1)), v(-1).scale(c(0.5)));
    }

    #[test]
    fn l_examples() {
        assert_eq!(apply_l10(&v(1)), TracePoly::zero());
        assert_eq!(apply_l10(&mono(&[(1, 1), (-1, 1)])), TracePoly::constant(c(-1.0)));
        assert_eq!(apply_l10(&mono(&[(1, 2)])), v(2));
    }

    #[test]
    fn quadratic_trace_example_coefficients() {
        // 2D(v_n v_m) = (n+m) v_n v_m + n Σ v_j v_{n−j} v_m + m Σ v_j v_{m−j} v_n,
        // 2L(v_n v_m) = 2nm v_{n+m}
        for (n, m) in [(2, 3), (3, 3), (2, 4)] {
            let p = &v(n) * &v(m);
            let mut expected = p.scale(c((n + m) as f64));
            for j in 1..n {
                expected = &expected + &(&(&v(j) * &v(n - j)) * &v(m)).scale(c(n as f64));
            }
            for j in 1..m {
                expected = &expected + &(&(&v(j) * &v(m - j)) * &v(n)).scale(c(m as f64));
            }
            assert_eq!(apply_d10(&p).scale(c(2.0)), expected);
            assert_eq!(apply_l10(&p).scale(c(2.0)), v(n + m).scale(c((2 * n * m) as f64)));
        }
    }

    #[test]
    fn operators_match_symbolic_differentiation_oracle() {
        let polys = [
            &(&v(3) * &v(-2)) + &mono(&[(1, 2), (-1, 1)]),
            &mono(&[(2, 2), (-3, 1)]) + &v(-4).scale(Complex64::new(0.5, -1.0)),
            &mono(&[(1, 1), (-1, 1), (2, 1), (-2, 1)]) - &v(5),
        ];
        for p in &polys {
            assert_eq!(apply_d10(p), d_oracle(p, 6), "D on {p}");
            assert_eq!(apply_l10(p), l_oracle(p, 6), "L on {p}");
        }
    }

    #[test]
    fn build_generator_examples() {
        let flow = Flow::default();
        let t = 0.8;
        let g = flow.build_generator(&GeneratorSpec::limit(t, 1).unwrap()).unwrap();
        assert_eq!(g.basis, vec![Monomial::one(), Monomial::var(-1), Monomial::var(1)]);
        let expected = Array2::from_diag(&ndarray::arr1(&[c(0.0), c(t / 2.0), c(t / 2.0)]));
        assert_eq!(g.entries, expected);

        let zero = flow.build_generator(&GeneratorSpec::new(0.0, 0.3, 3).unwrap()).unwrap();
        assert!(zero.entries.iter().all(|z| *z == c(0.0)));

        let g2 = flow.build_generator(&GeneratorSpec::new(1.0, 1.0, 2).unwrap()).unwrap();
        let col = g2.basis.iter().position(|m| *m == Monomial::from_pairs([(1, 1), (-1, 1)])).unwrap();
        let row_const = g2.basis.iter().position(|m| m.is_one()).unwrap();
        assert_eq!(g2.entries[[row_const, col]], c(-1.0));
        assert_eq!(g2.entries[[col, col]], c(1.0));

        assert!(matches!(
            flow.build_generator(&GeneratorSpec::limit(1.0, 13).unwrap()),
            Err(Error::DegreeCapExceeded { degree: 13, cap: 12 })
        ));
    }

    #[test]
    fn basis_sizes_and_blocks() {
        // |HP_n| = Σ_{a+b≤n} p(a)p(b)
        let p = [1usize, 1, 2, 3, 5, 7, 11];
        for n in 0..=6 {
            let expected: usize = (0..=n)
                .flat_map(|a| (0..=(n - a)).map(move |b| (a, b)))
                .map(|(a, b)| p[a] * p[b])
                .sum();
            assert_eq!(basis(n).len(), expected, "n={n}");
            let blocks: usize = (-(n as i64)..=n as i64).map(|m| block_basis(n, m).len()).sum();
            assert_eq!(blocks, expected);
        }
    }

    #[test]
    fn filtration_and_grading_of_generator() {
        let flow = Flow::default();
        let g = flow.build_generator(&GeneratorSpec::new(1.0, 1.0, 5).unwrap()).unwrap();
        for (j, mj) in g.basis.iter().enumerate() {
            for (i, mi) in g.basis.iter().enumerate() {
                if g.entries[[i, j]] != c(0.0) {
                    assert!(mi.trace_degree() <= mj.trace_degree());
                    assert_eq!(mi.signed_degree(), mj.signed_degree());
                }
            }
        }
        let d = flow.build_generator(&GeneratorSpec::limit(1.0, 5).unwrap()).unwrap();
        for (j, mj) in d.basis.iter().enumerate() {
            for (i, mi) in d.basis.iter().enumerate() {
                if d.entries[[i, j]] != c(0.0) {
                    assert_eq!(mi.trace_degree(), mj.trace_degree());
                }
            }
        }
    }

    #[test]
    fn expm_examples() {
        let flow = Flow::default();
        let zero = flow.build_generator(&GeneratorSpec::new(0.0, 0.0, 2).unwrap()).unwrap();
        let e = expm(&zero);
        assert_eq!(e.entries, linalg::identity(zero.dim()));

        let t = 1.3;
        let g = flow.build_generator(&GeneratorSpec::new(t, 0.25, 1).unwrap()).unwrap();
        let e = expm(&g.scaled(-1.0));
        let image = e.apply(&v(1)).unwrap();
        assert!((image.coefficient(&Monomial::var(1)) - c((-t / 2.0).exp())).norm() < 1e-15);
        assert_eq!(image.len(), 1);
    }

    #[test]
    fn expectation_examples() {
        for t in [0.5, 1.0, 2.0] {
            for k in 1..=6 {
                let got = finite_n_expectation(&v(k), t, 1).unwrap();
                let want = (-t * (k * k) as f64 / 2.0).exp();
                assert!((got.re - want).abs() <= 1e-10 * want, "k={k} t={t}");
                assert!(got.im.abs() < 1e-15);
            }
        }
        // at N = 1, v_a v_b = U^{a+b}
        for (a, b, t) in [(3, -1, 1.5), (5, 5, 0.7), (4, -4, 2.0), (2, 9, 0.3)] {
            let got = finite_n_expectation(&(&v(a) * &v(b)), t, 1).unwrap();
            let want = (-t * ((a + b) * (a + b)) as f64 / 2.0).exp();
            assert!((got.re - want).abs() <= 1e-10 * want, "a={a} b={b} got={got} want={want}");
        }
        let base = finite_n_expectation(&v(1), 0.9, 1).unwrap();
        for n in [1, 2, 7, 100] {
            let e = finite_n_expectation(&v(1), 0.9, n).unwrap();
            assert!((e - c((-0.45f64).exp())).norm() < 1e-12);
            assert!((e - base).norm() < 1e-12);
        }
        assert_eq!(finite_n_expectation(&TracePoly::one(), 3.0, 4).unwrap(), c(1.0));
        assert!(matches!(
            finite_n_expectation(&v(13), 1.0, 4),
            Err(Error::DegreeCapExceeded { .. })
        ));
    }

    #[test]
    fn limit_examples() {
        for t in [0.25, 1.0, 4.0] {
            assert!((limit_expectation(&v(3), t) - c(nu_moment(3, t))).norm() < 1e-15);
            assert!((limit_expectation(&(&v(1) * &v(-1)), t) - c((-t).exp())).norm() < 1e-15);
            assert_eq!(limit_expectation(&TracePoly::one(), t), c(1.0));
            for n in 1..=8 {
                let flowed = Flow::default().flow_limit_expectation(&v(n), t).unwrap();
                assert!((flowed - c(nu_moment(n, t))).norm() < 1e-10, "n={n} t={t}");
            }
        }
    }

    #[test]
    fn covariance_examples() {
        for t in [0.3, 1.0, 2.5] {
            for n in [1, 2, 5, 16] {
                let cov = finite_n_covariance_unitary(&v(1), &v(1), t, n).unwrap();
                let want = (1.0 - (-t).exp()) / (n * n) as f64;
                assert!((cov - c(want)).norm() < 1e-13, "t={t} n={n}");
            }
        }
        let q = &v(2) + &v(-1);
        assert!(finite_n_covariance_unitary(&TracePoly::one(), &q, 1.0, 3).unwrap().norm() < 1e-15);
        assert!(finite_n_covariance_unitary(&v(1), &v(1), 0.0, 3).unwrap().norm() < 1e-15);
    }

    #[test]
    fn bound_examples() {
        let t = 0.7;
        for n in [1u32, 3, 10] {
            let w = 1.0 / (n * n) as f64;
            let b = concentration_bound(&v(1), t, 0.0, n);
            let want = w * (t / 2.0) * ((t / 2.0) * (1.0 + w)).exp();
            assert!((b - want).abs() < 1e-15 * want);
        }
        assert_eq!(concentration_bound(&TracePoly::constant(c(3.0)), 1.0, 0.0, 2), 0.0);
        let p = &v(2) + &v(-1).scale(c(-0.5));
        let b1 = concentration_bound(&p, 1.0, 0.4, 3);
        let b2 = concentration_bound(&p.scale(c(2.0)), 1.0, 0.4, 3);
        assert!((b2 - 2.0 * b1).abs() < 1e-15 * b2);

        let r = refined_bound(&v(1), t, 0.0, 1.0, 2).unwrap();
        assert!((r - 0.25 * t.exp()).abs() < 1e-15);
        let k = refined_bound(&TracePoly::constant(c(2.0)), 1.0, 0.0, 0.5, 3).unwrap();
        assert!((k - 2.0 / 9.0 / 0.5).abs() < 1e-15);
        assert!(matches!(
            refined_bound(&v(1), t, 0.0, 1.0, 1),
            Err(Error::PreconditionViolated(_))
        ));
    }

    #[test]
    fn column_sums_within_quadratic_bound() {
        let flow = Flow::default();
        for n in 1..=7 {
            let d = flow.build_generator(&GeneratorSpec::new(1.0, 0.0, n).unwrap()).unwrap();
            let full = flow.build_generator(&GeneratorSpec::new(1.0, 1.0, n).unwrap()).unwrap();
            let l = OperatorMatrix {
                basis: d.basis.clone(),
                entries: &full.entries - &d.entries,
            };
            let bound = (n * n) as f64 / 2.0;
            assert!(d.norm1() <= bound + 1e-12, "D n={n}: {}", d.norm1());
            assert!(l.norm1() <= bound + 1e-12, "L n={n}: {}", l.norm1());
        }
    }

    #[test]
    fn orthonormal_algebra_basis() {
        for n in 1..=4 {
            let b = unitary_algebra_basis(n);
            assert_eq!(b.len(), n * n);
            for (i, x) in b.iter().enumerate() {
                assert!(linalg::max_abs(&(x + &linalg::adjoint(x))) < 1e-15);
                for (j, y) in b.iter().enumerate() {
                    let ip = -(n as f64) * x.dot(y).diag().sum();
                    let want = if i == j { 1.0 } else { 0.0 };
                    assert!((ip - c(want)).norm() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn one_dimensional_laplacian() {
        // On U(1), Δ U^{n+m} = −(n+m)² U^{n+m}.
        let u = Array2::from_elem((1, 1), Complex64::from_polar(1.0, 0.7));
        for (n, m) in [(2, 3), (2, 2), (1, 4)] {
            let p = &v(n) * &v(m);
            let predicted = intertwined_laplacian(&p, &u).unwrap();
            let exact = Complex64::from_polar(1.0, 0.7 * (n + m) as f64) * -(((n + m) * (n + m)) as f64);
            assert!((predicted - exact).norm() < 1e-12);
            let fd = laplacian_fd(&p, &u, 1e-3).unwrap();
            assert!((fd - exact).norm() < 1e-4 * exact.norm());
        }
        assert!(matches!(laplacian_fd(&v(1), &u, 0.0), Err(Error::InvalidConfig(_))));
    }

    fn arb_poly(max_deg: usize) -> impl Strategy<Value = TracePoly> {
        let term = (proptest::collection::vec((-3i32..=3, 1u32..3), 0..3), -3i32..=3, -3i32..=3);
        proptest::collection::vec(term, 1..5).prop_map(move |terms| {
            TracePoly::from_terms(terms.into_iter().filter_map(|(pairs, re, im)| {
                let m = Monomial::from_pairs(pairs);
                (m.trace_degree() <= max_deg).then(|| (m, Complex64::new(re as f64, im as f64)))
            }))
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn operators_preserve_degree_structure(p in arb_poly(8)) {
            let deg = p.trace_degree();
            for (m, _) in apply_d10(&p).terms() {
                prop_assert!(m.trace_degree() <= deg);
            }
            for (m, _) in apply_l10(&p).terms() {
                prop_assert!(m.trace_degree() <= deg);
            }
        }

        #[test]
        fn limit_flow_is_multiplicative(p in arb_poly(4), q in arb_poly(4), u in 0.05f64..3.0) {
            let lhs = limit_expectation(&(&p * &q), u);
            let rhs = limit_expectation(&p, u) * limit_expectation(&q, u);
            prop_assert!((lhs - rhs).norm() <= 1e-10 * (1.0 + lhs.norm()));
            let flowed = Flow::default().flow_limit_expectation(&(&p * &q), u).unwrap();
            prop_assert!((flowed - lhs).norm() <= 1e-9 * (1.0 + lhs.norm()));
        }

        #[test]
        fn unitary_variance_is_nonnegative(p in arb_poly(4), t in 0.05f64..3.0, n in 1u32..20) {
            let var = finite_n_covariance_unitary(&p, &p, t, n).unwrap();
            prop_assert!(var.re >= -1e-12);
            prop_assert!(var.im.abs() <= 1e-10 * (1.0 + var.re.abs()));
        }

        #[test]
        fn concentration_bound_holds(p in arb_poly(6), u in 0.05f64..2.0, n in 1u32..12) {
            let finite = finite_n_expectation(&p, u, n).unwrap();
            let limit = limit_expectation(&p, u);
            prop_assert!((finite - limit).norm() <= concentration_bound(&p, u, 0.0, n));
        }
    }
}

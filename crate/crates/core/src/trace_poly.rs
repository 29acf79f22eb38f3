//! Holomorphic trace polynomials: commutative polynomials in the symbols
//! `v_k = tr(Z^k)`, `k ∈ ℤ \ {0}`, with complex coefficients.
//!
//! The symbol `v_0` never appears as an indeterminate; it is the constant 1.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix};

/// Condition-number cap above which a matrix counts as singular for
/// evaluation of negative powers.
pub const DEFAULT_CONDITION_CAP: f64 = 1e12;

/// Index of a trace symbol `v_k`; never zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct HIndex(i32);

impl HIndex {
    pub fn new(k: i32) -> Option<Self> {
        (k != 0).then_some(HIndex(k))
    }

    pub fn get(self) -> i32 {
        self.0
    }
}

/// A monomial `Π v_k^{e_k}`, stored as `(k, e_k)` pairs with ascending `k`
/// and strictly positive exponents.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Monomial {
    exps: Vec<(i32, u32)>,
}

impl Monomial {
    pub fn one() -> Self {
        Monomial { exps: Vec::new() }
    }

    /// The single symbol `v_k`; `v_0` is the constant monomial.
    pub fn var(k: i32) -> Self {
        if k == 0 {
            Monomial::one()
        } else {
            Monomial { exps: vec![(k, 1)] }
        }
    }

    /// Builds a monomial from arbitrary `(k, e)` pairs, merging repeats and
    /// dropping `k = 0` and zero exponents.
    pub fn from_pairs<I: IntoIterator<Item = (i32, u32)>>(pairs: I) -> Self {
        let mut map: BTreeMap<i32, u32> = BTreeMap::new();
        for (k, e) in pairs {
            if k != 0 && e > 0 {
                *map.entry(k).or_insert(0) += e;
            }
        }
        Monomial {
            exps: map.into_iter().collect(),
        }
    }

    pub fn exponents(&self) -> &[(i32, u32)] {
        &self.exps
    }

    pub fn exponent(&self, k: i32) -> u32 {
        self.exps
            .binary_search_by_key(&k, |&(j, _)| j)
            .map(|i| self.exps[i].1)
            .unwrap_or(0)
    }

    pub fn is_one(&self) -> bool {
        self.exps.is_empty()
    }

    /// Trace degree `Σ |k| e_k`.
    pub fn trace_degree(&self) -> usize {
        self.exps
            .iter()
            .map(|&(k, e)| k.unsigned_abs() as usize * e as usize)
            .sum()
    }

    /// Signed degree `Σ k e_k`; preserved by both intertwining operators.
    pub fn signed_degree(&self) -> i64 {
        self.exps.iter().map(|&(k, e)| k as i64 * e as i64).sum()
    }

    pub fn mul(&self, other: &Monomial) -> Monomial {
        let mut out = Vec::with_capacity(self.exps.len() + other.exps.len());
        let (mut i, mut j) = (0, 0);
        while i < self.exps.len() && j < other.exps.len() {
            let (a, b) = (self.exps[i], other.exps[j]);
            match a.0.cmp(&b.0) {
                std::cmp::Ordering::Less => {
                    out.push(a);
                    i += 1;
                }
                std::cmp::Ordering::Greater => {
                    out.push(b);
                    j += 1;
                }
                std::cmp::Ordering::Equal => {
                    out.push((a.0, a.1 + b.1));
                    i += 1;
                    j += 1;
                }
            }
        }
        out.extend_from_slice(&self.exps[i..]);
        out.extend_from_slice(&other.exps[j..]);
        Monomial { exps: out }
    }

    /// Removes one factor `v_k`; `None` when `v_k` does not divide `self`.
    pub fn divide_var(&self, k: i32) -> Option<Monomial> {
        let pos = self.exps.binary_search_by_key(&k, |&(j, _)| j).ok()?;
        let mut exps = self.exps.clone();
        if exps[pos].1 == 1 {
            exps.remove(pos);
        } else {
            exps[pos].1 -= 1;
        }
        Some(Monomial { exps })
    }

    /// Index negation `v_k ↦ v_{-k}`.
    pub fn reflect(&self) -> Monomial {
        let mut exps: Vec<_> = self.exps.iter().map(|&(k, e)| (-k, e)).collect();
        exps.reverse();
        Monomial { exps }
    }
}

impl fmt::Display for Monomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.exps.is_empty() {
            return write!(f, "1");
        }
        let mut first = true;
        for &(k, e) in &self.exps {
            for _ in 0..e {
                if !first {
                    write!(f, "*")?;
                }
                write!(f, "v{k}")?;
                first = false;
            }
        }
        Ok(())
    }
}

/// A polynomial in the trace symbols with complex coefficients.
///
/// The map from monomials to coefficients never stores an exact zero, so two
/// polynomials are equal exactly when their maps are.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TracePoly {
    terms: BTreeMap<Monomial, Complex64>,
}

impl TracePoly {
    pub fn zero() -> Self {
        TracePoly::default()
    }

    pub fn one() -> Self {
        TracePoly::constant(Complex64::new(1.0, 0.0))
    }

    pub fn constant(c: Complex64) -> Self {
        TracePoly::monomial(Monomial::one(), c)
    }

    /// `v_k`, with `v_0 = 1`.
    pub fn var(k: i32) -> Self {
        TracePoly::monomial(Monomial::var(k), Complex64::new(1.0, 0.0))
    }

    pub fn monomial(m: Monomial, c: Complex64) -> Self {
        let mut p = TracePoly::zero();
        p.add_term(m, c);
        p
    }

    pub fn from_terms<I: IntoIterator<Item = (Monomial, Complex64)>>(terms: I) -> Self {
        let mut p = TracePoly::zero();
        for (m, c) in terms {
            p.add_term(m, c);
        }
        p
    }

    /// Adds `c·m`, merging with an existing term and pruning exact zeros.
    pub fn add_term(&mut self, m: Monomial, c: Complex64) {
        if c == Complex64::new(0.0, 0.0) {
            return;
        }
        use std::collections::btree_map::Entry;
        match self.terms.entry(m) {
            Entry::Vacant(v) => {
                v.insert(c);
            }
            Entry::Occupied(mut o) => {
                let sum = *o.get() + c;
                if sum == Complex64::new(0.0, 0.0) {
                    o.remove();
                } else {
                    *o.get_mut() = sum;
                }
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, &Complex64)> {
        self.terms.iter()
    }

    pub fn coefficient(&self, m: &Monomial) -> Complex64 {
        self.terms.get(m).copied().unwrap_or_default()
    }

    pub fn scale(&self, c: Complex64) -> TracePoly {
        TracePoly::from_terms(self.terms.iter().map(|(m, a)| (m.clone(), a * c)))
    }

    pub fn trace_degree(&self) -> usize {
        self.terms.keys().map(Monomial::trace_degree).max().unwrap_or(0)
    }

    /// Sum of coefficient moduli in the monomial basis.
    pub fn l1_norm(&self) -> f64 {
        self.terms.values().map(|c| c.norm()).sum()
    }

    /// Value with every `v_k` set to 1.
    pub fn eval_at_one(&self) -> Complex64 {
        self.terms.values().sum()
    }

    /// `q*`: negated indices and conjugated coefficients, the trace
    /// polynomial of `Z ↦ conj(q(Z))` on the unitary group.
    pub fn star(&self) -> TracePoly {
        TracePoly::from_terms(self.terms.iter().map(|(m, c)| (m.reflect(), c.conj())))
    }

    /// Drops coefficients with modulus below `threshold`.
    pub fn pruned(&self, threshold: f64) -> TracePoly {
        TracePoly {
            terms: self
                .terms
                .iter()
                .filter(|(_, c)| c.norm() >= threshold)
                .map(|(m, c)| (m.clone(), *c))
                .collect(),
        }
    }

    /// Evaluates with `v_k ↦ (1/N) Tr(Z^k)`, using [`DEFAULT_CONDITION_CAP`].
    pub fn eval_on_matrix(&self, z: &CMatrix) -> Result<Complex64> {
        self.eval_on_matrix_with_cap(z, DEFAULT_CONDITION_CAP)
    }

    pub fn eval_on_matrix_with_cap(&self, z: &CMatrix, cap: f64) -> Result<Complex64> {
        if z.nrows() != z.ncols() {
            return Err(Error::InvalidParameter("matrix must be square".into()));
        }
        let mut indices: Vec<i32> = self
            .terms
            .keys()
            .flat_map(|m| m.exps.iter().map(|&(k, _)| k))
            .collect();
        indices.sort_unstable();
        indices.dedup();
        let inverse = if indices.iter().any(|&k| k < 0) {
            Some(linalg::checked_inverse(z, cap)?)
        } else {
            None
        };
        let traces: BTreeMap<i32, Complex64> = indices
            .iter()
            .map(|&k| {
                let base = if k > 0 { z } else { inverse.as_ref().unwrap() };
                let power = linalg::matrix_power(base, k.unsigned_abs());
                (k, linalg::normalized_trace(&power))
            })
            .collect();
        Ok(self.eval_with(|k| traces[&k]))
    }

    /// Evaluates with an arbitrary assignment of the symbols.
    pub fn eval_with<F: FnMut(i32) -> Complex64>(&self, mut value: F) -> Complex64 {
        let mut cache: BTreeMap<i32, Complex64> = BTreeMap::new();
        let mut total = Complex64::new(0.0, 0.0);
        for (m, c) in &self.terms {
            let mut term = *c;
            for &(k, e) in &m.exps {
                let v = *cache.entry(k).or_insert_with(|| value(k));
                term *= v.powu(e);
            }
            total += term;
        }
        total
    }
}

impl Add for &TracePoly {
    type Output = TracePoly;
    fn add(self, rhs: &TracePoly) -> TracePoly {
        let mut out = self.clone();
        for (m, c) in &rhs.terms {
            out.add_term(m.clone(), *c);
        }
        out
    }
}

impl Sub for &TracePoly {
    type Output = TracePoly;
    fn sub(self, rhs: &TracePoly) -> TracePoly {
        let mut out = self.clone();
        for (m, c) in &rhs.terms {
            out.add_term(m.clone(), -c);
        }
        out
    }
}

impl Neg for &TracePoly {
    type Output = TracePoly;
    fn neg(self) -> TracePoly {
        self.scale(Complex64::new(-1.0, 0.0))
    }
}

impl Mul for &TracePoly {
    type Output = TracePoly;
    fn mul(self, rhs: &TracePoly) -> TracePoly {
        let mut out = TracePoly::zero();
        for (ma, ca) in &self.terms {
            for (mb, cb) in &rhs.terms {
                out.add_term(ma.mul(mb), ca * cb);
            }
        }
        out
    }
}

macro_rules! forward_owned {
    ($tr:ident, $f:ident) => {
        impl $tr for TracePoly {
            type Output = TracePoly;
            fn $f(self, rhs: TracePoly) -> TracePoly {
                (&self).$f(&rhs)
            }
        }
    };
}
forward_owned!(Add, add);
forward_owned!(Sub, sub);
forward_owned!(Mul, mul);

/// Polynomial product.
pub fn tp_mul(a: &TracePoly, b: &TracePoly) -> TracePoly {
    a * b
}

fn format_coefficient(c: Complex64) -> String {
    if c.im == 0.0 {
        format!("{}", c.re)
    } else {
        format!("({},{})", c.re, c.im)
    }
}

impl fmt::Display for TracePoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (i, (m, c)) in self.terms.iter().enumerate() {
            if i > 0 {
                write!(f, " + ")?;
            }
            write!(f, "{}", format_coefficient(*c))?;
            if !m.is_one() {
                write!(f, "*{m}")?;
            }
        }
        Ok(())
    }
}

/// Letters of the four-letter alphabet for words in `A`, `A⁻¹`, `A*`, `(A*)⁻¹`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Letter {
    /// `A`
    Pos,
    /// `A⁻¹`
    Neg,
    /// `A*`
    Star,
    /// `(A*)⁻¹ = (A⁻¹)*`
    NegStar,
}

impl Letter {
    pub fn star(self) -> Letter {
        match self {
            Letter::Pos => Letter::Star,
            Letter::Neg => Letter::NegStar,
            Letter::Star => Letter::Pos,
            Letter::NegStar => Letter::Neg,
        }
    }

    /// Power of `U` the letter becomes when `A = U` is unitary.
    pub fn unitary_exponent(self) -> i32 {
        match self {
            Letter::Pos | Letter::NegStar => 1,
            Letter::Neg | Letter::Star => -1,
        }
    }
}

/// A linear combination of (unreduced) words.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WordPoly {
    pub terms: Vec<(Vec<Letter>, Complex64)>,
}

impl WordPoly {
    pub fn new(terms: Vec<(Vec<Letter>, Complex64)>) -> Self {
        WordPoly { terms }
    }

    pub fn word(letters: &[Letter]) -> Self {
        WordPoly::new(vec![(letters.to_vec(), Complex64::new(1.0, 0.0))])
    }

    pub fn one() -> Self {
        WordPoly::word(&[])
    }

    /// Adjoint: reverse each word, star each letter, conjugate coefficients.
    pub fn star(&self) -> WordPoly {
        WordPoly::new(
            self.terms
                .iter()
                .map(|(w, c)| (w.iter().rev().map(|l| l.star()).collect(), c.conj()))
                .collect(),
        )
    }

    /// Concatenation product.
    pub fn mul(&self, other: &WordPoly) -> WordPoly {
        let mut terms = Vec::with_capacity(self.terms.len() * other.terms.len());
        for (wa, ca) in &self.terms {
            for (wb, cb) in &other.terms {
                let mut w = wa.clone();
                w.extend_from_slice(wb);
                terms.push((w, ca * cb));
            }
        }
        WordPoly::new(terms)
    }

    /// Evaluates to a matrix by substituting `A = z`.
    pub fn eval_matrix(&self, z: &CMatrix) -> Result<CMatrix> {
        let n = z.nrows();
        let needs_inverse = self
            .terms
            .iter()
            .any(|(w, _)| w.iter().any(|l| matches!(l, Letter::Neg | Letter::NegStar)));
        let inv = if needs_inverse {
            Some(linalg::checked_inverse(z, DEFAULT_CONDITION_CAP)?)
        } else {
            None
        };
        let zs = linalg::adjoint(z);
        let inv_s = inv.as_ref().map(linalg::adjoint);
        let mut out = CMatrix::zeros((n, n));
        for (w, c) in &self.terms {
            let mut m = linalg::identity(n);
            for l in w {
                let f = match l {
                    Letter::Pos => z,
                    Letter::Star => &zs,
                    Letter::Neg => inv.as_ref().unwrap(),
                    Letter::NegStar => inv_s.as_ref().unwrap(),
                };
                m = m.dot(f);
            }
            out.scaled_add(*c, &m);
        }
        Ok(out)
    }
}

/// Collapses each word to `v_k` using `A* = A⁻¹`, where `k` is the letter
/// sum (`A`, `(A*)⁻¹` count +1; `A⁻¹`, `A*` count −1).
pub fn unitary_reduce(w: &WordPoly) -> TracePoly {
    TracePoly::from_terms(w.terms.iter().map(|(word, c)| {
        let k: i32 = word.iter().map(|l| l.unitary_exponent()).sum();
        (Monomial::var(k), *c)
    }))
}

/// `(f f*)^{p/2}` for even `p ≥ 2`.
pub fn lp_word(f: &WordPoly, p: u32) -> Result<WordPoly> {
    if p < 2 || p % 2 != 0 {
        return Err(Error::PreconditionViolated(format!(
            "L^p exponent must be an even integer ≥ 2, got {p}"
        )));
    }
    let ffs = f.mul(&f.star());
    let mut out = ffs.clone();
    for _ in 1..p / 2 {
        out = out.mul(&ffs);
    }
    Ok(out)
}

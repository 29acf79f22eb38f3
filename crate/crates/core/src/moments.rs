//! Moments `ν_n(t)` of the limit laws and their Σ-transform.

use std::collections::BTreeMap;

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};

/// Largest `|n|` evaluated without a precision warning.
pub const SAFE_MAX_ORDER: u32 = 30;
/// Largest `|t|` evaluated without a precision warning.
pub const SAFE_MAX_TIME: f64 = 50.0;
/// Largest truncation order accepted by [`sigma_from_moments`].
pub const MAX_SERIES_ORDER: usize = 16;

fn binomial(n: u32, k: u32) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc
}

/// `ν_n(t)`, the `n`-th moment of the limit law at time `t`.
///
/// `ν_0 = 1` and `ν_{-n} = ν_n`. For `t > 0` the law lives on the unit
/// circle, for `t < 0` on the positive half-line.
pub fn nu_moment(n: i32, t: f64) -> f64 {
    let m = n.unsigned_abs();
    if m == 0 {
        return 1.0;
    }
    let compensated = m > SAFE_MAX_ORDER || t.abs() > SAFE_MAX_TIME;
    if compensated {
        log::warn!("ν_{n}({t}): alternating sum outside the safe range, precision may be degraded");
    }
    let mf = m as f64;
    // a_k = (-t)^k m^{k-1} / k!
    let mut a = 1.0 / mf;
    let mut sum = 0.0;
    let mut carry = 0.0;
    for k in 0..m {
        if k > 0 {
            a *= -t * mf / k as f64;
        }
        let term = a * binomial(m, k + 1) as f64;
        if compensated {
            let y = term - carry;
            let s = sum + y;
            carry = (s - sum) - y;
            sum = s;
        } else {
            sum += term;
        }
    }
    (-(mf) * t / 2.0).exp() * sum
}

/// Moments `ν_0..ν_{max_n}` at a fixed time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentTable {
    pub t: f64,
    pub entries: BTreeMap<i32, f64>,
}

impl MomentTable {
    pub fn new(t: f64, max_n: u32) -> Self {
        let entries = (0..=max_n as i32).map(|n| (n, nu_moment(n, t))).collect();
        MomentTable { t, entries }
    }

    /// `ν_n`, using the symmetry `ν_{-n} = ν_n`.
    pub fn get(&self, n: i32) -> Option<f64> {
        self.entries.get(&n.abs()).copied()
    }
}

/// `Σ_{ν_t}(z) = exp((t/2)(1+z)/(1-z))`.
pub fn sigma_closed(z: Complex64, t: f64) -> Result<Complex64> {
    let one = Complex64::new(1.0, 0.0);
    if z == one {
        return Err(Error::PoleAtOne);
    }
    Ok((t / 2.0 * (one + z) / (one - z)).exp())
}

/// Truncated power series `c_0 + c_1 z + … + c_K z^K`.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerSeries {
    pub coeffs: Vec<Complex64>,
}

impl PowerSeries {
    pub fn new(coeffs: Vec<Complex64>) -> Self {
        assert!(!coeffs.is_empty(), "a power series needs at least one coefficient");
        PowerSeries { coeffs }
    }

    pub fn zero(order: usize) -> Self {
        PowerSeries::new(vec![Complex64::new(0.0, 0.0); order + 1])
    }

    /// Truncation order `K`.
    pub fn order(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn coeff(&self, k: usize) -> Complex64 {
        self.coeffs.get(k).copied().unwrap_or_default()
    }

    fn identity(order: usize) -> Self {
        let mut s = PowerSeries::zero(order);
        if order >= 1 {
            s.coeffs[1] = Complex64::new(1.0, 0.0);
        }
        s
    }

    pub fn add(&self, other: &PowerSeries) -> PowerSeries {
        let k = self.order().min(other.order());
        PowerSeries::new((0..=k).map(|i| self.coeffs[i] + other.coeffs[i]).collect())
    }

    pub fn sub(&self, other: &PowerSeries) -> PowerSeries {
        let k = self.order().min(other.order());
        PowerSeries::new((0..=k).map(|i| self.coeffs[i] - other.coeffs[i]).collect())
    }

    /// Product truncated at the smaller of the two orders.
    pub fn mul(&self, other: &PowerSeries) -> PowerSeries {
        let k = self.order().min(other.order());
        let mut out = PowerSeries::zero(k);
        for i in 0..=k {
            for j in 0..=(k - i) {
                out.coeffs[i + j] += self.coeffs[i] * other.coeffs[j];
            }
        }
        out
    }

    /// Multiplicative inverse; requires a nonzero constant term.
    pub fn recip(&self) -> Result<PowerSeries> {
        let a0 = self.coeffs[0];
        if a0.norm() == 0.0 {
            return Err(Error::NonInvertibleSeries(0.0));
        }
        let k = self.order();
        let mut out = PowerSeries::zero(k);
        out.coeffs[0] = a0.inv();
        for n in 1..=k {
            let mut acc = Complex64::new(0.0, 0.0);
            for j in 1..=n {
                acc += self.coeffs[j] * out.coeffs[n - j];
            }
            out.coeffs[n] = -acc / a0;
        }
        Ok(out)
    }

    pub fn derivative(&self) -> PowerSeries {
        let k = self.order();
        if k == 0 {
            return PowerSeries::zero(0);
        }
        PowerSeries::new((1..=k).map(|i| self.coeffs[i] * i as f64).collect())
    }

    /// `self ∘ inner` for an inner series without constant term, by Horner.
    pub fn compose(&self, inner: &PowerSeries) -> PowerSeries {
        debug_assert!(inner.coeffs[0].norm() == 0.0);
        let k = self.order().min(inner.order());
        let mut out = PowerSeries::zero(k);
        for c in self.coeffs[..=self.order()].iter().rev() {
            out = out.mul(&inner.truncate(k));
            out.coeffs[0] += c;
        }
        out
    }

    pub fn truncate(&self, order: usize) -> PowerSeries {
        let mut coeffs = self.coeffs.clone();
        coeffs.resize(order + 1, Complex64::new(0.0, 0.0));
        PowerSeries::new(coeffs)
    }

    /// Compositional inverse `g` with `self(g(z)) = z`, for a series with
    /// zero constant term and nonzero linear term.
    ///
    /// Newton iteration `g ← g − (f∘g − z)/(f'∘g)` doubles the number of
    /// correct coefficients per step.
    pub fn reversion(&self) -> Result<PowerSeries> {
        let k = self.order();
        let lin = self.coeff(1);
        if lin.norm() < 1e-10 {
            return Err(Error::NonInvertibleSeries(lin.norm()));
        }
        let id = PowerSeries::identity(k);
        let mut g = id.clone();
        g.coeffs[1] = lin.inv();
        let df = self.derivative().truncate(k);
        let mut correct = 2;
        while correct <= 2 * (k + 1) {
            let residual = self.compose(&g).sub(&id);
            let denom = df.compose(&g).recip()?;
            g = g.sub(&residual.mul(&denom));
            g.coeffs[0] = Complex64::new(0.0, 0.0);
            correct *= 2;
        }
        Ok(g)
    }
}

/// Σ-transform of `ν_t` as a series of order `K − 1`, computed from the
/// moments alone: `ψ(z) = Σ_{n≥1} ν_n(t) zⁿ`, `η = ψ/(1+ψ)`,
/// `Σ(z) = η⁻¹(z)/z`.
pub fn sigma_from_moments(t: f64, order: usize) -> Result<PowerSeries> {
    if order > MAX_SERIES_ORDER {
        return Err(Error::PreconditionViolated(format!(
            "series order {order} exceeds {MAX_SERIES_ORDER}"
        )));
    }
    if order == 0 {
        return Err(Error::PreconditionViolated("series order must be ≥ 1".into()));
    }
    let mut psi = PowerSeries::zero(order);
    for n in 1..=order {
        psi.coeffs[n] = Complex64::new(nu_moment(n as i32, t), 0.0);
    }
    let mut one_plus = psi.clone();
    one_plus.coeffs[0] += 1.0;
    let eta = psi.mul(&one_plus.recip()?);
    let inverse = eta.reversion()?;
    Ok(PowerSeries::new(inverse.coeffs[1..].to_vec()))
}

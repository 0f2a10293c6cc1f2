//! Asymptotic secret fraction and key rate of the two-basis protocol,
//! basis-bias optimisation, critical thresholds and feasibility maps.
//!
//! Alice's bias `p = P(X = 0)` fixes the sifting probability
//! `p_s = p² + (1−p)²` and the weight `λ = p²/p_s` of the `A₀B₀` rounds in
//! the sifted key. Rates use the sifting limit `q → 1`.

use rayon::prelude::*;
use serde::Serialize;

use crate::bound::hull::{BoundCurve, CurveBank};
use crate::entropy::h2;
use crate::error::{check_range, Error, Result};
use crate::quantum::{depolarizing_qber, ChannelPoint};
use crate::scalar::{tsirelson, Real};

pub fn sifting_probability<T: Real>(p: T) -> T {
    p * p + (T::one() - p) * (T::one() - p)
}

pub fn lambda_from_p<T: Real>(p: T) -> Result<T> {
    check_range("p", p.as_f64(), 0.0, 1.0, "[0, 1]")?;
    Ok(p * p / sifting_probability(p))
}

/// Inverse of [`lambda_from_p`] on `[0, 1]`.
pub fn p_from_lambda<T: Real>(lambda: T) -> Result<T> {
    check_range("lambda", lambda.as_f64(), 0.0, 1.0, "[0, 1]")?;
    let (a, b) = (lambda.sqrt(), (T::one() - lambda).sqrt());
    Ok(a / (a + b))
}

/// `{0, 0.05, …, 1}`.
pub fn lambda_grid() -> Vec<f64> {
    (0..=20).map(|i| i as f64 / 20.0).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct KeyRateInputs<T: Real> {
    pub p: T,
    pub lambda: T,
    pub p_s: T,
    pub channel: ChannelPoint<T>,
}

impl<T: Real> KeyRateInputs<T> {
    pub fn from_p(p: T, channel: ChannelPoint<T>) -> Result<Self> {
        Ok(Self {
            p,
            lambda: lambda_from_p(p)?,
            p_s: sifting_probability(p),
            channel,
        })
    }

    pub fn from_lambda(lambda: T, channel: ChannelPoint<T>) -> Result<Self> {
        let p = p_from_lambda(lambda)?;
        Ok(Self {
            p,
            lambda,
            p_s: sifting_probability(p),
            channel,
        })
    }

    /// `λh(q₀₀) + (1−λ)h(q₁₁)`.
    pub fn error_correction_cost(&self) -> T {
        self.lambda * h2(self.channel.q00) + (T::one() - self.lambda) * h2(self.channel.q11)
    }
}

/// `r = C* − λh(q₀₀) − (1−λ)h(q₁₁)`, unclamped.
pub fn secret_fraction<T: Real>(inputs: &KeyRateInputs<T>, c_star: T) -> T {
    c_star - inputs.error_correction_cost()
}

/// `K = p_s · r` bits per round, unclamped.
pub fn key_rate<T: Real>(inputs: &KeyRateInputs<T>, c_star: T) -> T {
    inputs.p_s * secret_fraction(inputs, c_star)
}

/// Rate at the channel's CHSH value using the curve's weight.
pub fn curve_rate<T: Real>(curve: &BoundCurve<T>, channel: ChannelPoint<T>) -> Result<T> {
    let inputs = KeyRateInputs::from_lambda(curve.lambda, channel)?;
    Ok(key_rate(&inputs, curve.evaluate(channel.s)))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct BasisChoice<T: Real> {
    pub best_lambda: T,
    /// Unclamped rate at `best_lambda`.
    pub best_rate: T,
    /// `(λ, rate)` for every curve in the bank.
    pub rates: Vec<(T, T)>,
}

/// Best weight over the bank's curves; ties go to the larger `λ`.
pub fn optimize_basis_bias<T: Real>(
    channel: ChannelPoint<T>,
    bank: &CurveBank<T>,
) -> Result<BasisChoice<T>> {
    if bank.get(0.5).is_none() || bank.get(1.0).is_none() {
        return Err(Error::Invalid("the λ grid must contain ½ and 1".into()));
    }
    let rates = bank
        .curves()
        .iter()
        .map(|c| Ok((c.lambda, curve_rate(c, channel)?)))
        .collect::<Result<Vec<_>>>()?;
    let (best_lambda, best_rate) = rates
        .iter()
        .copied()
        .reduce(|best, r| if r.1 >= best.1 { r } else { best })
        .expect("bank is not empty");
    Ok(BasisChoice {
        best_lambda,
        best_rate,
        rates,
    })
}

/// Root of `x ↦ h(x) − y` on `[0, ½]`.
pub fn inverse_binary_entropy<T: Real>(y: T) -> T {
    if y <= T::zero() {
        return T::zero();
    }
    if y >= T::one() {
        return T::lit(0.5);
    }
    let (mut lo, mut hi) = (T::zero(), T::lit(0.5));
    for _ in 0..200 {
        let mid = (lo + hi) * T::lit(0.5);
        if h2(mid) < y {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= T::default_epsilon() {
            break;
        }
    }
    (lo + hi) * T::lit(0.5)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct CriticalPoint<T: Real> {
    pub lambda: T,
    pub s_star: T,
    pub q_star: T,
    pub iterations: usize,
}

/// Zero of the secret fraction along the depolarising line, to `tol` in `S`.
pub fn critical_chsh<T: Real>(curve: &BoundCurve<T>, tol: T) -> Result<CriticalPoint<T>> {
    let f = |s: T| -> Result<T> { Ok(curve.evaluate(s) - h2(depolarizing_qber(s)?)) };
    let (mut lo, mut hi) = (T::lit(2.0), tsirelson::<T>());
    let (flo, fhi) = (f(lo)?, f(hi)?);
    if !(flo < T::zero() && fhi > T::zero()) {
        return Err(Error::NoSignChange {
            lo: lo.as_f64(),
            hi: hi.as_f64(),
        });
    }
    let mut iterations = 0;
    while hi - lo > tol {
        let mid = (lo + hi) * T::lit(0.5);
        if f(mid)? > T::zero() {
            hi = mid;
        } else {
            lo = mid;
        }
        iterations += 1;
    }
    let s_star = (lo + hi) * T::lit(0.5);
    Ok(CriticalPoint {
        lambda: curve.lambda,
        s_star,
        q_star: depolarizing_qber(s_star)?,
        iterations,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct GridCell<T: Real> {
    pub s: T,
    pub qber: T,
    pub best_lambda: T,
    /// Optimised rate clamped at 0.
    pub key_rate: T,
    pub raw_rate: T,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct FeasibilityGrid<T: Real> {
    pub s_values: Vec<T>,
    pub q_values: Vec<T>,
    /// Row-major over `S`, then QBER.
    pub cells: Vec<GridCell<T>>,
    /// Largest QBER with a nonnegative rate at each `S`, both bases equal.
    pub zero_contour: Vec<(T, T)>,
}

fn linspace<T: Real>(lo: T, hi: T, n: usize) -> Vec<T> {
    (0..n)
        .map(|i| {
            if i + 1 == n {
                hi
            } else {
                lo + (hi - lo) * T::lit(i as f64) / T::lit((n - 1).max(1) as f64)
            }
        })
        .collect()
}

/// `λ`-optimised rates on a uniform `(S, QBER)` grid with equal QBER in both bases.
pub fn feasibility_grid<T: Real>(
    s_range: (T, T),
    q_range: (T, T),
    resolution: (usize, usize),
    bank: &CurveBank<T>,
) -> Result<FeasibilityGrid<T>> {
    let top = tsirelson::<f64>() + 1e-6;
    check_range("S min", s_range.0.as_f64(), 2.0, top, "[2, 2√2]")?;
    check_range(
        "S max",
        s_range.1.as_f64(),
        s_range.0.as_f64(),
        top,
        "[S min, 2√2]",
    )?;
    check_range("QBER min", q_range.0.as_f64(), 0.0, 0.5, "[0, ½]")?;
    check_range(
        "QBER max",
        q_range.1.as_f64(),
        q_range.0.as_f64(),
        0.5,
        "[QBER min, ½]",
    )?;
    if resolution.0 < 2 || resolution.1 < 2 {
        return Err(Error::Invalid(format!(
            "grid resolution must be at least 2×2, got {}×{}",
            resolution.0, resolution.1
        )));
    }
    let s_values = linspace(s_range.0, s_range.1, resolution.0);
    let q_values = linspace(q_range.0, q_range.1, resolution.1);
    let pairs: Vec<(T, T)> = s_values
        .iter()
        .flat_map(|&s| q_values.iter().map(move |&q| (s, q)))
        .collect();
    let cells = pairs
        .into_par_iter()
        .map(|(s, q)| {
            let choice = optimize_basis_bias(ChannelPoint::new(s, q, q)?, bank)?;
            Ok(GridCell {
                s,
                qber: q,
                best_lambda: choice.best_lambda,
                key_rate: choice.best_rate.max(T::zero()),
                raw_rate: choice.best_rate,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let zero_contour = s_values
        .iter()
        .map(|&s| {
            let c = bank
                .curves()
                .iter()
                .fold(T::zero(), |m, curve| m.max(curve.evaluate(s)));
            (s, inverse_binary_entropy(c))
        })
        .collect();
    Ok(FeasibilityGrid {
        s_values,
        q_values,
        cells,
        zero_contour,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ExperimentRecord<T: Real> {
    pub label: String,
    pub year: i32,
    pub s: T,
    pub qber: T,
    pub source: String,
}

impl<T: Real> ExperimentRecord<T> {
    pub fn validate(&self) -> Result<()> {
        if self.label.trim().is_empty() {
            return Err(Error::Invalid("empty label".into()));
        }
        if !(self.s.as_f64() >= 2.0 && self.s.as_f64() <= tsirelson::<f64>() + 1e-6) {
            return Err(Error::Invalid(format!("S out of [2, 2√2]: {}", self.s)));
        }
        if !(self.qber.as_f64() >= 0.0 && self.qber.as_f64() <= 0.5) {
            return Err(Error::Invalid(format!("qber out of [0, ½]: {}", self.qber)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ExperimentRate<T: Real> {
    pub label: String,
    pub year: i32,
    pub s: T,
    pub qber: T,
    pub best_lambda: T,
    /// Optimised rate clamped at 0.
    pub rate: T,
}

/// Rate per record, equal QBER in both bases; invalid rows fail individually.
pub fn evaluate_experiments<T: Real>(
    records: &[ExperimentRecord<T>],
    bank: &CurveBank<T>,
) -> Vec<Result<ExperimentRate<T>>> {
    records
        .iter()
        .map(|r| {
            r.validate()?;
            let choice = optimize_basis_bias(ChannelPoint::new(r.s, r.qber, r.qber)?, bank)?;
            Ok(ExperimentRate {
                label: r.label.clone(),
                year: r.year,
                s: r.s,
                qber: r.qber,
                best_lambda: choice.best_lambda,
                rate: choice.best_rate.max(T::zero()),
            })
        })
        .collect()
}

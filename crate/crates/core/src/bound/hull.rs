//! Lower convex envelope of a sampled bound curve.
//!
//! A sub-probability mixture over CHSH values is the same as a probability
//! mixture that may also put weight on `(S′, C) = (0, 0)`, so the envelope
//! is taken over the grid points together with the origin.

use rayon::prelude::*;
use serde::Serialize;

use crate::bound::net::NetConfig;
use crate::bound::pipeline::{qubit_bound_at, EntropyBoundPoint};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// How the envelope is read between grid nodes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum HullMode {
    /// Envelope of the node values, linear between knots.
    #[default]
    Interpolated,
    /// Envelope of the staircase that holds each node value up to the next
    /// node. The qubit bound is nondecreasing in `S`, so this is a lower
    /// bound at every `S`, not only at the nodes.
    Staircase,
}

#[derive(Clone, Debug, PartialEq, Serialize, serde::Deserialize)]
#[serde(rename_all = "camelCase", bound(deserialize = ""))]
pub struct BoundCurve<T: Real> {
    pub lambda: T,
    pub mode: HullMode,
    pub points: Vec<EntropyBoundPoint<T>>,
    /// Knots of the envelope, starting at `(0, 0)`.
    pub hull_knots: Vec<(T, T)>,
}

fn cross<T: Real>(o: (T, T), a: (T, T), b: (T, T)) -> T {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

/// Lower hull of points sorted by abscissa (monotone chain).
pub fn lower_hull<T: Real>(pts: &[(T, T)]) -> Vec<(T, T)> {
    let mut hull: Vec<(T, T)> = Vec::with_capacity(pts.len());
    for &p in pts {
        while hull.len() >= 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= T::zero() {
            hull.pop();
        }
        hull.push(p);
    }
    hull
}

/// Piecewise-linear interpolation through `knots`, constant outside them.
pub fn interpolate<T: Real>(knots: &[(T, T)], x: T) -> T {
    let Some(first) = knots.first() else {
        return T::zero();
    };
    if x <= first.0 {
        return first.1;
    }
    let i = knots.partition_point(|k| k.0 < x);
    if i == knots.len() {
        return knots[i - 1].1;
    }
    let (a, b) = (knots[i - 1], knots[i]);
    if b.0 == a.0 {
        return a.1.min(b.1);
    }
    let w = (x - a.0) / (b.0 - a.0);
    a.1 + w * (b.1 - a.1)
}

/// Envelope of `(s, c_qubit)` over the points and the origin.
pub fn convexify_curve<T: Real>(
    points: Vec<EntropyBoundPoint<T>>,
    lambda: T,
    mode: HullMode,
) -> Result<BoundCurve<T>> {
    if points.len() < 2 {
        return Err(Error::Invalid(format!(
            "need at least 2 curve points, got {}",
            points.len()
        )));
    }
    if let Some(w) = points.windows(2).find(|w| !(w[1].s > w[0].s)) {
        return Err(Error::Invalid(format!(
            "curve points must have strictly increasing S ({} then {})",
            w[0].s, w[1].s
        )));
    }
    if points[0].s <= T::zero() {
        return Err(Error::Invalid("curve points must have S > 0".into()));
    }
    let mut nodes = vec![(T::zero(), T::zero())];
    match mode {
        HullMode::Interpolated => nodes.extend(points.iter().map(|p| (p.s, p.c_qubit))),
        HullMode::Staircase => {
            nodes.push((points[0].s, points[0].c_qubit));
            nodes.extend(
                points
                    .windows(2)
                    .map(|w| (w[1].s, w[0].c_qubit.min(w[1].c_qubit))),
            );
        }
    }
    let hull_knots = lower_hull(&nodes);
    Ok(BoundCurve {
        lambda,
        mode,
        points,
        hull_knots,
    })
}

impl<T: Real> BoundCurve<T> {
    /// Envelope value at `S`; 0 at and below `S = 2`, constant above the grid.
    pub fn evaluate(&self, s: T) -> T {
        if s <= T::lit(2.0) {
            return T::zero();
        }
        interpolate(&self.hull_knots, s).max(T::zero())
    }

    /// Envelope value at each grid node.
    pub fn hull_values(&self) -> Vec<T> {
        self.points.iter().map(|p| self.evaluate(p.s)).collect()
    }

    /// Largest duality gap among all cells solved for this curve.
    pub fn max_gap(&self) -> T {
        self.points.iter().fold(T::zero(), |m, p| m.max(p.max_gap))
    }

    pub fn total_solves(&self) -> usize {
        self.points.iter().map(|p| p.solves).sum()
    }
}

/// Certified bound at every grid `S`, then its envelope.
pub fn compute_curve<T: Real>(lambda: T, cfg: &NetConfig, mode: HullMode) -> Result<BoundCurve<T>> {
    cfg.validate()?;
    let points = cfg
        .s_values()
        .into_par_iter()
        .map(|s| qubit_bound_at(T::lit(s), lambda, cfg))
        .collect::<Result<Vec<_>>>()?;
    convexify_curve(points, lambda, mode)
}

/// Curves for a set of basis weights, computed once and shared read-only.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct CurveBank<T: Real> {
    curves: Vec<BoundCurve<T>>,
}

fn lambda_key(lambda: f64) -> i64 {
    (lambda * 1e9).round() as i64
}

impl<T: Real> CurveBank<T> {
    /// Curves for every `λ`; weights `λ` and `1−λ` share one computation.
    pub fn compute(lambdas: &[f64], cfg: &NetConfig, mode: HullMode) -> Result<Self> {
        let mut weights: Vec<f64> = lambdas.iter().map(|&l| l.max(1.0 - l)).collect();
        weights.sort_by(f64::total_cmp);
        weights.dedup_by_key(|w| lambda_key(*w));
        let mut base = Vec::with_capacity(weights.len());
        for &w in &weights {
            base.push(compute_curve(T::lit(w), cfg, mode)?);
        }
        let curves = lambdas
            .iter()
            .map(|&l| {
                let key = lambda_key(l.max(1.0 - l));
                let src = &base[weights
                    .iter()
                    .position(|&w| lambda_key(w) == key)
                    .expect("weight computed")];
                src.relabeled(T::lit(l))
            })
            .collect();
        Self::from_curves(curves)
    }

    pub fn from_curves(mut curves: Vec<BoundCurve<T>>) -> Result<Self> {
        curves.sort_by(|a, b| a.lambda.as_f64().total_cmp(&b.lambda.as_f64()));
        curves.dedup_by_key(|c| lambda_key(c.lambda.as_f64()));
        if curves.is_empty() {
            return Err(Error::Invalid("no bound curves".into()));
        }
        Ok(Self { curves })
    }

    pub fn curves(&self) -> &[BoundCurve<T>] {
        &self.curves
    }

    pub fn get(&self, lambda: f64) -> Option<&BoundCurve<T>> {
        self.curves
            .iter()
            .find(|c| lambda_key(c.lambda.as_f64()) == lambda_key(lambda))
    }
}

impl<T: Real> BoundCurve<T> {
    /// The same curve attributed to another weight.
    pub fn relabeled(&self, lambda: T) -> Self {
        let mut c = self.clone();
        c.lambda = lambda;
        for p in &mut c.points {
            p.lambda = lambda;
        }
        c
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bound::pipeline::synthetic_point;
    use std::f64::consts::SQRT_2;

    fn point(s: f64, c: f64) -> EntropyBoundPoint<f64> {
        synthetic_point(s, 0.5, c)
    }

    #[test]
    fn two_point_line() {
        let top = 2.0 * SQRT_2;
        let c = convexify_curve(
            vec![point(2.0, 0.0), point(top, 1.0)],
            0.5,
            HullMode::Interpolated,
        )
        .unwrap();
        let v = c.evaluate(2.4);
        assert!((v - 0.4 / (top - 2.0)).abs() < 1e-12);
        assert!((v - 0.48284).abs() < 1e-5);
        assert_eq!(c.evaluate(1.5), 0.0);
        assert_eq!(c.evaluate(top), 1.0);
    }

    #[test]
    fn convex_input_is_reproduced() {
        let pts: Vec<_> = (0..9)
            .map(|i| 2.0 + 0.1 * i as f64)
            .map(|s| point(s, (s - 2.0).powi(2)))
            .collect();
        let c = convexify_curve(pts.clone(), 0.5, HullMode::Interpolated).unwrap();
        for p in &pts {
            assert!((c.evaluate(p.s) - p.c_qubit).abs() < 1e-12);
        }
    }

    #[test]
    fn envelope_below_points_and_monotone() {
        let raw = [0.0, 0.05, 0.02, 0.2, 0.18, 0.5, 0.45, 0.9, 1.0];
        let pts: Vec<_> = raw
            .iter()
            .enumerate()
            .map(|(i, &c)| point(2.0 + 0.1 * i as f64, c))
            .collect();
        for mode in [HullMode::Interpolated, HullMode::Staircase] {
            let c = convexify_curve(pts.clone(), 0.5, mode).unwrap();
            for p in &pts {
                assert!(c.evaluate(p.s) <= p.c_qubit + 1e-12);
            }
            let k = &c.hull_knots;
            assert_eq!(k[0], (0.0, 0.0));
            let slopes: Vec<f64> = k
                .windows(2)
                .map(|w| (w[1].1 - w[0].1) / (w[1].0 - w[0].0))
                .collect();
            assert!(slopes.windows(2).all(|w| w[1] >= w[0] - 1e-12));
            assert!(slopes.iter().all(|&m| m >= 0.0));
        }
    }

    #[test]
    fn staircase_never_exceeds_interpolated() {
        let pts: Vec<_> = (0..9)
            .map(|i| 2.0 + 0.1 * i as f64)
            .map(|s| point(s, (s - 2.0).sqrt()))
            .collect();
        let a = convexify_curve(pts.clone(), 0.5, HullMode::Interpolated).unwrap();
        let b = convexify_curve(pts, 0.5, HullMode::Staircase).unwrap();
        for i in 0..=80 {
            let s = 2.0 + 0.01 * i as f64;
            assert!(b.evaluate(s) <= a.evaluate(s) + 1e-12);
        }
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(convexify_curve(vec![point(2.0, 0.0)], 0.5, HullMode::Interpolated).is_err());
        assert!(convexify_curve(
            vec![point(2.2, 0.1), point(2.1, 0.0)],
            0.5,
            HullMode::Interpolated
        )
        .is_err());
        assert!(convexify_curve(
            vec![point(2.1, 0.0), point(2.1, 0.1)],
            0.5,
            HullMode::Interpolated
        )
        .is_err());
    }
}

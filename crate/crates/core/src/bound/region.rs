//! Admissible pairs `(H(A₀|E), H(A₁|E))` at a fixed CHSH value.

use serde::Serialize;

use crate::bound::hull::CurveBank;
use crate::scalar::Real;

/// `λ·x + (1−λ)·y ≥ bound`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct HalfPlane<T: Real> {
    pub lambda: T,
    pub bound: T,
}

impl<T: Real> HalfPlane<T> {
    pub fn value(&self, p: (T, T)) -> T {
        self.lambda * p.0 + (T::one() - self.lambda) * p.1 - self.bound
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct UncertaintyRegion<T: Real> {
    pub s: T,
    pub half_planes: Vec<HalfPlane<T>>,
    /// Counter-clockwise vertices of the region inside `[0, 1]²`.
    pub polygon: Vec<(T, T)>,
    /// Lower-left boundary from the top edge to the right edge, `x` increasing.
    pub boundary: Vec<(T, T)>,
}

fn clip<T: Real>(poly: &[(T, T)], h: &HalfPlane<T>) -> Vec<(T, T)> {
    let mut out = Vec::with_capacity(poly.len() + 1);
    for i in 0..poly.len() {
        let (a, b) = (poly[i], poly[(i + 1) % poly.len()]);
        let (va, vb) = (h.value(a), h.value(b));
        if va >= T::zero() {
            out.push(a);
        }
        if (va >= T::zero()) != (vb >= T::zero()) {
            let t = va / (va - vb);
            out.push((a.0 + t * (b.0 - a.0), a.1 + t * (b.1 - a.1)));
        }
    }
    out
}

/// Intersection of the unit square with one supporting half-plane per curve.
pub fn uncertainty_region<T: Real>(s: T, bank: &CurveBank<T>) -> UncertaintyRegion<T> {
    let half_planes: Vec<_> = bank
        .curves()
        .iter()
        .map(|c| HalfPlane {
            lambda: c.lambda,
            bound: c.evaluate(s),
        })
        .collect();
    let (z, o) = (T::zero(), T::one());
    let mut polygon = vec![(z, z), (o, z), (o, o), (z, o)];
    for h in &half_planes {
        polygon = clip(&polygon, h);
        if polygon.is_empty() {
            break;
        }
    }
    polygon.dedup_by(|a, b| (a.0 - b.0).abs() < T::lit(1e-12) && (a.1 - b.1).abs() < T::lit(1e-12));
    let boundary = lower_left(&polygon);
    UncertaintyRegion {
        s,
        half_planes,
        polygon,
        boundary,
    }
}

fn lower_left<T: Real>(polygon: &[(T, T)]) -> Vec<(T, T)> {
    if polygon.is_empty() {
        return Vec::new();
    }
    let eps = T::lit(1e-12);
    let x_min = polygon.iter().fold(T::one(), |m, p| m.min(p.0));
    let y_min = polygon.iter().fold(T::one(), |m, p| m.min(p.1));
    let mut chain: Vec<(T, T)> = polygon
        .iter()
        .copied()
        .filter(|p| {
            !(p.1 >= T::one() - eps && p.0 > x_min + eps)
                && !(p.0 >= T::one() - eps && p.1 > y_min + eps)
        })
        .collect();
    chain.sort_by(|a, b| {
        a.0.as_f64()
            .total_cmp(&b.0.as_f64())
            .then(b.1.as_f64().total_cmp(&a.1.as_f64()))
    });
    chain
}

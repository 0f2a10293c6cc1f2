//! Certified qubit-level bound `t*(S) = inf λδ(ρ,0) + (1−λ)δ(ρ,φ)` over
//! `φ ∈ [0, π/2]`, unit `b` and states with `⟨F(φ)·b⟩_ρ ≥ S`.
//!
//! The `(φ, ω)` box is covered by dyadic cells. For a cell with centre
//! `(φ_c, ω_c)` and half-widths `(η_φ, η_ω)`, every state feasible for some
//! `(φ, ω)` in the cell satisfies the single constraint
//!
//! ```text
//!   S′  = S − L_F · max|sin ω| · 2 sin(η_φ/2)
//!   ⟨F(φ_c)·b_c⟩ ≥ S′ cos η_ω − sin η_ω · √(M² − S′²),   M² = 4(1 + sin φ_c)
//! ```
//!
//! (`M` bounds `‖(⟨F_z⟩, ⟨F_x⟩)‖`, and the arc of `b` within `η_ω` of `b_c`
//! is relaxed to its supporting half-plane), while the objective moves by
//! at most `(1−λ)·L_δ·2 sin(η_φ/2)`. The SDP dual at the centre minus that
//! slack is therefore a lower bound over the whole cell.
//!
//! Cells are refined best-first; see [`branch_and_bound`].

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::bound::net::{LipschitzConstants, NetConfig};
use crate::entropy::refined_pinsker_clamped;
use crate::error::{check_range, Error, Result};
use crate::scalar::{tsirelson, Real};
use crate::sdp::{
    ChshConstraint, DualCertificate, SolveStatus, SolverOptions, WeightedDeltaProblem,
};

/// The cell whose bound determined a reported value.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", bound(deserialize = ""))]
pub struct CellCertificate<T: Real> {
    pub phi: T,
    pub omega: T,
    pub phi_halfwidth: T,
    pub omega_halfwidth: T,
    /// Relaxed right-hand side used in the SDP.
    pub rhs: T,
    pub dual_value: T,
    /// Absent when the bound was inherited rather than solved.
    pub primal_value: Option<T>,
    pub gap: Option<T>,
    pub objective_slack: T,
    pub status: SolveStatus,
    /// The dual value re-evaluates the parent cell's certificate.
    pub inherited: bool,
}

impl<T: Real> CellCertificate<T> {
    /// `dual − objective slack`, floored at 0.
    pub fn bound(&self) -> T {
        (self.dual_value - self.objective_slack).max(T::zero())
    }

    /// Constraint relaxation relative to the requested `S`.
    pub fn constraint_slack(&self, s: T) -> T {
        (s - self.rhs).max(T::zero())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", bound(deserialize = ""))]
pub struct EntropyBoundPoint<T: Real> {
    pub s: T,
    pub lambda: T,
    pub t_star: T,
    /// `g(t*)` in bits.
    pub c_qubit: T,
    /// Objective slack plus constraint relaxation of the binding cell.
    pub slack_used: T,
    pub certificate: CellCertificate<T>,
    pub solves: usize,
    /// Largest duality gap among all solved cells.
    pub max_gap: T,
}

/// Result of the `b` minimisation at a fixed `φ`.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct MinOverB<T: Real> {
    pub t_star: T,
    pub certificate: CellCertificate<T>,
    pub solves: usize,
}

struct Axis<T> {
    lo: T,
    root_width: T,
    depth: u32,
}

impl<T: Real> Axis<T> {
    fn new(lo: T, hi: T, root: usize, depth: u32) -> Self {
        Self {
            lo,
            root_width: (hi - lo) / T::lit(root as f64),
            depth,
        }
    }

    /// Centre and half-width of cell `idx` at `level`.
    fn cell(&self, level: u32, idx: u64) -> (T, T) {
        let w = self.root_width / T::lit((1u64 << level) as f64);
        (
            self.lo + w * (T::lit(idx as f64) + T::lit(0.5)),
            w * T::lit(0.5),
        )
    }
}

#[derive(Clone)]
struct Node<T: Real> {
    eff: T,
    pl: u32,
    pi: u64,
    ol: u32,
    oi: u64,
    solved: bool,
    cert: CellCertificate<T>,
    dual: Option<DualCertificate<T>>,
}

impl<T: Real> Node<T> {
    fn key(&self) -> (f64, u32, u32, u64, u64) {
        (
            self.eff.as_f64(),
            self.pl + self.ol,
            self.pl,
            self.pi,
            self.oi,
        )
    }
}

impl<T: Real> PartialEq for Node<T> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl<T: Real> Eq for Node<T> {}
impl<T: Real> PartialOrd for Node<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<T: Real> Ord for Node<T> {
    /// Max-heap order: smallest bound first, then deepest, then by index.
    fn cmp(&self, other: &Self) -> Ordering {
        let (a, b) = (self.key(), other.key());
        b.0.total_cmp(&a.0)
            .then(a.1.cmp(&b.1))
            .then(b.2.cmp(&a.2))
            .then(b.3.cmp(&a.3))
            .then(b.4.cmp(&a.4))
    }
}

/// Constraint on the cell centre after relaxing over the cell.
enum Relaxed<T> {
    /// No state in the cell reaches `S`.
    Empty,
    /// The relaxed constraint is vacuous.
    Trivial,
    AtLeast(T),
}

struct Cell<T> {
    phi: T,
    eta_phi: T,
    omega: T,
    eta_omega: T,
}

impl<T: Real> Cell<T> {
    fn objective_slack(&self, lambda: T, lip: &LipschitzConstants) -> T {
        let two = T::lit(2.0);
        (T::one() - lambda) * T::lit(lip.l_delta) * two * (self.eta_phi / two).sin()
    }

    fn relax(&self, s: T, lip: &LipschitzConstants) -> Relaxed<T> {
        let two = T::lit(2.0);
        let chord = two * (self.eta_phi / two).sin();
        let sin_max = (self.omega + self.eta_omega).min(T::frac_pi_2()).sin();
        let s1 = s - T::lit(lip.l_f) * sin_max * chord;
        if s1 <= T::zero() {
            return Relaxed::Trivial;
        }
        let m2 = T::lit(4.0) * (T::one() + self.phi.sin());
        if s1 * s1 > m2 * (T::one() + T::default_epsilon() * T::lit(16.0)) {
            return Relaxed::Empty;
        }
        Relaxed::AtLeast(
            s1 * self.eta_omega.cos() - self.eta_omega.sin() * (m2 - s1 * s1).max(T::zero()).sqrt(),
        )
    }

    fn problem(&self, lambda: T, rhs: T) -> WeightedDeltaProblem<T> {
        WeightedDeltaProblem::new(
            self.phi,
            (self.omega.cos(), self.omega.sin()),
            lambda,
            ChshConstraint::AtLeast(rhs),
        )
    }

    fn certificate(&self, lambda: T, lip: &LipschitzConstants) -> CellCertificate<T> {
        CellCertificate {
            phi: self.phi,
            omega: self.omega,
            phi_halfwidth: self.eta_phi,
            omega_halfwidth: self.eta_omega,
            rhs: T::lit(f64::NEG_INFINITY),
            dual_value: T::zero(),
            primal_value: Some(T::zero()),
            gap: Some(T::zero()),
            objective_slack: self.objective_slack(lambda, lip),
            status: SolveStatus::Optimal,
            inherited: false,
        }
    }
}

/// SDP bound on the cell, or `None` when no state in it reaches `S`.
fn solve_cell<T: Real>(
    s: T,
    lambda: T,
    cell: &Cell<T>,
    lip: &LipschitzConstants,
    opts: &SolverOptions<T>,
) -> Option<(CellCertificate<T>, Option<DualCertificate<T>>)> {
    let mut cert = cell.certificate(lambda, lip);
    let rhs = match cell.relax(s, lip) {
        Relaxed::Empty => return None,
        Relaxed::Trivial => return Some((cert, None)),
        Relaxed::AtLeast(r) => r,
    };
    let sol = cell.problem(lambda, rhs).solve(opts);
    if sol.status == SolveStatus::Infeasible {
        return None;
    }
    cert.rhs = rhs;
    cert.dual_value = sol.dual_value;
    cert.primal_value = Some(sol.primal_value);
    cert.gap = Some(sol.gap.max(T::zero()));
    cert.status = sol.status;
    Some((cert, sol.certificate))
}

/// Bound from an inherited dual certificate; no SDP is solved.
fn inherit_cell<T: Real>(
    s: T,
    lambda: T,
    cell: &Cell<T>,
    lip: &LipschitzConstants,
    dual: Option<&DualCertificate<T>>,
) -> Option<CellCertificate<T>> {
    let mut cert = cell.certificate(lambda, lip);
    let rhs = match cell.relax(s, lip) {
        Relaxed::Empty => return None,
        Relaxed::Trivial => return Some(cert),
        Relaxed::AtLeast(r) => r,
    };
    let problem = cell.problem(lambda, rhs);
    if problem.certainly_infeasible() {
        return None;
    }
    cert.rhs = rhs;
    if let Some(d) = dual {
        cert.dual_value = problem.certify(d).max(T::zero());
    }
    cert.primal_value = None;
    cert.gap = None;
    cert.inherited = true;
    Some(cert)
}

struct Search<T: Real> {
    t_star: T,
    cert: CellCertificate<T>,
    solves: usize,
    max_gap: T,
}

/// Best-first search over dyadic cells.
///
/// The deeper axis is first refined alone until both axes have the same
/// number of levels left; afterwards both split together. The tree of a
/// net is then a prefix of the tree of its doubled net.
///
/// A cell's value is the largest bound among itself and its ancestors,
/// where a bound is either an SDP solve or a parent's dual certificate
/// re-evaluated on the cell. Cells are solved when first popped, and the
/// search stops at the first solved finest cell, whose value is then the
/// minimum over all finest cells.
#[allow(clippy::too_many_arguments)]
fn branch_and_bound<T: Real>(
    s: T,
    lambda: T,
    phi: Axis<T>,
    phi_root: usize,
    omega: Axis<T>,
    omega_root: usize,
    lip: &LipschitzConstants,
    opts: &SolverOptions<T>,
) -> Option<Search<T>> {
    let excess = phi.depth as i64 - omega.depth as i64;
    let cell_at = |pl: u32, pi: u64, ol: u32, oi: u64| {
        let (pc, pw) = phi.cell(pl, pi);
        let (oc, ow) = omega.cell(ol, oi);
        Cell {
            phi: pc,
            eta_phi: pw,
            omega: oc,
            eta_omega: ow,
        }
    };
    let mut heap = BinaryHeap::new();
    let mut solves = 0usize;
    let mut max_gap = T::zero();
    for pi in 0..phi_root as u64 {
        for oi in 0..omega_root as u64 {
            let cell = cell_at(0, pi, 0, oi);
            if let Some(cert) = inherit_cell(s, lambda, &cell, lip, None) {
                heap.push(Node {
                    eff: cert.bound(),
                    pl: 0,
                    pi,
                    ol: 0,
                    oi,
                    solved: false,
                    cert,
                    dual: None,
                });
            }
        }
    }
    while let Some(mut node) = heap.pop() {
        if !node.solved {
            solves += 1;
            let cell = cell_at(node.pl, node.pi, node.ol, node.oi);
            let Some((cert, dual)) = solve_cell(s, lambda, &cell, lip, opts) else {
                continue;
            };
            max_gap = max_gap.max(cert.gap.unwrap_or(T::zero()));
            if cert.bound() >= node.eff {
                node.eff = cert.bound();
                node.cert = cert;
            }
            node.solved = true;
            node.dual = dual;
            if heap.peek().is_some_and(|top| top > &node) {
                heap.push(node);
                continue;
            }
        }
        let lead = node.pl as i64 - node.ol as i64;
        let (split_phi, split_omega) = match (node.pl < phi.depth, node.ol < omega.depth) {
            (false, false) => {
                return Some(Search {
                    t_star: node.eff,
                    cert: node.cert,
                    solves,
                    max_gap,
                })
            }
            (true, false) => (true, false),
            (false, true) => (false, true),
            (true, true) if lead < excess => (true, false),
            (true, true) if lead > excess => (false, true),
            (true, true) => (true, true),
        };
        let phis: &[(u32, u64)] = &if split_phi {
            [(node.pl + 1, 2 * node.pi), (node.pl + 1, 2 * node.pi + 1)]
        } else {
            [(node.pl, node.pi), (u32::MAX, 0)]
        };
        let omegas: &[(u32, u64)] = &if split_omega {
            [(node.ol + 1, 2 * node.oi), (node.ol + 1, 2 * node.oi + 1)]
        } else {
            [(node.ol, node.oi), (u32::MAX, 0)]
        };
        for &(pl, pi) in phis.iter().filter(|p| p.0 != u32::MAX) {
            for &(ol, oi) in omegas.iter().filter(|o| o.0 != u32::MAX) {
                let cell = cell_at(pl, pi, ol, oi);
                let Some(cert) = inherit_cell(s, lambda, &cell, lip, node.dual.as_ref()) else {
                    continue;
                };
                let child = if cert.bound() > node.eff {
                    Node {
                        eff: cert.bound(),
                        pl,
                        pi,
                        ol,
                        oi,
                        solved: false,
                        cert,
                        dual: None,
                    }
                } else {
                    Node {
                        eff: node.eff,
                        pl,
                        pi,
                        ol,
                        oi,
                        solved: false,
                        cert: node.cert,
                        dual: None,
                    }
                };
                heap.push(child);
            }
        }
    }
    None
}

fn validate_s_lambda<T: Real>(s: T, lambda: T) -> Result<()> {
    check_range("S", s.as_f64(), 2.0, tsirelson::<f64>() + 1e-6, "[2, 2√2]")?;
    check_range("lambda", lambda.as_f64(), 0.0, 1.0, "[0, 1]")
}

/// Minimum over the `b` polygon at a fixed `φ`.
pub fn min_over_b<T: Real>(phi: T, lambda: T, s: T, cfg: &NetConfig) -> Result<MinOverB<T>> {
    validate_s_lambda(s, lambda)?;
    check_range(
        "phi",
        phi.as_f64(),
        0.0,
        std::f64::consts::FRAC_PI_2 + 1e-6,
        "[0, π/2]",
    )?;
    cfg.validate()?;
    let (or, od) = cfg.omega_tree();
    let omega = Axis::new(T::zero(), T::frac_pi_2(), or, od);
    let phi_axis = Axis::new(phi, phi, 1, 0);
    let lip = cfg.lipschitz();
    branch_and_bound(
        s,
        lambda,
        phi_axis,
        1,
        omega,
        or,
        &lip,
        &SolverOptions::default(),
    )
    .map(|r| MinOverB {
        t_star: r.t_star,
        certificate: r.cert,
        solves: r.solves,
    })
    .ok_or(Error::Unattainable)
}

/// Certified `t*(S)` and `g(t*)` for basis weight `λ`.
///
/// `t*(S, λ) = t*(S, 1−λ)`: a π rotation of Alice's Bloch plane about the
/// `φ/2` axis swaps `A₀` and `A₁`, and a Hadamard on Bob maps `ω` to
/// `π/2 − ω`, leaving the CHSH operator invariant. The search therefore
/// always runs at `max(λ, 1−λ)`, where the objective slack is smaller; the
/// certificate refers to that weight.
pub fn qubit_bound_at<T: Real>(s: T, lambda: T, cfg: &NetConfig) -> Result<EntropyBoundPoint<T>> {
    validate_s_lambda(s, lambda)?;
    cfg.validate()?;
    let weight = lambda.max(T::one() - lambda);
    let (pr, pd) = cfg.phi_tree();
    let (or, od) = cfg.omega_tree();
    let phi = Axis::new(T::zero(), T::frac_pi_2(), pr, pd);
    let omega = Axis::new(T::zero(), T::frac_pi_2(), or, od);
    let lip = cfg.lipschitz();
    let r = branch_and_bound(
        s,
        weight,
        phi,
        pr,
        omega,
        or,
        &lip,
        &SolverOptions::default(),
    )
    .ok_or(Error::Unattainable)?;
    let t_star = r.t_star.min(T::one());
    Ok(EntropyBoundPoint {
        s,
        lambda,
        t_star,
        c_qubit: refined_pinsker_clamped(t_star),
        slack_used: r.cert.objective_slack + r.cert.constraint_slack(s),
        certificate: r.cert,
        solves: r.solves,
        max_gap: r.max_gap,
    })
}

/// Point with a given `c_qubit` and an empty certificate, for envelope tests.
#[cfg(test)]
pub(crate) fn synthetic_point(s: f64, lambda: f64, c: f64) -> EntropyBoundPoint<f64> {
    let certificate = CellCertificate {
        phi: 0.0,
        omega: 0.0,
        phi_halfwidth: 0.0,
        omega_halfwidth: 0.0,
        rhs: s,
        dual_value: 0.0,
        primal_value: Some(0.0),
        gap: Some(0.0),
        objective_slack: 0.0,
        status: SolveStatus::Optimal,
        inherited: false,
    };
    EntropyBoundPoint {
        s,
        lambda,
        t_star: 0.0,
        c_qubit: c,
        slack_used: 0.0,
        certificate,
        solves: 0,
        max_gap: 0.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bound::net::{random_state, LipschitzMode};
    use crate::entropy::{delta_trace_norm, PinchingSpec};
    use crate::quantum::{chsh_value, MeasurementFrame};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{FRAC_PI_2, SQRT_2};

    fn coarse() -> NetConfig {
        NetConfig::new(64, 33, 9, LipschitzMode::Certified).unwrap()
    }

    #[test]
    fn cell_relaxation_contains_every_member() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let lip = LipschitzConstants::CERTIFIED;
        let mut hits = 0;
        for _ in 0..4000 {
            let rho = random_state(&mut rng);
            let pc: f64 = rng.gen_range(0.05..1.5);
            let oc: f64 = rng.gen_range(0.05..1.5);
            let (pw, ow) = (rng.gen_range(0.0..0.05), rng.gen_range(0.0..0.05));
            let phi = pc + rng.gen_range(-pw..=pw);
            let omega = oc + rng.gen_range(-ow..=ow);
            let frame = MeasurementFrame::new(phi.min(FRAC_PI_2), omega).unwrap();
            let s = chsh_value(&rho, &frame);
            if s < 1.0 {
                continue;
            }
            hits += 1;
            let lambda: f64 = rng.gen();
            let two = 2.0f64;
            let chord = two * (pw / two).sin();
            let s1 = s - lip.l_f * (oc + ow).min(FRAC_PI_2).sin() * chord;
            let m2 = 4.0 * (1.0 + pc.sin());
            let rhs = s1 * ow.cos() - ow.sin() * (m2 - s1 * s1).max(0.0).sqrt();
            let centre = MeasurementFrame::new(pc, oc).unwrap();
            assert!(chsh_value(&rho, &centre) >= rhs - 1e-12);
            let obj = |p: f64| {
                lambda * delta_trace_norm(&rho, &PinchingSpec::new(0.0))
                    + (1.0 - lambda) * delta_trace_norm(&rho, &PinchingSpec::new(p))
            };
            assert!(obj(phi) >= obj(pc) - (1.0 - lambda) * chord - 1e-12);
        }
        assert!(hits > 100);
    }

    #[test]
    fn min_over_b_examples() {
        let cfg = coarse();
        let top = min_over_b(FRAC_PI_2, 0.5, 2.0 * SQRT_2, &cfg).unwrap();
        assert!(
            top.t_star > 0.95 && top.t_star <= 1.0 + 1e-9,
            "{}",
            top.t_star
        );
        let flat = min_over_b(0.0f64, 0.5, 2.0, &cfg).unwrap();
        assert!(flat.t_star.abs() < 1e-7, "{}", flat.t_star);
        assert_eq!(min_over_b(0.0, 0.5, 2.5, &cfg), Err(Error::Unattainable));
    }

    #[test]
    fn endpoints() {
        let cfg = coarse();
        for lambda in [0.0, 0.5, 1.0] {
            let p = qubit_bound_at(2.0, lambda, &cfg).unwrap();
            assert!(p.c_qubit < 1e-6);
        }
        let p = qubit_bound_at(2.0 * SQRT_2, 0.5, &cfg).unwrap();
        assert!(p.c_qubit > 0.85, "{p:?}");
    }

    #[test]
    fn refinement_never_lowers_bound() {
        let cfg = coarse();
        for &s in &[2.3, 2.6] {
            let a = qubit_bound_at(s, 0.5, &cfg).unwrap();
            let b = qubit_bound_at(s, 0.5, &cfg.doubled()).unwrap();
            assert!(
                b.t_star >= a.t_star - 1e-12,
                "{s}: {} -> {}",
                a.t_star,
                b.t_star
            );
        }
    }
}

//! The inner trace-norm program
//!
//! ```text
//!   inf_ρ  λ‖ρ − T₀[ρ]‖₁ + (1−λ)‖ρ − T_φ[ρ]‖₁   s.t.  ⟨F₀ + b_x F_x + b_z F_z⟩_ρ  (=, ≥) S
//! ```
//!
//! Every operator involved is real and commutes with `σ_y ⊗ σ_y`, so the
//! program is solved over real states that are block diagonal in the Bell
//! basis `{Φ⁻, Ψ⁺ | Φ⁺, Ψ⁻}`: two 2×2 blocks per matrix variable. Averaging
//! an optimal complex state over complex conjugation and over that symmetry
//! keeps it feasible and does not increase the convex objective, so the
//! reduction is exact.
//!
//! Each trace norm uses the epigraph `‖X‖₁ = min tr(P + N)`, `X = P − N`,
//! `P, N ⪰ 0`. The lower bound returned is not the solver's dual objective
//! but a certificate recomputed from scratch on the full 4×4 space:
//! for any `W₀, W₁` with `‖W_k‖∞ ≤ w_k` and any admissible multipliers,
//!
//! ```text
//!   Σ_k w_k δ_k(ρ) ≥ λ_min(Σ_k X_k(W_k) − μF) + (multiplier terms)
//! ```
//!
//! which holds for every feasible `ρ` (weak duality).

use nalgebra::{DMatrix, Matrix2, Matrix4, SymmetricEigen};

use crate::entropy::{delta_trace_norm, PinchingSpec};
use crate::error::{Error, Result};
use crate::quantum::{cx, pauli_x, pauli_z, DensityMatrix, HermitianOp4, Observable};
use crate::scalar::{tsirelson, Real};
use crate::sdp::solver::{BlockSdp, SolveStatus, SolverOptions};

/// `F₀ + b_x F_x(φ) + b_z F_z(φ)` reproduces the CHSH operator at
/// `b = (cos ω, sin ω)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChshDecomposition<T: Real> {
    pub f0: HermitianOp4<T>,
    pub fx: HermitianOp4<T>,
    pub fz: HermitianOp4<T>,
    pub phi: T,
}

impl<T: Real> ChshDecomposition<T> {
    /// `b = (b_z, b_x)`.
    pub fn operator(&self, b: (T, T)) -> HermitianOp4<T> {
        self.f0
            .plus(&self.fx.scaled(b.1))
            .plus(&self.fz.scaled(b.0))
    }
}

/// `F₀ = 0`, `F_z = −2 A₀⊗σ_z`, `F_x = −2 A₁(φ)⊗σ_x`.
pub fn build_chsh_decomposition<T: Real>(phi: T) -> ChshDecomposition<T> {
    let a0 = *Observable::from_angle(T::zero()).matrix();
    let a1 = *Observable::from_angle(phi).matrix();
    let m2 = T::lit(-2.0);
    ChshDecomposition {
        f0: HermitianOp4::zero(),
        fx: HermitianOp4::product(&(a1 * cx(m2)), &pauli_x()),
        fz: HermitianOp4::product(&(a0 * cx(m2)), &pauli_z()),
        phi,
    }
}

/// How the CHSH expectation is constrained.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
#[serde(rename_all = "camelCase")]
pub enum ChshConstraint<T: Real> {
    /// `|⟨F⟩ − target| ≤ slack`; `slack = 0` is an equality.
    Band { target: T, slack: T },
    /// `⟨F⟩ ≥ bound`.
    AtLeast(T),
}

#[derive(Clone, Copy, Debug)]
pub struct WeightedDeltaProblem<T: Real> {
    pub phi: T,
    /// `(b_z, b_x)` on the unit circle.
    pub b: (T, T),
    pub lambda: T,
    pub constraint: ChshConstraint<T>,
}

/// Dual data from which the lower bound is recomputed.
#[derive(Clone, Debug)]
pub struct DualCertificate<T: Real> {
    pub w0: Matrix4<T>,
    pub w1: Matrix4<T>,
    /// Multiplier of the lower side of the constraint (≥ 0).
    pub mu_lower: T,
    /// Multiplier of the upper side (≤ 0); equality constraints use `mu_lower` alone.
    pub mu_upper: T,
}

#[derive(Clone, Debug)]
pub struct SdpSolution<T: Real> {
    /// Weighted δ of the returned state.
    pub primal_value: T,
    /// Certified lower bound on the infimum.
    pub dual_value: T,
    pub gap: T,
    pub status: SolveStatus,
    pub rho: Option<DensityMatrix<T>>,
    pub certificate: Option<DualCertificate<T>>,
    pub iterations: usize,
}

/// Columns `Φ⁻, Ψ⁺, Φ⁺, Ψ⁻`; the first two span the +1 eigenspace of `σ_y⊗σ_y`.
fn bell_basis<T: Real>() -> Matrix4<T> {
    let h = T::lit(0.5).sqrt();
    let z = T::zero();
    #[rustfmt::skip]
    let v = Matrix4::new(
        h, z, h, z,
        z, h, z, h,
        z, h, z, -h,
        -h, z, h, z,
    );
    v
}

fn real_projector<T: Real>(phi: T) -> Matrix4<T> {
    PinchingSpec::new(phi).projector().map(|z| z.re)
}

/// `X_φ(M) = M − T_φ[M] = QM + MQ − 2QMQ`; self-adjoint as a map.
fn disturbance<T: Real>(q: &Matrix4<T>, m: &Matrix4<T>) -> Matrix4<T> {
    q * m + m * q - q * m * q * T::lit(2.0)
}

fn sym_eigen_min<T: Real>(m: &Matrix4<T>) -> T {
    let h = (m + m.transpose()) * T::lit(0.5);
    SymmetricEigen::new(h)
        .eigenvalues
        .iter()
        .fold(T::lit(f64::INFINITY), |a, &b| a.min(b))
}

fn sym_eigen_max<T: Real>(m: &Matrix4<T>) -> T {
    -sym_eigen_min(&(-m))
}

/// Spectral clip of `w` into `[−bound, bound]`.
fn clip_spectrum<T: Real>(w: &Matrix4<T>, bound: T) -> Matrix4<T> {
    let h = (w + w.transpose()) * T::lit(0.5);
    let eig = SymmetricEigen::new(h);
    let d = eig.eigenvalues.map(|e| e.max(-bound).min(bound));
    eig.eigenvectors * Matrix4::from_diagonal(&d) * eig.eigenvectors.transpose()
}

fn to_dmat<T: Real>(m: &Matrix2<T>) -> DMatrix<T> {
    DMatrix::from_iterator(2, 2, m.iter().copied())
}

fn blocks<T: Real>(v: &Matrix4<T>, m: &Matrix4<T>) -> (Matrix2<T>, Matrix2<T>) {
    let t = v.transpose() * m * v;
    (
        t.fixed_view::<2, 2>(0, 0).into_owned(),
        t.fixed_view::<2, 2>(2, 2).into_owned(),
    )
}

fn lift<T: Real>(v: &Matrix4<T>, a: &Matrix2<T>, b: &Matrix2<T>) -> Matrix4<T> {
    let mut t = Matrix4::zeros();
    t.fixed_view_mut::<2, 2>(0, 0).copy_from(a);
    t.fixed_view_mut::<2, 2>(2, 2).copy_from(b);
    v * t * v.transpose()
}

fn sym_basis<T: Real>() -> [Matrix2<T>; 3] {
    let o = T::one();
    let z = T::zero();
    [
        Matrix2::new(o, z, z, z),
        Matrix2::new(z, z, z, o),
        Matrix2::new(z, o, o, z),
    ]
}

impl<T: Real> WeightedDeltaProblem<T> {
    pub fn new(phi: T, b: (T, T), lambda: T, constraint: ChshConstraint<T>) -> Self {
        Self {
            phi,
            b,
            lambda,
            constraint,
        }
    }

    fn terms(&self) -> Vec<(T, Matrix4<T>, T)> {
        let mut t = Vec::with_capacity(2);
        if self.lambda > T::zero() {
            t.push((self.lambda, real_projector(T::zero()), T::zero()));
        }
        if self.lambda < T::one() {
            t.push((T::one() - self.lambda, real_projector(self.phi), self.phi));
        }
        t
    }

    /// Real 4×4 constraint operator `F₀ + F·b`.
    pub fn constraint_operator(&self) -> Matrix4<T> {
        build_chsh_decomposition(self.phi)
            .operator(self.b)
            .real_part()
    }

    /// `λδ(ρ, 0) + (1−λ)δ(ρ, φ)`.
    pub fn objective(&self, rho: &DensityMatrix<T>) -> T {
        let d0 = delta_trace_norm(rho, &PinchingSpec::new(T::zero()));
        let d1 = delta_trace_norm(rho, &PinchingSpec::new(self.phi));
        self.lambda * d0 + (T::one() - self.lambda) * d1
    }

    pub fn is_feasible(&self, rho: &DensityMatrix<T>, tol: T) -> bool {
        let f = self.constraint_operator();
        let v = (rho.matrix().map(|z| z.re) * f).trace();
        match self.constraint {
            ChshConstraint::Band { target, slack } => (v - target).abs() <= slack + tol,
            ChshConstraint::AtLeast(bound) => v >= bound - tol,
        }
    }

    /// Interval `[lo, hi]` of admissible expectations.
    fn admissible(&self) -> (T, T) {
        match self.constraint {
            ChshConstraint::Band { target, slack } => (target - slack, target + slack),
            ChshConstraint::AtLeast(bound) => (bound, T::lit(f64::INFINITY)),
        }
    }

    /// Lower bound implied by a dual certificate, valid for every feasible
    /// (complex) state regardless of how the certificate was obtained.
    pub fn certify(&self, cert: &DualCertificate<T>) -> T {
        let f = self.constraint_operator();
        let terms = self.terms();
        let mut k = Matrix4::<T>::zeros();
        for (idx, (w, q, _)) in terms.iter().enumerate() {
            let wk = if idx == 0 && self.lambda > T::zero() {
                &cert.w0
            } else {
                &cert.w1
            };
            k += disturbance(q, &clip_spectrum(wk, *w));
        }
        let (lo, hi) = self.admissible();
        let (mu_lo, mu_hi, offset) = match self.constraint {
            ChshConstraint::Band { slack, .. } if slack == T::zero() => {
                (cert.mu_lower, T::zero(), cert.mu_lower * lo)
            }
            _ => {
                let a = cert.mu_lower.max(T::zero());
                let b = if hi.is_finite() {
                    cert.mu_upper.min(T::zero())
                } else {
                    T::zero()
                };
                let off = a * lo + if b != T::zero() { b * hi } else { T::zero() };
                (a, b, off)
            }
        };
        k -= f * (mu_lo + mu_hi);
        let lmin = sym_eigen_min(&k);
        let norm = k.norm() + offset.abs();
        let safety = T::default_epsilon() * T::lit(64.0) * (T::one() + norm);
        lmin + offset - safety
    }

    /// No state reaches the admissible interval.
    pub fn certainly_infeasible(&self) -> bool {
        let f = self.constraint_operator();
        let (lo, hi) = self.admissible();
        let fmax = sym_eigen_max(&f);
        let fmin = sym_eigen_min(&f);
        let tiny = T::default_epsilon() * T::lit(64.0) * (T::one() + fmax.abs());
        fmax < lo - tiny || fmin > hi + tiny
    }

    pub fn solve(&self, opts: &SolverOptions<T>) -> SdpSolution<T> {
        let f = self.constraint_operator();
        let (lo, hi) = self.admissible();
        if self.certainly_infeasible() {
            return SdpSolution {
                primal_value: T::lit(f64::INFINITY),
                dual_value: T::lit(f64::INFINITY),
                gap: T::zero(),
                status: SolveStatus::Infeasible,
                rho: None,
                certificate: None,
                iterations: 0,
            };
        }

        let v = bell_basis::<T>();
        let terms = self.terms();
        let basis = sym_basis::<T>();
        let (fa, fb) = blocks(&v, &f);

        // Block layout: ρ_a, ρ_b, then (P_a, P_b, N_a, N_b) per term, then slacks.
        let n_terms = terms.len();
        let mut dims = vec![2usize, 2];
        dims.extend(std::iter::repeat(2).take(4 * n_terms));
        let slack_base = dims.len();
        let (n_slack, equality) = match self.constraint {
            ChshConstraint::Band { slack, .. } if slack == T::zero() => (0, true),
            ChshConstraint::Band { .. } => (2, false),
            ChshConstraint::AtLeast(_) => (1, false),
        };
        dims.extend(std::iter::repeat(1).take(n_slack));
        let mut sdp = BlockSdp::new(dims);

        let id2 = DMatrix::<T>::identity(2, 2);
        let one = DMatrix::from_element(1, 1, T::one());
        sdp.add_constraint(vec![(0, id2.clone()), (1, id2.clone())], T::one());
        let fa_d = to_dmat(&fa);
        let fb_d = to_dmat(&fb);
        match self.constraint {
            ChshConstraint::Band { target, .. } if equality => {
                sdp.add_constraint(vec![(0, fa_d.clone()), (1, fb_d.clone())], target);
            }
            ChshConstraint::Band { .. } => {
                sdp.add_constraint(
                    vec![
                        (0, fa_d.clone()),
                        (1, fb_d.clone()),
                        (slack_base, -one.clone()),
                    ],
                    lo,
                );
                sdp.add_constraint(
                    vec![(0, fa_d), (1, fb_d), (slack_base + 1, one.clone())],
                    hi,
                );
            }
            ChshConstraint::AtLeast(bound) => {
                sdp.add_constraint(
                    vec![(0, fa_d), (1, fb_d), (slack_base, -one.clone())],
                    bound,
                );
            }
        }
        let first_w_row = sdp.constraints.len();
        for (t, (w, q, _)) in terms.iter().enumerate() {
            let base = 2 + 4 * t;
            sdp.set_cost(base, id2.clone() * *w);
            sdp.set_cost(base + 1, id2.clone() * *w);
            sdp.set_cost(base + 2, id2.clone() * *w);
            sdp.set_cost(base + 3, id2.clone() * *w);
            for blk in 0..2 {
                for e in &basis {
                    let embedded = if blk == 0 {
                        lift(&v, e, &Matrix2::zeros())
                    } else {
                        lift(&v, &Matrix2::zeros(), e)
                    };
                    let (ga, gb) = blocks(&v, &disturbance(q, &embedded));
                    let ed = to_dmat(e);
                    sdp.add_constraint(
                        vec![
                            (0, -to_dmat(&ga)),
                            (1, -to_dmat(&gb)),
                            (base + blk, ed.clone()),
                            (base + 2 + blk, -ed),
                        ],
                        T::zero(),
                    );
                }
            }
        }

        let out = sdp.solve(opts);

        // Recover the state.
        let ra = Matrix2::from_iterator(out.x[0].iter().copied());
        let rb = Matrix2::from_iterator(out.x[1].iter().copied());
        let rho_real = lift(&v, &ra, &rb);
        let rho = project_to_state(&rho_real);

        // Rebuild W_k in the computational basis from the multipliers.
        let mut ws = Vec::with_capacity(n_terms);
        for t in 0..n_terms {
            let mut wb = [Matrix2::<T>::zeros(), Matrix2::<T>::zeros()];
            for (blk, w) in wb.iter_mut().enumerate() {
                for (j, e) in basis.iter().enumerate() {
                    *w += e * out.y[first_w_row + 6 * t + 3 * blk + j];
                }
            }
            ws.push(lift(&v, &wb[0], &wb[1]));
        }
        let (w0, w1) = match (self.lambda > T::zero(), ws.len()) {
            (true, 2) => (ws[0], ws[1]),
            (true, _) => (ws[0], Matrix4::zeros()),
            (false, _) => (Matrix4::zeros(), ws[0]),
        };
        let certificate = DualCertificate {
            w0,
            w1,
            mu_lower: out.y[1],
            mu_upper: if n_slack == 2 { out.y[2] } else { T::zero() },
        };
        let dual_value = self.certify(&certificate).max(T::zero());
        let primal_value = rho
            .as_ref()
            .map_or(T::lit(f64::INFINITY), |r| self.objective(r));
        let gap = primal_value - dual_value;
        let status = if out.status == SolveStatus::Optimal && gap <= T::lit(1e-6) {
            SolveStatus::Optimal
        } else {
            SolveStatus::NumericalLimit
        };
        SdpSolution {
            primal_value,
            dual_value,
            gap,
            status,
            rho,
            certificate: Some(certificate),
            iterations: out.iterations,
        }
    }
}

/// Nearest density matrix by eigenvalue clamping and renormalisation.
fn project_to_state<T: Real>(m: &Matrix4<T>) -> Option<DensityMatrix<T>> {
    let h = (m + m.transpose()) * T::lit(0.5);
    let eig = SymmetricEigen::new(h);
    let d = eig.eigenvalues.map(|e| e.max(T::zero()));
    let tr = d.sum();
    if tr <= T::zero() {
        return None;
    }
    let r = eig.eigenvectors * Matrix4::from_diagonal(&(d / tr)) * eig.eigenvectors.transpose();
    DensityMatrix::new(r.map(cx)).ok()
}

/// Solve the inner program at `|⟨F₀ + F·b⟩ − S| ≤ slack`.
pub fn solve_weighted_delta_sdp<T: Real>(
    phi: T,
    b: (T, T),
    lambda: T,
    s: T,
    slack: T,
    tol: T,
) -> Result<SdpSolution<T>> {
    let norm = (b.0 * b.0 + b.1 * b.1).sqrt();
    if (norm - T::one()).abs() > T::lit(1e-12).max(T::default_epsilon() * T::lit(16.0)) {
        return Err(Error::Invalid(format!(
            "b must be a unit vector, |b| = {norm}"
        )));
    }
    if lambda < T::zero() || lambda > T::one() {
        return Err(Error::OutOfRange {
            name: "lambda",
            value: lambda.as_f64(),
            range: "[0, 1]",
        });
    }
    let t = tsirelson::<T>();
    if s < T::lit(2.0) || s > t + T::lit(1e-12) {
        return Err(Error::OutOfRange {
            name: "S",
            value: s.as_f64(),
            range: "[2, 2√2]",
        });
    }
    if slack < T::zero() {
        return Err(Error::OutOfRange {
            name: "slack",
            value: slack.as_f64(),
            range: "[0, ∞)",
        });
    }
    let problem =
        WeightedDeltaProblem::new(phi, b, lambda, ChshConstraint::Band { target: s, slack });
    Ok(problem.solve(&SolverOptions {
        tol,
        ..SolverOptions::default()
    }))
}

//! Two-qubit states, planar observables and the CHSH machinery.
//!
//! Tensor order is Alice ⊗ Bob and the computational basis index of
//! `|ab⟩` is `2a + b`. All measurements live in the x–z plane of the Bloch
//! sphere, so every observable is `cos θ·σ_z + sin θ·σ_x` for some angle θ.
//!
//! Bob's CHSH settings sit symmetrically at `B₂ = B(−ω)`, `B₃ = B(+ω)`, which
//! turns the CHSH operator into
//! `(A₁−A₀)⊗B₂ − (A₁+A₀)⊗B₃ = −2 sin ω·A₁⊗σ_x − 2 cos ω·A₀⊗σ_z`.

use nalgebra::{Complex, Matrix2, Matrix4, SymmetricEigen, Vector2, Vector4};

use crate::error::{check_range, Error, Result};
use crate::scalar::{tsirelson, Real};

pub type Mat2<T> = Matrix2<Complex<T>>;
pub type Mat4<T> = Matrix4<Complex<T>>;

#[inline]
pub(crate) fn cx<T: Real>(re: T) -> Complex<T> {
    Complex::new(re, T::zero())
}

pub fn pauli_z<T: Real>() -> Mat2<T> {
    Matrix2::new(cx(T::one()), cx(T::zero()), cx(T::zero()), cx(-T::one()))
}

pub fn pauli_x<T: Real>() -> Mat2<T> {
    Matrix2::new(cx(T::zero()), cx(T::one()), cx(T::one()), cx(T::zero()))
}

pub fn kron<T: Real>(a: &Mat2<T>, b: &Mat2<T>) -> Mat4<T> {
    let mut out = Mat4::<T>::zeros();
    for i in 0..2 {
        for j in 0..2 {
            for k in 0..2 {
                for l in 0..2 {
                    out[(2 * i + k, 2 * j + l)] = a[(i, j)] * b[(k, l)];
                }
            }
        }
    }
    out
}

/// Largest absolute deviation of `m` from its adjoint.
pub(crate) fn hermitian_defect<T: Real>(m: &Mat4<T>) -> T {
    let d = m - m.adjoint();
    d.iter()
        .fold(T::zero(), |acc, z| acc.max(nalgebra::ComplexField::abs(*z)))
}

/// Ascending real eigenvalues of a Hermitian 4×4 matrix.
pub(crate) fn hermitian_eigenvalues<T: Real>(m: &Mat4<T>) -> [T; 4] {
    let eig = SymmetricEigen::new(*m);
    let mut ev = [T::zero(); 4];
    for (dst, src) in ev.iter_mut().zip(eig.eigenvalues.iter()) {
        *dst = *src;
    }
    ev.sort_by(|a, b| a.partial_cmp(b).expect("finite eigenvalues"));
    ev
}

/// A ±1-valued qubit observable `cos θ·σ_z + sin θ·σ_x`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Observable<T: Real> {
    angle: T,
    matrix: Mat2<T>,
}

impl<T: Real> Observable<T> {
    pub fn from_angle(theta: T) -> Self {
        let m = pauli_z::<T>() * cx(theta.cos()) + pauli_x::<T>() * cx(theta.sin());
        Self {
            angle: theta,
            matrix: m,
        }
    }

    pub fn angle(&self) -> T {
        self.angle
    }

    pub fn matrix(&self) -> &Mat2<T> {
        &self.matrix
    }

    /// Projector onto the outcome `k ∈ {0, 1}`; outcome 0 is eigenvalue +1.
    pub fn projector(&self, k: u8) -> Mat2<T> {
        let sign = if k == 0 { T::one() } else { -T::one() };
        (Mat2::<T>::identity() + self.matrix * cx(sign)) * cx(T::lit(0.5))
    }
}

/// 2×2 observable `cos θ·σ_z + sin θ·σ_x`.
pub fn observable_from_angle<T: Real>(theta: T) -> Observable<T> {
    Observable::from_angle(theta)
}

/// Self-adjoint operator on the two-qubit space.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HermitianOp4<T: Real>(Mat4<T>);

impl<T: Real> HermitianOp4<T> {
    pub fn new(m: Mat4<T>) -> Result<Self> {
        let defect = hermitian_defect(&m);
        if defect > T::hermitian_tol() {
            return Err(Error::NotHermitian(defect.as_f64()));
        }
        Ok(Self((m + m.adjoint()) * cx(T::lit(0.5))))
    }

    /// `a ⊗ b` for two Hermitian factors; Hermitian by construction.
    pub fn product(a: &Mat2<T>, b: &Mat2<T>) -> Self {
        Self(kron(a, b))
    }

    pub fn zero() -> Self {
        Self(Mat4::zeros())
    }

    pub fn matrix(&self) -> &Mat4<T> {
        &self.0
    }

    pub fn scaled(&self, s: T) -> Self {
        Self(self.0 * cx(s))
    }

    pub fn plus(&self, other: &Self) -> Self {
        Self(self.0 + other.0)
    }

    pub fn expectation(&self, rho: &DensityMatrix<T>) -> T {
        (rho.matrix() * self.0).trace().re
    }

    pub fn eigenvalues(&self) -> [T; 4] {
        hermitian_eigenvalues(&self.0)
    }

    pub fn operator_norm(&self) -> T {
        let ev = self.eigenvalues();
        ev[0].abs().max(ev[3].abs())
    }

    /// Entry-wise real part; exact when all data lives in the x–z plane.
    pub fn real_part(&self) -> Matrix4<T> {
        self.0.map(|z| z.re)
    }
}

/// A two-qubit density matrix: Hermitian, unit trace, positive semidefinite.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DensityMatrix<T: Real>(Mat4<T>);

impl<T: Real> DensityMatrix<T> {
    pub fn new(m: Mat4<T>) -> Result<Self> {
        let defect = hermitian_defect(&m);
        if defect > T::hermitian_tol() {
            return Err(Error::NotHermitian(defect.as_f64()));
        }
        let m = (m + m.adjoint()) * cx(T::lit(0.5));
        let tr = m.trace().re;
        if (tr - T::one()).abs() > T::trace_tol() {
            return Err(Error::NotUnitTrace(tr.as_f64()));
        }
        let min_ev = hermitian_eigenvalues(&m)[0];
        if min_ev < -T::psd_tol() {
            return Err(Error::NotPositive(min_ev.as_f64()));
        }
        Ok(Self(m))
    }

    /// Accepts any Hermitian PSD matrix with positive trace and normalises it.
    pub fn normalized(m: Mat4<T>) -> Result<Self> {
        let tr = m.trace().re;
        if tr <= T::zero() {
            return Err(Error::NotUnitTrace(tr.as_f64()));
        }
        Self::new(m * cx(T::one() / tr))
    }

    pub fn from_pure(psi: &Vector4<Complex<T>>) -> Result<Self> {
        let n = psi.norm();
        if n <= T::zero() {
            return Err(Error::Invalid("zero state vector".into()));
        }
        let psi = psi.unscale(n);
        Self::new(psi * psi.adjoint())
    }

    pub fn product_pure(a: &Vector2<Complex<T>>, b: &Vector2<Complex<T>>) -> Result<Self> {
        let psi = Vector4::new(a[0] * b[0], a[0] * b[1], a[1] * b[0], a[1] * b[1]);
        Self::from_pure(&psi)
    }

    /// `|ψ⁻⟩ = (|01⟩ − |10⟩)/√2`.
    pub fn singlet() -> Self {
        let h = T::lit(0.5).sqrt();
        let psi = Vector4::new(cx(T::zero()), cx(h), cx(-h), cx(T::zero()));
        Self::from_pure(&psi).expect("singlet is a valid state")
    }

    pub fn maximally_mixed() -> Self {
        Self(Mat4::identity() * cx(T::lit(0.25)))
    }

    pub fn matrix(&self) -> &Mat4<T> {
        &self.0
    }

    /// Ascending eigenvalues, clamped at zero.
    pub fn eigenvalues(&self) -> [T; 4] {
        let mut ev = hermitian_eigenvalues(&self.0);
        for e in ev.iter_mut() {
            if *e < T::zero() {
                *e = T::zero();
            }
        }
        ev
    }

    /// `w·self + (1−w)·other` for `w ∈ [0, 1]`.
    pub fn mix(&self, other: &Self, w: T) -> Self {
        Self(self.0 * cx(w) + other.0 * cx(T::one() - w))
    }

    /// Conjugation by a unitary; no validation beyond the caller's unitary.
    pub fn conjugate_by(&self, u: &Mat4<T>) -> Self {
        let m = u * self.0 * u.adjoint();
        Self((m + m.adjoint()) * cx(T::lit(0.5)))
    }

    pub(crate) fn from_matrix_unchecked(m: Mat4<T>) -> Self {
        Self(m)
    }
}

/// `v·|ψ⁻⟩⟨ψ⁻| + (1−v)·I/4`.
pub fn werner_state<T: Real>(v: T) -> Result<DensityMatrix<T>> {
    check_range("v", v.as_f64(), 0.0, 1.0, "[0, 1]")?;
    Ok(DensityMatrix::singlet().mix(&DensityMatrix::maximally_mixed(), v))
}

/// Alice's relative angle φ, Bob's CHSH half-angle ω and Bob's key angles.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeasurementFrame<T: Real> {
    pub phi: T,
    pub omega: T,
    pub bob_key_angles: (T, T),
}

impl<T: Real> MeasurementFrame<T> {
    /// Frame with Bob's key settings anti-aligned to Alice's, which gives
    /// zero QBER on the singlet.
    pub fn new(phi: T, omega: T) -> Result<Self> {
        let pi = T::pi();
        Self::with_bob_key_angles(phi, omega, (pi, phi + pi))
    }

    pub fn with_bob_key_angles(phi: T, omega: T, bob_key_angles: (T, T)) -> Result<Self> {
        check_range(
            "phi",
            phi.as_f64(),
            0.0,
            std::f64::consts::FRAC_PI_2 + 1e-6,
            "[0, π/2]",
        )?;
        for (name, x) in [
            ("omega", omega),
            ("B0 angle", bob_key_angles.0),
            ("B1 angle", bob_key_angles.1),
        ] {
            if !x.as_f64().is_finite() {
                return Err(Error::OutOfRange {
                    name,
                    value: x.as_f64(),
                    range: "finite",
                });
            }
        }
        Ok(Self {
            phi,
            omega,
            bob_key_angles,
        })
    }

    /// A₀=σ_z, A₁=σ_x, B₀=−σ_z, B₁=−σ_x, B₂/B₃ at ∓π/4.
    pub fn simulation_default() -> Self {
        Self::new(T::frac_pi_2(), T::frac_pi_4()).expect("valid default frame")
    }

    pub fn alice(&self, x: u8) -> Observable<T> {
        match x {
            0 => Observable::from_angle(T::zero()),
            _ => Observable::from_angle(self.phi),
        }
    }

    pub fn bob(&self, y: u8) -> Observable<T> {
        match y {
            0 => Observable::from_angle(self.bob_key_angles.0),
            1 => Observable::from_angle(self.bob_key_angles.1),
            2 => Observable::from_angle(-self.omega),
            _ => Observable::from_angle(self.omega),
        }
    }
}

/// `(A₁−A₀)⊗B₂ − (A₁+A₀)⊗B₃`.
pub fn chsh_operator<T: Real>(frame: &MeasurementFrame<T>) -> HermitianOp4<T> {
    let a0 = *frame.alice(0).matrix();
    let a1 = *frame.alice(1).matrix();
    let b2 = *frame.bob(2).matrix();
    let b3 = *frame.bob(3).matrix();
    HermitianOp4(kron(&(a1 - a0), &b2) - kron(&(a1 + a0), &b3))
}

/// Raw CHSH expectation `tr[ρ·W]`, without the protocol's floor at 2.
pub fn chsh_value<T: Real>(rho: &DensityMatrix<T>, frame: &MeasurementFrame<T>) -> T {
    chsh_operator(frame).expectation(rho)
}

/// `tr[ρ·(A⊗B)]`.
pub fn correlation<T: Real>(rho: &DensityMatrix<T>, a: &Observable<T>, b: &Observable<T>) -> T {
    HermitianOp4::product(a.matrix(), b.matrix()).expectation(rho)
}

/// Probability that the outcomes of `a` and `b` disagree.
pub fn qber<T: Real>(rho: &DensityMatrix<T>, a: &Observable<T>, b: &Observable<T>) -> T {
    (T::one() - correlation(rho, a, b)) * T::lit(0.5)
}

/// QBER of the depolarising model, `½(1 − S/(2√2))`.
pub fn depolarizing_qber<T: Real>(s: T) -> Result<T> {
    let t = tsirelson::<T>();
    check_range("S", s.as_f64(), 0.0, tsirelson::<f64>() + 1e-6, "[0, 2√2]")?;
    Ok((T::lit(0.5) * (T::one() - s / t)).max(T::zero()))
}

/// Observed channel statistics: CHSH value and the two key-basis QBERs.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub struct ChannelPoint<T: Real> {
    pub s: T,
    pub q00: T,
    pub q11: T,
}

impl<T: Real> ChannelPoint<T> {
    pub fn new(s: T, q00: T, q11: T) -> Result<Self> {
        check_range("S", s.as_f64(), 2.0, tsirelson::<f64>() + 1e-6, "[2, 2√2]")?;
        check_range("q00", q00.as_f64(), 0.0, 0.5, "[0, ½]")?;
        check_range("q11", q11.as_f64(), 0.0, 0.5, "[0, ½]")?;
        Ok(Self { s, q00, q11 })
    }

    /// Both QBERs from the depolarising model.
    pub fn depolarizing(s: T) -> Result<Self> {
        let q = depolarizing_qber(s)?;
        Self::new(s, q, q)
    }
}

//! Entropies, pinching channels and the refined Pinsker conversion.
//!
//! All entropies are in bits. Eve holds a purification of `ρ_AB`, so the
//! conditional entropy of Alice's outcome given Eve equals the entropy
//! production `H(T[ρ]) − H(ρ)` of the pinching `T` that models Alice's
//! projective measurement.

use nalgebra::{Complex, SymmetricEigen};

use crate::error::{check_range, Result};
use crate::quantum::{cx, kron, DensityMatrix, Mat2, Mat4, Observable};
use crate::scalar::Real;

/// `−x log₂ x`, with the `0·log 0 = 0` convention.
#[inline]
fn xlogx_bits<T: Real>(x: T) -> T {
    if x <= T::eig_floor() {
        T::zero()
    } else {
        -x * x.log2()
    }
}

/// Binary entropy, clamping the argument into `[0, 1]`.
pub(crate) fn h2<T: Real>(x: T) -> T {
    let x = x.max(T::zero()).min(T::one());
    xlogx_bits(x) + xlogx_bits(T::one() - x)
}

/// `h(x) = −x log₂ x − (1−x) log₂(1−x)`.
pub fn binary_entropy<T: Real>(x: T) -> Result<T> {
    check_range("x", x.as_f64(), 0.0, 1.0, "[0, 1]")?;
    Ok(h2(x))
}

pub fn von_neumann_entropy<T: Real>(rho: &DensityMatrix<T>) -> T {
    rho.eigenvalues()
        .iter()
        .fold(T::zero(), |acc, &l| acc + xlogx_bits(l))
}

/// Pinching defined by Alice's projector `Q(φ) = ((I + cos φ σ_z + sin φ σ_x)/2) ⊗ I`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PinchingSpec<T: Real> {
    pub phi: T,
}

impl<T: Real> PinchingSpec<T> {
    pub fn new(phi: T) -> Self {
        Self { phi }
    }

    pub fn projector(&self) -> Mat4<T> {
        let p = Observable::from_angle(self.phi).projector(0);
        kron(&p, &Mat2::<T>::identity())
    }

    /// `T[m] = QmQ + (I−Q)m(I−Q)` on an arbitrary matrix.
    pub fn apply(&self, m: &Mat4<T>) -> Mat4<T> {
        let q = self.projector();
        let qc = Mat4::<T>::identity() - q;
        q * m * q + qc * m * qc
    }
}

pub fn pinching<T: Real>(rho: &DensityMatrix<T>, spec: &PinchingSpec<T>) -> DensityMatrix<T> {
    let m = spec.apply(rho.matrix());
    DensityMatrix::from_matrix_unchecked((m + m.adjoint()) * cx(T::lit(0.5)))
}

/// Trace norm of a Hermitian 4×4 matrix.
pub fn trace_norm<T: Real>(m: &Mat4<T>) -> T {
    let h = (m + m.adjoint()) * cx(T::lit(0.5));
    let eig = SymmetricEigen::new(h);
    eig.eigenvalues
        .iter()
        .fold(T::zero(), |acc, e| acc + e.abs())
}

/// `δ(ρ, φ) = ‖{ρ, Q(φ)} − 2Q(φ)ρQ(φ)‖₁`.
pub fn delta_trace_norm<T: Real>(rho: &DensityMatrix<T>, spec: &PinchingSpec<T>) -> T {
    let q = spec.projector();
    let r = rho.matrix();
    let m = r * q + q * r - q * r * q * cx(T::lit(2.0));
    trace_norm(&m)
}

/// `‖ρ − T[ρ]‖₁`, the same quantity as [`delta_trace_norm`] evaluated directly.
pub fn delta_direct<T: Real>(rho: &DensityMatrix<T>, spec: &PinchingSpec<T>) -> T {
    trace_norm(&(rho.matrix() - spec.apply(rho.matrix())))
}

/// `g(δ) = 1 − h(½ − δ/2)`: the refined Pinsker lower bound on
/// `D(ρ‖T[ρ])` in bits.
pub fn refined_pinsker<T: Real>(delta: T) -> Result<T> {
    check_range("delta", delta.as_f64(), 0.0, 1.0, "[0, 1]")?;
    Ok(refined_pinsker_clamped(delta))
}

pub(crate) fn refined_pinsker_clamped<T: Real>(delta: T) -> T {
    let d = delta.max(T::zero()).min(T::one());
    T::one() - h2(T::lit(0.5) - d * T::lit(0.5))
}

/// `D(ρ‖σ) = tr ρ(log₂ρ − log₂σ)`; `+∞` when `supp ρ ⊄ supp σ`.
pub fn relative_entropy<T: Real>(rho: &DensityMatrix<T>, sigma: &DensityMatrix<T>) -> T {
    let eig = SymmetricEigen::new(*sigma.matrix());
    let r = rho.matrix();
    let mut cross = T::zero();
    for (k, &lambda) in eig.eigenvalues.iter().enumerate() {
        let v = eig.eigenvectors.column(k);
        let weight: Complex<T> = (v.adjoint() * r * v)[(0, 0)];
        let w = weight.re;
        if lambda <= T::eig_floor() {
            if w > T::psd_tol() {
                return T::lit(f64::INFINITY);
            }
            continue;
        }
        cross += w * lambda.log2();
    }
    let d = -von_neumann_entropy(rho) - cross;
    d.max(T::zero())
}

/// `λH(A₀|E) + (1−λ)H(A₁|E)` for Eve holding the purification of `ρ`,
/// with `A₀` at angle 0 and `A₁` at angle `φ`.
pub fn conditional_entropy_oracle<T: Real>(rho: &DensityMatrix<T>, phi: T, lambda: T) -> T {
    let h = von_neumann_entropy(rho);
    let h0 = von_neumann_entropy(&pinching(rho, &PinchingSpec::new(T::zero())));
    let h1 = von_neumann_entropy(&pinching(rho, &PinchingSpec::new(phi)));
    let v = lambda * (h0 - h) + (T::one() - lambda) * (h1 - h);
    v.max(T::zero())
}

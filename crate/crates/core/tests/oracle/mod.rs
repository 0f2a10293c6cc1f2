//! Reference quantities computed directly from dense matrices, sharing no
//! code with the library.

#![allow(dead_code)]

use nalgebra::{Complex, Matrix2, Matrix4, SymmetricEigen};
use rand::Rng;

pub type C = Complex<f64>;
pub type M2 = Matrix2<C>;
pub type M4 = Matrix4<C>;

pub const TSIRELSON: f64 = 2.0 * std::f64::consts::SQRT_2;

fn c(re: f64) -> C {
    C::new(re, 0.0)
}

pub fn h2(p: f64) -> f64 {
    if p <= 0.0 || p >= 1.0 {
        0.0
    } else {
        -p * p.log2() - (1.0 - p) * (1.0 - p).log2()
    }
}

/// `n·σ` for a unit Bloch vector `n = (x, y, z)`.
pub fn spin(n: [f64; 3]) -> M2 {
    Matrix2::new(c(n[2]), C::new(n[0], -n[1]), C::new(n[0], n[1]), c(-n[2]))
}

/// Unit vector at angle `θ` from `z` towards `x`.
pub fn xz(theta: f64) -> [f64; 3] {
    [theta.sin(), 0.0, theta.cos()]
}

pub fn random_direction<R: Rng>(rng: &mut R) -> [f64; 3] {
    loop {
        let v = [
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0f64..1.0),
        ];
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if n > 0.1 && n <= 1.0 {
            return [v[0] / n, v[1] / n, v[2] / n];
        }
    }
}

pub fn kron(a: &M2, b: &M2) -> M4 {
    M4::from_fn(|i, j| a[(i / 2, j / 2)] * b[(i % 2, j % 2)])
}

pub fn id2() -> M2 {
    M2::identity()
}

pub fn eigenvalues(m: &M4) -> [f64; 4] {
    let h = (m + m.adjoint()) * c(0.5);
    let e = SymmetricEigen::new(h).eigenvalues;
    [e[0], e[1], e[2], e[3]]
}

pub fn entropy(rho: &M4) -> f64 {
    eigenvalues(rho)
        .iter()
        .filter(|&&x| x > 1e-15)
        .map(|&x| -x * x.log2())
        .sum()
}

pub fn trace_norm(m: &M4) -> f64 {
    eigenvalues(m).iter().map(|x| x.abs()).sum()
}

/// Dephasing of Alice's qubit in the eigenbasis of `n·σ`.
pub fn dephase_alice(rho: &M4, n: [f64; 3]) -> M4 {
    let a = spin(n);
    let p = kron(&((id2() + a) * c(0.5)), &id2());
    let q = kron(&((id2() - a) * c(0.5)), &id2());
    p * rho * p + q * rho * q
}

/// `H(A|E)` for Alice measuring `n·σ` and Eve holding a purification.
pub fn conditional_entropy(rho: &M4, n: [f64; 3]) -> f64 {
    entropy(&dephase_alice(rho, n)) - entropy(rho)
}

/// `‖ρ − T[ρ]‖₁`.
pub fn disturbance(rho: &M4, n: [f64; 3]) -> f64 {
    trace_norm(&(rho - dephase_alice(rho, n)))
}

/// `D(ρ‖σ)` in bits, both full rank or with `supp ρ ⊆ supp σ`.
pub fn relative_entropy(rho: &M4, sigma: &M4) -> f64 {
    let h = (sigma + sigma.adjoint()) * c(0.5);
    let eig = SymmetricEigen::new(h);
    let mut cross = 0.0;
    for k in 0..4 {
        let v = eig.eigenvectors.column(k);
        let w = (v.adjoint() * rho * v)[(0, 0)].re;
        let l = eig.eigenvalues[k];
        if l > 1e-15 {
            cross += w * l.log2();
        } else if w > 1e-12 {
            return f64::INFINITY;
        }
    }
    -entropy(rho) - cross
}

pub fn expectation(rho: &M4, op: &M4) -> f64 {
    (rho * op).trace().re
}

pub fn correlator(rho: &M4, a: [f64; 3], b: [f64; 3]) -> f64 {
    expectation(rho, &kron(&spin(a), &spin(b)))
}

/// Largest of the eight CHSH combinations; relabelling outcomes changes
/// none of Alice's conditional entropies.
pub fn chsh(rho: &M4, a: [[f64; 3]; 2], b: [[f64; 3]; 2]) -> f64 {
    let e = |x: usize, y: usize| correlator(rho, a[x], b[y]);
    let (e00, e01, e10, e11) = (e(0, 0), e(0, 1), e(1, 0), e(1, 1));
    [
        e00 + e01 + e10 - e11,
        e00 + e01 - e10 + e11,
        e00 - e01 + e10 + e11,
        -e00 + e01 + e10 + e11,
    ]
    .iter()
    .map(|s| s.abs())
    .fold(0.0, f64::max)
}

pub fn pure(psi: [C; 4]) -> M4 {
    let v = nalgebra::Vector4::from(psi);
    let n = v.norm_squared();
    v * v.adjoint() * c(1.0 / n)
}

/// `|Φ⁺⟩⟨Φ⁺|`, `|Φ⁻⟩⟨Φ⁻|`, `|Ψ⁺⟩⟨Ψ⁺|`, `|Ψ⁻⟩⟨Ψ⁻|`.
pub fn bell_states() -> [M4; 4] {
    let (o, z) = (c(1.0), c(0.0));
    [
        pure([o, z, z, o]),
        pure([o, z, z, -o]),
        pure([z, o, o, z]),
        pure([z, o, -o, z]),
    ]
}

pub fn mix(states: &[M4], weights: &[f64]) -> M4 {
    let total: f64 = weights.iter().sum();
    states
        .iter()
        .zip(weights)
        .fold(M4::zeros(), |acc, (s, &w)| acc + s * c(w / total))
}

pub fn maximally_mixed() -> M4 {
    M4::identity() * c(0.25)
}

/// Random state of random rank (Ginibre).
pub fn random_state<R: Rng>(rng: &mut R) -> M4 {
    let rank = rng.gen_range(1..=4);
    let mut g = M4::zeros();
    for i in 0..4 {
        for j in 0..rank {
            g[(i, j)] = C::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        }
    }
    let m = g * g.adjoint();
    let t = m.trace();
    m / t
}

/// Single-basis reference `1 − h(½ + ½√((S/2)² − 1))`.
pub fn single_basis_curve(s: f64) -> f64 {
    if s <= 2.0 {
        return 0.0;
    }
    let r = ((s / 2.0).powi(2) - 1.0).max(0.0).sqrt();
    1.0 - h2(0.5 + 0.5 * r)
}

/// Depolarising QBER at CHSH value `s`.
pub fn depolarizing_qber(s: f64) -> f64 {
    0.5 * (1.0 - s / TSIRELSON)
}

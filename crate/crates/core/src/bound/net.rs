//! Discretisation of the outer optimisations over `φ ∈ [0, π/2]` and over
//! the unit vector `b`.
//!
//! The CHSH constraint is unchanged by `ω → −ω` and `ω → π − ω` (Bob's local
//! flips `σ_z` and `σ_x` absorb the sign), so a net on the full circle is
//! equivalent to its restriction to the quadrant `ω ∈ [0, π/2]`.
//! `b_vertices` counts vertices on the full circle and must be a multiple
//! of 4.

use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::entropy::{delta_trace_norm, PinchingSpec};
use crate::error::{Error, Result};
use crate::quantum::{cx, DensityMatrix, Mat4};
use crate::sdp::build_chsh_decomposition;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum LipschitzMode {
    /// `L_δ = 1`, `L_F = 2`, both proved.
    Certified,
    /// Constants estimated by dense sampling; never larger than the certified ones.
    Empirical,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct NetConfig {
    pub b_vertices: usize,
    pub phi_points: usize,
    pub s_grid: usize,
    pub lipschitz_mode: LipschitzMode,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            b_vertices: 1024,
            phi_points: 1025,
            s_grid: 121,
            lipschitz_mode: LipschitzMode::Certified,
        }
    }
}

/// Number of dyadic refinements from a root grid of at least four cells.
fn dyadic_split(cells: usize) -> (usize, u32) {
    let mut root = cells;
    let mut depth = 0;
    while root % 2 == 0 && root / 2 >= 4 {
        root /= 2;
        depth += 1;
    }
    (root, depth)
}

impl NetConfig {
    pub fn new(
        b_vertices: usize,
        phi_points: usize,
        s_grid: usize,
        lipschitz_mode: LipschitzMode,
    ) -> Result<Self> {
        let cfg = Self {
            b_vertices,
            phi_points,
            s_grid,
            lipschitz_mode,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.b_vertices < 8 || self.b_vertices % 4 != 0 {
            return Err(Error::Invalid(format!(
                "bVertices must be a multiple of 4 and at least 8, got {}",
                self.b_vertices
            )));
        }
        if self.phi_points < 9 {
            return Err(Error::Invalid(format!(
                "phiPoints must be at least 9, got {}",
                self.phi_points
            )));
        }
        if self.s_grid < 8 {
            return Err(Error::Invalid(format!(
                "sGrid must be at least 8, got {}",
                self.s_grid
            )));
        }
        Ok(())
    }

    /// Finest number of `ω` cells on `[0, π/2]`.
    pub fn omega_cells(&self) -> usize {
        self.b_vertices / 4
    }

    /// Finest number of `φ` cells on `[0, π/2]`.
    pub fn phi_cells(&self) -> usize {
        self.phi_points - 1
    }

    pub(crate) fn omega_tree(&self) -> (usize, u32) {
        dyadic_split(self.omega_cells())
    }

    pub(crate) fn phi_tree(&self) -> (usize, u32) {
        dyadic_split(self.phi_cells())
    }

    /// Both resolutions doubled; the finer net refines every cell of this one.
    pub fn doubled(&self) -> Self {
        Self {
            b_vertices: 2 * self.b_vertices,
            phi_points: 2 * self.phi_points - 1,
            ..*self
        }
    }

    pub fn lipschitz(&self) -> LipschitzConstants {
        match self.lipschitz_mode {
            LipschitzMode::Certified => LipschitzConstants::CERTIFIED,
            LipschitzMode::Empirical => LipschitzConstants::empirical(),
        }
    }

    /// `S` grid, uniform on `[2, 2√2]` with exact endpoints.
    pub fn s_values(&self) -> Vec<f64> {
        let n = self.s_grid;
        let hi = 2.0 * std::f64::consts::SQRT_2;
        (0..n)
            .map(|i| {
                if i + 1 == n {
                    hi
                } else {
                    2.0 + (hi - 2.0) * i as f64 / (n - 1) as f64
                }
            })
            .collect()
    }
}

/// Slope constants with respect to the chord `2 sin(|φ − φ′|/2) ≤ |φ − φ′|`:
///
/// ```text
///   |δ(ρ, φ) − δ(ρ, φ′)|              ≤ L_δ · chord
///   ‖F(φ)·b − F(φ′)·b‖∞               ≤ L_F · |b_x| · chord
/// ```
///
/// With `A = A₁(φ)⊗I`, `ρ − T_φ[ρ] = (ρ − AρA)/2`, so the first difference is
/// at most `‖A − A′‖∞ = chord`. The second is `2|b_x|·‖A₁(φ) − A₁(φ′)‖∞`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct LipschitzConstants {
    pub l_delta: f64,
    pub l_f: f64,
}

impl LipschitzConstants {
    pub const CERTIFIED: Self = Self {
        l_delta: 1.0,
        l_f: 2.0,
    };

    /// Sampled once per process with a fixed seed.
    pub fn empirical() -> Self {
        static CACHE: OnceLock<LipschitzConstants> = OnceLock::new();
        *CACHE.get_or_init(|| Self::estimate(4000, 0x5eed))
    }

    /// Largest observed slopes over random mixed states and angle pairs.
    pub fn estimate(samples: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut l_delta: f64 = 0.0;
        let mut l_f: f64 = 0.0;
        for _ in 0..samples {
            let rho = random_state(&mut rng);
            let phi: f64 = rng.gen_range(0.0..std::f64::consts::FRAC_PI_2);
            let step: f64 = rng.gen_range(1e-4..0.2);
            let phi2 = (phi + step).min(std::f64::consts::FRAC_PI_2);
            let chord = 2.0 * ((phi2 - phi).abs() / 2.0).sin();
            if chord <= 0.0 {
                continue;
            }
            let d1 = delta_trace_norm(&rho, &PinchingSpec::new(phi));
            let d2 = delta_trace_norm(&rho, &PinchingSpec::new(phi2));
            l_delta = l_delta.max((d1 - d2).abs() / chord);

            let omega: f64 = rng.gen_range(0.0..std::f64::consts::FRAC_PI_2);
            let b = (omega.cos(), omega.sin());
            if b.1 > 1e-3 {
                let f1 = build_chsh_decomposition(phi).operator(b);
                let f2 = build_chsh_decomposition(phi2).operator(b);
                let diff = f1.plus(&f2.scaled(-1.0)).operator_norm();
                l_f = l_f.max(diff / (b.1 * chord));
            }
        }
        Self {
            l_delta: l_delta.min(1.0),
            l_f: l_f.min(2.0),
        }
    }
}

/// Random full-rank or low-rank two-qubit state (Ginibre ensemble).
pub(crate) fn random_state<R: Rng>(rng: &mut R) -> DensityMatrix<f64> {
    let rank = rng.gen_range(1..=4);
    let mut g = Mat4::<f64>::zeros();
    for i in 0..4 {
        for j in 0..rank {
            let re: f64 = rng.gen_range(-1.0..1.0);
            let im: f64 = rng.gen_range(-1.0..1.0);
            g[(i, j)] = nalgebra::Complex::new(re, im);
        }
    }
    let m = g * g.adjoint();
    let tr = m.trace().re;
    DensityMatrix::new(m * cx(1.0 / tr)).expect("Gram matrix is a state")
}

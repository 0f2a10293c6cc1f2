//! Dense primal–dual interior-point solver for small block-diagonal SDPs.
//!
//! Problems are posed in standard form
//!
//! ```text
//!   min ⟨C, X⟩   s.t.  ⟨A_i, X⟩ = b_i,   X = diag(X_1, …, X_k) ⪰ 0
//!   max bᵀy      s.t.  Σ y_i A_i + Z = C,  Z ⪰ 0
//! ```
//!
//! and solved from an infeasible start with the HKM search direction and a
//! Mehrotra predictor–corrector. Nonnegative scalar variables are 1×1
//! blocks. Intended sizes are a handful of blocks of dimension ≤ 16 and a
//! few dozen constraints; everything is dense.
//!
//! Internally a block-diagonal matrix is one flat column-major buffer and
//! the constraint matrices are the rows of a dense `m × Σn_k²` array, so an
//! iteration allocates only a handful of vectors. Blocks of order 1 and 2
//! use closed forms.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};

use crate::scalar::Real;

/// One equality `Σ_blocks ⟨A_i^b, X_b⟩ = rhs`, listing only the blocks it touches.
#[derive(Clone, Debug)]
pub struct LinearConstraint<T: Real> {
    pub terms: Vec<(usize, DMatrix<T>)>,
    pub rhs: T,
}

#[derive(Clone, Debug)]
pub struct BlockSdp<T: Real> {
    pub block_dims: Vec<usize>,
    pub cost: Vec<DMatrix<T>>,
    pub constraints: Vec<LinearConstraint<T>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    NumericalLimit,
}

#[derive(Clone, Copy, Debug)]
pub struct SolverOptions<T: Real> {
    pub tol: T,
    pub max_iter: usize,
}

impl<T: Real> Default for SolverOptions<T> {
    fn default() -> Self {
        Self {
            tol: T::lit(1e-9).max(T::default_epsilon() * T::lit(64.0)),
            max_iter: 100,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SdpOutcome<T: Real> {
    pub x: Vec<DMatrix<T>>,
    pub y: DVector<T>,
    pub z: Vec<DMatrix<T>>,
    pub primal_obj: T,
    pub dual_obj: T,
    pub primal_infeasibility: T,
    pub dual_infeasibility: T,
    pub iterations: usize,
    pub status: SolveStatus,
}

fn sym<T: Real>(m: &DMatrix<T>) -> DMatrix<T> {
    (m + m.transpose()) * T::lit(0.5)
}

fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (x, y)| acc + *x * *y)
}

/// Offsets of the blocks inside one flat buffer.
struct Layout {
    dims: Vec<usize>,
    off: Vec<usize>,
    len: usize,
}

impl Layout {
    fn new(dims: &[usize]) -> Self {
        let mut off = Vec::with_capacity(dims.len());
        let mut len = 0;
        for &n in dims {
            off.push(len);
            len += n * n;
        }
        Self {
            dims: dims.to_vec(),
            off,
            len,
        }
    }

    fn blocks(&self) -> impl Iterator<Item = (usize, std::ops::Range<usize>)> + '_ {
        self.dims
            .iter()
            .zip(&self.off)
            .map(|(&n, &o)| (n, o..o + n * n))
    }

    fn identity<T: Real>(&self, s: T) -> Vec<T> {
        let mut v = vec![T::zero(); self.len];
        for (n, r) in self.blocks() {
            for i in 0..n {
                v[r.start + i * n + i] = s;
            }
        }
        v
    }

    fn pack<T: Real>(&self, mats: &[DMatrix<T>]) -> Vec<T> {
        let mut v = vec![T::zero(); self.len];
        for ((_, r), m) in self.blocks().zip(mats) {
            v[r].copy_from_slice(m.as_slice());
        }
        v
    }

    fn unpack<T: Real>(&self, v: &[T]) -> Vec<DMatrix<T>> {
        self.blocks()
            .map(|(n, r)| DMatrix::from_column_slice(n, n, &v[r]))
            .collect()
    }

    /// `out = a·b·c` block by block.
    fn triple<T: Real>(&self, a: &[T], b: &[T], c: &[T], out: &mut [T]) {
        for (n, r) in self.blocks() {
            triple_block(n, &a[r.clone()], &b[r.clone()], &c[r.clone()], &mut out[r]);
        }
    }

    fn symmetrize<T: Real>(&self, v: &mut [T]) {
        let half = T::lit(0.5);
        for (n, r) in self.blocks() {
            let b = &mut v[r];
            for j in 0..n {
                for i in 0..j {
                    let s = (b[i + j * n] + b[j + i * n]) * half;
                    b[i + j * n] = s;
                    b[j + i * n] = s;
                }
            }
        }
    }

    fn inverse_spd<T: Real>(&self, v: &[T]) -> Option<Vec<T>> {
        let mut out = vec![T::zero(); self.len];
        for (n, r) in self.blocks() {
            let a = &v[r.clone()];
            let o = &mut out[r];
            match n {
                1 => {
                    if a[0] <= T::zero() {
                        return None;
                    }
                    o[0] = T::one() / a[0];
                }
                2 => {
                    let det = a[0] * a[3] - a[1] * a[2];
                    if a[0] <= T::zero() || det <= T::zero() {
                        return None;
                    }
                    o[0] = a[3] / det;
                    o[3] = a[0] / det;
                    o[1] = -a[1] / det;
                    o[2] = -a[2] / det;
                }
                _ => {
                    let m = DMatrix::from_column_slice(n, n, a);
                    o.copy_from_slice(Cholesky::new(m)?.inverse().as_slice());
                }
            }
        }
        Some(out)
    }

    /// Largest `α` with `x + α·dx ⪰ 0` over all blocks (`+∞` if unbounded);
    /// `None` if `x` itself is not positive definite.
    fn max_step<T: Real>(&self, x: &[T], dx: &[T]) -> Option<T> {
        let mut best = T::lit(f64::INFINITY);
        for (n, r) in self.blocks() {
            let lo = min_generalized_eig(n, &x[r.clone()], &dx[r])?;
            if lo < T::zero() {
                best = best.min(-T::one() / lo);
            }
        }
        Some(best)
    }
}

fn triple_block<T: Real>(n: usize, a: &[T], b: &[T], c: &[T], o: &mut [T]) {
    match n {
        1 => o[0] = a[0] * b[0] * c[0],
        2 => {
            let ab = [
                a[0] * b[0] + a[2] * b[1],
                a[1] * b[0] + a[3] * b[1],
                a[0] * b[2] + a[2] * b[3],
                a[1] * b[2] + a[3] * b[3],
            ];
            o[0] = ab[0] * c[0] + ab[2] * c[1];
            o[1] = ab[1] * c[0] + ab[3] * c[1];
            o[2] = ab[0] * c[2] + ab[2] * c[3];
            o[3] = ab[1] * c[2] + ab[3] * c[3];
        }
        _ => {
            let mut ab = vec![T::zero(); n * n];
            matmul(n, a, b, &mut ab);
            matmul(n, &ab, c, o);
        }
    }
}

fn matmul<T: Real>(n: usize, a: &[T], b: &[T], out: &mut [T]) {
    for j in 0..n {
        for i in 0..n {
            let mut s = T::zero();
            for k in 0..n {
                s += a[i + k * n] * b[k + j * n];
            }
            out[i + j * n] = s;
        }
    }
}

/// Smallest `λ` with `det(d − λx) = 0` for `x ≻ 0`; `None` if `x` is not positive definite.
fn min_generalized_eig<T: Real>(n: usize, x: &[T], d: &[T]) -> Option<T> {
    match n {
        1 => (x[0] > T::zero()).then(|| d[0] / x[0]),
        2 => {
            let a = x[0] * x[3] - x[1] * x[1];
            if x[0] <= T::zero() || a <= T::zero() {
                return None;
            }
            let b = -(d[0] * x[3] + d[3] * x[0] - T::lit(2.0) * d[1] * x[1]);
            let c = d[0] * d[3] - d[1] * d[1];
            let disc = (b * b - T::lit(4.0) * a * c).max(T::zero()).sqrt();
            // numerically stable pair of roots
            let q = if b >= T::zero() {
                -(b + disc) * T::lit(0.5)
            } else {
                (disc - b) * T::lit(0.5)
            };
            let r1 = q / a;
            let r2 = if q != T::zero() { c / q } else { r1 };
            Some(r1.min(r2))
        }
        _ => {
            let xm = DMatrix::from_column_slice(n, n, x);
            let dm = DMatrix::from_column_slice(n, n, d);
            let l = Cholesky::new(xm)?.l();
            let linv = l.try_inverse()?;
            let m = sym(&(&linv * dm * linv.transpose()));
            Some(
                SymmetricEigen::new(m)
                    .eigenvalues
                    .iter()
                    .fold(T::lit(f64::INFINITY), |a, &b| a.min(b)),
            )
        }
    }
}

impl<T: Real> BlockSdp<T> {
    pub fn new(block_dims: Vec<usize>) -> Self {
        let cost = block_dims.iter().map(|&n| DMatrix::zeros(n, n)).collect();
        Self {
            block_dims,
            cost,
            constraints: Vec::new(),
        }
    }

    pub fn set_cost(&mut self, block: usize, c: DMatrix<T>) {
        self.cost[block] = sym(&c);
    }

    pub fn add_constraint(&mut self, terms: Vec<(usize, DMatrix<T>)>, rhs: T) {
        let terms = terms.into_iter().map(|(b, a)| (b, sym(&a))).collect();
        self.constraints.push(LinearConstraint { terms, rhs });
    }

    pub fn solve(&self, opts: &SolverOptions<T>) -> SdpOutcome<T> {
        let lay = Layout::new(&self.block_dims);
        let m = self.constraints.len();
        let len = lay.len;
        let nt = T::from_usize(self.block_dims.iter().sum()).unwrap();

        // Dense constraint rows.
        let mut a = vec![T::zero(); m * len];
        for (i, c) in self.constraints.iter().enumerate() {
            for (blk, mat) in &c.terms {
                let o = lay.off[*blk];
                let row = &mut a[i * len..(i + 1) * len];
                for (dst, src) in row[o..o + mat.len()].iter_mut().zip(mat.iter()) {
                    *dst += *src;
                }
            }
        }
        let row = |i: usize| &a[i * len..(i + 1) * len];
        let apply = |v: &[T]| -> Vec<T> { (0..m).map(|i| dot(row(i), v)).collect() };
        let adjoint = |y: &[T]| -> Vec<T> {
            let mut out = vec![T::zero(); len];
            for (i, &yi) in y.iter().enumerate() {
                if yi != T::zero() {
                    for (o, &ai) in out.iter_mut().zip(row(i)) {
                        *o += ai * yi;
                    }
                }
            }
            out
        };
        let b: Vec<T> = self.constraints.iter().map(|c| c.rhs).collect();
        let c = lay.pack(&self.cost);
        // Blocks each constraint touches.
        let touch: Vec<Vec<usize>> = (0..m)
            .map(|i| {
                lay.blocks()
                    .enumerate()
                    .filter(|(_, (_, r))| row(i)[r.clone()].iter().any(|v| *v != T::zero()))
                    .map(|(k, _)| k)
                    .collect()
            })
            .collect();

        let norm_c = dot(&c, &c).sqrt();
        let norm_b = dot(&b, &b).sqrt();
        let mut xi = T::lit(10.0).max(nt.sqrt());
        let mut eta = T::lit(10.0).max(nt.sqrt()).max(norm_c);
        for (i, con) in self.constraints.iter().enumerate() {
            let na = dot(row(i), row(i)).sqrt();
            xi = xi.max(nt * (T::one() + con.rhs.abs()) / (T::one() + na));
            eta = eta.max(na);
        }
        let mut x = lay.identity(xi);
        let mut z = lay.identity(eta);
        let mut y = vec![T::zero(); m];

        let gamma = T::lit(0.95);
        let mut status = SolveStatus::NumericalLimit;
        let mut iterations = 0;
        let mut best: Option<(T, Vec<T>, Vec<T>, Vec<T>)> = None;
        let mut scratch = vec![T::zero(); len];
        let mut g_rows = vec![T::zero(); m * len];

        for it in 0..opts.max_iter {
            iterations = it;
            let ax = apply(&x);
            let rp: Vec<T> = b.iter().zip(&ax).map(|(bi, ai)| *bi - *ai).collect();
            let aty = adjoint(&y);
            let rd: Vec<T> = (0..len).map(|k| c[k] - z[k] - aty[k]).collect();
            let mu = dot(&x, &z) / nt;
            let pobj = dot(&c, &x);
            let dobj = dot(&b, &y);
            let pinf = dot(&rp, &rp).sqrt() / (T::one() + norm_b);
            let dinf = dot(&rd, &rd).sqrt() / (T::one() + norm_c);
            let gap = (pobj - dobj).abs() / (T::one() + pobj.abs() + dobj.abs());
            let merit = gap.max(pinf).max(dinf);
            if best.as_ref().map_or(true, |(bm, ..)| merit < *bm) {
                best = Some((merit, x.clone(), y.clone(), z.clone()));
            }
            if gap <= opts.tol && pinf <= opts.tol && dinf <= opts.tol {
                status = SolveStatus::Optimal;
                break;
            }

            let Some(zinv) = lay.inverse_spd(&z) else {
                break;
            };

            // Schur complement M_ij = ⟨A_i, X A_j Z⁻¹⟩.
            for j in 0..m {
                let (aj, gj) = (row(j), &mut g_rows[j * len..(j + 1) * len]);
                for &k in &touch[j] {
                    let (n, o) = (lay.dims[k], lay.off[k]);
                    let r = o..o + n * n;
                    triple_block(
                        n,
                        &x[r.clone()],
                        &aj[r.clone()],
                        &zinv[r.clone()],
                        &mut gj[r],
                    );
                }
            }
            let mut schur = DMatrix::<T>::zeros(m, m);
            for i in 0..m {
                for j in i..m {
                    let gj = &g_rows[j * len..(j + 1) * len];
                    let mut v = T::zero();
                    for &k in &touch[i] {
                        if touch[j].contains(&k) {
                            let (n, o) = (lay.dims[k], lay.off[k]);
                            v += dot(&row(i)[o..o + n * n], &gj[o..o + n * n]);
                        }
                    }
                    schur[(i, j)] = v;
                    schur[(j, i)] = v;
                }
            }
            let scale = (0..m)
                .fold(T::zero(), |acc, i| acc.max(schur[(i, i)].abs()))
                .max(T::one());
            let chol = match Cholesky::new(schur.clone()) {
                Some(ch) => ch,
                None => {
                    for i in 0..m {
                        schur[(i, i)] += scale * T::default_epsilon() * T::lit(1e3);
                    }
                    match Cholesky::new(schur) {
                        Some(ch) => ch,
                        None => break,
                    }
                }
            };

            lay.triple(&x, &rd, &zinv, &mut scratch);
            let a_xrz = apply(&scratch);
            let a_zinv = apply(&zinv);

            let direction = |sigma_mu: T, corr: Option<&[T]>, scratch: &mut Vec<T>| {
                let mut r: Vec<T> = (0..m)
                    .map(|i| b[i] - a_zinv[i] * sigma_mu + a_xrz[i])
                    .collect();
                if let Some(g) = corr {
                    for (ri, gi) in r.iter_mut().zip(apply(g)) {
                        *ri += gi;
                    }
                }
                let dy = chol.solve(&DVector::from_vec(r));
                let atdy = adjoint(dy.as_slice());
                let dz: Vec<T> = (0..len).map(|k| rd[k] - atdy[k]).collect();
                lay.triple(&x, &dz, &zinv, scratch);
                let mut dx: Vec<T> = (0..len)
                    .map(|k| zinv[k] * sigma_mu - x[k] - scratch[k])
                    .collect();
                if let Some(g) = corr {
                    for (d, gi) in dx.iter_mut().zip(g) {
                        *d -= *gi;
                    }
                }
                lay.symmetrize(&mut dx);
                (dx, dy, dz)
            };
            let steps = |dx: &[T], dz: &[T]| -> Option<(T, T)> {
                let sp = lay.max_step(&x, dx)?;
                let sd = lay.max_step(&z, dz)?;
                Some(((gamma * sp).min(T::one()), (gamma * sd).min(T::one())))
            };

            let (dx_a, _, dz_a) = direction(T::zero(), None, &mut scratch);
            let Some((ap, ad)) = steps(&dx_a, &dz_a) else {
                break;
            };
            let xa: Vec<T> = (0..len).map(|k| x[k] + dx_a[k] * ap).collect();
            let za: Vec<T> = (0..len).map(|k| z[k] + dz_a[k] * ad).collect();
            let mu_aff = dot(&xa, &za) / nt;
            let ratio = (mu_aff / mu).max(T::zero()).min(T::one());
            let sigma = ratio * ratio * ratio;
            let mut g = vec![T::zero(); len];
            lay.triple(&dx_a, &dz_a, &zinv, &mut g);
            let (dx, dy, dz) = direction(sigma * mu, Some(&g), &mut scratch);
            let Some((ap, ad)) = steps(&dx, &dz) else {
                break;
            };
            for k in 0..len {
                x[k] += dx[k] * ap;
                z[k] += dz[k] * ad;
            }
            lay.symmetrize(&mut x);
            lay.symmetrize(&mut z);
            for (yi, di) in y.iter_mut().zip(dy.iter()) {
                *yi += *di * ad;
            }
            if ap < T::lit(1e-12) && ad < T::lit(1e-12) {
                break;
            }
        }

        if status != SolveStatus::Optimal {
            if let Some((_, bx, by, bz)) = best {
                x = bx;
                y = by;
                z = bz;
            }
        }
        let ax = apply(&x);
        let rp: Vec<T> = b.iter().zip(&ax).map(|(bi, ai)| *bi - *ai).collect();
        let aty = adjoint(&y);
        let rd: Vec<T> = (0..len).map(|k| c[k] - z[k] - aty[k]).collect();
        SdpOutcome {
            primal_obj: dot(&c, &x),
            dual_obj: dot(&b, &y),
            primal_infeasibility: dot(&rp, &rp).sqrt() / (T::one() + norm_b),
            dual_infeasibility: dot(&rd, &rd).sqrt() / (T::one() + norm_c),
            x: lay.unpack(&x),
            y: DVector::from_vec(y),
            z: lay.unpack(&z),
            iterations,
            status,
        }
    }
}

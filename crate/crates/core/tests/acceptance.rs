//! End-to-end acceptance checks. Prints one `PASS`, `FAIL` or `SKIP` line per
//! criterion and exits non-zero when any criterion fails.
//!
//! Criterion 12 runs only when `DIQKD_EXPERIMENTS` names a CSV file with
//! columns `label,year,S,qber,source`, labels carrying the experiment
//! number, e.g. `(7)`.

mod oracle;

use std::time::Instant;

use argmin::core::{CostFunction, Executor};
use argmin::solver::neldermead::NelderMead;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use diqkd::bound::{
    compute_curve, qubit_bound_at, BoundCurve, CurveBank, HullMode, LipschitzMode, NetConfig,
};
use diqkd::entropy::{delta_trace_norm, pinching, refined_pinsker, relative_entropy, PinchingSpec};
use diqkd::keyrate::{critical_chsh, evaluate_experiments, lambda_grid, optimize_basis_bias};
use diqkd::protocol::{predicted_rate, run_protocol, ProtocolConfig};
use diqkd::quantum::{werner_state, ChannelPoint, DensityMatrix};
use diqkd::sdp::{ChshConstraint, SolverOptions, WeightedDeltaProblem};

use oracle::{M4, TSIRELSON};

struct Report {
    failed: usize,
}

impl Report {
    fn line(&mut self, n: u32, pass: Option<bool>, text: String) {
        let tag = match pass {
            Some(true) => "PASS",
            Some(false) => {
                self.failed += 1;
                "FAIL"
            }
            None => "SKIP",
        };
        println!("criterion {n:>2}: {tag}  {text}");
    }
}

fn state(m: M4) -> DensityMatrix<f64> {
    DensityMatrix::new(m).expect("oracle state is valid")
}

fn g(delta: f64) -> f64 {
    1.0 - oracle::h2(0.5 - delta / 2.0)
}

/// Hull values are nondecreasing and have nondecreasing slopes.
fn convex_nondecreasing(curve: &BoundCurve<f64>) -> bool {
    let xs: Vec<f64> = (0..=2000)
        .map(|i| 2.0 + (TSIRELSON - 2.0) * i as f64 / 2000.0)
        .collect();
    let ys: Vec<f64> = xs.iter().map(|&s| curve.evaluate(s)).collect();
    let monotone = ys.windows(2).all(|w| w[1] >= w[0] - 1e-12);
    let convex = ys.windows(3).all(|w| w[2] - 2.0 * w[1] + w[0] >= -1e-9);
    monotone && convex
}

/// Random configuration families: generic, near-optimal Bell-diagonal and
/// partially entangled pure states with noise.
fn random_configuration<R: Rng>(rng: &mut R) -> (M4, [[f64; 3]; 2], [[f64; 3]; 2]) {
    match rng.gen_range(0..3) {
        0 => (
            oracle::random_state(rng),
            [oracle::random_direction(rng), oracle::random_direction(rng)],
            [oracle::random_direction(rng), oracle::random_direction(rng)],
        ),
        1 => {
            let w: Vec<f64> = (0..4)
                .map(|k| {
                    if k == 0 {
                        1.0
                    } else {
                        rng.gen_range(0.0..0.25)
                    }
                })
                .collect();
            let rho = oracle::mix(&oracle::bell_states(), &w);
            let phi: f64 = rng.gen_range(0.0..std::f64::consts::FRAC_PI_2);
            let jitter = |rng: &mut R| rng.gen_range(-0.15..0.15);
            (
                rho,
                [oracle::xz(jitter(rng)), oracle::xz(phi + jitter(rng))],
                [
                    oracle::xz(phi / 2.0 + jitter(rng)),
                    oracle::xz(-phi / 2.0 + jitter(rng)),
                ],
            )
        }
        _ => {
            let theta: f64 = rng.gen_range(0.1..std::f64::consts::FRAC_PI_4);
            let z = oracle::C::new(0.0, 0.0);
            let psi = oracle::pure([
                oracle::C::new(theta.cos(), 0.0),
                z,
                z,
                oracle::C::new(theta.sin(), 0.0),
            ]);
            let v: f64 = rng.gen_range(0.7..1.0);
            let rho = psi * oracle::C::new(v, 0.0)
                + oracle::maximally_mixed() * oracle::C::new(1.0 - v, 0.0);
            let phi: f64 = rng.gen_range(0.3..std::f64::consts::FRAC_PI_2);
            let beta: f64 = rng.gen_range(0.0..std::f64::consts::FRAC_PI_2);
            (
                rho,
                [oracle::xz(0.0), oracle::xz(phi)],
                [oracle::xz(beta), oracle::xz(-beta)],
            )
        }
    }
}

/// `λH(A₀|E) + (1−λ)H(A₁|E)` over all two-qubit states (Cholesky
/// parameters) and angles, mixed with `I/4` down to CHSH exactly `target`.
#[derive(Clone, Copy)]
struct NearTight {
    target: f64,
    lambda: f64,
}

const DIM: usize = 19;

impl NearTight {
    fn configuration(x: &[f64]) -> (M4, [[f64; 3]; 2], [[f64; 3]; 2]) {
        let mut l = M4::zeros();
        let mut k = 0;
        for i in 0..4 {
            for j in 0..=i {
                let im = if i == j { 0.0 } else { x[k + 1] };
                l[(i, j)] = oracle::C::new(x[k], im);
                k += if i == j { 1 } else { 2 };
            }
        }
        let m = l * l.adjoint();
        let rho = m / m.trace();
        let a = [oracle::xz(0.0), oracle::xz(x[16])];
        let b = [oracle::xz(x[17]), oracle::xz(x[18])];
        (rho, a, b)
    }

    fn value(&self, x: &[f64]) -> f64 {
        let (rho, a, b) = Self::configuration(x);
        let s = oracle::chsh(&rho, a, b);
        if s < self.target {
            return 10.0 + 100.0 * (self.target - s);
        }
        let v = self.target / s;
        let rho =
            rho * oracle::C::new(v, 0.0) + oracle::maximally_mixed() * oracle::C::new(1.0 - v, 0.0);
        self.lambda * oracle::conditional_entropy(&rho, a[0])
            + (1.0 - self.lambda) * oracle::conditional_entropy(&rho, a[1])
    }

    fn descend(&self, mut x: Vec<f64>, steps: &[f64]) -> Vec<f64> {
        for &step in steps {
            let simplex: Vec<Vec<f64>> = std::iter::once(x.clone())
                .chain((0..DIM).map(|i| {
                    let mut v = x.clone();
                    v[i] += step;
                    v
                }))
                .collect();
            let solver = NelderMead::new(simplex).with_sd_tolerance(1e-14).unwrap();
            let problem = NearTight { ..*self };
            x = Executor::new(problem, solver)
                .configure(|s| s.max_iters(20_000))
                .run()
                .unwrap()
                .state
                .best_param
                .unwrap();
        }
        x
    }
}

impl CostFunction for NearTight {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, x: &Self::Param) -> Result<f64, argmin::core::Error> {
        Ok(self.value(x))
    }
}

/// Multistart Nelder–Mead followed by perturbed restarts from the best point.
fn locally_optimised(target: f64, lambda: f64, seed: u64) -> f64 {
    let problem = NearTight { target, lambda };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = (f64::INFINITY, Vec::new());
    for _ in 0..12 {
        let start: Vec<f64> = (0..DIM)
            .map(|i| {
                if i < 16 {
                    rng.gen_range(-1.0..1.0)
                } else {
                    rng.gen_range(-1.5..1.5)
                }
            })
            .collect();
        let x = problem.descend(start, &[0.3, 0.05, 0.05]);
        let v = problem.value(&x);
        if v < best.0 {
            best = (v, x);
        }
    }
    for _ in 0..24 {
        let start: Vec<f64> = best
            .1
            .iter()
            .map(|v| v + rng.gen_range(-0.15..0.15))
            .collect();
        let x = problem.descend(start, &[0.1, 0.02]);
        let v = problem.value(&x);
        if v < best.0 {
            best = (v, x);
        }
    }
    best.0
}

fn experiment_number(label: &str) -> Option<u32> {
    let digits: String = label.chars().filter(|c| c.is_ascii_digit()).collect();
    digits.parse().ok()
}

fn main() {
    let mut r = Report { failed: 0 };
    let net = NetConfig::default();
    let mode = HullMode::Interpolated;

    // Default-net curves for the two reference weights.
    let t0 = Instant::now();
    let half = compute_curve::<f64>(0.5, &net, mode).expect("λ = 1/2 curve");
    let t_half = t0.elapsed().as_secs_f64();
    let t1 = Instant::now();
    let one = compute_curve::<f64>(1.0, &net, mode).expect("λ = 1 curve");
    let t_one = t1.elapsed().as_secs_f64();
    let runtime = t_half + t_one;

    // 1 and 2.
    let c_half = critical_chsh(&half, 1e-6);
    let c_one = critical_chsh(&one, 1e-6);
    match (&c_half, &c_one) {
        (Ok(a), Ok(b)) => {
            let ok = (a.s_star - 2.362).abs() <= 0.01
                && (b.s_star - 2.423).abs() <= 0.01
                && runtime <= 1800.0;
            r.line(
                1,
                Some(ok),
                format!(
                    "S*(1/2) = {:.5} (2.362 ± 0.01), S*(1) = {:.5} (2.423 ± 0.01), both curves in {runtime:.0} s (≤ 1800 s)",
                    a.s_star, b.s_star
                ),
            );
            let qa = oracle::depolarizing_qber(a.s_star);
            let qb = oracle::depolarizing_qber(b.s_star);
            let ok = (a.q_star - 0.082).abs() <= 0.003
                && (b.q_star - 0.071).abs() <= 0.003
                && (a.q_star - qa).abs() < 1e-12
                && (b.q_star - qb).abs() < 1e-12;
            r.line(
                2,
                Some(ok),
                format!(
                    "Q*(1/2) = {:.5} (0.082 ± 0.003), Q*(1) = {:.5} (0.071 ± 0.003)",
                    a.q_star, b.q_star
                ),
            );
        }
        _ => {
            r.line(
                1,
                Some(false),
                format!("critical point not found: {c_half:?} {c_one:?}"),
            );
            r.line(2, Some(false), "critical point not found".into());
        }
    }

    // 3.
    let mut worst_at_2: f64 = 0.0;
    for &l in &lambda_grid() {
        let p = qubit_bound_at::<f64>(2.0, l, &net).expect("bound at S = 2");
        worst_at_2 = worst_at_2.max(p.c_qubit.abs());
    }
    worst_at_2 = worst_at_2
        .max(half.evaluate(2.0).abs())
        .max(one.evaluate(2.0).abs());
    let top = half.evaluate(TSIRELSON);
    r.line(
        3,
        Some(worst_at_2 <= 1e-4 && (0.99..=1.0).contains(&top)),
        format!(
            "max_λ |C*(2, λ)| = {worst_at_2:.2e} (≤ 1e-4), C*(2√2, 1/2) = {top:.5} (in [0.99, 1])"
        ),
    );

    // 4.
    let dev = (1..=8)
        .map(|k| {
            let s = 2.0 + 0.1 * k as f64;
            (one.evaluate(s) - oracle::single_basis_curve(s)).abs()
        })
        .fold(0.0f64, f64::max);
    r.line(
        4,
        Some(dev <= 0.01),
        format!("max |C*(S, 1) − analytic| over S = 2.1..2.8 is {dev:.5} (≤ 0.01)"),
    );

    // 5.
    let mut rng = ChaCha8Rng::seed_from_u64(20_240_501);
    let (mut worst, mut violating, mut nontrivial) = (f64::INFINITY, 0usize, 0usize);
    let configs = 10_000;
    for _ in 0..configs {
        let (rho, a, b) = random_configuration(&mut rng);
        let s = oracle::chsh(&rho, a, b).min(TSIRELSON);
        let h0 = oracle::conditional_entropy(&rho, a[0]);
        let h1 = oracle::conditional_entropy(&rho, a[1]);
        if s > 2.0 {
            nontrivial += 1;
        }
        for (lambda, curve) in [(0.5, &half), (1.0, &one), (0.0, &one)] {
            let bound = if s > 2.0 { curve.evaluate(s) } else { 0.0 };
            let value = lambda * h0 + (1.0 - lambda) * h1;
            worst = worst.min(value - bound);
            if value < bound - 1e-6 {
                violating += 1;
            }
        }
    }
    r.line(
        5,
        Some(violating == 0),
        format!(
            "{configs} configurations ({nontrivial} with S > 2), λ ∈ {{0, 1/2, 1}}: {violating} below the hull by more than 1e-6, smallest margin {worst:.3e}"
        ),
    );

    // 6.
    let mut worst_excess: f64 = 0.0;
    let mut details = Vec::new();
    for (i, &s) in [2.2, 2.4, 2.6].iter().enumerate() {
        let found = locally_optimised(s, 0.5, 7 + i as u64);
        let bound = half.evaluate(s);
        worst_excess = worst_excess.max(found - bound);
        details.push(format!("S={s}: {found:.4} vs {bound:.4}"));
    }
    // Same optimiser at λ = 1, where the minimum is known in closed form.
    let control = locally_optimised(2.4, 1.0, 10);
    r.line(
        6,
        Some(worst_excess <= 0.05),
        format!(
            "λ = 1/2, optimised two-qubit entropy minus bound up to {worst_excess:.4} (≤ 0.05); {}; control λ = 1, S = 2.4: {control:.4} vs analytic {:.4}",
            details.join(", "),
            oracle::single_basis_curve(2.4)
        ),
    );

    // 7.
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let (mut min_margin, mut lib_dev) = (f64::INFINITY, 0.0f64);
    for _ in 0..10_000 {
        let rho = oracle::random_state(&mut rng);
        let phi: f64 = rng.gen_range(0.0..std::f64::consts::FRAC_PI_2);
        let n = oracle::xz(phi);
        let d = oracle::relative_entropy(&rho, &oracle::dephase_alice(&rho, n));
        let delta = oracle::disturbance(&rho, n);
        min_margin = min_margin.min(d - g(delta));
        let lrho = state(rho);
        let spec = PinchingSpec::new(phi);
        let ld = relative_entropy(&lrho, &pinching(&lrho, &spec));
        let lg = refined_pinsker(delta_trace_norm(&lrho, &spec).min(1.0)).unwrap();
        lib_dev = lib_dev.max((ld - d).abs()).max((lg - g(delta)).abs());
        min_margin = min_margin.min(ld - lg);
    }
    let (o, z) = (oracle::C::new(1.0, 0.0), oracle::C::new(0.0, 0.0));
    let witness = oracle::pure([o, z, o, z]);
    let wd = oracle::relative_entropy(&witness, &oracle::dephase_alice(&witness, oracle::xz(0.0)));
    let wg = g(oracle::disturbance(&witness, oracle::xz(0.0)));
    let lw = state(witness);
    let spec = PinchingSpec::new(0.0);
    let lwd = relative_entropy(&lw, &pinching(&lw, &spec));
    let lwg = refined_pinsker(delta_trace_norm(&lw, &spec)).unwrap();
    let witness_dev = (wd - wg)
        .abs()
        .max((lwd - lwg).abs())
        .max((lwd - 1.0).abs());
    r.line(
        7,
        Some(min_margin >= -1e-9 && witness_dev <= 1e-9 && lib_dev <= 1e-9),
        format!(
            "10000 random (ρ, φ): min D − g(δ) = {min_margin:.3e} (≥ −1e-9); |+⟩|0⟩ witness D − g = {witness_dev:.1e} (≤ 1e-9); library vs reference {lib_dev:.1e}"
        ),
    );

    // 9, on a coarser net; its curves also enter 8.
    let sweep_net = NetConfig::new(512, 513, 41, LipschitzMode::Certified).unwrap();
    let sweep = CurveBank::compute(&lambda_grid(), &sweep_net, mode).expect("λ sweep");
    let low = optimize_basis_bias(ChannelPoint::depolarizing(2.3).unwrap(), &sweep).unwrap();
    let high = optimize_basis_bias(ChannelPoint::depolarizing(2.75).unwrap(), &sweep).unwrap();

    // 8.
    let max_gap = [&half, &one]
        .into_iter()
        .chain(sweep.curves())
        .map(|c| c.max_gap())
        .fold(0.0f64, f64::max);
    let mut rng = ChaCha8Rng::seed_from_u64(88);
    let (mut spot_violations, mut spot_min) = (0usize, f64::INFINITY);
    // (φ, ω, λ, position of S between 2 and the largest attainable value)
    let spots = [
        (0.4, 0.3, 0.5, 0.5),
        (1.0, 0.8, 0.5, 0.8),
        (std::f64::consts::FRAC_PI_2, 0.75, 1.0, 0.6),
        (0.9, 1.2, 0.75, 0.9),
        (1.3, 0.2, 0.25, 0.2),
    ];
    for &(phi, omega, lambda, frac) in &spots {
        let b = (f64::cos(omega), f64::sin(omega));
        let probe = WeightedDeltaProblem::new(phi, b, lambda, ChshConstraint::AtLeast(2.0));
        let f = probe.constraint_operator().map(|x| oracle::C::new(x, 0.0));
        let eig = nalgebra::SymmetricEigen::new(f);
        let top = eig.eigenvalues.imax();
        let s = 2.0 + frac * (eig.eigenvalues[top] - 2.0);
        let problem = WeightedDeltaProblem::new(phi, b, lambda, ChshConstraint::AtLeast(s));
        let sol = problem.solve(&SolverOptions::default());
        let v = eig.eigenvectors.column(top);
        let best = v * v.adjoint();
        let mut checked = 0;
        while checked < 1000 {
            let rho = oracle::random_state(&mut rng);
            let (e_rho, e_top) = (oracle::expectation(&rho, &f), eig.eigenvalues[top]);
            let t = if e_rho >= s {
                0.0
            } else {
                (s - e_rho) / (e_top - e_rho) + rng.gen_range(0.0..0.3)
            };
            if t > 1.0 {
                continue;
            }
            let rho = rho * oracle::C::new(1.0 - t, 0.0) + best * oracle::C::new(t, 0.0);
            if oracle::expectation(&rho, &f) < s - 1e-12 {
                continue;
            }
            checked += 1;
            let objective = lambda * oracle::disturbance(&rho, oracle::xz(0.0))
                + (1.0 - lambda) * oracle::disturbance(&rho, oracle::xz(phi));
            spot_min = spot_min.min(objective - sol.dual_value);
            if sol.dual_value > objective + 1e-9 {
                spot_violations += 1;
            }
        }
    }
    r.line(
        8,
        Some(max_gap <= 1e-6 && spot_violations == 0),
        format!(
            "largest duality gap {max_gap:.2e} (≤ 1e-6) over {} curves; {} instances × 1000 feasible states: {spot_violations} below the dual value, smallest margin {spot_min:.3e}",
            2 + sweep.curves().len(),
            spots.len()
        ),
    );

    r.line(
        9,
        Some(low.best_lambda == 0.5 && high.best_lambda == 1.0),
        format!(
            "best λ at S = 2.3 is {} (want 0.5), at S = 2.75 is {} (want 1); 21-point grid on a 512/513/41 net",
            low.best_lambda, high.best_lambda
        ),
    );

    // 10.
    let hull_ok = [&half, &one]
        .into_iter()
        .chain(sweep.curves())
        .all(convex_nondecreasing);
    let coarse = NetConfig::new(64, 33, 17, LipschitzMode::Certified).unwrap();
    let mut refine_drop: f64 = 0.0;
    for &l in &[0.5, 1.0] {
        let a = compute_curve::<f64>(l, &coarse, mode).unwrap();
        let b = compute_curve::<f64>(l, &coarse.doubled(), mode).unwrap();
        for (p, q) in a.points.iter().zip(&b.points) {
            refine_drop = refine_drop.max(p.c_qubit - q.c_qubit);
        }
        for (p, q) in a.hull_values().iter().zip(b.hull_values()) {
            refine_drop = refine_drop.max(p - q);
        }
    }
    for &s in &[2.3, 2.6] {
        let a = half
            .points
            .iter()
            .min_by(|p, q| (p.s - s).abs().total_cmp(&(q.s - s).abs()))
            .unwrap();
        let b = qubit_bound_at::<f64>(a.s, 0.5, &net.doubled()).unwrap();
        refine_drop = refine_drop.max(a.c_qubit - b.c_qubit);
    }
    r.line(
        10,
        Some(hull_ok && refine_drop <= 1e-9),
        format!(
            "hulls convex and nondecreasing: {hull_ok}; largest decrease after doubling the nets {:.2e} (≤ 1e-9)",
            refine_drop.max(0.0)
        ),
    );

    // 11.
    let cfg = ProtocolConfig::<f64>::new(200_000, 0.5, 0.95, 2.7, 2024);
    let run = run_protocol(&cfg, &half).expect("protocol run");
    let predicted = predicted_rate(&cfg, &half);
    let rel = (run.result.empirical_rate - predicted).abs() / predicted;
    let trials = 100;
    let aborted = (0..trials)
        .filter(|&k| {
            let cfg = ProtocolConfig::<f64>::new(200_000, 0.5, 0.95, 2.7, 1000 + k)
                .with_state(werner_state(0.7).unwrap());
            run_protocol(&cfg, &half).unwrap().result.aborted
        })
        .count();
    let abort_rate = aborted as f64 / trials as f64;
    r.line(
        11,
        Some(!run.result.aborted && rel <= 0.1 && abort_rate >= 0.99),
        format!(
            "singlet, N = 2e5: rate {:.5} vs predicted {predicted:.5} ({:.1}% off, ≤ 10%); werner(0.7) aborted {aborted}/{trials}",
            run.result.empirical_rate,
            100.0 * rel
        ),
    );

    // 12.
    match std::env::var_os("DIQKD_EXPERIMENTS") {
        None => r.line(
            12,
            None,
            "set DIQKD_EXPERIMENTS to an experiment CSV to run".into(),
        ),
        Some(path) => {
            let table =
                diqkd::io::load_experiments(std::path::Path::new(&path)).expect("experiment file");
            let bank = CurveBank::compute(&lambda_grid(), &net, mode).expect("λ sweep");
            let expected = [(1, 0.004), (2, 0.118), (7, 0.057), (8, 0.019)];
            let mut ok = table.row_errors.is_empty();
            let mut found = Vec::new();
            for (rec, rate) in table
                .records
                .iter()
                .zip(evaluate_experiments(&table.records, &bank))
            {
                let Some(k) = experiment_number(&rec.label) else {
                    continue;
                };
                let Ok(rate) = rate else {
                    ok = false;
                    continue;
                };
                let want = expected
                    .iter()
                    .find(|e| e.0 == k)
                    .map(|e| e.1)
                    .unwrap_or(0.0);
                if (3..=6).contains(&k) {
                    ok &= rate.rate == 0.0;
                } else {
                    ok &= (rate.rate - want).abs() <= 0.005;
                }
                found.push(format!("({k}) {:.4}", rate.rate));
            }
            ok &= found.len() == 8;
            r.line(
                12,
                Some(ok),
                format!(
                    "rates {} against 0.004, 0.118, 0, 0, 0, 0, 0.057, 0.019",
                    found.join(", ")
                ),
            );
        }
    }

    if r.failed > 0 {
        eprintln!("{} criteria failed", r.failed);
        std::process::exit(1);
    }
}

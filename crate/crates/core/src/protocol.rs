//! Monte-Carlo run of the two-basis protocol with honest devices.
//!
//! Every random draw comes from a ChaCha stream addressed by the run seed,
//! a purpose tag and the round index, so rounds can be sampled in any order
//! and a run is reproducible bit for bit.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Serialize, Serializer};

use crate::bound::hull::BoundCurve;
use crate::entropy::h2;
use crate::error::{check_range, Error, Result};
use crate::keyrate::{lambda_from_p, sifting_probability};
use crate::quantum::{kron, qber, DensityMatrix, MeasurementFrame};
use crate::scalar::{tsirelson, Real};

const STREAM_INPUTS: u64 = 1;
const STREAM_OUTCOMES: u64 = 2;
const STREAM_HASH: u64 = 3;
const STREAM_TOEPLITZ: u64 = 4;
const WORDS_PER_ROUND: u128 = 16;

fn stream_rng(seed: u64, stream: u64, offset: u128) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.set_word_pos(offset);
    rng
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ProtocolConfig<T: Real> {
    pub n: usize,
    /// `P(X = 0)`.
    pub p: T,
    /// Probability of a key-type round on Bob's side.
    pub q: T,
    #[serde(skip)]
    pub state: DensityMatrix<T>,
    #[serde(skip)]
    pub frame: MeasurementFrame<T>,
    pub s_tol: T,
    pub ec_efficiency: T,
    pub verify_bits: u32,
    pub seed: u64,
}

impl<T: Real> ProtocolConfig<T> {
    /// Singlet in the default frame, `ecEfficiency = 1.1`, 64 verification bits.
    pub fn new(n: usize, p: T, q: T, s_tol: T, seed: u64) -> Self {
        Self {
            n,
            p,
            q,
            state: DensityMatrix::singlet(),
            frame: MeasurementFrame::simulation_default(),
            s_tol,
            ec_efficiency: T::lit(1.1),
            verify_bits: 64,
            seed,
        }
    }

    pub fn with_state(mut self, state: DensityMatrix<T>) -> Self {
        self.state = state;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Invalid("n must be at least 1".into()));
        }
        check_range("p", self.p.as_f64(), 0.0, 1.0, "[0, 1]")?;
        check_range("q", self.q.as_f64(), 0.0, 1.0, "[0, 1]")?;
        check_range(
            "sTol",
            self.s_tol.as_f64(),
            2.0,
            tsirelson::<f64>() + 1e-6,
            "[2, 2√2]",
        )?;
        check_range(
            "ecEfficiency",
            self.ec_efficiency.as_f64(),
            1.0,
            f64::MAX,
            "[1, ∞)",
        )?;
        if self.verify_bits == 0 || self.verify_bits > 64 {
            return Err(Error::Invalid(format!(
                "verifyBits must be in 1..=64, got {}",
                self.verify_bits
            )));
        }
        Ok(())
    }

    pub fn lambda(&self) -> T {
        self.p * self.p / sifting_probability(self.p)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct RoundRecord {
    pub round: u64,
    pub x: u8,
    pub y: u8,
    pub a: u8,
    pub b: u8,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum KeptAs {
    Key,
    Pe,
    Discarded,
}

impl KeptAs {
    pub fn of(r: &RoundRecord) -> Self {
        match r.y {
            0 | 1 if r.x == r.y => KeptAs::Key,
            0 | 1 => KeptAs::Discarded,
            _ => KeptAs::Pe,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            KeptAs::Key => "key",
            KeptAs::Pe => "pe",
            KeptAs::Discarded => "discarded",
        }
    }
}

/// Input distributions and Born probabilities of one configuration.
pub struct Sampler {
    seed: u64,
    p: f64,
    q: f64,
    /// `P(a, b | x, y)` indexed `[x][y][2a + b]`.
    born: [[[f64; 4]; 4]; 2],
}

impl Sampler {
    pub fn new<T: Real>(cfg: &ProtocolConfig<T>) -> Self {
        let mut born = [[[0.0; 4]; 4]; 2];
        for (x, row) in born.iter_mut().enumerate() {
            for (y, cell) in row.iter_mut().enumerate() {
                let ax = cfg.frame.alice(x as u8);
                let by = cfg.frame.bob(y as u8);
                for a in 0..2u8 {
                    for b in 0..2u8 {
                        let proj = kron(&ax.projector(a), &by.projector(b));
                        let pr = (cfg.state.matrix() * proj).trace().re.as_f64();
                        cell[(2 * a + b) as usize] = pr.max(0.0);
                    }
                }
                let total: f64 = cell.iter().sum();
                cell.iter_mut().for_each(|v| *v /= total);
            }
        }
        Self {
            seed: cfg.seed,
            p: cfg.p.as_f64(),
            q: cfg.q.as_f64(),
            born,
        }
    }

    pub fn sample(&self, round: u64) -> RoundRecord {
        let mut inputs = stream_rng(self.seed, STREAM_INPUTS, round as u128 * WORDS_PER_ROUND);
        let x = u8::from(inputs.gen::<f64>() >= self.p);
        let u: f64 = inputs.gen();
        let (kp, kq) = (self.q * self.p, self.q);
        let y = if u < kp {
            0
        } else if u < kq {
            1
        } else if u < kq + (1.0 - self.q) / 2.0 {
            2
        } else {
            3
        };
        let mut outcomes = stream_rng(self.seed, STREAM_OUTCOMES, round as u128 * WORDS_PER_ROUND);
        let v: f64 = outcomes.gen();
        let dist = &self.born[x as usize][y as usize];
        let mut acc = 0.0;
        let mut k = 3;
        for (i, &pr) in dist.iter().enumerate() {
            acc += pr;
            if v < acc {
                k = i;
                break;
            }
        }
        RoundRecord {
            round,
            x,
            y,
            a: (k / 2) as u8,
            b: (k % 2) as u8,
        }
    }
}

/// One round, drawn from the configuration's seeded streams.
pub fn sample_round<T: Real>(cfg: &ProtocolConfig<T>, round: u64) -> RoundRecord {
    Sampler::new(cfg).sample(round)
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Sifted {
    pub raw_a: Vec<u8>,
    pub raw_b: Vec<u8>,
    /// Basis `x = y` of each raw key bit.
    pub bases: Vec<u8>,
    pub pe: Vec<RoundRecord>,
}

pub fn sift(records: &[RoundRecord]) -> Sifted {
    let mut out = Sifted::default();
    for r in records {
        match KeptAs::of(r) {
            KeptAs::Key => {
                out.raw_a.push(r.a);
                out.raw_b.push(r.b);
                out.bases.push(r.x);
            }
            KeptAs::Pe => out.pe.push(*r),
            KeptAs::Discarded => {}
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub enum AbortReason {
    #[serde(rename = "insufficient statistics")]
    InsufficientStatistics,
    #[serde(rename = "CHSH below threshold")]
    BelowThreshold,
    #[serde(rename = "EC failure")]
    EcFailure,
}

impl std::fmt::Display for AbortReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            AbortReason::InsufficientStatistics => "insufficient statistics",
            AbortReason::BelowThreshold => "CHSH below threshold",
            AbortReason::EcFailure => "EC failure",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ChshEstimate {
    /// `C_xy` for `x ∈ {0, 1}`, `y ∈ {2, 3}`.
    pub correlators: [[f64; 2]; 2],
    pub counts: [[usize; 2]; 2],
    pub raw: f64,
    /// `max{2, raw}`.
    pub s_hat: f64,
}

/// Plug-in estimate `max{2, C₁₂ − C₀₂ − C₀₃ − C₁₃}`.
pub fn estimate_chsh(pe: &[RoundRecord]) -> std::result::Result<ChshEstimate, AbortReason> {
    let mut counts = [[0usize; 2]; 2];
    let mut sums = [[0i64; 2]; 2];
    for r in pe.iter().filter(|r| r.y >= 2 && r.x < 2) {
        let (i, j) = (r.x as usize, (r.y - 2) as usize);
        counts[i][j] += 1;
        sums[i][j] += if r.a == r.b { 1 } else { -1 };
    }
    if counts.iter().flatten().any(|&n| n == 0) {
        return Err(AbortReason::InsufficientStatistics);
    }
    let mut c = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            c[i][j] = sums[i][j] as f64 / counts[i][j] as f64;
        }
    }
    let raw = c[1][0] - c[0][0] - c[0][1] - c[1][1];
    Ok(ChshEstimate {
        correlators: c,
        counts,
        raw,
        s_hat: raw.max(2.0),
    })
}

/// Multiplication in GF(2⁶⁴) modulo `x⁶⁴ + x⁴ + x³ + x + 1`.
fn gf_mul(a: u64, b: u64) -> u64 {
    let mut r: u128 = 0;
    for i in 0..64 {
        if (b >> i) & 1 == 1 {
            r ^= (a as u128) << i;
        }
    }
    for i in (64..128).rev() {
        if (r >> i) & 1 == 1 {
            r ^= (1u128 << i) | (0x1bu128 << (i - 64));
        }
    }
    r as u64
}

fn pack(bits: &[u8]) -> Vec<u64> {
    bits.chunks(64)
        .map(|c| {
            c.iter()
                .enumerate()
                .fold(0u64, |w, (i, &b)| w | (u64::from(b & 1) << i))
        })
        .collect()
}

/// Polynomial hash of a bit string at point `r`, truncated to `bits` bits.
/// Distinct strings of `k` words collide with probability at most
/// `(k + 1)/2^bits` over uniform `r`.
pub fn polynomial_hash(bits: &[u8], r: u64, tag_bits: u32) -> u64 {
    let mut h = 0u64;
    for w in pack(bits) {
        h = gf_mul(h ^ w, r);
    }
    h = gf_mul(h ^ bits.len() as u64, r);
    if tag_bits >= 64 {
        h
    } else {
        h & ((1u64 << tag_bits) - 1)
    }
}

fn hash_point(seed: u64) -> u64 {
    let mut rng = stream_rng(seed, STREAM_HASH, 0);
    loop {
        let r: u64 = rng.gen();
        if r != 0 {
            return r;
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct EcOutcome {
    #[serde(skip)]
    pub corrected_b: Vec<u8>,
    /// Syndrome bits revealed, excluding the verification tag.
    pub leak_ec: u64,
    pub verified: bool,
    pub tag_a: u64,
    pub tag_b: u64,
}

/// Leak-accounted reconciliation followed by hash verification.
///
/// The syndrome for basis `x` is sized for `n_x·h(q_x)` bits times the
/// efficiency; the decoder recovers Alice's bits in a basis exactly when
/// the actual number of errors there is at most `q_x·n_x`.
pub fn error_correct_and_verify<T: Real>(
    raw_a: &[u8],
    raw_b: &[u8],
    bases: &[u8],
    q_est: (T, T),
    cfg: &ProtocolConfig<T>,
) -> Result<EcOutcome> {
    if raw_a.len() != raw_b.len() || raw_a.len() != bases.len() {
        return Err(Error::Invalid(
            "raw keys and bases must have equal lengths".into(),
        ));
    }
    let q = [q_est.0.as_f64(), q_est.1.as_f64()];
    let mut n = [0usize; 2];
    let mut errors = [0usize; 2];
    for ((&a, &b), &x) in raw_a.iter().zip(raw_b).zip(bases) {
        let x = usize::from(x & 1);
        n[x] += 1;
        errors[x] += usize::from(a != b);
    }
    let eff = cfg.ec_efficiency.as_f64();
    let leak = eff * (n[0] as f64 * h2(q[0]) + n[1] as f64 * h2(q[1]));
    let leak_ec = (leak - 1e-9).ceil().max(0.0) as u64;
    let decoded = [0, 1].map(|x| errors[x] as f64 <= q[x] * n[x] as f64 + 1e-9);
    let corrected_b: Vec<u8> = raw_a
        .iter()
        .zip(raw_b)
        .zip(bases)
        .map(|((&a, &b), &x)| if decoded[usize::from(x & 1)] { a } else { b })
        .collect();
    let r = hash_point(cfg.seed);
    let tag_a = polynomial_hash(raw_a, r, cfg.verify_bits);
    let tag_b = polynomial_hash(&corrected_b, r, cfg.verify_bits);
    Ok(EcOutcome {
        corrected_b,
        leak_ec,
        verified: tag_a == tag_b,
        tag_a,
        tag_b,
    })
}

/// `⌊n·(C* − λ̂h(q̂₀₀) − (1−λ̂)h(q̂₁₁))⌋ − verifyBits`, at least 0.
pub fn final_key_length(
    n_key: usize,
    lambda_hat: f64,
    q_hat: (f64, f64),
    c_star: f64,
    verify_bits: u32,
) -> usize {
    let r = c_star - lambda_hat * h2(q_hat.0) - (1.0 - lambda_hat) * h2(q_hat.1);
    let l = (n_key as f64 * r).floor() - f64::from(verify_bits);
    if l > 0.0 {
        l as usize
    } else {
        0
    }
}

/// Toeplitz hash of `key` to `length` bits, seeded by the run seed.
pub fn privacy_amplify(key: &[u8], length: usize, seed: u64) -> Vec<u8> {
    let n = key.len();
    if length == 0 || n == 0 {
        return Vec::new();
    }
    let length = length.min(n);
    let mut rng = stream_rng(seed, STREAM_TOEPLITZ, 0);
    let total = n + length - 1;
    let mut diag: Vec<u64> = (0..total.div_ceil(64) + 1).map(|_| rng.gen()).collect();
    let tail = total % 64;
    if tail != 0 {
        let last = total / 64;
        diag[last] &= (1u64 << tail) - 1;
        diag[last + 1] = 0;
    } else {
        let last = diag.len() - 1;
        diag[last] = 0;
    }
    // Row i of T is t[i + n − 1 − j]; reversing the key turns each row into
    // the contiguous window t[i .. i + n].
    let rev: Vec<u8> = key.iter().rev().copied().collect();
    let kw = pack(&rev);
    (0..length)
        .into_par_iter()
        .map(|i| {
            let (base, shift) = (i / 64, (i % 64) as u32);
            let mut acc = 0u64;
            for (w, &k) in kw.iter().enumerate() {
                let lo = diag[base + w] >> shift;
                let hi = if shift == 0 {
                    0
                } else {
                    diag.get(base + w + 1).copied().unwrap_or(0) << (64 - shift)
                };
                acc ^= (lo | hi) & k;
            }
            (acc.count_ones() & 1) as u8
        })
        .collect()
}

fn bit_string<S: Serializer>(bits: &[u8], s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(
        &bits
            .iter()
            .map(|&b| if b == 1 { '1' } else { '0' })
            .collect::<String>(),
    )
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ProtocolResult {
    pub n: usize,
    pub raw_key_length: usize,
    pub pe_count: usize,
    pub s_hat: Option<f64>,
    pub s_raw: Option<f64>,
    pub aborted: bool,
    pub abort_reason: Option<AbortReason>,
    pub lambda_hat: f64,
    pub q_hat00: f64,
    pub q_hat11: f64,
    pub leak_ec: u64,
    pub verify_bits: u32,
    pub c_star: f64,
    pub key_length: usize,
    #[serde(serialize_with = "bit_string")]
    pub final_key_a: Vec<u8>,
    #[serde(serialize_with = "bit_string")]
    pub final_key_b: Vec<u8>,
    pub empirical_rate: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProtocolRun {
    pub result: ProtocolResult,
    pub transcript: Vec<RoundRecord>,
}

fn curve_matches<T: Real>(curve: &BoundCurve<T>, lambda: f64) -> bool {
    let l = curve.lambda.as_f64();
    (l - lambda).abs() < 1e-9 || (1.0 - l - lambda).abs() < 1e-9
}

/// All five protocol steps; `curve` supplies `C*` for the run's `λ`.
pub fn run_protocol<T: Real>(
    cfg: &ProtocolConfig<T>,
    curve: &BoundCurve<T>,
) -> Result<ProtocolRun> {
    cfg.validate()?;
    let lambda = lambda_from_p(cfg.p)?.as_f64();
    if !curve_matches(curve, lambda) {
        return Err(Error::Invalid(format!(
            "bound curve is for λ = {}, the run needs λ = {lambda}",
            curve.lambda
        )));
    }
    let sampler = Sampler::new(cfg);
    let transcript: Vec<RoundRecord> = (0..cfg.n as u64)
        .into_par_iter()
        .map(|i| sampler.sample(i))
        .collect();
    let sifted = sift(&transcript);
    let n_key = sifted.raw_a.len();
    let mut n = [0usize; 2];
    let mut errors = [0usize; 2];
    for ((&a, &b), &x) in sifted.raw_a.iter().zip(&sifted.raw_b).zip(&sifted.bases) {
        n[usize::from(x)] += 1;
        errors[usize::from(x)] += usize::from(a != b);
    }
    let rate = |e: usize, k: usize| if k == 0 { 0.0 } else { e as f64 / k as f64 };
    let (q00, q11) = (rate(errors[0], n[0]), rate(errors[1], n[1]));
    let lambda_hat = rate(n[0], n_key);
    let c_star = curve.evaluate(cfg.s_tol).as_f64();
    let mut result = ProtocolResult {
        n: cfg.n,
        raw_key_length: n_key,
        pe_count: sifted.pe.len(),
        s_hat: None,
        s_raw: None,
        aborted: false,
        abort_reason: None,
        lambda_hat,
        q_hat00: q00,
        q_hat11: q11,
        leak_ec: 0,
        verify_bits: cfg.verify_bits,
        c_star,
        key_length: 0,
        final_key_a: Vec::new(),
        final_key_b: Vec::new(),
        empirical_rate: 0.0,
    };
    let abort = |mut r: ProtocolResult, why| {
        r.aborted = true;
        r.abort_reason = Some(why);
        r
    };
    let est = match estimate_chsh(&sifted.pe) {
        Ok(e) => e,
        Err(why) => {
            return Ok(ProtocolRun {
                result: abort(result, why),
                transcript,
            })
        }
    };
    result.s_hat = Some(est.s_hat);
    result.s_raw = Some(est.raw);
    if est.s_hat <= cfg.s_tol.as_f64() {
        return Ok(ProtocolRun {
            result: abort(result, AbortReason::BelowThreshold),
            transcript,
        });
    }
    let ec = error_correct_and_verify(
        &sifted.raw_a,
        &sifted.raw_b,
        &sifted.bases,
        (T::lit(q00), T::lit(q11)),
        cfg,
    )?;
    result.leak_ec = ec.leak_ec;
    if !ec.verified {
        return Ok(ProtocolRun {
            result: abort(result, AbortReason::EcFailure),
            transcript,
        });
    }
    let ell = final_key_length(n_key, lambda_hat, (q00, q11), c_star, cfg.verify_bits);
    result.key_length = ell;
    result.final_key_a = privacy_amplify(&sifted.raw_a, ell, cfg.seed);
    result.final_key_b = privacy_amplify(&ec.corrected_b, ell, cfg.seed);
    result.empirical_rate = result.final_key_a.len() as f64 / cfg.n as f64;
    Ok(ProtocolRun { result, transcript })
}

/// `q·p_s·(C*(S_tol) − λh(Q₀₀) − (1−λ)h(Q₁₁))` with the state's exact QBERs.
pub fn predicted_rate<T: Real>(cfg: &ProtocolConfig<T>, curve: &BoundCurve<T>) -> f64 {
    let lambda = cfg.lambda().as_f64();
    let q00 = qber(&cfg.state, &cfg.frame.alice(0), &cfg.frame.bob(0)).as_f64();
    let q11 = qber(&cfg.state, &cfg.frame.alice(1), &cfg.frame.bob(1)).as_f64();
    let r = curve.evaluate(cfg.s_tol).as_f64() - lambda * h2(q00) - (1.0 - lambda) * h2(q11);
    cfg.q.as_f64() * sifting_probability(cfg.p.as_f64()) * r
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantum::{chsh_value, werner_state};

    fn cfg(n: usize) -> ProtocolConfig<f64> {
        ProtocolConfig::new(n, 0.5, 0.9, 2.5, 17)
    }

    #[test]
    fn gf_arithmetic() {
        assert_eq!(gf_mul(1, 0xdead_beef), 0xdead_beef);
        assert_eq!(gf_mul(0, 12345), 0);
        assert_eq!(gf_mul(1 << 63, 2), 0x1b);
        let (a, b, c) = (
            0x1234_5678_9abc_def0u64,
            0x0fed_cba9_8765_4321u64,
            0xaaaa_5555_0f0f_f0f0u64,
        );
        assert_eq!(gf_mul(a, b), gf_mul(b, a));
        assert_eq!(gf_mul(a, b ^ c), gf_mul(a, b) ^ gf_mul(a, c));
        assert_eq!(gf_mul(gf_mul(a, b), c), gf_mul(a, gf_mul(b, c)));
    }

    #[test]
    fn rounds_are_addressable() {
        let c = cfg(10);
        let s = Sampler::new(&c);
        assert_eq!(s.sample(7), sample_round(&c, 7));
        let other = ProtocolConfig {
            seed: 18,
            ..c.clone()
        };
        let diff = (0..200)
            .filter(|&i| s.sample(i) != sample_round(&other, i))
            .count();
        assert!(diff > 100);
    }

    #[test]
    fn singlet_key_rounds_agree() {
        let c = cfg(20_000);
        let s = Sampler::new(&c);
        for r in (0..20_000).map(|i| s.sample(i)) {
            if KeptAs::of(&r) == KeptAs::Key {
                assert_eq!(r.a, r.b);
            }
        }
    }

    #[test]
    fn sifting_rules() {
        let recs = [
            RoundRecord {
                round: 0,
                x: 0,
                y: 0,
                a: 1,
                b: 1,
            },
            RoundRecord {
                round: 1,
                x: 1,
                y: 0,
                a: 1,
                b: 0,
            },
            RoundRecord {
                round: 2,
                x: 1,
                y: 1,
                a: 0,
                b: 0,
            },
            RoundRecord {
                round: 3,
                x: 0,
                y: 3,
                a: 0,
                b: 1,
            },
        ];
        let s = sift(&recs);
        assert_eq!(s.raw_a, vec![1, 0]);
        assert_eq!(s.bases, vec![0, 1]);
        assert_eq!(s.pe.len(), 1);
        let mut only_key = cfg(2000);
        only_key.q = 1.0;
        let t: Vec<_> = (0..2000).map(|i| sample_round(&only_key, i)).collect();
        assert!(sift(&t).pe.is_empty());
        assert_eq!(
            estimate_chsh(&sift(&t).pe),
            Err(AbortReason::InsufficientStatistics)
        );
    }

    #[test]
    fn chsh_estimate_tracks_state() {
        let c = cfg(200_000).with_state(werner_state(0.85).unwrap());
        let s = Sampler::new(&c);
        let t: Vec<_> = (0..200_000).map(|i| s.sample(i)).collect();
        let est = estimate_chsh(&sift(&t).pe).unwrap();
        let exact = chsh_value(&c.state, &c.frame);
        assert!((exact - 0.85 * 2.0 * 2f64.sqrt()).abs() < 1e-12);
        // Each correlator has variance ≤ 1 over ≈ n(1−q)/4 rounds.
        let sigma = (4.0f64 * 4.0 / (200_000.0 * 0.1)).sqrt();
        assert!(
            (est.raw - exact).abs() < 3.0 * sigma,
            "{} vs {exact}",
            est.raw
        );
        let mixed = cfg(50_000).with_state(DensityMatrix::maximally_mixed());
        let t: Vec<_> = (0..50_000).map(|i| sample_round(&mixed, i)).collect();
        assert_eq!(estimate_chsh(&sift(&t).pe).unwrap().s_hat, 2.0);
    }

    #[test]
    fn leak_accounting() {
        let c = cfg(1);
        let n = 10_000;
        let a: Vec<u8> = (0..n).map(|i| (i % 3 == 0) as u8).collect();
        let bases: Vec<u8> = (0..n).map(|i| (i % 2) as u8).collect();
        let ec = error_correct_and_verify(&a, &a, &bases, (0.0, 0.0), &c).unwrap();
        assert_eq!(ec.leak_ec, 0);
        assert!(ec.verified);
        let ec = error_correct_and_verify(&a, &a, &bases, (0.05, 0.05), &c).unwrap();
        assert_eq!(ec.leak_ec, (1.1 * 10_000.0 * h2(0.05f64)).ceil() as u64);
        assert_eq!(ec.leak_ec, 3151);
    }

    #[test]
    fn flipped_keys_fail_verification() {
        let c = cfg(1);
        let a: Vec<u8> = (0..4096).map(|i| ((i * 7) % 5 == 0) as u8).collect();
        let bases = vec![0u8; a.len()];
        let mut failures = 0;
        for k in 0..200 {
            let mut b = a.clone();
            b[(k * 37) % a.len()] ^= 1;
            b[(k * 101 + 3) % a.len()] ^= 1;
            let ec = error_correct_and_verify(
                &a,
                &b,
                &bases,
                (0.0, 0.0),
                &ProtocolConfig {
                    seed: k as u64,
                    ..c.clone()
                },
            )
            .unwrap();
            failures += usize::from(!ec.verified);
        }
        assert_eq!(failures, 200);
    }

    #[test]
    fn toeplitz_is_linear_and_deterministic() {
        let key: Vec<u8> = (0..1000).map(|i| ((i * i) % 7 < 3) as u8).collect();
        let other: Vec<u8> = (0..1000).map(|i| (i % 5 == 1) as u8).collect();
        let sum: Vec<u8> = key.iter().zip(&other).map(|(a, b)| a ^ b).collect();
        let (ka, kb, ks) = (
            privacy_amplify(&key, 300, 9),
            privacy_amplify(&other, 300, 9),
            privacy_amplify(&sum, 300, 9),
        );
        assert_eq!(ka.len(), 300);
        assert!(ka.iter().zip(&kb).zip(&ks).all(|((a, b), s)| a ^ b == *s));
        assert_eq!(ka, privacy_amplify(&key, 300, 9));
        assert!(privacy_amplify(&key, 0, 9).is_empty());
        // Against the textbook definition.
        let mut rng = stream_rng(9, STREAM_TOEPLITZ, 0);
        let words: Vec<u64> = (0..(1000 + 299usize).div_ceil(64) + 1)
            .map(|_| rng.gen())
            .collect();
        let t = |k: usize| ((words[k / 64] >> (k % 64)) & 1) as u8;
        for i in [0usize, 1, 63, 64, 150, 299] {
            let bit = (0..1000).fold(0u8, |acc, j| acc ^ (t(i + 999 - j) & key[j]));
            assert_eq!(bit, ka[i], "row {i}");
        }
    }

    #[test]
    fn negative_length_gives_empty_key() {
        assert_eq!(final_key_length(1000, 0.5, (0.2, 0.2), 0.3, 64), 0);
        assert_eq!(final_key_length(1000, 0.5, (0.0, 0.0), 1.0, 64), 936);
    }
}

//! Closed-form success and error model.
//!
//! A query key `q` is followed by `K = αM` writes of distinct keys, each
//! landing on `N` of the `M` slots. Under the Poisson approximation one of
//! `q`'s slots survives with probability `e^{-αN}`; every overwritten slot
//! carries a uniformly random `b`-bit checksum. The functions here evaluate
//! the resulting empty-return and return-error probabilities for the
//! single-match policy, plus the numeric helpers built on them.
//!
//! When a parameter set is built from integer counts with
//! [`AnalyticParams::from_counts`], the per-slot overwrite probability uses
//! the exact binomial form `1 - (1 - N/M)^K` instead of the Poisson limit.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalyticError {
    #[error("load factor must be finite and non-negative, got {0}")]
    Alpha(f64),
    #[error("copies must be at least 1")]
    Copies,
    #[error("checksum width {0} bits is outside [1, 64]")]
    ChecksumBits(u32),
    #[error("slot count must be at least the number of copies")]
    Slots,
    #[error("target success {0} is outside the achievable range (0, 1)")]
    Target(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalyticParams {
    alpha: f64,
    copies: u32,
    checksum_bits: u32,
    counts: Option<(u64, u64)>,
}

impl AnalyticParams {
    pub fn new(alpha: f64, copies: u32, checksum_bits: u32) -> Result<Self, AnalyticError> {
        if !alpha.is_finite() || alpha < 0.0 {
            return Err(AnalyticError::Alpha(alpha));
        }
        if copies == 0 {
            return Err(AnalyticError::Copies);
        }
        if !(1..=64).contains(&checksum_bits) {
            return Err(AnalyticError::ChecksumBits(checksum_bits));
        }
        Ok(AnalyticParams {
            alpha,
            copies,
            checksum_bits,
            counts: None,
        })
    }

    /// `K` subsequent distinct-key writes into `M` slots; `α = K / M`.
    pub fn from_counts(
        keys: u64,
        slots: u64,
        copies: u32,
        checksum_bits: u32,
    ) -> Result<Self, AnalyticError> {
        if slots < u64::from(copies.max(1)) {
            return Err(AnalyticError::Slots);
        }
        let mut p = Self::new(keys as f64 / slots as f64, copies, checksum_bits)?;
        p.counts = Some((keys, slots));
        Ok(p)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn copies(&self) -> u32 {
        self.copies
    }

    pub fn checksum_bits(&self) -> u32 {
        self.checksum_bits
    }

    pub fn counts(&self) -> Option<(u64, u64)> {
        self.counts
    }

    /// Probability that one of q's slots has been overwritten.
    fn overwrite(&self) -> f64 {
        let n = f64::from(self.copies);
        match self.counts {
            // 1 - (1 - N/M)^K
            Some((k, m)) => -((k as f64) * (-n / m as f64).ln_1p()).exp_m1(),
            None => -(-self.alpha * n).exp_m1(),
        }
    }

    /// ln(1 - 2^-b)
    fn ln_miss(&self) -> f64 {
        (-(2f64).powi(-(self.checksum_bits as i32))).ln_1p()
    }

    /// (1 - 2^-b)^j
    fn miss_pow(&self, j: u32) -> f64 {
        (f64::from(j) * self.ln_miss()).exp()
    }

    /// 1 - (1 - 2^-b)^j, accurate for tiny 2^-b.
    fn hit_any(&self, j: u32) -> f64 {
        -(f64::from(j) * self.ln_miss()).exp_m1()
    }

    fn hit_prob(&self) -> f64 {
        (2f64).powi(-(self.checksum_bits as i32))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbabilityInterval {
    pub lower: f64,
    pub upper: f64,
}

impl ProbabilityInterval {
    pub fn new(lower: f64, upper: f64) -> Self {
        let lower = lower.clamp(0.0, 1.0);
        let upper = upper.clamp(0.0, 1.0);
        debug_assert!(lower <= upper + 1e-15, "{lower} > {upper}");
        ProbabilityInterval {
            lower,
            upper: upper.max(lower),
        }
    }

    pub fn point(p: f64) -> Self {
        Self::new(p, p)
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lower + self.upper)
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, p: f64) -> bool {
        self.lower <= p && p <= self.upper
    }
}

/// ln C(n, k)
fn ln_choose(n: u32, k: u32) -> f64 {
    let k = k.min(n - k);
    (0..k)
        .map(|i| (f64::from(n - i)).ln() - (f64::from(i + 1)).ln())
        .sum()
}

/// `1 - e^{-αN}`: one particular slot of the query key has been overwritten.
pub fn p_slot_overwritten(params: &AnalyticParams) -> f64 {
    params.overwrite()
}

/// `(1 - e^{-αN})^N (1 - 2^{-b})^N`: every slot was overwritten and none of
/// the overwriting checksums matches.
pub fn p_empty_all_overwritten(params: &AnalyticParams) -> f64 {
    let n = params.copies;
    params.overwrite().powi(n as i32) * params.miss_pow(n)
}

/// Sum over `j = 1..N-1` of `C(N,j) q^j (1-q)^{N-j} (1 - (1-2^{-b})^j)`.
fn partial_overwrite_collision(params: &AnalyticParams) -> f64 {
    let n = params.copies;
    let q = params.overwrite();
    if q <= 0.0 {
        return 0.0;
    }
    let ln_q = q.ln();
    let ln_keep = (-q).ln_1p();
    (1..n)
        .map(|j| {
            let ln_term = ln_choose(n, j) + f64::from(j) * ln_q + f64::from(n - j) * ln_keep;
            ln_term.exp() * params.hit_any(j)
        })
        .sum()
}

/// `N 2^{-b} (1 - 2^{-b})^{N-1}`: exactly one of `N` overwritten slots matches.
fn exactly_one_match(params: &AnalyticParams) -> f64 {
    let n = params.copies;
    f64::from(n) * params.hit_prob() * params.miss_pow(n - 1)
}

/// Empty returns caused by two or more distinct values with the right
/// checksum.
pub fn p_empty_ambiguity_bounds(params: &AnalyticParams) -> ProbabilityInterval {
    let n = params.copies;
    let lower = partial_overwrite_collision(params);
    let two_or_more = (params.hit_any(n) - exactly_one_match(params)).max(0.0);
    let upper = lower + params.overwrite().powi(n as i32) * two_or_more;
    ProbabilityInterval::new(lower, upper)
}

/// Return errors: every slot overwritten and a foreign key supplies the
/// matching checksum.
pub fn p_return_error_bounds(params: &AnalyticParams) -> ProbabilityInterval {
    let n = params.copies;
    let all = params.overwrite().powi(n as i32);
    ProbabilityInterval::new(all * exactly_one_match(params), all * params.hit_any(n))
}

/// Success as one minus the empty-return and error terms.
pub fn p_query_success(params: &AnalyticParams) -> ProbabilityInterval {
    let empty_all = p_empty_all_overwritten(params);
    let amb = p_empty_ambiguity_bounds(params);
    let err = p_return_error_bounds(params);
    ProbabilityInterval::new(
        1.0 - empty_all - amb.upper - err.upper,
        1.0 - empty_all - amb.lower - err.lower,
    )
}

/// Adaptive Simpson quadrature of `f` on `[a, b]` to absolute tolerance `tol`.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    #[allow(clippy::too_many_arguments)]
    fn step<F: Fn(f64) -> f64>(
        f: &F,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
            + step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
    if a == b {
        return 0.0;
    }
    let fa = f(a);
    let fb = f(b);
    let fm = f(0.5 * (a + b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    step(f, a, b, fa, fm, fb, whole, tol, 48)
}

const QUAD_TOL: f64 = 1e-10;

fn success_mid(alpha: f64, copies: u32, checksum_bits: u32) -> f64 {
    AnalyticParams::new(alpha, copies, checksum_bits)
        .map(|p| p_query_success(&p).midpoint())
        .unwrap_or(f64::NAN)
}

/// Mean success over keys whose ages are uniform on `[0, α_max]`.
pub fn avg_success_over_ages(alpha_max: f64, copies: u32, checksum_bits: u32) -> f64 {
    avg_success_between(0.0, alpha_max, copies, checksum_bits)
}

/// Mean success over ages uniform on `[alpha_lo, alpha_hi]`.
pub fn avg_success_between(alpha_lo: f64, alpha_hi: f64, copies: u32, checksum_bits: u32) -> f64 {
    if alpha_hi <= alpha_lo {
        return success_mid(alpha_lo, copies, checksum_bits);
    }
    let f = |x: f64| success_mid(x, copies, checksum_bits);
    adaptive_simpson(&f, alpha_lo, alpha_hi, QUAD_TOL) / (alpha_hi - alpha_lo)
}

/// Interval-valued age average: `f` applied at every age, lower and upper
/// integrated separately over `[alpha_lo, alpha_hi]`.
pub fn avg_interval_between<F>(
    alpha_lo: f64,
    alpha_hi: f64,
    copies: u32,
    checksum_bits: u32,
    f: F,
) -> ProbabilityInterval
where
    F: Fn(&AnalyticParams) -> ProbabilityInterval,
{
    let at = |x: f64| {
        let p = AnalyticParams::new(x, copies, checksum_bits).expect("validated by caller");
        f(&p)
    };
    if alpha_hi <= alpha_lo {
        return at(alpha_lo);
    }
    let span = alpha_hi - alpha_lo;
    let lo = adaptive_simpson(&|x| at(x).lower, alpha_lo, alpha_hi, QUAD_TOL) / span;
    let hi = adaptive_simpson(&|x| at(x).upper, alpha_lo, alpha_hi, QUAD_TOL) / span;
    ProbabilityInterval::new(lo, hi)
}

/// Load `α` at which the success midpoint equals `target_success`.
pub fn invert_alpha_for_success(
    target_success: f64,
    copies: u32,
    checksum_bits: u32,
) -> Result<f64, AnalyticError> {
    AnalyticParams::new(0.0, copies, checksum_bits)?;
    if !(target_success > 0.0 && target_success < 1.0) {
        return Err(AnalyticError::Target(target_success));
    }
    let f = |a: f64| success_mid(a, copies, checksum_bits) - target_success;
    let mut lo = 0.0;
    let mut hi = 1.0;
    while f(hi) > 0.0 {
        lo = hi;
        hi *= 2.0;
        if hi > 1e6 {
            return Err(AnalyticError::Target(target_success));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * hi {
            break;
        }
    }
    let alpha = 0.5 * (lo + hi);
    if f(alpha).abs() >= 1e-9 {
        return Err(AnalyticError::Target(target_success));
    }
    Ok(alpha)
}

/// `N` among `candidates` with the highest age-averaged success at load
/// `alpha`, with that success.
pub fn optimal_copies(alpha: f64, candidates: &[u32], checksum_bits: u32) -> Option<(u32, f64)> {
    candidates
        .iter()
        .map(|&n| (n, avg_success_over_ages(alpha, n, checksum_bits)))
        .fold(None, |best: Option<(u32, f64)>, cur| match best {
            Some(b) if b.1 >= cur.1 => Some(b),
            _ => Some(cur),
        })
}

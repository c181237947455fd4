//! Empirical statistics of one sampled group of binary rewards.
//!
//! Besides the 0/1 rate this computes the unbiased Pass@K estimate
//! `1 - C(N-, K) / C(N, K)` and the two leave-one-out Fail@(K-1) weights used
//! by every unbiased Pass@K gradient estimator. Binomial ratios are evaluated
//! as running products of `(a - j) / (b - j)` factors, so nothing overflows
//! and the combinatorial zeros (`C(a, b) = 0` for `a < b`) come out exact.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The N binary rewards of one sampled group.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RewardBatch(Vec<u8>);

impl RewardBatch {
    pub fn new(rewards: Vec<u8>) -> Result<Self> {
        if rewards.is_empty() {
            return Err(Error::invalid("reward batch must be nonempty"));
        }
        if let Some(bad) = rewards.iter().find(|&&r| r > 1) {
            return Err(Error::invalid(format!("reward {bad} is not 0 or 1")));
        }
        Ok(Self(rewards))
    }

    pub fn from_bools(correct: &[bool]) -> Result<Self> {
        Self::new(correct.iter().map(|&c| u8::from(c)).collect())
    }

    pub fn rewards(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_correct(&self, i: usize) -> bool {
        self.0[i] == 1
    }
}

/// Counts and 0/1 rate of a group.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub n: usize,
    pub n_plus: usize,
    pub n_minus: usize,
    pub rho_hat: f64,
}

/// K-dependent quantities of a group.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PassKStats {
    pub k: usize,
    pub pass_k_hat: f64,
    pub f_plus: f64,
    pub f_minus: f64,
}

impl GroupStats {
    /// Builds stats from counts. `n_plus` may not exceed `n`.
    pub fn new(n: usize, n_plus: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("group size must be at least 1"));
        }
        if n_plus > n {
            return Err(Error::invalid(format!("n_plus={n_plus} exceeds n={n}")));
        }
        Ok(Self {
            n,
            n_plus,
            n_minus: n - n_plus,
            rho_hat: n_plus as f64 / n as f64,
        })
    }

    /// True when the group is all-correct or all-wrong.
    pub fn is_degenerate(&self) -> bool {
        self.n_plus == 0 || self.n_minus == 0
    }

    pub fn pass_k(&self, k: usize) -> Result<PassKStats> {
        let pass_k_hat = pass_k_hat(self, k)?;
        let (f_plus, f_minus) = fail_loo_weights(self, k)?;
        Ok(PassKStats {
            k,
            pass_k_hat,
            f_plus,
            f_minus,
        })
    }
}

pub fn summarize(batch: &RewardBatch) -> Result<GroupStats> {
    let n_plus = batch.rewards().iter().filter(|&&r| r == 1).count();
    GroupStats::new(batch.len(), n_plus)
}

fn check_k(stats: &GroupStats, k: usize) -> Result<()> {
    if k < 1 || k > stats.n {
        return Err(Error::invalid(format!(
            "k={k} outside 1..={} (the unbiased estimator needs k <= n)",
            stats.n
        )));
    }
    Ok(())
}

/// `C(a, r) / C(b, r)` for `a <= b`, with `C(a, r) = 0` when `a < r`.
fn binom_ratio(a: usize, b: usize, r: usize) -> f64 {
    if a < r {
        return 0.0;
    }
    (0..r).fold(1.0, |acc, j| acc * (a - j) as f64 / (b - j) as f64)
}

/// Unbiased Pass@K estimate `1 - C(N-, k) / C(N, k)`.
pub fn pass_k_hat(stats: &GroupStats, k: usize) -> Result<f64> {
    check_k(stats, k)?;
    if k == 1 {
        return Ok(stats.rho_hat);
    }
    Ok(1.0 - binom_ratio(stats.n_minus, stats.n, k))
}

/// Leave-one-out Fail@(K-1) estimates for a correct (`f_plus`) and a wrong
/// (`f_minus`) response: `C(N-, k-1) / C(N-1, k-1)` and
/// `C(N- - 1, k-1) / C(N-1, k-1)`.
pub fn fail_loo_weights(stats: &GroupStats, k: usize) -> Result<(f64, f64)> {
    check_k(stats, k)?;
    let r = k - 1;
    let f_plus = binom_ratio(stats.n_minus, stats.n - 1, r);
    let f_minus = match stats.n_minus {
        0 if r == 0 => 1.0,
        0 => 0.0,
        nm => binom_ratio(nm - 1, stats.n - 1, r),
    };
    Ok((f_plus, f_minus))
}

/// Exact rational versions of the estimators, for verification at small n.
pub mod exact {
    use num_bigint::BigInt;
    use num_rational::BigRational;
    use num_traits::{One, Zero};

    /// `C(n, k)` with `C(n, k) = 0` for `n < k` (including negative `n`) and `C(n, 0) = 1`.
    pub fn binom(n: i64, k: i64) -> BigInt {
        if k == 0 {
            return BigInt::one();
        }
        if k < 0 || n < k {
            return BigInt::zero();
        }
        let mut acc = BigInt::one();
        for j in 0..k {
            acc = acc * BigInt::from(n - j) / BigInt::from(j + 1);
        }
        acc
    }

    fn ratio(num: BigInt, den: BigInt) -> BigRational {
        BigRational::new(num, den)
    }

    pub fn rho_hat(n: i64, n_minus: i64) -> BigRational {
        ratio(BigInt::from(n - n_minus), BigInt::from(n))
    }

    pub fn pass_k_hat(n: i64, n_minus: i64, k: i64) -> BigRational {
        BigRational::one() - ratio(binom(n_minus, k), binom(n, k))
    }

    pub fn f_plus(n: i64, n_minus: i64, k: i64) -> BigRational {
        ratio(binom(n_minus, k - 1), binom(n - 1, k - 1))
    }

    pub fn f_minus(n: i64, n_minus: i64, k: i64) -> BigRational {
        ratio(binom(n_minus - 1, k - 1), binom(n - 1, k - 1))
    }

    pub fn to_f64(r: &BigRational) -> f64 {
        use num_traits::ToPrimitive;
        r.to_f64().unwrap_or(f64::NAN)
    }
}

//! Advantage scores and effective gradient weights for every estimator.
//!
//! With binary rewards each algorithm hands out one score to correct
//! responses (`a_plus`) and one to wrong responses (`a_minus`), so the group
//! gradient `(1/N) sum_i A_i grad_i` collapses to
//! `w_plus * mean_grad_correct - w_minus * mean_grad_wrong` with
//! `w_plus = rho_hat * a_plus` and `w_minus = -(1 - rho_hat) * a_minus`.
//!
//! Constant factors that are common to every example are dropped as in the
//! usual presentation: `N/(N-1)` for the leave-one-out family and `K` for the
//! unbiased Pass@K family. [`AlgorithmId::dropped_constant`] gives the factor
//! needed to turn the returned scores back into an unbiased estimate.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::reward_stats::{fail_loo_weights, pass_k_hat, summarize, GroupStats, RewardBatch};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[repr(u32)]
pub enum AlgorithmKind {
    Reinforce = 0,
    Rloo = 1,
    Grpo = 2,
    SkewR = 3,
    ReinforceK = 4,
    RlooK = 5,
    GrpoK = 6,
    GrpoTilde = 7,
    MixTilde = 8,
    MixDirect = 9,
    BiasedPow = 10,
    BiasedPowRloo = 11,
    EntropyGrpo = 12,
    PositiveCoeff = 13,
}

impl AlgorithmKind {
    pub const ALL: [AlgorithmKind; 14] = [
        AlgorithmKind::Reinforce,
        AlgorithmKind::Rloo,
        AlgorithmKind::Grpo,
        AlgorithmKind::SkewR,
        AlgorithmKind::ReinforceK,
        AlgorithmKind::RlooK,
        AlgorithmKind::GrpoK,
        AlgorithmKind::GrpoTilde,
        AlgorithmKind::MixTilde,
        AlgorithmKind::MixDirect,
        AlgorithmKind::BiasedPow,
        AlgorithmKind::BiasedPowRloo,
        AlgorithmKind::EntropyGrpo,
        AlgorithmKind::PositiveCoeff,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AlgorithmKind::Reinforce => "reinforce",
            AlgorithmKind::Rloo => "rloo",
            AlgorithmKind::Grpo => "grpo",
            AlgorithmKind::SkewR => "skew_r",
            AlgorithmKind::ReinforceK => "reinforce_k",
            AlgorithmKind::RlooK => "rloo_k",
            AlgorithmKind::GrpoK => "grpo_k",
            AlgorithmKind::GrpoTilde => "grpo_tilde",
            AlgorithmKind::MixTilde => "mix_tilde",
            AlgorithmKind::MixDirect => "mix_direct",
            AlgorithmKind::BiasedPow => "biased_pow",
            AlgorithmKind::BiasedPowRloo => "biased_pow_rloo",
            AlgorithmKind::EntropyGrpo => "entropy_grpo",
            AlgorithmKind::PositiveCoeff => "positive_coeff",
        }
    }

    pub fn from_code(code: u32) -> Option<Self> {
        Self::ALL.get(code as usize).copied()
    }

    /// Uses the `k` parameter.
    pub fn uses_k(self) -> bool {
        matches!(
            self,
            AlgorithmKind::ReinforceK
                | AlgorithmKind::RlooK
                | AlgorithmKind::GrpoK
                | AlgorithmKind::GrpoTilde
                | AlgorithmKind::MixTilde
                | AlgorithmKind::MixDirect
                | AlgorithmKind::BiasedPow
                | AlgorithmKind::BiasedPowRloo
                | AlgorithmKind::PositiveCoeff
        )
    }

    /// Relies on the combinatorial estimators and therefore needs `k <= n`.
    pub fn needs_k_le_n(self) -> bool {
        self.uses_k() && !matches!(self, AlgorithmKind::BiasedPow | AlgorithmKind::BiasedPowRloo)
    }

    /// Contains the `1/sqrt(rho_hat (1 - rho_hat))` normalisation.
    pub fn is_std_normalized(self) -> bool {
        matches!(
            self,
            AlgorithmKind::Grpo
                | AlgorithmKind::SkewR
                | AlgorithmKind::GrpoK
                | AlgorithmKind::GrpoTilde
                | AlgorithmKind::MixTilde
                | AlgorithmKind::MixDirect
                | AlgorithmKind::BiasedPow
                | AlgorithmKind::EntropyGrpo
        )
    }

    /// Scores sum to zero over every group.
    pub fn is_centered(self) -> bool {
        matches!(
            self,
            AlgorithmKind::Rloo
                | AlgorithmKind::Grpo
                | AlgorithmKind::GrpoTilde
                | AlgorithmKind::SkewR
                | AlgorithmKind::MixTilde
                | AlgorithmKind::BiasedPow
                | AlgorithmKind::BiasedPowRloo
                | AlgorithmKind::EntropyGrpo
        )
    }
}

impl fmt::Display for AlgorithmKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AlgorithmKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| Error::config(format!("unknown algorithm '{s}'")))
    }
}

pub const DEFAULT_ENTROPY_LAMBDA: f64 = 1.0;

/// An algorithm together with its parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlgorithmId {
    pub kind: AlgorithmKind,
    pub k: usize,
    pub lambda: f64,
}

impl AlgorithmId {
    pub fn new(kind: AlgorithmKind, k: usize, lambda: f64) -> Result<Self> {
        if kind.uses_k() && k < 1 {
            return Err(Error::invalid(format!("{kind} needs k >= 1")));
        }
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::invalid(format!("lambda must be finite and >= 0, got {lambda}")));
        }
        Ok(Self {
            kind,
            k: if kind.uses_k() { k } else { 1 },
            lambda,
        })
    }

    /// Algorithms without parameters (or with their defaults).
    pub fn plain(kind: AlgorithmKind) -> Self {
        Self {
            kind,
            k: 1,
            lambda: DEFAULT_ENTROPY_LAMBDA,
        }
    }

    pub fn with_k(kind: AlgorithmKind, k: usize) -> Result<Self> {
        Self::new(kind, k, DEFAULT_ENTROPY_LAMBDA)
    }

    pub fn entropy(lambda: f64) -> Result<Self> {
        Self::new(AlgorithmKind::EntropyGrpo, 1, lambda)
    }

    /// Factor dropped from the scores: `N/(N-1)` for leave-one-out baselines
    /// and `K` for the unbiased Pass@K estimators. Multiplying the expected
    /// gradient by it recovers `grad rho` (K = 1) or `grad rho_K`.
    pub fn dropped_constant(&self, n: usize) -> f64 {
        let loo = n as f64 / (n as f64 - 1.0);
        let k = self.k as f64;
        match self.kind {
            AlgorithmKind::Rloo => loo,
            AlgorithmKind::RlooK => k * loo,
            AlgorithmKind::ReinforceK | AlgorithmKind::PositiveCoeff => k,
            _ => 1.0,
        }
    }

    fn validate_for(&self, stats: &GroupStats) -> Result<()> {
        if self.kind.needs_k_le_n() && self.k > stats.n {
            return Err(Error::invalid(format!(
                "{} with k={} needs k <= n={}",
                self.kind, self.k, stats.n
            )));
        }
        if matches!(self.kind, AlgorithmKind::Rloo | AlgorithmKind::RlooK) && stats.n < 2 {
            return Err(Error::invalid("leave-one-out baselines need n >= 2"));
        }
        Ok(())
    }
}

impl fmt::Display for AlgorithmId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            k if k.uses_k() => write!(f, "{}(k={})", self.kind, self.k),
            AlgorithmKind::EntropyGrpo => write!(f, "{}(lambda={})", self.kind, self.lambda),
            _ => write!(f, "{}", self.kind),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdvantagePair {
    pub a_plus: f64,
    pub a_minus: f64,
}

impl AdvantagePair {
    pub const ZERO: AdvantagePair = AdvantagePair {
        a_plus: 0.0,
        a_minus: 0.0,
    };

    pub fn new(a_plus: f64, a_minus: f64) -> Self {
        Self { a_plus, a_minus }
    }

    pub fn scale(self, c: f64) -> Self {
        Self::new(c * self.a_plus, c * self.a_minus)
    }
}

/// Pair plus a flag set when a normalised family met an all-correct or
/// all-wrong group and returned zeros.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Shaped {
    pub pair: AdvantagePair,
    pub degenerate: bool,
}

impl Shaped {
    fn ok(pair: AdvantagePair) -> Self {
        Self {
            pair,
            degenerate: false,
        }
    }

    fn degenerate() -> Self {
        Self {
            pair: AdvantagePair::ZERO,
            degenerate: true,
        }
    }
}

/// Weights multiplying the mean correct and mean wrong log-prob gradients.
///
/// `w_minus` keeps its sign so that the gradient is always
/// `w_plus * grad_plus - w_minus * grad_minus`; it is negative only for
/// `positive_coeff` and for a sign-flipped entropy bracket.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectiveWeights {
    pub w_plus: f64,
    pub w_minus: f64,
    pub degenerate: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OmegaTilde {
    pub value: f64,
    pub degenerate: bool,
}

/// Vanilla GRPO scores `(sqrt(N-/N+), -sqrt(N+/N-))`; caller handles degenerate groups.
fn grpo_pair(stats: &GroupStats) -> AdvantagePair {
    let (np, nm) = (stats.n_plus as f64, stats.n_minus as f64);
    AdvantagePair::new((nm / np).sqrt(), -(np / nm).sqrt())
}

fn rloo_pair(stats: &GroupStats) -> AdvantagePair {
    AdvantagePair::new(1.0 - stats.rho_hat, -stats.rho_hat)
}

fn omega_value(stats: &GroupStats, k: usize) -> Result<f64> {
    if k == 1 {
        return Ok(1.0);
    }
    let pk = pass_k_hat(stats, k)?;
    let rho = stats.rho_hat;
    Ok(((1.0 - pk) / pk).sqrt() * (rho / (1.0 - rho)).sqrt())
}

/// Symmetric GRPO~ multiplier `sqrt((1-rho_K)/rho_K) * sqrt(rho/(1-rho))`.
pub fn omega_tilde(stats: &GroupStats, k: usize) -> Result<OmegaTilde> {
    pass_k_hat(stats, k)?;
    if stats.is_degenerate() {
        return Ok(OmegaTilde {
            value: 0.0,
            degenerate: true,
        });
    }
    Ok(OmegaTilde {
        value: omega_value(stats, k)?,
        degenerate: false,
    })
}

pub fn advantage_pair(alg: &AlgorithmId, stats: &GroupStats) -> Result<Shaped> {
    use AlgorithmKind::*;

    alg.validate_for(stats)?;
    if alg.kind.is_std_normalized() && stats.is_degenerate() {
        return Ok(Shaped::degenerate());
    }
    let rho = stats.rho_hat;
    let k = alg.k;
    let loo = || fail_loo_weights(stats, k);

    let pair = match alg.kind {
        Reinforce => AdvantagePair::new(1.0, 0.0),
        ReinforceK => AdvantagePair::new(loo()?.0, 0.0),
        Rloo => rloo_pair(stats),
        RlooK => {
            let (fp, fm) = loo()?;
            let base = rloo_pair(stats);
            AdvantagePair::new(fp * base.a_plus, fm * base.a_minus)
        }
        Grpo => grpo_pair(stats),
        SkewR => grpo_pair(stats).scale(1.0 - rho),
        GrpoK => {
            let (fp, fm) = loo()?;
            let base = grpo_pair(stats);
            AdvantagePair::new(fp * base.a_plus, fm * base.a_minus)
        }
        GrpoTilde => grpo_pair(stats).scale(omega_value(stats, k)?),
        MixTilde => {
            let omega = omega_value(stats, k)?;
            grpo_pair(stats).scale(1.0 - rho + rho * omega)
        }
        MixDirect => {
            let (fp, fm) = loo()?;
            let base = grpo_pair(stats);
            AdvantagePair::new(
                (1.0 - rho + rho * fp) * base.a_plus,
                (1.0 - rho + rho * fm) * base.a_minus,
            )
        }
        BiasedPow => grpo_pair(stats).scale((1.0 - rho).powi(k as i32 - 1)),
        BiasedPowRloo => rloo_pair(stats).scale((1.0 - rho).powi(k as i32 - 1)),
        EntropyGrpo => {
            let bracket = 1.0 - alg.lambda * (rho * (1.0 - rho)).sqrt() * (rho / (1.0 - rho)).ln();
            grpo_pair(stats).scale(bracket)
        }
        PositiveCoeff => AdvantagePair::new(1.0, 1.0 - loo()?.1),
    };
    Ok(Shaped::ok(pair))
}

/// Per-response scores plus the degenerate flag of the group.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseAdvantages {
    pub values: Vec<f64>,
    pub degenerate: bool,
}

pub fn per_response_advantages(alg: &AlgorithmId, batch: &RewardBatch) -> Result<ResponseAdvantages> {
    let stats = summarize(batch)?;
    let shaped = advantage_pair(alg, &stats)?;
    let values = batch
        .rewards()
        .iter()
        .map(|&r| {
            if r == 1 {
                shaped.pair.a_plus
            } else {
                shaped.pair.a_minus
            }
        })
        .collect();
    Ok(ResponseAdvantages {
        values,
        degenerate: shaped.degenerate,
    })
}

pub fn weights_from_pair(shaped: &Shaped, rho_hat: f64) -> EffectiveWeights {
    EffectiveWeights {
        w_plus: rho_hat * shaped.pair.a_plus,
        w_minus: -(1.0 - rho_hat) * shaped.pair.a_minus,
        degenerate: shaped.degenerate,
    }
}

pub fn effective_weights(alg: &AlgorithmId, stats: &GroupStats) -> Result<EffectiveWeights> {
    let shaped = advantage_pair(alg, stats)?;
    Ok(weights_from_pair(&shaped, stats.rho_hat))
}

#[cfg(test)]
mod tests {
    use super::*;
    use AlgorithmKind::*;

    fn stats(n: usize, n_plus: usize) -> GroupStats {
        GroupStats::new(n, n_plus).unwrap()
    }

    fn pair(kind: AlgorithmKind, k: usize, s: &GroupStats) -> AdvantagePair {
        advantage_pair(&AlgorithmId::with_k(kind, k).unwrap(), s).unwrap().pair
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn ids_round_trip_and_codes() {
        for kind in AlgorithmKind::ALL {
            assert_eq!(kind.as_str().parse::<AlgorithmKind>().unwrap(), kind);
            assert_eq!(AlgorithmKind::from_code(kind as u32), Some(kind));
            let json = serde_json::to_string(&kind).unwrap();
            assert_eq!(json, format!("\"{}\"", kind.as_str()));
        }
        assert!("grpo_x".parse::<AlgorithmKind>().is_err());
        assert!(AlgorithmId::new(GrpoK, 0, 1.0).is_err());
        assert!(AlgorithmId::new(EntropyGrpo, 1, -1.0).is_err());
    }

    #[test]
    fn grpo_symmetric_group() {
        let p = pair(Grpo, 1, &stats(4, 2));
        assert_eq!((p.a_plus, p.a_minus), (1.0, -1.0));
    }

    #[test]
    fn rloo_matches_leave_one_out_enumeration() {
        // direct r_i - mean(others) on [1,1,0,0]
        let r = [1.0, 1.0, 0.0, 0.0];
        let loo: Vec<f64> = (0..4).map(|i| r[i] - (r.iter().sum::<f64>() - r[i]) / 3.0).collect();
        assert!(close(loo[0], 2.0 / 3.0, 1e-15) && close(loo[3], -2.0 / 3.0, 1e-15));

        let alg = AlgorithmId::plain(Rloo);
        let p = advantage_pair(&alg, &stats(4, 2)).unwrap().pair;
        let c = alg.dropped_constant(4);
        assert!(close(c * p.a_plus, loo[0], 1e-15));
        assert!(close(c * p.a_minus, loo[3], 1e-15));
    }

    #[test]
    fn grpo_k_example() {
        let p = pair(GrpoK, 2, &stats(4, 2));
        assert!(close(p.a_plus, 2.0 / 3.0, 1e-15));
        assert!(close(p.a_minus, -1.0 / 3.0, 1e-15));
    }

    #[test]
    fn k_one_collapse() {
        for n in 2..=16 {
            for np in 1..n {
                let s = stats(n, np);
                let g = pair(Grpo, 1, &s);
                assert_eq!(pair(GrpoTilde, 1, &s), g);
                assert_eq!(pair(GrpoK, 1, &s), g);
                assert_eq!(pair(BiasedPow, 1, &s), g);
                assert_eq!(pair(RlooK, 1, &s), pair(Rloo, 1, &s));
                assert_eq!(pair(BiasedPowRloo, 1, &s), pair(Rloo, 1, &s));
                assert_eq!(omega_tilde(&s, 1).unwrap().value, 1.0);
            }
        }
    }

    #[test]
    fn entropy_bracket_vanishes_at_half() {
        for lambda in [0.0, 0.5, 1.0, 3.0, 10.0] {
            let alg = AlgorithmId::entropy(lambda).unwrap();
            let p = advantage_pair(&alg, &stats(8, 4)).unwrap().pair;
            assert_eq!(p, pair(Grpo, 1, &stats(8, 4)));
        }
    }

    #[test]
    fn entropy_bracket_is_not_clamped() {
        let alg = AlgorithmId::entropy(10.0).unwrap();
        let p = advantage_pair(&alg, &stats(16, 15)).unwrap().pair;
        assert!(p.a_plus < 0.0 && p.a_minus > 0.0);
    }

    #[test]
    fn reinforce_and_reinforce_k_per_response() {
        let batch = RewardBatch::new(vec![1, 1, 0]).unwrap();
        let a = per_response_advantages(&AlgorithmId::plain(Reinforce), &batch).unwrap();
        assert_eq!(a.values, vec![1.0, 1.0, 0.0]);

        // k=2 on [1,0,0,0]: the other three responses are all wrong, so the
        // leave-one-out Fail@1 of the correct response is 3/3 = 1.
        let batch = RewardBatch::new(vec![1, 0, 0, 0]).unwrap();
        let alg = AlgorithmId::with_k(ReinforceK, 2).unwrap();
        let a = per_response_advantages(&alg, &batch).unwrap();
        assert_eq!(a.values, vec![1.0, 0.0, 0.0, 0.0]);

        let a = per_response_advantages(&AlgorithmId::plain(Grpo), &RewardBatch::new(vec![1, 0]).unwrap()).unwrap();
        assert_eq!(a.values, vec![1.0, -1.0]);
    }

    #[test]
    fn effective_weight_examples() {
        let w = effective_weights(&AlgorithmId::plain(Grpo), &stats(4, 2)).unwrap();
        assert_eq!((w.w_plus, w.w_minus), (0.5, 0.5));

        let w = effective_weights(&AlgorithmId::with_k(GrpoK, 4).unwrap(), &stats(16, 14)).unwrap();
        assert_eq!((w.w_plus, w.w_minus), (0.0, 0.0));

        // rho_hat = 1/4: rho(1-rho) = 3/16 on both sides
        let w = effective_weights(&AlgorithmId::plain(Rloo), &stats(8, 2)).unwrap();
        assert!(close(w.w_plus, 3.0 / 16.0, 1e-15) && close(w.w_minus, 3.0 / 16.0, 1e-15));
    }

    #[test]
    fn degenerate_groups_give_flagged_zeros() {
        for kind in AlgorithmKind::ALL.into_iter().filter(|k| k.is_std_normalized()) {
            for np in [0, 8] {
                let alg = AlgorithmId::with_k(kind, 3).unwrap();
                let s = advantage_pair(&alg, &stats(8, np)).unwrap();
                assert!(s.degenerate, "{kind}");
                assert_eq!(s.pair, AdvantagePair::ZERO);
            }
        }
        let o = omega_tilde(&stats(8, 0), 3).unwrap();
        assert!(o.degenerate && o.value == 0.0);
    }

    #[test]
    fn omega_saturates_to_zero() {
        // n_minus = 2 < k = 4 so rho_hat_K = 1
        let o = omega_tilde(&stats(16, 14), 4).unwrap();
        assert_eq!(o.value, 0.0);
        assert!(!o.degenerate);
    }

    #[test]
    fn omega_example_n16_k4() {
        // 1 - rho_K = C(8,4)/C(16,4) = 70/1820 = 1/26
        let one_minus: f64 = 70.0 / 1820.0;
        let expected = (one_minus / (1.0 - one_minus)).sqrt();
        let o = omega_tilde(&stats(16, 8), 4).unwrap();
        assert!(close(o.value, expected, 1e-14));
    }

    #[test]
    fn unbiased_families_reject_k_above_n() {
        for kind in [ReinforceK, RlooK, GrpoK, GrpoTilde, MixTilde, MixDirect, PositiveCoeff] {
            let alg = AlgorithmId::with_k(kind, 5).unwrap();
            assert!(advantage_pair(&alg, &stats(4, 2)).is_err(), "{kind}");
        }
        let alg = AlgorithmId::with_k(BiasedPow, 9).unwrap();
        let p = advantage_pair(&alg, &stats(4, 2)).unwrap().pair;
        assert!(close(p.a_plus, 0.5f64.powi(8), 1e-15));
    }

    #[test]
    fn positive_coeff_wrong_coefficient() {
        for n in 1..=12 {
            for np in 0..=n {
                let s = stats(n, np);
                for k in 1..=n {
                    let p = pair(PositiveCoeff, k, &s);
                    assert_eq!(p.a_plus, 1.0);
                    assert!((0.0..=1.0).contains(&p.a_minus));
                    if k == 1 {
                        assert_eq!(p.a_minus, 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn pass_k_families_upweight_correct_side() {
        for n in 2..=20 {
            for np in 1..n {
                let s = stats(n, np);
                for k in 1..=n {
                    for kind in [GrpoK, RlooK] {
                        let w = effective_weights(&AlgorithmId::with_k(kind, k).unwrap(), &s).unwrap();
                        assert!(w.w_plus >= w.w_minus - 1e-15, "{kind} n={n} np={np} k={k}");
                        // hard zeros
                        if s.n_minus + 1 < k {
                            assert_eq!(w.w_plus, 0.0);
                        }
                        if s.n_minus < k {
                            assert_eq!(w.w_minus, 0.0);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn grpo_tilde_simplified_weights() {
        for n in 2..=32 {
            for np in 1..n {
                let s = stats(n, np);
                for k in 1..=n {
                    let w = effective_weights(&AlgorithmId::with_k(GrpoTilde, k).unwrap(), &s).unwrap();
                    let pk = pass_k_hat(&s, k).unwrap();
                    let target = ((1.0 - pk) / pk).sqrt() * s.rho_hat;
                    assert!(close(w.w_plus, target, 1e-12));
                    assert!(close(w.w_minus, target, 1e-12));
                }
            }
        }
    }

    #[test]
    fn mixture_envelope() {
        let n = 16;
        for k in 2..=n {
            for np in 1..n {
                let s = stats(n, np);
                if s.n_minus + 1 < k {
                    let mix = pair(MixDirect, k, &s);
                    let envelope = pair(Grpo, 1, &s).scale(1.0 - s.rho_hat);
                    assert_eq!(mix, envelope);
                }
            }
        }
    }

    #[test]
    fn skew_r_approaches_grpo_k2() {
        for n in [64usize, 256, 1024] {
            let mut max_gap = 0.0f64;
            for np in 1..n {
                let s = stats(n, np);
                let a = effective_weights(&AlgorithmId::with_k(GrpoK, 2).unwrap(), &s).unwrap();
                let b = effective_weights(&AlgorithmId::plain(SkewR), &s).unwrap();
                max_gap = max_gap
                    .max((a.w_plus - b.w_plus).abs())
                    .max((a.w_minus - b.w_minus).abs());
            }
            // both weights are bounded by sqrt(rho(1-rho)) <= 1/2
            assert!(max_gap <= 2.0 / n as f64 * 0.5, "n={n} gap={max_gap}");
        }
    }
}

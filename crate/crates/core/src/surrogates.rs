//! Surrogate rewards `F(rho)`, their derivatives, and the forward map from a
//! surrogate to advantage scores.
//!
//! The forward map differentiates `F`, replaces `F'(rho)` by its value at the
//! empirical rate, and replaces `grad rho` by the leave-one-out proxy
//! `rho_hat (1 - rho_hat) [grad_plus - grad_minus]`. Per response class that
//! gives `A+ = F'(rho_hat) (1 - rho_hat)` and `A- = -F'(rho_hat) rho_hat`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::advantage::{AdvantagePair, Shaped};
use crate::error::{Error, Result};
use crate::quadrature;
use crate::reward_stats::{pass_k_hat, GroupStats};

/// Absolute tolerance used for the incomplete beta quadrature.
pub const INC_BETA_TOL: f64 = 1e-13;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[repr(u32)]
pub enum SurrogateKind {
    Identity = 0,
    PassK = 1,
    #[serde(alias = "arcsin")]
    Arcsin01 = 2,
    ArcsinPassK = 3,
    #[serde(alias = "skewr")]
    SkewrReg = 4,
    IncBetaK = 5,
    EntropyReg = 6,
}

impl SurrogateKind {
    pub const ALL: [SurrogateKind; 7] = [
        SurrogateKind::Identity,
        SurrogateKind::PassK,
        SurrogateKind::Arcsin01,
        SurrogateKind::ArcsinPassK,
        SurrogateKind::SkewrReg,
        SurrogateKind::IncBetaK,
        SurrogateKind::EntropyReg,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SurrogateKind::Identity => "identity",
            SurrogateKind::PassK => "pass_k",
            SurrogateKind::Arcsin01 => "arcsin_01",
            SurrogateKind::ArcsinPassK => "arcsin_pass_k",
            SurrogateKind::SkewrReg => "skewr_reg",
            SurrogateKind::IncBetaK => "inc_beta_k",
            SurrogateKind::EntropyReg => "entropy_reg",
        }
    }

    pub fn from_code(code: u32) -> Option<Self> {
        Self::ALL.get(code as usize).copied()
    }

    pub fn uses_k(self) -> bool {
        matches!(
            self,
            SurrogateKind::PassK | SurrogateKind::ArcsinPassK | SurrogateKind::IncBetaK
        )
    }

    pub fn uses_lambda(self) -> bool {
        self == SurrogateKind::EntropyReg
    }
}

impl fmt::Display for SurrogateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SurrogateKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "arcsin" => return Ok(SurrogateKind::Arcsin01),
            "skewr" => return Ok(SurrogateKind::SkewrReg),
            _ => {}
        }
        Self::ALL
            .iter()
            .copied()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| Error::config(format!("unknown surrogate '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurrogateId {
    pub kind: SurrogateKind,
    pub k: usize,
    pub lambda: f64,
}

impl SurrogateId {
    pub fn new(kind: SurrogateKind, k: usize, lambda: f64) -> Result<Self> {
        if kind.uses_k() && k < 1 {
            return Err(Error::invalid(format!("{kind} needs k >= 1")));
        }
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::invalid(format!("lambda must be finite and >= 0, got {lambda}")));
        }
        Ok(Self {
            kind,
            k: if kind.uses_k() { k } else { 1 },
            lambda: if kind.uses_lambda() { lambda } else { 0.0 },
        })
    }

    pub fn plain(kind: SurrogateKind) -> Self {
        Self {
            kind,
            k: 1,
            lambda: 0.0,
        }
    }

    pub fn with_k(kind: SurrogateKind, k: usize) -> Result<Self> {
        Self::new(kind, k, 0.0)
    }

    pub fn entropy(lambda: f64) -> Result<Self> {
        Self::new(SurrogateKind::EntropyReg, 1, lambda)
    }
}

impl fmt::Display for SurrogateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.kind.uses_k() {
            write!(f, "{}(k={})", self.kind, self.k)
        } else if self.kind.uses_lambda() {
            write!(f, "{}(lambda={})", self.kind, self.lambda)
        } else {
            write!(f, "{}", self.kind)
        }
    }
}

/// `1 - (1 - rho)^k`.
pub fn pass_k_of_rho(rho: f64, k: usize) -> f64 {
    -(k as f64 * (-rho).ln_1p()).exp_m1()
}

/// Inverse of [`pass_k_of_rho`]: `1 - (1 - rho_k)^(1/k)`.
pub fn rho_of_pass_k(rho_k: f64, k: usize) -> f64 {
    -((-rho_k).ln_1p() / k as f64).exp_m1()
}

/// Binary entropy in nats, extended by continuity to 0 at the endpoints.
pub fn binary_entropy(rho: f64) -> f64 {
    let xlx = |x: f64| if x <= 0.0 { 0.0 } else { x * x.ln() };
    -xlx(rho) - xlx(1.0 - rho)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IncBetaParams {
    pub x: f64,
    pub a: f64,
    pub b: f64,
}

impl IncBetaParams {
    /// Parameters `a = 1/2`, `b = k - 1/2` of the GRPO_K surrogate.
    pub fn for_pass_k(x: f64, k: usize) -> Self {
        Self {
            x,
            a: 0.5,
            b: k as f64 - 0.5,
        }
    }
}

/// Unregularised incomplete beta `B(x; a, b) = int_0^x u^(a-1) (1-u)^(b-1) du`.
///
/// The interval is split at 1/2. Below, `u = t^2` turns `u^(a-1)` into
/// `t^(2a-1)`; above, `1 - u = s^2` does the same for the right endpoint. For
/// half-integer parameters both integrands are then smooth.
pub fn incomplete_beta(params: IncBetaParams) -> Result<f64> {
    incomplete_beta_tol(params, INC_BETA_TOL)
}

pub fn incomplete_beta_tol(params: IncBetaParams, abs_tol: f64) -> Result<f64> {
    let IncBetaParams { x, a, b } = params;
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::invalid(format!("incomplete beta needs 0 <= x <= 1, got {x}")));
    }
    if !(a > 0.0 && b > 0.0) {
        return Err(Error::invalid(format!(
            "incomplete beta needs a, b > 0, got a={a} b={b}"
        )));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    let split = x.min(0.5);
    let left = quadrature::integrate(
        |t| 2.0 * t.powf(2.0 * a - 1.0) * (1.0 - t * t).powf(b - 1.0),
        0.0,
        split.sqrt(),
        0.5 * abs_tol,
    );
    let right = if x > 0.5 {
        quadrature::integrate(
            |s| 2.0 * s.powf(2.0 * b - 1.0) * (1.0 - s * s).powf(a - 1.0),
            (1.0 - x).sqrt(),
            0.5f64.sqrt(),
            0.5 * abs_tol,
        )
    } else {
        0.0
    };
    Ok(left + right)
}

fn check_closed(rho: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::invalid(format!("rho must lie in [0, 1], got {rho}")));
    }
    Ok(())
}

fn check_open(rho: f64) -> Result<()> {
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::invalid(format!("rho must lie in (0, 1), got {rho}")));
    }
    Ok(())
}

/// `F(rho)`, defined on the closed interval by continuity.
pub fn surrogate_eval(id: &SurrogateId, rho: f64) -> Result<f64> {
    use SurrogateKind::*;
    check_closed(rho)?;
    let k = id.k;
    let arcsin_sqrt = |x: f64| x.sqrt().asin();
    Ok(match id.kind {
        Identity => rho,
        PassK => pass_k_of_rho(rho, k),
        Arcsin01 => 2.0 * arcsin_sqrt(rho),
        ArcsinPassK => {
            let rk = pass_k_of_rho(rho, k);
            // acos form keeps precision once rho_K is close to 1
            let angle = if rk <= 0.5 {
                arcsin_sqrt(rk)
            } else {
                (1.0 - rho).powf(0.5 * k as f64).acos()
            };
            2.0 / k as f64 * angle
        }
        SkewrReg => arcsin_sqrt(rho) + (rho * (1.0 - rho)).sqrt(),
        IncBetaK => incomplete_beta(IncBetaParams::for_pass_k(rho, k))?,
        EntropyReg => 2.0 * arcsin_sqrt(rho) + id.lambda * binary_entropy(rho),
    })
}

/// `F'(rho)` in closed form on the open interval.
pub fn surrogate_derivative(id: &SurrogateId, rho: f64) -> Result<f64> {
    use SurrogateKind::*;
    check_open(rho)?;
    let k = id.k as f64;
    let q = 1.0 - rho;
    Ok(match id.kind {
        Identity => 1.0,
        PassK => k * q.powi(id.k as i32 - 1),
        Arcsin01 => 1.0 / (rho * q).sqrt(),
        // (1-rho)^(K-1) / sqrt(rho_K (1 - rho_K)) with 1 - rho_K = (1-rho)^K
        ArcsinPassK => q.powf(0.5 * k - 1.0) / pass_k_of_rho(rho, id.k).sqrt(),
        SkewrReg => (q / rho).sqrt(),
        IncBetaK => q.powf(k - 1.5) / rho.sqrt(),
        EntropyReg => 1.0 / (rho * q).sqrt() + id.lambda * (q / rho).ln(),
    })
}

/// `F(1)`, the value used to normalise curves so they all end at 1.
pub fn normalizer(id: &SurrogateId) -> Result<f64> {
    surrogate_eval(id, 1.0)
}

/// `F'` at the empirical rate. For `arcsin_pass_k` the Pass@K rate inside the
/// factor is the combinatorial estimate rather than `1 - (1 - rho_hat)^K`.
pub fn empirical_derivative(id: &SurrogateId, stats: &GroupStats) -> Result<f64> {
    if id.kind == SurrogateKind::ArcsinPassK {
        let pk = pass_k_hat(stats, id.k)?;
        check_open(stats.rho_hat)?;
        return Ok(((1.0 - pk) / pk).sqrt() / (1.0 - stats.rho_hat));
    }
    surrogate_derivative(id, stats.rho_hat)
}

/// Advantage scores obtained by applying the leave-one-out estimator to `F`.
pub fn forward_engineer(id: &SurrogateId, stats: &GroupStats) -> Result<Shaped> {
    if id.kind == SurrogateKind::ArcsinPassK {
        pass_k_hat(stats, id.k)?;
    }
    if stats.is_degenerate() {
        return Ok(Shaped {
            pair: AdvantagePair::ZERO,
            degenerate: true,
        });
    }
    let rho = stats.rho_hat;
    let pair = if id.kind == SurrogateKind::ArcsinPassK {
        // F'(rho_hat) (1 - rho_hat) simplifies to sqrt((1 - rho_K) / rho_K)
        let pk = pass_k_hat(stats, id.k)?;
        let a_plus = ((1.0 - pk) / pk).sqrt();
        AdvantagePair::new(a_plus, -a_plus * rho / (1.0 - rho))
    } else {
        let d = surrogate_derivative(id, rho)?;
        AdvantagePair::new(d * (1.0 - rho), -d * rho)
    };
    Ok(Shaped {
        pair,
        degenerate: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::advantage::{advantage_pair, AlgorithmId, AlgorithmKind};
    use std::f64::consts::{FRAC_PI_2, PI};

    fn grid(points: usize) -> impl Iterator<Item = f64> {
        (1..=points).map(move |i| i as f64 / (points + 1) as f64)
    }

    #[test]
    fn pass_k_of_rho_values() {
        for k in 1..10 {
            assert_eq!(pass_k_of_rho(0.0, k), 0.0);
        }
        assert!((pass_k_of_rho(0.5, 2) - 0.75).abs() < 1e-16);
        assert_eq!(pass_k_of_rho(1.0, 3), 1.0);
    }

    #[test]
    fn pass_k_round_trip() {
        for k in [1, 2] {
            for rho in grid(99) {
                assert!(
                    (rho_of_pass_k(pass_k_of_rho(rho, k), k) - rho).abs() < 1e-14,
                    "k={k} rho={rho}"
                );
            }
        }
        // for larger k the inverse amplifies the rounding of rho_K by
        // d rho / d rho_K = (1 - rho)^(1-k) / k
        for k in [4, 8, 16] {
            for rho in grid(99) {
                let cond = (1.0 - rho).powi(1 - k as i32) / k as f64;
                let tol = 1e-14f64.max(4.0 * f64::EPSILON * cond);
                assert!(
                    (rho_of_pass_k(pass_k_of_rho(rho, k), k) - rho).abs() < tol,
                    "k={k} rho={rho}"
                );
            }
        }
    }

    #[test]
    fn incomplete_beta_closed_forms() {
        let p = IncBetaParams { x: 1.0, a: 0.5, b: 1.5 };
        assert!((incomplete_beta(p).unwrap() - FRAC_PI_2).abs() < 1e-12);
        assert_eq!(incomplete_beta(IncBetaParams { x: 0.0, a: 0.5, b: 1.5 }).unwrap(), 0.0);
        for rho in grid(199) {
            let k1 = incomplete_beta(IncBetaParams::for_pass_k(rho, 1)).unwrap();
            assert!((k1 - 2.0 * rho.sqrt().asin()).abs() < 1e-12);
            let k2 = incomplete_beta(IncBetaParams::for_pass_k(rho, 2)).unwrap();
            assert!((k2 - rho.sqrt().asin() - (rho * (1.0 - rho)).sqrt()).abs() < 1e-12);
        }
        // complete Beta(1/2, 1/2) = pi
        assert!((incomplete_beta(IncBetaParams::for_pass_k(1.0, 1)).unwrap() - PI).abs() < 1e-12);
    }

    #[test]
    fn incomplete_beta_matches_gamma_ratio() {
        // B(1/2, k - 1/2) = Gamma(1/2) Gamma(k - 1/2) / Gamma(k) = pi * prod_{j=1}^{k-1} (2j-1)/(2j)
        for k in 1..=12usize {
            let expected = (1..k).fold(PI, |acc, j| acc * (2 * j - 1) as f64 / (2 * j) as f64);
            let got = incomplete_beta(IncBetaParams::for_pass_k(1.0, k)).unwrap();
            assert!((got - expected).abs() < 1e-12, "k={k}");
        }
    }

    #[test]
    fn incomplete_beta_rejects_bad_params() {
        assert!(incomplete_beta(IncBetaParams { x: 1.5, a: 0.5, b: 1.5 }).is_err());
        assert!(incomplete_beta(IncBetaParams { x: 0.5, a: 0.0, b: 1.5 }).is_err());
    }

    #[test]
    fn eval_examples() {
        let arcsin = SurrogateId::plain(SurrogateKind::Arcsin01);
        assert!((surrogate_eval(&arcsin, 1.0).unwrap() - PI).abs() < 1e-15);
        let inc1 = SurrogateId::with_k(SurrogateKind::IncBetaK, 1).unwrap();
        assert!((surrogate_eval(&inc1, 0.3).unwrap() - 2.0 * 0.3f64.sqrt().asin()).abs() < 1e-12);
        let ent0 = SurrogateId::entropy(0.0).unwrap();
        assert!((surrogate_eval(&ent0, 0.5).unwrap() - FRAC_PI_2).abs() < 1e-15);
        assert!(surrogate_eval(&arcsin, -0.1).is_err());
        assert!(surrogate_derivative(&arcsin, 0.0).is_err());
        assert!(surrogate_derivative(&arcsin, 1.0).is_err());
    }

    #[test]
    fn derivative_examples() {
        let arcsin = SurrogateId::plain(SurrogateKind::Arcsin01);
        assert_eq!(surrogate_derivative(&arcsin, 0.5).unwrap(), 2.0);
        let skewr = SurrogateId::plain(SurrogateKind::SkewrReg);
        assert_eq!(surrogate_derivative(&skewr, 0.5).unwrap(), 1.0);
    }

    #[test]
    fn surrogates_increase() {
        let mut ids = vec![
            SurrogateId::plain(SurrogateKind::Identity),
            SurrogateId::plain(SurrogateKind::Arcsin01),
            SurrogateId::plain(SurrogateKind::SkewrReg),
        ];
        for k in [1, 2, 4, 8] {
            ids.push(SurrogateId::with_k(SurrogateKind::PassK, k).unwrap());
            ids.push(SurrogateId::with_k(SurrogateKind::ArcsinPassK, k).unwrap());
            ids.push(SurrogateId::with_k(SurrogateKind::IncBetaK, k).unwrap());
        }
        for id in &ids {
            for rho in grid(99) {
                assert!(surrogate_derivative(id, rho).unwrap() > 0.0, "{id} rho={rho}");
            }
        }
    }

    #[test]
    fn arcsin_pass_k_chain_rule() {
        for k in [1usize, 2, 4, 8] {
            let id = SurrogateId::with_k(SurrogateKind::ArcsinPassK, k).unwrap();
            for rho in grid(99) {
                let rk = pass_k_of_rho(rho, k);
                let fail_k = (1.0 - rho).powi(k as i32);
                let drk_drho = k as f64 * (1.0 - rho).powi(k as i32 - 1);
                let via_chain = surrogate_derivative(&id, rho).unwrap() / drk_drho;
                let direct = 1.0 / (k as f64 * (rk * fail_k).sqrt());
                assert!((via_chain - direct).abs() <= 1e-10 * direct.max(1.0), "k={k} rho={rho}");
            }
        }
    }

    #[test]
    fn forward_engineering_recovers_known_algorithms() {
        let n = 16;
        for np in 1..n {
            let s = GroupStats::new(n, np).unwrap();
            let check = |sid: SurrogateId, alg: AlgorithmId| {
                let f = forward_engineer(&sid, &s).unwrap().pair;
                let a = advantage_pair(&alg, &s).unwrap().pair;
                assert!((f.a_plus - a.a_plus).abs() < 1e-12, "{sid} vs {alg} at {np}");
                assert!((f.a_minus - a.a_minus).abs() < 1e-12, "{sid} vs {alg} at {np}");
            };
            check(
                SurrogateId::plain(SurrogateKind::Arcsin01),
                AlgorithmId::plain(AlgorithmKind::Grpo),
            );
            check(
                SurrogateId::plain(SurrogateKind::SkewrReg),
                AlgorithmId::plain(AlgorithmKind::SkewR),
            );
            check(
                SurrogateId::plain(SurrogateKind::Identity),
                AlgorithmId::plain(AlgorithmKind::Rloo),
            );
            for lambda in [0.0, 1.0, 2.5] {
                check(
                    SurrogateId::entropy(lambda).unwrap(),
                    AlgorithmId::entropy(lambda).unwrap(),
                );
            }
            for k in [1, 2, 4, 8] {
                check(
                    SurrogateId::with_k(SurrogateKind::ArcsinPassK, k).unwrap(),
                    AlgorithmId::with_k(AlgorithmKind::GrpoTilde, k).unwrap(),
                );
                check(
                    SurrogateId::with_k(SurrogateKind::IncBetaK, k).unwrap(),
                    AlgorithmId::with_k(AlgorithmKind::BiasedPow, k).unwrap(),
                );
            }
        }
        let degenerate = forward_engineer(
            &SurrogateId::plain(SurrogateKind::Arcsin01),
            &GroupStats::new(4, 4).unwrap(),
        )
        .unwrap();
        assert!(degenerate.degenerate && degenerate.pair == AdvantagePair::ZERO);
    }

    /// GRPO_K surrogate as a function of the Pass@K rate.
    fn inc_beta_in_pass_k(x: f64, k: usize) -> f64 {
        let id = SurrogateId::with_k(SurrogateKind::IncBetaK, k).unwrap();
        surrogate_eval(&id, rho_of_pass_k(x, k)).unwrap()
    }

    #[test]
    fn inc_beta_concave_in_pass_k_below_inflection() {
        // d/dx = 1 / (k sqrt(rho (1 - rho))) is decreasing while rho < 1/2,
        // i.e. for x < 1 - 2^-k
        for k in [2usize, 4, 8] {
            let edge = 1.0 - 0.5f64.powi(k as i32);
            let xs: Vec<f64> = grid(99).filter(|&x| x <= edge).collect();
            for w in xs.windows(3) {
                let d2 = inc_beta_in_pass_k(w[0], k) - 2.0 * inc_beta_in_pass_k(w[1], k) + inc_beta_in_pass_k(w[2], k);
                assert!(d2 <= 1e-8, "k={k} x={} d2={d2}", w[1]);
            }
        }
        // past the inflection the curve bends upwards again
        let x = [0.8, 0.85, 0.9];
        let d2 = inc_beta_in_pass_k(x[0], 2) - 2.0 * inc_beta_in_pass_k(x[1], 2) + inc_beta_in_pass_k(x[2], 2);
        assert!(d2 > 0.0);
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let h = 1e-6;
        let mut ids = vec![
            SurrogateId::plain(SurrogateKind::Identity),
            SurrogateId::plain(SurrogateKind::Arcsin01),
            SurrogateId::plain(SurrogateKind::SkewrReg),
        ];
        for k in [1, 2, 4] {
            for kind in [
                SurrogateKind::PassK,
                SurrogateKind::ArcsinPassK,
                SurrogateKind::IncBetaK,
            ] {
                ids.push(SurrogateId::with_k(kind, k).unwrap());
            }
        }
        for lambda in [0.0, 1.0, 2.0, 3.0] {
            ids.push(SurrogateId::entropy(lambda).unwrap());
        }
        for id in &ids {
            for i in 1..=49 {
                let rho = 0.02 * i as f64;
                let fd = (surrogate_eval(id, rho + h).unwrap() - surrogate_eval(id, rho - h).unwrap()) / (2.0 * h);
                let d = surrogate_derivative(id, rho).unwrap();
                assert!((fd - d).abs() <= 1e-5 * d.abs(), "{id} rho={rho} fd={fd} d={d}");
            }
        }
    }

    fn entropy_argmax(lambda: f64) -> f64 {
        let id = SurrogateId::entropy(lambda).unwrap();
        (1..=1000)
            .map(|i| i as f64 / 1000.0)
            .map(|rho| (rho, surrogate_eval(&id, rho).unwrap()))
            .fold(
                (0.0, f64::NEG_INFINITY),
                |best, cur| if cur.1 > best.1 { cur } else { best },
            )
            .0
    }

    #[test]
    fn entropy_regulariser_argmax() {
        assert_eq!(entropy_argmax(1.0), 1.0);
        assert!(entropy_argmax(3.0) < 0.999);
        assert_eq!(entropy_argmax(0.0), 1.0);
    }

    #[test]
    fn string_ids() {
        for kind in SurrogateKind::ALL {
            assert_eq!(kind.as_str().parse::<SurrogateKind>().unwrap(), kind);
        }
        assert_eq!("skewr".parse::<SurrogateKind>().unwrap(), SurrogateKind::SkewrReg);
        let k: SurrogateKind = serde_json::from_str("\"arcsin\"").unwrap();
        assert_eq!(k, SurrogateKind::Arcsin01);
    }
}

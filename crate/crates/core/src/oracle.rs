//! Brute-force verifiers.
//!
//! Two independent ways of taking the exact expectation of an estimator over
//! batch randomness are provided: marginalising over the number of correct
//! responses (valid because scores depend only on counts and responses are
//! exchangeable), and summing over every ordered tuple of responses. The
//! suites in [`run_verify`] cross-check them and then certify the unbiasedness,
//! population-limit and surrogate identities the library relies on.

use std::collections::BTreeMap;
use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::advantage::{
    advantage_pair, effective_weights, per_response_advantages, weights_from_pair, AdvantagePair, AlgorithmId,
    AlgorithmKind, EffectiveWeights, Shaped,
};
use crate::error::{Error, Result};
use crate::reward_stats::{pass_k_hat, GroupStats, RewardBatch};
use crate::surrogates::{
    forward_engineer, incomplete_beta, pass_k_of_rho, surrogate_derivative, surrogate_eval, IncBetaParams, SurrogateId,
    SurrogateKind,
};
use crate::tabular::{GradientVec, ProblemSpec, TabularPolicy};
use crate::trainer::assemble_gradient;

/// Largest number of ordered tuples [`full_enumeration_gradient`] will visit.
pub const MAX_ENUMERATION: usize = 1 << 20;

/// Step used by the finite-difference checks.
pub const FD_STEP: f64 = 1e-6;

/// Neumaier's compensated summation.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

/// `P(N+ = m)` for `m = 0..=n` under `Binomial(n, rho)`, built in log space.
pub fn binomial_pmf(n: usize, rho: f64) -> Vec<f64> {
    if rho <= 0.0 {
        let mut p = vec![0.0; n + 1];
        p[0] = 1.0;
        return p;
    }
    if rho >= 1.0 {
        let mut p = vec![0.0; n + 1];
        p[n] = 1.0;
        return p;
    }
    let (lr, lq) = (rho.ln(), (-rho).ln_1p());
    let mut log_c = 0.0;
    (0..=n)
        .map(|m| {
            if m > 0 {
                log_c += ((n - m + 1) as f64 / m as f64).ln();
            }
            (log_c + m as f64 * lr + (n - m) as f64 * lq).exp()
        })
        .collect()
}

/// `E[f(n, N+)]` for `N+ ~ Binomial(n, rho)`.
pub fn expected_scalar_estimator<F: Fn(usize, usize) -> f64>(f: F, rho: f64, n: usize) -> f64 {
    let mut acc = CompensatedSum::default();
    for (m, p) in binomial_pmf(n, rho).into_iter().enumerate() {
        if p > 0.0 {
            acc.add(p * f(n, m));
        }
    }
    acc.value()
}

/// Exact expectation of the group gradient of `alg` with `n` samples,
/// obtained by marginalising over the number of correct responses.
pub fn expected_gradient(alg: &AlgorithmId, policy: &TabularPolicy, problem: usize, n: usize) -> Result<GradientVec> {
    expected_gradient_with(alg, policy, problem, n, advantage_pair)
}

fn expected_gradient_with<P>(
    alg: &AlgorithmId,
    policy: &TabularPolicy,
    problem: usize,
    n: usize,
    pair: P,
) -> Result<GradientVec>
where
    P: Fn(&AlgorithmId, &GroupStats) -> Result<Shaped>,
{
    if n == 0 {
        return Err(Error::invalid("group size must be at least 1"));
    }
    let (mu_plus, mu_minus) = policy.conditional_mean_grads(problem);
    let rho = policy.rho(problem);
    let pmf = binomial_pmf(n, rho);
    let dim = mu_plus.len();
    let mut acc = vec![CompensatedSum::default(); dim];
    for (m, p) in pmf.into_iter().enumerate() {
        let stats = GroupStats::new(n, m)?;
        let shaped = pair(alg, &stats)?;
        let w_plus = stats.rho_hat * shaped.pair.a_plus;
        let w_minus = -(1.0 - stats.rho_hat) * shaped.pair.a_minus;
        for (j, a) in acc.iter_mut().enumerate() {
            // both terms vanish on their empty class, so mu is never used there
            a.add(p * w_plus * mu_plus.0[j]);
            a.add(-p * w_minus * mu_minus.0[j]);
        }
    }
    Ok(GradientVec(acc.iter().map(CompensatedSum::value).collect()))
}

/// Exact expectation of the group gradient by summing over all `m^n` ordered
/// response tuples.
pub fn full_enumeration_gradient(
    alg: &AlgorithmId,
    policy: &TabularPolicy,
    problem: usize,
    n: usize,
) -> Result<GradientVec> {
    let m = policy.response_count(problem);
    let tuples = (0..n).try_fold(1usize, |acc, _| acc.checked_mul(m).filter(|&t| t <= MAX_ENUMERATION));
    let Some(tuples) = tuples else {
        return Err(Error::invalid(format!(
            "m^n = {m}^{n} exceeds {MAX_ENUMERATION} tuples"
        )));
    };
    if n == 0 {
        return Err(Error::invalid("group size must be at least 1"));
    }
    let probs = policy.response_probs(problem);
    let mask = policy.correct_mask(problem);
    let scores: Vec<GradientVec> = (0..m).map(|i| policy.logprob_grad(problem, i)).collect();
    let mut acc = vec![CompensatedSum::default(); m];
    let mut idx = vec![0usize; n];
    for _ in 0..tuples {
        let weight: f64 = idx.iter().map(|&i| probs[i]).product();
        let batch = RewardBatch::from_bools(&idx.iter().map(|&i| mask[i]).collect::<Vec<_>>())?;
        let adv = per_response_advantages(alg, &batch)?;
        let grads: Vec<GradientVec> = idx.iter().map(|&i| scores[i].clone()).collect();
        let g = assemble_gradient(&adv.values, &grads)?;
        for (a, x) in acc.iter_mut().zip(g.as_slice()) {
            a.add(weight * x);
        }
        // odometer increment
        for d in idx.iter_mut() {
            *d += 1;
            if *d < m {
                break;
            }
            *d = 0;
        }
    }
    Ok(GradientVec(acc.iter().map(CompensatedSum::value).collect()))
}

/// Effective weights of `alg` at `n_large` samples with `round(n_large * rho)`
/// of them correct.
pub fn population_limit_weights(alg: &AlgorithmId, rho: f64, n_large: usize) -> Result<EffectiveWeights> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::invalid(format!("rho must lie in [0, 1], got {rho}")));
    }
    let n_plus = (n_large as f64 * rho).round() as usize;
    effective_weights(alg, &GroupStats::new(n_large, n_plus)?)
}

/// Population gradient weight `F'(rho) rho (1 - rho)` implied by a surrogate:
/// ascending `F(rho)` moves along `F'(rho) grad rho`, and
/// `grad rho = rho (1 - rho) (mu_plus - mu_minus)`.
pub fn surrogate_prediction(surrogate: &SurrogateId, rho: f64) -> Result<f64> {
    Ok(surrogate_derivative(surrogate, rho)? * rho * (1.0 - rho))
}

/// Surrogate whose population gradient an algorithm follows, together with
/// the constant relating the two (`scores = c * F' * RLOO proxy`).
pub fn implied_surrogate(alg: &AlgorithmId) -> Option<(SurrogateId, f64)> {
    use AlgorithmKind::*;
    let k = alg.k;
    let id = match alg.kind {
        Rloo | Reinforce => SurrogateId::plain(SurrogateKind::Identity),
        Grpo => SurrogateId::plain(SurrogateKind::Arcsin01),
        SkewR => SurrogateId::plain(SurrogateKind::SkewrReg),
        GrpoTilde => SurrogateId::with_k(SurrogateKind::ArcsinPassK, k).ok()?,
        GrpoK | BiasedPow => SurrogateId::with_k(SurrogateKind::IncBetaK, k).ok()?,
        RlooK | BiasedPowRloo | ReinforceK | PositiveCoeff => {
            let scale = if alg.kind == PositiveCoeff { 1.0 } else { 1.0 / k as f64 };
            return Some((SurrogateId::with_k(SurrogateKind::PassK, k).ok()?, scale));
        }
        EntropyGrpo => SurrogateId::entropy(alg.lambda).ok()?,
        MixTilde | MixDirect => return None,
    };
    Some((id, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToleranceKind {
    Abs,
    Rel,
}

/// One verification result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub suite: Suite,
    pub check: String,
    pub params: Value,
    pub value: f64,
    pub target: f64,
    pub abs_err: f64,
    pub rel_err: f64,
    pub tolerance: f64,
    pub tolerance_kind: ToleranceKind,
    pub pass: bool,
}

impl OracleReport {
    pub fn scalar(
        suite: Suite,
        check: impl Into<String>,
        params: Value,
        value: f64,
        target: f64,
        tolerance: f64,
        kind: ToleranceKind,
    ) -> Self {
        let abs_err = (value - target).abs();
        let rel_err = relative(abs_err, target.abs());
        Self::finish(
            suite,
            check.into(),
            params,
            value,
            target,
            abs_err,
            rel_err,
            tolerance,
            kind,
        )
    }

    /// Compares vectors by their worst component. The relative error is taken
    /// against the largest target component so that near-zero entries of a
    /// gradient do not dominate.
    pub fn vector(
        suite: Suite,
        check: impl Into<String>,
        params: Value,
        value: &[f64],
        target: &[f64],
        tolerance: f64,
        kind: ToleranceKind,
    ) -> Self {
        let (mut worst, mut abs_err) = (0, 0.0f64);
        for (j, (v, t)) in value.iter().zip(target).enumerate() {
            let e = (v - t).abs();
            if e > abs_err || e.is_nan() {
                worst = j;
                abs_err = e;
            }
        }
        if value.len() != target.len() {
            abs_err = f64::INFINITY;
        }
        let scale = target.iter().fold(0.0f64, |m, t| m.max(t.abs()));
        let rel_err = relative(abs_err, scale);
        let pick = |xs: &[f64]| xs.get(worst).copied().unwrap_or(f64::NAN);
        Self::finish(
            suite,
            check.into(),
            params,
            pick(value),
            pick(target),
            abs_err,
            rel_err,
            tolerance,
            kind,
        )
    }

    #[allow(clippy::too_many_arguments)]
    fn finish(
        suite: Suite,
        check: String,
        params: Value,
        value: f64,
        target: f64,
        abs_err: f64,
        rel_err: f64,
        tolerance: f64,
        kind: ToleranceKind,
    ) -> Self {
        let err = match kind {
            ToleranceKind::Abs => abs_err,
            ToleranceKind::Rel => rel_err,
        };
        Self {
            suite,
            check,
            params,
            value,
            target,
            abs_err,
            rel_err,
            tolerance,
            tolerance_kind: kind,
            pass: err <= tolerance,
        }
    }
}

fn relative(abs_err: f64, scale: f64) -> f64 {
    if abs_err == 0.0 {
        0.0
    } else {
        abs_err / scale
    }
}

/// Central finite differences of `F(rho(logits))` against `F'(rho) grad rho`.
pub fn finite_diff_check(surrogate: &SurrogateId, policy: &TabularPolicy, problem: usize) -> Result<OracleReport> {
    let rho = policy.rho(problem);
    let analytic = policy
        .exact_rho_grad(problem)
        .scale(surrogate_derivative(surrogate, rho)?);
    let logits = policy.logits(problem).to_vec();
    let mut probe = policy.clone();
    let mut fd = Vec::with_capacity(logits.len());
    for j in 0..logits.len() {
        let mut eval = |delta: f64| -> Result<f64> {
            let mut l = logits.clone();
            l[j] += delta;
            probe.set_logits(problem, l)?;
            surrogate_eval(surrogate, probe.rho(problem))
        };
        let up = eval(FD_STEP)?;
        let down = eval(-FD_STEP)?;
        fd.push((up - down) / (2.0 * FD_STEP));
    }
    Ok(OracleReport::vector(
        Suite::FiniteDifference,
        "policy_chain_rule",
        json!({"surrogate": surrogate.to_string(), "rho": rho, "m": logits.len(), "h": FD_STEP}),
        &fd,
        analytic.as_slice(),
        1e-5,
        ToleranceKind::Rel,
    ))
}

/// Exact binomial coefficients from Pascal's rule, with `C(n, 0) = 1` for all
/// `n` and `C(n, k) = 0` whenever `n < k`.
struct Pascal {
    rows: Vec<Vec<BigInt>>,
}

impl Pascal {
    fn new(max_n: usize) -> Self {
        let mut rows: Vec<Vec<BigInt>> = vec![vec![BigInt::one()]];
        for n in 1..=max_n {
            let prev = &rows[n - 1];
            let row = (0..=n)
                .map(|k| {
                    let left = if k > 0 { prev[k - 1].clone() } else { BigInt::zero() };
                    let right = prev.get(k).cloned().unwrap_or_else(BigInt::zero);
                    left + right
                })
                .collect();
            rows.push(row);
        }
        Self { rows }
    }

    fn c(&self, n: i64, k: i64) -> BigInt {
        if k == 0 {
            return BigInt::one();
        }
        if k < 0 || n < k {
            return BigInt::zero();
        }
        self.rows[n as usize][k as usize].clone()
    }

    fn ratio(&self, a: (i64, i64), b: (i64, i64)) -> BigRational {
        BigRational::new(self.c(a.0, a.1), self.c(b.0, b.1))
    }
}

/// Number of `(n_minus, k)` pairs at group size `n` violating either form
/// of the combinatorial identity
/// `1 - pass_k = (1 - rho) f_minus = (1 - rho - (k-1)/n) f_plus`, checked in
/// rational arithmetic (the second form whenever `n_minus >= k - 1`).
pub fn failure_identity_violations(n: usize) -> usize {
    let table = Pascal::new(n);
    let n = n as i64;
    let mut bad = 0;
    for nm in 0..=n {
        for k in 1..=n {
            let fail_k = table.ratio((nm, k), (n, k));
            let f_minus = table.ratio((nm - 1, k - 1), (n - 1, k - 1));
            let f_plus = table.ratio((nm, k - 1), (n - 1, k - 1));
            let q = BigRational::new(BigInt::from(nm), BigInt::from(n));
            if fail_k != q.clone() * f_minus {
                bad += 1;
            }
            if nm >= k - 1 {
                let shifted = BigRational::new(BigInt::from(nm - (k - 1)), BigInt::from(n));
                if fail_k != shifted * f_plus {
                    bad += 1;
                }
            }
        }
    }
    bad
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Unbiasedness,
    FailureIdentity,
    ConditionalMeans,
    GradientCertificates,
    CrossValidation,
    ForwardEngineering,
    PopulationLimits,
    FiniteDifference,
    Identities,
}

impl Suite {
    pub const ALL: [Suite; 9] = [
        Suite::Unbiasedness,
        Suite::FailureIdentity,
        Suite::ConditionalMeans,
        Suite::GradientCertificates,
        Suite::CrossValidation,
        Suite::ForwardEngineering,
        Suite::PopulationLimits,
        Suite::FiniteDifference,
        Suite::Identities,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Suite::Unbiasedness => "unbiasedness",
            Suite::FailureIdentity => "failure_identity",
            Suite::ConditionalMeans => "conditional_means",
            Suite::GradientCertificates => "gradient_certificates",
            Suite::CrossValidation => "cross_validation",
            Suite::ForwardEngineering => "forward_engineering",
            Suite::PopulationLimits => "population_limits",
            Suite::FiniteDifference => "finite_difference",
            Suite::Identities => "identities",
        }
    }

    /// Tolerance applied when the configuration does not override it.
    pub fn default_tolerance(self) -> f64 {
        match self {
            Suite::Unbiasedness | Suite::ConditionalMeans | Suite::GradientCertificates | Suite::CrossValidation => {
                1e-12
            }
            Suite::ForwardEngineering => 1e-12,
            Suite::FailureIdentity => 0.0,
            Suite::PopulationLimits => 1e-2,
            Suite::FiniteDifference => 1e-5,
            Suite::Identities => 1e-10,
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Deliberate defects used to check that the suites can fail.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fault {
    /// Flip the sign of the GRPO score given to wrong responses.
    GrpoAMinusSign,
}

/// Options of the `verify` command.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    /// Suites to run; all of them when absent.
    #[serde(default)]
    pub suites: Option<Vec<Suite>>,
    /// Seed for the random policies.
    #[serde(default)]
    pub seed: u64,
    /// Per-suite overrides of the main tolerance.
    #[serde(default)]
    pub tolerances: BTreeMap<Suite, f64>,
    /// Test fixture: run the suites against a deliberately broken estimator.
    #[serde(default)]
    pub inject_fault: Option<Fault>,
}

impl VerifyConfig {
    pub fn validate(&self) -> Result<()> {
        for (suite, tol) in &self.tolerances {
            if !(*tol >= 0.0 && tol.is_finite()) {
                return Err(Error::config(format!("tolerance for {suite} must be finite and >= 0")));
            }
        }
        if matches!(&self.suites, Some(s) if s.is_empty()) {
            return Err(Error::config("suite list is empty"));
        }
        Ok(())
    }

    fn selected(&self) -> Vec<Suite> {
        match &self.suites {
            Some(list) => Suite::ALL.into_iter().filter(|s| list.contains(s)).collect(),
            None => Suite::ALL.to_vec(),
        }
    }
}

struct Ctx {
    seed: u64,
    tol: f64,
    fault: Option<Fault>,
}

impl Ctx {
    fn rng(&self, suite: Suite) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(suite as u64 + 1);
        rng
    }

    fn pair(&self, alg: &AlgorithmId, stats: &GroupStats) -> Result<Shaped> {
        let mut shaped = advantage_pair(alg, stats)?;
        if self.fault == Some(Fault::GrpoAMinusSign) && alg.kind == AlgorithmKind::Grpo {
            shaped.pair.a_minus = -shaped.pair.a_minus;
        }
        Ok(shaped)
    }
}

/// A random policy with `m` responses, logits in `[-3, 3]` and a mask with
/// at least one correct and one wrong response.
pub fn random_policy(rng: &mut impl Rng, m: usize) -> Result<TabularPolicy> {
    let wrong = rng.gen_range(0..m);
    let mut mask: Vec<bool> = (0..m).map(|_| rng.gen_bool(0.5)).collect();
    mask[wrong] = false;
    let right = (wrong + rng.gen_range(1..m)) % m;
    mask[right] = true;
    let logits = (0..m).map(|_| rng.gen_range(-3.0..3.0)).collect();
    TabularPolicy::single(&ProblemSpec::new(mask, logits)?)
}

/// Runs the selected suites and returns every report.
pub fn run_verify(config: &VerifyConfig) -> Result<Vec<OracleReport>> {
    config.validate()?;
    let mut out = Vec::new();
    for suite in config.selected() {
        let ctx = Ctx {
            seed: config.seed,
            tol: config
                .tolerances
                .get(&suite)
                .copied()
                .unwrap_or(suite.default_tolerance()),
            fault: config.inject_fault,
        };
        let reports = match suite {
            Suite::Unbiasedness => suite_unbiasedness(&ctx),
            Suite::FailureIdentity => suite_failure_identity(&ctx),
            Suite::ConditionalMeans => suite_conditional_means(&ctx),
            Suite::GradientCertificates => suite_gradient_certificates(&ctx),
            Suite::CrossValidation => suite_cross_validation(&ctx),
            Suite::ForwardEngineering => suite_forward_engineering(&ctx),
            Suite::PopulationLimits => suite_population_limits(&ctx),
            Suite::FiniteDifference => suite_finite_difference(&ctx),
            Suite::Identities => suite_identities(&ctx),
        }?;
        out.extend(reports);
    }
    Ok(out)
}

fn rho_grid_05() -> impl Iterator<Item = f64> {
    (1..=19).map(|i| i as f64 * 0.05)
}

fn suite_unbiasedness(ctx: &Ctx) -> Result<Vec<OracleReport>> {
    let mut out = Vec::new();
    for n in 1..=16usize {
        for k in 1..=n.min(8) {
            let mut worst = OracleReport::scalar(
                Suite::Unbiasedness,
                "",
                Value::Null,
                0.0,
                0.0,
                ctx.tol,
                ToleranceKind::Abs,
            );
            for rho in rho_grid_05() {
                let value = expected_scalar_estimator(
                    |n, m| pass_k_hat(&GroupStats::new(n, m).expect("m <= n"), k).expect("k <= n"),
                    rho,
                    n,
                );
                let r = OracleReport::scalar(
                    Suite::Unbiasedness,
                    "expected_pass_k_hat",
                    json!({"n": n, "k": k, "rho": rho}),
                    value,
                    pass_k_of_rho(rho, k),
                    ctx.tol,
                    ToleranceKind::Abs,
                );
                if r.abs_err >= worst.abs_err {
                    worst = r;
                }
            }
            out.push(worst);
        }
    }
    for rho in rho_grid_05() {
        let value = expected_scalar_estimator(|n, m| m as f64 / n as f64, rho, 16);
        out.push(OracleReport::scalar(
            Suite::Unbiasedness,
            "expected_rho_hat",
            json!({"n": 16, "rho": rho}),
            value,
            rho,
            ctx.tol,
            ToleranceKind::Abs,
        ));
    }
    Ok(out)
}

fn suite_failure_identity(ctx: &Ctx) -> Result<Vec<OracleReport>> {
    Ok((1..=64usize)
        .map(|n| {
            OracleReport::scalar(
                Suite::FailureIdentity,
                "rational_identity_violations",
                json!({"n": n}),
                failure_identity_violations(n) as f64,
                0.0,
                ctx.tol,
                ToleranceKind::Abs,
            )
        })
        .collect())
}

fn suite_conditional_means(ctx: &Ctx) -> Result<Vec<OracleReport>> {
    let mut rng = ctx.rng(Suite::ConditionalMeans);
    let mut out = Vec::new();
    for trial in 0..200 {
        let m = rng.gen_range(2..=8);
        let policy = random_policy(&mut rng, m)?;
        let probs = policy.response_probs(0);
        let mask = policy.correct_mask(0);
        // conditional means by direct summation over responses
        let mut plus = GradientVec::zeros(m);
        let mut minus = GradientVec::zeros(m);
        let (mut wp, mut wm) = (0.0, 0.0);
        for i in 0..m {
            let g = policy.logprob_grad(0, i);
            if mask[i] {
                plus = plus.add_scaled(probs[i], &g);
                wp += probs[i];
            } else {
                minus = minus.add_scaled(probs[i], &g);
                wm += probs[i];
            }
        }
        let diff = plus.scale(1.0 / wp).add_scaled(-1.0 / wm, &minus);
        let rho = policy.rho(0);
        let target = policy.exact_rho_grad(0).scale(1.0 / (rho * (1.0 - rho)));
        out.push(OracleReport::vector(
            Suite::ConditionalMeans,
            "conditional_gradient_identity",
            json!({"trial": trial, "m": m, "rho": rho}),
            diff.as_slice(),
            target.as_slice(),
            ctx.tol,
            ToleranceKind::Abs,
        ));
    }
    Ok(out)
}

/// Estimators with a known unbiased target, each as (algorithm, constant to
/// reinstate, power of `(1 - rho)` multiplying `grad rho`, factor on the target).
fn certificates(k: usize) -> Result<Vec<(AlgorithmId, f64, i32, f64)>> {
    use AlgorithmKind::*;
    let kf = k as f64;
    Ok(vec![
        (AlgorithmId::plain(Reinforce), 1.0, 0, 1.0),
        (AlgorithmId::plain(Rloo), f64::NAN, 0, 1.0),
        (AlgorithmId::with_k(RlooK, k)?, f64::NAN, k as i32 - 1, kf),
        (AlgorithmId::with_k(ReinforceK, k)?, kf, k as i32 - 1, kf),
        (AlgorithmId::with_k(PositiveCoeff, k)?, 1.0, k as i32 - 1, 1.0),
    ])
}

fn suite_gradient_certificates(ctx: &Ctx) -> Result<Vec<OracleReport>> {
    let mut rng = ctx.rng(Suite::GradientCertificates);
    let mut out = Vec::new();
    for trial in 0..100 {
        let m = rng.gen_range(2..=6);
        let policy = random_policy(&mut rng, m)?;
        let rho = policy.rho(0);
        let grad = policy.exact_rho_grad(0);
        // worst case over the (n, k) sweep, per estimator family
        let mut worst: BTreeMap<&'static str, OracleReport> = BTreeMap::new();
        for n in 2..=16usize {
            for k in 1..=n.min(8) {
                for (alg, constant, power, factor) in certificates(k)? {
                    if k > 1 && !alg.kind.uses_k() {
                        continue;
                    }
                    let c = if constant.is_nan() {
                        alg.dropped_constant(n)
                    } else {
                        constant
                    };
                    let value = expected_gradient(&alg, &policy, 0, n)?.scale(c);
                    let target = grad.scale(factor * (1.0 - rho).powi(power));
                    let r = OracleReport::vector(
                        Suite::GradientCertificates,
                        format!("unbiased_{}", alg.kind),
                        json!({"trial": trial, "m": m, "n": n, "k": k, "rho": rho}),
                        value.as_slice(),
                        target.as_slice(),
                        ctx.tol,
                        ToleranceKind::Abs,
                    );
                    let slot = worst.entry(alg.kind.as_str()).or_insert_with(|| r.clone());
                    if r.abs_err > slot.abs_err {
                        *slot = r;
                    }
                }
            }
        }
        out.extend(worst.into_values());
    }
    Ok(out)
}

fn suite_cross_validation(ctx: &Ctx) -> Result<Vec<OracleReport>> {
    let mut rng = ctx.rng(Suite::CrossValidation);
    let policies: Vec<TabularPolicy> = (2..=4)
        .flat_map(|m| (0..2).map(move |_| m))
        .map(|m| random_policy(&mut rng, m))
        .collect::<Result<_>>()?;
    let mut out = Vec::new();
    for kind in AlgorithmKind::ALL {
        let mut worst: Option<OracleReport> = None;
        for (pi, policy) in policies.iter().enumerate() {
            for n in 1..=6usize {
                let ks: Vec<usize> = if kind.uses_k() {
                    (1..=n.min(4)).collect()
                } else {
                    vec![1]
                };
                for k in ks {
                    let alg = AlgorithmId::new(kind, k, 1.0)?;
                    let Ok(by_count) = expected_gradient_with(&alg, policy, 0, n, |a, s| ctx.pair(a, s)) else {
                        continue;
                    };
                    let by_tuple = full_enumeration_gradient(&alg, policy, 0, n)?;
                    let r = OracleReport::vector(
                        Suite::CrossValidation,
                        format!("count_vs_tuple_{kind}"),
                        json!({"policy": pi, "m": policy.response_count(0), "n": n, "k": k}),
                        by_count.as_slice(),
                        by_tuple.as_slice(),
                        ctx.tol,
                        ToleranceKind::Abs,
                    );
                    if worst.as_ref().is_none_or(|w| r.abs_err > w.abs_err) {
                        worst = Some(r);
                    }
                }
            }
        }
        out.extend(worst);
    }
    Ok(out)
}

fn suite_forward_engineering(ctx: &Ctx) -> Result<Vec<OracleReport>> {
    use AlgorithmKind::*;
    let n = 16;
    let mut pairs: Vec<(SurrogateId, AlgorithmId)> = vec![
        (SurrogateId::plain(SurrogateKind::Arcsin01), AlgorithmId::plain(Grpo)),
        (SurrogateId::plain(SurrogateKind::SkewrReg), AlgorithmId::plain(SkewR)),
        (SurrogateId::plain(SurrogateKind::Identity), AlgorithmId::plain(Rloo)),
    ];
    for k in [1, 2, 4, 8] {
        pairs.push((
            SurrogateId::with_k(SurrogateKind::ArcsinPassK, k)?,
            AlgorithmId::with_k(GrpoTilde, k)?,
        ));
        pairs.push((
            SurrogateId::with_k(SurrogateKind::IncBetaK, k)?,
            AlgorithmId::with_k(BiasedPow, k)?,
        ));
    }
    for lambda in [0.0, 1.0, 3.0] {
        pairs.push((SurrogateId::entropy(lambda)?, AlgorithmId::entropy(lambda)?));
    }
    let mut out = Vec::new();
    for (sid, alg) in pairs {
        let mut value = Vec::new();
        let mut target = Vec::new();
        for np in 0..=n {
            let stats = GroupStats::new(n, np)?;
            let f = forward_engineer(&sid, &stats)?;
            let a = ctx.pair(&alg, &stats)?;
            if stats.is_degenerate() {
                // a score for an empty class is immaterial; compare what reaches the gradient
                let (wf, wa) = (
                    weights_from_pair(&f, stats.rho_hat),
                    weights_from_pair(&a, stats.rho_hat),
                );
                value.extend([wf.w_plus, wf.w_minus]);
                target.extend([wa.w_plus, wa.w_minus]);
            } else {
                value.extend([f.pair.a_plus, f.pair.a_minus]);
                target.extend([a.pair.a_plus, a.pair.a_minus]);
            }
        }
        out.push(OracleReport::vector(
            Suite::ForwardEngineering,
            format!("{}_matches_{}", sid.kind, alg.kind),
            json!({"surrogate": sid.to_string(), "algorithm": alg.to_string(), "n": n}),
            &value,
            &target,
            ctx.tol,
            ToleranceKind::Abs,
        ));
    }
    Ok(out)
}

/// Relative gap between finite-`n` weights and the surrogate prediction at
/// the realised rate, as (w_plus gap, w_minus gap, realised rate).
fn limit_gap(
    alg: &AlgorithmId,
    surrogate: &SurrogateId,
    scale: f64,
    rho: f64,
    n: usize,
) -> Result<(OracleReport, OracleReport)> {
    let w = population_limit_weights(alg, rho, n)?;
    let realised = (n as f64 * rho).round() / n as f64;
    let target = scale * surrogate_prediction(surrogate, realised)?;
    let params = json!({"algorithm": alg.to_string(), "surrogate": surrogate.to_string(), "n": n, "rho": rho, "rho_hat": realised});
    let mk = |side: &str, v: f64| {
        OracleReport::scalar(
            Suite::PopulationLimits,
            format!("limit_{}_{side}", alg.kind),
            params.clone(),
            v,
            target,
            1e-2,
            ToleranceKind::Rel,
        )
    };
    Ok((mk("w_plus", w.w_plus), mk("w_minus", w.w_minus)))
}

fn suite_population_limits(ctx: &Ctx) -> Result<Vec<OracleReport>> {
    use AlgorithmKind::*;
    let n = 1024;
    let mut out = Vec::new();
    let with_tol = |mut r: OracleReport, tol: f64, kind: ToleranceKind| {
        let err = if kind == ToleranceKind::Abs {
            r.abs_err
        } else {
            r.rel_err
        };
        r.tolerance = tol;
        r.tolerance_kind = kind;
        r.pass = err <= tol;
        r
    };
    for i in 1..=9 {
        let rho = i as f64 / 10.0;
        // K = 2 keeps the O(K^2 / (n (1 - rho))) finite-n bias under the tolerance
        for alg in [
            AlgorithmId::with_k(GrpoTilde, 2)?,
            AlgorithmId::with_k(GrpoK, 2)?,
            AlgorithmId::with_k(BiasedPowRloo, 2)?,
        ] {
            let (sid, scale) = implied_surrogate(&alg).expect("surrogate known");
            let (p, m) = limit_gap(&alg, &sid, scale, rho, n)?;
            out.push(with_tol(p, ctx.tol, ToleranceKind::Rel));
            out.push(with_tol(m, ctx.tol, ToleranceKind::Rel));
        }
        // no finite-n bias at all
        for alg in [
            AlgorithmId::plain(SkewR),
            AlgorithmId::plain(Grpo),
            AlgorithmId::with_k(BiasedPow, 4)?,
        ] {
            let (sid, scale) = implied_surrogate(&alg).expect("surrogate known");
            let (p, m) = limit_gap(&alg, &sid, scale, rho, n)?;
            out.push(with_tol(p, 1e-12, ToleranceKind::Abs));
            out.push(with_tol(m, 1e-12, ToleranceKind::Abs));
        }
        // the biased scaler and the unbiased reweighting share their limit
        for (biased, unbiased) in [(BiasedPowRloo, RlooK), (BiasedPow, GrpoK)] {
            let b = population_limit_weights(&AlgorithmId::with_k(biased, 2)?, rho, n)?;
            let u = population_limit_weights(&AlgorithmId::with_k(unbiased, 2)?, rho, n)?;
            out.push(OracleReport::vector(
                Suite::PopulationLimits,
                format!("{biased}_vs_{unbiased}"),
                json!({"n": n, "k": 2, "rho": rho}),
                &[b.w_plus, b.w_minus],
                &[u.w_plus, u.w_minus],
                ctx.tol,
                ToleranceKind::Rel,
            ));
        }
        // larger K: the gap shrinks like 1/n
        for kind in [GrpoTilde, GrpoK] {
            for k in [4, 8] {
                let alg = AlgorithmId::with_k(kind, k)?;
                let (sid, scale) = implied_surrogate(&alg).expect("surrogate known");
                let coarse = limit_gap(&alg, &sid, scale, rho, n)?;
                let fine = limit_gap(&alg, &sid, scale, rho, 4 * n)?;
                let ratio = fine.0.rel_err.max(fine.1.rel_err) / coarse.0.rel_err.max(coarse.1.rel_err);
                let r = OracleReport::scalar(
                    Suite::PopulationLimits,
                    format!("limit_{kind}_rate"),
                    json!({"k": k, "rho": rho, "n_coarse": n, "n_fine": 4 * n}),
                    ratio,
                    0.25,
                    0.5,
                    ToleranceKind::Abs,
                );
                // pass when quadrupling n at least halves the gap
                out.push(OracleReport {
                    pass: ratio <= 0.5,
                    ..r
                });
            }
        }
    }
    Ok(out)
}

fn fd_surrogates() -> Result<Vec<SurrogateId>> {
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
            ids.push(SurrogateId::with_k(kind, k)?);
        }
    }
    for lambda in [0.0, 1.0, 2.0, 3.0] {
        ids.push(SurrogateId::entropy(lambda)?);
    }
    Ok(ids)
}

/// Central difference of `F` at `rho` against `F'(rho)`, over the grid
/// `rho = 0.02, 0.04, ..., 0.98`; the worst point is reported.
pub fn surrogate_derivative_check(id: &SurrogateId, tol: f64) -> Result<OracleReport> {
    let mut worst: Option<OracleReport> = None;
    for i in 1..=49 {
        let rho = 0.02 * i as f64;
        let fd = (surrogate_eval(id, rho + FD_STEP)? - surrogate_eval(id, rho - FD_STEP)?) / (2.0 * FD_STEP);
        let r = OracleReport::scalar(
            Suite::FiniteDifference,
            "surrogate_derivative",
            json!({"surrogate": id.to_string(), "rho": rho, "h": FD_STEP}),
            fd,
            surrogate_derivative(id, rho)?,
            tol,
            ToleranceKind::Rel,
        );
        if worst.as_ref().is_none_or(|w| r.rel_err > w.rel_err) {
            worst = Some(r);
        }
    }
    Ok(worst.expect("nonempty grid"))
}

fn suite_finite_difference(ctx: &Ctx) -> Result<Vec<OracleReport>> {
    let mut out = Vec::new();
    let ids = fd_surrogates()?;
    for id in &ids {
        out.push(surrogate_derivative_check(id, ctx.tol)?);
    }
    let mut rng = ctx.rng(Suite::FiniteDifference);
    for _ in 0..10 {
        let m = rng.gen_range(2..=6);
        let policy = random_policy(&mut rng, m)?;
        for id in &ids {
            let mut r = finite_diff_check(id, &policy, 0)?;
            r.tolerance = ctx.tol;
            r.pass = r.rel_err <= ctx.tol;
            out.push(r);
        }
    }
    Ok(out)
}

/// Grid argmax of the entropy-regularised surrogate over `rho = 0.001..=1`.
pub fn entropy_argmax(lambda: f64) -> Result<f64> {
    let id = SurrogateId::entropy(lambda)?;
    let mut best = (0.0, f64::NEG_INFINITY);
    for i in 1..=1000 {
        let rho = i as f64 / 1000.0;
        let v = surrogate_eval(&id, rho)?;
        if v > best.1 {
            best = (rho, v);
        }
    }
    Ok(best.0)
}

fn suite_identities(ctx: &Ctx) -> Result<Vec<OracleReport>> {
    let mut out = Vec::new();
    let grid: Vec<f64> = (1..=999).map(|i| i as f64 / 1000.0).collect();

    let mut value = Vec::new();
    let mut target = Vec::new();
    for &rho in &grid {
        value.push(incomplete_beta(IncBetaParams::for_pass_k(rho, 2))?);
        target.push(rho.sqrt().asin() + (rho * (1.0 - rho)).sqrt());
    }
    out.push(OracleReport::vector(
        Suite::Identities,
        "inc_beta_k2_equals_skewr",
        json!({"grid_points": grid.len()}),
        &value,
        &target,
        ctx.tol,
        ToleranceKind::Abs,
    ));

    let (value, target): (Vec<f64>, Vec<f64>) = grid
        .iter()
        .map(|&rho| {
            Ok((
                incomplete_beta(IncBetaParams::for_pass_k(rho, 1))?,
                2.0 * rho.sqrt().asin(),
            ))
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .unzip();
    out.push(OracleReport::vector(
        Suite::Identities,
        "inc_beta_k1_equals_arcsin",
        json!({"grid_points": grid.len()}),
        &value,
        &target,
        ctx.tol,
        ToleranceKind::Abs,
    ));

    let complete = incomplete_beta(IncBetaParams { x: 1.0, a: 0.5, b: 1.5 })?;
    out.push(OracleReport::scalar(
        Suite::Identities,
        "complete_beta_half_three_halves",
        json!({}),
        complete,
        std::f64::consts::FRAC_PI_2,
        ctx.tol,
        ToleranceKind::Abs,
    ));

    let a1 = entropy_argmax(1.0)?;
    out.push(OracleReport::scalar(
        Suite::Identities,
        "entropy_argmax_lambda1_at_one",
        json!({"lambda": 1.0}),
        a1,
        1.0,
        0.0,
        ToleranceKind::Abs,
    ));
    let a3 = entropy_argmax(3.0)?;
    let interior = OracleReport::scalar(
        Suite::Identities,
        "entropy_argmax_lambda3_interior",
        json!({"lambda": 3.0, "bound": 0.999}),
        a3,
        0.999,
        0.0,
        ToleranceKind::Abs,
    );
    out.push(OracleReport {
        pass: a3 < 0.999,
        ..interior
    });

    // scores of centred families sum to zero on every group
    for kind in AlgorithmKind::ALL.into_iter().filter(|k| k.is_centered()) {
        let alg = AlgorithmId::new(kind, 4, 1.0)?;
        let mut worst = 0.0f64;
        for np in 0..=16 {
            let s = GroupStats::new(16, np)?;
            let p: AdvantagePair = ctx.pair(&alg, &s)?.pair;
            worst = worst.max((np as f64 * p.a_plus + (16 - np) as f64 * p.a_minus).abs());
        }
        out.push(OracleReport::scalar(
            Suite::Identities,
            format!("centred_{kind}"),
            json!({"n": 16, "algorithm": alg.to_string()}),
            worst,
            0.0,
            1e-12,
            ToleranceKind::Abs,
        ));
    }
    Ok(out)
}

//! Softmax policies over a finite response set, one per problem.
//!
//! Parameters are the logits themselves, so every gradient here is exact and
//! closed-form: the score of response `i` is `e_i - pi`, and
//! `d rho / d logit_j = pi_j (1[j correct] - rho)`.

use rand::distributions::{Distribution, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::reward_stats::RewardBatch;
use crate::surrogates::pass_k_of_rho;

/// One problem of a tabular task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    pub m: usize,
    pub correct_mask: Vec<bool>,
    pub initial_logits: Vec<f64>,
}

impl ProblemSpec {
    pub fn new(correct_mask: Vec<bool>, initial_logits: Vec<f64>) -> Result<Self> {
        let spec = Self {
            m: correct_mask.len(),
            correct_mask,
            initial_logits,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// `m` responses with zero logits, the first `n_correct` of them correct.
    pub fn uniform(m: usize, n_correct: usize) -> Result<Self> {
        Self::new((0..m).map(|i| i < n_correct).collect(), vec![0.0; m])
    }

    /// A problem whose initial success rate is exactly `rho`: the correct
    /// responses share `rho` and the wrong ones share `1 - rho`.
    pub fn with_rho(m: usize, n_correct: usize, rho: f64) -> Result<Self> {
        if !(rho > 0.0 && rho < 1.0) {
            return Err(Error::invalid(format!("target rho must lie in (0, 1), got {rho}")));
        }
        if n_correct == 0 || n_correct >= m {
            return Err(Error::invalid("need at least one correct and one wrong response"));
        }
        let lc = (rho / n_correct as f64).ln();
        let lw = ((1.0 - rho) / (m - n_correct) as f64).ln();
        Self::new(
            (0..m).map(|i| i < n_correct).collect(),
            (0..m).map(|i| if i < n_correct { lc } else { lw }).collect(),
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.m < 2 {
            return Err(Error::invalid(format!(
                "problem needs m >= 2 responses, got {}",
                self.m
            )));
        }
        if self.correct_mask.len() != self.m || self.initial_logits.len() != self.m {
            return Err(Error::invalid(format!(
                "mask has {} entries and logits {}, expected m={}",
                self.correct_mask.len(),
                self.initial_logits.len(),
                self.m
            )));
        }
        let n_correct = self.correct_mask.iter().filter(|&&c| c).count();
        if n_correct == 0 || n_correct == self.m {
            return Err(Error::invalid("mask needs at least one correct and one wrong response"));
        }
        if self.initial_logits.iter().any(|l| !l.is_finite()) {
            return Err(Error::invalid("logits must be finite"));
        }
        Ok(())
    }
}

/// A gradient (or any vector) in the logit coordinates of one problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientVec(pub Vec<f64>);

impl GradientVec {
    pub fn zeros(m: usize) -> Self {
        Self(vec![0.0; m])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn scale(&self, c: f64) -> Self {
        Self(self.0.iter().map(|x| c * x).collect())
    }

    /// `self + c * other`.
    pub fn add_scaled(&self, c: f64, other: &GradientVec) -> Self {
        Self(self.0.iter().zip(&other.0).map(|(a, b)| a + c * b).collect())
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn max_abs_diff(&self, other: &GradientVec) -> f64 {
        debug_assert_eq!(self.len(), other.len());
        self.0.iter().zip(&other.0).fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }
}

/// Identifies one deterministic random stream: every `(seed, problem, step)`
/// triple gets its own ChaCha stream, so a batch does not depend on the order
/// in which problems are visited.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngStream {
    pub seed: u64,
    pub problem: u32,
    pub step: u32,
}

impl RngStream {
    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream((u64::from(self.problem) << 32) | u64::from(self.step));
        rng
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Problem {
    mask: Vec<bool>,
    logits: Vec<f64>,
}

/// Per-problem logit vectors with their correctness masks.
///
/// Methods taking a `problem` index panic if it is out of range.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularPolicy {
    problems: Vec<Problem>,
}

impl TabularPolicy {
    pub fn new(specs: &[ProblemSpec]) -> Result<Self> {
        if specs.is_empty() {
            return Err(Error::invalid("policy needs at least one problem"));
        }
        let problems = specs
            .iter()
            .map(|s| {
                s.validate()?;
                Ok(Problem {
                    mask: s.correct_mask.clone(),
                    logits: s.initial_logits.clone(),
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self { problems })
    }

    pub fn single(spec: &ProblemSpec) -> Result<Self> {
        Self::new(std::slice::from_ref(spec))
    }

    pub fn num_problems(&self) -> usize {
        self.problems.len()
    }

    pub fn response_count(&self, problem: usize) -> usize {
        self.problems[problem].mask.len()
    }

    pub fn correct_mask(&self, problem: usize) -> &[bool] {
        &self.problems[problem].mask
    }

    pub fn logits(&self, problem: usize) -> &[f64] {
        &self.problems[problem].logits
    }

    pub fn set_logits(&mut self, problem: usize, logits: Vec<f64>) -> Result<()> {
        if logits.len() != self.response_count(problem) {
            return Err(Error::invalid("logit vector has the wrong length"));
        }
        self.problems[problem].logits = logits;
        Ok(())
    }

    /// `logits += step * direction`.
    pub fn ascend(&mut self, problem: usize, step: f64, direction: &GradientVec) -> Result<()> {
        let logits = &mut self.problems[problem].logits;
        if direction.len() != logits.len() {
            return Err(Error::invalid("gradient has the wrong length"));
        }
        for (l, g) in logits.iter_mut().zip(direction.as_slice()) {
            *l += step * g;
        }
        Ok(())
    }

    pub fn response_probs(&self, problem: usize) -> Vec<f64> {
        let logits = &self.problems[problem].logits;
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
        let z: f64 = exps.iter().sum();
        exps.into_iter().map(|e| e / z).collect()
    }

    /// Mass on correct and on wrong responses, each summed directly so that
    /// neither is computed as one minus the other.
    fn masses(&self, problem: usize, probs: &[f64]) -> (f64, f64) {
        let mask = &self.problems[problem].mask;
        probs
            .iter()
            .zip(mask)
            .fold((0.0, 0.0), |(c, w), (&p, &ok)| if ok { (c + p, w) } else { (c, w + p) })
    }

    pub fn rho(&self, problem: usize) -> f64 {
        self.masses(problem, &self.response_probs(problem)).0
    }

    pub fn rho_k(&self, problem: usize, k: usize) -> f64 {
        pass_k_of_rho(self.rho(problem), k)
    }

    /// Score function `e_i - pi` of response `i`.
    pub fn logprob_grad(&self, problem: usize, response: usize) -> GradientVec {
        let mut g: Vec<f64> = self.response_probs(problem).into_iter().map(|p| -p).collect();
        g[response] += 1.0;
        GradientVec(g)
    }

    /// `d rho / d logits`.
    pub fn exact_rho_grad(&self, problem: usize) -> GradientVec {
        let probs = self.response_probs(problem);
        let (rho, fail) = self.masses(problem, &probs);
        let mask = &self.problems[problem].mask;
        GradientVec(
            probs
                .iter()
                .zip(mask)
                .map(|(&p, &ok)| if ok { p * fail } else { -p * rho })
                .collect(),
        )
    }

    /// Expected score of a response conditioned on it being correct
    /// (`mu_plus`) or wrong (`mu_minus`).
    pub fn conditional_mean_grads(&self, problem: usize) -> (GradientVec, GradientVec) {
        let probs = self.response_probs(problem);
        let (rho, fail) = self.masses(problem, &probs);
        let mask = &self.problems[problem].mask;
        let plus = probs
            .iter()
            .zip(mask)
            .map(|(&p, &ok)| if ok { p / rho - p } else { -p })
            .collect();
        let minus = probs
            .iter()
            .zip(mask)
            .map(|(&p, &ok)| if ok { -p } else { p / fail - p })
            .collect();
        (GradientVec(plus), GradientVec(minus))
    }

    /// Draws `n` IID responses and their rewards.
    pub fn sample_batch(&self, problem: usize, n: usize, stream: RngStream) -> Result<(Vec<usize>, RewardBatch)> {
        if n == 0 {
            return Err(Error::invalid("batch size must be at least 1"));
        }
        let dist = WeightedIndex::new(self.response_probs(problem))
            .map_err(|e| Error::invalid(format!("cannot sample from policy: {e}")))?;
        let mut rng = stream.rng();
        let indices: Vec<usize> = (0..n).map(|_| dist.sample(&mut rng)).collect();
        let mask = &self.problems[problem].mask;
        let rewards = RewardBatch::from_bools(&indices.iter().map(|&i| mask[i]).collect::<Vec<_>>())?;
        Ok((indices, rewards))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn policy(mask: &[bool], logits: &[f64]) -> TabularPolicy {
        TabularPolicy::single(&ProblemSpec::new(mask.to_vec(), logits.to_vec()).unwrap()).unwrap()
    }

    #[test]
    fn spec_validation() {
        assert!(ProblemSpec::new(vec![true], vec![0.0]).is_err());
        assert!(ProblemSpec::new(vec![true, true], vec![0.0, 0.0]).is_err());
        assert!(ProblemSpec::new(vec![false, false], vec![0.0, 0.0]).is_err());
        assert!(ProblemSpec::new(vec![true, false], vec![0.0]).is_err());
        assert!(ProblemSpec::new(vec![true, false], vec![0.0, f64::NAN]).is_err());
        let json = r#"{"m":2,"correct_mask":[true,false],"initial_logits":[0,0],"extra":1}"#;
        assert!(serde_json::from_str::<ProblemSpec>(json).is_err());
        let p = ProblemSpec::with_rho(5, 1, 0.02).unwrap();
        assert!((TabularPolicy::single(&p).unwrap().rho(0) - 0.02).abs() < 1e-15);
    }

    #[test]
    fn probability_examples() {
        let p = policy(&[true, false, false, false], &[0.0; 4]);
        assert_eq!(p.response_probs(0), vec![0.25; 4]);
        assert_eq!(p.rho(0), 0.25);
        let p = policy(&[true, false], &[1f64.ln(), 3f64.ln()]);
        let probs = p.response_probs(0);
        assert!((probs[0] - 0.25).abs() < 1e-15 && (probs[1] - 0.75).abs() < 1e-15);
        let p = policy(&[true, false, false], &[50.0, 0.0, 0.0]);
        assert!((p.rho(0) - 1.0).abs() < 1e-12);
        assert!(p.exact_rho_grad(0).max_abs() <= 1e-10);
        let p = policy(&[true, false], &[0.0, 0.0]);
        assert!((p.rho_k(0, 2) - 0.75).abs() < 1e-15);
    }

    #[test]
    fn gradient_examples() {
        let p = policy(&[true, false], &[0.0, 0.0]);
        assert_eq!(p.logprob_grad(0, 0).0, vec![0.5, -0.5]);
        assert_eq!(p.exact_rho_grad(0).0, vec![0.25, -0.25]);
        let (mp, mm) = p.conditional_mean_grads(0);
        assert_eq!(mp.add_scaled(-1.0, &mm).0, vec![1.0, -1.0]);
    }

    #[test]
    fn sampling_is_reproducible_and_saturates() {
        let p = policy(&[true, false, false], &[0.3, -0.2, 0.1]);
        let s = RngStream {
            seed: 7,
            problem: 0,
            step: 3,
        };
        assert_eq!(p.sample_batch(0, 32, s).unwrap(), p.sample_batch(0, 32, s).unwrap());
        let other = RngStream { step: 4, ..s };
        assert_ne!(
            p.sample_batch(0, 32, s).unwrap().0,
            p.sample_batch(0, 32, other).unwrap().0
        );

        let p = policy(&[true, false, false], &[0.0, 50.0, 0.0]);
        let (idx, _) = p.sample_batch(0, 20, s).unwrap();
        assert!(idx.iter().all(|&i| i == 1));
        assert!(p.sample_batch(0, 0, s).is_err());
    }

    #[test]
    fn empirical_rate_within_binomial_band() {
        let p = policy(&[true, false, false, true, false], &[0.2, -0.4, 0.9, -1.1, 0.0]);
        let rho = p.rho(0);
        let n = 100_000;
        let (_, rewards) = p
            .sample_batch(
                0,
                n,
                RngStream {
                    seed: 11,
                    problem: 0,
                    step: 0,
                },
            )
            .unwrap();
        let hits = rewards.rewards().iter().filter(|&&r| r == 1).count() as f64;
        let sigma = (n as f64 * rho * (1.0 - rho)).sqrt();
        assert!((hits - n as f64 * rho).abs() <= 3.0 * sigma);
    }

    fn logits_strategy() -> impl Strategy<Value = (Vec<bool>, Vec<f64>)> {
        (2usize..=8).prop_flat_map(|m| {
            (
                proptest::collection::vec(any::<bool>(), m)
                    .prop_filter("mixed mask", |mask| mask.iter().any(|&b| b) && mask.iter().any(|&b| !b)),
                proptest::collection::vec(-4.0f64..4.0, m),
            )
        })
    }

    proptest! {
        #[test]
        fn probabilities_normalised((mask, logits) in logits_strategy()) {
            let p = policy(&mask, &logits);
            prop_assert!((p.response_probs(0).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn score_function_properties((mask, logits) in logits_strategy()) {
            let p = policy(&mask, &logits);
            let probs = p.response_probs(0);
            let m = probs.len();
            let mut mean = GradientVec::zeros(m);
            for (i, &pi) in probs.iter().enumerate() {
                let g = p.logprob_grad(0, i);
                prop_assert!(g.0.iter().sum::<f64>().abs() < 1e-12);
                mean = mean.add_scaled(pi, &g);
            }
            prop_assert!(mean.max_abs() < 1e-12);

            // exact gradient as the correct-weighted sum of scores
            let mut direct = GradientVec::zeros(m);
            for i in (0..m).filter(|&i| mask[i]) {
                direct = direct.add_scaled(probs[i], &p.logprob_grad(0, i));
            }
            prop_assert!(direct.max_abs_diff(&p.exact_rho_grad(0)) < 1e-12);
        }

        #[test]
        fn conditional_gradient_identity((mask, logits) in logits_strategy()) {
            let p = policy(&mask, &logits);
            let rho = p.rho(0);
            let (mp, mm) = p.conditional_mean_grads(0);
            let lhs = mp.add_scaled(-1.0, &mm);
            let rhs = p.exact_rho_grad(0).scale(1.0 / (rho * (1.0 - rho)));
            prop_assert!(lhs.max_abs_diff(&rhs) < 1e-12);
            prop_assert!(mp.scale(rho).add_scaled(1.0 - rho, &mm).max_abs() < 1e-12);
        }

        #[test]
        fn shift_invariance((mask, logits) in logits_strategy(), c in -20.0f64..20.0) {
            let p = policy(&mask, &logits);
            let shifted: Vec<f64> = logits.iter().map(|l| l + c).collect();
            let q = policy(&mask, &shifted);
            let pp = GradientVec(p.response_probs(0));
            prop_assert!(pp.max_abs_diff(&GradientVec(q.response_probs(0))) < 1e-12);
            prop_assert!((p.rho(0) - q.rho(0)).abs() < 1e-12);
            prop_assert!(p.exact_rho_grad(0).max_abs_diff(&q.exact_rho_grad(0)) < 1e-12);
            prop_assert!(p.logprob_grad(0, 0).max_abs_diff(&q.logprob_grad(0, 0)) < 1e-12);
        }

        #[test]
        fn rho_grad_matches_finite_differences((mask, logits) in logits_strategy()) {
            let p = policy(&mask, &logits);
            let g = p.exact_rho_grad(0);
            let h = 1e-6;
            let mut fd = Vec::new();
            for j in 0..logits.len() {
                let mut up = logits.clone();
                up[j] += h;
                let mut down = logits.clone();
                down[j] -= h;
                fd.push((policy(&mask, &up).rho(0) - policy(&mask, &down).rho(0)) / (2.0 * h));
            }
            let err = g.max_abs_diff(&GradientVec(fd));
            prop_assert!(err <= 1e-6 * g.max_abs(), "err={} scale={}", err, g.max_abs());
        }
    }
}

//! Stochastic gradient ascent on a tabular task.
//!
//! Every step samples one group of `n` responses per problem, turns rewards
//! into scores with the configured algorithm, and moves each problem's logits
//! by `learning_rate / P` times its group gradient (the mean over the `P`
//! problems of the per-example gradients). Metrics use the exact success rate
//! of the current policy.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::advantage::{per_response_advantages, AlgorithmId, AlgorithmKind, DEFAULT_ENTROPY_LAMBDA};
use crate::error::{Error, Result};
use crate::oracle::expected_gradient;
use crate::surrogates::pass_k_of_rho;
use crate::tabular::{GradientVec, ProblemSpec, RngStream, TabularPolicy};

/// How the per-problem gradient is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradientMode {
    /// One sampled group per problem and step.
    #[default]
    Sampled,
    /// The exact expectation of the sampled estimator.
    Exact,
}

fn default_k() -> usize {
    1
}

fn default_lambda() -> f64 {
    DEFAULT_ENTROPY_LAMBDA
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub problems: Vec<ProblemSpec>,
    pub algorithm: AlgorithmKind,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    pub n: usize,
    pub steps: usize,
    pub learning_rate: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub eval_ks: Vec<usize>,
    #[serde(default)]
    pub gradient: GradientMode,
}

impl TrainConfig {
    pub fn algorithm_id(&self) -> Result<AlgorithmId> {
        AlgorithmId::new(self.algorithm, self.k, self.lambda)
    }

    pub fn validate(&self) -> Result<AlgorithmId> {
        if self.problems.is_empty() {
            return Err(Error::invalid("at least one problem is required"));
        }
        for (i, p) in self.problems.iter().enumerate() {
            p.validate().map_err(|e| Error::invalid(format!("problem {i}: {e}")))?;
        }
        if self.problems.len() > u32::MAX as usize || self.steps > u32::MAX as usize {
            return Err(Error::invalid("too many problems or steps"));
        }
        if self.steps < 1 {
            return Err(Error::invalid("steps must be at least 1"));
        }
        if self.n < 1 {
            return Err(Error::invalid("group size n must be at least 1"));
        }
        let baseline_free = matches!(
            self.algorithm,
            AlgorithmKind::Reinforce | AlgorithmKind::ReinforceK | AlgorithmKind::PositiveCoeff
        );
        if !baseline_free && self.n < 2 {
            return Err(Error::invalid(format!("{} needs n >= 2", self.algorithm)));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning_rate must be finite and >= 0"));
        }
        if self.eval_ks.iter().any(|&k| k < 1) {
            return Err(Error::invalid("eval_ks entries must be >= 1"));
        }
        let alg = self.algorithm_id()?;
        if alg.kind.needs_k_le_n() && alg.k > self.n {
            return Err(Error::invalid(format!(
                "{} with k={} needs k <= n={}",
                alg.kind, alg.k, self.n
            )));
        }
        Ok(alg)
    }
}

/// Exact success rates of the policy at one point in training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub rho: Vec<f64>,
    pub pass_at: BTreeMap<usize, Vec<f64>>,
    pub mean_rho: f64,
    pub mean_pass_at: BTreeMap<usize, f64>,
}

impl Snapshot {
    pub fn of(policy: &TabularPolicy, eval_ks: &[usize]) -> Self {
        let rho: Vec<f64> = (0..policy.num_problems()).map(|p| policy.rho(p)).collect();
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let mut pass_at = BTreeMap::new();
        let mut mean_pass_at = BTreeMap::new();
        for &k in eval_ks {
            let v: Vec<f64> = rho.iter().map(|&r| pass_k_of_rho(r, k)).collect();
            mean_pass_at.insert(k, mean(&v));
            pass_at.insert(k, v);
        }
        Self {
            mean_rho: mean(&rho),
            rho,
            pass_at,
            mean_pass_at,
        }
    }
}

/// Metrics of one step: the policy before the step's update and the number
/// of sampled groups that were all-correct or all-wrong.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub step: usize,
    #[serde(flatten)]
    pub metrics: Snapshot,
    pub degenerate_groups: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub algorithm: String,
    pub steps: usize,
    pub initial: Snapshot,
    #[serde(rename = "final")]
    pub final_: Snapshot,
    pub degenerate_groups: usize,
}

#[derive(Debug, Clone)]
pub struct TrainRun {
    pub rows: Vec<MetricsRow>,
    pub summary: TrainSummary,
    pub policy: TabularPolicy,
}

/// `(1/n) sum_i A_i grad_i`.
pub fn assemble_gradient(advantages: &[f64], grads: &[GradientVec]) -> Result<GradientVec> {
    if advantages.len() != grads.len() {
        return Err(Error::invalid(format!(
            "{} advantages for {} gradients",
            advantages.len(),
            grads.len()
        )));
    }
    let Some(first) = grads.first() else {
        return Err(Error::invalid("cannot assemble an empty batch"));
    };
    let dim = first.len();
    if grads.iter().any(|g| g.len() != dim) {
        return Err(Error::invalid("gradients have different lengths"));
    }
    let n = grads.len() as f64;
    let mut out = vec![0.0; dim];
    for (a, g) in advantages.iter().zip(grads) {
        for (o, x) in out.iter_mut().zip(g.as_slice()) {
            *o += a * x;
        }
    }
    Ok(GradientVec(out.into_iter().map(|x| x / n).collect()))
}

/// Group gradient of one problem at one step, and whether the sampled group
/// was all-correct or all-wrong.
fn problem_gradient(
    config: &TrainConfig,
    alg: &AlgorithmId,
    policy: &TabularPolicy,
    problem: usize,
    step: usize,
) -> Result<(GradientVec, bool)> {
    match config.gradient {
        GradientMode::Exact => Ok((expected_gradient(alg, policy, problem, config.n)?, false)),
        GradientMode::Sampled => {
            let stream = RngStream {
                seed: config.seed,
                problem: problem as u32,
                step: step as u32,
            };
            let (indices, batch) = policy.sample_batch(problem, config.n, stream)?;
            let adv = per_response_advantages(alg, &batch)?;
            let grads: Vec<GradientVec> = indices.iter().map(|&i| policy.logprob_grad(problem, i)).collect();
            let n_plus = batch.rewards().iter().filter(|&&r| r == 1).count();
            let degenerate = n_plus == 0 || n_plus == batch.len();
            Ok((assemble_gradient(&adv.values, &grads)?, degenerate))
        }
    }
}

pub fn train(config: &TrainConfig) -> Result<TrainRun> {
    let alg = config.validate()?;
    let mut policy = TabularPolicy::new(&config.problems)?;
    let problems = policy.num_problems();
    let step_size = config.learning_rate / problems as f64;
    let initial = Snapshot::of(&policy, &config.eval_ks);
    let mut rows = Vec::with_capacity(config.steps);
    let mut total_degenerate = 0;

    for step in 0..config.steps {
        let metrics = Snapshot::of(&policy, &config.eval_ks);
        let mut updates = Vec::with_capacity(problems);
        let mut degenerate = 0;
        for p in 0..problems {
            let (g, deg) = problem_gradient(config, &alg, &policy, p, step)?;
            degenerate += usize::from(deg);
            updates.push(g);
        }
        for (p, g) in updates.iter().enumerate() {
            policy.ascend(p, step_size, g)?;
        }
        total_degenerate += degenerate;
        rows.push(MetricsRow {
            step,
            metrics,
            degenerate_groups: degenerate,
        });
    }

    let summary = TrainSummary {
        algorithm: alg.to_string(),
        steps: config.steps,
        initial,
        final_: Snapshot::of(&policy, &config.eval_ks),
        degenerate_groups: total_degenerate,
    };
    Ok(TrainRun { rows, summary, policy })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::advantage::advantage_pair;
    use crate::oracle::implied_surrogate;
    use crate::reward_stats::summarize;
    use crate::surrogates::surrogate_eval;
    use proptest::prelude::*;

    fn two_problem_config(algorithm: AlgorithmKind, steps: usize, lr: f64) -> TrainConfig {
        TrainConfig {
            problems: vec![
                ProblemSpec::new(vec![true, false, false, false], vec![0.0, 0.5, 0.0, -0.5]).unwrap(),
                ProblemSpec::new(vec![false, true, false], vec![1.0, 0.0, 0.0]).unwrap(),
            ],
            algorithm,
            k: 1,
            lambda: 1.0,
            n: 8,
            steps,
            learning_rate: lr,
            seed: 3,
            eval_ks: vec![1, 4],
            gradient: GradientMode::Sampled,
        }
    }

    #[test]
    fn assemble_examples() {
        let g = vec![GradientVec(vec![1.0, -1.0]), GradientVec(vec![0.5, 0.25])];
        assert_eq!(assemble_gradient(&[0.0, 0.0], &g).unwrap().0, vec![0.0, 0.0]);
        assert_eq!(assemble_gradient(&[1.0], &g[..1]).unwrap().0, vec![1.0, -1.0]);
        assert!(assemble_gradient(&[1.0], &g).is_err());
        assert!(assemble_gradient(&[], &[]).is_err());
    }

    #[test]
    fn zero_learning_rate_keeps_metrics() {
        let run = train(&two_problem_config(AlgorithmKind::Grpo, 20, 0.0)).unwrap();
        assert!(run.rows.iter().all(|r| r.metrics == run.rows[0].metrics));
        assert_eq!(run.summary.final_, run.summary.initial);
    }

    #[test]
    fn identical_seeds_are_bit_identical() {
        let cfg = two_problem_config(AlgorithmKind::GrpoK, 50, 0.5);
        let cfg = TrainConfig { k: 4, ..cfg };
        let a = train(&cfg).unwrap();
        let b = train(&cfg).unwrap();
        assert_eq!(a.rows, b.rows);
        assert_eq!(a.summary, b.summary);
        let c = train(&TrainConfig { seed: 4, ..cfg }).unwrap();
        assert_ne!(a.rows, c.rows);
    }

    #[test]
    fn grpo_ascends_over_every_window() {
        let run = train(&two_problem_config(AlgorithmKind::Grpo, 500, 0.5)).unwrap();
        let means: Vec<f64> = run.rows.iter().map(|r| r.metrics.mean_rho).collect();
        for t in 0..means.len() - 100 {
            assert!(
                means[t + 100] > means[t] - 1e-9,
                "t={t} {} -> {}",
                means[t],
                means[t + 100]
            );
        }
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let base = two_problem_config(AlgorithmKind::Grpo, 10, 0.5);
        assert!(train(&TrainConfig {
            steps: 0,
            ..base.clone()
        })
        .is_err());
        assert!(train(&TrainConfig { n: 1, ..base.clone() }).is_err());
        assert!(train(&TrainConfig {
            learning_rate: f64::NAN,
            ..base.clone()
        })
        .is_err());
        assert!(train(&TrainConfig {
            problems: vec![],
            ..base.clone()
        })
        .is_err());
        assert!(train(&TrainConfig {
            algorithm: AlgorithmKind::GrpoK,
            k: 9,
            ..base.clone()
        })
        .is_err());
        assert!(train(&TrainConfig {
            eval_ks: vec![0],
            ..base.clone()
        })
        .is_err());
        let json = r#"{"problems":[],"algorithm":"grpo","n":4,"steps":1,"learning_rate":0.1,"bogus":1}"#;
        assert!(serde_json::from_str::<TrainConfig>(json).is_err());
    }

    #[test]
    fn expected_ascent_on_implied_surrogate() {
        use AlgorithmKind::*;
        for (kind, k) in [
            (Rloo, 1),
            (Grpo, 1),
            (SkewR, 1),
            (GrpoK, 4),
            (GrpoTilde, 4),
            (RlooK, 4),
            (BiasedPow, 4),
            (EntropyGrpo, 1),
        ] {
            let cfg = TrainConfig {
                k,
                gradient: GradientMode::Exact,
                ..two_problem_config(kind, 200, 1e-3)
            };
            let alg = cfg.algorithm_id().unwrap();
            let (sid, _) = implied_surrogate(&alg).unwrap();
            let run = train(&cfg).unwrap();
            for p in 0..2 {
                let f: Vec<f64> = run
                    .rows
                    .iter()
                    .map(|r| surrogate_eval(&sid, r.metrics.rho[p]).unwrap())
                    .collect();
                assert!(f.windows(2).all(|w| w[1] >= w[0]), "{alg} problem {p}");
            }
        }
    }

    #[test]
    fn degenerate_groups_leave_grpo_untouched() {
        // success rate so low that every group of 4 fails
        let cfg = TrainConfig {
            problems: vec![ProblemSpec::new(vec![true, false], vec![-60.0, 0.0]).unwrap()],
            n: 4,
            steps: 5,
            ..two_problem_config(AlgorithmKind::Grpo, 5, 0.5)
        };
        let run = train(&cfg).unwrap();
        assert_eq!(run.summary.degenerate_groups, 5);
        assert_eq!(run.policy.logits(0), &[-60.0, 0.0]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn per_response_and_weighted_forms_agree(
            seed in 0u64..1000,
            logits in proptest::collection::vec(-2.0f64..2.0, 4),
            kind_idx in 0usize..AlgorithmKind::ALL.len(),
        ) {
            let spec = ProblemSpec::new(vec![true, false, true, false], logits).unwrap();
            let policy = TabularPolicy::single(&spec).unwrap();
            let alg = AlgorithmId::new(AlgorithmKind::ALL[kind_idx], 3, 1.0).unwrap();
            let (idx, batch) = policy.sample_batch(0, 6, RngStream { seed, problem: 0, step: 0 }).unwrap();
            let adv = per_response_advantages(&alg, &batch).unwrap();
            let grads: Vec<GradientVec> = idx.iter().map(|&i| policy.logprob_grad(0, i)).collect();
            let direct = assemble_gradient(&adv.values, &grads).unwrap();

            let stats = summarize(&batch).unwrap();
            let pair = advantage_pair(&alg, &stats).unwrap().pair;
            let mean_of = |want: u8| {
                let sel: Vec<&GradientVec> = idx.iter().zip(batch.rewards()).filter(|(_, &r)| r == want).map(|(&i, _)| &grads[idx.iter().position(|&j| j == i).unwrap()]).collect();
                let mut acc = GradientVec::zeros(4);
                for g in &sel {
                    acc = acc.add_scaled(1.0 / sel.len() as f64, g);
                }
                acc
            };
            let mut grouped = GradientVec::zeros(4);
            if stats.n_plus > 0 {
                grouped = grouped.add_scaled(stats.rho_hat * pair.a_plus, &mean_of(1));
            }
            if stats.n_minus > 0 {
                grouped = grouped.add_scaled((1.0 - stats.rho_hat) * pair.a_minus, &mean_of(0));
            }
            prop_assert!(direct.max_abs_diff(&grouped) < 1e-12);
        }
    }
}

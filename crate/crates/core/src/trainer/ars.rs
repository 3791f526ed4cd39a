//! Augmented Random Search over [`LinearPolicy`] weights.
//!
//! Each iteration samples `N` standard-normal directions `δ_k`, rolls out the
//! policy with weights `θ + νδ_k` and `θ − νδ_k`, keeps the `b` directions with
//! the largest `max(r⁺, r⁻)`, and moves
//!
//! ```text
//! θ ← θ + α / (b · σ_R) · Σ_top (r⁺_k − r⁻_k) δ_k
//! ```
//!
//! where `σ_R` is the standard deviation of the `2b` retained returns. The V2
//! variant additionally whitens observations with running statistics gathered
//! from every rollout; statistics are frozen within an iteration.

use std::sync::Arc;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::eval::{evaluate, run_episode, EpisodeSummary};
use super::TrainError;
use crate::env::EnvConfig;
use crate::policy::{LinearPolicy, RunningStats};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArsVariant {
    /// Raw observations.
    V1,
    /// Online observation whitening.
    V2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ArsConfig {
    /// Learning rate α.
    pub step_size: f64,
    pub n_directions: usize,
    pub top_b: usize,
    /// Exploration noise ν: perturbations are `ν · δ` with `δ ~ N(0, I)`.
    pub noise: f64,
    pub n_iterations: usize,
    /// Evaluate the unperturbed policy every this many iterations (0 disables).
    pub eval_every: usize,
    pub eval_episodes: usize,
    pub seed: u64,
    pub variant: ArsVariant,
}

impl Default for ArsConfig {
    fn default() -> Self {
        Self {
            step_size: 0.019,
            n_directions: 16,
            top_b: 8,
            noise: 0.05,
            n_iterations: 200,
            eval_every: 10,
            eval_episodes: 1,
            seed: 33,
            variant: ArsVariant::V2,
        }
    }
}

impl ArsConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |msg: &str| Err(TrainError::InvalidConfig(msg.to_string()));
        if !(self.step_size >= 0.0 && self.step_size.is_finite()) {
            return bad("step_size must be finite and non-negative");
        }
        if !(self.noise > 0.0 && self.noise.is_finite()) {
            return bad("noise must be positive");
        }
        if self.n_directions == 0 {
            return bad("n_directions must be at least 1");
        }
        if self.top_b == 0 || self.top_b > self.n_directions {
            return bad("top_b must be in 1..=n_directions");
        }
        Ok(())
    }
}

/// Outcome of aggregating one iteration's rollouts into a weight step.
#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    /// Indices of the retained directions, best first.
    pub top: Vec<usize>,
    pub sigma_r: f64,
    /// The increment added to the weights, or `None` when `σ_R` is zero.
    pub step: Option<Vec<f64>>,
}

/// Top-b selection and σ_R-scaled update from per-direction returns.
pub fn aggregate_update(
    directions: &[Vec<f64>],
    r_plus: &[f64],
    r_minus: &[f64],
    top_b: usize,
    step_size: f64,
) -> Aggregate {
    let n = directions.len();
    assert!(r_plus.len() == n && r_minus.len() == n && (1..=n).contains(&top_b));
    let mut order: Vec<usize> = (0..n).collect();
    // stable sort keeps lower indices first among ties
    order.sort_by(|&a, &b| {
        let ka = r_plus[a].max(r_minus[a]);
        let kb = r_plus[b].max(r_minus[b]);
        kb.total_cmp(&ka)
    });
    order.truncate(top_b);

    let retained: Vec<f64> = order.iter().flat_map(|&k| [r_plus[k], r_minus[k]]).collect();
    let mean = retained.iter().sum::<f64>() / retained.len() as f64;
    let sigma_r =
        (retained.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / retained.len() as f64).sqrt();

    let step = (sigma_r > 0.0 && sigma_r.is_finite()).then(|| {
        let dim = directions[0].len();
        let mut acc = vec![0.0; dim];
        for &k in &order {
            let diff = r_plus[k] - r_minus[k];
            for (a, d) in acc.iter_mut().zip(&directions[k]) {
                *a += diff * d;
            }
        }
        let scale = step_size / (top_b as f64 * sigma_r);
        acc.iter_mut().for_each(|a| *a *= scale);
        acc
    });
    Aggregate {
        top: order,
        sigma_r,
        step,
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent stream for direction `k` of iteration `iteration`.
pub fn direction_rng(seed: u64, iteration: usize, k: usize) -> ChaCha8Rng {
    let s = splitmix64(splitmix64(seed ^ splitmix64(iteration as u64)) ^ k as u64);
    ChaCha8Rng::seed_from_u64(s)
}

pub fn sample_direction(seed: u64, iteration: usize, k: usize, dim: usize) -> Vec<f64> {
    let mut rng = direction_rng(seed, iteration, k);
    (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub mean_reward: f64,
    pub success_rate: f64,
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Mean episodic reward over the `2N` perturbed rollouts.
    pub mean_reward: f64,
    pub max_reward: f64,
    /// Environment steps consumed by this iteration's rollouts.
    pub iteration_timesteps: u64,
    /// Cumulative environment steps including this iteration.
    pub timesteps: u64,
    pub sigma_r: f64,
    /// σ_R was zero, so the weights were left unchanged.
    pub update_skipped: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eval: Option<EvalSummary>,
    pub wall_time_s: f64,
}

/// Everything an iteration saw, for auditing the update.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationTrace {
    pub weights_before: Vec<f64>,
    pub weights_after: Vec<f64>,
    pub directions: Vec<Vec<f64>>,
    pub r_plus: Vec<f64>,
    pub r_minus: Vec<f64>,
    pub episodes_plus: Vec<EpisodeSummary>,
    pub episodes_minus: Vec<EpisodeSummary>,
    pub aggregate: Aggregate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub iterations: usize,
    pub total_timesteps: u64,
    pub best_mean_reward: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub best_eval_reward: Option<f64>,
    pub skipped_updates: usize,
    pub wall_time_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub policy_path: Option<String>,
}

/// Per-iteration records plus totals.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub iterations: Vec<IterationRecord>,
    pub summary: TrainSummary,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum ReportLine {
    Iteration(IterationRecord),
    Summary(TrainSummary),
}

impl TrainReport {
    /// One JSON object per line: every iteration, then the summary.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.iterations {
            out.push_str(&serde_json::to_string(&ReportLine::Iteration(r.clone())).unwrap());
            out.push('\n');
        }
        out.push_str(&serde_json::to_string(&ReportLine::Summary(self.summary.clone())).unwrap());
        out.push('\n');
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self, serde_json::Error> {
        let mut iterations = Vec::new();
        let mut summary = None;
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            match serde_json::from_str(line)? {
                ReportLine::Iteration(r) => iterations.push(r),
                ReportLine::Summary(s) => summary = Some(s),
            }
        }
        let summary = summary.unwrap_or_else(|| TrainSummary {
            iterations: iterations.len(),
            total_timesteps: iterations.last().map_or(0, |r| r.timesteps),
            best_mean_reward: iterations
                .iter()
                .map(|r| r.mean_reward)
                .fold(f64::NEG_INFINITY, f64::max),
            best_eval_reward: None,
            skipped_updates: iterations.iter().filter(|r| r.update_skipped).count(),
            wall_time_s: iterations.last().map_or(0.0, |r| r.wall_time_s),
            policy_path: None,
        });
        Ok(Self {
            iterations,
            summary,
        })
    }

    /// Reward-versus-timestep series for plotting.
    pub fn learning_curve_csv(&self) -> String {
        let mut out =
            String::from("iteration,timesteps,mean_reward,max_reward,eval_mean_reward,eval_success_rate\n");
        for r in &self.iterations {
            let (em, es) = r
                .eval
                .as_ref()
                .map(|e| (e.mean_reward.to_string(), e.success_rate.to_string()))
                .unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.iteration, r.timesteps, r.mean_reward, r.max_reward, em, es
            ));
        }
        out
    }
}

/// Stateful ARS driver; [`ars_train`] runs it to completion.
pub struct ArsTrainer {
    env: Arc<EnvConfig>,
    config: ArsConfig,
    policy: LinearPolicy,
    iteration: usize,
    timesteps: u64,
    started: Instant,
}

struct DirectionResult {
    plus: EpisodeSummary,
    minus: EpisodeSummary,
    stats: RunningStats,
}

impl ArsTrainer {
    pub fn new(env: &EnvConfig, config: ArsConfig) -> Result<Self, TrainError> {
        env.validate()?;
        config.validate()?;
        Ok(Self {
            policy: LinearPolicy::for_config(env),
            env: Arc::new(env.clone()),
            config,
            iteration: 0,
            timesteps: 0,
            started: Instant::now(),
        })
    }

    /// Continue training from an existing policy.
    pub fn with_policy(mut self, policy: LinearPolicy) -> Result<Self, TrainError> {
        policy.check_config(&self.env)?;
        self.policy = policy;
        Ok(self)
    }

    pub fn policy(&self) -> &LinearPolicy {
        &self.policy
    }

    pub fn into_policy(self) -> LinearPolicy {
        self.policy
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn timesteps(&self) -> u64 {
        self.timesteps
    }

    pub fn config(&self) -> &ArsConfig {
        &self.config
    }

    /// Rollout returns for explicitly given directions, using the current
    /// policy and normalization. Does not modify the trainer.
    pub fn rollout_directions(
        &self,
        directions: &[Vec<f64>],
    ) -> Result<(Vec<EpisodeSummary>, Vec<EpisodeSummary>), TrainError> {
        let results = self.run_directions(directions)?;
        Ok(results.into_iter().map(|r| (r.plus, r.minus)).unzip())
    }

    fn run_directions(&self, directions: &[Vec<f64>]) -> Result<Vec<DirectionResult>, TrainError> {
        let base = self.policy.weights();
        let nu = self.config.noise;
        let episode_seed = self.config.seed.wrapping_add(self.iteration as u64);
        let collect = self.config.variant == ArsVariant::V2;
        directions
            .par_iter()
            .map(|delta| {
                let plus_w = base.iter().zip(delta).map(|(w, d)| w + nu * d).collect();
                let minus_w = base.iter().zip(delta).map(|(w, d)| w - nu * d).collect();
                let plus_p = self.policy.with_weights(plus_w)?;
                let minus_p = self.policy.with_weights(minus_w)?;
                let mut stats = RunningStats::new(self.policy.obs_dim());
                let obs = collect.then_some(&mut stats);
                let plus = run_episode(&self.env, &plus_p, episode_seed, obs, None)?;
                let obs = collect.then_some(&mut stats);
                let minus = run_episode(&self.env, &minus_p, episode_seed, obs, None)?;
                Ok(DirectionResult { plus, minus, stats })
            })
            .collect()
    }

    /// Runs one iteration and returns its log record and full trace.
    pub fn step(&mut self) -> Result<(IterationRecord, IterationTrace), TrainError> {
        let dim = self.policy.weights().len();
        let directions: Vec<Vec<f64>> = (0..self.config.n_directions)
            .map(|k| sample_direction(self.config.seed, self.iteration, k, dim))
            .collect();
        let results = self.run_directions(&directions)?;

        let r_plus: Vec<f64> = results.iter().map(|r| r.plus.reward).collect();
        let r_minus: Vec<f64> = results.iter().map(|r| r.minus.reward).collect();
        let aggregate = aggregate_update(
            &directions,
            &r_plus,
            &r_minus,
            self.config.top_b,
            self.config.step_size,
        );

        let weights_before = self.policy.weights().to_vec();
        match &aggregate.step {
            Some(step) => {
                let updated = weights_before.iter().zip(step).map(|(w, s)| w + s).collect();
                self.policy.set_weights(updated)?;
            }
            None => log::warn!(
                "iteration {}: all retained returns are equal, skipping update",
                self.iteration
            ),
        }
        if self.config.variant == ArsVariant::V2 {
            let mut batch = RunningStats::new(self.policy.obs_dim());
            for r in &results {
                batch.merge(&r.stats);
            }
            self.policy.merge_normalization(&batch);
        }

        let iteration_timesteps: u64 = results
            .iter()
            .map(|r| u64::from(r.plus.steps) + u64::from(r.minus.steps))
            .sum();
        self.timesteps += iteration_timesteps;
        let all: Vec<f64> = r_plus.iter().chain(&r_minus).copied().collect();
        let mean_reward = all.iter().sum::<f64>() / all.len() as f64;
        let max_reward = all.iter().copied().fold(f64::NEG_INFINITY, f64::max);

        let iteration = self.iteration;
        self.iteration += 1;
        let due = self.config.eval_every > 0
            && (self.iteration.is_multiple_of(self.config.eval_every)
                || self.iteration == self.config.n_iterations);
        let eval = if due && self.config.eval_episodes > 0 {
            let stats = evaluate(
                &self.policy,
                &self.env,
                self.config.eval_episodes,
                self.config.seed,
            )?;
            Some(EvalSummary {
                mean_reward: stats.mean,
                success_rate: stats.success_rate,
            })
        } else {
            None
        };

        let record = IterationRecord {
            iteration,
            mean_reward,
            max_reward,
            iteration_timesteps,
            timesteps: self.timesteps,
            sigma_r: aggregate.sigma_r,
            update_skipped: aggregate.step.is_none(),
            eval,
            wall_time_s: self.started.elapsed().as_secs_f64(),
        };
        log::debug!(
            "iter {} mean {:.1} max {:.1} steps {}",
            record.iteration,
            record.mean_reward,
            record.max_reward,
            record.timesteps
        );
        let trace = IterationTrace {
            weights_after: self.policy.weights().to_vec(),
            weights_before,
            directions,
            r_plus,
            r_minus,
            episodes_plus: results.iter().map(|r| r.plus.clone()).collect(),
            episodes_minus: results.iter().map(|r| r.minus.clone()).collect(),
            aggregate,
        };
        Ok((record, trace))
    }
}

/// Trains a zero-initialized linear policy for `ars.n_iterations` iterations.
pub fn ars_train(
    cfg: &EnvConfig,
    ars: &ArsConfig,
) -> Result<(LinearPolicy, TrainReport), TrainError> {
    let mut trainer = ArsTrainer::new(cfg, ars.clone())?;
    let mut iterations = Vec::with_capacity(ars.n_iterations);
    for _ in 0..ars.n_iterations {
        let (record, _) = trainer.step()?;
        iterations.push(record);
    }
    let summary = TrainSummary {
        iterations: iterations.len(),
        total_timesteps: trainer.timesteps(),
        best_mean_reward: iterations
            .iter()
            .map(|r| r.mean_reward)
            .fold(f64::NEG_INFINITY, f64::max),
        best_eval_reward: iterations
            .iter()
            .filter_map(|r| r.eval.as_ref().map(|e| e.mean_reward))
            .reduce(f64::max),
        skipped_updates: iterations.iter().filter(|r| r.update_skipped).count(),
        wall_time_s: trainer.started.elapsed().as_secs_f64(),
        policy_path: None,
    };
    Ok((
        trainer.into_policy(),
        TrainReport {
            iterations,
            summary,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::variation::toy_env;

    #[test]
    fn config_validation() {
        ArsConfig::default().validate().unwrap();
        let bad = ArsConfig {
            top_b: 17,
            ..ArsConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = ArsConfig {
            noise: 0.0,
            ..ArsConfig::default()
        };
        assert!(bad.validate().is_err());
        let parsed: ArsConfig = serde_json::from_str(r#"{"n_iterations": 5, "variant": "v1"}"#).unwrap();
        assert_eq!(parsed.n_iterations, 5);
        assert_eq!(parsed.variant, ArsVariant::V1);
        assert_eq!(parsed.step_size, 0.019);
    }

    #[test]
    fn aggregate_skips_when_returns_are_equal() {
        let dirs = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let agg = aggregate_update(&dirs, &[3.0, 3.0], &[3.0, 3.0], 2, 0.1);
        assert_eq!(agg.sigma_r, 0.0);
        assert!(agg.step.is_none());
    }

    #[test]
    fn aggregate_picks_best_directions() {
        let dirs = vec![vec![1.0], vec![2.0], vec![3.0]];
        let agg = aggregate_update(&dirs, &[0.0, 5.0, 1.0], &[1.0, 0.0, 4.0], 2, 1.0);
        assert_eq!(agg.top, vec![1, 2]);
        // retained returns 5, 0, 1, 4: mean 2.5, population std sqrt(4.25)
        let sigma = 4.25f64.sqrt();
        assert_eq!(agg.sigma_r, sigma);
        let expected = (5.0 * 2.0 + (1.0 - 4.0) * 3.0) / (2.0 * sigma);
        assert!((agg.step.unwrap()[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn directions_are_reproducible_and_distinct() {
        assert_eq!(sample_direction(1, 2, 3, 5), sample_direction(1, 2, 3, 5));
        assert_ne!(sample_direction(1, 2, 3, 5), sample_direction(1, 2, 4, 5));
        assert_ne!(sample_direction(1, 2, 3, 5), sample_direction(1, 3, 3, 5));
    }

    #[test]
    fn zero_step_size_leaves_weights() {
        let ars = ArsConfig {
            step_size: 0.0,
            n_directions: 4,
            top_b: 2,
            n_iterations: 3,
            eval_every: 0,
            ..ArsConfig::default()
        };
        let (policy, report) = ars_train(&toy_env(), &ars).unwrap();
        assert!(policy.weights().iter().all(|w| *w == 0.0));
        assert_eq!(report.iterations.len(), 3);
    }

    #[test]
    fn report_jsonl_roundtrip() {
        let ars = ArsConfig {
            n_directions: 2,
            top_b: 1,
            n_iterations: 2,
            eval_every: 1,
            ..ArsConfig::default()
        };
        let (_, report) = ars_train(&toy_env(), &ars).unwrap();
        let text = report.to_jsonl();
        assert_eq!(text.lines().count(), 3);
        let back = TrainReport::from_jsonl(&text).unwrap();
        assert_eq!(back, report);
        let csv = report.learning_curve_csv();
        assert_eq!(csv.lines().count(), 3);
    }
}

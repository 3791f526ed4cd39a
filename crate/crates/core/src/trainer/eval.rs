use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::TrainError;
use crate::env::{Env, EnvConfig, StepOutcome, TerminationCause, Wind};
use crate::env::Action;
use crate::geometry::euclidean_distance;
use crate::policy::{Policy, RunningStats};
use crate::trajectory::Trajectory;

/// Result of running one policy for one episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub seed: u64,
    pub reward: f64,
    pub steps: u32,
    pub cause: TerminationCause,
    /// Total distance travelled, summed over robots.
    pub path_length: f64,
}

impl EpisodeSummary {
    pub fn success(&self) -> bool {
        self.cause.is_success()
    }
}

/// Callback receiving each submitted action and its outcome.
pub type StepHook<'a> = &'a mut dyn FnMut(&Action, &StepOutcome);

/// Runs one episode from reset to termination.
///
/// `observations` receives every observation the policy acted on;
/// `on_step` sees each submitted action and its outcome.
pub fn run_episode<P: Policy + ?Sized>(
    cfg: &Arc<EnvConfig>,
    policy: &P,
    seed: u64,
    mut observations: Option<&mut RunningStats>,
    mut on_step: Option<StepHook<'_>>,
) -> Result<EpisodeSummary, TrainError> {
    let mut env = Env::reset_validated(cfg.clone(), seed);
    let mut reward = 0.0;
    let mut path_length = 0.0;
    loop {
        let obs = env.observation();
        if let Some(stats) = observations.as_deref_mut() {
            stats.push(&obs);
        }
        let action = policy.act(&obs, &cfg.force_bounds)?;
        let before = env.state().positions.clone();
        let out = env.step(&action)?;
        path_length += before
            .iter()
            .zip(&out.next_state.positions)
            .map(|(p, q)| euclidean_distance(*p, *q))
            .sum::<f64>();
        reward += out.reward;
        if let Some(f) = on_step.as_mut() {
            f(&action, &out);
        }
        if out.terminated {
            return Ok(EpisodeSummary {
                seed,
                reward,
                steps: out.next_state.step_count,
                cause: out.cause,
                path_length,
            });
        }
    }
}

/// Mean, spread and success statistics over evaluation episodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalStats {
    pub episodes: Vec<EpisodeSummary>,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub max: f64,
    pub min: f64,
    /// `max - min`.
    pub range: f64,
    pub success_rate: f64,
    pub mean_path_length: f64,
    pub mean_steps: f64,
}

impl EvalStats {
    pub fn from_episodes(episodes: Vec<EpisodeSummary>) -> Self {
        let n = episodes.len().max(1) as f64;
        let rewards: Vec<f64> = episodes.iter().map(|e| e.reward).collect();
        let mean = rewards.iter().sum::<f64>() / n;
        let var = rewards.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
        let max = rewards.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = rewards.iter().copied().fold(f64::INFINITY, f64::min);
        let (max, min) = if episodes.is_empty() { (0.0, 0.0) } else { (max, min) };
        Self {
            mean,
            std: var.sqrt(),
            max,
            min,
            range: max - min,
            success_rate: episodes.iter().filter(|e| e.success()).count() as f64 / n,
            mean_path_length: episodes.iter().map(|e| e.path_length).sum::<f64>() / n,
            mean_steps: episodes.iter().map(|e| e.steps as f64).sum::<f64>() / n,
            episodes,
        }
    }
}

/// Evaluates with frozen normalization; episode `i` uses seed `seed + i`.
pub fn evaluate<P: Policy + ?Sized>(
    policy: &P,
    cfg: &EnvConfig,
    n_episodes: usize,
    seed: u64,
) -> Result<EvalStats, TrainError> {
    cfg.validate()?;
    let cfg = Arc::new(cfg.clone());
    let episodes = (0..n_episodes as u64)
        .into_par_iter()
        .map(|i| run_episode(&cfg, policy, seed.wrapping_add(i), None, None))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(EvalStats::from_episodes(episodes))
}

/// Like [`evaluate`], also returning the recorded trajectory of every episode.
pub fn evaluate_recorded<P: Policy + ?Sized>(
    policy: &P,
    cfg: &EnvConfig,
    n_episodes: usize,
    seed: u64,
) -> Result<(EvalStats, Vec<Trajectory>), TrainError> {
    cfg.validate()?;
    let cfg = Arc::new(cfg.clone());
    let results = (0..n_episodes as u64)
        .into_par_iter()
        .map(|i| {
            let seed = seed.wrapping_add(i);
            let mut traj = Trajectory::new(&cfg, seed);
            let mut record = |a: &Action, o: &StepOutcome| traj.record(a, o);
            let summary = run_episode(&cfg, policy, seed, None, Some(&mut record))?;
            Ok((summary, traj))
        })
        .collect::<Result<Vec<_>, TrainError>>()?;
    let (episodes, trajectories) = results.into_iter().unzip();
    Ok((EvalStats::from_episodes(episodes), trajectories))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    pub speed: f64,
    /// Every evaluated episode reached all ROIs.
    pub success: bool,
    pub success_rate: f64,
    pub mean_reward: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub angle: f64,
    pub v_clip: f64,
    pub entries: Vec<SweepEntry>,
    /// Largest tested speed that still succeeded.
    pub max_successful_speed: Option<f64>,
    /// Number of tested speeds with `|v_a| < v_clip / 10`.
    pub tested_below_tenth_v_clip: usize,
    /// Success held for every tested speed with `|v_a| < v_clip / 10`.
    pub robust_below_tenth_v_clip: bool,
}

/// Evaluates a policy trained without wind under constant wind at each speed.
pub fn wind_sweep<P: Policy + ?Sized>(
    policy: &P,
    cfg: &EnvConfig,
    speeds: &[f64],
    angle: f64,
    n_episodes: usize,
    seed: u64,
) -> Result<SweepReport, TrainError> {
    let mut entries = Vec::with_capacity(speeds.len());
    for &speed in speeds {
        let windy = cfg.clone().with_wind(Wind::new(speed, angle));
        let stats = evaluate(policy, &windy, n_episodes, seed)?;
        entries.push(SweepEntry {
            speed,
            success: n_episodes > 0 && stats.success_rate == 1.0,
            success_rate: stats.success_rate,
            mean_reward: stats.mean,
        });
    }
    let max_successful_speed = entries
        .iter()
        .filter(|e| e.success)
        .map(|e| e.speed)
        .reduce(f64::max);
    let limit = cfg.v_clip / 10.0;
    let below: Vec<&SweepEntry> = entries.iter().filter(|e| e.speed.abs() < limit).collect();
    Ok(SweepReport {
        angle,
        v_clip: cfg.v_clip,
        tested_below_tenth_v_clip: below.len(),
        robust_below_tenth_v_clip: below.iter().all(|e| e.success),
        max_successful_speed,
        entries,
    })
}

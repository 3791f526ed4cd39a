//! Flat-array episodic API for foreign bindings.
//!
//! Mirrors the usual `reset(seed) -> obs` / `step(action) -> (obs, reward,
//! terminated, truncated, info)` shape. Hitting the step limit is reported as
//! truncation; collisions and full coverage are terminations. All environment
//! logic stays in [`Env`]; this layer only converts between flat `f64`
//! buffers and typed values.

use std::path::Path;
use std::sync::Arc;

use serde::Serialize;

use crate::env::{
    action_space, observation_space, Action, BoxSpace, ConfigError, Env, EnvConfig, EnvError,
    TerminationCause,
};
use crate::reward::RewardBreakdown;

/// Error classes surfaced across the binding boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCategory {
    Config,
    Runtime,
    ReplayMismatch,
}

impl ErrorCategory {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorCategory::Config => 2,
            ErrorCategory::Runtime => 3,
            ErrorCategory::ReplayMismatch => 4,
        }
    }
}

impl From<&EnvError> for ErrorCategory {
    fn from(e: &EnvError) -> Self {
        match e {
            EnvError::Config(_) => ErrorCategory::Config,
            _ => ErrorCategory::Runtime,
        }
    }
}

impl From<&ConfigError> for ErrorCategory {
    fn from(_: &ConfigError) -> Self {
        ErrorCategory::Config
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepInfo {
    pub breakdown: RewardBreakdown,
    pub cause: TerminationCause,
    pub visited_mask: u32,
    pub step_count: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub observation: Vec<f64>,
    pub reward: f64,
    pub terminated: bool,
    pub truncated: bool,
    pub info: StepInfo,
}

/// One environment handle.
#[derive(Debug)]
pub struct EpisodicEnv {
    cfg: Arc<EnvConfig>,
    env: Option<Env>,
}

impl EpisodicEnv {
    pub fn new(cfg: EnvConfig) -> Result<Self, ConfigError> {
        cfg.validate()?;
        Ok(Self {
            cfg: Arc::new(cfg),
            env: None,
        })
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        Self::new(EnvConfig::load(path)?)
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn observation_space(&self) -> BoxSpace {
        observation_space(&self.cfg)
    }

    pub fn action_space(&self) -> BoxSpace {
        action_space(&self.cfg)
    }

    pub fn reset(&mut self, seed: u64) -> Vec<f64> {
        let env = Env::reset_validated(self.cfg.clone(), seed);
        let obs = env.observation();
        self.env = Some(env);
        obs
    }

    /// `action` is `[fx1, fy1, fx2, fy2, ...]`; out-of-range forces are clamped.
    pub fn step(&mut self, action: &[f64]) -> Result<StepResult, EnvError> {
        let env = self.env.as_mut().ok_or(EnvError::EpisodeFinished)?;
        if action.len() != self.cfg.action_dim() {
            return Err(EnvError::DimensionMismatch {
                expected: self.cfg.n_robots(),
                got: action.len() / 2,
            });
        }
        let out = env.step(&Action::from_flat(action)?)?;
        Ok(StepResult {
            observation: env.observation(),
            reward: out.reward,
            terminated: matches!(
                out.cause,
                TerminationCause::Collision | TerminationCause::AllRoisVisited
            ),
            truncated: out.cause == TerminationCause::StepLimit,
            info: StepInfo {
                breakdown: out.breakdown,
                cause: out.cause,
                visited_mask: out.next_state.visited_mask,
                step_count: out.next_state.step_count,
            },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::variation::{preset, toy_env};

    #[test]
    fn dimensions_for_three_robots() {
        let env = EpisodicEnv::new(preset(1).unwrap()).unwrap();
        assert_eq!(env.observation_space().dim(), 13);
        assert_eq!(env.action_space().dim(), 6);
    }

    #[test]
    fn step_before_reset_fails() {
        let mut env = EpisodicEnv::new(toy_env()).unwrap();
        assert!(matches!(env.step(&[0.0, 0.0]), Err(EnvError::EpisodeFinished)));
        env.reset(0);
        assert!(matches!(
            env.step(&[0.0, 0.0, 0.0]),
            Err(EnvError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn truncation_at_step_limit() {
        let mut cfg = toy_env();
        cfg.max_episode_steps = 5;
        let mut env = EpisodicEnv::new(cfg).unwrap();
        env.reset(0);
        for _ in 0..4 {
            let r = env.step(&[0.0, 0.0]).unwrap();
            assert!(!r.terminated && !r.truncated);
        }
        let r = env.step(&[0.0, 0.0]).unwrap();
        assert!(r.truncated && !r.terminated);
        assert_eq!(r.info.cause, TerminationCause::StepLimit);
    }

    #[test]
    fn categories_and_exit_codes() {
        assert_eq!(ErrorCategory::from(&EnvError::EpisodeFinished).exit_code(), 3);
        assert_eq!(ErrorCategory::from(&ConfigError::NoRobots).exit_code(), 2);
        assert_eq!(ErrorCategory::ReplayMismatch.exit_code(), 4);
    }
}

//! Deterministic policies over observation vectors.
//!
//! [`LinearPolicy`] is the class the ARS trainer searches over: a weight
//! matrix applied to whitened observations. Whitening statistics are
//! accumulated online with Welford's method and stay frozen while acting.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{Action, EnvConfig, ForceBounds};
use crate::geometry::Vec2;

pub const POLICY_FORMAT: &str = "mbnav-linear-policy";
pub const POLICY_VERSION: u32 = 1;

/// Added to the variance before taking the square root when whitening.
pub const NORM_EPSILON: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("unsupported policy file version {found} (expected {POLICY_VERSION})")]
    VersionMismatch { found: u32 },
    #[error("corrupt policy file: {0}")]
    CorruptFile(String),
    #[error("policy io: {0}")]
    Io(#[from] std::io::Error),
}

/// Running mean and population variance of fixed-length vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunningStats {
    pub count: u64,
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl RunningStats {
    pub fn new(dim: usize) -> Self {
        Self {
            count: 0,
            mean: vec![0.0; dim],
            var: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn push(&mut self, x: &[f64]) {
        debug_assert_eq!(x.len(), self.dim());
        self.count += 1;
        let n = self.count as f64;
        for ((mean, var), &xi) in self.mean.iter_mut().zip(self.var.iter_mut()).zip(x) {
            let delta = xi - *mean;
            *mean += delta / n;
            let m2 = *var * (n - 1.0) + delta * (xi - *mean);
            *var = m2 / n;
        }
    }

    /// Combines two disjoint sample sets (Chan et al. pairwise update).
    pub fn merge(&mut self, other: &RunningStats) {
        debug_assert_eq!(other.dim(), self.dim());
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = other.clone();
            return;
        }
        let na = self.count as f64;
        let nb = other.count as f64;
        let n = na + nb;
        for i in 0..self.dim() {
            let delta = other.mean[i] - self.mean[i];
            let m2 = self.var[i] * na + other.var[i] * nb + delta * delta * na * nb / n;
            self.mean[i] += delta * nb / n;
            self.var[i] = m2 / n;
        }
        self.count += other.count;
    }
}

/// Anything that maps an observation to a bounded action.
pub trait Policy: Sync {
    fn act(&self, obs: &[f64], bounds: &ForceBounds) -> Result<Action, PolicyError>;
}

/// Applies no force.
#[derive(Debug, Clone, Copy)]
pub struct ZeroPolicy {
    pub n_robots: usize,
}

impl Policy for ZeroPolicy {
    fn act(&self, _obs: &[f64], _bounds: &ForceBounds) -> Result<Action, PolicyError> {
        Ok(Action::zeros(self.n_robots))
    }
}

/// Applies the same (clamped) forces at every step.
#[derive(Debug, Clone)]
pub struct ConstantPolicy {
    pub forces: Vec<Vec2>,
}

impl Policy for ConstantPolicy {
    fn act(&self, _obs: &[f64], bounds: &ForceBounds) -> Result<Action, PolicyError> {
        Ok(Action::new(self.forces.clone()).clamped(bounds))
    }
}

/// `a = W · (obs − mean) / √(var + ε)`, reshaped to force pairs and clamped.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearPolicy {
    n_robots: usize,
    n_rois: usize,
    /// Row-major, `2n` rows by `4n + 1` columns.
    weights: Vec<f64>,
    norm_mean: Vec<f64>,
    norm_var: Vec<f64>,
    obs_count: u64,
}

impl LinearPolicy {
    /// Zero weights and identity whitening (mean 0, variance 1).
    pub fn zeros(n_robots: usize, n_rois: usize) -> Self {
        let obs_dim = 4 * n_robots + 1;
        Self {
            n_robots,
            n_rois,
            weights: vec![0.0; 2 * n_robots * obs_dim],
            norm_mean: vec![0.0; obs_dim],
            norm_var: vec![1.0; obs_dim],
            obs_count: 0,
        }
    }

    pub fn for_config(cfg: &EnvConfig) -> Self {
        Self::zeros(cfg.n_robots(), cfg.n_rois())
    }

    pub fn n_robots(&self) -> usize {
        self.n_robots
    }

    pub fn n_rois(&self) -> usize {
        self.n_rois
    }

    pub fn obs_dim(&self) -> usize {
        4 * self.n_robots + 1
    }

    pub fn action_dim(&self) -> usize {
        2 * self.n_robots
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn norm_mean(&self) -> &[f64] {
        &self.norm_mean
    }

    pub fn norm_var(&self) -> &[f64] {
        &self.norm_var
    }

    pub fn obs_count(&self) -> u64 {
        self.obs_count
    }

    pub fn set_weights(&mut self, weights: Vec<f64>) -> Result<(), PolicyError> {
        if weights.len() != self.weights.len() {
            return Err(PolicyError::ShapeMismatch(format!(
                "expected {} weights, got {}",
                self.weights.len(),
                weights.len()
            )));
        }
        self.weights = weights;
        Ok(())
    }

    /// Same normalization, different weights.
    pub fn with_weights(&self, weights: Vec<f64>) -> Result<Self, PolicyError> {
        let mut p = self.clone();
        p.set_weights(weights)?;
        Ok(p)
    }

    /// Checks that this policy fits an environment's robot and ROI counts.
    pub fn check_config(&self, cfg: &EnvConfig) -> Result<(), PolicyError> {
        if cfg.n_robots() != self.n_robots || cfg.n_rois() != self.n_rois {
            return Err(PolicyError::ShapeMismatch(format!(
                "policy is for {} robots / {} ROIs, environment has {} / {}",
                self.n_robots,
                self.n_rois,
                cfg.n_robots(),
                cfg.n_rois()
            )));
        }
        Ok(())
    }

    pub fn normalize(&self, obs: &[f64]) -> Vec<f64> {
        obs.iter()
            .zip(self.norm_mean.iter().zip(&self.norm_var))
            .map(|(x, (m, v))| (x - m) / (v + NORM_EPSILON).sqrt())
            .collect()
    }

    /// Forces before clamping, flat `[fx1, fy1, ...]`.
    pub fn raw_output(&self, obs: &[f64]) -> Result<Vec<f64>, PolicyError> {
        let cols = self.obs_dim();
        if obs.len() != cols {
            return Err(PolicyError::ShapeMismatch(format!(
                "observation has length {}, policy expects {cols}",
                obs.len()
            )));
        }
        let z = self.normalize(obs);
        Ok(self
            .weights
            .chunks(cols)
            .map(|row| row.iter().zip(&z).map(|(w, x)| w * x).sum())
            .collect())
    }

    /// Folds one observation into the whitening statistics.
    pub fn update_normalization(&mut self, obs: &[f64]) {
        let mut stats = self.stats();
        stats.push(obs);
        self.set_stats(stats);
    }

    pub fn merge_normalization(&mut self, batch: &RunningStats) {
        let mut stats = self.stats();
        stats.merge(batch);
        self.set_stats(stats);
    }

    /// Current statistics; a fresh policy reports zero samples.
    pub fn stats(&self) -> RunningStats {
        if self.obs_count == 0 {
            return RunningStats::new(self.obs_dim());
        }
        RunningStats {
            count: self.obs_count,
            mean: self.norm_mean.clone(),
            var: self.norm_var.clone(),
        }
    }

    fn set_stats(&mut self, stats: RunningStats) {
        if stats.count == 0 {
            return;
        }
        self.obs_count = stats.count;
        self.norm_mean = stats.mean;
        self.norm_var = stats.var;
    }

    pub fn to_json(&self) -> String {
        let file = PolicyFile {
            format: POLICY_FORMAT.to_string(),
            version: POLICY_VERSION,
            n_robots: self.n_robots,
            n_rois: self.n_rois,
            weights: self
                .weights
                .chunks(self.obs_dim())
                .map(<[f64]>::to_vec)
                .collect(),
            norm_mean: self.norm_mean.clone(),
            norm_var: self.norm_var.clone(),
            obs_count: self.obs_count,
        };
        serde_json::to_string_pretty(&file).expect("policy serializes")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), PolicyError> {
        let mut text = self.to_json();
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>, n_robots: usize) -> Result<Self, PolicyError> {
        deserialize_policy(&std::fs::read_to_string(path)?, n_robots)
    }
}

impl Policy for LinearPolicy {
    fn act(&self, obs: &[f64], bounds: &ForceBounds) -> Result<Action, PolicyError> {
        let raw = self.raw_output(obs)?;
        Ok(Action::new(
            raw.chunks(2)
                .map(|c| bounds.clamp(Vec2::new(c[0], c[1])))
                .collect(),
        ))
    }
}

#[derive(Serialize, Deserialize)]
struct PolicyHeader {
    format: String,
    version: u32,
}

#[derive(Serialize, Deserialize)]
struct PolicyFile {
    format: String,
    version: u32,
    n_robots: usize,
    n_rois: usize,
    weights: Vec<Vec<f64>>,
    norm_mean: Vec<f64>,
    norm_var: Vec<f64>,
    obs_count: u64,
}

pub fn serialize_policy(policy: &LinearPolicy) -> String {
    policy.to_json()
}

/// Parses a policy file and checks it was trained for `n_robots` robots.
pub fn deserialize_policy(text: &str, n_robots: usize) -> Result<LinearPolicy, PolicyError> {
    let header: PolicyHeader =
        serde_json::from_str(text).map_err(|e| PolicyError::CorruptFile(e.to_string()))?;
    if header.format != POLICY_FORMAT {
        return Err(PolicyError::CorruptFile(format!(
            "unknown format tag {:?}",
            header.format
        )));
    }
    if header.version != POLICY_VERSION {
        return Err(PolicyError::VersionMismatch {
            found: header.version,
        });
    }
    let file: PolicyFile =
        serde_json::from_str(text).map_err(|e| PolicyError::CorruptFile(e.to_string()))?;
    if file.n_robots != n_robots {
        return Err(PolicyError::ShapeMismatch(format!(
            "policy file is for {} robots, expected {n_robots}",
            file.n_robots
        )));
    }
    let obs_dim = 4 * n_robots + 1;
    let rows_ok = file.weights.len() == 2 * n_robots && file.weights.iter().all(|r| r.len() == obs_dim);
    if !rows_ok || file.norm_mean.len() != obs_dim || file.norm_var.len() != obs_dim {
        return Err(PolicyError::ShapeMismatch(format!(
            "arrays do not match {n_robots} robots ({} x {obs_dim} weights)",
            2 * n_robots
        )));
    }
    if file.norm_var.iter().any(|v| v.is_nan() || *v < 0.0) {
        return Err(PolicyError::CorruptFile("negative variance".into()));
    }
    Ok(LinearPolicy {
        n_robots: file.n_robots,
        n_rois: file.n_rois,
        weights: file.weights.into_iter().flatten().collect(),
        norm_mean: file.norm_mean,
        norm_var: file.norm_var,
        obs_count: file.obs_count,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit_bounds() -> ForceBounds {
        ForceBounds::default()
    }

    #[test]
    fn zero_weights_give_zero_forces() {
        let p = LinearPolicy::zeros(2, 3);
        let a = p.act(&[1e9; 9], &unit_bounds()).unwrap();
        assert_eq!(a, Action::zeros(2));
    }

    #[test]
    fn single_robot_matches_hand_product() {
        let mut p = LinearPolicy::zeros(1, 1);
        #[rustfmt::skip]
        p.set_weights(vec![
            0.1, 0.0, -0.2, 0.0, 0.05,
            0.0, 0.3, 0.0, 0.4, -0.1,
        ]).unwrap();
        let obs = [2.0, -1.0, 0.5, 0.25, 1.0];
        let out = p.raw_output(&obs).unwrap();
        // identity whitening: divisor is sqrt(1 + 1e-8)
        let s = (1.0f64 + 1e-8).sqrt();
        let fx = (0.1 * 2.0 - 0.2 * 0.5 + 0.05 * 1.0) / s;
        let fy = (-0.3 + 0.4 * 0.25 - 0.1 * 1.0) / s;
        assert!((out[0] - fx).abs() < 1e-15);
        assert!((out[1] - fy).abs() < 1e-15);
        let wide = ForceBounds {
            f_x_min: -10.0,
            f_x_max: 10.0,
            f_y_min: -10.0,
            f_y_max: 10.0,
        };
        let a = p.act(&obs, &wide).unwrap();
        assert_eq!(a.forces[0], Vec2::new(out[0], out[1]));
    }

    #[test]
    fn output_is_clamped() {
        let mut p = LinearPolicy::zeros(2, 1);
        p.set_weights(vec![1.0; 36]).unwrap();
        let a = p.act(&[1e12; 9], &unit_bounds()).unwrap();
        assert!(a.forces.iter().all(|f| *f == Vec2::new(1.0, 1.0)));
        let a = p.act(&[-1e12; 9], &unit_bounds()).unwrap();
        assert!(a.forces.iter().all(|f| *f == Vec2::new(-1.0, -1.0)));
    }

    #[test]
    fn shape_mismatch_on_wrong_observation() {
        let p = LinearPolicy::zeros(1, 1);
        assert!(matches!(
            p.act(&[0.0; 9], &unit_bounds()),
            Err(PolicyError::ShapeMismatch(_))
        ));
    }

    #[test]
    fn welford_small_examples() {
        let mut p = LinearPolicy::zeros(0, 1);
        p.update_normalization(&[1.0]);
        assert_eq!(p.norm_mean(), &[1.0]);
        assert_eq!(p.norm_var(), &[0.0]);
        // zero variance falls back on the epsilon guard
        assert!((p.normalize(&[1.0 + 1e-4])[0] - 1.0).abs() < 1e-9);
        p.update_normalization(&[3.0]);
        assert_eq!(p.norm_mean(), &[2.0]);
        assert_eq!(p.norm_var(), &[1.0]);
        assert_eq!(p.obs_count(), 2);
    }

    fn batch_oracle(samples: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
        let n = samples.len() as f64;
        let dim = samples[0].len();
        let mean: Vec<f64> = (0..dim)
            .map(|j| samples.iter().map(|s| s[j]).sum::<f64>() / n)
            .collect();
        let var = (0..dim)
            .map(|j| samples.iter().map(|s| (s[j] - mean[j]).powi(2)).sum::<f64>() / n)
            .collect();
        (mean, var)
    }

    #[test]
    fn welford_matches_two_pass_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let samples: Vec<Vec<f64>> = (0..1000)
            .map(|_| {
                (0..5)
                    .map(|j| rng.random_range(-100.0..100.0) * (j + 1) as f64 + 50.0 * j as f64)
                    .collect()
            })
            .collect();
        let mut p = LinearPolicy::zeros(1, 1);
        for s in &samples {
            p.update_normalization(s);
        }
        let (mean, var) = batch_oracle(&samples);
        for j in 0..5 {
            assert!((p.norm_mean()[j] - mean[j]).abs() <= 1e-9 * mean[j].abs().max(1.0));
            assert!((p.norm_var()[j] - var[j]).abs() <= 1e-9 * var[j].abs().max(1.0));
        }

        // chunked merge agrees with sequential updates
        let mut merged = LinearPolicy::zeros(1, 1);
        for chunk in samples.chunks(137) {
            let mut batch = RunningStats::new(5);
            chunk.iter().for_each(|s| batch.push(s));
            merged.merge_normalization(&batch);
        }
        assert_eq!(merged.obs_count(), 1000);
        for j in 0..5 {
            assert!((merged.norm_mean()[j] - mean[j]).abs() <= 1e-9 * mean[j].abs().max(1.0));
            assert!((merged.norm_var()[j] - var[j]).abs() <= 1e-9 * var[j].abs().max(1.0));
        }
    }

    #[test]
    fn policy_file_roundtrip() {
        let mut p = LinearPolicy::zeros(2, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let w = (0..p.weights().len()).map(|_| rng.random::<f64>() - 0.5).collect();
        p.set_weights(w).unwrap();
        for _ in 0..10 {
            let obs: Vec<f64> = (0..9).map(|_| rng.random::<f64>() * 1e3).collect();
            p.update_normalization(&obs);
        }
        let text = serialize_policy(&p);
        assert_eq!(deserialize_policy(&text, 2).unwrap(), p);
    }

    #[test]
    fn policy_file_errors() {
        let text = serialize_policy(&LinearPolicy::zeros(2, 1));
        assert!(matches!(
            deserialize_policy(&text[..text.len() / 2], 2),
            Err(PolicyError::CorruptFile(_))
        ));
        assert!(matches!(
            deserialize_policy(&text, 3),
            Err(PolicyError::ShapeMismatch(_))
        ));
        let v2 = text.replace("\"version\": 1", "\"version\": 2");
        assert!(matches!(
            deserialize_policy(&v2, 2),
            Err(PolicyError::VersionMismatch { found: 2 })
        ));
    }

    proptest! {
        #[test]
        fn doubling_weights_doubles_raw_output(
            w in proptest::collection::vec(-1.0f64..1.0, 10),
            obs in proptest::collection::vec(-100.0f64..100.0, 5),
        ) {
            let p = LinearPolicy::zeros(1, 1).with_weights(w.clone()).unwrap();
            let p2 = p.with_weights(w.iter().map(|x| 2.0 * x).collect()).unwrap();
            let a = p.raw_output(&obs).unwrap();
            let b = p2.raw_output(&obs).unwrap();
            for (x, y) in a.iter().zip(&b) {
                prop_assert_eq!(2.0 * x, *y);
            }
        }

        #[test]
        fn normalization_mean_is_order_insensitive(
            xs in proptest::collection::vec(-1e3f64..1e3, 1..12),
            seed in any::<u64>(),
        ) {
            let mut shuffled = xs.clone();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for i in (1..shuffled.len()).rev() {
                shuffled.swap(i, rng.random_range(0..=i));
            }
            let mut a = RunningStats::new(1);
            let mut b = RunningStats::new(1);
            xs.iter().for_each(|x| a.push(&[*x]));
            shuffled.iter().for_each(|x| b.push(&[*x]));
            prop_assert!((a.mean[0] - b.mean[0]).abs() <= 1e-9 * (1.0 + a.mean[0].abs()));
        }
    }
}

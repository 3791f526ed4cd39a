//! The navigation MDP: configuration, state and action types, the transition
//! function with wind and velocity clipping, visited-ROI bookkeeping, and the
//! reset/step episode lifecycle.

use std::collections::BTreeSet;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::geometry::{euclidean_distance, GeometryError, Point2, Polygon, Vec2};
use crate::reward::{
    any_collision, full_mask, reward_collision, reward_field, reward_revisit, reward_roi,
    RewardBreakdown, RewardConstants, RewardError, VisitMemory,
};

/// Upper bound on the number of regions of interest.
pub const MAX_ROIS: usize = 10;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("invalid field polygon: {0}")]
    Field(#[from] GeometryError),
    #[error("invalid reward constants: {0}")]
    Rewards(#[from] RewardError),
    #[error("need at least one robot")]
    NoRobots,
    #[error("number of ROIs must be in 1..={MAX_ROIS}, got {0}")]
    RoiCount(usize),
    #[error("start position {0} lies outside the field")]
    StartOutsideField(usize),
    #[error("ROI {0} lies outside the field")]
    RoiOutsideField(usize),
    #[error("start positions {0} and {1} are within the collision distance")]
    StartsTooClose(usize, usize),
    #[error("{0} must be positive and finite")]
    NotPositive(&'static str),
    #[error("{0} must be finite")]
    NonFinite(&'static str),
    #[error("force bounds must satisfy min <= max on each axis")]
    ForceBounds,
    #[error("position bounds must satisfy min <= max on each axis")]
    PositionBounds,
    #[error("reading config: {0}")]
    Io(#[from] std::io::Error),
    #[error("parsing config: {0}")]
    Parse(#[from] serde_json::Error),
}

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("expected {expected} robot actions, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("action contains a non-finite force")]
    NonFiniteAction,
    #[error("episode already finished; call reset")]
    EpisodeFinished,
    #[error(transparent)]
    Config(#[from] ConfigError),
}

/// Per-axis force limits applied to every robot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForceBounds {
    pub f_x_min: f64,
    pub f_x_max: f64,
    pub f_y_min: f64,
    pub f_y_max: f64,
}

impl Default for ForceBounds {
    fn default() -> Self {
        Self {
            f_x_min: -1.0,
            f_x_max: 1.0,
            f_y_min: -1.0,
            f_y_max: 1.0,
        }
    }
}

impl ForceBounds {
    pub fn clamp(&self, f: Vec2) -> Vec2 {
        Vec2::new(
            f.x.clamp(self.f_x_min, self.f_x_max),
            f.y.clamp(self.f_y_min, self.f_y_max),
        )
    }
}

/// Constant wind: `speed` in field units per step, `angle` in radians.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Wind {
    pub speed: f64,
    pub angle: f64,
}

impl Wind {
    pub fn new(speed: f64, angle: f64) -> Self {
        Self { speed, angle }
    }

    /// Velocity added each step, or `None` when there is no wind.
    pub fn velocity(&self) -> Option<Vec2> {
        (self.speed != 0.0).then(|| {
            Vec2::new(self.speed * self.angle.cos(), self.speed * self.angle.sin())
        })
    }
}

fn default_mass() -> f64 {
    1.0
}
fn default_tau() -> f64 {
    1.0
}
fn default_collision_distance() -> f64 {
    2.0
}
fn default_roi_radius() -> f64 {
    10.0
}
fn default_cell_size() -> f64 {
    10.0
}
fn default_v_clip() -> f64 {
    5.0
}
fn default_max_steps() -> u32 {
    1000
}

/// Immutable environment definition.
///
/// The JSON form uses these field names as keys; points are `[x, y]` and
/// angles are radians. Every field except `field`, `rois` and
/// `start_positions` has a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvConfig {
    pub field: Polygon,
    pub rois: Vec<Point2>,
    pub start_positions: Vec<Point2>,
    #[serde(default = "default_mass")]
    pub robot_mass: f64,
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default = "default_collision_distance")]
    pub collision_distance: f64,
    #[serde(default = "default_roi_radius")]
    pub roi_radius: f64,
    /// Grid cell size for the revisit memory.
    #[serde(default = "default_cell_size")]
    pub revisit_cell_size: f64,
    #[serde(default)]
    pub force_bounds: ForceBounds,
    #[serde(default = "default_v_clip")]
    pub v_clip: f64,
    #[serde(default)]
    pub wind: Wind,
    #[serde(default)]
    pub rewards: RewardConstants,
    #[serde(default = "default_max_steps")]
    pub max_episode_steps: u32,
    /// Observation-space position box; the field's bounding box when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub position_bounds: Option<(Point2, Point2)>,
}

impl EnvConfig {
    /// A config with default physical and reward constants.
    pub fn new(field: Polygon, rois: Vec<Point2>, start_positions: Vec<Point2>) -> Self {
        Self {
            field,
            rois,
            start_positions,
            robot_mass: default_mass(),
            tau: default_tau(),
            collision_distance: default_collision_distance(),
            roi_radius: default_roi_radius(),
            revisit_cell_size: default_cell_size(),
            force_bounds: ForceBounds::default(),
            v_clip: default_v_clip(),
            wind: Wind::default(),
            rewards: RewardConstants::default(),
            max_episode_steps: default_max_steps(),
            position_bounds: None,
        }
    }

    pub fn with_wind(mut self, wind: Wind) -> Self {
        self.wind = wind;
        self
    }

    pub fn n_robots(&self) -> usize {
        self.start_positions.len()
    }

    pub fn n_rois(&self) -> usize {
        self.rois.len()
    }

    pub fn observation_dim(&self) -> usize {
        4 * self.n_robots() + 1
    }

    /// One force pair per robot.
    pub fn action_dim(&self) -> usize {
        2 * self.n_robots()
    }

    pub fn position_bounds(&self) -> (Point2, Point2) {
        self.position_bounds.unwrap_or_else(|| self.field.bounds())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        // the polygon is validated on construction; this re-checks deserialized data paths
        crate::geometry::validate_polygon(self.field.vertices().to_vec())?;
        self.rewards.validate()?;
        let positive = [
            ("robot_mass", self.robot_mass),
            ("tau", self.tau),
            ("collision_distance", self.collision_distance),
            ("roi_radius", self.roi_radius),
            ("revisit_cell_size", self.revisit_cell_size),
            ("v_clip", self.v_clip),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ConfigError::NotPositive(name));
            }
        }
        if self.max_episode_steps == 0 {
            return Err(ConfigError::NotPositive("max_episode_steps"));
        }
        if !(self.wind.speed.is_finite() && self.wind.angle.is_finite()) {
            return Err(ConfigError::NonFinite("wind"));
        }
        if self.wind.speed < 0.0 {
            return Err(ConfigError::NotPositive("wind.speed"));
        }
        let fb = &self.force_bounds;
        let fb_values = [fb.f_x_min, fb.f_x_max, fb.f_y_min, fb.f_y_max];
        if fb_values.iter().any(|v| !v.is_finite()) {
            return Err(ConfigError::NonFinite("force_bounds"));
        }
        if fb.f_x_min > fb.f_x_max || fb.f_y_min > fb.f_y_max {
            return Err(ConfigError::ForceBounds);
        }
        if let Some((lo, hi)) = self.position_bounds {
            if !(lo.is_finite() && hi.is_finite()) {
                return Err(ConfigError::NonFinite("position_bounds"));
            }
            if lo.x > hi.x || lo.y > hi.y {
                return Err(ConfigError::PositionBounds);
            }
        }
        if self.start_positions.is_empty() {
            return Err(ConfigError::NoRobots);
        }
        if self.rois.is_empty() || self.rois.len() > MAX_ROIS {
            return Err(ConfigError::RoiCount(self.rois.len()));
        }
        if let Some(i) = self
            .start_positions
            .iter()
            .position(|p| !self.field.contains(*p))
        {
            return Err(ConfigError::StartOutsideField(i));
        }
        if let Some(j) = self.rois.iter().position(|p| !self.field.contains(*p)) {
            return Err(ConfigError::RoiOutsideField(j));
        }
        for (i, p) in self.start_positions.iter().enumerate() {
            for (j, q) in self.start_positions.iter().enumerate().skip(i + 1) {
                if euclidean_distance(*p, *q) <= self.collision_distance {
                    return Err(ConfigError::StartsTooClose(i, j));
                }
            }
        }
        Ok(())
    }

    pub fn from_json_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: EnvConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ConfigError> {
        let mut text = self.to_json_pretty();
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }

    /// Hex SHA-256 of the compact JSON encoding; identifies the config in trajectory files.
    pub fn content_hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct State {
    pub positions: Vec<Point2>,
    pub velocities: Vec<Vec2>,
    pub visited_mask: u32,
    pub step_count: u32,
}

impl State {
    pub fn initial(cfg: &EnvConfig) -> Self {
        Self {
            positions: cfg.start_positions.clone(),
            velocities: vec![Vec2::ZERO; cfg.n_robots()],
            visited_mask: 0,
            step_count: 0,
        }
    }

    pub fn n_robots(&self) -> usize {
        self.positions.len()
    }

    /// Inverse of [`observation_vector`]. The step counter is not part of the
    /// observation and has to be supplied.
    pub fn from_observation(obs: &[f64], n_robots: usize, step_count: u32) -> Option<Self> {
        if obs.len() != 4 * n_robots + 1 {
            return None;
        }
        let (pos, rest) = obs.split_at(2 * n_robots);
        let (vel, mask) = rest.split_at(2 * n_robots);
        let mask = mask[0];
        if !(mask >= 0.0 && mask.fract() == 0.0 && mask <= u32::MAX as f64) {
            return None;
        }
        Some(Self {
            positions: pos.chunks(2).map(|c| Point2::new(c[0], c[1])).collect(),
            velocities: vel.chunks(2).map(|c| Vec2::new(c[0], c[1])).collect(),
            visited_mask: mask as u32,
            step_count,
        })
    }
}

/// One force pair per robot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Action {
    pub forces: Vec<Vec2>,
}

impl Action {
    pub fn new(forces: Vec<Vec2>) -> Self {
        Self { forces }
    }

    pub fn zeros(n_robots: usize) -> Self {
        Self::new(vec![Vec2::ZERO; n_robots])
    }

    /// Builds an action from `[fx1, fy1, fx2, fy2, ...]`.
    pub fn from_flat(flat: &[f64]) -> Result<Self, EnvError> {
        if !flat.len().is_multiple_of(2) {
            return Err(EnvError::DimensionMismatch {
                expected: flat.len().div_ceil(2),
                got: flat.len() / 2,
            });
        }
        Ok(Self::new(
            flat.chunks(2).map(|c| Vec2::new(c[0], c[1])).collect(),
        ))
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.forces.iter().flat_map(|f| [f.x, f.y]).collect()
    }

    pub fn clamped(&self, bounds: &ForceBounds) -> Self {
        Self::new(self.forces.iter().map(|f| bounds.clamp(*f)).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TerminationCause {
    Running,
    AllRoisVisited,
    Collision,
    StepLimit,
}

impl TerminationCause {
    pub fn is_success(self) -> bool {
        self == TerminationCause::AllRoisVisited
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub next_state: State,
    pub reward: f64,
    pub breakdown: RewardBreakdown,
    pub terminated: bool,
    pub cause: TerminationCause,
}

/// Packs per-ROI visit flags into an integer, first ROI in the most significant bit.
pub fn encode_visited(flags: &[bool]) -> u32 {
    assert!(flags.len() <= MAX_ROIS, "at most {MAX_ROIS} ROIs");
    flags
        .iter()
        .fold(0u32, |acc, &visited| (acc << 1) | u32::from(visited))
}

/// Bit of ROI `index` among `m` in the visited mask.
pub fn roi_bit(index: usize, m: usize) -> u32 {
    1u32 << (m - 1 - index)
}

/// One transition of the point-mass dynamics, without reward or visit logic.
///
/// Forces are used as given; [`Env::step`] clamps them first.
pub fn apply_dynamics(state: &State, action: &Action, cfg: &EnvConfig) -> Result<State, EnvError> {
    let n = state.n_robots();
    if action.forces.len() != n {
        return Err(EnvError::DimensionMismatch {
            expected: n,
            got: action.forces.len(),
        });
    }
    let wind = cfg.wind.velocity();
    let v_clip = cfg.v_clip;
    let mut positions = Vec::with_capacity(n);
    let mut velocities = Vec::with_capacity(n);
    for ((p, v), f) in state
        .positions
        .iter()
        .zip(&state.velocities)
        .zip(&action.forces)
    {
        let mut vx = v.x + f.x / cfg.robot_mass;
        let mut vy = v.y + f.y / cfg.robot_mass;
        if let Some(w) = wind {
            vx += w.x;
            vy += w.y;
        }
        let vx = vx.clamp(-v_clip, v_clip);
        let vy = vy.clamp(-v_clip, v_clip);
        positions.push(Point2::new(p.x + vx * cfg.tau, p.y + vy * cfg.tau));
        velocities.push(Vec2::new(vx, vy));
    }
    Ok(State {
        positions,
        velocities,
        visited_mask: state.visited_mask,
        step_count: state.step_count + 1,
    })
}

/// Indices of ROIs not yet in `visited_mask` that some robot is within `roi_radius` of.
pub fn roi_hits(
    positions: &[Point2],
    rois: &[Point2],
    roi_radius: f64,
    visited_mask: u32,
) -> BTreeSet<usize> {
    let m = rois.len();
    rois.iter()
        .enumerate()
        .filter(|(j, _)| visited_mask & roi_bit(*j, m) == 0)
        .filter(|(_, w)| {
            positions
                .iter()
                .any(|p| euclidean_distance(*p, **w) <= roi_radius)
        })
        .map(|(j, _)| j)
        .collect()
}

/// `[x1, y1, .., xn, yn, vx1, vy1, .., vxn, vyn, visited_mask]`
pub fn observation_vector(state: &State) -> Vec<f64> {
    let mut obs = Vec::with_capacity(4 * state.n_robots() + 1);
    obs.extend(state.positions.iter().flat_map(|p| [p.x, p.y]));
    obs.extend(state.velocities.iter().flat_map(|v| [v.x, v.y]));
    obs.push(state.visited_mask as f64);
    obs
}

/// An axis-aligned box of admissible values, one entry per dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxSpace {
    pub low: Vec<f64>,
    pub high: Vec<f64>,
}

impl BoxSpace {
    pub fn dim(&self) -> usize {
        self.low.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x
                .iter()
                .zip(self.low.iter().zip(&self.high))
                .all(|(v, (lo, hi))| *v >= *lo && *v <= *hi)
    }
}

pub fn observation_space(cfg: &EnvConfig) -> BoxSpace {
    let n = cfg.n_robots();
    let (p_min, p_max) = cfg.position_bounds();
    let mut low = Vec::with_capacity(4 * n + 1);
    let mut high = Vec::with_capacity(4 * n + 1);
    for _ in 0..n {
        low.extend([p_min.x, p_min.y]);
        high.extend([p_max.x, p_max.y]);
    }
    for _ in 0..n {
        low.extend([-cfg.v_clip, -cfg.v_clip]);
        high.extend([cfg.v_clip, cfg.v_clip]);
    }
    low.push(0.0);
    high.push(full_mask(cfg.n_rois()) as f64);
    BoxSpace { low, high }
}

pub fn action_space(cfg: &EnvConfig) -> BoxSpace {
    let fb = &cfg.force_bounds;
    let n = cfg.n_robots();
    BoxSpace {
        low: [fb.f_x_min, fb.f_y_min].repeat(n),
        high: [fb.f_x_max, fb.f_y_max].repeat(n),
    }
}

/// A running episode over a shared, validated configuration.
#[derive(Debug, Clone)]
pub struct Env {
    cfg: Arc<EnvConfig>,
    seed: u64,
    state: State,
    memory: VisitMemory,
    finished: bool,
}

impl Env {
    /// Validates `cfg` and starts an episode.
    ///
    /// The dynamics are deterministic; the seed is carried along so recorded
    /// trajectories can name the episode they came from.
    pub fn reset(cfg: Arc<EnvConfig>, seed: u64) -> Result<Self, ConfigError> {
        cfg.validate()?;
        Ok(Self::reset_validated(cfg, seed))
    }

    /// Like [`Env::reset`] for a config already known to be valid.
    pub fn reset_validated(cfg: Arc<EnvConfig>, seed: u64) -> Self {
        let state = State::initial(&cfg);
        let memory = VisitMemory::new(cfg.revisit_cell_size);
        Self {
            cfg,
            seed,
            state,
            memory,
            finished: false,
        }
    }

    /// Restarts the episode in place.
    pub fn restart(&mut self, seed: u64) {
        self.seed = seed;
        self.state = State::initial(&self.cfg);
        self.memory.clear();
        self.finished = false;
    }

    pub fn config(&self) -> &Arc<EnvConfig> {
        &self.cfg
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn state(&self) -> &State {
        &self.state
    }

    pub fn is_finished(&self) -> bool {
        self.finished
    }

    pub fn visit_memory(&self) -> &VisitMemory {
        &self.memory
    }

    pub fn observation(&self) -> Vec<f64> {
        observation_vector(&self.state)
    }

    pub fn observation_space(&self) -> BoxSpace {
        observation_space(&self.cfg)
    }

    pub fn action_space(&self) -> BoxSpace {
        action_space(&self.cfg)
    }

    pub fn step(&mut self, action: &Action) -> Result<StepOutcome, EnvError> {
        if self.finished {
            return Err(EnvError::EpisodeFinished);
        }
        let n = self.cfg.n_robots();
        if action.forces.len() != n {
            return Err(EnvError::DimensionMismatch {
                expected: n,
                got: action.forces.len(),
            });
        }
        if action.forces.iter().any(|f| !f.is_finite()) {
            return Err(EnvError::NonFiniteAction);
        }
        let cfg = &*self.cfg;
        let clamped = action.clamped(&cfg.force_bounds);
        let mut next = apply_dynamics(&self.state, &clamped, cfg)?;

        let m = cfg.n_rois();
        let hits = roi_hits(&next.positions, &cfg.rois, cfg.roi_radius, next.visited_mask);
        let mask_after = hits
            .iter()
            .fold(next.visited_mask, |mask, j| mask | roi_bit(*j, m));
        next.visited_mask = mask_after;

        let consts = &cfg.rewards;
        let breakdown = RewardBreakdown {
            collision: reward_collision(&next.positions, cfg.collision_distance, consts.r_terminal),
            roi: reward_roi(&hits, mask_after, m, consts),
            field: reward_field(&next.positions, &cfg.field, consts),
            revisit: reward_revisit(&mut self.memory, &next, consts),
        };

        let (cause, reward) = if any_collision(&next.positions, cfg.collision_distance) {
            (TerminationCause::Collision, -consts.r_terminal)
        } else if mask_after == full_mask(m) {
            (TerminationCause::AllRoisVisited, consts.r_terminal)
        } else if next.step_count >= cfg.max_episode_steps {
            (TerminationCause::StepLimit, breakdown.total())
        } else {
            (TerminationCause::Running, breakdown.total())
        };
        let terminated = cause != TerminationCause::Running;
        self.finished = terminated;
        self.state = next.clone();
        Ok(StepOutcome {
            next_state: next,
            reward,
            breakdown,
            terminated,
            cause,
        })
    }
}

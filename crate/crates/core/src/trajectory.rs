//! Episode recording, line-delimited JSON export/import, CSV flattening and
//! bitwise replay verification.
//!
//! File layout: each episode starts with a header line followed by one line
//! per step. Several episodes may be concatenated in one file.
//!
//! ```text
//! {"format":"mbnav-trajectory","version":1,"config_hash":"…","seed":7,"n_robots":1,"n_rois":1}
//! {"step":0,"action":[[1.0,0.0]],"positions":[[41.0,50.0]],"velocities":[[1.0,0.0]],"mask":0,"reward":0.0,"breakdown":[0.0,0.0,-1.0,1.0],"terminated":false,"cause":"Running"}
//! ```
//!
//! Floats are written in shortest round-trip form, so a same-platform replay
//! can compare bit patterns.

use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{Action, Env, EnvConfig, EnvError, StepOutcome, TerminationCause};
use crate::geometry::{Point2, Vec2};
use crate::reward::RewardBreakdown;

pub const TRAJECTORY_FORMAT: &str = "mbnav-trajectory";
pub const TRAJECTORY_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum TrajectoryError {
    #[error("trajectory io: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("unsupported trajectory version {0}")]
    Version(u32),
    #[error("trajectory was recorded for config {recorded}, replaying against {actual}")]
    ConfigMismatch { recorded: String, actual: String },
    #[error("replay diverged at step {step}: {field} differs")]
    ReplayMismatch { step: usize, field: &'static str },
    #[error("replay failed at step {step}: {source}")]
    Env {
        step: usize,
        #[source]
        source: EnvError,
    },
    #[error("csv export: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryHeader {
    pub format: String,
    pub version: u32,
    pub config_hash: String,
    pub seed: u64,
    pub n_robots: usize,
    pub n_rois: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    /// The action as submitted, before clamping.
    pub action: Vec<Vec2>,
    pub positions: Vec<Point2>,
    pub velocities: Vec<Vec2>,
    pub mask: u32,
    pub reward: f64,
    pub breakdown: RewardBreakdown,
    pub terminated: bool,
    pub cause: TerminationCause,
}

impl StepRecord {
    pub fn new(step: usize, action: &Action, outcome: &StepOutcome) -> Self {
        Self {
            step,
            action: action.forces.clone(),
            positions: outcome.next_state.positions.clone(),
            velocities: outcome.next_state.velocities.clone(),
            mask: outcome.next_state.visited_mask,
            reward: outcome.reward,
            breakdown: outcome.breakdown,
            terminated: outcome.terminated,
            cause: outcome.cause,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub header: TrajectoryHeader,
    pub steps: Vec<StepRecord>,
}

impl Trajectory {
    pub fn new(cfg: &EnvConfig, seed: u64) -> Self {
        Self {
            header: TrajectoryHeader {
                format: TRAJECTORY_FORMAT.to_string(),
                version: TRAJECTORY_VERSION,
                config_hash: cfg.content_hash(),
                seed,
                n_robots: cfg.n_robots(),
                n_rois: cfg.n_rois(),
            },
            steps: Vec::new(),
        }
    }

    pub fn record(&mut self, action: &Action, outcome: &StepOutcome) {
        let step = self.steps.len();
        self.steps.push(StepRecord::new(step, action, outcome));
    }

    pub fn episodic_reward(&self) -> f64 {
        self.steps.iter().map(|s| s.reward).sum()
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn final_cause(&self) -> Option<TerminationCause> {
        self.steps.last().map(|s| s.cause)
    }

    /// Step indices are contiguous from 0 and only the last record may be terminal.
    pub fn is_well_formed(&self) -> bool {
        let n = self.steps.len();
        self.steps
            .iter()
            .enumerate()
            .all(|(i, s)| s.step == i && (!s.terminated || i + 1 == n))
    }

    pub fn write_jsonl(&self, mut w: impl Write) -> Result<(), TrajectoryError> {
        let mut line = serde_json::to_string(&self.header).expect("header serializes");
        line.push('\n');
        w.write_all(line.as_bytes())?;
        for s in &self.steps {
            let mut line = serde_json::to_string(s).expect("step serializes");
            line.push('\n');
            w.write_all(line.as_bytes())?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("json is utf-8")
    }

    /// One row per step: positions and velocities per robot, mask, reward terms and cause.
    pub fn write_csv(&self, w: impl Write) -> Result<(), TrajectoryError> {
        let mut out = csv::Writer::from_writer(w);
        let n = self.header.n_robots;
        let mut header = vec!["step".to_string()];
        for i in 0..n {
            header.extend([
                format!("x{i}"),
                format!("y{i}"),
                format!("vx{i}"),
                format!("vy{i}"),
                format!("fx{i}"),
                format!("fy{i}"),
            ]);
        }
        header.extend(
            ["mask", "reward", "r_c", "r_i", "r_f", "r_v", "cause"].map(str::to_string),
        );
        out.write_record(&header)?;
        for s in &self.steps {
            let mut row = vec![s.step.to_string()];
            for i in 0..n {
                row.extend([
                    s.positions[i].x.to_string(),
                    s.positions[i].y.to_string(),
                    s.velocities[i].x.to_string(),
                    s.velocities[i].y.to_string(),
                    s.action[i].x.to_string(),
                    s.action[i].y.to_string(),
                ]);
            }
            let b = s.breakdown;
            row.extend([
                s.mask.to_string(),
                s.reward.to_string(),
                b.collision.to_string(),
                b.roi.to_string(),
                b.field.to_string(),
                b.revisit.to_string(),
                format!("{:?}", s.cause),
            ]);
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }
}

pub fn export_trajectories(
    trajectories: &[Trajectory],
    path: impl AsRef<Path>,
) -> Result<(), TrajectoryError> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    for t in trajectories {
        t.write_jsonl(&mut w)?;
    }
    w.flush()?;
    Ok(())
}

pub fn export_trajectory(traj: &Trajectory, path: impl AsRef<Path>) -> Result<(), TrajectoryError> {
    export_trajectories(std::slice::from_ref(traj), path)
}

pub fn read_trajectories(r: impl Read) -> Result<Vec<Trajectory>, TrajectoryError> {
    let mut out: Vec<Trajectory> = Vec::new();
    for (i, line) in BufReader::new(r).lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |e: serde_json::Error| TrajectoryError::Parse {
            line: lineno,
            message: e.to_string(),
        };
        let value: serde_json::Value = serde_json::from_str(&line).map_err(parse_err)?;
        if value.get("format").is_some() {
            let header: TrajectoryHeader = serde_json::from_value(value).map_err(parse_err)?;
            if header.format != TRAJECTORY_FORMAT {
                return Err(TrajectoryError::Parse {
                    line: lineno,
                    message: format!("unknown format {:?}", header.format),
                });
            }
            if header.version != TRAJECTORY_VERSION {
                return Err(TrajectoryError::Version(header.version));
            }
            out.push(Trajectory {
                header,
                steps: Vec::new(),
            });
        } else {
            let record: StepRecord = serde_json::from_value(value).map_err(parse_err)?;
            let traj = out.last_mut().ok_or_else(|| TrajectoryError::Parse {
                line: lineno,
                message: "step record before any header".into(),
            })?;
            if record.step != traj.steps.len() {
                return Err(TrajectoryError::Parse {
                    line: lineno,
                    message: format!(
                        "expected step {}, found {}",
                        traj.steps.len(),
                        record.step
                    ),
                });
            }
            traj.steps.push(record);
        }
    }
    Ok(out)
}

pub fn import_trajectories(path: impl AsRef<Path>) -> Result<Vec<Trajectory>, TrajectoryError> {
    read_trajectories(std::fs::File::open(path)?)
}

/// Reads a file holding exactly one episode.
pub fn import_trajectory(path: impl AsRef<Path>) -> Result<Trajectory, TrajectoryError> {
    let mut all = import_trajectories(path)?;
    if all.len() != 1 {
        return Err(TrajectoryError::Parse {
            line: 0,
            message: format!("expected one episode, found {}", all.len()),
        });
    }
    Ok(all.remove(0))
}

fn same_f64(a: f64, b: f64) -> bool {
    a.to_bits() == b.to_bits()
}

fn same_points(a: &[Point2], b: &[Point2]) -> bool {
    a.len() == b.len()
        && a.iter()
            .zip(b)
            .all(|(p, q)| same_f64(p.x, q.x) && same_f64(p.y, q.y))
}

fn same_vecs(a: &[Vec2], b: &[Vec2]) -> bool {
    a.len() == b.len()
        && a.iter()
            .zip(b)
            .all(|(p, q)| same_f64(p.x, q.x) && same_f64(p.y, q.y))
}

/// Summary of a successful replay.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayReport {
    pub steps: usize,
    pub episodic_reward: f64,
}

/// Re-runs the recorded actions in a fresh environment and requires every
/// recorded value to match bit for bit.
pub fn replay(traj: &Trajectory, cfg: &Arc<EnvConfig>) -> Result<ReplayReport, TrajectoryError> {
    let actual = cfg.content_hash();
    if traj.header.config_hash != actual {
        return Err(TrajectoryError::ConfigMismatch {
            recorded: traj.header.config_hash.clone(),
            actual,
        });
    }
    let mut env = Env::reset(cfg.clone(), traj.header.seed)
        .map_err(|e| TrajectoryError::Env {
            step: 0,
            source: e.into(),
        })?;
    for rec in &traj.steps {
        let step = rec.step;
        let out = env
            .step(&Action::new(rec.action.clone()))
            .map_err(|source| TrajectoryError::Env { step, source })?;
        let mismatch = |field| TrajectoryError::ReplayMismatch { step, field };
        if !same_points(&out.next_state.positions, &rec.positions) {
            return Err(mismatch("positions"));
        }
        if !same_vecs(&out.next_state.velocities, &rec.velocities) {
            return Err(mismatch("velocities"));
        }
        if out.next_state.visited_mask != rec.mask {
            return Err(mismatch("mask"));
        }
        if !same_f64(out.reward, rec.reward) {
            return Err(mismatch("reward"));
        }
        let (a, b): ([f64; 4], [f64; 4]) = (out.breakdown.into(), rec.breakdown.into());
        if !a.iter().zip(&b).all(|(x, y)| same_f64(*x, *y)) {
            return Err(mismatch("breakdown"));
        }
        if out.terminated != rec.terminated {
            return Err(mismatch("terminated"));
        }
        if out.cause != rec.cause {
            return Err(mismatch("cause"));
        }
    }
    Ok(ReplayReport {
        steps: traj.steps.len(),
        episodic_reward: traj.episodic_reward(),
    })
}

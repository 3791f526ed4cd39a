//! The four reward terms (collision, ROI coverage, field containment,
//! revisit) and the per-episode memory the revisit term needs.

use std::collections::{BTreeSet, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::State;
use crate::geometry::{euclidean_distance, Point2, Polygon};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RewardError {
    #[error("reward constants must satisfy 0 < r_s < r_m < r_l < R_terminal (got {r_s}, {r_m}, {r_l}, {r_terminal})")]
    Ordering {
        r_s: f64,
        r_m: f64,
        r_l: f64,
        r_terminal: f64,
    },
}

/// Small, medium and large step rewards plus the finite stand-in for the
/// infinite terminal rewards.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardConstants {
    pub r_s: f64,
    pub r_m: f64,
    pub r_l: f64,
    #[serde(rename = "R_terminal")]
    pub r_terminal: f64,
}

impl Default for RewardConstants {
    fn default() -> Self {
        Self {
            r_s: 1.0,
            r_m: 10.0,
            r_l: 10_000.0,
            r_terminal: 1e6,
        }
    }
}

impl RewardConstants {
    pub fn validate(&self) -> Result<(), RewardError> {
        let ok = self.r_s > 0.0
            && self.r_s < self.r_m
            && self.r_m < self.r_l
            && self.r_l < self.r_terminal
            && self.r_terminal.is_finite();
        if ok {
            Ok(())
        } else {
            Err(RewardError::Ordering {
                r_s: self.r_s,
                r_m: self.r_m,
                r_l: self.r_l,
                r_terminal: self.r_terminal,
            })
        }
    }
}

/// Per-step reward terms in the order (collision, roi, field, revisit).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct RewardBreakdown {
    pub collision: f64,
    pub roi: f64,
    pub field: f64,
    pub revisit: f64,
}

impl RewardBreakdown {
    pub fn total(&self) -> f64 {
        self.collision + self.roi + self.field + self.revisit
    }
}

impl From<[f64; 4]> for RewardBreakdown {
    fn from([collision, roi, field, revisit]: [f64; 4]) -> Self {
        Self {
            collision,
            roi,
            field,
            revisit,
        }
    }
}

impl From<RewardBreakdown> for [f64; 4] {
    fn from(b: RewardBreakdown) -> Self {
        [b.collision, b.roi, b.field, b.revisit]
    }
}

/// True when any pair of robots is within `collision_distance` (inclusive).
pub fn any_collision(positions: &[Point2], collision_distance: f64) -> bool {
    positions.iter().enumerate().any(|(i, p)| {
        positions[i + 1..]
            .iter()
            .any(|q| euclidean_distance(*p, *q) <= collision_distance)
    })
}

pub fn reward_collision(positions: &[Point2], collision_distance: f64, r_terminal: f64) -> f64 {
    if any_collision(positions, collision_distance) {
        -r_terminal
    } else {
        0.0
    }
}

pub fn full_mask(m: usize) -> u32 {
    (1u32 << m) - 1
}

pub fn reward_roi(
    newly_hit: &BTreeSet<usize>,
    mask_after: u32,
    m: usize,
    consts: &RewardConstants,
) -> f64 {
    if mask_after == full_mask(m) {
        consts.r_terminal
    } else {
        consts.r_l * newly_hit.len() as f64
    }
}

pub fn reward_field(positions: &[Point2], field: &Polygon, consts: &RewardConstants) -> f64 {
    let outside = positions.iter().filter(|p| !field.contains(**p)).count();
    if outside > 0 {
        -(outside as f64) * consts.r_l
    } else {
        -consts.r_s
    }
}

/// Cells of the joint-position grid seen so far in the current episode.
///
/// Keys are built from positions only; velocities and the visited mask do not
/// participate.
#[derive(Debug, Clone)]
pub struct VisitMemory {
    cell_size: f64,
    cells: HashSet<Vec<i64>>,
}

impl VisitMemory {
    pub fn new(cell_size: f64) -> Self {
        assert!(cell_size > 0.0, "cell_size must be positive");
        Self {
            cell_size,
            cells: HashSet::new(),
        }
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    pub fn key(&self, positions: &[Point2]) -> Vec<i64> {
        positions
            .iter()
            .flat_map(|p| [p.x, p.y])
            .map(|c| (c / self.cell_size).floor() as i64)
            .collect()
    }

    pub fn contains(&self, positions: &[Point2]) -> bool {
        self.cells.contains(&self.key(positions))
    }

    /// Inserts the cell of `positions`; returns false if it was already present.
    pub fn insert(&mut self, positions: &[Point2]) -> bool {
        let key = self.key(positions);
        self.cells.insert(key)
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn clear(&mut self) {
        self.cells.clear();
    }
}

pub fn reward_revisit(mem: &mut VisitMemory, next_state: &State, consts: &RewardConstants) -> f64 {
    if mem.insert(&next_state.positions) {
        consts.r_s
    } else {
        -consts.r_m
    }
}

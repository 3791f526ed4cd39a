//! A deterministic continuous-control environment for multi-robot coverage
//! navigation, with a linear-policy Augmented Random Search trainer.
//!
//! Point-mass robots move inside a polygonal field under bounded forces and
//! an optional constant wind. An episode ends when every region of interest
//! (ROI) has been visited, when two robots come within the collision
//! distance, or at the step limit. The step reward is the sum of a collision
//! term, an ROI term, a field-containment term and a revisit term.
//!
//! ```
//! use std::sync::Arc;
//! use mbnav_core::env::{Action, Env};
//! use mbnav_core::variation::toy_env;
//!
//! let cfg = Arc::new(toy_env());
//! let mut env = Env::reset(cfg, 0).unwrap();
//! let out = env.step(&Action::zeros(1)).unwrap();
//! assert_eq!(out.reward, out.breakdown.total());
//! ```

pub mod env;
pub mod episodic;
pub mod geometry;
pub mod policy;
pub mod reward;
pub mod trainer;
pub mod trajectory;
pub mod variation;

pub use env::{Action, Env, EnvConfig, State, StepOutcome, TerminationCause};
pub use geometry::{Point2, Polygon, Vec2};
pub use policy::{LinearPolicy, Policy};
pub use trainer::{ars_train, evaluate, wind_sweep, ArsConfig, TrainError};

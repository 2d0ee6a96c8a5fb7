//! Adaptive cost-map navigation among movable obstacles.
//!
//! LiDAR returns missing from the prior static map are treated as movable
//! obstacles with a reduced traversal cost. A progress checker watches the
//! ratio of measured to commanded speed and escalates the obstacle in front
//! of the robot from light to heavy, and on a stall to lethal, which makes
//! the global planner re-route.
//!
//! The crate ships a deterministic 2D simulator ([`world`]), the costmap
//! stack ([`grid`], [`layers`]), the progress checker ([`checker`]), the
//! planners ([`planning`]) and a trial/batch harness with image export
//! ([`harness`]).

pub mod checker;
pub mod exec;
pub mod geom;
pub mod grid;
pub mod harness;
pub mod layers;
pub mod planning;
pub mod world;

pub use exec::Exec;

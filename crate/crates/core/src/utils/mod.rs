//! Runtime utilities: clocks and the node executor, trajectory
//! interpolation, MPC stepping control and joint-state remapping.

pub mod exec;
pub mod interp;
pub mod mpc;
pub mod remap;

pub use exec::{Clock, ClockFollower, Node, NodeError, RateTimer};
pub use interp::{Trajectory, TrajectoryError};
pub use mpc::{MpcController, MpcError, MpcMode, MpcNode, MpcState};
pub use remap::{remap_joint_state, remap_joint_state_to_floatarray, RemapConfig, RemapError, RemapNode};

//! Contact-simulation middleware: a typed pub/sub node graph around a
//! desk-scale rigid-body contact engine, with simulated sensors, operator
//! teleoperation mappings, a safety guard, and bag-style recording.

// `!(x <= bound)` is used on purpose so NaN fails every limit check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// fixed-size axis loops read better indexed
#![allow(clippy::needless_range_loop)]

pub mod app;
pub mod bus;
pub mod dynamics;
pub mod kinematics;
pub mod math;
pub mod recording;
pub mod safety;
pub mod scene;
pub mod sensors;
pub mod teleop;
pub mod utils;

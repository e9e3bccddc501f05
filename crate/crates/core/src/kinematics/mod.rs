//! Two-link arm kinematics and minimum-jerk task generation.

pub mod arm;
pub mod minjerk;
pub mod tasks;

pub use arm::{forward_kinematics, inverse_kinematics, ArmGeometry, JointState, WristTarget};
pub use minjerk::{min_jerk_coeffs, Boundary, MinJerkSegment, Quintic};
pub use tasks::{generate_task, generate_task_with, Task, TaskConfig, TaskKind, TaskSeries, TASK_RATE_HZ};

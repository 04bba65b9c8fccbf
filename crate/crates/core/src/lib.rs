//! Two-layer non-overlapping convolutional teacher-student model with a
//! shortcut connection.
//!
//! The crate provides the closed-form population landscape for Gaussian
//! inputs, gradient descent with shortcut normalization under step-size
//! warmup and related schedules, a Monte-Carlo oracle for the closed forms,
//! numerical checks of the dissipativity inequalities, and the experiment
//! harness behind the `shortcut` command-line tool.

pub mod error;
pub mod experiments;
pub mod geometry;
pub mod landscape;
pub mod mc;
pub mod optimizer;
pub mod vector;
pub mod verification;

pub use error::{Error, Result};
pub use geometry::{
    angle_between, g_phi, renormalize_shortcut, shortcut_direction, StudentState, TeacherSpec,
};
pub use landscape::{
    grad_a, grad_w, population_loss, region_membership, spurious_point, CriticalPair, RegionSpec,
};
pub use mc::{fd_grad_check, mc_grads, mc_loss, FdReport, McEstimate};
pub use optimizer::{
    classify_outcome, cnn_run, gd_step, run, sample_init, Outcome, Record, RunConfig, StepSchedule,
    Thresholds, Trajectory,
};
pub use verification::{
    check_dissipativity, monitor_trajectory, sample_region, DissipativityReport,
};

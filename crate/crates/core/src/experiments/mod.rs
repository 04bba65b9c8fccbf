//! Reproduction harness: experiment teachers, success-rate sweeps and
//! fixed-start trajectories.

pub mod certify;
pub mod sweep;
pub mod teachers;
pub mod trajectory;

pub use certify::{certify_gradients, CertifyConfig, CertifyReport};
pub use sweep::{success_rate_sweep, CellReport, SweepConfig, SweepReport, SweepTiming, Variant};
pub use teachers::{fixed_a0_k25, teacher_for_k, teacher_for_k_generic, EXPERIMENT_K_VALUES};
pub use trajectory::{trajectory_csv, trajectory_experiment, trajectory_svg, TrajectoryVariant};

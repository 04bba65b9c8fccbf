//! Success-rate sweeps over patch counts and training variants.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::TeacherSpec;
use crate::optimizer::{
    cnn_run, run, sample_cnn_init, sample_init, Outcome, RunConfig, StepSchedule, Thresholds,
};

use super::teachers::{teacher_for_k, teacher_for_k_generic, EXPERIMENT_K_VALUES};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Shortcut model, step-size warmup.
    ResnetSsw,
    /// Shortcut model, `eta_a = eta_w = 1/k^2` throughout.
    ResnetConstant,
    /// Plain CNN from a uniform direction, `eta = 0.1`.
    CnnBaseline,
}

impl Variant {
    pub const ALL: [Variant; 3] = [
        Variant::ResnetSsw,
        Variant::ResnetConstant,
        Variant::CnnBaseline,
    ];

    pub fn id(&self) -> &'static str {
        match self {
            Variant::ResnetSsw => "resnet_ssw",
            Variant::ResnetConstant => "resnet_constant",
            Variant::CnnBaseline => "cnn_baseline",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.id() == s)
            .ok_or_else(|| Error::Config(format!("unknown variant '{s}'")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub k_values: Vec<usize>,
    pub n_trials: u64,
    pub base_seed: u64,
    pub variants: Vec<Variant>,
    pub thresholds: Thresholds,
    pub max_iters: u64,
    /// Filter dimension.
    pub p: usize,
    pub cnn_eta: f64,
    /// Early exit for runs already at the spurious optimum; see [`RunConfig`].
    pub trap_check_every: Option<u64>,
    /// Admit `k` outside the tabulated set through the generic weight rule.
    pub allow_generic: bool,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            k_values: EXPERIMENT_K_VALUES.to_vec(),
            n_trials: 500,
            base_seed: 0,
            variants: Variant::ALL.to_vec(),
            thresholds: Thresholds::default(),
            max_iters: 1_000_000,
            p: 8,
            cnn_eta: 0.1,
            trap_check_every: Some(1000),
            allow_generic: false,
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_values.is_empty() {
            return Err(Error::Config("k_values must be nonempty".into()));
        }
        if self.variants.is_empty() {
            return Err(Error::Config("variants must be nonempty".into()));
        }
        if self.n_trials == 0 || self.max_iters == 0 {
            return Err(Error::Config(
                "n_trials and max_iters must be positive".into(),
            ));
        }
        if !(self.cnn_eta > 0.0) {
            return Err(Error::Config("cnn_eta must be positive".into()));
        }
        if self.trap_check_every == Some(0) {
            return Err(Error::Config("trap_check_every must be positive".into()));
        }
        Ok(())
    }

    fn teacher(&self, k: usize) -> Result<TeacherSpec> {
        if self.allow_generic {
            teacher_for_k_generic(k, self.p)
        } else {
            teacher_for_k(k, self.p)
        }
    }

    fn run_config(&self) -> RunConfig {
        RunConfig {
            max_iters: self.max_iters,
            // Only the final state matters for a sweep.
            record_stride: u64::MAX,
            thresholds: self.thresholds,
            trap_check_every: self.trap_check_every,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CellReport {
    pub variant: Variant,
    pub k: usize,
    pub n_trials: u64,
    pub success_count: u64,
    pub spurious_count: u64,
    pub undecided_count: u64,
    pub success_rate: f64,
    /// Wilson 95% interval for the success rate.
    pub ci_low: f64,
    pub ci_high: f64,
    /// Trials whose run returned an error; included in `undecided_count`.
    pub error_count: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepReport {
    pub config: SweepConfig,
    pub cells: Vec<CellReport>,
    /// Teacher facts that differ from the stated experimental setup.
    pub notes: Vec<String>,
}

impl SweepReport {
    pub fn cell(&self, variant: Variant, k: usize) -> Option<&CellReport> {
        self.cells.iter().find(|c| c.variant == variant && c.k == k)
    }
}

/// Wall time, kept apart from the report so the report is reproducible.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct SweepTiming {
    pub total_secs: f64,
    pub cells: Vec<CellTiming>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CellTiming {
    pub variant: Variant,
    pub k: usize,
    pub secs: f64,
}

/// Wilson score interval at 95% for `successes` out of `n`.
pub fn wilson_interval(successes: u64, n: u64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    const Z: f64 = 1.959_963_984_540_054;
    let n = n as f64;
    let p = successes as f64 / n;
    let z2 = Z * Z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = Z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    (
        (center - half).max(0.0).min(p),
        (center + half).min(1.0).max(p),
    )
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum TrialResult {
    Success,
    Spurious,
    Undecided,
    Error,
}

fn trial(
    variant: Variant,
    teacher: &TeacherSpec,
    cfg: &SweepConfig,
    run_cfg: &RunConfig,
    seed: u64,
) -> TrialResult {
    let k = teacher.k();
    let traj = match variant {
        Variant::ResnetSsw => run(
            &sample_init(teacher, seed),
            teacher,
            &StepSchedule::ssw_for_k(k),
            run_cfg,
        ),
        Variant::ResnetConstant => run(
            &sample_init(teacher, seed),
            teacher,
            &StepSchedule::constant_for_k(k),
            run_cfg,
        ),
        Variant::CnnBaseline => {
            let (v, a) = sample_cnn_init(teacher, seed);
            cnn_run(&v, &a, teacher, cfg.cnn_eta, run_cfg)
        }
    };
    match traj {
        Ok(t) if t.failure.is_some() => TrialResult::Error,
        Ok(t) => match t.outcome {
            Outcome::ConvergedGlobal { .. } => TrialResult::Success,
            Outcome::TrappedSpurious { .. } => TrialResult::Spurious,
            Outcome::Undecided { .. } => TrialResult::Undecided,
        },
        Err(_) => TrialResult::Error,
    }
}

/// Runs one cell: `n_trials` runs with seeds `base_seed + trial`.
pub fn run_cell(config: &SweepConfig, variant: Variant, k: usize) -> Result<CellReport> {
    config.validate()?;
    let teacher = config.teacher(k)?;
    let run_cfg = config.run_config();
    let results: Vec<TrialResult> = (0..config.n_trials)
        .into_par_iter()
        .map(|i| {
            trial(
                variant,
                &teacher,
                config,
                &run_cfg,
                config.base_seed.wrapping_add(i),
            )
        })
        .collect();
    let count = |r: TrialResult| results.iter().filter(|x| **x == r).count() as u64;
    let success_count = count(TrialResult::Success);
    let spurious_count = count(TrialResult::Spurious);
    let error_count = count(TrialResult::Error);
    let undecided_count = count(TrialResult::Undecided) + error_count;
    let (ci_low, ci_high) = wilson_interval(success_count, config.n_trials);
    Ok(CellReport {
        variant,
        k,
        n_trials: config.n_trials,
        success_count,
        spurious_count,
        undecided_count,
        success_rate: success_count as f64 / config.n_trials as f64,
        ci_low,
        ci_high,
        error_count,
    })
}

/// Discrepancies between a teacher and the stated setup: the shortcut angle
/// (stated as `0.45 pi`) and `1^T a* = |a*|^2 / 4`.
pub fn teacher_notes(teacher: &TeacherSpec) -> Vec<String> {
    let mut notes = Vec::new();
    let angle = teacher.shortcut_angle() / std::f64::consts::PI;
    if (angle - 0.45).abs() > 1e-6 {
        notes.push(format!(
            "k={}: angle(v*, 1/sqrt(p)) = {angle:.6} pi, stated as 0.45 pi",
            teacher.k()
        ));
    }
    let quarter = teacher.norm_sq_a() / 4.0;
    if (teacher.sum_a() - quarter).abs() > 1e-12 {
        notes.push(format!(
            "k={}: 1^T a* = {} but |a*|^2/4 = {quarter}",
            teacher.k(),
            teacher.sum_a()
        ));
    }
    if !teacher.strict_prior() {
        notes.push(format!(
            "k={}: |w*| = {:.6} > 1",
            teacher.k(),
            crate::vector::norm(teacher.w_star())
        ));
    }
    notes
}

/// Runs every `(variant, k)` cell of the sweep.
pub fn success_rate_sweep(config: &SweepConfig) -> Result<(SweepReport, SweepTiming)> {
    config.validate()?;
    let start = Instant::now();
    let mut cells = Vec::new();
    let mut timing = SweepTiming::default();
    let mut notes = Vec::new();
    for &k in &config.k_values {
        notes.extend(teacher_notes(&config.teacher(k)?));
        for &variant in &config.variants {
            let t0 = Instant::now();
            cells.push(run_cell(config, variant, k)?);
            timing.cells.push(CellTiming {
                variant,
                k,
                secs: t0.elapsed().as_secs_f64(),
            });
        }
    }
    timing.total_secs = start.elapsed().as_secs_f64();
    Ok((
        SweepReport {
            config: config.clone(),
            cells,
            notes,
        },
        timing,
    ))
}

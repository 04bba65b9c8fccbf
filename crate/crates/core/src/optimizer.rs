//! Gradient descent with shortcut normalization, its step-size schedules,
//! initialization samplers and outcome classification.
//!
//! One iteration evaluates both gradients at the current `(w_t, a_t)`, then
//!
//! ```text
//! w_tilde = w_t - eta_w grad_w;   w_{t+1} = renormalize(w_tilde)
//! a_{t+1} = a_t - eta_a grad_a
//! ```
//!
//! Internally the iterate is carried as the unit direction
//! `v = 1/sqrt(p) + w`, for which the renormalization is `v <- (v - eta_w
//! grad_w) / |v - eta_w grad_w|`. The plain feed-forward CNN baseline runs the
//! same map with `v` initialized anywhere on the sphere.

use std::f64::consts::PI;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{sample_unit_sphere, StudentState, TeacherSpec, DEGENERATE_NORM};
use crate::landscape::{grad_a_into, grad_w_into, loss_from, spurious_output_weights, Features};
use crate::vector::{dist_sq, dot, norm};

/// Per-iteration step sizes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "schedule", rename_all = "snake_case")]
pub enum StepSchedule {
    /// Step-size warmup: small filter steps for `stage1_iters`, then stage two.
    Ssw {
        eta_a_stage1: f64,
        eta_w_stage1: f64,
        stage1_iters: u64,
        eta_a_stage2: f64,
        eta_w_stage2: f64,
    },
    Constant {
        eta_a: f64,
        eta_w: f64,
    },
    /// Stage-I `eta_a = pi / (20 (k+pi-1)^2)`, `eta_w = C |a*|^2 eta_a^2`;
    /// Stage-II `eta = min(m / 2M^2, 5 pi^2 / (4 (k+pi-1)^2))` for both.
    AnalysisRates {
        k: usize,
        norm_sq_a: f64,
        m: f64,
        big_m: f64,
        c: f64,
        stage1_iters: u64,
    },
}

impl StepSchedule {
    /// Warmup used in the experiments: `eta_a = 1/k^2`, `eta_w = eta_a^2` for
    /// 1000 iterations, then `1/k^2` for both.
    pub fn ssw_for_k(k: usize) -> Self {
        let eta = 1.0 / (k * k) as f64;
        StepSchedule::Ssw {
            eta_a_stage1: eta,
            eta_w_stage1: eta * eta,
            stage1_iters: 1000,
            eta_a_stage2: eta,
            eta_w_stage2: eta,
        }
    }

    /// `eta_a = eta_w = 1/k^2` throughout.
    pub fn constant_for_k(k: usize) -> Self {
        let eta = 1.0 / (k * k) as f64;
        StepSchedule::Constant {
            eta_a: eta,
            eta_w: eta,
        }
    }

    /// Analysis rates with constant `c` (default 1) and Stage-I length
    /// `ceil(10 / eta_a)` unless given.
    pub fn analysis_rates(teacher: &TeacherSpec, c: f64, stage1_iters: Option<u64>) -> Self {
        let k = teacher.k();
        let eta_a = analysis_stage1_eta_a(k);
        StepSchedule::AnalysisRates {
            k,
            norm_sq_a: teacher.norm_sq_a(),
            m: teacher.m(),
            big_m: teacher.big_m(),
            c,
            stage1_iters: stage1_iters.unwrap_or_else(|| (10.0 / eta_a).ceil() as u64),
        }
    }

    /// `(eta_w, eta_a)` for iteration `t` (0-based).
    pub fn rates(&self, t: u64) -> (f64, f64) {
        match *self {
            StepSchedule::Ssw {
                eta_a_stage1,
                eta_w_stage1,
                stage1_iters,
                eta_a_stage2,
                eta_w_stage2,
            } => {
                if t < stage1_iters {
                    (eta_w_stage1, eta_a_stage1)
                } else {
                    (eta_w_stage2, eta_a_stage2)
                }
            }
            StepSchedule::Constant { eta_a, eta_w } => (eta_w, eta_a),
            StepSchedule::AnalysisRates {
                k,
                norm_sq_a,
                m,
                big_m,
                c,
                stage1_iters,
            } => {
                if t < stage1_iters {
                    let eta_a = analysis_stage1_eta_a(k);
                    (c * norm_sq_a * eta_a * eta_a, eta_a)
                } else {
                    let kk = k as f64 + PI - 1.0;
                    let eta = (m / (2.0 * big_m * big_m)).min(5.0 * PI * PI / (4.0 * kk * kk));
                    (eta, eta)
                }
            }
        }
    }

    /// Number of iterations before the second stage starts (0 if single-stage).
    pub fn stage1_len(&self) -> u64 {
        match *self {
            StepSchedule::Ssw { stage1_iters, .. } => stage1_iters,
            StepSchedule::Constant { .. } => 0,
            StepSchedule::AnalysisRates { stage1_iters, .. } => stage1_iters,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let probe = [0, self.stage1_len()];
        for t in probe {
            let (ew, ea) = self.rates(t);
            if !(ew > 0.0 && ea > 0.0 && ew.is_finite() && ea.is_finite()) {
                return Err(Error::domain(format!(
                    "step sizes must be positive, got eta_w = {ew}, eta_a = {ea}"
                )));
            }
        }
        Ok(())
    }
}

fn analysis_stage1_eta_a(k: usize) -> f64 {
    let kk = k as f64 + PI - 1.0;
    PI / (20.0 * kk * kk)
}

/// Classification thresholds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    /// `|a - a*|^2 + |w - w*|^2` at or below this counts as converged.
    pub global: f64,
    /// Trapped requires `phi >= pi - phi_gap`.
    pub phi_gap: f64,
    /// Trapped requires `| |w - w*|^2 - 4 | <= w_gap`.
    pub w_gap: f64,
    /// Trapped requires `|a - a_bar| <= a_rel max(1, |a_bar|)`.
    pub a_rel: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            global: 1e-6,
            phi_gap: 0.1,
            w_gap: 0.2,
            a_rel: 0.1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum Outcome {
    ConvergedGlobal { iters: u64 },
    TrappedSpurious { iters: u64 },
    Undecided { iters: u64 },
}

impl Outcome {
    pub fn iters(&self) -> u64 {
        match *self {
            Outcome::ConvergedGlobal { iters }
            | Outcome::TrappedSpurious { iters }
            | Outcome::Undecided { iters } => iters,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Outcome::ConvergedGlobal { .. } => "converged_global",
            Outcome::TrappedSpurious { .. } => "trapped_spurious",
            Outcome::Undecided { .. } => "undecided",
        }
    }

    pub fn is_success(&self) -> bool {
        matches!(self, Outcome::ConvergedGlobal { .. })
    }
}

/// Per-iteration diagnostics.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub t: u64,
    pub phi: f64,
    pub a_dot_astar: f64,
    /// `1^T a_t`.
    pub sum_a: f64,
    pub w_err_sq: f64,
    pub a_err_sq: f64,
    pub loss: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Trajectory {
    pub records: Vec<Record>,
    pub record_stride: u64,
    /// Iteration at which the second stage of the schedule began.
    pub stage1_len: u64,
    pub final_state: StudentState,
    pub outcome: Outcome,
    /// Set when a step failed and the run stopped early.
    pub failure: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub max_iters: u64,
    pub record_stride: u64,
    pub thresholds: Thresholds,
    /// If set, every this many iterations the iterate is classified and the
    /// run stops as soon as it is already trapped at the spurious optimum.
    pub trap_check_every: Option<u64>,
}

impl RunConfig {
    pub fn new(max_iters: u64, record_stride: u64) -> Self {
        Self {
            max_iters,
            record_stride,
            thresholds: Thresholds::default(),
            trap_check_every: None,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.max_iters == 0 || self.record_stride == 0 {
            return Err(Error::domain(
                "max_iters and record_stride must be positive",
            ));
        }
        if self.trap_check_every == Some(0) {
            return Err(Error::domain("trap_check_every must be positive"));
        }
        Ok(())
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::new(1_000_000, 1)
    }
}

/// Mutable iterate in direction form with gradient scratch space.
struct Iterate<'t> {
    teacher: &'t TeacherSpec,
    v: Vec<f64>,
    a: Vec<f64>,
    gw: Vec<f64>,
    ga: Vec<f64>,
}

impl<'t> Iterate<'t> {
    fn new(state: &StudentState, teacher: &'t TeacherSpec) -> Self {
        Self {
            teacher,
            v: state.direction(),
            a: state.a.clone(),
            gw: vec![0.0; teacher.p()],
            ga: vec![0.0; teacher.k()],
        }
    }

    fn step(&mut self, eta_w: f64, eta_a: f64) -> Result<()> {
        let f = Features::at_direction(&self.v, &self.a, self.teacher);
        grad_w_into(&f, &self.v, self.teacher, &mut self.gw);
        grad_a_into(&f, &self.a, self.teacher, &mut self.ga);
        for (v, g) in self.v.iter_mut().zip(&self.gw) {
            *v -= eta_w * g;
        }
        let n = norm(&self.v);
        if !(n > DEGENERATE_NORM) || !n.is_finite() {
            return Err(Error::DegenerateDirection { norm: n });
        }
        self.v.iter_mut().for_each(|x| *x /= n);
        for (a, g) in self.a.iter_mut().zip(&self.ga) {
            *a -= eta_a * g;
        }
        if self.a.iter().any(|x| !x.is_finite()) {
            return Err(Error::domain("output weights diverged"));
        }
        Ok(())
    }

    fn err_sq(&self) -> (f64, f64) {
        (
            dist_sq(&self.v, self.teacher.v_star()),
            dist_sq(&self.a, self.teacher.a_star()),
        )
    }

    fn record(&self, t: u64) -> Record {
        let f = Features::at_direction(&self.v, &self.a, self.teacher);
        let (w_err_sq, a_err_sq) = self.err_sq();
        Record {
            t,
            phi: f.phi,
            a_dot_astar: f.a_dot_astar,
            sum_a: f.sum_a,
            w_err_sq,
            a_err_sq,
            loss: loss_from(&f, &self.a, self.teacher),
        }
    }

    fn state(&self) -> StudentState {
        StudentState::from_direction(&self.v, self.a.clone())
    }
}

/// One simultaneous update of `(w, a)` from the gradients at the old state.
pub fn gd_step(
    state: &StudentState,
    teacher: &TeacherSpec,
    eta_w: f64,
    eta_a: f64,
) -> Result<StudentState> {
    if !(eta_w > 0.0 && eta_a > 0.0) {
        return Err(Error::domain("step sizes must be positive"));
    }
    state.check(teacher)?;
    let mut it = Iterate::new(state, teacher);
    it.step(eta_w, eta_a)?;
    Ok(it.state())
}

/// `w_0 = 0` and `a_0` uniform in the ball of radius `|1^T a*| / sqrt(k)`.
pub fn sample_init(teacher: &TeacherSpec, seed: u64) -> StudentState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    StudentState::new(vec![0.0; teacher.p()], sample_ball(&mut rng, teacher))
}

/// CNN baseline start: `v_0` uniform on the sphere, `a_0` as in [`sample_init`].
pub fn sample_cnn_init(teacher: &TeacherSpec, seed: u64) -> (Vec<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = sample_ball(&mut rng, teacher);
    let v = sample_unit_sphere(&mut rng, teacher.p());
    (v, a)
}

fn sample_ball<R: Rng>(rng: &mut R, teacher: &TeacherSpec) -> Vec<f64> {
    let k = teacher.k();
    let radius = teacher.sum_a().abs() / (k as f64).sqrt();
    if radius == 0.0 {
        return vec![0.0; k];
    }
    let dir = sample_unit_sphere(rng, k);
    let u: f64 = rng.random();
    let r = radius * u.powf(1.0 / k as f64);
    dir.into_iter().map(|x| x * r).collect()
}

/// Classifies a state as converged, trapped at the spurious optimum, or neither.
pub fn classify_outcome(
    state: &StudentState,
    teacher: &TeacherSpec,
    thresholds: &Thresholds,
    iters: u64,
) -> Outcome {
    let v = state.direction();
    classify_direction(&v, &state.a, teacher, thresholds, iters)
}

fn classify_direction(
    v: &[f64],
    a: &[f64],
    teacher: &TeacherSpec,
    th: &Thresholds,
    iters: u64,
) -> Outcome {
    let w_err = dist_sq(v, teacher.v_star());
    let a_err = dist_sq(a, teacher.a_star());
    if w_err + a_err <= th.global {
        return Outcome::ConvergedGlobal { iters };
    }
    let phi = dot(v, teacher.v_star()).clamp(-1.0, 1.0).acos();
    let a_bar = spurious_output_weights(teacher);
    let a_tol = th.a_rel * norm(&a_bar).max(1.0);
    if phi >= PI - th.phi_gap
        && (w_err - 4.0).abs() <= th.w_gap
        && dist_sq(a, &a_bar).sqrt() <= a_tol
    {
        return Outcome::TrappedSpurious { iters };
    }
    Outcome::Undecided { iters }
}

/// Runs the normalized gradient descent from `init` until the termination
/// rule fires or `max_iters` steps have been taken.
pub fn run(
    init: &StudentState,
    teacher: &TeacherSpec,
    schedule: &StepSchedule,
    config: &RunConfig,
) -> Result<Trajectory> {
    schedule.validate()?;
    config.validate()?;
    init.check(teacher)?;
    Ok(run_unchecked(Iterate::new(init, teacher), schedule, config))
}

fn run_unchecked(mut it: Iterate<'_>, schedule: &StepSchedule, config: &RunConfig) -> Trajectory {
    let teacher = it.teacher;
    let th = &config.thresholds;
    let mut records = vec![it.record(0)];
    let mut failure = None;
    let mut t = 0u64;
    let outcome = loop {
        let (w_err, a_err) = it.err_sq();
        if w_err + a_err <= th.global {
            break Outcome::ConvergedGlobal { iters: t };
        }
        if t >= config.max_iters {
            break classify_direction(&it.v, &it.a, teacher, th, t);
        }
        if let Some(every) = config.trap_check_every {
            if t > 0 && t % every == 0 {
                let o = classify_direction(&it.v, &it.a, teacher, th, t);
                if matches!(o, Outcome::TrappedSpurious { .. }) {
                    break o;
                }
            }
        }
        let (eta_w, eta_a) = schedule.rates(t);
        if let Err(e) = it.step(eta_w, eta_a) {
            failure = Some(e.to_string());
            break Outcome::Undecided { iters: t };
        }
        t += 1;
        if t % config.record_stride == 0 {
            records.push(it.record(t));
        }
    };
    if records.last().map(|r| r.t) != Some(t) {
        records.push(it.record(t));
    }
    Trajectory {
        records,
        record_stride: config.record_stride,
        stage1_len: schedule.stage1_len(),
        final_state: it.state(),
        outcome,
        failure,
    }
}

/// Feed-forward CNN baseline: same update with `v` in place of
/// `1/sqrt(p) + w` and step `eta` for both layers.
pub fn cnn_run(
    init_v: &[f64],
    init_a: &[f64],
    teacher: &TeacherSpec,
    eta: f64,
    config: &RunConfig,
) -> Result<Trajectory> {
    if init_v.len() != teacher.p() {
        return Err(Error::Dimension {
            what: "init_v",
            expected: teacher.p(),
            actual: init_v.len(),
        });
    }
    if (norm(init_v) - 1.0).abs() > 1e-9 {
        return Err(Error::domain("cnn_run: init_v must have unit norm"));
    }
    let schedule = StepSchedule::Constant {
        eta_a: eta,
        eta_w: eta,
    };
    let init = StudentState::from_direction(init_v, init_a.to_vec());
    schedule.validate()?;
    config.validate()?;
    init.check(teacher)?;
    let mut it = Iterate::new(&init, teacher);
    // Keep the caller's exact unit vector rather than the round trip through w.
    it.v.copy_from_slice(init_v);
    Ok(run_unchecked(it, &schedule, config))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::g_phi;
    use crate::landscape::{grad_a, spurious_point};

    fn teacher() -> TeacherSpec {
        TeacherSpec::sample_with_prior(4, 6, 21).unwrap()
    }

    #[test]
    fn fixed_points_are_preserved() {
        let t = teacher();
        let pair = spurious_point(&t);
        for eta in [1e-4, 0.1, 1.0] {
            for s in [pair.global(), pair.spurious()] {
                let next = gd_step(&s, &t, eta, eta).unwrap();
                for (x, y) in next.w.iter().zip(&s.w).chain(next.a.iter().zip(&s.a)) {
                    assert!((x - y).abs() <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn first_step_from_zero_output_weights() {
        let t = teacher();
        let s = StudentState::new(vec![0.0; 4], vec![0.0; 6]);
        let next = gd_step(&s, &t, 0.01, 0.1).unwrap();
        let phi0 = crate::landscape::phi(&s, &t).unwrap();
        let g = g_phi(phi0).unwrap();
        for (j, a) in next.a.iter().enumerate() {
            let expected = 0.1 / (2.0 * PI) * (t.sum_a() + (g - 1.0) * t.a_star()[j]);
            assert!((a - expected).abs() <= 1e-14);
        }
        assert!(next.on_manifold(1e-12));
    }

    #[test]
    fn step_uses_old_state_for_both_gradients() {
        let t = teacher();
        let s = sample_init(&t, 4);
        let next = gd_step(&s, &t, 0.05, 0.05).unwrap();
        let ga = grad_a(&s, &t).unwrap();
        for j in 0..t.k() {
            assert!((next.a[j] - (s.a[j] - 0.05 * ga[j])).abs() <= 1e-15);
        }
    }

    #[test]
    fn step_keeps_direction_nondegenerate() {
        // grad_w is tangent to v, so |v - eta grad_w| >= 1 for any step.
        let t = TeacherSpec::new(vec![1.0, 0.0], vec![1.0]).unwrap();
        let s = StudentState::from_direction(&[0.0, 1.0], vec![1.0]);
        let next = gd_step(&s, &t, 4.0, 0.1).unwrap();
        let d = next.direction();
        assert!((d[0] - d[1]).abs() <= 1e-15);
        assert!(gd_step(&s, &t, 0.0, 0.1).is_err());
    }

    #[test]
    fn init_respects_ball() {
        let t = teacher();
        let r = t.sum_a().abs() / (t.k() as f64).sqrt();
        for seed in 0..200 {
            let s = sample_init(&t, seed);
            assert!(s.w.iter().all(|x| *x == 0.0));
            assert!(norm(&s.a) <= r + 1e-15);
            let sa: f64 = s.a.iter().sum();
            assert!(t.sum_a() * sa - t.sum_a().powi(2) <= 0.0);
        }
        assert_eq!(sample_init(&t, 3), sample_init(&t, 3));
        let zero = TeacherSpec::new(vec![1.0, 0.0], vec![1.0, -1.0]).unwrap();
        assert_eq!(sample_init(&zero, 1).a, vec![0.0, 0.0]);
    }

    #[test]
    fn classify_examples() {
        let t = teacher();
        let th = Thresholds::default();
        let pair = spurious_point(&t);
        assert!(matches!(
            classify_outcome(&pair.global(), &t, &th, 0),
            Outcome::ConvergedGlobal { .. }
        ));
        assert!(matches!(
            classify_outcome(&pair.spurious(), &t, &th, 0),
            Outcome::TrappedSpurious { .. }
        ));
        // Direction orthogonal to v*.
        let mut v = vec![0.0; 4];
        let j = if t.v_star()[0].abs() < 0.9 { 0 } else { 1 };
        v[j] = 1.0;
        let proj = t.v_star()[j];
        let mut u: Vec<f64> = v
            .iter()
            .zip(t.v_star())
            .map(|(a, b)| a - proj * b)
            .collect();
        let n = norm(&u);
        u.iter_mut().for_each(|x| *x /= n);
        let s = StudentState::from_direction(&u, vec![5.0; 6]);
        assert!(matches!(
            classify_outcome(&s, &t, &th, 0),
            Outcome::Undecided { .. }
        ));
    }

    #[test]
    fn run_at_optimum_stops_immediately() {
        let t = teacher();
        let tr = run(
            &t.optimum(),
            &t,
            &StepSchedule::constant_for_k(6),
            &RunConfig::new(10, 1),
        )
        .unwrap();
        assert_eq!(tr.outcome, Outcome::ConvergedGlobal { iters: 0 });
        assert_eq!(tr.records.len(), 1);
    }

    #[test]
    fn cnn_run_fixed_points() {
        let t = teacher();
        let cfg = RunConfig::new(50, 1);
        let tr = cnn_run(t.v_star(), t.a_star(), &t, 0.1, &cfg).unwrap();
        assert_eq!(tr.outcome, Outcome::ConvergedGlobal { iters: 0 });
        let neg: Vec<f64> = t.v_star().iter().map(|x| -x).collect();
        let ab = spurious_output_weights(&t);
        let tr = cnn_run(
            &neg,
            &ab,
            &t,
            0.1,
            &RunConfig {
                trap_check_every: Some(1),
                ..cfg.clone()
            },
        )
        .unwrap();
        assert!(matches!(tr.outcome, Outcome::TrappedSpurious { .. }));
        let tr = cnn_run(&neg, &ab, &t, 0.1, &cfg).unwrap();
        assert_eq!(tr.outcome, Outcome::TrappedSpurious { iters: 50 });
        assert!(cnn_run(&[1.0, 1.0, 0.0, 0.0], &ab, &t, 0.1, &cfg).is_err());
    }

    #[test]
    fn records_follow_stride_and_stay_on_manifold() {
        let t = teacher();
        let init = sample_init(&t, 0);
        let tr = run(
            &init,
            &t,
            &StepSchedule::ssw_for_k(6),
            &RunConfig::new(2_000, 7),
        )
        .unwrap();
        for w in tr.records.windows(2) {
            assert!(w[0].t < w[1].t);
        }
        assert!(tr
            .records
            .iter()
            .all(|r| (0.0..=PI).contains(&r.phi) && r.loss >= -1e-12));
        assert!(tr.final_state.on_manifold(1e-9));
        assert_eq!(tr.records.last().unwrap().t, tr.outcome.iters());
    }

    #[test]
    fn analysis_rates_values() {
        let t = TeacherSpec::new(vec![1.0, 0.0], vec![1.0, 1.0, -1.0]).unwrap();
        let s = StepSchedule::analysis_rates(&t, 1.0, None);
        let kk = 3.0 + PI - 1.0;
        let eta_a = PI / (20.0 * kk * kk);
        let (ew, ea) = s.rates(0);
        assert_eq!(ea, eta_a);
        assert!((ew - 3.0 * eta_a * eta_a).abs() < 1e-18);
        assert_eq!(s.stage1_len(), (10.0 / eta_a).ceil() as u64);
        let (ew, ea) = s.rates(s.stage1_len());
        let m: f64 = 0.6;
        let big_m: f64 = 9.0 + 2.0;
        let expected = (m / (2.0 * big_m * big_m)).min(5.0 * PI * PI / (4.0 * kk * kk));
        assert_eq!((ew, ea), (expected, expected));
    }

    #[test]
    fn schedule_rejects_nonpositive_steps() {
        assert!(StepSchedule::Constant {
            eta_a: 0.0,
            eta_w: 1.0
        }
        .validate()
        .is_err());
        assert!(StepSchedule::ssw_for_k(5).validate().is_ok());
    }
}

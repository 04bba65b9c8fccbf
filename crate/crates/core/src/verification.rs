//! Numerical certification of the partial-dissipativity inequalities by
//! region sampling, and trajectory monitors for the invariants that the
//! convergence analysis maintains along a run.
//!
//! Each region carries one inequality `<-grad, theta* - theta> >= rhs`:
//!
//! | region        | gradient | right-hand side                              |
//! |---------------|----------|----------------------------------------------|
//! | `A`           | `a`      | `|a - a*|^2 / (10 pi)`                       |
//! | `K{m}`        | `w`      | `(m/8) |w - w*|^2`                            |
//! | `AmMdelta`    | `a`      | `(pi-1)/(2 pi) |a - a*|^2 - delta/5`         |

use std::f64::consts::PI;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{sample_unit_sphere, StudentState, TeacherSpec};
use crate::landscape::{grad_a, grad_w, region_membership, RegionSpec, BASIN_ANGLE};
use crate::optimizer::{Record, Trajectory};
use crate::vector::{dist_sq, dot, norm, sub};

/// Additive tolerance on every inequality check.
pub const SLACK_TOL: f64 = 1e-9;

/// Default number of proposals before a region is declared infeasible.
pub const DEFAULT_REJECTION_BUDGET: usize = 100_000;

/// Violating states kept in a report; the full count is always reported.
pub const MAX_STORED_VIOLATIONS: usize = 64;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DissipativityReport {
    pub region: RegionSpec,
    pub n_points: usize,
    /// Minimum over sampled points of lhs - rhs.
    pub min_slack: f64,
    pub violation_count: usize,
    /// Up to [`MAX_STORED_VIOLATIONS`] violating points.
    pub violating_points: Vec<StudentState>,
    pub constant_used: f64,
    pub seed: u64,
}

impl DissipativityReport {
    pub fn passed(&self) -> bool {
        self.violation_count == 0 && self.min_slack >= -SLACK_TOL
    }
}

/// The constant multiplying the squared distance in the region's inequality.
pub fn region_constant(region: &RegionSpec) -> f64 {
    match *region {
        RegionSpec::A => 1.0 / (10.0 * PI),
        RegionSpec::K { m } => m / 8.0,
        RegionSpec::AmMdelta { .. } => (PI - 1.0) / (2.0 * PI),
    }
}

/// `lhs - rhs` of the region's inequality at `state` (membership not checked).
pub fn inequality_slack(
    state: &StudentState,
    region: &RegionSpec,
    teacher: &TeacherSpec,
) -> Result<f64> {
    let c = region_constant(region);
    match *region {
        RegionSpec::A | RegionSpec::AmMdelta { .. } => {
            let g = grad_a(state, teacher)?;
            let diff = sub(teacher.a_star(), &state.a);
            let lhs = -dot(&g, &diff);
            let mut rhs = c * dot(&diff, &diff);
            if let RegionSpec::AmMdelta { delta, .. } = *region {
                rhs -= delta / 5.0;
            }
            Ok(lhs - rhs)
        }
        RegionSpec::K { .. } => {
            let g = grad_w(state, teacher)?;
            let diff = sub(teacher.w_star(), &state.w);
            let lhs = -dot(&g, &diff);
            Ok(lhs - c * dot(&diff, &diff))
        }
    }
}

/// Unit vector within angle `max_angle` of `center`. The polar angle is drawn
/// as `max_angle * u^(1/(p-1))`, which covers the cap including its rim.
fn sample_cap<R: Rng>(rng: &mut R, center: &[f64], max_angle: f64) -> Vec<f64> {
    let p = center.len();
    if p == 1 {
        return center.to_vec();
    }
    let max_angle = max_angle.clamp(0.0, PI);
    let u: f64 = rng.random();
    let theta = max_angle * u.powf(1.0 / (p - 1) as f64);
    let perp = loop {
        let x = sample_unit_sphere(rng, p);
        let c = dot(&x, center);
        let y: Vec<f64> = x.iter().zip(center).map(|(xi, ci)| xi - c * ci).collect();
        let n = norm(&y);
        if n > 1e-8 {
            break y.into_iter().map(|v| v / n).collect::<Vec<_>>();
        }
    };
    let v: Vec<f64> = center
        .iter()
        .zip(&perp)
        .map(|(c, q)| theta.cos() * c + theta.sin() * q)
        .collect();
    let n = norm(&v);
    v.into_iter().map(|x| x / n).collect()
}

fn sample_ball<R: Rng>(rng: &mut R, dim: usize, radius: f64) -> Vec<f64> {
    let dir = sample_unit_sphere(rng, dim);
    let u: f64 = rng.random();
    let r = radius * u.powf(1.0 / dim as f64);
    dir.into_iter().map(|x| x * r).collect()
}

/// Proposal radius for `a`: `3|a*|`, widened when the region's lower bound on
/// `a^T a*` would otherwise sit near or past the edge of the ball.
fn proposal_radius(region: &RegionSpec, teacher: &TeacherSpec) -> f64 {
    let na = teacher.norm_sq_a().sqrt();
    if na == 0.0 {
        return 1.0;
    }
    let lower = match *region {
        RegionSpec::A => 0.0,
        RegionSpec::K { m } | RegionSpec::AmMdelta { m, .. } => m,
    };
    (3.0 * na).max(2.0 * lower / na)
}

fn propose<R: Rng>(
    rng: &mut R,
    region: &RegionSpec,
    teacher: &TeacherSpec,
    radius: f64,
) -> StudentState {
    let v_star = teacher.v_star();
    let v = match *region {
        RegionSpec::A => sample_cap(rng, v_star, BASIN_ANGLE),
        RegionSpec::K { .. } => sample_cap(rng, v_star, PI / 2.0),
        RegionSpec::AmMdelta { delta, .. } => {
            // |v - v*|^2 = 2 - 2 cos(angle)
            let cos_min = (1.0 - delta / 2.0).max(-1.0);
            sample_cap(rng, v_star, cos_min.acos())
        }
    };
    let a = sample_ball(rng, teacher.k(), radius);
    StudentState::from_direction(&v, a)
}

/// Draws a state from `region` by rejection with a budget of `budget` proposals.
pub fn sample_region_with_budget(
    region: &RegionSpec,
    teacher: &TeacherSpec,
    seed: u64,
    budget: usize,
) -> Result<StudentState> {
    region.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let radius = proposal_radius(region, teacher);
    for _ in 0..budget {
        let s = propose(&mut rng, region, teacher, radius);
        if region_membership(&s, region, teacher) {
            return Ok(s);
        }
    }
    Err(Error::InfeasibleRegion { budget })
}

pub fn sample_region(
    region: &RegionSpec,
    teacher: &TeacherSpec,
    seed: u64,
) -> Result<StudentState> {
    sample_region_with_budget(region, teacher, seed, DEFAULT_REJECTION_BUDGET)
}

/// Per-point seed: splitmix64 of `(seed, index)`.
pub(crate) fn point_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn evaluate_points<F>(
    region: RegionSpec,
    teacher: &TeacherSpec,
    n_points: usize,
    seed: u64,
    draw: F,
) -> Result<DissipativityReport>
where
    F: Fn(u64) -> Result<StudentState> + Sync,
{
    if n_points == 0 {
        return Err(Error::domain("n_points must be at least 1"));
    }
    let results: Vec<(f64, StudentState)> = (0..n_points as u64)
        .into_par_iter()
        .map(|i| {
            let s = draw(point_seed(seed, i))?;
            let slack = inequality_slack(&s, &region, teacher)?;
            Ok((slack, s))
        })
        .collect::<Result<_>>()?;
    let min_slack = results.iter().map(|r| r.0).fold(f64::INFINITY, f64::min);
    let violating: Vec<&StudentState> = results
        .iter()
        .filter(|r| r.0 < -SLACK_TOL)
        .map(|r| &r.1)
        .collect();
    Ok(DissipativityReport {
        region,
        n_points,
        min_slack,
        violation_count: violating.len(),
        violating_points: violating
            .into_iter()
            .take(MAX_STORED_VIOLATIONS)
            .cloned()
            .collect(),
        constant_used: region_constant(&region),
        seed,
    })
}

/// Samples `n_points` states from `region` and evaluates its inequality.
pub fn check_dissipativity(
    region: &RegionSpec,
    teacher: &TeacherSpec,
    n_points: usize,
    seed: u64,
) -> Result<DissipativityReport> {
    region.validate()?;
    evaluate_points(*region, teacher, n_points, seed, |s| {
        sample_region(region, teacher, s)
    })
}

/// Evaluates the `K{m}` inequality on states with `v^T v* >= 0` but output
/// weights drawn from the whole proposal ball, so `a^T a* < m` (even negative)
/// is allowed. The checker should find violations here.
pub fn negative_control_k(
    m: f64,
    teacher: &TeacherSpec,
    n_points: usize,
    seed: u64,
) -> Result<DissipativityReport> {
    let region = RegionSpec::K { m };
    region.validate()?;
    let radius = 3.0 * teacher.norm_sq_a().sqrt().max(1e-3);
    evaluate_points(region, teacher, n_points, seed, |s| {
        let mut rng = ChaCha8Rng::seed_from_u64(s);
        Ok(propose(&mut rng, &region, teacher, radius))
    })
}

/// Invariants checked along a recorded trajectory.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Monitor {
    /// `-3 s^2 <= s (1^T a_t) - s^2 <= 0` with `s = 1^T a*`, at every record.
    SumBound,
    /// `phi_t <= 5pi/12` during the first schedule stage.
    Stage1Angle,
    /// `phi_t <= 5pi/12` from basin entry on.
    BasinAngle,
    /// `m <= a_t^T a* <= M` from basin entry on.
    BasinBand,
    /// `|w_t - w*|` non-increasing from basin entry on.
    Contraction,
    /// `|a_t - a*|^2` at the last record no larger than at basin entry.
    OutputConvergence,
}

impl Monitor {
    pub const ALL: [Monitor; 6] = [
        Monitor::SumBound,
        Monitor::Stage1Angle,
        Monitor::BasinAngle,
        Monitor::BasinBand,
        Monitor::Contraction,
        Monitor::OutputConvergence,
    ];

    pub fn id(&self) -> &'static str {
        match self {
            Monitor::SumBound => "sum_bound",
            Monitor::Stage1Angle => "stage1_angle",
            Monitor::BasinAngle => "basin_angle",
            Monitor::BasinBand => "basin_band",
            Monitor::Contraction => "contraction",
            Monitor::OutputConvergence => "output_convergence",
        }
    }

    pub fn parse(id: &str) -> Result<Self> {
        Monitor::ALL
            .into_iter()
            .find(|m| m.id() == id)
            .ok_or_else(|| Error::UnknownMonitor(id.to_string()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Violation {
    pub monitor: Monitor,
    pub t: u64,
    pub observed: f64,
    pub bound: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MonitorReport {
    pub violations: Vec<Violation>,
    /// First record at or after the end of stage one that lies in the basin
    /// `phi <= 5pi/12`, `m <= a^T a* <= M`.
    pub basin_entry: Option<u64>,
    /// True when the trajectory was recorded with stride > 1.
    pub sampled: bool,
}

impl MonitorReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

fn in_basin(r: &Record, teacher: &TeacherSpec) -> bool {
    r.phi <= BASIN_ANGLE && (teacher.m()..=teacher.big_m()).contains(&r.a_dot_astar)
}

/// Evaluates `monitors` at each recorded iterate with [`SLACK_TOL`] slack.
pub fn monitor_trajectory(
    traj: &Trajectory,
    teacher: &TeacherSpec,
    monitors: &[Monitor],
) -> MonitorReport {
    let records = &traj.records;
    let entry_idx = records
        .iter()
        .position(|r| r.t >= traj.stage1_len && in_basin(r, teacher));
    let mut violations = Vec::new();
    let mut push = |monitor, t, observed, bound| {
        violations.push(Violation {
            monitor,
            t,
            observed,
            bound,
        })
    };
    let last_t = records.last().map_or(0, |r| r.t);
    for &monitor in monitors {
        match monitor {
            Monitor::SumBound => {
                let s = teacher.sum_a();
                for r in records {
                    let gap = s * r.sum_a - s * s;
                    if gap > SLACK_TOL {
                        push(monitor, r.t, gap, 0.0);
                    } else if gap < -3.0 * s * s - SLACK_TOL {
                        push(monitor, r.t, gap, -3.0 * s * s);
                    }
                }
            }
            Monitor::Stage1Angle => {
                for r in records.iter().filter(|r| r.t < traj.stage1_len.max(1)) {
                    if r.phi > BASIN_ANGLE + SLACK_TOL {
                        push(monitor, r.t, r.phi, BASIN_ANGLE);
                    }
                }
            }
            Monitor::BasinAngle
            | Monitor::BasinBand
            | Monitor::Contraction
            | Monitor::OutputConvergence => {
                let Some(start) = entry_idx else {
                    // Never entered the basin: report against the final record.
                    let r = records.last().expect("trajectory has records");
                    push(monitor, r.t, r.phi, BASIN_ANGLE);
                    continue;
                };
                let tail = &records[start..];
                match monitor {
                    Monitor::BasinAngle => {
                        for r in tail.iter().filter(|r| r.phi > BASIN_ANGLE + SLACK_TOL) {
                            push(monitor, r.t, r.phi, BASIN_ANGLE);
                        }
                    }
                    Monitor::BasinBand => {
                        for r in tail {
                            if r.a_dot_astar < teacher.m() - SLACK_TOL {
                                push(monitor, r.t, r.a_dot_astar, teacher.m());
                            } else if r.a_dot_astar > teacher.big_m() + SLACK_TOL {
                                push(monitor, r.t, r.a_dot_astar, teacher.big_m());
                            }
                        }
                    }
                    Monitor::Contraction => {
                        for w in tail.windows(2) {
                            if w[1].w_err_sq > w[0].w_err_sq + SLACK_TOL {
                                push(monitor, w[1].t, w[1].w_err_sq, w[0].w_err_sq);
                            }
                        }
                    }
                    _ => {
                        let first = tail[0].a_err_sq;
                        let final_err = tail[tail.len() - 1].a_err_sq;
                        if final_err > first + SLACK_TOL {
                            push(monitor, last_t, final_err, first);
                        }
                    }
                }
            }
        }
    }
    MonitorReport {
        violations,
        basin_entry: entry_idx.map(|i| records[i].t),
        sampled: traj.record_stride > 1,
    }
}

/// Parses comma-separated monitor ids.
pub fn parse_monitors(ids: &str) -> Result<Vec<Monitor>> {
    ids.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(Monitor::parse)
        .collect()
}

/// `|w - w*|^2` helper used by callers that build boundary points.
pub fn w_dist_sq(state: &StudentState, teacher: &TeacherSpec) -> f64 {
    dist_sq(&state.w, teacher.w_star())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::g_phi;
    use crate::optimizer::{run, sample_init, RunConfig, StepSchedule};

    fn teacher() -> TeacherSpec {
        TeacherSpec::sample_with_prior(4, 5, 77).unwrap()
    }

    #[test]
    fn samples_are_members_and_deterministic() {
        let t = teacher();
        for region in [
            RegionSpec::A,
            RegionSpec::K {
                m: 0.2 * t.norm_sq_a(),
            },
            RegionSpec::AmMdelta {
                m: t.m(),
                big_m: t.big_m(),
                delta: 0.01,
            },
        ] {
            for seed in 0..50 {
                let s = sample_region(&region, &t, seed).unwrap();
                assert!(region_membership(&s, &region, &t));
            }
            assert_eq!(
                sample_region(&region, &t, 9).unwrap(),
                sample_region(&region, &t, 9).unwrap()
            );
        }
    }

    #[test]
    fn k_samples_meet_lower_bound() {
        let t = teacher();
        let m = 0.2 * t.norm_sq_a();
        for seed in 0..100 {
            let s = sample_region(&RegionSpec::K { m }, &t, seed).unwrap();
            assert!(dot(&s.a, t.a_star()) >= m);
            assert!(dot(&s.direction(), t.v_star()) >= 0.0);
        }
    }

    #[test]
    fn infeasible_region_reports_budget() {
        let t = teacher();
        let region = RegionSpec::K { m: 1e9 };
        assert!(matches!(
            sample_region_with_budget(
                &region,
                &TeacherSpec::new(vec![1.0], vec![0.0]).unwrap(),
                0,
                50
            ),
            Err(Error::InfeasibleRegion { budget: 50 })
        ));
        let _ = t;
    }

    #[test]
    fn slack_zero_at_true_filter() {
        let t = teacher();
        let s = StudentState::new(t.w_star().to_vec(), vec![1.0, 0.0, 0.0, 0.0, 0.0]);
        let slack = inequality_slack(&s, &RegionSpec::K { m: 0.3 }, &t).unwrap();
        assert_eq!(slack, 0.0);
    }

    #[test]
    fn slack_at_zero_output_weights() {
        let t = TeacherSpec::new(vec![1.0, 0.0, 0.0, 0.0], vec![1.0, -0.5, 2.0]).unwrap();
        let s = StudentState::new(vec![0.0; 4], vec![0.0; 3]);
        let phi = PI / 3.0;
        let g = g_phi(phi).unwrap();
        let n = t.norm_sq_a();
        let expected =
            t.sum_a().powi(2) / (2.0 * PI) + (g - 1.0) / (2.0 * PI) * n - n / (10.0 * PI);
        let slack = inequality_slack(&s, &RegionSpec::A, &t).unwrap();
        assert!((slack - expected).abs() <= 1e-12);
        assert!(slack >= 0.0);
    }

    #[test]
    fn small_suites_pass() {
        let t = teacher();
        for region in [
            RegionSpec::A,
            RegionSpec::K { m: 0.1 },
            RegionSpec::K { m: 1.0 },
        ] {
            let r = check_dissipativity(&region, &t, 500, 3).unwrap();
            assert!(r.passed(), "{region:?}: {}", r.min_slack);
        }
    }

    #[test]
    fn negative_control_finds_violations() {
        let t = teacher();
        let r = negative_control_k(0.2 * t.norm_sq_a(), &t, 500, 1).unwrap();
        assert!(r.violation_count > 0);
        assert!(!r.violating_points.is_empty());
        assert!(r.min_slack < -SLACK_TOL);
    }

    #[test]
    fn report_is_deterministic() {
        let t = teacher();
        let a = check_dissipativity(&RegionSpec::A, &t, 200, 5).unwrap();
        let b = check_dissipativity(&RegionSpec::A, &t, 200, 5).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn monitor_ids_round_trip() {
        for m in Monitor::ALL {
            assert_eq!(Monitor::parse(m.id()).unwrap(), m);
        }
        assert!(matches!(
            Monitor::parse("nope"),
            Err(Error::UnknownMonitor(_))
        ));
        assert_eq!(parse_monitors("sum_bound, contraction").unwrap().len(), 2);
    }

    #[test]
    fn sum_bound_holds_and_breaks() {
        let t = TeacherSpec::sample_with_prior(4, 6, 3).unwrap();
        let init = sample_init(&t, 2);
        let good = run(
            &init,
            &t,
            &StepSchedule::ssw_for_k(6),
            &RunConfig::new(3000, 1),
        )
        .unwrap();
        assert!(monitor_trajectory(&good, &t, &[Monitor::SumBound]).is_clean());
        let bad = StepSchedule::Constant {
            eta_a: 10.0,
            eta_w: 1e-4,
        };
        let tr = run(&init, &t, &bad, &RunConfig::new(50, 1)).unwrap();
        assert!(!monitor_trajectory(&tr, &t, &[Monitor::SumBound]).is_clean());
    }
}

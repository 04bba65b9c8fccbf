//! Closed-form population loss and gradients for Gaussian inputs, the two
//! critical points on the normalized manifold, and the region predicates used
//! by the dissipativity checks.
//!
//! With `v = 1/sqrt(p) + w` on the unit sphere and `phi = angle(v, v_star)`:
//!
//! ```text
//! L = 1/2 [ c|a*|^2 + c|a|^2 - (g(phi)-1)/pi a^T a* + (1^T a*)^2/2pi
//!           + (1^T a)^2/2pi - (1^T a*)(1^T a)/pi ],          c = (pi-1)/2pi
//! grad_a = (11^T + (pi-1)I) a / 2pi - (11^T + (g(phi)-1)I) a* / 2pi
//! grad_w = -(a^T a*)(pi - phi)/2pi (I - v v^T) v*
//! ```
//!
//! The global optimum is `(w*, a*)`. Only the unit-norm representatives of the
//! optimum families are materialized; scaling `v` by any `alpha > 0` while
//! keeping `a` fixed gives the same network output.

use std::f64::consts::PI;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{clamped_acos, g_phi_unchecked, StudentState, TeacherSpec};
use crate::vector::{dist_sq, dot, sum};

const TWO_PI: f64 = 2.0 * PI;

/// Quantities shared by the loss and both gradients at one state.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Features {
    pub phi: f64,
    pub cos_phi: f64,
    pub g: f64,
    pub a_dot_astar: f64,
    pub sum_a: f64,
}

impl Features {
    /// `v` must already be on the unit sphere.
    pub(crate) fn at_direction(v: &[f64], a: &[f64], teacher: &TeacherSpec) -> Self {
        let cos_phi = dot(v, teacher.v_star()).clamp(-1.0, 1.0);
        let phi = clamped_acos(cos_phi);
        Self {
            phi,
            cos_phi,
            g: g_phi_unchecked(phi),
            a_dot_astar: dot(a, teacher.a_star()),
            sum_a: sum(a),
        }
    }
}

pub(crate) fn loss_from(f: &Features, a: &[f64], teacher: &TeacherSpec) -> f64 {
    // Expanded form regrouped as
    // c|a - a*|^2 + (pi - g)/pi a^T a* + (1^T a* - 1^T a)^2 / 2pi,
    // which is exactly zero at the optimum instead of a rounding residue.
    let c = (PI - 1.0) / TWO_PI;
    let ds = teacher.sum_a() - f.sum_a;
    0.5 * (c * dist_sq(a, teacher.a_star()) + (PI - f.g) / PI * f.a_dot_astar + ds * ds / TWO_PI)
}

/// Writes `grad_a` into `out`.
pub(crate) fn grad_a_into(f: &Features, a: &[f64], teacher: &TeacherSpec, out: &mut [f64]) {
    let shift = (f.sum_a - teacher.sum_a()) / TWO_PI;
    let ca = (PI - 1.0) / TWO_PI;
    let cs = (f.g - 1.0) / TWO_PI;
    for ((o, ai), si) in out.iter_mut().zip(a).zip(teacher.a_star()) {
        *o = shift + ca * ai - cs * si;
    }
}

/// Writes `grad_w` into `out`; `v` is the unit direction `1/sqrt(p) + w`.
pub(crate) fn grad_w_into(f: &Features, v: &[f64], teacher: &TeacherSpec, out: &mut [f64]) {
    let scale = -f.a_dot_astar * (PI - f.phi) / TWO_PI;
    for ((o, vi), si) in out.iter_mut().zip(v).zip(teacher.v_star()) {
        *o = scale * (si - f.cos_phi * vi);
    }
}

/// Population loss `1/2 E_Z[g(v*, a*, Z) - f(w, a, Z)]^2` in closed form.
pub fn population_loss(state: &StudentState, teacher: &TeacherSpec) -> Result<f64> {
    state.check(teacher)?;
    let f = Features::at_direction(&state.direction(), &state.a, teacher);
    Ok(loss_from(&f, &state.a, teacher))
}

pub fn grad_a(state: &StudentState, teacher: &TeacherSpec) -> Result<Vec<f64>> {
    state.check(teacher)?;
    let f = Features::at_direction(&state.direction(), &state.a, teacher);
    let mut out = vec![0.0; teacher.k()];
    grad_a_into(&f, &state.a, teacher, &mut out);
    Ok(out)
}

/// Gradient in `w`; always tangent to the sphere at `1/sqrt(p) + w`.
pub fn grad_w(state: &StudentState, teacher: &TeacherSpec) -> Result<Vec<f64>> {
    state.check(teacher)?;
    let v = state.direction();
    let f = Features::at_direction(&v, &state.a, teacher);
    let mut out = vec![0.0; teacher.p()];
    grad_w_into(&f, &v, teacher, &mut out);
    Ok(out)
}

/// `phi = angle(1/sqrt(p) + w, v*)` for a state on the manifold.
pub fn phi(state: &StudentState, teacher: &TeacherSpec) -> Result<f64> {
    state.check(teacher)?;
    Ok(clamped_acos(dot(&state.direction(), teacher.v_star())))
}

/// The global optimum and the spurious local optimum on the normalized manifold.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CriticalPair {
    pub global_w: Vec<f64>,
    pub global_a: Vec<f64>,
    /// `-1/sqrt(p) - v*`, so the student direction is `-v*`.
    pub spurious_w: Vec<f64>,
    /// `(11^T + (pi-1)I)^{-1} (11^T - I) a*`.
    pub spurious_a: Vec<f64>,
}

impl CriticalPair {
    pub fn global(&self) -> StudentState {
        StudentState::new(self.global_w.clone(), self.global_a.clone())
    }

    pub fn spurious(&self) -> StudentState {
        StudentState::new(self.spurious_w.clone(), self.spurious_a.clone())
    }
}

/// Output weights of the spurious optimum.
///
/// `(11^T + (pi-1)I)^{-1} = (I - 11^T / (pi-1+k)) / (pi-1)`, and the right-hand
/// side `(11^T - I) a*` is `s 1 - a*` with `s = 1^T a*`.
pub fn spurious_output_weights(teacher: &TeacherSpec) -> Vec<f64> {
    let k = teacher.k() as f64;
    let s = teacher.sum_a();
    let shift = (k - 1.0) * s / (PI - 1.0 + k);
    teacher
        .a_star()
        .iter()
        .map(|ai| ((s - ai) - shift) / (PI - 1.0))
        .collect()
}

pub fn spurious_point(teacher: &TeacherSpec) -> CriticalPair {
    let c = 1.0 / (teacher.p() as f64).sqrt();
    CriticalPair {
        global_w: teacher.w_star().to_vec(),
        global_a: teacher.a_star().to_vec(),
        spurious_w: teacher.v_star().iter().map(|v| -c - v).collect(),
        spurious_a: spurious_output_weights(teacher),
    }
}

/// Regions on which partial dissipativity is certified.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "region")]
pub enum RegionSpec {
    /// Stage-I region for the output weights.
    A,
    /// `a^T a* >= m` and `v^T v* >= 0`.
    K { m: f64 },
    /// `a^T a*` in `[m, M]` and `|w - w*|^2 <= delta`.
    AmMdelta { m: f64, big_m: f64, delta: f64 },
}

impl RegionSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            RegionSpec::A => Ok(()),
            RegionSpec::K { m } if m > 0.0 => Ok(()),
            RegionSpec::AmMdelta { m, big_m, delta } if m > 0.0 && big_m >= m && delta > 0.0 => {
                Ok(())
            }
            other => Err(Error::domain(format!("invalid region {other:?}"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            RegionSpec::A => "A",
            RegionSpec::K { .. } => "K",
            RegionSpec::AmMdelta { .. } => "AmMdelta",
        }
    }
}

/// Upper bound on `phi` inside region A and the basin of attraction.
pub const BASIN_ANGLE: f64 = 5.0 * PI / 12.0;

/// Whether `state` lies in `region` (closed inequalities; manifold rechecked).
pub fn region_membership(state: &StudentState, region: &RegionSpec, teacher: &TeacherSpec) -> bool {
    if state.check(teacher).is_err() {
        return false;
    }
    let a_star = teacher.a_star();
    let ada = dot(&state.a, a_star);
    let v = state.direction();
    match *region {
        RegionSpec::A => {
            let n = teacher.norm_sq_a();
            let half_dist: f64 = state
                .a
                .iter()
                .zip(a_star)
                .map(|(a, s)| (a - 0.5 * s).powi(2))
                .sum();
            let a_cond = ada <= n / 20.0 || half_dist >= n;
            let phi = clamped_acos(dot(&v, teacher.v_star()));
            let s = teacher.sum_a();
            let sum_gap = s * sum(&state.a) - s * s;
            a_cond && phi <= BASIN_ANGLE && -3.0 * s * s <= sum_gap && sum_gap <= 0.0
        }
        RegionSpec::K { m } => ada >= m && dot(&v, teacher.v_star()) >= 0.0,
        RegionSpec::AmMdelta { m, big_m, delta } => {
            (m..=big_m).contains(&ada) && dist_sq(&state.w, teacher.w_star()) <= delta
        }
    }
}

//! Angles, the ReLU correlation kernel `g`, and the shortcut normalization map.
//!
//! The student's first-layer direction is `v = 1/sqrt(p) + w`, kept on the unit
//! sphere by [`renormalize_shortcut`]. Everything in this module is a pure
//! function of its arguments.

use std::f64::consts::PI;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::vector::{dot, norm, norm_sq, sum};

/// Tolerance on `|1/sqrt(p) + w| = 1` for states accepted by the landscape.
pub const MANIFOLD_TOL: f64 = 1e-9;

/// Below this norm `1/sqrt(p) + w` is treated as the zero vector.
pub const DEGENERATE_NORM: f64 = 1e-12;

/// `g(phi) = (pi - phi) cos(phi) + sin(phi)` on `[0, pi]`.
///
/// Decreases strictly from `g(0) = pi` to `g(pi) = 0`.
pub fn g_phi(phi: f64) -> Result<f64> {
    if !(0.0..=PI).contains(&phi) {
        return Err(Error::domain(format!("g_phi: angle {phi} outside [0, pi]")));
    }
    Ok(g_phi_unchecked(phi))
}

#[inline]
pub(crate) fn g_phi_unchecked(phi: f64) -> f64 {
    (PI - phi) * phi.cos() + phi.sin()
}

/// Angle between two nonzero vectors, in `[0, pi]`.
pub fn angle_between(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::Dimension {
            what: "angle_between",
            expected: u.len(),
            actual: v.len(),
        });
    }
    let nu = norm(u);
    let nv = norm(v);
    if nu <= 0.0 || nv <= 0.0 || !nu.is_finite() || !nv.is_finite() {
        return Err(Error::domain("angle_between: zero-norm input"));
    }
    Ok(clamped_acos(dot(u, v) / (nu * nv)))
}

#[inline]
pub(crate) fn clamped_acos(cos: f64) -> f64 {
    cos.clamp(-1.0, 1.0).acos()
}

/// The all-equal unit vector `1/sqrt(p)`.
pub fn shortcut_direction(p: usize) -> Result<Vec<f64>> {
    if p == 0 {
        return Err(Error::domain("shortcut_direction: p must be positive"));
    }
    Ok(vec![1.0 / (p as f64).sqrt(); p])
}

/// Maps an unnormalized filter offset `w_tilde` back onto the manifold:
/// `(1/sqrt(p) + w_tilde) / |1/sqrt(p) + w_tilde| - 1/sqrt(p)`.
pub fn renormalize_shortcut(w_tilde: &[f64]) -> Result<Vec<f64>> {
    let p = w_tilde.len();
    let c = 1.0 / (p.max(1) as f64).sqrt();
    if p == 0 {
        return Err(Error::domain("renormalize_shortcut: empty vector"));
    }
    let mut v: Vec<f64> = w_tilde.iter().map(|x| x + c).collect();
    let n = norm(&v);
    if !(n > DEGENERATE_NORM) || !n.is_finite() {
        return Err(Error::DegenerateDirection { norm: n });
    }
    for x in v.iter_mut() {
        *x = *x / n - c;
    }
    Ok(v)
}

/// True network parameters plus the derived quantities used throughout.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TeacherSpec {
    p: usize,
    k: usize,
    v_star: Vec<f64>,
    a_star: Vec<f64>,
    w_star: Vec<f64>,
    sum_a: f64,
    norm_sq_a: f64,
    m: f64,
    big_m: f64,
    strict_prior: bool,
}

impl TeacherSpec {
    /// Builds a teacher from a unit filter `v_star` and output weights `a_star`.
    ///
    /// Rejects `v_star` that is not unit norm (1e-12) and teachers with
    /// `|w_star| >= sqrt(2)`, i.e. `v_star` not in the open half-space of
    /// the shortcut direction.
    pub fn new(v_star: Vec<f64>, a_star: Vec<f64>) -> Result<Self> {
        let p = v_star.len();
        let k = a_star.len();
        if p == 0 || k == 0 {
            return Err(Error::InvalidTeacher("p and k must be positive".into()));
        }
        if v_star.iter().chain(&a_star).any(|x| !x.is_finite()) {
            return Err(Error::InvalidTeacher("non-finite parameter".into()));
        }
        let nv = norm(&v_star);
        if (nv - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidTeacher(format!(
                "|v*| = {nv}, expected unit norm"
            )));
        }
        let c = 1.0 / (p as f64).sqrt();
        let w_star: Vec<f64> = v_star.iter().map(|v| v - c).collect();
        let w_norm = norm(&w_star);
        // |w*| < sqrt(2) iff v* has positive overlap with the shortcut; test
        // the overlap directly so rounding in |w*| cannot admit the boundary.
        if sum(&v_star) * c <= 1e-12 {
            return Err(Error::InvalidTeacher(format!(
                "|w*| = {w_norm} >= sqrt(2): v* does not lean toward the shortcut"
            )));
        }
        let sum_a = sum(&a_star);
        let norm_sq_a = norm_sq(&a_star);
        Ok(Self {
            p,
            k,
            m: norm_sq_a / 5.0,
            big_m: 3.0 * norm_sq_a + 2.0 * sum_a * sum_a,
            strict_prior: w_norm <= 1.0,
            v_star,
            a_star,
            w_star,
            sum_a,
            norm_sq_a,
        })
    }

    /// Random teacher satisfying the shortcut prior `|w_star| <= 1`, with
    /// standard normal output weights.
    pub fn sample_with_prior(p: usize, k: usize, seed: u64) -> Result<Self> {
        if p == 0 || k == 0 {
            return Err(Error::InvalidTeacher("p and k must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = 1.0 / (p as f64).sqrt();
        let v_star = loop {
            let v = sample_unit_sphere(&mut rng, p);
            // |v - 1/sqrt(p)|^2 = 2 - 2 cos, so the prior is cos >= 1/2.
            if v.iter().sum::<f64>() * c >= 0.5 {
                break v;
            }
        };
        let a_star = (0..k).map(|_| rng.sample(StandardNormal)).collect();
        Self::new(v_star, a_star)
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn v_star(&self) -> &[f64] {
        &self.v_star
    }

    pub fn a_star(&self) -> &[f64] {
        &self.a_star
    }

    /// `v_star - 1/sqrt(p)`.
    pub fn w_star(&self) -> &[f64] {
        &self.w_star
    }

    /// `1^T a_star`.
    pub fn sum_a(&self) -> f64 {
        self.sum_a
    }

    /// `|a_star|^2`.
    pub fn norm_sq_a(&self) -> f64 {
        self.norm_sq_a
    }

    /// Lower end of the basin band on `a^T a_star`: `|a_star|^2 / 5`.
    pub fn m(&self) -> f64 {
        self.m
    }

    /// Upper end of the basin band: `3|a_star|^2 + 2(1^T a_star)^2`.
    pub fn big_m(&self) -> f64 {
        self.big_m
    }

    /// Whether `|w_star| <= 1` holds (the shortcut prior).
    pub fn strict_prior(&self) -> bool {
        self.strict_prior
    }

    /// Angle between `v_star` and the shortcut direction.
    pub fn shortcut_angle(&self) -> f64 {
        let c = 1.0 / (self.p as f64).sqrt();
        clamped_acos(sum(&self.v_star) * c)
    }

    /// Recomputes `(m, M)` from `a_star`.
    pub fn recompute_bounds(&self) -> (f64, f64) {
        let n = norm_sq(&self.a_star);
        let s = sum(&self.a_star);
        (n / 5.0, 3.0 * n + 2.0 * s * s)
    }

    /// The global optimum `(w_star, a_star)` as a student state.
    pub fn optimum(&self) -> StudentState {
        StudentState {
            w: self.w_star.clone(),
            a: self.a_star.clone(),
        }
    }
}

/// Current iterate `(w, a)`. On the manifold `|1/sqrt(p) + w| = 1`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StudentState {
    pub w: Vec<f64>,
    pub a: Vec<f64>,
}

impl StudentState {
    pub fn new(w: Vec<f64>, a: Vec<f64>) -> Self {
        Self { w, a }
    }

    /// State whose first-layer direction is the given unit vector `v`.
    pub fn from_direction(v: &[f64], a: Vec<f64>) -> Self {
        let c = 1.0 / (v.len().max(1) as f64).sqrt();
        Self {
            w: v.iter().map(|x| x - c).collect(),
            a,
        }
    }

    /// `1/sqrt(p) + w`.
    pub fn direction(&self) -> Vec<f64> {
        let c = 1.0 / (self.w.len().max(1) as f64).sqrt();
        self.w.iter().map(|x| x + c).collect()
    }

    /// `|1/sqrt(p) + w|`.
    pub fn direction_norm(&self) -> f64 {
        norm(&self.direction())
    }

    pub fn on_manifold(&self, tol: f64) -> bool {
        (self.direction_norm() - 1.0).abs() <= tol
    }

    pub(crate) fn check(&self, teacher: &TeacherSpec) -> Result<()> {
        if self.w.len() != teacher.p {
            return Err(Error::Dimension {
                what: "w",
                expected: teacher.p,
                actual: self.w.len(),
            });
        }
        if self.a.len() != teacher.k {
            return Err(Error::Dimension {
                what: "a",
                expected: teacher.k,
                actual: self.a.len(),
            });
        }
        let n = self.direction_norm();
        if !((n - 1.0).abs() <= MANIFOLD_TOL) {
            return Err(Error::OffManifold { norm: n });
        }
        Ok(())
    }
}

/// Uniform direction on the unit sphere in `R^dim` (normalized Gaussian).
pub(crate) fn sample_unit_sphere<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> Vec<f64> {
    loop {
        let x: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let n = norm(&x);
        if n > 1e-12 {
            return x.into_iter().map(|v| v / n).collect();
        }
    }
}

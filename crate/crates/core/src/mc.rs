//! Monte-Carlo oracle for the population loss and its gradients, plus a
//! central-difference gradient checker.
//!
//! Inputs are `k` independent standard normal patches `Z_j in R^p`. Normals
//! come from ChaCha8 (`rand_chacha`) through the Ziggurat sampler in
//! `rand_distr::StandardNormal`. Samples are grouped into fixed blocks of
//! [`BLOCK_SIZE`]; block `b` draws from the ChaCha8 stream `b` of the seeded
//! key, and per-block moments are merged in block order. The estimate is
//! therefore the same no matter how many rayon workers run the blocks.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{renormalize_shortcut, StudentState, TeacherSpec};
use crate::landscape::{grad_a, grad_w, population_loss};
use crate::vector::dot;

pub const BLOCK_SIZE: usize = 4096;

/// Sample mean with its standard error.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct McEstimate<T> {
    pub value: T,
    /// Sample standard deviation over `sqrt(n_samples)`.
    pub std_error: T,
    pub n_samples: usize,
    pub seed: u64,
}

/// Loss and both gradients estimated from one shared sample set.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct McEvaluation {
    pub loss: McEstimate<f64>,
    pub grad_w: McEstimate<Vec<f64>>,
    pub grad_a: McEstimate<Vec<f64>>,
}

/// Running mean / sum of squared deviations, merged with Chan's update.
#[derive(Clone, Copy, Debug, Default)]
struct Moments {
    n: f64,
    mean: f64,
    m2: f64,
}

impl Moments {
    #[inline]
    fn push(&mut self, x: f64) {
        self.n += 1.0;
        let d = x - self.mean;
        self.mean += d / self.n;
        self.m2 += d * (x - self.mean);
    }

    fn merge(&mut self, other: &Moments) {
        if other.n == 0.0 {
            return;
        }
        let n = self.n + other.n;
        let d = other.mean - self.mean;
        self.mean += d * other.n / n;
        self.m2 += other.m2 + d * d * self.n * other.n / n;
        self.n = n;
    }

    fn std_error(&self) -> f64 {
        if self.n < 2.0 {
            return 0.0;
        }
        (self.m2 / (self.n - 1.0)).sqrt() / self.n.sqrt()
    }
}

/// Per-sample integrands. Component layout: `[loss, grad_w (p), grad_a (k)]`.
struct Integrand<'a> {
    teacher: &'a TeacherSpec,
    v: Vec<f64>,
    a: &'a [f64],
}

impl Integrand<'_> {
    fn dim(&self) -> usize {
        1 + self.teacher.p() + self.teacher.k()
    }

    /// `z` holds `k` patches of length `p`, row-major. `acc` is `p` scratch.
    fn eval(&self, z: &[f64], acc: &mut [f64], out: &mut [f64]) {
        let p = self.teacher.p();
        let k = self.teacher.k();
        let a_star = self.teacher.a_star();
        let v_star = self.teacher.v_star();
        let mut g = 0.0;
        let mut f = 0.0;
        acc.iter_mut().for_each(|x| *x = 0.0);
        for j in 0..k {
            let zj = &z[j * p..(j + 1) * p];
            let x = dot(zj, v_star);
            let y = dot(zj, &self.v);
            if x > 0.0 {
                g += a_star[j] * x;
            }
            // sigma'(0) = 0.
            let act = if y > 0.0 { y } else { 0.0 };
            f += self.a[j] * act;
            out[1 + p + j] = act;
            if y > 0.0 {
                for (ai, zi) in acc.iter_mut().zip(zj) {
                    *ai += self.a[j] * zi;
                }
            }
        }
        let r = g - f;
        out[0] = 0.5 * r * r;
        for j in 0..k {
            out[1 + p + j] *= -r;
        }
        // (I - v v^T) acc
        let proj = dot(&self.v, acc);
        for i in 0..p {
            out[1 + i] = -r * (acc[i] - proj * self.v[i]);
        }
    }
}

fn block_moments(integrand: &Integrand<'_>, seed: u64, block: usize, count: usize) -> Vec<Moments> {
    let p = integrand.teacher.p();
    let k = integrand.teacher.k();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(block as u64);
    let mut z = vec![0.0; p * k];
    let mut acc = vec![0.0; p];
    let mut out = vec![0.0; integrand.dim()];
    let mut moments = vec![Moments::default(); integrand.dim()];
    for _ in 0..count {
        for x in z.iter_mut() {
            *x = rng.sample(StandardNormal);
        }
        integrand.eval(&z, &mut acc, &mut out);
        for (m, x) in moments.iter_mut().zip(&out) {
            m.push(*x);
        }
    }
    moments
}

/// Estimates the loss and both gradients from `n_samples` Gaussian inputs.
pub fn mc_evaluate(
    state: &StudentState,
    teacher: &TeacherSpec,
    n_samples: usize,
    seed: u64,
) -> Result<McEvaluation> {
    if n_samples < 2 {
        return Err(Error::domain(
            "Monte-Carlo estimate needs at least 2 samples",
        ));
    }
    state.check(teacher)?;
    let integrand = Integrand {
        teacher,
        v: state.direction(),
        a: &state.a,
    };
    let n_blocks = n_samples.div_ceil(BLOCK_SIZE);
    let blocks: Vec<Vec<Moments>> = (0..n_blocks)
        .into_par_iter()
        .map(|b| {
            let count = BLOCK_SIZE.min(n_samples - b * BLOCK_SIZE);
            block_moments(&integrand, seed, b, count)
        })
        .collect();
    let mut total = vec![Moments::default(); integrand.dim()];
    for block in &blocks {
        for (t, m) in total.iter_mut().zip(block) {
            t.merge(m);
        }
    }
    let p = teacher.p();
    let estimate = |range: std::ops::Range<usize>| McEstimate {
        value: total[range.clone()]
            .iter()
            .map(|m| m.mean)
            .collect::<Vec<_>>(),
        std_error: total[range]
            .iter()
            .map(Moments::std_error)
            .collect::<Vec<_>>(),
        n_samples,
        seed,
    };
    Ok(McEvaluation {
        loss: McEstimate {
            value: total[0].mean,
            std_error: total[0].std_error(),
            n_samples,
            seed,
        },
        grad_w: estimate(1..1 + p),
        grad_a: estimate(1 + p..integrand.dim()),
    })
}

pub fn mc_loss(
    state: &StudentState,
    teacher: &TeacherSpec,
    n_samples: usize,
    seed: u64,
) -> Result<McEstimate<f64>> {
    Ok(mc_evaluate(state, teacher, n_samples, seed)?.loss)
}

/// `(w-gradient, a-gradient)` estimates.
pub fn mc_grads(
    state: &StudentState,
    teacher: &TeacherSpec,
    n_samples: usize,
    seed: u64,
) -> Result<(McEstimate<Vec<f64>>, McEstimate<Vec<f64>>)> {
    let e = mc_evaluate(state, teacher, n_samples, seed)?;
    Ok((e.grad_w, e.grad_a))
}

/// Per-sample loss values, for checking pointwise behaviour of the integrand.
pub fn mc_loss_samples(
    state: &StudentState,
    teacher: &TeacherSpec,
    n_samples: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    state.check(teacher)?;
    let integrand = Integrand {
        teacher,
        v: state.direction(),
        a: &state.a,
    };
    let p = teacher.p();
    let mut out = Vec::with_capacity(n_samples);
    let mut z = vec![0.0; p * teacher.k()];
    let mut acc = vec![0.0; p];
    let mut buf = vec![0.0; integrand.dim()];
    for b in 0..n_samples.div_ceil(BLOCK_SIZE) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(b as u64);
        for _ in 0..BLOCK_SIZE.min(n_samples - b * BLOCK_SIZE) {
            for x in z.iter_mut() {
                *x = rng.sample(StandardNormal);
            }
            integrand.eval(&z, &mut acc, &mut buf);
            out.push(buf[0]);
        }
    }
    Ok(out)
}

/// Worst relative error of the analytic gradients against central differences.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FdReport {
    pub max_rel_error_a: f64,
    pub max_rel_error_w: f64,
}

/// Below this reference magnitude the error is reported in absolute terms.
pub const FD_ABS_FLOOR: f64 = 1e-8;

fn component_error(fd: f64, exact: f64) -> f64 {
    let err = (fd - exact).abs();
    if exact.abs() < FD_ABS_FLOOR {
        err
    } else {
        err / exact.abs()
    }
}

/// Central differences of the loss in each `a` coordinate, and of the
/// pullback `w_tilde -> L(renormalize(w_tilde), a)` in each `w` coordinate.
pub fn fd_grad_check(state: &StudentState, teacher: &TeacherSpec, step: f64) -> Result<FdReport> {
    if !(step > 0.0 && step <= 1e-3) {
        return Err(Error::domain(format!(
            "finite-difference step {step} outside (0, 1e-3]"
        )));
    }
    let ga = grad_a(state, teacher)?;
    let gw = grad_w(state, teacher)?;

    let mut max_a: f64 = 0.0;
    let mut probe = state.clone();
    for j in 0..teacher.k() {
        let orig = probe.a[j];
        probe.a[j] = orig + step;
        let plus = population_loss(&probe, teacher)?;
        probe.a[j] = orig - step;
        let minus = population_loss(&probe, teacher)?;
        probe.a[j] = orig;
        max_a = max_a.max(component_error((plus - minus) / (2.0 * step), ga[j]));
    }

    let pullback = |w_tilde: &[f64]| -> Result<f64> {
        let w = renormalize_shortcut(w_tilde)?;
        population_loss(&StudentState::new(w, state.a.clone()), teacher)
    };
    let mut max_w: f64 = 0.0;
    let mut w = state.w.clone();
    for i in 0..teacher.p() {
        let orig = w[i];
        w[i] = orig + step;
        let plus = pullback(&w)?;
        w[i] = orig - step;
        let minus = pullback(&w)?;
        w[i] = orig;
        max_w = max_w.max(component_error((plus - minus) / (2.0 * step), gw[i]));
    }
    Ok(FdReport {
        max_rel_error_a: max_a,
        max_rel_error_w: max_w,
    })
}

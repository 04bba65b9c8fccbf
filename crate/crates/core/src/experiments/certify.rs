//! Certification of the closed-form gradients against finite differences and
//! the Monte-Carlo oracle on random states.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{sample_unit_sphere, StudentState, TeacherSpec};
use crate::landscape::{grad_a, grad_w, population_loss};
use crate::mc::{fd_grad_check, mc_evaluate};
use crate::verification::point_seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertifyConfig {
    pub n_states: usize,
    pub n_samples: usize,
    pub seed: u64,
    pub fd_step: f64,
    /// Largest accepted finite-difference relative error.
    pub fd_tol: f64,
    /// Comparisons count as agreeing within this many standard errors.
    pub se_multiple: f64,
    /// Required fraction of agreeing comparisons.
    pub mc_fraction: f64,
    pub k_values: Vec<usize>,
    pub p_values: Vec<usize>,
}

impl Default for CertifyConfig {
    fn default() -> Self {
        Self {
            n_states: 50,
            n_samples: 1_000_000,
            seed: 7,
            fd_step: 1e-6,
            fd_tol: 1e-5,
            se_multiple: 4.0,
            mc_fraction: 0.95,
            k_values: vec![2, 5, 25],
            p_values: vec![2, 4, 8],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CertifyReport {
    pub n_states: usize,
    pub max_fd_rel_error: f64,
    pub comparisons: usize,
    pub within: usize,
    pub fraction_within: f64,
    pub fd_ok: bool,
    pub mc_ok: bool,
}

impl CertifyReport {
    pub fn passed(&self) -> bool {
        self.fd_ok && self.mc_ok
    }
}

/// Teacher and state for case `i`: shapes cycle through the configured
/// `(k, p)` grid; the direction is uniform on the sphere and `a` is normal.
pub fn certification_case(config: &CertifyConfig, i: usize) -> Result<(TeacherSpec, StudentState)> {
    let nk = config.k_values.len();
    let k = config.k_values[i % nk];
    let p = config.p_values[(i / nk) % config.p_values.len()];
    let seed = point_seed(config.seed, i as u64);
    let teacher = TeacherSpec::sample_with_prior(p, k, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let v = sample_unit_sphere(&mut rng, p);
    let a: Vec<f64> = (0..k).map(|_| rng.sample(StandardNormal)).collect();
    Ok((teacher, StudentState::from_direction(&v, a)))
}

pub fn certify_gradients(config: &CertifyConfig) -> Result<CertifyReport> {
    if config.n_states == 0 || config.k_values.is_empty() || config.p_values.is_empty() {
        return Err(Error::Config(
            "certification needs states and shapes".into(),
        ));
    }
    let mut max_fd: f64 = 0.0;
    let (mut comparisons, mut within) = (0usize, 0usize);
    for i in 0..config.n_states {
        let (teacher, state) = certification_case(config, i)?;
        let fd = fd_grad_check(&state, &teacher, config.fd_step)?;
        max_fd = max_fd.max(fd.max_rel_error_a).max(fd.max_rel_error_w);

        let mc = mc_evaluate(
            &state,
            &teacher,
            config.n_samples,
            point_seed(config.seed ^ 0xabc, i as u64),
        )?;
        let mut pairs = vec![(
            mc.loss.value,
            mc.loss.std_error,
            population_loss(&state, &teacher)?,
        )];
        let gw = grad_w(&state, &teacher)?;
        let ga = grad_a(&state, &teacher)?;
        for (j, g) in gw.iter().enumerate() {
            pairs.push((mc.grad_w.value[j], mc.grad_w.std_error[j], *g));
        }
        for (j, g) in ga.iter().enumerate() {
            pairs.push((mc.grad_a.value[j], mc.grad_a.std_error[j], *g));
        }
        for (est, se, exact) in pairs {
            comparisons += 1;
            // The absolute slack covers components that vanish identically,
            // such as the radial part of the projected w-gradient.
            if (est - exact).abs() <= config.se_multiple * se + 1e-12 {
                within += 1;
            }
        }
    }
    let fraction_within = within as f64 / comparisons as f64;
    Ok(CertifyReport {
        n_states: config.n_states,
        max_fd_rel_error: max_fd,
        comparisons,
        within,
        fraction_within,
        fd_ok: max_fd <= config.fd_tol,
        mc_ok: fraction_within >= config.mc_fraction,
    })
}

//! Teachers and the fixed initialization used by the reproduction runs.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::geometry::TeacherSpec;

/// Patch counts with tabulated output weights.
pub const EXPERIMENT_K_VALUES: [usize; 7] = [16, 25, 36, 49, 64, 81, 100];

/// `(ones, minus_ones, zeros)` of the tabulated output weights.
fn table_counts(k: usize) -> Option<(usize, usize, usize)> {
    Some(match k {
        16 => (9, 7, 0),
        25 => (14, 11, 0),
        36 => (19, 16, 1),
        49 => (26, 22, 1),
        64 => (34, 30, 0),
        81 => (43, 38, 0),
        100 => (52, 47, 1),
        _ => return None,
    })
}

/// Counts for patch numbers outside the table: `ceil(0.54 k)` ones,
/// `floor(0.46 k)` minus-ones, zeros for the remainder.
fn generic_counts(k: usize) -> (usize, usize, usize) {
    let ones = (0.54 * k as f64).ceil() as usize;
    let minus = ((0.46 * k as f64).floor() as usize).min(k - ones);
    (ones, minus, k - ones - minus)
}

/// Whether `k` has tabulated output weights.
pub fn is_tabulated(k: usize) -> bool {
    table_counts(k).is_some()
}

/// `v* = (cos(7pi/10), sin(7pi/10), 0, ..., 0)`.
pub fn experiment_filter(p: usize) -> Result<Vec<f64>> {
    if p < 2 {
        return Err(Error::domain("experiment filter needs p >= 2"));
    }
    let mut v = vec![0.0; p];
    v[0] = (0.7 * PI).cos();
    v[1] = (0.7 * PI).sin();
    Ok(v)
}

/// Output weights for `k` patches; `allow_generic` admits untabulated `k`.
pub fn output_weights(k: usize, allow_generic: bool) -> Result<Vec<f64>> {
    let (ones, minus, zeros) = match table_counts(k) {
        Some(c) => c,
        None if allow_generic && k > 0 => generic_counts(k),
        None => {
            return Err(Error::domain(format!(
                "no tabulated output weights for k = {k} (allowed: {EXPERIMENT_K_VALUES:?})"
            )))
        }
    };
    let mut a = Vec::with_capacity(k);
    a.extend(std::iter::repeat_n(1.0, ones));
    a.extend(std::iter::repeat_n(-1.0, minus));
    a.extend(std::iter::repeat_n(0.0, zeros));
    Ok(a)
}

/// The experiment teacher for `k` patches of dimension `p`.
pub fn teacher_for_k(k: usize, p: usize) -> Result<TeacherSpec> {
    TeacherSpec::new(experiment_filter(p)?, output_weights(k, false)?)
}

/// Same as [`teacher_for_k`] but accepts any `k` through the generic rule.
pub fn teacher_for_k_generic(k: usize, p: usize) -> Result<TeacherSpec> {
    TeacherSpec::new(experiment_filter(p)?, output_weights(k, true)?)
}

/// Output-weight initialization for the fixed-start trajectories (`k = 25`).
pub fn fixed_a0_k25() -> Vec<f64> {
    vec![
        -0.1268, -0.1590, -0.1071, -0.1594, -0.4670, 0.1563, 0.1894, -0.2390, -0.0602, -0.5047,
        0.0325, -0.0886, 0.1514, -0.0883, -0.0243, 0.1198, -0.2805, 0.0024, -0.0855, 0.0742,
        -0.0976, -0.1768, 0.1207, 0.0049, 0.1809,
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vector::{norm, norm_sq, sum};

    #[test]
    fn tabulated_counts() {
        let expected = [
            (16, 9, 7, 0),
            (25, 14, 11, 0),
            (36, 19, 16, 1),
            (49, 26, 22, 1),
            (64, 34, 30, 0),
            (81, 43, 38, 0),
            (100, 52, 47, 1),
        ];
        for (k, ones, minus, zeros) in expected {
            let a = output_weights(k, false).unwrap();
            assert_eq!(a.len(), k);
            assert_eq!(a.iter().filter(|x| **x == 1.0).count(), ones);
            assert_eq!(a.iter().filter(|x| **x == -1.0).count(), minus);
            assert_eq!(a.iter().filter(|x| **x == 0.0).count(), zeros);
            // Ones come first, then minus-ones.
            assert!(a[..ones].iter().all(|x| *x == 1.0));
        }
        let t = teacher_for_k(16, 8).unwrap();
        assert_eq!(t.sum_a(), 2.0);
        assert_eq!(t.norm_sq_a(), 16.0);
        let t = teacher_for_k(100, 8).unwrap();
        assert_eq!(t.sum_a(), 5.0);
        assert_eq!(t.a_star()[99], 0.0);
    }

    #[test]
    fn unsupported_k_needs_generic_flag() {
        assert!(teacher_for_k(20, 8).is_err());
        let t = teacher_for_k_generic(20, 8).unwrap();
        assert_eq!(t.k(), 20);
        assert_eq!(norm_sq(t.a_star()), 20.0);
    }

    #[test]
    fn filter_is_unit_and_off_prior() {
        for k in EXPERIMENT_K_VALUES {
            let t = teacher_for_k(k, 8).unwrap();
            assert!((norm(t.v_star()) - 1.0).abs() <= 1e-15);
            // |w*| is between 1 and sqrt(2) for this filter.
            assert!(!t.strict_prior());
        }
        let t = teacher_for_k(25, 8).unwrap();
        assert!((t.shortcut_angle() / PI - 0.475).abs() < 1e-3);
    }

    #[test]
    fn fixed_init_norm() {
        let a0 = fixed_a0_k25();
        assert_eq!(a0.len(), 25);
        assert_eq!(a0[0], -0.1268);
        assert_eq!(a0[24], 0.1809);
        let t = teacher_for_k(25, 8).unwrap();
        // The recorded vector is not inside the |1^T a*|/sqrt(k) = 0.6 ball
        // of the random-init law; it does satisfy the sum condition.
        assert!((norm(&a0) - 0.952).abs() < 1e-3);
        assert!(norm(&a0) > t.sum_a().abs() / 5.0);
        assert!(sum(&a0) * t.sum_a() <= t.sum_a().powi(2));
    }
}

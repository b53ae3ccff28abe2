//! Central finite-difference gradient checker.

use rand::Rng;

/// Denominator floor for relative errors: gradients smaller than this in both
/// routes are compared absolutely.
pub const REL_ERROR_FLOOR: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub probes: usize,
}

impl GradCheckReport {
    pub fn merge(self, other: GradCheckReport) -> GradCheckReport {
        let worst = if other.max_rel_error > self.max_rel_error {
            other
        } else {
            self
        };
        GradCheckReport {
            probes: self.probes + other.probes,
            ..worst
        }
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR)
}

/// Compare `analytic` (the gradient of `loss` at `x0`) against central
/// differences at `probes` randomly chosen coordinates. When `probes` covers the
/// whole vector every coordinate is checked once.
pub fn grad_check<F>(
    mut loss: F,
    x0: &[f64],
    analytic: &[f64],
    probes: usize,
    h: f64,
    rng: &mut impl Rng,
) -> GradCheckReport
where
    F: FnMut(&[f64]) -> f64,
{
    assert_eq!(
        x0.len(),
        analytic.len(),
        "gradient length must match parameters"
    );
    let coords: Vec<usize> = if probes >= x0.len() {
        (0..x0.len()).collect()
    } else {
        (0..probes).map(|_| rng.random_range(0..x0.len())).collect()
    };
    let mut x = x0.to_vec();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_index: 0,
        probes: coords.len(),
    };
    for i in coords {
        x[i] = x0[i] + h;
        let up = loss(&x);
        x[i] = x0[i] - h;
        let down = loss(&x);
        x[i] = x0[i];
        let numeric = (up - down) / (2.0 * h);
        let err = relative_error(analytic[i], numeric);
        if err > report.max_rel_error || err.is_nan() {
            report.max_rel_error = if err.is_nan() { f64::INFINITY } else { err };
            report.worst_index = i;
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    #[test]
    fn square_at_three() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let r = grad_check(|w| w[0] * w[0], &[3.0], &[6.0], 1, 1e-5, &mut rng);
        assert!(r.max_rel_error < 1e-8, "{r:?}");
    }

    #[test]
    fn detects_wrong_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let r = grad_check(|w| w[0] * w[0], &[3.0], &[6.01], 1, 1e-5, &mut rng);
        assert!(r.max_rel_error > 1e-4);
    }

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(0.0, 0.0), 0.0);
        assert!(relative_error(1e-12, 0.0) < 1e-5);
    }
}

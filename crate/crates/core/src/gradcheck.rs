//! Central finite-difference verification of every differentiable loss.
//!
//! Each registered case exposes the loss as a pure function of a parameter
//! vector plus an analytic-gradient routine; the checker probes sampled
//! coordinates with central differences at double precision and reports the
//! worst relative error. The probe never calls the backward pass it checks.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autograd::Matrix;

pub struct GradCheckCase {
    pub name: &'static str,
    /// Build the probed parameter tensors for one seed.
    pub make: Box<dyn Fn(u64) -> Vec<Matrix> + Send + Sync>,
    /// Loss value at the given parameters.
    pub eval: Box<dyn Fn(&[Matrix]) -> f64 + Send + Sync>,
    /// Analytic gradients at the given parameters, one per tensor.
    pub grads: Box<dyn Fn(&[Matrix]) -> Vec<Matrix> + Send + Sync>,
}

#[derive(Debug, Clone)]
pub struct CaseReport {
    pub name: String,
    pub max_rel_err: f64,
    pub probes: usize,
    pub seeds: usize,
}

impl CaseReport {
    pub fn passed(&self, tol: f64) -> bool {
        self.max_rel_err <= tol
    }
}

const FD_EPS: f64 = 1e-5;

/// Probe `case` over `seeds` random instances, sampling at most
/// `probes_per_tensor` coordinates from each parameter tensor.
pub fn check_case(case: &GradCheckCase, seeds: u64, probes_per_tensor: usize) -> CaseReport {
    let mut max_rel_err: f64 = 0.0;
    let mut probes = 0;
    for seed in 0..seeds {
        let params = (case.make)(seed);
        let analytic = (case.grads)(&params);
        assert_eq!(analytic.len(), params.len(), "{}: grad arity", case.name);
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9e37_79b9).wrapping_add(17));
        for (k, tensor) in params.iter().enumerate() {
            let mut coords: Vec<(usize, usize)> = (0..tensor.nrows())
                .flat_map(|r| (0..tensor.ncols()).map(move |c| (r, c)))
                .collect();
            coords.shuffle(&mut rng);
            coords.truncate(probes_per_tensor);
            for (r, c) in coords {
                let mut shifted = params.clone();
                shifted[k][[r, c]] += FD_EPS;
                let hi = (case.eval)(&shifted);
                shifted[k][[r, c]] -= 2.0 * FD_EPS;
                let lo = (case.eval)(&shifted);
                let numeric = (hi - lo) / (2.0 * FD_EPS);
                let ana = analytic[k][[r, c]];
                let denom = ana.abs().max(numeric.abs());
                let err = if denom < 1e-6 {
                    (ana - numeric).abs()
                } else {
                    (ana - numeric).abs() / denom
                };
                max_rel_err = max_rel_err.max(err);
                probes += 1;
            }
        }
    }
    CaseReport {
        name: case.name.to_string(),
        max_rel_err,
        probes,
        seeds: seeds as usize,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quadratic_case(corrupt: bool) -> GradCheckCase {
        GradCheckCase {
            name: "quadratic",
            make: Box::new(|seed| {
                vec![Matrix::from_shape_fn((2, 3), |(r, c)| {
                    (seed as f64 + 1.0) * 0.1 * (r as f64 - c as f64 + 0.5)
                })]
            }),
            eval: Box::new(|p| p[0].iter().map(|x| x * x * 0.5 + x.sin()).sum()),
            grads: Box::new(move |p| {
                let mut g = p[0].mapv(|x| x + x.cos());
                if corrupt {
                    g[[0, 0]] += 0.01;
                }
                vec![g]
            }),
        }
    }

    #[test]
    fn clean_case_passes() {
        let report = check_case(&quadratic_case(false), 5, 6);
        assert!(report.passed(1e-4), "max rel err {}", report.max_rel_err);
    }

    #[test]
    fn corrupted_gradient_is_reported() {
        let report = check_case(&quadratic_case(true), 5, 6);
        assert!(!report.passed(1e-4));
    }
}

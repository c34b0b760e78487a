//! Non-negative least squares, `min ||A x - b||` subject to `x >= 0`.
//!
//! Lawson-Hanson active-set iteration on the normal equations; passive-set
//! subproblems are solved by Cholesky. Adequate for the small, well
//! conditioned systems built by the characteristic-function fit.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::scalar::{lit, Real};

#[derive(Debug, Clone)]
pub struct NnlsSolution<T: Real> {
    pub x: DVector<T>,
    /// `||A x - b||_2`, evaluated on the original system.
    pub residual_norm: T,
    pub iterations: usize,
}

pub fn nnls<T: Real>(a: &DMatrix<T>, b: &DVector<T>) -> Result<NnlsSolution<T>> {
    let k = a.ncols();
    let at = a.transpose();
    let g = &at * a;
    let h = &at * b;
    let scale = h.iter().fold(T::zero(), |m, v| m.max(v.abs())).max(T::one());
    let tol = T::default_epsilon() * lit::<T>(1e4) * scale;
    let mut x = DVector::zeros(k);
    let mut passive = vec![false; k];
    let max_iter = 3 * k + 10;
    let mut iterations = 0;
    loop {
        let w = &h - &g * &x;
        let candidate = (0..k)
            .filter(|&j| !passive[j] && w[j] > tol)
            .max_by(|&i, &j| w[i].partial_cmp(&w[j]).expect("finite gradient"));
        let Some(j) = candidate else { break };
        passive[j] = true;
        loop {
            iterations += 1;
            if iterations > max_iter {
                return Err(Error::Convergence { dim: k, max_dim: max_iter, change: f64::NAN });
            }
            let z = solve_passive(&g, &h, &passive)?;
            let all_positive = (0..k).filter(|&i| passive[i]).all(|i| z[i] > T::zero());
            if all_positive {
                x = z;
                break;
            }
            let mut step = T::one();
            for i in (0..k).filter(|&i| passive[i] && z[i] <= T::zero()) {
                let denom = x[i] - z[i];
                if denom > T::zero() {
                    step = step.min(x[i] / denom);
                }
            }
            x = &x + (&z - &x) * step;
            for i in 0..k {
                if passive[i] && x[i] <= tol * T::default_epsilon() {
                    passive[i] = false;
                    x[i] = T::zero();
                }
            }
        }
    }
    let residual_norm = (a * &x - b).norm();
    Ok(NnlsSolution { x, residual_norm, iterations })
}

fn solve_passive<T: Real>(g: &DMatrix<T>, h: &DVector<T>, passive: &[bool]) -> Result<DVector<T>> {
    let idx: Vec<usize> = (0..passive.len()).filter(|&i| passive[i]).collect();
    let p = idx.len();
    let gp = DMatrix::from_fn(p, p, |i, j| g[(idx[i], idx[j])]);
    let hp = DVector::from_fn(p, |i, _| h[idx[i]]);
    let zp = match gp.clone().cholesky() {
        Some(ch) => ch.solve(&hp),
        None => gp
            .lu()
            .solve(&hp)
            .ok_or_else(|| Error::ProcessValidity("singular normal equations in non-negative fit".into()))?,
    };
    let mut z = DVector::zeros(passive.len());
    for (i, &gi) in idx.iter().enumerate() {
        z[gi] = zp[i];
    }
    Ok(z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn recovers_interior_solution() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        let x_true = DVector::from_vec(vec![0.3, 0.7]);
        let b = &a * &x_true;
        let sol = nnls(&a, &b).unwrap();
        assert!((sol.x - x_true).norm() < 1e-14);
        assert!(sol.residual_norm < 1e-14);
    }

    #[test]
    fn clamps_negative_direction() {
        // unconstrained optimum is x = (1, -1)
        let a = DMatrix::<f64>::identity(2, 2);
        let b = DVector::from_vec(vec![1.0, -1.0]);
        let sol = nnls(&a, &b).unwrap();
        assert_eq!(sol.x[1], 0.0);
        assert!((sol.x[0] - 1.0).abs() < 1e-15);
        assert!((sol.residual_norm - 1.0).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn kkt_conditions_hold(entries in prop::collection::vec(-1.0f64..1.0, 24), rhs in prop::collection::vec(-1.0f64..1.0, 6)) {
            let a = DMatrix::from_row_slice(6, 4, &entries);
            let b = DVector::from_vec(rhs);
            prop_assume!(a.clone().svd(false, false).singular_values.min() > 1e-3);
            let sol = nnls(&a, &b).unwrap();
            let grad = a.transpose() * (&b - &a * &sol.x);
            for j in 0..4 {
                prop_assert!(sol.x[j] >= 0.0);
                prop_assert!(grad[j] <= 1e-9);
                if sol.x[j] > 0.0 {
                    prop_assert!(grad[j].abs() <= 1e-9);
                }
            }
        }
    }
}

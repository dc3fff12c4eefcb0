//! Simultaneous diagonalization of symmetric matrices by Jacobi sweeps.
//!
//! Each sweep visits every index pair `(p, q)` and applies the Givens rotation
//! that maximizes the summed squared diagonals of all matrices, which has a
//! closed form in terms of the 2x2 matrix
//! `G = sum_A h(A) h(A)^T`, `h(A) = (A_pp - A_qq, A_pq + A_qp)`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

pub const DEFAULT_TOL: f64 = 1e-12;
pub const DEFAULT_MAX_SWEEPS: usize = 100;

/// Result of [`joint_diagonalize`].
#[derive(Debug, Clone)]
pub struct JointDiagonalization {
    /// Orthonormal `O` with `O^T A O` nearly diagonal for every input `A`.
    pub rotation: DMatrix<f64>,
    pub sweeps: usize,
    /// Final off-diagonal Frobenius mass relative to the total mass.
    pub residual: f64,
}

fn off_diagonal_sq(a: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    let mut acc = 0.0;
    for j in 0..n {
        for i in 0..n {
            if i != j {
                acc += a[(i, j)] * a[(i, j)];
            }
        }
    }
    acc
}

/// Off-diagonal Frobenius mass of `O^T A O` relative to `||A||_F`.
pub fn relative_off_diagonal(a: &DMatrix<f64>, rotation: &DMatrix<f64>) -> f64 {
    let d = rotation.transpose() * a * rotation;
    let total = a.norm();
    if total == 0.0 {
        0.0
    } else {
        off_diagonal_sq(&d).sqrt() / total
    }
}

fn rotation_angle(mats: &[DMatrix<f64>], p: usize, q: usize) -> (f64, f64) {
    let (mut g11, mut g12, mut g22) = (0.0, 0.0, 0.0);
    for a in mats {
        let h1 = a[(p, p)] - a[(q, q)];
        let h2 = a[(p, q)] + a[(q, p)];
        g11 += h1 * h1;
        g12 += h1 * h2;
        g22 += h2 * h2;
    }
    let ton = g11 - g22;
    let toff = 2.0 * g12;
    let theta = 0.5 * toff.atan2(ton + ton.hypot(toff));
    (theta.cos(), theta.sin())
}

fn rotate(a: &mut DMatrix<f64>, p: usize, q: usize, c: f64, s: f64) {
    let n = a.nrows();
    for j in 0..n {
        let (ap, aq) = (a[(p, j)], a[(q, j)]);
        a[(p, j)] = c * ap + s * aq;
        a[(q, j)] = -s * ap + c * aq;
    }
    for i in 0..n {
        let (ap, aq) = (a[(i, p)], a[(i, q)]);
        a[(i, p)] = c * ap + s * aq;
        a[(i, q)] = -s * ap + c * aq;
    }
}

/// Finds one orthonormal matrix that jointly diagonalizes `slices`.
///
/// Stops once the relative off-diagonal mass falls below `tol`, once a sweep
/// improves it by less than `tol`, or after `max_sweeps` sweeps.
pub fn joint_diagonalize(
    slices: &[DMatrix<f64>],
    tol: f64,
    max_sweeps: usize,
) -> Result<JointDiagonalization> {
    let Some(first) = slices.first() else {
        return Err(Error::InvalidArgument("no matrices to diagonalize".into()));
    };
    let k = first.nrows();
    for a in slices {
        if a.shape() != (k, k) {
            return Err(Error::DimensionMismatch(format!(
                "expected {k}x{k} matrices, got {:?}",
                a.shape()
            )));
        }
        let asym = (a - a.transpose()).amax();
        if asym > 1e-8 * a.amax().max(f64::MIN_POSITIVE) {
            return Err(Error::NotSymmetric(asym));
        }
    }

    let mut mats: Vec<DMatrix<f64>> = slices.to_vec();
    let mut v = DMatrix::<f64>::identity(k, k);
    let total: f64 = mats.iter().map(|a| a.norm_squared()).sum::<f64>().sqrt();
    let off = |mats: &[DMatrix<f64>]| -> f64 {
        if total == 0.0 {
            0.0
        } else {
            mats.iter().map(off_diagonal_sq).sum::<f64>().sqrt() / total
        }
    };

    let mut residual = off(&mats);
    let mut sweeps = 0;
    while sweeps < max_sweeps && residual > tol {
        for p in 0..k.saturating_sub(1) {
            for q in p + 1..k {
                let (c, s) = rotation_angle(&mats, p, q);
                if s == 0.0 {
                    continue;
                }
                for a in mats.iter_mut() {
                    rotate(a, p, q, c, s);
                }
                for i in 0..k {
                    let (vp, vq) = (v[(i, p)], v[(i, q)]);
                    v[(i, p)] = c * vp + s * vq;
                    v[(i, q)] = -s * vp + c * vq;
                }
            }
        }
        sweeps += 1;
        let next = off(&mats);
        let gain = residual - next;
        residual = next;
        if gain < tol {
            break;
        }
    }
    Ok(JointDiagonalization {
        rotation: v,
        sweeps,
        residual,
    })
}

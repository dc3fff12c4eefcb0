use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::moments::GammaSlices;

/// Rank-`K` square root of `beta` and its pseudo-inverse.
#[derive(Debug, Clone)]
pub struct WhiteningFactor {
    /// `L x K`, equal to `U diag(eigvals)^(1/2)`.
    pub m: DMatrix<f64>,
    /// `K x L` pseudo-inverse of `m`.
    pub m_pinv: DMatrix<f64>,
    /// The `K` largest eigenvalues in decreasing order, clamped at zero.
    pub eigvals: DVector<f64>,
    /// Orthonormal eigenvectors matching `eigvals`.
    pub eigvecs: DMatrix<f64>,
}

/// Slices conjugated by the whitening pseudo-inverse.
#[derive(Debug, Clone)]
pub struct WhitenedSlices {
    pub slices: Vec<DMatrix<f64>>,
    pub slice_colors: Vec<u32>,
}

pub const DEFAULT_EPS_RANK: f64 = 1e-12;

/// Leading-`K` eigendecomposition of a symmetric PSD matrix.
///
/// The input is symmetrized before decomposition. Fails when the `K`-th
/// eigenvalue does not exceed `eps_rank`.
pub fn truncated_psd_eig(beta: &DMatrix<f64>, k: usize, eps_rank: f64) -> Result<WhiteningFactor> {
    let l = beta.nrows();
    if beta.ncols() != l {
        return Err(Error::DimensionMismatch(format!(
            "beta is {}x{}",
            beta.nrows(),
            beta.ncols()
        )));
    }
    if k == 0 || k > l {
        return Err(Error::InvalidArgument(format!("rank {k} outside 1..={l}")));
    }
    let sym = (beta + beta.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..l).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));

    let kth = eig.eigenvalues[order[k - 1]];
    if !(kth > eps_rank) {
        let effective = order
            .iter()
            .take_while(|&&i| eig.eigenvalues[i] > eps_rank)
            .count();
        return Err(Error::RankDeficient {
            requested: k,
            effective,
        });
    }

    let mut eigvecs = DMatrix::zeros(l, k);
    let mut eigvals = DVector::zeros(k);
    for (j, &i) in order.iter().take(k).enumerate() {
        let mut v = eig.eigenvectors.column(i).into_owned();
        // Sign convention: nonnegative component sum.
        if v.sum() < 0.0 {
            v.neg_mut();
        }
        eigvecs.set_column(j, &v);
        eigvals[j] = eig.eigenvalues[i].max(0.0);
    }
    let roots = eigvals.map(f64::sqrt);
    let m = &eigvecs * DMatrix::from_diagonal(&roots);
    let m_pinv = DMatrix::from_diagonal(&roots.map(|s| 1.0 / s)) * eigvecs.transpose();
    Ok(WhiteningFactor {
        m,
        m_pinv,
        eigvals,
        eigvecs,
    })
}

fn whiten_one<C: Copy + Into<f64>>(slice: &[C], m_pinv: &DMatrix<f64>) -> DMatrix<f64> {
    let (k, l) = m_pinv.shape();
    // t = m_pinv * slice, row-major k x l
    let mut t = vec![0.0f64; k * l];
    for i in 0..l {
        let row = &slice[i * l..(i + 1) * l];
        for a in 0..k {
            let coef = m_pinv[(a, i)];
            if coef == 0.0 {
                continue;
            }
            let dst = &mut t[a * l..(a + 1) * l];
            for (d, &s) in dst.iter_mut().zip(row) {
                *d += coef * s.into();
            }
        }
    }
    let mut out = DMatrix::zeros(k, k);
    for a in 0..k {
        let ta = &t[a * l..(a + 1) * l];
        for b in 0..k {
            let mut acc = 0.0;
            for (j, &x) in ta.iter().enumerate() {
                acc += x * m_pinv[(b, j)];
            }
            out[(a, b)] = acc;
        }
    }
    (&out + out.transpose()) * 0.5
}

/// Maps every retained slice `S` to `M^+ S (M^+)^T`.
pub fn whiten_slices<C>(gamma: &GammaSlices<C>, wf: &WhiteningFactor) -> Result<WhitenedSlices>
where
    C: Copy + Into<f64> + Send + Sync,
{
    if gamma.palette_size() != wf.m_pinv.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "slices over {} colors, whitening factor over {}",
            gamma.palette_size(),
            wf.m_pinv.ncols()
        )));
    }
    let slices = (0..gamma.len())
        .into_par_iter()
        .map(|s| whiten_one(gamma.slice(s), &wf.m_pinv))
        .collect();
    Ok(WhitenedSlices {
        slices,
        slice_colors: gamma.colors().to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn outer_sum(thetas: &[Vec<f64>], w: &[f64]) -> DMatrix<f64> {
        let l = thetas[0].len();
        DMatrix::from_fn(l, l, |i, j| {
            thetas.iter().zip(w).map(|(t, wk)| wk * t[i] * t[j]).sum()
        })
    }

    #[test]
    fn rank_one_is_analytic() {
        let theta = [0.8, 0.2];
        let beta = DMatrix::from_fn(2, 2, |i, j| theta[i] * theta[j]);
        let wf = truncated_psd_eig(&beta, 1, DEFAULT_EPS_RANK).unwrap();
        assert!((wf.eigvals[0] - 0.68).abs() < 1e-15);
        let norm = 0.68f64.sqrt();
        assert!((wf.eigvecs[(0, 0)] - 0.8 / norm).abs() < 1e-12);
        assert!((wf.eigvecs[(1, 0)] - 0.2 / norm).abs() < 1e-12);
        let id = &wf.m_pinv * &wf.m;
        assert!((id[(0, 0)] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn reconstructs_exact_low_rank_beta() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let l = 16;
        let thetas: Vec<Vec<f64>> = (0..3)
            .map(|_| {
                let v: Vec<f64> = (0..l).map(|_| rng.gen::<f64>()).collect();
                let s: f64 = v.iter().sum();
                v.into_iter().map(|x| x / s).collect()
            })
            .collect();
        let w = [0.5, 0.3, 0.2];
        let beta = outer_sum(&thetas, &w);
        let wf = truncated_psd_eig(&beta, 3, DEFAULT_EPS_RANK).unwrap();
        let recon = &wf.eigvecs * DMatrix::from_diagonal(&wf.eigvals) * wf.eigvecs.transpose();
        assert!((recon - &beta).amax() <= 1e-10);
        let mm = &wf.m - &wf.eigvecs * DMatrix::from_diagonal(&wf.eigvals.map(f64::sqrt));
        assert!(mm.amax() <= 1e-12);
        let id = &wf.m_pinv * &wf.m - DMatrix::<f64>::identity(3, 3);
        assert!(id.amax() <= 1e-8);
        let orth = wf.eigvecs.transpose() * &wf.eigvecs - DMatrix::<f64>::identity(3, 3);
        assert!(orth.amax() <= 1e-12);
    }

    #[test]
    fn reports_effective_rank() {
        let thetas = vec![vec![0.7, 0.3, 0.0, 0.0], vec![0.0, 0.1, 0.4, 0.5]];
        let beta = outer_sum(&thetas, &[0.4, 0.6]);
        match truncated_psd_eig(&beta, 3, DEFAULT_EPS_RANK) {
            Err(Error::RankDeficient {
                requested: 3,
                effective: 2,
            }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn whitening_edge_cases() {
        let theta = [0.6, 0.4];
        let beta = DMatrix::from_fn(2, 2, |i, j| theta[i] * theta[j]);
        let wf = truncated_psd_eig(&beta, 1, DEFAULT_EPS_RANK).unwrap();
        let gamma = GammaSlices::from_dense(2, vec![0, 1], vec![3u32, 1, 1, 2, 0, 0, 0, 0]).unwrap();
        let white = whiten_slices(&gamma, &wf).unwrap();
        assert_eq!(white.slices[0].shape(), (1, 1));
        assert!(white.slices[0][(0, 0)] >= 0.0);
        assert_eq!(white.slices[1][(0, 0)], 0.0);
        let wrong = GammaSlices::from_dense(3, vec![0], vec![0u32; 9]).unwrap();
        assert!(whiten_slices(&wrong, &wf).is_err());
    }
}

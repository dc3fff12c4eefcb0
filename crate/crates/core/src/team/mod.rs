//! Recovery of appearance models and region proportions from co-occurrence
//! moments.
//!
//! With `Theta = [theta_1 | ... | theta_K]` and `W = diag(w)`, the pair moment
//! factors as `beta = Theta W Theta^T` and every third-order slice as
//! `Theta W^(1/2) diag(Theta(s, .)) W^(1/2) Theta^T`. Whitening the slices
//! with the pseudo-inverse of a rank-`K` square root `M` of `beta` leaves
//! matrices that one orthonormal `O` diagonalizes jointly, and
//! `M O = Theta W^(1/2)` up to column order and sign.

mod jacobi;
mod simplex;
mod whiten;

pub use jacobi::{
    joint_diagonalize, relative_off_diagonal, JointDiagonalization, DEFAULT_MAX_SWEEPS,
    DEFAULT_TOL,
};
pub use simplex::project_simplex;
pub use whiten::{truncated_psd_eig, whiten_slices, WhitenedSlices, WhiteningFactor, DEFAULT_EPS_RANK};

use log::warn;
use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::moments::MomentEstimates;

/// Tolerance used when validating externally supplied distributions.
pub const SIMPLEX_TOL: f64 = 1e-6;

/// `K` appearance models over a palette of size `L` with region proportions.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSet {
    theta: Vec<Vec<f64>>,
    w: Vec<f64>,
}

fn check_simplex(v: &[f64], what: &str) -> Result<()> {
    let sum: f64 = v.iter().sum();
    if (sum - 1.0).abs() > SIMPLEX_TOL || v.iter().any(|&x| !(x >= -SIMPLEX_TOL)) {
        return Err(Error::InvalidModelSet(format!(
            "{what} is not a probability vector (sum {sum})"
        )));
    }
    Ok(())
}

impl ModelSet {
    pub fn new(theta: Vec<Vec<f64>>, w: Vec<f64>) -> Result<Self> {
        if theta.is_empty() {
            return Err(Error::InvalidModelSet("no models".into()));
        }
        if theta.len() != w.len() {
            return Err(Error::InvalidModelSet(format!(
                "{} models but {} proportions",
                theta.len(),
                w.len()
            )));
        }
        let l = theta[0].len();
        if l == 0 || theta.iter().any(|t| t.len() != l) {
            return Err(Error::InvalidModelSet("models differ in length".into()));
        }
        for (k, t) in theta.iter().enumerate() {
            check_simplex(t, &format!("theta[{k}]"))?;
        }
        check_simplex(&w, "w")?;
        Ok(Self { theta, w })
    }

    pub fn palette_size(&self) -> usize {
        self.theta[0].len()
    }

    pub fn num_regions(&self) -> usize {
        self.theta.len()
    }

    pub fn thetas(&self) -> &[Vec<f64>] {
        &self.theta
    }

    pub fn theta(&self, k: usize) -> &[f64] {
        &self.theta[k]
    }

    pub fn weights(&self) -> &[f64] {
        &self.w
    }

    /// Reorders regions so that new region `i` is old region `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        Self {
            theta: perm.iter().map(|&p| self.theta[p].clone()).collect(),
            w: perm.iter().map(|&p| self.w[p]).collect(),
        }
    }
}

/// Numerical knobs of [`team_estimate_with`].
#[derive(Debug, Clone, Copy)]
pub struct TeamOptions {
    pub eps_rank: f64,
    pub jd_tol: f64,
    pub max_sweeps: usize,
    /// Diagonal damping used when the estimated models are collinear.
    pub ridge: f64,
}

impl Default for TeamOptions {
    fn default() -> Self {
        Self {
            eps_rank: DEFAULT_EPS_RANK,
            jd_tol: DEFAULT_TOL,
            max_sweeps: DEFAULT_MAX_SWEEPS,
            ridge: 1e-10,
        }
    }
}

/// Side information from one estimation.
#[derive(Debug, Clone, Default)]
pub struct TeamDiagnostics {
    pub eigvals: Vec<f64>,
    pub sweeps: usize,
    pub jd_residual: f64,
    pub warnings: Vec<String>,
}

pub fn team_estimate<C>(moments: &MomentEstimates<C>, k: usize) -> Result<ModelSet>
where
    C: Copy + Into<f64> + Send + Sync,
{
    team_estimate_with(moments, k, &TeamOptions::default()).map(|(m, _)| m)
}

/// Full estimation pipeline: truncated eigendecomposition of `beta`,
/// whitening, joint diagonalization, then simplex projection of the models
/// and of the least-squares proportions.
///
/// Regions come out sorted by decreasing proportion.
pub fn team_estimate_with<C>(
    moments: &MomentEstimates<C>,
    k: usize,
    opts: &TeamOptions,
) -> Result<(ModelSet, TeamDiagnostics)>
where
    C: Copy + Into<f64> + Send + Sync,
{
    let l = moments.palette_size();
    if k == 0 {
        return Err(Error::InvalidArgument("K must be at least 1".into()));
    }
    if moments.beta.shape() != (l, l) || moments.gamma.palette_size() != l {
        return Err(Error::DimensionMismatch("moment estimates disagree on L".into()));
    }
    let mut diag = TeamDiagnostics::default();

    if k == 1 {
        // A single region's model is the color histogram itself.
        let theta = project_simplex(&moments.alpha);
        return Ok((ModelSet::new(vec![theta], vec![1.0])?, diag));
    }

    let wf = truncated_psd_eig(&moments.beta, k, opts.eps_rank)?;
    diag.eigvals = wf.eigvals.iter().copied().collect();
    if k > moments.gamma.len() {
        let msg = format!(
            "K = {k} exceeds the {} retained slices; the joint diagonalization may be underdetermined",
            moments.gamma.len()
        );
        warn!("{msg}");
        diag.warnings.push(msg);
    }
    let white = whiten_slices(&moments.gamma, &wf)?;
    let jd = joint_diagonalize(&white.slices, opts.jd_tol, opts.max_sweeps)?;
    diag.sweeps = jd.sweeps;
    diag.jd_residual = jd.residual;

    let mo = &wf.m * &jd.rotation;
    let mut theta: Vec<Vec<f64>> = Vec::with_capacity(k);
    for j in 0..k {
        let mut col: Vec<f64> = mo.column(j).iter().copied().collect();
        // Each column is +-sqrt(w_j) theta_j: fix the sign, then the scale.
        let sum: f64 = col.iter().sum();
        if sum < 0.0 {
            col.iter_mut().for_each(|x| *x = -*x);
        }
        let sum = sum.abs();
        if sum > 0.0 {
            col.iter_mut().for_each(|x| *x /= sum);
        }
        theta.push(project_simplex(&col));
    }

    let w_raw = least_squares_weights(&theta, &moments.alpha, opts.ridge, &mut diag);
    let w = project_simplex(&w_raw);

    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| w[b].total_cmp(&w[a]).then(a.cmp(&b)));
    let models = ModelSet::new(theta, w)?.permuted(&order);
    Ok((models, diag))
}

/// Solves `min_w || Theta w - alpha ||_2` through the normal equations.
fn least_squares_weights(
    theta: &[Vec<f64>],
    alpha: &[f64],
    ridge: f64,
    diag: &mut TeamDiagnostics,
) -> Vec<f64> {
    let k = theta.len();
    let l = alpha.len();
    let t = DMatrix::from_fn(l, k, |i, j| theta[j][i]);
    let mut gram = t.transpose() * &t;
    let rhs = t.transpose() * DVector::from_column_slice(alpha);
    let ev = SymmetricEigen::new(gram.clone()).eigenvalues;
    let (lo, hi) = ev
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), &e| (lo.min(e), hi.max(e)));
    if !(lo > 1e-12 * hi) {
        let msg = "estimated models are nearly collinear; damping the proportion solve".to_string();
        warn!("{msg}");
        diag.warnings.push(msg);
        for i in 0..k {
            gram[(i, i)] += ridge;
        }
    }
    match gram.clone().cholesky() {
        Some(ch) => ch.solve(&rhs).iter().copied().collect(),
        None => gram
            .lu()
            .solve(&rhs)
            .map(|s| s.iter().copied().collect())
            .unwrap_or_else(|| vec![1.0 / k as f64; k]),
    }
}

//! Scaled unscented transform on the state manifold.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifold::{symmetrize, symmetrize_dyn, Belief, Mat15, NavState, Vec15, DIM};

/// Scaled unscented transform parameters.
///
/// `kappa = None` selects `3 - n`, matching the fourth moment of a Gaussian
/// along each principal axis.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UtParams {
    pub alpha: f64,
    pub beta: f64,
    pub kappa: Option<f64>,
}

impl UtParams {
    /// alpha = 1e-3, kappa = 0, beta = 2.
    pub const SCALED: UtParams = UtParams { alpha: 1e-3, beta: 2.0, kappa: Some(0.0) };
    /// alpha = 1, kappa = 3 - n, beta = 2.
    pub const MOMENT_MATCHED: UtParams = UtParams { alpha: 1.0, beta: 2.0, kappa: None };

    pub fn weights(&self, n: usize) -> Result<Weights> {
        let nf = n as f64;
        let kappa = self.kappa.unwrap_or(3.0 - nf);
        let lambda = self.alpha * self.alpha * (nf + kappa) - nf;
        let spread = nf + lambda;
        if !(spread > 0.0) || !spread.is_finite() {
            return Err(Error::InvalidInput(format!("unscented spread n + lambda = {spread}")));
        }
        let mean0 = lambda / spread;
        Ok(Weights {
            scale: spread.sqrt(),
            mean0,
            cov0: mean0 + 1.0 - self.alpha * self.alpha + self.beta,
            wi: 0.5 / spread,
        })
    }
}

impl Default for UtParams {
    fn default() -> Self {
        UtParams::MOMENT_MATCHED
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Weights {
    /// sqrt(n + lambda)
    pub scale: f64,
    pub mean0: f64,
    pub cov0: f64,
    pub wi: f64,
}

/// Lower Cholesky factor with a single jitter retry of `1e-12 * tr(P) / n`.
pub fn sqrt_factor(p: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = p.nrows();
    let p = symmetrize_dyn(p);
    if let Some(c) = p.clone().cholesky() {
        return Ok(c.l());
    }
    let tr = p.trace();
    if tr == 0.0 && p.iter().all(|v| *v == 0.0) {
        return Ok(DMatrix::zeros(n, n));
    }
    let jitter = 1e-12 * tr.abs() / n as f64;
    let pj = &p + DMatrix::identity(n, n) * jitter;
    pj.cholesky()
        .map(|c| c.l())
        .ok_or_else(|| Error::DegenerateCovariance(format!("cholesky failed after jitter {jitter:e}")))
}

pub fn sqrt_factor15(p: &Mat15) -> Result<Mat15> {
    if let Some(c) = symmetrize(p).cholesky() {
        return Ok(c.l());
    }
    let l = sqrt_factor(&DMatrix::from_column_slice(DIM, DIM, p.as_slice()))?;
    Ok(Mat15::from_column_slice(l.as_slice()))
}

/// Symmetric sigma offsets in tangent coordinates, centre first.
pub struct SigmaSet {
    pub offsets: Vec<Vec15>,
    pub w: Weights,
}

impl SigmaSet {
    pub fn new(cov: &Mat15, params: &UtParams) -> Result<Self> {
        let w = params.weights(DIM)?;
        let l = sqrt_factor15(cov)?;
        let mut offsets = Vec::with_capacity(2 * DIM + 1);
        offsets.push(Vec15::zeros());
        for i in 0..DIM {
            offsets.push(l.column(i) * w.scale);
        }
        for i in 0..DIM {
            offsets.push(-l.column(i) * w.scale);
        }
        Ok(Self { offsets, w })
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }

    pub fn wm(&self, i: usize) -> f64 {
        if i == 0 { self.w.mean0 } else { self.w.wi }
    }

    pub fn wc(&self, i: usize) -> f64 {
        if i == 0 { self.w.cov0 } else { self.w.wi }
    }

    pub fn points(&self, mean: &NavState) -> Vec<NavState> {
        self.offsets.iter().map(|d| mean.oplus(d)).collect()
    }
}

/// Weighted output mean, state/output cross-covariance and output covariance.
pub struct Moments {
    pub mean: DVector<f64>,
    pub pxy: DMatrix<f64>,
    pub pyy: DMatrix<f64>,
    pub pxx: Mat15,
}

/// Push a belief through `f`. The state deviations `x_i ⊖ x_0` are the sigma
/// offsets themselves, which avoids angle wrapping for wide attitude priors.
pub fn moments<F>(belief: &Belief, params: &UtParams, f: F) -> Result<Moments>
where
    F: Fn(&NavState) -> DVector<f64>,
{
    let set = SigmaSet::new(&belief.cov, params)?;
    let ys: Vec<DVector<f64>> = set.points(&belief.mean).iter().map(&f).collect();
    let m = ys[0].len();
    let mut mean = DVector::zeros(m);
    for (i, y) in ys.iter().enumerate() {
        mean.axpy(set.wm(i), y, 1.0);
    }
    let mut pxy = DMatrix::zeros(DIM, m);
    let mut pyy = DMatrix::zeros(m, m);
    let mut pxx = Mat15::zeros();
    for (i, y) in ys.iter().enumerate() {
        let dy = y - &mean;
        let wc = set.wc(i);
        let dx = DVector::from_column_slice(set.offsets[i].as_slice());
        pxy += (&dx * dy.transpose()) * wc;
        pyy += (&dy * dy.transpose()) * wc;
        pxx += set.offsets[i] * set.offsets[i].transpose() * wc;
    }
    Ok(Moments { mean, pxy, pyy: symmetrize_dyn(&pyy), pxx: symmetrize(&pxx) })
}

/// A prepared unscented measurement update; inspect `nis` before applying.
pub struct PendingUpdate {
    pub innovation: DVector<f64>,
    pub s: DMatrix<f64>,
    pub nis: f64,
    gain: DMatrix<f64>,
}

pub fn prepare_update<F>(
    belief: &Belief,
    params: &UtParams,
    f: F,
    z: &DVector<f64>,
    r: &DMatrix<f64>,
) -> Result<PendingUpdate>
where
    F: Fn(&NavState) -> DVector<f64>,
{
    let mo = moments(belief, params, f)?;
    let s = symmetrize_dyn(&(mo.pyy + r));
    let chol = s
        .clone()
        .cholesky()
        .ok_or_else(|| Error::DegenerateCovariance("innovation covariance".into()))?;
    let innovation = z - &mo.mean;
    let nis = innovation.dot(&chol.solve(&innovation));
    let gain = chol.solve(&mo.pxy.transpose()).transpose();
    Ok(PendingUpdate { innovation, s, nis, gain })
}

impl PendingUpdate {
    pub fn apply(&self, belief: &Belief) -> Belief {
        let dx = &self.gain * &self.innovation;
        let dp = &self.gain * &self.s * self.gain.transpose();
        let dx = Vec15::from_column_slice(dx.as_slice());
        let dp = Mat15::from_column_slice(dp.as_slice());
        Belief::new(belief.mean.oplus(&dx), belief.cov - dp)
    }
}

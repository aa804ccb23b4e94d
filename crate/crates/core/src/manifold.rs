//! Composite state manifold R3 x R3 x SO(3) x R3 x R3.
//!
//! Tangent coordinates are ordered `[dr, dv, dtheta, dba, dbg]`, with the
//! attitude block expressed as 3-1-2 Euler angles `[roll, pitch, yaw]`.
//! The attitude increment is applied on the right: `R * exp_map(dtheta)`.

use nalgebra::{Matrix3, SMatrix, SVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DIM: usize = 15;
pub type Vec15 = SVector<f64, DIM>;
pub type Mat15 = SMatrix<f64, DIM, DIM>;

pub const POS: usize = 0;
pub const VEL: usize = 3;
pub const ATT: usize = 6;
pub const BA: usize = 9;
pub const BG: usize = 12;

const GIMBAL_GUARD: f64 = 1.0 - 1e-9;

/// Closed-form 3-1-2 Euler map, `theta = [phi, theta, psi]`.
pub fn exp_map(t: &Vector3<f64>) -> Matrix3<f64> {
    let (sf, cf) = t[0].sin_cos();
    let (st, ct) = t[1].sin_cos();
    let (sp, cp) = t[2].sin_cos();
    Matrix3::new(
        cp * ct - sf * sp * st,
        ct * sp + cp * sf * st,
        -cf * st,
        -cf * sp,
        cf * cp,
        sf,
        cp * st + ct * sf * sp,
        sp * st - cp * ct * sf,
        cf * ct,
    )
}

/// Inverse of [`exp_map`]; errors at the gimbal condition `|R23| >= 1 - 1e-9`.
pub fn log_map(r: &Matrix3<f64>) -> Result<Vector3<f64>> {
    let r23 = r[(1, 2)];
    if !r23.is_finite() || r23.abs() >= GIMBAL_GUARD {
        return Err(Error::Singularity(r23.abs()));
    }
    Ok(Vector3::new(
        r23.asin(),
        (-r[(0, 2)]).atan2(r[(2, 2)]),
        (-r[(1, 0)]).atan2(r[(1, 1)]),
    ))
}

/// Cross-product matrix: `skew(a) * b == a.cross(&b)`.
pub fn skew(a: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -a[2], a[1], a[2], 0.0, -a[0], -a[1], a[0], 0.0)
}

/// Rotation-vector exponential (Rodrigues), used for body-rate integration.
pub fn rotvec_exp(w: &Vector3<f64>) -> Matrix3<f64> {
    let th = w.norm();
    let k = skew(w);
    if th < 1e-8 {
        return Matrix3::identity() + k + 0.5 * k * k;
    }
    Matrix3::identity() + (th.sin() / th) * k + ((1.0 - th.cos()) / (th * th)) * k * k
}

/// Nearest rotation by polar decomposition.
pub fn orthonormalize(r: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = r.svd(true, true);
    let u = svd.u.unwrap();
    let vt = svd.v_t.unwrap();
    let mut out = u * vt;
    if out.determinant() < 0.0 {
        let mut u2 = u;
        u2.column_mut(2).neg_mut();
        out = u2 * vt;
    }
    out
}

pub fn orthonormality_error(r: &Matrix3<f64>) -> f64 {
    (r.transpose() * r - Matrix3::identity()).norm()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NavState {
    /// IMU origin in the world frame (m).
    pub pos: Vector3<f64>,
    pub vel: Vector3<f64>,
    /// Body-to-world rotation.
    pub att: Matrix3<f64>,
    pub accel_bias: Vector3<f64>,
    pub gyro_bias: Vector3<f64>,
}

impl Default for NavState {
    fn default() -> Self {
        Self {
            pos: Vector3::zeros(),
            vel: Vector3::zeros(),
            att: Matrix3::identity(),
            accel_bias: Vector3::zeros(),
            gyro_bias: Vector3::zeros(),
        }
    }
}

impl NavState {
    pub fn is_valid(&self) -> bool {
        let finite = self.pos.iter().chain(self.vel.iter()).chain(self.att.iter())
            .chain(self.accel_bias.iter()).chain(self.gyro_bias.iter())
            .all(|v| v.is_finite());
        finite && orthonormality_error(&self.att) < 1e-9 && self.att.determinant() > 0.0
    }

    pub fn oplus(&self, d: &Vec15) -> NavState {
        let blk = |i: usize| Vector3::new(d[i], d[i + 1], d[i + 2]);
        NavState {
            pos: self.pos + blk(POS),
            vel: self.vel + blk(VEL),
            att: self.att * exp_map(&blk(ATT)),
            accel_bias: self.accel_bias + blk(BA),
            gyro_bias: self.gyro_bias + blk(BG),
        }
    }

    /// `self ⊖ other`, the increment taking `other` to `self`.
    pub fn ominus(&self, other: &NavState) -> Result<Vec15> {
        let mut d = Vec15::zeros();
        d.fixed_rows_mut::<3>(POS).copy_from(&(self.pos - other.pos));
        d.fixed_rows_mut::<3>(VEL).copy_from(&(self.vel - other.vel));
        d.fixed_rows_mut::<3>(ATT)
            .copy_from(&log_map(&(other.att.transpose() * self.att))?);
        d.fixed_rows_mut::<3>(BA).copy_from(&(self.accel_bias - other.accel_bias));
        d.fixed_rows_mut::<3>(BG).copy_from(&(self.gyro_bias - other.gyro_bias));
        Ok(d)
    }
}

/// Gaussian belief over the tangent space at `mean`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Belief {
    pub mean: NavState,
    pub cov: Mat15,
}

impl Belief {
    pub fn new(mean: NavState, cov: Mat15) -> Self {
        Self { mean, cov: symmetrize(&cov) }
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.cov.symmetric_eigenvalues().min()
    }
}

pub fn symmetrize<const N: usize>(p: &SMatrix<f64, N, N>) -> SMatrix<f64, N, N> {
    (p + p.transpose()) * 0.5
}

pub fn symmetrize_dyn(p: &nalgebra::DMatrix<f64>) -> nalgebra::DMatrix<f64> {
    (p + p.transpose()) * 0.5
}

//! Strapdown inertial model and the unscented time update.
//!
//! Sensor model, with `R_ub` the body-to-IMU rotation:
//!
//! ```text
//! f  = R_ub R_bw (a_w - g_w) + b_a + v_a
//! w~ = w_u + R_ub R_bw w_earth + b_g + v_g
//! ```
//!
//! Biases are first-order Gauss-Markov (OU) processes.

use nalgebra::{Matrix3, SMatrix, SVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifold::{
    orthonormality_error, orthonormalize, rotvec_exp, symmetrize, Belief, Mat15, NavState, Vec15, ATT, BA, BG, DIM, POS,
    VEL,
};
use crate::ut::{sqrt_factor15, UtParams};

pub const STANDARD_GRAVITY: f64 = 9.80665;
pub const EARTH_RATE: f64 = 7.292_115e-5;
/// Dimension of the process-noise vector `[v_a, v_g, v_a2, v_g2]`.
pub const NOISE_DIM: usize = 12;
pub type Vec12 = SVector<f64, NOISE_DIM>;
pub type Mat15x12 = SMatrix<f64, DIM, NOISE_DIM>;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImuSample {
    pub t: f64,
    /// Specific force in the IMU frame (m/s^2).
    pub accel: Vector3<f64>,
    /// Angular rate in the IMU frame (rad/s).
    pub gyro: Vector3<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ImuGrade {
    Industrial,
    Consumer,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OuDiscretization {
    /// `sigma_b^2 (1 - exp(-2 dt / tau))`, stationary at `sigma_b^2`.
    Exact,
    /// `sigma_b^2 (1 - exp(-dt / tau))`, stationary near `sigma_b^2 / 2`.
    SingleExponent,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImuParams {
    /// Accelerometer white-noise density (m/s^2/sqrt(Hz)).
    pub accel_noise_density: f64,
    /// Gyro white-noise density (rad/s/sqrt(Hz)).
    pub gyro_noise_density: f64,
    pub accel_bias_std: f64,
    pub gyro_bias_std: f64,
    pub accel_bias_tau: f64,
    pub gyro_bias_tau: f64,
    /// Sample period (s).
    pub dt: f64,
    pub body_to_imu: Matrix3<f64>,
    pub gravity: Vector3<f64>,
    /// Earth rate in the world frame (rad/s).
    pub earth_rate: Vector3<f64>,
    pub ou: OuDiscretization,
}

const MICRO_G: f64 = 1e-6 * STANDARD_GRAVITY;
const DEG: f64 = std::f64::consts::PI / 180.0;

impl ImuParams {
    pub fn grade(grade: ImuGrade) -> Self {
        let (na, ba, ng, bg) = match grade {
            ImuGrade::Industrial => (100.0, 0.5, 0.01, 8.0),
            ImuGrade::Consumer => (300.0, 10.0, 0.05, 30.0),
        };
        Self {
            accel_noise_density: na * MICRO_G,
            gyro_noise_density: ng * DEG,
            accel_bias_std: ba * 1e3 * MICRO_G,
            gyro_bias_std: bg * DEG / 3600.0,
            accel_bias_tau: 100.0,
            gyro_bias_tau: 100.0,
            dt: 1.0 / 200.0,
            body_to_imu: Matrix3::identity(),
            gravity: Vector3::new(0.0, 0.0, -STANDARD_GRAVITY),
            earth_rate: earth_rate_enu(30.29 * DEG),
            ou: OuDiscretization::Exact,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.accel_bias_tau > 0.0
            && self.gyro_bias_tau > 0.0
            && self.dt > 0.0
            && self.accel_noise_density >= 0.0
            && self.gyro_noise_density >= 0.0
            && self.accel_bias_std >= 0.0
            && self.gyro_bias_std >= 0.0
            && orthonormality_error(&self.body_to_imu) < 1e-9;
        if ok {
            Ok(())
        } else {
            Err(Error::Config("IMU parameters out of range".into()))
        }
    }

    /// Zero-mean IMU output for a vehicle at rest with attitude `att`.
    pub fn stationary_sample(&self, att: &Matrix3<f64>, t: f64) -> ImuSample {
        let rbw = att.transpose();
        ImuSample { t, accel: -self.body_to_imu * rbw * self.gravity, gyro: self.body_to_imu * rbw * self.earth_rate }
    }
}

impl Default for ImuParams {
    fn default() -> Self {
        Self::grade(ImuGrade::Industrial)
    }
}

/// Earth rate in a local east-north-up frame at `lat` (rad).
pub fn earth_rate_enu(lat: f64) -> Vector3<f64> {
    Vector3::new(0.0, EARTH_RATE * lat.cos(), EARTH_RATE * lat.sin())
}

/// Diagonal of the discrete process-noise covariance `Q`.
#[derive(Clone, Debug, PartialEq)]
pub struct ProcessNoise {
    pub diag: Vec12,
}

impl ProcessNoise {
    pub fn matrix(&self) -> SMatrix<f64, NOISE_DIM, NOISE_DIM> {
        SMatrix::from_diagonal(&self.diag)
    }

    pub fn std(&self) -> Vec12 {
        self.diag.map(f64::sqrt)
    }
}

fn ou_variance(sigma: f64, tau: f64, dt: f64, form: OuDiscretization) -> f64 {
    let k = match form {
        OuDiscretization::Exact => 2.0,
        OuDiscretization::SingleExponent => 1.0,
    };
    sigma * sigma * -(-k * dt / tau).exp_m1()
}

pub fn process_noise(p: &ImuParams) -> ProcessNoise {
    process_noise_for(p, p.dt)
}

/// Process noise for a step of length `dt`.
pub fn process_noise_for(p: &ImuParams, dt: f64) -> ProcessNoise {
    let sa = p.accel_noise_density / dt.sqrt();
    let sg = p.gyro_noise_density / dt.sqrt();
    let va2 = ou_variance(p.accel_bias_std, p.accel_bias_tau, dt, p.ou);
    let vg2 = ou_variance(p.gyro_bias_std, p.gyro_bias_tau, dt, p.ou);
    let mut diag = Vec12::zeros();
    for i in 0..3 {
        diag[i] = sa * sa;
        diag[3 + i] = sg * sg;
        diag[6 + i] = va2;
        diag[9 + i] = vg2;
    }
    ProcessNoise { diag }
}

/// Body-frame angular rate implied by a gyro sample, with bias, earth rate
/// and gyro noise `vg` removed.
pub fn body_rate(x: &NavState, u: &ImuSample, vg: &Vector3<f64>, p: &ImuParams) -> Vector3<f64> {
    let rub = &p.body_to_imu;
    let w_u = u.gyro - rub * x.att.transpose() * p.earth_rate - x.gyro_bias - vg;
    rub.transpose() * w_u
}

/// One zero-order-hold step of the discretized dynamics.
pub fn dynamics(x: &NavState, u: &ImuSample, v: &Vec12, p: &ImuParams, dt: f64) -> NavState {
    let blk = |i: usize| Vector3::new(v[i], v[i + 1], v[i + 2]);
    let f_b = p.body_to_imu.transpose() * (u.accel - x.accel_bias - blk(0));
    let a_w = x.att * f_b + p.gravity;
    let w_b = body_rate(x, u, &blk(3), p);
    let mut att = x.att * rotvec_exp(&(w_b * dt));
    if orthonormality_error(&att) > 1e-9 {
        att = orthonormalize(&att);
    }
    let da = (-dt / p.accel_bias_tau).exp();
    let dg = (-dt / p.gyro_bias_tau).exp();
    NavState {
        pos: x.pos + x.vel * dt + 0.5 * a_w * dt * dt,
        vel: x.vel + a_w * dt,
        att,
        accel_bias: x.accel_bias * da + blk(6),
        gyro_bias: x.gyro_bias * dg + blk(9),
    }
}

/// Unscented time update over the augmented `(state, noise)` space.
///
/// Deviations are taken about the propagated centre point, so the attitude
/// block never wraps.
pub fn ukf_propagate(post: &Belief, u: &ImuSample, p: &ImuParams, dt: f64, ut: &UtParams) -> Result<Belief> {
    let n = DIM + NOISE_DIM;
    let w = ut.weights(n)?;
    let l = sqrt_factor15(&post.cov)?;
    let q = process_noise_for(p, dt).std();
    let zero = Vec12::zeros();
    let centre = dynamics(&post.mean, u, &zero, p, dt);

    let mut devs: Vec<Vec15> = Vec::with_capacity(2 * n);
    for sign in [1.0, -1.0] {
        for i in 0..DIM {
            let d: Vec15 = l.column(i) * (sign * w.scale);
            devs.push(dynamics(&post.mean.oplus(&d), u, &zero, p, dt).ominus(&centre)?);
        }
        for i in 0..NOISE_DIM {
            if q[i] == 0.0 {
                devs.push(Vec15::zeros());
                continue;
            }
            let mut v = Vec12::zeros();
            v[i] = sign * w.scale * q[i];
            devs.push(dynamics(&post.mean, u, &v, p, dt).ominus(&centre)?);
        }
    }
    let mut mean_dev = Vec15::zeros();
    for d in &devs {
        mean_dev += d * w.wi;
    }
    // the centre deviation is zero, so its mean weight drops out
    let mut cov = (mean_dev * mean_dev.transpose()) * w.cov0;
    for d in &devs {
        let e = d - mean_dev;
        cov += (e * e.transpose()) * w.wi;
    }
    Ok(Belief::new(centre.oplus(&mean_dev), symmetrize(&cov)))
}

/// Central-difference transition and noise Jacobians of [`dynamics`] about
/// `x` and zero noise. Used as an EKF reference.
pub fn numerical_jacobians(x: &NavState, u: &ImuSample, p: &ImuParams, dt: f64) -> Result<(Mat15, Mat15x12)> {
    let h = 1e-6;
    let zero = Vec12::zeros();
    let mut f = Mat15::zeros();
    for i in 0..DIM {
        let mut d = Vec15::zeros();
        d[i] = h;
        let plus = dynamics(&x.oplus(&d), u, &zero, p, dt);
        let minus = dynamics(&x.oplus(&-d), u, &zero, p, dt);
        f.set_column(i, &(plus.ominus(&minus)? / (2.0 * h)));
    }
    let mut g = Mat15x12::zeros();
    for i in 0..NOISE_DIM {
        let mut v = Vec12::zeros();
        v[i] = h;
        let plus = dynamics(x, u, &v, p, dt);
        let minus = dynamics(x, u, &-v, p, dt);
        g.set_column(i, &(plus.ominus(&minus)? / (2.0 * h)));
    }
    Ok((f, g))
}

/// EKF covariance step `F P F^T + G Q G^T`.
pub fn ekf_covariance(x: &NavState, cov: &Mat15, u: &ImuSample, p: &ImuParams, dt: f64) -> Result<Mat15> {
    let (f, g) = numerical_jacobians(x, u, p, dt)?;
    let q = process_noise_for(p, dt).matrix();
    Ok(symmetrize(&(f * cov * f.transpose() + g * q * g.transpose())))
}

/// Initial covariance with independent blocks (standard deviations).
pub fn diagonal_cov(pos: f64, vel: f64, att: Vector3<f64>, ba: f64, bg: f64) -> Mat15 {
    let mut c = Mat15::zeros();
    for i in 0..3 {
        c[(POS + i, POS + i)] = pos * pos;
        c[(VEL + i, VEL + i)] = vel * vel;
        c[(ATT + i, ATT + i)] = att[i] * att[i];
        c[(BA + i, BA + i)] = ba * ba;
        c[(BG + i, BG + i)] = bg * bg;
    }
    c
}

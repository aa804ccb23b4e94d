//! Vehicle dynamics constraints: non-holonomic pseudo-measurements and
//! gated zero-velocity updates.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrity::chi2_quantile;
use crate::manifold::{Belief, NavState};
use crate::ut::{prepare_update, UtParams};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VdcParams {
    /// Sideslip polynomial `v_y = p0 w_z + p1 w_z^2`.
    pub p0: f64,
    pub p1: f64,
    pub nhc_std_y: f64,
    pub nhc_std_z: f64,
    /// ZUPT standard deviations along vehicle x, y, z (m/s).
    pub zupt_std: Vector3<f64>,
    pub zupt_accel_threshold: f64,
    pub zupt_gyro_threshold: f64,
    pub zupt_window: usize,
    pub zupt_p_f: f64,
    /// Vehicle-frame origin in the body frame (m).
    pub vehicle_origin: Vector3<f64>,
    pub body_to_vehicle: Matrix3<f64>,
}

impl Default for VdcParams {
    fn default() -> Self {
        Self {
            p0: 0.0,
            p1: 0.0,
            nhc_std_y: 0.1,
            nhc_std_z: 0.2,
            zupt_std: Vector3::new(0.05, 0.01, 0.01),
            zupt_accel_threshold: 0.8,
            zupt_gyro_threshold: 0.006,
            zupt_window: 10,
            zupt_p_f: 1e-30,
            vehicle_origin: Vector3::new(-1.0, 0.0, 0.0),
            body_to_vehicle: Matrix3::identity(),
        }
    }
}

impl VdcParams {
    /// Consumer-grade ZUPT detection settings.
    pub fn consumer() -> Self {
        Self { zupt_gyro_threshold: 0.018, zupt_window: 30, zupt_p_f: 1e-6, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.nhc_std_y > 0.0
            && self.nhc_std_z > 0.0
            && self.zupt_std.iter().all(|s| *s > 0.0)
            && self.zupt_window >= 1
            && self.zupt_p_f > 0.0
            && self.zupt_p_f < 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config("vehicle constraint parameters out of range".into()))
        }
    }

    /// Expected sideslip for yaw rate `w_z`.
    pub fn sideslip(&self, w_z: f64) -> f64 {
        self.p0 * w_z + self.p1 * w_z * w_z
    }
}

/// Velocity of the vehicle-frame origin in the vehicle frame.
pub fn vehicle_velocity(x: &NavState, w_b: &Vector3<f64>, p: &VdcParams, imu_origin: &Vector3<f64>) -> Vector3<f64> {
    p.body_to_vehicle * (x.att.transpose() * x.vel + w_b.cross(&(p.vehicle_origin - imu_origin)))
}

pub fn nhc_predict(x: &NavState, w_b: &Vector3<f64>, p: &VdcParams, imu_origin: &Vector3<f64>) -> [f64; 2] {
    let v = vehicle_velocity(x, w_b, p, imu_origin);
    [v[1], v[2]]
}

pub fn nhc_update(
    belief: &Belief,
    w_b: &Vector3<f64>,
    p: &VdcParams,
    imu_origin: &Vector3<f64>,
    ut: &UtParams,
) -> Result<Belief> {
    let w_z = (p.body_to_vehicle * w_b)[2];
    let z = DVector::from_vec(vec![p.sideslip(w_z), 0.0]);
    let r = DMatrix::from_diagonal(&DVector::from_vec(vec![p.nhc_std_y.powi(2), p.nhc_std_z.powi(2)]));
    let up = prepare_update(belief, ut, |x| DVector::from_row_slice(&nhc_predict(x, w_b, p, imu_origin)), &z, &r)?;
    Ok(up.apply(belief))
}

/// Sliding record of which recent IMU sample differences were quiet.
#[derive(Clone, Debug, Default)]
pub struct StationarityState {
    flags: VecDeque<bool>,
    last: Option<(Vector3<f64>, Vector3<f64>)>,
}

impl StationarityState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.flags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flags.is_empty()
    }

    /// Stationary iff the last `zupt_window` differences all passed.
    pub fn stationary(&self, p: &VdcParams) -> bool {
        self.flags.len() >= p.zupt_window && self.flags.iter().all(|&f| f)
    }

    /// Feed raw successive IMU outputs; differences are formed internally.
    pub fn observe(&mut self, accel: &Vector3<f64>, gyro: &Vector3<f64>, p: &VdcParams) -> bool {
        let out = match self.last {
            Some((fa, fg)) => zupt_detect(self, &(accel - fa), &(gyro - fg), p),
            None => false,
        };
        self.last = Some((*accel, *gyro));
        out
    }
}

/// Push one pair of sample differences and report stationarity.
pub fn zupt_detect(s: &mut StationarityState, df: &Vector3<f64>, dw: &Vector3<f64>, p: &VdcParams) -> bool {
    let quiet = df.norm() < p.zupt_accel_threshold && dw.norm() < p.zupt_gyro_threshold;
    s.flags.push_back(quiet);
    while s.flags.len() > p.zupt_window.max(1) {
        s.flags.pop_front();
    }
    s.stationary(p)
}

#[derive(Clone, Debug)]
pub struct ZuptOutcome {
    pub belief: Belief,
    pub applied: bool,
    pub nis: f64,
    pub threshold: f64,
}

/// Zero-velocity update, skipped when the innovation NIS fails the
/// `chi2(3)` gate at `1 - zupt_p_f`.
pub fn zupt_update(
    belief: &Belief,
    w_b: &Vector3<f64>,
    p: &VdcParams,
    imu_origin: &Vector3<f64>,
    ut: &UtParams,
) -> Result<ZuptOutcome> {
    let z = DVector::zeros(3);
    let r = DMatrix::from_diagonal(&DVector::from_iterator(3, p.zupt_std.iter().map(|s| s * s)));
    let up = prepare_update(
        belief,
        ut,
        |x| DVector::from_column_slice(vehicle_velocity(x, w_b, p, imu_origin).as_slice()),
        &z,
        &r,
    )?;
    let threshold = chi2_quantile(3.0, p.zupt_p_f)?;
    if up.nis > threshold {
        return Ok(ZuptOutcome { belief: belief.clone(), applied: false, nis: up.nis, threshold });
    }
    Ok(ZuptOutcome { belief: up.apply(belief), applied: true, nis: up.nis, threshold })
}

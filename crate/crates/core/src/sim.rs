//! Seeded synthesis of truth trajectories, IMU streams and DD observables.
//!
//! Every random draw comes from a ChaCha substream keyed by `(seed, role)`,
//! so a scenario reproduces bit for bit regardless of how it is consumed.

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::ambiguity::substream;
use crate::cdgnss::{
    baseline_function, dd_noise_covariance, dd_predict, geometry_matrix, AntennaGeometry, BaselineChannels, Channel,
    DdEpoch, NoiseModelParams, Satellite, SatelliteSet, GPS_L1_WAVELENGTH,
};
use crate::error::{Error, Result};
use crate::ins::{ImuGrade, ImuParams, ImuSample};
use crate::manifold::{log_map, rotvec_exp, NavState};
use crate::ut::sqrt_factor;
use crate::vdc::VdcParams;

const DEG: f64 = PI / 180.0;

/// Substream roles.
const IMU_STREAM: u64 = 1;
const GNSS_STREAM: u64 = 2;
const INT_STREAM: u64 = 3;
pub const INIT_STREAM: u64 = 4;

/// One piece of a piecewise-constant drive profile.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Segment {
    pub duration: f64,
    /// Longitudinal acceleration of the vehicle origin (m/s^2).
    #[serde(default)]
    pub accel: f64,
    #[serde(default)]
    pub yaw_rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Motion {
    Static,
    /// Constant speed on a circle.
    Circle { radius: f64, speed: f64 },
    /// Stop-and-go city blocks with alternating 90 degree turns.
    Urban,
    Segments { segments: Vec<Segment> },
}

impl Motion {
    pub fn segments(&self, duration: f64) -> (f64, Vec<Segment>) {
        match self {
            Motion::Static => (0.0, vec![Segment { duration, accel: 0.0, yaw_rate: 0.0 }]),
            Motion::Circle { radius, speed } => {
                (*speed, vec![Segment { duration, accel: 0.0, yaw_rate: speed / radius }])
            }
            Motion::Urban => (0.0, urban_blocks(duration)),
            Motion::Segments { segments } => (0.0, segments.clone()),
        }
    }
}

fn urban_blocks(duration: f64) -> Vec<Segment> {
    let seg = |d, a, w| Segment { duration: d, accel: a, yaw_rate: w };
    let mut out = Vec::new();
    let mut total = 0.0;
    let mut left = true;
    while total < duration {
        let w = if left { FRAC_PI_2 / 6.0 } else { -FRAC_PI_2 / 6.0 };
        let block = [
            seg(5.0, 0.0, 0.0),
            seg(5.0, 2.0, 0.0),
            seg(15.0, 0.0, 0.0),
            seg(4.0, -1.25, 0.0),
            seg(6.0, 0.0, w),
            seg(4.0, 1.25, 0.0),
            seg(10.0, 0.0, 0.0),
            seg(5.0, -2.0, 0.0),
        ];
        total += block.iter().map(|s| s.duration).sum::<f64>();
        out.extend(block);
        left = !left;
    }
    out
}

/// Static sky: azimuths evenly spaced, elevations from a fixed list.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Constellation {
    /// Elevations (deg); satellite `i` sits at azimuth `360 i / n`.
    pub elevations_deg: Vec<f64>,
    pub elevation_mask_deg: f64,
}

impl Default for Constellation {
    fn default() -> Self {
        Self { elevations_deg: vec![75.0, 30.0, 55.0, 20.0, 65.0, 40.0, 50.0, 15.0], elevation_mask_deg: 15.0 }
    }
}

impl Constellation {
    /// Ten satellites for the outlier study.
    pub fn ten() -> Self {
        Self {
            elevations_deg: vec![75.0, 30.0, 55.0, 20.0, 65.0, 40.0, 50.0, 15.0, 35.0, 60.0],
            ..Self::default()
        }
    }

    pub fn satellites(&self) -> Vec<Satellite> {
        let n = self.elevations_deg.len();
        self.elevations_deg
            .iter()
            .enumerate()
            .filter(|(_, &e)| e >= self.elevation_mask_deg)
            .map(|(i, &e)| Satellite::from_az_el(i as u32 + 1, 2.0 * PI * i as f64 / n as f64, e * DEG))
            .collect()
    }

    /// Highest satellite as pivot, the rest as L1 channels on both baselines.
    pub fn satellite_set(&self) -> Result<SatelliteSet> {
        let mut sats = self.satellites();
        if sats.len() < 2 {
            return Err(Error::Config("fewer than two satellites above the mask".into()));
        }
        sats.sort_by(|a, b| b.elev.total_cmp(&a.elev).then(a.id.cmp(&b.id)));
        let pivot = sats.remove(0);
        sats.sort_by_key(|s| s.id);
        let channels: Vec<Channel> =
            sats.into_iter().map(|sat| Channel { sat, wavelength: GPS_L1_WAVELENGTH }).collect();
        let b = BaselineChannels { pivot, channels };
        Ok(SatelliteSet { baselines: [b.clone(), b] })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Fault {
    /// Added to the DD pseudoranges of one satellite on both baselines (m).
    PseudorangeBias { sat: u32, bias: f64, start: f64, end: f64 },
    /// Added to the DD carrier phases of one satellite on both baselines (m).
    PhaseBias { sat: u32, bias: f64, start: f64, end: f64 },
    /// Phase on baseline `baseline` (0 or 1) shifted by `G * shift`, as if
    /// that antenna sat elsewhere; ramps in linearly over `ramp` seconds.
    PhaseShift { baseline: usize, shift: Vector3<f64>, start: f64, end: f64, ramp: f64 },
    /// No GNSS data.
    Outage { start: f64, end: f64 },
}

impl Fault {
    fn window(&self) -> (f64, f64) {
        match *self {
            Fault::PseudorangeBias { start, end, .. }
            | Fault::PhaseBias { start, end, .. }
            | Fault::PhaseShift { start, end, .. }
            | Fault::Outage { start, end } => (start, end),
        }
    }

    pub fn active(&self, t: f64) -> bool {
        let (s, e) = self.window();
        t >= s && t < e
    }
}

/// Standard deviations of the initial estimation error.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitialError {
    pub position: f64,
    pub velocity: f64,
    /// Roll, pitch, yaw (deg).
    pub attitude_deg: Vector3<f64>,
}

impl Default for InitialError {
    fn default() -> Self {
        Self { position: 0.02, velocity: 0.02, attitude_deg: Vector3::new(0.5, 0.5, 1.0) }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Scenario {
    pub name: String,
    pub seed: u64,
    pub duration: f64,
    pub imu_rate: f64,
    pub gnss_rate: f64,
    pub motion: Motion,
    pub initial_heading_deg: f64,
    pub constellation: Constellation,
    pub imu_grade: ImuGrade,
    /// Truth noise relative to the filter's noise model (GNSS only).
    pub gnss_noise_scale: f64,
    pub faults: Vec<Fault>,
    pub initial_error: InitialError,
    /// Spread of the per-epoch random true integers.
    pub integer_range: i64,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            name: "urban".into(),
            seed: 1,
            duration: 600.0,
            imu_rate: 200.0,
            gnss_rate: 5.0,
            motion: Motion::Urban,
            initial_heading_deg: 30.0,
            constellation: Constellation::default(),
            imu_grade: ImuGrade::Industrial,
            gnss_noise_scale: 1.0,
            faults: vec![],
            initial_error: InitialError::default(),
            integer_range: 50,
        }
    }
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        let ratio = self.imu_rate / self.gnss_rate;
        let ok = self.duration > 0.0
            && self.imu_rate > 0.0
            && self.gnss_rate > 0.0
            && (ratio - ratio.round()).abs() < 1e-9
            && ratio >= 1.0
            && self.gnss_noise_scale >= 0.0
            && self.integer_range >= 0;
        if !ok {
            return Err(Error::Config("scenario rates or durations invalid".into()));
        }
        for f in &self.faults {
            if let Fault::PhaseShift { baseline, .. } = f {
                if *baseline > 1 {
                    return Err(Error::Config("phase-shift baseline must be 0 or 1".into()));
                }
            }
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.imu_rate
    }

    pub fn imu_per_epoch(&self) -> usize {
        (self.imu_rate / self.gnss_rate).round() as usize
    }

    pub fn n_imu(&self) -> usize {
        (self.duration * self.imu_rate).round() as usize
    }
}

/// Truth sampled at the IMU rate, plus the body rate held over each step.
#[derive(Clone, Debug)]
pub struct Truth {
    pub t: Vec<f64>,
    pub states: Vec<NavState>,
}

/// Kinematically exact truth for a vehicle whose origin follows the drive
/// profile along its own x axis on a level road.
pub fn synth_truth(sc: &Scenario, vdc: &VdcParams, geom: &AntennaGeometry) -> Result<Truth> {
    sc.validate()?;
    let dt = sc.dt();
    let n = sc.n_imu();
    let (mut speed, segments) = sc.motion.segments(sc.duration);
    let mut heading = sc.initial_heading_deg * DEG;
    let mut p = Vector3::zeros();
    // IMU origin relative to the vehicle origin, body frame
    let lever = geom.imu - vdc.vehicle_origin;
    let rvb = vdc.body_to_vehicle;

    let mut seg_idx = 0;
    let mut seg_end = segments.first().map_or(f64::INFINITY, |s| s.duration);
    let mut t = 0.0;
    let mut out = Truth { t: Vec::with_capacity(n + 1), states: Vec::with_capacity(n + 1) };
    let state = |p: &Vector3<f64>, heading: f64, speed: f64, w: f64| {
        // vehicle frame yawed by heading; body = vehicle rotated by R_vb^T
        let rwv = rotvec_exp(&Vector3::new(0.0, 0.0, heading));
        let rwb = rwv * rvb;
        let wb = rvb.transpose() * Vector3::new(0.0, 0.0, w);
        let v_origin = rwv * Vector3::new(speed, 0.0, 0.0);
        NavState {
            pos: p + rwb * lever,
            vel: v_origin + rwb * wb.cross(&lever),
            att: rwb,
            ..Default::default()
        }
    };
    let sub = 8;
    for k in 0..=n {
        while t >= seg_end - 1e-12 && seg_idx + 1 < segments.len() {
            seg_idx += 1;
            seg_end += segments[seg_idx].duration;
        }
        let seg = if t < seg_end - 1e-12 { segments.get(seg_idx).copied() } else { None };
        let (a, w) = seg.map_or((0.0, 0.0), |s| (s.accel, s.yaw_rate));
        let a = if speed <= 0.0 && a < 0.0 { 0.0 } else { a };
        out.t.push(t);
        out.states.push(state(&p, heading, speed, w));
        if k == n {
            break;
        }
        // midpoint integration of the origin path
        let h = dt / sub as f64;
        for _ in 0..sub {
            let sm = (speed + 0.5 * a * h).max(0.0);
            let hm = heading + 0.5 * w * h;
            p += Vector3::new(hm.cos(), hm.sin(), 0.0) * sm * h;
            speed = (speed + a * h).max(0.0);
            heading += w * h;
        }
        t = (k + 1) as f64 * dt;
    }
    Ok(out)
}

fn normal3(rng: &mut ChaCha8Rng) -> Vector3<f64> {
    Vector3::new(rng.sample(StandardNormal), rng.sample(StandardNormal), rng.sample(StandardNormal))
}

/// Error-free IMU output that reproduces the truth step from `a` to `b`
/// under zero-order-hold integration.
pub fn ideal_imu(a: &NavState, b: &NavState, t: f64, dt: f64, p: &ImuParams) -> Result<ImuSample> {
    let rbw = a.att.transpose();
    let acc_w = (b.vel - a.vel) / dt;
    let w_b = rotation_rate(&a.att, &b.att, dt)?;
    Ok(ImuSample {
        t,
        accel: p.body_to_imu * rbw * (acc_w - p.gravity),
        gyro: p.body_to_imu * (w_b + rbw * p.earth_rate),
    })
}

fn rotation_rate(a: &Matrix3<f64>, b: &Matrix3<f64>, dt: f64) -> Result<Vector3<f64>> {
    let d = a.transpose() * b;
    let c = ((d.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
    let th = c.acos();
    let v = Vector3::new(d[(2, 1)] - d[(1, 2)], d[(0, 2)] - d[(2, 0)], d[(1, 0)] - d[(0, 1)]);
    if th < 1e-12 {
        return Ok(v * 0.5 / dt);
    }
    if th > PI - 1e-6 {
        return Err(Error::InvalidInput("rotation step too large".into()));
    }
    Ok(v * (th / (2.0 * th.sin())) / dt)
}

/// IMU stream with OU biases and white noise, sample `k` covering
/// `[t_k, t_k+1)`. Also returns the true bias histories.
pub fn synth_imu(truth: &Truth, p: &ImuParams, seed: u64) -> Result<(Vec<ImuSample>, Vec<(Vector3<f64>, Vector3<f64>)>)> {
    let mut rng = substream(seed, IMU_STREAM);
    let n = truth.states.len().saturating_sub(1);
    let sa = p.accel_noise_density / p.dt.sqrt();
    let sg = p.gyro_noise_density / p.dt.sqrt();
    let (fa, fg) = ((-p.dt / p.accel_bias_tau).exp(), (-p.dt / p.gyro_bias_tau).exp());
    let qa = p.accel_bias_std * (1.0 - fa * fa).sqrt();
    let qg = p.gyro_bias_std * (1.0 - fg * fg).sqrt();
    let mut ba = normal3(&mut rng) * p.accel_bias_std;
    let mut bg = normal3(&mut rng) * p.gyro_bias_std;
    let mut out = Vec::with_capacity(n);
    let mut biases = Vec::with_capacity(n);
    for k in 0..n {
        let dt = truth.t[k + 1] - truth.t[k];
        let mut u = ideal_imu(&truth.states[k], &truth.states[k + 1], truth.t[k], dt, p)?;
        u.accel += ba + normal3(&mut rng) * sa;
        u.gyro += bg + normal3(&mut rng) * sg;
        out.push(u);
        biases.push((ba, bg));
        ba = ba * fa + normal3(&mut rng) * qa;
        bg = bg * fg + normal3(&mut rng) * qg;
    }
    Ok((out, biases))
}

/// Truth with the simulated biases filled in.
pub fn attach_biases(truth: &mut Truth, biases: &[(Vector3<f64>, Vector3<f64>)]) {
    for (x, (ba, bg)) in truth.states.iter_mut().zip(biases) {
        x.accel_bias = *ba;
        x.gyro_bias = *bg;
    }
}

/// Draw `N(0, cov)` via its Cholesky factor.
pub fn correlated_noise(rng: &mut ChaCha8Rng, cov: &DMatrix<f64>) -> Result<DVector<f64>> {
    let l = sqrt_factor(cov)?;
    let w = DVector::from_iterator(cov.nrows(), (0..cov.nrows()).map(|_| rng.sample::<f64, _>(StandardNormal)));
    Ok(l * w)
}

/// Random true integers in `[-range, range]`.
pub fn draw_integers(rng: &mut ChaCha8Rng, n: usize, range: i64) -> DVector<f64> {
    DVector::from_iterator(n, (0..n).map(|_| rng.random_range(-range..=range) as f64))
}

/// One DD epoch at truth state `x`, with fresh integers and noise.
pub fn synth_epoch(
    x: &NavState,
    t: f64,
    sats: &SatelliteSet,
    geom: &AntennaGeometry,
    noise: &NoiseModelParams,
    noise_scale: f64,
    range: i64,
    rngs: (&mut ChaCha8Rng, &mut ChaCha8Rng),
) -> Result<(DdEpoch, DVector<f64>)> {
    let (noise_rng, int_rng) = rngs;
    let cov = dd_noise_covariance(sats, noise)?;
    let n = draw_integers(int_rng, sats.n_channels(), range);
    let b = baseline_function(x, geom);
    let e = correlated_noise(noise_rng, &cov)? * noise_scale;
    let z = dd_predict(&b, &n, sats)? + e;
    Ok((DdEpoch { t, z, sats: sats.clone(), cov }, n))
}

/// Apply additive faults active at `ep.t`. Returns `None` during an outage.
pub fn apply_faults(mut ep: DdEpoch, faults: &[Fault]) -> Result<Option<DdEpoch>> {
    for f in faults.iter().filter(|f| f.active(ep.t)) {
        match f {
            Fault::Outage { .. } => return Ok(None),
            Fault::PseudorangeBias { sat, bias, .. } | Fault::PhaseBias { sat, bias, .. } => {
                let off = ep.sats.block_offsets();
                let phase = matches!(f, Fault::PhaseBias { .. });
                for r in ep.sats.rows_of(*sat) {
                    let is_phase = (r >= off[1] && r < off[2]) || r >= off[3];
                    if is_phase == phase {
                        ep.z[r] += bias;
                    }
                }
            }
            Fault::PhaseShift { baseline, shift, start, ramp, .. } => {
                let b = &ep.sats.baselines[*baseline];
                if b.is_empty() {
                    continue;
                }
                let scale = if *ramp > 0.0 { ((ep.t - start) / ramp).clamp(0.0, 1.0) } else { 1.0 };
                let g = geometry_matrix(b)?;
                let d = g * (shift * scale);
                let r0 = ep.sats.block_offsets()[2 * baseline + 1];
                for j in 0..d.len() {
                    ep.z[r0 + j] += d[j];
                }
            }
        }
    }
    Ok(Some(ep))
}

/// Simulated measurement record for a scenario.
#[derive(Clone, Debug)]
pub struct SimRun {
    pub truth: Truth,
    pub imu: Vec<ImuSample>,
    /// `(imu index, epoch, true integers)`; `None` epochs are outages.
    pub epochs: Vec<(usize, Option<DdEpoch>, DVector<f64>)>,
    pub imu_params: ImuParams,
}

pub fn simulate(
    sc: &Scenario,
    geom: &AntennaGeometry,
    vdc: &VdcParams,
    noise: &NoiseModelParams,
    imu_params: &ImuParams,
) -> Result<SimRun> {
    let mut truth = synth_truth(sc, vdc, geom)?;
    let mut p = imu_params.clone();
    p.dt = sc.dt();
    let (imu, biases) = synth_imu(&truth, &p, sc.seed)?;
    attach_biases(&mut truth, &biases);
    let sats = sc.constellation.satellite_set()?;
    let mut noise_rng = substream(sc.seed, GNSS_STREAM);
    let mut int_rng = substream(sc.seed, INT_STREAM);
    let step = sc.imu_per_epoch();
    let mut epochs = Vec::new();
    for k in (step..=imu.len()).step_by(step) {
        let t = truth.t[k];
        let (ep, n) = synth_epoch(
            &truth.states[k],
            t,
            &sats,
            geom,
            noise,
            sc.gnss_noise_scale,
            sc.integer_range,
            (&mut noise_rng, &mut int_rng),
        )?;
        epochs.push((k, apply_faults(ep, &sc.faults)?, n));
    }
    Ok(SimRun { truth, imu, epochs, imu_params: p })
}

/// IMU stream as CSV: `t,fx,fy,fz,wx,wy,wz`.
pub fn write_imu_csv<W: std::io::Write>(imu: &[ImuSample], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["t", "fx", "fy", "fz", "wx", "wy", "wz"])?;
    for u in imu {
        let row = [u.t, u.accel.x, u.accel.y, u.accel.z, u.gyro.x, u.gyro.y, u.gyro.z];
        wtr.write_record(row.iter().map(f64::to_string))?;
    }
    wtr.flush()?;
    Ok(())
}

/// DD epochs as CSV, one row per observable. `sigma` is the marginal
/// standard deviation; the cross-correlations are implied by the pivot.
/// Outage epochs are omitted.
pub fn write_epochs_csv<W: std::io::Write>(epochs: &[(usize, Option<DdEpoch>, DVector<f64>)], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["t", "baseline", "kind", "pivot", "sat", "elev_deg", "wavelength", "z", "sigma", "true_integer"])?;
    for (_, ep, n) in epochs {
        let Some(ep) = ep else { continue };
        let (mut row, mut amb) = (0, 0);
        for (m, b) in ep.sats.baselines.iter().enumerate() {
            for kind in ["code", "phase"] {
                for (j, c) in b.channels.iter().enumerate() {
                    let integer = if kind == "phase" { n[amb + j].to_string() } else { String::new() };
                    wtr.write_record([
                        ep.t.to_string(),
                        (m + 1).to_string(),
                        kind.to_string(),
                        b.pivot.id.to_string(),
                        c.sat.id.to_string(),
                        (c.sat.elev / DEG).to_string(),
                        c.wavelength.to_string(),
                        ep.z[row].to_string(),
                        ep.cov[(row, row)].sqrt().to_string(),
                        integer,
                    ])?;
                    row += 1;
                }
            }
            amb += b.len();
        }
    }
    wtr.flush()?;
    Ok(())
}

/// IMU parameters for the scenario's grade, at its sample rate.
pub fn scenario_imu(sc: &Scenario) -> ImuParams {
    ImuParams { dt: sc.dt(), ..ImuParams::grade(sc.imu_grade) }
}

/// Attitude error in degrees, roll/pitch/yaw.
pub fn attitude_error_deg(est: &Matrix3<f64>, truth: &Matrix3<f64>) -> Result<Vector3<f64>> {
    Ok(log_map(&(truth.transpose() * est))? / DEG)
}

//! Double-difference measurement model for the two vehicle baselines.
//!
//! Baseline 1 runs from the reference station antenna to the vehicle's
//! primary antenna, baseline 2 from the primary to the secondary antenna.
//! Each DD channel is `(pivot - satellite)` of the `(far - near)` single
//! differences, so that a channel predicts `(e_pivot - e_j) . b`.
//! The stacked measurement order is `[rho1; phi1; rho2; phi2]`.

use nalgebra::{DMatrix, DVector, Matrix3, SMatrix, SVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifold::{skew, symmetrize_dyn, Belief, NavState, ATT, DIM, POS};
use crate::ut::{self, UtParams};

pub type Vec6 = SVector<f64, 6>;
pub type Mat6 = SMatrix<f64, 6, 6>;
pub type Mat6x15 = SMatrix<f64, 6, DIM>;

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
pub const GPS_L1_HZ: f64 = 1_575.42e6;
pub const GPS_L1_WAVELENGTH: f64 = SPEED_OF_LIGHT / GPS_L1_HZ;
pub const DEFAULT_BASELINE_LENGTH: f64 = 1.0668;

/// Body-frame positions of the IMU and both vehicle antennas (m).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AntennaGeometry {
    pub imu: Vector3<f64>,
    pub primary: Vector3<f64>,
    pub secondary: Vector3<f64>,
}

impl Default for AntennaGeometry {
    fn default() -> Self {
        let half = 0.5 * DEFAULT_BASELINE_LENGTH;
        Self {
            imu: Vector3::zeros(),
            primary: Vector3::new(-half, 0.0, 1.0),
            secondary: Vector3::new(half, 0.0, 1.0),
        }
    }
}

impl AntennaGeometry {
    pub fn validate(&self) -> Result<()> {
        if (self.secondary - self.primary).norm() <= 0.0 {
            return Err(Error::Config("antennas coincide".into()));
        }
        Ok(())
    }

    pub fn attitude_lever(&self) -> Vector3<f64> {
        self.secondary - self.primary
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Satellite {
    pub id: u32,
    /// Unit line-of-sight vector in the world frame.
    pub los: Vector3<f64>,
    /// Elevation (rad).
    pub elev: f64,
}

impl Satellite {
    pub fn from_az_el(id: u32, az: f64, el: f64) -> Self {
        let (se, ce) = el.sin_cos();
        let (sa, ca) = az.sin_cos();
        Self { id, los: Vector3::new(ce * sa, ce * ca, se), elev: el }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Channel {
    pub sat: Satellite,
    pub wavelength: f64,
}

/// DD channels of one baseline against a common pivot.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineChannels {
    pub pivot: Satellite,
    pub channels: Vec<Channel>,
}

impl BaselineChannels {
    pub fn len(&self) -> usize {
        self.channels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.channels.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SatelliteSet {
    pub baselines: [BaselineChannels; 2],
}

impl SatelliteSet {
    pub fn counts(&self) -> [usize; 2] {
        [self.baselines[0].len(), self.baselines[1].len()]
    }

    /// Total DD channels (= ambiguities = phase rows).
    pub fn n_channels(&self) -> usize {
        self.baselines[0].len() + self.baselines[1].len()
    }

    pub fn n_measurements(&self) -> usize {
        2 * self.n_channels()
    }

    /// Row of the first measurement of each block `[rho1, phi1, rho2, phi2]`.
    pub fn block_offsets(&self) -> [usize; 4] {
        let [n1, n2] = self.counts();
        [0, n1, 2 * n1, 2 * n1 + n2]
    }

    /// Measurement rows belonging to satellite `id` on any baseline.
    pub fn rows_of(&self, id: u32) -> Vec<usize> {
        let off = self.block_offsets();
        let mut rows = Vec::new();
        for m in 0..2 {
            for (j, c) in self.baselines[m].channels.iter().enumerate() {
                if c.sat.id == id {
                    rows.push(off[2 * m] + j);
                    rows.push(off[2 * m + 1] + j);
                }
            }
        }
        rows.sort_unstable();
        rows
    }

    /// Wavelength per ambiguity, in ambiguity order `[n1; n2]`.
    pub fn wavelengths(&self) -> Vec<f64> {
        self.baselines.iter().flat_map(|b| b.channels.iter().map(|c| c.wavelength)).collect()
    }

    pub fn validate(&self) -> Result<()> {
        for b in &self.baselines {
            let sats = std::iter::once(&b.pivot).chain(b.channels.iter().map(|c| &c.sat));
            for s in sats {
                if (s.los.norm() - 1.0).abs() > 1e-9 {
                    return Err(Error::InvalidInput(format!("satellite {} los not unit", s.id)));
                }
                if !(s.elev > 0.0 && s.elev <= std::f64::consts::FRAC_PI_2 + 1e-12) {
                    return Err(Error::InvalidInput(format!("satellite {} elevation {}", s.id, s.elev)));
                }
            }
            if b.channels.iter().any(|c| !(c.wavelength > 0.0)) {
                return Err(Error::InvalidInput("nonpositive wavelength".into()));
            }
        }
        Ok(())
    }
}

/// One epoch of DD pseudorange and carrier phase (m).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DdEpoch {
    pub t: f64,
    pub z: DVector<f64>,
    pub sats: SatelliteSet,
    pub cov: DMatrix<f64>,
}

impl DdEpoch {
    pub fn validate(&self) -> Result<()> {
        let m = self.sats.n_measurements();
        if self.z.len() != m || self.cov.nrows() != m || self.cov.ncols() != m {
            return Err(Error::Dimension(format!(
                "epoch has {} measurements, z {} cov {}x{}",
                m,
                self.z.len(),
                self.cov.nrows(),
                self.cov.ncols()
            )));
        }
        self.sats.validate()
    }

    /// Keep only the channels whose satellite is not in `drop`.
    pub fn without_satellites(&self, drop: &[u32]) -> DdEpoch {
        let mut keep_rows = Vec::new();
        let mut sats = self.sats.clone();
        let off = self.sats.block_offsets();
        for m in 0..2 {
            let n = self.sats.baselines[m].len();
            let keep: Vec<usize> =
                (0..n).filter(|&j| !drop.contains(&self.sats.baselines[m].channels[j].sat.id)).collect();
            sats.baselines[m].channels = keep.iter().map(|&j| self.sats.baselines[m].channels[j].clone()).collect();
            for blk in 0..2 {
                for &j in &keep {
                    keep_rows.push(off[2 * m + blk] + j);
                }
            }
        }
        let z = DVector::from_iterator(keep_rows.len(), keep_rows.iter().map(|&r| self.z[r]));
        let cov = self.cov.select_rows(&keep_rows).select_columns(&keep_rows);
        DdEpoch { t: self.t, z, sats, cov }
    }

    /// Drop every channel of baseline `m`.
    pub fn without_baseline(&self, m: usize) -> DdEpoch {
        let off = self.sats.block_offsets();
        let n = self.sats.baselines[m].len();
        let inside = |r: usize, start: usize| r >= start && r < start + n;
        let keep: Vec<usize> =
            (0..self.z.len()).filter(|&r| !inside(r, off[2 * m]) && !inside(r, off[2 * m + 1])).collect();
        let mut sats = self.sats.clone();
        sats.baselines[m].channels.clear();
        DdEpoch {
            t: self.t,
            z: DVector::from_iterator(keep.len(), keep.iter().map(|&r| self.z[r])),
            sats,
            cov: self.cov.select_rows(&keep).select_columns(&keep),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ElevationWeighting {
    /// sigma(el) = sigma_zenith / sin(el)
    InverseSine,
    Uniform,
}

/// Undifferenced zenith noise levels (m).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseModelParams {
    pub sigma_code: f64,
    pub sigma_phase: f64,
    pub weighting: ElevationWeighting,
}

impl Default for NoiseModelParams {
    fn default() -> Self {
        Self { sigma_code: 1.5, sigma_phase: 0.006, weighting: ElevationWeighting::InverseSine }
    }
}

impl NoiseModelParams {
    pub fn std_at(&self, zenith: f64, elev: f64) -> f64 {
        match self.weighting {
            ElevationWeighting::InverseSine => zenith / elev.sin(),
            ElevationWeighting::Uniform => zenith,
        }
    }
}

/// `[b1; b2]`: reference-to-primary and primary-to-secondary vectors (m).
pub fn baseline_function(x: &NavState, geom: &AntennaGeometry) -> Vec6 {
    let b1 = x.pos + x.att * (geom.primary - geom.imu);
    let b2 = x.att * geom.attitude_lever();
    Vec6::new(b1[0], b1[1], b1[2], b2[0], b2[1], b2[2])
}

/// Rows `(e_pivot - e_j)^T`.
pub fn geometry_matrix(b: &BaselineChannels) -> Result<DMatrix<f64>> {
    if b.channels.is_empty() {
        return Err(Error::InvalidInput("baseline has no non-pivot satellites".into()));
    }
    let mut g = DMatrix::zeros(b.channels.len(), 3);
    for (j, c) in b.channels.iter().enumerate() {
        let row = b.pivot.los - c.sat.los;
        for k in 0..3 {
            g[(j, k)] = row[k];
        }
    }
    Ok(g)
}

/// Maps `[b1; b2]` onto the stacked measurement vector.
pub fn measurement_map(sats: &SatelliteSet) -> DMatrix<f64> {
    let off = sats.block_offsets();
    let mut a = DMatrix::zeros(sats.n_measurements(), 6);
    for m in 0..2 {
        if let Ok(g) = geometry_matrix(&sats.baselines[m]) {
            a.view_mut((off[2 * m], 3 * m), (g.nrows(), 3)).copy_from(&g);
            a.view_mut((off[2 * m + 1], 3 * m), (g.nrows(), 3)).copy_from(&g);
        }
    }
    a
}

/// Maps integer ambiguities (cycles) onto the phase rows (m).
pub fn ambiguity_map(sats: &SatelliteSet) -> DMatrix<f64> {
    let off = sats.block_offsets();
    let [n1, _] = sats.counts();
    let mut a = DMatrix::zeros(sats.n_measurements(), sats.n_channels());
    for m in 0..2 {
        for (j, c) in sats.baselines[m].channels.iter().enumerate() {
            a[(off[2 * m + 1] + j, m * n1 + j)] = c.wavelength;
        }
    }
    a
}

pub fn dd_predict(b: &Vec6, n: &DVector<f64>, sats: &SatelliteSet) -> Result<DVector<f64>> {
    if n.len() != sats.n_channels() {
        return Err(Error::Dimension(format!("{} ambiguities for {} channels", n.len(), sats.n_channels())));
    }
    let bd = DVector::from_column_slice(b.as_slice());
    Ok(measurement_map(sats) * bd + ambiguity_map(sats) * n)
}

/// `D * Sigma_ud * D^T` over the reference, primary and secondary antennas.
pub fn dd_noise_covariance(sats: &SatelliteSet, params: &NoiseModelParams) -> Result<DMatrix<f64>> {
    let mut ids: Vec<(u32, f64)> = Vec::new();
    for b in &sats.baselines {
        for s in std::iter::once(&b.pivot).chain(b.channels.iter().map(|c| &c.sat)) {
            if !(s.elev > 0.0) {
                return Err(Error::InvalidInput(format!("satellite {} elevation {}", s.id, s.elev)));
            }
            if !ids.iter().any(|(i, _)| *i == s.id) {
                ids.push((s.id, s.elev));
            }
        }
    }
    let ns = ids.len();
    let idx = |id: u32| ids.iter().position(|(i, _)| *i == id).unwrap();
    // undifferenced column: antenna * ns + sat
    const REF: usize = 0;
    const PRI: usize = 1;
    const SEC: usize = 2;
    let ant = [(PRI, REF), (SEC, PRI)];
    let nm = sats.n_measurements();
    let off = sats.block_offsets();
    let mut cov = DMatrix::<f64>::zeros(nm, nm);
    for (kind, zen) in [(0usize, params.sigma_code), (1, params.sigma_phase)] {
        let nc = sats.n_channels();
        let mut d = DMatrix::<f64>::zeros(nc, 3 * ns);
        let mut rows = Vec::with_capacity(nc);
        let mut r = 0;
        for m in 0..2 {
            let (far, near) = ant[m];
            let p = idx(sats.baselines[m].pivot.id);
            for (j, c) in sats.baselines[m].channels.iter().enumerate() {
                let s = idx(c.sat.id);
                d[(r, far * ns + p)] += 1.0;
                d[(r, near * ns + p)] -= 1.0;
                d[(r, far * ns + s)] -= 1.0;
                d[(r, near * ns + s)] += 1.0;
                rows.push(off[2 * m + kind] + j);
                r += 1;
            }
        }
        let var = DVector::from_iterator(
            3 * ns,
            (0..3 * ns).map(|k| params.std_at(zen, ids[k % ns].1).powi(2)),
        );
        let block = &d * DMatrix::from_diagonal(&var) * d.transpose();
        for (a, &ra) in rows.iter().enumerate() {
            for (b, &rb) in rows.iter().enumerate() {
                cov[(ra, rb)] = block[(a, b)];
            }
        }
    }
    Ok(symmetrize_dyn(&cov))
}

/// Baseline mean, Jacobian and linearization-error covariance.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearizedBaselines {
    pub mean: Vec6,
    pub jacobian: Mat6x15,
    pub error_cov: Mat6,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Linearization {
    Ukf,
    Ekf,
    /// Both antenna positions free: no baseline length or attitude prior.
    Unconstrained,
}

impl Linearization {
    pub fn name(&self) -> &'static str {
        match self {
            Linearization::Ukf => "ukf",
            Linearization::Ekf => "ekf",
            Linearization::Unconstrained => "unconstrained",
        }
    }
}

/// First-order expansion about the mean; `error_cov` is zero.
pub fn linearize_ekf(belief: &Belief, geom: &AntennaGeometry) -> LinearizedBaselines {
    let r = belief.mean.att;
    let mut h = Mat6x15::zeros();
    h.fixed_view_mut::<3, 3>(0, POS).copy_from(&Matrix3::identity());
    // exp_map(d) ~ I - skew(d), so R (I - [d]x) l = R l + R [l]x d
    h.fixed_view_mut::<3, 3>(0, ATT).copy_from(&(r * skew(&(geom.primary - geom.imu))));
    h.fixed_view_mut::<3, 3>(3, ATT).copy_from(&(r * skew(&geom.attitude_lever())));
    LinearizedBaselines { mean: baseline_function(&belief.mean, geom), jacobian: h, error_cov: Mat6::zeros() }
}

/// Statistical linearization of `f` about a belief: output mean, the
/// regression Jacobian `Pyx Pxx^-1` and the residual covariance
/// `Pyy - H Pxx H^T` (clamped to PSD).
pub fn statistical_linearization<F>(
    belief: &Belief,
    params: &UtParams,
    f: F,
) -> Result<(DVector<f64>, DMatrix<f64>, DMatrix<f64>)>
where
    F: Fn(&NavState) -> DVector<f64>,
{
    let mo = ut::moments(belief, params, f)?;
    let pxx = DMatrix::from_column_slice(DIM, DIM, mo.pxx.as_slice());
    let hx = match pxx.clone().cholesky() {
        Some(c) => c.solve(&mo.pxy),
        None => pxx
            .clone()
            .pseudo_inverse(1e-14)
            .map_err(|e| Error::DegenerateCovariance(e.to_string()))?
            * &mo.pxy,
    };
    let h = hx.transpose();
    let resid = &mo.pyy - &h * &pxx * h.transpose();
    Ok((mo.mean, h, clamp_psd(&symmetrize_dyn(&resid))))
}

/// Statistical linearization of the baseline function by sigma points.
pub fn linearize_ukf(belief: &Belief, geom: &AntennaGeometry, params: &UtParams) -> Result<LinearizedBaselines> {
    let (mean, h, sigma_b) = statistical_linearization(belief, params, |x| {
        DVector::from_column_slice(baseline_function(x, geom).as_slice())
    })?;
    Ok(LinearizedBaselines {
        mean: Vec6::from_column_slice(mean.as_slice()),
        jacobian: Mat6x15::from_column_slice(h.as_slice()),
        error_cov: Mat6::from_column_slice(sigma_b.as_slice()),
    })
}

/// Variance given to the attitude baseline when it is treated as unknown.
pub const UNCONSTRAINED_VARIANCE: f64 = 1.0e4;

pub fn linearize(
    method: Linearization,
    belief: &Belief,
    geom: &AntennaGeometry,
    params: &UtParams,
) -> Result<LinearizedBaselines> {
    match method {
        Linearization::Ukf => linearize_ukf(belief, geom, params),
        Linearization::Ekf => Ok(linearize_ekf(belief, geom)),
        Linearization::Unconstrained => {
            let mut lin = linearize_ekf(belief, geom);
            lin.jacobian.fixed_view_mut::<3, DIM>(3, 0).fill(0.0);
            lin.error_cov
                .fixed_view_mut::<3, 3>(3, 3)
                .copy_from(&(Matrix3::identity() * UNCONSTRAINED_VARIANCE));
            Ok(lin)
        }
    }
}

/// Zero the negative eigenvalues of a symmetric matrix.
pub fn clamp_psd(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = m.clone().symmetric_eigen();
    if eig.eigenvalues.iter().all(|&v| v >= 0.0) {
        return m.clone();
    }
    let vals = eig.eigenvalues.map(|v| v.max(0.0));
    let v = &eig.eigenvectors;
    symmetrize_dyn(&(v * DMatrix::from_diagonal(&vals) * v.transpose()))
}

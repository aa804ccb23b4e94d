//! Estimator configuration as read from JSON.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::ambiguity::ApertureTable;
use crate::cdgnss::{AntennaGeometry, Linearization, NoiseModelParams};
use crate::error::{Error, Result};
use crate::ins::{ImuGrade, ImuParams, OuDiscretization};
use crate::integrity::IntegrityParams;
use crate::montecarlo::MonteCarloSpec;
use crate::sim::Scenario;
use crate::ut::UtParams;
use crate::vdc::VdcParams;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub geometry: AntennaGeometry,
    pub noise: NoiseModelParams,
    /// Vehicle constraint settings; `None` picks the IMU grade's defaults.
    pub vdc: Option<VdcParams>,
    pub integrity: IntegrityParams,
    /// Use the secondary antenna's baseline.
    pub multi_antenna: bool,
    pub nhc: bool,
    pub zupt: bool,
    pub attempt_fix: bool,
    pub linearization: Linearization,
    /// Transform used for the baseline linearization and constraint updates.
    pub linearization_ut: UtParams,
    pub propagation_ut: UtParams,
    /// Target failure rate of the aperture test.
    pub aperture_p_f: f64,
    /// Threshold table; the shipped one when absent.
    pub aperture_table: Option<PathBuf>,
    pub ou: OuDiscretization,
    /// A fixed epoch whose 3-D error exceeds this counts as a false fix (m).
    pub false_fix_error: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            geometry: AntennaGeometry::default(),
            noise: NoiseModelParams::default(),
            vdc: None,
            integrity: IntegrityParams::default(),
            multi_antenna: true,
            nhc: true,
            zupt: true,
            attempt_fix: true,
            linearization: Linearization::Ukf,
            linearization_ut: UtParams::MOMENT_MATCHED,
            propagation_ut: UtParams::SCALED,
            aperture_p_f: 0.001,
            aperture_table: None,
            ou: OuDiscretization::Exact,
            false_fix_error: 0.3,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        if let Some(v) = &self.vdc {
            v.validate()?;
        }
        let i = &self.integrity;
        let ok = self.aperture_p_f > 0.0
            && self.aperture_p_f < 1.0
            && i.outlier_gamma > 0.0
            && i.window >= 1
            && i.window_p_f > 0.0
            && i.window_p_f < 1.0
            && self.false_fix_error > 0.0
            && self.noise.sigma_code > 0.0
            && self.noise.sigma_phase > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config("run configuration out of range".into()))
        }
    }

    pub fn vdc_for(&self, grade: ImuGrade) -> VdcParams {
        self.vdc.clone().unwrap_or_else(|| match grade {
            ImuGrade::Industrial => VdcParams::default(),
            ImuGrade::Consumer => VdcParams::consumer(),
        })
    }

    /// Filter-side IMU model for a scenario.
    pub fn imu_for(&self, sc: &Scenario) -> ImuParams {
        ImuParams { dt: sc.dt(), ou: self.ou, ..ImuParams::grade(sc.imu_grade) }
    }

    pub fn table(&self) -> Result<ApertureTable> {
        match &self.aperture_table {
            Some(p) => ApertureTable::load(p),
            None => Ok(ApertureTable::builtin().clone()),
        }
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

pub fn load_run_config(path: &Path) -> Result<RunConfig> {
    let c: RunConfig = read_json(path)?;
    c.validate()?;
    Ok(c)
}

pub fn load_scenario(path: &Path) -> Result<Scenario> {
    let s: Scenario = read_json(path)?;
    s.validate()?;
    Ok(s)
}

pub fn load_monte_carlo(path: &Path) -> Result<MonteCarloSpec> {
    let s: MonteCarloSpec = read_json(path)?;
    s.validate()?;
    Ok(s)
}

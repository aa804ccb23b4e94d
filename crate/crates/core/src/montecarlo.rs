//! Single-epoch linearization study: fix success, failure and float rates of
//! the dual-baseline update as the prior yaw uncertainty grows.

use nalgebra::Vector3;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ambiguity::{substream, ApertureTable};
use crate::cdgnss::{linearize, AntennaGeometry, Linearization, NoiseModelParams};
use crate::error::{Error, Result};
use crate::ins::diagonal_cov;
use crate::manifold::{Belief, NavState, Vec15};
use crate::sim::{synth_epoch, Constellation};
use crate::sqrt_update::{measurement_update, FixPolicy, FixStatus};
use crate::ut::{sqrt_factor15, UtParams};

const DEG: f64 = std::f64::consts::PI / 180.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MonteCarloSpec {
    pub yaw_sigma_deg: Vec<f64>,
    pub pitch_roll_sigma_deg: f64,
    /// Prior position standard deviation per axis (m).
    pub position_sigma: f64,
    pub trials: usize,
    pub methods: Vec<Linearization>,
    pub p_f: f64,
    pub seed: u64,
    /// Prior mean heading (deg).
    pub heading_deg: f64,
    pub constellation: Constellation,
    pub geometry: AntennaGeometry,
    pub noise: NoiseModelParams,
    pub ut: UtParams,
}

impl Default for MonteCarloSpec {
    fn default() -> Self {
        Self {
            yaw_sigma_deg: vec![0.5, 2.0, 8.0, 15.0, 30.0, 60.0, 90.0],
            pitch_roll_sigma_deg: 2.0,
            position_sigma: 0.03,
            trials: 10_000,
            methods: vec![Linearization::Ukf, Linearization::Ekf, Linearization::Unconstrained],
            p_f: 0.01,
            seed: 7,
            heading_deg: 0.0,
            constellation: Constellation::default(),
            geometry: AntennaGeometry::default(),
            noise: NoiseModelParams::default(),
            ut: UtParams::default(),
        }
    }
}

impl MonteCarloSpec {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 || self.yaw_sigma_deg.is_empty() || self.methods.is_empty() {
            return Err(Error::Config("monte carlo needs trials, a yaw grid and methods".into()));
        }
        if !(self.p_f > 0.0 && self.p_f < 1.0) || self.position_sigma < 0.0 || self.pitch_roll_sigma_deg < 0.0 {
            return Err(Error::Config("monte carlo parameters out of range".into()));
        }
        self.geometry.validate()
    }

    /// Prior belief for one yaw uncertainty.
    pub fn prior(&self, yaw_sigma_deg: f64) -> Belief {
        let att = Vector3::new(self.pitch_roll_sigma_deg, self.pitch_roll_sigma_deg, yaw_sigma_deg) * DEG;
        let mean = NavState { att: crate::manifold::exp_map(&Vector3::new(0.0, 0.0, self.heading_deg * DEG)), ..Default::default() };
        Belief::new(mean, diagonal_cov(self.position_sigma, 0.1, att, 0.01, 1e-4))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TrialOutcome {
    Success,
    Failure,
    Float,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloRow {
    pub sigma_yaw_deg: f64,
    pub method: Linearization,
    pub p_success: f64,
    pub p_fail: f64,
    pub p_float: f64,
    pub trials: usize,
    pub successes: usize,
    pub failures: usize,
}

impl MonteCarloRow {
    fn from_counts(sigma: f64, method: Linearization, s: usize, f: usize, n: usize) -> Self {
        let p_success = s as f64 / n as f64;
        let p_fail = f as f64 / n as f64;
        Self {
            sigma_yaw_deg: sigma,
            method,
            p_success,
            p_fail,
            p_float: (n - s - f) as f64 / n as f64,
            trials: n,
            successes: s,
            failures: f,
        }
    }
}

/// One trial: draw the truth from the prior, synthesize an epoch, and
/// classify each method's outcome. Every method sees the same draws.
pub fn run_trial(
    spec: &MonteCarloSpec,
    prior: &Belief,
    factor: &crate::manifold::Mat15,
    table: &ApertureTable,
    point: usize,
    trial: usize,
) -> Result<Vec<TrialOutcome>> {
    let stream = ((point as u64) << 40) | trial as u64;
    let mut rng = substream(spec.seed, 3 * stream);
    let mut noise_rng = substream(spec.seed, 3 * stream + 1);
    let mut int_rng = substream(spec.seed, 3 * stream + 2);
    let w = Vec15::from_iterator((0..15).map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal)));
    let truth = prior.mean.oplus(&(factor * w));
    let sats = spec.constellation.satellite_set()?;
    let (epoch, n_true) =
        synth_epoch(&truth, 0.0, &sats, &spec.geometry, &spec.noise, 1.0, 50, (&mut noise_rng, &mut int_rng))?;
    let policy = FixPolicy { attempt_fix: true, p_f: spec.p_f, table };
    spec.methods
        .iter()
        .map(|&m| {
            let lin = linearize(m, prior, &spec.geometry, &spec.ut)?;
            let up = measurement_update(prior, &epoch, &lin, &policy)?;
            Ok(match (up.outcome.status, up.outcome.integers) {
                (FixStatus::Fixed, Some(n)) => {
                    if n.iter().zip(n_true.iter()).all(|(a, b)| *a as f64 == *b) {
                        TrialOutcome::Success
                    } else {
                        TrialOutcome::Failure
                    }
                }
                _ => TrialOutcome::Float,
            })
        })
        .collect()
}

/// Rates per `(yaw sigma, method)`, in grid order then method order.
/// Trial `i` of grid point `j` owns its own random substream, so the result
/// does not depend on the number of worker threads.
pub fn run_monte_carlo(spec: &MonteCarloSpec, table: &ApertureTable) -> Result<Vec<MonteCarloRow>> {
    spec.validate()?;
    let mut rows = Vec::new();
    for (j, &sigma) in spec.yaw_sigma_deg.iter().enumerate() {
        let prior = spec.prior(sigma);
        let factor = sqrt_factor15(&prior.cov)?;
        let outcomes: Vec<Vec<TrialOutcome>> = (0..spec.trials)
            .into_par_iter()
            .map(|i| run_trial(spec, &prior, &factor, table, j, i))
            .collect::<Result<_>>()?;
        for (k, &m) in spec.methods.iter().enumerate() {
            let s = outcomes.iter().filter(|o| o[k] == TrialOutcome::Success).count();
            let f = outcomes.iter().filter(|o| o[k] == TrialOutcome::Failure).count();
            rows.push(MonteCarloRow::from_counts(sigma, m, s, f, spec.trials));
        }
    }
    Ok(rows)
}

pub fn write_csv<W: std::io::Write>(rows: &[MonteCarloRow], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["sigma_yaw_deg", "method", "p_success", "p_fail", "p_float", "trials"])?;
    for r in rows {
        wtr.write_record([
            r.sigma_yaw_deg.to_string(),
            r.method.name().to_string(),
            r.p_success.to_string(),
            r.p_fail.to_string(),
            r.p_float.to_string(),
            r.trials.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

//! End-to-end filter runs over simulated scenarios, with per-epoch
//! reports, summary statistics and feature ablations.

use nalgebra::{DVector, Vector3};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ambiguity::{substream, ApertureTable};
use crate::cdgnss::SatelliteSet;
use crate::config::RunConfig;
use crate::error::Result;
use crate::ins::{body_rate, diagonal_cov, ukf_propagate, ImuParams};
use crate::integrity::{step_epoch, DualFilter, EpochSettings};
use crate::manifold::{Belief, NavState, Vec15};
use crate::sim::{attitude_error_deg, scenario_imu, simulate, Scenario, SimRun, INIT_STREAM};
use crate::sqrt_update::{FixPolicy, FixStatus};
use crate::ut::sqrt_factor15;
use crate::vdc::{nhc_update, zupt_update, StationarityState};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochReport {
    pub t: f64,
    pub status: String,
    pub n_channels: usize,
    pub excluded: usize,
    pub err_e: f64,
    pub err_n: f64,
    pub err_u: f64,
    pub err_h: f64,
    pub err_3d: f64,
    pub roll_err_deg: f64,
    pub pitch_err_deg: f64,
    pub yaw_err_deg: f64,
    /// Phase NIS of a validated fix.
    pub eps_phi: Option<f64>,
    pub window_ratio: Option<f64>,
    pub alarm: bool,
    pub reset: bool,
    pub reseed: bool,
    pub zupt: bool,
    /// Fixed to integers other than the simulated ones.
    pub wrong_integers: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub scenario: String,
    pub epochs: usize,
    pub gnss_epochs: usize,
    pub fixed_epochs: usize,
    /// Fixed epochs over epochs with data.
    pub fix_availability: f64,
    /// Fixed epochs whose 3-D error exceeds the false-fix limit, over fixed epochs.
    pub false_fix_rate: f64,
    /// Fixed epochs with any wrong integer, over fixed epochs.
    pub wrong_integer_rate: f64,
    /// Mean phase NIS over fixed epochs divided by the mean number of phase rows.
    pub nis_ratio: f64,
    pub horizontal_p95: f64,
    pub rmse_3d: f64,
    pub rmse_horizontal: f64,
    pub rmse_vertical: f64,
    pub attitude_rmse_deg: [f64; 3],
    pub alarms: usize,
    pub resets: usize,
    pub reseeds: usize,
    pub zupts: usize,
    pub excluded_pseudoranges: usize,
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub reports: Vec<EpochReport>,
    pub summary: Summary,
}

/// Truth at time zero perturbed by a draw from the initial covariance;
/// bias estimates start at zero.
pub fn initial_belief(sc: &Scenario, truth0: &NavState, imu: &ImuParams) -> Result<Belief> {
    let e = &sc.initial_error;
    let cov = diagonal_cov(e.position, e.velocity, e.attitude_deg.map(f64::to_radians), 0.0, 0.0);
    let mut rng = substream(sc.seed, INIT_STREAM);
    let w = Vec15::from_iterator((0..15).map(|_| rng.sample::<f64, _>(StandardNormal)));
    let l = sqrt_factor15(&cov)?;
    let mut mean = truth0.oplus(&(l * w));
    mean.accel_bias = Vector3::zeros();
    mean.gyro_bias = Vector3::zeros();
    let full = diagonal_cov(
        e.position,
        e.velocity,
        e.attitude_deg.map(f64::to_radians),
        imu.accel_bias_std,
        imu.gyro_bias_std,
    );
    Ok(Belief::new(mean, full))
}

fn percentile(v: &[f64], q: f64) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let idx = ((q * s.len() as f64).ceil() as usize).clamp(1, s.len()) - 1;
    s[idx]
}

fn rms(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x * x, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        (s / n as f64).sqrt()
    }
}

/// Run both filters over a simulated record.
pub fn run_filter(sc: &Scenario, cfg: &RunConfig, sim: &SimRun, table: &ApertureTable) -> Result<RunOutput> {
    cfg.validate()?;
    let imu = cfg.imu_for(sc);
    imu.validate()?;
    let vdc = cfg.vdc_for(sc.imu_grade);
    let dt = sc.dt();
    let init = initial_belief(sc, &sim.truth.states[0], &imu)?;
    let mut df = DualFilter::new(init, cfg.integrity.window);
    let mut still = StationarityState::new();
    let settings = EpochSettings {
        geometry: &cfg.geometry,
        linearization: cfg.linearization,
        ut: cfg.linearization_ut,
        fix: FixPolicy { attempt_fix: cfg.attempt_fix, p_f: cfg.aperture_p_f, table },
        integrity: cfg.integrity,
    };
    let mut reports = Vec::with_capacity(sim.epochs.len());
    let mut next = 0;
    for (k, u) in sim.imu.iter().enumerate() {
        let stationary = still.observe(&u.accel, &u.gyro, &vdc);
        df.primary = ukf_propagate(&df.primary, u, &imu, dt, &cfg.propagation_ut)?;
        df.float_only = ukf_propagate(&df.float_only, u, &imu, dt, &cfg.propagation_ut)?;
        let Some((idx, epoch, n_true)) = sim.epochs.get(next) else { continue };
        if *idx != k + 1 {
            continue;
        }
        next += 1;

        let mut zupt = false;
        for belief in [&mut df.primary, &mut df.float_only] {
            let w_b = body_rate(&belief.mean, u, &Vector3::zeros(), &imu);
            if cfg.zupt && stationary {
                let z = zupt_update(belief, &w_b, &vdc, &cfg.geometry.imu, &cfg.linearization_ut)?;
                zupt |= z.applied;
                *belief = z.belief;
            }
            if cfg.nhc {
                *belief = nhc_update(belief, &w_b, &vdc, &cfg.geometry.imu, &cfg.linearization_ut)?;
            }
        }

        let mut wrong_integers = false;
        let ev = match epoch {
            Some(full) => {
                let ep = if cfg.multi_antenna { full.clone() } else { full.without_baseline(1) };
                let e = step_epoch(&mut df, &ep, &settings)?;
                if let (FixStatus::Fixed, Some(n)) = (e.status, &e.integers) {
                    let used = ep.without_satellites(&e.excluded);
                    wrong_integers = n.iter().zip(true_integers(&full.sats, n_true, &used.sats)).any(|(a, b)| *a != b);
                }
                Some(e)
            }
            None => None,
        };
        let truth = &sim.truth.states[k + 1];
        let d = df.primary.mean.pos - truth.pos;
        let att = attitude_error_deg(&df.primary.mean.att, &truth.att)?;
        let (status, n_channels, excluded, eps_phi, window_ratio, alarm, reset, reseed) = match &ev {
            Some(e) => (
                e.status.name(),
                e.n_channels,
                e.excluded.len(),
                e.eps_phi,
                e.window_ratio,
                e.alarm,
                e.reset,
                e.reseed,
            ),
            None => ("outage", 0, 0, None, df.window.ratio(), false, false, false),
        };
        reports.push(EpochReport {
            t: sim.truth.t[k + 1],
            status: status.to_string(),
            n_channels,
            excluded,
            err_e: d[0],
            err_n: d[1],
            err_u: d[2],
            err_h: d.xy().norm(),
            err_3d: d.norm(),
            roll_err_deg: att[0],
            pitch_err_deg: att[1],
            yaw_err_deg: att[2],
            eps_phi,
            window_ratio,
            alarm,
            reset,
            reseed,
            zupt,
            wrong_integers,
        });
    }
    let summary = summarize(&sc.name, &reports, df.counters.resets, df.counters.reseeds, cfg.false_fix_error);
    Ok(RunOutput { reports, summary })
}

/// Simulated integers of the channels in `used`, which is a subset of `all`.
fn true_integers(all: &SatelliteSet, n: &DVector<f64>, used: &SatelliteSet) -> Vec<i64> {
    let mut out = Vec::with_capacity(used.n_channels());
    let mut base = 0;
    for m in 0..2 {
        let chans = &all.baselines[m].channels;
        for c in &used.baselines[m].channels {
            if let Some(j) = chans.iter().position(|a| a.sat.id == c.sat.id) {
                out.push(n[base + j].round() as i64);
            }
        }
        base += chans.len();
    }
    out
}

/// Simulate a scenario with the configuration's antenna and noise models,
/// then run the filters over it.
pub fn run_scenario(sc: &Scenario, cfg: &RunConfig, table: &ApertureTable) -> Result<RunOutput> {
    cfg.validate()?;
    let sim = simulate(sc, &cfg.geometry, &cfg.vdc_for(sc.imu_grade), &cfg.noise, &scenario_imu(sc))?;
    run_filter(sc, cfg, &sim, table)
}

pub fn summarize(name: &str, reports: &[EpochReport], resets: usize, reseeds: usize, false_fix_error: f64) -> Summary {
    let fixed = FixStatus::Fixed.name();
    let gnss: Vec<&EpochReport> = reports.iter().filter(|r| r.status != "outage").collect();
    let fixes: Vec<&EpochReport> = gnss.iter().copied().filter(|r| r.status == fixed).collect();
    let nis: f64 = fixes.iter().filter_map(|r| r.eps_phi).sum();
    let dof: usize = fixes.iter().map(|r| r.n_channels).sum();
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let horiz: Vec<f64> = reports.iter().map(|r| r.err_h).collect();
    Summary {
        scenario: name.to_string(),
        epochs: reports.len(),
        gnss_epochs: gnss.len(),
        fixed_epochs: fixes.len(),
        fix_availability: ratio(fixes.len(), gnss.len()),
        false_fix_rate: ratio(fixes.iter().filter(|r| r.err_3d > false_fix_error).count(), fixes.len()),
        wrong_integer_rate: ratio(fixes.iter().filter(|r| r.wrong_integers).count(), fixes.len()),
        nis_ratio: if dof == 0 { f64::NAN } else { nis / dof as f64 },
        horizontal_p95: percentile(&horiz, 0.95),
        rmse_3d: rms(reports.iter().map(|r| r.err_3d)),
        rmse_horizontal: rms(horiz.iter().copied()),
        rmse_vertical: rms(reports.iter().map(|r| r.err_u)),
        attitude_rmse_deg: [
            rms(reports.iter().map(|r| r.roll_err_deg)),
            rms(reports.iter().map(|r| r.pitch_err_deg)),
            rms(reports.iter().map(|r| r.yaw_err_deg)),
        ],
        alarms: reports.iter().filter(|r| r.alarm).count(),
        resets,
        reseeds,
        zupts: reports.iter().filter(|r| r.zupt).count(),
        excluded_pseudoranges: reports.iter().map(|r| r.excluded).sum(),
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

pub fn write_reports<W: std::io::Write>(reports: &[EpochReport], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record([
        "t", "status", "n_channels", "excluded", "err_e", "err_n", "err_u", "err_h", "err_3d", "roll_err_deg",
        "pitch_err_deg", "yaw_err_deg", "eps_phi", "window_ratio", "alarm", "reset", "reseed", "zupt", "wrong_integers",
    ])?;
    for r in reports {
        wtr.write_record([
            r.t.to_string(),
            r.status.clone(),
            r.n_channels.to_string(),
            r.excluded.to_string(),
            r.err_e.to_string(),
            r.err_n.to_string(),
            r.err_u.to_string(),
            r.err_h.to_string(),
            r.err_3d.to_string(),
            r.roll_err_deg.to_string(),
            r.pitch_err_deg.to_string(),
            r.yaw_err_deg.to_string(),
            opt(r.eps_phi),
            opt(r.window_ratio),
            (r.alarm as u8).to_string(),
            (r.reset as u8).to_string(),
            (r.reseed as u8).to_string(),
            (r.zupt as u8).to_string(),
            (r.wrong_integers as u8).to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

/// One switched-off feature per variant, plus the full configuration.
pub fn ablation_variants(base: &RunConfig) -> Vec<(&'static str, RunConfig)> {
    let with = |f: &dyn Fn(&mut RunConfig)| {
        let mut c = base.clone();
        f(&mut c);
        c
    };
    vec![
        ("baseline", base.clone()),
        ("single-antenna", with(&|c| c.multi_antenna = false)),
        ("no-nhc", with(&|c| c.nhc = false)),
        ("no-zupt", with(&|c| c.zupt = false)),
        ("no-vdc", with(&|c| {
            c.nhc = false;
            c.zupt = false;
        })),
        ("no-outlier-rejection", with(&|c| c.integrity.outlier_rejection = false)),
        ("no-false-fix-detection", with(&|c| c.integrity.false_fix_detection = false)),
        ("ekf-linearization", with(&|c| c.linearization = crate::cdgnss::Linearization::Ekf)),
    ]
}

/// Run every ablation variant on the same simulated record.
pub fn ablate(sc: &Scenario, base: &RunConfig, table: &ApertureTable) -> Result<Vec<(String, Summary)>> {
    base.validate()?;
    let sim = simulate(sc, &base.geometry, &base.vdc_for(sc.imu_grade), &base.noise, &scenario_imu(sc))?;
    ablation_variants(base)
        .into_par_iter()
        .map(|(name, cfg)| Ok((name.to_string(), run_filter(sc, &cfg, &sim, table)?.summary)))
        .collect()
}

pub fn write_ablation<W: std::io::Write>(rows: &[(String, Summary)], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record([
        "variant",
        "fix_availability",
        "false_fix_rate",
        "wrong_integer_rate",
        "horizontal_p95",
        "rmse_3d",
        "yaw_rmse_deg",
        "resets",
        "reseeds",
    ])?;
    for (name, s) in rows {
        wtr.write_record([
            name.clone(),
            s.fix_availability.to_string(),
            s.false_fix_rate.to_string(),
            s.wrong_integer_rate.to_string(),
            s.horizontal_p95.to_string(),
            s.rmse_3d.to_string(),
            s.attitude_rmse_deg[2].to_string(),
            s.resets.to_string(),
            s.reseeds.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

//! Robustness layer around the CDGNSS update: pseudorange outlier screening,
//! windowed carrier-phase NIS false-fix detection, and the primary /
//! float-only filter pair with soft reset and re-seed.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::gamma::{gamma_ur, ln_gamma};

use crate::cdgnss::{geometry_matrix, linearize, AntennaGeometry, DdEpoch, Linearization, LinearizedBaselines};
use crate::error::{Error, Result};
use crate::manifold::{Belief, DIM};
use crate::sqrt_update::{code_only_update, code_rows, measurement_update, FixPolicy, FixStatus};
use crate::ut::UtParams;

/// Upper-tail chi-square quantile: `x` with `P(X > x) = tail`, `X ~ chi2(dof)`.
///
/// Wilson-Hilferty start, then Newton steps on `ln Q(dof/2, x/2)`, which
/// stays well scaled down to tails near the smallest normal double.
pub fn chi2_quantile(dof: f64, tail: f64) -> Result<f64> {
    if !(dof > 0.0) || !(tail > 0.0 && tail < 1.0) {
        return Err(Error::InvalidInput(format!("chi2 quantile dof {dof} tail {tail}")));
    }
    let z = -Normal::standard().inverse_cdf(tail);
    let c = 2.0 / (9.0 * dof);
    let mut x = (dof * (1.0 - c + z * c.sqrt()).powi(3)).max(1e-3 * dof);
    let a = 0.5 * dof;
    let target = tail.ln();
    let norm = a * std::f64::consts::LN_2 + ln_gamma(a);
    for _ in 0..100 {
        let q = gamma_ur(a, 0.5 * x);
        if !(q > 0.0) {
            x *= 0.9;
            continue;
        }
        let ln_pdf = (a - 1.0) * x.ln() - 0.5 * x - norm;
        // d/dx ln Q = -pdf / Q
        let step = (q.ln() - target) / (ln_pdf - q.ln()).exp();
        let next = (x + step).max(0.5 * x);
        if (next - x).abs() <= 1e-13 * x {
            return Ok(next);
        }
        x = next;
    }
    Ok(x)
}

/// Sum of the last `len` fixed-epoch phase NIS values and their DOF.
#[derive(Clone, Debug)]
pub struct NisWindow {
    len: usize,
    buf: VecDeque<(f64, usize)>,
}

impl NisWindow {
    pub fn new(len: usize) -> Self {
        Self { len: len.max(1), buf: VecDeque::with_capacity(len.max(1)) }
    }

    pub fn psi(&self) -> f64 {
        self.buf.iter().map(|e| e.0).sum()
    }

    pub fn dof(&self) -> usize {
        self.buf.iter().map(|e| e.1).sum()
    }

    /// `Psi / N_Psi`, or `None` before any fixed epoch.
    pub fn ratio(&self) -> Option<f64> {
        let n = self.dof();
        (n > 0).then(|| self.psi() / n as f64)
    }

    pub fn clear(&mut self) {
        self.buf.clear();
    }

    pub fn push(&mut self, eps: f64, n: usize) {
        self.buf.push_back((eps, n));
        while self.buf.len() > self.len {
            self.buf.pop_front();
        }
    }

    /// Whether `Psi` exceeds the `chi2(N_Psi)` quantile at `1 - p_f`.
    pub fn alarm(&self, p_f: f64) -> Result<bool> {
        let n = self.dof();
        if n == 0 {
            return Ok(false);
        }
        Ok(self.psi() > chi2_quantile(n as f64, p_f)?)
    }
}

/// Push and test in one step.
pub fn nis_window_update(w: &mut NisWindow, eps: f64, n: usize, p_f: f64) -> Result<bool> {
    w.push(eps, n);
    w.alarm(p_f)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReseedCriteria {
    pub max_epoch_nis: f64,
    pub max_window_nis: f64,
    pub min_measurements: usize,
    pub min_time_since_reset: f64,
}

impl Default for ReseedCriteria {
    fn default() -> Self {
        Self { max_epoch_nis: 1.0, max_window_nis: 0.5, min_measurements: 10, min_time_since_reset: 2.0 }
    }
}

impl ReseedCriteria {
    /// All four conditions, given the last fix's `eps / N`, the window ratio,
    /// the last fix's `N`, and the time since the last soft reset.
    pub fn met(&self, eps_ratio: f64, window_ratio: f64, n: usize, since_reset: f64) -> bool {
        eps_ratio <= self.max_epoch_nis
            && window_ratio <= self.max_window_nis
            && n >= self.min_measurements
            && since_reset >= self.min_time_since_reset
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OutlierScreen {
    pub epoch: DdEpoch,
    pub excluded: Vec<u32>,
    /// `q = nu^2 / P_rho_rho(n, n)` per pseudorange row.
    pub statistics: Vec<f64>,
}

/// Drop every channel of any non-pivot satellite whose DD pseudorange
/// innovation fails `q > gamma^2`.
pub fn reject_pseudorange_outliers(
    belief: &Belief,
    epoch: &DdEpoch,
    lin: &LinearizedBaselines,
    gamma: f64,
) -> Result<OutlierScreen> {
    epoch.validate()?;
    let hb = DMatrix::from_column_slice(6, DIM, lin.jacobian.as_slice());
    let p = DMatrix::from_column_slice(DIM, DIM, belief.cov.as_slice());
    let sb = DMatrix::from_column_slice(6, 6, lin.error_cov.as_slice());
    let pbb = &hb * p * hb.transpose() + sb;
    let rows = code_rows(epoch);
    let [n1, n2] = epoch.sats.counts();
    let mut g = DMatrix::zeros(n1 + n2, 6);
    let mut ids = Vec::with_capacity(n1 + n2);
    for m in 0..2 {
        let b = &epoch.sats.baselines[m];
        if b.is_empty() {
            continue;
        }
        let gm = geometry_matrix(b)?;
        let r0 = if m == 0 { 0 } else { n1 };
        g.view_mut((r0, 3 * m), (gm.nrows(), 3)).copy_from(&gm);
        ids.extend(b.channels.iter().map(|c| c.sat.id));
    }
    let sigma = epoch.cov.select_rows(&rows).select_columns(&rows);
    let prr = &g * pbb * g.transpose() + sigma;
    let bbar = DVector::from_column_slice(lin.mean.as_slice());
    let pred = &g * bbar;
    let mut excluded = Vec::new();
    let mut statistics = Vec::with_capacity(rows.len());
    for (k, &r) in rows.iter().enumerate() {
        let nu = epoch.z[r] - pred[k];
        let q = nu * nu / prr[(k, k)];
        statistics.push(q);
        if q > gamma * gamma && !excluded.contains(&ids[k]) {
            excluded.push(ids[k]);
        }
    }
    excluded.sort_unstable();
    let epoch = if excluded.is_empty() { epoch.clone() } else { epoch.without_satellites(&excluded) };
    Ok(OutlierScreen { epoch, excluded, statistics })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IntegrityParams {
    pub outlier_rejection: bool,
    /// Outlier threshold in standard deviations.
    pub outlier_gamma: f64,
    pub false_fix_detection: bool,
    pub window: usize,
    pub window_p_f: f64,
    pub reseed: bool,
    pub reseed_criteria: ReseedCriteria,
}

impl Default for IntegrityParams {
    fn default() -> Self {
        Self {
            outlier_rejection: true,
            outlier_gamma: 1.5,
            false_fix_detection: true,
            window: 10,
            window_p_f: 1e-15,
            reseed: true,
            reseed_criteria: ReseedCriteria::default(),
        }
    }
}

/// Everything the GNSS half of an epoch needs besides the filters.
#[derive(Clone, Debug)]
pub struct EpochSettings<'a> {
    pub geometry: &'a AntennaGeometry,
    pub linearization: Linearization,
    pub ut: UtParams,
    pub fix: FixPolicy<'a>,
    pub integrity: IntegrityParams,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counters {
    pub fixes: usize,
    pub resets: usize,
    pub reseeds: usize,
}

/// Primary filter plus a float-only companion that never sees carrier
/// phase except through re-seeds.
#[derive(Clone, Debug)]
pub struct DualFilter {
    pub primary: Belief,
    pub float_only: Belief,
    pub window: NisWindow,
    pub last_reset: Option<f64>,
    pub counters: Counters,
}

impl DualFilter {
    pub fn new(init: Belief, window: usize) -> Self {
        Self { primary: init.clone(), float_only: init, window: NisWindow::new(window), last_reset: None, counters: Counters::default() }
    }

    pub fn time_since_reset(&self, t: f64) -> f64 {
        self.last_reset.map_or(f64::INFINITY, |r| t - r)
    }
}

/// Replace the primary belief by the float-only one and clear the window.
pub fn soft_reset(df: &mut DualFilter, t: f64) {
    df.primary = df.float_only.clone();
    df.window.clear();
    df.last_reset = Some(t);
    df.counters.resets += 1;
}

/// Copy the primary into the float-only filter if the criteria hold.
/// `eps` and `n` describe the last validated fix.
pub fn maybe_reseed(df: &mut DualFilter, eps: f64, n: usize, t: f64, c: &ReseedCriteria) -> bool {
    let window = df.window.ratio().unwrap_or(f64::INFINITY);
    let eps_ratio = if n > 0 { eps / n as f64 } else { f64::INFINITY };
    if !c.met(eps_ratio, window, n, df.time_since_reset(t)) {
        return false;
    }
    df.float_only = df.primary.clone();
    df.counters.reseeds += 1;
    true
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochEvents {
    pub status: FixStatus,
    /// DD channels used by the primary after screening.
    pub n_channels: usize,
    pub excluded: Vec<u32>,
    pub eps_phi: Option<f64>,
    pub window_ratio: Option<f64>,
    pub integers: Option<Vec<i64>>,
    pub alarm: bool,
    pub reset: bool,
    pub reseed: bool,
}

/// GNSS half of one epoch for both filters. Both must already be
/// propagated to `epoch.t`.
///
/// Order: float-only pseudorange update, then for the primary: screening,
/// fix-or-float update, NIS window, soft reset, re-seed.
pub fn step_epoch(df: &mut DualFilter, epoch: &DdEpoch, s: &EpochSettings) -> Result<EpochEvents> {
    let mut ev = EpochEvents {
        status: FixStatus::Empty,
        n_channels: 0,
        excluded: vec![],
        eps_phi: None,
        window_ratio: df.window.ratio(),
        integers: None,
        alarm: false,
        reset: false,
        reseed: false,
    };
    if epoch.sats.n_channels() == 0 {
        return Ok(ev);
    }

    let lin_f = linearize(s.linearization, &df.float_only, s.geometry, &s.ut)?;
    let ep_f = if s.integrity.outlier_rejection {
        reject_pseudorange_outliers(&df.float_only, epoch, &lin_f, s.integrity.outlier_gamma)?.epoch
    } else {
        epoch.clone()
    };
    if ep_f.sats.n_channels() > 0 {
        df.float_only = code_only_update(&df.float_only, &ep_f, &lin_f)?.posterior;
    }

    let lin = linearize(s.linearization, &df.primary, s.geometry, &s.ut)?;
    let ep = if s.integrity.outlier_rejection {
        let scr = reject_pseudorange_outliers(&df.primary, epoch, &lin, s.integrity.outlier_gamma)?;
        ev.excluded = scr.excluded;
        scr.epoch
    } else {
        epoch.clone()
    };
    ev.n_channels = ep.sats.n_channels();
    if ev.n_channels == 0 {
        return Ok(ev);
    }
    let up = measurement_update(&df.primary, &ep, &lin, &s.fix)?;
    df.primary = up.posterior;
    ev.status = up.outcome.status;
    ev.integers = up.outcome.integers.clone();

    let n = up.outcome.n_phase;
    let eps = up.outcome.phase_nis;
    ev.eps_phi = eps;
    match eps {
        Some(e) => {
            df.counters.fixes += 1;
            df.window.push(e, n);
        }
        None => df.window.push(0.0, 0),
    }
    ev.window_ratio = df.window.ratio();

    if s.integrity.false_fix_detection && df.window.alarm(s.integrity.window_p_f)? {
        ev.alarm = true;
        soft_reset(df, epoch.t);
        ev.reset = true;
        return Ok(ev);
    }
    if s.integrity.reseed {
        if let Some(e) = eps {
            ev.reseed = maybe_reseed(df, e, n, epoch.t, &s.integrity.reseed_criteria);
        }
    }
    Ok(ev)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chi2_reference_values() {
        // chi2(1) at 0.05 upper tail is 1.959964^2
        assert!((chi2_quantile(1.0, 0.05).unwrap() - 3.841_458_820_694_124).abs() < 1e-9);
        assert!((chi2_quantile(10.0, 0.01).unwrap() - 23.209_251_158_954_36).abs() < 1e-8);
        let x = chi2_quantile(100.0, 1e-15).unwrap();
        assert!((x - 256.634_973_667_15).abs() < 1e-7, "{x}");
        assert!((chi2_quantile(3.0, 1e-30).unwrap() - 142.677_986_223_461).abs() < 1e-7);
    }

    #[test]
    fn window_eviction() {
        let mut w = NisWindow::new(3);
        w.push(100.0, 10);
        for _ in 0..3 {
            w.push(1.0, 10);
        }
        assert_eq!(w.psi(), 3.0);
        assert_eq!(w.dof(), 30);
    }

    #[test]
    fn reseed_table() {
        let c = ReseedCriteria::default();
        assert!(c.met(0.5, 0.4, 12, 3.0));
        assert!(!c.met(0.5, 0.4, 9, 3.0));
        assert!(!c.met(0.5, 0.4, 12, 0.0));
    }
}

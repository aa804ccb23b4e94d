//! Square-root CDGNSS measurement update.
//!
//! The prior and the whitened DD measurements are stacked and reduced by a
//! single QR factorization into
//!
//! ```text
//! J(dx, n) = |v1 - Rxx dx - Rxn n|^2 + |v2 - Rnn n|^2 + |v3|^2
//!          =        J1              +      J2        +  J3
//! ```
//!
//! `J2` drives the integer search, `J3` is the pseudorange NIS, and the
//! state is recovered by back-substitution for either a fixed or a float
//! ambiguity vector.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::ambiguity::{self, ApertureDecision, ApertureTable, IlsProblem, K_BEST};
use crate::cdgnss::{ambiguity_map, measurement_map, DdEpoch, LinearizedBaselines};
use crate::error::{Error, Result};
use crate::manifold::{symmetrize_dyn, Belief, Mat15, Vec15, DIM};
use crate::ut::sqrt_factor;

/// Whitened, stacked least-squares system.
#[derive(Clone, Debug)]
pub struct NormalizedSystem {
    pub residual: DVector<f64>,
    pub state_block: DMatrix<f64>,
    pub ambiguity_block: DMatrix<f64>,
}

impl NormalizedSystem {
    /// Quadratic cost of `(dx, n)` before any orthogonal transform.
    pub fn cost(&self, dx: &DVector<f64>, n: &DVector<f64>) -> f64 {
        (&self.residual - &self.state_block * dx - &self.ambiguity_block * n).norm_squared()
    }
}

fn dyn_cov(p: &Mat15) -> DMatrix<f64> {
    DMatrix::from_column_slice(DIM, DIM, p.as_slice())
}

/// Inverse of the lower Cholesky factor of `m`; `W^T W = m^-1`.
fn whitener(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let l = sqrt_factor(m).map_err(|_| Error::DegenerateCovariance(format!("{what} not positive definite")))?;
    let n = l.nrows();
    l.solve_lower_triangular(&DMatrix::identity(n, n))
        .ok_or_else(|| Error::DegenerateCovariance(format!("{what} factor singular")))
}

/// Measurement covariance inflated by the linearization error, `Sigma_g + A Sigma_b A^T`.
pub fn effective_noise(lin: &LinearizedBaselines, epoch: &DdEpoch) -> DMatrix<f64> {
    let a = measurement_map(&epoch.sats);
    let sb = DMatrix::from_column_slice(6, 6, lin.error_cov.as_slice());
    symmetrize_dyn(&(&epoch.cov + &a * sb * a.transpose()))
}

/// Innovations `z - h(b_bar, 0)`.
pub fn innovations(lin: &LinearizedBaselines, epoch: &DdEpoch) -> DVector<f64> {
    let a = measurement_map(&epoch.sats);
    &epoch.z - a * DVector::from_column_slice(lin.mean.as_slice())
}

pub fn build_normalized_system(
    belief: &Belief,
    lin: &LinearizedBaselines,
    epoch: &DdEpoch,
) -> Result<NormalizedSystem> {
    epoch.validate()?;
    let nm = epoch.sats.n_measurements();
    let nn = epoch.sats.n_channels();
    let a = measurement_map(&epoch.sats);
    let hb = DMatrix::from_column_slice(6, DIM, lin.jacobian.as_slice());
    let hr = &a * hb;
    let hn = ambiguity_map(&epoch.sats);
    let wg = whitener(&effective_noise(lin, epoch), "measurement covariance")?;
    let wx = whitener(&dyn_cov(&belief.cov), "prior covariance")?;
    let nu = innovations(lin, epoch);

    let rows = DIM + nm;
    let mut residual = DVector::zeros(rows);
    let mut state_block = DMatrix::zeros(rows, DIM);
    let mut ambiguity_block = DMatrix::zeros(rows, nn);
    state_block.view_mut((0, 0), (DIM, DIM)).copy_from(&wx);
    state_block.view_mut((DIM, 0), (nm, DIM)).copy_from(&(&wg * hr));
    ambiguity_block.view_mut((DIM, 0), (nm, nn)).copy_from(&(&wg * hn));
    residual.rows_mut(DIM, nm).copy_from(&(&wg * nu));
    Ok(NormalizedSystem { residual, state_block, ambiguity_block })
}

#[derive(Clone, Debug)]
pub struct DecomposedCost {
    pub rxx: DMatrix<f64>,
    pub rxn: DMatrix<f64>,
    pub rnn: DMatrix<f64>,
    pub v1: DVector<f64>,
    pub v2: DVector<f64>,
    pub j3: f64,
    /// `Rnn` too ill-conditioned for an integer search.
    pub float_forced: bool,
}

impl DecomposedCost {
    pub fn j1(&self, dx: &DVector<f64>, n: &DVector<f64>) -> f64 {
        (&self.v1 - &self.rxx * dx - &self.rxn * n).norm_squared()
    }

    pub fn j2(&self, n: &DVector<f64>) -> f64 {
        (&self.v2 - &self.rnn * n).norm_squared()
    }

    pub fn cost(&self, dx: &DVector<f64>, n: &DVector<f64>) -> f64 {
        self.j1(dx, n) + self.j2(n) + self.j3
    }

    pub fn n_ambiguities(&self) -> usize {
        self.v2.len()
    }
}

pub fn qr_decompose(sys: &NormalizedSystem) -> Result<DecomposedCost> {
    let rows = sys.residual.len();
    let nn = sys.ambiguity_block.ncols();
    let cols = DIM + nn + 1;
    if rows < cols {
        return Err(Error::Dimension(format!("{rows} rows for {cols} columns")));
    }
    let mut m = DMatrix::zeros(rows, cols);
    m.view_mut((0, 0), (rows, DIM)).copy_from(&sys.state_block);
    m.view_mut((0, DIM), (rows, nn)).copy_from(&sys.ambiguity_block);
    m.set_column(cols - 1, &sys.residual);
    let r = m.qr().r();
    let rxx = r.view((0, 0), (DIM, DIM)).into_owned();
    if (0..DIM).any(|i| !(rxx[(i, i)].abs() > 1e-300)) {
        return Err(Error::Singular("state block of the square-root system".into()));
    }
    let rnn = r.view((DIM, DIM), (nn, nn)).into_owned();
    let scale = (0..nn).map(|i| rnn[(i, i)].abs()).fold(0.0, f64::max);
    let float_forced = nn == 0 || (0..nn).any(|i| !(rnn[(i, i)].abs() > 1e-10 * scale.max(1e-300)));
    Ok(DecomposedCost {
        rxn: r.view((0, DIM), (DIM, nn)).into_owned(),
        v1: r.view((0, cols - 1), (DIM, 1)).column(0).into_owned(),
        v2: r.view((DIM, cols - 1), (nn, 1)).column(0).into_owned(),
        j3: r[(DIM + nn, cols - 1)].powi(2),
        rxx,
        rnn,
        float_forced,
    })
}

fn upper_inverse(r: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = r.nrows();
    r.solve_upper_triangular(&DMatrix::identity(n, n))
        .ok_or_else(|| Error::Singular("triangular factor".into()))
}

/// Float ambiguities and state increment, plus the marginal state covariance.
pub fn float_solution(d: &DecomposedCost) -> Result<(DVector<f64>, DVector<f64>, DMatrix<f64>)> {
    let rnn_inv = upper_inverse(&d.rnn)?;
    let rxx_inv = upper_inverse(&d.rxx)?;
    let n = &rnn_inv * &d.v2;
    let dx = &rxx_inv * (&d.v1 - &d.rxn * &n);
    let coupling = &rxx_inv * &d.rxn * &rnn_inv;
    let p = &rxx_inv * rxx_inv.transpose() + &coupling * coupling.transpose();
    Ok((dx, n, symmetrize_dyn(&p)))
}

/// State increment and covariance conditioned on integer ambiguities.
pub fn fixed_solution(d: &DecomposedCost, n: &[i64]) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let nv = DVector::from_iterator(n.len(), n.iter().map(|&v| v as f64));
    let rxx_inv = upper_inverse(&d.rxx)?;
    let dx = &rxx_inv * (&d.v1 - &d.rxn * nv);
    let p = &rxx_inv * rxx_inv.transpose();
    Ok((dx, symmetrize_dyn(&p)))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FixStatus {
    Fixed,
    Float,
    Empty,
}

impl FixStatus {
    pub fn name(&self) -> &'static str {
        match self {
            FixStatus::Fixed => "fixed",
            FixStatus::Float => "float",
            FixStatus::Empty => "empty",
        }
    }
}

#[derive(Clone, Debug)]
pub struct AmbiguityOutcome {
    pub status: FixStatus,
    /// Validated integers when fixed, otherwise the ILS best candidate if one was computed.
    pub integers: Option<Vec<i64>>,
    pub float_ambiguities: Option<DVector<f64>>,
    pub j2_best: Option<f64>,
    pub j3: f64,
    pub aperture: Option<ApertureDecision>,
    /// Carrier-phase NIS `J2` at the fixed integers.
    pub phase_nis: Option<f64>,
    pub n_phase: usize,
    pub strength: f64,
}

impl AmbiguityOutcome {
    fn empty() -> Self {
        Self {
            status: FixStatus::Empty,
            integers: None,
            float_ambiguities: None,
            j2_best: None,
            j3: 0.0,
            aperture: None,
            phase_nis: None,
            n_phase: 0,
            strength: 0.0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct UpdateResult {
    pub posterior: Belief,
    pub outcome: AmbiguityOutcome,
}

/// Integer validation settings.
#[derive(Clone, Debug)]
pub struct FixPolicy<'a> {
    pub attempt_fix: bool,
    pub p_f: f64,
    pub table: &'a ApertureTable,
}

fn apply(belief: &Belief, dx: &DVector<f64>, p: &DMatrix<f64>) -> Belief {
    Belief::new(belief.mean.oplus(&Vec15::from_column_slice(dx.as_slice())), Mat15::from_column_slice(p.as_slice()))
}

/// Full fix-or-float update for one epoch.
pub fn measurement_update(
    belief: &Belief,
    epoch: &DdEpoch,
    lin: &LinearizedBaselines,
    policy: &FixPolicy,
) -> Result<UpdateResult> {
    let nn = epoch.sats.n_channels();
    if nn == 0 {
        return Ok(UpdateResult { posterior: belief.clone(), outcome: AmbiguityOutcome::empty() });
    }
    let sys = build_normalized_system(belief, lin, epoch)?;
    let d = qr_decompose(&sys)?;
    let mut outcome = AmbiguityOutcome {
        status: FixStatus::Float,
        j3: d.j3,
        n_phase: nn,
        strength: if d.float_forced { 0.0 } else { ambiguity::strength(&d.rnn) },
        ..AmbiguityOutcome::empty()
    };
    if policy.attempt_fix && !d.float_forced {
        let problem = IlsProblem::new(d.v2.clone(), d.rnn.clone())?;
        let sol = ambiguity::ils_search(&problem, K_BEST)?;
        let decision = ambiguity::aperture_test(&sol, nn, outcome.strength, policy.p_f, policy.table)?;
        outcome.j2_best = Some(sol.best().cost);
        outcome.integers = Some(sol.best().n.clone());
        let accepted = decision.accepted;
        outcome.aperture = Some(decision);
        if accepted {
            let n = sol.best().n.clone();
            let (dx, p) = fixed_solution(&d, &n)?;
            outcome.status = FixStatus::Fixed;
            outcome.phase_nis = Some(sol.best().cost);
            return Ok(UpdateResult { posterior: apply(belief, &dx, &p), outcome });
        }
    }
    let (dx, n, p) = if d.float_forced { code_only_solution(belief, lin, epoch)? } else { float_solution(&d)? };
    outcome.float_ambiguities = Some(n);
    Ok(UpdateResult { posterior: apply(belief, &dx, &p), outcome })
}

fn code_only_solution(
    belief: &Belief,
    lin: &LinearizedBaselines,
    epoch: &DdEpoch,
) -> Result<(DVector<f64>, DVector<f64>, DMatrix<f64>)> {
    let r = code_only_update(belief, epoch, lin)?;
    let dx = r.posterior.mean.ominus(&belief.mean)?;
    Ok((
        DVector::from_column_slice(dx.as_slice()),
        DVector::zeros(0),
        dyn_cov(&r.posterior.cov),
    ))
}

/// Rows of the pseudorange blocks `[rho1; rho2]`.
pub fn code_rows(epoch: &DdEpoch) -> Vec<usize> {
    let off = epoch.sats.block_offsets();
    let [n1, n2] = epoch.sats.counts();
    (0..n1).map(|j| off[0] + j).chain((0..n2).map(|j| off[2] + j)).collect()
}

/// Pseudorange-only update; carrier phase never enters the computation.
pub fn code_only_update(belief: &Belief, epoch: &DdEpoch, lin: &LinearizedBaselines) -> Result<UpdateResult> {
    let nn = epoch.sats.n_channels();
    if nn == 0 {
        return Ok(UpdateResult { posterior: belief.clone(), outcome: AmbiguityOutcome::empty() });
    }
    let rows = code_rows(epoch);
    let a = measurement_map(&epoch.sats).select_rows(&rows);
    let hb = DMatrix::from_column_slice(6, DIM, lin.jacobian.as_slice());
    let h = &a * hb;
    let zc = DVector::from_iterator(rows.len(), rows.iter().map(|&r| epoch.z[r]));
    let nu = zc - &a * DVector::from_column_slice(lin.mean.as_slice());
    let sb = DMatrix::from_column_slice(6, 6, lin.error_cov.as_slice());
    let r = epoch.cov.select_rows(&rows).select_columns(&rows) + &a * sb * a.transpose();
    let wg = whitener(&symmetrize_dyn(&r), "pseudorange covariance")?;
    let wx = whitener(&dyn_cov(&belief.cov), "prior covariance")?;
    let nr = rows.len();
    let mut m = DMatrix::zeros(DIM + nr, DIM + 1);
    m.view_mut((0, 0), (DIM, DIM)).copy_from(&wx);
    m.view_mut((DIM, 0), (nr, DIM)).copy_from(&(&wg * h));
    m.view_mut((DIM, DIM), (nr, 1)).copy_from(&(&wg * nu));
    let rr = m.qr().r();
    let rxx = rr.view((0, 0), (DIM, DIM)).into_owned();
    let rinv = upper_inverse(&rxx)?;
    let dx = &rinv * rr.view((0, DIM), (DIM, 1)).column(0);
    let p = symmetrize_dyn(&(&rinv * rinv.transpose()));
    let j3 = if rr.nrows() > DIM { rr[(DIM, DIM)].powi(2) } else { 0.0 };
    let outcome = AmbiguityOutcome { status: FixStatus::Float, j3, n_phase: nn, ..AmbiguityOutcome::empty() };
    Ok(UpdateResult { posterior: apply(belief, &dx, &p), outcome })
}

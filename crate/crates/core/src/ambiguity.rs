//! Integer least squares over `J2(n) = |y - R n|^2` and fixed-failure-rate
//! aperture validation.
//!
//! The search works in information form: the columns of the upper-triangular
//! factor `R` are reduced with integer Gauss transforms and swaps (`R Z = Q Rd`),
//! then a depth-first Schnorr-Euchner enumeration with a shrinking radius
//! returns the `k` lowest-cost integer vectors.

use std::cmp::Ordering;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of candidates the difference test needs.
pub const K_BEST: usize = 2;
const LOVASZ: f64 = 0.99;
pub const DEFAULT_NODE_BUDGET: usize = 2_000_000;

#[derive(Clone, Debug)]
pub struct IlsProblem {
    pub residual: DVector<f64>,
    /// Upper-triangular square-root information of the ambiguities.
    pub factor: DMatrix<f64>,
}

impl IlsProblem {
    pub fn new(residual: DVector<f64>, factor: DMatrix<f64>) -> Result<Self> {
        let n = factor.nrows();
        if factor.ncols() != n || residual.len() != n {
            return Err(Error::Dimension(format!(
                "factor {}x{}, residual {}",
                factor.nrows(),
                factor.ncols(),
                residual.len()
            )));
        }
        if (0..n).any(|i| !(factor[(i, i)].abs() > 1e-12)) {
            return Err(Error::Singular("ambiguity factor has a zero pivot".into()));
        }
        Ok(Self { residual, factor })
    }

    pub fn dim(&self) -> usize {
        self.residual.len()
    }

    pub fn cost(&self, n: &[i64]) -> f64 {
        let nv = DVector::from_iterator(n.len(), n.iter().map(|&v| v as f64));
        (&self.residual - &self.factor * nv).norm_squared()
    }

    pub fn float_solution(&self) -> DVector<f64> {
        self.factor.solve_upper_triangular(&self.residual).expect("nonsingular by construction")
    }

    /// `det(R^T R)^(1 / 2n)`, the inverse of the ambiguity dilution of precision.
    pub fn strength(&self) -> f64 {
        strength(&self.factor)
    }
}

pub fn strength(r: &DMatrix<f64>) -> f64 {
    let n = r.nrows();
    if n == 0 {
        return f64::INFINITY;
    }
    let logdet: f64 = (0..n).map(|i| r[(i, i)].abs().ln()).sum();
    (logdet / n as f64).exp()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Candidate {
    pub n: Vec<i64>,
    pub cost: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct IlsSolution {
    /// Best first; costs non-decreasing, ties ordered lexicographically.
    pub candidates: Vec<Candidate>,
}

impl IlsSolution {
    pub fn best(&self) -> &Candidate {
        &self.candidates[0]
    }
}

fn candidate_order(a: &Candidate, b: &Candidate) -> Ordering {
    a.cost.total_cmp(&b.cost).then_with(|| a.n.cmp(&b.n))
}

#[derive(Clone, Debug)]
pub struct Decorrelation {
    /// Unimodular integer matrix with `n = Z m`.
    pub z: DMatrix<i64>,
    /// Reduced upper-triangular factor, `R Z = Q Rd`.
    pub factor: DMatrix<f64>,
    /// `Q^T`, applied to the residual.
    pub rotation: DMatrix<f64>,
}

/// Integer Gauss transforms plus adjacent swaps (LLL on the columns of `R`).
pub fn decorrelate(r: &DMatrix<f64>) -> Result<Decorrelation> {
    let n = r.nrows();
    if r.ncols() != n {
        return Err(Error::Dimension("factor must be square".into()));
    }
    if (0..n).any(|i| !(r[(i, i)].abs() > 1e-12)) {
        return Err(Error::Singular("ambiguity factor has a zero pivot".into()));
    }
    let mut rr = r.clone();
    for i in 0..n {
        for j in 0..i {
            rr[(i, j)] = 0.0;
        }
    }
    let mut z = DMatrix::<i64>::identity(n, n);
    let mut qt = DMatrix::<f64>::identity(n, n);
    let reduce = |rr: &mut DMatrix<f64>, z: &mut DMatrix<i64>, i: usize, k: usize| {
        let mu = (rr[(i, k)] / rr[(i, i)]).round();
        if mu != 0.0 {
            for row in 0..=i {
                rr[(row, k)] -= mu * rr[(row, i)];
            }
            let m = mu as i64;
            for row in 0..n {
                z[(row, k)] -= m * z[(row, i)];
            }
        }
    };
    let mut k = 1;
    while k < n {
        reduce(&mut rr, &mut z, k - 1, k);
        let a = rr[(k - 1, k - 1)];
        let b = rr[(k - 1, k)];
        let c = rr[(k, k)];
        if LOVASZ * a * a > b * b + c * c {
            rr.swap_columns(k - 1, k);
            z.swap_columns(k - 1, k);
            let (x, y) = (rr[(k - 1, k - 1)], rr[(k, k - 1)]);
            let h = x.hypot(y);
            let (cs, sn) = (x / h, y / h);
            for col in 0..n {
                let (u, v) = (rr[(k - 1, col)], rr[(k, col)]);
                rr[(k - 1, col)] = cs * u + sn * v;
                rr[(k, col)] = -sn * u + cs * v;
            }
            rr[(k, k - 1)] = 0.0;
            for col in 0..n {
                let (u, v) = (qt[(k - 1, col)], qt[(k, col)]);
                qt[(k - 1, col)] = cs * u + sn * v;
                qt[(k, col)] = -sn * u + cs * v;
            }
            k = (k - 1).max(1);
        } else {
            for i in (0..k - 1).rev() {
                reduce(&mut rr, &mut z, i, k);
            }
            k += 1;
        }
    }
    Ok(Decorrelation { z, factor: rr, rotation: qt })
}

/// The `k_best` lowest-cost integer vectors, globally.
pub fn ils_search(p: &IlsProblem, k_best: usize) -> Result<IlsSolution> {
    ils_search_budget(p, k_best, DEFAULT_NODE_BUDGET)
}

pub fn ils_search_budget(p: &IlsProblem, k_best: usize, budget: usize) -> Result<IlsSolution> {
    if k_best < 1 {
        return Err(Error::InvalidInput("k_best must be positive".into()));
    }
    let n = p.dim();
    if n == 0 {
        return Ok(IlsSolution { candidates: vec![] });
    }
    let dec = decorrelate(&p.factor)?;
    let y = &dec.rotation * &p.residual;
    let r = &dec.factor;
    let to_original = |m: &[i64]| -> Vec<i64> {
        (0..n).map(|i| (0..n).map(|j| dec.z[(i, j)] * m[j]).sum()).collect()
    };

    let mut best: Vec<Candidate> = Vec::with_capacity(k_best + 1);
    let mut radius = f64::INFINITY;
    let mut m = vec![0i64; n];
    let mut base = vec![0i64; n];
    let mut dir = vec![1i64; n];
    let mut count = vec![0i64; n];
    let mut centre = vec![0.0; n];
    let mut dist = vec![0.0; n + 1];
    let mut nodes = 0usize;

    let set_level = |i: usize, m: &mut [i64], base: &mut [i64], dir: &mut [i64], count: &mut [i64], centre: &mut [f64]| {
        let mut s = y[i];
        for j in i + 1..n {
            s -= r[(i, j)] * m[j] as f64;
        }
        let c = s / r[(i, i)];
        centre[i] = c;
        base[i] = c.round() as i64;
        dir[i] = if c >= base[i] as f64 { 1 } else { -1 };
        count[i] = 0;
        m[i] = base[i];
    };
    let next_sibling = |i: usize, m: &mut [i64], base: &[i64], dir: &[i64], count: &mut [i64]| {
        count[i] += 1;
        let t = count[i];
        let off = if t % 2 == 1 { dir[i] * (t + 1) / 2 } else { -dir[i] * t / 2 };
        m[i] = base[i] + off;
    };

    let mut i = n - 1;
    set_level(i, &mut m, &mut base, &mut dir, &mut count, &mut centre);
    loop {
        nodes += 1;
        if nodes > budget {
            return Err(Error::SearchBudget(budget));
        }
        let e = r[(i, i)] * (m[i] as f64 - centre[i]);
        let d = dist[i + 1] + e * e;
        if d <= radius {
            if i == 0 {
                let cand = Candidate { n: to_original(&m), cost: d };
                let pos = best.partition_point(|b| candidate_order(b, &cand) == Ordering::Less);
                best.insert(pos, cand);
                best.truncate(k_best);
                if best.len() == k_best {
                    radius = best[k_best - 1].cost;
                }
                next_sibling(i, &mut m, &base, &dir, &mut count);
            } else {
                dist[i] = d;
                i -= 1;
                set_level(i, &mut m, &mut base, &mut dir, &mut count, &mut centre);
            }
        } else {
            if i == n - 1 {
                break;
            }
            i += 1;
            next_sibling(i, &mut m, &base, &dir, &mut count);
        }
    }
    for c in best.iter_mut() {
        c.cost = p.cost(&c.n);
    }
    best.sort_by(candidate_order);
    Ok(IlsSolution { candidates: best })
}

/// Exhaustive search over `[-bound, bound]^n` (test oracle).
pub fn brute_force(p: &IlsProblem, bound: i64, k_best: usize) -> IlsSolution {
    let n = p.dim();
    let r: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| p.factor[(i, j)]).collect()).collect();
    let y: Vec<f64> = p.residual.iter().copied().collect();
    let mut best: Vec<Candidate> = Vec::with_capacity(k_best + 1);
    let mut v = vec![-bound; n];
    loop {
        let mut cost = 0.0;
        for i in 0..n {
            let mut e = y[i];
            for j in i..n {
                e -= r[i][j] * v[j] as f64;
            }
            cost += e * e;
        }
        if best.len() < k_best || cost <= best[best.len() - 1].cost {
            let cand = Candidate { n: v.clone(), cost };
            let pos = best.partition_point(|b| candidate_order(b, &cand) == Ordering::Less);
            best.insert(pos, cand);
            best.truncate(k_best);
        }
        let mut k = 0;
        while k < n {
            v[k] += 1;
            if v[k] <= bound {
                break;
            }
            v[k] = -bound;
            k += 1;
        }
        if k == n {
            break;
        }
    }
    for c in best.iter_mut() {
        c.cost = p.cost(&c.n);
    }
    best.sort_by(candidate_order);
    IlsSolution { candidates: best }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ApertureEntry {
    pub dof: usize,
    /// Lower edge of the strength bucket.
    pub strength_bucket: f64,
    pub p_f_target: f64,
    pub threshold: f64,
}

/// Difference-test thresholds keyed by `(dof, strength bucket, P_f)`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ApertureTable {
    pub entries: Vec<ApertureEntry>,
}

const BUILTIN_TABLE: &str = include_str!("../data/aperture_thresholds.csv");

impl ApertureTable {
    pub fn builtin() -> &'static ApertureTable {
        use std::sync::OnceLock;
        static TABLE: OnceLock<ApertureTable> = OnceLock::new();
        TABLE.get_or_init(|| ApertureTable::from_reader(BUILTIN_TABLE.as_bytes()).expect("shipped table parses"))
    }

    pub fn from_reader<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let mut entries = Vec::new();
        for row in rdr.deserialize() {
            let e: ApertureEntry = row.map_err(|e| Error::Config(format!("aperture table: {e}")))?;
            entries.push(e);
        }
        Ok(Self { entries })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_reader(std::fs::File::open(path)?)
    }

    pub fn write_to<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        for e in &self.entries {
            wtr.serialize(e)?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn lookup(&self, dof: usize, strength: f64, p_f: f64) -> Option<f64> {
        self.entries
            .iter()
            .filter(|e| e.dof == dof && (e.p_f_target - p_f).abs() <= 1e-12 * p_f.abs().max(1.0))
            .filter(|e| e.strength_bucket <= strength)
            .max_by(|a, b| a.strength_bucket.total_cmp(&b.strength_bucket))
            .map(|e| e.threshold)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ApertureDecision {
    pub accepted: bool,
    pub best: Vec<i64>,
    /// `J2(second) - J2(best)`.
    pub statistic: f64,
    pub threshold: Option<f64>,
    pub p_f: f64,
    pub note: Option<String>,
}

/// Fixed-failure-rate difference test. A missing table entry rejects.
pub fn aperture_test(
    sol: &IlsSolution,
    dof: usize,
    strength: f64,
    p_f: f64,
    table: &ApertureTable,
) -> Result<ApertureDecision> {
    if sol.candidates.len() < 2 {
        return Err(Error::InvalidInput("difference test needs two candidates".into()));
    }
    let statistic = sol.candidates[1].cost - sol.candidates[0].cost;
    let threshold = table.lookup(dof, strength, p_f);
    let note = threshold
        .is_none()
        .then(|| format!("no threshold for dof {dof}, strength {strength:.3}, P_f {p_f}"));
    Ok(ApertureDecision {
        accepted: threshold.is_some_and(|mu| statistic > mu),
        best: sol.candidates[0].n.clone(),
        statistic,
        threshold,
        p_f,
        note,
    })
}

/// Geometric bucket edges `2^(k/2)`, 1 to 128 cycles^-1.
pub fn default_strength_edges() -> Vec<f64> {
    (0..=14).map(|k| 2f64.powf(k as f64 / 2.0)).collect()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CalibrationSpec {
    pub dofs: Vec<usize>,
    pub strength_edges: Vec<f64>,
    pub p_f_targets: Vec<f64>,
    pub samples: usize,
    pub seed: u64,
    /// Search node budget per sample; a bucket that exceeds it gets no entry.
    pub node_budget: usize,
}

impl Default for CalibrationSpec {
    fn default() -> Self {
        Self {
            dofs: (1..=24).collect(),
            strength_edges: default_strength_edges(),
            p_f_targets: vec![0.001, 0.01],
            samples: 100_000,
            seed: 20_190_611,
            node_budget: 200_000,
        }
    }
}

/// Random problem with true integers zero and `strength(R) == s`.
///
/// Conditional standard deviations are spread log-uniformly by a random
/// amount and coupled by random off-diagonal terms, so a bucket mixes
/// balanced and lopsided lattices.
pub fn sample_problem<R: Rng>(rng: &mut R, dof: usize, s: f64) -> IlsProblem {
    let spread: f64 = rng.random_range(0.0..3.0);
    let coupling: f64 = rng.random_range(0.0..2.0);
    let mut r = DMatrix::zeros(dof, dof);
    for i in 0..dof {
        let u: f64 = rng.random();
        r[(i, i)] = (spread * (u - 0.5)).exp();
    }
    for i in 0..dof {
        for j in i + 1..dof {
            let g: f64 = rng.sample(StandardNormal);
            r[(i, j)] = coupling * g * r[(i, i)];
        }
    }
    let scale = s / strength(&r);
    r *= scale;
    let y = DVector::from_iterator(dof, (0..dof).map(|_| rng.sample::<f64, _>(StandardNormal)));
    IlsProblem { residual: y, factor: r }
}

/// Smallest threshold whose empirical failure rate does not exceed `p_f`.
pub fn threshold_for(samples: &[(f64, bool)], p_f: f64) -> f64 {
    let allowed = (p_f * samples.len() as f64).floor() as usize;
    let mut wrong: Vec<f64> = samples.iter().filter(|(_, ok)| !ok).map(|(s, _)| *s).collect();
    if wrong.len() <= allowed {
        return 0.0;
    }
    wrong.sort_by(|a, b| b.total_cmp(a));
    wrong[allowed].max(0.0)
}

/// Rng substream for `(seed, stream)`; identical across thread counts.
pub fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Difference statistic and correctness for `samples` problems of one bucket.
pub fn bucket_statistics(dof: usize, s: f64, samples: usize, seed: u64, budget: usize) -> Option<Vec<(f64, bool)>> {
    let mut rng = substream(seed, ((dof as u64) << 32) ^ s.to_bits().rotate_left(7));
    let mut out = Vec::with_capacity(samples);
    for _ in 0..samples {
        let p = sample_problem(&mut rng, dof, s);
        let sol = ils_search_budget(&p, K_BEST, budget).ok()?;
        let stat = sol.candidates[1].cost - sol.candidates[0].cost;
        out.push((stat, sol.candidates[0].n.iter().all(|&v| v == 0)));
    }
    Some(out)
}

/// Builds the threshold table by Monte Carlo at the bucket edges.
///
/// The required threshold is not monotone in strength, so each bucket takes
/// the larger of the values at its two edges. The last bucket is open and
/// uses its lower edge. An edge whose search blows the node budget leaves
/// the buckets on either side of it without an entry.
pub fn calibrate(spec: &CalibrationSpec) -> ApertureTable {
    let mut edges = spec.strength_edges.clone();
    edges.sort_by(f64::total_cmp);
    edges.dedup();
    let jobs: Vec<(usize, f64)> = spec.dofs.iter().flat_map(|&d| edges.iter().map(move |&s| (d, s))).collect();
    let mu: Vec<Option<Vec<f64>>> = jobs
        .par_iter()
        .map(|&(dof, s)| {
            bucket_statistics(dof, s, spec.samples, spec.seed, spec.node_budget)
                .map(|stats| spec.p_f_targets.iter().map(|&p_f| threshold_for(&stats, p_f)).collect())
        })
        .collect();
    let mut entries = Vec::new();
    for (di, &dof) in spec.dofs.iter().enumerate() {
        let at = |k: usize| mu[di * edges.len() + k].as_ref();
        for k in 0..edges.len() {
            let upper = if k + 1 < edges.len() { at(k + 1) } else { at(k) };
            let (Some(lo), Some(hi)) = (at(k), upper) else { continue };
            for (j, &p_f) in spec.p_f_targets.iter().enumerate() {
                entries.push(ApertureEntry {
                    dof,
                    strength_bucket: edges[k],
                    p_f_target: p_f,
                    threshold: lo[j].max(hi[j]),
                });
            }
        }
    }
    ApertureTable { entries }
}

#![allow(dead_code)]

use std::path::PathBuf;

use nalgebra::{DMatrix, Vector3};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use tcnav::ambiguity::substream;
use tcnav::cdgnss::{BaselineChannels, Channel, Satellite, SatelliteSet, GPS_L1_WAVELENGTH};
use tcnav::manifold::{exp_map, Belief, Mat15, NavState};

pub fn rng(stream: u64) -> ChaCha8Rng {
    substream(0x5eed, stream)
}

pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

pub fn repo_file(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

/// `n` satellites at random azimuths and elevations in [15, 85] degrees,
/// highest as pivot, every other one tracked on both baselines.
pub fn random_sats(rng: &mut ChaCha8Rng, n: usize) -> SatelliteSet {
    let mut sats: Vec<Satellite> = (0..n)
        .map(|i| {
            let az = rng.random_range(0.0..std::f64::consts::TAU);
            let el = rng.random_range(15f64..85.0).to_radians();
            Satellite::from_az_el(i as u32 + 1, az, el)
        })
        .collect();
    sats.sort_by(|a, b| b.elev.total_cmp(&a.elev));
    let pivot = sats.remove(0);
    let channels: Vec<Channel> = sats.into_iter().map(|sat| Channel { sat, wavelength: GPS_L1_WAVELENGTH }).collect();
    let b = BaselineChannels { pivot, channels };
    SatelliteSet { baselines: [b.clone(), b] }
}

/// Random symmetric positive definite matrix with eigenvalues spread over
/// `[lo, hi]`.
pub fn random_spd(rng: &mut ChaCha8Rng, dim: usize, lo: f64, hi: f64) -> DMatrix<f64> {
    let a = DMatrix::from_fn(dim, dim, |_, _| normal(rng));
    let q = a.qr().q();
    let d = DMatrix::from_diagonal(&nalgebra::DVector::from_fn(dim, |_, _| {
        (lo.ln() + rng.random_range(0.0..1.0) * (hi.ln() - lo.ln())).exp()
    }));
    let m = &q * d * q.transpose();
    (&m + m.transpose()) * 0.5
}

pub fn random_state(rng: &mut ChaCha8Rng) -> NavState {
    let v = |rng: &mut ChaCha8Rng, s: f64| Vector3::new(normal(rng), normal(rng), normal(rng)) * s;
    let yaw = rng.random_range(-3.0..3.0);
    NavState {
        pos: v(rng, 10.0),
        vel: v(rng, 5.0),
        att: exp_map(&Vector3::new(rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3), yaw)),
        accel_bias: v(rng, 0.01),
        gyro_bias: v(rng, 1e-4),
    }
}

/// Random belief with position/velocity variances near `pos_var` and a
/// few degrees of attitude uncertainty.
pub fn random_belief(rng: &mut ChaCha8Rng, pos_var: f64) -> Belief {
    let mean = random_state(rng);
    let mut cov = Mat15::zeros();
    let blocks = [(0, pos_var), (3, 0.01), (6, 3e-3), (9, 1e-5), (12, 1e-8)];
    for (i, s) in blocks {
        let b = random_spd(rng, 3, 0.2 * s, 2.0 * s);
        cov.view_mut((i, i), (3, 3)).copy_from(&b);
    }
    Belief::new(mean, cov)
}

mod common;

use nalgebra::Vector3;
use proptest::prelude::*;
use tcnav::cdgnss::{baseline_function, dd_predict, AntennaGeometry, NoiseModelParams};
use tcnav::ins::{dynamics, Vec12};
use tcnav::montecarlo::{run_monte_carlo, MonteCarloSpec};
use tcnav::ambiguity::ApertureTable;
use tcnav::sim::{
    apply_faults, ideal_imu, scenario_imu, simulate, synth_epoch, synth_truth, write_epochs_csv, write_imu_csv, Constellation,
    Fault, Motion, Scenario,
};
use tcnav::vdc::VdcParams;

use common::rng;

fn short(seed: u64) -> Scenario {
    Scenario { seed, duration: 30.0, ..Scenario::default() }
}

fn sim(sc: &Scenario) -> tcnav::sim::SimRun {
    simulate(sc, &AntennaGeometry::default(), &VdcParams::default(), &NoiseModelParams::default(), &scenario_imu(sc))
        .unwrap()
}

#[test]
fn same_seed_same_record() {
    let (a, b) = (sim(&short(4)), sim(&short(4)));
    assert_eq!(a.imu, b.imu);
    assert_eq!(a.epochs.len(), 150);
    for (x, y) in a.epochs.iter().zip(&b.epochs) {
        assert_eq!(x.1, y.1);
        assert_eq!(x.2, y.2);
    }
    let c = sim(&short(5));
    assert_ne!(a.imu, c.imu);
}

#[test]
fn streams_round_trip_through_csv() {
    let sc = Scenario { duration: 2.0, faults: vec![Fault::Outage { start: 0.9, end: 1.1 }], ..Scenario::default() };
    let run = sim(&sc);

    let mut buf = Vec::new();
    write_imu_csv(&run.imu, &mut buf).unwrap();
    let mut rdr = csv::Reader::from_reader(buf.as_slice());
    assert_eq!(rdr.headers().unwrap(), vec!["t", "fx", "fy", "fz", "wx", "wy", "wz"]);
    let rows: Vec<Vec<f64>> = rdr.records().map(|r| r.unwrap().iter().map(|v| v.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), run.imu.len());
    let u = &run.imu[17];
    assert_eq!(rows[17], vec![u.t, u.accel.x, u.accel.y, u.accel.z, u.gyro.x, u.gyro.y, u.gyro.z]);

    let mut buf = Vec::new();
    write_epochs_csv(&run.epochs, &mut buf).unwrap();
    let mut rdr = csv::Reader::from_reader(buf.as_slice());
    let recs: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    let live: Vec<_> = run.epochs.iter().filter_map(|e| e.1.as_ref().map(|ep| (ep, &e.2))).collect();
    assert!(live.len() < run.epochs.len());
    assert_eq!(recs.len(), live.iter().map(|(ep, _)| ep.z.len()).sum::<usize>());
    // first epoch: code rows then phase rows of baseline 1
    let (ep, n) = live[0];
    let nb = ep.sats.baselines[0].len();
    let phase = &recs[nb];
    assert_eq!(&phase[2], "phase");
    assert_eq!(phase[7].parse::<f64>().unwrap(), ep.z[nb]);
    assert_eq!(phase[9].parse::<f64>().unwrap(), n[0]);
    assert_eq!(&recs[0][9], "");
}

#[test]
fn ideal_imu_reproduces_the_truth() {
    let sc = Scenario { duration: 60.0, ..Scenario::default() };
    let geom = AntennaGeometry::default();
    let truth = synth_truth(&sc, &VdcParams::default(), &geom).unwrap();
    let p = scenario_imu(&sc);
    let mut x = truth.states[0].clone();
    let (mut dv, mut da) = (0.0f64, 0.0f64);
    for k in 0..truth.states.len() - 1 {
        let u = ideal_imu(&truth.states[k], &truth.states[k + 1], truth.t[k], sc.dt(), &p).unwrap();
        x = dynamics(&x, &u, &Vec12::zeros(), &p, sc.dt());
        let e = x.ominus(&truth.states[k + 1]).unwrap();
        dv = dv.max(Vector3::new(e[3], e[4], e[5]).norm());
        da = da.max(Vector3::new(e[6], e[7], e[8]).norm());
    }
    let dp = (x.pos - truth.states.last().unwrap().pos).norm();
    assert!(dv < 1e-8 && da < 1e-9, "{dv} {da}");
    assert!(dp < 1e-3, "{dp}");
}

#[test]
fn circle_truth_is_kinematic() {
    let sc = Scenario { duration: 20.0, motion: Motion::Circle { radius: 40.0, speed: 8.0 }, ..Scenario::default() };
    let vdc = VdcParams { vehicle_origin: Vector3::zeros(), ..VdcParams::default() };
    let truth = synth_truth(&sc, &vdc, &AntennaGeometry::default()).unwrap();
    for x in truth.states.iter().step_by(200) {
        assert!((x.vel.norm() - 8.0).abs() < 1e-9);
        assert!(x.vel.z.abs() < 1e-12);
    }
}

#[test]
fn dd_noise_matches_its_covariance() {
    let sats = Constellation::default().satellite_set().unwrap();
    let geom = AntennaGeometry::default();
    let noise = NoiseModelParams::default();
    let x = tcnav::manifold::NavState::default();
    let (mut a, mut b) = (rng(1), rng(2));
    let mut acc = None::<nalgebra::DMatrix<f64>>;
    let n = 20_000;
    let mut cov = None;
    for _ in 0..n {
        let (ep, ints) = synth_epoch(&x, 0.0, &sats, &geom, &noise, 1.0, 20, (&mut a, &mut b)).unwrap();
        let e = &ep.z - dd_predict(&baseline_function(&x, &geom), &ints, &sats).unwrap();
        let o = &e * e.transpose();
        acc = Some(acc.map_or(o.clone(), |m| m + o));
        cov = Some(ep.cov);
    }
    let s = acc.unwrap() / n as f64;
    let c = cov.unwrap();
    for i in 0..c.nrows() {
        assert!((s[(i, i)] / c[(i, i)] - 1.0).abs() < 0.05, "row {i}");
    }
}

#[test]
fn faults_touch_only_their_rows() {
    let sats = Constellation::default().satellite_set().unwrap();
    let (mut a, mut b) = (rng(3), rng(4));
    let (ep, _) = synth_epoch(
        &Default::default(),
        5.0,
        &sats,
        &AntennaGeometry::default(),
        &NoiseModelParams::default(),
        1.0,
        20,
        (&mut a, &mut b),
    )
    .unwrap();
    let off = ep.sats.block_offsets();
    let phase = apply_faults(ep.clone(), &[Fault::PhaseBias { sat: 2, bias: 0.1, start: 0.0, end: 10.0 }])
        .unwrap()
        .unwrap();
    let d = &phase.z - &ep.z;
    let touched: Vec<usize> = (0..d.len()).filter(|&r| d[r] != 0.0).collect();
    assert_eq!(touched.len(), 2);
    assert!(touched.iter().all(|&r| (off[1]..off[2]).contains(&r) || r >= off[3]));

    let later = apply_faults(ep.clone(), &[Fault::PhaseBias { sat: 2, bias: 0.1, start: 6.0, end: 10.0 }]).unwrap();
    assert_eq!(later.unwrap().z, ep.z);
    assert!(apply_faults(ep.clone(), &[Fault::Outage { start: 5.0, end: 6.0 }]).unwrap().is_none());

    let half = Fault::PhaseShift { baseline: 1, shift: Vector3::new(0.2, 0.0, 0.0), start: 4.0, end: 9.0, ramp: 2.0 };
    let full = Fault::PhaseShift { baseline: 1, shift: Vector3::new(0.1, 0.0, 0.0), start: 0.0, end: 9.0, ramp: 0.0 };
    let h = apply_faults(ep.clone(), &[half]).unwrap().unwrap();
    let f = apply_faults(ep.clone(), &[full]).unwrap().unwrap();
    assert!((&h.z - &f.z).norm() < 1e-12);
    assert_eq!(h.z.rows(0, off[3]), ep.z.rows(0, off[3]));
}

#[test]
fn scenario_json_rejects_unknown_fields() {
    let err = serde_json::from_str::<Scenario>(r#"{"name":"x","sped":3}"#);
    assert!(err.is_err());
    let ok: Scenario = serde_json::from_str(r#"{"name":"x","faults":[{"kind":"outage","start":1,"end":2}]}"#).unwrap();
    assert_eq!(ok.faults.len(), 1);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn monte_carlo_rates_partition(seed in 0u64..1000) {
        let spec = MonteCarloSpec { trials: 40, seed, yaw_sigma_deg: vec![2.0, 60.0], ..MonteCarloSpec::default() };
        let rows = run_monte_carlo(&spec, ApertureTable::builtin()).unwrap();
        prop_assert_eq!(rows.len(), 6);
        for r in rows {
            let floats = (r.p_float * r.trials as f64).round() as usize;
            prop_assert_eq!(r.successes + r.failures + floats, r.trials);
            prop_assert!((r.p_success + r.p_fail + r.p_float - 1.0).abs() <= 4.0 * f64::EPSILON);
        }
    }
}

use abandonq::primitives::{HeavyTrafficParams, PatienceDist, PatienceFamily, Primitive, PrimitiveSpec, ScalarFn};
use abandonq::scaling::DominatingFamily;
use abandonq::simulator::{
    accumulate_segment, simulate, simulate_coupled, simulate_coupled_with, step, InputStreams, SimConfig, SimResult,
};
use proptest::prelude::*;

fn mm1(n: u64, theta: f64, fam: PatienceFamily, arrivals: u64, seed: u64) -> SimConfig {
    let params = HeavyTrafficParams::new(1.0, theta, n).unwrap();
    SimConfig::new(params, Primitive::exponential(), Primitive::exponential(), fam, arrivals, seed)
}

fn lognormal_gamma(n: u64, fam: PatienceFamily, arrivals: u64, seed: u64) -> SimConfig {
    let params = HeavyTrafficParams::new(1.0, 0.5, n).unwrap();
    SimConfig::new(
        params,
        Primitive::new(PrimitiveSpec::Lognormal { sigma: 0.7 }).unwrap(),
        Primitive::new(PrimitiveSpec::Gamma { shape: 2.5 }).unwrap(),
        fam,
        arrivals,
        seed,
    )
}

#[test]
fn no_abandonment_is_the_lindley_recursion() {
    let dir = tempfile::tempdir().unwrap();
    let dump = dir.path().join("path.csv");
    let mut cfg = lognormal_gamma(16, PatienceFamily::no_abandonment(), 200_000, 11);
    cfg.path_dump = Some(dump.clone());
    let res = simulate(&cfg).unwrap();

    let mut streams = InputStreams::new(cfg.seed, &cfg.params);
    let mut w = (0.0f64 - streams.interarrival(&cfg.interarrival)).max(0.0);
    let mut expected = Vec::new();
    for _ in 0..cfg.arrivals_simulated() {
        let s = streams.service(&cfg.service);
        let _ = streams.patience_uniform();
        let u = streams.interarrival(&cfg.interarrival);
        expected.push(w);
        w = (w + s - u).max(0.0);
    }

    let mut rdr = csv::Reader::from_path(&dump).unwrap();
    let got: Vec<f64> = rdr.records().map(|r| r.unwrap()[1].parse().unwrap()).collect();
    assert_eq!(got.len(), expected.len());
    let max_diff = got.iter().zip(&expected).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert_eq!(max_diff, 0.0);
    assert_eq!(res.path.unwrap().v_final, w);
    assert_eq!(res.abandon_fraction.mean, 0.0);
}

#[test]
fn path_dump_has_header_and_event_rows() {
    let dir = tempfile::tempdir().unwrap();
    let dump = dir.path().join("p.csv");
    let mut cfg = mm1(4, 0.0, PatienceFamily::hazard_scaled(ScalarFn::constant(1.0)), 20_000, 3);
    cfg.path_dump = Some(dump.clone());
    simulate(&cfg).unwrap();
    let text = std::fs::read_to_string(&dump).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("event_time,v_pre,v_post,abandoned"));
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|x| x.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len() as u64, cfg.arrivals_simulated());
    assert!(rows.windows(2).all(|w| w[1][0] > w[0][0]));
    for r in &rows {
        if r[3] == 1.0 {
            assert_eq!(r[1], r[2]);
        } else {
            assert!(r[2] > r[1]);
        }
    }
}

#[test]
fn path_conservation() {
    for (k, cfg) in [
        mm1(1, -0.25, PatienceFamily::no_abandonment(), 300_000, 1),
        mm1(100, 0.0, PatienceFamily::hazard_scaled(ScalarFn::constant(1.0)), 300_000, 2),
        lognormal_gamma(25, PatienceFamily::unscaled(PatienceDist::Uniform { upper: 2.0 }), 300_000, 3),
    ]
    .into_iter()
    .enumerate()
    {
        let p = simulate(&cfg).unwrap().path.unwrap();
        let tol = 1e-9 * cfg.num_arrivals as f64;
        assert!((p.busy_time + p.idle_time - p.elapsed).abs() <= tol, "case {k}");
        assert!((p.v_initial + p.accepted_work - p.busy_time - p.v_final).abs() <= tol, "case {k}");
        assert!(p.v_final >= 0.0);
        assert_eq!(p.arrivals, cfg.arrivals_simulated());
    }
}

#[test]
fn conservation_from_a_loaded_start() {
    let mut cfg = mm1(9, 0.0, PatienceFamily::hazard_scaled(ScalarFn::linear(1.0)), 50_000, 8);
    cfg.initial.v0 = 5.0;
    cfg.initial.tau0 = Some(0.25);
    let p = simulate(&cfg).unwrap().path.unwrap();
    assert_eq!(p.v_initial, 5.0);
    assert!((p.v_initial + p.accepted_work - p.busy_time - p.v_final).abs() <= 1e-9 * 50_000.0);
}

#[test]
fn same_seed_same_result() {
    let cfg = lognormal_gamma(25, PatienceFamily::hazard_scaled(ScalarFn::constant(0.5)), 100_000, 77);
    let a = serde_json::to_string(&simulate(&cfg).unwrap()).unwrap();
    let b = serde_json::to_string(&simulate(&cfg).unwrap()).unwrap();
    assert_eq!(a, b);
    let mut other = cfg.clone();
    other.seed = 78;
    assert_ne!(a, serde_json::to_string(&simulate(&other).unwrap()).unwrap());
}

#[test]
fn mm1_mean_virtual_wait() {
    let res = simulate(&mm1(1, -0.25, PatienceFamily::no_abandonment(), 10_000_000, 2024)).unwrap();
    let m = res.moment(1.0).unwrap();
    assert!(m.contains(3.2), "{m:?}");
    // P(V <= x) = 1 - 0.8 e^{-0.25 x}
    for (g, c) in res.cdf_grid.iter().zip(&res.scaled_cdf) {
        assert!((c - (1.0 - 0.8 * (-0.25 * g).exp())).abs() < 0.02, "g = {g}");
    }
}

#[test]
fn zero_work_stays_at_zero() {
    let mut v = 0.0;
    let mut busy = 0.0;
    for j in 0..1000 {
        let out = step(v, 0.3 + (j % 7) as f64 * 0.1, 0.0, 0.5);
        busy += out.busy;
        v = out.v_next;
    }
    assert_eq!(v, 0.0);
    assert_eq!(busy, 0.0);
    assert_eq!(accumulate_segment(0.0, 3.0, &[1.0, 2.0], &[0.0]).moment_integrals, vec![0.0, 0.0]);
    // a loaded start drains at unit rate
    let out = step(2.0, 0.5, 0.0, f64::INFINITY);
    assert_eq!((out.v_next, out.busy), (1.5, 0.5));
}

#[test]
fn mm1m_at_n_100_is_near_the_diffusion() {
    // reflected OU with sigma^2 = 2, H(x) = x: mean sqrt(2/pi)
    let cfg = mm1(100, 0.0, PatienceFamily::hazard_scaled(ScalarFn::constant(1.0)), 2_000_000, 5);
    let res = simulate(&cfg).unwrap();
    let target = (2.0 / std::f64::consts::PI).sqrt();
    assert!((res.moment(1.0).unwrap().mean - target).abs() / target < 0.10);
    assert!(res.abandon_fraction.mean > 0.0);
}

#[test]
fn identity_coupling_gives_identical_paths() {
    let cfg = lognormal_gamma(16, PatienceFamily::hazard_scaled(ScalarFn::constant(1.0)), 100_000, 4);
    let out = simulate_coupled_with(&cfg, |_, d| Ok(d)).unwrap();
    assert!(out.max_violation <= 0.0);
    assert_eq!(out.original.path, out.dominating.path);
    assert_eq!(out.original.scaled_moments, out.dominating.scaled_moments);
    let plain = simulate(&cfg).unwrap();
    assert_eq!(plain.scaled_moments, out.original.scaled_moments);
}

#[test]
fn infinite_patience_coupling_dominates() {
    let cfg = mm1(25, 0.5, PatienceFamily::hazard_scaled(ScalarFn::constant(2.0)), 100_000, 6);
    let out = simulate_coupled_with(&cfg, |_, _| Ok(f64::INFINITY)).unwrap();
    assert!(out.max_violation <= 0.0);
    assert_eq!(out.dominating.abandon_fraction.mean, 0.0);
    let mut free = cfg.clone();
    free.patience = PatienceFamily::no_abandonment();
    assert_eq!(simulate(&free).unwrap().path, out.dominating.path);
}

#[test]
fn capped_coupling_dominates() {
    for (seed, fam) in [
        (1u64, PatienceFamily::hazard_scaled(ScalarFn::constant(1.0))),
        (2, PatienceFamily::capped(ScalarFn::linear(1.0))),
        (3, PatienceFamily::unscaled(PatienceDist::Exponential { rate: 1.0 })),
    ] {
        let cfg = mm1(100, 0.0, fam.clone(), 200_000, seed);
        let dom = DominatingFamily::new(fam, &cfg.params, 0.5).unwrap();
        let out = simulate_coupled(&cfg, &dom).unwrap();
        assert!(out.max_violation <= 1e-12, "seed {seed}: {}", out.max_violation);
        assert!(out.epochs_checked > 2 * 200_000 - 1000);
        assert!(out.dominating.abandon_fraction.mean <= out.original.abandon_fraction.mean);
    }
}

#[test]
fn pooling_is_associative() {
    let runs: Vec<SimResult> = (0..3)
        .map(|s| simulate(&mm1(16, 0.0, PatienceFamily::hazard_scaled(ScalarFn::constant(1.0)), 60_000, s)).unwrap())
        .collect();
    let left = runs[0].merge(&runs[1]).unwrap().merge(&runs[2]).unwrap();
    let right = runs[0].merge(&runs[1].merge(&runs[2]).unwrap()).unwrap();
    let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(1e-300);
    for (a, b) in left.scaled_moments.iter().zip(&right.scaled_moments) {
        assert!(rel(a.estimate.mean, b.estimate.mean) <= 1e-12);
        assert!(rel(a.estimate.std_err, b.estimate.std_err) <= 1e-12);
    }
    assert!(rel(left.abandon_fraction.mean, right.abandon_fraction.mean) <= 1e-12);
    for (a, b) in left.scaled_cdf.iter().zip(&right.scaled_cdf) {
        assert!((a - b).abs() <= 1e-12);
    }
    assert_eq!(left.seeds, vec![0, 1, 2]);
    assert_eq!(left.batches, 3 * runs[0].batches);
    assert!(left.path.is_none());
}

#[test]
fn merging_different_n_fails() {
    let fam = PatienceFamily::hazard_scaled(ScalarFn::constant(1.0));
    let a = simulate(&mm1(4, 0.0, fam.clone(), 30_000, 1)).unwrap();
    let b = simulate(&mm1(9, 0.0, fam, 30_000, 1)).unwrap();
    assert!(a.merge(&b).is_err());
    assert!(SimResult::pool(&[]).is_err());
}

#[test]
fn invalid_configs_are_rejected() {
    let fam = PatienceFamily::no_abandonment();
    let mut c = mm1(1, 0.0, fam.clone(), 1000, 1);
    c.num_batches = 1;
    assert!(simulate(&c).is_err());
    let mut c = mm1(1, 0.0, fam.clone(), 1000, 1);
    c.burn_in = 1000;
    assert!(simulate(&c).is_err());
    let mut c = mm1(1, 0.0, fam.clone(), 1000, 1);
    c.cdf_grid = vec![1.0, 0.5];
    assert!(simulate(&c).is_err());
    // mu^n = 1 - 2 < 0
    assert!(HeavyTrafficParams::new(1.0, 2.0, 1).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn results_are_well_formed(seed in any::<u64>(), n in 1u64..400, theta in -1.0f64..1.0, beta in 0.2f64..3.0) {
        let cfg = mm1(n, theta, PatienceFamily::hazard_scaled(ScalarFn::constant(beta)), 40_000, seed);
        prop_assume!(cfg.params.validate().is_ok());
        let r = simulate(&cfg).unwrap();
        prop_assert!(r.scaled_cdf.windows(2).all(|w| w[1] >= w[0]));
        prop_assert!(r.scaled_cdf.iter().all(|c| (0.0..=1.0).contains(c)));
        prop_assert!(r.scaled_moments.iter().all(|m| m.estimate.mean >= 0.0 && m.estimate.std_err >= 0.0));
        prop_assert!((0.0..=1.0).contains(&r.abandon_fraction.mean));
        prop_assert!(r.sim_time > 0.0);
    }

    #[test]
    fn step_keeps_workload_nonnegative(v in 0.0f64..10.0, u in 0.0f64..10.0, s in 0.0f64..10.0, d in 0.0f64..20.0) {
        let out = step(v, u, s, d);
        prop_assert!(out.v_next >= 0.0);
        prop_assert_eq!(out.abandoned, v >= d);
        prop_assert!((out.v_post - out.busy - out.v_next).abs() <= 1e-12 * (1.0 + out.v_post));
        prop_assert!(out.busy <= u);
    }
}

mod common;

use ecp_se::ecp::{PmuVoltageBounds, Problem};
use ecp_se::grid::build_bus_admittance;
use ecp_se::solver::{estimate, update_barrier, SolverConfig, Status};
use ecp_se::synth::NoiseProfile;
use ecp_se::verify::{certify, Tolerances};
use ecp_se::Error;
use proptest::prelude::*;

#[test]
fn exact_measurements_recover_the_truth() {
    for (name, pmus) in [("case14", 3), ("case118", 12)] {
        let net = common::case(name);
        let truth = common::truth(&net);
        let ms = common::measurements(&net, &truth, pmus, NoiseProfile::ZERO, 1, 0);
        let est = estimate(&net, &ms, &SolverConfig::default()).unwrap();
        assert_eq!(est.report.status, Status::Converged, "{name}");
        assert!(est.report.objective_final <= 1e-10, "{name}");
        let dev = common::voltage_deviation(&est.primal.v_re, &est.primal.v_im, &truth);
        assert!(dev <= 1e-6, "{name}: deviation {dev}");
    }
}

#[test]
fn exact_full_pmu_coverage_is_linear() {
    for name in ["case14", "case118"] {
        let net = common::case(name);
        let truth = common::truth(&net);
        let ms = common::measurements(&net, &truth, net.buses.len(), NoiseProfile::ZERO, 1, 0);
        let est = estimate(&net, &ms, &SolverConfig::default()).unwrap();
        assert_eq!(est.report.status, Status::Converged);
        assert!(
            est.report.iterations <= 2,
            "{name}: {} iterations",
            est.report.iterations
        );
    }
}

#[test]
fn repeated_solves_are_bit_identical() {
    let net = common::case("case14");
    let truth = common::truth(&net);
    let ms = common::measurements(&net, &truth, 3, NoiseProfile::TABLE3, 7, 2);
    let a = estimate(&net, &ms, &SolverConfig::default()).unwrap();
    let b = estimate(&net, &ms, &SolverConfig::default()).unwrap();
    assert_eq!(a.primal, b.primal);
    assert_eq!(a.dual, b.dual);
    assert_eq!(a.report.residual_history, b.report.residual_history);
}

#[test]
fn converged_noisy_solves_certify() {
    for (name, pmus) in [("case14", 3), ("case118", 12)] {
        let net = common::case(name);
        let truth = common::truth(&net);
        let y = build_bus_admittance(&net).unwrap();
        for mode in [PmuVoltageBounds::Limited, PmuVoltageBounds::Multipliers] {
            for stream in 0..3 {
                let ms = common::measurements(&net, &truth, pmus, NoiseProfile::TABLE3, 2, stream);
                let config = SolverConfig {
                    pmu_voltage_bounds: mode,
                    ..SolverConfig::default()
                };
                let est = estimate(&net, &ms, &config).unwrap();
                assert_eq!(
                    est.report.status,
                    Status::Converged,
                    "{name} {mode:?} stream {stream}"
                );
                let prob = Problem::new(&y, &ms, mode).unwrap();
                let cert = certify(&prob, &est.primal, &est.dual, &Tolerances::default()).unwrap();
                assert!(cert.passed, "{name} {mode:?} stream {stream}: {cert:?}");
            }
        }
    }
}

#[test]
fn bound_treatments_agree() {
    let net = common::case("case14");
    let truth = common::truth(&net);
    let ms = common::measurements(&net, &truth, 3, NoiseProfile::TABLE3, 4, 0);
    let solve = |mode| {
        let config = SolverConfig {
            pmu_voltage_bounds: mode,
            tol_eps: 1e-10,
            ..SolverConfig::default()
        };
        estimate(&net, &ms, &config).unwrap().primal
    };
    let (a, b) = (
        solve(PmuVoltageBounds::Limited),
        solve(PmuVoltageBounds::Multipliers),
    );
    let dev = a
        .v_re
        .iter()
        .zip(&b.v_re)
        .chain(a.v_im.iter().zip(&b.v_im))
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    assert!(dev < 1e-5, "{dev}");
}

#[test]
fn iteration_cap_reports_max_iter() {
    let net = common::case("case14");
    let truth = common::truth(&net);
    let ms = common::measurements(&net, &truth, 3, NoiseProfile::TABLE3, 1, 0);
    let config = SolverConfig {
        max_iter: 1,
        ..SolverConfig::default()
    };
    let est = estimate(&net, &ms, &config).unwrap();
    assert_eq!(est.report.status, Status::MaxIter);
    assert_eq!(est.report.iterations, 1);
}

#[test]
fn missing_pmus_are_unobservable() {
    let net = common::case("case14");
    let truth = common::truth(&net);
    let ms = common::measurements(&net, &truth, 0, NoiseProfile::TABLE3, 1, 0);
    assert!(matches!(
        estimate(&net, &ms, &SolverConfig::default()),
        Err(Error::Unobservable(_))
    ));
}

proptest! {
    #[test]
    fn barrier_never_increases(
        pairs in prop::collection::vec((1e-12..1e2f64, -1e2..-1e-12f64), 1..40),
        eps in 1e-12..1.0f64,
    ) {
        let (mu, ib): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let next = update_barrier(&mu, &ib, eps, &SolverConfig::default());
        prop_assert!(next <= eps);
        prop_assert!(next >= 0.0);
    }
}

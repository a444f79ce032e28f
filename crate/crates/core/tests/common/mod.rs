#![allow(dead_code)]

use std::path::PathBuf;

use ecp_se::case_io::{parse_matpower, CaseNetwork, MeasurementSet};
use ecp_se::powerflow::{solve_powerflow, TruthState};
use ecp_se::synth::{synthesize_measurements, NoiseProfile, Placement, SynthOptions};

pub fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

pub fn fixture(name: &str) -> String {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name);
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

pub fn case(name: &str) -> CaseNetwork {
    let text = std::fs::read_to_string(data_dir().join(format!("{name}.m"))).unwrap();
    parse_matpower(&text).unwrap()
}

pub fn truth(net: &CaseNetwork) -> TruthState {
    solve_powerflow(net, 1e-12, 30).unwrap()
}

/// Measurements on the `pmus` highest-degree buses plus RTUs on every other
/// loaded bus.
pub fn measurements(
    net: &CaseNetwork,
    truth: &TruthState,
    pmus: usize,
    profile: NoiseProfile,
    seed: u64,
    stream: u64,
) -> MeasurementSet {
    let placement = Placement::by_degree(net, pmus, seed);
    let opts = SynthOptions {
        stream,
        ..SynthOptions::default()
    };
    synthesize_measurements(net, truth, &placement, &profile, &opts).unwrap()
}

/// Largest deviation of the bus voltages from the truth.
pub fn voltage_deviation(v_re: &[f64], v_im: &[f64], truth: &TruthState) -> f64 {
    v_re.iter()
        .zip(&truth.v_re)
        .chain(v_im.iter().zip(&truth.v_im))
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
}

/// Slack bus 1 feeding a 0.5 + j0.2 load at bus 2 over one line.
pub fn two_bus() -> CaseNetwork {
    use ecp_se::case_io::{Branch, Bus, BusType, Gen};
    let bus = |id, kind, pd, qd| Bus {
        id,
        kind,
        pd,
        qd,
        gs: 0.0,
        bs: 0.0,
        vm: 1.0,
        va: 0.0,
    };
    CaseNetwork {
        base_mva: 100.0,
        buses: vec![
            bus(1, BusType::Slack, 0.0, 0.0),
            bus(2, BusType::Pq, 0.5, 0.2),
        ],
        branches: vec![Branch {
            from: 1,
            to: 2,
            r: 0.02,
            x: 0.1,
            b: 0.01,
            tap: 1.0,
            shift: 0.0,
            in_service: true,
        }],
        gens: vec![Gen {
            bus: 1,
            pg: 0.0,
            qg: 0.0,
            vset: 1.0,
            qmin: -1.0,
            qmax: 1.0,
            in_service: true,
        }],
    }
}

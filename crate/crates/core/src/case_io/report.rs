use serde::{Deserialize, Serialize};

use crate::case_io::MeasurementSet;
use crate::ecp::{DualState, PmuVoltageBounds, PrimalState};
use crate::error::{Error, Result};
use crate::metrics::{BenchSummary, Metrics};
use crate::solver::{Estimate, Status};
use crate::sosc::SoscVerdict;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RtuEstimate {
    pub bus: u32,
    pub g: f64,
    pub b: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PmuEstimate {
    pub bus: u32,
    /// `[re, im]`
    pub v: [f64; 2],
    pub i: [f64; 2],
}

/// Estimated state keyed by bus id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportState {
    pub bus_ids: Vec<u32>,
    pub v_re: Vec<f64>,
    pub v_im: Vec<f64>,
    pub rtu: Vec<RtuEstimate>,
    pub pmu: Vec<PmuEstimate>,
}

impl ReportState {
    pub fn new(primal: &PrimalState, bus_ids: &[u32], ms: &MeasurementSet) -> Self {
        Self {
            bus_ids: bus_ids.to_vec(),
            v_re: primal.v_re.clone(),
            v_im: primal.v_im.clone(),
            rtu: ms
                .rtu
                .iter()
                .enumerate()
                .map(|(r, m)| RtuEstimate {
                    bus: m.bus,
                    g: primal.g_rtu[r],
                    b: primal.b_rtu[r],
                })
                .collect(),
            pmu: ms
                .pmu
                .iter()
                .enumerate()
                .map(|(p, m)| PmuEstimate {
                    bus: m.bus,
                    v: [primal.v_pmu_re[p], primal.v_pmu_im[p]],
                    i: [primal.i_pmu_re[p], primal.i_pmu_im[p]],
                })
                .collect(),
        }
    }

    /// Back to solver order. The device lists must follow `ms`.
    pub fn to_primal(&self, ms: &MeasurementSet) -> Result<PrimalState> {
        let rtu_buses = self.rtu.iter().map(|r| r.bus);
        let pmu_buses = self.pmu.iter().map(|p| p.bus);
        if !rtu_buses.eq(ms.rtu.iter().map(|r| r.bus))
            || !pmu_buses.eq(ms.pmu.iter().map(|p| p.bus))
        {
            return Err(Error::InvalidArgument(
                "state devices do not match the measurement document".into(),
            ));
        }
        Ok(PrimalState {
            v_re: self.v_re.clone(),
            v_im: self.v_im.clone(),
            g_rtu: self.rtu.iter().map(|r| r.g).collect(),
            b_rtu: self.rtu.iter().map(|r| r.b).collect(),
            v_pmu_re: self.pmu.iter().map(|p| p.v[0]).collect(),
            v_pmu_im: self.pmu.iter().map(|p| p.v[1]).collect(),
            i_pmu_re: self.pmu.iter().map(|p| p.i[0]).collect(),
            i_pmu_im: self.pmu.iter().map(|p| p.i[1]).collect(),
        })
    }
}

/// Result document of one estimate. `sigma_ss`/`sigma_max` are present when
/// a reference state was available, `sosc` when the check was run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Report {
    pub status: Status,
    pub iterations: usize,
    pub kkt_residual_inf: f64,
    pub epsilon: f64,
    pub objective: f64,
    pub sigma_ss: Option<f64>,
    pub sigma_max: Option<f64>,
    pub runtime_s: f64,
    pub sosc: Option<SoscVerdict>,
    /// Needed to rebuild the program when the state is checked later.
    pub pmu_voltage_bounds: PmuVoltageBounds,
    pub state: ReportState,
    pub dual: DualState,
    pub residual_history: Vec<f64>,
}

impl Report {
    pub fn new(
        est: &Estimate,
        bus_ids: &[u32],
        ms: &MeasurementSet,
        metrics: Option<&Metrics>,
        sosc: Option<SoscVerdict>,
        pmu_voltage_bounds: PmuVoltageBounds,
    ) -> Self {
        let r = &est.report;
        Self {
            status: r.status,
            iterations: r.iterations,
            kkt_residual_inf: r.kkt_residual_inf,
            epsilon: r.epsilon_final,
            objective: r.objective_final,
            sigma_ss: metrics.map(|m| m.sigma_ss),
            sigma_max: metrics.map(|m| m.sigma_max),
            runtime_s: r.runtime_s,
            sosc,
            pmu_voltage_bounds,
            state: ReportState::new(&est.primal, bus_ids, ms),
            dual: est.dual.clone(),
            residual_history: r.residual_history.clone(),
        }
    }
}

pub fn write_report(report: &Report) -> String {
    serde_json::to_string_pretty(report).expect("report serializes")
}

pub fn parse_report(text: &str) -> Result<Report> {
    Ok(serde_json::from_str(text)?)
}

pub fn write_bench_report(summary: &BenchSummary) -> String {
    serde_json::to_string_pretty(summary).expect("summary serializes")
}

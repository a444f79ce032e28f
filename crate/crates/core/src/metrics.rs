//! Accuracy indicators and the multi-trial benchmark.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::case_io::CaseNetwork;
use crate::ecp::PrimalState;
use crate::error::{Error, Result};
use crate::grid::{build_bus_admittance, AdmittancePair};
use crate::powerflow::{solve_powerflow, TruthState, DEFAULT_MAX_ITER, DEFAULT_TOL};
use crate::solver::{estimate_with_admittance, SolverConfig, Status};
use crate::synth::{
    synthesize_measurements, KappaDistribution, NoiseProfile, Placement, SynthOptions,
};

fn check_dims(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::Dimension {
            expected: b.len(),
            got: a.len(),
        });
    }
    Ok(())
}

/// Sum of squared componentwise deviations.
pub fn sigma_ss(est: &[f64], truth: &[f64]) -> Result<f64> {
    check_dims(est, truth)?;
    Ok(est.iter().zip(truth).map(|(a, b)| (a - b) * (a - b)).sum())
}

/// Largest absolute componentwise deviation.
pub fn sigma_max(est: &[f64], truth: &[f64]) -> Result<f64> {
    check_dims(est, truth)?;
    Ok(est
        .iter()
        .zip(truth)
        .fold(0.0, |m, (a, b)| f64::max(m, (a - b).abs())))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub sigma_ss: f64,
    pub sigma_max: f64,
    pub runtime_s: f64,
}

/// What enters the deviation vector. Bus voltages always; the RTU
/// admittances only on request, compared against their true values
/// at the RTU buses.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricScope {
    pub include_admittance: bool,
}

/// Flattens an estimate and the truth into comparable vectors.
pub fn comparison_vectors(
    est: &PrimalState,
    truth: &TruthState,
    rtu_buses: &[usize],
    scope: MetricScope,
) -> Result<(Vec<f64>, Vec<f64>)> {
    check_dims(&est.v_re, &truth.v_re)?;
    check_dims(&est.v_im, &truth.v_im)?;
    let mut e: Vec<f64> = est.v_re.iter().chain(&est.v_im).copied().collect();
    let mut t: Vec<f64> = truth.v_re.iter().chain(&truth.v_im).copied().collect();
    if scope.include_admittance {
        if est.g_rtu.len() != rtu_buses.len() || est.b_rtu.len() != rtu_buses.len() {
            return Err(Error::Dimension {
                expected: rtu_buses.len(),
                got: est.g_rtu.len(),
            });
        }
        for (r, &k) in rtu_buses.iter().enumerate() {
            // the RTU current is −Ybus·V = (g − jb)·V
            let y = -(truth.current(k) / truth.voltage(k));
            e.extend([est.g_rtu[r], est.b_rtu[r]]);
            t.extend([y.re, -y.im]);
        }
    }
    Ok((e, t))
}

pub fn metrics(
    est: &PrimalState,
    truth: &TruthState,
    rtu_buses: &[usize],
    scope: MetricScope,
    runtime_s: f64,
) -> Result<Metrics> {
    let (e, t) = comparison_vectors(est, truth, rtu_buses, scope)?;
    Ok(Metrics {
        sigma_ss: sigma_ss(&e, &t)?,
        sigma_max: sigma_max(&e, &t)?,
        runtime_s,
    })
}

/// How benchmark trials are scheduled.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Execution {
    Sequential,
    /// On the rayon pool. Runs sequentially when built without the
    /// `parallel` feature.
    #[default]
    Parallel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchOptions {
    pub trials: usize,
    pub seed: u64,
    pub g_pmu: f64,
    pub kappa: KappaDistribution,
    pub scope: MetricScope,
    pub execution: Execution,
}

impl Default for BenchOptions {
    fn default() -> Self {
        Self {
            trials: 50,
            seed: 0,
            g_pmu: crate::synth::DEFAULT_G_PMU,
            kappa: KappaDistribution::Uniform,
            scope: MetricScope::default(),
            execution: Execution::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    /// Absent when the trial failed before the solver returned.
    pub status: Option<Status>,
    pub iterations: usize,
    pub kkt_residual_inf: Option<f64>,
    pub metrics: Option<Metrics>,
    pub error: Option<String>,
}

impl TrialRecord {
    pub fn converged(&self) -> bool {
        self.status == Some(Status::Converged)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchSummary {
    pub trials: usize,
    pub seed: u64,
    pub pmu_buses: Vec<u32>,
    pub rtu_buses: Vec<u32>,
    pub failures: usize,
    /// Means over converged trials; absent when none converged.
    pub mean_sigma_ss: Option<f64>,
    pub mean_sigma_max: Option<f64>,
    pub mean_runtime_s: Option<f64>,
    pub records: Vec<TrialRecord>,
}

/// Everything shared by the trials of one benchmark.
struct TrialContext<'a> {
    net: &'a CaseNetwork,
    y: AdmittancePair,
    truth: TruthState,
    placement: Placement,
    profile: &'a NoiseProfile,
    config: &'a SolverConfig,
    opts: &'a BenchOptions,
}

impl TrialContext<'_> {
    /// One trial: draw, estimate, score.
    fn run(&self, trial: usize) -> TrialRecord {
        let Self {
            net,
            y,
            truth,
            placement,
            profile,
            config,
            opts,
        } = self;
        let mut record = TrialRecord {
            trial,
            status: None,
            iterations: 0,
            kkt_residual_inf: None,
            metrics: None,
            error: None,
        };
        let synth = SynthOptions {
            g_pmu: opts.g_pmu,
            kappa: opts.kappa,
            stream: trial as u64,
        };
        let outcome =
            synthesize_measurements(net, truth, placement, profile, &synth).and_then(|ms| {
                let start = Instant::now();
                let est = estimate_with_admittance(y, &ms, config)?;
                let runtime = start.elapsed().as_secs_f64();
                let rtu_buses: Vec<usize> = ms.rtu.iter().map(|r| y.bus_index[&r.bus]).collect();
                let m = metrics(&est.primal, truth, &rtu_buses, opts.scope, runtime)?;
                Ok((est.report, m))
            });
        match outcome {
            Ok((report, m)) => {
                record.status = Some(report.status);
                record.iterations = report.iterations;
                record.kkt_residual_inf = Some(report.kkt_residual_inf);
                record.metrics = Some(m);
            }
            Err(e) => record.error = Some(e.to_string()),
        }
        record
    }
}

/// Solves the power flow once, then runs `trials` independent noisy
/// estimates on a fixed placement. Trial `t` draws its noise from stream `t`
/// of the placement seed.
pub fn benchmark(
    net: &CaseNetwork,
    placement: &Placement,
    profile: &NoiseProfile,
    config: &SolverConfig,
    opts: &BenchOptions,
) -> Result<BenchSummary> {
    if opts.trials == 0 {
        return Err(Error::InvalidArgument("trials must be at least 1".into()));
    }
    config.validate()?;
    profile.validate()?;
    placement.validate(net)?;
    let ctx = TrialContext {
        net,
        y: build_bus_admittance(net)?,
        truth: solve_powerflow(net, DEFAULT_TOL, DEFAULT_MAX_ITER)?,
        placement: Placement {
            seed: opts.seed,
            ..placement.clone()
        },
        profile,
        config,
        opts,
    };
    let trial = |t| ctx.run(t);

    let mut records: Vec<TrialRecord> = match opts.execution {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            (0..opts.trials).into_par_iter().map(trial).collect()
        }
        _ => (0..opts.trials).map(trial).collect(),
    };
    records.sort_by_key(|r| r.trial);

    let ok: Vec<&Metrics> = records
        .iter()
        .filter(|r| r.converged())
        .filter_map(|r| r.metrics.as_ref())
        .collect();
    let mean = |f: fn(&Metrics) -> f64| {
        (!ok.is_empty()).then(|| ok.iter().map(|m| f(m)).sum::<f64>() / ok.len() as f64)
    };
    Ok(BenchSummary {
        trials: opts.trials,
        seed: opts.seed,
        pmu_buses: ctx.placement.pmu_buses.iter().copied().collect(),
        rtu_buses: ctx.placement.rtu_buses.iter().copied().collect(),
        failures: records.len() - ok.len(),
        mean_sigma_ss: mean(|m| m.sigma_ss),
        mean_sigma_max: mean(|m| m.sigma_max),
        mean_runtime_s: mean(|m| m.runtime_s),
        records,
    })
}

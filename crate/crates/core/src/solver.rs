//! Damped primal-dual interior-point Newton iteration on the combined
//! primal/adjoint circuit.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::case_io::{CaseNetwork, MeasurementSet};
use crate::ecp::{DualState, KktSystem, PmuVoltageBounds, PrimalState, Problem, VarKind};
use crate::error::{Error, Result};
use crate::grid::{build_bus_admittance, AdmittancePair};
use crate::sparse::{inf_norm, SparseLu};

/// Starting point for the bus voltages.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitMode {
    /// `1∠0` at every bus.
    Flat,
    /// Measured phasor at PMU buses, `1∠0` elsewhere.
    Seeded,
    /// Bus voltages of the primal circuit with every measurement element
    /// held at its measured value. The circuit is linear in the voltages, so
    /// this start satisfies KCL exactly.
    #[default]
    Circuit,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub tol_kkt: f64,
    pub tol_eps: f64,
    pub max_iter: usize,
    pub sigma_centering: f64,
    pub ftb_factor: f64,
    pub v_step_limit: f64,
    pub init_mode: InitMode,
    pub pmu_voltage_bounds: PmuVoltageBounds,
    pub mu_init: f64,
    /// Lower bound on the starting barrier parameter.
    pub eps_init_floor: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol_kkt: 1e-6,
            tol_eps: 1e-8,
            max_iter: 200,
            sigma_centering: 0.1,
            ftb_factor: 0.995,
            v_step_limit: 0.1,
            init_mode: InitMode::default(),
            pmu_voltage_bounds: PmuVoltageBounds::default(),
            mu_init: 1e-2,
            eps_init_floor: 0.0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.into()));
        if !(self.tol_kkt > 0.0 && self.tol_eps > 0.0) {
            return bad("tolerances must be positive");
        }
        if !(self.sigma_centering > 0.0 && self.sigma_centering < 1.0) {
            return bad("sigma_centering must lie in (0, 1)");
        }
        if !(self.ftb_factor > 0.0 && self.ftb_factor < 1.0) {
            return bad("ftb_factor must lie in (0, 1)");
        }
        if !(self.v_step_limit > 0.0) {
            return bad("v_step_limit must be positive");
        }
        if !(self.mu_init > 0.0) {
            return bad("mu_init must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Converged,
    MaxIter,
    Singular,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverReport {
    pub status: Status,
    pub iterations: usize,
    pub kkt_residual_inf: f64,
    pub epsilon_final: f64,
    pub objective_final: f64,
    pub residual_history: Vec<f64>,
    pub runtime_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    pub primal: PrimalState,
    pub dual: DualState,
    pub report: SolverReport,
}

/// Flat iterate `(x, λ, μ, ε)`.
#[derive(Debug, Clone)]
struct Iterate {
    x: Vec<f64>,
    lam: Vec<f64>,
    mu: Vec<f64>,
    eps: f64,
}

/// Moves `value` strictly inside `[lo, hi]` if it sits on or beyond a face.
fn nudge_inside(value: f64, lo: f64, hi: f64) -> f64 {
    let margin = 1e-3 * (hi - lo);
    value.clamp(lo + margin, hi - margin)
}

fn initial_iterate(prob: &Problem, config: &SolverConfig) -> Result<Iterate> {
    let ms = prob.ms;
    if ms.is_empty() {
        return Err(Error::InvalidMeasurements(
            "measurement set is empty".into(),
        ));
    }
    let l = prob.layout;
    let mut x = vec![0.0; l.nx];
    x[..l.n].fill(1.0);
    if config.init_mode != InitMode::Flat {
        for (p, m) in ms.pmu.iter().enumerate() {
            let k = prob.pmu_bus[p];
            x[l.v_re(k)] = m.v_re;
            x[l.v_im(k)] = m.v_im;
        }
    }
    for (r, m) in ms.rtu.iter().enumerate() {
        x[l.rtu_g(r)] = m.g_m;
        x[l.rtu_b(r)] = m.b_m;
    }
    for (p, m) in ms.pmu.iter().enumerate() {
        for (c, v) in [m.v_re, m.v_im, m.i_re, m.i_im].into_iter().enumerate() {
            x[l.pmu(p, c)] = v;
        }
    }
    for (j, kind) in prob.kinds.iter().enumerate() {
        match *kind {
            VarKind::Barrier { lo, hi, .. } | VarKind::Limited { lo, hi } => {
                x[j] = nudge_inside(x[j], lo, hi)
            }
            VarKind::Fixed(c) | VarKind::Pinned { at: c, .. } => x[j] = c,
            VarKind::Free => {}
        }
    }
    if config.init_mode == InitMode::Circuit {
        if let Some(v) = circuit_voltages(prob, &x) {
            x[..2 * l.n].copy_from_slice(&v);
        }
    }
    let mu = vec![config.mu_init; l.m];
    let eps = if l.m == 0 {
        0.0
    } else {
        let ib = prob.bound_residual(&x);
        complementarity_average(&mu, &ib).max(config.eps_init_floor)
    };
    Ok(Iterate {
        x,
        lam: vec![0.0; 2 * l.n],
        mu,
        eps,
    })
}

/// Solves the KCL rows for the bus voltages with every other variable held
/// at its value in `x`. `None` when the voltage block is singular.
fn circuit_voltages(prob: &Problem, x: &[f64]) -> Option<Vec<f64>> {
    let nv = 2 * prob.layout.n;
    let mut x0 = x.to_vec();
    x0[..nv].fill(0.0);
    let rhs: Vec<f64> = prob.primal_residual(&x0).into_iter().map(|r| -r).collect();
    let block: Vec<_> = prob
        .constraint_jacobian(x)
        .into_iter()
        .filter(|&(_, j, _)| j < nv)
        .collect();
    let a = crate::sparse::CscMatrix::from_triplets(nv, nv, &block);
    let mut lu = SparseLu::new();
    lu.factor(&a).ok()?;
    let (v, rel) = lu.solve_refined(&a, &rhs, 1e-12, 3).ok()?;
    (rel <= 1e-8).then_some(v)
}

/// Starting primal and dual states for `prob`.
pub fn initialize(prob: &Problem, config: &SolverConfig) -> Result<(PrimalState, DualState)> {
    let it = initial_iterate(prob, config)?;
    Ok((
        prob.unpack(&it.x),
        prob.unpack_dual(&it.lam, &it.mu, it.eps),
    ))
}

fn complementarity_average(mu: &[f64], ib: &[f64]) -> f64 {
    if mu.is_empty() {
        return 0.0;
    }
    mu.iter().zip(ib).map(|(m, b)| m * -b).sum::<f64>() / mu.len() as f64
}

/// Solves the linearized KKT system by sparse LU with iterative refinement.
/// The factorization's symbolic analysis is kept in `lu` across calls.
pub fn newton_step(kkt: &KktSystem, lu: &mut SparseLu) -> Result<Vec<f64>> {
    lu.factor(&kkt.matrix)?;
    let (step, rel) = lu.solve_refined(&kkt.matrix, &kkt.rhs, 1e-12, 3)?;
    if rel > 1e-6 {
        return Err(Error::Singular(format!(
            "linear solve residual {rel:.2e} relative; the system is numerically singular"
        )));
    }
    Ok(step)
}

/// Step length keeping bounded primals strictly inside their boxes and `μ`
/// strictly positive (fraction to the boundary), and capping every voltage
/// component change at `v_step_limit`.
pub fn damp_step(
    prob: &Problem,
    x: &[f64],
    mu: &[f64],
    step: &[f64],
    config: &SolverConfig,
) -> f64 {
    let l = prob.layout;
    let tau = config.ftb_factor;
    let mut alpha: f64 = 1.0;
    for (j, kind) in prob.kinds.iter().enumerate() {
        let VarKind::Barrier { lo, hi, .. } = *kind else {
            continue;
        };
        let dx = step[j];
        if dx > 0.0 {
            alpha = alpha.min(tau * (hi - x[j]) / dx);
        } else if dx < 0.0 {
            alpha = alpha.min(tau * (lo - x[j]) / dx);
        }
    }
    for (k, &m) in mu.iter().enumerate() {
        let dm = step[l.mu(k)];
        if dm < 0.0 {
            alpha = alpha.min(tau * m / -dm);
        }
    }
    let dv = (0..l.nx)
        .filter(|&j| l.is_voltage(j))
        .fold(0.0f64, |acc, j| acc.max(step[j].abs()));
    if dv > config.v_step_limit {
        alpha = alpha.min(config.v_step_limit / dv);
    }
    alpha
}

/// `ε ← min(ε, σ · mean(μ ∘ (−I_b)))`; zero when there are no inequalities.
pub fn update_barrier(mu: &[f64], ib: &[f64], epsilon: f64, config: &SolverConfig) -> f64 {
    if mu.is_empty() {
        return 0.0;
    }
    epsilon.min(config.sigma_centering * complementarity_average(mu, ib))
}

/// Runs the estimator on a parsed case.
pub fn estimate(net: &CaseNetwork, ms: &MeasurementSet, config: &SolverConfig) -> Result<Estimate> {
    let y = build_bus_admittance(net)?;
    estimate_with_admittance(&y, ms, config)
}

/// Runs the estimator on a prebuilt admittance matrix, so repeated solves on
/// one network share it.
pub fn estimate_with_admittance(
    y: &AdmittancePair,
    ms: &MeasurementSet,
    config: &SolverConfig,
) -> Result<Estimate> {
    config.validate()?;
    if ms.is_empty() {
        return Err(Error::InvalidMeasurements(
            "measurement set is empty".into(),
        ));
    }
    if ms.pmu.is_empty() {
        return Err(Error::Unobservable(
            "no PMU measurements; the voltage reference is undetermined".into(),
        ));
    }
    let prob = Problem::new(y, ms, config.pmu_voltage_bounds)?;
    solve(&prob, config)
}

/// Releases pinned variables whose implied multiplier points into the box.
fn release_pins(prob: &mut Problem, it: &Iterate, tol: f64) {
    if !prob
        .kinds
        .iter()
        .any(|k| matches!(k, VarKind::Pinned { .. }))
    {
        return;
    }
    let adj = prob.adjoint_residual(&it.x, &it.lam, &it.mu);
    for (j, kind) in prob.kinds.iter_mut().enumerate() {
        if let VarKind::Pinned { lo, hi, at } = *kind {
            // at the upper face the implied multiplier is −adj, at the lower +adj
            let implied = if at == hi { -adj[j] } else { adj[j] };
            if implied < -tol {
                *kind = VarKind::Limited { lo, hi };
            }
        }
    }
}

/// Clamps limited variables into their boxes, pinning those that land on a face.
fn clamp_limited(prob: &mut Problem, x: &mut [f64]) {
    for (j, kind) in prob.kinds.iter_mut().enumerate() {
        if let VarKind::Limited { lo, hi } = *kind {
            if x[j] >= hi || x[j] <= lo {
                let at = if x[j] >= hi { hi } else { lo };
                x[j] = at;
                *kind = VarKind::Pinned { lo, hi, at };
            }
        }
    }
}

/// Newton iteration from the configured starting point.
pub fn solve(prob: &Problem, config: &SolverConfig) -> Result<Estimate> {
    config.validate()?;
    let start = Instant::now();
    let mut prob = prob.clone();
    let l = prob.layout;
    let mut it = initial_iterate(&prob, config)?;
    let mut lu = SparseLu::new();
    let mut history = Vec::new();
    let mut iterations = 0;

    let status = loop {
        release_pins(&mut prob, &it, config.tol_kkt);
        let res = prob.kkt_residual(&it.x, &it.lam, &it.mu, it.eps);
        let norm = inf_norm(&res);
        history.push(norm);
        if norm <= config.tol_kkt && it.eps <= config.tol_eps {
            break Status::Converged;
        }
        if iterations >= config.max_iter || !norm.is_finite() {
            break Status::MaxIter;
        }
        let kkt = prob.assemble_kkt(&it.x, &it.lam, &it.mu, it.eps);
        let step = match newton_step(&kkt, &mut lu) {
            Ok(s) => s,
            Err(Error::Singular(_)) => break Status::Singular,
            Err(e) => return Err(e),
        };
        let alpha = damp_step(&prob, &it.x, &it.mu, &step, config);
        for (j, v) in it.x.iter_mut().enumerate() {
            *v += alpha * step[j];
        }
        clamp_limited(&mut prob, &mut it.x);
        for (i, v) in it.lam.iter_mut().enumerate() {
            *v += alpha * step[l.lam(i)];
        }
        for (k, v) in it.mu.iter_mut().enumerate() {
            *v += alpha * step[l.mu(k)];
        }
        let ib = prob.bound_residual(&it.x);
        it.eps = update_barrier(&it.mu, &ib, it.eps, config);
        iterations += 1;
    };

    let report = SolverReport {
        status,
        iterations,
        kkt_residual_inf: *history.last().unwrap_or(&f64::NAN),
        epsilon_final: it.eps,
        objective_final: prob.objective(&it.x),
        residual_history: history,
        runtime_s: start.elapsed().as_secs_f64(),
    };
    Ok(Estimate {
        primal: prob.unpack(&it.x),
        dual: prob.unpack_dual(&it.lam, &it.mu, it.eps),
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ecp::tests::{line_case, pmu, rtu};
    use crate::sparse::CscMatrix;

    #[test]
    fn identity_system_step_is_rhs() {
        let n = 4;
        let kkt = KktSystem {
            matrix: CscMatrix::identity(n),
            rhs: vec![1.0, -2.0, 0.5, 3.0],
            layout: crate::ecp::Layout {
                n: 1,
                nr: 0,
                np: 0,
                nx: 2,
                m: 0,
            },
        };
        let step = newton_step(&kkt, &mut SparseLu::new()).unwrap();
        assert_eq!(step, kkt.rhs);
    }

    #[test]
    fn barrier_update_examples() {
        let config = SolverConfig::default();
        let mu = vec![1.0; 5];
        let ib = vec![-1.0; 5];
        assert!((update_barrier(&mu, &ib, 1.0, &config) - 0.1).abs() < 1e-15);
        assert_eq!(update_barrier(&[0.0; 3], &[-1.0; 3], 1.0, &config), 0.0);
        assert_eq!(update_barrier(&[], &[], 1.0, &config), 0.0);
        // never raised
        assert_eq!(update_barrier(&mu, &ib, 0.01, &config), 0.01);
    }

    #[test]
    fn damping_examples() {
        let y = build_bus_admittance(&line_case(2)).unwrap();
        let ms = MeasurementSet {
            pmu: vec![pmu(1, (1.0, 0.0), (0.2, 0.1), 0.01)],
            rtu: vec![rtu(2, 0.5, 0.2, 0.1)],
        };
        let prob = Problem::new(&y, &ms, PmuVoltageBounds::Multipliers).unwrap();
        let config = SolverConfig::default();
        let (x0, d0) = initialize(&prob, &config).unwrap();
        let x = prob.pack(&x0).unwrap();
        let mu = d0.mu.clone();
        let l = prob.layout;

        let tiny = vec![1e-6; l.dim()];
        assert_eq!(damp_step(&prob, &x, &mu, &tiny, &config), 1.0);

        let mut to_zero = vec![0.0; l.dim()];
        to_zero[l.mu(0)] = -mu[0];
        let a = damp_step(&prob, &x, &mu, &to_zero, &config);
        assert!((a - config.ftb_factor).abs() < 1e-15);

        let mut big_v = vec![0.0; l.dim()];
        big_v[l.v_re(1)] = 0.5;
        assert!(damp_step(&prob, &x, &mu, &big_v, &config) <= 0.2 + 1e-15);
    }

    #[test]
    fn seeded_start_is_interior() {
        let y = build_bus_admittance(&line_case(3)).unwrap();
        let mut r = rtu(3, 0.5, 0.2, 0.1);
        r.g_lo = 0.5;
        let ms = MeasurementSet {
            pmu: vec![pmu(1, (1.0, 0.0), (0.2, 0.1), 0.01)],
            rtu: vec![r],
        };
        let prob = Problem::new(&y, &ms, PmuVoltageBounds::Multipliers).unwrap();
        for mode in [InitMode::Flat, InitMode::Seeded] {
            let config = SolverConfig {
                init_mode: mode,
                ..SolverConfig::default()
            };
            let (x0, d0) = initialize(&prob, &config).unwrap();
            let x = prob.pack(&x0).unwrap();
            assert!(prob.bound_residual(&x).iter().all(|&b| b < 0.0));
            assert!(d0.mu.iter().all(|&m| m > 0.0));
            assert!(d0.epsilon > 0.0);
            assert!((x0.g_rtu[0] - (0.5 + 1e-3 * 0.1)).abs() < 1e-15);
        }
    }

    #[test]
    fn rejects_empty_and_reference_free_sets() {
        let net = line_case(2);
        let config = SolverConfig::default();
        assert!(matches!(
            estimate(&net, &MeasurementSet::default(), &config),
            Err(Error::InvalidMeasurements(_))
        ));
        let ms = MeasurementSet {
            pmu: vec![],
            rtu: vec![rtu(2, 0.5, 0.2, 0.1)],
        };
        assert!(matches!(
            estimate(&net, &ms, &config),
            Err(Error::Unobservable(_))
        ));
    }

    #[test]
    fn rejects_bad_config() {
        for config in [
            SolverConfig {
                sigma_centering: 1.0,
                ..Default::default()
            },
            SolverConfig {
                ftb_factor: 0.0,
                ..Default::default()
            },
            SolverConfig {
                tol_kkt: 0.0,
                ..Default::default()
            },
        ] {
            assert!(config.validate().is_err());
        }
    }
}

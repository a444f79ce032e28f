//! Re-evaluates the optimality conditions at a given primal/dual pair, with
//! nothing carried over from the solve that produced it.

use serde::{Deserialize, Serialize};

use crate::ecp::{DualState, PrimalState, Problem, VarKind};
use crate::error::Result;
use crate::sosc::{check_sosc, SoscStatus, SoscVerdict, ACTIVITY_THRESHOLD};
use crate::sparse::inf_norm;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub kkt: f64,
    pub epsilon: f64,
    pub sosc: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            kkt: 1e-6,
            epsilon: 1e-8,
            sosc: crate::sosc::DEFAULT_TOL,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    /// Worst stationarity violation. A limited variable on a face only
    /// counts the part of its residual with the wrong sign.
    pub stationarity_inf: f64,
    pub kcl_inf: f64,
    pub complementarity_inf: f64,
    /// Largest bound violation, zero when every variable is inside its box.
    pub bound_violation: f64,
    /// Most negative bound multiplier, zero when all are nonnegative.
    pub dual_violation: f64,
    pub epsilon: f64,
    pub sosc: SoscVerdict,
    pub passed: bool,
}

impl Certificate {
    pub fn worst_residual(&self) -> f64 {
        [
            self.stationarity_inf,
            self.kcl_inf,
            self.complementarity_inf,
            self.bound_violation,
            self.dual_violation,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

/// Checks first-order conditions and the second-order condition at a point.
pub fn certify(
    prob: &Problem,
    primal: &PrimalState,
    dual: &DualState,
    tol: &Tolerances,
) -> Result<Certificate> {
    let x = prob.pack(primal)?;
    let mut lam = prob.pack_dual(dual)?;
    let mu = lam.split_off(2 * prob.layout.n);

    let adj = prob.adjoint_residual(&x, &lam, &mu);
    let mut stationarity = 0.0f64;
    let mut bound_violation = 0.0f64;
    for (j, kind) in prob.kinds.iter().enumerate() {
        let r = adj[j];
        let v = match *kind {
            VarKind::Fixed(c) => {
                bound_violation = bound_violation.max((x[j] - c).abs());
                0.0
            }
            VarKind::Limited { lo, hi } | VarKind::Pinned { lo, hi, .. } => {
                bound_violation = bound_violation.max(lo - x[j]).max(x[j] - hi);
                if hi - x[j] <= ACTIVITY_THRESHOLD {
                    r.max(0.0)
                } else if x[j] - lo <= ACTIVITY_THRESHOLD {
                    (-r).max(0.0)
                } else {
                    r.abs()
                }
            }
            VarKind::Free | VarKind::Barrier { .. } => r.abs(),
        };
        stationarity = stationarity.max(v);
    }

    let ib = prob.bound_residual(&x);
    bound_violation = ib.iter().fold(bound_violation, |m, &b| m.max(b));
    let complementarity = mu
        .iter()
        .zip(&ib)
        .fold(0.0f64, |m, (u, b)| m.max((u * b + dual.epsilon).abs()));
    let dual_violation = mu.iter().fold(0.0f64, |m, &u| m.max(-u));
    let kcl = inf_norm(&prob.primal_residual(&x));
    let sosc = check_sosc(prob, &x, &lam, &mu, ACTIVITY_THRESHOLD, tol.sosc)?;

    let first_order = [
        stationarity,
        kcl,
        complementarity,
        bound_violation,
        dual_violation,
    ]
    .iter()
    .all(|&v| v <= tol.kkt);
    let passed = first_order && dual.epsilon <= tol.epsilon && sosc.status != SoscStatus::Violated;
    Ok(Certificate {
        stationarity_inf: stationarity,
        kcl_inf: kcl,
        complementarity_inf: complementarity,
        bound_violation,
        dual_violation,
        epsilon: dual.epsilon,
        sosc,
        passed,
    })
}

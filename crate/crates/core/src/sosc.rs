//! Second-order sufficient condition at a converged point.
//!
//! The Lagrangian Hessian is the constant objective part plus one bilinear
//! 4×4 block per RTU bus. Each block has the closed-form spectrum
//! `{−ρ, −ρ, +ρ, +ρ}` with `ρ = |λ_re + jλ_im|`. The full check projects the
//! Hessian onto the tangent space of the KCL rows and the active bounds.

use faer::{Mat, Side};
use serde::{Deserialize, Serialize};

use crate::ecp::{rtu_block_coupling, Problem, VarKind};
use crate::error::Result;
use crate::sparse::{CscMatrix, SparseLu};

pub const ACTIVITY_THRESHOLD: f64 = 1e-8;
pub const DEFAULT_TOL: f64 = 1e-9;

/// Hessian of `λ_re·I_R + λ_im·I_I` over `(v_re, v_im, g, b)` of one RTU bus.
pub fn rtu_block_hessian(lam_re: f64, lam_im: f64) -> [[f64; 4]; 4] {
    let a = rtu_block_coupling(lam_re, lam_im);
    let mut m = [[0.0; 4]; 4];
    for r in 0..2 {
        for c in 0..2 {
            m[r][c + 2] = a[r][c];
            m[c + 2][r] = a[r][c];
        }
    }
    m
}

/// Eigenvalues of [`rtu_block_hessian`] in ascending order.
pub fn rtu_block_eigs(lam_re: f64, lam_im: f64) -> [f64; 4] {
    let rho = lam_re.hypot(lam_im);
    [-rho, -rho, rho, rho]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SoscStatus {
    Satisfied,
    Violated,
    /// Either no tangent basis could be formed because the KCL Jacobian over
    /// the bus voltages is singular, or the smallest projected eigenvalue is
    /// zero within tolerance (a flat direction, as when the optimum is not
    /// isolated).
    Indeterminate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoscVerdict {
    pub status: SoscStatus,
    pub satisfied: bool,
    /// Smallest eigenvalue of `Qᵀ H Q` for an orthonormal tangent basis `Q`.
    /// Absent when the tangent space is trivial or no basis exists.
    pub min_projected_eig: Option<f64>,
    pub tangent_dim: usize,
    pub active_bounds: usize,
    /// `ρ` per RTU, in measurement order.
    pub per_rtu_eigs: Vec<f64>,
}

/// Variables of `X` that the tangent space must keep fixed: held variables,
/// limited variables on a face, and barrier variables with an active side.
pub fn active_variables(prob: &Problem, x: &[f64], mu: &[f64], threshold: f64) -> Vec<bool> {
    let mut active: Vec<bool> = prob
        .kinds
        .iter()
        .zip(x)
        .map(|(kind, &v)| match *kind {
            VarKind::Fixed(_) | VarKind::Pinned { .. } => true,
            VarKind::Limited { lo, hi } => v - lo <= threshold || hi - v <= threshold,
            VarKind::Free | VarKind::Barrier { .. } => false,
        })
        .collect();
    let ib = prob.bound_residual(x);
    for (k, &(j, _)) in prob.ineq.iter().enumerate() {
        if ib[k].abs() <= threshold || mu[k] > ib[k].abs() {
            active[j] = true;
        }
    }
    active
}

/// Projected-Hessian test at `(x, λ, μ)`.
pub fn check_sosc(
    prob: &Problem,
    x: &[f64],
    lam: &[f64],
    mu: &[f64],
    threshold: f64,
    tol: f64,
) -> Result<SoscVerdict> {
    let l = prob.layout;
    let nv = 2 * l.n;
    let per_rtu_eigs = prob
        .rtu_bus
        .iter()
        .map(|&k| rtu_block_eigs(lam[k], lam[l.n + k])[3])
        .collect();
    let active = active_variables(prob, x, mu, threshold);
    let active_bounds = active.iter().filter(|&&a| a).count();
    let free: Vec<usize> = (nv..l.nx).filter(|&j| !active[j]).collect();

    // reduced coordinates: bus voltages, then free non-voltage variables
    let mut reduced = vec![usize::MAX; l.nx];
    for (r, j) in (0..nv).chain(free.iter().copied()).enumerate() {
        reduced[j] = r;
    }
    let dim = nv + free.len();

    let jac = prob.constraint_jacobian(x);
    let jv: Vec<_> = jac.iter().copied().filter(|&(_, j, _)| j < nv).collect();
    let jv = CscMatrix::from_triplets(nv, nv, &jv);
    let mut cols = vec![vec![0.0; nv]; free.len()];
    for &(i, j, v) in &jac {
        if j >= nv && reduced[j] != usize::MAX {
            cols[reduced[j] - nv][i] += v;
        }
    }

    let verdict = |status, min_eig| SoscVerdict {
        status,
        satisfied: status == SoscStatus::Satisfied,
        min_projected_eig: min_eig,
        tangent_dim: free.len(),
        active_bounds,
        per_rtu_eigs,
    };

    let mut lu = SparseLu::new();
    if lu.factor(&jv).is_err() {
        return Ok(verdict(SoscStatus::Indeterminate, None));
    }
    if free.is_empty() {
        return Ok(verdict(SoscStatus::Satisfied, None));
    }

    // Z = [−J_V⁻¹ J_F; I]
    let mut z = Mat::<f64>::zeros(dim, free.len());
    for (c, col) in cols.iter().enumerate() {
        let rhs: Vec<f64> = col.iter().map(|v| -v).collect();
        let (zv, rel) = match lu.solve_refined(&jv, &rhs, 1e-12, 3) {
            Ok(s) => s,
            Err(_) => return Ok(verdict(SoscStatus::Indeterminate, None)),
        };
        if rel > 1e-8 {
            return Ok(verdict(SoscStatus::Indeterminate, None));
        }
        for (r, v) in zv.into_iter().enumerate() {
            z[(r, c)] = v;
        }
        z[(nv + c, c)] = 1.0;
    }
    let q = z.qr().compute_thin_Q();

    let mut hq = Mat::<f64>::zeros(dim, free.len());
    for (r, c, v) in prob.lagrangian_hessian(lam) {
        let (rr, rc) = (reduced[r], reduced[c]);
        if rr == usize::MAX || rc == usize::MAX {
            continue;
        }
        for k in 0..free.len() {
            hq[(rr, k)] += v * q[(rc, k)];
        }
    }
    let proj = q.as_ref().transpose() * hq.as_ref();
    let sym = Mat::<f64>::from_fn(free.len(), free.len(), |i, j| {
        0.5 * (proj[(i, j)] + proj[(j, i)])
    });
    let eigs = match sym.self_adjoint_eigenvalues(Side::Lower) {
        Ok(e) => e,
        Err(_) => return Ok(verdict(SoscStatus::Indeterminate, None)),
    };
    let min = eigs.into_iter().fold(f64::INFINITY, f64::min);
    let status = if min > tol {
        SoscStatus::Satisfied
    } else if min < -tol {
        SoscStatus::Violated
    } else {
        SoscStatus::Indeterminate
    };
    Ok(verdict(status, Some(min)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense_eigs(m: [[f64; 4]; 4]) -> Vec<f64> {
        Mat::<f64>::from_fn(4, 4, |i, j| m[i][j])
            .self_adjoint_eigenvalues(Side::Lower)
            .unwrap()
    }

    #[test]
    fn zero_multipliers_give_zero_block() {
        assert_eq!(rtu_block_hessian(0.0, 0.0), [[0.0; 4]; 4]);
        assert_eq!(rtu_block_eigs(0.0, 0.0), [0.0; 4]);
    }

    #[test]
    fn unit_real_multiplier() {
        let m = rtu_block_hessian(1.0, 0.0);
        assert_eq!(m[0][2], 1.0);
        assert_eq!(m[1][3], 1.0);
        assert_eq!(m[0][3], 0.0);
        let e = dense_eigs(m);
        for (a, b) in e.iter().zip([-1.0, -1.0, 1.0, 1.0]) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn three_four_five() {
        assert_eq!(rtu_block_eigs(3.0, 4.0), [-5.0, -5.0, 5.0, 5.0]);
        let e = dense_eigs(rtu_block_hessian(3.0, 4.0));
        for (a, b) in e.iter().zip(rtu_block_eigs(3.0, 4.0)) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn block_is_symmetric() {
        let m = rtu_block_hessian(0.3, -1.7);
        for (r, row) in m.iter().enumerate() {
            for (c, v) in row.iter().enumerate() {
                assert_eq!(*v, m[c][r]);
            }
        }
    }
}

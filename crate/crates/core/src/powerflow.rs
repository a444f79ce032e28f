//! Polar Newton-Raphson AC power flow. Only used to produce the ground-truth
//! operating point that measurements are synthesized from.

use num_complex::Complex64;

use crate::case_io::{BusType, CaseNetwork};
use crate::error::{Error, Result};
use crate::grid::{build_bus_admittance, AdmittancePair};
use crate::sparse::{inf_norm, CscMatrix, SparseLu};

pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 30;

/// Converged bus voltages and the injection currents `Ybus · V`.
#[derive(Debug, Clone, PartialEq)]
pub struct TruthState {
    pub v_re: Vec<f64>,
    pub v_im: Vec<f64>,
    pub i_re: Vec<f64>,
    pub i_im: Vec<f64>,
    pub iterations: usize,
    pub mismatch: f64,
}

impl TruthState {
    pub fn voltage(&self, k: usize) -> Complex64 {
        Complex64::new(self.v_re[k], self.v_im[k])
    }

    pub fn current(&self, k: usize) -> Complex64 {
        Complex64::new(self.i_re[k], self.i_im[k])
    }
}

/// Solves the power flow from a flat start. Generator reactive limits are not
/// enforced.
pub fn solve_powerflow(net: &CaseNetwork, tol: f64, max_iter: usize) -> Result<TruthState> {
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "tolerance must be positive, got {tol}"
        )));
    }
    if !net.is_connected() {
        return Err(Error::Singular("network has an island".into()));
    }
    let y = build_bus_admittance(net)?;
    let n = net.buses.len();
    let index = net.bus_index();

    let mut vset: Vec<Option<f64>> = vec![None; n];
    for g in net.gens.iter().filter(|g| g.in_service) {
        let k = index[&g.bus];
        vset[k].get_or_insert(g.vset);
    }
    let mut pv = Vec::new();
    let mut pq = Vec::new();
    let mut slack = None;
    for (k, bus) in net.buses.iter().enumerate() {
        match bus.kind {
            BusType::Slack => slack = Some(k),
            BusType::Pv if vset[k].is_some() => pv.push(k),
            _ => pq.push(k),
        }
    }
    let slack = slack.ok_or_else(|| Error::InvalidCase("no slack bus".into()))?;

    let s_sched: Vec<Complex64> = net
        .scheduled_injection()
        .into_iter()
        .map(|(p, q)| Complex64::new(p, q))
        .collect();

    let mut vm = vec![1.0; n];
    let mut va = vec![0.0; n];
    for &k in pv.iter().chain(std::iter::once(&slack)) {
        vm[k] = vset[k].unwrap_or(net.buses[k].vm);
    }
    va[slack] = net.buses[slack].va;

    // unknown ordering: angles of pv ∪ pq, then magnitudes of pq
    let pvpq: Vec<usize> = pv.iter().chain(&pq).copied().collect();
    let mut ang_col = vec![usize::MAX; n];
    let mut mag_col = vec![usize::MAX; n];
    for (j, &k) in pvpq.iter().enumerate() {
        ang_col[k] = j;
    }
    for (j, &k) in pq.iter().enumerate() {
        mag_col[k] = pvpq.len() + j;
    }
    let dim = pvpq.len() + pq.len();

    let mut lu = SparseLu::new();
    let mut iterations = 0;
    loop {
        let v: Vec<Complex64> = (0..n)
            .map(|k| Complex64::from_polar(vm[k], va[k]))
            .collect();
        let ibus = y.mul_complex(&v);
        let mis: Vec<Complex64> = (0..n).map(|k| v[k] * ibus[k].conj() - s_sched[k]).collect();
        let f: Vec<f64> = pvpq
            .iter()
            .map(|&k| mis[k].re)
            .chain(pq.iter().map(|&k| mis[k].im))
            .collect();
        let norm = inf_norm(&f);
        if norm <= tol {
            let v_re: Vec<f64> = v.iter().map(|c| c.re).collect();
            let v_im: Vec<f64> = v.iter().map(|c| c.im).collect();
            let (i_re, i_im) = crate::grid::injection_current(&y, &v_re, &v_im)?;
            return Ok(TruthState {
                v_re,
                v_im,
                i_re,
                i_im,
                iterations,
                mismatch: norm,
            });
        }
        if iterations >= max_iter || !norm.is_finite() {
            return Err(Error::PowerFlowDiverged {
                iterations,
                mismatch: norm,
            });
        }
        let jac = jacobian(&y, &v, &ibus, &ang_col, &mag_col, &pq, dim);
        lu.factor(&jac)?;
        let neg_f: Vec<f64> = f.iter().map(|x| -x).collect();
        let dx = lu.solve(&neg_f)?;
        for &k in &pvpq {
            va[k] += dx[ang_col[k]];
        }
        for &k in &pq {
            vm[k] += dx[mag_col[k]];
        }
        iterations += 1;
    }
}

/// Power-mismatch Jacobian in polar coordinates, assembled on the Ybus pattern.
fn jacobian(
    y: &AdmittancePair,
    v: &[Complex64],
    ibus: &[Complex64],
    ang_col: &[usize],
    mag_col: &[usize],
    pq: &[usize],
    dim: usize,
) -> CscMatrix {
    let n = v.len();
    let mut q_row = vec![usize::MAX; n];
    let p_rows = ang_col;
    for (j, &k) in pq.iter().enumerate() {
        q_row[k] = dim - pq.len() + j;
    }
    let j = Complex64::i();
    let mut trip = Vec::with_capacity(4 * y.y_g.nnz());
    for i in 0..n {
        for p in y.y_g.row_ptr[i]..y.y_g.row_ptr[i + 1] {
            let k = y.y_g.col_idx[p];
            let yik = Complex64::new(y.y_g.values[p], y.y_b.values[p]);
            let vn_k = v[k] / v[k].norm();
            let diag = i == k;
            let mut ds_dva = -j * v[i] * (yik * v[k]).conj();
            let mut ds_dvm = v[i] * (yik * vn_k).conj();
            if diag {
                ds_dva += j * v[i] * ibus[i].conj();
                ds_dvm += ibus[i].conj() * vn_k;
            }
            let rows = [(p_rows[i], true), (q_row[i], false)];
            let cols = [(ang_col[k], ds_dva), (mag_col[k], ds_dvm)];
            for &(r, real) in &rows {
                if r == usize::MAX {
                    continue;
                }
                for &(c, d) in &cols {
                    if c == usize::MAX {
                        continue;
                    }
                    trip.push((r, c, if real { d.re } else { d.im }));
                }
            }
        }
    }
    CscMatrix::from_triplets(dim, dim, &trip)
}

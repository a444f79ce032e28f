//! Equivalent-circuit formulation of the estimation program.
//!
//! The primal circuit is the split-circuit network with RTU admittances and
//! PMU sources attached. Its adjoint shares the transposed network and is
//! excited by the objective gradient. Bound multipliers close the system
//! through smoothed complementarity rows `μ ∘ I_b + ε = 0`.
//!
//! Unknown ordering is `[X, λ, μ]` with
//! `X = [v_re (n), v_im (n), (g, b) per RTU, (v_re, v_im, i_re, i_im) per PMU]`,
//! `λ = [λ_re (n), λ_im (n)]` and `μ` one entry per scalar inequality, upper
//! before lower for each bounded variable.

use serde::{Deserialize, Serialize};

use crate::case_io::MeasurementSet;
use crate::error::{Error, Result};
use crate::grid::{injection_current, AdmittancePair};
use crate::sparse::CscMatrix;

/// How PMU voltage boxes enter the program.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PmuVoltageBounds {
    /// Adjoint currents of the PMU voltage diodes are shorted: no multipliers.
    /// Steps are clamped to the box, and a component on a face is held there
    /// until its stationarity residual points back inside.
    #[default]
    Limited,
    /// Full treatment with a multiplier pair per component.
    Multipliers,
}

/// Boxes at most this wide are treated as equalities at the measured value.
pub const DEGENERATE_WIDTH: f64 = 1e-10;

/// How a primal variable is constrained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum VarKind {
    Free,
    /// Box with multipliers `mu` (upper) and `mu + 1` (lower).
    Barrier {
        lo: f64,
        hi: f64,
        mu: usize,
    },
    /// Box kept by step limiting only.
    Limited {
        lo: f64,
        hi: f64,
    },
    /// A limited variable held on the face `at` of its box. The stationarity
    /// residual of its row is the current that replaces the removed adjoint
    /// source.
    Pinned {
        lo: f64,
        hi: f64,
        at: f64,
    },
    /// Zero-width box.
    Fixed(f64),
}

impl VarKind {
    pub fn bounds(&self) -> Option<(f64, f64)> {
        match *self {
            Self::Barrier { lo, hi, .. }
            | Self::Limited { lo, hi }
            | Self::Pinned { lo, hi, .. } => Some((lo, hi)),
            Self::Fixed(c) => Some((c, c)),
            Self::Free => None,
        }
    }

    /// Value an equality-like variable is held at.
    pub fn held_at(&self) -> Option<f64> {
        match *self {
            Self::Fixed(c) | Self::Pinned { at: c, .. } => Some(c),
            _ => None,
        }
    }
}

/// Index maps for the stacked unknowns.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub n: usize,
    pub nr: usize,
    pub np: usize,
    pub nx: usize,
    pub m: usize,
}

impl Layout {
    pub fn v_re(&self, k: usize) -> usize {
        k
    }
    pub fn v_im(&self, k: usize) -> usize {
        self.n + k
    }
    pub fn rtu_g(&self, r: usize) -> usize {
        2 * self.n + 2 * r
    }
    pub fn rtu_b(&self, r: usize) -> usize {
        2 * self.n + 2 * r + 1
    }
    /// PMU component `c`: 0 = v_re, 1 = v_im, 2 = i_re, 3 = i_im.
    pub fn pmu(&self, p: usize, c: usize) -> usize {
        2 * self.n + 2 * self.nr + 4 * p + c
    }
    pub fn lam(&self, i: usize) -> usize {
        self.nx + i
    }
    pub fn mu(&self, j: usize) -> usize {
        self.nx + 2 * self.n + j
    }
    pub fn dim(&self) -> usize {
        self.nx + 2 * self.n + self.m
    }
    pub fn is_voltage(&self, j: usize) -> bool {
        j < 2 * self.n || (j >= self.pmu(0, 0) && j < self.nx && (j - self.pmu(0, 0)) % 4 < 2)
    }
}

/// Estimated state in named form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrimalState {
    pub v_re: Vec<f64>,
    pub v_im: Vec<f64>,
    pub g_rtu: Vec<f64>,
    pub b_rtu: Vec<f64>,
    pub v_pmu_re: Vec<f64>,
    pub v_pmu_im: Vec<f64>,
    pub i_pmu_re: Vec<f64>,
    pub i_pmu_im: Vec<f64>,
}

/// Multipliers of the KCL rows (adjoint node voltages) and of the bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualState {
    pub lam_re: Vec<f64>,
    pub lam_im: Vec<f64>,
    pub mu: Vec<f64>,
    pub epsilon: f64,
}

/// Linearized KKT system over `[ΔX, Δλ, Δμ]`.
#[derive(Debug, Clone)]
pub struct KktSystem {
    pub matrix: CscMatrix,
    pub rhs: Vec<f64>,
    pub layout: Layout,
}

/// Analytic Jacobian of the RTU currents over `(v_re, v_im, g, b)`.
pub fn rtu_sensitivity(g: f64, b: f64, v_re: f64, v_im: f64) -> [[f64; 4]; 2] {
    [[g, b, v_re, v_im], [-b, g, v_im, -v_re]]
}

/// Currents injected by the adjoint RTU admittance.
pub fn rtu_adjoint_currents(g: f64, b: f64, lam_re: f64, lam_im: f64) -> (f64, f64) {
    (g * lam_re - b * lam_im, g * lam_im + b * lam_re)
}

/// `μ ∘ I_b + ε`, elementwise.
pub fn complementarity_residual(mu: &[f64], ib: &[f64], epsilon: f64) -> Vec<f64> {
    mu.iter().zip(ib).map(|(m, b)| m * b + epsilon).collect()
}

/// One estimation program: a network, its measurements and the variable map.
#[derive(Debug, Clone)]
pub struct Problem<'a> {
    pub y: &'a AdmittancePair,
    pub ms: &'a MeasurementSet,
    pub layout: Layout,
    pub rtu_bus: Vec<usize>,
    pub pmu_bus: Vec<usize>,
    pub kinds: Vec<VarKind>,
    /// Per inequality: the variable it bounds and whether it is the upper side.
    pub ineq: Vec<(usize, bool)>,
}

impl<'a> Problem<'a> {
    pub fn new(
        y: &'a AdmittancePair,
        ms: &'a MeasurementSet,
        mode: PmuVoltageBounds,
    ) -> Result<Self> {
        ms.validate()?;
        let locate = |bus: u32| {
            y.bus_index
                .get(&bus)
                .copied()
                .ok_or_else(|| Error::InvalidMeasurements(format!("bus {bus} is not in the case")))
        };
        let rtu_bus = ms
            .rtu
            .iter()
            .map(|r| locate(r.bus))
            .collect::<Result<Vec<_>>>()?;
        let pmu_bus = ms
            .pmu
            .iter()
            .map(|p| locate(p.bus))
            .collect::<Result<Vec<_>>>()?;
        let n = y.n;
        let nr = rtu_bus.len();
        let np = pmu_bus.len();
        let nx = 2 * n + 2 * nr + 4 * np;
        let mut layout = Layout {
            n,
            nr,
            np,
            nx,
            m: 0,
        };

        let mut kinds = vec![VarKind::Free; nx];
        let mut ineq = Vec::new();
        let mut bound = |j: usize, value: f64, lo: f64, hi: f64, barrier: bool| {
            kinds[j] = if hi - lo <= DEGENERATE_WIDTH {
                VarKind::Fixed(value)
            } else if barrier {
                let mu = ineq.len();
                ineq.push((j, true));
                ineq.push((j, false));
                VarKind::Barrier { lo, hi, mu }
            } else {
                VarKind::Limited { lo, hi }
            };
        };
        for (r, m) in ms.rtu.iter().enumerate() {
            bound(layout.rtu_g(r), m.g_m, m.g_lo, m.g_hi, true);
            bound(layout.rtu_b(r), m.b_m, m.b_lo, m.b_hi, true);
        }
        let v_barrier = mode == PmuVoltageBounds::Multipliers;
        for (p, m) in ms.pmu.iter().enumerate() {
            bound(layout.pmu(p, 0), m.v_re, m.v_lo[0], m.v_hi[0], v_barrier);
            bound(layout.pmu(p, 1), m.v_im, m.v_lo[1], m.v_hi[1], v_barrier);
            bound(layout.pmu(p, 2), m.i_re, m.i_lo[0], m.i_hi[0], true);
            bound(layout.pmu(p, 3), m.i_im, m.i_lo[1], m.i_hi[1], true);
        }
        layout.m = ineq.len();
        Ok(Self {
            y,
            ms,
            layout,
            rtu_bus,
            pmu_bus,
            kinds,
            ineq,
        })
    }

    pub fn pack(&self, s: &PrimalState) -> Result<Vec<f64>> {
        let l = &self.layout;
        let dims = [
            (s.v_re.len(), l.n),
            (s.v_im.len(), l.n),
            (s.g_rtu.len(), l.nr),
            (s.b_rtu.len(), l.nr),
            (s.v_pmu_re.len(), l.np),
            (s.v_pmu_im.len(), l.np),
            (s.i_pmu_re.len(), l.np),
            (s.i_pmu_im.len(), l.np),
        ];
        for (got, expected) in dims {
            if got != expected {
                return Err(Error::Dimension { expected, got });
            }
        }
        let mut x = Vec::with_capacity(l.nx);
        x.extend_from_slice(&s.v_re);
        x.extend_from_slice(&s.v_im);
        for r in 0..l.nr {
            x.push(s.g_rtu[r]);
            x.push(s.b_rtu[r]);
        }
        for p in 0..l.np {
            x.extend([s.v_pmu_re[p], s.v_pmu_im[p], s.i_pmu_re[p], s.i_pmu_im[p]]);
        }
        Ok(x)
    }

    pub fn unpack(&self, x: &[f64]) -> PrimalState {
        let l = &self.layout;
        let pmu = |c: usize| (0..l.np).map(|p| x[l.pmu(p, c)]).collect();
        PrimalState {
            v_re: x[..l.n].to_vec(),
            v_im: x[l.n..2 * l.n].to_vec(),
            g_rtu: (0..l.nr).map(|r| x[l.rtu_g(r)]).collect(),
            b_rtu: (0..l.nr).map(|r| x[l.rtu_b(r)]).collect(),
            v_pmu_re: pmu(0),
            v_pmu_im: pmu(1),
            i_pmu_re: pmu(2),
            i_pmu_im: pmu(3),
        }
    }

    /// Flat `[λ, μ]` from a named dual state.
    pub fn pack_dual(&self, d: &DualState) -> Result<Vec<f64>> {
        let l = &self.layout;
        for (got, expected) in [
            (d.lam_re.len(), l.n),
            (d.lam_im.len(), l.n),
            (d.mu.len(), l.m),
        ] {
            if got != expected {
                return Err(Error::Dimension { expected, got });
            }
        }
        Ok(d.lam_re
            .iter()
            .chain(&d.lam_im)
            .chain(&d.mu)
            .copied()
            .collect())
    }

    pub fn unpack_dual(&self, lam: &[f64], mu: &[f64], epsilon: f64) -> DualState {
        let n = self.layout.n;
        DualState {
            lam_re: lam[..n].to_vec(),
            lam_im: lam[n..2 * n].to_vec(),
            mu: mu.to_vec(),
            epsilon,
        }
    }

    /// Sum of squared PMU mismatch currents and RTU admittance deviations.
    pub fn objective(&self, x: &[f64]) -> f64 {
        let l = &self.layout;
        let mut f = 0.0;
        for (p, m) in self.ms.pmu.iter().enumerate() {
            let k = self.pmu_bus[p];
            let dr = m.g_pmu * (x[l.pmu(p, 0)] - x[l.v_re(k)]);
            let di = m.g_pmu * (x[l.pmu(p, 1)] - x[l.v_im(k)]);
            f += dr * dr + di * di;
        }
        for (r, m) in self.ms.rtu.iter().enumerate() {
            let dg = x[l.rtu_g(r)] - m.g_m;
            let db = x[l.rtu_b(r)] - m.b_m;
            f += dg * dg + db * db;
        }
        f
    }

    pub fn objective_gradient(&self, x: &[f64]) -> Vec<f64> {
        let l = &self.layout;
        let mut grad = vec![0.0; l.nx];
        for (p, m) in self.ms.pmu.iter().enumerate() {
            let k = self.pmu_bus[p];
            let w = 2.0 * m.g_pmu * m.g_pmu;
            for (c, v) in [(0, l.v_re(k)), (1, l.v_im(k))] {
                let d = w * (x[l.pmu(p, c)] - x[v]);
                grad[l.pmu(p, c)] += d;
                grad[v] -= d;
            }
        }
        for (r, m) in self.ms.rtu.iter().enumerate() {
            grad[l.rtu_g(r)] = 2.0 * (x[l.rtu_g(r)] - m.g_m);
            grad[l.rtu_b(r)] = 2.0 * (x[l.rtu_b(r)] - m.b_m);
        }
        grad
    }

    /// Split-circuit KCL: network currents plus measurement-model currents,
    /// real rows then imaginary rows.
    pub fn primal_residual(&self, x: &[f64]) -> Vec<f64> {
        let l = &self.layout;
        let n = l.n;
        let (mut re, im) =
            injection_current(self.y, &x[..n], &x[n..2 * n]).expect("layout matches network");
        re.extend(im);
        let mut res = re;
        for (r, &k) in self.rtu_bus.iter().enumerate() {
            let (g, b) = (x[l.rtu_g(r)], x[l.rtu_b(r)]);
            let (vr, vi) = (x[l.v_re(k)], x[l.v_im(k)]);
            res[k] += g * vr + b * vi;
            res[n + k] += g * vi - b * vr;
        }
        for (p, m) in self.ms.pmu.iter().enumerate() {
            let k = self.pmu_bus[p];
            res[k] += -x[l.pmu(p, 2)] - m.g_pmu * (x[l.pmu(p, 0)] - x[l.v_re(k)]);
            res[n + k] += -x[l.pmu(p, 3)] - m.g_pmu * (x[l.pmu(p, 1)] - x[l.v_im(k)]);
        }
        res
    }

    /// Stationarity of the Lagrangian: `∇F + J_cᵀλ + J_bᵀμ`, assembled from
    /// the adjoint circuit (transposed network, adjoint RTU admittances,
    /// adjoint PMU sources).
    pub fn adjoint_residual(&self, x: &[f64], lam: &[f64], mu: &[f64]) -> Vec<f64> {
        let l = &self.layout;
        let n = l.n;
        let (lr, li) = (&lam[..n], &lam[n..2 * n]);
        let mut res = self.objective_gradient(x);

        let yg = &self.y.y_g;
        let yb = &self.y.y_b;
        for k in 0..n {
            for p in yg.row_ptr[k]..yg.row_ptr[k + 1] {
                let j = yg.col_idx[p];
                let (g, b) = (yg.values[p], yb.values[p]);
                res[l.v_re(j)] += g * lr[k] + b * li[k];
                res[l.v_im(j)] += g * li[k] - b * lr[k];
            }
        }
        for (r, &k) in self.rtu_bus.iter().enumerate() {
            let (g, b) = (x[l.rtu_g(r)], x[l.rtu_b(r)]);
            let (vr, vi) = (x[l.v_re(k)], x[l.v_im(k)]);
            let (ar, ai) = rtu_adjoint_currents(g, b, lr[k], li[k]);
            res[l.v_re(k)] += ar;
            res[l.v_im(k)] += ai;
            res[l.rtu_g(r)] += vr * lr[k] + vi * li[k];
            res[l.rtu_b(r)] += vi * lr[k] - vr * li[k];
        }
        for (p, m) in self.ms.pmu.iter().enumerate() {
            let k = self.pmu_bus[p];
            res[l.v_re(k)] += m.g_pmu * lr[k];
            res[l.v_im(k)] += m.g_pmu * li[k];
            res[l.pmu(p, 0)] -= m.g_pmu * lr[k];
            res[l.pmu(p, 1)] -= m.g_pmu * li[k];
            res[l.pmu(p, 2)] -= lr[k];
            res[l.pmu(p, 3)] -= li[k];
        }
        for (t, &(j, upper)) in self.ineq.iter().enumerate() {
            res[j] += if upper { mu[t] } else { -mu[t] };
        }
        res
    }

    /// `I_b(X)`: `x − hi` for upper and `lo − x` for lower sides.
    pub fn bound_residual(&self, x: &[f64]) -> Vec<f64> {
        self.ineq
            .iter()
            .map(|&(j, upper)| match self.kinds[j] {
                VarKind::Barrier { lo, hi, .. } => {
                    if upper {
                        x[j] - hi
                    } else {
                        lo - x[j]
                    }
                }
                _ => unreachable!("inequalities only bound barrier variables"),
            })
            .collect()
    }

    /// The residual stack driven to zero by the Newton iteration: stationarity
    /// (replaced by `x − c` for fixed and pinned variables), KCL,
    /// complementarity.
    pub fn kkt_residual(&self, x: &[f64], lam: &[f64], mu: &[f64], epsilon: f64) -> Vec<f64> {
        let mut res = self.adjoint_residual(x, lam, mu);
        for (j, kind) in self.kinds.iter().enumerate() {
            if let Some(c) = kind.held_at() {
                res[j] = x[j] - c;
            }
        }
        res.extend(self.primal_residual(x));
        let ib = self.bound_residual(x);
        res.extend(complementarity_residual(mu, &ib, epsilon));
        res
    }

    /// Triplets of `J_c`, rows over KCL equations, columns over `X`.
    pub fn constraint_jacobian(&self, x: &[f64]) -> Vec<(usize, usize, f64)> {
        let l = &self.layout;
        let n = l.n;
        let yg = &self.y.y_g;
        let yb = &self.y.y_b;
        let mut t = Vec::with_capacity(4 * yg.nnz() + 8 * l.nr + 6 * l.np);
        for k in 0..n {
            for p in yg.row_ptr[k]..yg.row_ptr[k + 1] {
                let j = yg.col_idx[p];
                let (g, b) = (yg.values[p], yb.values[p]);
                t.push((k, l.v_re(j), g));
                t.push((k, l.v_im(j), -b));
                t.push((n + k, l.v_re(j), b));
                t.push((n + k, l.v_im(j), g));
            }
        }
        for (r, &k) in self.rtu_bus.iter().enumerate() {
            let s = rtu_sensitivity(x[l.rtu_g(r)], x[l.rtu_b(r)], x[l.v_re(k)], x[l.v_im(k)]);
            let cols = [l.v_re(k), l.v_im(k), l.rtu_g(r), l.rtu_b(r)];
            for (row, srow) in [k, n + k].into_iter().zip(s) {
                for (c, v) in cols.into_iter().zip(srow) {
                    t.push((row, c, v));
                }
            }
        }
        for (p, m) in self.ms.pmu.iter().enumerate() {
            let k = self.pmu_bus[p];
            for (row, c) in [(k, 0), (n + k, 1)] {
                let v = if c == 0 { l.v_re(k) } else { l.v_im(k) };
                t.push((row, v, m.g_pmu));
                t.push((row, l.pmu(p, c), -m.g_pmu));
                t.push((row, l.pmu(p, c + 2), -1.0));
            }
        }
        t
    }

    /// Triplets of the Lagrangian Hessian over `X`: the constant objective
    /// part plus the bilinear RTU blocks scaled by `λ`.
    pub fn lagrangian_hessian(&self, lam: &[f64]) -> Vec<(usize, usize, f64)> {
        let l = &self.layout;
        let n = l.n;
        let mut t = Vec::with_capacity(8 * l.np + 10 * l.nr);
        for (p, m) in self.ms.pmu.iter().enumerate() {
            let k = self.pmu_bus[p];
            let w = 2.0 * m.g_pmu * m.g_pmu;
            for (c, v) in [(0, l.v_re(k)), (1, l.v_im(k))] {
                let q = l.pmu(p, c);
                t.extend([(q, q, w), (v, v, w), (q, v, -w), (v, q, -w)]);
            }
        }
        for (r, &k) in self.rtu_bus.iter().enumerate() {
            let (gi, bi) = (l.rtu_g(r), l.rtu_b(r));
            t.push((gi, gi, 2.0));
            t.push((bi, bi, 2.0));
            let block = rtu_block_coupling(lam[k], lam[n + k]);
            for (a, va) in [l.v_re(k), l.v_im(k)].into_iter().enumerate() {
                for (c, vc) in [gi, bi].into_iter().enumerate() {
                    t.push((va, vc, block[a][c]));
                    t.push((vc, va, block[a][c]));
                }
            }
        }
        t
    }

    /// Newton system for the residual stack of [`Problem::kkt_residual`].
    pub fn assemble_kkt(&self, x: &[f64], lam: &[f64], mu: &[f64], epsilon: f64) -> KktSystem {
        let l = self.layout;
        let fixed = |j: usize| self.kinds[j].held_at().is_some();
        let mut t: Vec<(usize, usize, f64)> = Vec::new();

        for (r, c, v) in self.lagrangian_hessian(lam) {
            if !fixed(r) {
                t.push((r, c, v));
            }
        }
        for (i, j, v) in self.constraint_jacobian(x) {
            t.push((l.nx + i, j, v));
            if !fixed(j) {
                t.push((j, l.lam(i), v));
            }
        }
        for j in 0..l.nx {
            if fixed(j) {
                t.push((j, j, 1.0));
            }
        }
        let ib = self.bound_residual(x);
        for (k, &(j, upper)) in self.ineq.iter().enumerate() {
            let sign = if upper { 1.0 } else { -1.0 };
            t.push((j, l.mu(k), sign));
            t.push((l.mu(k), j, sign * mu[k]));
            t.push((l.mu(k), l.mu(k), ib[k]));
        }
        let rhs = self
            .kkt_residual(x, lam, mu, epsilon)
            .into_iter()
            .map(|v| -v)
            .collect();
        KktSystem {
            matrix: CscMatrix::from_triplets(l.dim(), l.dim(), &t),
            rhs,
            layout: l,
        }
    }
}

/// Upper-right 2×2 block `A` of the RTU Hessian, rows `(v_re, v_im)`,
/// columns `(g, b)`.
pub fn rtu_block_coupling(lam_re: f64, lam_im: f64) -> [[f64; 2]; 2] {
    [[lam_re, -lam_im], [lam_im, lam_re]]
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::case_io::{Branch, Bus, BusType, CaseNetwork, PmuMeasurement, RtuMeasurement};
    use crate::grid::build_bus_admittance;

    pub(crate) fn line_case(n: u32) -> CaseNetwork {
        let bus = |id| Bus {
            id,
            kind: if id == 1 { BusType::Slack } else { BusType::Pq },
            pd: 0.0,
            qd: 0.0,
            gs: 0.0,
            bs: 0.0,
            vm: 1.0,
            va: 0.0,
        };
        CaseNetwork {
            base_mva: 100.0,
            buses: (1..=n).map(bus).collect(),
            branches: (1..n)
                .map(|f| Branch {
                    from: f,
                    to: f + 1,
                    r: 0.01 * f as f64,
                    x: 0.1,
                    b: 0.02,
                    tap: 1.0,
                    shift: 0.0,
                    in_service: true,
                })
                .collect(),
            gens: vec![],
        }
    }

    pub(crate) fn rtu(bus: u32, g: f64, b: f64, w: f64) -> RtuMeasurement {
        RtuMeasurement {
            bus,
            g_m: g,
            b_m: b,
            g_lo: g - w,
            g_hi: g + w,
            b_lo: b - w,
            b_hi: b + w,
        }
    }

    pub(crate) fn pmu(bus: u32, v: (f64, f64), i: (f64, f64), w: f64) -> PmuMeasurement {
        PmuMeasurement {
            bus,
            v_re: v.0,
            v_im: v.1,
            i_re: i.0,
            i_im: i.1,
            v_lo: [v.0 - w, v.1 - w],
            v_hi: [v.0 + w, v.1 + w],
            i_lo: [i.0 - w, i.1 - w],
            i_hi: [i.0 + w, i.1 + w],
            g_pmu: 10.0,
        }
    }

    #[test]
    fn objective_hand_values() {
        let y = build_bus_admittance(&line_case(2)).unwrap();
        let ms = MeasurementSet {
            pmu: vec![pmu(1, (1.0, 0.0), (0.0, 0.0), 0.1)],
            rtu: vec![],
        };
        let prob = Problem::new(&y, &ms, PmuVoltageBounds::Multipliers).unwrap();
        let mut x = vec![0.0; prob.layout.nx];
        x[0] = 1.0;
        x[prob.layout.pmu(0, 0)] = 1.0;
        assert_eq!(prob.objective(&x), 0.0);
        x[prob.layout.pmu(0, 0)] = 1.01;
        assert!((prob.objective(&x) - 0.01).abs() < 1e-15);
    }

    #[test]
    fn rtu_primal_hand_value() {
        let mut case = line_case(2);
        case.branches[0].r = 0.0;
        case.branches[0].b = 0.0;
        let y = build_bus_admittance(&case).unwrap();
        let ms = MeasurementSet {
            pmu: vec![],
            rtu: vec![rtu(2, 1.0, 0.0, 0.1)],
        };
        let prob = Problem::new(&y, &ms, PmuVoltageBounds::Multipliers).unwrap();
        let l = prob.layout;
        let mut x = vec![0.0; l.nx];
        x[l.v_re(0)] = 1.0;
        x[l.v_re(1)] = 1.0;
        x[l.rtu_g(0)] = 1.0;
        let res = prob.primal_residual(&x);
        assert!((res[1] - 1.0).abs() < 1e-12);
        assert!(res[0].abs() < 1e-12 && res[2].abs() < 1e-12 && res[3].abs() < 1e-12);
    }

    #[test]
    fn zero_voltage_no_measurements() {
        let y = build_bus_admittance(&line_case(3)).unwrap();
        let ms = MeasurementSet::default();
        let prob = Problem::new(&y, &ms, PmuVoltageBounds::Multipliers).unwrap();
        let res = prob.primal_residual(&vec![0.0; prob.layout.nx]);
        assert!(res.iter().all(|&r| r == 0.0));
    }

    #[test]
    fn rtu_sensitivity_examples() {
        assert_eq!(
            rtu_sensitivity(1.0, 0.0, 1.0, 0.0),
            [[1.0, 0.0, 1.0, 0.0], [0.0, 1.0, 0.0, -1.0]]
        );
        assert_eq!(rtu_sensitivity(0.0, 0.0, 0.0, 0.0), [[0.0; 4]; 2]);
    }

    #[test]
    fn rtu_sensitivity_matches_finite_differences() {
        let current = |z: [f64; 4]| [z[2] * z[0] + z[3] * z[1], z[2] * z[1] - z[3] * z[0]];
        let z = [0.97, -0.21, 0.83, 0.35];
        let s = rtu_sensitivity(z[2], z[3], z[0], z[1]);
        let h = 1e-6;
        for c in 0..4 {
            let (mut zp, mut zm) = (z, z);
            zp[c] += h;
            zm[c] -= h;
            let (ip, im) = (current(zp), current(zm));
            for row in 0..2 {
                assert!(((ip[row] - im[row]) / (2.0 * h) - s[row][c]).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn rtu_adjoint_examples() {
        assert_eq!(rtu_adjoint_currents(1.0, 0.0, 0.3, -0.7), (0.3, -0.7));
        assert_eq!(rtu_adjoint_currents(0.0, 1.0, 1.0, 0.0), (0.0, 1.0));
        let (g, b, lr, li) = (0.7, -0.4, 1.3, 0.2);
        let s = rtu_sensitivity(g, b, 0.9, 0.1);
        let (ar, ai) = rtu_adjoint_currents(g, b, lr, li);
        assert!((ar - (s[0][0] * lr + s[1][0] * li)).abs() < 1e-15);
        assert!((ai - (s[0][1] * lr + s[1][1] * li)).abs() < 1e-15);
    }

    #[test]
    fn adjoint_vanishes_at_unconstrained_minimum() {
        let y = build_bus_admittance(&line_case(3)).unwrap();
        let ms = MeasurementSet {
            pmu: vec![pmu(1, (1.0, 0.0), (0.2, 0.1), 0.1)],
            rtu: vec![rtu(3, 0.5, 0.2, 0.1)],
        };
        let prob = Problem::new(&y, &ms, PmuVoltageBounds::Multipliers).unwrap();
        let l = prob.layout;
        let mut x = vec![0.3; l.nx];
        x[l.pmu(0, 0)] = x[l.v_re(0)];
        x[l.pmu(0, 1)] = x[l.v_im(0)];
        x[l.rtu_g(0)] = 0.5;
        x[l.rtu_b(0)] = 0.2;
        let res = prob.adjoint_residual(&x, &vec![0.0; 2 * l.n], &vec![0.0; l.m]);
        assert!(res.iter().all(|&r| r == 0.0));
    }

    #[test]
    fn adjoint_rtu_row_hand_value() {
        let y = build_bus_admittance(&line_case(2)).unwrap();
        let ms = MeasurementSet {
            pmu: vec![],
            rtu: vec![rtu(2, 0.5, 0.2, 0.1)],
        };
        let prob = Problem::new(&y, &ms, PmuVoltageBounds::Multipliers).unwrap();
        let l = prob.layout;
        let mut x = vec![0.0; l.nx];
        x[l.v_re(1)] = 0.98;
        x[l.v_im(1)] = -0.05;
        x[l.rtu_g(0)] = 0.5;
        x[l.rtu_b(0)] = 0.2;
        let mut lam = vec![0.0; 2 * l.n];
        lam[1] = 1.0;
        let mut mu = vec![0.0; l.m];
        mu[0] = 0.5; // upper side of g
        let res = prob.adjoint_residual(&x, &lam, &mu);
        assert!((res[l.rtu_g(0)] - (0.98 + 0.5)).abs() < 1e-15);
    }

    #[test]
    fn bound_residual_examples() {
        let y = build_bus_admittance(&line_case(2)).unwrap();
        let ms = MeasurementSet {
            pmu: vec![],
            rtu: vec![rtu(2, 0.5, 0.2, 0.1)],
        };
        let prob = Problem::new(&y, &ms, PmuVoltageBounds::Multipliers).unwrap();
        let l = prob.layout;
        let mut x = vec![0.0; l.nx];
        x[l.rtu_g(0)] = 0.5;
        x[l.rtu_b(0)] = 0.3;
        let ib = prob.bound_residual(&x);
        assert!((ib[0] + 0.1).abs() < 1e-15 && (ib[1] + 0.1).abs() < 1e-15);
        assert!(ib[2].abs() < 1e-15);
        assert!((ib[3] + 0.2).abs() < 1e-15);
    }

    #[test]
    fn complementarity_examples() {
        assert_eq!(complementarity_residual(&[0.0], &[-3.0], 0.0), vec![0.0]);
        assert_eq!(complementarity_residual(&[2.0], &[-0.5], 1.0), vec![0.0]);
    }

    #[test]
    fn zero_width_boxes_are_fixed() {
        let y = build_bus_admittance(&line_case(2)).unwrap();
        let ms = MeasurementSet {
            pmu: vec![pmu(1, (1.0, 0.0), (0.2, 0.0), 0.0)],
            rtu: vec![rtu(2, 0.5, 0.2, 0.0)],
        };
        let prob = Problem::new(&y, &ms, PmuVoltageBounds::Multipliers).unwrap();
        assert_eq!(prob.layout.m, 0);
        assert_eq!(prob.kinds[prob.layout.rtu_g(0)], VarKind::Fixed(0.5));
        assert_eq!(prob.kinds[prob.layout.pmu(0, 2)], VarKind::Fixed(0.2));
    }

    #[test]
    fn limited_mode_drops_voltage_multipliers() {
        let y = build_bus_admittance(&line_case(2)).unwrap();
        let ms = MeasurementSet {
            pmu: vec![pmu(1, (1.0, 0.0), (0.2, 0.1), 0.01)],
            rtu: vec![],
        };
        let full = Problem::new(&y, &ms, PmuVoltageBounds::Multipliers).unwrap();
        let short = Problem::new(&y, &ms, PmuVoltageBounds::Limited).unwrap();
        assert_eq!(full.layout.m, 8);
        assert_eq!(short.layout.m, 4);
        assert!(matches!(
            short.kinds[short.layout.pmu(0, 0)],
            VarKind::Limited { .. }
        ));
    }

    #[test]
    fn unknown_measurement_bus() {
        let y = build_bus_admittance(&line_case(2)).unwrap();
        let ms = MeasurementSet {
            pmu: vec![],
            rtu: vec![rtu(9, 0.5, 0.2, 0.1)],
        };
        let err = Problem::new(&y, &ms, PmuVoltageBounds::Multipliers).unwrap_err();
        assert!(err.to_string().contains("bus 9"));
    }

    #[test]
    fn pack_round_trip() {
        let y = build_bus_admittance(&line_case(3)).unwrap();
        let ms = MeasurementSet {
            pmu: vec![pmu(1, (1.0, 0.0), (0.2, 0.1), 0.1)],
            rtu: vec![rtu(3, 0.5, 0.2, 0.1)],
        };
        let prob = Problem::new(&y, &ms, PmuVoltageBounds::Multipliers).unwrap();
        let x: Vec<f64> = (0..prob.layout.nx).map(|i| i as f64 * 0.1).collect();
        assert_eq!(prob.pack(&prob.unpack(&x)).unwrap(), x);
        let mut bad = prob.unpack(&x);
        bad.g_rtu.push(0.0);
        assert!(prob.pack(&bad).is_err());
    }
}

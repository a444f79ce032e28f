//! Split-circuit transmission network: the real and imaginary parts of the
//! bus admittance matrix and the network currents they produce.

use std::collections::HashMap;

use num_complex::Complex64;

use crate::case_io::CaseNetwork;
use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

/// `Ybus = y_g + j·y_b`, both stored on the same pattern.
#[derive(Debug, Clone)]
pub struct AdmittancePair {
    pub y_g: CsrMatrix,
    pub y_b: CsrMatrix,
    pub n: usize,
    pub bus_index: HashMap<u32, usize>,
    /// Bus ids in row order.
    pub bus_ids: Vec<u32>,
}

impl AdmittancePair {
    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        Complex64::new(self.y_g.get(row, col), self.y_b.get(row, col))
    }

    /// Complex product `Ybus · V`.
    pub fn mul_complex(&self, v: &[Complex64]) -> Vec<Complex64> {
        let v_re: Vec<f64> = v.iter().map(|c| c.re).collect();
        let v_im: Vec<f64> = v.iter().map(|c| c.im).collect();
        let (i_re, i_im) = injection_current(self, &v_re, &v_im).expect("dimensions match");
        i_re.into_iter()
            .zip(i_im)
            .map(|(r, i)| Complex64::new(r, i))
            .collect()
    }
}

/// Assembles the bus admittance matrix with π-model branches, MATPOWER tap
/// convention (off-nominal ratio on the from side) and bus shunts.
pub fn build_bus_admittance(net: &CaseNetwork) -> Result<AdmittancePair> {
    let n = net.buses.len();
    let bus_index = net.bus_index();
    let mut entries: Vec<(usize, usize, Complex64)> =
        Vec::with_capacity(n + 4 * net.branches.len());

    for (k, bus) in net.buses.iter().enumerate() {
        entries.push((k, k, Complex64::new(bus.gs, bus.bs)));
    }
    for br in net.branches.iter().filter(|b| b.in_service) {
        if br.r == 0.0 && br.x == 0.0 {
            return Err(Error::ZeroImpedance {
                from: br.from,
                to: br.to,
            });
        }
        let f = *bus_index
            .get(&br.from)
            .ok_or_else(|| Error::InvalidCase(format!("unknown bus {}", br.from)))?;
        let t = *bus_index
            .get(&br.to)
            .ok_or_else(|| Error::InvalidCase(format!("unknown bus {}", br.to)))?;
        let ys = Complex64::new(br.r, br.x).inv();
        let charging = Complex64::new(0.0, br.b / 2.0);
        let tap = Complex64::from_polar(br.tap, br.shift);
        let ytt = ys + charging;
        let yff = ytt / (br.tap * br.tap);
        let yft = -ys / tap.conj();
        let ytf = -ys / tap;
        entries.push((f, f, yff));
        entries.push((t, t, ytt));
        entries.push((f, t, yft));
        entries.push((t, f, ytf));
    }

    let g: Vec<_> = entries.iter().map(|&(r, c, y)| (r, c, y.re)).collect();
    let b: Vec<_> = entries.iter().map(|&(r, c, y)| (r, c, y.im)).collect();
    Ok(AdmittancePair {
        y_g: CsrMatrix::from_triplets(n, n, &g),
        y_b: CsrMatrix::from_triplets(n, n, &b),
        n,
        bus_index,
        bus_ids: net.buses.iter().map(|b| b.id).collect(),
    })
}

/// Network part of the split-circuit KCL: `(Y_G V_R − Y_B V_I, Y_G V_I + Y_B V_R)`.
pub fn injection_current(
    y: &AdmittancePair,
    v_re: &[f64],
    v_im: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    for len in [v_re.len(), v_im.len()] {
        if len != y.n {
            return Err(Error::Dimension {
                expected: y.n,
                got: len,
            });
        }
    }
    let mut i_re = vec![0.0; y.n];
    let mut i_im = vec![0.0; y.n];
    for k in 0..y.n {
        let span = y.y_g.row_ptr[k]..y.y_g.row_ptr[k + 1];
        let (mut re, mut im) = (0.0, 0.0);
        for p in span {
            let c = y.y_g.col_idx[p];
            let (g, b) = (y.y_g.values[p], y.y_b.values[p]);
            re += g * v_re[c] - b * v_im[c];
            im += g * v_im[c] + b * v_re[c];
        }
        i_re[k] = re;
        i_im[k] = im;
    }
    Ok((i_re, i_im))
}

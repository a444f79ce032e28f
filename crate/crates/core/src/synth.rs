//! Synthetic PMU/RTU measurements drawn around a power-flow truth state.
//!
//! Noise follows `x̂ = x̄ + σ·(2κ − 1)` with `σ = rel_std · |x̄|` and κ on the
//! open unit interval. The power factor is perturbed by an absolute
//! `rtu_pf_std · (2κ − 1)` instead, since it is itself a ratio. Bounds are ±3σ boxes for PMU phasor components and an
//! interval-analysis box for the RTU admittance.

use std::collections::BTreeSet;
use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::case_io::{CaseNetwork, MeasurementSet, PmuMeasurement, RtuMeasurement};
use crate::error::{Error, Result};
use crate::powerflow::TruthState;

/// Mismatch conductance attached to every PMU, per unit.
pub const DEFAULT_G_PMU: f64 = 10.0;

/// Standard deviations of each measured quantity, relative to the measured
/// magnitude except `rtu_pf_std`, which is absolute on `cos φ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseProfile {
    pub rtu_current_std: f64,
    pub rtu_voltage_std: f64,
    pub rtu_pf_std: f64,
    pub pmu_current_std: f64,
    pub pmu_voltage_std: f64,
}

impl NoiseProfile {
    /// RTU 0.4 % current, 0.4 % voltage, 0.6 % power factor; PMU 0.02 %.
    pub const TABLE3: Self = Self {
        rtu_current_std: 0.004,
        rtu_voltage_std: 0.004,
        rtu_pf_std: 0.006,
        pmu_current_std: 0.0002,
        pmu_voltage_std: 0.0002,
    };

    pub const ZERO: Self = Self {
        rtu_current_std: 0.0,
        rtu_voltage_std: 0.0,
        rtu_pf_std: 0.0,
        pmu_current_std: 0.0,
        pmu_voltage_std: 0.0,
    };

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.rtu_current_std,
            self.rtu_voltage_std,
            self.rtu_pf_std,
            self.pmu_current_std,
            self.pmu_voltage_std,
        ];
        if all.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
            return Err(Error::InvalidArgument(format!(
                "noise standard deviations must be finite and non-negative: {all:?}"
            )));
        }
        Ok(())
    }
}

impl Default for NoiseProfile {
    fn default() -> Self {
        Self::TABLE3
    }
}

/// Distribution of κ on the open interval (0, 1).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KappaDistribution {
    /// Noise uniform on (−σ, σ).
    #[default]
    Uniform,
    /// Normal with mean 1/2 and standard deviation 1/6, rejected outside (0, 1).
    TruncatedNormal,
}

impl KappaDistribution {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        loop {
            let k = match self {
                Self::Uniform => rng.random::<f64>(),
                Self::TruncatedNormal => Normal::new(0.5, 1.0 / 6.0).unwrap().sample(rng),
            };
            if k > 0.0 && k < 1.0 {
                return k;
            }
        }
    }
}

/// Perturbs `true_value` by `σ·(2κ − 1)` where `σ = sigma_std · |true_value|`.
pub fn apply_noise<R: Rng + ?Sized>(
    true_value: f64,
    sigma_std: f64,
    kappa: KappaDistribution,
    rng: &mut R,
) -> f64 {
    let k = kappa.sample(rng);
    noise_with_kappa(true_value, sigma_std, k)
}

/// Deterministic core of [`apply_noise`] for a given κ.
pub fn noise_with_kappa(true_value: f64, sigma_std: f64, kappa: f64) -> f64 {
    let sigma = sigma_std * true_value.abs();
    true_value + sigma * (2.0 * kappa - 1.0)
}

/// Equivalent RTU admittance `(g, b)` with `I = (g − jb)·V`, for a current of
/// magnitude `i_mag` lagging the voltage by `phi`.
pub fn rtu_from_phasors(v_mag: f64, i_mag: f64, phi: f64) -> Result<(f64, f64)> {
    if !(v_mag > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "voltage magnitude must be positive, got {v_mag}"
        )));
    }
    let y = i_mag / v_mag;
    Ok((y * phi.cos(), y * phi.sin()))
}

/// Angle interval compatible with a power factor known to within
/// `±3·pf_std` (absolute). `phi` supplies the sign of the angle. When the upper end
/// of the power-factor interval reaches 1 (or the lower end reaches −1) the
/// sign is ambiguous and the interval straddles 0 (or ±π).
pub fn pf_angle_interval(phi: f64, pf_std: f64) -> (f64, f64) {
    let pf = phi.cos();
    let half = 3.0 * pf_std;
    let pf_lo = (pf - half).max(-1.0);
    let pf_hi = (pf + half).min(1.0);
    let near = pf_hi.acos(); // smallest |angle|
    let far = pf_lo.acos(); // largest |angle|
    if pf_std == 0.0 {
        return (phi, phi);
    }
    let positive = phi >= 0.0;
    match (pf_hi >= 1.0, pf_lo <= -1.0) {
        (true, true) => (-PI, PI),
        (true, false) => (-far, far),
        (false, true) => {
            if positive {
                (near, 2.0 * PI - near)
            } else {
                (-2.0 * PI + near, -near)
            }
        }
        (false, false) => {
            if positive {
                (near, far)
            } else {
                (-far, -near)
            }
        }
    }
}

/// Range of `cos` and `sin` over `[lo, hi]`, including interior extrema at
/// multiples of π/2.
pub fn trig_range(lo: f64, hi: f64) -> ((f64, f64), (f64, f64)) {
    assert!(lo <= hi, "degenerate angle interval [{lo}, {hi}]");
    let mut cos = (lo.cos().min(hi.cos()), lo.cos().max(hi.cos()));
    let mut sin = (lo.sin().min(hi.sin()), lo.sin().max(hi.sin()));
    let first = (lo / FRAC_PI_2).ceil() as i64;
    let last = (hi / FRAC_PI_2).floor() as i64;
    for m in first..=last {
        match m.rem_euclid(4) {
            0 => cos.1 = 1.0,
            1 => sin.1 = 1.0,
            2 => cos.0 = -1.0,
            _ => sin.0 = -1.0,
        }
    }
    (cos, sin)
}

/// Tightest box around `{(y cos p, y sin p)}` for `y ∈ [y_lo, y_hi] ⊂ [0, ∞)`
/// and `p ∈ [p_lo, p_hi]`.
pub fn admittance_box(y_lo: f64, y_hi: f64, p_lo: f64, p_hi: f64) -> (f64, f64, f64, f64) {
    let ((c_lo, c_hi), (s_lo, s_hi)) = trig_range(p_lo, p_hi);
    let span = |lo: f64, hi: f64| {
        let cands = [y_lo * lo, y_hi * lo, y_lo * hi, y_hi * hi];
        (
            cands.iter().copied().fold(f64::INFINITY, f64::min),
            cands.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        )
    };
    let (g_lo, g_hi) = span(c_lo, c_hi);
    let (b_lo, b_hi) = span(s_lo, s_hi);
    (g_lo, g_hi, b_lo, b_hi)
}

/// Interval-analysis bounds `(g_lo, g_hi, b_lo, b_hi)` of the RTU admittance
/// for measured `(v_mag, i_mag, phi)` known to within ±3σ.
pub fn rtu_interval_bounds(
    v_mag: f64,
    i_mag: f64,
    phi: f64,
    profile: &NoiseProfile,
) -> Result<(f64, f64, f64, f64)> {
    let v_lo = v_mag * (1.0 - 3.0 * profile.rtu_voltage_std);
    let v_hi = v_mag * (1.0 + 3.0 * profile.rtu_voltage_std);
    if !(v_lo > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "voltage interval reaches zero (v = {v_mag}, std = {})",
            profile.rtu_voltage_std
        )));
    }
    let i_lo = i_mag * (1.0 - 3.0 * profile.rtu_current_std).max(0.0);
    let i_hi = i_mag * (1.0 + 3.0 * profile.rtu_current_std);
    let (p_lo, p_hi) = pf_angle_interval(phi, profile.rtu_pf_std);
    if profile.rtu_voltage_std == 0.0 && profile.rtu_current_std == 0.0 && p_lo == p_hi {
        let (g, b) = rtu_from_phasors(v_mag, i_mag, phi)?;
        return Ok((g, g, b, b));
    }
    Ok(admittance_box(i_lo / v_hi, i_hi / v_lo, p_lo, p_hi))
}

/// Which buses carry which device. Buses in neither set are zero-injection.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Placement {
    pub pmu_buses: BTreeSet<u32>,
    pub rtu_buses: BTreeSet<u32>,
    pub seed: u64,
}

impl Placement {
    pub fn validate(&self, net: &CaseNetwork) -> Result<()> {
        let index = net.bus_index();
        if let Some(b) = self.pmu_buses.intersection(&self.rtu_buses).next() {
            return Err(Error::InvalidArgument(format!(
                "bus {b} has both a PMU and an RTU"
            )));
        }
        for b in self.pmu_buses.iter().chain(&self.rtu_buses) {
            if !index.contains_key(b) {
                return Err(Error::InvalidArgument(format!(
                    "placement names unknown bus {b}"
                )));
            }
        }
        Ok(())
    }

    /// PMUs on the `pmu_count` highest-degree buses (ties broken by bus
    /// order); RTUs on every other bus with a nonzero scheduled injection.
    /// Buses without load or generation stay zero-injection.
    pub fn by_degree(net: &CaseNetwork, pmu_count: usize, seed: u64) -> Self {
        let degrees = net.degrees();
        let mut order: Vec<usize> = (0..net.buses.len()).collect();
        order.sort_by(|&a, &b| degrees[b].cmp(&degrees[a]).then(a.cmp(&b)));
        let pmu: BTreeSet<u32> = order
            .iter()
            .take(pmu_count.min(net.buses.len()))
            .map(|&k| net.buses[k].id)
            .collect();
        Self::with_pmus(net, pmu, seed)
    }

    /// RTUs on every non-PMU bus with a nonzero scheduled injection.
    pub fn with_pmus(net: &CaseNetwork, pmu_buses: BTreeSet<u32>, seed: u64) -> Self {
        let injection = net.scheduled_injection();
        let rtu = net
            .buses
            .iter()
            .zip(&injection)
            .filter(|(b, s)| !pmu_buses.contains(&b.id) && (s.0 != 0.0 || s.1 != 0.0))
            .map(|(b, _)| b.id)
            .collect();
        Self {
            pmu_buses,
            rtu_buses: rtu,
            seed,
        }
    }

    /// Fails when fewer than `round(frac · n)` buses are RTU-measured or
    /// zero-injection. A zero-injection bus counts as covered: its KCL row is
    /// the exact reading of an RTU whose current is zero.
    pub fn check_rtu_fraction(&self, net: &CaseNetwork, frac: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&frac) {
            return Err(Error::InvalidArgument(format!(
                "RTU fraction must lie in [0, 1], got {frac}"
            )));
        }
        let n = net.buses.len();
        let wanted = (frac * n as f64).round() as usize;
        let covered = n - self.pmu_buses.len();
        if wanted > covered {
            return Err(Error::InvalidArgument(format!(
                "RTU fraction {frac} needs {wanted} buses but only {covered} are left after PMU placement"
            )));
        }
        Ok(())
    }

    /// Counts of PMU, RTU and zero-injection buses.
    pub fn coverage(&self, net: &CaseNetwork) -> (usize, usize, usize) {
        let zi = net.buses.len() - self.pmu_buses.len() - self.rtu_buses.len();
        (self.pmu_buses.len(), self.rtu_buses.len(), zi)
    }
}

/// Options for [`synthesize_measurements`] beyond the noise profile.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthOptions {
    pub g_pmu: f64,
    pub kappa: KappaDistribution,
    /// ChaCha stream id; benchmark trials use their index.
    pub stream: u64,
}

impl Default for SynthOptions {
    fn default() -> Self {
        Self {
            g_pmu: DEFAULT_G_PMU,
            kappa: KappaDistribution::Uniform,
            stream: 0,
        }
    }
}

/// The pinned generator for measurement noise.
pub fn noise_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Draws one measurement set. Draw order is fixed: PMUs then RTUs, each in
/// ascending bus id; per PMU `v_re, v_im, i_re, i_im`; per RTU `|V|, |I|, pf`.
pub fn synthesize_measurements(
    net: &CaseNetwork,
    truth: &TruthState,
    placement: &Placement,
    profile: &NoiseProfile,
    options: &SynthOptions,
) -> Result<MeasurementSet> {
    placement.validate(net)?;
    profile.validate()?;
    if !(options.g_pmu > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "g_pmu must be positive, got {}",
            options.g_pmu
        )));
    }
    let index = net.bus_index();
    let mut rng = noise_rng(placement.seed, options.stream);
    let kappa = options.kappa;

    let mut pmu = Vec::with_capacity(placement.pmu_buses.len());
    for &bus in &placement.pmu_buses {
        let k = index[&bus];
        let mut comp = |x: f64, std: f64| {
            let measured = apply_noise(x, std, kappa, &mut rng);
            let half = 3.0 * std * x.abs();
            (measured, measured - half, measured + half)
        };
        let (v_re, v_re_lo, v_re_hi) = comp(truth.v_re[k], profile.pmu_voltage_std);
        let (v_im, v_im_lo, v_im_hi) = comp(truth.v_im[k], profile.pmu_voltage_std);
        let (i_re, i_re_lo, i_re_hi) = comp(truth.i_re[k], profile.pmu_current_std);
        let (i_im, i_im_lo, i_im_hi) = comp(truth.i_im[k], profile.pmu_current_std);
        pmu.push(PmuMeasurement {
            bus,
            v_re,
            v_im,
            i_re,
            i_im,
            v_lo: [v_re_lo, v_im_lo],
            v_hi: [v_re_hi, v_im_hi],
            i_lo: [i_re_lo, i_im_lo],
            i_hi: [i_re_hi, i_im_hi],
            g_pmu: options.g_pmu,
        });
    }

    let mut rtu = Vec::with_capacity(placement.rtu_buses.len());
    for &bus in &placement.rtu_buses {
        let k = index[&bus];
        let v = truth.voltage(k);
        // device current drawn from the bus is the negative network injection
        let i_dev = -truth.current(k);
        if i_dev.norm() == 0.0 {
            return Err(Error::ZeroInjection(bus));
        }
        let (v_mag, i_mag, phi) = rtu_phasors(v, i_dev);
        let v_meas = apply_noise(v_mag, profile.rtu_voltage_std, kappa, &mut rng);
        let i_meas = apply_noise(i_mag, profile.rtu_current_std, kappa, &mut rng);
        let pf = phi.cos();
        let pf_meas =
            (pf + profile.rtu_pf_std * (2.0 * kappa.sample(&mut rng) - 1.0)).clamp(-1.0, 1.0);
        let phi_meas = if pf_meas == pf {
            phi
        } else {
            pf_meas.acos().copysign(phi)
        };
        let (g_m, b_m) = rtu_from_phasors(v_meas, i_meas, phi_meas)?;
        let (g_lo, g_hi, b_lo, b_hi) = rtu_interval_bounds(v_meas, i_meas, phi_meas, profile)?;
        rtu.push(RtuMeasurement {
            bus,
            g_m,
            b_m,
            g_lo: g_lo.min(g_m),
            g_hi: g_hi.max(g_m),
            b_lo: b_lo.min(b_m),
            b_hi: b_hi.max(b_m),
        });
    }
    let ms = MeasurementSet { pmu, rtu };
    ms.validate()?;
    Ok(ms)
}

/// `(|V|, |I|, φ)` with φ the angle by which the device current lags the
/// voltage, wrapped to (−π, π].
pub fn rtu_phasors(v: Complex64, i_dev: Complex64) -> (f64, f64, f64) {
    let mut phi = v.arg() - i_dev.arg();
    if phi > PI {
        phi -= 2.0 * PI;
    } else if phi <= -PI {
        phi += 2.0 * PI;
    }
    (v.norm(), i_dev.norm(), phi)
}

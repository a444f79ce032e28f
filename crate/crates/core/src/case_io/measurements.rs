use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A PMU at one bus: the measured voltage and injection-current phasors in
/// rectangular form, a box per component, and the mismatch conductance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PmuMeasurement {
    pub bus: u32,
    pub v_re: f64,
    pub v_im: f64,
    pub i_re: f64,
    pub i_im: f64,
    /// Lower/upper voltage box as `[re, im]`.
    pub v_lo: [f64; 2],
    pub v_hi: [f64; 2],
    /// Lower/upper current box as `[re, im]`.
    pub i_lo: [f64; 2],
    pub i_hi: [f64; 2],
    pub g_pmu: f64,
}

/// An RTU at one bus, expressed as a bounded equivalent admittance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RtuMeasurement {
    pub bus: u32,
    pub g_m: f64,
    pub b_m: f64,
    pub g_lo: f64,
    pub g_hi: f64,
    pub b_lo: f64,
    pub b_hi: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasurementSet {
    pub pmu: Vec<PmuMeasurement>,
    pub rtu: Vec<RtuMeasurement>,
}

impl MeasurementSet {
    pub fn is_empty(&self) -> bool {
        self.pmu.is_empty() && self.rtu.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidMeasurements(m));
        let mut seen = HashSet::new();
        for p in &self.pmu {
            if !seen.insert(p.bus) {
                return bad(format!("bus {} has more than one measurement", p.bus));
            }
            if !(p.g_pmu > 0.0 && p.g_pmu.is_finite()) {
                return bad(format!(
                    "bus {}: g_pmu must be positive, got {}",
                    p.bus, p.g_pmu
                ));
            }
            let boxes = [
                ("v_re", p.v_re, p.v_lo[0], p.v_hi[0]),
                ("v_im", p.v_im, p.v_lo[1], p.v_hi[1]),
                ("i_re", p.i_re, p.i_lo[0], p.i_hi[0]),
                ("i_im", p.i_im, p.i_lo[1], p.i_hi[1]),
            ];
            for (name, value, lo, hi) in boxes {
                check_box(p.bus, name, value, lo, hi)?;
            }
        }
        for r in &self.rtu {
            if !seen.insert(r.bus) {
                return bad(format!("bus {} has more than one measurement", r.bus));
            }
            check_box(r.bus, "g", r.g_m, r.g_lo, r.g_hi)?;
            check_box(r.bus, "b", r.b_m, r.b_lo, r.b_hi)?;
        }
        Ok(())
    }
}

fn check_box(bus: u32, name: &str, value: f64, lo: f64, hi: f64) -> Result<()> {
    if !(value.is_finite() && lo.is_finite() && hi.is_finite()) {
        return Err(Error::InvalidMeasurements(format!(
            "bus {bus}: non-finite {name} entry"
        )));
    }
    if !(lo <= value && value <= hi) {
        return Err(Error::InvalidMeasurements(format!(
            "bus {bus}: {name} = {value} outside its box [{lo}, {hi}]"
        )));
    }
    Ok(())
}

/// Reads a measurement document and checks every invariant.
pub fn parse_measurements(text: &str) -> Result<MeasurementSet> {
    let ms: MeasurementSet =
        serde_json::from_str(text).map_err(|e| Error::InvalidMeasurements(e.to_string()))?;
    ms.validate()?;
    Ok(ms)
}

/// Renders a measurement document. Floats are written in shortest
/// round-trip form, so parsing the output reproduces `ms` bit for bit.
pub fn write_measurements(ms: &MeasurementSet) -> String {
    serde_json::to_string_pretty(ms).expect("measurement set serializes")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_pmu() -> MeasurementSet {
        MeasurementSet {
            pmu: vec![PmuMeasurement {
                bus: 1,
                v_re: 1.0,
                v_im: 0.0,
                i_re: 0.5,
                i_im: -0.1,
                v_lo: [1.0 - 0.0006, -0.0006],
                v_hi: [1.0 + 0.0006, 0.0006],
                i_lo: [0.5 - 0.0006, -0.1 - 0.0006],
                i_hi: [0.5 + 0.0006, -0.1 + 0.0006],
                g_pmu: 10.0,
            }],
            rtu: vec![],
        }
    }

    #[test]
    fn single_pmu_document() {
        let text = write_measurements(&one_pmu());
        let back = parse_measurements(&text).unwrap();
        assert_eq!(back.pmu.len(), 1);
        assert!(back.rtu.is_empty());
        assert_eq!(back, one_pmu());
    }

    #[test]
    fn empty_document_is_valid() {
        let ms = parse_measurements(r#"{"pmu": [], "rtu": []}"#).unwrap();
        assert!(ms.is_empty());
        assert_eq!(parse_measurements(&write_measurements(&ms)).unwrap(), ms);
    }

    #[test]
    fn bus_in_both_lists_conflicts() {
        let mut ms = one_pmu();
        ms.pmu[0].bus = 3;
        ms.rtu.push(RtuMeasurement {
            bus: 3,
            g_m: 1.0,
            b_m: 0.0,
            g_lo: 0.9,
            g_hi: 1.1,
            b_lo: -0.1,
            b_hi: 0.1,
        });
        let err = parse_measurements(&write_measurements(&ms)).unwrap_err();
        assert!(err.to_string().contains("bus 3"), "{err}");
    }

    #[test]
    fn box_excluding_mean_is_rejected() {
        let text = r#"{"pmu": [], "rtu": [{"bus": 2, "g_m": 2.0, "b_m": 0.0,
            "g_lo": 0.9, "g_hi": 1.1, "b_lo": -0.1, "b_hi": 0.1}]}"#;
        assert!(parse_measurements(text).is_err());
    }

    #[test]
    fn nonpositive_g_pmu_is_rejected() {
        let mut ms = one_pmu();
        ms.pmu[0].g_pmu = 0.0;
        assert!(parse_measurements(&write_measurements(&ms)).is_err());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = r#"{"pmu": [], "rtu": [], "extra": 1}"#;
        assert!(parse_measurements(text).is_err());
        let text = r#"{"pmu": [], "rtu": [{"bus": 2, "g_m": 1.0, "b_m": 0.0, "gm": 1.0,
            "g_lo": 0.9, "g_hi": 1.1, "b_lo": -0.1, "b_hi": 0.1}]}"#;
        assert!(parse_measurements(text).is_err());
    }
}

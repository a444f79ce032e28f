//! File formats: MATPOWER case files, measurement documents and estimate reports.

mod matpower;
mod measurements;
mod report;

pub use matpower::{parse_matpower, Branch, Bus, BusType, CaseNetwork, Gen};
pub use measurements::{
    parse_measurements, write_measurements, MeasurementSet, PmuMeasurement, RtuMeasurement,
};
pub use report::{
    parse_report, write_bench_report, write_report, PmuEstimate, Report, ReportState, RtuEstimate,
};

//! Running the metrics together and formatting the results.

use std::fmt;
use std::str::FromStr;

use crate::config::MetricConfig;
use crate::error::{MetricError, Result};
use crate::image::{check_triple, GrayImage};
use crate::{mi, ncie, qabf, qp, qy, vif};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Metric {
    Mi,
    Ncie,
    Qabf,
    Qp,
    Qy,
    Vif,
}

impl Metric {
    pub const ALL: [Metric; 6] = [Metric::Mi, Metric::Ncie, Metric::Qabf, Metric::Qp, Metric::Qy, Metric::Vif];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Mi => "mi",
            Metric::Ncie => "ncie",
            Metric::Qabf => "qabf",
            Metric::Qp => "qp",
            Metric::Qy => "qy",
            Metric::Vif => "vif",
        }
    }

    pub fn compute(self, ir: &GrayImage, vi: &GrayImage, fused: &GrayImage, cfg: &MetricConfig) -> Result<f64> {
        match self {
            Metric::Mi => mi::mi(ir, vi, fused),
            Metric::Ncie => ncie::ncie(ir, vi, fused),
            Metric::Qabf => qabf::qabf_with(ir, vi, fused, &cfg.qabf),
            Metric::Qp => qp::qp_with(ir, vi, fused, &cfg.qp),
            Metric::Qy => qy::qy_with(ir, vi, fused, &cfg.qy),
            Metric::Vif => vif::vif_with(ir, vi, fused, &cfg.vif),
        }
    }

    /// Parse a comma-separated list such as `"mi,qabf"`; duplicates are dropped.
    pub fn parse_list(list: &str) -> Result<Vec<Metric>> {
        let mut out: Vec<Metric> = Vec::new();
        for part in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let m = part.parse()?;
            if !out.contains(&m) {
                out.push(m);
            }
        }
        if out.is_empty() {
            return Err(MetricError::UnknownMetric(list.to_string()));
        }
        Ok(out)
    }
}

impl FromStr for Metric {
    type Err = MetricError;

    fn from_str(s: &str) -> Result<Self> {
        Metric::ALL.into_iter().find(|m| m.name().eq_ignore_ascii_case(s)).ok_or_else(|| MetricError::UnknownMetric(s.to_string()))
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricReport {
    pub mi: f64,
    pub ncie: f64,
    pub qabf: f64,
    pub qp: f64,
    pub qy: f64,
    pub vif: f64,
}

impl MetricReport {
    pub fn get(&self, m: Metric) -> f64 {
        match m {
            Metric::Mi => self.mi,
            Metric::Ncie => self.ncie,
            Metric::Qabf => self.qabf,
            Metric::Qp => self.qp,
            Metric::Qy => self.qy,
            Metric::Vif => self.vif,
        }
    }

    pub fn entries(&self) -> Vec<(Metric, f64)> {
        Metric::ALL.iter().map(|&m| (m, self.get(m))).collect()
    }

    pub fn to_json(&self) -> String {
        to_json(&self.entries())
    }

    pub fn to_csv(&self) -> String {
        to_csv(&self.entries())
    }
}

pub fn evaluate_all(ir: &GrayImage, vi: &GrayImage, fused: &GrayImage) -> Result<MetricReport> {
    evaluate_all_with(ir, vi, fused, &MetricConfig::default())
}

pub fn evaluate_all_with(ir: &GrayImage, vi: &GrayImage, fused: &GrayImage, cfg: &MetricConfig) -> Result<MetricReport> {
    let v = evaluate(ir, vi, fused, &Metric::ALL, cfg)?;
    Ok(MetricReport { mi: v[0].1, ncie: v[1].1, qabf: v[2].1, qp: v[3].1, qy: v[4].1, vif: v[5].1 })
}

/// The selected metrics, in the order given.
pub fn evaluate(ir: &GrayImage, vi: &GrayImage, fused: &GrayImage, metrics: &[Metric], cfg: &MetricConfig) -> Result<Vec<(Metric, f64)>> {
    check_triple(ir, vi, fused)?;
    metrics.iter().map(|&m| Ok((m, m.compute(ir, vi, fused, cfg)?))).collect()
}

/// One JSON object, values fixed to 4 decimals.
pub fn to_json(entries: &[(Metric, f64)]) -> String {
    let body: Vec<String> = entries.iter().map(|(m, v)| format!("\"{}\": {v:.4}", m.name())).collect();
    format!("{{{}}}", body.join(", "))
}

/// A header line and one value line, values fixed to 4 decimals.
pub fn to_csv(entries: &[(Metric, f64)]) -> String {
    let header: Vec<&str> = entries.iter().map(|(m, _)| m.name()).collect();
    let values: Vec<String> = entries.iter().map(|(_, v)| format!("{v:.4}")).collect();
    format!("{}\n{}\n", header.join(","), values.join(","))
}

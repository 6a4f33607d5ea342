//! Metric reports: per-condition summaries in plot-ready long format.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Running mean and sample standard deviation (Welford).
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Accumulator {
    n: usize,
    mean: f64,
    m2: f64,
}

impl Accumulator {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn count(&self) -> usize {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Sample standard deviation; zero for fewer than two samples.
    pub fn std(&self) -> f64 {
        if self.n < 2 { 0.0 } else { (self.m2 / (self.n - 1) as f64).max(0.0).sqrt() }
    }
}

impl FromIterator<f64> for Accumulator {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut a = Accumulator::default();
        for x in iter {
            a.push(x);
        }
        a
    }
}

/// One row of a report: a method's summary at one condition value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesPoint {
    pub condition: f64,
    pub method: String,
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl SeriesPoint {
    pub fn from_accumulator(condition: f64, method: &str, acc: &Accumulator) -> Self {
        SeriesPoint {
            condition,
            method: method.to_string(),
            mean: if acc.count() == 0 { 0.0 } else { acc.mean() },
            std: acc.std(),
            n: acc.count(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub seed: u64,
    /// Digest of the scene specification the report was computed on.
    pub scene_hash: String,
    pub params: serde_json::Value,
}

impl Default for ReportMetadata {
    fn default() -> Self {
        ReportMetadata {
            seed: 0,
            scene_hash: String::new(),
            params: serde_json::Value::Null,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub name: String,
    /// Name of the quantity on the condition axis (for plotting).
    pub condition: String,
    pub series: Vec<SeriesPoint>,
    pub metadata: ReportMetadata,
}

impl MetricReport {
    pub fn new(name: &str, condition: &str) -> Self {
        MetricReport {
            name: name.to_string(),
            condition: condition.to_string(),
            series: Vec::new(),
            metadata: ReportMetadata::default(),
        }
    }

    pub fn push(&mut self, condition: f64, method: &str, acc: &Accumulator) {
        self.series.push(SeriesPoint::from_accumulator(condition, method, acc));
    }

    pub fn point(&self, method: &str, condition: f64) -> Option<&SeriesPoint> {
        self.series
            .iter()
            .find(|p| p.method == method && (p.condition - condition).abs() <= 1e-9 * condition.abs().max(1.0))
    }

    /// Rows of one method, in condition order.
    pub fn method(&self, method: &str) -> Vec<&SeriesPoint> {
        let mut rows: Vec<&SeriesPoint> = self.series.iter().filter(|p| p.method == method).collect();
        rows.sort_by(|a, b| a.condition.total_cmp(&b.condition));
        rows
    }

    /// Plot-ready CSV with columns `condition,method,mean,std,n`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
        for p in &self.series {
            w.serialize(p).map_err(|e| Error::csv(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path, e))
    }
}

/// Combined JSON summary of several reports.
pub fn write_summary_json(path: &Path, reports: &[MetricReport]) -> Result<()> {
    write_json(path, &reports)
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::json(path, e))?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accumulator_matches_two_pass() {
        let xs = [0.5, 0.25, 1.0, 0.75, 0.6];
        let acc: Accumulator = xs.iter().copied().collect();
        let mean = xs.iter().sum::<f64>() / 5.0;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 4.0;
        assert!((acc.mean() - mean).abs() < 1e-15);
        assert!((acc.std() - var.sqrt()).abs() < 1e-15);
        assert_eq!(Accumulator::default().std(), 0.0);
    }

    #[test]
    fn csv_is_long_format() {
        let dir = tempfile::tempdir().unwrap();
        let mut r = MetricReport::new("temporal-consistency", "lag_s");
        r.push(1.0, "view_pool", &[0.9, 1.0].into_iter().collect());
        r.push(1.0, "average_pool", &[0.5].into_iter().collect());
        let path = dir.path().join("r.csv");
        r.write_csv(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "condition,method,mean,std,n");
        assert_eq!(lines.len(), 3);
        assert!(lines[2].starts_with("1.0,average_pool,0.5,0.0,1"));
        let json = dir.path().join("r.json");
        r.write_json(&json).unwrap();
        assert_eq!(MetricReport::read_json(&json).unwrap(), r);
        assert_eq!(r.point("view_pool", 1.0).unwrap().n, 2);
    }
}

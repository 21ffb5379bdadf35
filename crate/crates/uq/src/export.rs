//! Report writers: domain CSV, pretty JSON and the dashboard's plot data.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use uq_core::harness::{AccuracyGroupReport, DomainReportRow};

pub const DOMAIN_CSV_HEADER: [&str; 5] = ["domain", "npe_mean", "se_mean", "n", "model_id"];

/// One bar in a grouped bar chart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotPoint {
    pub label: String,
    pub group: String,
    pub value: f64,
}

pub fn write_domain_csv<W: Write>(out: W, rows: &[DomainReportRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(DOMAIN_CSV_HEADER)?;
    for r in rows {
        w.write_record([r.domain.clone(), r.npe_mean.to_string(), r.se_mean.to_string(), r.n.to_string(), r.model_id.clone()])?;
    }
    w.flush()?;
    Ok(())
}

/// Correct and incorrect bars for each report, labelled by measure. Empty
/// groups have no mean and get no bar.
pub fn plotdata(reports: &[AccuracyGroupReport]) -> Vec<PlotPoint> {
    let mut points = Vec::new();
    for r in reports {
        for (group, mean) in [("correct", r.mean_correct), ("incorrect", r.mean_incorrect)] {
            if let Some(value) = mean {
                points.push(PlotPoint { label: r.measure.as_str().into(), group: group.into(), value });
            }
        }
    }
    points
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let file = File::create(path).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(BufWriter::new(file))
}

pub fn save_domain_csv(path: &Path, rows: &[DomainReportRow]) -> Result<()> {
    write_domain_csv(create(path)?, rows).with_context(|| format!("writing {}", path.display()))
}

pub fn save_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush().with_context(|| format!("writing {}", path.display()))
}

//! Report emission: fixed-header CSV files for plotting and a JSON document
//! carrying the full report plus the manifest. Numbers go out with 17
//! significant digits so re-parsing is lossless.

use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;

use lindblad_egorov::correspondence::CorrespondenceReport;

use crate::manifest::RunManifest;

pub const RUN_CSV_HEADER: &str =
    "t,hs_distance,envelope,trace_defect,herm_defect,l2_classical,hs_quantum";
pub const SWEEP_CSV_HEADER: &str = "axis,value,hs_distance,envelope";
pub const CORRECTOR_CSV_HEADER: &str = "t,hs_distance,corrected_distance,envelope";

fn fnum(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_run_csv(report: &CorrespondenceReport, path: &Path) -> Result<()> {
    let mut rows = vec![RUN_CSV_HEADER.to_string()];
    for (i, &t) in report.times.iter().enumerate() {
        rows.push(
            [
                fnum(t),
                fnum(report.hs_distance[i]),
                fnum(report.envelope[i]),
                fnum(report.quantum.trace_defect[i]),
                fnum(report.quantum.herm_defect[i]),
                fnum(report.classical.l2[i]),
                fnum(report.quantum.hs_norm[i]),
            ]
            .join(","),
        );
    }
    write_text(path, &(rows.join("\n") + "\n"))
}

pub fn write_sweep_csv(report: &CorrespondenceReport, path: &Path) -> Result<()> {
    let sweep = report
        .sweep
        .as_ref()
        .context("sweep report missing sweep section")?;
    let mut rows = vec![SWEEP_CSV_HEADER.to_string()];
    for p in &sweep.points {
        rows.push(
            [
                sweep.axis.clone(),
                fnum(p.value),
                fnum(p.distance),
                fnum(p.envelope),
            ]
            .join(","),
        );
    }
    write_text(path, &(rows.join("\n") + "\n"))
}

pub fn write_corrector_csv(report: &CorrespondenceReport, path: &Path) -> Result<()> {
    let corrected = report
        .corrected_distance
        .as_ref()
        .context("corrector report missing corrected distances")?;
    let mut rows = vec![CORRECTOR_CSV_HEADER.to_string()];
    for (i, &t) in report.times.iter().enumerate() {
        rows.push(
            [
                fnum(t),
                fnum(report.hs_distance[i]),
                fnum(corrected[i]),
                fnum(report.envelope[i]),
            ]
            .join(","),
        );
    }
    write_text(path, &(rows.join("\n") + "\n"))
}

#[derive(Serialize)]
pub struct FullReport<'a> {
    pub manifest: &'a RunManifest,
    pub report: &'a CorrespondenceReport,
}

pub fn write_report_json(
    report: &CorrespondenceReport,
    manifest: &RunManifest,
    path: &Path,
) -> Result<()> {
    let doc = FullReport { manifest, report };
    let text = serde_json::to_string_pretty(&doc).context("serializing report")?;
    write_text(path, &(text + "\n"))
}

pub fn write_manifest_json(manifest: &RunManifest, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(manifest).context("serializing manifest")?;
    write_text(path, &(text + "\n"))
}

pub fn write_text(path: &Path, content: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let mut f =
        fs::File::create(path).with_context(|| format!("writing {}", path.display()))?;
    f.write_all(content.as_bytes())
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::{Format, RunError, RunRecord, Solver};
use crate::failures::{reference_verdicts, verdict_row, ScenarioClass, Verdict};
use crate::topology::{build_cell, CellParams, TopologyError, Variant};
use crate::traffic::TrafficMatrix;

/// Serialises records in canonical order; the bytes depend only on the
/// records.
pub fn write_records<W: Write>(records: &[RunRecord], format: Format, out: W) -> Result<(), RunError> {
    match format {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(out);
            for r in records {
                w.serialize(r).map_err(|e| RunError::Encode(e.to_string()))?;
            }
            w.flush()?;
        }
        Format::Json => {
            let mut out = out;
            serde_json::to_writer_pretty(&mut out, records).map_err(|e| RunError::Encode(e.to_string()))?;
            out.write_all(b"\n")?;
        }
    }
    Ok(())
}

/// Writes `records.csv` or `records.json` under `dir` and returns its path.
pub fn emit(records: &[RunRecord], format: Format, dir: &Path) -> Result<PathBuf, RunError> {
    std::fs::create_dir_all(dir)?;
    let name = match format {
        Format::Csv => "records.csv",
        Format::Json => "records.json",
    };
    let path = dir.join(name);
    let file = std::io::BufWriter::new(std::fs::File::create(&path)?);
    write_records(records, format, file)?;
    Ok(path)
}

/// Published mean power and delay increases per failure class, in percent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PublishedFigures {
    pub scenario: ScenarioClass,
    pub power_pct: f64,
    pub delay_pct: f64,
}

/// Reference figures for S1..S8 on the modified cell.
pub fn published_reference() -> Vec<PublishedFigures> {
    const POWER: [f64; 8] = [0.2, 0.6, 1.9, 1.3, 1.5, 1.3, 1.3, 0.3];
    const DELAY: [f64; 8] = [2.0, 51.0, 49.0, 131.0, 51.0, 87.0, 65.0, 35.0];
    (0..8)
        .map(|i| PublishedFigures { scenario: ScenarioClass::ALL[i], power_pct: POWER[i], delay_pct: DELAY[i] })
        .collect()
}

/// Per-class means over the successful runs of one solver.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioSummary {
    pub scenario: ScenarioClass,
    pub runs: usize,
    pub ok: usize,
    pub mean_power_delta_pct: Option<f64>,
    pub mean_delay_delta_pct: Option<f64>,
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

pub fn summarize(records: &[RunRecord], solver: Solver) -> Vec<ScenarioSummary> {
    let mut out = Vec::new();
    for s in ScenarioClass::ALL {
        let name = s.to_string();
        let runs: Vec<&RunRecord> =
            records.iter().filter(|r| r.scenario == name && r.solver == solver.as_str()).collect();
        if runs.is_empty() {
            continue;
        }
        let ok: Vec<&RunRecord> = runs.iter().copied().filter(|r| r.is_ok()).collect();
        let power: Vec<f64> = ok.iter().filter_map(|r| r.power_delta_pct).collect();
        let delay: Vec<f64> = ok.iter().filter_map(|r| r.delay_delta_pct).collect();
        out.push(ScenarioSummary {
            scenario: s,
            runs: runs.len(),
            ok: ok.len(),
            mean_power_delta_pct: mean(&power),
            mean_delay_delta_pct: mean(&delay),
        });
    }
    out
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.3}"))
}

/// Side-by-side table of measured means and the reference figures.
pub fn render_comparison(summaries: &[ScenarioSummary]) -> String {
    let reference = published_reference();
    let mut s = String::new();
    writeln!(
        s,
        "{:<8} {:>5} {:>5} {:>10} {:>10} {:>10} {:>10}",
        "scenario", "runs", "ok", "power_%", "ref_pow_%", "delay_%", "ref_dly_%"
    )
    .unwrap();
    for sum in summaries {
        let r = reference.iter().find(|r| r.scenario == sum.scenario);
        writeln!(
            s,
            "{:<8} {:>5} {:>5} {:>10} {:>10} {:>10} {:>10}",
            sum.scenario.to_string(),
            sum.runs,
            sum.ok,
            cell(sum.mean_power_delta_pct),
            cell(r.map(|r| r.power_pct)),
            cell(sum.mean_delay_delta_pct),
            cell(r.map(|r| r.delay_pct)),
        )
        .unwrap();
    }
    s
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurvivabilityRow {
    pub variant: Variant,
    pub computed: [Verdict; 9],
    pub reference: [Verdict; 9],
}

impl SurvivabilityRow {
    pub fn matches(&self) -> bool {
        self.computed == self.reference
    }
}

/// Survivability of both default cells against every class, checked on
/// all ordered server pairs, next to the published verdicts.
pub fn survivability_table() -> Result<Vec<SurvivabilityRow>, TopologyError> {
    [Variant::Original, Variant::Modified]
        .into_iter()
        .map(|v| {
            let t = build_cell(&CellParams::with_variant(v))?;
            let traffic = TrafficMatrix::all_pairs(&t, 1.0);
            Ok(SurvivabilityRow { variant: v, computed: verdict_row(&t, &traffic), reference: reference_verdicts(v) })
        })
        .collect()
}

pub fn render_survivability(rows: &[SurvivabilityRow]) -> String {
    let mut s = format!("{:<20}", "variant");
    for c in ScenarioClass::ALL {
        s.push_str(&format!(" {:>4}", c.to_string()));
    }
    s.push('\n');
    for row in rows {
        for (label, verdicts) in [("computed", &row.computed), ("reference", &row.reference)] {
            s.push_str(&format!("{:<20}", format!("{} {label}", row.variant)));
            for v in verdicts {
                s.push_str(&format!(" {:>4}", v.to_string()));
            }
            s.push('\n');
        }
        s.push_str(&format!("{:<20} {}\n", "", if row.matches() { "match" } else { "MISMATCH" }));
    }
    s
}

//! Evaluation summaries: one row per map plus a `Total` row.
//!
//! The file starts with one `# ` line holding a JSON header (schema version
//! and time unit), followed by a CSV table. Times are kept in seconds in
//! memory and converted only when written.

use std::io::{BufRead, BufReader, Read, Write};

use serde::{Deserialize, Serialize};

use crate::metrics::Metrics;
use crate::CliError;

pub const SUMMARY_SCHEMA_VERSION: u32 = 1;
pub const TOTAL: &str = "Total";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryHeader {
    pub schema: u32,
    /// `s` or `min`, applied to t90, t99 and duration.
    pub time_unit: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub map: String,
    pub policy: String,
    pub t90: Option<f64>,
    pub t99: Option<f64>,
    pub final_coverage: f64,
    pub collisions: usize,
    pub duration: f64,
    pub distance: f64,
    pub collisions_per_100s: f64,
    pub collisions_per_100m: f64,
}

impl SummaryRow {
    pub fn new(map: &str, policy: &str, m: &Metrics) -> Self {
        Self {
            map: map.to_string(),
            policy: policy.to_string(),
            t90: m.t90,
            t99: m.t99,
            final_coverage: m.final_coverage,
            collisions: m.collisions,
            duration: m.duration,
            distance: m.distance,
            collisions_per_100s: m.collisions_per_100s,
            collisions_per_100m: m.collisions_per_100m,
        }
    }

    /// Times, collisions, duration and distance are summed; a total time is
    /// absent when any map never reached the level. Rates are pooled over the
    /// summed duration and distance, and coverage is the mean.
    pub fn total(rows: &[SummaryRow]) -> Self {
        let sum_opt = |f: fn(&SummaryRow) -> Option<f64>| rows.iter().map(f).sum::<Option<f64>>();
        let collisions = rows.iter().map(|r| r.collisions).sum();
        let duration: f64 = rows.iter().map(|r| r.duration).sum();
        let distance: f64 = rows.iter().map(|r| r.distance).sum();
        let rate = |amount: f64| if amount > 0.0 { 100.0 * collisions as f64 / amount } else { 0.0 };
        let policy = rows.first().map(|r| r.policy.clone()).unwrap_or_default();
        Self {
            map: TOTAL.to_string(),
            policy,
            t90: sum_opt(|r| r.t90),
            t99: sum_opt(|r| r.t99),
            final_coverage: if rows.is_empty() { 0.0 } else { rows.iter().map(|r| r.final_coverage).sum::<f64>() / rows.len() as f64 },
            collisions,
            duration,
            distance,
            collisions_per_100s: rate(duration),
            collisions_per_100m: rate(distance),
        }
    }

    fn scale_times(&mut self, factor: f64) {
        self.t90 = self.t90.map(|t| t * factor);
        self.t99 = self.t99.map(|t| t * factor);
        self.duration *= factor;
    }
}

/// Writes the per-map rows followed by their total.
pub fn write_summary<W: Write>(mut out: W, rows: &[SummaryRow], minutes: bool) -> Result<(), CliError> {
    let header = SummaryHeader { schema: SUMMARY_SCHEMA_VERSION, time_unit: if minutes { "min" } else { "s" }.to_string() };
    writeln!(out, "# {}", serde_json::to_string(&header)?)?;
    let mut w = csv::Writer::from_writer(out);
    for row in rows.iter().cloned().chain(std::iter::once(SummaryRow::total(rows))) {
        let mut row = row;
        if minutes {
            row.scale_times(1.0 / 60.0);
        }
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a summary back with times in seconds; the `Total` row is included.
pub fn read_summary<R: Read>(input: R) -> Result<Vec<SummaryRow>, CliError> {
    let mut reader = BufReader::new(input);
    let mut first = String::new();
    reader.read_line(&mut first)?;
    let json = first.strip_prefix("# ").ok_or_else(|| CliError::Usage("summary file lacks its header line".into()))?;
    let header: SummaryHeader = serde_json::from_str(json.trim_end())?;
    if header.schema != SUMMARY_SCHEMA_VERSION {
        return Err(CliError::Usage(format!("unsupported summary schema {}", header.schema)));
    }
    let factor = match header.time_unit.as_str() {
        "s" => 1.0,
        "min" => 60.0,
        other => return Err(CliError::Usage(format!("unknown time unit {other:?}"))),
    };
    let mut rows = csv::Reader::from_reader(reader).deserialize().collect::<Result<Vec<SummaryRow>, _>>()?;
    rows.iter_mut().for_each(|r| r.scale_times(factor));
    Ok(rows)
}

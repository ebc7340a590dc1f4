//! Run traces: the ordered record of cube selections, arms, and
//! observations, with a textual CSV form that round-trips losslessly.
//!
//! Layout of a trace file:
//!
//! ```text
//! # bmo-trace v1 {"algo":"p","env":"log1d",...}
//! t,kind,cube,arms,obs,n_cubes,min_cube_measure
//! 1,step,"0:0",0.3487...,1.0534...,1,1
//! ...
//! # final "1:0"
//! # final "1:1"
//! ```
//!
//! Row order is the filtration order: everything on row `t` happened before
//! anything on row `t+1`. Floats print in shortest round-trip form, so a
//! parsed trace reproduces the original bit for bit.

use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dyadic::{DyadicCube, Point};

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("trace i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("missing `# bmo-trace` header")]
    MissingHeader,
}

fn parse_err(line: usize, reason: impl Into<String>) -> TraceError {
    TraceError::Parse {
        line,
        reason: reason.into(),
    }
}

/// What a row records.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RowKind {
    /// Uniform warm-up arm over the whole space (zooming only).
    Warmup,
    /// One step of a partition-based run: one cube, one arm.
    Step,
    /// One episode of a zooming run: one parent cube, `M_d` arms.
    Episode,
}

impl RowKind {
    fn as_str(self) -> &'static str {
        match self {
            RowKind::Warmup => "warmup",
            RowKind::Step => "step",
            RowKind::Episode => "episode",
        }
    }
}

impl FromStr for RowKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "warmup" => Ok(RowKind::Warmup),
            "step" => Ok(RowKind::Step),
            "episode" => Ok(RowKind::Episode),
            other => Err(format!("unknown row kind `{other}`")),
        }
    }
}

/// One step or episode of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    /// Step or episode index (0 for warm-up rows).
    pub t: u64,
    pub kind: RowKind,
    /// The selected cube (the root for warm-up rows).
    pub cube: DyadicCube,
    pub arms: Vec<Point>,
    pub observations: Vec<f64>,
    /// Cubes in the partition (P) or collection (Z) after this row.
    pub n_cubes: usize,
    /// Minimal cube measure after this row.
    pub min_cube_measure: f64,
}

/// Identifying parameters of the run, echoed into the trace header.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceMeta {
    pub algo: String,
    pub env: String,
    pub dim: usize,
    pub horizon: u64,
    pub eps: f64,
    pub eta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    pub noise_bound: f64,
    pub seed: u64,
    /// Reward value of the `constant` environment, so a trace suffices to
    /// rebuild its environment.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constant_value: Option<f64>,
}

/// A full run: header metadata, rows in filtration order, and the final
/// partition snapshot (leaves for P, parent cubes for Z).
#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    pub meta: TraceMeta,
    pub rows: Vec<TraceRow>,
    pub final_partition: Vec<DyadicCube>,
}

impl RunTrace {
    /// Total arm pulls across all rows.
    pub fn pulls(&self) -> u64 {
        self.rows.iter().map(|r| r.arms.len() as u64).sum()
    }

    /// Serializes to the textual CSV form.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let meta = serde_json::to_string(&self.meta).expect("meta serializes");
        writeln!(out, "# bmo-trace v1 {meta}").unwrap();
        writeln!(out, "t,kind,cube,arms,obs,n_cubes,min_cube_measure").unwrap();
        for row in &self.rows {
            let arms = row
                .arms
                .iter()
                .map(|a| a.to_string())
                .collect::<Vec<_>>()
                .join(";");
            let obs = row
                .observations
                .iter()
                .map(|y| y.to_string())
                .collect::<Vec<_>>()
                .join(";");
            writeln!(
                out,
                "{},{},\"{}\",{},{},{},{}",
                row.t,
                row.kind.as_str(),
                row.cube,
                arms,
                obs,
                row.n_cubes,
                row.min_cube_measure
            )
            .unwrap();
        }
        for cube in &self.final_partition {
            writeln!(out, "# final \"{cube}\"").unwrap();
        }
        out
    }

    pub fn write_to(&self, path: &std::path::Path) -> Result<(), TraceError> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    /// Parses the textual form back; inverse of [`RunTrace::to_csv`].
    pub fn from_csv(text: &str) -> Result<Self, TraceError> {
        let mut meta: Option<TraceMeta> = None;
        let mut rows = Vec::new();
        let mut final_partition = Vec::new();
        let mut saw_header_row = false;
        for (i, line) in text.lines().enumerate() {
            let lineno = i + 1;
            if let Some(rest) = line.strip_prefix("# bmo-trace v1 ") {
                meta = Some(
                    serde_json::from_str(rest)
                        .map_err(|e| parse_err(lineno, format!("bad meta json: {e}")))?,
                );
                continue;
            }
            if let Some(rest) = line.strip_prefix("# final ") {
                let addr = rest.trim().trim_matches('"');
                let cube: DyadicCube = addr
                    .parse()
                    .map_err(|e| parse_err(lineno, format!("bad final cube: {e}")))?;
                final_partition.push(cube);
                continue;
            }
            if line.starts_with('#') || line.trim().is_empty() {
                continue;
            }
            if !saw_header_row {
                if line != "t,kind,cube,arms,obs,n_cubes,min_cube_measure" {
                    return Err(parse_err(lineno, "unexpected column header"));
                }
                saw_header_row = true;
                continue;
            }
            let fields = split_quoted_csv(line);
            if fields.len() != 7 {
                return Err(parse_err(lineno, format!("expected 7 fields, got {}", fields.len())));
            }
            let t: u64 = fields[0]
                .parse()
                .map_err(|_| parse_err(lineno, "bad t"))?;
            let kind: RowKind = fields[1]
                .parse()
                .map_err(|e| parse_err(lineno, e))?;
            let cube: DyadicCube = fields[2]
                .parse()
                .map_err(|e| parse_err(lineno, format!("bad cube: {e}")))?;
            let arms = if fields[3].is_empty() {
                Vec::new()
            } else {
                fields[3]
                    .split(';')
                    .map(|s| s.parse::<Point>())
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|e| parse_err(lineno, format!("bad arm: {e}")))?
            };
            let observations = if fields[4].is_empty() {
                Vec::new()
            } else {
                fields[4]
                    .split(';')
                    .map(|s| s.parse::<f64>())
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|e| parse_err(lineno, format!("bad observation: {e}")))?
            };
            if arms.len() != observations.len() {
                return Err(parse_err(lineno, "arm/observation arity mismatch"));
            }
            let n_cubes: usize = fields[5]
                .parse()
                .map_err(|_| parse_err(lineno, "bad n_cubes"))?;
            let min_cube_measure: f64 = fields[6]
                .parse()
                .map_err(|_| parse_err(lineno, "bad min_cube_measure"))?;
            rows.push(TraceRow {
                t,
                kind,
                cube,
                arms,
                observations,
                n_cubes,
                min_cube_measure,
            });
        }
        Ok(RunTrace {
            meta: meta.ok_or(TraceError::MissingHeader)?,
            rows,
            final_partition,
        })
    }

    pub fn read_from(path: &std::path::Path) -> Result<Self, TraceError> {
        Self::from_csv(&std::fs::read_to_string(path)?)
    }
}

/// Splits a CSV line on commas, honoring double quotes (no escapes needed:
/// quoted fields are cube addresses, which never contain quotes).
fn split_quoted_csv(line: &str) -> Vec<String> {
    let mut fields = Vec::new();
    let mut cur = String::new();
    let mut in_quotes = false;
    for c in line.chars() {
        match c {
            '"' => in_quotes = !in_quotes,
            ',' if !in_quotes => fields.push(std::mem::take(&mut cur)),
            _ => cur.push(c),
        }
    }
    fields.push(cur);
    fields
}

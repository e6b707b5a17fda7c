//! Strict CSV readers and writers. Every parse error names the line (and
//! column where it applies), 1-based, counting the header as line 1.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use gapdyn_core::discrete::StepRecord;
use gapdyn_core::select::{Candidate, CandidateSet, CorrectnessMatrix};
use gapdyn_core::{Trajectory, TrajectoryPoint};
use thiserror::Error;

pub const TRAJECTORY_HEADER: &str = "epoch,u_s,u_v";
pub const CANDIDATES_HEADER: &str = "prompt_id,nll,length,score";

#[derive(Debug, Error)]
pub enum TabularError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}:1: header must be exactly `{expected}`, found `{found}`")]
    BadHeader {
        path: PathBuf,
        expected: &'static str,
        found: String,
    },
    #[error("{path}:{line}: expected {expected} comma-separated fields, found {found}")]
    WrongFieldCount {
        path: PathBuf,
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("{path}:{line}: column {column}: `{value}` does not parse as a finite value")]
    UnparseableField {
        path: PathBuf,
        line: usize,
        column: usize,
        value: String,
    },
    #[error("{path}:{line}: epoch must be strictly greater than the previous row's")]
    NonMonotoneEpoch { path: PathBuf, line: usize },
    #[error("{path}:{line}: {message}")]
    BadRow {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{path}: no data rows")]
    Empty { path: PathBuf },
}

fn read_text(path: &Path) -> Result<String, TabularError> {
    fs::read_to_string(path).map_err(|source| TabularError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write_text(path: &Path, text: &str) -> Result<(), TabularError> {
    fs::write(path, text).map_err(|source| TabularError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Lines of a CSV body with their 1-based line numbers, ignoring a single
/// trailing newline. Interior blank lines are errors in every format here,
/// reported by the caller via field-count checks.
fn body_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.strip_suffix('\n')
        .unwrap_or(text)
        .split('\n')
        .enumerate()
        .map(|(i, l)| (i + 1, l))
}

fn parse_finite(
    path: &Path,
    line: usize,
    column: usize,
    raw: &str,
) -> Result<f64, TabularError> {
    let trimmed = raw.trim();
    match trimmed.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(TabularError::UnparseableField {
            path: path.to_path_buf(),
            line,
            column,
            value: String::from(raw),
        }),
    }
}

/// Reads `epoch,u_s,u_v` rows into a trajectory labeled with the file stem.
pub fn read_trajectory(path: &Path) -> Result<Trajectory, TabularError> {
    let text = read_text(path)?;
    let mut lines = body_lines(&text);
    match lines.next() {
        Some((_, header)) if header == TRAJECTORY_HEADER => {}
        other => {
            return Err(TabularError::BadHeader {
                path: path.to_path_buf(),
                expected: TRAJECTORY_HEADER,
                found: String::from(other.map_or("", |(_, h)| h)),
            });
        }
    }
    let mut points = Vec::new();
    let mut prev_epoch = f64::NEG_INFINITY;
    for (line, row) in lines {
        let fields: Vec<&str> = row.split(',').collect();
        if fields.len() != 3 {
            return Err(TabularError::WrongFieldCount {
                path: path.to_path_buf(),
                line,
                expected: 3,
                found: fields.len(),
            });
        }
        let t = parse_finite(path, line, 1, fields[0])?;
        let u_s = parse_finite(path, line, 2, fields[1])?;
        let u_v = parse_finite(path, line, 3, fields[2])?;
        if t <= prev_epoch {
            return Err(TabularError::NonMonotoneEpoch {
                path: path.to_path_buf(),
                line,
            });
        }
        prev_epoch = t;
        points.push(TrajectoryPoint { t, u_s, u_v });
    }
    let label = path
        .file_stem()
        .map_or_else(|| String::from("trajectory"), |s| s.to_string_lossy().into_owned());
    Trajectory::new(points, label).map_err(|e| TabularError::BadRow {
        path: path.to_path_buf(),
        line: 1,
        message: e.to_string(),
    })
}

pub fn write_trajectory(path: &Path, trajectory: &Trajectory) -> Result<(), TabularError> {
    let mut out = String::from(TRAJECTORY_HEADER);
    out.push('\n');
    for p in trajectory.points() {
        let _ = writeln!(out, "{},{},{}", p.t, p.u_s, p.u_v);
    }
    write_text(path, &out)
}

/// Per-epoch iteration detail for discrete simulations.
pub fn write_step_records(path: &Path, records: &[StepRecord]) -> Result<(), TabularError> {
    let mut out = String::from("epoch,pre_u_s,pre_u_v,boosted_u_v,gap_c,energy,post_u_s,post_u_v\n");
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.epoch, r.pre_u_s, r.pre_u_v, r.boosted_u_v, r.gap_c, r.energy, r.post_u_s, r.post_u_v
        );
    }
    write_text(path, &out)
}

/// Reads `prompt_id,nll,length,score` rows into candidate sets grouped by
/// prompt in first-appearance order. Rows for one prompt need not be
/// adjacent; candidate order within a prompt is file order.
pub fn read_candidate_sets(path: &Path) -> Result<Vec<CandidateSet>, TabularError> {
    let text = read_text(path)?;
    let mut lines = body_lines(&text);
    match lines.next() {
        Some((_, header)) if header == CANDIDATES_HEADER => {}
        other => {
            return Err(TabularError::BadHeader {
                path: path.to_path_buf(),
                expected: CANDIDATES_HEADER,
                found: String::from(other.map_or("", |(_, h)| h)),
            });
        }
    }
    let mut order: Vec<String> = Vec::new();
    let mut grouped: Vec<Vec<Candidate>> = Vec::new();
    for (line, row) in lines {
        let fields: Vec<&str> = row.split(',').collect();
        if fields.len() != 4 {
            return Err(TabularError::WrongFieldCount {
                path: path.to_path_buf(),
                line,
                expected: 4,
                found: fields.len(),
            });
        }
        let prompt_id = fields[0].trim();
        let nll = parse_finite(path, line, 2, fields[1])?;
        let length: u32 = fields[2].trim().parse().map_err(|_| {
            TabularError::UnparseableField {
                path: path.to_path_buf(),
                line,
                column: 3,
                value: String::from(fields[2]),
            }
        })?;
        let score = parse_finite(path, line, 4, fields[3])?;
        let candidate = Candidate::new(nll, length, score).map_err(|e| TabularError::BadRow {
            path: path.to_path_buf(),
            line,
            message: e.to_string(),
        })?;
        match order.iter().position(|p| p == prompt_id) {
            Some(i) => grouped[i].push(candidate),
            None => {
                order.push(String::from(prompt_id));
                grouped.push(vec![candidate]);
            }
        }
    }
    if order.is_empty() {
        return Err(TabularError::Empty {
            path: path.to_path_buf(),
        });
    }
    Ok(order
        .into_iter()
        .zip(grouped)
        .map(|(id, cands)| CandidateSet::new(id, cands).expect("grouped rows are non-empty"))
        .collect())
}

/// Reads a headerless matrix of comma-separated `0`/`1` values.
pub fn read_correctness_matrix(path: &Path) -> Result<CorrectnessMatrix, TabularError> {
    let text = read_text(path)?;
    let mut rows = Vec::new();
    for (line, row) in body_lines(&text) {
        let mut parsed = Vec::new();
        for (i, field) in row.split(',').enumerate() {
            match field.trim() {
                "0" => parsed.push(false),
                "1" => parsed.push(true),
                other => {
                    return Err(TabularError::UnparseableField {
                        path: path.to_path_buf(),
                        line,
                        column: i + 1,
                        value: String::from(other),
                    });
                }
            }
        }
        rows.push(parsed);
    }
    if rows.is_empty() {
        return Err(TabularError::Empty {
            path: path.to_path_buf(),
        });
    }
    CorrectnessMatrix::new(rows).map_err(|e| TabularError::BadRow {
        path: path.to_path_buf(),
        line: 1,
        message: e.to_string(),
    })
}

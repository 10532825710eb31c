//! Line-delimited trajectory datasets.
//!
//! One JSON object per line:
//!
//! ```text
//! {"id":"a1","steps":["tok tok","tok"],"outcome":1,"first_error":null}
//! {"id":"a2","solution":"step one\n\n\n\n\nstep two","outcome":0,"first_error":2}
//! ```
//!
//! Exactly one of `steps` (each string is a space-joined token list) or
//! `solution` (raw text split on the five-newline separator) must be present.
//! `first_error` is 1-based and optional. Writing always emits the canonical
//! `id, steps, outcome, first_error` form.

use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{validate_trajectory, StepContent, Trajectory};

/// Separator between steps of a raw solution.
pub const STEP_SEPARATOR: &str = "\n\n\n\n\n";

/// Splits raw solution text on [`STEP_SEPARATOR`], trimming each piece and
/// dropping the empty ones.
pub fn split_solution(text: &str) -> Result<Vec<String>> {
    let steps: Vec<String> = text
        .split(STEP_SEPARATOR)
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_owned)
        .collect();
    if steps.is_empty() {
        return Err(Error::NoSteps);
    }
    Ok(steps)
}

fn tokenize(step: &str) -> Vec<String> {
    step.split_whitespace().map(str::to_owned).collect()
}

#[derive(Deserialize)]
struct InRecord {
    id: String,
    #[serde(default)]
    steps: Option<Vec<String>>,
    #[serde(default)]
    solution: Option<String>,
    outcome: i64,
    #[serde(default)]
    first_error: Option<i64>,
}

#[derive(Serialize)]
struct OutRecord<'a> {
    id: &'a str,
    steps: Vec<String>,
    outcome: u8,
    first_error: Option<usize>,
}

/// Parses and validates one record line. `line_no` is 1-based and only used
/// in error messages.
pub fn parse_record(line: &str, line_no: usize) -> Result<Trajectory> {
    let bad = |message: String| Error::MalformedRecord {
        line: line_no,
        message,
    };
    let rec: InRecord = serde_json::from_str(line).map_err(|e| bad(e.to_string()))?;
    let texts = match (rec.steps, rec.solution) {
        (Some(_), Some(_)) => return Err(bad("both steps and solution present".into())),
        (None, None) => return Err(bad("neither steps nor solution present".into())),
        (Some(steps), None) => steps,
        (None, Some(text)) => split_solution(&text).map_err(|e| bad(e.to_string()))?,
    };
    let outcome = match rec.outcome {
        0 | 1 => rec.outcome as u8,
        other => return Err(bad(Error::NonBinaryOutcome(other).to_string())),
    };
    let gold = match rec.first_error {
        None => None,
        Some(i) if i >= 1 => Some(i as usize),
        Some(i) => {
            return Err(bad(format!("first_error must be a 1-based index, got {i}")));
        }
    };
    let total = texts.len();
    let steps = texts
        .iter()
        .enumerate()
        .map(|(i, s)| StepContent {
            tokens: tokenize(s),
            position: i + 1,
            is_last: i + 1 == total,
        })
        .collect();
    validate_trajectory(Trajectory {
        id: rec.id,
        steps,
        outcome,
        gold_first_error: gold,
    })
    .map_err(|e| bad(e.to_string()))
}

/// Canonical single-line rendering of a trajectory (no trailing newline).
pub fn format_record(t: &Trajectory) -> String {
    let rec = OutRecord {
        id: &t.id,
        steps: t.steps.iter().map(|s| s.tokens.join(" ")).collect(),
        outcome: t.outcome,
        first_error: t.gold_first_error,
    };
    serde_json::to_string(&rec).expect("record serializes")
}

pub fn read_records<R: BufRead>(reader: R) -> Result<Vec<Trajectory>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::MalformedRecord {
            line: i + 1,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(parse_record(&line, i + 1)?);
    }
    Ok(out)
}

pub fn write_records<W: Write>(traces: &[Trajectory], mut writer: W) -> std::io::Result<()> {
    for t in traces {
        writer.write_all(format_record(t).as_bytes())?;
        writer.write_all(b"\n")?;
    }
    writer.flush()
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<Vec<Trajectory>> {
    let path = path.as_ref();
    let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_records(BufReader::new(f))
}

pub fn write_dataset(traces: &[Trajectory], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_records(traces, BufWriter::new(f)).map_err(|e| Error::io(path, e))
}

/// One best-of-N candidate solution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateRecord {
    pub problem_id: String,
    pub candidate_index: usize,
    pub steps: Vec<String>,
    pub is_correct: u8,
}

/// Candidates of one problem, ordered by `candidate_index`.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateGroup {
    pub problem_id: String,
    pub candidates: Vec<CandidateRecord>,
}

impl CandidateRecord {
    /// Candidate as a trajectory; the outcome field carries `is_correct`.
    pub fn to_trajectory(&self) -> Result<Trajectory> {
        let steps = self.steps.iter().map(|s| tokenize(s)).collect();
        Trajectory::from_token_steps(
            format!("{}#{}", self.problem_id, self.candidate_index),
            steps,
            self.is_correct,
            None,
        )
    }
}

/// Reads a best-of-N candidate file and groups it by problem, keeping the
/// order in which problems first appear.
pub fn read_candidates(path: impl AsRef<Path>) -> Result<Vec<CandidateGroup>> {
    let path = path.as_ref();
    let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut groups: Vec<CandidateGroup> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let bad = |message: String| Error::MalformedRecord {
            line: i + 1,
            message,
        };
        let line = line.map_err(|e| bad(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: CandidateRecord = serde_json::from_str(&line).map_err(|e| bad(e.to_string()))?;
        if rec.is_correct > 1 {
            return Err(bad(format!(
                "is_correct must be 0 or 1, got {}",
                rec.is_correct
            )));
        }
        if rec.steps.is_empty() {
            return Err(bad(Error::EmptyTrajectory.to_string()));
        }
        match index.get(&rec.problem_id) {
            Some(&g) => groups[g].candidates.push(rec),
            None => {
                index.insert(rec.problem_id.clone(), groups.len());
                groups.push(CandidateGroup {
                    problem_id: rec.problem_id.clone(),
                    candidates: vec![rec],
                });
            }
        }
    }
    for g in &mut groups {
        g.candidates.sort_by_key(|c| c.candidate_index);
    }
    Ok(groups)
}

pub fn write_candidates(records: &[CandidateRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    let io = |e| Error::io(path, e);
    for r in records {
        serde_json::to_writer(&mut w, r).map_err(|e| Error::InvalidInput(e.to_string()))?;
        w.write_all(b"\n").map_err(io)?;
    }
    w.flush().map_err(io)
}

//! Interaction-log parsing, student splits, and fixed-length windows.
//!
//! Variable-length student histories become length-`l` windows with the
//! valid positions contiguous at the right end (left padding), the unit of
//! batched training.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::Deserialize;
use thiserror::Error;

use crate::rng::Rng;

/// Default window length.
pub const DEFAULT_WINDOW_LEN: usize = 50;
/// Default batch size.
pub const DEFAULT_BATCH_SIZE: usize = 128;
/// Default train fraction for the student split.
pub const DEFAULT_TRAIN_FRACTION: f64 = 0.8;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}:{line}: {reason}")]
    Malformed {
        path: String,
        line: usize,
        reason: String,
    },
    #[error("{path}:{line}: negative timestamp")]
    NegativeTimestamp { path: String, line: usize },
    #[error("window length must be at least 2, got {0}")]
    BadWindowLength(usize),
    #[error("need at least 2 students to split, got {0}")]
    TooFewStudents(usize),
    #[error("train fraction must be in (0, 1), got {0}")]
    BadFraction(f64),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, DataError>;

/// One graded attempt: `(exercise, correctness, timestamp)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Interaction {
    pub exercise_id: u32,
    pub correct: u8,
    pub timestamp: f64,
}

/// Per-student interaction sequences, sorted by student id; each sequence
/// sorted by timestamp.
pub type StudentLogs = Vec<(u64, Vec<Interaction>)>;

/// Fixed-length padded slice of one student's history.
#[derive(Clone, Debug)]
pub struct Window {
    pub student_id: u64,
    pub exercise_ids: Vec<u32>,
    pub correct: Vec<u8>,
    pub timestamps: Vec<f64>,
    /// True at real (non-padding) positions; contiguous at the right end.
    pub mask: Vec<bool>,
}

impl Window {
    pub fn len(&self) -> usize {
        self.mask.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mask.is_empty()
    }

    pub fn valid_count(&self) -> usize {
        self.mask.iter().filter(|m| **m).count()
    }

    /// Index of the first valid position.
    pub fn first_valid(&self) -> usize {
        self.mask.iter().position(|m| *m).unwrap_or(self.len())
    }
}

#[derive(Deserialize)]
struct LogLine {
    student_id: u64,
    exercise_id: u32,
    correct: u8,
    timestamp: f64,
}

/// Parses interaction JSONL:
/// `{"student_id": int, "exercise_id": int, "correct": 0|1, "timestamp": seconds}`.
///
/// Sequences come out time-sorted per student; students with fewer than two
/// interactions are dropped.
pub fn parse_logs(path: &Path) -> Result<StudentLogs> {
    let reader = BufReader::new(File::open(path)?);
    let mut by_student: HashMap<u64, Vec<Interaction>> = HashMap::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: LogLine = serde_json::from_str(&line).map_err(|e| DataError::Malformed {
            path: path.display().to_string(),
            line: lineno + 1,
            reason: e.to_string(),
        })?;
        if parsed.correct > 1 {
            return Err(DataError::Malformed {
                path: path.display().to_string(),
                line: lineno + 1,
                reason: format!("correct must be 0 or 1, got {}", parsed.correct),
            });
        }
        if !parsed.timestamp.is_finite() {
            return Err(DataError::Malformed {
                path: path.display().to_string(),
                line: lineno + 1,
                reason: "timestamp must be finite".to_string(),
            });
        }
        if parsed.timestamp < 0.0 {
            return Err(DataError::NegativeTimestamp {
                path: path.display().to_string(),
                line: lineno + 1,
            });
        }
        by_student.entry(parsed.student_id).or_default().push(Interaction {
            exercise_id: parsed.exercise_id,
            correct: parsed.correct,
            timestamp: parsed.timestamp,
        });
    }
    let mut logs: StudentLogs = by_student
        .into_iter()
        .filter(|(_, seq)| seq.len() >= 2)
        .collect();
    for (_, seq) in logs.iter_mut() {
        seq.sort_by(|a, b| a.timestamp.partial_cmp(&b.timestamp).expect("finite timestamps"));
    }
    logs.sort_by_key(|(id, _)| *id);
    Ok(logs)
}

/// One past the largest exercise id seen, i.e. the exercise universe size.
pub fn num_exercises(logs: &StudentLogs) -> usize {
    logs.iter()
        .flat_map(|(_, seq)| seq.iter())
        .map(|x| x.exercise_id as usize + 1)
        .max()
        .unwrap_or(0)
}

/// Splits a sequence into fixed-length windows.
///
/// A sequence shorter than `l` becomes one left-padded window; a longer one
/// splits into `ceil(|X|/l)` chunks with only the last chunk padded.
/// Padding positions carry `padding_id`, correctness 0, and the first valid
/// timestamp of the window.
pub fn window(student_id: u64, sequence: &[Interaction], l: usize, padding_id: u32) -> Result<Vec<Window>> {
    if l < 2 {
        return Err(DataError::BadWindowLength(l));
    }
    let mut out = Vec::new();
    if sequence.is_empty() {
        return Ok(out);
    }
    for chunk in sequence.chunks(l) {
        let pad = l - chunk.len();
        let pad_ts = chunk[0].timestamp;
        let mut w = Window {
            student_id,
            exercise_ids: Vec::with_capacity(l),
            correct: Vec::with_capacity(l),
            timestamps: Vec::with_capacity(l),
            mask: Vec::with_capacity(l),
        };
        for _ in 0..pad {
            w.exercise_ids.push(padding_id);
            w.correct.push(0);
            w.timestamps.push(pad_ts);
            w.mask.push(false);
        }
        for x in chunk {
            w.exercise_ids.push(x.exercise_id);
            w.correct.push(x.correct);
            w.timestamps.push(x.timestamp);
            w.mask.push(true);
        }
        out.push(w);
    }
    Ok(out)
}

/// Windows for every student in the logs, in student order.
pub fn make_windows(logs: &StudentLogs, l: usize, padding_id: u32) -> Result<Vec<Window>> {
    let mut out = Vec::new();
    for (student, seq) in logs {
        out.extend(window(*student, seq, l, padding_id)?);
    }
    Ok(out)
}

/// Deterministic student-level train/test split.
pub fn split_students(logs: &StudentLogs, fraction: f64, seed: u64) -> Result<(StudentLogs, StudentLogs)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(DataError::BadFraction(fraction));
    }
    let n = logs.len();
    if n < 2 {
        return Err(DataError::TooFewStudents(n));
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = Rng::new(seed);
    rng.shuffle(&mut order);
    let n_train = ((n as f64 * fraction).floor() as usize).clamp(1, n - 1);
    let mut train_idx = order[..n_train].to_vec();
    let mut test_idx = order[n_train..].to_vec();
    train_idx.sort_unstable();
    test_idx.sort_unstable();
    let pick = |idx: &[usize]| idx.iter().map(|&i| logs[i].clone()).collect::<StudentLogs>();
    Ok((pick(&train_idx), pick(&test_idx)))
}

//! Exercise-to-exercise relation mining.
//!
//! For each ordered pair `(i, j)` a 2x2 contingency table pairs the latest
//! prior attempt of `j` with each attempt of `i`; the Phi coefficient of
//! that table measures performance association, cosine similarity of SIF
//! embeddings measures text similarity, and the thresholded combination
//! becomes the sparse directed relation matrix `A`.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::ops::Add;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::ExerciseEmbeddings;
use crate::dataio::StudentLogs;

/// Default sparsity threshold.
pub const DEFAULT_THETA: f64 = 0.8;
/// Pairs observed fewer times than this get Phi forced to zero.
pub const DEFAULT_MIN_SUPPORT: u64 = 5;

#[derive(Debug, Error)]
pub enum RelationError {
    #[error("unknown exercise id {0} (universe has {1} exercises)")]
    UnknownExercise(u32, usize),
    #[error("cosine: vectors have different dimensions ({0} vs {1})")]
    DimensionMismatch(usize, usize),
    #[error("cosine: undefined similarity for a zero vector")]
    ZeroVector,
    #[error("method {method} requires {missing}")]
    MissingInput {
        method: u8,
        missing: &'static str,
    },
    #[error("relation method must be 1..=4, got {0}")]
    BadMethod(u8),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("{path}:{line}: {reason}")]
    Malformed {
        path: String,
        line: usize,
        reason: String,
    },
}

pub type Result<T> = std::result::Result<T, RelationError>;

/// 2x2 contingency counts for an ordered exercise pair.
///
/// First index is the correctness of the earlier `j` attempt, second the
/// correctness of the later `i` attempt: `n01` counts (j wrong, i right).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ContingencyTable {
    pub n00: u64,
    pub n01: u64,
    pub n10: u64,
    pub n11: u64,
}

impl ContingencyTable {
    /// Margin: `j` incorrect.
    pub fn n0_(&self) -> u64 {
        self.n00 + self.n01
    }

    /// Margin: `j` correct.
    pub fn n1_(&self) -> u64 {
        self.n10 + self.n11
    }

    /// Margin: `i` incorrect.
    pub fn n_0(&self) -> u64 {
        self.n00 + self.n10
    }

    /// Margin: `i` correct.
    pub fn n_1(&self) -> u64 {
        self.n01 + self.n11
    }

    pub fn total(&self) -> u64 {
        self.n00 + self.n01 + self.n10 + self.n11
    }

    fn bump(&mut self, j_correct: u8, i_correct: u8) {
        match (j_correct, i_correct) {
            (0, 0) => self.n00 += 1,
            (0, _) => self.n01 += 1,
            (_, 0) => self.n10 += 1,
            _ => self.n11 += 1,
        }
    }
}

impl Add for ContingencyTable {
    type Output = ContingencyTable;

    fn add(self, rhs: ContingencyTable) -> ContingencyTable {
        ContingencyTable {
            n00: self.n00 + rhs.n00,
            n01: self.n01 + rhs.n01,
            n10: self.n10 + rhs.n10,
            n11: self.n11 + rhs.n11,
        }
    }
}

/// Contingency table for target `i` against earlier `j`, over all students.
///
/// Each occurrence of `i` pairs with the latest prior occurrence of `j` in
/// the same student's sequence; occurrences of `i` with no prior `j`
/// contribute nothing.
pub fn build_contingency(logs: &StudentLogs, i: u32, j: u32) -> Result<ContingencyTable> {
    let universe = crate::dataio::num_exercises(logs);
    for id in [i, j] {
        if id as usize >= universe {
            return Err(RelationError::UnknownExercise(id, universe));
        }
    }
    let mut table = ContingencyTable::default();
    for (_, seq) in logs {
        let mut latest_j: Option<u8> = None;
        for x in seq {
            if x.exercise_id == i {
                if let Some(jc) = latest_j {
                    table.bump(jc, x.correct);
                }
            }
            // Updated after the check so i == j pairs with a *prior* attempt.
            if x.exercise_id == j {
                latest_j = Some(x.correct);
            }
        }
    }
    Ok(table)
}

/// All pairwise tables in one sweep, merged across students.
///
/// Per-student accumulation is independent; results merge by addition.
pub fn build_all_contingencies(logs: &StudentLogs, num_exercises: usize) -> HashMap<(u32, u32), ContingencyTable> {
    let per_student: Vec<HashMap<(u32, u32), ContingencyTable>> = logs
        .par_iter()
        .map(|(_, seq)| {
            let mut tables: HashMap<(u32, u32), ContingencyTable> = HashMap::new();
            let mut latest: HashMap<u32, u8> = HashMap::new();
            for x in seq {
                debug_assert!((x.exercise_id as usize) < num_exercises);
                for (&j, &jc) in &latest {
                    tables.entry((x.exercise_id, j)).or_default().bump(jc, x.correct);
                }
                latest.insert(x.exercise_id, x.correct);
            }
            tables
        })
        .collect();
    let mut merged: HashMap<(u32, u32), ContingencyTable> = HashMap::new();
    for tables in per_student {
        for (k, t) in tables {
            let slot = merged.entry(k).or_default();
            *slot = *slot + t;
        }
    }
    merged
}

/// Phi coefficient `(n11*n00 - n01*n10) / sqrt(n1*.n0*.n*1.n*0)`.
///
/// Zero when any margin is zero: no evidence of association.
pub fn phi(table: &ContingencyTable) -> f64 {
    let denom_sq = table.n1_() as f64 * table.n0_() as f64 * table.n_1() as f64 * table.n_0() as f64;
    if denom_sq == 0.0 {
        return 0.0;
    }
    let num = table.n11 as f64 * table.n00 as f64 - table.n01 as f64 * table.n10 as f64;
    num / denom_sq.sqrt()
}

/// Cosine similarity `u.v / (|u||v|)`.
pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(RelationError::DimensionMismatch(u.len(), v.len()));
    }
    let mut dot = 0.0;
    let mut nu = 0.0;
    let mut nv = 0.0;
    for (a, b) in u.iter().zip(v) {
        dot += a * b;
        nu += a * a;
        nv += b * b;
    }
    if nu == 0.0 || nv == 0.0 {
        return Err(RelationError::ZeroVector);
    }
    Ok(dot / (nu.sqrt() * nv.sqrt()))
}

/// How the relation matrix is computed: 1 same knowledge concept
/// (boolean), 2 cosine similarity only, 3 Phi only, 4 Phi + cosine.
/// Methods 2-4 store only entries above the threshold.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationMethod(pub u8);

impl RelationMethod {
    pub fn new(m: u8) -> Result<Self> {
        if (1..=4).contains(&m) {
            Ok(RelationMethod(m))
        } else {
            Err(RelationError::BadMethod(m))
        }
    }
}

/// Sparse directed exercise-relation matrix.
///
/// `value(i, j)` is the influence of earlier `j` on later `i`; absent
/// entries are zero. Self-relations are never stored.
#[derive(Clone, Debug)]
pub struct RelationMatrix {
    num_exercises: usize,
    theta: f64,
    method: RelationMethod,
    entries: HashMap<(u32, u32), f64>,
}

impl RelationMatrix {
    pub fn empty(num_exercises: usize, theta: f64, method: RelationMethod) -> Self {
        RelationMatrix {
            num_exercises,
            theta,
            method,
            entries: HashMap::new(),
        }
    }

    /// Matrix from explicit `(i, j, value)` entries; self-relations and
    /// zero values are skipped.
    pub fn from_entries(
        num_exercises: usize,
        theta: f64,
        method: RelationMethod,
        entries: impl IntoIterator<Item = (u32, u32, f64)>,
    ) -> Self {
        let mut m = Self::empty(num_exercises, theta, method);
        for (i, j, v) in entries {
            if i != j && v != 0.0 {
                m.insert(i, j, v);
            }
        }
        m
    }

    pub fn num_exercises(&self) -> usize {
        self.num_exercises
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn method(&self) -> RelationMethod {
        self.method
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Stored relation strength, 0.0 when absent.
    pub fn value(&self, i: u32, j: u32) -> f64 {
        self.entries.get(&(i, j)).copied().unwrap_or(0.0)
    }

    /// Entries sorted by `(i, j)`.
    pub fn sorted_entries(&self) -> Vec<(u32, u32, f64)> {
        let mut v: Vec<(u32, u32, f64)> = self.entries.iter().map(|(&(i, j), &x)| (i, j, x)).collect();
        v.sort_by_key(|e| (e.0, e.1));
        v
    }

    fn insert(&mut self, i: u32, j: u32, value: f64) {
        self.entries.insert((i, j), value);
    }
}

/// Inputs for [`build_relation_matrix`], wired per method.
pub struct RelationInputs<'a> {
    pub logs: Option<&'a StudentLogs>,
    pub embeddings: Option<&'a ExerciseEmbeddings>,
    /// Exercise id -> knowledge-concept label.
    pub kc_labels: Option<&'a HashMap<u32, String>>,
}

/// Builds the sparse relation matrix with one of the four methods.
///
/// Pairs with fewer than `min_support` paired observations get Phi forced
/// to zero before thresholding.
pub fn build_relation_matrix(
    inputs: &RelationInputs<'_>,
    num_exercises: usize,
    theta: f64,
    method: RelationMethod,
    min_support: u64,
) -> Result<RelationMatrix> {
    let needs_logs = matches!(method.0, 3 | 4);
    let needs_emb = matches!(method.0, 2 | 4);
    if method.0 == 1 && inputs.kc_labels.is_none() {
        return Err(RelationError::MissingInput {
            method: 1,
            missing: "knowledge-concept labels",
        });
    }
    if needs_logs && inputs.logs.is_none() {
        return Err(RelationError::MissingInput {
            method: method.0,
            missing: "interaction logs",
        });
    }
    if needs_emb && inputs.embeddings.is_none() {
        return Err(RelationError::MissingInput {
            method: method.0,
            missing: "exercise embeddings",
        });
    }

    let mut matrix = RelationMatrix::empty(num_exercises, theta, method);

    if method.0 == 1 {
        let kc = inputs.kc_labels.unwrap();
        for i in 0..num_exercises as u32 {
            for j in 0..num_exercises as u32 {
                if i == j {
                    continue;
                }
                if let (Some(a), Some(b)) = (kc.get(&i), kc.get(&j)) {
                    if a == b {
                        matrix.insert(i, j, 1.0);
                    }
                }
            }
        }
        return Ok(matrix);
    }

    let tables = if needs_logs {
        build_all_contingencies(inputs.logs.unwrap(), num_exercises)
    } else {
        HashMap::new()
    };

    let rows: Vec<Vec<(u32, u32, f64)>> = (0..num_exercises as u32)
        .into_par_iter()
        .map(|i| {
            let mut row = Vec::new();
            for j in 0..num_exercises as u32 {
                if i == j {
                    continue;
                }
                let mut score = 0.0;
                if needs_logs {
                    if let Some(t) = tables.get(&(i, j)) {
                        if t.total() >= min_support {
                            score += phi(t);
                        }
                    }
                }
                if needs_emb {
                    let emb = inputs.embeddings.unwrap();
                    let (u, v) = (emb.row(i), emb.row(j));
                    // Zero embeddings (missing text) carry no similarity
                    // evidence for matrix construction.
                    if let Ok(sim) = cosine(u, v) {
                        score += sim;
                    }
                }
                if score > theta && score != 0.0 {
                    row.push((i, j, score));
                }
            }
            row
        })
        .collect();
    for row in rows {
        for (i, j, v) in row {
            matrix.insert(i, j, v);
        }
    }
    Ok(matrix)
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    num_exercises: usize,
    theta: f64,
    method: u8,
}

/// Writes `i,j,value` CSV rows plus a JSON sidecar
/// (`<path>.json`) describing the matrix.
pub fn write_relation_csv(path: &Path, matrix: &RelationMatrix) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "i,j,value")?;
    for (i, j, v) in matrix.sorted_entries() {
        writeln!(w, "{i},{j},{v}")?;
    }
    w.flush()?;
    let sidecar = Sidecar {
        num_exercises: matrix.num_exercises,
        theta: matrix.theta,
        method: matrix.method.0,
    };
    let json = serde_json::to_string_pretty(&sidecar).expect("sidecar serializes");
    std::fs::write(sidecar_path(path), json)?;
    Ok(())
}

pub fn read_relation_csv(path: &Path) -> Result<RelationMatrix> {
    let sidecar_file = sidecar_path(path);
    let text = std::fs::read_to_string(&sidecar_file)?;
    let sidecar: Sidecar = serde_json::from_str(&text).map_err(|e| RelationError::Malformed {
        path: sidecar_file.display().to_string(),
        line: 0,
        reason: e.to_string(),
    })?;
    let mut matrix = RelationMatrix::empty(
        sidecar.num_exercises,
        sidecar.theta,
        RelationMethod::new(sidecar.method)?,
    );
    let reader = BufReader::new(File::open(path)?);
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if lineno == 0 || line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split(',');
        let bad = |reason: &str| RelationError::Malformed {
            path: path.display().to_string(),
            line: lineno + 1,
            reason: reason.to_string(),
        };
        let i: u32 = parts
            .next()
            .ok_or_else(|| bad("missing i"))?
            .parse()
            .map_err(|_| bad("bad i"))?;
        let j: u32 = parts
            .next()
            .ok_or_else(|| bad("missing j"))?
            .parse()
            .map_err(|_| bad("bad j"))?;
        let v: f64 = parts
            .next()
            .ok_or_else(|| bad("missing value"))?
            .parse()
            .map_err(|_| bad("bad value"))?;
        matrix.insert(i, j, v);
    }
    Ok(matrix)
}

fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut os = path.as_os_str().to_os_string();
    os.push(".json");
    std::path::PathBuf::from(os)
}

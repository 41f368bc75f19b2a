//! Synthetic student simulator with a known relation graph.
//!
//! Students practice exercises grouped into skills; mastery rises with
//! practice (spilling over to related skills), decays exponentially between
//! attempts, and correctness is sampled with guess/slip noise around a
//! mastery threshold. Exercise texts draw from per-skill word pools so
//! related exercises share vocabulary. Everything needed to verify relation
//! mining and ablation ordering is emitted as ground truth.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataio::{Interaction, StudentLogs};
use crate::relation::RelationMatrix;
use crate::rng::Rng;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("matrix covers {got} exercises, ground truth {want}")]
    DimensionMismatch { got: usize, want: usize },
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, SynthError>;

/// Generator configuration.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub num_skills: usize,
    pub exercises_per_skill: usize,
    /// Directed skill edges `(from, to, strength)`: practice on `from`
    /// transfers to `to`.
    pub skill_edges: Vec<(usize, usize, f64)>,
    pub num_students: usize,
    pub interactions_per_student: usize,
    /// Median of the lognormal half-life distribution, seconds.
    pub half_life_median_secs: f64,
    /// Lognormal sigma of the half-life distribution.
    pub half_life_sigma: f64,
    /// Mean gap between attempts, seconds (exponential).
    pub gap_mean_secs: f64,
    /// Distinct words in each skill's own pool.
    pub word_pool_size: usize,
    /// Words sampled per exercise text.
    pub words_per_text: usize,
    pub guess: f64,
    pub slip: f64,
    /// Mastery gained per attempt on the practiced skill.
    pub practice_gain: f64,
    /// Mastery level above which a student knows the skill.
    pub mastery_threshold: f64,
    /// Starting mastery for every skill.
    pub initial_mastery: f64,
    /// Per-student per-skill spread around the starting mastery; this is
    /// what makes same-skill answers correlate.
    pub aptitude_sigma: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        let num_skills = 10;
        SynthConfig {
            num_skills,
            exercises_per_skill: 8,
            skill_edges: chain_edges(num_skills, 0.8),
            num_students: 500,
            interactions_per_student: 60,
            half_life_median_secs: 4.0 * 3600.0,
            half_life_sigma: 0.5,
            gap_mean_secs: 1800.0,
            word_pool_size: 12,
            words_per_text: 40,
            guess: 0.1,
            slip: 0.1,
            practice_gain: 0.3,
            mastery_threshold: 0.0,
            initial_mastery: -0.6,
            aptitude_sigma: 1.2,
            seed: 7,
        }
    }
}

/// A chain curriculum: skill k transfers to skill k+1.
pub fn chain_edges(num_skills: usize, strength: f64) -> Vec<(usize, usize, f64)> {
    (0..num_skills.saturating_sub(1))
        .map(|k| (k, k + 1, strength))
        .collect()
}

/// What the generator actually planted.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GroundTruth {
    /// Exercise id -> skill index.
    pub exercise_skill: Vec<usize>,
    /// Directed skill transfer edges `(from, to, strength)`.
    pub skill_edges: Vec<(usize, usize, f64)>,
    /// Dense `E x E` row-major true relation strengths: 1 within a skill,
    /// edge strength across related skills, 0 elsewhere; diagonal 0.
    pub true_relation: Vec<f64>,
    pub student_half_life: Vec<(u64, f64)>,
}

impl GroundTruth {
    pub fn num_exercises(&self) -> usize {
        self.exercise_skill.len()
    }

    pub fn relation(&self, i: u32, j: u32) -> f64 {
        self.true_relation[i as usize * self.num_exercises() + j as usize]
    }
}

/// Generated dataset: logs, raw exercise texts with their skill label, and
/// the planted ground truth.
#[derive(Clone, Debug)]
pub struct SynthData {
    pub logs: StudentLogs,
    /// `(exercise_id, text, kc)` per exercise.
    pub texts: Vec<(u32, String, String)>,
    pub truth: GroundTruth,
}

/// Deterministic generation from the config seed.
pub fn generate(config: &SynthConfig) -> SynthData {
    let root = Rng::new(config.seed);
    let num_exercises = config.num_skills * config.exercises_per_skill;

    // Per-skill word pools: own words plus borrowed words from related
    // skills proportional to edge strength (shared vocabulary is what
    // text-similarity mining is supposed to find).
    let own_words: Vec<Vec<String>> = (0..config.num_skills)
        .map(|k| {
            (0..config.word_pool_size)
                .map(|w| format!("sk{k}w{w}"))
                .collect()
        })
        .collect();
    let mut pools: Vec<Vec<String>> = own_words.clone();
    for &(from, to, strength) in &config.skill_edges {
        let share = ((config.word_pool_size as f64) * strength * 0.7).ceil() as usize;
        let borrowed_by_to: Vec<String> = own_words[from].iter().take(share).cloned().collect();
        let borrowed_by_from: Vec<String> = own_words[to].iter().take(share).cloned().collect();
        pools[to].extend(borrowed_by_to);
        pools[from].extend(borrowed_by_from);
    }

    let mut texts = Vec::with_capacity(num_exercises);
    let mut exercise_skill = Vec::with_capacity(num_exercises);
    let mut text_rng = root.derive(0);
    for e in 0..num_exercises {
        let skill = e / config.exercises_per_skill;
        exercise_skill.push(skill);
        let pool = &pools[skill];
        let words: Vec<&str> = (0..config.words_per_text)
            .map(|_| pool[text_rng.next_range(pool.len())].as_str())
            .collect();
        texts.push((e as u32, words.join(" "), format!("skill_{skill}")));
    }

    // True relation matrix: within-skill 1.0, across edges the strength.
    let mut true_relation = vec![0.0; num_exercises * num_exercises];
    for i in 0..num_exercises {
        for j in 0..num_exercises {
            if i == j {
                continue;
            }
            let (si, sj) = (exercise_skill[i], exercise_skill[j]);
            let mut v: f64 = if si == sj { 1.0 } else { 0.0 };
            for &(from, to, strength) in &config.skill_edges {
                // Influence of earlier j on later i: j's skill transfers to i's.
                if sj == from && si == to {
                    v = v.max(strength);
                }
            }
            true_relation[i * num_exercises + j] = v;
        }
    }

    let mut logs: StudentLogs = Vec::with_capacity(config.num_students);
    let mut student_half_life = Vec::with_capacity(config.num_students);
    for s in 0..config.num_students {
        let student_id = s as u64;
        let mut rng = root.derive(1 + student_id);
        let half_life =
            config.half_life_median_secs * (config.half_life_sigma * rng.next_gaussian()).exp();
        student_half_life.push((student_id, half_life));

        let mut mastery: Vec<f64> = (0..config.num_skills)
            .map(|_| config.initial_mastery + config.aptitude_sigma * rng.next_gaussian())
            .collect();
        let baseline = mastery.clone();
        let mut t = 0.0;
        let mut seq = Vec::with_capacity(config.interactions_per_student);
        for _ in 0..config.interactions_per_student {
            let gap = -config.gap_mean_secs * (1.0 - rng.next_f64()).ln();
            let gap = gap.max(1.0);
            t += gap;
            // Learned mastery decays back toward the student's baseline.
            let decay = (-gap / half_life).exp();
            for (m, b) in mastery.iter_mut().zip(&baseline) {
                *m = b + (*m - b) * decay;
            }
            let skill = rng.next_range(config.num_skills);
            let exercise = (skill * config.exercises_per_skill
                + rng.next_range(config.exercises_per_skill)) as u32;
            let p_correct = if mastery[skill] >= config.mastery_threshold {
                1.0 - config.slip
            } else {
                config.guess
            };
            let correct = rng.bernoulli(p_correct) as u8;
            seq.push(Interaction {
                exercise_id: exercise,
                correct,
                timestamp: t,
            });
            mastery[skill] += config.practice_gain;
            for &(from, to, strength) in &config.skill_edges {
                if from == skill {
                    mastery[to] += config.practice_gain * strength;
                }
            }
        }
        logs.push((student_id, seq));
    }

    SynthData {
        logs,
        texts,
        truth: GroundTruth {
            exercise_skill,
            skill_edges: config.skill_edges.clone(),
            true_relation,
            student_half_life,
        },
    }
}

/// Writes the interaction JSONL consumed by `dataio::parse_logs`.
pub fn write_logs_jsonl(path: &Path, logs: &StudentLogs) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for (student, seq) in logs {
        for x in seq {
            writeln!(
                w,
                r#"{{"student_id": {}, "exercise_id": {}, "correct": {}, "timestamp": {}}}"#,
                student, x.exercise_id, x.correct, x.timestamp
            )?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Writes the exercise-text JSONL consumed by `corpus::load_texts`.
pub fn write_texts_jsonl(path: &Path, texts: &[(u32, String, String)]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for (id, text, kc) in texts {
        let line = serde_json::json!({
            "exercise_id": id,
            "text": text,
            "kc": kc,
        });
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_truth_json(path: &Path, truth: &GroundTruth) -> Result<()> {
    let json = serde_json::to_string_pretty(truth).expect("truth serializes");
    std::fs::write(path, json)?;
    Ok(())
}

pub fn read_truth_json(path: &Path) -> Result<GroundTruth> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text).expect("truth deserializes"))
}

/// Spearman rank correlation between estimated relation entries and the
/// planted strengths, over all ordered pairs `i != j` (absent entries count
/// as zero). Returns 0 when either side has no variance.
pub fn relation_recovery_score(estimate: &RelationMatrix, truth: &GroundTruth) -> Result<f64> {
    let e = truth.num_exercises();
    if estimate.num_exercises() != e {
        return Err(SynthError::DimensionMismatch {
            got: estimate.num_exercises(),
            want: e,
        });
    }
    let mut est = Vec::with_capacity(e * (e - 1));
    let mut want = Vec::with_capacity(e * (e - 1));
    for i in 0..e as u32 {
        for j in 0..e as u32 {
            if i == j {
                continue;
            }
            est.push(estimate.value(i, j));
            want.push(truth.relation(i, j));
        }
    }
    Ok(spearman(&est, &want))
}

/// Spearman correlation with midranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    let rx = midranks(x);
    let ry = midranks(y);
    pearson(&rx, &ry)
}

fn midranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).expect("finite values"));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            ranks[idx[k]] = avg;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (a, b) in x.iter().zip(y) {
        cov += (a - mx) * (b - my);
        vx += (a - mx) * (a - mx);
        vy += (b - my) * (b - my);
    }
    if vx == 0.0 || vy == 0.0 {
        return 0.0;
    }
    cov / (vx.sqrt() * vy.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::relation::RelationMethod;

    fn small_config() -> SynthConfig {
        SynthConfig {
            num_skills: 3,
            exercises_per_skill: 3,
            skill_edges: chain_edges(3, 0.8),
            num_students: 40,
            interactions_per_student: 30,
            word_pool_size: 10,
            words_per_text: 12,
            seed: 11,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn generation_is_bit_reproducible() {
        let cfg = small_config();
        let a = generate(&cfg);
        let b = generate(&cfg);
        assert_eq!(a.logs, b.logs);
        assert_eq!(a.texts, b.texts);
        let c = generate(&SynthConfig {
            seed: 12,
            ..small_config()
        });
        assert_ne!(a.logs, c.logs);
    }

    #[test]
    fn timestamps_strictly_increase_per_student() {
        let data = generate(&small_config());
        for (_, seq) in &data.logs {
            for pair in seq.windows(2) {
                assert!(pair[1].timestamp > pair[0].timestamp);
            }
        }
    }

    #[test]
    fn high_mastery_without_noise_answers_everything_correctly() {
        let cfg = SynthConfig {
            guess: 0.0,
            slip: 0.0,
            initial_mastery: 10.0,
            ..small_config()
        };
        let data = generate(&cfg);
        for (_, seq) in &data.logs {
            for x in seq {
                assert_eq!(x.correct, 1);
            }
        }
    }

    #[test]
    fn infinite_half_life_makes_gaps_irrelevant() {
        let base = SynthConfig {
            half_life_median_secs: f64::INFINITY,
            half_life_sigma: 0.0,
            ..small_config()
        };
        let slow = SynthConfig {
            gap_mean_secs: base.gap_mean_secs * 50.0,
            ..base.clone()
        };
        let a = generate(&base);
        let b = generate(&slow);
        for ((_, sa), (_, sb)) in a.logs.iter().zip(&b.logs) {
            let ca: Vec<u8> = sa.iter().map(|x| x.correct).collect();
            let cb: Vec<u8> = sb.iter().map(|x| x.correct).collect();
            assert_eq!(ca, cb);
        }
    }

    #[test]
    fn planted_phi_signal_beats_unrelated_pairs() {
        // No noise, no forgetting: same-skill association should dominate.
        let cfg = SynthConfig {
            guess: 0.0,
            slip: 0.0,
            half_life_median_secs: f64::INFINITY,
            half_life_sigma: 0.0,
            num_students: 80,
            ..small_config()
        };
        let data = generate(&cfg);
        let tables = crate::relation::build_all_contingencies(&data.logs, 9);
        let mut same = Vec::new();
        let mut unrelated = Vec::new();
        for i in 0..9u32 {
            for j in 0..9u32 {
                if i == j {
                    continue;
                }
                let Some(t) = tables.get(&(i, j)) else { continue };
                if t.total() < 5 {
                    continue;
                }
                let p = crate::relation::phi(t);
                let (si, sj) = (
                    data.truth.exercise_skill[i as usize],
                    data.truth.exercise_skill[j as usize],
                );
                if si == sj {
                    same.push(p);
                } else if data.truth.relation(i, j) == 0.0 && data.truth.relation(j, i) == 0.0 {
                    unrelated.push(p);
                }
            }
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        assert!(!same.is_empty() && !unrelated.is_empty());
        assert!(
            mean(&same) > mean(&unrelated),
            "same {} vs unrelated {}",
            mean(&same),
            mean(&unrelated)
        );
    }

    #[test]
    fn recovery_score_extremes() {
        let data = generate(&small_config());
        let e = data.truth.num_exercises();
        // Estimate equal to the truth scores 1.
        let perfect = RelationMatrix::from_entries(
            e,
            0.0,
            RelationMethod(4),
            (0..e as u32).flat_map(|i| {
                let t = &data.truth;
                (0..e as u32)
                    .filter(move |&j| j != i)
                    .map(move |j| (i, j, t.relation(i, j)))
                    .collect::<Vec<_>>()
            }),
        );
        let s = relation_recovery_score(&perfect, &data.truth).unwrap();
        assert!((s - 1.0).abs() < 1e-12, "score {s}");

        // Randomly permuted values decorrelate.
        let entries = perfect.sorted_entries();
        let mut values: Vec<f64> = entries.iter().map(|&(_, _, v)| v).collect();
        let mut rng = Rng::new(5);
        rng.shuffle(&mut values);
        let mut pairs: Vec<(u32, u32)> = Vec::new();
        for i in 0..e as u32 {
            for j in 0..e as u32 {
                if i != j {
                    pairs.push((i, j));
                }
            }
        }
        rng.shuffle(&mut pairs);
        let shuffled = RelationMatrix::from_entries(
            e,
            0.0,
            RelationMethod(4),
            pairs.iter().take(values.len()).zip(&values).map(|(&(i, j), &v)| (i, j, v)),
        );
        let s = relation_recovery_score(&shuffled, &data.truth).unwrap();
        assert!(s.abs() < 0.2, "score {s}");

        // Dimension mismatch is an error.
        let wrong = RelationMatrix::empty(e + 1, 0.0, RelationMethod(4));
        assert!(relation_recovery_score(&wrong, &data.truth).is_err());
    }

    #[test]
    fn spearman_handles_ties_and_monotone_maps() {
        let x = [1.0f64, 2.0, 3.0, 4.0, 5.0];
        let y: Vec<f64> = x.iter().map(|v| v.exp()).collect();
        assert!((spearman(&x, &y) - 1.0).abs() < 1e-12);
        let z = [1.0, 1.0, 1.0, 2.0, 2.0];
        let w = [3.0, 3.0, 3.0, 9.0, 9.0];
        assert!((spearman(&z, &w) - 1.0).abs() < 1e-12);
        assert_eq!(spearman(&[1.0, 1.0], &[1.0, 2.0]), 0.0);
    }

    #[test]
    fn jsonl_outputs_parse_back() {
        let data = generate(&small_config());
        let dir = tempfile::tempdir().unwrap();
        let logs_path = dir.path().join("logs.jsonl");
        let texts_path = dir.path().join("texts.jsonl");
        let truth_path = dir.path().join("truth.json");
        write_logs_jsonl(&logs_path, &data.logs).unwrap();
        write_texts_jsonl(&texts_path, &data.texts).unwrap();
        write_truth_json(&truth_path, &data.truth).unwrap();

        let logs = crate::dataio::parse_logs(&logs_path).unwrap();
        assert_eq!(logs.len(), data.logs.len());
        assert_eq!(logs[3].1.len(), data.logs[3].1.len());
        let texts = crate::corpus::load_texts(&texts_path).unwrap();
        assert_eq!(texts.len(), data.texts.len());
        assert_eq!(texts[0].kc.as_deref(), Some("skill_0"));
        let truth = read_truth_json(&truth_path).unwrap();
        assert_eq!(truth.exercise_skill, data.truth.exercise_skill);
    }
}

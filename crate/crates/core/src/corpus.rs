//! Exercise text to fixed-dimension semantic embeddings.
//!
//! Raw exercise bodies are tokenized with TEX-aware rules (formula spans
//! decompose into math tokens), a corpus vocabulary supplies word
//! probabilities, and each exercise becomes a smooth-inverse-frequency
//! weighted average of word vectors: `(1/|s|) * sum a/(a + p(w)) * f(w)`.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::Deserialize;
use thiserror::Error;

use crate::numerics::Tensor;
use crate::rng::{hash_str, Rng};

/// Word-embedding dimension.
pub const DEFAULT_WORD_DIM: usize = 50;
/// Default SIF weighting parameter.
pub const DEFAULT_SIF_A: f64 = 1e-3;
/// Token-list truncation length.
pub const MAX_TOKENS: usize = 200;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("empty token list")]
    EmptyTokens,
    #[error("token not in vocabulary: {0:?}")]
    UnknownToken(String),
    #[error("{path}:{line}: {reason}")]
    Malformed {
        path: String,
        line: usize,
        reason: String,
    },
    #[error("word vector for {word:?} has {got} dims, expected {want}")]
    BadVectorDim { word: String, got: usize, want: usize },
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed embedding file: {0}")]
    BadEmbeddingFile(String),
}

pub type Result<T> = std::result::Result<T, CorpusError>;

/// One exercise body, tokenized.
#[derive(Clone, Debug)]
pub struct ExerciseText {
    pub exercise_id: u32,
    pub tokens: Vec<String>,
    pub kc: Option<String>,
}

/// Word ids and corpus probabilities.
#[derive(Clone, Debug)]
pub struct Vocabulary {
    ids: HashMap<String, usize>,
    probs: Vec<f64>,
    words: Vec<String>,
}

impl Vocabulary {
    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn id(&self, word: &str) -> Option<usize> {
        self.ids.get(word).copied()
    }

    pub fn word(&self, id: usize) -> &str {
        &self.words[id]
    }

    /// Corpus probability `p(w)`.
    pub fn prob(&self, word: &str) -> Option<f64> {
        self.id(word).map(|i| self.probs[i])
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }
}

/// Where word vectors came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VectorSource {
    Loaded,
    DeterministicRandom,
}

/// A `|V| x d_w` word-vector matrix aligned with a [`Vocabulary`].
#[derive(Clone, Debug)]
pub struct WordVectors {
    pub matrix: Tensor,
    pub source: VectorSource,
}

impl WordVectors {
    pub fn dim(&self) -> usize {
        self.matrix.cols()
    }

    pub fn row(&self, id: usize) -> &[f64] {
        self.matrix.row(id)
    }
}

/// SIF-weighted exercise embedding matrix, one row per exercise id.
#[derive(Clone, Debug)]
pub struct ExerciseEmbeddings {
    pub matrix: Tensor,
    pub sif_a: f64,
}

impl ExerciseEmbeddings {
    pub fn num_exercises(&self) -> usize {
        self.matrix.rows()
    }

    pub fn dim(&self) -> usize {
        self.matrix.cols()
    }

    pub fn row(&self, exercise_id: u32) -> &[f64] {
        self.matrix.row(exercise_id as usize)
    }
}

/// TEX-aware tokenizer.
///
/// Formula spans decompose into math tokens: backslash commands lose the
/// backslash, grouping characters (including the `$` delimiters) vanish,
/// and operators stand alone. Sentence punctuation is stripped; operator
/// characters tokenize on their own in prose too, so retokenizing joined
/// output is a fixed point. Everything is lowercased and the result is
/// truncated to [`MAX_TOKENS`].
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut word = String::new();
    let mut chars = text.chars().peekable();
    while let Some(c) = chars.next() {
        if out.len() >= MAX_TOKENS {
            break;
        }
        let c = c.to_ascii_lowercase();
        let decimal_point =
            c == '.' && !word.is_empty() && word.chars().all(|w| w.is_ascii_digit());
        if c.is_alphanumeric() || decimal_point {
            word.push(c);
            continue;
        }
        flush(&mut word, &mut out);
        if c == '\\' {
            // TEX command: the letter run after the backslash is the token.
            while let Some(&n) = chars.peek() {
                if n.is_alphabetic() {
                    word.push(n.to_ascii_lowercase());
                    chars.next();
                } else {
                    break;
                }
            }
            flush(&mut word, &mut out);
        } else if is_operator(c) {
            out.push(c.to_string());
        }
        // Whitespace, grouping and punctuation drop.
    }
    flush(&mut word, &mut out);
    out.truncate(MAX_TOKENS);
    out
}

fn flush(word: &mut String, out: &mut Vec<String>) {
    if !word.is_empty() {
        // A trailing '.' was sentence punctuation, not a decimal point.
        if word.ends_with('.') {
            word.pop();
        }
        if !word.is_empty() {
            out.push(std::mem::take(word));
        } else {
            word.clear();
        }
    }
}

fn is_operator(c: char) -> bool {
    matches!(c, '+' | '-' | '*' | '/' | '^' | '=' | '<' | '>' | '_' | '%' | '|')
}

/// Counts tokens across the corpus; `p(w) = count(w) / total`.
pub fn build_vocabulary(texts: &[ExerciseText]) -> Result<Vocabulary> {
    let mut counts: HashMap<&str, u64> = HashMap::new();
    let mut total: u64 = 0;
    for t in texts {
        for tok in &t.tokens {
            *counts.entry(tok.as_str()).or_insert(0) += 1;
            total += 1;
        }
    }
    if total == 0 {
        return Err(CorpusError::EmptyCorpus);
    }
    // Descending count then lexicographic for a deterministic id order.
    let mut pairs: Vec<(&str, u64)> = counts.into_iter().collect();
    pairs.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    let mut ids = HashMap::with_capacity(pairs.len());
    let mut probs = Vec::with_capacity(pairs.len());
    let mut words = Vec::with_capacity(pairs.len());
    for (i, (word, count)) in pairs.iter().enumerate() {
        ids.insert((*word).to_string(), i);
        probs.push(*count as f64 / total as f64);
        words.push((*word).to_string());
    }
    Ok(Vocabulary { ids, probs, words })
}

/// Deterministic unit-variance vectors, a pure function of word and seed.
pub fn deterministic_vectors(vocab: &Vocabulary, dim: usize, seed: u64) -> WordVectors {
    let mut data = Vec::with_capacity(vocab.len() * dim);
    for word in vocab.words() {
        let mut rng = Rng::new(hash_str(word) ^ seed.rotate_left(17));
        for _ in 0..dim {
            data.push(rng.next_gaussian());
        }
    }
    WordVectors {
        matrix: Tensor::new(vec![vocab.len(), dim], data).expect("sized by construction"),
        source: VectorSource::DeterministicRandom,
    }
}

/// Loads `word v1 .. v_dw` lines; words missing from the file fall back to
/// deterministic vectors so the matrix always covers the vocabulary.
pub fn load_word_vectors(path: &Path, vocab: &Vocabulary, dim: usize, seed: u64) -> Result<WordVectors> {
    let mut by_word: HashMap<String, Vec<f64>> = HashMap::new();
    let reader = BufReader::new(File::open(path)?);
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let word = parts.next().unwrap().to_string();
        let vals: std::result::Result<Vec<f64>, _> = parts.map(|p| p.parse::<f64>()).collect();
        let vals = vals.map_err(|e| CorpusError::Malformed {
            path: path.display().to_string(),
            line: lineno + 1,
            reason: format!("bad float: {e}"),
        })?;
        if vals.len() != dim {
            return Err(CorpusError::BadVectorDim {
                word,
                got: vals.len(),
                want: dim,
            });
        }
        by_word.insert(word, vals);
    }
    let fallback = deterministic_vectors(vocab, dim, seed);
    let mut data = Vec::with_capacity(vocab.len() * dim);
    for (id, word) in vocab.words().iter().enumerate() {
        match by_word.get(word) {
            Some(v) => data.extend_from_slice(v),
            None => data.extend_from_slice(fallback.row(id)),
        }
    }
    Ok(WordVectors {
        matrix: Tensor::new(vec![vocab.len(), dim], data).expect("sized by construction"),
        source: VectorSource::Loaded,
    })
}

/// SIF combination of one token list: `(1/|s|) * sum a/(a+p(w)) * f(w)`.
///
/// Multiset semantics: repeated words contribute once per occurrence.
/// Any out-of-vocabulary token is an error; see [`sif_embed_lenient`] for
/// the inference-time behavior.
pub fn sif_embed(
    tokens: &[String],
    vocab: &Vocabulary,
    vectors: &WordVectors,
    a: f64,
) -> Result<Vec<f64>> {
    if tokens.is_empty() {
        return Err(CorpusError::EmptyTokens);
    }
    let dim = vectors.dim();
    let mut acc = vec![0.0; dim];
    for tok in tokens {
        let id = vocab
            .id(tok)
            .ok_or_else(|| CorpusError::UnknownToken(tok.clone()))?;
        let w = a / (a + vocab.prob(tok).unwrap());
        let row = vectors.row(id);
        for (o, v) in acc.iter_mut().zip(row) {
            *o += w * v;
        }
    }
    let inv = 1.0 / tokens.len() as f64;
    for o in acc.iter_mut() {
        *o *= inv;
    }
    Ok(acc)
}

/// Like [`sif_embed`] but unknown words map to the zero vector and are
/// excluded from the averaging count. All-unknown input yields zero.
pub fn sif_embed_lenient(
    tokens: &[String],
    vocab: &Vocabulary,
    vectors: &WordVectors,
    a: f64,
) -> Vec<f64> {
    let dim = vectors.dim();
    let mut acc = vec![0.0; dim];
    let mut known = 0usize;
    for tok in tokens {
        if let Some(id) = vocab.id(tok) {
            let w = a / (a + vocab.prob(tok).unwrap());
            let row = vectors.row(id);
            for (o, v) in acc.iter_mut().zip(row) {
                *o += w * v;
            }
            known += 1;
        }
    }
    if known > 0 {
        let inv = 1.0 / known as f64;
        for o in acc.iter_mut() {
            *o *= inv;
        }
    }
    acc
}

/// Embeds every exercise; row index is the exercise id. Exercises missing
/// from `texts` (or with empty/unknown-only token lists) get zero rows.
pub fn embed_exercises(
    texts: &[ExerciseText],
    vocab: &Vocabulary,
    vectors: &WordVectors,
    a: f64,
    num_exercises: usize,
) -> ExerciseEmbeddings {
    let dim = vectors.dim();
    let mut data = vec![0.0; num_exercises * dim];
    for t in texts {
        let row = sif_embed_lenient(&t.tokens, vocab, vectors, a);
        let idx = t.exercise_id as usize;
        if idx < num_exercises {
            data[idx * dim..(idx + 1) * dim].copy_from_slice(&row);
        }
    }
    ExerciseEmbeddings {
        matrix: Tensor::new(vec![num_exercises, dim], data).expect("sized by construction"),
        sif_a: a,
    }
}

#[derive(Deserialize)]
struct TextLine {
    exercise_id: u32,
    text: String,
    #[serde(default)]
    kc: Option<String>,
}

/// Reads exercise-text JSONL: `{"exercise_id": int, "text": str, "kc": str?}`.
pub fn load_texts(path: &Path) -> Result<Vec<ExerciseText>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: TextLine = serde_json::from_str(&line).map_err(|e| CorpusError::Malformed {
            path: path.display().to_string(),
            line: lineno + 1,
            reason: e.to_string(),
        })?;
        out.push(ExerciseText {
            exercise_id: parsed.exercise_id,
            tokens: tokenize(&parsed.text),
            kc: parsed.kc,
        });
    }
    Ok(out)
}

const EMBED_MAGIC: &[u8; 4] = b"RKTE";
const EMBED_VERSION: u32 = 1;

/// Writes the embedding matrix: magic `RKTE`, version, rows, cols (u32 LE),
/// then row-major `f64` LE.
pub fn write_embeddings(path: &Path, emb: &ExerciseEmbeddings) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(EMBED_MAGIC)?;
    w.write_all(&EMBED_VERSION.to_le_bytes())?;
    w.write_all(&(emb.matrix.rows() as u32).to_le_bytes())?;
    w.write_all(&(emb.matrix.cols() as u32).to_le_bytes())?;
    for v in emb.matrix.data() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_embeddings(path: &Path) -> Result<ExerciseEmbeddings> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != EMBED_MAGIC {
        return Err(CorpusError::BadEmbeddingFile(format!(
            "bad magic {magic:?}, expected RKTE"
        )));
    }
    let mut buf4 = [0u8; 4];
    r.read_exact(&mut buf4)?;
    let version = u32::from_le_bytes(buf4);
    if version != EMBED_VERSION {
        return Err(CorpusError::BadEmbeddingFile(format!(
            "unsupported version {version}"
        )));
    }
    r.read_exact(&mut buf4)?;
    let rows = u32::from_le_bytes(buf4) as usize;
    r.read_exact(&mut buf4)?;
    let cols = u32::from_le_bytes(buf4) as usize;
    let mut data = Vec::with_capacity(rows * cols);
    let mut buf8 = [0u8; 8];
    for _ in 0..rows * cols {
        r.read_exact(&mut buf8)?;
        data.push(f64::from_le_bytes(buf8));
    }
    Ok(ExerciseEmbeddings {
        matrix: Tensor::new(vec![rows, cols], data)
            .map_err(|e| CorpusError::BadEmbeddingFile(e.to_string()))?,
        sif_a: DEFAULT_SIF_A,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(words: &[&str]) -> Vec<String> {
        words.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn tokenize_tex_formula() {
        assert_eq!(tokenize("$\\sqrt(x)+1$"), toks(&["sqrt", "x", "+", "1"]));
    }

    #[test]
    fn tokenize_empty_is_empty() {
        assert_eq!(tokenize(""), Vec::<String>::new());
    }

    #[test]
    fn tokenize_mixed_prose_and_formula() {
        assert_eq!(
            tokenize("Solve $x^2$ twice"),
            toks(&["solve", "x", "^", "2", "twice"])
        );
    }

    #[test]
    fn tokenize_strips_punctuation_and_lowercases() {
        assert_eq!(
            tokenize("Find X, then (carefully) stop."),
            toks(&["find", "x", "then", "carefully", "stop"])
        );
    }

    #[test]
    fn tokenize_truncates_at_limit() {
        let long = vec!["word"; 300].join(" ");
        assert_eq!(tokenize(&long).len(), MAX_TOKENS);
    }

    #[test]
    fn tokenize_idempotent_on_joined_output() {
        for text in [
            "$\\sqrt(x)+1$",
            "Solve $x^2$ twice",
            "a-b and $\\frac{1}{2} = 0.5$!",
            "Numbers 3.14 and 2, plus $y_1 < y_2$",
        ] {
            let once = tokenize(text);
            let again = tokenize(&once.join(" "));
            assert_eq!(once, again, "not idempotent for {text:?}");
        }
    }

    #[test]
    fn vocabulary_counts_probabilities() {
        let texts = vec![ExerciseText {
            exercise_id: 0,
            tokens: toks(&["a", "a", "b"]),
            kc: None,
        }];
        let v = build_vocabulary(&texts).unwrap();
        assert!((v.prob("a").unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert!((v.prob("b").unwrap() - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn vocabulary_symmetric_two_docs() {
        let texts = vec![
            ExerciseText {
                exercise_id: 0,
                tokens: toks(&["a"]),
                kc: None,
            },
            ExerciseText {
                exercise_id: 1,
                tokens: toks(&["b"]),
                kc: None,
            },
        ];
        let v = build_vocabulary(&texts).unwrap();
        assert_eq!(v.prob("a"), Some(0.5));
        assert_eq!(v.prob("b"), Some(0.5));
    }

    #[test]
    fn vocabulary_matches_independent_count_on_golden_corpus() {
        let docs: Vec<Vec<&str>> = vec![
            vec!["solve", "x", "+", "1"],
            vec!["x", "x", "squared"],
            vec!["graph", "the", "line"],
            vec!["the", "x", "axis"],
            vec!["solve", "the", "system"],
        ];
        let texts: Vec<ExerciseText> = docs
            .iter()
            .enumerate()
            .map(|(i, d)| ExerciseText {
                exercise_id: i as u32,
                tokens: toks(d),
                kc: None,
            })
            .collect();
        // Independent count with a plain map.
        let mut counts: HashMap<&str, usize> = HashMap::new();
        let mut total = 0usize;
        for d in &docs {
            for w in d {
                *counts.entry(w).or_insert(0) += 1;
                total += 1;
            }
        }
        let v = build_vocabulary(&texts).unwrap();
        assert_eq!(v.len(), counts.len());
        for (w, c) in counts {
            assert!((v.prob(w).unwrap() - c as f64 / total as f64).abs() < 1e-15);
        }
        let psum: f64 = (0..v.len()).map(|i| v.probs[i]).sum();
        assert!((psum - 1.0).abs() < 1e-9);
    }

    #[test]
    fn empty_corpus_is_an_error() {
        let texts = vec![ExerciseText {
            exercise_id: 0,
            tokens: vec![],
            kc: None,
        }];
        assert!(matches!(
            build_vocabulary(&texts),
            Err(CorpusError::EmptyCorpus)
        ));
    }

    fn tiny_vocab(entries: &[(&str, f64)]) -> Vocabulary {
        let mut ids = HashMap::new();
        let mut probs = Vec::new();
        let mut words = Vec::new();
        for (i, (w, p)) in entries.iter().enumerate() {
            ids.insert(w.to_string(), i);
            probs.push(*p);
            words.push(w.to_string());
        }
        Vocabulary { ids, probs, words }
    }

    fn vectors_from(rows: &[Vec<f64>]) -> WordVectors {
        WordVectors {
            matrix: Tensor::from_rows(rows),
            source: VectorSource::Loaded,
        }
    }

    #[test]
    fn sif_single_token_halves_at_matching_probability() {
        // a/(a+p) = 0.5 when p == a.
        let vocab = tiny_vocab(&[("w", 0.5)]);
        let vecs = vectors_from(&[vec![2.0, -4.0]]);
        let e = sif_embed(&toks(&["w"]), &vocab, &vecs, 0.5).unwrap();
        assert_eq!(e, vec![1.0, -2.0]);
    }

    #[test]
    fn sif_mean_of_equal_terms() {
        let vocab = tiny_vocab(&[("u", 0.25), ("v", 0.25)]);
        let vecs = vectors_from(&[vec![3.0, 6.0], vec![3.0, 6.0]]);
        let a = 0.75;
        let e = sif_embed(&toks(&["u", "v"]), &vocab, &vecs, a).unwrap();
        let w = a / (a + 0.25);
        assert!((e[0] - w * 3.0).abs() < 1e-15);
        assert!((e[1] - w * 6.0).abs() < 1e-15);
    }

    #[test]
    fn sif_three_token_hand_evaluation() {
        let vocab = tiny_vocab(&[("x", 0.5), ("y", 0.3), ("z", 0.2)]);
        let vecs = vectors_from(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]]);
        let a = 1e-3;
        let got = sif_embed(&toks(&["x", "y", "z"]), &vocab, &vecs, a).unwrap();
        // Scripted oracle: accumulate term by term.
        let mut want = vec![0.0, 0.0];
        for (p, v) in [(0.5, [1.0, 0.0]), (0.3, [0.0, 1.0]), (0.2, [1.0, 1.0])] {
            let w = a / (a + p);
            want[0] += w * v[0];
            want[1] += w * v[1];
        }
        want[0] /= 3.0;
        want[1] /= 3.0;
        assert!((got[0] - want[0]).abs() < 1e-15);
        assert!((got[1] - want[1]).abs() < 1e-15);
    }

    #[test]
    fn sif_errors_name_the_unknown_token() {
        let vocab = tiny_vocab(&[("x", 1.0)]);
        let vecs = vectors_from(&[vec![1.0]]);
        let err = sif_embed(&toks(&["x", "mystery"]), &vocab, &vecs, 1e-3).unwrap_err();
        assert!(err.to_string().contains("mystery"));
        assert!(matches!(
            sif_embed(&[], &vocab, &vecs, 1e-3),
            Err(CorpusError::EmptyTokens)
        ));
    }

    #[test]
    fn sif_linear_in_word_vectors_and_order_free() {
        let vocab = tiny_vocab(&[("x", 0.5), ("y", 0.5)]);
        let base = vec![vec![1.0, 2.0], vec![-1.0, 0.5]];
        let scaled: Vec<Vec<f64>> = base.iter().map(|r| r.iter().map(|v| v * 3.0).collect()).collect();
        let a = 1e-3;
        let e1 = sif_embed(&toks(&["x", "y"]), &vocab, &vectors_from(&base), a).unwrap();
        let e3 = sif_embed(&toks(&["x", "y"]), &vocab, &vectors_from(&scaled), a).unwrap();
        for j in 0..2 {
            assert!((e3[j] - 3.0 * e1[j]).abs() < 1e-12);
        }
        let swapped = sif_embed(&toks(&["y", "x"]), &vocab, &vectors_from(&base), a).unwrap();
        assert_eq!(e1, swapped);
    }

    #[test]
    fn sif_uniform_frequencies_reduce_to_scaled_mean() {
        let vocab = tiny_vocab(&[("x", 0.25), ("y", 0.25), ("z", 0.25), ("q", 0.25)]);
        let rows = vec![
            vec![1.0, 2.0],
            vec![3.0, -1.0],
            vec![0.0, 0.5],
            vec![2.0, 2.0],
        ];
        let a = 0.1;
        let e = sif_embed(&toks(&["x", "y", "z", "q"]), &vocab, &vectors_from(&rows), a).unwrap();
        let w = a / (a + 0.25);
        for j in 0..2 {
            let mean: f64 = rows.iter().map(|r| r[j]).sum::<f64>() / 4.0;
            assert!((e[j] - w * mean).abs() < 1e-12);
        }
    }

    #[test]
    fn identical_token_multisets_embed_identically() {
        let texts = vec![
            ExerciseText {
                exercise_id: 0,
                tokens: toks(&["plot", "the", "curve"]),
                kc: None,
            },
            ExerciseText {
                exercise_id: 1,
                tokens: toks(&["curve", "the", "plot"]),
                kc: None,
            },
        ];
        let vocab = build_vocabulary(&texts).unwrap();
        let vecs = deterministic_vectors(&vocab, 8, 7);
        let emb = embed_exercises(&texts, &vocab, &vecs, DEFAULT_SIF_A, 2);
        for (a, b) in emb.row(0).iter().zip(emb.row(1)) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn deterministic_vectors_depend_only_on_word_and_seed() {
        let v1 = tiny_vocab(&[("alpha", 0.5), ("beta", 0.5)]);
        let v2 = tiny_vocab(&[("beta", 0.25), ("gamma", 0.5), ("alpha", 0.25)]);
        let w1 = deterministic_vectors(&v1, 6, 42);
        let w2 = deterministic_vectors(&v2, 6, 42);
        assert_eq!(
            w1.row(v1.id("alpha").unwrap()),
            w2.row(v2.id("alpha").unwrap())
        );
        assert_eq!(
            w1.row(v1.id("beta").unwrap()),
            w2.row(v2.id("beta").unwrap())
        );
        let w3 = deterministic_vectors(&v1, 6, 43);
        assert_ne!(w1.row(0), w3.row(0));
    }

    #[test]
    fn lenient_embedding_skips_unknown_words() {
        let vocab = tiny_vocab(&[("x", 1.0)]);
        let vecs = vectors_from(&[vec![4.0, 8.0]]);
        let a = 1.0;
        let got = sif_embed_lenient(&toks(&["x", "unseen"]), &vocab, &vecs, a);
        let strict = sif_embed(&toks(&["x"]), &vocab, &vecs, a).unwrap();
        assert_eq!(got, strict);
        assert_eq!(
            sif_embed_lenient(&toks(&["unseen"]), &vocab, &vecs, a),
            vec![0.0, 0.0]
        );
    }

    #[test]
    fn embedding_file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("emb.rkte");
        let emb = ExerciseEmbeddings {
            matrix: Tensor::from_rows(&[vec![1.5, -2.25], vec![0.0, 3.125]]),
            sif_a: DEFAULT_SIF_A,
        };
        write_embeddings(&path, &emb).unwrap();
        let back = read_embeddings(&path).unwrap();
        assert_eq!(back.matrix, emb.matrix);
    }
}

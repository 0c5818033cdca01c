//! Pre-trained word vectors and word-matrix construction.

use std::collections::HashMap;
use std::io::{BufRead, BufReader};
use std::path::Path;

use crate::{Error, Result, Scalar};

/// Static word vectors, immutable after loading.
#[derive(Debug, Clone)]
pub struct EmbeddingTable<T> {
    dim: usize,
    entries: HashMap<String, Vec<T>>,
}

impl<T: Scalar> EmbeddingTable<T> {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("embedding dimension must be at least 1"));
        }
        Ok(EmbeddingTable {
            dim,
            entries: HashMap::new(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Later inserts of the same word overwrite earlier ones.
    pub fn insert(&mut self, word: impl Into<String>, vector: Vec<T>) -> Result<()> {
        if vector.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: vector.len(),
            });
        }
        self.entries.insert(word.into(), vector);
        Ok(())
    }

    pub fn get(&self, word: &str) -> Option<&[T]> {
        self.entries.get(word).map(Vec::as_slice)
    }

    /// Reads the plain-text layout `word v1 v2 ... v_dim`, one word per line.
    pub fn load(path: impl AsRef<Path>, dim: usize) -> Result<Self> {
        Self::load_filtered(path, dim, |_| true)
    }

    /// Like [`load`](Self::load), keeping only words for which `keep` is true.
    /// Skipped lines are still checked for the right number of components.
    pub fn load_filtered(path: impl AsRef<Path>, dim: usize, keep: impl Fn(&str) -> bool) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut table = Self::new(dim)?;
        let mut reader = BufReader::with_capacity(1 << 20, file);
        let mut buf = Vec::new();
        let mut line_no = 0;
        loop {
            buf.clear();
            let n = reader
                .read_until(b'\n', &mut buf)
                .map_err(|e| Error::io(path, e))?;
            if n == 0 {
                break;
            }
            line_no += 1;
            let line = String::from_utf8_lossy(&buf);
            let line = line.trim_end_matches(['\n', '\r']);
            if line.trim().is_empty() {
                continue;
            }
            let malformed = |reason: String| Error::Malformed {
                path: path.to_path_buf(),
                line: line_no,
                reason,
            };
            let mut parts = line.split_ascii_whitespace();
            let word = parts.next().expect("non-empty line");
            let mut vector = Vec::with_capacity(dim);
            for tok in parts {
                let v: f64 = tok
                    .parse()
                    .map_err(|_| malformed(format!("unparsable component {tok:?}")))?;
                if !v.is_finite() {
                    return Err(malformed(format!("non-finite component {tok:?}")));
                }
                vector.push(T::from_f64_lossy(v));
            }
            if vector.len() != dim {
                return Err(malformed(format!(
                    "expected {dim} components, found {}",
                    vector.len()
                )));
            }
            if keep(word) {
                table.entries.insert(word.to_string(), vector);
            }
        }
        Ok(table)
    }
}

pub fn load_embeddings<T: Scalar>(path: impl AsRef<Path>, dim: usize) -> Result<EmbeddingTable<T>> {
    EmbeddingTable::load(path, dim)
}

/// Row-major `rows x dim` stack of word vectors for one message.
#[derive(Debug, Clone, PartialEq)]
pub struct WordMatrix<T> {
    rows: usize,
    dim: usize,
    data: Vec<T>,
}

impl<T: Scalar> WordMatrix<T> {
    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let dim = rows.first().map(Vec::len).ok_or(Error::Empty("word matrix rows"))?;
        if dim == 0 {
            return Err(Error::invalid("word matrix needs at least one column"));
        }
        let mut data = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            if r.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(WordMatrix {
            rows: rows.len(),
            dim,
            data,
        })
    }

    pub fn from_flat(rows: usize, dim: usize, data: Vec<T>) -> Result<Self> {
        if rows * dim != data.len() || dim == 0 {
            return Err(Error::DimensionMismatch {
                expected: rows * dim,
                found: data.len(),
            });
        }
        Ok(WordMatrix { rows, dim, data })
    }

    pub fn zeros(rows: usize, dim: usize) -> Self {
        WordMatrix {
            rows,
            dim,
            data: vec![T::zero(); rows * dim],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn get(&self, row: usize, col: usize) -> T {
        self.data[row * self.dim + col]
    }

    /// `rows` consecutive rows starting at `start`, flattened.
    pub fn window(&self, start: usize, rows: usize) -> &[T] {
        &self.data[start * self.dim..(start + rows) * self.dim]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn scaled(&self, c: T) -> Self {
        WordMatrix {
            rows: self.rows,
            dim: self.dim,
            data: self.data.iter().map(|&v| v * c).collect(),
        }
    }
}

/// Stacks the vectors of `tokens`. Out-of-vocabulary tokens become zero rows,
/// and zero rows are appended until there are at least `min_len` rows.
pub fn build_word_matrix<T: Scalar, S: AsRef<str>>(
    tokens: &[S],
    table: &EmbeddingTable<T>,
    min_len: usize,
) -> WordMatrix<T> {
    let dim = table.dim();
    let rows = tokens.len().max(min_len);
    let mut data = vec![T::zero(); rows * dim];
    for (i, tok) in tokens.iter().enumerate() {
        if let Some(v) = table.get(tok.as_ref()) {
            data[i * dim..(i + 1) * dim].copy_from_slice(v);
        }
    }
    WordMatrix { rows, dim, data }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_tmp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn loads_vectors_and_last_duplicate_wins() {
        let f = write_tmp("cat 0.1 0.2 0.3\ndog 1 2 3\ncat 4 5 6\n");
        let t: EmbeddingTable<f64> = load_embeddings(f.path(), 3).unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t.get("cat").unwrap(), &[4.0, 5.0, 6.0]);
        assert_eq!(t.get("dog").unwrap(), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn wrong_component_count_names_line() {
        let f = write_tmp("dog 1 2 3\ncat 0.1 0.2\n");
        match load_embeddings::<f64>(f.path(), 3) {
            Err(Error::Malformed { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        let f = write_tmp("cat 0.1 x 0.3\n");
        assert!(matches!(
            load_embeddings::<f64>(f.path(), 3),
            Err(Error::Malformed { line: 1, .. })
        ));
    }

    #[test]
    fn filtered_load_keeps_selected_words() {
        let f = write_tmp("cat 1 2\ndog 3 4\n");
        let t: EmbeddingTable<f64> = EmbeddingTable::load_filtered(f.path(), 2, |w| w == "dog").unwrap();
        assert_eq!(t.len(), 1);
        assert!(t.get("cat").is_none());
        let f = write_tmp("cat 1\ndog 3 4\n");
        assert!(EmbeddingTable::<f64>::load_filtered(f.path(), 2, |w| w == "dog").is_err());
    }

    #[test]
    fn empty_file_gives_empty_table() {
        let f = write_tmp("");
        let t: EmbeddingTable<f32> = load_embeddings(f.path(), 100).unwrap();
        assert!(t.is_empty());
        assert_eq!(t.dim(), 100);
    }

    #[test]
    fn word_matrix_shape_and_padding() {
        let mut t = EmbeddingTable::<f64>::new(100).unwrap();
        for w in ["a", "b", "c", "d", "e"] {
            t.insert(w, vec![1.0; 100]).unwrap();
        }
        let m = build_word_matrix(&["a", "b", "c", "d", "e"], &t, 2);
        assert_eq!((m.rows(), m.dim()), (5, 100));

        let empty: [&str; 0] = [];
        let m = build_word_matrix(&empty, &t, 2);
        assert_eq!((m.rows(), m.dim()), (2, 100));
        assert!(m.as_slice().iter().all(|&v| v == 0.0));

        let m = build_word_matrix(&["zzz"], &t, 2);
        assert_eq!((m.rows(), m.dim()), (2, 100));
        assert!(m.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rows_follow_token_order() {
        let mut t = EmbeddingTable::<f64>::new(2).unwrap();
        t.insert("x", vec![1.0, 2.0]).unwrap();
        t.insert("y", vec![3.0, 4.0]).unwrap();
        let m = build_word_matrix(&["y", "oov", "x"], &t, 2);
        assert_eq!(m.row(0), &[3.0, 4.0]);
        assert_eq!(m.row(1), &[0.0, 0.0]);
        assert_eq!(m.row(2), &[1.0, 2.0]);
    }
}

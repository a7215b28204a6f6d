use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use crate::error::{Error, Result};

/// Word -> vector lookup read from a whitespace-separated text file
/// (`word v1 v2 ... vD` per line, GloVe layout).
#[derive(Debug, Clone, PartialEq)]
pub struct StaticVectorTable {
    dim: usize,
    vectors: HashMap<String, Vec<f64>>,
}

impl StaticVectorTable {
    pub fn from_reader<R: BufRead>(reader: R) -> Result<Self> {
        let mut dim = 0;
        let mut vectors = HashMap::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::Precondition(format!("vector table line {}: {e}", i + 1)))?;
            let mut parts = line.split_whitespace();
            let Some(word) = parts.next() else { continue };
            let values: Vec<f64> = parts
                .map(str::parse)
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Precondition(format!("vector table line {}: {e}", i + 1)))?;
            if dim == 0 {
                dim = values.len();
            }
            if values.is_empty() || values.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: values.len() });
            }
            vectors.insert(word.to_string(), values);
        }
        if dim == 0 {
            return Err(Error::Precondition("vector table is empty".into()));
        }
        Ok(StaticVectorTable { dim, vectors })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_reader(BufReader::new(file))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn get(&self, word: &str) -> Option<&[f64]> {
        self.vectors.get(word).or_else(|| self.vectors.get(&word.to_lowercase())).map(Vec::as_slice)
    }

    /// Mean word vector of a whitespace-tokenized phrase. Out-of-vocabulary
    /// words contribute zero vectors; their number is returned alongside.
    pub fn phrase_vector(&self, phrase: &str) -> (Vec<f64>, usize) {
        let mut acc = vec![0.0; self.dim];
        let mut n = 0usize;
        let mut oov = 0usize;
        for w in phrase.split_whitespace() {
            n += 1;
            match self.get(w) {
                Some(v) => acc.iter_mut().zip(v).for_each(|(a, b)| *a += b),
                None => oov += 1,
            }
        }
        if n > 0 {
            acc.iter_mut().for_each(|a| *a /= n as f64);
        }
        (acc, oov)
    }
}

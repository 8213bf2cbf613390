use std::collections::HashSet;
use std::io::BufRead;

use serde::Serialize;

use super::model::GrnModel;
use crate::{Error, Result};

/// Outcome of loading pretrained vectors.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmbeddingCoverage {
    /// Distinct vocabulary tokens whose rows were overwritten.
    pub matched: usize,
    pub vocab_size: usize,
    pub coverage: f64,
    /// Lines skipped because a value did not parse or was not finite.
    pub malformed: usize,
    /// Well-formed lines for tokens outside the vocabulary.
    pub unused: usize,
}

/// Overwrites embedding rows from a `token v1 ... vd` text file. Rows with
/// no match keep their current values. A leading `count dim` header line is
/// accepted. Complex-valued vectors are expected flattened as real parts
/// followed by imaginary parts.
pub fn load_embeddings(model: &mut GrnModel, reader: impl BufRead) -> Result<EmbeddingCoverage> {
    let d = model.config.embedding_dim;
    let mut matched = HashSet::new();
    let mut malformed = 0;
    let mut unused = 0;
    let mut row = Vec::with_capacity(d);
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        let mut fields = line.split_whitespace();
        let Some(token) = fields.next() else { continue };
        row.clear();
        let mut ok = true;
        for f in fields {
            match f.parse::<f64>() {
                Ok(v) if v.is_finite() => row.push(v),
                _ => {
                    ok = false;
                    break;
                }
            }
        }
        if !ok || row.is_empty() {
            malformed += 1;
            continue;
        }
        if n == 0 && row.len() == 1 && token.parse::<u64>().is_ok() {
            if row[0] as usize != d {
                return Err(Error::Shape(format!(
                    "embedding file declares dimension {}, model expects {d}",
                    row[0]
                )));
            }
            continue;
        }
        if row.len() != d {
            return Err(Error::Shape(format!(
                "embedding line {} has {} values, model expects {d}",
                n + 1,
                row.len()
            )));
        }
        match model.vocab.get(token) {
            Some(id) => {
                model
                    .weights
                    .embedding
                    .row_mut(id)
                    .iter_mut()
                    .zip(&row)
                    .for_each(|(dst, &v)| *dst = v);
                matched.insert(id);
            }
            None => unused += 1,
        }
    }
    let vocab_size = model.vocab.len();
    Ok(EmbeddingCoverage {
        matched: matched.len(),
        vocab_size,
        coverage: matched.len() as f64 / vocab_size as f64,
        malformed,
        unused,
    })
}

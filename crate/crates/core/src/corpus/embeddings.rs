use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Vocabulary, PAD};
use crate::diffcore::Tensor;
use crate::error::{Error, Result};

/// Rows for tokens missing from the pre-trained file are drawn from
/// `[-OOV_RANGE, OOV_RANGE]`.
pub const OOV_RANGE: f64 = 0.25;

/// `|V| x k` word vectors aligned with a [`Vocabulary`].
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable {
    pub matrix: Tensor,
    /// How many rows came from the pre-trained file.
    pub pretrained_rows: usize,
}

impl EmbeddingTable {
    pub fn dim(&self) -> usize {
        self.matrix.cols()
    }

    pub fn rows(&self) -> usize {
        self.matrix.rows()
    }

    pub fn row(&self, id: usize) -> &[f64] {
        self.matrix.row(id)
    }
}

fn random_rows(vocab_len: usize, dim: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data: Vec<f64> = (0..vocab_len * dim)
        .map(|_| rng.gen_range(-OOV_RANGE..=OOV_RANGE))
        .collect();
    data[PAD * dim..(PAD + 1) * dim].fill(0.0);
    data
}

/// Every row random except the zero padding row.
pub fn random_embeddings(vocab: &Vocabulary, dim: usize, seed: u64) -> Result<EmbeddingTable> {
    if dim == 0 {
        return Err(Error::Config("embedding dimension must be positive".into()));
    }
    let data = random_rows(vocab.len(), dim, seed);
    Ok(EmbeddingTable {
        matrix: Tensor::matrix(vocab.len(), dim, data)?,
        pretrained_rows: 0,
    })
}

/// Parses word2vec text format: a `count dim` header, then `token v1 .. v_dim`.
pub fn parse_embeddings(
    content: &str,
    path: &Path,
    vocab: &Vocabulary,
    dim: usize,
    seed: u64,
) -> Result<EmbeddingTable> {
    let err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut lines = content.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| err(1, "missing header".into()))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    let file_dim: usize = match fields.as_slice() {
        [count, d] => {
            count
                .parse::<usize>()
                .map_err(|e| err(1, format!("bad vocabulary size: {e}")))?;
            d.parse().map_err(|e| err(1, format!("bad dimension: {e}")))?
        }
        _ => return Err(err(1, format!("expected `count dim`, got `{header}`"))),
    };
    if file_dim != dim {
        return Err(err(1, format!("file has dimension {file_dim}, configured {dim}")));
    }
    let mut data = random_rows(vocab.len(), dim, seed);
    let mut seen = vec![false; vocab.len()];
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let token = parts.next().unwrap_or_default();
        let values = parts
            .map(str::parse::<f64>)
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| err(i + 1, format!("bad value: {e}")))?;
        if values.len() != dim {
            return Err(err(i + 1, format!("expected {dim} values, got {}", values.len())));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(err(i + 1, "non-finite value".into()));
        }
        match vocab.get(token) {
            Some(id) if id != PAD && !seen[id] => {
                data[id * dim..(id + 1) * dim].copy_from_slice(&values);
                seen[id] = true;
            }
            _ => {}
        }
    }
    Ok(EmbeddingTable {
        matrix: Tensor::matrix(vocab.len(), dim, data)?,
        pretrained_rows: seen.iter().filter(|&&s| s).count(),
    })
}

pub fn load_embeddings(path: &Path, vocab: &Vocabulary, dim: usize, seed: u64) -> Result<EmbeddingTable> {
    parse_embeddings(&fs::read_to_string(path).map_err(Error::file(path))?, path, vocab, dim, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(content: &str, vocab: &Vocabulary, dim: usize) -> Result<EmbeddingTable> {
        parse_embeddings(content, Path::new("emb.txt"), vocab, dim, 11)
    }

    #[test]
    fn file_rows_are_copied() {
        let vocab = Vocabulary::from_tokens(["good", "bad"]);
        let t = parse("2 3\ngood 1 2 3\nbad -1 0 0.5\n", &vocab, 3).unwrap();
        assert_eq!(t.row(vocab.id("good")), &[1.0, 2.0, 3.0]);
        assert_eq!(t.row(vocab.id("bad")), &[-1.0, 0.0, 0.5]);
        assert_eq!(t.pretrained_rows, 2);
    }

    #[test]
    fn missing_tokens_are_random_and_padding_is_zero() {
        let vocab = Vocabulary::from_tokens(["good", "absent"]);
        let t = parse("1 3\ngood 1 2 3\n", &vocab, 3).unwrap();
        let row = t.row(vocab.id("absent"));
        assert!(row.iter().all(|v| v.abs() <= OOV_RANGE));
        assert!(row.iter().any(|&v| v != 0.0));
        assert_eq!(t.row(PAD), &[0.0, 0.0, 0.0]);
        let again = parse("1 3\ngood 1 2 3\n", &vocab, 3).unwrap();
        assert_eq!(t, again);
    }

    #[test]
    fn dimension_mismatch_and_bad_lines() {
        let vocab = Vocabulary::from_tokens(["a"]);
        assert!(matches!(parse("1 4\na 1 2 3 4\n", &vocab, 3), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(parse("1 3\na 1 2\n", &vocab, 3), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(parse("1 3\na 1 x 2\n", &vocab, 3), Err(Error::Parse { line: 2, .. })));
    }
}

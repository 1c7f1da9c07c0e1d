use crate::corpus::{EmbeddingTable, PAD};
use crate::error::{Error, Result};

/// Mean of the embedding rows of `ids`, skipping padding.
pub fn encode_avg(ids: &[usize], emb: &EmbeddingTable) -> Result<Vec<f64>> {
    let mut acc = vec![0.0; emb.dim()];
    let mut n = 0usize;
    for &id in ids.iter().filter(|&&id| id != PAD) {
        if id >= emb.rows() {
            return Err(Error::invalid(format!("token id {id} outside the embedding table")));
        }
        for (a, v) in acc.iter_mut().zip(emb.row(id)) {
            *a += v;
        }
        n += 1;
    }
    if n == 0 {
        return Err(Error::EmptySegment);
    }
    acc.iter_mut().for_each(|a| *a /= n as f64);
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{random_embeddings, Vocabulary};

    fn table() -> EmbeddingTable {
        let vocab = Vocabulary::from_tokens(["a", "b", "c", "d", "e"]);
        random_embeddings(&vocab, 4, 9).unwrap()
    }

    #[test]
    fn single_and_pair() {
        let t = table();
        assert_eq!(encode_avg(&[3], &t).unwrap(), t.row(3));
        let mean = encode_avg(&[2, 4], &t).unwrap();
        for j in 0..4 {
            assert!((mean[j] - (t.row(2)[j] + t.row(4)[j]) / 2.0).abs() < 1e-15);
        }
    }

    #[test]
    fn matches_loop_mean_and_skips_padding() {
        let t = table();
        let ids = [2, 5, 1, 6, 3];
        let got = encode_avg(&ids, &t).unwrap();
        for (j, g) in got.iter().enumerate() {
            let mut s = 0.0;
            for &id in &ids {
                s += t.row(id)[j];
            }
            assert!((g - s / 5.0).abs() < 1e-14);
        }
        assert_eq!(encode_avg(&[2, PAD, 4], &t).unwrap(), encode_avg(&[2, 4], &t).unwrap());
        assert!(encode_avg(&[PAD], &t).is_err());
    }
}

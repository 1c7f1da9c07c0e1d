use super::logreg::{train_logreg, Features, LogReg, LogRegConfig};
use crate::corpus::{Corpus, EmbeddingTable, Vocabulary};
use crate::encoders::encode_avg;
use crate::error::{Error, Result};
use crate::evaluation::fold_assignment;

/// Mean-embedding vectors and gold labels of every segment, in corpus order.
fn segment_data(corpus: &Corpus, vocab: &Vocabulary, table: &EmbeddingTable) -> Result<(Vec<Vec<f64>>, Vec<usize>)> {
    let mut xs = Vec::with_capacity(corpus.num_segments());
    let mut ys = Vec::with_capacity(corpus.num_segments());
    for (r, seg) in corpus.reviews.iter().flat_map(|r| r.segments.iter().map(move |s| (r, s))) {
        let gold = seg
            .gold_label
            .ok_or_else(|| Error::invalid(format!(
                "review `{}` has a segment without a gold label; seg-lr trains on segment-labeled data",
                r.id
            )))?;
        xs.push(encode_avg(&vocab.ids(&seg.tokens), table)?);
        ys.push(gold);
    }
    Ok((xs, ys))
}

/// Seg-LR: logistic regression on segment vectors with gold segment labels.
pub fn train_seg_lr(
    corpus: &Corpus,
    vocab: &Vocabulary,
    table: &EmbeddingTable,
    config: &LogRegConfig,
) -> Result<LogReg> {
    let (xs, ys) = segment_data(corpus, vocab, table)?;
    let w = vec![1.0; ys.len()];
    Ok(train_logreg(&Features::Dense(xs), &ys, &w, corpus.num_segment_classes(), config)?.0)
}

/// Out-of-fold Seg-LR distributions for every segment in corpus order,
/// with the fold of each segment.
pub fn seg_lr_cross_val(
    corpus: &Corpus,
    vocab: &Vocabulary,
    table: &EmbeddingTable,
    folds: usize,
    seed: u64,
    config: &LogRegConfig,
) -> Result<(Vec<Vec<f64>>, Vec<usize>)> {
    let (xs, ys) = segment_data(corpus, vocab, table)?;
    let assignment = fold_assignment(xs.len(), folds, seed)?;
    let mut out = vec![Vec::new(); xs.len()];
    for k in 0..folds {
        let train: Vec<usize> = (0..xs.len()).filter(|&i| assignment[i] != k).collect();
        let x = Features::Dense(train.iter().map(|&i| xs[i].clone()).collect());
        let y: Vec<usize> = train.iter().map(|&i| ys[i]).collect();
        let (model, _) = train_logreg(&x, &y, &vec![1.0; y.len()], corpus.num_segment_classes(), config)?;
        for i in (0..xs.len()).filter(|&i| assignment[i] == k) {
            out[i] = model.predict_dense(&xs[i]);
        }
    }
    Ok((out, assignment))
}

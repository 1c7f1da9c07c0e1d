use std::collections::BTreeMap;

use serde::Serialize;

use super::Corpus;
use crate::error::{Error, Result};

/// Witness statistics for reviews of one class.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClassStats {
    pub reviews: usize,
    pub segments: usize,
    /// Share of all segments in the corpus that sit in reviews of this class.
    pub segment_share: f64,
    /// Mean number of witness segments per review of this class.
    pub witness: f64,
    /// Witness segments over all segments inside reviews of this class.
    pub witness_rate: f64,
}

/// Keyed by 1-based class label; classes without reviews are absent.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CorpusStats {
    pub reviews: usize,
    pub segments: usize,
    pub classes: BTreeMap<usize, ClassStats>,
}

/// A witness of a class-`x` review is a segment whose gold label is the
/// label such a review's evidence carries (`x` itself, or its polarity for
/// rating corpora).
pub fn corpus_stats(corpus: &Corpus) -> Result<CorpusStats> {
    if !corpus.has_gold_segments() {
        return Err(Error::invalid("corpus statistics need gold segment labels"));
    }
    let c = corpus.num_classes;
    let mut reviews = vec![0usize; c];
    let mut segments = vec![0usize; c];
    let mut witnesses = vec![0usize; c];
    for r in &corpus.reviews {
        let target = corpus.segment_labels.witness_label(r.label, c);
        reviews[r.label] += 1;
        segments[r.label] += r.segments.len();
        witnesses[r.label] += r.segments.iter().filter(|s| s.gold_label == Some(target)).count();
    }
    let total = corpus.num_segments() as f64;
    let classes = (0..c)
        .filter(|&x| reviews[x] > 0)
        .map(|x| {
            let stats = ClassStats {
                reviews: reviews[x],
                segments: segments[x],
                segment_share: segments[x] as f64 / total,
                witness: witnesses[x] as f64 / reviews[x] as f64,
                witness_rate: witnesses[x] as f64 / segments[x] as f64,
            };
            (x + 1, stats)
        })
        .collect();
    Ok(CorpusStats {
        reviews: corpus.len(),
        segments: corpus.num_segments(),
        classes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Review, Segment, SegmentLabelSpace, Split};

    fn review(label: usize, golds: &[usize]) -> Review {
        Review {
            id: format!("r{label}"),
            segments: golds.iter().map(|&g| Segment::new("text").unwrap().with_label(g)).collect(),
            label,
            sample_weight: 1.0,
        }
    }

    #[test]
    fn direct_count() {
        let corpus = Corpus::new(
            vec![review(1, &[1, 1, 0, 0])],
            2,
            Split::Test,
            SegmentLabelSpace::SameAsReview,
        )
        .unwrap();
        let s = corpus_stats(&corpus).unwrap();
        assert_eq!(s.classes[&2].witness_rate, 0.5);
        assert_eq!(s.classes[&2].witness, 2.0);
        assert!(!s.classes.contains_key(&1));
    }

    #[test]
    fn all_witnesses() {
        let corpus = Corpus::new(
            vec![review(0, &[0, 0]), review(1, &[1])],
            2,
            Split::Test,
            SegmentLabelSpace::SameAsReview,
        )
        .unwrap();
        let s = corpus_stats(&corpus).unwrap();
        assert!(s.classes.values().all(|c| c.witness_rate == 1.0));
        assert!((s.classes[&1].segment_share - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn needs_gold_labels() {
        let r = Review {
            id: "a".into(),
            segments: vec![Segment::new("x").unwrap()],
            label: 0,
            sample_weight: 1.0,
        };
        let corpus = Corpus::new(vec![r], 2, Split::Test, SegmentLabelSpace::SameAsReview).unwrap();
        assert!(corpus_stats(&corpus).is_err());
    }
}

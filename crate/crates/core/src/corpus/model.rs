use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One instance of a bag: a sentence or clause.
#[derive(Clone, Debug, PartialEq)]
pub struct Segment {
    pub tokens: Vec<String>,
    /// Gold label in the corpus' segment label space (0-based). Only test
    /// corpora carry these; training never reads them.
    pub gold_label: Option<usize>,
    pub raw_text: String,
}

impl Segment {
    pub fn new(raw_text: impl Into<String>) -> Result<Self> {
        let raw_text = raw_text.into();
        let tokens = super::tokenize(&raw_text);
        if tokens.is_empty() {
            return Err(Error::EmptySegment);
        }
        Ok(Segment {
            tokens,
            gold_label: None,
            raw_text,
        })
    }

    pub fn with_label(mut self, label: usize) -> Self {
        self.gold_label = Some(label);
        self
    }

    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        if tokens.is_empty() {
            return Err(Error::EmptySegment);
        }
        let raw_text = tokens.join(" ");
        Ok(Segment {
            tokens,
            gold_label: None,
            raw_text,
        })
    }
}

/// A bag of segments with one review-level label (0-based).
#[derive(Clone, Debug, PartialEq)]
pub struct Review {
    pub id: String,
    pub segments: Vec<Segment>,
    pub label: usize,
    pub sample_weight: f64,
}

impl Review {
    pub fn num_segments(&self) -> usize {
        self.segments.len()
    }

    /// All tokens of the review in order, as if it were one long segment.
    pub fn all_tokens(&self) -> Vec<String> {
        self.segments.iter().flat_map(|s| s.tokens.iter().cloned()).collect()
    }

    pub fn text(&self) -> String {
        self.segments
            .iter()
            .map(|s| s.raw_text.as_str())
            .collect::<Vec<_>>()
            .join(" ")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    #[default]
    Train,
    Validation,
    Test,
}

/// How gold segment labels relate to review labels.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SegmentLabelSpace {
    /// Segments use the review classes (e.g. binary Sick / Not Sick).
    #[default]
    SameAsReview,
    /// Segments are negative (0), neutral (1) or positive (2), while reviews
    /// use an ordinal rating scale of C classes.
    Polarity,
}

pub const NEGATIVE: usize = 0;
pub const NEUTRAL: usize = 1;
pub const POSITIVE: usize = 2;

impl SegmentLabelSpace {
    pub fn num_labels(self, num_classes: usize) -> usize {
        match self {
            SegmentLabelSpace::SameAsReview => num_classes,
            SegmentLabelSpace::Polarity => 3,
        }
    }

    /// The segment label a witness of a review with `label` carries.
    ///
    /// For ordinal ratings this is the sign of the class' polarity weight
    /// `-1 + 2c/(C-1)`: the lower half is negative, the upper half positive
    /// and the middle class (odd C only) neutral.
    pub fn witness_label(self, label: usize, num_classes: usize) -> usize {
        match self {
            SegmentLabelSpace::SameAsReview => label,
            SegmentLabelSpace::Polarity => {
                let twice = 2 * label;
                let top = num_classes - 1;
                match twice.cmp(&top) {
                    std::cmp::Ordering::Less => NEGATIVE,
                    std::cmp::Ordering::Equal => NEUTRAL,
                    std::cmp::Ordering::Greater => POSITIVE,
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Corpus {
    pub reviews: Vec<Review>,
    pub num_classes: usize,
    pub split: Split,
    pub segment_labels: SegmentLabelSpace,
}

impl Corpus {
    pub fn new(
        reviews: Vec<Review>,
        num_classes: usize,
        split: Split,
        segment_labels: SegmentLabelSpace,
    ) -> Result<Self> {
        let corpus = Corpus {
            reviews,
            num_classes,
            split,
            segment_labels,
        };
        corpus.validate()?;
        Ok(corpus)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::Config(format!("need at least 2 classes, got {}", self.num_classes)));
        }
        if self.reviews.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let seg_classes = self.num_segment_classes();
        for r in &self.reviews {
            if r.label >= self.num_classes {
                return Err(Error::LabelOutOfRange {
                    label: r.label + 1,
                    classes: self.num_classes,
                });
            }
            if r.segments.is_empty() {
                return Err(Error::invalid(format!("review `{}` has no segments", r.id)));
            }
            if !(r.sample_weight >= 0.0 && r.sample_weight.is_finite()) {
                return Err(Error::invalid(format!("review `{}` has a negative sample weight", r.id)));
            }
            for s in &r.segments {
                if s.tokens.is_empty() {
                    return Err(Error::EmptySegment);
                }
                if let Some(g) = s.gold_label {
                    if g >= seg_classes {
                        return Err(Error::LabelOutOfRange {
                            label: g + 1,
                            classes: seg_classes,
                        });
                    }
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.reviews.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reviews.is_empty()
    }

    pub fn num_segment_classes(&self) -> usize {
        self.segment_labels.num_labels(self.num_classes)
    }

    pub fn num_segments(&self) -> usize {
        self.reviews.iter().map(Review::num_segments).sum()
    }

    pub fn has_gold_segments(&self) -> bool {
        self.reviews
            .iter()
            .flat_map(|r| &r.segments)
            .all(|s| s.gold_label.is_some())
    }

    pub fn labels(&self) -> Vec<usize> {
        self.reviews.iter().map(|r| r.label).collect()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.reviews.iter().map(|r| r.sample_weight).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polarity_witness_labels() {
        let space = SegmentLabelSpace::Polarity;
        let five: Vec<usize> = (0..5).map(|c| space.witness_label(c, 5)).collect();
        assert_eq!(five, vec![NEGATIVE, NEGATIVE, NEUTRAL, POSITIVE, POSITIVE]);
        let two: Vec<usize> = (0..2).map(|c| space.witness_label(c, 2)).collect();
        assert_eq!(two, vec![NEGATIVE, POSITIVE]);
        let ten: Vec<usize> = (0..10).map(|c| space.witness_label(c, 10)).collect();
        assert_eq!(&ten[4..6], &[NEGATIVE, POSITIVE]);
    }

    #[test]
    fn validation_catches_bad_labels() {
        let review = Review {
            id: "r".into(),
            segments: vec![Segment::new("fine").unwrap()],
            label: 3,
            sample_weight: 1.0,
        };
        let err = Corpus::new(vec![review], 3, Split::Train, SegmentLabelSpace::SameAsReview);
        assert!(matches!(err, Err(Error::LabelOutOfRange { .. })));
        assert!(matches!(
            Corpus::new(vec![], 3, Split::Train, SegmentLabelSpace::SameAsReview),
            Err(Error::EmptyCorpus)
        ));
    }
}

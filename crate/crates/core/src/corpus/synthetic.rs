//! Seeded generator of labeled bags with a controllable witness rate.
//!
//! Every class `c` owns a vocabulary of cue tokens (`cue{c}x{j}`). A witness
//! segment of a class-`c` review contains `cues_per_witness` cue tokens of
//! class `c`; all other tokens come from the shared background vocabulary
//! (`bg{j}`). With probability `background_skew` a background token is taken
//! from a per-class pool (`tilt{c}x{j}`) instead, so non-witness segments
//! correlate weakly with the review label while still being neutral. With
//! probability `noise_rate` a background token is replaced by a cue of a
//! uniformly random class.
//!
//! Under [`SegmentLabelSpace::Polarity`] every class has witnesses, gold
//! witness labels are the class polarity and other segments are neutral.
//! Under [`SegmentLabelSpace::SameAsReview`] class 0 is the null class with
//! no witnesses; other segments carry gold label 0.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Corpus, Review, Segment, SegmentLabelSpace, Split, NEUTRAL};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub num_classes: usize,
    pub train_reviews: usize,
    pub validation_reviews: usize,
    pub test_reviews: usize,
    pub min_segments: usize,
    pub max_segments: usize,
    pub witness_rate: f64,
    pub min_tokens: usize,
    pub max_tokens: usize,
    pub cues_per_witness: usize,
    pub class_vocab_size: usize,
    pub background_vocab_size: usize,
    pub skew_vocab_size: usize,
    pub background_skew: f64,
    pub noise_rate: f64,
    pub segment_labels: SegmentLabelSpace,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            num_classes: 2,
            train_reviews: 2000,
            validation_reviews: 250,
            test_reviews: 500,
            min_segments: 6,
            max_segments: 10,
            witness_rate: 0.25,
            min_tokens: 4,
            max_tokens: 9,
            cues_per_witness: 2,
            class_vocab_size: 20,
            background_vocab_size: 200,
            skew_vocab_size: 20,
            background_skew: 0.0,
            noise_rate: 0.0,
            segment_labels: SegmentLabelSpace::Polarity,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.num_classes < 2 {
            return fail(format!("num_classes must be at least 2, got {}", self.num_classes));
        }
        if !(self.witness_rate > 0.0 && self.witness_rate <= 1.0) {
            return fail(format!("witness_rate must be in (0, 1], got {}", self.witness_rate));
        }
        if self.min_segments == 0 || self.min_segments > self.max_segments {
            return fail(format!(
                "segment range {}..={} is empty",
                self.min_segments, self.max_segments
            ));
        }
        if self.min_tokens == 0 || self.min_tokens > self.max_tokens {
            return fail(format!("token range {}..={} is empty", self.min_tokens, self.max_tokens));
        }
        if self.cues_per_witness == 0 || self.cues_per_witness > self.min_tokens {
            return fail(format!(
                "cues_per_witness must be in 1..={}, got {}",
                self.min_tokens, self.cues_per_witness
            ));
        }
        if self.class_vocab_size == 0 || self.background_vocab_size == 0 || self.skew_vocab_size == 0 {
            return fail("vocabulary sizes must be positive".into());
        }
        for (name, v) in [("background_skew", self.background_skew), ("noise_rate", self.noise_rate)] {
            if !(0.0..=1.0).contains(&v) {
                return fail(format!("{name} must be in [0, 1], got {v}"));
            }
        }
        if self.train_reviews + self.validation_reviews + self.test_reviews == 0 {
            return fail("no reviews requested".into());
        }
        if self.witness_rate * (self.min_segments as f64) < 1.0 {
            return fail(format!(
                "witness_rate {} cannot place a witness in a review of {} segments",
                self.witness_rate, self.min_segments
            ));
        }
        Ok(())
    }

    fn has_witnesses(&self, class: usize) -> bool {
        match self.segment_labels {
            SegmentLabelSpace::Polarity => true,
            SegmentLabelSpace::SameAsReview => class > 0,
        }
    }

    fn background_label(&self) -> usize {
        match self.segment_labels {
            SegmentLabelSpace::Polarity => NEUTRAL,
            SegmentLabelSpace::SameAsReview => 0,
        }
    }

    /// Witness count for a review of `m` segments: `wr * m` rounded
    /// stochastically, so the expected rate is exact.
    fn witness_count(&self, m: usize, rng: &mut ChaCha8Rng) -> usize {
        let target = self.witness_rate * m as f64;
        let base = target.floor();
        let extra = rng.gen_bool((target - base).clamp(0.0, 1.0));
        ((base as usize) + extra as usize).clamp(1, m)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticCorpus {
    pub train: Corpus,
    pub validation: Corpus,
    pub test: Corpus,
}

struct Generator<'a> {
    spec: &'a SyntheticSpec,
    rng: ChaCha8Rng,
}

impl Generator<'_> {
    fn background_token(&mut self, class: usize) -> String {
        let s = self.spec;
        if s.noise_rate > 0.0 && self.rng.gen_bool(s.noise_rate) {
            let c = self.rng.gen_range(0..s.num_classes);
            let j = self.rng.gen_range(0..s.class_vocab_size);
            return format!("cue{c}x{j}");
        }
        if s.background_skew > 0.0 && self.rng.gen_bool(s.background_skew) {
            let j = self.rng.gen_range(0..s.skew_vocab_size);
            return format!("tilt{class}x{j}");
        }
        format!("bg{}", self.rng.gen_range(0..s.background_vocab_size))
    }

    fn segment(&mut self, class: usize, witness: bool) -> Result<Segment> {
        let s = self.spec;
        let len = self.rng.gen_range(s.min_tokens..=s.max_tokens);
        let cue_slots = if witness {
            sample(&mut self.rng, len, s.cues_per_witness).into_vec()
        } else {
            Vec::new()
        };
        let tokens = (0..len)
            .map(|i| {
                if cue_slots.contains(&i) {
                    format!("cue{class}x{}", self.rng.gen_range(0..s.class_vocab_size))
                } else {
                    self.background_token(class)
                }
            })
            .collect::<Vec<_>>();
        let mut seg = Segment::from_tokens(tokens)?;
        seg.raw_text.push('.');
        Ok(seg)
    }

    fn review(&mut self, id: String, with_gold: bool) -> Result<Review> {
        let s = self.spec;
        let class = self.rng.gen_range(0..s.num_classes);
        let m = self.rng.gen_range(s.min_segments..=s.max_segments);
        let witnesses = if s.has_witnesses(class) {
            let k = s.witness_count(m, &mut self.rng);
            sample(&mut self.rng, m, k).into_vec()
        } else {
            Vec::new()
        };
        let witness_label = s.segment_labels.witness_label(class, s.num_classes);
        let mut segments = Vec::with_capacity(m);
        for i in 0..m {
            let is_witness = witnesses.contains(&i);
            let mut seg = self.segment(class, is_witness)?;
            if with_gold {
                seg.gold_label = Some(if is_witness { witness_label } else { s.background_label() });
            }
            segments.push(seg);
        }
        Ok(Review {
            id,
            segments,
            label: class,
            sample_weight: 1.0,
        })
    }

    fn split(&mut self, n: usize, split: Split) -> Result<Corpus> {
        let tag = match split {
            Split::Train => "train",
            Split::Validation => "val",
            Split::Test => "test",
        };
        let reviews = (0..n)
            .map(|i| self.review(format!("{tag}-{i}"), split == Split::Test))
            .collect::<Result<Vec<_>>>()?;
        Ok(Corpus {
            reviews,
            num_classes: self.spec.num_classes,
            split,
            segment_labels: self.spec.segment_labels,
        })
    }
}

/// Generates train, validation and test splits; only the test split carries
/// gold segment labels. Empty splits are allowed and yield corpora with no
/// reviews.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticCorpus> {
    spec.validate()?;
    let mut g = Generator {
        spec,
        rng: ChaCha8Rng::seed_from_u64(spec.seed),
    };
    Ok(SyntheticCorpus {
        train: g.split(spec.train_reviews, Split::Train)?,
        validation: g.split(spec.validation_reviews, Split::Validation)?,
        test: g.split(spec.test_reviews, Split::Test)?,
    })
}

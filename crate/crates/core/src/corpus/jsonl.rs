//! JSONL review files.
//!
//! One review per line. Labels are 1-based on disk, 0-based in memory:
//!
//! ```json
//! {"id":"r1","label":2,"sample_weight":0.5,"segments":[{"text":"Great food.","gold_label":3}]}
//! {"id":"r2","label":1,"text":"Cold fries. Rude staff."}
//! ```
//!
//! `sample_weight` defaults to 1. A review carries either `segments` or
//! `text`; plain text is split with [`segment_sentences`].

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{segment_sentences, Corpus, Review, Segment, SegmentLabelSpace, Split};
use crate::error::{Error, Result};
use crate::io::write_atomic;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SegmentRecord {
    text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    gold_label: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ReviewRecord {
    id: String,
    label: usize,
    #[serde(default = "one", skip_serializing_if = "is_one")]
    sample_weight: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    segments: Option<Vec<SegmentRecord>>,
}

fn one() -> f64 {
    1.0
}

fn is_one(v: &f64) -> bool {
    *v == 1.0
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LoadOptions {
    pub num_classes: usize,
    pub split: Split,
    pub segment_labels: SegmentLabelSpace,
}

impl LoadOptions {
    pub fn new(num_classes: usize) -> Self {
        LoadOptions {
            num_classes,
            split: Split::Train,
            segment_labels: SegmentLabelSpace::SameAsReview,
        }
    }
}

fn one_based(value: usize, classes: usize) -> std::result::Result<usize, String> {
    if value == 0 || value > classes {
        Err(format!("label {value} out of range 1..={classes}"))
    } else {
        Ok(value - 1)
    }
}

fn parse_record(line: &str, opts: &LoadOptions) -> std::result::Result<Review, String> {
    let rec: ReviewRecord = serde_json::from_str(line).map_err(|e| e.to_string())?;
    let label = one_based(rec.label, opts.num_classes)?;
    if !(rec.sample_weight >= 0.0 && rec.sample_weight.is_finite()) {
        return Err(format!("sample_weight {} must be a nonnegative number", rec.sample_weight));
    }
    let seg_classes = opts.segment_labels.num_labels(opts.num_classes);
    let segments = match (rec.text, rec.segments) {
        (Some(text), None) => segment_sentences(&text).map_err(|e| e.to_string())?,
        (None, Some(segs)) if !segs.is_empty() => segs
            .into_iter()
            .map(|s| {
                let mut seg = Segment::new(s.text).map_err(|e| e.to_string())?;
                if let Some(g) = s.gold_label {
                    seg.gold_label = Some(one_based(g, seg_classes)?);
                }
                Ok(seg)
            })
            .collect::<std::result::Result<Vec<_>, String>>()?,
        (None, Some(_)) => return Err("empty segment list".into()),
        _ => return Err("exactly one of `text` or `segments` is required".into()),
    };
    Ok(Review {
        id: rec.id,
        segments,
        label,
        sample_weight: rec.sample_weight,
    })
}

pub fn parse_corpus(content: &str, path: &Path, opts: LoadOptions) -> Result<Corpus> {
    let mut reviews = Vec::new();
    for (i, line) in content.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let review = parse_record(line, &opts).map_err(|message| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        })?;
        reviews.push(review);
    }
    if reviews.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    Corpus::new(reviews, opts.num_classes, opts.split, opts.segment_labels)
}

pub fn load_corpus(path: &Path, opts: LoadOptions) -> Result<Corpus> {
    let content = fs::read_to_string(path).map_err(Error::file(path))?;
    parse_corpus(&content, path, opts)
}

pub fn corpus_to_jsonl(corpus: &Corpus) -> Result<String> {
    let mut out = String::new();
    for r in &corpus.reviews {
        let rec = ReviewRecord {
            id: r.id.clone(),
            label: r.label + 1,
            sample_weight: r.sample_weight,
            text: None,
            segments: Some(
                r.segments
                    .iter()
                    .map(|s| SegmentRecord {
                        text: s.raw_text.clone(),
                        gold_label: s.gold_label.map(|g| g + 1),
                    })
                    .collect(),
            ),
        };
        out.push_str(&serde_json::to_string(&rec)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn save_corpus(path: &Path, corpus: &Corpus) -> Result<()> {
    write_atomic(path, corpus_to_jsonl(corpus)?.as_bytes())
}

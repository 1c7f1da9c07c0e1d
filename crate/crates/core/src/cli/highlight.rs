use serde::{Deserialize, Serialize};

use super::pipeline::{Fitted, ReviewScore, TrainedModel};
use crate::corpus::Corpus;
use crate::diffcore::argmax;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Ansi,
    Html,
}

impl std::str::FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "ansi" => Ok(Format::Ansi),
            "html" => Ok(Format::Html),
            _ => Err(format!("unknown format `{s}` (ansi, html)")),
        }
    }
}

/// One rendered sentence.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HighlightedSegment {
    pub text: String,
    /// 1-based predicted label of the segment.
    pub label: usize,
    pub attention: f64,
    pub highlighted: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HighlightedReview {
    pub id: String,
    /// 1-based predicted review label.
    pub label: usize,
    pub segments: Vec<HighlightedSegment>,
}

/// Scores every review with a MIL model and marks segments whose weight
/// exceeds `threshold`.
pub fn highlight(fitted: &Fitted, corpus: &Corpus, threshold: f64) -> Result<Vec<HighlightedReview>> {
    if !matches!(fitted.model, TrainedModel::Mil(_)) {
        return Err(Error::invalid(format!(
            "highlighting needs a MIL checkpoint with segment weights, got `{}`",
            fitted.kind.name()
        )));
    }
    corpus
        .reviews
        .iter()
        .map(|r| {
            let ReviewScore { probs, segments } = fitted.score_review(r)?;
            Ok(HighlightedReview {
                id: r.id.clone(),
                label: argmax(&probs.expect("MIL review output")) + 1,
                segments: r
                    .segments
                    .iter()
                    .zip(segments)
                    .map(|(s, sc)| HighlightedSegment {
                        text: s.raw_text.clone(),
                        label: argmax(&sc.probs) + 1,
                        attention: sc.attention,
                        highlighted: sc.attention > threshold,
                    })
                    .collect(),
            })
        })
        .collect()
}

pub fn render_ansi(reviews: &[HighlightedReview]) -> String {
    let mut out = String::new();
    for r in reviews {
        out.push_str(&format!("\x1b[1m{}\x1b[0m  predicted {}\n", r.id, r.label));
        for s in &r.segments {
            let (on, off) = if s.highlighted { ("\x1b[7m", "\x1b[0m") } else { ("", "") };
            out.push_str(&format!("  [{} {:.3}] {on}{}{off}\n", s.label, s.attention, s.text));
        }
        out.push('\n');
    }
    out
}

pub fn escape_html(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&#39;"),
            _ => out.push(c),
        }
    }
    out
}

const STYLE: &str = "body{font-family:sans-serif;max-width:48em;margin:2em auto;line-height:1.5}\
.review{border-bottom:1px solid #ccc;padding:1em 0}\
.seg{padding:0 .1em}\
.hl{background:#ffe066}\
.meta{color:#666;font-size:.8em}";

/// A standalone page; all review text is escaped and no scripts are used.
pub fn render_html(reviews: &[HighlightedReview]) -> String {
    let mut out = String::from("<!DOCTYPE html>\n<html>\n<head>\n<meta charset=\"utf-8\">\n<title>Highlighted segments</title>\n");
    out.push_str(&format!("<style>{STYLE}</style>\n</head>\n<body>\n"));
    for r in reviews {
        out.push_str(&format!(
            "<div class=\"review\">\n<h2>{} <span class=\"meta\">predicted {}</span></h2>\n<p>\n",
            escape_html(&r.id),
            r.label
        ));
        for s in &r.segments {
            let class = if s.highlighted { "seg hl" } else { "seg" };
            out.push_str(&format!(
                "<span class=\"{class}\" title=\"label {} weight {:.3}\">{}</span>\n",
                s.label,
                s.attention,
                escape_html(&s.text)
            ));
        }
        out.push_str("</p>\n</div>\n");
    }
    out.push_str("</body>\n</html>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(threshold: f64) -> Vec<HighlightedReview> {
        let weights = [0.05, 0.6, 0.0];
        vec![HighlightedReview {
            id: "r<1>".into(),
            label: 2,
            segments: weights
                .iter()
                .map(|&a| HighlightedSegment {
                    text: "Fish & \"chips\" <b>".into(),
                    label: 1,
                    attention: a,
                    highlighted: a > threshold,
                })
                .collect(),
        }]
    }

    #[test]
    fn html_is_escaped() {
        let html = render_html(&sample(0.1));
        assert!(html.contains("Fish &amp; &quot;chips&quot; &lt;b&gt;"));
        assert!(html.contains("r&lt;1&gt;"));
        assert!(!html.contains("<b>") && !html.contains("<script"));
        assert_eq!(html.matches("seg hl").count(), 1);
    }

    #[test]
    fn thresholds() {
        assert!(sample(1.1).iter().flat_map(|r| &r.segments).all(|s| !s.highlighted));
        let all: Vec<bool> = sample(0.0)[0].segments.iter().map(|s| s.highlighted).collect();
        assert_eq!(all, vec![true, true, false]);
        let ansi = render_ansi(&sample(0.1));
        assert_eq!(ansi.matches("\x1b[7m").count(), 1);
    }
}

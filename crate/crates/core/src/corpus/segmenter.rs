//! Rule-based sentence splitting and tokenization.
//!
//! A sentence ends at a run of `.`, `!` or `?` (optionally followed by
//! closing quotes or brackets) when the next non-space character is an
//! uppercase letter, or at the end of the text. A period directly after a
//! known abbreviation or a single-letter initial does not end a sentence.
//! Pieces without any word characters are merged into the previous segment.

use super::Segment;
use crate::error::{Error, Result};

const ABBREVIATIONS: &[&str] = &[
    "mr", "mrs", "ms", "dr", "prof", "sr", "jr", "st", "vs", "etc", "inc", "ltd", "co", "corp", "mt",
    "no", "approx", "dept", "est", "fig", "gen", "gov", "lt", "sgt", "capt", "col", "rev", "ave",
    "blvd", "rd", "jan", "feb", "mar", "apr", "jun", "jul", "aug", "sep", "sept", "oct", "nov",
    "dec", "e.g", "i.e", "a.m", "p.m", "u.s",
];

fn is_closer(c: char) -> bool {
    matches!(c, '"' | '\'' | ')' | ']' | '}' | '’' | '”')
}

fn is_guarded(text: &str, period_at: usize) -> bool {
    let before = &text[..period_at];
    let word: String = before
        .chars()
        .rev()
        .take_while(|c| c.is_alphanumeric() || *c == '.')
        .collect::<Vec<_>>()
        .into_iter()
        .rev()
        .collect();
    let word = word.to_lowercase();
    if word.is_empty() {
        return false;
    }
    if word.chars().count() == 1 && word.chars().all(char::is_alphabetic) {
        return true;
    }
    ABBREVIATIONS.contains(&word.as_str())
}

/// Byte ranges of sentences in `text`.
fn sentence_spans(text: &str) -> Vec<(usize, usize)> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut spans = Vec::new();
    let mut start = 0;
    let mut i = 0;
    while i < chars.len() {
        let (pos, c) = chars[i];
        if !matches!(c, '.' | '!' | '?') {
            i += 1;
            continue;
        }
        let only_period = c == '.';
        let mut j = i;
        while j < chars.len() && matches!(chars[j].1, '.' | '!' | '?') {
            j += 1;
        }
        let run_len = j - i;
        while j < chars.len() && is_closer(chars[j].1) {
            j += 1;
        }
        let end = chars.get(j).map_or(text.len(), |&(p, _)| p);
        let mut k = j;
        while k < chars.len() && chars[k].1.is_whitespace() {
            k += 1;
        }
        let at_end = k == chars.len();
        let boundary = at_end || (k > j && chars[k].1.is_uppercase());
        let guarded = only_period && run_len == 1 && is_guarded(text, pos);
        if boundary && !guarded {
            spans.push((start, end));
            start = chars.get(k).map_or(text.len(), |&(p, _)| p);
        }
        i = j.max(i + 1);
    }
    if start < text.len() && !text[start..].trim().is_empty() {
        spans.push((start, text.len()));
    }
    spans
}

/// Splits `text` into sentence segments.
pub fn segment_sentences(text: &str) -> Result<Vec<Segment>> {
    let mut pieces: Vec<String> = Vec::new();
    for (s, e) in sentence_spans(text) {
        let piece = text[s..e].trim();
        if piece.is_empty() {
            continue;
        }
        match pieces.last_mut() {
            Some(prev) if tokenize(piece).is_empty() => {
                prev.push(' ');
                prev.push_str(piece);
            }
            _ => pieces.push(piece.to_string()),
        }
    }
    // A leading piece without words is folded into the following one.
    if pieces.len() > 1 && tokenize(&pieces[0]).is_empty() {
        let first = pieces.remove(0);
        pieces[0] = format!("{first} {}", pieces[0]);
    }
    if pieces.is_empty() || tokenize(&pieces[0]).is_empty() {
        return Err(Error::EmptySegment);
    }
    pieces.into_iter().map(Segment::new).collect()
}

/// Lowercased alphanumeric runs; an apostrophe between two word characters
/// stays inside the token (`don't`, `joe's`).
pub fn tokenize(text: &str) -> Vec<String> {
    let chars: Vec<char> = text.chars().collect();
    let mut tokens = Vec::new();
    let mut current = String::new();
    for (i, &c) in chars.iter().enumerate() {
        if c.is_alphanumeric() {
            current.extend(c.to_lowercase());
        } else if matches!(c, '\'' | '’')
            && !current.is_empty()
            && chars.get(i + 1).is_some_and(|n| n.is_alphanumeric())
        {
            current.push('\'');
        } else if !current.is_empty() {
            tokens.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    tokens
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn texts(text: &str) -> Vec<String> {
        segment_sentences(text).unwrap().into_iter().map(|s| s.raw_text).collect()
    }

    #[test]
    fn splits_on_sentence_punctuation() {
        assert_eq!(texts("I got sick! Never again."), vec!["I got sick!", "Never again."]);
        assert_eq!(texts("Good. Bad."), vec!["Good.", "Bad."]);
        assert_eq!(texts("Really?! Yes."), vec!["Really?!", "Yes."]);
    }

    #[test]
    fn abbreviations_do_not_split() {
        assert_eq!(texts("Dr. Smith was nice."), vec!["Dr. Smith was nice."]);
        assert_eq!(texts("We met J. Doe there. Fun."), vec!["We met J. Doe there.", "Fun."]);
        assert_eq!(texts("Open 9 a.m. Daily."), vec!["Open 9 a.m. Daily."]);
    }

    #[test]
    fn lowercase_continuation_does_not_split() {
        assert_eq!(texts("It cost 3.50 dollars. ok then."), vec!["It cost 3.50 dollars. ok then."]);
    }

    #[test]
    fn single_word() {
        let segs = segment_sentences("word").unwrap();
        assert_eq!(segs.len(), 1);
        assert_eq!(segs[0].tokens, vec!["word"]);
    }

    #[test]
    fn whitespace_only_is_an_error() {
        assert!(matches!(segment_sentences("   \n"), Err(Error::EmptySegment)));
        assert!(matches!(segment_sentences("?!"), Err(Error::EmptySegment)));
    }

    #[test]
    fn punctuation_only_piece_is_merged() {
        assert_eq!(texts("Great food. ... Loved it."), vec!["Great food. ...", "Loved it."]);
    }

    #[test]
    fn tokenizer_keeps_contractions() {
        assert_eq!(tokenize("Don't GO—it's bad, y'all!"), vec!["don't", "go", "it's", "bad", "y'all"]);
        assert_eq!(tokenize("'quoted' words'"), vec!["quoted", "words"]);
    }

    fn squash(s: &str) -> String {
        s.chars().filter(|c| !c.is_whitespace()).collect()
    }

    proptest! {
        #[test]
        fn never_drops_characters(text in "[A-Za-z .!?']{1,80}") {
            if let Ok(segs) = segment_sentences(&text) {
                let joined: String = segs.iter().map(|s| s.raw_text.as_str()).collect();
                prop_assert_eq!(squash(&joined), squash(&text));
                prop_assert!(segs.iter().all(|s| !s.tokens.is_empty()));
            }
        }
    }
}

use serde::{Deserialize, Serialize};

use crate::corpus::tokenize;

/// Words left alone by [`normalize_word`]: short function words and words
/// whose ending is not an inflection.
const GUARD: &[&str] = &[
    "was", "has", "is", "this", "his", "us", "bus", "gas", "yes", "does", "goes", "less", "unless",
    "always", "perhaps", "thus", "sometimes", "news", "bed", "red", "need", "feed", "seed", "speed", "shed",
    "thing", "nothing", "something", "anything", "everything", "king", "ring", "sing", "bring", "spring",
    "during", "evening", "morning", "ceiling", "pudding", "stuffing", "icing", "seasoning", "dressing",
    "topping", "filling", "frosting", "serving",
];

/// Lowercases and strips one inflectional suffix (`ing`, `ed`, `es`, `s`),
/// keeping stems of at least three letters and undoubling a final doubled
/// consonant (`vomitting` -> `vomit`).
pub fn normalize_word(word: &str) -> String {
    let w = word.to_lowercase();
    if GUARD.contains(&w.as_str()) {
        return w;
    }
    for suffix in ["ing", "ed", "es", "s"] {
        let Some(stem) = w.strip_suffix(suffix) else { continue };
        if stem.chars().count() < 3 || (suffix == "s" && stem.ends_with('s')) {
            continue;
        }
        let b = stem.as_bytes();
        let n = b.len();
        if suffix != "s" && n >= 2 && b[n - 1] == b[n - 2] && !b"aeioulsz".contains(&b[n - 1]) {
            return stem[..n - 1].to_string();
        }
        return stem.to_string();
    }
    w
}

pub fn normalize(text: &str) -> Vec<String> {
    tokenize(text).iter().map(|t| normalize_word(t)).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KeywordRule {
    Kwrd1,
    Kwrd2,
}

impl KeywordRule {
    pub fn phrases(self) -> &'static [&'static str] {
        match self {
            KeywordRule::Kwrd1 => &["food poisoning"],
            KeywordRule::Kwrd2 => &["food poisoning", "sick", "vomit", "diarrhea"],
        }
    }

    /// True when any normalized phrase occurs as a contiguous run of
    /// normalized words in `text`.
    pub fn predict(self, text: &str) -> bool {
        let words = normalize(text);
        self.phrases().iter().any(|p| {
            let phrase = normalize(p);
            words.windows(phrase.len()).any(|w| w == phrase.as_slice())
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rule_examples() {
        for rule in [KeywordRule::Kwrd1, KeywordRule::Kwrd2] {
            assert!(rule.predict("got food poisoning here"));
            assert!(!rule.predict("delicious pasta"));
        }
        assert!(!KeywordRule::Kwrd1.predict("I was so sick after"));
        assert!(KeywordRule::Kwrd2.predict("I was so sick after"));
    }

    #[test]
    fn inflections_and_case() {
        assert!(KeywordRule::Kwrd2.predict("My wife VOMITED all night"));
        assert!(KeywordRule::Kwrd2.predict("kept vomiting"));
        assert!(KeywordRule::Kwrd2.predict("vomitting"));
        assert!(KeywordRule::Kwrd1.predict("Food poisoned, twice."));
        assert!(!KeywordRule::Kwrd2.predict("sickly sweet"));
        assert_eq!(normalize_word("was"), "was");
        assert_eq!(normalize_word("dishes"), "dish");
        assert_eq!(normalize_word("glass"), "glass");
    }
}

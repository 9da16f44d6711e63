//! Verse normalization: diacritic removal, symbol whitelist and hemistich
//! markers.

use serde::{Deserialize, Serialize};

use crate::corpus::VerseRecord;
use crate::error::{Error, Result};

pub const SEPARATOR_MARKER: &str = "[s]";
pub const EMPTY_MARKER: &str = "[e]";

const TATWEEL: char = '\u{0640}';
const ALEF_WASLA: char = '\u{0671}';

/// Harakat, tanween, shadda, sukun (U+064B..=U+0652) and dagger alef.
pub fn is_diacritic(c: char) -> bool {
    matches!(c, '\u{064B}'..='\u{0652}' | '\u{0670}')
}

pub fn is_arabic_letter(c: char) -> bool {
    matches!(c, '\u{0621}'..='\u{064A}') || c == ALEF_WASLA
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreprocessedVerse {
    pub verse_id: u64,
    pub line: String,
}

/// Removes diacritics and tatweel; everything else is kept in order.
pub fn strip_diacritics(text: &str) -> String {
    text.chars()
        .filter(|&c| !is_diacritic(c) && c != TATWEEL)
        .collect()
}

/// Whitelist filter. Arabic letters and literal `[s]`/`[e]` markers
/// survive, every other code point becomes a space;
/// space runs collapse and the result is trimmed.
pub fn strip_symbols(text: &str) -> String {
    whitelist(text, true)
}

fn whitelist(text: &str, keep_markers: bool) -> String {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(c) = rest.chars().next() {
        if keep_markers && (rest.starts_with(SEPARATOR_MARKER) || rest.starts_with(EMPTY_MARKER)) {
            out.push_str(&rest[..3]);
            rest = &rest[3..];
            continue;
        }
        out.push(if is_arabic_letter(c) { c } else { ' ' });
        rest = &rest[c.len_utf8()..];
    }
    collapse_spaces(&out)
}

fn collapse_spaces(text: &str) -> String {
    text.split(' ')
        .filter(|w| !w.is_empty())
        .collect::<Vec<_>>()
        .join(" ")
}

/// `"h1 [s] h2"`, or `"h1 [s] [e]"` when the second hemistich is absent.
pub fn mark_hemistichs(h1: &str, h2: Option<&str>) -> Result<String> {
    let h1 = h1.trim();
    if h1.is_empty() {
        return Err(Error::EmptyHemistich);
    }
    Ok(match h2.map(str::trim).filter(|h| !h.is_empty()) {
        Some(h2) => format!("{h1} {SEPARATOR_MARKER} {h2}"),
        None => format!("{h1} {SEPARATOR_MARKER} {EMPTY_MARKER}"),
    })
}

/// Normalizes one raw hemistich. Marker literals occurring inside raw text
/// are treated as ordinary symbols so the marked line carries exactly one
/// `[s]`.
pub fn normalize_hemistich(text: &str) -> String {
    whitelist(&strip_diacritics(text), false)
}

pub fn preprocess_line(h1: &str, h2: Option<&str>) -> Result<String> {
    let h1 = normalize_hemistich(h1);
    let h2 = h2.map(normalize_hemistich);
    mark_hemistichs(&h1, h2.as_deref())
}

pub fn preprocess_verse(record: &VerseRecord) -> Result<PreprocessedVerse> {
    Ok(PreprocessedVerse {
        verse_id: record.verse_id,
        line: preprocess_line(&record.hemistich1, record.hemistich2.as_deref())?,
    })
}

impl PreprocessedVerse {
    /// Checks the structural invariants of a model-ready line.
    pub fn check_invariants(&self) -> std::result::Result<(), String> {
        check_line(&self.line)
    }
}

pub fn check_line(line: &str) -> std::result::Result<(), String> {
    let words: Vec<&str> = line.split(' ').collect();
    if words.iter().any(|w| w.is_empty()) {
        return Err("empty word (double or edge space)".into());
    }
    let seps = words.iter().filter(|w| **w == SEPARATOR_MARKER).count();
    if seps != 1 {
        return Err(format!("{seps} separator markers"));
    }
    let ends = words.iter().filter(|w| **w == EMPTY_MARKER).count();
    match ends {
        0 => {}
        1 if words.len() >= 2 && words[words.len() - 2..] == [SEPARATOR_MARKER, EMPTY_MARKER] => {}
        _ => return Err("misplaced empty-hemistich marker".into()),
    }
    for w in &words {
        if *w == SEPARATOR_MARKER || *w == EMPTY_MARKER {
            continue;
        }
        if let Some(c) = w.chars().find(|c| !is_arabic_letter(*c) || *c == TATWEEL) {
            return Err(format!("stray code point U+{:04X}", c as u32));
        }
    }
    if words[0] == SEPARATOR_MARKER {
        return Err("first hemistich is empty".into());
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn strips_fatha_marks() {
        assert_eq!(strip_diacritics(""), "");
        assert_eq!(strip_diacritics("كَتَبَ"), "كتب");
        assert_eq!(strip_diacritics("قـــال"), "قال");
        assert_eq!(strip_diacritics("ٱلْحَمْدُ"), "ٱلحمد");
    }

    #[test]
    fn symbols_become_spaces() {
        assert_eq!(strip_symbols("abc123"), "");
        assert_eq!(strip_symbols("قال: نعم؟"), "قال نعم");
        assert_eq!(strip_symbols("@#$ قال  (نعم) ؟"), "قال نعم");
        assert_eq!(strip_symbols("قال [s]نعم!"), "قال [s]نعم");
    }

    #[test]
    fn marks_hemistichs() {
        assert_eq!(
            mark_hemistichs("قفا نبك", Some("بسقط اللوى")).unwrap(),
            "قفا نبك [s] بسقط اللوى"
        );
        assert_eq!(mark_hemistichs("قفا نبك", None).unwrap(), "قفا نبك [s] [e]");
        assert!(matches!(mark_hemistichs("", Some("x")), Err(Error::EmptyHemistich)));
    }

    #[test]
    fn punctuation_only_second_hemistich_is_absent() {
        let line = preprocess_line("قِفا نَبْكِ", Some("!!! ...")).unwrap();
        assert_eq!(line, "قفا نبك [s] [e]");
        assert!(matches!(preprocess_line("123 abc", None), Err(Error::EmptyHemistich)));
    }

    #[test]
    fn embedded_markers_in_raw_text_do_not_duplicate() {
        let line = preprocess_line("قال [s] نعم", Some("[e] لا")).unwrap();
        assert_eq!(line, "قال نعم [s] لا");
        check_line(&line).unwrap();
    }

    fn mixed_text() -> impl Strategy<Value = String> {
        let pool: Vec<char> = "كتبقالنعمءآأؤإئابةتثجحخدذرزسشصضطظعغفقكلمنهوىيٱ َُِّْٰـ:؟!.,()[]se#@$0123456789abcXYZ\t\n"
            .chars()
            .collect();
        proptest::collection::vec(proptest::sample::select(pool), 0..60)
            .prop_map(|cs| cs.into_iter().collect())
    }

    proptest! {
        #[test]
        fn strippers_are_idempotent_and_non_increasing(s in mixed_text()) {
            let d = strip_diacritics(&s);
            prop_assert_eq!(strip_diacritics(&d), d.clone());
            prop_assert!(d.chars().count() <= s.chars().count());
            let w = strip_symbols(&s);
            prop_assert_eq!(strip_symbols(&w), w.clone());
            prop_assert!(w.chars().count() <= s.chars().count());
        }

        #[test]
        fn diacritic_count_matches_shrinkage(s in mixed_text()) {
            let planted = s.chars().filter(|&c| is_diacritic(c) || c == TATWEEL).count();
            prop_assert_eq!(strip_diacritics(&s).chars().count(), s.chars().count() - planted);
        }

        #[test]
        fn preprocessed_lines_hold_invariants(h1 in mixed_text(), h2 in proptest::option::of(mixed_text())) {
            if let Ok(line) = preprocess_line(&h1, h2.as_deref()) {
                prop_assert!(check_line(&line).is_ok(), "{line:?}");
            }
        }
    }
}

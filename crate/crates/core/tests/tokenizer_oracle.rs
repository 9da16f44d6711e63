use proptest::prelude::*;

use poembert::tokenizer::{Vocab, CONTINUATION_PREFIX, RESERVED, UNK};

/// Greedy longest match found by scanning the whole vocabulary at every
/// position instead of probing shrinking substrings.
fn oracle_pieces(word: &str, vocab: &Vocab) -> Vec<u32> {
    let mut out = Vec::new();
    let mut rest = word;
    let mut first = true;
    while !rest.is_empty() {
        let best = vocab
            .tokens()
            .iter()
            .enumerate()
            .skip(RESERVED.len())
            .filter_map(|(id, tok)| {
                let body = if first {
                    (!tok.starts_with(CONTINUATION_PREFIX)).then_some(tok.as_str())
                } else {
                    tok.strip_prefix(CONTINUATION_PREFIX)
                }?;
                (!body.is_empty() && rest.starts_with(body)).then_some((body.len(), id as u32))
            })
            .max_by_key(|&(len, _)| len);
        match best {
            Some((len, id)) => {
                out.push(id);
                rest = &rest[len..];
                first = false;
            }
            None => return vec![UNK],
        }
    }
    out
}

fn small_vocab() -> Vocab {
    let mut tokens: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
    for t in ["a", "b", "c", "ab", "abc", "ca", "##a", "##b", "##c", "##bc", "##ca", "##cab", "ب", "##ب", "بت", "##ت"] {
        tokens.push(t.to_string());
    }
    Vocab::from_tokens(tokens).unwrap()
}

proptest! {
    #[test]
    fn greedy_segmentation_matches_vocabulary_scan(word in "[abcdبت]{1,12}") {
        let vocab = small_vocab();
        let mut got = Vec::new();
        vocab.word_pieces(&word, &mut got);
        prop_assert_eq!(got, oracle_pieces(&word, &vocab));
    }

    #[test]
    fn tokenize_is_per_word_segmentation(words in proptest::collection::vec("[abcd]{1,6}", 0..6)) {
        let vocab = small_vocab();
        let line = words.join(" ");
        let want: Vec<u32> = words.iter().flat_map(|w| oracle_pieces(w, &vocab)).collect();
        prop_assert_eq!(vocab.tokenize(&line), want);
    }
}

#[test]
fn longest_prefix_wins_over_shorter_ones() {
    let vocab = small_vocab();
    let ids = |toks: &[&str]| toks.iter().map(|t| vocab.id(t).unwrap()).collect::<Vec<_>>();
    let mut out = Vec::new();
    vocab.word_pieces("abcab", &mut out);
    assert_eq!(out, ids(&["abc", "##a", "##b"]));
    out.clear();
    vocab.word_pieces("cabc", &mut out);
    assert_eq!(out, ids(&["ca", "##bc"]));
    out.clear();
    vocab.word_pieces("abd", &mut out);
    assert_eq!(out, vec![UNK]);
}

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashMap};

use super::{Vocab, CONTINUATION_PREFIX, NUM_RESERVED, RESERVED};
use crate::error::{Error, Result};

/// Trains a WordPiece vocabulary.
///
/// The seed alphabet holds every observed character in both its
/// word-initial and `##` continuation form. Merges then repeatedly join the
/// adjacent pair with the highest `count(ab) / (count(a) · count(b))` among
/// pairs seen at least `min_frequency` times, until `target_size` tokens
/// exist or no pair qualifies. Ties go to the lexicographically smallest
/// merged token.
pub fn train_wordpiece(lines: &[String], target_size: usize, min_frequency: u64) -> Result<Vocab> {
    let mut word_counts: BTreeMap<&str, u64> = BTreeMap::new();
    for line in lines {
        for w in line.split_whitespace() {
            if !RESERVED.contains(&w) {
                *word_counts.entry(w).or_default() += 1;
            }
        }
    }
    if word_counts.is_empty() {
        return Err(Error::EmptyCorpus);
    }

    let alphabet: BTreeSet<char> = word_counts.keys().flat_map(|w| w.chars()).collect();
    if target_size <= NUM_RESERVED + alphabet.len() {
        return Err(Error::TargetTooSmall {
            target: target_size,
            required: NUM_RESERVED + alphabet.len() + 1,
        });
    }

    let mut tokens: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
    tokens.extend(alphabet.iter().map(|c| c.to_string()));
    tokens.extend(alphabet.iter().map(|c| format!("{CONTINUATION_PREFIX}{c}")));
    let mut index: HashMap<String, u32> = tokens
        .iter()
        .enumerate()
        .map(|(i, t)| (t.clone(), i as u32))
        .collect();

    let mut words: Vec<(Vec<u32>, u64)> = word_counts
        .iter()
        .map(|(w, &n)| {
            let pieces = w
                .chars()
                .enumerate()
                .map(|(i, c)| {
                    let t = if i == 0 {
                        c.to_string()
                    } else {
                        format!("{CONTINUATION_PREFIX}{c}")
                    };
                    index[&t]
                })
                .collect();
            (pieces, n)
        })
        .collect();

    while tokens.len() < target_size {
        let Some((a, b)) = best_pair(&words, &tokens, min_frequency) else {
            break;
        };
        let merged = merged_token(&tokens[a as usize], &tokens[b as usize]);
        let id = match index.get(&merged) {
            Some(&id) => id,
            None => {
                let id = tokens.len() as u32;
                index.insert(merged.clone(), id);
                tokens.push(merged);
                id
            }
        };
        for (pieces, _) in &mut words {
            apply_merge(pieces, a, b, id);
        }
    }

    let mut vocab = Vocab::from_tokens(tokens)?;
    vocab.target_size = target_size;
    Ok(vocab)
}

fn merged_token(a: &str, b: &str) -> String {
    format!("{a}{}", b.strip_prefix(CONTINUATION_PREFIX).unwrap_or(b))
}

fn best_pair(words: &[(Vec<u32>, u64)], tokens: &[String], min_frequency: u64) -> Option<(u32, u32)> {
    let mut unit: HashMap<u32, u64> = HashMap::new();
    let mut pairs: HashMap<(u32, u32), u64> = HashMap::new();
    for (pieces, n) in words {
        for &p in pieces {
            *unit.entry(p).or_default() += n;
        }
        for w in pieces.windows(2) {
            *pairs.entry((w[0], w[1])).or_default() += n;
        }
    }

    let mut best: Option<((u32, u32), u64, u128, String)> = None;
    for (&(a, b), &count) in &pairs {
        if count < min_frequency {
            continue;
        }
        let denom = unit[&a] as u128 * unit[&b] as u128;
        let merged = merged_token(&tokens[a as usize], &tokens[b as usize]);
        let better = match &best {
            None => true,
            // count/denom vs best_count/best_denom, compared exactly.
            Some((_, bc, bd, bm)) => match (count as u128 * bd).cmp(&(*bc as u128 * denom)) {
                Ordering::Greater => true,
                Ordering::Less => false,
                Ordering::Equal => merged < *bm,
            },
        };
        if better {
            best = Some(((a, b), count, denom, merged));
        }
    }
    best.map(|(pair, ..)| pair)
}

fn apply_merge(pieces: &mut Vec<u32>, a: u32, b: u32, id: u32) {
    if pieces.len() < 2 {
        return;
    }
    let mut out = Vec::with_capacity(pieces.len());
    let mut i = 0;
    while i < pieces.len() {
        if i + 1 < pieces.len() && pieces[i] == a && pieces[i + 1] == b {
            out.push(id);
            i += 2;
        } else {
            out.push(pieces[i]);
            i += 1;
        }
    }
    *pieces = out;
}

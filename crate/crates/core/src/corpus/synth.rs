//! Synthetic verse corpora with perfectly learnable planted labels.
//!
//! Verses are built from a fixed lexicon over a twelve-letter alphabet.
//! For the rhyme task the label is the verse's final letter; for every other
//! task class `k` plants a class-specific marker word somewhere before the
//! final word. Letters randomly carry diacritics so that the normalization
//! pipeline has work to do.

use std::collections::HashSet;
use std::sync::OnceLock;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::taxonomy::{rhyme_of_text, LabelTaxonomy, TaskId, POEM_TYPE_SENTIMENT};
use super::{CorpusStore, Gender, VerseRecord};

pub const SYNTH_ALPHABET: [char; 12] = ['ب', 'ت', 'د', 'ر', 'س', 'ع', 'ف', 'ق', 'ك', 'ل', 'م', 'ن'];

const MARKER_INITIAL: char = 'ش';
const WORDS_PER_ENDING: usize = 5;
const LEXICON_SEED: u64 = 0x0A8A_B1C0;
const DIACRITICS: [char; 4] = ['\u{064E}', '\u{064F}', '\u{0650}', '\u{0652}'];
const DIACRITIC_RATE: f64 = 0.25;
const SINGLE_HEMISTICH_RATE: f64 = 0.05;

struct Lexicon {
    /// `by_ending[j]` holds words ending in `SYNTH_ALPHABET[j]`.
    by_ending: Vec<Vec<String>>,
    all: Vec<String>,
    markers: Vec<String>,
}

fn random_word(rng: &mut ChaCha8Rng, first: Option<char>, last: Option<char>, len: usize) -> String {
    (0..len)
        .map(|i| match (i, first, last) {
            (0, Some(c), _) => c,
            (i, _, Some(c)) if i + 1 == len => c,
            _ => *SYNTH_ALPHABET.choose(rng).unwrap(),
        })
        .collect()
}

fn lexicon() -> &'static Lexicon {
    static LEX: OnceLock<Lexicon> = OnceLock::new();
    LEX.get_or_init(|| {
        let mut rng = ChaCha8Rng::seed_from_u64(LEXICON_SEED);
        let mut seen = HashSet::new();
        let mut by_ending = Vec::new();
        for &end in &SYNTH_ALPHABET {
            let mut words = Vec::new();
            while words.len() < WORDS_PER_ENDING {
                let len = rng.gen_range(3..=5);
                let w = random_word(&mut rng, None, Some(end), len);
                if seen.insert(w.clone()) {
                    words.push(w);
                }
            }
            by_ending.push(words);
        }
        let max_classes = TaskId::ALL
            .iter()
            .map(|t| LabelTaxonomy::for_task(*t).len())
            .max()
            .unwrap_or(0);
        let mut markers = Vec::new();
        while markers.len() < max_classes {
            let w = random_word(&mut rng, Some(MARKER_INITIAL), None, 4);
            if seen.insert(w.clone()) {
                markers.push(w);
            }
        }
        let all = by_ending.iter().flatten().cloned().collect();
        Lexicon {
            by_ending,
            all,
            markers,
        }
    })
}

/// Class indices (into the task's taxonomy) the generator can plant.
pub(crate) fn plantable_classes(signal: TaskId) -> Vec<usize> {
    let tax = LabelTaxonomy::for_task(signal);
    match signal {
        TaskId::Rhyme => SYNTH_ALPHABET
            .iter()
            .map(|c| {
                let name = rhyme_of_text(&c.to_string()).expect("alphabet letters are rhymes");
                tax.index_of(name).expect("rhyme label exists")
            })
            .collect(),
        _ => (0..tax.len()).collect(),
    }
}

fn decorate(word: &str, rng: &mut ChaCha8Rng) -> String {
    let mut out = String::with_capacity(word.len() * 2);
    for c in word.chars() {
        out.push(c);
        if rng.gen_bool(DIACRITIC_RATE) {
            out.push(*DIACRITICS.choose(rng).unwrap());
        }
    }
    out
}

/// Generates `n` verses whose `signal` label is a deterministic function of
/// the text. Labels are balanced to within one record.
pub fn generate_synthetic(n: usize, seed: u64, signal: TaskId) -> CorpusStore {
    let lex = lexicon();
    let tax = LabelTaxonomy::for_task(signal);
    let classes = plantable_classes(signal);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut labels: Vec<usize> = (0..n).map(|i| classes[i % classes.len()]).collect();
    labels.shuffle(&mut rng);

    let records = labels
        .into_iter()
        .enumerate()
        .map(|(i, label)| {
            let n1 = rng.gen_range(2..=4);
            let n2 = if rng.gen_bool(SINGLE_HEMISTICH_RATE) {
                0
            } else {
                rng.gen_range(2..=4)
            };
            let mut words: Vec<String> = (0..n1 + n2)
                .map(|_| lex.all.choose(&mut rng).unwrap().clone())
                .collect();
            if signal == TaskId::Rhyme {
                let ending = tax.labels[label].as_str();
                let j = SYNTH_ALPHABET
                    .iter()
                    .position(|c| rhyme_of_text(&c.to_string()) == Some(ending))
                    .expect("plantable rhyme");
                *words.last_mut().unwrap() = lex.by_ending[j].choose(&mut rng).unwrap().clone();
            }
            let mut split_at = n1;
            if signal != TaskId::Rhyme {
                let pos = rng.gen_range(0..words.len());
                words.insert(pos, lex.markers[label].clone());
                if pos < n1 || n2 == 0 {
                    split_at += 1;
                }
            }
            let rhyme = rhyme_of_text(words.last().unwrap()).map(String::from);
            let words: Vec<String> = words.iter().map(|w| decorate(w, &mut rng)).collect();
            let hemistich1 = words[..split_at].join(" ");
            let hemistich2 = (split_at < words.len()).then(|| words[split_at..].join(" "));

            let mut rec = VerseRecord {
                verse_id: i as u64,
                hemistich1,
                hemistich2,
                rhyme,
                ..Default::default()
            };
            let name = tax.labels[label].clone();
            match signal {
                TaskId::Rhyme => {}
                TaskId::Gender => {
                    rec.gender = Some(if name == "Male" { Gender::Male } else { Gender::Female })
                }
                TaskId::MeterClassical | TaskId::MeterAll => rec.meter = Some(name),
                TaskId::SubMeter => {
                    let (m, v) = name.split_once(' ').expect("sub-meter is `meter variant`");
                    rec.meter = Some(m.into());
                    rec.variant = Some(v.into());
                }
                TaskId::SentimentT => {
                    let types: Vec<&str> = POEM_TYPE_SENTIMENT
                        .iter()
                        .filter(|(_, s)| *s == name)
                        .map(|(t, _)| *t)
                        .collect();
                    rec.topic = Some(types.choose(&mut rng).unwrap().to_string());
                }
            }
            rec
        })
        .collect();
    CorpusStore::new(records, format!("synthetic(seed={seed},n={n},signal={signal})"))
}

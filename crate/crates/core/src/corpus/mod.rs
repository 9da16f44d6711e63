//! Verse datasets: loading, cleaning, labelling, splitting and synthesis.

mod synth;
pub mod taxonomy;

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::preprocess::normalize_hemistich;

pub use synth::{generate_synthetic, SYNTH_ALPHABET};
pub use taxonomy::{group_sentiment, taxonomies_json, LabelTaxonomy, SentimentGrouping, TaskId};

pub const COLUMNS: [&str; 10] = [
    "verse_id",
    "hemistich1",
    "hemistich2",
    "meter",
    "variant",
    "rhyme",
    "poet_name",
    "gender",
    "era",
    "topic",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Gender {
    Male,
    Female,
}

impl Gender {
    pub fn as_str(self) -> &'static str {
        match self {
            Gender::Male => "Male",
            Gender::Female => "Female",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "male" => Some(Gender::Male),
            "female" => Some(Gender::Female),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct VerseRecord {
    pub verse_id: u64,
    pub hemistich1: String,
    pub hemistich2: Option<String>,
    pub meter: Option<String>,
    pub variant: Option<String>,
    pub rhyme: Option<String>,
    pub poet_name: Option<String>,
    pub gender: Option<Gender>,
    pub era: Option<String>,
    pub topic: Option<String>,
}

impl VerseRecord {
    fn field(&self, column: &str) -> Option<String> {
        match column {
            "verse_id" => Some(self.verse_id.to_string()),
            "hemistich1" => Some(self.hemistich1.clone()),
            "hemistich2" => self.hemistich2.clone(),
            "meter" => self.meter.clone(),
            "variant" => self.variant.clone(),
            "rhyme" => self.rhyme.clone(),
            "poet_name" => self.poet_name.clone(),
            "gender" => self.gender.map(|g| g.as_str().to_string()),
            "era" => self.era.clone(),
            "topic" => self.topic.clone(),
            _ => None,
        }
    }

    /// Normalized `(h1, h2)` used as the duplicate key.
    pub fn normalized_key(&self) -> (String, String) {
        (
            normalize_hemistich(&self.hemistich1),
            self.hemistich2.as_deref().map(normalize_hemistich).unwrap_or_default(),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusStore {
    pub records: Vec<VerseRecord>,
    pub provenance: String,
}

impl CorpusStore {
    pub fn new(records: Vec<VerseRecord>, provenance: impl Into<String>) -> Self {
        Self {
            records,
            provenance: provenance.into(),
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Records that carry a label for `taxonomy`, paired with the class index.
    pub fn labeled<'a>(&'a self, taxonomy: &'a LabelTaxonomy) -> impl Iterator<Item = (&'a VerseRecord, usize)> + 'a {
        self.records
            .iter()
            .filter_map(move |r| taxonomy.record_label(r).map(|l| (r, l)))
    }

    /// Keeps only the records that carry a label for `taxonomy`.
    pub fn filter_labeled(&self, taxonomy: &LabelTaxonomy) -> CorpusStore {
        CorpusStore::new(
            self.labeled(taxonomy).map(|(r, _)| r.clone()).collect(),
            format!("{}|task({})", self.provenance, taxonomy.task_id),
        )
    }
}

fn parse_record(
    header: &[&str],
    fields: &[&str],
    line: usize,
    next_id: u64,
) -> Result<VerseRecord> {
    let mut rec = VerseRecord {
        verse_id: next_id,
        ..Default::default()
    };
    let unknown = |field: &str, value: &str| Error::UnknownLabel {
        field: field.to_string(),
        value: value.to_string(),
        line,
    };
    for (col, raw) in header.iter().zip(fields) {
        if raw.is_empty() {
            continue;
        }
        let value = raw.to_string();
        match *col {
            "verse_id" => {
                rec.verse_id = raw.trim().parse().map_err(|_| unknown("verse_id", raw))?;
            }
            "hemistich1" => rec.hemistich1 = value,
            "hemistich2" => rec.hemistich2 = Some(value),
            "meter" => {
                rec.meter = Some(taxonomy::canonical_meter(raw).ok_or_else(|| unknown("meter", raw))?.into())
            }
            "variant" => {
                rec.variant =
                    Some(taxonomy::canonical_variant(raw).ok_or_else(|| unknown("variant", raw))?.into())
            }
            "rhyme" => {
                rec.rhyme = Some(taxonomy::canonical_rhyme(raw).ok_or_else(|| unknown("rhyme", raw))?.into())
            }
            "poet_name" => rec.poet_name = Some(value),
            "gender" => rec.gender = Some(Gender::parse(raw).ok_or_else(|| unknown("gender", raw))?),
            "era" => rec.era = Some(value),
            "topic" => rec.topic = Some(value),
            _ => unreachable!("header validated"),
        }
    }
    Ok(rec)
}

/// Parses delimiter-separated corpus text. Verse ids come from the
/// `verse_id` column when present and non-empty, otherwise they count up
/// from 0 in file order.
pub fn parse_corpus(text: &str, delimiter: char, provenance: &str) -> Result<CorpusStore> {
    let mut lines = text.lines();
    let header_line = lines.next().unwrap_or("");
    let header: Vec<&str> = header_line.split(delimiter).map(str::trim).collect();
    for col in &header {
        if !COLUMNS.contains(col) {
            return Err(Error::UnknownLabel {
                field: "column".into(),
                value: col.to_string(),
                line: 1,
            });
        }
    }
    if !header.contains(&"hemistich1") {
        return Err(Error::MissingColumn("hemistich1".into()));
    }

    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for (i, raw) in lines.enumerate() {
        let line = i + 2;
        let raw = raw.strip_suffix('\r').unwrap_or(raw);
        if raw.is_empty() {
            continue;
        }
        let fields: Vec<&str> = raw.split(delimiter).collect();
        if fields.len() != header.len() {
            return Err(Error::MalformedRow {
                line,
                expected: header.len(),
                found: fields.len(),
            });
        }
        let rec = parse_record(&header, &fields, line, records.len() as u64)?;
        if !seen.insert(rec.verse_id) {
            return Err(Error::DuplicateVerseId {
                id: rec.verse_id,
                line,
            });
        }
        records.push(rec);
    }
    Ok(CorpusStore::new(records, provenance))
}

pub fn load_corpus(path: &Path, delimiter: char) -> Result<CorpusStore> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_corpus(&text, delimiter, &path.display().to_string())
}

/// Serializes with the full ten-column header; absent fields are empty.
pub fn format_corpus(corpus: &CorpusStore, delimiter: char) -> Result<String> {
    let mut out = COLUMNS.join(&delimiter.to_string());
    out.push('\n');
    for rec in &corpus.records {
        for (i, col) in COLUMNS.iter().enumerate() {
            if i > 0 {
                out.push(delimiter);
            }
            let value = rec.field(col).unwrap_or_default();
            if value.contains(['\n', '\r', delimiter]) {
                return Err(Error::UnwritableField {
                    field: col,
                    verse_id: rec.verse_id,
                });
            }
            let _ = write!(out, "{value}");
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn write_corpus(corpus: &CorpusStore, path: &Path, delimiter: char) -> Result<()> {
    let text = format_corpus(corpus, delimiter)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Keeps the first record of every normalized verse text, in order.
pub fn deduplicate(corpus: &CorpusStore) -> CorpusStore {
    let mut seen = HashSet::new();
    let records = corpus
        .records
        .iter()
        .filter(|r| seen.insert(r.normalized_key()))
        .cloned()
        .collect();
    CorpusStore::new(records, format!("{}|dedup", corpus.provenance))
}

/// Seeded train/validation split. Each stratum (the whole corpus, or one
/// class of `stratify_by`) is shuffled and its first `floor(n·ratio)`
/// records go to train. Both halves keep corpus order.
pub fn split(
    corpus: &CorpusStore,
    ratio: f64,
    seed: u64,
    stratify_by: Option<&LabelTaxonomy>,
) -> Result<(CorpusStore, CorpusStore)> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::InvalidConfig(format!("split ratio {ratio} not in (0, 1)")));
    }
    if corpus.is_empty() {
        return Err(Error::EmptyStratum("all".into()));
    }
    let mut strata: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    match stratify_by {
        None => {
            strata.insert(0, (0..corpus.len()).collect());
        }
        Some(tax) => {
            for (i, rec) in corpus.records.iter().enumerate() {
                let label = tax.record_label(rec).ok_or_else(|| Error::MissingLabel {
                    field: tax.task_id.to_string(),
                    verse_id: rec.verse_id,
                })?;
                strata.entry(label).or_default().push(i);
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut in_train = vec![false; corpus.len()];
    for members in strata.values_mut() {
        members.shuffle(&mut rng);
        let n_train = (members.len() as f64 * ratio).floor() as usize;
        for &i in &members[..n_train] {
            in_train[i] = true;
        }
    }
    let (train, val): (Vec<_>, Vec<_>) = corpus
        .records
        .iter()
        .zip(&in_train)
        .partition(|(_, t)| **t);
    let take = |v: Vec<(&VerseRecord, &bool)>| v.into_iter().map(|(r, _)| r.clone()).collect();
    let tag = format!("split(ratio={ratio},seed={seed})");
    Ok((
        CorpusStore::new(take(train), format!("{}|{tag}:train", corpus.provenance)),
        CorpusStore::new(take(val), format!("{}|{tag}:val", corpus.provenance)),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const HEADER: &str = "verse_id\themistich1\themistich2\tmeter\tvariant\trhyme\tpoet_name\tgender\tera\ttopic";

    fn rec(id: u64, h1: &str) -> VerseRecord {
        VerseRecord {
            verse_id: id,
            hemistich1: h1.into(),
            ..Default::default()
        }
    }

    #[test]
    fn loads_rows_with_sequential_ids() {
        let text = "hemistich1\tmeter\nقفا نبك\tTaweel\nبسقط اللوى\t\n";
        let c = parse_corpus(text, '\t', "mem").unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c.records[0].verse_id, 0);
        assert_eq!(c.records[1].verse_id, 1);
        assert_eq!(c.records[0].meter.as_deref(), Some("Taweel"));
        assert_eq!(c.records[1].meter, None);
    }

    #[test]
    fn rejects_bad_rows() {
        let err = parse_corpus("hemistich1\tmeter\nا\tTaweel\nب\tNotAMeter\n", '\t', "m").unwrap_err();
        assert!(matches!(err, Error::UnknownLabel { ref field, line: 3, .. } if field == "meter"));
        let err = parse_corpus("meter\nTaweel\n", '\t', "m").unwrap_err();
        assert!(matches!(err, Error::MissingColumn(c) if c == "hemistich1"));
        let err = parse_corpus("hemistich1\tmeter\nا\n", '\t', "m").unwrap_err();
        assert!(matches!(err, Error::MalformedRow { line: 2, .. }));
        let err = parse_corpus("hemistich1\tgender\nا\tX\n", '\t', "m").unwrap_err();
        assert!(matches!(err, Error::UnknownLabel { .. }));
        let err = parse_corpus("verse_id\themistich1\n3\tا\n3\tب\n", '\t', "m").unwrap_err();
        assert!(matches!(err, Error::DuplicateVerseId { id: 3, line: 3 }));
    }

    #[test]
    fn full_header_round_trip() {
        let text = format!(
            "{HEADER}\n7\tقفا نبك\tبسقط اللوى\tTaweel\tComplete\tLam\tامرؤ القيس\tMale\tPre-Islamic\tLonging Poems\n9\tحرف\t\t\t\t\t\t\t\t\n"
        );
        let c = parse_corpus(&text, '\t', "m").unwrap();
        assert_eq!(c.records[0].verse_id, 7);
        assert_eq!(c.records[0].gender, Some(Gender::Male));
        assert_eq!(c.records[1].hemistich2, None);
        assert_eq!(format_corpus(&c, '\t').unwrap(), text);
    }

    #[test]
    fn deduplicates_normalized_text() {
        let c = CorpusStore::new(
            vec![rec(0, "كتب"), rec(1, "كَتَبَ"), rec(2, "قال"), rec(3, "كتب")],
            "m",
        );
        let d = deduplicate(&c);
        let ids: Vec<u64> = d.records.iter().map(|r| r.verse_id).collect();
        assert_eq!(ids, vec![0, 2]);
        assert_eq!(deduplicate(&d).records, d.records);
    }

    #[test]
    fn split_sizes_follow_floor_rule() {
        let c = CorpusStore::new((0..10).map(|i| rec(i, "ا")).collect(), "m");
        let (t, v) = split(&c, 0.8, 3, None).unwrap();
        assert_eq!((t.len(), v.len()), (8, 2));
        let (t2, v2) = split(&c, 0.8, 3, None).unwrap();
        assert_eq!(t.records, t2.records);
        assert_eq!(v.records, v2.records);
        assert!(split(&c, 1.0, 3, None).is_err());
        assert!(matches!(split(&CorpusStore::new(vec![], "e"), 0.5, 0, None), Err(Error::EmptyStratum(_))));
    }

    #[test]
    fn stratified_split_per_label() {
        let records = (0..100)
            .map(|i| VerseRecord {
                gender: Some(if i % 2 == 0 { Gender::Male } else { Gender::Female }),
                ..rec(i, "ا")
            })
            .collect();
        let c = CorpusStore::new(records, "m");
        let tax = LabelTaxonomy::for_task(TaskId::Gender);
        let (t, v) = split(&c, 0.8, 11, Some(&tax)).unwrap();
        let males = |s: &CorpusStore| s.records.iter().filter(|r| r.gender == Some(Gender::Male)).count();
        assert_eq!((males(&t), t.len() - males(&t)), (40, 40));
        assert_eq!((males(&v), v.len() - males(&v)), (10, 10));

        let mut missing = c.clone();
        missing.records[5].gender = None;
        assert!(matches!(split(&missing, 0.8, 1, Some(&tax)), Err(Error::MissingLabel { verse_id: 5, .. })));
    }

    proptest! {
        #[test]
        fn split_partitions(n in 1usize..80, ratio in 0.05f64..0.95, seed in any::<u64>()) {
            let c = CorpusStore::new((0..n as u64).map(|i| rec(i, "ا")).collect(), "m");
            let (t, v) = split(&c, ratio, seed, None).unwrap();
            prop_assert_eq!(t.len(), (n as f64 * ratio).floor() as usize);
            let mut ids: Vec<u64> = t.records.iter().chain(&v.records).map(|r| r.verse_id).collect();
            ids.sort();
            prop_assert_eq!(ids, (0..n as u64).collect::<Vec<_>>());
        }
    }
}

//! Fixed label sets for the six classification tasks.
//!
//! Label order is part of the on-disk contract: checkpoint heads and
//! evaluation reports index classes by position in these lists.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::VerseRecord;
use crate::error::{Error, Result};

pub const CLASSICAL_METERS: [&str; 16] = [
    "Taweel", "Kamel", "Baseet", "Khafif", "Wafer", "Rajaz", "Ramel", "Mutaqarib", "Saree",
    "Munsarih", "Mujtath", "Hazaj", "Madeed", "Mutadarak", "Muqtadab", "Mudari",
];

pub const NON_CLASSICAL_METERS: [&str; 12] = [
    "Muashah", "Free form", "Colloquial", "Doubeet", "Mawalia", "Masehube", "Selselah", "Zajal",
    "Kankan", "Hajini", "Sakhri", "Luaihani",
];

pub const VARIANTS: [&str; 7] = [
    "Complete", "Majzuu", "Mashture", "Manhuk", "Maktuu", "Ahuth", "Mukhala",
];

pub const SUB_METERS: [&str; 25] = [
    "Baseet Complete",
    "Baseet Mukhala",
    "Hazaj Majzuu",
    "Kamel Ahuth",
    "Kamel Complete",
    "Kamel Majzuu",
    "Khafif Complete",
    "Khafif Majzuu",
    "Madeed Majzuu",
    "Mudari Majzuu",
    "Mujtath Majzuu",
    "Munsarih Complete",
    "Muqtadab Majzuu",
    "Mutadarak Complete",
    "Mutadarak Mashture",
    "Mutaqarib Complete",
    "Rajaz Complete",
    "Rajaz Majzuu",
    "Rajaz Mashture",
    "Ramel Complete",
    "Ramel Majzuu",
    "Saree Complete",
    "Taweel Complete",
    "Wafer Complete",
    "Wafer Majzuu",
];

/// Rhyme labels and the verse ending each one denotes.
pub const RHYMES: [(&str, &str); 31] = [
    ("Alif", "ا"),
    ("Baa", "ب"),
    ("Taa", "ت"),
    ("Thaa", "ث"),
    ("Jeem", "ج"),
    ("Hah", "ح"),
    ("Khaa", "خ"),
    ("Dal", "د"),
    ("Thal", "ذ"),
    ("Raa", "ر"),
    ("Zay", "ز"),
    ("Seen", "س"),
    ("Sheen", "ش"),
    ("Sad", "ص"),
    ("Dad", "ض"),
    ("Tah", "ط"),
    ("Zah", "ظ"),
    ("Ain", "ع"),
    ("Ghain", "غ"),
    ("Faa", "ف"),
    ("Qaf", "ق"),
    ("Kaf", "ك"),
    ("Lam", "ل"),
    ("Meem", "م"),
    ("Noon", "ن"),
    ("Heh", "ه"),
    ("Waw", "و"),
    ("Yaa", "ي"),
    ("Laa", "لا"),
    ("Taa Marbutah", "ة"),
    ("Waw Hamza", "ؤ"),
];

pub const SENTIMENTS: [&str; 4] = ["Anger", "Love", "Spirituality", "Sadness"];

pub const GENDERS: [&str; 2] = ["Male", "Female"];

/// Poem types and the sentiment each is grouped under.
pub const POEM_TYPE_SENTIMENT: [(&str, &str); 9] = [
    ("Slander Poems", "Anger"),
    ("Romantic Poems", "Love"),
    ("Parting Poems", "Love"),
    ("Longing Poems", "Love"),
    ("Spinning Poems", "Love"),
    ("Religious Poems", "Spirituality"),
    ("Invocation Poems", "Spirituality"),
    ("Mercy Poems", "Spirituality"),
    ("Elegy Poems", "Sadness"),
];

pub fn all_meters() -> impl Iterator<Item = &'static str> {
    CLASSICAL_METERS.iter().chain(NON_CLASSICAL_METERS.iter()).copied()
}

/// Case-insensitive lookup returning the canonical spelling.
pub(crate) fn canonical<'a>(names: impl IntoIterator<Item = &'a str>, value: &str) -> Option<&'a str> {
    names.into_iter().find(|n| n.eq_ignore_ascii_case(value.trim()))
}

pub fn canonical_meter(value: &str) -> Option<&'static str> {
    canonical(all_meters(), value)
}

pub fn canonical_variant(value: &str) -> Option<&'static str> {
    canonical(VARIANTS, value)
}

/// Accepts a rhyme label name or the letter(s) it denotes.
pub fn canonical_rhyme(value: &str) -> Option<&'static str> {
    let v = value.trim();
    RHYMES
        .iter()
        .find(|(name, ending)| name.eq_ignore_ascii_case(v) || *ending == v)
        .map(|(name, _)| *name)
}

/// Rhyme label of a normalized text: its trailing letter, with `لا` read
/// as Laa.
pub fn rhyme_of_text(text: &str) -> Option<&'static str> {
    let letters: String = text
        .chars()
        .filter(|&c| crate::preprocess::is_arabic_letter(c) && c != '\u{0640}')
        .collect();
    if letters.ends_with("لا") {
        return Some("Laa");
    }
    let last = letters.chars().last()?;
    let mut buf = [0u8; 4];
    let last = &*last.encode_utf8(&mut buf);
    RHYMES.iter().find(|(_, e)| *e == last).map(|(n, _)| *n)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TaskId {
    SentimentT,
    MeterClassical,
    MeterAll,
    SubMeter,
    Gender,
    Rhyme,
}

impl TaskId {
    pub const ALL: [TaskId; 6] = [
        TaskId::SentimentT,
        TaskId::MeterClassical,
        TaskId::MeterAll,
        TaskId::SubMeter,
        TaskId::Gender,
        TaskId::Rhyme,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TaskId::SentimentT => "SentimentT",
            TaskId::MeterClassical => "MeterClassical",
            TaskId::MeterAll => "MeterAll",
            TaskId::SubMeter => "SubMeter",
            TaskId::Gender => "Gender",
            TaskId::Rhyme => "Rhyme",
        }
    }
}

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TaskId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s
            .chars()
            .filter(|c| !matches!(c, '-' | '_' | ' '))
            .collect::<String>()
            .to_ascii_lowercase();
        Ok(match key.as_str() {
            "sentimentt" | "sentiment" => TaskId::SentimentT,
            "meterclassical" | "classical" => TaskId::MeterClassical,
            "meterall" | "meter" | "meters" => TaskId::MeterAll,
            "submeter" => TaskId::SubMeter,
            "gender" => TaskId::Gender,
            "rhyme" => TaskId::Rhyme,
            _ => return Err(Error::InvalidConfig(format!("unknown task `{s}`"))),
        })
    }
}

/// Poem type → sentiment grouping. Defaults to the built-in table; a JSON
/// object `{"<poem type>": "<sentiment>"}` may replace it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SentimentGrouping {
    map: BTreeMap<String, &'static str>,
}

impl Default for SentimentGrouping {
    fn default() -> Self {
        Self {
            map: POEM_TYPE_SENTIMENT
                .iter()
                .map(|(t, s)| (t.to_string(), *s))
                .collect(),
        }
    }
}

impl SentimentGrouping {
    pub fn from_json(text: &str) -> Result<Self> {
        let raw: BTreeMap<String, String> = serde_json::from_str(text)?;
        let mut map = BTreeMap::new();
        for (topic, sentiment) in raw {
            let s = canonical(SENTIMENTS, &sentiment).ok_or_else(|| Error::UnknownLabel {
                field: "sentiment".into(),
                value: sentiment.clone(),
                line: 0,
            })?;
            map.insert(topic, s);
        }
        Ok(Self { map })
    }

    /// Accepts the poem type with or without its trailing "Poems".
    pub fn group(&self, topic: &str) -> Result<&'static str> {
        let t = topic.trim();
        self.map
            .get(t)
            .or_else(|| self.map.get(&format!("{t} Poems")))
            .copied()
            .ok_or_else(|| Error::UnmappedTopic(topic.to_string()))
    }
}

/// Default-table grouping of a poem type into its sentiment.
pub fn group_sentiment(topic: &str) -> Result<&'static str> {
    SentimentGrouping::default().group(topic)
}

#[derive(Debug, Clone)]
pub struct LabelTaxonomy {
    pub task_id: TaskId,
    pub labels: Vec<String>,
    label_index: HashMap<String, usize>,
    sentiment: SentimentGrouping,
}

impl LabelTaxonomy {
    pub fn for_task(task_id: TaskId) -> Self {
        let labels: Vec<&str> = match task_id {
            TaskId::SentimentT => SENTIMENTS.to_vec(),
            TaskId::MeterClassical => CLASSICAL_METERS.to_vec(),
            TaskId::MeterAll => all_meters().collect(),
            TaskId::SubMeter => SUB_METERS.to_vec(),
            TaskId::Gender => GENDERS.to_vec(),
            TaskId::Rhyme => RHYMES.iter().map(|(n, _)| *n).collect(),
        };
        let labels: Vec<String> = labels.into_iter().map(String::from).collect();
        let label_index = labels.iter().enumerate().map(|(i, l)| (l.clone(), i)).collect();
        Self {
            task_id,
            labels,
            label_index,
            sentiment: SentimentGrouping::default(),
        }
    }

    pub fn with_sentiment_grouping(mut self, grouping: SentimentGrouping) -> Self {
        self.sentiment = grouping;
        self
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.label_index.get(name).copied()
    }

    pub fn name_of(&self, index: usize) -> Option<&str> {
        self.labels.get(index).map(String::as_str)
    }

    /// Class index of a record for this task, or `None` when the record
    /// does not take part in it (label missing, non-classical meter in the
    /// classical task, sub-meter outside the target list, unmapped topic).
    pub fn record_label(&self, record: &VerseRecord) -> Option<usize> {
        match self.task_id {
            TaskId::SentimentT => {
                let topic = record.topic.as_deref()?;
                self.index_of(self.sentiment.group(topic).ok()?)
            }
            TaskId::MeterClassical | TaskId::MeterAll => self.index_of(record.meter.as_deref()?),
            TaskId::SubMeter => {
                let name = format!("{} {}", record.meter.as_deref()?, record.variant.as_deref()?);
                self.index_of(&name)
            }
            TaskId::Gender => self.index_of(record.gender?.as_str()),
            TaskId::Rhyme => self.index_of(record.rhyme.as_deref()?),
        }
    }
}

/// JSON document mapping task id to its ordered label list.
pub fn taxonomies_json() -> serde_json::Value {
    let map: serde_json::Map<String, serde_json::Value> = TaskId::ALL
        .iter()
        .map(|t| {
            (
                t.as_str().to_string(),
                serde_json::json!(LabelTaxonomy::for_task(*t).labels),
            )
        })
        .collect();
    serde_json::Value::Object(map)
}

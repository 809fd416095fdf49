//! Aspect taxonomy and per-comment label sets.
//!
//! The label string grammar follows the published smartphone-feedback
//! corpus: `{ASPECT#Polarity}` items joined by `;`, with `{OTHERS}` bare.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Aspect {
    Screen,
    Camera,
    Features,
    Battery,
    Performance,
    Storage,
    Design,
    Price,
    General,
    SerAcc,
    Others,
}

impl Aspect {
    pub const ALL: [Aspect; 11] = [
        Aspect::Screen,
        Aspect::Camera,
        Aspect::Features,
        Aspect::Battery,
        Aspect::Performance,
        Aspect::Storage,
        Aspect::Design,
        Aspect::Price,
        Aspect::General,
        Aspect::SerAcc,
        Aspect::Others,
    ];

    /// The ten aspects that carry a sentiment polarity.
    pub const CONTENT: [Aspect; 10] = [
        Aspect::Screen,
        Aspect::Camera,
        Aspect::Features,
        Aspect::Battery,
        Aspect::Performance,
        Aspect::Storage,
        Aspect::Design,
        Aspect::Price,
        Aspect::General,
        Aspect::SerAcc,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Aspect> {
        Self::ALL.get(i).copied()
    }

    pub fn is_content(self) -> bool {
        self != Aspect::Others
    }

    pub fn name(self) -> &'static str {
        match self {
            Aspect::Screen => "SCREEN",
            Aspect::Camera => "CAMERA",
            Aspect::Features => "FEATURES",
            Aspect::Battery => "BATTERY",
            Aspect::Performance => "PERFORMANCE",
            Aspect::Storage => "STORAGE",
            Aspect::Design => "DESIGN",
            Aspect::Price => "PRICE",
            Aspect::General => "GENERAL",
            Aspect::SerAcc => "SER&ACC",
            Aspect::Others => "OTHERS",
        }
    }
}

impl fmt::Display for Aspect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Aspect {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let upper = s.trim().to_ascii_uppercase();
        let aspect = match upper.as_str() {
            "SCREEN" => Aspect::Screen,
            "CAMERA" => Aspect::Camera,
            "FEATURES" => Aspect::Features,
            "BATTERY" => Aspect::Battery,
            // the corpus guidelines table misspells this one
            "PERFORMANCE" | "PERFOMANCE" => Aspect::Performance,
            "STORAGE" => Aspect::Storage,
            "DESIGN" => Aspect::Design,
            "PRICE" => Aspect::Price,
            "GENERAL" => Aspect::General,
            "SER&ACC" | "SER_ACC" => Aspect::SerAcc,
            "OTHERS" => Aspect::Others,
            _ => return Err(Error::Label(format!("unknown aspect `{s}`"))),
        };
        Ok(aspect)
    }
}

impl Serialize for Aspect {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for Aspect {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(D::Error::custom)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Polarity {
    Pos,
    Neu,
    Neg,
}

impl Polarity {
    pub const ALL: [Polarity; 3] = [Polarity::Pos, Polarity::Neu, Polarity::Neg];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn long_name(self) -> &'static str {
        match self {
            Polarity::Pos => "Positive",
            Polarity::Neu => "Neutral",
            Polarity::Neg => "Negative",
        }
    }

    pub fn short_name(self) -> &'static str {
        match self {
            Polarity::Pos => "Pos",
            Polarity::Neu => "Neu",
            Polarity::Neg => "Neg",
        }
    }
}

impl fmt::Display for Polarity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

impl FromStr for Polarity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "positive" | "pos" => Ok(Polarity::Pos),
            "neutral" | "neu" => Ok(Polarity::Neu),
            "negative" | "neg" => Ok(Polarity::Neg),
            _ => Err(Error::Label(format!("unknown polarity `{s}`"))),
        }
    }
}

/// The state of one aspect within a [`LabelSet`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AspectState {
    Absent,
    Polar(Polarity),
    /// Only used for OTHERS, which never carries a polarity.
    Present,
}

/// Per-comment assignment of aspects to polarities.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct LabelSet {
    content: [Option<Polarity>; 10],
    others: bool,
}

impl LabelSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, aspect: Aspect) -> AspectState {
        if aspect == Aspect::Others {
            if self.others {
                AspectState::Present
            } else {
                AspectState::Absent
            }
        } else {
            match self.content[aspect.index()] {
                Some(p) => AspectState::Polar(p),
                None => AspectState::Absent,
            }
        }
    }

    pub fn polarity(&self, aspect: Aspect) -> Option<Polarity> {
        if aspect.is_content() {
            self.content[aspect.index()]
        } else {
            None
        }
    }

    pub fn contains(&self, aspect: Aspect) -> bool {
        self.get(aspect) != AspectState::Absent
    }

    /// Assigns a polarity to a content aspect. OTHERS is rejected.
    pub fn set(&mut self, aspect: Aspect, polarity: Polarity) -> Result<()> {
        if !aspect.is_content() {
            return Err(Error::Label("OTHERS cannot carry a polarity".into()));
        }
        self.content[aspect.index()] = Some(polarity);
        Ok(())
    }

    pub fn with(mut self, aspect: Aspect, polarity: Polarity) -> Self {
        self.set(aspect, polarity).expect("content aspect");
        self
    }

    pub fn with_others(mut self) -> Self {
        self.others = true;
        self
    }

    pub fn set_others(&mut self, present: bool) {
        self.others = present;
    }

    pub fn clear(&mut self, aspect: Aspect) {
        if aspect.is_content() {
            self.content[aspect.index()] = None;
        } else {
            self.others = false;
        }
    }

    /// Number of aspect labels, OTHERS counted as one.
    pub fn len(&self) -> usize {
        self.content.iter().filter(|p| p.is_some()).count() + usize::from(self.others)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Present aspects in taxonomy order.
    pub fn iter(&self) -> impl Iterator<Item = (Aspect, AspectState)> + '_ {
        Aspect::ALL
            .iter()
            .map(|&a| (a, self.get(a)))
            .filter(|(_, s)| *s != AspectState::Absent)
    }

    /// Parses the corpus label grammar, e.g. `{BATTERY#Positive};{OTHERS}`.
    pub fn parse(s: &str) -> Result<LabelSet> {
        let mut set = LabelSet::new();
        let mut seen = [false; 11];
        for raw in s.split(';') {
            let item = raw.trim();
            if item.is_empty() {
                continue;
            }
            let inner = item
                .strip_prefix('{')
                .and_then(|r| r.strip_suffix('}'))
                .ok_or_else(|| Error::Label(format!("item `{item}` is not wrapped in braces")))?;
            let (aspect, polarity) = match inner.split_once('#') {
                Some((a, p)) => (a.parse::<Aspect>()?, Some(p.parse::<Polarity>()?)),
                None => (inner.parse::<Aspect>()?, None),
            };
            if std::mem::replace(&mut seen[aspect.index()], true) {
                return Err(Error::Label(format!("duplicate aspect {aspect}")));
            }
            match (aspect, polarity) {
                (Aspect::Others, None) => set.others = true,
                (Aspect::Others, Some(_)) => return Err(Error::Label("OTHERS cannot carry a polarity".into())),
                (a, Some(p)) => set.content[a.index()] = Some(p),
                (a, None) => return Err(Error::Label(format!("{a} is missing a polarity"))),
            }
        }
        Ok(set)
    }

    /// Renders the label grammar accepted by [`LabelSet::parse`].
    pub fn to_label_string(&self) -> String {
        self.iter()
            .map(|(a, s)| match s {
                AspectState::Polar(p) => format!("{{{}#{}}}", a.name(), p.long_name()),
                _ => format!("{{{}}}", a.name()),
            })
            .collect::<Vec<_>>()
            .join(";")
    }
}

impl fmt::Display for LabelSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_label_string())
    }
}

impl Serialize for LabelSet {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let map: BTreeMap<&str, &str> = self
            .iter()
            .map(|(a, s)| {
                let v = match s {
                    AspectState::Polar(p) => p.short_name(),
                    _ => "Present",
                };
                (a.name(), v)
            })
            .collect();
        map.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for LabelSet {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let map = BTreeMap::<String, String>::deserialize(deserializer)?;
        let mut set = LabelSet::new();
        for (k, v) in map {
            let aspect: Aspect = k.parse().map_err(D::Error::custom)?;
            if aspect == Aspect::Others {
                if v != "Present" {
                    return Err(D::Error::custom("OTHERS only takes `Present`"));
                }
                set.others = true;
            } else {
                let p: Polarity = v.parse().map_err(D::Error::custom)?;
                set.content[aspect.index()] = Some(p);
            }
        }
        Ok(set)
    }
}

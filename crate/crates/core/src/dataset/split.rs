//! Seeded train/valid/test assignment.
//!
//! Image ids are sorted, shuffled with a Fisher-Yates pass driven by
//! SplitMix64 (implemented here so the order never changes with a dependency
//! upgrade), then cut with the floor/floor/remainder rule.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::DatasetIndex;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Subset {
    Train,
    Valid,
    Test,
}

impl Subset {
    pub const ALL: [Subset; 3] = [Subset::Train, Subset::Valid, Subset::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Subset::Train => "train",
            Subset::Valid => "valid",
            Subset::Test => "test",
        }
    }
}

impl fmt::Display for Subset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Subset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Subset::Train),
            "valid" => Ok(Subset::Valid),
            "test" => Ok(Subset::Test),
            other => Err(Error::InvalidSplit(format!(
                "unknown subset '{other}' (expected train, valid or test)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub valid: f64,
    pub test: f64,
}

impl SplitRatios {
    pub const SUM_TOLERANCE: f64 = 1e-9;

    pub fn new(train: f64, valid: f64, test: f64) -> Result<Self> {
        let r = SplitRatios { train, valid, test };
        if [train, valid, test].iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidSplit(format!(
                "ratios must be non-negative, got ({train}, {valid}, {test})"
            )));
        }
        let sum = train + valid + test;
        if (sum - 1.0).abs() > Self::SUM_TOLERANCE {
            return Err(Error::InvalidSplit(format!("ratios sum to {sum}, expected 1")));
        }
        Ok(r)
    }

    /// `(train, valid, test)` sizes for `n` items.
    pub fn sizes(&self, n: usize) -> (usize, usize, usize) {
        // The epsilon absorbs products such as 0.7 * 10 landing one ulp below
        // an integer.
        let floor = |r: f64| ((r * n as f64) + 1e-9).floor() as usize;
        let train = floor(self.train).min(n);
        let valid = floor(self.valid).min(n - train);
        (train, valid, n - train - valid)
    }
}

impl Default for SplitRatios {
    fn default() -> Self {
        SplitRatios {
            train: 0.7,
            valid: 0.2,
            test: 0.1,
        }
    }
}

/// Unit of random assignment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitMode {
    /// Each image is assigned independently.
    #[default]
    Image,
    /// All images sharing a `patient_id` land in one subset. Sizes then follow
    /// the floor rule only approximately.
    Patient,
}

/// A total map from image id to subset.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitAssignment {
    /// `None` when the assignment was read back from a file.
    pub ratios: Option<SplitRatios>,
    pub seed: Option<u64>,
    assignment: BTreeMap<String, Subset>,
}

impl SplitAssignment {
    pub fn from_map(assignment: BTreeMap<String, Subset>) -> Self {
        SplitAssignment {
            ratios: None,
            seed: None,
            assignment,
        }
    }

    pub fn get(&self, image_id: &str) -> Option<Subset> {
        self.assignment.get(image_id).copied()
    }

    pub fn len(&self) -> usize {
        self.assignment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignment.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Subset)> {
        self.assignment.iter().map(|(k, v)| (k.as_str(), *v))
    }

    /// Ids in `subset`, sorted.
    pub fn ids(&self, subset: Subset) -> Vec<String> {
        self.iter()
            .filter(|(_, s)| *s == subset)
            .map(|(id, _)| id.to_string())
            .collect()
    }

    pub fn count(&self, subset: Subset) -> usize {
        self.assignment.values().filter(|s| **s == subset).count()
    }

    pub fn sizes(&self) -> (usize, usize, usize) {
        (
            self.count(Subset::Train),
            self.count(Subset::Valid),
            self.count(Subset::Test),
        )
    }

    pub fn insert(&mut self, image_id: String, subset: Subset) -> Option<Subset> {
        self.assignment.insert(image_id, subset)
    }

    /// Checks that the assignment covers exactly the ids of `index`.
    pub fn check_covers(&self, index: &DatasetIndex) -> Result<()> {
        if let Some(id) = index.image_ids().find(|id| !self.assignment.contains_key(*id)) {
            return Err(Error::InvalidSplit(format!("image '{id}' has no subset")));
        }
        if let Some(id) = self.assignment.keys().find(|id| !index.contains(id)) {
            return Err(Error::InvalidSplit(format!(
                "split lists '{id}', which is not in the dataset"
            )));
        }
        Ok(())
    }

    /// `image_id,subset` CSV with header, sorted by id, LF endings.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("image_id,subset\n");
        for (id, subset) in &self.assignment {
            out.push_str(id);
            out.push(',');
            out.push_str(subset.as_str());
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, header)) if header.trim() == "image_id,subset" => {}
            _ => {
                return Err(Error::InvalidSplit(
                    "split file must start with 'image_id,subset'".into(),
                ))
            }
        }
        let mut assignment = BTreeMap::new();
        for (i, line) in lines {
            let line = line.trim_end_matches('\r');
            if line.is_empty() {
                continue;
            }
            let (id, subset) = line.rsplit_once(',').ok_or_else(|| {
                Error::InvalidSplit(format!("line {}: expected 'image_id,subset'", i + 1))
            })?;
            let subset: Subset = subset
                .parse()
                .map_err(|e| Error::InvalidSplit(format!("line {}: {e}", i + 1)))?;
            if assignment.insert(id.to_string(), subset).is_some() {
                return Err(Error::InvalidSplit(format!(
                    "line {}: '{id}' assigned twice",
                    i + 1
                )));
            }
        }
        Ok(SplitAssignment::from_map(assignment))
    }
}

/// SplitMix64 (Steele, Lea & Flood). Output sequence is fixed forever.
#[derive(Debug, Clone)]
pub(crate) struct SplitMix64(u64);

impl SplitMix64 {
    pub(crate) fn new(seed: u64) -> Self {
        SplitMix64(seed)
    }

    pub(crate) fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Unbiased draw in `0..bound` by rejecting the short top interval.
    pub(crate) fn below(&mut self, bound: u64) -> u64 {
        assert!(bound > 0);
        let rem = (u64::MAX % bound).wrapping_add(1) % bound;
        loop {
            let r = self.next_u64();
            if rem == 0 || r <= u64::MAX - rem {
                return r % bound;
            }
        }
    }

    pub(crate) fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }
}

/// Assigns every image of `index` to a subset.
pub fn split_dataset(
    index: &DatasetIndex,
    ratios: SplitRatios,
    seed: u64,
    mode: SplitMode,
) -> Result<SplitAssignment> {
    if index.is_empty() {
        return Err(Error::InvalidSplit("dataset has no images".into()));
    }
    let ratios = SplitRatios::new(ratios.train, ratios.valid, ratios.test)?;
    let n = index.len();
    let (n_train, n_valid, _) = ratios.sizes(n);
    let mut rng = SplitMix64::new(seed);

    // Groups of ids; image mode uses singleton groups.
    let mut groups: Vec<Vec<&str>> = match mode {
        SplitMode::Image => index.image_ids().map(|id| vec![id]).collect(),
        SplitMode::Patient => {
            let mut by_key: BTreeMap<(bool, &str), Vec<&str>> = BTreeMap::new();
            for rec in index.images() {
                let key = match rec.patient_id.as_deref() {
                    Some(p) => (true, p),
                    None => (false, rec.image_id.as_str()),
                };
                by_key.entry(key).or_default().push(rec.image_id.as_str());
            }
            by_key.into_values().collect()
        }
    };
    rng.shuffle(&mut groups);

    let mut assignment = BTreeMap::new();
    let mut placed = 0usize;
    for group in groups {
        let subset = if placed < n_train {
            Subset::Train
        } else if placed < n_train + n_valid {
            Subset::Valid
        } else {
            Subset::Test
        };
        placed += group.len();
        for id in group {
            assignment.insert(id.to_string(), subset);
        }
    }
    Ok(SplitAssignment {
        ratios: Some(ratios),
        seed: Some(seed),
        assignment,
    })
}

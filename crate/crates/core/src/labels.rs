//! Per-point labels, the class taxonomies, and SemanticKITTI `.label` IO.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Taxonomy {
    /// SemanticKITTI class ids (low 16 bits of a `.label` record).
    RawSemanticKitti,
    Seg7,
    Det3,
}

impl Taxonomy {
    pub fn is_valid(self, id: u32) -> bool {
        match self {
            Taxonomy::RawSemanticKitti => id <= u16::MAX as u32,
            Taxonomy::Seg7 => id < Seg7::COUNT as u32,
            Taxonomy::Det3 => id < Det3::COUNT as u32,
        }
    }
}

/// The seven first-stage segmentation classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[repr(u8)]
pub enum Seg7 {
    Car = 0,
    Truck = 1,
    Pedestrian = 2,
    Cyclist = 3,
    Road = 4,
    Sidewalk = 5,
    Unknown = 6,
}

impl Seg7 {
    pub const COUNT: usize = 7;
    pub const ALL: [Seg7; 7] = [
        Seg7::Car,
        Seg7::Truck,
        Seg7::Pedestrian,
        Seg7::Cyclist,
        Seg7::Road,
        Seg7::Sidewalk,
        Seg7::Unknown,
    ];

    pub fn id(self) -> u32 {
        self as u32
    }

    pub fn from_id(id: u32) -> Option<Self> {
        Self::ALL.get(id as usize).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Seg7::Car => "car",
            Seg7::Truck => "truck",
            Seg7::Pedestrian => "pedestrian",
            Seg7::Cyclist => "cyclist",
            Seg7::Road => "road",
            Seg7::Sidewalk => "sidewalk",
            Seg7::Unknown => "unknown",
        }
    }
}

impl FromStr for Seg7 {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown seg7 class `{s}`")))
    }
}

/// The three second-stage detection classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
#[repr(u8)]
pub enum Det3 {
    Vehicle = 0,
    Pedestrian = 1,
    Unknown = 2,
}

impl Det3 {
    pub const COUNT: usize = 3;
    pub const ALL: [Det3; 3] = [Det3::Vehicle, Det3::Pedestrian, Det3::Unknown];
    /// Classes that produce detections.
    pub const OBJECTS: [Det3; 2] = [Det3::Vehicle, Det3::Pedestrian];

    pub fn id(self) -> u32 {
        self as u32
    }

    pub fn from_id(id: u32) -> Option<Self> {
        Self::ALL.get(id as usize).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Det3::Vehicle => "vehicle",
            Det3::Pedestrian => "pedestrian",
            Det3::Unknown => "unknown",
        }
    }
}

impl fmt::Display for Det3 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Det3 {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::MalformedFile(format!("unknown detection class `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PointLabels {
    labels: Vec<u32>,
    taxonomy: Taxonomy,
}

impl PointLabels {
    pub fn new(labels: Vec<u32>, taxonomy: Taxonomy) -> Result<Self> {
        if let Some(&id) = labels.iter().find(|&&id| !taxonomy.is_valid(id)) {
            return Err(Error::InvalidLabel { id, taxonomy });
        }
        Ok(Self { labels, taxonomy })
    }

    pub fn from_seg7(labels: impl IntoIterator<Item = Seg7>) -> Self {
        Self {
            labels: labels.into_iter().map(Seg7::id).collect(),
            taxonomy: Taxonomy::Seg7,
        }
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn taxonomy(&self) -> Taxonomy {
        self.taxonomy
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn to_label_bytes(&self) -> Vec<u8> {
        self.labels.iter().flat_map(|l| l.to_le_bytes()).collect()
    }
}

/// Decodes SemanticKITTI `.label` bytes. Instance ids in the high 16 bits are discarded.
pub fn parse_semantickitti_labels(bytes: &[u8], expected_count: usize) -> Result<PointLabels> {
    if bytes.len() != expected_count * 4 {
        return Err(Error::MalformedFile(format!(
            "label file holds {} bytes, expected {} for {expected_count} points",
            bytes.len(),
            expected_count * 4
        )));
    }
    let labels = bytes
        .chunks_exact(4)
        .map(|b| u32::from_le_bytes(b.try_into().unwrap()) & 0xFFFF)
        .collect();
    Ok(PointLabels {
        labels,
        taxonomy: Taxonomy::RawSemanticKitti,
    })
}

pub fn load_semantickitti_labels(
    path: impl AsRef<Path>,
    expected_count: usize,
) -> Result<PointLabels> {
    parse_semantickitti_labels(&fs::read(path)?, expected_count)
}

/// Reads a `.label` file whose ids are already in the seg7 taxonomy.
pub fn load_seg7_labels(path: impl AsRef<Path>) -> Result<PointLabels> {
    let bytes = fs::read(path)?;
    if bytes.len() % 4 != 0 {
        return Err(Error::MalformedFile(format!(
            "label file length {} is not a multiple of 4",
            bytes.len()
        )));
    }
    let raw = parse_semantickitti_labels(&bytes, bytes.len() / 4)?;
    PointLabels::new(raw.labels, Taxonomy::Seg7)
}

/// Writes labels in the packed `.label` layout (one little-endian `u32` per point).
pub fn save_labels(labels: &PointLabels, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, labels.to_label_bytes())?;
    Ok(())
}

/// Mapping from raw SemanticKITTI ids onto seg7. Unlisted ids map to `unknown`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    table: HashMap<u32, Seg7>,
}

impl Default for LabelMap {
    fn default() -> Self {
        let table = [
            (10, Seg7::Car),
            (13, Seg7::Truck),
            (18, Seg7::Truck),
            (30, Seg7::Pedestrian),
            (11, Seg7::Cyclist),
            (15, Seg7::Cyclist),
            (31, Seg7::Cyclist),
            (32, Seg7::Cyclist),
            (40, Seg7::Road),
            (44, Seg7::Road),
            (48, Seg7::Sidewalk),
        ]
        .into_iter()
        .collect();
        Self { table }
    }
}

impl LabelMap {
    pub fn empty() -> Self {
        Self {
            table: HashMap::new(),
        }
    }

    pub fn insert(&mut self, raw: u32, class: Seg7) {
        self.table.insert(raw, class);
    }

    pub fn get(&self, raw: u32) -> Seg7 {
        self.table.get(&raw).copied().unwrap_or(Seg7::Unknown)
    }

    /// Adds `id -> id` for every seg7 id, so already-remapped labels pass through.
    pub fn identity_extended(mut self) -> Self {
        for c in Seg7::ALL {
            self.table.insert(c.id(), c);
        }
        self
    }

    /// Parses `raw_id = seg7_name` lines. `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut map = Self::empty();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::InvalidConfig(format!("line {}: expected `raw_id = class`", lineno + 1))
            })?;
            let raw: u32 = k.trim().parse().map_err(|_| {
                Error::InvalidConfig(format!("line {}: bad raw id `{}`", lineno + 1, k.trim()))
            })?;
            map.insert(raw, v.trim().parse()?);
        }
        Ok(map)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }
}

/// Maps raw ids through `table` into the seg7 taxonomy. Total: unmapped ids become `unknown`.
pub fn remap_labels(raw: &PointLabels, table: &LabelMap) -> PointLabels {
    PointLabels::from_seg7(raw.labels.iter().map(|&id| table.get(id)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn instance_bits_are_stripped() {
        let labels = parse_semantickitti_labels(&0x0001_000Au32.to_le_bytes(), 1).unwrap();
        assert_eq!(labels.labels(), &[10]);
        assert_eq!(labels.taxonomy(), Taxonomy::RawSemanticKitti);
    }

    #[test]
    fn empty_label_file() {
        assert!(parse_semantickitti_labels(&[], 0).unwrap().is_empty());
    }

    #[test]
    fn count_mismatch_is_malformed() {
        let err = parse_semantickitti_labels(&[0; 4], 2).unwrap_err();
        assert!(matches!(err, Error::MalformedFile(_)));
    }

    #[test]
    fn default_table() {
        let raw = PointLabels::new(vec![10, 40, 99, 48, 30], Taxonomy::RawSemanticKitti).unwrap();
        let seg = remap_labels(&raw, &LabelMap::default());
        assert_eq!(seg.taxonomy(), Taxonomy::Seg7);
        let expected = [
            Seg7::Car,
            Seg7::Road,
            Seg7::Unknown,
            Seg7::Sidewalk,
            Seg7::Pedestrian,
        ];
        assert_eq!(seg.labels(), expected.map(Seg7::id));
    }

    #[test]
    fn config_file_overrides() {
        let map = LabelMap::parse("# custom\n20 = truck\n 40=road  # inline\n").unwrap();
        assert_eq!(map.get(20), Seg7::Truck);
        assert_eq!(map.get(40), Seg7::Road);
        assert_eq!(map.get(10), Seg7::Unknown);
        assert!(LabelMap::parse("10 = boat").is_err());
        assert!(LabelMap::parse("ten = car").is_err());
    }

    #[test]
    fn invalid_seg7_id_rejected() {
        assert!(PointLabels::new(vec![7], Taxonomy::Seg7).is_err());
        assert!(PointLabels::new(vec![2], Taxonomy::Det3).is_ok());
    }
}

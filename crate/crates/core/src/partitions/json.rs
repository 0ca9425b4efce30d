//! JSON documents describing partitions.

use serde::{Deserialize, Serialize};

use super::{Cone, HalfSpace, PartitionSpec, SetSpec};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartitionDoc {
    pub dimension: usize,
    pub cells: Vec<SetDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SetDoc {
    HalfSpace {
        normal: Vec<f64>,
        offset: f64,
    },
    /// `index` defaults to the cell's position in the partition.
    Cone {
        generators: Vec<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        index: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        offsets: Option<Vec<f64>>,
    },
    Sector {
        start: f64,
        end: f64,
    },
    Cell {
        half_spaces: Vec<HalfSpaceDoc>,
    },
    Union {
        sets: Vec<SetDoc>,
    },
    Product {
        base: Box<SetDoc>,
        extra: usize,
    },
    Complement {
        set: Box<SetDoc>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HalfSpaceDoc {
    pub normal: Vec<f64>,
    pub offset: f64,
}

impl SetDoc {
    fn to_spec(&self, position: usize) -> Result<SetSpec> {
        Ok(match self {
            SetDoc::HalfSpace { normal, offset } => SetSpec::HalfSpace(HalfSpace::new(normal.clone(), *offset)?),
            SetDoc::Cone { generators, index, offsets } => {
                let m = generators.len();
                let offsets = offsets.clone().unwrap_or_else(|| vec![0.0; m]);
                SetSpec::Cone(Cone::with_offsets(generators.clone(), offsets, index.unwrap_or(position))?)
            }
            SetDoc::Sector { start, end } => SetSpec::Sector { start: *start, end: *end },
            SetDoc::Cell { half_spaces } => SetSpec::Cell(
                half_spaces.iter().map(|h| HalfSpace::new(h.normal.clone(), h.offset)).collect::<Result<_>>()?,
            ),
            SetDoc::Union { sets } => SetSpec::Union(sets.iter().map(|s| s.to_spec(position)).collect::<Result<_>>()?),
            SetDoc::Product { base, extra } => SetSpec::Product { base: Box::new(base.to_spec(position)?), extra: *extra },
            SetDoc::Complement { set } => SetSpec::Complement(Box::new(set.to_spec(position)?)),
        })
    }

    fn from_spec(s: &SetSpec) -> Result<SetDoc> {
        let hs = |h: &HalfSpace| HalfSpaceDoc { normal: h.normal.clone(), offset: h.offset };
        Ok(match s {
            SetSpec::HalfSpace(h) => SetDoc::HalfSpace { normal: h.normal.clone(), offset: h.offset },
            SetSpec::Cone(c) => SetDoc::Cone {
                generators: c.generators.clone(),
                index: Some(c.index),
                offsets: c.offsets.iter().any(|b| *b != 0.0).then(|| c.offsets.clone()),
            },
            SetSpec::Sector { start, end } => SetDoc::Sector { start: *start, end: *end },
            SetSpec::Cell(h) => SetDoc::Cell { half_spaces: h.iter().map(hs).collect() },
            SetSpec::Union(u) => SetDoc::Union { sets: u.iter().map(SetDoc::from_spec).collect::<Result<_>>()? },
            SetSpec::Product { base, extra } => SetDoc::Product { base: Box::new(SetDoc::from_spec(base)?), extra: *extra },
            SetSpec::Complement(b) => SetDoc::Complement { set: Box::new(SetDoc::from_spec(b)?) },
            SetSpec::Oracle { .. } => return Err(Error::Unsupported("oracle cells cannot be serialized".into())),
        })
    }
}

impl PartitionDoc {
    pub fn into_spec(self) -> Result<PartitionSpec> {
        let cells = self.cells.iter().enumerate().map(|(k, c)| c.to_spec(k)).collect::<Result<_>>()?;
        PartitionSpec::new(self.dimension, cells)
    }

    pub fn from_spec(p: &PartitionSpec) -> Result<Self> {
        Ok(Self { dimension: p.dimension(), cells: p.cells().iter().map(SetDoc::from_spec).collect::<Result<_>>()? })
    }
}

impl PartitionSpec {
    /// Parses a partition document. Malformed JSON is `Error::Parse`;
    /// well-formed documents describing invalid sets fail validation.
    pub fn from_json(text: &str) -> Result<Self> {
        let doc: PartitionDoc = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        doc.into_spec()
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(&PartitionDoc::from_spec(self)?).map_err(|e| Error::Parse(e.to_string()))
    }
}

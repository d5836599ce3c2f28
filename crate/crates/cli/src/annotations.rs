use apnet_core::boxgeom::BoundingBox;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Query,
    Gallery,
}

/// One line of an annotation file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Annotation {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub box_id: Option<u64>,
    pub frame_id: String,
    #[serde(rename = "box")]
    pub bbox: [f64; 4],
    #[serde(default)]
    pub person_id: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<Split>,
}

impl Annotation {
    pub fn to_box(&self, line: usize) -> CliResult<BoundingBox<f64>> {
        BoundingBox::from_array(self.frame_id.clone(), self.bbox)
            .map_err(|e| CliError::core(format!("annotation line {line}"), e))
    }
}

/// Pairs two line-aligned record lists, failing on a count mismatch.
pub fn zip_records<A, B>(a: Vec<(usize, A)>, b: Vec<(usize, B)>, what: &str) -> CliResult<Vec<(usize, A, B)>> {
    if a.len() != b.len() {
        return Err(CliError::parse(format!("{} annotations but {} {what} records", a.len(), b.len())));
    }
    Ok(a.into_iter().zip(b).map(|((line, x), (_, y))| (line, x, y)).collect())
}

/// The annotation's `box_id` must agree with the paired record when both are present.
pub fn check_box_id(ann: &Annotation, box_id: u64, line: usize) -> CliResult<()> {
    match ann.box_id {
        Some(id) if id != box_id => {
            Err(CliError::parse(format!("line {line}: annotation box_id {id} paired with record box_id {box_id}")))
        }
        _ => Ok(()),
    }
}

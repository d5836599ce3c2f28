use std::path::PathBuf;

use apnet_core::boxgeom::{refine_box, validity, OffsetVector};
use serde::{Deserialize, Serialize};

use crate::annotations::{check_box_id, zip_records, Annotation};
use crate::config::Config;
use crate::error::{CliError, CliResult};
use crate::io::{read_jsonl, write_jsonl};

#[derive(Debug, Clone)]
pub struct RefineArgs {
    pub annotations: PathBuf,
    pub offsets: PathBuf,
    pub out: PathBuf,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct OffsetRecord {
    box_id: u64,
    /// `[top, bottom, left, right]`
    offsets: [f64; 4],
}

#[derive(Debug, Serialize)]
struct RefinedRecord {
    box_id: u64,
    frame_id: String,
    #[serde(rename = "box")]
    bbox: [f64; 4],
    offsets: [f64; 4],
    refined_box: [f64; 4],
    validity_mask: u64,
    valid_stripes: Vec<usize>,
}

pub fn cmd_refine(cfg: &Config, args: &RefineArgs) -> CliResult<()> {
    let anns = read_jsonl::<Annotation>(&args.annotations)?;
    let offs = read_jsonl::<OffsetRecord>(&args.offsets)?;
    let rows = zip_records(anns, offs, "offset")?
        .into_iter()
        .map(|(line, ann, rec)| {
            check_box_id(&ann, rec.box_id, line)?;
            let ctx = || format!("record box_id {} (line {line})", rec.box_id);
            let b = ann.to_box(line)?;
            let o = OffsetVector::from_array(rec.offsets).map_err(|e| CliError::core(ctx(), e))?;
            let refined = refine_box(&b, &o).map_err(|e| CliError::core(ctx(), e))?;
            let v = validity(&o, cfg.k, cfg.k_v).map_err(|e| CliError::core(ctx(), e))?;
            Ok(RefinedRecord {
                box_id: rec.box_id,
                frame_id: ann.frame_id,
                bbox: ann.bbox,
                offsets: rec.offsets,
                refined_box: refined.to_array(),
                validity_mask: v.to_bitmask(),
                valid_stripes: v.valid_horizontal(),
            })
        })
        .collect::<CliResult<Vec<_>>>()?;
    write_jsonl(&args.out, &rows)
}

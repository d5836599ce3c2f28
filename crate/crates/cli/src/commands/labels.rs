use std::path::PathBuf;

use apnet_core::boxgeom::raw_offsets;
use apnet_core::labels::{estimate_holistic_box, Joint, Keypoint, KeypointSet, OffsetLabel};
use serde::{Deserialize, Serialize};

use crate::annotations::{check_box_id, zip_records, Annotation};
use crate::config::Config;
use crate::error::{CliError, CliResult};
use crate::io::{read_jsonl, write_jsonl};

#[derive(Debug, Clone)]
pub struct LabelsArgs {
    pub keypoints: PathBuf,
    pub annotations: PathBuf,
    pub out: PathBuf,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct JointRecord {
    name: Joint,
    x: f64,
    y: f64,
    /// COCO visibility flag; anything above zero counts as visible.
    v: u8,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct KeypointRecord {
    box_id: u64,
    joints: Vec<JointRecord>,
}

#[derive(Debug, Serialize)]
struct LabelRecord {
    box_id: u64,
    frame_id: String,
    gt_box: [f64; 4],
    holistic_box: [f64; 4],
    offsets: [f64; 4],
    clamped: bool,
}

pub fn cmd_labels(cfg: &Config, args: &LabelsArgs) -> CliResult<()> {
    let fractions = cfg.fractions()?;
    let kps = read_jsonl::<KeypointRecord>(&args.keypoints)?;
    let anns = read_jsonl::<Annotation>(&args.annotations)?;
    let rows = zip_records(anns, kps, "keypoint")?
        .into_iter()
        .map(|(line, ann, rec)| {
            check_box_id(&ann, rec.box_id, line)?;
            let ctx = || format!("record box_id {} (line {line})", rec.box_id);
            let gt = ann.to_box(line)?;
            let points =
                rec.joints.iter().map(|j| Keypoint { joint: j.name, x: j.x, y: j.y, visible: j.v > 0 }).collect();
            let kp = KeypointSet::new(points).map_err(|e| CliError::core(ctx(), e))?;
            let holistic = estimate_holistic_box(&kp, &gt, &fractions).map_err(|e| CliError::core(ctx(), e))?;
            let label = OffsetLabel::from_raw(raw_offsets(&gt, &holistic)).map_err(|e| CliError::core(ctx(), e))?;
            Ok(LabelRecord {
                box_id: rec.box_id,
                frame_id: ann.frame_id,
                gt_box: ann.bbox,
                holistic_box: holistic.to_array(),
                offsets: label.target.to_array(),
                clamped: label.clamped,
            })
        })
        .collect::<CliResult<Vec<_>>>()?;
    write_jsonl(&args.out, &rows)
}

use std::path::{Path, PathBuf};

use apnet_core::evalkit::{evaluate, Detection, EvalOptions, GroundTruth, GtBox, Query, RankedResult};
use apnet_core::formats::{read_matrix_binary, read_matrix_csv, MATRIX_MAGIC};
use serde::Deserialize;

use crate::annotations::{Annotation, Split};
use crate::config::Config;
use crate::error::{CliError, CliResult};
use crate::io::{read_bytes, read_jsonl, write_json};

#[derive(Debug, Clone)]
pub struct EvaluateArgs {
    pub matrix: PathBuf,
    pub annotations: PathBuf,
    /// Gallery detections, one per matrix column. Defaults to the gallery annotations.
    pub detections: Option<PathBuf>,
    pub iou_thresh: Option<f64>,
    pub out: PathBuf,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DetectionRecord {
    frame_id: String,
    #[serde(rename = "box")]
    bbox: [f64; 4],
}

/// Reads the binary matrix when the magic is present, CSV otherwise.
fn load_matrix(path: &Path) -> CliResult<(usize, usize, Vec<f32>)> {
    let bytes = read_bytes(path)?;
    if bytes.starts_with(MATRIX_MAGIC) {
        let m = read_matrix_binary(&mut bytes.as_slice()).map_err(|e| CliError::core(path.display(), e))?;
        return Ok((m.header.rows, m.header.cols, m.values));
    }
    let text = std::str::from_utf8(&bytes)
        .map_err(|_| CliError::format(format!("{}: neither binary nor CSV", path.display())))?;
    let rows = read_matrix_csv(text).map_err(|e| CliError::core(path.display(), e))?;
    let cols = rows.first().map_or(0, Vec::len);
    Ok((rows.len(), cols, rows.concat()))
}

pub fn cmd_evaluate(cfg: &Config, args: &EvaluateArgs) -> CliResult<()> {
    let iou_thresh = args.iou_thresh.unwrap_or(cfg.iou_thresh);
    if !(0.0..1.0).contains(&iou_thresh) {
        return Err(CliError::parse(format!("--iou-thresh {iou_thresh} outside [0, 1)")));
    }
    let anns = read_jsonl::<Annotation>(&args.annotations)?;
    let mut gt = GroundTruth::new();
    let mut queries = Vec::new();
    let mut gallery = Vec::new();
    for (line, ann) in &anns {
        let bbox = ann.to_box(*line)?;
        match ann.split {
            Some(Split::Query) => {
                let person_id = ann.person_id.filter(|&p| p > 0).ok_or_else(|| {
                    CliError::parse(format!("annotation line {line}: query needs a positive person_id"))
                })?;
                queries.push(Query { query_id: format!("line{line}"), person_id, bbox });
            }
            Some(Split::Gallery) => {
                gt.add(GtBox { bbox: bbox.clone(), person_id: ann.person_id })
                    .map_err(|e| CliError::core(format!("annotation line {line}"), e))?;
                gallery.push(bbox);
            }
            None => return Err(CliError::parse(format!("annotation line {line}: missing split"))),
        }
    }
    let detections: Vec<Detection<f64>> = match &args.detections {
        None => gallery.into_iter().enumerate().map(|(j, bbox)| Detection { box_id: j as u64, bbox }).collect(),
        Some(path) => read_jsonl::<DetectionRecord>(path)?
            .into_iter()
            .enumerate()
            .map(|(j, (line, d))| {
                let ann = Annotation { box_id: None, frame_id: d.frame_id, bbox: d.bbox, person_id: None, split: None };
                Ok(Detection { box_id: j as u64, bbox: ann.to_box(line)? })
            })
            .collect::<CliResult<_>>()?,
    };

    let (rows, cols, values) = load_matrix(&args.matrix)?;
    if rows != queries.len() || (rows > 0 && cols != detections.len()) {
        return Err(CliError::format(format!(
            "matrix is {rows}x{cols} but there are {} queries and {} gallery boxes",
            queries.len(),
            detections.len()
        )));
    }
    let ranked = queries
        .into_iter()
        .enumerate()
        .map(|(i, q)| {
            let d: Vec<f64> = values[i * cols..(i + 1) * cols].iter().map(|&v| v as f64).collect();
            RankedResult::from_distances(q, &detections, &d).map_err(|e| CliError::core(format!("matrix row {i}"), e))
        })
        .collect::<CliResult<Vec<_>>>()?;
    let report = evaluate(&ranked, &gt, &EvalOptions { iou_thresh, ..EvalOptions::default() });
    write_json(&args.out, &report)
}

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use apnet_core::formats::{write_bank, BankRecord, FeatureBank};
use apnet_core::simbench::{
    ablation_on, gallery_frame, generate, query_frame, sim_box, sweep_k_on, AblationRow, SimConfig, SimDataset,
    SimObservation, SweepRow,
};
use serde::Serialize;

use crate::annotations::{Annotation, Split};
use crate::config::Config;
use crate::error::{CliError, CliResult};
use crate::io::{write_file, write_json, write_jsonl, write_text};

pub const DEFAULT_SWEEP: [usize; 5] = [1, 2, 3, 5, 7];

#[derive(Debug, Clone, Default)]
pub struct SimulateArgs {
    pub seed: Option<u64>,
    pub p: Option<f64>,
    pub k: Option<usize>,
    pub n_ids: Option<usize>,
    /// Stripe counts for the K sweep; defaults to the standard list capped at `k`.
    pub sweep: Option<Vec<usize>>,
    /// Also write the query/gallery banks and their annotations.
    pub banks: bool,
    pub out: PathBuf,
}

#[derive(Serialize)]
struct Summary<'a> {
    config: &'a SimConfig,
    ablation: &'a [AblationRow],
    sweep: &'a [SweepRow],
}

pub fn sim_config(cfg: &Config, args: &SimulateArgs) -> CliResult<SimConfig> {
    let mut sim = cfg.sim.clone();
    if let Some(s) = args.seed {
        sim.seed = s;
    }
    if let Some(p) = args.p {
        sim.occlusion_prob = p;
    }
    if let Some(k) = args.k {
        sim.k = k;
    }
    if let Some(n) = args.n_ids {
        sim.n_identities = n;
    }
    sim.validate().map_err(|e| CliError::core("simulate", e))?;
    Ok(sim)
}

fn ablation_csv(rows: &[AblationRow]) -> String {
    let mut s = String::from("strategy,mAP,rank1\n");
    for r in rows {
        let _ = writeln!(s, "{},{},{}", r.strategy.name(), r.map, r.rank1);
    }
    s
}

fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from("k,mAP,rank1\n");
    for r in rows {
        let _ = writeln!(s, "{},{},{}", r.k, r.map, r.rank1);
    }
    s
}

fn write_sim_bank(path: &Path, obs: &[SimObservation]) -> CliResult<()> {
    let records = obs
        .iter()
        .enumerate()
        .map(|(i, o)| BankRecord { box_id: i as u64, descriptor: o.descriptor.clone() })
        .collect();
    let bank = FeatureBank::from_records(records).map_err(|e| CliError::core(path.display(), e))?;
    write_file(path, |w| write_bank(w, &bank).map_err(|e| CliError::core(path.display(), e)))
}

fn sim_annotations(data: &SimDataset) -> Vec<Annotation> {
    let ann = |frame: String, o: &SimObservation, split| Annotation {
        box_id: None,
        bbox: sim_box(frame.clone()).to_array(),
        frame_id: frame,
        person_id: Some(o.identity),
        split: Some(split),
    };
    let q = data.queries.iter().enumerate().map(|(i, o)| ann(query_frame(i), o, Split::Query));
    let g = data.gallery.iter().enumerate().map(|(j, o)| ann(gallery_frame(j), o, Split::Gallery));
    q.chain(g).collect()
}

/// Writes `ablation.{csv,json}`, `sweep.{csv,json}` and `summary.json` into
/// `args.out`, plus `query.bank`, `gallery.bank` and `annotations.jsonl` when
/// banks are requested.
pub fn cmd_simulate(cfg: &Config, args: &SimulateArgs) -> CliResult<Vec<AblationRow>> {
    let sim = sim_config(cfg, args)?;
    let sweep_ks = match &args.sweep {
        Some(ks) => ks.clone(),
        None => DEFAULT_SWEEP.iter().copied().filter(|&k| k <= sim.k).collect(),
    };
    if let Some(&bad) = sweep_ks.iter().find(|&&k| k == 0 || k > sim.k) {
        return Err(CliError::parse(format!("--sweep K={bad} outside 1..={}", sim.k)));
    }
    let data = generate(&sim).map_err(|e| CliError::core("simulate", e))?;
    let ablation = ablation_on(&data).map_err(|e| CliError::core("ablation", e))?;
    let sweep = sweep_k_on(&data, &sweep_ks).map_err(|e| CliError::core("sweep", e))?;

    let out = &args.out;
    std::fs::create_dir_all(out).map_err(|e| CliError::internal(format!("cannot create {}: {e}", out.display())))?;
    write_text(&out.join("ablation.csv"), &ablation_csv(&ablation))?;
    write_json(&out.join("ablation.json"), &ablation)?;
    write_text(&out.join("sweep.csv"), &sweep_csv(&sweep))?;
    write_json(&out.join("sweep.json"), &sweep)?;
    write_json(&out.join("summary.json"), &Summary { config: &sim, ablation: &ablation, sweep: &sweep })?;
    if args.banks {
        write_sim_bank(&out.join("query.bank"), &data.queries)?;
        write_sim_bank(&out.join("gallery.bank"), &data.gallery)?;
        write_jsonl(&out.join("annotations.jsonl"), &sim_annotations(&data))?;
    }
    Ok(ablation)
}

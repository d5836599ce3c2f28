use std::path::{Path, PathBuf};

use apnet_core::formats::{read_bank, write_matrix_binary, write_matrix_csv, FeatureBank, MatrixFile, MatrixHeader};
use apnet_core::matching::{distance_matrix, Strategy};

use crate::config::Config;
use crate::error::{CliError, CliResult};
use crate::io::{read_bytes, write_file};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MatrixFormat {
    #[default]
    Bin,
    Csv,
}

#[derive(Debug, Clone)]
pub struct MatchArgs {
    pub query: PathBuf,
    pub gallery: PathBuf,
    pub strategy: Strategy,
    /// Overrides the configured lambda.
    pub lambda: Option<f64>,
    pub format: MatrixFormat,
    pub out: PathBuf,
}

fn load_bank(path: &Path) -> CliResult<FeatureBank<f64>> {
    let bytes = read_bytes(path)?;
    read_bank(&mut bytes.as_slice()).map_err(|e| CliError::core(path.display(), e))
}

pub fn cmd_match(cfg: &Config, args: &MatchArgs) -> CliResult<()> {
    let q = load_bank(&args.query)?;
    let g = load_bank(&args.gallery)?;
    q.header.compatible(&g.header).map_err(|e| CliError::core("query vs gallery bank", e))?;
    if let Some(d) = cfg.d {
        if q.header.d != d {
            return Err(CliError::format(format!("banks have d = {}, config requires {d}", q.header.d)));
        }
    }
    let mut opts = cfg.match_options();
    if let Some(l) = args.lambda {
        if !l.is_finite() || l < 0.0 {
            return Err(CliError::parse(format!("--lambda {l} must be finite and non-negative")));
        }
        opts.lambda = l;
    }
    let m = distance_matrix(&q.descriptors(), &g.descriptors(), args.strategy, &opts)
        .map_err(|e| CliError::core("distance matrix", e))?;
    let file = MatrixFile {
        header: MatrixHeader { rows: m.rows(), cols: m.cols(), strategy: args.strategy, lambda: opts.lambda },
        values: m.values().into_iter().map(|v| v as f32).collect(),
    };
    write_file(&args.out, |w| {
        match args.format {
            MatrixFormat::Bin => write_matrix_binary(w, &file),
            MatrixFormat::Csv => write_matrix_csv(w, &file),
        }
        .map_err(|e| CliError::core(args.out.display(), e))
    })
}

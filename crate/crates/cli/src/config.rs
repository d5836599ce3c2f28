//! JSON run configuration.
//!
//! ```json
//! {
//!   "k": 7, "k_v": null, "d": null, "lambda": 1.0, "iou_thresh": 0.5,
//!   "normalize": false,
//!   "keypoint_fractions": { "vertical": { "nose": 0.06 }, "horizontal": {} },
//!   "sim": { "n_identities": 100, "seed": 42 }
//! }
//! ```
//!
//! Every key is optional; unknown keys are rejected.

use std::collections::BTreeMap;
use std::path::Path;

use apnet_core::boxgeom::DEFAULT_STRIPES;
use apnet_core::boxgeom::MAX_HORIZONTAL_STRIPES;
use apnet_core::evalkit::DEFAULT_IOU_THRESH;
use apnet_core::labels::{CanonicalFractions, Joint};
use apnet_core::matching::{MatchOptions, DEFAULT_LAMBDA};
use apnet_core::simbench::SimConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::io::read_text;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FractionOverrides {
    pub vertical: BTreeMap<Joint, f64>,
    pub horizontal: BTreeMap<Joint, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    /// Horizontal stripes used by `refine`.
    pub k: usize,
    /// Vertical stripes used by `refine`, if any.
    pub k_v: Option<usize>,
    /// Required part dimension of banks given to `match`; unchecked when null.
    pub d: Option<usize>,
    pub lambda: f64,
    pub iou_thresh: f64,
    /// L2-normalize part and global features before matching.
    pub normalize: bool,
    pub keypoint_fractions: FractionOverrides,
    pub sim: SimConfig,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            k: DEFAULT_STRIPES,
            k_v: None,
            d: None,
            lambda: DEFAULT_LAMBDA,
            iou_thresh: DEFAULT_IOU_THRESH,
            normalize: false,
            keypoint_fractions: FractionOverrides::default(),
            sim: SimConfig::default(),
        }
    }
}

impl Config {
    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        let cfg = match path {
            None => Self::default(),
            Some(p) => serde_json::from_str(&read_text(p)?)
                .map_err(|e| CliError::parse(format!("config {}: {e}", p.display())))?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> CliResult<()> {
        let bad = |m: String| Err(CliError::parse(format!("config: {m}")));
        if self.k == 0 || self.k > MAX_HORIZONTAL_STRIPES {
            return bad(format!("k = {} outside 1..={MAX_HORIZONTAL_STRIPES}", self.k));
        }
        if let Some(kv) = self.k_v {
            if kv == 0 || kv > MAX_HORIZONTAL_STRIPES {
                return bad(format!("k_v = {kv} outside 1..={MAX_HORIZONTAL_STRIPES}"));
            }
        }
        if self.d == Some(0) {
            return bad("d must be positive".into());
        }
        if !self.lambda.is_finite() || self.lambda < 0.0 {
            return bad(format!("lambda = {} must be finite and non-negative", self.lambda));
        }
        if !(0.0..1.0).contains(&self.iou_thresh) {
            return bad(format!("iou_thresh = {} outside [0, 1)", self.iou_thresh));
        }
        self.fractions()?;
        self.sim.validate().map_err(|e| CliError::parse(format!("config sim: {e}")))
    }

    pub fn fractions(&self) -> CliResult<CanonicalFractions> {
        let mut fr = CanonicalFractions::default();
        for (&j, &v) in &self.keypoint_fractions.vertical {
            fr.set_vertical(j, v).map_err(|e| CliError::parse(e.to_string()))?;
        }
        for (&j, &h) in &self.keypoint_fractions.horizontal {
            fr.set_horizontal(j, h).map_err(|e| CliError::parse(e.to_string()))?;
        }
        Ok(fr)
    }

    pub fn match_options(&self) -> MatchOptions<f64> {
        MatchOptions { lambda: self.lambda, normalize: self.normalize }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_rejected() {
        assert!(serde_json::from_str::<Config>(r#"{"k": 7, "stripes": 3}"#).is_err());
        assert!(serde_json::from_str::<Config>(r#"{"sim": {"bogus": 1}}"#).is_err());
    }

    #[test]
    fn partial_config_fills_defaults() {
        let c: Config =
            serde_json::from_str(r#"{"lambda": 0.5, "keypoint_fractions": {"vertical": {"nose": 0.1}}}"#).unwrap();
        assert_eq!(c.k, 7);
        assert_eq!(c.lambda, 0.5);
        assert_eq!(c.fractions().unwrap().vertical(Joint::Nose), 0.1);
    }

    #[test]
    fn bounds_checked() {
        assert!(Config { k: 0, ..Config::default() }.validate().is_err());
        assert!(Config { lambda: -1.0, ..Config::default() }.validate().is_err());
        assert!(Config { iou_thresh: 1.0, ..Config::default() }.validate().is_err());
    }
}

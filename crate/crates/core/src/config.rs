//! Run-level configuration shared by the command-line tool: defaults, a JSON
//! file loader, and the compact `num=..;cat=..;ts=..` aggregator-list syntax.

use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::plan::{AggregatorKind, ChainMode, CutoffMode, FeatureConfig};
use crate::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Maximum meta-path length.
    pub hops: usize,
    /// Cap on train rows kept after downsampling.
    pub n_max: usize,
    pub seed: u64,
    /// Worker threads; 0 keeps the library default.
    pub threads: usize,
    /// Neighborhood size for the bundled predictor.
    pub k: usize,
    pub cutoff_mode: CutoffMode,
    pub chain_mode: ChainMode,
    pub aggs: Option<String>,
}

impl Default for RunConfig {
    fn default() -> RunConfig {
        RunConfig {
            hops: 2,
            n_max: 10_000,
            seed: 0,
            threads: 0,
            k: crate::icl::DEFAULT_K,
            cutoff_mode: CutoffMode::None,
            chain_mode: ChainMode::Repeat,
            aggs: None,
        }
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// The feature-enumeration settings this run implies.
    pub fn feature_config(&self) -> Result<FeatureConfig> {
        let mut fc = match &self.aggs {
            Some(spec) => parse_aggs(spec)?,
            None => FeatureConfig::default(),
        };
        fc.chain_mode = self.chain_mode;
        fc.validate()?;
        Ok(fc)
    }
}

/// Parse `num=sum,mean;cat=count;ts=tdelta_min`. Omitted groups keep their
/// defaults; an explicitly empty group (`cat=`) clears it.
pub fn parse_aggs(spec: &str) -> Result<FeatureConfig> {
    let mut fc = FeatureConfig::default();
    for part in spec.split(';') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        let (key, list) = part
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("expected group=list, got {part:?}")))?;
        let aggs = list
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(AggregatorKind::from_str)
            .collect::<Result<Vec<_>>>()?;
        match key.trim() {
            "num" => fc.numeric = aggs,
            "cat" => fc.categorical = aggs,
            "ts" => fc.timestamp = aggs,
            other => {
                return Err(Error::Config(format!(
                    "unknown aggregator group {other:?} (expected num, cat, or ts)"
                )))
            }
        }
    }
    fc.validate()?;
    Ok(fc)
}

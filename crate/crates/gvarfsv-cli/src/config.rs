//! Run configuration: one JSON document drives every subcommand, so a run is
//! reproducible from a single artifact. Command-line flags only override the
//! seed and the output directory.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use gvarfsv::data::{PanelPaths, Transform};
use gvarfsv::gibbs::ChainConfig;
use gvarfsv::ident::{IdentifySettings, LowFreqAnchors};
use gvarfsv::irf::{DEFAULT_HORIZON, DEFAULT_QUANTILES};
use gvarfsv::model::{validate_spec, ModelSpec};

use crate::errors::CliError;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunConfig {
    pub spec: ModelSpec,
    pub chain: ChainConfig,
    pub data: DataSection,
    #[serde(default)]
    pub identification: IdentSection,
    #[serde(default)]
    pub irf: IrfSection,
    pub output_dir: PathBuf,
    /// Worker thread cap; absent = all available cores.
    #[serde(default)]
    pub workers: Option<usize>,
}

/// Input file locations plus per-column transformation tags.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DataSection {
    pub surprises: PathBuf,
    pub aggregate: PathBuf,
    /// One file per country, in stacked block order.
    pub countries: Vec<PathBuf>,
    /// Wide monthly CSV of GDP flows (one column per country); time-averaged
    /// and normalized into the aggregate weight row.
    pub gdp_flows: PathBuf,
    /// Flow-cube CSV of bilateral exports; time-averaged, diagonal zeroed,
    /// and row-normalized into the country weight block.
    pub trade_flows: PathBuf,
    /// Column id → transformation; unlisted columns are taken as-is.
    #[serde(default)]
    pub transforms: HashMap<String, Transform>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct IdentSection {
    #[serde(flatten)]
    pub settings: IdentifySettings,
    /// Restriction table JSON; the published pattern when absent.
    #[serde(default)]
    pub table: Option<PathBuf>,
    /// Low-frequency anchor rows added to the default table (two-surprise
    /// layouts only).
    #[serde(default)]
    pub anchors: Option<LowFreqAnchors>,
    /// Seed of the rotation search; the chain seed when absent.
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IrfSection {
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    #[serde(default = "default_quantiles")]
    pub quantiles: Vec<f64>,
}

fn default_horizon() -> usize {
    DEFAULT_HORIZON
}

fn default_quantiles() -> Vec<f64> {
    DEFAULT_QUANTILES.to_vec()
}

impl Default for IrfSection {
    fn default() -> Self {
        IrfSection {
            horizon: default_horizon(),
            quantiles: default_quantiles(),
        }
    }
}

impl RunConfig {
    /// Reads and validates a config; relative paths are resolved against the
    /// config file's directory.
    pub fn load(path: &Path) -> Result<RunConfig, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut config: RunConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        config.rebase(base);
        config.validate()?;
        Ok(config)
    }

    fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&p);
            }
        };
        fix(&mut self.data.surprises);
        fix(&mut self.data.aggregate);
        for p in &mut self.data.countries {
            fix(p);
        }
        fix(&mut self.data.gdp_flows);
        fix(&mut self.data.trade_flows);
        if let Some(table) = &mut self.identification.table {
            fix(table);
        }
        fix(&mut self.output_dir);
    }

    fn validate(&self) -> Result<(), CliError> {
        let violations = validate_spec(&self.spec);
        if !violations.is_empty() {
            let lines: Vec<String> = violations
                .iter()
                .map(|v| format!("{}: {}", v.field, v.message))
                .collect();
            return Err(CliError::Config(format!(
                "invalid model spec: {}",
                lines.join("; ")
            )));
        }
        self.chain
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        if self.data.countries.len() != self.spec.n_countries {
            return Err(CliError::Config(format!(
                "config lists {} country files for {} countries",
                self.data.countries.len(),
                self.spec.n_countries
            )));
        }
        if self.irf.quantiles.is_empty()
            || self.irf.quantiles.iter().any(|q| !(0.0..=1.0).contains(q))
        {
            return Err(CliError::Config(
                "irf.quantiles must be a non-empty list inside [0, 1]".into(),
            ));
        }
        if self.identification.settings.max_attempts == 0 {
            return Err(CliError::Config(
                "identification.max_attempts must be at least 1".into(),
            ));
        }
        Ok(())
    }

    /// Checks that every input file referenced by the config exists.
    pub fn require_data_files(&self) -> Result<(), CliError> {
        let mut all: Vec<&PathBuf> = vec![
            &self.data.surprises,
            &self.data.aggregate,
            &self.data.gdp_flows,
            &self.data.trade_flows,
        ];
        all.extend(&self.data.countries);
        if let Some(table) = &self.identification.table {
            all.push(table);
        }
        for p in all {
            if !p.is_file() {
                return Err(CliError::Config(format!(
                    "referenced file does not exist: {}",
                    p.display()
                )));
            }
        }
        Ok(())
    }

    pub fn panel_paths(&self) -> PanelPaths {
        PanelPaths {
            surprises: self.data.surprises.clone(),
            aggregate: self.data.aggregate.clone(),
            countries: self.data.countries.clone(),
        }
    }

    /// Directory the retained-draw store lives in.
    pub fn store_dir(&self) -> PathBuf {
        self.output_dir.join("store")
    }
}

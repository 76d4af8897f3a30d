//! Run configuration: a single TOML file naming a scenario (builtin or
//! file) plus study-specific settings and parameter overrides.
//!
//! Lengths in scenario geometry are millimeters; times are seconds; material
//! data is Pa / kg/m^3 (documented on the scenario type itself).

use serde::Deserialize;
use std::path::PathBuf;

use crate::CliError;
use wavecell::scenarios::{builtin, builtin_scenarios, Scenario};

/// Which study a config is meant for. Optional in the file; when present it
/// must agree with the subcommand, which catches configs passed to the
/// wrong tool.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Study {
    SingleRun,
    DtcrTable,
    KappaTable,
    PSweep,
}

impl Study {
    pub fn name(self) -> &'static str {
        match self {
            Study::SingleRun => "single-run",
            Study::DtcrTable => "dtcr-table",
            Study::KappaTable => "kappa-table",
            Study::PSweep => "p-sweep",
        }
    }
}

/// Optional parameter overrides applied on top of the resolved scenario.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct Overrides {
    pub p: Option<usize>,
    pub depth: Option<usize>,
    /// Stabilization variant code (for example "0e", "2b", "3b").
    pub variant: Option<String>,
    pub eps_s: Option<f64>,
    pub eps_lambda: Option<f64>,
    pub alpha0: Option<f64>,
    pub dt: Option<f64>,
    pub t_end: Option<f64>,
}

/// Settings for the table studies.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct TableConfig {
    /// Polynomial orders (columns). Default: 1..=8 for the critical-step
    /// table, 1..=4 for the conditioning table.
    pub orders: Option<Vec<usize>>,
    /// Variant codes (rows of the critical-step table). Default: 0e and 2b.
    pub variants: Option<Vec<String>>,
}

/// Settings for the order sweep.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct SweepConfig {
    /// Orders to sweep. Default: 2, 3, 4, 5.
    pub orders: Option<Vec<usize>>,
    /// Order of the self-reference run. Default: 6.
    pub reference_p: Option<usize>,
    /// The reference runs at dt / this divisor. Default: 4.
    pub reference_dt_divisor: Option<f64>,
    /// Displacement component the error is measured on: "x" or "y".
    pub component: Option<String>,
    /// Close the comparison window at this time (seconds). Default: the
    /// full common span.
    pub window_end: Option<f64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            orders: None,
            reference_p: None,
            reference_dt_divisor: None,
            component: None,
            window_end: None,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct RunConfig {
    /// Builtin scenario name or path to a scenario TOML file.
    pub scenario: String,
    pub study: Option<Study>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub overrides: Overrides,
    #[serde(default)]
    pub table: TableConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
    /// Conditioning numbers in the run summary need a dense spectral
    /// decomposition; systems with more free DOFs than this skip them.
    #[serde(default = "default_conditioning_max_dofs")]
    pub conditioning_max_dofs: usize,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from(".")
}

fn default_conditioning_max_dofs() -> usize {
    600
}

impl RunConfig {
    pub fn load(path: &std::path::Path) -> Result<RunConfig, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::Config(format!("cannot read config {}: {e}", path.display()))
        })?;
        toml::from_str(&text).map_err(|e| {
            // toml errors carry line/column context in their Display form.
            CliError::Config(format!("config {}: {e}", path.display()))
        })
    }

    /// Enforce the study declared in the file (if any) against the
    /// subcommand actually invoked.
    pub fn expect_study(&self, invoked: Study) -> Result<(), CliError> {
        match self.study {
            Some(s) if s != invoked => Err(CliError::Config(format!(
                "config declares study '{}' but the '{}' command was invoked",
                s.name(),
                invoked.name()
            ))),
            _ => Ok(()),
        }
    }

    /// Resolve the scenario: an existing file path wins, otherwise the
    /// builtin catalog is consulted. Overrides are applied on the result.
    pub fn resolve_scenario(&self) -> Result<Scenario, CliError> {
        let path = std::path::Path::new(&self.scenario);
        let mut scn: Scenario = if path.is_file() {
            let text = std::fs::read_to_string(path).map_err(|e| {
                CliError::Config(format!("cannot read scenario {}: {e}", path.display()))
            })?;
            toml::from_str(&text).map_err(|e| {
                CliError::Config(format!("scenario {}: {e}", path.display()))
            })?
        } else {
            builtin(&self.scenario).ok_or_else(|| {
                let names: Vec<String> =
                    builtin_scenarios().iter().map(|s| s.name.clone()).collect();
                CliError::Config(format!(
                    "'{}' is neither a scenario file nor a builtin (available: {})",
                    self.scenario,
                    names.join(", ")
                ))
            })?
        };

        let o = &self.overrides;
        if let Some(p) = o.p {
            scn.p = p;
        }
        if let Some(depth) = o.depth {
            scn.depth = depth;
        }
        if let Some(code) = &o.variant {
            scn = scn
                .with_variant(code)
                .map_err(|e| CliError::Config(e.to_string()))?;
        }
        if let Some(v) = o.eps_s {
            scn.evs.eps_s = v;
        }
        if let Some(v) = o.eps_lambda {
            scn.evs.eps_lambda = v;
        }
        if let Some(v) = o.alpha0 {
            scn.evs.alpha0 = v;
        }
        if let Some(v) = o.dt {
            scn.dt = v;
        }
        if let Some(v) = o.t_end {
            scn.t_end = v;
        }
        Ok(scn)
    }
}

/// Worker count from the environment (`WAVECELL_WORKERS`), defaulting to 1.
pub fn workers() -> usize {
    std::env::var("WAVECELL_WORKERS")
        .ok()
        .and_then(|s| s.parse::<usize>().ok())
        .filter(|&w| w >= 1)
        .unwrap_or(1)
}

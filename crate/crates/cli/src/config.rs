//! Run settings merged from built-in defaults, a flat `key=value` file and
//! command-line flags, in increasing order of precedence.

use std::collections::BTreeMap;
use std::path::PathBuf;

use tontine_core::analytics::{DEFAULT_BASE_AGE, DEFAULT_INITIAL_WEALTH};
use tontine_core::controls::DEFAULT_GRID_STEP;
use tontine_core::mortality::DEFAULT_LIMITING_AGE_YEARS;
use tontine_core::preferences::DEFAULT_HORIZON_YEARS;
use tontine_core::simulate::DEFAULT_STEP;
use tontine_core::{BequestTable, BequestVariant, GompertzMakehamParams, MarketParams, PreferenceSchedule};

use crate::error::CliError;

pub const VALID_KEYS: [&str; 23] = [
    "a1",
    "a2",
    "a3",
    "base_age",
    "dump_paths",
    "gamma",
    "grid_step",
    "horizon_years",
    "kappa",
    "life_table",
    "limiting_age",
    "mu",
    "out",
    "paths",
    "r",
    "rho",
    "seed",
    "sigma",
    "sim_horizon",
    "sim_step",
    "table_path",
    "variant",
    "x0",
];

/// Raw string settings keyed by canonical name.
#[derive(Debug, Clone, Default)]
pub struct Overrides(BTreeMap<&'static str, String>);

fn canonical(key: &str) -> Option<&'static str> {
    let key = key.trim().replace('-', "_");
    let key = if key == "horizon" { "horizon_years".to_string() } else { key };
    VALID_KEYS.iter().copied().find(|k| *k == key)
}

fn unknown_key(key: &str) -> CliError {
    CliError::Config(format!("unknown key '{key}'; valid keys: {}", VALID_KEYS.join(", ")))
}

impl Overrides {
    pub fn set(&mut self, key: &str, value: impl Into<String>) -> Result<(), CliError> {
        let k = canonical(key).ok_or_else(|| unknown_key(key))?;
        self.0.insert(k, value.into());
        Ok(())
    }

    /// Parses `key=value` lines; blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut out = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("line {}: expected key=value, got '{line}'", i + 1)))?;
            out.set(k, v.trim())?;
        }
        Ok(out)
    }

    /// Entries of `other` replace those of `self`.
    pub fn merged(mut self, other: Overrides) -> Self {
        self.0.extend(other.0);
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(String::as_str)
    }

    fn number(&self, key: &str, default: f64) -> Result<f64, CliError> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse::<f64>()
                .map_err(|_| CliError::Config(format!("{key}: expected a number, got '{v}'"))),
        }
    }

    fn integer(&self, key: &str, default: u64) -> Result<u64, CliError> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse::<u64>()
                .map_err(|_| CliError::Config(format!("{key}: expected a nonnegative integer, got '{v}'"))),
        }
    }

    /// `None` for `auto` or absent.
    fn auto_number(&self, key: &str) -> Result<Option<f64>, CliError> {
        match self.get(key) {
            None | Some("auto") => Ok(None),
            Some(_) => self.number(key, f64::NAN).map(Some),
        }
    }

    pub fn resolve(&self) -> Result<Settings, CliError> {
        let base_age = self.number("base_age", DEFAULT_BASE_AGE)?;
        let limiting_age = self.number("limiting_age", base_age + DEFAULT_LIMITING_AGE_YEARS)?;
        let reference = GompertzMakehamParams::uk_2019();
        Ok(Settings {
            gamma: self.number("gamma", -3.0)?,
            mu: self.number("mu", 0.10)?,
            sigma: self.number("sigma", 0.20)?,
            r: self.number("r", 0.03)?,
            rho: self.auto_number("rho")?,
            variant: self.get("variant").unwrap_or("scaled_trimmed").to_string(),
            kappa: self.auto_number("kappa")?,
            horizon_years: self.number("horizon_years", DEFAULT_HORIZON_YEARS)?,
            table_path: self.get("table_path").map(PathBuf::from),
            a1: self.number("a1", reference.a1)?,
            a2: self.number("a2", reference.a2)?,
            a3: self.number("a3", reference.a3)?,
            base_age,
            limiting_age,
            grid_step: self.number("grid_step", DEFAULT_GRID_STEP)?,
            paths: self.integer("paths", 10_000)? as usize,
            seed: self.integer("seed", 1)?,
            sim_step: self.number("sim_step", DEFAULT_STEP)?,
            sim_horizon: self.number("sim_horizon", 40.0)?,
            x0: self.number("x0", DEFAULT_INITIAL_WEALTH)?,
            out: self.get("out").map(PathBuf::from),
            life_table: self.get("life_table").map(PathBuf::from),
            dump_paths: self.get("dump_paths").map(PathBuf::from),
        })
    }
}

/// Fully resolved settings.
#[derive(Debug, Clone)]
pub struct Settings {
    pub gamma: f64,
    pub mu: f64,
    pub sigma: f64,
    pub r: f64,
    pub rho: Option<f64>,
    pub variant: String,
    pub kappa: Option<f64>,
    pub horizon_years: f64,
    pub table_path: Option<PathBuf>,
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
    pub base_age: f64,
    pub limiting_age: f64,
    pub grid_step: f64,
    pub paths: usize,
    pub seed: u64,
    pub sim_step: f64,
    pub sim_horizon: f64,
    pub x0: f64,
    pub out: Option<PathBuf>,
    pub life_table: Option<PathBuf>,
    pub dump_paths: Option<PathBuf>,
}

impl Settings {
    pub fn market(&self) -> Result<MarketParams, CliError> {
        Ok(MarketParams::new(self.mu, self.sigma, self.r)?)
    }

    pub fn limiting_age_years(&self) -> f64 {
        self.limiting_age - self.base_age
    }

    pub fn mortality(&self) -> Result<GompertzMakehamParams, CliError> {
        Ok(GompertzMakehamParams::with_limiting_age(
            self.a1,
            self.a2,
            self.a3,
            self.limiting_age_years(),
        )?)
    }

    /// The bequest variant with `kappa` left unset when it is `auto`.
    pub fn variant(&self) -> Result<BequestVariant, CliError> {
        let h = self.horizon_years;
        Ok(match self.variant.as_str() {
            "none" => BequestVariant::None,
            "power" => BequestVariant::Power,
            "scaled_power" => BequestVariant::ScaledPower { kappa: self.kappa },
            "trimmed" => BequestVariant::Trimmed { horizon_years: h },
            "scaled_trimmed" => BequestVariant::ScaledTrimmed {
                kappa: self.kappa,
                horizon_years: h,
            },
            "table" => {
                let path = self
                    .table_path
                    .as_ref()
                    .ok_or_else(|| CliError::Config("variant=table needs table_path".into()))?;
                let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
                BequestVariant::Table(BequestTable::parse_csv(&text)?)
            }
            other => {
                return Err(CliError::Config(format!(
                    "variant '{other}' is not one of none, power, scaled_power, trimmed, scaled_trimmed, table"
                )))
            }
        })
    }

    pub fn schedule(&self) -> Result<PreferenceSchedule, CliError> {
        let variant = self.variant()?;
        Ok(match self.rho {
            None => PreferenceSchedule::rate_linked(self.gamma, self.r, variant)?,
            Some(rho) => PreferenceSchedule::new(self.gamma, rho, variant)?,
        })
    }
}

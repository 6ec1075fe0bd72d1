//! Run configuration files.
//!
//! A configuration is a TOML document read as a flat set of keys: nested
//! tables are joined with dots, so `sv.alpha = 2` and `[sv] alpha = 2` are
//! the same key. Unknown keys are rejected.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use abc_smc2::distributions::StableParams;
use abc_smc2::models::{ExampleModel, HawkesKnown, SvKnown};
use abc_smc2::{validate_config, RunConfig, StreamFactory};
use toml::Value;

use crate::CliError;

/// Model choice with every model constant resolved.
#[derive(Clone, Debug, PartialEq)]
pub enum ModelSettings {
    SkewNormal {
        obs_per_step: usize,
        kernel_c: f64,
        pilot_size: usize,
        pilot_seed: u64,
        summary_weights: Option<[f64; 3]>,
    },
    Sv {
        known: SvKnown,
        kernel_c: f64,
    },
    Hawkes {
        known: HawkesKnown,
        kernel_c: f64,
        pilot_size: usize,
        pilot_seed: u64,
    },
}

impl ModelSettings {
    pub fn kind(&self) -> ExampleModel {
        match self {
            Self::SkewNormal { .. } => ExampleModel::SkewNormal,
            Self::Sv { .. } => ExampleModel::StochasticVolatility,
            Self::Hawkes { .. } => ExampleModel::Hawkes,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum DataSource {
    File { data: PathBuf, truth: Option<PathBuf> },
    Simulate { params: Vec<f64>, seed: u64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct LoadedConfig {
    pub run: RunConfig,
    pub model: ModelSettings,
    pub rejuvenation: bool,
    pub data: DataSource,
    /// The model is the Gaussian stochastic volatility case, for which a
    /// grid reference posterior exists.
    pub grid_eligible: bool,
    /// Every key as given, for the manifest.
    pub snapshot: BTreeMap<String, Value>,
}

const COMMON_KEYS: &[&str] = &[
    "model", "n_theta", "n_x", "n_y", "p_acc", "ess_fraction", "seed", "horizon", "rejuvenation",
    "data", "truth", "data_seed",
];
const SKEW_KEYS: &[&str] = &[
    "skew.obs_per_step", "skew.kernel_c", "skew.pilot_size", "skew.pilot_seed",
    "skew.summary_weights", "skew.true_sigma", "skew.true_gamma",
];
const SV_KEYS: &[&str] = &[
    "sv.mu", "sv.sigma_h", "sv.alpha", "sv.beta", "sv.gamma", "sv.delta", "sv.kernel_c",
    "sv.true_theta",
];
const HAWKES_KEYS: &[&str] = &[
    "hawkes.theta0", "hawkes.sigma_l", "hawkes.phi", "hawkes.kernel_c", "hawkes.pilot_size",
    "hawkes.pilot_seed", "hawkes.true_theta1", "hawkes.true_theta2",
];

fn flatten(prefix: &str, table: &toml::Table, out: &mut BTreeMap<String, Value>) {
    for (k, v) in table {
        let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match v {
            Value::Table(t) => flatten(&key, t, out),
            other => {
                out.insert(key, other.clone());
            }
        }
    }
}

struct Keys {
    values: BTreeMap<String, Value>,
}

impl Keys {
    fn err(key: &str, msg: impl std::fmt::Display) -> CliError {
        CliError::Config(format!("{key}: {msg}"))
    }

    fn get(&self, key: &str) -> Option<&Value> {
        self.values.get(key)
    }

    fn required(&self, key: &str) -> Result<&Value, CliError> {
        self.get(key).ok_or_else(|| Self::err(key, "missing required key"))
    }

    fn float_opt(&self, key: &str) -> Result<Option<f64>, CliError> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::Float(f)) => Ok(Some(*f)),
            Some(Value::Integer(i)) => Ok(Some(*i as f64)),
            Some(_) => Err(Self::err(key, "expected a number")),
        }
    }

    fn float(&self, key: &str, default: f64) -> Result<f64, CliError> {
        Ok(self.float_opt(key)?.unwrap_or(default))
    }

    fn required_float(&self, key: &str) -> Result<f64, CliError> {
        self.required(key)?;
        self.float(key, f64::NAN)
    }

    fn int_opt(&self, key: &str) -> Result<Option<i64>, CliError> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::Integer(i)) => Ok(Some(*i)),
            Some(_) => Err(Self::err(key, "expected an integer")),
        }
    }

    fn count(&self, key: &str) -> Result<usize, CliError> {
        let v = self.int_opt(key)?.ok_or_else(|| Self::err(key, "missing required key"))?;
        usize::try_from(v).map_err(|_| Self::err(key, format!("must be >= 1 (got {v})")))
    }

    fn count_or(&self, key: &str, default: usize) -> Result<usize, CliError> {
        match self.int_opt(key)? {
            None => Ok(default),
            Some(v) => usize::try_from(v).map_err(|_| Self::err(key, format!("must be non-negative (got {v})"))),
        }
    }

    fn seed_opt(&self, key: &str) -> Result<Option<u64>, CliError> {
        match self.int_opt(key)? {
            None => Ok(None),
            Some(v) => u64::try_from(v).map(Some).map_err(|_| Self::err(key, "must be a non-negative integer")),
        }
    }

    fn string_opt(&self, key: &str) -> Result<Option<&str>, CliError> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s)),
            Some(_) => Err(Self::err(key, "expected a string")),
        }
    }

    fn bool_or(&self, key: &str, default: bool) -> Result<bool, CliError> {
        match self.get(key) {
            None => Ok(default),
            Some(Value::Boolean(b)) => Ok(*b),
            Some(_) => Err(Self::err(key, "expected true or false")),
        }
    }
}

fn positive(key: &str, v: f64) -> Result<f64, CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Keys::err(key, format!("must be positive (got {v})")))
    }
}

/// Seed of a pilot run when the configuration does not name one.
pub fn default_pilot_seed(seed: u64) -> u64 {
    StreamFactory::new(seed).child(1).seed()
}

/// Seed of simulated data when the configuration does not name one.
pub fn default_data_seed(seed: u64) -> u64 {
    StreamFactory::new(seed).child(2).seed()
}

pub fn parse_config(text: &str, base_dir: &Path) -> Result<LoadedConfig, CliError> {
    let table: toml::Table = text.parse().map_err(|e| CliError::Config(format!("cannot parse config: {e}")))?;
    let mut values = BTreeMap::new();
    flatten("", &table, &mut values);
    let keys = Keys { values };

    let model_name = keys
        .string_opt("model")?
        .ok_or_else(|| Keys::err("model", "missing required key"))?;
    let kind = ExampleModel::parse(model_name).map_err(|e| Keys::err("model", e))?;
    let allowed: Vec<&str> = COMMON_KEYS
        .iter()
        .chain(match kind {
            ExampleModel::SkewNormal => SKEW_KEYS,
            ExampleModel::StochasticVolatility => SV_KEYS,
            ExampleModel::Hawkes => HAWKES_KEYS,
        })
        .copied()
        .collect();
    if let Some(unknown) = keys.values.keys().find(|k| !allowed.contains(&k.as_str())) {
        return Err(Keys::err(unknown, format!("unknown key for model {model_name}")));
    }

    let seed = keys.seed_opt("seed")?.ok_or_else(|| Keys::err("seed", "missing required key"))?;
    let run = RunConfig {
        n_theta: keys.count("n_theta")?,
        n_x: keys.count("n_x")?,
        n_y: keys.count("n_y")?,
        p_acc: keys.required_float("p_acc")?,
        ess_fraction: keys.required_float("ess_fraction")?,
        seed,
        horizon: keys.count("horizon")?,
    };
    if let Some(v) = validate_config(&run).first() {
        return Err(CliError::Config(v.to_string()));
    }

    let pilot_seed = |key: &str| -> Result<u64, CliError> {
        Ok(keys.seed_opt(key)?.unwrap_or_else(|| default_pilot_seed(seed)))
    };
    let (model, truth_keys): (ModelSettings, Vec<&str>) = match kind {
        ExampleModel::SkewNormal => {
            let obs_per_step = keys.count_or("skew.obs_per_step", 100)?;
            if obs_per_step < 2 {
                return Err(Keys::err("skew.obs_per_step", "must be >= 2"));
            }
            let summary_weights = match keys.get("skew.summary_weights") {
                None => None,
                Some(Value::Array(a)) if a.len() == 3 => {
                    let mut w = [0.0; 3];
                    for (slot, v) in w.iter_mut().zip(a) {
                        let f = v.as_float().or_else(|| v.as_integer().map(|i| i as f64));
                        *slot = positive("skew.summary_weights", f.unwrap_or(f64::NAN))?;
                    }
                    Some(w)
                }
                Some(_) => return Err(Keys::err("skew.summary_weights", "expected three numbers")),
            };
            (
                ModelSettings::SkewNormal {
                    obs_per_step,
                    kernel_c: positive("skew.kernel_c", keys.float("skew.kernel_c", 1.0)?)?,
                    pilot_size: keys.count_or("skew.pilot_size", 1000)?,
                    pilot_seed: pilot_seed("skew.pilot_seed")?,
                    summary_weights,
                },
                vec!["skew.true_sigma", "skew.true_gamma"],
            )
        }
        ExampleModel::StochasticVolatility => {
            let d = SvKnown::default();
            let stable = StableParams::new(
                keys.float("sv.alpha", d.stable.alpha)?,
                keys.float("sv.beta", d.stable.beta)?,
                keys.float("sv.gamma", d.stable.gamma)?,
                keys.float("sv.delta", d.stable.delta)?,
            )
            .map_err(|e| Keys::err("sv.alpha", e))?;
            let known = SvKnown {
                mu: keys.float("sv.mu", d.mu)?,
                sigma_h: positive("sv.sigma_h", keys.float("sv.sigma_h", d.sigma_h)?)?,
                stable,
            };
            (
                ModelSettings::Sv { known, kernel_c: positive("sv.kernel_c", keys.float("sv.kernel_c", 0.1)?)? },
                vec!["sv.true_theta"],
            )
        }
        ExampleModel::Hawkes => {
            let d = HawkesKnown::default();
            let known = HawkesKnown {
                theta0: positive("hawkes.theta0", keys.float("hawkes.theta0", d.theta0)?)?,
                sigma_l: positive("hawkes.sigma_l", keys.float("hawkes.sigma_l", d.sigma_l)?)?,
                phi: keys.float("hawkes.phi", d.phi)?,
                interval: d.interval,
            };
            if !(known.phi.abs() < 1.0) {
                return Err(Keys::err("hawkes.phi", "must lie in (-1, 1)"));
            }
            let pilot_size = keys.count_or("hawkes.pilot_size", 10_000)?;
            if pilot_size < 50 {
                return Err(Keys::err("hawkes.pilot_size", "must be >= 50"));
            }
            (
                ModelSettings::Hawkes {
                    known,
                    kernel_c: positive("hawkes.kernel_c", keys.float("hawkes.kernel_c", 0.1)?)?,
                    pilot_size,
                    pilot_seed: pilot_seed("hawkes.pilot_seed")?,
                },
                vec!["hawkes.true_theta1", "hawkes.true_theta2"],
            )
        }
    };

    let data = match keys.string_opt("data")? {
        Some(path) => DataSource::File {
            data: base_dir.join(path),
            truth: keys.string_opt("truth")?.map(|p| base_dir.join(p)),
        },
        None => {
            let mut params = Vec::new();
            for key in &truth_keys {
                params.push(keys.float_opt(key)?.ok_or_else(|| {
                    Keys::err(key, "needed to simulate data when no `data` file is given")
                })?);
            }
            let seed = keys.seed_opt("data_seed")?.unwrap_or_else(|| default_data_seed(seed));
            DataSource::Simulate { params, seed }
        }
    };

    let grid_eligible = matches!(&model, ModelSettings::Sv { known, .. } if known.is_gaussian_case());
    let snapshot = keys.values.clone();
    Ok(LoadedConfig {
        run,
        model,
        rejuvenation: keys.bool_or("rejuvenation", true)?,
        data,
        grid_eligible,
        snapshot,
    })
}

pub fn load_config(path: &Path) -> Result<LoadedConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_config(&text, path.parent().unwrap_or(Path::new(".")))
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = "n_theta = 10\nn_x = 5\nn_y = 2\np_acc = 0.05\ness_fraction = 0.5\nseed = 1\nhorizon = 4\n";

    fn parse(extra: &str) -> Result<LoadedConfig, CliError> {
        parse_config(&format!("{BASE}{extra}"), Path::new("."))
    }

    fn message(r: Result<LoadedConfig, CliError>) -> String {
        match r {
            Err(CliError::Config(m)) => m,
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn minimal_skew_normal_defaults() {
        let c = parse("model = \"skew_normal\"\nskew.true_sigma = 0.25\nskew.true_gamma = 2.0\n").unwrap();
        match c.model {
            ModelSettings::SkewNormal { obs_per_step, .. } => assert_eq!(obs_per_step, 100),
            _ => panic!(),
        }
        assert!(c.rejuvenation);
        assert!(!c.grid_eligible);
        assert!(matches!(c.data, DataSource::Simulate { ref params, .. } if params == &[0.25, 2.0]));
    }

    #[test]
    fn p_acc_out_of_range_names_key() {
        let text = BASE.replace("p_acc = 0.05", "p_acc = 1.5");
        let m = message(parse_config(&format!("{text}model = \"sv\"\nsv.true_theta = 0.5\n"), Path::new(".")));
        assert!(m.contains("p_acc") && m.contains("(0, 1]"), "{m}");
    }

    #[test]
    fn gaussian_sv_is_grid_eligible() {
        let c = parse("model = \"sv\"\nsv.alpha = 2.0\nsv.beta = 0.0\nsv.true_theta = 0.7\n").unwrap();
        assert!(c.grid_eligible);
        let c = parse("model = \"sv\"\nsv.alpha = 1.5\nsv.true_theta = 0.7\n").unwrap();
        assert!(!c.grid_eligible);
    }

    #[test]
    fn nested_tables_flatten() {
        let text = format!("model = \"sv\"\n{BASE}[sv]\nalpha = 2\nbeta = 0\ntrue_theta = 0.7\n");
        let c = parse_config(&text, Path::new(".")).unwrap();
        assert!(c.grid_eligible);
    }

    #[test]
    fn unknown_and_missing_keys() {
        let m = message(parse("model = \"sv\"\nsv.aplha = 2\nsv.true_theta = 0.1\n"));
        assert!(m.contains("sv.aplha"));
        let m = message(parse("model = \"sv\"\nhawkes.theta0 = 2\nsv.true_theta = 0.1\n"));
        assert!(m.contains("hawkes.theta0"));
        let m = message(parse_config("model = \"sv\"\nn_x = 1\n", Path::new(".")));
        assert!(m.contains("missing"));
        let m = message(parse("model = \"garch\"\n"));
        assert!(m.contains("model"));
        let m = message(parse("model = \"sv\"\n"));
        assert!(m.contains("sv.true_theta"));
        let m = message(parse_config(&BASE.replace("n_x = 5", "n_x = 0").replace("seed = 1", "seed = 1\nmodel = \"sv\"\nsv.true_theta = 0.1"), Path::new(".")));
        assert!(m.contains("n_x"), "{m}");
    }

    #[test]
    fn data_file_resolved_against_config_dir() {
        let c = parse_config(
            &format!("{BASE}model = \"sv\"\ndata = \"y.csv\"\n"),
            Path::new("/tmp/run"),
        )
        .unwrap();
        assert_eq!(c.data, DataSource::File { data: PathBuf::from("/tmp/run/y.csv"), truth: None });
    }
}

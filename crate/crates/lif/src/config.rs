//! Flat-keyed runtime configuration for the command-line tools.
//!
//! One schema drives everything: each key works verbatim as a JSON config
//! file entry and as a long command-line flag (`{"loss.theta": 0.05}` and
//! `--loss.theta 0.05` hit the same field). Precedence is defaults, then
//! file, then flags. Unknown keys are rejected rather than ignored so a
//! typo cannot silently run with defaults.
//!
//! Randomness is seeded by the single top-level `seed`; per-subsystem
//! streams are derived from it, so the internal stream seeds are not keys.

use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};

use serde_json::Value;

use crate::cloud::PreprocessConfig;
use crate::error::{Error, Result};
use crate::metrics::MetricsConfig;
use crate::optim::RunConfig;

/// Everything the command-line tools can be told. `Default` equals the
/// library defaults of each subsystem.
#[derive(Debug, Clone, Default)]
pub struct CliConfig {
    pub run: RunConfig,
    pub preprocess: PreprocessConfig,
    pub metrics: MetricsConfig,
    /// Top-level seed; every random stream is derived from it.
    pub seed: u64,
    /// Worker threads for pair-level parallelism; 0 means all cores.
    pub jobs: usize,
    /// Print per-pair progress to stderr.
    pub verbose: bool,
}

/// Value type a key accepts, for help text and error messages.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Float,
    Int,
    Bool,
}

impl Kind {
    pub fn value_name(self) -> &'static str {
        match self {
            Kind::Float => "FLOAT",
            Kind::Int => "INT",
            Kind::Bool => "BOOL",
        }
    }
}

/// One schema entry.
#[derive(Debug, Clone, Copy)]
pub struct ConfigKey {
    pub name: &'static str,
    pub kind: Kind,
    pub doc: &'static str,
}

fn unknown_key(key: &str) -> Error {
    Error::Config {
        msg: format!("unknown config key \"{key}\""),
    }
}

trait ConfigValue: Sized + Display {
    const KIND: Kind;
    fn from_json(key: &str, value: &Value) -> Result<Self>;
}

fn type_error(key: &str, kind: Kind, value: &Value) -> Error {
    Error::Config {
        msg: format!("key \"{key}\" expects a {}, got {value}", kind.value_name()),
    }
}

impl ConfigValue for f64 {
    const KIND: Kind = Kind::Float;
    fn from_json(key: &str, value: &Value) -> Result<Self> {
        value
            .as_f64()
            .ok_or_else(|| type_error(key, Self::KIND, value))
    }
}

impl ConfigValue for u64 {
    const KIND: Kind = Kind::Int;
    fn from_json(key: &str, value: &Value) -> Result<Self> {
        value
            .as_u64()
            .ok_or_else(|| type_error(key, Self::KIND, value))
    }
}

impl ConfigValue for usize {
    const KIND: Kind = Kind::Int;
    fn from_json(key: &str, value: &Value) -> Result<Self> {
        let v = value
            .as_u64()
            .ok_or_else(|| type_error(key, Self::KIND, value))?;
        usize::try_from(v).map_err(|_| type_error(key, Self::KIND, value))
    }
}

impl ConfigValue for bool {
    const KIND: Kind = Kind::Bool;
    fn from_json(key: &str, value: &Value) -> Result<Self> {
        value
            .as_bool()
            .ok_or_else(|| type_error(key, Self::KIND, value))
    }
}

macro_rules! config_schema {
    ($(($name:literal, $ty:ty, $($field:ident).+, $doc:literal)),+ $(,)?) => {
        /// Every recognized key, in declaration order.
        pub const KEYS: &[ConfigKey] = &[
            $(ConfigKey { name: $name, kind: <$ty as ConfigValue>::KIND, doc: $doc }),+
        ];

        impl CliConfig {
            /// Sets one key from a JSON value.
            pub fn set(&mut self, key: &str, value: &Value) -> Result<()> {
                match key {
                    $($name => {
                        self.$($field).+ = <$ty as ConfigValue>::from_json(key, value)?;
                        Ok(())
                    })+
                    _ => Err(unknown_key(key)),
                }
            }

            /// Current value of one key, rendered the way a config file
            /// would spell it.
            pub fn get(&self, key: &str) -> Option<String> {
                match key {
                    $($name => Some(self.$($field).+.to_string()),)+
                    _ => None,
                }
            }
        }
    };
}

config_schema! {
    ("seed", u64, seed, "top-level seed all random streams derive from"),
    ("jobs", usize, jobs, "worker threads for pair-level parallelism (0 = all cores)"),
    ("verbose", bool, verbose, "print per-pair progress to stderr"),
    ("preprocess.ground_height", f64, preprocess.ground_height, "points at or below this height are dropped as ground"),
    ("preprocess.max_range", f64, preprocess.max_range, "points beyond this horizontal range are dropped"),
    ("icp.max_iterations", usize, run.icp.max_iterations, "iteration cap for ego-motion alignment"),
    ("icp.convergence_tol", f64, run.icp.convergence_tol, "stop once mean correspondence distance changes less than this"),
    ("icp.max_correspondence_dist", f64, run.icp.max_correspondence_dist, "alignment pairs farther apart than this are ignored"),
    ("cluster.radius", f64, run.cluster.radius, "connectivity radius for hard clustering (0 = singletons)"),
    ("cluster.horizon", usize, run.cluster.horizon, "frames per spatio-temporal window, including the target"),
    ("cluster.k", usize, run.cluster.k, "neighbors per soft cluster"),
    ("cluster.merge_vote_fraction", f64, run.cluster.merge_vote_fraction, "vote fraction one target cluster needs to trigger a merge"),
    ("cluster.merge_dist_cap", f64, run.cluster.merge_dist_cap, "warped points farther than this from their match do not vote"),
    ("loss.alpha", f64, run.loss.alpha, "distance term weight"),
    ("loss.beta", f64, run.loss.beta, "hard rigidity term weight"),
    ("loss.gamma", f64, run.loss.gamma, "soft rigidity term weight"),
    ("loss.theta", f64, run.loss.theta, "scale of the squared distortion in the rigidity reward, m^2"),
    ("loss.reward_floor", f64, run.loss.reward_floor, "floor applied to -log arguments"),
    ("loss.edge_budget", usize, run.loss.edge_budget, "edges evaluated per hard cluster before subsampling"),
    ("loss.squared_distance", bool, run.loss.squared_distance, "square the Chamfer distances"),
    ("run.max_iterations", usize, run.max_iterations, "gradient step cap per pair"),
    ("run.convergence_tol", f64, run.convergence_tol, "relative loss-trend change that counts as converged"),
    ("run.convergence_window", usize, run.convergence_window, "loss samples per trend window"),
    ("run.merge_period", usize, run.merge_period, "iterations between flow-guided merges"),
    ("run.enable_hard", bool, run.enable_hard, "keep the hard rigidity term"),
    ("run.enable_soft", bool, run.enable_soft, "keep the soft rigidity term"),
    ("run.enable_merge", bool, run.enable_merge, "keep the flow-guided cluster merge"),
    ("run.reset_flow_on_merge", bool, run.reset_flow_on_merge, "restart flow and optimizer state after a merge"),
    ("metrics.dynamic_threshold", f64, metrics.dynamic_threshold, "ground-truth displacement above which a point is dynamic, m/frame"),
    ("metrics.homogeneous_angle", bool, metrics.homogeneous_angle, "measure angle error on homogenized 4-vectors"),
    ("metrics.weighted_threeway", bool, metrics.weighted_threeway, "weight the three-way average by bucket size"),
}

impl CliConfig {
    /// Sets one key from its command-line spelling. Values use JSON
    /// syntax, which for the supported types is the plain spelling
    /// (`0.05`, `16`, `true`).
    pub fn set_str(&mut self, key: &str, raw: &str) -> Result<()> {
        let value: Value = serde_json::from_str(raw).map_err(|_| Error::Config {
            msg: format!("key \"{key}\": \"{raw}\" is not a number or bool"),
        })?;
        self.set(key, &value)
    }

    /// Applies a JSON config file on top of the current values. The file
    /// must be a single flat object; every key must be known.
    pub fn load_file(&mut self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let parsed: Value = serde_json::from_str(&text).map_err(|e| Error::Config {
            msg: format!("{}: {e}", path.display()),
        })?;
        let object = parsed.as_object().ok_or_else(|| Error::Config {
            msg: format!("{}: top level must be an object", path.display()),
        })?;
        for (key, value) in object {
            self.set(key, value).map_err(|e| Error::Config {
                msg: format!("{}: {e}", path.display()),
            })?;
        }
        Ok(())
    }

    /// Builds a config from the standard sources: defaults, then the
    /// config file (explicit path, else the `LIF_CONFIG` environment
    /// variable), then flag overrides, in that order.
    pub fn resolve<'a>(
        file: Option<&Path>,
        overrides: impl IntoIterator<Item = (&'a str, &'a str)>,
    ) -> Result<CliConfig> {
        let mut config = CliConfig::default();
        let fallback = std::env::var_os("LIF_CONFIG").map(PathBuf::from);
        if let Some(path) = file.or(fallback.as_deref()) {
            config.load_file(path)?;
        }
        for (key, raw) in overrides {
            config.set_str(key, raw)?;
        }
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.run.validate()?;
        self.metrics.validate()?;
        let pp = &self.preprocess;
        if !pp.ground_height.is_finite() || !pp.max_range.is_finite() || pp.max_range <= 0.0 {
            return Err(Error::Config {
                msg: "preprocess bounds must be finite with max_range > 0".into(),
            });
        }
        Ok(())
    }

    /// Full configuration as a flat JSON object, loadable by `load_file`.
    /// Keys appear in schema order.
    pub fn dump(&self) -> String {
        let mut out = String::from("{\n");
        for (i, key) in KEYS.iter().enumerate() {
            let value = self.get(key.name).expect("schema key");
            let sep = if i + 1 == KEYS.len() { "" } else { "," };
            out.push_str(&format!("  \"{}\": {}{}\n", key.name, value, sep));
        }
        out.push('}');
        out
    }
}

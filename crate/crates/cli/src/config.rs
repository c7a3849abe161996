//! Flat `key = value` run configuration.
//!
//! Values come from built-in defaults, then the config file, then
//! command-line flags; later sources win. Unknown keys are rejected.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use gdnet::data::SyntheticSpec;
use gdnet::train::{TrainConfig, ViewPolicy};
use gdnet::GdNetConfig;

/// Every recognised key, in echo order.
pub const KEYS: &[&str] = &[
    "seed",
    "data",
    "out",
    "weights",
    "norm",
    "n_samples",
    "benign_fraction",
    "image_size",
    "max_diameter",
    "noise_std",
    "widths",
    "dropout",
    "preset",
    "epochs",
    "batch_size",
    "lr_initial",
    "lr_after",
    "switch_epoch",
    "views",
    "k",
    "instances",
    "network_instances",
    "probe_normalize",
];

#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

/// Raw key/value pairs after layering.
#[derive(Clone, Debug, Default)]
pub struct RawConfig {
    values: BTreeMap<String, String>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut raw = Self::default();
        for (no, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| ConfigError(format!("line {}: expected key = value", no + 1)))?;
            raw.set(k.trim(), v.trim())
                .map_err(|e| ConfigError(format!("line {}: {e}", no + 1)))?;
        }
        Ok(raw)
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) -> Result<(), ConfigError> {
        if !KEYS.contains(&key) {
            return Err(ConfigError(format!("unknown key {key:?}")));
        }
        self.values.insert(key.to_string(), value.into());
        Ok(())
    }

    fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, ConfigError> {
        self.values
            .get(key)
            .filter(|v| !v.is_empty())
            .map(|v| {
                v.parse::<T>()
                    .map_err(|_| ConfigError(format!("bad value {v:?} for {key}")))
            })
            .transpose()
    }

    fn list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>, ConfigError> {
        self.values
            .get(key)
            .filter(|v| !v.is_empty())
            .map(|v| {
                v.split(',')
                    .map(|x| x.trim().parse::<T>())
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|_| ConfigError(format!("bad list {v:?} for {key}")))
            })
            .transpose()
    }
}

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub command: String,
    pub seed: u64,
    pub data: Option<PathBuf>,
    pub out: PathBuf,
    pub weights: Option<PathBuf>,
    pub norm: Option<PathBuf>,
    pub spec: SyntheticSpec,
    pub net: GdNetConfig,
    pub preset: String,
    pub train: TrainConfig,
    pub k: usize,
    pub instances: usize,
    pub network_instances: usize,
    pub probe_normalize: bool,
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    pub fn resolve(command: &str, raw: &RawConfig) -> Result<Self, ConfigError> {
        let seed = raw.get("seed")?.unwrap_or(0);

        let mut spec = SyntheticSpec {
            seed,
            ..SyntheticSpec::default()
        };
        let mut net = GdNetConfig::default();
        if let Some(n) = raw.get("n_samples")? {
            spec.n_samples = n;
        }
        if let Some(f) = raw.get("benign_fraction")? {
            spec.benign_fraction = f;
        }
        if let Some(s) = raw.get("image_size")? {
            spec.image_size = s;
            net.image_size = s;
        }
        if let Some(d) = raw.get("max_diameter")? {
            spec.max_diameter = d;
        }
        if let Some(n) = raw.get("noise_std")? {
            spec.noise_std = n;
        }
        if let Some(w) = raw.list("widths")? {
            net.dropout = vec![0.0; w.len()];
            net.branch_widths = w;
        }
        if let Some(d) = raw.list("dropout")? {
            net.dropout = d;
        }
        net.validate().map_err(|e| ConfigError(e.to_string()))?;

        let preset: String = raw.get("preset")?.unwrap_or_else(|| "desk".into());
        let mut train = match preset.as_str() {
            "desk" => TrainConfig::desk(),
            "full" => TrainConfig::full(),
            other => return Err(ConfigError(format!("unknown preset {other:?} (desk, full)"))),
        };
        train.seed = seed;
        if let Some(e) = raw.get("epochs")? {
            train = train.with_epochs(e);
        }
        if let Some(b) = raw.get("batch_size")? {
            train.batch_size = b;
        }
        if let Some(lr) = raw.get("lr_initial")? {
            train.lr_initial = lr;
        }
        if let Some(lr) = raw.get("lr_after")? {
            train.lr_after = lr;
        }
        if let Some(s) = raw.get("switch_epoch")? {
            train.switch_epoch = s;
        }
        if let Some(v) = raw.get::<String>("views")? {
            train.views = match v.as_str() {
                "all" => ViewPolicy::All,
                "one" => ViewPolicy::OnePerEpoch,
                other => return Err(ConfigError(format!("unknown views {other:?} (all, one)"))),
            };
        }
        train.validate().map_err(|e| ConfigError(e.to_string()))?;

        Ok(Self {
            command: command.to_string(),
            seed,
            data: raw.get("data")?,
            out: raw.get("out")?.unwrap_or_else(|| PathBuf::from("out")),
            weights: raw.get("weights")?,
            norm: raw.get("norm")?,
            spec,
            net,
            preset,
            train,
            k: raw.get("k")?.unwrap_or(10),
            instances: raw.get("instances")?.unwrap_or(50),
            network_instances: raw.get("network_instances")?.unwrap_or(5),
            probe_normalize: raw.get("probe_normalize")?.unwrap_or(true),
        })
    }

    /// Weights path, defaulting to `weights.bin` in the output directory.
    pub fn weights_path(&self) -> PathBuf {
        self.weights.clone().unwrap_or_else(|| self.out.join("weights.bin"))
    }

    /// Normalization sidecar, defaulting to `norm.csv` beside the weights.
    pub fn norm_path(&self) -> PathBuf {
        self.norm.clone().unwrap_or_else(|| {
            let w = self.weights_path();
            w.parent().unwrap_or(Path::new(".")).join("norm.csv")
        })
    }

    /// Every key with its resolved value, one `key = value` per line.
    pub fn echo(&self) -> String {
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        let views = match self.train.views {
            ViewPolicy::All => "all",
            ViewPolicy::OnePerEpoch => "one",
        };
        let pairs: Vec<(&str, String)> = vec![
            ("seed", self.seed.to_string()),
            ("data", path(&self.data)),
            ("out", self.out.display().to_string()),
            ("weights", path(&self.weights)),
            ("norm", path(&self.norm)),
            ("n_samples", self.spec.n_samples.to_string()),
            ("benign_fraction", self.spec.benign_fraction.to_string()),
            ("image_size", self.spec.image_size.to_string()),
            ("max_diameter", self.spec.max_diameter.to_string()),
            ("noise_std", self.spec.noise_std.to_string()),
            ("widths", join(&self.net.branch_widths)),
            ("dropout", join(&self.net.dropout)),
            ("preset", self.preset.clone()),
            ("epochs", self.train.epochs.to_string()),
            ("batch_size", self.train.batch_size.to_string()),
            ("lr_initial", self.train.lr_initial.to_string()),
            ("lr_after", self.train.lr_after.to_string()),
            ("switch_epoch", self.train.switch_epoch.to_string()),
            ("views", views.to_string()),
            ("k", self.k.to_string()),
            ("instances", self.instances.to_string()),
            ("network_instances", self.network_instances.to_string()),
            ("probe_normalize", self.probe_normalize.to_string()),
        ];
        debug_assert_eq!(pairs.len(), KEYS.len());
        let mut s = format!("# gdnet {}\ncommand = {}\n", env!("CARGO_PKG_VERSION"), self.command);
        for (k, v) in pairs {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layering_and_unknown_keys() {
        let mut raw = RawConfig::parse("# comment\nseed = 4\nepochs=3 # inline\n").unwrap();
        raw.set("batch_size", "8").unwrap();
        let c = RunConfig::resolve("train", &raw).unwrap();
        assert_eq!((c.seed, c.train.epochs, c.train.batch_size), (4, 3, 8));
        assert_eq!(c.train.switch_epoch, 1);
        assert_eq!(c.train.seed, 4);
        assert!(RawConfig::parse("colour = red").is_err());
        assert!(RawConfig::parse("seed 4").is_err());
    }

    #[test]
    fn bad_values_rejected() {
        let raw = RawConfig::parse("epochs = many").unwrap();
        assert!(RunConfig::resolve("train", &raw).is_err());
        let raw = RawConfig::parse("widths = 4,4\ndropout = 0.1").unwrap();
        assert!(RunConfig::resolve("train", &raw).is_err());
        let raw = RawConfig::parse("preset = huge").unwrap();
        assert!(RunConfig::resolve("train", &raw).is_err());
    }

    #[test]
    fn echo_lists_every_key() {
        let c = RunConfig::resolve("cv", &RawConfig::default()).unwrap();
        let echo = c.echo();
        for k in KEYS {
            assert!(echo.lines().any(|l| l.starts_with(&format!("{k} = "))), "{k}");
        }
        let back = RawConfig::parse(&echo.replace("command = cv\n", "")).unwrap();
        let again = RunConfig::resolve("cv", &back).unwrap();
        assert_eq!(again.echo(), echo);
    }
}

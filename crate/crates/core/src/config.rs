//! Run configuration: flat `key = value` text with `#` comments.
//!
//! Every key is optional and falls back to its default; unknown or repeated
//! keys are rejected and every value is validated on load.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::ModelDims;
use crate::objective::DgibConfig;
use crate::trainer::{ForwardConfig, TrainConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub t_hops: usize,
    pub k: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub d0: usize,
    pub d1: usize,
    pub d2: usize,
    pub d3: usize,
    pub d4: usize,
    pub tau: f64,
    pub lr: f64,
    pub epochs: usize,
    pub batch: usize,
    pub cutoffs: Vec<usize>,
    pub seed: Option<u64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            t_hops: 2,
            k: 3,
            beta1: 1e-4,
            beta2: 1e-4,
            d0: 16,
            d1: 16,
            d2: 6,
            d3: 6,
            d4: 6,
            tau: 1.0,
            lr: 0.005,
            epochs: 5,
            batch: 16,
            cutoffs: vec![10, 50],
            seed: None,
        }
    }
}

pub const KEYS: [&str; 15] = [
    "t_hops", "K", "beta1", "beta2", "d0", "d1", "d2", "d3", "d4", "tau", "lr", "epochs", "batch", "cutoffs",
    "seed",
];

fn parse_value<T: std::str::FromStr>(key: &str, value: &str, line: usize) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| Error::Config(format!("line {line}: `{key}` = `{value}`: {e}")))
}

/// Comma-separated positive integers, e.g. `10,50`.
pub fn parse_cutoffs(text: &str) -> Result<Vec<usize>> {
    let cutoffs = text
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<usize>()
                .map_err(|e| Error::Config(format!("cutoff `{}`: {e}", s.trim())))
        })
        .collect::<Result<Vec<_>>>()?;
    if cutoffs.is_empty() || cutoffs.contains(&0) {
        return Err(Error::Config("cutoffs must be positive integers".into()));
    }
    Ok(cutoffs)
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut seen: Vec<String> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {line}: expected key = value")))?;
            let (key, value) = (key.trim(), value.trim());
            if seen.iter().any(|k| k == key) {
                return Err(Error::Config(format!("line {line}: duplicate key `{key}`")));
            }
            match key {
                "t_hops" => cfg.t_hops = parse_value(key, value, line)?,
                "K" => cfg.k = parse_value(key, value, line)?,
                "beta1" => cfg.beta1 = parse_value(key, value, line)?,
                "beta2" => cfg.beta2 = parse_value(key, value, line)?,
                "d0" => cfg.d0 = parse_value(key, value, line)?,
                "d1" => cfg.d1 = parse_value(key, value, line)?,
                "d2" => cfg.d2 = parse_value(key, value, line)?,
                "d3" => cfg.d3 = parse_value(key, value, line)?,
                "d4" => cfg.d4 = parse_value(key, value, line)?,
                "tau" => cfg.tau = parse_value(key, value, line)?,
                "lr" => cfg.lr = parse_value(key, value, line)?,
                "epochs" => cfg.epochs = parse_value(key, value, line)?,
                "batch" => cfg.batch = parse_value(key, value, line)?,
                "cutoffs" => cfg.cutoffs = parse_cutoffs(value)?,
                "seed" => cfg.seed = Some(parse_value(key, value, line)?),
                other => {
                    return Err(Error::Config(format!(
                        "line {line}: unknown key `{other}` (known: {})",
                        KEYS.join(", ")
                    )))
                }
            }
            seen.push(key.to_string());
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("K", self.k),
            ("d0", self.d0),
            ("d1", self.d1),
            ("d2", self.d2),
            ("d3", self.d3),
            ("d4", self.d4),
            ("epochs", self.epochs),
            ("batch", self.batch),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("`{name}` must be >= 1")));
        }
        for (name, v) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!(
                    "`{name}` must be finite and >= 0, got {v}"
                )));
            }
        }
        for (name, v) in [("tau", self.tau), ("lr", self.lr)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("`{name}` must be finite and > 0, got {v}")));
            }
        }
        if self.cutoffs.is_empty() || self.cutoffs.contains(&0) {
            return Err(Error::Config("cutoffs must be positive integers".into()));
        }
        Ok(())
    }

    /// Canonical text form; parses back to an equal config.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let cutoffs: Vec<String> = self.cutoffs.iter().map(usize::to_string).collect();
        let _ = writeln!(s, "t_hops = {}", self.t_hops);
        let _ = writeln!(s, "K = {}", self.k);
        let _ = writeln!(s, "beta1 = {:e}", self.beta1);
        let _ = writeln!(s, "beta2 = {:e}", self.beta2);
        for (name, v) in [
            ("d0", self.d0),
            ("d1", self.d1),
            ("d2", self.d2),
            ("d3", self.d3),
            ("d4", self.d4),
        ] {
            let _ = writeln!(s, "{name} = {v}");
        }
        let _ = writeln!(s, "tau = {}", self.tau);
        let _ = writeln!(s, "lr = {}", self.lr);
        let _ = writeln!(s, "epochs = {}", self.epochs);
        let _ = writeln!(s, "batch = {}", self.batch);
        let _ = writeln!(s, "cutoffs = {}", cutoffs.join(","));
        if let Some(seed) = self.seed {
            let _ = writeln!(s, "seed = {seed}");
        }
        s
    }

    pub fn dims(&self) -> ModelDims {
        ModelDims {
            d0: self.d0,
            d1: self.d1,
            d2: self.d2,
            d3: self.d3,
            d4: self.d4,
            k: self.k,
            ..ModelDims::default()
        }
    }

    pub fn forward(&self) -> ForwardConfig {
        ForwardConfig {
            tau: self.tau,
            dgib: DgibConfig {
                beta1: self.beta1,
                beta2: self.beta2,
                k: self.k,
            },
            ..ForwardConfig::default()
        }
    }

    /// Training settings; `seed` overrides the configured one.
    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            lr: self.lr,
            epochs: self.epochs,
            batch_size: self.batch,
            seed,
            t_hops: self.t_hops,
            forward: self.forward(),
        }
    }

    /// Errors when the widths disagree with an existing model.
    pub fn check_dims(&self, dims: &ModelDims) -> Result<()> {
        let ours = self.dims();
        let pairs = [
            ("d0", ours.d0, dims.d0),
            ("d1", ours.d1, dims.d1),
            ("d2", ours.d2, dims.d2),
            ("d3", ours.d3, dims.d3),
            ("d4", ours.d4, dims.d4),
            ("K", ours.k, dims.k),
        ];
        match pairs.iter().find(|(_, a, b)| a != b) {
            Some((name, a, b)) => Err(Error::Shape(format!("config {name} = {a} but the model has {b}"))),
            None => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_gives_defaults() {
        assert_eq!(RunConfig::parse("").unwrap(), RunConfig::default());
        assert_eq!(
            RunConfig::parse("# only a comment\n\n").unwrap(),
            RunConfig::default()
        );
    }

    #[test]
    fn overrides_and_comments() {
        let cfg =
            RunConfig::parse("K = 2  # two explanations\nlr=0.01\ncutoffs = 5, 20\nseed = 7\n").unwrap();
        assert_eq!(cfg.k, 2);
        assert_eq!(cfg.lr, 0.01);
        assert_eq!(cfg.cutoffs, vec![5, 20]);
        assert_eq!(cfg.seed, Some(7));
    }

    #[test]
    fn rejects_unknown_duplicate_and_invalid() {
        assert!(RunConfig::parse("alpha = 1").is_err());
        assert!(RunConfig::parse("K = 2\nK = 3").is_err());
        assert!(RunConfig::parse("K = 0").is_err());
        assert!(RunConfig::parse("lr = -1").is_err());
        assert!(RunConfig::parse("beta2 = nan").is_err());
        assert!(RunConfig::parse("cutoffs = 10,0").is_err());
        assert!(RunConfig::parse("K").is_err());
        assert!(RunConfig::parse("d0 = x").is_err());
    }

    #[test]
    fn text_round_trip() {
        let cfg = RunConfig {
            k: 2,
            beta2: 0.0,
            seed: Some(3),
            cutoffs: vec![1, 2, 3],
            ..RunConfig::default()
        };
        assert_eq!(RunConfig::parse(&cfg.to_text()).unwrap(), cfg);
        assert_eq!(
            RunConfig::parse(&RunConfig::default().to_text()).unwrap(),
            RunConfig::default()
        );
    }

    #[test]
    fn dimension_mismatch_is_a_shape_error() {
        let cfg = RunConfig::default();
        let dims = ModelDims { d3: 4, ..cfg.dims() };
        assert!(matches!(cfg.check_dims(&dims), Err(Error::Shape(_))));
        assert!(cfg.check_dims(&cfg.dims()).is_ok());
    }
}

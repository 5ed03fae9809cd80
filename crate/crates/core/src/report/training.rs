//! `key=value` training configuration handed to the external trainer.

use std::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const TRAINING_KEYS: [&str; 8] = [
    "optimizer",
    "initial_lr",
    "momentum",
    "weight_decay",
    "epochs",
    "batch_size",
    "image_size",
    "pretrained_weights",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub optimizer: String,
    pub initial_lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub epochs: u32,
    pub batch_size: u32,
    pub image_size: u32,
    pub pretrained_weights: String,
}

impl TrainingConfig {
    /// SGD, lr 1e-2, momentum 0.937, weight decay 5e-4, 100 epochs, batch 16,
    /// starting from COCO-pretrained weights.
    pub fn reference_default() -> Self {
        TrainingConfig {
            optimizer: "sgd".into(),
            initial_lr: 0.01,
            momentum: 0.937,
            weight_decay: 0.0005,
            epochs: 100,
            batch_size: 16,
            image_size: 640,
            pretrained_weights: "coco2017".into(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [self.initial_lr, self.momentum, self.weight_decay];
        if positive.iter().any(|v| !v.is_finite() || *v <= 0.0) {
            return Err(Error::Config(
                "initial_lr, momentum and weight_decay must be positive".into(),
            ));
        }
        if self.epochs == 0 || self.batch_size == 0 || self.image_size == 0 {
            return Err(Error::Config(
                "epochs, batch_size and image_size must be positive".into(),
            ));
        }
        if self.optimizer.trim().is_empty() || self.pretrained_weights.trim().is_empty() {
            return Err(Error::Config("optimizer and pretrained_weights must be set".into()));
        }
        Ok(())
    }

    /// Applies one `key=value` assignment.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = |what: &str| Error::Config(format!("{key}={value}: expected {what}"));
        let value = value.trim();
        match key.trim() {
            "optimizer" => self.optimizer = value.to_string(),
            "initial_lr" => self.initial_lr = value.parse().map_err(|_| bad("a number"))?,
            "momentum" => self.momentum = value.parse().map_err(|_| bad("a number"))?,
            "weight_decay" => self.weight_decay = value.parse().map_err(|_| bad("a number"))?,
            "epochs" => self.epochs = value.parse().map_err(|_| bad("a positive integer"))?,
            "batch_size" => self.batch_size = value.parse().map_err(|_| bad("a positive integer"))?,
            "image_size" => self.image_size = value.parse().map_err(|_| bad("a positive integer"))?,
            "pretrained_weights" => self.pretrained_weights = value.to_string(),
            other => return Err(Error::Config(format!("unknown key '{other}'"))),
        }
        Ok(())
    }

    /// Applies `key=value` overrides on top of `self`, then validates.
    pub fn with_overrides<'a>(mut self, overrides: impl IntoIterator<Item = &'a str>) -> Result<Self> {
        for o in overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override '{o}' is not key=value")))?;
            self.set(k, v)?;
        }
        self.validate()?;
        Ok(self)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "optimizer={}", self.optimizer);
        let _ = writeln!(out, "initial_lr={}", self.initial_lr);
        let _ = writeln!(out, "momentum={}", self.momentum);
        let _ = writeln!(out, "weight_decay={}", self.weight_decay);
        let _ = writeln!(out, "epochs={}", self.epochs);
        let _ = writeln!(out, "batch_size={}", self.batch_size);
        let _ = writeln!(out, "image_size={}", self.image_size);
        let _ = writeln!(out, "pretrained_weights={}", self.pretrained_weights);
        out
    }

    /// Parses the `key=value` form; every key must appear exactly once.
    /// Blank lines and `#` comments are ignored.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = TrainingConfig::reference_default();
        let mut seen = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key=value", i + 1)))?;
            let k = k.trim();
            if seen.contains(&k) {
                return Err(Error::Config(format!("line {}: '{k}' repeated", i + 1)));
            }
            cfg.set(k, v)?;
            seen.push(k);
        }
        if let Some(missing) = TRAINING_KEYS.iter().find(|k| !seen.contains(k)) {
            return Err(Error::Config(format!("missing key '{missing}'")));
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_text() {
        let text = TrainingConfig::reference_default().to_text();
        for line in [
            "optimizer=sgd",
            "initial_lr=0.01",
            "momentum=0.937",
            "weight_decay=0.0005",
            "epochs=100",
            "batch_size=16",
        ] {
            assert!(text.lines().any(|l| l == line), "missing {line} in\n{text}");
        }
        assert_eq!(TrainingConfig::parse(&text).unwrap(), TrainingConfig::reference_default());
    }

    #[test]
    fn overrides() {
        let cfg = TrainingConfig::reference_default().with_overrides(["epochs=1"]).unwrap();
        assert_eq!(cfg.epochs, 1);
        assert_eq!(cfg.momentum, 0.937);
        assert!(TrainingConfig::reference_default().with_overrides(["batch_size=0"]).is_err());
        assert!(TrainingConfig::reference_default().with_overrides(["colour=red"]).is_err());
        assert!(TrainingConfig::reference_default().with_overrides(["momentum"]).is_err());
        assert!(TrainingConfig::reference_default().with_overrides(["initial_lr=-1"]).is_err());
    }

    #[test]
    fn parse_rejects_missing_or_repeated_keys() {
        assert!(TrainingConfig::parse("optimizer=sgd\n").is_err());
        let text = TrainingConfig::reference_default().to_text() + "epochs=3\n";
        assert!(TrainingConfig::parse(&text).is_err());
    }
}

//! Layered run configuration: built-in defaults, then a `key = value` file,
//! then individual overrides.
//!
//! ```text
//! # comment
//! seed = 3
//! tracker.head_channels = 32
//! loss.beta = 0
//! loss.scheme_a = anchor:0.7
//! ```
//!
//! Unknown keys are errors.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evalbench::VotConfig;
use crate::geometry::{AnchorGridConfig, MatchScheme};
use crate::losses::Rpn2tConfig;
use crate::netspec::{DistillConfig, Network, NetworkSpec};
use crate::tensor::{Rng, WeightSet};
use crate::tracker::TrackerConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackboneConfig {
    /// Built-in network preset (see [`NetworkSpec::preset`]).
    pub preset: String,
    /// Seed for random weights when no weights file is given.
    pub init_seed: u64,
}

impl Default for BackboneConfig {
    fn default() -> Self {
        Self {
            preset: "tiny-student".into(),
            init_seed: 0,
        }
    }
}

impl BackboneConfig {
    /// The preset network with `weights` if given, otherwise seeded random weights.
    pub fn build(&self, weights: Option<WeightSet>) -> Result<Network> {
        let spec = NetworkSpec::preset(&self.preset)?;
        match weights {
            Some(w) => Network::new(spec, w),
            None => Network::init(spec, &mut Rng::new(self.init_seed)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub seed: u64,
    pub backbone: BackboneConfig,
    pub tracker: TrackerConfig,
    pub loss: Rpn2tConfig,
    pub anchors: AnchorGridConfig,
    pub vot: VotConfig,
    pub distill: DistillConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            backbone: BackboneConfig::default(),
            tracker: TrackerConfig::default(),
            loss: Rpn2tConfig::default(),
            anchors: AnchorGridConfig::default(),
            vot: VotConfig::default(),
            distill: DistillConfig::default(),
        }
    }
}

/// Parsing and printing of a single config value.
trait ConfigValue: Sized {
    fn parse_value(s: &str) -> std::result::Result<Self, String>;
    fn render(&self) -> String;
}

macro_rules! plain_value {
    ($($t:ty),*) => {$(
        impl ConfigValue for $t {
            fn parse_value(s: &str) -> std::result::Result<Self, String> {
                s.parse().map_err(|e| format!("{e}"))
            }
            fn render(&self) -> String {
                self.to_string()
            }
        }
    )*};
}

plain_value!(usize, u32, u64, f32, f64, String);

impl ConfigValue for MatchScheme {
    fn parse_value(s: &str) -> std::result::Result<Self, String> {
        s.parse().map_err(|e: Error| e.to_string())
    }
    fn render(&self) -> String {
        self.to_string()
    }
}

impl ConfigValue for [f32; 3] {
    fn parse_value(s: &str) -> std::result::Result<Self, String> {
        let v: Vec<f32> = s
            .split(',')
            .map(|p| p.trim().parse::<f32>().map_err(|e| e.to_string()))
            .collect::<std::result::Result<_, _>>()?;
        v.try_into().map_err(|_| "expected three comma-separated numbers".to_string())
    }
    fn render(&self) -> String {
        format!("{},{},{}", self[0], self[1], self[2])
    }
}

macro_rules! config_keys {
    ($($key:literal => $($field:ident).+;)*) => {
        /// Every key accepted in a config file, in canonical order.
        pub const KEYS: &[&str] = &[$($key),*];

        fn set_key(cfg: &mut RunConfig, key: &str, value: &str) -> Result<()> {
            match key {
                $($key => {
                    cfg.$($field).+ = ConfigValue::parse_value(value)
                        .map_err(|e| Error::Config(format!("{key} = {value}: {e}")))?;
                })*
                _ => return Err(Error::Config(format!("unknown config key `{key}`"))),
            }
            Ok(())
        }

        fn get_key(cfg: &RunConfig, key: &str) -> Option<String> {
            match key {
                $($key => Some(cfg.$($field).+.render()),)*
                _ => None,
            }
        }
    };
}

config_keys! {
    "seed" => seed;
    "backbone.preset" => backbone.preset;
    "backbone.init_seed" => backbone.init_seed;
    "tracker.n_pos_init" => tracker.n_pos_init;
    "tracker.n_neg_init" => tracker.n_neg_init;
    "tracker.init_iters" => tracker.init_iters;
    "tracker.n_candidates" => tracker.n_candidates;
    "tracker.trans_sigma" => tracker.trans_sigma;
    "tracker.scale_step" => tracker.scale_step;
    "tracker.scale_sigma" => tracker.scale_sigma;
    "tracker.pos_iou" => tracker.pos_iou;
    "tracker.neg_iou" => tracker.neg_iou;
    "tracker.success_threshold" => tracker.success_threshold;
    "tracker.short_memory" => tracker.short_memory;
    "tracker.long_memory" => tracker.long_memory;
    "tracker.long_interval" => tracker.long_interval;
    "tracker.update_iters" => tracker.update_iters;
    "tracker.per_frame_pos" => tracker.per_frame_pos;
    "tracker.per_frame_neg" => tracker.per_frame_neg;
    "tracker.minibatch_pos" => tracker.minibatch_pos;
    "tracker.minibatch_neg" => tracker.minibatch_neg;
    "tracker.hard_neg_pool" => tracker.hard_neg_pool;
    "tracker.lr_init" => tracker.lr_init;
    "tracker.lr_update" => tracker.lr_update;
    "tracker.momentum" => tracker.momentum;
    "tracker.weight_decay" => tracker.weight_decay;
    "tracker.head_channels" => tracker.head_channels;
    "tracker.pixel_mean" => tracker.pixel_mean;
    "tracker.failure_expand" => tracker.failure_expand;
    "tracker.top_k" => tracker.top_k;
    "tracker.pos_trans_sigma" => tracker.pos_trans_sigma;
    "tracker.neg_trans_sigma" => tracker.neg_trans_sigma;
    "loss.alpha" => loss.alpha;
    "loss.beta" => loss.beta;
    "loss.scheme_a" => loss.scheme_a;
    "loss.scheme_q" => loss.scheme_q;
    "anchors.patch_size" => anchors.patch_size;
    "anchors.grid_size" => anchors.grid_size;
    "anchors.stride" => anchors.stride;
    "anchors.anchor_side" => anchors.anchor_side;
    "vot.reset_delay" => vot.reset_delay;
    "vot.burnin" => vot.burnin;
    "vot.eao_lo" => vot.eao_lo;
    "vot.eao_hi" => vot.eao_hi;
    "distill.lr" => distill.lr;
    "distill.momentum" => distill.momentum;
    "distill.weight_decay" => distill.weight_decay;
    "distill.iterations" => distill.iterations;
    "distill.batch_size" => distill.batch_size;
    "distill.seed" => distill.seed;
}

impl RunConfig {
    /// Sets one dotted key from its text form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        set_key(self, key.trim(), value.trim())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        get_key(self, key)
    }

    /// Applies `key = value` lines on top of `self`. Blank lines and lines
    /// starting with `#` are skipped.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`, got `{line}`", i + 1)))?;
            self.set(k, v)
                .map_err(|e| Error::Config(format!("line {}: {e}", i + 1)))?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut c = Self::default();
        c.apply_text(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_text(&text)
    }

    /// Every key with its current value, one per line.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for k in KEYS {
            s.push_str(&format!("{k} = {}\n", self.get(k).expect("listed key")));
        }
        s
    }

    pub fn validate(&self) -> Result<()> {
        NetworkSpec::preset(&self.backbone.preset)?;
        self.tracker.validate()?;
        self.loss.validate()?;
        self.anchors.validate()?;
        self.vot.validate()
    }
}

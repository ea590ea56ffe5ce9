//! Flat `key = value` run configuration.
//!
//! Values come from built-in defaults, then an optional config file, then
//! command-line flags, each layer overriding the previous one. Unknown keys
//! are rejected at every layer.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use spinv_core::datagen::{Motion, SequenceConfig, ToyConfig};
use spinv_core::experiments::{ToySetup, VideoSetup};
use spinv_core::learning::TrainOptions;
use spinv_core::solver::{Momentum, SolverOptions};

use crate::CliError;

/// Where a default value comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    /// The setting used for the published experiments.
    Published,
    /// Reduced so that a run finishes in minutes on one core.
    DeskScale,
    /// Not fixed by the original experiments; chosen here.
    Chosen,
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Source::Published => "published setting",
            Source::DeskScale => "desk-scale choice",
            Source::Chosen => "implementation choice",
        })
    }
}

pub struct Key {
    pub name: &'static str,
    pub default: &'static str,
    pub help: &'static str,
    pub source: Source,
}

const fn key(name: &'static str, default: &'static str, source: Source, help: &'static str) -> Key {
    Key {
        name,
        default,
        help,
        source,
    }
}

use Source::{Chosen, DeskScale, Published};

pub const KEYS: &[Key] = &[
    key("seed", "0", Chosen, "root of every random stream"),
    key("out", "out", Chosen, "output directory"),
    key("threads", "1", Chosen, "worker threads; results do not depend on it"),
    key("mode", "split", Chosen, "split (two-stage) or unified (joint) training"),
    key("paper_scale", "false", Published, "400 simple / 100 invariant units and 100000 sequences unless set explicitly"),
    // Model and training.
    key("alpha", "0.5", Published, "sparsity of the simple units"),
    key("beta", "0.3", Published, "sparsity of the invariant units"),
    key("code_dim", "100", DeskScale, "simple units (published: 400)"),
    key("inv_dim", "25", DeskScale, "invariant units (published: 100)"),
    key("n_train", "20000", DeskScale, "training sequences (published: 100000)"),
    key("epochs", "1", Chosen, "passes over the training data"),
    key("pooling_epochs", "3", Chosen, "passes of the second stage over the accumulated codes (split mode)"),
    key("learning_rate", "0.05", Chosen, "initial dictionary learning rate"),
    key("decay", "10000", Chosen, "rate after k updates is learning_rate / (1 + k / decay); 0 disables"),
    key("batch", "1", Chosen, "samples averaged into one update"),
    key("max_steps", "", Chosen, "stop the final training stage after this many updates (empty: no limit)"),
    key("resume", "", Chosen, "model file to continue training from"),
    key("model", "model.bin", Chosen, "model file written by train and read by responses"),
    // Inference.
    key("max_iter", "200", Chosen, "solver iterations per inference"),
    key("tol", "1e-6", Chosen, "relative energy change that stops the solver"),
    key("l0", "1", Chosen, "initial Lipschitz estimate"),
    key("eta", "2", Chosen, "backtracking multiplier"),
    key("momentum", "fista", Chosen, "none, fista or capped:<r>"),
    // Data.
    key("source", "leaves", Chosen, "leaves (synthetic dead-leaves images) or images (PGM files in image_dir)"),
    key("image_dir", "", Chosen, "directory of grayscale PGM images"),
    key("image_size", "128", Chosen, "side of each synthetic image"),
    key("n_images", "16", Chosen, "number of synthetic images"),
    key("patch_scale", "0.25", Chosen, "factor applied to preprocessed images"),
    key("window", "20", Published, "patch side in pixels"),
    key("frames", "3", Published, "frames per sequence"),
    key("min_shift", "1", Published, "smallest displacement per frame in pixels"),
    key("max_shift", "2", Published, "largest displacement per frame in pixels"),
    key("motion", "per_frame", Chosen, "per_frame (constant velocity) or total (displacement over the whole sequence)"),
    // Line world.
    key("toy_size", "20", Chosen, "line-world patch side"),
    key("toy_orientations", "4", Published, "line orientations"),
    key("toy_positions", "10", Published, "line positions per orientation"),
    key("toy_line_prob", "0.2", Published, "probability that each line is drawn"),
    key("toy_code_dim", "50", Chosen, "simple units for the line world"),
    key("toy_inv_dim", "4", Chosen, "invariant units for the line world"),
    key("toy_n_train", "5000", Chosen, "line-world training patches"),
    key("toy_n_eval", "1000", Chosen, "line-world evaluation patches"),
    key("toy_learning_rate", "0.1", Chosen, "dictionary learning rate for the line world"),
    key("min_purity", "0.9", Chosen, "orientation purity required of every active invariant unit"),
    // Responses.
    key("units", "all", Chosen, "units to map: all, none, or a comma-separated list"),
    key("b_min", "-10", Chosen, "smallest edge offset"),
    key("b_max", "10", Chosen, "largest edge offset"),
    key("b_steps", "41", Chosen, "edge offsets sampled"),
    key("theta_steps", "36", Chosen, "edge orientations sampled over [0, pi)"),
    key("k", "1", Published, "spatial frequency of the edge stimulus"),
    key("min_width_ratio", "1.5", Chosen, "required median invariant over median simple tuning width"),
    key("beta_sweep", "", Published, "comma-separated beta values for retraining the second stage (e.g. 0.5,0.3,0.2,0.1)"),
    // Benchmarks.
    key("instances", "100", Chosen, "random problems per family"),
    key("iterations", "500", Chosen, "solver iterations per rate check"),
    key("descent_pairs", "1000", Chosen, "sampled point pairs per descent-lemma family"),
    // In-painting.
    key("mask_ratio", "0.3", Chosen, "share of pixels hidden"),
    key("n_patches", "200", Chosen, "held-out patches"),
    key("one_layer_model", "", Chosen, "one-layer model file (empty: train on the line world)"),
    key("two_layer_model", "", Chosen, "two-layer model file (empty: train on the line world)"),
];

fn lookup(name: &str) -> Option<&'static Key> {
    KEYS.iter().find(|k| k.name == name)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunConfig {
    /// Values set by a file or flag; everything else is at its default.
    explicit: BTreeMap<&'static str, String>,
}

impl RunConfig {
    pub fn set(&mut self, name: &str, value: &str) -> Result<(), CliError> {
        let key = lookup(name).ok_or_else(|| CliError::Usage(format!("unknown config key `{name}`")))?;
        self.explicit.insert(key.name, value.trim().to_string());
        Ok(())
    }

    /// Applies `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<(), CliError> {
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("{origin}:{}: expected `key = value`", n + 1)))?;
            self.set(k.trim(), v).map_err(|e| CliError::Usage(format!("{origin}:{}: {e}", n + 1)))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<(), CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        self.apply_text(&text, &path.display().to_string())
    }

    pub fn is_set(&self, name: &str) -> bool {
        self.explicit.contains_key(name)
    }

    pub fn raw(&self, name: &str) -> &str {
        let key = lookup(name).unwrap_or_else(|| panic!("no config key `{name}`"));
        self.explicit.get(key.name).map_or(key.default, String::as_str)
    }

    pub fn get<T: FromStr>(&self, name: &str) -> Result<T, CliError>
    where
        T::Err: fmt::Display,
    {
        let raw = self.raw(name);
        raw.parse()
            .map_err(|e| CliError::Usage(format!("bad value `{raw}` for `{name}`: {e}")))
    }

    /// `None` for an empty value.
    pub fn optional<T: FromStr>(&self, name: &str) -> Result<Option<T>, CliError>
    where
        T::Err: fmt::Display,
    {
        if self.raw(name).is_empty() {
            Ok(None)
        } else {
            self.get(name).map(Some)
        }
    }

    pub fn path(&self, name: &str) -> Option<PathBuf> {
        let raw = self.raw(name);
        (!raw.is_empty()).then(|| PathBuf::from(raw))
    }

    /// Comma-separated list; empty value gives an empty list.
    pub fn list<T: FromStr>(&self, name: &str) -> Result<Vec<T>, CliError>
    where
        T::Err: fmt::Display,
    {
        self.raw(name)
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse()
                    .map_err(|e| CliError::Usage(format!("bad entry `{s}` in `{name}`: {e}")))
            })
            .collect()
    }

    pub fn out_dir(&self) -> Result<PathBuf, CliError> {
        let dir = PathBuf::from(self.raw("out"));
        std::fs::create_dir_all(&dir)
            .map_err(|e| CliError::Usage(format!("cannot create output directory {}: {e}", dir.display())))?;
        Ok(dir)
    }

    pub fn solver(&self) -> Result<SolverOptions, CliError> {
        let momentum = match self.raw("momentum") {
            "none" => Momentum::None,
            "fista" => Momentum::Fista,
            other => match other.strip_prefix("capped:").map(str::parse::<f64>) {
                Some(Ok(r)) => Momentum::CappedFista(r),
                _ => return Err(CliError::Usage(format!("bad momentum `{other}`; expected none, fista or capped:<r>"))),
            },
        };
        let opts = SolverOptions {
            max_iter: self.get("max_iter")?,
            tol: self.get("tol")?,
            l0: self.get("l0")?,
            eta: self.get("eta")?,
            momentum,
            record_trace: true,
        };
        opts.validate().map_err(CliError::from_config)?;
        Ok(opts)
    }

    fn train_options(&self, learning_rate: f64) -> Result<TrainOptions, CliError> {
        let opts = TrainOptions {
            learning_rate,
            decay: self.get("decay")?,
            epochs: self.get("epochs")?,
            batch: self.get("batch")?,
            seed: self.get("seed")?,
            infer_opts: self.solver()?,
        };
        opts.validate().map_err(CliError::from_config)?;
        Ok(opts)
    }

    pub fn toy_setup(&self) -> Result<ToySetup, CliError> {
        let cfg = ToyConfig {
            size: self.get("toy_size")?,
            n_orientations: self.get("toy_orientations")?,
            n_positions: self.get("toy_positions")?,
            line_prob: self.get("toy_line_prob")?,
        };
        cfg.validate().map_err(CliError::from_config)?;
        Ok(ToySetup {
            cfg,
            code_dim: self.get("toy_code_dim")?,
            inv_dim: self.get("toy_inv_dim")?,
            alpha: self.get("alpha")?,
            beta: self.get("beta")?,
            n_train: self.get("toy_n_train")?,
            n_eval: self.get("toy_n_eval")?,
            train: self.train_options(self.get("toy_learning_rate")?)?,
        })
    }

    pub fn video_setup(&self) -> Result<VideoSetup, CliError> {
        let base = if self.get("paper_scale")? {
            VideoSetup::paper_scale()
        } else {
            VideoSetup::default()
        };
        let pick = |name: &str, fallback: usize| -> Result<usize, CliError> {
            if self.is_set(name) {
                self.get(name)
            } else {
                Ok(fallback)
            }
        };
        let motion = match self.raw("motion") {
            "per_frame" => Motion::PerFrame,
            "total" => Motion::Total,
            other => return Err(CliError::Usage(format!("bad motion `{other}`; expected per_frame or total"))),
        };
        let seq = SequenceConfig {
            window: self.get("window")?,
            n_frames: self.get("frames")?,
            magnitude: (self.get("min_shift")?, self.get("max_shift")?),
            motion,
        };
        seq.validate().map_err(CliError::from_config)?;
        Ok(VideoSetup {
            image_size: self.get("image_size")?,
            n_images: self.get("n_images")?,
            patch_scale: self.get("patch_scale")?,
            seq,
            n_train: pick("n_train", base.n_train)?,
            code_dim: pick("code_dim", base.code_dim)?,
            inv_dim: pick("inv_dim", base.inv_dim)?,
            alpha: self.get("alpha")?,
            beta: self.get("beta")?,
            pooling_epochs: self.get("pooling_epochs")?,
            train: self.train_options(self.get("learning_rate")?)?,
        })
    }
}

/// Help text listing every key with its default and where the default
/// comes from.
pub fn keys_help() -> String {
    let width = KEYS.iter().map(|k| k.name.len()).max().unwrap_or(0);
    let mut s = String::from("Config keys (file `key = value`, or flag `--key=value`):\n");
    for k in KEYS {
        let default = if k.default.is_empty() { "<empty>" } else { k.default };
        s.push_str(&format!("  {:width$}  {} [default: {default}; {}]\n", k.name, k.help, k.source));
    }
    s
}

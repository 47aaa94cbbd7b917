//! Flat `key = value` run configuration.
//!
//! Precedence, lowest first: profile preset, config file, command-line flags.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use avid_core::data::clip::ClipConfig;
use avid_core::data::{IrMnistConfig, Layout};
use avid_core::detection::Thresholds;
use avid_core::models::{default_detector_layers, LayerSpec};
use avid_core::training::TrainConfig;
use avid_core::{AvidError, Result, Split};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Profile {
    Full,
    Quick,
}

impl FromStr for Profile {
    type Err = AvidError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Profile::Full),
            "quick" => Ok(Profile::Quick),
            other => Err(AvidError::config(format!("unknown profile '{other}' (full or quick)"))),
        }
    }
}

impl Profile {
    pub fn name(self) -> &'static str {
        match self {
            Profile::Full => "full",
            Profile::Quick => "quick",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DataKind {
    IrMnist,
    WalkingClip,
}

impl FromStr for DataKind {
    type Err = AvidError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ir_mnist" | "ir-mnist" => Ok(DataKind::IrMnist),
            "walking_clip" | "walking-clip" => Ok(DataKind::WalkingClip),
            other => Err(AvidError::config(format!("unknown data kind '{other}'"))),
        }
    }
}

impl DataKind {
    pub fn name(self) -> &'static str {
        match self {
            DataKind::IrMnist => "ir_mnist",
            DataKind::WalkingClip => "walking_clip",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub profile: Profile,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub data: Option<PathBuf>,
    pub layout: Layout,
    pub split: Split,
    pub checkpoints: Option<PathBuf>,
    pub kind: DataKind,
    pub mnist_dir: Option<PathBuf>,
    pub digits_per_class: usize,
    pub ir_mnist: IrMnistConfig,
    pub clip: ClipConfig,
    pub inpainter_widths: Vec<usize>,
    pub detector_layers: Vec<LayerSpec>,
    pub train: TrainConfig,
    pub thresholds: Thresholds,
}

impl RunConfig {
    pub fn preset(profile: Profile) -> Self {
        let base = Self {
            profile,
            seed: 0,
            out: None,
            data: None,
            layout: Layout::IrMnist,
            split: Split::Test,
            checkpoints: None,
            kind: DataKind::IrMnist,
            mnist_dir: None,
            digits_per_class: 1000,
            ir_mnist: IrMnistConfig::default(),
            clip: ClipConfig::default(),
            inpainter_widths: vec![64, 128, 256, 512],
            detector_layers: default_detector_layers(),
            train: TrainConfig::default(),
            thresholds: Thresholds::default(),
        };
        match profile {
            Profile::Full => base,
            Profile::Quick => quick(base),
        }
    }

    /// Seeds every stochastic component from the single run seed.
    pub fn sync_seeds(&mut self) {
        self.ir_mnist.seed = self.seed;
        self.clip.seed = self.seed;
        self.train.seed = self.seed;
    }

    /// Parses a config file on top of the preset of its `profile` key (or `fallback`).
    pub fn parse(text: &str, profile_override: Option<Profile>) -> Result<Self> {
        let entries = entries(text)?;
        let profile = match profile_override {
            Some(p) => p,
            None => match entries.iter().find(|e| e.key == "profile") {
                Some(e) => e.value.parse().map_err(|err| e.error(err))?,
                None => Profile::Full,
            },
        };
        let mut cfg = Self::preset(profile);
        for e in &entries {
            if e.key == "profile" {
                continue;
            }
            cfg.set(&e.key, &e.value).map_err(|err| e.error(err))?;
        }
        cfg.sync_seeds();
        Ok(cfg)
    }

    pub fn load(path: &Path, profile_override: Option<Profile>) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| AvidError::io(path, e))?;
        Self::parse(&text, profile_override).map_err(|e| match e {
            AvidError::Config(m) => AvidError::config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value;
        match key {
            "seed" => self.seed = num(v)?,
            "out" => self.out = path(v),
            "data" => self.data = path(v),
            "layout" => self.layout = v.parse()?,
            "split" => {
                self.split = match v {
                    "train" => Split::Train,
                    "test" => Split::Test,
                    _ => return Err(AvidError::config(format!("split must be train or test, got '{v}'"))),
                }
            }
            "checkpoints" => self.checkpoints = path(v),
            "kind" => self.kind = v.parse()?,
            "mnist_dir" => self.mnist_dir = path(v),
            "digits_per_class" => self.digits_per_class = num(v)?,
            "n_train" => self.ir_mnist.n_train = num(v)?,
            "n_test" => self.ir_mnist.n_test = num(v)?,
            "grid_side" => self.ir_mnist.grid_side = num(v)?,
            "excluded_digit" => self.ir_mnist.excluded_digit = num(v)?,
            "irregular_rate_test" => self.ir_mnist.irregular_rate_test = num(v)?,
            "clean_test_fraction" => self.ir_mnist.clean_test_fraction = num(v)?,
            "clip_height" => self.clip.height = num(v)?,
            "clip_width" => self.clip.width = num(v)?,
            "clip_frames" => self.clip.frames = num(v)?,
            "clip_walkers" => self.clip.walkers = num(v)?,
            "inpainter_widths" => self.inpainter_widths = list(v, num)?,
            "detector_layers" => self.detector_layers = list(v, layer)?,
            "learning_rate" => self.train.learning_rate = num(v)?,
            "momentum" => self.train.momentum = num(v)?,
            "batch_size" => self.train.batch_size = num(v)?,
            "gamma" => self.train.gamma = num(v)?,
            "sigma" => self.train.sigma = num(v)?,
            "max_steps" => self.train.max_steps = num(v)?,
            "eval_interval" => self.train.eval_interval = num(v)?,
            "loss_form" => self.train.loss_form = v.parse()?,
            "recon_weight" => self.train.recon_weight = num(v)?,
            "validation_fraction" => self.train.validation_fraction = num(v)?,
            "alpha" => self.thresholds.alpha = num(v)?,
            "zeta" => self.thresholds.zeta = num(v)?,
            other => return Err(AvidError::config(format!("unknown key '{other}'"))),
        }
        Ok(())
    }

    /// Every key, one per line, in a fixed order. Parsing the result gives back `self`.
    pub fn to_text(&self) -> String {
        let p = |o: &Option<PathBuf>| o.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        let split = match self.split {
            Split::Train => "train",
            Split::Test => "test",
        };
        let layout = match self.layout {
            Layout::IrMnist => "ir_mnist",
            Layout::FrameDirectory => "frame_directory",
        };
        let widths: Vec<String> = self.inpainter_widths.iter().map(|w| w.to_string()).collect();
        let layers: Vec<String> = self
            .detector_layers
            .iter()
            .map(|l| format!("{}:{}:{}:{}", l.in_channels, l.out_channels, l.kernel, l.stride))
            .collect();
        let t = &self.train;
        let rows: Vec<(&str, String)> = vec![
            ("profile", self.profile.name().into()),
            ("seed", self.seed.to_string()),
            ("out", p(&self.out)),
            ("data", p(&self.data)),
            ("layout", layout.into()),
            ("split", split.into()),
            ("checkpoints", p(&self.checkpoints)),
            ("kind", self.kind.name().into()),
            ("mnist_dir", p(&self.mnist_dir)),
            ("digits_per_class", self.digits_per_class.to_string()),
            ("n_train", self.ir_mnist.n_train.to_string()),
            ("n_test", self.ir_mnist.n_test.to_string()),
            ("grid_side", self.ir_mnist.grid_side.to_string()),
            ("excluded_digit", self.ir_mnist.excluded_digit.to_string()),
            ("irregular_rate_test", self.ir_mnist.irregular_rate_test.to_string()),
            ("clean_test_fraction", self.ir_mnist.clean_test_fraction.to_string()),
            ("clip_height", self.clip.height.to_string()),
            ("clip_width", self.clip.width.to_string()),
            ("clip_frames", self.clip.frames.to_string()),
            ("clip_walkers", self.clip.walkers.to_string()),
            ("inpainter_widths", widths.join(",")),
            ("detector_layers", layers.join(",")),
            ("learning_rate", t.learning_rate.to_string()),
            ("momentum", t.momentum.to_string()),
            ("batch_size", t.batch_size.to_string()),
            ("gamma", t.gamma.to_string()),
            ("sigma", t.sigma.to_string()),
            ("max_steps", t.max_steps.to_string()),
            ("eval_interval", t.eval_interval.to_string()),
            ("loss_form", t.loss_form.to_string()),
            ("recon_weight", t.recon_weight.to_string()),
            ("validation_fraction", t.validation_fraction.to_string()),
            ("alpha", self.thresholds.alpha.to_string()),
            ("zeta", self.thresholds.zeta.to_string()),
        ];
        let mut out = String::new();
        for (k, v) in rows {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }
}

/// Reduced preset that trains in minutes on one CPU core.
fn quick(mut cfg: RunConfig) -> RunConfig {
    cfg.ir_mnist.grid_side = 5;
    cfg.ir_mnist.n_train = 500;
    cfg.ir_mnist.n_test = 300;
    cfg.digits_per_class = 200;
    cfg.inpainter_widths = vec![4, 8, 16, 32];
    cfg.detector_layers = vec![
        LayerSpec::new(3, 8, 5, 2),
        LayerSpec::new(8, 16, 5, 2),
        LayerSpec::new(16, 32, 3, 7),
        LayerSpec::new(32, 16, 1, 1),
        LayerSpec::new(16, 1, 1, 1),
    ];
    cfg.train.max_steps = 2000;
    cfg.train.eval_interval = 100;
    cfg.train.batch_size = 8;
    // With only the adversarial term the inpainter's output sigmoid saturates
    // at black within a few hundred steps at this scale; a weighted
    // reconstruction term and a smaller step keep it learning.
    cfg.train.learning_rate = 0.0002;
    cfg.train.recon_weight = 50.0;
    cfg
}

struct Entry {
    line: usize,
    key: String,
    value: String,
}

impl Entry {
    fn error(&self, err: AvidError) -> AvidError {
        let msg = match err {
            AvidError::Config(m) | AvidError::Argument(m) => m,
            other => other.to_string(),
        };
        AvidError::config(format!("line {}: {msg}", self.line))
    }
}

fn entries(text: &str) -> Result<Vec<Entry>> {
    let mut out: Vec<Entry> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| AvidError::config(format!("line {}: expected 'key = value'", i + 1)))?;
        let key = key.trim();
        if key.is_empty() {
            return Err(AvidError::config(format!("line {}: missing key", i + 1)));
        }
        if out.iter().any(|e| e.key == key) {
            return Err(AvidError::config(format!("line {}: duplicate key '{key}'", i + 1)));
        }
        out.push(Entry {
            line: i + 1,
            key: key.to_string(),
            value: value.trim().to_string(),
        });
    }
    Ok(out)
}

fn num<T: FromStr>(v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| AvidError::config(format!("cannot parse '{v}' as a number")))
}

fn path(v: &str) -> Option<PathBuf> {
    (!v.is_empty()).then(|| PathBuf::from(v))
}

fn list<T>(v: &str, item: fn(&str) -> Result<T>) -> Result<Vec<T>> {
    v.split(',').map(|s| item(s.trim())).collect()
}

fn layer(v: &str) -> Result<LayerSpec> {
    let parts: Vec<usize> = v.split(':').map(num).collect::<Result<_>>()?;
    match parts[..] {
        [cin, cout, k, s] => Ok(LayerSpec::new(cin, cout, k, s)),
        _ => Err(AvidError::config(format!("layer '{v}' is not in:out:kernel:stride"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use avid_core::training::LossForm;

    #[test]
    fn echo_reloads_to_an_equal_config() {
        for profile in [Profile::Full, Profile::Quick] {
            let mut cfg = RunConfig::preset(profile);
            cfg.seed = 42;
            cfg.out = Some("runs/a b".into());
            cfg.thresholds.alpha = 0.123456789;
            cfg.train.loss_form = LossForm::Literal;
            cfg.sync_seeds();
            let back = RunConfig::parse(&cfg.to_text(), None).unwrap();
            assert_eq!(back, cfg);
        }
    }

    #[test]
    fn file_values_override_the_preset() {
        let cfg = RunConfig::parse("profile = quick\n# comment\nmax_steps = 7 # trailing\nseed=3\n", None).unwrap();
        assert_eq!(cfg.profile, Profile::Quick);
        assert_eq!(cfg.train.max_steps, 7);
        assert_eq!(cfg.ir_mnist.grid_side, 5);
        assert_eq!(cfg.train.seed, 3);
        assert_eq!(cfg.ir_mnist.seed, 3);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let err = RunConfig::parse("seed = 1\n\nbogus line\n", None).unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
        let err = RunConfig::parse("seed = 1\nmax_steps = lots\n", None).unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
        let err = RunConfig::parse("colour = red\n", None).unwrap_err();
        assert!(err.to_string().contains("line 1") && err.to_string().contains("colour"));
        let err = RunConfig::parse("seed = 1\nseed = 2\n", None).unwrap_err();
        assert!(err.to_string().contains("duplicate"));
        assert!(matches!(RunConfig::parse("profile = medium", None), Err(AvidError::Config(_))));
    }

    #[test]
    fn detector_layers_parse() {
        let cfg = RunConfig::parse("detector_layers = 3:4:3:2, 4:1:1:1", None).unwrap();
        assert_eq!(cfg.detector_layers, vec![LayerSpec::new(3, 4, 3, 2), LayerSpec::new(4, 1, 1, 1)]);
        assert!(RunConfig::parse("detector_layers = 3:4:3", None).is_err());
    }
}

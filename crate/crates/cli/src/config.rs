//! Sectioned `key = value` configuration with dotted overrides.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use pcrseg::mednext::{FocalParams, LossVariant, SegArch, TrainPlan};
use pcrseg::phantom::{PcrRule, PhantomSpec};
use pcrseg::snn::SnnConfig;

use crate::CliError;

/// Raw settings keyed by `section.key`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RawConfig {
    pub entries: BTreeMap<String, String>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut entries = BTreeMap::new();
        let mut section = String::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = name.trim().to_string();
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::usage(format!("config line {}: expected key = value", n + 1)))?;
            let key = if section.is_empty() { k.trim().to_string() } else { format!("{section}.{}", k.trim()) };
            if entries.insert(key.clone(), v.trim().to_string()).is_some() {
                return Err(CliError::usage(format!("config line {}: duplicate key {key}", n + 1)));
            }
        }
        Ok(Self { entries })
    }

    /// Applies one `section.key=value` override.
    pub fn set(&mut self, assignment: &str) -> Result<(), CliError> {
        let (k, v) = assignment
            .split_once('=')
            .ok_or_else(|| CliError::usage(format!("--set expects key=value, got {assignment:?}")))?;
        if !k.contains('.') {
            return Err(CliError::usage(format!("--set key {k:?} needs a section prefix")));
        }
        self.entries.insert(k.trim().to_string(), v.trim().to_string());
        Ok(())
    }

    fn get<T: FromStr>(&self, key: &str, default: T) -> Result<T, CliError>
    where
        T::Err: Display,
    {
        match self.entries.get(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|e| CliError::usage(format!("config key {key}: {e}"))),
        }
    }

    fn list<T: FromStr>(&self, key: &str, default: Vec<T>) -> Result<Vec<T>, CliError>
    where
        T::Err: Display,
    {
        match self.entries.get(key) {
            None => Ok(default),
            Some(v) => v
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| s.parse().map_err(|e| CliError::usage(format!("config key {key}: {e}"))))
                .collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct UpkernSettings {
    pub target_k: usize,
    pub loss: LossVariant,
    pub epochs: usize,
    pub eta_max: f64,
    /// Defaults to the best cross-validation fold.
    pub input: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalSettings {
    pub models: Vec<PathBuf>,
    pub ensemble: bool,
    pub threshold: f64,
    pub hd_percentile: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RadiomicsSettings {
    pub ng: usize,
    pub phase: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SelectSettings {
    pub threshold: f64,
    pub k: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    pub output_dir: PathBuf,
    pub data_dir: PathBuf,
    pub seed: u64,
    pub threads: usize,
    pub holdout: f64,
    pub phantom: PhantomSpec,
    pub arch: SegArch,
    pub loss: LossVariant,
    pub plan: TrainPlan,
    pub upkern: UpkernSettings,
    pub eval: EvalSettings,
    pub radiomics: RadiomicsSettings,
    pub select: SelectSettings,
    pub snn: SnnConfig,
    pub calibration_fraction: f64,
    pub ece_bins: usize,
}

const KNOWN: &[&str] = &[
    "paths.output_dir",
    "paths.data_dir",
    "run.seed",
    "run.threads",
    "split.holdout",
    "phantom.n_cases",
    "phantom.size",
    "phantom.spacing",
    "phantom.radius_min",
    "phantom.radius_max",
    "phantom.gain",
    "phantom.noise",
    "phantom.max_heterogeneity",
    "phantom.auto_tune",
    "phantom.volume_thresh",
    "phantom.heterogeneity_thresh",
    "train.levels",
    "train.base_channels",
    "train.ratio",
    "train.kernel",
    "train.loss",
    "train.folds",
    "train.epochs",
    "train.batch_size",
    "train.patch",
    "train.eta_max",
    "train.eta_min",
    "train.momentum",
    "train.fg_fraction",
    "train.ds_weights",
    "train.focal_gamma",
    "train.focal_alpha",
    "upkern.target_k",
    "upkern.loss",
    "upkern.epochs",
    "upkern.eta_max",
    "upkern.input",
    "eval.models",
    "eval.ensemble",
    "eval.threshold",
    "eval.hd_percentile",
    "radiomics.ng",
    "radiomics.phase",
    "select.threshold",
    "select.k",
    "snn.hidden",
    "snn.epochs",
    "snn.batch_size",
    "snn.lr",
    "snn.dropout",
    "snn.calibration_fraction",
    "metrics.ece_bins",
];

impl PipelineConfig {
    /// Builds the typed configuration; relative paths resolve against `base`.
    pub fn from_raw(raw: &RawConfig, base: &Path) -> Result<Self, CliError> {
        if let Some(k) = raw.entries.keys().find(|k| !KNOWN.contains(&k.as_str())) {
            return Err(CliError::usage(format!("unknown config key {k}")));
        }
        let resolve = |p: &str| {
            let p = PathBuf::from(p);
            if p.is_absolute() { p } else { base.join(p) }
        };
        let output_dir = resolve(
            raw.entries
                .get("paths.output_dir")
                .ok_or_else(|| CliError::usage("config key paths.output_dir is required"))?,
        );
        let data_dir = match raw.entries.get("paths.data_dir") {
            Some(p) => resolve(p),
            None => output_dir.join("phantoms"),
        };
        let seed: u64 = raw
            .entries
            .get("run.seed")
            .ok_or_else(|| CliError::usage("a seed is required (run.seed or --seed)"))?
            .parse()
            .map_err(|e| CliError::usage(format!("config key run.seed: {e}")))?;

        let d = PhantomSpec::default();
        let size: usize = raw.get("phantom.size", d.size[0])?;
        let spacing: f32 = raw.get("phantom.spacing", d.spacing[0])?;
        let phantom = PhantomSpec {
            size: [size; 3],
            spacing: [spacing; 3],
            n_cases: raw.get("phantom.n_cases", d.n_cases)?,
            seed,
            tumor_radius_range: (
                raw.get("phantom.radius_min", d.tumor_radius_range.0)?,
                raw.get("phantom.radius_max", d.tumor_radius_range.1)?,
            ),
            enhancement_gain: raw.get("phantom.gain", d.enhancement_gain)?,
            noise_sigma: raw.get("phantom.noise", d.noise_sigma)?,
            max_heterogeneity: raw.get("phantom.max_heterogeneity", d.max_heterogeneity)?,
            pcr_rule: PcrRule {
                volume_thresh: raw.get("phantom.volume_thresh", d.pcr_rule.volume_thresh)?,
                heterogeneity_thresh: raw.get("phantom.heterogeneity_thresh", d.pcr_rule.heterogeneity_thresh)?,
            },
            auto_tune: raw.get("phantom.auto_tune", d.auto_tune)?,
        };

        let da = SegArch::default();
        let arch = SegArch {
            levels: raw.get("train.levels", da.levels)?,
            base_channels: raw.get("train.base_channels", da.base_channels)?,
            ratio: raw.get("train.ratio", da.ratio)?,
            kernel: raw.get("train.kernel", da.kernel)?,
            ..da
        };
        let dp = TrainPlan::default();
        let patch: usize = raw.get("train.patch", dp.patch[0])?;
        let ds = raw.list::<f64>("train.ds_weights", Vec::new())?;
        let plan = TrainPlan {
            folds: raw.get("train.folds", dp.folds)?,
            epochs: raw.get("train.epochs", dp.epochs)?,
            batch_size: raw.get("train.batch_size", dp.batch_size)?,
            patch: [patch; 3],
            seed,
            eta_max: raw.get("train.eta_max", dp.eta_max)?,
            eta_min: raw.get("train.eta_min", dp.eta_min)?,
            momentum: raw.get("train.momentum", dp.momentum)?,
            ds_weights: (!ds.is_empty()).then_some(ds),
            focal: FocalParams {
                gamma: raw.get("train.focal_gamma", dp.focal.gamma)?,
                alpha: raw.get("train.focal_alpha", dp.focal.alpha)?,
            },
            overlap: dp.overlap,
            fg_fraction: raw.get("train.fg_fraction", dp.fg_fraction)?,
        };
        let upkern = UpkernSettings {
            target_k: raw.get("upkern.target_k", 5)?,
            loss: raw.get("upkern.loss", LossVariant::DiceCe)?,
            epochs: raw.get("upkern.epochs", plan.epochs)?,
            eta_max: raw.get("upkern.eta_max", plan.eta_max)?,
            input: raw.entries.get("upkern.input").map(|p| resolve_in(&output_dir, p)),
        };
        let models: Vec<String> = raw.list("eval.models", vec!["seg/m3.mdl".to_string()])?;
        let eval = EvalSettings {
            models: models.iter().map(|p| resolve_in(&output_dir, p)).collect(),
            ensemble: raw.get("eval.ensemble", false)?,
            threshold: raw.get("eval.threshold", 0.5)?,
            hd_percentile: raw.get("eval.hd_percentile", 95.0)?,
        };
        let ds = SnnConfig::default();
        let cfg = Self {
            threads: raw.get("run.threads", 1)?,
            holdout: raw.get("split.holdout", 0.2)?,
            loss: raw.get("train.loss", LossVariant::DiceCe)?,
            radiomics: RadiomicsSettings {
                ng: raw.get("radiomics.ng", pcrseg::radiomics::DEFAULT_NG)?,
                phase: raw.get("radiomics.phase", 1)?,
            },
            select: SelectSettings {
                threshold: raw.get("select.threshold", pcrseg::featselect::DEFAULT_CORR_THRESHOLD)?,
                k: raw.get("select.k", 10)?,
            },
            snn: SnnConfig {
                hidden: raw.list("snn.hidden", ds.hidden.clone())?,
                epochs: raw.get("snn.epochs", ds.epochs)?,
                batch_size: raw.get("snn.batch_size", ds.batch_size)?,
                lr: raw.get("snn.lr", ds.lr)?,
                dropout: raw.get("snn.dropout", ds.dropout)?,
                seed,
            },
            calibration_fraction: raw.get("snn.calibration_fraction", 0.2)?,
            ece_bins: raw.get("metrics.ece_bins", 10)?,
            output_dir,
            data_dir,
            seed,
            phantom,
            arch,
            plan,
            upkern,
            eval,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), CliError> {
        let usage = |e: pcrseg::Error| CliError::usage(e.to_string());
        self.phantom.validate().map_err(usage)?;
        self.plan.validate().map_err(usage)?;
        self.arch.validate().map_err(usage)?;
        if self.threads == 0 {
            return Err(CliError::usage("threads must be >= 1"));
        }
        if !(0.0..1.0).contains(&self.holdout) {
            return Err(CliError::usage(format!("split.holdout {} outside [0, 1)", self.holdout)));
        }
        if !(self.calibration_fraction > 0.0 && self.calibration_fraction < 1.0) {
            return Err(CliError::usage("snn.calibration_fraction must lie in (0, 1)"));
        }
        if self.radiomics.phase > 2 {
            return Err(CliError::usage("radiomics.phase must be 0, 1 or 2"));
        }
        if self.select.k == 0 {
            return Err(CliError::usage("select.k must be >= 1"));
        }
        if self.eval.models.is_empty() {
            return Err(CliError::usage("eval.models is empty"));
        }
        Ok(())
    }
}

fn resolve_in(dir: &Path, p: &str) -> PathBuf {
    let p = PathBuf::from(p);
    if p.is_absolute() { p } else { dir.join(p) }
}

/// Reads `path`, applies overrides, then builds the typed config.
pub fn load(path: &Path, seed: Option<u64>, threads: Option<usize>, sets: &[String]) -> Result<PipelineConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
    let mut raw = RawConfig::parse(&text)?;
    for s in sets {
        raw.set(s)?;
    }
    if let Some(s) = seed {
        raw.entries.insert("run.seed".into(), s.to_string());
    }
    if let Some(t) = threads {
        raw.entries.insert("run.threads".into(), t.to_string());
    }
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    PipelineConfig::from_raw(&raw, &base)
}

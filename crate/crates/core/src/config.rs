//! Run configuration: desk-scale defaults, `key = value` config files.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

/// Everything a training or evaluation run needs. Defaults are desk-scale
/// (level-4 input, 162-vertex output, 8 spheres) so the full pipeline runs in
/// minutes on a CPU; paper-scale values remain reachable through the config.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub level: usize,
    pub num_spheres: usize,
    pub d_min: f64,
    pub eps: f64,
    pub c_feat: usize,
    pub lr: f64,
    pub lr_after: f64,
    pub lr_drop_iter: usize,
    pub iterations: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub rig: Option<PathBuf>,
    pub weights: Option<PathBuf>,
    pub scene_seeds: Vec<u64>,
    pub val_scene_seeds: Vec<u64>,
    pub scene_files: Vec<PathBuf>,
    pub image_size: usize,
    pub fov_deg: f64,
    pub baseline: f64,
    pub checkpoint_every: usize,
    pub color_jitter: f64,
    pub random_shift: f64,
    /// Append per-camera validity channels to the cost volume.
    pub validity_channel: bool,
    /// Train-time 90°-yaw diversity for the symmetric default rig (camera
    /// inputs and cache blocks cycled together; rig stays at pitch 0).
    pub yaw_aug: bool,
    /// Train-time FoV-mask diversity: per-camera probability of replacing the
    /// true FoV mask by a randomly tilted, randomly narrowed cone intersected
    /// with it (0 disables). Teaches robustness to mask boundaries landing
    /// anywhere, which is what re-mounting the cameras does at test time.
    pub mask_aug: f64,
    /// Train-time probability of blanking one camera entirely (0 disables).
    pub cam_dropout: f64,
}

impl Default for RunConfig {
    fn default() -> RunConfig {
        RunConfig {
            level: 4,
            num_spheres: 8,
            d_min: 0.55,
            eps: 1e-6,
            c_feat: 8,
            lr: 1e-3,
            lr_after: 1e-4,
            lr_drop_iter: 350,
            iterations: 500,
            batch_size: 1,
            seed: 1,
            rig: None,
            weights: None,
            scene_seeds: vec![101, 102, 103, 104],
            val_scene_seeds: vec![201, 202],
            scene_files: Vec::new(),
            image_size: 512,
            fov_deg: 220.0,
            baseline: 0.2,
            checkpoint_every: 50,
            color_jitter: 0.0,
            random_shift: 0.0,
            validity_channel: false,
            yaw_aug: true,
            mask_aug: 0.5,
            cam_dropout: 0.0,
        }
    }
}

impl RunConfig {
    /// Sanity checks before a run starts.
    pub fn validate(&self) -> Result<()> {
        if self.level < 3 {
            return Err(Error::validation(
                "config",
                "level must be at least 3 (output level = level − 2)",
            ));
        }
        if self.num_spheres < 2 {
            return Err(Error::validation("config", "num_spheres must be at least 2"));
        }
        if self.d_min <= 0.0 || self.eps <= 0.0 {
            return Err(Error::validation("config", "d_min and eps must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::validation("config", "batch_size must be positive"));
        }
        for p in self
            .rig
            .iter()
            .chain(self.weights.iter())
            .chain(self.scene_files.iter())
        {
            if !p.exists() {
                return Err(Error::validation(
                    "config",
                    format!("path does not exist: {}", p.display()),
                ));
            }
        }
        Ok(())
    }
}

fn parse_list<T: std::str::FromStr>(s: &str) -> Option<Vec<T>> {
    s.split(',')
        .map(|t| t.trim())
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<T>().ok())
        .collect()
}

/// Parses `key = value` lines with `#` comments.
pub fn parse_config(text: &str, src: &Path) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    for (ln, raw) in text.lines().enumerate() {
        let ln = ln + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::parse(src, ln, "expected 'key = value'"));
        };
        let key = key.trim();
        let value = value.trim();
        let bad = || Error::parse(src, ln, format!("bad value '{value}' for '{key}'"));
        match key {
            "level" => cfg.level = value.parse().map_err(|_| bad())?,
            "num_spheres" | "n" => cfg.num_spheres = value.parse().map_err(|_| bad())?,
            "d_min" => cfg.d_min = value.parse().map_err(|_| bad())?,
            "eps" => cfg.eps = value.parse().map_err(|_| bad())?,
            "c_feat" => cfg.c_feat = value.parse().map_err(|_| bad())?,
            "lr" => cfg.lr = value.parse().map_err(|_| bad())?,
            "lr_after" => cfg.lr_after = value.parse().map_err(|_| bad())?,
            "lr_drop_iter" => cfg.lr_drop_iter = value.parse().map_err(|_| bad())?,
            "iterations" => cfg.iterations = value.parse().map_err(|_| bad())?,
            "batch_size" => cfg.batch_size = value.parse().map_err(|_| bad())?,
            "seed" => cfg.seed = value.parse().map_err(|_| bad())?,
            "rig" => cfg.rig = Some(PathBuf::from(value)),
            "weights" => cfg.weights = Some(PathBuf::from(value)),
            "scene_seeds" => cfg.scene_seeds = parse_list(value).ok_or_else(bad)?,
            "val_scene_seeds" => cfg.val_scene_seeds = parse_list(value).ok_or_else(bad)?,
            "scene_files" => {
                cfg.scene_files = value
                    .split(',')
                    .map(|t| PathBuf::from(t.trim()))
                    .filter(|p| !p.as_os_str().is_empty())
                    .collect()
            }
            "image_size" => cfg.image_size = value.parse().map_err(|_| bad())?,
            "fov_deg" => cfg.fov_deg = value.parse().map_err(|_| bad())?,
            "baseline" => cfg.baseline = value.parse().map_err(|_| bad())?,
            "checkpoint_every" => cfg.checkpoint_every = value.parse().map_err(|_| bad())?,
            "color_jitter" => cfg.color_jitter = value.parse().map_err(|_| bad())?,
            "random_shift" => cfg.random_shift = value.parse().map_err(|_| bad())?,
            "validity_channel" => cfg.validity_channel = value.parse().map_err(|_| bad())?,
            "yaw_aug" => cfg.yaw_aug = value.parse().map_err(|_| bad())?,
            "mask_aug" => cfg.mask_aug = value.parse().map_err(|_| bad())?,
            "cam_dropout" => cfg.cam_dropout = value.parse().map_err(|_| bad())?,
            other => return Err(Error::parse(src, ln, format!("unknown key '{other}'"))),
        }
    }
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text, path)
}

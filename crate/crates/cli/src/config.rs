//! Flat key-value configuration file (TOML with dotted sections) mirroring the
//! library's config types, plus seed resolution.
//!
//! Seed precedence: `--seed` flag, then the `NETHAC_SEED` environment
//! variable, then the config file, then 0.

use std::path::Path;

use anyhow::Context;
use nethac_core::kernel::Kernel;
use nethac_core::mc::{McConfig, SeMethod};
use serde::Deserialize;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    #[serde(default)]
    pub mc: McSection,
    #[serde(default)]
    pub hac: HacSection,
    #[serde(default)]
    pub model: ModelSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McSection {
    pub n: Option<Vec<usize>>,
    pub reps: Option<usize>,
    pub oracle_reps: Option<usize>,
    pub kappa: Option<f64>,
    pub threshold: Option<f64>,
    pub methods: Option<Vec<String>>,
    pub level: Option<f64>,
    pub full_scale: Option<bool>,
    pub fixed_network: Option<bool>,
    pub kernel: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HacSection {
    pub method: Option<String>,
    pub bandwidth: Option<f64>,
    pub theta_bandwidth: Option<f64>,
    pub kernel: Option<String>,
    pub theta_kernel: Option<String>,
    pub center: Option<String>,
    pub psd_floor: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub beta1: Option<f64>,
    pub beta2: Option<f64>,
    pub beta3: Option<f64>,
    pub link: Option<String>,
    pub error_design: Option<String>,
}

pub fn load(path: Option<&Path>) -> anyhow::Result<FileConfig> {
    match path {
        None => Ok(FileConfig::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .with_context(|| format!("cannot read config {}", p.display()))?;
            toml::from_str(&text).with_context(|| format!("bad config {}", p.display()))
        }
    }
}

/// Resolve the master seed: flag > NETHAC_SEED > config file > 0.
pub fn resolve_seed(flag: Option<u64>, file: &FileConfig) -> anyhow::Result<u64> {
    if let Some(s) = flag {
        return Ok(s);
    }
    if let Ok(v) = std::env::var("NETHAC_SEED") {
        return v
            .parse()
            .with_context(|| format!("NETHAC_SEED is not a valid u64: '{v}'"));
    }
    Ok(file.seed.unwrap_or(0))
}

/// Apply the `[mc]` section of a config file onto an [`McConfig`], then CLI
/// overrides on top.
pub fn mc_from_file(base: McConfig, section: &McSection) -> anyhow::Result<McConfig> {
    let mut cfg = base;
    if let Some(n) = &section.n {
        cfg.n_list = n.clone();
    }
    if let Some(r) = section.reps {
        cfg.reps = r;
    }
    if let Some(r) = section.oracle_reps {
        cfg.oracle_reps = r;
    }
    if let Some(k) = section.kappa {
        cfg.kappa = k;
    }
    if let Some(t) = section.threshold {
        cfg.rgg_threshold = t;
    }
    if let Some(l) = section.level {
        cfg.level = l;
    }
    if let Some(f) = section.fixed_network {
        cfg.fixed_network = f;
    }
    if let Some(methods) = &section.methods {
        cfg.methods = methods
            .iter()
            .map(|m| m.parse::<SeMethod>())
            .collect::<Result<_, _>>()?;
    }
    if let Some(k) = &section.kernel {
        cfg.kernel = k.parse::<Kernel>()?;
    }
    if section.full_scale == Some(true) {
        cfg = cfg.full_scale();
    }
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_dotted_sections() {
        let text = "seed = 9\nmc.reps = 50\nmc.n = [100]\nhac.bandwidth = 2.0\nmodel.beta3 = 1.0\n";
        let cfg: FileConfig = toml::from_str(text).unwrap();
        assert_eq!(cfg.seed, Some(9));
        assert_eq!(cfg.mc.reps, Some(50));
        assert_eq!(cfg.hac.bandwidth, Some(2.0));
        assert_eq!(cfg.model.beta3, Some(1.0));
        let mc = mc_from_file(McConfig::default(), &cfg.mc).unwrap();
        assert_eq!(mc.reps, 50);
        assert_eq!(mc.n_list, vec![100]);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<FileConfig>("mc.bogus = 1\n").is_err());
    }
}

//! Run configuration: defaults, config-file loading, and validation.
//!
//! Every command reads the same configuration. Values resolve in three
//! layers: built-in defaults, then a TOML config file, then command-line
//! flags, with later layers winning.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::Deserialize;

/// Which dispatch model produced (or should produce) the prices.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Lossless,
    Lossy,
}

impl Mode {
    pub fn dispatch(self) -> congid::DispatchMode {
        match self {
            Mode::Lossless => congid::DispatchMode::Lossless,
            Mode::Lossy => congid::DispatchMode::Lossy,
        }
    }
}

/// One run's complete parameter set.
#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub mode: Mode,
    /// Network case file, TOML or matrix-style tables.
    pub case: Option<PathBuf>,
    /// LMP panel CSV (`node,timestamp,mcc[,mlc,mec]`).
    pub lmp: Option<PathBuf>,
    /// Ground-truth CSV (`interval,line_id,mu,congested`).
    pub truth: Option<PathBuf>,
    /// Directory all artifacts are written to.
    pub out: PathBuf,
    /// Affinity cutoff width: cosines above `1 - eps_cutoff` are edges.
    pub eps_cutoff: f64,
    /// Encoding threshold relative to each row's median magnitude.
    pub eps_encode: f64,
    /// Smallest fraction of columns a hyperplane must contain.
    pub p: f64,
    /// Random-sampling trial budget; derived from `p` when absent.
    pub n_trials: Option<usize>,
    /// Relative standard deviation of load and price noise.
    pub noise: f64,
    /// Number of market intervals to simulate.
    pub intervals: usize,
    pub seed: u64,
    /// Reference node for the lossy price correction.
    pub ref_node: Option<String>,
    /// Relative second-singular-value bound for rank-one clusters.
    pub rank_tol: f64,
    /// Relative norm below which a projected column counts as explained.
    pub zero_tol: f64,
    /// Fraction of squared energy the PCA step may discard.
    pub energy_tol: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            mode: Mode::Lossless,
            case: None,
            lmp: None,
            truth: None,
            out: PathBuf::from("out"),
            eps_cutoff: 0.005,
            eps_encode: 1e-3,
            p: 0.05,
            n_trials: None,
            noise: 0.03,
            intervals: 576,
            seed: 0,
            ref_node: None,
            rank_tol: 1e-6,
            zero_tol: 1e-6,
            energy_tol: 1e-8,
        }
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let config: RunConfig = toml::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))?;
        Ok(config)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        for (name, value) in [
            ("eps-cutoff", self.eps_cutoff),
            ("eps-encode", self.eps_encode),
            ("p", self.p),
            ("rank_tol", self.rank_tol),
            ("zero_tol", self.zero_tol),
            ("energy_tol", self.energy_tol),
        ] {
            if !(value > 0.0 && value < 1.0) {
                bail!("{name} must lie in (0, 1), got {value}");
            }
        }
        if !(0.0..1.0).contains(&self.noise) {
            bail!("noise must lie in [0, 1), got {}", self.noise);
        }
        if self.intervals == 0 {
            bail!("intervals must be at least 1");
        }
        if self.n_trials == Some(0) {
            bail!("n-trials must be at least 1 when given");
        }
        Ok(())
    }

    /// The path a flag-named input must resolve to, checked for existence.
    pub fn input(&self, which: &str) -> anyhow::Result<&Path> {
        let path = match which {
            "case" => self.case.as_deref(),
            "lmp" => self.lmp.as_deref(),
            "truth" => self.truth.as_deref(),
            _ => unreachable!("unknown input {which}"),
        };
        let path = path.ok_or_else(|| anyhow::anyhow!("--{which} is required"))?;
        if !path.exists() {
            bail!("--{which} file {} does not exist", path.display());
        }
        Ok(path)
    }

    /// Path of an artifact inside the output directory.
    pub fn artifact(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_pass_validation() {
        RunConfig::default().validate().unwrap();
    }

    #[test]
    fn fractions_outside_the_unit_interval_are_rejected() {
        let mut config = RunConfig::default();
        config.eps_cutoff = 1.0;
        assert!(config.validate().is_err());
        config.eps_cutoff = 0.005;
        config.p = 0.0;
        assert!(config.validate().is_err());
    }

    #[test]
    fn zero_intervals_are_rejected() {
        let config = RunConfig {
            intervals: 0,
            ..RunConfig::default()
        };
        let message = config.validate().unwrap_err().to_string();
        assert!(message.contains("intervals"));
    }

    #[test]
    fn config_file_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "mode = \"lossy\"\nseed = 9\nnoise = 0.01\n").unwrap();
        let config = RunConfig::from_file(&path).unwrap();
        assert_eq!(config.mode, Mode::Lossy);
        assert_eq!(config.seed, 9);
        assert_eq!(config.noise, 0.01);
        assert_eq!(config.intervals, 576);
    }

    #[test]
    fn unknown_config_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "sead = 9\n").unwrap();
        assert!(RunConfig::from_file(&path).is_err());
    }
}

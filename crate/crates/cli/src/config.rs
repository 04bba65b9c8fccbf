//! Experiment manifests: a TOML file with one table per subcommand. Every key
//! mirrors a command-line flag; flags win over file values.
//!
//! ```toml
//! [sweep]
//! k = [16, 25]
//! trials = 500
//! variants = ["resnet_ssw", "cnn_baseline"]
//! out = "results/sweep.json"
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use shortcut_core::{Error, Result};

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub verify: VerifySection,
    #[serde(default)]
    pub check_grad: CheckGradSection,
    #[serde(default)]
    pub show_teacher: ShowTeacherSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub variant: Option<String>,
    pub k: Option<usize>,
    pub p: Option<usize>,
    pub init: Option<String>,
    pub seed: Option<u64>,
    pub c: Option<f64>,
    pub max_iters: Option<u64>,
    pub stride: Option<u64>,
    pub trap_check_every: Option<u64>,
    pub monitors: Option<Vec<String>>,
    pub out: Option<PathBuf>,
    pub json: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub k: Option<Vec<usize>>,
    pub trials: Option<u64>,
    pub seed: Option<u64>,
    pub variants: Option<Vec<String>>,
    pub max_iters: Option<u64>,
    pub p: Option<usize>,
    pub cnn_eta: Option<f64>,
    pub trap_check_every: Option<u64>,
    pub generic: Option<bool>,
    pub global_tol: Option<f64>,
    pub phi_gap: Option<f64>,
    pub w_gap: Option<f64>,
    pub a_rel: Option<f64>,
    pub out: Option<PathBuf>,
    pub timing_out: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySection {
    pub region: Option<String>,
    pub m: Option<f64>,
    pub big_m: Option<f64>,
    pub delta: Option<f64>,
    pub points: Option<usize>,
    pub seed: Option<u64>,
    pub k: Option<usize>,
    pub p: Option<usize>,
    pub negative_control: Option<bool>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckGradSection {
    pub samples: Option<usize>,
    pub seed: Option<u64>,
    pub states: Option<usize>,
    pub fd_step: Option<f64>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShowTeacherSection {
    pub k: Option<usize>,
    pub p: Option<usize>,
    pub generic: Option<bool>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn parse(text: &str) -> std::result::Result<Self, toml::de::Error> {
        toml::from_str(text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_sections() {
        let c = FileConfig::parse(
            "[sweep]\nk = [16, 25]\ntrials = 10\n[verify]\nregion = \"K\"\nm = 0.2\n",
        )
        .unwrap();
        assert_eq!(c.sweep.k, Some(vec![16, 25]));
        assert_eq!(c.sweep.trials, Some(10));
        assert_eq!(c.verify.m, Some(0.2));
        assert!(c.run.k.is_none());
    }

    #[test]
    fn rejects_unknown_keys() {
        assert!(FileConfig::parse("[sweep]\ntrails = 3\n").is_err());
        assert!(FileConfig::parse("[sweeep]\n").is_err());
    }
}

//! Run configuration: JSON file plus command-line overrides.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::Parser;
use serde::{Deserialize, Serialize};

use crate::field::{Kernel, SymmetryType};
use crate::objective::ObjectiveKind;
use crate::precision::Precision;
use crate::{Error, Result};

/// Where the filter acts.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterPlacement {
    /// Filter the design density before penalization.
    #[default]
    Density,
    /// Penalize directly and filter the sensitivities instead.
    Sensitivity,
}

impl FromStr for FilterPlacement {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "density" => Ok(Self::Density),
            "sensitivity" => Ok(Self::Sensitivity),
            _ => Err(format!("unknown filter placement '{s}' (expected density|sensitivity)")),
        }
    }
}

/// Initial density: `constant`, `trig` or `file:<path>` (raw little-endian f32).
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum InitKind {
    Constant,
    #[default]
    Trig,
    File(PathBuf),
}

impl FromStr for InitKind {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "constant" => Ok(Self::Constant),
            "trig" => Ok(Self::Trig),
            _ => match s.strip_prefix("file:") {
                Some(p) if !p.is_empty() => Ok(Self::File(PathBuf::from(p))),
                _ => Err(format!("unknown init '{s}' (expected constant|trig|file:<path>)")),
            },
        }
    }
}

impl TryFrom<String> for InitKind {
    type Error = String;
    fn try_from(s: String) -> std::result::Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<InitKind> for String {
    fn from(k: InitKind) -> String {
        k.to_string()
    }
}

impl fmt::Display for InitKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Constant => f.write_str("constant"),
            Self::Trig => f.write_str("trig"),
            Self::File(p) => write!(f, "file:{}", p.display()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields, default)]
pub struct RunConfig {
    /// Elements per axis of the cubic cell.
    pub reso: usize,
    /// Target volume fraction.
    pub vol: f64,
    pub young: f64,
    pub poisson: f64,
    pub obj: ObjectiveKind,
    pub beta: f64,
    pub eta: f64,
    pub tau: f64,
    pub gamma: f64,
    pub penal: f64,
    pub filter_radius: f64,
    pub filter_placement: FilterPlacement,
    pub kernel: Kernel,
    pub sym: SymmetryType,
    pub init: InitKind,
    pub basis_n: usize,
    pub seed: u64,
    pub max_iter: usize,
    pub step: f64,
    pub damp: f64,
    /// Relative residual target of every cell-problem solve.
    pub tol: f64,
    pub max_cycles: usize,
    pub precision: Precision,
    /// Worker threads; 0 uses every available core.
    pub workers: usize,
    pub out: PathBuf,
    /// Relative objective change that counts toward convergence; 0 disables the rule.
    pub converge_threshold: f64,
    /// Evaluate `C^H` from a single-precision copy of the displacements.
    pub single_precision_eval: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            reso: 32,
            vol: 0.3,
            young: 1e6,
            poisson: 0.3,
            obj: ObjectiveKind::Bulk,
            beta: 0.8,
            eta: 0.6,
            tau: -1e-3,
            gamma: 0.5,
            penal: 3.0,
            filter_radius: 2.0,
            filter_placement: FilterPlacement::Density,
            kernel: Kernel::Spline4,
            sym: SymmetryType::Reflect6,
            init: InitKind::Trig,
            basis_n: 2,
            seed: 0,
            max_iter: 300,
            step: 0.05,
            damp: 0.5,
            tol: 1e-2,
            max_cycles: 50,
            precision: Precision::Mixed,
            workers: 0,
            out: PathBuf::from("out"),
            converge_threshold: 5e-4,
            single_precision_eval: false,
        }
    }
}

fn range_err(key: &str, msg: impl fmt::Display) -> Error {
    Error::Config(format!("{key}: {msg}"))
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.reso < 4 {
            return Err(range_err("reso", format!("must be at least 4, got {}", self.reso)));
        }
        if !(self.vol > 0.0 && self.vol <= 1.0) {
            return Err(range_err("vol", format!("must lie in (0, 1], got {}", self.vol)));
        }
        if !(self.young > 0.0 && self.young.is_finite()) {
            return Err(range_err("young", format!("must be positive, got {}", self.young)));
        }
        if !(self.poisson > -1.0 && self.poisson < 0.5) {
            return Err(range_err("poisson", format!("must lie in (-1, 0.5), got {}", self.poisson)));
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(range_err("beta", format!("must lie in (0, 1), got {}", self.beta)));
        }
        if !(self.penal >= 1.0 && self.penal.is_finite()) {
            return Err(range_err("penal", format!("must be at least 1, got {}", self.penal)));
        }
        if !(self.filter_radius >= 0.0 && self.filter_radius.is_finite()) {
            return Err(range_err("filter-radius", format!("must be non-negative, got {}", self.filter_radius)));
        }
        if self.basis_n == 0 {
            return Err(range_err("basis-n", "must be at least 1"));
        }
        if !(self.step > 0.0 && self.step < 1.0) {
            return Err(range_err("step", format!("must lie in (0, 1), got {}", self.step)));
        }
        if !(self.damp > 0.0 && self.damp <= 1.0) {
            return Err(range_err("damp", format!("must lie in (0, 1], got {}", self.damp)));
        }
        if !(self.tol > 0.0 && self.tol < 1.0) {
            return Err(range_err("tol", format!("must lie in (0, 1), got {}", self.tol)));
        }
        if self.max_cycles == 0 {
            return Err(range_err("max-cycles", "must be at least 1"));
        }
        if !(self.converge_threshold >= 0.0) {
            return Err(range_err("converge-threshold", "must be non-negative"));
        }
        Ok(())
    }

    /// Read a flat JSON config; unknown keys are rejected.
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json_str(&text).map_err(|e| match e {
            Error::Parse { msg, .. } => Error::Parse {
                what: path.display().to_string(),
                msg,
            },
            other => other,
        })
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse {
            what: "config".into(),
            msg: e.to_string(),
        })
    }
}

/// Command-line flags; every value overrides the config file.
#[derive(Debug, Parser)]
#[command(name = "voxhom", version, about = "Optimize periodic microstructures for a target homogenized elastic behavior")]
pub struct CliArgs {
    /// Flat JSON config file with the same keys as the flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub reso: Option<usize>,
    #[arg(long)]
    pub vol: Option<f64>,
    #[arg(long)]
    pub young: Option<f64>,
    #[arg(long)]
    pub poisson: Option<f64>,
    /// bulk | shear | npr-relaxed | npr-log
    #[arg(long)]
    pub obj: Option<ObjectiveKind>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub penal: Option<f64>,
    #[arg(long)]
    pub filter_radius: Option<f64>,
    /// density | sensitivity
    #[arg(long)]
    pub filter_placement: Option<FilterPlacement>,
    /// spline4 | linear
    #[arg(long)]
    pub kernel: Option<Kernel>,
    /// none | reflect3 | reflect6 | rotate3
    #[arg(long)]
    pub sym: Option<SymmetryType>,
    /// constant | trig | file:<path>
    #[arg(long)]
    pub init: Option<InitKind>,
    #[arg(long)]
    pub basis_n: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    #[arg(long)]
    pub step: Option<f64>,
    #[arg(long)]
    pub damp: Option<f64>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_cycles: Option<usize>,
    /// mixed | double
    #[arg(long)]
    pub precision: Option<Precision>,
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl CliArgs {
    /// Resolve the final configuration: defaults, then the file, then flags.
    pub fn resolve(self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::from_json_file(p)?,
            None => RunConfig::default(),
        };
        macro_rules! apply {
            ($($field:ident),*) => {
                $(if let Some(v) = self.$field { cfg.$field = v; })*
            };
        }
        apply!(
            reso, vol, young, poisson, obj, beta, eta, tau, gamma, penal, filter_radius, filter_placement, kernel, sym,
            init, basis_n, seed, max_iter, step, damp, tol, max_cycles, precision, workers, out
        );
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Parse command-line arguments (first item is the program name).
pub fn parse_config<I, T>(argv: I) -> Result<RunConfig>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let args = CliArgs::try_parse_from(argv).map_err(|e| Error::Config(e.to_string()))?;
    args.resolve()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn no_arguments_give_defaults() {
        let cfg = parse_config(["voxhom"]).unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.penal, 3.0);
        assert_eq!(cfg.filter_radius, 2.0);
        assert_eq!(cfg.max_iter, 300);
        assert_eq!(cfg.step, 0.05);
        assert_eq!(cfg.damp, 0.5);
        assert_eq!(cfg.sym, SymmetryType::Reflect6);
    }

    #[test]
    fn flags_override() {
        let cfg = parse_config(["voxhom", "--reso", "32", "--obj", "shear", "--vol", "0.2", "--tau", "-0.002"]).unwrap();
        assert_eq!(cfg.reso, 32);
        assert_eq!(cfg.obj, ObjectiveKind::Shear);
        assert_eq!(cfg.vol, 0.2);
        assert_eq!(cfg.tau, -0.002);
        let cfg = parse_config(["voxhom", "--init", "file:/tmp/x.raw", "--precision", "double"]).unwrap();
        assert_eq!(cfg.init, InitKind::File("/tmp/x.raw".into()));
        assert_eq!(cfg.precision, Precision::Double);
    }

    #[test]
    fn rejects_bad_values() {
        let err = parse_config(["voxhom", "--vol", "1.5"]).unwrap_err();
        assert!(err.to_string().contains("vol"));
        assert!(parse_config(["voxhom", "--obj", "stiffest"]).is_err());
        assert!(parse_config(["voxhom", "--reso", "2"]).is_err());
    }

    #[test]
    fn file_then_flags() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("cfg.json");
        std::fs::write(&p, r#"{"reso": 16, "obj": "npr-log", "init": "constant", "vol": 0.25}"#).unwrap();
        let cfg = parse_config(["voxhom", "--config", p.to_str().unwrap(), "--vol", "0.4"]).unwrap();
        assert_eq!(cfg.reso, 16);
        assert_eq!(cfg.obj, ObjectiveKind::NprLog);
        assert_eq!(cfg.init, InitKind::Constant);
        assert_eq!(cfg.vol, 0.4);
    }

    #[test]
    fn unknown_keys_are_named() {
        let err = RunConfig::from_json_str(r#"{"resolution": 16}"#).unwrap_err();
        assert!(err.to_string().contains("resolution"), "{err}");
    }

    #[test]
    fn json_round_trip() {
        let cfg = RunConfig {
            init: InitKind::File("a/b.raw".into()),
            ..RunConfig::default()
        };
        let text = serde_json::to_string(&cfg).unwrap();
        assert!(text.contains("\"filter-radius\""));
        assert_eq!(RunConfig::from_json_str(&text).unwrap(), cfg);
    }
}

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

use hmhomog::bem::BemOptions;
use hmhomog::eim::SolverConfig;
use hmhomog::hmatrix::AcaMode;
use hmhomog::microstructure::Domain;
use hmhomog::Vec3;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum DomainKind {
    Ball,
    Periodic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum KernelChoice {
    Free,
    Periodic,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum AcaChoice {
    Full,
    Partial,
}

impl From<AcaChoice> for AcaMode {
    fn from(c: AcaChoice) -> Self {
        match c {
            AcaChoice::Full => AcaMode::Full,
            AcaChoice::Partial => AcaMode::Partial,
        }
    }
}

/// Every tunable of a run. Read from an optional JSON file, then patched by
/// command-line flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Microstructure file; when absent the generator parameters are used.
    pub input: Option<PathBuf>,
    pub domain: DomainKind,
    pub ball_radius: f64,
    pub count: usize,
    /// Common sphere radius. Derived from `volume_fraction` when absent.
    pub radius: Option<f64>,
    pub volume_fraction: f64,
    pub seed: u64,
    pub max_attempts: usize,
    pub kappa_matrix: f64,
    pub kappa_inclusion: f64,
    pub field: [f64; 3],

    pub epsilon: f64,
    pub eta: f64,
    /// Leaf size; each solver has its own default.
    pub c_leaf: Option<usize>,
    pub aca: AcaChoice,
    pub epsilon_lu: Option<f64>,
    pub precondition: bool,
    pub tol: Option<f64>,
    pub max_iter: Option<usize>,
    pub restart: usize,

    /// Periodic Green expansion degree.
    pub degree: usize,
    pub level: u32,
    pub kernel: KernelChoice,

    pub out: Option<PathBuf>,
    pub stats: Option<PathBuf>,
    pub field_out: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let eim = SolverConfig::default();
        Self {
            input: None,
            domain: DomainKind::Ball,
            ball_radius: 1.0,
            count: 200,
            radius: None,
            volume_fraction: 0.3,
            seed: 1,
            max_attempts: 10_000,
            kappa_matrix: 1.0,
            kappa_inclusion: 100.0,
            field: [1.0, 0.0, 0.0],
            epsilon: eim.epsilon,
            eta: eim.eta,
            c_leaf: None,
            aca: AcaChoice::Partial,
            epsilon_lu: None,
            precondition: true,
            tol: None,
            max_iter: None,
            restart: eim.restart,
            degree: 9,
            level: 2,
            kernel: KernelChoice::Periodic,
            out: None,
            stats: None,
            field_out: None,
        }
    }
}

/// Flags shared by every subcommand. Each one, when given, replaces the
/// value from the config file.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    /// JSON config file; flags override its entries.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Microstructure JSON produced by `generate`.
    #[arg(long, global = true)]
    pub input: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub domain: Option<DomainKind>,
    #[arg(long, global = true)]
    pub ball_radius: Option<f64>,
    /// Number of inclusions.
    #[arg(long, short = 'n', global = true)]
    pub count: Option<usize>,
    #[arg(long, global = true)]
    pub radius: Option<f64>,
    #[arg(long, global = true)]
    pub volume_fraction: Option<f64>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub max_attempts: Option<usize>,
    #[arg(long, global = true)]
    pub kappa_matrix: Option<f64>,
    #[arg(long, global = true)]
    pub kappa_inclusion: Option<f64>,
    /// Macroscopic gradient as `x,y,z`.
    #[arg(long, global = true, value_delimiter = ',', num_args = 3)]
    pub field: Option<Vec<f64>>,
    #[arg(long, global = true)]
    pub epsilon: Option<f64>,
    #[arg(long, global = true)]
    pub eta: Option<f64>,
    #[arg(long, global = true)]
    pub c_leaf: Option<usize>,
    #[arg(long, global = true, value_enum)]
    pub aca: Option<AcaChoice>,
    #[arg(long, global = true)]
    pub epsilon_lu: Option<f64>,
    /// Disable the H-LU preconditioner.
    #[arg(long, global = true)]
    pub no_precondition: bool,
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    #[arg(long, global = true)]
    pub max_iter: Option<usize>,
    #[arg(long, global = true)]
    pub restart: Option<usize>,
    #[arg(long, short = 'L', global = true)]
    pub degree: Option<usize>,
    #[arg(long, global = true)]
    pub level: Option<u32>,
    #[arg(long, global = true, value_enum)]
    pub kernel: Option<KernelChoice>,
    /// Main output (JSON results or study CSV).
    #[arg(long, short = 'o', global = true)]
    pub out: Option<PathBuf>,
    /// Statistics CSV.
    #[arg(long, global = true)]
    pub stats: Option<PathBuf>,
    /// Corrector slice CSV.
    #[arg(long, global = true)]
    pub field_out: Option<PathBuf>,
}

macro_rules! patch {
    ($cfg:ident, $ov:ident, $($f:ident),*) => {
        $(if let Some(v) = $ov.$f.clone() { $cfg.$f = v; })*
    };
}

macro_rules! patch_opt {
    ($cfg:ident, $ov:ident, $($f:ident),*) => {
        $(if $ov.$f.is_some() { $cfg.$f = $ov.$f.clone(); })*
    };
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    /// File (if any) patched by flags, then validated.
    pub fn resolve(ov: &Overrides) -> Result<Self, CliError> {
        let mut cfg = match &ov.config {
            Some(p) => Self::from_file(p)?,
            None => Self::default(),
        };
        patch!(cfg, ov, domain, ball_radius, count, volume_fraction, seed, max_attempts, kappa_matrix, kappa_inclusion);
        patch!(cfg, ov, epsilon, eta, aca, restart, degree, level, kernel);
        patch_opt!(cfg, ov, input, radius, c_leaf, epsilon_lu, tol, max_iter, out, stats, field_out);
        if let Some(f) = &ov.field {
            cfg.field = [f[0], f[1], f[2]];
        }
        if ov.no_precondition {
            cfg.precondition = false;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let positive = [
            ("epsilon", Some(self.epsilon)),
            ("eta", Some(self.eta)),
            ("tol", self.tol),
            ("epsilon_lu", self.epsilon_lu),
            ("ball_radius", Some(self.ball_radius)),
            ("radius", self.radius),
            ("volume_fraction", Some(self.volume_fraction)),
            ("kappa_matrix", Some(self.kappa_matrix)),
            ("kappa_inclusion", Some(self.kappa_inclusion)),
        ];
        for (name, v) in positive {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(CliError::Config(format!("{name} must be positive, got {v}")));
                }
            }
        }
        if self.volume_fraction >= 1.0 {
            return Err(CliError::Config(format!("volume_fraction must be below one, got {}", self.volume_fraction)));
        }
        if self.c_leaf == Some(0) || self.restart == 0 || self.max_iter == Some(0) {
            return Err(CliError::Config("c_leaf, restart and max_iter must be at least one".into()));
        }
        if self.field.iter().all(|&c| c == 0.0) {
            return Err(CliError::Config("field must be nonzero".into()));
        }
        Ok(())
    }

    pub fn domain(&self) -> Domain {
        match self.domain {
            DomainKind::Ball => Domain::Ball {
                radius: self.ball_radius,
            },
            DomainKind::Periodic => Domain::PeriodicCube,
        }
    }

    /// Explicit radius, or the one giving `volume_fraction` with `count`
    /// equal spheres.
    pub fn sphere_radius(&self) -> f64 {
        self.radius.unwrap_or_else(|| {
            let v = self.domain().volume() * self.volume_fraction / self.count.max(1) as f64;
            (3.0 * v / (4.0 * std::f64::consts::PI)).cbrt()
        })
    }

    pub fn field(&self) -> Vec3 {
        Vec3::new(self.field[0], self.field[1], self.field[2])
    }

    pub fn solver(&self) -> SolverConfig {
        let d = SolverConfig::default();
        SolverConfig {
            epsilon: self.epsilon,
            eta: self.eta,
            c_leaf: self.c_leaf.unwrap_or(d.c_leaf),
            mode: self.aca.into(),
            epsilon_lu: self.epsilon_lu,
            precondition: self.precondition,
            tol: self.tol.unwrap_or(d.tol),
            max_iter: self.max_iter.unwrap_or(d.max_iter),
            restart: self.restart,
        }
    }

    pub fn bem(&self) -> BemOptions {
        let d = BemOptions::default();
        BemOptions {
            epsilon: self.epsilon,
            eta: self.eta,
            c_leaf: self.c_leaf.unwrap_or(d.c_leaf),
            mode: self.aca.into(),
            tol: self.tol.unwrap_or(d.tol),
            restart: self.restart,
            max_iter: self.max_iter.unwrap_or(d.max_iter),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        std::fs::write(&path, r#"{"count": 50, "epsilon": 0.01, "seed": 9}"#).unwrap();
        let ov = Overrides {
            config: Some(path),
            epsilon: Some(1e-4),
            ..Overrides::default()
        };
        let cfg = RunConfig::resolve(&ov).unwrap();
        assert_eq!((cfg.count, cfg.seed, cfg.epsilon), (50, 9, 1e-4));
    }

    #[test]
    fn rejects_bad_values() {
        for ov in [
            Overrides {
                eta: Some(0.0),
                ..Overrides::default()
            },
            Overrides {
                tol: Some(-1.0),
                ..Overrides::default()
            },
        ] {
            assert!(matches!(RunConfig::resolve(&ov), Err(CliError::Config(_))));
        }
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.json");
        std::fs::write(&path, r#"{"unknown_key": 1}"#).unwrap();
        let ov = Overrides {
            config: Some(path),
            ..Overrides::default()
        };
        assert!(matches!(RunConfig::resolve(&ov), Err(CliError::Config(_))));
    }

    #[test]
    fn radius_from_fraction() {
        let cfg = RunConfig {
            count: 200,
            volume_fraction: 0.3,
            ..RunConfig::default()
        };
        assert!((cfg.sphere_radius() - (0.3f64 / 200.0).cbrt()).abs() < 1e-14);
    }
}

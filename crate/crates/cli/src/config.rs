//! Run configuration: a flat TOML file merged with command-line overrides.

use std::f64::consts::FRAC_PI_2;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use stepgl::gldomain::build_geometry;
use stepgl::halfplane::WedgeParams;
use stepgl::spectral1d::check_field_ratio;

/// Environment variable naming the default output directory.
pub const OUT_ENV: &str = "STEPGL_OUT";
pub const DEFAULT_OUT: &str = "stepgl-out";
pub const TOOL_VERSION: &str = concat!("stepgl ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Theta0,
    Beta,
    Mu,
    EffEnergy,
    GlSolve,
    Verify,
    PhaseDiagram,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Theta0 => "theta0",
            Command::Beta => "beta",
            Command::Mu => "mu",
            Command::EffEnergy => "eff-energy",
            Command::GlSolve => "gl-solve",
            Command::Verify => "verify",
            Command::PhaseDiagram => "phase-diagram",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// Unit disk cut by a diameter, `a = −1`.
    DiskDiameter,
}

/// Every key a run accepts. Keys left unset take per-command defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize, clap::Args)]
#[serde(deny_unknown_fields)]
pub struct Params {
    /// Command to run when given in a config file.
    #[arg(skip)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub command: Option<Command>,
    /// Wedge angle in radians.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    /// Field ratio in `[−1, 1) \ {0}`.
    #[arg(long, allow_hyphen_values = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    /// Field strength ratio `H / κ`.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    /// Comma-separated increasing list of `b`.
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b_grid: Option<Vec<f64>>,
    /// Ginzburg–Landau parameter `κ`.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    /// Comma-separated list of `κ`.
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kappa_grid: Option<Vec<f64>>,
    /// Half-disk truncation radius.
    #[arg(long = "R")]
    #[serde(rename = "R", skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    /// Half-disk mesh spacing.
    #[arg(long = "h")]
    #[serde(rename = "h", skip_serializing_if = "Option::is_none")]
    pub spacing: Option<f64>,
    /// Disk radius of the GL domain.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    /// Signed distance of the chord from the disk center.
    #[arg(long, allow_hyphen_values = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub chord_offset: Option<f64>,
    /// GL grid spacing in magnetic lengths.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    /// Solver tolerance (meaning depends on the command).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    /// Seed for randomized initial states.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub preset: Option<Preset>,
    /// Worker threads for sweeps.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub jobs: Option<usize>,
    /// Write grid files of computed fields.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub save_fields: Option<bool>,
    /// Output directory; defaults to `$STEPGL_OUT`, then `stepgl-out`.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

macro_rules! overlay {
    ($base:expr, $over:expr, $($f:ident),*) => {
        Params { $($f: $over.$f.or($base.$f)),* }
    };
}

impl Params {
    /// Field-wise `over` where set, `self` otherwise.
    pub fn overlay(self, over: Params) -> Params {
        overlay!(
            self,
            over,
            command,
            alpha,
            a,
            b,
            b_grid,
            kappa,
            kappa_grid,
            radius,
            spacing,
            rho,
            chord_offset,
            eta,
            tol,
            seed,
            preset,
            jobs,
            save_fields,
            out
        )
    }

    pub fn from_toml(text: &str) -> Result<Params, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError {
            key: unknown_key(e.message()).unwrap_or_else(|| "config".into()),
            reason: e.message().trim().to_string(),
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("flat parameters serialize")
    }
}

fn unknown_key(message: &str) -> Option<String> {
    let rest = message.split("unknown field `").nth(1)?;
    Some(rest.split('`').next()?.to_string())
}

/// Rejected configuration, naming the offending key.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub key: String,
    pub reason: String,
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "invalid `{}`: {}", self.key, self.reason)
    }
}

impl std::error::Error for ConfigError {}

fn bad(key: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError {
        key: key.to_string(),
        reason: reason.into(),
    }
}

/// Validated configuration with provenance.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub command: Command,
    pub params: Params,
    /// SHA-256 of the command and parameters, excluding the output directory.
    pub config_hash: String,
    pub config_file: Option<PathBuf>,
    pub tool_version: String,
}

impl RunConfig {
    /// Merges the optional config file with `cli`, applies the preset and
    /// validates every key the command uses.
    pub fn resolve(command: Option<Command>, config_file: Option<&Path>, cli: Params) -> Result<Self, ConfigError> {
        let file = match config_file {
            Some(path) => {
                let text =
                    std::fs::read_to_string(path).map_err(|e| bad("config", format!("{}: {e}", path.display())))?;
                Params::from_toml(&text)?
            }
            None => Params::default(),
        };
        let mut params = file.overlay(cli);
        let command = command
            .or(params.command)
            .ok_or_else(|| bad("command", "no command given"))?;
        params.command = Some(command);
        if params.preset == Some(Preset::DiskDiameter) {
            let preset = Params {
                alpha: Some(FRAC_PI_2),
                a: Some(-1.0),
                rho: Some(1.0),
                chord_offset: Some(0.0),
                ..Params::default()
            };
            params = preset.overlay(params);
        }
        validate(command, &params)?;
        let mut hashed = params.clone();
        hashed.out = None;
        let digest = Sha256::digest(hashed.to_toml().as_bytes());
        let config_hash = digest.iter().map(|b| format!("{b:02x}")).collect();
        Ok(Self {
            command,
            params,
            config_hash,
            config_file: config_file.map(Path::to_path_buf),
            tool_version: TOOL_VERSION.to_string(),
        })
    }

    pub fn out_dir(&self) -> PathBuf {
        self.params
            .out
            .clone()
            .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
    }

    /// Short prefix of the hash used in output file names.
    pub fn tag(&self) -> String {
        format!("{}-{}", self.command.name(), &self.config_hash[..12])
    }
}

fn positive(key: &str, v: Option<f64>) -> Result<(), ConfigError> {
    match v {
        Some(x) if !(x > 0.0 && x.is_finite()) => Err(bad(key, format!("{x} must be positive"))),
        _ => Ok(()),
    }
}

fn require<T: Clone>(key: &str, v: &Option<T>) -> Result<T, ConfigError> {
    v.clone().ok_or_else(|| bad(key, "required by this command"))
}

fn check_grid(key: &str, grid: &[f64], increasing: bool) -> Result<(), ConfigError> {
    if grid.is_empty() {
        return Err(bad(key, "empty grid"));
    }
    if let Some(x) = grid.iter().find(|x| !(**x > 0.0 && x.is_finite())) {
        return Err(bad(key, format!("entry {x} must be positive")));
    }
    if increasing && grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(bad(key, "must be strictly increasing"));
    }
    Ok(())
}

fn check_wedge(p: &Params) -> Result<(), ConfigError> {
    let alpha = require("alpha", &p.alpha)?;
    let a = require("a", &p.a)?;
    WedgeParams::new(alpha, a)
        .map(|_| ())
        .map_err(|e| core_error("alpha", e))
}

fn check_geometry(p: &Params) -> Result<(), ConfigError> {
    let rho = p.rho.unwrap_or(1.0);
    positive("rho", Some(rho))?;
    let a = require("a", &p.a)?;
    build_geometry(rho, p.chord_offset.unwrap_or(0.0), a)
        .map(|_| ())
        .map_err(|e| core_error("chord_offset", e))
}

/// Maps a library validation error to the offending configuration key.
fn core_error(fallback: &'static str, e: stepgl::Error) -> ConfigError {
    let key = match &e {
        stepgl::Error::InvalidParameter { name, .. } => match *name {
            "alpha" | "a" | "rho" => *name,
            "d" | "chord_offset" => "chord_offset",
            _ => fallback,
        },
        _ => fallback,
    };
    bad(key, e.to_string())
}

fn check_half_disk(p: &Params) -> Result<(), ConfigError> {
    positive("R", p.radius)?;
    positive("h", p.spacing)?;
    if let Some(r) = p.radius {
        if r < 15.0 {
            return Err(bad("R", format!("truncation radius {r} below 15")));
        }
        if let Some(h) = p.spacing {
            if h > r / 100.0 {
                return Err(bad("h", format!("spacing {h} above R/100")));
            }
        }
    }
    Ok(())
}

/// Rejects out-of-range parameters before any solver runs.
pub fn validate(command: Command, p: &Params) -> Result<(), ConfigError> {
    positive("tol", p.tol)?;
    positive("eta", p.eta)?;
    if p.jobs == Some(0) {
        return Err(bad("jobs", "at least one worker"));
    }
    match command {
        Command::Theta0 => {}
        Command::Beta => {
            let a = require("a", &p.a)?;
            check_field_ratio(a, false).map_err(|e| bad("a", e.to_string()))?;
        }
        Command::Mu => {
            check_wedge(p)?;
            check_half_disk(p)?;
        }
        Command::EffEnergy => {
            check_wedge(p)?;
            check_half_disk(p)?;
            positive("b", p.b)?;
            match (&p.b, &p.b_grid) {
                (None, None) => return Err(bad("b", "give b or b_grid")),
                (_, Some(g)) => check_grid("b_grid", g, true)?,
                _ => {}
            }
        }
        Command::GlSolve => {
            check_geometry(p)?;
            positive("kappa", Some(require("kappa", &p.kappa)?))?;
            positive("b", Some(require("b", &p.b)?))?;
        }
        Command::Verify => {
            if p.preset.is_none() {
                return Err(bad("preset", "verify needs a preset"));
            }
            check_geometry(p)?;
            check_half_disk(p)?;
            positive("kappa", Some(require("kappa", &p.kappa)?))?;
            positive("b", p.b)?;
        }
        Command::PhaseDiagram => {
            check_geometry(p)?;
            check_grid("kappa_grid", &require("kappa_grid", &p.kappa_grid)?, false)?;
            check_grid("b_grid", &require("b_grid", &p.b_grid)?, true)?;
            check_half_disk(p)?;
        }
    }
    Ok(())
}

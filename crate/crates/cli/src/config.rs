//! Run configuration: a JSON object with a `command`, a master `seed` and
//! command-specific `params`.

use std::path::PathBuf;

use parisi_core::eval::MeasureSpec;
use parisi_core::order::PathRecord;
use parisi_core::saddle::{Scenario, UDomain};
use parisi_core::sk::OverlapConstraint;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CommandKind {
    Eval,
    Pde,
    Rpc,
    Sk,
    Gaussian,
    Saddle,
    VerifyAll,
}

impl CommandKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Eval => "eval",
            Self::Pde => "pde",
            Self::Rpc => "rpc",
            Self::Sk => "sk",
            Self::Gaussian => "gaussian",
            Self::Saddle => "saddle",
            Self::VerifyAll => "verify-all",
        }
    }

    /// Commands whose output depends on random draws.
    pub fn stochastic(self) -> bool {
        matches!(self, Self::Eval | Self::Rpc | Self::Sk | Self::Saddle)
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    command: CommandKind,
    #[serde(default)]
    seed: Option<u64>,
    #[serde(default)]
    out: Option<PathBuf>,
    #[serde(default)]
    workers: Option<usize>,
    #[serde(default)]
    params: Option<serde_json::Value>,
}

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub command: Command,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
}

#[derive(Clone, Debug)]
pub enum Command {
    Eval(EvalParams),
    Pde(PdeParams),
    Rpc(RpcParams),
    Sk(SkParams),
    Gaussian(GaussianParams),
    Saddle(SaddleParams),
    VerifyAll(VerifyParams),
}

impl Command {
    pub fn kind(&self) -> CommandKind {
        match self {
            Self::Eval(_) => CommandKind::Eval,
            Self::Pde(_) => CommandKind::Pde,
            Self::Rpc(_) => CommandKind::Rpc,
            Self::Sk(_) => CommandKind::Sk,
            Self::Gaussian(_) => CommandKind::Gaussian,
            Self::Saddle(_) => CommandKind::Saddle,
            Self::VerifyAll(_) => CommandKind::VerifyAll,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EngineSpec {
    GaussHermite { nodes: usize },
    MonteCarlo { samples: usize, replicas: usize },
}

impl Default for EngineSpec {
    fn default() -> Self {
        Self::GaussHermite { nodes: 32 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalParams {
    pub measure: MeasureSpec,
    pub beta: f64,
    /// Defaults to zero.
    #[serde(default)]
    pub lambda: Option<Vec<Vec<f64>>>,
    pub paths: Vec<PathRecord>,
    #[serde(default)]
    pub engine: EngineSpec,
}

fn default_rademacher() -> MeasureSpec {
    MeasureSpec::Rademacher {}
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PdeParams {
    pub beta: f64,
    pub x: Vec<f64>,
    pub q: Vec<f64>,
    #[serde(default = "one")]
    pub u: f64,
    /// Spatial steps; one solution per entry.
    pub h: Vec<f64>,
    #[serde(default = "default_rademacher")]
    pub measure: MeasureSpec,
    #[serde(default)]
    pub lambda: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RepresentationParams {
    pub beta: f64,
    pub q: Vec<f64>,
    #[serde(default = "one")]
    pub u: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RpcParams {
    pub x: Vec<f64>,
    pub m: usize,
    pub replicas: usize,
    /// Sampled pairs per tree; 0 sums all pairs exactly when affordable.
    #[serde(default)]
    pub pairs: usize,
    /// Also estimate the cascade representation of `X_0` for a Rademacher terminal.
    #[serde(default)]
    pub representation: Option<RepresentationParams>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SkMethod {
    Exact,
    Tempering,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemperingParams {
    #[serde(default)]
    pub rungs: Option<usize>,
    #[serde(default)]
    pub sweeps: Option<usize>,
    #[serde(default)]
    pub burn_in: Option<usize>,
    #[serde(default)]
    pub swap_every: Option<usize>,
    #[serde(default)]
    pub chains: Option<usize>,
}

fn exact() -> SkMethod {
    SkMethod::Exact
}

fn all() -> OverlapConstraint {
    OverlapConstraint::All
}

fn five() -> usize {
    5
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SkParams {
    pub ns: Vec<usize>,
    pub betas: Vec<f64>,
    pub replicas: usize,
    #[serde(default = "default_rademacher")]
    pub measure: MeasureSpec,
    /// Points per axis when a Gaussian measure is discretised.
    #[serde(default = "five")]
    pub nodes: usize,
    #[serde(default = "all")]
    pub constraint: OverlapConstraint,
    #[serde(default = "exact")]
    pub method: SkMethod,
    #[serde(default)]
    pub tempering: Option<TemperingParams>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EquivalenceParams {
    pub c: f64,
    pub u: f64,
    #[serde(default)]
    pub h: f64,
    pub levels: Vec<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianParams {
    pub c: Vec<f64>,
    pub u: Vec<f64>,
    pub beta: f64,
    #[serde(default)]
    pub equivalence: Option<EquivalenceParams>,
}

fn general() -> Scenario {
    Scenario::General
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SaddleParams {
    pub beta: f64,
    pub measure: MeasureSpec,
    pub levels: usize,
    pub domain: UDomain,
    #[serde(default = "general")]
    pub scenario: Scenario,
    #[serde(default)]
    pub restarts: Option<usize>,
    #[serde(default)]
    pub hadamard: bool,
    #[serde(default)]
    pub residual: bool,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyParams {
    #[serde(default)]
    pub criteria: Option<Vec<usize>>,
}

fn params<T: DeserializeOwned>(value: serde_json::Value) -> Result<T, CliError> {
    serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        let at = if path == "." { "params".to_string() } else { format!("params.{path}") };
        CliError::Config(format!("at `{at}`: {}", e.inner()))
    })
}

/// Parses and validates a configuration document.
pub fn parse(text: &str) -> Result<RunConfig, CliError> {
    let mut de = serde_json::Deserializer::from_str(text);
    let raw: RawConfig = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let path = e.path().to_string();
        CliError::Config(format!("at `{path}`: {}", e.inner()))
    })?;
    let value = raw.params.unwrap_or_else(|| serde_json::json!({}));
    let command = match raw.command {
        CommandKind::Eval => Command::Eval(params(value)?),
        CommandKind::Pde => Command::Pde(params(value)?),
        CommandKind::Rpc => Command::Rpc(params(value)?),
        CommandKind::Sk => Command::Sk(params(value)?),
        CommandKind::Gaussian => Command::Gaussian(params(value)?),
        CommandKind::Saddle => Command::Saddle(params(value)?),
        CommandKind::VerifyAll => Command::VerifyAll(params(value)?),
    };
    if raw.workers == Some(0) {
        return Err(CliError::Config("at `workers`: must be at least 1".into()));
    }
    Ok(RunConfig {
        command,
        seed: raw.seed,
        out: raw.out,
        workers: raw.workers,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_name_their_path() {
        let e = parse(r#"{"command": "pde", "seed": 1, "params": {"beta": 0.5, "x": [0.5], "q": [0.2], "h": [0.01], "bogus": 1}}"#)
            .unwrap_err();
        assert!(e.to_string().contains("params"), "{e}");
        assert!(e.to_string().contains("bogus"), "{e}");
        let e = parse(r#"{"command": "pde", "sed": 1}"#).unwrap_err();
        assert!(e.to_string().contains("sed"), "{e}");
        let e = parse(r#"{"command": "sk", "params": {"ns": [4], "betas": ["x"], "replicas": 2}}"#).unwrap_err();
        assert!(e.to_string().contains("params.betas[0]"), "{e}");
    }

    #[test]
    fn defaults_fill_in() {
        let c = parse(r#"{"command": "verify-all"}"#).unwrap();
        assert!(matches!(c.command, Command::VerifyAll(VerifyParams { criteria: None })));
        let c = parse(r#"{"command": "sk", "seed": 3, "params": {"ns": [4], "betas": [1.0], "replicas": 2}}"#).unwrap();
        match c.command {
            Command::Sk(p) => {
                assert_eq!(p.method, SkMethod::Exact);
                assert_eq!(p.constraint, OverlapConstraint::All);
            }
            _ => panic!(),
        }
    }

    #[test]
    fn unknown_command_is_rejected() {
        assert!(parse(r#"{"command": "plot"}"#).is_err());
        assert!(parse(r#"{"command": "verify-all", "workers": 0}"#).is_err());
    }
}

//! Runtime configuration, settable in code or through `WSTASKS_*` variables.

use thiserror::Error;

use crate::region::DependenceMode;
use crate::worksharing::{build_teams, Team};

pub const ENV_WORKERS: &str = "WSTASKS_WORKERS";
pub const ENV_TEAM_SIZE: &str = "WSTASKS_TEAM_SIZE";
pub const ENV_SOCKET_SIZE: &str = "WSTASKS_SOCKET_SIZE";
pub const ENV_DEPS: &str = "WSTASKS_DEPS";
pub const ENV_TRACE: &str = "WSTASKS_TRACE";
pub const ENV_PIN: &str = "WSTASKS_PIN";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ConfigError {
    #[error("at least one worker is required")]
    NoWorkers,
    #[error("team size must be at least 1")]
    ZeroTeamSize,
    #[error("socket size must be at least 1")]
    ZeroSocketSize,
    #[error("team size {team_size} exceeds socket size {socket_size}; teams may not span sockets")]
    TeamSpansSockets {
        team_size: usize,
        socket_size: usize,
    },
    #[error("invalid value `{value}` for {name}: {reason}")]
    InvalidVar {
        name: String,
        value: String,
        reason: String,
    },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RuntimeConfig {
    pub workers: usize,
    /// Maximum team size; `None` means one team per socket.
    pub team_size: Option<usize>,
    /// Workers per simulated socket; `None` means a single socket.
    pub socket_size: Option<usize>,
    pub dependence_mode: DependenceMode,
    pub trace: bool,
    pub pin: bool,
}

impl Default for RuntimeConfig {
    fn default() -> Self {
        RuntimeConfig {
            workers: std::thread::available_parallelism().map_or(1, |n| n.get()),
            team_size: None,
            socket_size: None,
            dependence_mode: DependenceMode::Region,
            trace: false,
            pin: false,
        }
    }
}

impl RuntimeConfig {
    pub fn with_workers(workers: usize) -> Self {
        RuntimeConfig {
            workers,
            ..Default::default()
        }
    }

    pub fn team_size(mut self, n: usize) -> Self {
        self.team_size = Some(n);
        self
    }

    pub fn socket_size(mut self, n: usize) -> Self {
        self.socket_size = Some(n);
        self
    }

    pub fn dependence_mode(mut self, mode: DependenceMode) -> Self {
        self.dependence_mode = mode;
        self
    }

    pub fn trace(mut self, on: bool) -> Self {
        self.trace = on;
        self
    }

    pub fn pin(mut self, on: bool) -> Self {
        self.pin = on;
        self
    }

    pub fn effective_socket_size(&self) -> usize {
        self.socket_size.unwrap_or(self.workers)
    }

    pub fn teams(&self) -> Result<Vec<Team>, ConfigError> {
        build_teams(self.workers, self.team_size, self.effective_socket_size())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.teams().map(|_| ())
    }

    /// Defaults overridden by the process environment.
    pub fn from_env() -> Result<Self, ConfigError> {
        RuntimeConfig::default().apply_vars(std::env::vars())
    }

    /// Overrides fields from `(name, value)` pairs; unrelated names are ignored.
    pub fn apply_vars<I, K, V>(mut self, vars: I) -> Result<Self, ConfigError>
    where
        I: IntoIterator<Item = (K, V)>,
        K: AsRef<str>,
        V: AsRef<str>,
    {
        for (name, value) in vars {
            let (name, value) = (name.as_ref(), value.as_ref());
            let bad = |reason: &str| ConfigError::InvalidVar {
                name: name.to_string(),
                value: value.to_string(),
                reason: reason.to_string(),
            };
            let count = || {
                value
                    .trim()
                    .parse::<usize>()
                    .map_err(|_| bad("expected a non-negative integer"))
            };
            match name {
                ENV_WORKERS => self.workers = count()?,
                ENV_TEAM_SIZE => self.team_size = Some(count()?),
                ENV_SOCKET_SIZE => self.socket_size = Some(count()?),
                ENV_DEPS => self.dependence_mode = value.parse().map_err(|e: String| bad(&e))?,
                ENV_TRACE => {
                    self.trace = parse_flag(value).ok_or_else(|| bad("expected on/off"))?
                }
                ENV_PIN => self.pin = parse_flag(value).ok_or_else(|| bad("expected on/off"))?,
                _ => {}
            }
        }
        Ok(self)
    }
}

fn parse_flag(value: &str) -> Option<bool> {
    match value.trim().to_ascii_lowercase().as_str() {
        "1" | "on" | "true" | "yes" => Some(true),
        "0" | "off" | "false" | "no" => Some(false),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vars_override_defaults() {
        let cfg = RuntimeConfig::with_workers(2)
            .apply_vars([
                (ENV_WORKERS, "8"),
                (ENV_TEAM_SIZE, "4"),
                (ENV_SOCKET_SIZE, "4"),
                (ENV_DEPS, "discrete"),
                (ENV_TRACE, "on"),
                ("PATH", "/usr/bin"),
            ])
            .unwrap();
        assert_eq!(cfg.workers, 8);
        assert_eq!(cfg.team_size, Some(4));
        assert_eq!(cfg.dependence_mode, DependenceMode::Discrete);
        assert!(cfg.trace);
        assert!(!cfg.pin);
        assert_eq!(cfg.teams().unwrap().len(), 2);
    }

    #[test]
    fn malformed_vars_are_rejected() {
        let err = RuntimeConfig::default()
            .apply_vars([(ENV_WORKERS, "many")])
            .unwrap_err();
        assert!(matches!(err, ConfigError::InvalidVar { ref name, .. } if name == ENV_WORKERS));
        assert!(RuntimeConfig::default()
            .apply_vars([(ENV_TRACE, "maybe")])
            .is_err());
        assert!(RuntimeConfig::default()
            .apply_vars([(ENV_DEPS, "both")])
            .is_err());
    }

    #[test]
    fn validation_uses_team_rules() {
        assert_eq!(
            RuntimeConfig::with_workers(0).validate(),
            Err(ConfigError::NoWorkers)
        );
        let cfg = RuntimeConfig::with_workers(8).socket_size(4).team_size(8);
        assert!(matches!(
            cfg.validate(),
            Err(ConfigError::TeamSpansSockets { .. })
        ));
        assert!(RuntimeConfig::with_workers(6)
            .team_size(4)
            .validate()
            .is_ok());
    }
}

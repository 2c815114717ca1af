//! One TOML file for every tunable, with defaults matching the reference
//! setup. Missing keys fall back to defaults; unknown keys are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arena::TournamentConfig;
use crate::features::FeatureConfig;
use crate::network::Arch;
use crate::rules::{MapDef, MapError, Rules};
use crate::search::{SearchConfig, SearchError};
use crate::td::TrainConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parsing config: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("map: {0}")]
    Map(#[from] MapError),
    #[error(transparent)]
    Search(#[from] SearchError),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RulesConfig {
    /// Map file; the bundled classic map when absent.
    pub map: Option<String>,
    pub income_floor: u32,
    pub initial_armies: u32,
    pub turn_cap: u32,
}

impl Default for RulesConfig {
    fn default() -> Self {
        RulesConfig {
            map: None,
            income_floor: Rules::DEFAULT_INCOME_FLOOR,
            initial_armies: Rules::DEFAULT_INITIAL_ARMIES,
            turn_cap: Rules::DEFAULT_TURN_CAP,
        }
    }
}

impl RulesConfig {
    pub fn build(&self) -> Result<Rules, ConfigError> {
        let map = match &self.map {
            None => MapDef::classic(),
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
                    path: path.clone(),
                    source,
                })?;
                MapDef::parse(&text)?
            }
        };
        Ok(Rules {
            map,
            income_floor: self.income_floor,
            initial_armies: self.initial_armies,
            turn_cap: self.turn_cap,
        })
    }
}

/// Hidden layer widths.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    pub gcn1: usize,
    pub gcn2: usize,
    pub fc1: usize,
    pub fc2: usize,
    pub fc3: usize,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            gcn1: 60,
            gcn2: 30,
            fc1: 60,
            fc2: 60,
            fc3: 30,
        }
    }
}

impl NetworkConfig {
    pub fn arch(&self, map: &MapDef) -> Arch {
        Arch {
            gcn1: self.gcn1,
            gcn2: self.gcn2,
            fc1: self.fc1,
            fc2: self.fc2,
            fc3: self.fc3,
            ..Arch::for_map(map)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub matches: usize,
    pub seed: u64,
    pub players: usize,
    /// Baseline bot names seated round-robin.
    pub bots: Vec<String>,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            matches: 200,
            seed: 0,
            players: 6,
            bots: ["random", "aggressor", "clusterer", "turtle"]
                .map(String::from)
                .to_vec(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub rules: RulesConfig,
    pub features: FeatureConfig,
    pub network: NetworkConfig,
    pub train: TrainConfig,
    pub search: SearchConfig,
    pub data: DataConfig,
    pub tournament: TournamentConfig,
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Config, ConfigError> {
        let cfg: Config = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Config, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Config::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.search.validate()?;
        let bad = |m: String| Err(ConfigError::Invalid(m));
        let t = &self.train;
        if !(0.0..=1.0).contains(&t.lambda) {
            return bad(format!("train.lambda {} outside [0, 1]", t.lambda));
        }
        let positive = |x: f64| x > 0.0;
        if !positive(t.alpha) || !(0.0..1.0).contains(&t.rho) || !positive(t.eps) {
            return bad("train.alpha and train.eps must be positive, train.rho in [0, 1)".into());
        }
        if !positive(self.features.defence_cap) || self.features.card_cap == 0 {
            return bad("features.defence_cap and features.card_cap must be positive".into());
        }
        for p in [self.data.players, self.tournament.players] {
            if !(2..=crate::rules::MAX_PLAYERS).contains(&p) {
                return bad(format!("player count {p} outside 2..=6"));
            }
        }
        for b in &self.data.bots {
            if crate::arena::BotKind::parse(b).is_none() {
                return bad(format!("unknown bot `{b}`"));
            }
        }
        if self.data.bots.is_empty() {
            return bad("data.bots is empty".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let c = Config::default();
        assert_eq!(Config::from_toml(&c.to_toml()).unwrap(), c);
        assert_eq!(c.search.risky, 0.3);
        assert_eq!(c.train.lambda, 0.8);
        assert_eq!(c.features.defence_cap, 0.2);
        assert_eq!(c.network.arch(&MapDef::classic()), Arch::for_map(&MapDef::classic()));
    }

    #[test]
    fn partial_file_and_errors() {
        let c = Config::from_toml("[search]\nrisky = 0.5\n[train]\nepochs = 5\n").unwrap();
        assert_eq!(c.search.risky, 0.5);
        assert_eq!(c.search.gf, 10);
        assert_eq!(c.train.epochs, 5);
        assert!(Config::from_toml("[search]\nbogus = 1\n").is_err());
        assert!(Config::from_toml("[search]\ntp = 1\n").is_err());
        assert!(Config::from_toml("[data]\nbots = [\"nobody\"]\n").is_err());
    }
}

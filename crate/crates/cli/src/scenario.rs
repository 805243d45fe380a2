//! Scenario files: what to simulate, with which parameters and seeds.

use std::path::{Path, PathBuf};

use mneme::adversary::{AdversaryConfig, Strategy};
use mneme::netsim::{NodeId, SimConfig};
use mneme::poc::PocParams;
use mneme::poe::EpochConfig;
use mneme::Slot;
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub sim: SimConfig,
    #[serde(default)]
    pub poc: PocParams,
    #[serde(default)]
    pub poe: EpochConfig,
    #[serde(default)]
    pub adversary: AdversaryConfig,
    pub seeds: Vec<u64>,
    #[serde(default = "default_outputs")]
    pub outputs: PathBuf,
    /// Also stream every world's MEET/LEAVE/FORWARD log.
    #[serde(default)]
    pub event_log: bool,
    pub experiment: Experiment,
}

fn default_outputs() -> PathBuf {
    PathBuf::from("out")
}

/// How long receivers wait before accepting in double-spend attacks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Wait {
    /// The measured honest bound Δ.
    #[default]
    Delta,
    Immediate,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Experiment {
    /// Informed fraction per slot of one broadcast.
    Spread {
        #[serde(default)]
        populations: Vec<usize>,
        #[serde(default)]
        origin: Option<NodeId>,
    },
    /// MEET/LEAVE/FORWARD counts against population size.
    Events {
        #[serde(default)]
        populations: Vec<usize>,
    },
    /// Flood from every node and record how long each origin needs.
    Delta {
        #[serde(default = "default_max_slots")]
        max_slots: Slot,
        #[serde(default = "default_bins")]
        bins: usize,
    },
    /// Fraction informed when a receiver accepts after `multiplier`
    /// transfer times.
    DeltaRule {
        #[serde(default = "default_multiplier")]
        multiplier: u64,
        #[serde(default = "default_max_slots")]
        max_slots: Slot,
    },
    /// Average distance between block signers as the proposal spreads.
    SignerDistance {
        rhos: Vec<f64>,
        #[serde(default)]
        by_count: bool,
    },
    /// Distinct contacts per node after each epoch duration.
    UniqueMeets { durations: Vec<Slot> },
    /// Delivery against the fraction of silent nodes.
    Silent { fractions: Vec<f64> },
    /// Whether the first PoE initiator meets the quorum within an epoch.
    Termination,
    /// One attack per seed with the configured adversary.
    Attack {
        #[serde(default)]
        wait: Wait,
    },
}

fn default_max_slots() -> Slot {
    400
}

fn default_bins() -> usize {
    5
}

fn default_multiplier() -> u64 {
    5
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut s: Scenario = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        if s.sim.adversary != AdversaryConfig::default() {
            return Err(CliError::Config(
                "set the adversary in [adversary], not [sim.adversary]".into(),
            ));
        }
        s.sim.adversary = s.adversary.clone();
        s.validate()?;
        Ok(s)
    }

    /// Consistency checks beyond what parsing enforces.
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return bad(format!("bad scenario name {:?}", self.name));
        }
        if self.seeds.is_empty() {
            return bad("seeds must not be empty".into());
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.seeds.len() {
            return bad("seeds must be distinct".into());
        }
        self.sim.validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.poc.validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.poe.validate().map_err(|e| CliError::Config(e.to_string()))?;
        let n = self.sim.population;
        if self.poc.min_signatures > n {
            return bad(format!(
                "mRS = {} exceeds the population of {n}",
                self.poc.min_signatures
            ));
        }
        if self.poe.committee_size > n {
            return bad(format!(
                "committee of {} exceeds the population of {n}",
                self.poe.committee_size
            ));
        }
        self.adversary
            .validate(n, self.poc.min_signatures)
            .map_err(|e| CliError::Config(e.to_string()))?;
        self.check_outputs()?;
        if self.event_log && !matches!(self.experiment, Experiment::Spread { .. } | Experiment::Events { .. }) {
            return bad("event_log is only available for spread and events experiments".into());
        }
        match &self.experiment {
            Experiment::Spread { populations, origin } => {
                if populations.iter().any(|p| *p == 0) {
                    return bad("populations must be positive".into());
                }
                let smallest = populations.iter().copied().min().unwrap_or(n);
                if origin.is_some_and(|o| o as usize >= smallest) {
                    return bad("origin outside the population".into());
                }
            }
            Experiment::Events { populations } if populations.iter().any(|p| *p == 0) => {
                return bad("populations must be positive".into());
            }
            Experiment::Delta { max_slots, bins } if *max_slots == 0 || *bins == 0 => {
                return bad("max_slots and bins must be positive".into());
            }
            Experiment::DeltaRule { max_slots, .. } if *max_slots == 0 => {
                return bad("max_slots must be positive".into());
            }
            Experiment::SignerDistance { rhos, .. } => {
                if rhos.is_empty() || rhos.iter().any(|r| !(0.0..=1.0).contains(r)) {
                    return bad("rhos must be non-empty and lie in [0, 1]".into());
                }
            }
            Experiment::UniqueMeets { durations } if durations.is_empty() => {
                return bad("durations must not be empty".into());
            }
            Experiment::Silent { fractions } => {
                if fractions.is_empty() || fractions.iter().any(|f| !(0.0..1.0).contains(f)) {
                    return bad("fractions must be non-empty and lie in [0, 1)".into());
                }
            }
            Experiment::Attack { .. } if self.adversary.strategy == Strategy::None => {
                return bad("attack experiments need an adversary strategy".into());
            }
            _ => {}
        }
        Ok(())
    }

    /// The output directory must exist or be creatable under a directory.
    fn check_outputs(&self) -> Result<(), CliError> {
        let mut p = self.outputs.as_path();
        loop {
            if p.exists() {
                return if p.is_dir() {
                    Ok(())
                } else {
                    Err(CliError::Config(format!("{} is not a directory", p.display())))
                };
            }
            match p.parent() {
                Some(parent) if !parent.as_os_str().is_empty() => p = parent,
                _ => return Ok(()),
            }
        }
    }
}

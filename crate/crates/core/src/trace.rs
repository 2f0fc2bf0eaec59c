use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Event {
    None,
    EpochStart,
    Perturbation,
    SuperEpochEndFdecrease,
    SuperEpochEndTimeout,
    RandomStop,
}

impl Event {
    pub const ALL: [Event; 6] = [
        Event::None,
        Event::EpochStart,
        Event::Perturbation,
        Event::SuperEpochEndFdecrease,
        Event::SuperEpochEndTimeout,
        Event::RandomStop,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Event::None => "none",
            Event::EpochStart => "epoch_start",
            Event::Perturbation => "perturbation",
            Event::SuperEpochEndFdecrease => "super_epoch_end_fdecrease",
            Event::SuperEpochEndTimeout => "super_epoch_end_timeout",
            Event::RandomStop => "random_stop",
        }
    }
}

impl fmt::Display for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Event {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Event::ALL
            .iter()
            .copied()
            .find(|e| e.as_str() == s)
            .ok_or_else(|| format!("unknown event `{s}`"))
    }
}

/// One row of an optimizer log.
///
/// `grad_norm` is only present where a gradient is available for free: the
/// exact full gradient at finite-sum epoch starts, or the large-batch estimate
/// in online mode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iter: u64,
    pub f_value: f64,
    pub grad_norm: Option<f64>,
    /// Raw SFO count (every component-gradient evaluation).
    pub sfo: u64,
    /// SFO count with paired minibatch steps counted once.
    pub sfo_paper: u64,
    pub event: Event,
}

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::HarnessError;

/// Every scheme the harness can run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Scheme {
    /// Learned traffic variables plus one learned optimizer mode per slot.
    Pdoo,
    /// Learned traffic variables, every optimizer mode alternately.
    AllSelection,
    /// Learns depths, order priorities and phases directly.
    PlainPpo,
    /// Per-slot alternating loop with real-time extraction.
    Alg1Greedy,
    Random,
    FixedPhase,
    FixedExtraction,
    FixedDecoding,
    /// Alternating loop with phases rounded to a few levels.
    QuantizedPhase,
    /// Alternating loop with depth pinned at 1.
    NonSemantic,
    /// Learned optimizer mode with real-time extraction.
    RealtimeExtraction,
}

impl Scheme {
    pub const ALL: [Scheme; 11] = [
        Self::Pdoo,
        Self::AllSelection,
        Self::PlainPpo,
        Self::Alg1Greedy,
        Self::Random,
        Self::FixedPhase,
        Self::FixedExtraction,
        Self::FixedDecoding,
        Self::QuantizedPhase,
        Self::NonSemantic,
        Self::RealtimeExtraction,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Pdoo => "pdoo",
            Self::AllSelection => "all-selection",
            Self::PlainPpo => "plain-ppo",
            Self::Alg1Greedy => "alg1-greedy",
            Self::Random => "random",
            Self::FixedPhase => "fixed-phase",
            Self::FixedExtraction => "fixed-extraction",
            Self::FixedDecoding => "fixed-decoding",
            Self::QuantizedPhase => "quantized-phase",
            Self::NonSemantic => "non-semantic",
            Self::RealtimeExtraction => "realtime-extraction",
        }
    }

    /// Whether the scheme trains an agent before evaluation.
    pub fn is_learned(self) -> bool {
        matches!(self, Self::Pdoo | Self::AllSelection | Self::PlainPpo | Self::RealtimeExtraction)
    }

    /// Whether the scheme runs the alternating loop each slot.
    pub fn is_per_slot_loop(self) -> bool {
        matches!(
            self,
            Self::Alg1Greedy
                | Self::FixedPhase
                | Self::FixedExtraction
                | Self::FixedDecoding
                | Self::QuantizedPhase
                | Self::NonSemantic
        )
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = s.trim().to_ascii_lowercase().replace('_', "-");
        Self::ALL
            .into_iter()
            .find(|sc| sc.name() == key)
            .ok_or_else(|| HarnessError::UnknownScheme {
                given: s.to_string(),
                choices: Self::ALL.iter().map(|sc| sc.name()).collect::<Vec<_>>().join(", "),
            })
    }
}

impl TryFrom<String> for Scheme {
    type Error = HarnessError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<Scheme> for String {
    fn from(s: Scheme) -> Self {
        s.name().to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for s in Scheme::ALL {
            assert_eq!(s.name().parse::<Scheme>().unwrap(), s);
        }
        assert_eq!("ALL_Selection".parse::<Scheme>().unwrap(), Scheme::AllSelection);
    }

    #[test]
    fn unknown_scheme_lists_choices() {
        let err = "lyapunov".parse::<Scheme>().unwrap_err().to_string();
        assert!(err.contains("lyapunov"));
        for s in Scheme::ALL {
            assert!(err.contains(s.name()), "{err}");
        }
    }
}

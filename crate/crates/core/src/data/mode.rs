use std::fmt;
use std::str::FromStr;

use super::DataError;

/// Which sensor channels feed a classifier.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ChannelMode {
    /// nDSM only.
    Surface,
    /// The three spectral bands only.
    Spectral,
    /// Spectral bands plus nDSM.
    Fused,
}

impl ChannelMode {
    pub const ALL: [ChannelMode; 3] = [ChannelMode::Surface, ChannelMode::Spectral, ChannelMode::Fused];

    /// Network input channels for this mode.
    pub fn channels(self) -> usize {
        match self {
            ChannelMode::Surface => 1,
            ChannelMode::Spectral => 3,
            ChannelMode::Fused => 4,
        }
    }

    /// Length of the 5x5 patch feature vector for this mode.
    pub fn feature_len(self) -> usize {
        self.channels() * 25
    }

    pub fn code(self) -> u8 {
        match self {
            ChannelMode::Surface => 0,
            ChannelMode::Spectral => 1,
            ChannelMode::Fused => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.get(code as usize).copied()
    }

    pub fn needs_ndsm(self) -> bool {
        self != ChannelMode::Spectral
    }

    pub fn needs_spectral(self) -> bool {
        self != ChannelMode::Surface
    }
}

impl fmt::Display for ChannelMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ChannelMode::Surface => "surface",
            ChannelMode::Spectral => "spectral",
            ChannelMode::Fused => "fused",
        })
    }
}

impl FromStr for ChannelMode {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "surface" | "ndsm" => Ok(ChannelMode::Surface),
            "spectral" | "rgb" | "irrg" => Ok(ChannelMode::Spectral),
            "fused" | "ndsm+spectral" => Ok(ChannelMode::Fused),
            other => Err(DataError::Invalid(format!("unknown channel mode '{other}'"))),
        }
    }
}

use std::fmt;

use serde::{Deserialize, Serialize};

/// Speed of light in vacuum, m/s (exact by definition of the metre).
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Carrier frequency band.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Band {
    L1,
    L2,
    L5,
}

impl Band {
    pub const ALL: [Band; 3] = [Band::L1, Band::L2, Band::L5];

    /// Nominal carrier frequency in Hz.
    pub fn nominal_frequency(self) -> f64 {
        match self {
            Band::L1 => 1575.42e6,
            Band::L2 => 1227.60e6,
            Band::L5 => 1176.45e6,
        }
    }

    /// Wavelength at the nominal frequency, in meters.
    pub fn wavelength(self) -> f64 {
        wavelength_for(self.nominal_frequency())
    }
}

impl fmt::Display for Band {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Band::L1 => "L1",
            Band::L2 => "L2",
            Band::L5 => "L5",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for Band {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "L1" => Ok(Band::L1),
            "L2" => Ok(Band::L2),
            "L5" => Ok(Band::L5),
            other => Err(format!("unknown band `{other}`")),
        }
    }
}

/// Carrier wavelength `c / f` in meters.
pub fn wavelength(band: Band) -> f64 {
    band.wavelength()
}

pub fn wavelength_for(frequency_hz: f64) -> f64 {
    SPEED_OF_LIGHT / frequency_hz
}

/// Per-band configuration as carried in the session file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandConfig {
    pub freq_hz: f64,
}

impl BandConfig {
    pub fn nominal(band: Band) -> Self {
        Self {
            freq_hz: band.nominal_frequency(),
        }
    }

    pub fn wavelength(&self) -> f64 {
        wavelength_for(self.freq_hz)
    }
}

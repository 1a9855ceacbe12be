use std::collections::BTreeMap;
use std::fmt;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::band::{Band, BandConfig};
use crate::dd_engine::NoiseModel;
use crate::gssm::GssmSettings;
use crate::kf_baseline::{FilterInit, ProcessNoise};

/// Satellite identifier: constellation letter plus PRN, e.g. `G07`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SatId(pub String);

impl SatId {
    pub fn new(id: impl Into<String>) -> Self {
        SatId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for SatId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for SatId {
    fn from(s: &str) -> Self {
        SatId(s.to_owned())
    }
}

/// One band of one satellite at one station.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BandObs {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cp_cycles: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pr_m: Option<f64>,
    /// Loss-of-lock indicator: the carrier ambiguity may have changed at this epoch.
    #[serde(default)]
    pub lli: bool,
}

impl BandObs {
    /// Both carrier and code present and finite.
    pub fn is_complete(&self) -> bool {
        matches!((self.cp_cycles, self.pr_m), (Some(cp), Some(pr)) if cp.is_finite() && pr.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SatObs {
    pub id: SatId,
    pub pos_ecef: Vector3<f64>,
    #[serde(rename = "elev_rad")]
    pub elevation: f64,
    pub bands: BTreeMap<Band, BandObs>,
}

impl SatObs {
    pub fn band(&self, band: Band) -> Option<&BandObs> {
        self.bands.get(&band)
    }
}

fn is_false(b: &bool) -> bool {
    !*b
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationEpoch {
    /// GPS time of week, seconds.
    #[serde(rename = "t")]
    pub time: f64,
    pub rover: Vec<SatObs>,
    pub base: Vec<SatObs>,
    /// Ambiguities must not be fixed at this epoch.
    #[serde(default, skip_serializing_if = "is_false")]
    pub float_only: bool,
}

impl ObservationEpoch {
    pub fn rover_sat(&self, id: &SatId) -> Option<&SatObs> {
        self.rover.iter().find(|s| &s.id == id)
    }

    pub fn base_sat(&self, id: &SatId) -> Option<&SatObs> {
        self.base.iter().find(|s| &s.id == id)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub base_pos_ecef: Vector3<f64>,
    pub rover_initial_guess: Vector3<f64>,
    #[serde(default = "Vector3::zeros")]
    pub rover_initial_velocity: Vector3<f64>,
    pub sampling_interval_s: f64,
    pub noise: NoiseModel,
    #[serde(default)]
    pub process: ProcessNoise,
    #[serde(default)]
    pub filter_init: FilterInit,
    #[serde(default)]
    pub gssm: GssmSettings,
    pub bands: BTreeMap<Band, BandConfig>,
}

impl SessionConfig {
    /// A configuration with default noise settings and the given bands at nominal frequencies.
    pub fn with_bands(base: Vector3<f64>, guess: Vector3<f64>, interval: f64, bands: &[Band]) -> Self {
        Self {
            base_pos_ecef: base,
            rover_initial_guess: guess,
            rover_initial_velocity: Vector3::zeros(),
            sampling_interval_s: interval,
            noise: NoiseModel::default(),
            process: ProcessNoise::default(),
            filter_init: FilterInit::default(),
            gssm: GssmSettings::default(),
            bands: bands.iter().map(|&b| (b, BandConfig::nominal(b))).collect(),
        }
    }

    pub fn wavelength(&self, band: Band) -> f64 {
        self.bands
            .get(&band)
            .map(BandConfig::wavelength)
            .unwrap_or_else(|| band.wavelength())
    }

    pub fn band_list(&self) -> impl Iterator<Item = Band> + '_ {
        self.bands.keys().copied()
    }
}

/// A parsed, validated observation session. Immutable after construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub config: SessionConfig,
    pub epochs: Vec<ObservationEpoch>,
}

impl Session {
    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }

    pub fn times(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.time).collect()
    }
}

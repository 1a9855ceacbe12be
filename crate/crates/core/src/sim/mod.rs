//! Synthetic sessions: a rover trajectory around a fixed base, satellites on
//! smooth sky tracks, and carrier/code observations consistent with the
//! double-difference model, plus the brute-force oracles used by the tests.
//!
//! Each station's carrier starts near zero cycles: a per-satellite integer
//! offset, common to both stations, absorbs the bulk of the range. The
//! simulated single-difference integer is what the estimators see.

mod oracle;

use std::collections::BTreeMap;
use std::ops::Range;

use nalgebra::{Matrix2, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

pub use oracle::{dense_batch_oracle, pinned_epoch_oracle, rts_smoother_oracle, OracleSolution};

use crate::ambiguity::ArcSet;
use crate::dd_engine::{sd_geometric_range, NoiseModel};
use crate::error::{Error, Result};
use crate::frames::{geodetic_to_ecef, Geodetic, LocalFrame};
use crate::kf_baseline::ProcessNoise;
use crate::obs_model::{
    Band, BandObs, ObservationEpoch, SatId, SatObs, Session, SessionConfig, TruthRow, SPEED_OF_LIGHT,
};

/// Scheduled loss of lock on the rover.
#[derive(Debug, Clone, PartialEq)]
pub struct Slip {
    pub epoch: usize,
    /// Index into the satellite list.
    pub sat: usize,
    /// `None` slips every band.
    pub band: Option<Band>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub seed: u64,
    pub epochs: usize,
    pub interval_s: f64,
    pub base: Geodetic,
    pub bands: Vec<Band>,
    pub n_sats: usize,
    /// Keep satellite 0 well above all others so the reference never changes.
    pub dominant_reference: bool,
    /// Noise model written to the session and used for generation.
    pub noise: NoiseModel,
    /// Multiplies the generated noise; 0 gives exact observations.
    pub noise_scale: f64,
    /// Process noise written to the session.
    pub process: ProcessNoise,
    /// White acceleration density driving the truth, (m/s)^2/s.
    pub accel_psd: f64,
    /// Draw a new constant velocity every this many epochs.
    pub leg_epochs: Option<usize>,
    pub max_speed_mps: f64,
    pub start_offset_enu: Vector3<f64>,
    /// Standard deviation of the initial-guess error per axis, meters.
    pub guess_error_m: f64,
    /// Write the true initial velocity into the session config.
    pub velocity_hint: bool,
    /// Single-difference integers are drawn from `[-r, r]`.
    pub ambiguity_range: i64,
    pub slips: Vec<Slip>,
    /// Float-only stretches with inflated rover code noise.
    pub canyon: Vec<Range<usize>>,
    pub canyon_code_factor: f64,
}

impl Scenario {
    /// Open sky, two bands, eight satellites, piecewise-constant velocity.
    pub fn open_sky(seed: u64, epochs: usize) -> Self {
        Self::base_scenario(seed, epochs)
    }

    fn base_scenario(seed: u64, epochs: usize) -> Self {
        Self {
            seed,
            epochs,
            interval_s: 1.0,
            base: Geodetic {
                lat: 30.5f64.to_radians(),
                lon: 114.3f64.to_radians(),
                height: 40.0,
            },
            bands: vec![Band::L1, Band::L2],
            n_sats: 8,
            dominant_reference: true,
            noise: NoiseModel::default(),
            noise_scale: 1.0,
            process: ProcessNoise::default(),
            accel_psd: 0.0,
            leg_epochs: Some(60),
            max_speed_mps: 8.0,
            start_offset_enu: Vector3::new(850.0, -420.0, 12.0),
            guess_error_m: 5.0,
            velocity_hint: false,
            ambiguity_range: 20,
            slips: Vec::new(),
            canyon: Vec::new(),
            canyon_code_factor: 10.0,
        }
    }

    /// Exact observations, a single band.
    pub fn noiseless(seed: u64, epochs: usize) -> Self {
        Self {
            noise_scale: 0.0,
            bands: vec![Band::L1],
            n_sats: 6,
            ..Self::base_scenario(seed, epochs)
        }
    }

    /// Small noisy session for oracle comparisons.
    pub fn small(seed: u64, epochs: usize) -> Self {
        Self {
            n_sats: 6,
            ..Self::base_scenario(seed, epochs)
        }
    }

    /// Truth driven by the same white-acceleration model the filter assumes.
    pub fn matched_dynamics(seed: u64, epochs: usize) -> Self {
        let process = ProcessNoise {
            pos_psd: 0.0,
            vel_psd: 0.05,
        };
        Self {
            process,
            accel_psd: process.vel_psd,
            leg_epochs: None,
            max_speed_mps: 5.0,
            ..Self::base_scenario(seed, epochs)
        }
    }

    /// 300 epochs with two obstructed stretches, see [`Scenario::urban_canyon_len`].
    pub fn urban_canyon(seed: u64) -> Self {
        Self::urban_canyon_len(seed, 300)
    }

    /// Open sky with two obstructed stretches covering 40% of the session:
    /// float-only, ten times the code noise, and loss of lock on every
    /// satellite at entry and exit.
    pub fn urban_canyon_len(seed: u64, epochs: usize) -> Self {
        let at = |f: f64| (f * epochs as f64).round() as usize;
        let canyon = vec![at(0.27)..at(0.47), at(0.63)..at(0.83)];
        let mut s = Self {
            canyon: canyon.clone(),
            ..Self::base_scenario(seed, epochs)
        };
        for r in &canyon {
            for sat in 0..s.n_sats {
                for epoch in [r.start, r.end].into_iter().filter(|&e| e < epochs) {
                    s.slips.push(Slip {
                        epoch,
                        sat,
                        band: None,
                    });
                }
            }
        }
        s
    }

    /// 2000 epochs, eleven satellites on two bands: twenty arcs.
    pub fn large(seed: u64) -> Self {
        Self {
            n_sats: 11,
            leg_epochs: Some(200),
            ..Self::base_scenario(seed, 2000)
        }
    }

    pub fn sat_ids(&self) -> Vec<SatId> {
        (0..self.n_sats).map(|i| SatId::new(format!("G{:02}", i + 1))).collect()
    }

    pub fn in_canyon(&self, epoch: usize) -> bool {
        self.canyon.iter().any(|r| r.contains(&epoch))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generated {
    pub session: Session,
    pub truth: Vec<TruthRow>,
    /// Rover-minus-base carrier integer of every satellite and band, per epoch.
    pub sd_integers: Vec<BTreeMap<(Band, SatId), i64>>,
}

impl Generated {
    pub fn dd_integer(&self, epoch: usize, band: Band, reference: &SatId, other: &SatId) -> Option<i64> {
        let m = &self.sd_integers[epoch];
        Some(m.get(&(band, reference.clone()))? - m.get(&(band, other.clone()))?)
    }

    /// True integer of every arc, taken at its first epoch.
    pub fn arc_integers(&self, arcs: &ArcSet) -> Vec<i64> {
        arcs.iter()
            .map(|a| {
                self.dd_integer(a.start, a.band, &a.reference, &a.other)
                    .expect("arc satellites are simulated")
            })
            .collect()
    }

    pub fn truth_positions(&self) -> Vec<Vector3<f64>> {
        self.truth.iter().map(TruthRow::pos).collect()
    }
}

struct SkyTrack {
    az0: f64,
    az_rate: f64,
    el_lo: f64,
    el_hi: f64,
    el_rate: f64,
    el_phase: f64,
    range0: f64,
    range_rate: f64,
    clock_s: f64,
    clock_drift: f64,
}

impl SkyTrack {
    /// `az_slot` is the nominal azimuth; the draw jitters it by up to `az_jitter`.
    /// Elevation oscillates inside `(el_lo, el_hi)`.
    fn draw(rng: &mut ChaCha8Rng, (el_lo, el_hi): (f64, f64), az_slot: f64, az_jitter: f64) -> Self {
        Self {
            az0: az_slot + rng.random_range(-az_jitter..=az_jitter),
            az_rate: rng.random_range(-1.0..1.0) * 1e-4,
            el_lo,
            el_hi,
            el_rate: rng.random_range(0.5..1.5) * 2e-4,
            el_phase: rng.random_range(0.0..std::f64::consts::TAU),
            range0: rng.random_range(2.05e7..2.4e7),
            range_rate: rng.random_range(-1.0..1.0) * 500.0,
            clock_s: rng.random_range(-1.0..1.0) * 1e-6,
            clock_drift: rng.random_range(-1.0..1.0) * 1e-11,
        }
    }

    fn position(&self, frame: &LocalFrame, t: f64) -> Vector3<f64> {
        let az = self.az0 + self.az_rate * t;
        let s = 0.5 + 0.5 * (self.el_rate * t + self.el_phase).sin();
        let el = self.el_lo + (self.el_hi - self.el_lo) * s;
        let dir = Vector3::new(el.cos() * az.sin(), el.cos() * az.cos(), el.sin());
        frame.from_enu(&(dir * (self.range0 + self.range_rate * t)))
    }

    fn clock(&self, t: f64) -> f64 {
        self.clock_s + self.clock_drift * t
    }
}

fn elevation(frame_at: &Vector3<f64>, sat: &Vector3<f64>) -> f64 {
    let f = LocalFrame::new(*frame_at);
    let enu = f.delta_to_enu(&(sat - frame_at));
    (enu.z / enu.norm()).asin()
}

fn nonzero_jump(rng: &mut ChaCha8Rng) -> i64 {
    let j: i64 = rng.random_range(1..=5);
    if rng.random_bool(0.5) {
        j
    } else {
        -j
    }
}

/// Truth in base-frame ENU coordinates, one position per epoch.
fn trajectory(s: &Scenario, rng: &mut ChaCha8Rng) -> (Vec<Vector3<f64>>, Vector3<f64>) {
    let dt = s.interval_s;
    let draw_velocity = |rng: &mut ChaCha8Rng| {
        let heading = rng.random_range(0.0..std::f64::consts::TAU);
        let speed = rng.random_range(0.0..=s.max_speed_mps);
        let vz: f64 = if s.max_speed_mps > 0.0 {
            rng.sample::<f64, _>(StandardNormal) * 0.05
        } else {
            0.0
        };
        Vector3::new(speed * heading.sin(), speed * heading.cos(), vz)
    };
    let mut p = s.start_offset_enu;
    let mut v = draw_velocity(rng);
    let v0 = v;
    // exact discretization of white acceleration, per axis
    let q = s.accel_psd;
    let chol = Matrix2::new(q * dt.powi(3) / 3.0, q * dt * dt / 2.0, q * dt * dt / 2.0, q * dt)
        .cholesky()
        .map(|c| c.unpack());

    let mut out = Vec::with_capacity(s.epochs);
    for k in 0..s.epochs {
        if k > 0 {
            if s.leg_epochs.is_some_and(|n| n > 0 && k % n == 0) {
                v = draw_velocity(rng);
            }
            p += v * dt;
            if let Some(l) = &chol {
                for axis in 0..3 {
                    let z = Vector2::new(rng.sample(StandardNormal), rng.sample(StandardNormal));
                    let w = l * z;
                    p[axis] += w[0];
                    v[axis] += w[1];
                }
            }
        }
        out.push(p);
    }
    (out, v0)
}

/// Generates the session, truth and true integers of a scenario.
pub fn generate(s: &Scenario) -> Result<Generated> {
    if s.n_sats < 4 {
        return Err(Error::Validation(format!(
            "scenario needs at least 4 visible satellites, has {}",
            s.n_sats
        )));
    }
    if s.epochs == 0 || !(s.interval_s > 0.0) {
        return Err(Error::Validation("scenario needs epochs and a positive interval".into()));
    }
    for slip in &s.slips {
        if slip.sat >= s.n_sats {
            return Err(Error::Validation(format!("slip on unknown satellite #{}", slip.sat)));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
    let base_pos = geodetic_to_ecef(s.base);
    let frame = LocalFrame::new(base_pos);
    let ids = s.sat_ids();
    let az_rot = rng.random_range(0.0..std::f64::consts::TAU);
    let tracks: Vec<SkyTrack> = (0..s.n_sats)
        .map(|i| {
            // spread azimuths evenly (random rotation, jittered) so that DOP stays moderate
            let sector = std::f64::consts::TAU / s.n_sats as f64;
            let band = if s.dominant_reference && i == 0 {
                (80.0, 85.0)
            } else {
                // golden-ratio spacing of the band centres between 18 and 66 degrees
                let c = 18.0 + 48.0 * (i as f64 * 0.618_034).fract();
                (c - 6.0, c + 6.0)
            };
            let band = (band.0.to_radians(), band.1.to_radians());
            SkyTrack::draw(&mut rng, band, az_rot + sector * i as f64, 0.3 * sector)
        })
        .collect();
    let (enu, v0) = trajectory(s, &mut rng);
    let truth_pos: Vec<Vector3<f64>> = enu.iter().map(|p| frame.from_enu(p)).collect();

    let guess_noise = Normal::new(0.0, s.guess_error_m.max(0.0)).expect("finite std");
    let guess = truth_pos[0]
        + Vector3::new(
            guess_noise.sample(&mut rng),
            guess_noise.sample(&mut rng),
            guess_noise.sample(&mut rng),
        );

    let mut config = SessionConfig::with_bands(base_pos, guess, s.interval_s, &s.bands);
    config.noise = s.noise;
    config.process = s.process;
    if s.velocity_hint {
        config.rover_initial_velocity = frame.enu_to_delta(&v0);
    }

    let rover_clock = |t: f64| 2e-7 + 3e-10 * t;
    let base_clock = |t: f64| -1e-7 + 1e-10 * t;

    // integer state per (band, sat): common offset and rover-minus-base part
    let mut offset: BTreeMap<(Band, usize), i64> = BTreeMap::new();
    let mut sd_int: BTreeMap<(Band, usize), i64> = BTreeMap::new();
    for &band in &s.bands {
        let lambda = config.wavelength(band);
        for (i, tr) in tracks.iter().enumerate() {
            let sat = tr.position(&frame, 0.0);
            let phase = ((sat - base_pos).norm() + SPEED_OF_LIGHT * (base_clock(0.0) - tr.clock(0.0))) / lambda;
            offset.insert((band, i), -phase.round() as i64);
            let n = if s.ambiguity_range > 0 {
                rng.random_range(-s.ambiguity_range..=s.ambiguity_range)
            } else {
                0
            };
            sd_int.insert((band, i), n);
        }
    }

    let mut epochs = Vec::with_capacity(s.epochs);
    let mut sd_integers = Vec::with_capacity(s.epochs);
    let mut truth = Vec::with_capacity(s.epochs);
    for k in 0..s.epochs {
        let t = k as f64 * s.interval_s;
        let rover_pos = truth_pos[k];
        truth.push(TruthRow::new(t, rover_pos));
        let canyon = s.in_canyon(k);

        let mut rover = Vec::with_capacity(s.n_sats);
        let mut base = Vec::with_capacity(s.n_sats);
        for (i, tr) in tracks.iter().enumerate() {
            let sat = tr.position(&frame, t);
            let el_r = elevation(&rover_pos, &sat);
            let el_b = elevation(&base_pos, &sat);
            if el_r < 10f64.to_radians() - 1e-3 {
                return Err(Error::Validation(format!("{} below the mask at epoch {k}", ids[i])));
            }
            let rho_b = (sat - base_pos).norm();
            let sd = sd_geometric_range(&sat, &rover_pos, &base_pos);
            let clk_b = SPEED_OF_LIGHT * (base_clock(t) - tr.clock(t));
            let clk_rb = SPEED_OF_LIGHT * (rover_clock(t) - base_clock(t));

            let mut rover_bands = BTreeMap::new();
            let mut base_bands = BTreeMap::new();
            for &band in &s.bands {
                let lambda = config.wavelength(band);
                let lli = s
                    .slips
                    .iter()
                    .any(|sl| sl.epoch == k && sl.sat == i && sl.band.is_none_or(|b| b == band));
                if lli {
                    *sd_int.get_mut(&(band, i)).unwrap() += nonzero_jump(&mut rng);
                }
                let off = offset[&(band, i)] as f64;
                let n_sd = sd_int[&(band, i)] as f64;

                let cp_b = (rho_b + clk_b) / lambda + off;
                let cp_r = cp_b + (sd + clk_rb) / lambda + n_sd;
                let pr_b = rho_b + clk_b;
                let pr_r = pr_b + sd + clk_rb;

                let scale = s.noise_scale;
                let code_factor = if canyon { s.canyon_code_factor } else { 1.0 };
                let mut gauss = |std: f64| {
                    if std > 0.0 {
                        std * rng.sample::<f64, _>(StandardNormal)
                    } else {
                        0.0
                    }
                };
                let e_cp_r = gauss(scale * s.noise.carrier_std(el_r)) / lambda;
                let e_pr_r = gauss(scale * code_factor * s.noise.code_std(el_r));
                let e_cp_b = gauss(scale * s.noise.carrier_std(el_b)) / lambda;
                let e_pr_b = gauss(scale * s.noise.code_std(el_b));

                rover_bands.insert(
                    band,
                    BandObs {
                        cp_cycles: Some(cp_r + e_cp_r),
                        pr_m: Some(pr_r + e_pr_r),
                        lli,
                    },
                );
                base_bands.insert(
                    band,
                    BandObs {
                        cp_cycles: Some(cp_b + e_cp_b),
                        pr_m: Some(pr_b + e_pr_b),
                        lli: false,
                    },
                );
            }
            rover.push(SatObs {
                id: ids[i].clone(),
                pos_ecef: sat,
                elevation: el_r,
                bands: rover_bands,
            });
            base.push(SatObs {
                id: ids[i].clone(),
                pos_ecef: sat,
                elevation: el_b,
                bands: base_bands,
            });
        }
        sd_integers.push(
            sd_int
                .iter()
                .map(|(&(band, i), &n)| ((band, ids[i].clone()), n))
                .collect(),
        );
        epochs.push(ObservationEpoch {
            time: t,
            rover,
            base,
            float_only: canyon,
        });
    }

    Ok(Generated {
        session: Session { config, epochs },
        truth,
        sd_integers,
    })
}

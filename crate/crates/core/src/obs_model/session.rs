use std::collections::HashSet;
use std::f64::consts::FRAC_PI_2;
use std::path::Path;

use super::types::{ObservationEpoch, SatObs, Session, SessionConfig};
use crate::error::{Error, Result};

/// Satellite distance from the geocentre must fall in this band (meters).
pub const SAT_RADIUS_BOUNDS: (f64, f64) = (2.0e7, 4.5e7);

/// Reads and validates a session JSON file.
pub fn parse_session(path: impl AsRef<Path>) -> Result<Session> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_session_str(&text)
}

pub fn parse_session_str(text: &str) -> Result<Session> {
    let mut de = serde_json::Deserializer::from_str(text);
    let session: Session = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let field = e.path().to_string();
        let inner = e.into_inner();
        Error::Parse {
            field,
            line: inner.line(),
            column: inner.column(),
            message: inner.to_string(),
        }
    })?;
    validate_session(&session)?;
    Ok(session)
}

pub fn write_session(path: impl AsRef<Path>, session: &Session) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, session_to_json(session)).map_err(|e| Error::io(path, e))
}

pub fn session_to_json(session: &Session) -> String {
    // Serialization of plain data into a String cannot fail.
    serde_json::to_string_pretty(session).expect("session serializes")
}

pub fn validate_session(session: &Session) -> Result<()> {
    validate_config(&session.config)?;
    if session.epochs.is_empty() {
        return Err(Error::Validation("no epochs".into()));
    }
    let mut prev: Option<f64> = None;
    for (k, epoch) in session.epochs.iter().enumerate() {
        if !epoch.time.is_finite() {
            return Err(Error::Validation(format!("epochs[{k}].t is not finite")));
        }
        if let Some(p) = prev {
            if epoch.time <= p {
                return Err(Error::Validation(format!(
                    "epochs[{k}].t = {} does not increase (previous {p})",
                    epoch.time
                )));
            }
        }
        prev = Some(epoch.time);
        validate_station(k, "rover", &epoch.rover)?;
        validate_station(k, "base", &epoch.base)?;
    }
    Ok(())
}

fn validate_config(c: &SessionConfig) -> Result<()> {
    let bad = |field: &str| Err(Error::Validation(format!("config.{field} is invalid")));
    if !(c.sampling_interval_s.is_finite() && c.sampling_interval_s > 0.0) {
        return bad("sampling_interval_s");
    }
    if !c.base_pos_ecef.iter().all(|v| v.is_finite()) {
        return bad("base_pos_ecef");
    }
    if !c.rover_initial_guess.iter().all(|v| v.is_finite()) {
        return bad("rover_initial_guess");
    }
    let n = &c.noise;
    for (name, v) in [
        ("noise.code_a_m", n.code_a_m),
        ("noise.code_b_m", n.code_b_m),
        ("noise.carrier_a_m", n.carrier_a_m),
        ("noise.carrier_b_m", n.carrier_b_m),
    ] {
        if !(v.is_finite() && v > 0.0) {
            return bad(name);
        }
    }
    let p = &c.process;
    if !(p.pos_psd.is_finite() && p.pos_psd >= 0.0) {
        return bad("process.pos_psd");
    }
    if !(p.vel_psd.is_finite() && p.vel_psd > 0.0) {
        return bad("process.vel_psd");
    }
    let i = &c.filter_init;
    for (name, v) in [
        ("filter_init.pos_std_m", i.pos_std_m),
        ("filter_init.vel_std_mps", i.vel_std_mps),
        ("filter_init.bias_std_cycles", i.bias_std_cycles),
    ] {
        if !(v.is_finite() && v > 0.0) {
            return bad(name);
        }
    }
    if c.gssm.max_iters == 0 || !(c.gssm.tol_m.is_finite() && c.gssm.tol_m > 0.0) {
        return bad("gssm");
    }
    if c.bands.is_empty() {
        return Err(Error::Validation("config.bands is empty".into()));
    }
    for (b, bc) in &c.bands {
        if !(bc.freq_hz.is_finite() && bc.freq_hz > 0.0) {
            return Err(Error::Validation(format!("config.bands.{b}.freq_hz is invalid")));
        }
    }
    Ok(())
}

fn validate_station(k: usize, station: &str, sats: &[SatObs]) -> Result<()> {
    let mut seen = HashSet::new();
    for (i, s) in sats.iter().enumerate() {
        let at = format!("epochs[{k}].{station}[{i}]");
        if !seen.insert(&s.id) {
            return Err(Error::Validation(format!("{at}: duplicate sat_id {}", s.id)));
        }
        if !(s.elevation > 0.0 && s.elevation <= FRAC_PI_2) {
            return Err(Error::Validation(format!(
                "{at}.elev_rad = {} outside (0, pi/2]",
                s.elevation
            )));
        }
        let r = s.pos_ecef.norm();
        if !(r >= SAT_RADIUS_BOUNDS.0 && r <= SAT_RADIUS_BOUNDS.1) {
            return Err(Error::Validation(format!(
                "{at}.pos_ecef norm {r:.1} m outside [{:.1e}, {:.1e}]",
                SAT_RADIUS_BOUNDS.0, SAT_RADIUS_BOUNDS.1
            )));
        }
        for (band, obs) in &s.bands {
            if let Some(pr) = obs.pr_m {
                if !(pr.is_finite() && pr > 0.0) {
                    return Err(Error::Validation(format!("{at}.bands.{band}.pr_m = {pr} not positive")));
                }
            }
            if let Some(cp) = obs.cp_cycles {
                if !cp.is_finite() {
                    return Err(Error::Validation(format!("{at}.bands.{band}.cp_cycles not finite")));
                }
            }
        }
    }
    Ok(())
}

/// Checks the per-epoch invariants on a single epoch; used by in-memory producers.
pub fn validate_epoch(k: usize, epoch: &ObservationEpoch) -> Result<()> {
    validate_station(k, "rover", &epoch.rover)?;
    validate_station(k, "base", &epoch.base)
}

//! Observation and solution data model, session ingestion and CSV output.

mod band;
mod session;
mod solution;
mod types;

pub use band::{wavelength, wavelength_for, Band, BandConfig, SPEED_OF_LIGHT};
pub use session::{
    parse_session, parse_session_str, session_to_json, validate_epoch, validate_session,
    write_session, SAT_RADIUS_BOUNDS,
};
pub use solution::{
    read_solution, read_truth, solution_to_csv, write_solution, write_truth, FixStatus, Method,
    SolutionRow, TruthRow,
};
pub use types::{BandObs, ObservationEpoch, SatId, SatObs, Session, SessionConfig};

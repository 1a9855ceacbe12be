//! Double-difference ambiguity arcs: the constant variables shared across epochs.
//!
//! An arc is a maximal run of consecutive epochs over which one
//! `(band, reference, other)` carrier double difference keeps a single integer
//! ambiguity. A new arc starts when the pair first becomes observable (or
//! reappears after a gap), when either satellite reports loss of lock at either
//! station, or when the band's reference satellite changes; a reference change
//! ends every arc on that band.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;
use std::path::Path;

use crate::dd_engine::{DdSystem, RowKind};
use crate::error::{Error, Result};
use crate::obs_model::{Band, ObservationEpoch, SatId};

/// Default ratio-test threshold.
pub const DEFAULT_RATIO: f64 = 3.0;
/// Largest accepted distance between a float value and its integer, cycles.
pub const MAX_ROUNDING_RESIDUAL: f64 = 0.25;

#[derive(Debug, Clone, PartialEq)]
pub struct AmbiguityArc {
    pub id: usize,
    pub band: Band,
    pub reference: SatId,
    pub other: SatId,
    /// First and last epoch index, inclusive.
    pub start: usize,
    pub end: usize,
    /// Float estimate, cycles.
    pub float: f64,
    /// Variance of the float estimate, cycles^2.
    pub variance: f64,
    pub fixed: Option<i64>,
}

impl AmbiguityArc {
    pub fn contains(&self, epoch: usize) -> bool {
        (self.start..=self.end).contains(&epoch)
    }

    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Value used downstream: the fixed integer when present, else the float.
    pub fn value(&self) -> f64 {
        self.fixed.map_or(self.float, |n| n as f64)
    }
}

type PairKey = (Band, SatId, SatId);

/// All arcs of a session plus a lookup from `(band, ref, other, epoch)` to arc id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ArcSet {
    pub arcs: Vec<AmbiguityArc>,
    by_pair: HashMap<PairKey, Vec<usize>>,
}

impl ArcSet {
    pub fn from_arcs(arcs: Vec<AmbiguityArc>) -> Self {
        let mut by_pair: HashMap<PairKey, Vec<usize>> = HashMap::new();
        for a in &arcs {
            by_pair
                .entry((a.band, a.reference.clone(), a.other.clone()))
                .or_default()
                .push(a.id);
        }
        for ids in by_pair.values_mut() {
            ids.sort_by_key(|&i| arcs[i].start);
        }
        Self { arcs, by_pair }
    }

    pub fn len(&self) -> usize {
        self.arcs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.arcs.is_empty()
    }

    pub fn get(&self, id: usize) -> &AmbiguityArc {
        &self.arcs[id]
    }

    pub fn iter(&self) -> impl Iterator<Item = &AmbiguityArc> {
        self.arcs.iter()
    }

    pub fn arc_at(&self, epoch: usize, band: Band, reference: &SatId, other: &SatId) -> Option<usize> {
        let ids = self
            .by_pair
            .get(&(band, reference.clone(), other.clone()))?;
        let pos = ids.partition_point(|&i| self.arcs[i].start <= epoch);
        let id = *ids.get(pos.checked_sub(1)?)?;
        self.arcs[id].contains(epoch).then_some(id)
    }

    /// Arc id for each row of `dd` (`None` for code rows).
    pub fn row_arcs(&self, epoch: usize, dd: &DdSystem) -> Result<Vec<Option<usize>>> {
        dd.rows
            .iter()
            .map(|r| match r.kind {
                RowKind::Code => Ok(None),
                RowKind::Carrier => self
                    .arc_at(epoch, r.band, &r.reference, &r.other)
                    .map(Some)
                    .ok_or_else(|| {
                        Error::Assembly(format!(
                            "no ambiguity arc covers epoch {epoch} {} {}-{}",
                            r.band, r.reference, r.other
                        ))
                    }),
            })
            .collect()
    }

    /// Writes the arc debug dump: `arc_id, band, ref, other, start, end, float, fixed`.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = Vec::new();
        writeln!(out, "arc_id,band,ref,other,start,end,float,fixed").unwrap();
        for a in &self.arcs {
            let fixed = a.fixed.map(|n| n.to_string()).unwrap_or_default();
            writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                a.id, a.band, a.reference, a.other, a.start, a.end, a.float, fixed
            )
            .unwrap();
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

fn lock_lost(epoch: &ObservationEpoch, band: Band, sat: &SatId) -> bool {
    let flag = |s: Option<&crate::obs_model::SatObs>| {
        s.and_then(|s| s.band(band)).is_some_and(|b| b.lli)
    };
    flag(epoch.rover_sat(sat)) || flag(epoch.base_sat(sat))
}

/// Segments every carrier double difference of the session into ambiguity arcs.
///
/// `dd_systems[k]` must describe `epochs[k]`; `None` marks an epoch without
/// usable geometry. Only the pair layout of each system is used.
pub fn track_arcs(epochs: &[ObservationEpoch], dd_systems: &[Option<DdSystem>]) -> ArcSet {
    let mut arcs: Vec<AmbiguityArc> = Vec::new();
    // open arc per pair, keyed deterministically
    let mut open: BTreeMap<PairKey, usize> = BTreeMap::new();
    let mut last_ref: BTreeMap<Band, SatId> = BTreeMap::new();

    for (k, (epoch, dd)) in epochs.iter().zip(dd_systems).enumerate() {
        let Some(dd) = dd else {
            open.clear();
            last_ref.clear();
            continue;
        };
        // reference changes close every arc on the band
        for g in &dd.bands {
            if last_ref.get(&g.band) != Some(g.reference()) {
                open.retain(|key, _| key.0 != g.band);
                last_ref.insert(g.band, g.reference().clone());
            }
        }
        last_ref.retain(|b, _| dd.band(*b).is_some());

        let mut next_open = BTreeMap::new();
        for (_, row) in dd.rows_of(RowKind::Carrier) {
            let key = (row.band, row.reference.clone(), row.other.clone());
            let slipped = lock_lost(epoch, row.band, &row.reference)
                || lock_lost(epoch, row.band, &row.other);
            let continuing = open
                .get(&key)
                .copied()
                .filter(|&id| !slipped && arcs[id].end + 1 == k);
            let id = match continuing {
                Some(id) => {
                    arcs[id].end = k;
                    id
                }
                None => {
                    let id = arcs.len();
                    arcs.push(AmbiguityArc {
                        id,
                        band: row.band,
                        reference: row.reference.clone(),
                        other: row.other.clone(),
                        start: k,
                        end: k,
                        float: 0.0,
                        variance: f64::INFINITY,
                        fixed: None,
                    });
                    id
                }
            };
            next_open.insert(key, id);
        }
        open = next_open;
    }
    ArcSet::from_arcs(arcs)
}

/// Ratio of second-nearest to nearest squared integer residuals of `x`.
pub fn rounding_ratio(x: f64) -> (i64, f64, f64) {
    let n = x.round();
    let r1 = (x - n).abs();
    let r2 = 1.0 - r1;
    let ratio = if r1 == 0.0 { f64::INFINITY } else { (r2 * r2) / (r1 * r1) };
    (n as i64, r1, ratio)
}

/// Rounding plus ratio test on a single arc.
///
/// The arc is fixed to the nearest integer when the ratio test passes, the
/// rounding residual is at most a quarter cycle and within four standard
/// deviations. Otherwise it is returned unchanged (and unfixed).
pub fn try_fix(arc: &AmbiguityArc, ratio_threshold: f64) -> AmbiguityArc {
    let mut out = arc.clone();
    out.fixed = fix_value(arc.float, arc.variance, ratio_threshold);
    out
}

/// The integer [`try_fix`] would accept for `float` with `variance`, if any.
pub fn fix_value(float: f64, variance: f64, ratio_threshold: f64) -> Option<i64> {
    if !float.is_finite() || !(variance >= 0.0) {
        return None;
    }
    let (n, r1, ratio) = rounding_ratio(float);
    let sigma = variance.sqrt();
    (ratio >= ratio_threshold && r1 <= MAX_ROUNDING_RESIDUAL && r1 <= 4.0 * sigma).then_some(n)
}

/// When a float ambiguity is trusted enough to attempt fixing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixPolicy {
    pub ratio_threshold: f64,
    /// Arcs with a larger float standard deviation are left float, cycles.
    pub max_std_cycles: f64,
}

impl Default for FixPolicy {
    fn default() -> Self {
        Self {
            ratio_threshold: DEFAULT_RATIO,
            max_std_cycles: 0.15,
        }
    }
}

impl FixPolicy {
    pub fn fix(&self, float: f64, variance: f64) -> Option<i64> {
        if !(variance.sqrt() <= self.max_std_cycles) {
            return None;
        }
        fix_value(float, variance, self.ratio_threshold)
    }
}

//! Dense-resampling checks of a step: the pose path of a first-order step is
//! sampled at many intermediate times and the contact state is recomputed
//! at each sample.

use crate::advancement::PairId;
use crate::dynamics::{self, SystemState};
use crate::geometry::{GeometryError, ManifoldKey};
use crate::simulator::contact_snapshot;
use std::collections::BTreeMap;

/// The configuration a step of length `t` from `state` passes through:
/// positions advanced with the current velocities, velocities unchanged.
pub fn sample_state(state: &SystemState, t: f64) -> SystemState {
    let mut s = state.clone();
    dynamics::integrate_position(&mut s, t);
    s
}

#[derive(Debug, Clone, PartialEq)]
pub enum Finding {
    /// The contact set differs from the step's start inside a step that
    /// ends without a change.
    InteriorChange { time: f64, pair: PairId },
    /// The contact set changed more than once inside one step.
    RepeatedChange { time: f64 },
    /// Overlap beyond the penetration tolerance.
    Penetration { time: f64, depth: f64 },
    /// Smallest signed distance below `-limit`.
    NegativeDistance { time: f64, distance: f64 },
}

fn diff(a: &BTreeMap<PairId, ManifoldKey>, b: &BTreeMap<PairId, ManifoldKey>) -> Option<PairId> {
    a.keys().chain(b.keys()).find(|p| a.get(*p) != b.get(*p)).copied()
}

/// Resamples one step of length `h` from `pre` at `substeps` uniform times.
///
/// A step whose end state has the same contact set as its start must show
/// that contact set at every sample. A step that ends with a change may
/// switch once, to the final contact set. Signed distances below
/// `-distance_limit` are reported as well.
pub fn resample_step(
    pre: &SystemState,
    h: f64,
    eps_geo: f64,
    substeps: usize,
    distance_limit: f64,
) -> Vec<Finding> {
    let mut findings = Vec::new();
    let snapshot = |s: &SystemState| contact_snapshot(s, eps_geo);
    let start = match snapshot(pre) {
        Ok(s) => s.keys(),
        Err(GeometryError::Interpenetration { depth }) => {
            return vec![Finding::Penetration { time: pre.time, depth }];
        }
        Err(_) => return findings,
    };
    let mut samples = Vec::with_capacity(substeps);
    for k in 1..=substeps {
        let t = h * k as f64 / substeps as f64;
        let s = sample_state(pre, t);
        match snapshot(&s) {
            Ok(snap) => {
                if snap.min_distance < -distance_limit {
                    findings.push(Finding::NegativeDistance { time: pre.time + t, distance: snap.min_distance });
                }
                samples.push((pre.time + t, snap.keys()));
            }
            Err(GeometryError::Interpenetration { depth }) => {
                findings.push(Finding::Penetration { time: pre.time + t, depth });
                return findings;
            }
            Err(_) => return findings,
        }
    }
    let end = &samples.last().expect("at least one substep").1;
    let ends_changed = end != &start;
    let mut current = &start;
    let mut switches = 0;
    for (time, keys) in &samples {
        if keys == current {
            continue;
        }
        if !ends_changed {
            findings.push(Finding::InteriorChange { time: *time, pair: diff(current, keys).expect("differs") });
            break;
        }
        switches += 1;
        if switches > 1 || keys != end {
            findings.push(Finding::RepeatedChange { time: *time });
            break;
        }
        current = keys;
    }
    findings
}

//! Shared knot vector from the corridor transitions of every agent and pair.
//!
//! Times are kept as integer half steps ("ticks") until the very end, so
//! merging uses exact equality.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Vec3;
use crate::rsfc::RsfcSequence;
use crate::sfc::CorridorSequence;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TimeAllocError {
    #[error("covers ranges do not tile the waypoints")]
    BadCovers,
}

/// Transition ticks (half time steps) of one set sequence.
///
/// For the transition from set `m` to `m + 1`, look for the run of
/// consecutive waypoints lying in both sets around the covers boundary and
/// switch at its middle waypoint. When no waypoint lies in both, switch half
/// a step before the first waypoint of set `m + 1` (`delay`), or exactly at it.
///
/// `inside(m, k)` tells whether waypoint `k` lies in set `m`.
pub fn partial_ticks(
    covers: &[(usize, usize)],
    n_waypoints: usize,
    inside: impl Fn(usize, usize) -> bool,
    delay: bool,
) -> Result<Vec<u32>, TimeAllocError> {
    let mut expect = 0;
    for &(lo, hi) in covers {
        if lo != expect || hi < lo {
            return Err(TimeAllocError::BadCovers);
        }
        expect = hi + 1;
    }
    if expect != n_waypoints {
        return Err(TimeAllocError::BadCovers);
    }

    let mut out = Vec::with_capacity(covers.len().saturating_sub(1));
    let mut prev = 0usize;
    for m in 0..covers.len().saturating_sub(1) {
        let a = covers[m + 1].0;
        let hi = covers[m + 1].1;
        let both = |k: usize| inside(m, k) && inside(m + 1, k);
        let seed = if a >= 1 && a - 1 >= prev && both(a - 1) {
            Some(a - 1)
        } else if both(a) {
            Some(a)
        } else {
            None
        };
        match seed {
            Some(s0) => {
                let mut s = s0;
                while s > prev && both(s - 1) {
                    s -= 1;
                }
                let mut e = s0;
                while e < hi && both(e + 1) {
                    e += 1;
                }
                let count = e - s + 1;
                let mid = s + count / 2;
                out.push(2 * mid as u32);
                prev = mid;
            }
            None => {
                out.push(if delay { 2 * a as u32 - 1 } else { 2 * a as u32 });
                prev = a;
            }
        }
    }
    Ok(out)
}

pub fn sfc_partial(seq: &CorridorSequence, waypoints: &[Vec3], delay: bool) -> Result<Vec<u32>, TimeAllocError> {
    let covers: Vec<_> = seq.corridors.iter().map(|c| c.covers).collect();
    partial_ticks(&covers, waypoints.len(), |m, k| seq.corridors[m].bbox.contains(&waypoints[k]), delay)
}

/// Half-space membership of a relative waypoint uses the sign test only.
pub fn rsfc_partial(seq: &RsfcSequence, rel: &[Vec3], delay: bool) -> Result<Vec<u32>, TimeAllocError> {
    partial_ticks(&seq.covers, rel.len(), |m, k| seq.halfspaces[m].direction.dot(&rel[k]) > 0.0, delay)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSegments {
    /// Knot times `[0, ..., T]`.
    pub knots: Vec<f64>,
    /// Knots in half steps.
    pub ticks: Vec<u32>,
    /// `sfc[i][m]`: corridor index of agent `i` on segment `m`.
    pub sfc: Vec<Vec<usize>>,
    /// `rsfc[p][m]`: half-space index of pair `p` on segment `m`.
    pub rsfc: Vec<Vec<usize>>,
}

impl TimeSegments {
    pub fn segment_count(&self) -> usize {
        self.knots.len() - 1
    }

    pub fn duration(&self) -> f64 {
        *self.knots.last().unwrap()
    }
}

/// Sorted union of the interior transition ticks, framed by 0 and
/// `T = (l_max - 1)` steps.
pub fn merge_ticks(partials: &[&[u32]], l_max: usize) -> Vec<u32> {
    let end = 2 * (l_max.max(1) as u32 - 1);
    let mut set: BTreeSet<u32> = partials.iter().flat_map(|p| p.iter().copied()).filter(|&t| t > 0 && t < end).collect();
    set.insert(0);
    let mut v: Vec<u32> = set.into_iter().collect();
    if end > 0 {
        v.push(end);
    } else {
        // a plan that never moves still needs one segment
        v.push(2);
    }
    v
}

/// Set index active on each segment: the number of transitions at or before
/// the segment start.
pub fn assign(partial: &[u32], ticks: &[u32]) -> Vec<usize> {
    ticks[..ticks.len() - 1].iter().map(|&start| partial.iter().filter(|&&t| t <= start).count()).collect()
}

pub fn allocate(
    sfc_partials: &[Vec<u32>],
    rsfc_partials: &[Vec<u32>],
    l_max: usize,
    t_step: f64,
) -> TimeSegments {
    let all: Vec<&[u32]> = sfc_partials.iter().chain(rsfc_partials).map(Vec::as_slice).collect();
    let ticks = merge_ticks(&all, l_max);
    TimeSegments {
        knots: ticks.iter().map(|&t| t as f64 * 0.5 * t_step).collect(),
        sfc: sfc_partials.iter().map(|p| assign(p, &ticks)).collect(),
        rsfc: rsfc_partials.iter().map(|p| assign(p, &ticks)).collect(),
        ticks,
    }
}

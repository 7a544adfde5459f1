//! The single team-wide QP over all Bernstein control points.
//!
//! Variable `(agent, axis, segment, k)` lives at
//! `((agent * 3 + axis) * M + segment) * (N + 1) + k`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bernstein::{binomial, derivative_cost_block, BernsteinPiece, PiecewiseBernstein};
use crate::geometry::Vec3;
use crate::qp::{Csc, QpData};
use crate::rsfc::RsfcSequence;
use crate::scenario::{AgentSpec, PlannerConfig, CONTINUITY_ORDER};
use crate::sfc::CorridorSequence;
use crate::time_alloc::TimeSegments;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AssembleError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("{what} {index} has no set assigned to segment {segment}")]
    MissingAssignment { what: &'static str, index: usize, segment: usize },
    #[error("boundary and continuity conditions are inconsistent for agent {agent} axis {axis}")]
    Inconsistent { agent: usize, axis: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layout {
    pub agents: usize,
    pub segments: usize,
    pub degree: usize,
}

impl Layout {
    pub fn per_segment(&self) -> usize {
        self.degree + 1
    }

    pub fn per_axis(&self) -> usize {
        self.segments * self.per_segment()
    }

    pub fn n_vars(&self) -> usize {
        3 * self.agents * self.per_axis()
    }

    #[inline]
    pub fn idx(&self, agent: usize, axis: usize, segment: usize, k: usize) -> usize {
        ((agent * 3 + axis) * self.segments + segment) * self.per_segment() + k
    }
}

#[derive(Debug, Clone)]
pub struct QpProblem {
    pub layout: Layout,
    pub knots: Vec<f64>,
    pub data: QpData,
    pub eq_rows: usize,
    /// Equality rows dropped as linearly dependent, over all agents and axes.
    pub dropped_eq_rows: usize,
    pub sfc_rows: usize,
    pub rsfc_rows: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Rhs {
    Start,
    Goal,
    Zero,
}

/// `d`-th derivative at the start (`at_end = false`) or end of a segment as
/// `(k, coefficient)` pairs over its controls.
fn endpoint_derivative(degree: usize, d: usize, dt: f64, at_end: bool) -> Vec<(usize, f64)> {
    let falling: f64 = ((degree - d + 1)..=degree).map(|x| x as f64).product();
    let f = falling / dt.powi(d as i32);
    (0..=d)
        .map(|i| {
            let sign = if (d - i) % 2 == 0 { 1.0 } else { -1.0 };
            let k = if at_end { degree - d + i } else { i };
            (k, f * sign * binomial(d, i) as f64)
        })
        .collect()
}

/// Equality rows shared by every (agent, axis): rest-to-rest boundary
/// conditions and continuity up to acceleration. Local column index is
/// `segment * (N + 1) + k`.
fn equality_block(layout: &Layout, knots: &[f64]) -> Vec<(Vec<(usize, f64)>, Rhs)> {
    let (n, m_count, ps) = (layout.degree, layout.segments, layout.per_segment());
    let dt = |m: usize| knots[m + 1] - knots[m];
    let mut rows = Vec::new();
    for d in 0..=CONTINUITY_ORDER {
        let rhs = if d == 0 { Rhs::Start } else { Rhs::Zero };
        rows.push((endpoint_derivative(n, d, dt(0), false), rhs));
    }
    for d in 0..=CONTINUITY_ORDER {
        let rhs = if d == 0 { Rhs::Goal } else { Rhs::Zero };
        let last = m_count - 1;
        let row = endpoint_derivative(n, d, dt(last), true).into_iter().map(|(k, v)| (last * ps + k, v)).collect();
        rows.push((row, rhs));
    }
    for m in 0..m_count.saturating_sub(1) {
        for d in 0..=CONTINUITY_ORDER {
            let mut row: Vec<(usize, f64)> =
                endpoint_derivative(n, d, dt(m), true).into_iter().map(|(k, v)| (m * ps + k, v)).collect();
            row.extend(endpoint_derivative(n, d, dt(m + 1), false).into_iter().map(|(k, v)| ((m + 1) * ps + k, -v)));
            rows.push((row, Rhs::Zero));
        }
    }
    rows
}

/// Indices of a maximal independent subset of `rows`, checking that every
/// dropped row is consistent for every right-hand side in `rhs_cols`
/// (`rhs_cols[c][r]`). Returns `Err(c)` with the first inconsistent column.
fn independent_rows(rows: &[Vec<(usize, f64)>], width: usize, rhs_cols: &[Vec<f64>]) -> Result<Vec<usize>, usize> {
    const TOL: f64 = 1e-9;
    // echelon basis rows, each with a pivot column and its reduced rhs values
    let mut basis: Vec<(usize, Vec<f64>, Vec<f64>)> = Vec::new();
    let mut keep = Vec::new();
    for (r, sparse) in rows.iter().enumerate() {
        let mut row = vec![0.0; width];
        for &(c, v) in sparse {
            row[c] += v;
        }
        let norm = row.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut rhs: Vec<f64> = rhs_cols.iter().map(|col| col[r]).collect();
        for (pivot, brow, brhs) in &basis {
            let f = row[*pivot];
            if f != 0.0 {
                for (a, b) in row.iter_mut().zip(brow) {
                    *a -= f * b;
                }
                for (a, b) in rhs.iter_mut().zip(brhs) {
                    *a -= f * b;
                }
            }
        }
        let (pivot, pv) = row.iter().enumerate().fold((0, 0.0f64), |(bi, bv), (i, v)| {
            if v.abs() > bv.abs() {
                (i, *v)
            } else {
                (bi, bv)
            }
        });
        if pv.abs() <= TOL * norm.max(1.0) {
            let scale = rhs_cols.iter().map(|c| c.iter().fold(0.0f64, |m, v| m.max(v.abs()))).fold(1.0, f64::max);
            if let Some(c) = rhs.iter().position(|v| v.abs() > 1e-7 * scale) {
                return Err(c);
            }
            continue;
        }
        row.iter_mut().for_each(|v| *v /= pv);
        rhs.iter_mut().for_each(|v| *v /= pv);
        // keep earlier basis rows reduced against the new pivot as well
        for (_, brow, brhs) in basis.iter_mut() {
            let f = brow[pivot];
            if f != 0.0 {
                for (a, b) in brow.iter_mut().zip(&row) {
                    *a -= f * b;
                }
                for (a, b) in brhs.iter_mut().zip(&rhs) {
                    *a -= f * b;
                }
            }
        }
        basis.push((pivot, row, rhs));
        keep.push(r);
    }
    Ok(keep)
}

/// Builds the QP: jerk cost, rest-to-rest boundary conditions, continuity up
/// to acceleration, corridor boxes per control point and relative half-spaces
/// per pair and control point.
pub fn assemble(
    agents: &[AgentSpec],
    sfc: &[CorridorSequence],
    rsfc: &[RsfcSequence],
    segments: &TimeSegments,
    config: &PlannerConfig,
) -> Result<QpProblem, AssembleError> {
    let n_agents = agents.len();
    let m_count = segments.segment_count();
    if sfc.len() != n_agents || segments.sfc.len() != n_agents {
        return Err(AssembleError::Dimension(format!(
            "{n_agents} agents, {} corridor sequences, {} assignments",
            sfc.len(),
            segments.sfc.len()
        )));
    }
    if rsfc.len() != segments.rsfc.len() {
        return Err(AssembleError::Dimension(format!(
            "{} pair sequences, {} assignments",
            rsfc.len(),
            segments.rsfc.len()
        )));
    }
    let layout = Layout { agents: n_agents, segments: m_count, degree: config.degree };
    let ps = layout.per_segment();
    let knots = &segments.knots;

    let mut p_trip = Vec::new();
    for m in 0..m_count {
        let h = derivative_cost_block(config.degree, config.deriv_order, knots[m + 1] - knots[m]);
        for i in 0..n_agents {
            for a in 0..3 {
                let base = layout.idx(i, a, m, 0);
                for (r, row) in h.iter().enumerate() {
                    for (c, &v) in row.iter().enumerate() {
                        if v != 0.0 {
                            p_trip.push((base + r, base + c, 2.0 * v));
                        }
                    }
                }
            }
        }
    }

    let mut a_trip: Vec<(usize, usize, f64)> = Vec::new();
    let mut lo = Vec::new();
    let mut hi = Vec::new();
    let mut row = 0usize;

    let block = equality_block(&layout, knots);
    let block_rows: Vec<Vec<(usize, f64)>> = block.iter().map(|(r, _)| r.clone()).collect();
    let value = |kind: Rhs, i: usize, a: usize| match kind {
        Rhs::Start => agents[i].start[a],
        Rhs::Goal => agents[i].goal[a],
        Rhs::Zero => 0.0,
    };
    let rhs_cols: Vec<Vec<f64>> = (0..n_agents * 3)
        .map(|c| block.iter().map(|&(_, kind)| value(kind, c / 3, c % 3)).collect())
        .collect();
    let keep = independent_rows(&block_rows, layout.per_axis(), &rhs_cols)
        .map_err(|c| AssembleError::Inconsistent { agent: c / 3, axis: c % 3 })?;
    for i in 0..n_agents {
        for a in 0..3 {
            let base = layout.idx(i, a, 0, 0);
            for &r in &keep {
                for &(c, v) in &block[r].0 {
                    a_trip.push((row, base + c, v));
                }
                let b = value(block[r].1, i, a);
                lo.push(b);
                hi.push(b);
                row += 1;
            }
        }
    }
    let eq_rows = row;

    let tight = config.constraint_tightening;
    // Control points fixed by the endpoint conditions. Tightening a row on
    // one of these past the slack the endpoint actually has would make the
    // problem infeasible, so it is capped there.
    let n_deg = config.degree;
    let pinned = |i: usize, m: usize, k: usize| -> Option<Vec3> {
        if m == 0 && k <= CONTINUITY_ORDER {
            Some(agents[i].start)
        } else if m + 1 == m_count && k + CONTINUITY_ORDER >= n_deg {
            Some(agents[i].goal)
        } else {
            None
        }
    };
    for (i, seq) in sfc.iter().enumerate() {
        for m in 0..m_count {
            let c = segments.sfc[i]
                .get(m)
                .and_then(|&s| seq.corridors.get(s))
                .ok_or(AssembleError::MissingAssignment { what: "agent", index: i, segment: m })?;
            for a in 0..3 {
                let half = 0.5 * (c.bbox.max[a] - c.bbox.min[a]);
                let t = tight.min(half.max(0.0));
                for k in 0..ps {
                    a_trip.push((row, layout.idx(i, a, m, k), 1.0));
                    let (tl, tu) = match pinned(i, m, k) {
                        Some(p) => (t.min((p[a] - c.bbox.min[a]).max(0.0)), t.min((c.bbox.max[a] - p[a]).max(0.0))),
                        None => (t, t),
                    };
                    lo.push(c.bbox.min[a] + tl);
                    hi.push(c.bbox.max[a] - tu);
                    row += 1;
                }
            }
        }
    }
    let sfc_rows = row - eq_rows;

    for (p, seq) in rsfc.iter().enumerate() {
        let (i, j) = seq.pair;
        if i >= n_agents || j >= n_agents {
            return Err(AssembleError::Dimension(format!("pair ({i}, {j}) with {n_agents} agents")));
        }
        for m in 0..m_count {
            let h = segments.rsfc[p]
                .get(m)
                .and_then(|&s| seq.halfspaces.get(s))
                .ok_or(AssembleError::MissingAssignment { what: "pair", index: p, segment: m })?;
            let (a, sign) = (h.direction.axis(), h.direction.sign());
            for k in 0..ps {
                a_trip.push((row, layout.idx(j, a, m, k), sign));
                a_trip.push((row, layout.idx(i, a, m, k), -sign));
                let t = match (pinned(i, m, k), pinned(j, m, k)) {
                    (Some(pi), Some(pj)) => tight.min((sign * (pj[a] - pi[a]) - h.margin).max(0.0)),
                    _ => tight,
                };
                lo.push(h.margin + t);
                hi.push(f64::INFINITY);
                row += 1;
            }
        }
    }
    let rsfc_rows = row - eq_rows - sfc_rows;

    let n = layout.n_vars();
    let data = QpData {
        p: Csc::from_triplets(n, n, &p_trip),
        q: vec![0.0; n],
        a: Csc::from_triplets(row, n, &a_trip),
        l: lo,
        u: hi,
    };
    Ok(QpProblem {
        layout,
        knots: knots.clone(),
        data,
        eq_rows,
        dropped_eq_rows: 3 * n_agents * (block.len() - keep.len()),
        sfc_rows,
        rsfc_rows,
    })
}

/// Cuts the solution vector into per-agent piecewise trajectories.
pub fn extract_trajectories(layout: &Layout, knots: &[f64], x: &[f64]) -> Vec<PiecewiseBernstein> {
    (0..layout.agents)
        .map(|i| PiecewiseBernstein {
            pieces: (0..layout.segments)
                .map(|m| BernsteinPiece {
                    controls: (0..layout.per_segment())
                        .map(|k| {
                            Vec3::new(
                                x[layout.idx(i, 0, m, k)],
                                x[layout.idx(i, 1, m, k)],
                                x[layout.idx(i, 2, m, k)],
                            )
                        })
                        .collect(),
                    t0: knots[m],
                    t1: knots[m + 1],
                })
                .collect(),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoint_derivatives_match_hodograph() {
        // velocity at the start: N (c1 - c0) / dt
        assert_eq!(endpoint_derivative(5, 1, 2.0, false), vec![(0, -2.5), (1, 2.5)]);
        // acceleration at the end: N (N-1) (c3 - 2 c4 + c5) / dt^2
        assert_eq!(endpoint_derivative(5, 2, 1.0, true), vec![(3, 20.0), (4, -40.0), (5, 20.0)]);
    }

    #[test]
    fn equality_rows_are_independent_for_quintics() {
        let layout = Layout { agents: 1, segments: 3, degree: 5 };
        let block = equality_block(&layout, &[0.0, 1.0, 2.5, 3.0]);
        assert_eq!(block.len(), 6 + 3 * 2);
        let rows: Vec<_> = block.iter().map(|r| r.0.clone()).collect();
        assert_eq!(independent_rows(&rows, 18, &[vec![0.0; 12]]).unwrap().len(), 12);
    }

    #[test]
    fn cubic_rest_to_rest_is_inconsistent_unless_static() {
        let layout = Layout { agents: 1, segments: 1, degree: 3 };
        let block = equality_block(&layout, &[0.0, 1.0]);
        let rows: Vec<_> = block.iter().map(|r| r.0.clone()).collect();
        let moving: Vec<f64> = block.iter().map(|r| if r.1 == Rhs::Goal { 1.0 } else { 0.0 }).collect();
        assert_eq!(independent_rows(&rows, 4, &[moving]), Err(0));
        assert_eq!(independent_rows(&rows, 4, &[vec![0.0; 6]]).unwrap().len(), 4);
    }
}

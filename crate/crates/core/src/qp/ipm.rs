//! Primal-dual interior-point method (Mehrotra predictor-corrector) for
//! `min 1/2 x'Px + q'x  s.t.  l <= Ax <= u`.
//!
//! Each finite bound gets a slack and a multiplier. Eliminating them leaves
//! a quasi-definite system with the same pattern as the ADMM one:
//! `[P + dI, A'; A, -W]`, where `W` is `d` on equality rows and the inverse
//! barrier weight on inequality rows. Only that diagonal changes between
//! iterations, so the symbolic factorization is reused.

use super::admm::{QpData, QpSettings};
use super::ldl::Ldl;
use super::sparse::inf_norm;

const INF: f64 = 1e20;
/// Static regularization of both diagonal blocks. Much smaller values make
/// the factorization lose the jerk cost to round-off on long horizons.
const REG: f64 = 1e-7;
const STEP_FRACTION: f64 = 0.99;
const REFINE: usize = 20;
/// Complementarity is driven this far below the residual tolerance so the
/// returned point sits close to the active set.
const GAP_FACTOR: f64 = 1e-3;

#[derive(Debug, Clone)]
pub(crate) struct IpmOutcome {
    pub x: Vec<f64>,
    /// Multipliers in the `l <= Ax <= u` convention: negative on active
    /// lower bounds, positive on active upper bounds.
    pub y: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub prim: f64,
    pub dual: f64,
    pub gap: f64,
}

#[derive(Clone, Copy, PartialEq)]
enum Row {
    Eq,
    Ineq { lower: bool, upper: bool },
    Free,
}

struct Kkt<'a> {
    data: &'a QpData,
    at: super::sparse::Csc,
    rows: Vec<Row>,
    f: Ldl,
    diag_at: usize,
    // current constraint-block diagonal, for refinement
    w: Vec<f64>,
}

impl<'a> Kkt<'a> {
    fn new(data: &'a QpData, rows: Vec<Row>) -> Option<Self> {
        let n = data.q.len();
        let m = data.l.len();
        let mut t = Vec::with_capacity(data.p.nnz() / 2 + n + data.a.nnz() + m);
        for c in 0..n {
            for (r, v) in data.p.col(c) {
                if r <= c {
                    t.push((r, c, v));
                }
            }
            t.push((c, c, REG));
        }
        for c in 0..n {
            for (r, v) in data.a.col(c) {
                t.push((c, n + r, v));
            }
        }
        let diag_at = t.len();
        let w = vec![1.0; m];
        for i in 0..m {
            t.push((n + i, n + i, -w[i]));
        }
        let f = Ldl::new(n + m, &t).ok()?;
        Some(Self { data, at: data.a.transpose(), rows, f, diag_at, w })
    }

    fn set_diag(&mut self, w: &[f64]) -> bool {
        for (i, &v) in w.iter().enumerate() {
            self.f.set_entry(self.diag_at + i, -v);
        }
        self.w.copy_from_slice(w);
        self.f.refactor().is_ok()
    }

    /// Solves the unregularized system `[P, A'; A, -W0] s = rhs`, where `W0`
    /// is zero on equality rows, with refinement around the regularized
    /// factorization.
    fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let n = self.data.q.len();
        let mut sol = rhs.to_vec();
        self.f.solve(&mut sol);
        let mut best = f64::INFINITY;
        for _ in 0..REFINE {
            let (xs, ys) = sol.split_at(n);
            let px = self.data.p.mul(xs);
            let aty = self.at.mul(ys);
            let ax = self.data.a.mul(xs);
            let mut r = vec![0.0; rhs.len()];
            for j in 0..n {
                r[j] = rhs[j] - px[j] - aty[j];
            }
            for (i, row) in self.rows.iter().enumerate() {
                let wi = if *row == Row::Eq { 0.0 } else { self.w[i] };
                r[n + i] = rhs[n + i] - ax[i] + wi * ys[i];
            }
            let norm = inf_norm(&r);
            if norm >= 0.5 * best || norm == 0.0 {
                break;
            }
            best = norm;
            self.f.solve(&mut r);
            for (a, b) in sol.iter_mut().zip(&r) {
                *a += b;
            }
        }
        sol
    }
}

/// Largest step in `(0, 1]` keeping `v + a dv >= 0` for every entry.
fn max_step(v: &[f64], dv: &[f64]) -> f64 {
    v.iter().zip(dv).fold(1.0f64, |a, (&x, &d)| if d < 0.0 { a.min(-x / d) } else { a })
}

pub(crate) fn interior_point(data: &QpData, settings: &QpSettings, max_iter: usize) -> Option<IpmOutcome> {
    let (n, m) = (data.q.len(), data.l.len());
    let rows: Vec<Row> = (0..m)
        .map(|i| {
            let (l, u) = (data.l[i], data.u[i]);
            if l == u {
                Row::Eq
            } else if l <= -INF && u >= INF {
                Row::Free
            } else {
                Row::Ineq { lower: l > -INF, upper: u < INF }
            }
        })
        .collect();
    let has_l: Vec<bool> = rows.iter().map(|r| matches!(r, Row::Ineq { lower: true, .. })).collect();
    let has_u: Vec<bool> = rows.iter().map(|r| matches!(r, Row::Ineq { upper: true, .. })).collect();
    let ncomp = has_l.iter().chain(&has_u).filter(|&&b| b).count();
    let mut kkt = Kkt::new(data, rows.clone())?;

    // start: min 1/2 x'Px + q'x + 1/2 |A_I x - t|^2 s.t. equality rows
    let mut w0 = vec![1.0; m];
    for i in 0..m {
        w0[i] = match rows[i] {
            Row::Eq => REG,
            Row::Free => INF,
            Row::Ineq { .. } => 1.0,
        };
    }
    if !kkt.set_diag(&w0) {
        return None;
    }
    let mut rhs = vec![0.0; n + m];
    for j in 0..n {
        rhs[j] = -data.q[j];
    }
    for i in 0..m {
        rhs[n + i] = match rows[i] {
            Row::Eq => data.l[i],
            Row::Free => 0.0,
            Row::Ineq { lower: true, upper: true } => 0.5 * (data.l[i] + data.u[i]),
            Row::Ineq { lower: true, upper: false } => data.l[i],
            Row::Ineq { lower: false, .. } => data.u[i],
        };
    }
    let sol = kkt.solve(&rhs);
    let mut x = sol[..n].to_vec();
    let mut y_eq: Vec<f64> = (0..m).map(|i| if rows[i] == Row::Eq { sol[n + i] } else { 0.0 }).collect();
    let ax = data.a.mul(&x);
    let mut sl = vec![0.0; m];
    let mut su = vec![0.0; m];
    let mut zl = vec![0.0; m];
    let mut zu = vec![0.0; m];
    for i in 0..m {
        if has_l[i] {
            sl[i] = (ax[i] - data.l[i]).max(1.0);
            zl[i] = 1.0;
        }
        if has_u[i] {
            su[i] = (data.u[i] - ax[i]).max(1.0);
            zu[i] = 1.0;
        }
    }

    let mut out = IpmOutcome {
        x: Vec::new(),
        y: Vec::new(),
        converged: false,
        iterations: 0,
        prim: f64::INFINITY,
        dual: f64::INFINITY,
        gap: f64::INFINITY,
    };
    let multipliers = |y_eq: &[f64], zl: &[f64], zu: &[f64]| -> Vec<f64> {
        (0..m).map(|i| if rows[i] == Row::Eq { y_eq[i] } else { zu[i] - zl[i] }).collect()
    };

    let mut w = vec![0.0; m];
    let mut dxv = vec![0.0; n + m];
    for iter in 0..=max_iter {
        let v = multipliers(&y_eq, &zl, &zu);
        let ax = data.a.mul(&x);
        let px = data.p.mul(&x);
        let aty = kkt.at.mul(&v);
        let rd: Vec<f64> = (0..n).map(|j| px[j] + data.q[j] + aty[j]).collect();
        let mut re = vec![0.0; m];
        let mut rl = vec![0.0; m];
        let mut ru = vec![0.0; m];
        for i in 0..m {
            match rows[i] {
                Row::Eq => re[i] = ax[i] - data.l[i],
                Row::Ineq { .. } => {
                    if has_l[i] {
                        rl[i] = ax[i] - sl[i] - data.l[i];
                    }
                    if has_u[i] {
                        ru[i] = ax[i] + su[i] - data.u[i];
                    }
                }
                Row::Free => {}
            }
        }
        let mu = if ncomp == 0 {
            0.0
        } else {
            (0..m).map(|i| sl[i] * zl[i] + su[i] * zu[i]).sum::<f64>() / ncomp as f64
        };

        // convergence on the original bounds, not the slacks; the primal
        // test is absolute so endpoint and continuity rows come out exact
        let prim = (0..m).fold(0.0f64, |a, i| {
            let lo = if data.l[i] > -INF { data.l[i] - ax[i] } else { 0.0 };
            let hi = if data.u[i] < INF { ax[i] - data.u[i] } else { 0.0 };
            a.max(lo).max(hi)
        });
        let dual = inf_norm(&rd);
        let dual_scale = inf_norm(&px).max(inf_norm(&aty)).max(inf_norm(&data.q));
        out.iterations = iter;
        out.prim = prim;
        out.dual = dual;
        out.gap = mu;
        if prim <= settings.eps_abs
            && dual <= settings.eps_abs + settings.eps_rel * dual_scale
            && mu <= GAP_FACTOR * settings.eps_abs
        {
            out.converged = true;
            break;
        }
        if iter == max_iter {
            break;
        }

        for i in 0..m {
            w[i] = match rows[i] {
                Row::Eq => REG,
                Row::Free => INF,
                Row::Ineq { .. } => {
                    let d = if has_l[i] { zl[i] / sl[i] } else { 0.0 } + if has_u[i] { zu[i] / su[i] } else { 0.0 };
                    1.0 / d
                }
            };
        }
        if !kkt.set_diag(&w) {
            break;
        }

        // direction for complementarity targets rcl, rcu
        let direction = |rcl: &[f64], rcu: &[f64], buf: &mut Vec<f64>| {
            buf.iter_mut().for_each(|v| *v = 0.0);
            for j in 0..n {
                buf[j] = -rd[j];
            }
            for i in 0..m {
                buf[n + i] = match rows[i] {
                    Row::Eq => -re[i],
                    Row::Free => 0.0,
                    Row::Ineq { .. } => {
                        let mut g = 0.0;
                        if has_u[i] {
                            g += (-rcu[i] + zu[i] * ru[i]) / su[i];
                        }
                        if has_l[i] {
                            g += (rcl[i] + zl[i] * rl[i]) / sl[i];
                        }
                        -w[i] * g
                    }
                };
            }
            let sol = kkt.solve(buf);
            let dx = sol[..n].to_vec();
            let adx = data.a.mul(&dx);
            let mut dsl = vec![0.0; m];
            let mut dsu = vec![0.0; m];
            let mut dzl = vec![0.0; m];
            let mut dzu = vec![0.0; m];
            let mut dy = vec![0.0; m];
            for i in 0..m {
                if rows[i] == Row::Eq {
                    dy[i] = sol[n + i];
                }
                if has_l[i] {
                    dsl[i] = adx[i] + rl[i];
                    dzl[i] = (-rcl[i] - zl[i] * dsl[i]) / sl[i];
                }
                if has_u[i] {
                    dsu[i] = -ru[i] - adx[i];
                    dzu[i] = (-rcu[i] - zu[i] * dsu[i]) / su[i];
                }
            }
            (dx, dy, dsl, dsu, dzl, dzu)
        };

        // predictor
        let rcl: Vec<f64> = (0..m).map(|i| sl[i] * zl[i]).collect();
        let rcu: Vec<f64> = (0..m).map(|i| su[i] * zu[i]).collect();
        let (_, _, asl, asu, azl, azu) = direction(&rcl, &rcu, &mut dxv);
        let alpha_aff = max_step(&sl, &asl).min(max_step(&su, &asu)).min(max_step(&zl, &azl)).min(max_step(&zu, &azu));
        let mu_aff = if ncomp == 0 {
            0.0
        } else {
            (0..m)
                .map(|i| {
                    (sl[i] + alpha_aff * asl[i]) * (zl[i] + alpha_aff * azl[i])
                        + (su[i] + alpha_aff * asu[i]) * (zu[i] + alpha_aff * azu[i])
                })
                .sum::<f64>()
                / ncomp as f64
        };
        let sigma = if mu > 0.0 { (mu_aff / mu).powi(3).min(1.0) } else { 0.0 };

        // corrector
        let rcl: Vec<f64> = (0..m)
            .map(|i| if has_l[i] { sl[i] * zl[i] + asl[i] * azl[i] - sigma * mu } else { 0.0 })
            .collect();
        let rcu: Vec<f64> = (0..m)
            .map(|i| if has_u[i] { su[i] * zu[i] + asu[i] * azu[i] - sigma * mu } else { 0.0 })
            .collect();
        let (dx, dy, dsl, dsu, dzl, dzu) = direction(&rcl, &rcu, &mut dxv);
        let alpha_p = (STEP_FRACTION * max_step(&sl, &dsl).min(max_step(&su, &dsu))).min(1.0);
        let alpha_d = (STEP_FRACTION * max_step(&zl, &dzl).min(max_step(&zu, &dzu))).min(1.0);
        let alpha = alpha_p.min(alpha_d);
        if alpha < 1e-12 {
            break;
        }
        for j in 0..n {
            x[j] += alpha * dx[j];
        }
        for i in 0..m {
            y_eq[i] += alpha * dy[i];
            if has_l[i] {
                sl[i] += alpha * dsl[i];
                zl[i] += alpha * dzl[i];
            }
            if has_u[i] {
                su[i] += alpha * dsu[i];
                zu[i] += alpha * dzu[i];
            }
        }
    }
    out.y = multipliers(&y_eq, &zl, &zu);
    out.x = x;
    Some(out)
}



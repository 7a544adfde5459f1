//! Operator-splitting (ADMM) solver for convex QPs
//!
//! ```text
//! minimize    1/2 x^T P x + q^T x
//! subject to  l <= A x <= u
//! ```
//!
//! with Ruiz equilibration, over-relaxation, adaptive step size, primal
//! infeasibility detection and a polishing step that solves the KKT system
//! of the guessed active set exactly.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::ipm::interior_point;
use super::ldl::Ldl;
use super::sparse::{inf_norm, Csc};

#[derive(Debug, Clone)]
pub struct QpData {
    /// Symmetric, both triangles stored.
    pub p: Csc,
    pub q: Vec<f64>,
    pub a: Csc,
    pub l: Vec<f64>,
    pub u: Vec<f64>,
}

impl QpData {
    pub fn objective(&self, x: &[f64]) -> f64 {
        let px = self.p.mul(x);
        0.5 * dot(x, &px) + dot(&self.q, x)
    }
}

#[derive(Debug, Clone)]
pub struct QpSettings {
    pub method: QpMethod,
    /// Iteration cap of the interior-point method.
    pub ipm_max_iter: usize,
    pub eps_abs: f64,
    pub eps_rel: f64,
    pub eps_prim_inf: f64,
    pub max_iter: usize,
    pub rho: f64,
    pub sigma: f64,
    pub alpha: f64,
    pub scaling_iters: usize,
    pub check_every: usize,
    pub adaptive_rho: bool,
    pub polish: bool,
    pub polish_delta: f64,
    pub polish_refine: usize,
}

impl Default for QpSettings {
    fn default() -> Self {
        Self {
            method: QpMethod::Auto,
            ipm_max_iter: 100,
            eps_abs: 1e-6,
            eps_rel: 1e-6,
            eps_prim_inf: 1e-5,
            max_iter: 20_000,
            rho: 0.1,
            sigma: 1e-6,
            alpha: 1.6,
            scaling_iters: 0,
            check_every: 25,
            adaptive_rho: true,
            polish: true,
            polish_delta: 1e-9,
            polish_refine: 5,
        }
    }
}

/// Which algorithm `solve` runs. `Auto` tries the interior-point method and
/// falls back to ADMM (which also certifies infeasibility) if it does not
/// converge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QpMethod {
    Auto,
    InteriorPoint,
    Admm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QpStatus {
    Solved,
    PrimalInfeasible,
    MaxIterations,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QpInfo {
    pub status: QpStatus,
    /// Algorithm that produced the result.
    pub method: QpMethod,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub objective: f64,
    pub polished: bool,
    pub rho_updates: usize,
    pub setup_time: f64,
    pub solve_time: f64,
    /// `||A^T dy||_inf / ||dy||_inf` of the certificate when infeasible.
    pub infeasibility_certificate: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct QpResult {
    pub x: Vec<f64>,
    /// Multipliers: negative on active lower bounds, positive on active upper bounds.
    pub y: Vec<f64>,
    pub info: QpInfo,
}

const RHO_MIN: f64 = 1e-6;
const RHO_MAX: f64 = 1e6;
const RHO_EQ_FACTOR: f64 = 1e3;
const MIN_SCALING: f64 = 1e-4;
const MAX_SCALING: f64 = 1e4;
const INF: f64 = 1e20;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

struct Scaled {
    p: Csc,
    q: Vec<f64>,
    a: Csc,
    at: Csc,
    l: Vec<f64>,
    u: Vec<f64>,
    d: Vec<f64>,
    e: Vec<f64>,
    dinv: Vec<f64>,
    einv: Vec<f64>,
    c: f64,
}

fn scale_problem(data: &QpData, iters: usize) -> Scaled {
    let (n, m) = (data.q.len(), data.l.len());
    let mut p = data.p.clone();
    let mut a = data.a.clone();
    let mut q = data.q.clone();
    let mut d = vec![1.0; n];
    let mut e = vec![1.0; m];
    let mut c = 1.0;
    let clip = |v: f64| if v < MIN_SCALING { 1.0 } else { v.min(MAX_SCALING) };
    for _ in 0..iters {
        let pn = p.col_inf_norms();
        let an = a.col_inf_norms();
        let dd: Vec<f64> = (0..n).map(|j| 1.0 / clip(pn[j].max(an[j])).sqrt()).collect();
        let ae = a.row_inf_norms();
        let de: Vec<f64> = (0..m).map(|i| 1.0 / clip(ae[i]).sqrt()).collect();
        p.scale(&dd, &dd);
        a.scale(&de, &dd);
        for j in 0..n {
            q[j] *= dd[j];
            d[j] *= dd[j];
        }
        for i in 0..m {
            e[i] *= de[i];
        }
        let pn = p.col_inf_norms();
        let mean = if n > 0 { pn.iter().sum::<f64>() / n as f64 } else { 1.0 };
        let gamma = 1.0 / clip(mean.max(inf_norm(&q)));
        p.values.iter_mut().for_each(|v| *v *= gamma);
        q.iter_mut().for_each(|v| *v *= gamma);
        c *= gamma;
    }
    let scale_bound = |b: f64, s: f64| if b.abs() >= INF { b } else { b * s };
    let l = (0..m).map(|i| scale_bound(data.l[i], e[i])).collect();
    let u = (0..m).map(|i| scale_bound(data.u[i], e[i])).collect();
    let at = a.transpose();
    Scaled {
        dinv: d.iter().map(|v| 1.0 / v).collect(),
        einv: e.iter().map(|v| 1.0 / v).collect(),
        p,
        q,
        a,
        at,
        l,
        u,
        d,
        e,
        c,
    }
}

struct Residuals {
    prim: f64,
    dual: f64,
    prim_scale: f64,
    dual_scale: f64,
}

/// Residuals in original units for scaled iterates.
fn residuals(s: &Scaled, x: &[f64], z: &[f64], y: &[f64]) -> Residuals {
    let ax = s.a.mul(x);
    let px = s.p.mul(x);
    let aty = s.at.mul(y);
    let mut prim = 0.0f64;
    let mut ax_n = 0.0f64;
    let mut z_n = 0.0f64;
    for i in 0..ax.len() {
        prim = prim.max((s.einv[i] * (ax[i] - z[i])).abs());
        ax_n = ax_n.max((s.einv[i] * ax[i]).abs());
        z_n = z_n.max((s.einv[i] * z[i]).abs());
    }
    let mut dual = 0.0f64;
    let (mut px_n, mut aty_n, mut q_n) = (0.0f64, 0.0f64, 0.0f64);
    for j in 0..x.len() {
        let k = s.dinv[j] / s.c;
        dual = dual.max((k * (px[j] + s.q[j] + aty[j])).abs());
        px_n = px_n.max((k * px[j]).abs());
        aty_n = aty_n.max((k * aty[j]).abs());
        q_n = q_n.max((k * s.q[j]).abs());
    }
    Residuals { prim, dual, prim_scale: ax_n.max(z_n), dual_scale: px_n.max(aty_n).max(q_n) }
}

impl Residuals {
    fn converged(&self, eps_abs: f64, eps_rel: f64) -> bool {
        self.prim <= eps_abs + eps_rel * self.prim_scale && self.dual <= eps_abs + eps_rel * self.dual_scale
    }
}

fn kkt_upper(s: &Scaled, sigma: f64, diag_lower: &[f64]) -> Vec<(usize, usize, f64)> {
    let n = s.q.len();
    let mut t = Vec::with_capacity(s.p.nnz() / 2 + n + s.a.nnz() + diag_lower.len());
    for c in 0..n {
        for (r, v) in s.p.col(c) {
            if r <= c {
                t.push((r, c, v));
            }
        }
    }
    for j in 0..n {
        t.push((j, j, sigma));
    }
    for c in 0..n {
        for (r, v) in s.a.col(c) {
            t.push((c, n + r, v));
        }
    }
    for (i, &v) in diag_lower.iter().enumerate() {
        t.push((n + i, n + i, v));
    }
    t
}

/// Whether `dy` certifies primal infeasibility (it is modified by the
/// projection onto the polar recession cone of the bounds).
fn primal_infeasible(s: &Scaled, dy: &mut [f64], eps: f64) -> Option<f64> {
    for i in 0..dy.len() {
        if s.u[i] >= INF {
            dy[i] = dy[i].min(0.0);
        }
        if s.l[i] <= -INF {
            dy[i] = dy[i].max(0.0);
        }
    }
    let norm = dy.iter().zip(&s.e).fold(0.0f64, |m, (v, e)| m.max((v * e).abs()));
    if norm < 1e-30 {
        return None;
    }
    let mut support = 0.0;
    for i in 0..dy.len() {
        if dy[i] > 0.0 {
            support += s.u[i] * dy[i];
        } else if dy[i] < 0.0 {
            support += s.l[i] * dy[i];
        }
    }
    let aty = s.at.mul(dy);
    let aty_n = aty.iter().zip(&s.dinv).fold(0.0f64, |m, (v, d)| m.max((v * d).abs()));
    (aty_n <= eps * norm && support <= -eps * norm).then_some(aty_n / norm)
}

struct Polished {
    x: Vec<f64>,
    y: Vec<f64>,
    res: Residuals,
}

/// Guesses the active set from the ADMM iterate and solves the equality
/// constrained problem on it. `None` if the guess is inconsistent.
fn polish(s: &Scaled, z: &[f64], y: &[f64], settings: &QpSettings) -> Option<Polished> {
    let (n, m) = (s.q.len(), z.len());
    // -1 lower active, +1 upper active, 0 inactive
    let mut side = vec![0i8; m];
    let mut active = Vec::new();
    for i in 0..m {
        if s.l[i] == s.u[i] || z[i] - s.l[i] < -y[i] {
            side[i] = -1;
        } else if s.u[i] - z[i] < y[i] {
            side[i] = 1;
        }
        if side[i] != 0 {
            active.push(i);
        }
    }
    let k = active.len();
    let delta = settings.polish_delta;
    let mut t: Vec<(usize, usize, f64)> = Vec::new();
    for c in 0..n {
        for (r, v) in s.p.col(c) {
            if r <= c {
                t.push((r, c, v));
            }
        }
        t.push((c, c, delta));
    }
    let mut slot = vec![usize::MAX; m];
    for (r, &i) in active.iter().enumerate() {
        slot[i] = r;
    }
    for c in 0..n {
        for (i, v) in s.a.col(c) {
            if slot[i] != usize::MAX {
                t.push((c, n + slot[i], v));
            }
        }
    }
    for r in 0..k {
        t.push((n + r, n + r, -delta));
    }
    let f = Ldl::new(n + k, &t).ok()?;

    let mut rhs = vec![0.0; n + k];
    for j in 0..n {
        rhs[j] = -s.q[j];
    }
    for (r, &i) in active.iter().enumerate() {
        rhs[n + r] = if side[i] < 0 { s.l[i] } else { s.u[i] };
    }
    let mut sol = rhs.clone();
    f.solve(&mut sol);
    // iterative refinement against the unregularized system
    for _ in 0..settings.polish_refine {
        let (xs, ys) = sol.split_at(n);
        let mut yfull = vec![0.0; m];
        for (r, &i) in active.iter().enumerate() {
            yfull[i] = ys[r];
        }
        let px = s.p.mul(xs);
        let aty = s.at.mul(&yfull);
        let ax = s.a.mul(xs);
        let mut r = vec![0.0; n + k];
        for j in 0..n {
            r[j] = rhs[j] - px[j] - aty[j];
        }
        for (q, &i) in active.iter().enumerate() {
            r[n + q] = rhs[n + q] - ax[i];
        }
        f.solve(&mut r);
        for (a, b) in sol.iter_mut().zip(&r) {
            *a += b;
        }
    }
    let xp = sol[..n].to_vec();
    let mut yp = vec![0.0; m];
    for (r, &i) in active.iter().enumerate() {
        let v = sol[n + r];
        // multipliers of the wrong sign mean the active-set guess is off
        if s.l[i] != s.u[i] && v * (side[i] as f64) < -1e-9 * (1.0 + v.abs()) {
            return None;
        }
        yp[i] = v;
    }
    let ax = s.a.mul(&xp);
    let zp: Vec<f64> = (0..m).map(|i| ax[i].clamp(s.l[i], s.u[i])).collect();
    let res = residuals(s, &xp, &zp, &yp);
    Some(Polished { x: xp, y: yp, res })
}

/// Solves the QP. Deterministic: the same data and settings give the same
/// iterates. With `QpMethod::Auto` an interior-point run that does not
/// converge hands over to ADMM, which either solves the problem or returns
/// an infeasibility certificate.
pub fn solve(data: &QpData, settings: &QpSettings) -> QpResult {
    let m = data.l.len();
    if settings.method != QpMethod::Admm && (0..m).all(|i| data.l[i] <= data.u[i]) {
        let t = Instant::now();
        if let Some(o) = interior_point(data, settings, settings.ipm_max_iter) {
            if o.converged || settings.method == QpMethod::InteriorPoint {
                let info = QpInfo {
                    status: if o.converged { QpStatus::Solved } else { QpStatus::MaxIterations },
                    method: QpMethod::InteriorPoint,
                    iterations: o.iterations,
                    primal_residual: o.prim,
                    dual_residual: o.dual,
                    objective: data.objective(&o.x),
                    polished: false,
                    rho_updates: 0,
                    setup_time: 0.0,
                    solve_time: t.elapsed().as_secs_f64(),
                    infeasibility_certificate: None,
                };
                return QpResult { x: o.x, y: o.y, info };
            }
        } else if settings.method == QpMethod::InteriorPoint {
            let mut r = solve_admm(data, &QpSettings { max_iter: 0, ..settings.clone() });
            r.info.method = QpMethod::InteriorPoint;
            r.info.status = QpStatus::MaxIterations;
            return r;
        }
    }
    solve_admm(data, settings)
}

fn solve_admm(data: &QpData, settings: &QpSettings) -> QpResult {
    let t_setup = Instant::now();
    let (n, m) = (data.q.len(), data.l.len());
    let done = |x: Vec<f64>, y: Vec<f64>, info: QpInfo| QpResult { x, y, info };
    let mut info = QpInfo {
        status: QpStatus::MaxIterations,
        method: QpMethod::Admm,
        iterations: 0,
        primal_residual: f64::INFINITY,
        dual_residual: f64::INFINITY,
        objective: f64::NAN,
        polished: false,
        rho_updates: 0,
        setup_time: 0.0,
        solve_time: 0.0,
        infeasibility_certificate: None,
    };
    if (0..m).any(|i| data.l[i] > data.u[i]) {
        info.status = QpStatus::PrimalInfeasible;
        return done(vec![0.0; n], vec![0.0; m], info);
    }

    let s = scale_problem(data, settings.scaling_iters);
    let is_eq: Vec<bool> = (0..m).map(|i| s.u[i] - s.l[i] < 1e-4 * RHO_MIN).collect();
    let is_free: Vec<bool> = (0..m).map(|i| s.l[i] <= -INF && s.u[i] >= INF).collect();
    let rho_vec = |rho: f64| -> Vec<f64> {
        (0..m)
            .map(|i| {
                if is_free[i] {
                    RHO_MIN
                } else if is_eq[i] {
                    RHO_EQ_FACTOR * rho
                } else {
                    rho
                }
            })
            .collect()
    };
    let mut rho = settings.rho;
    let mut rhos = rho_vec(rho);
    let diag: Vec<f64> = rhos.iter().map(|r| -1.0 / r).collect();
    let triplets = kkt_upper(&s, settings.sigma, &diag);
    let diag_at = triplets.len() - m;
    let mut kkt = match Ldl::new(n + m, &triplets) {
        Ok(f) => f,
        Err(_) => {
            info.setup_time = t_setup.elapsed().as_secs_f64();
            return done(vec![0.0; n], vec![0.0; m], info);
        }
    };
    info.setup_time = t_setup.elapsed().as_secs_f64();
    let t_solve = Instant::now();

    let mut x = vec![0.0; n];
    let mut z = vec![0.0; m];
    let mut y = vec![0.0; m];
    let mut rhs = vec![0.0; n + m];
    let mut dy = vec![0.0; m];
    let alpha = settings.alpha;
    let mut polish_gate = 1e-3;
    let mut best: Option<Polished> = None;

    for iter in 1..=settings.max_iter {
        for j in 0..n {
            rhs[j] = settings.sigma * x[j] - s.q[j];
        }
        for i in 0..m {
            rhs[n + i] = z[i] - y[i] / rhos[i];
        }
        kkt.solve(&mut rhs);
        for j in 0..n {
            x[j] = alpha * rhs[j] + (1.0 - alpha) * x[j];
        }
        for i in 0..m {
            let zt = z[i] + (rhs[n + i] - y[i]) / rhos[i];
            let zr = alpha * zt + (1.0 - alpha) * z[i];
            let zn = (zr + y[i] / rhos[i]).clamp(s.l[i], s.u[i]);
            let yn = y[i] + rhos[i] * (zr - zn);
            dy[i] = yn - y[i];
            y[i] = yn;
            z[i] = zn;
        }
        info.iterations = iter;

        if iter % settings.check_every != 0 && iter != settings.max_iter {
            continue;
        }
        let res = residuals(&s, &x, &z, &y);
        info.primal_residual = res.prim;
        info.dual_residual = res.dual;

        if res.converged(settings.eps_abs, settings.eps_rel) {
            info.status = QpStatus::Solved;
            break;
        }
        if let Some(cert) = primal_infeasible(&s, &mut dy, settings.eps_prim_inf) {
            info.status = QpStatus::PrimalInfeasible;
            info.infeasibility_certificate = Some(cert);
            info.solve_time = t_solve.elapsed().as_secs_f64();
            return done(x, y, info);
        }
        if settings.polish && res.converged(polish_gate, polish_gate) {
            polish_gate *= 0.1;
            if let Some(p) = polish(&s, &z, &y, settings) {
                if p.res.converged(settings.eps_abs, settings.eps_rel) {
                    best = Some(p);
                    info.status = QpStatus::Solved;
                    break;
                }
            }
        }
        if settings.adaptive_rho {
            let ax_n = res.prim_scale.max(1e-30);
            let dn = res.dual_scale.max(1e-30);
            let ratio = (res.prim / ax_n) / (res.dual / dn).max(1e-30);
            let new_rho = (rho * ratio.sqrt()).clamp(RHO_MIN, RHO_MAX);
            if new_rho > 5.0 * rho || new_rho < rho / 5.0 {
                rho = new_rho;
                rhos = rho_vec(rho);
                for (i, r) in rhos.iter().enumerate() {
                    kkt.set_entry(diag_at + i, -1.0 / r);
                }
                if kkt.refactor().is_err() {
                    break;
                }
                info.rho_updates += 1;
            }
        }
    }

    if info.status == QpStatus::Solved && settings.polish && best.is_none() {
        if let Some(p) = polish(&s, &z, &y, settings) {
            if p.res.prim <= info.primal_residual.max(settings.eps_abs)
                && p.res.dual <= info.dual_residual.max(settings.eps_abs)
            {
                best = Some(p);
            }
        }
    }
    let (xs, ys) = match best {
        Some(p) => {
            info.polished = true;
            info.primal_residual = p.res.prim;
            info.dual_residual = p.res.dual;
            (p.x, p.y)
        }
        None => (x, y),
    };
    let x_out: Vec<f64> = (0..n).map(|j| s.d[j] * xs[j]).collect();
    let y_out: Vec<f64> = (0..m).map(|i| s.e[i] * ys[i] / s.c).collect();
    info.objective = data.objective(&x_out);
    info.solve_time = t_solve.elapsed().as_secs_f64();
    done(x_out, y_out, info)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> QpData {
        // min 1/2 (x0^2 + x1^2) - x0 - x1  s.t. x0 + x1 = 1, 0 <= x0 <= 0.2
        QpData {
            p: Csc::from_triplets(2, 2, &[(0, 0, 1.0), (1, 1, 1.0)]),
            q: vec![-1.0, -1.0],
            a: Csc::from_triplets(2, 2, &[(0, 0, 1.0), (0, 1, 1.0), (1, 0, 1.0)]),
            l: vec![1.0, 0.0],
            u: vec![1.0, 0.2],
        }
    }

    #[test]
    fn solves_small_qp() {
        let r = solve(&small(), &QpSettings::default());
        assert_eq!(r.info.status, QpStatus::Solved);
        assert!((r.x[0] - 0.2).abs() < 1e-7, "{:?}", r.x);
        assert!((r.x[1] - 0.8).abs() < 1e-7);
        // stationarity: P x + q + A^T y = 0
        let d = small();
        let px = d.p.mul(&r.x);
        let aty = d.a.tmul(&r.y);
        for j in 0..2 {
            assert!((px[j] + d.q[j] + aty[j]).abs() < 1e-6);
        }
        assert!(r.y[1] > 0.0);
    }

    #[test]
    fn detects_infeasibility() {
        let mut d = small();
        // x0 + x1 = 1 with x0 in [0, 0.2] and x0 + x1 >= 3 is impossible
        d.a = Csc::from_triplets(3, 2, &[(0, 0, 1.0), (0, 1, 1.0), (1, 0, 1.0), (2, 0, 1.0), (2, 1, 1.0)]);
        d.l = vec![1.0, 0.0, 3.0];
        d.u = vec![1.0, 0.2, INF];
        let r = solve(&d, &QpSettings::default());
        assert_eq!(r.info.status, QpStatus::PrimalInfeasible);

        let mut d = small();
        d.l[1] = 0.5;
        assert_eq!(solve(&d, &QpSettings::default()).info.status, QpStatus::PrimalInfeasible);
    }

    #[test]
    fn repeated_solves_are_identical() {
        let a = solve(&small(), &QpSettings::default());
        let b = solve(&small(), &QpSettings::default());
        assert_eq!(a.x, b.x);
        assert_eq!(a.info.iterations, b.info.iterations);
    }
}

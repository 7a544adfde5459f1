//! Bernstein polynomial algebra on a single segment.

use serde::{Deserialize, Serialize};

use crate::geometry::Vec3;

pub const MAX_DEGREE: usize = 20;

/// Exact binomial coefficient for `n <= 62`.
pub fn binomial(n: usize, k: usize) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut c: u64 = 1;
    for i in 0..k {
        // c * (n - i) is divisible by (i + 1) after the multiplication
        c = c * (n - i) as u64 / (i + 1) as u64;
    }
    c
}

/// `C(n, k) t^k (1 - t)^(n - k)`.
pub fn basis(k: usize, n: usize, t: f64) -> f64 {
    assert!(k <= n, "basis index {k} exceeds degree {n}");
    binomial(n, k) as f64 * t.powi(k as i32) * (1.0 - t).powi((n - k) as i32)
}

/// De Casteljau evaluation of scalar controls at local parameter `t`.
pub fn eval_scalar(controls: &[f64], t: f64) -> f64 {
    let mut b = controls.to_vec();
    let n = b.len();
    for r in 1..n {
        for k in 0..n - r {
            b[k] = (1.0 - t) * b[k] + t * b[k + 1];
        }
    }
    b[0]
}

/// Controls of the `order`-th time derivative of a piece of duration `dt`:
/// each order maps `c` to `deg * (c[k+1] - c[k]) / dt`.
pub fn derivative_scalar(controls: &[f64], order: usize, dt: f64) -> Vec<f64> {
    let mut c = controls.to_vec();
    for _ in 0..order {
        if c.len() <= 1 {
            return vec![0.0];
        }
        let deg = (c.len() - 1) as f64;
        c = c.windows(2).map(|w| deg * (w[1] - w[0]) / dt).collect();
    }
    c
}

/// One polynomial piece in 3D on `[t0, t1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BernsteinPiece {
    pub controls: Vec<Vec3>,
    pub t0: f64,
    pub t1: f64,
}

impl BernsteinPiece {
    pub fn degree(&self) -> usize {
        self.controls.len() - 1
    }

    pub fn duration(&self) -> f64 {
        self.t1 - self.t0
    }

    fn axis(&self, a: usize) -> Vec<f64> {
        self.controls.iter().map(|c| c[a]).collect()
    }

    /// Position at global time `t` (clamped to the interval).
    pub fn eval(&self, t: f64) -> Vec3 {
        let tau = ((t - self.t0) / self.duration()).clamp(0.0, 1.0);
        Vec3::new(eval_scalar(&self.axis(0), tau), eval_scalar(&self.axis(1), tau), eval_scalar(&self.axis(2), tau))
    }

    pub fn derivative(&self, order: usize) -> BernsteinPiece {
        let dt = self.duration();
        let d: Vec<Vec<f64>> = (0..3).map(|a| derivative_scalar(&self.axis(a), order, dt)).collect();
        BernsteinPiece {
            controls: (0..d[0].len()).map(|k| Vec3::new(d[0][k], d[1][k], d[2][k])).collect(),
            t0: self.t0,
            t1: self.t1,
        }
    }

    /// Control-wise difference `other - self`; same interval and degree required.
    pub fn relative(&self, other: &BernsteinPiece) -> Option<BernsteinPiece> {
        if self.degree() != other.degree() || self.t0 != other.t0 || self.t1 != other.t1 {
            return None;
        }
        Some(BernsteinPiece {
            controls: self.controls.iter().zip(&other.controls).map(|(a, b)| b - a).collect(),
            t0: self.t0,
            t1: self.t1,
        })
    }

    /// Time-stretched copy: the same path traversed `scale` times slower.
    pub fn scaled(&self, scale: f64) -> BernsteinPiece {
        BernsteinPiece { controls: self.controls.clone(), t0: self.t0 * scale, t1: self.t1 * scale }
    }
}

/// Piecewise trajectory of one agent on a knot vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseBernstein {
    pub pieces: Vec<BernsteinPiece>,
}

impl PiecewiseBernstein {
    pub fn start_time(&self) -> f64 {
        self.pieces[0].t0
    }

    pub fn end_time(&self) -> f64 {
        self.pieces.last().unwrap().t1
    }

    fn piece_at(&self, t: f64) -> &BernsteinPiece {
        let idx = self.pieces.partition_point(|p| p.t1 < t);
        &self.pieces[idx.min(self.pieces.len() - 1)]
    }

    pub fn eval(&self, t: f64) -> Vec3 {
        self.piece_at(t).eval(t)
    }

    /// Position, velocity and acceleration at `t`.
    pub fn eval_derivs(&self, t: f64) -> [Vec3; 3] {
        let p = self.piece_at(t);
        [p.eval(t), p.derivative(1).eval(t), p.derivative(2).eval(t)]
    }

    pub fn scaled(&self, scale: f64) -> PiecewiseBernstein {
        PiecewiseBernstein { pieces: self.pieces.iter().map(|p| p.scaled(scale)).collect() }
    }
}

/// Matrix `H` with `c^T H c = integral over the piece of the squared
/// `order`-th derivative`, for scalar controls of the given degree on an
/// interval of length `dt`.
///
/// With `D` the `order`-fold difference operator and `p = degree - order`,
/// `H = dt^(1 - 2 order) (degree! / p!)^2 D^T G D` where
/// `G[a][b] = C(p,a) C(p,b) / ((2p + 1) C(2p, a + b))` is the Gram matrix of
/// the degree-`p` basis on `[0, 1]`.
pub fn derivative_cost_block(degree: usize, order: usize, dt: f64) -> Vec<Vec<f64>> {
    assert!(order <= degree && degree <= MAX_DEGREE);
    let n = degree + 1;
    let p = degree - order;
    // rows of D: coefficients of the order-th forward difference
    let mut d = vec![vec![0.0; n]; p + 1];
    for (r, row) in d.iter_mut().enumerate() {
        for i in 0..=order {
            let sign = if (order - i) % 2 == 0 { 1.0 } else { -1.0 };
            row[r + i] = sign * binomial(order, i) as f64;
        }
    }
    let mut g = vec![vec![0.0; p + 1]; p + 1];
    for (a, row) in g.iter_mut().enumerate() {
        for (b, x) in row.iter_mut().enumerate() {
            *x = (binomial(p, a) as f64 * binomial(p, b) as f64)
                / ((2 * p + 1) as f64 * binomial(2 * p, a + b) as f64);
        }
    }
    let falling: f64 = ((p + 1)..=degree).map(|x| x as f64).product();
    let factor = falling * falling * dt.powi(1 - 2 * order as i32);
    let mut h = vec![vec![0.0; n]; n];
    for r in 0..=p {
        for s in 0..=p {
            let w = g[r][s] * factor;
            for i in r..=r + order {
                for j in s..=s + order {
                    h[i][j] += d[r][i] * w * d[s][j];
                }
            }
        }
    }
    h
}

/// Jerk cost block: the third-derivative case.
pub fn jerk_cost_block(degree: usize, dt: f64) -> Vec<Vec<f64>> {
    derivative_cost_block(degree, 3, dt)
}

/// `c^T H c` for scalar controls.
pub fn quad_form(h: &[Vec<f64>], c: &[f64]) -> f64 {
    let mut s = 0.0;
    for (i, row) in h.iter().enumerate() {
        for (j, &x) in row.iter().enumerate() {
            s += c[i] * x * c[j];
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binomials_are_exact() {
        assert_eq!(binomial(5, 2), 10);
        assert_eq!(binomial(20, 10), 184_756);
        assert_eq!(binomial(40, 20), 137_846_528_820);
        assert_eq!(binomial(3, 4), 0);
    }

    #[test]
    fn basis_values() {
        assert_eq!(basis(0, 5, 0.0), 1.0);
        assert!((basis(2, 5, 0.5) - 0.3125).abs() < 1e-15);
        let s: f64 = (0..=5).map(|k| basis(k, 5, 0.3)).sum();
        assert!((s - 1.0).abs() < 1e-15);
    }

    #[test]
    fn derivative_of_linear_ramp_is_one() {
        let c: Vec<f64> = (0..=5).map(|k| k as f64 / 5.0).collect();
        assert!(derivative_scalar(&c, 1, 1.0).iter().all(|d| (d - 1.0).abs() < 1e-14));
        assert_eq!(derivative_scalar(&[2.0; 6], 1, 3.0), vec![0.0; 5]);
    }

    #[test]
    fn cube_has_constant_third_derivative_and_cost_36() {
        // t^3 elevated to degree 5: c_k = C(k,3) / C(5,3)
        let c: Vec<f64> = (0..=5).map(|k| binomial(k, 3) as f64 / 10.0).collect();
        let d3 = derivative_scalar(&c, 3, 1.0);
        assert!(d3.iter().all(|v| (v - 6.0).abs() < 1e-12));
        let h = jerk_cost_block(5, 1.0);
        assert!((quad_form(&h, &c) - 36.0).abs() < 1e-10);
        assert!(quad_form(&h, &[1.5; 6]).abs() < 1e-12);
    }

    #[test]
    fn relative_piece_is_pointwise_difference() {
        let a = BernsteinPiece {
            controls: (0..6).map(|k| Vec3::new(k as f64, 1.0, -(k as f64))).collect(),
            t0: 1.0,
            t1: 2.5,
        };
        let b = BernsteinPiece {
            controls: (0..6).map(|k| Vec3::new(0.5, (k * k) as f64, 2.0)).collect(),
            t0: 1.0,
            t1: 2.5,
        };
        let r = a.relative(&b).unwrap();
        for s in 0..=10 {
            let t = 1.0 + 0.15 * s as f64;
            assert!((r.eval(t) - (b.eval(t) - a.eval(t))).amax() < 1e-12);
        }
        let mut c = b.clone();
        c.t1 = 3.0;
        assert!(a.relative(&c).is_none());
    }

    #[test]
    fn endpoint_velocity() {
        let p = BernsteinPiece {
            controls: vec![Vec3::zeros(), Vec3::new(1.0, 2.0, 3.0), Vec3::repeat(4.0), Vec3::repeat(5.0)],
            t0: 0.0,
            t1: 2.0,
        };
        assert_eq!(p.derivative(1).eval(0.0), Vec3::new(1.0, 2.0, 3.0) * 3.0 / 2.0);
    }
}

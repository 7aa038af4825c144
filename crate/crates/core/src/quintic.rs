//! Quintic Hermite segments.
//!
//! A segment of length `L` interpolates `(f, f', f'')` at both ends. Its
//! coefficients are linear in the six boundary values, so squared-derivative
//! integrals are quadratic forms `bᵀ G_d b` in `b = (p0, v0, a0, p1, v1, a1)`.

/// Boundary value triple `(f, f', f'')`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
pub struct Knot {
    pub f: f64,
    pub df: f64,
    pub ddf: f64,
}

impl Knot {
    pub const fn new(f: f64, df: f64, ddf: f64) -> Self {
        Knot { f, df, ddf }
    }

    pub const fn at(f: f64) -> Self {
        Knot { f, df: 0.0, ddf: 0.0 }
    }
}

pub type Gram = [[f64; 6]; 6];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuinticSegment {
    pub length: f64,
    /// `f(t) = Σ c[i] tⁱ` on `t ∈ [0, length]`.
    pub coeffs: [f64; 6],
}

fn coeffs_for(length: f64, b: &[f64; 6]) -> [f64; 6] {
    let t = length;
    let (p0, v0, a0, p1, v1, a1) = (b[0], b[1], b[2], b[3], b[4], b[5]);
    let (t2, t3) = (t * t, t * t * t);
    [
        p0,
        v0,
        0.5 * a0,
        (20.0 * (p1 - p0) - (8.0 * v1 + 12.0 * v0) * t - (3.0 * a0 - a1) * t2) / (2.0 * t3),
        (30.0 * (p0 - p1) + (14.0 * v1 + 16.0 * v0) * t + (3.0 * a0 - 2.0 * a1) * t2) / (2.0 * t3 * t),
        (12.0 * (p1 - p0) - 6.0 * (v1 + v0) * t + (a1 - a0) * t2) / (2.0 * t3 * t2),
    ]
}

/// `i (i-1) … (i-d+1)`
fn falling(i: usize, d: usize) -> f64 {
    if d > i {
        return 0.0;
    }
    ((i - d + 1)..=i).map(|k| k as f64).product()
}

fn powi(x: f64, n: usize) -> f64 {
    let mut r = 1.0;
    for _ in 0..n {
        r *= x;
    }
    r
}

impl QuinticSegment {
    pub fn new(length: f64, start: Knot, end: Knot) -> Self {
        debug_assert!(length > 0.0);
        let b = [start.f, start.df, start.ddf, end.f, end.df, end.ddf];
        QuinticSegment { length, coeffs: coeffs_for(length, &b) }
    }

    /// `d`-th derivative at `t` (`d ≤ 5`).
    pub fn eval(&self, t: f64, d: usize) -> f64 {
        let mut acc = 0.0;
        for i in (d..6).rev() {
            acc = acc * t + falling(i, d) * self.coeffs[i];
        }
        acc
    }

    pub fn knot(&self, t: f64) -> Knot {
        Knot::new(self.eval(t, 0), self.eval(t, 1), self.eval(t, 2))
    }

    /// `∫₀ᴸ (f⁽ᵈ⁾)² dt` in closed form.
    pub fn integral_sq(&self, d: usize) -> f64 {
        let q = monomial_gram(self.length, d);
        let mut s = 0.0;
        for i in 0..6 {
            for j in 0..6 {
                s += self.coeffs[i] * q[i][j] * self.coeffs[j];
            }
        }
        s
    }
}

/// `Q[i][j] = ∫₀ᴸ (tⁱ)⁽ᵈ⁾ (tʲ)⁽ᵈ⁾ dt`
fn monomial_gram(length: f64, d: usize) -> Gram {
    let mut q = [[0.0; 6]; 6];
    for (i, row) in q.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            if i >= d && j >= d {
                let e = i + j - 2 * d + 1;
                *v = falling(i, d) * falling(j, d) * powi(length, e) / e as f64;
            }
        }
    }
    q
}

/// Gram matrix of `∫₀ᴸ (f⁽ᵈ⁾)² dt` with respect to the boundary vector
/// `(p0, v0, a0, p1, v1, a1)`.
pub fn hermite_gram(length: f64, d: usize) -> Gram {
    let mut basis = [[0.0; 6]; 6];
    for (k, col) in basis.iter_mut().enumerate() {
        let mut e = [0.0; 6];
        e[k] = 1.0;
        *col = coeffs_for(length, &e);
    }
    let q = monomial_gram(length, d);
    let mut g = [[0.0; 6]; 6];
    for a in 0..6 {
        for b in 0..6 {
            let mut s = 0.0;
            for i in 0..6 {
                for j in 0..6 {
                    s += basis[a][i] * q[i][j] * basis[b][j];
                }
            }
            g[a][b] = s;
        }
    }
    g
}

pub fn quad_form(g: &Gram, b: &[f64; 6]) -> f64 {
    let mut s = 0.0;
    for i in 0..6 {
        for j in 0..6 {
            s += b[i] * g[i][j] * b[j];
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn boundary_conditions_hold() {
        let (a, b) = (Knot::new(0.3, -0.1, 0.02), Knot::new(-1.5, 0.05, -0.01));
        for len in [0.5, 1.0, 10.0, 37.0] {
            let q = QuinticSegment::new(len, a, b);
            let (ka, kb) = (q.knot(0.0), q.knot(len));
            for (x, y) in [(ka.f, a.f), (ka.df, a.df), (ka.ddf, a.ddf), (kb.f, b.f), (kb.df, b.df), (kb.ddf, b.ddf)] {
                assert!((x - y).abs() < 1e-9, "{len}: {x} vs {y}");
            }
        }
    }

    #[test]
    fn constant_segment_has_no_energy() {
        let q = QuinticSegment::new(10.0, Knot::at(2.0), Knot::at(2.0));
        for d in 1..4 {
            assert!(q.integral_sq(d).abs() < 1e-20);
        }
        assert!((q.integral_sq(0) - 40.0).abs() < 1e-9);
    }

    #[test]
    fn integrals_match_quadrature() {
        let q = QuinticSegment::new(10.0, Knot::new(0.0, 0.1, 0.0), Knot::new(1.0, 0.0, -0.02));
        let g: [Gram; 4] = core::array::from_fn(|d| hermite_gram(10.0, d));
        let bvec = [0.0, 0.1, 0.0, 1.0, 0.0, -0.02];
        for d in 0..4 {
            let n = 20_000;
            let h = 10.0 / n as f64;
            // composite Simpson
            let mut s = 0.0;
            for k in 0..=n {
                let w = if k == 0 || k == n { 1.0 } else if k % 2 == 1 { 4.0 } else { 2.0 };
                let v = q.eval(k as f64 * h, d);
                s += w * v * v;
            }
            s *= h / 3.0;
            let closed = q.integral_sq(d);
            assert!((closed - s).abs() < 1e-9 * (1.0 + s.abs()), "d={d}: {closed} vs {s}");
            assert!((quad_form(&g[d], &bvec) - closed).abs() < 1e-10 * (1.0 + s.abs()));
        }
    }
}

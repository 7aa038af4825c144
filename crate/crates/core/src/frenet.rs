//! Reference lines and Cartesian/Frenet conversion.
//!
//! A [`ReferenceLine`] is a uniformly sampled polyline with per-point heading
//! and curvature. Between samples the curve is the straight chord while the
//! frame (tangent and normal) rotates linearly with arc length, so
//! [`to_cartesian`] and [`to_frenet`] are exact inverses wherever the
//! projection is unique.

use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::error::{Error, Result};
use crate::qp::{self, QpStatus, QuadraticProgram};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
pub struct Cartesian {
    pub x: f64,
    pub y: f64,
}

impl Cartesian {
    pub const fn new(x: f64, y: f64) -> Self {
        Cartesian { x, y }
    }

    fn sub(self, o: Cartesian) -> Cartesian {
        Cartesian::new(self.x - o.x, self.y - o.y)
    }

    fn norm(self) -> f64 {
        libm::hypot(self.x, self.y)
    }

    pub fn distance(self, o: Cartesian) -> f64 {
        self.sub(o).norm()
    }

    fn lerp(self, o: Cartesian, u: f64) -> Cartesian {
        Cartesian::new(self.x + u * (o.x - self.x), self.y + u * (o.y - self.y))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
pub struct FrenetPoint {
    pub s: f64,
    pub l: f64,
}

impl FrenetPoint {
    pub const fn new(s: f64, l: f64) -> Self {
        FrenetPoint { s, l }
    }
}

/// Ordered waypoints of the known global route.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
#[cfg_attr(feature = "serde", serde(transparent))]
pub struct GlobalPath {
    waypoints: Vec<Cartesian>,
}

impl GlobalPath {
    pub fn new(waypoints: Vec<Cartesian>) -> Result<Self> {
        let p = GlobalPath { waypoints };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.waypoints.len() < 2 {
            return Err(Error::domain("global path needs at least 2 waypoints"));
        }
        if self.waypoints.iter().any(|p| !p.x.is_finite() || !p.y.is_finite()) {
            return Err(Error::domain("non-finite waypoint"));
        }
        if let Some(i) = self.waypoints.windows(2).position(|w| w[0].distance(w[1]) == 0.0) {
            return Err(Error::Domain(format!("waypoints {i} and {} coincide", i + 1)));
        }
        Ok(())
    }

    pub fn waypoints(&self) -> &[Cartesian] {
        &self.waypoints
    }

    /// Cumulative chord length at every waypoint.
    pub fn stations(&self) -> Vec<f64> {
        cumulative(&self.waypoints)
    }

    pub fn length(&self) -> f64 {
        *self.stations().last().unwrap_or(&0.0)
    }

    /// Arc length of the nearest point on the polyline.
    pub fn project(&self, p: Cartesian) -> f64 {
        let st = self.stations();
        let mut best = (f64::INFINITY, 0.0);
        for (i, w) in self.waypoints.windows(2).enumerate() {
            let d = w[1].sub(w[0]);
            let len2 = d.x * d.x + d.y * d.y;
            let u = (((p.x - w[0].x) * d.x + (p.y - w[0].y) * d.y) / len2).clamp(0.0, 1.0);
            let dist = p.distance(w[0].lerp(w[1], u));
            if dist < best.0 {
                best = (dist, st[i] + u * (st[i + 1] - st[i]));
            }
        }
        best.1
    }

    fn point_at(&self, st: &[f64], s: f64) -> Cartesian {
        let i = segment_index(st, s);
        let u = ((s - st[i]) / (st[i + 1] - st[i])).clamp(0.0, 1.0);
        self.waypoints[i].lerp(self.waypoints[i + 1], u)
    }

    /// Uniform resampling with spacing as close to `ds` as divides the length.
    pub fn resample(&self, ds: f64) -> Vec<Cartesian> {
        let st = self.stations();
        let total = *st.last().unwrap();
        let n = libm::ceil(total / ds - 1e-9).max(1.0) as usize;
        (0..=n).map(|k| self.point_at(&st, total * k as f64 / n as f64)).collect()
    }
}

fn cumulative(pts: &[Cartesian]) -> Vec<f64> {
    let mut s = Vec::with_capacity(pts.len());
    let mut acc = 0.0;
    s.push(0.0);
    for w in pts.windows(2) {
        acc += w[0].distance(w[1]);
        s.push(acc);
    }
    s
}

/// Index `i` of the segment `[st[i], st[i+1]]` containing `s` (clamped).
fn segment_index(st: &[f64], s: f64) -> usize {
    let last = st.len() - 2;
    match st.binary_search_by(|v| v.total_cmp(&s)) {
        Ok(i) => i.min(last),
        Err(i) => i.saturating_sub(1).min(last),
    }
}

/// Sub-path spanning `[s_proj - behind_m, s_proj + ahead_m]`, clamped to the
/// path ends.
pub fn extract_window(path: &GlobalPath, ego: Cartesian, behind_m: f64, ahead_m: f64) -> Result<GlobalPath> {
    path.validate()?;
    if !(behind_m >= 0.0 && ahead_m >= 0.0) {
        return Err(Error::domain("window lengths must be non-negative"));
    }
    let st = path.stations();
    let total = *st.last().unwrap();
    let sp = path.project(ego);
    let (lo, hi) = ((sp - behind_m).max(0.0), (sp + ahead_m).min(total));
    if hi - lo <= 1e-9 {
        return Err(Error::domain("empty window"));
    }
    let mut pts = Vec::new();
    pts.push(path.point_at(&st, lo));
    for (i, &s) in st.iter().enumerate() {
        if s > lo + 1e-9 && s < hi - 1e-9 {
            pts.push(path.waypoints[i]);
        }
    }
    pts.push(path.point_at(&st, hi));
    GlobalPath::new(pts)
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
pub struct RefPoint {
    pub s: f64,
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub curvature: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceLine {
    points: Vec<RefPoint>,
    /// Set when smoothing failed and the raw polyline was used instead.
    pub fallback: bool,
}

impl ReferenceLine {
    /// Builds headings by central differences (one-sided at the ends) and
    /// curvature as the heading derivative of the same stencil.
    pub fn from_points(pts: &[Cartesian]) -> Result<Self> {
        let path = GlobalPath::new(pts.to_vec())?;
        let n = pts.len();
        let s = path.stations();
        let mut heading = Vec::with_capacity(n);
        for i in 0..n {
            let (a, b) = (pts[i.saturating_sub(1)], pts[(i + 1).min(n - 1)]);
            heading.push(libm::atan2(b.y - a.y, b.x - a.x));
        }
        for i in 1..n {
            let mut d = heading[i] - heading[i - 1];
            while d > PI {
                d -= 2.0 * PI;
            }
            while d < -PI {
                d += 2.0 * PI;
            }
            heading[i] = heading[i - 1] + d;
        }
        let points = (0..n)
            .map(|i| {
                let (a, b) = (i.saturating_sub(1), (i + 1).min(n - 1));
                RefPoint {
                    s: s[i],
                    x: pts[i].x,
                    y: pts[i].y,
                    heading: heading[i],
                    curvature: (heading[b] - heading[a]) / (s[b] - s[a]),
                }
            })
            .collect();
        Ok(ReferenceLine { points, fallback: false })
    }

    pub fn points(&self) -> &[RefPoint] {
        &self.points
    }

    pub fn length(&self) -> f64 {
        self.points.last().map_or(0.0, |p| p.s)
    }

    pub fn max_abs_curvature(&self) -> f64 {
        self.points.iter().fold(0.0, |m, p| m.max(p.curvature.abs()))
    }

    fn stations(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.s).collect()
    }

    fn locate(&self, s: f64) -> Result<(usize, f64)> {
        let end = self.length();
        if !(s >= -1e-9 && s <= end + 1e-9) {
            return Err(Error::Domain(format!("s={s} outside reference line [0, {end}]")));
        }
        let i = segment_index(&self.stations(), s);
        let (a, b) = (&self.points[i], &self.points[i + 1]);
        Ok((i, ((s - a.s) / (b.s - a.s)).clamp(0.0, 1.0)))
    }

    fn frame(&self, i: usize, u: f64) -> (Cartesian, f64, f64) {
        let (a, b) = (&self.points[i], &self.points[i + 1]);
        let c = Cartesian::new(a.x + u * (b.x - a.x), a.y + u * (b.y - a.y));
        (c, a.heading + u * (b.heading - a.heading), a.curvature + u * (b.curvature - a.curvature))
    }

    pub fn heading_at(&self, s: f64) -> Result<f64> {
        let (i, u) = self.locate(s)?;
        Ok(self.frame(i, u).1)
    }

    pub fn curvature_at(&self, s: f64) -> Result<f64> {
        let (i, u) = self.locate(s)?;
        Ok(self.frame(i, u).2)
    }

    pub fn point_at(&self, s: f64) -> Result<Cartesian> {
        let (i, u) = self.locate(s)?;
        Ok(self.frame(i, u).0)
    }

    /// Orthogonality residual `(p - c(u)) · t(u)` on segment `i`.
    fn ortho(&self, p: Cartesian, i: usize, u: f64) -> f64 {
        let (c, h, _) = self.frame(i, u);
        (p.x - c.x) * libm::cos(h) + (p.y - c.y) * libm::sin(h)
    }

    fn lateral(&self, p: Cartesian, i: usize, u: f64) -> f64 {
        let (c, h, _) = self.frame(i, u);
        -(p.x - c.x) * libm::sin(h) + (p.y - c.y) * libm::cos(h)
    }

    /// Root of the orthogonality residual on segment `i`, if bracketed.
    fn segment_root(&self, p: Cartesian, i: usize) -> Option<f64> {
        let (g0, g1) = (self.ortho(p, i, 0.0), self.ortho(p, i, 1.0));
        if g0 == 0.0 {
            return Some(0.0);
        }
        if g1 == 0.0 {
            return Some(1.0);
        }
        if (g0 > 0.0) == (g1 > 0.0) {
            return None;
        }
        let (mut lo, mut hi) = (0.0, 1.0);
        let neg_at_lo = g0 < 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let g = self.ortho(p, i, mid);
            if g == 0.0 {
                return Some(mid);
            }
            if (g < 0.0) == neg_at_lo {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-15 {
                break;
            }
        }
        Some(0.5 * (lo + hi))
    }
}

/// Weights of the elastic-band smoothing objective.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct SmoothingWeights {
    pub fidelity: f64,
    pub first_difference: f64,
    pub second_difference: f64,
    pub ds_m: f64,
}

impl Default for SmoothingWeights {
    fn default() -> Self {
        SmoothingWeights { fidelity: 1.0, first_difference: 10.0, second_difference: 100.0, ds_m: 1.0 }
    }
}

fn smooth_axis(raw: &[f64], w: &SmoothingWeights) -> Option<Vec<f64>> {
    let n = raw.len();
    let mut qp = QuadraticProgram::new(n);
    for (i, &r) in raw.iter().enumerate() {
        qp.add_squared_residual(w.fidelity, &[(i, 1.0)], r);
        if i + 1 < n && w.first_difference > 0.0 {
            qp.add_squared_residual(w.first_difference, &[(i, -1.0), (i + 1, 1.0)], 0.0);
        }
        if i + 2 < n && w.second_difference > 0.0 {
            qp.add_squared_residual(w.second_difference, &[(i, 1.0), (i + 1, -2.0), (i + 2, 1.0)], 0.0);
        }
    }
    qp.add_equality(alloc::vec![(0, 1.0)], raw[0]);
    qp.add_equality(alloc::vec![(n - 1, 1.0)], raw[n - 1]);
    let sol = qp::solve(&qp, 1e-9, qp::DEFAULT_MAX_ITER).ok()?;
    (sol.status == QpStatus::Optimal).then_some(sol.x)
}

/// Smooths `raw` with an elastic-band QP on a `ds`-spaced densification,
/// pinning both ends, then resamples the result uniformly.
pub fn smooth_reference(raw: &GlobalPath, weights: &SmoothingWeights) -> Result<ReferenceLine> {
    raw.validate()?;
    if raw.waypoints.len() < 3 {
        return Err(Error::domain("smoothing needs at least 3 points"));
    }
    let w = weights;
    if !(w.ds_m > 0.0) || !(w.fidelity > 0.0) || w.first_difference < 0.0 || w.second_difference < 0.0 {
        return Err(Error::domain("smoothing weights must be non-negative with positive fidelity and spacing"));
    }
    let dense = raw.resample(w.ds_m);
    let xs: Vec<f64> = dense.iter().map(|p| p.x).collect();
    let ys: Vec<f64> = dense.iter().map(|p| p.y).collect();
    let smoothed = match (smooth_axis(&xs, w), smooth_axis(&ys, w)) {
        (Some(x), Some(y)) => x.into_iter().zip(y).map(|(x, y)| Cartesian::new(x, y)).collect::<Vec<_>>(),
        _ => {
            log::warn!("reference smoothing QP failed, using the raw polyline");
            let mut line = ReferenceLine::from_points(&dense)?;
            line.fallback = true;
            return Ok(line);
        }
    };
    let mut pts = smoothed;
    pts.dedup_by(|a, b| a.distance(*b) < 1e-12);
    let path = GlobalPath::new(pts)?;
    ReferenceLine::from_points(&path.resample(w.ds_m))
}

/// Nearest orthogonal projection of `pose` onto `line`.
pub fn to_frenet(pose: Cartesian, line: &ReferenceLine) -> Result<FrenetPoint> {
    const TIE: f64 = 1e-9;
    let mut cands: Vec<FrenetPoint> = Vec::new();
    for i in 0..line.points.len() - 1 {
        if let Some(u) = line.segment_root(pose, i) {
            let (a, b) = (&line.points[i], &line.points[i + 1]);
            cands.push(FrenetPoint::new(a.s + u * (b.s - a.s), line.lateral(pose, i, u)));
        }
    }
    let best = cands
        .iter()
        .copied()
        .min_by(|a, b| a.l.abs().total_cmp(&b.l.abs()))
        .ok_or_else(|| Error::domain("pose does not project onto the reference line"))?;
    if let Some(other) = cands.iter().find(|c| (c.l.abs() - best.l.abs()).abs() <= TIE && (c.s - best.s).abs() > 1e-6) {
        let (s_a, s_b) = if best.s < other.s { (best.s, other.s) } else { (other.s, best.s) };
        return Err(Error::AmbiguousProjection { s_a, s_b });
    }
    Ok(best)
}

/// `line(s) + l · normal(s)`.
pub fn to_cartesian(pt: FrenetPoint, line: &ReferenceLine) -> Result<Cartesian> {
    let (i, u) = line.locate(pt.s)?;
    let (c, h, k) = line.frame(i, u);
    if pt.l.abs() * k.abs() >= 1.0 {
        return Err(Error::Domain(format!("fold-over at s={}: |l·κ| = {}", pt.s, (pt.l * k).abs())));
    }
    Ok(Cartesian::new(c.x - pt.l * libm::sin(h), c.y + pt.l * libm::cos(h)))
}

/// Frenet projection that extends the end tangents for poses beyond the line.
pub fn to_frenet_extended(p: Cartesian, line: &ReferenceLine) -> Result<FrenetPoint> {
    match to_frenet(p, line) {
        Err(Error::Domain(_)) => {
            let first = &line.points[0];
            let last = &line.points[line.points.len() - 1];
            let along = |rp: &RefPoint| {
                let (dx, dy) = (p.x - rp.x, p.y - rp.y);
                let (c, s) = (libm::cos(rp.heading), libm::sin(rp.heading));
                (dx * c + dy * s, -dx * s + dy * c)
            };
            let (a0, l0) = along(first);
            let (a1, l1) = along(last);
            if a0 < 0.0 && (a1 <= 0.0 || p.distance(Cartesian::new(first.x, first.y)) <= p.distance(Cartesian::new(last.x, last.y))) {
                Ok(FrenetPoint::new(a0, l0))
            } else {
                Ok(FrenetPoint::new(last.s + a1.max(0.0), l1))
            }
        }
        other => other,
    }
}

/// `s`-interval × `l`-interval occupied by a static obstacle.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
pub struct SlBox {
    pub s_min: f64,
    pub s_max: f64,
    pub l_min: f64,
    pub l_max: f64,
}

impl SlBox {
    pub fn contains(&self, s: f64, l: f64) -> bool {
        s >= self.s_min && s <= self.s_max && l >= self.l_min && l <= self.l_max
    }

    /// Euclidean distance in SL from a point to the box (0 inside).
    pub fn distance(&self, s: f64, l: f64) -> f64 {
        let ds = (self.s_min - s).max(s - self.s_max).max(0.0);
        let dl = (self.l_min - l).max(l - self.l_max).max(0.0);
        libm::hypot(ds, dl)
    }
}

/// Obstacle treated as a particle moving along the line: `s(t) = s0 + v t`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
pub struct StParticle {
    pub s0: f64,
    pub l: f64,
    pub v: f64,
}

impl StParticle {
    pub fn s_at(&self, t: f64) -> f64 {
        self.s0 + self.v * t
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Footprint {
    Polygon(Vec<Cartesian>),
    /// Point mass moving along the line at `speed_ms`.
    Particle { position: Cartesian, speed_ms: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Projection {
    Region(SlBox),
    Particle(StParticle),
    Empty,
}

/// Projects an obstacle into the line's frame. Obstacles wholly outside the
/// line's `s` range project to [`Projection::Empty`].
pub fn project_obstacle(footprint: &Footprint, line: &ReferenceLine) -> Result<Projection> {
    let end = line.length();
    match footprint {
        Footprint::Particle { position, speed_ms } => {
            let f = to_frenet_extended(*position, line)?;
            if f.s < 0.0 || f.s > end {
                return Ok(Projection::Empty);
            }
            Ok(Projection::Particle(StParticle { s0: f.s, l: f.l, v: *speed_ms }))
        }
        Footprint::Polygon(vertices) => {
            if vertices.is_empty() {
                return Err(Error::domain("empty obstacle polygon"));
            }
            let mut samples = Vec::new();
            for (k, &a) in vertices.iter().enumerate() {
                let b = vertices[(k + 1) % vertices.len()];
                let steps = libm::ceil(a.distance(b) / 0.25).max(1.0) as usize;
                for j in 0..steps {
                    samples.push(a.lerp(b, j as f64 / steps as f64));
                }
            }
            let mut bx = SlBox { s_min: f64::INFINITY, s_max: f64::NEG_INFINITY, l_min: f64::INFINITY, l_max: f64::NEG_INFINITY };
            for p in samples {
                let f = to_frenet_extended(p, line)?;
                bx.s_min = bx.s_min.min(f.s);
                bx.s_max = bx.s_max.max(f.s);
                bx.l_min = bx.l_min.min(f.l);
                bx.l_max = bx.l_max.max(f.l);
            }
            if bx.s_max < 0.0 || bx.s_min > end {
                return Ok(Projection::Empty);
            }
            bx.s_min = bx.s_min.max(0.0);
            bx.s_max = bx.s_max.min(end);
            Ok(Projection::Region(bx))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn straight(len: f64) -> ReferenceLine {
        let pts: Vec<_> = (0..=(len as usize)).map(|i| Cartesian::new(i as f64, 0.0)).collect();
        ReferenceLine::from_points(&pts).unwrap()
    }

    fn circle(r: f64, n: usize, sweep: f64) -> ReferenceLine {
        let pts: Vec<_> = (0..=n)
            .map(|k| {
                let a = sweep * k as f64 / n as f64;
                Cartesian::new(r * libm::cos(a), r * libm::sin(a))
            })
            .collect();
        ReferenceLine::from_points(&pts).unwrap()
    }

    #[test]
    fn global_path_validation() {
        assert!(GlobalPath::new(vec![Cartesian::new(0.0, 0.0)]).is_err());
        assert!(GlobalPath::new(vec![Cartesian::new(0.0, 0.0), Cartesian::new(0.0, 0.0)]).is_err());
    }

    #[test]
    fn window_clamping() {
        let p = GlobalPath::new(vec![Cartesian::new(0.0, 0.0), Cartesian::new(100.0, 0.0), Cartesian::new(200.0, 0.0)]).unwrap();
        let all = extract_window(&p, Cartesian::new(50.0, 1.0), 1000.0, 1000.0).unwrap();
        assert_eq!(all.waypoints(), p.waypoints());
        let start = extract_window(&p, Cartesian::new(0.0, 0.0), 30.0, 50.0).unwrap();
        assert_eq!(start.waypoints()[0], Cartesian::new(0.0, 0.0));
        // ego at 100 m: [70, 220] clamps to [70, 200]
        let mid = extract_window(&p, Cartesian::new(100.0, 0.0), 30.0, 120.0).unwrap();
        assert!((mid.length() - 130.0).abs() < 1e-12);
        assert!((mid.waypoints()[0].x - 70.0).abs() < 1e-12);
        assert!(extract_window(&p, Cartesian::new(0.0, 0.0), 0.0, 0.0).is_err());
    }

    #[test]
    fn reference_line_invariants_on_circle() {
        let line = circle(30.0, 200, 1.5 * PI);
        let pts = line.points();
        for w in pts.windows(2) {
            assert!(w[1].s > w[0].s);
            assert!((w[1].heading - w[0].heading).abs() < PI);
        }
        for i in 1..pts.len() - 1 {
            let fd = (pts[i + 1].heading - pts[i - 1].heading) / (pts[i + 1].s - pts[i - 1].s);
            assert!((pts[i].curvature - fd).abs() < 1e-3);
        }
        // one-sided end headings bias the first interior stencil
        for p in &pts[2..pts.len() - 2] {
            assert!((p.curvature - 1.0 / 30.0).abs() < 1e-3);
        }
    }

    #[test]
    fn axis_aligned_conversions() {
        let line = straight(20.0);
        let f = to_frenet(Cartesian::new(5.0, 2.0), &line).unwrap();
        assert!((f.s - 5.0).abs() < 1e-12 && (f.l - 2.0).abs() < 1e-12);
        assert_eq!(to_frenet(Cartesian::new(7.5, 0.0), &line).unwrap().l, 0.0);
        let c = to_cartesian(FrenetPoint::new(5.0, 2.0), &line).unwrap();
        assert!((c.x - 5.0).abs() < 1e-12 && (c.y - 2.0).abs() < 1e-12);
        let on = to_cartesian(FrenetPoint::new(3.3, 0.0), &line).unwrap();
        assert!((on.x - 3.3).abs() < 1e-12 && on.y == 0.0);
    }

    #[test]
    fn circle_projection_sign() {
        let (r, d) = (40.0, 1.5);
        let line = circle(r, 300, PI);
        // sample angles land exactly on the polyline, so the closed form holds
        for k in [30usize, 100, 170, 250] {
            let a = PI * k as f64 / 300.0;
            let out = to_frenet(Cartesian::new((r + d) * libm::cos(a), (r + d) * libm::sin(a)), &line).unwrap();
            let inside = to_frenet(Cartesian::new((r - d) * libm::cos(a), (r - d) * libm::sin(a)), &line).unwrap();
            assert!((out.l + d).abs() < 1e-9, "{out:?}");
            assert!((inside.l - d).abs() < 1e-9);
            assert!((out.s - line.points()[k].s).abs() < 1e-9);
        }
    }

    #[test]
    fn ambiguous_and_out_of_domain() {
        let line = circle(10.0, 400, 2.0 * PI - 0.2);
        assert!(matches!(to_frenet(Cartesian::new(0.0, 0.0), &line), Err(Error::AmbiguousProjection { .. })));
        let short = straight(10.0);
        assert!(matches!(to_frenet(Cartesian::new(-3.0, 1.0), &short), Err(Error::Domain(_))));
        assert!(to_cartesian(FrenetPoint::new(11.0, 0.0), &short).is_err());
        let c = circle(10.0, 100, PI);
        assert!(matches!(to_cartesian(FrenetPoint::new(5.0, 10.5), &c), Err(Error::Domain(_))));
    }

    #[test]
    fn round_trip_thousand_poses() {
        let raw = GlobalPath::new(vec![
            Cartesian::new(0.0, 0.0),
            Cartesian::new(60.0, 0.0),
            Cartesian::new(100.0, 30.0),
            Cartesian::new(120.0, 80.0),
            Cartesian::new(180.0, 90.0),
        ])
        .unwrap();
        let line = smooth_reference(&raw, &SmoothingWeights::default()).unwrap();
        assert!(!line.fallback);
        let lmax = 0.5 / line.max_abs_curvature();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut worst = 0.0f64;
        for _ in 0..1000 {
            let s = rng.random::<f64>() * line.length();
            let l = (2.0 * rng.random::<f64>() - 1.0) * lmax;
            let p = to_cartesian(FrenetPoint::new(s, l), &line).unwrap();
            let f = to_frenet(p, &line).unwrap();
            let q = to_cartesian(f, &line).unwrap();
            worst = worst.max(p.distance(q));
        }
        assert!(worst <= 1e-6, "worst round trip {worst}");
    }

    #[test]
    fn smoothing_collinear_and_zero_weights() {
        let raw = GlobalPath::new(vec![Cartesian::new(0.0, 0.0), Cartesian::new(7.0, 3.5), Cartesian::new(20.0, 10.0)]).unwrap();
        let line = smooth_reference(&raw, &SmoothingWeights::default()).unwrap();
        for p in line.points() {
            assert!((p.y - 0.5 * p.x).abs() / libm::hypot(1.0, 0.5) < 1e-9);
        }

        // vertices sit on whole-metre stations so the 1 m resampling keeps them
        let zig = GlobalPath::new(vec![Cartesian::new(0.0, 0.0), Cartesian::new(10.0, 0.0), Cartesian::new(10.0, 10.0), Cartesian::new(20.0, 10.0)])
            .unwrap();
        let w = SmoothingWeights { first_difference: 0.0, second_difference: 0.0, ..Default::default() };
        let exact = smooth_reference(&zig, &w).unwrap();
        for v in zig.waypoints() {
            let near = exact.points().iter().map(|p| Cartesian::new(p.x, p.y).distance(*v)).fold(f64::INFINITY, f64::min);
            assert!(near < 1e-9);
        }
    }

    #[test]
    fn smoothing_contracts_corner_curvature() {
        let corner = GlobalPath::new(vec![Cartesian::new(0.0, 0.0), Cartesian::new(50.0, 0.0), Cartesian::new(50.0, 50.0)]).unwrap();
        let raw = ReferenceLine::from_points(&corner.resample(1.0)).unwrap();
        let smooth = smooth_reference(&corner, &SmoothingWeights::default()).unwrap();
        assert!(smooth.max_abs_curvature() < raw.max_abs_curvature());
        for w in smooth.points().windows(2) {
            assert!(w[1].s > w[0].s);
        }
    }

    #[test]
    fn obstacle_projection() {
        let line = straight(50.0);
        let point = Footprint::Polygon(vec![Cartesian::new(12.0, 0.0)]);
        assert_eq!(project_obstacle(&point, &line).unwrap(), Projection::Region(SlBox { s_min: 12.0, s_max: 12.0, l_min: 0.0, l_max: 0.0 }));
        let square = Footprint::Polygon(vec![Cartesian::new(20.0, -1.0), Cartesian::new(22.0, -1.0), Cartesian::new(22.0, 1.0), Cartesian::new(20.0, 1.0)]);
        let Projection::Region(b) = project_obstacle(&square, &line).unwrap() else { panic!() };
        assert!((b.s_min - 20.0).abs() < 1e-12 && (b.s_max - 22.0).abs() < 1e-12);
        assert!((b.l_min + 1.0).abs() < 1e-12 && (b.l_max - 1.0).abs() < 1e-12);
        let behind = Footprint::Polygon(vec![Cartesian::new(-10.0, 0.0), Cartesian::new(-8.0, 0.0), Cartesian::new(-8.0, 1.0)]);
        assert_eq!(project_obstacle(&behind, &line).unwrap(), Projection::Empty);
        let mover = Footprint::Particle { position: Cartesian::new(10.0, 0.0), speed_ms: 4.0 };
        let Projection::Particle(p) = project_obstacle(&mover, &line).unwrap() else { panic!() };
        assert!((p.s_at(2.5) - 20.0).abs() < 1e-12);
    }
}

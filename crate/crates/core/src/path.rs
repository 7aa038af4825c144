//! SL-space path planning: lattice DP over quintic connections, a convex
//! corridor around the DP result, and QP refinement inside it.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cost::Cost;
use crate::error::{Error, Result};
use crate::frenet::SlBox;
use crate::qp::{self, QpStatus, QuadraticProgram};
use crate::quintic::{hermite_gram, quad_form, Gram, Knot, QuinticSegment};

/// Samples per connecting segment at which the obstacle cost is evaluated.
pub const OBSTACLE_SAMPLES: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct PathCostWeights {
    pub w_obs: f64,
    pub w_sm: f64,
    pub w_re: f64,
    pub w1: f64,
    pub w2: f64,
    pub w3: f64,
    pub w4: f64,
    /// Ramp height of the obstacle cost at `d = d2`.
    pub k: f64,
    pub d1: f64,
    pub d2: f64,
}

impl Default for PathCostWeights {
    fn default() -> Self {
        PathCostWeights { w_obs: 1.0, w_sm: 10.0, w_re: 1.0, w1: 1.0, w2: 10.0, w3: 10.0, w4: 5.0, k: 100.0, d1: 10.3, d2: 0.3 }
    }
}

impl PathCostWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [self.w_obs, self.w_sm, self.w_re, self.w1, self.w2, self.w3, self.w4, self.k];
        if all.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::domain("path weights must be finite and non-negative"));
        }
        if self.w_sm < 10.0 * self.w_re {
            return Err(Error::domain("w_sm must be at least 10 w_re"));
        }
        if !(self.d1 > self.d2 && self.d2 >= 0.0) {
            return Err(Error::domain("need d1 > d2 >= 0"));
        }
        Ok(())
    }
}

/// Ego footprint in the Frenet frame.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct Footprint {
    pub half_length_m: f64,
    pub half_width_m: f64,
}

impl Default for Footprint {
    fn default() -> Self {
        Footprint { half_length_m: 2.3, half_width_m: 0.95 }
    }
}

impl Footprint {
    /// Gap between the ego rectangle centred at `(s, l)` and `obstacle`.
    pub fn clearance(&self, s: f64, l: f64, obstacle: &SlBox) -> f64 {
        let ds = (obstacle.s_min - (s + self.half_length_m)).max((s - self.half_length_m) - obstacle.s_max).max(0.0);
        let dl = (obstacle.l_min - (l + self.half_width_m)).max((l - self.half_width_m) - obstacle.l_max).max(0.0);
        libm::hypot(ds, dl)
    }

    pub fn min_clearance(&self, s: f64, l: f64, obstacles: &[SlBox]) -> f64 {
        obstacles.iter().map(|o| self.clearance(s, l, o)).fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SLGrid {
    pub s_samples: Vec<f64>,
    /// Offsets per station. Station 0 is the ego start and is not sampled.
    pub l_samples: Vec<Vec<f64>>,
    /// Lateral bounds of the drivable band (ego centre).
    pub l_bounds: (f64, f64),
}

impl SLGrid {
    /// Deterministic lattice: stations every `ds` from `s0` over `length`,
    /// offsets at multiples of `dl` inside `l_bounds` (the band midpoint when
    /// none fit). `jitter` perturbs offsets by up to `dl / 4` from a seed.
    pub fn uniform(s0: f64, length: f64, ds: f64, dl: f64, l_bounds: (f64, f64), jitter: Option<u64>) -> Result<Self> {
        if !(ds > 0.0 && dl > 0.0 && length >= ds) || !(l_bounds.0 <= l_bounds.1) {
            return Err(Error::domain("lattice needs ds, dl > 0, length >= ds and lo <= hi"));
        }
        let n = libm::floor(length / ds + 1e-9) as usize;
        let s_samples: Vec<f64> = (0..=n).map(|i| s0 + ds * i as f64).collect();
        let (lo, hi) = l_bounds;
        let k0 = libm::ceil(lo / dl - 1e-9) as i64;
        let k1 = libm::floor(hi / dl + 1e-9) as i64;
        let mut base: Vec<f64> = (k0..=k1).map(|k| k as f64 * dl).filter(|l| *l >= lo && *l <= hi).collect();
        if base.is_empty() {
            base.push(0.5 * (lo + hi));
        }
        let mut rng = jitter.map(ChaCha8Rng::seed_from_u64);
        let l_samples = (0..=n)
            .map(|i| {
                if i == 0 {
                    return Vec::new();
                }
                base.iter()
                    .map(|&l| match rng.as_mut() {
                        Some(r) => (l + dl * 0.25 * (2.0 * r.random::<f64>() - 1.0)).clamp(lo, hi),
                        None => l,
                    })
                    .collect()
            })
            .collect();
        SLGrid::new(s_samples, l_samples, l_bounds)
    }

    pub fn new(s_samples: Vec<f64>, l_samples: Vec<Vec<f64>>, l_bounds: (f64, f64)) -> Result<Self> {
        if s_samples.len() < 2 || l_samples.len() != s_samples.len() {
            return Err(Error::domain("grid needs at least 2 stations and offsets for each"));
        }
        let ds = s_samples[1] - s_samples[0];
        if !(ds > 0.0) {
            return Err(Error::Degenerate(format!("station spacing {ds}")));
        }
        for w in s_samples.windows(2) {
            if ((w[1] - w[0]) - ds).abs() > 1e-9 * ds.max(1.0) {
                return Err(Error::domain("non-uniform station spacing"));
            }
        }
        if l_samples[1..].iter().any(|c| c.is_empty()) {
            return Err(Error::domain("station without offsets"));
        }
        Ok(SLGrid { s_samples, l_samples, l_bounds })
    }

    pub fn stations(&self) -> usize {
        self.s_samples.len()
    }

    /// Clearance of every sampled node to the nearest obstacle.
    pub fn clearances(&self, footprint: &Footprint, obstacles: &[SlBox]) -> Vec<Vec<f64>> {
        self.s_samples
            .iter()
            .zip(&self.l_samples)
            .map(|(&s, ls)| ls.iter().map(|&l| footprint.min_clearance(s, l, obstacles)).collect())
            .collect()
    }
}

/// Lateral profile `l(s)`: knots joined by quintic segments, C² by
/// construction.
#[derive(Debug, Clone, PartialEq)]
pub struct PathProfile {
    pub stations: Vec<f64>,
    pub knots: Vec<Knot>,
}

impl PathProfile {
    pub fn new(stations: Vec<f64>, knots: Vec<Knot>) -> Result<Self> {
        if stations.len() < 2 || stations.len() != knots.len() {
            return Err(Error::domain("profile needs matching stations and knots (at least 2)"));
        }
        if stations.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Degenerate("profile stations must increase".into()));
        }
        Ok(PathProfile { stations, knots })
    }

    pub fn zero(stations: Vec<f64>) -> Result<Self> {
        let n = stations.len();
        PathProfile::new(stations, vec![Knot::default(); n])
    }

    pub fn segment(&self, i: usize) -> QuinticSegment {
        QuinticSegment::new(self.stations[i + 1] - self.stations[i], self.knots[i], self.knots[i + 1])
    }

    pub fn segments(&self) -> impl Iterator<Item = QuinticSegment> + '_ {
        (0..self.stations.len() - 1).map(|i| self.segment(i))
    }

    pub fn start(&self) -> f64 {
        self.stations[0]
    }

    pub fn end(&self) -> f64 {
        *self.stations.last().unwrap()
    }

    /// `d`-th derivative at `s`, clamped into the profile domain.
    pub fn eval(&self, s: f64, d: usize) -> f64 {
        let s = s.clamp(self.start(), self.end());
        let i = match self.stations.binary_search_by(|v| v.total_cmp(&s)) {
            Ok(i) | Err(i) => i.saturating_sub(1).min(self.stations.len() - 2),
        };
        self.segment(i).eval(s - self.stations[i], d)
    }

    /// `(s, l, l', l'')` every `step` metres plus the end point.
    pub fn sample(&self, step: f64) -> Vec<[f64; 4]> {
        let (a, b) = (self.start(), self.end());
        let n = libm::ceil((b - a) / step - 1e-9).max(1.0) as usize;
        (0..=n)
            .map(|k| {
                let s = if k == n { b } else { a + step * k as f64 };
                [s, self.eval(s, 0), self.eval(s, 1), self.eval(s, 2)]
            })
            .collect()
    }

    pub fn max_abs(&self, d: usize, step: f64) -> f64 {
        let col = d + 1;
        self.sample(step).iter().fold(0.0, |m, r| m.max(r[col].abs()))
    }

    fn same_stations(&self, other: &PathProfile) -> bool {
        self.stations.len() == other.stations.len()
            && self.stations.iter().zip(&other.stations).all(|(a, b)| (a - b).abs() <= 1e-9)
    }
}

/// Quintic joining `(s_a, a)` to `(s_b, b)`.
pub fn quintic_connect(s_a: f64, a: Knot, s_b: f64, b: Knot) -> Result<QuinticSegment> {
    if !(s_b > s_a) {
        return Err(Error::Degenerate(format!("segment from s={s_a} to s={s_b}")));
    }
    Ok(QuinticSegment::new(s_b - s_a, a, b))
}

/// Obstacle cost of clearance `d`: zero beyond `d1`, a linear ramp from `k`
/// at `d2` down to zero at `d1`, and infinite inside `d2`.
pub fn obstacle_cost(d: f64, weights: &PathCostWeights) -> Cost {
    let (d1, d2) = (weights.d1, weights.d2);
    if d > d1 {
        Cost::ZERO
    } else if d < d2 {
        Cost::Infinite
    } else {
        Cost::Finite(weights.k * (d1 - d) / (d1 - d2))
    }
}

fn segment_smoothness(seg: &QuinticSegment, w: &PathCostWeights) -> f64 {
    w.w1 * seg.integral_sq(1) + w.w2 * seg.integral_sq(2) + w.w3 * seg.integral_sq(3)
}

/// `w1 ∫f'² + w2 ∫f''² + w3 ∫f'''²` in closed form.
pub fn smoothness_cost(profile: &PathProfile, weights: &PathCostWeights) -> f64 {
    profile.segments().map(|seg| segment_smoothness(&seg, weights)).sum()
}

fn knot_vec(a: Knot, b: Knot) -> [f64; 6] {
    [a.f, a.df, a.ddf, b.f, b.df, b.ddf]
}

fn diff_vec(profile: &PathProfile, g: &PathProfile, i: usize) -> [f64; 6] {
    let f = knot_vec(profile.knots[i], profile.knots[i + 1]);
    let r = knot_vec(g.knots[i], g.knots[i + 1]);
    core::array::from_fn(|k| f[k] - r[k])
}

/// `∫(f - g)² ds`; `g = None` is the reference line itself (`g ≡ 0`).
/// A reference profile must share the profile's stations.
pub fn reference_cost(profile: &PathProfile, g: Option<&PathProfile>) -> Result<f64> {
    match g {
        None => Ok(profile.segments().map(|seg| seg.integral_sq(0)).sum()),
        Some(g) => {
            if !profile.same_stations(g) {
                return Err(Error::domain("reference profile stations differ"));
            }
            Ok((0..profile.stations.len() - 1)
                .map(|i| quad_form(&hermite_gram(profile.stations[i + 1] - profile.stations[i], 0), &diff_vec(profile, g, i)))
                .sum())
        }
    }
}

/// Refinement objective `w1∫f'² + w2∫f''² + w3∫f'''² + w4∫(f - g)²`.
pub fn refinement_objective(profile: &PathProfile, g: &PathProfile, weights: &PathCostWeights) -> Result<f64> {
    Ok(smoothness_cost(profile, weights) + weights.w4 * reference_cost(profile, Some(g))?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DpPath {
    /// Chosen offset index per station (`0` for the start station).
    pub nodes: Vec<usize>,
    pub cost: Cost,
    pub profile: PathProfile,
}

/// Bellman recursion over the lattice with an arbitrary transition cost
/// `f(segment, from, to, quintic)`, `from`/`to` being offset indices.
pub fn dp_search_with<F>(grid: &SLGrid, start: Knot, mut f: F) -> Result<DpPath>
where
    F: FnMut(usize, usize, usize, &QuinticSegment) -> Cost,
{
    let n = grid.stations();
    let (lo, hi) = grid.l_bounds;
    if !(start.f >= lo - 1e-9 && start.f <= hi + 1e-9) {
        return Err(Error::Domain(format!("start offset {} outside [{lo}, {hi}]", start.f)));
    }
    let knot = |i: usize, j: usize| if i == 0 { start } else { Knot::at(grid.l_samples[i][j]) };
    let width = |i: usize| if i == 0 { 1 } else { grid.l_samples[i].len() };

    let mut cost: Vec<Vec<Cost>> = vec![vec![Cost::ZERO]];
    let mut pred: Vec<Vec<usize>> = vec![vec![0]];
    for i in 1..n {
        let mut c_row = vec![Cost::Infinite; width(i)];
        let mut p_row = vec![0; width(i)];
        for b in 0..width(i) {
            for a in 0..width(i - 1) {
                let prev = cost[i - 1][a];
                if prev.is_infinite() {
                    continue;
                }
                let seg = QuinticSegment::new(grid.s_samples[i] - grid.s_samples[i - 1], knot(i - 1, a), knot(i, b));
                let total = prev + f(i - 1, a, b, &seg);
                if total < c_row[b] {
                    c_row[b] = total;
                    p_row[b] = a;
                }
            }
        }
        cost.push(c_row);
        pred.push(p_row);
    }
    let last = &cost[n - 1];
    let mut best = 0;
    for (j, c) in last.iter().enumerate() {
        if *c < last[best] {
            best = j;
        }
    }
    if last[best].is_infinite() {
        return Err(Error::BlockedPath);
    }
    let mut nodes = vec![0; n];
    nodes[n - 1] = best;
    for i in (1..n).rev() {
        nodes[i - 1] = pred[i][nodes[i]];
    }
    let knots = (0..n).map(|i| knot(i, nodes[i])).collect();
    Ok(DpPath { nodes, cost: last[best], profile: PathProfile::new(grid.s_samples.clone(), knots)? })
}

/// Transition cost `W_obs ΣC_obs + W_sm C_sm + W_re ∫f²` on one segment.
pub fn transition_cost(
    s0: f64,
    seg: &QuinticSegment,
    weights: &PathCostWeights,
    footprint: &Footprint,
    obstacles: &[SlBox],
) -> Cost {
    let mut obs = Cost::ZERO;
    if !obstacles.is_empty() {
        for k in 1..=OBSTACLE_SAMPLES {
            let t = seg.length * k as f64 / OBSTACLE_SAMPLES as f64;
            obs += obstacle_cost(footprint.min_clearance(s0 + t, seg.eval(t, 0), obstacles), weights);
            if obs.is_infinite() {
                return Cost::Infinite;
            }
        }
    }
    weights.w_obs * obs + Cost::Finite(weights.w_sm * segment_smoothness(seg, weights) + weights.w_re * seg.integral_sq(0))
}

/// Lattice DP against static obstacles with the weighted transition cost.
pub fn dp_search(grid: &SLGrid, start: Knot, weights: &PathCostWeights, footprint: &Footprint, obstacles: &[SlBox]) -> Result<DpPath> {
    weights.validate()?;
    dp_search_with(grid, start, |i, _, _, seg| transition_cost(grid.s_samples[i], seg, weights, footprint, obstacles))
}

/// Lateral bound at an interior obstacle sample of segment `segment`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleBound {
    pub segment: usize,
    /// Offset from the segment start.
    pub t: f64,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corridor {
    pub stations: Vec<f64>,
    pub bounds: Vec<(f64, f64)>,
    /// Extra bounds between stations wherever an obstacle is in reach.
    pub samples: Vec<SampleBound>,
}

impl Corridor {
    pub fn from_bounds(stations: Vec<f64>, bounds: Vec<(f64, f64)>) -> Self {
        Corridor { stations, bounds, samples: Vec::new() }
    }
}

/// Lateral interval around `l` left free by obstacles that overlap the ego
/// rectangle at `s` longitudinally; `None` if `l` itself is blocked.
fn free_interval(s: f64, l: f64, band: (f64, f64), footprint: &Footprint, d2: f64, obstacles: &[SlBox]) -> Option<(f64, f64, bool)> {
    let (mut lo, mut hi) = band;
    let mut touched = false;
    for o in obstacles {
        let reach = footprint.half_length_m;
        if s + reach < o.s_min || s - reach > o.s_max {
            continue;
        }
        touched = true;
        let pad = footprint.half_width_m + d2;
        let (b_lo, b_hi) = (o.l_min - pad, o.l_max + pad);
        if l <= b_lo {
            hi = hi.min(b_lo);
        } else if l >= b_hi {
            lo = lo.max(b_hi);
        } else {
            return None;
        }
    }
    Some((lo, hi, touched))
}

/// Widest obstacle-free lateral interval around each DP knot. Obstacles are
/// inflated by the ego half-width plus `d2` wherever the ego rectangle
/// overlaps them longitudinally. The same rule bounds the interior obstacle
/// samples of each segment.
pub fn build_corridor(dp: &PathProfile, grid: &SLGrid, footprint: &Footprint, weights: &PathCostWeights, obstacles: &[SlBox]) -> Result<Corridor> {
    let mut bounds = Vec::with_capacity(dp.stations.len());
    for (i, (&s, k)) in dp.stations.iter().zip(&dp.knots).enumerate() {
        let l = k.f;
        match free_interval(s, l, grid.l_bounds, footprint, weights.d2, obstacles) {
            Some((lo, hi, _)) if lo < hi && l >= lo && l <= hi => bounds.push((lo, hi)),
            _ => return Err(Error::CorridorCollapse { station: i }),
        }
    }
    let mut samples = Vec::new();
    for (i, seg) in dp.segments().enumerate() {
        for k in 1..OBSTACLE_SAMPLES {
            let t = seg.length * k as f64 / OBSTACLE_SAMPLES as f64;
            let (s, l) = (dp.stations[i] + t, seg.eval(t, 0));
            match free_interval(s, l, (f64::NEG_INFINITY, f64::INFINITY), footprint, weights.d2, obstacles) {
                Some((lo, hi, true)) => samples.push(SampleBound { segment: i, t, lo, hi }),
                Some(_) => {}
                None => return Err(Error::CorridorCollapse { station: i }),
            }
        }
    }
    Ok(Corridor { stations: dp.stations.clone(), bounds, samples })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Refinement {
    pub profile: PathProfile,
    /// Set when the QP failed and the DP profile was returned.
    pub fallback: bool,
    pub objective: f64,
    pub dp_objective: f64,
    pub status: Option<QpStatus>,
    pub kkt_residual: f64,
}

/// Value of each Hermite basis function at `t` on a segment of `len`.
fn hermite_basis(len: f64, t: f64) -> [f64; 6] {
    core::array::from_fn(|b| {
        let mut e = [0.0; 6];
        e[b] = 1.0;
        QuinticSegment::new(len, Knot::new(e[0], e[1], e[2]), Knot::new(e[3], e[4], e[5])).eval(t, 0)
    })
}

/// Minimises the refinement objective over per-station `(l, l', l'')` with
/// `g` = the DP profile, the start knot fixed and `l` boxed by the corridor.
/// Box bounds on a corridor may be degenerate (`lo == hi`).
pub fn qp_refine(corridor: &Corridor, dp: &PathProfile, weights: &PathCostWeights) -> Result<Refinement> {
    let n = dp.stations.len();
    if corridor.bounds.len() != n {
        return Err(Error::domain("corridor and profile lengths differ"));
    }
    let dp_objective = refinement_objective(dp, dp, weights)?;
    let mut qp = QuadraticProgram::new(3 * n);
    for i in 0..n - 1 {
        let len = dp.stations[i + 1] - dp.stations[i];
        let grams: [Gram; 4] = core::array::from_fn(|d| hermite_gram(len, d));
        let wd = [weights.w4, weights.w1, weights.w2, weights.w3];
        let g = knot_vec(dp.knots[i], dp.knots[i + 1]);
        for a in 0..6 {
            for b in 0..=a {
                let v: f64 = (0..4).map(|d| wd[d] * grams[d][a][b]).sum();
                qp.add_hessian(3 * i + a, 3 * i + b, 2.0 * v);
            }
            let lin: f64 = (0..6).map(|b| grams[0][a][b] * g[b]).sum();
            qp.add_linear(3 * i + a, -2.0 * weights.w4 * lin);
        }
    }
    let s0 = dp.knots[0];
    for (c, v) in [(0, s0.f), (1, s0.df), (2, s0.ddf)] {
        qp.add_equality(vec![(c, 1.0)], v);
    }
    for (i, &(lo, hi)) in corridor.bounds.iter().enumerate().skip(1) {
        if lo > hi {
            return Err(Error::domain("corridor with lo > hi"));
        }
        qp.set_bounds(3 * i, lo, hi);
    }
    for sb in &corridor.samples {
        let len = dp.stations[sb.segment + 1] - dp.stations[sb.segment];
        let basis = hermite_basis(len, sb.t);
        let row = |sign: f64| (0..6).map(|b| (3 * sb.segment + b, sign * basis[b])).collect::<Vec<_>>();
        if sb.hi.is_finite() {
            qp.add_inequality(row(1.0), sb.hi);
        }
        if sb.lo.is_finite() {
            qp.add_inequality(row(-1.0), -sb.lo);
        }
    }
    let fallback = |why: &str, status, kkt| {
        log::warn!("path QP {why}; keeping the DP profile");
        Ok(Refinement { profile: dp.clone(), fallback: true, objective: dp_objective, dp_objective, status, kkt_residual: kkt })
    };
    let sol = match qp::solve(&qp, 1e-9, qp::DEFAULT_MAX_ITER) {
        Ok(sol) if sol.status == QpStatus::Optimal => sol,
        Ok(sol) => return fallback("did not converge", Some(sol.status), sol.kkt_residual()),
        Err(_) => return fallback("was rejected", None, f64::INFINITY),
    };
    let knots = (0..n)
        .map(|i| {
            let l = if i == 0 { s0.f } else { sol.x[3 * i].clamp(corridor.bounds[i].0, corridor.bounds[i].1) };
            let (dl, ddl) = if i == 0 { (s0.df, s0.ddf) } else { (sol.x[3 * i + 1], sol.x[3 * i + 2]) };
            Knot::new(l, dl, ddl)
        })
        .collect();
    let profile = PathProfile::new(dp.stations.clone(), knots)?;
    let objective = refinement_objective(&profile, dp, weights)?;
    if objective > dp_objective + 1e-9 * (1.0 + dp_objective.abs()) {
        return fallback("worsened the objective", Some(sol.status), sol.kkt_residual());
    }
    Ok(Refinement { profile, fallback: false, objective, dp_objective, status: Some(sol.status), kkt_residual: sol.kkt_residual() })
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct PathPlannerConfig {
    pub ds_m: f64,
    pub dl_m: f64,
    pub horizon_m: f64,
    pub road_left_m: f64,
    pub road_right_m: f64,
    pub jitter_seed: Option<u64>,
}

impl Default for PathPlannerConfig {
    fn default() -> Self {
        PathPlannerConfig { ds_m: 10.0, dl_m: 0.5, horizon_m: 100.0, road_left_m: 3.5, road_right_m: -3.5, jitter_seed: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathPlan {
    pub dp: DpPath,
    pub corridor: Corridor,
    pub refinement: Refinement,
}

impl PathPlan {
    pub fn profile(&self) -> &PathProfile {
        &self.refinement.profile
    }
}

/// DP, corridor and QP from ego state `start` at station `s0`.
pub fn plan_path(
    config: &PathPlannerConfig,
    weights: &PathCostWeights,
    footprint: &Footprint,
    s0: f64,
    start: Knot,
    obstacles: &[SlBox],
) -> Result<PathPlan> {
    let band = (config.road_right_m + footprint.half_width_m, config.road_left_m - footprint.half_width_m);
    if band.0 > band.1 {
        return Err(Error::domain("road narrower than the vehicle"));
    }
    let grid = SLGrid::uniform(s0, config.horizon_m, config.ds_m, config.dl_m, band, config.jitter_seed)?;
    let start = Knot::new(start.f.clamp(band.0, band.1), start.df, start.ddf);
    let dp = dp_search(&grid, start, weights, footprint, obstacles)?;
    let corridor = build_corridor(&dp.profile, &grid, footprint, weights, obstacles)?;
    let refinement = qp_refine(&corridor, &dp.profile, weights)?;
    Ok(PathPlan { dp, corridor, refinement })
}

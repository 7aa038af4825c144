//! ST-graph speed planning along a fixed path.
//!
//! The coarse search is an exact DP over station sequences `s_0 … s_K` on a
//! uniform `(t, s)` lattice. Node costs use finite differences:
//!
//! ```text
//! ṡ_k = (s_{k+1} - s_k) / Δt
//! s̈_k = (s_{k+1} - 2 s_k + s_{k-1}) / Δt²
//! s⃛_k = (s̈_k - s̈_{k-1}) / Δt
//! ```
//!
//! so the DP state carries the last two station increments. Two virtual
//! points before the start encode the measured `ṡ_0` and `s̈_0`.
//!
//! The refinement QP works on per-step `(s, ṡ, s̈)` with `s̈` held constant
//! over each step, and tracks the same reference speed and acceleration
//! targets inside a corridor that keeps the DP's side of every obstacle.

use alloc::vec;
use alloc::vec::Vec;

use crate::cost::Cost;
use crate::error::{Error, Result};
use crate::qp::{self, QPSolution, QpStatus, QuadraticProgram};
use crate::vehicle::{self, Environment, VehicleParams};

pub const EPS_V: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum PhaseLabel {
    Acceleration,
    Deceleration,
    Cruise,
}

impl PhaseLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            PhaseLabel::Acceleration => "acceleration",
            PhaseLabel::Deceleration => "deceleration",
            PhaseLabel::Cruise => "cruise",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum PlannerKind {
    /// Energy-aware targets: `v_opt`, `a_acc_opt`, `a_dec_opt`.
    Ehmpp,
    /// Same pipeline with comfort costs and the speed limit as reference.
    Baseline,
}

impl PlannerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PlannerKind::Ehmpp => "ehmpp",
            PlannerKind::Baseline => "baseline",
        }
    }
}

pub fn classify_phase(current_v: f64, v_target: f64, stop_required: bool) -> PhaseLabel {
    classify_phase_with(current_v, v_target, stop_required, EPS_V)
}

pub fn classify_phase_with(current_v: f64, v_target: f64, stop_required: bool, eps_v: f64) -> PhaseLabel {
    if stop_required || v_target < current_v - eps_v {
        PhaseLabel::Deceleration
    } else if v_target > current_v + eps_v {
        PhaseLabel::Acceleration
    } else {
        PhaseLabel::Cruise
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct SpeedCostWeights {
    pub w_ref_speed: f64,
    pub w_acc: f64,
    pub w_je: f64,
    pub w1: f64,
    pub w2: f64,
    pub w3: f64,
    pub k_obs: f64,
    pub d1: f64,
    pub d2: f64,
    /// Scale of the comfort terms added to the cruise objective.
    pub cruise_regularization: f64,
}

impl Default for SpeedCostWeights {
    fn default() -> Self {
        SpeedCostWeights {
            w_ref_speed: 1.0,
            w_acc: 1.0,
            w_je: 0.1,
            w1: 1.0,
            w2: 1.0,
            w3: 1.0,
            k_obs: 10.0,
            d1: 13.0,
            d2: 3.0,
            cruise_regularization: 0.05,
        }
    }
}

impl SpeedCostWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [self.w_ref_speed, self.w_acc, self.w_je, self.w1, self.w2, self.w3, self.k_obs, self.cruise_regularization];
        if all.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::domain("speed weights must be finite and non-negative"));
        }
        if !(self.d1 > self.d2 && self.d2 >= 0.0) {
            return Err(Error::domain("need d1 > d2 >= 0"));
        }
        Ok(())
    }
}

/// ST obstacle cost of the minimum gap `d_min`.
pub fn st_obstacle_cost(d_min: f64, w: &SpeedCostWeights) -> Cost {
    let d = d_min.abs();
    if d > w.d1 {
        Cost::ZERO
    } else if d <= w.d2 {
        Cost::Infinite
    } else {
        Cost::Finite(w.k_obs / (d - w.d2))
    }
}

pub fn ref_speed_cost(v: f64, v_ref: f64, w: &SpeedCostWeights) -> f64 {
    w.w_ref_speed * (v - v_ref) * (v - v_ref)
}

pub fn accel_phase_cost(a: f64, jerk: f64, a_acc_opt: f64, w: &SpeedCostWeights) -> f64 {
    w.w_acc * (a - a_acc_opt) * (a - a_acc_opt) + w.w_je * jerk * jerk
}

pub fn decel_phase_cost(a: f64, jerk: f64, a_dec_opt: f64, w: &SpeedCostWeights) -> f64 {
    w.w_acc * (a - a_dec_opt) * (a - a_dec_opt) + w.w_je * jerk * jerk
}

pub fn comfort_cost(a: f64, jerk: f64, w: &SpeedCostWeights) -> f64 {
    w.w_acc * a * a + w.w_je * jerk * jerk
}

/// Obstacle occupying `[s_min + v t, s_max + v t]` for `t ∈ [t_start, t_end]`
/// (relative to the planning origin).
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
pub struct StObstacle {
    pub s_min: f64,
    pub s_max: f64,
    pub v: f64,
    pub t_start: f64,
    pub t_end: f64,
}

impl StObstacle {
    pub fn fixed(s_min: f64, s_max: f64) -> Self {
        StObstacle { s_min, s_max, v: 0.0, t_start: f64::NEG_INFINITY, t_end: f64::INFINITY }
    }

    pub fn extent(&self, t: f64) -> Option<(f64, f64)> {
        (t >= self.t_start && t <= self.t_end).then(|| (self.s_min + self.v * t, self.s_max + self.v * t))
    }

    /// Gap between the ego interval `s ± half_length` and the obstacle.
    pub fn gap(&self, t: f64, s: f64, half_length: f64) -> Option<f64> {
        self.extent(t).map(|(lo, hi)| (lo - (s + half_length)).max((s - half_length) - hi).max(0.0))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct STGraph {
    pub dt: f64,
    pub steps: usize,
    pub ds: f64,
    pub s_max: f64,
    pub obstacles: Vec<StObstacle>,
    pub ego_half_length: f64,
}

impl STGraph {
    pub fn new(dt: f64, horizon: f64, ds: f64, s_max: f64, obstacles: Vec<StObstacle>, ego_half_length: f64) -> Result<Self> {
        if !(dt > 0.0 && horizon >= dt && ds > 0.0 && s_max >= ds) {
            return Err(Error::domain("ST graph needs dt, ds > 0, horizon >= dt and s_max >= ds"));
        }
        let steps = libm::round(horizon / dt) as usize;
        Ok(STGraph { dt, steps, ds, s_max, obstacles, ego_half_length })
    }

    pub fn t_samples(&self) -> Vec<f64> {
        (0..=self.steps).map(|k| self.dt * k as f64).collect()
    }

    /// Index of the top boundary (`s_max`).
    pub fn top(&self) -> usize {
        libm::floor(self.s_max / self.ds + 1e-9) as usize
    }

    pub fn d_min(&self, t: f64, s: f64) -> f64 {
        self.obstacles.iter().filter_map(|o| o.gap(t, s, self.ego_half_length)).fold(f64::INFINITY, f64::min)
    }
}

/// Kinematic quantities of lattice node `k` on a candidate sequence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeEval {
    pub k: usize,
    pub j: usize,
    pub j_next: usize,
    pub s: f64,
    pub v: f64,
    pub a: f64,
    pub jerk: f64,
}

pub trait StCost {
    /// Cost charged at node `k` once `s_{k+1}` is chosen.
    fn node(&self, e: &NodeEval) -> Cost;
    /// Cost of ending the sequence at node `(k, j)`.
    fn terminal(&self, k: usize, j: usize) -> Cost;
}

/// Lattice bounds and start state for [`dp_speed_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StLattice {
    pub steps: usize,
    pub dt: f64,
    pub ds: f64,
    /// Index of the top boundary.
    pub top: usize,
    /// Largest station increment per step (`v_max Δt / Δs`).
    pub max_step: usize,
    pub a_max: f64,
    pub v0: f64,
    pub a0: f64,
}

impl StLattice {
    fn accel(&self, d_prev_m: f64, d_next_m: f64) -> f64 {
        (d_next_m - d_prev_m) / (self.dt * self.dt)
    }

    fn virtual_step(&self) -> f64 {
        self.v0 * self.dt
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StPath {
    /// Station index per layer up to and including the endpoint layer.
    pub stations: Vec<usize>,
    pub cost: Cost,
}

/// Exact DP over station sequences; the endpoint is the cheapest node on the
/// top (`s = s_max`) or right (`t = T`) boundary.
pub fn dp_speed_with(lat: &StLattice, cost: &impl StCost) -> Result<StPath> {
    let (nj, nd) = (lat.top + 1, lat.max_step + 2);
    let virt = nd - 1;
    let idx = |j: usize, i1: usize, i0: usize| (j * nd + i1) * nd + i0;
    let layer_len = nj * nd * nd;
    let mut value: Vec<Vec<Cost>> = Vec::with_capacity(lat.steps + 1);
    let mut pred: Vec<Vec<u32>> = Vec::with_capacity(lat.steps + 1);
    let mut first = vec![Cost::Infinite; layer_len];
    first[idx(0, virt, virt)] = Cost::ZERO;
    value.push(first);
    pred.push(vec![u32::MAX; layer_len]);

    let tol = 1e-9;
    for k in 0..lat.steps {
        let mut next = vec![Cost::Infinite; layer_len];
        let mut next_pred = vec![u32::MAX; layer_len];
        let cur = &value[k];
        for j in 0..nj {
            for i1 in 0..nd {
                for i0 in 0..nd {
                    let here = idx(j, i1, i0);
                    let c = cur[here];
                    if c.is_infinite() {
                        continue;
                    }
                    let d_k = if i1 == virt { lat.virtual_step() } else { i1 as f64 * lat.ds };
                    let a_prev = if k == 0 {
                        lat.a0
                    } else {
                        let d_km1 = if i0 == virt { lat.virtual_step() } else { i0 as f64 * lat.ds };
                        lat.accel(d_km1, d_k)
                    };
                    for dn in 0..=lat.max_step.min(lat.top - j) {
                        let d_next = dn as f64 * lat.ds;
                        let a = lat.accel(d_k, d_next);
                        if a.abs() > lat.a_max + tol {
                            continue;
                        }
                        let e = NodeEval {
                            k,
                            j,
                            j_next: j + dn,
                            s: j as f64 * lat.ds,
                            v: d_next / lat.dt,
                            a,
                            jerk: (a - a_prev) / lat.dt,
                        };
                        let total = c + cost.node(&e);
                        if total.is_infinite() {
                            continue;
                        }
                        let to = idx(j + dn, dn, i1);
                        if total < next[to] {
                            next[to] = total;
                            next_pred[to] = here as u32;
                        }
                    }
                }
            }
        }
        value.push(next);
        pred.push(next_pred);
    }

    let mut best: Option<(Cost, usize, usize)> = None;
    for k in 1..=lat.steps {
        for j in 0..nj {
            if j != lat.top && k != lat.steps {
                continue;
            }
            for i1 in 0..nd {
                for i0 in 0..nd {
                    let c = value[k][idx(j, i1, i0)];
                    if c.is_infinite() {
                        continue;
                    }
                    let total = c + cost.terminal(k, j);
                    if total.is_finite() && best.is_none_or(|b| total < b.0) {
                        best = Some((total, k, idx(j, i1, i0)));
                    }
                }
            }
        }
    }
    let (total, k_end, mut state) = best.ok_or(Error::InfeasibleHorizon)?;
    let mut stations = vec![0; k_end + 1];
    for k in (0..=k_end).rev() {
        stations[k] = state / (nd * nd);
        if k > 0 {
            state = pred[k][state] as usize;
        }
    }
    Ok(StPath { stations, cost: total })
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
pub struct SpeedSample {
    pub t: f64,
    pub s: f64,
    pub v: f64,
    pub a: f64,
    pub jerk: f64,
    pub phase: PhaseLabel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpeedProfile {
    pub samples: Vec<SpeedSample>,
}

impl SpeedProfile {
    pub fn sum_sq_jerk(&self) -> f64 {
        self.samples.iter().map(|p| p.jerk * p.jerk).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct SpeedPlannerConfig {
    pub dt_s: f64,
    pub horizon_s: f64,
    pub ds_m: f64,
    pub eps_v: f64,
    /// Extra gap the QP corridor keeps beyond the hard zone where the DP
    /// profile allows it.
    pub qp_buffer_m: f64,
    /// Evaluate `v_opt` once at the ego position instead of per sample.
    pub freeze_v_opt: bool,
}

impl Default for SpeedPlannerConfig {
    fn default() -> Self {
        SpeedPlannerConfig { dt_s: 0.5, horizon_s: 8.0, ds_m: 1.0, eps_v: EPS_V, qp_buffer_m: 0.5, freeze_v_opt: false }
    }
}

/// Per-cycle inputs that shape the cost.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpeedRequest {
    pub planner: PlannerKind,
    pub phase: PhaseLabel,
    /// Arc length of the planning origin on the route (for grade lookups).
    pub s_origin: f64,
    pub v0: f64,
    pub a0: f64,
    /// Behavioural target speed (0 for a required stop).
    pub v_target: f64,
    pub a_max: f64,
    /// Station ahead of the origin where the ego must be at rest.
    pub stop_station: Option<f64>,
}

/// Phase-assembled costs with energy targets evaluated per sample.
pub struct SpeedCostModel<'a> {
    pub graph: &'a STGraph,
    pub weights: &'a SpeedCostWeights,
    pub vehicle: &'a VehicleParams,
    pub env: &'a Environment,
    pub request: SpeedRequest,
    v_opt: Vec<f64>,
    ramp_rate: f64,
    brake_rate: f64,
}

impl<'a> SpeedCostModel<'a> {
    pub fn new(
        graph: &'a STGraph,
        weights: &'a SpeedCostWeights,
        vehicle: &'a VehicleParams,
        env: &'a Environment,
        request: SpeedRequest,
        freeze_v_opt: bool,
    ) -> Self {
        let cruise = |s: f64| {
            vehicle::cruise_speed_for_grade(env.slope_profile.grade_clamped(s), env, vehicle).map_or(vehicle.v_max_ms, |c| c.v_ms)
        };
        let v_opt = match request.planner {
            PlannerKind::Baseline => Vec::new(),
            PlannerKind::Ehmpp if freeze_v_opt => vec![cruise(request.s_origin)],
            PlannerKind::Ehmpp => (0..=graph.top()).map(|j| cruise(request.s_origin + j as f64 * graph.ds)).collect(),
        };
        let ramp_rate = match (request.planner, request.phase) {
            (PlannerKind::Ehmpp, PhaseLabel::Acceleration) => {
                vehicle::optimal_accel_clamped(request.s_origin, request.v0, env, vehicle).max(0.0)
            }
            (PlannerKind::Ehmpp, PhaseLabel::Deceleration) => {
                vehicle::optimal_decel_clamped(request.s_origin, request.v0, env, vehicle).accel_ms2
            }
            _ => 0.0,
        };
        let brake_rate = -vehicle::optimal_decel_clamped(request.s_origin, request.v0, env, vehicle).accel_ms2;
        SpeedCostModel { graph, weights, vehicle, env, request, v_opt, ramp_rate, brake_rate }
    }

    pub fn v_opt_at(&self, s: f64) -> Option<f64> {
        if self.v_opt.is_empty() {
            return None;
        }
        let j = libm::round(s / self.graph.ds).max(0.0) as usize;
        Some(self.v_opt[j.min(self.v_opt.len() - 1)])
    }

    /// Target speed before any ramp: `min(v_opt, v_target, v_max)` for the
    /// energy-aware planner, `min(v_target, v_max)` for the baseline. Ahead
    /// of a stop the energy-aware goal also stays under the braking curve at
    /// the optimal deceleration.
    pub fn goal_speed(&self, s: f64) -> f64 {
        let base = self.request.v_target.min(self.vehicle.v_max_ms);
        match (self.v_opt_at(s), self.request.stop_station) {
            (Some(v), Some(stop)) => base.min(v).min(libm::sqrt(2.0 * self.brake_rate * (stop - s).max(0.0))),
            (Some(v), None) => base.min(v),
            (None, _) => base,
        }
    }

    /// Reference speed at time `t` and station `s`. The energy-aware planner
    /// approaches the goal along a ramp at its optimal acceleration or
    /// deceleration.
    pub fn reference_speed(&self, t: f64, s: f64) -> f64 {
        let goal = self.goal_speed(s);
        let ramp = self.request.v0 + self.ramp_rate * t;
        match (self.request.planner, self.request.phase) {
            (PlannerKind::Ehmpp, PhaseLabel::Acceleration) => goal.min(ramp.max(self.request.v0)),
            (PlannerKind::Ehmpp, PhaseLabel::Deceleration) => goal.max(ramp.min(self.request.v0)),
            _ => goal,
        }
    }

    /// Acceleration target of the phase term at time `t`, if it has one.
    /// The target holds only while the ramp is still short of the goal.
    pub fn accel_target(&self, t: f64, s: f64, v: f64) -> Option<f64> {
        let goal = self.goal_speed(s);
        let ramp = self.request.v0 + self.ramp_rate * t;
        let (s, v) = (self.request.s_origin + s, v.max(0.0));
        match (self.request.planner, self.request.phase) {
            (PlannerKind::Ehmpp, PhaseLabel::Acceleration) if ramp < goal => Some(vehicle::optimal_accel_clamped(s, v, self.env, self.vehicle)),
            (PlannerKind::Ehmpp, PhaseLabel::Deceleration) if ramp > goal => {
                Some(vehicle::optimal_decel_clamped(s, v, self.env, self.vehicle).accel_ms2)
            }
            _ => None,
        }
    }

    /// Weight on the comfort terms when the phase has no acceleration target.
    fn comfort_scale(&self) -> f64 {
        match self.request.phase {
            PhaseLabel::Cruise => self.weights.cruise_regularization,
            _ => self.weights.w2,
        }
    }

    /// Phase term: `C_acc`, `C_dec`, or the comfort substitute.
    pub fn phase_cost(&self, t: f64, s: f64, v: f64, a: f64, jerk: f64) -> f64 {
        let w = self.weights;
        match (self.accel_target(t, s, v), self.request.phase) {
            (Some(opt), PhaseLabel::Acceleration) => w.w2 * accel_phase_cost(a, jerk, opt, w),
            (Some(opt), _) => w.w2 * decel_phase_cost(a, jerk, opt, w),
            (None, _) => self.comfort_scale() * comfort_cost(a, jerk, w),
        }
    }

    pub fn obstacle_cost(&self, k: usize, s: f64) -> Cost {
        if k == 0 {
            return Cost::ZERO;
        }
        st_obstacle_cost(self.graph.d_min(k as f64 * self.graph.dt, s), self.weights)
    }

    /// Total node cost `W1 C_ref + (phase term) + W3 C_obs`.
    pub fn assembled(&self, e: &NodeEval) -> Cost {
        let t = e.k as f64 * self.graph.dt;
        let w = self.weights;
        let smooth = w.w1 * ref_speed_cost(e.v, self.reference_speed(t, e.s), w) + self.phase_cost(t, e.s, e.v, e.a, e.jerk);
        Cost::Finite(smooth) + w.w3 * self.obstacle_cost(e.k, e.s)
    }

    pub fn lattice(&self) -> StLattice {
        let g = self.graph;
        StLattice {
            steps: g.steps,
            dt: g.dt,
            ds: g.ds,
            top: g.top(),
            max_step: libm::floor(self.vehicle.v_max_ms * g.dt / g.ds + 1e-9) as usize,
            a_max: self.request.a_max,
            v0: self.request.v0,
            a0: self.request.a0,
        }
    }
}

impl StCost for SpeedCostModel<'_> {
    fn node(&self, e: &NodeEval) -> Cost {
        self.assembled(e)
    }

    fn terminal(&self, k: usize, j: usize) -> Cost {
        self.weights.w3 * self.obstacle_cost(k, j as f64 * self.graph.ds)
    }
}

/// Coarse profile with finite-difference derivatives.
pub fn coarse_profile(path: &StPath, lat: &StLattice, phase: PhaseLabel) -> SpeedProfile {
    let s: Vec<f64> = path.stations.iter().map(|&j| j as f64 * lat.ds).collect();
    let n = s.len();
    let dt = lat.dt;
    let step = |k: usize| -> f64 {
        // increment s_k - s_{k-1}, virtual before the start
        if k == 0 {
            lat.virtual_step()
        } else {
            s[k] - s[k - 1]
        }
    };
    let mut samples = Vec::with_capacity(n);
    let mut a_prev = lat.a0;
    for k in 0..n {
        let d_next = if k + 1 < n { s[k + 1] - s[k] } else { step(k) };
        let a = if k + 1 < n { (d_next - step(k)) / (dt * dt) } else { a_prev };
        let jerk = if k + 1 < n { (a - a_prev) / dt } else { 0.0 };
        samples.push(SpeedSample { t: k as f64 * dt, s: s[k], v: if k == 0 { lat.v0 } else { d_next / dt }, a, jerk, phase });
        a_prev = a;
    }
    SpeedProfile { samples }
}

/// DP for one planning cycle.
pub fn dp_speed_search(model: &SpeedCostModel<'_>) -> Result<(StPath, SpeedProfile)> {
    model.weights.validate()?;
    let lat = model.lattice();
    if !(lat.v0 >= 0.0) {
        return Err(Error::domain("start speed must be non-negative"));
    }
    let path = dp_speed_with(&lat, model)?;
    let profile = coarse_profile(&path, &lat, model.request.phase);
    Ok((path, profile))
}

/// Per-step station bounds for the refinement QP.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeedCorridor {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

/// Coarse stations padded to the full horizon at the last increment.
fn padded_stations(path: &StPath, lat: &StLattice) -> Vec<f64> {
    let mut s: Vec<f64> = path.stations.iter().map(|&j| j as f64 * lat.ds).collect();
    let last = if s.len() >= 2 { s[s.len() - 1] - s[s.len() - 2] } else { lat.virtual_step() };
    while s.len() < lat.steps + 1 {
        let next = s[s.len() - 1] + last;
        s.push(next);
    }
    s
}

/// Keeps the DP's side of every obstacle: the bound sits `buffer` beyond the
/// hard zone, relaxed to the DP station where that is tighter.
pub fn build_speed_corridor(graph: &STGraph, weights: &SpeedCostWeights, coarse_s: &[f64], buffer: f64) -> SpeedCorridor {
    let n = coarse_s.len();
    let mut lo = vec![0.0f64; n];
    let mut hi = vec![f64::INFINITY; n];
    hi[0] = 0.0;
    let reach = graph.ego_half_length + weights.d2;
    for (k, &s) in coarse_s.iter().enumerate().skip(1) {
        let t = k as f64 * graph.dt;
        for o in &graph.obstacles {
            let Some((o_lo, o_hi)) = o.extent(t) else { continue };
            if s < o_lo {
                hi[k] = hi[k].min((o_lo - reach - buffer).max(s));
            } else if s > o_hi {
                lo[k] = lo[k].max((o_hi + reach + buffer).min(s));
            }
        }
    }
    SpeedCorridor { lo, hi }
}

/// Kinematic trajectory on the QP's model: `s`, `ṡ` per knot and `s̈` per step.
#[derive(Debug, Clone, PartialEq)]
pub struct ZohTrajectory {
    pub s: Vec<f64>,
    pub v: Vec<f64>,
    pub a: Vec<f64>,
}

impl ZohTrajectory {
    /// Largest `|s_{k+1} - s_k - ṡ_k Δt - ½ s̈_k Δt²|`.
    pub fn kinematic_residual(&self, dt: f64) -> f64 {
        (0..self.a.len())
            .map(|k| (self.s[k + 1] - self.s[k] - self.v[k] * dt - 0.5 * self.a[k] * dt * dt).abs())
            .fold(0.0, f64::max)
    }
}

/// Targets frozen from the coarse profile for one refinement.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeedQpTargets {
    pub v_ref: Vec<f64>,
    /// Per step: `Some` where the phase tracks an acceleration target.
    pub a_target: Vec<Option<f64>>,
    pub comfort_scale: f64,
}

impl SpeedQpTargets {
    pub fn from_coarse(model: &SpeedCostModel<'_>, coarse_s: &[f64]) -> Self {
        let dt = model.graph.dt;
        let k_max = coarse_s.len() - 1;
        let v_ref = (0..=k_max).map(|k| model.reference_speed(k as f64 * dt, coarse_s[k])).collect();
        let speed = |k: usize| (coarse_s[(k + 1).min(k_max)] - coarse_s[k]) / dt;
        let a_target = (0..k_max).map(|k| model.accel_target(k as f64 * dt, coarse_s[k], speed(k))).collect();
        SpeedQpTargets { v_ref, a_target, comfort_scale: model.comfort_scale() }
    }
}

/// Refinement objective on a ZOH trajectory (constants included).
pub fn speed_qp_objective(x: &ZohTrajectory, targets: &SpeedQpTargets, w: &SpeedCostWeights, a0: f64, dt: f64) -> f64 {
    let mut total = 0.0;
    for k in 1..x.v.len() {
        total += w.w1 * ref_speed_cost(x.v[k], targets.v_ref[k], w);
    }
    let mut a_prev = a0;
    for (k, &a) in x.a.iter().enumerate() {
        let jerk = (a - a_prev) / dt;
        total += match targets.a_target[k] {
            Some(t) => w.w2 * (w.w_acc * (a - t) * (a - t) + w.w_je * jerk * jerk),
            None => targets.comfort_scale * comfort_cost(a, jerk, w),
        };
        a_prev = a;
    }
    total
}

/// Deadbeat ZOH reconstruction of the coarse stations, clipped to the
/// speed and acceleration limits.
pub fn reconstruct_coarse(coarse_s: &[f64], v0: f64, v_max: f64, a_max: f64, dt: f64) -> ZohTrajectory {
    let n = coarse_s.len();
    let (mut s, mut v, mut a) = (vec![0.0; n], vec![0.0; n], Vec::with_capacity(n - 1));
    v[0] = v0;
    for k in 0..n - 1 {
        let want = 2.0 * (coarse_s[k + 1] - s[k] - v[k] * dt) / (dt * dt);
        let lo = (-a_max).max(-v[k] / dt);
        let hi = a_max.min((v_max - v[k]) / dt);
        let ak = want.clamp(lo, hi.max(lo));
        a.push(ak);
        v[k + 1] = (v[k] + ak * dt).clamp(0.0, v_max);
        s[k + 1] = s[k] + v[k] * dt + 0.5 * ak * dt * dt;
    }
    ZohTrajectory { s, v, a }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpeedRefinement {
    pub trajectory: ZohTrajectory,
    pub profile: SpeedProfile,
    pub objective: f64,
    /// Objective of the coarse reconstruction; infinite when it leaves the
    /// QP's feasible set.
    pub coarse_objective: f64,
    pub fallback: bool,
    pub status: Option<QpStatus>,
    pub kkt_residual: f64,
}

fn profile_from(x: &ZohTrajectory, a0: f64, dt: f64, phase: PhaseLabel) -> SpeedProfile {
    let n = x.s.len();
    let mut samples = Vec::with_capacity(n);
    let mut a_prev = a0;
    for k in 0..n {
        let a = if k < x.a.len() { x.a[k] } else { *x.a.last().unwrap_or(&a0) };
        let jerk = if k < x.a.len() { (a - a_prev) / dt } else { 0.0 };
        samples.push(SpeedSample { t: k as f64 * dt, s: x.s[k], v: x.v[k], a, jerk, phase });
        a_prev = a;
    }
    SpeedProfile { samples }
}

fn within(x: &ZohTrajectory, c: &SpeedCorridor, v_max: f64, a_max: f64) -> bool {
    let tol = 1e-9;
    x.s.iter().enumerate().all(|(k, &s)| s >= c.lo[k] - tol && s <= c.hi[k] + tol)
        && x.v.iter().all(|&v| v >= -tol && v <= v_max + tol)
        && x.a.iter().all(|&a| a.abs() <= a_max + tol)
}

pub struct SpeedQpInput<'a> {
    pub corridor: &'a SpeedCorridor,
    pub targets: &'a SpeedQpTargets,
    pub weights: &'a SpeedCostWeights,
    pub coarse: &'a ZohTrajectory,
    pub v0: f64,
    pub a0: f64,
    pub v_max: f64,
    pub a_max: f64,
    pub dt: f64,
    pub phase: PhaseLabel,
}

/// Builds the refinement QP. Variables are interleaved `(s_k, ṡ_k, s̈_k)`
/// with the final knot carrying only `(s_K, ṡ_K)`.
pub fn speed_qp(input: &SpeedQpInput<'_>) -> QuadraticProgram {
    let n_knots = input.corridor.lo.len();
    let steps = n_knots - 1;
    let (iv, ia, is) = (|k: usize| 3 * k + 1, |k: usize| 3 * k + 2, |k: usize| 3 * k);
    let w = input.weights;
    let dt = input.dt;
    let mut qp = QuadraticProgram::new(3 * steps + 2);
    for k in 1..=steps {
        qp.add_squared_residual(w.w1 * w.w_ref_speed, &[(iv(k), 1.0)], input.targets.v_ref[k]);
    }
    for k in 0..steps {
        let (wa, wj, target) = match input.targets.a_target[k] {
            Some(t) => (w.w2 * w.w_acc, w.w2 * w.w_je, t),
            None => (input.targets.comfort_scale * w.w_acc, input.targets.comfort_scale * w.w_je, 0.0),
        };
        qp.add_squared_residual(wa, &[(ia(k), 1.0)], target);
        if k == 0 {
            qp.add_squared_residual(wj, &[(ia(0), 1.0 / dt)], input.a0 / dt);
        } else {
            qp.add_squared_residual(wj, &[(ia(k - 1), -1.0 / dt), (ia(k), 1.0 / dt)], 0.0);
        }
    }
    qp.add_equality(vec![(is(0), 1.0)], 0.0);
    qp.add_equality(vec![(iv(0), 1.0)], input.v0);
    for k in 0..steps {
        qp.add_equality(vec![(is(k), -1.0), (iv(k), -dt), (ia(k), -0.5 * dt * dt), (is(k + 1), 1.0)], 0.0);
        qp.add_equality(vec![(iv(k), -1.0), (ia(k), -dt), (iv(k + 1), 1.0)], 0.0);
        qp.set_bounds(ia(k), -input.a_max, input.a_max);
    }
    for k in 1..=steps {
        qp.set_bounds(iv(k), 0.0, input.v_max);
        qp.set_bounds(is(k), input.corridor.lo[k], input.corridor.hi[k]);
    }
    qp
}

fn unpack(sol: &QPSolution, steps: usize, c: &SpeedCorridor) -> ZohTrajectory {
    let s = (0..=steps).map(|k| sol.x[3 * k].clamp(c.lo[k], c.hi[k])).collect();
    let v = (0..=steps).map(|k| sol.x[3 * k + 1].max(0.0)).collect();
    let a = (0..steps).map(|k| sol.x[3 * k + 2]).collect();
    ZohTrajectory { s, v, a }
}

/// Refines the coarse profile; falls back to the coarse reconstruction when
/// the QP does not certify.
pub fn qp_speed_refine(input: &SpeedQpInput<'_>) -> Result<SpeedRefinement> {
    let steps = input.corridor.lo.len() - 1;
    if input.corridor.hi.len() != steps + 1 || input.coarse.s.len() != steps + 1 {
        return Err(Error::domain("corridor, coarse profile and horizon lengths differ"));
    }
    let w = input.weights;
    let feasible = within(input.coarse, input.corridor, input.v_max, input.a_max);
    let coarse_objective =
        if feasible { speed_qp_objective(input.coarse, input.targets, w, input.a0, input.dt) } else { f64::INFINITY };
    let fallback = |status, kkt| {
        log::warn!("speed QP did not certify; using the coarse profile");
        let objective = speed_qp_objective(input.coarse, input.targets, w, input.a0, input.dt);
        Ok(SpeedRefinement {
            trajectory: input.coarse.clone(),
            profile: profile_from(input.coarse, input.a0, input.dt, input.phase),
            objective,
            coarse_objective,
            fallback: true,
            status,
            kkt_residual: kkt,
        })
    };
    let qp = speed_qp(input);
    let sol = match qp::solve(&qp, 1e-9, qp::DEFAULT_MAX_ITER) {
        Ok(sol) => sol,
        Err(_) => return fallback(None, f64::INFINITY),
    };
    if sol.status != QpStatus::Optimal {
        return fallback(Some(sol.status), sol.kkt_residual());
    }
    let x = unpack(&sol, steps, input.corridor);
    let objective = speed_qp_objective(&x, input.targets, w, input.a0, input.dt);
    if objective > coarse_objective + 1e-9 * (1.0 + coarse_objective.abs()) {
        return fallback(Some(sol.status), sol.kkt_residual());
    }
    Ok(SpeedRefinement {
        profile: profile_from(&x, input.a0, input.dt, input.phase),
        trajectory: x,
        objective,
        coarse_objective,
        fallback: false,
        status: Some(sol.status),
        kkt_residual: sol.kkt_residual(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpeedPlan {
    pub dp: StPath,
    pub coarse: SpeedProfile,
    pub corridor: SpeedCorridor,
    pub refinement: SpeedRefinement,
}

/// DP, corridor and QP for one cycle.
pub fn plan_speed(model: &SpeedCostModel<'_>, config: &SpeedPlannerConfig) -> Result<SpeedPlan> {
    let (dp, coarse) = dp_speed_search(model)?;
    let lat = model.lattice();
    let coarse_s = padded_stations(&dp, &lat);
    let corridor = build_speed_corridor(model.graph, model.weights, &coarse_s, config.qp_buffer_m);
    let targets = SpeedQpTargets::from_coarse(model, &coarse_s);
    let zoh = reconstruct_coarse(&coarse_s, lat.v0, model.vehicle.v_max_ms, lat.a_max, lat.dt);
    let input = SpeedQpInput {
        corridor: &corridor,
        targets: &targets,
        weights: model.weights,
        coarse: &zoh,
        v0: lat.v0,
        a0: lat.a0,
        v_max: model.vehicle.v_max_ms,
        a_max: lat.a_max,
        dt: lat.dt,
        phase: model.request.phase,
    };
    let refinement = qp_speed_refine(&input)?;
    Ok(SpeedPlan { dp, coarse, corridor, refinement })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn w() -> SpeedCostWeights {
        SpeedCostWeights::default()
    }

    #[test]
    fn phase_classification() {
        assert_eq!(classify_phase(12.0, 12.0, false), PhaseLabel::Cruise);
        assert_eq!(classify_phase(0.0, 20.0, true), PhaseLabel::Deceleration);
        assert_eq!(classify_phase(10.0, 15.0, false), PhaseLabel::Acceleration);
        assert_eq!(classify_phase(10.0, 10.2, false), PhaseLabel::Cruise);
        assert_eq!(classify_phase(10.0, 9.7, false), PhaseLabel::Deceleration);
    }

    #[test]
    fn obstacle_cost_examples() {
        let w = w();
        assert_eq!(st_obstacle_cost(2.0 * w.d1, &w), Cost::ZERO);
        assert_eq!(st_obstacle_cost(w.d2, &w), Cost::Infinite);
        let w2 = SpeedCostWeights { k_obs: 1.0, d2: 1.0, d1: 5.0, ..w };
        assert_eq!(st_obstacle_cost(2.0, &w2), Cost::Finite(1.0));
    }

    proptest! {
        #[test]
        fn obstacle_cost_decreases(a in 3.01f64..13.0, b in 3.01f64..13.0) {
            let w = w();
            prop_assume!(a < b);
            prop_assert!(st_obstacle_cost(b, &w).value().unwrap() < st_obstacle_cost(a, &w).value().unwrap());
        }

        #[test]
        fn ref_cost_is_even(v in 0.0f64..30.0, d in 0.0f64..5.0) {
            let w = w();
            prop_assert!((ref_speed_cost(v + d, v, &w) - ref_speed_cost(v - d, v, &w)).abs() < 1e-9);
        }

        #[test]
        fn decel_cost_grows_away_from_target(t in -3.0f64..-0.5, d1 in 0.01f64..3.0, d2 in 0.01f64..3.0) {
            let w = w();
            prop_assume!(d1 < d2);
            for sign in [-1.0, 1.0] {
                prop_assert!(decel_phase_cost(t + sign * d1, 0.0, t, &w) < decel_phase_cost(t + sign * d2, 0.0, t, &w));
            }
        }
    }

    #[test]
    fn phase_cost_examples() {
        let w = SpeedCostWeights { w_ref_speed: 1.0, w_acc: 1.0, w_je: 1.0, ..w() };
        assert_eq!(ref_speed_cost(10.0, 10.0, &w), 0.0);
        assert_eq!(ref_speed_cost(10.0, 12.0, &w), 4.0);
        assert_eq!(accel_phase_cost(1.2, 0.0, 1.2, &w), 0.0);
        assert_eq!(accel_phase_cost(2.2, 2.0, 1.2, &w), 5.0);
        let w2 = SpeedCostWeights { w_je: 2.0, ..w };
        assert_eq!(accel_phase_cost(2.2, 2.0, 1.2, &w2) - accel_phase_cost(2.2, 0.0, 1.2, &w2), 8.0);
        assert_eq!(decel_phase_cost(-1.5, 0.0, -1.5, &w), 0.0);
        assert_eq!(decel_phase_cost(0.0, 0.0, -1.5, &w), 2.25);
    }

    struct Table {
        node: Vec<Cost>,
        end: Vec<Cost>,
        top: usize,
    }

    impl StCost for Table {
        fn node(&self, e: &NodeEval) -> Cost {
            // depends on the acceleration too, so the triple state matters
            self.node[e.k * (self.top + 1) + e.j] + Cost::Finite(0.01 * e.a * e.a + 0.001 * e.jerk * e.jerk)
        }
        fn terminal(&self, k: usize, j: usize) -> Cost {
            self.end[k * (self.top + 1) + j]
        }
    }

    /// Enumerates every admissible station sequence.
    fn brute_force(lat: &StLattice, cost: &dyn StCost) -> Cost {
        fn rec(lat: &StLattice, cost: &dyn StCost, s: &mut Vec<usize>, acc: Cost, best: &mut Cost) {
            let k = s.len() - 1;
            let j = s[k];
            if k >= 1 && (j == lat.top || k == lat.steps) {
                let c = acc + cost.terminal(k, j);
                if c < *best {
                    *best = c;
                }
            }
            if k == lat.steps {
                return;
            }
            let dt = lat.dt;
            let pos = |i: isize, s: &Vec<usize>| -> f64 {
                // virtual points before the start
                match i {
                    -1 => -lat.v0 * dt,
                    -2 => -lat.v0 * dt - (lat.v0 - lat.a0 * dt) * dt,
                    i => s[i as usize] as f64 * lat.ds,
                }
            };
            let ki = k as isize;
            for jn in j..=(j + lat.max_step).min(lat.top) {
                let (sm2, sm1, s0, s1) = (pos(ki - 2, s), pos(ki - 1, s), pos(ki, s), jn as f64 * lat.ds);
                let a = (s1 - 2.0 * s0 + sm1) / (dt * dt);
                let a_prev = if k == 0 { lat.a0 } else { (s0 - 2.0 * sm1 + sm2) / (dt * dt) };
                if a.abs() > lat.a_max + 1e-9 {
                    continue;
                }
                let e = NodeEval { k, j, j_next: jn, s: s0, v: (s1 - s0) / dt, a, jerk: (a - a_prev) / dt };
                let c = acc + cost.node(&e);
                if c.is_infinite() {
                    continue;
                }
                s.push(jn);
                rec(lat, cost, s, c, best);
                s.pop();
            }
        }
        let mut best = Cost::Infinite;
        rec(lat, cost, &mut vec![0], Cost::ZERO, &mut best);
        best
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn dp_matches_brute_force_on_small_lattices(
            steps in 1usize..=4,
            top in 1usize..=4,
            v0 in 0.0f64..4.0,
            a0 in -2.0f64..2.0,
            node in proptest::collection::vec(prop_oneof![8 => (0.0f64..5.0).prop_map(Cost::Finite), 1 => Just(Cost::Infinite)], 25),
            end in proptest::collection::vec(prop_oneof![8 => (0.0f64..5.0).prop_map(Cost::Finite), 1 => Just(Cost::Infinite)], 25),
        ) {
            let lat = StLattice { steps, dt: 0.5, ds: 1.0, top, max_step: 2, a_max: 8.0, v0, a0 };
            let table = Table { node, end, top: 4 };
            let table = Table { top, ..table };
            prop_assume!(table.node.len() >= (steps + 1) * (top + 1));
            let oracle = brute_force(&lat, &table);
            match dp_speed_with(&lat, &table) {
                Ok(p) => prop_assert_eq!(p.cost, oracle),
                Err(e) => {
                    prop_assert_eq!(e, Error::InfeasibleHorizon);
                    prop_assert!(oracle.is_infinite());
                }
            }
        }
    }

    fn flat_env() -> Environment {
        Environment::default()
    }

    fn request(planner: PlannerKind, phase: PhaseLabel, v0: f64, v_target: f64) -> SpeedRequest {
        SpeedRequest { planner, phase, s_origin: 0.0, v0, a0: 0.0, v_target, a_max: 6.0, stop_station: None }
    }

    #[test]
    fn phase_cost_matches_equations_by_recomputation() {
        let (veh, env, w) = (VehicleParams::default(), flat_env(), w());
        let graph = STGraph::new(0.5, 8.0, 1.0, 100.0, vec![StObstacle::fixed(80.0, 82.0)], 2.3).unwrap();
        for phase in [PhaseLabel::Acceleration, PhaseLabel::Deceleration, PhaseLabel::Cruise] {
            let (v0, vt) = if phase == PhaseLabel::Deceleration { (15.0, 8.0) } else { (10.0, 15.0) };
            let m = SpeedCostModel::new(&graph, &w, &veh, &env, request(PlannerKind::Ehmpp, phase, v0, vt), false);
            let e = NodeEval { k: 3, j: 20, j_next: 25, s: 20.0, v: 10.0, a: 0.4, jerk: 0.2 };
            let t = 1.5;
            let c_ref = ref_speed_cost(10.0, m.reference_speed(t, 20.0), &w);
            let c_obs = st_obstacle_cost(graph.d_min(t, 20.0), &w);
            let st = vehicle::LongitudinalState::new(20.0, 10.0, 0.0);
            let expected = match phase {
                PhaseLabel::Acceleration => {
                    let opt = vehicle::optimal_accel(&st, &env, &veh).unwrap();
                    Cost::Finite(w.w1 * c_ref + w.w2 * accel_phase_cost(0.4, 0.2, opt, &w)) + w.w3 * c_obs
                }
                PhaseLabel::Deceleration => {
                    let opt = vehicle::optimal_decel(&st, &env, &veh).unwrap().accel_ms2;
                    Cost::Finite(w.w1 * c_ref + w.w2 * decel_phase_cost(0.4, 0.2, opt, &w)) + w.w3 * c_obs
                }
                PhaseLabel::Cruise => Cost::Finite(w.w1 * c_ref + w.cruise_regularization * comfort_cost(0.4, 0.2, &w)) + w.w3 * c_obs,
            };
            let got = m.assembled(&e);
            let (a, b) = (got.value().unwrap(), expected.value().unwrap());
            assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()), "{phase:?}: {a} vs {b}");
            // past the end of the ramp only the comfort terms remain
            let late = NodeEval { k: 16, ..e };
            let c_ref = ref_speed_cost(10.0, m.reference_speed(8.0, 20.0), &w);
            let comfort = if phase == PhaseLabel::Cruise { w.cruise_regularization } else { w.w2 };
            let expected = Cost::Finite(w.w1 * c_ref + comfort * comfort_cost(0.4, 0.2, &w)) + w.w3 * st_obstacle_cost(graph.d_min(8.0, 20.0), &w);
            let (a, b) = (m.assembled(&late).value().unwrap(), expected.value().unwrap());
            assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()), "{phase:?} late: {a} vs {b}");
        }
    }

    fn plan(
        planner: PlannerKind,
        phase: PhaseLabel,
        v0: f64,
        v_target: f64,
        obstacles: Vec<StObstacle>,
        veh: &VehicleParams,
    ) -> SpeedPlan {
        let (env, w) = (flat_env(), w());
        let graph = STGraph::new(0.5, 8.0, 1.0, veh.v_max_ms * 8.0, obstacles, 2.3).unwrap();
        let m = SpeedCostModel::new(&graph, &w, veh, &env, request(planner, phase, v0, v_target), false);
        plan_speed(&m, &SpeedPlannerConfig::default()).unwrap()
    }

    #[test]
    fn cruise_fixed_point() {
        let veh = VehicleParams::default();
        let p = plan(PlannerKind::Baseline, PhaseLabel::Cruise, 10.0, 10.0, vec![], &veh);
        for (k, x) in p.refinement.trajectory.s.iter().enumerate() {
            assert!((x - 5.0 * k as f64).abs() < 1e-6);
            assert!((p.coarse.samples[k].s - 5.0 * k as f64).abs() < 1e-12);
        }
        assert!(p.refinement.trajectory.a.iter().all(|a| a.abs() < 1e-6));
    }

    #[test]
    fn ehmpp_cruise_stays_within_a_grid_quantum_of_v_opt() {
        let veh = VehicleParams::default();
        let env = flat_env();
        let v_opt = vehicle::optimal_cruise_speed(0.0, &env, &veh).unwrap().v_ms;
        let p = plan(PlannerKind::Ehmpp, PhaseLabel::Cruise, v_opt, 25.0, vec![], &veh);
        let quantum = 1.0 / 0.5;
        for s in &p.coarse.samples[1..] {
            assert!((s.v - v_opt).abs() <= quantum, "{} vs {v_opt}", s.v);
        }
        for v in &p.refinement.trajectory.v {
            assert!((v - v_opt).abs() < 1e-3);
        }
    }

    #[test]
    fn refinement_is_certified_and_kinematic() {
        let veh = VehicleParams::default();
        for (planner, phase, v0, vt) in [
            (PlannerKind::Ehmpp, PhaseLabel::Acceleration, 5.0, 15.0),
            (PlannerKind::Ehmpp, PhaseLabel::Deceleration, 15.0, 5.0),
            (PlannerKind::Baseline, PhaseLabel::Deceleration, 15.0, 5.0),
            (PlannerKind::Baseline, PhaseLabel::Acceleration, 3.0, 20.0),
        ] {
            let p = plan(planner, phase, v0, vt, vec![], &veh);
            let r = &p.refinement;
            assert!(!r.fallback, "{planner:?} {phase:?}");
            assert!(r.kkt_residual <= 1e-6);
            assert!(r.objective <= r.coarse_objective + 1e-8);
            assert!(r.trajectory.kinematic_residual(0.5) <= 1e-6);
            for w in r.profile.samples.windows(2) {
                assert!(w[1].s >= w[0].s && w[0].v >= 0.0);
                assert!(((w[1].s - w[0].s) / 0.5 - 0.5 * (w[0].v + w[1].v)).abs() <= 0.1);
            }
            assert!(r.profile.samples.iter().all(|s| s.phase == phase));
        }
    }

    #[test]
    fn refinement_reduces_jerk() {
        let veh = VehicleParams::default();
        let p = plan(PlannerKind::Baseline, PhaseLabel::Acceleration, 3.0, 14.0, vec![], &veh);
        assert!(p.refinement.profile.sum_sq_jerk() < p.coarse.sum_sq_jerk());
    }

    #[test]
    fn deceleration_targeting() {
        let veh = VehicleParams::default();
        let env = flat_env();
        let p = plan(PlannerKind::Ehmpp, PhaseLabel::Deceleration, 16.0, 0.0, vec![], &veh);
        let mad = |prof: &SpeedProfile| {
            let xs: Vec<f64> = prof
                .samples
                .iter()
                .filter(|x| x.v > 0.5)
                .map(|x| (x.a - vehicle::optimal_decel_clamped(x.s, x.v, &env, &veh).accel_ms2).abs())
                .collect();
            xs.iter().sum::<f64>() / xs.len() as f64
        };
        assert!(mad(&p.refinement.profile) < mad(&p.coarse));
    }

    #[test]
    fn hard_zone_is_avoided() {
        let veh = VehicleParams::default();
        let w = w();
        // a slow obstacle crossing the constant-speed ray
        let obs = vec![StObstacle { s_min: 30.0, s_max: 34.0, v: 2.0, t_start: 1.0, t_end: 6.0 }, StObstacle::fixed(120.0, 121.0)];
        let p = plan(PlannerKind::Baseline, PhaseLabel::Cruise, 12.0, 12.0, obs.clone(), &veh);
        let graph = STGraph::new(0.5, 8.0, 1.0, 200.0, obs, 2.3).unwrap();
        for x in p.refinement.profile.samples.iter().chain(&p.coarse.samples) {
            assert!(graph.d_min(x.t, x.s) > w.d2, "t={} s={}", x.t, x.s);
        }
    }

    #[test]
    fn pinched_corridor_fixes_the_output() {
        let w = w();
        let steps = 8;
        let centre: Vec<f64> = (0..=steps).map(|k| 6.0 * 0.5 * k as f64).collect();
        let corridor = SpeedCorridor { lo: centre.clone(), hi: centre.clone() };
        let targets = SpeedQpTargets { v_ref: vec![9.0; steps + 1], a_target: vec![None; steps], comfort_scale: 1.0 };
        let coarse = reconstruct_coarse(&centre, 6.0, 25.0, 6.0, 0.5);
        let input = SpeedQpInput {
            corridor: &corridor,
            targets: &targets,
            weights: &w,
            coarse: &coarse,
            v0: 6.0,
            a0: 0.0,
            v_max: 25.0,
            a_max: 6.0,
            dt: 0.5,
            phase: PhaseLabel::Cruise,
        };
        let r = qp_speed_refine(&input).unwrap();
        assert!(!r.fallback);
        for (a, b) in r.trajectory.s.iter().zip(&centre) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn blocked_horizon_is_an_error() {
        let (veh, env, w) = (VehicleParams::default(), flat_env(), w());
        // obstacle sitting on the ego at every sample
        let graph = STGraph::new(0.5, 8.0, 1.0, 200.0, vec![StObstacle::fixed(-5.0, 300.0)], 2.3).unwrap();
        let m = SpeedCostModel::new(&graph, &w, &veh, &env, request(PlannerKind::Ehmpp, PhaseLabel::Cruise, 10.0, 10.0), false);
        assert_eq!(dp_speed_search(&m).unwrap_err(), Error::InfeasibleHorizon);
    }
}

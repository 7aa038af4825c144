//! Closed-loop simulation: scenario scripting, planner cycles, a kinematic
//! plant with perfect tracking, safety checks and A/B orchestration.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::energy::{self, EnergyReport, PowerSample, ReportComparison};
use crate::error::{Error, Result};
use crate::frenet::{self, Cartesian, FrenetPoint, GlobalPath, ReferenceLine, SlBox, SmoothingWeights};
use crate::path::{self, Footprint, PathCostWeights, PathPlan, PathPlannerConfig, PathProfile};
use crate::qp::QpStatus;
use crate::quintic::Knot;
use crate::speed::{
    self, PhaseLabel, STGraph, SpeedCostModel, SpeedCostWeights, SpeedPlan, SpeedPlannerConfig, SpeedRequest, SpeedSample,
    StObstacle,
};
use crate::vehicle::{self, Environment, LongitudinalState, SlopeProfile, VehicleParams};

pub use crate::speed::PlannerKind;

/// Box obstacle moving along the route at constant speed and offset.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct ScenarioObstacle {
    pub length_m: f64,
    pub width_m: f64,
    /// Route station of the box centre at `t = 0`.
    pub s_m: f64,
    pub l_m: f64,
    #[cfg_attr(feature = "serde", serde(default))]
    pub speed_ms: f64,
}

impl ScenarioObstacle {
    pub fn is_static(&self) -> bool {
        self.speed_ms == 0.0
    }

    /// Route-frame rectangle at time `t`.
    pub fn rect(&self, t: f64) -> SlBox {
        let s = self.s_m + self.speed_ms * t;
        SlBox {
            s_min: s - 0.5 * self.length_m,
            s_max: s + 0.5 * self.length_m,
            l_min: self.l_m - 0.5 * self.width_m,
            l_max: self.l_m + 0.5 * self.width_m,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case", deny_unknown_fields))]
pub enum EventAction {
    SetTargetSpeed { speed_ms: f64 },
    StopWall { position_m: f64 },
}

/// Fires once, at the first cycle where the time or position trigger is met.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct Event {
    #[cfg_attr(feature = "serde", serde(default))]
    pub at_time_s: Option<f64>,
    #[cfg_attr(feature = "serde", serde(default))]
    pub at_position_m: Option<f64>,
    pub action: EventAction,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct InitialState {
    pub s_m: f64,
    #[cfg_attr(feature = "serde", serde(default))]
    pub l_m: f64,
    pub v_ms: f64,
    #[cfg_attr(feature = "serde", serde(default))]
    pub a_ms2: f64,
}

/// Planner settings shared by both planner kinds.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct PlannerSettings {
    pub path: PathPlannerConfig,
    pub path_weights: PathCostWeights,
    pub speed: SpeedPlannerConfig,
    pub speed_weights: SpeedCostWeights,
    pub smoothing: SmoothingWeights,
    pub window_behind_m: f64,
    pub window_ahead_m: f64,
    /// Slack added to the braking distance when deciding to stop.
    pub stop_margin_m: f64,
    /// Deceleration the comfort-cost planner assumes when deciding to stop or follow.
    pub comfort_decel_ms2: f64,
    /// Per-cycle lattice jitter drawn from the scenario seed.
    pub jitter_lattice: bool,
    /// Electrical energy captured per mechanical joule of regeneration.
    pub regen_efficiency: f64,
}

impl Default for PlannerSettings {
    fn default() -> Self {
        PlannerSettings {
            path: PathPlannerConfig::default(),
            path_weights: PathCostWeights::default(),
            speed: SpeedPlannerConfig::default(),
            speed_weights: SpeedCostWeights::default(),
            smoothing: SmoothingWeights::default(),
            window_behind_m: 30.0,
            window_ahead_m: 160.0,
            stop_margin_m: 5.0,
            comfort_decel_ms2: 2.0,
            jitter_lattice: false,
            regen_efficiency: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct Scenario {
    pub name: String,
    pub waypoints: GlobalPath,
    #[cfg_attr(feature = "serde", serde(default))]
    pub vehicle: VehicleParams,
    #[cfg_attr(feature = "serde", serde(default))]
    pub env: Environment,
    #[cfg_attr(feature = "serde", serde(default))]
    pub footprint: Footprint,
    #[cfg_attr(feature = "serde", serde(default))]
    pub obstacles: Vec<ScenarioObstacle>,
    #[cfg_attr(feature = "serde", serde(default))]
    pub events: Vec<Event>,
    pub initial: InitialState,
    /// Speed limit in force at the start.
    pub target_speed_ms: f64,
    pub duration_s: f64,
    /// The run ends once the ego passes this station.
    #[cfg_attr(feature = "serde", serde(default))]
    pub finish_position_m: Option<f64>,
    pub plant_dt_s: f64,
    pub replan_dt_s: f64,
    #[cfg_attr(feature = "serde", serde(default))]
    pub rng_seed: u64,
    #[cfg_attr(feature = "serde", serde(default))]
    pub planner: PlannerSettings,
}

struct Feed(Sha256);

impl Feed {
    fn f(&mut self, x: f64) {
        self.0.update(x.to_bits().to_le_bytes());
    }
    fn u(&mut self, x: u64) {
        self.0.update(x.to_le_bytes());
    }
    fn b(&mut self, x: bool) {
        self.0.update([x as u8]);
    }
    fn s(&mut self, x: &str) {
        self.u(x.len() as u64);
        self.0.update(x.as_bytes());
    }
    fn of(&mut self, x: Option<f64>) {
        match x {
            Some(v) => {
                self.b(true);
                self.f(v)
            }
            None => self.b(false),
        }
    }
    fn fs(&mut self, xs: &[f64]) {
        self.u(xs.len() as u64);
        xs.iter().for_each(|&x| self.f(x));
    }
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        self.waypoints.validate()?;
        self.vehicle.validate()?;
        self.env.validate()?;
        self.planner.path_weights.validate()?;
        self.planner.speed_weights.validate()?;
        if !(self.duration_s > 0.0) {
            return Err(Error::domain("duration_s must be positive"));
        }
        if !(self.plant_dt_s > 0.0 && self.plant_dt_s <= self.replan_dt_s) {
            return Err(Error::domain("need 0 < plant_dt_s <= replan_dt_s"));
        }
        if !(self.initial.v_ms >= 0.0 && self.target_speed_ms >= 0.0) {
            return Err(Error::domain("speeds must be non-negative"));
        }
        if !(self.planner.comfort_decel_ms2 > 0.0 && self.planner.stop_margin_m >= 0.0) {
            return Err(Error::domain("comfort_decel_ms2 must be positive and stop_margin_m non-negative"));
        }
        if !(self.planner.regen_efficiency > 0.0 && self.planner.regen_efficiency <= 1.0) {
            return Err(Error::domain("regen_efficiency must lie in (0, 1]"));
        }
        if !(self.footprint.half_length_m > 0.0 && self.footprint.half_width_m > 0.0) {
            return Err(Error::domain("footprint half sizes must be positive"));
        }
        for o in &self.obstacles {
            if !(o.length_m > 0.0 && o.width_m > 0.0 && o.speed_ms >= 0.0) {
                return Err(Error::domain("obstacle boxes need positive size and non-negative speed"));
            }
        }
        for e in &self.events {
            if e.at_time_s.is_some() == e.at_position_m.is_some() {
                return Err(Error::domain("each event needs exactly one of at_time_s and at_position_m"));
            }
        }
        Ok(())
    }

    /// SHA-256 over every field, hex encoded.
    pub fn identity_hash(&self) -> String {
        let mut h = Feed(Sha256::new());
        h.s(&self.name);
        h.u(self.waypoints.waypoints().len() as u64);
        for p in self.waypoints.waypoints() {
            h.f(p.x);
            h.f(p.y);
        }
        let v = &self.vehicle;
        h.fs(&[
            v.mass_kg,
            v.drag_coeff,
            v.frontal_area_m2,
            v.rolling_mu,
            v.p_opt_w,
            v.p2_w,
            v.pm_w,
            v.p_regen_max_w,
            v.p_max_w,
            v.f_brake_max_n,
            v.regen_decel_min_ms2,
            v.regen_decel_max_ms2,
            v.v_max_ms,
        ]);
        h.f(self.env.air_density_kgm3);
        h.f(self.env.gravity_ms2);
        h.u(self.env.slope_profile.knots.len() as u64);
        for &(s, th) in &self.env.slope_profile.knots {
            h.f(s);
            h.f(th);
        }
        h.f(self.footprint.half_length_m);
        h.f(self.footprint.half_width_m);
        h.u(self.obstacles.len() as u64);
        for o in &self.obstacles {
            h.fs(&[o.length_m, o.width_m, o.s_m, o.l_m, o.speed_ms]);
        }
        h.u(self.events.len() as u64);
        for e in &self.events {
            h.of(e.at_time_s);
            h.of(e.at_position_m);
            match e.action {
                EventAction::SetTargetSpeed { speed_ms } => {
                    h.u(0);
                    h.f(speed_ms)
                }
                EventAction::StopWall { position_m } => {
                    h.u(1);
                    h.f(position_m)
                }
            }
        }
        let i = &self.initial;
        h.fs(&[i.s_m, i.l_m, i.v_ms, i.a_ms2, self.target_speed_ms, self.duration_s]);
        h.of(self.finish_position_m);
        h.f(self.plant_dt_s);
        h.f(self.replan_dt_s);
        h.u(self.rng_seed);
        let p = &self.planner;
        h.fs(&[p.path.ds_m, p.path.dl_m, p.path.horizon_m, p.path.road_left_m, p.path.road_right_m]);
        match p.path.jitter_seed {
            Some(s) => {
                h.b(true);
                h.u(s)
            }
            None => h.b(false),
        }
        let w = &p.path_weights;
        h.fs(&[w.w_obs, w.w_sm, w.w_re, w.w1, w.w2, w.w3, w.w4, w.k, w.d1, w.d2]);
        let sp = &p.speed;
        h.fs(&[sp.dt_s, sp.horizon_s, sp.ds_m, sp.eps_v, sp.qp_buffer_m]);
        h.b(sp.freeze_v_opt);
        let w = &p.speed_weights;
        h.fs(&[w.w_ref_speed, w.w_acc, w.w_je, w.w1, w.w2, w.w3, w.k_obs, w.d1, w.d2, w.cruise_regularization]);
        let sm = &p.smoothing;
        h.fs(&[sm.fidelity, sm.first_difference, sm.second_difference, sm.ds_m]);
        h.fs(&[p.window_behind_m, p.window_ahead_m, p.stop_margin_m, p.comfort_decel_ms2, p.regen_efficiency]);
        h.b(p.jitter_lattice);
        h.0.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Route-frame polyline through the waypoints.
    pub fn route(&self) -> Result<ReferenceLine> {
        ReferenceLine::from_points(self.waypoints.waypoints())
    }
}

/// Semi-implicit Euler with the commanded acceleration clipped to the
/// traction and stopping limits: `v⁺ = max(0, v + a dt)`, `s⁺ = s + v⁺ dt`.
/// The returned state carries the realised acceleration.
pub fn step_plant(state: &LongitudinalState, commanded_accel: f64, dt: f64, env: &Environment, p: &VehicleParams) -> LongitudinalState {
    let (s, v) = (state.s_m, state.v_ms.max(0.0));
    let r = vehicle::resistance_clamped(s, v, env, p);
    let a_hi = (p.p_max_w / v.max(0.1) - r) / p.mass_kg;
    let a_lo = -vehicle::max_stopping_decel_clamped(s, v, env, p);
    let a = commanded_accel.clamp(a_lo, a_hi.max(a_lo));
    let v_next = (v + a * dt).max(0.0);
    LongitudinalState::new(s + v_next * dt, v_next, (v_next - v) / dt)
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
pub struct TraceTick {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub s: f64,
    pub l: f64,
    pub v: f64,
    pub a: f64,
    pub phase: PhaseLabel,
    pub traction_w: f64,
    pub regen_w: f64,
    pub brake_w: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
pub struct CycleDiagnostics {
    pub t: f64,
    pub phase: PhaseLabel,
    pub v_target: f64,
    pub smoothing_fallback: bool,
    pub path_dp_cost: Option<f64>,
    pub path_qp_status: Option<QpStatus>,
    pub path_kkt_residual: f64,
    pub path_objective: f64,
    pub path_dp_objective: f64,
    pub path_fallback: bool,
    pub path_corridor: Vec<(f64, f64)>,
    pub speed_dp_cost: Option<f64>,
    pub speed_qp_status: Option<QpStatus>,
    pub speed_kkt_residual: f64,
    pub speed_objective: f64,
    pub speed_coarse_objective: f64,
    pub speed_fallback: bool,
    pub speed_corridor: Vec<(f64, f64)>,
    pub error: Option<String>,
    pub emergency_stop: bool,
}

/// Planned geometry of one cycle in the cycle's reference frame.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanSnapshot {
    pub t: f64,
    pub refline: Vec<frenet::RefPoint>,
    /// `(s, l, l', l'')`
    pub path: Vec<[f64; 4]>,
    pub speed: Vec<SpeedSample>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimTrace {
    pub planner: PlannerKind,
    pub scenario_hash: String,
    pub ticks: Vec<TraceTick>,
    pub cycles: Vec<CycleDiagnostics>,
    pub plans: Vec<PlanSnapshot>,
    pub emergency_stops: usize,
    pub flagged: bool,
}

impl SimTrace {
    pub fn power_samples(&self) -> Vec<PowerSample> {
        self.ticks
            .iter()
            .map(|k| PowerSample {
                t: k.t,
                s: k.s,
                v: k.v,
                a: k.a,
                traction_power_w: k.traction_w,
                regen_power_w: k.regen_w,
                brake_dissipation_w: k.brake_w,
            })
            .collect()
    }

    /// Mean `|P - P_opt|` over cruise ticks; `None` without cruise ticks.
    pub fn mean_cruise_power_error(&self, p_opt_w: f64) -> Option<f64> {
        let xs: Vec<f64> = self.ticks.iter().filter(|k| k.phase == PhaseLabel::Cruise).map(|k| (k.traction_w - p_opt_w).abs()).collect();
        (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimRun {
    pub trace: SimTrace,
    pub report: EnergyReport,
}

/// Inputs of one planner cycle.
#[derive(Clone, Copy)]
pub struct CycleInput<'a> {
    pub scenario: &'a Scenario,
    pub route: &'a ReferenceLine,
    pub planner: PlannerKind,
    pub t: f64,
    /// Ego in the route frame.
    pub ego_s: f64,
    pub ego_l: f64,
    pub v: f64,
    pub a: f64,
    /// Lateral derivatives carried over from the previous path.
    pub dl: f64,
    pub ddl: f64,
    pub v_target: f64,
    /// Active stop walls (route stations).
    pub walls: &'a [f64],
    /// Walls already committed to.
    pub latched: &'a BTreeSet<usize>,
    pub jitter_seed: Option<u64>,
}

pub struct CycleOutput {
    pub refline: ReferenceLine,
    pub s0_local: f64,
    pub path: PathPlan,
    pub speed: SpeedPlan,
    pub phase: PhaseLabel,
    pub v_target: f64,
    /// Walls that triggered a stop this cycle.
    pub stopping_for: Vec<usize>,
}

fn lateral_gap(l: f64, half_width: f64, o: &SlBox) -> f64 {
    (o.l_min - (l + half_width)).max((l - half_width) - o.l_max).max(0.0)
}

/// Runs window extraction, smoothing, path and speed planning.
pub fn planner_cycle(input: &CycleInput<'_>) -> Result<CycleOutput> {
    let sc = input.scenario;
    let set = &sc.planner;
    let veh = &sc.vehicle;
    let env = &sc.env;
    let fp = sc.footprint;
    let ego_xy = frenet::to_cartesian(FrenetPoint::new(input.ego_s, input.ego_l), input.route)?;
    let window = frenet::extract_window(&sc.waypoints, ego_xy, set.window_behind_m, set.window_ahead_m)?;
    let window = if window.waypoints().len() < 3 { GlobalPath::new(window.resample(set.smoothing.ds_m))? } else { window };
    let refline = frenet::smooth_reference(&window, &set.smoothing)?;
    let ego_local = frenet::to_frenet_extended(ego_xy, &refline)?;

    // path: static obstacles with the footprint stretched by the ST standstill
    // gap plus one corridor sample spacing
    let pad = set.path.ds_m / path::OBSTACLE_SAMPLES as f64;
    let path_fp = Footprint { half_length_m: fp.half_length_m + set.speed_weights.d2 + pad, ..fp };
    let mut boxes = Vec::new();
    for o in sc.obstacles.iter().filter(|o| o.is_static()) {
        let r = o.rect(input.t);
        let corners = [(r.s_min, r.l_min), (r.s_max, r.l_min), (r.s_max, r.l_max), (r.s_min, r.l_max)]
            .iter()
            .map(|&(s, l)| frenet::to_cartesian(FrenetPoint::new(s, l), input.route))
            .collect::<Result<Vec<Cartesian>>>()?;
        if let frenet::Projection::Region(b) = frenet::project_obstacle(&frenet::Footprint::Polygon(corners), &refline)? {
            boxes.push(b);
        }
    }
    let mut pcfg = set.path;
    let room = refline.length() - ego_local.s;
    pcfg.horizon_m = pcfg.horizon_m.min(room).max(pcfg.ds_m);
    pcfg.jitter_seed = input.jitter_seed.or(pcfg.jitter_seed);
    let start = Knot::new(ego_local.l, input.dl, input.ddl);
    let path = path::plan_path(&pcfg, &set.path_weights, &path_fp, ego_local.s, start, &boxes)?;
    let profile = path.profile();

    // speed: walls and laterally conflicting obstacles, relative to the ego
    let horizon = set.speed.horizon_s;
    let d2_path = set.path_weights.d2;
    let conflicts = |r: &SlBox, reach_ahead: f64| -> bool {
        let (lo, hi) = (r.s_min - fp.half_length_m - set.speed_weights.d2, r.s_max + reach_ahead + fp.half_length_m + set.speed_weights.d2);
        let n = (libm::ceil((hi - lo) / 0.5) as usize).max(1);
        (0..=n).any(|k| {
            let s_route = lo + (hi - lo) * k as f64 / n as f64;
            let l = profile.eval(ego_local.s + (s_route - input.ego_s), 0);
            lateral_gap(l, fp.half_width_m, r) < d2_path
        })
    };
    let mut st = Vec::new();
    let mut leads: Vec<(f64, f64)> = Vec::new();
    for o in &sc.obstacles {
        let r = o.rect(input.t);
        if r.s_max < input.ego_s - fp.half_length_m {
            continue;
        }
        if !conflicts(&r, o.speed_ms * horizon) {
            continue;
        }
        st.push(StObstacle {
            s_min: r.s_min - input.ego_s,
            s_max: r.s_max - input.ego_s,
            v: o.speed_ms,
            t_start: f64::NEG_INFINITY,
            t_end: f64::INFINITY,
        });
        if r.s_min > input.ego_s {
            leads.push((r.s_min - input.ego_s, o.speed_ms));
        }
    }
    for &w in input.walls {
        st.push(StObstacle::fixed(w - input.ego_s, w - input.ego_s + 1.0));
    }

    // behaviour: stop and follow decisions
    let v = input.v.max(0.0);
    let a_dec = -vehicle::optimal_decel_clamped(input.ego_s, v, env, veh).accel_ms2;
    let gap_to = |front: f64| front - fp.half_length_m - set.speed_weights.d2;
    let mut v_target = input.v_target.min(veh.v_max_ms);
    let mut stopping_for = Vec::new();
    let mut stop_station: Option<f64> = None;
    for (i, &w) in input.walls.iter().enumerate() {
        let gap = gap_to(w - input.ego_s);
        if gap >= -fp.half_length_m {
            let at = (gap - set.stop_margin_m).max(0.0);
            stop_station = Some(stop_station.map_or(at, |x| x.min(at)));
        }
        let needed = match input.planner {
            PlannerKind::Ehmpp => v * v / (2.0 * a_dec),
            PlannerKind::Baseline => v * v / (2.0 * set.comfort_decel_ms2),
        } + set.stop_margin_m;
        if gap >= -fp.half_length_m && (input.latched.contains(&i) || gap <= needed) {
            stopping_for.push(i);
        }
    }
    for &(rear, v_lead) in &leads {
        if v_lead >= v {
            continue;
        }
        let gap = gap_to(rear);
        let needed = match input.planner {
            PlannerKind::Ehmpp => (v * v - v_lead * v_lead) / (2.0 * a_dec),
            PlannerKind::Baseline => (v * v - v_lead * v_lead) / (2.0 * set.comfort_decel_ms2),
        } + set.stop_margin_m;
        if gap <= needed {
            v_target = v_target.min(v_lead);
        }
    }
    let stop = !stopping_for.is_empty();
    if stop {
        v_target = 0.0;
    }
    let goal = match input.planner {
        PlannerKind::Ehmpp => vehicle::cruise_speed_for_grade(env.slope_profile.grade_clamped(input.ego_s), env, veh)
            .map_or(v_target, |c| c.v_ms.min(v_target)),
        PlannerKind::Baseline => v_target,
    };
    let phase = speed::classify_phase_with(v, goal, stop, set.speed.eps_v);

    let graph = STGraph::new(set.speed.dt_s, horizon, set.speed.ds_m, veh.v_max_ms * horizon, st, fp.half_length_m)?;
    let request = SpeedRequest {
        planner: input.planner,
        phase,
        s_origin: input.ego_s,
        v0: v,
        a0: input.a,
        v_target,
        stop_station: if input.planner == PlannerKind::Ehmpp { stop_station } else { None },
        a_max: vehicle::max_stopping_decel_clamped(input.ego_s, v, env, veh),
    };
    let model = SpeedCostModel::new(&graph, &set.speed_weights, veh, env, request, set.speed.freeze_v_opt);
    let speed = speed::plan_speed(&model, &set.speed)?;
    Ok(CycleOutput { s0_local: ego_local.s, refline, path, speed, phase, v_target, stopping_for })
}

/// [`planner_cycle`] with the comfort-cost planner.
pub fn baseline_planner_cycle(input: &CycleInput<'_>) -> Result<CycleOutput> {
    planner_cycle(&CycleInput { planner: PlannerKind::Baseline, ..*input })
}

/// Longitudinal and lateral gaps of the ego rectangle at `(s, l)` to `o`.
pub fn rect_gaps(s: f64, l: f64, fp: &Footprint, o: &SlBox) -> (f64, f64) {
    let ds = (o.s_min - (s + fp.half_length_m)).max((s - fp.half_length_m) - o.s_max).max(0.0);
    (ds, lateral_gap(l, fp.half_width_m, o))
}

/// Ticks where the ego comes within the standstill gap longitudinally and
/// the path clearance laterally of any obstacle or active stop wall.
pub fn safety_violations(scenario: &Scenario, trace: &SimTrace) -> Vec<usize> {
    let d2_s = scenario.planner.speed_weights.d2;
    let d2_l = scenario.planner.path_weights.d2;
    let walls = wall_schedule(scenario, trace);
    let fp = &scenario.footprint;
    trace
        .ticks
        .iter()
        .enumerate()
        .filter(|(i, k)| {
            let hit = |r: &SlBox| {
                let (ds, dl) = rect_gaps(k.s, k.l, fp, r);
                ds < d2_s && dl < d2_l
            };
            scenario.obstacles.iter().any(|o| hit(&o.rect(k.t)))
                || walls[*i].iter().any(|&w| hit(&SlBox { s_min: w, s_max: w + 1.0, l_min: f64::NEG_INFINITY, l_max: f64::INFINITY }))
        })
        .map(|(i, _)| i)
        .collect()
}

/// Smallest lateral gap to an obstacle over ticks where the ego is within
/// the standstill gap of it longitudinally; `None` when nothing is passed.
pub fn min_lateral_clearance(scenario: &Scenario, trace: &SimTrace) -> Option<f64> {
    let d2_s = scenario.planner.speed_weights.d2;
    let fp = &scenario.footprint;
    trace
        .ticks
        .iter()
        .flat_map(|k| scenario.obstacles.iter().map(move |o| rect_gaps(k.s, k.l, fp, &o.rect(k.t))))
        .filter(|&(ds, _)| ds < d2_s)
        .map(|(_, dl)| dl)
        .reduce(f64::min)
}

/// Walls in force at each tick, replaying the event triggers.
fn wall_schedule(scenario: &Scenario, trace: &SimTrace) -> Vec<Vec<f64>> {
    let mut active = vec![scenario.waypoints.length()];
    let mut fired = vec![false; scenario.events.len()];
    let mut next_cycle = 0usize;
    let mut out = Vec::with_capacity(trace.ticks.len());
    for k in &trace.ticks {
        while next_cycle < trace.cycles.len() && trace.cycles[next_cycle].t <= k.t + 1e-9 {
            let t = trace.cycles[next_cycle].t;
            let s = trace.ticks.iter().find(|x| (x.t - t).abs() < 1e-9).map_or(k.s, |x| x.s);
            for (e, f) in scenario.events.iter().zip(fired.iter_mut()) {
                if !*f && triggered(e, t, s) {
                    *f = true;
                    if let EventAction::StopWall { position_m } = e.action {
                        active.push(position_m);
                    }
                }
            }
            next_cycle += 1;
        }
        out.push(active.clone());
    }
    out
}

fn triggered(e: &Event, t: f64, s: f64) -> bool {
    e.at_time_s.is_some_and(|x| t + 1e-9 >= x) || e.at_position_m.is_some_and(|x| s >= x)
}

struct Active<'a> {
    refline: ReferenceLine,
    path: PathProfile,
    speed: &'a [f64],
    s_local: f64,
    since: f64,
}

/// Closed loop for one planner kind. Fails only on an invalid scenario;
/// planner failures are recorded in the trace.
pub fn run_closed_loop(scenario: &Scenario, planner: PlannerKind) -> Result<SimRun> {
    scenario.validate()?;
    let route = scenario.route()?;
    let (veh, env) = (&scenario.vehicle, &scenario.env);
    let dt = scenario.plant_dt_s;
    let per_cycle = libm::round(scenario.replan_dt_s / dt).max(1.0) as usize;
    let hash = scenario.identity_hash();
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.rng_seed);

    let mut state = LongitudinalState::new(scenario.initial.s_m, scenario.initial.v_ms, scenario.initial.a_ms2);
    let mut l = scenario.initial.l_m;
    let (mut dl, mut ddl) = (0.0, 0.0);
    let mut v_target = scenario.target_speed_ms;
    let mut walls = vec![scenario.waypoints.length()];
    let mut latched = BTreeSet::new();
    let mut fired = vec![false; scenario.events.len()];
    let mut failures = 0usize;
    let mut trace = SimTrace {
        planner,
        scenario_hash: hash.clone(),
        ticks: Vec::new(),
        cycles: Vec::new(),
        plans: Vec::new(),
        emergency_stops: 0,
        flagged: false,
    };
    let mut last: Option<(ReferenceLine, PathProfile, Vec<f64>, f64, f64)> = None;
    let n_ticks = libm::ceil(scenario.duration_s / dt - 1e-9) as usize;
    let finish = scenario.finish_position_m.unwrap_or(f64::INFINITY);
    let mut tick = 0usize;

    let tick_record = |trace: &mut SimTrace, t: f64, st: &LongitudinalState, a: f64, l: f64, phase: PhaseLabel| -> Result<()> {
        let xy = frenet::to_cartesian(FrenetPoint::new(st.s_m, l), &route)?;
        let r = vehicle::resistance_clamped(st.s_m, st.v_ms, env, veh);
        let ps = energy::power_sample(t, &LongitudinalState::new(st.s_m, st.v_ms, a), r, veh, scenario.planner.regen_efficiency);
        trace.ticks.push(TraceTick {
            t,
            x: xy.x,
            y: xy.y,
            s: st.s_m,
            l,
            v: st.v_ms,
            a,
            phase,
            traction_w: ps.traction_power_w,
            regen_w: ps.regen_power_w,
            brake_w: ps.brake_dissipation_w,
        });
        Ok(())
    };

    while tick < n_ticks && state.s_m < finish {
        let t = tick as f64 * dt;
        for (e, f) in scenario.events.iter().zip(fired.iter_mut()) {
            if !*f && triggered(e, t, state.s_m) {
                *f = true;
                match e.action {
                    EventAction::SetTargetSpeed { speed_ms } => v_target = speed_ms,
                    EventAction::StopWall { position_m } => walls.push(position_m),
                }
            }
        }
        let jitter_seed = scenario.planner.jitter_lattice.then(|| rng.random::<u64>());
        let input = CycleInput {
            scenario,
            route: &route,
            planner,
            t,
            ego_s: state.s_m,
            ego_l: l,
            v: state.v_ms,
            a: state.a_ms2,
            dl,
            ddl,
            v_target,
            walls: &walls,
            latched: &latched,
            jitter_seed,
        };
        let mut diag = CycleDiagnostics {
            t,
            phase: PhaseLabel::Cruise,
            v_target,
            smoothing_fallback: false,
            path_dp_cost: None,
            path_qp_status: None,
            path_kkt_residual: f64::NAN,
            path_objective: f64::NAN,
            path_dp_objective: f64::NAN,
            path_fallback: false,
            path_corridor: Vec::new(),
            speed_dp_cost: None,
            speed_qp_status: None,
            speed_kkt_residual: f64::NAN,
            speed_objective: f64::NAN,
            speed_coarse_objective: f64::NAN,
            speed_fallback: false,
            speed_corridor: Vec::new(),
            error: None,
            emergency_stop: false,
        };
        let mut emergency = false;
        match planner_cycle(&input) {
            Ok(out) => {
                failures = 0;
                latched.extend(out.stopping_for.iter().copied());
                let (p, s) = (&out.path, &out.speed);
                diag.phase = out.phase;
                diag.v_target = out.v_target;
                diag.smoothing_fallback = out.refline.fallback;
                diag.path_dp_cost = p.dp.cost.value();
                diag.path_qp_status = p.refinement.status;
                diag.path_kkt_residual = p.refinement.kkt_residual;
                diag.path_objective = p.refinement.objective;
                diag.path_dp_objective = p.refinement.dp_objective;
                diag.path_fallback = p.refinement.fallback;
                diag.path_corridor = p.corridor.bounds.clone();
                diag.speed_dp_cost = s.dp.cost.value();
                diag.speed_qp_status = s.refinement.status;
                diag.speed_kkt_residual = s.refinement.kkt_residual;
                diag.speed_objective = s.refinement.objective;
                diag.speed_coarse_objective = s.refinement.coarse_objective;
                diag.speed_fallback = s.refinement.fallback;
                diag.speed_corridor = s.corridor.lo.iter().copied().zip(s.corridor.hi.iter().copied()).collect();
                trace.plans.push(PlanSnapshot {
                    t,
                    refline: out.refline.points().to_vec(),
                    path: out.path.profile().sample(2.0),
                    speed: s.refinement.profile.samples.clone(),
                });
                last = Some((out.refline, out.path.refinement.profile, s.refinement.trajectory.a.clone(), out.s0_local, t));
            }
            Err(e) => {
                failures += 1;
                trace.flagged = true;
                diag.error = Some(e.to_string());
                diag.phase = trace.ticks.last().map_or(PhaseLabel::Cruise, |k| k.phase);
                if failures >= 2 || last.is_none() {
                    emergency = true;
                    diag.emergency_stop = true;
                    trace.emergency_stops += 1;
                    diag.phase = PhaseLabel::Deceleration;
                }
            }
        }
        let phase = diag.phase;
        trace.cycles.push(diag);

        let mut plan = last.as_ref().map(|(rl, pp, acc, s0, t_plan)| Active {
            refline: rl.clone(),
            path: pp.clone(),
            speed: acc,
            s_local: *s0,
            since: t - t_plan,
        });
        if let (Some(p), true) = (plan.as_mut(), failures > 0) {
            // continue the previous plan from where the ego is on it
            if let Ok(fp) = frenet::to_frenet(frenet::to_cartesian(FrenetPoint::new(state.s_m, l), &route)?, &p.refline) {
                p.s_local = fp.s;
            }
        }
        let speed_dt = scenario.planner.speed.dt_s;
        for k in 0..per_cycle {
            if tick >= n_ticks || state.s_m >= finish {
                break;
            }
            let t_tick = tick as f64 * dt;
            let cmd = match (&plan, emergency) {
                (_, true) | (None, _) => -vehicle::max_stopping_decel_clamped(state.s_m, state.v_ms, env, veh),
                (Some(p), false) => {
                    let tau = p.since + k as f64 * dt;
                    let idx = libm::floor(tau / speed_dt + 1e-9) as usize;
                    p.speed.get(idx).copied().unwrap_or(0.0)
                }
            };
            let next = step_plant(&state, cmd, dt, env, veh);
            tick_record(&mut trace, t_tick, &state, next.a_ms2, l, phase)?;
            let ds = next.s_m - state.s_m;
            if let (Some(p), false) = (plan.as_mut(), emergency) {
                p.s_local += ds;
                let lat = p.path.eval(p.s_local, 0);
                let mapped = frenet::to_cartesian(FrenetPoint::new(p.s_local, lat), &p.refline)
                    .and_then(|xy| frenet::to_frenet(xy, &route));
                match mapped {
                    Ok(fp) => {
                        state = LongitudinalState::new(fp.s, next.v_ms, next.a_ms2);
                        l = fp.l;
                    }
                    Err(_) => {
                        state = next;
                        l = lat;
                    }
                }
                dl = p.path.eval(p.s_local, 1);
                ddl = p.path.eval(p.s_local, 2);
            } else {
                state = next;
            }
            tick += 1;
        }
    }
    let t_end = tick as f64 * dt;
    let last_phase = trace.ticks.last().map_or(PhaseLabel::Cruise, |k| k.phase);
    tick_record(&mut trace, t_end, &state, 0.0, l, last_phase)?;
    let mut report = energy::integrate_energy(&trace.power_samples())?;
    report.scenario_hash = hash;
    Ok(SimRun { trace, report })
}

/// Energy bookkeeping of a trace: traction should equal kinetic gain plus
/// resistive work plus brake loss plus mechanical regeneration.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
pub struct EnergyAudit {
    pub traction_j: f64,
    pub kinetic_gain_j: f64,
    pub resistive_j: f64,
    pub brake_j: f64,
    pub regen_j: f64,
    pub imbalance_j: f64,
    pub relative: f64,
}

pub fn energy_audit(scenario: &Scenario, trace: &SimTrace) -> Result<EnergyAudit> {
    let report = energy::integrate_energy(&trace.power_samples())?;
    let (veh, env) = (&scenario.vehicle, &scenario.env);
    let resist = |k: &TraceTick| vehicle::resistance_clamped(k.s, k.v, env, veh) * k.v;
    let resistive_j: f64 = trace.ticks.windows(2).map(|w| 0.5 * (resist(&w[0]) + resist(&w[1])) * (w[1].t - w[0].t)).sum();
    let (first, last) = (&trace.ticks[0], &trace.ticks[trace.ticks.len() - 1]);
    let kinetic_gain_j = 0.5 * veh.mass_kg * (last.v * last.v - first.v * first.v);
    let regen_j = report.regen_energy_j / scenario.planner.regen_efficiency;
    let imbalance_j = report.traction_energy_j - (kinetic_gain_j + resistive_j + report.brake_loss_j + regen_j);
    let scale = report.traction_energy_j.max(kinetic_gain_j.abs()).max(1.0);
    Ok(EnergyAudit {
        traction_j: report.traction_energy_j,
        kinetic_gain_j,
        resistive_j,
        brake_j: report.brake_loss_j,
        regen_j,
        imbalance_j,
        relative: imbalance_j.abs() / scale,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRun {
    pub baseline: Option<SimRun>,
    pub ehmpp: Option<SimRun>,
    pub comparison: Option<ReportComparison>,
    /// Errors of runs that did not complete.
    pub errors: Vec<(PlannerKind, String)>,
}

/// Both planner kinds on the same scenario.
pub fn run_comparison(scenario: &Scenario) -> Result<ComparisonRun> {
    scenario.validate()?;
    let mut errors = Vec::new();
    let mut run = |k| match run_closed_loop(scenario, k) {
        Ok(r) => Some(r),
        Err(e) => {
            errors.push((k, e.to_string()));
            None
        }
    };
    let baseline = run(PlannerKind::Baseline);
    let ehmpp = run(PlannerKind::Ehmpp);
    let comparison = match (&baseline, &ehmpp) {
        (Some(b), Some(e)) => Some(energy::compare_reports(&b.report, &e.report)?),
        _ => None,
    };
    Ok(ComparisonRun { baseline, ehmpp, comparison, errors })
}

/// Shipped scenarios.
pub mod fixtures {
    use super::*;

    fn straight(length: f64) -> GlobalPath {
        GlobalPath::new(vec![Cartesian::new(0.0, 0.0), Cartesian::new(length, 0.0)]).expect("two distinct points")
    }

    fn base(name: &str, length: f64, v0: f64, limit: f64) -> Scenario {
        Scenario {
            name: name.into(),
            waypoints: straight(length),
            vehicle: VehicleParams::default(),
            env: Environment { slope_profile: SlopeProfile::flat(length), ..Environment::default() },
            footprint: Footprint::default(),
            obstacles: Vec::new(),
            events: Vec::new(),
            initial: InitialState { s_m: 0.0, l_m: 0.0, v_ms: v0, a_ms2: 0.0 },
            target_speed_ms: limit,
            duration_s: 120.0,
            finish_position_m: None,
            plant_dt_s: 0.02,
            replan_dt_s: 0.5,
            rng_seed: 7,
            planner: PlannerSettings::default(),
        }
    }

    fn at_s(s: f64, action: EventAction) -> Event {
        Event { at_time_s: None, at_position_m: Some(s), action }
    }

    fn target(v: f64) -> EventAction {
        EventAction::SetTargetSpeed { speed_ms: v }
    }

    /// Straight 1 km road with three scripted slow-downs.
    pub fn deceleration_rich() -> Scenario {
        let mut s = base("deceleration_rich", 1000.0, 16.0, 16.0);
        s.events = vec![
            at_s(150.0, target(8.0)),
            at_s(300.0, target(16.0)),
            at_s(450.0, target(6.0)),
            at_s(580.0, target(16.0)),
            at_s(720.0, target(10.0)),
            at_s(830.0, target(16.0)),
        ];
        s.finish_position_m = Some(880.0);
        s
    }

    pub fn free_flow_cruise() -> Scenario {
        let mut s = base("free_flow_cruise", 1500.0, 15.0, 22.0);
        s.finish_position_m = Some(1200.0);
        s
    }

    pub fn stop_wall() -> Scenario {
        let mut s = base("stop_wall", 400.0, 15.0, 15.0);
        s.events = vec![Event { at_time_s: Some(0.0), at_position_m: None, action: EventAction::StopWall { position_m: 200.0 } }];
        s.duration_s = 40.0;
        s
    }

    pub fn static_avoidance() -> Scenario {
        let mut s = base("static_avoidance", 500.0, 12.0, 12.0);
        s.obstacles = vec![ScenarioObstacle { length_m: 4.0, width_m: 1.8, s_m: 150.0, l_m: 0.0, speed_ms: 0.0 }];
        s.planner.path.road_left_m = 5.25;
        s.planner.path.road_right_m = -1.75;
        s.finish_position_m = Some(320.0);
        s
    }

    /// Illustrative traffic: two slower vehicles in the ego lane and two in
    /// the neighbouring lane.
    pub fn busy_traffic() -> Scenario {
        let mut s = base("busy_traffic", 800.0, 12.0, 18.0);
        s.obstacles = vec![
            ScenarioObstacle { length_m: 4.6, width_m: 1.9, s_m: 70.0, l_m: 0.0, speed_ms: 10.0 },
            ScenarioObstacle { length_m: 4.6, width_m: 1.9, s_m: 160.0, l_m: 0.0, speed_ms: 11.0 },
            ScenarioObstacle { length_m: 4.6, width_m: 1.9, s_m: 40.0, l_m: 3.5, speed_ms: 13.0 },
            ScenarioObstacle { length_m: 4.6, width_m: 1.9, s_m: 120.0, l_m: 3.5, speed_ms: 8.0 },
        ];
        s.planner.path.road_left_m = 5.25;
        s.planner.path.road_right_m = -1.75;
        s.finish_position_m = Some(550.0);
        s.duration_s = 90.0;
        s
    }

    pub fn empty_short_road() -> Scenario {
        let mut s = base("empty_short_road", 300.0, 10.0, 10.0);
        s.finish_position_m = Some(120.0);
        s
    }

    pub fn all() -> Vec<Scenario> {
        vec![deceleration_rich(), free_flow_cruise(), stop_wall(), static_avoidance(), busy_traffic(), empty_short_road()]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plant_examples() {
        let (env, p) = (Environment::default(), VehicleParams::default());
        let st = step_plant(&LongitudinalState::new(0.0, 10.0, 0.0), 0.0, 0.5, &env, &p);
        assert_eq!((st.s_m, st.v_ms), (5.0, 10.0));
        let st = step_plant(&LongitudinalState::new(0.0, 1.0, 0.0), -2.0, 1.0, &env, &p);
        assert_eq!(st.v_ms, 0.0);
        let mut st = LongitudinalState::new(0.0, 0.0, 0.0);
        for _ in 0..1000 {
            st = step_plant(&st, 1.0, 0.01, &env, &p);
        }
        assert!((st.v_ms - 10.0).abs() <= 1e-9);
        assert!((st.s_m - 50.05).abs() <= 1e-9);
    }

    #[test]
    fn plant_clips_to_stopping_limit() {
        let (env, p) = (Environment::default(), VehicleParams::default());
        let st = LongitudinalState::new(0.0, 20.0, 0.0);
        let out = step_plant(&st, -50.0, 0.01, &env, &p);
        let lim = vehicle::max_stopping_decel(&st, &env, &p).unwrap();
        assert!(((out.v_ms - 20.0) / 0.01 + lim).abs() < 1e-6);
    }

    #[test]
    fn hash_tracks_fields() {
        let a = fixtures::stop_wall();
        let mut b = a.clone();
        assert_eq!(a.identity_hash(), b.identity_hash());
        b.planner.speed_weights.w_je += 1e-12;
        assert_ne!(a.identity_hash(), b.identity_hash());
        let mut c = a.clone();
        c.rng_seed += 1;
        assert_ne!(a.identity_hash(), c.identity_hash());
    }

    #[test]
    fn validation() {
        let mut s = fixtures::stop_wall();
        s.plant_dt_s = 1.0;
        assert!(s.validate().is_err());
        let mut s = fixtures::stop_wall();
        s.events[0].at_position_m = Some(3.0);
        assert!(s.validate().is_err());
    }
}

//! Longitudinal force and power model of the vehicle.
//!
//! Sign convention: grade `theta > 0` is uphill, so the slope force is
//! positive when it opposes forward motion. Traction is positive when it
//! propels the vehicle; regenerative and friction-brake forces are
//! magnitudes that oppose motion.

use alloc::vec;
use alloc::vec::Vec;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Speed below which power-limited force targets are evaluated at this floor
/// instead, keeping `P / v` bounded.
pub const V_FLOOR: f64 = 0.1;

#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
#[derive(Debug, Clone, PartialEq)]
pub struct VehicleParams {
    pub mass_kg: f64,
    pub drag_coeff: f64,
    pub frontal_area_m2: f64,
    pub rolling_mu: f64,
    /// Motor power at the most efficient cruise operating point (W).
    pub p_opt_w: f64,
    /// Most efficient motor power while accelerating (W).
    pub p2_w: f64,
    /// Regenerative power of maximum recovery efficiency (W).
    pub pm_w: f64,
    /// Power ceiling of the regenerative system (W).
    pub p_regen_max_w: f64,
    /// Peak motor power, used to clip commanded acceleration (W).
    pub p_max_w: f64,
    pub f_brake_max_n: f64,
    /// Regeneration only engages at or above this braking deceleration.
    pub regen_decel_min_ms2: f64,
    /// Regeneration supplies at most this braking deceleration.
    pub regen_decel_max_ms2: f64,
    pub v_max_ms: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        VehicleParams {
            mass_kg: 1500.0,
            drag_coeff: 0.3,
            frontal_area_m2: 2.2,
            rolling_mu: 0.015,
            p_opt_w: 6_000.0,
            p2_w: 20_000.0,
            pm_w: 25_000.0,
            p_regen_max_w: 60_000.0,
            p_max_w: 80_000.0,
            f_brake_max_n: 6_000.0,
            regen_decel_min_ms2: 0.5,
            regen_decel_max_ms2: 3.0,
            v_max_ms: 25.0,
        }
    }
}

impl VehicleParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.mass_kg > 0.0) {
            return Err(Error::domain("mass_kg must be positive"));
        }
        let nonneg = [
            ("drag_coeff", self.drag_coeff),
            ("frontal_area_m2", self.frontal_area_m2),
            ("rolling_mu", self.rolling_mu),
            ("p_opt_w", self.p_opt_w),
            ("p2_w", self.p2_w),
            ("pm_w", self.pm_w),
            ("p_regen_max_w", self.p_regen_max_w),
            ("p_max_w", self.p_max_w),
            ("f_brake_max_n", self.f_brake_max_n),
            ("regen_decel_min_ms2", self.regen_decel_min_ms2),
            ("v_max_ms", self.v_max_ms),
        ];
        for (name, v) in nonneg {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::Domain(alloc::format!("{name} must be finite and nonnegative")));
            }
        }
        if !(self.regen_decel_min_ms2 < self.regen_decel_max_ms2) {
            return Err(Error::domain("regen_decel_min_ms2 must be below regen_decel_max_ms2"));
        }
        Ok(())
    }
}

/// Road grade as a piecewise-linear function of arc length.
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
#[derive(Debug, Clone, PartialEq)]
pub struct SlopeProfile {
    /// `(s_m, theta_rad)` knots with strictly increasing `s_m`.
    pub knots: Vec<(f64, f64)>,
}

impl SlopeProfile {
    /// Zero grade over `[0, length_m]`.
    pub fn flat(length_m: f64) -> Self {
        SlopeProfile::constant(length_m, 0.0)
    }

    pub fn constant(length_m: f64, theta: f64) -> Self {
        SlopeProfile { knots: vec![(0.0, theta), (length_m, theta)] }
    }

    pub fn domain(&self) -> (f64, f64) {
        match (self.knots.first(), self.knots.last()) {
            (Some(a), Some(b)) => (a.0, b.0),
            _ => (0.0, 0.0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.knots.is_empty() {
            return Err(Error::domain("slope profile needs at least one knot"));
        }
        for w in self.knots.windows(2) {
            if !(w[1].0 > w[0].0) {
                return Err(Error::domain("slope knots must have increasing s"));
            }
        }
        if self.knots.iter().any(|k| !(k.1.abs() < core::f64::consts::FRAC_PI_2)) {
            return Err(Error::domain("slope magnitude must be below pi/2"));
        }
        Ok(())
    }

    /// Grade at `s`; positions outside the knot span are a domain error.
    pub fn grade_at(&self, s: f64) -> Result<f64> {
        let (lo, hi) = self.domain();
        if self.knots.is_empty() || s < lo - 1e-9 || s > hi + 1e-9 || s.is_nan() {
            return Err(Error::Domain(alloc::format!("s={s} outside slope profile [{lo}, {hi}]")));
        }
        Ok(self.grade_clamped(s))
    }

    /// Grade at `s`, holding the end values beyond the knot span.
    pub fn grade_clamped(&self, s: f64) -> f64 {
        let k = &self.knots;
        match k.len() {
            0 => 0.0,
            1 => k[0].1,
            _ => {
                if s <= k[0].0 {
                    return k[0].1;
                }
                if s >= k[k.len() - 1].0 {
                    return k[k.len() - 1].1;
                }
                let i = k.partition_point(|p| p.0 <= s) - 1;
                let (s0, t0) = k[i];
                let (s1, t1) = k[i + 1];
                t0 + (t1 - t0) * (s - s0) / (s1 - s0)
            }
        }
    }
}

#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
#[derive(Debug, Clone, PartialEq)]
pub struct Environment {
    pub air_density_kgm3: f64,
    pub gravity_ms2: f64,
    pub slope_profile: SlopeProfile,
}

impl Default for Environment {
    fn default() -> Self {
        Environment { air_density_kgm3: 1.225, gravity_ms2: 9.81, slope_profile: SlopeProfile::flat(1.0e6) }
    }
}

impl Environment {
    pub fn validate(&self) -> Result<()> {
        if !(self.air_density_kgm3 >= 0.0) {
            return Err(Error::domain("air density must be nonnegative"));
        }
        if !(self.gravity_ms2 > 0.0) {
            return Err(Error::domain("gravity must be positive"));
        }
        self.slope_profile.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LongitudinalState {
    pub s_m: f64,
    pub v_ms: f64,
    pub a_ms2: f64,
}

impl LongitudinalState {
    pub fn new(s_m: f64, v_ms: f64, a_ms2: f64) -> Self {
        LongitudinalState { s_m, v_ms, a_ms2 }
    }
}

/// All longitudinal forces acting at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ForceBreakdown {
    pub air_n: f64,
    pub friction_n: f64,
    pub slope_n: f64,
    pub traction_n: f64,
    pub regen_n: f64,
    pub brake_n: f64,
}

impl ForceBreakdown {
    pub fn resistance_n(&self) -> f64 {
        self.air_n + self.friction_n + self.slope_n
    }

    pub fn net_n(&self) -> f64 {
        self.traction_n - self.resistance_n() - self.regen_n - self.brake_n
    }
}

pub fn air_drag(v: f64, env: &Environment, p: &VehicleParams) -> f64 {
    0.5 * env.air_density_kgm3 * v * v * p.drag_coeff * p.frontal_area_m2
}

pub fn rolling_friction(s: f64, env: &Environment, p: &VehicleParams) -> Result<f64> {
    let theta = env.slope_profile.grade_at(s)?;
    Ok(p.rolling_mu * p.mass_kg * env.gravity_ms2 * libm::cos(theta))
}

pub fn slope_force(s: f64, env: &Environment, p: &VehicleParams) -> Result<f64> {
    let theta = env.slope_profile.grade_at(s)?;
    Ok(p.mass_kg * env.gravity_ms2 * libm::sin(theta))
}

/// Air drag + rolling friction + slope force at `(s, v)`, with the grade
/// held constant beyond the slope profile ends.
pub fn resistance_clamped(s: f64, v: f64, env: &Environment, p: &VehicleParams) -> f64 {
    let theta = env.slope_profile.grade_clamped(s);
    air_drag(v, env, p) + p.mass_kg * env.gravity_ms2 * (p.rolling_mu * libm::cos(theta) + libm::sin(theta))
}

pub fn force_breakdown(
    state: &LongitudinalState,
    traction_n: f64,
    regen_n: f64,
    brake_n: f64,
    env: &Environment,
    p: &VehicleParams,
) -> Result<ForceBreakdown> {
    Ok(ForceBreakdown {
        air_n: air_drag(state.v_ms, env, p),
        friction_n: rolling_friction(state.s_m, env, p)?,
        slope_n: slope_force(state.s_m, env, p)?,
        traction_n,
        regen_n,
        brake_n,
    })
}

/// Acceleration under traction with regeneration inactive.
pub fn accel_dynamics(
    state: &LongitudinalState,
    traction_n: f64,
    env: &Environment,
    p: &VehicleParams,
) -> Result<f64> {
    let f = force_breakdown(state, traction_n, 0.0, 0.0, env, p)?;
    Ok((f.traction_n - f.air_n - f.friction_n - f.slope_n) / p.mass_kg)
}

/// Acceleration while regenerating and/or friction braking.
pub fn decel_dynamics(
    state: &LongitudinalState,
    regen_n: f64,
    brake_n: f64,
    env: &Environment,
    p: &VehicleParams,
) -> Result<f64> {
    if !(regen_n >= 0.0) || !(brake_n >= 0.0) {
        return Err(Error::Constraint(alloc::format!("negative regen ({regen_n}) or brake ({brake_n}) force")));
    }
    if brake_n > p.f_brake_max_n {
        return Err(Error::Constraint(alloc::format!(
            "brake force {brake_n} N exceeds {} N",
            p.f_brake_max_n
        )));
    }
    if regen_n * state.v_ms > p.p_regen_max_w * (1.0 + 1e-12) {
        return Err(Error::Constraint(alloc::format!(
            "regen power {} W exceeds {} W",
            regen_n * state.v_ms,
            p.p_regen_max_w
        )));
    }
    let f = force_breakdown(state, 0.0, regen_n, brake_n, env, p)?;
    Ok(-(f.air_n + f.friction_n + f.regen_n + f.brake_n) / p.mass_kg - f.slope_n / p.mass_kg)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CruiseAdvisory {
    /// A finite power-balance root was found below the cap.
    Root,
    /// The root lies above `v_max_ms`; the cap is returned.
    Capped,
    /// Resistance never balances the power (no drag, nonpositive rolling +
    /// grade); the cap is returned.
    NoResistance,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CruiseSpeed {
    pub v_ms: f64,
    /// Uncapped power-balance root when one exists.
    pub root_ms: Option<f64>,
    pub advisory: CruiseAdvisory,
}

/// Speed at which the resistive power equals the optimal cruise power,
/// `P_opt = V (F_air(V) + F_friction + F_slope)`, capped at `v_max_ms`.
pub fn optimal_cruise_speed(s: f64, env: &Environment, p: &VehicleParams) -> Result<CruiseSpeed> {
    let theta = env.slope_profile.grade_at(s)?;
    cruise_speed_for_grade(theta, env, p)
}

pub(crate) fn cruise_speed_for_grade(theta: f64, env: &Environment, p: &VehicleParams) -> Result<CruiseSpeed> {
    if !(p.p_opt_w > 0.0) {
        return Err(Error::domain("p_opt_w must be positive to define a cruise speed"));
    }
    let k = 0.5 * env.air_density_kgm3 * p.drag_coeff * p.frontal_area_m2;
    let c = p.mass_kg * env.gravity_ms2 * (p.rolling_mu * libm::cos(theta) + libm::sin(theta));
    let capped = |advisory, root_ms| CruiseSpeed { v_ms: p.v_max_ms, root_ms, advisory };
    if k <= 0.0 && c <= 0.0 {
        return Ok(capped(CruiseAdvisory::NoResistance, None));
    }
    let residual = |v: f64| v * (k * v * v + c) - p.p_opt_w;
    let mut lo = 0.0;
    let mut hi = 3.0 * p.v_max_ms;
    if residual(hi) < 0.0 {
        return Ok(capped(CruiseAdvisory::Capped, None));
    }
    // residual(0) = -P_opt < 0 and residual is negative-then-increasing, so
    // the sign change in the bracket is unique.
    while hi - lo > 1e-8 {
        let mid = 0.5 * (lo + hi);
        if residual(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let root = 0.5 * (lo + hi);
    if root > p.v_max_ms {
        Ok(capped(CruiseAdvisory::Capped, Some(root)))
    } else {
        Ok(CruiseSpeed { v_ms: root, root_ms: Some(root), advisory: CruiseAdvisory::Root })
    }
}

/// Acceleration reached when the motor delivers its most efficient
/// accelerating power `P2`.
pub fn optimal_accel(state: &LongitudinalState, env: &Environment, p: &VehicleParams) -> Result<f64> {
    let v = state.v_ms.max(V_FLOOR);
    let r = air_drag(v, env, p) + rolling_friction(state.s_m, env, p)? + slope_force(state.s_m, env, p)?;
    Ok((p.p2_w / v - r) / p.mass_kg)
}

pub(crate) fn optimal_accel_clamped(s: f64, v: f64, env: &Environment, p: &VehicleParams) -> f64 {
    let v = v.max(V_FLOOR);
    (p.p2_w / v - resistance_clamped(s, v, env, p)) / p.mass_kg
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimalDecel {
    /// Target acceleration (negative), clamped into the regeneration envelope.
    pub accel_ms2: f64,
    /// The unclamped value.
    pub raw_ms2: f64,
    /// True when regeneration alone can deliver `accel_ms2` at this state.
    pub brake_free: bool,
}

/// Deceleration at which regeneration runs at its most efficient power
/// `P_m`, clamped in magnitude into
/// `[regen_decel_min_ms2, regen_decel_max_ms2]`.
pub fn optimal_decel(state: &LongitudinalState, env: &Environment, p: &VehicleParams) -> Result<OptimalDecel> {
    let theta = env.slope_profile.grade_at(state.s_m)?;
    Ok(optimal_decel_for_grade(state.v_ms, theta, env, p))
}

pub(crate) fn optimal_decel_clamped(s: f64, v: f64, env: &Environment, p: &VehicleParams) -> OptimalDecel {
    optimal_decel_for_grade(v, env.slope_profile.grade_clamped(s), env, p)
}

fn optimal_decel_for_grade(v: f64, theta: f64, env: &Environment, p: &VehicleParams) -> OptimalDecel {
    let v = v.max(V_FLOOR);
    let r = air_drag(v, env, p) + p.mass_kg * env.gravity_ms2 * (p.rolling_mu * libm::cos(theta) + libm::sin(theta));
    let raw = -(p.pm_w / v + r) / p.mass_kg;
    let mag = (-raw).clamp(p.regen_decel_min_ms2, p.regen_decel_max_ms2);
    let regen_needed = p.mass_kg * mag - r;
    let regen_cap = (p.p_regen_max_w / v).min(p.mass_kg * p.regen_decel_max_ms2);
    OptimalDecel { accel_ms2: -mag, raw_ms2: raw, brake_free: regen_needed <= regen_cap }
}

/// Largest deceleration magnitude available from regeneration, friction
/// brakes and road resistance together.
pub fn max_stopping_decel(state: &LongitudinalState, env: &Environment, p: &VehicleParams) -> Result<f64> {
    let theta = env.slope_profile.grade_at(state.s_m)?;
    Ok(max_stopping_decel_for_grade(state.v_ms, theta, env, p))
}

pub(crate) fn max_stopping_decel_clamped(s: f64, v: f64, env: &Environment, p: &VehicleParams) -> f64 {
    max_stopping_decel_for_grade(v, env.slope_profile.grade_clamped(s), env, p)
}

fn max_stopping_decel_for_grade(v: f64, theta: f64, env: &Environment, p: &VehicleParams) -> f64 {
    let regen = (p.p_regen_max_w / v.max(V_FLOOR)).min(p.mass_kg * p.regen_decel_max_ms2);
    let r = air_drag(v, env, p) + p.mass_kg * env.gravity_ms2 * (p.rolling_mu * libm::cos(theta) + libm::sin(theta));
    (regen + p.f_brake_max_n + r) / p.mass_kg
}

/// Distance needed to slow from `v_cur` to `v_f` at constant `a_dec_max`.
pub fn min_brake_distance(v_cur: f64, v_f: f64, a_dec_max: f64) -> Result<f64> {
    if !(a_dec_max > 0.0) {
        return Err(Error::domain("a_dec_max must be positive"));
    }
    if !(v_f >= 0.0) || v_f > v_cur {
        return Err(Error::Domain(alloc::format!("final speed {v_f} must lie in [0, {v_cur}]")));
    }
    Ok((v_cur * v_cur - v_f * v_f) / (2.0 * a_dec_max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn flat() -> Environment {
        Environment::default()
    }

    fn graded(theta: f64) -> Environment {
        Environment { slope_profile: SlopeProfile::constant(1000.0, theta), ..Environment::default() }
    }

    #[test]
    fn air_drag_fixtures() {
        let p = VehicleParams::default();
        assert_eq!(air_drag(0.0, &flat(), &p), 0.0);
        assert_relative_eq!(air_drag(10.0, &flat(), &p), 40.425, max_relative = 1e-12);
        assert_relative_eq!(air_drag(20.0, &flat(), &p), 4.0 * air_drag(10.0, &flat(), &p), max_relative = 1e-15);
    }

    #[test]
    fn friction_and_slope_fixtures() {
        let p = VehicleParams::default();
        assert_relative_eq!(rolling_friction(0.0, &flat(), &p).unwrap(), 220.725, max_relative = 1e-12);
        let up = graded(0.05);
        let down = graded(-0.05);
        assert_relative_eq!(slope_force(5.0, &up, &p).unwrap(), 735.443_475_818_031_6, max_relative = 1e-12);
        assert_eq!(slope_force(5.0, &up, &p).unwrap(), -slope_force(5.0, &down, &p).unwrap());
        assert_eq!(rolling_friction(5.0, &up, &p).unwrap(), rolling_friction(5.0, &down, &p).unwrap());
        let frictionless = VehicleParams { rolling_mu: 0.0, ..p };
        assert_eq!(rolling_friction(0.0, &flat(), &frictionless).unwrap(), 0.0);
    }

    #[test]
    fn slope_outside_profile_is_domain_error() {
        let env = graded(0.0);
        assert!(matches!(slope_force(2000.0, &env, &VehicleParams::default()), Err(Error::Domain(_))));
    }

    #[test]
    fn accel_and_decel_fixtures() {
        let p = VehicleParams::default();
        let st = LongitudinalState::new(0.0, 10.0, 0.0);
        assert_relative_eq!(accel_dynamics(&st, 2000.0, &flat(), &p).unwrap(), 1.159_233_333_333_333_3, max_relative = 1e-9);
        assert_relative_eq!(decel_dynamics(&st, 1500.0, 0.0, &flat(), &p).unwrap(), -1.1741, max_relative = 1e-9);

        let rest = LongitudinalState::new(0.0, 0.0, 0.0);
        let ideal = VehicleParams { rolling_mu: 0.0, ..p.clone() };
        assert_eq!(decel_dynamics(&rest, 0.0, 0.0, &flat(), &ideal).unwrap(), 0.0);
        assert!(decel_dynamics(&rest, 0.0, 0.0, &graded(-0.2), &p).unwrap() > 0.0);

        let equilibrium = air_drag(10.0, &flat(), &p) + rolling_friction(0.0, &flat(), &p).unwrap();
        assert_relative_eq!(accel_dynamics(&st, equilibrium, &flat(), &p).unwrap(), 0.0, epsilon = 1e-15);
        let vacuum = Environment { air_density_kgm3: 0.0, ..flat() };
        assert_relative_eq!(accel_dynamics(&st, p.mass_kg, &vacuum, &ideal).unwrap(), 1.0, max_relative = 1e-15);
    }

    #[test]
    fn decel_bounds_are_enforced() {
        let p = VehicleParams::default();
        let st = LongitudinalState::new(0.0, 10.0, 0.0);
        assert!(matches!(decel_dynamics(&st, 0.0, 7000.0, &flat(), &p), Err(Error::Constraint(_))));
        assert!(matches!(decel_dynamics(&st, 7000.0, 0.0, &flat(), &p), Err(Error::Constraint(_))));
        assert!(matches!(decel_dynamics(&st, -1.0, 0.0, &flat(), &p), Err(Error::Constraint(_))));
    }

    #[test]
    fn cruise_speed_fixture_and_residual() {
        let p = VehicleParams { p_opt_w: 30_000.0, v_max_ms: 100.0, ..VehicleParams::default() };
        let c = optimal_cruise_speed(0.0, &flat(), &p).unwrap();
        assert_eq!(c.advisory, CruiseAdvisory::Root);
        assert!((c.v_ms - 37.709_197_846).abs() < 1e-6);
        let f = air_drag(c.v_ms, &flat(), &p) + rolling_friction(0.0, &flat(), &p).unwrap();
        assert!((p.p_opt_w - c.v_ms * f).abs() <= 1e-6 * p.p_opt_w);
    }

    #[test]
    fn cruise_speed_without_resistance_caps() {
        let p = VehicleParams { rolling_mu: 0.0, drag_coeff: 0.0, ..VehicleParams::default() };
        let c = optimal_cruise_speed(0.0, &flat(), &p).unwrap();
        assert_eq!(c.advisory, CruiseAdvisory::NoResistance);
        assert_eq!(c.v_ms, p.v_max_ms);
        let zero = VehicleParams { p_opt_w: 0.0, ..VehicleParams::default() };
        assert!(optimal_cruise_speed(0.0, &flat(), &zero).is_err());
    }

    #[test]
    fn cruise_speed_decreases_uphill() {
        let p = VehicleParams { p_opt_w: 30_000.0, v_max_ms: 100.0, ..VehicleParams::default() };
        let mut last = f64::INFINITY;
        for i in 0..10 {
            let v = optimal_cruise_speed(0.0, &graded(i as f64 * 0.01), &p).unwrap().v_ms;
            assert!(v < last);
            last = v;
        }
    }

    #[test]
    fn optimal_accel_fixtures() {
        let p = VehicleParams { p2_w: 60_000.0, ..VehicleParams::default() };
        let st = LongitudinalState::new(0.0, 10.0, 0.0);
        assert_relative_eq!(optimal_accel(&st, &flat(), &p).unwrap(), 3.8259, max_relative = 1e-9);
        let balance = VehicleParams { p2_w: 10.0 * 261.15, ..p.clone() };
        assert!(optimal_accel(&st, &flat(), &balance).unwrap().abs() < 1e-12);
        let mut last = f64::INFINITY;
        for i in 1..40 {
            let a = optimal_accel(&LongitudinalState::new(0.0, i as f64, 0.0), &flat(), &p).unwrap();
            assert!(a < last);
            last = a;
        }
        // below the floor the target is evaluated at the floor
        let crawl = optimal_accel(&LongitudinalState::new(0.0, 0.0, 0.0), &flat(), &p).unwrap();
        assert_eq!(crawl, optimal_accel(&LongitudinalState::new(0.0, V_FLOOR, 0.0), &flat(), &p).unwrap());
    }

    #[test]
    fn optimal_decel_fixtures() {
        let p = VehicleParams { pm_w: 20_000.0, ..VehicleParams::default() };
        let d = optimal_decel(&LongitudinalState::new(0.0, 20.0, 0.0), &flat(), &p).unwrap();
        assert_relative_eq!(d.raw_ms2, -0.921_616_666_666_666_8, max_relative = 1e-9);
        assert_eq!(d.accel_ms2, d.raw_ms2);
        assert!(d.brake_free);

        // pick P_m so the raw magnitude is 0.2 and 4.0 at v = 20
        let r = 382.425;
        let weak = VehicleParams { pm_w: 20.0 * (0.2 * 1500.0 - r), ..p.clone() };
        assert_eq!(optimal_decel(&LongitudinalState::new(0.0, 20.0, 0.0), &flat(), &weak).unwrap().accel_ms2, -0.5);
        let strong = VehicleParams { pm_w: 20.0 * (4.0 * 1500.0 - r), ..p };
        assert_eq!(optimal_decel(&LongitudinalState::new(0.0, 20.0, 0.0), &flat(), &strong).unwrap().accel_ms2, -3.0);
    }

    #[test]
    fn max_stopping_decel_fixtures() {
        let p = VehicleParams { p_regen_max_w: 100_000.0, f_brake_max_n: 6000.0, ..VehicleParams::default() };
        let st = LongitudinalState::new(0.0, 20.0, 0.0);
        assert_relative_eq!(max_stopping_decel(&st, &flat(), &p).unwrap(), 7.25495, max_relative = 1e-9);
        assert!(max_stopping_decel(&st, &graded(-0.05), &p).unwrap() < max_stopping_decel(&st, &flat(), &p).unwrap());
        let bare = VehicleParams { p_regen_max_w: 0.0, f_brake_max_n: 0.0, ..VehicleParams::default() };
        let still = LongitudinalState::new(0.0, 0.0, 0.0);
        assert_relative_eq!(max_stopping_decel(&still, &flat(), &bare).unwrap(), 0.015 * 9.81, max_relative = 1e-12);
    }

    #[test]
    fn brake_distance_fixtures() {
        assert_relative_eq!(min_brake_distance(20.0, 0.0, 5.0).unwrap(), 40.0, max_relative = 1e-12);
        assert_eq!(min_brake_distance(12.0, 12.0, 3.0).unwrap(), 0.0);
        assert_relative_eq!(
            min_brake_distance(20.0, 4.0, 2.5).unwrap(),
            2.0 * min_brake_distance(20.0, 4.0, 5.0).unwrap(),
            max_relative = 1e-15
        );
        assert!(min_brake_distance(5.0, 6.0, 1.0).is_err());
        assert!(min_brake_distance(5.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn brake_distance_matches_kinematic_integration() {
        // exact constant-deceleration integration: piecewise-constant a gives
        // s += v dt - a dt^2 / 2 exactly
        let (v0, a) = (23.0, 4.2);
        let t_stop = v0 / a;
        let n = 10_000;
        let dt = t_stop / n as f64;
        let (mut s, mut v) = (0.0, v0);
        for _ in 0..n {
            s += v * dt - 0.5 * a * dt * dt;
            v -= a * dt;
        }
        let d = min_brake_distance(v0, 0.0, a).unwrap();
        assert!((s - d).abs() <= 1e-9 * d);
    }

    proptest! {
        #[test]
        fn dynamics_match_newton(
            v in 0.0f64..40.0,
            theta in -0.2f64..0.2,
            traction in 0.0f64..8000.0,
            regen in 0.0f64..1500.0,
            brake in 0.0f64..6000.0,
        ) {
            let p = VehicleParams::default();
            let env = graded(theta);
            let st = LongitudinalState::new(10.0, v, 0.0);
            let fb = force_breakdown(&st, traction, 0.0, 0.0, &env, &p).unwrap();
            let a = accel_dynamics(&st, traction, &env, &p).unwrap();
            let direct = fb.net_n() / p.mass_kg;
            prop_assert!((a - direct).abs() <= 1e-12 * direct.abs().max(1e-3));

            let regen = if v > 0.0 { regen.min(p.p_regen_max_w / v) } else { regen };
            let fb = force_breakdown(&st, 0.0, regen, brake, &env, &p).unwrap();
            let d = decel_dynamics(&st, regen, brake, &env, &p).unwrap();
            let direct = fb.net_n() / p.mass_kg;
            prop_assert!((d - direct).abs() <= 1e-12 * direct.abs().max(1e-3));
        }

        #[test]
        fn optimal_decel_stays_in_envelope(v in 0.0f64..45.0, theta in -0.1f64..0.1) {
            let p = VehicleParams::default();
            let d = optimal_decel(&LongitudinalState::new(0.0, v, 0.0), &graded(theta), &p).unwrap();
            prop_assert!((0.5..=3.0).contains(&-d.accel_ms2));
        }
    }
}

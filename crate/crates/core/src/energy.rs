//! Power channels, trace integration and planner comparison.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::vehicle::{LongitudinalState, VehicleParams};

/// Lower edges of the `|a|` bins; the last bin is open.
pub const BIN_EDGES: [f64; 7] = [0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0];
pub const BINS: usize = BIN_EDGES.len();
/// Samples with `a < -DEADBAND` count as deceleration.
pub const DEADBAND: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
pub struct PowerSample {
    pub t: f64,
    pub s: f64,
    pub v: f64,
    pub a: f64,
    pub traction_power_w: f64,
    pub regen_power_w: f64,
    pub brake_dissipation_w: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
pub struct AccelHistogram {
    pub decel: [f64; BINS],
    pub accel: [f64; BINS],
}

impl AccelHistogram {
    pub fn total(&self) -> f64 {
        self.decel.iter().chain(&self.accel).sum()
    }

    pub fn bin_label(i: usize) -> String {
        use alloc::format;
        match BIN_EDGES.get(i + 1) {
            Some(hi) => format!("[{},{})", BIN_EDGES[i], hi),
            None => format!("[{},inf)", BIN_EDGES[i]),
        }
    }
}

fn bin_of(mag: f64) -> usize {
    BIN_EDGES.iter().rposition(|&e| mag >= e).unwrap_or(0)
}

#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
pub struct EnergyReport {
    pub traction_energy_j: f64,
    pub regen_energy_j: f64,
    pub brake_loss_j: f64,
    pub proxy_energy_j: f64,
    pub accel_histogram: AccelHistogram,
    pub distance_m: f64,
    pub duration_s: f64,
    /// Identity of the scenario the trace came from; empty when unknown.
    pub scenario_hash: String,
}

/// `P = F V`
pub fn instantaneous_power(f_total_n: f64, v: f64) -> f64 {
    f_total_n * v
}

/// `|a| |v|`
pub fn proxy_power(a: f64, v: f64) -> f64 {
    a.abs() * v.abs()
}

/// Splits a deceleration demand between passive recovery and the brakes.
/// Returns `(regen_w, brake_w)`.
pub fn regen_power(state: &LongitudinalState, commanded_decel: f64, p: &VehicleParams) -> (f64, f64) {
    let v = state.v_ms.max(0.0);
    let demand = commanded_decel.max(0.0);
    let mut regen_decel = if demand >= p.regen_decel_min_ms2 { demand.min(p.regen_decel_max_ms2) } else { 0.0 };
    if v > 0.0 {
        regen_decel = regen_decel.min(p.p_regen_max_w / (p.mass_kg * v));
    }
    if regen_decel < p.regen_decel_min_ms2 {
        regen_decel = 0.0;
    }
    let regen_w = p.mass_kg * regen_decel * v;
    let brake_w = p.mass_kg * (demand - regen_decel) * v;
    (regen_w, brake_w)
}

/// Sample from the net longitudinal force `m a + resistance`: positive net
/// force is traction, negative net force is a deceleration demand.
pub fn power_sample(t: f64, state: &LongitudinalState, resistance_n: f64, p: &VehicleParams, regen_efficiency: f64) -> PowerSample {
    let v = state.v_ms.max(0.0);
    let net = p.mass_kg * state.a_ms2 + resistance_n;
    let (traction, regen, brake) = if net >= 0.0 {
        (instantaneous_power(net, v), 0.0, 0.0)
    } else {
        let (r, b) = regen_power(state, -net / p.mass_kg, p);
        (0.0, r * regen_efficiency, b)
    };
    PowerSample { t, s: state.s_m, v, a: state.a_ms2, traction_power_w: traction, regen_power_w: regen, brake_dissipation_w: brake }
}

fn trapezoid(samples: &[PowerSample], f: impl Fn(&PowerSample) -> f64) -> f64 {
    samples.windows(2).map(|w| 0.5 * (f(&w[0]) + f(&w[1])) * (w[1].t - w[0].t)).sum()
}

pub fn histogram(samples: &[PowerSample]) -> AccelHistogram {
    let mut h = AccelHistogram::default();
    if samples.is_empty() {
        return h;
    }
    let unit = 1.0 / samples.len() as f64;
    for x in samples {
        if x.a < -DEADBAND {
            h.decel[bin_of(-x.a)] += unit;
        } else {
            h.accel[bin_of(x.a.max(0.0))] += unit;
        }
    }
    h
}

pub fn integrate_energy(samples: &[PowerSample]) -> Result<EnergyReport> {
    if samples.len() < 2 {
        return Err(Error::Degenerate("energy integration needs at least two samples".into()));
    }
    if samples.windows(2).any(|w| !(w[1].t > w[0].t)) {
        return Err(Error::domain("timestamps must be strictly increasing"));
    }
    let (first, last) = (&samples[0], &samples[samples.len() - 1]);
    Ok(EnergyReport {
        traction_energy_j: trapezoid(samples, |x| x.traction_power_w),
        regen_energy_j: trapezoid(samples, |x| x.regen_power_w),
        brake_loss_j: trapezoid(samples, |x| x.brake_dissipation_w),
        proxy_energy_j: trapezoid(samples, |x| proxy_power(x.a, x.v)),
        accel_histogram: histogram(samples),
        distance_m: last.s - first.s,
        duration_s: last.t - first.t,
        scenario_hash: String::new(),
    })
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
pub struct ChannelDelta {
    pub name: String,
    pub baseline: f64,
    pub candidate: f64,
    pub delta: f64,
    /// `candidate / baseline`; `None` when the baseline is zero.
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
pub struct BinDelta {
    pub baseline: f64,
    pub candidate: f64,
    pub delta_points: f64,
    /// Relative change `(candidate - baseline) / baseline`.
    pub relative_delta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
pub struct ReportComparison {
    pub scenario_hash: String,
    /// Distances agree within [`SAME_DISTANCE_M`]; otherwise compare the
    /// `*_per_m` channels.
    pub same_distance: bool,
    pub channels: Vec<ChannelDelta>,
    pub decel_bins: Vec<BinDelta>,
    pub accel_bins: Vec<BinDelta>,
    /// The `(0, 0.5)` deceleration bin.
    pub low_decel_bin: BinDelta,
}

/// Largest distance mismatch for which raw energies are comparable.
pub const SAME_DISTANCE_M: f64 = 1.0;

fn ratio(num: f64, den: f64) -> Option<f64> {
    (den != 0.0).then(|| num / den)
}

fn bin_delta(b: f64, c: f64) -> BinDelta {
    BinDelta { baseline: b, candidate: c, delta_points: 100.0 * (c - b), relative_delta: ratio(c - b, b) }
}

pub fn compare_reports(baseline: &EnergyReport, candidate: &EnergyReport) -> Result<ReportComparison> {
    if baseline.scenario_hash != candidate.scenario_hash {
        return Err(Error::ScenarioMismatch);
    }
    let pairs = [
        ("traction_energy_j", baseline.traction_energy_j, candidate.traction_energy_j),
        ("regen_energy_j", baseline.regen_energy_j, candidate.regen_energy_j),
        ("brake_loss_j", baseline.brake_loss_j, candidate.brake_loss_j),
        ("proxy_energy_j", baseline.proxy_energy_j, candidate.proxy_energy_j),
        ("distance_m", baseline.distance_m, candidate.distance_m),
        ("duration_s", baseline.duration_s, candidate.duration_s),
    ];
    let delta = |name: String, b: f64, c: f64| ChannelDelta { name, baseline: b, candidate: c, delta: c - b, ratio: ratio(c, b) };
    let mut channels: Vec<ChannelDelta> = pairs.iter().map(|&(name, b, c)| delta(name.into(), b, c)).collect();
    if baseline.distance_m > 0.0 && candidate.distance_m > 0.0 {
        for &(name, b, c) in &pairs[..4] {
            channels.push(delta(format!("{name}_per_m"), b / baseline.distance_m, c / candidate.distance_m));
        }
    }
    let same_distance = (baseline.distance_m - candidate.distance_m).abs() <= SAME_DISTANCE_M;
    let (hb, hc) = (&baseline.accel_histogram, &candidate.accel_histogram);
    let decel_bins: Vec<BinDelta> = (0..BINS).map(|i| bin_delta(hb.decel[i], hc.decel[i])).collect();
    let accel_bins = (0..BINS).map(|i| bin_delta(hb.accel[i], hc.accel[i])).collect();
    Ok(ReportComparison { scenario_hash: baseline.scenario_hash.clone(), same_distance, low_decel_bin: decel_bins[0], channels, decel_bins, accel_bins })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn at(t: f64, p: f64) -> PowerSample {
        PowerSample { t, traction_power_w: p, ..Default::default() }
    }

    #[test]
    fn power_examples() {
        assert_eq!(instantaneous_power(0.0, 12.0), 0.0);
        assert_eq!(instantaneous_power(1000.0, 20.0), 20_000.0);
        assert_eq!(instantaneous_power(2000.0, 40.0), 4.0 * instantaneous_power(1000.0, 20.0));
        assert_eq!(proxy_power(0.0, 10.0), 0.0);
        assert_eq!(proxy_power(-2.0, 10.0), 20.0);
        assert_eq!(proxy_power(2.0, 10.0), proxy_power(-2.0, 10.0));
    }

    #[test]
    fn constant_and_ramp_integrals() {
        let c: Vec<_> = (0..=10).map(|k| at(k as f64, 10_000.0)).collect();
        assert_eq!(integrate_energy(&c).unwrap().traction_energy_j, 100_000.0);
        let r = [at(0.0, 0.0), at(1.0, 1.0)];
        assert_eq!(integrate_energy(&r).unwrap().traction_energy_j, 0.5);
        assert!(matches!(integrate_energy(&r[..1]), Err(Error::Degenerate(_))));
        assert!(integrate_energy(&[at(1.0, 0.0), at(1.0, 1.0)]).is_err());
    }

    #[test]
    fn sine_power_against_antiderivative() {
        // P(t) = 1000 (1 + sin t) on [0, 10]
        let dt = 0.01;
        let xs: Vec<_> = (0..=1000).map(|k| k as f64 * dt).map(|t| at(t, 1000.0 * (1.0 + libm::sin(t)))).collect();
        let exact = 1000.0 * (10.0 + 1.0 - libm::cos(10.0));
        let got = integrate_energy(&xs).unwrap().traction_energy_j;
        assert!(((got - exact) / exact).abs() <= 1e-3);
    }

    #[test]
    fn regen_envelope() {
        let p = VehicleParams::default();
        let st = LongitudinalState::new(0.0, 10.0, 0.0);
        assert_eq!(regen_power(&st, 0.3, &p), (0.0, 1500.0 * 0.3 * 10.0));
        let (r, b) = regen_power(&st, 3.5, &p);
        assert!((r - 45_000.0).abs() < 1e-9);
        assert!((b - 1500.0 * 0.5 * 10.0).abs() < 1e-9);
        let still = LongitudinalState::new(0.0, 0.0, 0.0);
        assert_eq!(regen_power(&still, 2.0, &p).0, 0.0);
        // the power cap binds at high speed
        let fast = LongitudinalState::new(0.0, 25.0, 0.0);
        let (r, b) = regen_power(&fast, 3.0, &p);
        assert!((r - p.p_regen_max_w).abs() < 1e-9);
        assert!((r + b - 1500.0 * 3.0 * 25.0).abs() < 1e-6);
    }

    proptest! {
        #[test]
        fn regen_is_continuous_above_threshold(v in 0.1f64..30.0, d in 0.5f64..6.0, h in 1e-9f64..1e-6) {
            let p = VehicleParams::default();
            let st = LongitudinalState::new(0.0, v, 0.0);
            let (r0, _) = regen_power(&st, d, &p);
            let (r1, _) = regen_power(&st, d + h, &p);
            prop_assert!((r1 - r0).abs() <= p.mass_kg * v * h * 1.0001);
        }

        #[test]
        fn channels_are_exclusive(v in 0.0f64..30.0, a in -8.0f64..3.0, r in 0.0f64..1500.0) {
            let p = VehicleParams::default();
            let x = power_sample(0.0, &LongitudinalState::new(0.0, v, a), r, &p, 1.0);
            prop_assert_eq!(x.traction_power_w * x.regen_power_w, 0.0);
            prop_assert!(x.traction_power_w >= 0.0 && x.regen_power_w >= 0.0 && x.brake_dissipation_w >= 0.0);
            let net = p.mass_kg * a + r;
            prop_assert!((x.traction_power_w - x.regen_power_w - x.brake_dissipation_w - net * v).abs() <= 1e-6 * (1.0 + (net * v).abs()));
        }

        #[test]
        fn integration_is_additive(ps in proptest::collection::vec((0.01f64..1.0, 0.0f64..1e4, -4.0f64..4.0), 3..40), cut in 1usize..38) {
            let mut t = 0.0;
            let xs: Vec<_> = ps.iter().map(|&(dt, pw, a)| { t += dt; PowerSample { t, a, v: 5.0, traction_power_w: pw, ..Default::default() } }).collect();
            let cut = cut.min(xs.len() - 2);
            let whole = integrate_energy(&xs).unwrap();
            let a = integrate_energy(&xs[..=cut]).unwrap();
            let b = integrate_energy(&xs[cut..]).unwrap();
            prop_assert!((whole.traction_energy_j - a.traction_energy_j - b.traction_energy_j).abs() <= 1e-9 * (1.0 + whole.traction_energy_j));
            prop_assert!((whole.proxy_energy_j - a.proxy_energy_j - b.proxy_energy_j).abs() <= 1e-9 * (1.0 + whole.proxy_energy_j));
            prop_assert!((whole.accel_histogram.total() - 1.0).abs() <= 1e-9);

            let shifted: Vec<_> = xs.iter().map(|x| PowerSample { t: x.t + 123.25, ..*x }).collect();
            prop_assert_eq!(integrate_energy(&shifted).unwrap().accel_histogram, whole.accel_histogram);
        }
    }

    #[test]
    fn histogram_bins() {
        let xs: Vec<_> = [-0.2, -0.7, -3.5, 0.0, 0.6, -0.0005]
            .iter()
            .enumerate()
            .map(|(k, &a)| PowerSample { t: k as f64, a, ..Default::default() })
            .collect();
        let h = histogram(&xs);
        let u = 1.0 / 6.0;
        assert_eq!(h.decel[0], u);
        assert_eq!(h.decel[1], u);
        assert_eq!(h.decel[6], u);
        assert_eq!(h.accel[0], 2.0 * u);
        assert_eq!(h.accel[1], u);
        assert_eq!(AccelHistogram::bin_label(0), "[0,0.5)");
        assert_eq!(AccelHistogram::bin_label(6), "[3,inf)");
    }

    #[test]
    fn comparison() {
        let mut a = EnergyReport { regen_energy_j: 10.0, scenario_hash: "x".into(), ..Default::default() };
        a.accel_histogram.decel[0] = 0.30;
        let same = compare_reports(&a, &a).unwrap();
        assert!(same.channels.iter().all(|c| c.delta == 0.0));
        assert_eq!(same.low_decel_bin.delta_points, 0.0);

        let mut b = a.clone();
        b.accel_histogram.decel[0] = 0.1826;
        b.regen_energy_j = 15.0;
        let c = compare_reports(&a, &b).unwrap();
        assert!((c.low_decel_bin.delta_points + 11.74).abs() < 1e-9);
        let regen = c.channels.iter().find(|c| c.name == "regen_energy_j").unwrap();
        assert_eq!(regen.ratio, Some(1.5));

        b.scenario_hash = "y".into();
        assert_eq!(compare_reports(&a, &b).unwrap_err(), Error::ScenarioMismatch);
    }
}

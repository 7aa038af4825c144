use ecoplan_core::energy;
use ecoplan_core::error::Error;
use ecoplan_core::sim::{self, fixtures, Event, EventAction, PlannerKind, Scenario};
use ecoplan_core::vehicle;

fn v_opt(sc: &Scenario) -> f64 {
    vehicle::optimal_cruise_speed(0.0, &sc.env, &sc.vehicle).unwrap().v_ms
}

#[test]
fn empty_road_holds_v_opt() {
    let mut sc = fixtures::free_flow_cruise();
    let v = v_opt(&sc);
    sc.initial.v_ms = v;
    sc.duration_s = 30.0;
    let run = sim::run_closed_loop(&sc, PlannerKind::Ehmpp).unwrap();
    for k in run.trace.ticks.iter().filter(|k| k.t >= 2.0) {
        assert!((k.v - v).abs() <= 0.02 * v, "t={} v={} v_opt={v}", k.t, k.v);
    }
}

#[test]
fn stops_before_wall() {
    let sc = fixtures::stop_wall();
    for k in [PlannerKind::Baseline, PlannerKind::Ehmpp] {
        let run = sim::run_closed_loop(&sc, k).unwrap();
        let last = run.trace.ticks.last().unwrap();
        assert!(last.s + sc.footprint.half_length_m < 200.0, "{k:?} s={}", last.s);
        assert!(last.v <= 1e-6, "{k:?} v={}", last.v);
        assert!(!run.trace.flagged);
    }
}

#[test]
fn identical_runs_are_bit_identical() {
    let mut sc = fixtures::busy_traffic();
    sc.duration_s = 20.0;
    sc.planner.jitter_lattice = true;
    let a = sim::run_closed_loop(&sc, PlannerKind::Ehmpp).unwrap();
    let b = sim::run_closed_loop(&sc, PlannerKind::Ehmpp).unwrap();
    assert_eq!(format!("{:?}", a), format!("{:?}", b));
    let dt = sc.plant_dt_s;
    for w in a.trace.ticks.windows(2) {
        assert!((w[1].t - w[0].t - dt).abs() < 1e-9 || w[1] == *a.trace.ticks.last().unwrap());
    }
    assert!(a.trace.ticks.iter().all(|k| k.v >= 0.0));
}

#[test]
fn empty_road_has_nothing_to_recover() {
    let cmp = sim::run_comparison(&fixtures::empty_short_road()).unwrap();
    let c = cmp.comparison.unwrap();
    let regen = c.channels.iter().find(|d| d.name == "regen_energy_j").unwrap();
    assert!(regen.delta.abs() <= 1e-6, "{regen:?}");
    assert!(c.same_distance);
}

#[test]
fn hash_mismatch_is_rejected() {
    let sc = fixtures::empty_short_road();
    let a = sim::run_closed_loop(&sc, PlannerKind::Baseline).unwrap();
    let mut other = a.report.clone();
    other.scenario_hash.push('x');
    assert!(matches!(energy::compare_reports(&a.report, &other), Err(Error::ScenarioMismatch)));
}

#[test]
fn straight_empty_road_keeps_zero_offset() {
    let sc = fixtures::empty_short_road();
    for k in [PlannerKind::Baseline, PlannerKind::Ehmpp] {
        let run = sim::run_closed_loop(&sc, k).unwrap();
        let max_l = run.trace.ticks.iter().map(|t| t.l.abs()).fold(0.0, f64::max);
        assert!(max_l <= 1e-6, "{k:?}: {max_l}");
        for p in &run.trace.plans {
            assert!(p.path.iter().all(|q| q[1].abs() <= 1e-6), "{k:?} plan at t={}", p.t);
        }
    }
}

#[test]
fn baseline_cruises_at_the_limit() {
    let sc = fixtures::free_flow_cruise();
    let base = sim::run_closed_loop(&sc, PlannerKind::Baseline).unwrap();
    let eco = sim::run_closed_loop(&sc, PlannerKind::Ehmpp).unwrap();
    let end = |r: &sim::SimRun| r.trace.ticks.last().unwrap().v;
    assert!((end(&base) - sc.target_speed_ms).abs() < 0.05);
    assert!((end(&eco) - v_opt(&sc)).abs() < 0.05);
}

#[test]
fn obstacle_free_runs_balance_energy() {
    for sc in [fixtures::empty_short_road(), fixtures::stop_wall()] {
        for k in [PlannerKind::Baseline, PlannerKind::Ehmpp] {
            let run = sim::run_closed_loop(&sc, k).unwrap();
            let audit = sim::energy_audit(&sc, &run.trace).unwrap();
            assert!(audit.relative <= 0.02, "{} {k:?}: {audit:?}", sc.name);
        }
    }
}

#[test]
fn repeated_infeasibility_triggers_emergency_stop() {
    let mut sc = fixtures::stop_wall();
    sc.events = vec![Event { at_time_s: Some(0.0), at_position_m: None, action: EventAction::StopWall { position_m: 10.0 } }];
    sc.duration_s = 6.0;
    let run = sim::run_closed_loop(&sc, PlannerKind::Ehmpp).unwrap();
    assert!(run.trace.flagged);
    assert!(run.trace.emergency_stops >= 1);
    assert!(run.trace.cycles.iter().any(|c| c.emergency_stop && c.error.is_some()));
    let first = run.trace.cycles.iter().find(|c| c.emergency_stop).unwrap().t;
    let braking = run.trace.ticks.iter().filter(|k| k.t >= first && k.t < first + sc.replan_dt_s - 1e-9);
    for k in braking {
        let limit = vehicle::max_stopping_decel(&vehicle::LongitudinalState::new(k.s, k.v, 0.0), &sc.env, &sc.vehicle).unwrap();
        assert!(k.v == 0.0 || (k.a + limit).abs() <= 1e-9, "t={} a={} limit={limit}", k.t, k.a);
    }
}

use std::collections::BTreeSet;

use super::*;
use crate::event_log::{parse_log_str, Event, MultiEntityLog};
use crate::lp::{apply_solution, generate_constraints, solve_propagation};
use crate::pqr_model::tests::baggage;
use crate::pqr_model::{parse_model, PqrSystem};
use crate::replay::replay_log;
use crate::replay::tests::{COMPLETE, PARTIAL};
use crate::restore::{oracle_o1, oracle_o2};
use crate::time::{Millis, MINUTE};
use crate::RepairMode;
use proptest::prelude::*;

const COMPLETE_SCENARIO: &str = include_str!("../../fixtures/scenarios/baggage.json");
const LINE7: &str = include_str!("../../fixtures/line7.json");
const ZERO_SLACK: &str = include_str!("../../fixtures/scenarios/line7_zero_slack.json");

fn line7() -> PqrSystem {
    parse_model(LINE7).unwrap()
}

fn rows(log: &MultiEntityLog) -> BTreeSet<(String, String, Millis, Option<String>, Option<String>)> {
    log.events()
        .iter()
        .map(|e| (e.pid.clone().unwrap(), e.act.clone(), e.time.unwrap(), e.rid.clone(), e.qid.clone()))
        .collect()
}

fn sensors(labels: &[&str]) -> BTreeSet<String> {
    labels.iter().map(|s| s.to_string()).collect()
}

fn one_case(pid: &str, source: &str, at_ms: Millis) -> Scenario {
    Scenario {
        origin: "2020-01-01T00:00:00Z".into(),
        horizon_ms: 10 * MINUTE,
        arrivals: Vec::new(),
        cases: vec![CaseSpec {
            pid: pid.into(),
            source: source.into(),
            at_ms,
            route: Vec::new(),
        }],
        routing: Default::default(),
        slack: Slack::default(),
        blockages: Vec::new(),
    }
}

fn repaired(sys: &PqrSystem, partial: &MultiEntityLog, mode: RepairMode) -> MultiEntityLog {
    let run = oracle_o2(&oracle_o1(partial, sys).unwrap(), sys).unwrap();
    let sol = solve_propagation(&generate_constraints(&run, sys).unwrap());
    assert!(sol.feasible, "{:?}", sol.culprits);
    apply_solution(&run, &sol, mode).unwrap()
}

#[test]
fn baggage_scenario_reproduces_the_complete_fixture() {
    let sys = baggage();
    let out = simulate_detailed(&sys, &Scenario::from_json(COMPLETE_SCENARIO).unwrap(), 0).unwrap();
    assert_eq!(out.tie_shifts, 0);
    assert_eq!(rows(&out.log), rows(&parse_log_str(COMPLETE).unwrap()));
}

#[test]
fn no_arrivals_gives_an_empty_log() {
    let mut sc = one_case("1", "c1_s", 0);
    sc.cases.clear();
    assert!(simulate(&line7(), &sc, 7).unwrap().is_empty());
}

#[test]
fn scenario_rejects_unknown_names() {
    let sys = line7();
    let mut sc = one_case("1", "m1_s", 0);
    assert!(matches!(simulate(&sys, &sc, 0), Err(SimError::Scenario(_))));
    sc.cases[0].source = "c1_s".into();
    sc.blockages.push(Blockage {
        queue: "nowhere".into(),
        start_ms: 0,
        duration_ms: 1,
    });
    assert!(matches!(simulate(&sys, &sc, 0), Err(SimError::Scenario(_))));
    assert!(Scenario::from_json(r#"{"horizon_ms": 1, "bogus": 2}"#).is_err());
}

#[test]
fn scenario_json_round_trips() {
    let sc = Scenario::from_json(ZERO_SLACK).unwrap();
    assert_eq!(Scenario::from_json(&sc.to_json()).unwrap(), sc);
}

#[test]
fn blockage_holds_dequeues_until_it_ends() {
    let sys = line7();
    let free = simulate(&sys, &one_case("1", "c3_s", 0), 0).unwrap();
    let d_free = free.events().iter().find(|e| e.act == "d_s").unwrap().time.unwrap();
    let mut sc = one_case("1", "c3_s", 0);
    sc.blockages.push(Blockage {
        queue: "m2:d".into(),
        start_ms: 0,
        duration_ms: 5 * MINUTE,
    });
    let blocked = simulate(&sys, &sc, 0).unwrap();
    let d_blocked = blocked.events().iter().find(|e| e.act == "d_s").unwrap().time.unwrap();
    assert!(d_free < 5 * MINUTE + sc.origin_ms().unwrap());
    assert_eq!(d_blocked, sc.origin_ms().unwrap() + 5 * MINUTE);
}

#[test]
fn same_seed_same_log() {
    let sys = line7();
    let sc = Scenario::from_json(include_str!("../../fixtures/scenarios/line7_blockage.json")).unwrap();
    let a = simulate(&sys, &sc, 11).unwrap();
    assert_eq!(rows(&a), rows(&simulate(&sys, &sc, 11).unwrap()));
    assert_ne!(rows(&a), rows(&simulate(&sys, &sc, 12).unwrap()));
}

#[test]
fn zero_slack_scenario_is_congestion_free() {
    let sys = line7();
    let sc = Scenario::from_json(ZERO_SLACK).unwrap();
    let out = simulate_detailed(&sys, &sc, 3).unwrap();
    assert_eq!(out.tie_shifts, 0);
    assert!(replay_log(&sys, &out.log).unwrap().accepted);
}

#[test]
fn partialize_keeps_sensors_and_boundaries() {
    let truth = parse_log_str(COMPLETE).unwrap();
    let partial_fixture = parse_log_str(PARTIAL).unwrap();
    let p = partialize(
        &truth,
        &sensors(&["m3_s", "m4_s", "d1_s", "d2_s", "s1_s", "s2_s", "c3_c", "c4_c"]),
        true,
    )
    .unwrap();
    let ids: BTreeSet<&str> = p.events().iter().map(|e| e.event_id.as_str()).collect();
    let want: BTreeSet<&str> = partial_fixture.events().iter().map(|e| e.event_id.as_str()).collect();
    // The partial fixture also drops m4_s of case 50 and d1_s of case 51,
    // which no per-label sensor set can do.
    assert!(want.is_subset(&ids));
    assert_eq!(ids.difference(&want).copied().collect::<Vec<_>>(), ["e3", "e9"]);
    assert!(p.events().iter().all(|e| e.rid.is_none() && e.qid.is_none()));

    let none = partialize(&truth, &BTreeSet::new(), true).unwrap();
    let ends: BTreeSet<&str> = none.events().iter().map(|e| e.event_id.as_str()).collect();
    assert_eq!(ends, BTreeSet::from(["e0", "e18", "e17", "e19"]));
    assert_eq!(partialize(&truth, &BTreeSet::new(), false), Err(SimError::EmptyCase("50".into())));

    let all: BTreeSet<String> = truth.events().iter().map(|e| e.act.clone()).collect();
    assert_eq!(partialize(&truth, &all, false).unwrap().len(), truth.len());
}

#[test]
fn complete_observation_has_zero_error() {
    let sys = baggage();
    let truth = parse_log_str(COMPLETE).unwrap();
    let rep = repaired(&sys, &truth, RepairMode::Interval);
    let m = evaluate(&rep, &truth).unwrap();
    assert_eq!((m.count, m.mae, m.rmse, m.containment), (0, 0.0, 0.0, 1.0));
}

#[test]
fn partial_fixture_error_is_relative_to_case_service_and_queue_time() {
    let sys = baggage();
    let truth = parse_log_str(COMPLETE).unwrap();
    let rep = repaired(&sys, &parse_log_str(PARTIAL).unwrap(), RepairMode::Interval);
    let m = evaluate(&rep, &truth).unwrap();
    assert_eq!(m.count, 8);
    assert_eq!(m.containment, 1.0);
    assert!(m.mae <= m.rmse && m.rmse <= m.max_error);
    // Case 50: c3:m3 15 s, m3 10 s, m3:m4 5 s, m4 5 s, m4:d1 15 s, d1 5 s, d1:s1 5 s.
    for e in m.events.iter().filter(|e| e.pid == "50") {
        let width = (e.tmax - e.truth).abs().max((e.tmin - e.truth).abs()) as f64;
        assert!((e.error - width / 60_000.0).abs() < 1e-12, "{e:?}");
    }
    // Without parameters in the repaired log there is nothing to normalize by.
    assert!(matches!(evaluate(&truth, &truth), Err(SimError::MissingParameters(_))));
}

#[test]
fn load_counts_cases_in_every_window_they_overlap() {
    let log = parse_log_str(COMPLETE).unwrap();
    // m4_c -> d1_s: case 50 09:00:50-09:01:05, case 51 09:01:00-09:01:15.
    let s = load_series(&log, "m4_c", "d1_s", MINUTE).unwrap();
    assert_eq!(s.values, [1.0, 2.0]);
    assert_eq!(s.peak(), Some(1));
    let s = load_series(&log, "m4_c", "d1_s", 30_000).unwrap();
    assert_eq!(s.values, [2.0, 4.0]);
    assert!(s.to_csv().starts_with("window_start,items_per_minute\n2020-01-01T09:00:30"));
    assert_eq!(load_series(&log, "m4_c", "nope", MINUTE), Err(SimError::UnknownLabel("nope".into())));
    let empty = MultiEntityLog::new(Vec::<Event>::new(), crate::event_log::EntityType::ALL).unwrap();
    assert!(load_series(&empty, "a", "b", MINUTE).unwrap().values.is_empty());
}

#[test]
fn identical_logs_have_zero_load_error() {
    let log = parse_log_str(COMPLETE).unwrap();
    let c = compare_load(&log, &log, "c4_c", "s2_s", MINUTE).unwrap();
    assert_eq!((c.mae_pct, c.rmse_pct, c.max_load), (0.0, 0.0, 1.0));
}

#[test]
fn spectrum_lists_segment_occurrences() {
    let log = parse_log_str(COMPLETE).unwrap();
    let seg = parse_segment("m4_c:d1_s").unwrap();
    let csv = spectrum_export(&log, &[seg]).unwrap();
    assert_eq!(
        csv,
        "pid,segment,t_start,t_end\n\
         50,m4_c:d1_s,2020-01-01T09:00:50.000Z,2020-01-01T09:01:05.000Z\n\
         51,m4_c:d1_s,2020-01-01T09:01:00.000Z,2020-01-01T09:01:15.000Z\n"
    );
    assert!(parse_segment("m4_c").is_err());
    assert!(parse_segment(":x").is_err());
}

#[test]
fn spectrum_of_repaired_log_has_interval_columns() {
    let sys = baggage();
    let rep = repaired(&sys, &parse_log_str(PARTIAL).unwrap(), RepairMode::Interval);
    let csv = spectrum_export(&rep, &[("m4_c".into(), "d1_s".into())]).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "pid,segment,t_start,t_end,tmin_start,tmax_start,tmin_end,tmax_end");
    assert_eq!(lines.count(), 2);
}

#[test]
fn point_times_order_cases_that_meet_unobserved() {
    // Case 1 joins m2 from c3 and must go before the packed m1 cases,
    // though at their upper bounds it would come after the first of them.
    let sc = Scenario::from_json(
        r#"{"origin": "2020-01-01T00:00:00Z", "horizon_ms": 1800000,
            "arrivals": [
              {"source": "c1_s", "interval_ms": 1000, "jitter_ms": 1, "offset_ms": 11090, "count": 3},
              {"source": "c2_s", "interval_ms": 1000, "jitter_ms": 1, "offset_ms": 8938, "count": 1},
              {"source": "c3_s", "interval_ms": 1000, "jitter_ms": 1, "count": 1}],
            "routing": {"d": {"d_c@d:s": 0.5925513415406369, "d_c@d:x2": 0.4074486594593631}},
            "slack": {"resource": 0.040863446706187426, "queue": 0.1430340678536411},
            "blockages": [{"queue": "m2:d", "start_ms": 0, "duration_ms": 47229}]}"#,
    )
    .unwrap();
    let sys = line7();
    let truth = simulate(&sys, &sc, 15471365774278386382).unwrap();
    let partial = partialize(&truth, &sensors(&["m1_c"]), true).unwrap();
    for mode in [RepairMode::Tmin, RepairMode::Tmax] {
        let rep = repaired(&sys, &partial, mode);
        assert!(replay_log(&sys, &rep).unwrap().accepted, "{mode:?}");
        assert_eq!(evaluate(&rep, &truth).unwrap().containment, 1.0);
    }
}

fn arb_scenario() -> impl Strategy<Value = (Scenario, u64)> {
    let stream = (1_000i64..40_000, 0i64..20_000, 0i64..30_000, 1usize..6);
    (
        proptest::collection::vec(stream, 1..=3),
        (0.0f64..0.5, 0.0f64..0.5),
        proptest::option::of((0i64..120_000, 0i64..120_000)),
        0.0f64..1.0,
        any::<u64>(),
    )
        .prop_map(|(streams, (resource, queue), block, split, seed)| {
            let sources = ["c1_s", "c2_s", "c3_s"];
            let sc = Scenario {
                origin: "2020-01-01T00:00:00Z".into(),
                horizon_ms: 30 * MINUTE,
                arrivals: streams
                    .into_iter()
                    .enumerate()
                    .map(|(k, (interval_ms, jitter_ms, offset_ms, count))| ArrivalStream {
                        source: sources[k].into(),
                        interval_ms,
                        jitter_ms,
                        offset_ms,
                        count: Some(count),
                    })
                    .collect(),
                cases: Vec::new(),
                routing: [(
                    "d".to_string(),
                    [("d_c@d:s".to_string(), split), ("d_c@d:x2".to_string(), 1.0 - split + 1e-9)].into(),
                )]
                .into(),
                slack: Slack {
                    service: 0.0,
                    resource,
                    queue,
                },
                blockages: block
                    .map(|(start_ms, duration_ms)| Blockage {
                        queue: "m2:d".into(),
                        start_ms,
                        duration_ms,
                    })
                    .into_iter()
                    .collect(),
            };
            (sc, seed)
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn simulated_logs_replay((sc, seed) in arb_scenario()) {
        let sys = line7();
        let log = simulate(&sys, &sc, seed).unwrap();
        let expected: usize = sc.arrivals.iter().map(|a| a.count.unwrap()).sum();
        prop_assert_eq!(log.ids(crate::event_log::EntityType::Pid).len(), expected);
        let replay = replay_log(&sys, &log).unwrap();
        prop_assert!(replay.accepted, "{:?}", replay.diagnostics());
    }

    #[test]
    fn repaired_intervals_contain_the_truth((sc, seed) in arb_scenario()) {
        let sys = line7();
        let truth = simulate(&sys, &sc, seed).unwrap();
        let partial = partialize(&truth, &sensors(&["m2_s", "s_s"]), true).unwrap();
        let rep = repaired(&sys, &partial, RepairMode::Interval);
        let m = evaluate(&rep, &truth).unwrap();
        prop_assert_eq!(m.containment, 1.0);
        prop_assert!(m.mae <= m.rmse + 1e-12);
    }

    #[test]
    fn point_logs_replay(
        (sc, seed) in arb_scenario(),
        chosen in proptest::sample::subsequence(
            vec!["c1_c", "c2_c", "c3_c", "m1_s", "m1_c", "m2_s", "m2_c", "d_s", "d_c", "s_s", "s_c"],
            0..=4,
        ),
    ) {
        let sys = line7();
        let truth = simulate(&sys, &sc, seed).unwrap();
        let partial = partialize(&truth, &sensors(&chosen), true).unwrap();
        for mode in [RepairMode::Tmin, RepairMode::Tmax] {
            let rep = repaired(&sys, &partial, mode);
            let replay = replay_log(&sys, &rep).unwrap();
            prop_assert!(replay.accepted, "{:?} {:?}", mode, replay.diagnostics());
            let m = evaluate(&rep, &truth).unwrap();
            prop_assert_eq!(m.containment, 1.0);
        }
    }
}

use super::*;
use crate::event_log::{derive_system_run, parse_log_str};
use crate::pqr_model::tests::baggage;
use crate::replay::tests::{COMPLETE, PARTIAL};
use crate::replay::{replay_trace, Net};
use proptest::prelude::*;

fn acts(c: &CompletedTrace) -> Vec<&str> {
    c.steps.iter().map(|s| s.event.act.as_str()).collect()
}

fn restore(text: &str) -> IntermediateRun {
    let sys = baggage();
    let log = parse_log_str(text).unwrap();
    oracle_o2(&oracle_o1(&log, &sys).unwrap(), &sys).unwrap()
}

#[test]
fn partial_fixture_cases_are_completed() {
    let sys = baggage();
    let done = oracle_o1(&parse_log_str(PARTIAL).unwrap(), &sys).unwrap();
    assert!(done.warnings.is_empty(), "{:?}", done.warnings);
    assert_eq!(
        acts(&done.traces[0]),
        ["c3_c", "m3_s", "m3_c", "m4_s", "m4_c", "d1_s", "d1_c", "s1_s"]
    );
    assert_eq!(
        acts(&done.traces[1]),
        ["c4_c", "m4_s", "m4_c", "d1_s", "d1_c", "d2_s", "d2_c", "s2_s"]
    );
    let observed: Vec<_> = done.traces[0].steps.iter().filter(|s| s.observed).map(|s| s.event.event_id.as_str()).collect();
    assert_eq!(observed, ["e0", "e1", "e7", "e18"]);
    assert_eq!(done.traces[0].steps[2].event.event_id, "u:50:2");
}

#[test]
fn complete_trace_is_unchanged() {
    let sys = baggage();
    let log = parse_log_str(COMPLETE).unwrap();
    let done = oracle_o1(&log, &sys).unwrap();
    for trace in &done.traces {
        assert!(trace.steps.iter().all(|s| s.observed));
        let expected: Vec<_> = log.correlated(EntityType::Pid, &trace.pid).map(|e| e.clone()).collect();
        let got: Vec<_> = trace.steps.iter().map(|s| s.event.clone()).collect();
        assert_eq!(got, expected);
    }
}

#[test]
fn unobserved_merge_steps_are_restored() {
    let text = "event_id,pid,activity,time\n\
                f1,53,c1_s,2020-01-01T09:00:00Z\n\
                f7,53,m4_s,2020-01-01T09:02:00Z\n\
                f9,53,d1_s,2020-01-01T09:02:30Z\n\
                f10,53,s1_s,2020-01-01T09:03:00Z\n";
    let run = restore(text);
    let theta: Vec<_> = run
        .start_subtrace("53")
        .unwrap()
        .into_iter()
        .map(|i| run.events()[i].act.as_str())
        .collect();
    assert_eq!(theta, ["c1_s", "m2_s", "m3_s", "m4_s", "d1_s", "s1_s"]);
    let restored: Vec<_> = run.events().iter().zip(run.annotations()).filter(|(_, a)| !a.observed).collect();
    assert!(restored.iter().all(|(e, _)| e.time.is_none() && e.tmin.is_none() && e.tmax.is_none()));
}

#[test]
fn start_subtrace_of_the_complete_fixture() {
    let run = restore(COMPLETE);
    let ids: Vec<_> = run
        .start_subtrace("50")
        .unwrap()
        .into_iter()
        .map(|i| run.events()[i].event_id.as_str())
        .collect();
    assert_eq!(ids, ["e0", "e1", "e3", "e7", "e18"]);
}

#[test]
fn entry_and_exit_pair_gives_two_starts() {
    let roles = [Role::Atomic, Role::Atomic];
    let ids = ["a".to_string(), "b".to_string()];
    assert_eq!(start_subtrace("1", &[0usize, 1], |i| roles[i], |i| &ids[i]).unwrap(), vec![0, 1]);
    let roles = [Role::Start, Role::Start];
    assert!(matches!(
        start_subtrace("1", &[0usize, 1], |i| roles[i], |i| &ids[i]),
        Err(RestoreError::Alternation { .. })
    ));
}

#[test]
fn annotations_follow_bindings() {
    let run = restore(PARTIAL);
    let find = |pid: &str, act: &str| {
        let i = run
            .events()
            .iter()
            .position(|e| e.pid.as_deref() == Some(pid) && e.act == act)
            .unwrap();
        (&run.events()[i], run.annotation(i))
    };
    let (e4, a4) = find("50", "m4_c");
    assert_eq!((e4.rid.as_deref(), e4.qid.as_deref()), (Some("m4"), Some("m4:d1")));
    assert_eq!((a4.tsr, a4.twr, a4.role), (5_000, 5_000, Role::Complete));
    let (e0, a0) = find("50", "c3_c");
    assert_eq!((e0.rid.as_deref(), a0.tsr, a0.twr), (None, 0, 0));
    let (_, a1) = find("50", "m3_s");
    assert_eq!((a1.qid_in.as_deref(), a1.twq), (Some("c3:m3"), 15_000));
}

#[test]
fn observed_resource_and_queue_edges() {
    let run = restore(PARTIAL);
    let typed: Vec<_> = run.order().edge_ids().filter(|e| e.2 != EntityType::Pid).collect();
    assert_eq!(
        typed,
        [("e0", "e1", EntityType::Qid, "c3:m3"), ("e17", "e5", EntityType::Qid, "c4:m4")]
    );
    let two_cases = "event_id,pid,activity,time\n\
                     f1,53,c3_c,2020-01-01T09:00:00Z\nf9,53,d1_s,2020-01-01T09:01:00Z\nf10,53,s1_s,2020-01-01T09:02:00Z\n\
                     f11,54,c4_c,2020-01-01T09:00:10Z\nf16,54,d1_s,2020-01-01T09:01:30Z\nf17,54,s2_s,2020-01-01T09:03:00Z\n";
    let run = restore(two_cases);
    assert!(run.order().edge_ids().any(|e| e == ("f9", "f16", EntityType::Rid, "d1")));
    assert!(run.order().is_strict_partial_order());
}

#[test]
fn order_on_complete_log_equals_its_run() {
    let log = parse_log_str(COMPLETE).unwrap();
    let run = restore(COMPLETE);
    let mut want: Vec<_> = derive_system_run(&log)
        .unwrap()
        .edge_ids()
        .map(|(a, b, et, id)| (a.to_string(), b.to_string(), et, id.to_string()))
        .collect();
    let mut got: Vec<_> = run
        .order()
        .edge_ids()
        .map(|(a, b, et, id)| (a.to_string(), b.to_string(), et, id.to_string()))
        .collect();
    want.sort();
    got.sort();
    assert_eq!(got, want);
}

#[test]
fn named_errors() {
    let sys = baggage();
    let missing_exit = "event_id,pid,activity,time\na,1,c3_c,1000\nb,1,m3_s,20000\n";
    assert!(matches!(
        oracle_o1(&parse_log_str(missing_exit).unwrap(), &sys),
        Err(RestoreError::NotExit { .. })
    ));
    let missing_entry = "event_id,pid,activity,time\na,1,m3_s,1000\nb,1,s1_s,20000\n";
    assert!(matches!(
        oracle_o1(&parse_log_str(missing_entry).unwrap(), &sys),
        Err(RestoreError::NotEntry { .. })
    ));
    let unknown = "event_id,pid,activity,time\na,1,c3_c,1000\nb,1,zz,20000\n";
    assert!(matches!(
        oracle_o1(&parse_log_str(unknown).unwrap(), &sys),
        Err(RestoreError::UnknownLabel { .. })
    ));
    let backwards = "event_id,pid,activity,time\na,1,c3_c,1000\nb,1,d1_s,2000\nc,1,m3_s,3000\nd,1,s1_s,4000\n";
    assert!(matches!(
        oracle_o1(&parse_log_str(backwards).unwrap(), &sys),
        Err(RestoreError::NoPath { .. })
    ));
}

#[test]
fn csv_dump_has_annotation_columns() {
    let csv = restore(PARTIAL).to_csv();
    let header = csv.lines().next().unwrap();
    assert_eq!(header, "event_id,pid,activity,time,rid,qid,observed,role,tsr,twq,twr");
    assert!(csv.contains("u:50:2,50,m3_c,,m3,m3:m4,false,complete,10000,0,5000"), "{csv}");
}

/// Observed subsequences of random source-to-sink paths.
fn arb_partial() -> impl Strategy<Value = Vec<String>> {
    let sys = baggage();
    let sources: Vec<usize> = (0..sys.transition_count()).filter(|&t| sys.is_source(t)).collect();
    (0..sources.len(), proptest::collection::vec(any::<u8>(), 12), proptest::collection::vec(any::<bool>(), 12)).prop_map(
        move |(s, choices, keep)| {
            let mut t = sources[s];
            let mut path = vec![t];
            let mut k = 0;
            while !sys.is_sink(t) {
                let succ: Vec<usize> = sys.process.successors(t).collect();
                t = succ[choices[k % choices.len()] as usize % succ.len()];
                k += 1;
                path.push(t);
            }
            let last = path.len() - 1;
            path.iter()
                .enumerate()
                .filter(|&(i, _)| i == 0 || i == last || keep[i % keep.len()])
                .map(|(_, &t)| sys.transition(t).label.clone())
                .collect()
        },
    )
}

proptest! {
    #[test]
    fn completion_is_conservative_and_replays(labels in arb_partial()) {
        let sys = baggage();
        let events: Vec<Event> = labels
            .iter()
            .enumerate()
            .map(|(i, l)| Event::new(format!("o{i}"), l.clone()).with_pid("7").with_time(i as i64 * 1000))
            .collect();
        let log = MultiEntityLog::new(events.clone(), [EntityType::Pid]).unwrap();
        let done = oracle_o1(&log, &sys).unwrap();
        let trace = &done.traces[0];
        let observed: Vec<Event> = trace.steps.iter().filter(|s| s.observed).map(|s| s.event.clone()).collect();
        prop_assert_eq!(observed, events);
        let run = oracle_o2(&done, &sys).unwrap();
        // Dummy increasing timestamps; O2 supplies the qid that picks a branch.
        let walk: Vec<Event> = run
            .events()
            .iter()
            .enumerate()
            .map(|(i, e)| e.clone().with_time(i as i64))
            .collect();
        let r = replay_trace(&Net::process(&sys), &walk);
        prop_assert!(r.accepted, "{:?}", r.diagnostic);
        prop_assert!(run.order().is_strict_partial_order());
    }
}

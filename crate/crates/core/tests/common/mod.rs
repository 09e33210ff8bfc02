#![allow(dead_code)]

use tailspec::experiment::{FsmEvent, FsmTrace, FsmWorker};
use tailspec::rng::RngStream;
use tailspec::spot::{Action, WorkerState};
use tailspec::token::{Distribution, TokenId};

pub struct FsmCase {
    pub name: &'static str,
    pub trace: FsmTrace,
    /// `(error, violation)` tags of the expected failure.
    pub failure: Option<(&'static str, Option<&'static str>)>,
}

fn st(w: u32, g: u32) -> Action {
    Action::StartTraining {
        worker_id: w,
        dp_group: g,
    }
}

fn jn(w: u32, l: u32) -> Action {
    Action::JoinTraining {
        worker_id: w,
        leader_id: l,
    }
}

fn pre(w: u32) -> Action {
    Action::Preempt { worker_id: w }
}

fn ck(w: u32) -> Action {
    Action::CheckpointRequest { worker_id: w }
}

fn to(w: u32, s: WorkerState, expect: Vec<Action>) -> FsmEvent {
    FsmEvent::Transition {
        worker_id: w,
        to: s,
        expect: Some(expect),
    }
}

fn idle(w: u32, expect: Vec<Action>) -> FsmEvent {
    to(w, WorkerState::Idle, expect)
}

fn busy(w: u32, expect: Vec<Action>) -> FsmEvent {
    to(w, WorkerState::Busy, expect)
}

fn train(w: u32) -> FsmEvent {
    to(w, WorkerState::Training, vec![])
}

fn done(expect: Vec<Action>) -> FsmEvent {
    FsmEvent::RolloutDone {
        expect: Some(expect),
    }
}

fn case(name: &'static str, threshold: usize, workers: &[(u32, u32)], events: Vec<FsmEvent>) -> FsmCase {
    FsmCase {
        name,
        trace: FsmTrace {
            idle_threshold: threshold,
            workers: workers
                .iter()
                .map(|&(worker_id, dp_group)| FsmWorker { worker_id, dp_group })
                .collect(),
            events,
        },
        failure: None,
    }
}

fn failing(mut c: FsmCase, error: &'static str, violation: Option<&'static str>) -> FsmCase {
    c.failure = Some((error, violation));
    c
}

/// Hand-derived coordinator traces with their exact action lists.
pub fn fsm_cases() -> Vec<FsmCase> {
    use WorkerState::*;
    let g0 = |ids: &[u32]| ids.iter().map(|&i| (i, 0)).collect::<Vec<_>>();
    vec![
        case(
            "promotion at threshold",
            2,
            &g0(&[3, 5, 7]),
            vec![idle(3, vec![]), idle(5, vec![st(3, 0), jn(5, 3)])],
        ),
        case("below threshold", 3, &g0(&[0, 1, 2]), vec![idle(0, vec![]), idle(1, vec![])]),
        case("threshold one starts alone", 1, &g0(&[0, 1]), vec![idle(0, vec![st(0, 0)])]),
        case(
            "threshold three",
            3,
            &g0(&[0, 1, 2, 3, 4]),
            vec![idle(4, vec![]), idle(2, vec![]), idle(0, vec![st(0, 0), jn(2, 0), jn(4, 0)])],
        ),
        case(
            "lowest id leads",
            2,
            &g0(&[9, 4]),
            vec![idle(9, vec![]), idle(4, vec![st(4, 0), jn(9, 4)])],
        ),
        case(
            "late join same group",
            2,
            &g0(&[0, 1, 2]),
            vec![idle(1, vec![]), idle(2, vec![st(1, 0), jn(2, 1)]), idle(0, vec![jn(0, 1)])],
        ),
        case(
            "dp group join rejected",
            2,
            &[(0, 0), (1, 0), (2, 1)],
            vec![idle(0, vec![]), idle(1, vec![st(0, 0), jn(1, 0)]), idle(2, vec![])],
        ),
        case(
            "mixed groups start leader group only",
            2,
            &[(0, 0), (1, 1)],
            vec![idle(0, vec![]), idle(1, vec![st(0, 0)])],
        ),
        case(
            "leader group members join",
            3,
            &[(0, 1), (1, 0), (2, 1)],
            vec![idle(0, vec![]), idle(1, vec![]), idle(2, vec![st(0, 1), jn(2, 0)])],
        ),
        case(
            "members enter training",
            2,
            &g0(&[0, 1]),
            vec![idle(0, vec![]), idle(1, vec![st(0, 0), jn(1, 0)]), train(0), train(1)],
        ),
        case(
            "training back to idle",
            2,
            &g0(&[0, 1]),
            vec![idle(0, vec![]), idle(1, vec![st(0, 0), jn(1, 0)]), train(0), idle(0, vec![])],
        ),
        case(
            "preempt on completion",
            2,
            &g0(&[0, 1, 2]),
            vec![
                idle(0, vec![]),
                idle(1, vec![st(0, 0), jn(1, 0)]),
                train(0),
                train(1),
                done(vec![pre(0), pre(1), ck(0)]),
            ],
        ),
        case("completion without session", 2, &g0(&[0, 1]), vec![done(vec![])]),
        case(
            "completion preempts late joiner",
            2,
            &g0(&[0, 1, 2]),
            vec![
                idle(1, vec![]),
                idle(2, vec![st(1, 0), jn(2, 1)]),
                idle(0, vec![jn(0, 1)]),
                done(vec![pre(0), pre(1), pre(2), ck(1)]),
            ],
        ),
        case(
            "no promotion after completion",
            2,
            &g0(&[0, 1]),
            vec![done(vec![]), idle(0, vec![]), idle(1, vec![])],
        ),
        case(
            "next rollout promotes again",
            2,
            &g0(&[0, 1]),
            vec![
                done(vec![]),
                idle(0, vec![]),
                idle(1, vec![]),
                FsmEvent::BeginRollout,
                busy(0, vec![]),
                idle(0, vec![st(0, 0), jn(1, 0)]),
            ],
        ),
        case(
            "leader leaves and successor checkpoints",
            2,
            &g0(&[0, 1, 2]),
            vec![
                idle(0, vec![]),
                idle(1, vec![st(0, 0), jn(1, 0)]),
                busy(0, vec![]),
                done(vec![pre(1), ck(1)]),
            ],
        ),
        case(
            "empty session is dissolved",
            2,
            &g0(&[0, 1, 2]),
            vec![
                idle(0, vec![]),
                idle(1, vec![st(0, 0), jn(1, 0)]),
                busy(0, vec![]),
                busy(1, vec![]),
                idle(2, vec![]),
                idle(0, vec![st(0, 0), jn(2, 0)]),
            ],
        ),
        case(
            "leaving busy triggers pending promotion",
            2,
            &g0(&[0, 1, 2]),
            vec![
                done(vec![]),
                idle(0, vec![]),
                idle(1, vec![]),
                idle(2, vec![]),
                FsmEvent::BeginRollout,
                busy(0, vec![st(1, 0), jn(2, 1)]),
            ],
        ),
        case(
            "training member returns to busy",
            2,
            &g0(&[0, 1]),
            vec![
                idle(0, vec![]),
                idle(1, vec![st(0, 0), jn(1, 0)]),
                train(0),
                busy(0, vec![]),
                done(vec![pre(1), ck(1)]),
            ],
        ),
        case(
            "other groups wait for the session",
            2,
            &[(0, 0), (1, 0), (2, 1), (3, 1)],
            vec![idle(0, vec![]), idle(1, vec![st(0, 0), jn(1, 0)]), idle(2, vec![]), idle(3, vec![])],
        ),
        case(
            "preempts in ascending id order",
            3,
            &g0(&[9, 5, 2]),
            vec![
                idle(9, vec![]),
                idle(5, vec![]),
                idle(2, vec![st(2, 0), jn(5, 2), jn(9, 2)]),
                done(vec![pre(2), pre(5), pre(9), ck(2)]),
            ],
        ),
        case(
            "rejoin after busy",
            2,
            &g0(&[0, 1, 2]),
            vec![idle(0, vec![]), idle(1, vec![st(0, 0), jn(1, 0)]), busy(1, vec![]), idle(1, vec![jn(1, 0)])],
        ),
        case(
            "threshold above worker count",
            5,
            &g0(&[0, 1]),
            vec![idle(0, vec![]), idle(1, vec![]), done(vec![])],
        ),
        case(
            "second completion is empty",
            1,
            &g0(&[0]),
            vec![idle(0, vec![st(0, 0)]), done(vec![pre(0), ck(0)]), done(vec![])],
        ),
        failing(
            case("training without session", 2, &g0(&[0, 1]), vec![idle(0, vec![]), train(0)]),
            "violation",
            Some("no_session"),
        ),
        failing(
            case("busy to training", 2, &g0(&[0, 1]), vec![to(0, Training, vec![])]),
            "violation",
            Some("illegal_transition"),
        ),
        failing(
            case("idle to idle", 2, &g0(&[0, 1]), vec![idle(0, vec![]), idle(0, vec![])]),
            "violation",
            Some("illegal_transition"),
        ),
        failing(
            case("busy to busy", 2, &g0(&[0]), vec![busy(0, vec![])]),
            "violation",
            Some("illegal_transition"),
        ),
        failing(
            case(
                "training to training",
                1,
                &g0(&[0]),
                vec![idle(0, vec![st(0, 0)]), train(0), train(0)],
            ),
            "violation",
            Some("illegal_transition"),
        ),
        failing(
            case("unknown worker", 2, &g0(&[0]), vec![idle(4, vec![])]),
            "violation",
            Some("unknown_worker"),
        ),
        failing(
            case(
                "other group cannot train",
                2,
                &[(0, 0), (1, 0), (2, 1)],
                vec![idle(0, vec![]), idle(1, vec![st(0, 0), jn(1, 0)]), idle(2, vec![]), train(2)],
            ),
            "violation",
            Some("no_session"),
        ),
        failing(
            case(
                "session gone after completion",
                2,
                &g0(&[0, 1]),
                vec![idle(0, vec![]), idle(1, vec![st(0, 0), jn(1, 0)]), done(vec![pre(0), pre(1), ck(0)]), train(0)],
            ),
            "violation",
            Some("no_session"),
        ),
        failing(
            case(
                "completion returns trainers to idle",
                2,
                &g0(&[0, 1]),
                vec![idle(0, vec![]), idle(1, vec![st(0, 0), jn(1, 0)]), train(0), done(vec![pre(0), pre(1), ck(0)]), idle(0, vec![])],
            ),
            "violation",
            Some("illegal_transition"),
        ),
        failing(
            case("duplicate worker", 2, &[(0, 0), (0, 1)], vec![]),
            "invalid_trace",
            None,
        ),
        failing(
            case("wrong expectation", 2, &g0(&[0, 1]), vec![idle(0, vec![st(0, 0)])]),
            "mismatch",
            None,
        ),
    ]
}

/// Replays every case; returns one message per disagreement.
pub fn check_fsm_cases(cases: &[FsmCase]) -> Vec<String> {
    let mut bad = Vec::new();
    for c in cases {
        let got = tailspec::experiment::run_fsm(&c.trace);
        match (&c.failure, got) {
            (None, Ok(_)) => {}
            (None, Err(e)) => bad.push(format!("{}: {e}", c.name)),
            (Some(_), Ok(_)) => bad.push(format!("{}: expected a failure", c.name)),
            (Some((error, violation)), Err(e)) => {
                let v = serde_json::to_value(&e).unwrap();
                let want_violation = violation.map(|x| serde_json::Value::from(x));
                if v["error"] != *error || want_violation.is_some_and(|w| v["violation"]["error"] != w) {
                    bad.push(format!("{}: got {v}", c.name));
                }
            }
        }
    }
    bad
}

/// Random event sequences through a coordinator. Returns the number of
/// START/JOIN actions seen and the first one that targeted a BUSY worker.
pub fn random_fsm_traces(traces: usize, seed: u64) -> (usize, Option<String>) {
    use tailspec::spot::Coordinator;
    let root = RngStream::new(seed, 0);
    let mut seen = 0;
    for n in 0..traces {
        let mut rng = root.substream(n as u64);
        let workers = 1 + rng.below(8);
        let groups = 1 + rng.below(3);
        let threshold = 1 + rng.below(4);
        let mut c = Coordinator::new((0..workers as u32).map(|w| (w, rng.below(groups) as u32)), threshold).unwrap();
        for _ in 0..60 {
            let roll = rng.below(20);
            let actions = if roll == 0 {
                c.rollout_complete()
            } else if roll == 1 {
                c.begin_rollout();
                Vec::new()
            } else {
                let w = rng.below(workers + 1) as u32;
                let to = [WorkerState::Busy, WorkerState::Idle, WorkerState::Training][rng.below(3)];
                c.transition(w, to).unwrap_or_default()
            };
            for a in &actions {
                if let Action::StartTraining { worker_id, .. } | Action::JoinTraining { worker_id, .. } = *a {
                    seen += 1;
                    let state = c.worker(worker_id).unwrap().state;
                    if state == WorkerState::Busy {
                        return (seen, Some(format!("trace {n}: {a:?} targeted a BUSY worker")));
                    }
                }
            }
        }
    }
    (seen, None)
}

/// Fewest bins of `capacity` holding `lengths`, by exhaustive search over
/// subsets.
pub fn optimal_bins(lengths: &[usize], capacity: usize) -> usize {
    let n = lengths.len();
    let full = (1usize << n) - 1;
    let sum = |mask: usize| -> usize { (0..n).filter(|i| mask >> i & 1 == 1).map(|i| lengths[i]).sum() };
    let fits: Vec<bool> = (0..=full).map(|m| sum(m) <= capacity).collect();
    let mut best = vec![usize::MAX; full + 1];
    best[0] = 0;
    for mask in 1..=full {
        let low = mask & mask.wrapping_neg();
        let rest = mask ^ low;
        let mut sub = rest;
        loop {
            let bin = sub | low;
            if fits[bin] && best[mask ^ bin] != usize::MAX {
                best[mask] = best[mask].min(best[mask ^ bin] + 1);
            }
            if sub == 0 {
                break;
            }
            sub = (sub - 1) & rest;
        }
    }
    best[full]
}

/// Exact law of the tokens one draft/verify round emits for an order-0
/// target `p` and drafter `q` with a chain of `depth`: the draft token `x` is
/// kept with probability `min(1, p(x)/q(x))`, a rejection resamples from the
/// normalised `(p - q)^+`, and a fully accepted chain adds a bonus from `p`.
pub fn round_law(p: &Distribution, q: &Distribution, depth: usize) -> Vec<(Vec<TokenId>, f64)> {
    let v = p.vocab();
    let res = tailspec::spec::residual(p, q);
    let mut out = Vec::new();
    let mut stack = vec![(Vec::<TokenId>::new(), 1.0f64)];
    while let Some((prefix, mass)) = stack.pop() {
        if prefix.len() == depth {
            for y in 0..v {
                out.push((extend(&prefix, y), mass * p.probs()[y]));
            }
            continue;
        }
        let mut reject = 0.0;
        for x in 0..v {
            let (px, qx) = (p.probs()[x], q.probs()[x]);
            if qx == 0.0 {
                continue;
            }
            let keep = (px / qx).min(1.0);
            stack.push((extend(&prefix, x), mass * qx * keep));
            reject += qx * (1.0 - keep);
        }
        for y in 0..v {
            out.push((extend(&prefix, y), mass * reject * res.probs()[y]));
        }
    }
    out
}

fn extend(prefix: &[TokenId], t: usize) -> Vec<TokenId> {
    let mut v = prefix.to_vec();
    v.push(TokenId(t as u32));
    v
}

/// Law of the first `n` emitted tokens when rounds repeat independently.
pub fn prefix_law(round: &[(Vec<TokenId>, f64)], n: usize) -> std::collections::BTreeMap<Vec<TokenId>, f64> {
    let mut done = std::collections::BTreeMap::new();
    let mut open = vec![(Vec::<TokenId>::new(), 1.0f64)];
    while let Some((prefix, mass)) = open.pop() {
        for (block, pr) in round {
            let mut seq = prefix.clone();
            seq.extend_from_slice(block);
            if seq.len() >= n {
                seq.truncate(n);
                *done.entry(seq).or_insert(0.0) += mass * pr;
            } else {
                open.push((seq, mass * pr));
            }
        }
    }
    done
}

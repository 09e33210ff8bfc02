use serde::{Deserialize, Serialize};

use crate::spot::{
    Action, Coordinator, Message, ProtocolError, WorkerRecord, WorkerState, DEFAULT_IDLE_THRESHOLD,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FsmWorker {
    pub worker_id: u32,
    #[serde(default)]
    pub dp_group: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case", deny_unknown_fields)]
pub enum FsmEvent {
    Transition {
        worker_id: u32,
        to: WorkerState,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        expect: Option<Vec<Action>>,
    },
    RolloutDone {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        expect: Option<Vec<Action>>,
    },
    BeginRollout,
}

impl FsmEvent {
    fn expect(&self) -> Option<&[Action]> {
        match self {
            FsmEvent::Transition { expect, .. } | FsmEvent::RolloutDone { expect } => {
                expect.as_deref()
            }
            FsmEvent::BeginRollout => None,
        }
    }
}

/// A scripted coordinator run. Events may pin the exact actions they must
/// produce.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FsmTrace {
    #[serde(default = "default_threshold")]
    pub idle_threshold: usize,
    pub workers: Vec<FsmWorker>,
    pub events: Vec<FsmEvent>,
}

fn default_threshold() -> usize {
    DEFAULT_IDLE_THRESHOLD
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FsmEventRow {
    pub event: usize,
    pub kind: String,
    pub worker_id: Option<u32>,
    pub to: Option<WorkerState>,
    pub actions: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FsmWorkerRow {
    pub worker_id: u32,
    pub dp_group: u32,
    pub state: Option<WorkerState>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FsmReport {
    pub events: Vec<FsmEventRow>,
    pub workers: Vec<FsmWorkerRow>,
    pub log: Vec<Message>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error, Serialize)]
#[serde(tag = "error", rename_all = "snake_case")]
pub enum FsmError {
    #[error("invalid trace: {message}")]
    InvalidTrace { message: String },
    #[error("event {event}: {violation}")]
    Violation {
        event: usize,
        violation: ProtocolError,
    },
    #[error("event {event}: expected actions {expected:?}, got {actual:?}")]
    Mismatch {
        event: usize,
        expected: Vec<Action>,
        actual: Vec<Action>,
    },
}

/// Compact action list such as `START_TRAINING:3;JOIN_TRAINING:5`.
pub fn format_actions(actions: &[Action]) -> String {
    actions
        .iter()
        .map(|a| {
            let name = match a {
                Action::StartTraining { .. } => "START_TRAINING",
                Action::JoinTraining { .. } => "JOIN_TRAINING",
                Action::Preempt { .. } => "PREEMPT",
                Action::CheckpointRequest { .. } => "CHECKPOINT_REQUEST",
            };
            format!("{name}:{}", a.worker_id())
        })
        .collect::<Vec<_>>()
        .join(";")
}

/// Replays `trace` through a fresh coordinator, stopping at the first
/// protocol violation or action mismatch.
pub fn run_fsm(trace: &FsmTrace) -> Result<FsmReport, FsmError> {
    if trace.idle_threshold == 0 {
        return Err(FsmError::InvalidTrace {
            message: "idle_threshold must be at least 1".into(),
        });
    }
    let mut c = Coordinator::new(
        trace.workers.iter().map(|w| (w.worker_id, w.dp_group)),
        trace.idle_threshold,
    )
    .map_err(|e| FsmError::InvalidTrace {
        message: e.to_string(),
    })?;
    let mut events = Vec::with_capacity(trace.events.len());
    for (i, ev) in trace.events.iter().enumerate() {
        let (kind, worker_id, to, actions) = match *ev {
            FsmEvent::Transition { worker_id, to, .. } => {
                let actions =
                    c.transition(worker_id, to)
                        .map_err(|violation| FsmError::Violation {
                            event: i,
                            violation,
                        })?;
                ("transition", Some(worker_id), Some(to), actions)
            }
            FsmEvent::RolloutDone { .. } => ("rollout_done", None, None, c.rollout_complete()),
            FsmEvent::BeginRollout => {
                c.begin_rollout();
                ("begin_rollout", None, None, Vec::new())
            }
        };
        if let Some(expected) = ev.expect() {
            if expected != actions.as_slice() {
                return Err(FsmError::Mismatch {
                    event: i,
                    expected: expected.to_vec(),
                    actual: actions,
                });
            }
        }
        events.push(FsmEventRow {
            event: i,
            kind: kind.into(),
            worker_id,
            to,
            actions: format_actions(&actions),
        });
    }
    Ok(FsmReport {
        events,
        workers: c
            .workers()
            .map(
                |&WorkerRecord {
                     worker_id,
                     state,
                     dp_group,
                 }| FsmWorkerRow {
                    worker_id,
                    dp_group,
                    state: Some(state),
                },
            )
            .collect(),
        log: c.log().to_vec(),
    })
}

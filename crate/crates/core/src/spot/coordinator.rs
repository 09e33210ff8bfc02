//! Worker coordinator: tracks BUSY/IDLE/TRAINING workers, promotes idle ones
//! into a training session and tears it down when the rollout finishes.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum WorkerState {
    Busy,
    Idle,
    Training,
}

impl WorkerState {
    pub fn as_str(self) -> &'static str {
        match self {
            WorkerState::Busy => "BUSY",
            WorkerState::Idle => "IDLE",
            WorkerState::Training => "TRAINING",
        }
    }
}

impl fmt::Display for WorkerState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkerRecord {
    pub worker_id: u32,
    pub state: WorkerState,
    pub dp_group: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingSession {
    pub leader_id: u32,
    pub dp_group: u32,
    pub members: BTreeSet<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum MessageKind {
    StateChange,
    StartTraining,
    JoinTraining,
    Preempt,
    CheckpointRequest,
    RolloutDone,
}

/// Wire format shared by inbound notifications and outbound commands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Message {
    #[serde(rename = "type")]
    pub kind: MessageKind,
    pub worker_id: Option<u32>,
    #[serde(default)]
    pub payload: Value,
}

impl Message {
    pub fn state_change(worker_id: u32, from: WorkerState, to: WorkerState) -> Self {
        Self {
            kind: MessageKind::StateChange,
            worker_id: Some(worker_id),
            payload: json!({ "from": from, "to": to }),
        }
    }

    pub fn rollout_done() -> Self {
        Self {
            kind: MessageKind::RolloutDone,
            worker_id: None,
            payload: json!({}),
        }
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("message serialises")
    }
}

/// Commands the coordinator sends to workers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Action {
    StartTraining { worker_id: u32, dp_group: u32 },
    JoinTraining { worker_id: u32, leader_id: u32 },
    Preempt { worker_id: u32 },
    CheckpointRequest { worker_id: u32 },
}

impl Action {
    pub fn worker_id(&self) -> u32 {
        match *self {
            Action::StartTraining { worker_id, .. }
            | Action::JoinTraining { worker_id, .. }
            | Action::Preempt { worker_id }
            | Action::CheckpointRequest { worker_id } => worker_id,
        }
    }

    pub fn to_message(&self) -> Message {
        let (kind, payload) = match *self {
            Action::StartTraining { dp_group, .. } => {
                (MessageKind::StartTraining, json!({ "dp_group": dp_group }))
            }
            Action::JoinTraining { leader_id, .. } => {
                (MessageKind::JoinTraining, json!({ "leader_id": leader_id }))
            }
            Action::Preempt { .. } => (MessageKind::Preempt, json!({})),
            Action::CheckpointRequest { .. } => (MessageKind::CheckpointRequest, json!({})),
        };
        Message {
            kind,
            worker_id: Some(self.worker_id()),
            payload,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error, Serialize)]
#[serde(tag = "error", rename_all = "snake_case")]
pub enum ProtocolError {
    #[error("unknown worker {worker_id}")]
    UnknownWorker { worker_id: u32 },
    #[error("worker {worker_id}: illegal transition {from} -> {to}")]
    IllegalTransition {
        worker_id: u32,
        from: WorkerState,
        to: WorkerState,
    },
    #[error("worker {worker_id}: {from} -> {to} without a training session it belongs to")]
    NoSession {
        worker_id: u32,
        from: WorkerState,
        to: WorkerState,
    },
    #[error("duplicate worker {worker_id}")]
    DuplicateWorker { worker_id: u32 },
}

pub const DEFAULT_IDLE_THRESHOLD: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Coordinator {
    workers: BTreeMap<u32, WorkerRecord>,
    idle_threshold: usize,
    session: Option<TrainingSession>,
    rollout_done: bool,
    #[serde(skip)]
    log: Vec<Message>,
}

impl Coordinator {
    /// Every worker starts BUSY.
    pub fn new<I>(workers: I, idle_threshold: usize) -> Result<Self, ProtocolError>
    where
        I: IntoIterator<Item = (u32, u32)>,
    {
        assert!(idle_threshold >= 1, "idle threshold must be at least 1");
        let mut map = BTreeMap::new();
        for (worker_id, dp_group) in workers {
            let rec = WorkerRecord {
                worker_id,
                state: WorkerState::Busy,
                dp_group,
            };
            if map.insert(worker_id, rec).is_some() {
                return Err(ProtocolError::DuplicateWorker { worker_id });
            }
        }
        Ok(Self {
            workers: map,
            idle_threshold,
            session: None,
            rollout_done: false,
            log: Vec::new(),
        })
    }

    pub fn worker(&self, id: u32) -> Option<&WorkerRecord> {
        self.workers.get(&id)
    }

    pub fn workers(&self) -> impl Iterator<Item = &WorkerRecord> {
        self.workers.values()
    }

    pub fn session(&self) -> Option<&TrainingSession> {
        self.session.as_ref()
    }

    pub fn rollout_done(&self) -> bool {
        self.rollout_done
    }

    pub fn idle_threshold(&self) -> usize {
        self.idle_threshold
    }

    pub fn idle_count(&self) -> usize {
        self.count(WorkerState::Idle)
    }

    pub fn count(&self, state: WorkerState) -> usize {
        self.workers.values().filter(|w| w.state == state).count()
    }

    /// Inbound and outbound messages in processing order.
    pub fn log(&self) -> &[Message] {
        &self.log
    }

    pub fn log_json_lines(&self) -> String {
        self.log.iter().map(|m| m.to_json_line() + "\n").collect()
    }

    /// Clears `rollout_done` for the next RL step. Workers report BUSY
    /// through their own transitions.
    pub fn begin_rollout(&mut self) {
        self.rollout_done = false;
    }

    pub fn transition(
        &mut self,
        worker_id: u32,
        to: WorkerState,
    ) -> Result<Vec<Action>, ProtocolError> {
        use WorkerState::*;
        let rec = *self
            .workers
            .get(&worker_id)
            .ok_or(ProtocolError::UnknownWorker { worker_id })?;
        let from = rec.state;
        let in_session = self
            .session
            .as_ref()
            .is_some_and(|s| s.members.contains(&worker_id));
        match (from, to) {
            (Busy, Idle) | (Training, Idle) | (Training, Busy) | (Idle, Busy) => {}
            (Idle, Training) if in_session => {}
            (Idle, Training) => {
                return Err(ProtocolError::NoSession {
                    worker_id,
                    from,
                    to,
                })
            }
            _ => {
                return Err(ProtocolError::IllegalTransition {
                    worker_id,
                    from,
                    to,
                })
            }
        }
        self.log.push(Message::state_change(worker_id, from, to));
        self.workers.get_mut(&worker_id).expect("checked").state = to;

        if to == Busy {
            self.leave_session(worker_id);
        }

        let mut actions = Vec::new();
        if !self.rollout_done {
            match &mut self.session {
                Some(s) if from == Busy && to == Idle && s.dp_group == rec.dp_group => {
                    s.members.insert(worker_id);
                    actions.push(Action::JoinTraining {
                        worker_id,
                        leader_id: s.leader_id,
                    });
                }
                Some(_) => {}
                None => actions.extend(self.try_start()),
            }
        }
        self.emit(&actions);
        Ok(actions)
    }

    /// Halts training: PREEMPT every member, then one CHECKPOINT_REQUEST to
    /// the leader. TRAINING workers drop back to IDLE.
    pub fn rollout_complete(&mut self) -> Vec<Action> {
        self.log.push(Message::rollout_done());
        self.rollout_done = true;
        let mut actions = Vec::new();
        if let Some(s) = self.session.take() {
            for &m in &s.members {
                actions.push(Action::Preempt { worker_id: m });
            }
            actions.push(Action::CheckpointRequest {
                worker_id: s.leader_id,
            });
        }
        for w in self.workers.values_mut() {
            if w.state == WorkerState::Training {
                w.state = WorkerState::Idle;
            }
        }
        self.emit(&actions);
        actions
    }

    fn leave_session(&mut self, worker_id: u32) {
        let Some(s) = &mut self.session else { return };
        s.members.remove(&worker_id);
        if s.members.is_empty() {
            self.session = None;
        } else if s.leader_id == worker_id {
            s.leader_id = *s.members.first().expect("non-empty");
        }
    }

    fn try_start(&mut self) -> Vec<Action> {
        if self.idle_count() < self.idle_threshold {
            return Vec::new();
        }
        let leader = *self
            .workers
            .values()
            .find(|w| w.state == WorkerState::Idle)
            .expect("idle count is positive");
        let members: BTreeSet<u32> = self
            .workers
            .values()
            .filter(|w| w.state == WorkerState::Idle && w.dp_group == leader.dp_group)
            .map(|w| w.worker_id)
            .collect();
        let mut actions = vec![Action::StartTraining {
            worker_id: leader.worker_id,
            dp_group: leader.dp_group,
        }];
        for &m in members.iter().filter(|&&m| m != leader.worker_id) {
            actions.push(Action::JoinTraining {
                worker_id: m,
                leader_id: leader.worker_id,
            });
        }
        self.session = Some(TrainingSession {
            leader_id: leader.worker_id,
            dp_group: leader.dp_group,
            members,
        });
        actions
    }

    fn emit(&mut self, actions: &[Action]) {
        self.log.extend(actions.iter().map(Action::to_message));
    }
}

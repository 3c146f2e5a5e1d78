//! The trust-gated flooding protocol.
//!
//! Each node runs the same two-step logic. `flood` pushes a message to every
//! friend whose accumulated path trust stays at or above the requester's
//! threshold tau within the hop budget; `propagate` is the receiving side,
//! dropping loops and late messages, prompting the user exactly once per
//! request, and re-flooding a known request only when a new path improves
//! its trust by more than sigma.
//!
//! Path trust composes through a T-norm, so it never increases along a
//! forwarding chain.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ids::{NodeId, TaskId, TimeDelta, Timestamp};
use crate::trust::Task;

#[derive(Debug, Error, PartialEq)]
pub enum ProtocolError {
    #[error("tau {0} outside [0,1]")]
    InvalidTau(f64),
    #[error("hop limit must be at least 1")]
    InvalidHops,
    #[error("deadline {deadline} not after the current time {now}")]
    DeadlineNotInFuture { deadline: Timestamp, now: Timestamp },
    #[error("task {0} already initiated at this node")]
    DuplicateTask(TaskId),
    #[error("task {0} was not initiated by this node")]
    NotRequester(TaskId),
    #[error("graph has {nodes} nodes, enumeration is guarded at {limit}")]
    GraphTooLarge { nodes: usize, limit: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum MessageType {
    Help,
    NotNeeded,
    Cancelled,
}

impl std::fmt::Display for MessageType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            MessageType::Help => "HELP",
            MessageType::NotNeeded => "NOTNEEDED",
            MessageType::Cancelled => "CANCELLED",
        })
    }
}

/// Binary trust aggregation on [0,1]: commutative, associative, monotone,
/// with identity 1 and `T(x,y) <= min(x,y)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TNorm {
    Min,
    Product,
}

impl TNorm {
    pub fn combine(self, x: f64, y: f64) -> f64 {
        match self {
            TNorm::Min => x.min(y),
            TNorm::Product => x * y,
        }
    }
}

impl std::fmt::Display for TNorm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TNorm::Min => "min",
            TNorm::Product => "product",
        })
    }
}

/// The unit of propagation. `path` lists every node the message passed
/// through, starting at the requester and excluding the recipient; `deadline`
/// is the respond-by instant, always ahead of the task's own deadline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FloodMessage {
    pub task_id: TaskId,
    pub task: Task,
    pub task_deadline: Timestamp,
    pub message_type: MessageType,
    /// Volunteer a NOTNEEDED broadcast does not apply to (the chosen one).
    pub exempt: Option<NodeId>,
    pub tau: f64,
    pub pathtrust: f64,
    pub path: Vec<NodeId>,
    pub deadline: Timestamp,
    pub hops: u32,
}

/// Flooding knobs.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct FloodParams {
    /// Minimum path-trust improvement required to re-flood a known request.
    pub sigma: f64,
    pub tnorm: TNorm,
    /// Gap between the respond-by deadline and the task deadline. When
    /// absent, a quarter of the interval from request creation to the task
    /// deadline.
    pub response_offset: Option<TimeDelta>,
}

impl Default for FloodParams {
    fn default() -> Self {
        FloodParams {
            sigma: 0.1,
            tnorm: TNorm::Min,
            response_offset: None,
        }
    }
}

impl FloodParams {
    pub fn validate(&self) -> Result<(), ProtocolError> {
        if !(0.0..=1.0).contains(&self.sigma) {
            return Err(ProtocolError::InvalidTau(self.sigma));
        }
        Ok(())
    }

    /// Respond-by instant for a request created `now` with the given task
    /// deadline.
    pub fn respond_by(&self, now: Timestamp, task_deadline: Timestamp) -> Timestamp {
        match self.response_offset {
            Some(offset) => task_deadline.saturating_sub(offset),
            None => Timestamp(task_deadline.0 - (task_deadline.0 - now.0) / 4),
        }
    }
}

/// A message handed to the transport.
#[derive(Debug, Clone, PartialEq)]
pub struct SendOp {
    pub to: NodeId,
    pub msg: FloodMessage,
}

/// Local notification raised toward the lifecycle layer.
#[derive(Debug, Clone, PartialEq)]
pub enum Notice {
    Help {
        task_id: TaskId,
        requester: NodeId,
        task: Task,
        respond_by: Timestamp,
        task_deadline: Timestamp,
    },
    NotNeeded {
        task_id: TaskId,
        exempt: Option<NodeId>,
    },
    Cancelled {
        task_id: TaskId,
    },
}

#[derive(Debug, Default)]
pub struct FloodOutcome {
    pub notice: Option<Notice>,
    pub sends: Vec<SendOp>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DropReason {
    SelfInPath,
    PastDeadline,
    NoImprovement,
}

impl std::fmt::Display for DropReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DropReason::SelfInPath => "self_in_path",
            DropReason::PastDeadline => "past_deadline",
            DropReason::NoImprovement => "no_improvement",
        })
    }
}

/// What happened when a message reached a node.
#[derive(Debug, Default)]
pub struct Delivery {
    pub notice: Option<Notice>,
    pub sends: Vec<SendOp>,
    pub reflooded: bool,
    pub dropped: Option<DropReason>,
}

impl Delivery {
    pub fn accepted(&self) -> bool {
        self.dropped.is_none()
    }
}

#[derive(Debug, Clone)]
struct InitiatedRequest {
    task: Task,
    task_deadline: Timestamp,
    tau: f64,
    hops: u32,
    respond_by: Timestamp,
}

/// One member's protocol-level state.
#[derive(Debug, Clone)]
pub struct ProtocolNode {
    id: NodeId,
    friends: BTreeSet<NodeId>,
    received: BTreeSet<TaskId>,
    /// Best path trust seen per task; absent entries read as -1 so any first
    /// delivery improves on it.
    old_path_trust: BTreeMap<TaskId, f64>,
    asked: BTreeSet<TaskId>,
    initiated: BTreeMap<TaskId, InitiatedRequest>,
}

#[derive(Debug)]
pub struct InitiateOutput {
    pub sends: Vec<SendOp>,
    pub respond_by: Timestamp,
}

impl ProtocolNode {
    pub fn new(id: NodeId, friends: impl IntoIterator<Item = NodeId>) -> Self {
        let id_clone = id.clone();
        ProtocolNode {
            id,
            friends: friends.into_iter().filter(|f| *f != id_clone).collect(),
            received: BTreeSet::new(),
            old_path_trust: BTreeMap::new(),
            asked: BTreeSet::new(),
            initiated: BTreeMap::new(),
        }
    }

    pub fn id(&self) -> &NodeId {
        &self.id
    }

    pub fn friends(&self) -> impl Iterator<Item = &NodeId> {
        self.friends.iter()
    }

    /// Tasks this node has been asked about (its HELP reach).
    pub fn received_requests(&self) -> impl Iterator<Item = TaskId> + '_ {
        self.received.iter().copied()
    }

    pub fn old_path_trust(&self, task: TaskId) -> f64 {
        self.old_path_trust.get(&task).copied().unwrap_or(-1.0)
    }

    /// Creates a HELP request and floods it. The requester itself is never
    /// prompted: it starts on the path and carries the asked flag.
    #[allow(clippy::too_many_arguments)]
    pub fn initiate_request<F>(
        &mut self,
        task_id: TaskId,
        task: Task,
        task_deadline: Timestamp,
        tau: f64,
        hops: u32,
        now: Timestamp,
        params: &FloodParams,
        trust_fn: F,
    ) -> Result<InitiateOutput, ProtocolError>
    where
        F: FnMut(&NodeId, &NodeId, &Task) -> f64,
    {
        if !(0.0..=1.0).contains(&tau) {
            return Err(ProtocolError::InvalidTau(tau));
        }
        if hops < 1 {
            return Err(ProtocolError::InvalidHops);
        }
        if task_deadline <= now {
            return Err(ProtocolError::DeadlineNotInFuture {
                deadline: task_deadline,
                now,
            });
        }
        if self.initiated.contains_key(&task_id) {
            return Err(ProtocolError::DuplicateTask(task_id));
        }
        let respond_by = params.respond_by(now, task_deadline);
        if respond_by <= now {
            return Err(ProtocolError::DeadlineNotInFuture {
                deadline: respond_by,
                now,
            });
        }
        self.initiated.insert(
            task_id,
            InitiatedRequest {
                task: task.clone(),
                task_deadline,
                tau,
                hops,
                respond_by,
            },
        );
        self.asked.insert(task_id);
        let msg = FloodMessage {
            task_id,
            task,
            task_deadline,
            message_type: MessageType::Help,
            exempt: None,
            tau,
            pathtrust: 1.0,
            path: vec![self.id.clone()],
            deadline: respond_by,
            hops,
        };
        let outcome = self.flood(msg, true, params, trust_fn);
        Ok(InitiateOutput {
            sends: outcome.sends,
            respond_by,
        })
    }

    /// Re-floods a request this node originated, telling everyone it is
    /// cancelled, or no longer needed because `exempt` was chosen. Reuses the
    /// original tau, hop limit and respond-by deadline so the broadcast
    /// covers at least the original reach while trust is unchanged.
    pub fn initiate_broadcast<F>(
        &mut self,
        task_id: TaskId,
        message_type: MessageType,
        exempt: Option<NodeId>,
        params: &FloodParams,
        trust_fn: F,
    ) -> Result<Vec<SendOp>, ProtocolError>
    where
        F: FnMut(&NodeId, &NodeId, &Task) -> f64,
    {
        let original = self
            .initiated
            .get(&task_id)
            .ok_or(ProtocolError::NotRequester(task_id))?;
        let msg = FloodMessage {
            task_id,
            task: original.task.clone(),
            task_deadline: original.task_deadline,
            message_type,
            exempt,
            tau: original.tau,
            pathtrust: 1.0,
            path: vec![self.id.clone()],
            deadline: original.respond_by,
            hops: original.hops,
        };
        Ok(self.flood(msg, true, params, trust_fn).sends)
    }

    /// Forwarding half of the protocol. `msg.path` already ends with this
    /// node. Raises the local notification when the user has not been asked,
    /// then hands the message to every friend that passes the trust and hop
    /// gates.
    pub fn flood<F>(
        &mut self,
        msg: FloodMessage,
        asked: bool,
        params: &FloodParams,
        mut trust_fn: F,
    ) -> FloodOutcome
    where
        F: FnMut(&NodeId, &NodeId, &Task) -> f64,
    {
        debug_assert_eq!(msg.path.last(), Some(&self.id));
        let mut outcome = FloodOutcome::default();
        if !asked {
            outcome.notice = match msg.message_type {
                MessageType::Help => {
                    if self.asked.insert(msg.task_id) {
                        Some(Notice::Help {
                            task_id: msg.task_id,
                            requester: msg.path[0].clone(),
                            task: msg.task.clone(),
                            respond_by: msg.deadline,
                            task_deadline: msg.task_deadline,
                        })
                    } else {
                        None
                    }
                }
                MessageType::NotNeeded => Some(Notice::NotNeeded {
                    task_id: msg.task_id,
                    exempt: msg.exempt.clone(),
                }),
                MessageType::Cancelled => Some(Notice::Cancelled {
                    task_id: msg.task_id,
                }),
            };
        }
        let within_hops = (msg.path.len() as u32 - 1) < msg.hops;
        if within_hops {
            for friend in &self.friends {
                let new_trust = params
                    .tnorm
                    .combine(trust_fn(&self.id, friend, &msg.task), msg.pathtrust);
                if new_trust >= msg.tau {
                    let mut forwarded = msg.clone();
                    forwarded.pathtrust = new_trust;
                    outcome.sends.push(SendOp {
                        to: friend.clone(),
                        msg: forwarded,
                    });
                }
            }
        }
        outcome
    }

    /// Receiving half of the protocol: loop and deadline gates, first-time
    /// versus re-flood handling for HELP, unconditional relay for the
    /// broadcast types.
    pub fn propagate<F>(
        &mut self,
        msg: &FloodMessage,
        now: Timestamp,
        params: &FloodParams,
        trust_fn: F,
    ) -> Delivery
    where
        F: FnMut(&NodeId, &NodeId, &Task) -> f64,
    {
        if msg.path.contains(&self.id) {
            return Delivery {
                dropped: Some(DropReason::SelfInPath),
                ..Default::default()
            };
        }
        if now >= msg.deadline {
            return Delivery {
                dropped: Some(DropReason::PastDeadline),
                ..Default::default()
            };
        }
        let mut forwarded = msg.clone();
        forwarded.path.push(self.id.clone());
        match msg.message_type {
            MessageType::Help => {
                if self.received.insert(msg.task_id) {
                    self.old_path_trust.insert(msg.task_id, msg.pathtrust);
                    let outcome = self.flood(forwarded, false, params, trust_fn);
                    Delivery {
                        notice: outcome.notice,
                        sends: outcome.sends,
                        ..Default::default()
                    }
                } else if msg.pathtrust - self.old_path_trust(msg.task_id) > params.sigma {
                    self.old_path_trust.insert(msg.task_id, msg.pathtrust);
                    let outcome = self.flood(forwarded, true, params, trust_fn);
                    Delivery {
                        notice: outcome.notice,
                        sends: outcome.sends,
                        reflooded: true,
                        dropped: None,
                    }
                } else {
                    Delivery {
                        dropped: Some(DropReason::NoImprovement),
                        ..Default::default()
                    }
                }
            }
            MessageType::NotNeeded | MessageType::Cancelled => {
                let outcome = self.flood(forwarded, false, params, trust_fn);
                Delivery {
                    notice: outcome.notice,
                    sends: outcome.sends,
                    ..Default::default()
                }
            }
        }
    }
}

/// Maximum node count [`count_worst_case_messages`] will enumerate.
pub const ENUMERATION_LIMIT: usize = 12;

/// Worst-case message bound for a sigma = 0 flood: the sum of the lengths of
/// every loop-free path leaving `start`. Exponential in the node count, so
/// guarded to small graphs.
pub fn count_worst_case_messages(
    adjacency: &BTreeMap<NodeId, BTreeSet<NodeId>>,
    start: &NodeId,
) -> Result<u64, ProtocolError> {
    if adjacency.len() > ENUMERATION_LIMIT {
        return Err(ProtocolError::GraphTooLarge {
            nodes: adjacency.len(),
            limit: ENUMERATION_LIMIT,
        });
    }
    fn dfs(
        adjacency: &BTreeMap<NodeId, BTreeSet<NodeId>>,
        node: &NodeId,
        visited: &mut Vec<NodeId>,
        length: u64,
        total: &mut u64,
    ) {
        if let Some(neighbors) = adjacency.get(node) {
            for next in neighbors {
                if !visited.contains(next) {
                    *total += length + 1;
                    visited.push(next.clone());
                    dfs(adjacency, next, visited, length + 1, total);
                    visited.pop();
                }
            }
        }
    }
    let mut total = 0;
    let mut visited = vec![start.clone()];
    dfs(adjacency, start, &mut visited, 0, &mut total);
    Ok(total)
}

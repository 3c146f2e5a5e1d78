//! Deterministic discrete-event simulation of a help-seeking community.
//!
//! The engine owns a virtual clock and a single totally-ordered event queue;
//! nothing reads wall-clock time and all randomness (delay sampling) flows
//! from the run seed, so two runs with the same inputs produce byte-identical
//! traces and metrics.
//!
//! Events at the same instant process in class order — deadline sweeps,
//! direct member-to-member messages, flood deliveries, then scripted user
//! actions — and flood deliveries at the same instant process best-trust
//! first. Best-first processing makes each node's first receipt carry the
//! strongest path trust available at that instant, which keeps the min
//! T-norm free of re-floods.

mod graph;
mod metrics;
mod scenario;

pub use graph::{GraphDoc, RatingSeed, SocialGraph, TrustSeed};
pub use metrics::Metrics;
pub use scenario::{Action, ScenarioDoc, Step};

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ids::{NodeId, TaskId, Timestamp};
use crate::lifecycle::{
    self, Deadlines, Disposition, Effect, EventKind, LifecycleError, LifecycleEvent, RequestRecord,
    TransitionCtx,
};
use crate::ontology::{Hierarchy, OntologyError, SimilarityParams};
use crate::protocol::{
    FloodMessage, FloodParams, MessageType, ProtocolError, ProtocolNode, SendOp, TNorm,
};
use crate::rng::SplitMix64;
use crate::trust::{
    self, Rating, RatingLedger, RatingValue, SharingConfig, SharingContext, SharingPolicy, Task,
    TrustError, TrustParams,
};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("fixture does not parse: {0}")]
    Parse(String),
    #[error("graph: {0}")]
    Graph(String),
    #[error("scenario: {0}")]
    Scenario(String),
    #[error("sweep grid is empty")]
    EmptyGrid,
    #[error(transparent)]
    Ontology(#[from] OntologyError),
    #[error(transparent)]
    Trust(#[from] TrustError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Lifecycle(#[from] LifecycleError),
}

/// Transport delay distribution.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum DelayModel {
    #[default]
    Zero,
    Fixed {
        delay: u64,
    },
    Uniform {
        min: u64,
        max: u64,
    },
}

impl DelayModel {
    fn validate(&self) -> Result<(), SimError> {
        if let DelayModel::Uniform { min, max } = self {
            if min > max {
                return Err(SimError::Scenario(format!(
                    "delay range {min}..{max} is inverted"
                )));
            }
        }
        Ok(())
    }

    fn sample(&self, rng: &mut SplitMix64) -> u64 {
        match self {
            DelayModel::Zero => 0,
            DelayModel::Fixed { delay } => *delay,
            DelayModel::Uniform { min, max } => rng.range(*min, *max),
        }
    }
}

/// Everything one run depends on besides the world itself. Identical configs
/// over identical worlds yield identical traces.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimConfig {
    pub seed: u64,
    #[serde(default)]
    pub delay: DelayModel,
    #[serde(default)]
    pub clock_start: Timestamp,
    /// Stop processing events after this instant; exceeding it is reported,
    /// not fatal.
    #[serde(default)]
    pub horizon: Option<Timestamp>,
    pub script: Vec<Step>,
    /// Force every scripted request's tau (sweeps use this).
    #[serde(default)]
    pub tau_override: Option<f64>,
    /// Force every scripted request's hop limit.
    #[serde(default)]
    pub hops_override: Option<u32>,
}

impl SimConfig {
    pub fn from_scenario(seed: u64, scenario: &ScenarioDoc) -> SimConfig {
        SimConfig {
            seed,
            delay: DelayModel::Zero,
            clock_start: Timestamp(0),
            horizon: scenario.horizon.map(Timestamp),
            script: scenario.steps.clone(),
            tau_override: None,
            hops_override: None,
        }
    }
}

/// Model parameters shared by every node in the world.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct WorldParams {
    pub flood: FloodParams,
    pub trust: TrustParams,
    pub similarity: SimilarityParams,
    pub sharing: SharingConfig,
}

/// Parsed fixtures a world is built from; `build_world` can be called once
/// per run or sweep point for a fresh start.
#[derive(Debug, Clone)]
pub struct WorldAssets {
    pub taxonomy: Hierarchy,
    pub meronomy: Hierarchy,
    pub graph: GraphDoc,
    pub params: WorldParams,
}

impl WorldAssets {
    pub fn build_world(&self) -> Result<World, SimError> {
        World::build(
            self.taxonomy.clone(),
            self.meronomy.clone(),
            &self.graph,
            self.params.clone(),
        )
    }
}

#[derive(Debug, Clone)]
struct TaskMeta {
    label: String,
    requester: NodeId,
    task: Task,
}

/// The simulated community: hierarchies, graph, per-node protocol state,
/// ledgers and request records.
#[derive(Debug)]
pub struct World {
    taxonomy: Hierarchy,
    meronomy: Hierarchy,
    graph: SocialGraph,
    params: WorldParams,
    nodes: BTreeMap<NodeId, ProtocolNode>,
    ledgers: BTreeMap<NodeId, RatingLedger>,
    records: BTreeMap<(NodeId, TaskId), RequestRecord>,
    task_meta: BTreeMap<TaskId, TaskMeta>,
    labels: BTreeMap<String, TaskId>,
    next_task: u64,
}

impl World {
    /// Instantiates the world from a graph document: one protocol node and
    /// one ledger per member, trust overrides and seed ratings applied, and
    /// ratings shared according to the sharing policy.
    pub fn build(
        taxonomy: Hierarchy,
        meronomy: Hierarchy,
        graph_doc: &GraphDoc,
        params: WorldParams,
    ) -> Result<World, SimError> {
        params.flood.validate()?;
        params.trust.validate()?;
        params
            .similarity
            .validate()
            .map_err(|e| SimError::Graph(e.to_string()))?;
        let graph = SocialGraph::from_doc(graph_doc)?;

        let mut nodes = BTreeMap::new();
        let mut ledgers = BTreeMap::new();
        for id in graph.nodes() {
            nodes.insert(
                id.clone(),
                ProtocolNode::new(id.clone(), graph.neighbors(id)),
            );
            ledgers.insert(id.clone(), RatingLedger::new(id.clone()));
        }

        let default_key = meronomy.label(meronomy.root()).to_string();
        for seed in &graph_doc.trust {
            let from = NodeId::from(seed.from.as_str());
            let to = NodeId::from(seed.to.as_str());
            for end in [&from, &to] {
                if !graph.contains(end) {
                    return Err(SimError::Graph(format!(
                        "trust seed references unknown node {end}"
                    )));
                }
            }
            let key = seed.task_key.clone().unwrap_or_else(|| default_key.clone());
            ledgers
                .get_mut(&from)
                .unwrap()
                .set_override(to, key, seed.value)
                .map_err(|e| SimError::Graph(format!("trust seed {}: {e}", seed.from)))?;
        }

        for seed in &graph_doc.ratings {
            let requester = NodeId::from(seed.requester.as_str());
            let volunteer = NodeId::from(seed.volunteer.as_str());
            for end in [&requester, &volunteer] {
                if !graph.contains(end) {
                    return Err(SimError::Graph(format!(
                        "rating seed references unknown node {end}"
                    )));
                }
            }
            let rating = Rating::new(
                requester.clone(),
                volunteer,
                meronomy.concept(&seed.activity)?,
                taxonomy.concept(&seed.object)?,
                RatingValue::new(seed.value)?,
                Timestamp(seed.time),
            )?;
            ledgers.get_mut(&requester).unwrap().record(rating)?;
        }

        if params.trust.sharing_policy != SharingPolicy::None {
            let ctx = SharingContext {
                taxonomy: &taxonomy,
                meronomy: &meronomy,
                trust_params: &params.trust,
                sim_params: &params.similarity,
                now: Timestamp(u64::MAX),
            };
            trust::share_ratings(
                &mut ledgers,
                params.trust.sharing_policy,
                &params.sharing,
                &ctx,
            )?;
        }

        Ok(World {
            taxonomy,
            meronomy,
            graph,
            params,
            nodes,
            ledgers,
            records: BTreeMap::new(),
            task_meta: BTreeMap::new(),
            labels: BTreeMap::new(),
            next_task: 1,
        })
    }

    pub fn taxonomy(&self) -> &Hierarchy {
        &self.taxonomy
    }

    pub fn meronomy(&self) -> &Hierarchy {
        &self.meronomy
    }

    pub fn graph(&self) -> &SocialGraph {
        &self.graph
    }

    pub fn params(&self) -> &WorldParams {
        &self.params
    }

    pub fn ledger(&self, node: &NodeId) -> Option<&RatingLedger> {
        self.ledgers.get(node)
    }

    pub fn ledgers(&self) -> &BTreeMap<NodeId, RatingLedger> {
        &self.ledgers
    }

    pub fn ledgers_mut(&mut self) -> &mut BTreeMap<NodeId, RatingLedger> {
        &mut self.ledgers
    }

    pub fn records(&self) -> &BTreeMap<(NodeId, TaskId), RequestRecord> {
        &self.records
    }

    pub fn task_for_label(&self, label: &str) -> Option<TaskId> {
        self.labels.get(label).copied()
    }

    /// Script label, requester and task of a request seen during the run.
    pub fn task_info(&self, task_id: TaskId) -> Option<(&str, &NodeId, &Task)> {
        self.task_meta
            .get(&task_id)
            .map(|m| (m.label.as_str(), &m.requester, &m.task))
    }

    /// Executes a scripted run to quiescence (or the horizon). Protocol and
    /// lifecycle state start fresh; ledgers keep whatever ratings they
    /// already hold, so persisted history carries across runs.
    pub fn run(&mut self, config: &SimConfig) -> Result<RunOutput, SimError> {
        config.delay.validate()?;
        let scenario = ScenarioDoc {
            horizon: None,
            steps: config.script.clone(),
        };
        scenario.validate(&self.graph, &self.taxonomy, &self.meronomy)?;
        if let Some(tau) = config.tau_override {
            if !(0.0..=1.0).contains(&tau) {
                return Err(SimError::Scenario(format!(
                    "tau override {tau} outside [0,1]"
                )));
            }
        }
        for step in &config.script {
            if Timestamp(step.t) < config.clock_start {
                return Err(SimError::Scenario(format!(
                    "step at t={} precedes clock start {}",
                    step.t, config.clock_start
                )));
            }
        }

        // Fresh protocol and lifecycle state for this run.
        for id in self.graph.nodes().cloned().collect::<Vec<_>>() {
            let friends = self.graph.neighbors(&id);
            self.nodes
                .insert(id.clone(), ProtocolNode::new(id, friends));
        }
        self.records.clear();
        self.task_meta.clear();
        self.labels.clear();
        self.next_task = 1;

        let mut engine = Engine {
            world: self,
            config,
            rng: SplitMix64::new(config.seed),
            queue: BTreeMap::new(),
            seq: 0,
            sweeps_scheduled: BTreeSet::new(),
            clock: config.clock_start,
            out: RunOutput::default(),
            helped: BTreeSet::new(),
            volunteer_pairs: BTreeSet::new(),
            help_times: BTreeMap::new(),
        };
        engine.enqueue_script();
        engine.drain();
        let mut out = engine.out;

        for rec in self.records.values() {
            let role = match rec.role() {
                lifecycle::Role::Requester => "requester",
                lifecycle::Role::Requestee => "requestee",
            };
            *out.metrics
                .terminal_state_census
                .entry(format!("{role}:{}", rec.state().name()))
                .or_insert(0) += 1;
        }
        Ok(out)
    }
}

/// Outcome classification of one delivery, as recorded in the run output.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeliveryStatus {
    New,
    Reflood,
    NoImprovement,
    SelfInPath,
    PastDeadline,
}

impl DeliveryStatus {
    fn name(self) -> &'static str {
        match self {
            DeliveryStatus::New => "new",
            DeliveryStatus::Reflood => "reflood",
            DeliveryStatus::NoImprovement => "no_improvement",
            DeliveryStatus::SelfInPath => "self_in_path",
            DeliveryStatus::PastDeadline => "past_deadline",
        }
    }

    pub fn accepted(self) -> bool {
        matches!(self, DeliveryStatus::New | DeliveryStatus::Reflood)
    }
}

/// One transport delivery, kept for analysis and invariant checking.
#[derive(Debug, Clone)]
pub struct DeliveryRecord {
    pub time: Timestamp,
    pub to: NodeId,
    pub task_id: TaskId,
    pub message_type: MessageType,
    pub pathtrust: f64,
    /// Edges the message traversed to reach the recipient.
    pub hops_traversed: usize,
    pub status: DeliveryStatus,
}

#[derive(Debug, Default)]
pub struct RunOutput {
    pub metrics: Metrics,
    pub trace: Vec<String>,
    pub deliveries: Vec<DeliveryRecord>,
    /// Nodes whose user saw each notification, per request and type.
    pub reach: BTreeMap<(TaskId, MessageType), BTreeSet<NodeId>>,
    pub sends: u64,
    pub horizon_exceeded: bool,
}

impl RunOutput {
    pub fn trace_text(&self) -> String {
        let mut text = self.trace.join("\n");
        text.push('\n');
        text
    }
}

const CLASS_DEADLINE: u8 = 0;
const CLASS_DIRECT: u8 = 1;
const CLASS_FLOOD: u8 = 2;
const CLASS_SCRIPT: u8 = 3;

/// Queue key: time, class, inverted path trust (floods only), sequence.
type EventKey = (Timestamp, u8, u64, u64);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum DirectKind {
    Volunteer,
    Done,
    Withdraw,
    Assigned,
    CancelledDirect,
}

#[derive(Debug)]
enum Payload {
    DeadlineSweep,
    Flood {
        to: NodeId,
        msg: FloodMessage,
    },
    Direct {
        to: NodeId,
        from: NodeId,
        task_id: TaskId,
        kind: DirectKind,
    },
    Script {
        node: NodeId,
        action: Action,
    },
}

struct Engine<'w> {
    world: &'w mut World,
    config: &'w SimConfig,
    rng: SplitMix64,
    queue: BTreeMap<EventKey, Payload>,
    seq: u64,
    sweeps_scheduled: BTreeSet<Timestamp>,
    clock: Timestamp,
    out: RunOutput,
    helped: BTreeSet<NodeId>,
    volunteer_pairs: BTreeSet<(TaskId, NodeId)>,
    help_times: BTreeMap<TaskId, Timestamp>,
}

impl Engine<'_> {
    fn enqueue(&mut self, time: Timestamp, class: u8, trust_key: u64, payload: Payload) {
        self.seq += 1;
        self.queue
            .insert((time, class, trust_key, self.seq), payload);
    }

    fn enqueue_script(&mut self) {
        for step in self.config.script.clone() {
            self.enqueue(
                Timestamp(step.t),
                CLASS_SCRIPT,
                0,
                Payload::Script {
                    node: NodeId::from(step.node.as_str()),
                    action: step.action,
                },
            );
        }
    }

    fn schedule_sweeps(&mut self, deadlines: &Deadlines) {
        for t in [
            deadlines.volunteer_by,
            deadlines.assign_by,
            deadlines.end_date,
        ] {
            if self.sweeps_scheduled.insert(t) {
                self.enqueue(t, CLASS_DEADLINE, 0, Payload::DeadlineSweep);
            }
        }
    }

    fn trace(&mut self, line: String) {
        self.out.trace.push(line);
    }

    fn drain(&mut self) {
        while let Some((&key, _)) = self.queue.iter().next() {
            if let Some(horizon) = self.config.horizon {
                if key.0 > horizon {
                    let remaining = self.queue.len();
                    self.trace(format!(
                        "t={horizon} ev=horizon_exceeded remaining={remaining}"
                    ));
                    self.out.horizon_exceeded = true;
                    return;
                }
            }
            let payload = self.queue.remove(&key).expect("key just observed");
            self.clock = key.0;
            match payload {
                Payload::DeadlineSweep => self.on_deadline_sweep(),
                Payload::Flood { to, msg } => self.on_flood(to, msg),
                Payload::Direct {
                    to,
                    from,
                    task_id,
                    kind,
                } => self.on_direct(to, from, task_id, kind),
                Payload::Script { node, action } => self.on_script(node, action),
            }
        }
    }

    fn on_deadline_sweep(&mut self) {
        let events = lifecycle::fire_deadlines(&mut self.world.records, self.clock);
        for ev in events {
            let owner = ev.actor.clone();
            let task_id = ev.task_id;
            self.apply_lifecycle(owner, task_id, ev);
        }
    }

    fn delay(&mut self) -> u64 {
        self.config.delay.sample(&mut self.rng)
    }

    fn enqueue_sends(&mut self, sends: Vec<SendOp>, from: &NodeId) {
        for send in sends {
            let delay = self.delay();
            let time = self.clock + crate::ids::TimeDelta(delay);
            self.out.sends += 1;
            self.trace(format!(
                "t={} ev=send from={from} to={} task={} type={} pathtrust={} path={}",
                self.clock,
                send.to,
                send.msg.task_id,
                send.msg.message_type,
                send.msg.pathtrust,
                send.msg
                    .path
                    .iter()
                    .map(|n| n.as_str())
                    .collect::<Vec<_>>()
                    .join(","),
            ));
            let trust_key = !send.msg.pathtrust.to_bits();
            self.enqueue(
                time,
                CLASS_FLOOD,
                trust_key,
                Payload::Flood {
                    to: send.to,
                    msg: send.msg,
                },
            );
        }
    }

    fn enqueue_direct(&mut self, to: NodeId, from: NodeId, task_id: TaskId, kind: DirectKind) {
        let delay = self.delay();
        let time = self.clock + crate::ids::TimeDelta(delay);
        self.enqueue(
            time,
            CLASS_DIRECT,
            0,
            Payload::Direct {
                to,
                from,
                task_id,
                kind,
            },
        );
    }

    fn on_flood(&mut self, to: NodeId, msg: FloodMessage) {
        let world = &mut *self.world;
        let node = world
            .nodes
            .get_mut(&to)
            .expect("deliveries target graph nodes");
        let ledgers = &world.ledgers;
        let taxonomy = &world.taxonomy;
        let meronomy = &world.meronomy;
        let params = &world.params;
        let now = self.clock;
        let trust_fn = |from: &NodeId, friend: &NodeId, task: &Task| -> f64 {
            evaluate_trust(ledgers, from, friend, task, now, taxonomy, meronomy, params)
        };
        let delivery = node.propagate(&msg, now, &params.flood, trust_fn);

        let status = match (&delivery.dropped, delivery.reflooded) {
            (None, false) => DeliveryStatus::New,
            (None, true) => DeliveryStatus::Reflood,
            (Some(crate::protocol::DropReason::NoImprovement), _) => DeliveryStatus::NoImprovement,
            (Some(crate::protocol::DropReason::SelfInPath), _) => DeliveryStatus::SelfInPath,
            (Some(crate::protocol::DropReason::PastDeadline), _) => DeliveryStatus::PastDeadline,
        };
        self.out.deliveries.push(DeliveryRecord {
            time: self.clock,
            to: to.clone(),
            task_id: msg.task_id,
            message_type: msg.message_type,
            pathtrust: msg.pathtrust,
            hops_traversed: msg.path.len(),
            status,
        });
        self.trace(format!(
            "t={} ev=deliver to={to} task={} type={} pathtrust={} status={}",
            self.clock,
            msg.task_id,
            msg.message_type,
            msg.pathtrust,
            status.name(),
        ));
        if status.accepted() {
            match msg.message_type {
                MessageType::Help => self.out.metrics.help_delivered += 1,
                MessageType::NotNeeded => self.out.metrics.notneeded_delivered += 1,
                MessageType::Cancelled => self.out.metrics.cancelled_delivered += 1,
            }
            self.out
                .reach
                .entry((msg.task_id, msg.message_type))
                .or_default()
                .insert(to.clone());
        }
        if delivery.reflooded {
            self.out.metrics.re_flood_events += 1;
        }

        if let Some(notice) = delivery.notice {
            self.on_notice(&to, notice);
        }
        self.enqueue_sends(delivery.sends, &to);
    }

    fn on_notice(&mut self, at: &NodeId, notice: crate::protocol::Notice) {
        match notice {
            crate::protocol::Notice::Help {
                task_id,
                requester,
                task,
                respond_by,
                task_deadline,
            } => {
                self.trace(format!(
                    "t={} ev=notice node={at} task={task_id} kind=help",
                    self.clock
                ));
                if self.helped.insert(at.clone()) {
                    self.out.metrics.nodes_reached += 1;
                }
                self.create_requestee_record(
                    at,
                    task_id,
                    requester,
                    task,
                    respond_by,
                    task_deadline,
                );
            }
            crate::protocol::Notice::NotNeeded { task_id, exempt } => {
                self.trace(format!(
                    "t={} ev=notice node={at} task={task_id} kind=not_needed",
                    self.clock
                ));
                let ev = LifecycleEvent {
                    kind: EventKind::MsgNotNeeded { exempt },
                    actor: at.clone(),
                    task_id,
                };
                self.apply_lifecycle(at.clone(), task_id, ev);
            }
            crate::protocol::Notice::Cancelled { task_id } => {
                self.trace(format!(
                    "t={} ev=notice node={at} task={task_id} kind=cancelled",
                    self.clock
                ));
                let ev = LifecycleEvent {
                    kind: EventKind::MsgCancelled,
                    actor: at.clone(),
                    task_id,
                };
                self.apply_lifecycle(at.clone(), task_id, ev);
            }
        }
    }

    fn create_requestee_record(
        &mut self,
        at: &NodeId,
        task_id: TaskId,
        requester: NodeId,
        task: Task,
        respond_by: Timestamp,
        task_deadline: Timestamp,
    ) {
        let key = (at.clone(), task_id);
        if self.world.records.contains_key(&key) {
            return;
        }
        let deadlines = Deadlines::with_midpoint_assign(respond_by, task_deadline)
            .expect("respond-by precedes the task deadline");
        let record =
            RequestRecord::new_requestee(task_id, at.clone(), requester.clone(), deadlines);
        self.world.records.insert(key, record);
        self.schedule_sweeps(&deadlines);
        self.world
            .task_meta
            .entry(task_id)
            .or_insert_with(|| TaskMeta {
                label: format!("task-{task_id}"),
                requester,
                task,
            });
    }

    fn on_direct(&mut self, to: NodeId, from: NodeId, task_id: TaskId, kind: DirectKind) {
        let ev_kind = match kind {
            DirectKind::Volunteer => EventKind::MsgVolunteer,
            DirectKind::Done => EventKind::MsgDone,
            DirectKind::Withdraw => EventKind::MsgCancel,
            DirectKind::Assigned => EventKind::MsgAssigned,
            DirectKind::CancelledDirect => EventKind::MsgCancelled,
        };
        let ev = LifecycleEvent {
            kind: ev_kind,
            actor: from.clone(),
            task_id,
        };
        let applied = self.apply_lifecycle(to, task_id, ev);
        if applied && kind == DirectKind::Volunteer && self.volunteer_pairs.insert((task_id, from))
        {
            self.out.metrics.volunteers_count += 1;
            if let Some(&helped_at) = self.help_times.get(&task_id) {
                self.out
                    .metrics
                    .first_volunteer_latency
                    .entry(task_id)
                    .or_insert(self.clock.0 - helped_at.0);
            }
        }
    }

    fn on_script(&mut self, node: NodeId, action: Action) {
        match action {
            Action::Help {
                label,
                activity,
                object,
                description,
                tau,
                hops,
                deadline,
            } => self.start_request(
                node,
                label,
                activity,
                object,
                description,
                tau,
                hops,
                deadline,
            ),
            other => self.user_action(node, other),
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn start_request(
        &mut self,
        node: NodeId,
        label: String,
        activity: String,
        object: String,
        description: String,
        tau: f64,
        hops: u32,
        deadline: u64,
    ) {
        let tau = self.config.tau_override.unwrap_or(tau);
        let hops = self.config.hops_override.unwrap_or(hops);
        let task_id = TaskId(self.world.next_task);
        self.world.next_task += 1;
        let task = Task {
            activity: self.world.meronomy.concept(&activity).expect("validated"),
            object: self.world.taxonomy.concept(&object).expect("validated"),
            description,
        };
        let task_deadline = Timestamp(deadline);

        let initiated = {
            let world = &mut *self.world;
            let requester = world.nodes.get_mut(&node).expect("validated");
            let ledgers = &world.ledgers;
            let taxonomy = &world.taxonomy;
            let meronomy = &world.meronomy;
            let params = &world.params;
            let now = self.clock;
            let trust_fn = |from: &NodeId, friend: &NodeId, task: &Task| -> f64 {
                evaluate_trust(ledgers, from, friend, task, now, taxonomy, meronomy, params)
            };
            requester.initiate_request(
                task_id,
                task.clone(),
                task_deadline,
                tau,
                hops,
                now,
                &params.flood,
                trust_fn,
            )
        };
        let initiated = match initiated {
            Ok(i) => i,
            Err(e) => {
                self.trace(format!(
                    "t={} ev=rejected node={node} act=help label={label} reason={e}",
                    self.clock
                ));
                return;
            }
        };
        self.trace(format!(
            "t={} ev=action node={node} act=help label={label} task={task_id} tau={tau} hops={hops} deadline={deadline}",
            self.clock
        ));
        self.world.labels.insert(label.clone(), task_id);
        self.world.task_meta.insert(
            task_id,
            TaskMeta {
                label,
                requester: node.clone(),
                task,
            },
        );
        self.help_times.insert(task_id, self.clock);

        let deadlines = Deadlines::with_midpoint_assign(initiated.respond_by, task_deadline)
            .expect("respond-by precedes the task deadline");
        let record = RequestRecord::new_requester(task_id, node.clone(), deadlines);
        self.world.records.insert((node.clone(), task_id), record);
        self.schedule_sweeps(&deadlines);
        self.enqueue_sends(initiated.sends, &node);
    }

    fn user_action(&mut self, node: NodeId, action: Action) {
        let label = action.label().to_string();
        let act_name = action.name();
        let Some(task_id) = self.world.labels.get(&label).copied() else {
            self.trace(format!(
                "t={} ev=rejected node={node} act={act_name} label={label} reason=unknown_label",
                self.clock
            ));
            return;
        };
        let kind = match action {
            Action::Accept { .. } => EventKind::ClickAccept,
            Action::Decline { .. } => EventKind::ClickDecline,
            Action::Cancel { .. } => EventKind::ClickCancel,
            Action::Assign { volunteer, .. } => EventKind::ClickAssign {
                volunteer: NodeId::from(volunteer.as_str()),
            },
            Action::Done { .. } => EventKind::ClickDone,
            Action::Rate { value, .. } => EventKind::ClickRate {
                value: RatingValue::new(value).expect("validated"),
            },
            Action::Chat { .. } => EventKind::ClickChat,
            Action::Call { .. } => EventKind::ClickCall,
            Action::Help { .. } => unreachable!("help handled by start_request"),
        };
        self.trace(format!(
            "t={} ev=action node={node} act={act_name} label={label} task={task_id}",
            self.clock
        ));
        let ev = LifecycleEvent {
            kind,
            actor: node.clone(),
            task_id,
        };
        self.apply_lifecycle(node, task_id, ev);
    }

    /// Routes an event to the record it addresses, applies the transition,
    /// traces the outcome, and executes the resulting effects. Returns
    /// whether the event was applied (vs absorbed, rejected or unaddressed).
    fn apply_lifecycle(&mut self, owner: NodeId, task_id: TaskId, ev: LifecycleEvent) -> bool {
        let key = (owner.clone(), task_id);
        let Some(record) = self.world.records.get(&key) else {
            self.trace(format!(
                "t={} ev=absorbed node={owner} task={task_id} event={} reason=no_record",
                self.clock, ev.kind
            ));
            return false;
        };
        let ctx = TransitionCtx { now: self.clock };
        match lifecycle::transition(record, &ev, &ctx) {
            Err(e) => {
                self.trace(format!(
                    "t={} ev=rejected node={owner} task={task_id} event={} reason={e}",
                    self.clock, ev.kind
                ));
                false
            }
            Ok(tr) => {
                let applied = tr.disposition == Disposition::Applied;
                let old_state = record.state().name();
                let new_state = tr.record.state().name();
                if applied {
                    self.trace(format!(
                        "t={} ev=state node={owner} task={task_id} event={} from={old_state} to={new_state}",
                        self.clock, ev.kind
                    ));
                } else {
                    self.trace(format!(
                        "t={} ev=absorbed node={owner} task={task_id} event={}",
                        self.clock, ev.kind
                    ));
                }
                let effects = tr.effects.clone();
                self.world.records.insert(key, tr.record);
                for effect in effects {
                    self.run_effect(&owner, task_id, effect);
                }
                applied
            }
        }
    }

    fn run_effect(&mut self, owner: &NodeId, task_id: TaskId, effect: Effect) {
        match effect {
            Effect::SendVolunteer { requester } => {
                self.enqueue_direct(requester, owner.clone(), task_id, DirectKind::Volunteer)
            }
            Effect::SendDone { requester } => {
                self.enqueue_direct(requester, owner.clone(), task_id, DirectKind::Done)
            }
            Effect::SendWithdraw { requester } => {
                self.enqueue_direct(requester, owner.clone(), task_id, DirectKind::Withdraw)
            }
            Effect::NotifyAssigned { volunteer } => {
                self.enqueue_direct(volunteer, owner.clone(), task_id, DirectKind::Assigned)
            }
            Effect::NotifyCancelledDirect { volunteer } => self.enqueue_direct(
                volunteer,
                owner.clone(),
                task_id,
                DirectKind::CancelledDirect,
            ),
            Effect::BroadcastNotNeeded { exempt } => {
                self.broadcast(owner, task_id, MessageType::NotNeeded, Some(exempt))
            }
            Effect::BroadcastCancelled => {
                self.broadcast(owner, task_id, MessageType::Cancelled, None)
            }
            Effect::RecordRating { volunteer, value } => {
                let meta = self
                    .world
                    .task_meta
                    .get(&task_id)
                    .expect("rated tasks have metadata");
                let rating = Rating::new(
                    owner.clone(),
                    volunteer.clone(),
                    meta.task.activity,
                    meta.task.object,
                    value,
                    self.clock,
                );
                let result = rating.and_then(|r| {
                    self.world
                        .ledgers
                        .get_mut(owner)
                        .expect("graph node")
                        .record(r)
                });
                match result {
                    Ok(()) => self.trace(format!(
                        "t={} ev=rating requester={owner} volunteer={volunteer} task={task_id} value={}",
                        self.clock,
                        value.get()
                    )),
                    Err(e) => self.trace(format!(
                        "t={} ev=rejected node={owner} task={task_id} event=Click_Rate reason={e}",
                        self.clock
                    )),
                }
            }
        }
    }

    fn broadcast(
        &mut self,
        owner: &NodeId,
        task_id: TaskId,
        message_type: MessageType,
        exempt: Option<NodeId>,
    ) {
        let sends = {
            let world = &mut *self.world;
            let node = world.nodes.get_mut(owner).expect("graph node");
            let ledgers = &world.ledgers;
            let taxonomy = &world.taxonomy;
            let meronomy = &world.meronomy;
            let params = &world.params;
            let now = self.clock;
            let trust_fn = |from: &NodeId, friend: &NodeId, task: &Task| -> f64 {
                evaluate_trust(ledgers, from, friend, task, now, taxonomy, meronomy, params)
            };
            node.initiate_broadcast(task_id, message_type, exempt, &params.flood, trust_fn)
        };
        match sends {
            Ok(sends) => {
                let owner = owner.clone();
                self.enqueue_sends(sends, &owner);
            }
            Err(e) => self.trace(format!(
                "t={} ev=rejected node={owner} task={task_id} event=broadcast reason={e}",
                self.clock
            )),
        }
    }
}

/// Trust used by the flooding gate: the combined task-dependent trust from
/// the sender's ledger, over shared ratings when sharing is enabled.
#[allow(clippy::too_many_arguments)]
fn evaluate_trust(
    ledgers: &BTreeMap<NodeId, RatingLedger>,
    from: &NodeId,
    friend: &NodeId,
    task: &Task,
    now: Timestamp,
    taxonomy: &Hierarchy,
    meronomy: &Hierarchy,
    params: &WorldParams,
) -> f64 {
    let ledger = &ledgers[from];
    let result = if params.trust.sharing_policy == SharingPolicy::None {
        trust::trust(
            ledger,
            from,
            friend,
            task,
            now,
            taxonomy,
            meronomy,
            &params.trust,
            &params.similarity,
        )
    } else {
        trust::trust_shared(
            ledger,
            from,
            friend,
            task,
            now,
            taxonomy,
            meronomy,
            &params.trust,
            &params.similarity,
        )
    };
    result.expect("trust inputs validated at world build")
}

/// One point of a parameter sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub tau: f64,
    pub hops: u32,
    pub sigma: f64,
    pub tnorm: TNorm,
}

/// Runs the scenario once per grid point on a fresh world, overriding the
/// scripted tau/hops and the flood sigma/T-norm.
pub fn sweep(
    assets: &WorldAssets,
    base: &SimConfig,
    grid: &[SweepPoint],
) -> Result<Vec<(SweepPoint, Metrics)>, SimError> {
    if grid.is_empty() {
        return Err(SimError::EmptyGrid);
    }
    let mut rows = Vec::with_capacity(grid.len());
    for point in grid {
        let mut assets = assets.clone();
        assets.params.flood.sigma = point.sigma;
        assets.params.flood.tnorm = point.tnorm;
        let mut config = base.clone();
        config.tau_override = Some(point.tau);
        config.hops_override = Some(point.hops);
        let mut world = assets.build_world()?;
        let output = world.run(&config)?;
        rows.push((*point, output.metrics));
    }
    Ok(rows)
}

//! Request lifecycle state machines.
//!
//! A request lives twice: once at the requester, once at every requestee the
//! flood reached. Transitions are pure `(record, event) -> (record, effects)`
//! functions; the effects tell the caller what to send or record next.
//!
//! User actions that are illegal in the current state are rejected and
//! reported. Protocol messages and deadline events that no longer apply are
//! absorbed silently, because the transport may deliver stale messages after
//! a local transition; duplicate deliveries at terminal states land there
//! too. Three deadlines (volunteer-by, assign-by, end date) guarantee every
//! record eventually reaches a terminal state.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ids::{NodeId, TaskId, Timestamp};
use crate::trust::RatingValue;

#[derive(Debug, Error, PartialEq)]
pub enum LifecycleError {
    #[error("event {event} is illegal in state {state}")]
    IllegalEvent { state: &'static str, event: String },
    #[error("{0} is not among this request's volunteers")]
    UnknownVolunteer(NodeId),
    #[error("event {0} does not apply to this record's role")]
    WrongRole(String),
    #[error("deadlines must satisfy volunteer_by <= assign_by <= end_date")]
    DeadlineOrder,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RequesterState {
    LookingForVolunteers,
    PendingAssignment1,
    PendingAssignment2,
    Assigned,
    Completed,
    Rated,
    Cancelled,
    Expired,
}

impl RequesterState {
    pub fn is_terminal(self) -> bool {
        matches!(
            self,
            RequesterState::Rated | RequesterState::Cancelled | RequesterState::Expired
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            RequesterState::LookingForVolunteers => "looking_for_volunteers",
            RequesterState::PendingAssignment1 => "pending_assignment_1",
            RequesterState::PendingAssignment2 => "pending_assignment_2",
            RequesterState::Assigned => "assigned",
            RequesterState::Completed => "completed",
            RequesterState::Rated => "rated",
            RequesterState::Cancelled => "cancelled",
            RequesterState::Expired => "expired",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RequesteeState {
    Unanswered,
    Declined,
    Accepted,
    Committed,
    HelpNotNeeded,
    Completed,
    Cancelled,
    Expired,
}

impl RequesteeState {
    pub fn is_terminal(self) -> bool {
        matches!(
            self,
            RequesteeState::HelpNotNeeded
                | RequesteeState::Completed
                | RequesteeState::Cancelled
                | RequesteeState::Expired
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            RequesteeState::Unanswered => "unanswered",
            RequesteeState::Declined => "declined",
            RequesteeState::Accepted => "accepted",
            RequesteeState::Committed => "committed",
            RequesteeState::HelpNotNeeded => "help_not_needed",
            RequesteeState::Completed => "completed",
            RequesteeState::Cancelled => "cancelled",
            RequesteeState::Expired => "expired",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Requester,
    Requestee,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RequestState {
    Requester(RequesterState),
    Requestee(RequesteeState),
}

impl RequestState {
    pub fn is_terminal(self) -> bool {
        match self {
            RequestState::Requester(s) => s.is_terminal(),
            RequestState::Requestee(s) => s.is_terminal(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            RequestState::Requester(s) => s.name(),
            RequestState::Requestee(s) => s.name(),
        }
    }
}

/// Urgency colour shown for a request, derived from its state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Color {
    Green,
    Red,
    Yellow,
    Grey,
}

impl fmt::Display for Color {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Color::Green => "green",
            Color::Red => "red",
            Color::Yellow => "yellow",
            Color::Grey => "grey",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Deadlines {
    pub volunteer_by: Timestamp,
    pub assign_by: Timestamp,
    pub end_date: Timestamp,
}

impl Deadlines {
    pub fn new(
        volunteer_by: Timestamp,
        assign_by: Timestamp,
        end_date: Timestamp,
    ) -> Result<Self, LifecycleError> {
        if volunteer_by <= assign_by && assign_by <= end_date {
            Ok(Deadlines {
                volunteer_by,
                assign_by,
                end_date,
            })
        } else {
            Err(LifecycleError::DeadlineOrder)
        }
    }

    /// Places the assignment deadline halfway between the volunteering
    /// deadline and the end date.
    pub fn with_midpoint_assign(
        volunteer_by: Timestamp,
        end_date: Timestamp,
    ) -> Result<Self, LifecycleError> {
        if volunteer_by > end_date {
            return Err(LifecycleError::DeadlineOrder);
        }
        let assign_by = Timestamp(volunteer_by.0 + (end_date.0 - volunteer_by.0) / 2);
        Deadlines::new(volunteer_by, assign_by, end_date)
    }
}

/// The closed set of events that may touch request state. For protocol
/// messages the event's actor is the sender, which doubles as the volunteer
/// identity for `MsgVolunteer` / `MsgCancel` / `MsgDone`.
#[derive(Debug, Clone, PartialEq)]
pub enum EventKind {
    ClickHelp,
    MsgVolunteer,
    ClickAssign { volunteer: NodeId },
    MsgDone,
    PassedEndDate,
    ClickRate { value: RatingValue },
    PassedDeadlineV,
    PassedDeadlineA,
    ClickCancel,
    MsgCancel,
    ClickChat,
    MsgChat,
    ClickCall,
    MsgHelp,
    ClickDecline,
    ClickAccept,
    MsgAssigned,
    MsgNotNeeded { exempt: Option<NodeId> },
    MsgCancelled,
    ClickDone,
}

impl EventKind {
    /// User actions get rejected when illegal; everything else (protocol
    /// messages, deadlines) is absorbed, since stale deliveries are normal.
    pub fn is_user_action(&self) -> bool {
        matches!(
            self,
            EventKind::ClickHelp
                | EventKind::ClickAssign { .. }
                | EventKind::ClickRate { .. }
                | EventKind::ClickCancel
                | EventKind::ClickChat
                | EventKind::ClickCall
                | EventKind::ClickDecline
                | EventKind::ClickAccept
                | EventKind::ClickDone
        )
    }

    pub fn name(&self) -> &'static str {
        match self {
            EventKind::ClickHelp => "Click_Help",
            EventKind::MsgVolunteer => "Msg_Volunteer",
            EventKind::ClickAssign { .. } => "Click_Assign",
            EventKind::MsgDone => "Msg_Done",
            EventKind::PassedEndDate => "Passed_EndDate",
            EventKind::ClickRate { .. } => "Click_Rate",
            EventKind::PassedDeadlineV => "Passed_DeadlineV",
            EventKind::PassedDeadlineA => "Passed_DeadlineA",
            EventKind::ClickCancel => "Click_Cancel",
            EventKind::MsgCancel => "Msg_Cancel",
            EventKind::ClickChat => "Click_Chat",
            EventKind::MsgChat => "Msg_Chat",
            EventKind::ClickCall => "Click_Call",
            EventKind::MsgHelp => "Msg_Help",
            EventKind::ClickDecline => "Click_Decline",
            EventKind::ClickAccept => "Click_Accept",
            EventKind::MsgAssigned => "Msg_Assigned",
            EventKind::MsgNotNeeded { .. } => "Msg_NotNeeded",
            EventKind::MsgCancelled => "Msg_Cancelled",
            EventKind::ClickDone => "Click_Done",
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LifecycleEvent {
    pub kind: EventKind,
    pub actor: NodeId,
    pub task_id: TaskId,
}

/// What a transition asks the surrounding system to do.
#[derive(Debug, Clone, PartialEq)]
pub enum Effect {
    /// Requestee accepted: tell the requester (Msg_Volunteer).
    SendVolunteer { requester: NodeId },
    /// Requestee finished the task: tell the requester (Msg_Done).
    SendDone { requester: NodeId },
    /// Requestee withdrew: tell the requester (Msg_Cancel).
    SendWithdraw { requester: NodeId },
    /// Requester chose a volunteer: tell them directly (Msg_Assigned).
    NotifyAssigned { volunteer: NodeId },
    /// Requester chose a volunteer: flood NOTNEEDED to everyone else.
    BroadcastNotNeeded { exempt: NodeId },
    /// Requester cancelled before assigning: flood CANCELLED.
    BroadcastCancelled,
    /// Requester cancelled after assigning: tell the chosen volunteer only.
    NotifyCancelledDirect { volunteer: NodeId },
    /// Requester rated the completed task.
    RecordRating {
        volunteer: NodeId,
        value: RatingValue,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Disposition {
    /// The event transitioned the record (possibly a self-loop).
    Applied,
    /// Stale or duplicate event, silently ignored.
    Absorbed,
}

#[derive(Debug)]
pub struct Transition {
    pub record: RequestRecord,
    pub effects: Vec<Effect>,
    pub disposition: Disposition,
}

pub struct TransitionCtx {
    pub now: Timestamp,
}

/// One request as seen by one member, requester or requestee side.
#[derive(Debug, Clone, PartialEq)]
pub struct RequestRecord {
    pub task_id: TaskId,
    /// Whose record this is.
    pub owner: NodeId,
    /// Who asked for help (equals `owner` on the requester side).
    pub requester: NodeId,
    state: RequestState,
    volunteers: BTreeSet<NodeId>,
    chosen: Option<NodeId>,
    pub deadlines: Deadlines,
    fired_v: bool,
    fired_a: bool,
    fired_end: bool,
}

impl RequestRecord {
    /// Click_Help: the requester's record starts looking for volunteers.
    pub fn new_requester(task_id: TaskId, owner: NodeId, deadlines: Deadlines) -> Self {
        RequestRecord {
            task_id,
            requester: owner.clone(),
            owner,
            state: RequestState::Requester(RequesterState::LookingForVolunteers),
            volunteers: BTreeSet::new(),
            chosen: None,
            deadlines,
            fired_v: false,
            fired_a: false,
            fired_end: false,
        }
    }

    /// Msg_Help: a requestee's record starts unanswered.
    pub fn new_requestee(
        task_id: TaskId,
        owner: NodeId,
        requester: NodeId,
        deadlines: Deadlines,
    ) -> Self {
        RequestRecord {
            task_id,
            owner,
            requester,
            state: RequestState::Requestee(RequesteeState::Unanswered),
            volunteers: BTreeSet::new(),
            chosen: None,
            deadlines,
            fired_v: false,
            fired_a: false,
            fired_end: false,
        }
    }

    pub fn role(&self) -> Role {
        match self.state {
            RequestState::Requester(_) => Role::Requester,
            RequestState::Requestee(_) => Role::Requestee,
        }
    }

    pub fn state(&self) -> RequestState {
        self.state
    }

    pub fn volunteers(&self) -> impl Iterator<Item = &NodeId> {
        self.volunteers.iter()
    }

    pub fn chosen(&self) -> Option<&NodeId> {
        self.chosen.as_ref()
    }
}

/// Colour per state, straight from the state tables.
pub fn color_of(record: &RequestRecord) -> Color {
    match record.state {
        RequestState::Requester(s) => match s {
            RequesterState::LookingForVolunteers => Color::Yellow,
            RequesterState::PendingAssignment1 => Color::Green,
            RequesterState::PendingAssignment2 => Color::Red,
            RequesterState::Assigned => Color::Yellow,
            RequesterState::Completed => Color::Green,
            RequesterState::Rated | RequesterState::Cancelled | RequesterState::Expired => {
                Color::Grey
            }
        },
        RequestState::Requestee(s) => match s {
            RequesteeState::Unanswered => Color::Green,
            RequesteeState::Declined => Color::Grey,
            RequesteeState::Accepted => Color::Yellow,
            RequesteeState::Committed => Color::Red,
            RequesteeState::HelpNotNeeded
            | RequesteeState::Completed
            | RequesteeState::Cancelled
            | RequesteeState::Expired => Color::Grey,
        },
    }
}

fn applied(record: RequestRecord, effects: Vec<Effect>) -> Result<Transition, LifecycleError> {
    Ok(Transition {
        record,
        effects,
        disposition: Disposition::Applied,
    })
}

fn absorbed(record: &RequestRecord) -> Result<Transition, LifecycleError> {
    Ok(Transition {
        record: record.clone(),
        effects: Vec::new(),
        disposition: Disposition::Absorbed,
    })
}

/// Reject user actions, absorb stale protocol traffic.
fn fallback(record: &RequestRecord, ev: &LifecycleEvent) -> Result<Transition, LifecycleError> {
    if ev.kind.is_user_action() {
        Err(LifecycleError::IllegalEvent {
            state: record.state.name(),
            event: ev.kind.name().to_string(),
        })
    } else {
        absorbed(record)
    }
}

/// Applies one event to a requester-side record.
pub fn requester_transition(
    record: &RequestRecord,
    ev: &LifecycleEvent,
    ctx: &TransitionCtx,
) -> Result<Transition, LifecycleError> {
    use RequesterState::*;
    let state = match record.state {
        RequestState::Requester(s) => s,
        RequestState::Requestee(_) => return Err(LifecycleError::WrongRole(ev.kind.name().into())),
    };
    let mut rec = record.clone();
    let set_state = |rec: &mut RequestRecord, s: RequesterState| {
        rec.state = RequestState::Requester(s);
    };

    // Chat and calls never change state; they are only available while
    // volunteers exist and the task is not completed.
    if matches!(
        ev.kind,
        EventKind::ClickChat | EventKind::ClickCall | EventKind::MsgChat
    ) {
        return match state {
            PendingAssignment1 | PendingAssignment2 | Assigned => applied(rec, vec![]),
            _ => fallback(record, ev),
        };
    }

    match (state, &ev.kind) {
        (LookingForVolunteers, EventKind::MsgVolunteer) => {
            rec.volunteers.insert(ev.actor.clone());
            set_state(&mut rec, PendingAssignment1);
            applied(rec, vec![])
        }
        (PendingAssignment1, EventKind::MsgVolunteer) => {
            if rec.volunteers.insert(ev.actor.clone()) {
                applied(rec, vec![])
            } else {
                absorbed(record)
            }
        }
        (PendingAssignment1 | PendingAssignment2, EventKind::ClickAssign { volunteer }) => {
            if !rec.volunteers.contains(volunteer) {
                return Err(LifecycleError::UnknownVolunteer(volunteer.clone()));
            }
            rec.chosen = Some(volunteer.clone());
            set_state(&mut rec, Assigned);
            applied(
                rec,
                vec![
                    Effect::NotifyAssigned {
                        volunteer: volunteer.clone(),
                    },
                    Effect::BroadcastNotNeeded {
                        exempt: volunteer.clone(),
                    },
                ],
            )
        }
        (LookingForVolunteers, EventKind::PassedDeadlineV) => {
            set_state(&mut rec, Expired);
            applied(rec, vec![])
        }
        (PendingAssignment1, EventKind::PassedDeadlineV) => {
            set_state(&mut rec, PendingAssignment2);
            applied(rec, vec![])
        }
        (PendingAssignment2, EventKind::PassedDeadlineA) => {
            set_state(&mut rec, Expired);
            applied(rec, vec![])
        }
        (Assigned, EventKind::MsgDone) => {
            if Some(&ev.actor) != rec.chosen.as_ref() {
                return absorbed(record);
            }
            set_state(&mut rec, Completed);
            applied(rec, vec![])
        }
        (Assigned, EventKind::PassedEndDate) => {
            set_state(&mut rec, Completed);
            applied(rec, vec![])
        }
        (Completed, EventKind::ClickRate { value }) => {
            let volunteer = rec
                .chosen
                .clone()
                .expect("completed requests have a volunteer");
            set_state(&mut rec, Rated);
            applied(
                rec,
                vec![Effect::RecordRating {
                    volunteer,
                    value: *value,
                }],
            )
        }
        (
            LookingForVolunteers | PendingAssignment1 | PendingAssignment2,
            EventKind::ClickCancel,
        ) => {
            set_state(&mut rec, Cancelled);
            applied(rec, vec![Effect::BroadcastCancelled])
        }
        (Assigned, EventKind::ClickCancel) => {
            let volunteer = rec
                .chosen
                .clone()
                .expect("assigned requests have a volunteer");
            set_state(&mut rec, Cancelled);
            applied(rec, vec![Effect::NotifyCancelledDirect { volunteer }])
        }
        (Assigned, EventKind::MsgCancel) => {
            if Some(&ev.actor) == rec.chosen.as_ref() {
                set_state(&mut rec, Cancelled);
                applied(rec, vec![])
            } else {
                // A withdrawal from someone already told their help is not
                // needed; ignore it.
                absorbed(record)
            }
        }
        (PendingAssignment1 | PendingAssignment2, EventKind::MsgCancel) => {
            if !rec.volunteers.remove(&ev.actor) {
                return absorbed(record);
            }
            if rec.volunteers.is_empty() {
                if ctx.now < rec.deadlines.volunteer_by {
                    set_state(&mut rec, LookingForVolunteers);
                } else {
                    set_state(&mut rec, Cancelled);
                }
            }
            applied(rec, vec![])
        }
        _ => fallback(record, ev),
    }
}

/// Applies one event to a requestee-side record.
pub fn requestee_transition(
    record: &RequestRecord,
    ev: &LifecycleEvent,
    ctx: &TransitionCtx,
) -> Result<Transition, LifecycleError> {
    use RequesteeState::*;
    let state = match record.state {
        RequestState::Requestee(s) => s,
        RequestState::Requester(_) => return Err(LifecycleError::WrongRole(ev.kind.name().into())),
    };
    let mut rec = record.clone();
    let set_state = |rec: &mut RequestRecord, s: RequesteeState| {
        rec.state = RequestState::Requestee(s);
    };
    let requester = record.requester.clone();

    // Chat and calls are available while this member counts as a volunteer.
    if matches!(
        ev.kind,
        EventKind::ClickChat | EventKind::ClickCall | EventKind::MsgChat
    ) {
        return match state {
            Accepted | Committed => applied(rec, vec![]),
            _ => fallback(record, ev),
        };
    }

    match (state, &ev.kind) {
        (Unanswered | Declined, EventKind::ClickAccept) => {
            set_state(&mut rec, Accepted);
            applied(rec, vec![Effect::SendVolunteer { requester }])
        }
        (Unanswered, EventKind::ClickDecline) => {
            set_state(&mut rec, Declined);
            applied(rec, vec![])
        }
        (Accepted, EventKind::ClickCancel) => {
            if ctx.now < rec.deadlines.volunteer_by {
                // Before the volunteering deadline a change of mind stays
                // reversible.
                set_state(&mut rec, Declined);
            } else {
                set_state(&mut rec, Cancelled);
            }
            applied(rec, vec![Effect::SendWithdraw { requester }])
        }
        (Accepted, EventKind::MsgAssigned) => {
            set_state(&mut rec, Committed);
            applied(rec, vec![])
        }
        (Unanswered | Declined | Accepted, EventKind::MsgNotNeeded { exempt }) => {
            if exempt.as_ref() == Some(&rec.owner) {
                // The broadcast excludes the chosen volunteer.
                absorbed(record)
            } else {
                set_state(&mut rec, HelpNotNeeded);
                applied(rec, vec![])
            }
        }
        (Unanswered | Declined, EventKind::PassedDeadlineV) => {
            set_state(&mut rec, Expired);
            applied(rec, vec![])
        }
        (Accepted, EventKind::PassedDeadlineA) => {
            set_state(&mut rec, Expired);
            applied(rec, vec![])
        }
        (Committed, EventKind::ClickDone) => {
            set_state(&mut rec, Completed);
            applied(rec, vec![Effect::SendDone { requester }])
        }
        (Committed, EventKind::PassedEndDate) => {
            set_state(&mut rec, Completed);
            applied(rec, vec![])
        }
        (Committed, EventKind::ClickCancel) => {
            set_state(&mut rec, Cancelled);
            applied(rec, vec![Effect::SendWithdraw { requester }])
        }
        (Unanswered | Declined | Accepted | Committed, EventKind::MsgCancelled) => {
            set_state(&mut rec, Cancelled);
            applied(rec, vec![])
        }
        _ => fallback(record, ev),
    }
}

/// Dispatches on the record's role.
pub fn transition(
    record: &RequestRecord,
    ev: &LifecycleEvent,
    ctx: &TransitionCtx,
) -> Result<Transition, LifecycleError> {
    match record.role() {
        Role::Requester => requester_transition(record, ev, ctx),
        Role::Requestee => requestee_transition(record, ev, ctx),
    }
}

/// Emits each record's deadline events exactly once as the clock crosses
/// them, ordered by deadline time (ties by record owner, task, then the
/// volunteer < assign < end sequence).
pub fn fire_deadlines(
    records: &mut BTreeMap<(NodeId, TaskId), RequestRecord>,
    now: Timestamp,
) -> Vec<LifecycleEvent> {
    let mut crossings: Vec<(Timestamp, NodeId, TaskId, u8)> = Vec::new();
    for ((owner, task_id), rec) in records.iter_mut() {
        if !rec.fired_v && now >= rec.deadlines.volunteer_by {
            rec.fired_v = true;
            crossings.push((rec.deadlines.volunteer_by, owner.clone(), *task_id, 0));
        }
        if !rec.fired_a && now >= rec.deadlines.assign_by {
            rec.fired_a = true;
            crossings.push((rec.deadlines.assign_by, owner.clone(), *task_id, 1));
        }
        if !rec.fired_end && now >= rec.deadlines.end_date {
            rec.fired_end = true;
            crossings.push((rec.deadlines.end_date, owner.clone(), *task_id, 2));
        }
    }
    crossings.sort();
    crossings
        .into_iter()
        .map(|(_, owner, task_id, which)| LifecycleEvent {
            kind: match which {
                0 => EventKind::PassedDeadlineV,
                1 => EventKind::PassedDeadlineA,
                _ => EventKind::PassedEndDate,
            },
            actor: owner,
            task_id,
        })
        .collect()
}

//! Trust-gated flooding search for volunteers over a social graph.
//!
//! A member asking for help floods a request through their social network;
//! each node forwards it only to friends whose accumulated path trust stays
//! above the requester's threshold and within the allowed friendship
//! distance. Trust in a friend is task-dependent, learned from rated past
//! experiences via semantic similarity over an object taxonomy and value
//! propagation over an activity meronomy.
//!
//! The crate splits into:
//!
//! * [`ontology`] — concept hierarchies and semantic similarity;
//! * [`trust`] — rating ledgers and the task-dependent trust model;
//! * [`protocol`] — the flooding algorithm itself;
//! * [`lifecycle`] — requester/requestee request state machines;
//! * [`simnet`] — a deterministic discrete-event simulator tying the above
//!   together under a virtual clock.

pub mod ids;
pub mod lifecycle;
pub mod ontology;
pub mod protocol;
pub mod rng;
pub mod simnet;
pub mod trust;

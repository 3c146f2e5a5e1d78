//! Task-dependent trust learned from rated past experiences.
//!
//! Every member keeps a ledger of ratings (own plus any shared with them).
//! Trust in a volunteer for a task `<activity, object>` combines two
//! components:
//!
//! * object trust — a similarity-weighted mean of past rating values, where
//!   the weight of each past experience is the thresholded taxonomy
//!   similarity between its object and the queried object;
//! * activity trust — per-activity rating means propagated through the
//!   activity meronomy: a node without direct ratings takes the mean of its
//!   resolved children (intrinsic) or, failing that, inherits from its
//!   nearest valued ancestor (extrinsic).
//!
//! The shared-ratings extension aggregates these components across every
//! rater visible in the ledger, weighting each rater by how closely their
//! rating profile agrees with the querying member's.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ids::{NodeId, Timestamp};
use crate::ontology::{ConceptId, Hierarchy, HierarchyKind, OntologyError, SimilarityParams};

#[derive(Debug, Error, PartialEq)]
pub enum TrustError {
    #[error("rating value {0} outside the 1..=7 scale")]
    ValueOutOfRange(u8),
    #[error("requester and volunteer must differ, both are {0}")]
    SelfRating(NodeId),
    #[error("duplicate rating of {volunteer} by {requester} at t={time}")]
    DuplicateRating {
        requester: NodeId,
        volunteer: NodeId,
        time: Timestamp,
    },
    #[error("rating by {requester} recorded into ledger owned by {owner}")]
    NotOwnRating { requester: NodeId, owner: NodeId },
    #[error("trust value {0} outside [0,1]")]
    TrustOutOfRange(f64),
    #[error("activity propagation requires a meronomy")]
    NotMeronomy,
    #[error(transparent)]
    Ontology(#[from] OntologyError),
    #[error("sharing config references unknown node {0}")]
    UnknownNode(NodeId),
    #[error("malformed sharing config: {0}")]
    MalformedConfig(String),
    #[error("ledger file line {line}: {msg}")]
    Persist { line: usize, msg: String },
}

/// A rating on the 1..=7 scale (1 complete failure, 7 complete satisfaction).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct RatingValue(u8);

impl RatingValue {
    pub fn new(v: u8) -> Result<Self, TrustError> {
        if (1..=7).contains(&v) {
            Ok(RatingValue(v))
        } else {
            Err(TrustError::ValueOutOfRange(v))
        }
    }

    pub fn get(self) -> u8 {
        self.0
    }

    /// Maps the 1..=7 scale onto [0,1], the range all trust arithmetic and
    /// the flooding threshold live in.
    pub fn normalized(self) -> f64 {
        (self.0 - 1) as f64 / 6.0
    }
}

impl TryFrom<u8> for RatingValue {
    type Error = TrustError;
    fn try_from(v: u8) -> Result<Self, Self::Error> {
        RatingValue::new(v)
    }
}

impl From<RatingValue> for u8 {
    fn from(v: RatingValue) -> u8 {
        v.0
    }
}

/// `(v - 1) / 6` for `v` in 1..=7.
pub fn normalize_value(v: u8) -> Result<f64, TrustError> {
    Ok(RatingValue::new(v)?.normalized())
}

/// One rated experience: `requester` judged how `volunteer` performed the
/// task `<activity, object>` at logical time `time`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rating {
    pub requester: NodeId,
    pub volunteer: NodeId,
    pub activity: ConceptId,
    pub object: ConceptId,
    pub value: RatingValue,
    pub time: Timestamp,
}

impl Rating {
    pub fn new(
        requester: NodeId,
        volunteer: NodeId,
        activity: ConceptId,
        object: ConceptId,
        value: RatingValue,
        time: Timestamp,
    ) -> Result<Self, TrustError> {
        if requester == volunteer {
            return Err(TrustError::SelfRating(requester));
        }
        Ok(Rating {
            requester,
            volunteer,
            activity,
            object,
            value,
            time,
        })
    }
}

/// What a task is about: an activity from the meronomy paired with an object
/// from the taxonomy, plus free-text detail.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Task {
    pub activity: ConceptId,
    pub object: ConceptId,
    pub description: String,
}

/// How ratings move between ledgers, if at all.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SharingPolicy {
    None,
    ManualList,
    RatingSimilarity,
    TrustThreshold,
}

/// Granularity of manual trust overrides: one dial per friend, or one per
/// (friend, activity) pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OverrideScope {
    PerFriend,
    PerActivity,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TrustParams {
    /// Weight of the object component in the combined trust; the activity
    /// component gets the complement.
    pub trust_weight_alpha: f64,
    /// Trust threshold for the trust-threshold sharing policy.
    pub eta: f64,
    /// Trust assigned when nothing is known about a member ("fair").
    pub default_trust: f64,
    pub sharing_policy: SharingPolicy,
    pub override_scope: OverrideScope,
}

impl Default for TrustParams {
    fn default() -> Self {
        TrustParams {
            trust_weight_alpha: 0.5,
            eta: 0.75,
            default_trust: 0.5,
            sharing_policy: SharingPolicy::None,
            override_scope: OverrideScope::PerFriend,
        }
    }
}

impl TrustParams {
    pub fn validate(&self) -> Result<(), TrustError> {
        for v in [self.trust_weight_alpha, self.eta, self.default_trust] {
            if !(0.0..=1.0).contains(&v) {
                return Err(TrustError::TrustOutOfRange(v));
            }
        }
        Ok(())
    }
}

/// One member's rating ledger: own ratings, ratings shared with them, and
/// manual trust overrides keyed by (counterpart, task key).
#[derive(Debug, Clone)]
pub struct RatingLedger {
    owner: NodeId,
    entries: Vec<Rating>,
    manual_overrides: BTreeMap<(NodeId, String), f64>,
}

impl RatingLedger {
    pub fn new(owner: NodeId) -> Self {
        RatingLedger {
            owner,
            entries: Vec::new(),
            manual_overrides: BTreeMap::new(),
        }
    }

    pub fn owner(&self) -> &NodeId {
        &self.owner
    }

    pub fn entries(&self) -> &[Rating] {
        &self.entries
    }

    /// Records one of the owner's own ratings. The caller is responsible for
    /// only rating completed requests; the ledger rejects duplicates and
    /// ratings issued under someone else's name.
    pub fn record(&mut self, rating: Rating) -> Result<(), TrustError> {
        if rating.requester != self.owner {
            return Err(TrustError::NotOwnRating {
                requester: rating.requester,
                owner: self.owner.clone(),
            });
        }
        if self.entries.contains(&rating) {
            return Err(TrustError::DuplicateRating {
                requester: rating.requester,
                volunteer: rating.volunteer,
                time: rating.time,
            });
        }
        self.insert(rating);
        Ok(())
    }

    /// Adds a rating shared by another member, keeping its original
    /// requester. Silently ignores entries already present.
    pub fn insert_shared(&mut self, rating: Rating) -> bool {
        if self.entries.contains(&rating) {
            return false;
        }
        self.insert(rating);
        true
    }

    fn insert(&mut self, rating: Rating) {
        self.entries.push(rating);
        // Stable sort keeps arrival order among equal timestamps.
        self.entries.sort_by_key(|r| r.time);
    }

    pub fn set_override(
        &mut self,
        counterpart: NodeId,
        task_key: String,
        value: f64,
    ) -> Result<(), TrustError> {
        if !(0.0..=1.0).contains(&value) {
            return Err(TrustError::TrustOutOfRange(value));
        }
        self.manual_overrides.insert((counterpart, task_key), value);
        Ok(())
    }

    pub fn override_for(&self, counterpart: &NodeId, task_key: &str) -> Option<f64> {
        self.manual_overrides
            .get(&(counterpart.clone(), task_key.to_string()))
            .copied()
    }

    pub fn overrides(&self) -> impl Iterator<Item = (&NodeId, &str, f64)> + '_ {
        self.manual_overrides
            .iter()
            .map(|((n, k), &v)| (n, k.as_str(), v))
    }

    /// Ratings issued by `rater` on `volunteer` visible by time `t`
    /// (inclusive).
    fn ratings_by<'a>(
        &'a self,
        rater: &'a NodeId,
        volunteer: &'a NodeId,
        t: Timestamp,
    ) -> impl Iterator<Item = &'a Rating> {
        self.entries
            .iter()
            .filter(move |r| &r.requester == rater && &r.volunteer == volunteer && r.time <= t)
    }

    /// Distinct raters that assessed `volunteer` in this ledger by time `t`.
    fn raters_of(&self, volunteer: &NodeId, t: Timestamp) -> Vec<NodeId> {
        let mut out: Vec<NodeId> = Vec::new();
        for r in &self.entries {
            if &r.volunteer == volunteer && r.time <= t && !out.contains(&r.requester) {
                out.push(r.requester.clone());
            }
        }
        out.sort();
        out
    }
}

/// Object trust: similarity-weighted mean of `rater`'s ratings of
/// `volunteer`, weighting each rating by the thresholded similarity of its
/// object to `object`. `None` when no rating survives the cut-off.
pub fn trust_obj(
    ledger: &RatingLedger,
    rater: &NodeId,
    volunteer: &NodeId,
    object: ConceptId,
    t: Timestamp,
    taxonomy: &Hierarchy,
    sp: &SimilarityParams,
) -> Result<Option<f64>, TrustError> {
    if !taxonomy.contains(object) {
        return Err(OntologyError::UnknownId(object).into());
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for rating in ledger.ratings_by(rater, volunteer, t) {
        let w = taxonomy.sim_obj(object, rating.object, sp)?;
        num += w * rating.value.normalized();
        den += w;
    }
    Ok(if den > 0.0 { Some(num / den) } else { None })
}

/// Spreads direct per-activity values over a whole meronomy.
///
/// A node with a direct value keeps it. A node whose subtree holds any direct
/// value takes the mean of its resolved children (intrinsic). Any other node
/// inherits its nearest valued ancestor (extrinsic). Without any direct value
/// the result is empty.
pub fn propagate_meronomy(
    meronomy: &Hierarchy,
    direct: &BTreeMap<ConceptId, f64>,
) -> Result<BTreeMap<ConceptId, f64>, TrustError> {
    if meronomy.kind() != HierarchyKind::Meronomy {
        return Err(TrustError::NotMeronomy);
    }
    for (&c, &v) in direct {
        if !meronomy.contains(c) {
            return Err(OntologyError::UnknownId(c).into());
        }
        if !(0.0..=1.0).contains(&v) {
            return Err(TrustError::TrustOutOfRange(v));
        }
    }
    if direct.is_empty() {
        return Ok(BTreeMap::new());
    }

    let mut order: Vec<ConceptId> = meronomy.concepts().collect();
    order.sort_by_key(|&c| meronomy.depth(c).expect("own concept"));

    // Bottom-up: direct values win, else mean over children that resolved.
    let mut intrinsic: Vec<Option<f64>> = vec![None; meronomy.len()];
    for &c in order.iter().rev() {
        if let Some(&v) = direct.get(&c) {
            intrinsic[c.0 as usize] = Some(v);
        } else {
            let mut sum = 0.0;
            let mut n = 0u32;
            for child in meronomy.children_of(c) {
                if let Some(v) = intrinsic[child.0 as usize] {
                    sum += v;
                    n += 1;
                }
            }
            if n > 0 {
                intrinsic[c.0 as usize] = Some(sum / n as f64);
            }
        }
    }

    // Top-down: unresolved nodes inherit from the parent, which by depth
    // order already carries a value (the root resolves intrinsically
    // whenever any direct value exists).
    let mut out: BTreeMap<ConceptId, f64> = BTreeMap::new();
    for &c in &order {
        let v = intrinsic[c.0 as usize].unwrap_or_else(|| {
            let parent = meronomy
                .parent_of(c)
                .expect("non-root inherits from parent");
            out[&parent]
        });
        out.insert(c, v);
    }
    Ok(out)
}

/// Activity trust: per-activity means of `rater`'s ratings of `volunteer`
/// propagated through the meronomy, read off at `activity`.
pub fn trust_act(
    ledger: &RatingLedger,
    rater: &NodeId,
    volunteer: &NodeId,
    activity: ConceptId,
    t: Timestamp,
    meronomy: &Hierarchy,
) -> Result<Option<f64>, TrustError> {
    if !meronomy.contains(activity) {
        return Err(OntologyError::UnknownId(activity).into());
    }
    let mut sums: BTreeMap<ConceptId, (f64, u32)> = BTreeMap::new();
    for rating in ledger.ratings_by(rater, volunteer, t) {
        let slot = sums.entry(rating.activity).or_insert((0.0, 0));
        slot.0 += rating.value.normalized();
        slot.1 += 1;
    }
    let direct: BTreeMap<ConceptId, f64> = sums
        .into_iter()
        .map(|(c, (sum, n))| (c, sum / n as f64))
        .collect();
    let resolved = propagate_meronomy(meronomy, &direct)?;
    Ok(resolved.get(&activity).copied())
}

fn combine_components(object: Option<f64>, activity: Option<f64>, tp: &TrustParams) -> f64 {
    match (object, activity) {
        (None, None) => tp.default_trust,
        (Some(o), None) => o,
        (None, Some(a)) => a,
        (Some(o), Some(a)) => tp.trust_weight_alpha * o + (1.0 - tp.trust_weight_alpha) * a,
    }
}

fn override_key(task: &Task, meronomy: &Hierarchy, tp: &TrustParams) -> String {
    match tp.override_scope {
        OverrideScope::PerFriend => meronomy.label(meronomy.root()).to_string(),
        OverrideScope::PerActivity => meronomy.label(task.activity).to_string(),
    }
}

/// Combined trust of `rater` in `volunteer` for `task`: a manual override
/// when one is set, otherwise the weighted blend of object and activity
/// trust, falling back to the known component or to `default_trust`.
#[allow(clippy::too_many_arguments)]
pub fn trust(
    ledger: &RatingLedger,
    rater: &NodeId,
    volunteer: &NodeId,
    task: &Task,
    t: Timestamp,
    taxonomy: &Hierarchy,
    meronomy: &Hierarchy,
    tp: &TrustParams,
    sp: &SimilarityParams,
) -> Result<f64, TrustError> {
    if let Some(v) = ledger.override_for(volunteer, &override_key(task, meronomy, tp)) {
        return Ok(v);
    }
    let o = trust_obj(ledger, rater, volunteer, task.object, t, taxonomy, sp)?;
    let a = trust_act(ledger, rater, volunteer, task.activity, t, meronomy)?;
    Ok(combine_components(o, a, tp))
}

/// Mean normalized rating per (volunteer, concept) pair, where the concept is
/// the rating's activity in a meronomy and its object in a taxonomy.
fn rating_profile(
    ledger: &RatingLedger,
    rater: &NodeId,
    in_hierarchy: &Hierarchy,
) -> BTreeMap<(NodeId, ConceptId), f64> {
    let mut sums: BTreeMap<(NodeId, ConceptId), (f64, u32)> = BTreeMap::new();
    for r in ledger.entries().iter().filter(|r| &r.requester == rater) {
        let concept = match in_hierarchy.kind() {
            HierarchyKind::Meronomy => r.activity,
            HierarchyKind::Taxonomy => r.object,
        };
        let slot = sums
            .entry((r.volunteer.clone(), concept))
            .or_insert((0.0, 0));
        slot.0 += r.value.normalized();
        slot.1 += 1;
    }
    sums.into_iter()
        .map(|(key, (sum, n))| (key, sum / n as f64))
        .collect()
}

/// 1 minus the mean absolute difference over (volunteer, concept) pairs both
/// raters scored, restricted to concepts relevant to `x`. `None` without
/// overlap.
fn direct_rater_weight(
    profile_a: &BTreeMap<(NodeId, ConceptId), f64>,
    profile_b: &BTreeMap<(NodeId, ConceptId), f64>,
    x: ConceptId,
    hierarchy: &Hierarchy,
    sp: &SimilarityParams,
) -> Result<Option<f64>, TrustError> {
    let mut total = 0.0;
    let mut n = 0u32;
    for (key, va) in profile_a {
        if let Some(vb) = profile_b.get(key) {
            let concept = key.1;
            if concept == x || hierarchy.sim_obj(concept, x, sp)? > 0.0 {
                total += (va - vb).abs();
                n += 1;
            }
        }
    }
    Ok(if n > 0 {
        Some(1.0 - total / n as f64)
    } else {
        None
    })
}

/// How much `rater` trusts `other` as a source of ratings about `x`.
///
/// Direct agreement on commonly rated pairs when it exists; otherwise the
/// widest path (maximum over paths of the minimum direct weight) through the
/// rater-overlap graph, matching the min-composed transitivity used along
/// flooding paths; otherwise a neutral 0.5. A rater weighs themselves 1.
pub fn rater_weight(
    ledger: &RatingLedger,
    rater: &NodeId,
    other: &NodeId,
    x: ConceptId,
    hierarchy: &Hierarchy,
    sp: &SimilarityParams,
) -> Result<f64, TrustError> {
    if rater == other {
        return Ok(1.0);
    }
    if !hierarchy.contains(x) {
        return Err(OntologyError::UnknownId(x).into());
    }

    let mut raters: Vec<NodeId> = Vec::new();
    for r in ledger.entries() {
        if !raters.contains(&r.requester) {
            raters.push(r.requester.clone());
        }
    }
    raters.sort();
    if !raters.contains(rater) || !raters.contains(other) {
        return Ok(0.5);
    }

    let profiles: BTreeMap<&NodeId, BTreeMap<(NodeId, ConceptId), f64>> = raters
        .iter()
        .map(|r| (r, rating_profile(ledger, r, hierarchy)))
        .collect();

    if let Some(w) = direct_rater_weight(&profiles[rater], &profiles[other], x, hierarchy, sp)? {
        return Ok(w);
    }

    // Widest path over the overlap graph: Dijkstra on the (max, min) closure.
    let mut best: BTreeMap<&NodeId, f64> = BTreeMap::new();
    let mut done: Vec<&NodeId> = Vec::new();
    best.insert(rater, 1.0);
    while let Some((&current, _)) = best
        .iter()
        .filter(|(n, _)| !done.contains(*n))
        .max_by(|a, b| a.1.partial_cmp(b.1).expect("weights are finite"))
    {
        if current == other {
            return Ok(best[current]);
        }
        done.push(current);
        for next in &raters {
            if done.contains(&next) {
                continue;
            }
            if let Some(w) =
                direct_rater_weight(&profiles[current], &profiles[next], x, hierarchy, sp)?
            {
                let through = best[current].min(w);
                if through > best.get(&next).copied().unwrap_or(f64::NEG_INFINITY) {
                    best.insert(next, through);
                }
            }
        }
    }
    Ok(0.5)
}

/// Combined trust over the shared-rating ledger: each component aggregates
/// the per-rater component across every visible rater of the volunteer,
/// weighted by the rater weights. A rater whose component is unknown drops
/// out of that component's sums; an empty component falls back exactly like
/// [`trust`].
#[allow(clippy::too_many_arguments)]
pub fn trust_shared(
    ledger: &RatingLedger,
    rater: &NodeId,
    volunteer: &NodeId,
    task: &Task,
    t: Timestamp,
    taxonomy: &Hierarchy,
    meronomy: &Hierarchy,
    tp: &TrustParams,
    sp: &SimilarityParams,
) -> Result<f64, TrustError> {
    if let Some(v) = ledger.override_for(volunteer, &override_key(task, meronomy, tp)) {
        return Ok(v);
    }
    let raters = ledger.raters_of(volunteer, t);

    let mut obj_num = 0.0;
    let mut obj_den = 0.0;
    let mut act_num = 0.0;
    let mut act_den = 0.0;
    for u in &raters {
        if let Some(o) = trust_obj(ledger, u, volunteer, task.object, t, taxonomy, sp)? {
            let w = rater_weight(ledger, rater, u, task.object, taxonomy, sp)?;
            obj_num += w * o;
            obj_den += w;
        }
        if let Some(a) = trust_act(ledger, u, volunteer, task.activity, t, meronomy)? {
            let w = rater_weight(ledger, rater, u, task.activity, meronomy, sp)?;
            act_num += w * a;
            act_den += w;
        }
    }
    let o = if obj_den > 0.0 {
        Some(obj_num / obj_den)
    } else {
        None
    };
    let a = if act_den > 0.0 {
        Some(act_num / act_den)
    } else {
        None
    };
    Ok(combine_components(o, a, tp))
}

/// Policy-specific knobs for [`share_ratings`].
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct SharingConfig {
    /// Directed (from, to) pairs for the manual-list policy.
    pub pairs: Vec<(NodeId, NodeId)>,
    /// Friendship level for the manual-list policy: how many pair-edges a
    /// rating may travel from its author.
    pub hops: u32,
    /// Minimum direct rater weight for the rating-similarity policy.
    pub weight_floor: f64,
}

/// Everything the sharing policies need besides the ledgers themselves.
pub struct SharingContext<'a> {
    pub taxonomy: &'a Hierarchy,
    pub meronomy: &'a Hierarchy,
    pub trust_params: &'a TrustParams,
    pub sim_params: &'a SimilarityParams,
    pub now: Timestamp,
}

/// Copies ratings between ledgers according to the sharing policy. Returns
/// the number of ratings copied.
pub fn share_ratings(
    ledgers: &mut BTreeMap<NodeId, RatingLedger>,
    policy: SharingPolicy,
    config: &SharingConfig,
    ctx: &SharingContext<'_>,
) -> Result<usize, TrustError> {
    match policy {
        SharingPolicy::None => Ok(0),
        SharingPolicy::ManualList => share_manual_list(ledgers, config),
        SharingPolicy::RatingSimilarity => share_by_similarity(ledgers, config, ctx),
        SharingPolicy::TrustThreshold => share_by_trust(ledgers, ctx),
    }
}

fn own_ratings(ledger: &RatingLedger) -> Vec<Rating> {
    ledger
        .entries()
        .iter()
        .filter(|r| &r.requester == ledger.owner())
        .cloned()
        .collect()
}

fn share_manual_list(
    ledgers: &mut BTreeMap<NodeId, RatingLedger>,
    config: &SharingConfig,
) -> Result<usize, TrustError> {
    if config.hops == 0 {
        return Err(TrustError::MalformedConfig(
            "manual-list hop count must be >= 1".into(),
        ));
    }
    for (a, b) in &config.pairs {
        for n in [a, b] {
            if !ledgers.contains_key(n) {
                return Err(TrustError::UnknownNode(n.clone()));
            }
        }
    }

    let sources: Vec<NodeId> = ledgers.keys().cloned().collect();
    let mut copied = 0;
    for source in &sources {
        // Breadth-first over the directed pair list, bounded by hops.
        let mut reached: Vec<NodeId> = vec![source.clone()];
        let mut frontier = vec![source.clone()];
        for _ in 0..config.hops {
            let mut next = Vec::new();
            for (from, to) in &config.pairs {
                if frontier.contains(from) && !reached.contains(to) {
                    reached.push(to.clone());
                    next.push(to.clone());
                }
            }
            if next.is_empty() {
                break;
            }
            frontier = next;
        }
        let ratings = own_ratings(&ledgers[source]);
        for target in reached.iter().filter(|t| *t != source) {
            let ledger = ledgers.get_mut(target).expect("validated above");
            for r in &ratings {
                if ledger.insert_shared(r.clone()) {
                    copied += 1;
                }
            }
        }
    }
    Ok(copied)
}

fn share_by_similarity(
    ledgers: &mut BTreeMap<NodeId, RatingLedger>,
    config: &SharingConfig,
    _ctx: &SharingContext<'_>,
) -> Result<usize, TrustError> {
    if !(0.0..=1.0).contains(&config.weight_floor) {
        return Err(TrustError::MalformedConfig(format!(
            "weight floor {} outside [0,1]",
            config.weight_floor
        )));
    }
    // Profile agreement over full (volunteer, activity, object) triples of
    // each member's own ratings.
    let owners: Vec<NodeId> = ledgers.keys().cloned().collect();
    let profiles: BTreeMap<&NodeId, BTreeMap<(NodeId, ConceptId, ConceptId), f64>> = owners
        .iter()
        .map(|o| {
            let mut sums: BTreeMap<(NodeId, ConceptId, ConceptId), (f64, u32)> = BTreeMap::new();
            for r in own_ratings(&ledgers[o]) {
                let slot = sums
                    .entry((r.volunteer.clone(), r.activity, r.object))
                    .or_insert((0.0, 0));
                slot.0 += r.value.normalized();
                slot.1 += 1;
            }
            (
                o,
                sums.into_iter()
                    .map(|(k, (s, n))| (k, s / n as f64))
                    .collect(),
            )
        })
        .collect();

    let mut copied = 0;
    for (i, a) in owners.iter().enumerate() {
        for b in owners.iter().skip(i + 1) {
            let mut total = 0.0;
            let mut n = 0u32;
            for (key, va) in &profiles[a] {
                if let Some(vb) = profiles[b].get(key) {
                    total += (va - vb).abs();
                    n += 1;
                }
            }
            if n == 0 {
                continue;
            }
            let weight = 1.0 - total / n as f64;
            if weight > config.weight_floor {
                for r in own_ratings(&ledgers[a]) {
                    if ledgers.get_mut(b).unwrap().insert_shared(r) {
                        copied += 1;
                    }
                }
                for r in own_ratings(&ledgers[b]) {
                    if ledgers.get_mut(a).unwrap().insert_shared(r) {
                        copied += 1;
                    }
                }
            }
        }
    }
    Ok(copied)
}

fn share_by_trust(
    ledgers: &mut BTreeMap<NodeId, RatingLedger>,
    ctx: &SharingContext<'_>,
) -> Result<usize, TrustError> {
    let owners: Vec<NodeId> = ledgers.keys().cloned().collect();
    let mut to_copy: Vec<(NodeId, Rating)> = Vec::new();
    for owner in &owners {
        let ledger = &ledgers[owner];
        for rating in own_ratings(ledger) {
            let task = Task {
                activity: rating.activity,
                object: rating.object,
                description: String::new(),
            };
            for recipient in owners.iter().filter(|r| *r != owner) {
                let t = trust(
                    ledger,
                    owner,
                    recipient,
                    &task,
                    ctx.now,
                    ctx.taxonomy,
                    ctx.meronomy,
                    ctx.trust_params,
                    ctx.sim_params,
                )?;
                if t > ctx.trust_params.eta {
                    to_copy.push((recipient.clone(), rating.clone()));
                }
            }
        }
    }
    let mut copied = 0;
    for (recipient, rating) in to_copy {
        if ledgers
            .get_mut(&recipient)
            .expect("owner key")
            .insert_shared(rating)
        {
            copied += 1;
        }
    }
    Ok(copied)
}

// ---------------------------------------------------------------------------
// Ledger persistence: tab-delimited ratings, one per line, and a companion
// key-value file for manual overrides.
// ---------------------------------------------------------------------------

fn check_field(s: &str, what: &str, line: usize) -> Result<(), TrustError> {
    if s.is_empty() || s.contains('\t') || s.contains('\n') {
        return Err(TrustError::Persist {
            line,
            msg: format!("invalid {what}: {s:?}"),
        });
    }
    Ok(())
}

/// Serializes the ledger's ratings, one
/// `requester TAB volunteer TAB activity TAB object TAB value TAB time` line
/// per entry.
pub fn ratings_to_text(
    ledger: &RatingLedger,
    taxonomy: &Hierarchy,
    meronomy: &Hierarchy,
) -> Result<String, TrustError> {
    let mut out = String::new();
    for (i, r) in ledger.entries().iter().enumerate() {
        check_field(r.requester.as_str(), "requester", i + 1)?;
        check_field(r.volunteer.as_str(), "volunteer", i + 1)?;
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\n",
            r.requester,
            r.volunteer,
            meronomy.label(r.activity),
            taxonomy.label(r.object),
            r.value.get(),
            r.time,
        ));
    }
    Ok(out)
}

/// Parses a ratings file back into entries for `owner`'s ledger.
pub fn ratings_from_text(
    text: &str,
    taxonomy: &Hierarchy,
    meronomy: &Hierarchy,
) -> Result<Vec<Rating>, TrustError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 6 {
            return Err(TrustError::Persist {
                line: i + 1,
                msg: format!("expected 6 tab-separated fields, got {}", fields.len()),
            });
        }
        let value: u8 = fields[4].parse().map_err(|_| TrustError::Persist {
            line: i + 1,
            msg: format!("bad rating value {:?}", fields[4]),
        })?;
        let time: u64 = fields[5].parse().map_err(|_| TrustError::Persist {
            line: i + 1,
            msg: format!("bad timestamp {:?}", fields[5]),
        })?;
        out.push(Rating::new(
            NodeId::from(fields[0]),
            NodeId::from(fields[1]),
            meronomy.concept(fields[2])?,
            taxonomy.concept(fields[3])?,
            RatingValue::new(value)?,
            Timestamp(time),
        )?);
    }
    Ok(out)
}

/// Serializes manual overrides, one `counterpart TAB task-key TAB value` line
/// per entry.
pub fn overrides_to_text(ledger: &RatingLedger) -> Result<String, TrustError> {
    let mut out = String::new();
    for (i, (counterpart, key, value)) in ledger.overrides().enumerate() {
        check_field(counterpart.as_str(), "counterpart", i + 1)?;
        check_field(key, "task key", i + 1)?;
        out.push_str(&format!("{counterpart}\t{key}\t{value}\n"));
    }
    Ok(out)
}

pub fn overrides_from_text(text: &str) -> Result<Vec<(NodeId, String, f64)>, TrustError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(TrustError::Persist {
                line: i + 1,
                msg: format!("expected 3 tab-separated fields, got {}", fields.len()),
            });
        }
        let value: f64 = fields[2].parse().map_err(|_| TrustError::Persist {
            line: i + 1,
            msg: format!("bad trust value {:?}", fields[2]),
        })?;
        if !(0.0..=1.0).contains(&value) {
            return Err(TrustError::Persist {
                line: i + 1,
                msg: format!("trust value {value} outside [0,1]"),
            });
        }
        out.push((NodeId::from(fields[0]), fields[1].to_string(), value));
    }
    Ok(out)
}

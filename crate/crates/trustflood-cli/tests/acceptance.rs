//! Acceptance suite: one test per release criterion, each printing a
//! PASS/FAIL line (visible with `--nocapture`).
//!
//! Expected values come from independent oracles: brute-force enumeration,
//! direct formula evaluation, and the golden state tables shipped under
//! `fixtures/`.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::PathBuf;
use std::process::Command;

use trustflood::ids::{NodeId, TaskId, Timestamp};
use trustflood::lifecycle::{
    self, color_of, Deadlines, Disposition, EventKind, LifecycleEvent, RequestRecord, TransitionCtx,
};
use trustflood::ontology::{
    similarity_from_measures, ConceptId, Hierarchy, HierarchyDoc, HierarchyKind, SimilarityParams,
};
use trustflood::protocol::{count_worst_case_messages, MessageType, TNorm};
use trustflood::rng::SplitMix64;
use trustflood::simnet::{
    Action, DelayModel, GraphDoc, SimConfig, Step, TrustSeed, WorldAssets, WorldParams,
};
use trustflood::trust::{self, Rating, RatingLedger, RatingValue, Task, TrustParams};

fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(name)
}

fn fixture(name: &str) -> String {
    fs::read_to_string(fixture_path(name)).expect("fixture readable")
}

fn taxonomy() -> Hierarchy {
    Hierarchy::parse(&fixture("children.json")).unwrap()
}

fn meronomy() -> Hierarchy {
    Hierarchy::parse(&fixture("activities.json")).unwrap()
}

fn pass(criterion: u32, detail: &str) {
    println!("ACCEPTANCE {criterion} PASS: {detail}");
}

/// Random connected graph: a random attachment tree plus extra edges.
fn random_graph(rng: &mut SplitMix64, n: usize) -> Vec<(usize, usize)> {
    let mut edges = Vec::new();
    for i in 1..n {
        edges.push((rng.below(i as u64) as usize, i));
    }
    for a in 0..n {
        for b in (a + 1)..n {
            if !edges.contains(&(a, b)) && rng.unit() < 0.25 {
                edges.push((a, b));
            }
        }
    }
    edges
}

fn node_name(i: usize) -> String {
    format!("n{i:02}")
}

fn graph_doc(n: usize, edges: &[(usize, usize)], trust: &[TrustSeed]) -> GraphDoc {
    GraphDoc {
        nodes: (0..n).map(node_name).collect(),
        edges: edges
            .iter()
            .map(|&(a, b)| (node_name(a), node_name(b)))
            .collect(),
        trust: trust.to_vec(),
        ratings: vec![],
    }
}

fn help_step(t: u64, node: &str, tau: f64, hops: u32, deadline: u64) -> Step {
    Step {
        t,
        node: node.to_string(),
        action: Action::Help {
            label: "req".into(),
            activity: "feeding".into(),
            object: "baby".into(),
            description: String::new(),
            tau,
            hops,
            deadline,
        },
    }
}

fn base_config(script: Vec<Step>) -> SimConfig {
    SimConfig {
        seed: 1,
        delay: DelayModel::Zero,
        clock_start: Timestamp(0),
        horizon: None,
        script,
        tau_override: None,
        hops_override: None,
    }
}

// ---------------------------------------------------------------------------
// Criterion 1: every delivered HELP respects the trust and hop gates, and
// the requester never receives its own request.
// Criterion 2: with the min T-norm the same corpus never re-floods.
// ---------------------------------------------------------------------------

#[test]
fn criterion_1_and_2_flood_gate_soundness_and_min_no_reflood() {
    let mut rng = SplitMix64::new(0x5eed_0001);
    let mut runs = 0u32;
    let mut min_runs = 0u32;
    let mut delivered_total = 0u64;

    for case in 0..200 {
        let n = rng.range(2, 10) as usize;
        let edges = random_graph(&mut rng, n);
        let mut seeds = Vec::new();
        for &(a, b) in &edges {
            for (from, to) in [(a, b), (b, a)] {
                seeds.push(TrustSeed {
                    from: node_name(from),
                    to: node_name(to),
                    value: (rng.unit() * 1000.0).round() / 1000.0,
                    task_key: None,
                });
            }
        }
        let tau = (rng.unit() * 0.9 * 1000.0).round() / 1000.0;
        let hops = rng.range(1, 3) as u32;
        let requester = node_name(rng.below(n as u64) as usize);

        for tnorm in [TNorm::Min, TNorm::Product] {
            let mut params = WorldParams::default();
            params.flood.tnorm = tnorm;
            let assets = WorldAssets {
                taxonomy: taxonomy(),
                meronomy: meronomy(),
                graph: graph_doc(n, &edges, &seeds),
                params,
            };
            let mut world = assets.build_world().unwrap();
            let out = world
                .run(&base_config(vec![help_step(
                    0, &requester, tau, hops, 1000,
                )]))
                .unwrap();
            runs += 1;

            let requester_id = NodeId::from(requester.as_str());
            for d in out
                .deliveries
                .iter()
                .filter(|d| d.message_type == MessageType::Help)
            {
                if !d.status.accepted() {
                    continue;
                }
                delivered_total += 1;
                assert!(
                    d.pathtrust >= tau,
                    "case {case}: delivered pathtrust {} below tau {tau}",
                    d.pathtrust
                );
                let dist = world
                    .graph()
                    .hop_distance(&requester_id, &d.to)
                    .expect("delivered nodes are connected");
                assert!(
                    dist <= hops,
                    "case {case}: {} is {dist} hops away, limit {hops}",
                    d.to
                );
                assert_ne!(
                    d.to, requester_id,
                    "case {case}: requester got its own request"
                );
            }
            if let Some(task) = world.task_for_label("req") {
                if let Some(reach) = out.reach.get(&(task, MessageType::Help)) {
                    assert!(!reach.contains(&requester_id));
                }
            }
            if tnorm == TNorm::Min {
                min_runs += 1;
                assert_eq!(
                    out.metrics.re_flood_events, 0,
                    "case {case}: min T-norm re-flooded"
                );
            }
        }
    }
    assert!(runs >= 200 && min_runs >= 200);
    pass(
        1,
        &format!("{runs} randomized runs, {delivered_total} gated deliveries, 0 violations"),
    );
    pass(
        2,
        &format!("{min_runs} min-T-norm runs with zero re-flood events"),
    );
}

// ---------------------------------------------------------------------------
// Criterion 3: exhaustive worst-case message bound on all connected graphs
// with at most 6 nodes, with the oracle itself pinned on K3 and K4.
// ---------------------------------------------------------------------------

fn connected(n: usize, edges: &[(usize, usize)]) -> bool {
    if n == 0 {
        return false;
    }
    let mut seen = vec![false; n];
    let mut stack = vec![0usize];
    seen[0] = true;
    let mut count = 1;
    while let Some(v) = stack.pop() {
        for &(a, b) in edges {
            let next = if a == v {
                b
            } else if b == v {
                a
            } else {
                continue;
            };
            if !seen[next] {
                seen[next] = true;
                count += 1;
                stack.push(next);
            }
        }
    }
    count == n
}

#[test]
fn criterion_3_worst_case_message_bound() {
    // The enumeration oracle agrees with hand enumeration on the complete
    // graphs: K3 from a vertex sums to 6, K4 to 33.
    for (n, expected) in [(3usize, 6u64), (4, 33)] {
        let edges: Vec<(usize, usize)> = (0..n)
            .flat_map(|a| ((a + 1)..n).map(move |b| (a, b)))
            .collect();
        let doc = graph_doc(n, &edges, &[]);
        let graph = trustflood::simnet::SocialGraph::from_doc(&doc).unwrap();
        let bound = count_worst_case_messages(&graph.adjacency(), &NodeId::from("n00")).unwrap();
        assert_eq!(bound, expected, "oracle mismatch on K{n}");
    }

    // All trusts 1 comes from the default-trust fallback on empty ledgers.
    let mut params = WorldParams::default();
    params.flood.tnorm = TNorm::Product;
    params.flood.sigma = 0.0;
    params.trust.default_trust = 1.0;

    let mut graphs = 0u64;
    let mut total_checked = 0u64;
    for n in 1..=6usize {
        let all_pairs: Vec<(usize, usize)> = (0..n)
            .flat_map(|a| ((a + 1)..n).map(move |b| (a, b)))
            .collect();
        let m = all_pairs.len();
        for mask in 0u32..(1 << m) {
            let edges: Vec<(usize, usize)> = (0..m)
                .filter(|i| mask & (1 << i) != 0)
                .map(|i| all_pairs[i])
                .collect();
            if !connected(n, &edges) {
                continue;
            }
            graphs += 1;
            let assets = WorldAssets {
                taxonomy: taxonomy(),
                meronomy: meronomy(),
                graph: graph_doc(n, &edges, &[]),
                params: params.clone(),
            };
            let mut world = assets.build_world().unwrap();
            let out = world
                .run(&base_config(vec![help_step(0, "n00", 0.0, u32::MAX, 1000)]))
                .unwrap();
            let help_messages = out
                .deliveries
                .iter()
                .filter(|d| d.message_type == MessageType::Help && d.status.accepted())
                .count() as u64;
            let bound = count_worst_case_messages(&world.graph().adjacency(), &NodeId::from("n00"))
                .unwrap();
            assert!(
                help_messages <= bound,
                "{n}-node graph {edges:?}: {help_messages} HELP messages exceed bound {bound}"
            );
            total_checked += 1;
        }
    }
    pass(3, &format!("bound held on all {graphs} connected graphs <= 6 nodes ({total_checked} runs); oracle pinned on K3=6, K4=33"));
}

// ---------------------------------------------------------------------------
// Criterion 4: similarity property suite over the fixtures and 100 random
// trees, plus the raw measure-space monotonicities.
// ---------------------------------------------------------------------------

fn random_tree(rng: &mut SplitMix64, n: usize, kind: HierarchyKind) -> Hierarchy {
    let mut edges = Vec::new();
    for i in 1..n {
        let parent = rng.below(i as u64) as usize;
        edges.push((format!("c{parent}"), format!("c{i}")));
    }
    Hierarchy::from_doc(&HierarchyDoc {
        kind,
        root: "c0".into(),
        edges,
    })
    .unwrap()
}

fn ancestors_or_self(h: &Hierarchy, mut c: ConceptId) -> Vec<ConceptId> {
    let mut out = vec![c];
    while let Some(p) = h.parent_of(c) {
        out.push(p);
        c = p;
    }
    out
}

fn check_similarity_properties(h: &Hierarchy, params: &SimilarityParams) {
    const EPS: f64 = 1e-12;
    let root = h.root();
    assert_eq!(h.semantic_similarity(root, root, params).unwrap(), 0.0);

    // Gather per-pair measures once.
    let mut by_subsumer: BTreeMap<ConceptId, Vec<(u32, f64)>> = BTreeMap::new();
    let mut by_distance: BTreeMap<u32, Vec<(u32, f64, f64)>> = BTreeMap::new();
    for a in h.concepts() {
        for b in h.concepts() {
            let s = h.semantic_similarity(a, b, params).unwrap();
            let s_rev = h.semantic_similarity(b, a, params).unwrap();
            assert!((s - s_rev).abs() <= EPS, "similarity must be symmetric");
            assert!((0.0..1.0).contains(&s), "similarity {s} outside [0,1)");
            let sub = h.most_specific_subsumer(a, b).unwrap();
            // Brute-force subsumer oracle: deepest common element of the two
            // ancestor-or-self sets.
            let set_b = ancestors_or_self(h, b);
            let expected_sub = ancestors_or_self(h, a)
                .into_iter()
                .filter(|x| set_b.contains(x))
                .max_by_key(|&x| h.depth(x).unwrap())
                .unwrap();
            assert_eq!(
                sub, expected_sub,
                "subsumer disagrees with the ancestor-set oracle"
            );
            let l = h.path_distance(a, b).unwrap();
            by_subsumer.entry(sub).or_default().push((l, s));
            by_distance.entry(l).or_default().push((
                h.depth(sub).unwrap(),
                h.information_content(sub).unwrap(),
                s,
            ));
        }
    }

    // Anti-monotone in distance for a fixed subsumer: strict while both the
    // depth and density factors are nonzero; when either vanishes (the root,
    // or a subsumer covering every leaf) similarity is pinned at zero for
    // any distance.
    for (sub, pairs) in &by_subsumer {
        let depth = h.depth(*sub).unwrap();
        let density = h.information_content(*sub).unwrap();
        for &(l1, s1) in pairs {
            for &(l2, s2) in pairs {
                if l1 < l2 {
                    if depth > 0 && density > 0.0 {
                        assert!(
                            s1 > s2,
                            "distance {l1} must beat {l2} under a depth-{depth} subsumer"
                        );
                    } else {
                        assert!(s1 <= EPS && s2 <= EPS);
                    }
                }
            }
        }
    }

    // Jointly monotone in depth and density for a fixed distance.
    for pairs in by_distance.values() {
        for &(h1, d1, s1) in pairs {
            for &(h2, d2, s2) in pairs {
                if h1 <= h2 && d1 <= d2 {
                    assert!(
                        s1 <= s2 + EPS,
                        "similarity must not decrease with depth/density"
                    );
                }
            }
        }
    }
}

#[test]
fn criterion_4_similarity_property_suite() {
    let params = SimilarityParams::default();
    check_similarity_properties(&taxonomy(), &params);
    check_similarity_properties(&meronomy(), &params);

    let mut rng = SplitMix64::new(0x5eed_0004);
    for _ in 0..100 {
        let n = rng.range(2, 20) as usize;
        let tree = random_tree(&mut rng, n, HierarchyKind::Taxonomy);
        check_similarity_properties(&tree, &params);
    }

    // The aggregate itself: anti-monotone in l, monotone in h and d.
    for l in 0..5u32 {
        for hh in 0..5u32 {
            for di in 0..5u32 {
                let d = di as f64 * 0.7;
                let s = similarity_from_measures(l, hh, d, &params);
                assert!(s >= similarity_from_measures(l + 1, hh, d, &params));
                assert!(s <= similarity_from_measures(l, hh + 1, d, &params) + 1e-12);
                assert!(s <= similarity_from_measures(l, hh, d + 0.7, &params) + 1e-12);
            }
        }
    }
    pass(
        4,
        "symmetry, range, monotonicities and sim(root,root)=0 on fixtures + 100 random trees",
    );
}

// ---------------------------------------------------------------------------
// Criterion 5: trust pipeline matches an independent direct evaluation of
// the weighted-mean, combination and shared-rating formulas.
// ---------------------------------------------------------------------------

fn oracle_trust_obj(
    entries: &[Rating],
    rater: &NodeId,
    volunteer: &NodeId,
    object: ConceptId,
    t: Timestamp,
    tax: &Hierarchy,
    sp: &SimilarityParams,
) -> Option<f64> {
    let mut num = 0.0;
    let mut den = 0.0;
    for e in entries {
        if &e.requester == rater && &e.volunteer == volunteer && e.time <= t {
            let s = tax.semantic_similarity(object, e.object, sp).unwrap();
            let w = if s > sp.zeta { s } else { 0.0 };
            num += w * (f64::from(e.value.get()) - 1.0) / 6.0;
            den += w;
        }
    }
    (den > 0.0).then(|| num / den)
}

/// Top-down recursive propagation, structured differently from the library's
/// bottom-up pass.
fn oracle_resolve(
    m: &Hierarchy,
    direct: &BTreeMap<ConceptId, f64>,
    node: ConceptId,
) -> Option<f64> {
    fn subtree_mean(
        m: &Hierarchy,
        direct: &BTreeMap<ConceptId, f64>,
        node: ConceptId,
    ) -> Option<f64> {
        if let Some(&v) = direct.get(&node) {
            return Some(v);
        }
        let child_values: Vec<f64> = m
            .children_of(node)
            .filter_map(|c| subtree_mean(m, direct, c))
            .collect();
        if child_values.is_empty() {
            None
        } else {
            Some(child_values.iter().sum::<f64>() / child_values.len() as f64)
        }
    }
    if let Some(v) = subtree_mean(m, direct, node) {
        return Some(v);
    }
    let mut cursor = node;
    while let Some(parent) = m.parent_of(cursor) {
        if let Some(v) = subtree_mean(m, direct, parent) {
            return Some(v);
        }
        cursor = parent;
    }
    None
}

fn oracle_trust_act(
    entries: &[Rating],
    rater: &NodeId,
    volunteer: &NodeId,
    activity: ConceptId,
    t: Timestamp,
    m: &Hierarchy,
) -> Option<f64> {
    let mut sums: BTreeMap<ConceptId, (f64, u32)> = BTreeMap::new();
    for e in entries {
        if &e.requester == rater && &e.volunteer == volunteer && e.time <= t {
            let slot = sums.entry(e.activity).or_insert((0.0, 0));
            slot.0 += (f64::from(e.value.get()) - 1.0) / 6.0;
            slot.1 += 1;
        }
    }
    let direct: BTreeMap<ConceptId, f64> = sums
        .into_iter()
        .map(|(c, (s, n))| (c, s / n as f64))
        .collect();
    if direct.is_empty() {
        return None;
    }
    oracle_resolve(m, &direct, activity)
}

fn oracle_combine(o: Option<f64>, a: Option<f64>, tp: &TrustParams) -> f64 {
    match (o, a) {
        (None, None) => tp.default_trust,
        (Some(o), None) => o,
        (None, Some(a)) => a,
        (Some(o), Some(a)) => tp.trust_weight_alpha * o + (1.0 - tp.trust_weight_alpha) * a,
    }
}

#[test]
fn criterion_5_trust_oracle_equivalence() {
    let tax = taxonomy();
    let mer = meronomy();
    let sp = SimilarityParams {
        zeta: 0.1,
        ..Default::default()
    };
    let mut rng = SplitMix64::new(0x5eed_0005);
    let names: Vec<NodeId> = (0..6).map(|i| NodeId::new(format!("p{i}"))).collect();
    let objects: Vec<ConceptId> = tax.concepts().collect();
    let activities: Vec<ConceptId> = mer.concepts().collect();

    let mut exact_degenerate = 0u32;
    for case in 0..120 {
        let owner = names[0].clone();
        // Half the cases keep every rating owned by the querying member so
        // the shared formula must degenerate to the plain one bitwise.
        let own_only = case % 2 == 0;
        let mut ledger = RatingLedger::new(owner.clone());
        let mut entries = Vec::new();
        for _ in 0..rng.below(21) {
            let requester = if own_only {
                owner.clone()
            } else {
                names[rng.below(3) as usize].clone()
            };
            let volunteer = loop {
                let v = names[rng.below(names.len() as u64) as usize].clone();
                if v != requester {
                    break v;
                }
            };
            let rating = Rating::new(
                requester.clone(),
                volunteer,
                activities[rng.below(activities.len() as u64) as usize],
                objects[rng.below(objects.len() as u64) as usize],
                RatingValue::new(rng.range(1, 7) as u8).unwrap(),
                Timestamp(rng.below(50)),
            )
            .unwrap();
            entries.push(rating.clone());
            if requester == owner {
                // Own entries may repeat; the ledger rejects exact duplicates.
                let _ = ledger.record(rating);
            } else {
                ledger.insert_shared(rating);
            }
        }
        let entries: Vec<Rating> = ledger.entries().to_vec();

        let volunteer = names[1 + rng.below(4) as usize].clone();
        let task = Task {
            activity: activities[rng.below(activities.len() as u64) as usize],
            object: objects[rng.below(objects.len() as u64) as usize],
            description: String::new(),
        };
        let t = Timestamp(rng.below(60));
        let tp = TrustParams {
            trust_weight_alpha: (rng.unit() * 100.0).round() / 100.0,
            ..Default::default()
        };

        // Weighted-mean object trust (direct formula evaluation).
        let lib_obj =
            trust::trust_obj(&ledger, &owner, &volunteer, task.object, t, &tax, &sp).unwrap();
        let orc_obj = oracle_trust_obj(&entries, &owner, &volunteer, task.object, t, &tax, &sp);
        match (lib_obj, orc_obj) {
            (None, None) => {}
            (Some(a), Some(b)) => assert!((a - b).abs() < 1e-9, "object trust {a} vs oracle {b}"),
            other => panic!("object trust disagreement: {other:?}"),
        }

        // Propagated activity trust.
        let lib_act =
            trust::trust_act(&ledger, &owner, &volunteer, task.activity, t, &mer).unwrap();
        let orc_act = oracle_trust_act(&entries, &owner, &volunteer, task.activity, t, &mer);
        match (lib_act, orc_act) {
            (None, None) => {}
            (Some(a), Some(b)) => assert!((a - b).abs() < 1e-9, "activity trust {a} vs oracle {b}"),
            other => panic!("activity trust disagreement: {other:?}"),
        }

        // Combined trust.
        let lib_trust =
            trust::trust(&ledger, &owner, &volunteer, &task, t, &tax, &mer, &tp, &sp).unwrap();
        assert!((lib_trust - oracle_combine(lib_obj, lib_act, &tp)).abs() < 1e-9);
        assert!(
            (0.0..=1.0).contains(&lib_trust),
            "trust {lib_trust} escaped [0,1]"
        );

        // Shared trust: independent evaluation of the two weighted sums,
        // taking the rater weights as given.
        let shared =
            trust::trust_shared(&ledger, &owner, &volunteer, &task, t, &tax, &mer, &tp, &sp)
                .unwrap();
        let mut raters: Vec<NodeId> = Vec::new();
        for e in &entries {
            if e.volunteer == volunteer && e.time <= t && !raters.contains(&e.requester) {
                raters.push(e.requester.clone());
            }
        }
        let mut obj_num = 0.0;
        let mut obj_den = 0.0;
        let mut act_num = 0.0;
        let mut act_den = 0.0;
        for u in &raters {
            if let Some(o) = oracle_trust_obj(&entries, u, &volunteer, task.object, t, &tax, &sp) {
                let w = trust::rater_weight(&ledger, &owner, u, task.object, &tax, &sp).unwrap();
                obj_num += w * o;
                obj_den += w;
            }
            if let Some(a) = oracle_trust_act(&entries, u, &volunteer, task.activity, t, &mer) {
                let w = trust::rater_weight(&ledger, &owner, u, task.activity, &mer, &sp).unwrap();
                act_num += w * a;
                act_den += w;
            }
        }
        let orc_shared = oracle_combine(
            (obj_den > 0.0).then(|| obj_num / obj_den),
            (act_den > 0.0).then(|| act_num / act_den),
            &tp,
        );
        assert!(
            (shared - orc_shared).abs() < 1e-9,
            "shared trust {shared} vs oracle {orc_shared}"
        );
        assert!(
            (0.0..=1.0).contains(&shared),
            "shared trust {shared} escaped [0,1]"
        );

        if own_only {
            // Rater set {R}: bitwise equality with the plain combination.
            assert_eq!(
                shared, lib_trust,
                "degenerate shared trust must match exactly"
            );
            exact_degenerate += 1;
        }
    }
    assert!(exact_degenerate >= 50);
    pass(5, &format!("120 random ledgers matched the direct-formula oracle (1e-9); {exact_degenerate} degenerate cases matched bitwise"));
}

// ---------------------------------------------------------------------------
// Criterion 6: meronomy propagation is idempotent, keeps direct values, and
// spreads a root-only value everywhere.
// ---------------------------------------------------------------------------

#[test]
fn criterion_6_meronomy_propagation() {
    let mut rng = SplitMix64::new(0x5eed_0006);
    for case in 0..100 {
        let n = rng.range(1, 15) as usize;
        let m = random_tree(&mut rng, n, HierarchyKind::Meronomy);
        let concepts: Vec<ConceptId> = m.concepts().collect();

        let mut direct: BTreeMap<ConceptId, f64> = BTreeMap::new();
        for &c in &concepts {
            if rng.unit() < 0.4 {
                direct.insert(c, (rng.unit() * 1000.0).round() / 1000.0);
            }
        }

        let once = trust::propagate_meronomy(&m, &direct).unwrap();
        if direct.is_empty() {
            assert!(
                once.is_empty(),
                "case {case}: no direct values must yield nothing"
            );
        } else {
            assert_eq!(once.len(), m.len(), "case {case}: every node resolves");
        }

        // Idempotent: feeding the output back reproduces it exactly.
        let twice = trust::propagate_meronomy(&m, &once).unwrap();
        assert_eq!(once, twice, "case {case}: propagation must be idempotent");

        // Direct values dominate.
        for (c, v) in &direct {
            assert_eq!(once[c], *v, "case {case}: direct value must be kept");
        }

        // Root-only rating inherits everywhere unchanged.
        let root_only: BTreeMap<ConceptId, f64> = [(m.root(), 0.7)].into();
        let spread = trust::propagate_meronomy(&m, &root_only).unwrap();
        assert_eq!(spread.len(), m.len());
        assert!(
            spread.values().all(|&v| v == 0.7),
            "case {case}: root value must spread as-is"
        );
    }
    pass(
        6,
        "idempotence, direct-value dominance and full-extrinsic spread on 100 random meronomies",
    );
}

// ---------------------------------------------------------------------------
// Criterion 7: the transition functions reproduce the golden tables for
// every (state, event) pair, and random schedules always terminate.
// ---------------------------------------------------------------------------

fn deadlines() -> Deadlines {
    Deadlines::with_midpoint_assign(Timestamp(100), Timestamp(200)).unwrap()
}

fn ev(kind: EventKind, actor: &str) -> LifecycleEvent {
    LifecycleEvent {
        kind,
        actor: NodeId::from(actor),
        task_id: TaskId(1),
    }
}

fn drive(record: RequestRecord, kind: EventKind, actor: &str, now: u64) -> RequestRecord {
    lifecycle::transition(
        &record,
        &ev(kind, actor),
        &TransitionCtx {
            now: Timestamp(now),
        },
    )
    .expect("golden setup transition")
    .record
}

/// Builds a record sitting at the named state. `single_volunteer` restricts
/// the requester's volunteer set to v1 for the last-volunteer guards.
fn record_at(role: &str, state: &str, single_volunteer: bool) -> RequestRecord {
    if role == "requester" {
        let base = RequestRecord::new_requester(TaskId(1), NodeId::from("req"), deadlines());
        let p1 = {
            let mut r = drive(base.clone(), EventKind::MsgVolunteer, "v1", 10);
            if !single_volunteer {
                r = drive(r, EventKind::MsgVolunteer, "v2", 11);
            }
            r
        };
        match state {
            "looking_for_volunteers" => base,
            "pending_assignment_1" => p1,
            "pending_assignment_2" => drive(p1, EventKind::PassedDeadlineV, "req", 100),
            "assigned" => drive(
                p1,
                EventKind::ClickAssign {
                    volunteer: NodeId::from("v1"),
                },
                "req",
                20,
            ),
            "completed" => {
                let assigned = drive(
                    p1,
                    EventKind::ClickAssign {
                        volunteer: NodeId::from("v1"),
                    },
                    "req",
                    20,
                );
                drive(assigned, EventKind::MsgDone, "v1", 60)
            }
            "rated" => {
                let assigned = drive(
                    p1,
                    EventKind::ClickAssign {
                        volunteer: NodeId::from("v1"),
                    },
                    "req",
                    20,
                );
                let completed = drive(assigned, EventKind::MsgDone, "v1", 60);
                drive(
                    completed,
                    EventKind::ClickRate {
                        value: RatingValue::new(5).unwrap(),
                    },
                    "req",
                    70,
                )
            }
            "cancelled" => drive(base, EventKind::ClickCancel, "req", 10),
            "expired" => drive(base, EventKind::PassedDeadlineV, "req", 100),
            other => panic!("unknown requester state {other}"),
        }
    } else {
        let base = RequestRecord::new_requestee(
            TaskId(1),
            NodeId::from("vol"),
            NodeId::from("req"),
            deadlines(),
        );
        match state {
            "unanswered" => base,
            "declined" => drive(base, EventKind::ClickDecline, "vol", 10),
            "accepted" => drive(base, EventKind::ClickAccept, "vol", 10),
            "committed" => {
                let accepted = drive(base, EventKind::ClickAccept, "vol", 10);
                drive(accepted, EventKind::MsgAssigned, "req", 20)
            }
            "help_not_needed" => drive(base, EventKind::MsgNotNeeded { exempt: None }, "req", 20),
            "completed" => {
                let accepted = drive(base, EventKind::ClickAccept, "vol", 10);
                let committed = drive(accepted, EventKind::MsgAssigned, "req", 20);
                drive(committed, EventKind::ClickDone, "vol", 60)
            }
            "cancelled" => drive(base, EventKind::MsgCancelled, "req", 20),
            "expired" => drive(base, EventKind::PassedDeadlineV, "vol", 100),
            other => panic!("unknown requestee state {other}"),
        }
    }
}

fn golden_event(role: &str, event: &str, guard: &str, owner: &str) -> LifecycleEvent {
    let kind = match event {
        "Click_Help" => EventKind::ClickHelp,
        "Msg_Volunteer" => {
            return ev(
                EventKind::MsgVolunteer,
                if guard == "dup" { "v1" } else { "v3" },
            )
        }
        "Click_Assign" => EventKind::ClickAssign {
            volunteer: NodeId::from(if guard == "stranger" { "zz" } else { "v1" }),
        },
        "Msg_Done" => {
            return ev(
                EventKind::MsgDone,
                if guard == "by_other" { "v2" } else { "v1" },
            )
        }
        "Passed_EndDate" => EventKind::PassedEndDate,
        "Click_Rate" => EventKind::ClickRate {
            value: RatingValue::new(5).unwrap(),
        },
        "Passed_DeadlineV" => EventKind::PassedDeadlineV,
        "Passed_DeadlineA" => EventKind::PassedDeadlineA,
        "Click_Cancel" => EventKind::ClickCancel,
        "Msg_Cancel" => {
            let actor = match guard {
                "stranger" => "zz",
                "by_other" => "v2",
                _ => "v1",
            };
            return ev(EventKind::MsgCancel, actor);
        }
        "Click_Chat" => EventKind::ClickChat,
        "Msg_Chat" => EventKind::MsgChat,
        "Click_Call" => EventKind::ClickCall,
        "Msg_Help" => EventKind::MsgHelp,
        "Click_Decline" => EventKind::ClickDecline,
        "Click_Accept" => EventKind::ClickAccept,
        "Msg_Assigned" => EventKind::MsgAssigned,
        "Msg_NotNeeded" => EventKind::MsgNotNeeded {
            exempt: (guard == "exempt_self")
                .then(|| NodeId::from(if role == "requestee" { "vol" } else { owner })),
        },
        "Msg_Cancelled" => EventKind::MsgCancelled,
        "Click_Done" => EventKind::ClickDone,
        other => panic!("unknown event {other}"),
    };
    ev(kind, owner)
}

#[test]
fn criterion_7_state_machine_conformance() {
    // Part one: the golden tables, row by row.
    let table = fixture("golden_states.tsv");
    let mut transitions = 0u32;
    let mut colors = 0u32;
    let mut covered: BTreeSet<(String, String, String)> = BTreeSet::new();
    for (lineno, line) in table.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split_whitespace().collect();
        match cols[0] {
            "c" => {
                let (role, state, color) = (cols[1], cols[2], cols[3]);
                let record = record_at(role, state, false);
                assert_eq!(
                    color_of(&record).to_string(),
                    color,
                    "line {}: colour of {role} {state}",
                    lineno + 1
                );
                colors += 1;
            }
            "t" => {
                let (role, state, event, guard, expect) =
                    (cols[1], cols[2], cols[3], cols[4], cols[5]);
                let single = guard.starts_with("last_vol");
                let record = record_at(role, state, single);
                let owner = if role == "requester" { "req" } else { "vol" };
                let event_val = golden_event(role, event, guard, owner);
                let now = if guard.contains("after_v") { 150 } else { 50 };
                let result = lifecycle::transition(
                    &record,
                    &event_val,
                    &TransitionCtx {
                        now: Timestamp(now),
                    },
                );
                match expect {
                    "illegal" => assert!(
                        result.is_err(),
                        "line {}: {role} {state} x {event} [{guard}] must be rejected",
                        lineno + 1
                    ),
                    "absorb" => {
                        let tr = result.unwrap_or_else(|e| {
                            panic!("line {}: expected absorption, got error {e}", lineno + 1)
                        });
                        assert_eq!(
                            tr.disposition,
                            Disposition::Absorbed,
                            "line {}: {role} {state} x {event} [{guard}]",
                            lineno + 1
                        );
                        assert_eq!(
                            tr.record.state().name(),
                            state,
                            "absorption keeps the state"
                        );
                    }
                    target => {
                        let tr = result.unwrap_or_else(|e| {
                            panic!("line {}: expected {target}, got error {e}", lineno + 1)
                        });
                        assert_eq!(
                            tr.disposition,
                            Disposition::Applied,
                            "line {}: {role} {state} x {event} [{guard}]",
                            lineno + 1
                        );
                        assert_eq!(
                            tr.record.state().name(),
                            target,
                            "line {}: {role} {state} x {event} [{guard}]",
                            lineno + 1
                        );
                    }
                }
                covered.insert((role.into(), state.into(), event.into()));
                transitions += 1;
            }
            other => panic!("line {}: unknown row kind {other}", lineno + 1),
        }
    }

    // Coverage: every (state, event) pair of each machine appears.
    let requester_events = [
        "Click_Help",
        "Msg_Volunteer",
        "Click_Assign",
        "Msg_Done",
        "Passed_EndDate",
        "Click_Rate",
        "Passed_DeadlineV",
        "Passed_DeadlineA",
        "Click_Cancel",
        "Msg_Cancel",
        "Click_Chat",
        "Msg_Chat",
        "Click_Call",
    ];
    let requester_states = [
        "looking_for_volunteers",
        "pending_assignment_1",
        "pending_assignment_2",
        "assigned",
        "completed",
        "rated",
        "cancelled",
        "expired",
    ];
    for state in requester_states {
        for event in requester_events {
            assert!(
                covered.contains(&("requester".into(), state.into(), event.into())),
                "golden table misses requester {state} x {event}"
            );
        }
    }
    let requestee_events = [
        "Msg_Help",
        "Click_Accept",
        "Click_Decline",
        "Click_Cancel",
        "Click_Done",
        "Msg_Assigned",
        "Msg_NotNeeded",
        "Msg_Cancelled",
        "Passed_DeadlineV",
        "Passed_DeadlineA",
        "Passed_EndDate",
        "Click_Chat",
        "Msg_Chat",
        "Click_Call",
    ];
    let requestee_states = [
        "unanswered",
        "declined",
        "accepted",
        "committed",
        "help_not_needed",
        "completed",
        "cancelled",
        "expired",
    ];
    for state in requestee_states {
        for event in requestee_events {
            assert!(
                covered.contains(&("requestee".into(), state.into(), event.into())),
                "golden table misses requestee {state} x {event}"
            );
        }
    }

    // Part two: 1000 random schedules with deadline events all terminate.
    let mut rng = SplitMix64::new(0x5eed_0007);
    for schedule in 0..1000 {
        let requester_side = schedule % 2 == 0;
        let mut record = if requester_side {
            record_at("requester", "looking_for_volunteers", false)
        } else {
            record_at("requestee", "unanswered", false)
        };
        let mut now = 0u64;
        let mut fired = [false; 3];
        let mut steps = 0u32;
        while !record.state().is_terminal() && steps < 400 {
            steps += 1;
            // Let time march; fire each deadline exactly once as it passes.
            now += rng.below(20);
            let marks = [(0usize, 100u64), (1, 150), (2, 200)];
            let mut deadline_event = None;
            for (slot, at) in marks {
                if !fired[slot] && now >= at {
                    fired[slot] = true;
                    deadline_event = Some(match slot {
                        0 => EventKind::PassedDeadlineV,
                        1 => EventKind::PassedDeadlineA,
                        _ => EventKind::PassedEndDate,
                    });
                    break;
                }
            }
            let actors = ["req", "vol", "v1", "v2"];
            let kind = deadline_event.unwrap_or_else(|| match rng.below(12) {
                0 => EventKind::MsgVolunteer,
                1 => EventKind::ClickAssign {
                    volunteer: NodeId::from("v1"),
                },
                2 => EventKind::MsgDone,
                3 => EventKind::ClickRate {
                    value: RatingValue::new(4).unwrap(),
                },
                4 => EventKind::ClickCancel,
                5 => EventKind::MsgCancel,
                6 => EventKind::ClickAccept,
                7 => EventKind::ClickDecline,
                8 => EventKind::ClickDone,
                9 => EventKind::MsgAssigned,
                10 => EventKind::MsgNotNeeded { exempt: None },
                _ => EventKind::MsgCancelled,
            });
            let actor = actors[rng.below(actors.len() as u64) as usize];
            if let Ok(tr) = lifecycle::transition(
                &record,
                &ev(kind, actor),
                &TransitionCtx {
                    now: Timestamp(now),
                },
            ) {
                record = tr.record;
            }
        }
        assert!(
            record.state().is_terminal(),
            "schedule {schedule} did not reach a terminal state (stuck at {})",
            record.state().name()
        );
        // Terminal states absorb duplicate protocol messages.
        for kind in [
            EventKind::MsgCancelled,
            EventKind::MsgNotNeeded { exempt: None },
        ] {
            let tr = lifecycle::transition(
                &record,
                &ev(kind, "req"),
                &TransitionCtx {
                    now: Timestamp(now),
                },
            )
            .expect("terminal duplicates are absorbed");
            assert_eq!(tr.disposition, Disposition::Absorbed);
        }
    }
    pass(7, &format!("{transitions} golden transitions, {colors} colours, full pair coverage, 1000 random schedules terminated"));
}

// ---------------------------------------------------------------------------
// Criterion 8: ten CLI runs of the demo manifest with one seed produce
// byte-identical traces and metrics files.
// ---------------------------------------------------------------------------

#[test]
fn criterion_8_end_to_end_determinism() {
    type OutputBundle = (Vec<u8>, Vec<u8>, Vec<u8>, Vec<u8>);
    let manifest = fixture_path("demo_manifest.json");
    let base = tempfile::tempdir().expect("temp dir");
    let mut reference: Option<OutputBundle> = None;
    for i in 0..10 {
        let out_dir = base.path().join(format!("run{i}"));
        let status = Command::new(env!("CARGO_BIN_EXE_trustflood"))
            .args(["run", "--manifest"])
            .arg(&manifest)
            .args(["--seed", "42", "--out-dir"])
            .arg(&out_dir)
            .arg("--quiet")
            .status()
            .expect("binary runs");
        assert!(status.success(), "run {i} failed");
        let bundle = (
            fs::read(out_dir.join("trace.log")).unwrap(),
            fs::read(out_dir.join("metrics.tsv")).unwrap(),
            fs::read(out_dir.join("metrics.jsonl")).unwrap(),
            fs::read(out_dir.join("ledgers/alice.ratings")).unwrap(),
        );
        match &reference {
            None => reference = Some(bundle),
            Some(reference) => {
                assert_eq!(reference, &bundle, "run {i} diverged from run 0");
            }
        }
    }
    pass(
        8,
        "10 CLI runs with seed 42 produced byte-identical trace, metrics and ledger files",
    );
}

// ---------------------------------------------------------------------------
// Criterion 9: with trust unchanged, a CANCELLED (or NOTNEEDED) broadcast
// reaches exactly the nodes the HELP flood reached.
// ---------------------------------------------------------------------------

#[test]
fn criterion_9_broadcast_reach_equality() {
    let mut rng = SplitMix64::new(0x5eed_0009);
    let mut cancelled_checks = 0u32;
    let mut notneeded_checks = 0u32;
    for case in 0..40 {
        let n = rng.range(2, 8) as usize;
        let edges = random_graph(&mut rng, n);
        let hops = rng.range(1, 3) as u32;
        let requester = node_name(rng.below(n as u64) as usize);

        // Uniform trust through the default: every unknown pair reads 0.7.
        let mut params = WorldParams::default();
        params.trust.default_trust = 0.7;

        // Cancellation before any volunteer.
        let assets = WorldAssets {
            taxonomy: taxonomy(),
            meronomy: meronomy(),
            graph: graph_doc(n, &edges, &[]),
            params: params.clone(),
        };
        let mut world = assets.build_world().unwrap();
        let script = vec![
            help_step(0, &requester, 0.5, hops, 1000),
            Step {
                t: 5,
                node: requester.clone(),
                action: Action::Cancel {
                    label: "req".into(),
                },
            },
        ];
        let out = world.run(&base_config(script)).unwrap();
        let task = world.task_for_label("req").unwrap();
        let help_reach = out
            .reach
            .get(&(task, MessageType::Help))
            .cloned()
            .unwrap_or_default();
        let cancel_reach = out
            .reach
            .get(&(task, MessageType::Cancelled))
            .cloned()
            .unwrap_or_default();
        assert_eq!(
            help_reach, cancel_reach,
            "case {case}: cancellation reach differs"
        );
        cancelled_checks += 1;

        // Assignment: NOTNEEDED goes exactly where HELP went. The first
        // neighbour of the requester volunteers and gets the task.
        let requester_id = NodeId::from(requester.as_str());
        let neighbour = world
            .graph()
            .neighbors(&requester_id)
            .into_iter()
            .next()
            .unwrap();
        let assets2 = WorldAssets {
            taxonomy: taxonomy(),
            meronomy: meronomy(),
            graph: graph_doc(n, &edges, &[]),
            params: params.clone(),
        };
        let mut world2 = assets2.build_world().unwrap();
        let script2 = vec![
            help_step(0, &requester, 0.5, hops, 1000),
            Step {
                t: 5,
                node: neighbour.to_string(),
                action: Action::Accept {
                    label: "req".into(),
                },
            },
            Step {
                t: 10,
                node: requester.clone(),
                action: Action::Assign {
                    label: "req".into(),
                    volunteer: neighbour.to_string(),
                },
            },
        ];
        let out2 = world2.run(&base_config(script2)).unwrap();
        let task2 = world2.task_for_label("req").unwrap();
        let help_reach2 = out2
            .reach
            .get(&(task2, MessageType::Help))
            .cloned()
            .unwrap_or_default();
        let notneeded_reach2 = out2
            .reach
            .get(&(task2, MessageType::NotNeeded))
            .cloned()
            .unwrap_or_default();
        assert_eq!(
            help_reach2, notneeded_reach2,
            "case {case}: NOTNEEDED reach differs"
        );
        notneeded_checks += 1;
    }
    pass(9, &format!("exact reach equality on {cancelled_checks} cancellation and {notneeded_checks} assignment broadcasts"));
}

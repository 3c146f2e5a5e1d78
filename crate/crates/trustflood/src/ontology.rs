//! Concept hierarchies (activity meronomies and object taxonomies) and
//! semantic similarity between concepts.
//!
//! A hierarchy is a rooted tree of labelled concepts. Similarity between two
//! concepts combines three measures of their relative position:
//!
//! * `l` — edge distance between the two concepts through their most
//!   specific common subsumer (anti-monotonic: farther is less similar),
//! * `h` — depth of that subsumer (deeper is more similar),
//! * `d` — information content of the subsumer, `-ln(leaf fraction)`
//!   (denser is more similar),
//!
//! aggregated as `e^(-alpha*l) * tanh(beta*h) * tanh(lambda*d)`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Whether a hierarchy relates concepts by part-of or is-a edges.
///
/// The distinction matters to the trust pipeline (activity trust propagates
/// through meronomies, object trust weighs by taxonomy similarity); the
/// similarity operations themselves accept either kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HierarchyKind {
    Taxonomy,
    Meronomy,
}

/// Index of a concept within one [`Hierarchy`]. Ids are only meaningful
/// against the hierarchy that produced them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ConceptId(pub u32);

#[derive(Debug, Error, PartialEq)]
pub enum OntologyError {
    #[error("hierarchy document does not parse: {0}")]
    Parse(String),
    #[error("label {label:?} is declared more than once")]
    DuplicateLabel { label: String },
    #[error("node {label:?} has no path to the declared root (second root)")]
    MultipleRoots { label: String },
    #[error("cycle detected through node {label:?}")]
    Cycle { label: String },
    #[error("declared root {label:?} is listed as a child")]
    RootHasParent { label: String },
    #[error("label {label:?} is empty or contains a tab/newline")]
    InvalidLabel { label: String },
    #[error("unknown concept {label:?}")]
    UnknownConcept { label: String },
    #[error("concept id {0:?} does not belong to this hierarchy")]
    UnknownId(ConceptId),
}

/// Tuning constants for the similarity measure.
///
/// `sim_alpha`/`sim_beta`/`sim_lambda` weight the distance, depth and density
/// measures; `zeta` is the cut-off below which [`Hierarchy::sim_obj`] treats
/// two concepts as unrelated. The `sim_` prefix keeps the distance-decay
/// constant apart from the unrelated trust-combination weight alpha.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SimilarityParams {
    pub sim_alpha: f64,
    pub sim_beta: f64,
    pub sim_lambda: f64,
    pub zeta: f64,
}

impl Default for SimilarityParams {
    fn default() -> Self {
        SimilarityParams {
            sim_alpha: 0.2,
            sim_beta: 0.6,
            sim_lambda: 0.5,
            zeta: 0.25,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ParamError {
    #[error("{name} must be positive, got {value}")]
    NotPositive { name: &'static str, value: f64 },
    #[error("{name} must lie in [0,1], got {value}")]
    OutOfUnit { name: &'static str, value: f64 },
}

impl SimilarityParams {
    pub fn validate(&self) -> Result<(), ParamError> {
        for (name, value) in [
            ("sim_alpha", self.sim_alpha),
            ("sim_beta", self.sim_beta),
            ("sim_lambda", self.sim_lambda),
        ] {
            if !value.is_finite() || value <= 0.0 {
                return Err(ParamError::NotPositive { name, value });
            }
        }
        if !(0.0..=1.0).contains(&self.zeta) {
            return Err(ParamError::OutOfUnit {
                name: "zeta",
                value: self.zeta,
            });
        }
        Ok(())
    }
}

/// The similarity aggregate as a pure function of the three measures.
///
/// Exposed separately so its monotonicity properties can be tested without
/// constructing trees for every (l, h, d) combination.
pub fn similarity_from_measures(l: u32, h: u32, d: f64, params: &SimilarityParams) -> f64 {
    (-params.sim_alpha * l as f64).exp()
        * (params.sim_beta * h as f64).tanh()
        * (params.sim_lambda * d).tanh()
}

/// On-disk shape of a hierarchy document.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HierarchyDoc {
    pub kind: HierarchyKind,
    pub root: String,
    pub edges: Vec<(String, String)>,
}

/// A validated rooted tree of labelled concepts.
///
/// Immutable after construction; all operations are pure reads.
#[derive(Debug, Clone)]
pub struct Hierarchy {
    kind: HierarchyKind,
    labels: Vec<String>,
    parent: Vec<Option<u32>>,
    children: Vec<Vec<u32>>,
    depth: Vec<u32>,
    /// Leaf descendants of each node, counting the node itself when a leaf.
    leaf_count: Vec<u32>,
    total_leaves: u32,
    by_label: BTreeMap<String, u32>,
}

impl Hierarchy {
    /// Parses and validates a JSON hierarchy document.
    pub fn parse(text: &str) -> Result<Self, OntologyError> {
        let doc: HierarchyDoc =
            serde_json::from_str(text).map_err(|e| OntologyError::Parse(e.to_string()))?;
        Self::from_doc(&doc)
    }

    /// Builds a hierarchy from a parsed document, checking every tree
    /// invariant: unique labels, a single root, no cycles, full reachability.
    pub fn from_doc(doc: &HierarchyDoc) -> Result<Self, OntologyError> {
        check_label(&doc.root)?;
        let mut by_label: BTreeMap<String, u32> = BTreeMap::new();
        let mut labels: Vec<String> = Vec::new();
        let mut intern = |label: &str, labels: &mut Vec<String>| -> u32 {
            if let Some(&id) = by_label.get(label) {
                return id;
            }
            let id = labels.len() as u32;
            labels.push(label.to_string());
            by_label.insert(label.to_string(), id);
            id
        };
        let root = intern(&doc.root, &mut labels);

        let mut parent: Vec<Option<u32>> = vec![None];
        for (p, c) in &doc.edges {
            check_label(p)?;
            check_label(c)?;
            let pid = intern(p, &mut labels);
            parent.resize(labels.len(), None);
            let cid = intern(c, &mut labels);
            parent.resize(labels.len(), None);
            if cid == root {
                return Err(OntologyError::RootHasParent { label: c.clone() });
            }
            if parent[cid as usize].is_some() {
                // A child listed twice is the same label declared under two
                // parents, which breaks label uniqueness in a tree document.
                return Err(OntologyError::DuplicateLabel { label: c.clone() });
            }
            parent[cid as usize] = Some(pid);
        }

        let n = labels.len();
        for id in 0..n as u32 {
            if id != root && parent[id as usize].is_none() {
                return Err(OntologyError::MultipleRoots {
                    label: labels[id as usize].clone(),
                });
            }
        }

        let mut children: Vec<Vec<u32>> = vec![Vec::new(); n];
        for id in 0..n as u32 {
            if let Some(p) = parent[id as usize] {
                children[p as usize].push(id);
            }
        }

        // Walk down from the root; anything unreached sits on a cycle, since
        // every non-root node has exactly one parent.
        let mut depth = vec![u32::MAX; n];
        let mut stack = vec![root];
        depth[root as usize] = 0;
        let mut reached = 1usize;
        while let Some(id) = stack.pop() {
            for &c in &children[id as usize] {
                depth[c as usize] = depth[id as usize] + 1;
                reached += 1;
                stack.push(c);
            }
        }
        if reached != n {
            let offender = (0..n).find(|&i| depth[i] == u32::MAX).unwrap();
            return Err(OntologyError::Cycle {
                label: labels[offender].clone(),
            });
        }

        let mut leaf_count = vec![0u32; n];
        let mut order: Vec<u32> = (0..n as u32).collect();
        order.sort_by_key(|&id| std::cmp::Reverse(depth[id as usize]));
        for &id in &order {
            if children[id as usize].is_empty() {
                leaf_count[id as usize] = 1;
            } else {
                leaf_count[id as usize] = children[id as usize]
                    .iter()
                    .map(|&c| leaf_count[c as usize])
                    .sum();
            }
        }
        let total_leaves = leaf_count[root as usize];

        Ok(Hierarchy {
            kind: doc.kind,
            labels,
            parent,
            children,
            depth,
            leaf_count,
            total_leaves,
            by_label,
        })
    }

    pub fn kind(&self) -> HierarchyKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        false // a hierarchy always has at least its root
    }

    pub fn root(&self) -> ConceptId {
        ConceptId(0)
    }

    pub fn concepts(&self) -> impl Iterator<Item = ConceptId> + '_ {
        (0..self.labels.len() as u32).map(ConceptId)
    }

    /// Resolves a label to its concept id.
    pub fn concept(&self, label: &str) -> Result<ConceptId, OntologyError> {
        self.by_label
            .get(label)
            .map(|&id| ConceptId(id))
            .ok_or_else(|| OntologyError::UnknownConcept {
                label: label.to_string(),
            })
    }

    pub fn label(&self, id: ConceptId) -> &str {
        &self.labels[id.0 as usize]
    }

    pub fn parent_of(&self, id: ConceptId) -> Option<ConceptId> {
        self.parent[id.0 as usize].map(ConceptId)
    }

    pub fn children_of(&self, id: ConceptId) -> impl Iterator<Item = ConceptId> + '_ {
        self.children[id.0 as usize].iter().map(|&c| ConceptId(c))
    }

    pub fn contains(&self, id: ConceptId) -> bool {
        (id.0 as usize) < self.labels.len()
    }

    fn check(&self, id: ConceptId) -> Result<(), OntologyError> {
        if self.contains(id) {
            Ok(())
        } else {
            Err(OntologyError::UnknownId(id))
        }
    }

    /// Edge count from the root; `depth(root) = 0`.
    pub fn depth(&self, id: ConceptId) -> Result<u32, OntologyError> {
        self.check(id)?;
        Ok(self.depth[id.0 as usize])
    }

    /// The deepest node that is an ancestor-or-self of both arguments.
    pub fn most_specific_subsumer(
        &self,
        a: ConceptId,
        b: ConceptId,
    ) -> Result<ConceptId, OntologyError> {
        self.check(a)?;
        self.check(b)?;
        let mut x = a.0;
        let mut y = b.0;
        while self.depth[x as usize] > self.depth[y as usize] {
            x = self.parent[x as usize].expect("non-root has a parent");
        }
        while self.depth[y as usize] > self.depth[x as usize] {
            y = self.parent[y as usize].expect("non-root has a parent");
        }
        while x != y {
            x = self.parent[x as usize].expect("non-root has a parent");
            y = self.parent[y as usize].expect("non-root has a parent");
        }
        Ok(ConceptId(x))
    }

    /// Number of edges on the unique tree path between two concepts.
    pub fn path_distance(&self, a: ConceptId, b: ConceptId) -> Result<u32, OntologyError> {
        let sub = self.most_specific_subsumer(a, b)?;
        Ok(self.depth[a.0 as usize] + self.depth[b.0 as usize] - 2 * self.depth[sub.0 as usize])
    }

    /// `-ln(p)` where `p` is the fraction of the hierarchy's leaves that
    /// descend from the node (the node itself when it is a leaf).
    pub fn information_content(&self, id: ConceptId) -> Result<f64, OntologyError> {
        self.check(id)?;
        let p = self.leaf_count[id.0 as usize] as f64 / self.total_leaves as f64;
        Ok(-p.ln())
    }

    /// Similarity of two concepts in `[0, 1)`. Zero whenever the only common
    /// subsumer is the root (its depth factor vanishes).
    pub fn semantic_similarity(
        &self,
        a: ConceptId,
        b: ConceptId,
        params: &SimilarityParams,
    ) -> Result<f64, OntologyError> {
        let sub = self.most_specific_subsumer(a, b)?;
        let l =
            self.depth[a.0 as usize] + self.depth[b.0 as usize] - 2 * self.depth[sub.0 as usize];
        let h = self.depth[sub.0 as usize];
        let d = self.information_content(sub)?;
        Ok(similarity_from_measures(l, h, d, params))
    }

    /// Thresholded similarity: the plain similarity when it strictly exceeds
    /// `zeta`, else zero. Experiences below the cut-off carry no weight.
    pub fn sim_obj(
        &self,
        a: ConceptId,
        b: ConceptId,
        params: &SimilarityParams,
    ) -> Result<f64, OntologyError> {
        let s = self.semantic_similarity(a, b, params)?;
        Ok(if s > params.zeta { s } else { 0.0 })
    }
}

fn check_label(label: &str) -> Result<(), OntologyError> {
    if label.is_empty() || label.contains('\t') || label.contains('\n') {
        return Err(OntologyError::InvalidLabel {
            label: label.to_string(),
        });
    }
    Ok(())
}

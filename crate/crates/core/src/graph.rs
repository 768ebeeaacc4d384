//! The heterogeneous document-entity graph.
//!
//! Nodes are laid out as all candidates, then all documents, then one entity
//! per mention (in mention order). Edges are undirected and stored per edge
//! type as sorted `(i, j)` pairs with `i < j`.

use std::collections::BTreeMap;
use std::fmt;
use std::fmt::Write as _;

use serde::Serialize;

use crate::corpus::{Mention, MentionSource, QuerySample};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum NodeKind {
    Candidate(usize),
    Document(usize),
    Entity(usize),
}

impl NodeKind {
    pub fn name(&self) -> &'static str {
        match self {
            NodeKind::Candidate(_) => "candidate",
            NodeKind::Document(_) => "document",
            NodeKind::Entity(_) => "entity",
        }
    }

    pub fn index(&self) -> usize {
        match *self {
            NodeKind::Candidate(i) | NodeKind::Document(i) | NodeKind::Entity(i) => i,
        }
    }
}

/// One of the seven relation types, numbered 1 through 7.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EdgeType(u8);

impl EdgeType {
    pub const DOCUMENT_CANDIDATE: EdgeType = EdgeType(1);
    pub const DOCUMENT_ENTITY: EdgeType = EdgeType(2);
    pub const CANDIDATE_ENTITY: EdgeType = EdgeType(3);
    pub const SAME_DOCUMENT: EdgeType = EdgeType(4);
    pub const SAME_SOURCE: EdgeType = EdgeType(5);
    pub const CANDIDATE_CANDIDATE: EdgeType = EdgeType(6);
    pub const OTHER_ENTITY: EdgeType = EdgeType(7);

    pub const COUNT: usize = 7;
    pub const ALL: [EdgeType; 7] = [
        EdgeType(1),
        EdgeType(2),
        EdgeType(3),
        EdgeType(4),
        EdgeType(5),
        EdgeType(6),
        EdgeType(7),
    ];

    pub fn new(number: u8) -> Result<Self> {
        if (1..=7).contains(&number) {
            Ok(EdgeType(number))
        } else {
            Err(Error::Graph(format!("edge type {number} outside 1..=7")))
        }
    }

    pub fn number(self) -> u8 {
        self.0
    }

    /// Zero-based slot, `number() - 1`.
    pub fn slot(self) -> usize {
        self.0 as usize - 1
    }
}

impl fmt::Display for EdgeType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "type-{}", self.0)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HdeGraph {
    nodes: Vec<NodeKind>,
    edges: [Vec<(usize, usize)>; EdgeType::COUNT],
    mentions: Vec<Mention>,
    num_candidates: usize,
    num_documents: usize,
}

fn canonical(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

/// The edge rule between two node kinds, if any, given the mention table.
/// Used by both construction and validation.
fn rule_edge(kinds: (NodeKind, NodeKind), mentions: &[Mention]) -> Option<EdgeType> {
    use NodeKind::*;
    let doc_has_candidate =
        |d: usize, c: usize| mentions.iter().any(|m| m.document_index == d && m.source == MentionSource::Candidate(c));
    match kinds {
        (Document(d), Candidate(c)) | (Candidate(c), Document(d)) => {
            doc_has_candidate(d, c).then_some(EdgeType::DOCUMENT_CANDIDATE)
        }
        (Document(d), Entity(e)) | (Entity(e), Document(d)) => {
            (mentions[e].document_index == d).then_some(EdgeType::DOCUMENT_ENTITY)
        }
        (Candidate(c), Entity(e)) | (Entity(e), Candidate(c)) => {
            (mentions[e].source == MentionSource::Candidate(c)).then_some(EdgeType::CANDIDATE_ENTITY)
        }
        (Candidate(a), Candidate(b)) => (a != b).then_some(EdgeType::CANDIDATE_CANDIDATE),
        (Entity(a), Entity(b)) if a != b => {
            let (ma, mb) = (&mentions[a], &mentions[b]);
            Some(if ma.document_index == mb.document_index {
                EdgeType::SAME_DOCUMENT
            } else if ma.source == mb.source {
                EdgeType::SAME_SOURCE
            } else {
                EdgeType::OTHER_ENTITY
            })
        }
        _ => None,
    }
}

/// Builds the graph for one sample from its extracted mentions.
pub fn build_graph(sample: &QuerySample, mentions: &[Mention]) -> Result<HdeGraph> {
    let (c, s) = (sample.candidates.len(), sample.documents.len());
    for (i, m) in mentions.iter().enumerate() {
        let Some(doc) = sample.documents.get(m.document_index) else {
            return Err(Error::Graph(format!(
                "mention {i} references missing document {}",
                m.document_index
            )));
        };
        if let MentionSource::Candidate(ci) = m.source {
            if ci >= c {
                return Err(Error::Graph(format!("mention {i} references missing candidate {ci}")));
            }
        }
        if m.start >= m.end || m.end > doc.len() {
            return Err(Error::Graph(format!("mention {i} span [{}, {}) out of bounds", m.start, m.end)));
        }
    }

    let mut nodes = Vec::with_capacity(c + s + mentions.len());
    nodes.extend((0..c).map(NodeKind::Candidate));
    nodes.extend((0..s).map(NodeKind::Document));
    nodes.extend((0..mentions.len()).map(NodeKind::Entity));
    let cand = |i: usize| i;
    let doc = |i: usize| c + i;
    let ent = |i: usize| c + s + i;

    let mut edges: [Vec<(usize, usize)>; 7] = Default::default();
    for (e, m) in mentions.iter().enumerate() {
        if let MentionSource::Candidate(ci) = m.source {
            edges[0].push((cand(ci), doc(m.document_index)));
            edges[2].push((cand(ci), ent(e)));
        }
        edges[1].push((doc(m.document_index), ent(e)));
    }
    for a in 0..mentions.len() {
        for b in a + 1..mentions.len() {
            let (ma, mb) = (&mentions[a], &mentions[b]);
            let slot = if ma.document_index == mb.document_index {
                3
            } else if ma.source == mb.source {
                4
            } else {
                6
            };
            edges[slot].push((ent(a), ent(b)));
        }
    }
    for a in 0..c {
        for b in a + 1..c {
            edges[5].push((cand(a), cand(b)));
        }
    }
    for list in &mut edges {
        list.sort_unstable();
        list.dedup();
    }
    Ok(HdeGraph {
        nodes,
        edges,
        mentions: mentions.to_vec(),
        num_candidates: c,
        num_documents: s,
    })
}

impl HdeGraph {
    pub fn nodes(&self) -> &[NodeKind] {
        &self.nodes
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_candidates(&self) -> usize {
        self.num_candidates
    }

    pub fn num_documents(&self) -> usize {
        self.num_documents
    }

    pub fn mentions(&self) -> &[Mention] {
        &self.mentions
    }

    pub fn edges(&self, r: EdgeType) -> &[(usize, usize)] {
        &self.edges[r.slot()]
    }

    /// Raw access for tools that need to edit a graph; [`validate`] reports
    /// any damage.
    pub fn edges_mut(&mut self, r: EdgeType) -> &mut Vec<(usize, usize)> {
        &mut self.edges[r.slot()]
    }

    pub fn num_edges(&self) -> usize {
        self.edges.iter().map(Vec::len).sum()
    }

    pub fn node_of(&self, kind: NodeKind) -> Option<usize> {
        self.nodes.iter().position(|&k| k == kind)
    }

    /// `(candidate index, node index)` for every candidate node.
    pub fn candidate_nodes(&self) -> Vec<(usize, usize)> {
        self.nodes
            .iter()
            .enumerate()
            .filter_map(|(n, k)| match k {
                NodeKind::Candidate(c) => Some((*c, n)),
                _ => None,
            })
            .collect()
    }

    /// `(mention index, node index)` for every entity node.
    pub fn entity_nodes(&self) -> Vec<(usize, usize)> {
        self.nodes
            .iter()
            .enumerate()
            .filter_map(|(n, k)| match k {
                NodeKind::Entity(m) => Some((*m, n)),
                _ => None,
            })
            .collect()
    }

    /// Partners of `node` under type-`r` edges, ascending.
    pub fn neighbors(&self, node: usize, r: EdgeType) -> Result<Vec<usize>> {
        if node >= self.nodes.len() {
            return Err(Error::Graph(format!(
                "node {node} out of range ({} nodes)",
                self.nodes.len()
            )));
        }
        let mut out: Vec<usize> = self.edges[r.slot()]
            .iter()
            .filter_map(|&(a, b)| {
                if a == node {
                    Some(b)
                } else if b == node {
                    Some(a)
                } else {
                    None
                }
            })
            .collect();
        out.sort_unstable();
        out.dedup();
        Ok(out)
    }

    /// Neighbour lists of every node under type `r`.
    pub fn adjacency(&self, r: EdgeType) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.nodes.len()];
        for &(a, b) in &self.edges[r.slot()] {
            adj[a].push(b);
            adj[b].push(a);
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        adj
    }

    /// Keeps only nodes accepted by `keep`, dropping their incident edges and
    /// renumbering the survivors in order.
    pub fn restrict(&self, keep: impl Fn(&NodeKind) -> bool) -> HdeGraph {
        let mut remap = vec![None; self.nodes.len()];
        let mut nodes = Vec::new();
        for (i, k) in self.nodes.iter().enumerate() {
            if keep(k) {
                remap[i] = Some(nodes.len());
                nodes.push(*k);
            }
        }
        let mut edges: [Vec<(usize, usize)>; 7] = Default::default();
        for (slot, list) in self.edges.iter().enumerate() {
            edges[slot] = list
                .iter()
                .filter_map(|&(a, b)| Some(canonical(remap[a]?, remap[b]?)))
                .collect();
        }
        HdeGraph {
            nodes,
            edges,
            mentions: self.mentions.clone(),
            num_candidates: self.num_candidates,
            num_documents: self.num_documents,
        }
    }

    /// Byte-stable JSON export: `{nodes:[{kind,ref}], edges:{type_k:[[i,j],…]}}`.
    pub fn to_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct NodeOut {
            kind: &'static str,
            #[serde(rename = "ref")]
            reference: usize,
        }
        #[derive(Serialize)]
        struct GraphOut {
            nodes: Vec<NodeOut>,
            edges: BTreeMap<String, Vec<[usize; 2]>>,
        }
        let out = GraphOut {
            nodes: self
                .nodes
                .iter()
                .map(|k| NodeOut {
                    kind: k.name(),
                    reference: k.index(),
                })
                .collect(),
            edges: EdgeType::ALL
                .iter()
                .map(|r| {
                    (
                        format!("type_{}", r.number()),
                        self.edges(*r).iter().map(|&(a, b)| [a, b]).collect(),
                    )
                })
                .collect(),
        };
        Ok(serde_json::to_string_pretty(&out)?)
    }

    /// Graphviz rendering; edge labels carry the edge type number.
    pub fn to_dot(&self) -> String {
        let mut s = String::from("graph hde {\n");
        for (i, k) in self.nodes.iter().enumerate() {
            let shape = match k {
                NodeKind::Candidate(_) => "box",
                NodeKind::Document(_) => "note",
                NodeKind::Entity(_) => "ellipse",
            };
            let _ = writeln!(s, "  n{i} [label=\"{} {}\", shape={shape}];", k.name(), k.index());
        }
        for r in EdgeType::ALL {
            for &(a, b) in self.edges(r) {
                let _ = writeln!(s, "  n{a} -- n{b} [label=\"{}\"];", r.number());
            }
        }
        s.push_str("}\n");
        s
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub edge_type: Option<EdgeType>,
    pub pair: Option<(usize, usize)>,
    pub rule: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.edge_type, self.pair) {
            (Some(r), Some((a, b))) => write!(f, "{r} edge ({a}, {b}): {}", self.rule),
            (Some(r), None) => write!(f, "{r}: {}", self.rule),
            _ => write!(f, "{}", self.rule),
        }
    }
}

/// Checks every structural and rule invariant; an empty result means the
/// graph is exactly what [`build_graph`] would produce for its node set.
pub fn validate(g: &HdeGraph) -> Vec<Violation> {
    let mut out = Vec::new();
    let n = g.nodes.len();
    let node_ok = |k: &NodeKind| match *k {
        NodeKind::Candidate(i) => i < g.num_candidates,
        NodeKind::Document(i) => i < g.num_documents,
        NodeKind::Entity(i) => i < g.mentions.len(),
    };
    let mut seen = std::collections::HashSet::new();
    let mut nodes_valid = true;
    for (i, k) in g.nodes.iter().enumerate() {
        if !node_ok(k) || !seen.insert(*k) {
            nodes_valid = false;
            out.push(Violation {
                edge_type: None,
                pair: None,
                rule: format!("node {i} ({k:?}) is out of range or repeated"),
            });
        }
    }
    if !nodes_valid {
        return out;
    }

    // Unordered entity pairs → the entity-entity types they carry.
    let mut entity_types: BTreeMap<(usize, usize), Vec<EdgeType>> = BTreeMap::new();
    for r in [EdgeType::SAME_DOCUMENT, EdgeType::SAME_SOURCE, EdgeType::OTHER_ENTITY] {
        for &(a, b) in g.edges(r) {
            if a < n && b < n && a != b {
                entity_types.entry(canonical(a, b)).or_default().push(r);
            }
        }
    }

    let mut present: std::collections::HashSet<(usize, usize, EdgeType)> = std::collections::HashSet::new();
    for r in EdgeType::ALL {
        for &(a, b) in g.edges(r) {
            let mut flag = |rule: String| {
                out.push(Violation {
                    edge_type: Some(r),
                    pair: Some((a, b)),
                    rule,
                })
            };
            if a >= n || b >= n {
                flag("endpoint out of range".into());
                continue;
            }
            if a == b {
                flag("self-loop".into());
                continue;
            }
            let key = canonical(a, b);
            if !present.insert((key.0, key.1, r)) {
                flag("duplicate edge".into());
                continue;
            }
            let kinds = (g.nodes[a], g.nodes[b]);
            let allowed = matches!(
                (r.number(), kinds.0.name(), kinds.1.name()),
                (1, "document", "candidate")
                    | (1, "candidate", "document")
                    | (2, "document", "entity")
                    | (2, "entity", "document")
                    | (3, "candidate", "entity")
                    | (3, "entity", "candidate")
                    | (4 | 5 | 7, "entity", "entity")
                    | (6, "candidate", "candidate")
            );
            if !allowed {
                flag(format!("{} joins {} and {}", r, kinds.0.name(), kinds.1.name()));
                continue;
            }
            let rule_ok = rule_edge(kinds, &g.mentions) == Some(r);
            if !rule_ok && entity_types.get(&key).is_some_and(|ts| ts.len() > 1) {
                flag("entity pair carries more than one of types 4, 5, 7 (disjointness)".into());
                continue;
            }
            if !rule_ok {
                flag(format!("pair does not satisfy the {r} rule"));
            }
        }
    }

    // Completeness: every pair the rules connect must be present.
    for a in 0..n {
        for b in a + 1..n {
            if let Some(r) = rule_edge((g.nodes[a], g.nodes[b]), &g.mentions) {
                if !present.contains(&(a, b, r)) {
                    out.push(Violation {
                        edge_type: Some(r),
                        pair: Some((a, b)),
                        rule: format!("missing {r} edge"),
                    });
                }
            }
        }
    }
    out
}

//! Relation-typed message passing with a gated node update.

use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::{EdgeType, HdeGraph};
use crate::nn::Linear;
use crate::numerics::{Groups, ParamStore, Tape, Tensor, Var};

/// Transforms used by one layer.
#[derive(Clone, Debug)]
pub struct LayerParams {
    /// Seven per-type transforms, or one shared by every type.
    pub relations: Vec<Linear>,
    pub self_transform: Linear,
    pub gate: Linear,
}

impl LayerParams {
    fn new<R: Rng>(store: &mut ParamStore, prefix: &str, width: usize, tie_edge_types: bool, rng: &mut R) -> Result<Self> {
        let relations = if tie_edge_types {
            vec![Linear::new(store, &format!("{prefix}.relation.shared"), width, width, rng)?]
        } else {
            EdgeType::ALL
                .iter()
                .map(|r| Linear::new(store, &format!("{prefix}.relation.{}", r.number()), width, width, rng))
                .collect::<Result<_>>()?
        };
        Ok(LayerParams {
            relations,
            self_transform: Linear::new(store, &format!("{prefix}.self"), width, width, rng)?,
            gate: Linear::new(store, &format!("{prefix}.gate"), 2 * width, width, rng)?,
        })
    }

    pub fn relation(&self, r: EdgeType) -> &Linear {
        &self.relations[r.slot().min(self.relations.len() - 1)]
    }
}

#[derive(Clone, Debug)]
pub struct GnnParams {
    pub layers: usize,
    pub width: usize,
    sets: Vec<LayerParams>,
}

impl GnnParams {
    /// `width` is the node state width (2h). With `per_layer` every layer gets
    /// its own transforms; otherwise one set is reused `layers` times.
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        width: usize,
        layers: usize,
        tie_edge_types: bool,
        per_layer: bool,
        rng: &mut R,
    ) -> Result<Self> {
        let sets = if per_layer {
            (0..layers)
                .map(|k| LayerParams::new(store, &format!("gnn.{k}"), width, tie_edge_types, rng))
                .collect::<Result<_>>()?
        } else {
            vec![LayerParams::new(store, "gnn", width, tie_edge_types, rng)?]
        };
        Ok(GnnParams { layers, width, sets })
    }

    pub fn layer(&self, k: usize) -> &LayerParams {
        &self.sets[k.min(self.sets.len() - 1)]
    }
}

/// Per-type neighbour lists; `None` for types without edges.
#[derive(Clone, Debug)]
pub struct Adjacency {
    nodes: usize,
    groups: Vec<Option<Groups>>,
}

impl Adjacency {
    pub fn from_graph(g: &HdeGraph) -> Self {
        let groups = EdgeType::ALL
            .iter()
            .map(|&r| (!g.edges(r).is_empty()).then(|| Groups::new(g.adjacency(r))))
            .collect();
        Adjacency {
            nodes: g.num_nodes(),
            groups,
        }
    }

    /// Builds from explicit per-type neighbour lists (index `r.slot()`).
    pub fn from_lists(nodes: usize, lists: Vec<Vec<Vec<usize>>>) -> Result<Self> {
        if lists.len() != EdgeType::COUNT {
            return Err(Error::Graph(format!("expected 7 neighbour tables, got {}", lists.len())));
        }
        let groups = lists
            .into_iter()
            .map(|l| {
                if l.len() != nodes {
                    return Err(Error::Graph(format!("neighbour table has {} rows for {nodes} nodes", l.len())));
                }
                Ok(l.iter().any(|n| !n.is_empty()).then(|| Groups::new(l)))
            })
            .collect::<Result<_>>()?;
        Ok(Adjacency { nodes, groups })
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }
}

/// Neighbour messages for every node: Σ_r mean_{j ∈ N_i^r} f_r(h_j). Types
/// with no neighbours contribute zero.
pub fn aggregate(tape: &mut Tape, states: Var, adj: &Adjacency, layer: &LayerParams) -> Result<Var> {
    let shape = tape.shape(states);
    if shape[0] != adj.nodes {
        return Err(Error::shape("aggregate", shape, [adj.nodes, shape[1]]));
    }
    let mut total: Option<Var> = None;
    let mut shared: Option<Var> = None;
    for r in EdgeType::ALL {
        let Some(groups) = &adj.groups[r.slot()] else {
            continue;
        };
        let transformed = if layer.relations.len() == 1 {
            match shared {
                Some(t) => t,
                None => {
                    let t = layer.relation(r).apply(tape, states)?;
                    shared = Some(t);
                    t
                }
            }
        } else {
            layer.relation(r).apply(tape, states)?
        };
        let msg = tape.gather_mean(transformed, groups.clone())?;
        total = Some(match total {
            Some(t) => tape.add(t, msg)?,
            None => msg,
        });
    }
    Ok(match total {
        Some(t) => t,
        None => tape.constant(Tensor::zeros(shape[0], shape[1])),
    })
}

/// `u = f_s(h) + z`, `g = σ(f_g([u | h]))`, `h' = tanh(u) ⊙ g + h ⊙ (1 − g)`.
pub fn gated_update(tape: &mut Tape, h: Var, z: Var, layer: &LayerParams) -> Result<Var> {
    if tape.shape(h) != tape.shape(z) {
        return Err(Error::shape("gated_update", tape.shape(h), tape.shape(z)));
    }
    let own = layer.self_transform.apply(tape, h)?;
    let u = tape.add(own, z)?;
    let joint = tape.concat_cols(u, h)?;
    let gate_pre = layer.gate.apply(tape, joint)?;
    let g = tape.sigmoid(gate_pre);
    let cand = tape.tanh(u);
    let delta = tape.sub(cand, h)?;
    let step = tape.mul(g, delta)?;
    tape.add(h, step)
}

/// Runs `params.layers` synchronous layers starting from `init`.
pub fn message_pass(tape: &mut Tape, adj: &Adjacency, init: Var, params: &GnnParams) -> Result<Var> {
    let shape = tape.shape(init);
    if shape[1] != params.width {
        return Err(Error::shape("message_pass", shape, [shape[0], params.width]));
    }
    let mut h = init;
    for k in 0..params.layers {
        let layer = params.layer(k);
        let z = aggregate(tape, h, adj, layer)?;
        h = gated_update(tape, h, z, layer)?;
    }
    Ok(h)
}

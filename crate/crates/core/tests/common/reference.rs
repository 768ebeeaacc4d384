//! Straight-line scalar re-implementations of the forward pass. Nothing here
//! touches the tape or the library's tensor kernels.

use hde::corpus::{Mention, MentionSource};
use hde::encoder::{EncoderParams, Family, Role, SampleEmbeddings};
use hde::gnn::{GnnParams, LayerParams};
use hde::graph::{EdgeType, HdeGraph};
use hde::nn::{BiGru, Gru, Linear, Mlp};
use hde::numerics::{ParamId, ParamStore, Tensor};
use hde::scoring::{ScoreHeads, ScoreLayout, ScoreTerms};

pub type Mat = Vec<Vec<f64>>;

pub fn mat(t: &Tensor) -> Mat {
    (0..t.rows()).map(|r| t.row(r).to_vec()).collect()
}

pub fn tensor(m: &Mat, cols: usize) -> Tensor {
    Tensor::new(m.len(), cols, m.iter().flatten().copied().collect()).unwrap()
}

fn param(store: &ParamStore, id: ParamId) -> Mat {
    mat(&store.get(id).tensor)
}

fn bias(store: &ParamStore, id: ParamId) -> Vec<f64> {
    store.get(id).tensor.row(0).to_vec()
}

pub fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

pub fn softmax(v: &[f64]) -> Vec<f64> {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = v.iter().map(|x| (x - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|x| x / s).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `x · W + b` for one row.
pub fn affine(x: &[f64], w: &Mat, b: &[f64]) -> Vec<f64> {
    let mut out = b.to_vec();
    for (i, xi) in x.iter().enumerate() {
        for (j, o) in out.iter_mut().enumerate() {
            *o += xi * w[i][j];
        }
    }
    out
}

pub fn linear(x: &[f64], l: &Linear, store: &ParamStore) -> Vec<f64> {
    affine(x, &param(store, l.w), &bias(store, l.b))
}

pub fn mlp(x: &[f64], m: &Mlp, store: &ParamStore) -> Vec<f64> {
    let hidden: Vec<f64> = linear(x, &m.hidden, store).into_iter().map(f64::tanh).collect();
    linear(&hidden, &m.out, store)
}

/// One GRU direction, unrolled step by step. States are returned in position
/// order.
pub fn gru(xs: &Mat, g: &Gru, store: &ParamStore, reverse: bool) -> Mat {
    let k = g.units;
    let (wx, wh) = (param(store, g.w_x), param(store, g.w_h));
    let (bx, bh) = (bias(store, g.b_x), bias(store, g.b_h));
    let l = xs.len();
    let mut h = vec![0.0; k];
    let mut out = vec![Vec::new(); l];
    for step in 0..l {
        let t = if reverse { l - 1 - step } else { step };
        let xp = affine(&xs[t], &wx, &bx);
        let hp = affine(&h, &wh, &bh);
        let mut next = vec![0.0; k];
        for u in 0..k {
            let z = sigmoid(xp[u] + hp[u]);
            let r = sigmoid(xp[k + u] + hp[k + u]);
            let n = (xp[2 * k + u] + r * hp[2 * k + u]).tanh();
            next[u] = (1.0 - z) * n + z * h[u];
        }
        h = next;
        out[t] = h.clone();
    }
    out
}

pub fn bigru(xs: &Mat, b: &BiGru, store: &ParamStore) -> Mat {
    let f = gru(xs, &b.forward, store, false);
    let r = gru(xs, &b.backward, store, true);
    f.into_iter().zip(r).map(|(mut a, b)| {
        a.extend(b);
        a
    }).collect()
}

fn weighted_rows(weights: &[f64], rows: &Mat) -> Vec<f64> {
    let mut out = vec![0.0; rows[0].len()];
    for (w, r) in weights.iter().zip(rows) {
        for (o, v) in out.iter_mut().zip(r) {
            *o += w * v;
        }
    }
    out
}

pub fn coattend(hq: &Mat, hx: &Mat, fusion: &BiGru, store: &ParamStore) -> Mat {
    let a: Mat = hx.iter().map(|x| hq.iter().map(|q| dot(x, q)).collect()).collect();
    let to_q: Mat = a.iter().map(|row| softmax(row)).collect();
    let to_x: Mat = (0..hq.len())
        .map(|j| softmax(&a.iter().map(|row| row[j]).collect::<Vec<_>>()))
        .collect();
    let c_q: Mat = to_x.iter().map(|w| weighted_rows(w, hx)).collect();
    let c_x: Mat = to_q.iter().map(|w| weighted_rows(w, hq)).collect();
    let mixed: Mat = to_q.iter().map(|w| weighted_rows(w, &c_q)).collect();
    let d = bigru(&mixed, fusion, store);
    c_x.into_iter().zip(d).map(|(mut c, d)| {
        c.extend(d);
        c
    }).collect()
}

pub fn pool(s: &Mat, attention: &Mlp, store: &ParamStore) -> Vec<f64> {
    let scores: Vec<f64> = s.iter().map(|row| mlp(row, attention, store)[0]).collect();
    weighted_rows(&softmax(&scores), s)
}

pub fn lift(m: &Mat, p: &EncoderParams, store: &ParamStore) -> Mat {
    m.iter()
        .map(|row| linear(row, &p.lift, store).into_iter().map(f64::tanh).collect())
        .collect()
}

/// Candidate, document and entity vectors for one sample.
pub fn encode_sample(mentions: &[Mention], emb: &SampleEmbeddings, p: &EncoderParams, store: &ParamStore) -> (Mat, Mat, Mat) {
    let hq = bigru(&mat(&emb.query), p.encoder(Role::Query), store);
    let doc_states: Vec<Mat> = emb
        .documents
        .iter()
        .map(|d| bigru(&mat(d), p.encoder(Role::Document), store))
        .collect();
    let docs = doc_states
        .iter()
        .map(|hs| pool(&coattend(&hq, hs, p.fusion(Family::Document), store), p.attention(Family::Document), store))
        .collect();
    let cands = emb
        .candidates
        .iter()
        .map(|c| {
            let hc = bigru(&mat(c), p.encoder(Role::Candidate), store);
            pool(&coattend(&hq, &hc, p.fusion(Family::Candidate), store), p.attention(Family::Candidate), store)
        })
        .collect();
    let ents = mentions
        .iter()
        .map(|m| {
            let span: Mat = doc_states[m.document_index][m.start..m.end].to_vec();
            let rows = match m.source {
                MentionSource::Candidate(_) => coattend(&hq, &span, p.fusion(Family::Entity), store),
                MentionSource::Subject => lift(&span, p, store),
            };
            pool(&rows, p.attention(Family::Entity), store)
        })
        .collect();
    (cands, docs, ents)
}

/// Neighbour lists per edge type slot, read straight off the edge pairs.
pub fn neighbours(g: &HdeGraph) -> Vec<Vec<Vec<usize>>> {
    EdgeType::ALL
        .iter()
        .map(|&r| {
            let mut l = vec![Vec::new(); g.num_nodes()];
            for &(a, b) in g.edges(r) {
                l[a].push(b);
                l[b].push(a);
            }
            l
        })
        .collect()
}

/// Double loop over nodes and edge types.
pub fn aggregate(h: &Mat, nbrs: &[Vec<Vec<usize>>], layer: &LayerParams, store: &ParamStore) -> Mat {
    let width = h[0].len();
    (0..h.len())
        .map(|i| {
            let mut z = vec![0.0; width];
            for r in EdgeType::ALL {
                let list = &nbrs[r.slot()][i];
                if list.is_empty() {
                    continue;
                }
                for &j in list {
                    let m = linear(&h[j], layer.relation(r), store);
                    for c in 0..width {
                        z[c] += m[c] / list.len() as f64;
                    }
                }
            }
            z
        })
        .collect()
}

pub fn gated_update(h: &Mat, z: &Mat, layer: &LayerParams, store: &ParamStore) -> Mat {
    h.iter()
        .zip(z)
        .map(|(hi, zi)| {
            let own = linear(hi, &layer.self_transform, store);
            let u: Vec<f64> = own.iter().zip(zi).map(|(a, b)| a + b).collect();
            let mut joint = u.clone();
            joint.extend_from_slice(hi);
            let g: Vec<f64> = linear(&joint, &layer.gate, store).into_iter().map(sigmoid).collect();
            (0..hi.len()).map(|c| g[c] * u[c].tanh() + (1.0 - g[c]) * hi[c]).collect()
        })
        .collect()
}

pub fn message_pass(h0: &Mat, nbrs: &[Vec<Vec<usize>>], p: &GnnParams, store: &ParamStore) -> Mat {
    let mut h = h0.clone();
    for k in 0..p.layers {
        let z = aggregate(&h, nbrs, p.layer(k), store);
        h = gated_update(&h, &z, p.layer(k), store);
    }
    h
}

pub fn scores(states: &Mat, layout: &ScoreLayout, heads: &ScoreHeads, terms: ScoreTerms, store: &ParamStore) -> Vec<f64> {
    (0..layout.num_candidates)
        .map(|j| {
            let mut a = 0.0;
            if terms.candidate && !layout.candidate_rows.is_empty() {
                a += mlp(&states[layout.candidate_rows[j]], &heads.candidate, store)[0];
            }
            if terms.entity && !layout.entity_groups[j].is_empty() {
                a += layout.entity_groups[j]
                    .iter()
                    .map(|&p| mlp(&states[layout.entity_rows[p]], &heads.entity, store)[0])
                    .fold(f64::NEG_INFINITY, f64::max);
            }
            a
        })
        .collect()
}

pub fn max_abs_diff(a: &Mat, b: &Mat) -> f64 {
    assert_eq!(a.len(), b.len(), "row count");
    a.iter()
        .zip(b)
        .flat_map(|(x, y)| {
            assert_eq!(x.len(), y.len(), "column count");
            x.iter().zip(y).map(|(p, q)| (p - q).abs())
        })
        .fold(0.0, f64::max)
}

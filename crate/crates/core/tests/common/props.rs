//! Randomised invariants. Each property is a plain function over a generated
//! input so it can run under `proptest!` or a hand-driven `TestRunner`.

use std::collections::HashMap;
use std::sync::Arc;

use proptest::prelude::*;
use proptest::test_runner::{RngSeed, TestCaseError, TestRunner};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use hde::corpus::{extract_mentions, MentionSource, QuerySample};
use hde::encoder::{encode_sample, EncoderParams, SampleEmbeddings};
use hde::gnn::{gated_update, message_pass, Adjacency, GnnParams};
use hde::graph::{build_graph, EdgeType};
use hde::numerics::{ParamStore, Tape, Tensor};
use hde::scoring::{accumulate_scores, cross_entropy, predict, PredictionRecord, ScoreHeads, ScoreLayout, ScoreTerms};
use hde::training::ensemble_vote;

use super::fixtures::{provider, random_sample, tiny_config};
use super::reference::{self, mat};

pub const CASES: u32 = 128;

pub fn config() -> ProptestConfig {
    ProptestConfig {
        cases: CASES,
        rng_seed: RngSeed::Fixed(0x0dd5_eed5),
        failure_persistence: None,
        ..ProptestConfig::default()
    }
}

type Prop = Result<(), TestCaseError>;

fn random_tensor(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Tensor {
    Tensor::new(rows, cols, (0..rows * cols).map(|_| rng.random_range(-scale..scale)).collect()).unwrap()
}

fn permutation(rng: &mut ChaCha8Rng, n: usize) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(rng);
    p
}

// ---- softmax normalisation ----

pub fn softmax_matrix() -> impl Strategy<Value = Vec<Vec<f64>>> {
    (1usize..8).prop_flat_map(|cols| prop::collection::vec(prop::collection::vec(-1e3..1e3f64, cols), 1..6))
}

pub fn softmax_rows_normalised(m: Vec<Vec<f64>>) -> Prop {
    let store = ParamStore::new();
    let mut tape = Tape::new(&store);
    let x = tape.constant(reference::tensor(&m, m[0].len()));
    let s = tape.softmax_rows(x);
    let out = tape.value(s);
    for r in 0..out.rows() {
        let row = out.row(r);
        prop_assert!(row.iter().all(|v| v.is_finite() && (0.0..=1.0).contains(v)));
        let sum: f64 = row.iter().sum();
        prop_assert!((sum - 1.0).abs() < 1e-9, "row {} sums to {}", r, sum);
    }
    Ok(())
}

// ---- argmax shift invariance ----

/// Scores and shift on a 1/8 grid, so every sum is exact.
pub fn shifted_scores() -> impl Strategy<Value = (Vec<i32>, i32)> {
    (prop::collection::vec(-400i32..400, 1..12), -8000i32..8000)
}

pub fn argmax_shift_invariant((raw, shift): (Vec<i32>, i32)) -> Prop {
    let scores: Vec<f64> = raw.iter().map(|&v| v as f64 / 8.0).collect();
    let shifted: Vec<f64> = scores.iter().map(|v| v + shift as f64 / 8.0).collect();
    prop_assert_eq!(predict(&scores), predict(&shifted));
    let oracle = (0..raw.len()).fold(0, |b, i| if raw[i] > raw[b] { i } else { b });
    prop_assert_eq!(predict(&scores), oracle);
    let a = cross_entropy(&scores, 0).unwrap();
    let b = cross_entropy(&shifted, 0).unwrap();
    prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
    prop_assert!(a >= 0.0);
    Ok(())
}

// ---- empty-set rule of the entity max ----

pub fn seeds() -> impl Strategy<Value = u64> {
    any::<u64>()
}

pub fn empty_max_rule(seed: u64) -> Prop {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let width = 2 * rng.random_range(1..4);
    let mut store = ParamStore::new();
    let heads = ScoreHeads::new(&mut store, width, &mut rng).unwrap();
    let c = rng.random_range(2..6);
    let mut entity_rows = Vec::new();
    let mut groups = vec![Vec::new(); c];
    let mut next_row = c;
    for g in groups.iter_mut() {
        for _ in 0..rng.random_range(0..3) {
            g.push(entity_rows.len());
            entity_rows.push(next_row);
            next_row += 1;
        }
    }
    let layout = ScoreLayout {
        num_candidates: c,
        candidate_rows: Arc::new((0..c).collect()),
        entity_rows: Arc::new(entity_rows),
        entity_groups: groups,
    };
    let states = random_tensor(&mut rng, next_row, width, 1.0);
    let m = mat(&states);
    for terms in [
        ScoreTerms::default(),
        ScoreTerms { candidate: false, entity: true },
    ] {
        let mut tape = Tape::new(&store);
        let s = tape.constant(states.clone());
        let Ok(out) = accumulate_scores(&mut tape, s, &layout, &heads, terms) else {
            // Only possible when no entity row exists and the candidate term is off.
            prop_assert!(!terms.candidate);
            continue;
        };
        let total = tape.value(out.total).data().to_vec();
        for (j, group) in layout.entity_groups.iter().enumerate() {
            let cand = if terms.candidate {
                tape.value(out.candidate.unwrap()).get(j, 0)
            } else {
                0.0
            };
            if group.is_empty() {
                prop_assert_eq!(total[j], cand);
            }
        }
        let want = reference::scores(&m, &layout, &heads, terms, &store);
        for j in 0..c {
            prop_assert!((total[j] - want[j]).abs() < 1e-12);
        }
    }
    Ok(())
}

// ---- gated update ----

pub fn gated_update_bounded(seed: u64) -> Prop {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let width = 2 * rng.random_range(1..4);
    let mut store = ParamStore::new();
    let p = GnnParams::new(&mut store, width, 1, false, false, &mut rng).unwrap();
    let n = rng.random_range(1..5);
    let h = random_tensor(&mut rng, n, width, 2.0);
    let z = random_tensor(&mut rng, n, width, 5.0);
    let mut tape = Tape::new(&store);
    let (hv, zv) = (tape.constant(h.clone()), tape.constant(z.clone()));
    let out = gated_update(&mut tape, hv, zv, p.layer(0)).unwrap();
    let out = tape.value(out);
    let layer = p.layer(0);
    for i in 0..n {
        let hi = h.row(i);
        let u: Vec<f64> = reference::linear(hi, &layer.self_transform, &store)
            .iter()
            .zip(z.row(i))
            .map(|(a, b)| a + b)
            .collect();
        let mut joint = u.clone();
        joint.extend_from_slice(hi);
        let g: Vec<f64> = reference::linear(&joint, &layer.gate, &store)
            .into_iter()
            .map(reference::sigmoid)
            .collect();
        for c in 0..width {
            prop_assert!(g[c] > 0.0 && g[c] < 1.0, "gate {}", g[c]);
            let v = out.get(i, c);
            prop_assert!(v.abs() <= hi[c].abs().max(1.0) + 1e-12, "{} escapes bound {}", v, hi[c]);
            let want = g[c] * u[c].tanh() + (1.0 - g[c]) * hi[c];
            prop_assert!((v - want).abs() < 1e-12);
        }
    }
    Ok(())
}

// ---- locality on a path graph ----

pub fn locality(seed: u64) -> Prop {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(3..9);
    let k = rng.random_range(0..5);
    let r = EdgeType::ALL[rng.random_range(0..7)];
    let width = 4;
    let mut store = ParamStore::new();
    let p = GnnParams::new(&mut store, width, k, false, rng.random_bool(0.5), &mut rng).unwrap();
    let mut lists = vec![vec![Vec::new(); n]; 7];
    for i in 0..n - 1 {
        lists[r.slot()][i].push(i + 1);
        lists[r.slot()][i + 1].push(i);
    }
    let adj = Adjacency::from_lists(n, lists).unwrap();
    let h0 = random_tensor(&mut rng, n, width, 1.0);
    let mut h1 = h0.clone();
    for c in 0..width {
        h1.set(0, c, h1.get(0, c) + rng.random_range(0.5..2.0));
    }
    let run = |h: &Tensor| {
        let mut tape = Tape::new(&store);
        let x = tape.constant(h.clone());
        let out = message_pass(&mut tape, &adj, x, &p).unwrap();
        tape.value(out).clone()
    };
    let (a, b) = (run(&h0), run(&h1));
    for i in 0..n {
        if i > k {
            prop_assert_eq!(a.row(i), b.row(i), "node {} at distance {} > {} moved", i, i, k);
        }
    }
    if k + 1 < n && k > 0 {
        prop_assert!(a.row(k) != b.row(k), "node at distance {} unaffected", k);
    }
    Ok(())
}

// ---- permutation equivariance ----

fn permute_documents(s: &QuerySample, perm: &[usize]) -> QuerySample {
    let mut t = s.clone();
    t.documents = perm.iter().map(|&i| s.documents[i].clone()).collect();
    t
}

fn permute_candidates(s: &QuerySample, perm: &[usize]) -> QuerySample {
    let mut t = s.clone();
    t.candidates = perm.iter().map(|&i| s.candidates[i].clone()).collect();
    t.answer_index = s.answer_index.map(|a| perm.iter().position(|&i| i == a).unwrap());
    t
}

/// Document order: document vectors permute, each vector bit-identical.
pub fn encoder_equivariant(seed: u64) -> Prop {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = random_sample(&mut rng, 0).sample;
    let perm = permutation(&mut rng, s.documents.len());
    let t = permute_documents(&s, &perm);
    let cfg = tiny_config();
    let prov = provider(&cfg);
    let mut store = ParamStore::new();
    let params = EncoderParams::new(&mut store, cfg.input_dim(), cfg.h, false, false, &mut rng).unwrap();
    let run = |q: &QuerySample| {
        let m = extract_mentions(q);
        let emb = SampleEmbeddings::new(q, &prov).unwrap();
        let mut tape = Tape::new(&store);
        let v = encode_sample(&mut tape, &m, &emb, &params).unwrap();
        (m, v.values(&tape))
    };
    let (ma, a) = run(&s);
    let (mb, b) = run(&t);
    for (new, &old) in perm.iter().enumerate() {
        prop_assert_eq!(b.document_vectors.row(new), a.document_vectors.row(old));
    }
    prop_assert_eq!(&a.candidate_vectors, &b.candidate_vectors);
    let index: HashMap<_, usize> = ma.iter().enumerate().map(|(i, m)| ((m.document_index, m.start, m.end, m.source), i)).collect();
    prop_assert_eq!(ma.len(), mb.len());
    for (j, m) in mb.iter().enumerate() {
        let i = index[&(perm[m.document_index], m.start, m.end, m.source)];
        prop_assert_eq!(b.entity_vectors.row(j), a.entity_vectors.row(i));
    }
    Ok(())
}

/// Candidate order: graph nodes and edges relabel consistently.
pub fn graph_equivariant(seed: u64) -> Prop {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = random_sample(&mut rng, 0).sample;
    let c = s.candidates.len();
    let perm = permutation(&mut rng, c);
    let t = permute_candidates(&s, &perm);
    let (ma, mb) = (extract_mentions(&s), extract_mentions(&t));
    let ga = build_graph(&s, &ma).unwrap();
    let gb = build_graph(&t, &mb).unwrap();
    prop_assert_eq!(ga.num_nodes(), gb.num_nodes());
    let old_of_new_cand = |j: usize| perm[j];
    let index: HashMap<_, usize> = ma.iter().enumerate().map(|(i, m)| ((m.document_index, m.start, m.end, m.source), i)).collect();
    let s_docs = s.documents.len();
    // Node of graph b -> node of graph a.
    let map = |node: usize| -> usize {
        if node < c {
            old_of_new_cand(node)
        } else if node < c + s_docs {
            node
        } else {
            let m = mb[node - c - s_docs];
            let source = match m.source {
                MentionSource::Candidate(j) => MentionSource::Candidate(old_of_new_cand(j)),
                MentionSource::Subject => MentionSource::Subject,
            };
            c + s_docs + index[&(m.document_index, m.start, m.end, source)]
        }
    };
    for r in EdgeType::ALL {
        let mut want: Vec<(usize, usize)> = ga.edges(r).to_vec();
        want.sort_unstable();
        let mut got: Vec<(usize, usize)> = gb
            .edges(r)
            .iter()
            .map(|&(x, y)| {
                let (p, q) = (map(x), map(y));
                (p.min(q), p.max(q))
            })
            .collect();
        got.sort_unstable();
        prop_assert_eq!(got, want, "{}", r);
    }
    Ok(())
}

/// Node relabelling commutes with message passing.
pub fn gnn_equivariant(seed: u64) -> Prop {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(1..8);
    let width = 4;
    let mut store = ParamStore::new();
    let p = GnnParams::new(&mut store, width, rng.random_range(1..4), false, false, &mut rng).unwrap();
    let mut lists = vec![vec![Vec::new(); n]; 7];
    for l in lists.iter_mut() {
        for a in 0..n {
            for b in a + 1..n {
                if rng.random_bool(0.3) {
                    l[a].push(b);
                    l[b].push(a);
                }
            }
        }
    }
    let perm = permutation(&mut rng, n);
    let mut inverse = vec![0; n];
    for (new, &old) in perm.iter().enumerate() {
        inverse[old] = new;
    }
    let permuted_lists: Vec<Vec<Vec<usize>>> = lists
        .iter()
        .map(|l| {
            perm.iter()
                .map(|&old| {
                    let mut v: Vec<usize> = l[old].iter().map(|&x| inverse[x]).collect();
                    v.sort_unstable();
                    v
                })
                .collect()
        })
        .collect();
    let h = random_tensor(&mut rng, n, width, 1.0);
    let hp = reference::tensor(&perm.iter().map(|&old| h.row(old).to_vec()).collect(), width);
    let run = |lists: Vec<Vec<Vec<usize>>>, h: &Tensor| {
        let adj = Adjacency::from_lists(n, lists).unwrap();
        let mut tape = Tape::new(&store);
        let x = tape.constant(h.clone());
        let out = message_pass(&mut tape, &adj, x, &p).unwrap();
        tape.value(out).clone()
    };
    let a = run(lists, &h);
    let b = run(permuted_lists, &hp);
    for (new, &old) in perm.iter().enumerate() {
        for c in 0..width {
            prop_assert!((b.get(new, c) - a.get(old, c)).abs() < 1e-12);
        }
    }
    Ok(())
}

/// Candidate relabelling permutes scores exactly; entity order within a
/// candidate's group does not matter.
pub fn scoring_equivariant(seed: u64) -> Prop {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let width = 4;
    let mut store = ParamStore::new();
    let heads = ScoreHeads::new(&mut store, width, &mut rng).unwrap();
    let c = rng.random_range(2..6);
    let mut entity_rows = Vec::new();
    let mut groups = vec![Vec::new(); c];
    for g in groups.iter_mut() {
        for _ in 0..rng.random_range(0..4) {
            g.push(entity_rows.len());
            entity_rows.push(c + entity_rows.len());
        }
    }
    let states = random_tensor(&mut rng, c + entity_rows.len(), width, 1.0);
    let perm = permutation(&mut rng, c);
    let base = ScoreLayout {
        num_candidates: c,
        candidate_rows: Arc::new((0..c).collect()),
        entity_rows: Arc::new(entity_rows),
        entity_groups: groups.clone(),
    };
    let permuted = ScoreLayout {
        num_candidates: c,
        candidate_rows: Arc::new(perm.clone()),
        entity_rows: base.entity_rows.clone(),
        entity_groups: perm
            .iter()
            .map(|&old| {
                let mut g = groups[old].clone();
                g.shuffle(&mut rng);
                g
            })
            .collect(),
    };
    let run = |layout: &ScoreLayout| {
        let mut tape = Tape::new(&store);
        let x = tape.constant(states.clone());
        let out = accumulate_scores(&mut tape, x, layout, &heads, ScoreTerms::default()).unwrap();
        tape.value(out.total).data().to_vec()
    };
    let (a, b) = (run(&base), run(&permuted));
    for (new, &old) in perm.iter().enumerate() {
        prop_assert_eq!(b[new], a[old]);
    }
    Ok(())
}

// ---- ensemble tie-break ----

pub fn votes() -> impl Strategy<Value = (usize, Vec<Vec<usize>>)> {
    (2usize..6, 1usize..16, 1usize..6).prop_flat_map(|(c, m, n)| {
        (Just(c), prop::collection::vec(prop::collection::vec(0..c, n), m))
    })
}

pub fn ensemble_tie_break((c, picks): (usize, Vec<Vec<usize>>)) -> Prop {
    let models: Vec<Vec<PredictionRecord>> = picks
        .iter()
        .map(|row| {
            row.iter()
                .enumerate()
                .map(|(i, &p)| {
                    let mut s = vec![0.0; c];
                    s[p] = 1.0;
                    PredictionRecord::new(format!("q{i}"), s)
                })
                .collect()
        })
        .collect();
    let out = ensemble_vote(&models).unwrap();
    let mut reversed = models.clone();
    reversed.reverse();
    let again = ensemble_vote(&reversed).unwrap();
    for i in 0..picks[0].len() {
        let mut counts = vec![0usize; c];
        for row in &picks {
            counts[row[i]] += 1;
        }
        let best = counts.iter().max().unwrap();
        let oracle = counts.iter().position(|n| n == best).unwrap();
        prop_assert_eq!(out[i].predicted_candidate, oracle);
        prop_assert_eq!(again[i].predicted_candidate, oracle);
    }
    if picks.len() == 1 {
        for (o, p) in out.iter().zip(&models[0]) {
            prop_assert_eq!(o.predicted_candidate, p.predicted_candidate);
        }
    }
    Ok(())
}

/// Runs `prop` over `CASES` generated inputs with the fixed seed.
pub fn run<S: Strategy>(strategy: S, prop: fn(S::Value) -> Prop) -> Result<(), String> {
    let mut runner = TestRunner::new(config());
    runner.run(&strategy, prop).map_err(|e| e.to_string())
}

/// Every property with its name, as `(name, outcome)`.
pub fn suite() -> Vec<(&'static str, Result<(), String>)> {
    vec![
        ("softmax normalisation", run(softmax_matrix(), softmax_rows_normalised)),
        ("argmax shift invariance", run(shifted_scores(), argmax_shift_invariant)),
        ("empty entity max", run(seeds(), empty_max_rule)),
        ("gated update bounded, gate in (0,1)", run(seeds(), gated_update_bounded)),
        ("locality after K hops", run(seeds(), locality)),
        ("encoder equivariance", run(seeds(), encoder_equivariant)),
        ("graph equivariance", run(seeds(), graph_equivariant)),
        ("gnn equivariance", run(seeds(), gnn_equivariant)),
        ("scoring equivariance", run(seeds(), scoring_equivariant)),
        ("ensemble tie-break", run(votes(), ensemble_tie_break)),
    ]
}

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::param::{ParamId, ParamStore};
use super::tape::{Tape, Var};
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct GradCheckOptions {
    pub epsilon: f64,
    /// Check at most this many coordinates, sampled uniformly (never fewer
    /// than 200 unless the model has fewer). `None` checks every coordinate.
    pub max_coordinates: Option<usize>,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            epsilon: 1e-5,
            max_coordinates: None,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub worst_parameter: String,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub coordinates_checked: usize,
}

/// Compares tape gradients of a scalar function with central differences.
///
/// Relative error per coordinate is `|a - n| / max(|a|, |n|, 1e-8)`.
pub fn grad_check<F>(store: &mut ParamStore, f: F, opts: &GradCheckOptions) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape) -> Result<Var>,
{
    if !(1e-7..=1e-3).contains(&opts.epsilon) {
        return Err(Error::Invalid(format!(
            "grad_check epsilon {} outside [1e-7, 1e-3]",
            opts.epsilon
        )));
    }
    let analytic = {
        let mut tape = Tape::new(store);
        let out = f(&mut tape)?;
        let v = tape.value(out).get(0, 0);
        if !v.is_finite() {
            return Err(Error::NonFinite("grad_check output at the unperturbed point".into()));
        }
        tape.backward(out)?
    };

    let mut coords: Vec<(ParamId, usize)> = store
        .ids()
        .flat_map(|id| (0..store.get(id).tensor.len()).map(move |k| (id, k)))
        .collect();
    if let Some(limit) = opts.max_coordinates {
        let limit = limit.max(200);
        if coords.len() > limit {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            let mut picked: Vec<usize> = sample(&mut rng, coords.len(), limit).into_vec();
            picked.sort_unstable();
            coords = picked.into_iter().map(|i| coords[i]).collect();
        }
    }

    let eval = |store: &ParamStore| -> Result<f64> {
        let mut tape = Tape::new(store);
        let out = f(&mut tape)?;
        Ok(tape.value(out).get(0, 0))
    };

    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst_parameter: String::new(),
        worst_index: 0,
        analytic: 0.0,
        numeric: 0.0,
        coordinates_checked: coords.len(),
    };
    for (id, k) in coords {
        let original = store.get(id).tensor.data()[k];
        store.get_mut(id).tensor.data_mut()[k] = original + opts.epsilon;
        let plus = eval(store);
        store.get_mut(id).tensor.data_mut()[k] = original - opts.epsilon;
        let minus = eval(store);
        store.get_mut(id).tensor.data_mut()[k] = original;
        let (plus, minus) = (plus?, minus?);
        let name = &store.get(id).name;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::NonFinite(format!("{name}[{k}] under perturbation")));
        }
        let numeric = (plus - minus) / (2.0 * opts.epsilon);
        let a = analytic.get(id).map_or(0.0, |g| g.data()[k]);
        if !a.is_finite() {
            return Err(Error::NonFinite(format!("analytic gradient of {name}[{k}]")));
        }
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
        if rel > report.max_relative_error {
            report.max_relative_error = rel;
            report.worst_parameter = name.clone();
            report.worst_index = k;
            report.analytic = a;
            report.numeric = numeric;
        }
    }
    Ok(report)
}

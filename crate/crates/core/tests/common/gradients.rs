use hde::model::HdeModel;
use hde::numerics::{grad_check, GradCheckOptions, GradCheckReport};

use super::fixtures::{prepared, provider, tiny_config, toy_sample};

/// Finite-difference check of the loss through encoding, two message-passing
/// layers and scoring on the toy sample, over every parameter coordinate.
///
/// The loss is O(1), so at a step of 1e-5 rounding alone puts about 1e-11 on
/// each difference quotient, which is too coarse for coordinates whose
/// gradient sits below the 1e-8 floor. 3e-4 keeps both rounding and
/// truncation well under it.
pub fn full_pipeline() -> GradCheckReport {
    let mut cfg = tiny_config();
    cfg.layers = 2;
    let mut model = HdeModel::new(&cfg).unwrap();
    let input = model.prepare(&prepared(toy_sample()), &provider(&cfg)).unwrap();
    assert_eq!(input.num_documents, 2);
    assert_eq!(input.num_candidates, 3);
    let answer = input.answer.unwrap();
    let mut store = std::mem::take(&mut model.store);
    grad_check(
        &mut store,
        |tape| {
            let s = model.forward(tape, &input)?;
            tape.cross_entropy(s.total, answer)
        },
        &GradCheckOptions {
            epsilon: 3e-4,
            ..GradCheckOptions::default()
        },
    )
    .unwrap()
}

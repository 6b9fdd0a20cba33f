mod common;

use tabstruct::losses::{LossKind, OverlapForm};

use common::{gradient_check, MAX_REL_ERR};

fn check(kind: LossKind, form: OverlapForm) {
    let (err, nonzero) = gradient_check(kind, form);
    assert!(err <= MAX_REL_ERR, "{kind:?}: relative error {err:e}");
    assert!(nonzero >= 40, "{kind:?}: only {nonzero} of 50 configurations exercise the loss");
}

#[test]
fn alignment_gradient() {
    check(LossKind::Alignment, OverlapForm::Hinged);
}

#[test]
fn continuity_gradient() {
    check(LossKind::Continuity, OverlapForm::Hinged);
}

#[test]
fn overlap_x_gradient() {
    check(LossKind::OverlapX, OverlapForm::Hinged);
}

#[test]
fn overlap_y_gradient() {
    check(LossKind::OverlapY, OverlapForm::Hinged);
}

#[test]
fn literal_overlap_gradients() {
    check(LossKind::OverlapX, OverlapForm::Literal);
    check(LossKind::OverlapY, OverlapForm::Literal);
}

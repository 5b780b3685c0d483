//! End-to-end finite-difference checks: every head's training loss (and
//! the KL-augmented mutual loss) against central differences over sampled
//! parameter coordinates, at 64-bit. The machinery lives in
//! `common::fd`; see there for the kink-screening rationale.

mod common;

use common::fd::{check_model, check_mutual_l1};
use vocablab_core::models::{CntxKind, PredKind};

#[test]
fn ctc_loss_full_model_gradients() {
    check_model(PredKind::Ctc, CntxKind::None, 51);
}

#[test]
fn ctc_blstm_loss_full_model_gradients() {
    check_model(PredKind::Ctc, CntxKind::Blstm, 52);
}

#[test]
fn attention_loss_full_model_gradients() {
    check_model(PredKind::Attn, CntxKind::None, 53);
}

#[test]
fn attention_ppm_loss_full_model_gradients() {
    check_model(PredKind::Attn, CntxKind::Ppm, 54);
}

#[test]
fn seg_loss_full_model_gradients() {
    check_model(PredKind::Seg, CntxKind::None, 55);
}

#[test]
fn seg_ppm_loss_full_model_gradients() {
    check_model(PredKind::Seg, CntxKind::Ppm, 56);
}

#[test]
fn mutual_l1_gradients_with_kl_term() {
    let stats = check_mutual_l1(57);
    println!(
        "mutual-l1: {} coords checked, {} skipped, worst rel err {:.2e}",
        stats.checked, stats.skipped, stats.worst
    );
}

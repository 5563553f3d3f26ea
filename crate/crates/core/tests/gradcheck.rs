//! Central finite-difference checks of the hand-written dense and GRU gradients.

mod common;

use atmarl::nn::Activation;
use common::{dense_error, gru_error};

const TOL: f64 = 1e-4;

#[test]
fn dense_gradients_match_finite_differences() {
    for seed in 0..10u64 {
        // Relu kinks make finite differences unreliable, so check the smooth activations.
        for act in [Activation::Tanh, Activation::Identity] {
            let err = dense_error(seed, act);
            assert!(err < TOL, "seed {seed} {act:?}: {err}");
        }
    }
}

#[test]
fn relu_gradient_away_from_kink() {
    let err = dense_error(77, Activation::Relu);
    assert!(err < TOL, "{err}");
}

#[test]
fn gru_single_step_matches_finite_differences() {
    for seed in 0..10 {
        let err = gru_error(100 + seed, 1);
        assert!(err < TOL, "seed {seed}: {err}");
    }
}

#[test]
fn gru_bptt_length_five_matches_finite_differences() {
    for seed in 0..10 {
        let err = gru_error(200 + seed, 5);
        assert!(err < TOL, "seed {seed}: {err}");
    }
}

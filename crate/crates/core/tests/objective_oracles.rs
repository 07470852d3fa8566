mod common;

use ndarray::Array2;
use rand::Rng;
use sisvae::diffcore::Stencil;
use sisvae::diffcore::Tape;
use sisvae::nets::{unroll, unroll_values, DiagGaussianSeq, ModelConfig, ModelParams, UnrollMode};
use sisvae::objective::*;

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

fn seq(r: &mut impl Rng, w: usize, d: usize) -> DiagGaussianSeq {
    let mu = Array2::from_shape_simple_fn((w, d), || r.random_range(-2.0..2.0));
    let sd = Array2::from_shape_simple_fn((w, d), || r.random_range(0.2..2.0));
    DiagGaussianSeq::new(mu, sd).unwrap()
}

#[test]
fn kl_matches_quadrature_on_hand_cases() {
    let a = kl_diag_gauss(&[1.0], &[1.0], &[0.0], &[1.0]).unwrap();
    assert!(close(a, 0.5, 1e-15));
    assert!(close(a, common::kl_quadrature(1.0, 1.0, 0.0, 1.0), 1e-9));
    let b = kl_diag_gauss(&[0.0], &[2.0], &[0.0], &[1.0]).unwrap();
    assert!(close(b, 0.5f64.ln() + 2.0 - 0.5, 1e-15));
    assert!(close(b, 0.806_852_8, 1e-7));
    assert!(close(b, common::kl_quadrature(0.0, 2.0, 0.0, 1.0), 1e-9));
}

#[test]
fn loglik_is_additive_over_dimensions() {
    let two = gauss_loglik(&[0.3, -1.0], &[0.0, 0.5], &[1.0, 2.0]).unwrap();
    let a = gauss_loglik(&[0.3], &[0.0], &[1.0]).unwrap();
    let b = gauss_loglik(&[-1.0], &[0.5], &[2.0]).unwrap();
    assert_eq!(two, a + b);
}

#[test]
fn smoothness_step_between_unit_gaussians() {
    let recon = DiagGaussianSeq::new(
        Array2::from_shape_vec((2, 1), vec![0.0, 1.0]).unwrap(),
        Array2::from_elem((2, 1), 1.0),
    )
    .unwrap();
    assert!(close(
        smoothness_loss(&recon),
        common::kl_quadrature(0.0, 1.0, 1.0, 1.0),
        1e-9
    ));
    let mut r = common::rng(3);
    for _ in 0..100 {
        assert!(smoothness_loss(&seq(&mut r, 6, 3)) >= 0.0);
    }
}

/// Loss of a tiny model recomputed scalar by scalar from the distribution
/// parameters.
#[test]
fn loss_matches_hand_recomputation() {
    let mut r = common::rng(11);
    let (m, w, z) = (2, 3, 2);
    let post = seq(&mut r, w, z);
    let prior = seq(&mut r, w, z);
    let recon = seq(&mut r, w, m);
    let x = common::normal_matrix(&mut r, m, w);
    let lambda = 0.7;
    let got = sisvae_loss(&post, &prior, &recon, x.view(), lambda, Regularizer::Kl).unwrap();

    let mut kl = 0.0;
    for t in 0..w {
        for d in 0..z {
            let (mq, sq) = (post.means()[[t, d]], post.stddevs()[[t, d]]);
            let (mp, sp) = (prior.means()[[t, d]], prior.stddevs()[[t, d]]);
            kl += (sp / sq).ln() + (sq * sq + (mq - mp).powi(2)) / (2.0 * sp * sp) - 0.5;
        }
    }
    let mut nll = 0.0;
    for t in 0..w {
        for i in 0..m {
            let (mu, s) = (recon.means()[[t, i]], recon.stddevs()[[t, i]]);
            nll += 0.5 * (2.0 * std::f64::consts::PI).ln()
                + s.ln()
                + (x[[i, t]] - mu).powi(2) / (2.0 * s * s);
        }
    }
    let mut smooth = 0.0;
    for t in 1..w {
        for i in 0..m {
            let (m0, s0) = (recon.means()[[t - 1, i]], recon.stddevs()[[t - 1, i]]);
            let (m1, s1) = (recon.means()[[t, i]], recon.stddevs()[[t, i]]);
            smooth += (s1 / s0).ln() + (s0 * s0 + (m0 - m1).powi(2)) / (2.0 * s1 * s1) - 0.5;
        }
    }
    assert!(close(got.inference_kl, kl, 1e-10));
    assert!(close(got.neg_loglik, nll, 1e-10));
    assert!(close(got.smooth, smooth, 1e-10));
    assert!(close(got.total, kl + nll + lambda * smooth, 1e-10));
    assert!(got.inference_kl >= 0.0 && got.smooth >= 0.0);
}

#[test]
fn lambda_zero_and_no_regularizer_agree() {
    let mut r = common::rng(5);
    let post = seq(&mut r, 4, 2);
    let prior = seq(&mut r, 4, 2);
    let recon = seq(&mut r, 4, 3);
    let x = common::normal_matrix(&mut r, 3, 4);
    let zero = sisvae_loss(&post, &prior, &recon, x.view(), 0.0, Regularizer::Kl).unwrap();
    let none = sisvae_loss(&post, &prior, &recon, x.view(), 0.5, Regularizer::None).unwrap();
    assert_eq!(zero.total, zero.inference_kl + zero.neg_loglik);
    assert_eq!(zero.total, none.total);
}

#[test]
fn graph_loss_equals_plain_loss() {
    let config = ModelConfig::new(3, 6, 2);
    let params = ModelParams::init(config, 4).unwrap();
    let mut r = common::rng(8);
    let x = common::normal_matrix(&mut r, 3, 7);
    let noise = common::normal_matrix(&mut r, 7, 2);
    for reg in [Regularizer::Kl, Regularizer::Mean, Regularizer::None] {
        let tape = Tape::new();
        let bound = params.bind(&tape, true);
        let trace = unroll(&bound, x.view(), noise.view(), UnrollMode::Train).unwrap();
        let (root, graph) = sisvae_loss_graph(&trace, x.view(), 0.5, reg).unwrap();
        let out = unroll_values(&params, x.view(), noise.view(), UnrollMode::Train).unwrap();
        let plain =
            sisvae_loss(&out.posterior, &out.prior, &out.recon, x.view(), 0.5, reg).unwrap();
        assert!(close(root.item(), plain.total, 1e-10), "{reg}");
        assert!(close(graph.total, plain.total, 1e-10));
        assert!(close(graph.smooth, plain.smooth, 1e-10));
    }
}

#[test]
fn full_loss_gradient_matches_finite_differences() {
    let config = ModelConfig {
        x_dim: 2,
        h_dim: 5,
        z_dim: 2,
        feat_dim: 4,
        sigma_floor: 1e-3,
    };
    for (seed, reg) in [
        (1, Regularizer::Kl),
        (2, Regularizer::Mean),
        (4, Regularizer::None),
    ] {
        let err =
            common::full_loss_gradcheck(config, 4, seed, 0.5, reg, 3e-3, Stencil::CentralFourth);
        assert!(err < 1e-5, "{reg}: {err}");
    }
}

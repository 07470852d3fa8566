mod common;

use rand::Rng;
use sisvae::diffcore::{finite_difference_pairs, grad_check, Stencil, Tape, Tensor, TensorError};
use sisvae::nets::*;

fn tensor_err(e: NetsError) -> TensorError {
    match e {
        NetsError::Tensor(t) => t,
        other => panic!("{other}"),
    }
}

fn random_config(r: &mut impl Rng) -> ModelConfig {
    ModelConfig {
        x_dim: r.random_range(1..=4),
        h_dim: r.random_range(1..=8),
        z_dim: r.random_range(1..=4),
        feat_dim: r.random_range(1..=8),
        sigma_floor: 1e-3,
    }
}

#[test]
fn gru_step_matches_reference_loop() {
    let mut r = common::rng(1);
    for case in 0..100u64 {
        let c = random_config(&mut r);
        let params = ModelParams::init(c, case).unwrap();
        let y: Vec<f64> = (0..c.feat_dim).map(|_| r.random_range(-1.0..1.0)).collect();
        let h: Vec<f64> = (0..c.h_dim).map(|_| r.random_range(-1.0..1.0)).collect();
        let tape = Tape::new();
        let bound = params.bind(&tape, false);
        let got = gru_step(
            &bound,
            tape.constant(Tensor::vector(y.clone())),
            tape.constant(Tensor::vector(h.clone())),
        )
        .unwrap()
        .value();
        let want = common::gru_reference(&params, &y, &h);
        for (a, b) in got.data().iter().zip(&want) {
            assert!((a - b).abs() <= 1e-12, "case {case}: {a} vs {b}");
        }
    }
}

#[test]
fn gru_step_gradient_in_inputs() {
    let c = ModelConfig::new(2, 5, 3);
    let params = ModelParams::init(c, 9).unwrap();
    let mut r = common::rng(2);
    let point: Vec<f64> = (0..c.feat_dim + c.h_dim)
        .map(|_| r.random_range(-1.0..1.0))
        .collect();
    let err = grad_check(
        |t, v| {
            let p = params.bind(t, false);
            let y = v.slice(0, c.feat_dim)?;
            let h = v.slice(c.feat_dim, c.h_dim)?;
            Ok(gru_step(&p, y, h).map_err(tensor_err)?.sum())
        },
        &point,
        1e-5,
    )
    .unwrap();
    assert!(err < 1e-6, "{err}");
}

/// Scalar summary of an unroll that touches every output stream.
fn reduce_values(out: &UnrollOutput) -> f64 {
    let w = out.recon.len();
    let mut s = 0.0;
    for t in 0..w {
        let k = (t + 1) as f64;
        s += k * out.recon.means().row(t).sum() + out.recon.stddevs().row(t).mapv(|v| v * v).sum();
        s += out.prior.means().row(t).sum() - 0.5 * out.posterior.stddevs().row(t).sum();
        s += out.z_path.row(t).sum() + out.h_path.row(t).mapv(f64::tanh).sum();
    }
    s
}

#[test]
fn unroll_gradient_matches_finite_differences() {
    let mut r = common::rng(4);
    for case in 0..4u64 {
        let c = random_config(&mut r);
        let w = r.random_range(1..=6);
        let params = ModelParams::init(c, 100 + case).unwrap();
        let x = common::normal_matrix(&mut r, c.x_dim, w);
        let noise = common::normal_matrix(&mut r, w, c.z_dim);

        let tape = Tape::new();
        let bound = params.bind(&tape, true);
        let trace = unroll(&bound, x.view(), noise.view(), UnrollMode::Train).unwrap();
        let mut acc = tape.scalar(0.0);
        for (t, s) in trace.steps.iter().enumerate() {
            let k = (t + 1) as f64;
            let term = s
                .mu_x
                .sum()
                .scale(k)
                .add(s.sigma_x.square().sum())
                .unwrap()
                .add(s.mu_prior.sum())
                .unwrap()
                .sub(s.sigma_z.sum().scale(0.5))
                .unwrap()
                .add(s.z.sum())
                .unwrap()
                .add(s.h.tanh().sum())
                .unwrap();
            acc = acc.add(term).unwrap();
        }
        let grads = tape.backward(acc).unwrap();
        let analytic: Vec<f64> = bound
            .vars()
            .iter()
            .flat_map(|v| grads.get_or_zeros(*v).into_data())
            .collect();

        let mut probe = params.clone();
        let pairs = finite_difference_pairs(
            |flat: &[f64]| {
                probe.set_flat(flat);
                reduce_values(
                    &unroll_values(&probe, x.view(), noise.view(), UnrollMode::Train).unwrap(),
                )
            },
            &analytic,
            &params.flatten(),
            3e-3,
            Stencil::CentralFourth,
        )
        .unwrap();
        for (i, (a, n)) in pairs.into_iter().enumerate() {
            // Relative 1e-5 with an absolute floor for roundoff-dominated
            // tiny partials.
            assert!(
                (a - n).abs() <= 1e-5 * a.abs().max(n.abs()) + 1e-9,
                "case {case} coord {i}: {a} vs {n}"
            );
        }
    }
}

#[test]
fn every_head_respects_sigma_floor_on_extreme_inputs() {
    let c = ModelConfig::new(3, 6, 2);
    let mut params = ModelParams::init(c, 3).unwrap();
    // Push every sigma pre-activation strongly negative.
    for id in [ParamId::EncSigmaB, ParamId::PriorSigmaB, ParamId::DecSigmaB] {
        params
            .get_mut(id)
            .data_mut()
            .iter_mut()
            .for_each(|v| *v = -800.0);
    }
    let mut r = common::rng(6);
    let x = common::normal_matrix(&mut r, 3, 10).mapv(|v| v * 1e3);
    let noise = common::normal_matrix(&mut r, 10, 2);
    let out = unroll_values(&params, x.view(), noise.view(), UnrollMode::Score).unwrap();
    for seq in [&out.posterior, &out.prior, &out.recon] {
        assert!(seq.stddevs().iter().all(|&s| s >= c.sigma_floor));
        assert!(seq.means().iter().all(|m| m.is_finite()));
    }
}

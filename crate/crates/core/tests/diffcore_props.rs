use proptest::prelude::*;
use sisvae::diffcore::{grad_check_pairs, Stencil, Tape, Tensor};

/// Worst ratio of `|analytic - numeric|` to `1e-6 * max(|a|, |n|) + 1e-9`.
/// The absolute floor covers coordinates whose gradient is so small that
/// central-difference roundoff (about 1e-11 here) dominates.
fn mixed(pairs: Vec<(f64, f64)>) -> f64 {
    pairs
        .iter()
        .map(|&(a, n)| (a - n).abs() / (1e-6 * a.abs().max(n.abs()) + 1e-9))
        .fold(0.0, f64::max)
}

fn vec_strategy(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-2.0f64..2.0, n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn elementwise_ops_match_finite_differences(x in vec_strategy(6)) {
        let e = mixed(grad_check_pairs(|_, v| Ok(v.tanh().sum()), &x, 1e-5, Stencil::Central).unwrap());
        prop_assert!(e <= 1.0, "tanh {e}");
        let e = mixed(grad_check_pairs(|_, v| Ok(v.sigmoid().sum()), &x, 1e-5, Stencil::Central).unwrap());
        prop_assert!(e <= 1.0, "sigmoid {e}");
        let e = mixed(grad_check_pairs(|_, v| Ok(v.softplus().sum()), &x, 1e-5, Stencil::Central).unwrap());
        prop_assert!(e <= 1.0, "softplus {e}");
        let e = mixed(grad_check_pairs(|_, v| Ok(v.exp().sum()), &x, 1e-5, Stencil::Central).unwrap());
        prop_assert!(e <= 1.0, "exp {e}");
        let e = mixed(grad_check_pairs(|_, v| Ok(v.square().add_scalar(1.0).log()?.sum()), &x, 1e-5, Stencil::Central).unwrap());
        prop_assert!(e <= 1.0, "log {e}");
        let e = mixed(grad_check_pairs(|_, v| Ok(v.neg().scale(3.0).mean()), &x, 1e-5, Stencil::Central).unwrap());
        prop_assert!(e <= 1.0, "neg/scale/mean {e}");
    }

    #[test]
    fn binary_ops_match_finite_differences(x in vec_strategy(6)) {
        // Split the probe vector into two operands.
        let e = mixed(grad_check_pairs(|_, v| {
            let (a, b) = (v.slice(0, 3)?, v.slice(3, 3)?);
            Ok(a.mul(b)?.add(a.sub(b)?)?.sum())
        }, &x, 1e-5, Stencil::Central).unwrap());
        prop_assert!(e <= 1.0, "mul/add/sub {e}");
        let e = mixed(grad_check_pairs(|_, v| {
            let (a, b) = (v.slice(0, 3)?, v.slice(3, 3)?);
            Ok(a.div(b.square().add_scalar(0.5))?.sum())
        }, &x, 1e-5, Stencil::Central).unwrap());
        prop_assert!(e <= 1.0, "div {e}");
        let e = mixed(grad_check_pairs(|_, v| {
            let m = v.reshape(&[2, 3])?;
            let u = v.slice(0, 3)?;
            Ok(m.matmul(u)?.tanh().sum())
        }, &x, 1e-5, Stencil::Central).unwrap());
        prop_assert!(e <= 1.0, "matmul {e}");
        let e = mixed(grad_check_pairs(|_, v| {
            let m = v.reshape(&[2, 3])?;
            let row = v.slice(3, 3)?;
            Ok(m.mul(row)?.sum())
        }, &x, 1e-5, Stencil::Central).unwrap());
        prop_assert!(e <= 1.0, "row broadcast {e}");
        let e = mixed(grad_check_pairs(|t, v| {
            let c = t.scalar(0.7);
            Ok(v.mul(c)?.concat(v.slice(1, 2)?)?.square().sum())
        }, &x, 1e-5, Stencil::Central).unwrap());
        prop_assert!(e <= 1.0, "scalar/concat {e}");
    }

    #[test]
    fn replay_is_bit_identical(x in vec_strategy(5)) {
        let run = || {
            let tape = Tape::new();
            let v = tape.param(Tensor::vector(x.clone()));
            let y = v.tanh().mul(v.softplus()).unwrap().sum();
            tape.backward(y).unwrap().get_or_zeros(v).into_data()
        };
        let (a, b) = (run(), run());
        prop_assert_eq!(
            a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn forward_values_stay_finite(x in prop::collection::vec(-700.0f64..700.0, 4)) {
        let tape = Tape::new();
        let v = tape.constant(Tensor::vector(x));
        for out in [v.softplus(), v.sigmoid(), v.tanh()] {
            prop_assert!(out.value().is_finite());
        }
    }
}

#[test]
fn fan_out_sum_has_derivative_two() {
    let tape = Tape::new();
    let x = tape.param(Tensor::scalar(1.3));
    let y = x.add(x).unwrap();
    assert_eq!(tape.backward(y).unwrap().get(x).unwrap().item(), Some(2.0));
}

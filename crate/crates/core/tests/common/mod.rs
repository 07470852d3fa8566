//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use sisvae::diffcore::{finite_difference_error, Stencil};
use sisvae::nets::{unroll_values, ModelConfig, ModelParams, ParamId, UnrollMode};
use sisvae::objective::{sisvae_loss, Regularizer};
use sisvae::training::chunk_loss_and_grad;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal_matrix(r: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || r.sample(StandardNormal))
}

fn matvec(w: &[f64], cols: usize, x: &[f64]) -> Vec<f64> {
    w.chunks(cols)
        .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
        .collect()
}

fn sig(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

/// GRU transition written out element by element:
/// r = sig(W_r y + U_r h + b_r), s = sig(W_s y + U_s h + b_s),
/// c = tanh(W_h y + r * (U_h h) + b_h), h' = (1 - s) * c + s * h.
pub fn gru_reference(p: &ModelParams, y: &[f64], h: &[f64]) -> Vec<f64> {
    let f = p.config().feat_dim;
    let hd = p.config().h_dim;
    let d = |id: ParamId| p.get(id).data().to_vec();
    let wr = matvec(&d(ParamId::GruWr), f, y);
    let ur = matvec(&d(ParamId::GruUr), hd, h);
    let ws = matvec(&d(ParamId::GruWs), f, y);
    let us = matvec(&d(ParamId::GruUs), hd, h);
    let wh = matvec(&d(ParamId::GruWh), f, y);
    let uh = matvec(&d(ParamId::GruUh), hd, h);
    let (br, bs, bh) = (d(ParamId::GruBr), d(ParamId::GruBs), d(ParamId::GruBh));
    (0..hd)
        .map(|i| {
            let r = sig(wr[i] + ur[i] + br[i]);
            let s = sig(ws[i] + us[i] + bs[i]);
            let c = (wh[i] + r * uh[i] + bh[i]).tanh();
            (1.0 - s) * c + s * h[i]
        })
        .collect()
}

fn log_normal_pdf(x: f64, mu: f64, s: f64) -> f64 {
    let z = (x - mu) / s;
    -0.5 * z * z - s.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
}

#[allow(clippy::too_many_arguments)]
fn simpson(
    f: &impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        left + right + delta / 15.0
    } else {
        simpson(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
            + simpson(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }
}

/// Adaptive Simpson quadrature on `[a, b]`.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson(&f, a, b, fa, fm, fb, whole, tol, 50)
}

/// `∫ q(x) ln(q(x)/p(x)) dx` for univariate Gaussians, by quadrature over
/// `mu_q ± 14 s_q`.
pub fn kl_quadrature(mu_q: f64, s_q: f64, mu_p: f64, s_p: f64) -> f64 {
    let f = |x: f64| {
        let lq = log_normal_pdf(x, mu_q, s_q);
        lq.exp() * (lq - log_normal_pdf(x, mu_p, s_p))
    };
    integrate(f, mu_q - 14.0 * s_q, mu_q + 14.0 * s_q, 1e-12)
}

/// Random scored points with heavy ties and both classes present.
pub fn random_labeled(r: &mut ChaCha8Rng, n_max: usize) -> (Vec<f64>, Vec<u8>) {
    loop {
        let n = r.random_range(2..=n_max);
        let levels = r.random_range(1..=n.max(2));
        let scores: Vec<f64> = (0..n)
            .map(|_| r.random_range(0..levels) as f64 * 0.25 - 1.0)
            .collect();
        let p = r.random_range(0.05..0.6);
        let labels: Vec<u8> = (0..n).map(|_| r.random_bool(p) as u8).collect();
        let pos = labels.iter().filter(|&&l| l == 1).count();
        if pos > 0 && pos < n {
            return (scores, labels);
        }
    }
}

/// AUROC over all positive/negative pairs, ties counting one half.
pub fn auroc_pairwise(scores: &[f64], labels: &[u8]) -> f64 {
    let mut num = 0.0;
    let mut pairs = 0.0;
    for i in 0..scores.len() {
        for j in 0..scores.len() {
            if labels[i] == 1 && labels[j] == 0 {
                pairs += 1.0;
                if scores[i] > scores[j] {
                    num += 1.0;
                } else if scores[i] == scores[j] {
                    num += 0.5;
                }
            }
        }
    }
    num / pairs
}

/// Average precision as the mean over positives of the precision obtained
/// when flagging everything scored at least as high, and the best F1 over
/// every candidate cut, recounted from scratch for each cut.
pub fn pr_bruteforce(scores: &[f64], labels: &[u8]) -> (f64, f64) {
    let pos = labels.iter().filter(|&&l| l == 1).count() as f64;
    let precision_at = |v: f64| {
        let flagged: Vec<usize> = (0..scores.len()).filter(|&i| scores[i] >= v).collect();
        let tp = flagged.iter().filter(|&&i| labels[i] == 1).count() as f64;
        (tp, flagged.len() as f64)
    };
    let ap = (0..scores.len())
        .filter(|&i| labels[i] == 1)
        .map(|i| {
            let (tp, k) = precision_at(scores[i]);
            tp / k
        })
        .sum::<f64>()
        / pos;
    let mut best = 0.0f64;
    for &v in scores {
        let (tp, k) = precision_at(v);
        if tp > 0.0 {
            let (p, r) = (tp / k, tp / pos);
            best = best.max(2.0 * p * r / (p + r));
        }
    }
    (ap, best)
}

/// Sort by (score desc, index asc) and count positives in the head.
pub fn precision_at_k_oracle(scores: &[f64], labels: &[u8], k: usize) -> f64 {
    let mut v: Vec<(f64, usize)> = scores.iter().copied().zip(0..).collect();
    v.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    v[..k].iter().filter(|(_, i)| labels[*i] == 1).count() as f64 / k as f64
}

/// Max relative error between the full chunk-loss gradient of a seeded model
/// and finite differences over every parameter scalar.
pub fn full_loss_gradcheck(
    config: ModelConfig,
    w: usize,
    seed: u64,
    lambda: f64,
    regularizer: Regularizer,
    step: f64,
    stencil: Stencil,
) -> f64 {
    let params = ModelParams::init(config, seed).unwrap();
    let mut r = rng(seed ^ 0xFACE);
    let x = normal_matrix(&mut r, config.x_dim, w);
    let noise = normal_matrix(&mut r, w, config.z_dim);
    let (_, grads) =
        chunk_loss_and_grad(&params, x.view(), noise.view(), lambda, regularizer).unwrap();
    let analytic: Vec<f64> = grads
        .iter()
        .flat_map(|g| g.data().iter().copied())
        .collect();
    let point = params.flatten();
    let mut probe_params = params.clone();
    let value = |flat: &[f64]| {
        probe_params.set_flat(flat);
        // Plain-value path: no tape gradients involved.
        let out = unroll_values(&probe_params, x.view(), noise.view(), UnrollMode::Train).unwrap();
        match sisvae_loss(
            &out.posterior,
            &out.prior,
            &out.recon,
            x.view(),
            lambda,
            regularizer,
        ) {
            Ok(loss) => loss.total,
            Err(_) => f64::NAN,
        }
    };
    finite_difference_error(value, &analytic, &point, step, stencil).unwrap()
}

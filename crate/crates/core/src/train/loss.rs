use rand::Rng;

use super::windows::WindowPair;
use crate::model::{ModelParams, Noise};
use crate::tensor::{Bound, Result, Tape, Var};

/// Frobenius norm of `recon - target`, where `recon` holds one row per step.
pub fn window_error(tape: &mut Tape, recon: &[Var], target: &[f64]) -> Result<Var> {
    let flat = tape.concat(recon)?;
    let target = tape.vector(target)?;
    let diff = tape.sub(flat, target)?;
    tape.norm(diff)
}

/// Per-pair training objective with a fixed set of noise draws:
///
/// `‖W^h − Ŵ^h‖ + ‖W − Ŵ‖ + (1/K) Σ_k ‖W̃_k − W‖`
///
/// The autoencoder keeps only the first two terms; variant `n` has a single
/// noise-free third term.
pub fn pair_loss(
    model: &ModelParams,
    tape: &mut Tape,
    p: &Bound,
    pair: &WindowPair<'_>,
    noise: &[Noise],
) -> Result<Var> {
    let pass = model.forward(tape, p, pair.history, pair.future, noise)?;
    let mut total = window_error(tape, &pass.recon_history, pair.history)?;
    let fut = window_error(tape, &pass.recon_future, pair.future)?;
    total = tape.add(total, fut)?;
    if !pass.perturbed.is_empty() {
        let k = pass.perturbed.len();
        let mut terms = Vec::with_capacity(k);
        for w in &pass.perturbed {
            terms.push(window_error(tape, w, pair.future)?);
        }
        let stacked = tape.concat(&terms)?;
        let sum = tape.sum(stacked)?;
        let mean = tape.scale(sum, 1.0 / k as f64)?;
        total = tape.add(total, mean)?;
    }
    Ok(total)
}

/// Draws the `K` noise matrices a pair's loss needs. Deterministic variants
/// get none and consume no randomness.
pub fn draw_noise(model: &ModelParams, k: usize, rng: &mut impl Rng) -> Vec<Noise> {
    let h = &model.hyper;
    if !h.variant.is_randomized() {
        return Vec::new();
    }
    (0..k)
        .map(|_| Noise::sample(rng, h.future_len, h.latent_dim, h.sigma2))
        .collect()
}

/// Monte-Carlo loss value of one pair.
pub fn loss_t(model: &ModelParams, pair: &WindowPair<'_>, k: usize, rng: &mut impl Rng) -> Result<f64> {
    let noise = draw_noise(model, k, rng);
    let mut tape = Tape::new();
    let p = tape.bind(&model.set);
    let v = pair_loss(model, &mut tape, &p, pair, &noise)?;
    Ok(tape.value(v)[0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ModelHyper, Variant};
    use crate::tensor::finite_diff_check;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn model(variant: Variant, seed: u64) -> ModelParams {
        ModelParams::init(
            ModelHyper {
                input_dim: 3,
                latent_dim: 2,
                hidden_dim: 2,
                history_len: 4,
                future_len: 2,
                variant,
                sigma2: 1.0,
            },
            seed,
        )
        .unwrap()
    }

    fn data() -> (Vec<f64>, Vec<f64>) {
        let h = (0..12).map(|i| (i as f64 * 0.41).sin()).collect();
        let f = (0..6).map(|i| (i as f64 * 0.23).cos()).collect();
        (h, f)
    }

    #[test]
    fn autoencoder_loss_is_two_reconstruction_terms() {
        let m = model(Variant::Ae, 1);
        let (h, f) = data();
        let pair = WindowPair {
            anchor: 4,
            history: &h,
            future: &f,
        };
        let mut tape = Tape::new();
        let p = tape.bind(&m.set);
        let loss = pair_loss(&m, &mut tape, &p, &pair, &[]).unwrap();
        let pass = m.forward(&mut tape, &p, &h, &f, &[]).unwrap();
        let norm = |t: &Tape, s: &[Var], x: &[f64]| {
            let r: Vec<f64> = s.iter().flat_map(|v| t.value(*v).to_vec()).collect();
            r.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
        };
        let expect = norm(&tape, &pass.recon_history, &h) + norm(&tape, &pass.recon_future, &f);
        assert!((tape.value(loss)[0] - expect).abs() < 1e-12);
    }

    #[test]
    fn loss_is_non_negative_for_every_variant() {
        let (h, f) = data();
        let pair = WindowPair {
            anchor: 4,
            history: &h,
            future: &f,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for v in Variant::ALL {
            for seed in 0..5 {
                assert!(loss_t(&model(v, seed), &pair, 3, &mut rng).unwrap() >= 0.0);
            }
        }
    }

    #[test]
    fn zero_noise_third_term_equals_future_term() {
        let m = model(Variant::S, 2);
        let (h, f) = data();
        let pair = WindowPair {
            anchor: 4,
            history: &h,
            future: &f,
        };
        let mut tape = Tape::new();
        let p = tape.bind(&m.set);
        let loss = pair_loss(&m, &mut tape, &p, &pair, &[Noise::zeros(2, 2)]).unwrap();
        let pass = m.forward(&mut tape, &p, &h, &f, &[]).unwrap();
        let a = window_error(&mut tape, &pass.recon_history, &h).unwrap();
        let b = window_error(&mut tape, &pass.recon_future, &f).unwrap();
        let expect = tape.value(a)[0] + 2.0 * tape.value(b)[0];
        assert!((tape.value(loss)[0] - expect).abs() < 1e-12);
    }

    #[test]
    fn larger_k_shrinks_estimator_spread() {
        let m = model(Variant::S, 4);
        let (h, f) = data();
        let pair = WindowPair {
            anchor: 4,
            history: &h,
            future: &f,
        };
        let spread = |k: usize| {
            let mut rng = ChaCha8Rng::seed_from_u64(k as u64);
            let xs: Vec<f64> = (0..60).map(|_| loss_t(&m, &pair, k, &mut rng).unwrap()).collect();
            let mean = xs.iter().sum::<f64>() / xs.len() as f64;
            xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (xs.len() - 1) as f64
        };
        let (v1, v100) = (spread(1), spread(100));
        assert!(v100 < v1 / 10.0, "var K=1 {v1}, K=100 {v100}");
    }

    #[test]
    fn full_loss_gradient_matches_finite_differences() {
        let (h, f) = data();
        let pair = WindowPair {
            anchor: 4,
            history: &h,
            future: &f,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for v in Variant::ALL {
            let mut m = model(v, 5);
            let noise = draw_noise(&m, 2, &mut rng);
            let frozen = m.clone();
            let err = finite_diff_check(&mut m.set, 1e-5, |t, b| pair_loss(&frozen, t, b, &pair, &noise)).unwrap();
            assert!(err < 1e-4, "{v}: {err}");
        }
    }
}

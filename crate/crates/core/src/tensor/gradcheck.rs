use super::{Bound, ParamSet, Result, Tape, TensorError, Var};

/// Gradients smaller than this are compared in absolute terms.
const MAGNITUDE_FLOOR: f64 = 1e-3;

/// Compares tape gradients of `f` against central differences with step `h`.
///
/// `f` builds a scalar on the given tape from the bound parameters and must
/// be deterministic. Returns the worst per-element error
/// `|analytic - numeric| / max(|analytic|, |numeric|, 1e-3)` over all
/// parameters. `params` is restored (values and gradients) on return.
pub fn finite_diff_check<F>(params: &mut ParamSet, h: f64, f: F) -> Result<f64>
where
    F: Fn(&mut Tape, &Bound) -> Result<Var>,
{
    if h.is_nan() || h <= 0.0 {
        return Err(TensorError::Contract(format!("step must be positive, got {h}")));
    }
    let saved_grads = params.grads_flat();
    let had_grads: Vec<bool> = params.iter().map(|(_, t)| t.grad().is_some()).collect();

    params.clear_grads();
    let mut tape = Tape::new();
    let bound = tape.bind(params);
    let root = f(&mut tape, &bound)?;
    tape.backward_into(root, params)?;
    let analytic = params.grads_flat();

    let eval = |p: &ParamSet| -> Result<f64> {
        let mut tape = Tape::new();
        let bound = tape.bind(p);
        let root = f(&mut tape, &bound)?;
        Ok(tape.value(root)[0])
    };

    let mut probe = params.clone();
    let mut worst: f64 = 0.0;
    for id in params.ids() {
        for (i, &a) in analytic[id.index()].iter().enumerate() {
            let orig = params.get(id).data()[i];
            probe.get_mut(id).data_mut()[i] = orig + h;
            let up = eval(&probe)?;
            probe.get_mut(id).data_mut()[i] = orig - h;
            let down = eval(&probe)?;
            probe.get_mut(id).data_mut()[i] = orig;

            let numeric = (up - down) / (2.0 * h);
            let denom = a.abs().max(numeric.abs()).max(MAGNITUDE_FLOOR);
            worst = worst.max((a - numeric).abs() / denom);
        }
    }

    params.clear_grads();
    for ((t, g), had) in params.tensors_mut().zip(saved_grads).zip(had_grads) {
        if had {
            t.accumulate_grad(&g);
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    #[test]
    fn sum_of_squares_passes() {
        let mut p = ParamSet::new();
        let w = p
            .insert("w", Tensor::matrix(2, 2, vec![0.3, -1.2, 2.5, 0.01]).unwrap())
            .unwrap();
        let err = finite_diff_check(&mut p, 1e-5, |t, b| {
            let sq = t.mul(b[w], b[w])?;
            t.sum(sq)
        })
        .unwrap();
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn constant_function_has_zero_error() {
        let mut p = ParamSet::new();
        p.insert("w", Tensor::vector(vec![1.0, 2.0]).unwrap()).unwrap();
        let err = finite_diff_check(&mut p, 1e-5, |t, _| t.constant(Vec::new(), vec![3.0])).unwrap();
        assert_eq!(err, 0.0);
    }

    #[test]
    fn matmul_chain_passes() {
        let mut p = ParamSet::new();
        let a = p
            .insert("a", Tensor::matrix(2, 3, vec![0.5, -0.1, 0.7, 1.1, 0.2, -0.4]).unwrap())
            .unwrap();
        let b = p
            .insert(
                "b",
                Tensor::matrix(3, 2, vec![0.3, 0.9, -0.8, 0.05, 0.6, -1.3]).unwrap(),
            )
            .unwrap();
        let c = p
            .insert("c", Tensor::matrix(2, 2, vec![1.0, -0.5, 0.25, 2.0]).unwrap())
            .unwrap();
        let err = finite_diff_check(&mut p, 1e-5, |t, bd| {
            let ab = t.matmul(bd[a], bd[b])?;
            let abc = t.matmul(ab, bd[c])?;
            let th = t.tanh(abc)?;
            t.sum(th)
        })
        .unwrap();
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn restores_existing_gradients() {
        let mut p = ParamSet::new();
        let w = p.insert("w", Tensor::vector(vec![1.0]).unwrap()).unwrap();
        p.accumulate_grads(&[vec![42.0]]).unwrap();
        finite_diff_check(&mut p, 1e-5, |t, b| t.sum(b[w])).unwrap();
        assert_eq!(p.get(w).grad(), Some(&[42.0][..]));
    }
}

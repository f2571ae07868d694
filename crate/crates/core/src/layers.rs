//! Parameterized building blocks: affine layers, an LSTM cell, and additive
//! (Bahdanau) attention over a latent history.
//!
//! Layers only hold [`ParamId`]s. Their tensors live in the shared
//! [`ParamSet`], and every forward pass reads them through a [`Bound`]
//! produced by [`Tape::bind`].

use rand::Rng;

use crate::tensor::{Bound, ParamId, ParamSet, Result, Tape, Tensor, TensorError, Var};

pub(crate) fn uniform(rng: &mut impl Rng, shape: Vec<usize>, bound: f64) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-bound..=bound)).collect();
    Tensor::new(shape, data).expect("finite uniform draws")
}

/// `y = W x + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    in_dim: usize,
    out_dim: usize,
}

impl Linear {
    /// Registers `{prefix}.weight` and `{prefix}.bias`, initialized uniformly
    /// in `±1/sqrt(in_dim)`.
    pub fn new(params: &mut ParamSet, prefix: &str, in_dim: usize, out_dim: usize, rng: &mut impl Rng) -> Result<Self> {
        let k = 1.0 / (in_dim as f64).sqrt();
        let weight = params.insert(format!("{prefix}.weight"), uniform(rng, vec![out_dim, in_dim], k))?;
        let bias = params.insert(format!("{prefix}.bias"), uniform(rng, vec![out_dim], k))?;
        Ok(Self {
            weight,
            bias,
            in_dim,
            out_dim,
        })
    }

    /// Looks up an existing layer by name, validating shapes.
    pub fn attach(params: &ParamSet, prefix: &str, in_dim: usize, out_dim: usize) -> Result<Self> {
        let weight = lookup(params, &format!("{prefix}.weight"), &[out_dim, in_dim])?;
        let bias = lookup(params, &format!("{prefix}.bias"), &[out_dim])?;
        Ok(Self {
            weight,
            bias,
            in_dim,
            out_dim,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn forward(&self, tape: &mut Tape, p: &Bound, x: Var) -> Result<Var> {
        tape.affine(p[self.weight], x, p[self.bias])
    }
}

pub(crate) fn lookup(params: &ParamSet, name: &str, shape: &[usize]) -> Result<ParamId> {
    let id = params
        .find(name)
        .ok_or_else(|| TensorError::Contract(format!("missing parameter {name}")))?;
    let actual = params.get(id).shape();
    if actual != shape {
        return Err(TensorError::Shape {
            op: "attach",
            lhs: actual.to_vec(),
            rhs: shape.to_vec(),
        });
    }
    Ok(id)
}

/// Parameters of one LSTM gate: input weights, recurrent weights, bias.
#[derive(Debug, Clone, PartialEq)]
pub struct Gate {
    pub w_x: ParamId,
    pub w_h: ParamId,
    pub b: ParamId,
}

const GATES: [&str; 4] = ["input", "forget", "output", "cell"];

/// A single LSTM layer with separate input, forget, output and candidate
/// blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmCell {
    pub input: Gate,
    pub forget: Gate,
    pub output: Gate,
    pub cell: Gate,
    in_dim: usize,
    hidden_dim: usize,
}

impl LstmCell {
    /// Uniform `±1/sqrt(hidden_dim)` initialization; the forget bias starts at 1.
    pub fn new(
        params: &mut ParamSet,
        prefix: &str,
        in_dim: usize,
        hidden_dim: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let k = 1.0 / (hidden_dim as f64).sqrt();
        let mut gates = Vec::with_capacity(4);
        for name in GATES {
            let w_x = params.insert(
                format!("{prefix}.{name}.w_x"),
                uniform(rng, vec![hidden_dim, in_dim], k),
            )?;
            let w_h = params.insert(
                format!("{prefix}.{name}.w_h"),
                uniform(rng, vec![hidden_dim, hidden_dim], k),
            )?;
            let bias = if name == "forget" {
                Tensor::new(vec![hidden_dim], vec![1.0; hidden_dim])?
            } else {
                uniform(rng, vec![hidden_dim], k)
            };
            let b = params.insert(format!("{prefix}.{name}.b"), bias)?;
            gates.push(Gate { w_x, w_h, b });
        }
        Ok(Self::from_gates(gates, in_dim, hidden_dim))
    }

    pub fn attach(params: &ParamSet, prefix: &str, in_dim: usize, hidden_dim: usize) -> Result<Self> {
        let mut gates = Vec::with_capacity(4);
        for name in GATES {
            gates.push(Gate {
                w_x: lookup(params, &format!("{prefix}.{name}.w_x"), &[hidden_dim, in_dim])?,
                w_h: lookup(params, &format!("{prefix}.{name}.w_h"), &[hidden_dim, hidden_dim])?,
                b: lookup(params, &format!("{prefix}.{name}.b"), &[hidden_dim])?,
            });
        }
        Ok(Self::from_gates(gates, in_dim, hidden_dim))
    }

    fn from_gates(gates: Vec<Gate>, in_dim: usize, hidden_dim: usize) -> Self {
        let mut it = gates.into_iter();
        let mut next = || it.next().expect("four gates");
        Self {
            input: next(),
            forget: next(),
            output: next(),
            cell: next(),
            in_dim,
            hidden_dim,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden_dim
    }

    pub fn zero_state(&self, tape: &mut Tape) -> Result<(Var, Var)> {
        let h = tape.constant(vec![self.hidden_dim], vec![0.0; self.hidden_dim])?;
        let c = tape.constant(vec![self.hidden_dim], vec![0.0; self.hidden_dim])?;
        Ok((h, c))
    }

    fn gate_pre(&self, gate: &Gate, tape: &mut Tape, p: &Bound, x: Var, h: Var) -> Result<Var> {
        let a = tape.affine(p[gate.w_x], x, p[gate.b])?;
        let r = tape.matvec(p[gate.w_h], h)?;
        tape.add(a, r)
    }

    /// One recurrence step: returns `(h', c')`.
    pub fn step(&self, tape: &mut Tape, p: &Bound, x: Var, h: Var, c: Var) -> Result<(Var, Var)> {
        let pre_i = self.gate_pre(&self.input, tape, p, x, h)?;
        let pre_f = self.gate_pre(&self.forget, tape, p, x, h)?;
        let pre_o = self.gate_pre(&self.output, tape, p, x, h)?;
        let pre_g = self.gate_pre(&self.cell, tape, p, x, h)?;
        let i = tape.sigmoid(pre_i)?;
        let f = tape.sigmoid(pre_f)?;
        let o = tape.sigmoid(pre_o)?;
        let g = tape.tanh(pre_g)?;
        let keep = tape.mul(f, c)?;
        let write = tape.mul(i, g)?;
        let c_next = tape.add(keep, write)?;
        let squashed = tape.tanh(c_next)?;
        let h_next = tape.mul(o, squashed)?;
        Ok((h_next, c_next))
    }

    /// Folds [`LstmCell::step`] over `xs`, returning every hidden state and
    /// the final `(h, c)`.
    pub fn encode(&self, tape: &mut Tape, p: &Bound, xs: &[Var], h0: Var, c0: Var) -> Result<(Vec<Var>, (Var, Var))> {
        if xs.is_empty() {
            return Err(TensorError::Contract("LSTM over an empty sequence".into()));
        }
        let (mut h, mut c) = (h0, c0);
        let mut hidden = Vec::with_capacity(xs.len());
        for &x in xs {
            (h, c) = self.step(tape, p, x, h, c)?;
            hidden.push(h);
        }
        Ok((hidden, (h, c)))
    }
}

/// Additive attention: `l_i = v · tanh(W [s; d] + U z_i)`, `β = softmax(l)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Attention {
    pub v: ParamId,
    pub w: ParamId,
    pub u: ParamId,
    attn_dim: usize,
    state_dim: usize,
    key_dim: usize,
}

impl Attention {
    /// `state_dim` is the length of the concatenated decoder state `[s; d]`.
    pub fn new(
        params: &mut ParamSet,
        prefix: &str,
        state_dim: usize,
        key_dim: usize,
        attn_dim: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let k = 1.0 / (attn_dim as f64).sqrt();
        let v = params.insert(format!("{prefix}.v"), uniform(rng, vec![attn_dim], k))?;
        let w = params.insert(format!("{prefix}.w"), uniform(rng, vec![attn_dim, state_dim], k))?;
        let u = params.insert(format!("{prefix}.u"), uniform(rng, vec![attn_dim, key_dim], k))?;
        Ok(Self {
            v,
            w,
            u,
            attn_dim,
            state_dim,
            key_dim,
        })
    }

    pub fn attach(params: &ParamSet, prefix: &str, state_dim: usize, key_dim: usize, attn_dim: usize) -> Result<Self> {
        Ok(Self {
            v: lookup(params, &format!("{prefix}.v"), &[attn_dim])?,
            w: lookup(params, &format!("{prefix}.w"), &[attn_dim, state_dim])?,
            u: lookup(params, &format!("{prefix}.u"), &[attn_dim, key_dim])?,
            attn_dim,
            state_dim,
            key_dim,
        })
    }

    pub fn attn_dim(&self) -> usize {
        self.attn_dim
    }

    /// Alignment logits `l_i` for every key.
    pub fn logits(&self, tape: &mut Tape, p: &Bound, s_prev: Var, d_prev: Var, keys: &[Var]) -> Result<Var> {
        if keys.is_empty() {
            return Err(TensorError::Contract("attention over no keys".into()));
        }
        let state = tape.concat(&[s_prev, d_prev])?;
        if tape.shape(state) != [self.state_dim] {
            return Err(TensorError::Shape {
                op: "attention",
                lhs: vec![self.state_dim],
                rhs: tape.shape(state).to_vec(),
            });
        }
        let query = tape.matvec(p[self.w], state)?;
        let mut logits = Vec::with_capacity(keys.len());
        for &z in keys {
            if tape.shape(z) != [self.key_dim] {
                return Err(TensorError::Shape {
                    op: "attention",
                    lhs: vec![self.key_dim],
                    rhs: tape.shape(z).to_vec(),
                });
            }
            let key = tape.matvec(p[self.u], z)?;
            let sum = tape.add(query, key)?;
            let act = tape.tanh(sum)?;
            logits.push(tape.dot(p[self.v], act)?);
        }
        tape.concat(&logits)
    }

    /// Attention weights over `keys`; a probability vector of length `keys.len()`.
    pub fn scores(&self, tape: &mut Tape, p: &Bound, s_prev: Var, d_prev: Var, keys: &[Var]) -> Result<Var> {
        let l = self.logits(tape, p, s_prev, d_prev, keys)?;
        tape.softmax(l)
    }
}

/// Tolerance on `Σβ = 1` accepted by [`attention_context`].
pub const WEIGHT_SUM_TOLERANCE: f64 = 1e-9;

/// Context vector `c = Σ_i β_i z_i`.
pub fn attention_context(tape: &mut Tape, betas: Var, zs: &[Var]) -> Result<Var> {
    let b = tape.value(betas);
    if b.len() != zs.len() || tape.shape(betas).len() != 1 {
        return Err(TensorError::Shape {
            op: "attention_context",
            lhs: tape.shape(betas).to_vec(),
            rhs: vec![zs.len()],
        });
    }
    if b.iter().any(|x| *x < 0.0) || (b.iter().sum::<f64>() - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
        return Err(TensorError::Contract(
            "attention weights must be non-negative and sum to 1".into(),
        ));
    }
    let stacked = tape.stack_columns(zs)?;
    tape.matvec(stacked, betas)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::finite_diff_check;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(7)
    }

    fn set_all(params: &mut ParamSet, value: f64) {
        for t in params.tensors_mut() {
            let n = t.len();
            t.set_data(vec![value; n]).unwrap();
        }
    }

    #[test]
    fn linear_hand_values() {
        let mut p = ParamSet::new();
        let layer = Linear::new(&mut p, "l", 2, 1, &mut rng()).unwrap();
        p.get_mut(layer.weight).set_data(vec![1.0, 1.0]).unwrap();
        p.get_mut(layer.bias).set_data(vec![1.0]).unwrap();
        let mut t = Tape::new();
        let b = t.bind(&p);
        let x = t.vector(&[2.0, 3.0]).unwrap();
        let y = layer.forward(&mut t, &b, x).unwrap();
        assert_eq!(t.value(y), &[6.0]);
        let zero = t.vector(&[0.0, 0.0]).unwrap();
        let y0 = layer.forward(&mut t, &b, zero).unwrap();
        assert_eq!(t.value(y0), &[1.0]);
    }

    #[test]
    fn linear_identity_weights_pass_input_through() {
        let mut p = ParamSet::new();
        let layer = Linear::new(&mut p, "l", 3, 3, &mut rng()).unwrap();
        p.get_mut(layer.weight)
            .set_data(vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0])
            .unwrap();
        p.get_mut(layer.bias).set_data(vec![0.0; 3]).unwrap();
        let mut t = Tape::new();
        let b = t.bind(&p);
        let x = t.vector(&[0.5, -2.0, 7.0]).unwrap();
        let y = layer.forward(&mut t, &b, x).unwrap();
        assert_eq!(t.value(y), &[0.5, -2.0, 7.0]);
        let short = t.vector(&[1.0]).unwrap();
        assert!(layer.forward(&mut t, &b, short).is_err());
    }

    #[test]
    fn lstm_with_zero_params_halves_the_cell() {
        let mut p = ParamSet::new();
        let cell = LstmCell::new(&mut p, "c", 2, 3, &mut rng()).unwrap();
        set_all(&mut p, 0.0);
        let mut t = Tape::new();
        let b = t.bind(&p);
        let x = t.vector(&[0.3, -0.7]).unwrap();
        let h = t.vector(&[0.1, 0.2, 0.3]).unwrap();
        let c = t.vector(&[1.0, -2.0, 0.5]).unwrap();
        let (h1, c1) = cell.step(&mut t, &b, x, h, c).unwrap();
        // All gates are sigmoid(0) = 1/2 and the candidate is tanh(0) = 0.
        assert_eq!(t.value(c1), &[0.5, -1.0, 0.25]);
        let expect: Vec<f64> = [0.5f64, -1.0, 0.25].iter().map(|v| 0.5 * v.tanh()).collect();
        assert_eq!(t.value(h1), expect.as_slice());
    }

    #[test]
    fn lstm_zero_everything_stays_zero() {
        let mut p = ParamSet::new();
        let cell = LstmCell::new(&mut p, "c", 2, 2, &mut rng()).unwrap();
        set_all(&mut p, 0.0);
        let mut t = Tape::new();
        let b = t.bind(&p);
        let x = t.vector(&[0.0, 0.0]).unwrap();
        let (h0, c0) = cell.zero_state(&mut t).unwrap();
        let (h1, c1) = cell.step(&mut t, &b, x, h0, c0).unwrap();
        assert_eq!(t.value(h1), &[0.0, 0.0]);
        assert_eq!(t.value(c1), &[0.0, 0.0]);
    }

    #[test]
    fn lstm_forget_bias_starts_at_one() {
        let mut p = ParamSet::new();
        let cell = LstmCell::new(&mut p, "c", 2, 4, &mut rng()).unwrap();
        assert_eq!(p.get(cell.forget.b).data(), &[1.0; 4]);
        let bound = 0.5;
        assert!(p.get(cell.input.w_x).data().iter().all(|v| v.abs() <= bound));
    }

    #[test]
    fn lstm_step_gradient_matches_finite_differences() {
        let mut r = rng();
        let mut p = ParamSet::new();
        let cell = LstmCell::new(&mut p, "c", 3, 2, &mut r).unwrap();
        let xs: Vec<f64> = (0..3).map(|_| r.random_range(-1.0..1.0)).collect();
        let err = finite_diff_check(&mut p, 1e-5, |t, b| {
            let x = t.vector(&xs)?;
            let h = t.vector(&[0.2, -0.4])?;
            let c = t.vector(&[0.5, 0.1])?;
            let (h1, _) = cell.step(t, b, x, h, c)?;
            t.sum(h1)
        })
        .unwrap();
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn encode_prefix_and_length() {
        let mut r = rng();
        let mut p = ParamSet::new();
        let cell = LstmCell::new(&mut p, "c", 2, 3, &mut r).unwrap();
        let inputs: Vec<[f64; 2]> = (0..5)
            .map(|_| [r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)])
            .collect();
        let mut t = Tape::new();
        let b = t.bind(&p);
        let xs: Vec<Var> = inputs.iter().map(|x| t.vector(x).unwrap()).collect();
        let (h0, c0) = cell.zero_state(&mut t).unwrap();
        let (full, _) = cell.encode(&mut t, &b, &xs, h0, c0).unwrap();
        assert_eq!(full.len(), 5);
        let (prefix, _) = cell.encode(&mut t, &b, &xs[..3], h0, c0).unwrap();
        for (a, b) in prefix.iter().zip(&full) {
            assert_eq!(t.value(*a), t.value(*b));
        }
        let (single, _) = cell.encode(&mut t, &b, &xs[..1], h0, c0).unwrap();
        let (h1, _) = cell.step(&mut t, &b, xs[0], h0, c0).unwrap();
        assert_eq!(t.value(single[0]), t.value(h1));

        let mut rev = xs.clone();
        rev.reverse();
        let (backwards, _) = cell.encode(&mut t, &b, &rev, h0, c0).unwrap();
        assert_ne!(t.value(backwards[4]), t.value(full[4]));
        assert!(cell.encode(&mut t, &b, &[], h0, c0).is_err());
    }

    #[test]
    fn context_hand_values() {
        let mut t = Tape::new();
        let z1 = t.vector(&[0.0, 4.0]).unwrap();
        let z2 = t.vector(&[4.0, 0.0]).unwrap();
        let beta = t.vector(&[0.25, 0.75]).unwrap();
        let c = attention_context(&mut t, beta, &[z1, z2]).unwrap();
        assert_eq!(t.value(c), &[3.0, 1.0]);

        let onehot = t.vector(&[0.0, 1.0]).unwrap();
        let c = attention_context(&mut t, onehot, &[z1, z2]).unwrap();
        assert_eq!(t.value(c), &[4.0, 0.0]);

        let uniform = t.vector(&[0.5, 0.5]).unwrap();
        let c = attention_context(&mut t, uniform, &[z1, z2]).unwrap();
        assert_eq!(t.value(c), &[2.0, 2.0]);
    }

    #[test]
    fn context_rejects_bad_weights() {
        let mut t = Tape::new();
        let z = t.vector(&[1.0]).unwrap();
        let short = t.vector(&[1.0, 0.0]).unwrap();
        assert!(attention_context(&mut t, short, &[z]).is_err());
        let unnormalized = t.vector(&[0.7, 0.7]).unwrap();
        assert!(attention_context(&mut t, unnormalized, &[z, z]).is_err());
        let negative = t.vector(&[1.5, -0.5]).unwrap();
        assert!(attention_context(&mut t, negative, &[z, z]).is_err());
    }

    #[test]
    fn equal_logits_give_uniform_weights() {
        let mut p = ParamSet::new();
        let att = Attention::new(&mut p, "a", 4, 2, 3, &mut rng()).unwrap();
        let mut t = Tape::new();
        let b = t.bind(&p);
        let s = t.vector(&[0.1, 0.2]).unwrap();
        let d = t.vector(&[0.3, -0.1]).unwrap();
        let z = t.vector(&[0.5, 0.5]).unwrap();
        let beta = att.scores(&mut t, &b, s, d, &[z, z, z, z]).unwrap();
        assert!(t.value(beta).iter().all(|v| (v - 0.25).abs() < 1e-15));
    }

    #[test]
    fn attention_gradient_matches_finite_differences() {
        let mut r = rng();
        let mut p = ParamSet::new();
        let att = Attention::new(&mut p, "a", 4, 3, 2, &mut r).unwrap();
        let keys: Vec<Vec<f64>> = (0..3)
            .map(|_| (0..3).map(|_| r.random_range(-1.0..1.0)).collect())
            .collect();
        let err = finite_diff_check(&mut p, 1e-5, |t, b| {
            let s = t.vector(&[0.3, -0.2])?;
            let d = t.vector(&[0.1, 0.4])?;
            let zs: Vec<Var> = keys.iter().map(|k| t.vector(k)).collect::<Result<_>>()?;
            let beta = att.scores(t, b, s, d, &zs)?;
            let ctx = attention_context(t, beta, &zs)?;
            let w = t.vector(&[1.0, -2.0, 0.5])?;
            t.dot(ctx, w)
        })
        .unwrap();
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn linear_gradient_matches_finite_differences() {
        let mut p = ParamSet::new();
        let layer = Linear::new(&mut p, "l", 3, 2, &mut rng()).unwrap();
        let err = finite_diff_check(&mut p, 1e-5, |t, b| {
            let x = t.vector(&[0.5, -1.0, 2.0])?;
            let y = layer.forward(t, b, x)?;
            let y = t.tanh(y)?;
            t.sum(y)
        })
        .unwrap();
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn attach_validates_shapes() {
        let mut p = ParamSet::new();
        LstmCell::new(&mut p, "c", 2, 3, &mut rng()).unwrap();
        assert!(LstmCell::attach(&p, "c", 2, 3).is_ok());
        assert!(LstmCell::attach(&p, "c", 3, 3).is_err());
        assert!(LstmCell::attach(&p, "missing", 2, 3).is_err());
    }
}

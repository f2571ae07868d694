//! The reconstruction network: an LSTM sequence encoder into an
//! `N`-dimensional latent space, a latent predictor, randomized perturbation
//! of the true future latents, and an LSTM sequence decoder back to `M`
//! dimensions.
//!
//! Windows are passed row-major with one row of `M` values per timestamp.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::layers::{attention_context, lookup, uniform, Attention, Linear, LstmCell};
use crate::tensor::{Bound, ParamId, ParamSet, Result, Tape, TensorError, Var};

/// Which latent predictor the model carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PredictorKind {
    Linear,
    Seq2Seq,
    Attention,
    None,
}

/// Model variants selectable from the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    /// Attention seq2seq predictor.
    Sa,
    /// LSTM seq2seq predictor.
    S,
    /// Linear `P Z Q` predictor.
    L,
    /// Plain autoencoder: no predictor, no perturbation.
    Ae,
    /// Seq2seq predictor whose perturbation is replaced by the prediction itself.
    N,
}

impl Variant {
    pub const ALL: [Variant; 5] = [Variant::Sa, Variant::S, Variant::L, Variant::Ae, Variant::N];

    pub fn predictor(self) -> PredictorKind {
        match self {
            Variant::Sa => PredictorKind::Attention,
            Variant::S | Variant::N => PredictorKind::Seq2Seq,
            Variant::L => PredictorKind::Linear,
            Variant::Ae => PredictorKind::None,
        }
    }

    /// True when the second decode consumes noisy latents.
    pub fn is_randomized(self) -> bool {
        matches!(self, Variant::Sa | Variant::S | Variant::L)
    }

    pub fn tag(self) -> &'static str {
        match self {
            Variant::Sa => "sa",
            Variant::S => "s",
            Variant::L => "l",
            Variant::Ae => "ae",
            Variant::N => "n",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Variant::ALL
            .into_iter()
            .find(|v| v.tag() == s)
            .ok_or_else(|| format!("unknown variant {s:?} (expected sa, s, l, ae or n)"))
    }
}

/// Architecture hyperparameters; everything needed to rebuild parameter shapes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelHyper {
    pub input_dim: usize,
    pub latent_dim: usize,
    pub hidden_dim: usize,
    pub history_len: usize,
    pub future_len: usize,
    pub variant: Variant,
    /// Per-component noise variance; `Σ = σ² I`.
    pub sigma2: f64,
}

impl ModelHyper {
    /// `ceil(M / 2)`, never below 1.
    pub fn default_hidden(input_dim: usize) -> usize {
        input_dim.div_ceil(2).max(1)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(TensorError::Contract(msg));
        if self.input_dim == 0 || self.latent_dim == 0 || self.hidden_dim == 0 {
            return bad("dimensions must be positive".into());
        }
        if self.latent_dim >= self.input_dim {
            return bad(format!(
                "latent dimension {} must be smaller than input dimension {}",
                self.latent_dim, self.input_dim
            ));
        }
        if self.history_len == 0 || self.future_len == 0 {
            return bad("window lengths must be positive".into());
        }
        if !(self.sigma2.is_finite() && self.sigma2 >= 0.0) {
            return bad(format!(
                "noise variance must be finite and non-negative, got {}",
                self.sigma2
            ));
        }
        Ok(())
    }
}

/// A latent (or data) sequence recorded on a tape, one vector per timestamp.
pub type Seq = Vec<Var>;

/// Encoder or decoder: an LSTM followed by a per-step linear projection.
#[derive(Debug, Clone, PartialEq)]
pub struct SeqCoder {
    pub lstm: LstmCell,
    pub proj: Linear,
}

impl SeqCoder {
    fn new(
        params: &mut ParamSet,
        prefix: &str,
        in_dim: usize,
        hidden: usize,
        out_dim: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        Ok(Self {
            lstm: LstmCell::new(params, &format!("{prefix}.lstm"), in_dim, hidden, rng)?,
            proj: Linear::new(params, &format!("{prefix}.proj"), hidden, out_dim, rng)?,
        })
    }

    fn attach(params: &ParamSet, prefix: &str, in_dim: usize, hidden: usize, out_dim: usize) -> Result<Self> {
        Ok(Self {
            lstm: LstmCell::attach(params, &format!("{prefix}.lstm"), in_dim, hidden)?,
            proj: Linear::attach(params, &format!("{prefix}.proj"), hidden, out_dim)?,
        })
    }

    /// Runs the LSTM from `state` over `xs`, projecting every hidden state.
    fn run(&self, tape: &mut Tape, p: &Bound, xs: &[Var], state: (Var, Var)) -> Result<(Seq, (Var, Var))> {
        let (hidden, last) = self.lstm.encode(tape, p, xs, state.0, state.1)?;
        let out = hidden
            .into_iter()
            .map(|h| self.proj.forward(tape, p, h))
            .collect::<Result<Seq>>()?;
        Ok((out, last))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Predictor {
    Linear {
        /// `[N, N]`
        p: ParamId,
        /// `[ℓ_h, ℓ]`
        q: ParamId,
    },
    Seq2Seq {
        encoder: LstmCell,
        decoder: LstmCell,
        out: Linear,
    },
    Attention {
        encoder: LstmCell,
        decoder: LstmCell,
        attention: Attention,
        out: Linear,
    },
    None,
}

/// All trainable tensors plus the structure that addresses them.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub hyper: ModelHyper,
    pub set: ParamSet,
    pub encoder: SeqCoder,
    pub decoder: SeqCoder,
    pub predictor: Predictor,
}

/// One draw of `ε`: `ℓ × N` values, row per future step.
#[derive(Debug, Clone, PartialEq)]
pub struct Noise {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Noise {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    /// I.i.d. `N(0, σ²)` components.
    pub fn sample(rng: &mut impl Rng, rows: usize, cols: usize, sigma2: f64) -> Self {
        let sd = sigma2.sqrt();
        let data = (0..rows * cols)
            .map(|_| sd * rng.sample::<f64, _>(StandardNormal))
            .collect();
        Self { rows, cols, data }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }
}

/// Everything produced by one forward pass over a window pair.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    pub latent_history: Seq,
    pub latent_future: Seq,
    /// `None` for the autoencoder variant.
    pub predicted: Option<Seq>,
    pub recon_history: Seq,
    pub recon_future: Seq,
    /// Second-decode future reconstructions, one per noise draw. Empty for
    /// the autoencoder; exactly one (noise-free) entry for variant `n`.
    pub perturbed: Vec<Seq>,
}

fn rows_to_vars(tape: &mut Tape, rows: &[f64], dim: usize) -> Result<Seq> {
    if dim == 0 || !rows.len().is_multiple_of(dim) {
        return Err(TensorError::Shape {
            op: "window",
            lhs: vec![rows.len()],
            rhs: vec![dim],
        });
    }
    rows.chunks(dim).map(|r| tape.vector(r)).collect()
}

impl ModelParams {
    /// Fresh parameters drawn from a generator seeded with `seed`.
    pub fn init(hyper: ModelHyper, seed: u64) -> Result<Self> {
        hyper.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ModelHyper {
            input_dim: m,
            latent_dim: n,
            hidden_dim: h,
            history_len: lh,
            future_len: lf,
            ..
        } = hyper;
        let mut set = ParamSet::new();
        let encoder = SeqCoder::new(&mut set, "enc", m, h, n, &mut rng)?;
        let decoder = SeqCoder::new(&mut set, "dec", n, h, m, &mut rng)?;
        let predictor = match hyper.variant.predictor() {
            PredictorKind::Linear => {
                let kp = 1.0 / (n as f64).sqrt();
                let kq = 1.0 / (lh as f64).sqrt();
                let p = set.insert("pred.p", uniform(&mut rng, vec![n, n], kp))?;
                let q = set.insert("pred.q", uniform(&mut rng, vec![lh, lf], kq))?;
                Predictor::Linear { p, q }
            }
            PredictorKind::Seq2Seq => Predictor::Seq2Seq {
                encoder: LstmCell::new(&mut set, "pred.enc", n, h, &mut rng)?,
                decoder: LstmCell::new(&mut set, "pred.dec", n, h, &mut rng)?,
                out: Linear::new(&mut set, "pred.out", h, n, &mut rng)?,
            },
            PredictorKind::Attention => Predictor::Attention {
                encoder: LstmCell::new(&mut set, "pred.enc", n, h, &mut rng)?,
                decoder: LstmCell::new(&mut set, "pred.dec", 2 * n, h, &mut rng)?,
                attention: Attention::new(&mut set, "pred.att", 2 * h, n, h, &mut rng)?,
                out: Linear::new(&mut set, "pred.out", h, n, &mut rng)?,
            },
            PredictorKind::None => Predictor::None,
        };
        Ok(Self {
            hyper,
            set,
            encoder,
            decoder,
            predictor,
        })
    }

    /// Rebuilds the structure over an existing parameter set, checking that
    /// every expected tensor is present with the right shape and that there
    /// are no extras.
    pub fn from_set(hyper: ModelHyper, set: ParamSet) -> Result<Self> {
        hyper.validate()?;
        let ModelHyper {
            input_dim: m,
            latent_dim: n,
            hidden_dim: h,
            history_len: lh,
            future_len: lf,
            ..
        } = hyper;
        let encoder = SeqCoder::attach(&set, "enc", m, h, n)?;
        let decoder = SeqCoder::attach(&set, "dec", n, h, m)?;
        let predictor = match hyper.variant.predictor() {
            PredictorKind::Linear => Predictor::Linear {
                p: lookup(&set, "pred.p", &[n, n])?,
                q: lookup(&set, "pred.q", &[lh, lf])?,
            },
            PredictorKind::Seq2Seq => Predictor::Seq2Seq {
                encoder: LstmCell::attach(&set, "pred.enc", n, h)?,
                decoder: LstmCell::attach(&set, "pred.dec", n, h)?,
                out: Linear::attach(&set, "pred.out", h, n)?,
            },
            PredictorKind::Attention => Predictor::Attention {
                encoder: LstmCell::attach(&set, "pred.enc", n, h)?,
                decoder: LstmCell::attach(&set, "pred.dec", 2 * n, h)?,
                attention: Attention::attach(&set, "pred.att", 2 * h, n, h)?,
                out: Linear::attach(&set, "pred.out", h, n)?,
            },
            PredictorKind::None => Predictor::None,
        };
        let expected = Self::init(hyper, 0)?.set.len();
        if set.len() != expected {
            return Err(TensorError::Contract(format!(
                "expected {expected} parameter tensors, found {}",
                set.len()
            )));
        }
        Ok(Self {
            hyper,
            set,
            encoder,
            decoder,
            predictor,
        })
    }

    /// Encodes both windows in one LSTM pass and splits the latents.
    pub fn seq_enc(&self, tape: &mut Tape, p: &Bound, history: &[f64], future: &[f64]) -> Result<(Seq, Seq)> {
        let m = self.hyper.input_dim;
        let mut xs = rows_to_vars(tape, history, m)?;
        let fut = rows_to_vars(tape, future, m)?;
        let split = xs.len();
        if split == 0 || fut.is_empty() {
            return Err(TensorError::Contract("empty window".into()));
        }
        xs.extend(fut);
        let state = self.encoder.lstm.zero_state(tape)?;
        let (mut z, _) = self.encoder.run(tape, p, &xs, state)?;
        let zf = z.split_off(split);
        Ok((z, zf))
    }

    /// Decodes the history latents, returning the reconstruction and the
    /// decoder state to continue from.
    pub fn dec_history(&self, tape: &mut Tape, p: &Bound, zh: &[Var]) -> Result<(Seq, (Var, Var))> {
        self.check_latents(tape, zh)?;
        let state = self.decoder.lstm.zero_state(tape)?;
        self.decoder.run(tape, p, zh, state)
    }

    /// Continues decoding from `state` over `zf`.
    pub fn dec_continue(&self, tape: &mut Tape, p: &Bound, state: (Var, Var), zf: &[Var]) -> Result<Seq> {
        self.check_latents(tape, zf)?;
        Ok(self.decoder.run(tape, p, zf, state)?.0)
    }

    /// Decodes the concatenated latent sequence and splits it back.
    pub fn seq_dec(&self, tape: &mut Tape, p: &Bound, zh: &[Var], zf: &[Var]) -> Result<(Seq, Seq)> {
        let (wh, state) = self.dec_history(tape, p, zh)?;
        let wf = self.dec_continue(tape, p, state, zf)?;
        Ok((wh, wf))
    }

    fn check_latents(&self, tape: &Tape, zs: &[Var]) -> Result<()> {
        if zs.is_empty() {
            return Err(TensorError::Contract("empty latent sequence".into()));
        }
        let n = self.hyper.latent_dim;
        match zs.iter().find(|z| tape.shape(**z) != [n]) {
            Some(z) => Err(TensorError::Shape {
                op: "latent",
                lhs: vec![n],
                rhs: tape.shape(*z).to_vec(),
            }),
            None => Ok(()),
        }
    }

    /// Predicts the next `ℓ` latents from the history latents.
    pub fn predict(&self, tape: &mut Tape, p: &Bound, zh: &[Var]) -> Result<Seq> {
        self.check_latents(tape, zh)?;
        let lf = self.hyper.future_len;
        match &self.predictor {
            Predictor::Linear { p: pm, q } => predict_linear(tape, p[*pm], p[*q], zh),
            Predictor::Seq2Seq { encoder, decoder, out } => {
                let (h0, c0) = encoder.zero_state(tape)?;
                let (_, (mut h, mut c)) = encoder.encode(tape, p, zh, h0, c0)?;
                let mut input = *zh.last().expect("non-empty");
                let mut preds = Vec::with_capacity(lf);
                for _ in 0..lf {
                    (h, c) = decoder.step(tape, p, input, h, c)?;
                    input = out.forward(tape, p, h)?;
                    preds.push(input);
                }
                Ok(preds)
            }
            Predictor::Attention {
                encoder,
                decoder,
                attention,
                out,
            } => {
                let (h0, c0) = encoder.zero_state(tape)?;
                let (_, (mut h, mut c)) = encoder.encode(tape, p, zh, h0, c0)?;
                let mut prev = *zh.last().expect("non-empty");
                let mut preds = Vec::with_capacity(lf);
                for _ in 0..lf {
                    let beta = attention.scores(tape, p, h, c, zh)?;
                    let ctx = attention_context(tape, beta, zh)?;
                    let input = tape.concat(&[prev, ctx])?;
                    (h, c) = decoder.step(tape, p, input, h, c)?;
                    prev = out.forward(tape, p, h)?;
                    preds.push(prev);
                }
                Ok(preds)
            }
            Predictor::None => Err(TensorError::Contract("the autoencoder variant has no predictor".into())),
        }
    }

    /// Attention weights used at every decoder step of the attention
    /// predictor, for inspection.
    pub fn attention_weights(&self, tape: &mut Tape, p: &Bound, zh: &[Var]) -> Result<Vec<Vec<f64>>> {
        let Predictor::Attention {
            encoder,
            decoder,
            attention,
            out,
        } = &self.predictor
        else {
            return Err(TensorError::Contract("not an attention predictor".into()));
        };
        let (h0, c0) = encoder.zero_state(tape)?;
        let (_, (mut h, mut c)) = encoder.encode(tape, p, zh, h0, c0)?;
        let mut prev = *zh.last().ok_or_else(|| TensorError::Contract("empty history".into()))?;
        let mut weights = Vec::new();
        for _ in 0..self.hyper.future_len {
            let beta = attention.scores(tape, p, h, c, zh)?;
            weights.push(tape.value(beta).to_vec());
            let ctx = attention_context(tape, beta, zh)?;
            let input = tape.concat(&[prev, ctx])?;
            (h, c) = decoder.step(tape, p, input, h, c)?;
            prev = out.forward(tape, p, h)?;
        }
        Ok(weights)
    }

    /// Full forward pass used by the training loss: encode, predict, decode
    /// the true latents, then decode once per noise draw.
    ///
    /// Variant `n` ignores `noise` and decodes the prediction once; the
    /// autoencoder skips the prediction path entirely.
    pub fn forward(
        &self,
        tape: &mut Tape,
        p: &Bound,
        history: &[f64],
        future: &[f64],
        noise: &[Noise],
    ) -> Result<ForwardPass> {
        let (zh, zf) = self.seq_enc(tape, p, history, future)?;
        let (recon_history, state) = self.dec_history(tape, p, &zh)?;
        let recon_future = self.dec_continue(tape, p, state, &zf)?;
        let (predicted, perturbed) = match self.hyper.variant {
            Variant::Ae => (None, Vec::new()),
            Variant::N => {
                let zhat = self.predict(tape, p, &zh)?;
                let w = self.dec_continue(tape, p, state, &zhat)?;
                (Some(zhat), vec![w])
            }
            _ => {
                let zhat = self.predict(tape, p, &zh)?;
                let mut outs = Vec::with_capacity(noise.len());
                for eps in noise {
                    let zt = rand_perturb(tape, &zf, &zhat, eps)?;
                    outs.push(self.dec_continue(tape, p, state, &zt)?);
                }
                (Some(zhat), outs)
            }
        };
        Ok(ForwardPass {
            latent_history: zh,
            latent_future: zf,
            predicted,
            recon_history,
            recon_future,
            perturbed,
        })
    }

    /// `SeqDec(Z^h, RandPerturb(Z, Predic(Z^h), ε))`, future half only.
    pub fn lpc_reconstruct(
        &self,
        tape: &mut Tape,
        p: &Bound,
        history: &[f64],
        future: &[f64],
        eps: &Noise,
    ) -> Result<Seq> {
        let (zh, zf) = self.seq_enc(tape, p, history, future)?;
        let zhat = self.predict(tape, p, &zh)?;
        let zt = rand_perturb(tape, &zf, &zhat, eps)?;
        let (_, wf) = self.seq_dec(tape, p, &zh, &zt)?;
        Ok(wf)
    }

    /// The future-window reconstruction this model's variant scores with.
    pub fn reconstruct(&self, tape: &mut Tape, p: &Bound, history: &[f64], future: &[f64], eps: &Noise) -> Result<Seq> {
        match self.hyper.variant {
            Variant::Ae | Variant::N => self.variant_reconstruct(tape, p, history, future),
            _ => self.lpc_reconstruct(tape, p, history, future, eps),
        }
    }

    /// Ablation reconstructions: the autoencoder decodes the true latents,
    /// variant `n` decodes the prediction. Neither uses noise.
    pub fn variant_reconstruct(&self, tape: &mut Tape, p: &Bound, history: &[f64], future: &[f64]) -> Result<Seq> {
        let (zh, zf) = self.seq_enc(tape, p, history, future)?;
        match self.hyper.variant {
            Variant::Ae => Ok(self.seq_dec(tape, p, &zh, &zf)?.1),
            Variant::N => {
                let zhat = self.predict(tape, p, &zh)?;
                Ok(self.seq_dec(tape, p, &zh, &zhat)?.1)
            }
            v => Err(TensorError::Contract(format!("variant {v} is not an ablation"))),
        }
    }
}

/// `P · [z_1 … z_{ℓ_h}] · Q`, split into `ℓ` column vectors.
pub fn predict_linear(tape: &mut Tape, p: Var, q: Var, zh: &[Var]) -> Result<Seq> {
    let z = tape.stack_columns(zh)?;
    let pz = tape.matmul(p, z)?;
    let out = tape.matmul(pz, q)?;
    let cols = tape.shape(out)[1];
    (0..cols).map(|j| tape.column(out, j)).collect()
}

/// `Z + ε ⊙ |Z − Ẑ|`, one row of `ε` per future step.
pub fn rand_perturb(tape: &mut Tape, z: &[Var], zhat: &[Var], eps: &Noise) -> Result<Seq> {
    if z.len() != zhat.len() || z.len() != eps.rows {
        return Err(TensorError::Shape {
            op: "rand_perturb",
            lhs: vec![z.len(), zhat.len()],
            rhs: vec![eps.rows, eps.cols],
        });
    }
    z.iter()
        .zip(zhat)
        .enumerate()
        .map(|(i, (&zi, &hi))| {
            if tape.shape(zi) != [eps.cols] {
                return Err(TensorError::Shape {
                    op: "rand_perturb",
                    lhs: tape.shape(zi).to_vec(),
                    rhs: vec![eps.cols],
                });
            }
            let resid = tape.sub(zi, hi)?;
            let mag = tape.abs(resid)?;
            let e = tape.vector(eps.row(i))?;
            let shift = tape.mul(e, mag)?;
            tape.add(zi, shift)
        })
        .collect()
}

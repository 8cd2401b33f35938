use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::gaussian::{kl_terms, DiagGaussian};
use crate::corpus::{EOU, UNK};
use crate::encoder::{EncoderConfig, HierEncoder, LstmCell, SeqTrace};
use crate::linalg::{log_softmax, Mat};
use crate::optim::{prefixed, Parameters, TensorRef};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VhredConfig {
    pub encoder: EncoderConfig,
    pub latent_dim: usize,
    /// Hidden width of the prior and posterior networks.
    pub mlp_hidden: usize,
    pub decoder_hidden: usize,
    pub word_dropout: f64,
}

impl VhredConfig {
    pub fn desk(vocab_size: usize) -> Self {
        VhredConfig {
            encoder: EncoderConfig::desk(vocab_size),
            latent_dim: 16,
            mlp_hidden: 64,
            decoder_hidden: 64,
            word_dropout: 0.25,
        }
    }

    pub fn paper(vocab_size: usize) -> Self {
        VhredConfig {
            encoder: EncoderConfig::paper(vocab_size),
            latent_dim: 100,
            mlp_hidden: 2000,
            decoder_hidden: 1000,
            word_dropout: 0.25,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let e = &self.encoder;
        let dims = [
            e.vocab_size,
            e.embed_dim,
            e.utterance_hidden,
            e.context_hidden,
            self.latent_dim,
            self.mlp_hidden,
            self.decoder_hidden,
        ];
        if dims.contains(&0) {
            return Err(Error::InvalidArgument("model dimensions must be positive".into()));
        }
        if e.vocab_size <= UNK as usize {
            return Err(Error::InvalidArgument(
                "vocabulary must include the reserved ids".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.word_dropout) {
            return Err(Error::InvalidArgument(format!(
                "word dropout rate {} outside [0, 1)",
                self.word_dropout
            )));
        }
        Ok(())
    }
}

/// One-hidden-layer tanh network.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    pub w1: Mat,
    pub b1: Vec<f64>,
    pub w2: Mat,
    pub b2: Vec<f64>,
}

pub(crate) struct MlpTrace {
    hidden: Vec<f64>,
    out: Vec<f64>,
}

impl Mlp {
    pub fn zeros(input: usize, hidden: usize, output: usize) -> Self {
        Mlp {
            w1: Mat::zeros(hidden, input),
            b1: vec![0.0; hidden],
            w2: Mat::zeros(output, hidden),
            b2: vec![0.0; output],
        }
    }

    pub fn new<R: Rng + ?Sized>(input: usize, hidden: usize, output: usize, rng: &mut R) -> Self {
        Mlp {
            w1: Mat::uniform(hidden, input, 0.1, rng),
            b1: vec![0.0; hidden],
            w2: Mat::uniform(output, hidden, 0.1, rng),
            b2: vec![0.0; output],
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w1.cols
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.w1.cols, self.w1.rows, self.w2.rows)
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        self.trace(x).out
    }

    pub(crate) fn trace(&self, x: &[f64]) -> MlpTrace {
        let mut hidden = self.b1.clone();
        self.w1.matvec_acc(x, &mut hidden);
        hidden.iter_mut().for_each(|v| *v = v.tanh());
        let mut out = self.b2.clone();
        self.w2.matvec_acc(&hidden, &mut out);
        MlpTrace { hidden, out }
    }

    pub(crate) fn backward(&self, x: &[f64], tr: &MlpTrace, d_out: &[f64], grads: &mut Mlp) -> Vec<f64> {
        grads.w2.add_outer(1.0, d_out, &tr.hidden);
        for (g, d) in grads.b2.iter_mut().zip(d_out) {
            *g += d;
        }
        let mut d_hidden = vec![0.0; tr.hidden.len()];
        self.w2.matvec_t_acc(d_out, &mut d_hidden);
        for (d, h) in d_hidden.iter_mut().zip(&tr.hidden) {
            *d *= 1.0 - h * h;
        }
        grads.w1.add_outer(1.0, &d_hidden, x);
        for (g, d) in grads.b1.iter_mut().zip(&d_hidden) {
            *g += d;
        }
        let mut dx = vec![0.0; x.len()];
        self.w1.matvec_t_acc(&d_hidden, &mut dx);
        dx
    }
}

impl Parameters for Mlp {
    fn tensors(&self) -> Vec<TensorRef<'_>> {
        vec![
            TensorRef {
                name: "w1".into(),
                shape: vec![self.w1.rows, self.w1.cols],
                data: &self.w1.data,
            },
            TensorRef {
                name: "b1".into(),
                shape: vec![self.b1.len()],
                data: &self.b1,
            },
            TensorRef {
                name: "w2".into(),
                shape: vec![self.w2.rows, self.w2.cols],
                data: &self.w2.data,
            },
            TensorRef {
                name: "b2".into(),
                shape: vec![self.b2.len()],
                data: &self.b2,
            },
        ]
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            &mut self.w1.data,
            &mut self.b1,
            &mut self.w2.data,
            &mut self.b2,
        ]
    }
}

/// Prior `P(z | context)` and approximate posterior
/// `Q(z | context, utterance)`, both emitting `[μ; log σ²]`.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentNets {
    pub prior: Mlp,
    pub posterior: Mlp,
    pub latent_dim: usize,
}

fn split_gaussian(out: &[f64], l: usize) -> Result<DiagGaussian> {
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("latent network output".into()));
    }
    DiagGaussian::from_log_var(out[..l].to_vec(), &out[l..])
}

impl LatentNets {
    pub fn new<R: Rng + ?Sized>(
        context_dim: usize,
        utterance_dim: usize,
        hidden: usize,
        latent_dim: usize,
        rng: &mut R,
    ) -> Self {
        LatentNets {
            prior: Mlp::new(context_dim, hidden, 2 * latent_dim, rng),
            posterior: Mlp::new(context_dim + utterance_dim, hidden, 2 * latent_dim, rng),
            latent_dim,
        }
    }

    pub fn zeros_like(&self) -> Self {
        LatentNets {
            prior: self.prior.zeros_like(),
            posterior: self.posterior.zeros_like(),
            latent_dim: self.latent_dim,
        }
    }

    pub fn prior_dist(&self, context: &[f64]) -> Result<DiagGaussian> {
        if context.len() != self.prior.input_dim() {
            return Err(Error::dim("prior input", self.prior.input_dim(), context.len()));
        }
        split_gaussian(&self.prior.forward(context), self.latent_dim)
    }

    pub fn posterior_dist(&self, context: &[f64], utterance: &[f64]) -> Result<DiagGaussian> {
        let x = [context, utterance].concat();
        if x.len() != self.posterior.input_dim() {
            return Err(Error::dim("posterior input", self.posterior.input_dim(), x.len()));
        }
        split_gaussian(&self.posterior.forward(&x), self.latent_dim)
    }
}

/// Decoder LSTM reading `[embedding(previous word); z; context]`, with a
/// softmax output layer over the vocabulary.
#[derive(Clone, Debug, PartialEq)]
pub struct DecoderParams {
    pub cell: LstmCell,
    pub output: Mat,
    pub output_bias: Vec<f64>,
    pub word_dropout: f64,
}

impl DecoderParams {
    pub fn zeros_like(&self) -> Self {
        DecoderParams {
            cell: self.cell.zeros_like(),
            output: Mat::zeros(self.output.rows, self.output.cols),
            output_bias: vec![0.0; self.output_bias.len()],
            word_dropout: self.word_dropout,
        }
    }
}

impl Parameters for DecoderParams {
    fn tensors(&self) -> Vec<TensorRef<'_>> {
        let mut out = prefixed("cell", self.cell.tensors());
        out.push(TensorRef {
            name: "output".into(),
            shape: vec![self.output.rows, self.output.cols],
            data: &self.output.data,
        });
        out.push(TensorRef {
            name: "output_bias".into(),
            shape: vec![self.output_bias.len()],
            data: &self.output_bias,
        });
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = self.cell.tensors_mut();
        out.push(&mut self.output.data);
        out.push(&mut self.output_bias);
        out
    }
}

/// A tokenized dialogue. Every utterance after the first is a prediction
/// target given the ones before it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Dialogue {
    pub utterances: Vec<Vec<u32>>,
}

impl Dialogue {
    pub fn new(utterances: Vec<Vec<u32>>) -> Self {
        Dialogue { utterances }
    }

    pub fn turns_to_predict(&self) -> usize {
        self.utterances.len().saturating_sub(1)
    }

    pub fn target_tokens(&self) -> usize {
        self.utterances.iter().skip(1).map(Vec::len).sum()
    }
}

/// Random quantities for one dialogue: latent noise and dropped decoder
/// inputs, one entry per predicted turn.
#[derive(Clone, Debug, PartialEq)]
pub struct DialogueDraws {
    pub noise: Vec<Vec<f64>>,
    pub dropped: Vec<Vec<bool>>,
}

impl DialogueDraws {
    /// Zero noise, nothing dropped.
    pub fn none(d: &Dialogue, latent_dim: usize) -> Self {
        DialogueDraws {
            noise: vec![vec![0.0; latent_dim]; d.turns_to_predict()],
            dropped: d.utterances[1..].iter().map(|u| vec![false; u.len()]).collect(),
        }
    }

    /// The number of values drawn does not depend on the dropout rate, so
    /// rate 0 consumes the stream exactly like any other rate.
    pub fn sample<R: Rng + ?Sized>(d: &Dialogue, latent_dim: usize, rate: f64, rng: &mut R) -> Self {
        let mut noise = Vec::with_capacity(d.turns_to_predict());
        let mut dropped = Vec::with_capacity(d.turns_to_predict());
        for u in d.utterances.iter().skip(1) {
            noise.push((0..latent_dim).map(|_| rng.sample(StandardNormal)).collect());
            dropped.push((0..u.len()).map(|_| rng.random::<f64>() < rate).collect());
        }
        DialogueDraws { noise, dropped }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ElboTerms {
    /// Sum of target-token log-probabilities.
    pub recon: f64,
    pub kl: f64,
    /// `recon - anneal_w * kl`
    pub objective: f64,
}

impl ElboTerms {
    pub fn add(&mut self, o: &ElboTerms) {
        self.recon += o.recon;
        self.kl += o.kl;
        self.objective += o.objective;
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Vhred {
    pub config: VhredConfig,
    /// Its embedding table is shared with the decoder.
    pub encoder: HierEncoder,
    pub latent: LatentNets,
    pub decoder: DecoderParams,
}

impl Vhred {
    pub fn new<R: Rng + ?Sized>(config: VhredConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let e = config.encoder;
        let encoder = HierEncoder::new(e, rng);
        let latent = LatentNets::new(
            e.context_hidden,
            e.utterance_hidden,
            config.mlp_hidden,
            config.latent_dim,
            rng,
        );
        let dec_in = e.embed_dim + config.latent_dim + e.context_hidden;
        let decoder = DecoderParams {
            cell: LstmCell::new(dec_in, config.decoder_hidden, e.layer_norm, rng),
            output: Mat::uniform(e.vocab_size, config.decoder_hidden, 0.1, rng),
            output_bias: vec![0.0; e.vocab_size],
            word_dropout: config.word_dropout,
        };
        Ok(Vhred {
            config,
            encoder,
            latent,
            decoder,
        })
    }

    pub fn zeros_like(&self) -> Self {
        Vhred {
            config: self.config,
            encoder: self.encoder.zeros_like(),
            latent: self.latent.zeros_like(),
            decoder: self.decoder.zeros_like(),
        }
    }

    /// Decoder input ids for a target utterance: end-of-utterance as the
    /// start symbol, then the target shifted right, dropped words as `<unk>`.
    pub fn decoder_inputs(target: &[u32], dropped: &[bool]) -> Vec<u32> {
        let mut ids = Vec::with_capacity(target.len());
        ids.push(EOU);
        for k in 1..target.len() {
            ids.push(if dropped[k] { UNK } else { target[k - 1] });
        }
        ids
    }

    /// Per-step log-probability vectors of the decoder under teacher forcing.
    pub fn decoder_log_probs(&self, inputs: &[u32], z: &[f64], context: &[f64]) -> Result<Vec<Vec<f64>>> {
        let (_, trace) = self.run_decoder(inputs, z, context)?;
        Ok(trace
            .steps
            .iter()
            .map(|s| log_softmax(&self.logits(&s.h)))
            .collect())
    }

    fn logits(&self, h: &[f64]) -> Vec<f64> {
        let mut logits = self.decoder.output_bias.clone();
        self.decoder.output.matvec_acc(h, &mut logits);
        logits
    }

    fn run_decoder(&self, inputs: &[u32], z: &[f64], context: &[f64]) -> Result<(Vec<Vec<f64>>, SeqTrace)> {
        let v = self.config.encoder.vocab_size;
        let xs = inputs
            .iter()
            .map(|&id| {
                if id as usize >= v {
                    return Err(Error::InvalidArgument(format!(
                        "token id {id} outside vocabulary of {v}"
                    )));
                }
                Ok([self.encoder.embedding.row(id as usize), z, context].concat())
            })
            .collect::<Result<Vec<_>>>()?;
        let trace = self.decoder.cell.run(&xs)?;
        Ok((xs, trace))
    }

    fn check_draws(&self, d: &Dialogue, draws: &DialogueDraws) -> Result<()> {
        if d.utterances.len() < 2 {
            return Err(Error::InvalidArgument(
                "a dialogue needs at least two utterances to predict one".into(),
            ));
        }
        let n = d.turns_to_predict();
        if draws.noise.len() != n || draws.dropped.len() != n {
            return Err(Error::dim("per-turn draws", n, draws.noise.len()));
        }
        for (k, u) in d.utterances[1..].iter().enumerate() {
            if draws.noise[k].len() != self.config.latent_dim {
                return Err(Error::dim("latent noise", self.config.latent_dim, draws.noise[k].len()));
            }
            if draws.dropped[k].len() != u.len() {
                return Err(Error::dim("dropout mask", u.len(), draws.dropped[k].len()));
            }
        }
        Ok(())
    }

    /// ELBO terms of one dialogue.
    pub fn dialogue_elbo(&self, d: &Dialogue, draws: &DialogueDraws, anneal_w: f64) -> Result<ElboTerms> {
        self.elbo_impl(d, draws, anneal_w, None)
    }

    /// ELBO terms of one dialogue; adds the gradient of `-objective` to
    /// `grads`.
    pub fn dialogue_elbo_grad(
        &self,
        d: &Dialogue,
        draws: &DialogueDraws,
        anneal_w: f64,
        grads: &mut Vhred,
    ) -> Result<ElboTerms> {
        self.elbo_impl(d, draws, anneal_w, Some(grads))
    }

    fn elbo_impl(
        &self,
        d: &Dialogue,
        draws: &DialogueDraws,
        w: f64,
        mut grads: Option<&mut Vhred>,
    ) -> Result<ElboTerms> {
        self.check_draws(d, draws)?;
        let l = self.config.latent_dim;
        let emb = self.config.encoder.embed_dim;
        let cd = self.config.encoder.context_hidden;
        let trace = self.encoder.trace_dialogue(&d.utterances)?;
        let n = d.utterances.len();
        let mut d_ctx_hidden = vec![vec![0.0; cd]; n];
        let mut d_utt_extra = vec![vec![0.0; self.encoder.config.utterance_hidden]; n];
        let mut terms = ElboTerms::default();

        for t in 1..n {
            let ctx = trace.context_hidden(t - 1);
            let utt = trace.utterances[t].output();
            let post_in = [ctx, utt].concat();
            let prior_tr = self.latent.prior.trace(ctx);
            let post_tr = self.latent.posterior.trace(&post_in);
            let p = split_gaussian(&prior_tr.out, l)?;
            let q = split_gaussian(&post_tr.out, l)?;
            let kl = kl_terms(&q.mean, &q.var, &p.mean, &p.var);

            let eps = &draws.noise[t - 1];
            let sd_q: Vec<f64> = post_tr.out[l..].iter().map(|lv| (0.5 * lv).exp()).collect();
            let z: Vec<f64> = (0..l).map(|i| q.mean[i] + sd_q[i] * eps[i]).collect();

            let target = &d.utterances[t];
            let inputs = Self::decoder_inputs(target, &draws.dropped[t - 1]);
            let (_, dec) = self.run_decoder(&inputs, &z, ctx)?;
            let mut recon = 0.0;
            let mut d_hidden = Vec::with_capacity(target.len());
            for (k, &y) in target.iter().enumerate() {
                let h = &dec.steps[k].h;
                let lp = log_softmax(&self.logits(h));
                recon += lp[y as usize];
                if let Some(g) = grads.as_deref_mut() {
                    let mut d_logits: Vec<f64> = lp.iter().map(|v| v.exp()).collect();
                    d_logits[y as usize] -= 1.0;
                    g.decoder.output.add_outer(1.0, &d_logits, h);
                    for (b, dl) in g.decoder.output_bias.iter_mut().zip(&d_logits) {
                        *b += dl;
                    }
                    let mut dh = vec![0.0; h.len()];
                    self.decoder.output.matvec_t_acc(&d_logits, &mut dh);
                    d_hidden.push(dh);
                }
            }
            terms.add(&ElboTerms {
                recon,
                kl,
                objective: recon - w * kl,
            });

            let Some(g) = grads.as_deref_mut() else {
                continue;
            };
            let dxs = self.decoder.cell.backward_seq(&dec, &d_hidden, &mut g.decoder.cell);
            let mut dz = vec![0.0; l];
            let mut dctx = vec![0.0; cd];
            for (id, dx) in inputs.iter().zip(&dxs) {
                for (ge, de) in g.encoder.embedding.row_mut(*id as usize).iter_mut().zip(&dx[..emb]) {
                    *ge += de;
                }
                for (a, b) in dz.iter_mut().zip(&dx[emb..emb + l]) {
                    *a += b;
                }
                for (a, b) in dctx.iter_mut().zip(&dx[emb + l..]) {
                    *a += b;
                }
            }

            let mut d_post = vec![0.0; 2 * l];
            let mut d_prior = vec![0.0; 2 * l];
            for i in 0..l {
                let diff = q.mean[i] - p.mean[i];
                let vp = p.var[i];
                let vq = q.var[i];
                d_post[i] = dz[i] + w * diff / vp;
                d_prior[i] = -w * diff / vp;
                d_post[l + i] = dz[i] * eps[i] * 0.5 * sd_q[i] + w * 0.5 * (vq / vp - 1.0);
                d_prior[l + i] = w * 0.5 * (1.0 - (vq + diff * diff) / vp);
            }
            let d_post_in = self
                .latent
                .posterior
                .backward(&post_in, &post_tr, &d_post, &mut g.latent.posterior);
            let d_prior_in = self
                .latent
                .prior
                .backward(ctx, &prior_tr, &d_prior, &mut g.latent.prior);
            for i in 0..cd {
                d_ctx_hidden[t - 1][i] += dctx[i] + d_post_in[i] + d_prior_in[i];
            }
            for (a, b) in d_utt_extra[t].iter_mut().zip(&d_post_in[cd..]) {
                *a += b;
            }
        }

        if let Some(g) = grads {
            self.encoder
                .backward_dialogue(&trace, &d_ctx_hidden, Some(&d_utt_extra), &mut g.encoder);
        }
        Ok(terms)
    }
}

impl Parameters for Vhred {
    fn tensors(&self) -> Vec<TensorRef<'_>> {
        let mut out = prefixed("encoder", self.encoder.tensors());
        out.extend(prefixed("prior", self.latent.prior.tensors()));
        out.extend(prefixed("posterior", self.latent.posterior.tensors()));
        out.extend(prefixed("decoder", self.decoder.tensors()));
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = self.encoder.tensors_mut();
        out.extend(self.latent.prior.tensors_mut());
        out.extend(self.latent.posterior.tensors_mut());
        out.extend(self.decoder.tensors_mut());
        out
    }
}

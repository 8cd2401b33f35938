use rand::Rng;
use serde::{Deserialize, Serialize};

use super::checkpoint::TensorFile;
use super::lstm::{LstmCell, SeqTrace};
use crate::corpus::{EvalExample, Utterance};
use crate::linalg::Mat;
use crate::optim::{prefixed, Parameters, TensorRef};
use crate::par::{self, Execution};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub utterance_hidden: usize,
    /// Output dimension of every encoded vector.
    pub context_hidden: usize,
    pub layer_norm: bool,
}

impl EncoderConfig {
    /// Small sizes that train in seconds on a laptop.
    pub fn desk(vocab_size: usize) -> Self {
        EncoderConfig {
            vocab_size,
            embed_dim: 32,
            utterance_hidden: 64,
            context_hidden: 64,
            layer_norm: true,
        }
    }

    /// Context embedding of 2000 dimensions, as used for the published model.
    pub fn paper(vocab_size: usize) -> Self {
        EncoderConfig {
            vocab_size,
            embed_dim: 300,
            utterance_hidden: 1000,
            context_hidden: 2000,
            layer_norm: true,
        }
    }
}

/// Context, reference and model-response vectors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingTriple {
    pub context: Vec<f64>,
    pub reference: Vec<f64>,
    pub response: Vec<f64>,
}

impl EmbeddingTriple {
    pub fn new(context: Vec<f64>, reference: Vec<f64>, response: Vec<f64>) -> Result<Self> {
        let d = context.len();
        if reference.len() != d {
            return Err(Error::dim("reference embedding", d, reference.len()));
        }
        if response.len() != d {
            return Err(Error::dim("response embedding", d, response.len()));
        }
        let t = EmbeddingTriple {
            context,
            reference,
            response,
        };
        if !t.vectors().iter().all(|v| v.iter().all(|x| x.is_finite())) {
            return Err(Error::NonFinite("embedding component".into()));
        }
        Ok(t)
    }

    pub fn dim(&self) -> usize {
        self.context.len()
    }

    pub fn vectors(&self) -> [&[f64]; 3] {
        [&self.context, &self.reference, &self.response]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HierEncoder {
    pub config: EncoderConfig,
    /// `vocab_size × embed_dim`
    pub embedding: Mat,
    pub utterance: LstmCell,
    pub context: LstmCell,
}

/// Forward record of one utterance through the lower LSTM.
#[derive(Clone, Debug)]
pub struct UtteranceTrace {
    pub tokens: Vec<u32>,
    pub trace: SeqTrace,
}

impl UtteranceTrace {
    pub fn output(&self) -> &[f64] {
        self.trace.last_hidden().expect("utterances are non-empty")
    }
}

/// Forward record of a dialogue through both levels.
#[derive(Clone, Debug)]
pub struct DialogueTrace {
    pub utterances: Vec<UtteranceTrace>,
    pub context: SeqTrace,
}

impl DialogueTrace {
    /// Context-level hidden state after utterance `t`.
    pub fn context_hidden(&self, t: usize) -> &[f64] {
        self.context.hidden(t)
    }

    pub fn output(&self) -> &[f64] {
        self.context.last_hidden().expect("dialogues are non-empty")
    }
}

impl HierEncoder {
    pub fn new<R: Rng + ?Sized>(config: EncoderConfig, rng: &mut R) -> Self {
        HierEncoder {
            config,
            embedding: Mat::uniform(config.vocab_size, config.embed_dim, 0.1, rng),
            utterance: LstmCell::new(
                config.embed_dim,
                config.utterance_hidden,
                config.layer_norm,
                rng,
            ),
            context: LstmCell::new(
                config.utterance_hidden,
                config.context_hidden,
                config.layer_norm,
                rng,
            ),
        }
    }

    pub fn zeros(config: EncoderConfig) -> Self {
        HierEncoder {
            config,
            embedding: Mat::zeros(config.vocab_size, config.embed_dim),
            utterance: LstmCell::zeros(
                config.embed_dim,
                config.utterance_hidden,
                config.layer_norm,
            ),
            context: LstmCell::zeros(
                config.utterance_hidden,
                config.context_hidden,
                config.layer_norm,
            ),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.config)
    }

    pub fn output_dim(&self) -> usize {
        self.config.context_hidden
    }

    pub fn trace_utterance(&self, tokens: &[u32]) -> Result<UtteranceTrace> {
        if tokens.is_empty() {
            return Err(Error::InvalidArgument("cannot encode an empty utterance".into()));
        }
        let mut inputs = Vec::with_capacity(tokens.len());
        for &t in tokens {
            if t as usize >= self.config.vocab_size {
                return Err(Error::InvalidArgument(format!(
                    "token id {t} outside vocabulary of {}",
                    self.config.vocab_size
                )));
            }
            inputs.push(self.embedding.row(t as usize));
        }
        Ok(UtteranceTrace {
            tokens: tokens.to_vec(),
            trace: self.utterance.run(&inputs)?,
        })
    }

    /// Hidden state of the utterance LSTM after the final token.
    pub fn encode_utterance(&self, tokens: &[u32]) -> Result<Vec<f64>> {
        Ok(self.trace_utterance(tokens)?.output().to_vec())
    }

    /// Last hidden state of the context LSTM over utterance vectors.
    pub fn encode_context<V: AsRef<[f64]>>(&self, utterance_vectors: &[V]) -> Result<Vec<f64>> {
        if utterance_vectors.is_empty() {
            return Err(Error::InvalidArgument("cannot encode an empty context".into()));
        }
        let trace = self.context.run(utterance_vectors)?;
        Ok(trace.last_hidden().expect("non-empty").to_vec())
    }

    pub fn trace_dialogue<T: AsRef<[u32]>>(&self, utterances: &[T]) -> Result<DialogueTrace> {
        if utterances.is_empty() {
            return Err(Error::InvalidArgument("cannot encode an empty context".into()));
        }
        let utts = utterances
            .iter()
            .map(|u| self.trace_utterance(u.as_ref()))
            .collect::<Result<Vec<_>>>()?;
        let vecs: Vec<&[f64]> = utts.iter().map(UtteranceTrace::output).collect();
        let context = self.context.run(&vecs)?;
        Ok(DialogueTrace {
            utterances: utts,
            context,
        })
    }

    pub fn encode_dialogue<T: AsRef<[u32]>>(&self, utterances: &[T]) -> Result<Vec<f64>> {
        Ok(self.trace_dialogue(utterances)?.output().to_vec())
    }

    /// Encodes a tokenized example. Each response goes through the same
    /// hierarchical stack as a one-utterance context.
    pub fn encode_triple(&self, ex: &EvalExample) -> Result<EmbeddingTriple> {
        let toks = |u: &Utterance| -> Result<Vec<u32>> {
            u.tokens.clone().ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "example `{}` has not been tokenized",
                    ex.context.context_id
                ))
            })
        };
        let context: Vec<Vec<u32>> = ex
            .context
            .utterances
            .iter()
            .map(toks)
            .collect::<Result<_>>()?;
        let c = self.encode_dialogue(&context)?;
        let r = self.encode_dialogue(&[toks(&ex.reference_response)?])?;
        let r_hat = self.encode_dialogue(&[toks(&ex.model_response)?])?;
        EmbeddingTriple::new(c, r, r_hat)
    }

    pub fn encode_triples(
        &self,
        examples: &[EvalExample],
        exec: Execution,
    ) -> Result<Vec<EmbeddingTriple>> {
        par::try_map(exec, examples, |ex| self.encode_triple(ex))
    }

    pub fn backward_utterance(&self, trace: &UtteranceTrace, d_out: &[f64], grads: &mut HierEncoder) {
        let n = trace.trace.steps.len();
        let mut d_hidden = vec![vec![0.0; self.config.utterance_hidden]; n];
        d_hidden[n - 1].copy_from_slice(d_out);
        let d_inputs = self
            .utterance
            .backward_seq(&trace.trace, &d_hidden, &mut grads.utterance);
        for (tok, dx) in trace.tokens.iter().zip(d_inputs) {
            for (g, d) in grads.embedding.row_mut(*tok as usize).iter_mut().zip(dx) {
                *g += d;
            }
        }
    }

    /// Backpropagates gradients on every context-level hidden state plus any
    /// extra gradients on the utterance vectors themselves.
    pub fn backward_dialogue(
        &self,
        trace: &DialogueTrace,
        d_context_hidden: &[Vec<f64>],
        d_utterance_extra: Option<&[Vec<f64>]>,
        grads: &mut HierEncoder,
    ) {
        let d_utts = self
            .context
            .backward_seq(&trace.context, d_context_hidden, &mut grads.context);
        for (k, (ut, mut d)) in trace.utterances.iter().zip(d_utts).enumerate() {
            if let Some(extra) = d_utterance_extra {
                for (a, b) in d.iter_mut().zip(&extra[k]) {
                    *a += b;
                }
            }
            self.backward_utterance(ut, &d, grads);
        }
    }

    pub fn to_tensor_file(&self, prefix: &str, file: &mut TensorFile) {
        let c = &self.config;
        file.push_scalar(format!("{prefix}.config.vocab_size"), c.vocab_size as f64);
        file.push_scalar(format!("{prefix}.config.embed_dim"), c.embed_dim as f64);
        file.push_scalar(
            format!("{prefix}.config.utterance_hidden"),
            c.utterance_hidden as f64,
        );
        file.push_scalar(
            format!("{prefix}.config.context_hidden"),
            c.context_hidden as f64,
        );
        file.push_scalar(
            format!("{prefix}.config.layer_norm"),
            if c.layer_norm { 1.0 } else { 0.0 },
        );
        file.push_params(prefix, self);
    }

    pub fn from_tensor_file(prefix: &str, file: &TensorFile) -> Result<Self> {
        let config = EncoderConfig {
            vocab_size: file.usize(&format!("{prefix}.config.vocab_size"))?,
            embed_dim: file.usize(&format!("{prefix}.config.embed_dim"))?,
            utterance_hidden: file.usize(&format!("{prefix}.config.utterance_hidden"))?,
            context_hidden: file.usize(&format!("{prefix}.config.context_hidden"))?,
            layer_norm: file.scalar(&format!("{prefix}.config.layer_norm"))? != 0.0,
        };
        let mut enc = HierEncoder::zeros(config);
        file.load_params(prefix, &mut enc)?;
        Ok(enc)
    }
}

impl Parameters for HierEncoder {
    fn tensors(&self) -> Vec<TensorRef<'_>> {
        let mut out = vec![TensorRef {
            name: "embedding".into(),
            shape: vec![self.embedding.rows, self.embedding.cols],
            data: &self.embedding.data,
        }];
        out.extend(prefixed("utterance", self.utterance.tensors()));
        out.extend(prefixed("context", self.context.tensors()));
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = vec![&mut self.embedding.data];
        out.extend(self.utterance.tensors_mut());
        out.extend(self.context.tensors_mut());
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::LstmState;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny(layer_norm: bool) -> HierEncoder {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        HierEncoder::new(
            EncoderConfig {
                vocab_size: 7,
                embed_dim: 3,
                utterance_hidden: 4,
                context_hidden: 5,
                layer_norm,
            },
            &mut rng,
        )
    }

    #[test]
    fn single_token_is_one_step() {
        let enc = tiny(true);
        let v = enc.encode_utterance(&[4]).unwrap();
        let s = enc
            .utterance
            .step(enc.embedding.row(4), &LstmState::zeros(4))
            .unwrap();
        assert_eq!(v, s.h);
    }

    #[test]
    fn one_utterance_context_is_one_step() {
        let enc = tiny(true);
        let u = vec![0.3, -0.2, 0.1, 0.5];
        let c = enc.encode_context(&[u.clone()]).unwrap();
        let s = enc.context.step(&u, &LstmState::zeros(5)).unwrap();
        assert_eq!(c, s.h);
    }

    #[test]
    fn scalar_three_token_trace() {
        // 1-dim everything, no normalization, hand-unrolled.
        let mut enc = HierEncoder::zeros(EncoderConfig {
            vocab_size: 3,
            embed_dim: 1,
            utterance_hidden: 1,
            context_hidden: 1,
            layer_norm: false,
        });
        enc.embedding.data = vec![0.5, -1.0, 2.0];
        enc.utterance.w_input.data = vec![0.4, 0.3, -0.6, 0.9];
        enc.utterance.w_recurrent.data = vec![-0.2, 0.5, 0.7, 0.1];
        enc.utterance.bias = vec![0.1, 1.0, 0.0, -0.3];

        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        let (mut h, mut c) = (0.0f64, 0.0f64);
        for &tok in &[2usize, 0, 1] {
            let x = [0.5, -1.0, 2.0][tok];
            let i = sig(0.4 * x - 0.2 * h + 0.1);
            let f = sig(0.3 * x + 0.5 * h + 1.0);
            let o = sig(-0.6 * x + 0.7 * h);
            let g = (0.9 * x + 0.1 * h - 0.3).tanh();
            c = f * c + i * g;
            h = o * c.tanh();
        }
        let v = enc.encode_utterance(&[2, 0, 1]).unwrap();
        assert!((v[0] - h).abs() < 1e-15);
    }

    #[test]
    fn context_order_matters() {
        let enc = tiny(true);
        let a = enc.encode_utterance(&[1, 2, 3]).unwrap();
        let b = enc.encode_utterance(&[5, 6]).unwrap();
        let ab = enc.encode_context(&[a.clone(), b.clone()]).unwrap();
        let ba = enc.encode_context(&[b, a]).unwrap();
        let diff: f64 = ab.iter().zip(&ba).map(|(x, y)| (x - y).abs()).sum();
        assert!(diff > 1e-6);
    }

    #[test]
    fn deterministic_and_errors() {
        let enc = tiny(false);
        assert_eq!(
            enc.encode_dialogue(&[vec![1, 2], vec![3]]).unwrap(),
            enc.encode_dialogue(&[vec![1, 2], vec![3]]).unwrap()
        );
        assert!(enc.encode_utterance(&[]).is_err());
        assert!(enc.encode_utterance(&[9]).is_err());
        assert!(enc.encode_context::<Vec<f64>>(&[]).is_err());
    }

    #[test]
    fn checkpoint_round_trip() {
        let enc = tiny(true);
        let mut f = TensorFile::default();
        enc.to_tensor_file("encoder", &mut f);
        let g = TensorFile::from_bytes(&f.to_bytes()).unwrap();
        let back = HierEncoder::from_tensor_file("encoder", &g).unwrap();
        assert_eq!(back.config, enc.config);
        for (a, b) in back.tensors().iter().zip(enc.tensors()) {
            assert_eq!(a.name, b.name);
            for (x, y) in a.data.iter().zip(b.data) {
                assert_eq!(x, y);
            }
        }
    }

    fn grad_check(layer_norm: bool) {
        let mut enc = tiny(layer_norm);
        enc.embedding.data.iter_mut().for_each(|v| *v *= 10.0);
        let dialogue = vec![vec![4u32, 5, 2], vec![6, 2], vec![5, 4, 2]];
        // weighted sum of the final context state
        let weights = [0.7, -1.3, 0.4, 2.0, -0.5, 1.1];
        let loss = |e: &HierEncoder| {
            let out = e.encode_dialogue(&dialogue).unwrap();
            out.iter().zip(weights).map(|(o, w)| o * w).sum::<f64>()
        };
        let trace = enc.trace_dialogue(&dialogue).unwrap();
        let h = enc.config.context_hidden;
        let mut d_ctx = vec![vec![0.0; h]; dialogue.len()];
        d_ctx[dialogue.len() - 1].copy_from_slice(&weights[..h]);
        let mut grads = enc.zeros_like();
        enc.backward_dialogue(&trace, &d_ctx, None, &mut grads);
        let report = crate::gradcheck::check(&enc, &grads, loss, 1e-4, 1e-6);
        assert!(report.max_rel_error < 1e-4, "{report:?}");
    }

    #[test]
    fn gradient_matches_finite_differences() {
        grad_check(false);
    }

    #[test]
    fn gradient_matches_finite_differences_with_layer_norm() {
        grad_check(true);
    }
}

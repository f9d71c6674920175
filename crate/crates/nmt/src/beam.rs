//! Beam search over any step-wise next-token model, and linear ensembles.

use fsmt_core::{Error, Result};
use rayon::prelude::*;

use crate::model::{decode_step, start_decoding, DecoderState};
use crate::params::Params;
use crate::vocab::Vocab;

/// A left-to-right model that yields a next-token distribution per step.
pub trait StepModel: Sync {
    type State: Clone + Send;
    fn vocab_size(&self) -> usize;
    fn eos(&self) -> u32;
    fn bos(&self) -> u32;
    fn start(&self, src: &[u32]) -> Self::State;
    /// Feeds `prev`; returns the new state and a distribution over the vocabulary.
    fn step(&self, state: &Self::State, prev: u32) -> (Self::State, Vec<f64>);
}

impl StepModel for Params {
    type State = DecoderState;

    fn vocab_size(&self) -> usize {
        self.config.vocab.len()
    }

    fn eos(&self) -> u32 {
        self.config.vocab.eos()
    }

    fn bos(&self) -> u32 {
        self.config.vocab.bos()
    }

    fn start(&self, src: &[u32]) -> DecoderState {
        start_decoding(self, src)
    }

    fn step(&self, state: &DecoderState, prev: u32) -> (DecoderState, Vec<f64>) {
        decode_step(self, state, prev)
    }
}

/// Per-step averaging of member distributions. With `log_space` the members'
/// log-probabilities are averaged and renormalized instead.
pub struct Ensemble<'a, M> {
    members: Vec<&'a M>,
    pub log_space: bool,
}

impl<'a> Ensemble<'a, Params> {
    pub fn new(members: Vec<&'a Params>) -> Result<Self> {
        let first = members
            .first()
            .ok_or_else(|| Error::Argument("ensemble needs at least one model".into()))?;
        if members.iter().any(|m| m.config.vocab != first.config.vocab) {
            return Err(Error::Argument("ensemble members must share one vocabulary".into()));
        }
        Ok(Ensemble {
            members,
            log_space: false,
        })
    }

    pub fn vocab(&self) -> &Vocab {
        &self.members[0].config.vocab
    }
}

impl<'a, M: StepModel> Ensemble<'a, M> {
    /// Members need not be `Params`; the caller vouches for a shared vocabulary.
    pub fn from_models(members: Vec<&'a M>) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::Argument("ensemble needs at least one model".into()));
        }
        Ok(Ensemble {
            members,
            log_space: false,
        })
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

impl<M: StepModel> StepModel for Ensemble<'_, M> {
    type State = Vec<M::State>;

    fn vocab_size(&self) -> usize {
        self.members[0].vocab_size()
    }

    fn eos(&self) -> u32 {
        self.members[0].eos()
    }

    fn bos(&self) -> u32 {
        self.members[0].bos()
    }

    fn start(&self, src: &[u32]) -> Self::State {
        self.members.iter().map(|m| m.start(src)).collect()
    }

    fn step(&self, state: &Self::State, prev: u32) -> (Self::State, Vec<f64>) {
        let k = self.members.len() as f64;
        let mut next = Vec::with_capacity(state.len());
        let mut acc = vec![0.0; self.vocab_size()];
        for (m, s) in self.members.iter().zip(state) {
            let (ns, p) = m.step(s, prev);
            next.push(ns);
            for (a, x) in acc.iter_mut().zip(&p) {
                *a += if self.log_space { x.ln() } else { *x };
            }
        }
        if self.log_space {
            let mx = acc.iter().map(|a| a / k).fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for a in acc.iter_mut() {
                *a = (*a / k - mx).exp();
                z += *a;
            }
            acc.iter_mut().for_each(|a| *a /= z);
        } else {
            acc.iter_mut().for_each(|a| *a /= k);
        }
        (next, acc)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis {
    /// Emitted ids, excluding `</s>`.
    pub tokens: Vec<u32>,
    pub log_prob: f64,
    /// False when the length cap cut the hypothesis off.
    pub finished: bool,
}

/// Default length cap for a source of `n` tokens.
pub fn max_output_len(n: usize) -> usize {
    2 * n + 10
}

/// Beam search on summed log-probabilities, no length normalization. Each
/// step keeps the `beam` best expansions; those ending in `</s>` retire.
/// Search ends once no live hypothesis can beat the best retired one.
pub fn beam_search<M: StepModel>(model: &M, src: &[u32], beam: usize, max_len: usize) -> Result<Hypothesis> {
    if beam == 0 {
        return Err(Error::Argument("beam must be at least 1".into()));
    }
    let eos = model.eos();
    struct Live<S> {
        tokens: Vec<u32>,
        log_prob: f64,
        state: S,
        prev: u32,
    }
    let mut alive = vec![Live {
        tokens: Vec::new(),
        log_prob: 0.0,
        state: model.start(src),
        prev: model.bos(),
    }];
    let mut finished: Option<Hypothesis> = None;
    for t in 0..max_len.max(1) {
        let mut cands: Vec<(f64, usize, u32)> = Vec::new();
        let mut states = Vec::with_capacity(alive.len());
        for (h, live) in alive.iter().enumerate() {
            let (ns, probs) = model.step(&live.state, live.prev);
            states.push(ns);
            for (v, &p) in probs.iter().enumerate() {
                if p > 0.0 {
                    cands.push((live.log_prob + p.ln(), h, v as u32));
                }
            }
        }
        cands.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        cands.truncate(beam);
        let last_step = t + 1 >= max_len;
        let mut next = Vec::with_capacity(beam);
        for (score, h, v) in cands {
            let mut tokens = alive[h].tokens.clone();
            if v == eos || last_step {
                if v != eos {
                    tokens.push(v);
                }
                let hyp = Hypothesis {
                    tokens,
                    log_prob: score,
                    finished: v == eos,
                };
                if finished.as_ref().is_none_or(|f| better(&hyp, f)) {
                    finished = Some(hyp);
                }
            } else {
                tokens.push(v);
                next.push(Live {
                    tokens,
                    log_prob: score,
                    state: states[h].clone(),
                    prev: v,
                });
            }
        }
        alive = next;
        let best_alive = alive.first().map(|l| l.log_prob);
        match (best_alive, &finished) {
            (None, _) => break,
            (Some(a), Some(f)) if f.log_prob >= a => break,
            _ => {}
        }
    }
    finished.ok_or_else(|| Error::Argument("model assigns zero probability to every token".into()))
}

/// Completed hypotheses beat truncated ones; otherwise the higher score wins
/// and earlier hypotheses win ties.
fn better(a: &Hypothesis, b: &Hypothesis) -> bool {
    match (a.finished, b.finished) {
        (true, false) => true,
        (false, true) => false,
        _ => a.log_prob > b.log_prob,
    }
}

/// Decodes many sources in parallel with the default length cap.
pub fn decode_all<M: StepModel>(model: &M, sources: &[Vec<u32>], beam: usize) -> Result<Vec<Hypothesis>> {
    sources
        .par_iter()
        .map(|s| beam_search(model, s, beam, max_output_len(s.len())))
        .collect()
}

use crate::data::{BOS, EOS};
use crate::error::{Error, Result};

/// Anything that can extend a set of partial hypotheses by one token.
pub trait StepScorer {
    type State: Clone;

    fn initial(&mut self) -> Result<Self::State>;

    /// For each hypothesis, the log-probabilities of every next token and
    /// the state after feeding `prev`.
    fn step(&mut self, states: &[Self::State], prev: &[usize]) -> Result<Vec<(Vec<f64>, Self::State)>>;
}

#[derive(Clone, Debug, PartialEq)]
pub struct Hypothesis {
    /// Emitted ids; ends with `EOS` iff `finished`.
    pub tokens: Vec<usize>,
    pub log_prob: f64,
    pub finished: bool,
}

impl Hypothesis {
    /// Log-probability per emitted token (the end marker counts).
    pub fn normalized(&self) -> f64 {
        self.log_prob / self.tokens.len().max(1) as f64
    }

    pub fn score(&self, normalize: bool) -> f64 {
        if normalize {
            self.normalized()
        } else {
            self.log_prob
        }
    }

    /// Tokens without the end marker.
    pub fn output(&self) -> &[usize] {
        match self.tokens.split_last() {
            Some((&EOS, rest)) if self.finished => rest,
            _ => &self.tokens,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct BeamOptions {
    pub beam_size: usize,
    pub max_len: usize,
    pub normalize: bool,
}

/// Keeps the `beam_size` best one-token extensions at every step; an
/// extension ending in `EOS` leaves the beam. Stops when the beam is empty
/// or `max_len` tokens were emitted, then returns the best hypothesis
/// among finished and truncated ones. Ties go to the earlier hypothesis
/// and the smaller token id, so `beam_size = 1` is greedy argmax.
///
/// A wider beam can prune the greedy path early, so for `beam_size > 1`
/// the greedy result also competes in the final pick; a wider beam then
/// never scores below beam 1.
pub fn beam_decode<S: StepScorer>(scorer: &mut S, opts: BeamOptions) -> Result<Hypothesis> {
    if opts.beam_size == 0 || opts.max_len == 0 {
        return Err(Error::Invalid("beam size and maximum length must be at least 1".into()));
    }
    let greedy = if opts.beam_size > 1 {
        Some(search(scorer, BeamOptions { beam_size: 1, ..opts })?)
    } else {
        None
    };
    let best = search(scorer, opts)?;
    Ok(match greedy {
        Some(g) if g.score(opts.normalize) > best.score(opts.normalize) => g,
        _ => best,
    })
}

fn search<S: StepScorer>(scorer: &mut S, opts: BeamOptions) -> Result<Hypothesis> {
    let mut live: Vec<(Hypothesis, S::State)> = vec![(
        Hypothesis {
            tokens: Vec::new(),
            log_prob: 0.0,
            finished: false,
        },
        scorer.initial()?,
    )];
    let mut done: Vec<Hypothesis> = Vec::new();

    for _ in 0..opts.max_len {
        if live.is_empty() {
            break;
        }
        let states: Vec<S::State> = live.iter().map(|(_, s)| s.clone()).collect();
        let prev: Vec<usize> = live
            .iter()
            .map(|(h, _)| h.tokens.last().copied().unwrap_or(BOS))
            .collect();
        let scored = scorer.step(&states, &prev)?;
        if scored.len() != live.len() {
            return Err(Error::Invalid("scorer returned the wrong number of rows".into()));
        }
        let mut cands: Vec<(f64, usize, usize)> = Vec::new();
        for (h, (lp, _)) in scored.iter().enumerate() {
            for (w, &l) in lp.iter().enumerate() {
                cands.push((live[h].0.log_prob + l, h, w));
            }
        }
        // every candidate has the same length, so raw scores rank them
        cands.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        cands.truncate(opts.beam_size);
        let mut next = Vec::with_capacity(cands.len());
        for (lp, h, w) in cands {
            let mut tokens = live[h].0.tokens.clone();
            tokens.push(w);
            let hyp = Hypothesis {
                tokens,
                log_prob: lp,
                finished: w == EOS,
            };
            if hyp.finished {
                done.push(hyp);
            } else {
                next.push((hyp, scored[h].1.clone()));
            }
        }
        live = next;
    }
    done.extend(live.into_iter().map(|(h, _)| h));
    done.into_iter()
        .reduce(|best, h| {
            if h.score(opts.normalize) > best.score(opts.normalize) {
                h
            } else {
                best
            }
        })
        .ok_or(Error::Empty("beam search produced no hypothesis"))
}

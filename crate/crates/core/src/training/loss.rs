use crate::data::Padded;
use crate::decoder::StepOutput;
use crate::error::{Error, Result};
use crate::numerics::{Graph, Var};

/// Mean negative log-likelihood per non-pad target token. `probs[m]` is
/// the distribution predicting column `m + 1` of `tgt`.
pub fn sequence_loss(g: &mut Graph, probs: &[Var], tgt: &Padded) -> Result<Var> {
    if probs.len() + 1 != tgt.cols {
        return Err(Error::shape("sequence_loss", &[probs.len() + 1], &[tgt.cols]));
    }
    let tokens = tgt.mask.iter().enumerate().filter(|(i, &m)| m && i % tgt.cols != 0).count();
    if tokens == 0 {
        return Err(Error::Empty("target tokens (all positions are padding)"));
    }
    let mut total: Option<Var> = None;
    for (m, &p) in probs.iter().enumerate() {
        let weights: Vec<f64> = tgt
            .column_mask(m + 1)
            .into_iter()
            .map(|k| if k { 1.0 } else { 0.0 })
            .collect();
        if weights.iter().all(|&w| w == 0.0) {
            continue;
        }
        let step = g.nll(p, &tgt.column(m + 1), &weights, tokens as f64)?;
        total = Some(match total {
            Some(t) => g.add(t, step)?,
            None => step,
        });
    }
    total.ok_or(Error::Empty("target tokens"))
}

pub fn output_probs(outputs: &[StepOutput]) -> Vec<Var> {
    outputs.iter().map(|o| o.probs).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{BOS, EOS};
    use crate::numerics::Tensor;

    #[test]
    fn uniform_distribution_costs_ln_v() {
        let mut g = Graph::new();
        let tgt = Padded::new(&[vec![BOS, 7, 9, EOS], vec![BOS, 5, EOS]]);
        let probs: Vec<Var> = (0..3)
            .map(|_| g.constant(Tensor::filled(&[2, 20], 0.05)))
            .collect();
        let loss = sequence_loss(&mut g, &probs, &tgt).unwrap();
        assert!((g.value(loss).item() - 20f64.ln()).abs() < 1e-12);
        assert!((20f64.ln() - 2.995732).abs() < 1e-6);
    }

    #[test]
    fn one_hot_correct_costs_nothing() {
        let mut g = Graph::new();
        let tgt = Padded::new(&[vec![BOS, 1, EOS]]);
        let mut a = Tensor::zeros(&[1, 4]);
        a.data_mut()[1] = 1.0;
        let mut b = Tensor::zeros(&[1, 4]);
        b.data_mut()[EOS] = 1.0;
        let probs = [g.constant(a), g.constant(b)];
        let loss = sequence_loss(&mut g, &probs, &tgt).unwrap();
        assert_eq!(g.value(loss).item(), 0.0);
    }

    #[test]
    fn masking_equals_truncation() {
        let mut g = Graph::new();
        let rows: Vec<Var> = (0..4)
            .map(|i| {
                let t = Tensor::from_rows(&[[0.1 + 0.1 * i as f64, 0.2, 0.3, 0.4 - 0.1 * i as f64]]);
                g.constant(t)
            })
            .collect();
        let long = Padded::new(&[vec![BOS, 1, 2, 3, EOS]]);
        let mut short = Padded::new(&[vec![BOS, 1, 2, 3, EOS]]);
        short.mask[3] = false;
        short.mask[4] = false;
        let cut = Padded::new(&[vec![BOS, 1, 2]]);
        let a = sequence_loss(&mut g, &rows, &short).unwrap();
        let b = sequence_loss(&mut g, &rows[..2], &cut).unwrap();
        assert_eq!(g.value(a).item(), g.value(b).item());
        let c = sequence_loss(&mut g, &rows, &long).unwrap();
        assert_ne!(g.value(a).item(), g.value(c).item());
    }

    #[test]
    fn all_pad_batch_is_an_error() {
        let mut g = Graph::new();
        let tgt = Padded::new(&[vec![BOS]]);
        assert!(sequence_loss(&mut g, &[], &tgt).is_err());
    }
}

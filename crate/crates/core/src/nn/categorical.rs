use rand::Rng;

use crate::error::{GbacError, Result};
use crate::nn::{Real, Tensor};

/// Draw from a categorical head.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CategoricalSample {
    pub action: usize,
    pub logprob: f64,
    pub entropy: f64,
}

/// Numerically stable log-softmax, evaluated in f64.
pub fn log_softmax<T: Real>(logits: &[T]) -> Vec<f64> {
    let max = logits
        .iter()
        .map(|v| v.as_f64())
        .fold(f64::NEG_INFINITY, f64::max);
    let lse = max
        + logits
            .iter()
            .map(|v| (v.as_f64() - max).exp())
            .sum::<f64>()
            .ln();
    logits.iter().map(|v| v.as_f64() - lse).collect()
}

/// `-sum p log p` from log-probabilities.
pub fn entropy(logp: &[f64]) -> f64 {
    -logp
        .iter()
        .map(|&l| if l == f64::NEG_INFINITY { 0.0 } else { l.exp() * l })
        .sum::<f64>()
}

pub fn argmax<T: Real>(values: &[T]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Inverse-CDF draw from the distribution given by `logp`.
pub fn sample_index<R: Rng + ?Sized>(logp: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &l) in logp.iter().enumerate() {
        acc += l.exp();
        if u < acc {
            return i;
        }
    }
    // rounding left the cumulative sum just below 1
    logp.iter()
        .enumerate()
        .rev()
        .find(|(_, l)| l.is_finite())
        .map_or(logp.len() - 1, |(i, _)| i)
}

fn check_logits<T: Real>(logits: &[T]) -> Result<()> {
    if logits.is_empty() {
        return Err(GbacError::Config("categorical head needs at least one logit".into()));
    }
    if let Some(i) = logits.iter().position(|v| !v.is_finite()) {
        return Err(GbacError::Numerical(format!(
            "non-finite logit {} at index {i}",
            logits[i]
        )));
    }
    Ok(())
}

/// Samples an action from `softmax(logits)`.
pub fn categorical<T: Real, R: Rng + ?Sized>(logits: &Tensor<T>, rng: &mut R) -> Result<CategoricalSample> {
    check_logits(logits.data())?;
    let logp = log_softmax(logits.data());
    let action = sample_index(&logp, rng);
    Ok(CategoricalSample {
        action,
        logprob: logp[action],
        entropy: entropy(&logp),
    })
}

/// Most likely action together with its log-probability and the entropy.
pub fn categorical_mode<T: Real>(logits: &Tensor<T>) -> Result<CategoricalSample> {
    check_logits(logits.data())?;
    let logp = log_softmax(logits.data());
    let action = argmax(&logp);
    Ok(CategoricalSample {
        action,
        logprob: logp[action],
        entropy: entropy(&logp),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn uniform_logits_have_log_a_entropy() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s = categorical(&Tensor::from_vec(&[6], vec![0.3f32; 6]).unwrap(), &mut rng).unwrap();
        assert!((s.entropy - 6f64.ln()).abs() < 1e-9);
        assert!((s.entropy - 1.7918).abs() < 1e-4);
    }

    #[test]
    fn one_hot_limit() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let logits = Tensor::from_vec(&[2], vec![1000.0f64, 0.0]).unwrap();
        for _ in 0..100 {
            let s = categorical(&logits, &mut rng).unwrap();
            assert_eq!(s.action, 0);
            assert!(s.entropy.abs() < 1e-12);
        }
    }

    #[test]
    fn two_outcome_entropy_by_direct_summation() {
        let logits = Tensor::from_vec(&[2], vec![1f64.ln(), 3f64.ln()]).unwrap();
        let logp = log_softmax(logits.data());
        assert!((logp[0].exp() - 0.25).abs() < 1e-12);
        assert!((logp[1].exp() - 0.75).abs() < 1e-12);
        let direct = -(0.25f64 * 0.25f64.ln() + 0.75 * 0.75f64.ln());
        assert!((entropy(&logp) - direct).abs() < 1e-12);
        assert!((direct - 0.5623).abs() < 1e-4);
    }

    #[test]
    fn non_finite_logits_are_numerical_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let logits = Tensor::from_vec(&[2], vec![f32::NAN, 0.0]).unwrap();
        assert!(matches!(categorical(&logits, &mut rng), Err(GbacError::Numerical(_))));
    }

    proptest! {
        #[test]
        fn softmax_normalised_and_entropy_bounded(logits in prop::collection::vec(-30.0f64..30.0, 1..12)) {
            let logp = log_softmax(&logits);
            let total: f64 = logp.iter().map(|l| l.exp()).sum();
            prop_assert!((total - 1.0).abs() < 1e-6);
            let h = entropy(&logp);
            prop_assert!(h >= -1e-12);
            prop_assert!(h <= (logits.len() as f64).ln() + 1e-9);
        }
    }
}

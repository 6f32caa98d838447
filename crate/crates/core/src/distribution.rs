//! Normalized probability vectors over a finite alphabet.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance used for normalization checks throughout the crate.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Distribution {
    probs: Vec<f64>,
}

impl Distribution {
    /// Validates that `probs` is non-empty, non-negative and sums to one.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidDistribution("empty alphabet".into()));
        }
        if let Some(p) = probs.iter().find(|p| !p.is_finite() || **p < 0.0) {
            return Err(Error::InvalidDistribution(format!(
                "entry {p} is negative or not finite"
            )));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > NORMALIZATION_TOLERANCE {
            return Err(Error::InvalidDistribution(format!("entries sum to {total}, not 1")));
        }
        Ok(Self { probs })
    }

    /// Normalizes non-negative weights. A zero total is reported as
    /// zero-probability evidence since that is how it arises in inference.
    pub fn from_weights(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidDistribution("empty alphabet".into()));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidDistribution(
                "weights must be finite and non-negative".into(),
            ));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::ZeroProbabilityEvidence);
        }
        Ok(Self {
            probs: weights.into_iter().map(|w| w / total).collect(),
        })
    }

    pub fn uniform(size: usize) -> Self {
        assert!(size > 0, "uniform distribution over an empty alphabet");
        Self {
            probs: vec![1.0 / size as f64; size],
        }
    }

    pub fn point_mass(size: usize, symbol: usize) -> Self {
        assert!(symbol < size, "point mass outside the alphabet");
        let mut probs = vec![0.0; size];
        probs[symbol] = 1.0;
        Self { probs }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn into_probs(self) -> Vec<f64> {
        self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn prob(&self, symbol: usize) -> f64 {
        self.probs[symbol]
    }

    /// Total variation distance. Panics on alphabet mismatch.
    pub fn total_variation(&self, other: &Distribution) -> f64 {
        assert_eq!(self.len(), other.len(), "alphabet size mismatch");
        0.5 * self
            .probs
            .iter()
            .zip(&other.probs)
            .map(|(p, q)| (p - q).abs())
            .sum::<f64>()
    }

    pub fn max_abs_diff(&self, other: &Distribution) -> f64 {
        assert_eq!(self.len(), other.len(), "alphabet size mismatch");
        self.probs
            .iter()
            .zip(&other.probs)
            .map(|(p, q)| (p - q).abs())
            .fold(0.0, f64::max)
    }

    /// Shannon entropy in nats.
    pub fn entropy(&self) -> f64 {
        -self.probs.iter().filter(|p| **p > 0.0).map(|p| p * p.ln()).sum::<f64>()
    }

    /// KL(self || other) in nats; infinite when `other` misses support.
    pub fn kl_divergence(&self, other: &Distribution) -> f64 {
        assert_eq!(self.len(), other.len(), "alphabet size mismatch");
        self.probs
            .iter()
            .zip(&other.probs)
            .filter(|(p, _)| **p > 0.0)
            .map(|(p, q)| if *q > 0.0 { p * (p / q).ln() } else { f64::INFINITY })
            .sum()
    }

    /// Inverse-CDF sampling from one uniform draw.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut last_positive = 0;
        for (symbol, p) in self.probs.iter().enumerate() {
            if *p > 0.0 {
                last_positive = symbol;
                acc += p;
                if u < acc {
                    return symbol;
                }
            }
        }
        last_positive
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn rejects_unnormalized_rows() {
        assert!(Distribution::new(vec![0.5, 0.6]).is_err());
        assert!(Distribution::new(vec![-0.1, 1.1]).is_err());
        assert!(Distribution::new(vec![]).is_err());
        assert!(Distribution::new(vec![0.1, 0.2, 0.7]).is_ok());
    }

    #[test]
    fn zero_weights_are_zero_probability_evidence() {
        assert_eq!(
            Distribution::from_weights(vec![0.0, 0.0]),
            Err(Error::ZeroProbabilityEvidence)
        );
    }

    #[test]
    fn divergences() {
        let u = Distribution::uniform(4);
        let d = Distribution::point_mass(4, 2);
        assert!((u.total_variation(&d) - 0.75).abs() < 1e-15);
        assert!((u.entropy() - 4f64.ln()).abs() < 1e-15);
        assert!((d.kl_divergence(&u) - 4f64.ln()).abs() < 1e-15);
        assert!(u.kl_divergence(&d).is_infinite());
    }

    #[test]
    fn sampling_never_returns_zero_mass_symbols() {
        let d = Distribution::new(vec![0.0, 0.3, 0.0, 0.7, 0.0]).unwrap();
        let mut rng = stream(11, 0);
        for _ in 0..10_000 {
            let s = d.sample(&mut rng);
            assert!(s == 1 || s == 3);
        }
    }
}

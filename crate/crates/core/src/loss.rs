//! Two-class cross-entropy, its gradient through softmax, and accuracy.

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};

/// Probabilities are clipped to this floor before taking logarithms.
pub const PROB_FLOOR: f64 = 1e-12;

/// Ground truth for one image.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Authentic,
    Tampered,
}

impl Label {
    pub const ALL: [Label; 2] = [Label::Authentic, Label::Tampered];

    /// Position in the network output: authentic is 0, tampered is 1.
    pub fn index(self) -> usize {
        match self {
            Label::Authentic => 0,
            Label::Tampered => 1,
        }
    }

    pub fn from_index(index: usize) -> Option<Label> {
        Label::ALL.get(index).copied()
    }

    /// `[1, 0]` for authentic, `[0, 1]` for tampered.
    pub fn one_hot(self) -> [f32; 2] {
        let mut v = [0.0; 2];
        v[self.index()] = 1.0;
        v
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Authentic => "authentic",
            Label::Tampered => "tampered",
        }
    }
}

impl std::fmt::Display for Label {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "authentic" => Ok(Label::Authentic),
            "tampered" => Ok(Label::Tampered),
            other => Err(format!("unknown label {other:?}")),
        }
    }
}

/// `−Σ yᵢ · ln(max(pᵢ, 1e-12))`.
pub fn cross_entropy(probs: &[f32], target: &[f32]) -> f64 {
    probs
        .iter()
        .zip(target)
        .filter(|(_, &y)| y != 0.0)
        .map(|(&p, &y)| -f64::from(y) * f64::from(p).max(PROB_FLOOR).ln())
        .sum()
}

/// Gradient of `cross_entropy(softmax(z), y)` with respect to the logits `z`: `p − y`.
pub fn softmax_ce_gradient(probs: &[f32], target: &[f32]) -> Vec<f32> {
    probs.iter().zip(target).map(|(&p, &y)| p - y).collect()
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(values: &[f32]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Fraction of rows whose argmax matches the argmax of the target row.
pub fn accuracy(probs: &[Vec<f32>], targets: &[Vec<f32>]) -> Result<f64> {
    ensure!(!probs.is_empty(), "accuracy of an empty batch is undefined");
    ensure!(probs.len() == targets.len(), "{} predictions but {} targets", probs.len(), targets.len());
    let hits = probs.iter().zip(targets).filter(|(p, y)| argmax(p) == argmax(y)).count();
    Ok(hits as f64 / probs.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cross_entropy_cases() {
        assert_eq!(cross_entropy(&[1.0, 0.0], &[1.0, 0.0]), 0.0);
        assert!((cross_entropy(&[0.5, 0.5], &[1.0, 0.0]) - std::f64::consts::LN_2).abs() < 1e-6);
        assert!((cross_entropy(&[0.5, 0.5], &[0.0, 1.0]) - std::f64::consts::LN_2).abs() < 1e-6);
        assert!((cross_entropy(&[0.9, 0.1], &[0.0, 1.0]) - 2.302585).abs() < 1e-6);
        // clipped, not infinite
        assert!((cross_entropy(&[1.0, 0.0], &[0.0, 1.0]) - 27.631021).abs() < 1e-5);
    }

    #[test]
    fn gradient_cases() {
        assert_eq!(softmax_ce_gradient(&[0.0, 1.0], &[0.0, 1.0]), vec![0.0, 0.0]);
        assert_eq!(softmax_ce_gradient(&[0.5, 0.5], &[1.0, 0.0]), vec![-0.5, 0.5]);
    }

    #[test]
    fn accuracy_cases() {
        let y = |l: Label| l.one_hot().to_vec();
        let all = vec![vec![0.9, 0.1], vec![0.2, 0.8]];
        assert_eq!(accuracy(&all, &[y(Label::Authentic), y(Label::Tampered)]).unwrap(), 1.0);
        assert_eq!(accuracy(&[vec![0.5, 0.5]], &[y(Label::Authentic)]).unwrap(), 1.0);
        let probs = vec![vec![0.9, 0.1], vec![0.2, 0.8], vec![0.6, 0.4], vec![0.7, 0.3]];
        let targets = vec![y(Label::Authentic), y(Label::Tampered), y(Label::Authentic), y(Label::Tampered)];
        assert_eq!(accuracy(&probs, &targets).unwrap(), 0.75);
        assert!(accuracy(&[], &[]).is_err());
    }

    #[test]
    fn labels() {
        assert_eq!(Label::Authentic.one_hot(), [1.0, 0.0]);
        assert_eq!(Label::Tampered.one_hot(), [0.0, 1.0]);
        assert_eq!("tampered".parse::<Label>().unwrap(), Label::Tampered);
        assert_eq!(argmax(&[0.5, 0.5]), 0);
    }
}

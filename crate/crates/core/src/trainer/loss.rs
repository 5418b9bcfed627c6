use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Module, Result};
use crate::numerics::{Graph, Real, Var};

use super::labels::LabelGrid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Reduction {
    /// Sum over every (span, type) pair.
    #[default]
    Sum,
    /// Sum divided by `|spans| · M`.
    Mean,
}

impl FromStr for Reduction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sum" => Ok(Reduction::Sum),
            "mean" => Ok(Reduction::Mean),
            other => Err(Error::config(Module::Trainer, format!("unknown reduction `{other}`"))),
        }
    }
}

impl fmt::Display for Reduction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Reduction::Sum => "sum",
            Reduction::Mean => "mean",
        })
    }
}

/// Binary cross-entropy of `sigmoid(logits)` against the label grid.
pub fn bce_loss<T: Real>(g: &mut Graph<T>, logits: Var, labels: &LabelGrid, reduction: Reduction) -> Result<Var> {
    let shape = g.value(logits).shape().to_vec();
    if shape != [labels.num_spans, labels.num_types] {
        return Err(Error::dimension(
            Module::Trainer,
            format!("logits {shape:?} vs labels [{}, {}]", labels.num_spans, labels.num_types),
        ));
    }
    let scale = match reduction {
        Reduction::Sum => T::one(),
        Reduction::Mean => T::one() / T::lit(labels.values.len() as f64),
    };
    g.bce_with_logits(logits, labels.targets(), scale)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Tensor;

    fn loss_of(logits: &[f64], labels: &[u8], r: Reduction) -> f64 {
        let mut g = Graph::<f64>::new();
        let x = g.constant(Tensor::new(&[logits.len(), 1], logits.to_vec()).unwrap());
        let grid = LabelGrid { num_spans: logits.len(), num_types: 1, values: labels.to_vec(), filtered: 0 };
        let l = bce_loss(&mut g, x, &grid, r).unwrap();
        g.value(l).item().unwrap()
    }

    #[test]
    fn zero_logit_is_ln2() {
        assert!((loss_of(&[0.0], &[1], Reduction::Sum) - std::f64::consts::LN_2).abs() < 1e-12);
        assert!((loss_of(&[0.0, 0.0], &[1, 0], Reduction::Sum) - 2.0 * std::f64::consts::LN_2).abs() < 1e-12);
        assert!((loss_of(&[0.0, 0.0], &[1, 0], Reduction::Mean) - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn large_logits_stay_finite() {
        let l = loss_of(&[800.0, -800.0], &[0, 1], Reduction::Sum);
        assert!((l - 1600.0).abs() < 1e-9);
        assert!(loss_of(&[800.0, -800.0], &[1, 0], Reduction::Sum) < 1e-300);
    }

    #[test]
    fn shape_mismatch() {
        let mut g = Graph::<f64>::new();
        let x = g.constant(Tensor::zeros(&[2, 2]));
        let grid = LabelGrid { num_spans: 2, num_types: 1, values: vec![0, 0], filtered: 0 };
        assert!(bce_loss(&mut g, x, &grid, Reduction::Sum).is_err());
    }
}

use serde::{Deserialize, Serialize};

use super::tensor::{Real, Tensor};
use crate::error::{Error, Result};

/// Corner regression loss. Every kind sums its elementwise penalty over the
/// eight coordinates of a sample and averages over the batch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LossKind {
    L1,
    L2,
    /// Reverse Huber. With `continuous == false` the penalty is `|r|` for
    /// `|r| <= c` and `r²` above (discontinuous unless `c = 1`); with
    /// `continuous == true` the upper branch is `(r² + c²) / (2c)`.
    #[serde(rename = "berhu")]
    BerHu {
        c: f64,
        #[serde(default)]
        continuous: bool,
    },
}

impl LossKind {
    pub fn berhu(c: f64) -> Self {
        LossKind::BerHu {
            c,
            continuous: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            LossKind::BerHu { c, .. } if !(c > 0.0 && c.is_finite()) => Err(Error::invalid(
                format!("berHu threshold c must be > 0, got {c}"),
            )),
            _ => Ok(()),
        }
    }

    pub fn name(&self) -> String {
        match *self {
            LossKind::L1 => "l1".into(),
            LossKind::L2 => "l2".into(),
            LossKind::BerHu {
                c,
                continuous: false,
            } => format!("berhu(c={c})"),
            LossKind::BerHu {
                c,
                continuous: true,
            } => format!("berhu-cont(c={c})"),
        }
    }

    /// Elementwise penalty and its derivative for one residual.
    pub fn elementwise(&self, r: f64) -> (f64, f64) {
        let a = r.abs();
        let sign = if r > 0.0 {
            1.0
        } else if r < 0.0 {
            -1.0
        } else {
            0.0
        };
        match *self {
            LossKind::L1 => (a, sign),
            LossKind::L2 => (r * r, 2.0 * r),
            LossKind::BerHu { c, continuous } => {
                if a <= c {
                    (a, sign)
                } else if continuous {
                    ((r * r + c * c) / (2.0 * c), r / c)
                } else {
                    (r * r, 2.0 * r)
                }
            }
        }
    }
}

/// Returns the batch loss and its gradient with respect to `pred`.
pub fn loss<T: Real>(
    pred: &Tensor<T>,
    target: &Tensor<T>,
    kind: LossKind,
) -> Result<(T, Tensor<T>)> {
    kind.validate()?;
    if pred.shape() != target.shape() {
        return Err(Error::ShapeMismatch(format!(
            "prediction {:?} vs target {:?}",
            pred.shape(),
            target.shape()
        )));
    }
    let (n, _) = pred.dims2()?;
    if n == 0 {
        return Err(Error::ShapeMismatch("empty batch".into()));
    }
    let inv_n = 1.0 / n as f64;
    let mut total = 0.0f64;
    let mut grad = Vec::with_capacity(pred.len());
    for (&p, &t) in pred.data().iter().zip(target.data()) {
        let (l, d) = kind.elementwise(p.as_f64() - t.as_f64());
        total += l;
        grad.push(T::lit(d * inv_n));
    }
    Ok((
        T::lit(total * inv_n),
        Tensor::new(pred.shape().to_vec(), grad)?,
    ))
}

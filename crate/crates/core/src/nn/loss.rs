use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};

/// Smoothing inside the square root of the trace distance.
pub const MTD_SMOOTHING: f64 = 1e-12;

/// Training objective on network outputs.
pub trait Loss: Sync {
    /// Mean loss and its gradient with respect to `pred`.
    fn value_and_grad(&self, pred: ArrayView2<'_, f64>, target: ArrayView2<'_, f64>) -> Result<(f64, Array2<f64>)>;

    /// Metric used for validation and reporting (lower is better).
    fn metric(&self, pred: ArrayView2<'_, f64>, target: ArrayView2<'_, f64>) -> Result<f64>;
}

fn check_shapes(pred: &ArrayView2<'_, f64>, target: &ArrayView2<'_, f64>) -> Result<()> {
    if pred.dim() != target.dim() {
        return Err(Error::size(format!(
            "prediction shape {:?} does not match target shape {:?}",
            pred.dim(),
            target.dim()
        )));
    }
    Ok(())
}

/// Mean over rows and qubit blocks of `½ √(‖δ‖² + ε)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct TraceDistanceLoss;

impl Loss for TraceDistanceLoss {
    fn value_and_grad(&self, pred: ArrayView2<'_, f64>, target: ArrayView2<'_, f64>) -> Result<(f64, Array2<f64>)> {
        check_shapes(&pred, &target)?;
        let (rows, cols) = pred.dim();
        if cols % 3 != 0 {
            return Err(Error::size(format!("output width {cols} is not a multiple of 3")));
        }
        let blocks = (rows * (cols / 3)) as f64;
        let mut grad = Array2::zeros((rows, cols));
        let mut total = 0.0;
        for r in 0..rows {
            for b in (0..cols).step_by(3) {
                let d = [
                    pred[[r, b]] - target[[r, b]],
                    pred[[r, b + 1]] - target[[r, b + 1]],
                    pred[[r, b + 2]] - target[[r, b + 2]],
                ];
                let s = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2] + MTD_SMOOTHING).sqrt();
                total += 0.5 * s;
                for k in 0..3 {
                    grad[[r, b + k]] = 0.5 * d[k] / s / blocks;
                }
            }
        }
        Ok((total / blocks, grad))
    }

    fn metric(&self, pred: ArrayView2<'_, f64>, target: ArrayView2<'_, f64>) -> Result<f64> {
        mean_trace_distance(pred, target)
    }
}

/// Unsmoothed mean trace distance over rows and 3-component blocks.
pub fn mean_trace_distance(pred: ArrayView2<'_, f64>, target: ArrayView2<'_, f64>) -> Result<f64> {
    let per_block = block_trace_distances(pred, target)?;
    if per_block.is_empty() {
        return Err(Error::size("mean trace distance of an empty set"));
    }
    Ok(per_block.iter().sum::<f64>() / per_block.len() as f64)
}

/// `½‖δ‖` for every (row, block), row-major.
pub fn block_trace_distances(pred: ArrayView2<'_, f64>, target: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
    check_shapes(&pred, &target)?;
    let (rows, cols) = pred.dim();
    if cols % 3 != 0 {
        return Err(Error::size(format!("output width {cols} is not a multiple of 3")));
    }
    let mut out = Vec::with_capacity(rows * cols / 3);
    for r in 0..rows {
        for b in (0..cols).step_by(3) {
            let s: f64 = (0..3).map(|k| (pred[[r, b + k]] - target[[r, b + k]]).powi(2)).sum();
            out.push(0.5 * s.sqrt());
        }
    }
    Ok(out)
}

/// Mean over rows of the squared Euclidean distance.
#[derive(Debug, Clone, Copy, Default)]
pub struct SquaredErrorLoss;

impl Loss for SquaredErrorLoss {
    fn value_and_grad(&self, pred: ArrayView2<'_, f64>, target: ArrayView2<'_, f64>) -> Result<(f64, Array2<f64>)> {
        check_shapes(&pred, &target)?;
        let rows = pred.nrows().max(1) as f64;
        let diff = &pred - &target;
        let value = diff.iter().map(|d| d * d).sum::<f64>() / rows;
        Ok((value, diff * (2.0 / rows)))
    }

    fn metric(&self, pred: ArrayView2<'_, f64>, target: ArrayView2<'_, f64>) -> Result<f64> {
        Ok(self.value_and_grad(pred, target)?.0)
    }
}

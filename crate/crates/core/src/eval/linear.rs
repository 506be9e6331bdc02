//! Ordinary least squares on standardized columns, solved through the
//! normal equations with a vanishing ridge term.

use nalgebra::{DMatrix, DVector};

const RIDGE: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct LinearModel {
    columns: Vec<usize>,
    means: Vec<f64>,
    scales: Vec<f64>,
    /// One coefficient vector and intercept per output.
    outputs: Vec<(Vec<f64>, f64)>,
}

impl LinearModel {
    /// Fits one regression per target vector in `targets` on `rows`.
    pub fn fit(x: &[Vec<f64>], targets: &[Vec<f64>], rows: &[usize]) -> LinearModel {
        let n = rows.len() as f64;
        let mut columns = Vec::new();
        let mut means = Vec::new();
        let mut scales = Vec::new();
        for (j, col) in x.iter().enumerate() {
            let mean = rows.iter().map(|&r| col[r]).sum::<f64>() / n;
            let var = rows.iter().map(|&r| (col[r] - mean).powi(2)).sum::<f64>() / n;
            if var > 0.0 && var.is_finite() {
                columns.push(j);
                means.push(mean);
                scales.push(var.sqrt());
            }
        }
        let p = columns.len();
        let z = DMatrix::from_fn(rows.len(), p, |i, k| {
            (x[columns[k]][rows[i]] - means[k]) / scales[k]
        });
        let gram = {
            let mut g = z.transpose() * &z;
            for k in 0..p {
                g[(k, k)] += RIDGE * n;
            }
            g
        };
        let chol = gram.clone().cholesky();
        let outputs = targets
            .iter()
            .map(|y| {
                let y_mean = rows.iter().map(|&r| y[r]).sum::<f64>() / n;
                if p == 0 {
                    return (Vec::new(), y_mean);
                }
                let yc = DVector::from_iterator(rows.len(), rows.iter().map(|&r| y[r] - y_mean));
                let rhs = z.transpose() * yc;
                let beta = match &chol {
                    Some(c) => c.solve(&rhs),
                    None => gram
                        .clone()
                        .svd(true, true)
                        .solve(&rhs, 1e-12)
                        .unwrap_or_else(|_| DVector::zeros(p)),
                };
                (beta.iter().copied().collect(), y_mean)
            })
            .collect();
        LinearModel {
            columns,
            means,
            scales,
            outputs,
        }
    }

    pub fn predict_row(&self, x: &[Vec<f64>], row: usize) -> Vec<f64> {
        self.outputs
            .iter()
            .map(|(beta, intercept)| {
                intercept
                    + beta
                        .iter()
                        .enumerate()
                        .map(|(k, b)| {
                            b * (x[self.columns[k]][row] - self.means[k]) / self.scales[k]
                        })
                        .sum::<f64>()
            })
            .collect()
    }
}

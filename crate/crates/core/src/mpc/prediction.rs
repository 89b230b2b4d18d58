use nalgebra::{DMatrix, DVector};

use crate::bocf::BocfRealization;
use crate::error::{check_len, Error, Result};

/// Stacked `l`-step prediction `Y = Gamma x_1 + T U`.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionMatrices {
    pub gamma: DMatrix<f64>,
    pub toeplitz: DMatrix<f64>,
    /// `H_i = C A^{i-1} B` for `i = 1 .. l-1`.
    pub markov: Vec<DMatrix<f64>>,
    horizon: usize,
    outputs: usize,
    inputs: usize,
}

impl PredictionMatrices {
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn outputs(&self) -> usize {
        self.outputs
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    /// Predicted outputs `y_{k|1} .. y_{k|l}` stacked.
    pub fn predict(&self, x1: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>> {
        check_len("predicted state", self.gamma.ncols(), x1.len())?;
        check_len("control sequence", self.toeplitz.ncols(), u.len())?;
        Ok(&self.gamma * x1 + &self.toeplitz * u)
    }
}

pub fn build_prediction(r: &BocfRealization, horizon: usize) -> Result<PredictionMatrices> {
    if horizon == 0 {
        return Err(Error::InvalidConfig("horizon must be at least 1".into()));
    }
    let p = r.c.nrows();
    let m = r.b.ncols();
    let nx = r.a.nrows();

    let mut gamma = DMatrix::zeros(horizon * p, nx);
    // C A^{i}; C only selects the first p rows so each power is a row-slice product.
    let mut ca = r.c.clone();
    for i in 0..horizon {
        gamma.view_mut((i * p, 0), (p, nx)).copy_from(&ca);
        if i + 1 < horizon {
            ca = &ca * &r.a;
        }
    }
    let markov: Vec<DMatrix<f64>> = (0..horizon.saturating_sub(1))
        .map(|i| gamma.view((i * p, 0), (p, nx)) * &r.b)
        .collect();

    let mut toeplitz = DMatrix::zeros(horizon * p, horizon * m);
    for row in 1..horizon {
        for col in 0..row {
            toeplitz
                .view_mut((row * p, col * m), (p, m))
                .copy_from(&markov[row - col - 1]);
        }
    }
    Ok(PredictionMatrices {
        gamma,
        toeplitz,
        markov,
        horizon,
        outputs: p,
        inputs: m,
    })
}

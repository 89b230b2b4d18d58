//! Block observable canonical form of the identified ARX model.
//!
//! ```text
//!     [ -F_1  I  0 .. 0 ]        [ G_1 ]
//!     [ -F_2  0  I .. 0 ]        [ G_2 ]
//! A = [  :           :  ],   B = [  :  ],   C = [ I 0 .. 0 ]
//!     [ -F_n  0  0 .. 0 ]        [ G_n ]
//! ```
//!
//! The state is an explicit function of past inputs, outputs and the
//! coefficients, so it can be rebuilt every step from the IO history instead of
//! being estimated.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_len, Result};
use crate::rls::{f_block, g_block, ArxDims, IoHistory};

#[derive(Debug, Clone, PartialEq)]
pub struct BocfRealization {
    dims: ArxDims,
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
}

/// Model state, `n` stacked sub-blocks of length `p`.
#[derive(Debug, Clone, PartialEq)]
pub struct BocfState {
    pub x: DVector<f64>,
}

impl BocfRealization {
    pub fn dims(&self) -> ArxDims {
        self.dims
    }

    /// Re-vectorizes the `F` and `G` blocks held in `A` and `B`.
    pub fn coefficients(&self) -> DVector<f64> {
        let ArxDims {
            order: n,
            inputs: m,
            outputs: p,
        } = self.dims;
        let mut theta = DVector::zeros(self.dims.theta_len());
        let f_len = self.dims.theta_f_len();
        for i in 0..n {
            for col in 0..p {
                for row in 0..p {
                    theta[i * p * p + col * p + row] = -self.a[(i * p + row, col)];
                }
            }
            for col in 0..m {
                for row in 0..p {
                    theta[f_len + i * p * m + col * p + row] = self.b[(i * p + row, col)];
                }
            }
        }
        theta
    }
}

/// Builds `(A, B, C)` from a coefficient vector.
pub fn realize(theta: &DVector<f64>, dims: ArxDims) -> Result<BocfRealization> {
    check_len("coefficient vector", dims.theta_len(), theta.len())?;
    let ArxDims {
        order: n,
        inputs: m,
        outputs: p,
    } = dims;
    let np = n * p;
    let mut a = DMatrix::zeros(np, np);
    let mut b = DMatrix::zeros(np, m);
    for i in 1..=n {
        let rows = (i - 1) * p;
        a.view_mut((rows, 0), (p, p))
            .copy_from(&(-f_block(theta, dims, i)));
        b.view_mut((rows, 0), (p, m))
            .copy_from(&g_block(theta, dims, i));
        if i < n {
            a.view_mut((rows, i * p), (p, p))
                .fill_with_identity();
        }
    }
    let mut c = DMatrix::zeros(p, np);
    c.view_mut((0, 0), (p, p)).fill_with_identity();
    Ok(BocfRealization { dims, a, b, c })
}

/// Rebuilds the model state at step `k` from `y_k`, the history of earlier
/// samples, and the coefficients.
pub fn reconstruct_state(
    h: &IoHistory,
    y_k: &DVector<f64>,
    theta: &DVector<f64>,
) -> Result<BocfState> {
    let dims = h.dims();
    check_len("coefficient vector", dims.theta_len(), theta.len())?;
    check_len("current output", dims.outputs, y_k.len())?;
    let (n, p) = (dims.order, dims.outputs);
    let mut x = DVector::zeros(n * p);
    x.rows_mut(0, p).copy_from(y_k);
    for j in 2..=n {
        let mut block = DVector::zeros(p);
        for i in 1..=(n - j + 1) {
            block -= f_block(theta, dims, i + j - 1) * h.output(i);
            block += g_block(theta, dims, i + j - 1) * h.input(i);
        }
        x.rows_mut((j - 1) * p, p).copy_from(&block);
    }
    Ok(BocfState { x })
}

/// Advances the model one step: returns `(A x + B u, C x)`.
pub fn model_step(
    r: &BocfRealization,
    x: &BocfState,
    u: &DVector<f64>,
) -> Result<(BocfState, DVector<f64>)> {
    check_len("model state", r.a.ncols(), x.x.len())?;
    check_len("model input", r.b.ncols(), u.len())?;
    let next = &r.a * &x.x + &r.b * u;
    let y = &r.c * &x.x;
    Ok((BocfState { x: next }, y))
}

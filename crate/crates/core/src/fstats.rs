//! Regularized incomplete beta function and the F-distribution quantile.

use crate::error::{Error, Result};

const CF_MAX_ITER: usize = 20_000;
const CF_EPS: f64 = 1e-16;
const TINY: f64 = 1e-300;

/// A request for the `p`-quantile of an F(d1, d2) distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FQuantileQuery {
    pub p: f64,
    pub d1: f64,
    pub d2: f64,
}

impl FQuantileQuery {
    pub fn new(p: f64, d1: f64, d2: f64) -> Result<Self> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::Domain(format!("probability {p} not in (0, 1)")));
        }
        if !(d1 > 0.0 && d1.is_finite() && d2 > 0.0 && d2.is_finite()) {
            return Err(Error::Domain(format!(
                "degrees of freedom ({d1}, {d2}) must be positive and finite"
            )));
        }
        Ok(Self { p, d1, d2 })
    }
}

/// Natural log of the gamma function for `x > 0` (Lanczos, g = 7).
pub fn ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        // reflection
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = COEF[0];
    for (i, c) in COEF.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + G + 0.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// Continued fraction for I_x(a, b) (modified Lentz).
fn beta_cf(x: f64, a: f64, b: f64) -> Result<f64> {
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=CF_MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < CF_EPS {
            return Ok(h);
        }
    }
    Err(Error::NonConvergence {
        what: "incomplete beta continued fraction",
        iterations: CF_MAX_ITER,
    })
}

/// Returns `(I_x(a,b), 1 - I_x(a,b))` with `y = 1 - x` supplied exactly by the caller.
fn beta_pair(x: f64, y: f64, a: f64, b: f64) -> Result<(f64, f64)> {
    if x <= 0.0 {
        return Ok((0.0, 1.0));
    }
    if y <= 0.0 {
        return Ok((1.0, 0.0));
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * y.ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        let lower = (front * beta_cf(x, a, b)? / a).clamp(0.0, 1.0);
        Ok((lower, 1.0 - lower))
    } else {
        let upper = (front * beta_cf(y, b, a)? / b).clamp(0.0, 1.0);
        Ok((1.0 - upper, upper))
    }
}

/// Regularized incomplete beta function `I_x(a, b)`.
pub fn regularized_incomplete_beta(x: f64, a: f64, b: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::Domain(format!("x = {x} not in [0, 1]")));
    }
    if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()) {
        return Err(Error::Domain(format!("shape parameters ({a}, {b}) must be positive")));
    }
    Ok(beta_pair(x, 1.0 - x, a, b)?.0)
}

/// Lower and upper tail probabilities of F(d1, d2) at `f >= 0`.
fn f_tails(f: f64, d1: f64, d2: f64) -> Result<(f64, f64)> {
    let denom = d1 * f + d2;
    beta_pair(d1 * f / denom, d2 / denom, 0.5 * d1, 0.5 * d2)
}

/// Cumulative distribution function of F(d1, d2).
pub fn f_cdf(f: f64, d1: f64, d2: f64) -> Result<f64> {
    if !(d1 > 0.0 && d2 > 0.0 && d1.is_finite() && d2.is_finite()) {
        return Err(Error::Domain(format!("degrees of freedom ({d1}, {d2}) must be positive")));
    }
    if f.is_nan() {
        return Err(Error::Domain("NaN argument to F cdf".into()));
    }
    if f <= 0.0 {
        return Ok(0.0);
    }
    if f.is_infinite() {
        return Ok(1.0);
    }
    Ok(f_tails(f, d1, d2)?.0)
}

fn ln_f_density(f: f64, d1: f64, d2: f64) -> f64 {
    let (a, b) = (0.5 * d1, 0.5 * d2);
    a * (d1 / d2).ln() + (a - 1.0) * f.ln() - (a + b) * (1.0 + d1 * f / d2).ln()
        - (ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b))
}

/// Signed distance from the target probability, evaluated on whichever tail is
/// smaller so that upper quantiles keep full relative precision.
fn tail_gap(f: f64, q: &FQuantileQuery) -> Result<f64> {
    let (lower, upper) = f_tails(f, q.d1, q.d2)?;
    Ok(if q.p > 0.5 {
        (1.0 - q.p) - upper
    } else {
        lower - q.p
    })
}

/// Returns the `F` with `CDF_{F(d1,d2)}(F) = p`.
pub fn f_quantile(q: FQuantileQuery) -> Result<f64> {
    const MAX_ITER: usize = 400;
    let q = FQuantileQuery::new(q.p, q.d1, q.d2)?;

    let mut lo = 1.0_f64;
    let mut hi = 1.0_f64;
    let mut n = 0;
    while tail_gap(hi, &q)? < 0.0 {
        hi *= 2.0;
        n += 1;
        if n > 2_000 || !hi.is_finite() {
            return Err(Error::NonConvergence {
                what: "F quantile upper bracket",
                iterations: n,
            });
        }
    }
    while tail_gap(lo, &q)? > 0.0 {
        lo *= 0.5;
        n += 1;
        if n > 2_000 || lo == 0.0 {
            return Err(Error::NonConvergence {
                what: "F quantile lower bracket",
                iterations: n,
            });
        }
    }

    // Bisection on log F until the bracket is tight, then a Newton polish
    // that is only accepted when it stays inside the bracket.
    for _ in 0..MAX_ITER {
        let mid = (lo * hi).sqrt();
        if hi / lo - 1.0 < 1e-6 {
            break;
        }
        if tail_gap(mid, &q)? < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut f = (lo * hi).sqrt();
    for _ in 0..MAX_ITER {
        let gap = tail_gap(f, &q)?;
        if gap == 0.0 {
            return Ok(f);
        }
        if gap < 0.0 {
            lo = f;
        } else {
            hi = f;
        }
        let dens = ln_f_density(f, q.d1, q.d2).exp();
        let newton = f - gap / dens;
        let next = if dens > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (next - f).abs() <= 1e-15 * f || hi - lo <= 4.0 * f64::EPSILON * f {
            return Ok(next);
        }
        f = next;
    }
    Err(Error::NonConvergence {
        what: "F quantile",
        iterations: MAX_ITER,
    })
}

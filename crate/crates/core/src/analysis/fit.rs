//! Least-squares fits of Pareto and lognormal models to an empirical CCDF.
//!
//! Sorted samples `x(1) <= ... <= x(n)` get CCDF plotting positions
//! `p(i) = (n - i + 0.5) / n`. Pareto is a straight line of `ln p` on
//! `ln x` with slope `-shape`; lognormal is a straight line of `ln x` on the
//! standard normal quantile `z = Φ⁻¹(1 - p)` with intercept `μ` and slope
//! `σ`. Goodness is the residual sum of squares of `ln p` against the
//! fitted model's log-CCDF, which puts both families on the same scale.

use std::fmt;

use statrs::distribution::{ContinuousCDF, Normal};

use crate::{Error, Result};

pub const MIN_FIT_SAMPLES: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    Pareto,
    Lognormal,
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Family::Pareto => "pareto",
            Family::Lognormal => "lognormal",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FitParams {
    Pareto { shape: f64, scale: f64 },
    Lognormal { mu: f64, sigma: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitResult {
    pub family: Family,
    pub params: FitParams,
    /// Residual sum of squares on the log-CCDF scale; lower is better.
    pub goodness: f64,
}

impl FitResult {
    /// Model log-CCDF at `x`.
    pub fn ln_ccdf(&self, x: f64) -> f64 {
        match self.params {
            FitParams::Pareto { shape, scale } => {
                if x <= scale {
                    0.0
                } else {
                    -shape * (x / scale).ln()
                }
            }
            FitParams::Lognormal { mu, sigma } => {
                let n = Normal::standard();
                n.sf((x.ln() - mu) / sigma).max(f64::MIN_POSITIVE).ln()
            }
        }
    }
}

/// Sorted samples paired with their CCDF plotting positions.
pub fn empirical_ccdf(samples: &[f64]) -> Vec<(f64, f64)> {
    let mut v = samples.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    v.into_iter()
        .enumerate()
        .map(|(i, x)| (x, (n - i as f64 - 0.5) / n))
        .collect()
}

/// Ordinary least squares `y = a + b x`.
fn ols(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let b = sxy / sxx;
    (my - b * mx, b)
}

fn check(samples: &[f64]) -> Result<()> {
    if samples.len() < MIN_FIT_SAMPLES {
        return Err(Error::Degenerate(format!(
            "need at least {MIN_FIT_SAMPLES} samples, got {}",
            samples.len()
        )));
    }
    if let Some(x) = samples.iter().find(|x| !(**x > 0.0 && x.is_finite())) {
        return Err(Error::Degenerate(format!("samples must be positive and finite, found {x}")));
    }
    if samples.iter().all(|&x| x == samples[0]) {
        return Err(Error::Degenerate(format!("all samples equal {}; nothing to fit", samples[0])));
    }
    Ok(())
}

pub fn fit_distribution(samples: &[f64], family: Family) -> Result<FitResult> {
    check(samples)?;
    let ccdf = empirical_ccdf(samples);
    let lx: Vec<f64> = ccdf.iter().map(|(x, _)| x.ln()).collect();
    let lp: Vec<f64> = ccdf.iter().map(|(_, p)| p.ln()).collect();
    let params = match family {
        Family::Pareto => {
            let (a, b) = ols(&lx, &lp);
            let shape = -b;
            if !(shape > 0.0) {
                return Err(Error::Degenerate(format!("fitted Pareto shape {shape} is not positive")));
            }
            FitParams::Pareto { shape, scale: (a / shape).exp() }
        }
        Family::Lognormal => {
            let n = Normal::standard();
            let z: Vec<f64> = ccdf.iter().map(|(_, p)| n.inverse_cdf(1.0 - p)).collect();
            let (mu, sigma) = ols(&z, &lx);
            if !(sigma > 0.0) {
                return Err(Error::Degenerate(format!("fitted lognormal sigma {sigma} is not positive")));
            }
            FitParams::Lognormal { mu, sigma }
        }
    };
    let mut fit = FitResult { family, params, goodness: 0.0 };
    fit.goodness = ccdf
        .iter()
        .zip(&lp)
        .map(|((x, _), y)| (y - fit.ln_ccdf(*x)).powi(2))
        .sum();
    Ok(fit)
}

/// Fits both families; the better one (lower goodness) comes first.
pub fn select_family(samples: &[f64]) -> Result<(FitResult, FitResult)> {
    let p = fit_distribution(samples, Family::Pareto)?;
    let l = fit_distribution(samples, Family::Lognormal)?;
    Ok(if p.goodness <= l.goodness { (p, l) } else { (l, p) })
}

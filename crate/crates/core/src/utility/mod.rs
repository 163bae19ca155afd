//! Utility functions `u(t, c, x)` and their composition algebra.
//!
//! A [`UtilityFn`] is an immutable tree: CRRA leaves, positive scalings,
//! pointwise sums, and sup-convolutions in consumption. Every node evaluates
//! to a [`Point`] carrying the value together with `u_c`, `u_cc`, `u_ct` and
//! `u_cx`. Composite derivatives are assembled from the parts at the optimal
//! split, never by differencing the numerical supremum.

mod convolution;
mod diagnostics;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::diffusion::MAX_DIM;
use crate::error::{Error, Result};
use crate::expr::Expr;

pub use convolution::{aggregate, split, Aggregate, Convolution, SplitterConfig};
pub use diagnostics::{cone_diagnostics, ConeReport, Probe};

/// Value and derivatives of a utility function at one `(t, c, x)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub value: f64,
    /// `ln u_c`, kept separately because marginals span hundreds of decades
    /// near the Inada limits.
    pub ln_marginal: f64,
    pub marginal: f64,
    pub curvature: f64,
    pub marginal_dt: f64,
    pub marginal_dx: [f64; MAX_DIM],
}

impl Point {
    /// Relative risk aversion `-c u_cc / u_c`.
    pub fn risk_aversion(&self, c: f64) -> f64 {
        -c * self.curvature / self.marginal
    }

    /// `u_c / u_cc`, the quantity that adds across a sup-convolution.
    pub fn tolerance(&self) -> f64 {
        self.marginal / self.curvature
    }
}

/// Extension point for utilities outside the built-in catalog.
pub trait Utility: fmt::Debug + Send + Sync {
    fn point(&self, t: f64, c: f64, x: &[f64]) -> Result<Point>;

    /// `(ln u_c, u_cc / u_c)`; the splitter only needs these two.
    fn slope(&self, t: f64, c: f64, x: &[f64]) -> Result<(f64, f64)> {
        let p = self.point(t, c, x)?;
        Ok((p.ln_marginal, p.curvature / p.marginal))
    }
}

/// `e^{ν(t)} g(x) (c^{1-a} - 1)/(1-a)`, logarithmic when `a = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Crra {
    pub risk_aversion: f64,
    /// Coefficients of the polynomial `ν(t)`.
    pub impatience: Vec<f64>,
    pub state_factor: Expr,
}

impl Crra {
    pub fn new(risk_aversion: f64) -> Self {
        Crra {
            risk_aversion,
            impatience: Vec::new(),
            state_factor: Expr::constant(1.0),
        }
    }

    pub fn log() -> Self {
        Crra::new(1.0)
    }

    fn nu(&self, t: f64) -> (f64, f64) {
        let v = self
            .impatience
            .iter()
            .rev()
            .fold(0.0, |acc, &k| acc * t + k);
        let dv = self
            .impatience
            .iter()
            .enumerate()
            .skip(1)
            .rev()
            .fold(0.0, |acc, (k, &ck)| acc * t + k as f64 * ck);
        (v, dv)
    }

    fn check_point(&self, t: f64, c: f64, x: &[f64]) -> Result<f64> {
        if !(c > 0.0) || !c.is_finite() {
            return Err(Error::eval(
                format!("utility at t={t}, x={x:?}"),
                format!("consumption must be positive and finite, got {c}"),
            ));
        }
        let g = self.state_factor.eval(t, x);
        if !(g > 0.0) || !g.is_finite() {
            return Err(Error::eval(
                format!("utility at t={t}, x={x:?}"),
                format!("state factor must be positive, got {g}"),
            ));
        }
        Ok(g)
    }
}

impl Utility for Crra {
    fn point(&self, t: f64, c: f64, x: &[f64]) -> Result<Point> {
        let g = self.check_point(t, c, x)?;
        let a = self.risk_aversion;
        let (nu, dnu) = self.nu(t);
        let lnc = c.ln();
        let scale = nu.exp() * g;
        let shape = if a == 1.0 {
            lnc
        } else {
            ((1.0 - a) * lnc).exp_m1() / (1.0 - a)
        };
        let ln_marginal = nu + g.ln() - a * lnc;
        let marginal = ln_marginal.exp();
        let mut marginal_dx = [0.0; MAX_DIM];
        for (i, v) in marginal_dx.iter_mut().enumerate().take(x.len()) {
            *v = marginal * self.state_factor.d_dx(t, x, i) / g;
        }
        Ok(Point {
            value: scale * shape,
            ln_marginal,
            marginal,
            curvature: -a * marginal / c,
            marginal_dt: marginal * (dnu + self.state_factor.d_dt(t, x) / g),
            marginal_dx,
        })
    }

    fn slope(&self, t: f64, c: f64, x: &[f64]) -> Result<(f64, f64)> {
        let g = self.check_point(t, c, x)?;
        let (nu, _) = self.nu(t);
        Ok((
            nu + g.ln() - self.risk_aversion * c.ln(),
            -self.risk_aversion / c,
        ))
    }
}

/// Immutable utility tree. Cloning is cheap.
#[derive(Debug, Clone)]
pub enum UtilityFn {
    Crra(Arc<Crra>),
    Scaled { factor: f64, inner: Arc<UtilityFn> },
    Sum(Arc<[UtilityFn]>),
    Convolution(Arc<Convolution>),
    Custom(Arc<dyn Utility>),
}

impl UtilityFn {
    pub fn crra(risk_aversion: f64) -> Self {
        UtilityFn::Crra(Arc::new(Crra::new(risk_aversion)))
    }

    pub fn log() -> Self {
        UtilityFn::crra(1.0)
    }

    pub fn from_crra(c: Crra) -> Self {
        UtilityFn::Crra(Arc::new(c))
    }

    pub fn scaled(self, factor: f64) -> Self {
        UtilityFn::Scaled {
            factor,
            inner: Arc::new(self),
        }
    }

    pub fn sum(terms: Vec<UtilityFn>) -> Self {
        UtilityFn::Sum(terms.into())
    }

    pub fn point(&self, t: f64, c: f64, x: &[f64]) -> Result<Point> {
        match self {
            UtilityFn::Crra(u) => u.point(t, c, x),
            UtilityFn::Scaled { factor, inner } => {
                let p = inner.point(t, c, x)?;
                let mut dx = p.marginal_dx;
                dx.iter_mut().for_each(|v| *v *= factor);
                Ok(Point {
                    value: factor * p.value,
                    ln_marginal: factor.ln() + p.ln_marginal,
                    marginal: factor * p.marginal,
                    curvature: factor * p.curvature,
                    marginal_dt: factor * p.marginal_dt,
                    marginal_dx: dx,
                })
            }
            UtilityFn::Sum(terms) => {
                let mut acc = Point {
                    value: 0.0,
                    ln_marginal: 0.0,
                    marginal: 0.0,
                    curvature: 0.0,
                    marginal_dt: 0.0,
                    marginal_dx: [0.0; MAX_DIM],
                };
                let mut lns = Vec::with_capacity(terms.len());
                for u in terms.iter() {
                    let p = u.point(t, c, x)?;
                    acc.value += p.value;
                    acc.marginal += p.marginal;
                    acc.curvature += p.curvature;
                    acc.marginal_dt += p.marginal_dt;
                    for (a, b) in acc.marginal_dx.iter_mut().zip(p.marginal_dx) {
                        *a += b;
                    }
                    lns.push(p.ln_marginal);
                }
                acc.ln_marginal = log_sum_exp(&lns);
                Ok(acc)
            }
            UtilityFn::Convolution(cv) => cv.point(t, c, x),
            UtilityFn::Custom(u) => u.point(t, c, x),
        }
    }

    pub fn value(&self, t: f64, c: f64, x: &[f64]) -> Result<f64> {
        Ok(self.point(t, c, x)?.value)
    }

    pub fn marginal(&self, t: f64, c: f64, x: &[f64]) -> Result<f64> {
        Ok(self.slope(t, c, x)?.0.exp())
    }

    /// `(ln u_c, u_cc / u_c)` without the remaining derivatives.
    pub fn slope(&self, t: f64, c: f64, x: &[f64]) -> Result<(f64, f64)> {
        match self {
            UtilityFn::Crra(u) => u.slope(t, c, x),
            UtilityFn::Scaled { factor, inner } => {
                let (l, r) = inner.slope(t, c, x)?;
                Ok((factor.ln() + l, r))
            }
            UtilityFn::Sum(_) => {
                let p = self.point(t, c, x)?;
                Ok((p.ln_marginal, p.curvature / p.marginal))
            }
            UtilityFn::Convolution(cv) => cv.slope(t, c, x),
            UtilityFn::Custom(u) => u.slope(t, c, x),
        }
    }

    /// Strips outer scalings: returns `(k, inner)` with `self = k · inner`.
    pub(crate) fn peel(&self) -> (f64, &UtilityFn) {
        let mut k = 1.0;
        let mut node = self;
        while let UtilityFn::Scaled { factor, inner } = node {
            k *= factor;
            node = inner;
        }
        (k, node)
    }
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + v.iter().map(|l| (l - m).exp()).sum::<f64>().ln()
}

fn one() -> Expr {
    Expr::constant(1.0)
}

/// Serializable description of a [`UtilityFn`] tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum UtilitySpec {
    Crra {
        risk_aversion: f64,
        #[serde(default)]
        impatience: Vec<f64>,
        #[serde(default = "one")]
        state_factor: Expr,
    },
    Scale {
        factor: f64,
        inner: Box<UtilitySpec>,
    },
    Sum {
        terms: Vec<UtilitySpec>,
    },
    Convolve {
        left: Box<UtilitySpec>,
        right: Box<UtilitySpec>,
    },
}

impl UtilitySpec {
    pub fn log() -> Self {
        UtilitySpec::crra(1.0)
    }

    pub fn crra(risk_aversion: f64) -> Self {
        UtilitySpec::Crra {
            risk_aversion,
            impatience: Vec::new(),
            state_factor: one(),
        }
    }

    pub fn build(&self, dim: usize, splitter: SplitterConfig) -> Result<UtilityFn> {
        Ok(match self {
            UtilitySpec::Crra {
                risk_aversion,
                impatience,
                state_factor,
            } => {
                if !(*risk_aversion > 0.0) || !risk_aversion.is_finite() {
                    return Err(Error::Config(format!(
                        "risk aversion must be positive, got {risk_aversion}"
                    )));
                }
                if impatience.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Config(
                        "impatience coefficients must be finite".into(),
                    ));
                }
                state_factor.validate(dim)?;
                UtilityFn::from_crra(Crra {
                    risk_aversion: *risk_aversion,
                    impatience: impatience.clone(),
                    state_factor: state_factor.clone(),
                })
            }
            UtilitySpec::Scale { factor, inner } => {
                if !(*factor > 0.0) || !factor.is_finite() {
                    return Err(Error::Config(format!(
                        "scale factor must be positive, got {factor}"
                    )));
                }
                inner.build(dim, splitter)?.scaled(*factor)
            }
            UtilitySpec::Sum { terms } => {
                if terms.is_empty() {
                    return Err(Error::Config("utility sum needs at least one term".into()));
                }
                UtilityFn::sum(
                    terms
                        .iter()
                        .map(|u| u.build(dim, splitter))
                        .collect::<Result<_>>()?,
                )
            }
            UtilitySpec::Convolve { left, right } => {
                UtilityFn::Convolution(Arc::new(Convolution::new(
                    left.build(dim, splitter)?,
                    right.build(dim, splitter)?,
                    splitter,
                )))
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd(f: impl Fn(f64) -> f64, z: f64, h: f64) -> f64 {
        (f(z + h) - f(z - h)) / (2.0 * h)
    }

    #[test]
    fn crra_derivatives_match_differences() {
        let u = Crra {
            risk_aversion: 2.5,
            impatience: vec![0.0, -0.3, 0.1],
            state_factor: Expr::exp_affine(0.2, 0.4, 0),
        };
        let (t, c, x) = (0.4, 1.7, [0.3]);
        let p = u.point(t, c, &x).unwrap();
        let h = 1e-5;
        let v = |c: f64| u.point(t, c, &x).unwrap().value;
        let m = |c: f64| u.point(t, c, &x).unwrap().marginal;
        assert!((fd(v, c, h) - p.marginal).abs() < 1e-8 * p.marginal);
        assert!((fd(m, c, h) - p.curvature).abs() < 1e-8 * p.curvature.abs());
        let mt = |t: f64| u.point(t, c, &x).unwrap().marginal;
        assert!((fd(mt, t, h) - p.marginal_dt).abs() < 1e-8 * p.marginal);
        let mx = |z: f64| u.point(t, c, &[z]).unwrap().marginal;
        assert!((fd(mx, x[0], h) - p.marginal_dx[0]).abs() < 1e-8 * p.marginal);
    }

    #[test]
    fn log_is_the_unit_limit() {
        let p = Crra::log().point(0.0, 2.0, &[0.0]).unwrap();
        assert!((p.value - 2f64.ln()).abs() < 1e-15);
        assert!((p.marginal - 0.5).abs() < 1e-15);
        let near = Crra::new(1.0 + 1e-9).point(0.0, 2.0, &[0.0]).unwrap();
        assert!((near.value - p.value).abs() < 1e-8);
    }

    #[test]
    fn crra_risk_aversion_is_exact() {
        let u = UtilityFn::crra(3.0);
        for c in [1e-3, 0.5, 1.0, 7.0, 1e4] {
            let p = u.point(0.5, c, &[0.0]).unwrap();
            assert!((p.risk_aversion(c) - 3.0).abs() < 1e-14);
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let u = UtilityFn::log();
        assert!(u.point(0.0, 0.0, &[0.0]).is_err());
        assert!(u.point(0.0, -1.0, &[0.0]).is_err());
        assert!(UtilitySpec::crra(0.0)
            .build(1, SplitterConfig::default())
            .is_err());
        let neg = UtilitySpec::Crra {
            risk_aversion: 1.0,
            impatience: vec![],
            state_factor: Expr::affine(0.0, 1.0, 0),
        };
        let u = neg.build(1, SplitterConfig::default()).unwrap();
        assert!(u.point(0.0, 1.0, &[-1.0]).is_err());
    }

    #[test]
    fn sum_adds_derivatives() {
        let u = UtilityFn::sum(vec![UtilityFn::log(), UtilityFn::crra(2.0).scaled(3.0)]);
        let p = u.point(0.2, 1.5, &[0.0]).unwrap();
        assert!((p.marginal - (1.0 / 1.5 + 3.0 / 2.25)).abs() < 1e-14);
        assert!((p.ln_marginal.exp() - p.marginal).abs() < 1e-14);
    }

    #[test]
    fn spec_round_trips_through_toml() {
        #[derive(Serialize, Deserialize, PartialEq, Debug)]
        struct W {
            u: UtilitySpec,
        }
        let w = W {
            u: UtilitySpec::Convolve {
                left: Box::new(UtilitySpec::Scale {
                    factor: 0.3,
                    inner: Box::new(UtilitySpec::log()),
                }),
                right: Box::new(UtilitySpec::Crra {
                    risk_aversion: 2.0,
                    impatience: vec![0.0, -0.1],
                    state_factor: Expr::exp_affine(0.0, 0.1, 0),
                }),
            },
        };
        let s = toml::to_string(&w).unwrap();
        assert_eq!(toml::from_str::<W>(&s).unwrap(), w);
    }
}

//! Serializable catalog of scalar fields `f(t, x)`.
//!
//! Every model primitive in a scenario (drift, volatility entries, notional,
//! dividends, rates, log-endowments, income shares, utility state factors)
//! is one [`Expr`]. The catalog is closed under `sum`, `product` and `exp`,
//! and each entry carries exact first derivatives in `t` and in every `x_i`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Highest power allowed per axis in [`Expr::Polynomial`].
pub const MAX_POLY_DEGREE: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Expr {
    /// `value`
    Constant {
        value: f64,
    },
    /// `intercept + slope * x[axis]`
    Affine {
        intercept: f64,
        slope: f64,
        axis: usize,
    },
    /// `exp(intercept + slope * x[axis])`
    ExpAffine {
        intercept: f64,
        slope: f64,
        axis: usize,
    },
    /// `sum_i sum_k coeffs[i][k] * x[i]^k`, one coefficient list per axis.
    Polynomial {
        coeffs: Vec<Vec<f64>>,
    },
    /// `sum_k coeffs[k] * t^k`
    TimePoly {
        coeffs: Vec<f64>,
    },
    Sum {
        terms: Vec<Expr>,
    },
    Product {
        factors: Vec<Expr>,
    },
    Exp {
        arg: Box<Expr>,
    },
}

fn horner(coeffs: &[f64], z: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * z + c)
}

fn horner_derivative(coeffs: &[f64], z: f64) -> f64 {
    coeffs
        .iter()
        .enumerate()
        .skip(1)
        .rev()
        .fold(0.0, |acc, (k, &c)| acc * z + k as f64 * c)
}

impl Expr {
    pub fn constant(value: f64) -> Self {
        Expr::Constant { value }
    }

    pub fn affine(intercept: f64, slope: f64, axis: usize) -> Self {
        Expr::Affine {
            intercept,
            slope,
            axis,
        }
    }

    pub fn exp_affine(intercept: f64, slope: f64, axis: usize) -> Self {
        Expr::ExpAffine {
            intercept,
            slope,
            axis,
        }
    }

    pub fn time_poly(coeffs: Vec<f64>) -> Self {
        Expr::TimePoly { coeffs }
    }

    pub fn sum(terms: Vec<Expr>) -> Self {
        Expr::Sum { terms }
    }

    pub fn product(factors: Vec<Expr>) -> Self {
        Expr::Product { factors }
    }

    pub fn exp(arg: Expr) -> Self {
        Expr::Exp { arg: Box::new(arg) }
    }

    pub fn eval(&self, t: f64, x: &[f64]) -> f64 {
        match self {
            Expr::Constant { value } => *value,
            Expr::Affine {
                intercept,
                slope,
                axis,
            } => intercept + slope * x[*axis],
            Expr::ExpAffine {
                intercept,
                slope,
                axis,
            } => (intercept + slope * x[*axis]).exp(),
            Expr::Polynomial { coeffs } => coeffs.iter().zip(x).map(|(c, &xi)| horner(c, xi)).sum(),
            Expr::TimePoly { coeffs } => horner(coeffs, t),
            Expr::Sum { terms } => terms.iter().map(|e| e.eval(t, x)).sum(),
            Expr::Product { factors } => factors.iter().map(|e| e.eval(t, x)).product(),
            Expr::Exp { arg } => arg.eval(t, x).exp(),
        }
    }

    /// Partial derivative in `x[axis]`.
    pub fn d_dx(&self, t: f64, x: &[f64], axis: usize) -> f64 {
        match self {
            Expr::Constant { .. } | Expr::TimePoly { .. } => 0.0,
            Expr::Affine { slope, axis: a, .. } => {
                if *a == axis {
                    *slope
                } else {
                    0.0
                }
            }
            Expr::ExpAffine {
                intercept,
                slope,
                axis: a,
            } => {
                if *a == axis {
                    slope * (intercept + slope * x[*a]).exp()
                } else {
                    0.0
                }
            }
            Expr::Polynomial { coeffs } => coeffs
                .get(axis)
                .map_or(0.0, |c| horner_derivative(c, x[axis])),
            Expr::Sum { terms } => terms.iter().map(|e| e.d_dx(t, x, axis)).sum(),
            Expr::Product { factors } => product_rule(factors, |e| e.d_dx(t, x, axis), t, x),
            Expr::Exp { arg } => arg.eval(t, x).exp() * arg.d_dx(t, x, axis),
        }
    }

    /// Partial derivative in `t`.
    pub fn d_dt(&self, t: f64, x: &[f64]) -> f64 {
        match self {
            Expr::TimePoly { coeffs } => horner_derivative(coeffs, t),
            Expr::Constant { .. }
            | Expr::Affine { .. }
            | Expr::ExpAffine { .. }
            | Expr::Polynomial { .. } => 0.0,
            Expr::Sum { terms } => terms.iter().map(|e| e.d_dt(t, x)).sum(),
            Expr::Product { factors } => product_rule(factors, |e| e.d_dt(t, x), t, x),
            Expr::Exp { arg } => arg.eval(t, x).exp() * arg.d_dt(t, x),
        }
    }

    pub fn depends_on_time(&self) -> bool {
        match self {
            Expr::TimePoly { coeffs } => coeffs.iter().skip(1).any(|&c| c != 0.0),
            Expr::Constant { .. }
            | Expr::Affine { .. }
            | Expr::ExpAffine { .. }
            | Expr::Polynomial { .. } => false,
            Expr::Sum { terms } => terms.iter().any(Expr::depends_on_time),
            Expr::Product { factors } => factors.iter().any(Expr::depends_on_time),
            Expr::Exp { arg } => arg.depends_on_time(),
        }
    }

    /// Checks axis indices against `dim` and the polynomial degree cap.
    pub fn validate(&self, dim: usize) -> Result<()> {
        match self {
            Expr::Constant { value } => finite(*value, "constant"),
            Expr::Affine {
                intercept,
                slope,
                axis,
            }
            | Expr::ExpAffine {
                intercept,
                slope,
                axis,
            } => {
                if *axis >= dim {
                    return Err(Error::Config(format!(
                        "axis {axis} out of range for dimension {dim}"
                    )));
                }
                finite(*intercept, "intercept")?;
                finite(*slope, "slope")
            }
            Expr::Polynomial { coeffs } => {
                if coeffs.len() > dim {
                    return Err(Error::Config(format!(
                        "polynomial has {} axes, dimension is {dim}",
                        coeffs.len()
                    )));
                }
                for c in coeffs {
                    if c.len() > MAX_POLY_DEGREE + 1 {
                        return Err(Error::Config(format!(
                            "polynomial degree {} exceeds {MAX_POLY_DEGREE}",
                            c.len() - 1
                        )));
                    }
                    c.iter()
                        .try_for_each(|&v| finite(v, "polynomial coefficient"))?;
                }
                Ok(())
            }
            Expr::TimePoly { coeffs } => coeffs
                .iter()
                .try_for_each(|&v| finite(v, "time polynomial coefficient")),
            Expr::Sum { terms } => terms.iter().try_for_each(|e| e.validate(dim)),
            Expr::Product { factors } => factors.iter().try_for_each(|e| e.validate(dim)),
            Expr::Exp { arg } => arg.validate(dim),
        }
    }
}

fn finite(v: f64, what: &str) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("{what} is not finite: {v}")))
    }
}

fn product_rule(factors: &[Expr], d: impl Fn(&Expr) -> f64, t: f64, x: &[f64]) -> f64 {
    let values: Vec<f64> = factors.iter().map(|e| e.eval(t, x)).collect();
    let mut acc = 0.0;
    for (k, f) in factors.iter().enumerate() {
        let dk = d(f);
        if dk == 0.0 {
            continue;
        }
        let rest: f64 = values
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != k)
            .map(|(_, v)| v)
            .product();
        acc += dk * rest;
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_exprs() -> Vec<Expr> {
        vec![
            Expr::constant(2.5),
            Expr::affine(1.0, -2.0, 0),
            Expr::exp_affine(0.3, 0.7, 1),
            Expr::Polynomial {
                coeffs: vec![vec![1.0, 0.5, -0.25, 0.1, 0.01], vec![0.0, 2.0]],
            },
            Expr::time_poly(vec![0.1, -0.4, 0.3]),
            Expr::product(vec![
                Expr::exp_affine(0.0, 0.5, 0),
                Expr::time_poly(vec![1.0, 1.0]),
                Expr::affine(2.0, 1.0, 1),
            ]),
            Expr::exp(Expr::sum(vec![
                Expr::time_poly(vec![0.0, 0.5]),
                Expr::affine(0.0, -1.0, 0),
            ])),
        ]
    }

    #[test]
    fn derivatives_match_central_differences() {
        let x = [0.37, -0.81];
        let t = 0.42;
        let h = 1e-6;
        for e in sample_exprs() {
            for axis in 0..2 {
                let mut xp = x;
                let mut xm = x;
                xp[axis] += h;
                xm[axis] -= h;
                let fd = (e.eval(t, &xp) - e.eval(t, &xm)) / (2.0 * h);
                let an = e.d_dx(t, &x, axis);
                assert!(
                    (fd - an).abs() < 1e-7 * (1.0 + an.abs()),
                    "{e:?} axis {axis}"
                );
            }
            let fd = (e.eval(t + h, &x) - e.eval(t - h, &x)) / (2.0 * h);
            let an = e.d_dt(t, &x);
            assert!((fd - an).abs() < 1e-7 * (1.0 + an.abs()), "{e:?} time");
        }
    }

    #[test]
    fn polynomial_degree_is_capped() {
        let e = Expr::Polynomial {
            coeffs: vec![vec![0.0; 6]],
        };
        assert!(e.validate(1).is_err());
        assert!(Expr::affine(0.0, 1.0, 1).validate(1).is_err());
        assert!(Expr::affine(0.0, 1.0, 0).validate(1).is_ok());
    }

    #[test]
    fn time_dependence_detection() {
        assert!(!Expr::time_poly(vec![3.0]).depends_on_time());
        assert!(Expr::time_poly(vec![3.0, 1.0]).depends_on_time());
        assert!(!Expr::affine(0.0, 1.0, 0).depends_on_time());
    }

    #[test]
    fn toml_round_trip() {
        #[derive(Serialize, Deserialize, PartialEq, Debug)]
        struct Wrap {
            e: Vec<Expr>,
        }
        let w = Wrap { e: sample_exprs() };
        let s = toml::to_string(&w).unwrap();
        let back: Wrap = toml::from_str(&s).unwrap();
        assert_eq!(w, back);
    }
}

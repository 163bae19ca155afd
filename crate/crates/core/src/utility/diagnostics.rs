use serde::{Deserialize, Serialize};

use super::UtilityFn;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Probe {
    pub t: f64,
    pub c: f64,
    pub x: Vec<f64>,
}

impl Probe {
    /// Times `{0, ¼, ½, ¾, 1}`, consumptions `10^{-3..3}`, and states `x0`
    /// plus `±spread` along each axis.
    pub fn standard_set(x0: &[f64], spread: f64) -> Vec<Probe> {
        let mut states = vec![x0.to_vec()];
        for i in 0..x0.len() {
            for s in [-spread, spread] {
                let mut x = x0.to_vec();
                x[i] += s;
                states.push(x);
            }
        }
        let mut out = Vec::new();
        for k in 0..=4 {
            let t = k as f64 / 4.0;
            for e in -3..=3 {
                let c = 10f64.powi(e);
                for x in &states {
                    out.push(Probe { t, c, x: x.clone() });
                }
            }
        }
        out
    }
}

/// Maxima over probes of the quantities bounded by the utility cones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConeReport {
    pub probes: usize,
    pub failed_evaluations: usize,
    /// Probes with `u_c <= 0` or `u_cc >= 0`.
    pub shape_violations: usize,
    pub min_risk_aversion: f64,
    pub max_risk_aversion: f64,
    /// `max |u_cx| / u_c` (Euclidean norm over axes).
    pub max_state_sensitivity: f64,
    /// `max (-c u_cc/u_c + |u_cx|/u_c)`, compared with `bound`.
    pub max_cone_quantity: f64,
    pub bound: f64,
    pub within_bound: bool,
    /// `max ln|u(t, e^y, x)| / (1 + |x| + |y|)`.
    pub max_growth_ratio: f64,
    /// Over `t ∈ [δ, 1-δ]`, `c ∈ [1-δ, 1+δ]`.
    pub max_time_sensitivity: f64,
    pub max_curvature_ratio: f64,
    pub max_inverse_curvature_ratio: f64,
    pub inada_low: f64,
    pub inada_high: f64,
    pub inada_ok: bool,
}

/// Probe-based report; never fails, evaluation errors are counted.
pub fn cone_diagnostics(u: &UtilityFn, probes: &[Probe], bound: f64, delta: f64) -> ConeReport {
    let mut r = ConeReport {
        probes: probes.len(),
        failed_evaluations: 0,
        shape_violations: 0,
        min_risk_aversion: f64::INFINITY,
        max_risk_aversion: 0.0,
        max_state_sensitivity: 0.0,
        max_cone_quantity: 0.0,
        bound,
        within_bound: true,
        max_growth_ratio: f64::NEG_INFINITY,
        max_time_sensitivity: 0.0,
        max_curvature_ratio: 0.0,
        max_inverse_curvature_ratio: 0.0,
        inada_low: f64::NAN,
        inada_high: f64::NAN,
        inada_ok: false,
    };
    for p in probes {
        let Ok(pt) = u.point(p.t, p.c, &p.x) else {
            r.failed_evaluations += 1;
            continue;
        };
        if !(pt.marginal > 0.0) || !(pt.curvature < 0.0) {
            r.shape_violations += 1;
            continue;
        }
        let ra = pt.risk_aversion(p.c);
        let sens = pt.marginal_dx[..p.x.len()]
            .iter()
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
            / pt.marginal;
        r.min_risk_aversion = r.min_risk_aversion.min(ra);
        r.max_risk_aversion = r.max_risk_aversion.max(ra);
        r.max_state_sensitivity = r.max_state_sensitivity.max(sens);
        r.max_cone_quantity = r.max_cone_quantity.max(ra + sens);
        if pt.value != 0.0 {
            let xn = p.x.iter().map(|v| v * v).sum::<f64>().sqrt();
            let g = pt.value.abs().ln() / (1.0 + xn + p.c.ln().abs());
            r.max_growth_ratio = r.max_growth_ratio.max(g);
        }
    }
    r.within_bound =
        r.max_cone_quantity <= bound && r.failed_evaluations == 0 && r.shape_violations == 0;

    let states: Vec<&[f64]> = probes.iter().map(|p| p.x.as_slice()).take(16).collect();
    for x in states {
        for i in 0..=4 {
            let t = delta + (1.0 - 2.0 * delta) * i as f64 / 4.0;
            for j in 0..=4 {
                let c = 1.0 - delta + 2.0 * delta * j as f64 / 4.0;
                let Ok(pt) = u.point(t, c, x) else {
                    r.failed_evaluations += 1;
                    continue;
                };
                let cr = (c * pt.curvature / pt.marginal).abs();
                r.max_time_sensitivity = r
                    .max_time_sensitivity
                    .max((pt.marginal_dt / pt.marginal).abs());
                r.max_curvature_ratio = r.max_curvature_ratio.max(cr);
                r.max_inverse_curvature_ratio = r.max_inverse_curvature_ratio.max(1.0 / cr);
            }
        }
    }

    if let Some(p) = probes.first() {
        let at = |c: f64| u.marginal(p.t, c, &p.x).ok();
        if let (Some(lo), Some(mid), Some(hi)) = (at(1e-8), at(1.0), at(1e8)) {
            r.inada_low = lo;
            r.inada_high = hi;
            r.inada_ok = lo > 1e2 * mid && hi < 1e-2 * mid;
        }
    }
    r
}

#[cfg(test)]
mod tests {
    use super::super::{Convolution, SplitterConfig};
    use super::*;
    use crate::expr::Expr;
    use crate::utility::Crra;
    use std::sync::Arc;

    #[test]
    fn log_has_unit_risk_aversion() {
        let r = cone_diagnostics(
            &UtilityFn::log(),
            &Probe::standard_set(&[0.0], 1.0),
            2.0,
            0.1,
        );
        assert!((r.max_risk_aversion - 1.0).abs() < 1e-14);
        assert!((r.min_risk_aversion - 1.0).abs() < 1e-14);
        assert!(r.within_bound && r.inada_ok);
        assert_eq!(r.max_state_sensitivity, 0.0);
    }

    #[test]
    fn crra_three_is_exact_and_bound_is_enforced() {
        let r = cone_diagnostics(
            &UtilityFn::crra(3.0),
            &Probe::standard_set(&[0.0], 1.0),
            2.0,
            0.1,
        );
        assert!((r.max_risk_aversion - 3.0).abs() < 1e-13);
        assert!(!r.within_bound);
    }

    #[test]
    fn state_factor_sensitivity_and_time_ratios() {
        let u = UtilityFn::from_crra(Crra {
            risk_aversion: 2.0,
            impatience: vec![0.0, -0.5],
            state_factor: Expr::exp_affine(0.0, 0.25, 0),
        });
        let r = cone_diagnostics(&u, &Probe::standard_set(&[0.0], 1.0), 5.0, 0.1);
        assert!((r.max_state_sensitivity - 0.25).abs() < 1e-14);
        assert!((r.max_time_sensitivity - 0.5).abs() < 1e-14);
        assert!((r.max_curvature_ratio - 2.0).abs() < 1e-14);
    }

    #[test]
    fn convolution_passes_cone_checks() {
        let u = UtilityFn::Convolution(Arc::new(Convolution::new(
            UtilityFn::crra(2.0).scaled(0.5),
            UtilityFn::log().scaled(0.5),
            SplitterConfig::default(),
        )));
        let r = cone_diagnostics(&u, &Probe::standard_set(&[0.0], 1.0), 2.0, 0.1);
        assert_eq!(r.failed_evaluations, 0);
        assert!(r.min_risk_aversion >= 1.0 - 1e-9 && r.max_risk_aversion <= 2.0 + 1e-9);
        assert!(r.inada_ok);
    }
}

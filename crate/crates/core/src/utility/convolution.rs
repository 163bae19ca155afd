use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::diffusion::MAX_DIM;
use crate::error::{Error, Result};

use super::{Crra, Point, UtilityFn};

/// Root-finding controls for the consumption splitter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitterConfig {
    /// Accepted relative first-order residual `|u1_c - u2_c| / mean(u1_c, u2_c)`.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for SplitterConfig {
    fn default() -> Self {
        SplitterConfig {
            tolerance: 1e-10,
            max_iterations: 200,
        }
    }
}

/// Smallest share `ε` of the initial bracket `[εc, (1-ε)c]`.
const SHARE_FLOOR: f64 = 1e-12;
/// Bracket expansion stops once `|ln(c1/c2)|` would exceed this.
const MAX_LOG_RATIO: f64 = 700.0;

/// Shares for `z = ln(c1/c2)` whose floating-point sum is exactly `c`.
///
/// The smaller share keeps full relative precision; the larger one is
/// `c - small` moved by at most one ulp so that the sum rounds back to `c`;
/// failing that, the small share absorbs the rounding instead.
fn shares(c: f64, z: f64) -> (f64, f64) {
    let (large, small) = exact_pair(c, c / (1.0 + z.abs().exp()));
    ordered(z, small, large)
}

/// `(large, small')` with `large + small' == c` exactly and `small'` equal to
/// `small` whenever possible; failing that, `large >= c/2` makes `c - large`
/// exact and the small share absorbs the rounding.
fn exact_pair(c: f64, small: f64) -> (f64, f64) {
    let small = small.min(c);
    let guess = c - small;
    match [guess, guess.next_up(), guess.next_down()]
        .into_iter()
        .find(|&l| l + small == c)
    {
        Some(l) => (l, small),
        None => (guess, c - guess),
    }
}

fn ordered(z: f64, small: f64, large: f64) -> (f64, f64) {
    if z <= 0.0 {
        (small, large)
    } else {
        (large, small)
    }
}

/// Splits `c` into `(c1, c2)` with `u1_c(t, c1, x) = u2_c(t, c2, x)`.
///
/// Works on `z = ln(c1/c2)`, where the log-marginal gap
/// `g(z) = ln u1_c(c1) - ln u2_c(c2)` is strictly decreasing. Positive
/// scalings are pulled out of both sides first, so that multiplying both
/// utilities by the same constant leaves the split bit-for-bit unchanged.
pub fn split(
    u1: &UtilityFn,
    u2: &UtilityFn,
    t: f64,
    c: f64,
    x: &[f64],
    cfg: SplitterConfig,
) -> Result<(f64, f64)> {
    let fail = |message: String| Error::Splitter { t, c, message };
    if !(c > 0.0) || !c.is_finite() {
        return Err(fail("consumption must be positive and finite".into()));
    }
    let (k1, a) = u1.peel();
    let (k2, b) = u2.peel();
    let offset = if k1 == k2 { 0.0 } else { (k1 / k2).ln() };
    // returns (g, dg/dz)
    let gap = |z: f64| -> Result<(f64, f64)> {
        let (c1, c2) = shares(c, z);
        if c1 == 0.0 {
            return Ok((f64::INFINITY, f64::NAN));
        }
        if c2 == 0.0 {
            return Ok((f64::NEG_INFINITY, f64::NAN));
        }
        let (l1, r1) = a.slope(t, c1, x)?;
        let (l2, r2) = b.slope(t, c2, x)?;
        Ok((offset + l1 - l2, c1 * c2 / c * (r1 + r2)))
    };

    let mut half_width = ((1.0 - SHARE_FLOOR) / SHARE_FLOOR).ln();
    let (mut lo, mut hi);
    loop {
        lo = -half_width;
        hi = half_width;
        let g_lo = gap(lo)?.0;
        let g_hi = gap(hi)?.0;
        if g_lo > 0.0 && g_hi < 0.0 {
            break;
        }
        if g_lo == 0.0 {
            return Ok(shares(c, lo));
        }
        if g_hi == 0.0 {
            return Ok(shares(c, hi));
        }
        if half_width >= MAX_LOG_RATIO {
            return Err(fail(format!(
                "first-order condition not bracketed for |ln(c1/c2)| <= {MAX_LOG_RATIO} \
                 (gap {g_lo:e} at the lower end, {g_hi:e} at the upper end); \
                 marginals violate the Inada conditions"
            )));
        }
        half_width = (2.0 * half_width).min(MAX_LOG_RATIO);
    }

    // Rounding of the larger share can leave tiny plateaus in the gap, so
    // the loop also stops once the bracket no longer moves the shares.
    let mut best = (f64::INFINITY, 0.0);
    let mut z = 0.0f64.clamp(lo, hi);
    let mut converged = false;
    for _ in 0..cfg.max_iterations {
        let (g, dg) = gap(z)?;
        if g.abs() < best.0 {
            best = (g.abs(), z);
        }
        if g == 0.0 {
            converged = true;
            break;
        }
        if g > 0.0 {
            lo = z;
        } else {
            hi = z;
        }
        let newton = z - g / dg;
        let next = if newton.is_finite() && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        let step = (next - z).abs();
        z = next;
        let eps = 4.0 * f64::EPSILON * (1.0 + z.abs());
        if step <= eps || hi - lo <= eps || shares(c, lo) == shares(c, hi) {
            converged = true;
            break;
        }
    }
    let (c1, c2) = shares(c, best.1);
    let m1 = (offset + a.slope(t, c1, x)?.0).exp();
    let m2 = b.slope(t, c2, x)?.0.exp();
    let residual = (m1 - m2).abs() / (0.5 * (m1 + m2));
    if !converged && !(residual <= cfg.tolerance) {
        return Err(fail(format!(
            "first-order residual {residual:e} above tolerance {:e} after {} iterations",
            cfg.tolerance, cfg.max_iterations
        )));
    }
    Ok((c1, c2))
}

/// `(u1 ⊕ u2)(t, c, x) = sup { u1(t, c1, x) + u2(t, c2, x) : c1 + c2 = c }`.
#[derive(Debug, Clone)]
pub struct Convolution {
    pub left: UtilityFn,
    pub right: UtilityFn,
    pub splitter: SplitterConfig,
}

impl Convolution {
    pub fn new(left: UtilityFn, right: UtilityFn, splitter: SplitterConfig) -> Self {
        Convolution {
            left,
            right,
            splitter,
        }
    }

    pub fn split(&self, t: f64, c: f64, x: &[f64]) -> Result<(f64, f64)> {
        split(&self.left, &self.right, t, c, x, self.splitter)
    }

    pub fn point(&self, t: f64, c: f64, x: &[f64]) -> Result<Point> {
        let (c1, c2) = self.split(t, c, x)?;
        let p1 = self.left.point(t, c1, x)?;
        let p2 = self.right.point(t, c2, x)?;
        // u_c/u_cc, u_ct/u_cc and u_cx/u_cc are additive over the parts.
        let tol = p1.tolerance() + p2.tolerance();
        let curvature = p1.marginal / tol;
        let mut marginal_dx = [0.0; MAX_DIM];
        for (i, v) in marginal_dx.iter_mut().enumerate().take(x.len()) {
            *v = curvature * (p1.marginal_dx[i] / p1.curvature + p2.marginal_dx[i] / p2.curvature);
        }
        Ok(Point {
            value: p1.value + p2.value,
            ln_marginal: p1.ln_marginal,
            marginal: p1.marginal,
            curvature,
            marginal_dt: curvature
                * (p1.marginal_dt / p1.curvature + p2.marginal_dt / p2.curvature),
            marginal_dx,
        })
    }

    pub fn slope(&self, t: f64, c: f64, x: &[f64]) -> Result<(f64, f64)> {
        let (c1, c2) = self.split(t, c, x)?;
        let (l1, r1) = self.left.slope(t, c1, x)?;
        let (_, r2) = self.right.slope(t, c2, x)?;
        Ok((l1, 1.0 / (1.0 / r1 + 1.0 / r2)))
    }
}

/// Weighted sup-convolution of several agents' utilities, together with the
/// bookkeeping needed to recover each agent's share of an aggregate amount.
#[derive(Debug, Clone)]
pub struct Aggregate {
    utility: UtilityFn,
    /// Agents with positive weight, in fold order.
    members: Vec<usize>,
    n_agents: usize,
    components: Vec<UtilityFn>,
    weights: Vec<f64>,
    /// Present when every member is a scaled CRRA leaf.
    leaves: Option<Vec<Leaf>>,
}

/// `w k · CRRA`: consumption at log-marginal `ℓ` is
/// `exp((ln(w k) + ν(t) + ln g(x) - ℓ) / a)`.
#[derive(Debug, Clone)]
struct Leaf {
    agent: usize,
    ln_scale: f64,
    crra: Arc<Crra>,
}

/// Left fold `((w¹u¹ ⊕ w²u²) ⊕ w³u³) ⊕ …` over agents with positive weight.
pub fn aggregate(
    components: &[UtilityFn],
    weights: &[f64],
    splitter: SplitterConfig,
) -> Result<Aggregate> {
    if components.is_empty() {
        return Err(Error::Config(
            "aggregate needs at least one component".into(),
        ));
    }
    if components.len() != weights.len() {
        return Err(Error::Config(format!(
            "{} components but {} weights",
            components.len(),
            weights.len()
        )));
    }
    if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
        return Err(Error::Config(format!(
            "weights must be finite and nonnegative: {weights:?}"
        )));
    }
    let members: Vec<usize> = (0..weights.len()).filter(|&m| weights[m] > 0.0).collect();
    if members.is_empty() {
        return Err(Error::Config("all weights are zero".into()));
    }
    let scaled = |m: usize| {
        if weights[m] == 1.0 {
            components[m].clone()
        } else {
            components[m].clone().scaled(weights[m])
        }
    };
    let mut utility = scaled(members[0]);
    for &m in &members[1..] {
        utility = UtilityFn::Convolution(Arc::new(Convolution::new(utility, scaled(m), splitter)));
    }
    let leaves = members
        .iter()
        .map(|&m| match components[m].peel() {
            (k, UtilityFn::Crra(crra)) => Some(Leaf {
                agent: m,
                ln_scale: (weights[m] * k).ln(),
                crra: crra.clone(),
            }),
            _ => None,
        })
        .collect();
    Ok(Aggregate {
        utility,
        members,
        n_agents: components.len(),
        components: components.to_vec(),
        weights: weights.to_vec(),
        leaves,
    })
}

impl Aggregate {
    pub fn utility(&self) -> &UtilityFn {
        &self.utility
    }

    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn n_agents(&self) -> usize {
        self.n_agents
    }

    pub fn point(&self, t: f64, c: f64, x: &[f64]) -> Result<Point> {
        self.utility.point(t, c, x)
    }

    /// Per-agent consumption attaining the aggregate at `c`; zero for agents
    /// with zero weight.
    ///
    /// Inverse marginals add across a sup-convolution, so when three or more
    /// members are all CRRA leaves the split solves one scalar equation for
    /// the common log-marginal. Otherwise the nested binary splits are
    /// unwound.
    pub fn allocate_into(&self, t: f64, c: f64, x: &[f64], out: &mut [f64]) -> Result<()> {
        match &self.leaves {
            Some(leaves) if leaves.len() > 2 => self.allocate_leaves(leaves, t, c, x, out),
            _ => self.allocate_nested_into(t, c, x, out),
        }
    }

    /// Common log-marginal `ℓ` with `Σ_m cᵐ(ℓ) = c`, by safeguarded Newton
    /// on `ln Σ_m cᵐ(ℓ) - ln c`, which decreases with slope between
    /// `-1/min a` and `-1/max a`.
    fn allocate_leaves(
        &self,
        leaves: &[Leaf],
        t: f64,
        c: f64,
        x: &[f64],
        out: &mut [f64],
    ) -> Result<()> {
        let fail = |message: String| Error::Splitter { t, c, message };
        if !(c > 0.0) || !c.is_finite() {
            return Err(fail("consumption must be positive and finite".into()));
        }
        out.iter_mut().for_each(|v| *v = 0.0);
        let n = leaves.len();
        let mut shift = [0.0; 8];
        let mut shift_vec;
        let shift: &mut [f64] = if n <= shift.len() {
            &mut shift[..n]
        } else {
            shift_vec = vec![0.0; n];
            &mut shift_vec
        };
        let lnc = c.ln();
        // every share is at most c, and the largest is at least c/n
        let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
        for (i, leaf) in leaves.iter().enumerate() {
            let g = leaf.crra.check_point(t, c, x)?;
            shift[i] = leaf.ln_scale + leaf.crra.nu(t).0 + g.ln();
            let a = leaf.crra.risk_aversion;
            lo = lo.max(shift[i] - a * lnc);
            hi = hi.max(shift[i] - a * (lnc - (n as f64).ln()));
        }
        // (ln Σ cᵐ - ln c, d/dℓ)
        let gap = |l: f64| {
            let exponent = |i: usize| (shift[i] - l) / leaves[i].crra.risk_aversion;
            let top = (0..n).map(exponent).fold(f64::NEG_INFINITY, f64::max);
            let (mut sum, mut dsum) = (0.0, 0.0);
            for i in 0..n {
                let w = (exponent(i) - top).exp();
                sum += w;
                dsum -= w / leaves[i].crra.risk_aversion;
            }
            (top + sum.ln() - lnc, dsum / sum)
        };
        let mut l = lo;
        let mut converged = false;
        for _ in 0..self.splitter_iterations() {
            let (g, dg) = gap(l);
            if g == 0.0 {
                converged = true;
                break;
            }
            if g > 0.0 {
                lo = l;
            } else {
                hi = l;
            }
            let newton = l - g / dg;
            let next = if newton.is_finite() && newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
            let step = (next - l).abs();
            l = next;
            if step <= 4.0 * f64::EPSILON * (1.0 + l.abs())
                || hi - lo <= 4.0 * f64::EPSILON * (1.0 + l.abs())
            {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(fail(format!(
                "no common marginal found; last log-marginal {l}"
            )));
        }
        for (i, leaf) in leaves.iter().enumerate() {
            out[leaf.agent] = ((shift[i] - l) / leaf.crra.risk_aversion).exp();
        }
        // Rebuild the shares along the fold so that each binary step clears
        // exactly, as the nested splits do: `rest = left + right` with the
        // smaller side kept and the larger one adjusted by at most an ulp.
        let mut rest = c;
        for i in (1..n).rev() {
            let right = out[leaves[i].agent];
            let left: f64 = leaves[..i].iter().map(|leaf| out[leaf.agent]).sum();
            let (l, r) = if right <= left {
                exact_pair(rest, right)
            } else {
                let (r, l) = exact_pair(rest, left);
                (l, r)
            };
            out[leaves[i].agent] = r;
            rest = l;
        }
        out[leaves[0].agent] = rest;
        Ok(())
    }

    fn splitter_iterations(&self) -> usize {
        match &self.utility {
            UtilityFn::Convolution(cv) => cv.splitter.max_iterations,
            _ => SplitterConfig::default().max_iterations,
        }
    }

    /// [`Aggregate::allocate_into`] through the nested binary splits.
    pub fn allocate_nested_into(&self, t: f64, c: f64, x: &[f64], out: &mut [f64]) -> Result<()> {
        out.iter_mut().for_each(|v| *v = 0.0);
        let mut node = &self.utility;
        let mut rest = c;
        for &m in self.members[1..].iter().rev() {
            let UtilityFn::Convolution(cv) = node else {
                unreachable!("aggregate tree is a left fold of convolutions")
            };
            let (cl, cr) = cv.split(t, rest, x)?;
            out[m] = cr;
            rest = cl;
            node = &cv.left;
        }
        out[self.members[0]] = rest;
        Ok(())
    }

    /// Allocates `c` and returns the common weighted marginal `wᵐ uᵐ_c(cᵐ)`,
    /// read off the agent with the largest share.
    pub fn allocate_with_marginal(
        &self,
        t: f64,
        c: f64,
        x: &[f64],
        out: &mut [f64],
    ) -> Result<f64> {
        self.allocate_into(t, c, x, out)?;
        let m = *self
            .members
            .iter()
            .max_by(|&&a, &&b| out[a].total_cmp(&out[b]))
            .expect("at least one member");
        Ok(self.weights[m] * self.components[m].marginal(t, out[m], x)?)
    }

    pub fn allocate(&self, t: f64, c: f64, x: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.n_agents];
        self.allocate_into(t, c, x, &mut out)?;
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::super::{Crra, Utility};
    use super::*;
    use crate::expr::Expr;
    use proptest::prelude::*;

    fn cfg() -> SplitterConfig {
        SplitterConfig::default()
    }

    fn conv(a: UtilityFn, b: UtilityFn) -> UtilityFn {
        UtilityFn::Convolution(Arc::new(Convolution::new(a, b, cfg())))
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    #[test]
    fn symmetric_logs_split_evenly() {
        let (c1, c2) = split(
            &UtilityFn::log(),
            &UtilityFn::log(),
            0.0,
            2.0,
            &[0.0],
            cfg(),
        )
        .unwrap();
        assert_eq!((c1, c2), (1.0, 1.0));
        let v = conv(UtilityFn::log(), UtilityFn::log())
            .value(0.0, 2.0, &[0.0])
            .unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn weighted_logs_split_proportionally() {
        for (w1, w2, c) in [(0.3, 0.7, 1.0), (0.9, 0.1, 5.0), (1e-4, 1.0 - 1e-4, 0.2)] {
            let u1 = UtilityFn::log().scaled(w1);
            let u2 = UtilityFn::log().scaled(w2);
            let (c1, c2) = split(&u1, &u2, 0.0, c, &[0.0], cfg()).unwrap();
            assert!(rel(c1, c * w1 / (w1 + w2)) < 1e-13);
            assert_eq!(c1 + c2, c);
        }
    }

    #[test]
    fn equal_risk_aversion_closed_form() {
        for a in [0.5, 2.0, 4.0] {
            let (w1, w2, c): (f64, f64, f64) = (0.35, 0.65, 3.0);
            let u1 = UtilityFn::crra(a).scaled(w1);
            let u2 = UtilityFn::crra(a).scaled(w2);
            let (c1, _) = split(&u1, &u2, 0.0, c, &[0.0], cfg()).unwrap();
            let e1 = w1.powf(1.0 / a);
            let e2 = w2.powf(1.0 / a);
            assert!(rel(c1, c * e1 / (e1 + e2)) < 1e-10);
            // the composite is again CRRA with the same coefficient
            let u = conv(u1.clone(), u2.clone());
            for c in [0.01, 0.5, 2.0, 40.0] {
                let p = u.point(0.0, c, &[0.0]).unwrap();
                assert!(rel(p.risk_aversion(c), a) < 1e-10);
            }
        }
    }

    #[test]
    fn common_scaling_leaves_split_unchanged() {
        let u1 = UtilityFn::crra(2.0).scaled(0.4);
        let u2 = UtilityFn::crra(0.7);
        for k in [1e-6, 0.3, 17.0, 1e5] {
            for c in [0.01, 1.0, 123.0] {
                let a = split(&u1, &u2, 0.3, c, &[0.0], cfg()).unwrap();
                let b = split(
                    &u1.clone().scaled(k),
                    &u2.clone().scaled(k),
                    0.3,
                    c,
                    &[0.0],
                    cfg(),
                )
                .unwrap();
                assert_eq!(a, b);
            }
        }
    }

    #[test]
    fn split_is_monotone_in_consumption() {
        let u1 = UtilityFn::crra(3.0).scaled(0.2);
        let u2 = UtilityFn::crra(0.6);
        let mut prev = 0.0;
        for k in 0..400 {
            let c = 1e-3 * 1.05f64.powi(k);
            let (c1, _) = split(&u1, &u2, 0.0, c, &[0.0], cfg()).unwrap();
            assert!(c1 >= prev);
            prev = c1;
        }
    }

    fn time_state_pair() -> (UtilityFn, UtilityFn) {
        let u1 = UtilityFn::from_crra(Crra {
            risk_aversion: 2.0,
            impatience: vec![0.0, -0.4],
            state_factor: Expr::exp_affine(0.0, 0.3, 0),
        })
        .scaled(0.6);
        let u2 = UtilityFn::from_crra(Crra {
            risk_aversion: 0.7,
            impatience: vec![0.1, 0.2, -0.5],
            state_factor: Expr::Polynomial {
                coeffs: vec![vec![1.5, 0.2, 0.1]],
            },
        })
        .scaled(0.4);
        (u1, u2)
    }

    /// Differentiates the composite marginal numerically and compares with
    /// the additive identities evaluated at the split.
    #[test]
    fn additive_identities_hold_against_differences() {
        let (u1, u2) = time_state_pair();
        let u = conv(u1.clone(), u2.clone());
        let h = 1e-5;
        for &(t, c, x) in &[(0.3, 1.2, 0.1), (0.8, 0.05, -0.7), (0.1, 30.0, 1.3)] {
            let (c1, c2) = split(&u1, &u2, t, c, &[x], cfg()).unwrap();
            let p1 = u1.point(t, c1, &[x]).unwrap();
            let p2 = u2.point(t, c2, &[x]).unwrap();
            let m = |t: f64, c: f64, x: f64| u.marginal(t, c, &[x]).unwrap();
            let uc = m(t, c, x);
            let ucc = (m(t, c + h * c, x) - m(t, c - h * c, x)) / (2.0 * h * c);
            let uct = (m(t + h, c, x) - m(t - h, c, x)) / (2.0 * h);
            let ucx = (m(t, c, x + h) - m(t, c, x - h)) / (2.0 * h);
            assert!(rel(uc / ucc, p1.tolerance() + p2.tolerance()) < 1e-6);
            let sum_t = p1.marginal_dt / p1.curvature + p2.marginal_dt / p2.curvature;
            assert!(rel(uct / ucc, sum_t) < 1e-6);
            let sum_x = p1.marginal_dx[0] / p1.curvature + p2.marginal_dx[0] / p2.curvature;
            assert!(rel(ucx / ucc, sum_x) < 1e-6);
            // the analytic composite derivatives agree with the differences
            let p = u.point(t, c, &[x]).unwrap();
            assert!(rel(p.curvature, ucc) < 1e-6);
            assert!(rel(p.marginal_dt, uct) < 1e-6);
            assert!(rel(p.marginal_dx[0], ucx) < 1e-6);
            // envelope: the derivative of the value is the common marginal
            let v = |c: f64| u.value(t, c, &[x]).unwrap();
            assert!(rel((v(c + h * c) - v(c - h * c)) / (2.0 * h * c), uc) < 1e-6);
            // risk tolerance mixes with the consumption shares
            let inv_a = (c1 / c) / p1.risk_aversion(c1) + (c2 / c) / p2.risk_aversion(c2);
            assert!(rel(1.0 / p.risk_aversion(c), inv_a) < 1e-6);
        }
    }

    #[test]
    fn non_inada_marginals_are_rejected() {
        #[derive(Debug)]
        struct Bounded(f64);
        impl Utility for Bounded {
            fn point(&self, _t: f64, c: f64, _x: &[f64]) -> Result<Point> {
                let m = self.0 / (1.0 + c);
                Ok(Point {
                    value: self.0 * c.ln_1p(),
                    ln_marginal: m.ln(),
                    marginal: m,
                    curvature: -m / (1.0 + c),
                    marginal_dt: 0.0,
                    marginal_dx: [0.0; MAX_DIM],
                })
            }
        }
        let u1 = UtilityFn::Custom(Arc::new(Bounded(1.0)));
        let u2 = UtilityFn::Custom(Arc::new(Bounded(10.0)));
        let err = split(&u1, &u2, 0.0, 1.0, &[0.0], cfg());
        assert!(matches!(err, Err(Error::Splitter { .. })));
    }

    #[test]
    fn single_component_is_returned_unchanged() {
        let u = UtilityFn::crra(2.0);
        let agg = aggregate(std::slice::from_ref(&u), &[1.0], cfg()).unwrap();
        assert!(matches!(agg.utility(), UtilityFn::Crra(a) if a.risk_aversion == 2.0));
        assert_eq!(agg.allocate(0.0, 3.0, &[0.0]).unwrap(), vec![3.0]);
    }

    #[test]
    fn half_weighted_logs_at_two() {
        let agg = aggregate(&[UtilityFn::log(), UtilityFn::log()], &[0.5, 0.5], cfg()).unwrap();
        assert_eq!(agg.point(0.0, 2.0, &[0.0]).unwrap().value, 0.0);
    }

    #[test]
    fn zero_weights_are_dropped() {
        let comps = [UtilityFn::log(), UtilityFn::crra(2.0), UtilityFn::crra(0.5)];
        let agg = aggregate(&comps, &[0.4, 0.0, 0.6], cfg()).unwrap();
        assert_eq!(agg.members(), &[0, 2]);
        let alloc = agg.allocate(0.0, 2.0, &[0.0]).unwrap();
        assert_eq!(alloc[1], 0.0);
        assert_eq!(alloc[0] + alloc[2], 2.0);
        assert!(matches!(
            aggregate(&comps, &[0.0; 3], cfg()),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn three_equal_crra_keep_their_risk_aversion() {
        let a = 2.5;
        let comps = vec![UtilityFn::crra(a); 3];
        let agg = aggregate(&comps, &[0.2, 0.5, 0.3], cfg()).unwrap();
        for c in [0.1, 1.0, 9.0] {
            let p = agg.point(0.5, c, &[0.0]).unwrap();
            assert!(rel(p.risk_aversion(c), a) < 1e-10);
            let alloc = agg.allocate(0.5, c, &[0.0]).unwrap();
            let z: f64 = [0.2f64, 0.5, 0.3].iter().map(|w| w.powf(1.0 / a)).sum();
            for (m, w) in [0.2f64, 0.5, 0.3].iter().enumerate() {
                assert!(rel(alloc[m], c * w.powf(1.0 / a) / z) < 1e-10);
            }
        }
    }

    #[test]
    fn closed_form_allocation_matches_nested_splits() {
        let mut tilted = Crra::new(2.0);
        tilted.impatience = vec![0.0, -0.3];
        tilted.state_factor = Expr::exp_affine(0.0, 0.4, 0);
        let us = vec![
            UtilityFn::log(),
            UtilityFn::from_crra(tilted),
            UtilityFn::crra(3.0).scaled(2.0),
            UtilityFn::crra(0.5),
        ];
        for w in [
            vec![0.25; 4],
            vec![0.87, 0.1, 0.029, 0.001],
            vec![0.4, 0.0, 0.3, 0.3],
        ] {
            let agg = aggregate(&us, &w, cfg()).unwrap();
            for &c in &[1e-4, 0.03, 1.0, 7.5, 1e4] {
                for &(t, x) in &[(0.0, -1.0), (0.6, 0.5)] {
                    let fast = agg.allocate(t, c, &[x]).unwrap();
                    let mut nested = vec![0.0; 4];
                    agg.allocate_nested_into(t, c, &[x], &mut nested).unwrap();
                    assert_eq!(fast.iter().sum::<f64>(), c);
                    for m in 0..4 {
                        assert!(
                            rel(fast[m], nested[m]) < 1e-9
                                || (fast[m] - nested[m]).abs() < 1e-12 * c,
                            "{w:?} {c} {fast:?} {nested:?}"
                        );
                    }
                    let marg: Vec<f64> = (0..4)
                        .filter(|&m| w[m] > 0.0)
                        .map(|m| w[m] * us[m].marginal(t, fast[m], &[x]).unwrap())
                        .collect();
                    for v in &marg {
                        assert!(rel(*v, marg[0]) < 1e-10, "{marg:?}");
                    }
                }
            }
        }
    }

    #[test]
    fn nesting_order_does_not_matter() {
        let a = UtilityFn::crra(0.5).scaled(0.2);
        let b = UtilityFn::log().scaled(0.5);
        let c = UtilityFn::crra(3.0).scaled(0.3);
        let left = conv(conv(a.clone(), b.clone()), c.clone());
        let right = conv(a, conv(b, c));
        for z in [0.05, 1.0, 20.0] {
            let p = left.point(0.4, z, &[0.0]).unwrap();
            let q = right.point(0.4, z, &[0.0]).unwrap();
            assert!(rel(p.value, q.value) < 1e-12 || (p.value - q.value).abs() < 1e-12);
            assert!(rel(p.marginal, q.marginal) < 1e-12);
            assert!(rel(p.curvature, q.curvature) < 1e-10);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn split_clears_exactly_and_satisfies_foc(
            a1 in 0.3f64..5.0, a2 in 0.3f64..5.0,
            w in 0.01f64..0.99, lc in -7.0f64..7.0, t in 0.0f64..1.0,
        ) {
            let c = lc.exp();
            let u1 = UtilityFn::crra(a1).scaled(w);
            let u2 = UtilityFn::crra(a2).scaled(1.0 - w);
            let (c1, c2) = split(&u1, &u2, t, c, &[0.0], cfg()).unwrap();
            prop_assert_eq!(c1 + c2, c);
            prop_assert!(c1 > 0.0 && c2 > 0.0);
            let m1 = u1.marginal(t, c1, &[0.0]).unwrap();
            let m2 = u2.marginal(t, c2, &[0.0]).unwrap();
            prop_assert!((m1 - m2).abs() <= 1e-10 * 0.5 * (m1 + m2));
        }

        #[test]
        fn aggregate_allocation_clears(
            w in proptest::collection::vec(0.05f64..1.0, 3),
            a in proptest::collection::vec(0.4f64..4.0, 3),
            lc in -4.0f64..4.0,
        ) {
            let s: f64 = w.iter().sum();
            let w: Vec<f64> = w.iter().map(|v| v / s).collect();
            let comps: Vec<UtilityFn> = a.iter().map(|&a| UtilityFn::crra(a)).collect();
            let agg = aggregate(&comps, &w, cfg()).unwrap();
            let c = lc.exp();
            let alloc = agg.allocate(0.0, c, &[0.0]).unwrap();
            let total: f64 = alloc.iter().sum();
            prop_assert!((total - c).abs() <= 4.0 * f64::EPSILON * c);
            let uc = agg.point(0.0, c, &[0.0]).unwrap().marginal;
            for m in 0..3 {
                let um = w[m] * comps[m].marginal(0.0, alloc[m], &[0.0]).unwrap();
                prop_assert!((um - uc).abs() <= 1e-9 * uc);
            }
        }
    }
}

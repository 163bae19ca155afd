//! State diffusion `dX = b(t,X)dt + σ(t,X)dW` on `[0,1]`: coefficient
//! validation, Euler–Maruyama simulation with per-path random substreams,
//! pathwise time integrals, and the time/space grids shared with the PDE
//! solvers.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::Expr;

/// Largest supported state dimension.
pub const MAX_DIM: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffusionSpec {
    pub dimension: usize,
    pub initial_state: Vec<f64>,
    /// One expression per axis.
    pub drift: Vec<Expr>,
    /// Row-major `d × d` matrix of expressions.
    pub volatility: Vec<Vec<Expr>>,
    /// Declared bound `N` on `|σ⁻¹(t,x)|` (Frobenius norm).
    pub inverse_bound: f64,
    /// Declared continuity modulus `ω(ε)`, read as a function of `x[0] = ε`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub continuity_modulus: Option<Expr>,
}

impl DiffusionSpec {
    /// Diffusion with constant drift vector and constant volatility matrix.
    pub fn constant(initial_state: Vec<f64>, drift: Vec<f64>, volatility: Vec<Vec<f64>>) -> Self {
        let d = initial_state.len();
        let inverse_bound = DMatrix::from_fn(d, d, |i, j| volatility[i][j])
            .try_inverse()
            .map_or(f64::INFINITY, |inv| inv.norm());
        DiffusionSpec {
            dimension: d,
            initial_state,
            drift: drift.into_iter().map(Expr::constant).collect(),
            volatility: volatility
                .into_iter()
                .map(|row| row.into_iter().map(Expr::constant).collect())
                .collect(),
            inverse_bound,
            continuity_modulus: None,
        }
    }

    /// Driftless unit-volatility Brownian motion started at `x0`.
    pub fn brownian(x0: f64) -> Self {
        DiffusionSpec::constant(vec![x0], vec![0.0], vec![vec![1.0]])
    }

    pub fn check(&self) -> Result<()> {
        let d = self.dimension;
        if d == 0 {
            return Err(Error::Config(
                "diffusion dimension must be at least 1".into(),
            ));
        }
        if d > MAX_DIM {
            return Err(Error::Config(format!(
                "dimension {d} exceeds the supported {MAX_DIM}"
            )));
        }
        if self.initial_state.len() != d {
            return Err(Error::Config(format!(
                "initial state has length {}, dimension is {d}",
                self.initial_state.len()
            )));
        }
        if self.drift.len() != d {
            return Err(Error::Config(format!(
                "drift has {} entries, need {d}",
                self.drift.len()
            )));
        }
        if self.volatility.len() != d || self.volatility.iter().any(|r| r.len() != d) {
            return Err(Error::Config(format!("volatility must be {d}x{d}")));
        }
        if !(self.inverse_bound > 0.0) {
            return Err(Error::Config("inverse_bound must be positive".into()));
        }
        for e in self.drift.iter().chain(self.volatility.iter().flatten()) {
            e.validate(d)?;
        }
        Ok(())
    }

    pub fn drift_into(&self, t: f64, x: &[f64], out: &mut [f64]) {
        for (o, e) in out.iter_mut().zip(&self.drift) {
            *o = e.eval(t, x);
        }
    }

    /// Row-major volatility matrix.
    pub fn volatility_into(&self, t: f64, x: &[f64], out: &mut [f64]) {
        let d = self.dimension;
        for i in 0..d {
            for j in 0..d {
                out[i * d + j] = self.volatility[i][j].eval(t, x);
            }
        }
    }

    pub fn volatility_matrix(&self, t: f64, x: &[f64]) -> DMatrix<f64> {
        let d = self.dimension;
        DMatrix::from_fn(d, d, |i, j| self.volatility[i][j].eval(t, x))
    }

    /// `a = ½ σ σ*`, row-major.
    pub fn diffusion_tensor_into(&self, t: f64, x: &[f64], sigma: &mut [f64], out: &mut [f64]) {
        let d = self.dimension;
        self.volatility_into(t, x, sigma);
        for i in 0..d {
            for j in 0..d {
                let mut acc = 0.0;
                for k in 0..d {
                    acc += sigma[i * d + k] * sigma[j * d + k];
                }
                out[i * d + j] = 0.5 * acc;
            }
        }
    }

    pub fn is_constant_in_time(&self) -> bool {
        !self
            .drift
            .iter()
            .chain(self.volatility.iter().flatten())
            .any(Expr::depends_on_time)
    }
}

/// Increasing times on `[0, 1]` with exact endpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    times: Vec<f64>,
}

impl TimeGrid {
    pub fn uniform(n_steps: usize) -> Result<Self> {
        if n_steps == 0 {
            return Err(Error::Config("time grid needs at least one step".into()));
        }
        let mut times: Vec<f64> = (0..=n_steps).map(|k| k as f64 / n_steps as f64).collect();
        times[n_steps] = 1.0;
        Ok(TimeGrid { times })
    }

    pub fn from_times(times: Vec<f64>) -> Result<Self> {
        if times.len() < 2 || times[0] != 0.0 || *times.last().unwrap() != 1.0 {
            return Err(Error::Config(
                "time grid must start at 0 and end at 1".into(),
            ));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config(
                "time grid must be strictly increasing".into(),
            ));
        }
        Ok(TimeGrid { times })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn n_steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn n_times(&self) -> usize {
        self.times.len()
    }

    pub fn dt(&self, k: usize) -> f64 {
        self.times[k + 1] - self.times[k]
    }

    /// Index of the grid time equal to `t`, if any.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        self.times.iter().position(|&s| (s - t).abs() < 1e-12)
    }
}

/// Tensor-product box grid; the last axis varies fastest in flat indexing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpatialGrid {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub points: Vec<usize>,
}

impl SpatialGrid {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>, points: Vec<usize>) -> Result<Self> {
        let g = SpatialGrid {
            lower,
            upper,
            points,
        };
        g.check()?;
        Ok(g)
    }

    fn check(&self) -> Result<()> {
        let d = self.lower.len();
        if d == 0 || d > MAX_DIM || self.upper.len() != d || self.points.len() != d {
            return Err(Error::Config("spatial grid axes are inconsistent".into()));
        }
        for i in 0..d {
            if !(self.upper[i] > self.lower[i]) {
                return Err(Error::Config(format!(
                    "axis {i}: upper bound must exceed lower"
                )));
            }
            if self.points[i] < 3 {
                return Err(Error::Config(format!("axis {i}: need at least 3 points")));
            }
        }
        Ok(())
    }

    /// Box `X0 ± width·s_i` with `s_i` the largest sampled per-axis volatility
    /// `sqrt((σσ*)_ii)`; unit width is used on axes with zero volatility.
    pub fn around(spec: &DiffusionSpec, width: f64, points: usize) -> Result<Self> {
        spec.check()?;
        let d = spec.dimension;
        let x0 = &spec.initial_state;
        let mut scale = vec![0.0f64; d];
        let mut sigma = vec![0.0; d * d];
        // coarse probe of the unscaled box
        let probe = SpatialGrid::new(
            x0.iter().map(|v| v - width).collect(),
            x0.iter().map(|v| v + width).collect(),
            vec![9; d],
        )?;
        let mut x = vec![0.0; d];
        for k in 0..=8 {
            let t = k as f64 / 8.0;
            for n in 0..probe.n_nodes() {
                probe.node_into(n, &mut x);
                spec.volatility_into(t, &x, &mut sigma);
                for i in 0..d {
                    let s: f64 = (0..d).map(|j| sigma[i * d + j].powi(2)).sum::<f64>().sqrt();
                    if s.is_finite() {
                        scale[i] = scale[i].max(s);
                    }
                }
            }
        }
        let half: Vec<f64> = scale
            .iter()
            .map(|&s| width * if s > 0.0 { s } else { 1.0 })
            .collect();
        SpatialGrid::new(
            x0.iter().zip(&half).map(|(c, h)| c - h).collect(),
            x0.iter().zip(&half).map(|(c, h)| c + h).collect(),
            vec![points; d],
        )
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn n_nodes(&self) -> usize {
        self.points.iter().product()
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        (self.upper[axis] - self.lower[axis]) / (self.points[axis] - 1) as f64
    }

    pub fn coordinate(&self, axis: usize, k: usize) -> f64 {
        if k + 1 == self.points[axis] {
            self.upper[axis]
        } else {
            self.lower[axis] + k as f64 * self.spacing(axis)
        }
    }

    pub fn axis(&self, axis: usize) -> Vec<f64> {
        (0..self.points[axis])
            .map(|k| self.coordinate(axis, k))
            .collect()
    }

    /// Per-axis indices of flat node `n`.
    pub fn multi_index(&self, mut n: usize, out: &mut [usize]) {
        for i in (0..self.dim()).rev() {
            out[i] = n % self.points[i];
            n /= self.points[i];
        }
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter()
            .zip(&self.points)
            .fold(0, |acc, (&k, &p)| acc * p + k)
    }

    pub fn node_into(&self, n: usize, out: &mut [f64]) {
        let mut idx = [0usize; MAX_DIM];
        self.multi_index(n, &mut idx[..self.dim()]);
        for i in 0..self.dim() {
            out[i] = self.coordinate(i, idx[i]);
        }
    }

    pub fn node(&self, n: usize) -> Vec<f64> {
        let mut x = vec![0.0; self.dim()];
        self.node_into(n, &mut x);
        x
    }

    /// Flat stride of `axis`.
    pub fn stride(&self, axis: usize) -> usize {
        self.points[axis + 1..].iter().product()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .enumerate()
            .all(|(i, &v)| v >= self.lower[i] && v <= self.upper[i])
    }

    pub fn is_boundary(&self, n: usize) -> bool {
        let mut idx = [0usize; MAX_DIM];
        self.multi_index(n, &mut idx[..self.dim()]);
        (0..self.dim()).any(|i| idx[i] == 0 || idx[i] + 1 == self.points[i])
    }

    /// Whether node `n` lies within `fraction` of the half-width of the box
    /// around its centre on every axis.
    pub fn in_core(&self, n: usize, fraction: f64) -> bool {
        let x = self.node(n);
        (0..self.dim()).all(|i| {
            let c = 0.5 * (self.lower[i] + self.upper[i]);
            let h = 0.5 * (self.upper[i] - self.lower[i]);
            (x[i] - c).abs() <= fraction * h + 1e-12
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModulusRow {
    pub distance: f64,
    pub empirical: f64,
    pub declared: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffusionValidation {
    pub samples: usize,
    pub max_inverse_norm: f64,
    pub inverse_bound: f64,
    pub max_drift_norm: f64,
    pub max_volatility_norm: f64,
    pub modulus: Vec<ModulusRow>,
    /// `max |σ⁻¹| > N` or σ singular somewhere.
    pub violation: bool,
}

/// Samples `b`, `σ` and `σ⁻¹` on every (time, node) pair of the grids.
pub fn validate_coefficients(
    spec: &DiffusionSpec,
    grid: &SpatialGrid,
    tgrid: &TimeGrid,
) -> Result<DiffusionValidation> {
    spec.check()?;
    let d = spec.dimension;
    if grid.dim() != d {
        return Err(Error::Config("spatial grid dimension mismatch".into()));
    }
    let mut x = vec![0.0; d];
    let mut b = vec![0.0; d];
    let mut max_inv = 0.0f64;
    let mut max_b = 0.0f64;
    let mut max_s = 0.0f64;
    let mut samples = 0;
    for &t in tgrid.times() {
        for n in 0..grid.n_nodes() {
            grid.node_into(n, &mut x);
            spec.drift_into(t, &x, &mut b);
            let s = spec.volatility_matrix(t, &x);
            if let Some(bad) = b.iter().chain(s.iter()).find(|v| !v.is_finite()) {
                return Err(Error::eval(
                    format!("diffusion coefficients at t={t}, x={x:?}"),
                    format!("non-finite value {bad}"),
                ));
            }
            max_b = max_b.max(b.iter().map(|v| v * v).sum::<f64>().sqrt());
            max_s = max_s.max(s.norm());
            let inv_norm = s.try_inverse().map_or(f64::INFINITY, |m| m.norm());
            max_inv = max_inv.max(if inv_norm.is_finite() {
                inv_norm
            } else {
                f64::INFINITY
            });
            samples += 1;
        }
    }
    let modulus = continuity_table(spec, grid, tgrid);
    Ok(DiffusionValidation {
        samples,
        max_inverse_norm: max_inv,
        inverse_bound: spec.inverse_bound,
        max_drift_norm: max_b,
        max_volatility_norm: max_s,
        modulus,
        violation: !(max_inv <= spec.inverse_bound),
    })
}

fn continuity_table(spec: &DiffusionSpec, grid: &SpatialGrid, tgrid: &TimeGrid) -> Vec<ModulusRow> {
    let d = spec.dimension;
    let n_t = tgrid.n_times();
    let t_stride = (n_t / 16).max(1);
    let mut x = vec![0.0; d];
    let mut y = vec![0.0; d];
    let mut idx = vec![0usize; d];
    let mut rows = Vec::new();
    for &steps in &[1usize, 2, 4, 8, 16] {
        let mut empirical = 0.0f64;
        let mut distance = f64::INFINITY;
        let mut any = false;
        for axis in 0..d {
            if steps >= grid.points[axis] {
                continue;
            }
            distance = distance.min(steps as f64 * grid.spacing(axis));
            for k in (0..n_t).step_by(t_stride) {
                let t = tgrid.times()[k];
                for n in 0..grid.n_nodes() {
                    grid.multi_index(n, &mut idx);
                    if idx[axis] + steps >= grid.points[axis] {
                        continue;
                    }
                    grid.node_into(n, &mut x);
                    y.copy_from_slice(&x);
                    y[axis] = grid.coordinate(axis, idx[axis] + steps);
                    let diff = spec.volatility_matrix(t, &x) - spec.volatility_matrix(t, &y);
                    empirical = empirical.max(diff.norm());
                    any = true;
                }
            }
        }
        if any {
            let declared = spec
                .continuity_modulus
                .as_ref()
                .map(|w| w.eval(0.0, &[distance]));
            rows.push(ModulusRow {
                distance,
                empirical,
                declared,
            });
        }
    }
    rows
}

/// Simulated paths, stored row-major as `[path][time][axis]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathBundle {
    pub times: TimeGrid,
    pub dim: usize,
    pub n_paths: usize,
    pub seed: u64,
    states: Vec<f64>,
    increments: Vec<f64>,
}

impl PathBundle {
    pub fn n_times(&self) -> usize {
        self.times.n_times()
    }

    pub fn state(&self, path: usize, k: usize) -> &[f64] {
        let o = (path * self.n_times() + k) * self.dim;
        &self.states[o..o + self.dim]
    }

    /// Brownian increment over `[t_k, t_{k+1}]`.
    pub fn increment(&self, path: usize, k: usize) -> &[f64] {
        let o = (path * self.n_times().saturating_sub(1) + k) * self.dim;
        &self.increments[o..o + self.dim]
    }

    /// All states of one path, `n_times × dim`.
    pub fn path(&self, path: usize) -> &[f64] {
        let w = self.n_times() * self.dim;
        &self.states[path * w..(path + 1) * w]
    }

    pub fn terminal(&self, path: usize) -> &[f64] {
        self.state(path, self.n_times() - 1)
    }

    /// The first `n` paths.
    pub fn subset(&self, n: usize) -> PathBundle {
        let n = n.min(self.n_paths);
        let nt = self.n_times();
        PathBundle {
            times: self.times.clone(),
            dim: self.dim,
            n_paths: n,
            seed: self.seed,
            states: self.states[..n * nt * self.dim].to_vec(),
            increments: self.increments[..n * (nt - 1) * self.dim].to_vec(),
        }
    }
}

/// RNG substream for one path. Paths are independent of how many others are
/// simulated alongside them.
pub fn path_rng(seed: u64, path: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path as u64);
    rng
}

/// Simulates one path into `states` (`n_times × d`) and `increments`
/// (`(n_times-1) × d`).
pub fn simulate_path_into(
    spec: &DiffusionSpec,
    tgrid: &TimeGrid,
    seed: u64,
    path: usize,
    states: &mut [f64],
    increments: &mut [f64],
) {
    let d = spec.dimension;
    let mut rng = path_rng(seed, path);
    let mut b = vec![0.0; d];
    let mut s = vec![0.0; d * d];
    states[..d].copy_from_slice(&spec.initial_state);
    for k in 0..tgrid.n_steps() {
        let t = tgrid.times()[k];
        let dt = tgrid.dt(k);
        let sq = dt.sqrt();
        let dw = &mut increments[k * d..(k + 1) * d];
        for v in dw.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *v = sq * z;
        }
        let (head, tail) = states.split_at_mut((k + 1) * d);
        let x = &head[k * d..];
        spec.drift_into(t, x, &mut b);
        spec.volatility_into(t, x, &mut s);
        let next = &mut tail[..d];
        for i in 0..d {
            let mut v = x[i] + b[i] * dt;
            for j in 0..d {
                v += s[i * d + j] * dw[j];
            }
            next[i] = v;
        }
    }
}

/// Euler–Maruyama paths; identical for serial and parallel execution.
pub fn simulate_paths(
    spec: &DiffusionSpec,
    tgrid: &TimeGrid,
    n_paths: usize,
    seed: u64,
) -> Result<PathBundle> {
    spec.check()?;
    if n_paths == 0 {
        return Err(Error::Config("n_paths must be positive".into()));
    }
    let d = spec.dimension;
    let nt = tgrid.n_times();
    let mut states = vec![0.0; n_paths * nt * d];
    let mut increments = vec![0.0; n_paths * (nt - 1) * d];
    states
        .par_chunks_mut(nt * d)
        .zip(increments.par_chunks_mut((nt - 1) * d))
        .enumerate()
        .for_each(|(p, (st, inc))| simulate_path_into(spec, tgrid, seed, p, st, inc));
    Ok(PathBundle {
        times: tgrid.clone(),
        dim: d,
        n_paths,
        seed,
        states,
        increments,
    })
}

/// Row-major `n_paths × n_times` array of pathwise quantities.
#[derive(Debug, Clone, PartialEq)]
pub struct PathArray {
    pub n_paths: usize,
    pub n_times: usize,
    data: Vec<f64>,
}

impl PathArray {
    pub fn zeros(n_paths: usize, n_times: usize) -> Self {
        PathArray {
            n_paths,
            n_times,
            data: vec![0.0; n_paths * n_times],
        }
    }

    pub fn from_rows(n_paths: usize, n_times: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), n_paths * n_times);
        PathArray {
            n_paths,
            n_times,
            data,
        }
    }

    pub fn row(&self, p: usize) -> &[f64] {
        &self.data[p * self.n_times..(p + 1) * self.n_times]
    }

    pub fn row_mut(&mut self, p: usize) -> &mut [f64] {
        &mut self.data[p * self.n_times..(p + 1) * self.n_times]
    }

    pub fn get(&self, p: usize, k: usize) -> f64 {
        self.data[p * self.n_times + k]
    }

    pub fn last(&self, p: usize) -> f64 {
        self.get(p, self.n_times - 1)
    }

    pub fn column(&self, k: usize) -> Vec<f64> {
        (0..self.n_paths).map(|p| self.get(p, k)).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> PathArray {
        PathArray {
            n_paths: self.n_paths,
            n_times: self.n_times,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub(crate) fn par_rows_mut(&mut self) -> rayon::slice::ChunksMut<'_, f64> {
        let w = self.n_times;
        self.data.par_chunks_mut(w)
    }
}

/// Cumulative trapezoidal `∫_0^t g(s, X_s) ds` along every path.
pub fn path_integral<G>(bundle: &PathBundle, g: G) -> Result<PathArray>
where
    G: Fn(f64, &[f64]) -> f64 + Sync,
{
    let nt = bundle.n_times();
    let times = bundle.times.times();
    let mut out = PathArray::zeros(bundle.n_paths, nt);
    let bad: Option<(usize, usize, f64)> = out
        .par_rows_mut()
        .enumerate()
        .map(|(p, row)| {
            let mut prev = g(times[0], bundle.state(p, 0));
            if !prev.is_finite() {
                return Some((p, 0, prev));
            }
            row[0] = 0.0;
            for k in 1..nt {
                let cur = g(times[k], bundle.state(p, k));
                if !cur.is_finite() {
                    return Some((p, k, cur));
                }
                row[k] = row[k - 1] + 0.5 * (prev + cur) * (times[k] - times[k - 1]);
                prev = cur;
            }
            None
        })
        .find_first(Option::is_some)
        .flatten();
    if let Some((p, k, v)) = bad {
        return Err(Error::eval(
            format!("path {p}, time index {k}"),
            format!("non-finite integrand {v}"),
        ));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::Estimate;

    fn unit_grid(d: usize) -> SpatialGrid {
        SpatialGrid::new(vec![-1.0; d], vec![1.0; d], vec![5; d]).unwrap()
    }

    #[test]
    fn identity_volatility_passes() {
        let spec = DiffusionSpec::brownian(0.0);
        let r =
            validate_coefficients(&spec, &unit_grid(1), &TimeGrid::uniform(4).unwrap()).unwrap();
        assert!(!r.violation);
        assert_eq!(r.max_inverse_norm, 1.0);
    }

    #[test]
    fn vanishing_volatility_is_flagged() {
        let mut spec = DiffusionSpec::brownian(0.0);
        spec.volatility = vec![vec![Expr::affine(0.0, 1.0, 0)]];
        let grid = unit_grid(1); // contains 0
        let r = validate_coefficients(&spec, &grid, &TimeGrid::uniform(4).unwrap()).unwrap();
        assert!(r.violation);
        assert!(r.max_inverse_norm.is_infinite());
    }

    #[test]
    fn diagonal_volatility_inverse_norm() {
        let mut spec = DiffusionSpec::constant(
            vec![0.0, 0.0],
            vec![0.0, 0.0],
            vec![vec![1.0, 0.0], vec![0.0, 2.0]],
        );
        spec.inverse_bound = 1.2;
        let r =
            validate_coefficients(&spec, &unit_grid(2), &TimeGrid::uniform(2).unwrap()).unwrap();
        assert!(!r.violation);
        assert!((r.max_inverse_norm - 1.25f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn non_finite_coefficient_is_an_error() {
        let mut spec = DiffusionSpec::brownian(0.0);
        spec.drift = vec![Expr::exp_affine(0.0, 1000.0, 0)];
        let err = validate_coefficients(&spec, &unit_grid(1), &TimeGrid::uniform(2).unwrap());
        assert!(matches!(err, Err(Error::Evaluation { .. })));
    }

    #[test]
    fn config_errors() {
        let spec = DiffusionSpec::brownian(0.0);
        let tg = TimeGrid::uniform(4).unwrap();
        assert!(matches!(
            simulate_paths(&spec, &tg, 0, 1),
            Err(Error::Config(_))
        ));
        assert!(TimeGrid::uniform(0).is_err());
        assert!(SpatialGrid::new(vec![0.0], vec![1.0], vec![2]).is_err());
    }

    #[test]
    fn driftless_brownian_moments() {
        let spec = DiffusionSpec::brownian(0.0);
        let tg = TimeGrid::uniform(10).unwrap();
        let n = 20_000;
        let b = simulate_paths(&spec, &tg, n, 7).unwrap();
        let x1: Vec<f64> = (0..n).map(|p| b.terminal(p)[0]).collect();
        let e = Estimate::from_samples(&x1);
        assert!(e.mean.abs() <= 3.0 / (n as f64).sqrt());
        // Var(X1) = 1; the sample variance has standard error sqrt(2/(n-1)).
        let sq: Vec<f64> = x1.iter().map(|v| (v - e.mean).powi(2)).collect();
        let var = crate::stats::pairwise_sum(&sq) / (n - 1) as f64;
        assert!((var - 1.0).abs() <= 3.0 * (2.0 / (n - 1) as f64).sqrt());
        // per-step increment variance is Δt
        let inc: Vec<f64> = (0..n).map(|p| b.increment(p, 3)[0].powi(2)).collect();
        let v = Estimate::from_samples(&inc);
        assert!(v.within(0.1, 3.0));
        for p in 0..10 {
            assert_eq!(b.state(p, 0), &[0.0]);
        }
    }

    #[test]
    fn deterministic_ode_is_exact() {
        let spec = DiffusionSpec::constant(vec![0.0], vec![1.0], vec![vec![0.0]]);
        let tg = TimeGrid::uniform(8).unwrap();
        let b = simulate_paths(&spec, &tg, 3, 1).unwrap();
        for p in 0..3 {
            for (k, &t) in tg.times().iter().enumerate() {
                assert_eq!(b.state(p, k)[0], t);
            }
        }
    }

    #[test]
    fn substreams_make_paths_independent_of_count() {
        let spec = DiffusionSpec::brownian(0.3);
        let tg = TimeGrid::uniform(5).unwrap();
        let small = simulate_paths(&spec, &tg, 4, 99).unwrap();
        let large = simulate_paths(&spec, &tg, 9, 99).unwrap();
        for p in 0..4 {
            assert_eq!(small.path(p), large.path(p));
        }
        let again = simulate_paths(&spec, &tg, 4, 99).unwrap();
        assert_eq!(small, again);
    }

    #[test]
    fn euler_error_decreases_under_step_halving() {
        // dX = -X dt, X0 = 1, exact X1 = e^{-1}
        let mut spec = DiffusionSpec::constant(vec![1.0], vec![0.0], vec![vec![0.0]]);
        spec.drift = vec![Expr::affine(0.0, -1.0, 0)];
        let mut prev = f64::INFINITY;
        for n in [4, 8, 16, 32, 64] {
            let b = simulate_paths(&spec, &TimeGrid::uniform(n).unwrap(), 1, 0).unwrap();
            let err = (b.terminal(0)[0] - (-1.0f64).exp()).abs();
            assert!(err < prev);
            prev = err;
        }
    }

    #[test]
    fn path_integral_examples() {
        let spec = DiffusionSpec::constant(vec![0.0], vec![0.0], vec![vec![0.0]]);
        let tg = TimeGrid::uniform(10).unwrap();
        let b = simulate_paths(&spec, &tg, 2, 0).unwrap();
        let ones = path_integral(&b, |_, _| 1.0).unwrap();
        let zeros = path_integral(&b, |_, _| 0.0).unwrap();
        let lin = path_integral(&b, |t, _| t).unwrap();
        for (k, &t) in tg.times().iter().enumerate() {
            assert!((ones.get(0, k) - t).abs() < 1e-15);
            assert_eq!(zeros.get(1, k), 0.0);
        }
        // trapezoid is exact for linear integrands
        assert!((lin.last(0) - 0.5).abs() < 1e-15);
        assert!(path_integral(&b, |_, _| f64::NAN).is_err());
    }

    #[test]
    fn path_integral_is_linear_and_additive() {
        let spec = DiffusionSpec::brownian(0.0);
        let tg = TimeGrid::uniform(20).unwrap();
        let b = simulate_paths(&spec, &tg, 5, 3).unwrap();
        let f = |t: f64, x: &[f64]| (x[0] * t).sin();
        let g = |_: f64, x: &[f64]| x[0] * x[0];
        let i_f = path_integral(&b, f).unwrap();
        let i_g = path_integral(&b, g).unwrap();
        let i_fg = path_integral(&b, |t, x| 2.0 * f(t, x) + g(t, x)).unwrap();
        for p in 0..5 {
            for k in 0..tg.n_times() {
                let lhs = i_fg.get(p, k);
                let rhs = 2.0 * i_f.get(p, k) + i_g.get(p, k);
                assert!((lhs - rhs).abs() <= 1e-13 * (1.0 + lhs.abs()));
            }
            // ∫_0^1 = ∫_0^{t_10} + ∫_{t_10}^1: cumulative sums share the prefix
            let mid = i_f.get(p, 10);
            let tail: f64 = (10..20)
                .map(|k| {
                    0.5 * (f(tg.times()[k], b.state(p, k))
                        + f(tg.times()[k + 1], b.state(p, k + 1)))
                        * tg.dt(k)
                })
                .sum();
            assert!((i_f.last(p) - (mid + tail)).abs() < 1e-13);
        }
    }

    #[test]
    fn box_grid_contains_initial_state() {
        let spec = DiffusionSpec::constant(vec![0.5], vec![0.0], vec![vec![2.0]]);
        let g = SpatialGrid::around(&spec, 6.0, 11).unwrap();
        assert!(g.contains(&[0.5]));
        assert!((g.lower[0] - (0.5 - 12.0)).abs() < 1e-12);
        assert_eq!(g.coordinate(0, 10), g.upper[0]);
    }
}

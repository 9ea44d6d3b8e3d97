//! Holding-time densities: point evaluation, sampling, grid representation
//! and convolution, plus joint timed-path probabilities.
//!
//! Point densities are evaluated from closed forms under each spec's
//! declared convention. Grids tabulate the closed form on a uniform grid
//! over `[0, t_max]` and are renormalized so the trapezoid integral is
//! exactly one; for the normal family this also absorbs the mass truncated
//! at zero. Sampling draws from the distribution restricted to `[0, inf)`.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::Distribution;

use crate::error::{CegError, Result};
use crate::model::{CegGraph, HoldingFamily, HoldingTimeSpec, TimedPath};

/// Trapezoid integral of uniformly spaced samples.
pub fn trapezoid(values: &[f64], dt: f64) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let inner: f64 = values[1..values.len() - 1].iter().sum();
    dt * (0.5 * values[0] + inner + 0.5 * values[values.len() - 1])
}

/// Uniform evaluation grid over `[0, t_max]` with step `dt`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub dt: f64,
    pub t_max: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            dt: 0.01,
            t_max: 200.0,
        }
    }
}

impl GridSpec {
    pub fn new(dt: f64, t_max: f64) -> Result<Self> {
        if dt <= 0.0 || t_max <= dt {
            return Err(CegError::GridResolution(format!(
                "invalid grid dt={dt} t_max={t_max}"
            )));
        }
        Ok(GridSpec { dt, t_max })
    }

    fn len(&self) -> usize {
        (self.t_max / self.dt).round() as usize + 1
    }
}

/// A density tabulated on a uniform grid; immutable after construction and
/// normalized to integrate to one.
#[derive(Debug, Clone)]
pub struct DensityGrid {
    dt: f64,
    values: Vec<f64>,
}

/// Maximum allowed mass deficit before a grid is rejected as too coarse.
pub const GRID_DEFICIT_TOL: f64 = 1e-3;

impl DensityGrid {
    fn normalized(dt: f64, values: Vec<f64>, context: &str) -> Result<Self> {
        let integral = trapezoid(&values, dt);
        if (integral - 1.0).abs() > GRID_DEFICIT_TOL {
            return Err(CegError::GridResolution(format!(
                "{context}: grid mass is {integral:.6}, deficit {:.2e}",
                1.0 - integral
            )));
        }
        let values = values.into_iter().map(|v| v / integral).collect();
        Ok(DensityGrid { dt, values })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn t_max(&self) -> f64 {
        self.dt * (self.values.len() - 1) as f64
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn integral(&self) -> f64 {
        trapezoid(&self.values, self.dt)
    }

    /// Linear interpolation; zero outside the grid.
    pub fn value_at(&self, t: f64) -> f64 {
        if t < 0.0 || t > self.t_max() {
            return 0.0;
        }
        let x = t / self.dt;
        let i = x.floor() as usize;
        if i + 1 >= self.values.len() {
            return self.values[self.values.len() - 1];
        }
        let frac = x - i as f64;
        self.values[i] * (1.0 - frac) + self.values[i + 1] * frac
    }

    /// L1 distance to another grid with the same spec.
    pub fn l1_distance(&self, other: &DensityGrid) -> f64 {
        let diffs: Vec<f64> = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .collect();
        trapezoid(&diffs, self.dt)
    }

    /// Renders `t,density` rows for plotting.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,density\n");
        for (i, v) in self.values.iter().enumerate() {
            out.push_str(&format!("{},{}\n", i as f64 * self.dt, v));
        }
        out
    }
}

fn normal_pdf(t: f64, mean: f64, sd: f64) -> f64 {
    let z = (t - mean) / sd;
    (-0.5 * z * z).exp() / (sd * (2.0 * PI).sqrt())
}

// Complementary error function, rational approximation with fractional
// error below 1.2e-7. Only used for grid mass checks.
fn erfc(x: f64) -> f64 {
    let t = 1.0 / (1.0 + 0.5 * x.abs());
    let ans = t
        * (-x * x - 1.26551223
            + t * (1.00002368
                + t * (0.37409196
                    + t * (0.09678418
                        + t * (-0.18628806
                            + t * (0.27886807
                                + t * (-1.13520398
                                    + t * (1.48851587 + t * (-0.82215223 + t * 0.17087277)))))))))
            .exp();
    if x >= 0.0 {
        ans
    } else {
        2.0 - ans
    }
}

fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

fn weibull_pdf(t: f64, shape: f64, scale: f64) -> f64 {
    if t < 0.0 {
        return 0.0;
    }
    if t == 0.0 {
        // k < 1 has an integrable singularity at zero; k == 1 is exponential.
        return if shape < 1.0 {
            f64::INFINITY
        } else if shape == 1.0 {
            1.0 / scale
        } else {
            0.0
        };
    }
    let x = t / scale;
    (shape / scale) * x.powf(shape - 1.0) * (-x.powf(shape)).exp()
}

fn weibull_cdf(t: f64, shape: f64, scale: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else {
        1.0 - (-(t / scale).powf(shape)).exp()
    }
}

fn weibull_params(spec: &HoldingTimeSpec) -> (f64, f64) {
    let p = spec.param_values();
    if spec.convention == "scale-shape" {
        (p[1], p[0])
    } else {
        (p[0], p[1])
    }
}

fn exponential_rate(spec: &HoldingTimeSpec) -> f64 {
    let p = spec.param_values()[0];
    if spec.convention == "mean" {
        1.0 / p
    } else {
        p
    }
}

/// Evaluates the holding-time density at `t >= 0` under the spec's declared
/// convention. Closed forms for the parametric families; linear grid
/// interpolation for `empirical-grid`.
pub fn density(spec: &HoldingTimeSpec, t: f64) -> f64 {
    if t < 0.0 {
        return 0.0;
    }
    let p = spec.param_values();
    match spec.family {
        HoldingFamily::Exponential => {
            let rate = exponential_rate(spec);
            rate * (-rate * t).exp()
        }
        HoldingFamily::Normal => normal_pdf(t, p[0], p[1]),
        HoldingFamily::Weibull => {
            let (shape, scale) = weibull_params(spec);
            weibull_pdf(t, shape, scale)
        }
        HoldingFamily::EmpiricalGrid => {
            let (dt, values) = (p[0], &p[1..]);
            let t_max = dt * (values.len() - 1) as f64;
            if t > t_max {
                return 0.0;
            }
            let x = t / dt;
            let i = x.floor() as usize;
            if i + 1 >= values.len() {
                return values[values.len() - 1];
            }
            let frac = x - i as f64;
            values[i] * (1.0 - frac) + values[i + 1] * frac
        }
    }
}

// Closed-form mass of the (untruncated) density on [0, t] and on [0, inf).
fn mass_up_to(spec: &HoldingTimeSpec, t: f64) -> (f64, f64) {
    let p = spec.param_values();
    match spec.family {
        HoldingFamily::Exponential => {
            let rate = exponential_rate(spec);
            (1.0 - (-rate * t).exp(), 1.0)
        }
        HoldingFamily::Normal => {
            let (mean, sd) = (p[0], p[1]);
            let below_zero = normal_cdf(-mean / sd);
            (normal_cdf((t - mean) / sd) - below_zero, 1.0 - below_zero)
        }
        HoldingFamily::Weibull => {
            let (shape, scale) = weibull_params(spec);
            (weibull_cdf(t, shape, scale), 1.0)
        }
        HoldingFamily::EmpiricalGrid => {
            let (dt, values) = (p[0], &p[1..]);
            let total = trapezoid(values, dt);
            let last = ((t / dt).floor() as usize).min(values.len() - 1);
            (trapezoid(&values[..=last], dt), total)
        }
    }
}

/// Tabulates a spec on the grid and renormalizes to unit mass. Rejects grids
/// whose tail loss or quadrature error exceeds [`GRID_DEFICIT_TOL`].
pub fn grid_from_spec(spec: &HoldingTimeSpec, grid: &GridSpec) -> Result<DensityGrid> {
    let n = grid.len();
    let mut values: Vec<f64> = (0..n).map(|i| density(spec, i as f64 * grid.dt)).collect();
    if spec.family == HoldingFamily::Weibull {
        let (shape, scale) = weibull_params(spec);
        if shape < 1.0 {
            // Replace the singular node so the trapezoid over [0, dt] carries
            // the exact cell mass F(dt).
            values[0] = 2.0 * weibull_cdf(grid.dt, shape, scale) / grid.dt - values[1];
        }
    }
    let (on_grid, total) = mass_up_to(spec, grid.t_max);
    if (total - on_grid) / total > GRID_DEFICIT_TOL {
        return Err(CegError::GridResolution(format!(
            "{} density loses {:.2e} of its mass beyond t_max={}",
            spec.family.name(),
            (total - on_grid) / total,
            grid.t_max
        )));
    }
    let raw = trapezoid(&values, grid.dt);
    if (raw - on_grid).abs() > GRID_DEFICIT_TOL {
        return Err(CegError::GridResolution(format!(
            "{} density tabulates to mass {raw:.6} where {on_grid:.6} was expected",
            spec.family.name()
        )));
    }
    let values = values.into_iter().map(|v| v / raw).collect();
    Ok(DensityGrid {
        dt: grid.dt,
        values,
    })
}

fn convolve_grids(f: &DensityGrid, g: &DensityGrid) -> Vec<f64> {
    let n = f.values.len();
    let dt = f.dt;
    let mut out = vec![0.0; n];
    for (k, slot) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for j in 0..=k {
            let w = if j == 0 || j == k { 0.5 } else { 1.0 };
            acc += w * f.values[j] * g.values[k - j];
        }
        *slot = acc * dt;
    }
    out
}

/// Density of the sum of independent holding times along an ordered list of
/// specs, computed by direct discrete convolution with trapezoid weights.
pub fn convolve(specs: &[HoldingTimeSpec], grid: &GridSpec) -> Result<DensityGrid> {
    if specs.is_empty() {
        return Err(CegError::Structural(
            "convolve needs at least one spec".into(),
        ));
    }
    let mut acc = grid_from_spec(&specs[0], grid)?;
    for spec in &specs[1..] {
        let next = grid_from_spec(spec, grid)?;
        let values = convolve_grids(&acc, &next);
        acc = DensityGrid::normalized(grid.dt, values, "convolution")?;
    }
    Ok(acc)
}

/// Joint probability of a root-to-sink path and its holding times: the
/// product over steps of the transition probability times the holding
/// density. Steps out of untimed vertices contribute probability only.
pub fn joint_timed_path_probability(graph: &CegGraph, path: &TimedPath) -> Result<f64> {
    if path.is_empty() {
        return Ok(1.0);
    }
    let mut expected = graph.root().clone();
    let mut product = 1.0;
    for step in &path.steps {
        if step.vertex != expected {
            return Err(CegError::Structural(format!(
                "path step at {} does not continue from {expected}",
                step.vertex
            )));
        }
        let idx = graph
            .edge_index(&step.edge)
            .ok_or_else(|| CegError::UnknownEdge(step.edge.to_string()))?;
        let (_, edge) = graph.edge(idx);
        if edge.from != step.vertex {
            return Err(CegError::Structural(format!(
                "edge {} does not leave {}",
                step.edge, step.vertex
            )));
        }
        if step.hold < 0.0 {
            return Err(CegError::Structural(format!(
                "negative holding time on {}",
                step.edge
            )));
        }
        product *= edge.prob.value();
        if !graph.is_untimed(&step.vertex) {
            let spec = edge.holding.as_ref().ok_or_else(|| {
                CegError::IncompleteModel(format!("timed edge {} has no holding spec", step.edge))
            })?;
            product *= density(spec, step.hold);
        }
        expected = edge.to.clone();
    }
    if expected != *graph.sink() {
        return Err(CegError::Structural(format!(
            "path ends at {expected}, not at the sink"
        )));
    }
    Ok(product)
}

/// Draws one holding time from the spec restricted to `[0, inf)`.
pub fn sample_holding<R: Rng + ?Sized>(spec: &HoldingTimeSpec, rng: &mut R) -> f64 {
    let p = spec.param_values();
    match spec.family {
        HoldingFamily::Exponential => {
            let rate = exponential_rate(spec);
            rand_distr::Exp::new(rate)
                .expect("validated rate")
                .sample(rng)
        }
        HoldingFamily::Normal => {
            let dist = rand_distr::Normal::new(p[0], p[1]).expect("validated params");
            loop {
                let x = dist.sample(rng);
                if x >= 0.0 {
                    return x;
                }
            }
        }
        HoldingFamily::Weibull => {
            let (shape, scale) = weibull_params(spec);
            rand_distr::Weibull::new(scale, shape)
                .expect("validated params")
                .sample(rng)
        }
        HoldingFamily::EmpiricalGrid => {
            let (dt, values) = (p[0], &p[1..]);
            // Inverse CDF on the cumulative trapezoid, linear within a cell.
            let mut cum = Vec::with_capacity(values.len());
            cum.push(0.0);
            for i in 1..values.len() {
                cum.push(cum[i - 1] + 0.5 * dt * (values[i - 1] + values[i]));
            }
            let total = *cum.last().unwrap();
            let u: f64 = rng.gen::<f64>() * total;
            let i = match cum.binary_search_by(|c| c.partial_cmp(&u).unwrap()) {
                Ok(i) => i,
                Err(i) => i.saturating_sub(1),
            };
            if i + 1 >= cum.len() {
                return dt * (values.len() - 1) as f64;
            }
            let cell = cum[i + 1] - cum[i];
            let frac = if cell > 0.0 { (u - cum[i]) / cell } else { 0.0 };
            dt * (i as f64 + frac)
        }
    }
}

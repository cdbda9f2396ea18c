//! The linear Wick SDE
//! u(t) = w + ∫_0^t ∫_V [u(s)G(s,υ) + f(s,υ)] ⋄ 𝔑(ds,dυ)
//! by triangular propagator, closed form and Picard iteration.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::chaos::{wick_exp, ChaosExpansion, NeumaierSum, Truncation};
use crate::error::{Error, Result};
use crate::malliavin::HValuedExpansion;
use crate::multiindex::Multiindex;
use crate::noise_space::{HElement, NoiseSpace};
use crate::quadrature::gauss_legendre;

/// Default number of quadrature steps over the horizon.
pub const DEFAULT_STEPS: usize = 2048;
/// Default number of reported time intervals.
pub const DEFAULT_OUTPUT_POINTS: usize = 256;

/// A linear Wick SDE on a NoiseSpace.
#[derive(Clone, Debug)]
pub struct SdeProblem {
    pub space: NoiseSpace,
    /// Multiplicative kernel G(t, υ).
    pub g: HElement,
    /// Forcing f_α(t, υ).
    pub forcing: HValuedExpansion,
    /// Initial value w at `start`.
    pub initial: ChaosExpansion<f64>,
    /// Truncation degree N.
    pub degree: usize,
    /// Quadrature steps from `start` to T.
    pub steps: usize,
    /// Report every `output_every`-th grid point.
    pub output_every: usize,
    pub start: f64,
}

impl SdeProblem {
    pub fn new(space: NoiseSpace, g: HElement, initial: ChaosExpansion<f64>, degree: usize) -> Self {
        let k = space.len();
        let steps = default_steps(&space);
        let output_every = if steps % DEFAULT_OUTPUT_POINTS == 0 { steps / DEFAULT_OUTPUT_POINTS } else { 1 };
        Self {
            space,
            g,
            forcing: ChaosExpansion::new(Truncation::new(k, degree)),
            initial,
            degree,
            steps,
            output_every,
            start: 0.0,
        }
    }

    pub fn with_forcing(mut self, forcing: HValuedExpansion) -> Self {
        self.forcing = forcing;
        self
    }

    pub fn with_steps(mut self, steps: usize, output_every: usize) -> Self {
        self.steps = steps;
        self.output_every = output_every;
        self
    }

    /// The same equation restarted at time s from u(s).
    pub fn restarted(&self, start: f64, initial: ChaosExpansion<f64>, steps: usize) -> Self {
        Self { start, initial, steps, output_every: 1, ..self.clone() }
    }

    pub fn truncation(&self) -> Truncation {
        Truncation::new(self.space.len(), self.degree)
    }

    fn validate(&self) -> Result<()> {
        let k = self.space.len();
        if self.g.len() != k {
            return Err(Error::Incompatible(format!("G has {} coefficients for {k} modes", self.g.len())));
        }
        if self.forcing.iter().any(|(_, h)| h.len() != k) {
            return Err(Error::Incompatible("forcing coefficients must have one entry per mode".into()));
        }
        let t = self.truncation();
        if let Some((a, _)) = self.initial.iter().chain(std::iter::empty()).find(|(a, _)| !t.contains(a)) {
            return Err(Error::InvalidArgument(format!("initial coefficient {a} outside the truncation")));
        }
        if let Some((a, _)) = self.forcing.iter().find(|(a, _)| !t.contains(a)) {
            return Err(Error::InvalidArgument(format!("forcing coefficient {a} outside the truncation")));
        }
        if self.steps == 0 || self.output_every == 0 || self.steps % self.output_every != 0 {
            return Err(Error::InvalidArgument(format!(
                "steps ({}) must be a positive multiple of output_every ({})",
                self.steps, self.output_every
            )));
        }
        if !(self.start >= 0.0 && self.start < self.space.horizon()) {
            return Err(Error::InvalidArgument(format!("start time {} outside [0, T)", self.start)));
        }
        Ok(())
    }
}

fn default_steps(space: &NoiseSpace) -> usize {
    let per = (DEFAULT_STEPS / space.cells()).max(2);
    space.cells() * per.div_ceil(4) * 4
}

/// A chaos expansion sampled on a time grid.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeSeries {
    truncation: Truncation,
    times: Vec<f64>,
    index: Vec<Multiindex>,
    values: Vec<Vec<f64>>,
}

impl TimeSeries {
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn truncation(&self) -> Truncation {
        self.truncation
    }

    pub fn index(&self) -> &[Multiindex] {
        &self.index
    }

    /// u_α at every time.
    pub fn coefficient(&self, alpha: &Multiindex) -> Option<&[f64]> {
        self.index.iter().position(|a| a == alpha).map(|p| self.values[p].as_slice())
    }

    /// (α, u_α(t)) rows for all stored α.
    pub fn rows(&self) -> impl Iterator<Item = (&Multiindex, &[f64])> {
        self.index.iter().zip(self.values.iter().map(|v| v.as_slice()))
    }

    /// The expansion at time index i, exact zeros dropped.
    pub fn at(&self, i: usize) -> ChaosExpansion<f64> {
        let mut u = ChaosExpansion::new(self.truncation);
        for (a, v) in self.index.iter().zip(&self.values) {
            if v[i] != 0.0 {
                u.insert(a.clone(), v[i]).expect("index lies in the truncation");
            }
        }
        u
    }

    pub fn last(&self) -> ChaosExpansion<f64> {
        self.at(self.times.len() - 1)
    }

    /// E[u(t)²] at every time.
    pub fn second_moments(&self) -> Vec<f64> {
        (0..self.times.len())
            .map(|i| {
                let mut s = NeumaierSum::default();
                for (a, v) in self.index.iter().zip(&self.values) {
                    if v[i] != 0.0 {
                        s.add(v[i] * v[i] * a.factorial().unwrap_or(f64::INFINITY));
                    }
                }
                s.value()
            })
            .collect()
    }

    /// max over α and t of |u_α(t) − v_α(t)|; times must match.
    pub fn max_abs_diff(&self, other: &TimeSeries) -> Result<f64> {
        if self.times.len() != other.times.len()
            || self.times.iter().zip(&other.times).any(|(a, b)| (a - b).abs() > 1e-12)
        {
            return Err(Error::InvalidArgument("time grids differ".into()));
        }
        let mine: HashMap<&Multiindex, &Vec<f64>> = self.index.iter().zip(&self.values).collect();
        let theirs: HashMap<&Multiindex, &Vec<f64>> = other.index.iter().zip(&other.values).collect();
        let mut m = 0.0f64;
        for (a, v) in &mine {
            match theirs.get(a) {
                Some(w) => v.iter().zip(w.iter()).for_each(|(x, y)| m = m.max((x - y).abs())),
                None => v.iter().for_each(|x| m = m.max(x.abs())),
            }
        }
        for (a, w) in &theirs {
            if !mine.contains_key(a) {
                w.iter().for_each(|x| m = m.max(x.abs()));
            }
        }
        Ok(m)
    }

    fn from_dense(truncation: Truncation, times: Vec<f64>, index: Vec<Multiindex>, values: Vec<Vec<f64>>) -> Self {
        Self { truncation, times, index, values }
    }
}

/// A run of grid points inside one cell.
struct Segment {
    cell: usize,
    first: usize,
    last: usize,
}

struct Grid {
    times: Vec<f64>,
    h: f64,
    segments: Vec<Segment>,
}

impl Grid {
    fn new(space: &NoiseSpace, start: f64, steps: usize) -> Result<Self> {
        let t_end = space.horizon();
        let h = (t_end - start) / steps as f64;
        let times: Vec<f64> = (0..=steps).map(|i| if i == steps { t_end } else { start + i as f64 * h }).collect();
        let mut segments = Vec::new();
        for cell in space.cell_of(start)..space.cells() {
            let (a, b) = space.cell_bounds(cell);
            let lo = a.max(start);
            let to_index = |x: f64| {
                let r = (x - start) / h;
                let i = r.round();
                if (r - i).abs() > 1e-7 {
                    Err(Error::InvalidArgument(format!("cell boundary {x} is not a grid point")))
                } else {
                    Ok(i as usize)
                }
            };
            let (first, last) = (to_index(lo)?, to_index(b)?);
            if last == first {
                continue;
            }
            if (last - first) % 2 != 0 {
                return Err(Error::InvalidArgument(format!(
                    "cell {cell} holds {} steps; Simpson's rule needs an even count",
                    last - first
                )));
            }
            segments.push(Segment { cell, first, last });
        }
        Ok(Self { times, h, segments })
    }

    fn len(&self) -> usize {
        self.times.len()
    }
}

/// Cumulative composite Simpson integral of samples on [first, last],
/// with the three-point rule h(5f0 + 8f1 − f2)/12 at odd points.
fn cumulative_simpson(y: &[f64], h: f64, out: &mut [f64], offset: f64) {
    let n = y.len() - 1;
    out[0] = offset;
    let mut i = 1;
    while i <= n {
        if i + 1 <= n {
            out[i] = out[i - 1] + h * (5.0 * y[i - 1] + 8.0 * y[i] - y[i + 1]) / 12.0;
            out[i + 1] = out[i - 1] + h * (y[i - 1] + 4.0 * y[i] + y[i + 1]) / 3.0;
            i += 2;
        } else {
            out[i] = out[i - 1] + h * (-y[i - 2] + 8.0 * y[i - 1] + 5.0 * y[i]) / 12.0;
            i += 1;
        }
    }
}

/// Shared discretization data: γ_k per segment and the forcing sources.
struct Setup {
    grid: Grid,
    index: Vec<Multiindex>,
    position: HashMap<Multiindex, usize>,
    level_bounds: Vec<(usize, usize)>,
    /// gamma[segment][k][local point]
    gamma: Vec<Vec<Vec<f64>>>,
    /// forcing_source[β][k][point] = ∫_start^{t} Σ_v f_β m_k
    forcing_source: HashMap<Multiindex, Vec<Vec<f64>>>,
    initial: Vec<f64>,
}

impl Setup {
    fn new(p: &SdeProblem) -> Result<Self> {
        p.validate()?;
        let grid = Grid::new(&p.space, p.start, p.steps)?;
        let k_total = p.space.len();
        let index = p.truncation().index_set();
        let position = index.iter().enumerate().map(|(i, a)| (a.clone(), i)).collect();
        let mut level_bounds = vec![(0, 0); p.degree + 1];
        for (i, a) in index.iter().enumerate() {
            let d = a.degree() as usize;
            if level_bounds[d].1 == 0 {
                level_bounds[d].0 = i;
            }
            level_bounds[d].1 = i + 1;
        }
        let gamma = grid
            .segments
            .iter()
            .map(|s| {
                let cols: Vec<Vec<f64>> =
                    (s.first..=s.last).map(|i| p.space.pointwise_products(&p.g, s.cell, grid.times[i])).collect();
                (0..k_total).map(|k| cols.iter().map(|c| c[k]).collect()).collect()
            })
            .collect();
        let mut forcing_source = HashMap::new();
        for (b, f) in p.forcing.iter() {
            if f.coeffs().iter().all(|c| *c == 0.0) {
                continue;
            }
            let mut src = vec![vec![0.0; grid.len()]; k_total];
            for (i, &t) in grid.times.iter().enumerate() {
                let r = p.space.restrict(f, p.start, t);
                for (k, row) in src.iter_mut().enumerate() {
                    row[i] = r.get(k + 1);
                }
            }
            forcing_source.insert(b.clone(), src);
        }
        let initial = index.iter().map(|a| p.initial.get(a).copied().unwrap_or(0.0)).collect();
        Ok(Self { grid, index, position, level_bounds, gamma, forcing_source, initial })
    }

    /// w_α + Σ_k [∫ lower_{α−ε_k} γ_k + F_{α−ε_k,k}] on the grid, where
    /// `lower` supplies u_β on the grid.
    fn update<'a, L: Fn(usize) -> &'a [f64]>(&self, pos: usize, lower: L) -> Vec<f64> {
        let alpha = &self.index[pos];
        let n = self.grid.len();
        let mut out = vec![self.initial[pos]; n];
        let mut cum = vec![0.0; n];
        let mut y = Vec::new();
        for &(k, _) in alpha.entries() {
            let beta = alpha.decrement(k).expect("k is in the support");
            let kk = k as usize - 1;
            let ub = lower(self.position[&beta]);
            if ub.iter().any(|x| *x != 0.0) {
                let mut carry = 0.0;
                for (s, seg) in self.grid.segments.iter().enumerate() {
                    let g = &self.gamma[s][kk];
                    y.clear();
                    y.extend((seg.first..=seg.last).map(|i| ub[i] * g[i - seg.first]));
                    cumulative_simpson(&y, self.grid.h, &mut cum[seg.first..=seg.last], carry);
                    carry = cum[seg.last];
                }
                for (o, c) in out.iter_mut().zip(&cum) {
                    *o += c;
                }
            }
            if let Some(src) = self.forcing_source.get(&beta) {
                for (o, c) in out.iter_mut().zip(&src[kk]) {
                    *o += c;
                }
            }
        }
        out
    }

    fn output(&self, p: &SdeProblem, values: Vec<Vec<f64>>) -> TimeSeries {
        let stride = p.output_every;
        let times: Vec<f64> = self.grid.times.iter().step_by(stride).copied().collect();
        let values = values.into_iter().map(|v| v.into_iter().step_by(stride).collect()).collect();
        TimeSeries::from_dense(p.truncation(), times, self.index.clone(), values)
    }
}

/// Degree-major forward sweep of the propagator.
pub fn propagate(p: &SdeProblem) -> Result<TimeSeries> {
    let setup = Setup::new(p)?;
    let mut values: Vec<Vec<f64>> = vec![Vec::new(); setup.index.len()];
    for &(lo, hi) in &setup.level_bounds {
        let (done, rest) = values.split_at_mut(lo);
        let done: &[Vec<f64>] = done;
        let level: Vec<Vec<f64>> = (lo..hi).into_par_iter().map(|pos| setup.update(pos, |q| &done[q])).collect();
        for (slot, v) in rest.iter_mut().zip(level) {
            *slot = v;
        }
    }
    Ok(setup.output(p, values))
}

/// Picard iterates u⁰ = w + δ(χ_{[0,t]} f), u^{j+1} = w + δ(χ_{[0,t]}(u^j G + f)).
pub fn picard(p: &SdeProblem, iterations: usize) -> Result<TimeSeries> {
    let setup = Setup::new(p)?;
    let zero = vec![0.0; setup.grid.len()];
    let first: Vec<Vec<f64>> =
        (0..setup.index.len()).into_par_iter().map(|pos| setup.update(pos, |_| &zero)).collect();
    let mut current = first;
    for _ in 0..iterations {
        let prev = &current;
        current = (0..setup.index.len()).into_par_iter().map(|pos| setup.update(pos, |q| &prev[q])).collect();
    }
    Ok(setup.output(p, current))
}

/// H(s, t) = projection of χ_{[s,t]}G.
pub fn h_functions(p: &SdeProblem, s: f64, t: f64) -> HElement {
    p.space.restrict(&p.g, s, t)
}

/// Closed form: w ⋄ exp^⋄(𝔑(χ_{[s0,t]}G)) plus the forcing integral
/// Σ_k ∫ Σ_{β} f_{α−ε_k−β}(s) m_k H(s,t)^β/β! dμ(s), by Gauss–Legendre
/// rules exact for the polynomial integrands.
pub fn closed_form(p: &SdeProblem) -> Result<TimeSeries> {
    p.validate()?;
    let grid = Grid::new(&p.space, p.start, p.steps)?;
    let trunc = p.truncation();
    let index = trunc.index_set();
    let position: HashMap<Multiindex, usize> = index.iter().enumerate().map(|(i, a)| (a.clone(), i)).collect();
    let out_idx: Vec<usize> = (0..grid.len()).step_by(p.output_every).collect();
    let mut values = vec![vec![0.0; out_idx.len()]; index.len()];
    let w = &p.initial;
    let has_forcing = p.forcing.iter().any(|(_, f)| f.coeffs().iter().any(|c| *c != 0.0));
    let m = p.space.time_modes();
    // Polynomial degree in s of f(s) m_k(s) H(s,t)^β per cell.
    let nodes = ((2 * m - 1) + p.degree.saturating_sub(1) * (2 * m)).div_ceil(2) + 1;
    let rule = gauss_legendre(nodes);
    let columns: Vec<Vec<f64>> = out_idx
        .par_iter()
        .map(|&i| {
            let t = grid.times[i];
            let mut col = vec![0.0; index.len()];
            let h = h_functions(p, p.start, t);
            let e = wick_exp(&h, p.degree);
            for (a, c) in crate::chaos::wick_mul(w, &e).expect("scalar product").iter() {
                if let Some(&q) = position.get(a) {
                    col[q] += c;
                }
            }
            if has_forcing && t > p.start {
                for seg in &grid.segments {
                    let (lo, hi) = (grid.times[seg.first], grid.times[seg.last].min(t));
                    if hi <= lo {
                        continue;
                    }
                    let (c0, hw) = ((lo + hi) / 2.0, (hi - lo) / 2.0);
                    for (x, wt) in rule.0.iter().zip(&rule.1) {
                        let s = c0 + hw * x;
                        let hs = h.sub(&h_functions(p, p.start, s));
                        let es = wick_exp(&hs, p.degree.saturating_sub(1));
                        for (gam, f) in p.forcing.iter() {
                            let q = p.space.pointwise_products(f, seg.cell, s);
                            for (k, &qk) in q.iter().enumerate() {
                                if qk == 0.0 {
                                    continue;
                                }
                                let base = gam.increment(k as u32 + 1);
                                for (b, eb) in es.iter() {
                                    let a = base.add(b);
                                    if let Some(&pos) = position.get(&a) {
                                        col[pos] += wt * hw * qk * eb;
                                    }
                                }
                            }
                        }
                    }
                }
            }
            col
        })
        .collect();
    for (j, col) in columns.into_iter().enumerate() {
        for (row, v) in values.iter_mut().zip(col) {
            row[j] = v;
        }
    }
    let times = out_idx.iter().map(|&i| grid.times[i]).collect();
    Ok(TimeSeries::from_dense(trunc, times, index, values))
}

/// sup_t E[u(t)²] against 2(‖w‖² + ‖f‖_T²).
#[derive(Clone, Debug, Serialize)]
pub struct MomentBound {
    pub sup_second_moment: f64,
    pub bound: f64,
    pub holds: bool,
    pub w_norm_sq: f64,
    pub f_norm_sq: f64,
    /// w_0² exp(∫|G|² dμ) when w is deterministic and f = 0.
    pub adapted_limit: Option<f64>,
}

/// Evaluates the second-moment bound from the closed-form pieces.
///
/// ‖w‖² = E w² + sup_t E[(w ⋄ exp^⋄ 𝔑(χ_{[0,t]}G))²] and
/// ‖f‖_T² = Σ_α α! |f_α|²_H + sup_t E[(forcing part of u(t))²].
pub fn second_moment_bound(p: &SdeProblem) -> Result<MomentBound> {
    let full = closed_form(p)?;
    let sup = full.second_moments().into_iter().fold(0.0, f64::max);
    let homogeneous = closed_form(&p.clone().with_forcing(ChaosExpansion::new(p.truncation())))?;
    let forced_only = {
        let mut q = p.clone();
        q.initial = ChaosExpansion::new(p.truncation());
        closed_form(&q)?
    };
    let w_norm_sq = p.initial.second_moment() + homogeneous.second_moments().into_iter().fold(0.0, f64::max);
    let f_norm_sq = p.forcing.second_moment() + forced_only.second_moments().into_iter().fold(0.0, f64::max);
    let bound = 2.0 * (w_norm_sq + f_norm_sq);
    let deterministic = p.initial.iter().all(|(a, c)| a.is_zero() || *c == 0.0);
    let adapted_limit = (deterministic && p.forcing.iter().all(|(_, f)| f.norm_sq() == 0.0)).then(|| {
        let w0 = p.initial.mean();
        w0 * w0 * h_functions(p, p.start, p.space.horizon()).norm_sq().exp()
    });
    Ok(MomentBound { sup_second_moment: sup, bound, holds: sup <= bound * (1.0 + 1e-12), w_norm_sq, f_norm_sq, adapted_limit })
}

/// max over the coarse times of the L²(Ω) norm of
/// u(t) − w − δ(χ_{[0,t]}(uG + f)), with the time integral taken by
/// composite Simpson at step 2h. `u` must be a full-resolution solution.
pub fn residual_norm(p: &SdeProblem, u: &TimeSeries) -> Result<f64> {
    if p.output_every != 1 {
        return Err(Error::InvalidArgument("residual needs the solution at every grid point".into()));
    }
    let setup = Setup::new(p)?;
    for seg in &setup.grid.segments {
        if (seg.last - seg.first) % 4 != 0 {
            return Err(Error::InvalidArgument("residual needs a multiple of four steps per cell".into()));
        }
    }
    let times_ok = u.times.len() == setup.grid.len();
    if !times_ok {
        return Err(Error::InvalidArgument("solution grid does not match the problem grid".into()));
    }
    let lookup: HashMap<&Multiindex, &Vec<f64>> = u.index.iter().zip(&u.values).collect();
    let zero = vec![0.0; setup.grid.len()];
    let get = |a: &Multiindex| lookup.get(a).map_or(&zero, |v| *v);
    // Coarse points: every other even point within each segment.
    let mut coarse: Vec<usize> = vec![setup.grid.segments.first().map_or(0, |s| s.first)];
    for seg in &setup.grid.segments {
        coarse.extend((seg.first + 4..=seg.last).step_by(4));
    }
    let mut worst = 0.0f64;
    let h2 = 2.0 * setup.grid.h;
    let mut acc: HashMap<(usize, usize), f64> = HashMap::new();
    for &ti in &coarse {
        let mut s = 0.0;
        for (pos, alpha) in setup.index.iter().enumerate() {
            let mut rhs = setup.initial[pos];
            for &(k, _) in alpha.entries() {
                let beta = alpha.decrement(k).expect("k is in the support");
                let ub = get(&beta);
                let kk = k as usize - 1;
                let mut integral = 0.0;
                for (sidx, seg) in setup.grid.segments.iter().enumerate() {
                    if seg.first >= ti {
                        break;
                    }
                    let end = seg.last.min(ti);
                    let key = (pos * 4096 + kk, sidx * 1_000_000 + end);
                    let val = *acc.entry(key).or_insert_with(|| {
                        let g = &setup.gamma[sidx][kk];
                        let y = |i: usize| ub[i] * g[i - seg.first];
                        let mut v = 0.0;
                        let mut i = seg.first;
                        while i + 4 <= end {
                            v += h2 * (y(i) + 4.0 * y(i + 2) + y(i + 4)) / 3.0;
                            i += 4;
                        }
                        v
                    });
                    integral += val;
                }
                rhs += integral;
                if let Some(src) = setup.forcing_source.get(&beta) {
                    rhs += src[kk][ti];
                }
            }
            let r = get(alpha)[ti] - rhs;
            s += r * r * alpha.factorial().unwrap_or(f64::INFINITY);
        }
        worst = worst.max(s.sqrt());
        acc.clear();
    }
    Ok(worst)
}

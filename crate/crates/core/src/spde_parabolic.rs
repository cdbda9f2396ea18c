//! The parabolic Wick SPDE ∂_t u = ℒu + ∫(uG + f) ⋄ 𝔑̇ dπ with
//! ℒu = a(x)u_xx + b(x)u_x on the periodic grid of [0, 2π).
//!
//! Both the propagator and the mild form use the same Crank–Nicolson
//! stepper, so their discrepancy isolates the formulation.

use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chaos::{wick_exp, ChaosExpansion, Coefficient, NeumaierSum, Truncation};
use crate::error::{Error, Result};
use crate::multiindex::Multiindex;
use crate::noise_space::{HElement, NoiseSpace};

/// Grid points x_i = 2πi/m.
pub fn grid_points(m: usize) -> Vec<f64> {
    (0..m).map(|i| 2.0 * PI * i as f64 / m as f64).collect()
}

/// Discrete L² norm squared, Δx Σ h_i².
pub fn l2_norm_sq(h: &[f64]) -> f64 {
    let dx = 2.0 * PI / h.len() as f64;
    dx * h.iter().map(|x| x * x).sum::<f64>()
}

/// A periodic function given by a constant, grid values or a
/// trigonometric polynomial c + Σ cos_n cos((n+1)x) + sin_n sin((n+1)x).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GridFunction {
    Constant(f64),
    Values(Vec<f64>),
    Fourier {
        #[serde(default)]
        constant: f64,
        #[serde(default)]
        cos: Vec<f64>,
        #[serde(default)]
        sin: Vec<f64>,
    },
}

impl GridFunction {
    pub fn sample(&self, m: usize) -> Result<Vec<f64>> {
        match self {
            GridFunction::Constant(c) => Ok(vec![*c; m]),
            GridFunction::Values(v) if v.len() == m => Ok(v.clone()),
            GridFunction::Values(v) => {
                Err(Error::InvalidArgument(format!("{} grid values given for {m} points", v.len())))
            }
            GridFunction::Fourier { constant, cos, sin } => Ok(grid_points(m)
                .into_iter()
                .map(|x| {
                    let c: f64 = cos.iter().enumerate().map(|(n, a)| a * ((n + 1) as f64 * x).cos()).sum();
                    let s: f64 = sin.iter().enumerate().map(|(n, a)| a * ((n + 1) as f64 * x).sin()).sum();
                    constant + c + s
                })
                .collect()),
        }
    }
}

/// f_α(t, x, υ) = Σ_j φ_j(x) m_j(t, υ), one grid vector per CONS mode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ModalGridField {
    modes: Vec<Vec<f64>>,
}

impl ModalGridField {
    pub fn new(modes: Vec<Vec<f64>>) -> Self {
        Self { modes }
    }

    pub fn zeros(modes: usize, m: usize) -> Self {
        Self { modes: vec![vec![0.0; m]; modes] }
    }

    /// φ(x) m_k as a field.
    pub fn single(modes: usize, k: usize, phi: Vec<f64>) -> Self {
        let m = phi.len();
        let mut f = Self::zeros(modes, m);
        f.modes[k - 1] = phi;
        f
    }

    pub fn modes(&self) -> &[Vec<f64>] {
        &self.modes
    }

    /// Σ_j |φ_j|²_{L²}, the squared L²(dx dμ) norm.
    pub fn l2_norm_sq(&self) -> f64 {
        self.modes.iter().map(|p| if p.is_empty() { 0.0 } else { l2_norm_sq(p) }).sum()
    }
}

impl Coefficient for ModalGridField {
    fn is_zero(&self) -> bool {
        self.modes.iter().all(|p| p.iter().all(|x| *x == 0.0))
    }
    fn add_scaled(&mut self, a: f64, x: &Self) {
        if x.modes.len() > self.modes.len() {
            self.modes.resize(x.modes.len(), Vec::new());
        }
        for (s, v) in self.modes.iter_mut().zip(&x.modes) {
            s.add_scaled(a, v);
        }
    }
    fn scaled(&self, a: f64) -> Self {
        Self { modes: self.modes.iter().map(|p| p.scaled(a)).collect() }
    }
    fn norm_sq(&self) -> f64 {
        self.l2_norm_sq()
    }
    fn dim(&self) -> usize {
        self.modes.len()
    }
}

/// A parabolic problem on m periodic grid points over [0, T].
#[derive(Clone, Debug)]
pub struct ParabolicProblem {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub space: NoiseSpace,
    pub g: HElement,
    pub forcing: ChaosExpansion<ModalGridField>,
    pub initial: ChaosExpansion<Vec<f64>>,
    pub degree: usize,
    pub steps: usize,
    pub output_every: usize,
}

impl ParabolicProblem {
    pub fn new(
        a: Vec<f64>,
        b: Vec<f64>,
        space: NoiseSpace,
        g: HElement,
        initial: ChaosExpansion<Vec<f64>>,
        degree: usize,
        steps: usize,
    ) -> Self {
        let k = space.len();
        Self {
            a,
            b,
            space,
            g,
            forcing: ChaosExpansion::new(Truncation::new(k, degree)),
            initial,
            degree,
            steps,
            output_every: 1,
        }
    }

    pub fn with_forcing(mut self, forcing: ChaosExpansion<ModalGridField>) -> Self {
        self.forcing = forcing;
        self
    }

    pub fn with_output_every(mut self, n: usize) -> Self {
        self.output_every = n;
        self
    }

    pub fn points(&self) -> usize {
        self.a.len()
    }

    pub fn dt(&self) -> f64 {
        self.space.horizon() / self.steps as f64
    }

    pub fn truncation(&self) -> Truncation {
        Truncation::new(self.space.len(), self.degree)
    }

    fn validate(&self) -> Result<()> {
        let m = self.points();
        if m < 3 {
            return Err(Error::InvalidArgument("the periodic grid needs at least 3 points".into()));
        }
        if self.b.len() != m {
            return Err(Error::Incompatible(format!("b has {} values for {m} points", self.b.len())));
        }
        if let Some((i, v)) = self.a.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
            return Err(Error::NotElliptic(format!("a(x_{i}) = {v}")));
        }
        let k = self.space.len();
        if self.g.len() != k {
            return Err(Error::Incompatible(format!("G has {} coefficients for {k} modes", self.g.len())));
        }
        let t = self.truncation();
        for (a, w) in self.initial.iter() {
            if !t.contains(a) || w.len() != m {
                return Err(Error::InvalidArgument(format!("initial coefficient {a} is out of range or not on the grid")));
            }
        }
        for (a, f) in self.forcing.iter() {
            if !t.contains(a) || f.modes.len() != k || f.modes.iter().any(|p| p.len() != m) {
                return Err(Error::InvalidArgument(format!("forcing coefficient {a} is out of range or malformed")));
            }
        }
        if self.steps == 0 || self.output_every == 0 || self.steps % self.output_every != 0 {
            return Err(Error::InvalidArgument("steps must be a positive multiple of output_every".into()));
        }
        let dt = self.dt();
        for b in self.space.breakpoints() {
            let r = b / dt;
            if (r - r.round()).abs() > 1e-7 {
                return Err(Error::InvalidArgument(format!("cell boundary {b} is not a time step")));
            }
        }
        Ok(())
    }

    /// Min of a over the grid, the ellipticity constant δ.
    pub fn ellipticity(&self) -> f64 {
        self.a.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// (I − (h/2)L)⁻¹ by Sherman–Morrison on the cyclic tridiagonal system.
struct CyclicSolver {
    sub: Vec<f64>,
    #[cfg(test)]
    diag: Vec<f64>,
    sup: Vec<f64>,
    /// Modified diagonal for the Sherman–Morrison split.
    bb: Vec<f64>,
    gamma: f64,
    z: Vec<f64>,
    fact: f64,
}

impl CyclicSolver {
    fn new(sub: Vec<f64>, diag: Vec<f64>, sup: Vec<f64>) -> Result<Self> {
        let n = diag.len();
        // Corners A[n−1][0] and A[0][n−1].
        let alpha = sup[n - 1];
        let beta = sub[0];
        let gamma = -diag[0];
        let mut bb = diag.to_vec();
        bb[0] -= gamma;
        bb[n - 1] -= alpha * beta / gamma;
        let mut s = Self {
            sub,
            #[cfg(test)]
            diag,
            sup,
            bb, gamma, z: Vec::new(), fact: 0.0 };
        let mut u = vec![0.0; n];
        u[0] = gamma;
        u[n - 1] = alpha;
        s.z = s.thomas(&u)?;
        let denom = 1.0 + s.z[0] + beta * s.z[n - 1] / gamma;
        if denom.abs() < 1e-14 {
            return Err(Error::Singular("Crank–Nicolson matrix".into()));
        }
        s.fact = 1.0 / denom;
        Ok(s)
    }

    fn thomas(&self, r: &[f64]) -> Result<Vec<f64>> {
        let n = r.len();
        let mut c = vec![0.0; n];
        let mut x = vec![0.0; n];
        let mut piv = self.bb[0];
        if piv.abs() < 1e-300 {
            return Err(Error::Singular("zero pivot".into()));
        }
        x[0] = r[0] / piv;
        for i in 1..n {
            c[i] = self.sup[i - 1] / piv;
            piv = self.bb[i] - self.sub[i] * c[i];
            if piv.abs() < 1e-300 {
                return Err(Error::Singular("zero pivot".into()));
            }
            x[i] = (r[i] - self.sub[i] * x[i - 1]) / piv;
        }
        for i in (0..n - 1).rev() {
            let xi = x[i + 1];
            x[i] -= c[i + 1] * xi;
        }
        Ok(x)
    }

    fn solve(&self, r: &[f64]) -> Vec<f64> {
        let n = r.len();
        let y = self.thomas(r).expect("pivots checked at construction");
        let beta = self.sub[0];
        let f = (y[0] + beta * y[n - 1] / self.gamma) * self.fact;
        y.iter().zip(&self.z).map(|(a, b)| a - f * b).collect()
    }

    #[cfg(test)]
    fn apply(&self, x: &[f64]) -> Vec<f64> {
        let n = x.len();
        (0..n)
            .map(|i| self.sub[i] * x[(i + n - 1) % n] + self.diag[i] * x[i] + self.sup[i] * x[(i + 1) % n])
            .collect()
    }
}

/// Crank–Nicolson stepper u ↦ T u + h R q with T = (I − hL/2)⁻¹(I + hL/2)
/// and R = (I − hL/2)⁻¹.
pub struct Stepper {
    lower: Vec<f64>,
    diag: Vec<f64>,
    upper: Vec<f64>,
    h: f64,
    solver: CyclicSolver,
}

impl Stepper {
    pub fn new(a: &[f64], b: &[f64], h: f64) -> Result<Self> {
        let m = a.len();
        let dx = 2.0 * PI / m as f64;
        let lower: Vec<f64> = (0..m).map(|i| a[i] / (dx * dx) - b[i] / (2.0 * dx)).collect();
        let diag: Vec<f64> = (0..m).map(|i| -2.0 * a[i] / (dx * dx)).collect();
        let upper: Vec<f64> = (0..m).map(|i| a[i] / (dx * dx) + b[i] / (2.0 * dx)).collect();
        let solver = CyclicSolver::new(
            lower.iter().map(|v| -0.5 * h * v).collect(),
            diag.iter().map(|v| 1.0 - 0.5 * h * v).collect(),
            upper.iter().map(|v| -0.5 * h * v).collect(),
        )?;
        Ok(Self { lower, diag, upper, h, solver })
    }

    pub fn apply_operator(&self, x: &[f64]) -> Vec<f64> {
        let n = x.len();
        (0..n)
            .map(|i| self.lower[i] * x[(i + n - 1) % n] + self.diag[i] * x[i] + self.upper[i] * x[(i + 1) % n])
            .collect()
    }

    /// One step; `source` is the half-step value of the forcing.
    pub fn step(&self, x: &[f64], source: Option<&[f64]>) -> Vec<f64> {
        let lx = self.apply_operator(x);
        let mut rhs: Vec<f64> = x.iter().zip(&lx).map(|(u, l)| u + 0.5 * self.h * l).collect();
        if let Some(q) = source {
            for (r, s) in rhs.iter_mut().zip(q) {
                *r += self.h * s;
            }
        }
        self.solver.solve(&rhs)
    }

    /// Dense matrix of the discrete operator.
    pub fn operator_matrix(&self) -> DMatrix<f64> {
        let n = self.diag.len();
        let mut l = DMatrix::zeros(n, n);
        for i in 0..n {
            l[(i, (i + n - 1) % n)] += self.lower[i];
            l[(i, i)] += self.diag[i];
            l[(i, (i + 1) % n)] += self.upper[i];
        }
        l
    }

    /// Largest eigenvalue of the symmetric part of L.
    pub fn symmetric_part_bound(&self) -> f64 {
        let l = self.operator_matrix();
        let s = (&l + l.transpose()) * 0.5;
        SymmetricEigen::new(s).eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Growth constant C with |T^n h|² ≤ e^{C nh}|h|² for this scheme.
    ///
    /// From ⟨L ū, ū⟩ ≤ μ|ū|² one step gives the factor (1 + hμ)/(1 − hμ),
    /// which is at most 1 for μ ≤ 0.
    pub fn growth_constant(&self) -> f64 {
        let mu = self.symmetric_part_bound();
        if mu <= 0.0 {
            0.0
        } else if self.h * mu >= 1.0 {
            f64::INFINITY
        } else {
            ((1.0 + self.h * mu) / (1.0 - self.h * mu)).ln() / self.h
        }
    }
}

/// Grid-valued coefficients on the output times.
#[derive(Clone, Debug, PartialEq)]
pub struct ParabolicSolution {
    truncation: Truncation,
    points: usize,
    times: Vec<f64>,
    index: Vec<Multiindex>,
    /// values[α][time][x]
    values: Vec<Vec<Vec<f64>>>,
}

impl ParabolicSolution {
    pub fn truncation(&self) -> Truncation {
        self.truncation
    }

    pub fn points(&self) -> usize {
        self.points
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn index(&self) -> &[Multiindex] {
        &self.index
    }

    pub fn coefficient(&self, alpha: &Multiindex) -> Option<&[Vec<f64>]> {
        self.index.iter().position(|a| a == alpha).map(|p| self.values[p].as_slice())
    }

    pub fn rows(&self) -> impl Iterator<Item = (&Multiindex, &[Vec<f64>])> {
        self.index.iter().zip(self.values.iter().map(|v| v.as_slice()))
    }

    pub fn at(&self, i: usize) -> ChaosExpansion<Vec<f64>> {
        let mut u = ChaosExpansion::new(self.truncation);
        for (a, v) in self.index.iter().zip(&self.values) {
            if v[i].iter().any(|x| *x != 0.0) {
                u.insert(a.clone(), v[i].clone()).expect("index lies in the truncation");
            }
        }
        u
    }

    /// Σ_α α! |u_α(t)|²_{L²} at every output time.
    pub fn energies(&self) -> Vec<f64> {
        (0..self.times.len())
            .map(|i| {
                let mut s = NeumaierSum::default();
                for (a, v) in self.index.iter().zip(&self.values) {
                    let n = l2_norm_sq(&v[i]);
                    if n != 0.0 {
                        s.add(n * a.factorial().unwrap_or(f64::INFINITY));
                    }
                }
                s.value()
            })
            .collect()
    }

    /// Maximum grid discrepancy over all coefficients and times.
    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        if self.times.len() != other.times.len() || self.points != other.points {
            return Err(Error::InvalidArgument("solutions live on different grids".into()));
        }
        let mut m = 0.0f64;
        let idx: std::collections::HashMap<&Multiindex, usize> =
            other.index.iter().enumerate().map(|(i, a)| (a, i)).collect();
        for (a, v) in self.rows() {
            match idx.get(a) {
                Some(&j) => {
                    for (x, y) in v.iter().flatten().zip(other.values[j].iter().flatten()) {
                        m = m.max((x - y).abs());
                    }
                }
                None => v.iter().flatten().for_each(|x| m = m.max(x.abs())),
            }
        }
        for (a, v) in other.rows() {
            if !self.index.contains(a) {
                v.iter().flatten().for_each(|x| m = m.max(x.abs()));
            }
        }
        Ok(m)
    }

    pub(crate) fn from_parts(
        truncation: Truncation,
        points: usize,
        times: Vec<f64>,
        index: Vec<Multiindex>,
        values: Vec<Vec<Vec<f64>>>,
    ) -> Self {
        Self { truncation, points, times, index, values }
    }
}

struct Layout {
    index: Vec<Multiindex>,
    position: std::collections::HashMap<Multiindex, usize>,
    levels: Vec<(usize, usize)>,
}

impl Layout {
    fn new(t: Truncation) -> Self {
        let index = t.index_set();
        let position = index.iter().enumerate().map(|(i, a)| (a.clone(), i)).collect();
        let mut levels = vec![(0, 0); t.degree + 1];
        for (i, a) in index.iter().enumerate() {
            let d = a.degree() as usize;
            if levels[d].1 == 0 {
                levels[d].0 = i;
            }
            levels[d].1 = i + 1;
        }
        Self { index, position, levels }
    }
}

/// c[j][k] = Σ_v m_j m_k at time s.
fn mode_products(space: &NoiseSpace, s: f64) -> Vec<Vec<f64>> {
    let k = space.len();
    let cell = space.cell_of(s);
    (1..=k).map(|j| space.pointwise_products(&HElement::unit(k, j), cell, s)).collect()
}

/// Σ_j φ_j(x) c[j][k] for one k.
fn forcing_source(f: &ModalGridField, c: &[Vec<f64>], k: usize, out: &mut [f64]) {
    for (j, phi) in f.modes.iter().enumerate() {
        let w = c[j][k];
        if w != 0.0 {
            for (o, p) in out.iter_mut().zip(phi) {
                *o += w * p;
            }
        }
    }
}

/// Time-major triangular sweep: at each step all coefficients advance in
/// degree order, the lower levels entering through their half-step average.
pub fn propagate_parabolic(p: &ParabolicProblem) -> Result<ParabolicSolution> {
    p.validate()?;
    let m = p.points();
    let h = p.dt();
    let stepper = Stepper::new(&p.a, &p.b, h)?;
    let layout = Layout::new(p.truncation());
    let n_alpha = layout.index.len();
    let mut cur: Vec<Vec<f64>> =
        layout.index.iter().map(|a| p.initial.get(a).cloned().unwrap_or_else(|| vec![0.0; m])).collect();
    let forcing: Vec<Option<&ModalGridField>> =
        layout.index.iter().map(|a| p.forcing.get(a).filter(|f| !f.is_zero())).collect();
    let has_forcing = forcing.iter().any(|f| f.is_some());
    let mut out_times = vec![0.0];
    let mut values: Vec<Vec<Vec<f64>>> = cur.iter().map(|v| vec![v.clone()]).collect();
    let mut next: Vec<Vec<f64>> = vec![Vec::new(); n_alpha];
    for j in 0..p.steps {
        let s = (j as f64 + 0.5) * h;
        let gamma = p.space.pointwise_products(&p.g, p.space.cell_of(s), s);
        let c = if has_forcing { mode_products(&p.space, s) } else { Vec::new() };
        for &(lo, hi) in &layout.levels {
            let (done, rest) = next.split_at_mut(lo);
            let done: &[Vec<f64>] = done;
            let cur_ref = &cur;
            let level: Vec<Vec<f64>> = (lo..hi)
                .into_par_iter()
                .map(|pos| {
                    let alpha = &layout.index[pos];
                    let mut q = vec![0.0; m];
                    let mut any = false;
                    for &(k, _) in alpha.entries() {
                        let kk = k as usize - 1;
                        let beta = alpha.decrement(k).expect("k is in the support");
                        let b = layout.position[&beta];
                        if gamma[kk] != 0.0 {
                            any = true;
                            for ((o, x), y) in q.iter_mut().zip(&cur_ref[b]).zip(&done[b]) {
                                *o += gamma[kk] * 0.5 * (x + y);
                            }
                        }
                        if let Some(f) = forcing[b] {
                            any = true;
                            forcing_source(f, &c, kk, &mut q);
                        }
                    }
                    stepper.step(&cur_ref[pos], any.then_some(q.as_slice()))
                })
                .collect();
            for (slot, v) in rest.iter_mut().zip(level) {
                *slot = v;
            }
        }
        std::mem::swap(&mut cur, &mut next);
        if (j + 1) % p.output_every == 0 {
            out_times.push(if j + 1 == p.steps { p.space.horizon() } else { (j + 1) as f64 * h });
            for (row, v) in values.iter_mut().zip(&cur) {
                row.push(v.clone());
            }
        }
    }
    Ok(ParabolicSolution::from_parts(p.truncation(), m, out_times, layout.index, values))
}

/// Mild form: Σ_{β≤α} (T_t w_{α−β}) H(t)^β/β! plus
/// Σ_k ∫_0^t T_{t−s} Σ_β f_{α−ε_k−β}(s) m_k H(s,t)^β/β! ds, with T the
/// discrete Crank–Nicolson semigroup and the s-integral at half steps.
pub fn mild_solution(p: &ParabolicProblem) -> Result<ParabolicSolution> {
    p.validate()?;
    let m = p.points();
    let h = p.dt();
    let stepper = Stepper::new(&p.a, &p.b, h)?;
    let trunc = p.truncation();
    let layout = Layout::new(trunc);
    let n_alpha = layout.index.len();
    let out_steps: Vec<usize> = (0..=p.steps).step_by(p.output_every).collect();
    let time_of = |n: usize| if n == p.steps { p.space.horizon() } else { n as f64 * h };

    // T^n w_γ on the output steps.
    let w: Vec<(&Multiindex, &Vec<f64>)> = p.initial.iter().filter(|(_, v)| !v.is_zero()).collect();
    let mut semigroup: Vec<Vec<Vec<f64>>> = vec![Vec::with_capacity(out_steps.len()); w.len()];
    for (slot, (_, v)) in semigroup.iter_mut().zip(&w) {
        let mut x = (*v).clone();
        let mut next_out = 0;
        for n in 0..=p.steps {
            if next_out < out_steps.len() && out_steps[next_out] == n {
                slot.push(x.clone());
                next_out += 1;
            }
            if n < p.steps {
                x = stepper.step(&x, None);
            }
        }
    }

    let forcing: Vec<(&Multiindex, &ModalGridField)> = p.forcing.iter().filter(|(_, f)| !f.is_zero()).collect();
    let columns: Vec<Vec<Vec<f64>>> = out_steps
        .par_iter()
        .enumerate()
        .map(|(oi, &n)| {
            let t = time_of(n);
            let mut col = vec![vec![0.0; m]; n_alpha];
            let e = wick_exp(&p.space.restrict(&p.g, 0.0, t), p.degree);
            for ((gam, _), tw) in w.iter().zip(&semigroup) {
                for (b, eb) in e.iter() {
                    let a = gam.add(b);
                    if let Some(&pos) = layout.position.get(&a) {
                        for (o, x) in col[pos].iter_mut().zip(&tw[oi]) {
                            *o += eb * x;
                        }
                    }
                }
            }
            if !forcing.is_empty() && n > 0 {
                let mut v = vec![vec![0.0; m]; n_alpha];
                let mut q = vec![vec![0.0; m]; n_alpha];
                for j in 0..n {
                    let s = (j as f64 + 0.5) * h;
                    let es = wick_exp(&p.space.restrict(&p.g, s, t), p.degree.saturating_sub(1));
                    let c = mode_products(&p.space, s);
                    q.iter_mut().for_each(|r| r.iter_mut().for_each(|x| *x = 0.0));
                    let mut touched = vec![false; n_alpha];
                    for (gam, f) in &forcing {
                        for k in 0..p.space.len() {
                            let mut src = vec![0.0; m];
                            forcing_source(f, &c, k, &mut src);
                            if src.iter().all(|x| *x == 0.0) {
                                continue;
                            }
                            let base = gam.increment(k as u32 + 1);
                            for (b, eb) in es.iter() {
                                let a = base.add(b);
                                if let Some(&pos) = layout.position.get(&a) {
                                    touched[pos] = true;
                                    for (o, x) in q[pos].iter_mut().zip(&src) {
                                        *o += eb * x;
                                    }
                                }
                            }
                        }
                    }
                    for pos in 0..n_alpha {
                        if touched[pos] || v[pos].iter().any(|x| *x != 0.0) {
                            v[pos] = stepper.step(&v[pos], touched[pos].then_some(q[pos].as_slice()));
                        }
                    }
                }
                for (c, x) in col.iter_mut().zip(&v) {
                    for (o, y) in c.iter_mut().zip(x) {
                        *o += y;
                    }
                }
            }
            col
        })
        .collect();
    let mut values = vec![Vec::with_capacity(out_steps.len()); n_alpha];
    for col in columns {
        for (row, v) in values.iter_mut().zip(col) {
            row.push(v);
        }
    }
    let times = out_steps.iter().map(|&n| time_of(n)).collect();
    Ok(ParabolicSolution::from_parts(trunc, m, times, layout.index, values))
}

/// |T_t h|² against e^{Ct}|h|² for the discrete semigroup.
#[derive(Clone, Debug, Serialize)]
pub struct SemigroupCheck {
    pub t: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub constant: f64,
    pub holds: bool,
}

/// Squared discrete L² norms; t is rounded to the nearest step.
pub fn semigroup_norm_check(p: &ParabolicProblem, h: &[f64], t: f64) -> Result<SemigroupCheck> {
    p.validate()?;
    if h.len() != p.points() {
        return Err(Error::Incompatible(format!("{} values for {} grid points", h.len(), p.points())));
    }
    let dt = p.dt();
    let n = (t / dt).round() as usize;
    let stepper = Stepper::new(&p.a, &p.b, dt)?;
    let mut x = h.to_vec();
    for _ in 0..n {
        x = stepper.step(&x, None);
    }
    let c = stepper.growth_constant();
    let t = n as f64 * dt;
    let lhs = l2_norm_sq(&x);
    let rhs = (c * t).exp() * l2_norm_sq(h);
    Ok(SemigroupCheck { t, lhs, rhs, constant: c, holds: lhs <= rhs * (1.0 + 1e-12) + 1e-300 })
}

/// sup_t Σ α!|u_α(t)|² against e^{(C + 2g²)T}(|w|² + 2 Σ α! ∫|f_α|² dμ),
/// where g² bounds Σ_v G(t,v)² and C is the scheme's growth constant.
#[derive(Clone, Debug, Serialize)]
pub struct EnergyBound {
    pub sup_energy: f64,
    pub bound: f64,
    pub holds: bool,
}

pub fn energy_bound(p: &ParabolicProblem, u: &ParabolicSolution) -> Result<EnergyBound> {
    p.validate()?;
    let stepper = Stepper::new(&p.a, &p.b, p.dt())?;
    let c = stepper.growth_constant();
    let mut g_sup = 0.0f64;
    for cell in 0..p.space.cells() {
        let (lo, hi) = p.space.cell_bounds(cell);
        for i in 0..=256 {
            let t = lo + (hi - lo) * i as f64 / 256.0;
            let mut s = 0.0;
            for v in 0..p.space.points() {
                let gv = p.g.eval(&p.space, t, v);
                s += gv * gv;
            }
            g_sup = g_sup.max(s);
        }
    }
    // Sampling can miss the peak of a polynomial; pad by a margin.
    let g_sup = g_sup * 1.01;
    let w_sq: f64 = p.initial.iter().map(|(a, w)| l2_norm_sq(w) * a.factorial().unwrap_or(f64::INFINITY)).sum();
    let f_sq: f64 = p.forcing.iter().map(|(a, f)| f.l2_norm_sq() * a.factorial().unwrap_or(f64::INFINITY)).sum();
    let sup_energy = u.energies().into_iter().fold(0.0, f64::max);
    let bound = ((c + 2.0 * g_sup) * p.space.horizon()).exp() * (w_sq + 2.0 * f_sq);
    Ok(EnergyBound { sup_energy, bound, holds: sup_energy <= bound * (1.0 + 1e-12) })
}

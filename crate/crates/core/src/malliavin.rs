//! Skorokhod integrals, Malliavin derivatives, isometry, duality and
//! adaptedness, all at the level of chaos coefficients.

use serde::Serialize;

use crate::chaos::{ChaosExpansion, Coefficient};
use crate::error::{Error, Result};
use crate::multiindex::{factorial, Multiindex};
use crate::noise_space::{HElement, NoiseSpace, SymmetricTensor};
use crate::quadrature::gauss_legendre;

/// A random element of H: coefficients u_α ∈ H.
pub type HValuedExpansion = ChaosExpansion<HElement>;

/// Threshold on ∫_{t0}^T |𝔻u|² below which u counts as measurable.
pub const MEASURABILITY_TOL: f64 = 1e-12;

/// δ(u)_α = Σ_k ⟨u_{α−ε_k}, m_k⟩. Terms above the truncation are dropped
/// and flagged.
pub fn skorokhod(u: &HValuedExpansion) -> ChaosExpansion<f64> {
    let mut out = ChaosExpansion::new(u.truncation());
    for (a, h) in u.iter() {
        for (k, &c) in h.coeffs().iter().enumerate() {
            if c != 0.0 {
                out.accumulate(a.increment(k as u32 + 1), 1.0, &c);
            }
        }
    }
    out.with_truncation_loss_or(u.truncation_loss())
}

/// δⁿ for an expansion with degree-n symmetric tensor coefficients:
/// δⁿ(u)_{α+p} += n!·u_{α,p}.
pub fn skorokhod_n(u: &ChaosExpansion<SymmetricTensor>, n: usize) -> Result<ChaosExpansion<f64>> {
    let nf = factorial(n as u32);
    let mut out = ChaosExpansion::new(u.truncation());
    for (a, v) in u.iter() {
        if v.degree() != n && !v.is_empty() {
            return Err(Error::InvalidArgument(format!("coefficient at {a} has degree {}, expected {n}", v.degree())));
        }
        for (p, &c) in v.iter() {
            out.accumulate(a.add(p), nf, &c);
        }
    }
    Ok(out.with_truncation_loss_or(u.truncation_loss()))
}

/// (𝔻u)_α = Σ_k (α_k + 1) u_{α+ε_k} m_k.
pub fn malliavin(u: &ChaosExpansion<f64>) -> HValuedExpansion {
    let vars = u.truncation().vars;
    let mut out: HValuedExpansion = ChaosExpansion::new(u.truncation());
    for (g, &c) in u.iter() {
        if c == 0.0 {
            continue;
        }
        for &(k, e) in g.entries() {
            let mut h = HElement::zeros(vars);
            h.coeffs_mut()[k as usize - 1] = e as f64 * c;
            out.accumulate(g.decrement(k).expect("k is in the support"), 1.0, &h);
        }
    }
    out.with_truncation_loss_or(u.truncation_loss())
}

/// 𝔻 I_n(v) = n I_{n−1}(v(·, t)), built from the partial evaluation of v.
pub fn malliavin_on_integral(space: &NoiseSpace, v: &SymmetricTensor) -> Result<HValuedExpansion> {
    if v.degree() == 0 {
        return Err(Error::InvalidArgument("the derivative of a degree-0 integral vanishes; need n >= 1".into()));
    }
    let n = v.degree();
    let frozen = v.partial_evaluation(space.len())?;
    // n · I_{n−1}(E_β) = n · (n−1)! 𝔑_β
    let w = n as f64 * factorial(n as u32 - 1);
    let mut out = ChaosExpansion::new(crate::chaos::Truncation::new(space.len(), n));
    for (b, h) in frozen {
        out.insert(b, h.scaled(w))?;
    }
    Ok(out)
}

/// Both sides of the Itô–Skorokhod isometry.
#[derive(Clone, Debug, Serialize)]
pub struct IsometryReport {
    /// E[δ(u)²].
    pub lhs: f64,
    /// E‖u‖² plus the cross term.
    pub rhs: f64,
    pub norm_sq: f64,
    pub cross_term: f64,
    pub truncation_loss: bool,
}

/// E‖u‖² = Σ_α α! |u_α|².
pub fn h_norm_sq(u: &HValuedExpansion) -> f64 {
    u.second_moment()
}

/// Σ_α α! Σ_{k,j} (α_k+1)(α_j+1) u_{α+ε_k, j} u_{α+ε_j, k}.
pub fn isometry_cross_term(u: &HValuedExpansion) -> f64 {
    let mut s = crate::chaos::NeumaierSum::default();
    for (b, h) in u.iter() {
        for &(k, bk) in b.entries() {
            let a = b.decrement(k).expect("k is in the support");
            let af = a.factorial().unwrap_or(f64::INFINITY);
            for (j, &hj) in h.coeffs().iter().enumerate() {
                if hj == 0.0 {
                    continue;
                }
                let g = a.increment(j as u32 + 1);
                if let Some(hg) = u.get(&g) {
                    let gj = g.get(j as u32 + 1) as f64;
                    s.add(af * bk as f64 * gj * hj * hg.get(k as usize));
                }
            }
        }
    }
    s.value()
}

pub fn isometry_sides(u: &HValuedExpansion) -> IsometryReport {
    let d = skorokhod(u);
    let norm_sq = h_norm_sq(u);
    let cross_term = isometry_cross_term(u);
    IsometryReport {
        lhs: d.second_moment(),
        rhs: norm_sq + cross_term,
        norm_sq,
        cross_term,
        truncation_loss: d.truncation_loss(),
    }
}

/// Both sides of E[δ(u) v] = E[∫ u 𝔻v dμ].
#[derive(Clone, Debug, Serialize)]
pub struct DualityReport {
    pub lhs: f64,
    pub rhs: f64,
    pub gap: f64,
    pub truncation_loss: bool,
}

pub fn duality_sides(u: &HValuedExpansion, v: &ChaosExpansion<f64>) -> DualityReport {
    let d = skorokhod(u);
    let mut lhs = crate::chaos::NeumaierSum::default();
    for (g, &c) in d.iter() {
        if let Some(&x) = v.get(g) {
            lhs.add(g.factorial().unwrap_or(f64::INFINITY) * c * x);
        }
    }
    let mut rhs = crate::chaos::NeumaierSum::default();
    for (a, h) in u.iter() {
        let af = a.factorial().unwrap_or(f64::INFINITY);
        for (k, &c) in h.coeffs().iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            let g = a.increment(k as u32 + 1);
            if let Some(&x) = v.get(&g) {
                rhs.add(af * c * g.get(k as u32 + 1) as f64 * x);
            }
        }
    }
    let (lhs, rhs) = (lhs.value(), rhs.value());
    DualityReport { lhs, rhs, gap: (lhs - rhs).abs(), truncation_loss: d.truncation_loss() }
}

/// |E[δ(u)v] − E[∫ u 𝔻v dμ]|.
pub fn duality_gap(u: &HValuedExpansion, v: &ChaosExpansion<f64>) -> f64 {
    duality_sides(u, v).gap
}

/// ∫_{t0}^T ∫_V E|𝔻u(t,υ)|² dμ from coefficients and exact mode overlaps.
pub fn measurability_defect(space: &NoiseSpace, u: &ChaosExpansion<f64>, t0: f64) -> Result<f64> {
    if u.truncation().vars > space.len() {
        return Err(Error::Incompatible(format!(
            "expansion over {} variables, space has {} modes",
            u.truncation().vars,
            space.len()
        )));
    }
    let t_end = space.horizon();
    let mut total = 0.0;
    for (a, h) in malliavin(u).iter() {
        let mut q = 0.0;
        for (j, &hj) in h.coeffs().iter().enumerate() {
            if hj == 0.0 {
                continue;
            }
            let mj = space.mode(j + 1);
            for deg in 0..space.time_modes() {
                let k = space.index(crate::noise_space::Mode { degree: deg, ..mj });
                let hk = h.get(k);
                if hk != 0.0 {
                    q += hj * hk * space.overlap(j + 1, k, t0, t_end);
                }
            }
        }
        total += a.factorial().unwrap_or(f64::INFINITY) * q;
    }
    Ok(total.max(0.0))
}

/// Whether u is measurable with respect to the noise up to time t0.
pub fn is_measurable_at(space: &NoiseSpace, u: &ChaosExpansion<f64>, t0: f64) -> Result<bool> {
    Ok(measurability_defect(space, u, t0)? <= MEASURABILITY_TOL)
}

/// A time-indexed family is adapted if each u(t) is measurable at t.
pub fn is_adapted(space: &NoiseSpace, field: &[(f64, ChaosExpansion<f64>)]) -> Result<bool> {
    for (t, u) in field {
        if !is_measurable_at(space, u, *t)? {
            return Ok(false);
        }
    }
    Ok(true)
}

/// E ∫∫_{s>t} |𝔻_{(s,υ')} u(t,υ)|² for an H-valued field u(t,υ).
pub fn field_adaptedness_defect(space: &NoiseSpace, u: &HValuedExpansion) -> Result<f64> {
    let k_total = space.len();
    if u.iter().any(|(_, h)| h.len() > k_total) || u.truncation().vars > k_total {
        return Err(Error::Incompatible("field uses modes outside the space".into()));
    }
    let tri = TriangleMoments::new(space);
    let mut total = 0.0;
    // Coefficient matrices A_α[j][k] = (α_k + 1) u_{α+ε_k, j}.
    let mut mats: std::collections::BTreeMap<Multiindex, Vec<(usize, usize, f64)>> = Default::default();
    for (b, h) in u.iter() {
        for &(k, bk) in b.entries() {
            let a = b.decrement(k).expect("k is in the support");
            let e = mats.entry(a).or_default();
            for (j, &hj) in h.coeffs().iter().enumerate() {
                if hj != 0.0 {
                    e.push((j + 1, k as usize, bk as f64 * hj));
                }
            }
        }
    }
    for (a, entries) in mats {
        let mut q = 0.0;
        for &(j, k, x) in &entries {
            for &(j2, k2, y) in &entries {
                q += x * y * tri.get(space, j, j2, k, k2);
            }
        }
        total += a.factorial().unwrap_or(f64::INFINITY) * q;
    }
    Ok(total.max(0.0))
}

/// Whether an H-valued field u(t,υ) is adapted.
pub fn is_adapted_field(space: &NoiseSpace, u: &HValuedExpansion) -> Result<bool> {
    Ok(field_adaptedness_defect(space, u)? <= MEASURABILITY_TOL)
}

/// ∫_cell ℓ_a ℓ_b(t) ∫_t^{cell end} ℓ_c ℓ_d(s) ds dt for one cell, any cell
/// (all cells share the same values up to translation).
struct TriangleMoments {
    m: usize,
    values: Vec<f64>,
}

impl TriangleMoments {
    fn new(space: &NoiseSpace) -> Self {
        let m = space.time_modes();
        let (a, b) = space.cell_bounds(0);
        let rule = gauss_legendre(2 * m + 1);
        let ell = |deg: usize, t: f64| space.time_mode_in_cell(space.index(crate::noise_space::Mode { cell: 0, degree: deg, point: 0 }), 0, t);
        let mut values = vec![0.0; m * m * m * m];
        let (c, h) = ((a + b) / 2.0, (b - a) / 2.0);
        for (x, w) in rule.0.iter().zip(&rule.1) {
            let t = c + h * x;
            let lt: Vec<f64> = (0..m).map(|i| ell(i, t)).collect();
            // Inner integral over [t, b].
            let (ci, hi) = ((t + b) / 2.0, (b - t) / 2.0);
            let mut inner = vec![0.0; m * m];
            for (y, v) in rule.0.iter().zip(&rule.1) {
                let s = ci + hi * y;
                let ls: Vec<f64> = (0..m).map(|i| ell(i, s)).collect();
                for p in 0..m {
                    for q in 0..m {
                        inner[p * m + q] += v * hi * ls[p] * ls[q];
                    }
                }
            }
            for i in 0..m {
                for j in 0..m {
                    let o = w * h * lt[i] * lt[j];
                    for p in 0..m {
                        for q in 0..m {
                            values[((i * m + j) * m + p) * m + q] += o * inner[p * m + q];
                        }
                    }
                }
            }
        }
        Self { m, values }
    }

    /// R(j, j', k, k') = ∫∫_{s>t} Σ m_j m_{j'}(t,·) Σ m_k m_{k'}(s,·).
    fn get(&self, space: &NoiseSpace, j: usize, j2: usize, k: usize, k2: usize) -> f64 {
        let (mj, mj2, mk, mk2) = (space.mode(j), space.mode(j2), space.mode(k), space.mode(k2));
        if mj.point != mj2.point || mk.point != mk2.point || mj.cell != mj2.cell || mk.cell != mk2.cell {
            return 0.0;
        }
        if mk.cell > mj.cell {
            return f64::from(mj.degree == mj2.degree && mk.degree == mk2.degree);
        }
        if mk.cell < mj.cell {
            return 0.0;
        }
        let m = self.m;
        self.values[((mj.degree * m + mj2.degree) * m + mk.degree) * m + mk2.degree]
    }
}

trait LossExt {
    fn with_truncation_loss_or(self, upstream: bool) -> Self;
}

impl<C: Coefficient> LossExt for ChaosExpansion<C> {
    fn with_truncation_loss_or(self, upstream: bool) -> Self {
        let l = self.truncation_loss() || upstream;
        self.with_truncation_loss(l)
    }
}

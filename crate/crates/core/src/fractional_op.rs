//! Fractional powers of the Laplacian by three routes: the spectral
//! multiplier λ^s, the heat-semigroup singular integral, and the
//! Dirichlet-to-Neumann map of the Poisson extension.
//!
//! Time integrals use Gauss–Legendre panels in τ = ln t. The large-time tail,
//! where the heat kernel equals 1/Vol to within e^{-37}, is integrated in
//! closed form with the incomplete Gamma function.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::heat_kernel::{periodic_heat_1d_with, sphere_heat_zonal};
use crate::manifold::{ManifoldSpec, Point, QuadratureRule, SpectralFunction, SpectralManifold};
use crate::special::{gamma, gauss_legendre, lower_gamma};
use std::f64::consts::PI;

/// Order s of the fractional Laplacian with its normalizations.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FracParams {
    s: f64,
    c_s: f64,
    c_dtn: f64,
}

impl FracParams {
    pub fn new(s: f64) -> Result<Self> {
        if !(s > 0.0 && s < 1.0) {
            return Err(Error::InvalidParameter(format!("s = {s} must lie in (0, 1)")));
        }
        Ok(FracParams { s, c_s: normalization(s), c_dtn: dtn_constant(s) })
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    /// c_s = 1/|Γ(-s)|.
    pub fn c_s(&self) -> f64 {
        self.c_s
    }

    /// c(s) = 2^{2s-1} Γ(s) / Γ(1-s).
    pub fn c_dtn(&self) -> f64 {
        self.c_dtn
    }
}

/// 1/|Γ(-a)|, the subordination constant for exponent a.
pub fn normalization(a: f64) -> f64 {
    1.0 / gamma(-a).abs()
}

pub fn dtn_constant(s: f64) -> f64 {
    2f64.powf(2.0 * s - 1.0) * gamma(s) / gamma(1.0 - s)
}

/// α_{n,a} = 2^{2a} Γ((n+2a)/2) / (π^{n/2} |Γ(-a)|): the Euclidean kernel
/// constant for subordination exponent a.
pub fn alpha(n: usize, a: f64) -> f64 {
    let nf = n as f64;
    4f64.powf(a) * gamma((nf + 2.0 * a) / 2.0) / (PI.powf(nf / 2.0) * gamma(-a).abs())
}

/// How the flat heat kernel is evaluated at small times.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SmallTimeForm {
    /// Image sums when t(2π/L)² < 1, cosine series otherwise.
    Images,
    /// Cosine series at every t.
    Spectral,
}

/// Discretization of t-integrals: Gauss–Legendre panels in ln t.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SubordinationQuad {
    /// Panels are aligned at this time.
    pub t_split: f64,
    /// Gauss–Legendre nodes per panel (≥ 8).
    pub nodes_per_panel: usize,
    /// Maximal panel length in ln t.
    pub panel_width: f64,
    /// Lower limit when no Gaussian factor cuts off small times.
    pub t_min: f64,
    /// Upper limit (raised to 37/λ₁ when larger).
    pub t_max: f64,
    pub small_time: SmallTimeForm,
}

impl Default for SubordinationQuad {
    fn default() -> Self {
        SubordinationQuad {
            t_split: 1.0,
            nodes_per_panel: 16,
            panel_width: 1.0,
            t_min: 1e-6,
            t_max: 60.0,
            small_time: SmallTimeForm::Images,
        }
    }
}

/// Nodes t_j and weights w_j (Jacobian included) of a time rule.
#[derive(Clone, Debug)]
pub struct TimeRule {
    pub t: Vec<f64>,
    pub w: Vec<f64>,
}

impl SubordinationQuad {
    pub fn validate(&self) -> Result<()> {
        if self.nodes_per_panel < 8 {
            return Err(Error::InvalidParameter(format!("nodes per panel {} below 8", self.nodes_per_panel)));
        }
        let ok = self.t_split > 0.0 && self.panel_width > 0.0 && self.t_min > 0.0 && self.t_max > self.t_min;
        if !ok {
            return Err(Error::InvalidParameter("subordination limits must be positive and ordered".into()));
        }
        Ok(())
    }

    /// Same layout with `factor` times as many nodes per panel.
    pub fn refined(&self, factor: usize) -> Self {
        SubordinationQuad { nodes_per_panel: self.nodes_per_panel * factor, ..*self }
    }

    /// Upper time limit for a manifold: max(t_max, 37/λ₁).
    pub fn t_hi(&self, m: &SpectralManifold) -> f64 {
        self.t_max.max(37.0 / m.first_eigenvalue())
    }

    /// Composite rule on [t_lo, t_hi].
    pub fn rule(&self, t_lo: f64, t_hi: f64) -> TimeRule {
        let (x, w) = gauss_legendre(self.nodes_per_panel);
        let a = t_lo.ln();
        let b = t_hi.ln();
        let s = self.t_split.ln();
        let mut edges = Vec::new();
        let push_seg = |u: f64, v: f64, edges: &mut Vec<f64>| {
            let k = ((v - u) / self.panel_width).ceil().max(1.0) as usize;
            for i in 0..k {
                edges.push(u + (v - u) * i as f64 / k as f64);
            }
        };
        if a < s && s < b {
            push_seg(a, s, &mut edges);
            push_seg(s, b, &mut edges);
        } else {
            push_seg(a, b, &mut edges);
        }
        edges.push(b);
        let mut rule = TimeRule { t: Vec::new(), w: Vec::new() };
        for pair in edges.windows(2) {
            let (u, v) = (pair[0], pair[1]);
            let half = 0.5 * (v - u);
            let mid = 0.5 * (v + u);
            for (xi, wi) in x.iter().zip(&w) {
                let t = (half * xi + mid).exp();
                rule.t.push(t);
                rule.w.push(half * wi * t);
            }
        }
        rule
    }
}

/// ∫_T^∞ e^{-b/t} t^{-1-a} dt = b^{-a} γ(a, b/T), or T^{-a}/a when b = 0.
pub fn large_time_tail(a: f64, b: f64, t_hi: f64) -> f64 {
    if b == 0.0 {
        t_hi.powf(-a) / a
    } else {
        b.powf(-a) * lower_gamma(a, b / t_hi)
    }
}

/// Lower limit for integrands carrying e^{-b/t}.
fn lower_limit(b: f64, quad: &SubordinationQuad) -> f64 {
    if b > 0.0 {
        b / 45.0
    } else {
        quad.t_min
    }
}

/// Subordinated kernel c ∫ K_M(t,x,y) e^{-ε²/4t} t^{-1-a} dt for a fixed
/// exponent a and constant c.
#[derive(Clone, Debug)]
pub struct KernelEvaluator {
    manifold: SpectralManifold,
    quad: SubordinationQuad,
    a: f64,
    norm: f64,
}

impl KernelEvaluator {
    pub fn new(m: &SpectralManifold, a: f64, norm: f64, quad: SubordinationQuad) -> Result<Self> {
        quad.validate()?;
        if !(a > 0.0) {
            return Err(Error::InvalidParameter(format!("subordination exponent {a} must be positive")));
        }
        Ok(KernelEvaluator { manifold: m.clone(), quad, a, norm })
    }

    /// K^s_M for the fractional Laplacian.
    pub fn fractional(m: &SpectralManifold, p: &FracParams, quad: SubordinationQuad) -> Result<Self> {
        Self::new(m, p.s, p.c_s, quad)
    }

    pub fn manifold(&self) -> &SpectralManifold {
        &self.manifold
    }

    pub fn quad(&self) -> &SubordinationQuad {
        &self.quad
    }

    pub fn exponent(&self) -> f64 {
        self.a
    }

    pub fn norm(&self) -> f64 {
        self.norm
    }

    /// Unregularized kernel; x ≠ y.
    pub fn kernel(&self, x: &Point, y: &Point) -> Result<f64> {
        let d = self.manifold.distance(x, y);
        if d == 0.0 {
            return Err(Error::CoincidentPoints);
        }
        Ok(self.kernel_at(&self.separation(x, y), d, 0.0))
    }

    /// Regularized kernel with ε > 0.
    pub fn kernel_reg(&self, eps: f64, x: &Point, y: &Point) -> Result<f64> {
        if !(eps > 0.0) {
            return Err(Error::InvalidParameter(format!("regularization {eps} must be positive")));
        }
        let d = self.manifold.distance(x, y);
        Ok(self.kernel_at(&self.separation(x, y), d, eps))
    }

    pub(crate) fn separation(&self, x: &Point, y: &Point) -> [f64; 3] {
        crate::heat_kernel::separation(&self.manifold, x, y)
    }

    /// Heat kernel at time t for a precomputed separation.
    pub(crate) fn heat(&self, t: f64, sep: &[f64; 3]) -> f64 {
        let images = self.quad.small_time == SmallTimeForm::Images;
        match self.manifold.spec() {
            ManifoldSpec::Circle { radius } => periodic_heat_1d_with(t, sep[0], 2.0 * PI * radius, images),
            ManifoldSpec::FlatTorus { periods } => {
                periods.iter().enumerate().map(|(i, l)| periodic_heat_1d_with(t, sep[i], *l, images)).product()
            }
            ManifoldSpec::Sphere2 { radius } => sphere_heat_zonal(t, sep[0], *radius),
        }
    }

    /// Kernel value from a separation record and the geodesic distance d.
    pub fn kernel_at(&self, sep: &[f64; 3], d: f64, eps: f64) -> f64 {
        let b_reg = 0.25 * eps * eps;
        let t_lo = lower_limit(0.25 * d * d + b_reg, &self.quad);
        let t_hi = self.quad.t_hi(&self.manifold);
        let rule = self.quad.rule(t_lo, t_hi);
        let mut sum = 0.0;
        for (t, w) in rule.t.iter().zip(&rule.w) {
            sum += w * self.heat(*t, sep) * (-b_reg / t).exp() * t.powf(-1.0 - self.a);
        }
        let tail = large_time_tail(self.a, b_reg, t_hi) / self.manifold.volume();
        self.norm * (sum + tail)
    }
}

/// K^s_M(x, y) for x ≠ y.
pub fn frac_kernel(
    m: &SpectralManifold,
    p: &FracParams,
    x: &Point,
    y: &Point,
    quad: &SubordinationQuad,
) -> Result<f64> {
    KernelEvaluator::fractional(m, p, *quad)?.kernel(x, y)
}

/// K^s_{M,ε}(x, y).
pub fn frac_kernel_reg(
    m: &SpectralManifold,
    p: &FracParams,
    eps: f64,
    x: &Point,
    y: &Point,
    quad: &SubordinationQuad,
) -> Result<f64> {
    KernelEvaluator::fractional(m, p, *quad)?.kernel_reg(eps, x, y)
}

/// Coefficient map u_k ↦ λ_k^s u_k.
pub fn frac_apply_spectral(p: &FracParams, u: &SpectralFunction) -> SpectralFunction {
    let b = u.basis().clone();
    u.map_coeffs(|k, c| {
        let lam = b.eigenvalue(k);
        if lam == 0.0 {
            0.0
        } else {
            lam.powf(p.s) * c
        }
    })
}

/// c_s ∫₀^∞ (1 - e^{-λt}) t^{-1-s} dt by quadrature on [t_min, T] plus
/// analytic tails on both ends.
pub fn subordinated_power(s: f64, lam: f64, quad: &SubordinationQuad) -> f64 {
    if lam == 0.0 {
        return 0.0;
    }
    let t_lo = quad.t_min.min(1.0 / lam);
    let t_hi = quad.t_max.max(37.0 / lam);
    let rule = quad.rule(t_lo, t_hi);
    let mut sum = 0.0;
    for (t, w) in rule.t.iter().zip(&rule.w) {
        sum += w * (-(-lam * t).exp_m1()) * t.powf(-1.0 - s);
    }
    // ∫₀^{t_lo}: alternating series of (1 - e^{-λt})
    let mut small = 0.0;
    let mut fact = 1.0;
    for j in 1..60 {
        let jf = j as f64;
        fact *= jf;
        let term = lam.powi(j) * t_lo.powf(jf - s) / (fact * (jf - s));
        small += if j % 2 == 1 { term } else { -term };
        if term < 1e-20 * small.abs() {
            break;
        }
    }
    let large = t_hi.powf(-s) / s;
    normalization(s) * (sum + small + large)
}

/// |c_s ∫(1 - e^{-λt}) t^{-1-s} dt - λ^s|.
pub fn scalar_identity_defect(s: f64, lam: f64, quad: &SubordinationQuad) -> Result<f64> {
    FracParams::new(s)?;
    quad.validate()?;
    if !(lam > 0.0) {
        return Err(Error::InvalidParameter(format!("λ = {lam} must be positive")));
    }
    Ok((subordinated_power(s, lam, quad) - lam.powf(s)).abs())
}

/// Per-mode time quadrature of the semigroup formula. Each mode is checked
/// against the same rule with doubled node count.
pub fn frac_apply_semigroup(
    p: &FracParams,
    u: &SpectralFunction,
    quad: &SubordinationQuad,
) -> Result<SpectralFunction> {
    quad.validate()?;
    let fine = quad.refined(2);
    let b = u.basis().clone();
    let mut out = Vec::with_capacity(u.truncation());
    for (k, c) in u.coeffs().iter().enumerate() {
        let lam = b.eigenvalue(k);
        let v = subordinated_power(p.s, lam, quad);
        let v2 = subordinated_power(p.s, lam, &fine);
        if (v - v2).abs() > 1e-9 * v2.abs().max(1.0) {
            return Err(Error::QuadratureNotConverged(format!("mode {k}: {v} vs {v2}")));
        }
        out.push(v * c);
    }
    SpectralFunction::new(b, out)
}

/// Subordination of the Euclidean heat kernel at distance r with exponent a,
/// against the closed form α_{n,a} r^{-(n+2a)}.
pub fn euclidean_kernel_check(n: usize, a: f64, r: f64, quad: &SubordinationQuad) -> Result<(f64, f64)> {
    if !(1..=3).contains(&n) {
        return Err(Error::InvalidParameter(format!("dimension {n} outside 1..=3")));
    }
    if !(r > 0.0) {
        return Err(Error::InvalidParameter(format!("radius {r} must be positive")));
    }
    quad.validate()?;
    let nf = n as f64;
    let b = 0.25 * r * r;
    let t_hi = quad.t_max;
    let rule = quad.rule(b / 45.0, t_hi);
    let mut sum = 0.0;
    for (t, w) in rule.t.iter().zip(&rule.w) {
        sum += w * (4.0 * PI * t).powf(-nf / 2.0) * (-b / t).exp() * t.powf(-1.0 - a);
    }
    let ap = nf / 2.0 + a;
    sum += (4.0 * PI).powf(-nf / 2.0) * b.powf(-ap) * lower_gamma(ap, b / t_hi);
    let value = normalization(a) * sum;
    Ok((value, alpha(n, a) * r.powf(-(nf + 2.0 * a))))
}

/// Default regularization schedule ε_j = 0.2·2^{-j}, j = 0..5.
pub fn default_schedule() -> Vec<f64> {
    (0..6).map(|j| 0.2 * 0.5f64.powi(j)).collect()
}

/// Outcome of a schedule extrapolation.
#[derive(Clone, Debug, PartialEq)]
pub struct Extrapolation {
    pub value: f64,
    /// Raw values along the schedule.
    pub samples: Vec<f64>,
    /// Convergence order fitted from the last three samples.
    pub order: f64,
}

/// Repeated three-point Richardson extrapolation for a halving schedule,
/// with the order fitted at each level. Leading entries are dropped until
/// the successive differences stop growing; at least three must remain.
pub fn richardson(samples: &[f64]) -> Result<Extrapolation> {
    if samples.len() < 3 {
        return Err(Error::InvalidParameter("schedule needs at least 3 entries".into()));
    }
    let scale = samples.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1e-300);
    let diffs: Vec<f64> = samples.windows(2).map(|w| (w[0] - w[1]).abs()).collect();
    // first index of the monotone tail of differences
    let mut start = diffs.len() - 1;
    while start > 0 {
        let (a, b) = (diffs[start - 1], diffs[start]);
        if b > a && b > 1e-12 * scale {
            break;
        }
        start -= 1;
    }
    if samples.len() - start < 3 {
        let w = &diffs[diffs.len() - 2..];
        return Err(Error::NonConvergingSchedule(format!("successive differences {:.3e} then {:.3e}", w[0], w[1])));
    }
    let tail = &samples[start..];
    let n = tail.len();
    let order = fitted_order(tail[n - 3], tail[n - 2], tail[n - 1]);
    let mut f = tail.to_vec();
    while f.len() >= 3 {
        let mut g = Vec::with_capacity(f.len() - 2);
        for i in 0..f.len() - 2 {
            let q = fitted_order(f[i], f[i + 1], f[i + 2]);
            let d = f[i + 2] - f[i + 1];
            g.push(if q.is_finite() { f[i + 2] + d / (2f64.powf(q) - 1.0) } else { f[i + 2] });
        }
        f = g;
    }
    Ok(Extrapolation { value: *f.last().unwrap(), samples: samples.to_vec(), order })
}

// log2 of the ratio of successive differences, clamped to a sane band;
// infinite when the differences have vanished.
fn fitted_order(a: f64, b: f64, c: f64) -> f64 {
    let d1 = a - b;
    let d2 = b - c;
    if d2 == 0.0 || d1 == 0.0 {
        return f64::INFINITY;
    }
    (d1 / d2).abs().log2().clamp(0.25, 8.0)
}

/// Principal-value singular integral on a flat manifold, evaluated on
/// uniform grids (spacing ≤ ε/8) centred at the sample point.
#[derive(Clone, Debug)]
pub struct SingularIntegrator {
    manifold: SpectralManifold,
    schedule: Vec<f64>,
    levels: Vec<Level>,
}

#[derive(Clone, Debug)]
struct Level {
    shape: Vec<usize>,
    spacing: Vec<f64>,
    /// Kernel by folded per-axis index, row-major over (N_i/2 + 1).
    table: Vec<f64>,
    cell: f64,
}

impl SingularIntegrator {
    pub fn new(m: &SpectralManifold, p: &FracParams, schedule: &[f64], quad: &SubordinationQuad) -> Result<Self> {
        quad.validate()?;
        let periods: Vec<f64> = match m.spec() {
            ManifoldSpec::Circle { radius } => vec![2.0 * PI * radius],
            ManifoldSpec::FlatTorus { periods } => periods.clone(),
            ManifoldSpec::Sphere2 { .. } => {
                return Err(Error::UnsupportedKind("singular integrals are implemented on flat manifolds".into()))
            }
        };
        if schedule.len() < 3 {
            return Err(Error::InvalidParameter("schedule needs at least 3 entries".into()));
        }
        if schedule.windows(2).any(|w| !(w[1] < w[0])) || schedule.iter().any(|e| !(*e > 0.0)) {
            return Err(Error::InvalidParameter("schedule must be positive and decreasing".into()));
        }
        let ker = KernelEvaluator::fractional(m, p, *quad)?;
        let t_hi = quad.t_hi(m);
        let inv_v = 1.0 / m.volume();
        let levels = schedule
            .iter()
            .map(|&eps| {
                let shape: Vec<usize> = periods
                    .iter()
                    .map(|l| {
                        let n = (8.0 * l / eps).ceil() as usize;
                        n + n % 2
                    })
                    .collect();
                let spacing: Vec<f64> = periods.iter().zip(&shape).map(|(l, n)| l / *n as f64).collect();
                let b = 0.25 * eps * eps;
                let rule = quad.rule(b / 45.0, t_hi);
                let weights: Vec<f64> =
                    rule.t.iter().zip(&rule.w).map(|(t, w)| w * (-b / t).exp() * t.powf(-1.0 - p.s)).collect();
                // per-axis 1-D heat tables over folded offsets
                let axis: Vec<Vec<f64>> = shape
                    .iter()
                    .zip(&spacing)
                    .zip(&periods)
                    .map(|((n, h), l)| {
                        let half = n / 2 + 1;
                        let images = ker.quad.small_time == SmallTimeForm::Images;
                        let mut tab = vec![0.0; rule.t.len() * half];
                        for (j, t) in rule.t.iter().enumerate() {
                            for c in 0..half {
                                tab[j * half + c] = periodic_heat_1d_with(*t, c as f64 * h, *l, images);
                            }
                        }
                        tab
                    })
                    .collect();
                let halves: Vec<usize> = shape.iter().map(|n| n / 2 + 1).collect();
                let total: usize = halves.iter().product();
                let tail = large_time_tail(p.s, b, t_hi) * inv_v;
                let table: Vec<f64> = (0..total)
                    .into_par_iter()
                    .map(|idx| {
                        let mut ci = [0usize; 3];
                        let mut r = idx;
                        for i in (0..halves.len()).rev() {
                            ci[i] = r % halves[i];
                            r /= halves[i];
                        }
                        let mut s = 0.0;
                        for (j, w) in weights.iter().enumerate() {
                            let mut k = *w;
                            for (i, tab) in axis.iter().enumerate() {
                                k *= tab[j * halves[i] + ci[i]];
                            }
                            s += k;
                        }
                        p.c_s * (s + tail)
                    })
                    .collect();
                let cell = spacing.iter().product();
                Level { shape, spacing, table, cell }
            })
            .collect();
        Ok(SingularIntegrator { manifold: m.clone(), schedule: schedule.to_vec(), levels })
    }

    pub fn schedule(&self) -> &[f64] {
        &self.schedule
    }

    /// ∫(u(x) - u(y)) K^s_{M,ε}(x,y) dμ(y) at every schedule entry.
    pub fn samples(&self, u: &SpectralFunction, x: &Point) -> Vec<f64> {
        let ux = u.evaluate(x);
        self.levels
            .iter()
            .map(|lv| {
                let n = lv.shape.len();
                let total: usize = lv.shape.iter().product();
                let basis = u.basis();
                let partial: Vec<f64> = (0..total)
                    .into_par_iter()
                    .with_min_len(256)
                    .map_init(
                        || vec![0.0; basis.len()],
                        |phi, idx| {
                            let mut c = [0.0; 3];
                            let mut fold = 0usize;
                            let mut stride = 1usize;
                            let mut r = idx;
                            let mut offs = [0usize; 3];
                            for i in (0..n).rev() {
                                offs[i] = r % lv.shape[i];
                                r /= lv.shape[i];
                            }
                            for i in (0..n).rev() {
                                let j = offs[i];
                                c[i] = x.coords()[i] + j as f64 * lv.spacing[i] / self.axis_scale(i);
                                let f = j.min(lv.shape[i] - j);
                                fold += f * stride;
                                stride *= lv.shape[i] / 2 + 1;
                            }
                            let y = self.manifold.point(&c[..n]).expect("grid point");
                            basis.eval_all(&y, phi);
                            let uy: f64 = phi.iter().zip(u.coeffs()).map(|(a, b)| a * b).sum();
                            (ux - uy) * lv.table[fold]
                        },
                    )
                    .collect();
                lv.cell * partial.iter().sum::<f64>()
            })
            .collect()
    }

    // grid spacing is in arc length; chart coordinates on the circle are angles
    fn axis_scale(&self, _i: usize) -> f64 {
        match self.manifold.spec() {
            ManifoldSpec::Circle { radius } => *radius,
            _ => 1.0,
        }
    }

    /// Extrapolated principal value at x.
    pub fn apply(&self, u: &SpectralFunction, x: &Point) -> Result<Extrapolation> {
        richardson(&self.samples(u, x))
    }
}

/// Singular-integral fractional Laplacian at x, extrapolated to ε = 0.
pub fn frac_apply_singular(
    m: &SpectralManifold,
    p: &FracParams,
    u: &SpectralFunction,
    x: &Point,
    schedule: &[f64],
    quad: &SubordinationQuad,
) -> Result<Extrapolation> {
    SingularIntegrator::new(m, p, schedule, quad)?.apply(u, x)
}

/// y^{2s}/(2^{2s}Γ(s)) ∫ e^{-λt} e^{-y²/4t} t^{-1-s} dt over [t_lo, T];
/// exactly 1 for λ = 0.
fn extension_multiplier(s: f64, lam: f64, y: f64, t_lo: f64, t_hi: f64, quad: &SubordinationQuad) -> f64 {
    if lam == 0.0 {
        return 1.0;
    }
    let b = 0.25 * y * y;
    let rule = quad.rule(t_lo, t_hi);
    let mut sum = 0.0;
    for (t, w) in rule.t.iter().zip(&rule.w) {
        sum += w * (-lam * t - b / t).exp() * t.powf(-1.0 - s);
    }
    y.powf(2.0 * s) / (4f64.powf(s) * gamma(s)) * sum
}

/// Poisson kernel P_s(x, y; ξ).
pub fn poisson_kernel(
    m: &SpectralManifold,
    p: &FracParams,
    x: &Point,
    y: f64,
    xi: &Point,
    quad: &SubordinationQuad,
) -> Result<f64> {
    if !(y > 0.0) {
        return Err(Error::InvalidParameter(format!("height {y} must be positive")));
    }
    quad.validate()?;
    let ker = KernelEvaluator::new(m, p.s, 1.0, *quad)?;
    let d = m.distance(x, xi);
    let k = ker.kernel_at(&ker.separation(x, xi), d, y);
    Ok(y.powf(2.0 * p.s) / (4f64.powf(p.s) * gamma(p.s)) * k)
}

/// ∫_M P_s(x, y; ξ) dμ(ξ) under a rule.
pub fn poisson_mass(
    m: &SpectralManifold,
    p: &FracParams,
    x: &Point,
    y: f64,
    rule: &QuadratureRule,
    quad: &SubordinationQuad,
) -> Result<f64> {
    let vals: Result<Vec<f64>> = rule.nodes().par_iter().map(|xi| poisson_kernel(m, p, x, y, xi, quad)).collect();
    Ok(rule.integrate(&vals?))
}

/// Rule order resolving the Poisson kernel at height y.
pub fn poisson_rule_order(m: &SpectralManifold, y: f64) -> usize {
    let l = match m.spec() {
        ManifoldSpec::Circle { radius } | ManifoldSpec::Sphere2 { radius } => 2.0 * PI * radius,
        ManifoldSpec::FlatTorus { periods } => periods.iter().cloned().fold(0.0, f64::max),
    };
    ((20.0 * l / y).ceil() as usize).max(64)
}

/// Extension U(x, y) from the coefficient form.
pub fn extension_value(
    p: &FracParams,
    f: &SpectralFunction,
    x: &Point,
    y: f64,
    quad: &SubordinationQuad,
) -> Result<f64> {
    if !(y > 0.0) {
        return Err(Error::InvalidParameter(format!("height {y} must be positive")));
    }
    quad.validate()?;
    let m = f.basis().manifold();
    let t_hi = quad.t_hi(m);
    extension_at(p, f, x, y, 0.25 * y * y / 45.0, t_hi, quad)
}

fn extension_at(
    p: &FracParams,
    f: &SpectralFunction,
    x: &Point,
    y: f64,
    t_lo: f64,
    t_hi: f64,
    quad: &SubordinationQuad,
) -> Result<f64> {
    let b = f.basis();
    let mut phi = vec![0.0; b.len()];
    b.eval_all(x, &mut phi);
    let mut s = 0.0;
    for (k, (c, v)) in f.coeffs().iter().zip(&phi).enumerate() {
        if *c != 0.0 {
            s += c * v * extension_multiplier(p.s, b.eigenvalue(k), y, t_lo, t_hi, quad);
        }
    }
    Ok(s)
}

/// Extension U(x, y) as ∫ P_s(x,y;ξ) f(ξ) dμ(ξ) under a rule.
pub fn extension_value_spatial(
    p: &FracParams,
    f: &SpectralFunction,
    x: &Point,
    y: f64,
    rule: &QuadratureRule,
    quad: &SubordinationQuad,
) -> Result<f64> {
    let m = f.basis().manifold();
    let fv = f.nodal_values(rule);
    let pk: Result<Vec<f64>> = rule.nodes().par_iter().map(|xi| poisson_kernel(m, p, x, y, xi, quad)).collect();
    Ok(pk?.iter().zip(&fv).zip(rule.weights()).map(|((a, b), w)| a * b * w).sum())
}

/// -c(s) y^{1-2s} ∂_y U(x, y) by fourth-order central differences with step
/// y/8, extrapolated to y = 0 along the schedule.
pub fn dtn_value(
    p: &FracParams,
    f: &SpectralFunction,
    x: &Point,
    schedule: &[f64],
    quad: &SubordinationQuad,
) -> Result<Extrapolation> {
    quad.validate()?;
    if schedule.len() < 3 || schedule.windows(2).any(|w| !(w[1] < w[0])) || schedule.iter().any(|y| !(*y > 0.0)) {
        return Err(Error::InvalidParameter("height schedule must be positive, decreasing, length ≥ 3".into()));
    }
    let t_hi = quad.t_hi(f.basis().manifold());
    let mut samples = Vec::with_capacity(schedule.len());
    for &y in schedule {
        let h = y / 8.0;
        let t_lo = 0.25 * (y - 2.0 * h).powi(2) / 45.0;
        let g = |k: f64| extension_at(p, f, x, y + k * h, t_lo, t_hi, quad);
        let d = (g(-2.0)? - 8.0 * g(-1.0)? + 8.0 * g(1.0)? - g(2.0)?) / (12.0 * h);
        samples.push(-p.c_dtn * y.powf(1.0 - 2.0 * p.s) * d);
    }
    richardson(&samples)
}

/// max over rule nodes of |(-Δ)^s u - (-Δ)u| for each s.
pub fn limit_defect_s1(u: &SpectralFunction, s_list: &[f64], rule: &QuadratureRule) -> Result<Vec<f64>> {
    limit_defect(u, s_list, rule, |lam| lam)
}

/// max over rule nodes of |(-Δ)^s u - (u - ū)| for each s.
pub fn limit_defect_s0(u: &SpectralFunction, s_list: &[f64], rule: &QuadratureRule) -> Result<Vec<f64>> {
    limit_defect(u, s_list, rule, |lam| if lam == 0.0 { 0.0 } else { 1.0 })
}

fn limit_defect<F: Fn(f64) -> f64>(
    u: &SpectralFunction,
    s_list: &[f64],
    rule: &QuadratureRule,
    target: F,
) -> Result<Vec<f64>> {
    let b = u.basis().clone();
    s_list
        .iter()
        .map(|&s| {
            FracParams::new(s)?;
            let diff = u.map_coeffs(|k, c| {
                let lam = b.eigenvalue(k);
                let ls = if lam == 0.0 { 0.0 } else { lam.powf(s) };
                (ls - target(lam)) * c
            });
            Ok(diff.max_abs(rule))
        })
        .collect()
}

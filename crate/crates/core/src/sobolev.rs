//! Intrinsic W^{s,p} seminorms on closed manifolds.
//!
//! [`PairQuadrature`] discretizes ∬ |u(x) - u(y)|^p K(x,y) dμ dμ on a product
//! rule. Pairs closer than δ = 2h are dropped and replaced by a per-node cell
//! computed from the leading Taylor model |∇u(x)·(y-x)|^p against the
//! Euclidean kernel. The cell is the continuum-minus-lattice remainder of that
//! model over the pairs the rule keeps: a Hurwitz zeta value on 1-D grids, a
//! smoothed Epstein-type lattice sum otherwise (on the sphere, per latitude
//! row with the local spacings).

use rayon::prelude::*;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::fractional_op::{alpha, normalization, KernelEvaluator, SubordinationQuad};
use crate::manifold::{Layout, ManifoldSpec, Point, QuadratureRule, SpectralFunction, SpectralManifold};
use crate::special::{gamma, gauss_legendre, hurwitz_zeta};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WspParams {
    s: f64,
    p: f64,
    n: usize,
    c_sp: f64,
}

impl WspParams {
    pub fn new(s: f64, p: f64, n: usize) -> Result<Self> {
        if !(s > 0.0 && s < 1.0) {
            return Err(Error::InvalidParameter(format!("s = {s} must lie in (0, 1)")));
        }
        if !(p >= 1.0) || !p.is_finite() {
            return Err(Error::InvalidParameter(format!("p = {p} must be at least 1")));
        }
        if !(1..=3).contains(&n) {
            return Err(Error::InvalidParameter(format!("dimension {n} outside 1..=3")));
        }
        let a = 0.5 * s * p;
        if (a - a.round()).abs() < 1e-12 {
            return Err(Error::InvalidParameter(format!("sp/2 = {a} is a pole of Γ(-sp/2)")));
        }
        Ok(WspParams { s, p, n, c_sp: normalization(a) })
    }

    pub fn for_manifold(m: &SpectralManifold, s: f64, p: f64) -> Result<Self> {
        Self::new(s, p, m.dim())
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn sp(&self) -> f64 {
        self.s * self.p
    }

    /// Subordination exponent sp/2.
    pub fn exponent(&self) -> f64 {
        0.5 * self.s * self.p
    }

    /// c_{s,p} = 1/|Γ(-sp/2)|.
    pub fn c_sp(&self) -> f64 {
        self.c_sp
    }

    /// np/(n - sp) when sp < n.
    pub fn p_star(&self) -> Option<f64> {
        let n = self.n as f64;
        (self.sp() < n).then(|| n * self.p / (n - self.sp()))
    }

    pub fn require_subcritical(&self) -> Result<f64> {
        self.p_star().ok_or(Error::SupercriticalParameters { sp: self.sp(), n: self.n })
    }

    /// Euclidean near-diagonal constant α_{n,sp/2}.
    pub fn alpha(&self) -> f64 {
        alpha(self.n, self.exponent())
    }
}

/// Kernel evaluator for K_p^s.
pub fn wsp_evaluator(m: &SpectralManifold, wp: &WspParams, quad: &SubordinationQuad) -> Result<KernelEvaluator> {
    KernelEvaluator::new(m, wp.exponent(), wp.c_sp(), *quad)
}

/// K_p^s(x, y), x ≠ y.
pub fn wsp_kernel(m: &SpectralManifold, wp: &WspParams, x: &Point, y: &Point, quad: &SubordinationQuad) -> Result<f64> {
    wsp_evaluator(m, wp, quad)?.kernel(x, y)
}

/// K_{p,ε}^s(x, y).
pub fn wsp_kernel_reg(
    m: &SpectralManifold,
    wp: &WspParams,
    eps: f64,
    x: &Point,
    y: &Point,
    quad: &SubordinationQuad,
) -> Result<f64> {
    wsp_evaluator(m, wp, quad)?.kernel_reg(eps, x, y)
}

/// ∫_{S^{n-1}} |ω·e|^p dω.
pub fn directional_moment(n: usize, p: f64) -> f64 {
    let nf = n as f64;
    2.0 * PI.powf((nf - 1.0) / 2.0) * gamma((p + 1.0) / 2.0) / gamma((nf + p) / 2.0)
}

/// |S^{n-1}|.
pub fn sphere_area(n: usize) -> f64 {
    match n {
        1 => 2.0,
        2 => 2.0 * PI,
        _ => 4.0 * PI,
    }
}

/// Kernel used by a pair quadrature.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SeminormKernel {
    /// Heat-kernel subordination K_p^s.
    Intrinsic,
    /// d_g(x,y)^{-(n+sp)}.
    Geodesic,
}

#[derive(Clone, Debug)]
enum PairGeometry {
    Uniform { shape: Vec<usize>, halves: Vec<usize>, index: Vec<[usize; 3]> },
    Sphere { n_theta: usize, n_phi: usize },
}

/// Pair quadrature for Gagliardo-type double integrals.
#[derive(Clone, Debug)]
pub struct PairQuadrature {
    manifold: SpectralManifold,
    rule: QuadratureRule,
    wp: WspParams,
    kind: SeminormKernel,
    delta: f64,
    geometry: PairGeometry,
    /// Kernel per pair class; 0 for excluded classes.
    table: Vec<f64>,
    class_dist: Vec<f64>,
    /// Per-node near-diagonal cell coefficients: per-axis weights of g_a²
    /// when p = 2, otherwise the coefficient of |∇u|^p in slot 0.
    cell: Vec<[f64; 3]>,
    quadratic: bool,
    /// Near-diagonal kernel constant (α_{n,sp/2} or 1).
    near: f64,
    /// Axis spacings of uniform grids, for nodal differentiation.
    spacing: Vec<f64>,
}

impl PairQuadrature {
    /// Intrinsic-kernel quadrature on a rule.
    pub fn new(m: &SpectralManifold, rule: &QuadratureRule, wp: &WspParams, quad: &SubordinationQuad) -> Result<Self> {
        Self::build(m, rule, wp, quad, SeminormKernel::Intrinsic)
    }

    /// Geodesic-distance quadrature on the same rule.
    pub fn geodesic(m: &SpectralManifold, rule: &QuadratureRule, wp: &WspParams) -> Result<Self> {
        Self::build(m, rule, wp, &SubordinationQuad::default(), SeminormKernel::Geodesic)
    }

    /// Intrinsic quadrature on the manifold's rule of the given order.
    pub fn with_order(m: &SpectralManifold, order: usize, wp: &WspParams, quad: &SubordinationQuad) -> Result<Self> {
        Self::new(m, &m.quadrature(order)?, wp, quad)
    }

    fn build(
        m: &SpectralManifold,
        rule: &QuadratureRule,
        wp: &WspParams,
        quad: &SubordinationQuad,
        kind: SeminormKernel,
    ) -> Result<Self> {
        if wp.n() != m.dim() {
            return Err(Error::InvalidParameter(format!(
                "parameters for dimension {} on a manifold of dimension {}",
                wp.n(),
                m.dim()
            )));
        }
        let n = m.dim();
        let nf = n as f64;
        let sp = wp.sp();
        let beta = wp.p() - sp;
        let ker = KernelEvaluator::new(m, wp.exponent(), wp.c_sp(), *quad)?;
        let near = match kind {
            SeminormKernel::Intrinsic => wp.alpha(),
            SeminormKernel::Geodesic => 1.0,
        };
        let kernel_of = |sep: &[f64; 3], d: f64| match kind {
            SeminormKernel::Intrinsic => ker.kernel_at(sep, d, 0.0),
            SeminormKernel::Geodesic => d.powf(-(nf + sp)),
        };
        let (geometry, delta, table, class_dist, spacing) = match (rule.layout(), m.spec()) {
            (Layout::Uniform { shape, spacing }, _) => {
                let h = spacing.iter().cloned().fold(0.0, f64::max);
                let delta = 2.0 * h;
                let halves: Vec<usize> = shape.iter().map(|s| s / 2 + 1).collect();
                let total: usize = halves.iter().product();
                let res: Vec<(f64, f64)> = (0..total)
                    .into_par_iter()
                    .map(|idx| {
                        let mut r = idx;
                        let mut sep = [0.0; 3];
                        for i in (0..n).rev() {
                            sep[i] = (r % halves[i]) as f64 * spacing[i];
                            r /= halves[i];
                        }
                        let d = sep.iter().map(|v| v * v).sum::<f64>().sqrt();
                        if d < delta - 1e-12 * delta {
                            (0.0, d)
                        } else {
                            (kernel_of(&sep, d), d)
                        }
                    })
                    .collect();
                let index = (0..rule.len())
                    .map(|k| {
                        let mut c = [0usize; 3];
                        let mut r = k;
                        for i in (0..n).rev() {
                            c[i] = r % shape[i];
                            r /= shape[i];
                        }
                        c
                    })
                    .collect();
                let geometry = PairGeometry::Uniform { shape: shape.clone(), halves, index };
                (geometry, delta, res.iter().map(|v| v.0).collect(), res.iter().map(|v| v.1).collect(), spacing.clone())
            }
            (Layout::SphereProduct { n_theta, n_phi }, ManifoldSpec::Sphere2 { radius }) => {
                let (nt, np) = (*n_theta, *n_phi);
                let delta = 2.0 * radius * PI / nt as f64;
                let hp = np / 2 + 1;
                let thetas: Vec<f64> = (0..nt).map(|i| rule.nodes()[i * np].coords()[0]).collect();
                let dphi = 2.0 * PI / np as f64;
                let res: Vec<(f64, f64)> = (0..nt * nt * hp)
                    .into_par_iter()
                    .map(|idx| {
                        let k = idx % hp;
                        let b = (idx / hp) % nt;
                        let a = idx / (hp * nt);
                        if a > b {
                            return (0.0, 0.0);
                        }
                        let (ta, tb) = (thetas[a], thetas[b]);
                        let cg = (ta.cos() * tb.cos() + ta.sin() * tb.sin() * (k as f64 * dphi).cos()).clamp(-1.0, 1.0);
                        let x = m.point(&[ta, 0.0]).unwrap();
                        let y = m.point(&[tb, k as f64 * dphi]).unwrap();
                        let d = m.distance(&x, &y);
                        if d < delta {
                            (0.0, d)
                        } else {
                            (kernel_of(&[cg, 0.0, 0.0], d), d)
                        }
                    })
                    .collect();
                (
                    PairGeometry::Sphere { n_theta: nt, n_phi: np },
                    delta,
                    res.iter().map(|v| v.0).collect(),
                    res.iter().map(|v| v.1).collect(),
                    vec![],
                )
            }
            _ => return Err(Error::InvalidParameter("rule layout does not match the manifold".into())),
        };
        let mut pq = PairQuadrature {
            manifold: m.clone(),
            rule: rule.clone(),
            wp: *wp,
            kind,
            delta,
            geometry,
            table,
            class_dist,
            cell: vec![],
            quadratic: wp.p() == 2.0,
            near,
            spacing,
        };
        // near-diagonal cells
        let cell: Vec<[f64; 3]> = match &pq.geometry {
            PairGeometry::Uniform { .. } if n == 1 => {
                let h = pq.spacing[0];
                let z = -2.0 * h.powf(beta) * hurwitz_zeta(1.0 - beta, 2.0);
                vec![[near * z, 0.0, 0.0]; rule.len()]
            }
            PairGeometry::Uniform { .. } => {
                let c = lattice_cell(&pq.spacing, delta, wp, pq.quadratic, near);
                vec![c; rule.len()]
            }
            PairGeometry::Sphere { n_theta, n_phi } => {
                let ManifoldSpec::Sphere2 { radius } = m.spec() else { unreachable!() };
                let rows: Vec<[f64; 3]> = (0..*n_theta)
                    .into_par_iter()
                    .map(|i| {
                        let theta = rule.nodes()[i * n_phi].coords()[0];
                        let h_phi = radius * theta.sin() * 2.0 * PI / *n_phi as f64;
                        let h_theta = rule.weights()[i * n_phi] / h_phi;
                        lattice_cell(&[h_theta, h_phi], delta, wp, pq.quadratic, near)
                    })
                    .collect();
                (0..rule.len()).map(|k| rows[k / n_phi]).collect()
            }
        };
        let used = if pq.quadratic { n } else { 1 };
        if let Some(bad) = cell.iter().flat_map(|c| c[..used].iter()).find(|c| !(**c > 0.0) || !c.is_finite()) {
            return Err(Error::DiagonalCorrectionFailure(format!("cell coefficient {bad}")));
        }
        pq.cell = cell;
        Ok(pq)
    }

    pub fn manifold(&self) -> &SpectralManifold {
        &self.manifold
    }

    pub fn rule(&self) -> &QuadratureRule {
        &self.rule
    }

    pub fn params(&self) -> &WspParams {
        &self.wp
    }

    pub fn kind(&self) -> SeminormKernel {
        self.kind
    }

    /// Diagonal-exclusion radius δ.
    pub fn delta(&self) -> f64 {
        self.delta
    }

    fn class(&self, i: usize, j: usize) -> usize {
        match &self.geometry {
            PairGeometry::Uniform { shape, halves, index } => {
                let (a, b) = (&index[i], &index[j]);
                let mut c = 0;
                for k in 0..shape.len() {
                    let d = a[k].abs_diff(b[k]);
                    c = c * halves[k] + d.min(shape[k] - d);
                }
                c
            }
            PairGeometry::Sphere { n_theta, n_phi } => {
                let (ti, pi) = (i / n_phi, i % n_phi);
                let (tj, pj) = (j / n_phi, j % n_phi);
                let d = pi.abs_diff(pj);
                let k = d.min(n_phi - d);
                let (a, b) = if ti <= tj { (ti, tj) } else { (tj, ti) };
                (a * n_theta + b) * (n_phi / 2 + 1) + k
            }
        }
    }

    fn class_distance(&self, i: usize, j: usize) -> f64 {
        self.class_dist[self.class(i, j)]
    }

    /// Kernel weight of the node pair (0 inside the excluded band).
    pub fn pair_kernel(&self, i: usize, j: usize) -> f64 {
        if i == j {
            0.0
        } else {
            self.table[self.class(i, j)]
        }
    }

    /// Discrete energy [u]^p from nodal values and nodal gradients.
    pub fn energy_nodal(&self, values: &[f64], grads: &[[f64; 3]]) -> f64 {
        self.energy_impl(values, grads, None)
    }

    /// ∬ g(x)|u(x) - u(y)|^p K with a nodal weight g on the first variable.
    pub fn weighted_energy_nodal(&self, values: &[f64], grads: &[[f64; 3]], g: &[f64]) -> f64 {
        self.energy_impl(values, grads, Some(g))
    }

    fn energy_impl(&self, values: &[f64], grads: &[[f64; 3]], g: Option<&[f64]>) -> f64 {
        let w = self.rule.weights();
        let p = self.wp.p();
        let gw = |i: usize| g.map_or(1.0, |g| g[i]);
        let rows: Vec<f64> = (0..values.len())
            .into_par_iter()
            .map(|i| {
                let vi = values[i];
                let mut s = 0.0;
                for j in 0..values.len() {
                    let k = self.pair_kernel(i, j);
                    if k != 0.0 {
                        s += w[j] * pow_abs(vi - values[j], p) * k;
                    }
                }
                w[i] * gw(i) * s
            })
            .collect();
        let pairs: f64 = rows.iter().sum();
        let cells: f64 = (0..values.len()).map(|i| w[i] * gw(i) * self.cell_energy(i, &grads[i], p)).sum();
        pairs + cells
    }

    fn cell_energy(&self, i: usize, g: &[f64; 3], p: f64) -> f64 {
        let c = &self.cell[i];
        if self.quadratic {
            c[0] * g[0] * g[0] + c[1] * g[1] * g[1] + c[2] * g[2] * g[2]
        } else {
            c[0] * pow_abs(norm3(g), p)
        }
    }

    // cell energy per unit |∇u|^p, maximized over directions
    fn cell_bound(&self, i: usize) -> f64 {
        let c = &self.cell[i];
        if self.quadratic {
            c[0].max(c[1]).max(c[2])
        } else {
            c[0]
        }
    }

    /// [u]^p for a band-limited function.
    pub fn energy(&self, u: &SpectralFunction) -> f64 {
        self.energy_nodal(&u.nodal_values(&self.rule), &u.nodal_gradients(&self.rule))
    }

    /// Gradients of the trigonometric interpolant of nodal values
    /// (uniform grids only).
    pub fn nodal_gradient(&self, values: &[f64]) -> Result<Vec<[f64; 3]>> {
        let PairGeometry::Uniform { shape, .. } = &self.geometry else {
            return Err(Error::UnsupportedKind("nodal differentiation needs a uniform grid".into()));
        };
        let mut out = vec![[0.0; 3]; values.len()];
        for axis in 0..shape.len() {
            let d = apply_axis(values, shape, axis, &self.diff_matrix(axis, shape[axis]));
            for (o, v) in out.iter_mut().zip(d) {
                o[axis] = v;
            }
        }
        Ok(out)
    }

    fn diff_matrix(&self, axis: usize, n: usize) -> Vec<f64> {
        let h = self.spacing[axis];
        let period = h * n as f64;
        let scale = 2.0 * PI / period;
        let mut dm = vec![0.0; n * n];
        for j in 0..n {
            for k in 0..n {
                if j != k {
                    let x = PI * (j as f64 - k as f64) / n as f64;
                    let sign = if (j + n - k) % 2 == 0 { 1.0 } else { -1.0 };
                    dm[j * n + k] = if n % 2 == 0 { 0.5 * sign / x.tan() } else { 0.5 * sign / x.sin() } * scale;
                }
            }
        }
        dm
    }

    /// [v]^p for a nodal field, gradients from spectral differentiation.
    pub fn energy_of_nodal(&self, values: &[f64]) -> Result<f64> {
        let g = self.nodal_gradient(values)?;
        Ok(self.energy_nodal(values, &g))
    }

    /// ∂[v]^p/∂v_k divided by w_k: the L²(μ) gradient of the nodal energy.
    pub fn energy_gradient(&self, values: &[f64]) -> Result<Vec<f64>> {
        let PairGeometry::Uniform { shape, .. } = &self.geometry else {
            return Err(Error::UnsupportedKind("nodal differentiation needs a uniform grid".into()));
        };
        let w = self.rule.weights();
        let p = self.wp.p();
        let mut grad: Vec<f64> = (0..values.len())
            .into_par_iter()
            .map(|i| {
                let vi = values[i];
                let mut s = 0.0;
                for j in 0..values.len() {
                    let k = self.pair_kernel(i, j);
                    if k != 0.0 {
                        let d = vi - values[j];
                        s += w[j] * p * pow_abs(d, p - 1.0) * d.signum() * k;
                    }
                }
                2.0 * s
            })
            .collect();
        // cell term: p Σ_a D_aᵀ (w c |g|^{p-2} g_a), divided by w_k
        let g = self.nodal_gradient(values)?;
        for axis in 0..shape.len() {
            let field: Vec<f64> = (0..values.len())
                .map(|i| {
                    if self.quadratic {
                        return w[i] * 2.0 * self.cell[i][axis] * g[i][axis];
                    }
                    let gn = norm3(&g[i]);
                    let f = if gn == 0.0 { 0.0 } else { pow_abs(gn, p - 2.0) };
                    w[i] * self.cell[i][0] * p * f * g[i][axis]
                })
                .collect();
            let dm = self.diff_matrix(axis, shape[axis]);
            let n = shape[axis];
            let mut dt = vec![0.0; n * n];
            for a in 0..n {
                for b in 0..n {
                    dt[a * n + b] = dm[b * n + a];
                }
            }
            for (gk, v) in grad.iter_mut().zip(apply_axis(&field, shape, axis, &dt)).zip(w) {
                *gk.0 += gk.1 / v;
            }
        }
        Ok(grad)
    }

    /// (min, max) of K·d^{n+sp} over the pair classes in use, including the
    /// diagonal limit α.
    pub fn kernel_band(&self) -> (f64, f64) {
        let e = self.manifold.dim() as f64 + self.wp.sp();
        let mut lo = self.near;
        let mut hi = self.near;
        for (k, d) in self.table.iter().zip(&self.class_dist) {
            if *k > 0.0 {
                let r = k * d.powf(e);
                lo = lo.min(r);
                hi = hi.max(r);
            }
        }
        (lo, hi)
    }

    /// max_y [Σ_x w_x d(x,y)^p K(x,y) + cell(y)], the discrete kernel moment.
    /// The cell term bounds the near-diagonal part of ∫|f(x)-f(y)|^p K for
    /// 1-Lipschitz f.
    pub fn kernel_moment(&self) -> f64 {
        let w = self.rule.weights();
        let p = self.wp.p();
        (0..self.rule.len())
            .into_par_iter()
            .map(|i| {
                let mut s = 0.0;
                for j in 0..self.rule.len() {
                    let k = self.pair_kernel(i, j);
                    if k != 0.0 {
                        s += w[j] * self.class_distance(i, j).powf(p) * k;
                    }
                }
                s + self.cell_bound(i)
            })
            .reduce(|| 0.0, f64::max)
    }
}

const SMOOTH_FLAT: f64 = 0.25;

// 1 on [0, 1/4], C^∞ decay to 0 at 1.
fn smooth_cutoff(rho: f64) -> f64 {
    if rho <= SMOOTH_FLAT {
        return 1.0;
    }
    if rho >= 1.0 {
        return 0.0;
    }
    let x = (1.0 - rho) / (1.0 - SMOOTH_FLAT);
    let a = (-1.0 / x).exp();
    let b = (-1.0 / (1.0 - x)).exp();
    a / (a + b)
}

// ∫₀¹ ρ^{e-1} ψ(ρ) dρ for e > 0.
fn cutoff_moment(e: f64) -> f64 {
    let (x, w) = gauss_legendre(24);
    let panels = 12;
    let width = (1.0 - SMOOTH_FLAT) / panels as f64;
    let mut sum = SMOOTH_FLAT.powf(e) / e;
    for k in 0..panels {
        let lo = SMOOTH_FLAT + k as f64 * width;
        for (xi, wi) in x.iter().zip(&w) {
            let r = lo + 0.5 * width * (xi + 1.0);
            sum += 0.5 * width * wi * r.powf(e - 1.0) * smooth_cutoff(r);
        }
    }
    sum
}

/// Regularized lattice sum Σ_{z ∈ Λ, |z| ≥ δ} F(z) on Λ = diag(h)·Zⁿ for F
/// homogeneous of degree `degree` > -n, with `angular` = ∫_{S^{n-1}} F.
///
/// Computed as lim_R [Σ_{z≠0} Fψ(|z|/R) - v⁻¹∫Fψ(|z|/R)] minus the terms
/// with 0 < |z| < δ, with a smooth cutoff ψ.
pub fn lattice_remainder<F: Fn(&[f64; 3]) -> f64>(h: &[f64], delta: f64, degree: f64, angular: f64, f: F) -> f64 {
    let n = h.len();
    let units = match n {
        1 => 2000.0,
        2 => 80.0,
        _ => 28.0,
    };
    let hmax = h.iter().cloned().fold(0.0, f64::max);
    let r_cut = units * hmax;
    let counts: Vec<i64> = h.iter().map(|hi| (r_cut / hi).ceil() as i64).collect();
    let mut sum = 0.0;
    let mut j = vec![0i64; n];
    for (a, c) in j.iter_mut().zip(&counts) {
        *a = -c;
    }
    loop {
        let mut z = [0.0; 3];
        for a in 0..n {
            z[a] = j[a] as f64 * h[a];
        }
        let r = norm3(&z);
        if r > 0.0 && r < r_cut {
            let v = f(&z);
            let psi = smooth_cutoff(r / r_cut);
            sum += if r < delta * (1.0 - 1e-12) { v * (psi - 1.0) } else { v * psi };
        }
        // odometer
        let mut a = 0;
        loop {
            if a == n {
                let v: f64 = h.iter().product();
                let e = degree + n as f64;
                return sum - angular * r_cut.powf(e) * cutoff_moment(e) / v;
            }
            j[a] += 1;
            if j[a] > counts[a] {
                j[a] = -counts[a];
                a += 1;
            } else {
                break;
            }
        }
    }
}

// Near-diagonal cell coefficients on a local rectangular lattice.
fn lattice_cell(h: &[f64], delta: f64, wp: &WspParams, quadratic: bool, near: f64) -> [f64; 3] {
    let n = h.len();
    let v: f64 = h.iter().product();
    let sp = wp.sp();
    let p = wp.p();
    let area = sphere_area(n);
    let mut out = [0.0; 3];
    if quadratic {
        let deg = 2.0 - n as f64 - sp;
        for a in 0..n {
            let r =
                lattice_remainder(h, delta, deg, area / n as f64, |z| z[a] * z[a] * norm3(z).powf(-(n as f64) - sp));
            out[a] = -near * v * r;
        }
    } else {
        let deg = p - n as f64 - sp;
        let r = lattice_remainder(h, delta, deg, area, |z| norm3(z).powf(deg));
        out[0] = -near * v * directional_moment(n, p) / area * r;
    }
    out
}

// Applies an n×n matrix along one axis of a row-major grid.
fn apply_axis(values: &[f64], shape: &[usize], axis: usize, mat: &[f64]) -> Vec<f64> {
    let n = shape[axis];
    let inner: usize = shape[axis + 1..].iter().product();
    let outer: usize = shape[..axis].iter().product();
    let mut out = vec![0.0; values.len()];
    let mut line = vec![0.0; n];
    for o in 0..outer {
        for i in 0..inner {
            for k in 0..n {
                line[k] = values[(o * n + k) * inner + i];
            }
            for j in 0..n {
                let row = &mat[j * n..(j + 1) * n];
                out[(o * n + j) * inner + i] = row.iter().zip(&line).map(|(a, b)| a * b).sum();
            }
        }
    }
    out
}

#[inline]
pub(crate) fn pow_abs(x: f64, p: f64) -> f64 {
    if p == 2.0 {
        x * x
    } else if p == 1.0 {
        x.abs()
    } else {
        x.abs().powf(p)
    }
}

fn norm3(g: &[f64; 3]) -> f64 {
    (g[0] * g[0] + g[1] * g[1] + g[2] * g[2]).sqrt()
}

/// [u]_{W^{s,p}} with the intrinsic kernel.
pub fn gagliardo_seminorm(u: &SpectralFunction, pq: &PairQuadrature) -> Result<f64> {
    check_basis(u, pq)?;
    let e = pq.energy(u);
    if !(e >= 0.0) {
        return Err(Error::DiagonalCorrectionFailure(format!("negative energy {e}")));
    }
    Ok(e.powf(1.0 / pq.wp.p()))
}

/// Geodesic-distance seminorm; `pq` must be built with [`PairQuadrature::geodesic`].
pub fn geodesic_seminorm(u: &SpectralFunction, pq: &PairQuadrature) -> Result<f64> {
    if pq.kind != SeminormKernel::Geodesic {
        return Err(Error::InvalidParameter("pair quadrature is not geodesic".into()));
    }
    gagliardo_seminorm(u, pq)
}

fn check_basis(u: &SpectralFunction, pq: &PairQuadrature) -> Result<()> {
    if u.basis().manifold() != &pq.manifold {
        return Err(Error::InvalidParameter("function and quadrature live on different manifolds".into()));
    }
    Ok(())
}

/// (min, max) of K_p^s(x,y)·d(x,y)^{n+sp} over sampled pairs.
pub fn kernel_bound_ratio(
    m: &SpectralManifold,
    wp: &WspParams,
    pairs: &[(Point, Point)],
    quad: &SubordinationQuad,
) -> Result<(f64, f64)> {
    let ker = wsp_evaluator(m, wp, quad)?;
    let e = m.dim() as f64 + wp.sp();
    let vals: Result<Vec<f64>> =
        pairs.par_iter().map(|(x, y)| Ok(ker.kernel(x, y)? * m.distance(x, y).powf(e))).collect();
    let vals = vals?;
    Ok(vals.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), v| (lo.min(*v), hi.max(*v))))
}

/// True when all non-constant coefficients vanish relative to the constant one.
pub fn is_constant(u: &SpectralFunction) -> bool {
    let c = u.coeffs();
    let scale = c.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    scale == 0.0 || c[1..].iter().all(|v| v.abs() <= 1e-14 * scale)
}

/// ‖u - u_M‖_{L^p} / [u]_{W^{s,p}}.
pub fn poincare_ratio(u: &SpectralFunction, pq: &PairQuadrature) -> Result<f64> {
    if is_constant(u) {
        return Err(Error::ConstantInput);
    }
    let mean = u.mean();
    let vals: Vec<f64> = u.nodal_values(&pq.rule).iter().map(|v| v - mean).collect();
    let num = pq.rule.lp_norm(&vals, pq.wp.p());
    Ok(num / gagliardo_seminorm(u, pq)?)
}

/// Jensen bound (D^{n+sp} / (Vol·c_low))^{1/p} on the Poincaré ratio.
pub fn poincare_proof_bound(m: &SpectralManifold, wp: &WspParams, c_low: f64) -> f64 {
    let e = m.dim() as f64 + wp.sp();
    (m.diameter().powf(e) / (m.volume() * c_low)).powf(1.0 / wp.p())
}

/// ‖u‖_{L^q} / (‖u‖_{L^p} + [u]_{W^{s,p}}) for p ≤ q ≤ p_s*.
pub fn embedding_ratio(u: &SpectralFunction, q: f64, pq: &PairQuadrature) -> Result<f64> {
    let ps = pq.wp.require_subcritical()?;
    let p = pq.wp.p();
    if !(q >= p && q <= ps * (1.0 + 1e-12)) {
        return Err(Error::ExponentOutOfRange(format!("q = {q} outside [{p}, {ps}]")));
    }
    let vals = u.nodal_values(&pq.rule);
    let num = pq.rule.lp_norm(&vals, q);
    Ok(num / (pq.rule.lp_norm(&vals, p) + gagliardo_seminorm(u, pq)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::random_family;
    use proptest::prelude::*;
    use std::sync::Arc;

    fn circle() -> SpectralManifold {
        SpectralManifold::new(ManifoldSpec::unit_circle()).unwrap()
    }

    fn spectral_form(u: &SpectralFunction, s: f64) -> f64 {
        let b = u.basis();
        u.coeffs()
            .iter()
            .enumerate()
            .map(|(k, c)| {
                let l = b.eigenvalue(k);
                if l == 0.0 {
                    0.0
                } else {
                    l.powf(s) * c * c
                }
            })
            .sum()
    }

    #[test]
    fn params() {
        let wp = WspParams::new(0.4, 2.0, 2).unwrap();
        assert!((wp.p_star().unwrap() - 10.0 / 3.0).abs() < 1e-14);
        assert!(WspParams::new(0.5, 4.0, 1).is_err());
        let wp = WspParams::new(0.5, 2.0, 1).unwrap();
        assert_eq!(wp.p_star(), None);
        assert!(matches!(wp.require_subcritical(), Err(Error::SupercriticalParameters { .. })));
        // p = 2 reproduces c_s
        assert_eq!(WspParams::new(0.3, 2.0, 1).unwrap().c_sp(), normalization(0.3));
    }

    #[test]
    fn lattice_sum_oracles() {
        // 1-D: Σ_{|j|≥2} |j|^{β-1} = 2ζ(1-β, 2)
        for beta in [0.3, 1.0, 1.7] {
            let r = lattice_remainder(&[1.0], 2.0, beta - 1.0, 2.0, |z| z[0].abs().powf(beta - 1.0));
            let exact = 2.0 * hurwitz_zeta(1.0 - beta, 2.0);
            assert!((r - exact).abs() < 1e-8 * exact.abs().max(1.0), "{beta}: {r} vs {exact}");
        }
        // 2-D: Σ'_{Z²} |j|^{-2σ} = 4ζ(σ)β(σ), β(σ) = 4^{-σ}(ζ(σ,1/4) - ζ(σ,3/4))
        for sigma in [0.2, 0.5, 0.8] {
            let dirichlet_beta = 4f64.powf(-sigma) * (hurwitz_zeta(sigma, 0.25) - hurwitz_zeta(sigma, 0.75));
            let exact = 4.0 * hurwitz_zeta(sigma, 1.0) * dirichlet_beta;
            let r = lattice_remainder(&[1.0, 1.0], 0.5, -2.0 * sigma, 2.0 * PI, |z| norm3(z).powf(-2.0 * sigma));
            assert!((r - exact).abs() < 1e-7 * exact.abs(), "{sigma}: {r} vs {exact}");
            // scaling: h^{degree} on a dilated lattice
            let r2 = lattice_remainder(&[0.3, 0.3], 0.15, -2.0 * sigma, 2.0 * PI, |z| norm3(z).powf(-2.0 * sigma));
            assert!((r2 - 0.3f64.powf(-2.0 * sigma) * exact).abs() < 1e-7 * r2.abs());
        }
    }

    #[test]
    fn p2_kernel_equals_fractional_kernel() {
        let c = circle();
        let q = SubordinationQuad::default();
        let wp = WspParams::new(0.35, 2.0, 1).unwrap();
        let fp = crate::fractional_op::FracParams::new(0.35).unwrap();
        for d in [0.2, 1.0, 3.0] {
            let x = c.point(&[0.1]).unwrap();
            let y = c.point(&[0.1 + d]).unwrap();
            let a = wsp_kernel(&c, &wp, &x, &y, &q).unwrap();
            let b = crate::fractional_op::frac_kernel(&c, &fp, &x, &y, &q).unwrap();
            assert!((a - b).abs() < 1e-12 * b);
        }
    }

    #[test]
    fn euclidean_generalization() {
        let q = SubordinationQuad::default();
        for (s, p, n) in [(0.3, 3.0, 1usize), (0.5, 1.5, 2), (0.75, 2.5, 3)] {
            let wp = WspParams::new(s, p, n).unwrap();
            let (v, c) = crate::fractional_op::euclidean_kernel_check(n, wp.exponent(), 1.3, &q).unwrap();
            assert!((v / c - 1.0).abs() < 1e-7);
            let expect = 2f64.powf(s * p) * gamma((n as f64 + s * p) / 2.0)
                / (PI.powf(n as f64 / 2.0) * gamma(-s * p / 2.0).abs())
                * 1.3f64.powf(-(n as f64 + s * p));
            assert!((c / expect - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn cos_seminorm_circle() {
        let c = circle();
        let b = Arc::new(c.basis(5).unwrap());
        let u = SpectralFunction::mode(b, 1).scaled(PI.sqrt());
        for s in [0.3, 0.5, 0.7] {
            let wp = WspParams::new(s, 2.0, 1).unwrap();
            let pq = PairQuadrature::with_order(&c, 128, &wp, &SubordinationQuad::default()).unwrap();
            let v = gagliardo_seminorm(&u, &pq).unwrap().powi(2);
            assert!((v / (2.0 * PI) - 1.0).abs() < 1e-3, "s={s}: {v}");
        }
        let wp = WspParams::new(0.5, 2.0, 1).unwrap();
        let pq = PairQuadrature::with_order(&c, 64, &wp, &SubordinationQuad::default()).unwrap();
        let r = poincare_ratio(&u, &pq).unwrap();
        assert!((r - 0.5f64.sqrt()).abs() < 2e-3);
        let shifted = u.add(&SpectralFunction::constant(u.basis().clone(), 3.0)).unwrap();
        assert!((poincare_ratio(&shifted, &pq).unwrap() - r).abs() < 1e-12);
        assert_eq!(poincare_ratio(&SpectralFunction::constant(u.basis().clone(), 1.0), &pq), Err(Error::ConstantInput));
    }

    #[test]
    fn torus_quadratic_form() {
        let t = SpectralManifold::new(ManifoldSpec::standard_torus(2)).unwrap();
        let b = Arc::new(t.basis(13).unwrap());
        let wp = WspParams::new(0.4, 2.0, 2).unwrap();
        let pq = PairQuadrature::with_order(&t, 32, &wp, &SubordinationQuad::default()).unwrap();
        for u in random_family(&b, 3, 7) {
            let e = pq.energy(&u);
            let f = spectral_form(&u, 0.4);
            assert!((0.5 * e / f - 1.0).abs() < 1e-3, "{e} vs {f}");
        }
    }

    #[test]
    fn sphere_quadratic_form() {
        let s = SpectralManifold::new(ManifoldSpec::unit_sphere()).unwrap();
        let b = Arc::new(s.basis(9).unwrap());
        let wp = WspParams::new(0.5, 2.0, 2).unwrap();
        let pq = PairQuadrature::with_order(&s, 24, &wp, &SubordinationQuad::default()).unwrap();
        let u = &random_family(&b, 1, 3)[0];
        let e = pq.energy(u);
        let f = spectral_form(u, 0.5);
        assert!((0.5 * e / f - 1.0).abs() < 1e-2, "{e} vs {f}");
    }

    #[test]
    fn embedding_examples() {
        let t = SpectralManifold::new(ManifoldSpec::standard_torus(2)).unwrap();
        let b = Arc::new(t.basis(13).unwrap());
        let wp = WspParams::new(0.4, 2.0, 2).unwrap();
        let pq = PairQuadrature::with_order(&t, 24, &wp, &SubordinationQuad::default()).unwrap();
        let one = SpectralFunction::constant(b.clone(), 1.0);
        let v = t.volume();
        let r = embedding_ratio(&one, 3.0, &pq).unwrap();
        assert!((r - v.powf(1.0 / 3.0) / v.sqrt()).abs() < 1e-12);
        assert!(matches!(embedding_ratio(&one, 4.0, &pq), Err(Error::ExponentOutOfRange(_))));
        for u in random_family(&b, 5, 1) {
            assert!(embedding_ratio(&u, 10.0 / 3.0, &pq).unwrap().is_finite());
        }
    }

    #[test]
    fn geodesic_band_contains_ratio() {
        let c = circle();
        let b = Arc::new(c.basis(13).unwrap());
        for (s, p) in [(0.25, 1.5), (0.5, 2.0), (0.75, 3.0)] {
            let wp = WspParams::new(s, p, 1).unwrap();
            let rule = c.quadrature(64).unwrap();
            let pq = PairQuadrature::new(&c, &rule, &wp, &SubordinationQuad::default()).unwrap();
            let pg = PairQuadrature::geodesic(&c, &rule, &wp).unwrap();
            let (lo, hi) = pq.kernel_band();
            assert!(lo > 0.0);
            for u in random_family(&b, 5, 11) {
                let r = gagliardo_seminorm(&u, &pq).unwrap() / geodesic_seminorm(&u, &pg).unwrap();
                assert!(r >= lo.powf(1.0 / p) * (1.0 - 1e-12) && r <= hi.powf(1.0 / p) * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn nodal_energy_gradient_matches_finite_differences() {
        let t = SpectralManifold::new(ManifoldSpec::standard_torus(2)).unwrap();
        let wp = WspParams::new(0.4, 2.0, 2).unwrap();
        let pq = PairQuadrature::with_order(&t, 8, &wp, &SubordinationQuad::default()).unwrap();
        let v: Vec<f64> = (0..64).map(|i| ((i * 7 % 13) as f64 * 0.3).sin()).collect();
        let g = pq.energy_gradient(&v).unwrap();
        let w = pq.rule().weights()[0];
        for k in [0usize, 9, 33] {
            let h = 1e-6;
            let mut a = v.clone();
            a[k] += h;
            let mut bb = v.clone();
            bb[k] -= h;
            let fd = (pq.energy_of_nodal(&a).unwrap() - pq.energy_of_nodal(&bb).unwrap()) / (2.0 * h);
            assert!((fd / w - g[k]).abs() < 1e-5 * g[k].abs().max(1.0), "{k}: {} vs {}", fd / w, g[k]);
        }
    }

    #[test]
    fn spectral_differentiation_exact_on_modes() {
        let t = SpectralManifold::new(ManifoldSpec::FlatTorus { periods: vec![2.0, 3.0] }).unwrap();
        let b = Arc::new(t.basis(13).unwrap());
        let wp = WspParams::new(0.4, 2.0, 2).unwrap();
        let pq = PairQuadrature::with_order(&t, 16, &wp, &SubordinationQuad::default()).unwrap();
        let u = &random_family(&b, 1, 5)[0];
        let g = pq.nodal_gradient(&u.nodal_values(pq.rule())).unwrap();
        let exact = u.nodal_gradients(pq.rule());
        for (a, e) in g.iter().zip(&exact) {
            assert!((a[0] - e[0]).abs() < 1e-11 && (a[1] - e[1]).abs() < 1e-11);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn homogeneity_and_triangle(seed in 0u64..1000, c in -3.0..3.0f64, p in 1.2..3.0f64) {
            let m = circle();
            let b = Arc::new(m.basis(13).unwrap());
            let wp = WspParams::new(0.45, p, 1).unwrap();
            let pq = PairQuadrature::with_order(&m, 48, &wp, &SubordinationQuad::default()).unwrap();
            let fam = random_family(&b, 2, seed);
            let su = gagliardo_seminorm(&fam[0], &pq).unwrap();
            let sv = gagliardo_seminorm(&fam[1], &pq).unwrap();
            let scaled = gagliardo_seminorm(&fam[0].scaled(c), &pq).unwrap();
            prop_assert!((scaled - c.abs() * su).abs() <= 1e-12 * su.max(1.0));
            let sum = gagliardo_seminorm(&fam[0].add(&fam[1]).unwrap(), &pq).unwrap();
            prop_assert!(sum <= su + sv + 1e-8);
            let one = SpectralFunction::constant(b.clone(), c);
            prop_assert!(gagliardo_seminorm(&one, &pq).unwrap() <= 1e-10);
        }
    }
}

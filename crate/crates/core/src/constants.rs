//! Optimal-constant experiments for fractional Sobolev inequalities.
//!
//! Everything here works on nodal values against a [`QuadratureRule`], so the
//! convexity inequalities hold exactly for the discrete measure.

use rayon::prelude::*;
use serde::Serialize;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::manifold::{ManifoldSpec, Point, QuadratureRule, SpectralFunction, SpectralManifold};
use crate::sobolev::{gagliardo_seminorm, pow_abs, PairQuadrature, WspParams};
use crate::special::golden_max;

/// Vol(M)^{-s/n}, the optimal B in the linear inequality.
pub fn beta_constant(m: &SpectralManifold, s: f64, p: f64) -> Result<f64> {
    let n = m.dim();
    if s * p >= n as f64 {
        return Err(Error::SupercriticalParameters { sp: s * p, n });
    }
    Ok(m.volume().powf(-s / n as f64))
}

/// Vol(M)^{-sp/n}, the optimal B in the p-power inequality.
pub fn beta_power_constant(m: &SpectralManifold, s: f64, p: f64) -> Result<f64> {
    Ok(beta_constant(m, s, p)?.powf(p))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InequalityReport {
    pub manifold: String,
    pub s: f64,
    pub p: f64,
    pub p_star: f64,
    pub a: f64,
    pub b: f64,
    pub lhs: f64,
    pub rhs: f64,
    /// rhs - lhs.
    pub deficit: f64,
    pub descriptor: String,
    pub err_est: f64,
}

/// Relative accuracy assigned to quadrature seminorm values.
pub const SEMINORM_REL_ERR: f64 = 1e-3;

struct Sides {
    norm_star: f64,
    norm_p: f64,
    semi: f64,
}

fn sides(u: &SpectralFunction, pq: &PairQuadrature) -> Result<(Sides, f64)> {
    let ps = pq.params().require_subcritical()?;
    let rule = pq.rule();
    let v = u.nodal_values(rule);
    let s = Sides {
        norm_star: rule.lp_norm(&v, ps),
        norm_p: rule.lp_norm(&v, pq.params().p()),
        semi: gagliardo_seminorm(u, pq)?,
    };
    Ok((s, ps))
}

fn report(
    u: &SpectralFunction,
    pq: &PairQuadrature,
    a: f64,
    b: f64,
    lhs: f64,
    rhs: f64,
    semi_term: f64,
    descriptor: &str,
    ps: f64,
) -> InequalityReport {
    let wp = pq.params();
    InequalityReport {
        manifold: u.basis().manifold().id(),
        s: wp.s(),
        p: wp.p(),
        p_star: ps,
        a,
        b,
        lhs,
        rhs,
        deficit: rhs - lhs,
        descriptor: descriptor.to_string(),
        err_est: SEMINORM_REL_ERR * semi_term + 1e-14 * (lhs.abs() + rhs.abs()),
    }
}

/// ‖u‖_{p*} ≤ A[u] + B‖u‖_p.
pub fn linear_deficit(
    u: &SpectralFunction,
    a: f64,
    b: f64,
    pq: &PairQuadrature,
    descriptor: &str,
) -> Result<InequalityReport> {
    let (s, ps) = sides(u, pq)?;
    let lhs = s.norm_star;
    let rhs = a * s.semi + b * s.norm_p;
    Ok(report(u, pq, a, b, lhs, rhs, a * s.semi, descriptor, ps))
}

/// ‖u‖_{p*}^p ≤ A[u]^p + B‖u‖_p^p.
pub fn power_deficit(
    u: &SpectralFunction,
    a: f64,
    b: f64,
    pq: &PairQuadrature,
    descriptor: &str,
) -> Result<InequalityReport> {
    let (s, ps) = sides(u, pq)?;
    let p = pq.params().p();
    let lhs = s.norm_star.powf(p);
    let semi_p = s.semi.powf(p);
    let rhs = a * semi_p + b * s.norm_p.powf(p);
    Ok(report(u, pq, a, b, lhs, rhs, a * semi_p, descriptor, ps))
}

/// Geometric sweep grid 2^{k/2}, k = -10..=40.
pub fn a_sweep_grid() -> Vec<f64> {
    (-10..=40).map(|k| 2f64.powf(k as f64 / 2.0)).collect()
}

/// Smallest grid value A with power_deficit ≥ 0 for every member, or None
/// when some member needs more than the largest grid value.
pub fn minimal_a(family: &[SpectralFunction], b: f64, pq: &PairQuadrature) -> Result<Option<f64>> {
    let p = pq.params().p();
    let need: Result<Vec<f64>> = family
        .par_iter()
        .map(|u| {
            let (s, _) = sides(u, pq)?;
            let excess = s.norm_star.powf(p) - b * s.norm_p.powf(p);
            if excess <= 0.0 {
                return Ok(0.0);
            }
            let e = s.semi.powf(p);
            Ok(if e > 0.0 { excess / e } else { f64::INFINITY })
        })
        .collect();
    let worst = need?.into_iter().fold(0.0, f64::max);
    Ok(a_sweep_grid().into_iter().find(|a| *a >= worst))
}

fn mean(values: &[f64], rule: &QuadratureRule) -> f64 {
    rule.integrate(values) / rule.total_weight()
}

/// rhs - lhs of the Bakry-type inequality
/// (∫|u|^{p*})^{2/p*} ≤ V^{-2(p*-1)/p*}|∫u|² + (p*-1)(∫|u-u_M|^{p*})^{2/p*}.
pub fn bakry_deficit(u: &[f64], p_star: f64, rule: &QuadratureRule) -> Result<f64> {
    if p_star < 2.0 {
        return Err(Error::ExponentBelow2(p_star));
    }
    let v = rule.total_weight();
    let int = rule.integrate(u);
    let um = int / v;
    let centered: Vec<f64> = u.iter().map(|x| x - um).collect();
    let lhs = rule.lp_power(u, p_star).powf(2.0 / p_star);
    let rhs = v.powf(-2.0 * (p_star - 1.0) / p_star) * int * int
        + (p_star - 1.0) * rule.lp_power(&centered, p_star).powf(2.0 / p_star);
    Ok(rhs - lhs)
}

/// C_{p*} = (1 + (p*-1)^{p*-1})^{p/p*}.
pub fn split_constant(p: f64, p_star: f64) -> f64 {
    (1.0 + (p_star - 1.0).powf(p_star - 1.0)).powf(p / p_star)
}

/// rhs - lhs of
/// (∫|w|^{p*})^{p/p*} ≤ V^{p/p*-p}|∫w|^p + C_{p*}(∫|w-w_M|^{p*})^{p/p*}.
pub fn subcritical_split_deficit(w: &[f64], p: f64, p_star: f64, rule: &QuadratureRule) -> Result<f64> {
    if p_star > 2.0 {
        return Err(Error::ExponentAbove2(p_star));
    }
    if !(p >= 1.0 && p <= p_star) {
        return Err(Error::InvalidParameter(format!("p = {p} must lie in [1, p* = {p_star}]")));
    }
    let v = rule.total_weight();
    let int = rule.integrate(w);
    let wm = int / v;
    let centered: Vec<f64> = w.iter().map(|x| x - wm).collect();
    let r = p / p_star;
    let lhs = rule.lp_power(w, p_star).powf(r);
    let rhs = v.powf(r - p) * int.abs().powf(p) + split_constant(p, p_star) * rule.lp_power(&centered, p_star).powf(r);
    Ok(rhs - lhs)
}

/// Numerical sup_{t≥0}(-t + p* s^{1/p*} t^{(p*-1)/p*}) and the closed form
/// (p*-1)^{p*-1} s.
pub fn sup_identity(p_star: f64, s: f64) -> (f64, f64) {
    let f = |t: f64| -t + p_star * s.powf(1.0 / p_star) * t.max(0.0).powf((p_star - 1.0) / p_star);
    let hi = 2.0 * p_star.powf(p_star) * s + 1.0;
    let (_, v) = golden_max(f, 0.0, hi, 1e-13);
    (v, (p_star - 1.0).powf(p_star - 1.0) * s)
}

/// ε⁰, ε¹, ε² coefficients of both sides of the perturbed equality case.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TaylorCoeffs {
    /// (∫|1+εu|^{p*})^{p/p*}.
    pub lhs: [f64; 3],
    /// V^{-sp/n}∫|1+εu|^p.
    pub rhs: [f64; 3],
}

impl TaylorCoeffs {
    pub fn c2_gap(&self) -> f64 {
        self.lhs[2] - self.rhs[2]
    }
}

/// Expansion from m₁ = ∫u and m₂ = ∫u², using V^{-sp/n} = V^{p/p*-1}.
pub fn taylor_coeffs(u: &[f64], p: f64, p_star: f64, v: f64, rule: &QuadratureRule) -> TaylorCoeffs {
    let m1 = rule.integrate(u);
    let sq: Vec<f64> = u.iter().map(|x| x * x).collect();
    let m2 = rule.integrate(&sq);
    taylor_from_moments(m1, m2, p, p_star, v)
}

pub fn taylor_from_moments(m1: f64, m2: f64, p: f64, p_star: f64, v: f64) -> TaylorCoeffs {
    let r = p / p_star;
    let vr = v.powf(r);
    let lhs = [
        vr,
        p * v.powf(r - 1.0) * m1,
        0.5 * p * (p_star - 1.0) * v.powf(r - 1.0) * m2 + 0.5 * p * (p - p_star) * v.powf(r - 2.0) * m1 * m1,
    ];
    let rhs = [vr, p * v.powf(r - 1.0) * m1, 0.5 * p * (p - 1.0) * v.powf(r - 1.0) * m2];
    TaylorCoeffs { lhs, rhs }
}

// (1+x)^q - 1 - qx without cancellation.
fn pow1p_rem(q: f64, x: f64) -> f64 {
    if x.abs() < 1e-2 {
        let mut term = q * (q - 1.0) / 2.0 * x * x;
        let mut sum = term;
        for k in 3..40 {
            term *= (q - (k as f64 - 1.0)) / k as f64 * x;
            sum += term;
            if term.abs() <= 1e-17 * sum.abs() {
                break;
            }
        }
        sum
    } else {
        (q * x.ln_1p()).exp_m1() - q * x
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CurvePoint {
    pub eps: f64,
    /// (∫|1+εu|^{p*})^{p/p*} - V^{-sp/n}∫|1+εu|^p.
    pub d: f64,
    /// [1+εu]^p = ε^p[u]^p.
    pub e: f64,
}

/// 1/(2‖u‖_∞) on the rule nodes.
pub fn amplitude_bound(u: &[f64]) -> f64 {
    0.5 / u.iter().fold(0.0f64, |a, v| a.max(v.abs()))
}

/// D(ε) from nodal values, evaluated without cancellation of the ε⁰ and ε¹
/// terms.
pub fn curve_gap(u: &[f64], eps: f64, p: f64, p_star: f64, rule: &QuadratureRule) -> f64 {
    let v = rule.total_weight();
    let r = p / p_star;
    let gs: Vec<f64> = u.iter().map(|x| pow1p_rem(p_star, eps * x)).collect();
    let gp: Vec<f64> = u.iter().map(|x| pow1p_rem(p, eps * x)).collect();
    let g_star = rule.integrate(&gs);
    let g_p = rule.integrate(&gp);
    let m1 = rule.integrate(u);
    let x = (g_star + p_star * eps * m1) / v;
    v.powf(r) * pow1p_rem(r, x) + v.powf(r - 1.0) * (r * g_star - g_p)
}

/// The curve (ε, D(ε), E(ε)) over an ε-grid.
pub fn counterexample_curve(u: &SpectralFunction, eps_grid: &[f64], pq: &PairQuadrature) -> Result<Vec<CurvePoint>> {
    let wp = pq.params();
    let ps = wp.require_subcritical()?;
    let p = wp.p();
    let vals = u.nodal_values(pq.rule());
    let max = amplitude_bound(&vals);
    if let Some(eps) = eps_grid.iter().find(|e| **e > max || **e <= 0.0) {
        return Err(Error::AmplitudeTooLarge { eps: *eps, max });
    }
    let energy = gagliardo_seminorm(u, pq)?.powf(p);
    Ok(eps_grid
        .iter()
        .map(|&eps| CurvePoint { eps, d: curve_gap(&vals, eps, p, ps, pq.rule()), e: eps.powf(p) * energy })
        .collect())
}

/// Least-squares slope of ln y against ln x.
pub fn loglog_slope(points: &[(f64, f64)]) -> f64 {
    let pts: Vec<(f64, f64)> = points.iter().map(|(x, y)| (x.ln(), y.ln())).collect();
    crate::heat_kernel::linear_fit(&pts).0
}

/// Amplitude below which D(ε) > A·E(ε) to leading order:
/// (c₂/(2A[u]^p))^{1/(p-2)}.
pub fn large_a_witness(c2: f64, a: f64, energy: f64, p: f64) -> f64 {
    (c2 / (2.0 * a * energy)).powf(1.0 / (p - 2.0))
}

#[derive(Clone, Debug, PartialEq)]
pub struct BubbleParams {
    pub center: Vec<f64>,
    pub eps: f64,
    pub n: usize,
    pub s: f64,
}

impl BubbleParams {
    pub fn new(center: Vec<f64>, eps: f64, s: f64) -> Result<Self> {
        if !(eps > 0.0) {
            return Err(Error::InvalidParameter(format!("bubble width {eps} must be positive")));
        }
        let n = center.len();
        Ok(BubbleParams { center, eps, n, s })
    }

    pub fn exponent(&self) -> f64 {
        (self.n as f64 - 2.0 * self.s) / 2.0
    }

    /// Profile as a function of the distance to the center.
    pub fn radial(&self, r: f64) -> f64 {
        (self.eps / (self.eps * self.eps + r * r)).powf(self.exponent())
    }
}

/// (ε/(ε² + |x - x₀|²))^{(n-2s)/2} in a Euclidean chart.
pub fn bubble(bp: &BubbleParams, x: &[f64]) -> f64 {
    let r2: f64 = x.iter().zip(&bp.center).map(|(a, b)| (a - b) * (a - b)).sum();
    bp.radial(r2.sqrt())
}

/// Bubble transplanted to a manifold through the geodesic distance.
pub fn bubble_on(m: &SpectralManifold, bp: &BubbleParams, x: &Point) -> Result<f64> {
    let c = m.point(&bp.center)?;
    Ok(bp.radial(m.distance(&c, x)))
}

/// [u]^p / ‖u‖_{p*}^p for a band-limited function.
pub fn rayleigh_quotient(u: &SpectralFunction, pq: &PairQuadrature) -> Result<f64> {
    let ps = pq.params().require_subcritical()?;
    let p = pq.params().p();
    let den = u.nodal_values(pq.rule());
    let den = pq.rule().lp_norm(&den, ps);
    if den == 0.0 {
        return Err(Error::ZeroInput);
    }
    Ok(pq.energy(u) / den.powf(p))
}

/// Quotient of a nodal field, gradients by spectral differentiation.
pub fn rayleigh_quotient_nodal(values: &[f64], pq: &PairQuadrature) -> Result<f64> {
    let ps = pq.params().require_subcritical()?;
    let den = pq.rule().lp_norm(values, ps);
    if den == 0.0 || !den.is_finite() {
        return Err(Error::ZeroInput);
    }
    Ok(pq.energy_of_nodal(values)? / den.powf(pq.params().p()))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MinimizeOptions {
    pub max_steps: usize,
    /// Stop when the relative decrease over `window` steps is below this.
    pub rel_tol: f64,
    pub window: usize,
    pub armijo: f64,
    pub shrink: f64,
    pub max_backtracks: usize,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        MinimizeOptions { max_steps: 2000, rel_tol: 1e-6, window: 20, armijo: 1e-4, shrink: 0.5, max_backtracks: 60 }
    }
}

#[derive(Clone, Debug)]
pub struct Minimizer {
    /// Mean-zero nodal values with ‖u‖_{p*} = 1.
    pub values: Vec<f64>,
    pub quotient: f64,
    pub steps: usize,
    pub history: Vec<f64>,
}

fn project_mean_zero(v: &mut [f64], rule: &QuadratureRule) {
    let m = mean(v, rule);
    v.iter_mut().for_each(|x| *x -= m);
}

fn normalize(v: &mut [f64], q: f64, rule: &QuadratureRule) -> Result<()> {
    let n = rule.lp_norm(v, q);
    if !(n > 0.0) || !n.is_finite() {
        return Err(Error::ZeroInput);
    }
    v.iter_mut().for_each(|x| *x /= n);
    Ok(())
}

fn dot(a: &[f64], b: &[f64], rule: &QuadratureRule) -> f64 {
    a.iter().zip(b).zip(rule.weights()).map(|((x, y), w)| w * x * y).sum()
}

/// L²(μ) gradient of the quotient at a normalized mean-zero point,
/// projected onto mean-zero fields.
pub fn quotient_gradient(values: &[f64], pq: &PairQuadrature) -> Result<(f64, Vec<f64>)> {
    let ps = pq.params().require_subcritical()?;
    let p = pq.params().p();
    let rule = pq.rule();
    let np = rule.lp_norm(values, ps).powf(p);
    let e = pq.energy_of_nodal(values)?;
    let ge = pq.energy_gradient(values)?;
    let ip = rule.lp_power(values, ps);
    // ∂‖u‖^p_{p*} = p (∫|u|^{p*})^{p/p*-1} |u|^{p*-2}u
    let c = p * ip.powf(p / ps - 1.0);
    let mut g: Vec<f64> =
        ge.iter().zip(values).map(|(a, u)| (a - e / np * c * pow_abs(*u, ps - 1.0) * u.signum()) / np).collect();
    project_mean_zero(&mut g, rule);
    Ok((e / np, g))
}

/// Normalized projected gradient descent on mean-zero nodal fields.
pub fn minimize_quotient(pq: &PairQuadrature, init: &[f64], opts: &MinimizeOptions) -> Result<Minimizer> {
    let ps = pq.params().require_subcritical()?;
    let rule = pq.rule();
    let mut u = init.to_vec();
    project_mean_zero(&mut u, rule);
    normalize(&mut u, ps, rule)?;
    let (mut q, mut g) = quotient_gradient(&u, pq)?;
    let mut history = vec![q];
    let mut prev: Option<(Vec<f64>, Vec<f64>)> = None;
    let mut increases = 0;
    let mut steps = 0;
    while steps < opts.max_steps {
        let gg = dot(&g, &g, rule);
        if gg == 0.0 {
            break;
        }
        let mut alpha = match &prev {
            Some((du, dg)) => {
                let sy = dot(du, dg, rule);
                if sy > 0.0 {
                    dot(du, du, rule) / sy
                } else {
                    1.0 / gg.sqrt()
                }
            }
            None => 0.1 / gg.sqrt(),
        };
        let mut accepted = None;
        for _ in 0..opts.max_backtracks {
            let mut trial: Vec<f64> = u.iter().zip(&g).map(|(a, b)| a - alpha * b).collect();
            project_mean_zero(&mut trial, rule);
            if normalize(&mut trial, ps, rule).is_ok() {
                let qt = rayleigh_quotient_nodal(&trial, pq)?;
                if qt <= q - opts.armijo * alpha * gg {
                    accepted = Some((trial, qt));
                    break;
                }
            }
            alpha *= opts.shrink;
        }
        let Some((next, qn)) = accepted else { break };
        increases = if qn > q { increases + 1 } else { 0 };
        if increases >= 5 {
            return Err(Error::DescentDiverged(increases));
        }
        let (_, gn) = quotient_gradient(&next, pq)?;
        let du: Vec<f64> = next.iter().zip(&u).map(|(a, b)| a - b).collect();
        let dg: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        prev = Some((du, dg));
        u = next;
        q = qn;
        g = gn;
        history.push(q);
        steps += 1;
        if history.len() > opts.window {
            let old = history[history.len() - 1 - opts.window];
            if (old - q) / old.abs() < opts.rel_tol {
                break;
            }
        }
    }
    Ok(Minimizer { values: u, quotient: q, steps, history })
}

/// Largest |d/dt Q(normalize(u + t v))| / Q over mean-zero directions
/// normalized in L^{p*}, by central differences.
pub fn stationarity(values: &[f64], directions: &[Vec<f64>], h: f64, pq: &PairQuadrature) -> Result<f64> {
    let ps = pq.params().require_subcritical()?;
    let rule = pq.rule();
    let q0 = rayleigh_quotient_nodal(values, pq)?;
    let mut worst: f64 = 0.0;
    for d in directions {
        let mut v = d.clone();
        project_mean_zero(&mut v, rule);
        normalize(&mut v, ps, rule)?;
        let at = |t: f64| -> Result<f64> {
            let w: Vec<f64> = values.iter().zip(&v).map(|(a, b)| a + t * b).collect();
            rayleigh_quotient_nodal(&w, pq)
        };
        let fd = (at(h)? - at(-h)?) / (2.0 * h);
        worst = worst.max(fd.abs() / q0);
    }
    Ok(worst)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartitionKind {
    /// cos θ, sin θ on the circle.
    CosSinCircle,
    /// Products of single-axis cos/sin on a torus.
    TorusAxis,
}

/// Signed partition Σ|f_i|^p = 1.
#[derive(Clone, Debug)]
pub struct SignedPartition {
    pub kind: PartitionKind,
    pub p: f64,
    manifold: SpectralManifold,
}

impl SignedPartition {
    pub fn len(&self) -> usize {
        match self.kind {
            PartitionKind::CosSinCircle => 2,
            PartitionKind::TorusAxis => 1 << self.manifold.dim(),
        }
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    fn raw(&self, x: &Point) -> Vec<f64> {
        let c = x.coords();
        match self.kind {
            PartitionKind::CosSinCircle => vec![c[0].cos(), c[0].sin()],
            PartitionKind::TorusAxis => {
                let ManifoldSpec::FlatTorus { periods } = self.manifold.spec() else { unreachable!() };
                (0..self.len())
                    .map(|mask| {
                        (0..periods.len())
                            .map(|a| {
                                let t = 2.0 * PI * c[a] / periods[a];
                                if mask >> a & 1 == 0 {
                                    t.cos()
                                } else {
                                    t.sin()
                                }
                            })
                            .product()
                    })
                    .collect()
            }
        }
    }

    /// f_i(x) for all i.
    pub fn eval(&self, x: &Point) -> Vec<f64> {
        let r = self.raw(x);
        if self.p == 2.0 && self.kind == PartitionKind::CosSinCircle {
            return r;
        }
        let norm = r.iter().map(|v| pow_abs(*v, self.p)).sum::<f64>().powf(1.0 / self.p);
        r.iter().map(|v| v / norm).collect()
    }

    /// values[i][node].
    pub fn nodal(&self, rule: &QuadratureRule) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; rule.len()]; self.len()];
        for (k, x) in rule.nodes().iter().enumerate() {
            for (i, v) in self.eval(x).into_iter().enumerate() {
                out[i][k] = v;
            }
        }
        out
    }

    /// Checks Σ|f_i|^p = 1 within 1e-10 and that each f_i takes both signs.
    pub fn check(&self, rule: &QuadratureRule) -> Result<()> {
        let f = self.nodal(rule);
        for k in 0..rule.len() {
            let s: f64 = f.iter().map(|fi| pow_abs(fi[k], self.p)).sum();
            if (s - 1.0).abs() > 1e-10 {
                return Err(Error::PartitionIdentityViolated(format!("Σ|f_i|^p = {s} at node {k}")));
            }
        }
        for (i, fi) in f.iter().enumerate() {
            let pos = fi.iter().any(|v| *v > 0.0);
            let neg = fi.iter().any(|v| *v < 0.0);
            if !(pos && neg) {
                return Err(Error::PartitionIdentityViolated(format!("f_{i} does not change sign")));
            }
        }
        Ok(())
    }
}

pub fn make_partition(
    kind: PartitionKind,
    m: &SpectralManifold,
    p: f64,
    rule: &QuadratureRule,
) -> Result<SignedPartition> {
    match (kind, m.spec()) {
        (PartitionKind::CosSinCircle, ManifoldSpec::Circle { radius }) if *radius == 1.0 => {}
        (PartitionKind::TorusAxis, ManifoldSpec::FlatTorus { .. }) => {}
        _ => return Err(Error::UnsupportedKind(format!("{kind:?} partition on {}", m.id()))),
    }
    let part = SignedPartition { kind, p, manifold: m.clone() };
    part.check(rule)?;
    Ok(part)
}

/// r_i = ∫ f_i|f_i|^{p*-1}|u|^{p*}.
pub fn orthogonality_residuals(u: &[f64], part: &SignedPartition, p_star: f64, rule: &QuadratureRule) -> Vec<f64> {
    part.nodal(rule)
        .iter()
        .map(|f| {
            let v: Vec<f64> =
                f.iter().zip(u).map(|(fi, ui)| fi * pow_abs(*fi, p_star - 1.0) * pow_abs(*ui, p_star)).collect();
            rule.integrate(&v)
        })
        .collect()
}

/// Tolerance on orthogonality residuals for the split identity.
pub const ORTHOGONALITY_TOL: f64 = 1e-8;

/// (∫(f_{i,+})^{p*}|u|^{p*}, ∫(f_{i,-})^{p*}|u|^{p*}) for each i.
pub fn half_masses(u: &[f64], part: &SignedPartition, p_star: f64, rule: &QuadratureRule) -> Vec<(f64, f64)> {
    part.nodal(rule)
        .iter()
        .map(|f| {
            let side = |sign: f64| {
                let v: Vec<f64> = f.iter().zip(u).map(|(fi, ui)| pow_abs((sign * fi).max(0.0) * ui, p_star)).collect();
                rule.integrate(&v)
            };
            (side(1.0), side(-1.0))
        })
        .collect()
}

/// max_i |‖f_i u‖^p_{p*} - 2^{-sp/n}(‖f_{i,+}u‖^p_{p*} + ‖f_{i,-}u‖^p_{p*})|.
pub fn split_identity_check(u: &[f64], part: &SignedPartition, wp: &WspParams, rule: &QuadratureRule) -> Result<f64> {
    let ps = wp.require_subcritical()?;
    let p = wp.p();
    let res = orthogonality_residuals(u, part, ps, rule);
    let worst = res.iter().fold(0.0f64, |a, r| a.max(r.abs()));
    if worst >= ORTHOGONALITY_TOL {
        return Err(Error::OrthogonalityViolated(worst));
    }
    let factor = 2f64.powf(-wp.sp() / wp.n() as f64);
    let r = p / ps;
    Ok(half_masses(u, part, ps, rule)
        .iter()
        .map(|(a, b)| ((a + b).powf(r) - factor * (a.powf(r) + b.powf(r))).abs())
        .fold(0.0, f64::max))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LeibnizReport {
    pub lhs: f64,
    pub rhs: f64,
    pub deficit: f64,
    /// C(f, δ) = (1 + 1/δ)^{p-1} L^p M.
    pub c_f_delta: f64,
    pub lipschitz: f64,
    pub moment: f64,
}

/// Both sides of the product-energy bound
/// [fu]^p ≤ (1+δ)^{p-1}∬|f(x)|^p|u(x)-u(y)|^p K + C(f,δ)∫|u|^p
/// on the pair quadrature.
pub fn leibniz_energy_bound(
    u: &SpectralFunction,
    f: &SpectralFunction,
    delta: f64,
    pq: &PairQuadrature,
) -> Result<LeibnizReport> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidParameter(format!("δ = {delta} outside (0, 1)")));
    }
    let rule = pq.rule();
    let m = pq.manifold();
    let p = pq.params().p();
    let uv = u.nodal_values(rule);
    let ug = u.nodal_gradients(rule);
    let fv = f.nodal_values(rule);
    let fg = f.nodal_gradients(rule);
    let prod: Vec<f64> = uv.iter().zip(&fv).map(|(a, b)| a * b).collect();
    let prod_g: Vec<[f64; 3]> = (0..rule.len())
        .map(|k| {
            let mut g = [0.0; 3];
            for i in 0..3 {
                g[i] = fv[k] * ug[k][i] + uv[k] * fg[k][i];
            }
            g
        })
        .collect();
    let lhs = pq.energy_nodal(&prod, &prod_g);
    let weighted = pq.weighted_energy_nodal(&uv, &ug, &fv.iter().map(|x| pow_abs(*x, p)).collect::<Vec<_>>());
    let nodes = rule.nodes();
    let pair_lip = (0..rule.len())
        .into_par_iter()
        .map(|i| {
            let mut l: f64 = 0.0;
            for j in 0..rule.len() {
                if i != j {
                    let d = m.distance(&nodes[i], &nodes[j]);
                    if d > 0.0 {
                        l = l.max((fv[i] - fv[j]).abs() / d);
                    }
                }
            }
            l
        })
        .reduce(|| 0.0, f64::max);
    let grad_lip = fg.iter().map(|g| (g[0] * g[0] + g[1] * g[1] + g[2] * g[2]).sqrt()).fold(0.0, f64::max);
    let lip = pair_lip.max(grad_lip);
    let moment = pq.kernel_moment();
    let c = (1.0 + 1.0 / delta).powf(p - 1.0) * lip.powf(p) * moment;
    let rhs = (1.0 + delta).powf(p - 1.0) * weighted + c * rule.lp_power(&uv, p);
    Ok(LeibnizReport { lhs, rhs, deficit: rhs - lhs, c_f_delta: c, lipschitz: lip, moment })
}

/// Sup of ‖u‖²_{p*}/[u]² over mean-free single bubbles and antipodal bubble
/// pairs (which satisfy the cos/sin orthogonality) on the unit circle.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ImprovedTrend {
    pub unconstrained: f64,
    pub constrained: f64,
    /// 2^{-sp/n}.
    pub factor: f64,
}

impl ImprovedTrend {
    /// constrained ≤ factor·unconstrained·(1 + slack).
    pub fn holds(&self, slack: f64) -> bool {
        self.constrained <= self.factor * self.unconstrained * (1.0 + slack)
    }
}

pub fn improved_constant_trend(pq: &PairQuadrature, widths: &[f64]) -> Result<ImprovedTrend> {
    let m = pq.manifold();
    if !matches!(m.spec(), ManifoldSpec::Circle { .. }) {
        return Err(Error::UnsupportedKind("improved-constant trend runs on the circle".into()));
    }
    let wp = pq.params();
    if wp.p() != 2.0 {
        return Err(Error::InvalidParameter("improved-constant trend uses p = 2".into()));
    }
    let ps = wp.require_subcritical()?;
    let rule = pq.rule();
    // constants carry no energy, so both profiles are compared mean-free;
    // the shifted pair stays π-periodic and keeps the cos/sin orthogonality
    let ratio = |v: &[f64]| -> Result<f64> {
        let mean = rule.integrate(v) / rule.total_weight();
        let w: Vec<f64> = v.iter().map(|x| x - mean).collect();
        Ok(rule.lp_norm(&w, ps).powi(2) / pq.energy_of_nodal(&w)?)
    };
    let mut unc: f64 = 0.0;
    let mut con: f64 = 0.0;
    for &eps in widths {
        let bp = BubbleParams::new(vec![0.0], eps, wp.s())?;
        let opp = BubbleParams::new(vec![PI], eps, wp.s())?;
        let single: Result<Vec<f64>> = rule.nodes().iter().map(|x| bubble_on(m, &bp, x)).collect();
        let single = single?;
        let pair: Result<Vec<f64>> =
            rule.nodes().iter().zip(&single).map(|(x, a)| Ok(a + bubble_on(m, &opp, x)?)).collect();
        unc = unc.max(ratio(&single)?);
        con = con.max(ratio(&pair?)?);
    }
    Ok(ImprovedTrend { unconstrained: unc, constrained: con, factor: 2f64.powf(-wp.sp()) })
}

//! The experiment registry. Each experiment turns a config into a list of
//! grid instances; instances run on the worker pool and their rows are kept
//! in grid order.

use std::f64::consts::PI;
use std::sync::Arc;

use fsobolev::constants::*;
use fsobolev::fractional_op::*;
use fsobolev::heat_kernel::*;
use fsobolev::manifold::{project, random_family};
use fsobolev::sobolev::*;
use fsobolev::{
    Error, FracParams, ManifoldSpec, PairQuadrature, Point, QuadratureRule, SpectralFunction, SpectralManifold,
    SubordinationQuad, WspParams,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::ExperimentConfig;
use crate::report::{Normalization, Row};

type LibResult<T> = fsobolev::Result<T>;
pub type Instance<'a> = Box<dyn Fn() -> LibResult<Vec<Row>> + Send + Sync + 'a>;

pub struct Plan<'a> {
    pub instances: Vec<Instance<'a>>,
    pub normalization: Vec<Normalization>,
}

pub const EXPERIMENTS: [(&str, &str); 18] = [
    ("bakry", "convexity inequality for p* ≥ 2 on random nodal fields"),
    ("beta-program", "equality at u ≡ 1 with B = Vol^(-s/n) and the minimal A over a random family"),
    ("bubbles", "bubble profile identities, improved-constant trend and bubble vs optimizer"),
    ("counterexample", "second-order expansion of the power-form gap around u ≡ 1 for p > 2"),
    ("dtn", "Poisson-kernel mass and the Dirichlet-to-Neumann map of the extension"),
    ("embedding", "L^q embedding ratios for p ≤ q ≤ p*"),
    ("euclid-kernel", "subordinated Euclidean kernel against its closed form"),
    ("frac-agreement", "spectral, semigroup and singular-integral fractional Laplacians"),
    ("gaussian-bounds", "short-time Gaussian envelope of the heat kernel"),
    ("heat-mass", "unit mass of the heat kernel"),
    ("kernel-bounds", "two-sided distance bounds of the W^{s,p} kernel and seminorm equivalence"),
    ("longtime", "exponential approach of the heat kernel to 1/Vol"),
    ("minimize-quotient", "projected descent on the Sobolev quotient from several starts"),
    ("orthogonality", "signed partitions, orthogonality residuals and the product-energy bound"),
    ("poincare", "fractional Poincaré ratio against the Jensen bound"),
    ("s-limits", "s → 1 and s → 0 limits of the fractional Laplacian"),
    ("semigroup", "semigroup law in coefficients and Chapman–Kolmogorov under quadrature"),
    ("subcritical-split", "split inequality for p ≤ p* ≤ 2 and the sup identity"),
];

pub fn describe(name: &str) -> Option<&'static str> {
    EXPERIMENTS.iter().find(|(n, _)| *n == name).map(|(_, d)| *d)
}

pub fn plan<'a>(name: &str, cfg: &'a ExperimentConfig) -> LibResult<Plan<'a>> {
    let ctx = Ctx { cfg, name: EXPERIMENTS.iter().find(|(n, _)| *n == name).map(|(n, _)| *n).unwrap() };
    match name {
        "bakry" => bakry(ctx),
        "beta-program" => beta_program(ctx),
        "bubbles" => bubbles(ctx),
        "counterexample" => counterexample(ctx),
        "dtn" => dtn(ctx),
        "embedding" => embedding(ctx),
        "euclid-kernel" => euclid_kernel(ctx),
        "frac-agreement" => frac_agreement(ctx),
        "gaussian-bounds" => gaussian_bounds(ctx),
        "heat-mass" => heat_mass(ctx),
        "kernel-bounds" => kernel_bounds(ctx),
        "longtime" => longtime(ctx),
        "minimize-quotient" => minimize(ctx),
        "orthogonality" => orthogonality(ctx),
        "poincare" => poincare(ctx),
        "s-limits" => s_limits(ctx),
        "semigroup" => semigroup(ctx),
        "subcritical-split" => subcritical_split(ctx),
        _ => unreachable!("names are checked before planning"),
    }
}

#[derive(Clone, Copy)]
struct Ctx<'a> {
    cfg: &'a ExperimentConfig,
    name: &'static str,
}

impl<'a> Ctx<'a> {
    fn manifold(&self, default: ManifoldSpec) -> LibResult<SpectralManifold> {
        SpectralManifold::new(self.cfg.manifold.clone().unwrap_or(default))
    }

    fn rb(&self, m: &SpectralManifold) -> Rb {
        Rb { exp: self.name, man: m.id(), s: None, p: None, q: None }
    }

    fn order(&self, m: &SpectralManifold, circle: usize, torus2: usize, other: usize) -> usize {
        self.cfg.order.unwrap_or(match m.spec() {
            ManifoldSpec::Circle { .. } => circle,
            ManifoldSpec::FlatTorus { periods } if periods.len() == 1 => circle,
            ManifoldSpec::FlatTorus { periods } if periods.len() == 2 => torus2,
            _ => other,
        })
    }

    fn truncation(&self, default: usize) -> usize {
        self.cfg.truncation.unwrap_or(default)
    }

    fn samples(&self, default: usize) -> usize {
        self.cfg.samples.unwrap_or(default)
    }

    fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut r = ChaCha8Rng::seed_from_u64(self.cfg.seed);
        r.set_stream(stream);
        r
    }
}

/// Row builder carrying the columns shared by an instance.
#[derive(Clone)]
struct Rb {
    exp: &'static str,
    man: String,
    s: Option<f64>,
    p: Option<f64>,
    q: Option<f64>,
}

impl Rb {
    fn s(mut self, s: f64) -> Self {
        self.s = Some(s);
        self
    }

    fn p(mut self, p: f64) -> Self {
        self.p = Some(p);
        self
    }

    fn q(mut self, q: f64) -> Self {
        self.q = Some(q);
        self
    }

    fn man(mut self, man: &str) -> Self {
        self.man = man.into();
        self
    }

    /// Row with deficit = rhs - lhs.
    fn row(&self, extra: impl Into<String>, lhs: f64, rhs: f64, err_est: f64, pass: bool) -> Row {
        self.row_d(extra, lhs, rhs, rhs - lhs, err_est, pass)
    }

    fn row_d(&self, extra: impl Into<String>, lhs: f64, rhs: f64, deficit: f64, err_est: f64, pass: bool) -> Row {
        Row {
            experiment: self.exp.into(),
            manifold: self.man.clone(),
            s: self.s,
            p: self.p,
            q: self.q,
            extra: extra.into(),
            lhs,
            rhs,
            deficit,
            err_est,
            pass,
        }
    }
}

fn sample_points(m: &SpectralManifold, count: usize, rng: &mut ChaCha8Rng) -> LibResult<Vec<Point>> {
    (0..count)
        .map(|_| match m.spec() {
            ManifoldSpec::Sphere2 { .. } => m.point(&[rng.gen_range(0.0..PI), rng.gen_range(0.0..2.0 * PI)]),
            ManifoldSpec::Circle { .. } => m.point(&[rng.gen_range(0.0..2.0 * PI)]),
            ManifoldSpec::FlatTorus { periods } => {
                let c: Vec<f64> = periods.iter().map(|l| rng.gen_range(0.0..*l)).collect();
                m.point(&c)
            }
        })
        .collect()
}

/// A point at geodesic distance d from the base point along the first chart axis.
fn base_pair(m: &SpectralManifold, d: f64) -> LibResult<(Point, Point)> {
    match m.spec() {
        ManifoldSpec::Sphere2 { radius } => Ok((m.point(&[0.0, 0.0])?, m.point(&[d / radius, 0.0])?)),
        ManifoldSpec::Circle { radius } => Ok((m.point(&[0.0])?, m.point(&[d / radius])?)),
        ManifoldSpec::FlatTorus { periods } => {
            let mut c = vec![0.0; periods.len()];
            let x = m.point(&c)?;
            c[0] = d;
            Ok((x, m.point(&c)?))
        }
    }
}

/// First non-constant eigenfunction.
fn first_mode(b: &Arc<fsobolev::SpectralBasis>) -> SpectralFunction {
    SpectralFunction::mode(b.clone(), 1)
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |a, x| a.max(x.abs()))
}

fn c_s_norms(s: &[f64]) -> Vec<Normalization> {
    s.iter().map(|&s| Normalization { name: format!("c_s(s={s})"), value: normalization(s) }).collect()
}

fn c_sp_norms(s: &[f64], p: &[f64]) -> Vec<Normalization> {
    let mut out = vec![];
    for &s in s {
        for &p in p {
            out.push(Normalization { name: format!("c_sp(s={s},p={p})"), value: normalization(s * p / 2.0) });
        }
    }
    out
}

fn grid_sp(s: &[f64], p: &[f64]) -> Vec<(f64, f64)> {
    s.iter().flat_map(|&s| p.iter().map(move |&p| (s, p))).collect()
}

fn heat_mass(ctx: Ctx<'_>) -> LibResult<Plan<'_>> {
    let m = Arc::new(ctx.manifold(ManifoldSpec::unit_circle())?);
    let ts = ctx.cfg.t_or(&[0.05, 0.1, 1.0, 10.0]);
    let t_min = ts.iter().cloned().fold(f64::INFINITY, f64::min);
    let ev = Arc::new(match ctx.cfg.truncation {
        Some(k) => HeatKernelEvaluator::with_truncation(&m, k, DEFAULT_TAIL_TOL)?,
        None => HeatKernelEvaluator::for_min_time(&m, t_min, DEFAULT_TAIL_TOL)?,
    });
    let pts = Arc::new(sample_points(&m, 3, &mut ctx.rng(1))?);
    let rb = ctx.rb(&m);
    let instances = ts
        .into_iter()
        .map(|t| {
            let (ev, pts, rb) = (ev.clone(), pts.clone(), rb.clone());
            Box::new(move || {
                let mut worst: f64 = 0.0;
                for x in pts.iter() {
                    worst = worst.max(ev.mass_defect(t, x)?);
                }
                Ok(vec![rb.row(format!("t={t}"), worst, 1e-8, ev.tail(t), worst < 1e-8)])
            }) as Instance
        })
        .collect();
    Ok(Plan { instances, normalization: vec![] })
}

fn semigroup(ctx: Ctx<'_>) -> LibResult<Plan<'_>> {
    let m = Arc::new(ctx.manifold(ManifoldSpec::unit_circle())?);
    let ts = ctx.cfg.t_or(&[0.2, 0.5, 1.0]);
    let t_min = ts.iter().cloned().fold(f64::INFINITY, f64::min);
    let ev = Arc::new(HeatKernelEvaluator::for_min_time(&m, t_min, DEFAULT_TAIL_TOL)?);
    let pts = Arc::new(sample_points(&m, 4, &mut ctx.rng(2))?);
    let b = Arc::new(m.basis(ctx.truncation(25))?);
    let u = Arc::new(random_family(&b, 1, ctx.cfg.seed).remove(0));
    let rb = ctx.rb(&m);
    let mut instances: Vec<Instance> = vec![];
    for (i, &t1) in ts.iter().enumerate() {
        for &t2 in &ts[i..] {
            let (ev, pts, u, rb) = (ev.clone(), pts.clone(), u.clone(), rb.clone());
            instances.push(Box::new(move || {
                let a = heat_apply(t1, &heat_apply(t2, &u)?)?;
                let c = heat_apply(t1 + t2, &u)?;
                let scale = max_abs(u.coeffs());
                let coef = a.coeffs().iter().zip(c.coeffs()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
                let mut rows = vec![rb.row_d(
                    format!("t1={t1};t2={t2};form=coefficients"),
                    coef,
                    4.0 * f64::EPSILON * scale,
                    -coef,
                    0.0,
                    coef <= 4.0 * f64::EPSILON * scale,
                )];
                let rule = ev.basis().default_rule()?;
                let mut worst: f64 = 0.0;
                let mut err: f64 = 0.0;
                for k in 0..pts.len() / 2 {
                    let (x, y) = (&pts[2 * k], &pts[2 * k + 1]);
                    let rx = ev.kernel_row(t1, x, &rule)?;
                    let ry = ev.kernel_row(t2, y, &rule)?;
                    let prod: Vec<f64> = rx.iter().zip(&ry).map(|(a, b)| a * b).collect();
                    let lhs = ev.heat_kernel(t1 + t2, x, y)?;
                    worst = worst.max((lhs - rule.integrate(&prod)).abs());
                    err = err.max(ev.tail(t1.min(t2)));
                }
                rows.push(rb.row_d(
                    format!("t1={t1};t2={t2};form=chapman-kolmogorov"),
                    worst,
                    1e-8,
                    -worst,
                    err,
                    worst < 1e-8,
                ));
                Ok(rows)
            }));
        }
    }
    Ok(Plan { instances, normalization: vec![] })
}

fn gaussian_bounds(ctx: Ctx<'_>) -> LibResult<Plan<'_>> {
    const C: f64 = 4.0;
    let m = Arc::new(ctx.manifold(ManifoldSpec::unit_circle())?);
    let ts = ctx.cfg.t_or(&[0.05, 0.1, 0.2]);
    let t_min = ts.iter().cloned().fold(f64::INFINITY, f64::min);
    let ev = Arc::new(HeatKernelEvaluator::for_min_time(&m, t_min, DEFAULT_TAIL_TOL)?);
    let rb = ctx.rb(&m);
    let flat = !matches!(m.spec(), ManifoldSpec::Sphere2 { .. });
    let instances = [("diagonal", 0.0), ("quarter", PI / 2.0)]
        .into_iter()
        .map(|(label, d)| {
            let (ev, m, rb, ts) = (ev.clone(), m.clone(), rb.clone(), ts.clone());
            Box::new(move || {
                let (x, y) = base_pair(&m, d)?;
                let ratios: LibResult<Vec<f64>> = ts.iter().map(|&t| ev.gaussian_bound_ratio(t, &x, &y, C)).collect();
                let ratios = ratios?;
                let envelope = ratios.iter().cloned().fold(0.0, f64::max);
                let mut rows = vec![];
                for (&t, &r) in ts.iter().zip(&ratios) {
                    let extra = format!("t={t};C={C};pair={label}");
                    if flat {
                        let oracle =
                            image_sum_kernel(&m, t, &x, &y)? * t.powf(m.dim() as f64 / 2.0) * (d * d / (C * t)).exp();
                        rows.push(rb.row(extra, r, oracle, ev.tail(t), (r - oracle).abs() <= 1e-6 * oracle.max(1.0)));
                    } else {
                        rows.push(rb.row(
                            extra + ";rhs=envelope",
                            r,
                            envelope,
                            ev.tail(t),
                            r.is_finite() && envelope.is_finite(),
                        ));
                    }
                }
                Ok(rows)
            }) as Instance
        })
        .collect();
    Ok(Plan { instances, normalization: vec![] })
}

fn longtime(ctx: Ctx<'_>) -> LibResult<Plan<'_>> {
    let m = Arc::new(ctx.manifold(ManifoldSpec::unit_circle())?);
    let ts = ctx.cfg.t_or(&(0..=10).map(|k| 1.0 + 0.5 * k as f64).collect::<Vec<_>>());
    let rb = ctx.rb(&m);
    let rng_pt = sample_points(&m, 1, &mut ctx.rng(4))?.remove(0);
    let inst: Instance = Box::new(move || {
        let t_min = ts.iter().cloned().fold(f64::INFINITY, f64::min);
        let ev = HeatKernelEvaluator::for_min_time(&m, t_min, DEFAULT_TAIL_TOL)?;
        let rule = ev.basis().default_rule()?;
        let (rate, c) = ev.large_time_rate(&ts, &rng_pt, &rule)?;
        let l1 = m.first_eigenvalue();
        Ok(vec![rb.row(format!("prefactor={c}"), rate, l1, ev.tail(t_min), (rate / l1 - 1.0).abs() < 0.05)])
    });
    Ok(Plan { instances: vec![inst], normalization: vec![] })
}

fn frac_agreement(ctx: Ctx<'_>) -> LibResult<Plan<'_>> {
    let m = Arc::new(ctx.manifold(ManifoldSpec::unit_circle())?);
    let s_grid = ctx.cfg.s_or(&[0.25, 0.5, 0.75]);
    let b = Arc::new(m.basis(ctx.truncation(13))?);
    let u = Arc::new(random_family(&b, 1, ctx.cfg.seed).remove(0));
    let n_pts = ctx.samples(8);
    let pts = Arc::new(sample_points(&m, n_pts, &mut ctx.rng(6))?);
    let singular = !matches!(m.spec(), ManifoldSpec::Sphere2 { .. });
    let rb = ctx.rb(&m);
    let instances = s_grid
        .iter()
        .map(|&s| {
            let (m, u, pts, rb) = (m.clone(), u.clone(), pts.clone(), rb.clone().s(s));
            Box::new(move || {
                let p = FracParams::new(s)?;
                let quad = SubordinationQuad::default();
                let spec = frac_apply_spectral(&p, &u);
                let semi = frac_apply_semigroup(&p, &u, &quad)?;
                let scale_c = max_abs(spec.coeffs());
                let diff = spec.coeffs().iter().zip(semi.coeffs()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                let mut rows = vec![rb.row_d(
                    "form=semigroup",
                    diff / scale_c,
                    1e-8,
                    -diff / scale_c,
                    0.0,
                    diff <= 1e-8 * scale_c,
                )];
                if singular {
                    let si = SingularIntegrator::new(&m, &p, &default_schedule(), &quad)?;
                    let exact: Vec<f64> = pts.iter().map(|x| spec.evaluate(x)).collect();
                    let scale = max_abs(&exact);
                    for (x, e) in pts.iter().zip(&exact) {
                        let r = si.apply(&u, x)?;
                        let n = r.samples.len();
                        let ratio = 0.5f64.powf(r.order.max(0.5));
                        let est = (r.samples[n - 1] - r.samples[n - 2]).abs() * ratio / (1.0 - ratio);
                        let coords: Vec<String> = x.coords().iter().map(|c| format!("{c:.6}")).collect();
                        rows.push(rb.row(
                            format!("form=singular;x={}", coords.join(" ")),
                            r.value,
                            *e,
                            est,
                            (r.value - e).abs() <= 5e-3 * scale,
                        ));
                    }
                }
                Ok(rows)
            }) as Instance
        })
        .collect();
    Ok(Plan { instances, normalization: c_s_norms(&s_grid) })
}

fn euclid_kernel(ctx: Ctx<'_>) -> LibResult<Plan<'_>> {
    let s_grid = ctx.cfg.s_or(&[0.25, 0.5, 0.75]);
    let radii = ctx.cfg.eps_or(&[0.3, 1.0, 3.0]);
    let mut instances: Vec<Instance> = vec![];
    for n in 1..=3usize {
        for &s in &s_grid {
            let radii = radii.clone();
            let name = ctx.name;
            instances.push(Box::new(move || {
                let rb = Rb { exp: name, man: format!("R^{n}"), s: Some(s), p: None, q: None };
                let quad = SubordinationQuad::default();
                radii
                    .iter()
                    .map(|&r| {
                        let (v, c) = euclidean_kernel_check(n, s, r, &quad)?;
                        Ok(rb.row(format!("n={n};r={r}"), v, c, 1e-14 * c, (v / c - 1.0).abs() < 1e-7))
                    })
                    .collect()
            }));
        }
    }
    let name = ctx.name;
    instances.push(Box::new(move || {
        let rb = Rb { exp: name, man: "R^1".into(), s: Some(0.5), p: None, q: None };
        let a = alpha(1, 0.5);
        Ok(vec![rb.row("alpha_{1,1/2}=1/pi", a, 1.0 / PI, 0.0, (a - 1.0 / PI).abs() < 1e-15)])
    }));
    Ok(Plan { instances, normalization: c_s_norms(&s_grid) })
}

fn dtn(ctx: Ctx<'_>) -> LibResult<Plan<'_>> {
    let m = Arc::new(ctx.manifold(ManifoldSpec::unit_circle())?);
    let s_grid = ctx.cfg.s_or(&[0.25, 0.5, 0.75]);
    let heights = ctx.cfg.eps_or(&[0.1, 0.5, 1.0, 2.0]);
    let b = Arc::new(m.basis(ctx.truncation(5))?);
    let f = Arc::new(first_mode(&b));
    let pts = Arc::new(sample_points(&m, 3, &mut ctx.rng(7))?);
    let rb = ctx.rb(&m);
    let mut instances: Vec<Instance> = s_grid
        .iter()
        .map(|&s| {
            let (m, f, pts, rb, heights) = (m.clone(), f.clone(), pts.clone(), rb.clone().s(s), heights.clone());
            Box::new(move || {
                let p = FracParams::new(s)?;
                let quad = SubordinationQuad::default();
                let mut rows = vec![];
                for &y in &heights {
                    let rule = m.quadrature(poisson_rule_order(&m, y))?;
                    let mut worst: f64 = 0.0;
                    for x in pts.iter() {
                        worst = worst.max((poisson_mass(&m, &p, x, y, &rule, &quad)? - 1.0).abs());
                    }
                    rows.push(rb.row_d(format!("form=poisson-mass;y={y}"), worst, 1e-8, -worst, 0.0, worst < 1e-8));
                }
                let spec = frac_apply_spectral(&p, &f);
                let exact: Vec<f64> = pts.iter().map(|x| spec.evaluate(x)).collect();
                let scale = max_abs(&exact);
                for (x, e) in pts.iter().zip(&exact) {
                    let r = dtn_value(&p, &f, x, &default_schedule(), &quad)?;
                    let n = r.samples.len();
                    let coords: Vec<String> = x.coords().iter().map(|c| format!("{c:.6}")).collect();
                    rows.push(rb.row(
                        format!("form=dtn;x={}", coords.join(" ")),
                        r.value,
                        *e,
                        (r.samples[n - 1] - r.value).abs(),
                        (r.value - e).abs() <= 1e-2 * scale,
                    ));
                }
                Ok(rows)
            }) as Instance
        })
        .collect();
    let rb = ctx.rb(&m).s(0.5);
    instances.push(Box::new(move || {
        let c = dtn_constant(0.5);
        Ok(vec![rb.row("c(1/2)", c, 1.0, 0.0, c == 1.0)])
    }));
    let mut norms = c_s_norms(&s_grid);
    norms.extend(s_grid.iter().map(|&s| Normalization { name: format!("c_dtn(s={s})"), value: dtn_constant(s) }));
    Ok(Plan { instances, normalization: norms })
}

fn s_limits(ctx: Ctx<'_>) -> LibResult<Plan<'_>> {
    let m = Arc::new(ctx.manifold(ManifoldSpec::unit_circle())?);
    let near1: Vec<f64> = ctx.cfg.s.iter().cloned().filter(|s| *s > 0.5).collect();
    let near0: Vec<f64> = ctx.cfg.s.iter().cloned().filter(|s| *s <= 0.5).collect();
    let near1 = if near1.is_empty() { vec![0.9, 0.95, 0.99] } else { near1 };
    let near0 = if near0.is_empty() { vec![0.1, 0.05, 0.01] } else { near0 };
    let b = Arc::new(m.basis(ctx.truncation(13))?);
    let rule = Arc::new(b.default_rule()?);
    let fam = random_family(&b, ctx.samples(3), ctx.cfg.seed);
    let rb = ctx.rb(&m);
    let lists = [("s->1", near1), ("s->0", near0)];
    let mut instances: Vec<Instance> = vec![];
    let decreasing = |name: &'static str, list: Vec<f64>, u: SpectralFunction, idx: usize, mode: Option<usize>| {
        let (rule, rb, b) = (rule.clone(), rb.clone(), b.clone());
        Box::new(move || {
            let d =
                if name == "s->1" { limit_defect_s1(&u, &list, &rule)? } else { limit_defect_s0(&u, &list, &rule)? };
            let mut rows = vec![];
            let mut prev = f64::INFINITY;
            for (&s, &v) in list.iter().zip(&d) {
                let rb = rb.clone().s(s);
                match mode {
                    None => rows.push(rb.row(format!("limit={name};u={idx};rhs=previous"), v, prev, 0.0, v < prev)),
                    Some(k) => {
                        let lam = b.eigenvalue(k);
                        let amp = u.max_abs(&rule);
                        let closed = if name == "s->1" { (lam - lam.powf(s)) * amp } else { (lam.powf(s) - 1.0) * amp };
                        rows.push(rb.row(
                            format!("limit={name};mode={k};rhs=closed-form"),
                            v,
                            closed,
                            0.0,
                            (v - closed).abs() < 1e-12,
                        ));
                    }
                }
                prev = v;
            }
            Ok(rows)
        }) as Instance
    };
    for (name, list) in &lists {
        for (i, u) in fam.iter().enumerate() {
            instances.push(decreasing(name, list.clone(), u.clone(), i, None));
        }
        let k = b.entries().iter().position(|e| e.eigenvalue > 1.0).unwrap_or(1).min(b.len() - 1);
        instances.push(decreasing(name, list.clone(), SpectralFunction::mode(b.clone(), k), 0, Some(k)));
    }
    Ok(Plan { instances, normalization: vec![] })
}

fn kernel_bounds(ctx: Ctx<'_>) -> LibResult<Plan<'_>> {
    let m = Arc::new(ctx.manifold(ManifoldSpec::unit_circle())?);
    let s_grid = ctx.cfg.s_or(&[0.3, 0.5]);
    let p_grid = ctx.cfg.p_or(&[1.5, 2.0]);
    let mut rng = ctx.rng(9);
    let n_pairs = ctx.samples(200);
    let pairs: LibResult<Vec<(Point, Point)>> = (0..n_pairs)
        .map(|_| {
            let v = sample_points(&m, 2, &mut rng)?;
            Ok((v[0], v[1]))
        })
        .collect();
    let pairs = Arc::new(pairs?);
    let b = Arc::new(m.basis(ctx.truncation(16))?);
    let fam = Arc::new(random_family(&b, 10, ctx.cfg.seed));
    let order = ctx.order(&m, 64, 16, 16);
    let rb = ctx.rb(&m);
    let instances = grid_sp(&s_grid, &p_grid)
        .into_iter()
        .map(|(s, p)| {
            let (m, pairs, fam, rb) = (m.clone(), pairs.clone(), fam.clone(), rb.clone().s(s).p(p));
            Box::new(move || {
                let wp = WspParams::for_manifold(&m, s, p)?;
                let quad = SubordinationQuad::default();
                let (lo, hi) = kernel_bound_ratio(&m, &wp, &pairs, &quad)?;
                let mut rows = vec![rb.row("form=sampled-band", lo, hi, 0.0, lo > 0.0 && hi.is_finite())];
                let rule = m.quadrature(order)?;
                let pq = PairQuadrature::new(&m, &rule, &wp, &quad)?;
                let pg = PairQuadrature::geodesic(&m, &rule, &wp)?;
                let (blo, bhi) = pq.kernel_band();
                let (blo, bhi) = (blo.powf(1.0 / p), bhi.powf(1.0 / p));
                for (i, u) in fam.iter().enumerate() {
                    let r = gagliardo_seminorm(u, &pq)? / geodesic_seminorm(u, &pg)?;
                    let tol = 1e-12;
                    rows.push(rb.row_d(
                        format!("form=seminorm-ratio;u={i};band={blo}..{bhi}"),
                        r,
                        bhi,
                        (r - blo).min(bhi - r),
                        SEMINORM_REL_ERR * r,
                        r >= blo * (1.0 - tol) && r <= bhi * (1.0 + tol),
                    ));
                }
                Ok(rows)
            }) as Instance
        })
        .collect();
    Ok(Plan { instances, normalization: c_sp_norms(&s_grid, &p_grid) })
}

fn poincare(ctx: Ctx<'_>) -> LibResult<Plan<'_>> {
    let m = Arc::new(ctx.manifold(ManifoldSpec::unit_circle())?);
    let s_grid = ctx.cfg.s_or(&[0.3, 0.5]);
    let p_grid = ctx.cfg.p_or(&[1.5, 2.0]);
    let b = Arc::new(m.basis(ctx.truncation(16))?);
    let fam = Arc::new(random_family(&b, ctx.samples(50), ctx.cfg.seed));
    let order = ctx.order(&m, 128, 24, 16);
    let rb = ctx.rb(&m);
    let instances = grid_sp(&s_grid, &p_grid)
        .into_iter()
        .map(|(s, p)| {
            let (m, fam, rb, b) = (m.clone(), fam.clone(), rb.clone().s(s).p(p), b.clone());
            Box::new(move || {
                let wp = WspParams::for_manifold(&m, s, p)?;
                let pq = PairQuadrature::with_order(&m, order, &wp, &SubordinationQuad::default())?;
                let mut sup: f64 = 0.0;
                for u in fam.iter() {
                    sup = sup.max(poincare_ratio(u, &pq)?);
                }
                let c_low = pq.kernel_band().0;
                let bound = poincare_proof_bound(&m, &wp, c_low);
                let mut rows = vec![rb.row(
                    format!("family={};rhs=jensen-bound", fam.len()),
                    sup,
                    bound,
                    SEMINORM_REL_ERR * sup,
                    sup <= bound,
                )];
                if p == 2.0 && matches!(m.spec(), ManifoldSpec::Circle { radius } if *radius == 1.0) {
                    let u = SpectralFunction::mode(b.clone(), 1).scaled(PI.sqrt());
                    let r = poincare_ratio(&u, &pq)?;
                    let e = std::f64::consts::FRAC_1_SQRT_2;
                    rows.push(rb.row("u=cos", r, e, SEMINORM_REL_ERR * r, (r - e).abs() < 2e-3));
                }
                Ok(rows)
            }) as Instance
        })
        .collect();
    Ok(Plan { instances, normalization: c_sp_norms(&s_grid, &p_grid) })
}

fn embedding(ctx: Ctx<'_>) -> LibResult<Plan<'_>> {
    let m = Arc::new(ctx.manifold(ManifoldSpec::unit_circle())?);
    let s_grid = ctx.cfg.s_or(&[0.4]);
    let p_grid = ctx.cfg.p_or(&[2.0]);
    let b = Arc::new(m.basis(ctx.truncation(16))?);
    let fam = Arc::new(random_family(&b, ctx.samples(20), ctx.cfg.seed));
    let order = ctx.order(&m, 128, 24, 16);
    let q_cfg = ctx.cfg.q.clone();
    let rb = ctx.rb(&m);
    let instances = grid_sp(&s_grid, &p_grid)
        .into_iter()
        .map(|(s, p)| {
            let (m, fam, rb, b, q_cfg) = (m.clone(), fam.clone(), rb.clone().s(s).p(p), b.clone(), q_cfg.clone());
            Box::new(move || {
                let wp = WspParams::for_manifold(&m, s, p)?;
                let ps = wp.require_subcritical()?;
                let qs = if q_cfg.is_empty() { vec![p, 0.5 * (p + ps), ps] } else { q_cfg.clone() };
                let pq = PairQuadrature::with_order(&m, order, &wp, &SubordinationQuad::default())?;
                let one = SpectralFunction::constant(b.clone(), 1.0);
                let v = m.volume();
                let mut rows = vec![];
                for q in qs {
                    let rb = rb.clone().q(q);
                    let r1 = embedding_ratio(&one, q, &pq)?;
                    let e = v.powf(1.0 / q - 1.0 / p);
                    rows.push(rb.row("u=1", r1, e, 1e-14 * e, (r1 / e - 1.0).abs() < 1e-10));
                    let mut sup: f64 = 0.0;
                    for u in fam.iter() {
                        sup = sup.max(embedding_ratio(u, q, &pq)?);
                    }
                    rows.push(rb.row(
                        format!("family={};rhs=u=1", fam.len()),
                        sup,
                        r1,
                        SEMINORM_REL_ERR * sup,
                        sup.is_finite(),
                    ));
                }
                Ok(rows)
            }) as Instance
        })
        .collect();
    Ok(Plan { instances, normalization: c_sp_norms(&s_grid, &p_grid) })
}

fn beta_program(ctx: Ctx<'_>) -> LibResult<Plan<'_>> {
    const A: f64 = 1.0;
    let m = Arc::new(ctx.manifold(ManifoldSpec::unit_circle())?);
    let s_grid = ctx.cfg.s_or(&[0.3]);
    let p_grid = ctx.cfg.p_or(&[2.0]);
    let b = Arc::new(m.basis(ctx.truncation(16))?);
    let fam = Arc::new(random_family(&b, ctx.samples(200), ctx.cfg.seed));
    let order = ctx.order(&m, 128, 32, 16);
    let rb = ctx.rb(&m);
    let instances = grid_sp(&s_grid, &p_grid)
        .into_iter()
        .map(|(s, p)| {
            let (m, fam, rb, b) = (m.clone(), fam.clone(), rb.clone().s(s).p(p), b.clone());
            Box::new(move || {
                let wp = WspParams::for_manifold(&m, s, p)?;
                let pq = PairQuadrature::with_order(&m, order, &wp, &SubordinationQuad::default())?;
                let one = SpectralFunction::constant(b.clone(), 1.0);
                let beta = beta_constant(&m, s, p)?;
                let bp = beta_power_constant(&m, s, p)?;
                let mut rows = vec![];
                let lin = linear_deficit(&one, A, beta, &pq, "u=1")?;
                rows.push(rb.row_d(
                    format!("form=linear;A={A};B={beta}"),
                    lin.lhs,
                    lin.rhs,
                    lin.deficit,
                    lin.err_est,
                    lin.deficit.abs() < 1e-12,
                ));
                let pow = power_deficit(&one, A, bp, &pq, "u=1")?;
                rows.push(rb.row_d(
                    format!("form=power;A={A};B={bp}"),
                    pow.lhs,
                    pow.rhs,
                    pow.deficit,
                    pow.err_est,
                    pow.deficit.abs() < 1e-12,
                ));
                let lin = linear_deficit(&one, A, 0.99 * beta, &pq, "u=1")?;
                rows.push(rb.row_d(
                    "form=linear;B=-1%;expect=violation",
                    lin.lhs,
                    lin.rhs,
                    lin.deficit,
                    lin.err_est,
                    lin.deficit < 0.0,
                ));
                let pow = power_deficit(&one, A, 0.99 * bp, &pq, "u=1")?;
                rows.push(rb.row_d(
                    "form=power;B=-1%;expect=violation",
                    pow.lhs,
                    pow.rhs,
                    pow.deficit,
                    pow.err_est,
                    pow.deficit < 0.0,
                ));
                let a = minimal_a(&fam, bp, &pq)?;
                rows.push(rb.row_d(
                    format!("form=minimal-A;family={};B={bp}", fam.len()),
                    a.unwrap_or(f64::NAN),
                    a.unwrap_or(f64::NAN),
                    0.0,
                    0.0,
                    a.is_some(),
                ));
                Ok(rows)
            }) as Instance
        })
        .collect();
    let mut norms = c_sp_norms(&s_grid, &p_grid);
    for &s in &s_grid {
        norms.push(Normalization { name: format!("beta(s={s})"), value: m.volume().powf(-s / m.dim() as f64) });
    }
    Ok(Plan { instances, normalization: norms })
}

fn nodal_family(ctx: &Ctx<'_>, count: usize) -> LibResult<(Arc<QuadratureRule>, Arc<Vec<Vec<f64>>>, String)> {
    let m = ctx.manifold(ManifoldSpec::unit_circle())?;
    let b = Arc::new(m.basis(ctx.truncation(13))?);
    let rule = m.quadrature(ctx.order(&m, 64, 16, 16))?;
    let fam: Vec<Vec<f64>> = random_family(&b, count, ctx.cfg.seed).iter().map(|u| u.nodal_values(&rule)).collect();
    Ok((Arc::new(rule), Arc::new(fam), m.id()))
}

fn bakry(ctx: Ctx<'_>) -> LibResult<Plan<'_>> {
    let (rule, fam, id) = nodal_family(&ctx, ctx.samples(200))?;
    let rb = Rb { exp: ctx.name, man: id, s: None, p: None, q: None };
    let instances = ctx
        .cfg
        .q_or(&[2.5, 3.0, 4.0])
        .into_iter()
        .map(|ps| {
            let (rule, fam, rb) = (rule.clone(), fam.clone(), rb.clone().q(ps));
            Box::new(move || {
                let mut worst = f64::INFINITY;
                for u in fam.iter() {
                    worst = worst.min(bakry_deficit(u, ps, &rule)?);
                }
                Ok(vec![rb.row_d(
                    format!("trials={};lhs=min-deficit", fam.len()),
                    worst,
                    -1e-9,
                    worst,
                    1e-14,
                    worst >= -1e-9,
                )])
            }) as Instance
        })
        .collect();
    Ok(Plan { instances, normalization: vec![] })
}

fn subcritical_split(ctx: Ctx<'_>) -> LibResult<Plan<'_>> {
    let (rule, fam, id) = nodal_family(&ctx, ctx.samples(200))?;
    let rb = Rb { exp: ctx.name, man: id, s: None, p: None, q: None };
    let p_grid = ctx.cfg.p_or(&[1.2, 1.5, 2.0]);
    let q_grid = ctx.cfg.q_or(&[1.5, 1.8, 2.0]);
    let mut instances: Vec<Instance> = vec![];
    for &p in &p_grid {
        for &ps in &q_grid {
            if ps < p {
                continue;
            }
            let (rule, fam, rb) = (rule.clone(), fam.clone(), rb.clone().p(p).q(ps));
            instances.push(Box::new(move || {
                let mut worst = f64::INFINITY;
                for u in fam.iter() {
                    worst = worst.min(subcritical_split_deficit(u, p, ps, &rule)?);
                }
                let c = split_constant(p, ps);
                Ok(vec![rb.row_d(
                    format!("trials={};C={c};lhs=min-deficit", fam.len()),
                    worst,
                    -1e-9,
                    worst,
                    1e-14,
                    worst >= -1e-9,
                )])
            }));
        }
    }
    for ps in q_grid {
        let rb = rb.clone().q(ps).man("R");
        let levels = ctx.cfg.eps_or(&[0.1, 1.0, 10.0]);
        instances.push(Box::new(move || {
            Ok(levels
                .iter()
                .map(|&s| {
                    let (num, closed) = sup_identity(ps, s);
                    rb.row(
                        format!("form=sup-identity;level={s}"),
                        num,
                        closed,
                        1e-12 * closed,
                        (num - closed).abs() < 1e-10,
                    )
                })
                .collect())
        }));
    }
    Ok(Plan { instances, normalization: vec![] })
}

fn counterexample(ctx: Ctx<'_>) -> LibResult<Plan<'_>> {
    let m = Arc::new(ctx.manifold(ManifoldSpec::standard_torus(3))?);
    let s_grid = ctx.cfg.s_or(&[0.3]);
    let p_grid = ctx.cfg.p_or(&[2.5]);
    let eps = ctx.cfg.eps_or(&(0..=10).map(|k| 1e-3 * 10f64.powf(k as f64 / 10.0)).collect::<Vec<_>>());
    let order = ctx.order(&m, 64, 32, 16);
    let trunc = ctx.truncation(7);
    let rb = ctx.rb(&m);
    let instances = grid_sp(&s_grid, &p_grid)
        .into_iter()
        .map(|(s, p)| {
            let (m, rb, eps) = (m.clone(), rb.clone().s(s).p(p), eps.clone());
            Box::new(move || {
                if p <= 2.0 {
                    return Err(Error::ExponentBelow2(p));
                }
                let b = Arc::new(m.basis(trunc)?);
                let rule = m.quadrature(order)?;
                let u = project(&b, |x| x.coords()[0].cos(), &rule)?;
                let wp = WspParams::for_manifold(&m, s, p)?;
                let ps = wp.require_subcritical()?;
                let pq = PairQuadrature::new(&m, &rule, &wp, &SubordinationQuad::default())?;
                let curve = counterexample_curve(&u, &eps, &pq)?;
                let v = m.volume();
                let vals = u.nodal_values(&rule);
                let m2 = rule.integrate(&vals.iter().map(|x| x * x).collect::<Vec<_>>());
                let limit = p * (ps - p) / 2.0 * v.powf(-wp.sp() / m.dim() as f64) * m2;
                let rb = rb.clone().q(ps);
                let mut rows: Vec<Row> = curve
                    .iter()
                    .map(|c| {
                        let r = c.d / (c.eps * c.eps);
                        rb.row(
                            format!("eps={};lhs=D/eps^2;rhs=limit", c.eps),
                            r,
                            limit,
                            0.0,
                            (r / limit - 1.0).abs() < 0.02,
                        )
                    })
                    .collect();
                let d_slope = loglog_slope(&curve.iter().map(|c| (c.eps, c.d)).collect::<Vec<_>>());
                rows.push(rb.row("lhs=slope(D)", d_slope, 2.0, 0.0, (d_slope - 2.0).abs() <= 0.02));
                let e_slope = loglog_slope(&curve.iter().map(|c| (c.eps, c.e / (c.eps * c.eps))).collect::<Vec<_>>());
                rows.push(rb.row("lhs=slope(E/eps^2)", e_slope, p - 2.0, 0.0, (e_slope - (p - 2.0)).abs() <= 0.02));
                Ok(rows)
            }) as Instance
        })
        .collect();
    Ok(Plan { instances, normalization: c_sp_norms(&s_grid, &p_grid) })
}

fn bubbles(ctx: Ctx<'_>) -> LibResult<Plan<'_>> {
    let m = Arc::new(ctx.manifold(ManifoldSpec::unit_circle())?);
    if !matches!(m.spec(), ManifoldSpec::Circle { radius } if *radius == 1.0) {
        return Err(Error::UnsupportedKind("bubbles runs on the unit circle".into()));
    }
    let s_grid = ctx.cfg.s_or(&[0.25]);
    let widths = ctx.cfg.eps_or(&[0.4, 0.2, 0.1, 0.05]);
    let order = ctx.order(&m, 128, 24, 16);
    let starts = ctx.samples(2);
    let seed = ctx.cfg.seed;
    let rb = ctx.rb(&m);
    let instances = s_grid
        .iter()
        .map(|&s| {
            let (m, rb, widths) = (m.clone(), rb.clone().s(s).p(2.0), widths.clone());
            Box::new(move || {
                let wp = WspParams::for_manifold(&m, s, 2.0)?;
                let pq = PairQuadrature::with_order(&m, order, &wp, &SubordinationQuad::default())?;
                let rb = rb.clone().q(wp.require_subcritical()?);
                let mut rows = vec![];
                for &eps in &widths {
                    let bp = BubbleParams::new(vec![0.0], eps, s)?;
                    let peak = bubble(&bp, &[0.0]);
                    let e = eps.powf(-bp.exponent());
                    rows.push(rb.row(format!("form=peak;eps={eps}"), peak, e, 0.0, (peak / e - 1.0).abs() < 1e-12));
                    // U_ε(εx) = ε^{-(n-2s)/2} U_1(x)
                    let unit = BubbleParams::new(vec![0.0], 1.0, s)?;
                    let lhs = bubble(&bp, &[0.3 * eps]);
                    let rhs = e * bubble(&unit, &[0.3]);
                    rows.push(rb.row(
                        format!("form=scaling;eps={eps}"),
                        lhs,
                        rhs,
                        0.0,
                        (lhs / rhs - 1.0).abs() < 1e-12,
                    ));
                }
                let trend = improved_constant_trend(&pq, &widths)?;
                rows.push(rb.row(
                    format!("form=improved-trend;factor={};slack=0.1", trend.factor),
                    trend.constrained,
                    trend.factor * trend.unconstrained * 1.1,
                    SEMINORM_REL_ERR * trend.constrained,
                    trend.holds(0.1),
                ));
                let rule = pq.rule();
                let mut best = f64::INFINITY;
                for &eps in &widths {
                    let bp = BubbleParams::new(vec![0.0], eps, s)?;
                    let v: LibResult<Vec<f64>> = rule.nodes().iter().map(|x| bubble_on(&m, &bp, x)).collect();
                    let mut v = v?;
                    let mean = rule.integrate(&v) / rule.total_weight();
                    v.iter_mut().for_each(|x| *x -= mean);
                    best = best.min(rayleigh_quotient_nodal(&v, &pq)?);
                }
                let mut q_opt = f64::INFINITY;
                for k in 0..starts {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(k as u64));
                    let init: Vec<f64> = (0..rule.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
                    q_opt = q_opt.min(minimize_quotient(&pq, &init, &MinimizeOptions::default())?.quotient);
                }
                rows.push(rb.row(
                    "form=bubble-vs-optimizer;lhs=best-bubble-Q;rhs=optimizer-Q;tol=10%",
                    best,
                    q_opt,
                    SEMINORM_REL_ERR * best,
                    (best / q_opt - 1.0).abs() <= 0.1,
                ));
                Ok(rows)
            }) as Instance
        })
        .collect();
    Ok(Plan { instances, normalization: c_sp_norms(&s_grid, &[2.0]) })
}

fn minimize(ctx: Ctx<'_>) -> LibResult<Plan<'_>> {
    let m = Arc::new(ctx.manifold(ManifoldSpec::standard_torus(2))?);
    let s_grid = ctx.cfg.s_or(&[0.4]);
    let p_grid = ctx.cfg.p_or(&[2.0]);
    let order = ctx.order(&m, 128, 24, 16);
    let starts = ctx.samples(4);
    let seed = ctx.cfg.seed;
    let b = Arc::new(m.basis(ctx.truncation(16))?);
    let rb = ctx.rb(&m);
    let instances = grid_sp(&s_grid, &p_grid)
        .into_iter()
        .map(|(s, p)| {
            let (m, rb, b) = (m.clone(), rb.clone().s(s).p(p), b.clone());
            Box::new(move || {
                let wp = WspParams::for_manifold(&m, s, p)?;
                let pq = PairQuadrature::with_order(&m, order, &wp, &SubordinationQuad::default())?;
                let rb = rb.clone().q(wp.require_subcritical()?);
                let n = pq.rule().len();
                let mut scale: f64 = 0.0;
                for u in random_family(&b, 3, seed) {
                    let q0 = rayleigh_quotient(&u, &pq)?;
                    for c in [1e-3, -2.0, 7.5] {
                        scale = scale.max((rayleigh_quotient(&u.scaled(c), &pq)? / q0 - 1.0).abs());
                    }
                }
                let mut rows = vec![rb.row_d("form=scale-invariance", scale, 1e-10, -scale, 0.0, scale < 1e-10)];
                let runs: LibResult<Vec<(f64, f64, usize)>> = (0..starts)
                    .map(|k| {
                        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1000 + k as u64));
                        let init: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
                        let r = minimize_quotient(&pq, &init, &MinimizeOptions::default())?;
                        let dirs: Vec<Vec<f64>> =
                            (0..8).map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
                        Ok((r.quotient, stationarity(&r.values, &dirs, 1e-5, &pq)?, r.steps))
                    })
                    .collect();
                let runs = runs?;
                let lo = runs.iter().map(|r| r.0).fold(f64::INFINITY, f64::min);
                let hi = runs.iter().map(|r| r.0).fold(0.0, f64::max);
                for (k, (q, st, steps)) in runs.iter().enumerate() {
                    rows.push(rb.row_d(
                        format!("form=start;start={k};steps={steps};rhs=best;err_est=stationarity"),
                        *q,
                        lo,
                        lo - q,
                        *st,
                        *st < 1e-4,
                    ));
                }
                let spread = (hi - lo) / lo;
                rows.push(rb.row_d(
                    format!("form=spread;starts={starts}"),
                    spread,
                    0.05,
                    0.05 - spread,
                    0.0,
                    spread < 0.05,
                ));
                Ok(rows)
            }) as Instance
        })
        .collect();
    Ok(Plan { instances, normalization: c_sp_norms(&s_grid, &p_grid) })
}

fn orthogonality(ctx: Ctx<'_>) -> LibResult<Plan<'_>> {
    let m = Arc::new(ctx.manifold(ManifoldSpec::unit_circle())?);
    let s_grid = ctx.cfg.s_or(&[0.4]);
    let p_grid = ctx.cfg.p_or(&[2.0]);
    let order = ctx.order(&m, 128, 24, 16);
    let trials = ctx.samples(100);
    let seed = ctx.cfg.seed;
    let kind = match m.spec() {
        ManifoldSpec::Circle { .. } => PartitionKind::CosSinCircle,
        ManifoldSpec::FlatTorus { .. } => PartitionKind::TorusAxis,
        _ => return Err(Error::UnsupportedKind("signed partitions exist on the circle and tori".into())),
    };
    let b = Arc::new(m.basis(ctx.truncation(25))?);
    let rb = ctx.rb(&m);
    let instances = grid_sp(&s_grid, &p_grid)
        .into_iter()
        .map(|(s, p)| {
            let (m, rb, b) = (m.clone(), rb.clone().s(s).p(p), b.clone());
            Box::new(move || {
                let wp = WspParams::for_manifold(&m, s, p)?;
                let ps = wp.require_subcritical()?;
                let rb = rb.clone().q(ps);
                let pq = PairQuadrature::with_order(&m, order, &wp, &SubordinationQuad::default())?;
                let rule = pq.rule();
                let part = make_partition(kind, &m, p, rule)?;
                // u(x + L/2 e_1) = u(x): only even frequencies along the first axis
                let period = match m.spec() {
                    ManifoldSpec::Circle { radius } => 2.0 * PI * radius,
                    ManifoldSpec::FlatTorus { periods } => periods[0],
                    _ => unreachable!(),
                };
                let mut tests: Vec<(String, Vec<f64>)> = vec![("u=1".into(), vec![1.0; rule.len()])];
                tests.push((
                    "u=|cos|".into(),
                    rule.nodes().iter().map(|x| (2.0 * PI * x.coords()[0] / period).cos().abs()).collect(),
                ));
                for (i, u) in random_family(&b, 5, seed).into_iter().enumerate() {
                    let even = u.map_coeffs(|k, c| match b.entries()[k].mode {
                        fsobolev::manifold::Mode::Fourier { freq, .. }
                            if (freq[0] * period / (2.0 * PI)).round() as i64 % 2 != 0 =>
                        {
                            0.0
                        }
                        _ => c,
                    });
                    tests.push((format!("u=even-random-{i}"), even.nodal_values(rule)));
                }
                let mut rows = vec![];
                for (label, u) in &tests {
                    let res = max_abs(&orthogonality_residuals(u, &part, ps, rule));
                    rows.push(rb.row_d(format!("form=residual;{label}"), res, 1e-10, -res, 0.0, res < 1e-10));
                    let split = split_identity_check(u, &part, &wp, rule)?;
                    rows.push(rb.row_d(format!("form=split-identity;{label}"), split, 1e-8, -split, 0.0, split < 1e-8));
                }
                let f = first_mode(&b);
                let mut worst = f64::INFINITY;
                let mut c_fd: f64 = 0.0;
                for u in random_family(&b, trials, seed.wrapping_add(1)) {
                    let r = leibniz_energy_bound(&u, &f, 0.5, &pq)?;
                    if r.deficit < worst {
                        worst = r.deficit;
                        c_fd = r.c_f_delta;
                    }
                }
                rows.push(rb.row_d(
                    format!("form=leibniz;delta=0.5;trials={trials};C={c_fd};lhs=min-deficit"),
                    worst,
                    -1e-8,
                    worst,
                    0.0,
                    worst >= -1e-8,
                ));
                Ok(rows)
            }) as Instance
        })
        .collect();
    Ok(Plan { instances, normalization: c_sp_norms(&s_grid, &p_grid) })
}

/// Runs the planned instances on the current pool, keeping grid order.
/// Numerical failures become failing rows; any other library error aborts.
pub fn execute(instances: &[Instance<'_>], experiment: &str, manifold: &str) -> Result<(Vec<Row>, bool), Error> {
    let results: Vec<LibResult<Vec<Row>>> = instances.par_iter().map(|f| f()).collect();
    let mut rows = vec![];
    let mut numerical = false;
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(v) => rows.extend(v),
            Err(e) if e.is_numerical() => {
                numerical = true;
                rows.push(Row {
                    experiment: experiment.into(),
                    manifold: manifold.into(),
                    s: None,
                    p: None,
                    q: None,
                    extra: format!("instance={i};error={e}"),
                    lhs: f64::NAN,
                    rhs: f64::NAN,
                    deficit: f64::NAN,
                    err_est: f64::NAN,
                    pass: false,
                });
            }
            Err(e) => return Err(e),
        }
    }
    Ok((rows, numerical))
}

//! Acceptance criteria 1–14. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails.

use std::f64::consts::PI;
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use fsobolev::constants::*;
use fsobolev::fractional_op::*;
use fsobolev::heat_kernel::*;
use fsobolev::manifold::{project, random_family};
use fsobolev::sobolev::*;
use fsobolev::{ManifoldSpec, Point, Result, SpectralFunction, SpectralManifold};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Result<Outcome> {
    Ok(Outcome { pass, detail })
}

fn circle() -> SpectralManifold {
    SpectralManifold::new(ManifoldSpec::unit_circle()).unwrap()
}

fn torus(n: usize) -> SpectralManifold {
    SpectralManifold::new(ManifoldSpec::standard_torus(n)).unwrap()
}

fn sphere() -> SpectralManifold {
    SpectralManifold::new(ManifoldSpec::unit_sphere()).unwrap()
}

fn sample_points(m: &SpectralManifold, count: usize, seed: u64) -> Vec<Point> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| match m.spec() {
            ManifoldSpec::Sphere2 { .. } => m.point(&[rng.gen_range(0.0..PI), rng.gen_range(0.0..2.0 * PI)]).unwrap(),
            _ => {
                let c: Vec<f64> = (0..m.coord_len()).map(|_| rng.gen_range(0.0..2.0 * PI)).collect();
                m.point(&c).unwrap()
            }
        })
        .collect()
}

fn quadratic_form(u: &SpectralFunction, s: f64) -> f64 {
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

fn c1_heat_mass() -> Result<Outcome> {
    let mut worst: f64 = 0.0;
    for m in [circle(), torus(2), sphere()] {
        let ev = HeatKernelEvaluator::for_min_time(&m, 0.05, DEFAULT_TAIL_TOL)?;
        for x in sample_points(&m, 3, 1) {
            for t in [0.05, 0.1, 1.0, 10.0] {
                worst = worst.max(ev.mass_defect(t, &x)?);
            }
        }
    }
    outcome(worst < 1e-8, format!("max |mass - 1| = {worst:.2e} on S1, T2, S2 (tol 1e-8)"))
}

fn c2_image_oracle() -> Result<Outcome> {
    let mut worst: f64 = 0.0;
    for m in [circle(), torus(2)] {
        let ev = HeatKernelEvaluator::for_min_time(&m, 0.05, DEFAULT_TAIL_TOL)?;
        let pts = sample_points(&m, 6, 2);
        for t in [0.05, 0.08, 0.15, 0.3, 0.6, 1.0, 2.0] {
            for x in &pts {
                for y in pts.iter().chain(std::iter::once(x)) {
                    let a = ev.heat_kernel(t, x, y)?;
                    let b = image_sum_kernel(&m, t, x, y)?;
                    worst = worst.max((a - b).abs());
                }
            }
        }
    }
    outcome(worst < 1e-10, format!("max |spectral - images| = {worst:.2e} for t in [0.05, 2] (tol 1e-10)"))
}

fn c3_rate() -> Result<Outcome> {
    let times: Vec<f64> = (0..=10).map(|k| 1.0 + 0.5 * k as f64).collect();
    let mut parts = vec![];
    let mut ok = true;
    for m in [circle(), sphere()] {
        let ev = HeatKernelEvaluator::for_min_time(&m, 1.0, DEFAULT_TAIL_TOL)?;
        let rule = ev.basis().default_rule()?;
        let x = sample_points(&m, 1, 3).remove(0);
        let (rate, _) = ev.large_time_rate(&times, &x, &rule)?;
        let l1 = m.first_eigenvalue();
        let rel = (rate / l1 - 1.0).abs();
        ok &= rel < 0.05;
        parts.push(format!("{}: rate {rate:.4} vs {l1} ({:.2}%)", m.id(), 100.0 * rel));
    }
    outcome(ok, format!("{} (tol 5%)", parts.join("; ")))
}

fn c4_scalar_identity() -> Result<Outcome> {
    let q = SubordinationQuad::default();
    let mut worst: f64 = 0.0;
    for lam in [1.0, 4.0, 10.0] {
        for s in [0.25, 0.5, 0.75] {
            worst = worst.max(scalar_identity_defect(s, lam, &q)?);
        }
    }
    outcome(worst < 1e-8, format!("max |λ^s - c_s∫(1-e^(-λt))t^(-1-s)dt| = {worst:.2e} (tol 1e-8)"))
}

fn c5_euclidean() -> Result<Outcome> {
    let q = SubordinationQuad::default();
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for n in [1, 2, 3] {
        for s in [0.25, 0.5, 0.75] {
            for r in [0.3, 1.0, 3.0] {
                let (v, c) = euclidean_kernel_check(n, s, r, &q)?;
                worst = worst.max((v / c - 1.0).abs());
                count += 1;
            }
        }
    }
    let a = (alpha(1, 0.5) - 1.0 / PI).abs();
    outcome(
        worst < 1e-7 && count == 27 && a < 1e-15,
        format!("max rel err {worst:.2e} over {count} points (tol 1e-7); |α_(1,1/2) - 1/π| = {a:.1e}"),
    )
}

fn c6_definition_agreement() -> Result<Outcome> {
    let m = circle();
    let b = Arc::new(m.basis(13)?);
    let u = random_family(&b, 1, 61).remove(0);
    let xs: Vec<Point> = (0..8).map(|k| m.point(&[0.1 + k as f64 * PI / 4.0]).unwrap()).collect();
    let q = SubordinationQuad::default();
    let mut parts = vec![];
    let mut ok = true;
    for s in [0.25, 0.5, 0.75] {
        let p = FracParams::new(s)?;
        let spec = frac_apply_spectral(&p, &u);
        let si = SingularIntegrator::new(&m, &p, &default_schedule(), &q)?;
        let exact: Vec<f64> = xs.iter().map(|x| spec.evaluate(x)).collect();
        let scale = exact.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let mut worst: f64 = 0.0;
        for (x, e) in xs.iter().zip(&exact) {
            let r = si.apply(&u, x)?;
            worst = worst.max((r.value - e).abs() / scale);
        }
        ok &= worst < 5e-3;
        parts.push(format!("s={s}: {worst:.2e}"));
    }
    outcome(ok, format!("max rel diff at 8 points, {} (tol 5e-3)", parts.join(", ")))
}

fn c7_quadratic_form() -> Result<Outcome> {
    let q = SubordinationQuad::default();
    let mut worst: f64 = 0.0;
    let cases = [(circle(), 256usize), (torus(2), 48), (sphere(), 48)];
    for (m, order) in &cases {
        let b = Arc::new(m.basis(16)?);
        let fam = random_family(&b, 2, 71);
        for s in [0.25, 0.5, 0.75] {
            let wp = WspParams::for_manifold(m, s, 2.0)?;
            let pq = PairQuadrature::with_order(m, *order, &wp, &q)?;
            for u in &fam {
                worst = worst.max((0.5 * pq.energy(u) / quadratic_form(u, s) - 1.0).abs());
            }
        }
    }
    let m = circle();
    let b = Arc::new(m.basis(3)?);
    let u = SpectralFunction::mode(b, 1).scaled(PI.sqrt());
    let mut cos_worst: f64 = 0.0;
    for s in [0.25, 0.5, 0.75] {
        let wp = WspParams::new(s, 2.0, 1)?;
        let pq = PairQuadrature::with_order(&m, 256, &wp, &q)?;
        cos_worst = cos_worst.max((gagliardo_seminorm(&u, &pq)?.powi(2) / (2.0 * PI) - 1.0).abs());
    }
    outcome(
        worst < 1e-3 && cos_worst < 1e-3,
        format!("max rel err {worst:.2e} on S1, T2, S2 random families; cos θ vs 2π {cos_worst:.2e} (tol 1e-3)"),
    )
}

fn c8_extension() -> Result<Outcome> {
    let m = circle();
    let q = SubordinationQuad::default();
    let mut mass: f64 = 0.0;
    for s in [0.25, 0.5, 0.75] {
        let p = FracParams::new(s)?;
        for y in [0.1, 0.5, 1.0, 2.0] {
            let rule = m.quadrature(poisson_rule_order(&m, y))?;
            for x in sample_points(&m, 2, 8) {
                mass = mass.max((poisson_mass(&m, &p, &x, y, &rule, &q)? - 1.0).abs());
            }
        }
    }
    let b = Arc::new(m.basis(5)?);
    let cosf = SpectralFunction::mode(b, 1).scaled(PI.sqrt());
    let mut dtn: f64 = 0.0;
    for s in [0.25, 0.5, 0.75] {
        let p = FracParams::new(s)?;
        for x in [0.0, 0.7, 2.0] {
            let x = m.point(&[x])?;
            let r = dtn_value(&p, &cosf, &x, &default_schedule(), &q)?;
            dtn = dtn.max((r.value - cosf.evaluate(&x)).abs());
        }
    }
    let c_half = dtn_constant(0.5);
    outcome(
        mass < 1e-8 && dtn < 1e-2 && c_half == 1.0,
        format!("Poisson mass err {mass:.2e} (tol 1e-8); DtN rel err {dtn:.2e} (tol 1e-2); c(1/2) = {c_half}"),
    )
}

fn c9_s_limits() -> Result<Outcome> {
    let mut ok = true;
    let mut parts = vec![];
    for m in [circle(), torus(2)] {
        let b = Arc::new(m.basis(13)?);
        let rule = b.default_rule()?;
        for u in random_family(&b, 3, 91) {
            let d1 = limit_defect_s1(&u, &[0.9, 0.95, 0.99], &rule)?;
            let d0 = limit_defect_s0(&u, &[0.1, 0.05, 0.01], &rule)?;
            ok &= d1.windows(2).all(|w| w[1] < w[0]) && d0.windows(2).all(|w| w[1] < w[0]);
        }
        parts.push(format!("{} decreasing: {ok}", m.id()));
    }
    // closed forms on a single mode with λ = 4
    let m = circle();
    let b = Arc::new(m.basis(7)?);
    let rule = m.quadrature(64)?;
    let mode = SpectralFunction::mode(b, 3).scaled(PI.sqrt());
    let mut closed: f64 = 0.0;
    let s1 = [0.9, 0.95, 0.99];
    for (v, s) in limit_defect_s1(&mode, &s1, &rule)?.iter().zip(s1) {
        closed = closed.max((v - (4.0 - 4f64.powf(s))).abs());
    }
    let s0 = [0.1, 0.05, 0.01];
    for (v, s) in limit_defect_s0(&mode, &s0, &rule)?.iter().zip(s0) {
        closed = closed.max((v - (4f64.powf(s) - 1.0)).abs());
    }
    outcome(
        ok && closed < 1e-12,
        format!("{}; closed-form mode defects err {closed:.1e} (tol 1e-12)", parts.join(", ")),
    )
}

fn c10_beta() -> Result<Outcome> {
    let q = SubordinationQuad::default();
    let mut eq: f64 = 0.0;
    let mut violated = true;
    for (m, order) in [(circle(), 32usize), (torus(2), 16), (sphere(), 16)] {
        let b = Arc::new(m.basis(4)?);
        let one = SpectralFunction::constant(b, 1.0);
        for (s, p) in [(0.3, 2.0), (0.4, 1.5), (0.2, 3.0)] {
            let wp = WspParams::for_manifold(&m, s, p)?;
            let pq = PairQuadrature::with_order(&m, order, &wp, &q)?;
            let beta = beta_constant(&m, s, p)?;
            let lin = linear_deficit(&one, 5.0, beta, &pq, "u=1")?;
            let pow = power_deficit(&one, 5.0, beta.powf(p), &pq, "u=1")?;
            eq = eq.max(lin.deficit.abs()).max(pow.deficit.abs());
            violated &= linear_deficit(&one, 5.0, 0.99 * beta, &pq, "u=1")?.deficit < 0.0;
            violated &= power_deficit(&one, 5.0, 0.99 * beta.powf(p), &pq, "u=1")?.deficit < 0.0;
        }
    }
    outcome(
        eq < 1e-12 && violated,
        format!("max |deficit| at B = Vol^(-s/n): {eq:.1e} (tol 1e-12); B - 1% violates: {violated}"),
    )
}

fn c11_subcritical() -> Result<Outcome> {
    let q = SubordinationQuad::default();
    let mut parts = vec![];
    let mut ok = true;
    for (m, order) in [(circle(), 128usize), (torus(2), 32)] {
        let b = Arc::new(m.basis(16)?);
        let fam = random_family(&b, 200, 111);
        for s in [0.3, 0.5] {
            for p in [1.5, 2.0] {
                if s * p >= m.dim() as f64 {
                    parts.push(format!("{} (s={s},p={p}) outside sp<n", m.id()));
                    continue;
                }
                let wp = WspParams::for_manifold(&m, s, p)?;
                let pq = PairQuadrature::with_order(&m, order, &wp, &q)?;
                let a = minimal_a(&fam, beta_power_constant(&m, s, p)?, &pq)?;
                ok &= a.is_some();
                parts.push(format!("{} (s={s},p={p}) A={}", m.id(), a.map_or("none".into(), |a| format!("{a:.3}"))));
            }
        }
    }
    let m = circle();
    let b = Arc::new(m.basis(13)?);
    let rule = m.quadrature(64)?;
    let fam: Vec<Vec<f64>> = random_family(&b, 200, 112).iter().map(|u| u.nodal_values(&rule)).collect();
    let mut bakry = f64::INFINITY;
    for ps in [2.5, 3.0, 4.0] {
        for u in &fam {
            bakry = bakry.min(bakry_deficit(u, ps, &rule)?);
        }
    }
    let mut split = f64::INFINITY;
    for (ps, p) in [(1.5, 1.2), (1.8, 1.5), (2.0, 1.5), (2.0, 2.0)] {
        for u in &fam {
            split = split.min(subcritical_split_deficit(u, p, ps, &rule)?);
        }
    }
    let mut sup: f64 = 0.0;
    for ps in [1.2, 1.5, 1.8, 2.0] {
        for s in [0.1, 1.0, 10.0] {
            let (num, closed) = sup_identity(ps, s);
            sup = sup.max((num - closed).abs());
        }
    }
    ok &= bakry >= -1e-9 && split >= -1e-9 && sup < 1e-10;
    outcome(
        ok,
        format!(
            "minimal A: {}; min Bakry deficit {bakry:.2e}, min split deficit {split:.2e} (tol -1e-9); sup identity err {sup:.1e} (tol 1e-10)",
            parts.join(", ")
        ),
    )
}

fn c12_counterexample() -> Result<Outcome> {
    let m = torus(3);
    let b = Arc::new(m.basis(7)?);
    let rule = m.quadrature(16)?;
    let u = project(&b, |x| x.coords()[0].cos(), &rule)?;
    let (s, p) = (0.3, 2.5);
    let wp = WspParams::for_manifold(&m, s, p)?;
    let ps = wp.p_star().unwrap();
    let pq = PairQuadrature::new(&m, &rule, &wp, &SubordinationQuad::default())?;
    let eps: Vec<f64> = (0..=10).map(|k| 1e-3 * 10f64.powf(k as f64 / 10.0)).collect();
    let curve = counterexample_curve(&u, &eps, &pq)?;
    let v = m.volume();
    let limit = p * (ps - p) / 2.0 * v.powf(-s * p / 3.0) * (v / 2.0);
    let d_slope = loglog_slope(&curve.iter().map(|c| (c.eps, c.d)).collect::<Vec<_>>());
    let e_slope = loglog_slope(&curve.iter().map(|c| (c.eps, c.e / (c.eps * c.eps))).collect::<Vec<_>>());
    let ratio = curve[0].d / (curve[0].eps * curve[0].eps) / limit;
    let ok = (d_slope - 2.0).abs() <= 0.02 && (ratio - 1.0).abs() < 0.02 && (e_slope - (p - 2.0)).abs() <= 0.02;
    outcome(
        ok,
        format!(
            "D slope {d_slope:.4} (2 ± 0.02); D/ε² / limit = {ratio:.5} (within 2%); E/ε² slope {e_slope:.4} ({} ± 0.02)",
            p - 2.0
        ),
    )
}

fn c13_orthogonality() -> Result<Outcome> {
    let m = circle();
    let rule = m.quadrature(128)?;
    let wp = WspParams::new(0.4, 2.0, 1)?;
    let ps = wp.p_star().unwrap();
    let part = make_partition(PartitionKind::CosSinCircle, &m, 2.0, &rule)?;
    let b = Arc::new(m.basis(25)?);
    let mut tests: Vec<Vec<f64>> = vec![
        vec![1.0; rule.len()],
        rule.nodes().iter().map(|x| x.coords()[0].cos().abs()).collect(),
        rule.nodes().iter().map(|x| 1.0 + 0.5 * (2.0 * x.coords()[0]).cos()).collect(),
    ];
    // band-limited functions with even frequencies only: u(θ + π) = u(θ)
    for u in random_family(&b, 20, 131) {
        let even = u.map_coeffs(|k, c| match b.entries()[k].mode {
            fsobolev::manifold::Mode::Fourier { freq, .. } if (freq[0] as i64) % 2 != 0 => 0.0,
            _ => c,
        });
        tests.push(even.nodal_values(&rule));
    }
    let mut res: f64 = 0.0;
    let mut split: f64 = 0.0;
    for u in &tests {
        for r in orthogonality_residuals(u, &part, ps, &rule) {
            res = res.max(r.abs());
        }
        split = split.max(split_identity_check(u, &part, &wp, &rule)?);
    }
    let bl = Arc::new(m.basis(13)?);
    let pq = PairQuadrature::with_order(&m, 64, &wp, &SubordinationQuad::default())?;
    let cosf = SpectralFunction::mode(bl.clone(), 1).scaled(PI.sqrt());
    let mut leib = f64::INFINITY;
    for u in random_family(&bl, 100, 132) {
        leib = leib.min(leibniz_energy_bound(&u, &cosf, 0.5, &pq)?.deficit);
    }
    outcome(
        res < 1e-10 && split < 1e-8 && leib >= -1e-8,
        format!("max residual {res:.1e} (tol 1e-10); split identity err {split:.1e} (tol 1e-8); min Leibniz deficit {leib:.3e} over 100 trials (tol -1e-8)"),
    )
}

fn c14_optimizer() -> Result<Outcome> {
    let m = torus(2);
    let wp = WspParams::new(0.4, 2.0, 2)?;
    let pq = PairQuadrature::with_order(&m, 24, &wp, &SubordinationQuad::default())?;
    let n = pq.rule().len();
    let b = Arc::new(m.basis(16)?);
    let mut scale: f64 = 0.0;
    for u in random_family(&b, 5, 141) {
        let q0 = rayleigh_quotient(&u, &pq)?;
        for c in [1e-3, -2.0, 7.5] {
            scale = scale.max((rayleigh_quotient(&u.scaled(c), &pq)? / q0 - 1.0).abs());
        }
    }
    let runs: Vec<Result<(Minimizer, f64)>> = (0..4u64)
        .into_par_iter()
        .map(|seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(1400 + seed);
            let init: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let r = minimize_quotient(&pq, &init, &MinimizeOptions::default())?;
            let dirs: Vec<Vec<f64>> = (0..8).map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
            let st = stationarity(&r.values, &dirs, 1e-5, &pq)?;
            Ok((r, st))
        })
        .collect();
    let runs: Vec<(Minimizer, f64)> = runs.into_iter().collect::<Result<_>>()?;
    let qs: Vec<f64> = runs.iter().map(|r| r.0.quotient).collect();
    let lo = qs.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = qs.iter().cloned().fold(0.0, f64::max);
    let spread = (hi - lo) / lo;
    let stat = runs.iter().map(|r| r.1).fold(0.0, f64::max);
    outcome(
        scale < 1e-10 && stat < 1e-4 && spread < 0.05,
        format!("scale invariance {scale:.1e} (tol 1e-10); stationarity {stat:.1e} (tol 1e-4); multi-start spread {:.2e} over 4 starts, Q* = {lo:.6} (tol 5%)", spread),
    )
}

fn main() {
    let criteria: Vec<(u32, &str, fn() -> Result<Outcome>)> = vec![
        (1, "heat-kernel mass", c1_heat_mass),
        (2, "wrapped-Gaussian oracle", c2_image_oracle),
        (3, "large-time rate", c3_rate),
        (4, "scalar subordination identity", c4_scalar_identity),
        (5, "Euclidean closed form", c5_euclidean),
        (6, "spectral vs singular-integral definition", c6_definition_agreement),
        (7, "quadratic-form identity", c7_quadratic_form),
        (8, "extension and Dirichlet-to-Neumann", c8_extension),
        (9, "s-limits", c9_s_limits),
        (10, "optimal L^p constant", c10_beta),
        (11, "subcritical inequality and convexity inequalities", c11_subcritical),
        (12, "p > 2 counterexample", c12_counterexample),
        (13, "orthogonality machinery", c13_orthogonality),
        (14, "optimizer sanity", c14_optimizer),
    ];
    let total = Instant::now();
    let mut failed = vec![];
    for (id, name, f) in criteria {
        let t = Instant::now();
        let o = f().unwrap_or_else(|e| Outcome { pass: false, detail: format!("error: {e}") });
        println!(
            "{} [{id:>2}] {name}: {} ({:.1}s)",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            t.elapsed().as_secs_f64()
        );
        if !o.pass {
            failed.push(id);
        }
    }
    println!("acceptance: {} of 14 passed in {:.1}s", 14 - failed.len(), total.elapsed().as_secs_f64());
    if !failed.is_empty() {
        std::process::exit(1);
    }
}

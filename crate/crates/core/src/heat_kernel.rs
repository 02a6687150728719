//! Heat kernel and heat semigroup.
//!
//! [`HeatKernelEvaluator`] sums the truncated eigen-expansion and certifies the
//! discarded tail. On the circle and flat tori, times below
//! [`SMALL_TIME`] switch to the image (wrapped-Gaussian) sum.
//! [`heat_kernel_series`] is an unchecked closed-form path used inside time
//! integrals.

use std::f64::consts::PI;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::manifold::{
    sphere_angle, ManifoldSpec, Point, QuadratureRule, SpectralBasis, SpectralFunction, SpectralManifold,
};

/// Below this time the spectral sum is replaced by image sums (flat cases)
/// or rejected (sphere).
pub const SMALL_TIME: f64 = 0.05;

/// Default absolute tail tolerance.
pub const DEFAULT_TAIL_TOL: f64 = 1e-12;

/// Truncated spectral heat kernel with a certified tail.
#[derive(Clone, Debug)]
pub struct HeatKernelEvaluator {
    basis: Arc<SpectralBasis>,
    tol: f64,
}

impl HeatKernelEvaluator {
    /// Evaluator with a fixed truncation K (rounded up to a complete
    /// eigenvalue cluster).
    pub fn with_truncation(m: &SpectralManifold, k: usize, tol: f64) -> Result<Self> {
        if !(tol > 0.0) {
            return Err(Error::InvalidParameter(format!("tail tolerance {tol} must be positive")));
        }
        let k = m.complete_truncation(k)?;
        Ok(HeatKernelEvaluator { basis: Arc::new(m.basis(k)?), tol })
    }

    /// Smallest complete truncation whose tail at `t_min` is within `tol`.
    pub fn for_min_time(m: &SpectralManifold, t_min: f64, tol: f64) -> Result<Self> {
        if !(t_min > 0.0) {
            return Err(Error::InvalidParameter(format!("t_min = {t_min} must be positive")));
        }
        let t_min = t_min.max(SMALL_TIME);
        let mut k = 1;
        loop {
            let kk = m.complete_truncation(k)?;
            if tail_bound(m, t_min, kk) <= tol {
                return Self::with_truncation(m, kk, tol);
            }
            k = kk + 1;
        }
    }

    /// Default evaluator: valid down to t = 0.05 at tolerance 1e-12.
    pub fn default_for(m: &SpectralManifold) -> Result<Self> {
        Self::for_min_time(m, SMALL_TIME, DEFAULT_TAIL_TOL)
    }

    pub fn manifold(&self) -> &SpectralManifold {
        self.basis.manifold()
    }

    pub fn basis(&self) -> &Arc<SpectralBasis> {
        &self.basis
    }

    pub fn truncation(&self) -> usize {
        self.basis.len()
    }

    pub fn tolerance(&self) -> f64 {
        self.tol
    }

    /// Certified bound on the discarded spectral tail at time t.
    pub fn tail(&self, t: f64) -> f64 {
        tail_bound(self.manifold(), t, self.basis.len())
    }

    fn uses_images(&self, t: f64) -> bool {
        t < SMALL_TIME && !matches!(self.manifold().spec(), ManifoldSpec::Sphere2 { .. })
    }

    fn check_time(&self, t: f64) -> Result<()> {
        if !(t > 0.0) || !t.is_finite() {
            return Err(Error::InvalidParameter(format!("time {t} must be positive")));
        }
        if self.uses_images(t) {
            return Ok(());
        }
        if t < SMALL_TIME {
            return Err(Error::OutOfValidatedRange(t));
        }
        let bound = self.tail(t);
        if bound > self.tol {
            return Err(Error::TailBoundViolation { t, bound, tol: self.tol });
        }
        Ok(())
    }

    /// e^{-tλ_k} φ_k(x), the left factor of the spectral sum.
    fn damped_row(&self, t: f64, x: &Point) -> Vec<f64> {
        let mut phi = vec![0.0; self.basis.len()];
        self.basis.eval_all(x, &mut phi);
        for (v, e) in phi.iter_mut().zip(self.basis.entries()) {
            *v *= (-t * e.eigenvalue).exp();
        }
        phi
    }

    /// K_M(t, x, y).
    pub fn heat_kernel(&self, t: f64, x: &Point, y: &Point) -> Result<f64> {
        self.check_time(t)?;
        if self.uses_images(t) {
            return image_sum_kernel(self.manifold(), t, x, y);
        }
        // canonical argument order keeps the sum bitwise symmetric
        let (p, q) =
            if x.coords().partial_cmp(y.coords()) == Some(std::cmp::Ordering::Greater) { (y, x) } else { (x, y) };
        let a = self.damped_row(t, p);
        let mut b = vec![0.0; self.basis.len()];
        self.basis.eval_all(q, &mut b);
        Ok(a.iter().zip(&b).map(|(u, v)| u * v).sum())
    }

    /// K_M(t, x, y_j) for every node y_j of a rule.
    pub fn kernel_row(&self, t: f64, x: &Point, rule: &QuadratureRule) -> Result<Vec<f64>> {
        self.check_time(t)?;
        if self.uses_images(t) {
            return rule.nodes().iter().map(|y| image_sum_kernel(self.manifold(), t, x, y)).collect();
        }
        let a = self.damped_row(t, x);
        let mut b = vec![0.0; self.basis.len()];
        Ok(rule
            .nodes()
            .iter()
            .map(|y| {
                self.basis.eval_all(y, &mut b);
                a.iter().zip(&b).map(|(p, q)| p * q).sum()
            })
            .collect())
    }

    /// |∫ K_M(t, x, y) dμ(y) - 1| under the basis default rule.
    pub fn mass_defect(&self, t: f64, x: &Point) -> Result<f64> {
        let rule = self.basis.default_rule()?;
        self.mass_defect_with(t, x, &rule)
    }

    pub fn mass_defect_with(&self, t: f64, x: &Point, rule: &QuadratureRule) -> Result<f64> {
        let row = self.kernel_row(t, x, rule)?;
        Ok((rule.integrate(&row) - 1.0).abs())
    }

    /// K_M(t,x,y) · t^{n/2} · exp(d(x,y)² / (C t)).
    pub fn gaussian_bound_ratio(&self, t: f64, x: &Point, y: &Point, c: f64) -> Result<f64> {
        if !(c > 0.0) {
            return Err(Error::InvalidParameter(format!("Gaussian constant C = {c} must be positive")));
        }
        let k = self.heat_kernel(t, x, y)?;
        let m = self.manifold();
        let d = m.distance(x, y);
        Ok(k * t.powf(m.dim() as f64 / 2.0) * (d * d / (c * t)).exp())
    }

    /// sup_y |K_M(t, x, y) - 1/Vol| over the nodes of a rule.
    pub fn sup_deviation(&self, t: f64, x: &Point, rule: &QuadratureRule) -> Result<f64> {
        let inv_v = 1.0 / self.manifold().volume();
        Ok(self.kernel_row(t, x, rule)?.iter().fold(0.0f64, |a, k| a.max((k - inv_v).abs())))
    }

    /// Fitted decay rate and prefactor of sup_y |K_M(t,x,y) - 1/Vol| over a
    /// time grid (least squares in log scale). Homogeneous manifolds make the
    /// base point x irrelevant.
    pub fn large_time_rate(&self, times: &[f64], x: &Point, rule: &QuadratureRule) -> Result<(f64, f64)> {
        if times.len() < 2 {
            return Err(Error::InvalidParameter("need at least two times".into()));
        }
        let mut pts = Vec::with_capacity(times.len());
        for &t in times {
            pts.push((t, self.sup_deviation(t, x, rule)?.ln()));
        }
        let (slope, intercept) = linear_fit(&pts);
        Ok((-slope, intercept.exp()))
    }
}

/// Least-squares line through (x, y) points; returns (slope, intercept).
pub fn linear_fit(pts: &[(f64, f64)]) -> (f64, f64) {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Coefficient-wise damping u_k ↦ e^{-tλ_k} u_k.
pub fn heat_apply(t: f64, u: &SpectralFunction) -> Result<SpectralFunction> {
    if !(t >= 0.0) {
        return Err(Error::InvalidParameter(format!("time {t} must be nonnegative")));
    }
    let basis = u.basis().clone();
    Ok(u.map_coeffs(|k, c| (-t * basis.eigenvalue(k)).exp() * c))
}

/// Upper bound on Σ_{k ≥ K} e^{-tλ_k} sup|φ_k(x)φ_k(y)| summed over clusters;
/// K should close an eigenvalue cluster.
pub fn tail_bound(m: &SpectralManifold, t: f64, k: usize) -> f64 {
    let v = m.volume();
    match m.spec() {
        ManifoldSpec::Circle { radius } => {
            // modes 0 | ±1 | ±2 …: index k sits in frequency ceil(k/2)
            let first = ((k + 1) / 2) as f64;
            let mut sum = 0.0;
            let mut j = first;
            loop {
                let term = (-t * j * j / (radius * radius)).exp();
                sum += term;
                if term < 1e-30 * sum.max(1e-300) || term == 0.0 {
                    break;
                }
                j += 1.0;
            }
            // leftover half-cluster when k is even
            let half =
                if k % 2 == 0 && k > 0 { (-t * ((k / 2) as f64).powi(2) / (radius * radius)).exp() } else { 0.0 };
            (2.0 * sum + half) / v
        }
        ManifoldSpec::FlatTorus { periods } => {
            let theta: f64 = periods.iter().map(|l| theta_1d(t, 2.0 * PI / l)).product();
            let partial: f64 = m.eigenvalues(k).map(|ev| ev.iter().map(|l| (-t * l).exp()).sum()).unwrap_or(0.0);
            ((theta - partial) / v).max(0.0)
        }
        ManifoldSpec::Sphere2 { radius } => {
            let r2 = radius * radius;
            let mut l = 0usize;
            let mut count = 0usize;
            while count + 2 * l + 1 <= k {
                count += 2 * l + 1;
                l += 1;
            }
            // a partially kept degree counts as fully discarded
            let mut sum = 0.0;
            let mut first = true;
            loop {
                let lf = l as f64;
                let term = (2.0 * lf + 1.0) * (-t * lf * (lf + 1.0) / r2).exp();
                sum += term;
                if !first && (term < 1e-20 * sum || term == 0.0) {
                    let lf = lf + 1.0;
                    sum += (-t * lf * (lf + 1.0) / r2).exp() * r2 / t;
                    break;
                }
                first = false;
                l += 1;
            }
            sum / (4.0 * PI * r2)
        }
    }
}

/// Σ_{m∈Z} e^{-t(ξm)²}.
fn theta_1d(t: f64, xi: f64) -> f64 {
    if t * xi * xi < 1.0 {
        // Poisson dual form
        let a = PI * PI / (t * xi * xi);
        let mut s = 1.0;
        let mut j = 1.0;
        loop {
            let term = (-a * j * j).exp();
            s += 2.0 * term;
            if term < 1e-18 {
                break;
            }
            j += 1.0;
        }
        s * (PI / t).sqrt() / xi
    } else {
        let mut s = 1.0;
        let mut j = 1.0;
        loop {
            let term = (-t * xi * xi * j * j).exp();
            s += 2.0 * term;
            if term < 1e-18 {
                break;
            }
            j += 1.0;
        }
        s
    }
}

/// Heat kernel of R / LZ at signed separation d.
pub fn periodic_heat_1d(t: f64, d: f64, period: f64) -> f64 {
    periodic_heat_1d_with(t, d, period, true)
}

/// As [`periodic_heat_1d`]; `images = false` forces the cosine series at
/// every t.
pub fn periodic_heat_1d_with(t: f64, d: f64, period: f64, images: bool) -> f64 {
    let xi = 2.0 * PI / period;
    if images && t * xi * xi < 1.0 {
        let d = d.rem_euclid(period);
        let d = if d > 0.5 * period { d - period } else { d };
        let reach = (160.0 * t).sqrt() / period + 1.0;
        let mmax = reach.ceil() as i64;
        let norm = 1.0 / (4.0 * PI * t).sqrt();
        let mut s = 0.0;
        for m in -mmax..=mmax {
            let z = d + m as f64 * period;
            s += (-z * z / (4.0 * t)).exp();
        }
        norm * s
    } else {
        let mut s = 1.0;
        let mut k = 1.0;
        loop {
            let damp = (-t * xi * xi * k * k).exp();
            s += 2.0 * damp * (xi * k * d).cos();
            if damp < 1e-18 * s.abs().max(1.0) {
                break;
            }
            k += 1.0;
        }
        s / period
    }
}

/// Image-sum (wrapped Gaussian) heat kernel on the circle or a flat torus.
pub fn image_sum_kernel(m: &SpectralManifold, t: f64, x: &Point, y: &Point) -> Result<f64> {
    let disp = m.displacement(x, y).ok_or_else(|| Error::UnsupportedKind("image sums need a flat manifold".into()))?;
    Ok(flat_kernel_from_disp(m, t, &disp))
}

fn flat_kernel_from_disp(m: &SpectralManifold, t: f64, disp: &[f64; 3]) -> f64 {
    match m.spec() {
        ManifoldSpec::Circle { radius } => periodic_heat_1d(t, disp[0], 2.0 * PI * radius),
        ManifoldSpec::FlatTorus { periods } => {
            periods.iter().enumerate().map(|(i, l)| periodic_heat_1d(t, disp[i], *l)).product()
        }
        ManifoldSpec::Sphere2 { .. } => unreachable!(),
    }
}

/// Zonal Legendre series for the sphere heat kernel at central angle γ.
pub fn sphere_heat_zonal(t: f64, cos_gamma: f64, radius: f64) -> f64 {
    let r2 = radius * radius;
    let lmax = ((42.0 * r2 / t).sqrt().ceil() as usize).max(8);
    let mut p0 = 1.0;
    let mut p1 = cos_gamma;
    let mut s = (1.0) + 3.0 * (-2.0 * t / r2).exp() * p1;
    for l in 2..=lmax {
        let lf = l as f64;
        let p2 = ((2.0 * lf - 1.0) * cos_gamma * p1 - (lf - 1.0) * p0) / lf;
        s += (2.0 * lf + 1.0) * (-t * lf * (lf + 1.0) / r2).exp() * p2;
        p0 = p1;
        p1 = p2;
    }
    s / (4.0 * PI * r2)
}

/// Closed-form heat kernel without tail certification; valid for all t > 0
/// on flat manifolds and used by the time quadratures on every manifold.
pub fn heat_kernel_series(m: &SpectralManifold, t: f64, x: &Point, y: &Point) -> f64 {
    match m.spec() {
        ManifoldSpec::Sphere2 { radius } => sphere_heat_zonal(t, sphere_angle(x, y).cos(), *radius),
        _ => flat_kernel_from_disp(m, t, &m.displacement(x, y).expect("flat manifold")),
    }
}

/// Same as [`heat_kernel_series`] from a precomputed separation: per-axis
/// displacement for flat manifolds, cos of the central angle (in `sep[0]`)
/// on the sphere.
pub fn heat_kernel_from_separation(m: &SpectralManifold, t: f64, sep: &[f64; 3]) -> f64 {
    match m.spec() {
        ManifoldSpec::Sphere2 { radius } => sphere_heat_zonal(t, sep[0], *radius),
        _ => flat_kernel_from_disp(m, t, sep),
    }
}

/// Separation record consumed by [`heat_kernel_from_separation`].
pub fn separation(m: &SpectralManifold, x: &Point, y: &Point) -> [f64; 3] {
    match m.spec() {
        ManifoldSpec::Sphere2 { .. } => [sphere_angle(x, y).cos(), 0.0, 0.0],
        _ => m.displacement(x, y).expect("flat manifold"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn circle() -> SpectralManifold {
        SpectralManifold::new(ManifoldSpec::unit_circle()).unwrap()
    }

    // Independent oracle: direct wrapped Gaussian on the unit circle.
    fn wrapped(t: f64, d: f64) -> f64 {
        (-50..=50)
            .map(|m| {
                let z = d + 2.0 * PI * m as f64;
                (-z * z / (4.0 * t)).exp()
            })
            .sum::<f64>()
            / (4.0 * PI * t).sqrt()
    }

    #[test]
    fn circle_matches_wrapped_gaussian() {
        let ev = HeatKernelEvaluator::default_for(&circle()).unwrap();
        let m = circle();
        let o = m.point(&[0.0]).unwrap();
        assert!((ev.heat_kernel(0.5, &o, &o).unwrap() - wrapped(0.5, 0.0)).abs() < 1e-10);
        for &t in &[0.05, 0.2, 1.0, 2.0] {
            for &d in &[0.3, 1.7, PI] {
                let y = m.point(&[d]).unwrap();
                assert!((ev.heat_kernel(t, &o, &y).unwrap() - wrapped(t, d)).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn large_time_limit_is_inverse_volume() {
        let ev = HeatKernelEvaluator::default_for(&circle()).unwrap();
        let m = circle();
        let v = ev.heat_kernel(40.0, &m.point(&[0.0]).unwrap(), &m.point(&[2.0]).unwrap()).unwrap();
        assert!((v - 0.15915494309189535).abs() < 1e-15);
    }

    #[test]
    fn sphere_tail_terminates_at_large_time() {
        let m = SpectralManifold::new(ManifoldSpec::unit_sphere()).unwrap();
        for t in [10.0, 100.0, 1e4] {
            let b = tail_bound(&m, t, 576);
            assert!(b.is_finite() && b >= 0.0 && b < 1e-100);
        }
    }

    #[test]
    fn mass_defects() {
        let c = circle();
        let ev = HeatKernelEvaluator::default_for(&c).unwrap();
        assert!(ev.mass_defect(1.0, &c.point(&[0.4]).unwrap()).unwrap() < 1e-10);
        let s = SpectralManifold::new(ManifoldSpec::unit_sphere()).unwrap();
        let ev = HeatKernelEvaluator::for_min_time(&s, 0.5, 1e-12).unwrap();
        assert!(ev.mass_defect(0.5, &s.point(&[0.0, 0.0]).unwrap()).unwrap() < 1e-8);
        let t = SpectralManifold::new(ManifoldSpec::standard_torus(2)).unwrap();
        let ev = HeatKernelEvaluator::for_min_time(&t, 2.0, 1e-13).unwrap();
        assert!(ev.mass_defect(2.0, &t.point(&[1.0, 2.0]).unwrap()).unwrap() < 1e-12);
    }

    #[test]
    fn truncation_errors() {
        let c = circle();
        let ev = HeatKernelEvaluator::with_truncation(&c, 3, 1e-12).unwrap();
        let o = c.point(&[0.0]).unwrap();
        assert!(matches!(ev.heat_kernel(0.1, &o, &o), Err(Error::TailBoundViolation { .. })));
        let s = SpectralManifold::new(ManifoldSpec::unit_sphere()).unwrap();
        let ev = HeatKernelEvaluator::for_min_time(&s, 0.05, 1e-12).unwrap();
        let n = s.point(&[0.0, 0.0]).unwrap();
        assert_eq!(ev.heat_kernel(0.01, &n, &n), Err(Error::OutOfValidatedRange(0.01)));
    }

    #[test]
    fn small_time_uses_images() {
        let c = circle();
        let ev = HeatKernelEvaluator::default_for(&c).unwrap();
        let o = c.point(&[0.0]).unwrap();
        let y = c.point(&[0.2]).unwrap();
        assert!((ev.heat_kernel(0.01, &o, &y).unwrap() / wrapped(0.01, 0.2) - 1.0).abs() < 1e-13);
    }

    #[test]
    fn heat_apply_examples() {
        let c = circle();
        let b = Arc::new(c.basis(9).unwrap());
        // index 3 is cos 2θ
        let u = SpectralFunction::mode(b.clone(), 3);
        let v = heat_apply(0.7, &u).unwrap();
        assert!((v.coeffs()[3] - (-2.8f64).exp()).abs() < 1e-16);
        let one = SpectralFunction::constant(b.clone(), 3.0);
        assert_eq!(heat_apply(5.0, &one).unwrap().coeffs(), one.coeffs());
        assert_eq!(heat_apply(0.0, &u).unwrap().coeffs(), u.coeffs());
    }

    #[test]
    fn zonal_series_matches_basis_sum() {
        let s = SpectralManifold::new(ManifoldSpec::Sphere2 { radius: 1.3 }).unwrap();
        let ev = HeatKernelEvaluator::for_min_time(&s, 0.1, 1e-13).unwrap();
        let x = s.point(&[0.3, 1.0]).unwrap();
        let y = s.point(&[2.0, 4.0]).unwrap();
        for &t in &[0.1, 0.5, 2.0] {
            let a = ev.heat_kernel(t, &x, &y).unwrap();
            let b = heat_kernel_series(&s, t, &x, &y);
            assert!((a - b).abs() < 1e-12, "t={t}: {a} vs {b}");
        }
    }

    #[test]
    fn torus_product_matches_basis_sum() {
        let m = SpectralManifold::new(ManifoldSpec::FlatTorus { periods: vec![2.0 * PI, 3.0] }).unwrap();
        let ev = HeatKernelEvaluator::default_for(&m).unwrap();
        let x = m.point(&[0.1, 0.2]).unwrap();
        let y = m.point(&[4.0, 2.5]).unwrap();
        for &t in &[0.05, 0.3, 1.5] {
            let a = ev.heat_kernel(t, &x, &y).unwrap();
            let b = heat_kernel_series(&m, t, &x, &y);
            assert!((a - b).abs() < 1e-11, "t={t}: {a} vs {b}");
        }
    }

    #[test]
    fn chapman_kolmogorov_under_quadrature() {
        let c = circle();
        let ev = HeatKernelEvaluator::for_min_time(&c, 0.2, 1e-13).unwrap();
        let rule = ev.basis().default_rule().unwrap();
        let x = c.point(&[0.3]).unwrap();
        let y = c.point(&[2.2]).unwrap();
        let a = ev.kernel_row(0.2, &x, &rule).unwrap();
        let b = ev.kernel_row(0.35, &y, &rule).unwrap();
        let lhs: f64 = rule.weights().iter().zip(a.iter().zip(&b)).map(|(w, (p, q))| w * p * q).sum();
        assert!((lhs - ev.heat_kernel(0.55, &x, &y).unwrap()).abs() < 1e-8);
    }

    #[test]
    fn large_time_rate_circle_and_sphere() {
        let c = circle();
        let ev = HeatKernelEvaluator::default_for(&c).unwrap();
        let rule = c.quadrature(64).unwrap();
        let times: Vec<f64> = (0..11).map(|i| 1.0 + 0.5 * i as f64).collect();
        let (rate, _) = ev.large_time_rate(&times, &c.point(&[0.0]).unwrap(), &rule).unwrap();
        assert!((rate - 1.0).abs() < 0.05);
    }

    #[test]
    fn gaussian_ratio_bounded() {
        let c = circle();
        let ev = HeatKernelEvaluator::default_for(&c).unwrap();
        let o = c.point(&[0.0]).unwrap();
        let y = c.point(&[PI / 2.0]).unwrap();
        let r: Vec<f64> = [0.05, 0.1, 0.2].iter().map(|&t| ev.gaussian_bound_ratio(t, &o, &y, 4.0).unwrap()).collect();
        // with C = 4 the ratio tends to (4π)^{-1/2}
        for v in r {
            assert!(v > 0.2 && v < 0.3, "{v}");
        }
    }

    proptest! {
        #[test]
        fn symmetric_and_positive(a in 0.0..std::f64::consts::TAU, b in 0.0..std::f64::consts::TAU, t in 0.05..5.0f64) {
            let c = circle();
            let ev = HeatKernelEvaluator::default_for(&c).unwrap();
            let x = c.point(&[a]).unwrap();
            let y = c.point(&[b]).unwrap();
            let k1 = ev.heat_kernel(t, &x, &y).unwrap();
            let k2 = ev.heat_kernel(t, &y, &x).unwrap();
            prop_assert_eq!(k1, k2);
            prop_assert!(k1 > 0.0);
        }

        #[test]
        fn semigroup_exact_in_coefficients(t in 0.0..3.0f64, s in 0.0..3.0f64, seed in 0u64..1000) {
            let c = circle();
            let b = Arc::new(c.basis(15).unwrap());
            let u = crate::manifold::random_family(&b, 1, seed).pop().unwrap();
            let lhs = heat_apply(t, &heat_apply(s, &u).unwrap()).unwrap();
            let rhs = heat_apply(t + s, &u).unwrap();
            for (k, (p, q)) in lhs.coeffs().iter().zip(rhs.coeffs()).enumerate() {
                // exp of a rounded argument: relative error grows with tλ
                let slack = 1e-15 * (1.0 + (t + s) * b.eigenvalue(k));
                prop_assert!((p - q).abs() <= slack * q.abs());
            }
        }
    }
}

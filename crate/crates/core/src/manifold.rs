//! Closed manifolds with analytic spectra: the circle, flat tori of dimension
//! one to three, and the round 2-sphere.
//!
//! A [`SpectralManifold`] exposes volume, geodesic distance, an orthonormal
//! eigenbasis of the Laplace–Beltrami operator and product quadrature rules.
//! Functions are carried as truncated eigen-expansions ([`SpectralFunction`]).

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::gauss_legendre;

/// Declarative description of a supported manifold.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ManifoldSpec {
    Circle { radius: f64 },
    FlatTorus { periods: Vec<f64> },
    Sphere2 { radius: f64 },
}

impl ManifoldSpec {
    pub fn unit_circle() -> Self {
        ManifoldSpec::Circle { radius: 1.0 }
    }

    /// Torus with all periods 2π.
    pub fn standard_torus(n: usize) -> Self {
        ManifoldSpec::FlatTorus { periods: vec![2.0 * PI; n] }
    }

    pub fn unit_sphere() -> Self {
        ManifoldSpec::Sphere2 { radius: 1.0 }
    }
}

impl fmt::Display for ManifoldSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ManifoldSpec::Circle { radius } => write!(f, "circle(R={radius})"),
            ManifoldSpec::FlatTorus { periods } => {
                let p: Vec<String> = periods.iter().map(|l| format!("{l}")).collect();
                write!(f, "torus({})", p.join(","))
            }
            ManifoldSpec::Sphere2 { radius } => write!(f, "sphere2(R={radius})"),
        }
    }
}

/// A point in canonical reduced coordinates.
///
/// Circle: `[θ]` with θ in [0, 2π). Torus: `[x_1, …, x_n]` with x_i in [0, L_i).
/// Sphere: `[θ, φ]` (colatitude in [0, π], longitude in [0, 2π)).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Point {
    c: [f64; 3],
    len: usize,
}

impl Point {
    pub fn coords(&self) -> &[f64] {
        &self.c[..self.len]
    }
}

/// A validated manifold model.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralManifold {
    spec: ManifoldSpec,
}

impl SpectralManifold {
    pub fn new(spec: ManifoldSpec) -> Result<Self> {
        match &spec {
            ManifoldSpec::Circle { radius } | ManifoldSpec::Sphere2 { radius } => {
                check_length(*radius)?;
            }
            ManifoldSpec::FlatTorus { periods } => {
                if periods.is_empty() || periods.len() > 3 {
                    return Err(Error::UnsupportedKind(format!("flat torus of dimension {}", periods.len())));
                }
                for &l in periods {
                    check_length(l)?;
                }
            }
        }
        Ok(SpectralManifold { spec })
    }

    pub fn spec(&self) -> &ManifoldSpec {
        &self.spec
    }

    /// Short identifier used in reports.
    pub fn id(&self) -> String {
        self.spec.to_string()
    }

    pub fn dim(&self) -> usize {
        match &self.spec {
            ManifoldSpec::Circle { .. } => 1,
            ManifoldSpec::FlatTorus { periods } => periods.len(),
            ManifoldSpec::Sphere2 { .. } => 2,
        }
    }

    /// Number of chart coordinates of a point.
    pub fn coord_len(&self) -> usize {
        match &self.spec {
            ManifoldSpec::Circle { .. } => 1,
            ManifoldSpec::FlatTorus { periods } => periods.len(),
            ManifoldSpec::Sphere2 { .. } => 2,
        }
    }

    pub fn volume(&self) -> f64 {
        match &self.spec {
            ManifoldSpec::Circle { radius } => 2.0 * PI * radius,
            ManifoldSpec::FlatTorus { periods } => periods.iter().product(),
            ManifoldSpec::Sphere2 { radius } => 4.0 * PI * radius * radius,
        }
    }

    pub fn diameter(&self) -> f64 {
        match &self.spec {
            ManifoldSpec::Circle { radius } | ManifoldSpec::Sphere2 { radius } => PI * radius,
            ManifoldSpec::FlatTorus { periods } => 0.5 * periods.iter().map(|l| l * l).sum::<f64>().sqrt(),
        }
    }

    /// Smallest positive eigenvalue.
    pub fn first_eigenvalue(&self) -> f64 {
        match &self.spec {
            ManifoldSpec::Circle { radius } => 1.0 / (radius * radius),
            ManifoldSpec::FlatTorus { periods } => {
                periods.iter().map(|l| (2.0 * PI / l).powi(2)).fold(f64::INFINITY, f64::min)
            }
            ManifoldSpec::Sphere2 { radius } => 2.0 / (radius * radius),
        }
    }

    /// Measure of a geodesic ball of radius r (r below the injectivity radius).
    pub fn ball_measure(&self, r: f64) -> f64 {
        match &self.spec {
            ManifoldSpec::Circle { .. } => 2.0 * r,
            ManifoldSpec::FlatTorus { periods } => match periods.len() {
                1 => 2.0 * r,
                2 => PI * r * r,
                _ => 4.0 / 3.0 * PI * r * r * r,
            },
            ManifoldSpec::Sphere2 { radius } => 2.0 * PI * radius * radius * (1.0 - (r / radius).cos()),
        }
    }

    /// Builds a point, reducing periodic coordinates.
    pub fn point(&self, coords: &[f64]) -> Result<Point> {
        if coords.len() != self.coord_len() {
            return Err(Error::PointOutOfChart(format!(
                "expected {} coordinates, got {}",
                self.coord_len(),
                coords.len()
            )));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::PointOutOfChart("non-finite coordinate".into()));
        }
        let mut c = [0.0; 3];
        match &self.spec {
            ManifoldSpec::Circle { .. } => c[0] = reduce(coords[0], 2.0 * PI),
            ManifoldSpec::FlatTorus { periods } => {
                for (i, l) in periods.iter().enumerate() {
                    c[i] = reduce(coords[i], *l);
                }
            }
            ManifoldSpec::Sphere2 { .. } => {
                if !(0.0..=PI).contains(&coords[0]) {
                    return Err(Error::PointOutOfChart(format!("colatitude {} outside [0, pi]", coords[0])));
                }
                c[0] = coords[0];
                c[1] = reduce(coords[1], 2.0 * PI);
            }
        }
        Ok(Point { c, len: coords.len() })
    }

    fn check_point(&self, x: &Point) -> Result<()> {
        if x.len != self.coord_len() {
            return Err(Error::PointOutOfChart(format!(
                "point has {} coordinates, manifold needs {}",
                x.len,
                self.coord_len()
            )));
        }
        Ok(())
    }

    /// Geodesic distance; the points must belong to this manifold.
    pub fn distance(&self, x: &Point, y: &Point) -> f64 {
        match &self.spec {
            ManifoldSpec::Circle { radius } => {
                let d = (x.c[0] - y.c[0]).abs() % (2.0 * PI);
                radius * d.min(2.0 * PI - d)
            }
            ManifoldSpec::FlatTorus { periods } => {
                let n = periods.len();
                let mut best = f64::INFINITY;
                // 3^n nearest lattice representatives
                for code in 0..3usize.pow(n as u32) {
                    let mut c = code;
                    let mut d2 = 0.0;
                    for (i, l) in periods.iter().enumerate() {
                        let shift = (c % 3) as f64 - 1.0;
                        c /= 3;
                        let d = x.c[i] - y.c[i] + shift * l;
                        d2 += d * d;
                    }
                    best = best.min(d2);
                }
                best.sqrt()
            }
            ManifoldSpec::Sphere2 { radius } => radius * sphere_angle(x, y),
        }
    }

    /// Signed minimal-image displacement y - x per axis (circle: arc length).
    /// Not defined on the sphere.
    pub fn displacement(&self, x: &Point, y: &Point) -> Option<[f64; 3]> {
        let mut out = [0.0; 3];
        match &self.spec {
            ManifoldSpec::Circle { radius } => {
                out[0] = radius * wrap_signed(y.c[0] - x.c[0], 2.0 * PI);
            }
            ManifoldSpec::FlatTorus { periods } => {
                for (i, l) in periods.iter().enumerate() {
                    out[i] = wrap_signed(y.c[i] - x.c[i], *l);
                }
            }
            ManifoldSpec::Sphere2 { .. } => return None,
        }
        Some(out)
    }

    /// First K eigen-pairs as a basis.
    pub fn basis(&self, k: usize) -> Result<SpectralBasis> {
        if k == 0 {
            return Err(Error::InvalidParameter("truncation K must be positive".into()));
        }
        let entries = match &self.spec {
            ManifoldSpec::Circle { radius } => circle_entries(*radius, k),
            ManifoldSpec::FlatTorus { periods } => torus_entries(periods, k),
            ManifoldSpec::Sphere2 { radius } => sphere_entries(*radius, k),
        };
        let l_max = entries
            .iter()
            .map(|e| match e.mode {
                Mode::Harmonic { l, .. } => l,
                _ => 0,
            })
            .max()
            .unwrap_or(0);
        Ok(SpectralBasis { manifold: self.clone(), entries, l_max })
    }

    /// Eigenvalues of the first K modes.
    pub fn eigenvalues(&self, k: usize) -> Result<Vec<f64>> {
        Ok(self.basis(k)?.eigenvalues())
    }

    /// Smallest K' ≥ K whose last mode closes an eigenvalue cluster.
    pub fn complete_truncation(&self, k: usize) -> Result<usize> {
        let b = self.basis(k + 64)?;
        let mut kk = k.max(1);
        while kk < b.len()
            && (b.entries[kk].eigenvalue - b.entries[kk - 1].eigenvalue).abs()
                <= 1e-12 * b.entries[kk].eigenvalue.max(1.0)
        {
            kk += 1;
        }
        Ok(kk)
    }

    /// Quadrature rule of the given order (points per dimension; colatitude
    /// nodes on the sphere, with twice as many longitudes).
    pub fn quadrature(&self, order: usize) -> Result<QuadratureRule> {
        if order < 4 {
            return Err(Error::OrderTooSmall(order));
        }
        match &self.spec {
            ManifoldSpec::Circle { radius } => {
                let h = 2.0 * PI / order as f64;
                let nodes = (0..order).map(|j| Point { c: [j as f64 * h, 0.0, 0.0], len: 1 }).collect();
                Ok(QuadratureRule {
                    nodes,
                    weights: vec![radius * h; order],
                    layout: Layout::Uniform { shape: vec![order], spacing: vec![radius * h] },
                })
            }
            ManifoldSpec::FlatTorus { periods } => {
                let n = periods.len();
                let total = order.pow(n as u32);
                let spacing: Vec<f64> = periods.iter().map(|l| l / order as f64).collect();
                let w: f64 = spacing.iter().product();
                let mut nodes = Vec::with_capacity(total);
                for idx in 0..total {
                    let mut c = [0.0; 3];
                    let mut r = idx;
                    for i in (0..n).rev() {
                        c[i] = (r % order) as f64 * spacing[i];
                        r /= order;
                    }
                    nodes.push(Point { c, len: n });
                }
                Ok(QuadratureRule {
                    nodes,
                    weights: vec![w; total],
                    layout: Layout::Uniform { shape: vec![order; n], spacing },
                })
            }
            ManifoldSpec::Sphere2 { radius } => {
                let (x, w) = gauss_legendre(order);
                let n_phi = 2 * order;
                let dphi = 2.0 * PI / n_phi as f64;
                let mut nodes = Vec::with_capacity(order * n_phi);
                let mut weights = Vec::with_capacity(order * n_phi);
                // colatitude ascending: cos θ descending
                for i in (0..order).rev() {
                    let theta = x[i].acos();
                    for j in 0..n_phi {
                        nodes.push(Point { c: [theta, j as f64 * dphi, 0.0], len: 2 });
                        weights.push(radius * radius * w[i] * dphi);
                    }
                }
                Ok(QuadratureRule { nodes, weights, layout: Layout::SphereProduct { n_theta: order, n_phi } })
            }
        }
    }
}

/// Checked geodesic distance.
pub fn geodesic_distance(m: &SpectralManifold, x: &Point, y: &Point) -> Result<f64> {
    m.check_point(x)?;
    m.check_point(y)?;
    Ok(m.distance(x, y))
}

fn check_length(l: f64) -> Result<()> {
    if l.is_finite() && l > 0.0 {
        Ok(())
    } else {
        Err(Error::NonpositiveLength(l))
    }
}

fn reduce(x: f64, period: f64) -> f64 {
    let r = x.rem_euclid(period);
    if r >= period {
        0.0
    } else {
        r
    }
}

fn wrap_signed(d: f64, period: f64) -> f64 {
    let r = d.rem_euclid(period);
    if r > 0.5 * period {
        r - period
    } else {
        r
    }
}

/// Central angle between two sphere points.
pub(crate) fn sphere_angle(x: &Point, y: &Point) -> f64 {
    let a = unit_vector(x);
    let b = unit_vector(y);
    let cross = [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]];
    let cn = (cross[0] * cross[0] + cross[1] * cross[1] + cross[2] * cross[2]).sqrt();
    let dot = a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
    cn.atan2(dot)
}

fn unit_vector(x: &Point) -> [f64; 3] {
    let (st, ct) = x.c[0].sin_cos();
    let (sp, cp) = x.c[1].sin_cos();
    [st * cp, st * sp, ct]
}

/// Shape of a single eigenfunction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Mode {
    Constant,
    /// sqrt(2/V) cos(ξ·x) or sqrt(2/V) sin(ξ·x) in chart coordinates.
    Fourier {
        freq: [f64; 3],
        sine: bool,
    },
    /// Real spherical harmonic; m < 0 selects the sine family.
    Harmonic {
        l: usize,
        m: i64,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct BasisEntry {
    pub index: usize,
    pub eigenvalue: f64,
    pub mode: Mode,
}

/// Orthonormal eigenbasis truncated to its first K modes.
#[derive(Clone, Debug)]
pub struct SpectralBasis {
    manifold: SpectralManifold,
    entries: Vec<BasisEntry>,
    l_max: usize,
}

fn circle_entries(radius: f64, k: usize) -> Vec<BasisEntry> {
    let mut out = Vec::with_capacity(k);
    out.push(BasisEntry { index: 0, eigenvalue: 0.0, mode: Mode::Constant });
    let mut freq = 1;
    while out.len() < k {
        let lam = (freq * freq) as f64 / (radius * radius);
        for sine in [false, true] {
            if out.len() < k {
                out.push(BasisEntry {
                    index: out.len(),
                    eigenvalue: lam,
                    mode: Mode::Fourier { freq: [freq as f64, 0.0, 0.0], sine },
                });
            }
        }
        freq += 1;
    }
    out
}

fn torus_entries(periods: &[f64], k: usize) -> Vec<BasisEntry> {
    let n = periods.len();
    let xi: Vec<f64> = periods.iter().map(|l| 2.0 * PI / l).collect();
    let mut cutoff = xi.iter().fold(0.0f64, |a, &b| a.max(b * b)) * (k as f64);
    loop {
        let bounds: Vec<i64> = xi.iter().map(|x| (cutoff.sqrt() / x).floor() as i64).collect();
        let mut cands: Vec<(f64, [i64; 3])> = Vec::new();
        let mut m = [0i64; 3];
        for i in 0..n {
            m[i] = -bounds[i];
        }
        loop {
            let lam: f64 = (0..n).map(|i| (m[i] as f64 * xi[i]).powi(2)).sum();
            if lam <= cutoff {
                cands.push((lam, m));
            }
            // odometer increment
            let mut i = n;
            loop {
                if i == 0 {
                    break;
                }
                i -= 1;
                if m[i] < bounds[i] {
                    m[i] += 1;
                    break;
                }
                m[i] = -bounds[i];
                if i == 0 {
                    i = usize::MAX;
                    break;
                }
            }
            if i == usize::MAX {
                break;
            }
        }
        if cands.len() >= k {
            cands.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            // snap rounding-level differences so ties fall back to lexicographic order
            let mut snapped = cands.clone();
            for i in 1..snapped.len() {
                let prev = snapped[i - 1].0;
                if (snapped[i].0 - prev).abs() <= 1e-12 * prev.max(1.0) {
                    snapped[i].0 = prev;
                }
            }
            snapped.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            return snapped
                .into_iter()
                .take(k)
                .enumerate()
                .map(|(index, (lam, m))| {
                    let first = m[..n].iter().find(|&&v| v != 0).copied();
                    let mode = match first {
                        None => Mode::Constant,
                        Some(f) => {
                            let sign = if f > 0 { 1.0 } else { -1.0 };
                            let mut freq = [0.0; 3];
                            for i in 0..n {
                                freq[i] = sign * m[i] as f64 * xi[i];
                            }
                            Mode::Fourier { freq, sine: f < 0 }
                        }
                    };
                    BasisEntry { index, eigenvalue: lam, mode }
                })
                .collect();
        }
        cutoff *= 2.0;
    }
}

fn sphere_entries(radius: f64, k: usize) -> Vec<BasisEntry> {
    let mut out = Vec::with_capacity(k);
    let mut l = 0usize;
    while out.len() < k {
        let lam = (l * (l + 1)) as f64 / (radius * radius);
        for m in -(l as i64)..=(l as i64) {
            if out.len() < k {
                out.push(BasisEntry { index: out.len(), eigenvalue: lam, mode: Mode::Harmonic { l, m } });
            }
        }
        l += 1;
    }
    out
}

/// Fully normalized associated Legendre values P̄_l^m(cos θ) for l ≤ l_max,
/// stored at `l*(l+1)/2 + m`; orthonormal against e^{imφ}/... on the unit sphere.
pub(crate) fn normalized_legendre(l_max: usize, theta: f64, out: &mut Vec<f64>) {
    let (st, ct) = theta.sin_cos();
    let size = (l_max + 1) * (l_max + 2) / 2;
    out.clear();
    out.resize(size, 0.0);
    let idx = |l: usize, m: usize| l * (l + 1) / 2 + m;
    let mut pmm = 1.0 / (4.0 * PI).sqrt();
    for m in 0..=l_max {
        if m > 0 {
            pmm *= ((2 * m + 1) as f64 / (2 * m) as f64).sqrt() * st;
        }
        out[idx(m, m)] = pmm;
        if m < l_max {
            out[idx(m + 1, m)] = ((2 * m + 3) as f64).sqrt() * ct * pmm;
        }
        for l in (m + 2)..=l_max {
            let lf = l as f64;
            let mf = m as f64;
            let a = ((4.0 * lf * lf - 1.0) / (lf * lf - mf * mf)).sqrt();
            let b = (((lf - 1.0) * (lf - 1.0) - mf * mf) / (4.0 * (lf - 1.0) * (lf - 1.0) - 1.0)).sqrt();
            out[idx(l, m)] = a * (ct * out[idx(l - 1, m)] - b * out[idx(l - 2, m)]);
        }
    }
}

/// θ-derivatives of the table from [`normalized_legendre`], same layout.
fn legendre_dtheta(l_max: usize, table: &[f64], out: &mut Vec<f64>) {
    let idx = |l: usize, m: usize| l * (l + 1) / 2 + m;
    out.clear();
    out.resize(table.len(), 0.0);
    for l in 1..=l_max {
        let lf = l as f64;
        out[idx(l, 0)] = -(lf * (lf + 1.0)).sqrt() * table[idx(l, 1)];
        for m in 1..=l {
            let mf = m as f64;
            let down = ((lf + mf) * (lf - mf + 1.0)).sqrt() * table[idx(l, m - 1)];
            let up = if m < l { ((lf - mf) * (lf + mf + 1.0)).sqrt() * table[idx(l, m + 1)] } else { 0.0 };
            out[idx(l, m)] = 0.5 * (down - up);
        }
    }
}

impl SpectralBasis {
    pub fn manifold(&self) -> &SpectralManifold {
        &self.manifold
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[BasisEntry] {
        &self.entries
    }

    pub fn eigenvalue(&self, k: usize) -> f64 {
        self.entries[k].eigenvalue
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.eigenvalue).collect()
    }

    /// Largest per-axis frequency extent 2·k_max + 1 (sphere: 2·l_max + 1).
    pub fn axis_extent(&self) -> usize {
        let mut kmax = 0.0f64;
        for e in &self.entries {
            match e.mode {
                Mode::Fourier { freq, .. } => {
                    // convert to integer lattice index per axis
                    let scale = self.axis_scales();
                    for (i, f) in freq.iter().enumerate().take(scale.len()) {
                        kmax = kmax.max((f / scale[i]).abs().round());
                    }
                }
                Mode::Harmonic { l, .. } => kmax = kmax.max(l as f64),
                Mode::Constant => {}
            }
        }
        2 * kmax as usize + 1
    }

    fn axis_scales(&self) -> Vec<f64> {
        match self.manifold.spec() {
            ManifoldSpec::Circle { .. } => vec![1.0],
            ManifoldSpec::FlatTorus { periods } => periods.iter().map(|l| 2.0 * PI / l).collect(),
            ManifoldSpec::Sphere2 { .. } => vec![1.0, 1.0],
        }
    }

    /// Default quadrature order: max(4·extent, 32) points per dimension.
    pub fn default_order(&self) -> usize {
        (4 * self.axis_extent()).max(32)
    }

    pub fn default_rule(&self) -> Result<QuadratureRule> {
        self.manifold.quadrature(self.default_order())
    }

    /// All eigenfunction values at x.
    pub fn eval_all(&self, x: &Point, out: &mut [f64]) {
        assert_eq!(out.len(), self.entries.len());
        let v = self.manifold.volume();
        let c0 = 1.0 / v.sqrt();
        let cf = (2.0 / v).sqrt();
        match self.manifold.spec() {
            ManifoldSpec::Sphere2 { radius } => {
                let mut table = Vec::new();
                normalized_legendre(self.l_max, x.c[0], &mut table);
                let phi = x.c[1];
                for (o, e) in out.iter_mut().zip(&self.entries) {
                    *o = harmonic_value(&table, e.mode, phi) / radius;
                }
            }
            _ => {
                for (o, e) in out.iter_mut().zip(&self.entries) {
                    *o = match e.mode {
                        Mode::Constant => c0,
                        Mode::Fourier { freq, sine } => {
                            let arg = freq[0] * x.c[0] + freq[1] * x.c[1] + freq[2] * x.c[2];
                            if sine {
                                cf * arg.sin()
                            } else {
                                cf * arg.cos()
                            }
                        }
                        Mode::Harmonic { .. } => unreachable!(),
                    };
                }
            }
        }
    }

    /// Value of the k-th eigenfunction at x.
    pub fn eval(&self, k: usize, x: &Point) -> f64 {
        let mut out = vec![0.0; self.len()];
        self.eval_all(x, &mut out);
        out[k]
    }

    /// Gradients of all eigenfunctions at x in an orthonormal frame
    /// (circle: arc length; torus: coordinate axes; sphere: (e_θ, e_φ)).
    pub fn grad_all(&self, x: &Point, out: &mut [[f64; 3]]) {
        assert_eq!(out.len(), self.entries.len());
        let v = self.manifold.volume();
        let cf = (2.0 / v).sqrt();
        match self.manifold.spec() {
            ManifoldSpec::Sphere2 { radius } => {
                let theta = x.c[0].clamp(1e-9, PI - 1e-9);
                let mut base = Vec::new();
                normalized_legendre(self.l_max, theta, &mut base);
                let mut dbase = Vec::new();
                legendre_dtheta(self.l_max, &base, &mut dbase);
                let phi = x.c[1];
                let st = theta.sin();
                for (o, e) in out.iter_mut().zip(&self.entries) {
                    let dth = harmonic_value(&dbase, e.mode, phi);
                    let dphi = harmonic_dphi(&base, e.mode, phi);
                    *o = [dth / (radius * radius), dphi / (radius * radius * st), 0.0];
                }
            }
            ManifoldSpec::Circle { radius } => {
                for (o, e) in out.iter_mut().zip(&self.entries) {
                    *o = [0.0; 3];
                    if let Mode::Fourier { freq, sine } = e.mode {
                        let arg = freq[0] * x.c[0];
                        let d = if sine { cf * arg.cos() } else { -cf * arg.sin() };
                        o[0] = d * freq[0] / radius;
                    }
                }
            }
            ManifoldSpec::FlatTorus { .. } => {
                for (o, e) in out.iter_mut().zip(&self.entries) {
                    *o = [0.0; 3];
                    if let Mode::Fourier { freq, sine } = e.mode {
                        let arg = freq[0] * x.c[0] + freq[1] * x.c[1] + freq[2] * x.c[2];
                        let d = if sine { cf * arg.cos() } else { -cf * arg.sin() };
                        for i in 0..3 {
                            o[i] = d * freq[i];
                        }
                    }
                }
            }
        }
    }

    /// Basis values at every node of a rule, row-major (node, mode).
    pub fn sample(&self, rule: &QuadratureRule) -> Vec<f64> {
        let k = self.len();
        let mut out = vec![0.0; rule.len() * k];
        for (row, x) in out.chunks_mut(k).zip(&rule.nodes) {
            self.eval_all(x, row);
        }
        out
    }

    /// Maximum entrywise deviation of the discrete Gram matrix from identity.
    pub fn gram_deviation(&self, rule: &QuadratureRule) -> f64 {
        let k = self.len();
        let phi = self.sample(rule);
        let mut gram = vec![0.0; k * k];
        for (row, w) in phi.chunks(k).zip(&rule.weights) {
            for a in 0..k {
                let wa = w * row[a];
                for b in a..k {
                    gram[a * k + b] += wa * row[b];
                }
            }
        }
        let mut dev = 0.0f64;
        for a in 0..k {
            for b in a..k {
                let target = if a == b { 1.0 } else { 0.0 };
                dev = dev.max((gram[a * k + b] - target).abs());
            }
        }
        dev
    }
}

fn harmonic_value(table: &[f64], mode: Mode, phi: f64) -> f64 {
    match mode {
        Mode::Harmonic { l, m } => {
            let am = m.unsigned_abs() as usize;
            let p = table[l * (l + 1) / 2 + am];
            if m == 0 {
                p
            } else if m > 0 {
                std::f64::consts::SQRT_2 * p * (am as f64 * phi).cos()
            } else {
                std::f64::consts::SQRT_2 * p * (am as f64 * phi).sin()
            }
        }
        _ => unreachable!(),
    }
}

fn harmonic_dphi(table: &[f64], mode: Mode, phi: f64) -> f64 {
    match mode {
        Mode::Harmonic { l, m } => {
            let am = m.unsigned_abs() as usize;
            let p = table[l * (l + 1) / 2 + am];
            let mf = am as f64;
            if m == 0 {
                0.0
            } else if m > 0 {
                -std::f64::consts::SQRT_2 * p * mf * (mf * phi).sin()
            } else {
                std::f64::consts::SQRT_2 * p * mf * (mf * phi).cos()
            }
        }
        _ => unreachable!(),
    }
}

/// Node layout of a rule, used by pair quadrature to exploit symmetry.
#[derive(Clone, Debug, PartialEq)]
pub enum Layout {
    /// Periodic product grid; node index is row-major over `shape`.
    Uniform { shape: Vec<usize>, spacing: Vec<f64> },
    /// Gauss–Legendre colatitudes times uniform longitudes, row-major (θ, φ).
    SphereProduct { n_theta: usize, n_phi: usize },
}

/// Nodes and positive weights summing to the volume.
#[derive(Clone, Debug)]
pub struct QuadratureRule {
    nodes: Vec<Point>,
    weights: Vec<f64>,
    layout: Layout,
}

impl QuadratureRule {
    pub fn nodes(&self) -> &[Point] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Weighted sum Σ w_j v_j.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        assert_eq!(values.len(), self.weights.len());
        neumaier_sum(self.weights.iter().zip(values).map(|(w, v)| w * v))
    }

    /// (Σ w_j |v_j|^q)^{1/q}
    pub fn lp_norm(&self, values: &[f64], q: f64) -> f64 {
        self.lp_power(values, q).powf(1.0 / q)
    }

    /// Σ w_j |v_j|^q
    pub fn lp_power(&self, values: &[f64], q: f64) -> f64 {
        assert_eq!(values.len(), self.weights.len());
        neumaier_sum(self.weights.iter().zip(values).map(|(w, v)| w * v.abs().powf(q)))
    }
}

/// Compensated (Neumaier) summation.
pub fn neumaier_sum<I: IntoIterator<Item = f64>>(terms: I) -> f64 {
    let mut sum = 0.0f64;
    let mut c = 0.0f64;
    for x in terms {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            c += (sum - t) + x;
        } else {
            c += (x - t) + sum;
        }
        sum = t;
    }
    sum + c
}

/// A function represented by its first K eigen-coefficients.
#[derive(Clone, Debug)]
pub struct SpectralFunction {
    basis: Arc<SpectralBasis>,
    coeffs: Vec<f64>,
}

impl SpectralFunction {
    pub fn new(basis: Arc<SpectralBasis>, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() != basis.len() {
            return Err(Error::LengthMismatch { expected: basis.len(), got: coeffs.len() });
        }
        Ok(SpectralFunction { basis, coeffs })
    }

    pub fn zero(basis: Arc<SpectralBasis>) -> Self {
        let k = basis.len();
        SpectralFunction { basis, coeffs: vec![0.0; k] }
    }

    /// The constant function c.
    pub fn constant(basis: Arc<SpectralBasis>, c: f64) -> Self {
        let mut f = Self::zero(basis);
        f.coeffs[0] = c * f.basis.manifold.volume().sqrt();
        f
    }

    /// The k-th eigenfunction.
    pub fn mode(basis: Arc<SpectralBasis>, k: usize) -> Self {
        let mut f = Self::zero(basis);
        f.coeffs[k] = 1.0;
        f
    }

    pub fn basis(&self) -> &Arc<SpectralBasis> {
        &self.basis
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn truncation(&self) -> usize {
        self.coeffs.len()
    }

    pub fn map_coeffs<F: Fn(usize, f64) -> f64>(&self, f: F) -> Self {
        SpectralFunction {
            basis: self.basis.clone(),
            coeffs: self.coeffs.iter().enumerate().map(|(k, c)| f(k, *c)).collect(),
        }
    }

    pub fn scaled(&self, c: f64) -> Self {
        self.map_coeffs(|_, v| c * v)
    }

    pub fn add(&self, other: &SpectralFunction) -> Result<Self> {
        if other.coeffs.len() != self.coeffs.len() {
            return Err(Error::LengthMismatch { expected: self.coeffs.len(), got: other.coeffs.len() });
        }
        Ok(self.map_coeffs(|k, v| v + other.coeffs[k]))
    }

    pub fn evaluate(&self, x: &Point) -> f64 {
        let mut phi = vec![0.0; self.coeffs.len()];
        self.basis.eval_all(x, &mut phi);
        phi.iter().zip(&self.coeffs).map(|(a, b)| a * b).sum()
    }

    pub fn gradient(&self, x: &Point) -> [f64; 3] {
        let mut g = vec![[0.0; 3]; self.coeffs.len()];
        self.basis.grad_all(x, &mut g);
        let mut out = [0.0; 3];
        for (gk, c) in g.iter().zip(&self.coeffs) {
            for i in 0..3 {
                out[i] += c * gk[i];
            }
        }
        out
    }

    pub fn nodal_values(&self, rule: &QuadratureRule) -> Vec<f64> {
        let mut phi = vec![0.0; self.coeffs.len()];
        rule.nodes
            .iter()
            .map(|x| {
                self.basis.eval_all(x, &mut phi);
                phi.iter().zip(&self.coeffs).map(|(a, b)| a * b).sum()
            })
            .collect()
    }

    pub fn nodal_gradients(&self, rule: &QuadratureRule) -> Vec<[f64; 3]> {
        rule.nodes.iter().map(|x| self.gradient(x)).collect()
    }

    /// Rule-weighted L^q norm.
    pub fn lp_norm(&self, q: f64, rule: &QuadratureRule) -> Result<f64> {
        if !(q >= 1.0) {
            return Err(Error::InvalidParameter(format!("q = {q} must be at least 1")));
        }
        Ok(rule.lp_norm(&self.nodal_values(rule), q))
    }

    /// Mean value u_0 · Vol^{-1/2}.
    pub fn mean(&self) -> f64 {
        self.coeffs[0] / self.basis.manifold.volume().sqrt()
    }

    /// Largest absolute nodal value on a rule.
    pub fn max_abs(&self, rule: &QuadratureRule) -> f64 {
        self.nodal_values(rule).iter().fold(0.0f64, |a, v| a.max(v.abs()))
    }
}

/// Tolerance for the Gram check in [`project`].
pub const GRAM_TOLERANCE: f64 = 1e-8;

/// Projects a pointwise function onto a basis by discrete inner products.
pub fn project<F: Fn(&Point) -> f64>(
    basis: &Arc<SpectralBasis>,
    f: F,
    rule: &QuadratureRule,
) -> Result<SpectralFunction> {
    let dev = basis.gram_deviation(rule);
    if dev > GRAM_TOLERANCE {
        return Err(Error::UnderResolvedRule(dev));
    }
    let k = basis.len();
    let mut coeffs = vec![0.0; k];
    let mut phi = vec![0.0; k];
    for (x, w) in rule.nodes.iter().zip(&rule.weights) {
        let fx = f(x);
        basis.eval_all(x, &mut phi);
        for (c, p) in coeffs.iter_mut().zip(&phi) {
            *c += w * fx * p;
        }
    }
    SpectralFunction::new(basis.clone(), coeffs)
}

/// Number of modes carrying random coefficients in random families.
pub const RANDOM_FAMILY_MODES: usize = 12;

/// Deterministic random band-limited family: coefficients i.i.d. uniform on
/// [-1, 1] over the first 12 modes (fewer if the basis is smaller).
pub fn random_family(basis: &Arc<SpectralBasis>, count: usize, seed: u64) -> Vec<SpectralFunction> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let active = RANDOM_FAMILY_MODES.min(basis.len());
    (0..count)
        .map(|_| {
            let mut c = vec![0.0; basis.len()];
            for v in c.iter_mut().take(active) {
                *v = rng.gen_range(-1.0..=1.0);
            }
            SpectralFunction { basis: basis.clone(), coeffs: c }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn circle() -> SpectralManifold {
        SpectralManifold::new(ManifoldSpec::unit_circle()).unwrap()
    }

    #[test]
    fn circle_spectrum() {
        let ev = circle().eigenvalues(7).unwrap();
        assert_eq!(ev, vec![0.0, 1.0, 1.0, 4.0, 4.0, 9.0, 9.0]);
    }

    #[test]
    fn sphere_spectrum() {
        let m = SpectralManifold::new(ManifoldSpec::unit_sphere()).unwrap();
        let ev = m.eigenvalues(9).unwrap();
        assert_eq!(ev, vec![0.0, 2.0, 2.0, 2.0, 6.0, 6.0, 6.0, 6.0, 6.0]);
    }

    #[test]
    fn torus_volume_and_order() {
        let m = SpectralManifold::new(ManifoldSpec::standard_torus(2)).unwrap();
        assert!((m.volume() - 4.0 * PI * PI).abs() < 1e-12);
        let b = m.basis(9).unwrap();
        let ev = b.eigenvalues();
        assert_eq!(ev, vec![0.0, 1.0, 1.0, 1.0, 1.0, 2.0, 2.0, 2.0, 2.0]);
        assert!(ev.windows(2).all(|w| w[0] <= w[1]));
        // lexicographic tie-break: m = (-1,0) first → sine of (1,0)
        assert_eq!(b.entries()[1].mode, Mode::Fourier { freq: [1.0, 0.0, 0.0], sine: true });
    }

    #[test]
    fn invalid_specs_rejected() {
        assert_eq!(SpectralManifold::new(ManifoldSpec::Circle { radius: 0.0 }), Err(Error::NonpositiveLength(0.0)));
        assert!(matches!(
            SpectralManifold::new(ManifoldSpec::FlatTorus { periods: vec![1.0; 4] }),
            Err(Error::UnsupportedKind(_))
        ));
    }

    #[test]
    fn distances() {
        let c = circle();
        let d = c.distance(&c.point(&[0.0]).unwrap(), &c.point(&[PI]).unwrap());
        assert!((d - PI).abs() < 1e-15);
        let s = SpectralManifold::new(ManifoldSpec::unit_sphere()).unwrap();
        let d = s.distance(&s.point(&[0.0, 0.0]).unwrap(), &s.point(&[PI / 2.0, 1.0]).unwrap());
        assert!((d - PI / 2.0).abs() < 1e-15);
        let t = SpectralManifold::new(ManifoldSpec::standard_torus(2)).unwrap();
        let d = t.distance(&t.point(&[0.0, 0.0]).unwrap(), &t.point(&[PI, PI]).unwrap());
        assert!((d - 2f64.sqrt() * PI).abs() < 1e-14);
        assert!(s.point(&[4.0, 0.0]).is_err());
        assert!(geodesic_distance(&s, &t.point(&[0.0, 0.0]).unwrap(), &c.point(&[0.0]).unwrap()).is_err());
    }

    #[test]
    fn quadrature_examples() {
        let r = circle().quadrature(16).unwrap();
        assert_eq!(r.len(), 16);
        assert!(r.weights().iter().all(|w| (w - 2.0 * PI / 16.0).abs() < 1e-15));
        let s = SpectralManifold::new(ManifoldSpec::unit_sphere()).unwrap();
        assert!((s.quadrature(8).unwrap().total_weight() - 4.0 * PI).abs() < 1e-12);
        let t = SpectralManifold::new(ManifoldSpec::FlatTorus { periods: vec![2.0 * PI, 4.0 * PI] }).unwrap();
        let r = t.quadrature(8).unwrap();
        assert_eq!(r.len(), 64);
        assert!(r.weights().iter().all(|w| (w - 8.0 * PI * PI / 64.0).abs() < 1e-13));
        assert_eq!(circle().quadrature(3).unwrap_err(), Error::OrderTooSmall(3));
    }

    #[test]
    fn projection_examples() {
        let c = circle();
        let b = Arc::new(c.basis(9).unwrap());
        let rule = b.default_rule().unwrap();
        let u = project(&b, |_| 2.5, &rule).unwrap();
        assert!((u.coeffs()[0] - 2.5 * (2.0 * PI).sqrt()).abs() < 1e-12);
        assert!(u.coeffs()[1..].iter().all(|v| v.abs() < 1e-12));
        let u = project(&b, |x| x.coords()[0].cos(), &rule).unwrap();
        assert!((u.coeffs()[1] - PI.sqrt()).abs() < 1e-12);
        assert!(u.coeffs().iter().enumerate().all(|(k, v)| k == 1 || v.abs() < 1e-12));
        assert!(u.mean().abs() < 1e-15);
        // under-resolved
        assert!(matches!(project(&b, |_| 1.0, &c.quadrature(6).unwrap()), Err(Error::UnderResolvedRule(_))));
    }

    #[test]
    fn norms() {
        let b = Arc::new(circle().basis(5).unwrap());
        let rule = b.default_rule().unwrap();
        let one = SpectralFunction::constant(b.clone(), 1.0);
        assert!((one.lp_norm(2.0, &rule).unwrap() - (2.0 * PI).sqrt()).abs() < 1e-13);
        assert!(one.lp_norm(0.5, &rule).is_err());
    }

    #[test]
    fn gram_identity_default_rules() {
        for spec in [
            ManifoldSpec::unit_circle(),
            ManifoldSpec::standard_torus(2),
            ManifoldSpec::FlatTorus { periods: vec![1.0, 2.0, 3.0] },
            ManifoldSpec::Sphere2 { radius: 1.7 },
        ] {
            let b = SpectralManifold::new(spec).unwrap().basis(64).unwrap();
            let dev = b.gram_deviation(&b.default_rule().unwrap());
            assert!(dev < 1e-8, "{dev}");
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let s = SpectralManifold::new(ManifoldSpec::unit_sphere()).unwrap();
        let b = Arc::new(s.basis(16).unwrap());
        let u = SpectralFunction::new(b.clone(), (0..16).map(|k| (k as f64 * 0.37).sin()).collect()).unwrap();
        let x = s.point(&[1.1, 2.3]).unwrap();
        let g = u.gradient(&x);
        let h = 1e-6;
        let dth = (u.evaluate(&s.point(&[1.1 + h, 2.3]).unwrap()) - u.evaluate(&s.point(&[1.1 - h, 2.3]).unwrap()))
            / (2.0 * h);
        let dph = (u.evaluate(&s.point(&[1.1, 2.3 + h]).unwrap()) - u.evaluate(&s.point(&[1.1, 2.3 - h]).unwrap()))
            / (2.0 * h);
        assert!((g[0] - dth).abs() < 1e-7);
        assert!((g[1] - dph / 1.1f64.sin()).abs() < 1e-7);
        // every mode through degree 8, θ-derivative against central differences
        let b = Arc::new(s.basis(81).unwrap());
        let mut g = vec![[0.0; 3]; 81];
        let (mut lo, mut hi) = (vec![0.0; 81], vec![0.0; 81]);
        for th in [0.2, 1.3, 2.9] {
            b.grad_all(&s.point(&[th, 0.7]).unwrap(), &mut g);
            b.eval_all(&s.point(&[th + h, 0.7]).unwrap(), &mut hi);
            b.eval_all(&s.point(&[th - h, 0.7]).unwrap(), &mut lo);
            for k in 0..81 {
                assert!((g[k][0] - (hi[k] - lo[k]) / (2.0 * h)).abs() < 1e-6, "mode {k} at θ = {th}");
            }
        }
        let one = SpectralFunction::constant(b, 1.0);
        assert_eq!(one.gradient(&x), [0.0; 3]);
    }
}

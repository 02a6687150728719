//! Special functions: Gamma, incomplete Gamma, Hurwitz zeta, Gauss–Legendre nodes.

use std::f64::consts::{E, PI};

const GAMMA_R: f64 = 10.900511;

const GAMMA_DK: [f64; 11] = [
    2.48574089138753565546e-5,
    1.05142378581721974210,
    -3.45687097222016235469,
    4.51227709466894823700,
    -2.98285225323576655721,
    1.05639711577126713077,
    -1.95428773191645869583e-1,
    1.70970543404441224307e-2,
    -5.71926117404305781283e-4,
    4.63399473359905636708e-6,
    -2.71994908488607703910e-9,
];

/// 2 * sqrt(e / pi)
const TWO_SQRT_E_OVER_PI: f64 = 1.8603827342052657;

/// Gamma function via the Lanczos approximation, with reflection below 1/2.
///
/// Poles (non-positive integers) return an infinite or NaN value.
pub fn gamma(x: f64) -> f64 {
    if x < 0.5 {
        let s = GAMMA_DK.iter().enumerate().skip(1).fold(GAMMA_DK[0], |s, t| s + t.1 / (t.0 as f64 - x));
        PI / ((PI * x).sin() * s * TWO_SQRT_E_OVER_PI * ((0.5 - x + GAMMA_R) / E).powf(0.5 - x))
    } else {
        let s = GAMMA_DK.iter().enumerate().skip(1).fold(GAMMA_DK[0], |s, t| s + t.1 / (x + t.0 as f64 - 1.0));
        s * TWO_SQRT_E_OVER_PI * ((x - 0.5 + GAMMA_R) / E).powf(x - 0.5)
    }
}

/// Lower incomplete gamma γ(a, x) = ∫₀ˣ e^{-u} u^{a-1} du for a > 0, x ≥ 0.
pub fn lower_gamma(a: f64, x: f64) -> f64 {
    debug_assert!(a > 0.0 && x >= 0.0);
    if x == 0.0 {
        return 0.0;
    }
    if x < a + 1.0 {
        // series
        let mut term = 1.0 / a;
        let mut sum = term;
        let mut ap = a;
        for _ in 0..500 {
            ap += 1.0;
            term *= x / ap;
            sum += term;
            if term.abs() < sum.abs() * 1e-17 {
                break;
            }
        }
        sum * (-x + a * x.ln()).exp()
    } else {
        gamma(a) - upper_gamma_cf(a, x)
    }
}

/// Upper incomplete gamma Γ(a, x) by continued fraction (x ≥ a + 1).
fn upper_gamma_cf(a: f64, x: f64) -> f64 {
    let tiny = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / tiny;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..500 {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < tiny {
            d = tiny;
        }
        c = b + an / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < 1e-16 {
            break;
        }
    }
    (-x + a * x.ln()).exp() * h
}

// B_{2k} / (2k)!
const BERNOULLI_OVER_FACT: [f64; 8] = [
    1.0 / 12.0,
    -1.0 / 720.0,
    1.0 / 30240.0,
    -1.0 / 1209600.0,
    1.0 / 47900160.0,
    -691.0 / 1307674368000.0,
    1.0 / 74724249600.0,
    -3617.0 / 10670622842880000.0,
];

/// Hurwitz zeta ζ(s, a) for real s ≠ 1 and a > 0 (analytically continued for s < 1).
pub fn hurwitz_zeta(s: f64, a: f64) -> f64 {
    debug_assert!(a > 0.0 && s != 1.0);
    const N: usize = 12;
    let mut sum = 0.0;
    for j in 0..N {
        sum += (a + j as f64).powf(-s);
    }
    let x = a + N as f64;
    sum += x.powf(1.0 - s) / (s - 1.0) + 0.5 * x.powf(-s);
    // rising product s (s+1) ... (s+2k-2)
    let mut rising = s;
    let mut xpow = x.powf(-s - 1.0);
    for (k, b) in BERNOULLI_OVER_FACT.iter().enumerate() {
        sum += b * rising * xpow;
        let m = 2.0 * k as f64;
        rising *= (s + m + 1.0) * (s + m + 2.0);
        xpow /= x * x;
    }
    sum
}

/// Gauss–Legendre nodes and weights on [-1, 1], nodes ascending.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = (n + 1) / 2;
    for i in 0..m {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, z);
        dp = if d != 0.0 { d } else { dp };
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    (x, w)
}

/// Legendre polynomial P_n(z) and its derivative.
fn legendre_with_derivative(n: usize, z: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = z;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, d)
}

/// Maximizes a unimodal function on [lo, hi] by golden-section search.
/// Returns (argmax, max).
pub fn golden_max<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, tol: f64) -> (f64, f64) {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - g * (hi - lo);
    let mut d = lo + g * (hi - lo);
    let mut fc = f(c);
    let mut fd = f(d);
    while (hi - lo).abs() > tol * (1.0 + c.abs()) {
        if fc > fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - g * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + g * (hi - lo);
            fd = f(d);
        }
    }
    let x = 0.5 * (lo + hi);
    (x, f(x))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gamma_known_values() {
        assert!((gamma(1.0) - 1.0).abs() < 1e-14);
        assert!((gamma(5.0) - 24.0).abs() < 1e-12);
        assert!((gamma(0.5) - PI.sqrt()).abs() < 1e-14);
        // Γ(-1/2) = -2√π
        assert!((gamma(-0.5) + 2.0 * PI.sqrt()).abs() < 1e-13);
        // Γ(1/3) to 16 digits
        assert!((gamma(1.0 / 3.0) / 2.678938534707747633 - 1.0).abs() < 1e-14);
    }

    #[test]
    fn gamma_recurrence_holds() {
        for i in 1..200 {
            let x = -2.95 + 0.037 * i as f64;
            if (x - x.round()).abs() < 1e-3 && x <= 0.0 {
                continue;
            }
            let lhs = gamma(x + 1.0);
            let rhs = x * gamma(x);
            assert!((lhs / rhs - 1.0).abs() < 1e-13, "x = {x}");
        }
    }

    #[test]
    fn incomplete_gamma_limits() {
        // γ(1, x) = 1 - e^{-x}
        for &x in &[0.01, 0.5, 1.0, 3.0, 10.0] {
            assert!((lower_gamma(1.0, x) - (1.0 - (-x as f64).exp())).abs() < 1e-14);
        }
        // γ(1/2, x) = √π erf(√x); erf(1) = 0.8427007929497149
        assert!((lower_gamma(0.5, 1.0) - PI.sqrt() * 0.8427007929497149).abs() < 1e-14);
        assert!((lower_gamma(0.7, 60.0) - gamma(0.7)).abs() < 1e-14);
    }

    #[test]
    fn hurwitz_zeta_values() {
        // ζ(2, 1) = π²/6, ζ(0, a) = 1/2 - a, ζ(-1, 1) = -1/12
        assert!((hurwitz_zeta(2.0, 1.0) - PI * PI / 6.0).abs() < 1e-14);
        assert!((hurwitz_zeta(0.0, 2.0) + 1.5).abs() < 1e-14);
        assert!((hurwitz_zeta(-1.0, 1.0) + 1.0 / 12.0).abs() < 1e-14);
        // ζ(1/2) = -1.4603545088095868
        assert!((hurwitz_zeta(0.5, 1.0) + 1.4603545088095868).abs() < 1e-13);
        // ζ(3/2, 1/4) from the reference value 8.5924060498...
        let direct: f64 =
            (0..2_000_000).map(|j| (0.25 + j as f64).powf(-1.5)).sum::<f64>() + 2.0 / (2_000_000.25f64).sqrt();
        assert!((hurwitz_zeta(1.5, 0.25) - direct).abs() < 1e-9);
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        for n in [1usize, 2, 5, 16, 40] {
            let (x, w) = gauss_legendre(n);
            assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
            for deg in 0..(2 * n) {
                let q: f64 = x.iter().zip(&w).map(|(xi, wi)| wi * xi.powi(deg as i32)).sum();
                let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
                assert!((q - exact).abs() < 1e-13, "n={n} deg={deg}");
            }
            assert!(x.windows(2).all(|p| p[0] < p[1]));
        }
    }

    #[test]
    fn golden_section_finds_parabola_peak() {
        let (x, v) = golden_max(|t| 3.0 - (t - 1.25) * (t - 1.25), 0.0, 4.0, 1e-12);
        assert!((x - 1.25).abs() < 1e-6);
        assert!((v - 3.0).abs() < 1e-12);
    }
}

//! Truncated normal on `[-1, 1]`, applied independently per axis.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::glimpse::Loc;

const SQRT_2: f64 = std::f64::consts::SQRT_2;
const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;
const MAX_REJECTIONS: usize = 100;

pub fn std_normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z - LN_SQRT_2PI).exp()
}

/// Standard normal CDF through `erfc`, accurate in both tails.
pub fn std_normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / SQRT_2)
}

/// `Phi(b) - Phi(a)` for `a <= b` without cancellation in the tails.
fn normal_mass(a: f64, b: f64) -> f64 {
    if a >= 0.0 {
        0.5 * (libm::erfc(a / SQRT_2) - libm::erfc(b / SQRT_2))
    } else if b <= 0.0 {
        0.5 * (libm::erfc(-b / SQRT_2) - libm::erfc(-a / SQRT_2))
    } else {
        1.0 - 0.5 * libm::erfc(b / SQRT_2) - 0.5 * libm::erfc(-a / SQRT_2)
    }
}

fn bounds(mu: f64, sigma: f64) -> (f64, f64) {
    ((-1.0 - mu) / sigma, (1.0 - mu) / sigma)
}

/// Probability mass of `N(mu, sigma^2)` inside `[-1, 1]`.
pub fn normalizer(mu: f64, sigma: f64) -> f64 {
    let (a, b) = bounds(mu, sigma);
    normal_mass(a, b)
}

/// Log-density of one axis; `-inf` outside the support.
pub fn logpdf_axis(x: f64, mu: f64, sigma: f64) -> f64 {
    if !(-1.0..=1.0).contains(&x) {
        return f64::NEG_INFINITY;
    }
    let z = (x - mu) / sigma;
    -0.5 * z * z - LN_SQRT_2PI - sigma.ln() - normalizer(mu, sigma).ln()
}

/// `d logpdf_axis / d mu`.
pub fn dlogpdf_dmu_axis(x: f64, mu: f64, sigma: f64) -> f64 {
    let (a, b) = bounds(mu, sigma);
    let z = normal_mass(a, b);
    (x - mu) / (sigma * sigma) + (std_normal_pdf(b) - std_normal_pdf(a)) / (sigma * z)
}

/// Joint log-density of a location under independent per-axis truncated normals.
pub fn truncnorm_logpdf(x: Loc, mean: Loc, std: f64) -> f64 {
    logpdf_axis(x.x as f64, mean.x as f64, std) + logpdf_axis(x.y as f64, mean.y as f64, std)
}

/// Analytic mean and variance of one truncated axis.
pub fn truncated_moments(mu: f64, sigma: f64) -> (f64, f64) {
    let (a, b) = bounds(mu, sigma);
    let z = normal_mass(a, b);
    let (pa, pb) = (std_normal_pdf(a), std_normal_pdf(b));
    let shift = (pa - pb) / z;
    let mean = mu + sigma * shift;
    let var = sigma * sigma * (1.0 + (a * pa - b * pb) / z - shift * shift);
    (mean, var)
}

/// Inverse standard normal CDF (Acklam's rational approximation with one Halley step).
pub fn std_normal_quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    let low = 0.02425;
    let x = if p < low {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - low {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    let e = std_normal_cdf(x) - p;
    let u = e * (2.0 * std::f64::consts::PI).sqrt() * (x * x / 2.0).exp();
    x - u / (1.0 + x * u / 2.0)
}

/// One draw on `[-1, 1]`: rejection first, inverse CDF after too many misses.
pub fn sample_axis<R: Rng + ?Sized>(mu: f64, sigma: f64, rng: &mut R) -> f64 {
    for _ in 0..MAX_REJECTIONS {
        let z: f64 = StandardNormal.sample(rng);
        let x = mu + sigma * z;
        if (-1.0..=1.0).contains(&x) {
            return x;
        }
    }
    // mirror so the mean is non-negative; the interval then never sits in the
    // upper tail, where the CDF loses precision
    let (m, flip) = if mu < 0.0 { (-mu, -1.0) } else { (mu, 1.0) };
    let (a, b) = bounds(m, sigma);
    let (pa, pb) = (std_normal_cdf(a), std_normal_cdf(b));
    let u: f64 = rng.random();
    let x = m + sigma * std_normal_quantile(pa + u * (pb - pa));
    let x = if pb > pa && x.is_finite() { x } else { m };
    (flip * x).clamp(-1.0, 1.0)
}

pub fn truncnorm_sample<R: Rng + ?Sized>(mean: Loc, std: f64, rng: &mut R) -> Loc {
    let x = sample_axis(mean.x as f64, std, rng);
    let y = sample_axis(mean.y as f64, std, rng);
    Loc::new(x as f32, y as f32).clamped()
}

/// Log-density of the uniform location policy on `[-1, 1]^2`.
pub fn uniform_loc_logpdf() -> f64 {
    -(4f64.ln())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::central_difference;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Composite Simpson on [lo, hi] with `n` (even) panels.
    fn simpson<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, n: usize) -> f64 {
        let h = (hi - lo) / n as f64;
        let mut s = f(lo) + f(hi);
        for i in 1..n {
            s += f(lo + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * h / 3.0
    }

    #[test]
    fn cdf_matches_quadrature_of_density() {
        for &z in &[-3.0, -1.2, 0.0, 0.4, 2.5] {
            let q = if z < 0.0 {
                0.5 - simpson(std_normal_pdf, z, 0.0, 2000)
            } else {
                0.5 + simpson(std_normal_pdf, 0.0, z, 2000)
            };
            assert!((std_normal_cdf(z) - q).abs() < 1e-12, "z={z}");
        }
    }

    #[test]
    fn centered_logpdf_value() {
        // normal density at the mode divided by the in-support mass, per axis
        let per_axis = -LN_SQRT_2PI - 0.1f64.ln() - simpson(|x| std_normal_pdf(x / 0.1) / 0.1, -1.0, 1.0, 4000).ln();
        let v = truncnorm_logpdf(Loc::CENTER, Loc::CENTER, 0.1);
        assert!((v - 2.0 * per_axis).abs() < 1e-9);
        assert!((v - 2.76730).abs() < 1e-5);
    }

    #[test]
    fn symmetric_about_centered_mean() {
        for &(a, b) in &[(0.3f32, -0.7f32), (0.95, 0.1), (-0.2, 0.0)] {
            let l = truncnorm_logpdf(Loc::new(a, b), Loc::CENTER, 0.2);
            let r = truncnorm_logpdf(Loc::new(-a, -b), Loc::CENTER, 0.2);
            assert!((l - r).abs() < 1e-12);
        }
    }

    #[test]
    fn outside_support_is_negative_infinity() {
        assert_eq!(logpdf_axis(1.0001, 0.0, 0.1), f64::NEG_INFINITY);
    }

    #[test]
    fn density_integrates_to_one_near_edge() {
        let total = simpson(|x| logpdf_axis(x, 0.95, 0.1).exp(), -1.0, 1.0, 20000);
        assert!((total - 1.0).abs() < 1e-6);
    }

    #[test]
    fn mean_gradient_matches_finite_differences() {
        for &(x, mu, s) in &[(0.2, -0.1, 0.1), (0.9, 0.95, 0.05), (-0.5, 0.3, 0.5)] {
            let num = central_difference(&[mu], 1e-5, |m| logpdf_axis(x, m[0], s))[0];
            let ana = dlogpdf_dmu_axis(x, mu, s);
            assert!((num - ana).abs() / ana.abs().max(1e-6) < 1e-6, "{x} {mu} {s}");
        }
    }

    #[test]
    fn quantile_inverts_cdf() {
        for &p in &[1e-12, 1e-4, 0.02, 0.3, 0.5, 0.77, 0.999] {
            let z = std_normal_quantile(p);
            assert!((std_normal_cdf(z) - p).abs() / p < 1e-9, "p={p}");
        }
    }

    #[test]
    fn samples_stay_in_support_and_centre() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let n = 100_000;
        let (mut sx, mut sy) = (0.0, 0.0);
        for _ in 0..n {
            let l = truncnorm_sample(Loc::CENTER, 0.1, &mut rng);
            assert!(l.is_valid());
            sx += l.x as f64;
            sy += l.y as f64;
        }
        assert!((sx / n as f64).abs() < 0.005);
        assert!((sy / n as f64).abs() < 0.005);
    }

    #[test]
    fn degenerate_std_returns_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let l = truncnorm_sample(Loc::new(0.3, -0.2), 1e-6, &mut rng);
            assert!((l.x - 0.3).abs() < 1e-4 && (l.y + 0.2).abs() < 1e-4);
        }
    }

    #[test]
    fn fallback_path_handles_far_tail() {
        // mean far outside the interval forces the inverse-CDF path
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..200 {
            let x = sample_axis(3.0, 0.1, &mut rng);
            assert!((0.9..=1.0).contains(&x), "{x}");
            let y = sample_axis(-3.0, 0.1, &mut rng);
            assert!((-1.0..=-0.9).contains(&y), "{y}");
            let z = sample_axis(40.0, 0.1, &mut rng);
            assert_eq!(z, 1.0);
        }
    }
}

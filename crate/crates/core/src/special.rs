//! Special functions needed by the covariance models.
//!
//! Only the pieces actually used are implemented: the gamma function (via a
//! Lanczos approximation) and the modified Bessel function of the second
//! kind `K_nu(x)` for real order `nu >= 0`, evaluated with Temme's series
//! for small arguments and a Steed continued fraction for large arguments,
//! followed by upward recurrence in the order.

use crate::error::{Error, Result};

const LANCZOS_G: f64 = 7.0;
#[allow(clippy::excessive_precision)]
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

/// Natural log of the gamma function for `x > 0`.
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // reflection: Γ(x)Γ(1-x) = π/sin(πx)
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = LANCZOS[0];
    for (i, &c) in LANCZOS.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + LANCZOS_G + 0.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// Gamma function for `x > 0`.
pub fn gamma(x: f64) -> f64 {
    ln_gamma(x).exp()
}

// Taylor coefficients of 1/Γ(z) about z = 0 (so that
// 1/Γ(1+u) = sum_k C[k] u^k), accurate to full double precision
// for |u| <= 1/2.
const INV_GAMMA_C: [f64; 26] = [
    1.0,
    0.577_215_664_901_532_9,
    -0.655_878_071_520_253_9,
    -0.042_002_635_034_095_24,
    0.166_538_611_382_291_5,
    -0.042_197_734_555_544_34,
    -0.009_621_971_527_876_973,
    0.007_218_943_246_663_1,
    -0.001_165_167_591_859_065,
    -0.000_215_241_674_114_951,
    0.000_128_050_282_388_116_2,
    -0.000_020_134_854_780_788_24,
    -0.000_001_250_493_482_142_67,
    0.000_001_133_027_231_981_7,
    -0.000_000_205_633_841_697_76,
    0.000_000_006_116_095_104_48,
    0.000_000_005_002_007_644_47,
    -0.000_000_001_181_274_570_49,
    0.000_000_000_104_342_671_17,
    0.000_000_000_007_782_263_44,
    -0.000_000_000_003_696_805_62,
    0.000_000_000_000_510_037_03,
    -0.000_000_000_000_020_583_26,
    -0.000_000_000_000_005_348_12,
    0.000_000_000_000_001_226_78,
    -0.000_000_000_000_000_118_13,
];

/// 1/Γ(1+u) for |u| <= 1/2.
fn inv_gamma_1p(u: f64) -> f64 {
    let mut acc = 0.0;
    for &c in INV_GAMMA_C.iter().rev() {
        acc = acc * u + c;
    }
    acc
}

/// Temme's auxiliary functions:
/// gam1 = [1/Γ(1-u) - 1/Γ(1+u)] / (2u), gam2 = [1/Γ(1-u) + 1/Γ(1+u)] / 2,
/// computed from the even/odd parts of the Taylor series so the u -> 0
/// limit is exact (no cancellation).
fn temme_gammas(u: f64) -> (f64, f64, f64, f64) {
    let u2 = u * u;
    let mut gam1 = 0.0;
    let mut gam2 = 0.0;
    // odd-index coefficients feed gam1, even-index feed gam2
    for j in (0..13).rev() {
        gam1 = gam1 * u2 + INV_GAMMA_C[2 * j + 1];
        gam2 = gam2 * u2 + INV_GAMMA_C[2 * j];
    }
    gam1 = -gam1;
    let gampl = inv_gamma_1p(u); // 1/Γ(1+u)
    let gammi = inv_gamma_1p(-u); // 1/Γ(1-u)
    (gam1, gam2, gampl, gammi)
}

const BESSEL_EPS: f64 = 1e-16;
const BESSEL_MAX_ITER: usize = 20_000;

/// Modified Bessel function of the second kind `K_nu(x)` for
/// `nu >= 0`, `x > 0`.
pub fn bessel_k(nu: f64, x: f64) -> Result<f64> {
    if !(nu.is_finite() && x.is_finite()) || nu < 0.0 || x <= 0.0 {
        return Err(Error::Domain(format!(
            "bessel_k requires nu >= 0 and x > 0, got nu={nu}, x={x}"
        )));
    }
    // K decays like exp(-x); for very large x the result underflows to zero.
    if x > 750.0 {
        return Ok(0.0);
    }
    let nl = (nu + 0.5).floor() as usize;
    let mu = nu - nl as f64; // mu in [-1/2, 1/2]
    let (mut k_mu, mut k_mu1) = if x <= 2.0 {
        temme_series(mu, x)?
    } else {
        steed_cf2(mu, x)?
    };
    // upward recurrence K_{v+1} = K_{v-1} + (2v/x) K_v
    let xi2 = 2.0 / x;
    for l in 1..=nl {
        let next = (mu + l as f64) * xi2 * k_mu1 + k_mu;
        k_mu = k_mu1;
        k_mu1 = next;
    }
    Ok(k_mu)
}

/// Temme's series for K_mu(x) and K_{mu+1}(x), valid for x <= 2, |mu| <= 1/2.
fn temme_series(mu: f64, x: f64) -> Result<(f64, f64)> {
    let x2 = 0.5 * x;
    let pimu = std::f64::consts::PI * mu;
    let fact = if pimu.abs() < 1e-12 {
        1.0
    } else {
        pimu / pimu.sin()
    };
    let d = -x2.ln();
    let e = mu * d;
    let fact2 = if e.abs() < 1e-12 { 1.0 } else { e.sinh() / e };
    let (gam1, gam2, gampl, gammi) = temme_gammas(mu);
    let mut ff = fact * (gam1 * e.cosh() + gam2 * fact2 * d);
    let mut sum = ff;
    let e = e.exp();
    let mut p = 0.5 * e / gampl;
    let mut q = 0.5 / (e * gammi);
    let mut c = 1.0;
    let d2 = x2 * x2;
    let mut sum1 = p;
    for i in 1..=BESSEL_MAX_ITER {
        let fi = i as f64;
        ff = (fi * ff + p + q) / (fi * fi - mu * mu);
        c *= d2 / fi;
        p /= fi - mu;
        q /= fi + mu;
        let del = c * ff;
        sum += del;
        let del1 = c * (p - fi * ff);
        sum1 += del1;
        if del.abs() < sum.abs() * BESSEL_EPS {
            return Ok((sum, sum1 * 2.0 / x));
        }
    }
    Err(Error::Numerical(format!(
        "bessel_k series failed to converge for mu={mu}, x={x}"
    )))
}

/// Steed's continued fraction CF2 for K_mu(x) and K_{mu+1}(x), x > 2.
fn steed_cf2(mu: f64, x: f64) -> Result<(f64, f64)> {
    let a1 = 0.25 - mu * mu;
    let mut b = 2.0 * (1.0 + x);
    let mut d = 1.0 / b;
    let mut h = d;
    let mut delh = d;
    let mut q1 = 0.0;
    let mut q2 = 1.0;
    let mut q = a1;
    let mut c = a1;
    let mut a = -a1;
    let mut s = 1.0 + q * delh;
    let mut converged = false;
    for i in 2..=BESSEL_MAX_ITER {
        a -= 2.0 * (i as f64 - 1.0);
        c = -a * c / i as f64;
        let qnew = (q1 - b * q2) / a;
        q1 = q2;
        q2 = qnew;
        q += c * qnew;
        b += 2.0;
        d = 1.0 / (b + a * d);
        delh *= b * d - 1.0;
        h += delh;
        let dels = q * delh;
        s += dels;
        if (dels / s).abs() < BESSEL_EPS {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::Numerical(format!(
            "bessel_k continued fraction failed to converge for mu={mu}, x={x}"
        )));
    }
    h *= a1;
    let k_mu = (std::f64::consts::PI / (2.0 * x)).sqrt() * (-x).exp() / s;
    let k_mu1 = k_mu * (mu + x + 0.5 - h) / x;
    Ok((k_mu, k_mu1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn gamma_known_values() {
        assert_relative_eq!(
            gamma(0.5),
            std::f64::consts::PI.sqrt(),
            max_relative = 1e-13
        );
        assert_relative_eq!(gamma(1.0), 1.0, max_relative = 1e-13);
        assert_relative_eq!(
            gamma(1.5),
            0.5 * std::f64::consts::PI.sqrt(),
            max_relative = 1e-13
        );
        assert_relative_eq!(gamma(5.0), 24.0, max_relative = 1e-13);
        assert_relative_eq!(gamma(10.5), 1_133_278.388_948_785_6, max_relative = 1e-12);
    }

    #[test]
    fn bessel_k_half_integer_closed_forms() {
        // K_{1/2}(x) = sqrt(pi/(2x)) e^{-x}
        // K_{3/2}(x) = K_{1/2}(x) (1 + 1/x)
        // K_{5/2}(x) = K_{1/2}(x) (1 + 3/x + 3/x^2)
        for &x in &[0.05, 0.3, 1.0, 1.9, 2.1, 5.0, 20.0, 100.0] {
            let k_half = (std::f64::consts::PI / (2.0 * x)).sqrt() * (-x).exp();
            assert_relative_eq!(bessel_k(0.5, x).unwrap(), k_half, max_relative = 1e-12);
            assert_relative_eq!(
                bessel_k(1.5, x).unwrap(),
                k_half * (1.0 + 1.0 / x),
                max_relative = 1e-12
            );
            assert_relative_eq!(
                bessel_k(2.5, x).unwrap(),
                k_half * (1.0 + 3.0 / x + 3.0 / (x * x)),
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn bessel_k_reference_values() {
        // Frozen independent references (SciPy 1.x, scipy.special.kv).
        let cases = [
            (0.3, 0.5, 0.976_474_124_381_790_9),
            (1.0, 0.1, 9.853_844_780_870_606),
            (1.0, 1.0, 0.601_907_230_197_234_6),
            (2.2, 3.7, 0.027_758_721_957_934_624),
            (3.7, 25.0, 4.529_331_545_062_073e-12),
            (0.25, 2.0, 0.115_378_276_840_849_18),
            (4.8, 0.03, 5_070_479_668.594_933_5),
            (1.0, 18.0, 4.591_249_627_740_243_5e-9),
            (0.05, 1.3, 0.278_454_071_030_926_5),
        ];
        for &(nu, x, expected) in &cases {
            assert_relative_eq!(bessel_k(nu, x).unwrap(), expected, max_relative = 1e-11);
        }
    }

    #[test]
    fn bessel_k_rejects_bad_input() {
        assert!(bessel_k(-1.0, 1.0).is_err());
        assert!(bessel_k(1.0, 0.0).is_err());
        assert!(bessel_k(1.0, -2.0).is_err());
        assert!(bessel_k(f64::NAN, 1.0).is_err());
    }

    #[test]
    fn bessel_k_underflows_to_zero() {
        assert_eq!(bessel_k(1.0, 800.0).unwrap(), 0.0);
    }
}

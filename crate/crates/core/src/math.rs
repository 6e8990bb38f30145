//! Numeric kernels: Gauss–Legendre quadrature with adaptive bisection, and
//! double-precision normal distribution functions.

use crate::error::{Error, Result};

/// Order of the Gauss–Legendre rule used on each panel.
pub const GL_ORDER: usize = 16;

/// Default absolute tolerance for expected-value integrals.
pub const DEFAULT_QUAD_TOL: f64 = 1e-8;

/// Panel budget for the adaptive scheme.
pub const MAX_PANELS: usize = 4096;

/// Nodes and weights of the n-point Gauss–Legendre rule on [-1, 1].
///
/// Computed by Newton iteration on the Legendre recurrence; accurate to
/// machine precision for the orders used here.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 2);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let mut p0 = 1.0;
            let mut p1 = x;
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            dp = nf * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// A fixed Gauss–Legendre rule, reusable across panels.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(order: usize) -> Self {
        let (nodes, weights) = gauss_legendre(order);
        Self { nodes, weights }
    }

    /// Integral of `f` over [a, b] with the fixed rule; `K` integrand
    /// components are evaluated together so paired expectations share
    /// function evaluations.
    pub fn panel<const K: usize>(&self, f: &impl Fn(f64) -> [f64; K], a: f64, b: f64) -> [f64; K] {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let mut acc = [0.0; K];
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            let v = f(mid + half * x);
            for k in 0..K {
                acc[k] += w * v[k];
            }
        }
        for a in &mut acc {
            *a *= half;
        }
        acc
    }
}

/// Result of an adaptive integration.
#[derive(Debug, Clone, Copy)]
pub struct Quadrature<const K: usize> {
    pub value: [f64; K],
    /// Accumulated local error estimates (conservative).
    pub error_estimate: f64,
    pub panels: usize,
}

/// Adaptive Gauss–Legendre integration of a `K`-component integrand over
/// [a, b] to absolute tolerance `tol`.
///
/// Each panel is accepted when the bisected estimate agrees with the whole
/// panel within its share of the tolerance. Exhausting the panel budget
/// returns the best value found together with the achieved error estimate.
pub fn integrate_adaptive<const K: usize>(
    rule: &GaussLegendre,
    f: impl Fn(f64) -> [f64; K],
    a: f64,
    b: f64,
    tol: f64,
) -> Result<Quadrature<K>> {
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::NonFinite("integration bounds".into()));
    }
    let mut total = [0.0; K];
    let mut err_acc = 0.0;
    let mut panels = 0usize;
    if a >= b {
        return Ok(Quadrature { value: total, error_estimate: 0.0, panels });
    }
    let span = b - a;
    let mut stack: Vec<(f64, f64, [f64; K])> = vec![(a, b, rule.panel(&f, a, b))];
    while let Some((lo, hi, whole)) = stack.pop() {
        let mid = 0.5 * (lo + hi);
        let left = rule.panel(&f, lo, mid);
        let right = rule.panel(&f, mid, hi);
        let mut disc: f64 = 0.0;
        for k in 0..K {
            disc = disc.max((left[k] + right[k] - whole[k]).abs());
        }
        let local_tol = tol * ((hi - lo) / span).max(f64::EPSILON);
        panels += 1;
        let out_of_budget = panels + stack.len() >= MAX_PANELS;
        if disc <= local_tol || (hi - lo) < 1e-12 * span || out_of_budget {
            for k in 0..K {
                total[k] += left[k] + right[k];
            }
            err_acc += disc;
            if out_of_budget {
                // Flush the remaining segments with their current estimates.
                for (slo, shi, sw) in stack.drain(..) {
                    let smid = 0.5 * (slo + shi);
                    let sl = rule.panel(&f, slo, smid);
                    let sr = rule.panel(&f, smid, shi);
                    let mut sdisc: f64 = 0.0;
                    for k in 0..K {
                        total[k] += sl[k] + sr[k];
                        sdisc = sdisc.max((sl[k] + sr[k] - sw[k]).abs());
                    }
                    err_acc += sdisc;
                }
                if err_acc > tol {
                    return Err(Error::QuadratureNotConverged {
                        value: total[0],
                        achieved: err_acc,
                        requested: tol,
                    });
                }
            }
        } else {
            stack.push((lo, mid, left));
            stack.push((mid, hi, right));
        }
    }
    Ok(Quadrature { value: total, error_estimate: err_acc, panels })
}

/// Scalar convenience wrapper around [`integrate_adaptive`].
pub fn integrate(
    rule: &GaussLegendre,
    f: impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    tol: f64,
) -> Result<Quadrature<1>> {
    integrate_adaptive(rule, |x| [f(x)], a, b, tol)
}

/// Error function, accurate to ~1e-15.
///
/// Small arguments use the all-positive-term confluent series; large ones the
/// Lentz continued fraction for erfc.
pub fn erf(x: f64) -> f64 {
    if x < 0.0 {
        return -erf(-x);
    }
    if x < 3.0 {
        // erf(x) = 2x/sqrt(pi) * exp(-x^2) * sum_{n>=0} (2x^2)^n / (2n+1)!!
        let two_x2 = 2.0 * x * x;
        let mut term = 1.0;
        let mut sum = 1.0;
        let mut n = 1.0;
        while term > 1e-18 * sum {
            term *= two_x2 / (2.0 * n + 1.0);
            sum += term;
            n += 1.0;
        }
        2.0 * x / std::f64::consts::PI.sqrt() * (-x * x).exp() * sum
    } else {
        1.0 - erfc(x)
    }
}

/// Complementary error function.
pub fn erfc(x: f64) -> f64 {
    if x < 3.0 {
        return 1.0 - erf(x);
    }
    // Lentz continued fraction: erfc(x) = exp(-x^2)/(x sqrt(pi)) * F,
    // F = 1/(1+ a1/(1+ a2/(1+ ...))), a_n = n/(2x^2).
    let inv2x2 = 1.0 / (2.0 * x * x);
    let tiny = 1e-300;
    let mut f = tiny;
    let mut c = f;
    let mut d = 0.0;
    let mut n = 0.0;
    for _ in 0..200 {
        let a = if n == 0.0 { 1.0 } else { n * inv2x2 };
        let b = 1.0;
        d = b + a * d;
        if d.abs() < tiny {
            d = tiny;
        }
        c = b + a / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = 1.0 / d;
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
        n += 1.0;
    }
    (-x * x).exp() / (x * std::f64::consts::PI.sqrt()) * f
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Standard normal quantile (Wichura's PPND16 rational approximations,
/// absolute error below 1e-15 over (0, 1)).
#[allow(clippy::excessive_precision)] // published coefficients kept verbatim
pub fn inverse_normal_cdf(p: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0, "quantile requires p in (0,1), got {p}");
    const A: [f64; 8] = [
        3.387_132_872_796_366_5,
        133.141_667_891_784_38,
        1_971.590_950_306_551_3,
        13_731.693_765_509_461,
        45_921.953_931_549_87,
        67_265.770_927_008_7,
        33_430.575_583_588_13,
        2_509.080_928_730_122_7,
    ];
    const B: [f64; 8] = [
        1.0,
        42.313_330_701_600_91,
        687.187_007_492_057_9,
        5_394.196_021_424_751,
        21_213.794_301_586_597,
        39_307.895_800_092_71,
        28_729.085_735_721_943,
        5_226.495_278_852_545_5,
    ];
    const C: [f64; 8] = [
        1.423_437_110_749_683_5,
        4.630_337_846_156_546,
        5.769_497_221_460_691,
        3.647_848_324_763_204_5,
        1.270_458_252_452_368_4,
        0.241_780_725_177_450_6,
        0.022_723_844_989_269_184,
        0.000_774_545_014_278_341_4,
    ];
    const D: [f64; 8] = [
        1.0,
        2.053_191_626_637_759,
        1.676_384_830_183_803_8,
        0.689_767_334_985_1,
        0.148_103_976_427_480_1,
        0.015_198_666_563_616_457,
        0.000_547_593_808_499_534_5,
        1.050_750_071_644_416_9e-9,
    ];
    const E: [f64; 8] = [
        6.657_904_643_501_103,
        5.463_784_911_164_114,
        1.784_826_539_917_291_3,
        0.296_560_571_828_504_87,
        0.026_532_189_526_576_124,
        0.001_242_660_947_388_078_4,
        2.711_555_568_743_487_6e-5,
        2.010_334_399_292_288_1e-7,
    ];
    const F: [f64; 8] = [
        1.0,
        0.599_832_206_555_887_9,
        0.136_929_880_922_735_8,
        0.014_875_361_290_850_615,
        0.000_786_869_131_145_613_26,
        1.846_318_317_510_054_8e-5,
        1.421_511_758_316_445_9e-7,
        2.044_263_103_389_939_7e-15,
    ];
    fn poly(c: &[f64; 8], r: f64) -> f64 {
        c.iter().rev().fold(0.0, |acc, &ci| acc * r + ci)
    }
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180_625 - q * q;
        return q * poly(&A, r) / poly(&B, r);
    }
    let mut r = if q < 0.0 { p } else { 1.0 - p };
    r = (-r.ln()).sqrt();
    let val = if r <= 5.0 {
        let r = r - 1.6;
        poly(&C, r) / poly(&D, r)
    } else {
        let r = r - 5.0;
        poly(&E, r) / poly(&F, r)
    };
    if q < 0.0 {
        -val
    } else {
        val
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gl_weights_sum_to_two() {
        for n in [2, 8, 16, 32] {
            let (_, w) = gauss_legendre(n);
            let sum: f64 = w.iter().sum();
            assert!((sum - 2.0).abs() < 1e-13, "n={n} sum={sum}");
        }
    }

    #[test]
    fn gl16_exact_on_high_degree_polynomials() {
        let rule = GaussLegendre::new(GL_ORDER);
        // Exact for degree <= 2*16 - 1 = 31.
        let v = rule.panel(&|x| [x.powi(30)], -1.0, 1.0);
        assert!((v[0] - 2.0 / 31.0).abs() < 1e-14, "got {}", v[0]);
        let v = rule.panel(&|x| [x.powi(31)], -1.0, 1.0);
        assert!(v[0].abs() < 1e-14);
    }

    #[test]
    fn adaptive_matches_known_integrals() {
        let rule = GaussLegendre::new(GL_ORDER);
        let q = integrate(&rule, |x| x * x, 0.0, 1.0, 1e-12).unwrap();
        assert!((q.value[0] - 1.0 / 3.0).abs() < 1e-12);
        let q = integrate(&rule, |x| x.sin(), 0.0, std::f64::consts::PI, 1e-12).unwrap();
        assert!((q.value[0] - 2.0).abs() < 1e-11);
        // Standard normal density integrates to ~1 over a wide interval.
        let pdf = |x: f64| (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let q = integrate(&rule, pdf, -10.0, 10.0, 1e-12).unwrap();
        assert!((q.value[0] - 1.0).abs() < 1e-11);
    }

    #[test]
    fn adaptive_handles_kinked_integrand() {
        let rule = GaussLegendre::new(GL_ORDER);
        let q = integrate(&rule, |x: f64| x.abs().sqrt(), -1.0, 1.0, 1e-10).unwrap();
        assert!((q.value[0] - 4.0 / 3.0).abs() < 1e-8, "got {}", q.value[0]);
    }

    #[test]
    fn paired_integration_shares_evaluations() {
        let rule = GaussLegendre::new(GL_ORDER);
        let q = integrate_adaptive(&rule, |x| [x, x * x], 0.0, 2.0, 1e-12).unwrap();
        assert!((q.value[0] - 2.0).abs() < 1e-12);
        assert!((q.value[1] - 8.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn erf_reference_values() {
        assert!((erf(0.5) - 0.5204998778130465).abs() < 1e-14);
        assert!((erf(1.0) - 0.8427007929497149).abs() < 1e-14);
        assert!((erf(2.0) - 0.9953222650189527).abs() < 1e-14);
        assert!((erf(-1.0) + 0.8427007929497149).abs() < 1e-14);
    }

    #[test]
    fn normal_cdf_reference_values() {
        assert!((normal_cdf(0.0) - 0.5).abs() < 1e-15);
        assert!((normal_cdf(1.0) - 0.8413447460685429).abs() < 1e-14);
        assert!((normal_cdf(-1.0) - 0.15865525393145705).abs() < 1e-14);
        assert!((normal_cdf(1.959963984540054) - 0.975).abs() < 1e-13);
        assert!((normal_cdf(3.0) - 0.9986501019683699).abs() < 1e-14);
    }

    #[test]
    fn quantile_reference_values() {
        assert_eq!(inverse_normal_cdf(0.5), 0.0);
        assert!((inverse_normal_cdf(0.975) - 1.959963984540054).abs() < 1e-12);
        assert!((inverse_normal_cdf(0.025) + 1.959963984540054).abs() < 1e-12);
        assert!((inverse_normal_cdf(0.8413447460685429) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn quantile_inverts_cdf() {
        for i in 1..200 {
            let p = i as f64 / 200.0;
            let x = inverse_normal_cdf(p);
            assert!((normal_cdf(x) - p).abs() < 1e-12, "p={p}");
        }
        for p in [1e-9, 1e-6, 1e-3, 1.0 - 1e-6, 1.0 - 1e-9] {
            let x = inverse_normal_cdf(p);
            assert!((normal_cdf(x) - p).abs() < 1e-11 * p.max(1e-3), "p={p}");
        }
    }
}

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{positive, Error, Result};

/// One operating point of an R-D curve.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RdPoint {
    /// Bits per second.
    pub bitrate: f64,
    /// dB.
    pub psnr: f64,
}

impl RdPoint {
    pub fn new(bitrate: f64, psnr: f64) -> Self {
        Self { bitrate, psnr }
    }
}

/// `|R_t − R_a| / R_t` in permille.
pub fn bitrate_error(target: f64, actual: f64) -> Result<f64> {
    let target = positive("target bitrate", target)?;
    Ok((target - actual).abs() / target * 1000.0)
}

const MIN_POINTS: usize = 4;

fn check_curve(curve: &[RdPoint], name: &str) -> Result<(f64, f64)> {
    if curve.len() < MIN_POINTS {
        return Err(Error::DegenerateCurve(format!("{name} has {} points, need {MIN_POINTS}", curve.len())));
    }
    for p in curve {
        if !(p.bitrate > 0.0 && p.bitrate.is_finite() && p.psnr.is_finite()) {
            return Err(Error::DegenerateCurve(format!("{name} has an invalid point {p:?}")));
        }
    }
    let mut psnrs: Vec<f64> = curve.iter().map(|p| p.psnr).collect();
    psnrs.sort_by(f64::total_cmp);
    if psnrs.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::DegenerateCurve(format!("{name} repeats a PSNR value")));
    }
    Ok((psnrs[0], psnrs[psnrs.len() - 1]))
}

/// Least-squares cubic for `log10(rate)` against `x = (psnr − center)/half`.
fn fit_cubic(curve: &[RdPoint], center: f64, half: f64) -> Result<[f64; 4]> {
    let n = curve.len();
    let design = DMatrix::from_fn(n, 4, |r, c| ((curve[r].psnr - center) / half).powi(c as i32));
    let rhs = DVector::from_iterator(n, curve.iter().map(|p| p.bitrate.log10()));
    let svd = design.svd(true, true);
    let smax = svd.singular_values.max();
    if svd.rank(smax * 1e-12) < 4 {
        return Err(Error::DegenerateCurve("cubic fit is rank deficient".into()));
    }
    let sol = svd
        .solve(&rhs, smax * 1e-12)
        .map_err(|e| Error::DegenerateCurve(e.to_string()))?;
    Ok([sol[0], sol[1], sol[2], sol[3]])
}

/// Bjøntegaard rate difference of `curve_b` against `curve_a`, in percent.
/// Negative values mean `curve_b` needs fewer bits for the same quality.
pub fn bd_rate(curve_a: &[RdPoint], curve_b: &[RdPoint]) -> Result<f64> {
    let (a_lo, a_hi) = check_curve(curve_a, "curve_a")?;
    let (b_lo, b_hi) = check_curve(curve_b, "curve_b")?;
    let lo = a_lo.max(b_lo);
    let hi = a_hi.min(b_hi);
    if hi <= lo {
        return Err(Error::DegenerateCurve("PSNR ranges do not overlap".into()));
    }
    let center = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    let pa = fit_cubic(curve_a, center, half)?;
    let pb = fit_cubic(curve_b, center, half)?;
    // Mean of a cubic over x in [-1, 1]: the odd terms integrate to zero.
    let mean = |p: [f64; 4]| p[0] + p[2] / 3.0;
    Ok((10f64.powf(mean(pb) - mean(pa)) - 1.0) * 100.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn curve(points: &[(f64, f64)]) -> Vec<RdPoint> {
        points.iter().map(|&(r, p)| RdPoint::new(r, p)).collect()
    }

    // Normal equations on mean-centred PSNR solved by Gaussian elimination, then
    // composite Simpson over the overlap.
    fn oracle(a: &[RdPoint], b: &[RdPoint]) -> f64 {
        fn fit(c: &[RdPoint]) -> ([f64; 4], f64) {
            let shift = c.iter().map(|p| p.psnr).sum::<f64>() / c.len() as f64;
            let mut m = [[0.0f64; 5]; 4];
            for p in c {
                let (t, y) = (p.psnr - shift, p.bitrate.log10());
                for i in 0..4 {
                    for j in 0..4 {
                        m[i][j] += t.powi((i + j) as i32);
                    }
                    m[i][4] += t.powi(i as i32) * y;
                }
            }
            for col in 0..4 {
                let piv = (col..4).max_by(|&x, &y| m[x][col].abs().total_cmp(&m[y][col].abs())).unwrap();
                m.swap(col, piv);
                for r in 0..4 {
                    if r != col {
                        let f = m[r][col] / m[col][col];
                        for k in col..5 {
                            m[r][k] -= f * m[col][k];
                        }
                    }
                }
            }
            ([m[0][4] / m[0][0], m[1][4] / m[1][1], m[2][4] / m[2][2], m[3][4] / m[3][3]], shift)
        }
        let eval = |(p, shift): ([f64; 4], f64), x: f64| {
            let t = x - shift;
            p[0] + p[1] * t + p[2] * t * t + p[3] * t * t * t
        };
        let min = |c: &[RdPoint]| c.iter().map(|p| p.psnr).fold(f64::MAX, f64::min);
        let max = |c: &[RdPoint]| c.iter().map(|p| p.psnr).fold(f64::MIN, f64::max);
        let (lo, hi) = (min(a).max(min(b)), max(a).min(max(b)));
        let (fa, fb) = (fit(a), fit(b));
        let n = 20_000;
        let h = (hi - lo) / n as f64;
        let mut s = 0.0;
        for i in 0..=n {
            let x = lo + i as f64 * h;
            let w = if i == 0 || i == n { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * (eval(fb, x) - eval(fa, x));
        }
        let avg = s * h / 3.0 / (hi - lo);
        (10f64.powf(avg) - 1.0) * 100.0
    }

    #[test]
    fn bitrate_error_examples() {
        assert_eq!(bitrate_error(1000.0, 1000.0).unwrap(), 0.0);
        assert!((bitrate_error(1000.0, 995.0).unwrap() - 5.0).abs() < 1e-12);
        assert!((bitrate_error(1000.0, 1005.0).unwrap() - 5.0).abs() < 1e-12);
        assert!(bitrate_error(0.0, 1.0).is_err());
        assert!(bitrate_error(-5.0, 1.0).is_err());
    }

    #[test]
    fn identical_and_scaled_curves() {
        let a = curve(&[(100.0, 30.0), (180.0, 33.0), (320.0, 36.0), (600.0, 39.0)]);
        assert!(bd_rate(&a, &a).unwrap().abs() < 1e-9);
        let b: Vec<_> = a.iter().map(|p| RdPoint::new(p.bitrate * 0.9, p.psnr)).collect();
        assert!((bd_rate(&a, &b).unwrap() + 10.0).abs() < 1e-6);
    }

    #[test]
    fn hand_instance_matches_quadrature() {
        let a = curve(&[(1000.0, 32.1), (1600.0, 34.0), (2700.0, 36.3), (4400.0, 38.2)]);
        let b = curve(&[(950.0, 32.4), (1500.0, 34.5), (2400.0, 36.4), (4100.0, 38.9)]);
        let got = bd_rate(&a, &b).unwrap();
        let want = oracle(&a, &b);
        assert!((got - want).abs() < 0.01, "{got} vs {want}");
        assert!(got < 0.0);
    }

    #[test]
    fn degenerate_inputs() {
        let a = curve(&[(100.0, 30.0), (180.0, 33.0), (320.0, 36.0), (600.0, 39.0)]);
        assert!(bd_rate(&a[..3], &a).is_err());
        let dup = curve(&[(100.0, 30.0), (180.0, 30.0), (320.0, 36.0), (600.0, 39.0)]);
        assert!(bd_rate(&dup, &a).is_err());
        let far = curve(&[(100.0, 50.0), (180.0, 53.0), (320.0, 56.0), (600.0, 59.0)]);
        assert!(matches!(bd_rate(&a, &far), Err(Error::DegenerateCurve(_))));
        let zero = curve(&[(0.0, 30.0), (180.0, 33.0), (320.0, 36.0), (600.0, 39.0)]);
        assert!(bd_rate(&zero, &a).is_err());
    }

    fn monotone_curve() -> impl Strategy<Value = Vec<RdPoint>> {
        (prop::collection::vec((0.05f64..0.6, 0.5f64..3.0), 4..7), 50.0f64..500.0, 25.0f64..32.0).prop_map(
            |(steps, r0, p0)| {
                let (mut r, mut p) = (r0, p0);
                steps
                    .into_iter()
                    .map(|(dr, dp)| {
                        r *= 1.0 + dr;
                        p += dp;
                        RdPoint::new(r, p)
                    })
                    .collect()
            },
        )
    }

    proptest! {
        #[test]
        fn antisymmetric(a in monotone_curve(), b in monotone_curve()) {
            if let (Ok(ab), Ok(ba)) = (bd_rate(&a, &b), bd_rate(&b, &a)) {
                prop_assert!((ab + ba / (1.0 + ba / 100.0)).abs() < 0.05);
            }
        }

        #[test]
        fn agrees_with_quadrature(a in monotone_curve(), b in monotone_curve()) {
            if let Ok(v) = bd_rate(&a, &b) {
                let o = oracle(&a, &b);
                prop_assert!((v - o).abs() <= 0.01 * (1.0 + o.abs()), "{} vs {}", v, o);
            }
        }
    }
}

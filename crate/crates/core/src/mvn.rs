//! Truncated multivariate normal draws and box probabilities.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::stochastics::{log_norm_interval, norm_cdf, truncated_normal_quantile, RandomStream};

// Gauss-Legendre nodes and weights on [-1, 1] (positive half).
const GL6_X: [f64; 3] = [0.932_469_514_203_152_2, 0.661_209_386_466_264_7, 0.238_619_186_083_197];
const GL6_W: [f64; 3] = [0.171_324_492_379_170_5, 0.360_761_573_048_138_4, 0.467_913_934_572_690_4];
const GL12_X: [f64; 6] = [
    0.981_560_634_246_719_1,
    0.904_117_256_370_475,
    0.769_902_674_194_305,
    0.587_317_954_286_617_1,
    0.367_831_498_998_180_2,
    0.125_233_408_511_469_2,
];
const GL12_W: [f64; 6] = [
    0.047_175_336_386_511_77,
    0.106_939_325_995_318_3,
    0.160_078_328_543_346_4,
    0.203_167_426_723_065_9,
    0.233_492_536_538_354_7,
    0.249_147_045_813_402_9,
];
const GL20_X: [f64; 10] = [
    0.993_128_599_185_094_9,
    0.963_971_927_277_913_8,
    0.912_234_428_251_326,
    0.839_116_971_822_218_8,
    0.746_331_906_460_150_8,
    0.636_053_680_726_515,
    0.510_867_001_950_827_1,
    0.373_706_088_715_419_6,
    0.227_785_851_141_645_1,
    0.076_526_521_133_497_33,
];
const GL20_W: [f64; 10] = [
    0.017_614_007_139_152_12,
    0.040_601_429_800_386_94,
    0.062_672_048_334_109_06,
    0.083_276_741_576_704_75,
    0.101_930_119_817_240_4,
    0.118_194_531_961_518_4,
    0.131_688_638_449_176_6,
    0.142_096_109_318_382_1,
    0.149_172_986_472_603_7,
    0.152_753_387_130_725_9,
];

/// `P(X > h, Y > k)` for standard bivariate normal with correlation `r`
/// (Genz's algorithm, double precision).
pub fn bvn_upper(h: f64, k: f64, r: f64) -> f64 {
    Bvn::new(r).upper(h, k)
}

/// Bivariate normal orthant probabilities for a fixed correlation, with the
/// correlation-only quadrature terms computed once.
#[derive(Clone, Debug)]
pub struct Bvn {
    r: f64,
    // Weight and node terms for the |r| < 0.925 branch: (w, sn, 1 / (1 - sn^2)).
    small: Vec<(f64, f64, f64)>,
    // Node terms for the |r| >= 0.925 branch: (a * w, xs, rs).
    large: Vec<(f64, f64, f64)>,
    asr: f64,
    a_s: f64,
}

impl Bvn {
    pub fn new(r: f64) -> Self {
        let (xs, ws): (&[f64], &[f64]) = if r.abs() < 0.3 {
            (&GL6_X, &GL6_W)
        } else if r.abs() < 0.75 {
            (&GL12_X, &GL12_W)
        } else {
            (&GL20_X, &GL20_W)
        };
        let mut small = Vec::new();
        let mut large = Vec::new();
        let asr = r.asin();
        let a_s = (1.0 - r) * (1.0 + r);
        if r.abs() < 0.925 {
            for (x, w) in xs.iter().zip(ws) {
                for sign in [-1.0, 1.0] {
                    let sn = (asr * (sign * x + 1.0) / 2.0).sin();
                    small.push((*w, sn, 1.0 / (1.0 - sn * sn)));
                }
            }
        } else if r.abs() < 1.0 {
            let a = a_s.sqrt() / 2.0;
            for (x, w) in xs.iter().zip(ws) {
                for sign in [-1.0, 1.0] {
                    let xs2 = (a * (sign * x + 1.0)).powi(2);
                    large.push((a * w, xs2, (1.0 - xs2).sqrt()));
                }
            }
        }
        Self {
            r,
            small,
            large,
            asr,
            a_s,
        }
    }

    pub fn upper(&self, h: f64, k: f64) -> f64 {
        if h == f64::INFINITY || k == f64::INFINITY {
            return 0.0;
        }
        if h == f64::NEG_INFINITY {
            return if k == f64::NEG_INFINITY { 1.0 } else { norm_cdf(-k) };
        }
        if k == f64::NEG_INFINITY {
            return norm_cdf(-h);
        }
        let r = self.r;
        let mut k = k;
        let mut hk = h * k;
        let mut bvn = 0.0;
        if r.abs() < 0.925 {
            let hs = (h * h + k * k) / 2.0;
            for (w, sn, inv) in &self.small {
                bvn += w * ((sn * hk - hs) * inv).exp();
            }
            bvn = bvn * self.asr / (4.0 * PI) + norm_cdf(-h) * norm_cdf(-k);
        } else {
            if r < 0.0 {
                k = -k;
                hk = -hk;
            }
            if r.abs() < 1.0 {
                let a_s = self.a_s;
                let a = a_s.sqrt();
                let bs = (h - k) * (h - k);
                let c = (4.0 - hk) / 8.0;
                let d = (12.0 - hk) / 16.0;
                bvn = a
                    * (-(bs / a_s + hk) / 2.0).exp()
                    * (1.0 - c * (bs - a_s) * (1.0 - d * bs / 5.0) / 3.0
                        + c * d * a_s * a_s / 5.0);
                if hk > -160.0 {
                    let b = bs.sqrt();
                    bvn -= (-hk / 2.0).exp()
                        * (2.0 * PI).sqrt()
                        * norm_cdf(-b / a)
                        * b
                        * (1.0 - c * bs * (1.0 - d * bs / 5.0) / 3.0);
                }
                for (aw, xs2, rs) in &self.large {
                    let tail = (-bs / (2.0 * xs2) - hk / (1.0 + rs)).exp() / rs;
                    let poly =
                        (-(bs / xs2 + hk) / 2.0).exp() * (1.0 + c * xs2 * (1.0 + d * xs2));
                    bvn += aw * (tail - poly);
                }
                bvn = -bvn / (2.0 * PI);
            }
            if r > 0.0 {
                bvn += norm_cdf(-h.max(k));
            } else {
                // `k` carries the sign flip here.
                bvn = -bvn + (norm_cdf(-h) - norm_cdf(-k)).max(0.0);
            }
        }
        bvn.clamp(0.0, 1.0)
    }

    /// `P(a <= X <= b)`.
    pub fn rectangle(&self, a: [f64; 2], b: [f64; 2]) -> f64 {
        let p = self.upper(a[0], a[1]) - self.upper(b[0], a[1]) - self.upper(a[0], b[1])
            + self.upper(b[0], b[1]);
        p.clamp(0.0, 1.0)
    }
}

/// `P(a <= X <= b)` for a standard bivariate normal with correlation `r`.
pub fn bvn_rectangle(a: [f64; 2], b: [f64; 2], r: f64) -> f64 {
    Bvn::new(r).rectangle(a, b)
}

const GL8_X: [f64; 4] = [
    0.183_434_642_495_649_8,
    0.525_532_409_916_329,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_3,
];
const GL8_W: [f64; 4] = [
    0.362_683_783_378_362,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_5,
    0.101_228_536_290_376_3,
];

/// `P(lo <= X <= hi)` for `X ~ N3(mean, cov)`, by integrating the bivariate
/// rectangle probability of the last two coordinates over the first.
pub fn box_probability3(mean: &Vector3<f64>, cov: &Matrix3<f64>, lo: &[f64; 3], hi: &[f64; 3]) -> f64 {
    let s1 = cov[(0, 0)].sqrt();
    let a1 = ((lo[0] - mean[0]) / s1).max(-10.0);
    let b1 = ((hi[0] - mean[0]) / s1).min(10.0);
    if !(a1 < b1) {
        return 0.0;
    }
    let s22 = cov[(1, 1)] - cov[(1, 0)] * cov[(1, 0)] / cov[(0, 0)];
    let s33 = cov[(2, 2)] - cov[(2, 0)] * cov[(2, 0)] / cov[(0, 0)];
    let s23 = cov[(1, 2)] - cov[(1, 0)] * cov[(2, 0)] / cov[(0, 0)];
    let sd2 = s22.max(0.0).sqrt();
    let sd3 = s33.max(0.0).sqrt();
    let rho = if sd2 > 0.0 && sd3 > 0.0 {
        (s23 / (sd2 * sd3)).clamp(-1.0, 1.0)
    } else {
        0.0
    };
    let bvn = Bvn::new(rho);
    let slope2 = cov[(1, 0)] / s1;
    let slope3 = cov[(2, 0)] / s1;
    let inner = |z1: f64| -> f64 {
        let m2 = mean[1] + slope2 * z1;
        let m3 = mean[2] + slope3 * z1;
        let interval = |m: f64, sd: f64, lo: f64, hi: f64| -> [f64; 2] {
            if sd > 0.0 {
                [(lo - m) / sd, (hi - m) / sd]
            } else if m >= lo && m <= hi {
                [f64::NEG_INFINITY, f64::INFINITY]
            } else {
                [f64::INFINITY, f64::INFINITY]
            }
        };
        let i2 = interval(m2, sd2, lo[1], hi[1]);
        let i3 = interval(m3, sd3, lo[2], hi[2]);
        bvn.rectangle([i2[0], i3[0]], [i2[1], i3[1]])
    };
    let panels = 40;
    let width = (b1 - a1) / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let centre = a1 + (p as f64 + 0.5) * width;
        let half = width / 2.0;
        for (x, w) in GL8_X.iter().zip(GL8_W) {
            for z in [centre - half * x, centre + half * x] {
                let phi = (-0.5 * z * z).exp() / (2.0 * PI).sqrt();
                total += w * half * phi * inner(z);
            }
        }
    }
    total.clamp(0.0, 1.0)
}

/// Log density of `N3(mean, cov)` at `x` given the Cholesky factor of `cov`.
pub fn mvn3_logpdf(x: &Vector3<f64>, mean: &Vector3<f64>, chol: &nalgebra::Cholesky<f64, nalgebra::U3>) -> f64 {
    let d = x - mean;
    let z = chol.l().solve_lower_triangular(&d).expect("triangular factor is nonsingular");
    let log_det: f64 = (0..3).map(|i| chol.l()[(i, i)].ln()).sum::<f64>() * 2.0;
    -0.5 * (3.0 * crate::numeric::LN_2PI + log_det + z.norm_squared())
}

/// Exact draw from `N3(mean, cov)` truncated to the box by rejection; `None`
/// when no draw lands inside within `max_tries`.
pub fn truncated_mvn3_rejection(
    mean: &Vector3<f64>,
    chol: &nalgebra::Cholesky<f64, nalgebra::U3>,
    lo: &[f64; 3],
    hi: &[f64; 3],
    max_tries: usize,
    rng: &mut RandomStream,
) -> Option<Vector3<f64>> {
    let l = chol.l();
    for _ in 0..max_tries {
        let z = Vector3::new(rng.std_normal(), rng.std_normal(), rng.std_normal());
        let x = mean + l * z;
        if (0..3).all(|i| x[i] >= lo[i] && x[i] <= hi[i]) {
            return Some(x);
        }
    }
    None
}

/// Gibbs sampler for `N_d(mean, cov)` truncated to a box: `sweeps` passes of
/// univariate truncated-normal draws from the full conditionals.
pub fn truncated_mvn_gibbs(
    mean: &[f64],
    cov: &DMatrix<f64>,
    lo: &[f64],
    hi: &[f64],
    sweeps: usize,
    start: Option<&[f64]>,
    rng: &mut RandomStream,
) -> Result<Vec<f64>> {
    let d = mean.len();
    if cov.nrows() != d || cov.ncols() != d || lo.len() != d || hi.len() != d {
        return Err(Error::Dimension("truncated normal dimensions".into()));
    }
    if (0..d).any(|i| !(lo[i] < hi[i])) {
        return Err(Error::InvalidParameter("empty truncation box".into()));
    }
    let prec = cov
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Numeric("covariance is not positive definite".into()))?
        .inverse();
    let mut x: Vec<f64> = match start {
        Some(s) if s.len() == d => s.to_vec(),
        Some(_) => return Err(Error::Dimension("start point length".into())),
        None => mean.to_vec(),
    };
    for i in 0..d {
        x[i] = x[i].clamp(lo[i], hi[i]);
    }
    for _ in 0..sweeps {
        for i in 0..d {
            let qii = prec[(i, i)];
            let shift: f64 = (0..d)
                .filter(|j| *j != i)
                .map(|j| prec[(i, j)] * (x[j] - mean[j]))
                .sum();
            let m = mean[i] - shift / qii;
            let sd = (1.0 / qii).sqrt();
            x[i] = truncated_normal_quantile(m, sd, lo[i], hi[i], rng.uniform())?;
        }
    }
    Ok(x)
}

/// `ln P(lo <= X <= hi)` for independent normals with the given means and sds.
pub fn log_box_probability_independent(mean: &[f64], sd: &[f64], lo: &[f64], hi: &[f64]) -> f64 {
    (0..mean.len())
        .map(|i| log_norm_interval((lo[i] - mean[i]) / sd[i], (hi[i] - mean[i]) / sd[i]))
        .sum()
}

/// Convenience: `DVector` view of a slice.
pub fn dvec(xs: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(xs)
}

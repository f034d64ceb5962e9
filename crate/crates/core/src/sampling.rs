//! Seeded RNG streams and the distribution samplers used by the simulation
//! scenarios. Standard-normal variates come from the inverse CDF, so every
//! draw consumes exactly one uniform and replays identically from a stream.

use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Deterministic per-task RNG: one master seed, one stream id per replicate.
/// Streams are independent, so parallel tasks never share state and results
/// do not depend on the worker count.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Uniform draw strictly inside (0, 1): bin midpoints of the 53-bit grid.
#[inline]
pub fn open_unit(rng: &mut impl Rng) -> f64 {
    ((rng.random::<u64>() >> 11) as f64 + 0.5) * (1.0 / 9007199254740992.0)
}

/// Standard normal quantile by the Wichura AS241 rational approximation
/// (double-precision branch, relative error ~1e-15). Requires u in (0, 1).
pub fn normal_quantile(u: f64) -> Result<f64> {
    if !(u > 0.0 && u < 1.0) {
        return Err(Error::invalid(format!("normal quantile needs u in (0,1), got {u}")));
    }
    #[allow(clippy::excessive_precision)]
    const A: [f64; 8] = [
        3.3871328727963666080e0,
        1.3314166789178437745e2,
        1.9715909503065514427e3,
        1.3731693765509461125e4,
        4.5921953931549871457e4,
        6.7265770927008700853e4,
        3.3430575583588128105e4,
        2.5090809287301226727e3,
    ];
    #[allow(clippy::excessive_precision)]
    const B: [f64; 8] = [
        1.0,
        4.2313330701600911252e1,
        6.8718700749205790830e2,
        5.3941960214247511077e3,
        2.1213794301586595867e4,
        3.9307895800092710610e4,
        2.8729085735721942674e4,
        5.2264952788528545610e3,
    ];
    #[allow(clippy::excessive_precision)]
    const C: [f64; 8] = [
        1.42343711074968357734e0,
        4.63033784615654529590e0,
        5.76949722146069140550e0,
        3.64784832476320460504e0,
        1.27045825245236838258e0,
        2.41780725177450611770e-1,
        2.27238449892691845833e-2,
        7.74545014278341407640e-4,
    ];
    #[allow(clippy::excessive_precision)]
    const D: [f64; 8] = [
        1.0,
        2.05319162663775882187e0,
        1.67638483018380384940e0,
        6.89767334985100004550e-1,
        1.48103976427480074590e-1,
        1.51986665636164571966e-2,
        5.47593808499534494600e-4,
        1.05075007164441684324e-9,
    ];
    #[allow(clippy::excessive_precision)]
    const E: [f64; 8] = [
        6.65790464350110377720e0,
        5.46378491116411436990e0,
        1.78482653991729133580e0,
        2.96560571828504891230e-1,
        2.65321895265761230930e-2,
        1.24266094738807843860e-3,
        2.71155556874348757815e-5,
        2.01033439929228813265e-7,
    ];
    #[allow(clippy::excessive_precision)]
    const F: [f64; 8] = [
        1.0,
        5.99832206555887937690e-1,
        1.36929880922735805310e-1,
        1.48753612908506148525e-2,
        7.86869131145613259100e-4,
        1.84631831751005468180e-5,
        1.42151175831644588870e-7,
        2.04426310338993978564e-15,
    ];
    let q = u - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        return Ok(q * rational(r, &A, &B));
    }
    let r = if q < 0.0 { u } else { 1.0 - u };
    let mut r = (-r.ln()).sqrt();
    let value = if r <= 5.0 {
        r -= 1.6;
        rational(r, &C, &D)
    } else {
        r -= 5.0;
        rational(r, &E, &F)
    };
    Ok(if q < 0.0 { -value } else { value })
}

fn rational(r: f64, num: &[f64; 8], den: &[f64; 8]) -> f64 {
    let mut n = 0.0;
    let mut d = 0.0;
    for i in (0..8).rev() {
        n = n * r + num[i];
        d = d * r + den[i];
    }
    n / d
}

/// One standard normal draw (inverse CDF of one uniform).
#[inline]
pub fn sample_std_normal(rng: &mut impl Rng) -> f64 {
    normal_quantile(open_unit(rng)).expect("open_unit is inside (0,1)")
}

/// tau = (2/pi) * arcsin(rho) for the Gaussian copula.
pub fn tau_from_rho(rho: f64) -> Result<f64> {
    if !(-1.0..=1.0).contains(&rho) {
        return Err(Error::invalid(format!("correlation must be in [-1,1], got {rho}")));
    }
    Ok(2.0 / std::f64::consts::PI * rho.asin())
}

/// rho = sin(pi * tau / 2), inverse of `tau_from_rho`.
pub fn rho_from_tau(tau: f64) -> Result<f64> {
    if !(-1.0..=1.0).contains(&tau) {
        return Err(Error::invalid(format!("Kendall's tau must be in [-1,1], got {tau}")));
    }
    Ok((std::f64::consts::PI * tau / 2.0).sin())
}

/// Gaussian vector sampler with an equicorrelated correlation matrix,
/// Cholesky-factored once.
pub struct EquicorrGaussian {
    factor: DMatrix<f64>,
    means: Vec<f64>,
}

impl EquicorrGaussian {
    pub fn new(p: usize, rho: f64, means: Vec<f64>) -> Result<Self> {
        if p == 0 {
            return Err(Error::invalid("dimension must be positive"));
        }
        if means.len() != p {
            return Err(Error::invalid("mean vector length must match dimension"));
        }
        let lower = if p > 1 { -1.0 / (p as f64 - 1.0) } else { -1.0 };
        if !(rho > lower && rho < 1.0) {
            return Err(Error::invalid(format!(
                "equicorrelation {rho} outside the positive-definite range ({lower}, 1)"
            )));
        }
        let mut sigma = DMatrix::from_element(p, p, rho);
        for i in 0..p {
            sigma[(i, i)] = 1.0;
        }
        let chol = sigma
            .cholesky()
            .ok_or_else(|| Error::invalid("correlation matrix is not positive definite"))?;
        Ok(EquicorrGaussian {
            factor: chol.l(),
            means,
        })
    }

    pub fn draw(&self, rng: &mut impl Rng) -> Vec<f64> {
        let p = self.means.len();
        let z: Vec<f64> = (0..p).map(|_| sample_std_normal(rng)).collect();
        (0..p)
            .map(|i| {
                let mut acc = self.means[i];
                for j in 0..=i {
                    acc += self.factor[(i, j)] * z[j];
                }
                acc
            })
            .collect()
    }
}

/// One draw from N(mean, Sigma(rho)) with unit variances.
pub fn sample_equicorr_gaussian(
    p: usize,
    rho: f64,
    means: &[f64],
    rng: &mut impl Rng,
) -> Result<Vec<f64>> {
    Ok(EquicorrGaussian::new(p, rho, means.to_vec())?.draw(rng))
}

/// One draw from the bivariate Clayton copula (uniform margins) by
/// conditional inversion of the h-function:
/// v = ((w^(-theta/(1+theta)) - 1) u^(-theta) + 1)^(-1/theta).
pub fn sample_clayton_pair(theta: f64, rng: &mut impl Rng) -> Result<(f64, f64)> {
    if !(theta > 0.0) {
        return Err(Error::invalid(format!("Clayton parameter must be > 0, got {theta}")));
    }
    let u = open_unit(rng);
    let w = open_unit(rng);
    let v = ((w.powf(-theta / (1.0 + theta)) - 1.0) * u.powf(-theta) + 1.0).powf(-1.0 / theta);
    Ok((u, v))
}

/// Bivariate standard normal draw with correlation rho.
pub fn sample_bivariate_normal(rho: f64, rng: &mut impl Rng) -> (f64, f64) {
    let z1 = sample_std_normal(rng);
    let z2 = sample_std_normal(rng);
    (z1, rho * z1 + (1.0 - rho * rho).sqrt() * z2)
}

/// Kolmogorov-Smirnov distance of a sample to U[0, 1].
pub fn ks_distance_uniform(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &u)| {
            let hi = (i as f64 + 1.0) / n - u;
            let lo = u - i as f64 / n;
            hi.max(lo)
        })
        .fold(0.0f64, f64::max)
}

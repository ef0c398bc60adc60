//! Two-sample Kolmogorov-Smirnov, Poisson goodness of fit and a few
//! closed-form moments used as references.

use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF, Discrete, Poisson};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KsResult {
    pub statistic: f64,
    /// Asymptotic p-value of the two-sided test.
    pub p_value: f64,
}

/// Two-sample Kolmogorov-Smirnov statistic `sup |F_a - F_b|` with the
/// asymptotic p-value (Stephens' small-sample correction).
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<KsResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::domain("KS test needs two nonempty samples"));
    }
    if a.iter().chain(b).any(|x| x.is_nan()) {
        return Err(Error::domain("KS test sample contains NaN"));
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    let en = (na * nb / (na + nb)).sqrt();
    let p_value = kolmogorov_q((en + 0.12 + 0.11 / en) * d);
    Ok(KsResult { statistic: d, p_value })
}

/// Tail of the Kolmogorov distribution,
/// `Q(l) = 2 sum_{k>=1} (-1)^{k-1} exp(-2 k^2 l^2)`.
pub fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let a = -2.0 * lambda * lambda;
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=100 {
        let k = k as f64;
        let term = sign * (a * k * k).exp();
        sum += term;
        if term.abs() < 1e-12 * sum.abs() || term.abs() < 1e-300 {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChiSquareResult {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
    /// Upper edges of the pooled bins; the last bin is open.
    pub bins: Vec<u64>,
}

/// Pearson test of counts against Poisson with a known mean. Adjacent
/// values are pooled until every bin expects at least five observations.
pub fn poisson_chi_square(counts: &[u64], mean: f64) -> Result<ChiSquareResult> {
    if counts.len() < 10 {
        return Err(Error::domain("chi-square test needs at least 10 observations"));
    }
    let dist = Poisson::new(mean).map_err(|e| Error::domain(format!("poisson mean {mean}: {e}")))?;
    let total = counts.len() as f64;
    let max = counts.iter().copied().max().unwrap_or(0);
    let mut observed = vec![0u64; max as usize + 1];
    for &c in counts {
        observed[c as usize] += 1;
    }

    // closed bins [lo, k] while the tail beyond them still expects >= 5
    let mut bins = Vec::new();
    let mut cells: Vec<(f64, f64)> = Vec::new();
    let (mut exp_acc, mut obs_acc) = (0.0, 0.0);
    let mut cdf = 0.0;
    let mut k = 0u64;
    loop {
        let pk = dist.pmf(k);
        exp_acc += pk * total;
        obs_acc += observed.get(k as usize).copied().unwrap_or(0) as f64;
        cdf += pk;
        let tail = (1.0 - cdf).max(0.0) * total;
        if exp_acc >= 5.0 && tail >= 5.0 {
            bins.push(k);
            cells.push((obs_acc, exp_acc));
            exp_acc = 0.0;
            obs_acc = 0.0;
        }
        if tail < 5.0 {
            break;
        }
        k += 1;
    }
    let tail_obs = counts.iter().filter(|&&c| c > k).count() as f64;
    let tail_exp = (1.0 - cdf).max(0.0) * total;
    match cells.last_mut() {
        Some(last) if exp_acc + tail_exp < 5.0 => {
            last.0 += obs_acc + tail_obs;
            last.1 += exp_acc + tail_exp;
            bins.pop();
        }
        _ => cells.push((obs_acc + tail_obs, exp_acc + tail_exp)),
    }
    if cells.len() < 2 {
        return Err(Error::domain("too few observations for a chi-square test"));
    }
    let statistic = cells.iter().map(|(o, e)| (o - e) * (o - e) / e).sum();
    let dof = cells.len() - 1;
    let p_value = ChiSquared::new(dof as f64)
        .map(|d| 1.0 - d.cdf(statistic))
        .map_err(|e| Error::domain(e.to_string()))?;
    Ok(ChiSquareResult {
        statistic,
        dof,
        p_value,
        bins,
    })
}

/// `E |sigma W_t| = sigma sqrt(2t / pi)`, the mean of Brownian motion
/// reflected at 0 and started there.
pub fn reflected_bm_moment(sigma: f64, t: f64) -> f64 {
    sigma.abs() * (2.0 * t.max(0.0) / std::f64::consts::PI).sqrt()
}

/// Sample mean, unbiased variance and standard error of the mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Moments {
    pub count: usize,
    pub mean: f64,
    pub variance: f64,
    pub std_error: f64,
}

impl Moments {
    pub fn of(xs: &[f64]) -> Self {
        let count = xs.len();
        if count == 0 {
            return Moments {
                count,
                mean: f64::NAN,
                variance: f64::NAN,
                std_error: f64::NAN,
            };
        }
        let n = count as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let variance = if count > 1 {
            xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Moments {
            count,
            mean,
            variance,
            std_error: (variance / n).sqrt(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use rand::Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn ks_statistic_for_disjoint_and_shifted_samples() {
        let r = ks_two_sample(&[1.0, 2.0, 3.0], &[4.0, 5.0]).unwrap();
        assert_eq!(r.statistic, 1.0);
        let r = ks_two_sample(&[1.0, 2.0, 3.0, 4.0], &[2.5, 3.5]).unwrap();
        assert!((r.statistic - 0.5).abs() < 1e-15);
        // ties are consumed together
        let r = ks_two_sample(&[1.0, 1.0, 2.0], &[1.0, 2.0, 2.0]).unwrap();
        assert!((r.statistic - 1.0 / 3.0).abs() < 1e-15);
        let r = ks_two_sample(&[0.3, 0.1, 0.2], &[0.1, 0.2, 0.3]).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn ks_uniform_shift() {
        let mut rng = stream_rng(1, 0);
        let a: Vec<f64> = (0..1000).map(|_| rng.random::<f64>()).collect();
        let b: Vec<f64> = (0..1000).map(|_| rng.random::<f64>() + 0.5).collect();
        let r = ks_two_sample(&a, &b).unwrap();
        assert!((r.statistic - 0.5).abs() < 0.05, "{}", r.statistic);
        assert!(r.p_value < 1e-10);
    }

    #[test]
    fn ks_same_law_usually_passes() {
        let passed = (0..3)
            .filter(|&seed| {
                let mut rng = stream_rng(seed, 0);
                let a: Vec<f64> = (0..1000).map(|_| rng.sample(StandardNormal)).collect();
                let b: Vec<f64> = (0..1000).map(|_| rng.sample(StandardNormal)).collect();
                ks_two_sample(&a, &b).unwrap().p_value > 0.01
            })
            .count();
        assert!(passed >= 2);
    }

    #[test]
    fn kolmogorov_tail_values() {
        assert_eq!(kolmogorov_q(0.0), 1.0);
        // 5% critical value of the Kolmogorov distribution
        assert!((kolmogorov_q(1.358) - 0.05).abs() < 5e-4);
        assert!((kolmogorov_q(1.628) - 0.01).abs() < 2e-4);
    }

    #[test]
    fn ks_rejects_empty() {
        assert!(ks_two_sample(&[], &[1.0]).is_err());
    }

    #[test]
    fn reflected_moments() {
        assert!((reflected_bm_moment(1.0, 1.0) - 0.797_884_560_802_865_4).abs() < 1e-15);
        assert_eq!(reflected_bm_moment(0.0, 3.0), 0.0);
        assert!((reflected_bm_moment(2.0, 0.25) - reflected_bm_moment(1.0, 1.0)).abs() < 1e-15);
        let (s, t) = (1.7, 0.3);
        assert!((reflected_bm_moment(s, t) - s * t.sqrt() * reflected_bm_moment(1.0, 1.0)).abs() < 1e-15);
    }

    #[test]
    fn chi_square_accepts_poisson_draws() {
        let mut rng = stream_rng(4, 0);
        let dist = rand_distr::Poisson::new(3.0).unwrap();
        let counts: Vec<u64> = (0..2000).map(|_| rng.sample(dist) as u64).collect();
        let r = poisson_chi_square(&counts, 3.0).unwrap();
        assert!(r.p_value > 0.001, "{r:?}");
        let r = poisson_chi_square(&counts, 4.0).unwrap();
        assert!(r.p_value < 1e-6);
    }

    #[test]
    fn chi_square_pools_sparse_bins() {
        let counts = vec![0u64; 20];
        let r = poisson_chi_square(&counts, 0.1).unwrap_err();
        assert!(matches!(r, Error::Domain(_)));
        let counts: Vec<u64> = (0..100).map(|i| i % 3).collect();
        let r = poisson_chi_square(&counts, 1.0).unwrap();
        assert!(r.dof >= 1);
    }

    #[test]
    fn moments_of_small_sample() {
        let m = Moments::of(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m.mean, 2.5);
        assert!((m.variance - 5.0 / 3.0).abs() < 1e-15);
        assert!((m.std_error - (5.0f64 / 12.0).sqrt()).abs() < 1e-15);
    }
}

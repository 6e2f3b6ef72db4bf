//! Action heads and exploration processes.
//!
//! The partition branch of the actor is a Dirichlet head: raw pre-activations
//! are mapped through `exp(z) + eps` to strictly positive concentrations, and
//! the partition sub-action is either a Dirichlet sample (exploration) or the
//! distribution mean (the differentiable surrogate used during learning). The
//! frequency branch explores with an Ornstein-Uhlenbeck process.

mod special;

pub use special::ln_gamma;

use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("point is off the simplex: |sum - 1| = {0:e}")]
    OffSimplex(f64),
    #[error("simplex point has a non-positive component: {0}")]
    NonPositiveComponent(f64),
}

/// Logit magnitude above which `exp` would overflow f64.
const LOGIT_CLAMP: f64 = 700.0;

/// Concentration parameters of a Dirichlet distribution, all strictly
/// positive by construction.
#[derive(Debug, Clone)]
pub struct DirichletParams {
    pub concentration: Vec<f64>,
    /// Set when a logit had to be clamped to avoid `exp` overflow.
    pub saturated: bool,
}

/// Map actor pre-activations to concentrations via `psi_j = exp(z_j) + eps`.
pub fn concentration_from_logits(z: &[f64], eps: f64) -> DirichletParams {
    assert!(eps > 0.0, "eps must be positive");
    let mut saturated = false;
    let concentration = z
        .iter()
        .map(|&zj| {
            let zj = if zj > LOGIT_CLAMP {
                saturated = true;
                LOGIT_CLAMP
            } else {
                zj
            };
            zj.exp() + eps
        })
        .collect();
    DirichletParams {
        concentration,
        saturated,
    }
}

/// Draw a point on the simplex: K independent Gamma(psi_j, 1) variates
/// normalized by their sum.
pub fn dirichlet_sample<R: Rng + ?Sized>(p: &DirichletParams, rng: &mut R) -> Vec<f64> {
    let k = p.concentration.len();
    let mut draws = Vec::with_capacity(k);
    let mut sum = 0.0;
    for &psi in &p.concentration {
        debug_assert!(psi > 0.0);
        let g = Gamma::new(psi, 1.0).expect("positive shape");
        let x: f64 = g.sample(rng);
        sum += x;
        draws.push(x);
    }
    if sum > 0.0 && sum.is_finite() {
        for x in &mut draws {
            *x /= sum;
        }
    } else {
        // All gamma draws underflowed (tiny concentrations); fall back to the
        // uniform point so the simplex contract still holds.
        draws.iter_mut().for_each(|x| *x = 1.0 / k as f64);
    }
    draws
}

/// Mean of the Dirichlet distribution, `psi_j / sum(psi)`.
pub fn dirichlet_mean(p: &DirichletParams) -> Vec<f64> {
    let sum: f64 = p.concentration.iter().sum();
    p.concentration.iter().map(|&psi| psi / sum).collect()
}

/// Vector-Jacobian product of `dirichlet_mean(exp(z) + eps)` w.r.t. `z`.
///
/// Given upstream gradients `grad_mean` w.r.t. the mean, returns the
/// gradient w.r.t. the logits `z`.
pub fn dirichlet_mean_logit_grad(z: &[f64], eps: f64, grad_mean: &[f64]) -> Vec<f64> {
    let p = concentration_from_logits(z, eps);
    let sum: f64 = p.concentration.iter().sum();
    let mean: Vec<f64> = p.concentration.iter().map(|&psi| psi / sum).collect();
    let dot: f64 = grad_mean.iter().zip(&mean).map(|(g, m)| g * m).sum();
    z.iter()
        .zip(grad_mean)
        .map(|(&zk, &gk)| {
            let ez = zk.min(LOGIT_CLAMP).exp(); // d psi_k / d z_k
            ez / sum * (gk - dot)
        })
        .collect()
}

/// Log-density of the Dirichlet at a point on the open simplex.
pub fn dirichlet_logpdf(p: &DirichletParams, x: &[f64]) -> Result<f64, PolicyError> {
    let sum_x: f64 = x.iter().sum();
    if (sum_x - 1.0).abs() > 1e-9 {
        return Err(PolicyError::OffSimplex((sum_x - 1.0).abs()));
    }
    let mut logp = 0.0;
    for (&psi, &xj) in p.concentration.iter().zip(x) {
        if xj <= 0.0 {
            return Err(PolicyError::NonPositiveComponent(xj));
        }
        logp += (psi - 1.0) * xj.ln();
    }
    let sum_psi: f64 = p.concentration.iter().sum();
    let ln_b: f64 = p.concentration.iter().map(|&psi| ln_gamma(psi)).sum::<f64>()
        - ln_gamma(sum_psi);
    Ok(logp - ln_b)
}

/// Ornstein-Uhlenbeck exploration noise state.
#[derive(Debug, Clone)]
pub struct OuNoise {
    pub value: Vec<f64>,
    pub theta: f64,
    pub sigma: f64,
    pub mu: f64,
    pub dt: f64,
}

impl OuNoise {
    pub fn new(dim: usize, theta: f64, sigma: f64) -> Self {
        Self {
            value: vec![0.0; dim],
            theta,
            sigma,
            mu: 0.0,
            dt: 1.0,
        }
    }

    pub fn reset(&mut self) {
        self.value.iter_mut().for_each(|v| *v = 0.0);
    }

    /// Advance the process one step and return the new value.
    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> &[f64] {
        let sqrt_dt = self.dt.sqrt();
        for v in &mut self.value {
            let n: f64 = StandardNormal.sample(rng);
            *v += self.theta * (self.mu - *v) * self.dt + self.sigma * sqrt_dt * n;
        }
        &self.value
    }
}

/// Max-subtracted stable softmax.
pub fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = z.iter().map(|&zj| (zj - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Vector-Jacobian product of softmax: given `s = softmax(z)` and upstream
/// gradients w.r.t. `s`, returns gradients w.r.t. `z`.
pub fn softmax_grad(s: &[f64], grad_s: &[f64]) -> Vec<f64> {
    let dot: f64 = s.iter().zip(grad_s).map(|(si, gi)| si * gi).sum();
    s.iter().zip(grad_s).map(|(&si, &gi)| si * (gi - dot)).collect()
}

/// Zero-mean Gaussian draws with std `sigma`, clamped to `[-clip, clip]`.
pub fn clipped_noise<R: Rng + ?Sized>(sigma: f64, clip: f64, n: usize, rng: &mut R) -> Vec<f64> {
    assert!(sigma >= 0.0 && clip > 0.0);
    (0..n)
        .map(|_| {
            let x: f64 = StandardNormal.sample(rng);
            (sigma * x).clamp(-clip, clip)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream_rng, STREAM_EXPLORATION};

    #[test]
    fn concentration_zero_logits() {
        let p = concentration_from_logits(&[0.0, 0.0, 0.0], 1e-6);
        for psi in &p.concentration {
            assert!((psi - 1.0).abs() < 1e-5);
        }
        assert!(!p.saturated);
    }

    #[test]
    fn concentration_ln2() {
        let p = concentration_from_logits(&[2.0f64.ln(), 0.0], 1e-12);
        assert!((p.concentration[0] - 2.0).abs() < 1e-9);
        assert!((p.concentration[1] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn concentration_floor_and_saturation() {
        let p = concentration_from_logits(&[-1000.0, 0.0], 1e-6);
        assert!((p.concentration[0] - 1e-6).abs() < 1e-12);
        assert!(p.concentration[0] > 0.0);
        let q = concentration_from_logits(&[800.0], 1e-6);
        assert!(q.saturated);
        assert!(q.concentration[0].is_finite());
    }

    #[test]
    fn sample_lies_on_simplex() {
        let mut rng = stream_rng(1, STREAM_EXPLORATION);
        for psi in [vec![1.0, 1.0, 1.0], vec![0.3, 5.0], vec![50.0, 0.01, 2.0, 7.0]] {
            let p = DirichletParams {
                concentration: psi,
                saturated: false,
            };
            for _ in 0..100 {
                let x = dirichlet_sample(&p, &mut rng);
                let sum: f64 = x.iter().sum();
                assert!((sum - 1.0).abs() < 1e-12);
                assert!(x.iter().all(|&xi| (0.0..=1.0).contains(&xi)));
            }
        }
    }

    #[test]
    fn sample_empirical_mean_uniform() {
        let mut rng = stream_rng(2, STREAM_EXPLORATION);
        let p = DirichletParams {
            concentration: vec![1.0, 1.0, 1.0],
            saturated: false,
        };
        let n = 100_000;
        let mut acc = [0.0f64; 3];
        for _ in 0..n {
            let x = dirichlet_sample(&p, &mut rng);
            for j in 0..3 {
                acc[j] += x[j];
            }
        }
        for a in acc {
            assert!((a / n as f64 - 1.0 / 3.0).abs() < 0.01);
        }
    }

    #[test]
    fn sample_empirical_variance_beta() {
        // Dirichlet(50, 50) marginal is Beta(50, 50):
        // var = ab / ((a+b)^2 (a+b+1)) = 2500 / (10000 * 101)
        let expected = 2500.0 / (10_000.0 * 101.0);
        let mut rng = stream_rng(3, STREAM_EXPLORATION);
        let p = DirichletParams {
            concentration: vec![50.0, 50.0],
            saturated: false,
        };
        let n = 100_000;
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for _ in 0..n {
            let x = dirichlet_sample(&p, &mut rng);
            sum += x[0];
            sum_sq += x[0] * x[0];
        }
        let mean = sum / n as f64;
        let var = sum_sq / n as f64 - mean * mean;
        assert!((var - expected).abs() < 0.2 * expected);
    }

    #[test]
    fn mean_examples() {
        let p = DirichletParams {
            concentration: vec![1.0, 1.0, 1.0],
            saturated: false,
        };
        for m in dirichlet_mean(&p) {
            assert!((m - 1.0 / 3.0).abs() < 1e-15);
        }
        let p = DirichletParams {
            concentration: vec![2.0, 1.0, 1.0],
            saturated: false,
        };
        assert_eq!(dirichlet_mean(&p), vec![0.5, 0.25, 0.25]);
        let p = DirichletParams {
            concentration: vec![5.0],
            saturated: false,
        };
        assert_eq!(dirichlet_mean(&p), vec![1.0]);
    }

    #[test]
    fn logpdf_uniform_is_zero() {
        let p = DirichletParams {
            concentration: vec![1.0, 1.0],
            saturated: false,
        };
        let lp = dirichlet_logpdf(&p, &[0.3, 0.7]).unwrap();
        assert!(lp.abs() < 1e-12);
    }

    #[test]
    fn logpdf_beta22_center() {
        // Beta(2,2) pdf at 0.5 is 6 * 0.5 * 0.5 = 1.5
        let p = DirichletParams {
            concentration: vec![2.0, 2.0],
            saturated: false,
        };
        let lp = dirichlet_logpdf(&p, &[0.5, 0.5]).unwrap();
        assert!((lp - 1.5f64.ln()).abs() < 1e-10);
    }

    #[test]
    fn logpdf_rejects_off_simplex() {
        let p = DirichletParams {
            concentration: vec![2.0, 2.0],
            saturated: false,
        };
        assert!(matches!(
            dirichlet_logpdf(&p, &[0.6, 0.6]),
            Err(PolicyError::OffSimplex(_))
        ));
        assert!(dirichlet_logpdf(&p, &[0.0, 1.0]).is_err());
    }

    #[test]
    fn ou_fixed_point_and_decay() {
        let mut rng = stream_rng(4, STREAM_EXPLORATION);
        let mut ou = OuNoise::new(1, 0.15, 0.0);
        ou.value[0] = 0.0;
        ou.step(&mut rng);
        assert_eq!(ou.value[0], 0.0);

        ou.value[0] = 0.5;
        ou.step(&mut rng);
        assert!((ou.value[0] - 0.425).abs() < 1e-15);
    }

    #[test]
    fn ou_stationary_std() {
        // stationary std = sigma / sqrt(2 theta)
        let mut rng = stream_rng(5, STREAM_EXPLORATION);
        let mut ou = OuNoise::new(1, 0.15, 0.2);
        let expected = 0.2 / (2.0f64 * 0.15).sqrt();
        let n = 100_000;
        let mut sum_sq = 0.0;
        for _ in 0..n {
            ou.step(&mut rng);
            sum_sq += ou.value[0] * ou.value[0];
        }
        let std = (sum_sq / n as f64).sqrt();
        assert!((std - expected).abs() < 0.1 * expected, "std {std}");
    }

    #[test]
    fn softmax_examples() {
        let s = softmax(&[0.0, 0.0]);
        assert!((s[0] - 0.5).abs() < 1e-15 && (s[1] - 0.5).abs() < 1e-15);
        let s = softmax(&[2.0f64.ln(), 0.0]);
        assert!((s[0] - 2.0 / 3.0).abs() < 1e-12);
        assert!((s[1] - 1.0 / 3.0).abs() < 1e-12);
        // shift invariance
        let a = softmax(&[0.1, -0.7, 2.3]);
        let b = softmax(&[0.1 + 5.0, -0.7 + 5.0, 2.3 + 5.0]);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn clipped_noise_contract() {
        let mut rng = stream_rng(6, STREAM_EXPLORATION);
        assert!(clipped_noise(0.0, 0.5, 8, &mut rng).iter().all(|&x| x == 0.0));
        for _ in 0..1000 {
            for x in clipped_noise(1.0, 0.5, 4, &mut rng) {
                assert!((-0.5..=0.5).contains(&x));
            }
        }
    }

    #[test]
    fn clipped_noise_empirical_std() {
        // std of N(0, 0.2) truncated (clamped) at +/-0.5: clamping at 2.5
        // sigma barely moves the second moment; approx 0.1996.
        let mut rng = stream_rng(7, STREAM_EXPLORATION);
        let n = 100_000;
        let mut sum_sq = 0.0;
        for x in clipped_noise(0.2, 0.5, n, &mut rng) {
            sum_sq += x * x;
        }
        let std = (sum_sq / n as f64).sqrt();
        assert!((std - 0.196).abs() < 0.05 * 0.196, "std {std}");
    }
}

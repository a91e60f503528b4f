//! The diverse-GIB loss: prediction cross-entropy, Gaussian KL compression and
//! the Gram-determinant diversity reward.
//!
//! `total = mean_k CE_k + beta1 · mean_k KL_k − beta2 · det(U Uᵀ)` where row
//! `k` of `U` is the representation of explanation `k`.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::linalg;

/// Loss coefficients and explanation count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DgibConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub k: usize,
}

impl Default for DgibConfig {
    fn default() -> Self {
        DgibConfig {
            beta1: 1e-4,
            beta2: 1e-4,
            k: 3,
        }
    }
}

impl DgibConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Config("K must be >= 1".into()));
        }
        if !(self.beta1 >= 0.0 && self.beta2 >= 0.0) {
            return Err(Error::Config("beta1 and beta2 must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub ce: f64,
    pub kl: f64,
    pub dpp: f64,
    pub total: f64,
}

impl LossBreakdown {
    /// Arithmetic mean of several breakdowns.
    pub fn mean(items: &[LossBreakdown]) -> LossBreakdown {
        let n = items.len().max(1) as f64;
        let mut m = LossBreakdown::default();
        for it in items {
            m.ce += it.ce / n;
            m.kl += it.kl / n;
            m.dpp += it.dpp / n;
            m.total += it.total / n;
        }
        m
    }
}

/// `KL(N(mean, diag(var)) || N(0, I))`.
pub fn gaussian_kl(mean: &[f64], var: &[f64]) -> Result<f64> {
    if mean.len() != var.len() {
        return Err(Error::Shape(format!("mean {} vs var {}", mean.len(), var.len())));
    }
    if let Some(v) = var.iter().find(|v| !(**v > 0.0)) {
        return Err(Error::Domain(format!("variance {v} is not positive")));
    }
    let tr: f64 = var.iter().sum();
    let sq: f64 = mean.iter().map(|m| m * m).sum();
    let logdet: f64 = var.iter().map(|v| v.ln()).sum();
    Ok(0.5 * (tr + sq - mean.len() as f64 - logdet))
}

/// Numerically stable `-[y ln σ(x) + (1-y) ln(1-σ(x))]`.
pub fn binary_ce(logit: f64, label: f64) -> f64 {
    logit.max(0.0) - logit * label + (-logit.abs()).exp().ln_1p()
}

/// `det(U Uᵀ)` for rows `zs`.
pub fn gram_det(zs: &[Vec<f64>]) -> Result<f64> {
    let Some(first) = zs.first() else {
        return Ok(1.0);
    };
    let d = first.len();
    if zs.iter().any(|z| z.len() != d) {
        return Err(Error::Shape("representations differ in width".into()));
    }
    let u = Array2::from_shape_fn((zs.len(), d), |(i, j)| zs[i][j]);
    Ok(linalg::det(&u.dot(&u.t())))
}

/// Loss of one pair from per-explanation values.
pub fn dgib_loss(
    logits: &[f64],
    label: f64,
    gaussians: &[(Vec<f64>, Vec<f64>)],
    zs: &[Vec<f64>],
    cfg: &DgibConfig,
) -> Result<LossBreakdown> {
    cfg.validate()?;
    if logits.len() != cfg.k || gaussians.len() != cfg.k || zs.len() != cfg.k {
        return Err(Error::Config(format!(
            "expected K = {} of each input, got {}/{}/{}",
            cfg.k,
            logits.len(),
            gaussians.len(),
            zs.len()
        )));
    }
    let k = cfg.k as f64;
    let ce = logits.iter().map(|&l| binary_ce(l, label)).sum::<f64>() / k;
    let mut kl = 0.0;
    for (m, v) in gaussians {
        kl += gaussian_kl(m, v)? / k;
    }
    let dpp = gram_det(zs)?;
    Ok(LossBreakdown {
        ce,
        kl,
        dpp,
        total: ce + cfg.beta1 * kl - cfg.beta2 * dpp,
    })
}

/// Mean of per-pair totals.
pub fn batch_loss(pairs: &[LossBreakdown]) -> LossBreakdown {
    LossBreakdown::mean(pairs)
}

/// KL term on the tape for 1×d `mean` and `var`.
pub fn gaussian_kl_on(tape: &mut Tape, mean: Var, var: Var) -> Var {
    let d = tape.value(mean).len() as f64;
    let tr = tape.sum(var);
    let sq = tape.mul(mean, mean);
    let sq = tape.sum(sq);
    let lv = tape.ln(var);
    let logdet = tape.sum(lv);
    let a = tape.add(tr, sq);
    let b = tape.sub(a, logdet);
    let b = tape.add_const(b, &crate::autodiff::scalar(-d));
    tape.scale(b, 0.5)
}

/// Per-explanation tape nodes feeding the loss.
pub struct LossTerms<'a> {
    pub logits: &'a [Var],
    pub means: &'a [Var],
    pub vars: &'a [Var],
    pub zs: &'a [Var],
}

/// Tape nodes of one pair's loss.
pub struct LossNodes {
    pub ce: Var,
    pub kl: Var,
    pub dpp: Var,
    pub total: Var,
}

/// Records the pair loss. `use_kl` drops the compression term entirely.
pub fn dgib_loss_on(
    tape: &mut Tape,
    terms: &LossTerms<'_>,
    label: f64,
    cfg: &DgibConfig,
    use_kl: bool,
) -> LossNodes {
    let k = terms.logits.len() as f64;
    let ces: Vec<Var> = terms
        .logits
        .iter()
        .map(|&l| tape.bce_with_logit(l, label))
        .collect();
    let ce_cat = tape.concat_cols(&ces);
    let ce_sum = tape.sum(ce_cat);
    let ce = tape.scale(ce_sum, 1.0 / k);
    let kls: Vec<Var> = terms
        .means
        .iter()
        .zip(terms.vars)
        .map(|(&m, &v)| gaussian_kl_on(tape, m, v))
        .collect();
    let kl_cat = tape.concat_cols(&kls);
    let kl_sum = tape.sum(kl_cat);
    let kl = tape.scale(kl_sum, 1.0 / k);
    let u = tape.concat_rows(terms.zs);
    let dpp = tape.gram_det(u);
    let mut total = ce;
    if use_kl && cfg.beta1 != 0.0 {
        let t = tape.scale(kl, cfg.beta1);
        total = tape.add(total, t);
    }
    if cfg.beta2 != 0.0 {
        let t = tape.scale(dpp, cfg.beta2);
        total = tape.sub(total, t);
    }
    LossNodes { ce, kl, dpp, total }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn kl_closed_forms() {
        assert!(gaussian_kl(&[0.0; 6], &[1.0; 6]).unwrap().abs() < 1e-12);
        assert!((gaussian_kl(&[1.0, 0.0], &[1.0, 1.0]).unwrap() - 0.5).abs() < 1e-12);
        let v = gaussian_kl(&[0.0, 0.0], &[2.0, 1.0]).unwrap();
        assert!((v - 0.5 * (3.0 - 2.0 - 2f64.ln())).abs() < 1e-15);
        assert!((v - 0.1534).abs() < 1e-4);
        assert!(matches!(gaussian_kl(&[0.0], &[0.0]), Err(Error::Domain(_))));
    }

    /// Monte-Carlo estimate of E_q[ln q(z) - ln p(z)] for a diagonal Gaussian.
    #[test]
    fn kl_matches_monte_carlo() {
        let mean = [0.0f64, 0.0];
        let var = [2.0f64, 1.0];
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 1_000_000;
        let dists: Vec<_> = (0..2)
            .map(|i| Normal::new(mean[i], var[i].sqrt()).unwrap())
            .collect();
        let mut acc = 0.0;
        for _ in 0..n {
            let mut lq = 0.0;
            let mut lp = 0.0;
            for i in 0..2 {
                let z: f64 = dists[i].sample(&mut rng);
                lq += -0.5 * ((z - mean[i]).powi(2) / var[i] + var[i].ln());
                lp += -0.5 * z * z;
            }
            acc += lq - lp;
        }
        let mc = acc / n as f64;
        assert!((mc - gaussian_kl(&mean, &var).unwrap()).abs() < 1e-2);
    }

    #[test]
    fn cross_entropy_values() {
        assert!((binary_ce(0.0, 1.0) - 2f64.ln()).abs() < 1e-15);
        assert!(binary_ce(800.0, 1.0) < 1e-300);
        let direct = -(1.0 - 1.0 / (1.0 + (-2f64).exp())).ln();
        assert!((binary_ce(2.0, 0.0) - direct).abs() < 1e-12);
        assert!((binary_ce(2.0, 0.0) - 2.1269).abs() < 1e-4);
    }

    #[test]
    fn gram_det_values() {
        let e1 = vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        assert_eq!(gram_det(std::slice::from_ref(&e1)).unwrap(), 1.0);
        assert_eq!(gram_det(&[e1.clone(), e1.clone()]).unwrap(), 0.0);
        let u = vec![
            vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0],
            vec![1.0, 1.0, 0.0, 0.0, 0.0, 0.0],
        ];
        let g = gram_det(&u).unwrap();
        // Cofactor expansion of [[1,1],[1,2]].
        assert!((g - (1.0 * 2.0 - 1.0 * 1.0)).abs() < 1e-15);
    }

    #[test]
    fn loss_assembly() {
        let g = (vec![0.0; 2], vec![1.0; 2]);
        let zero = DgibConfig {
            beta1: 0.0,
            beta2: 0.0,
            k: 2,
        };
        let l = dgib_loss(
            &[0.3, -0.2],
            1.0,
            &[g.clone(), g.clone()],
            &[vec![1.0, 0.0], vec![0.0, 1.0]],
            &zero,
        )
        .unwrap();
        assert!((l.total - (binary_ce(0.3, 1.0) + binary_ce(-0.2, 1.0)) / 2.0).abs() < 1e-15);
        let one = DgibConfig {
            beta1: 0.0,
            beta2: 1.0,
            k: 2,
        };
        let big = 60.0;
        let l = dgib_loss(
            &[big, big],
            1.0,
            &[g.clone(), g.clone()],
            &[vec![1.0, 0.0], vec![0.0, 1.0]],
            &one,
        )
        .unwrap();
        assert!((l.total + 1.0).abs() < 1e-12);
        assert!(dgib_loss(&[0.0], 1.0, &[g.clone(), g], &[vec![1.0, 0.0]], &one).is_err());
    }
}

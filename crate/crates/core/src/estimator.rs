//! Data-splitting estimate of the false variable rate along a forward
//! stepwise path.
//!
//! Each split selects on one part of the rows, tests the incremental
//! hypotheses on the other, and turns the p-values into a threshold
//! estimate of the number of null additions among the first `k`. The
//! per-split ratios `V_k / k` are averaged over many random splits.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{FvrError, Result};
use crate::selection::{forward_stepwise, incremental_pvalues, Dataset, PValueSequence};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorConfig {
    pub lambda: f64,
    pub n_splits: usize,
    pub split_fraction: f64,
    pub seed: u64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            lambda: 0.5,
            n_splits: 50,
            split_fraction: 0.5,
            seed: 0,
        }
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<()> {
        check_lambda(self.lambda)?;
        if self.n_splits == 0 {
            return Err(FvrError::InvalidArgument(
                "n_splits must be at least 1".into(),
            ));
        }
        if !(self.split_fraction > 0.0 && self.split_fraction < 1.0) {
            return Err(FvrError::InvalidArgument(format!(
                "split_fraction must lie in (0, 1), got {}",
                self.split_fraction
            )));
        }
        Ok(())
    }

    /// Rows assigned to selection out of `n`; rounding favours the
    /// selection part.
    pub fn selection_rows(&self, n: usize) -> usize {
        ((n as f64 * self.split_fraction).ceil() as usize).clamp(1, n.saturating_sub(1).max(1))
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda > 0.0 && lambda < 1.0 {
        Ok(())
    } else {
        Err(FvrError::InvalidArgument(format!(
            "lambda must lie in (0, 1), got {lambda}"
        )))
    }
}

/// `#{j <= k : p_j > lambda} / (1 - lambda)`.
pub fn threshold_estimate(pvals: &PValueSequence, k: usize, lambda: f64) -> Result<f64> {
    check_lambda(lambda)?;
    if k > pvals.len() {
        return Err(FvrError::InvalidArgument(format!(
            "k = {k} exceeds {} p-values",
            pvals.len()
        )));
    }
    Ok(count_above(&pvals.values()[..k], lambda) as f64 / (1.0 - lambda))
}

fn count_above(pvals: &[f64], lambda: f64) -> usize {
    pvals.iter().filter(|&&p| p > lambda).count()
}

/// Generator for split `index` of an estimate seeded with `seed`.
pub fn split_rng(seed: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed.wrapping_add(index))
}

fn check_sizes(data: &Dataset, config: &EstimatorConfig, k_max: usize) -> Result<(usize, usize)> {
    config.validate()?;
    let n = data.n();
    if n < 4 {
        return Err(FvrError::InvalidArgument(format!(
            "need at least 4 rows, got {n}"
        )));
    }
    let n_sel = config.selection_rows(n);
    let n_hold = n - n_sel;
    let limit = data.p().min(n_sel.saturating_sub(2));
    if k_max > limit {
        return Err(FvrError::InvalidArgument(format!(
            "k_max = {k_max} exceeds min(p, selection rows - 2) = {limit}"
        )));
    }
    if n_hold <= k_max + 1 {
        return Err(FvrError::InsufficientHoldout {
            rows: n_hold,
            needed: k_max + 1,
        });
    }
    Ok((n_sel, n_hold))
}

/// `V_k / k` for `k = 1..` from one random split. The result is shorter
/// than `k_max` when stepwise selection stopped early.
pub fn single_split_estimate<R: Rng + ?Sized>(
    data: &Dataset,
    config: &EstimatorConfig,
    rng: &mut R,
    k_max: usize,
) -> Result<Vec<f64>> {
    let (n_sel, _) = check_sizes(data, config, k_max)?;
    split_estimate(data, config, rng, k_max, n_sel)
}

fn split_estimate<R: Rng + ?Sized>(
    data: &Dataset,
    config: &EstimatorConfig,
    rng: &mut R,
    k_max: usize,
    n_sel: usize,
) -> Result<Vec<f64>> {
    let mut rows: Vec<usize> = (0..data.n()).collect();
    rows.shuffle(rng);
    let selection = data.select_rows(&rows[..n_sel])?;
    let holdout = data.select_rows(&rows[n_sel..])?;
    let path = forward_stepwise(&selection, k_max)?;
    let pvals = incremental_pvalues(&path, &holdout, path.len())?;
    let scale = 1.0 / (1.0 - config.lambda);
    let mut above = 0usize;
    Ok(pvals
        .values()
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            if p > config.lambda {
                above += 1;
            }
            above as f64 * scale / (i + 1) as f64
        })
        .collect())
}

/// Split-averaged estimate of the false variable rate for model sizes
/// `1..=len`.
#[derive(Debug, Clone, PartialEq)]
pub struct FvrEstimateCurve {
    /// Mean of `V_k / k` over the splits that reached size `k`.
    pub estimate: Vec<f64>,
    /// Same mean with each split's value clipped to `[0, 1]` first.
    pub clipped: Vec<f64>,
    /// Number of splits that reached size `k`.
    pub split_counts: Vec<usize>,
    pub per_split: Vec<Vec<f64>>,
}

impl FvrEstimateCurve {
    fn from_splits(per_split: Vec<Vec<f64>>) -> Self {
        let len = per_split.iter().map(Vec::len).max().unwrap_or(0);
        let mut sum = vec![0.0; len];
        let mut clipped = vec![0.0; len];
        let mut counts = vec![0usize; len];
        for split in &per_split {
            for (k, &v) in split.iter().enumerate() {
                sum[k] += v;
                clipped[k] += v.clamp(0.0, 1.0);
                counts[k] += 1;
            }
        }
        let estimate = sum
            .iter()
            .zip(&counts)
            .map(|(s, &c)| s / c as f64)
            .collect();
        let clipped = clipped
            .iter()
            .zip(&counts)
            .map(|(s, &c)| s / c as f64)
            .collect();
        Self {
            estimate,
            clipped,
            split_counts: counts,
            per_split,
        }
    }

    pub fn len(&self) -> usize {
        self.estimate.len()
    }

    pub fn is_empty(&self) -> bool {
        self.estimate.is_empty()
    }
}

/// Averages [`single_split_estimate`] over `config.n_splits` splits, split
/// `i` drawing from [`split_rng`]`(config.seed, i)`.
pub fn fvr_estimate(
    data: &Dataset,
    config: &EstimatorConfig,
    k_max: usize,
) -> Result<FvrEstimateCurve> {
    let (n_sel, _) = check_sizes(data, config, k_max)?;
    let per_split = (0..config.n_splits as u64)
        .into_par_iter()
        .map(|i| split_estimate(data, config, &mut split_rng(config.seed, i), k_max, n_sel))
        .collect::<Result<Vec<_>>>()?;
    Ok(FvrEstimateCurve::from_splits(per_split))
}

/// Picks the `lambda` in `grid` minimising the bootstrap mean squared
/// distance of `V_k(lambda)` from `min over lambda' of V_k(lambda')` on the
/// observed p-values. Bootstrap samples resample the first `k` p-values
/// with replacement and are shared across the grid. Ties go to the smallest
/// `lambda`.
pub fn bootstrap_lambda<R: Rng + ?Sized>(
    pvals: &PValueSequence,
    k: usize,
    grid: &[f64],
    n_boot: usize,
    rng: &mut R,
) -> Result<f64> {
    if grid.is_empty() {
        return Err(FvrError::InvalidArgument("lambda grid is empty".into()));
    }
    for &l in grid {
        check_lambda(l)?;
    }
    if n_boot == 0 {
        return Err(FvrError::InvalidArgument(
            "n_boot must be at least 1".into(),
        ));
    }
    if k == 0 || k > pvals.len() {
        return Err(FvrError::InvalidArgument(format!(
            "k = {k} must lie in 1..={}",
            pvals.len()
        )));
    }
    let observed = &pvals.values()[..k];
    let v_hat = |ps: &[f64], l: f64| count_above(ps, l) as f64 / (1.0 - l);
    let floor = grid
        .iter()
        .map(|&l| v_hat(observed, l))
        .fold(f64::INFINITY, f64::min);

    let mut mse = vec![0.0; grid.len()];
    let mut sample = vec![0.0; k];
    for _ in 0..n_boot {
        for s in sample.iter_mut() {
            *s = observed[rng.random_range(0..k)];
        }
        for (m, &l) in mse.iter_mut().zip(grid) {
            *m += (v_hat(&sample, l) - floor).powi(2);
        }
    }
    let mut best: Option<(f64, f64)> = None;
    for (&l, &m) in grid.iter().zip(&mse) {
        let m = m / n_boot as f64;
        best = match best {
            Some((bl, bm)) if bm < m || (bm == m && bl <= l) => Some((bl, bm)),
            _ => Some((l, m)),
        };
    }
    Ok(best.expect("grid is non-empty").0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};
    use rand_distr::{Distribution, StandardNormal};

    fn pv(v: &[f64]) -> PValueSequence {
        PValueSequence::new(v.to_vec()).unwrap()
    }

    #[test]
    fn threshold_counts_exceedances() {
        let p = pv(&[0.01, 0.7, 0.02, 0.9]);
        assert_eq!(threshold_estimate(&p, 4, 0.5).unwrap(), 4.0);
        assert_eq!(threshold_estimate(&p, 1, 0.5).unwrap(), 0.0);
        assert_eq!(threshold_estimate(&pv(&[0.1, 0.2]), 2, 0.5).unwrap(), 0.0);
    }

    #[test]
    fn threshold_formula_holds_across_lambda_grid() {
        let p = pv(&[0.05, 0.31, 0.5, 0.62, 0.99, 0.2]);
        for i in 1..20 {
            let lambda = i as f64 / 20.0;
            let count = p.values().iter().filter(|&&x| x > lambda).count() as f64;
            assert_eq!(
                threshold_estimate(&p, 6, lambda).unwrap(),
                count / (1.0 - lambda)
            );
        }
    }

    #[test]
    fn threshold_rejects_bad_lambda_and_k() {
        let p = pv(&[0.5]);
        for bad in [0.0, 1.0, -0.2, f64::NAN] {
            assert!(threshold_estimate(&p, 1, bad).is_err());
        }
        assert!(threshold_estimate(&p, 2, 0.5).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(EstimatorConfig::default().validate().is_ok());
        let bad = EstimatorConfig {
            n_splits: 0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = EstimatorConfig {
            split_fraction: 1.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn odd_rows_favour_selection() {
        let cfg = EstimatorConfig::default();
        assert_eq!(cfg.selection_rows(11), 6);
        assert_eq!(cfg.selection_rows(10), 5);
    }

    fn noise_data(n: usize, p: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = DMatrix::from_fn(n, p, |_, _| StandardNormal.sample(&mut rng));
        let y = DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
        Dataset::new(x, y).unwrap()
    }

    #[test]
    fn single_split_is_deterministic_and_checks_sizes() {
        let data = noise_data(40, 6, 11);
        let cfg = EstimatorConfig::default();
        let a = single_split_estimate(&data, &cfg, &mut split_rng(3, 0), 5).unwrap();
        let b = single_split_estimate(&data, &cfg, &mut split_rng(3, 0), 5).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 5);
        assert!(matches!(
            single_split_estimate(&data, &cfg, &mut split_rng(3, 0), 7),
            Err(FvrError::InvalidArgument(_))
        ));
        let tight = noise_data(8, 3, 1);
        // Four selection rows allow two steps; four holdout rows need k + 1 < 4.
        assert!(single_split_estimate(&tight, &cfg, &mut split_rng(0, 0), 2).is_ok());
        let uneven = EstimatorConfig {
            split_fraction: 0.75,
            ..cfg
        };
        assert!(matches!(
            single_split_estimate(&tight, &uneven, &mut split_rng(0, 0), 2),
            Err(FvrError::InsufficientHoldout { .. })
        ));
    }

    #[test]
    fn one_split_average_equals_the_single_split() {
        let data = noise_data(30, 5, 2);
        let cfg = EstimatorConfig {
            n_splits: 1,
            seed: 99,
            ..Default::default()
        };
        let curve = fvr_estimate(&data, &cfg, 4).unwrap();
        let single = single_split_estimate(&data, &cfg, &mut split_rng(99, 0), 4).unwrap();
        assert_eq!(curve.estimate, single);
        assert_eq!(curve.split_counts, vec![1; single.len()]);
    }

    #[test]
    fn bootstrap_single_element_grid() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let l = bootstrap_lambda(&pv(&[0.3, 0.8, 0.1]), 3, &[0.4], 20, &mut rng).unwrap();
        assert_eq!(l, 0.4);
    }

    #[test]
    fn bootstrap_ties_pick_smallest_lambda() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        // Every estimate is zero for every lambda.
        let l = bootstrap_lambda(&pv(&[0.01; 6]), 6, &[0.7, 0.3, 0.5], 50, &mut rng).unwrap();
        assert_eq!(l, 0.3);
        // Identical p-values above every lambda: V(lambda) = k / (1 - lambda)
        // is smallest at the smallest lambda, which then has zero spread.
        let l = bootstrap_lambda(&pv(&[0.99; 6]), 6, &[0.7, 0.3, 0.5], 50, &mut rng).unwrap();
        assert_eq!(l, 0.3);
    }

    #[test]
    fn bootstrap_rejects_bad_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = pv(&[0.5, 0.5]);
        assert!(bootstrap_lambda(&p, 2, &[], 10, &mut rng).is_err());
        assert!(bootstrap_lambda(&p, 2, &[0.5], 0, &mut rng).is_err());
        assert!(bootstrap_lambda(&p, 3, &[0.5], 10, &mut rng).is_err());
        assert!(bootstrap_lambda(&p, 2, &[1.5], 10, &mut rng).is_err());
    }
}

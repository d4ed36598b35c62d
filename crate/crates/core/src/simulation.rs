//! Block-correlation designs, Gaussian sampling, and the Monte Carlo
//! harness for true FDR/FVR curves and estimator performance.
//!
//! Replication `i` of a run seeded with `master_seed` draws from ChaCha8
//! keyed by `master_seed` on stream `i`, so results do not depend on how
//! replications are scheduled across threads. Aggregation always walks the
//! replications in index order.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::criteria::{full_model_false_count, projected_false_count};
use crate::error::{FvrError, Result};
use crate::estimator::{fvr_estimate, EstimatorConfig};
use crate::linalg;
use crate::population_model::PopulationModel;
use crate::selection::{forward_stepwise, Dataset, SelectionPath};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockDesign {
    pub n: usize,
    pub n_blocks: usize,
    pub block_size: usize,
    pub n_signal: usize,
    pub rho: f64,
    pub sigma_eps: f64,
    #[serde(default = "unit_coef")]
    pub signal_coef: f64,
}

fn unit_coef() -> f64 {
    1.0
}

impl BlockDesign {
    pub fn p(&self) -> usize {
        self.n_blocks * self.block_size
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_blocks == 0 || self.block_size == 0 {
            return Err(FvrError::InvalidDesign(
                "need at least one block of one variable".into(),
            ));
        }
        if self.n_signal > self.n_blocks {
            return Err(FvrError::InvalidDesign(format!(
                "n_signal = {} exceeds n_blocks = {}",
                self.n_signal, self.n_blocks
            )));
        }
        if !(0.0..1.0).contains(&self.rho) {
            return Err(FvrError::InvalidDesign(format!(
                "rho must lie in [0, 1), got {}",
                self.rho
            )));
        }
        if !self.sigma_eps.is_finite() || self.sigma_eps < 0.0 {
            return Err(FvrError::InvalidDesign(format!(
                "sigma_eps must be finite and nonnegative, got {}",
                self.sigma_eps
            )));
        }
        if !self.signal_coef.is_finite() {
            return Err(FvrError::InvalidDesign("signal_coef must be finite".into()));
        }
        Ok(())
    }
}

/// Block-diagonal equicorrelated covariance with `signal_coef` on the first
/// variable of each of the first `n_signal` blocks.
pub fn generate_block_design(design: &BlockDesign) -> Result<PopulationModel> {
    design.validate()?;
    let (b, p) = (design.block_size, design.p());
    let sigma = DMatrix::from_fn(p, p, |i, j| {
        if i == j {
            1.0
        } else if i / b == j / b {
            design.rho
        } else {
            0.0
        }
    });
    let mut beta = DVector::zeros(p);
    for block in 0..design.n_signal {
        beta[block * b] = design.signal_coef;
    }
    PopulationModel::new(sigma, beta, design.sigma_eps)
}

/// Draws datasets from a population model through a symmetric square root
/// of its covariance, computed once.
#[derive(Debug, Clone)]
pub struct GaussianSampler {
    model: PopulationModel,
    root: DMatrix<f64>,
}

impl GaussianSampler {
    pub fn new(model: &PopulationModel) -> Result<Self> {
        let root = linalg::symmetric_sqrt(model.sigma()).map_err(|min| {
            FvrError::Factorization(format!("covariance has negative eigenvalue {min:.3e}"))
        })?;
        Ok(Self {
            model: model.clone(),
            root,
        })
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Dataset> {
        let p = self.model.p();
        let z = DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal));
        let x = z * &self.root;
        let noise = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let y = &x * self.model.beta()
            + noise * self.model.sigma_eps()
            + DVector::from_element(n, self.model.intercept());
        Dataset::new(x, y)
    }
}

/// `n` i.i.d. rows `x ~ N(0, sigma)`, `y = intercept + x'beta + eps`.
pub fn sample_dataset<R: Rng + ?Sized>(
    model: &PopulationModel,
    n: usize,
    rng: &mut R,
) -> Result<Dataset> {
    GaussianSampler::new(model)?.sample(n, rng)
}

/// Generator for replication `rep` of a run seeded with `master_seed`.
pub fn rep_rng(master_seed: u64, rep: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(rep);
    rng
}

/// Monte Carlo mean and standard error (sample sd over `sqrt(count)`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanSe {
    pub mean: f64,
    pub se: f64,
    pub count: usize,
}

impl MeanSe {
    fn from_values(values: impl Iterator<Item = f64>) -> Self {
        let values: Vec<f64> = values.collect();
        let count = values.len();
        if count == 0 {
            return Self {
                mean: f64::NAN,
                se: f64::NAN,
                count,
            };
        }
        let mean = values.iter().sum::<f64>() / count as f64;
        let se = if count > 1 {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (count - 1) as f64;
            (var / count as f64).sqrt()
        } else {
            f64::NAN
        };
        Self { mean, se, count }
    }
}

/// Averages per-replication curves position by position; replications that
/// stopped early only contribute to the sizes they reached.
fn aggregate(curves: &[Vec<f64>], k_max: usize) -> Vec<MeanSe> {
    (0..k_max)
        .map(|k| MeanSe::from_values(curves.iter().filter_map(|c| c.get(k).copied())))
        .collect()
}

/// Full-model FDP and projected FVP of every prefix of `path`.
fn prefix_proportions(
    model: &PopulationModel,
    path: &SelectionPath,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut fdp = Vec::with_capacity(path.len());
    let mut fvp = Vec::with_capacity(path.len());
    for k in 1..=path.len() {
        let prefix = path.prefix(k);
        fdp.push(full_model_false_count(model, &prefix)?.proportion_f64());
        fvp.push(projected_false_count(model, &prefix)?.proportion_f64());
    }
    Ok((fdp, fvp))
}

/// One row of a Monte Carlo curve. The half-sample truth and the estimate
/// are absent for truth-only runs.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveRow {
    pub k: usize,
    pub fdr_true: MeanSe,
    pub fvr_true_full: MeanSe,
    pub fvr_true_half: Option<MeanSe>,
    pub fvr_est: Option<MeanSe>,
    pub fvr_est_clipped: Option<f64>,
}

impl CurveRow {
    /// Replications that contributed to every column of this row.
    pub fn n_reps_at_k(&self) -> usize {
        [
            Some(self.fdr_true.count),
            Some(self.fvr_true_full.count),
            self.fvr_true_half.map(|m| m.count),
            self.fvr_est.map(|m| m.count),
        ]
        .into_iter()
        .flatten()
        .min()
        .unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloResult {
    pub rows: Vec<CurveRow>,
    pub reps: usize,
    pub k_max: usize,
    pub n: usize,
    pub master_seed: u64,
    pub design: Option<BlockDesign>,
    pub estimator: Option<EstimatorConfig>,
}

impl MonteCarloResult {
    pub fn row(&self, k: usize) -> Option<&CurveRow> {
        self.rows.get(k.checked_sub(1)?)
    }
}

/// True full-model FDR and projected FVR of forward stepwise selection at
/// sample size `n`, for model sizes `1..=k_max`.
pub fn true_rate_curves(
    model: &PopulationModel,
    n: usize,
    k_max: usize,
    reps: usize,
    master_seed: u64,
) -> Result<MonteCarloResult> {
    if k_max > model.p() || k_max > n.saturating_sub(2) {
        return Err(FvrError::InvalidArgument(format!(
            "k_max = {k_max} exceeds min(p, n - 2) = {}",
            model.p().min(n.saturating_sub(2))
        )));
    }
    let sampler = GaussianSampler::new(model)?;
    let per_rep = (0..reps as u64)
        .into_par_iter()
        .map(|rep| {
            let mut rng = rep_rng(master_seed, rep);
            let data = sampler.sample(n, &mut rng)?;
            let path = forward_stepwise(&data, k_max)?;
            prefix_proportions(model, &path)
        })
        .collect::<Result<Vec<_>>>()?;
    let (fdp, fvp): (Vec<_>, Vec<_>) = per_rep.into_iter().unzip();
    let fdr = aggregate(&fdp, k_max);
    let fvr = aggregate(&fvp, k_max);
    let rows = (0..k_max)
        .map(|i| CurveRow {
            k: i + 1,
            fdr_true: fdr[i],
            fvr_true_full: fvr[i],
            fvr_true_half: None,
            fvr_est: None,
            fvr_est_clipped: None,
        })
        .collect();
    Ok(MonteCarloResult {
        rows,
        reps,
        k_max,
        n,
        master_seed,
        design: None,
        estimator: None,
    })
}

struct RepOutcome {
    fdp: Vec<f64>,
    fvp_full: Vec<f64>,
    fvp_half: Vec<f64>,
    estimate: Vec<f64>,
}

/// Runs `reps` replications of: sample `n` rows; true FDP/FVP along the
/// full-sample stepwise path; true FVP along the path fit on a fresh random
/// half; and the split-averaged FVR estimate.
pub fn run_model_experiment(
    model: &PopulationModel,
    n: usize,
    estimator_cfg: &EstimatorConfig,
    k_max: usize,
    reps: usize,
    master_seed: u64,
) -> Result<MonteCarloResult> {
    estimator_cfg.validate()?;
    let n_half = estimator_cfg.selection_rows(n);
    let limit = model
        .p()
        .min(n_half.saturating_sub(2))
        .min((n - n_half).saturating_sub(2));
    if k_max > limit {
        return Err(FvrError::InvalidArgument(format!(
            "k_max = {k_max} exceeds {limit}, the largest size both split parts support"
        )));
    }
    let sampler = GaussianSampler::new(model)?;
    let outcomes = (0..reps as u64)
        .into_par_iter()
        .map(|rep| {
            let mut rng = rep_rng(master_seed, rep);
            let data = sampler.sample(n, &mut rng)?;
            let full_path = forward_stepwise(&data, k_max)?;
            let (fdp, fvp_full) = prefix_proportions(model, &full_path)?;

            let mut rows: Vec<usize> = (0..n).collect();
            rows.shuffle(&mut rng);
            let half = data.select_rows(&rows[..n_half])?;
            let half_path = forward_stepwise(&half, k_max)?;
            let (_, fvp_half) = prefix_proportions(model, &half_path)?;

            let cfg = EstimatorConfig {
                seed: rng.next_u64(),
                ..*estimator_cfg
            };
            let estimate = fvr_estimate(&data, &cfg, k_max)?.estimate;
            Ok(RepOutcome {
                fdp,
                fvp_full,
                fvp_half,
                estimate,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let pick = |f: fn(&RepOutcome) -> &Vec<f64>| -> Vec<Vec<f64>> {
        outcomes.iter().map(|o| f(o).clone()).collect()
    };
    let fdr = aggregate(&pick(|o| &o.fdp), k_max);
    let fvr_full = aggregate(&pick(|o| &o.fvp_full), k_max);
    let fvr_half = aggregate(&pick(|o| &o.fvp_half), k_max);
    let est_curves = pick(|o| &o.estimate);
    let fvr_est = aggregate(&est_curves, k_max);
    let clipped: Vec<Vec<f64>> = est_curves
        .iter()
        .map(|c| c.iter().map(|v| v.clamp(0.0, 1.0)).collect())
        .collect();
    let fvr_clipped = aggregate(&clipped, k_max);

    let rows = (0..k_max)
        .map(|i| CurveRow {
            k: i + 1,
            fdr_true: fdr[i],
            fvr_true_full: fvr_full[i],
            fvr_true_half: Some(fvr_half[i]),
            fvr_est: Some(fvr_est[i]),
            fvr_est_clipped: Some(fvr_clipped[i].mean),
        })
        .collect();
    Ok(MonteCarloResult {
        rows,
        reps,
        k_max,
        n,
        master_seed,
        design: None,
        estimator: Some(*estimator_cfg),
    })
}

/// [`run_model_experiment`] on the model generated from a block design.
pub fn run_experiment(
    design: &BlockDesign,
    estimator_cfg: &EstimatorConfig,
    k_max: usize,
    reps: usize,
    master_seed: u64,
) -> Result<MonteCarloResult> {
    let model = generate_block_design(design)?;
    let mut result =
        run_model_experiment(&model, design.n, estimator_cfg, k_max, reps, master_seed)?;
    result.design = Some(*design);
    Ok(result)
}

//! Forward stepwise selection and incremental nested-model F-test p-values.
//!
//! Both use the same modified Gram-Schmidt sweep over mean-centred columns,
//! which is least squares with an intercept via a column-pivoted QR
//! factorisation built one column at a time.

use nalgebra::{DMatrix, DVector};
use statrs::distribution::{ContinuousCDF, FisherSnedecor};

use crate::criteria::SelectedSet;
use crate::error::{FvrError, Result};

/// Relative threshold for collinearity and for "zero" residual sums of
/// squares.
pub const COLLINEAR_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: DMatrix<f64>,
    y: DVector<f64>,
}

impl Dataset {
    pub fn new(x: DMatrix<f64>, y: DVector<f64>) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(FvrError::InvalidDataset(format!(
                "x has {} rows but y has length {}",
                x.nrows(),
                y.len()
            )));
        }
        if x.nrows() < 2 {
            return Err(FvrError::InvalidDataset(format!(
                "need n >= 2, got {}",
                x.nrows()
            )));
        }
        if x.ncols() < 1 {
            return Err(FvrError::InvalidDataset("need p >= 1".into()));
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(FvrError::InvalidDataset("non-finite entry".into()));
        }
        Ok(Self { x, y })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    /// Dataset made of the given rows, in order.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Dataset> {
        let x = self.x.select_rows(rows);
        let y = DVector::from_fn(rows.len(), |i, _| self.y[rows[i]]);
        Dataset::new(x, y)
    }
}

/// Order in which variables entered, with the residual sum of squares of the
/// intercept-only model followed by one value per step.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionPath {
    order: Vec<usize>,
    rss: Vec<f64>,
}

impl SelectionPath {
    /// Path with a given entry order, its RSS sequence fit on `data`.
    pub fn from_order(data: &Dataset, order: Vec<usize>) -> Result<Self> {
        if let Some(&bad) = order.iter().find(|&&c| c >= data.p()) {
            return Err(FvrError::InvalidArgument(format!(
                "variable {bad} out of range for p = {}",
                data.p()
            )));
        }
        SelectedSet::new(order.iter().copied())
            .map_err(|_| FvrError::InvalidArgument("path order repeats a variable".into()))?;
        let rss = nested_rss(data, &order);
        Ok(Self { order, rss })
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    /// `rss()[0]` is the total sum of squares; `rss()[j]` follows step `j`.
    pub fn rss(&self) -> &[f64] {
        &self.rss
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// The first `k` selected variables.
    pub fn prefix(&self, k: usize) -> SelectedSet {
        SelectedSet::new(self.order[..k].iter().copied()).expect("path indices are distinct")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PValueSequence(Vec<f64>);

impl PValueSequence {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(FvrError::InvalidArgument(format!(
                "p-value {v} outside [0, 1]"
            )));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

fn centered(v: impl Iterator<Item = f64> + Clone) -> DVector<f64> {
    let values: Vec<f64> = v.collect();
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    DVector::from_iterator(values.len(), values.into_iter().map(|x| x - mean))
}

fn centered_columns(x: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = x.clone();
    for mut col in out.column_iter_mut() {
        let mean = col.mean();
        col.add_scalar_mut(-mean);
    }
    out
}

/// Greedy forward selection with an intercept. Each step adds the variable
/// with the largest drop in residual sum of squares (smallest index on
/// ties). Stops early once no remaining variable reduces the RSS by more
/// than `COLLINEAR_TOL` times the total sum of squares.
pub fn forward_stepwise(data: &Dataset, max_steps: usize) -> Result<SelectionPath> {
    let (n, p) = (data.n(), data.p());
    let limit = p.min(n.saturating_sub(2));
    if max_steps > limit {
        return Err(FvrError::InvalidArgument(format!(
            "max_steps = {max_steps} exceeds min(p, n - 2) = {limit}"
        )));
    }
    let mut resid_x = centered_columns(data.x());
    let base_norms: Vec<f64> = resid_x.column_iter().map(|c| c.norm_squared()).collect();
    let mut resid_y = centered(data.y().iter().copied());
    let tss = resid_y.norm_squared();

    let mut active = vec![true; p];
    let mut order = Vec::with_capacity(max_steps);
    let mut rss = vec![tss];

    for _ in 0..max_steps {
        let mut best: Option<(usize, f64)> = None;
        for c in (0..p).filter(|&c| active[c]) {
            let col = resid_x.column(c);
            let nn = col.norm_squared();
            if nn <= COLLINEAR_TOL * base_norms[c] || nn == 0.0 {
                continue;
            }
            let reduction = col.dot(&resid_y).powi(2) / nn;
            if best.is_none_or(|(_, r)| reduction > r) {
                best = Some((c, reduction));
            }
        }
        let Some((chosen, reduction)) = best else {
            break;
        };
        if reduction <= COLLINEAR_TOL * tss {
            break;
        }
        let q = resid_x.column(chosen).normalize();
        let coef = q.dot(&resid_y);
        resid_y.axpy(-coef, &q, 1.0);
        active[chosen] = false;
        for c in (0..p).filter(|&c| active[c]) {
            let coef = q.dot(&resid_x.column(c));
            resid_x.column_mut(c).axpy(-coef, &q, 1.0);
        }
        order.push(chosen);
        let prev = *rss
            .last()
            .expect("rss starts with the total sum of squares");
        rss.push(resid_y.norm_squared().min(prev));
    }
    Ok(SelectionPath { order, rss })
}

/// Residual sums of squares of the nested intercept models along `order` on
/// `data`: entry 0 is the total sum of squares, entry `j` the RSS after the
/// first `j` columns. Columns collinear with their predecessors leave the RSS
/// unchanged.
fn nested_rss(data: &Dataset, order: &[usize]) -> Vec<f64> {
    let mut resid_y = centered(data.y().iter().copied());
    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(order.len());
    let mut rss = Vec::with_capacity(order.len() + 1);
    rss.push(resid_y.norm_squared());
    for &c in order {
        let raw = centered(data.x().column(c).iter().copied());
        let base = raw.norm_squared();
        let mut v = raw;
        // Two Gram-Schmidt passes keep the basis orthogonal at rho = 0.95.
        for _ in 0..2 {
            for q in &basis {
                let coef = q.dot(&v);
                v.axpy(-coef, q, 1.0);
            }
        }
        let nn = v.norm_squared();
        let prev = *rss.last().expect("non-empty");
        if nn <= COLLINEAR_TOL * base || nn == 0.0 {
            rss.push(prev);
            continue;
        }
        let q = v / nn.sqrt();
        let coef = q.dot(&resid_y);
        resid_y.axpy(-coef, &q, 1.0);
        basis.push(q);
        rss.push(resid_y.norm_squared().min(prev));
    }
    rss
}

/// P-values for the first `k` additions of `path`, each from the F test of
/// the model with the first `j` variables against the model with `j - 1`,
/// fit on `holdout`.
pub fn incremental_pvalues(
    path: &SelectionPath,
    holdout: &Dataset,
    k: usize,
) -> Result<PValueSequence> {
    if k > path.len() {
        return Err(FvrError::InvalidArgument(format!(
            "k = {k} exceeds path length {}",
            path.len()
        )));
    }
    if let Some(&bad) = path.order()[..k].iter().find(|&&c| c >= holdout.p()) {
        return Err(FvrError::InvalidArgument(format!(
            "path variable {bad} out of range for holdout with p = {}",
            holdout.p()
        )));
    }
    let n2 = holdout.n();
    if n2 <= k + 1 {
        return Err(FvrError::InsufficientHoldout {
            rows: n2,
            needed: k + 1,
        });
    }
    let rss = nested_rss(holdout, &path.order()[..k]);
    let zero = COLLINEAR_TOL * rss[0];
    let mut out = Vec::with_capacity(k);
    for j in 1..=k {
        let (before, after) = (rss[j - 1], rss[j]);
        let df = (n2 - j - 1) as f64;
        let p = if after <= zero {
            if before - after > zero {
                0.0
            } else {
                1.0
            }
        } else {
            let f = (before - after) / (after / df);
            let dist = FisherSnedecor::new(1.0, df).expect("positive degrees of freedom");
            dist.sf(f.max(0.0)).clamp(0.0, 1.0)
        };
        out.push(p);
    }
    PValueSequence::new(out)
}

//! Ground-truth Gaussian linear model and the population linear algebra
//! every false-selection criterion is evaluated against.
//!
//! Variables are indexed `0..p`. The response is an extra node appended
//! after the variables, so in any augmented or restricted covariance the
//! last row and column belong to `y`.

use std::collections::BTreeSet;
use std::fmt;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::criteria::SelectedSet;
use crate::error::{FvrError, Result};
use crate::linalg;

/// Largest selected set for which exhaustive support enumeration is allowed.
pub const ENUMERATION_CAP: usize = 20;

/// `y = intercept + x'beta + eps` with `x ~ N(0, sigma)` and
/// `eps ~ N(0, sigma_eps^2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationModel {
    sigma: DMatrix<f64>,
    beta: DVector<f64>,
    sigma_eps: f64,
    intercept: f64,
}

impl PopulationModel {
    pub fn new(sigma: DMatrix<f64>, beta: DVector<f64>, sigma_eps: f64) -> Result<Self> {
        let p = sigma.nrows();
        if p == 0 || sigma.ncols() != p {
            return Err(FvrError::InvalidModel(format!(
                "sigma must be a non-empty square matrix, got {}x{}",
                sigma.nrows(),
                sigma.ncols()
            )));
        }
        if beta.len() != p {
            return Err(FvrError::InvalidModel(format!(
                "beta has length {} but sigma is {p}x{p}",
                beta.len()
            )));
        }
        if sigma.iter().chain(beta.iter()).any(|v| !v.is_finite()) {
            return Err(FvrError::InvalidModel(
                "non-finite entry in sigma or beta".into(),
            ));
        }
        if !sigma_eps.is_finite() || sigma_eps < 0.0 {
            return Err(FvrError::InvalidModel(format!(
                "sigma_eps must be finite and nonnegative, got {sigma_eps}"
            )));
        }
        let scale = sigma.amax().max(f64::MIN_POSITIVE);
        for i in 0..p {
            for j in (i + 1)..p {
                if (sigma[(i, j)] - sigma[(j, i)]).abs() > 1e-12 * scale {
                    return Err(FvrError::InvalidModel(format!(
                        "sigma is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        let eig = SymmetricEigen::new(sigma.clone());
        let max = eig.eigenvalues.max();
        let min = eig.eigenvalues.min();
        if min < -1e-10 * max.abs() {
            return Err(FvrError::InvalidModel(format!(
                "sigma is not positive semidefinite (smallest eigenvalue {min:.3e})"
            )));
        }
        Ok(Self {
            sigma,
            beta,
            sigma_eps,
            intercept: 0.0,
        })
    }

    pub fn with_intercept(mut self, intercept: f64) -> Self {
        self.intercept = intercept;
        self
    }

    pub fn p(&self) -> usize {
        self.beta.len()
    }

    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    pub fn beta(&self) -> &DVector<f64> {
        &self.beta
    }

    pub fn sigma_eps(&self) -> f64 {
        self.sigma_eps
    }

    pub fn intercept(&self) -> f64 {
        self.intercept
    }

    /// `Cov(x, y) = sigma * beta`.
    pub fn signal_covariance(&self) -> DVector<f64> {
        &self.sigma * &self.beta
    }

    pub(crate) fn check_indices(&self, selected: &SelectedSet) -> Result<()> {
        match selected.indices().last() {
            Some(&max) if max >= self.p() => Err(FvrError::InvalidSelection(format!(
                "index {max} out of range for p = {}",
                self.p()
            ))),
            _ => Ok(()),
        }
    }
}

/// Joint covariance of `(x, y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedCovariance {
    matrix: DMatrix<f64>,
}

impl AugmentedCovariance {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn p(&self) -> usize {
        self.matrix.nrows() - 1
    }

    /// Covariance of `(x_A, y)`, response last.
    pub fn restricted(&self, selected: &[usize]) -> DMatrix<f64> {
        let mut idx = selected.to_vec();
        idx.push(self.p());
        linalg::submatrix(&self.matrix, &idx, &idx)
    }
}

pub fn build_augmented_covariance(model: &PopulationModel) -> AugmentedCovariance {
    let p = model.p();
    let cov_xy = model.signal_covariance();
    let var_y = model.beta.dot(&cov_xy) + model.sigma_eps * model.sigma_eps;
    let mut matrix = DMatrix::zeros(p + 1, p + 1);
    matrix.view_mut((0, 0), (p, p)).copy_from(&model.sigma);
    for j in 0..p {
        matrix[(j, p)] = cov_xy[j];
        matrix[(p, j)] = cov_xy[j];
    }
    matrix[(p, p)] = var_y;
    AugmentedCovariance { matrix }
}

/// Coefficients of the population regression of `x'beta` on `x_A`, in the
/// ascending index order of `selected`.
///
/// When `sigma_AA` is singular the normal equations have many solutions and
/// one of the sparsest is returned (smallest support, lexicographically
/// first among ties).
pub fn projected_coefficients(
    model: &PopulationModel,
    selected: &SelectedSet,
) -> Result<DVector<f64>> {
    model.check_indices(selected)?;
    if selected.is_empty() {
        return Err(FvrError::EmptySelection);
    }
    let idx = selected.indices();
    let cov_xy = model.signal_covariance();
    let sigma_aa = linalg::submatrix(&model.sigma, idx, idx);
    if let Some(coef) = linalg::guarded_solve(&sigma_aa, &linalg::subvector(&cov_xy, idx)) {
        return Ok(coef);
    }
    if idx.len() > ENUMERATION_CAP {
        return Err(FvrError::DegenerateProjection {
            size: idx.len(),
            cap: ENUMERATION_CAP,
        });
    }
    let mut found = None;
    for_each_sparse_solution(model, idx, |support, coef| {
        found = Some((support.to_vec(), coef.clone()));
        false
    });
    // The full set always spans its own projection, so some support of size
    // <= |A| satisfies the normal equations unless every candidate failed the
    // condition guard.
    let (support, coef) = found.ok_or(FvrError::DegenerateProjection {
        size: idx.len(),
        cap: ENUMERATION_CAP,
    })?;
    let mut out = DVector::zeros(idx.len());
    for (pos, &var) in support.iter().enumerate() {
        let slot = idx
            .binary_search(&var)
            .expect("support is a subset of the selection");
        out[slot] = coef[pos];
    }
    Ok(out)
}

/// Enumerates supports `B` of `idx` (sorted ascending) in order of increasing
/// size, lexicographically within a size, and calls `visit(B, b)` for every
/// `B` whose coefficients `b` reproduce the projection of `x'beta` onto
/// `x_idx`. Enumeration stops after the first size that has any solution, or
/// as soon as `visit` returns `false`.
pub(crate) fn for_each_sparse_solution(
    model: &PopulationModel,
    idx: &[usize],
    mut visit: impl FnMut(&[usize], &DVector<f64>) -> bool,
) {
    let cov_xy = model.signal_covariance();
    let tol = linalg::ZERO_REL_TOL * cov_xy.amax();
    let target = linalg::subvector(&cov_xy, idx);
    let n = idx.len();
    for size in 0..=n {
        let mut any = false;
        let mut combo: Vec<usize> = (0..size).collect();
        loop {
            let support: Vec<usize> = combo.iter().map(|&c| idx[c]).collect();
            let sigma_bb = linalg::submatrix(&model.sigma, &support, &support);
            if let Some(coef) =
                linalg::guarded_solve(&sigma_bb, &linalg::subvector(&cov_xy, &support))
            {
                let sigma_ab = linalg::submatrix(&model.sigma, idx, &support);
                let residual = &sigma_ab * &coef - &target;
                if residual.amax() <= tol {
                    any = true;
                    if !visit(&support, &coef) {
                        return;
                    }
                }
            }
            if !next_combination(&mut combo, n) {
                break;
            }
        }
        if any {
            return;
        }
    }
}

/// Advances `combo` to the next k-combination of `0..n` in lexicographic
/// order. Returns `false` once exhausted.
fn next_combination(combo: &mut [usize], n: usize) -> bool {
    let k = combo.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if combo[i] < n - k + i {
            combo[i] += 1;
            for j in (i + 1)..k {
                combo[j] = combo[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Node {
    Variable(usize),
    Response,
}

impl fmt::Display for Node {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Node::Variable(j) => write!(f, "x{j}"),
            Node::Response => f.write_str("y"),
        }
    }
}

/// Undirected graph of nonzero partial correlations among a set of
/// variables and the response.
#[derive(Debug, Clone, PartialEq)]
pub struct DependenceGraph {
    variables: Vec<usize>,
    edges: BTreeSet<(Node, Node)>,
}

impl DependenceGraph {
    pub fn variables(&self) -> &[usize] {
        &self.variables
    }

    /// Edges as ordered pairs with the smaller node first.
    pub fn edges(&self) -> impl Iterator<Item = &(Node, Node)> {
        self.edges.iter()
    }

    pub fn has_edge(&self, a: Node, b: Node) -> bool {
        let key = if a <= b { (a, b) } else { (b, a) };
        self.edges.contains(&key)
    }

    /// Variables directly connected to `y`.
    pub fn response_neighbors(&self) -> Vec<usize> {
        self.variables
            .iter()
            .copied()
            .filter(|&j| self.has_edge(Node::Variable(j), Node::Response))
            .collect()
    }
}

/// Dependence graph of the marginal distribution of `(x_A, y)`, or of all
/// variables when `selected` is `None`.
pub fn induced_graph(
    model: &PopulationModel,
    selected: Option<&SelectedSet>,
) -> Result<DependenceGraph> {
    let variables: Vec<usize> = match selected {
        Some(set) => {
            model.check_indices(set)?;
            set.indices().to_vec()
        }
        None => (0..model.p()).collect(),
    };
    let restricted = build_augmented_covariance(model).restricted(&variables);
    let precision = linalg::guarded_inverse(&restricted)
        .map_err(|condition| FvrError::DegenerateGraph { condition })?;
    let tol = linalg::zero_tol(precision.iter());
    let node = |i: usize| {
        if i == variables.len() {
            Node::Response
        } else {
            Node::Variable(variables[i])
        }
    };
    let mut edges = BTreeSet::new();
    for i in 0..=variables.len() {
        for j in (i + 1)..=variables.len() {
            if precision[(i, j)].abs() > tol {
                let (a, b) = (node(i), node(j));
                edges.insert(if a <= b { (a, b) } else { (b, a) });
            }
        }
    }
    Ok(DependenceGraph { variables, edges })
}

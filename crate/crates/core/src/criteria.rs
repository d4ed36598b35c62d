//! Counts of false selections under the marginal, full-model and
//! projected-model definitions, the minimal explaining subset, and the
//! path misordering diagnostic.

use std::fmt;

use num_rational::Ratio;

use crate::error::{FvrError, Result};
use crate::linalg;
use crate::population_model::{
    for_each_sparse_solution, induced_graph, PopulationModel, ENUMERATION_CAP,
};

/// Distinct variable indices, kept in ascending order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct SelectedSet(Vec<usize>);

impl SelectedSet {
    pub fn new(indices: impl IntoIterator<Item = usize>) -> Result<Self> {
        let mut v: Vec<usize> = indices.into_iter().collect();
        v.sort_unstable();
        if let Some(w) = v.windows(2).find(|w| w[0] == w[1]) {
            return Err(FvrError::InvalidSelection(format!(
                "duplicate index {}",
                w[0]
            )));
        }
        Ok(Self(v))
    }

    /// Builds a set from 1-based labels, as used on the command line.
    pub fn from_one_based(labels: impl IntoIterator<Item = usize>) -> Result<Self> {
        let mut idx = Vec::new();
        for l in labels {
            if l == 0 {
                return Err(FvrError::InvalidSelection(
                    "labels are 1-based; got 0".into(),
                ));
            }
            idx.push(l - 1);
        }
        Self::new(idx)
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, j: usize) -> bool {
        self.0.binary_search(&j).is_ok()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Criterion {
    Marginal,
    Full,
    Projected,
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Criterion::Marginal => "marginal",
            Criterion::Full => "full",
            Criterion::Projected => "projected",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FalseSelectionReport {
    pub criterion: Criterion,
    pub false_count: usize,
    pub selected_count: usize,
}

impl FalseSelectionReport {
    fn new(criterion: Criterion, false_count: usize, selected_count: usize) -> Self {
        debug_assert!(selected_count > 0 && false_count <= selected_count);
        Self {
            criterion,
            false_count,
            selected_count,
        }
    }

    /// Exact `V / |A|`, reduced.
    pub fn proportion(&self) -> Ratio<u64> {
        Ratio::new(self.false_count as u64, self.selected_count as u64)
    }

    pub fn proportion_f64(&self) -> f64 {
        self.false_count as f64 / self.selected_count as f64
    }
}

fn check_nonempty(model: &PopulationModel, selected: &SelectedSet) -> Result<()> {
    model.check_indices(selected)?;
    if selected.is_empty() {
        return Err(FvrError::EmptySelection);
    }
    Ok(())
}

/// A selection is false when it is marginally uncorrelated with `y`.
pub fn marginal_false_count(
    model: &PopulationModel,
    selected: &SelectedSet,
) -> Result<FalseSelectionReport> {
    check_nonempty(model, selected)?;
    let cov_xy = model.signal_covariance();
    let tol = linalg::zero_tol(cov_xy.iter());
    let v = selected
        .indices()
        .iter()
        .filter(|&&j| cov_xy[j].abs() <= tol)
        .count();
    Ok(FalseSelectionReport::new(
        Criterion::Marginal,
        v,
        selected.len(),
    ))
}

/// A selection is false when its full-model coefficient is zero.
pub fn full_model_false_count(
    model: &PopulationModel,
    selected: &SelectedSet,
) -> Result<FalseSelectionReport> {
    check_nonempty(model, selected)?;
    let beta = model.beta();
    let tol = linalg::zero_tol(beta.iter());
    let v = selected
        .indices()
        .iter()
        .filter(|&&j| beta[j].abs() <= tol)
        .count();
    Ok(FalseSelectionReport::new(
        Criterion::Full,
        v,
        selected.len(),
    ))
}

/// A selection is false when its coefficient in the model projected onto the
/// selected variables is zero.
///
/// Uses the zeros of the response row of the inverse restricted augmented
/// covariance when that matrix is well conditioned, and `|A| - |B|` with `B`
/// the minimal explaining subset otherwise.
pub fn projected_false_count(
    model: &PopulationModel,
    selected: &SelectedSet,
) -> Result<FalseSelectionReport> {
    check_nonempty(model, selected)?;
    let correct = projected_support(model, selected)?
        .iter()
        .filter(|&&nonzero| nonzero)
        .count();
    Ok(FalseSelectionReport::new(
        Criterion::Projected,
        selected.len() - correct,
        selected.len(),
    ))
}

/// For each selected variable (ascending), whether it carries a nonzero
/// coefficient in the projected model.
pub(crate) fn projected_support(
    model: &PopulationModel,
    selected: &SelectedSet,
) -> Result<Vec<bool>> {
    match induced_graph(model, Some(selected)) {
        Ok(graph) => {
            let neighbors = graph.response_neighbors();
            Ok(selected
                .indices()
                .iter()
                .map(|j| neighbors.binary_search(j).is_ok())
                .collect())
        }
        Err(FvrError::DegenerateGraph { .. }) => {
            let minimal = minimal_subset(model, selected)?;
            Ok(selected
                .indices()
                .iter()
                .map(|&j| minimal.contains(j))
                .collect())
        }
        Err(e) => Err(e),
    }
}

/// Smallest `B` within `selected` whose projection of `x'beta` equals the
/// projection onto all of `selected`; the lexicographically smallest such
/// set when several exist.
pub fn minimal_subset(model: &PopulationModel, selected: &SelectedSet) -> Result<SelectedSet> {
    Ok(minimal_subsets(model, selected)?
        .into_iter()
        .next()
        .unwrap_or_default())
}

/// Every minimal explaining subset, in lexicographic order.
pub fn minimal_subsets(
    model: &PopulationModel,
    selected: &SelectedSet,
) -> Result<Vec<SelectedSet>> {
    model.check_indices(selected)?;
    if selected.len() > ENUMERATION_CAP {
        return Err(FvrError::EnumerationCap {
            size: selected.len(),
            cap: ENUMERATION_CAP,
        });
    }
    let mut out = Vec::new();
    for_each_sparse_solution(model, selected.indices(), |support, _| {
        out.push(SelectedSet(support.to_vec()));
        true
    });
    Ok(out)
}

/// Fewest noise variables that must have been moved forward in `path` to
/// turn some ordering with a minimal subset of the first `k` variables first
/// into `path`. Minimised over all minimal subsets.
pub fn misordering_count(model: &PopulationModel, path: &[usize], k: usize) -> Result<usize> {
    if k > path.len() {
        return Err(FvrError::InvalidArgument(format!(
            "k = {k} exceeds path length {}",
            path.len()
        )));
    }
    let prefix = &path[..k];
    let selected = SelectedSet::new(prefix.iter().copied())?;
    let candidates = minimal_subsets(model, &selected)?;
    let t = candidates
        .iter()
        .map(|b| {
            let last_core = prefix.iter().rposition(|&v| b.contains(v));
            match last_core {
                None => 0,
                Some(pos) => prefix[..pos].iter().filter(|&&v| !b.contains(v)).count(),
            }
        })
        .min()
        .unwrap_or(0);
    Ok(t)
}

/// Truth of the incremental hypotheses along `path`: entry `j` is `true`
/// when the `j+1`-th addition has a zero coefficient in the model projected
/// onto the first `j+1` variables.
pub fn incremental_null_flags(
    model: &PopulationModel,
    path: &[usize],
    k: usize,
) -> Result<Vec<bool>> {
    if k > path.len() {
        return Err(FvrError::InvalidArgument(format!(
            "k = {k} exceeds path length {}",
            path.len()
        )));
    }
    (1..=k)
        .map(|j| {
            let prefix = SelectedSet::new(path[..j].iter().copied())?;
            let support = projected_support(model, &prefix)?;
            let pos = prefix
                .indices()
                .binary_search(&path[j - 1])
                .expect("last addition is in its own prefix");
            Ok(!support[pos])
        })
        .collect()
}

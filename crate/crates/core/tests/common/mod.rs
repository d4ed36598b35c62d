//! Fixtures and independent reference computations shared by the
//! integration tests. Nothing here calls back into the library's numerical
//! routines, so agreement with them is meaningful.

#![allow(dead_code)]

use fvrlab::{PopulationModel, SelectedSet};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

/// Selected set from 1-based labels.
pub fn labels(l: &[usize]) -> SelectedSet {
    SelectedSet::from_one_based(l.iter().copied()).unwrap()
}

/// Four variables in the geometry of the simple example: a latent signal
/// `s`, two noisy copies `x1 = s + u1` and `x2 = s + u2`, `x3 = s` itself
/// (the only full-model coefficient), and `x4` independent of everything.
pub fn four_variable_model() -> PopulationModel {
    #[rustfmt::skip]
    let sigma = DMatrix::from_row_slice(4, 4, &[
        2.0, 1.0, 1.0, 0.0,
        1.0, 2.0, 1.0, 0.0,
        1.0, 1.0, 1.0, 0.0,
        0.0, 0.0, 0.0, 1.0,
    ]);
    PopulationModel::new(sigma, DVector::from_vec(vec![0.0, 0.0, 1.0, 0.0]), 1.0).unwrap()
}

/// (label, 1-based selection, expected marginal, full and projected
/// proportions as (numerator, denominator)).
pub type Scenario = (&'static str, &'static [usize], [(u64, u64); 3]);

/// Scenarios for the four-variable model: name, 1-based selection and the
/// marginal, full and projected proportions.
pub const FOUR_VARIABLE_SCENARIOS: [Scenario; 4] = [
    ("A", &[3], [(0, 1), (0, 1), (0, 1)]),
    ("B", &[1, 2], [(0, 1), (1, 1), (0, 1)]),
    ("C", &[3, 4], [(1, 2), (1, 2), (1, 2)]),
    ("D", &[1, 2, 3], [(0, 1), (2, 3), (2, 3)]),
];

/// Eight variables whose dependence graph matches the graph example:
/// covariance pairs {1,2}, {3,5}, {6,7} (correlation 1/2), variables 4 and
/// 8 isolated, and signal on variables 1 and 3. With y attached, 2 reaches
/// y through 1, 5 through 3, and 7 has no path at all.
pub fn graph_example_model() -> PopulationModel {
    let mut sigma = DMatrix::identity(8, 8);
    for (a, b) in [(0, 1), (2, 4), (5, 6)] {
        sigma[(a, b)] = 0.5;
        sigma[(b, a)] = 0.5;
    }
    let mut beta = DVector::zeros(8);
    beta[0] = 1.0;
    beta[2] = 1.0;
    PopulationModel::new(sigma, beta, 1.0).unwrap()
}

/// The same model in the CLI's model-file format.
pub const GRAPH_EXAMPLE_TOML: &str = r#"
sigma = [
  [1.0, 0.5, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
  [0.5, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
  [0.0, 0.0, 1.0, 0.0, 0.5, 0.0, 0.0, 0.0],
  [0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0],
  [0.0, 0.0, 0.5, 0.0, 1.0, 0.0, 0.0, 0.0],
  [0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.5, 0.0],
  [0.0, 0.0, 0.0, 0.0, 0.0, 0.5, 1.0, 0.0],
  [0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0],
]
beta = [1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0]
sigma_eps = 1.0
"#;

/// Gauss-Jordan elimination with partial pivoting on plain row vectors.
/// Returns `None` when a pivot falls below `1e-13` of the largest entry.
pub fn gauss_jordan_inverse(a: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let n = a.len();
    let scale = a
        .iter()
        .flat_map(|r| r.iter())
        .fold(0.0f64, |m, v| m.max(v.abs()));
    let mut m: Vec<Vec<f64>> = a
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let mut row = r.clone();
            row.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            row
        })
        .collect();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))?;
        if m[piv][col].abs() <= 1e-13 * scale {
            return None;
        }
        m.swap(col, piv);
        let d = m[col][col];
        for v in m[col].iter_mut() {
            *v /= d;
        }
        let pivot_row = m[col].clone();
        for (r, row) in m.iter_mut().enumerate() {
            let f = row[col];
            if r != col && f != 0.0 {
                for (x, p) in row.iter_mut().zip(&pivot_row) {
                    *x -= f * p;
                }
            }
        }
    }
    Some(m.into_iter().map(|r| r[n..].to_vec()).collect())
}

pub fn solve(a: &[Vec<f64>], b: &[f64]) -> Option<Vec<f64>> {
    let inv = gauss_jordan_inverse(a)?;
    Some(
        inv.iter()
            .map(|row| row.iter().zip(b).map(|(x, y)| x * y).sum())
            .collect(),
    )
}

/// Joint covariance of (x_A, y) written out entry by entry from
/// `cov(x_i, y) = sum_k sigma_ik beta_k` and
/// `var(y) = sum_ij beta_i sigma_ij beta_j + sigma_eps^2`.
pub fn joint_covariance(model: &PopulationModel, a: &[usize]) -> Vec<Vec<f64>> {
    let s = model.sigma();
    let b = model.beta();
    let p = model.p();
    let cxy = |i: usize| (0..p).map(|k| s[(i, k)] * b[k]).sum::<f64>();
    let vy = (0..p)
        .flat_map(|i| (0..p).map(move |j| (i, j)))
        .map(|(i, j)| b[i] * s[(i, j)] * b[j])
        .sum::<f64>()
        + model.sigma_eps().powi(2);
    let m = a.len();
    let mut out = vec![vec![0.0; m + 1]; m + 1];
    for (r, &i) in a.iter().enumerate() {
        for (c, &j) in a.iter().enumerate() {
            out[r][c] = s[(i, j)];
        }
        out[r][m] = cxy(i);
        out[m][r] = cxy(i);
    }
    out[m][m] = vy;
    out
}

/// Smallest subsets B of `a` (lexicographic order within the smallest size)
/// such that regressing the signal on x_B reproduces every covariance
/// between the signal and x_A. Tested with `solve` on the normal equations.
pub fn brute_force_minimal_subsets(model: &PopulationModel, a: &[usize]) -> Vec<Vec<usize>> {
    let s = model.sigma();
    let cxy: Vec<f64> = (0..model.p())
        .map(|i| (0..model.p()).map(|k| s[(i, k)] * model.beta()[k]).sum())
        .collect();
    let scale = cxy.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if a.iter().all(|&i| cxy[i].abs() <= 1e-8 * scale) || scale == 0.0 {
        return vec![vec![]];
    }
    let m = a.len();
    for size in 1..=m {
        let mut found = Vec::new();
        for mask in 0u32..(1 << m) {
            if mask.count_ones() as usize != size {
                continue;
            }
            let b: Vec<usize> = (0..m)
                .filter(|&i| mask & (1 << i) != 0)
                .map(|i| a[i])
                .collect();
            let gram: Vec<Vec<f64>> = b
                .iter()
                .map(|&i| b.iter().map(|&j| s[(i, j)]).collect())
                .collect();
            let rhs: Vec<f64> = b.iter().map(|&i| cxy[i]).collect();
            let Some(coef) = solve(&gram, &rhs) else {
                continue;
            };
            let ok = a.iter().all(|&i| {
                let fitted: f64 = b.iter().zip(&coef).map(|(&j, c)| s[(i, j)] * c).sum();
                (fitted - cxy[i]).abs() <= 1e-8 * scale
            });
            if ok {
                found.push(b);
            }
        }
        if !found.is_empty() {
            found.sort();
            return found;
        }
    }
    unreachable!("the full set always reproduces its own covariances")
}

/// Random symmetric positive definite matrix with a random block pattern
/// and a random sparse signal: blocks give exact zeros in the projected
/// model while staying well conditioned.
pub fn random_structured_model<R: Rng>(p: usize, rng: &mut R) -> PopulationModel {
    let mut group = vec![0usize; p];
    let mut g = 0;
    for (i, slot) in group.iter_mut().enumerate() {
        if i > 0 && rng.random_bool(0.5) {
            g += 1;
        }
        *slot = g;
    }
    let w = DMatrix::from_fn(p, p, |i, j| {
        if group[i] == group[j] {
            rng.sample::<f64, _>(StandardNormal)
        } else {
            0.0
        }
    });
    let sigma = &w * w.transpose() + DMatrix::identity(p, p) * 0.5;
    let sigma = (&sigma + sigma.transpose()) * 0.5;
    let beta = DVector::from_fn(p, |_, _| {
        if rng.random_bool(0.3) {
            rng.random_range(0.5..2.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 }
        } else {
            0.0
        }
    });
    PopulationModel::new(sigma, beta, rng.random_range(0.1..2.0)).unwrap()
}

/// Residual sum of squares of the least-squares fit of `y` on an intercept
/// plus `cols` of `x`, via SVD of the centred design.
pub fn ols_rss(x: &DMatrix<f64>, y: &DVector<f64>, cols: &[usize]) -> f64 {
    let yc = y.add_scalar(-y.mean());
    if cols.is_empty() {
        return yc.norm_squared();
    }
    let mut xc = DMatrix::zeros(x.nrows(), cols.len());
    for (k, &c) in cols.iter().enumerate() {
        let col = x.column(c);
        let mean = col.mean();
        xc.set_column(k, &col.add_scalar(-mean));
    }
    let svd = xc.clone().svd(true, true);
    let coef = svd.solve(&yc, 1e-12).unwrap();
    (yc - xc * coef).norm_squared()
}

/// Upper tail of F(1, df) at `f`, through the Student t distribution with
/// integer `df` degrees of freedom in closed form (finite trigonometric
/// series for `P(|T| <= t)`).
pub fn f1_upper_tail(f: f64, df: usize) -> f64 {
    let t = f.max(0.0).sqrt();
    let theta = (t / (df as f64).sqrt()).atan();
    let (s, c) = theta.sin_cos();
    let inside = if df % 2 == 1 {
        let mut term = c;
        let mut sum = if df > 1 { c } else { 0.0 };
        let mut k = 1usize;
        while 2 * k + 1 < df {
            term *= c * c * (2 * k) as f64 / (2 * k + 1) as f64;
            sum += term;
            k += 1;
        }
        2.0 / std::f64::consts::PI * (theta + s * sum)
    } else {
        let mut term = 1.0;
        let mut sum = 1.0;
        let mut k = 1usize;
        while 2 * k < df {
            term *= c * c * (2 * k - 1) as f64 / (2 * k) as f64;
            sum += term;
            k += 1;
        }
        s * sum
    };
    1.0 - inside
}

/// Asymptotic Kolmogorov distribution: `P(K > x)`.
pub fn kolmogorov_sf(x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    let mut sum = 0.0;
    for j in 1..=100 {
        let term = (-2.0 * (j * j) as f64 * x * x).exp();
        sum += if j % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// One-sample KS test of `values` against Uniform(0, 1); returns the
/// statistic and the p-value from the Stephens small-sample correction.
pub fn ks_uniform(values: &[f64]) -> (f64, f64) {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let d = v
        .iter()
        .enumerate()
        .map(|(i, &x)| ((i + 1) as f64 / n - x).max(x - i as f64 / n))
        .fold(0.0f64, f64::max);
    let sn = n.sqrt();
    (d, kolmogorov_sf((sn + 0.12 + 0.11 / sn) * d))
}

pub fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

//! Collaborative-filtering baseline: binary user-show matrix, nonnegative
//! factorization by coordinate descent, cosine ranking.

use std::collections::{BTreeMap, BTreeSet};

use ndarray::{Array2, ArrayView1};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::embed::EmbeddingTable;
use crate::error::{Error, Result};
use crate::ids::ShowId;
use crate::scalar::Scalar;
use crate::seeds::sub_rng;

/// Sparse 0-1 matrix. Rows are users (or per-user histories), columns index
/// into `shows`.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionMatrix {
    /// Column id to show id; a bijection onto `0..cols`.
    pub shows: Vec<ShowId>,
    /// Sorted column indices of the ones in each row.
    pub rows: Vec<Vec<usize>>,
}

impl InteractionMatrix {
    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn num_cols(&self) -> usize {
        self.shows.len()
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    pub fn density(&self) -> f64 {
        let cells = self.num_rows() * self.num_cols();
        if cells == 0 {
            0.0
        } else {
            self.nnz() as f64 / cells as f64
        }
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.rows[row].binary_search(&col).is_ok()
    }

    pub fn to_dense<F: Scalar>(&self) -> Array2<F> {
        let mut dense = Array2::zeros((self.num_rows(), self.num_cols()));
        for (r, cols) in self.rows.iter().enumerate() {
            for &c in cols {
                dense[[r, c]] = F::one();
            }
        }
        dense
    }

    /// Column-major view: for each column, the rows holding a one.
    fn columns(&self) -> Vec<Vec<usize>> {
        let mut cols = vec![Vec::new(); self.num_cols()];
        for (r, row) in self.rows.iter().enumerate() {
            for &c in row {
                cols[c].push(r);
            }
        }
        cols
    }
}

/// Builds X from per-user histories (held-out targets already removed by the
/// caller). `show_index` fixes the column order.
pub fn build_interaction_matrix(histories: &[Vec<ShowId>], show_index: &[ShowId]) -> Result<InteractionMatrix> {
    let col_of: BTreeMap<ShowId, usize> = show_index.iter().enumerate().map(|(c, &s)| (s, c)).collect();
    if col_of.len() != show_index.len() {
        return Err(Error::data("show index contains duplicates"));
    }
    let rows = histories
        .iter()
        .map(|history| {
            history
                .iter()
                .map(|s| {
                    col_of
                        .get(s)
                        .copied()
                        .ok_or_else(|| Error::data(format!("show {s} is not in the show index")))
                })
                .collect::<Result<BTreeSet<usize>>>()
                .map(|set| set.into_iter().collect())
        })
        .collect::<Result<Vec<Vec<usize>>>>()?;
    Ok(InteractionMatrix { shows: show_index.to_vec(), rows })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NmfConfig {
    pub rank: usize,
    pub max_iters: usize,
    /// Stop once the relative objective decrease falls below this.
    pub tol: f64,
    pub seed: u64,
}

impl Default for NmfConfig {
    fn default() -> Self {
        NmfConfig { rank: 40, max_iters: 200, tol: 1e-4, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Factorization<F> {
    /// users x rank
    pub w: Array2<F>,
    /// rank x shows
    pub h: Array2<F>,
    /// ||X - WH||_F^2 after initialization and after each outer iteration.
    pub objective: Vec<f64>,
}

impl<F: Scalar> Factorization<F> {
    pub fn rank(&self) -> usize {
        self.w.ncols()
    }

    pub fn w_table(&self) -> Result<EmbeddingTable<F>> {
        EmbeddingTable::dense("nmf-W", self.w.clone())
    }

    pub fn h_table(&self) -> Result<EmbeddingTable<F>> {
        EmbeddingTable::dense("nmf-H", self.h.clone())
    }
}

/// `||X - WH||_F^2 = ||X||^2 - 2 <X, WH> + <W^T W, H H^T>`, accumulated in f64.
fn objective<F: Scalar>(x: &InteractionMatrix, w: &Array2<F>, h: &Array2<F>) -> f64 {
    let mut cross = 0.0;
    for (r, cols) in x.rows.iter().enumerate() {
        for &c in cols {
            cross += w.row(r).dot(&h.column(c)).as_f64();
        }
    }
    let wtw = w.t().dot(w);
    let hht = h.dot(&h.t());
    let quad: f64 = wtw.iter().zip(hht.iter()).map(|(a, b)| a.as_f64() * b.as_f64()).sum();
    (x.nnz() as f64 - 2.0 * cross + quad).max(0.0)
}

/// One sweep of exact coordinate minimization over the columns of `factor`
/// (HALS): `factor` is n x r, `gram` = other^T other (r x r), `cross` = X other (n x r).
fn coordinate_sweep<F: Scalar>(factor: &mut Array2<F>, gram: &Array2<F>, cross: &Array2<F>) {
    let rank = factor.ncols();
    for t in 0..rank {
        let hess = gram[[t, t]];
        if hess <= F::zero() {
            continue;
        }
        for i in 0..factor.nrows() {
            let mut grad = -cross[[i, t]];
            for r in 0..rank {
                grad = grad + factor[[i, r]] * gram[[r, t]];
            }
            let updated = factor[[i, t]] - grad / hess;
            factor[[i, t]] = if updated > F::zero() { updated } else { F::zero() };
        }
    }
}

/// Alternating nonnegative coordinate descent on `||X - WH||_F^2`.
pub fn nmf_factorize<F: Scalar>(x: &InteractionMatrix, config: &NmfConfig) -> Result<Factorization<F>> {
    let (n, m) = (x.num_rows(), x.num_cols());
    if n == 0 || m == 0 {
        return Err(Error::EmptyInput("interaction matrix has no rows or no columns".into()));
    }
    if config.rank == 0 || config.rank > n.min(m) {
        return Err(Error::config(format!(
            "rank {} must lie in [1, min(rows, cols) = {}]",
            config.rank,
            n.min(m)
        )));
    }
    let rank = config.rank;
    let mut rng = sub_rng(config.seed, "nmf", 0);
    let scale = (x.density() / rank as f64).sqrt();
    let mut w = Array2::from_shape_simple_fn((n, rank), || F::of(scale * rng.gen::<f64>()));
    let mut h = Array2::from_shape_simple_fn((rank, m), || F::of(scale * rng.gen::<f64>()));

    let columns = x.columns();
    let mut history = vec![objective(x, &w, &h)];
    for _ in 0..config.max_iters {
        // W step: gram = H H^T, cross = X H^T.
        let hht = h.dot(&h.t());
        let mut xht = Array2::<F>::zeros((n, rank));
        for (r, cols) in x.rows.iter().enumerate() {
            let mut acc = xht.row_mut(r);
            for &c in cols {
                acc += &h.column(c);
            }
        }
        coordinate_sweep(&mut w, &hht, &xht);

        // H step on the transpose: gram = W^T W, cross = X^T W.
        let wtw = w.t().dot(&w);
        let mut xtw = Array2::<F>::zeros((m, rank));
        for (c, rows) in columns.iter().enumerate() {
            let mut acc = xtw.row_mut(c);
            for &r in rows {
                acc += &w.row(r);
            }
        }
        let mut ht = h.t().to_owned();
        coordinate_sweep(&mut ht, &wtw, &xtw);
        h = ht.t().to_owned();

        if w.iter().chain(h.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Numeric("NMF factors became non-finite".into()));
        }
        let previous = *history.last().unwrap();
        let current = objective(x, &w, &h);
        history.push(current);
        if previous == 0.0 || (previous - current) / previous < config.tol {
            break;
        }
    }
    Ok(Factorization { w, h, objective: history })
}

/// Shows not in `exclude`, by descending cosine between `user_row` and each
/// column of `h`; ties to the lower show id. Zero-norm vectors score 0.
pub fn cf_rank<F: Scalar>(
    user_row: ArrayView1<'_, F>,
    h: &Array2<F>,
    shows: &[ShowId],
    exclude: &BTreeSet<ShowId>,
) -> Result<Vec<ShowId>> {
    if user_row.len() != h.nrows() {
        return Err(Error::Dimension { expected: h.nrows(), got: user_row.len() });
    }
    if shows.len() != h.ncols() {
        return Err(Error::Dimension { expected: h.ncols(), got: shows.len() });
    }
    let user_norm = user_row.dot(&user_row).sqrt();
    let mut scored: Vec<(F, ShowId)> = shows
        .iter()
        .enumerate()
        .filter(|(_, s)| !exclude.contains(s))
        .map(|(c, &s)| {
            let col = h.column(c);
            let norm = col.dot(&col).sqrt();
            let sim = if user_norm == F::zero() || norm == F::zero() {
                F::zero()
            } else {
                user_row.dot(&col) / (user_norm * norm)
            };
            (sim, s)
        })
        .collect();
    scored.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(std::cmp::Ordering::Equal).then(a.1.cmp(&b.1)));
    Ok(scored.into_iter().map(|(_, s)| s).collect())
}

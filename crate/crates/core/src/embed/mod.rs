//! Show embeddings: DistMult over the knowledge graph and CBOW over
//! listening sequences, plus the on-disk table format.

mod cbow;
mod distmult;

pub use cbow::{cbow_loss_grad, train_cbow, CbowConfig, CbowExample, CbowModel};
pub use distmult::{distmult_loss_grad, distmult_score, train_distmult, DistMultConfig, DistMultModel, TripleGrad};

use std::collections::HashMap;
use std::io::{BufRead, Write};

use ndarray::{Array2, ArrayView1};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::seeds::Rng;

/// Dense vectors keyed by integer id (show, node, relation, user, factor).
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable<F> {
    pub kind: String,
    ids: Vec<u32>,
    vectors: Array2<F>,
    index: HashMap<u32, usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TableHeader {
    dim: usize,
    count: usize,
    kind: String,
}

impl<F: Scalar> EmbeddingTable<F> {
    pub fn new(kind: impl Into<String>, ids: Vec<u32>, vectors: Array2<F>) -> Result<Self> {
        if ids.len() != vectors.nrows() {
            return Err(Error::Dimension { expected: ids.len(), got: vectors.nrows() });
        }
        if vectors.ncols() == 0 {
            return Err(Error::config("embedding dimension must be positive"));
        }
        if vectors.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("embedding table holds a non-finite value".into()));
        }
        let mut index = HashMap::with_capacity(ids.len());
        for (row, &id) in ids.iter().enumerate() {
            if index.insert(id, row).is_some() {
                return Err(Error::data(format!("duplicate id {id} in embedding table")));
            }
        }
        Ok(EmbeddingTable { kind: kind.into(), ids, vectors, index })
    }

    /// Dense table over ids `0..rows`.
    pub fn dense(kind: impl Into<String>, vectors: Array2<F>) -> Result<Self> {
        let ids = (0..vectors.nrows() as u32).collect();
        Self::new(kind, ids, vectors)
    }

    /// Uniform initialization in `[-0.5/dim, 0.5/dim]`.
    pub fn uniform(kind: impl Into<String>, ids: Vec<u32>, dim: usize, rng: &mut Rng) -> Result<Self> {
        let bound = 0.5 / dim as f64;
        let vectors = Array2::from_shape_simple_fn((ids.len(), dim), || F::of(rng.gen_range(-bound..=bound)));
        Self::new(kind, ids, vectors)
    }

    pub fn dim(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[u32] {
        &self.ids
    }

    pub fn row_of(&self, id: u32) -> Option<usize> {
        self.index.get(&id).copied()
    }

    pub fn get(&self, id: u32) -> Option<ArrayView1<'_, F>> {
        self.row_of(id).map(|r| self.vectors.row(r))
    }

    pub fn matrix(&self) -> &Array2<F> {
        &self.vectors
    }

    pub(crate) fn matrix_mut(&mut self) -> &mut Array2<F> {
        &mut self.vectors
    }

    /// Sub-table over `ids`, in that order.
    pub fn select(&self, kind: impl Into<String>, ids: &[u32]) -> Result<Self> {
        let mut vectors = Array2::zeros((ids.len(), self.dim()));
        for (row, &id) in ids.iter().enumerate() {
            let v = self.get(id).ok_or_else(|| Error::data(format!("no embedding for id {id}")))?;
            vectors.row_mut(row).assign(&v);
        }
        Self::new(kind, ids.to_vec(), vectors)
    }

    pub fn cosine(&self, a: u32, b: u32) -> Option<F> {
        let (va, vb) = (self.get(a)?, self.get(b)?);
        Some(crate::scalar::cosine(va.as_slice()?, vb.as_slice()?))
    }

    pub fn cast<G: Scalar>(&self) -> EmbeddingTable<G> {
        EmbeddingTable {
            kind: self.kind.clone(),
            ids: self.ids.clone(),
            vectors: self.vectors.mapv(|v| G::of(v.as_f64())),
            index: self.index.clone(),
        }
    }

    /// Header line `{"dim":..,"count":..,"kind":..}` followed by one
    /// `id\tv1\t...\tvdim` row per vector, values at 17 significant digits.
    pub fn write_tsv<W: Write>(&self, mut out: W) -> Result<()> {
        let header = TableHeader { dim: self.dim(), count: self.len(), kind: self.kind.clone() };
        serde_json::to_writer(&mut out, &header)?;
        out.write_all(b"\n")?;
        for (row, id) in self.ids.iter().enumerate() {
            write!(out, "{id}")?;
            for v in self.vectors.row(row) {
                write!(out, "\t{:.16e}", v.as_f64())?;
            }
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_tsv<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let header_line = lines.next().ok_or_else(|| Error::data("embedding file is empty"))??;
        let header: TableHeader = serde_json::from_str(&header_line)
            .map_err(|e| Error::data(format!("embedding header: {e}")))?;
        let mut ids = Vec::with_capacity(header.count);
        let mut values = Vec::with_capacity(header.count * header.dim);
        for (n, line) in lines.enumerate() {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let mut fields = line.split('\t');
            let id = fields
                .next()
                .and_then(|f| f.parse::<u32>().ok())
                .ok_or_else(|| Error::data(format!("embedding row {}: bad id", n + 1)))?;
            let before = values.len();
            for field in fields {
                let v: f64 = field
                    .parse()
                    .map_err(|_| Error::data(format!("embedding row {}: bad value {field:?}", n + 1)))?;
                values.push(F::of(v));
            }
            if values.len() - before != header.dim {
                return Err(Error::Dimension { expected: header.dim, got: values.len() - before });
            }
            ids.push(id);
        }
        if ids.len() != header.count {
            return Err(Error::data(format!("header promises {} rows, found {}", header.count, ids.len())));
        }
        let vectors = Array2::from_shape_vec((ids.len(), header.dim), values)
            .map_err(|e| Error::data(e.to_string()))?;
        Self::new(header.kind, ids, vectors)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeds::rng;

    #[test]
    fn tsv_round_trip_is_exact() {
        let mut r = rng(4);
        let table = EmbeddingTable::<f64>::new(
            "kg",
            vec![3, 0, 7],
            Array2::from_shape_simple_fn((3, 5), || r.gen_range(-1e3..1e3) / 7.0),
        )
        .unwrap();
        let mut buf = Vec::new();
        table.write_tsv(&mut buf).unwrap();
        let back = EmbeddingTable::<f64>::read_tsv(&buf[..]).unwrap();
        assert_eq!(back, table);
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("{\"dim\":5,\"count\":3,\"kind\":\"kg\"}\n3\t"));

        let single = table.cast::<f32>();
        let mut buf = Vec::new();
        single.write_tsv(&mut buf).unwrap();
        assert_eq!(EmbeddingTable::<f32>::read_tsv(&buf[..]).unwrap(), single);
    }

    #[test]
    fn rejects_bad_tables() {
        assert!(EmbeddingTable::<f64>::new("x", vec![1, 1], Array2::zeros((2, 2))).is_err());
        assert!(EmbeddingTable::<f64>::new("x", vec![1], Array2::zeros((2, 2))).is_err());
        let nan = Array2::from_elem((1, 2), f64::NAN);
        assert!(matches!(EmbeddingTable::new("x", vec![0], nan), Err(Error::Numeric(_))));
        let short = "{\"dim\":3,\"count\":1,\"kind\":\"kg\"}\n0\t1\t2\n";
        assert!(EmbeddingTable::<f64>::read_tsv(short.as_bytes()).is_err());
    }

    #[test]
    fn uniform_init_respects_bounds() {
        let t = EmbeddingTable::<f64>::uniform("x", (0..50).collect(), 8, &mut rng(1)).unwrap();
        assert!(t.matrix().iter().all(|v| v.abs() <= 0.5 / 8.0));
    }
}

use std::fmt;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Dense identifier of a discrete action, `0..|A|`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ActionId(pub u32);

impl ActionId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl From<usize> for ActionId {
    fn from(i: usize) -> Self {
        ActionId(u32::try_from(i).expect("action id exceeds u32"))
    }
}

impl fmt::Display for ActionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// Embedded discrete action set: action `i` is the `i`-th row of a dense
/// `len × dim` matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct ActionSet {
    dim: usize,
    data: Vec<f64>,
}

impl ActionSet {
    pub fn from_flat(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("embedding dimension must be positive"));
        }
        if data.is_empty() {
            return Err(Error::EmptyActionSet);
        }
        if data.len() % dim != 0 {
            return Err(Error::Format(format!(
                "{} values do not form rows of length {dim}",
                data.len()
            )));
        }
        if data.len() / dim > u32::MAX as usize {
            return Err(Error::invalid("more actions than ActionId can address"));
        }
        if let Some(bad) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("embedding of action {}", bad / dim)));
        }
        Ok(ActionSet { dim, data })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let dim = rows.first().ok_or(Error::EmptyActionSet)?.as_ref().len();
        let mut data = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            Error::check_dim("embedding row", dim, r.as_ref().len())?;
            data.extend_from_slice(r.as_ref());
        }
        Self::from_flat(dim, data)
    }

    /// Reads `id,x_1,...,x_n` rows. Ids must cover `0..rows` exactly once, in
    /// any order. A header line is skipped when its first field is not an
    /// integer.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut rows: Vec<(usize, Vec<f64>)> = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if rec.is_empty() {
                continue;
            }
            let id = match rec[0].parse::<usize>() {
                Ok(id) => id,
                Err(_) if line == 0 => continue,
                Err(_) => return Err(Error::Format(format!("line {}: bad action id", line + 1))),
            };
            let values = rec
                .iter()
                .skip(1)
                .map(|f| {
                    f.parse::<f64>()
                        .map_err(|_| Error::Format(format!("line {}: bad value {f:?}", line + 1)))
                })
                .collect::<Result<Vec<_>>>()?;
            rows.push((id, values));
        }
        if rows.is_empty() {
            return Err(Error::EmptyActionSet);
        }
        let dim = rows[0].1.len();
        let mut data = vec![f64::NAN; rows.len() * dim];
        let mut seen = vec![false; rows.len()];
        for (id, values) in rows.iter() {
            Error::check_dim("embedding row", dim, values.len())?;
            if *id >= seen.len() || seen[*id] {
                return Err(Error::Format(format!(
                    "action ids must be dense and unique, got {id}"
                )));
            }
            seen[*id] = true;
            data[id * dim..(id + 1) * dim].copy_from_slice(values);
        }
        Self::from_flat(dim, data)
    }

    pub fn from_csv_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_csv_reader(std::fs::File::open(path)?)
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for (i, row) in self.rows().enumerate() {
            let mut rec = vec![i.to_string()];
            rec.extend(row.iter().map(|v| format!("{v:?}")));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, id: ActionId) -> &[f64] {
        let i = id.index();
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn try_get(&self, id: ActionId) -> Result<&[f64]> {
        if id.index() < self.len() {
            Ok(self.get(id))
        } else {
            Err(Error::invalid(format!("action {id} out of range 0..{}", self.len())))
        }
    }

    #[inline]
    pub(crate) fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn ids(&self) -> impl ExactSizeIterator<Item = ActionId> {
        (0..self.len() as u32).map(ActionId)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    /// Per-dimension `(min, max)` over all embeddings.
    pub fn bounding_box(&self) -> (Vec<f64>, Vec<f64>) {
        let mut lo = vec![f64::INFINITY; self.dim];
        let mut hi = vec![f64::NEG_INFINITY; self.dim];
        for row in self.rows() {
            for (d, v) in row.iter().enumerate() {
                lo[d] = lo[d].min(*v);
                hi[d] = hi[d].max(*v);
            }
        }
        (lo, hi)
    }
}

#[inline]
pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x - y;
            d * d
        })
        .sum()
}

//! Kronecker-product and third-order tensor kernels.
//!
//! A quadratic term `H (a ⊗ b)` is stored as the mode-1 unfolding of a tensor
//! `t[i][j][k]` of size `n × n × n`, with column index `j * n + k` (0-based),
//! so that the second Kronecker factor runs fastest. The other unfoldings are
//!
//! * mode 2: `M[j, i * n + k] = t[i][j][k]`
//! * mode 3: `M[k, i * n + j] = t[i][j][k]`

use nalgebra::{ComplexField, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::par::map_indexed;
use crate::sparse::CooMatrix;
use crate::{Error, Result};

/// Column-major stacking of a matrix.
pub fn vec<T: nalgebra::Scalar>(m: &DMatrix<T>) -> DVector<T> {
    DVector::from_column_slice(m.as_slice())
}

/// Inverse of [`vec`].
pub fn unvec<T: nalgebra::Scalar>(v: &DVector<T>, nrows: usize, ncols: usize) -> DMatrix<T> {
    assert_eq!(v.len(), nrows * ncols);
    DMatrix::from_column_slice(nrows, ncols, v.as_slice())
}

/// Kronecker product; block `(i, j)` of the result is `a[(i, j)] * b`.
pub fn kron<T>(a: &DMatrix<T>, b: &DMatrix<T>) -> DMatrix<T>
where
    T: nalgebra::Scalar + num_traits::Zero + num_traits::One + nalgebra::ClosedAddAssign + nalgebra::ClosedMulAssign,
{
    a.kronecker(b)
}

/// Third-order tensor `𝓗 ∈ R^{n×n×n}` stored through its sparse mode-1
/// unfolding `H ∈ R^{n×n²}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HessianTensor {
    n: usize,
    mode1: CooMatrix,
    symmetric: bool,
}

impl HessianTensor {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            mode1: CooMatrix::zeros(n, n * n),
            symmetric: true,
        }
    }

    /// Builds a tensor from `(i, j, k, value)` entries (0-based).
    pub fn from_entries(n: usize, entries: Vec<(usize, usize, usize, f64)>) -> Result<Self> {
        if let Some(e) = entries.iter().find(|e| e.0 >= n || e.1 >= n || e.2 >= n) {
            return Err(Error::dim(format!(
                "tensor entry ({}, {}, {}) outside n = {n}",
                e.0, e.1, e.2
            )));
        }
        let trip = entries
            .into_iter()
            .map(|(i, j, k, v)| (i, j * n + k, v))
            .collect();
        Self::from_mode1(CooMatrix::from_triplets(n, n * n, trip)?)
    }

    /// Wraps an existing `n × n²` mode-1 unfolding. The symmetry flag is set
    /// only if the entries are exactly symmetric in the last two indices.
    pub fn from_mode1(mode1: CooMatrix) -> Result<Self> {
        let n = mode1.nrows();
        if mode1.ncols() != n * n {
            return Err(Error::dim(format!(
                "Hessian must be n x n^2, got {} x {}",
                n,
                mode1.ncols()
            )));
        }
        let mut t = Self {
            n,
            mode1,
            symmetric: false,
        };
        t.symmetric = t.check_symmetry();
        Ok(t)
    }

    pub fn from_dense_mode1(m: &DMatrix<f64>) -> Result<Self> {
        Self::from_mode1(CooMatrix::from_dense(m))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn mode1(&self) -> &CooMatrix {
        &self.mode1
    }

    pub fn nnz(&self) -> usize {
        self.mode1.nnz()
    }

    pub fn is_zero(&self) -> bool {
        self.mode1.nnz() == 0
    }

    pub fn symmetric_flag(&self) -> bool {
        self.symmetric
    }

    /// Iterates over `(i, j, k, value)` in canonical order.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, usize, f64)> + '_ {
        let n = self.n;
        self.mode1
            .entries()
            .iter()
            .map(move |&(i, col, v)| (i, col / n, col % n, v))
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        let col = j * self.n + k;
        let e = self.mode1.entries();
        match e.binary_search_by(|x| (x.0, x.1).cmp(&(i, col))) {
            Ok(p) => e[p].2,
            Err(_) => 0.0,
        }
    }

    fn check_symmetry(&self) -> bool {
        self.entries().all(|(i, j, k, v)| self.get(i, k, j) == v)
    }

    pub fn to_dense_mode1(&self) -> DMatrix<f64> {
        self.mode1.to_dense()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.mode1.frobenius_norm()
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut out = self.clone();
        out.mode1.scale(s);
        if s == 0.0 {
            out.symmetric = true;
        }
        out
    }

    /// Mode-`mode` unfolding (`mode` ∈ {1, 2, 3}).
    pub fn matricize(&self, mode: usize) -> Result<CooMatrix> {
        let n = self.n;
        let trip: Vec<_> = match mode {
            1 => return Ok(self.mode1.clone()),
            2 => self.entries().map(|(i, j, k, v)| (j, i * n + k, v)).collect(),
            3 => self.entries().map(|(i, j, k, v)| (k, i * n + j, v)).collect(),
            _ => {
                return Err(Error::Argument(format!(
                    "matricization mode must be 1, 2 or 3, got {mode}"
                )))
            }
        };
        CooMatrix::from_triplets(n, n * n, trip)
    }

    /// Averages the tensor over its last two indices so that
    /// `H (a ⊗ b) = H (b ⊗ a)`; `H (x ⊗ x)` is unchanged.
    pub fn symmetrize(&self) -> Self {
        let n = self.n;
        let mut trip = Vec::with_capacity(2 * self.nnz());
        for (i, j, k, v) in self.entries() {
            trip.push((i, j * n + k, 0.5 * v));
            trip.push((i, k * n + j, 0.5 * v));
        }
        let mode1 =
            CooMatrix::from_triplets(n, n * n, trip).expect("indices already validated");
        Self {
            n,
            mode1,
            symmetric: true,
        }
    }

    /// `H (a ⊗ b)` without forming the Kronecker product.
    pub fn apply<T>(&self, a: &DVector<T>, b: &DVector<T>) -> Result<DVector<T>>
    where
        T: ComplexField<RealField = f64> + Copy,
    {
        if a.len() != self.n || b.len() != self.n {
            return Err(Error::dim(format!(
                "apply_hessian: n = {}, got vectors of length {} and {}",
                self.n,
                a.len(),
                b.len()
            )));
        }
        let mut out = DVector::<T>::zeros(self.n);
        for (i, j, k, v) in self.entries() {
            out[i] += T::from_real(v) * a[j] * b[k];
        }
        Ok(out)
    }

    /// `H^{(mode)} (L ⊗ R)` for `mode` ∈ {1, 2}, evaluated column by column.
    ///
    /// Column `a * r + b` equals `H^{(mode)} (L[:, a] ⊗ R[:, b])`. For mode 1
    /// that pairs `L` with the second tensor index and `R` with the third; for
    /// mode 2 `L` pairs with the first (output) index and `R` with the third.
    pub fn congruence<T>(&self, mode: usize, l: &DMatrix<T>, r: &DMatrix<T>) -> Result<DMatrix<T>>
    where
        T: ComplexField<RealField = f64> + Copy,
    {
        if mode != 1 && mode != 2 {
            return Err(Error::Argument(format!(
                "hessian_congruence supports modes 1 and 2, got {mode}"
            )));
        }
        if l.nrows() != self.n || r.nrows() != self.n {
            return Err(Error::dim(format!(
                "hessian_congruence: n = {}, factors have {} and {} rows",
                self.n,
                l.nrows(),
                r.nrows()
            )));
        }
        let (rl, rr) = (l.ncols(), r.ncols());
        let n = self.n;
        let entries: Vec<_> = self.entries().collect();
        let cols = map_indexed(rl * rr, |col| {
            let (a, b) = (col / rr, col % rr);
            let mut out = vec![T::zero(); n];
            if mode == 1 {
                for &(i, j, k, v) in &entries {
                    out[i] += T::from_real(v) * l[(j, a)] * r[(k, b)];
                }
            } else {
                for &(i, j, k, v) in &entries {
                    out[j] += T::from_real(v) * l[(i, a)] * r[(k, b)];
                }
            }
            out
        });
        let mut m = DMatrix::<T>::zeros(n, rl * rr);
        for (c, col) in cols.into_iter().enumerate() {
            for (i, x) in col.into_iter().enumerate() {
                m[(i, c)] = x;
            }
        }
        Ok(m)
    }

    /// `H^{(mode)} (L ⊗ R) (H^{(mode)})^T` for real `n × n` factors.
    pub fn gram(&self, mode: usize, l: &DMatrix<f64>, r: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if l.ncols() != self.n || r.ncols() != self.n {
            return Err(Error::dim("gram: factors must be n x n"));
        }
        let g = self.congruence(mode, l, r)?;
        let unfold = self.matricize(mode)?;
        // (G · M^T)[row, p] = Σ_col G[row, col] M[p, col]
        let mut out = DMatrix::zeros(self.n, self.n);
        for &(p, col, v) in unfold.entries() {
            for row in 0..self.n {
                out[(row, p)] += g[(row, col)] * v;
            }
        }
        Ok(out)
    }

    /// Jacobian of `x ↦ H (x ⊗ x)`, i.e. `H (I ⊗ x + x ⊗ I)`.
    pub fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let mut jac = DMatrix::zeros(self.n, self.n);
        self.add_jacobian(x, 1.0, &mut jac);
        jac
    }

    /// `out += scale * H (I ⊗ x + x ⊗ I)`.
    pub(crate) fn add_jacobian(&self, x: &DVector<f64>, scale: f64, out: &mut DMatrix<f64>) {
        for (i, j, k, v) in self.entries() {
            out[(i, j)] += scale * v * x[k];
            out[(i, k)] += scale * v * x[j];
        }
    }

    /// Row-operator product `R · H` as a `p × n²` sparse matrix.
    pub fn left_multiply(&self, rows: &DMatrix<f64>) -> Result<CooMatrix> {
        if rows.ncols() != self.n {
            return Err(Error::dim("left_multiply: operator width must equal n"));
        }
        let mut trip = Vec::with_capacity(rows.nrows() * self.nnz());
        for &(i, col, v) in self.mode1.entries() {
            for q in 0..rows.nrows() {
                let w = rows[(q, i)];
                if w != 0.0 {
                    trip.push((q, col, w * v));
                }
            }
        }
        CooMatrix::from_triplets(rows.nrows(), self.n * self.n, trip)
    }
}

/// `Q (L ⊗ R)` for a `p × n²` sparse quadratic map `Q`; column `a * r + b`
/// is `Q (L[:, a] ⊗ R[:, b])`.
pub fn quadratic_congruence(q: &CooMatrix, l: &DMatrix<f64>, r: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = l.nrows();
    if q.ncols() != n * n || r.nrows() != n {
        return Err(Error::dim("quadratic_congruence: width must be n^2"));
    }
    let (rl, rr) = (l.ncols(), r.ncols());
    let mut out = DMatrix::zeros(q.nrows(), rl * rr);
    for a in 0..rl {
        for b in 0..rr {
            let c = a * rr + b;
            for &(row, col, v) in q.entries() {
                out[(row, c)] += v * l[(col / n, a)] * r[(col % n, b)];
            }
        }
    }
    Ok(out)
}

/// Mode-2 unfolding of a dense `r × r²` mode-1 tensor (same index map as
/// [`HessianTensor::matricize`]).
pub fn dense_mode2<T: ComplexField + Copy>(h: &DMatrix<T>) -> DMatrix<T> {
    let r = h.nrows();
    assert_eq!(h.ncols(), r * r, "dense tensor must be r x r^2");
    let mut out = DMatrix::<T>::zeros(r, r * r);
    for i in 0..r {
        for j in 0..r {
            for k in 0..r {
                out[(j, i * r + k)] = h[(i, j * r + k)];
            }
        }
    }
    out
}

/// Averages a dense `r × r²` mode-1 tensor over its last two indices.
pub fn dense_symmetrize(h: &DMatrix<f64>) -> DMatrix<f64> {
    let r = h.nrows();
    assert_eq!(h.ncols(), r * r, "dense tensor must be r x r^2");
    let mut out = h.clone();
    for i in 0..r {
        for j in 0..r {
            for k in 0..r {
                out[(i, j * r + k)] = 0.5 * (h[(i, j * r + k)] + h[(i, k * r + j)]);
            }
        }
    }
    out
}

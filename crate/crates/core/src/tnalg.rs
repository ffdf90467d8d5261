//! Dense complex tensors with labelled legs.
//!
//! Every leg of a [`Tensor`] carries a [`Leg`] label. Contractions and
//! factorizations address legs by label, never by position, so the tree code
//! does not need to track axis permutations by hand.
//!
//! Matrix kernels go through BLAS (`ndarray` with the `blas` feature) and the
//! decompositions through LAPACK (`ndarray-linalg`).

use ndarray::linalg::general_mat_mul;
use ndarray::{Array1, Array2, ArrayD, ArrayView2, Axis, IxDyn, ShapeBuilder};
use ndarray_linalg::{Eigh, JobSvd, SVDDC, QR, UPLO};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Label of a tensor leg.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Leg {
    /// Physical leg of a lattice site.
    Site(usize),
    /// Virtual bond; the id is the id of the lower node of the link.
    Link(usize),
    /// Scratch label for intermediate results.
    Aux(usize),
}

#[derive(Debug, Error, PartialEq)]
pub enum TensorError {
    #[error("leg {0:?} not present on tensor")]
    MissingLeg(Leg),
    #[error("leg {0:?} appears more than once")]
    DuplicateLeg(Leg),
    #[error("leg {leg:?}: dimension {left} does not match {right}")]
    DimensionMismatch { leg: Leg, left: usize, right: usize },
    #[error("leg {0:?} is paired more than once")]
    DuplicatePairing(Leg),
    #[error("{labels} labels for a tensor of rank {rank}")]
    RankMismatch { labels: usize, rank: usize },
    #[error("row legs must be a proper nonempty subset of the tensor legs")]
    InvalidRowLegs,
    #[error("operator of shape {op:?} cannot act on a leg of dimension {dim}")]
    OperatorShape { op: (usize, usize), dim: usize },
    #[error("linear algebra failure: {0}")]
    Linalg(String),
}

pub type Result<T> = std::result::Result<T, TensorError>;

/// Dense complex tensor, row-major, with one label per leg.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    legs: Vec<Leg>,
    data: ArrayD<C64>,
}

impl Tensor {
    pub fn new(legs: Vec<Leg>, data: ArrayD<C64>) -> Result<Self> {
        if legs.len() != data.ndim() {
            return Err(TensorError::RankMismatch {
                labels: legs.len(),
                rank: data.ndim(),
            });
        }
        check_unique(&legs)?;
        let data = if data.is_standard_layout() {
            data
        } else {
            data.as_standard_layout().into_owned()
        };
        Ok(Self { legs, data })
    }

    pub fn zeros(legs: Vec<Leg>, shape: &[usize]) -> Result<Self> {
        Self::new(legs, ArrayD::zeros(IxDyn(shape)))
    }

    pub fn from_vec(legs: Vec<Leg>, shape: &[usize], values: Vec<C64>) -> Result<Self> {
        let data = ArrayD::from_shape_vec(IxDyn(shape), values)
            .map_err(|e| TensorError::Linalg(e.to_string()))?;
        Self::new(legs, data)
    }

    /// Two-leg tensor from a matrix; rows map to `row`, columns to `col`.
    pub fn from_matrix(row: Leg, col: Leg, m: Array2<C64>) -> Result<Self> {
        Self::new(vec![row, col], m.into_dyn())
    }

    pub fn legs(&self) -> &[Leg] {
        &self.legs
    }

    pub fn shape(&self) -> &[usize] {
        self.data.shape()
    }

    pub fn rank(&self) -> usize {
        self.legs.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn has_leg(&self, leg: Leg) -> bool {
        self.legs.contains(&leg)
    }

    pub fn axis_of(&self, leg: Leg) -> Result<usize> {
        self.legs
            .iter()
            .position(|&l| l == leg)
            .ok_or(TensorError::MissingLeg(leg))
    }

    pub fn dim_of(&self, leg: Leg) -> Result<usize> {
        Ok(self.data.shape()[self.axis_of(leg)?])
    }

    pub fn data(&self) -> &ArrayD<C64> {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut ArrayD<C64> {
        &mut self.data
    }

    pub fn into_data(self) -> ArrayD<C64> {
        self.data
    }

    /// Entries in row-major order.
    pub fn as_slice(&self) -> &[C64] {
        self.data.as_slice().expect("tensor data is kept in standard layout")
    }

    pub fn as_slice_mut(&mut self) -> &mut [C64] {
        self.data
            .as_slice_mut()
            .expect("tensor data is kept in standard layout")
    }

    pub fn norm_sqr(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn conj(&self) -> Tensor {
        Tensor {
            legs: self.legs.clone(),
            data: self.data.mapv(|z| z.conj()),
        }
    }

    pub fn scale(&mut self, factor: C64) {
        self.data.mapv_inplace(|z| z * factor);
    }

    pub fn relabel(&mut self, old: Leg, new: Leg) -> Result<()> {
        let axis = self.axis_of(old)?;
        if old != new && self.has_leg(new) {
            return Err(TensorError::DuplicateLeg(new));
        }
        self.legs[axis] = new;
        Ok(())
    }

    /// Copy with legs reordered to `order`.
    pub fn permuted(&self, order: &[Leg]) -> Result<Tensor> {
        if order.len() != self.legs.len() {
            return Err(TensorError::RankMismatch {
                labels: order.len(),
                rank: self.legs.len(),
            });
        }
        check_unique(order)?;
        let axes = order
            .iter()
            .map(|&l| self.axis_of(l))
            .collect::<Result<Vec<_>>>()?;
        if axes.iter().enumerate().all(|(i, &a)| i == a) {
            return Ok(self.clone());
        }
        let data = self
            .data
            .view()
            .permuted_axes(IxDyn(&axes))
            .as_standard_layout()
            .into_owned();
        Ok(Tensor {
            legs: order.to_vec(),
            data,
        })
    }

    /// `⟨self|other⟩` over all legs; the leg sets must agree.
    pub fn inner(&self, other: &Tensor) -> Result<C64> {
        let other = other.permuted(&self.legs)?;
        if self.shape() != other.shape() {
            let axis = self
                .shape()
                .iter()
                .zip(other.shape())
                .position(|(a, b)| a != b)
                .unwrap_or(0);
            return Err(TensorError::DimensionMismatch {
                leg: self.legs[axis],
                left: self.shape()[axis],
                right: other.shape()[axis],
            });
        }
        Ok(self
            .as_slice()
            .iter()
            .zip(other.as_slice())
            .map(|(a, b)| a.conj() * b)
            .sum())
    }

    /// Matrix view with `rows` legs (in that order) as the row index and the
    /// remaining legs, in their current order, as the column index.
    pub fn to_matrix(&self, rows: &[Leg]) -> Result<(Array2<C64>, Vec<Leg>)> {
        let cols: Vec<Leg> = self
            .legs
            .iter()
            .copied()
            .filter(|l| !rows.contains(l))
            .collect();
        let order: Vec<Leg> = rows.iter().chain(cols.iter()).copied().collect();
        let p = self.permuted(&order)?;
        let m: usize = rows.iter().map(|&l| self.dim_of(l)).product::<Result<usize>>()?;
        let n = p.len() / m.max(1);
        let mat = p
            .data
            .into_shape_with_order((m, n))
            .map_err(|e| TensorError::Linalg(e.to_string()))?;
        Ok((mat, cols))
    }

    /// Applies a square operator to one leg: `out[.., i, ..] = Σ_j op[i, j] t[.., j, ..]`.
    pub fn apply_on_leg(&self, leg: Leg, op: ArrayView2<C64>) -> Result<Tensor> {
        let axis = self.axis_of(leg)?;
        let shape = self.shape().to_vec();
        let d = shape[axis];
        if op.nrows() != d || op.ncols() != d {
            return Err(TensorError::OperatorShape {
                op: (op.nrows(), op.ncols()),
                dim: d,
            });
        }
        let pre: usize = shape[..axis].iter().product();
        let post: usize = shape[axis + 1..].iter().product();
        let src = self.as_slice();
        let mut out = vec![C64::new(0.0, 0.0); src.len()];
        let one = C64::new(1.0, 0.0);
        let zero = C64::new(0.0, 0.0);
        if post == 1 {
            let a = ArrayView2::from_shape((pre, d), src).expect("shape");
            let mut c = ndarray::ArrayViewMut2::from_shape((pre, d), &mut out).expect("shape");
            general_mat_mul(one, &a, &op.t(), zero, &mut c);
        } else if pre == 1 {
            let b = ArrayView2::from_shape((d, post), src).expect("shape");
            let mut c = ndarray::ArrayViewMut2::from_shape((d, post), &mut out).expect("shape");
            general_mat_mul(one, &op, &b, zero, &mut c);
        } else {
            let block = d * post;
            for (s, o) in src.chunks_exact(block).zip(out.chunks_exact_mut(block)) {
                let b = ArrayView2::from_shape((d, post), s).expect("shape");
                let mut c = ndarray::ArrayViewMut2::from_shape((d, post), o).expect("shape");
                general_mat_mul(one, &op, &b, zero, &mut c);
            }
        }
        Ok(Tensor {
            legs: self.legs.clone(),
            data: ArrayD::from_shape_vec(IxDyn(&shape), out).expect("shape"),
        })
    }

    /// `self += alpha * other`, legs matched by label.
    pub fn add_scaled(&mut self, alpha: C64, other: &Tensor) -> Result<()> {
        let other = other.permuted(&self.legs)?;
        if other.shape() != self.shape() {
            return Err(TensorError::DimensionMismatch {
                leg: self.legs[0],
                left: self.shape()[0],
                right: other.shape()[0],
            });
        }
        for (a, b) in self.as_slice_mut().iter_mut().zip(other.as_slice()) {
            *a += alpha * b;
        }
        Ok(())
    }
}

fn check_unique(legs: &[Leg]) -> Result<()> {
    for (i, l) in legs.iter().enumerate() {
        if legs[..i].contains(l) {
            return Err(TensorError::DuplicateLeg(*l));
        }
    }
    Ok(())
}

/// Contracts `a` with `b` over the given `(leg of a, leg of b)` pairs.
///
/// The result carries the unpaired legs of `a` followed by those of `b`.
pub fn contract(a: &Tensor, b: &Tensor, pairs: &[(Leg, Leg)]) -> Result<Tensor> {
    for (i, (la, lb)) in pairs.iter().enumerate() {
        if pairs[..i].iter().any(|(x, _)| x == la) {
            return Err(TensorError::DuplicatePairing(*la));
        }
        if pairs[..i].iter().any(|(_, y)| y == lb) {
            return Err(TensorError::DuplicatePairing(*lb));
        }
        let (da, db) = (a.dim_of(*la)?, b.dim_of(*lb)?);
        if da != db {
            return Err(TensorError::DimensionMismatch {
                leg: *la,
                left: da,
                right: db,
            });
        }
    }
    let paired_a: Vec<Leg> = pairs.iter().map(|p| p.0).collect();
    let paired_b: Vec<Leg> = pairs.iter().map(|p| p.1).collect();
    let free_a: Vec<Leg> = a.legs.iter().copied().filter(|l| !paired_a.contains(l)).collect();
    let free_b: Vec<Leg> = b.legs.iter().copied().filter(|l| !paired_b.contains(l)).collect();
    let mut out_legs = free_a.clone();
    out_legs.extend(free_b.iter().copied());
    check_unique(&out_legs)?;

    let order_a: Vec<Leg> = free_a.iter().chain(paired_a.iter()).copied().collect();
    let (mat_a, _) = {
        let p = a.permuted(&order_a)?;
        let m: usize = free_a.iter().map(|&l| a.dim_of(l).unwrap()).product();
        let k = p.len() / m.max(1);
        (p.data.into_shape_with_order((m, k)).expect("shape"), ())
    };
    let mut shape_out: Vec<usize> = free_a.iter().map(|&l| a.dim_of(l).unwrap()).collect();
    shape_out.extend(free_b.iter().map(|&l| b.dim_of(l).unwrap()));
    let (mat_b, _) = b.to_matrix(&paired_b)?;
    let prod = mat_a.dot(&mat_b);
    let data = prod
        .into_shape_with_order(IxDyn(&shape_out))
        .map_err(|e| TensorError::Linalg(e.to_string()))?;
    Tensor::new(out_legs, data)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FactorizeMode {
    Qr,
    Svd,
}

/// Output of [`factorize`]: `input = isometry · remainder` (up to truncation).
#[derive(Clone, Debug)]
pub struct Decomposition {
    /// Row legs plus the new bond leg; orthonormal columns.
    pub isometry: Tensor,
    /// New bond leg plus the column legs: `R` for QR, `S·V†` for SVD.
    pub remainder: Tensor,
    pub singular_values: Option<Vec<f64>>,
}

/// Splits `t` into `row_legs | other legs` and factorizes the resulting matrix.
///
/// QR results are made unique by choosing a real nonnegative diagonal of `R`.
/// `max_kept` truncates the SVD to the largest singular values; it is ignored
/// in QR mode.
pub fn factorize(
    t: &Tensor,
    row_legs: &[Leg],
    mode: FactorizeMode,
    max_kept: Option<usize>,
    bond: Leg,
) -> Result<Decomposition> {
    if row_legs.is_empty() || row_legs.len() >= t.rank() {
        return Err(TensorError::InvalidRowLegs);
    }
    check_unique(row_legs)?;
    if t.has_leg(bond) {
        return Err(TensorError::DuplicateLeg(bond));
    }
    let (mat, cols) = t.to_matrix(row_legs)?;
    let row_shape: Vec<usize> = row_legs.iter().map(|&l| t.dim_of(l)).collect::<Result<_>>()?;
    let col_shape: Vec<usize> = cols.iter().map(|&l| t.dim_of(l)).collect::<Result<_>>()?;

    let (q, r, sv) = match mode {
        FactorizeMode::Qr => {
            let (q, r) = qr_positive(&mat)?;
            (q, r, None)
        }
        FactorizeMode::Svd => {
            let (u, s, vt) = svd_thin(&mat)?;
            let keep = max_kept.map_or(s.len(), |k| k.min(s.len()).max(1));
            let u = u.slice(ndarray::s![.., ..keep]).to_owned();
            let mut rem = vt.slice(ndarray::s![..keep, ..]).to_owned();
            for (mut row, &sv) in rem.axis_iter_mut(Axis(0)).zip(s.iter()) {
                row.mapv_inplace(|z| z * sv);
            }
            (u, rem, Some(s.iter().take(keep).copied().collect::<Vec<_>>()))
        }
    };
    let k = q.ncols();
    let mut iso_shape = row_shape.clone();
    iso_shape.push(k);
    let mut iso_legs = row_legs.to_vec();
    iso_legs.push(bond);
    let mut rem_shape = vec![k];
    rem_shape.extend(col_shape);
    let mut rem_legs = vec![bond];
    rem_legs.extend(cols);
    Ok(Decomposition {
        isometry: Tensor::new(
            iso_legs,
            q.into_shape_with_order(IxDyn(&iso_shape)).expect("shape"),
        )?,
        remainder: Tensor::new(
            rem_legs,
            r.into_shape_with_order(IxDyn(&rem_shape)).expect("shape"),
        )?,
        singular_values: sv,
    })
}

/// Thin QR with `diag(R) ≥ 0`.
pub fn qr_positive(m: &Array2<C64>) -> Result<(Array2<C64>, Array2<C64>)> {
    let (mut q, mut r) = m.qr().map_err(|e| TensorError::Linalg(e.to_string()))?;
    let k = q.ncols().min(r.nrows());
    for j in 0..k {
        let d = r[[j, j]];
        let a = d.norm();
        if a > 0.0 {
            let phase = d / a;
            q.column_mut(j).mapv_inplace(|z| z * phase);
            r.row_mut(j).mapv_inplace(|z| z * phase.conj());
        }
    }
    Ok((q, r))
}

/// Thin SVD; singular values in descending order.
pub fn svd_thin(m: &Array2<C64>) -> Result<(Array2<C64>, Array1<f64>, Array2<C64>)> {
    let (u, s, vt) = m
        .svddc(JobSvd::Some)
        .map_err(|e| TensorError::Linalg(e.to_string()))?;
    Ok((u.expect("requested U"), s, vt.expect("requested V†")))
}

pub fn singular_values(m: &Array2<C64>) -> Result<Vec<f64>> {
    let (_, s, _) = m
        .svddc(JobSvd::None)
        .map_err(|e| TensorError::Linalg(e.to_string()))?;
    Ok(s.to_vec())
}

/// Eigendecomposition of a Hermitian matrix, eigenvalues ascending.
pub fn eigh(m: &Array2<C64>) -> Result<(Array1<f64>, Array2<C64>)> {
    // column-major copy: the row-major path returns eigenvectors of the conjugate
    let mut f = Array2::zeros(m.dim().f());
    f.assign(m);
    f.eigh(UPLO::Upper)
        .map_err(|e| TensorError::Linalg(e.to_string()))
}

/// Eigendecomposition of a real symmetric matrix, eigenvalues ascending.
pub fn eigh_real(m: &Array2<f64>) -> Result<(Array1<f64>, Array2<f64>)> {
    m.eigh(UPLO::Upper)
        .map_err(|e| TensorError::Linalg(e.to_string()))
}

/// `exp(-i τ H) v` for a dense Hermitian `H`, by diagonalization.
pub fn dense_expm_apply(h: &Array2<C64>, v: &Array1<C64>, tau: C64) -> Result<Array1<C64>> {
    let (w, u) = eigh(h)?;
    let coeffs = u.t().mapv(|z| z.conj()).dot(v);
    let phased: Array1<C64> = coeffs
        .iter()
        .zip(w.iter())
        .map(|(&c, &e)| c * (C64::new(0.0, -1.0) * tau * e).exp())
        .collect();
    Ok(u.dot(&phased))
}

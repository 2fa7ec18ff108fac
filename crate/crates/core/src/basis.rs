//! Generalized Gell-Mann operator bases and transfer matrices.
//!
//! Conventions: the basis is orthonormal under the Hilbert-Schmidt product,
//! `Tr[B_i B_j] = delta_ij`, with `B_0 = I/sqrt(d)`, and the transfer matrix
//! is `Lambda_ij = Tr[B_i E(B_j)]` (output index first), so it acts on
//! coefficient vectors `x_j = Tr[B_j rho]` from the left. With this
//! normalization every entry of a CPTP channel's matrix lies in `[-1, 1]`,
//! the identity channel maps to the identity matrix, and row 0 of a
//! trace-preserving channel is `(1, 0, ..., 0)`.
//!
//! Element ordering groups operators by the highest basis vector they touch:
//! for `n = 1, 2, ...` the symmetric pairs `(k, n)`, then the antisymmetric
//! pairs `(k, n)` for `k < n`, then the diagonal element `n`. The first four
//! elements are therefore `I, X, Y, Z` of the first two basis vectors, and
//! the operators supported on the first `N` vectors form the prefix of
//! length `N^2`.

use std::io::Write;

use ndarray::{Array2, Axis};
use rayon::prelude::*;

use crate::channel::Channel;
use crate::fock::{fock_state, FockDim, StateVector};
use crate::gates::BinomialCode;
use crate::linalg::{self, dagger, vec, I};
use crate::{CMatrix, Error, Result, C64};

/// `d` orthonormal vectors with display labels.
#[derive(Clone, Debug)]
pub struct OrderedBasis {
    dim: FockDim,
    /// Column `k` is basis vector `k`.
    vectors: CMatrix,
    labels: Vec<String>,
}

impl OrderedBasis {
    pub fn new(vectors: Vec<StateVector>, labels: Vec<String>) -> Result<Self> {
        let d = vectors.len();
        let dim = FockDim::new(d)?;
        if labels.len() != d {
            return Err(Error::Validation(
                "one label per basis vector is required".into(),
            ));
        }
        let mut m = CMatrix::zeros((d, d));
        for (k, v) in vectors.iter().enumerate() {
            dim.check(v.dim(), "basis vector")?;
            m.column_mut(k).assign(v.amplitudes());
        }
        let gram = dagger(&m).dot(&m);
        let defect = linalg::frobenius(&(gram - linalg::identity(d)));
        if defect > 1e-10 {
            return Err(Error::Validation(format!(
                "basis is not orthonormal (Gram defect {defect:.3e})"
            )));
        }
        Ok(OrderedBasis {
            dim,
            vectors: m,
            labels,
        })
    }

    pub fn fock(dim: FockDim) -> Self {
        OrderedBasis {
            dim,
            vectors: linalg::identity(dim.get()),
            labels: (0..dim.get()).map(|n| format!("|{n}>")).collect(),
        }
    }

    pub fn dim(&self) -> FockDim {
        self.dim
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.vectors
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn vector(&self, k: usize) -> StateVector {
        StateVector::from_amplitudes(self.vectors.column(k).to_owned(), false)
            .expect("basis vectors have the basis dimension")
    }

    pub fn gram(&self) -> CMatrix {
        dagger(&self.vectors).dot(&self.vectors)
    }
}

/// `|0_L>, |1_L>, (|0> - |4>)/sqrt 2, |1>, |3>, |5>, |6>, |7>, ...`.
pub fn logical_ordered_basis(code: &BinomialCode) -> Result<OrderedBasis> {
    let dim = code.dim();
    let d = dim.get();
    if d < 6 {
        return Err(Error::Dimension(format!(
            "logical basis needs dimension >= 6, got {d}"
        )));
    }
    let h = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    let error_04 = fock_state(0, dim)?.superpose(h, &fock_state(4, dim)?, -h)?;
    let mut vectors = vec![
        code.logical_zero().clone(),
        code.logical_one().clone(),
        error_04,
    ];
    let mut labels: Vec<String> = vec!["|0_L>".into(), "|1_L>".into(), "(|0>-|4>)/sqrt2".into()];
    for n in [1usize, 3, 5].into_iter().chain(6..d) {
        vectors.push(fock_state(n, dim)?);
        labels.push(format!("|{n}>"));
    }
    OrderedBasis::new(vectors, labels)
}

/// Orthonormal Hermitian operator basis of `d^2` elements, `B_0 = I/sqrt d`.
#[derive(Clone, Debug)]
pub struct GellMannSet {
    dim: FockDim,
    matrices: Vec<CMatrix>,
    labels: Vec<String>,
}

impl GellMannSet {
    pub fn dim(&self) -> FockDim {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.matrices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matrices.is_empty()
    }

    pub fn matrices(&self) -> &[CMatrix] {
        &self.matrices
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// Real coefficients `Tr[B_i X]` of a Hermitian operator.
    pub fn coefficients(&self, x: &CMatrix) -> Vec<f64> {
        self.matrices
            .iter()
            .map(|b| linalg::hs_inner(b, x).re)
            .collect()
    }

    /// `sum_i c_i B_i`.
    pub fn synthesize(&self, coeffs: &[f64]) -> CMatrix {
        let d = self.dim.get();
        let mut out = CMatrix::zeros((d, d));
        for (b, &c) in self.matrices.iter().zip(coeffs) {
            out.scaled_add(C64::new(c, 0.0), b);
        }
        out
    }
}

/// Indices of the elements supported on the first `levels` basis vectors.
pub fn display_indices(levels: usize) -> Vec<usize> {
    (0..levels * levels).collect()
}

/// Generalized Gell-Mann matrices expressed through `basis`, orthonormalized
/// and ordered as described in the module docs.
pub fn gellmann_set(basis: &OrderedBasis) -> GellMannSet {
    let d = basis.dim.get();
    let q = &basis.vectors;
    let qd = dagger(q);
    let to_basis = |abstract_m: CMatrix| q.dot(&abstract_m).dot(&qd);
    let r2 = std::f64::consts::FRAC_1_SQRT_2;

    let mut matrices = Vec::with_capacity(d * d);
    let mut labels = Vec::with_capacity(d * d);
    matrices.push(linalg::identity(d).mapv(|z| z / (d as f64).sqrt()));
    labels.push("I".to_string());

    for n in 1..d {
        for k in 0..n {
            let mut m = CMatrix::zeros((d, d));
            m[[k, n]] = C64::new(r2, 0.0);
            m[[n, k]] = C64::new(r2, 0.0);
            matrices.push(to_basis(m));
            labels.push(if n == 1 {
                "X".into()
            } else {
                format!("S{k},{n}")
            });
        }
        for k in 0..n {
            let mut m = CMatrix::zeros((d, d));
            m[[k, n]] = -I * r2;
            m[[n, k]] = I * r2;
            matrices.push(to_basis(m));
            labels.push(if n == 1 {
                "Y".into()
            } else {
                format!("A{k},{n}")
            });
        }
        let scale = (1.0 / (n * (n + 1)) as f64).sqrt();
        let mut m = CMatrix::zeros((d, d));
        for j in 0..n {
            m[[j, j]] = C64::new(scale, 0.0);
        }
        m[[n, n]] = C64::new(-(n as f64) * scale, 0.0);
        matrices.push(to_basis(m));
        labels.push(if n == 1 { "Z".into() } else { format!("D{n}") });
    }
    GellMannSet {
        dim: basis.dim,
        matrices,
        labels,
    }
}

/// Real matrix of a channel in an operator basis, with row/column labels.
#[derive(Clone, Debug, PartialEq)]
pub struct TransferMatrix {
    pub elements: Array2<f64>,
    pub row_labels: Vec<String>,
    pub col_labels: Vec<String>,
}

impl TransferMatrix {
    pub fn dim(&self) -> (usize, usize) {
        self.elements.dim()
    }

    /// CSV with a header row of column labels and the row label in the
    /// first column.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        let mut header = vec![String::new()];
        header.extend(self.col_labels.iter().cloned());
        wtr.write_record(&header)?;
        for (label, row) in self.row_labels.iter().zip(self.elements.axis_iter(Axis(0))) {
            let mut rec = vec![label.clone()];
            rec.extend(row.iter().map(|x| format!("{x:.12e}")));
            wtr.write_record(&rec)?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("CSV output is UTF-8"))
    }
}

/// `Lambda_ij = Tr[B_i E(B_j)]` over the selected elements (all when
/// `indices` is `None`).
pub fn transfer_matrix<C: Channel>(
    channel: &C,
    gm: &GellMannSet,
    indices: Option<&[usize]>,
) -> Result<TransferMatrix> {
    gm.dim.check(channel.dim(), "transfer matrix")?;
    let all: Vec<usize>;
    let idx = match indices {
        Some(i) => i,
        None => {
            all = (0..gm.len()).collect();
            &all
        }
    };
    if let Some(&bad) = idx.iter().find(|&&i| i >= gm.len()) {
        return Err(Error::Dimension(format!(
            "operator index {bad} outside basis of {}",
            gm.len()
        )));
    }
    let d = gm.dim.get();
    let n = idx.len();
    let outputs: Vec<CMatrix> = idx
        .par_iter()
        .map(|&j| channel.apply_matrix(&gm.matrices[j]))
        .collect();
    let mut rows = CMatrix::zeros((n, d * d));
    let mut cols = CMatrix::zeros((d * d, n));
    for (p, &i) in idx.iter().enumerate() {
        rows.row_mut(p)
            .assign(&vec(&gm.matrices[i]).mapv(|z| z.conj()));
        cols.column_mut(p).assign(&vec(&outputs[p]));
    }
    let lambda = rows.dot(&cols).mapv(|z| z.re);
    let labels: Vec<String> = idx.iter().map(|&i| gm.labels[i].clone()).collect();
    Ok(TransferMatrix {
        elements: lambda,
        row_labels: labels.clone(),
        col_labels: labels,
    })
}

/// Normalized logical Pauli operators `{I_L, X_L, Y_L, Z_L}/sqrt 2`.
pub fn logical_paulis(code: &BinomialCode) -> [CMatrix; 4] {
    let z = code.logical_zero().amplitudes();
    let o = code.logical_one().amplitudes();
    let r2 = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    let zo = linalg::outer(z, o);
    let oz = linalg::outer(o, z);
    let zz = linalg::outer(z, z);
    let oo = linalg::outer(o, o);
    [
        (&zz + &oo).mapv(|x| x * r2),
        (&zo + &oz).mapv(|x| x * r2),
        (zo.mapv(|x| -x * I) + oz.mapv(|x| x * I)).mapv(|x| x * r2),
        (&zz - &oo).mapv(|x| x * r2),
    ]
}

pub const PAULI_LABELS: [&str; 4] = ["I", "X", "Y", "Z"];

/// Pauli transfer matrix of the channel restricted to the code space.
/// Entry `(0, 0)` equals one minus the average leakage.
pub fn logical_ptm<C: Channel>(channel: &C, code: &BinomialCode) -> Result<TransferMatrix> {
    code.dim().check(channel.dim(), "logical PTM")?;
    let paulis = logical_paulis(code);
    let outputs: Vec<CMatrix> = paulis.iter().map(|p| channel.apply_matrix(p)).collect();
    let elements = Array2::from_shape_fn((4, 4), |(i, j)| {
        linalg::hs_inner(&paulis[i], &outputs[j]).re
    });
    let labels: Vec<String> = PAULI_LABELS.iter().map(|s| s.to_string()).collect();
    Ok(TransferMatrix {
        elements,
        row_labels: labels.clone(),
        col_labels: labels,
    })
}

/// `P_ij = <b_i| E(|b_j><b_j|) |b_i>` for the first `n_keep` basis vectors.
pub fn population_transfer_matrix<C: Channel>(
    channel: &C,
    basis: &OrderedBasis,
    n_keep: usize,
) -> Result<TransferMatrix> {
    basis
        .dim
        .check(channel.dim(), "population transfer matrix")?;
    if n_keep > basis.dim.get() {
        return Err(Error::Dimension(format!(
            "cannot keep {n_keep} states of a {}-dimensional basis",
            basis.dim
        )));
    }
    let q = &basis.vectors;
    let qd = dagger(q);
    let columns: Vec<Vec<f64>> = (0..n_keep)
        .into_par_iter()
        .map(|j| {
            let b = q.column(j).to_owned();
            let out = channel.apply_matrix(&linalg::outer(&b, &b));
            let in_basis = qd.dot(&out).dot(q);
            (0..n_keep).map(|i| in_basis[[i, i]].re).collect()
        })
        .collect();
    let elements = Array2::from_shape_fn((n_keep, n_keep), |(i, j)| columns[j][i]);
    let labels: Vec<String> = basis.labels[..n_keep].to_vec();
    Ok(TransferMatrix {
        elements,
        row_labels: labels.clone(),
        col_labels: labels,
    })
}

//! Truncated Fock-space states and operators.
//!
//! Everything lives on the span of `|0>, ..., |d-1>`. Matrices are dense
//! `Complex64`; `d` never exceeds a few dozen in practice.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::linalg::{self, dagger, frobenius, hermitian_function, I};
use crate::{CMatrix, CVector, Error, Result, C64};

/// Probability mass beyond the truncation edge above which a coherent state
/// triggers a warning.
pub const TAIL_WARNING: f64 = 1e-6;

const NORM_TOL: f64 = 1e-10;
const UNITARY_TOL: f64 = 1e-8;

/// Hilbert-space truncation: Fock states `|0>` through `|d-1>`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "usize", into = "usize")]
pub struct FockDim(usize);

impl FockDim {
    pub fn new(d: usize) -> Result<Self> {
        if d < 2 {
            return Err(Error::Dimension(format!(
                "Fock dimension must be >= 2, got {d}"
            )));
        }
        Ok(FockDim(d))
    }

    pub fn get(self) -> usize {
        self.0
    }

    pub(crate) fn check(self, other: FockDim, what: &str) -> Result<()> {
        if self != other {
            return Err(Error::dim_mismatch(what, self.0, other.0));
        }
        Ok(())
    }
}

impl TryFrom<usize> for FockDim {
    type Error = Error;
    fn try_from(d: usize) -> Result<Self> {
        FockDim::new(d)
    }
}

impl From<FockDim> for usize {
    fn from(d: FockDim) -> usize {
        d.0
    }
}

impl std::fmt::Display for FockDim {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A pure state. `normalized` records whether the constructor certified a
/// unit norm; results of arithmetic are left unflagged.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    dim: FockDim,
    amps: CVector,
    normalized: bool,
}

impl StateVector {
    /// Wraps raw amplitudes. Fails if `normalize` is requested for a zero vector.
    pub fn from_amplitudes(amps: CVector, normalize: bool) -> Result<Self> {
        let dim = FockDim::new(amps.len())?;
        let mut state = StateVector {
            dim,
            amps,
            normalized: false,
        };
        if normalize {
            let n = state.norm();
            if n == 0.0 {
                return Err(Error::Validation("cannot normalize the zero vector".into()));
            }
            state.amps.mapv_inplace(|z| z / n);
            state.normalized = true;
        } else {
            state.normalized = (state.norm_sqr() - 1.0).abs() <= NORM_TOL;
        }
        Ok(state)
    }

    pub fn dim(&self) -> FockDim {
        self.dim
    }

    pub fn amplitudes(&self) -> &CVector {
        &self.amps
    }

    pub fn into_amplitudes(self) -> CVector {
        self.amps
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &StateVector) -> Result<C64> {
        self.dim.check(other.dim, "inner product")?;
        Ok(self
            .amps
            .iter()
            .zip(other.amps.iter())
            .map(|(a, b)| a.conj() * b)
            .sum())
    }

    /// `|<self|other>|^2`.
    pub fn overlap(&self, other: &StateVector) -> Result<f64> {
        Ok(self.inner(other)?.norm_sqr())
    }

    pub fn mean_photon_number(&self) -> f64 {
        self.amps
            .iter()
            .enumerate()
            .map(|(n, z)| n as f64 * z.norm_sqr())
            .sum::<f64>()
            / self.norm_sqr()
    }

    pub fn expectation(&self, op: &Operator) -> Result<C64> {
        self.dim.check(op.dim, "expectation value")?;
        let psi = op.elems.dot(&self.amps);
        Ok(self
            .amps
            .iter()
            .zip(psi.iter())
            .map(|(a, b)| a.conj() * b)
            .sum())
    }

    pub fn to_density(&self) -> DensityMatrix {
        DensityMatrix {
            dim: self.dim,
            elems: linalg::outer(&self.amps, &self.amps),
        }
    }

    /// Linear combination `a * self + b * other`, unnormalized.
    pub fn superpose(&self, a: C64, other: &StateVector, b: C64) -> Result<StateVector> {
        self.dim.check(other.dim, "superposition")?;
        let amps = self.amps.mapv(|z| z * a) + other.amps.mapv(|z| z * b);
        StateVector::from_amplitudes(amps, false)
    }

    pub fn normalized(&self) -> Result<StateVector> {
        StateVector::from_amplitudes(self.amps.clone(), true)
    }
}

/// A density matrix. Constructors from pure states are exact; matrices from
/// channel outputs may be checked with [`DensityMatrix::validate`].
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    dim: FockDim,
    elems: CMatrix,
}

impl DensityMatrix {
    /// Wraps a matrix without checking physicality.
    pub fn from_matrix(elems: CMatrix) -> Result<Self> {
        let (r, c) = elems.dim();
        if r != c {
            return Err(Error::Dimension(format!(
                "density matrix must be square, got {r}x{c}"
            )));
        }
        Ok(DensityMatrix {
            dim: FockDim::new(r)?,
            elems,
        })
    }

    pub fn dim(&self) -> FockDim {
        self.dim
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.elems
    }

    pub fn into_matrix(self) -> CMatrix {
        self.elems
    }

    pub fn trace(&self) -> f64 {
        linalg::trace(&self.elems).re
    }

    /// Checks Hermiticity (1e-10), unit trace (1e-10) and positivity (-1e-8).
    pub fn validate(&self) -> Result<()> {
        let herm = linalg::hermiticity_defect(&self.elems);
        if herm > 1e-10 {
            return Err(Error::Validation(format!(
                "density matrix not Hermitian (defect {herm:e})"
            )));
        }
        let tr = self.trace();
        if (tr - 1.0).abs() > 1e-10 {
            return Err(Error::Validation(format!("density matrix trace {tr} != 1")));
        }
        let (w, _) = linalg::eigh(&self.elems)?;
        if w[0] < -1e-8 {
            return Err(Error::Validation(format!(
                "density matrix eigenvalue {} < 0",
                w[0]
            )));
        }
        Ok(())
    }

    pub fn expectation(&self, op: &Operator) -> Result<C64> {
        self.dim.check(op.dim, "expectation value")?;
        Ok(linalg::trace(&self.elems.dot(&op.elems)))
    }

    pub fn population(&self, n: usize) -> f64 {
        self.elems[[n, n]].re
    }

    /// `<psi| rho |psi>`.
    pub fn overlap(&self, psi: &StateVector) -> Result<f64> {
        self.dim.check(psi.dim, "state overlap")?;
        let v = self.elems.dot(psi.amplitudes());
        Ok(psi
            .amplitudes()
            .iter()
            .zip(v.iter())
            .map(|(a, b)| a.conj() * b)
            .sum::<C64>()
            .re)
    }
}

/// A linear operator on the truncated space. `unitary` is set only by
/// constructors that certify `||U^dag U - I||_F <= 1e-8`.
#[derive(Clone, Debug, PartialEq)]
pub struct Operator {
    dim: FockDim,
    elems: CMatrix,
    unitary: bool,
}

impl Operator {
    pub fn new(elems: CMatrix) -> Result<Self> {
        let (r, c) = elems.dim();
        if r != c {
            return Err(Error::Dimension(format!(
                "operator must be square, got {r}x{c}"
            )));
        }
        Ok(Operator {
            dim: FockDim::new(r)?,
            elems,
            unitary: false,
        })
    }

    /// Wraps `elems` and certifies unitarity.
    pub fn unitary(elems: CMatrix) -> Result<Self> {
        let mut op = Operator::new(elems)?;
        let defect = op.unitarity_defect();
        if defect > UNITARY_TOL {
            return Err(Error::Validation(format!(
                "operator is not unitary (defect {defect:e})"
            )));
        }
        op.unitary = true;
        Ok(op)
    }

    pub fn identity(dim: FockDim) -> Self {
        Operator {
            dim,
            elems: linalg::identity(dim.get()),
            unitary: true,
        }
    }

    pub fn dim(&self) -> FockDim {
        self.dim
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.elems
    }

    pub fn into_matrix(self) -> CMatrix {
        self.elems
    }

    pub fn is_unitary(&self) -> bool {
        self.unitary
    }

    pub fn unitarity_defect(&self) -> f64 {
        let d = self.dim.get();
        frobenius(&(dagger(&self.elems).dot(&self.elems) - linalg::identity(d)))
    }

    pub fn dagger(&self) -> Operator {
        Operator {
            dim: self.dim,
            elems: dagger(&self.elems),
            unitary: self.unitary,
        }
    }

    /// Operator product `self * rhs`.
    pub fn dot(&self, rhs: &Operator) -> Result<Operator> {
        self.dim.check(rhs.dim, "operator product")?;
        let elems = self.elems.dot(&rhs.elems);
        if self.unitary && rhs.unitary {
            Operator::unitary(elems)
        } else {
            Operator::new(elems)
        }
    }

    pub fn apply(&self, psi: &StateVector) -> Result<StateVector> {
        self.dim.check(psi.dim, "operator application")?;
        StateVector::from_amplitudes(self.elems.dot(psi.amplitudes()), false)
    }
}

/// Zero-padding into a larger space and top-left truncation into a smaller one.
pub trait Resize: Sized {
    fn embed(&self, to: FockDim) -> Result<Self>;
    fn truncate(&self, to: FockDim) -> Result<Self>;
}

fn resize_matrix(m: &CMatrix, to: usize) -> CMatrix {
    let from = m.nrows();
    let k = from.min(to);
    let mut out = CMatrix::zeros((to, to));
    out.slice_mut(ndarray::s![..k, ..k])
        .assign(&m.slice(ndarray::s![..k, ..k]));
    out
}

fn check_grow(from: FockDim, to: FockDim) -> Result<()> {
    if to < from {
        return Err(Error::Dimension(format!(
            "cannot embed dimension {from} into {to}"
        )));
    }
    Ok(())
}

fn check_shrink(from: FockDim, to: FockDim) -> Result<()> {
    if to > from {
        return Err(Error::Dimension(format!(
            "cannot truncate dimension {from} to {to}"
        )));
    }
    Ok(())
}

impl Resize for StateVector {
    fn embed(&self, to: FockDim) -> Result<Self> {
        check_grow(self.dim, to)?;
        let mut amps = CVector::zeros(to.get());
        amps.slice_mut(ndarray::s![..self.dim.get()])
            .assign(&self.amps);
        StateVector::from_amplitudes(amps, false)
    }

    fn truncate(&self, to: FockDim) -> Result<Self> {
        check_shrink(self.dim, to)?;
        StateVector::from_amplitudes(self.amps.slice(ndarray::s![..to.get()]).to_owned(), false)
    }
}

impl Resize for DensityMatrix {
    fn embed(&self, to: FockDim) -> Result<Self> {
        check_grow(self.dim, to)?;
        Ok(DensityMatrix {
            dim: to,
            elems: resize_matrix(&self.elems, to.get()),
        })
    }

    fn truncate(&self, to: FockDim) -> Result<Self> {
        check_shrink(self.dim, to)?;
        Ok(DensityMatrix {
            dim: to,
            elems: resize_matrix(&self.elems, to.get()),
        })
    }
}

impl DensityMatrix {
    /// Truncation followed by rescaling to unit trace.
    pub fn truncate_renormalized(&self, to: FockDim) -> Result<Self> {
        let mut out = self.truncate(to)?;
        let tr = out.trace();
        if tr <= 0.0 {
            return Err(Error::Validation("truncated state has no weight".into()));
        }
        out.elems.mapv_inplace(|z| z / tr);
        Ok(out)
    }
}

impl Resize for Operator {
    fn embed(&self, to: FockDim) -> Result<Self> {
        check_grow(self.dim, to)?;
        Ok(Operator {
            dim: to,
            elems: resize_matrix(&self.elems, to.get()),
            unitary: false,
        })
    }

    fn truncate(&self, to: FockDim) -> Result<Self> {
        check_shrink(self.dim, to)?;
        Ok(Operator {
            dim: to,
            elems: resize_matrix(&self.elems, to.get()),
            unitary: false,
        })
    }
}

pub fn fock_state(n: usize, dim: FockDim) -> Result<StateVector> {
    if n >= dim.get() {
        return Err(Error::Dimension(format!(
            "Fock state |{n}> outside dimension {dim}"
        )));
    }
    let mut amps = CVector::zeros(dim.get());
    amps[n] = C64::new(1.0, 0.0);
    StateVector::from_amplitudes(amps, false)
}

/// Untruncated coherent amplitudes `e^{-|a|^2/2} a^n / sqrt(n!)` for `n < d`.
pub fn coherent_amplitudes(alpha: C64, d: usize) -> CVector {
    let mut amps = CVector::zeros(d);
    let mut c = C64::new((-alpha.norm_sqr() / 2.0).exp(), 0.0);
    for n in 0..d {
        if n > 0 {
            c = c * alpha / (n as f64).sqrt();
        }
        amps[n] = c;
    }
    amps
}

/// Probability that `|alpha>` has `d` or more photons.
pub fn coherent_tail(alpha: C64, dim: FockDim) -> f64 {
    let kept: f64 = coherent_amplitudes(alpha, dim.get())
        .iter()
        .map(|z| z.norm_sqr())
        .sum();
    (1.0 - kept).max(0.0)
}

/// Coherent state from analytic amplitudes, renormalized after truncation.
pub fn coherent_state(alpha: C64, dim: FockDim) -> StateVector {
    let tail = coherent_tail(alpha, dim);
    if tail > TAIL_WARNING {
        log::warn!(
            "coherent state alpha = {alpha} loses {tail:.3e} probability beyond Fock |{}>",
            dim.get() - 1
        );
    }
    StateVector::from_amplitudes(coherent_amplitudes(alpha, dim.get()), true)
        .expect("coherent amplitudes are never all zero")
}

pub fn annihilation(dim: FockDim) -> Operator {
    let d = dim.get();
    let mut a = CMatrix::zeros((d, d));
    for n in 1..d {
        a[[n - 1, n]] = C64::new((n as f64).sqrt(), 0.0);
    }
    Operator {
        dim,
        elems: a,
        unitary: false,
    }
}

pub fn number(dim: FockDim) -> Operator {
    let d = dim.get();
    let elems = Array2::from_diag(&Array1::from_shape_fn(d, |n| C64::new(n as f64, 0.0)));
    Operator {
        dim,
        elems,
        unitary: false,
    }
}

/// `D(alpha) = exp(alpha a^dag - alpha^* a)` on the truncated space.
///
/// The generator is anti-Hermitian, so this is computed as `exp(-iH)` from
/// the spectrum of the Hermitian `H = i(alpha a^dag - alpha^* a)`; the result
/// is unitary to machine precision but differs from the infinite-dimensional
/// displacement near the truncation edge.
pub fn displacement(alpha: C64, dim: FockDim) -> Operator {
    let a = annihilation(dim).elems;
    let h = (dagger(&a).mapv(|z| z * alpha) - a.mapv(|z| z * alpha.conj())).mapv(|z| z * I);
    let elems = hermitian_function(&h, |x| (-I * x).exp())
        .expect("Hermitian eigendecomposition of a displacement generator");
    Operator {
        dim,
        elems,
        unitary: true,
    }
}

/// SNAP gate: phase `thetas[n]` on `|n>` for `n < thetas.len()`, identity above.
pub fn snap(thetas: &[f64], dim: FockDim) -> Result<Operator> {
    let d = dim.get();
    if thetas.len() > d {
        return Err(Error::Dimension(format!(
            "SNAP addresses {} levels but the space has only {d}",
            thetas.len()
        )));
    }
    let diag = Array1::from_shape_fn(d, |n| match thetas.get(n) {
        Some(&t) => C64::from_polar(1.0, t),
        None => C64::new(1.0, 0.0),
    });
    Ok(Operator {
        dim,
        elems: Array2::from_diag(&diag),
        unitary: true,
    })
}

/// Photon-number parity `(-1)^n`.
pub fn parity(dim: FockDim) -> Operator {
    let d = dim.get();
    let diag = Array1::from_shape_fn(d, |n| C64::new(if n % 2 == 0 { 1.0 } else { -1.0 }, 0.0));
    Operator {
        dim,
        elems: Array2::from_diag(&diag),
        unitary: true,
    }
}

//! Quantum-channel representations and cavity decoherence.
//!
//! Three representations are used:
//!
//! - [`KrausSet`]: `rho -> sum_i K_i rho K_i^dag`, the reconstruction target.
//! - [`ChoiMatrix`]: `sum_{b,c} |b><c| (x) E(|b><c|)`, input factor first,
//!   equal to `sum_i vec(K_i) vec(K_i)^dag` under column stacking. Trace `d`
//!   for trace-preserving channels.
//! - [`SuperOperator`]: the `d^2 x d^2` matrix with `vec(E(X)) = S vec(X)`.
//!
//! Kraus sets are not unique (any unitary remixing of the list gives the same
//! channel), so channel comparisons are always made at the Choi level.

use ndarray::{s, Array1, Array2};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::fock::{annihilation, number, DensityMatrix, FockDim, Operator};
use crate::linalg::{self, dagger, frobenius, kron, unvec, vec};
use crate::{CMatrix, Error, Result, C64};

/// `||sum K^dag K - I||_F` bound for a certified CPTP Kraus set.
pub const CPTP_TOL: f64 = 1e-6;
/// Eigenvalues of a Choi matrix below this are dropped when extracting Kraus operators.
pub const KRAUS_EIGEN_CUTOFF: f64 = 1e-10;
/// Choi eigenvalues below this (negative) value mean the input is not CP.
pub const CHOI_NEGATIVITY_TOL: f64 = 1e-6;

/// Anything that acts linearly on operators of a truncated Fock space.
///
/// Only [`Channel::apply_matrix`] is required; the Choi and superoperator
/// forms follow from applying the map to matrix units.
pub trait Channel: Sync {
    fn dim(&self) -> FockDim;

    /// Linear extension of the channel to an arbitrary (not necessarily
    /// Hermitian) `d x d` matrix.
    fn apply_matrix(&self, x: &CMatrix) -> CMatrix;

    fn apply(&self, rho: &DensityMatrix) -> Result<DensityMatrix> {
        self.dim().check(rho.dim(), "channel application")?;
        DensityMatrix::from_matrix(self.apply_matrix(rho.matrix()))
    }

    fn choi(&self) -> ChoiMatrix {
        let d = self.dim().get();
        let mut elems = CMatrix::zeros((d * d, d * d));
        for b in 0..d {
            for c in 0..d {
                let mut unit = CMatrix::zeros((d, d));
                unit[[b, c]] = C64::new(1.0, 0.0);
                let out = self.apply_matrix(&unit);
                elems
                    .slice_mut(s![b * d..(b + 1) * d, c * d..(c + 1) * d])
                    .assign(&out);
            }
        }
        ChoiMatrix {
            dim: self.dim(),
            elems,
        }
    }

    fn superoperator(&self) -> SuperOperator {
        let d = self.dim().get();
        let mut elems = CMatrix::zeros((d * d, d * d));
        for b in 0..d {
            for c in 0..d {
                let mut unit = CMatrix::zeros((d, d));
                unit[[b, c]] = C64::new(1.0, 0.0);
                elems
                    .column_mut(b + d * c)
                    .assign(&vec(&self.apply_matrix(&unit)));
            }
        }
        SuperOperator {
            dim: self.dim(),
            elems,
        }
    }

    /// `sum_i |Tr[U^dag K_i]|^2`, i.e. `<<U| Choi |U>>`, computed from the
    /// matrix units in the column support of `u`.
    fn kraus_overlap(&self, u: &CMatrix) -> f64 {
        let d = self.dim().get();
        let support: Vec<usize> = (0..d)
            .filter(|&n| u.column(n).iter().any(|z| z.norm_sqr() > 0.0))
            .collect();
        let ud = dagger(u);
        let mut total = C64::new(0.0, 0.0);
        for &b in &support {
            for &c in &support {
                let mut unit = CMatrix::zeros((d, d));
                unit[[b, c]] = C64::new(1.0, 0.0);
                let out = ud.dot(&self.apply_matrix(&unit)).dot(u);
                total += out[[b, c]];
            }
        }
        total.re
    }
}

/// Rank-`r` Kraus representation of a channel on a `d`-level space.
#[derive(Clone, Debug, PartialEq)]
pub struct KrausSet {
    dim: FockDim,
    ops: Vec<CMatrix>,
    certified: bool,
}

impl KrausSet {
    /// Wraps a list of operators. The set is flagged certified when its
    /// CPTP defect is within [`CPTP_TOL`]; otherwise it is kept but marked
    /// uncertified (e.g. raw optimizer iterates or rank-cut extractions).
    pub fn new(ops: Vec<CMatrix>) -> Result<Self> {
        let first = ops
            .first()
            .ok_or_else(|| Error::Validation("Kraus set needs at least one operator".into()))?;
        let (r, c) = first.dim();
        if r != c {
            return Err(Error::Dimension(format!(
                "Kraus operators must be square, got {r}x{c}"
            )));
        }
        let dim = FockDim::new(r)?;
        if let Some(bad) = ops.iter().find(|k| k.dim() != (r, r)) {
            return Err(Error::dim_mismatch("Kraus operator", r, bad.nrows()));
        }
        if ops.len() > r * r {
            return Err(Error::Validation(format!(
                "Kraus rank {} exceeds d^2 = {}",
                ops.len(),
                r * r
            )));
        }
        let mut set = KrausSet {
            dim,
            ops,
            certified: false,
        };
        set.certified = set.cptp_defect() <= CPTP_TOL;
        Ok(set)
    }

    /// Like [`KrausSet::new`] but fails unless the set is CPTP.
    pub fn certified(ops: Vec<CMatrix>) -> Result<Self> {
        let set = KrausSet::new(ops)?;
        set.certify()?;
        Ok(set)
    }

    pub fn identity(dim: FockDim) -> Self {
        KrausSet {
            dim,
            ops: vec![linalg::identity(dim.get())],
            certified: true,
        }
    }

    pub fn rank(&self) -> usize {
        self.ops.len()
    }

    pub fn operators(&self) -> &[CMatrix] {
        &self.ops
    }

    pub fn into_operators(self) -> Vec<CMatrix> {
        self.ops
    }

    pub fn is_certified(&self) -> bool {
        self.certified
    }

    /// `||sum_i K_i^dag K_i - I||_F`.
    pub fn cptp_defect(&self) -> f64 {
        let d = self.dim.get();
        let mut acc = CMatrix::zeros((d, d));
        for k in &self.ops {
            acc = acc + dagger(k).dot(k);
        }
        frobenius(&(acc - linalg::identity(d)))
    }

    pub fn certify(&self) -> Result<()> {
        let defect = self.cptp_defect();
        if defect > CPTP_TOL {
            return Err(Error::NotAChannel(format!(
                "CPTP defect {defect:.3e} exceeds {CPTP_TOL:e}"
            )));
        }
        Ok(())
    }

    /// The `(r d) x d` vertical stack `[K_1; K_2; ...; K_r]`.
    pub fn stacked(&self) -> CMatrix {
        let d = self.dim.get();
        let mut v = CMatrix::zeros((self.rank() * d, d));
        for (i, k) in self.ops.iter().enumerate() {
            v.slice_mut(s![i * d..(i + 1) * d, ..]).assign(k);
        }
        v
    }

    pub fn from_stacked(v: &CMatrix, dim: FockDim) -> Result<Self> {
        let d = dim.get();
        if v.ncols() != d || !v.nrows().is_multiple_of(d) {
            return Err(Error::Dimension(format!(
                "stacked Kraus matrix {}x{} incompatible with dimension {d}",
                v.nrows(),
                v.ncols()
            )));
        }
        let ops = (0..v.nrows() / d)
            .map(|i| v.slice(s![i * d..(i + 1) * d, ..]).to_owned())
            .collect();
        KrausSet::new(ops)
    }

    /// `d^2 x r` matrix whose columns are `vec(K_i)`; the Choi matrix is `A A^dag`.
    pub fn choi_factor(&self) -> CMatrix {
        let d = self.dim.get();
        let mut a = CMatrix::zeros((d * d, self.rank()));
        for (i, k) in self.ops.iter().enumerate() {
            a.column_mut(i).assign(&vec(k));
        }
        a
    }

    /// Re-expresses the channel with mutually orthogonal Kraus operators
    /// (the Choi eigenbasis), dropping numerically null directions. Works
    /// on the `r x r` Gram matrix so it stays cheap when `r << d^2`.
    pub fn canonicalize(&self) -> Result<KrausSet> {
        let d = self.dim.get();
        let a = self.choi_factor();
        let gram = dagger(&a).dot(&a);
        let (w, q) = linalg::eigh(&gram)?;
        let cutoff = 1e-13 * d as f64;
        let mut ops = Vec::new();
        for idx in (0..w.len()).rev() {
            if w[idx] <= cutoff {
                continue;
            }
            let col = a.dot(&q.column(idx));
            ops.push(unvec(&col, d));
        }
        if ops.is_empty() {
            return Err(Error::NotAChannel("channel is numerically zero".into()));
        }
        let mut set = KrausSet::new(ops)?;
        set.certified = set.cptp_defect() <= CPTP_TOL;
        Ok(set)
    }
}

impl Channel for KrausSet {
    fn dim(&self) -> FockDim {
        self.dim
    }

    fn apply_matrix(&self, x: &CMatrix) -> CMatrix {
        let d = self.dim.get();
        let mut out = CMatrix::zeros((d, d));
        for k in &self.ops {
            out = out + k.dot(x).dot(&dagger(k));
        }
        out
    }

    fn choi(&self) -> ChoiMatrix {
        let a = self.choi_factor();
        ChoiMatrix {
            dim: self.dim,
            elems: a.dot(&dagger(&a)),
        }
    }

    fn superoperator(&self) -> SuperOperator {
        let d = self.dim.get();
        let mut elems = CMatrix::zeros((d * d, d * d));
        for k in &self.ops {
            elems = elems + kron(&k.mapv(|z| z.conj()), k);
        }
        SuperOperator {
            dim: self.dim,
            elems,
        }
    }

    fn kraus_overlap(&self, u: &CMatrix) -> f64 {
        let ud = dagger(u);
        self.ops
            .iter()
            .map(|k| linalg::trace(&ud.dot(k)).norm_sqr())
            .sum()
    }
}

/// Choi matrix with input factor first; trace `d` for trace-preserving maps.
#[derive(Clone, Debug, PartialEq)]
pub struct ChoiMatrix {
    dim: FockDim,
    elems: CMatrix,
}

impl ChoiMatrix {
    pub fn from_matrix(elems: CMatrix, dim: FockDim) -> Result<Self> {
        let n = dim.get() * dim.get();
        if elems.dim() != (n, n) {
            return Err(Error::Dimension(format!(
                "Choi matrix must be {n}x{n}, got {}x{}",
                elems.nrows(),
                elems.ncols()
            )));
        }
        Ok(ChoiMatrix { dim, elems })
    }

    pub fn dim(&self) -> FockDim {
        self.dim
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.elems
    }

    pub fn trace(&self) -> f64 {
        linalg::trace(&self.elems).re
    }

    /// Partial trace over the output factor; the identity for
    /// trace-preserving channels.
    pub fn partial_trace_output(&self) -> CMatrix {
        let d = self.dim.get();
        Array2::from_shape_fn((d, d), |(b, c)| {
            (0..d).map(|a| self.elems[[a + d * b, a + d * c]]).sum()
        })
    }

    /// Frobenius distance between two Choi matrices.
    pub fn distance(&self, other: &ChoiMatrix) -> Result<f64> {
        self.dim.check(other.dim, "Choi distance")?;
        Ok(frobenius(&(&self.elems - &other.elems)))
    }

    pub fn to_superoperator(&self) -> SuperOperator {
        SuperOperator {
            dim: self.dim,
            elems: reshuffle(&self.elems, self.dim.get()),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        choi_to_kraus(self, None)?.to_json()
    }

    /// Reads the Kraus-set JSON schema and rebuilds the Choi matrix from it.
    pub fn from_json(s: &str) -> Result<Self> {
        Ok(KrausSet::from_json(s)?.choi())
    }
}

/// `S[(a + d e), (b + d c)] = C[(a + d b), (e + d c)]`; the map is its own inverse.
fn reshuffle(m: &CMatrix, d: usize) -> CMatrix {
    Array2::from_shape_fn((d * d, d * d), |(row, col)| {
        let (a, e) = (row % d, row / d);
        let (b, c) = (col % d, col / d);
        m[[a + d * b, e + d * c]]
    })
}

/// Matrix acting on column-stacked operators.
#[derive(Clone, Debug, PartialEq)]
pub struct SuperOperator {
    dim: FockDim,
    elems: CMatrix,
}

impl SuperOperator {
    pub fn from_matrix(elems: CMatrix, dim: FockDim) -> Result<Self> {
        let n = dim.get() * dim.get();
        if elems.dim() != (n, n) {
            return Err(Error::Dimension(format!("superoperator must be {n}x{n}")));
        }
        Ok(SuperOperator { dim, elems })
    }

    pub fn identity(dim: FockDim) -> Self {
        let n = dim.get() * dim.get();
        SuperOperator {
            dim,
            elems: linalg::identity(n),
        }
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.elems
    }

    /// `self` after `first`.
    pub fn after(&self, first: &SuperOperator) -> Result<SuperOperator> {
        self.dim.check(first.dim, "superoperator composition")?;
        Ok(SuperOperator {
            dim: self.dim,
            elems: self.elems.dot(&first.elems),
        })
    }

    pub fn to_choi(&self) -> ChoiMatrix {
        ChoiMatrix {
            dim: self.dim,
            elems: reshuffle(&self.elems, self.dim.get()),
        }
    }
}

impl Channel for SuperOperator {
    fn dim(&self) -> FockDim {
        self.dim
    }

    fn apply_matrix(&self, x: &CMatrix) -> CMatrix {
        unvec(&self.elems.dot(&vec(x)), self.dim.get())
    }

    fn choi(&self) -> ChoiMatrix {
        self.to_choi()
    }

    fn superoperator(&self) -> SuperOperator {
        self.clone()
    }
}

/// Rank-1 channel `{U}`.
pub fn unitary_channel(u: &Operator) -> Result<KrausSet> {
    if !u.is_unitary() {
        let defect = u.unitarity_defect();
        if defect > 1e-8 {
            return Err(Error::Validation(format!(
                "unitary channel needs a unitary operator (defect {defect:.3e})"
            )));
        }
    }
    KrausSet::certified(vec![u.matrix().clone()])
}

/// `a` after `b`, returned in canonical (orthogonal-Kraus) form.
pub fn compose(a: &KrausSet, b: &KrausSet) -> Result<KrausSet> {
    a.dim.check(b.dim, "channel composition")?;
    let mut ops = Vec::with_capacity(a.rank() * b.rank());
    for ka in &a.ops {
        for kb in &b.ops {
            ops.push(ka.dot(kb));
        }
    }
    if ops.len() == 1 {
        return KrausSet::certified(ops);
    }
    let d = a.dim.get();
    // Product lists can exceed d^2 before compression; bypass the rank check.
    let raw = KrausSet {
        dim: a.dim,
        ops,
        certified: false,
    };
    let set = if raw.rank() > d * d {
        choi_to_kraus(&raw.choi(), None)?
    } else {
        raw.canonicalize()?
    };
    set.certify()?;
    Ok(set)
}

pub fn kraus_to_choi(k: &KrausSet) -> ChoiMatrix {
    k.choi()
}

/// Kraus operators `sqrt(lambda_i) unvec(v_i)` from the Choi spectrum,
/// largest eigenvalues first.
///
/// The Choi matrix is split into independent blocks (connected components
/// of its sparsity pattern) before diagonalization, so channels with a
/// conserved quantity such as excitation-number change decompose cheaply.
pub fn choi_to_kraus(c: &ChoiMatrix, rank_cut: Option<usize>) -> Result<KrausSet> {
    let d = c.dim.get();
    let n = d * d;
    let herm = linalg::hermiticity_defect(&c.elems);
    if herm > 1e-8 * (1.0 + frobenius(&c.elems)) {
        return Err(Error::NotAChannel(format!(
            "Choi matrix is not Hermitian (defect {herm:.3e})"
        )));
    }

    let components = sparsity_components(&c.elems);
    let mut pairs: Vec<(f64, Array1<C64>)> = Vec::new();
    for comp in components {
        let m = comp.len();
        let block = Array2::from_shape_fn((m, m), |(i, j)| c.elems[[comp[i], comp[j]]]);
        let (w, v) = linalg::eigh(&block)?;
        for (idx, &lambda) in w.iter().enumerate() {
            if lambda < -CHOI_NEGATIVITY_TOL {
                return Err(Error::NotAChannel(format!(
                    "Choi eigenvalue {lambda:.3e} is significantly negative"
                )));
            }
            if lambda < KRAUS_EIGEN_CUTOFF {
                continue;
            }
            let mut full = Array1::<C64>::zeros(n);
            for (i, &row) in comp.iter().enumerate() {
                full[row] = v[[i, idx]];
            }
            pairs.push((lambda, full));
        }
    }
    pairs.sort_by(|x, y| y.0.total_cmp(&x.0));
    if let Some(cut) = rank_cut {
        pairs.truncate(cut.max(1));
    }
    if pairs.is_empty() {
        return Err(Error::NotAChannel(
            "Choi matrix has no positive spectrum".into(),
        ));
    }
    let ops = pairs
        .into_iter()
        .map(|(lambda, v)| unvec(&v, d).mapv(|z| z * lambda.sqrt()))
        .collect();
    KrausSet::new(ops)
}

/// Index sets of the connected components of the graph with an edge
/// wherever `m[i, j] != 0`.
fn sparsity_components(m: &CMatrix) -> Vec<Vec<usize>> {
    let n = m.nrows();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if m[[i, j]] != C64::new(0.0, 0.0) || m[[j, i]] != C64::new(0.0, 0.0) {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    parent[ri.max(rj)] = ri.min(rj);
                }
            }
        }
    }
    let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for i in 0..n {
        let r = find(&mut parent, i);
        groups.entry(r).or_default().push(i);
    }
    groups.into_values().collect()
}

/// Cavity coherence times in microseconds. `f64::INFINITY` switches a
/// mechanism off.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoherenceTimes {
    pub t1_us: f64,
    pub t2_us: f64,
}

impl CoherenceTimes {
    /// Measured cavity values, T1 = 315 us and T2 = 478 us.
    pub const MEASURED: CoherenceTimes = CoherenceTimes {
        t1_us: 315.0,
        t2_us: 478.0,
    };

    pub const NONE: CoherenceTimes = CoherenceTimes {
        t1_us: f64::INFINITY,
        t2_us: f64::INFINITY,
    };

    pub fn new(t1_us: f64, t2_us: f64) -> Result<Self> {
        let t = CoherenceTimes { t1_us, t2_us };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t1_us > 0.0) || !(self.t2_us > 0.0) {
            return Err(Error::Validation("coherence times must be positive".into()));
        }
        if self.t2_us > 2.0 * self.t1_us {
            return Err(Error::Validation(format!(
                "T2 = {} us exceeds 2 T1 = {} us (negative pure-dephasing rate)",
                self.t2_us,
                2.0 * self.t1_us
            )));
        }
        Ok(())
    }

    /// Photon-loss rate `1/T1`.
    pub fn loss_rate(&self) -> f64 {
        1.0 / self.t1_us
    }

    /// Pure-dephasing rate `1/T_phi = 1/T2 - 1/(2 T1)`.
    pub fn dephasing_rate(&self) -> f64 {
        (1.0 / self.t2_us - 0.5 / self.t1_us).max(0.0)
    }

    /// Loss only: `T2 = 2 T1`.
    pub fn loss_only(&self) -> CoherenceTimes {
        CoherenceTimes {
            t1_us: self.t1_us,
            t2_us: 2.0 * self.t1_us,
        }
    }

    /// Pure dephasing only, at the same `T_phi`.
    pub fn dephasing_only(&self) -> CoherenceTimes {
        let rate = self.dephasing_rate();
        let t2 = if rate > 0.0 {
            1.0 / rate
        } else {
            f64::INFINITY
        };
        CoherenceTimes {
            t1_us: f64::INFINITY,
            t2_us: t2,
        }
    }
}

/// Coherence times plus the evolution duration (microseconds).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecoherenceParams {
    #[serde(flatten)]
    pub times: CoherenceTimes,
    pub duration_us: f64,
}

impl DecoherenceParams {
    pub fn new(t1_us: f64, t2_us: f64, duration_us: f64) -> Result<Self> {
        let p = DecoherenceParams {
            times: CoherenceTimes { t1_us, t2_us },
            duration_us,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        self.times.validate()?;
        if !(self.duration_us >= 0.0) || !self.duration_us.is_finite() {
            return Err(Error::Validation(
                "duration must be finite and non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// Lindblad generator `L` on column-stacked operators for the given jump
/// operators (no Hamiltonian).
pub fn lindbladian(collapse: &[CMatrix], dim: FockDim) -> CMatrix {
    let d = dim.get();
    let id = linalg::identity(d);
    let mut l = CMatrix::zeros((d * d, d * d));
    for c in collapse {
        let cdc = dagger(c).dot(c);
        l = l + kron(&c.mapv(|z| z.conj()), c)
            - kron(&id, &cdc).mapv(|z| z * 0.5)
            - kron(&cdc.t().to_owned(), &id).mapv(|z| z * 0.5);
    }
    l
}

/// Jump operators `sqrt(1/T1) a` and `sqrt(2/T_phi) a^dag a`.
pub fn cavity_collapse_operators(times: &CoherenceTimes, dim: FockDim) -> Vec<CMatrix> {
    let mut ops = Vec::new();
    let kappa = times.loss_rate();
    if kappa > 0.0 {
        ops.push(annihilation(dim).into_matrix().mapv(|z| z * kappa.sqrt()));
    }
    let gamma = times.dephasing_rate();
    if gamma > 0.0 {
        ops.push(number(dim).into_matrix().mapv(|z| z * (2.0 * gamma).sqrt()));
    }
    ops
}

/// Photon loss plus pure dephasing over a fixed duration.
///
/// Both jump operators change the photon-number difference `m - n` of
/// `rho_{mn}` by zero, so the Lindblad superoperator is block diagonal over
/// the diagonals of `rho`. Each block is a `(d - k) x (d - k)` upper
/// bidiagonal generator and is exponentiated on its own.
#[derive(Clone, Debug)]
pub struct CavityDecay {
    dim: FockDim,
    /// `propagators[k]` evolves the chain `x_j = rho_{j+k, j}` (equivalently
    /// `rho_{j, j+k}`), `j = 0..d-k`.
    propagators: Vec<CMatrix>,
}

impl CavityDecay {
    pub fn new(params: &DecoherenceParams, dim: FockDim) -> Result<Self> {
        params.validate()?;
        let d = dim.get();
        let kappa = params.times.loss_rate();
        let gamma = params.times.dephasing_rate();
        let t = params.duration_us;
        let mut propagators = Vec::with_capacity(d);
        for k in 0..d {
            let len = d - k;
            let mut gen = CMatrix::zeros((len, len));
            for j in 0..len {
                let m = (j + k) as f64;
                let n = j as f64;
                let kk = (k * k) as f64;
                gen[[j, j]] = C64::new(-(kappa * (m + n) / 2.0 + gamma * kk) * t, 0.0);
                if j + 1 < len {
                    gen[[j, j + 1]] = C64::new(kappa * ((m + 1.0) * (n + 1.0)).sqrt() * t, 0.0);
                }
            }
            let prop = if t == 0.0 {
                linalg::identity(len)
            } else {
                linalg::expm(&gen)?
            };
            propagators.push(prop);
        }
        Ok(CavityDecay { dim, propagators })
    }
}

impl Channel for CavityDecay {
    fn dim(&self) -> FockDim {
        self.dim
    }

    fn apply_matrix(&self, x: &CMatrix) -> CMatrix {
        let d = self.dim.get();
        let mut out = CMatrix::zeros((d, d));
        for (k, prop) in self.propagators.iter().enumerate() {
            let len = d - k;
            let lower = Array1::from_shape_fn(len, |j| x[[j + k, j]]);
            let evolved = prop.dot(&lower);
            for j in 0..len {
                out[[j + k, j]] = evolved[j];
            }
            if k > 0 {
                let upper = Array1::from_shape_fn(len, |j| x[[j, j + k]]);
                let evolved = prop.dot(&upper);
                for j in 0..len {
                    out[[j, j + k]] = evolved[j];
                }
            }
        }
        out
    }
}

/// Kraus form of [`CavityDecay`], extracted from its Choi matrix.
pub fn cavity_decay_channel(params: &DecoherenceParams, dim: FockDim) -> Result<KrausSet> {
    let decay = CavityDecay::new(params, dim)?;
    let set = choi_to_kraus(&decay.choi(), None)?;
    set.certify()?;
    Ok(set)
}

/// Haar-like random CPTP channel of the given rank: the polar factor of a
/// complex Gaussian `(r d) x d` matrix, split into Kraus operators.
pub fn random_channel<R: Rng + ?Sized>(dim: FockDim, rank: usize, rng: &mut R) -> Result<KrausSet> {
    let d = dim.get();
    let g = Array2::from_shape_fn((rank * d, d), |_| {
        C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
    });
    let v = linalg::polar_isometry(&g, 1e-12)?
        .ok_or_else(|| Error::Numerical("random Gaussian matrix was rank deficient".into()))?;
    KrausSet::from_stacked(&v, dim)
}

#[derive(Serialize, Deserialize)]
struct KrausJson {
    dim: usize,
    rank: usize,
    operators: Vec<Vec<[f64; 2]>>,
}

impl KrausSet {
    /// `{"dim": d, "rank": r, "operators": [[[re, im], ...], ...]}` with each
    /// operator flattened row-major.
    pub fn to_json_value(&self) -> serde_json::Value {
        let operators = self
            .ops
            .iter()
            .map(|k| k.iter().map(|z| [z.re, z.im]).collect())
            .collect();
        serde_json::to_value(KrausJson {
            dim: self.dim.get(),
            rank: self.rank(),
            operators,
        })
        .expect("Kraus JSON is always serializable")
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.to_json_value())?)
    }

    pub fn from_json_value(v: serde_json::Value) -> Result<Self> {
        let raw: KrausJson = serde_json::from_value(v)?;
        let d = raw.dim;
        if raw.operators.len() != raw.rank {
            return Err(Error::Validation(format!(
                "rank field {} disagrees with {} operators",
                raw.rank,
                raw.operators.len()
            )));
        }
        let ops = raw
            .operators
            .into_iter()
            .map(|flat| {
                if flat.len() != d * d {
                    return Err(Error::dim_mismatch(
                        "serialized Kraus operator",
                        d * d,
                        flat.len(),
                    ));
                }
                Ok(Array2::from_shape_fn((d, d), |(i, j)| {
                    let [re, im] = flat[i * d + j];
                    C64::new(re, im)
                }))
            })
            .collect::<Result<Vec<_>>>()?;
        KrausSet::new(ops)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        KrausSet::from_json_value(serde_json::from_str(s)?)
    }
}

//! Coherent-state probes, Wigner-function measurements and datasets.
//!
//! The Wigner value at `beta` is `(2/pi) Tr[rho D(beta) P D(beta)^dag]`,
//! the displaced-parity convention, so that the vacuum gives `2/pi` at the
//! origin and the function integrates to one over the complex plane.

use std::io::Write;
use std::path::Path;

use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::Channel;
use crate::fock::{coherent_state, displacement, parity, DensityMatrix, FockDim};
use crate::linalg::{self, dagger};
use crate::{CMatrix, Error, Result, C64};

pub const WIGNER_SCALE: f64 = std::f64::consts::FRAC_2_PI;
pub const DATASET_SCHEMA: &str = "csqpt-dataset-v1";

/// Minimum acceptable Riemann estimate of `Tr rho` before rescaling.
pub const MIN_GRID_TRACE: f64 = 0.5;

fn square_lattice(n: usize, extent: f64) -> Result<Vec<C64>> {
    if n == 0 || !(extent.is_finite() && extent >= 0.0) {
        return Err(Error::Validation(format!(
            "invalid square grid: n = {n}, extent = {extent}"
        )));
    }
    let coord = |k: usize| {
        if n == 1 {
            0.0
        } else {
            -extent + 2.0 * extent * k as f64 / (n - 1) as f64
        }
    };
    let mut pts = Vec::with_capacity(n * n);
    for iy in 0..n {
        for ix in 0..n {
            pts.push(C64::new(coord(ix), coord(iy)));
        }
    }
    Ok(pts)
}

/// Complex probe amplitudes `alpha_i`.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbeGrid {
    pub alphas: Vec<C64>,
}

impl ProbeGrid {
    pub fn new(alphas: Vec<C64>) -> Result<Self> {
        if alphas.is_empty() {
            return Err(Error::Validation("probe grid is empty".into()));
        }
        if alphas
            .iter()
            .any(|a| !(a.re.is_finite() && a.im.is_finite()))
        {
            return Err(Error::Validation("probe amplitudes must be finite".into()));
        }
        Ok(ProbeGrid { alphas })
    }

    /// `n x n` square grid spanning `[-alpha_max, alpha_max]` on both axes.
    pub fn square(n: usize, alpha_max: f64) -> Result<Self> {
        Self::new(square_lattice(n, alpha_max)?)
    }

    pub fn len(&self) -> usize {
        self.alphas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alphas.is_empty()
    }

    pub fn max_abs(&self) -> f64 {
        self.alphas.iter().map(|a| a.norm()).fold(0.0, f64::max)
    }
}

impl Default for ProbeGrid {
    fn default() -> Self {
        ProbeGrid::square(5, 1.5).expect("default probe grid is valid")
    }
}

/// Measurement displacements, stored row-major with the real part
/// varying fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct WignerGrid {
    pub betas: Vec<C64>,
}

/// Shape and spacing of a uniform rectangular grid.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Lattice {
    pub n_re: usize,
    pub n_im: usize,
    pub d_re: f64,
    pub d_im: f64,
}

impl WignerGrid {
    pub fn new(betas: Vec<C64>) -> Result<Self> {
        if betas.is_empty() {
            return Err(Error::Validation("Wigner grid is empty".into()));
        }
        if betas
            .iter()
            .any(|b| !(b.re.is_finite() && b.im.is_finite()))
        {
            return Err(Error::Validation(
                "grid displacements must be finite".into(),
            ));
        }
        Ok(WignerGrid { betas })
    }

    pub fn square(n: usize, beta_max: f64) -> Result<Self> {
        Self::new(square_lattice(n, beta_max)?)
    }

    pub fn len(&self) -> usize {
        self.betas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.betas.is_empty()
    }

    /// Detects the uniform rectangular lattice the grid is laid out on.
    pub fn lattice(&self) -> Result<Lattice> {
        let b = &self.betas;
        let im0 = b[0].im;
        let scale = b.iter().map(|z| z.norm()).fold(1.0, f64::max);
        let tol = 1e-9 * scale;
        let n_re = b.iter().take_while(|z| (z.im - im0).abs() <= tol).count();
        if n_re < 2 || !b.len().is_multiple_of(n_re) || b.len() / n_re < 2 {
            return Err(Error::Validation(
                "grid is not a rectangular lattice of at least 2 x 2".into(),
            ));
        }
        let n_im = b.len() / n_re;
        let d_re = b[1].re - b[0].re;
        let d_im = b[n_re].im - b[0].im;
        if d_re <= 0.0 || d_im <= 0.0 {
            return Err(Error::Validation(
                "grid coordinates must increase along both axes".into(),
            ));
        }
        for iy in 0..n_im {
            for ix in 0..n_re {
                let z = b[iy * n_re + ix];
                let expect = C64::new(b[0].re + ix as f64 * d_re, im0 + iy as f64 * d_im);
                if (z - expect).norm() > 1e-7 * scale {
                    return Err(Error::Validation(format!(
                        "grid point {} deviates from a uniform lattice",
                        iy * n_re + ix
                    )));
                }
            }
        }
        Ok(Lattice {
            n_re,
            n_im,
            d_re,
            d_im,
        })
    }
}

impl Default for WignerGrid {
    fn default() -> Self {
        WignerGrid::square(21, 2.62).expect("default Wigner grid is valid")
    }
}

/// Dimension used to build displaced-parity observables before truncating
/// them back to `d`. Truncating `D P D^dag` rather than `D` keeps
/// `Tr[rho M]` exact for every `rho` supported on the first `d` levels.
pub fn parity_padding(d: usize) -> usize {
    2 * d + 32
}

/// `(2/pi) D(beta) P D(beta)^dag` restricted to the first `d` levels.
pub fn displaced_parity(beta: C64, dim: FockDim) -> CMatrix {
    let d = dim.get();
    let big = FockDim::new(parity_padding(d)).expect("padded dimension is valid");
    let disp = displacement(beta, big).into_matrix();
    let p = parity(big).into_matrix();
    let m = disp.dot(&p).dot(&dagger(&disp));
    m.slice(ndarray::s![..d, ..d]).mapv(|z| z * WIGNER_SCALE)
}

/// Packs a matrix as `[Re(m), Im(m)]` (row-major) so that for Hermitian
/// `a, b` the real dot product of the packs equals `Tr[a b]`.
pub fn pack_real(m: &CMatrix) -> Array1<f64> {
    let n = m.len();
    let mut out = Array1::zeros(2 * n);
    for (k, z) in m.iter().enumerate() {
        out[k] = z.re;
        out[n + k] = z.im;
    }
    out
}

/// Inverse of [`pack_real`] for a `d x d` matrix.
pub fn unpack_real(v: ndarray::ArrayView1<f64>, d: usize) -> CMatrix {
    let n = d * d;
    Array2::from_shape_fn((d, d), |(a, b)| C64::new(v[a * d + b], v[n + a * d + b]))
}

/// Cached displaced-parity observables for one grid and dimension.
#[derive(Clone, Debug)]
pub struct ParityTable {
    dim: FockDim,
    /// Row `j` is `pack_real(M_j)`.
    packed: Array2<f64>,
}

impl ParityTable {
    pub fn new(grid: &WignerGrid, dim: FockDim) -> Self {
        let d = dim.get();
        let rows: Vec<Array1<f64>> = grid
            .betas
            .par_iter()
            .map(|&b| pack_real(&displaced_parity(b, dim)))
            .collect();
        let mut packed = Array2::zeros((rows.len(), 2 * d * d));
        for (j, r) in rows.into_iter().enumerate() {
            packed.row_mut(j).assign(&r);
        }
        ParityTable { dim, packed }
    }

    pub fn dim(&self) -> FockDim {
        self.dim
    }

    pub fn n_betas(&self) -> usize {
        self.packed.nrows()
    }

    pub fn packed(&self) -> &Array2<f64> {
        &self.packed
    }

    /// Wigner values for states given as packed columns: returns
    /// `n_states x n_betas`.
    pub fn evaluate_packed(&self, states: &Array2<f64>) -> Array2<f64> {
        states.t().dot(&self.packed.t())
    }

    /// `sum_j c_ij M_j` for each row `i` of `coeffs` (`n_states x n_betas`),
    /// as packed columns (`2 d^2 x n_states`).
    pub fn weighted_sum_packed(&self, coeffs: &Array2<f64>) -> Array2<f64> {
        self.packed.t().dot(&coeffs.t())
    }
}

/// Single Wigner value of a state.
pub fn wigner_value(rho: &DensityMatrix, beta: C64) -> Result<f64> {
    let m = displaced_parity(beta, rho.dim());
    let w = linalg::trace(&rho.matrix().dot(&m));
    if w.im.abs() > 1e-8 {
        return Err(Error::Numerical(format!(
            "Wigner value has imaginary part {:.3e}",
            w.im
        )));
    }
    Ok(w.re)
}

/// Probe states `|alpha_i>` as matrix columns (`d x n_probes`).
pub fn probe_matrix(probes: &ProbeGrid, dim: FockDim) -> CMatrix {
    let mut a = CMatrix::zeros((dim.get(), probes.len()));
    for (i, &alpha) in probes.alphas.iter().enumerate() {
        a.column_mut(i)
            .assign(coherent_state(alpha, dim).amplitudes());
    }
    a
}

/// Wigner measurements of a set of channel outputs.
#[derive(Clone, Debug, PartialEq)]
pub struct TomographyDataset {
    pub dim: FockDim,
    pub probes: ProbeGrid,
    pub grid: WignerGrid,
    /// `values[[i, j]]` is the Wigner value of probe `i` at `betas[j]`.
    pub values: Array2<f64>,
    pub shots: u64,
    pub seed: u64,
    pub normalized: bool,
}

#[derive(Serialize, Deserialize)]
struct DatasetJson {
    schema: String,
    dim: usize,
    shots: u64,
    seed: u64,
    normalized: bool,
    probes: Vec<[f64; 2]>,
    betas: Vec<[f64; 2]>,
    values: Vec<Vec<f64>>,
}

fn to_pairs(z: &[C64]) -> Vec<[f64; 2]> {
    z.iter().map(|z| [z.re, z.im]).collect()
}

fn from_pairs(p: &[[f64; 2]]) -> Vec<C64> {
    p.iter().map(|&[re, im]| C64::new(re, im)).collect()
}

impl TomographyDataset {
    pub fn n_points(&self) -> usize {
        self.values.len()
    }

    /// Per-point standard deviation of shot noise on `W` (zero for exact data).
    pub fn shot_sigma(&self) -> f64 {
        if self.shots == 0 {
            0.0
        } else {
            WIGNER_SCALE / (self.shots as f64).sqrt()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (np, nb) = self.values.dim();
        if np != self.probes.len() || nb != self.grid.len() {
            return Err(Error::Dimension(format!(
                "values are {np} x {nb} but grids are {} x {}",
                self.probes.len(),
                self.grid.len()
            )));
        }
        // Normalized data may be rescaled by up to 1 / MIN_GRID_TRACE.
        let slack = if self.normalized {
            1.0 / MIN_GRID_TRACE
        } else {
            1.0
        };
        let bound = slack * (WIGNER_SCALE + 5.0 * self.shot_sigma()) + 1e-9;
        if let Some(v) = self
            .values
            .iter()
            .find(|v| !v.is_finite() || v.abs() > bound)
        {
            return Err(Error::DataQuality(format!(
                "Wigner value {v} exceeds the physical bound {bound:.4}"
            )));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        let j = DatasetJson {
            schema: DATASET_SCHEMA.to_string(),
            dim: self.dim.get(),
            shots: self.shots,
            seed: self.seed,
            normalized: self.normalized,
            probes: to_pairs(&self.probes.alphas),
            betas: to_pairs(&self.grid.betas),
            values: self.values.outer_iter().map(|r| r.to_vec()).collect(),
        };
        Ok(serde_json::to_string(&j)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let j: DatasetJson = serde_json::from_str(s)?;
        if j.schema != DATASET_SCHEMA {
            return Err(Error::Validation(format!(
                "unsupported dataset schema {:?}",
                j.schema
            )));
        }
        let probes = ProbeGrid::new(from_pairs(&j.probes))?;
        let grid = WignerGrid::new(from_pairs(&j.betas))?;
        let nb = grid.len();
        if j.values.len() != probes.len() || j.values.iter().any(|r| r.len() != nb) {
            return Err(Error::Dimension(
                "dataset values do not match the grids".into(),
            ));
        }
        let flat: Vec<f64> = j.values.into_iter().flatten().collect();
        let values = Array2::from_shape_vec((probes.len(), nb), flat).expect("shape checked above");
        let ds = TomographyDataset {
            dim: FockDim::new(j.dim)?,
            probes,
            grid,
            values,
            shots: j.shots,
            seed: j.seed,
            normalized: j.normalized,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// One probe's Wigner slice as CSV (`beta_re, beta_im, w`).
    pub fn write_slice_csv<W: Write>(&self, probe: usize, w: W) -> Result<()> {
        if probe >= self.probes.len() {
            return Err(Error::Dimension(format!(
                "probe index {probe} out of range"
            )));
        }
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["beta_re", "beta_im", "w"])?;
        for (b, v) in self.grid.betas.iter().zip(self.values.row(probe)) {
            wtr.write_record([b.re.to_string(), b.im.to_string(), v.to_string()])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Sends every probe through `channel` and measures the Wigner function on
/// `grid`. With `shots > 0` each value is replaced by a binomial estimate of
/// the parity bit drawn from a per-point substream of `seed`. Simulated data
/// is exactly normalized and flagged as such.
pub fn simulate_dataset<C: Channel>(
    channel: &C,
    probes: &ProbeGrid,
    grid: &WignerGrid,
    shots: u64,
    seed: u64,
) -> Result<TomographyDataset> {
    let dim = channel.dim();
    let d = dim.get();
    let table = ParityTable::new(grid, dim);
    let outputs: Vec<Array1<f64>> = probes
        .alphas
        .par_iter()
        .map(|&alpha| {
            let psi = coherent_state(alpha, dim);
            let rho = linalg::outer(psi.amplitudes(), psi.amplitudes());
            pack_real(&channel.apply_matrix(&rho))
        })
        .collect();
    let mut states = Array2::zeros((2 * d * d, probes.len()));
    for (i, col) in outputs.into_iter().enumerate() {
        states.column_mut(i).assign(&col);
    }
    let mut values = table.evaluate_packed(&states);

    if shots > 0 {
        let nb = grid.len();
        values
            .indexed_iter_mut()
            .par_bridge()
            .try_for_each(|((i, j), w)| -> Result<()> {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream((i * nb + j) as u64);
                let p = ((1.0 + *w / WIGNER_SCALE) / 2.0).clamp(0.0, 1.0);
                let k = Binomial::new(shots, p)
                    .map_err(|e| Error::Numerical(format!("binomial sampler: {e}")))?
                    .sample(&mut rng);
                *w = WIGNER_SCALE * (2.0 * k as f64 / shots as f64 - 1.0);
                Ok(())
            })?;
    }

    Ok(TomographyDataset {
        dim,
        probes: probes.clone(),
        grid: grid.clone(),
        values,
        shots,
        seed,
        normalized: true,
    })
}

/// Riemann estimate `tau_i = sum_j W_ij * d_re * d_im` of each output trace.
pub fn grid_traces(ds: &TomographyDataset) -> Result<Vec<f64>> {
    let lat = ds.grid.lattice()?;
    let cell = lat.d_re * lat.d_im;
    Ok(ds.values.outer_iter().map(|row| row.sum() * cell).collect())
}

/// Rescales every probe slice by `1 / tau_i`.
pub fn normalize_dataset(ds: &TomographyDataset) -> Result<TomographyDataset> {
    let taus = grid_traces(ds)?;
    if let Some((i, t)) = taus
        .iter()
        .enumerate()
        .find(|(_, &t)| !(t > MIN_GRID_TRACE))
    {
        return Err(Error::DataQuality(format!(
            "probe {i}: grid captures trace {t:.4} <= {MIN_GRID_TRACE}; the grid does not contain the state"
        )));
    }
    let mut out = ds.clone();
    for (mut row, t) in out.values.outer_iter_mut().zip(&taus) {
        row.mapv_inplace(|v| v / t);
    }
    out.normalized = true;
    Ok(out)
}

/// Keeps every `stride`-th grid point along each axis.
pub fn subsample_grid(ds: &TomographyDataset, stride: usize) -> Result<TomographyDataset> {
    if stride == 0 {
        return Err(Error::Validation("stride must be at least 1".into()));
    }
    let lat = ds.grid.lattice()?;
    let keep_re: Vec<usize> = (0..lat.n_re).step_by(stride).collect();
    let keep_im: Vec<usize> = (0..lat.n_im).step_by(stride).collect();
    if keep_re.len() < 3 || keep_im.len() < 3 {
        return Err(Error::Validation(format!(
            "stride {stride} leaves a {} x {} grid; at least 3 x 3 is required",
            keep_re.len(),
            keep_im.len()
        )));
    }
    let idx: Vec<usize> = keep_im
        .iter()
        .flat_map(|&iy| keep_re.iter().map(move |&ix| iy * lat.n_re + ix))
        .collect();
    let betas = idx.iter().map(|&k| ds.grid.betas[k]).collect();
    let values = ds.values.select(ndarray::Axis(1), &idx);
    Ok(TomographyDataset {
        grid: WignerGrid { betas },
        values,
        ..ds.clone()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{random_channel, unitary_channel, KrausSet};
    use crate::fock::{fock_state, StateVector};
    use proptest::prelude::*;
    use rand::Rng;

    fn dim(d: usize) -> FockDim {
        FockDim::new(d).unwrap()
    }

    #[test]
    fn analytic_wigner_values() {
        let vac = fock_state(0, dim(32)).unwrap().to_density();
        let one = fock_state(1, dim(32)).unwrap().to_density();
        assert!((wigner_value(&vac, C64::new(0.0, 0.0)).unwrap() - WIGNER_SCALE).abs() < 1e-10);
        assert!((wigner_value(&one, C64::new(0.0, 0.0)).unwrap() + WIGNER_SCALE).abs() < 1e-10);

        let pts = [-1.5, -0.7, 0.0, 0.4, 1.5];
        for &ar in &pts {
            for &bi in &pts {
                let alpha = C64::new(ar, -0.5 * bi);
                let beta = C64::new(0.8 * bi, ar.abs().min(1.0));
                let rho = coherent_state(alpha, dim(32)).to_density();
                let exact = WIGNER_SCALE * (-2.0 * (beta - alpha).norm_sqr()).exp();
                assert!((wigner_value(&rho, beta).unwrap() - exact).abs() < 1e-4);
            }
        }
    }

    #[test]
    fn default_grid_shapes() {
        let p = ProbeGrid::default();
        assert_eq!(p.len(), 25);
        assert_eq!(p.alphas[0], C64::new(-1.5, -1.5));
        assert_eq!(p.alphas[24], C64::new(1.5, 1.5));
        let g = WignerGrid::default();
        assert_eq!(g.len(), 441);
        let lat = g.lattice().unwrap();
        assert_eq!((lat.n_re, lat.n_im), (21, 21));
        assert!((lat.d_re - 0.262).abs() < 1e-12);
        assert!(g.betas[1].re > g.betas[0].re && g.betas[1].im == g.betas[0].im);
        for a in &p.alphas {
            let n = coherent_state(*a, dim(32)).mean_photon_number();
            assert!(n <= 4.5 + 1e-9);
        }
    }

    #[test]
    fn simulate_identity_vacuum_exact() {
        let probes = ProbeGrid::new(vec![C64::new(0.0, 0.0)]).unwrap();
        let grid = WignerGrid::new(vec![C64::new(0.0, 0.0)]).unwrap();
        let ds = simulate_dataset(&KrausSet::identity(dim(16)), &probes, &grid, 0, 1).unwrap();
        assert!((ds.values[[0, 0]] - WIGNER_SCALE).abs() < 1e-14);
        assert!(ds.normalized);
    }

    #[test]
    fn simulate_matches_direct_wigner_values() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let ch = random_channel(dim(10), 2, &mut rng).unwrap();
        let probes = ProbeGrid::square(2, 0.8).unwrap();
        let grid = WignerGrid::square(3, 1.0).unwrap();
        let ds = simulate_dataset(&ch, &probes, &grid, 0, 0).unwrap();
        for (i, &a) in probes.alphas.iter().enumerate() {
            let out = ch.apply(&coherent_state(a, dim(10)).to_density()).unwrap();
            for (j, &b) in grid.betas.iter().enumerate() {
                assert!((ds.values[[i, j]] - wigner_value(&out, b).unwrap()).abs() < 1e-12);
            }
        }
        assert!(ds.values.iter().all(|v| v.abs() <= WIGNER_SCALE + 1e-9));
    }

    #[test]
    fn shot_noise_is_deterministic_and_unbiased() {
        let ch = KrausSet::identity(dim(12));
        let probes = ProbeGrid::square(2, 0.5).unwrap();
        let grid = WignerGrid::square(5, 1.5).unwrap();
        let exact = simulate_dataset(&ch, &probes, &grid, 0, 0).unwrap();
        let a = simulate_dataset(&ch, &probes, &grid, 1000, 7).unwrap();
        let b = simulate_dataset(&ch, &probes, &grid, 1000, 7).unwrap();
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
        let c = simulate_dataset(&ch, &probes, &grid, 1000, 8).unwrap();
        assert_ne!(a.values, c.values);

        // Average of N independent datasets converges at 1 / sqrt(N shots).
        let n = 40;
        let shots = 1000;
        let mut mean = Array2::<f64>::zeros(exact.values.dim());
        for s in 0..n {
            mean = mean
                + simulate_dataset(&ch, &probes, &grid, shots, 100 + s)
                    .unwrap()
                    .values;
        }
        mean /= n as f64;
        let sigma = WIGNER_SCALE / ((n * shots) as f64).sqrt();
        let worst = (&mean - &exact.values)
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(
            worst < 5.0 * sigma,
            "worst deviation {worst}, sigma {sigma}"
        );
        assert!(a.values.iter().all(|v| v.abs() <= WIGNER_SCALE + 1e-12));
    }

    #[test]
    fn default_dataset_shape() {
        let ds = simulate_dataset(
            &KrausSet::identity(dim(32)),
            &ProbeGrid::default(),
            &WignerGrid::default(),
            0,
            0,
        )
        .unwrap();
        assert_eq!(ds.values.dim(), (25, 441));
    }

    #[test]
    fn normalization_examples() {
        let probes = ProbeGrid::new(vec![C64::new(0.0, 0.0), C64::new(0.3, -0.2)]).unwrap();
        let ds = simulate_dataset(
            &KrausSet::identity(dim(16)),
            &probes,
            &WignerGrid::default(),
            0,
            0,
        )
        .unwrap();
        // Oracle: Riemann sum of the analytic Gaussian on the same lattice.
        let lat = ds.grid.lattice().unwrap();
        let riemann: f64 = ds
            .grid
            .betas
            .iter()
            .map(|b| WIGNER_SCALE * (-2.0 * b.norm_sqr()).exp() * lat.d_re * lat.d_im)
            .sum();
        let taus = grid_traces(&ds).unwrap();
        assert!((taus[0] - riemann).abs() < 1e-8);
        assert!((taus[0] - 1.0).abs() < 0.01);

        let mut scaled = ds.clone();
        scaled.values.mapv_inplace(|v| 0.9 * v);
        let fixed = normalize_dataset(&scaled).unwrap();
        for (t, t0) in grid_traces(&scaled).unwrap().iter().zip(&taus) {
            assert!((t0 / t - 1.0 / 0.9).abs() < 1e-6);
        }
        assert!((&fixed.values - &ds.values.mapv(|v| v / taus[0]))
            .row(0)
            .iter()
            .all(|v| v.abs() < 1e-12));

        let mut zero = ds.clone();
        zero.values.row_mut(1).fill(0.0);
        assert!(matches!(
            normalize_dataset(&zero),
            Err(Error::DataQuality(_))
        ));
    }

    #[test]
    fn subsampling() {
        let ch = KrausSet::identity(dim(8));
        let ds = simulate_dataset(
            &ch,
            &ProbeGrid::square(1, 0.0).unwrap(),
            &WignerGrid::default(),
            0,
            0,
        )
        .unwrap();
        assert_eq!(subsample_grid(&ds, 1).unwrap(), ds);
        let coarse = subsample_grid(&ds, 2).unwrap();
        let lat = coarse.grid.lattice().unwrap();
        assert_eq!((lat.n_re, lat.n_im), (11, 11));
        assert!((lat.d_re - 0.524).abs() < 1e-12);
        assert_eq!(coarse.values[[0, 12]], ds.values[[0, 2 * 21 + 2]]);
        assert!(subsample_grid(&ds, 10).is_ok());
        assert!(subsample_grid(&ds, 11).is_err());
        assert!(subsample_grid(&ds, 0).is_err());
    }

    #[test]
    fn dataset_json_schema_and_round_trip() {
        let ds = simulate_dataset(
            &KrausSet::identity(dim(6)),
            &ProbeGrid::square(2, 0.5).unwrap(),
            &WignerGrid::square(3, 1.0).unwrap(),
            50,
            9,
        )
        .unwrap();
        let s = ds.to_json().unwrap();
        assert!(s.starts_with(r#"{"schema":"csqpt-dataset-v1","dim":6,"shots":50,"seed":9,"normalized":true,"probes":[[-0.5,-0.5],"#));
        let back = TomographyDataset::from_json(&s).unwrap();
        assert_eq!(back, ds);
        assert_eq!(back.to_json().unwrap(), s);

        let mut csv = Vec::new();
        ds.write_slice_csv(1, &mut csv).unwrap();
        let csv = String::from_utf8(csv).unwrap();
        assert_eq!(csv.lines().next().unwrap(), "beta_re,beta_im,w");
        assert_eq!(csv.lines().count(), 10);

        let bad = s.replace("csqpt-dataset-v1", "other");
        assert!(TomographyDataset::from_json(&bad).is_err());
    }

    #[test]
    fn padded_parity_is_hermitian_and_bounded() {
        let m = displaced_parity(C64::new(2.62, -2.62), dim(32));
        assert!(linalg::hermiticity_defect(&m) < 1e-10);
        let (ev, _) = linalg::eigh(&m).unwrap();
        assert!(ev.iter().all(|e| e.abs() <= WIGNER_SCALE + 1e-9));
    }

    #[test]
    fn unitary_channel_dataset_matches_rotated_states() {
        let u = crate::fock::displacement(C64::new(0.2, 0.1), dim(24));
        let ch = unitary_channel(&u).unwrap();
        let probes = ProbeGrid::new(vec![C64::new(0.1, 0.0)]).unwrap();
        let grid = WignerGrid::square(3, 0.5).unwrap();
        let ds = simulate_dataset(&ch, &probes, &grid, 0, 0).unwrap();
        // D(0.2+0.1i)|0.1> is the coherent state |0.3+0.1i> up to phase.
        for (j, b) in grid.betas.iter().enumerate() {
            let exact = WIGNER_SCALE * (-2.0 * (b - C64::new(0.3, 0.1)).norm_sqr()).exp();
            assert!((ds.values[[0, j]] - exact).abs() < 1e-8);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn wigner_value_is_linear(seed in any::<u64>(), t in 0.0f64..1.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mk = |rng: &mut ChaCha8Rng| {
                let amps = Array1::from_shape_fn(8, |_| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
                StateVector::from_amplitudes(amps, true).unwrap().to_density()
            };
            let a = mk(&mut rng);
            let b = mk(&mut rng);
            let mix = DensityMatrix::from_matrix(a.matrix().mapv(|z| z * t) + b.matrix().mapv(|z| z * (1.0 - t))).unwrap();
            let beta = C64::new(rng.random::<f64>() * 2.0 - 1.0, rng.random::<f64>() * 2.0 - 1.0);
            let lhs = wigner_value(&mix, beta).unwrap();
            let rhs = t * wigner_value(&a, beta).unwrap() + (1.0 - t) * wigner_value(&b, beta).unwrap();
            prop_assert!((lhs - rhs).abs() < 1e-10);
            prop_assert!(lhs.abs() <= WIGNER_SCALE + 1e-9);
        }
    }
}

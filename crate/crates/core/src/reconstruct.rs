//! Kraus-operator reconstruction from Wigner data on the Stiefel manifold.
//!
//! The `r` Kraus operators are stacked into an `(r d) x d` matrix `V`; the
//! channel is trace preserving exactly when `V^dag V = I`. Each iteration
//! projects the Euclidean gradient onto the tangent space at `V`, runs a
//! backtracking Armijo line search along the negative projected gradient
//! and maps the step back with the polar retraction.
//!
//! Gradients are Wirtinger derivatives `dL/dV*`. The steepest-ascent
//! direction under the real inner product `Re Tr[X^dag Y]` is twice that.
//!
//! The L1 penalty is `sum |Re v| + |Im v|` over all entries of `V`, with the
//! subgradient of `|x|` at zero taken as zero.

use std::path::Path;

use ndarray::{s, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::channel::{Channel, KrausSet};
use crate::fock::FockDim;
use crate::linalg::{self, dagger};
use crate::tomography::{
    probe_matrix, unpack_real, ParityTable, ProbeGrid, TomographyDataset, WignerGrid,
};
use crate::{CMatrix, Error, Result, C64};

pub const RESULT_SCHEMA: &str = "csqpt-result-v1";
pub const ISOMETRY_TOL: f64 = 1e-8;
const ARMIJO_C: f64 = 1e-4;
const BACKTRACK: f64 = 0.5;
const INIT_NOISE: f64 = 1e-2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum InitKind {
    #[default]
    IdentityPerturbed,
    RandomIsometry,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReconstructionConfig {
    pub rank: usize,
    pub dim: FockDim,
    pub gamma: f64,
    pub max_iters: usize,
    /// Trial step for the first line search; later trials use the
    /// Barzilai-Borwein estimate.
    pub step_size: f64,
    pub grad_tol: f64,
    pub seed: u64,
    pub init: InitKind,
}

impl Default for ReconstructionConfig {
    fn default() -> Self {
        ReconstructionConfig {
            rank: 4,
            dim: FockDim::new(32).expect("valid"),
            gamma: 4e-4,
            max_iters: 3000,
            step_size: 1e-2,
            grad_tol: 1e-9,
            seed: 0,
            init: InitKind::IdentityPerturbed,
        }
    }
}

impl ReconstructionConfig {
    pub fn validate(&self) -> Result<()> {
        let d = self.dim.get();
        if self.rank == 0 || self.rank > d * d {
            return Err(Error::Validation(format!(
                "rank must be in 1..={}, got {}",
                d * d,
                self.rank
            )));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::Validation(format!(
                "gamma must be finite and >= 0, got {}",
                self.gamma
            )));
        }
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(Error::Validation(format!(
                "step size must be positive, got {}",
                self.step_size
            )));
        }
        if !(self.grad_tol >= 0.0) {
            return Err(Error::Validation("grad_tol must be >= 0".into()));
        }
        Ok(())
    }
}

/// Stacked Kraus operators with `V^dag V = I`.
#[derive(Clone, Debug, PartialEq)]
pub struct IsometryPoint {
    dim: FockDim,
    v: CMatrix,
}

impl IsometryPoint {
    pub fn new(v: CMatrix, dim: FockDim) -> Result<Self> {
        let d = dim.get();
        check_stack_shape(&v, d)?;
        let defect = isometry_defect(&v);
        if defect > ISOMETRY_TOL {
            return Err(Error::Validation(format!(
                "stack is not an isometry (defect {defect:.3e})"
            )));
        }
        Ok(IsometryPoint { dim, v })
    }

    pub fn from_kraus(k: &KrausSet) -> Result<Self> {
        Self::new(k.stacked(), k.dim())
    }

    pub fn dim(&self) -> FockDim {
        self.dim
    }

    pub fn rank(&self) -> usize {
        self.v.nrows() / self.dim.get()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.v
    }

    pub fn to_kraus(&self) -> Result<KrausSet> {
        KrausSet::from_stacked(&self.v, self.dim)
    }
}

fn check_stack_shape(v: &CMatrix, d: usize) -> Result<()> {
    let (rows, cols) = v.dim();
    if cols != d || rows == 0 || rows % d != 0 {
        return Err(Error::Dimension(format!(
            "stack of shape {rows} x {cols} is not (r*{d}) x {d}"
        )));
    }
    Ok(())
}

pub fn isometry_defect(v: &CMatrix) -> f64 {
    linalg::frobenius(&(dagger(v).dot(v) - linalg::identity(v.ncols())))
}

/// Nearest isometry `V (V^dag V)^(-1/2)`.
pub fn retract(v: &CMatrix) -> Result<IsometryPoint> {
    let d = v.ncols();
    check_stack_shape(v, d)?;
    let dim = FockDim::new(d)?;
    match linalg::polar_isometry(v, 1e-12)? {
        Some(q) => Ok(IsometryPoint { dim, v: q }),
        None => Err(Error::Retraction(
            "stacked Kraus matrix is rank deficient".into(),
        )),
    }
}

/// Projection onto the tangent space of the Stiefel manifold at `v`.
pub fn tangent_project(v: &CMatrix, z: &CMatrix) -> CMatrix {
    let vz = dagger(v).dot(z);
    let sym = (&vz + &dagger(&vz)).mapv(|x| x * 0.5);
    z - &v.dot(&sym)
}

fn real_inner(a: &CMatrix, b: &CMatrix) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| x.re * y.re + x.im * y.im)
        .sum()
}

pub fn l1_norm(v: &CMatrix) -> f64 {
    v.iter().map(|z| z.re.abs() + z.im.abs()).sum()
}

fn soft_threshold(x: f64, thr: f64) -> f64 {
    x.signum() * (x.abs() - thr).max(0.0)
}

fn sign0(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Loss breakdown and optimizer trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub l2: f64,
    pub l1: f64,
    pub total: f64,
    pub grad_norm: f64,
    pub iters_used: usize,
    pub history: Vec<f64>,
    pub converged: bool,
    pub warning: Option<String>,
}

/// Probe states, parity observables and (optionally) data for one
/// reconstruction problem.
#[derive(Clone, Debug)]
pub struct WignerModel {
    dim: FockDim,
    probes: CMatrix,
    table: ParityTable,
    data: Array2<f64>,
}

impl WignerModel {
    pub fn new(probes: &ProbeGrid, grid: &WignerGrid, dim: FockDim) -> Self {
        WignerModel {
            dim,
            probes: probe_matrix(probes, dim),
            table: ParityTable::new(grid, dim),
            data: Array2::zeros((probes.len(), grid.len())),
        }
    }

    pub fn from_dataset(ds: &TomographyDataset, dim: FockDim) -> Result<Self> {
        ds.validate()?;
        let mut m = Self::new(&ds.probes, &ds.grid, dim);
        m.data = ds.values.clone();
        Ok(m)
    }

    pub fn dim(&self) -> FockDim {
        self.dim
    }

    pub fn data(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn n_points(&self) -> usize {
        self.data.len()
    }

    /// Columns `K_k |alpha_i>` for every `k` (`(r d) x n_probes`).
    fn propagate(&self, v: &CMatrix) -> Result<CMatrix> {
        check_stack_shape(v, self.dim.get())?;
        Ok(v.dot(&self.probes))
    }

    /// Packed output states (`2 d^2 x n_probes`).
    fn packed_outputs(&self, phi: &CMatrix) -> Array2<f64> {
        let d = self.dim.get();
        let n = d * d;
        let r = phi.nrows() / d;
        let np = phi.ncols();
        let mut out = Array2::zeros((2 * n, np));
        for i in 0..np {
            let mut col = out.column_mut(i);
            for k in 0..r {
                let f = phi.slice(s![k * d..(k + 1) * d, i]);
                for a in 0..d {
                    let fa = f[a];
                    for b in 0..d {
                        let z = fa * f[b].conj();
                        col[a * d + b] += z.re;
                        col[n + a * d + b] += z.im;
                    }
                }
            }
        }
        out
    }

    /// `W_pred[i, j]` for the channel with stacked Kraus matrix `v`.
    pub fn predict(&self, v: &CMatrix) -> Result<Array2<f64>> {
        let phi = self.propagate(v)?;
        Ok(self.table.evaluate_packed(&self.packed_outputs(&phi)))
    }

    /// `(l2, l1)` terms of the loss.
    pub fn loss(&self, v: &CMatrix) -> Result<(f64, f64)> {
        let pred = self.predict(v)?;
        let l2 = (&pred - &self.data).iter().map(|r| r * r).sum();
        Ok((l2, l1_norm(v)))
    }

    /// Wirtinger gradient `dL/dV*` of `l2 + gamma * l1`.
    pub fn gradient(&self, v: &CMatrix, gamma: f64) -> Result<CMatrix> {
        Ok(self.loss_and_gradient(v, gamma)?.2)
    }

    fn loss_and_gradient(&self, v: &CMatrix, gamma: f64) -> Result<(f64, f64, CMatrix)> {
        let d = self.dim.get();
        let phi = self.propagate(v)?;
        let pred = self.table.evaluate_packed(&self.packed_outputs(&phi));
        let resid = &pred - &self.data;
        let l2 = resid.iter().map(|r| r * r).sum();
        let g_packed = self.table.weighted_sum_packed(&resid.mapv(|r| 2.0 * r));
        let r = v.nrows() / d;
        let np = self.probes.ncols();
        let mut psi = CMatrix::zeros((r * d, np));
        for i in 0..np {
            let g = unpack_real(g_packed.column(i), d);
            for k in 0..r {
                let f = phi.slice(s![k * d..(k + 1) * d, i]);
                psi.slice_mut(s![k * d..(k + 1) * d, i]).assign(&g.dot(&f));
            }
        }
        let mut grad = psi.dot(&dagger(&self.probes));
        if gamma > 0.0 {
            let h = 0.5 * gamma;
            grad.zip_mut_with(v, |g, z| *g += C64::new(h * sign0(z.re), h * sign0(z.im)));
        }
        Ok((l2, l1_norm(v), grad))
    }
}

/// Predicted Wigner values, one row per probe.
pub fn predict_wigner(
    v: &IsometryPoint,
    probes: &ProbeGrid,
    grid: &WignerGrid,
) -> Result<Array2<f64>> {
    WignerModel::new(probes, grid, v.dim()).predict(v.matrix())
}

fn model_for(ds: &TomographyDataset, dim: FockDim) -> Result<WignerModel> {
    WignerModel::from_dataset(ds, dim)
}

pub fn loss(v: &IsometryPoint, ds: &TomographyDataset, gamma: f64) -> Result<LossReport> {
    let model = model_for(ds, v.dim())?;
    let (l2, l1) = model.loss(v.matrix())?;
    let total = l2 + gamma * l1;
    Ok(LossReport {
        l2,
        l1,
        total,
        grad_norm: f64::NAN,
        iters_used: 0,
        history: vec![total],
        converged: false,
        warning: None,
    })
}

/// Wirtinger gradient of the loss with respect to `V*` (any stacked matrix,
/// not only isometries).
pub fn euclidean_gradient(v: &CMatrix, ds: &TomographyDataset, gamma: f64) -> Result<CMatrix> {
    let d = v.ncols();
    model_for(ds, FockDim::new(d)?)?.gradient(v, gamma)
}

pub fn initial_point(cfg: &ReconstructionConfig) -> Result<IsometryPoint> {
    let d = cfg.dim.get();
    let r = cfg.rank;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut gauss = || -> f64 { StandardNormal.sample(&mut rng) };
    let mut v = CMatrix::zeros((r * d, d));
    match cfg.init {
        InitKind::IdentityPerturbed => {
            for j in 0..d {
                v[[j, j]] = C64::new(1.0, 0.0);
            }
            v.mapv_inplace(|z| z + C64::new(INIT_NOISE * gauss(), INIT_NOISE * gauss()));
        }
        InitKind::RandomIsometry => v.mapv_inplace(|_| C64::new(gauss(), gauss())),
    }
    retract(&v)
}

/// Full reconstruction from a normalized dataset.
pub fn reconstruct(
    ds: &TomographyDataset,
    cfg: &ReconstructionConfig,
) -> Result<(KrausSet, LossReport)> {
    cfg.validate()?;
    let init = initial_point(cfg)?;
    reconstruct_from(ds, cfg, init)
}

/// Reconstruction starting from an explicit point.
pub fn reconstruct_from(
    ds: &TomographyDataset,
    cfg: &ReconstructionConfig,
    init: IsometryPoint,
) -> Result<(KrausSet, LossReport)> {
    cfg.validate()?;
    if !ds.normalized {
        return Err(Error::Validation(
            "dataset must be normalized before reconstruction".into(),
        ));
    }
    cfg.dim.check(init.dim(), "initial point")?;
    let model = WignerModel::from_dataset(ds, cfg.dim)?;
    let gamma = cfg.gamma;
    let eval = |v: &CMatrix| -> Result<f64> {
        let (l2, l1) = model.loss(v)?;
        Ok(l2 + gamma * l1)
    };

    // Smooth part: projected gradient of l2 only. The L1 term enters
    // through soft thresholding before the retraction.
    let smooth_direction = |v: &CMatrix| -> Result<CMatrix> {
        let g = model.gradient(v, 0.0)?;
        Ok(tangent_project(v, &g.mapv(|z| z * 2.0)))
    };
    let mut v = init.v;
    let mut f = eval(&v)?;
    let mut xi = smooth_direction(&v)?;
    let mut gn = f64::INFINITY;
    let mut history = vec![f];
    let mut t_trial = cfg.step_size;
    let mut stop: Option<&str> = None;
    let mut iters = 0;

    while iters < cfg.max_iters {
        if gn <= cfg.grad_tol {
            stop = Some("gradient tolerance reached");
            break;
        }
        let mut t = t_trial;
        let t_min = 1e-14 * t_trial.max(1.0);
        let mut accepted = None;
        while t >= t_min {
            let mut step = &v - &xi.mapv(|z| z * t);
            if gamma > 0.0 {
                let thr = t * gamma;
                step.mapv_inplace(|z| {
                    C64::new(soft_threshold(z.re, thr), soft_threshold(z.im, thr))
                });
            }
            let cand = match retract(&step) {
                Ok(p) => p.v,
                Err(Error::Retraction(_)) => {
                    t *= BACKTRACK;
                    continue;
                }
                Err(e) => return Err(e),
            };
            let fc = eval(&cand)?;
            let moved = linalg::frobenius(&(&cand - &v));
            if fc < f && fc <= f - ARMIJO_C / t * moved * moved {
                accepted = Some((cand, fc, moved));
                break;
            }
            t *= BACKTRACK;
        }
        let Some((v_new, f_new, moved)) = accepted else {
            stop = Some("line search stalled");
            break;
        };
        let xi_new = smooth_direction(&v_new)?;
        let sv = &v_new - &v;
        let y = &xi_new - &xi;
        let sy = real_inner(&sv, &y);
        let ss = real_inner(&sv, &sv);
        t_trial = if sy > 0.0 {
            (ss / sy).clamp(1e-12, 1e6)
        } else {
            (2.0 * t).min(1e6)
        };

        v = v_new;
        f = f_new;
        xi = xi_new;
        // Norm of the proximal gradient mapping.
        gn = moved / t;
        history.push(f);
        iters += 1;
        log::trace!("iter {iters}: loss {f:.6e}, |grad| {gn:.3e}, step {t:.3e}");
    }
    if stop.is_none() && gn <= cfg.grad_tol {
        stop = Some("gradient tolerance reached");
    }

    let point = retract(&v)?;
    let kraus = point.to_kraus()?;
    let defect = kraus.cptp_defect();
    if defect > crate::channel::CPTP_TOL {
        return Err(Error::NotAChannel(format!(
            "reconstructed Kraus set has CPTP defect {defect:.3e}"
        )));
    }
    let (l2, l1) = model.loss(point.matrix())?;
    let converged = stop.is_some();
    let warning = if converged {
        None
    } else {
        Some(format!(
            "not converged after {} iterations (projected gradient norm {gn:.3e})",
            cfg.max_iters
        ))
    };
    if let Some(w) = &warning {
        log::warn!("{w}");
    }
    log::debug!(
        "reconstruction stopped after {iters} iterations: {}",
        stop.unwrap_or("iteration limit")
    );
    Ok((
        kraus,
        LossReport {
            l2,
            l1,
            total: l2 + gamma * l1,
            grad_norm: gn,
            iters_used: iters,
            history,
            converged,
            warning,
        },
    ))
}

#[derive(Serialize, Deserialize)]
struct LossJson {
    l2: f64,
    l1: f64,
    total: f64,
    grad_norm: f64,
    iters_used: usize,
    converged: bool,
    warning: Option<String>,
    cptp_defect: f64,
}

#[derive(Serialize, Deserialize)]
struct ResultJson {
    schema: String,
    config: ReconstructionConfig,
    kraus: serde_json::Value,
    loss: LossJson,
    history: Vec<f64>,
}

/// A reconstruction together with the settings that produced it.
#[derive(Clone, Debug)]
pub struct ReconstructionResult {
    pub config: ReconstructionConfig,
    pub kraus: KrausSet,
    pub report: LossReport,
}

impl ReconstructionResult {
    pub fn to_json(&self) -> Result<String> {
        let r = &self.report;
        let j = ResultJson {
            schema: RESULT_SCHEMA.to_string(),
            config: self.config.clone(),
            kraus: self.kraus.to_json_value(),
            loss: LossJson {
                l2: r.l2,
                l1: r.l1,
                total: r.total,
                grad_norm: r.grad_norm,
                iters_used: r.iters_used,
                converged: r.converged,
                warning: r.warning.clone(),
                cptp_defect: self.kraus.cptp_defect(),
            },
            history: r.history.clone(),
        };
        Ok(serde_json::to_string_pretty(&j)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let j: ResultJson = serde_json::from_str(s)?;
        if j.schema != RESULT_SCHEMA {
            return Err(Error::Validation(format!(
                "unsupported result schema {:?}",
                j.schema
            )));
        }
        let kraus = KrausSet::from_json_value(j.kraus)?;
        kraus.certify()?;
        Ok(ReconstructionResult {
            config: j.config,
            kraus,
            report: LossReport {
                l2: j.loss.l2,
                l1: j.loss.l1,
                total: j.loss.total,
                grad_norm: j.loss.grad_norm,
                iters_used: j.loss.iters_used,
                history: j.history,
                converged: j.loss.converged,
                warning: j.loss.warning,
            },
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{random_channel, unitary_channel};
    use crate::tomography::{simulate_dataset, WIGNER_SCALE};
    use rand::Rng;

    fn dim(d: usize) -> FockDim {
        FockDim::new(d).unwrap()
    }

    fn small_grids() -> (ProbeGrid, WignerGrid) {
        (
            ProbeGrid::square(3, 1.0).unwrap(),
            WignerGrid::square(3, 1.2).unwrap(),
        )
    }

    fn random_stack(rng: &mut ChaCha8Rng, r: usize, d: usize) -> CMatrix {
        CMatrix::from_shape_fn((r * d, d), |_| {
            C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
        })
    }

    #[test]
    fn prediction_examples() {
        let (probes, grid) = small_grids();
        let id = KrausSet::identity(dim(8));
        let exact = simulate_dataset(&id, &probes, &grid, 0, 0).unwrap();
        let p = predict_wigner(&IsometryPoint::from_kraus(&id).unwrap(), &probes, &grid).unwrap();
        assert!((&p - &exact.values).iter().all(|x| x.abs() < 1e-12));

        let code = crate::gates::BinomialCode::new(dim(12)).unwrap();
        let x = unitary_channel(&crate::gates::logical_x_with_identity(&code)).unwrap();
        let exact = simulate_dataset(&x, &probes, &grid, 0, 0).unwrap();
        let p = predict_wigner(&IsometryPoint::from_kraus(&x).unwrap(), &probes, &grid).unwrap();
        assert!((&p - &exact.values).iter().all(|x| x.abs() < 1e-10));

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let ch = random_channel(dim(8), 3, &mut rng).unwrap();
        let p = predict_wigner(&IsometryPoint::from_kraus(&ch).unwrap(), &probes, &grid).unwrap();
        assert!(p.iter().all(|x| x.abs() <= WIGNER_SCALE + 1e-9));
    }

    #[test]
    fn loss_examples() {
        let (probes, grid) = small_grids();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let ch = random_channel(dim(6), 2, &mut rng).unwrap();
        let ds = simulate_dataset(&ch, &probes, &grid, 0, 0).unwrap();
        let truth = IsometryPoint::from_kraus(&ch).unwrap();
        let r0 = loss(&truth, &ds, 0.0).unwrap();
        assert!(r0.total <= 1e-16 * ds.n_points() as f64);
        assert_eq!(r0.total, r0.l2);

        let other =
            IsometryPoint::from_kraus(&random_channel(dim(6), 2, &mut rng).unwrap()).unwrap();
        let a = loss(&other, &ds, 1e-3).unwrap();
        let b = loss(&other, &ds, 2e-3).unwrap();
        assert!((a.total - (a.l2 + 1e-3 * a.l1)).abs() < 1e-12);
        assert!(((b.total - b.l2) - 2.0 * (a.total - a.l2)).abs() < 1e-12);
    }

    /// Central differences on every real coordinate against twice the
    /// Wirtinger gradient.
    fn finite_difference_check(seed: u64, gamma: f64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (d, r) = (6, 2);
        let probes = ProbeGrid::square(3, 0.9).unwrap();
        let grid = WignerGrid::square(3, 1.1).unwrap();
        let mut ds = simulate_dataset(
            &random_channel(dim(d), 2, &mut rng).unwrap(),
            &probes,
            &grid,
            0,
            0,
        )
        .unwrap();
        ds.values
            .mapv_inplace(|w| w + 0.05 * (rng.random::<f64>() - 0.5));
        let model = WignerModel::from_dataset(&ds, dim(d)).unwrap();
        let v = random_stack(&mut rng, r, d);
        let g = model.gradient(&v, gamma).unwrap().mapv(|z| z * 2.0);
        let f = |v: &CMatrix| {
            let (l2, l1) = model.loss(v).unwrap();
            l2 + gamma * l1
        };
        let h = 1e-5;
        let mut fd = CMatrix::zeros(v.dim());
        for idx in 0..v.len() {
            let (a, b) = (idx / d, idx % d);
            for (unit, part) in [(C64::new(h, 0.0), 0), (C64::new(0.0, h), 1)] {
                let mut vp = v.clone();
                let mut vm = v.clone();
                vp[[a, b]] += unit;
                vm[[a, b]] -= unit;
                let dd = (f(&vp) - f(&vm)) / (2.0 * h);
                if part == 0 {
                    fd[[a, b]].re = dd;
                } else {
                    fd[[a, b]].im = dd;
                }
            }
        }
        linalg::frobenius(&(&fd - &g)) / linalg::frobenius(&g)
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for seed in 0..3 {
            let rel = finite_difference_check(seed, 0.0);
            assert!(rel <= 1e-5, "seed {seed}: relative error {rel:.3e}");
            let rel = finite_difference_check(seed + 10, 3e-3);
            assert!(rel <= 1e-5, "seed {seed} with L1: relative error {rel:.3e}");
        }
    }

    #[test]
    fn gradient_stationary_at_truth_and_affine_in_data() {
        let (probes, grid) = small_grids();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let ch = random_channel(dim(6), 2, &mut rng).unwrap();
        let ds = simulate_dataset(&ch, &probes, &grid, 0, 0).unwrap();
        let g = euclidean_gradient(&ch.stacked(), &ds, 0.0).unwrap();
        assert!(linalg::frobenius(&g) <= 1e-8);

        let v = random_stack(&mut rng, 2, 6);
        let c = 1.7;
        let mut scaled = ds.clone();
        scaled.values.mapv_inplace(|w| c * w);
        let mut zero = ds.clone();
        zero.values.fill(0.0);
        let gy = euclidean_gradient(&v, &ds, 0.0).unwrap();
        let gcy = euclidean_gradient(&v, &scaled, 0.0).unwrap();
        let g0 = euclidean_gradient(&v, &zero, 0.0).unwrap();
        let expect = gy.mapv(|z| z * c) + g0.mapv(|z| z * (1.0 - c));
        assert!(linalg::frobenius(&(gcy - expect)) < 1e-10 * linalg::frobenius(&g0).max(1.0));
    }

    #[test]
    fn retraction_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let iso = retract(&random_stack(&mut rng, 2, 5)).unwrap();
        assert!(isometry_defect(iso.matrix()) < 1e-10);
        let again = retract(iso.matrix()).unwrap();
        assert!(linalg::frobenius(&(again.matrix() - iso.matrix())) < 1e-12);
        let doubled = retract(&iso.matrix().mapv(|z| z * 2.0)).unwrap();
        assert!(linalg::frobenius(&(doubled.matrix() - iso.matrix())) < 1e-12);

        let delta = random_stack(&mut rng, 2, 5);
        let delta = delta.mapv(|z| z * (1e-3 / linalg::frobenius(&delta)));
        let ret = retract(&(iso.matrix() + &delta)).unwrap();
        let first_order = iso.matrix() + &tangent_project(iso.matrix(), &delta);
        let err = linalg::frobenius(&(ret.matrix() - &first_order));
        assert!(err < 10.0 * 1e-6, "second-order error {err:.3e}");

        let mut deficient = CMatrix::zeros((10, 5));
        deficient[[0, 0]] = C64::new(1.0, 0.0);
        assert!(matches!(retract(&deficient), Err(Error::Retraction(_))));
    }

    #[test]
    fn identity_channel_round_trip_rank_one() {
        let probes = ProbeGrid::square(3, 1.0).unwrap();
        let grid = WignerGrid::square(9, 2.0).unwrap();
        let ds = simulate_dataset(&KrausSet::identity(dim(8)), &probes, &grid, 0, 0).unwrap();
        let cfg = ReconstructionConfig {
            rank: 1,
            dim: dim(8),
            gamma: 0.0,
            max_iters: 500,
            ..Default::default()
        };
        let (k, rep) = reconstruct(&ds, &cfg).unwrap();
        assert!(k.cptp_defect() <= 1e-6);
        // Choi fidelity of a rank-one channel with the identity: |Tr K|^2 / d^2.
        let tr = linalg::trace(&k.operators()[0]).norm_sqr() / 64.0;
        assert!(tr >= 0.999, "fidelity {tr}");
        assert!(rep.history.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn reconstruction_is_deterministic_and_monotone() {
        let (probes, grid) = small_grids();
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let ch = random_channel(dim(5), 2, &mut rng).unwrap();
        let ds = simulate_dataset(&ch, &probes, &grid, 200, 3).unwrap();
        let cfg = ReconstructionConfig {
            rank: 2,
            dim: dim(5),
            max_iters: 60,
            ..Default::default()
        };
        let (a, ra) = reconstruct(&ds, &cfg).unwrap();
        let (b, rb) = reconstruct(&ds, &cfg).unwrap();
        assert_eq!(a.stacked(), b.stacked());
        assert_eq!(ra, rb);
        assert!(ra.history.windows(2).all(|w| w[1] < w[0]));
        assert!((ra.total - (ra.l2 + cfg.gamma * ra.l1)).abs() < 1e-12);
        assert!(a.cptp_defect() <= 1e-6);
    }

    #[test]
    fn remixed_initial_kraus_give_same_channel() {
        let probes = ProbeGrid::square(3, 1.0).unwrap();
        let grid = WignerGrid::square(7, 1.8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let u = crate::fock::displacement(C64::new(0.3, -0.2), dim(4));
        let truth = unitary_channel(&u).unwrap();
        let ds = simulate_dataset(&truth, &probes, &grid, 0, 0).unwrap();
        let cfg = ReconstructionConfig {
            rank: 2,
            dim: dim(4),
            gamma: 0.0,
            max_iters: 4000,
            grad_tol: 1e-10,
            ..Default::default()
        };
        let init = initial_point(&cfg).unwrap();
        // Remix the two Kraus operators with a random 2 x 2 unitary.
        let w = linalg::polar_isometry(
            &CMatrix::from_shape_fn((2, 2), |_| C64::new(rng.random(), rng.random())),
            1e-12,
        )
        .unwrap()
        .unwrap();
        let remixed = linalg::kron(&w, &linalg::identity(4)).dot(init.matrix());
        let init2 = IsometryPoint::new(remixed, dim(4)).unwrap();
        let (a, _) = reconstruct_from(&ds, &cfg, init).unwrap();
        let (b, _) = reconstruct_from(&ds, &cfg, init2).unwrap();
        // The redundant Kraus operator shrinks only slowly (the loss is
        // quartic in it), which sets the optimizer tolerance here.
        let dist = a.choi().distance(&b.choi()).unwrap();
        assert!(dist <= 1e-4, "Choi distance {dist:.3e}");
    }

    #[test]
    fn extra_rank_does_not_lower_loss_on_noiseless_data() {
        let probes = ProbeGrid::square(3, 1.0).unwrap();
        let grid = WignerGrid::square(7, 1.8).unwrap();
        let u = crate::fock::displacement(C64::new(-0.2, 0.25), dim(4));
        let truth = unitary_channel(&u).unwrap();
        let ds = simulate_dataset(&truth, &probes, &grid, 0, 0).unwrap();
        let mut best = Vec::new();
        for rank in [1, 2, 3] {
            let cfg = ReconstructionConfig {
                rank,
                dim: dim(4),
                gamma: 0.0,
                max_iters: 4000,
                grad_tol: 1e-10,
                ..Default::default()
            };
            best.push(reconstruct(&ds, &cfg).unwrap().1.total);
        }
        assert!(best[0] <= 1e-10, "rank-1 loss {}", best[0]);
        for l in &best[1..] {
            assert!(best[0] - l <= 1e-10);
        }
    }

    #[test]
    fn unnormalized_data_and_bad_config_are_rejected() {
        let (probes, grid) = small_grids();
        let mut ds = simulate_dataset(&KrausSet::identity(dim(5)), &probes, &grid, 0, 0).unwrap();
        let cfg = ReconstructionConfig {
            rank: 1,
            dim: dim(5),
            ..Default::default()
        };
        ds.normalized = false;
        assert!(reconstruct(&ds, &cfg).is_err());
        ds.normalized = true;
        assert!(reconstruct(
            &ds,
            &ReconstructionConfig {
                gamma: -1.0,
                ..cfg.clone()
            }
        )
        .is_err());
        assert!(reconstruct(
            &ds,
            &ReconstructionConfig {
                rank: 0,
                ..cfg.clone()
            }
        )
        .is_err());
    }

    #[test]
    fn result_json_round_trip() {
        let (probes, grid) = small_grids();
        let ds = simulate_dataset(&KrausSet::identity(dim(5)), &probes, &grid, 0, 0).unwrap();
        let cfg = ReconstructionConfig {
            rank: 2,
            dim: dim(5),
            max_iters: 5,
            ..Default::default()
        };
        let (kraus, report) = reconstruct(&ds, &cfg).unwrap();
        let res = ReconstructionResult {
            config: cfg,
            kraus,
            report,
        };
        let s = res.to_json().unwrap();
        let v: serde_json::Value = serde_json::from_str(&s).unwrap();
        assert_eq!(v["schema"], RESULT_SCHEMA);
        assert!(v["loss"]["cptp_defect"].as_f64().unwrap() <= 1e-6);
        let back = ReconstructionResult::from_json(&s).unwrap();
        assert_eq!(back.kraus.stacked(), res.kraus.stacked());
        assert_eq!(back.report, res.report);
        assert_eq!(back.config, res.config);
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(24))]

            #[test]
            fn retraction_lands_on_the_manifold(seed in any::<u64>(), d in 2usize..7, r in 1usize..4) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let p = retract(&random_stack(&mut rng, r, d)).unwrap();
                prop_assert!(isometry_defect(p.matrix()) <= ISOMETRY_TOL);
                prop_assert!(p.to_kraus().unwrap().cptp_defect() <= 1e-6);
            }

            #[test]
            fn total_loss_is_l2_plus_weighted_l1(seed in any::<u64>(), gamma in 0.0f64..1e-2) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let (probes, grid) = small_grids();
                let ch = random_channel(dim(5), 2, &mut rng).unwrap();
                let ds = simulate_dataset(&ch, &probes, &grid, 200, seed).unwrap();
                let v = retract(&random_stack(&mut rng, 2, 5)).unwrap();
                let rep = loss(&v, &ds, gamma).unwrap();
                prop_assert!((rep.total - (rep.l2 + gamma * rep.l1)).abs() <= 1e-12 * rep.total.max(1.0));
            }

            #[test]
            fn tangent_projection_is_idempotent(seed in any::<u64>(), d in 2usize..6) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let v = retract(&random_stack(&mut rng, 2, d)).unwrap();
                let z = random_stack(&mut rng, 2, d);
                let t = tangent_project(v.matrix(), &z);
                let tt = tangent_project(v.matrix(), &t);
                prop_assert!(linalg::frobenius(&(&tt - &t)) <= 1e-10 * linalg::frobenius(&t).max(1.0));
            }
        }
    }
}

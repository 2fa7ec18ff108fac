//! Fidelities, leakage, truncation sweeps, error budgets and the decoder study.
//!
//! All logical-qubit figures use the binomial code space (`d_L = 2`):
//!
//! - process fidelity `F_pro = sum_i |Tr[U^dag K_i]|^2 / 4`
//! - leakage `L = 1 - Tr[I_L E(I_L / 2)]`
//! - average gate fidelity `F_avg = (2 F_pro + 1 - L) / 3`

use std::io::Write;

use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::{logical_ordered_basis, logical_ptm, TransferMatrix, PAULI_LABELS};
use crate::channel::{Channel, CoherenceTimes, KrausSet};
use crate::fock::{FockDim, Operator};
use crate::gates::{ideal_logical_x, BinomialCode, GateProcess, GateSequence};
use crate::linalg::{self, dagger, I};
use crate::{CMatrix, Error, Result, C64};

const LOGICAL_DIM: usize = 2;
/// Agreement required between the two closed forms of `F_avg`.
pub const FIDELITY_IDENTITY_TOL: f64 = 1e-12;
/// Budget contributions below this are treated as numerical noise.
pub const BUDGET_NEGATIVE_TOL: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FidelityReport {
    pub f_pro: f64,
    pub leakage: f64,
    pub f_avg: f64,
    /// `(sum |Tr U^dag K|^2 + 2 Tr[I_L E(I_L/2)]) / 6`, evaluated separately.
    pub f_avg_direct: f64,
    pub dim_logical: usize,
}

/// `sum_i |Tr[U^dag K_i]|^2 / 4` for a logical-subspace operator `u`.
pub fn process_fidelity_kraus<C: Channel>(
    channel: &C,
    u: &Operator,
    code: &BinomialCode,
) -> Result<f64> {
    code.dim().check(channel.dim(), "process fidelity")?;
    code.dim().check(u.dim(), "target operator")?;
    Ok(channel.kraus_overlap(u.matrix()) / (LOGICAL_DIM * LOGICAL_DIM) as f64)
}

/// `Tr[I_L E(I_L / 2)]`, the population kept in the code space.
fn retained_population<C: Channel>(channel: &C, code: &BinomialCode) -> f64 {
    let pl = code.projector();
    let out = channel.apply_matrix(&pl.mapv(|z| z * 0.5));
    linalg::trace(&pl.dot(&out)).re
}

pub fn leakage<C: Channel>(channel: &C, code: &BinomialCode) -> Result<f64> {
    code.dim().check(channel.dim(), "leakage")?;
    Ok(1.0 - retained_population(channel, code))
}

pub fn avg_gate_fidelity<C: Channel>(
    channel: &C,
    u: &Operator,
    code: &BinomialCode,
) -> Result<FidelityReport> {
    code.dim().check(channel.dim(), "average gate fidelity")?;
    code.dim().check(u.dim(), "target operator")?;
    let overlap = channel.kraus_overlap(u.matrix());
    let kept = retained_population(channel, code);
    let dl = LOGICAL_DIM as f64;
    let f_pro = overlap / (dl * dl);
    let leak = 1.0 - kept;
    let f_avg = (dl * f_pro + 1.0 - leak) / (dl + 1.0);
    let f_avg_direct = (overlap + dl * kept) / (dl * (dl + 1.0));
    if (f_avg - f_avg_direct).abs() > FIDELITY_IDENTITY_TOL {
        return Err(Error::Numerical(format!(
            "average-fidelity forms disagree: {f_avg} vs {f_avg_direct}"
        )));
    }
    Ok(FidelityReport {
        f_pro,
        leakage: leak,
        f_avg,
        f_avg_direct,
        dim_logical: LOGICAL_DIM,
    })
}

/// Monte-Carlo estimate of `E_psi <psi|U^dag E(|psi><psi|) U|psi>` over
/// Haar-random logical states: returns `(mean, standard error)`.
pub fn haar_average_fidelity<C: Channel>(
    channel: &C,
    u: &Operator,
    code: &BinomialCode,
    samples: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    code.dim().check(channel.dim(), "Monte-Carlo fidelity")?;
    if samples < 2 {
        return Err(Error::Validation(
            "at least two samples are required".into(),
        ));
    }
    let values: Vec<f64> = (0..samples)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            let mut g = || -> f64 { StandardNormal.sample(&mut rng) };
            let (a, b) = (C64::new(g(), g()), C64::new(g(), g()));
            let norm = (a.norm_sqr() + b.norm_sqr()).sqrt();
            let psi = code.encode(a / norm, b / norm);
            let amps = psi.amplitudes();
            let target = u.matrix().dot(amps);
            let out = channel.apply_matrix(&linalg::outer(amps, amps));
            target.mapv(|z| z.conj()).dot(&out.dot(&target)).re
        })
        .collect();
    let n = samples as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok((mean, (var / n).sqrt()))
}

/// Projector onto Fock levels `0..=cut`.
pub fn fock_projector(dim: FockDim, cut: usize) -> CMatrix {
    let d = dim.get();
    Array2::from_shape_fn((d, d), |(a, b)| {
        if a == b && a <= cut {
            C64::new(1.0, 0.0)
        } else {
            C64::new(0.0, 0.0)
        }
    })
}

/// Fidelity of the trace-normalized Choi matrices of `a` and `b` after
/// restricting both channels' inputs to the range of `projector`.
pub fn process_fidelity_subspace(a: &KrausSet, b: &KrausSet, projector: &CMatrix) -> Result<f64> {
    a.dim().check(b.dim(), "process fidelity")?;
    let restrict = |k: &KrausSet| -> CMatrix {
        let d = k.dim().get();
        let mut f = CMatrix::zeros((d * d, k.rank()));
        for (i, op) in k.operators().iter().enumerate() {
            f.column_mut(i).assign(&linalg::vec(&op.dot(projector)));
        }
        f
    };
    let fa = restrict(a);
    let fb = restrict(b);
    let na: f64 = fa.iter().map(|z| z.norm_sqr()).sum();
    let nb: f64 = fb.iter().map(|z| z.norm_sqr()).sum();
    if na <= 0.0 || nb <= 0.0 {
        return Err(Error::NotAChannel(
            "Choi matrix vanishes on the selected subspace".into(),
        ));
    }
    // For rho = A A^dag and sigma = B B^dag, Tr sqrt(sqrt(rho) sigma sqrt(rho)) = ||A^dag B||_1.
    let tn = linalg::trace_norm(&dagger(&fa).dot(&fb))?;
    Ok((tn * tn / (na * nb)).min(1.0))
}

/// Choi-state fidelity, optionally restricting inputs to Fock levels `0..=cut`.
pub fn process_fidelity_choi(
    a: &KrausSet,
    b: &KrausSet,
    subspace_cut: Option<usize>,
) -> Result<f64> {
    let d = a.dim();
    let proj = match subspace_cut {
        Some(c) if c >= d.get() => {
            return Err(Error::Dimension(format!(
                "subspace cut {c} outside dimension {d}"
            )));
        }
        Some(c) => fock_projector(d, c),
        None => linalg::identity(d.get()),
    };
    process_fidelity_subspace(a, b, &proj)
}

pub fn truncation_sweep(
    channel: &KrausSet,
    reference: &KrausSet,
    cuts: &[usize],
) -> Result<Vec<(usize, f64)>> {
    if cuts.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Validation("cuts must be strictly ascending".into()));
    }
    cuts.iter()
        .map(|&c| Ok((c, process_fidelity_choi(channel, reference, Some(c))?)))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BudgetEntry {
    pub channel: String,
    pub contribution: f64,
    /// Set when a small negative value (non-additivity) was clipped to zero.
    pub clipped: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorBudget {
    pub baseline_infidelity: f64,
    pub all_on_infidelity: f64,
    pub entries: Vec<BudgetEntry>,
    pub out_of_scope: Vec<String>,
}

impl ErrorBudget {
    pub fn contribution_sum(&self) -> f64 {
        self.entries.iter().map(|e| e.contribution).sum()
    }

    /// `channel,contribution` rows, baseline first.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["channel", "contribution"])?;
        wtr.write_record([
            "decoherence-free baseline".to_string(),
            self.baseline_infidelity.to_string(),
        ])?;
        for e in &self.entries {
            wtr.write_record([e.channel.clone(), e.contribution.to_string()])?;
        }
        for label in &self.out_of_scope {
            wtr.write_record([label.clone(), "not modeled".to_string()])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

fn gate_infidelity(seq: &GateSequence, times: &CoherenceTimes, code: &BinomialCode) -> Result<f64> {
    let process = GateProcess::new(seq, times, code.dim())?;
    Ok(1.0 - avg_gate_fidelity(&process, &ideal_logical_x(code), code)?.f_avg)
}

/// Infidelity added by each cavity decoherence mechanism acting alone,
/// relative to the decoherence-free gate.
pub fn error_budget(
    seq: &GateSequence,
    times: &CoherenceTimes,
    code: &BinomialCode,
) -> Result<ErrorBudget> {
    times.validate()?;
    let baseline = gate_infidelity(seq, &CoherenceTimes::NONE, code)?;
    let all_on = gate_infidelity(seq, times, code)?;
    let mut entries = Vec::new();
    for (label, t) in [
        ("cavity photon loss (T1)", times.loss_only()),
        ("cavity pure dephasing (T2)", times.dephasing_only()),
    ] {
        let raw = gate_infidelity(seq, &t, code)? - baseline;
        let clipped = raw < 0.0;
        if raw < -BUDGET_NEGATIVE_TOL {
            log::warn!("{label}: contribution {raw:.3e} is negative beyond tolerance");
        }
        entries.push(BudgetEntry {
            channel: label.to_string(),
            contribution: raw.max(0.0),
            clipped,
        });
    }
    Ok(ErrorBudget {
        baseline_infidelity: baseline,
        all_on_infidelity: all_on,
        entries,
        out_of_scope: vec![
            "ancilla qubit decay (not modeled)".to_string(),
            "ancilla qubit dephasing (not modeled)".to_string(),
        ],
    })
}

/// How the ancilla is prepared before the decoder swap.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum AncillaPrep {
    /// The ancilla starts in the same qubit state that was encoded into the
    /// cavity, so full leakage returns the input unchanged.
    #[default]
    Input,
    /// The ancilla starts in its ground state.
    Ground,
}

/// Qubit state `a|0> + b|1>` for each logical cardinal state, in the
/// order of [`BinomialCode::cardinal_states`].
fn cardinal_qubit_states() -> [Array1<C64>; 6] {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let c = |a: C64, b: C64| ndarray::arr1(&[a, b]);
    let one = C64::new(1.0, 0.0);
    let zero = C64::new(0.0, 0.0);
    let hr = C64::new(h, 0.0);
    [
        c(one, zero),
        c(zero, one),
        c(hr, hr),
        c(hr, -hr),
        c(hr, I * h),
        c(hr, -I * h),
    ]
}

/// The minimal decoder on `ancilla (x) cavity`: swaps the ancilla with the
/// logical qubit and acts trivially on the error space.
pub fn minimal_decoder(code: &BinomialCode) -> Result<CMatrix> {
    let d = code.dim().get();
    let basis = logical_ordered_basis(code)?;
    let q = basis.matrix();
    let ket = |anc: usize, k: usize| -> Array1<C64> {
        let mut v = Array1::zeros(2 * d);
        v.slice_mut(ndarray::s![anc * d..(anc + 1) * d])
            .assign(&q.column(k));
        v
    };
    let mut u = CMatrix::zeros((2 * d, 2 * d));
    for a in 0..2 {
        for j in 0..2 {
            u = u + linalg::outer(&ket(j, a), &ket(a, j));
        }
        for k in 2..d {
            u = u + linalg::outer(&ket(a, k), &ket(a, k));
        }
    }
    Ok(u)
}

fn qubit_paulis() -> [CMatrix; 4] {
    let o = C64::new(1.0, 0.0);
    let z = C64::new(0.0, 0.0);
    [
        ndarray::array![[o, z], [z, o]],
        ndarray::array![[z, o], [o, z]],
        ndarray::array![[z, -I], [I, z]],
        ndarray::array![[o, z], [z, -o]],
    ]
}

/// PTM estimate from outputs of the six cardinal inputs (ordered
/// `+Z, -Z, +X, -X, +Y, -Y` as for the code's cardinal states).
fn ptm_from_cardinal_outputs(outputs: &[CMatrix; 6]) -> Array2<f64> {
    let p = qubit_paulis();
    let expect = |m: &CMatrix, i: usize| linalg::trace(&p[i].dot(m)).re;
    // Input Pauli j -> (plus, minus) indices.
    let pairs = [(2usize, 3usize), (4, 5), (0, 1)];
    let mut r = Array2::zeros((4, 4));
    for i in 0..4 {
        let mean: f64 = outputs.iter().map(|o| expect(o, i)).sum::<f64>() / 6.0;
        r[[i, 0]] = mean;
        for (col, &(pl, mi)) in pairs.iter().enumerate() {
            r[[i, col + 1]] = 0.5 * (expect(&outputs[pl], i) - expect(&outputs[mi], i));
        }
    }
    r
}

/// Decoded and direct logical PTMs of `channel`.
pub fn decoder_study<C: Channel>(
    channel: &C,
    code: &BinomialCode,
    prep: AncillaPrep,
) -> Result<(TransferMatrix, TransferMatrix)> {
    code.dim().check(channel.dim(), "decoder study")?;
    let d = code.dim().get();
    let decoder = minimal_decoder(code)?;
    let decoder_dag = dagger(&decoder);
    let qubits = cardinal_qubit_states();
    let cavity_inputs = code.cardinal_states();
    let ground = qubits[0].clone();

    let outputs: Vec<CMatrix> = cavity_inputs
        .iter()
        .zip(qubits.iter())
        .map(|(psi, q)| {
            let rho = linalg::outer(psi.amplitudes(), psi.amplitudes());
            let cav = channel.apply_matrix(&rho);
            let anc_state = match prep {
                AncillaPrep::Input => q,
                AncillaPrep::Ground => &ground,
            };
            let anc = linalg::outer(anc_state, anc_state);
            let joint = decoder.dot(&linalg::kron(&anc, &cav)).dot(&decoder_dag);
            // Trace out the cavity.
            let mut meas = CMatrix::zeros((2, 2));
            for a in 0..2 {
                for b in 0..2 {
                    meas[[a, b]] = (0..d).map(|n| joint[[a * d + n, b * d + n]]).sum();
                }
            }
            meas
        })
        .collect();
    let outputs: [CMatrix; 6] = outputs.try_into().expect("six cardinal states");
    let labels: Vec<String> = PAULI_LABELS.iter().map(|s| s.to_string()).collect();
    let decoded = TransferMatrix {
        elements: ptm_from_cardinal_outputs(&outputs),
        row_labels: labels.clone(),
        col_labels: labels,
    };
    Ok((decoded, logical_ptm(channel, code)?))
}

/// Moves each logical state to its own error state with probability `p`
/// (`|0_L> -> (|0> - |4>)/sqrt 2`, `|1_L> -> |1>`), identity elsewhere.
pub fn leakage_injection_channel(code: &BinomialCode, p: f64) -> Result<KrausSet> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Validation(format!(
            "leakage probability must be in [0, 1], got {p}"
        )));
    }
    let d = code.dim().get();
    let basis = logical_ordered_basis(code)?;
    let pl = code.projector();
    let keep = pl.mapv(|z| z * (1.0 - p).sqrt()) + (linalg::identity(d) - &pl);
    let jump = (linalg::outer(
        basis.vector(2).amplitudes(),
        code.logical_zero().amplitudes(),
    ) + linalg::outer(
        basis.vector(3).amplitudes(),
        code.logical_one().amplitudes(),
    ))
    .mapv(|z| z * p.sqrt());
    let ops = if p == 0.0 {
        vec![keep]
    } else if p == 1.0 {
        vec![linalg::identity(d) - &pl, jump]
    } else {
        vec![keep, jump]
    };
    KrausSet::certified(ops)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{compose, random_channel, unitary_channel};
    use crate::gates::{logical_x_with_identity, noisy_gate_process, x_gate_sequence};
    use rand::Rng;

    fn dim(d: usize) -> FockDim {
        FockDim::new(d).unwrap()
    }

    /// Dense fidelity `(Tr sqrt(sqrt(rho) sigma sqrt(rho)))^2` of normalized
    /// Choi matrices, with inputs projected by `p`.
    fn dense_choi_fidelity(a: &KrausSet, b: &KrausSet, p: &CMatrix) -> f64 {
        let proj = |k: &KrausSet| {
            let ops: Vec<CMatrix> = k.operators().iter().map(|o| o.dot(p)).collect();
            let c = crate::channel::kraus_to_choi(&KrausSet::new(ops).unwrap())
                .matrix()
                .clone();
            let t = linalg::trace(&c);
            c.mapv(|z| z / t)
        };
        let ra = proj(a);
        let rb = proj(b);
        let s = linalg::sqrtm_psd(&ra).unwrap();
        let inner = s.dot(&rb).dot(&s);
        let (w, _) = linalg::eigh(&linalg::hermitian_part(&inner)).unwrap();
        // Low-rank Choi states: round-off eigenvalues near zero would add
        // sqrt(eps)-sized terms.
        let f: f64 = w.iter().filter(|&&x| x > 1e-12).map(|x| x.sqrt()).sum();
        f * f
    }

    #[test]
    fn process_fidelity_kraus_examples() {
        let code = BinomialCode::new(dim(10)).unwrap();
        let u = ideal_logical_x(&code);
        let x = unitary_channel(&logical_x_with_identity(&code)).unwrap();
        assert!((process_fidelity_kraus(&x, &u, &code).unwrap() - 1.0).abs() < 1e-12);
        let id = KrausSet::identity(dim(10));
        assert!(process_fidelity_kraus(&id, &u, &code).unwrap().abs() < 1e-12);
    }

    #[test]
    fn choi_fidelity_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let c = random_channel(dim(4), 3, &mut rng).unwrap();
        assert!((process_fidelity_choi(&c, &c, None).unwrap() - 1.0).abs() < 1e-10);

        // Completely depolarizing qubit channel: Kraus sigma_i / 2.
        let paulis = qubit_paulis();
        let dep =
            KrausSet::certified(paulis.iter().map(|p| p.mapv(|z| z * 0.5)).collect()).unwrap();
        let id = KrausSet::identity(dim(2));
        assert!((process_fidelity_choi(&id, &dep, None).unwrap() - 0.25).abs() < 1e-12);

        let other = random_channel(dim(4), 2, &mut rng).unwrap();
        let ab = process_fidelity_choi(&c, &other, None).unwrap();
        let ba = process_fidelity_choi(&other, &c, None).unwrap();
        assert!((ab - ba).abs() < 1e-10);
        let dense = dense_choi_fidelity(&c, &other, &linalg::identity(4));
        assert!((ab - dense).abs() < 1e-8);

        let cut = process_fidelity_choi(&c, &other, Some(1)).unwrap();
        let dense_cut = dense_choi_fidelity(&c, &other, &fock_projector(dim(4), 1));
        assert!((cut - dense_cut).abs() < 1e-8);
        assert!(process_fidelity_choi(&c, &other, Some(4)).is_err());
    }

    #[test]
    fn truncation_sweep_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        let c = random_channel(dim(8), 3, &mut rng).unwrap();
        for (_, f) in truncation_sweep(&c, &c, &[1, 3, 5, 7]).unwrap() {
            assert!((f - 1.0).abs() < 1e-10);
        }
        assert!(truncation_sweep(&c, &c, &[3, 2]).is_err());

        // Channels that preserve the first three levels: cut 2 equals the
        // dense fidelity of the projected Choi states.
        let code = BinomialCode::new(dim(8)).unwrap();
        let a = unitary_channel(&logical_x_with_identity(&code)).unwrap();
        let b = compose(&leakage_injection_channel(&code, 0.2).unwrap(), &a).unwrap();
        let sweep = truncation_sweep(&a, &b, &[2]).unwrap();
        let oracle = dense_choi_fidelity(&a, &b, &fock_projector(dim(8), 2));
        assert!(
            (sweep[0].1 - oracle).abs() < 1e-8,
            "{} vs {oracle}",
            sweep[0].1
        );
        let logical = process_fidelity_subspace(&a, &b, &code.projector()).unwrap();
        let logical_oracle = dense_choi_fidelity(&a, &b, &code.projector());
        assert!((logical - logical_oracle).abs() < 1e-8);
    }

    #[test]
    fn leakage_examples() {
        let code = BinomialCode::new(dim(10)).unwrap();
        assert!(leakage(&KrausSet::identity(dim(10)), &code).unwrap().abs() < 1e-12);
        // |0_L> fully to (|0> - |4>)/sqrt 2, |1_L> fixed.
        let basis = logical_ordered_basis(&code).unwrap();
        let z = code.logical_zero().amplitudes();
        let e = basis.vector(2);
        let swap = linalg::outer(e.amplitudes(), z) + linalg::outer(z, e.amplitudes());
        let rest = linalg::identity(10)
            - linalg::outer(z, z)
            - linalg::outer(e.amplitudes(), e.amplitudes());
        let u = Operator::unitary(swap + rest).unwrap();
        let ch = unitary_channel(&u).unwrap();
        assert!((leakage(&ch, &code).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn avg_fidelity_examples() {
        let code = BinomialCode::new(dim(10)).unwrap();
        let u = ideal_logical_x(&code);
        let x = unitary_channel(&logical_x_with_identity(&code)).unwrap();
        let r = avg_gate_fidelity(&x, &u, &code).unwrap();
        assert!((r.f_avg - 1.0).abs() < 1e-12);
        let r = avg_gate_fidelity(&KrausSet::identity(dim(10)), &u, &code).unwrap();
        assert!((r.f_avg - 1.0 / 3.0).abs() < 1e-12);
        let leak = leakage_injection_channel(&code, 0.3).unwrap();
        let r = avg_gate_fidelity(&compose(&leak, &x).unwrap(), &u, &code).unwrap();
        assert!((r.f_avg - (2.0 * r.f_pro + 1.0 - r.leakage) / 3.0).abs() < 1e-12);
        assert!((r.leakage - 0.3).abs() < 1e-12);
    }

    #[test]
    fn monte_carlo_matches_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let code = BinomialCode::new(dim(8)).unwrap();
        let u = ideal_logical_x(&code);
        for _ in 0..3 {
            let r = rng.random_range(1..=4);
            let ch = random_channel(dim(8), r, &mut rng).unwrap();
            let exact = avg_gate_fidelity(&ch, &u, &code).unwrap();
            let (mean, se) = haar_average_fidelity(&ch, &u, &code, 10_000, rng.random()).unwrap();
            assert!(
                (mean - exact.f_avg).abs() <= 3.0 * se,
                "{mean} vs {} (se {se})",
                exact.f_avg
            );
        }
    }

    #[test]
    fn composed_gate_fidelity_is_near_99_4_percent() {
        let code = BinomialCode::new(dim(32)).unwrap();
        let process = GateProcess::new(&x_gate_sequence(), &CoherenceTimes::NONE, dim(32)).unwrap();
        let r = avg_gate_fidelity(&process, &ideal_logical_x(&code), &code).unwrap();
        assert!((r.f_avg - 0.994).abs() <= 0.005, "{}", r.f_avg);
        assert!((0.0..=1.0).contains(&r.leakage));
    }

    #[test]
    fn error_budget_examples() {
        let code = BinomialCode::new(dim(32)).unwrap();
        let seq = x_gate_sequence();
        let none = error_budget(&seq, &CoherenceTimes::NONE, &code).unwrap();
        assert!(none.entries.iter().all(|e| e.contribution.abs() < 1e-12));
        assert!((none.baseline_infidelity - 0.006).abs() <= 0.005);

        let b = error_budget(&seq, &CoherenceTimes::MEASURED, &code).unwrap();
        assert!(b
            .entries
            .iter()
            .all(|e| e.contribution >= -BUDGET_NEGATIVE_TOL));
        let excess = b.all_on_infidelity - b.baseline_infidelity;
        assert!(((b.contribution_sum() - excess) / excess).abs() <= 0.2);
        let mut csv = Vec::new();
        b.write_csv(&mut csv).unwrap();
        let csv = String::from_utf8(csv).unwrap();
        assert!(csv.starts_with("channel,contribution\n"));
        assert!(csv.contains("not modeled"));
    }

    #[test]
    fn noisy_gate_agrees_with_structured_process() {
        let code = BinomialCode::new(dim(12)).unwrap();
        let u = ideal_logical_x(&code);
        let seq = x_gate_sequence();
        let kraus = noisy_gate_process(&seq, &CoherenceTimes::MEASURED, dim(12)).unwrap();
        let process = GateProcess::new(&seq, &CoherenceTimes::MEASURED, dim(12)).unwrap();
        let a = avg_gate_fidelity(&kraus, &u, &code).unwrap();
        let b = avg_gate_fidelity(&process, &u, &code).unwrap();
        assert!((a.f_avg - b.f_avg).abs() < 1e-8);
    }

    #[test]
    fn decoder_study_examples() {
        let code = BinomialCode::new(dim(10)).unwrap();
        let x = unitary_channel(&logical_x_with_identity(&code)).unwrap();
        let diag = Array2::from_diag(&ndarray::arr1(&[1.0, 1.0, -1.0, -1.0]));
        for prep in [AncillaPrep::Input, AncillaPrep::Ground] {
            let (dec, direct) = decoder_study(&x, &code, prep).unwrap();
            assert!((&dec.elements - &diag).iter().all(|v| v.abs() < 1e-12));
            assert!((&direct.elements - &diag).iter().all(|v| v.abs() < 1e-12));
        }

        let full = leakage_injection_channel(&code, 1.0).unwrap();
        let (dec, direct) = decoder_study(&full, &code, AncillaPrep::Input).unwrap();
        assert!((&dec.elements - &Array2::<f64>::eye(4))
            .iter()
            .all(|v| v.abs() < 1e-12));
        assert!(direct.elements[[0, 0]].abs() < 1e-12);

        let mut rng = ChaCha8Rng::seed_from_u64(34);
        let ch = random_channel(dim(10), 3, &mut rng).unwrap();
        for prep in [AncillaPrep::Input, AncillaPrep::Ground] {
            let (dec, _) = decoder_study(&ch, &code, prep).unwrap();
            assert!((dec.elements[[0, 0]] - 1.0).abs() < 1e-10);
            assert!(dec.elements.row(0).iter().skip(1).all(|v| v.abs() < 1e-10));
        }
    }

    #[test]
    fn decoder_is_unitary() {
        let code = BinomialCode::new(dim(8)).unwrap();
        let u = minimal_decoder(&code).unwrap();
        assert!(linalg::frobenius(&(dagger(&u).dot(&u) - linalg::identity(16))) < 1e-12);
    }

    #[test]
    fn fidelity_bounds_on_random_channels() {
        let mut rng = ChaCha8Rng::seed_from_u64(35);
        let code = BinomialCode::new(dim(8)).unwrap();
        let u = ideal_logical_x(&code);
        for _ in 0..20 {
            let r = rng.random_range(1..=4);
            let ch = random_channel(dim(8), r, &mut rng).unwrap();
            let rep = avg_gate_fidelity(&ch, &u, &code).unwrap();
            for v in [rep.f_pro, rep.leakage, rep.f_avg] {
                assert!((-1e-12..=1.0 + 1e-12).contains(&v));
            }
        }
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;
        use rand::SeedableRng;
        use rand_chacha::ChaCha8Rng;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(24))]

            #[test]
            fn fidelities_are_probabilities_and_consistent(seed in any::<u64>(), d in 6usize..10, r in 1usize..5) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let code = BinomialCode::new(dim(d)).unwrap();
                let ch = random_channel(dim(d), r, &mut rng).unwrap();
                let rep = avg_gate_fidelity(&ch, &ideal_logical_x(&code), &code).unwrap();
                for v in [rep.f_pro, rep.leakage, rep.f_avg] {
                    prop_assert!((-1e-12..=1.0 + 1e-12).contains(&v), "{v}");
                }
                let n = rep.dim_logical as f64;
                prop_assert!((rep.f_avg - (n * rep.f_pro + 1.0 - rep.leakage) / (n + 1.0)).abs() <= 1e-12);
                prop_assert!((rep.f_avg - rep.f_avg_direct).abs() <= FIDELITY_IDENTITY_TOL);
            }

            #[test]
            fn subspace_fidelity_is_bounded(seed in any::<u64>(), cut in 0usize..6) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let a = random_channel(dim(6), 2, &mut rng).unwrap();
                let b = random_channel(dim(6), 3, &mut rng).unwrap();
                let f = process_fidelity_choi(&a, &b, Some(cut)).unwrap();
                prop_assert!((-1e-12..=1.0 + 1e-12).contains(&f));
                prop_assert!((process_fidelity_choi(&a, &a, Some(cut)).unwrap() - 1.0).abs() < 1e-10);
            }
        }
    }
}

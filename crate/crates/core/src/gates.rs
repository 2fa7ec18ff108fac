//! Binomial code and the SNAP-displacement logical X gate.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::channel::{
    choi_to_kraus, unitary_channel, CavityDecay, Channel, CoherenceTimes, DecoherenceParams,
    KrausSet,
};
use crate::fock::{displacement, fock_state, snap, FockDim, Operator, StateVector};
use crate::linalg::{self, dagger, outer};
use crate::{CMatrix, Error, Result, C64};

/// Default duration of a displacement pulse (us).
pub const DISPLACEMENT_DURATION_US: f64 = 0.1;
/// Default duration of a SNAP pulse (us).
pub const SNAP_DURATION_US: f64 = 0.7;

/// Lowest-order binomial code: `|0_L> = |2>`, `|1_L> = (|0> + |4>)/sqrt 2`.
#[derive(Clone, Debug, PartialEq)]
pub struct BinomialCode {
    dim: FockDim,
    zero: StateVector,
    one: StateVector,
}

impl BinomialCode {
    pub fn new(dim: FockDim) -> Result<Self> {
        if dim.get() < 5 {
            return Err(Error::Dimension(format!(
                "binomial code needs Fock |4>, dimension {dim} is too small"
            )));
        }
        let zero = fock_state(2, dim)?;
        let h = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        let one = fock_state(0, dim)?.superpose(h, &fock_state(4, dim)?, h)?;
        Ok(BinomialCode { dim, zero, one })
    }

    pub fn dim(&self) -> FockDim {
        self.dim
    }

    pub fn logical_zero(&self) -> &StateVector {
        &self.zero
    }

    pub fn logical_one(&self) -> &StateVector {
        &self.one
    }

    /// `|0_L><0_L| + |1_L><1_L|`.
    pub fn projector(&self) -> CMatrix {
        outer(self.zero.amplitudes(), self.zero.amplitudes())
            + outer(self.one.amplitudes(), self.one.amplitudes())
    }

    /// `a |0_L> + b |1_L>`.
    pub fn encode(&self, a: C64, b: C64) -> StateVector {
        self.zero
            .superpose(a, &self.one, b)
            .expect("code states share a dimension")
    }

    /// Six cardinal states in the order `0, 1, +, -, +i, -i`.
    pub fn cardinal_states(&self) -> [StateVector; 6] {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let one = C64::new(1.0, 0.0);
        let zero = C64::new(0.0, 0.0);
        [
            self.encode(one, zero),
            self.encode(zero, one),
            self.encode(C64::new(h, 0.0), C64::new(h, 0.0)),
            self.encode(C64::new(h, 0.0), C64::new(-h, 0.0)),
            self.encode(C64::new(h, 0.0), C64::new(0.0, h)),
            self.encode(C64::new(h, 0.0), C64::new(0.0, -h)),
        ]
    }
}

/// One operation of a SNAP-displacement gate sequence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum GateStep {
    Displace {
        /// `[re, im]`
        alpha: [f64; 2],
        dur_us: f64,
    },
    Snap {
        phases: Vec<f64>,
        dur_us: f64,
    },
}

impl GateStep {
    pub fn displace(alpha: C64) -> Self {
        GateStep::Displace {
            alpha: [alpha.re, alpha.im],
            dur_us: DISPLACEMENT_DURATION_US,
        }
    }

    pub fn snap(phases: Vec<f64>) -> Self {
        GateStep::Snap {
            phases,
            dur_us: SNAP_DURATION_US,
        }
    }

    pub fn duration_us(&self) -> f64 {
        match self {
            GateStep::Displace { dur_us, .. } | GateStep::Snap { dur_us, .. } => *dur_us,
        }
    }

    pub fn with_duration(mut self, t: f64) -> Self {
        match &mut self {
            GateStep::Displace { dur_us, .. } | GateStep::Snap { dur_us, .. } => *dur_us = t,
        }
        self
    }

    pub fn unitary(&self, dim: FockDim) -> Result<Operator> {
        match self {
            GateStep::Displace { alpha, .. } => Ok(displacement(C64::new(alpha[0], alpha[1]), dim)),
            GateStep::Snap { phases, .. } => snap(phases, dim),
        }
    }
}

/// Time-ordered list of gate steps (first element acts first).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GateSequence {
    pub steps: Vec<GateStep>,
}

impl GateSequence {
    pub fn new(steps: Vec<GateStep>) -> Result<Self> {
        let seq = GateSequence { steps };
        seq.validate()?;
        Ok(seq)
    }

    pub fn validate(&self) -> Result<()> {
        for (i, step) in self.steps.iter().enumerate() {
            let t = step.duration_us();
            if !(t >= 0.0) || !t.is_finite() {
                return Err(Error::Validation(format!(
                    "step {i} has invalid duration {t}"
                )));
            }
        }
        Ok(())
    }

    pub fn total_duration_us(&self) -> f64 {
        self.steps.iter().map(GateStep::duration_us).sum()
    }

    /// Highest Fock level addressed by any SNAP step, plus one.
    pub fn snap_levels(&self) -> usize {
        self.steps
            .iter()
            .map(|s| match s {
                GateStep::Snap { phases, .. } => phases.len(),
                GateStep::Displace { .. } => 0,
            })
            .max()
            .unwrap_or(0)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let seq: GateSequence = serde_json::from_str(s)?;
        seq.validate()?;
        Ok(seq)
    }
}

// Displacement amplitudes and SNAP phase vectors of the
// binomial-code X gate (4 displacements interleaved with 3 SNAPs).
const X_GATE_DISPLACEMENTS: [f64; 4] = [0.610, 0.612, -0.612, -0.610];
const X_GATE_SNAP_1: [f64; 10] = [
    -0.67791071,
    -0.09477794,
    -1.38876256,
    0.53945346,
    0.31723896,
    -1.30273005,
    0.10376766,
    2.65894245,
    -1.10789012,
    0.50023422,
];
const X_GATE_SNAP_2: [f64; 10] = [
    0.,
    2.7514428,
    1.55112927,
    2.31904201,
    -1.11177419,
    1.06874247,
    0.33546735,
    -0.44872477,
    -0.77601542,
    -0.73785501,
];
const X_GATE_SNAP_3: [f64; 10] = [
    0.45755119,
    1.03469991,
    -0.22172176,
    1.70482232,
    1.49607879,
    -0.12840042,
    1.27637479,
    -2.36464223,
    0.,
    1.66335354,
];

/// `D(0.610) S(t1) D(0.612) S(t2) D(-0.612) S(t3) D(-0.610)` in time order,
/// 2.5 us in total.
pub fn x_gate_sequence() -> GateSequence {
    let d = |x: f64| GateStep::displace(C64::new(x, 0.0));
    GateSequence {
        steps: vec![
            d(X_GATE_DISPLACEMENTS[0]),
            GateStep::snap(X_GATE_SNAP_1.to_vec()),
            d(X_GATE_DISPLACEMENTS[1]),
            GateStep::snap(X_GATE_SNAP_2.to_vec()),
            d(X_GATE_DISPLACEMENTS[2]),
            GateStep::snap(X_GATE_SNAP_3.to_vec()),
            d(X_GATE_DISPLACEMENTS[3]),
        ],
    }
}

fn check_snap_reach(seq: &GateSequence, dim: FockDim) -> Result<()> {
    let levels = seq.snap_levels();
    if levels > dim.get() {
        return Err(Error::Dimension(format!(
            "sequence addresses Fock |{}> but dimension is {dim}",
            levels - 1
        )));
    }
    Ok(())
}

/// Product of the step unitaries, last step leftmost.
pub fn compose_unitary(seq: &GateSequence, dim: FockDim) -> Result<Operator> {
    check_snap_reach(seq, dim)?;
    let mut u = linalg::identity(dim.get());
    for step in &seq.steps {
        u = step.unitary(dim)?.matrix().dot(&u);
    }
    Operator::unitary(u)
}

/// `|0_L><1_L| + |1_L><0_L|`, zero outside the code space.
pub fn ideal_logical_x(code: &BinomialCode) -> Operator {
    let z = code.logical_zero().amplitudes();
    let o = code.logical_one().amplitudes();
    Operator::new(outer(z, o) + outer(o, z)).expect("square by construction")
}

/// Ideal logical X extended by the identity on the code's orthogonal complement.
pub fn logical_x_with_identity(code: &BinomialCode) -> Operator {
    let x = ideal_logical_x(code).into_matrix();
    let rest = linalg::identity(code.dim().get()) - code.projector();
    Operator::unitary(x + rest).expect("X_L plus identity on the complement is unitary")
}

/// A gate sequence with cavity decoherence acting during every step.
///
/// Each step applies the decay accumulated over its duration first, then its
/// unitary (treated as instantaneous at the end of the step).
pub struct GateProcess {
    dim: FockDim,
    steps: Vec<(Option<usize>, CMatrix)>,
    decays: Vec<CavityDecay>,
}

impl GateProcess {
    pub fn new(seq: &GateSequence, times: &CoherenceTimes, dim: FockDim) -> Result<Self> {
        seq.validate()?;
        times.validate()?;
        check_snap_reach(seq, dim)?;
        let noiseless = times.loss_rate() == 0.0 && times.dephasing_rate() == 0.0;
        let mut cache: HashMap<u64, usize> = HashMap::new();
        let mut decays = Vec::new();
        let mut steps = Vec::with_capacity(seq.steps.len());
        for step in &seq.steps {
            let t = step.duration_us();
            let decay = if noiseless || t == 0.0 {
                None
            } else if let Some(&idx) = cache.get(&t.to_bits()) {
                Some(idx)
            } else {
                let params = DecoherenceParams {
                    times: *times,
                    duration_us: t,
                };
                decays.push(CavityDecay::new(&params, dim)?);
                cache.insert(t.to_bits(), decays.len() - 1);
                Some(decays.len() - 1)
            };
            steps.push((decay, step.unitary(dim)?.into_matrix()));
        }
        Ok(GateProcess { dim, steps, decays })
    }
}

impl Channel for GateProcess {
    fn dim(&self) -> FockDim {
        self.dim
    }

    fn apply_matrix(&self, x: &CMatrix) -> CMatrix {
        let mut out = x.clone();
        for (decay, u) in &self.steps {
            if let Some(idx) = decay {
                out = self.decays[*idx].apply_matrix(&out);
            }
            out = u.dot(&out).dot(&dagger(u));
        }
        out
    }
}

/// Kraus form of [`GateProcess`]; each step decays for its own duration
/// with the given coherence times.
pub fn noisy_gate_process(
    seq: &GateSequence,
    times: &CoherenceTimes,
    dim: FockDim,
) -> Result<KrausSet> {
    let process = GateProcess::new(seq, times, dim)?;
    if process.decays.is_empty() {
        return unitary_channel(&compose_unitary(seq, dim)?);
    }
    let set = choi_to_kraus(&process.choi(), None)?;
    set.certify()?;
    Ok(set)
}

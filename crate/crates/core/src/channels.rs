//! Single-qubit Kraus channels and the per-pair noise model.
//!
//! Conventions: amplitude damping uses `K0 = [[1, 0], [0, √(1-γ)]]`,
//! `K1 = [[0, √γ], [0, 0]]`; dephasing applies `Z` with probability `p`,
//! `K0 = √(1-p) I`, `K1 = √p Z`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{check_unit_interval, Error, Result};
use crate::qmat::{c, conjugate_local, pauli_z, ComplexMatrix, DensityMatrix};

/// Completeness tolerance for `Σ K†K = I`.
pub const CPTP_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct KrausChannel {
    operators: Vec<ComplexMatrix>,
    label: String,
}

/// Outcome of a completeness check.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CptpReport {
    /// `max |Σ K†K - I|`.
    pub residual: f64,
    pub passed: bool,
}

/// Checks `Σ K†K = I` for a list of 2×2 operators.
pub fn cptp_check(operators: &[ComplexMatrix]) -> CptpReport {
    let mut sum = ComplexMatrix::zeros(2, 2);
    for k in operators {
        let term = match k.dagger().matmul(k) {
            Ok(t) if t.rows() == 2 && t.cols() == 2 => t,
            _ => {
                return CptpReport {
                    residual: f64::INFINITY,
                    passed: false,
                }
            }
        };
        sum = sum.add(&term).expect("2x2 sum");
    }
    let residual = sum.max_abs_diff(&ComplexMatrix::identity(2)).expect("2x2 diff");
    CptpReport {
        residual,
        passed: !operators.is_empty() && residual <= CPTP_TOL,
    }
}

impl KrausChannel {
    pub fn new(label: impl Into<String>, operators: Vec<ComplexMatrix>) -> Result<Self> {
        let label = label.into();
        if operators.is_empty() {
            return Err(Error::InvalidChannel(format!("{label}: no Kraus operators")));
        }
        if operators.iter().any(|k| k.rows() != 2 || k.cols() != 2) {
            return Err(Error::InvalidChannel(format!("{label}: operators must be 2x2")));
        }
        let report = cptp_check(&operators);
        if !report.passed {
            return Err(Error::InvalidChannel(format!(
                "{label}: completeness residual {:.3e} exceeds {CPTP_TOL:e}",
                report.residual
            )));
        }
        Ok(Self { operators, label })
    }

    pub fn identity() -> Self {
        Self {
            operators: vec![ComplexMatrix::identity(2)],
            label: "identity".into(),
        }
    }

    pub fn operators(&self) -> &[ComplexMatrix] {
        &self.operators
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn cptp_check(&self) -> CptpReport {
        cptp_check(&self.operators)
    }
}

pub fn amplitude_damping(gamma: f64) -> Result<KrausChannel> {
    let gamma = check_unit_interval("gamma", gamma)?;
    let k0 = ComplexMatrix::from_real_rows(&[&[1.0, 0.0], &[0.0, (1.0 - gamma).sqrt()]])?;
    let k1 = ComplexMatrix::from_real_rows(&[&[0.0, gamma.sqrt()], &[0.0, 0.0]])?;
    KrausChannel::new(format!("amplitude-damping({gamma})"), vec![k0, k1])
}

pub fn dephasing(p: f64) -> Result<KrausChannel> {
    let p = check_unit_interval("p", p)?;
    let k0 = ComplexMatrix::identity(2).scale(c((1.0 - p).sqrt(), 0.0));
    let k1 = pauli_z().scale(c(p.sqrt(), 0.0));
    KrausChannel::new(format!("dephasing({p})"), vec![k0, k1])
}

/// `ρ' = Σ_k K_k ρ K_k†` with the operators acting on `qubit`.
pub fn apply_channel(rho: &DensityMatrix, ch: &KrausChannel, qubit: usize) -> Result<DensityMatrix> {
    let n = rho.n_qubits();
    if qubit >= n {
        return Err(Error::QubitIndex { index: qubit, n_qubits: n });
    }
    let mut acc = ComplexMatrix::zeros(rho.dim(), rho.dim());
    for k in ch.operators() {
        acc = acc.add(&conjugate_local(rho.matrix(), k, qubit, n))?;
    }
    Ok(DensityMatrix::from_matrix_unchecked(acc))
}

/// A grid point of the noise landscape.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseParams {
    pub gamma: f64,
    pub p: f64,
}

impl NoiseParams {
    pub fn new(gamma: f64, p: f64) -> Result<Self> {
        Ok(Self {
            gamma: check_unit_interval("gamma", gamma)?,
            p: check_unit_interval("p", p)?,
        })
    }

    pub fn noiseless() -> Self {
        Self { gamma: 0.0, p: 0.0 }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChannelOrder {
    /// Amplitude damping, then dephasing.
    #[default]
    AdFirst,
    DephFirst,
}

/// Which photons of a pair pass through the noisy channel.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseTarget {
    #[default]
    Both,
    SecondOnly,
}

impl NoiseTarget {
    fn qubits(self) -> &'static [usize] {
        match self {
            NoiseTarget::Both => &[0, 1],
            NoiseTarget::SecondOnly => &[1],
        }
    }
}

impl fmt::Display for ChannelOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(match self {
            ChannelOrder::AdFirst => "ad-first",
            ChannelOrder::DephFirst => "deph-first",
        })
    }
}

impl fmt::Display for NoiseTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(match self {
            NoiseTarget::Both => "both",
            NoiseTarget::SecondOnly => "second-only",
        })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoiseConfig {
    pub order: ChannelOrder,
    pub target: NoiseTarget,
}

/// Applies damping and dephasing to each targeted qubit of a two-qubit state.
pub fn apply_pair_noise(rho_pair: &DensityMatrix, params: NoiseParams, cfg: NoiseConfig) -> Result<DensityMatrix> {
    if rho_pair.n_qubits() != 2 {
        return Err(Error::DimensionMismatch(format!(
            "pair noise expects a two-qubit state, got {} qubits",
            rho_pair.n_qubits()
        )));
    }
    let params = NoiseParams::new(params.gamma, params.p)?;
    let damping = amplitude_damping(params.gamma)?;
    let phase = dephasing(params.p)?;
    let sequence = match cfg.order {
        ChannelOrder::AdFirst => [&damping, &phase],
        ChannelOrder::DephFirst => [&phase, &damping],
    };
    let mut rho = rho_pair.clone();
    for &q in cfg.target.qubits() {
        for ch in sequence {
            rho = apply_channel(&rho, ch, q)?;
        }
    }
    Ok(rho)
}

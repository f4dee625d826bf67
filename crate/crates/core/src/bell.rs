//! Bell basis, Bell-diagonal states and the twirl projection.
//!
//! Bell index order is fixed as `(Φ+, Ψ+, Ψ−, Φ−)`; index 0 is the target
//! state, so the fidelity of a pair is its weight in slot 0.

use std::f64::consts::FRAC_1_SQRT_2;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{check_unit_interval, Error, Result};
use crate::qmat::{c, pure_fidelity, ComplexMatrix, DensityMatrix, PureState, C64};

/// Lower bound below which a coefficient is rejected rather than clamped to zero.
pub const COEFF_NEG_TOL: f64 = 1e-12;

/// Allowed deviation of `Σ λ_i` from one.
pub const COEFF_SUM_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BellState {
    PhiPlus,
    PsiPlus,
    PsiMinus,
    PhiMinus,
}

impl BellState {
    pub const ALL: [BellState; 4] = [
        BellState::PhiPlus,
        BellState::PsiPlus,
        BellState::PsiMinus,
        BellState::PhiMinus,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }
}

impl fmt::Display for BellState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(match self {
            BellState::PhiPlus => "Φ+",
            BellState::PsiPlus => "Ψ+",
            BellState::PsiMinus => "Ψ−",
            BellState::PhiMinus => "Φ−",
        })
    }
}

pub fn bell_state(which: BellState) -> PureState {
    let h = FRAC_1_SQRT_2;
    let z = C64::ZERO;
    let amps = match which {
        BellState::PhiPlus => [c(h, 0.0), z, z, c(h, 0.0)],
        BellState::PsiPlus => [z, c(h, 0.0), c(h, 0.0), z],
        BellState::PsiMinus => [z, c(h, 0.0), c(-h, 0.0), z],
        BellState::PhiMinus => [c(h, 0.0), z, z, c(-h, 0.0)],
    };
    PureState::new(amps.to_vec()).expect("Bell states are normalized")
}

/// `(Φ+, Ψ+, Ψ−, Φ−)`.
pub fn bell_basis() -> [PureState; 4] {
    BellState::ALL.map(bell_state)
}

/// Weights `λ0..λ3` of a Bell-diagonal state, in the crate's Bell index order.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BellCoefficients([f64; 4]);

impl BellCoefficients {
    pub fn new(lambda: [f64; 4]) -> Result<Self> {
        let mut out = lambda;
        for v in out.iter_mut() {
            if !v.is_finite() || *v < -COEFF_NEG_TOL {
                return Err(Error::InvalidState(format!("Bell coefficient {v} is negative or non-finite")));
            }
            *v = v.max(0.0);
        }
        let sum: f64 = out.iter().sum();
        if (sum - 1.0).abs() > COEFF_SUM_TOL {
            return Err(Error::InvalidState(format!("Bell coefficients sum to {sum}, expected 1")));
        }
        Ok(Self(out))
    }

    /// Normalizes non-negative weights to unit sum.
    pub fn from_weights(weights: [f64; 4]) -> Result<Self> {
        let sum: f64 = weights.iter().sum();
        if sum.is_nan() || sum <= 0.0 {
            return Err(Error::InvalidState("weights must have a positive sum".into()));
        }
        Self::new(weights.map(|w| w / sum))
    }

    pub fn values(&self) -> [f64; 4] {
        self.0
    }

    pub fn fidelity(&self) -> f64 {
        self.0[0]
    }

    /// Coefficients with `out[k] = self[perm[k]]`.
    pub fn permuted(&self, perm: [usize; 4]) -> Self {
        Self(perm.map(|i| self.0[i]))
    }

    pub fn max_abs_diff(&self, other: &BellCoefficients) -> f64 {
        self.0
            .iter()
            .zip(other.0)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

impl std::ops::Index<usize> for BellCoefficients {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl fmt::Display for BellCoefficients {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let [a, b, c, d] = self.0;
        write!(f, "({a:.6}, {b:.6}, {c:.6}, {d:.6})")
    }
}

fn require_pair(rho: &DensityMatrix) -> Result<()> {
    if rho.n_qubits() == 2 {
        Ok(())
    } else {
        Err(Error::DimensionMismatch(format!(
            "expected a two-qubit state, got {} qubits",
            rho.n_qubits()
        )))
    }
}

/// `λ_i = <Φ_i|ρ|Φ_i>`.
pub fn bell_coefficients(rho: &DensityMatrix) -> Result<BellCoefficients> {
    require_pair(rho)?;
    let mut lam = [0.0; 4];
    for (slot, psi) in lam.iter_mut().zip(bell_basis()) {
        *slot = pure_fidelity(rho, &psi)?;
    }
    BellCoefficients::new(lam)
}

/// `ρ = Σ λ_i |Φ_i><Φ_i|`.
pub fn bell_diagonal(lams: &BellCoefficients) -> DensityMatrix {
    let mut m = ComplexMatrix::zeros(4, 4);
    for (w, psi) in lams.values().iter().zip(bell_basis()) {
        let proj = psi.projector();
        m = m.add(&proj.matrix().scale(c(*w, 0.0))).expect("4x4 sum");
    }
    DensityMatrix::from_matrix_unchecked(m)
}

/// `(F, (1-F)/3, (1-F)/3, (1-F)/3)`.
pub fn werner(fidelity: f64) -> Result<BellCoefficients> {
    let f = check_unit_interval("fidelity", fidelity)?;
    let t = (1.0 - f) / 3.0;
    BellCoefficients::new([f, t, t, t])
}

/// Projects onto the Bell-diagonal part, the exact average over bilateral twirls.
pub fn twirl_projection(rho: &DensityMatrix) -> Result<DensityMatrix> {
    Ok(bell_diagonal(&bell_coefficients(rho)?))
}

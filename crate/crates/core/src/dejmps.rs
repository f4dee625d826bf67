//! The DEJMPS purification round, analytically and as a circuit.
//!
//! The analytic path works on recurrence slots: slot 0 holds the target
//! weight and slot 3 the weight paired with it by the bilateral CNOT, so
//!
//! ```text
//! N   = (λ0 + λ3)² + (λ1 + λ2)²
//! λ0' = (λ0² + λ3²) / N      λ1' = 2 λ1 λ2 / N
//! λ2' = (λ1² + λ2²) / N      λ3' = 2 λ0 λ3 / N
//! ```
//!
//! The circuit path simulates two pairs on a 16-dimensional register.
//! Register layout: qubit 0 is Alice's half of pair a, 1 Bob's half of pair a,
//! 2 Alice's half of pair b, 3 Bob's half of pair b. Pair a survives and pair b
//! is measured.

use std::f64::consts::FRAC_1_SQRT_2;
use std::fmt;
use std::sync::OnceLock;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bell::{bell_basis, bell_coefficients, BellCoefficients};
use crate::error::{Error, Result};
use crate::qmat::{
    c, cnot_permutation, conjugate_local, hadamard, permute_basis, phase_s, pure_fidelity, ComplexMatrix,
    DensityMatrix, C64,
};

/// Success probabilities below this are treated as a degenerate round.
pub const DEGENERATE_SUCCESS: f64 = 1e-15;

/// Objective values closer than this count as ties.
const TIE_TOL: f64 = 1e-14;

/// Recurrence slot `k` takes the circuit Bell index `CIRCUIT_TO_RECURRENCE[k]`
/// once the fixed pre-rotation `exp(-iπX/4) ⊗ exp(+iπX/4)` has acted:
/// the rotation swaps Ψ− and Φ−, and the CNOT then pairs Φ+ with Φ−.
pub const CIRCUIT_TO_RECURRENCE: [usize; 4] = [0, 3, 1, 2];

/// Circuit Bell index `i` of the surviving pair carries recurrence output slot
/// `RECURRENCE_TO_CIRCUIT[i]`.
pub const RECURRENCE_TO_CIRCUIT: [usize; 4] = [0, 2, 1, 3];

/// Arrangements of slots 1–3 in tie-break order: identity, the three swaps
/// by lowest index, then the two 3-cycles.
const SLOT_ARRANGEMENTS: [[usize; 4]; 6] = [
    [0, 1, 2, 3],
    [0, 2, 1, 3],
    [0, 3, 2, 1],
    [0, 1, 3, 2],
    [0, 2, 3, 1],
    [0, 3, 1, 2],
];

/// How slots 1–3 are arranged before a recurrence step. Slot 0 never moves.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PermutationObjective {
    /// Maximize the output fidelity λ0'.
    #[default]
    Fidelity,
    /// Maximize the round yield N.
    Yield,
    /// Put the largest remaining weight into slot 3.
    PaperLiteral,
    None,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SuccessCriterion {
    /// Target outcomes 00 or 11.
    #[default]
    Coincident,
    /// Target outcome 00 only.
    BothZero,
}

impl SuccessCriterion {
    /// Accepted target outcomes, encoded as `2·m_alice + m_bob`.
    pub fn accepted(self) -> &'static [usize] {
        match self {
            SuccessCriterion::Coincident => &[0, 3],
            SuccessCriterion::BothZero => &[0],
        }
    }
}

impl fmt::Display for PermutationObjective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(match self {
            PermutationObjective::Fidelity => "fidelity",
            PermutationObjective::Yield => "yield",
            PermutationObjective::PaperLiteral => "paper-literal",
            PermutationObjective::None => "none",
        })
    }
}

impl fmt::Display for SuccessCriterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(match self {
            SuccessCriterion::Coincident => "coincident",
            SuccessCriterion::BothZero => "both-zero",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProtocolConfig {
    pub objective: PermutationObjective,
    pub criterion: SuccessCriterion,
    pub rounds: u32,
}

impl ProtocolConfig {
    pub fn new(objective: PermutationObjective, criterion: SuccessCriterion, rounds: u32) -> Result<Self> {
        if rounds == 0 {
            return Err(Error::Config("at least one purification round is required".into()));
        }
        Ok(Self {
            objective,
            criterion,
            rounds,
        })
    }
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            objective: PermutationObjective::Fidelity,
            criterion: SuccessCriterion::Coincident,
            rounds: 1,
        }
    }
}

/// `(λ0 + λ3)² + (λ1 + λ2)²`.
pub fn yield_of(lams: &BellCoefficients) -> f64 {
    let [l0, l1, l2, l3] = lams.values();
    (l0 + l3).powi(2) + (l1 + l2).powi(2)
}

fn output_fidelity(lams: &BellCoefficients) -> f64 {
    let [l0, _, _, l3] = lams.values();
    (l0 * l0 + l3 * l3) / yield_of(lams)
}

/// Rearranges slots 1–3 according to `objective`; returns the arranged
/// coefficients and the permutation with `out[k] = lams[perm[k]]`.
pub fn permute_coefficients(lams: &BellCoefficients, objective: PermutationObjective) -> (BellCoefficients, [usize; 4]) {
    let score: Box<dyn Fn(&BellCoefficients) -> f64> = match objective {
        PermutationObjective::None => return (*lams, SLOT_ARRANGEMENTS[0]),
        PermutationObjective::Fidelity => Box::new(output_fidelity),
        PermutationObjective::Yield => Box::new(yield_of),
        PermutationObjective::PaperLiteral => Box::new(|l: &BellCoefficients| l[3]),
    };
    let mut best = SLOT_ARRANGEMENTS[0];
    let mut best_score = score(&lams.permuted(best));
    for perm in &SLOT_ARRANGEMENTS[1..] {
        let s = score(&lams.permuted(*perm));
        if s > best_score + TIE_TOL {
            best = *perm;
            best_score = s;
        }
    }
    (lams.permuted(best), best)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RoundOutcome {
    pub coefficients_out: BellCoefficients,
    pub round_yield: f64,
    pub fidelity_out: f64,
}

/// One application of the recurrence to already arranged coefficients.
pub fn recurrence_step(lams: &BellCoefficients) -> RoundOutcome {
    let [l0, l1, l2, l3] = lams.values();
    let n = yield_of(lams);
    let raw = [
        (l0 * l0 + l3 * l3) / n,
        2.0 * l1 * l2 / n,
        (l1 * l1 + l2 * l2) / n,
        2.0 * l0 * l3 / n,
    ];
    // valid input keeps Σ raw = 1 up to roundoff; renormalize the residue away
    let coefficients_out = BellCoefficients::from_weights(raw).expect("recurrence output is a distribution");
    RoundOutcome {
        fidelity_out: coefficients_out.fidelity(),
        coefficients_out,
        round_yield: n.clamp(0.0, 1.0),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Trajectory {
    /// Coefficients after arrangement, fed to each round.
    pub inputs: Vec<BellCoefficients>,
    pub rounds: Vec<RoundOutcome>,
    /// Product of the per-round yields.
    pub cumulative_yield: f64,
    /// Raw pairs consumed per output pair, `2^k`.
    pub pair_cost: u64,
}

impl Trajectory {
    pub fn final_fidelity(&self) -> f64 {
        self.rounds.last().map_or(f64::NAN, |r| r.fidelity_out)
    }
}

/// Arranges and purifies `k` times in a row.
pub fn iterate_rounds(lams: &BellCoefficients, k: u32, objective: PermutationObjective) -> Result<Trajectory> {
    if k == 0 {
        return Err(Error::Config("iterate_rounds needs k >= 1".into()));
    }
    if k >= 64 {
        return Err(Error::Config(format!("{k} rounds overflow the pair cost counter")));
    }
    let mut current = *lams;
    let mut inputs = Vec::with_capacity(k as usize);
    let mut rounds = Vec::with_capacity(k as usize);
    let mut cumulative_yield = 1.0;
    for _ in 0..k {
        let (arranged, _) = permute_coefficients(&current, objective);
        let out = recurrence_step(&arranged);
        cumulative_yield *= out.round_yield;
        current = out.coefficients_out;
        inputs.push(arranged);
        rounds.push(out);
    }
    Ok(Trajectory {
        inputs,
        rounds,
        cumulative_yield,
        pair_cost: 1u64 << k,
    })
}

/// Recurrence-slot view of circuit-frame Bell coefficients.
pub fn recurrence_frame(circuit: &BellCoefficients) -> BellCoefficients {
    circuit.permuted(CIRCUIT_TO_RECURRENCE)
}

/// Circuit-frame Bell coefficients of the survivor from recurrence output slots.
pub fn circuit_frame(recurrence_out: &BellCoefficients) -> BellCoefficients {
    recurrence_out.permuted(RECURRENCE_TO_CIRCUIT)
}

/// `exp(-iπX/4)`, Alice's half of the fixed pre-rotation; Bob applies its conjugate.
pub fn dejmps_rotation() -> ComplexMatrix {
    let h = FRAC_1_SQRT_2;
    ComplexMatrix::new(2, 2, vec![c(h, 0.0), c(0.0, -h), c(0.0, -h), c(h, 0.0)]).unwrap()
}

/// Bell permutation induced by the bilateral map `U ⊗ U*`: Bell index `i`
/// is sent to `out[i]`. Returns `None` if `U ⊗ U*` does not permute the basis.
pub fn bilateral_bell_action(u: &ComplexMatrix) -> Option<[usize; 4]> {
    let g = u.tensor(&u.conj());
    let basis = bell_basis();
    let mut out = [usize::MAX; 4];
    for (i, psi) in basis.iter().enumerate() {
        let image = g.mul_vec(psi.amplitudes()).ok()?;
        let overlaps: Vec<f64> = basis
            .iter()
            .map(|b| {
                let ip: C64 = b.amplitudes().iter().zip(&image).map(|(x, y)| x.conj() * y).sum();
                ip.norm_sqr()
            })
            .collect();
        let j = overlaps.iter().position(|&o| (o - 1.0).abs() < 1e-12)?;
        out[i] = j;
    }
    Some(out)
}

/// The six single-qubit Cliffords permuting {X, Y, Z}, each with its bilateral Bell action.
fn alignment_gates() -> &'static [(ComplexMatrix, [usize; 4])] {
    static GATES: OnceLock<Vec<(ComplexMatrix, [usize; 4])>> = OnceLock::new();
    GATES.get_or_init(|| {
        let h = hadamard();
        let s = phase_s();
        let hs = h.matmul(&s).unwrap();
        let sh = s.matmul(&h).unwrap();
        let hsh = hs.matmul(&h).unwrap();
        [ComplexMatrix::identity(2), h, s, hs, sh, hsh]
            .into_iter()
            .map(|g| {
                let action = bilateral_bell_action(&g).expect("Clifford permutes the Bell basis");
                (g, action)
            })
            .collect()
    })
}

/// Local gate (Alice's side) that realizes arrangement `perm` of the recurrence slots.
fn alignment_gate(perm: [usize; 4]) -> &'static ComplexMatrix {
    let pin = CIRCUIT_TO_RECURRENCE;
    alignment_gates()
        .iter()
        .find(|(_, action)| (0..4).all(|k| action[pin[perm[k]]] == pin[k]))
        .map(|(g, _)| g)
        .expect("every arrangement of slots 1-3 has a Clifford realization")
}

#[derive(Clone, Debug, PartialEq)]
pub struct CircuitOutcome {
    pub success_probability: f64,
    /// Survivor conditioned on success; `None` for a degenerate round.
    pub post_state: Option<DensityMatrix>,
    /// Probabilities of target outcomes 00, 01, 10, 11.
    pub outcome_distribution: [f64; 4],
    /// Survivor conditioned on each individual outcome.
    pub branch_states: [Option<DensityMatrix>; 4],
    /// Recurrence-slot arrangement realized by the alignment gate.
    pub arrangement: [usize; 4],
}

impl CircuitOutcome {
    pub fn is_degenerate(&self) -> bool {
        self.post_state.is_none()
    }

    /// Fidelity of the conditional survivor with Φ+.
    pub fn fidelity(&self) -> Option<f64> {
        self.post_state.as_ref().map(phi_plus_fidelity)
    }
}

pub(crate) fn phi_plus_fidelity(rho: &DensityMatrix) -> f64 {
    pure_fidelity(rho, &bell_basis()[0]).expect("two-qubit state")
}

fn require_pair(rho: &DensityMatrix, name: &str) -> Result<()> {
    if rho.n_qubits() == 2 {
        Ok(())
    } else {
        Err(Error::DimensionMismatch(format!(
            "{name} must be a two-qubit state, got {} qubits",
            rho.n_qubits()
        )))
    }
}

/// One purification round on the full two-pair density matrix.
///
/// Both parties first apply a Bell-permuting Clifford chosen from `rho_a`'s
/// coefficients and `cfg.objective` (identity for `None`), then the fixed
/// `exp(∓iπX/4)` rotation, then a CNOT from their pair-a qubit onto their
/// pair-b qubit. The pair-b qubits are measured and the outcome post-selected
/// per `cfg.criterion`.
pub fn circuit_round(rho_a: &DensityMatrix, rho_b: &DensityMatrix, cfg: &ProtocolConfig) -> Result<CircuitOutcome> {
    require_pair(rho_a, "rho_a")?;
    require_pair(rho_b, "rho_b")?;

    let (_, arrangement) = permute_coefficients(&recurrence_frame(&bell_coefficients(rho_a)?), cfg.objective);
    let alice = dejmps_rotation().matmul(alignment_gate(arrangement))?;
    let bob = alice.conj();
    let rotate = |rho: &DensityMatrix| {
        let m = conjugate_local(rho.matrix(), &alice, 0, 2);
        conjugate_local(&m, &bob, 1, 2)
    };
    let joint = rotate(rho_a).tensor(&rotate(rho_b));

    let p02 = cnot_permutation(0, 2, 4);
    let p13 = cnot_permutation(1, 3, 4);
    let both: Vec<usize> = p02.iter().map(|&b| p13[b]).collect();
    let joint = permute_basis(&joint, &both);

    let mut distribution = [0.0; 4];
    let mut branches: [ComplexMatrix; 4] = std::array::from_fn(|_| ComplexMatrix::zeros(4, 4));
    for (m, branch) in branches.iter_mut().enumerate() {
        for a in 0..4 {
            for b in 0..4 {
                branch.set(a, b, joint.get((a << 2) | m, (b << 2) | m));
            }
        }
        distribution[m] = (0..4).map(|a| branch.get(a, a).re).sum::<f64>().max(0.0);
    }

    let branch_states = std::array::from_fn(|m| {
        (distribution[m] > DEGENERATE_SUCCESS)
            .then(|| DensityMatrix::from_matrix_unchecked(branches[m].scale(c(1.0 / distribution[m], 0.0))))
    });

    let accepted = cfg.criterion.accepted();
    let success_probability: f64 = accepted.iter().map(|&m| distribution[m]).sum();
    let post_state = (success_probability >= DEGENERATE_SUCCESS).then(|| {
        let mut sum = ComplexMatrix::zeros(4, 4);
        for &m in accepted {
            sum = sum.add(&branches[m]).expect("4x4 sum");
        }
        DensityMatrix::from_matrix_unchecked(sum.scale(c(1.0 / success_probability, 0.0)))
    });

    Ok(CircuitOutcome {
        success_probability: success_probability.min(1.0),
        post_state,
        outcome_distribution: distribution,
        branch_states,
        arrangement,
    })
}

/// One Born-rule sample of a circuit round.
#[derive(Clone, Debug, PartialEq)]
pub struct SampledRound {
    pub outcome: usize,
    pub success: bool,
    /// Fidelity of the survivor given the sampled outcome, on success.
    pub fidelity: Option<f64>,
    pub post_state: Option<DensityMatrix>,
}

pub fn sample_round<R: Rng + ?Sized>(
    rng: &mut R,
    rho_a: &DensityMatrix,
    rho_b: &DensityMatrix,
    cfg: &ProtocolConfig,
) -> Result<SampledRound> {
    let circuit = circuit_round(rho_a, rho_b, cfg)?;
    Ok(sample_outcome(rng, circuit, cfg))
}

pub(crate) fn sample_outcome<R: Rng + ?Sized>(rng: &mut R, circuit: CircuitOutcome, cfg: &ProtocolConfig) -> SampledRound {
    let u: f64 = rng.random();
    let dist = circuit.outcome_distribution;
    let total: f64 = dist.iter().sum();
    let mut acc = 0.0;
    let mut outcome = dist.iter().rposition(|&p| p > 0.0).unwrap_or(0);
    for (m, p) in dist.iter().enumerate() {
        acc += p / total;
        if u < acc {
            outcome = m;
            break;
        }
    }
    let success = cfg.criterion.accepted().contains(&outcome);
    let [s0, s1, s2, s3] = circuit.branch_states;
    let post_state = if success { [s0, s1, s2, s3][outcome].take() } else { None };
    SampledRound {
        outcome,
        success,
        fidelity: post_state.as_ref().map(phi_plus_fidelity),
        post_state,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bell::{bell_diagonal, bell_state, werner, BellState};
    use crate::channels::{apply_pair_noise, NoiseConfig, NoiseParams};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn coeffs(v: [f64; 4]) -> BellCoefficients {
        BellCoefficients::new(v).unwrap()
    }

    /// Direct substitution into the recurrence, written independently of `recurrence_step`.
    fn oracle_step(l: [f64; 4]) -> ([f64; 4], f64) {
        let n = (l[0] + l[3]) * (l[0] + l[3]) + (l[1] + l[2]) * (l[1] + l[2]);
        (
            [
                (l[0] * l[0] + l[3] * l[3]) / n,
                2.0 * l[1] * l[2] / n,
                (l[1] * l[1] + l[2] * l[2]) / n,
                2.0 * l[0] * l[3] / n,
            ],
            n,
        )
    }

    /// Brute force over every ordering of slots 1–3.
    fn oracle_best_fidelity(l: [f64; 4]) -> f64 {
        let tail = [l[1], l[2], l[3]];
        let mut best = f64::MIN;
        for (a, b, d) in [(0, 1, 2), (0, 2, 1), (1, 0, 2), (1, 2, 0), (2, 0, 1), (2, 1, 0)] {
            let (out, _) = oracle_step([l[0], tail[a], tail[b], tail[d]]);
            best = best.max(out[0]);
        }
        best
    }

    #[test]
    fn yield_examples() {
        assert_eq!(yield_of(&coeffs([1.0, 0.0, 0.0, 0.0])), 1.0);
        assert!((yield_of(&coeffs([0.7, 0.1, 0.1, 0.1])) - 0.68).abs() < 1e-15);
        assert!((yield_of(&coeffs([0.25; 4])) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn recurrence_examples() {
        let out = recurrence_step(&coeffs([1.0, 0.0, 0.0, 0.0]));
        assert_eq!(out.coefficients_out.values(), [1.0, 0.0, 0.0, 0.0]);
        assert_eq!(out.round_yield, 1.0);

        let out = recurrence_step(&coeffs([0.7, 0.1, 0.1, 0.1]));
        let (expected, n) = oracle_step([0.7, 0.1, 0.1, 0.1]);
        assert!((out.round_yield - n).abs() < 1e-15);
        assert!((out.round_yield - 0.68).abs() < 1e-15);
        for (a, b) in out.coefficients_out.values().iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((out.fidelity_out - 0.735_294_117_647).abs() < 1e-11);
        assert!((out.coefficients_out[3] - 0.205_882_352_941).abs() < 1e-11);
        assert!((out.coefficients_out[1] - 0.029_411_764_706).abs() < 1e-11);

        let w = werner(0.5).unwrap();
        assert!((recurrence_step(&w).fidelity_out - 0.5).abs() < 1e-12);
    }

    #[test]
    fn fidelity_closed_form_matches_slot_zero() {
        let lam = coeffs([0.6, 0.2, 0.05, 0.15]);
        let out = recurrence_step(&lam);
        let [l0, l1, l2, l3] = lam.values();
        let f = (l0 * l0 + l3 * l3) / ((l0 + l3).powi(2) + (l1 + l2).powi(2));
        assert!((out.fidelity_out - f).abs() < 1e-12);
        assert_eq!(out.fidelity_out, out.coefficients_out.fidelity());
    }

    #[test]
    fn permutation_examples() {
        let lam = coeffs([0.82, 0.18, 0.0, 0.0]);
        let (lit, perm) = permute_coefficients(&lam, PermutationObjective::PaperLiteral);
        assert_eq!(lit.values(), [0.82, 0.0, 0.0, 0.18]);
        assert_eq!(perm, [0, 3, 2, 1]);

        let (fid, perm) = permute_coefficients(&lam, PermutationObjective::Fidelity);
        assert_eq!(fid.values(), [0.82, 0.18, 0.0, 0.0]);
        assert_eq!(perm, [0, 1, 2, 3]);
        let f_fid = recurrence_step(&fid).fidelity_out;
        let f_lit = recurrence_step(&lit).fidelity_out;
        assert!((f_fid - 0.6724 / 0.7048).abs() < 1e-12);
        assert!((f_lit - 0.7048).abs() < 1e-12);
        assert!(f_fid > f_lit);

        let w = werner(0.8).unwrap();
        for obj in [
            PermutationObjective::Fidelity,
            PermutationObjective::Yield,
            PermutationObjective::PaperLiteral,
            PermutationObjective::None,
        ] {
            let (out, perm) = permute_coefficients(&w, obj);
            assert_eq!(out, w);
            assert_eq!(perm, [0, 1, 2, 3]);
        }

        let (y, _) = permute_coefficients(&lam, PermutationObjective::Yield);
        assert!((yield_of(&y) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn werner_monotonicity_and_fixed_points() {
        for k in 0..9 {
            let f = 0.55 + 0.05 * k as f64;
            let out = recurrence_step(&werner(f).unwrap());
            assert!(out.fidelity_out > f, "F = {f}");
        }
        let out = recurrence_step(&werner(1.0).unwrap());
        assert!((out.fidelity_out - 1.0).abs() < 1e-12);
    }

    #[test]
    fn iterate_examples() {
        let w = werner(0.7).unwrap();
        let one = iterate_rounds(&w, 1, PermutationObjective::Fidelity).unwrap();
        assert_eq!(one.rounds[0], recurrence_step(&w));
        assert_eq!(one.pair_cost, 2);

        let two = iterate_rounds(&w, 2, PermutationObjective::Fidelity).unwrap();
        let (r1, y1) = oracle_step(w.values());
        let f2 = oracle_best_fidelity(r1);
        assert!((two.rounds[0].fidelity_out - r1[0]).abs() < 1e-12);
        assert!((two.rounds[1].fidelity_out - f2).abs() < 1e-12);
        assert!(two.rounds[0].fidelity_out > 0.7 && two.rounds[1].fidelity_out > two.rounds[0].fidelity_out);
        assert!((two.cumulative_yield - y1 * two.rounds[1].round_yield).abs() < 1e-15);
        assert_eq!(two.pair_cost, 4);

        let perfect = iterate_rounds(&coeffs([1.0, 0.0, 0.0, 0.0]), 5, PermutationObjective::Yield).unwrap();
        assert_eq!(perfect.cumulative_yield, 1.0);

        assert!(iterate_rounds(&w, 0, PermutationObjective::Fidelity).is_err());
    }

    #[test]
    fn cumulative_yield_is_product_and_roughly_geometric() {
        let w = werner(0.9).unwrap();
        let t = iterate_rounds(&w, 4, PermutationObjective::Fidelity).unwrap();
        let product: f64 = t.rounds.iter().map(|r| r.round_yield).product();
        assert_eq!(t.cumulative_yield, product);
        let y1 = t.rounds[0].round_yield;
        // Y^k as an order-of-magnitude statement
        let ratio = t.cumulative_yield / y1.powi(4);
        assert!(ratio > 0.1 && ratio < 10.0, "ratio {ratio}");
    }

    #[test]
    fn fixed_rotation_relabeling_matches_constants() {
        // exp(-iπX/4) ⊗ exp(+iπX/4) swaps Ψ− and Φ−
        let action = bilateral_bell_action(&dejmps_rotation()).unwrap();
        assert_eq!(action, [0, 1, 3, 2]);
        // after the rotation, the CNOT pairs Φ+ with Φ−: recurrence slot 3 is the circuit Φ− slot pre-image
        assert_eq!(action[CIRCUIT_TO_RECURRENCE[3]], BellState::PhiMinus.index());
        assert_eq!(action[CIRCUIT_TO_RECURRENCE[0]], BellState::PhiPlus.index());
    }

    #[test]
    fn alignment_gates_cover_every_arrangement() {
        let gates = alignment_gates();
        let mut actions: Vec<[usize; 4]> = gates.iter().map(|(_, a)| *a).collect();
        assert!(actions.iter().all(|a| a[0] == 0));
        actions.sort();
        actions.dedup();
        assert_eq!(actions.len(), 6);
        for perm in SLOT_ARRANGEMENTS {
            let _ = alignment_gate(perm);
        }
    }

    #[test]
    fn noiseless_circuit_is_fixed_point() {
        let phi = bell_state(BellState::PhiPlus).projector();
        let out = circuit_round(&phi, &phi, &ProtocolConfig::default()).unwrap();
        assert!((out.success_probability - 1.0).abs() < 1e-12);
        let post = out.post_state.unwrap();
        assert!(post.matrix().max_abs_diff(phi.matrix()).unwrap() < 1e-12);
    }

    #[test]
    fn werner_circuit_matches_recurrence() {
        let rho = bell_diagonal(&werner(0.7).unwrap());
        let out = circuit_round(&rho, &rho, &ProtocolConfig::default()).unwrap();
        assert!((out.success_probability - 0.68).abs() < 1e-10);
        assert!((out.fidelity().unwrap() - 0.735_294_117_647).abs() < 1e-10);
        let dist_sum: f64 = out.outcome_distribution.iter().sum();
        assert!((dist_sum - 1.0).abs() < 1e-10);
        out.post_state.unwrap().validate().unwrap();
    }

    #[test]
    fn both_zero_criterion_halves_success() {
        let rho = bell_diagonal(&werner(0.7).unwrap());
        let cfg = ProtocolConfig::new(PermutationObjective::Fidelity, SuccessCriterion::BothZero, 1).unwrap();
        let out = circuit_round(&rho, &rho, &cfg).unwrap();
        assert!((out.success_probability - out.outcome_distribution[0]).abs() < 1e-15);
        assert!((out.success_probability - 0.34).abs() < 1e-10);
        assert!((out.fidelity().unwrap() - 0.735_294_117_647).abs() < 1e-10);
    }

    #[test]
    fn dephased_pair_uses_fidelity_arrangement() {
        let noisy = apply_pair_noise(
            &bell_state(BellState::PhiPlus).projector(),
            NoiseParams::new(0.0, 0.1).unwrap(),
            NoiseConfig::default(),
        )
        .unwrap();
        let out = circuit_round(&noisy, &noisy, &ProtocolConfig::default()).unwrap();
        assert!((out.success_probability - 0.7048).abs() < 1e-12);
        assert!((out.fidelity().unwrap() - 0.6724 / 0.7048).abs() < 1e-12);

        let cfg = ProtocolConfig::new(PermutationObjective::PaperLiteral, SuccessCriterion::Coincident, 1).unwrap();
        let out = circuit_round(&noisy, &noisy, &cfg).unwrap();
        assert!((out.success_probability - 1.0).abs() < 1e-12);
        assert!((out.fidelity().unwrap() - 0.7048).abs() < 1e-12);
    }

    #[test]
    fn degenerate_round_has_no_state() {
        // Φ+ against Ψ+: the target parity is always odd, so coincident outcomes never occur
        let cfg = ProtocolConfig::new(PermutationObjective::None, SuccessCriterion::Coincident, 1).unwrap();
        let phi = bell_state(BellState::PhiPlus).projector();
        let psi_plus = bell_state(BellState::PsiPlus).projector();
        let out = circuit_round(&phi, &psi_plus, &cfg).unwrap();
        assert!(out.success_probability < DEGENERATE_SUCCESS);
        assert!(out.is_degenerate());
        assert!(out.fidelity().is_none());
        let total: f64 = out.outcome_distribution.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);

        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s = sample_round(&mut rng, &phi, &psi_plus, &cfg).unwrap();
        assert!(!s.success && s.fidelity.is_none());
        assert!(circuit_round(&DensityMatrix::maximally_mixed(1).unwrap(), &phi, &cfg).is_err());
    }

    #[test]
    fn accepted_branches_share_fidelity_for_bell_diagonal_input() {
        let rho = bell_diagonal(&coeffs([0.6, 0.15, 0.1, 0.15]));
        let out = circuit_round(&rho, &rho, &ProtocolConfig::default()).unwrap();
        let f00 = phi_plus_fidelity(out.branch_states[0].as_ref().unwrap());
        let f11 = phi_plus_fidelity(out.branch_states[3].as_ref().unwrap());
        assert!((f00 - f11).abs() < 1e-12);
        assert!((out.outcome_distribution[0] - out.outcome_distribution[3]).abs() < 1e-12);
    }

    #[test]
    fn branch_state_matches_general_partial_trace() {
        let noisy = apply_pair_noise(
            &bell_state(BellState::PhiPlus).projector(),
            NoiseParams::new(0.15, 0.05).unwrap(),
            NoiseConfig::default(),
        )
        .unwrap();
        let cfg = ProtocolConfig::new(PermutationObjective::None, SuccessCriterion::Coincident, 1).unwrap();
        let out = circuit_round(&noisy, &noisy, &cfg).unwrap();

        // full 16x16 route: U⊗U*⊗U⊗U*, CNOT products as matrices, projector, partial trace
        let u = dejmps_rotation();
        let local = u.tensor(&u.conj()).tensor(&u).tensor(&u.conj());
        let cnot = |perm: Vec<usize>| {
            let mut m = ComplexMatrix::zeros(16, 16);
            for (b, &img) in perm.iter().enumerate() {
                m.set(img, b, C64::ONE);
            }
            m
        };
        let g = cnot(cnot_permutation(1, 3, 4))
            .matmul(&cnot(cnot_permutation(0, 2, 4)))
            .unwrap()
            .matmul(&local)
            .unwrap();
        let joint = noisy.tensor(&noisy).unwrap();
        let evolved = g.matmul(joint.matrix()).unwrap().matmul(&g.dagger()).unwrap();
        let proj00 = ComplexMatrix::identity(4).tensor(&ComplexMatrix::diag(&[1.0, 0.0, 0.0, 0.0]));
        let projected = proj00.matmul(&evolved).unwrap().matmul(&proj00).unwrap();
        let p00 = projected.trace().unwrap().re;
        assert!((p00 - out.outcome_distribution[0]).abs() < 1e-12);
        let normalized = DensityMatrix::new(projected.scale(c(1.0 / p00, 0.0))).unwrap();
        let reduced = normalized.partial_trace(&[0, 1]).unwrap();
        let branch = out.branch_states[0].as_ref().unwrap();
        assert!(reduced.matrix().max_abs_diff(branch.matrix()).unwrap() < 1e-12);
    }

    #[test]
    fn sample_round_is_deterministic_and_calibrated() {
        let phi = bell_state(BellState::PhiPlus).projector();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let s = sample_round(&mut rng, &phi, &phi, &ProtocolConfig::default()).unwrap();
            assert!(s.success);
            assert!((s.fidelity.unwrap() - 1.0).abs() < 1e-12);
        }

        let rho = bell_diagonal(&werner(0.7).unwrap());
        let cfg = ProtocolConfig::default();
        let run = |seed: u64| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..10_000)
                .map(|_| {
                    let s = sample_round(&mut rng, &rho, &rho, &cfg).unwrap();
                    (s.success, s.fidelity)
                })
                .collect::<Vec<_>>()
        };
        let a = run(11);
        assert_eq!(a, run(11));
        let freq = a.iter().filter(|(s, _)| *s).count() as f64 / 1e4;
        let bound = 3.0 * (0.68f64 * 0.32 / 1e4).sqrt();
        assert!((freq - 0.68).abs() < bound, "frequency {freq}");
    }

    fn arb_coefficients() -> impl Strategy<Value = BellCoefficients> {
        prop::array::uniform4(0.0f64..1.0)
            .prop_filter("positive sum", |w| w.iter().sum::<f64>() > 1e-6)
            .prop_map(|w| BellCoefficients::from_weights(w).unwrap())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn recurrence_conserves_probability(lam in arb_coefficients()) {
            let out = recurrence_step(&lam);
            let sum: f64 = out.coefficients_out.values().iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&out.round_yield));
            let (raw, _) = oracle_step(lam.values());
            prop_assert!(out.coefficients_out.max_abs_diff(&BellCoefficients::new(raw).unwrap()) < 1e-12);
        }

        #[test]
        fn fidelity_objective_dominates_literal(lam in arb_coefficients()) {
            let (fid, _) = permute_coefficients(&lam, PermutationObjective::Fidelity);
            let (lit, _) = permute_coefficients(&lam, PermutationObjective::PaperLiteral);
            prop_assert!(recurrence_step(&fid).fidelity_out >= recurrence_step(&lit).fidelity_out - 1e-15);
            prop_assert!((recurrence_step(&fid).fidelity_out - oracle_best_fidelity(lam.values())).abs() < 1e-12);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn circuit_matches_recurrence_for_bell_diagonal_input(lam in arb_coefficients()) {
            let rho = bell_diagonal(&lam);
            let cfg = ProtocolConfig::new(PermutationObjective::None, SuccessCriterion::Coincident, 1).unwrap();
            let out = circuit_round(&rho, &rho, &cfg).unwrap();
            let rec = recurrence_frame(&lam);
            prop_assert!((out.success_probability - yield_of(&rec)).abs() < 1e-10);
            let p = out.outcome_distribution;
            prop_assert!((p[0] + p[3] - yield_of(&rec)).abs() < 1e-10);
            let expected = circuit_frame(&recurrence_step(&rec).coefficients_out);
            let got = bell_coefficients(out.post_state.as_ref().unwrap()).unwrap();
            prop_assert!(got.max_abs_diff(&expected) < 1e-10);
        }
    }
}

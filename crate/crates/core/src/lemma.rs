//! Parity classification of detector patterns for the `H^{⊗k+1} ⊗ I_d`
//! interferometer.
//!
//! Modes are indexed `mu = b*d + c` with block `b in [0, 2^{k+1})` and residue
//! `c in Z_d`. The X-type operator `I^{⊗k-p} ⊗ X ⊗ I^{⊗p} ⊗ I_d` swaps blocks
//! `b <-> b ^ 2^p`; the matching Z-type operator multiplies a Fock basis state
//! by `(-1)^s`, `s` being the photon count in blocks with bit `p` set. States
//! that are `±1` eigenstates of the X-type operator only ever produce
//! patterns of the matching Z parity after the interferometer.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fock::{self, FockBasisState, FockVector, TransferMatrix};
use crate::qudit::{self, ghz, xi_state, QuditState, Sign};
use crate::scalar::Real;

/// Ancilla level `k`, X position `p` and qudit dimension `d`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct StabilizerSpec {
    pub k: usize,
    pub p: usize,
    pub d: usize,
}

impl StabilizerSpec {
    pub fn new(k: usize, p: usize, d: usize) -> Result<Self> {
        if p > k {
            return Err(Error::InvalidParameter(format!("p = {p} exceeds k = {k}")));
        }
        if d < 2 {
            return Err(Error::InvalidDimension(d));
        }
        if k > 8 {
            return Err(Error::Capacity(format!("k = {k} gives 2^{} blocks", k + 1)));
        }
        Ok(Self { k, p, d })
    }

    pub fn block_count(&self) -> usize {
        1 << (self.k + 1)
    }

    pub fn mode_count(&self) -> usize {
        self.block_count() * self.d
    }

    /// Mode permutation realised by the X-type operator.
    pub fn x_permutation(&self) -> Vec<usize> {
        let flip = 1usize << self.p;
        (0..self.mode_count())
            .map(|mu| ((mu / self.d) ^ flip) * self.d + mu % self.d)
            .collect()
    }

    /// Full `H^{⊗k+1} ⊗ I_d` transfer matrix.
    pub fn interferometer<T: Real>(&self) -> TransferMatrix<T> {
        TransferMatrix::hadamard_power(self.k + 1).kron(&TransferMatrix::identity(self.d))
    }

    /// The same interferometer as `d` independent `H^{⊗k+1}` blocks, one per
    /// residue class `c`, acting on modes `{b*d + c}`.
    pub fn interferometer_blocks<T: Real>(&self) -> Vec<(Vec<usize>, TransferMatrix<T>)> {
        let h = TransferMatrix::hadamard_power(self.k + 1);
        (0..self.d)
            .map(|c| {
                let modes = (0..self.block_count()).map(|b| b * self.d + c).collect();
                (modes, h.clone())
            })
            .collect()
    }
}

/// Eigenvalue of the Z-type operator on a detector pattern.
///
/// `+` when the photon count over modes whose block index has bit `p` set is
/// even, `-` otherwise.
pub fn parity_class(pattern: &FockBasisState, spec: &StabilizerSpec) -> Result<Sign> {
    if pattern.modes() != spec.mode_count() {
        return Err(Error::DimensionMismatch {
            expected: spec.mode_count(),
            got: pattern.modes(),
        });
    }
    Ok(parity_of(pattern.occupations(), spec.p, spec.d))
}

pub(crate) fn parity_of(occ: &[u8], p: usize, d: usize) -> Sign {
    let bit = 1usize << p;
    let s: usize = occ
        .iter()
        .enumerate()
        .filter(|(mu, _)| (mu / d) & bit != 0)
        .map(|(_, &n)| n as usize)
        .sum();
    if s % 2 == 0 {
        Sign::Plus
    } else {
        Sign::Minus
    }
}

/// Returns the eigenvalue if `psi` is a `±1` eigenstate of the X-type operator.
pub fn x_eigenvalue<T: Real>(psi: &FockVector<T>, spec: &StabilizerSpec, tol: f64) -> Result<Option<Sign>> {
    if psi.mode_count() != spec.mode_count() {
        return Err(Error::DimensionMismatch {
            expected: spec.mode_count(),
            got: psi.mode_count(),
        });
    }
    let swapped = fock::permute_modes(psi, &spec.x_permutation())?;
    if swapped.max_abs_diff(psi) <= tol {
        return Ok(Some(Sign::Plus));
    }
    if swapped.max_abs_diff(&psi.scaled(crate::scalar::creal(-T::one()))) <= tol {
        return Ok(Some(Sign::Minus));
    }
    Ok(None)
}

/// Evolves `psi` through the spec's interferometer using the block factorization.
pub fn evolve<T: Real>(psi: &FockVector<T>, spec: &StabilizerSpec) -> Result<FockVector<T>> {
    fock::apply_block_diagonal(&spec.interferometer_blocks(), psi)
}

#[derive(Clone, Debug, Serialize)]
pub struct Violation {
    /// Which input produced the pattern.
    pub input: Sign,
    pub pattern: String,
    pub amplitude: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct LemmaReport {
    pub spec: StabilizerSpec,
    pub plus_patterns: usize,
    pub minus_patterns: usize,
    /// Largest amplitude found on a pattern of the wrong parity.
    pub max_wrong_amplitude: f64,
    pub violations: Vec<Violation>,
}

impl LemmaReport {
    pub fn passed(&self, tol: f64) -> bool {
        self.max_wrong_amplitude <= tol
    }
}

/// Checks that the evolved `psi_plus` / `psi_minus` populate only `S_+` / `S_-`.
///
/// Both inputs must be eigenstates of the X-type operator with eigenvalues
/// `+1` and `-1` respectively (tolerance `1e-9`).
pub fn verify_lemma<T: Real>(
    psi_plus: &FockVector<T>,
    psi_minus: &FockVector<T>,
    spec: &StabilizerSpec,
) -> Result<LemmaReport> {
    const EIGEN_TOL: f64 = 1e-9;
    for (psi, want) in [(psi_plus, Sign::Plus), (psi_minus, Sign::Minus)] {
        match x_eigenvalue(psi, spec, EIGEN_TOL)? {
            Some(s) if s == want => {}
            got => {
                return Err(Error::LemmaPrecondition(format!(
                    "input expected to have X eigenvalue {want}, found {}",
                    got.map_or("none".to_string(), |s| s.to_string())
                )))
            }
        }
    }
    let mut report = LemmaReport {
        spec: *spec,
        plus_patterns: 0,
        minus_patterns: 0,
        max_wrong_amplitude: 0.0,
        violations: Vec::new(),
    };
    for (psi, want) in [(psi_plus, Sign::Plus), (psi_minus, Sign::Minus)] {
        let out = evolve(psi, spec)?;
        for (pattern, amp) in out.iter() {
            let class = parity_of(pattern.occupations(), spec.p, spec.d);
            if class == want {
                match want {
                    Sign::Plus => report.plus_patterns += 1,
                    Sign::Minus => report.minus_patterns += 1,
                }
            } else {
                let a = amp.norm().as_f64();
                report.max_wrong_amplitude = report.max_wrong_amplitude.max(a);
                report.violations.push(Violation {
                    input: want,
                    pattern: pattern.to_string(),
                    amplitude: a,
                });
            }
        }
    }
    Ok(report)
}

/// The `±` input pair used in the fusion-gate analysis at level `p`:
/// `Ξ_{i,j,±}(2^{p+1}) ⊗ GHZ(2^{p+1}) ⊗ ... ⊗ GHZ(2^k)`.
///
/// For `p = 0` this is the pairwise `ψ_{i,j,±}` with the full GHZ ancilla.
pub fn derivation_states<T: Real>(spec: &StabilizerSpec, i: usize, j: usize) -> Result<(QuditState<T>, QuditState<T>)> {
    let half = 1usize << spec.p;
    let mut pair = Vec::with_capacity(2);
    for sign in Sign::BOTH {
        let mut s = xi_state::<T>(spec.d, i, j, half, sign)?;
        for q in (spec.p + 1)..=spec.k {
            s = s.tensor(&ghz(spec.d, 1 << q)?)?;
        }
        pair.push(s);
    }
    let minus = pair.pop().expect("two states");
    let plus = pair.pop().expect("two states");
    Ok((plus, minus))
}

/// Runs [`verify_lemma`] on the derivation states for every `i < j`.
pub fn verify_spec<T: Real>(spec: &StabilizerSpec) -> Result<Vec<((usize, usize), LemmaReport)>> {
    let mut out = Vec::new();
    for i in 0..spec.d {
        for j in (i + 1)..spec.d {
            let (plus, minus) = derivation_states::<T>(spec, i, j)?;
            let report = verify_lemma(&qudit::encode(&plus), &qudit::encode(&minus), spec)?;
            out.push(((i, j), report));
        }
    }
    Ok(out)
}

//! Sparse many-photon Fock states and their exact evolution under linear optics.
//!
//! A linear-optical interferometer is described by a unitary transfer matrix
//! `U = [u_ji]` acting on creation operators as `a_i^dagger -> sum_j u_ji a_j^dagger`.
//! The induced unitary on Fock space, written `B(U)` here, is computed by
//! expanding each occupation-number basis state as a product of transformed
//! creation operators applied to the vacuum.
//!
//! All maps are ordered (`BTreeMap`) so accumulation order, and therefore the
//! floating point result, is identical from run to run.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use num_complex::Complex;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scalar::{cone, creal, czero, Amp, Real};

/// Occupation numbers `|n_0, n_1, ..., n_{m-1}>` of a Fock basis state.
///
/// Ordering is lexicographic on the occupation sequence.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Default)]
pub struct FockBasisState(Vec<u8>);

impl FockBasisState {
    pub fn new(occupations: Vec<u8>) -> Self {
        Self(occupations)
    }

    pub fn vacuum(modes: usize) -> Self {
        Self(vec![0; modes])
    }

    /// A single photon in `mode`.
    pub fn single(modes: usize, mode: usize) -> Self {
        let mut occ = vec![0; modes];
        occ[mode] = 1;
        Self(occ)
    }

    pub fn modes(&self) -> usize {
        self.0.len()
    }

    pub fn photons(&self) -> usize {
        self.0.iter().map(|&n| n as usize).sum()
    }

    pub fn occupations(&self) -> &[u8] {
        &self.0
    }

    pub fn get(&self, mode: usize) -> u8 {
        self.0[mode]
    }

    pub fn into_inner(self) -> Vec<u8> {
        self.0
    }

    /// Concatenation `|a> |b>` on `a.modes() + b.modes()` modes.
    pub fn concat(&self, other: &Self) -> Self {
        let mut occ = Vec::with_capacity(self.0.len() + other.0.len());
        occ.extend_from_slice(&self.0);
        occ.extend_from_slice(&other.0);
        Self(occ)
    }
}

impl From<Vec<u8>> for FockBasisState {
    fn from(v: Vec<u8>) -> Self {
        Self(v)
    }
}

impl From<&[u8]> for FockBasisState {
    fn from(v: &[u8]) -> Self {
        Self(v.to_vec())
    }
}

impl fmt::Display for FockBasisState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, n) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{n}")?;
        }
        Ok(())
    }
}

impl FromStr for FockBasisState {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.is_empty() {
            return Ok(Self(Vec::new()));
        }
        s.split(',')
            .map(|t| {
                t.trim()
                    .parse::<u8>()
                    .map_err(|e| Error::Parse(format!("occupation {t:?}: {e}")))
            })
            .collect::<Result<Vec<_>>>()
            .map(Self)
    }
}

/// Square `m x m` unitary describing an interferometer.
///
/// Entry `(j, i)` is `u_ji`, the amplitude for a photon entering mode `i` to
/// leave in mode `j`; column `i` is the image of `a_i^dagger`.
#[derive(Clone, Debug, PartialEq)]
pub struct TransferMatrix<T: Real> {
    m: usize,
    entries: Vec<Amp<T>>,
}

impl<T: Real> TransferMatrix<T> {
    /// Builds from row-major entries and checks unitarity.
    pub fn new(m: usize, entries: Vec<Amp<T>>) -> Result<Self> {
        if entries.len() != m * m {
            return Err(Error::NotSquare {
                rows: m,
                cols: if m == 0 { entries.len() } else { entries.len() / m },
            });
        }
        let u = Self { m, entries };
        let dev = u.unitarity_deviation();
        if !(dev <= T::UNITARY_TOL) {
            return Err(Error::NonUnitary { deviation: dev });
        }
        Ok(u)
    }

    pub fn from_rows(rows: Vec<Vec<Amp<T>>>) -> Result<Self> {
        let m = rows.len();
        if let Some(bad) = rows.iter().find(|r| r.len() != m) {
            return Err(Error::NotSquare {
                rows: m,
                cols: bad.len(),
            });
        }
        Self::new(m, rows.into_iter().flatten().collect())
    }

    /// Real-valued rows, convenient for permutations and Hadamards.
    pub fn from_real_rows(rows: &[&[f64]]) -> Result<Self> {
        Self::from_rows(
            rows.iter()
                .map(|r| r.iter().map(|&x| creal(T::lit(x))).collect())
                .collect(),
        )
    }

    fn raw(m: usize, entries: Vec<Amp<T>>) -> Self {
        Self { m, entries }
    }

    pub fn identity(m: usize) -> Self {
        let mut e = vec![czero(); m * m];
        for i in 0..m {
            e[i * m + i] = cone();
        }
        Self::raw(m, e)
    }

    /// 50:50 beam splitter `[[1, 1], [1, -1]] / sqrt(2)`.
    pub fn hadamard() -> Self {
        let h = creal(T::FRAC_1_SQRT_2());
        Self::raw(2, vec![h, h, h, -h])
    }

    pub fn pauli_x() -> Self {
        Self::raw(2, vec![czero(), cone(), cone(), czero()])
    }

    pub fn pauli_z() -> Self {
        Self::raw(2, vec![cone(), czero(), czero(), -cone::<T>()])
    }

    /// `H^{⊗count}`; `count = 0` gives the 1x1 identity.
    pub fn hadamard_power(count: usize) -> Self {
        (0..count).fold(Self::identity(1), |acc, _| acc.kron(&Self::hadamard()))
    }

    /// Permutation sending mode `i` to mode `perm[i]`.
    pub fn permutation(perm: &[usize]) -> Result<Self> {
        let m = perm.len();
        let mut seen = vec![false; m];
        for &p in perm {
            if p >= m {
                return Err(Error::ModeOutOfRange { index: p, modes: m });
            }
            if std::mem::replace(&mut seen[p], true) {
                return Err(Error::DuplicateMode(p));
            }
        }
        let mut e = vec![czero(); m * m];
        for (i, &j) in perm.iter().enumerate() {
            e[j * m + i] = cone();
        }
        Ok(Self::raw(m, e))
    }

    /// Diagonal matrix of phase factors.
    pub fn diagonal(phases: &[Amp<T>]) -> Result<Self> {
        let m = phases.len();
        let mut e = vec![czero(); m * m];
        for (i, &p) in phases.iter().enumerate() {
            e[i * m + i] = p;
        }
        Self::new(m, e)
    }

    pub fn mode_count(&self) -> usize {
        self.m
    }

    /// `u_{row, col}`.
    #[inline]
    pub fn get(&self, row: usize, col: usize) -> Amp<T> {
        self.entries[row * self.m + col]
    }

    pub fn entries(&self) -> &[Amp<T>] {
        &self.entries
    }

    /// Kronecker product `self ⊗ other`; `self` indexes the slow digit.
    pub fn kron(&self, other: &Self) -> Self {
        let (a, b) = (self.m, other.m);
        let n = a * b;
        let mut e = vec![czero(); n * n];
        for r1 in 0..a {
            for c1 in 0..a {
                let x = self.get(r1, c1);
                if x == czero() {
                    continue;
                }
                for r2 in 0..b {
                    for c2 in 0..b {
                        e[(r1 * b + r2) * n + c1 * b + c2] = x * other.get(r2, c2);
                    }
                }
            }
        }
        Self::raw(n, e)
    }

    /// Block-diagonal `self ⊕ other`.
    pub fn direct_sum(&self, other: &Self) -> Self {
        let n = self.m + other.m;
        let mut e = vec![czero(); n * n];
        for r in 0..self.m {
            for c in 0..self.m {
                e[r * n + c] = self.get(r, c);
            }
        }
        for r in 0..other.m {
            for c in 0..other.m {
                e[(self.m + r) * n + self.m + c] = other.get(r, c);
            }
        }
        Self::raw(n, e)
    }

    /// Matrix product `self * other`.
    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.m != other.m {
            return Err(Error::DimensionMismatch {
                expected: self.m,
                got: other.m,
            });
        }
        let m = self.m;
        let mut e = vec![czero(); m * m];
        for r in 0..m {
            for k in 0..m {
                let x = self.get(r, k);
                if x == czero() {
                    continue;
                }
                for c in 0..m {
                    e[r * m + c] = e[r * m + c] + x * other.get(k, c);
                }
            }
        }
        Ok(Self::raw(m, e))
    }

    /// `max |(U^dagger U - I)_{ij}|`.
    pub fn unitarity_deviation(&self) -> f64 {
        let m = self.m;
        let mut worst = 0.0f64;
        for i in 0..m {
            for j in 0..m {
                let mut s = czero::<T>();
                for k in 0..m {
                    s = s + self.get(k, i).conj() * self.get(k, j);
                }
                if i == j {
                    s = s - cone();
                }
                let d = s.norm().as_f64();
                if d.is_nan() {
                    return f64::NAN;
                }
                worst = worst.max(d);
            }
        }
        worst
    }
}

/// Sparse superposition of Fock basis states with complex amplitudes.
#[derive(Clone, Debug, PartialEq)]
pub struct FockVector<T: Real> {
    modes: usize,
    terms: BTreeMap<FockBasisState, Amp<T>>,
    prune: T,
}

impl<T: Real> FockVector<T> {
    /// The zero vector on `modes` modes.
    pub fn zero(modes: usize) -> Self {
        Self {
            modes,
            terms: BTreeMap::new(),
            prune: T::lit(T::PRUNE),
        }
    }

    pub fn vacuum(modes: usize) -> Self {
        Self::basis(FockBasisState::vacuum(modes))
    }

    pub fn basis(state: FockBasisState) -> Self {
        let mut v = Self::zero(state.modes());
        v.terms.insert(state, cone());
        v
    }

    /// Builds a vector from `(basis, amplitude)` pairs, summing repeats.
    pub fn from_terms<I>(modes: usize, terms: I) -> Result<Self>
    where
        I: IntoIterator<Item = (FockBasisState, Amp<T>)>,
    {
        let mut v = Self::zero(modes);
        for (b, a) in terms {
            if b.modes() != modes {
                return Err(Error::DimensionMismatch {
                    expected: modes,
                    got: b.modes(),
                });
            }
            v.accumulate(b, a);
        }
        v.prune_small();
        Ok(v)
    }

    /// Sets the magnitude below which amplitudes are dropped after each operation.
    pub fn with_prune_threshold(mut self, threshold: T) -> Self {
        self.prune = threshold;
        self.prune_small();
        self
    }

    pub fn prune_threshold(&self) -> T {
        self.prune
    }

    pub fn mode_count(&self) -> usize {
        self.modes
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Terms in canonical (lexicographic) order.
    pub fn iter(&self) -> impl Iterator<Item = (&FockBasisState, &Amp<T>)> {
        self.terms.iter()
    }

    pub fn amplitude(&self, state: &FockBasisState) -> Amp<T> {
        self.terms.get(state).copied().unwrap_or_else(czero)
    }

    pub fn norm_sqr(&self) -> T {
        self.terms.values().map(|a| a.norm_sqr()).sum()
    }

    pub fn is_normalized(&self) -> bool {
        (self.norm_sqr().as_f64() - 1.0).abs() <= T::NORM_TOL
    }

    /// Returns the vector divided by its norm; the zero vector is an error.
    pub fn normalized(&self) -> Result<Self> {
        let n = self.norm_sqr();
        if n <= T::zero() {
            return Err(Error::NotNormalized { norm_sqr: 0.0 });
        }
        Ok(self.scaled(creal(T::one() / n.sqrt())))
    }

    pub fn scaled(&self, factor: Amp<T>) -> Self {
        let mut out = Self::zero(self.modes);
        out.prune = self.prune;
        for (b, a) in &self.terms {
            out.accumulate(b.clone(), *a * factor);
        }
        out.prune_small();
        out
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &Self) -> Amp<T> {
        let (small, large, conj_small) = if self.len() <= other.len() {
            (self, other, true)
        } else {
            (other, self, false)
        };
        let mut s = czero();
        for (b, a) in &small.terms {
            if let Some(c) = large.terms.get(b) {
                s = s + if conj_small { a.conj() * c } else { c.conj() * a };
            }
        }
        s
    }

    /// Largest amplitude difference against `other`, over the union of supports.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        let mut worst = 0.0f64;
        for (b, a) in &self.terms {
            worst = worst.max((*a - other.amplitude(b)).norm().as_f64());
        }
        for (b, a) in &other.terms {
            if !self.terms.contains_key(b) {
                worst = worst.max(a.norm().as_f64());
            }
        }
        worst
    }

    /// Photon numbers present in the support.
    pub fn photon_numbers(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.terms.keys().map(|b| b.photons()).collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    pub(crate) fn accumulate(&mut self, b: FockBasisState, a: Amp<T>) {
        let e = self.terms.entry(b).or_insert_with(czero);
        *e = *e + a;
    }

    pub(crate) fn prune_small(&mut self) {
        let thr = self.prune;
        self.terms.retain(|_, a| a.norm() > thr);
    }

    /// Line-oriented text form, one `n_0,...,n_{m-1} : re imag` line per term.
    ///
    /// A leading `# modes <m>` line records the mode count so empty vectors
    /// round-trip too.
    pub fn to_text(&self) -> String {
        let mut s = format!("# modes {}\n", self.modes);
        for (b, a) in &self.terms {
            s.push_str(&format!("{b} : {} {}\n", a.re, a.im));
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut modes: Option<usize> = None;
        let mut terms = Vec::new();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                let mut it = rest.split_whitespace();
                if it.next() == Some("modes") {
                    let m = it
                        .next()
                        .ok_or_else(|| Error::Parse("missing mode count".into()))?;
                    modes = Some(
                        m.parse()
                            .map_err(|e| Error::Parse(format!("mode count {m:?}: {e}")))?,
                    );
                }
                continue;
            }
            let (occ, amp) = line
                .split_once(':')
                .ok_or_else(|| Error::Parse(format!("missing ':' in {line:?}")))?;
            let b: FockBasisState = occ.parse()?;
            let mut parts = amp.split_whitespace();
            let mut num = |what: &str| -> Result<T> {
                let t = parts
                    .next()
                    .ok_or_else(|| Error::Parse(format!("missing {what} part in {line:?}")))?;
                t.parse::<f64>()
                    .map(T::lit)
                    .map_err(|e| Error::Parse(format!("{what} {t:?}: {e}")))
            };
            let re = num("real")?;
            let im = num("imaginary")?;
            if modes.is_none() {
                modes = Some(b.modes());
            }
            terms.push((b, Complex::new(re, im)));
        }
        let modes = modes.ok_or_else(|| Error::Parse("empty input without mode header".into()))?;
        Self::from_terms(modes, terms)
    }
}

/// `sqrt(n!)` for `n = 0..=max`.
fn sqrt_factorials<T: Real>(max: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(max + 1);
    let mut f = 1.0f64;
    out.push(T::one());
    for n in 1..=max {
        f *= n as f64;
        out.push(T::lit(f.sqrt()));
    }
    out
}

/// `B(U)|occ>` for a single basis state, as sorted `(occupation, amplitude)` pairs.
///
/// Each photon in input mode `i` contributes a factor `sum_j u_ji a_j^dagger`;
/// monomials are merged as they are generated, so the work is bounded by the
/// number of distinct output patterns rather than `m^n`.
fn evolve_basis<T: Real>(u: &TransferMatrix<T>, occ: &[u8], sqrt_fact: &[T]) -> Vec<(Vec<u8>, Amp<T>)> {
    let m = u.mode_count();
    let mut monomials: BTreeMap<Vec<u8>, Amp<T>> = BTreeMap::new();
    monomials.insert(vec![0; m], cone());
    for (i, &n) in occ.iter().enumerate() {
        let column: Vec<(usize, Amp<T>)> = (0..m)
            .map(|j| (j, u.get(j, i)))
            .filter(|(_, x)| *x != czero())
            .collect();
        for _ in 0..n {
            let mut next: BTreeMap<Vec<u8>, Amp<T>> = BTreeMap::new();
            for (mono, coef) in &monomials {
                for &(j, x) in &column {
                    let mut key = mono.clone();
                    key[j] += 1;
                    let e = next.entry(key).or_insert_with(czero);
                    *e = *e + *coef * x;
                }
            }
            monomials = next;
        }
    }
    let inv_in: T = occ
        .iter()
        .fold(T::one(), |acc, &n| acc * sqrt_fact[n as usize])
        .recip();
    monomials
        .into_iter()
        .map(|(out, coef)| {
            let norm_out = out.iter().fold(T::one(), |acc, &n| acc * sqrt_fact[n as usize]);
            let amp = coef * (norm_out * inv_in);
            (out, amp)
        })
        .collect()
}

fn max_photons<T: Real>(psi: &FockVector<T>) -> usize {
    psi.photon_numbers().last().copied().unwrap_or(0)
}

/// `B(U)|psi>`.
pub fn apply_transfer<T: Real>(u: &TransferMatrix<T>, psi: &FockVector<T>) -> Result<FockVector<T>> {
    if u.mode_count() != psi.mode_count() {
        return Err(Error::DimensionMismatch {
            expected: psi.mode_count(),
            got: u.mode_count(),
        });
    }
    let sqrt_fact = sqrt_factorials::<T>(max_photons(psi));
    let terms: Vec<(&FockBasisState, &Amp<T>)> = psi.iter().collect();
    let evolved: Vec<Vec<(Vec<u8>, Amp<T>)>> = terms
        .par_iter()
        .map(|(b, _)| evolve_basis(u, b.occupations(), &sqrt_fact))
        .collect();
    let mut out = FockVector::zero(psi.mode_count());
    out.prune = psi.prune;
    for ((_, amp), outs) in terms.iter().zip(evolved) {
        for (occ, x) in outs {
            out.accumulate(FockBasisState(occ), **amp * x);
        }
    }
    out.prune_small();
    Ok(out)
}

fn validate_modes(modes: &[usize], total: usize) -> Result<()> {
    let mut seen = vec![false; total];
    for &i in modes {
        if i >= total {
            return Err(Error::ModeOutOfRange { index: i, modes: total });
        }
        if std::mem::replace(&mut seen[i], true) {
            return Err(Error::DuplicateMode(i));
        }
    }
    Ok(())
}

/// Applies `U` to the listed modes (in the listed order) and the identity elsewhere.
pub fn apply_transfer_on_modes<T: Real>(
    u: &TransferMatrix<T>,
    modes: &[usize],
    psi: &FockVector<T>,
) -> Result<FockVector<T>> {
    apply_block_diagonal(&[(modes.to_vec(), u.clone())], psi)
}

/// Applies a block-diagonal interferometer given as disjoint `(modes, U)` blocks.
///
/// Modes not covered by any block are left untouched. Each block is evolved
/// independently per distinct sub-occupation, then recombined.
pub fn apply_block_diagonal<T: Real>(
    blocks: &[(Vec<usize>, TransferMatrix<T>)],
    psi: &FockVector<T>,
) -> Result<FockVector<T>> {
    let total = psi.mode_count();
    let all: Vec<usize> = blocks.iter().flat_map(|(m, _)| m.iter().copied()).collect();
    validate_modes(&all, total)?;
    for (modes, u) in blocks {
        if modes.len() != u.mode_count() {
            return Err(Error::DimensionMismatch {
                expected: modes.len(),
                got: u.mode_count(),
            });
        }
    }
    let sqrt_fact = sqrt_factorials::<T>(max_photons(psi));

    // Distinct sub-occupations per block, evolved once each.
    type Cache<T> = HashMap<Vec<u8>, Vec<(Vec<u8>, Amp<T>)>>;
    let mut caches: Vec<Cache<T>> = Vec::with_capacity(blocks.len());
    for (modes, u) in blocks {
        let mut keys: Vec<Vec<u8>> = psi
            .iter()
            .map(|(b, _)| modes.iter().map(|&i| b.get(i)).collect())
            .collect();
        keys.sort();
        keys.dedup();
        let evolved: Vec<_> = keys
            .par_iter()
            .map(|k| evolve_basis(u, k, &sqrt_fact))
            .collect();
        caches.push(keys.into_iter().zip(evolved).collect());
    }

    let terms: Vec<(&FockBasisState, &Amp<T>)> = psi.iter().collect();
    let expanded: Vec<Vec<(FockBasisState, Amp<T>)>> = terms
        .par_iter()
        .map(|(b, amp)| {
            let mut acc: Vec<(Vec<u8>, Amp<T>)> = vec![(b.occupations().to_vec(), **amp)];
            for ((modes, _), cache) in blocks.iter().zip(&caches) {
                let key: Vec<u8> = modes.iter().map(|&i| b.get(i)).collect();
                let outs = &cache[&key];
                let mut next = Vec::with_capacity(acc.len() * outs.len());
                for (occ, a) in &acc {
                    for (sub, x) in outs {
                        let mut o = occ.clone();
                        for (&mode, &n) in modes.iter().zip(sub) {
                            o[mode] = n;
                        }
                        next.push((o, *a * *x));
                    }
                }
                acc = next;
            }
            acc.into_iter().map(|(o, a)| (FockBasisState(o), a)).collect()
        })
        .collect();

    let mut out = FockVector::zero(total);
    out.prune = psi.prune;
    for list in expanded {
        for (b, a) in list {
            out.accumulate(b, a);
        }
    }
    out.prune_small();
    Ok(out)
}

/// Relabels modes: the photon content of mode `i` moves to mode `perm[i]`.
///
/// Equivalent to `apply_transfer(TransferMatrix::permutation(perm), psi)`.
pub fn permute_modes<T: Real>(psi: &FockVector<T>, perm: &[usize]) -> Result<FockVector<T>> {
    if perm.len() != psi.mode_count() {
        return Err(Error::DimensionMismatch {
            expected: psi.mode_count(),
            got: perm.len(),
        });
    }
    validate_modes(perm, perm.len())?;
    let mut out = FockVector::zero(psi.mode_count());
    out.prune = psi.prune;
    for (b, a) in psi.iter() {
        let mut occ = vec![0u8; perm.len()];
        for (i, &n) in b.occupations().iter().enumerate() {
            occ[perm[i]] = n;
        }
        out.accumulate(FockBasisState(occ), *a);
    }
    Ok(out)
}

/// `|a> ⊗ |b>` with `b`'s modes appended after `a`'s.
pub fn tensor<T: Real>(a: &FockVector<T>, b: &FockVector<T>) -> FockVector<T> {
    let mut out = FockVector::zero(a.mode_count() + b.mode_count());
    out.prune = a.prune.min(b.prune);
    for (ba, xa) in a.iter() {
        for (bb, xb) in b.iter() {
            out.accumulate(ba.concat(bb), *xa * *xb);
        }
    }
    out.prune_small();
    out
}

/// Born-rule distribution over full detector patterns.
pub fn measure_all<T: Real>(psi: &FockVector<T>) -> Result<BTreeMap<FockBasisState, T>> {
    if !psi.is_normalized() {
        return Err(Error::NotNormalized {
            norm_sqr: psi.norm_sqr().as_f64(),
        });
    }
    Ok(psi.iter().map(|(b, a)| (b.clone(), a.norm_sqr())).collect())
}

/// Detects `pattern` on `on_modes` (in the listed order).
///
/// Returns the probability of that outcome and the renormalized state of the
/// remaining modes, kept in ascending mode order. A zero-probability outcome
/// yields the zero vector as the residual.
pub fn project_pattern<T: Real>(
    psi: &FockVector<T>,
    pattern: &FockBasisState,
    on_modes: &[usize],
) -> Result<(T, FockVector<T>)> {
    let total = psi.mode_count();
    validate_modes(on_modes, total)?;
    if pattern.modes() != on_modes.len() {
        return Err(Error::DimensionMismatch {
            expected: on_modes.len(),
            got: pattern.modes(),
        });
    }
    let mut measured = vec![false; total];
    for &i in on_modes {
        measured[i] = true;
    }
    let rest: Vec<usize> = (0..total).filter(|&i| !measured[i]).collect();
    let mut residual = FockVector::zero(rest.len());
    residual.prune = psi.prune;
    for (b, a) in psi.iter() {
        if on_modes
            .iter()
            .zip(pattern.occupations())
            .all(|(&i, &n)| b.get(i) == n)
        {
            let occ: Vec<u8> = rest.iter().map(|&i| b.get(i)).collect();
            residual.accumulate(FockBasisState(occ), *a);
        }
    }
    let total_norm = psi.norm_sqr();
    if total_norm <= T::zero() {
        return Err(Error::NotNormalized { norm_sqr: 0.0 });
    }
    let p = residual.norm_sqr() / total_norm;
    if p <= T::zero() {
        return Ok((T::zero(), FockVector::zero(rest.len())));
    }
    let residual = residual.normalized()?;
    Ok((p, residual))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::c;

    type V = FockVector<f64>;
    type U = TransferMatrix<f64>;

    fn b(v: &[u8]) -> FockBasisState {
        FockBasisState::from(v)
    }

    fn close(a: Amp<f64>, re: f64, im: f64) -> bool {
        (a.re - re).abs() < 1e-12 && (a.im - im).abs() < 1e-12
    }

    #[test]
    fn swap_exchanges_occupations() {
        let out = apply_transfer(&U::pauli_x(), &V::basis(b(&[2, 1]))).unwrap();
        assert_eq!(out.len(), 1);
        assert!(close(out.amplitude(&b(&[1, 2])), 1.0, 0.0));
    }

    #[test]
    fn z_phase_on_second_mode() {
        let out = apply_transfer(&U::pauli_z(), &V::basis(b(&[0, 1]))).unwrap();
        assert!(close(out.amplitude(&b(&[0, 1])), -1.0, 0.0));
        let out = apply_transfer(&U::pauli_z(), &V::basis(b(&[3, 2]))).unwrap();
        assert!(close(out.amplitude(&b(&[3, 2])), 1.0, 0.0));
    }

    #[test]
    fn hong_ou_mandel() {
        let out = apply_transfer(&U::hadamard(), &V::basis(b(&[1, 1]))).unwrap();
        let r = std::f64::consts::FRAC_1_SQRT_2;
        assert_eq!(out.len(), 2);
        assert!(close(out.amplitude(&b(&[2, 0])), r, 0.0));
        assert!(close(out.amplitude(&b(&[0, 2])), -r, 0.0));
        assert_eq!(out.amplitude(&b(&[1, 1])), czero());
        let probs = measure_all(&out).unwrap();
        assert!(!probs.contains_key(&b(&[1, 1])));
    }

    #[test]
    fn single_photon_follows_column() {
        let out = apply_transfer(&U::hadamard(), &V::basis(b(&[1, 0]))).unwrap();
        let r = std::f64::consts::FRAC_1_SQRT_2;
        assert!(close(out.amplitude(&b(&[1, 0])), r, 0.0));
        assert!(close(out.amplitude(&b(&[0, 1])), r, 0.0));
    }

    #[test]
    fn non_unitary_rejected() {
        let err = U::from_real_rows(&[&[1.0, 1.0], &[0.0, 1.0]]).unwrap_err();
        assert!(matches!(err, Error::NonUnitary { .. }));
        assert!(matches!(
            U::new(2, vec![c(1.0, 0.0); 3]),
            Err(Error::NotSquare { .. })
        ));
    }

    #[test]
    fn dimension_mismatch() {
        let err = apply_transfer(&U::identity(3), &V::vacuum(2)).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { .. }));
    }

    #[test]
    fn on_modes_examples() {
        // H on modes {0, 3} of a 6-mode state with one photon in 0 and one in 4.
        let psi = V::basis(b(&[1, 0, 0, 0, 1, 0]));
        let out = apply_transfer_on_modes(&U::hadamard(), &[0, 3], &psi).unwrap();
        let r = std::f64::consts::FRAC_1_SQRT_2;
        assert_eq!(out.len(), 2);
        assert!(close(out.amplitude(&b(&[1, 0, 0, 0, 1, 0])), r, 0.0));
        assert!(close(out.amplitude(&b(&[0, 0, 0, 1, 1, 0])), r, 0.0));

        let psi = V::basis(b(&[1, 1, 0]));
        let out = apply_transfer_on_modes(&U::pauli_x(), &[1, 2], &psi).unwrap();
        assert!(close(out.amplitude(&b(&[1, 0, 1])), 1.0, 0.0));

        let out = apply_transfer_on_modes(&U::identity(2), &[2, 0], &psi).unwrap();
        assert_eq!(out, psi);
    }

    #[test]
    fn on_modes_errors() {
        let psi = V::basis(b(&[1, 1, 0]));
        assert!(matches!(
            apply_transfer_on_modes(&U::hadamard(), &[1, 3], &psi),
            Err(Error::ModeOutOfRange { index: 3, .. })
        ));
        assert!(matches!(
            apply_transfer_on_modes(&U::hadamard(), &[1, 1], &psi),
            Err(Error::DuplicateMode(1))
        ));
        assert!(matches!(
            apply_transfer_on_modes(&U::hadamard(), &[0, 1, 2], &psi),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn tensor_examples() {
        let a = V::basis(b(&[1]));
        let bb = V::basis(b(&[0, 1]));
        let t = tensor(&a, &bb);
        assert_eq!(t.mode_count(), 3);
        assert!(close(t.amplitude(&b(&[1, 0, 1])), 1.0, 0.0));

        let r = std::f64::consts::FRAC_1_SQRT_2;
        let plus = V::from_terms(2, [(b(&[1, 0]), c(r, 0.0)), (b(&[0, 1]), c(r, 0.0))]).unwrap();
        let t = tensor(&plus, &a);
        assert!(close(t.amplitude(&b(&[1, 0, 1])), r, 0.0));
        assert!(close(t.amplitude(&b(&[0, 1, 1])), r, 0.0));
        assert!(t.is_normalized());
    }

    #[test]
    fn measure_requires_normalization() {
        let v = V::from_terms(1, [(b(&[1]), c(0.5, 0.0))]).unwrap();
        assert!(matches!(measure_all(&v), Err(Error::NotNormalized { .. })));
        let p = measure_all(&V::basis(b(&[1, 1]))).unwrap();
        assert_eq!(p.get(&b(&[1, 1])), Some(&1.0));
    }

    #[test]
    fn project_examples() {
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let psi = V::from_terms(3, [(b(&[1, 0, 1]), c(r, 0.0)), (b(&[0, 1, 1]), c(r, 0.0))]).unwrap();
        let (p, res) = project_pattern(&psi, &b(&[1]), &[2]).unwrap();
        assert!((p - 1.0).abs() < 1e-12);
        assert!(close(res.amplitude(&b(&[1, 0])), r, 0.0));
        assert!(close(res.amplitude(&b(&[0, 1])), r, 0.0));

        let (p, res) = project_pattern(&psi, &b(&[0]), &[2]).unwrap();
        assert_eq!(p, 0.0);
        assert!(res.is_empty());

        // Full projection agrees with measure_all.
        let hom = apply_transfer(&U::hadamard(), &V::basis(b(&[1, 1]))).unwrap();
        let dist = measure_all(&hom).unwrap();
        for (pat, prob) in &dist {
            let (p, res) = project_pattern(&hom, pat, &[0, 1]).unwrap();
            assert!((p - prob).abs() < 1e-12);
            assert_eq!(res.mode_count(), 0);
        }
    }

    #[test]
    fn text_round_trip() {
        let hom = apply_transfer(&U::hadamard(), &V::basis(b(&[1, 1]))).unwrap();
        let text = hom.to_text();
        assert!(text.contains("0,2 : -0.70710678118654"));
        let back = V::from_text(&text).unwrap();
        assert_eq!(back, hom);
        assert!(V::from_text("1,0 0.5 0").is_err());
    }

    #[test]
    fn prune_threshold_is_configurable() {
        let v = V::from_terms(1, [(b(&[1]), c(1e-3, 0.0)), (b(&[0]), c(1.0, 0.0))]).unwrap();
        assert_eq!(v.len(), 2);
        let v = v.with_prune_threshold(1e-2);
        assert_eq!(v.len(), 1);
    }

    #[test]
    fn single_precision_engine() {
        let out = apply_transfer(
            &TransferMatrix::<f32>::hadamard(),
            &FockVector::<f32>::basis(b(&[1, 1])),
        )
        .unwrap();
        assert_eq!(out.len(), 2);
        assert!(out.is_normalized());
    }
}

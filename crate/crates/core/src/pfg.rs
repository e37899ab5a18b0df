//! Pairwise fusion gates: circuit construction, pattern classification and
//! empirical Kraus derivation.
//!
//! A gate of level `k` sends the two input qudits plus the GHZ ancillae
//! `GHZ(d, 2) ⊗ GHZ(d, 4) ⊗ ... ⊗ GHZ(d, 2^k)` through `H^{⊗k+1} ⊗ I_d` and
//! counts photons in all `2^{k+1} d` modes. The resulting POVM on the inputs
//! has Kraus operators
//!
//! * `sqrt(d^-k) <i|<i|` (failure, label [`OutcomeLabel::Same`]),
//! * `sqrt(c_k) <phi_{i,j,±}|` with `c_k = sum_{p=1..k} d^-p`,
//! * `<psi_{i,j,±}|`.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use rayon::prelude::*;
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::fock::{self, FockBasisState, FockVector, TransferMatrix};
use crate::lemma::{self, StabilizerSpec};
use crate::qudit::{self, QuditState, Sign};
use crate::scalar::{creal, czero, Amp, Real};

/// Largest mode count [`build_circuit`] will materialize as a dense matrix.
pub const MAX_CIRCUIT_MODES: usize = 4096;

/// Which Kraus operator a detector pattern realizes. Indices satisfy `i < j`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum OutcomeLabel {
    Same(usize),
    Phi(usize, usize, Sign),
    Psi(usize, usize, Sign),
}

impl OutcomeLabel {
    pub fn is_success(&self) -> bool {
        !matches!(self, OutcomeLabel::Same(_))
    }

    pub fn sign(&self) -> Option<Sign> {
        match *self {
            OutcomeLabel::Same(_) => None,
            OutcomeLabel::Phi(_, _, s) | OutcomeLabel::Psi(_, _, s) => Some(s),
        }
    }

    /// Squared prefactor of the Kraus operator.
    pub fn weight<T: Real>(&self, d: usize, k: usize) -> T {
        match self {
            OutcomeLabel::Same(_) => T::from_usize_lossy(d).powi(-(k as i32)),
            OutcomeLabel::Phi(..) => c_k(d, k),
            OutcomeLabel::Psi(..) => T::one(),
        }
    }

    /// Nonzero entries `(a, b, coefficient)` of the normalized bra.
    pub fn bra<T: Real>(&self) -> Vec<(usize, usize, T)> {
        let h = T::lit(0.5).sqrt();
        match *self {
            OutcomeLabel::Same(i) => vec![(i, i, T::one())],
            OutcomeLabel::Phi(i, j, s) => vec![(i, i, h), (j, j, h * s.factor::<T>())],
            OutcomeLabel::Psi(i, j, s) => vec![(i, j, h), (j, i, h * s.factor::<T>())],
        }
    }

    /// The bra as a two-qudit state (its ket conjugate, all coefficients real).
    pub fn ket<T: Real>(&self, d: usize) -> Result<QuditState<T>> {
        QuditState::from_terms(d, 2, self.bra::<T>().into_iter().map(|(a, b, w)| (vec![a, b], creal(w))))
    }
}

impl fmt::Display for OutcomeLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OutcomeLabel::Same(i) => write!(f, "Same({i})"),
            OutcomeLabel::Phi(i, j, s) => write!(f, "Phi({i},{j},{s})"),
            OutcomeLabel::Psi(i, j, s) => write!(f, "Psi({i},{j},{s})"),
        }
    }
}

impl Serialize for OutcomeLabel {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

/// `sum_{p=1..k} d^-p`; zero for `k = 0`.
pub fn c_k<T: Real>(d: usize, k: usize) -> T {
    let inv = T::from_usize_lossy(d).recip();
    (1..=k).map(|p| inv.powi(p as i32)).fold(T::zero(), |a, b| a + b)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct KrausOutcome<T: Real> {
    pub label: OutcomeLabel,
    pub weight: T,
}

/// All Kraus operators of the level-`k` gate, ordered by label.
pub fn kraus_set<T: Real>(d: usize, k: usize) -> Result<Vec<KrausOutcome<T>>> {
    if d < 2 {
        return Err(Error::InvalidDimension(d));
    }
    let mut labels: Vec<OutcomeLabel> = (0..d).map(OutcomeLabel::Same).collect();
    for i in 0..d {
        for j in (i + 1)..d {
            for s in Sign::BOTH {
                if k > 0 {
                    labels.push(OutcomeLabel::Phi(i, j, s));
                }
                labels.push(OutcomeLabel::Psi(i, j, s));
            }
        }
    }
    labels.sort();
    Ok(labels
        .into_iter()
        .map(|label| KrausOutcome {
            label,
            weight: label.weight(d, k),
        })
        .collect())
}

/// Interferometer and ancilla of a level-`k` gate on dimension `d` qudits.
#[derive(Clone, Debug)]
pub struct PfgCircuit<T: Real> {
    pub d: usize,
    pub k: usize,
    pub transfer: TransferMatrix<T>,
    /// Encoded `⊗_{q=1..k} GHZ(d, 2^q)`; the 0-mode vacuum when `k = 0`.
    pub ancilla: FockVector<T>,
}

pub fn build_circuit<T: Real>(d: usize, k: usize) -> Result<PfgCircuit<T>> {
    if d < 2 {
        return Err(Error::InvalidDimension(d));
    }
    let modes = if k < 16 { (1usize << (k + 1)).saturating_mul(d) } else { usize::MAX };
    if modes > MAX_CIRCUIT_MODES {
        return Err(Error::Capacity(format!(
            "d = {d}, k = {k} needs {modes} modes (limit {MAX_CIRCUIT_MODES})"
        )));
    }
    let spec = StabilizerSpec { k, p: 0, d };
    let mut anc = FockVector::vacuum(0);
    for q in 1..=k {
        anc = fock::tensor(&anc, &qudit::encode(&qudit::ghz::<T>(d, 1 << q)?));
    }
    Ok(PfgCircuit {
        d,
        k,
        transfer: spec.interferometer(),
        ancilla: anc,
    })
}

impl<T: Real> PfgCircuit<T> {
    pub fn mode_count(&self) -> usize {
        self.transfer.mode_count()
    }

    pub fn ancilla_photons(&self) -> usize {
        2 * ((1usize << self.k) - 1)
    }

    /// Total photon count: two input photons plus the ancillae.
    pub fn photons(&self) -> usize {
        1usize << (self.k + 1)
    }

    /// Lemma parameters for level `p` of this gate.
    pub fn lemma_spec(&self, p: usize) -> Result<StabilizerSpec> {
        StabilizerSpec::new(self.k, p, self.d)
    }

    /// Encoded two-qudit input joined with the ancilla.
    pub fn input(&self, psi: &QuditState<T>) -> Result<FockVector<T>> {
        if psi.qudit_count() != 2 || psi.dim() != self.d {
            return Err(Error::DimensionMismatch {
                expected: 2,
                got: psi.qudit_count(),
            });
        }
        Ok(fock::tensor(&qudit::encode(psi), &self.ancilla))
    }

    /// Detector-plane state for a two-qudit input.
    pub fn evolve(&self, psi: &QuditState<T>) -> Result<FockVector<T>> {
        let spec = StabilizerSpec { k: self.k, p: 0, d: self.d };
        fock::apply_block_diagonal(&spec.interferometer_blocks(), &self.input(psi)?)
    }

    fn check_capacity(&self) -> Result<()> {
        let ok = self.d <= 5 && (self.k <= 1 || (self.k == 2 && self.d <= 3));
        if ok {
            Ok(())
        } else {
            Err(Error::Capacity(format!(
                "Kraus derivation supports d <= 5 with k <= 1, or d <= 3 with k = 2; got d = {}, k = {}",
                self.d, self.k
            )))
        }
    }
}

/// Photon number per residue class `i (mod d)`.
pub fn conserved_counts(pattern: &FockBasisState, d: usize) -> Result<Vec<usize>> {
    if d == 0 || pattern.modes() % d != 0 {
        return Err(Error::DimensionMismatch {
            expected: d * pattern.modes().div_ceil(d.max(1)),
            got: pattern.modes(),
        });
    }
    Ok(counts_of(pattern.occupations(), d))
}

fn counts_of(occ: &[u8], d: usize) -> Vec<usize> {
    let mut n = vec![0usize; d];
    for (mu, &x) in occ.iter().enumerate() {
        n[mu % d] += x as usize;
    }
    n
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct PatternStats {
    pub counts: Vec<usize>,
    /// `f(N_i)`, the 1-based position of the lowest set bit; `None` for `N_i = 0`.
    pub digits: Vec<Option<usize>>,
    pub v: usize,
    pub argmin: Vec<usize>,
}

/// Binary-digit statistics of the conserved counts for a level-`k` gate.
pub fn pattern_stats(counts: &[usize], k: usize) -> Result<PatternStats> {
    let digits: Vec<Option<usize>> = counts
        .iter()
        .map(|&n| (n > 0).then(|| n.trailing_zeros() as usize + 1))
        .collect();
    let min = digits
        .iter()
        .flatten()
        .copied()
        .min()
        .ok_or_else(|| Error::ImpossiblePattern("no photons detected".into()))?;
    if min > k + 2 {
        return Err(Error::ImpossiblePattern(format!(
            "counts {counts:?} are all divisible by 2^{}",
            k + 2
        )));
    }
    let argmin = digits
        .iter()
        .enumerate()
        .filter(|(_, f)| **f == Some(min))
        .map(|(i, _)| i)
        .collect();
    Ok(PatternStats {
        counts: counts.to_vec(),
        digits,
        v: min - 1,
        argmin,
    })
}

/// Assigns a detector pattern to its Kraus label.
pub fn classify(pattern: &FockBasisState, d: usize, k: usize) -> Result<(PatternStats, OutcomeLabel)> {
    let modes = (1usize << (k + 1)) * d;
    if pattern.modes() != modes {
        return Err(Error::DimensionMismatch {
            expected: modes,
            got: pattern.modes(),
        });
    }
    classify_occ(pattern.occupations(), d, k)
}

fn classify_occ(occ: &[u8], d: usize, k: usize) -> Result<(PatternStats, OutcomeLabel)> {
    let counts = counts_of(occ, d);
    let total: usize = counts.iter().sum();
    if total != 1 << (k + 1) {
        return Err(Error::ImpossiblePattern(format!(
            "{total} photons detected, expected {}",
            1 << (k + 1)
        )));
    }
    let stats = pattern_stats(&counts, k)?;
    let label = match (stats.v, stats.argmin.as_slice()) {
        (v, &[i]) if v == k + 1 => OutcomeLabel::Same(i),
        (v, &[i, j]) if v <= k => {
            let sign = lemma::parity_of(occ, v, d);
            if v == 0 {
                OutcomeLabel::Psi(i, j, sign)
            } else {
                OutcomeLabel::Phi(i, j, sign)
            }
        }
        (v, set) => {
            return Err(Error::ImpossiblePattern(format!(
                "v = {v} with argmin {set:?} (k = {k})"
            )))
        }
    };
    Ok((stats, label))
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct LabelStats {
    pub patterns: usize,
    /// Sum over patterns of `|lambda_P|^2` where the functional is `lambda_P <e_label|`.
    pub weight: f64,
    pub expected: f64,
}

/// Outcome of [`derive_kraus`].
#[derive(Clone, Debug, Serialize)]
pub struct KrausDerivation {
    pub d: usize,
    pub k: usize,
    /// Detector patterns with nonzero amplitude for some basis input.
    pub patterns: usize,
    pub labels: BTreeMap<OutcomeLabel, LabelStats>,
    /// Largest `|| v_P - lambda_P e_label ||` over patterns.
    pub max_residual: f64,
    /// Largest `|sqrt(weight) - sqrt(expected)|` over labels.
    pub max_weight_deviation: f64,
    /// `sum_P ||v_P||^2 / d^2`; one for a unitary evolution.
    pub total_probability: f64,
    /// Failure probability on the maximally mixed input.
    pub same_probability: f64,
    /// For input `|ii>`: probability of each `(i, v, argmin)` class.
    pub diagonal_levels: BTreeMap<(usize, usize, Vec<usize>), f64>,
}

impl KrausDerivation {
    pub fn max_deviation(&self) -> f64 {
        self.max_residual.max(self.max_weight_deviation)
    }

    pub fn success_probability(&self) -> f64 {
        1.0 - self.same_probability
    }

    pub fn passed(&self, tol: f64) -> bool {
        self.max_deviation() <= tol && (self.total_probability - 1.0).abs() <= tol
    }
}

struct Source<T> {
    input: usize,
    amp: T,
    /// Per residue class, index into that class's sub-occupation table.
    sub: Vec<usize>,
}

struct Group<T: Real> {
    sources: Vec<Source<T>>,
    /// Per class: output patterns and the dense amplitude table `[sub][pattern]`.
    outputs: Vec<(Vec<Vec<u8>>, Vec<Vec<Amp<T>>>)>,
}

fn build_groups<T: Real>(circuit: &PfgCircuit<T>) -> Result<Vec<Group<T>>> {
    let (d, k) = (circuit.d, circuit.k);
    let blocks = circuit.photons();
    let h = TransferMatrix::<T>::hadamard_power(k + 1);
    let amp = T::from_usize_lossy(d).powi(k as i32).sqrt().recip();

    // Sources keyed by conserved counts; sub-occupations stored per class.
    let mut keyed: BTreeMap<Vec<usize>, Vec<(usize, Vec<Vec<u8>>)>> = BTreeMap::new();
    let anc_choices = d.pow(k as u32);
    for input in 0..d * d {
        let (a, b) = (input / d, input % d);
        for g in 0..anc_choices {
            let mut digits = vec![a, b];
            let mut rest = g;
            for q in 1..=k {
                digits.extend(std::iter::repeat(rest % d).take(1 << q));
                rest /= d;
            }
            let mut subs = vec![vec![0u8; blocks]; d];
            for (q, &lvl) in digits.iter().enumerate() {
                subs[lvl][q] = 1;
            }
            let counts: Vec<usize> = subs.iter().map(|s| s.iter().map(|&x| x as usize).sum()).collect();
            keyed.entry(counts).or_default().push((input, subs));
        }
    }

    let mut cache: HashMap<Vec<u8>, Vec<(Vec<u8>, Amp<T>)>> = HashMap::new();
    let mut groups = Vec::with_capacity(keyed.len());
    for (_, members) in keyed {
        let mut outputs = Vec::with_capacity(d);
        let mut sub_index: Vec<HashMap<Vec<u8>, usize>> = vec![HashMap::new(); d];
        for c in 0..d {
            let mut subs: Vec<Vec<u8>> = Vec::new();
            for (_, s) in &members {
                if !sub_index[c].contains_key(&s[c]) {
                    sub_index[c].insert(s[c].clone(), subs.len());
                    subs.push(s[c].clone());
                }
            }
            for s in &subs {
                if !cache.contains_key(s) {
                    let out = fock::apply_transfer(&h, &FockVector::basis(FockBasisState::new(s.clone())))?;
                    let list = out.iter().map(|(b, a)| (b.occupations().to_vec(), *a)).collect();
                    cache.insert(s.clone(), list);
                }
            }
            let evolved: Vec<&Vec<(Vec<u8>, Amp<T>)>> = subs.iter().map(|s| &cache[s]).collect();
            let mut pattern_index: BTreeMap<&[u8], usize> = BTreeMap::new();
            for list in &evolved {
                for (p, _) in list.iter() {
                    let n = pattern_index.len();
                    pattern_index.entry(p.as_slice()).or_insert(n);
                }
            }
            let mut ordered: Vec<(&[u8], usize)> = pattern_index.into_iter().collect();
            ordered.sort();
            let remap: HashMap<&[u8], usize> = ordered.iter().enumerate().map(|(new, (p, _))| (*p, new)).collect();
            let patterns: Vec<Vec<u8>> = ordered.iter().map(|(p, _)| p.to_vec()).collect();
            let table = evolved
                .iter()
                .map(|list| {
                    let mut row = vec![czero(); patterns.len()];
                    for (p, a) in list.iter() {
                        row[remap[p.as_slice()]] = *a;
                    }
                    row
                })
                .collect();
            outputs.push((patterns, table));
        }
        let sources = members
            .iter()
            .map(|(input, s)| Source {
                input: *input,
                amp,
                sub: (0..d).map(|c| sub_index[c][&s[c]]).collect(),
            })
            .collect();
        groups.push(Group { sources, outputs });
    }
    Ok(groups)
}

/// Visits every detector pattern of one group with its Kraus co-vector
/// (indexed by `a*d + b`).
fn visit_group<T: Real, F>(group: &Group<T>, d: usize, blocks: usize, mut visit: F) -> Result<()>
where
    F: FnMut(&[u8], &[Amp<T>]) -> Result<()>,
{
    let sizes: Vec<usize> = group.outputs.iter().map(|(p, _)| p.len()).collect();
    let mut idx = vec![0usize; d];
    let mut occ = vec![0u8; blocks * d];
    let mut v = vec![czero::<T>(); d * d];
    loop {
        for (c, (patterns, _)) in group.outputs.iter().enumerate() {
            for (b, &n) in patterns[idx[c]].iter().enumerate() {
                occ[b * d + c] = n;
            }
        }
        v.iter_mut().for_each(|x| *x = czero());
        for s in &group.sources {
            let mut prod = creal(s.amp);
            for c in 0..d {
                prod = prod * group.outputs[c].1[s.sub[c]][idx[c]];
                if prod.re == T::zero() && prod.im == T::zero() {
                    break;
                }
            }
            v[s.input] = v[s.input] + prod;
        }
        visit(&occ, &v)?;
        // Mixed-radix increment, last class fastest.
        let mut c = d;
        loop {
            if c == 0 {
                return Ok(());
            }
            c -= 1;
            idx[c] += 1;
            if idx[c] < sizes[c] {
                break;
            }
            idx[c] = 0;
        }
    }
}

/// Streams every detector pattern with its Kraus co-vector `v_P[a*d + b]`.
pub fn for_each_pattern<T: Real, F>(circuit: &PfgCircuit<T>, mut visit: F) -> Result<()>
where
    F: FnMut(&FockBasisState, &[Amp<T>]),
{
    circuit.check_capacity()?;
    let blocks = circuit.photons();
    let zero = T::lit(T::PRUNE).powi(2);
    for g in build_groups(circuit)? {
        visit_group(&g, circuit.d, blocks, |occ, v| {
            if v.iter().map(|a| a.norm_sqr()).sum::<T>() > zero {
                visit(&FockBasisState::from(occ), v);
            }
            Ok(())
        })?;
    }
    Ok(())
}

/// Materializes all Kraus co-vectors. Memory grows with the pattern count,
/// so this is meant for small gates; [`derive_kraus`] streams instead.
pub fn collect_kraus<T: Real>(circuit: &PfgCircuit<T>) -> Result<BTreeMap<FockBasisState, Vec<Amp<T>>>> {
    let mut out = BTreeMap::new();
    for_each_pattern(circuit, |p, v| {
        out.insert(p.clone(), v.to_vec());
    })?;
    Ok(out)
}

#[derive(Default)]
struct Accumulator {
    patterns: usize,
    labels: BTreeMap<OutcomeLabel, LabelStats>,
    max_residual: f64,
    total: f64,
    same: f64,
    diagonal_levels: BTreeMap<(usize, usize, Vec<usize>), f64>,
}

impl Accumulator {
    fn merge(&mut self, other: Accumulator) {
        self.patterns += other.patterns;
        for (l, s) in other.labels {
            let e = self.labels.entry(l).or_default();
            e.patterns += s.patterns;
            e.weight += s.weight;
        }
        self.max_residual = self.max_residual.max(other.max_residual);
        self.total += other.total;
        self.same += other.same;
        for (key, p) in other.diagonal_levels {
            *self.diagonal_levels.entry(key).or_default() += p;
        }
    }
}

/// Derives the gate's Kraus functionals from the Fock engine and checks them
/// against the closed-form set from [`kraus_set`].
///
/// Every pattern's co-vector must be a multiple of the bra named by
/// [`classify`]; the squared multiples summed per label give the weight.
pub fn derive_kraus<T: Real>(circuit: &PfgCircuit<T>) -> Result<KrausDerivation> {
    circuit.check_capacity()?;
    let (d, k) = (circuit.d, circuit.k);
    let blocks = circuit.photons();
    let zero = T::PRUNE * T::PRUNE;
    let groups = build_groups(circuit)?;
    let parts: Vec<Result<Accumulator>> = groups
        .par_iter()
        .map(|g| {
            let mut acc = Accumulator::default();
            let mut expected = vec![0.0f64; d * d];
            visit_group(g, d, blocks, |occ, v| {
                let v64: Vec<num_complex::Complex64> = v.iter().map(|a| crate::scalar::to_c64(*a)).collect();
                let nsq: f64 = v64.iter().map(|a| a.norm_sqr()).sum();
                acc.total += nsq;
                if nsq <= zero {
                    return Ok(());
                }
                acc.patterns += 1;
                let (stats, label) = classify_occ(occ, d, k)?;
                expected.iter_mut().for_each(|x| *x = 0.0);
                for (a, b, w) in label.bra::<f64>() {
                    expected[a * d + b] = w;
                }
                let lambda: num_complex::Complex64 = v64.iter().zip(&expected).map(|(x, e)| x * e).sum();
                let residual = v64
                    .iter()
                    .zip(&expected)
                    .map(|(x, e)| (x - lambda * e).norm_sqr())
                    .sum::<f64>()
                    .sqrt();
                acc.max_residual = acc.max_residual.max(residual);
                let e = acc.labels.entry(label).or_default();
                e.patterns += 1;
                e.weight += lambda.norm_sqr();
                if !label.is_success() {
                    acc.same += nsq;
                }
                for i in 0..d {
                    let p = v64[i * d + i].norm_sqr();
                    if p > 0.0 {
                        *acc
                            .diagonal_levels
                            .entry((i, stats.v, stats.argmin.clone()))
                            .or_default() += p;
                    }
                }
                Ok(())
            })?;
            Ok(acc)
        })
        .collect();
    let mut acc = Accumulator::default();
    for part in parts {
        acc.merge(part?);
    }

    let mut max_weight_deviation: f64 = 0.0;
    for ko in kraus_set::<f64>(d, k)? {
        let e = acc.labels.entry(ko.label).or_default();
        e.expected = ko.weight;
    }
    for s in acc.labels.values() {
        max_weight_deviation = max_weight_deviation.max((s.weight.sqrt() - s.expected.sqrt()).abs());
    }
    let norm = (d * d) as f64;
    Ok(KrausDerivation {
        d,
        k,
        patterns: acc.patterns,
        labels: acc.labels,
        max_residual: acc.max_residual,
        max_weight_deviation,
        total_probability: acc.total / norm,
        same_probability: acc.same / norm,
        diagonal_levels: acc.diagonal_levels,
    })
}

/// `|| sum_K K^dagger K - I ||_max` for the closed-form Kraus set, built
/// sparsely so large `d` stays cheap.
pub fn povm_completeness(d: usize, k: usize) -> Result<f64> {
    povm_deviation(d, k, c_k::<f64>(d, k))
}

/// Same check with an arbitrary `Phi` weight, used to show which coefficient
/// makes the set complete.
pub fn povm_deviation(d: usize, k: usize, phi_weight: f64) -> Result<f64> {
    let mut m: HashMap<(usize, usize), f64> = HashMap::new();
    for ko in kraus_set::<f64>(d, k)? {
        let w = match ko.label {
            OutcomeLabel::Phi(..) => phi_weight,
            _ => ko.weight,
        };
        let bra = ko.label.bra::<f64>();
        for &(a, b, x) in &bra {
            for &(a2, b2, y) in &bra {
                *m.entry((a * d + b, a2 * d + b2)).or_default() += w * x * y;
            }
        }
    }
    let mut dev: f64 = 0.0;
    for r in 0..d * d {
        let diag = m.get(&(r, r)).copied().unwrap_or(0.0);
        dev = dev.max((diag - 1.0).abs());
    }
    for (&(r, c), &x) in &m {
        if r != c {
            dev = dev.max(x.abs());
        }
    }
    Ok(dev)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProbabilityMode {
    Analytic,
    Empirical,
}

/// `1 - d^-(k+1)` analytically, or the engine-derived success probability on
/// the maximally mixed input.
pub fn success_probability(d: usize, k: usize, mode: ProbabilityMode) -> Result<f64> {
    match mode {
        ProbabilityMode::Analytic => {
            if d < 2 {
                return Err(Error::InvalidDimension(d));
            }
            Ok(1.0 - (d as f64).powi(-(k as i32 + 1)))
        }
        ProbabilityMode::Empirical => Ok(derive_kraus(&build_circuit::<f64>(d, k)?)?.success_probability()),
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct OutcomeRow {
    pub label: OutcomeLabel,
    pub patterns: usize,
    pub weight: f64,
    pub expected: f64,
}

/// Per-`(d, k)` verification summary.
#[derive(Clone, Debug, Serialize)]
pub struct PfgReport {
    pub d: usize,
    pub k: usize,
    pub patterns: usize,
    pub outcomes: Vec<OutcomeRow>,
    pub max_residual: f64,
    pub max_weight_deviation: f64,
    pub total_probability: f64,
    pub povm_deviation: f64,
    /// Completeness deviation if the `Phi` weight were `1/c_k` instead of `c_k`.
    pub inverse_weight_deviation: Option<f64>,
    pub success_analytic: f64,
    pub success_empirical: f64,
    pub passed: bool,
}

pub fn verify(d: usize, k: usize, tol: f64) -> Result<PfgReport> {
    let circuit = build_circuit::<f64>(d, k)?;
    let der = derive_kraus(&circuit)?;
    let povm = povm_completeness(d, k)?;
    let inverse = if k > 0 {
        Some(povm_deviation(d, k, c_k::<f64>(d, k).recip())?)
    } else {
        None
    };
    let analytic = success_probability(d, k, ProbabilityMode::Analytic)?;
    let empirical = der.success_probability();
    let passed = der.passed(tol) && povm <= 1e-12 && (analytic - empirical).abs() <= tol;
    Ok(PfgReport {
        d,
        k,
        patterns: der.patterns,
        outcomes: der
            .labels
            .iter()
            .map(|(label, s)| OutcomeRow {
                label: *label,
                patterns: s.patterns,
                weight: s.weight,
                expected: s.expected,
            })
            .collect(),
        max_residual: der.max_residual,
        max_weight_deviation: der.max_weight_deviation,
        total_probability: der.total_probability,
        povm_deviation: povm,
        inverse_weight_deviation: inverse,
        success_analytic: analytic,
        success_empirical: empirical,
        passed,
    })
}

/// Applies the Kraus operator `sqrt(w) <e_label|` to qudits `(a, b)` of `psi`,
/// returning the outcome probability and the renormalized post state on the
/// remaining qudits (order preserved). Zero probability gives a zero state.
pub fn apply_kraus<T: Real>(
    psi: &QuditState<T>,
    a: usize,
    b: usize,
    outcome: &KrausOutcome<T>,
) -> Result<(T, QuditState<T>)> {
    let n = psi.qudit_count();
    let d = psi.dim();
    for q in [a, b] {
        if q >= n {
            return Err(Error::QuditOutOfRange { index: q, count: n });
        }
    }
    if a == b {
        return Err(Error::InvalidParameter(format!("qudits must differ, got {a} twice")));
    }
    let bra = outcome.label.bra::<T>();
    let scale = outcome.weight.sqrt();
    let mut post = QuditState::zero(d, n - 2);
    for (digits, amp) in psi.iter() {
        let (x, y) = (digits[a], digits[b]);
        if let Some(&(_, _, w)) = bra.iter().find(|(p, q, _)| *p == x && *q == y) {
            let rest: Vec<usize> = digits
                .iter()
                .enumerate()
                .filter(|(q, _)| *q != a && *q != b)
                .map(|(_, &v)| v)
                .collect();
            post.accumulate(rest, *amp * (w * scale));
        }
    }
    post.prune();
    let prob = post.norm_sqr();
    if prob <= T::lit(T::PRUNE) {
        return Ok((T::zero(), QuditState::zero(d, n - 2)));
    }
    let post = post.scaled(creal(prob.sqrt().recip()));
    Ok((prob, post))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qudit::{pairwise_phi, pairwise_psi};

    fn occ(v: &[u8]) -> FockBasisState {
        FockBasisState::from(v)
    }

    #[test]
    fn circuit_shapes() {
        let c = build_circuit::<f64>(3, 0).unwrap();
        assert_eq!(c.mode_count(), 6);
        assert_eq!(c.ancilla.mode_count(), 0);
        assert_eq!(c.ancilla_photons(), 0);
        let c = build_circuit::<f64>(3, 1).unwrap();
        assert_eq!(c.mode_count(), 12);
        assert_eq!(c.ancilla, qudit::encode(&qudit::ghz::<f64>(3, 2).unwrap()));
        assert_eq!(c.ancilla_photons(), 2);
        let c = build_circuit::<f64>(2, 2).unwrap();
        assert_eq!(c.mode_count(), 16);
        assert_eq!(c.ancilla.photon_numbers(), vec![6]);
        assert!(c.transfer.unitarity_deviation() < 1e-12);
        assert!(build_circuit::<f64>(1, 0).is_err());
        assert!(matches!(build_circuit::<f64>(100, 6), Err(Error::Capacity(_))));
    }

    #[test]
    fn counts_examples() {
        assert_eq!(conserved_counts(&occ(&[1, 0, 0, 0, 0, 1]), 3).unwrap(), vec![1, 0, 1]);
        assert_eq!(conserved_counts(&occ(&[2, 0, 0, 2]), 2).unwrap(), vec![2, 2]);
        assert!(conserved_counts(&occ(&[1, 0, 0]), 2).is_err());
    }

    #[test]
    fn stats_examples() {
        let s = pattern_stats(&[3, 1, 0], 1).unwrap();
        assert_eq!(s.digits, vec![Some(1), Some(1), None]);
        assert_eq!((s.v, s.argmin.clone()), (0, vec![0, 1]));
        let s = pattern_stats(&[4, 0, 0], 1).unwrap();
        assert_eq!(s.digits[0], Some(3));
        assert_eq!((s.v, s.argmin.clone()), (2, vec![0]));
        let s = pattern_stats(&[2, 2, 0], 1).unwrap();
        assert_eq!((s.v, s.argmin), (1, vec![0, 1]));
        assert!(pattern_stats(&[0, 0], 1).is_err());
    }

    #[test]
    fn classify_examples() {
        // k = 1, d = 3: N = (4,0,0) only from all photons at level 0.
        let mut p = vec![0u8; 12];
        p[0] = 2;
        p[3] = 2;
        let (_, l) = classify(&occ(&p), 3, 1).unwrap();
        assert_eq!(l, OutcomeLabel::Same(0));
        let mut p = vec![0u8; 12];
        p[0] = 3;
        p[1] = 1;
        let (s, l) = classify(&occ(&p), 3, 1).unwrap();
        assert_eq!(s.v, 0);
        assert!(matches!(l, OutcomeLabel::Psi(0, 1, _)));
        let mut p = vec![0u8; 16];
        p[..4].fill(1);
        assert!(matches!(classify(&occ(&p), 4, 1), Err(Error::ImpossiblePattern(_))));
        assert!(classify(&occ(&[1, 1]), 3, 1).is_err());
    }

    #[test]
    fn qubit_fusion_kraus() {
        let c = build_circuit::<f64>(2, 0).unwrap();
        let der = derive_kraus(&c).unwrap();
        assert!(der.passed(1e-12), "{der:?}");
        let labels: Vec<String> = der.labels.keys().map(|l| l.to_string()).collect();
        assert_eq!(labels, vec!["Same(0)", "Same(1)", "Psi(0,1,+)", "Psi(0,1,-)"]);
        assert!((der.success_probability() - 0.5).abs() < 1e-12);
        let all = collect_kraus(&c).unwrap();
        assert_eq!(all.len(), 8);
    }

    #[test]
    fn one_ancilla_weights() {
        let der = derive_kraus(&build_circuit::<f64>(3, 1).unwrap()).unwrap();
        assert!(der.passed(1e-9), "{der:?}");
        for (l, s) in &der.labels {
            let want = match l {
                OutcomeLabel::Psi(..) => 1.0,
                _ => 1.0 / 3.0,
            };
            assert!((s.weight - want).abs() < 1e-12, "{l}: {}", s.weight);
        }
    }

    #[test]
    fn ck_values() {
        assert_eq!(c_k::<f64>(3, 0), 0.0);
        assert!((c_k::<f64>(3, 2) - 4.0 / 9.0).abs() < 1e-15);
        assert!((c_k::<f64>(10, 2) - 0.11).abs() < 1e-15);
        for d in [2, 3, 7] {
            for k in 0..5 {
                let id = (d as f64).powi(-(k as i32)) + (d as f64 - 1.0) * c_k::<f64>(d, k);
                assert!((id - 1.0).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn completeness() {
        assert!(povm_completeness(2, 0).unwrap() < 1e-15);
        assert!(povm_completeness(3, 1).unwrap() < 1e-15);
        assert!(povm_completeness(10, 2).unwrap() < 1e-14);
        assert!(povm_deviation(3, 2, c_k::<f64>(3, 2).recip()).unwrap() > 1.0);
    }

    #[test]
    fn analytic_success() {
        let a = |d, k| success_probability(d, k, ProbabilityMode::Analytic).unwrap();
        assert_eq!(a(2, 0), 0.5);
        assert!((a(10, 0) - 0.9).abs() < 1e-15);
        assert!((a(3, 1) - 8.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn capacity_guard() {
        let c = build_circuit::<f64>(4, 2).unwrap();
        assert!(matches!(derive_kraus(&c), Err(Error::Capacity(_))));
    }

    #[test]
    fn kraus_application() {
        let psi = pairwise_psi::<f64>(3, 0, 2, Sign::Minus).unwrap();
        let set = kraus_set::<f64>(3, 0).unwrap();
        let total: f64 = set.iter().map(|ko| apply_kraus(&psi, 0, 1, ko).unwrap().0).sum();
        assert!((total - 1.0).abs() < 1e-12);
        let hit = set
            .iter()
            .find(|ko| ko.label == OutcomeLabel::Psi(0, 2, Sign::Minus))
            .unwrap();
        assert!((apply_kraus(&psi, 0, 1, hit).unwrap().0 - 1.0).abs() < 1e-12);
        let phi = pairwise_phi::<f64>(3, 0, 1, Sign::Plus).unwrap();
        let set = kraus_set::<f64>(3, 1).unwrap();
        let phi_prob: f64 = set
            .iter()
            .filter(|ko| ko.label == OutcomeLabel::Phi(0, 1, Sign::Plus))
            .map(|ko| apply_kraus(&phi, 0, 1, ko).unwrap().0)
            .sum();
        assert!((phi_prob - c_k::<f64>(3, 1)).abs() < 1e-12);
    }

    #[test]
    fn f32_circuit() {
        let der = derive_kraus(&build_circuit::<f32>(2, 1).unwrap()).unwrap();
        assert!(der.passed(1e-5), "{der:?}");
    }
}

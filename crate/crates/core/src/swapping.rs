//! Entanglement swapping built from fusion gates at the qudit level.
//!
//! The gate acts as the abstract measurement from [`crate::pfg::kraus_set`]
//! on two qudits of a larger [`Register`]. Together with the single-qudit
//! measurement `M(y, z)` this gives the conversions
//!
//! * `|C>|C> -> Psi_{x,x,±}` ([`fuse_cc`]),
//! * `Psi_{x,y,±}|C> -> Psi_{x,z,±'}` ([`extend`]),
//! * `Psi_{x,y,±} Psi_{z,z,±'} -> Psi_{x,z,±''}` ([`bes`]),
//!
//! where `Psi_{x,y,s} = sum_{i,j} (|i, i+x0, j+y1, j> + s |i, i+x1, j+y0, j>) / (d sqrt 2)`.
//! Signs after a conversion are read off the post state by [`canonical_form`].

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fock::{self, FockBasisState};
use crate::pfg::{self, OutcomeLabel};
use crate::qudit::{self, PairSpec, QuditState, Sign};
use crate::scalar::{creal, to_c64, Real};

/// A multi-qudit state whose qudits carry tags that survive measurement.
#[derive(Clone, Debug, PartialEq)]
pub struct Register<T: Real> {
    pub state: QuditState<T>,
    pub labels: Vec<String>,
}

impl<T: Real> Register<T> {
    pub fn new(state: QuditState<T>, labels: Vec<String>) -> Result<Self> {
        if labels.len() != state.qudit_count() {
            return Err(Error::MalformedRegister(format!(
                "{} labels for {} qudits",
                labels.len(),
                state.qudit_count()
            )));
        }
        let distinct: BTreeSet<&String> = labels.iter().collect();
        if distinct.len() != labels.len() {
            return Err(Error::MalformedRegister("duplicate qudit labels".into()));
        }
        Ok(Self { state, labels })
    }

    /// Labels `"1"`, `"2"`, ... in qudit order.
    pub fn numbered(state: QuditState<T>) -> Self {
        let labels = (1..=state.qudit_count()).map(|i| i.to_string()).collect();
        Self { state, labels }
    }

    pub fn qudit_count(&self) -> usize {
        self.state.qudit_count()
    }

    pub fn dim(&self) -> usize {
        self.state.dim()
    }

    pub fn position(&self, label: &str) -> Result<usize> {
        self.labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| Error::MalformedRegister(format!("no qudit labelled {label}")))
    }

    fn check(&self, q: usize) -> Result<()> {
        if q >= self.qudit_count() {
            Err(Error::QuditOutOfRange {
                index: q,
                count: self.qudit_count(),
            })
        } else {
            Ok(())
        }
    }

    fn without(&self, drop: &[usize]) -> Vec<String> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(i, _)| !drop.contains(i))
            .map(|(_, l)| l.clone())
            .collect()
    }
}

/// How measurement outcomes are produced.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BranchMode {
    /// Every outcome with nonzero probability, in label order.
    Enumerate,
    /// One outcome drawn with a generator seeded from the value.
    Sample(u64),
}

#[derive(Clone, Debug)]
pub struct Branch<T: Real, L> {
    pub outcome: L,
    pub probability: T,
    pub register: Register<T>,
}

fn select<T: Real, L>(mut branches: Vec<Branch<T, L>>, mode: BranchMode) -> Vec<Branch<T, L>> {
    match mode {
        BranchMode::Enumerate => branches,
        BranchMode::Sample(seed) => {
            if branches.is_empty() {
                return branches;
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let total: f64 = branches.iter().map(|b| b.probability.as_f64()).sum();
            let mut r = rng.random::<f64>() * total;
            let mut pick = branches.len() - 1;
            for (i, b) in branches.iter().enumerate() {
                r -= b.probability.as_f64();
                if r < 0.0 {
                    pick = i;
                    break;
                }
            }
            vec![branches.swap_remove(pick)]
        }
    }
}

/// Applies the level-`k` fusion gate to qudits `(a, b)`, removing them.
pub fn apply_pfg<T: Real>(
    reg: &Register<T>,
    qudits: (usize, usize),
    k: usize,
    mode: BranchMode,
) -> Result<Vec<Branch<T, OutcomeLabel>>> {
    let (a, b) = qudits;
    reg.check(a)?;
    reg.check(b)?;
    let labels = reg.without(&[a, b]);
    let mut out = Vec::new();
    for ko in pfg::kraus_set::<T>(reg.dim(), k)? {
        let (p, post) = pfg::apply_kraus(&reg.state, a, b, &ko)?;
        if p > T::lit(T::PRUNE) {
            out.push(Branch {
                outcome: ko.label,
                probability: p,
                register: Register {
                    state: post,
                    labels: labels.clone(),
                },
            });
        }
    }
    Ok(select(out, mode))
}

/// Which of `y0+z0 = y1+z1` (first) and `y0+z1 = y1+z0` (second) hold mod `d`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Degeneracy {
    None,
    First,
    Second,
    Both,
}

pub fn degeneracy(y: PairSpec, z: PairSpec, d: usize) -> Degeneracy {
    let first = (y.0 + z.0) % d == (y.1 + z.1) % d;
    let second = (y.0 + z.1) % d == (y.1 + z.0) % d;
    match (first, second) {
        (false, false) => Degeneracy::None,
        (true, false) => Degeneracy::First,
        (false, true) => Degeneracy::Second,
        (true, true) => Degeneracy::Both,
    }
}

/// Outcome of `M(y, z)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum MyzLabel {
    /// `(<y0+z0| ± <y1+z1|) / sqrt 2`.
    Sum(Sign),
    /// `(<y0+z1| ± <y1+z0|) / sqrt 2`.
    Cross(Sign),
    /// `<y0+z0|` when the sum pair coincides.
    SumSingle,
    /// `<y0+z1|` when the cross pair coincides.
    CrossSingle,
    /// Rank-one completion `<t|` on a level outside the listed span.
    Completion(usize),
}

impl MyzLabel {
    pub fn is_success(&self) -> bool {
        !matches!(self, MyzLabel::Completion(_))
    }
}

impl fmt::Display for MyzLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MyzLabel::Sum(s) => write!(f, "sum{s}"),
            MyzLabel::Cross(s) => write!(f, "cross{s}"),
            MyzLabel::SumSingle => write!(f, "sum"),
            MyzLabel::CrossSingle => write!(f, "cross"),
            MyzLabel::Completion(t) => write!(f, "fail({t})"),
        }
    }
}

impl Serialize for MyzLabel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

/// The single-qudit measurement `M(y, z)` with its completion.
#[derive(Clone, Debug)]
pub struct MeasurementMyz {
    pub y: PairSpec,
    pub z: PairSpec,
    pub d: usize,
    pub degeneracy: Degeneracy,
    /// Each outcome with its bra as `(level, coefficient)` entries.
    pub kraus: Vec<(MyzLabel, Vec<(usize, f64)>)>,
}

impl MeasurementMyz {
    pub fn new(y: PairSpec, z: PairSpec, d: usize) -> Result<Self> {
        if d < 2 {
            return Err(Error::InvalidDimension(d));
        }
        for p in [y, z] {
            if p.0 == p.1 {
                return Err(Error::DegeneratePair(p.0));
            }
            if p.0.max(p.1) >= d {
                return Err(Error::LevelOutOfRange { value: p.0.max(p.1), d });
            }
        }
        let deg = degeneracy(y, z, d);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let (s0, s1) = ((y.0 + z.0) % d, (y.1 + z.1) % d);
        let (c0, c1) = ((y.0 + z.1) % d, (y.1 + z.0) % d);
        let mut kraus = Vec::new();
        if matches!(deg, Degeneracy::First | Degeneracy::Both) {
            kraus.push((MyzLabel::SumSingle, vec![(s0, 1.0)]));
        } else {
            for s in Sign::BOTH {
                kraus.push((MyzLabel::Sum(s), vec![(s0, h), (s1, h * s.factor::<f64>())]));
            }
        }
        if matches!(deg, Degeneracy::Second | Degeneracy::Both) {
            kraus.push((MyzLabel::CrossSingle, vec![(c0, 1.0)]));
        } else {
            for s in Sign::BOTH {
                kraus.push((MyzLabel::Cross(s), vec![(c0, h), (c1, h * s.factor::<f64>())]));
            }
        }
        let used: BTreeSet<usize> = [s0, s1, c0, c1].into_iter().collect();
        for t in (0..d).filter(|t| !used.contains(t)) {
            kraus.push((MyzLabel::Completion(t), vec![(t, 1.0)]));
        }
        Ok(Self {
            y,
            z,
            d,
            degeneracy: deg,
            kraus,
        })
    }

    /// `|| sum_K K^dagger K - I ||_max` on `C^d`.
    pub fn completeness_deviation(&self) -> f64 {
        let mut m = vec![vec![0.0f64; self.d]; self.d];
        for (_, bra) in &self.kraus {
            for &(a, x) in bra {
                for &(b, y) in bra {
                    m[a][b] += x * y;
                }
            }
        }
        let mut dev: f64 = 0.0;
        for (a, row) in m.iter().enumerate() {
            for (b, v) in row.iter().enumerate() {
                let id = if a == b { 1.0 } else { 0.0 };
                dev = dev.max((v - id).abs());
            }
        }
        dev
    }
}

/// Applies `M(y, z)` to one qudit, removing it.
pub fn apply_myz<T: Real>(
    reg: &Register<T>,
    qudit: usize,
    m: &MeasurementMyz,
    mode: BranchMode,
) -> Result<Vec<Branch<T, MyzLabel>>> {
    reg.check(qudit)?;
    if reg.dim() != m.d {
        return Err(Error::DimensionMismatch {
            expected: reg.dim(),
            got: m.d,
        });
    }
    let labels = reg.without(&[qudit]);
    let n = reg.qudit_count();
    let mut out = Vec::new();
    for (label, bra) in &m.kraus {
        let mut post = QuditState::zero(m.d, n - 1);
        for (digits, amp) in reg.state.iter() {
            if let Some(&(_, w)) = bra.iter().find(|(t, _)| *t == digits[qudit]) {
                let mut rest = digits.clone();
                rest.remove(qudit);
                post.accumulate(rest, *amp * T::lit(w));
            }
        }
        post.prune();
        let p = post.norm_sqr();
        if p > T::lit(T::PRUNE) {
            out.push(Branch {
                outcome: *label,
                probability: p,
                register: Register {
                    state: post.scaled(creal(p.sqrt().recip())),
                    labels: labels.clone(),
                },
            });
        }
    }
    Ok(select(out, mode))
}

/// Parameters of a state in the `Psi` family with `x0 < x1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Canonical {
    pub x: PairSpec,
    pub z: PairSpec,
    pub sign: Sign,
    /// `state = phase * Psi_{x,z,sign}`.
    pub phase: [f64; 2],
}

impl Canonical {
    pub fn key(&self) -> ClassKey {
        ClassKey {
            x: self.x,
            z: self.z,
            sign: self.sign,
        }
    }

    pub fn phase(&self) -> Complex64 {
        Complex64::new(self.phase[0], self.phase[1])
    }
}

/// A `Psi` family member up to global phase.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct ClassKey {
    pub x: PairSpec,
    pub z: PairSpec,
    pub sign: Sign,
}

impl ClassKey {
    pub fn state<T: Real>(&self, d: usize) -> Result<QuditState<T>> {
        qudit::psi_intermediate(d, self.x, self.z, self.sign)
    }
}

impl fmt::Display for ClassKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Psi[x={}, z={}, {}]", self.x, self.z, self.sign)
    }
}

/// Recognizes `state = phase * Psi_{x,z,s}` within `tol`, returning the
/// representative with `x0 < x1`.
///
/// Every term `|i, i+x_a, j+z_{1-a}, j>` carries the offsets `(x_a, z_{1-a})`,
/// so the support fixes `x` and `z` up to the swap symmetry; the sign and
/// phase then come from one overlap.
pub fn canonical_form<T: Real>(state: &QuditState<T>, tol: f64) -> Option<Canonical> {
    let d = state.dim();
    if state.qudit_count() != 4 || state.is_empty() {
        return None;
    }
    let offsets: BTreeSet<(usize, usize)> = state
        .iter()
        .map(|(q, _)| ((q[1] + d - q[0]) % d, (q[2] + d - q[3]) % d))
        .collect();
    let pairs: Vec<(usize, usize)> = offsets.into_iter().collect();
    let [(xa, zb), (xc, zd)] = pairs.as_slice() else {
        return None;
    };
    if xa == xc || zb == zd {
        return None;
    }
    // `pairs` is sorted, so xa < xc: (x0, z1) = (xa, zb) and (x1, z0) = (xc, zd).
    let x = PairSpec(*xa, *xc);
    let z = PairSpec(*zd, *zb);
    let norm = state.norm_sqr().as_f64().sqrt();
    if norm == 0.0 {
        return None;
    }
    for sign in Sign::BOTH {
        let reference = qudit::psi_intermediate::<T>(d, x, z, sign).ok()?;
        let overlap = to_c64(reference.inner(state));
        if (overlap.norm() - 1.0).abs() > tol {
            continue;
        }
        let phase = overlap / overlap.norm();
        let aligned = reference.scaled(num_complex::Complex::new(T::lit(phase.re), T::lit(phase.im)));
        if aligned.max_abs_diff(state) <= tol {
            return Some(Canonical {
                x,
                z,
                sign,
                phase: [phase.re, phase.im],
            });
        }
    }
    None
}

/// Fidelity of the two-qubit block spanned by `A_a = sum_i |i, i+x_a>/sqrt d`
/// and `B_b = sum_j |j+z_{1-b}, j>/sqrt d` with the nearer of
/// `(|A0 B0> ± |A1 B1>)/sqrt 2`.
pub fn bell_fidelity<T: Real>(state: &QuditState<T>, x: PairSpec, z: PairSpec) -> Result<f64> {
    let d = state.dim();
    if state.qudit_count() != 4 {
        return Err(Error::DimensionMismatch {
            expected: 4,
            got: state.qudit_count(),
        });
    }
    let zs = [z.0, z.1];
    let xs = [x.0, x.1];
    let mut m = [[Complex64::new(0.0, 0.0); 2]; 2];
    for (digits, amp) in state.iter() {
        for a in 0..2 {
            if (digits[1] + d - digits[0]) % d != xs[a] % d {
                continue;
            }
            for b in 0..2 {
                if (digits[2] + d - digits[3]) % d == zs[1 - b] % d {
                    m[a][b] += to_c64(*amp) / d as f64;
                }
            }
        }
    }
    let plus = (m[0][0] + m[1][1]).norm_sqr() / 2.0;
    let minus = (m[0][0] - m[1][1]).norm_sqr() / 2.0;
    Ok(plus.max(minus))
}

/// Result of one conversion path.
#[derive(Clone, Debug)]
pub struct Conversion<T: Real> {
    pub pfg: OutcomeLabel,
    pub myz: Vec<MyzLabel>,
    pub probability: f64,
    pub success: bool,
    pub register: Register<T>,
    /// Set for successful paths whose post state is in the `Psi` family.
    pub canonical: Option<Canonical>,
}

impl<T: Real> Conversion<T> {
    pub fn path(&self) -> Vec<String> {
        std::iter::once(self.pfg.to_string())
            .chain(self.myz.iter().map(|m| m.to_string()))
            .collect()
    }
}

/// Tolerance used when recognizing `Psi` family members after conversions.
pub const CANONICAL_TOL: f64 = 1e-9;

fn canonical_tol<T: Real>() -> f64 {
    CANONICAL_TOL.max(T::NORM_TOL)
}

fn pair_of(label: &OutcomeLabel) -> Option<PairSpec> {
    match *label {
        OutcomeLabel::Phi(i, j, _) | OutcomeLabel::Psi(i, j, _) => Some(PairSpec(i, j)),
        OutcomeLabel::Same(_) => None,
    }
}

fn step_seed(mode: BranchMode, salt: u64) -> BranchMode {
    match mode {
        BranchMode::Enumerate => BranchMode::Enumerate,
        BranchMode::Sample(s) => BranchMode::Sample(s.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(salt)),
    }
}

/// Gate on the inner qudits of `|C>_{123}|C>_{456}`, giving `Psi_{w,w',±}` on `1,2,5,6`.
pub fn fuse_cc<T: Real>(d: usize, k: usize, mode: BranchMode) -> Result<Vec<Conversion<T>>> {
    let c = qudit::c_state::<T>(d)?;
    let reg = Register::numbered(c.tensor(&c)?);
    let mut out = Vec::new();
    for br in apply_pfg(&reg, (2, 3), k, mode)? {
        let success = br.outcome.is_success();
        let canonical = if success {
            canonical_form(&br.register.state, canonical_tol::<T>())
        } else {
            None
        };
        out.push(Conversion {
            pfg: br.outcome,
            myz: Vec::new(),
            probability: br.probability.as_f64(),
            success,
            register: br.register,
            canonical,
        });
    }
    Ok(out)
}

fn require_psi<T: Real>(state: &QuditState<T>, what: &str) -> Result<Canonical> {
    canonical_form(state, canonical_tol::<T>())
        .ok_or_else(|| Error::MalformedRegister(format!("{what} is not of the Psi form")))
}

/// `Psi_{x,y,s}|C>` with the gate on qudits 4, 5 and `M(y, w)` on qudit 3,
/// `w` being the pair named by the gate outcome.
pub fn extend<T: Real>(left: &QuditState<T>, k: usize, mode: BranchMode) -> Result<Vec<Conversion<T>>> {
    let lc = require_psi(left, "left state")?;
    let d = left.dim();
    let reg = Register::numbered(left.tensor(&qudit::c_state::<T>(d)?)?);
    let mut out = Vec::new();
    for br in apply_pfg(&reg, (3, 4), k, step_seed(mode, 1))? {
        let p = br.probability.as_f64();
        let Some(w) = pair_of(&br.outcome) else {
            out.push(failure(br.outcome, vec![], p, br.register));
            continue;
        };
        let m = MeasurementMyz::new(lc.z, w, d)?;
        let q3 = br.register.position("3")?;
        for mb in apply_myz(&br.register, q3, &m, step_seed(mode, 2))? {
            out.push(finish(br.outcome, vec![mb.outcome], p * mb.probability.as_f64(), mb.register));
        }
    }
    Ok(out)
}

/// `Psi_{x,y,s} Psi_{u,v,s'}` on qudits `1..8`: gate on 4, 5, then
/// `M(y, w)` on qudit 3 and `M(w, u)` on qudit 6.
pub fn bes<T: Real>(
    left: &QuditState<T>,
    right: &QuditState<T>,
    k: usize,
    mode: BranchMode,
) -> Result<Vec<Conversion<T>>> {
    let lc = require_psi(left, "left state")?;
    let rc = require_psi(right, "right state")?;
    let d = left.dim();
    if right.dim() != d {
        return Err(Error::MalformedRegister(format!(
            "dimensions {d} and {} differ",
            right.dim()
        )));
    }
    let reg = Register::numbered(left.tensor(right)?);
    let mut out = Vec::new();
    for br in apply_pfg(&reg, (3, 4), k, step_seed(mode, 1))? {
        let p = br.probability.as_f64();
        let Some(w) = pair_of(&br.outcome) else {
            out.push(failure(br.outcome, vec![], p, br.register));
            continue;
        };
        let first = MeasurementMyz::new(lc.z, w, d)?;
        let second = MeasurementMyz::new(w, rc.x, d)?;
        let q3 = br.register.position("3")?;
        for mb in apply_myz(&br.register, q3, &first, step_seed(mode, 2))? {
            let p1 = p * mb.probability.as_f64();
            if !mb.outcome.is_success() {
                out.push(failure(br.outcome, vec![mb.outcome], p1, mb.register));
                continue;
            }
            let q6 = mb.register.position("6")?;
            for mc in apply_myz(&mb.register, q6, &second, step_seed(mode, 3))? {
                out.push(finish(
                    br.outcome,
                    vec![mb.outcome, mc.outcome],
                    p1 * mc.probability.as_f64(),
                    mc.register,
                ));
            }
        }
    }
    Ok(out)
}

fn failure<T: Real>(pfg: OutcomeLabel, myz: Vec<MyzLabel>, probability: f64, register: Register<T>) -> Conversion<T> {
    Conversion {
        pfg,
        myz,
        probability,
        success: false,
        register,
        canonical: None,
    }
}

fn finish<T: Real>(pfg: OutcomeLabel, myz: Vec<MyzLabel>, probability: f64, register: Register<T>) -> Conversion<T> {
    let success = pfg.is_success() && myz.iter().all(|m| m.is_success());
    let canonical = if success {
        canonical_form(&register.state, canonical_tol::<T>())
    } else {
        None
    };
    Conversion {
        pfg,
        myz,
        probability,
        success,
        register,
        canonical,
    }
}

/// One sign-update observation from an [`extend`] run.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct SignTransition {
    pub sign_in: Sign,
    pub pfg: OutcomeLabel,
    pub myz: MyzLabel,
    pub sign_out: Sign,
    pub z_out: PairSpec,
}

/// Enumerates [`extend`] on `Psi_{x,y,±}|C>` and records how the sign moves.
pub fn sign_transitions(d: usize, k: usize, x: PairSpec, y: PairSpec) -> Result<Vec<SignTransition>> {
    let mut rows = BTreeSet::new();
    for sign_in in Sign::BOTH {
        let left = qudit::psi_intermediate::<f64>(d, x, y, sign_in)?;
        for conv in extend(&left, k, BranchMode::Enumerate)? {
            if let (true, Some(c)) = (conv.success, conv.canonical) {
                rows.insert(SignTransition {
                    sign_in,
                    pfg: conv.pfg,
                    myz: conv.myz[0],
                    sign_out: c.sign,
                    z_out: c.z,
                });
            }
        }
    }
    Ok(rows.into_iter().collect())
}

/// One line of the branch trace.
#[derive(Clone, Debug, Serialize)]
pub struct TraceLine {
    pub stage: usize,
    pub input: String,
    pub path: Vec<String>,
    pub probability: f64,
    pub success: bool,
    pub x: Option<PairSpec>,
    pub z: Option<PairSpec>,
    pub sign: Option<Sign>,
    pub phase: Option<[f64; 2]>,
}

impl TraceLine {
    fn new<T: Real>(stage: usize, input: String, conv: &Conversion<T>, weight: f64) -> Self {
        Self {
            stage,
            input,
            path: conv.path(),
            probability: weight * conv.probability,
            success: conv.success,
            x: conv.canonical.map(|c| c.x),
            z: conv.canonical.map(|c| c.z),
            sign: conv.canonical.map(|c| c.sign),
            phase: conv.canonical.map(|c| c.phase),
        }
    }
}

/// Renders trace lines as JSON lines.
pub fn trace_jsonl(lines: &[TraceLine]) -> Result<String> {
    let mut s = String::new();
    for l in lines {
        s.push_str(&serde_json::to_string(l).map_err(|e| Error::Io(e.to_string()))?);
        s.push('\n');
    }
    Ok(s)
}

#[derive(Clone, Debug, Serialize)]
pub struct StageReport {
    pub stage: usize,
    pub partner: ClassKey,
    /// Success probability averaged over incoming classes.
    pub success_probability: f64,
    pub min_class_success: f64,
    pub max_class_success: f64,
    /// Largest `|sum of branch probabilities - 1|` over incoming classes.
    pub max_probability_leak: f64,
    pub branches: usize,
    pub success_branches: usize,
    /// Successful branches whose post state is not in the `Psi` family.
    pub closure_failures: usize,
    pub classes_out: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct ChainReport {
    pub d: usize,
    pub k: usize,
    pub initial: ClassKey,
    pub fuse_success: f64,
    pub stages: Vec<StageReport>,
    /// Distribution over final classes conditioned on every stage succeeding.
    pub final_classes: Vec<(ClassKey, f64)>,
    pub min_fidelity: f64,
    pub schmidt_ranks: Vec<usize>,
    #[serde(skip)]
    pub trace: Vec<TraceLine>,
}

impl ChainReport {
    pub fn expected_success(&self) -> f64 {
        1.0 - (self.d as f64).powi(-(self.k as i32 + 1))
    }

    /// Largest deviation of any stage's per-class success probability from `1 - d^-(k+1)`.
    pub fn max_success_deviation(&self) -> f64 {
        let want = self.expected_success();
        self.stages
            .iter()
            .flat_map(|s| [s.min_class_success, s.max_class_success])
            .chain(std::iter::once(self.fuse_success))
            .map(|p| (p - want).abs())
            .fold(0.0, f64::max)
    }

    pub fn closure_failures(&self) -> usize {
        self.stages.iter().map(|s| s.closure_failures).sum()
    }

    pub fn passed(&self, tol: f64) -> bool {
        self.closure_failures() == 0
            && self.max_success_deviation() <= tol
            && self.stages.iter().all(|s| s.max_probability_leak <= tol)
            && (1.0 - self.min_fidelity).abs() <= tol
            && self.schmidt_ranks.iter().all(|&r| r == 2)
    }
}

/// Runs `length` boosted swaps starting from one [`fuse_cc`] outcome.
///
/// Branches are enumerated exhaustively and merged by their `Psi` class, so
/// the cost stays flat in the chain length. Partners are fresh [`fuse_cc`]
/// outputs, cycling through the successful outcomes in label order.
pub fn run_chain(d: usize, k: usize, length: usize) -> Result<ChainReport> {
    let fused = fuse_cc::<f64>(d, k, BranchMode::Enumerate)?;
    let fuse_success: f64 = fused.iter().filter(|c| c.success).map(|c| c.probability).sum();
    let partners: Vec<&Conversion<f64>> = fused.iter().filter(|c| c.success).collect();
    let mut trace: Vec<TraceLine> = fused
        .iter()
        .map(|c| TraceLine::new(0, "C C".into(), c, 1.0))
        .collect();
    let initial = partners
        .first()
        .and_then(|c| c.canonical)
        .ok_or_else(|| Error::MalformedRegister("fusion produced no Psi state".into()))?
        .key();

    let mut classes: BTreeMap<ClassKey, f64> = BTreeMap::from([(initial, 1.0)]);
    let mut stages = Vec::with_capacity(length);
    let mut min_fidelity = f64::INFINITY;
    let mut schmidt_ranks = BTreeSet::new();
    for stage in 1..=length {
        let partner = partners[stage % partners.len()];
        let partner_key = partner
            .canonical
            .ok_or_else(|| Error::MalformedRegister("partner is not of the Psi form".into()))?
            .key();
        let mut next: BTreeMap<ClassKey, f64> = BTreeMap::new();
        let mut report = StageReport {
            stage,
            partner: partner_key,
            success_probability: 0.0,
            min_class_success: f64::INFINITY,
            max_class_success: f64::NEG_INFINITY,
            max_probability_leak: 0.0,
            branches: 0,
            success_branches: 0,
            closure_failures: 0,
            classes_out: 0,
        };
        for (key, mass) in &classes {
            let left = key.state::<f64>(d)?;
            let convs = bes(&left, &partner.register.state, k, BranchMode::Enumerate)?;
            let total: f64 = convs.iter().map(|c| c.probability).sum();
            report.max_probability_leak = report.max_probability_leak.max((total - 1.0).abs());
            let mut ok = 0.0;
            for conv in &convs {
                report.branches += 1;
                trace.push(TraceLine::new(stage, key.to_string(), conv, *mass));
                if !conv.success {
                    continue;
                }
                report.success_branches += 1;
                ok += conv.probability;
                match conv.canonical {
                    Some(c) => {
                        *next.entry(c.key()).or_default() += mass * conv.probability;
                        if stage == length {
                            let st = &conv.register.state;
                            min_fidelity = min_fidelity.min(bell_fidelity(st, c.x, c.z)?);
                            schmidt_ranks.insert(qudit::schmidt_rank(st, &[0, 1], 1e-9)?);
                        }
                    }
                    None => report.closure_failures += 1,
                }
            }
            report.success_probability += mass * ok;
            report.min_class_success = report.min_class_success.min(ok);
            report.max_class_success = report.max_class_success.max(ok);
        }
        let norm: f64 = next.values().sum();
        if norm > 0.0 {
            next.values_mut().for_each(|m| *m /= norm);
        }
        report.classes_out = next.len();
        stages.push(report);
        classes = next;
    }
    if length == 0 {
        let st = initial.state::<f64>(d)?;
        min_fidelity = bell_fidelity(&st, initial.x, initial.z)?;
        schmidt_ranks.insert(qudit::schmidt_rank(&st, &[0, 1], 1e-9)?);
    }
    Ok(ChainReport {
        d,
        k,
        initial,
        fuse_success,
        stages,
        final_classes: classes.into_iter().collect(),
        min_fidelity,
        schmidt_ranks: schmidt_ranks.into_iter().collect(),
        trace,
    })
}

/// Recomputes [`fuse_cc`] at the photon level: encodes `|C>|C>`, sends qudits
/// 3, 4 (and the ancilla) through the gate interferometer, detects each
/// pattern and decodes the remaining photons.
///
/// Returns the number of success patterns checked and the largest deviation
/// from the abstract branch of the same label after phase alignment.
pub fn fock_consistency(d: usize, k: usize) -> Result<(usize, f64)> {
    let circuit = pfg::build_circuit::<f64>(d, k)?;
    let c = qudit::c_state::<f64>(d)?;
    let reg = c.tensor(&c)?;
    let full = fock::tensor(&qudit::encode(&reg), &circuit.ancilla);
    let register_modes = 6 * d;
    let mut gate_modes: Vec<usize> = (2 * d..4 * d).collect();
    gate_modes.extend(register_modes..register_modes + circuit.ancilla.mode_count());
    let evolved = fock::apply_transfer_on_modes(&circuit.transfer, &gate_modes, &full)?;

    let abstract_branches: BTreeMap<OutcomeLabel, QuditState<f64>> = fuse_cc::<f64>(d, k, BranchMode::Enumerate)?
        .into_iter()
        .map(|c| (c.pfg, c.register.state))
        .collect();

    let patterns: BTreeSet<FockBasisState> = evolved
        .iter()
        .map(|(b, _)| FockBasisState::new(gate_modes.iter().map(|&m| b.get(m)).collect()))
        .collect();
    let mut checked = 0;
    let mut worst: f64 = 0.0;
    for pattern in patterns {
        let (_, label) = pfg::classify(&pattern, d, k)?;
        if !label.is_success() {
            continue;
        }
        let (p, residual) = fock::project_pattern(&evolved, &pattern, &gate_modes)?;
        if p <= 1e-12 {
            continue;
        }
        let photonic = qudit::decode(&residual, d)?;
        let reference = abstract_branches
            .get(&label)
            .ok_or_else(|| Error::ImpossiblePattern(format!("{label} has no abstract branch")))?;
        let overlap = reference.inner(&photonic);
        let aligned = reference.scaled(overlap / overlap.norm());
        worst = worst.max(aligned.max_abs_diff(&photonic));
        checked += 1;
    }
    Ok((checked, worst))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ps(a: usize, b: usize) -> PairSpec {
        PairSpec(a, b)
    }

    #[test]
    fn degeneracy_examples() {
        assert_eq!(degeneracy(ps(0, 1), ps(1, 0), 5), Degeneracy::First);
        assert_eq!(degeneracy(ps(0, 1), ps(0, 1), 5), Degeneracy::Second);
        assert_eq!(degeneracy(ps(0, 2), ps(0, 2), 4), Degeneracy::Both);
        assert_eq!(degeneracy(ps(0, 1), ps(0, 2), 5), Degeneracy::None);
        for d in [3, 5, 7] {
            for y in PairSpec::all(d) {
                for z in PairSpec::all(d) {
                    assert_ne!(degeneracy(y, z, d), Degeneracy::Both);
                }
            }
        }
    }

    #[test]
    fn myz_complete() {
        for d in [3, 4, 5, 6] {
            for y in PairSpec::all(d) {
                for z in PairSpec::all(d) {
                    let m = MeasurementMyz::new(y, z, d).unwrap();
                    assert!(m.completeness_deviation() < 1e-12, "d={d} y={y} z={z}");
                }
            }
        }
        let m = MeasurementMyz::new(ps(0, 1), ps(0, 2), 5).unwrap();
        assert_eq!(m.kraus.iter().filter(|(l, _)| l.is_success()).count(), 4);
        let m = MeasurementMyz::new(ps(0, 1), ps(1, 0), 5).unwrap();
        assert_eq!(m.kraus.iter().filter(|(l, _)| l.is_success()).count(), 3);
        assert!(MeasurementMyz::new(ps(1, 1), ps(0, 2), 5).is_err());
    }

    #[test]
    fn completion_fires_outside_span() {
        // y=(0,1), z=(0,2) uses levels {0,2,3,1}; level 4 is outside.
        let m = MeasurementMyz::new(ps(0, 1), ps(0, 2), 7).unwrap();
        let reg = Register::numbered(QuditState::<f64>::basis(7, &[4, 0]).unwrap());
        let br = apply_myz(&reg, 0, &m, BranchMode::Enumerate).unwrap();
        assert_eq!(br.len(), 1);
        assert_eq!(br[0].outcome, MyzLabel::Completion(4));
        assert!((br[0].probability - 1.0).abs() < 1e-12);
        assert_eq!(br[0].register.labels, vec!["2"]);
    }

    #[test]
    fn same_only_on_equal_levels() {
        let reg = Register::numbered(QuditState::<f64>::basis(3, &[2, 2]).unwrap());
        let br = apply_pfg(&reg, (0, 1), 0, BranchMode::Enumerate).unwrap();
        assert_eq!(br.len(), 1);
        assert_eq!(br[0].outcome, OutcomeLabel::Same(2));
        assert!((br[0].probability - 1.0).abs() < 1e-12);
        assert!(apply_pfg(&reg, (0, 2), 0, BranchMode::Enumerate).is_err());
    }

    #[test]
    fn canonical_round_trips() {
        let s = qudit::psi_intermediate::<f64>(3, ps(0, 1), ps(1, 2), Sign::Minus).unwrap();
        let c = canonical_form(&s, 1e-9).unwrap();
        assert_eq!((c.x, c.z, c.sign), (ps(0, 1), ps(1, 2), Sign::Minus));
        assert!((c.phase() - Complex64::new(1.0, 0.0)).norm() < 1e-12);

        assert!(canonical_form(&qudit::ghz::<f64>(3, 4).unwrap(), 1e-9).is_none());

        let ph = Complex64::from_polar(1.0, std::f64::consts::PI / 3.0);
        let s = qudit::psi_intermediate::<f64>(5, ps(1, 3), ps(4, 0), Sign::Plus)
            .unwrap()
            .scaled(ph);
        let c = canonical_form(&s, 1e-9).unwrap();
        assert!((c.phase() - ph).norm() < 1e-12);

        // Swapped representative maps to x0 < x1 with a sign-dependent phase.
        let s = qudit::psi_intermediate::<f64>(5, ps(3, 1), ps(0, 4), Sign::Minus).unwrap();
        let c = canonical_form(&s, 1e-9).unwrap();
        assert_eq!((c.x, c.z, c.sign), (ps(1, 3), ps(4, 0), Sign::Minus));
        assert!((c.phase() + Complex64::new(1.0, 0.0)).norm() < 1e-12);
    }

    /// Brute-force recognizer over every pair of pairs and both signs.
    fn brute_force(state: &QuditState<f64>) -> Option<ClassKey> {
        let d = state.dim();
        for x in PairSpec::all(d).filter(|p| p.0 < p.1) {
            for z in PairSpec::all(d) {
                for sign in Sign::BOTH {
                    let r = qudit::psi_intermediate::<f64>(d, x, z, sign).unwrap();
                    if (r.inner(state).norm() - 1.0).abs() < 1e-9 {
                        return Some(ClassKey { x, z, sign });
                    }
                }
            }
        }
        None
    }

    #[test]
    fn canonical_agrees_with_overlap_search() {
        for conv in fuse_cc::<f64>(3, 1, BranchMode::Enumerate).unwrap() {
            let fast = canonical_form(&conv.register.state, 1e-9).map(|c| c.key());
            assert_eq!(fast, brute_force(&conv.register.state), "{}", conv.pfg);
        }
    }

    #[test]
    fn fuse_outcomes() {
        for (d, k) in [(3, 0), (3, 1), (5, 0)] {
            let convs = fuse_cc::<f64>(d, k, BranchMode::Enumerate).unwrap();
            let total: f64 = convs.iter().map(|c| c.probability).sum();
            assert!((total - 1.0).abs() < 1e-10);
            let ok: f64 = convs.iter().filter(|c| c.success).map(|c| c.probability).sum();
            assert!((ok - (1.0 - (d as f64).powi(-(k as i32 + 1)))).abs() < 1e-12);
            for c in convs.iter().filter(|c| c.success) {
                let can = c.canonical.expect("Psi form");
                assert_eq!(c.register.labels, vec!["1", "2", "5", "6"]);
                assert_eq!(can.x, can.z.canonical());
            }
        }
    }

    #[test]
    fn extend_example() {
        let left = qudit::psi_intermediate::<f64>(5, ps(0, 1), ps(0, 2), Sign::Plus).unwrap();
        let convs = extend(&left, 0, BranchMode::Enumerate).unwrap();
        let total: f64 = convs.iter().map(|c| c.probability).sum();
        assert!((total - 1.0).abs() < 1e-10);
        let ok: f64 = convs.iter().filter(|c| c.success).map(|c| c.probability).sum();
        assert!((ok - 0.8).abs() < 1e-12);
        assert!(convs.iter().filter(|c| c.success).all(|c| c.canonical.is_some()));
        assert!(convs
            .iter()
            .all(|c| c.myz.iter().all(|m| m.is_success())));
    }

    #[test]
    fn four_values_on_third_qudit() {
        let d = 5;
        let (y, z) = (ps(0, 2), ps(1, 2));
        assert_eq!(degeneracy(y, z, d), Degeneracy::None);
        let left = qudit::psi_intermediate::<f64>(d, ps(0, 1), y, Sign::Plus).unwrap();
        let reg = Register::numbered(left.tensor(&qudit::c_state(d).unwrap()).unwrap());
        let br = apply_pfg(&reg, (3, 4), 0, BranchMode::Enumerate).unwrap();
        let hit = br
            .iter()
            .find(|b| b.outcome == OutcomeLabel::Psi(1, 2, Sign::Plus))
            .unwrap();
        let q3 = hit.register.position("3").unwrap();
        let values: BTreeSet<usize> = hit.register.state.iter().map(|(dg, _)| dg[q3]).collect();
        assert_eq!(values.len(), 4);
    }

    #[test]
    fn symmetric_sign_is_kept() {
        let x = ps(0, 1);
        let rows = sign_transitions(3, 0, x, x).unwrap();
        for r in rows.iter().filter(|r| {
            r.pfg == OutcomeLabel::Psi(0, 1, Sign::Plus) && r.myz == MyzLabel::Sum(Sign::Plus) && r.z_out == x
        }) {
            assert_eq!(r.sign_out, r.sign_in);
        }
    }

    #[test]
    fn sign_is_product_of_outcome_signs() {
        let myz_sign = |m: MyzLabel| match m {
            MyzLabel::Sum(s) | MyzLabel::Cross(s) => s,
            _ => Sign::Plus,
        };
        for (d, k) in [(3, 0), (3, 1), (5, 0), (5, 1)] {
            for (x, y) in [(ps(0, 1), ps(0, 1)), (ps(0, 2), ps(1, 0)), (ps(1, 2), ps(2, 0))] {
                let rows = sign_transitions(d, k, x, y).unwrap();
                assert!(!rows.is_empty());
                for r in rows {
                    let want = r.sign_in.times(r.pfg.sign().unwrap()).times(myz_sign(r.myz));
                    assert_eq!(r.sign_out, want, "d={d} k={k} {r:?}");
                }
            }
        }
    }

    #[test]
    fn sampling_is_seeded() {
        let a = fuse_cc::<f64>(5, 0, BranchMode::Sample(7)).unwrap();
        let b = fuse_cc::<f64>(5, 0, BranchMode::Sample(7)).unwrap();
        assert_eq!(a.len(), 1);
        assert_eq!(a[0].pfg, b[0].pfg);
    }

    #[test]
    fn malformed_inputs() {
        let g = qudit::ghz::<f64>(3, 4).unwrap();
        assert!(matches!(extend(&g, 0, BranchMode::Enumerate), Err(Error::MalformedRegister(_))));
        let reg = Register::numbered(g.clone());
        assert!(Register::new(g, vec!["a".into()]).is_err());
        assert!(reg.position("9").is_err());
    }

    #[test]
    fn fock_matches_abstract() {
        let (n, dev) = fock_consistency(3, 0).unwrap();
        assert!(n > 0);
        assert!(dev < 1e-9, "{dev}");
    }
}

//! Distribution-time model for first- and second-generation repeaters built
//! from fusion gates, plus a Monte Carlo check of its waiting-time factors.
//!
//! Links of length `L0` are generated in cycles of `tau0 = L0 / c` with
//! success probability `P_g = exp(-L0/L_att) eta_d^2 p_f`; swaps succeed with
//! probability `P_s`.
//!
//! * First generation, `2^n` segments: `T_0 = tau0 / P_g`,
//!   `tau_{k+1} = (3/2) T_k + 2^k tau0`, `T_{k+1} = tau_{k+1} / P_s`, and the
//!   final swap needs no heralding round trip: `T = (3/(2 P_s)) T_{n-1}`.
//! * Second generation, `m` nodes: `T = H(m+1) T_0(L/(m+1)) / P_s^m`.

use std::fmt;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Geometric};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Fusion/swapping hardware.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum Scheme {
    /// Qubit fusion and standard swapping, `p_f = 1/2`.
    Standard,
    /// Level-`k` pairwise fusion gates on dimension-`d` qudits with boosted swapping.
    Pairwise { d: usize, k: usize },
}

impl Scheme {
    pub fn name(&self) -> &'static str {
        match self {
            Scheme::Standard => "standard",
            Scheme::Pairwise { .. } => "pairwise",
        }
    }

    /// `(d, k)` as reported in sweep output; the standard scheme reports `(2, 0)`.
    pub fn dk(&self) -> (usize, usize) {
        match *self {
            Scheme::Standard => (2, 0),
            Scheme::Pairwise { d, k } => (d, k),
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scheme::Standard => write!(f, "standard"),
            Scheme::Pairwise { d, k } => write!(f, "pairwise(d={d}, k={k})"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RepeaterParams<T: Real> {
    pub eta_d: T,
    pub eta_c: T,
    pub scheme: Scheme,
    /// Total distance in km.
    pub l_tot: T,
    /// Attenuation length in km.
    pub l_att: T,
    /// Signal speed in km/s.
    pub c_fiber: T,
}

impl<T: Real> RepeaterParams<T> {
    pub const DEFAULT_L_ATT: f64 = 22.0;
    pub const DEFAULT_C_FIBER: f64 = 2e5;

    /// Parameters with the default attenuation length and fiber speed.
    pub fn new(eta_d: T, eta_c: T, scheme: Scheme, l_tot: T) -> Result<Self> {
        let p = Self {
            eta_d,
            eta_c,
            scheme,
            l_tot,
            l_att: T::lit(Self::DEFAULT_L_ATT),
            c_fiber: T::lit(Self::DEFAULT_C_FIBER),
        };
        p.validate()?;
        Ok(p)
    }

    /// Same efficiency `eta` for detectors and memory coupling.
    pub fn symmetric(eta: T, scheme: Scheme, l_tot: T) -> Result<Self> {
        Self::new(eta, eta, scheme, l_tot)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, eta) in [("eta_d", self.eta_d), ("eta_c", self.eta_c)] {
            if !(eta > T::zero() && eta <= T::one()) {
                return Err(Error::InvalidParameter(format!("{name} = {eta} outside (0, 1]")));
            }
        }
        for (name, v) in [("L_tot", self.l_tot), ("L_att", self.l_att), ("c_fiber", self.c_fiber)] {
            if !(v > T::zero() && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} = {v} must be positive")));
            }
        }
        if let Scheme::Pairwise { d, .. } = self.scheme {
            if d < 2 {
                return Err(Error::InvalidDimension(d));
            }
        }
        Ok(())
    }

    pub fn with_distance(&self, l_tot: T) -> Self {
        Self { l_tot, ..*self }
    }

    /// Fusion success probability.
    pub fn p_f(&self) -> T {
        match self.scheme {
            Scheme::Standard => T::lit(0.5),
            Scheme::Pairwise { d, k } => {
                let base = T::one() - T::from_usize_lossy(d).powi(-(k as i32 + 1));
                if k == 0 {
                    base
                } else {
                    base * self.eta_d.powi(2 * ((1i32 << k) - 1))
                }
            }
        }
    }

    /// Swapping success probability.
    pub fn p_s(&self) -> T {
        let e = self.eta_d * self.eta_c;
        match self.scheme {
            Scheme::Standard => e.powi(2) * self.p_f(),
            Scheme::Pairwise { .. } => e.powi(4) * self.p_f(),
        }
    }

    /// Link generation probability over one segment of length `l0`.
    pub fn p_g(&self, l0: T) -> T {
        (-l0 / self.l_att).exp() * self.eta_d.powi(2) * self.p_f()
    }

    /// `3 / (4 P_s)`.
    pub fn alpha(&self) -> T {
        T::lit(0.75) / self.p_s()
    }

    fn waiting(&self, l0: T) -> WaitingModel<T> {
        WaitingModel {
            p_g: self.p_g(l0),
            p_s: self.p_s(),
            tau0: l0 / self.c_fiber,
        }
    }
}

/// Optimized distribution time.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PerfResult<T: Real> {
    /// Mean time per distributed pair in seconds.
    pub t: T,
    /// Optimal nesting level `n` (first generation) or node count `m` (second).
    pub n_or_m_opt: usize,
    pub memory_time: T,
    /// `3/(4 P_s)`, reported for the first generation.
    pub alpha: Option<T>,
}

/// Waiting-time model in terms of its three primitive parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct WaitingModel<T: Real> {
    pub p_g: T,
    pub p_s: T,
    /// Cycle time in seconds.
    pub tau0: T,
}

impl<T: Real> WaitingModel<T> {
    pub fn new(p_g: T, p_s: T, tau0: T) -> Result<Self> {
        for (name, p) in [("P_g", p_g), ("P_s", p_s)] {
            if !(p > T::zero() && p <= T::one()) {
                return Err(Error::InvalidParameter(format!("{name} = {p} outside (0, 1]")));
            }
        }
        if !(tau0 > T::zero()) {
            return Err(Error::InvalidParameter(format!("tau0 = {tau0} must be positive")));
        }
        Ok(Self { p_g, p_s, tau0 })
    }

    pub fn alpha(&self) -> T {
        T::lit(0.75) / self.p_s
    }

    /// Closed-form `T_k`.
    ///
    /// `(alpha^k - 1)/(alpha - 1)` is evaluated as `expm1(k ln(1+delta))/delta`
    /// with `delta = (3 - 4 P_s)/(4 P_s)` so that it stays accurate as
    /// `alpha -> 1`; below `|alpha - 1| < 1e-9` a series around the limit `k` is used.
    pub fn t_level(&self, k: usize) -> T {
        let alpha = self.alpha();
        let delta = (T::lit(3.0) - T::lit(4.0) * self.p_s) / (T::lit(4.0) * self.p_s);
        let kk = T::from_usize_lossy(k);
        let geometric = if delta.abs() < T::lit(1e-9) {
            // k + delta k(k-1)/2 + delta^2 k(k-1)(k-2)/6; the bare limit alone
            // would be off by about k delta relative.
            let k1 = kk - T::one();
            kk + delta * kk * k1 / T::lit(2.0) + delta * delta * kk * k1 * (k1 - T::one()) / T::lit(6.0)
        } else {
            (kk * delta.ln_1p()).exp_m1() / delta
        };
        let two_k = T::lit(2.0).powi(k as i32);
        two_k * self.tau0 * (alpha.powi(k as i32) / self.p_g + T::lit(2.0) * alpha * geometric / T::lit(3.0))
    }

    /// `T_k` by iterating the level recursion.
    pub fn t_level_recursive(&self, k: usize) -> T {
        let mut t = self.tau0 / self.p_g;
        for level in 0..k {
            let tau = T::lit(1.5) * t + T::lit(2.0).powi(level as i32) * self.tau0;
            t = tau / self.p_s;
        }
        t
    }

    /// First generation with `2^n` segments: `(T, memory time)`.
    pub fn first(&self, n: usize) -> Result<(T, T)> {
        if n < 1 {
            return Err(Error::InvalidParameter("first generation needs n >= 1".into()));
        }
        let t = T::lit(1.5) / self.p_s * self.t_level(n - 1);
        Ok((t, self.p_s * t))
    }

    /// Second generation with `m` nodes: `(T, memory time)`.
    pub fn second(&self, m: usize) -> Result<(T, T)> {
        if m < 1 {
            return Err(Error::InvalidParameter("second generation needs m >= 1".into()));
        }
        let tau = harmonic::<T>(m + 1) * self.tau0 / self.p_g;
        Ok((tau / self.p_s.powi(m as i32), tau))
    }

    /// Monte Carlo mean of the first-generation protocol.
    pub fn mc_first(&self, n: usize, trials: usize, seed: u64) -> Result<McEstimate> {
        if n < 1 {
            return Err(Error::InvalidParameter("first generation needs n >= 1".into()));
        }
        let (geo, ps) = self.mc_setup(trials)?;
        Ok(run_trials(trials, seed, |rng| first_trial(n, &geo, ps, rng)).scaled(self.tau0.as_f64()))
    }

    /// Monte Carlo mean of the second-generation protocol.
    pub fn mc_second(&self, m: usize, trials: usize, seed: u64) -> Result<McEstimate> {
        if m < 1 {
            return Err(Error::InvalidParameter("second generation needs m >= 1".into()));
        }
        let (geo, ps) = self.mc_setup(trials)?;
        let all = ps.powi(m as i32);
        Ok(run_trials(trials, seed, |rng| {
            let mut t = 0.0;
            loop {
                t += (0..=m).map(|_| cycles(&geo, rng)).fold(0.0, f64::max);
                if rng.random::<f64>() < all {
                    return t;
                }
            }
        })
        .scaled(self.tau0.as_f64()))
    }

    fn mc_setup(&self, trials: usize) -> Result<(Geometric, f64)> {
        if trials < MIN_TRIALS {
            return Err(Error::InvalidParameter(format!(
                "Monte Carlo needs at least {MIN_TRIALS} trials, got {trials}"
            )));
        }
        let geo = Geometric::new(self.p_g.as_f64()).map_err(|e| Error::InvalidParameter(e.to_string()))?;
        Ok((geo, self.p_s.as_f64()))
    }
}

/// `sum_{j=1..n} 1/j`.
pub fn harmonic<T: Real>(n: usize) -> T {
    (1..=n).map(|j| T::from_usize_lossy(j).recip()).fold(T::zero(), |a, b| a + b)
}

/// Mean link generation time `(L0/c) / P_g(L0)`.
pub fn t0<T: Real>(params: &RepeaterParams<T>, l0: T) -> Result<T> {
    if !(l0 > T::zero()) {
        return Err(Error::InvalidParameter(format!("L0 = {l0} must be positive")));
    }
    Ok(l0 / params.c_fiber / params.p_g(l0))
}

/// First-generation time with `2^n` segments: `(T, memory time)`.
pub fn t_first<T: Real>(params: &RepeaterParams<T>, n: usize) -> Result<(T, T)> {
    if n < 1 || n > 60 {
        return Err(Error::InvalidParameter(format!("nesting level n = {n} outside 1..=60")));
    }
    let l0 = params.l_tot / T::lit(2.0).powi(n as i32);
    params.waiting(l0).first(n)
}

pub fn t_first_opt<T: Real>(params: &RepeaterParams<T>, n_max: usize) -> Result<PerfResult<T>> {
    let mut best: Option<(T, usize, T)> = None;
    for n in 1..=n_max {
        let (t, mem) = t_first(params, n)?;
        if best.is_none_or(|(b, _, _)| t < b) {
            best = Some((t, n, mem));
        }
    }
    let (t, n, memory_time) = best.ok_or_else(|| Error::InvalidParameter("n_max must be >= 1".into()))?;
    Ok(PerfResult {
        t,
        n_or_m_opt: n,
        memory_time,
        alpha: Some(params.alpha()),
    })
}

/// Second-generation time with `m` nodes: `(T, memory time)`.
pub fn t_second<T: Real>(params: &RepeaterParams<T>, m: usize) -> Result<(T, T)> {
    if m < 1 {
        return Err(Error::InvalidParameter("second generation needs m >= 1".into()));
    }
    let l0 = params.l_tot / T::from_usize_lossy(m + 1);
    params.waiting(l0).second(m)
}

pub fn t_second_opt<T: Real>(params: &RepeaterParams<T>, m_max: usize) -> Result<PerfResult<T>> {
    let mut best: Option<(T, usize, T)> = None;
    for m in 1..=m_max {
        let (t, mem) = t_second(params, m)?;
        if best.is_none_or(|(b, _, _)| t < b) {
            best = Some((t, m, mem));
        }
    }
    let (t, m, memory_time) = best.ok_or_else(|| Error::InvalidParameter("m_max must be >= 1".into()))?;
    Ok(PerfResult {
        t,
        n_or_m_opt: m,
        memory_time,
        alpha: None,
    })
}

pub const DEFAULT_N_MAX: usize = 30;
pub const DEFAULT_M_MAX: usize = 200;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct AlphaEntry {
    pub eta: f64,
    /// `2` stands for the standard scheme.
    pub d: usize,
    pub alpha: f64,
}

/// The parameter sets `(eta, d)` with `eta in {0.95, 0.99}`, `d in {2, 10, 100}`.
pub const ALPHA_CASES: [(f64, usize); 6] = [(0.95, 2), (0.95, 10), (0.95, 100), (0.99, 2), (0.99, 10), (0.99, 100)];

/// `d = 2` maps to the standard scheme; larger `d` to pairwise gates without ancillae.
pub fn scheme_for(d: usize) -> Scheme {
    if d == 2 {
        Scheme::Standard
    } else {
        Scheme::Pairwise { d, k: 0 }
    }
}

pub fn alpha_table() -> Vec<AlphaEntry> {
    ALPHA_CASES
        .iter()
        .map(|&(eta, d)| {
            let p = RepeaterParams::<f64>::symmetric(eta, scheme_for(d), 100.0).expect("valid constants");
            AlphaEntry { eta, d, alpha: p.alpha() }
        })
        .collect()
}

/// `count` points from `start` to `stop` inclusive, evenly spaced in log.
pub fn geometric_grid(start: f64, stop: f64, count: usize) -> Result<Vec<f64>> {
    if !(start > 0.0 && stop > start && count >= 2) {
        return Err(Error::InvalidParameter(format!(
            "geometric grid needs 0 < start < stop and >= 2 points, got {start}:{stop}:{count}"
        )));
    }
    let r = (stop / start).ln() / (count - 1) as f64;
    Ok((0..count)
        .map(|i| if i + 1 == count { stop } else { start * (r * i as f64).exp() })
        .collect())
}

/// `count` evenly spaced points from `start` to `stop` inclusive.
pub fn linear_grid(start: f64, stop: f64, count: usize) -> Result<Vec<f64>> {
    if !(start > 0.0 && stop > start && count >= 2) {
        return Err(Error::InvalidParameter(format!(
            "linear grid needs 0 < start < stop and >= 2 points, got {start}:{stop}:{count}"
        )));
    }
    let h = (stop - start) / (count - 1) as f64;
    Ok((0..count)
        .map(|i| if i + 1 == count { stop } else { start + h * i as f64 })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum Regime {
    /// `alpha < 1`: `c T* / L` should settle to a constant.
    Linear {
        /// `(max - min)/min` of `c T* / L` over the last decade of the grid.
        last_decade_variation: f64,
    },
    /// `alpha > 1`: `T* / L` should grow like `L^{log2 alpha}` up to logs.
    PowerLaw { slope: f64, log2_alpha: f64, ratio: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScalingReport {
    pub alpha: f64,
    pub regime: Regime,
    pub passed: bool,
}

pub const LINEAR_VARIATION_TOL: f64 = 0.10;
pub const SLOPE_BAND: (f64, f64) = (0.5, 1.3);

/// Classifies the large-distance behaviour of the optimized first-generation
/// time over a geometric grid spanning at least two decades.
pub fn scaling_check(params: &RepeaterParams<f64>, l_grid: &[f64]) -> Result<ScalingReport> {
    let alpha = params.alpha();
    if (alpha - 1.0).abs() < 1e-9 {
        return Err(Error::InvalidParameter("scaling check is undefined at alpha = 1".into()));
    }
    let n = l_grid.len();
    let insufficient = |why: &str| Error::InvalidParameter(format!("insufficient grid: {why}"));
    if n < 3 {
        return Err(insufficient("fewer than 3 points"));
    }
    if l_grid.iter().any(|&l| !(l > 0.0)) {
        return Err(insufficient("non-positive distance"));
    }
    if l_grid[n - 1] / l_grid[0] < 100.0 - 1e-9 {
        return Err(insufficient("spans less than two decades"));
    }
    let step = (l_grid[1] / l_grid[0]).ln();
    if step <= 0.0 || l_grid.windows(2).any(|w| ((w[1] / w[0]).ln() - step).abs() > 1e-6 * step.abs().max(1.0)) {
        return Err(insufficient("not geometric"));
    }
    let ratios: Vec<f64> = l_grid
        .iter()
        .map(|&l| Ok(t_first_opt(&params.with_distance(l), DEFAULT_N_MAX)?.t / l))
        .collect::<Result<_>>()?;
    if alpha < 1.0 {
        let cutoff = l_grid[n - 1] / 10.0 * (1.0 - 1e-9);
        let tail: Vec<f64> = l_grid
            .iter()
            .zip(&ratios)
            .filter(|(l, _)| **l >= cutoff)
            .map(|(_, r)| r * params.c_fiber)
            .collect();
        let lo = tail.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = tail.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let v = (hi - lo) / lo;
        Ok(ScalingReport {
            alpha,
            regime: Regime::Linear { last_decade_variation: v },
            passed: v <= LINEAR_VARIATION_TOL,
        })
    } else {
        let xs: Vec<f64> = l_grid.iter().map(|l| l.ln()).collect();
        let ys: Vec<f64> = ratios.iter().map(|r| r.ln()).collect();
        let slope = regression_slope(&xs, &ys);
        let log2_alpha = alpha.log2();
        let ratio = slope / log2_alpha;
        Ok(ScalingReport {
            alpha,
            regime: Regime::PowerLaw { slope, log2_alpha, ratio },
            passed: (SLOPE_BAND.0..=SLOPE_BAND.1).contains(&ratio),
        })
    }
}

fn regression_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum Generation {
    First,
    Second,
}

impl fmt::Display for Generation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Generation::First => "first",
            Generation::Second => "second",
        })
    }
}

/// One row of sweep output.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    #[serde(rename = "L_tot_km")]
    pub l_tot_km: f64,
    pub scheme: &'static str,
    pub d: usize,
    pub k: usize,
    pub eta: f64,
    pub generation: String,
    #[serde(rename = "T_seconds")]
    pub t_seconds: f64,
    /// Repeater node count at the optimum: `2^n - 1` or `m`.
    pub nodes_opt: usize,
    pub memory_time_seconds: f64,
    pub alpha: Option<f64>,
}

/// Optimized times for every `(L, scheme, eta, generation)` combination,
/// ordered by scheme, eta, generation, then distance.
pub fn sweep(etas: &[f64], schemes: &[Scheme], l_grid: &[f64], gens: &[Generation]) -> Result<Vec<SweepRow>> {
    let mut jobs = Vec::new();
    for &scheme in schemes {
        for &eta in etas {
            for &g in gens {
                for &l in l_grid {
                    jobs.push((scheme, eta, g, l));
                }
            }
        }
    }
    jobs.par_iter()
        .map(|&(scheme, eta, g, l)| {
            let p = RepeaterParams::<f64>::symmetric(eta, scheme, l)?;
            let (d, k) = scheme.dk();
            let (r, nodes) = match g {
                Generation::First => {
                    let r = t_first_opt(&p, DEFAULT_N_MAX)?;
                    (r, (1usize << r.n_or_m_opt) - 1)
                }
                Generation::Second => {
                    let r = t_second_opt(&p, DEFAULT_M_MAX)?;
                    (r, r.n_or_m_opt)
                }
            };
            Ok(SweepRow {
                l_tot_km: l,
                scheme: scheme.name(),
                d,
                k,
                eta,
                generation: g.to_string(),
                t_seconds: r.t,
                nodes_opt: nodes,
                memory_time_seconds: r.memory_time,
                alpha: r.alpha,
            })
        })
        .collect()
}

pub fn write_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Sample mean with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct McEstimate {
    pub mean: f64,
    pub std_err: f64,
    pub trials: usize,
}

impl McEstimate {
    fn scaled(self, f: f64) -> Self {
        Self {
            mean: self.mean * f,
            std_err: self.std_err * f,
            trials: self.trials,
        }
    }
}

pub const MIN_TRIALS: usize = 10_000;
const CHUNK: usize = 4096;

/// Runs `trials` independent samples in fixed-size chunks; chunk `i` draws
/// from stream `i` of a generator seeded with `seed`, so results do not
/// depend on the thread count.
fn run_trials<F>(trials: usize, seed: u64, sample: F) -> McEstimate
where
    F: Fn(&mut ChaCha8Rng) -> f64 + Sync,
{
    let chunks = trials.div_ceil(CHUNK);
    let sums: Vec<(f64, f64)> = (0..chunks)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let n = CHUNK.min(trials - i * CHUNK);
            let mut s = 0.0;
            let mut s2 = 0.0;
            for _ in 0..n {
                let x = sample(&mut rng);
                s += x;
                s2 += x * x;
            }
            (s, s2)
        })
        .collect();
    let (s, s2) = sums.iter().fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    let n = trials as f64;
    let mean = s / n;
    let var = ((s2 - n * mean * mean) / (n - 1.0)).max(0.0);
    McEstimate {
        mean,
        std_err: (var / n).sqrt(),
        trials,
    }
}

/// Cycles until the first success (at least one).
fn cycles(geo: &Geometric, rng: &mut ChaCha8Rng) -> f64 {
    (geo.sample(rng) + 1) as f64
}

/// Ready time of a level-`level` link in units of `tau0`.
fn link_time(level: usize, geo: &Geometric, ps: f64, rng: &mut ChaCha8Rng) -> f64 {
    if level == 0 {
        return cycles(geo, rng);
    }
    let herald = (1u64 << (level - 1)) as f64;
    let mut t = 0.0;
    loop {
        let a = link_time(level - 1, geo, ps, rng);
        let b = link_time(level - 1, geo, ps, rng);
        t += a.max(b) + herald;
        if rng.random::<f64>() < ps {
            return t;
        }
    }
}

fn first_trial(n: usize, geo: &Geometric, ps: f64, rng: &mut ChaCha8Rng) -> f64 {
    let mut t = 0.0;
    loop {
        let a = link_time(n - 1, geo, ps, rng);
        let b = link_time(n - 1, geo, ps, rng);
        t += a.max(b);
        if rng.random::<f64>() < ps {
            return t;
        }
    }
}

/// Monte Carlo first-generation time for `params` with `2^n` segments.
pub fn mc_first_gen(params: &RepeaterParams<f64>, n: usize, trials: usize, seed: u64) -> Result<McEstimate> {
    if n < 1 {
        return Err(Error::InvalidParameter("first generation needs n >= 1".into()));
    }
    params.waiting(params.l_tot / 2f64.powi(n as i32)).mc_first(n, trials, seed)
}

/// Monte Carlo second-generation time for `params` with `m` nodes.
pub fn mc_second_gen(params: &RepeaterParams<f64>, m: usize, trials: usize, seed: u64) -> Result<McEstimate> {
    if m < 1 {
        return Err(Error::InvalidParameter("second generation needs m >= 1".into()));
    }
    params.waiting(params.l_tot / (m + 1) as f64).mc_second(m, trials, seed)
}

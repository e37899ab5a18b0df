use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use pfgsim::lemma::{self, StabilizerSpec};
use pfgsim::pfg::{self, PfgReport};
use pfgsim::qudit::{self, PairSpec};
use pfgsim::repeater::{self, Scheme};
use pfgsim::swapping::{self, BranchMode, ChainReport, SignTransition};

use crate::config::{ConfigFile, FloatList, Format, GenList, GridSpec, IndexSet, Spacing};
use crate::{Failure, LemmaArgs, PfgVerifyArgs, SwapDemoArgs, SweepArgs, OUT_DIR_ENV};

/// Largest dimension and ancilla level accepted by photon-level commands.
pub const FOCK_MAX_D: usize = 5;
pub const FOCK_MAX_K: usize = 2;

pub struct Context {
    pub format: Option<Format>,
    pub out: Option<PathBuf>,
    pub cfg: ConfigFile,
}

impl Context {
    fn format(&self, default: Format) -> Result<Format, Failure> {
        Ok(self.cfg.resolve(self.format, "format", default)?)
    }

    /// Writes `body` to `--out`; data formats fall back to `$PFGSIM_OUT_DIR/<name>`,
    /// everything else to stdout.
    fn emit(&self, format: Format, name: &str, body: &str) -> Result<(), Failure> {
        let target = match (&self.out, format) {
            (Some(p), _) => Some(p.clone()),
            (None, Format::Text) => None,
            (None, _) => std::env::var_os(OUT_DIR_ENV).map(|dir| {
                let ext = if format == Format::Csv { "csv" } else { "json" };
                Path::new(&dir).join(format!("{name}.{ext}"))
            }),
        };
        match target {
            Some(path) => {
                write_file(&path, body)?;
                eprintln!("wrote {}", path.display());
            }
            None => print!("{body}"),
        }
        Ok(())
    }
}

fn write_file(path: &Path, body: &str) -> Result<(), Failure> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Failure::Usage(format!("cannot create {}: {e}", dir.display())))?;
    }
    std::fs::write(path, body).map_err(|e| Failure::Usage(format!("cannot write {}: {e}", path.display())))
}

fn to_json<T: Serialize>(v: &T) -> Result<String, Failure> {
    serde_json::to_string_pretty(v)
        .map(|s| s + "\n")
        .map_err(|e| Failure::Usage(e.to_string()))
}

fn to_csv<T: Serialize>(rows: &[T]) -> Result<String, Failure> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| Failure::Usage(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Failure::Usage(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Failure::Usage(e.to_string()))
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}

#[derive(Serialize)]
struct PfgRow {
    d: usize,
    k: usize,
    patterns: usize,
    p_f_empirical: f64,
    p_f_expected: f64,
    max_residual: f64,
    max_weight_deviation: f64,
    povm_deviation: f64,
    passed: bool,
}

pub fn pfg_verify(ctx: &Context, a: PfgVerifyArgs) -> Result<(), Failure> {
    let ds = ctx.cfg.resolve(a.d, "d", IndexSet(vec![2, 3]))?.0;
    let ks = ctx.cfg.resolve(a.k, "k", IndexSet(vec![0, 1]))?.0;
    let tol = ctx.cfg.resolve(a.tol, "tol", 1e-9)?;
    for &d in &ds {
        if !(2..=FOCK_MAX_D).contains(&d) {
            return Err(Failure::Usage(format!("capacity: d = {d} outside 2..={FOCK_MAX_D}")));
        }
    }
    if let Some(&k) = ks.iter().find(|&&k| k > FOCK_MAX_K) {
        return Err(Failure::Usage(format!("capacity: k = {k} exceeds {FOCK_MAX_K}")));
    }
    let mut reports: Vec<PfgReport> = Vec::new();
    for &d in &ds {
        for &k in &ks {
            reports.push(pfg::verify(d, k, tol)?);
        }
    }
    let format = ctx.format(Format::Text)?;
    let body = match format {
        Format::Json => to_json(&reports)?,
        Format::Csv => to_csv(
            &reports
                .iter()
                .map(|r| PfgRow {
                    d: r.d,
                    k: r.k,
                    patterns: r.patterns,
                    p_f_empirical: r.success_empirical,
                    p_f_expected: r.success_analytic,
                    max_residual: r.max_residual,
                    max_weight_deviation: r.max_weight_deviation,
                    povm_deviation: r.povm_deviation,
                    passed: r.passed,
                })
                .collect::<Vec<_>>(),
        )?,
        Format::Text => {
            let mut s = String::new();
            for r in &reports {
                let _ = writeln!(
                    s,
                    "d={} k={} patterns={} p_f={:.3} (expected {:.3}) max_residual={:.1e} weight_dev={:.1e} povm_dev={:.1e} {}",
                    r.d,
                    r.k,
                    r.patterns,
                    r.success_empirical,
                    r.success_analytic,
                    r.max_residual,
                    r.max_weight_deviation,
                    r.povm_deviation,
                    verdict(r.passed)
                );
                if a.labels {
                    for o in &r.outcomes {
                        let _ = writeln!(
                            s,
                            "    {:<12} patterns={:<8} weight={:.12} expected={:.12}",
                            o.label.to_string(),
                            o.patterns,
                            o.weight,
                            o.expected
                        );
                    }
                }
            }
            s
        }
    };
    ctx.emit(format, "pfg_verify", &body)?;
    let failed: Vec<String> = reports
        .iter()
        .filter(|r| !r.passed)
        .map(|r| format!("(d={}, k={})", r.d, r.k))
        .collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Verification(format!("Kraus check failed for {}", failed.join(", "))))
    }
}

#[derive(Serialize)]
struct SwapOutput<'a> {
    chain: &'a ChainReport,
    sign_table: &'a [SignTransition],
    sampled_path: Option<Vec<Vec<String>>>,
    passed: bool,
}

#[derive(Serialize)]
struct SignRow {
    sign_in: String,
    gate: String,
    myz: String,
    sign_out: String,
    z_out: String,
}

/// Follows one sampled branch through the fusion and `chain` swaps.
fn sampled_path(d: usize, k: usize, chain: usize, seed: u64) -> Result<Vec<Vec<String>>, Failure> {
    let partners: Vec<_> = swapping::fuse_cc::<f64>(d, k, BranchMode::Enumerate)?
        .into_iter()
        .filter(|c| c.success)
        .collect();
    let first = swapping::fuse_cc::<f64>(d, k, BranchMode::Sample(seed))?;
    let mut conv = first.into_iter().next().ok_or_else(|| Failure::Verification("no fusion branch".into()))?;
    let mut path = vec![conv.path()];
    for stage in 1..=chain {
        if !conv.success {
            break;
        }
        let partner = &partners[stage % partners.len()];
        let mode = BranchMode::Sample(seed.wrapping_add(stage as u64));
        conv = swapping::bes(&conv.register.state, &partner.register.state, k, mode)?
            .into_iter()
            .next()
            .ok_or_else(|| Failure::Verification("no swapping branch".into()))?;
        path.push(conv.path());
    }
    Ok(path)
}

pub fn swap_demo(ctx: &Context, a: SwapDemoArgs) -> Result<(), Failure> {
    let d = ctx.cfg.resolve(a.d, "d", 3)?;
    let k = ctx.cfg.resolve(a.k, "k", 0)?;
    let chain = ctx.cfg.resolve(a.chain, "chain", 3)?;
    let seed = match a.seed {
        Some(s) => Some(s),
        None => ctx.cfg.get("seed").map(str::parse).transpose().map_err(|e| format!("config key seed: {e}"))?,
    };
    if !(2..=FOCK_MAX_D + 2).contains(&d) || k > FOCK_MAX_K {
        return Err(Failure::Usage(format!(
            "capacity: swap-demo supports 2 <= d <= {} and k <= {FOCK_MAX_K}",
            FOCK_MAX_D + 2
        )));
    }
    if d % 2 == 0 {
        eprintln!("warning: even d = {d} admits doubly degenerate measurement pairs; closure may fail");
    }
    let report = swapping::run_chain(d, k, chain)?;
    let x = PairSpec(0, 1);
    let signs = swapping::sign_transitions(d, k, x, x)?;
    let sampled = seed.map(|s| sampled_path(d, k, chain, s)).transpose()?;
    let tol = 1e-9;
    let passed = report.passed(tol);

    let trace_path = match a.trace.or_else(|| ctx.cfg.get("trace").map(PathBuf::from)) {
        Some(p) => p,
        None => std::env::var_os(OUT_DIR_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("."))
            .join("swap_trace.jsonl"),
    };
    write_file(&trace_path, &swapping::trace_jsonl(&report.trace)?)?;

    let format = ctx.format(Format::Text)?;
    let body = match format {
        Format::Json => to_json(&SwapOutput {
            chain: &report,
            sign_table: &signs,
            sampled_path: sampled,
            passed,
        })?,
        Format::Csv => to_csv(
            &signs
                .iter()
                .map(|r| SignRow {
                    sign_in: r.sign_in.to_string(),
                    gate: r.pfg.to_string(),
                    myz: r.myz.to_string(),
                    sign_out: r.sign_out.to_string(),
                    z_out: r.z_out.to_string(),
                })
                .collect::<Vec<_>>(),
        )?,
        Format::Text => {
            let mut s = String::new();
            let _ = writeln!(s, "d={d} k={k} chain={chain} expected per-stage success {:.6}", report.expected_success());
            let _ = writeln!(s, "stage 0 (fusion) success {:.6}  initial {}", report.fuse_success, report.initial);
            for st in &report.stages {
                let _ = writeln!(
                    s,
                    "stage {} success {:.6} (per class {:.6}..{:.6})  partner {}  branches {} closure failures {}",
                    st.stage,
                    st.success_probability,
                    st.min_class_success,
                    st.max_class_success,
                    st.partner,
                    st.branches,
                    st.closure_failures
                );
            }
            let _ = writeln!(s, "final canonical forms:");
            for (key, p) in &report.final_classes {
                let _ = writeln!(s, "    {key:<28} {p:.6}");
            }
            let _ = writeln!(s, "final Bell fidelity {:.9}", report.min_fidelity);
            let _ = writeln!(s, "sign table for Psi_(x,x,s) extended with |C>, x = {x}:");
            for r in &signs {
                let _ = writeln!(
                    s,
                    "    s={}  gate {:<12} M {:<8} -> s'={}  z'={}",
                    r.sign_in,
                    r.pfg.to_string(),
                    r.myz.to_string(),
                    r.sign_out,
                    r.z_out
                );
            }
            if let Some(path) = &sampled {
                let _ = writeln!(s, "sampled branch (seed {}):", seed.unwrap_or_default());
                for (i, p) in path.iter().enumerate() {
                    let _ = writeln!(s, "    stage {i}: {}", p.join(" -> "));
                }
            }
            let _ = writeln!(s, "trace {}", trace_path.display());
            let _ = writeln!(s, "{}", verdict(passed));
            s
        }
    };
    ctx.emit(format, "swap_demo", &body)?;
    if passed {
        Ok(())
    } else {
        Err(Failure::Verification(format!(
            "chain check failed: {} closure failures, success deviation {:.2e}, fidelity {:.9}",
            report.closure_failures(),
            report.max_success_deviation(),
            report.min_fidelity
        )))
    }
}

pub fn repeater_sweep(ctx: &Context, a: SweepArgs) -> Result<(), Failure> {
    let etas = ctx.cfg.resolve(a.eta, "eta", FloatList(vec![0.95, 0.99]))?.0;
    let ds = ctx.cfg.resolve(a.d, "d", IndexSet(vec![2, 10, 100]))?.0;
    let k = ctx.cfg.resolve(a.k, "k", 0)?;
    let grid = ctx.cfg.resolve(
        a.l,
        "L",
        GridSpec {
            start: 100.0,
            stop: 5000.0,
            points: 50,
        },
    )?;
    let spacing = ctx.cfg.resolve(a.spacing, "spacing", Spacing::Lin)?;
    let gens = ctx.cfg.resolve(a.gen, "gen", "first,second".parse::<GenList>()?)?.0;
    let l_grid = grid.points(spacing)?;
    let schemes: Vec<Scheme> = ds
        .iter()
        .map(|&d| match d {
            0 | 1 => Err(Failure::Usage(format!("invalid dimension d = {d}"))),
            2 => Ok(Scheme::Standard),
            _ => Ok(Scheme::Pairwise { d, k }),
        })
        .collect::<Result<_, _>>()?;
    let rows = repeater::sweep(&etas, &schemes, &l_grid, &gens)?;
    let format = ctx.format(Format::Csv)?;
    let body = match format {
        Format::Csv => to_csv(&rows)?,
        Format::Json => to_json(&rows)?,
        Format::Text => {
            let mut s = String::new();
            let _ = writeln!(
                s,
                "{:>10} {:>9} {:>4} {:>2} {:>5} {:>6} {:>12} {:>6} {:>12} {:>6}",
                "L_km", "scheme", "d", "k", "eta", "gen", "T_s", "nodes", "memory_s", "alpha"
            );
            for r in &rows {
                let _ = writeln!(
                    s,
                    "{:>10.1} {:>9} {:>4} {:>2} {:>5} {:>6} {:>12.4e} {:>6} {:>12.4e} {:>6}",
                    r.l_tot_km,
                    r.scheme,
                    r.d,
                    r.k,
                    r.eta,
                    r.generation,
                    r.t_seconds,
                    r.nodes_opt,
                    r.memory_time_seconds,
                    r.alpha.map_or(String::new(), |a| format!("{a:.2}"))
                );
            }
            s
        }
    };
    ctx.emit(format, "repeater_sweep", &body)
}

#[derive(Serialize)]
struct LemmaRow {
    k: usize,
    p: usize,
    d: usize,
    i: usize,
    j: usize,
    plus_patterns: usize,
    minus_patterns: usize,
    max_wrong_amplitude: f64,
    passed: bool,
}

/// Output patterns of the `±` derivation states with their parity class.
fn pattern_listing(spec: &StabilizerSpec, i: usize, j: usize) -> Result<String, Failure> {
    let (plus, minus) = lemma::derivation_states::<f64>(spec, i, j)?;
    let mut s = String::new();
    for (name, st) in [("+", plus), ("-", minus)] {
        let out = lemma::evolve(&qudit::encode(&st), spec)?;
        let _ = writeln!(s, "      input {name}:");
        for (pattern, amp) in out.iter() {
            let class = lemma::parity_class(pattern, spec)?;
            let _ = writeln!(s, "        {pattern}  prob {:.6}  class {class}", amp.norm_sqr());
        }
    }
    Ok(s)
}

pub fn lemma_check(ctx: &Context, a: LemmaArgs) -> Result<(), Failure> {
    let ks = ctx.cfg.resolve(a.k, "k", IndexSet((0..=2).collect()))?.0;
    let ds = ctx.cfg.resolve(a.d, "d", IndexSet(vec![2, 3]))?.0;
    let ps: Option<Vec<usize>> = match a.p {
        Some(p) => Some(p.0),
        None => ctx.cfg.get("p").map(|s| s.parse::<IndexSet>().map(|p| p.0)).transpose()?,
    };
    let tol = ctx.cfg.resolve(a.tol, "tol", 1e-9)?;
    if let Some(&k) = ks.iter().find(|&&k| k > FOCK_MAX_K) {
        return Err(Failure::Usage(format!("capacity: k = {k} exceeds {FOCK_MAX_K}")));
    }
    if let Some(&d) = ds.iter().find(|&&d| !(2..=FOCK_MAX_D).contains(&d)) {
        return Err(Failure::Usage(format!("capacity: d = {d} outside 2..={FOCK_MAX_D}")));
    }
    let mut specs = Vec::new();
    for &k in &ks {
        let p_list: Vec<usize> = ps.clone().unwrap_or_else(|| (0..=k).collect());
        for &p in &p_list {
            for &d in &ds {
                specs.push(StabilizerSpec::new(k, p, d)?);
            }
        }
    }
    let single = specs.len() == 1;
    let mut rows = Vec::new();
    let mut text = String::new();
    for spec in &specs {
        let reports = lemma::verify_spec::<f64>(spec)?;
        let ok = reports.iter().all(|(_, r)| r.passed(tol));
        let worst = reports.iter().map(|(_, r)| r.max_wrong_amplitude).fold(0.0, f64::max);
        let _ = writeln!(
            text,
            "k={} p={} d={} pairs={} max_wrong_amplitude={:.1e} {}",
            spec.k,
            spec.p,
            spec.d,
            reports.len(),
            worst,
            verdict(ok)
        );
        for ((i, j), r) in &reports {
            if single {
                let _ = writeln!(
                    text,
                    "    (i,j)=({i},{j}) S+ patterns {} S- patterns {}",
                    r.plus_patterns, r.minus_patterns
                );
                text.push_str(&pattern_listing(spec, *i, *j)?);
            }
            rows.push(LemmaRow {
                k: spec.k,
                p: spec.p,
                d: spec.d,
                i: *i,
                j: *j,
                plus_patterns: r.plus_patterns,
                minus_patterns: r.minus_patterns,
                max_wrong_amplitude: r.max_wrong_amplitude,
                passed: r.passed(tol),
            });
        }
    }
    let format = ctx.format(Format::Text)?;
    let body = match format {
        Format::Text => text,
        Format::Csv => to_csv(&rows)?,
        Format::Json => to_json(&rows)?,
    };
    ctx.emit(format, "lemma_check", &body)?;
    let failed = rows.iter().filter(|r| !r.passed).count();
    if failed == 0 {
        Ok(())
    } else {
        Err(Failure::Verification(format!("{failed} lemma checks failed")))
    }
}

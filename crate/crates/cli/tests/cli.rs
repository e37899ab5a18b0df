use std::path::Path;
use std::process::{Command, Output};

fn pfgsim(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pfgsim"))
        .args(args)
        .current_dir(dir)
        .env("PFGSIM_OUT_DIR", dir)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn pfg_verify_qutrit_levels() {
    let dir = tempfile::tempdir().unwrap();
    let o = pfgsim(dir.path(), &["pfg-verify", "--d", "3", "--k", "0..1"]);
    assert_eq!(o.status.code(), Some(0));
    let s = stdout(&o);
    assert!(s.contains("p_f=0.667") && s.contains("p_f=0.889"), "{s}");
    assert_eq!(s.matches("PASS").count(), 2);
}

#[test]
fn pfg_verify_qubit_fusion() {
    let dir = tempfile::tempdir().unwrap();
    let o = pfgsim(dir.path(), &["pfg-verify", "--d", "2", "--k", "0"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("p_f=0.500"));
}

#[test]
fn pfg_verify_capacity_guard() {
    let dir = tempfile::tempdir().unwrap();
    let o = pfgsim(dir.path(), &["pfg-verify", "--d", "7", "--k", "2"]);
    assert_eq!(o.status.code(), Some(2));
    // Inside the flag limits but beyond the engine's mode budget.
    let o = pfgsim(dir.path(), &["pfg-verify", "--d", "5", "--k", "2"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn pfg_verify_json_to_out_dir() {
    let dir = tempfile::tempdir().unwrap();
    let o = pfgsim(dir.path(), &["pfg-verify", "--d", "3", "--k", "0", "--format", "json"]);
    assert_eq!(o.status.code(), Some(0));
    let text = std::fs::read_to_string(dir.path().join("pfg_verify.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v[0]["d"], 3);
    assert_eq!(v[0]["passed"], true);
}

#[test]
fn swap_demo_qudit_chain() {
    let dir = tempfile::tempdir().unwrap();
    let o = pfgsim(dir.path(), &["swap-demo", "--d", "5", "--chain", "3"]);
    assert_eq!(o.status.code(), Some(0));
    let s = stdout(&o);
    for stage in 1..=3 {
        assert!(s.contains(&format!("stage {stage} success 0.800000")), "{s}");
    }
    assert!(s.contains("final Bell fidelity 1.000000000"));
    let trace = std::fs::read_to_string(dir.path().join("swap_trace.jsonl")).unwrap();
    let first: serde_json::Value = serde_json::from_str(trace.lines().next().unwrap()).unwrap();
    assert_eq!(first["stage"], 0);
    assert!(first["path"].is_array());
}

#[test]
fn swap_demo_ancilla_rate() {
    let dir = tempfile::tempdir().unwrap();
    let o = pfgsim(dir.path(), &["swap-demo", "--d", "3", "--k", "1"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("stage 1 success 0.888889"));
}

#[test]
fn swap_demo_warns_on_even_d() {
    let dir = tempfile::tempdir().unwrap();
    let o = pfgsim(dir.path(), &["swap-demo", "--d", "4", "--chain", "1"]);
    assert!(String::from_utf8_lossy(&o.stderr).contains("warning: even d"));
}

#[test]
fn repeater_sweep_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "repeater-sweep",
        "--eta",
        "0.95,0.99",
        "--d",
        "2,10,100",
        "--L",
        "100:5000:50",
        "--gen",
        "first,second",
    ];
    let a = pfgsim(dir.path(), &args);
    assert_eq!(a.status.code(), Some(0));
    let first = std::fs::read(dir.path().join("repeater_sweep.csv")).unwrap();
    let b = pfgsim(dir.path(), &args);
    assert_eq!(b.status.code(), Some(0));
    let second = std::fs::read(dir.path().join("repeater_sweep.csv")).unwrap();
    assert_eq!(first, second);

    let mut rdr = csv::Reader::from_reader(first.as_slice());
    let headers: Vec<String> = rdr.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(
        headers,
        [
            "L_tot_km",
            "scheme",
            "d",
            "k",
            "eta",
            "generation",
            "T_seconds",
            "nodes_opt",
            "memory_time_seconds",
            "alpha"
        ]
    );
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 2 * 3 * 2 * 50);
    let table = pfgsim::repeater::alpha_table();
    for r in rows.iter().filter(|r| &r[5] == "first") {
        let eta: f64 = r[4].parse().unwrap();
        let d: usize = r[2].parse().unwrap();
        let alpha: f64 = r[9].parse().unwrap();
        let want = table.iter().find(|e| e.eta == eta && e.d == d).unwrap().alpha;
        assert!((alpha - want).abs() < 1e-12);
    }
}

#[test]
fn config_file_and_flag_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "eta = 0.9\nd = 10\nL = 100:1000:4\ngen = first\nformat = csv\n").unwrap();
    let out = dir.path().join("a.csv");
    let o = pfgsim(
        dir.path(),
        &["repeater-sweep", "--config", cfg.to_str().unwrap(), "--eta", "0.99", "--out", out.to_str().unwrap()],
    );
    assert_eq!(o.status.code(), Some(0));
    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().count(), 5);
    assert!(text.lines().skip(1).all(|l| l.contains(",pairwise,10,0,0.99,first,")), "{text}");
}

#[test]
fn lemma_check_default_and_single() {
    let dir = tempfile::tempdir().unwrap();
    let o = pfgsim(dir.path(), &["lemma-check"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).matches("PASS").count(), 12);

    let o = pfgsim(dir.path(), &["lemma-check", "--k", "0", "--p", "0", "--d", "2"]);
    assert_eq!(o.status.code(), Some(0));
    let s = stdout(&o);
    assert!(s.contains("PASS") && s.contains("input +:") && s.contains("1,0,0,1"), "{s}");
}

#[test]
fn usage_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(pfgsim(dir.path(), &["lemma-check", "--p", "3", "--k", "2"]).status.code(), Some(2));
    assert_eq!(pfgsim(dir.path(), &["repeater-sweep", "--L", "100:50"]).status.code(), Some(2));
    assert_eq!(pfgsim(dir.path(), &["nonsense"]).status.code(), Some(2));
    assert_eq!(pfgsim(dir.path(), &["repeater-sweep", "--eta", "1.5"]).status.code(), Some(2));
}

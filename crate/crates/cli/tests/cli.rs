use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const SCALAR_STABLE: &str = r#"{"dimension": 1, "atoms": [{"tau": 1.0, "matrix": [[0.5]]}]}"#;
const SCALAR_UNSTABLE: &str = r#"{"dimension": 1, "atoms": [{"tau": 1.0, "matrix": [[2.0]]}]}"#;
const FRAGILE: &str =
    r#"{"dimension": 1, "atoms": [{"tau": 0.5, "matrix": [[0.6]]}, {"tau": 1.0, "matrix": [[-0.6]]}]}"#;
const UNIT_DENSITY: &str =
    r#"{"dimension": 1, "atoms": [], "density": {"breakpoints": [-1.0, 0.0], "pieces": [[[1.0]]]}}"#;
const TWO_ATOMS: &str =
    r#"{"dimension": 1, "atoms": [{"tau": 0.25, "matrix": [[0.5]]}, {"tau": 0.75, "matrix": [[0.5]]}]}"#;
const IDENTITY: &str = r#"{"kind":"piecewise_linear","knots":[[-1.0,-1.0],[0.0,0.0]]}"#;
const HALVES: &str =
    r#"{"kind":"binning","bins":[{"from":[-1.0,-0.5],"to":-0.75},{"from":[-0.5,0.0],"to":-0.25}]}"#;

struct Workspace {
    dir: TempDir,
}

impl Workspace {
    fn new() -> Self {
        Workspace { dir: tempfile::tempdir().expect("temp dir") }
    }

    fn file(&self, name: &str, contents: &str) -> PathBuf {
        let p = self.dir.path().join(name);
        fs::write(&p, contents).expect("write input");
        p
    }

    fn out(&self, name: &str) -> PathBuf {
        let p = self.dir.path().join(name);
        fs::create_dir_all(&p).expect("out dir");
        p
    }
}

fn ddstab(out_dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ddstab"))
        .arg("--out-dir")
        .arg(out_dir)
        .args(args)
        .output()
        .expect("run ddstab")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!("bad JSON ({e}): {}", String::from_utf8_lossy(&out.stdout))
    })
}

fn path(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

#[test]
fn analyze_exit_codes_follow_the_classification() {
    let ws = Workspace::new();
    let out = ws.out("o");
    let cases = [
        (SCALAR_STABLE, "certified-strongly-stable", 0),
        (SCALAR_UNSTABLE, "unstable", 1),
        (FRAGILE, "fragile", 1),
    ];
    for (i, (system, class, code)) in cases.into_iter().enumerate() {
        let f = ws.file(&format!("s{i}.json"), system);
        let o = ddstab(&out, &["--json", "analyze", path(&f)]);
        assert_eq!(o.status.code(), Some(code), "{}", String::from_utf8_lossy(&o.stderr));
        assert_eq!(json(&o)["verdict"]["classification"], class);
        assert!(out.join("verdict.json").exists() && out.join("roots.csv").exists());
    }
}

#[test]
fn unstable_abscissa_is_ln_two() {
    let ws = Workspace::new();
    let f = ws.file("s.json", SCALAR_UNSTABLE);
    let v = json(&ddstab(&ws.out("o"), &["--json", "analyze", path(&f)]));
    let s = v["verdict"]["abscissa"].as_f64().unwrap();
    assert!((s - std::f64::consts::LN_2).abs() <= 1e-8, "{s}");
}

#[test]
fn input_errors_exit_with_three() {
    let ws = Workspace::new();
    let out = ws.out("o");
    let good = ws.file("good.json", SCALAR_STABLE);
    let malformed = ws.file("bad.json", r#"{"dimension": 1, "atoms": [{"tau": 1.0}]}"#);
    let out_of_range = ws.file("far.json", r#"{"dimension": 1, "atoms": [{"tau": 1.5, "matrix": [[0.5]]}]}"#);
    let missing = ws.dir.path().join("missing.json");
    let runs: [&[&str]; 5] = [
        &["analyze", path(&malformed)],
        &["analyze", path(&out_of_range)],
        &["analyze", path(&missing)],
        &["simulate", path(&good), "--ic", "sine"],
        &["perturb", path(&good)],
    ];
    for args in runs {
        let o = ddstab(&out, args);
        assert_eq!(o.status.code(), Some(3), "{args:?}");
        assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"), "{args:?}");
    }
}

#[test]
fn destabilize_refuses_a_certified_system() {
    let ws = Workspace::new();
    let f = ws.file("s.json", SCALAR_STABLE);
    let o = ddstab(&ws.out("o"), &["destabilize", path(&f), "--eps", "0.05", "--delta", "0.1"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!o.stderr.is_empty());
}

#[test]
fn destabilize_reaches_its_target_on_the_fragile_example() {
    let ws = Workspace::new();
    let out = ws.out("o");
    let f = ws.file("s.json", FRAGILE);
    let o = ddstab(&out, &["--json", "destabilize", path(&f), "--eps", "0.05", "--delta", "0.1"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v = json(&o);
    assert!(v["achieved_abscissa"].as_f64().unwrap() >= 1.2f64.ln() - 0.1);
    assert!(v["sup_distance"].as_f64().unwrap() < 0.05);
    // the emitted file is a valid perturbation input
    let phi = out.join("destabilizer.json");
    let p = ddstab(&ws.out("p"), &["--json", "perturb", path(&f), "--phi", path(&phi)]);
    assert_eq!(p.status.code(), Some(0), "{}", String::from_utf8_lossy(&p.stderr));
}

#[test]
fn identical_inputs_give_identical_outputs() {
    let ws = Workspace::new();
    let f = ws.file("s.json", FRAGILE);
    let runs = |name: &str| {
        let out = ws.out(name);
        ddstab(&out, &["--seed", "7", "analyze", path(&f)]);
        ddstab(&out, &["--seed", "7", "perturb", path(&f), "--random", "--eps", "0.05", "--trials", "6"]);
        ["verdict.json", "roots.csv", "perturb.json", "trials.csv"]
            .map(|n| fs::read(out.join(n)).unwrap_or_else(|e| panic!("{n}: {e}")))
    };
    assert_eq!(runs("a"), runs("b"));
}

#[test]
fn identity_perturbation_matches_analyze() {
    let ws = Workspace::new();
    let f = ws.file("s.json", FRAGILE);
    let phi = ws.file("id.json", IDENTITY);
    let a = json(&ddstab(&ws.out("a"), &["--json", "analyze", path(&f)]));
    let p = json(&ddstab(&ws.out("p"), &["--json", "perturb", path(&f), "--phi", path(&phi)]));
    assert_eq!(p["sup_distance"].as_f64(), Some(0.0));
    assert_eq!(a["verdict"]["abscissa"], p["abscissa"]);
    assert_eq!(a["verdict"]["abscissa_bracket"], p["abscissa_bracket"]);
}

#[test]
fn binning_the_unit_density_matches_the_two_atom_system() {
    let ws = Workspace::new();
    let density = ws.file("d.json", UNIT_DENSITY);
    let atoms = ws.file("a.json", TWO_ATOMS);
    let halves = ws.file("halves.json", HALVES);
    let identity = ws.file("id.json", IDENTITY);
    let binned = json(&ddstab(&ws.out("b"), &["--json", "perturb", path(&density), "--phi", path(&halves)]));
    let direct = json(&ddstab(&ws.out("d"), &["--json", "perturb", path(&atoms), "--phi", path(&identity)]));
    let (x, y) = (binned["abscissa"].as_f64().unwrap(), direct["abscissa"].as_f64().unwrap());
    assert!((x - y).abs() <= 1e-12, "{x} vs {y}");
    // 0.5 e^{-s/4} + 0.5 e^{-3s/4} = 1 holds at s = 0
    assert!(x.abs() <= 1e-8, "{x}");
}

#[test]
fn simulating_the_zero_measure_stays_at_zero() {
    let ws = Workspace::new();
    let out = ws.out("o");
    let f = ws.file("z.json", r#"{"dimension": 2, "atoms": []}"#);
    let o = ddstab(&out, &["simulate", path(&f), "--ic", "const", "--T", "6", "--n", "64"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("trajectory.csv")).unwrap();
    let mut lines = csv.lines();
    lines.next();
    let mut after_zero = 0;
    for line in lines {
        let cols: Vec<f64> = line.split(',').map(|c| c.parse().unwrap()).collect();
        if cols[0] > 0.0 {
            assert!(cols[1..].iter().all(|&x| x == 0.0), "{line}");
            after_zero += 1;
        }
    }
    assert!(after_zero >= 6 * 64);
}

#[test]
fn roots_dump_lists_conjugate_pairs() {
    let ws = Workspace::new();
    let f = ws.file("s.json", SCALAR_STABLE);
    let o = ddstab(&ws.out("o"), &["roots", path(&f), "--re-min", "-2", "--im-max", "20"]);
    assert_eq!(o.status.code(), Some(0));
    let csv = String::from_utf8(o.stdout).unwrap();
    // 0.5 e^{-s} = 1: s = -ln 2 + 2πk i, k = -3..=3
    assert_eq!(csv.lines().count(), 1 + 7, "{csv}");
}

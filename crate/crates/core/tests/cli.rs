use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const GRAPH: &str = r#"
p = 3
vertices = ["O", "A", "B"]

[[edges]]
id = "e1"
from = "O"
to = "A"
length = 1.0

[[edges]]
id = "e2"
from = "B"
to = "O"
length = 2.0
"#;

fn graphnls(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_graphnls"))
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap()
}

fn csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(str::to_owned).collect();
    let rows = lines.map(|l| l.split(',').map(str::to_owned).collect()).collect();
    (header, rows)
}

fn significant_digits(cell: &str) -> usize {
    let mantissa = cell.split('e').next().unwrap();
    mantissa.chars().filter(char::is_ascii_digit).count()
}

#[test]
fn line_constant_prints_reference_values() {
    let tmp = tempfile::tempdir().unwrap();
    let out = graphnls(&["line-constant", "--p", "3"], tmp.path());
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("best_quotient_line 1.930978769"), "{text}");
    assert!(text.contains("apex_value 1.500000000000"));
    assert!(!graphnls(&["line-constant", "--p", "2"], tmp.path()).status.success());
}

#[test]
fn solve_writes_profiles_and_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("g.toml"), GRAPH).unwrap();
    let mut snapshots = Vec::new();
    for run in ["a", "b"] {
        let out = graphnls(&["solve", "--graph", "g.toml", "--out", run], tmp.path());
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let dir = tmp.path().join(run);
        let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(&dir)
            .unwrap()
            .map(|e| {
                let e = e.unwrap();
                (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
            })
            .collect();
        files.sort();
        snapshots.push(files);
    }
    assert_eq!(snapshots[0], snapshots[1]);
    let dir = tmp.path().join("a");
    let (header, rows) = csv(&dir.join("summary.csv"));
    assert_eq!(header, ["solution", "signature", "a", "residual", "quotient", "lp_norm_p"]);
    assert!(!rows.is_empty());
    assert!(rows.iter().all(|r| significant_digits(&r[2]) == 17));
    let (header, profile) = csv(&dir.join("solution_0.csv"));
    assert_eq!(header, ["orbit_id", "s", "v", "u", "H", "class", "x"]);
    let on_e2: Vec<&Vec<String>> = profile.iter().filter(|r| r[0] == "e2").collect();
    let first: f64 = on_e2[0][6].parse().unwrap();
    assert!((first - 2.0).abs() < 1e-12, "e2 starts at its far end O: x = {first}");
    let manifest = fs::read_to_string(dir.join("manifest.json")).unwrap();
    assert!(manifest.contains("\"command\": \"solve\"") && manifest.contains("graph_digest"));
}

#[test]
fn minimize_reports_summary_and_truncation_study() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(
        tmp.path().join("g.toml"),
        GRAPH.replace("to = \"O\"\nlength = 2.0", "to = \"O\"\nlength = 2.0\n\n[[edges]]\nid = \"r\"\nfrom = \"O\"\nlength = \"inf\""),
    )
    .unwrap();
    let out = graphnls(
        &["minimize", "--graph", "g.toml", "--h", "0.05", "--L", "8", "--starts", "2", "--study", "5,10", "--out", "m"],
        tmp.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let dir = tmp.path().join("m");
    let (header, rows) = csv(&dir.join("summary.csv"));
    assert_eq!(header[0], "quotient_min");
    assert_eq!(rows.len(), 1);
    let (_, study) = csv(&dir.join("truncation.csv"));
    assert_eq!(study.len(), 2);
    let (header, nodes) = csv(&dir.join("minimizer.csv"));
    assert_eq!(header, ["edge_id", "x", "v", "v_ode"]);
    assert!(nodes.len() > 100);
}

#[test]
fn invalid_input_fails_without_output() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("bad.toml"), GRAPH.replace("length = 1.0", "length = -1.0")).unwrap();
    let out = graphnls(&["solve", "--graph", "bad.toml", "--out", "x"], tmp.path());
    assert!(!out.status.success());
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("e1"), "{err}");
    assert!(!tmp.path().join("x").exists());
    assert!(!graphnls(&["reproduce", "nope", "--out", "y"], tmp.path()).status.success());
}

#[test]
fn phase_portrait_has_header_and_levels() {
    let tmp = tempfile::tempdir().unwrap();
    let out = graphnls(&["phase-portrait", "--out", "pp.csv"], tmp.path());
    assert!(out.status.success());
    let (header, rows) = csv(&tmp.path().join("pp.csv"));
    assert_eq!(header, ["orbit_id", "s", "v", "u", "H", "class"]);
    assert!(rows.iter().any(|r| r[5] == "heteroclinic"));
    assert!(rows.iter().any(|r| r[5] == "inner_periodic"));
}

//! Black-box checks of the command-line interface: exit codes, CSV layout,
//! and the diagnostic commands.

use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_layerfem"))
}

#[test]
fn run_writes_the_pinned_csv_layout() {
    let out = std::env::temp_dir().join(format!("layerfem-cli-{}.csv", std::process::id()));
    let status = bin()
        .args(["run", "--k", "1", "--N", "12,24", "--eps", "1e-4", "--out"])
        .arg(&out)
        .output()
        .unwrap();
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    let text = std::fs::read_to_string(&out).unwrap();
    std::fs::remove_file(&out).ok();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "kind,k,sigma,epsilon,N,dofs,err_balanced,err_energy,err_superclose"
    );
    assert!(text.contains("\nN,e_c,p_c,e_s,p_s\n"), "aggregate block missing:\n{text}");
    assert!(text.contains("# log-log balanced"), "log-log block missing:\n{text}");
    // the human-readable aggregate goes to stderr, not into the file
    let err = String::from_utf8_lossy(&status.stderr);
    assert!(err.contains("N ="), "progress lines missing: {err}");
}

#[test]
fn run_rejects_unsupported_degree() {
    let out = bin().args(["run", "--k", "5", "--N", "12,24"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn run_rejects_non_increasing_n_list() {
    let out = bin().args(["run", "--N", "24,12"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn check_mesh_reports_and_exits_clean() {
    let out = bin()
        .args(["check-mesh", "--N", "16", "--eps", "1e-4", "--sigma", "2.5"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("mesh diagnostics: pass"), "{text}");
}

#[test]
fn check_mesh_rejects_unresolvable_parameters() {
    // epsilon far above the resolvable range for this N
    let out = bin().args(["check-mesh", "--N", "16", "--eps", "0.5"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn verify_passes_end_to_end() {
    let out = bin().args(["verify"]).output().unwrap();
    let text = String::from_utf8_lossy(&out.stdout);
    assert_eq!(out.status.code(), Some(0), "{text}");
    assert!(text.lines().filter(|l| l.starts_with("PASS")).count() >= 7, "{text}");
    assert!(!text.contains("FAIL"), "{text}");
}

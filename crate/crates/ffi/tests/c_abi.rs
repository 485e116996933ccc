//! Compiles and runs a C program against the generated header and the
//! static library.

use std::path::{Path, PathBuf};
use std::process::Command;

/// `cargo test` leaves the archive next to the test binary in
/// `target/<profile>/deps`; `cargo build` puts it one level up.
fn static_lib() -> Option<PathBuf> {
    let exe = std::env::current_exe().unwrap();
    exe.ancestors().skip(1).take(2).map(|d| d.join("libdrem_ffi.a")).find(|p| p.is_file())
}

fn compiler() -> Option<String> {
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    Command::new(&cc).arg("--version").output().ok().filter(|o| o.status.success()).map(|_| cc)
}

#[test]
fn header_is_current() {
    let header = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("include/drem.h")).unwrap();
    for sym in [
        "drem_last_error_message",
        "drem_scenario_load",
        "drem_scenario_parse",
        "drem_scenario_set",
        "drem_scenario_bound",
        "drem_scenario_free",
        "drem_run(",
        "drem_run_free",
        "drem_run_copy_column",
        "drem_run_summary_json",
        "drem_det",
        "drem_adjugate",
        "drem_solve_lyapunov",
        "DREM_STATUS_PANIC = 9",
        "typedef struct DremRun DremRun",
    ] {
        assert!(header.contains(sym), "header lacks {sym}");
    }
}

#[test]
fn c_program_links_and_runs() {
    let Some(cc) = compiler() else {
        eprintln!("no C compiler found; skipping");
        return;
    };
    let manifest = Path::new(env!("CARGO_MANIFEST_DIR"));
    let lib = static_lib().expect("static library not built next to the test binary");
    let out = tempfile::tempdir().unwrap();
    let exe = out.path().join("smoke");
    let status = Command::new(cc)
        .arg("-std=c99")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(manifest.join("include"))
        .arg(manifest.join("tests/c/smoke.c"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success(), "C compilation failed");
    let run = Command::new(&exe).output().unwrap();
    let stdout = String::from_utf8_lossy(&run.stdout);
    assert!(run.status.success(), "exit {:?}: {}{}", run.status, stdout, String::from_utf8_lossy(&run.stderr));
    assert!(stdout.starts_with("rows="), "{stdout}");
}

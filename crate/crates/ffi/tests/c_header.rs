//! Compiles a C program against the generated header and the shared library.

use std::path::{Path, PathBuf};
use std::process::Command;

fn target_dir() -> PathBuf {
    // .../target/<profile>/deps/<test binary>
    let exe = std::env::current_exe().unwrap();
    exe.parent().and_then(Path::parent).unwrap().to_path_buf()
}

#[test]
fn header_declares_the_api() {
    let header = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("include/riskfsc.h")).unwrap();
    for name in ["rf_model_parse", "rf_solve", "rf_evaluate", "rf_last_error_message", "RF_STATUS_OK", "typedef struct RfModel RfModel"] {
        assert!(header.contains(name), "header lacks {name}");
    }
}

#[test]
fn c_program_links_and_runs() {
    let dir = target_dir();
    let lib = dir.join(if cfg!(target_os = "macos") { "libriskfsc_ffi.dylib" } else { "libriskfsc_ffi.so" });
    if !lib.exists() || Command::new("cc").arg("--version").output().is_err() {
        eprintln!("skipping: no C compiler or shared library at {}", lib.display());
        return;
    }
    let manifest = Path::new(env!("CARGO_MANIFEST_DIR"));
    let out = tempfile::tempdir().unwrap();
    let exe = out.path().join("smoke");
    let status = Command::new("cc")
        .arg(manifest.join("tests/c/smoke.c"))
        .arg("-I")
        .arg(manifest.join("include"))
        .arg("-L")
        .arg(&dir)
        .arg("-lriskfsc_ffi")
        .arg("-o")
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success(), "C compilation failed");
    let run = Command::new(&exe).env("LD_LIBRARY_PATH", &dir).env("DYLD_LIBRARY_PATH", &dir).output().unwrap();
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    assert!(String::from_utf8_lossy(&run.stdout).starts_with("objective 1.0000"));
}

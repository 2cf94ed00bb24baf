use std::path::Path;
use std::process::Command;

fn header() -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("include").join("attvar.h")
}

#[test]
fn header_declares_the_api() {
    let text = std::fs::read_to_string(header()).expect("build script writes include/attvar.h");
    for sym in [
        "attvar_dataset_new",
        "attvar_dataset_free",
        "attvar_estimate",
        "attvar_report_psi_hat",
        "attvar_report_variance",
        "attvar_report_ci",
        "attvar_report_to_json",
        "attvar_report_free",
        "attvar_string_free",
        "attvar_last_error_message",
        "attvar_simulate_json",
        "ATTVAR_STATUS_OK",
        "typedef struct AttvarDataset AttvarDataset",
    ] {
        assert!(text.contains(sym), "missing {sym}");
    }
}

#[test]
fn header_compiles_as_c() {
    let Ok(status) = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-x", "c"])
        .arg(header())
        .status()
    else {
        eprintln!("no C compiler on PATH; skipping");
        return;
    };
    assert!(status.success());
}

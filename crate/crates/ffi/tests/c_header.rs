//! Compiles a small C program against the generated header and static library.
//! Skipped when no C compiler is on the PATH.

use std::path::PathBuf;
use std::process::Command;

const PROGRAM: &str = r#"
#include <stdio.h>
#include <string.h>
#include "certlab.h"

int main(void) {
    double x[4] = {1.0, 0.0, 0.0, 1.0};
    double y[2] = {2.0, 0.1};
    double beta[2] = {0.0, 0.0};
    if (certlab_lasso(x, 2, 2, y, 1.0, beta) != CERTLAB_STATUS_OK) return 1;
    if (beta[0] < 1.4999 || beta[0] > 1.5001 || beta[1] != 0.0) return 2;
    CertlabProblem *p = NULL;
    if (certlab_problem_from_json("{\"schema_version\":1}", &p) != CERTLAB_STATUS_CONFIG) return 3;
    if (strstr(certlab_last_error(), "missing field") == NULL) return 4;
    printf("ok %s\n", certlab_version());
    return 0;
}
"#;

#[test]
fn c_program_links_and_runs() {
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    if Command::new(&cc).arg("--version").output().is_err() {
        eprintln!("skipping: no C compiler");
        return;
    }
    let manifest = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    // Integration tests run from target/<profile>/deps; the static library sits one level up.
    let exe = std::env::current_exe().unwrap();
    let profile_dir = exe.parent().unwrap().parent().unwrap();
    let lib = profile_dir.join("libcertlab_ffi.a");
    if !lib.exists() {
        eprintln!("skipping: {} not built", lib.display());
        return;
    }
    let tmp = PathBuf::from(env!("CARGO_TARGET_TMPDIR"));
    let src = tmp.join("certlab_smoke.c");
    let bin = tmp.join("certlab_smoke");
    std::fs::write(&src, PROGRAM).unwrap();
    let status = Command::new(&cc)
        .arg(&src)
        .arg("-I")
        .arg(manifest.join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .unwrap();
    assert!(status.success(), "C compile failed");
    let out = Command::new(&bin).output().unwrap();
    assert!(out.status.success(), "C program exited with {:?}", out.status);
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("ok "));
}

//! The committed header must describe the built library: compile a C
//! program against include/sasfield.h, link it with the static library,
//! and run it.  Skipped (with a note) when no C compiler is available.

use std::path::PathBuf;
use std::process::Command;

const DEMO: &str = r#"
#include <stdio.h>
#include <string.h>
#include "sasfield.h"

int main(void) {
    SasConfig *cfg = NULL;
    int32_t code = sas_config_parse("run.seed = 1\nkernel.alpha = 2.0\n", &cfg);
    if (code != SAS_ERR_CONFIG) { fprintf(stderr, "want 2 got %d\n", code); return 1; }
    if (strlen(sas_last_error()) == 0) { fprintf(stderr, "no message\n"); return 1; }

    code = sas_config_parse(
        "experiment.name = demo\nrun.operation = maxima\nrun.seed = 9\n"
        "run.replications = 2\nrun.ladder = 2, 4\nrun.calibration = 20000\n", &cfg);
    if (code != SAS_OK) { fprintf(stderr, "parse: %s\n", sas_last_error()); return 1; }

    SasTable *table = NULL;
    code = sas_run(cfg, 1, &table);
    if (code != SAS_OK) { fprintf(stderr, "run: %s\n", sas_last_error()); return 1; }
    if (sas_table_row_count(table) != 8) {
        fprintf(stderr, "rows %zu\n", sas_table_row_count(table));
        return 1;
    }

    char *csv = NULL;
    if (sas_table_to_csv(table, &csv) != SAS_OK) return 1;
    if (strncmp(csv, "experiment,operation", 20) != 0) return 1;

    SasSimulator *sim = NULL;
    if (sas_simulator_new(cfg, &sim) != SAS_OK) return 1;
    size_t sites = sas_simulator_site_count(sim);
    double values[32];
    if (sites > 32) return 1;
    if (sas_simulator_sample(sim, 0, values, 32) != SAS_OK) return 1;

    sas_simulator_free(sim);
    sas_string_free(csv);
    sas_table_free(table);
    sas_config_free(cfg);
    printf("ok %s\n", sas_version());
    return 0;
}
"#;

fn compiler() -> Option<&'static str> {
    ["cc", "gcc", "clang"].into_iter().find(|cc| {
        Command::new(cc)
            .arg("--version")
            .output()
            .map(|o| o.status.success())
            .unwrap_or(false)
    })
}

fn static_lib() -> PathBuf {
    let target = std::env::var("CARGO_TARGET_DIR").map(PathBuf::from).unwrap_or_else(|_| {
        PathBuf::from(env!("CARGO_MANIFEST_DIR"))
            .join("..")
            .join("..")
            .join("target")
    });
    let profile = if cfg!(debug_assertions) { "debug" } else { "release" };
    target.join(profile).join("libsasfield_capi.a")
}

#[test]
fn header_compiles_links_and_runs() {
    let Some(cc) = compiler() else {
        eprintln!("no C compiler found; skipping header check");
        return;
    };
    let include = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include");
    assert!(
        include.join("sasfield.h").exists(),
        "missing generated header {}",
        include.join("sasfield.h").display()
    );
    let lib = static_lib();
    assert!(lib.exists(), "static library not built at {}", lib.display());

    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("demo.c");
    let bin = dir.path().join("demo");
    std::fs::write(&src, DEMO).unwrap();

    let compile = Command::new(cc)
        .arg("-std=c11")
        .arg("-Wall")
        .arg("-Wextra")
        .arg("-Werror")
        .arg("-I")
        .arg(&include)
        .arg(&src)
        .arg(&lib)
        .arg("-lpthread")
        .arg("-ldl")
        .arg("-lm")
        .arg("-o")
        .arg(&bin)
        .output()
        .unwrap();
    assert!(
        compile.status.success(),
        "C compilation failed:\n{}",
        String::from_utf8_lossy(&compile.stderr)
    );

    let run = Command::new(&bin).output().unwrap();
    assert!(
        run.status.success(),
        "demo failed:\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&run.stdout),
        String::from_utf8_lossy(&run.stderr)
    );
}

//! Acceptance criterion 11: seeded CLI runs are byte-identical across
//! repeated invocations and across thread counts.

use std::path::Path;
use std::process::Command;

fn noc3d(args: &[&str], dir: &Path) {
    let out = Command::new(env!("CARGO_BIN_EXE_noc3d"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs");
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

const SYSTEM: &str = r#"{"dims": [2, 2, 2], "n_cpu": 1, "n_llc": 2, "n_gpu": 5}"#;

fn experiment_config(out_dir: &Path) -> String {
    format!(
        r#"{{
  "system": {SYSTEM},
  "case": 2,
  "traffic": [{{"kind": "synthetic", "spec": {{"seed": 11}}}}],
  "algo": "moo-stage",
  "budget": 600,
  "seeds": [3, 9],
  "out_dir": {:?},
  "neighbor_samples": 32,
  "iter_max": 4
}}"#,
        out_dir.to_str().unwrap()
    )
}

const ARTIFACTS: &[&str] = &[
    "seed_3/archive.json",
    "seed_3/progress.csv",
    "seed_3/layers.csv",
    "seed_9/archive.json",
    "seed_9/progress.csv",
    "seed_9/layers.csv",
    "summary.json",
];

#[test]
fn criterion_11_cli_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let runs = [("r1", "1"), ("r2", "1"), ("r4", "4")];
    for (name, threads) in runs {
        let out = dir.path().join(name);
        std::fs::write(dir.path().join(format!("{name}.json")), experiment_config(&out)).unwrap();
        noc3d(
            &["--threads", threads, "optimize", "--config", &format!("{name}.json")],
            dir.path(),
        );
    }
    let mut pass = true;
    for artifact in ARTIFACTS {
        let base = std::fs::read(dir.path().join("r1").join(artifact)).unwrap();
        for other in ["r2", "r4"] {
            let got = std::fs::read(dir.path().join(other).join(artifact)).unwrap();
            if got != base {
                pass = false;
                eprintln!("artifact {artifact} differs between r1 and {other}");
            }
        }
    }
    println!(
        "ACCEPTANCE 11 cli determinism: {}  [{} artifacts x repeat + threads 1 vs 4]",
        if pass { "PASS" } else { "FAIL" },
        ARTIFACTS.len()
    );
    assert!(pass, "acceptance criterion 11 (cli determinism) failed");
}

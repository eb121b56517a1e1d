use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn lalm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lalm"))
        .args(args)
        .output()
        .expect("spawn lalm")
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("config.txt");
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

const LASSO_CONFIG: &str = "\
[experiment]
kind = lasso
seed = 5

[lasso]
rows = 50
cols = 200
sparsity = 10

[reference]
fgm_iterations = 2000

[solver relaxed]
kind = proposed
alpha = 1.999
rho = 0.1
iterations = 40

[solver baseline]
kind = simple
alpha = 1.0
rho = 0.1
iterations = 40
";

const CT_CONFIG: &str = "\
[experiment]
kind = ct
seed = 5

[scenario]
nx = 16
ny = 16
views = 20
i0 = 1e5

[reference]
fgm_iterations = 300

[solver relaxed]
kind = proposed
alpha = 1.999
rho = continuation
subsets = 4
iterations = 5
";

const SPECTRAL_CONFIG: &str = "\
[experiment]
kind = spectral

[spectral]
ratios = 0.5, 0.01, 0.001
alphas = 1.0, 1.5, 1.999
rho_small = 1e-3
";

#[test]
fn lasso_runs_and_gap_columns_are_nonnegative_and_bounded() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), LASSO_CONFIG);
    let out = dir.path().join("out");
    let result = lalm(&["run-lasso", "--config", &config, "--out", out.to_str().unwrap()]);
    assert!(result.status.success(), "{}", String::from_utf8_lossy(&result.stderr));

    for name in ["relaxed", "baseline"] {
        let gaps = fs::read_to_string(out.join(format!("gaps_{name}.csv"))).unwrap();
        let mut lines = gaps.lines();
        assert_eq!(lines.next(), Some("k,ergodic_gap,nonergodic_gap"));
        let mut rows = 0;
        for line in lines {
            let fields: Vec<f64> = line.split(',').map(|f| f.parse().unwrap()).collect();
            assert!(fields[1] >= 0.0 && fields[2] >= 0.0, "negative gap: {line}");
            rows += 1;
        }
        assert_eq!(rows, 40);

        let bounds = fs::read_to_string(out.join(format!("bounds_{name}.csv"))).unwrap();
        for line in bounds.lines().skip(1) {
            let fields: Vec<f64> = line.split(',').map(|f| f.parse().unwrap()).collect();
            assert!(
                fields[1] <= fields[2] * (1.0 + 1e-9),
                "gap above bound: {line}"
            );
        }
    }
}

#[test]
fn ct_runs_and_outputs_are_byte_identical_under_fixed_seed() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), CT_CONFIG);
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    for out in [&out_a, &out_b] {
        let result = lalm(&["run-ct", "--config", &config, "--out", out.to_str().unwrap()]);
        assert!(result.status.success(), "{}", String::from_utf8_lossy(&result.stderr));
    }
    for name in [
        "ct_relaxed.csv",
        "ct_relaxed_final.raw",
        "ct_relaxed_final.pgm",
        "ct_relaxed_diff.pgm",
        "reference.raw",
        "init.raw",
        "truth.pgm",
    ] {
        let a = fs::read(out_a.join(name)).unwrap();
        let b = fs::read(out_b.join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between identical runs");
        assert!(!a.is_empty(), "{name} is empty");
    }
    let csv = fs::read_to_string(out_a.join("ct_relaxed.csv")).unwrap();
    assert!(csv.starts_with("k,rho,cost,rms_hu,ergodic_gap,nonergodic_gap,wall_seconds\n"));
    // One warm-start row plus one row per outer iteration... the OS runner
    // records per subiteration: 5 iterations x 4 subsets + initial row.
    assert_eq!(csv.lines().count() - 1, 21);
}

#[test]
fn seed_override_changes_ct_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), CT_CONFIG);
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    let base = lalm(&["run-ct", "--config", &config, "--out", out_a.to_str().unwrap()]);
    assert!(base.status.success());
    let other = lalm(&[
        "run-ct",
        "--config",
        &config,
        "--out",
        out_b.to_str().unwrap(),
        "--seed",
        "6",
    ]);
    assert!(other.status.success());
    let a = fs::read(out_a.join("ct_relaxed_final.raw")).unwrap();
    let b = fs::read(out_b.join("ct_relaxed_final.raw")).unwrap();
    assert_ne!(a, b, "different seeds must change the reconstruction");
}

#[test]
fn spectral_table_pins() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), SPECTRAL_CONFIG);
    let out = dir.path().join("out");
    let result = lalm(&[
        "analyze-spectral",
        "--config",
        &config,
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(result.status.success(), "{}", String::from_utf8_lossy(&result.stderr));
    let csv = fs::read_to_string(out.join("spectral.csv")).unwrap();
    let rows: Vec<Vec<&str>> = csv.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 9);

    let mut critical_by_ratio: std::collections::HashMap<&str, &str> = Default::default();
    for row in &rows {
        let ratio = row[0];
        let critical: f64 = row[2].parse().unwrap();
        if ratio.starts_with("5.0") {
            // ratio 0.5 sits at the maximum of 2 sqrt(r (1 - r)).
            assert!((critical - 1.0).abs() < 1e-12);
        }
        // identical across alpha values within each ratio
        let entry = critical_by_ratio.entry(ratio).or_insert(row[2]);
        assert_eq!(*entry, row[2], "critical rho must not depend on alpha");
    }

    // omega scales linearly with alpha for small ratios
    for row in &rows {
        let ratio: f64 = row[0].parse().unwrap();
        if ratio <= 0.01 && !row[4].is_empty() {
            let alpha: f64 = row[1].parse().unwrap();
            let omega: f64 = row[4].parse().unwrap();
            let predicted = alpha * ratio.sqrt();
            assert!(
                (omega - predicted).abs() <= 0.05 * predicted,
                "omega {omega} vs alpha sqrt(ratio) {predicted}"
            );
        }
    }
}

#[test]
fn unknown_solver_kind_fails_with_one_line_error() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &LASSO_CONFIG.replace("kind = proposed", "kind = magic"));
    let out = dir.path().join("out");
    let result = lalm(&["run-lasso", "--config", &config, "--out", out.to_str().unwrap()]);
    assert!(!result.status.success());
    let stderr = String::from_utf8_lossy(&result.stderr);
    assert!(stderr.starts_with("error:"), "{stderr}");
    assert_eq!(stderr.trim_end().lines().count(), 1, "{stderr}");
    assert!(stderr.contains("proposed"), "must list valid kinds: {stderr}");
}

#[test]
fn mismatched_subcommand_and_config_kind_fails() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), CT_CONFIG);
    let out = dir.path().join("out");
    let result = lalm(&["run-lasso", "--config", &config, "--out", out.to_str().unwrap()]);
    assert!(!result.status.success());
    let stderr = String::from_utf8_lossy(&result.stderr);
    assert!(stderr.starts_with("error:"), "{stderr}");
}

//! End-to-end tests of the `deltavar` binary: exit codes, output
//! determinism, seed semantics, and the statistical contract of the Monte
//! Carlo experiment driver.

use std::path::Path;
use std::process::Command;

fn run_bin(args: &[&str]) -> (i32, String, String) {
    let output = Command::new(env!("CARGO_BIN_EXE_deltavar"))
        .args(args)
        .output()
        .expect("spawning the binary");
    (
        output.status.code().expect("no exit code (killed by signal?)"),
        String::from_utf8(output.stdout).expect("stdout is UTF-8"),
        String::from_utf8(output.stderr).expect("stderr is UTF-8"),
    )
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

fn dirichlet_config(out_dir: &Path, n_replications: usize, seed_base: u64) -> String {
    format!(
        r#"
version = 1
t_obs = 1.0
window = [0.2, 0.8]
resolutions = [128, 256]
q = 2
n_replications = {n_replications}
seed_base = {seed_base}
output_dir = "{}"
target = "theta"
n_modes = 1024

[model]
theta = 1.0
sigma = 1.0
alpha = 2.0
gamma = 0.5
domain = "dirichlet"
"#,
        out_dir.display()
    )
}

#[test]
fn experiment_outputs_are_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    let config_a = write_config(dir.path(), "a.toml", &dirichlet_config(&out_a, 10, 1000));
    let config_b = write_config(dir.path(), "b.toml", &dirichlet_config(&out_b, 10, 1000));

    let (code_a, stdout_a, _) = run_bin(&["mc-experiment", "--config", &config_a]);
    let (code_b, stdout_b, _) = run_bin(&["mc-experiment", "--config", &config_b]);
    assert_eq!(code_a, 0);
    assert_eq!(code_b, 0);
    assert_eq!(stdout_a, stdout_b, "summary on stdout must be reproducible");

    for name in ["summary.json", "replications.csv", "mean_estimate.csv", "rmse.csv", "plot.svg"] {
        let a = std::fs::read(out_a.join(name)).unwrap();
        let b = std::fs::read(out_b.join(name)).unwrap();
        assert_eq!(a, b, "{name} must be byte-identical across identical runs");
    }
}

#[test]
fn invalid_parameters_exit_with_code_2() {
    let (code, _, stderr) = run_bin(&["constants", "--q", "2", "--M", "1", "--m", "0", "--H", "1.5"]);
    assert_eq!(code, 2, "stderr: {stderr}");
    assert!(stderr.contains("strictly between 0 and 1"), "stderr: {stderr}");

    // Gaussian-limit hypothesis violated: M = m + 1 with H >= 3/4.
    let (code, _, stderr) = run_bin(&[
        "clt-check", "--m", "0", "--H", "0.8", "--M", "1", "--q", "2", "--n", "64",
        "--n-replications", "8",
    ]);
    assert_eq!(code, 2, "stderr: {stderr}");
    assert!(stderr.contains("M = m + 1 with H < 3/4"), "stderr: {stderr}");

    // Unknown config key.
    let dir = tempfile::tempdir().unwrap();
    let bad = dirichlet_config(&dir.path().join("out"), 2, 0).replace("t_obs", "t_observed");
    let config = write_config(dir.path(), "bad.toml", &bad);
    let (code, _, stderr) = run_bin(&["mc-experiment", "--config", &config]);
    assert_eq!(code, 2, "stderr: {stderr}");
}

#[test]
fn a_diverging_simulation_exits_with_code_3() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("boom.csv");
    // A strong cubic self-amplification blows up in finite time; the time
    // stepper must detect the non-finite state rather than write garbage.
    let (code, _, stderr) = run_bin(&[
        "simulate-spde", "--t", "1", "--gamma", "0.5", "--nonlinearity", "poly:0,0,0,1e8",
        "--n-points", "65", "--n-modes", "256", "--n-time-steps", "64",
        "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(code, 3, "stderr: {stderr}");
    assert!(stderr.contains("diverged"), "stderr: {stderr}");
    assert!(!out.exists(), "no output file after a diverging simulation");
}

#[test]
fn an_experiment_over_the_failure_budget_exits_4_but_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let body = format!(
        r#"
version = 1
t_obs = 1.0
window = [0.2, 0.8]
resolutions = [64]
q = 2
n_replications = 5
seed_base = 0
output_dir = "{}"
target = "theta"
n_modes = 256
n_time_steps = 64

[model]
theta = 1.0
sigma = 1.0
alpha = 2.0
gamma = 0.5
nonlinearity = {{ polynomial = [0.0, 0.0, 0.0, 1e8] }}
domain = "dirichlet"
"#,
        out_dir.display()
    );
    let config = write_config(dir.path(), "fail.toml", &body);
    let (code, stdout, stderr) = run_bin(&["mc-experiment", "--config", &config]);
    assert_eq!(code, 4, "stderr: {stderr}");
    assert!(stderr.contains("failure budget"), "stderr: {stderr}");

    // Partial results are still on disk and in the summary.
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("summary.json")).unwrap())
            .unwrap();
    assert_eq!(summary["failure_budget_exceeded"], serde_json::json!(true));
    assert_eq!(summary["n_failed_estimates"], serde_json::json!(5));
    assert_eq!(summary["resolutions"][0]["n_failures"], serde_json::json!(5));
    assert!(summary["resolutions"][0]["mean_estimate"].is_null());
    let csv = std::fs::read_to_string(out_dir.join("replications.csv")).unwrap();
    assert!(csv.contains("diverged"), "failure reasons are recorded per replication");
    // The stdout summary matches the written file's content.
    assert_eq!(
        serde_json::from_str::<serde_json::Value>(&stdout).unwrap(),
        summary
    );
}

#[test]
fn coverage_and_error_decomposition_track_the_gaussian_limit() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let body = format!(
        r#"
version = 1
t_obs = 1.0
window = [0.2, 0.8]
resolutions = [512, 2048]
q = 2
n_replications = 300
seed_base = 42000
output_dir = "{}"
target = "theta"
n_modes = 8192

[model]
theta = 1.0
sigma = 1.0
alpha = 2.0
gamma = 0.5
domain = "dirichlet"
"#,
        out_dir.display()
    );
    let config = write_config(dir.path(), "cov.toml", &body);
    let (code, stdout, stderr) = run_bin(&["mc-experiment", "--config", &config]);
    assert_eq!(code, 0, "stderr: {stderr}");
    let summary: serde_json::Value = serde_json::from_str(&stdout).unwrap();
    let true_value = summary["true_value"].as_f64().unwrap();

    for row in summary["resolutions"].as_array().unwrap() {
        let mean = row["mean_estimate"].as_f64().unwrap();
        let sd = row["empirical_sd"].as_f64().unwrap();
        let rmse = row["rmse"].as_f64().unwrap();
        let coverage = row["coverage_95"].as_f64().unwrap();
        let n = row["n"].as_u64().unwrap();

        // The squared error decomposes exactly into bias^2 + spread^2
        // because the spread is the population standard deviation.
        let bias = mean - true_value;
        assert!(
            (rmse.powi(2) - (bias.powi(2) + sd.powi(2))).abs() <= 1e-10 * rmse.powi(2),
            "n={n}: rmse^2 = bias^2 + sd^2 violated: {rmse}, {bias}, {sd}"
        );

        // 95% intervals must cover at roughly the nominal rate: a binomial
        // band of ~4 standard errors around 0.95 for 300 replications,
        // with room for the finite-resolution bias.
        assert!(
            (0.88..=0.99).contains(&coverage),
            "n={n}: coverage {coverage} outside [0.88, 0.99]"
        );
    }

    // The error shrinks at the h^(1/2) rate promised by the limit theory.
    let slope = summary["rate_fit"]["slope"].as_f64().unwrap();
    assert!(
        (0.35..=0.65).contains(&slope),
        "empirical rate {slope} is not h^(1/2)-like"
    );
}

#[test]
fn batch_replications_match_single_replication_runs() {
    let dir = tempfile::tempdir().unwrap();
    let batch_dir = dir.path().join("batch");
    let config = write_config(
        dir.path(),
        "batch.toml",
        &dirichlet_config(&batch_dir, 4, 7000),
    );
    let (code, _, stderr) = run_bin(&["mc-experiment", "--config", &config]);
    assert_eq!(code, 0, "stderr: {stderr}");
    let batch_csv = std::fs::read_to_string(batch_dir.join("replications.csv")).unwrap();

    for rep in 0..4u64 {
        let solo_dir = dir.path().join(format!("solo{rep}"));
        let solo = write_config(
            dir.path(),
            &format!("solo{rep}.toml"),
            &dirichlet_config(&solo_dir, 1, 7000 + rep),
        );
        let (code, _, stderr) = run_bin(&["mc-experiment", "--config", &solo]);
        assert_eq!(code, 0, "stderr: {stderr}");
        let solo_csv = std::fs::read_to_string(solo_dir.join("replications.csv")).unwrap();

        // Replication r of the batch must reproduce bit-for-bit as a
        // single-replication run with seed_base + r.
        for solo_line in solo_csv.lines().skip(1) {
            let (_, rest) = solo_line.split_once(',').unwrap();
            let expected = format!("{rep},{rest}");
            assert!(
                batch_csv.lines().any(|line| line == expected),
                "batch is missing replication {rep}: {expected}"
            );
        }
    }
}

#[test]
fn estimate_round_trips_a_simulated_field() {
    let dir = tempfile::tempdir().unwrap();
    let field = dir.path().join("field.csv");
    let (code, _, stderr) = run_bin(&[
        "--seed", "5", "simulate-spde", "--t", "1", "--gamma", "0.5", "--n-points", "513",
        "--window", "0.2,0.8", "--n-modes", "4096", "--out", field.to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "stderr: {stderr}");

    let (code, stdout, stderr) = run_bin(&[
        "estimate", "--in", field.to_str().unwrap(), "--q", "2", "--auto-M",
        "--s-star", "1.5", "--known", "sigma=1.0",
    ]);
    assert_eq!(code, 0, "stderr: {stderr}");
    let report: serde_json::Value = serde_json::from_str(&stdout).unwrap();
    assert_eq!(report["target"], serde_json::json!("theta"));
    assert_eq!(report["clt_valid"], serde_json::json!(true));
    let estimate = report["estimate"].as_f64().unwrap();
    let se = report["std_error"].as_f64().unwrap();
    assert!(
        (estimate - 1.0).abs() <= 4.0 * se,
        "theta estimate {estimate} is more than 4 standard errors ({se}) from the truth"
    );
    let ci = report["ci_95"].as_array().unwrap();
    assert!(ci[0].as_f64().unwrap() < estimate && estimate < ci[1].as_f64().unwrap());

    // The estimator is scale-equivariant: feeding c * X must divide the
    // dissipation estimate by c^2 exactly (powers of two are exact in
    // floating point).
    let text = std::fs::read_to_string(&field).unwrap();
    let scaled: String = std::iter::once("t,value".to_string())
        .chain(text.lines().skip(1).map(|line| {
            let (t, v) = line.split_once(',').unwrap();
            format!("{t},{}", 4.0 * v.parse::<f64>().unwrap())
        }))
        .collect::<Vec<_>>()
        .join("\n");
    let scaled_path = dir.path().join("scaled.csv");
    std::fs::write(&scaled_path, scaled + "\n").unwrap();
    let (code, stdout, _) = run_bin(&[
        "estimate", "--in", scaled_path.to_str().unwrap(), "--q", "2", "--auto-M",
        "--s-star", "1.5", "--known", "sigma=1.0",
    ]);
    assert_eq!(code, 0);
    let scaled_report: serde_json::Value = serde_json::from_str(&stdout).unwrap();
    let scaled_estimate = scaled_report["estimate"].as_f64().unwrap();
    assert!(
        (scaled_estimate - estimate / 16.0).abs() <= 1e-12 * estimate.abs(),
        "dissipation estimate must scale by c^-2: got {scaled_estimate}, want {}",
        estimate / 16.0
    );
}

#[test]
fn clt_check_is_reproducible_and_reports_the_gaussian_fit() {
    let args = [
        "--seed", "99", "clt-check", "--m", "0", "--H", "0.5", "--M", "2", "--q", "2",
        "--n", "512", "--n-replications", "300",
    ];
    let (code, stdout, stderr) = run_bin(&args);
    assert_eq!(code, 0, "stderr: {stderr}");
    let report: serde_json::Value = serde_json::from_str(&stdout).unwrap();
    assert_eq!(report["pass"], serde_json::json!(true), "report: {report}");
    assert!(report["ks_p_value"].as_f64().unwrap() > 0.01);

    let (code_again, stdout_again, _) = run_bin(&args);
    assert_eq!(code_again, 0);
    assert_eq!(stdout, stdout_again, "identical seeds reproduce identical reports");
}

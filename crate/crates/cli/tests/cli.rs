use std::path::Path;
use std::process::{Command, Output};

fn qgnn(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qgnn"))
        .arg("--output-dir")
        .arg(dir)
        .args(args)
        .env_remove("QGNN_OUTPUT_DIR")
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout:\n{}\nstderr:\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn small_dataset(dir: &Path) {
    ok(&qgnn(dir, &["gen-data", "--n", "20", "--factor", "2", "--seed", "5"]));
}

fn checkpoint_json(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("checkpoint.json")).unwrap()).unwrap()
}

#[test]
fn gen_data_counts_and_determinism() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for d in [&a, &b] {
        ok(&qgnn(d.path(), &["gen-data", "--n", "30", "--factor", "3", "--seed", "9"]));
    }
    let text = std::fs::read(a.path().join("dataset.jsonl")).unwrap();
    assert_eq!(text, std::fs::read(b.path().join("dataset.jsonl")).unwrap());
    assert_eq!(String::from_utf8(text).unwrap().lines().count(), 1 + 90);
    assert!(a.path().join("gen-data-config.toml").exists());
}

#[test]
fn zero_samples_is_a_usage_error() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(qgnn(d.path(), &["gen-data", "--n", "0"]).status.code(), Some(2));
}

#[test]
fn train_reports_parameter_counts() {
    let d = tempfile::tempdir().unwrap();
    small_dataset(d.path());
    for (layers, count) in [("2", 50), ("3", 68)] {
        let out = ok(&qgnn(d.path(), &["train", "--layers", layers, "--epochs", "1", "--batch-size", "8"]));
        assert!(out.contains("validation RMSE(E)"), "{out}");
        let ck = checkpoint_json(d.path());
        assert_eq!(ck["param_count"], count);
        assert_eq!(ck["params"].as_array().unwrap().len(), count);
    }
}

#[test]
fn training_is_reproducible() {
    let d = tempfile::tempdir().unwrap();
    small_dataset(d.path());
    let args = ["train", "--epochs", "2", "--batch-size", "8"];
    ok(&qgnn(d.path(), &args));
    let (log, ck) = (
        std::fs::read(d.path().join("loss.csv")).unwrap(),
        std::fs::read(d.path().join("checkpoint.json")).unwrap(),
    );
    ok(&qgnn(d.path(), &args));
    assert_eq!(log, std::fs::read(d.path().join("loss.csv")).unwrap());
    assert_eq!(ck, std::fs::read(d.path().join("checkpoint.json")).unwrap());
    let header = String::from_utf8(log).unwrap();
    assert!(header.starts_with("epoch,train_loss,val_loss,train_loss_x,train_loss_y,train_loss_z\n"));
}

#[test]
fn eval_report_and_rejections() {
    let d = tempfile::tempdir().unwrap();
    small_dataset(d.path());
    ok(&qgnn(d.path(), &["train", "--epochs", "1", "--batch-size", "8"]));
    let report = ok(&qgnn(d.path(), &["eval"]));
    for col in ["RMSE(E) [val]", "RMSE(F) [val]", "RMSE(E) [test]", "RMSE(F) [test]"] {
        assert!(report.contains(col), "{report}");
    }
    assert!(d.path().join("metrics.csv").exists());

    assert_eq!(qgnn(d.path(), &["eval", "--layers", "3"]).status.code(), Some(4));

    let bad = d.path().join("bad.json");
    std::fs::write(&bad, "{\"schema_version\": 1}").unwrap();
    let out = qgnn(d.path(), &["eval", "--checkpoint", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn malformed_dataset_names_the_record() {
    let d = tempfile::tempdir().unwrap();
    small_dataset(d.path());
    let path = d.path().join("dataset.jsonl");
    let text = std::fs::read_to_string(&path).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    lines[6] = "{\"coords\": [1, 2, 3], \"forces\": [], \"energy\": 0}".into();
    std::fs::write(&path, lines.join("\n")).unwrap();
    let out = qgnn(d.path(), &["train", "--epochs", "1"]);
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stderr).contains("record 5"));
}

#[test]
fn missing_dataset_is_an_io_error() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(qgnn(d.path(), &["train", "--epochs", "1"]).status.code(), Some(3));
}

#[test]
fn expressibility_sweep_csv() {
    let d = tempfile::tempdir().unwrap();
    let args = ["expressibility", "--layers", "1..8", "--samples", "40", "--seed", "3"];
    ok(&qgnn(d.path(), &args));
    let first = std::fs::read_to_string(d.path().join("expressibility.csv")).unwrap();
    let lines: Vec<&str> = first.lines().collect();
    assert_eq!(lines[0], "n_layers,kl_divergence,samples,bins,seed");
    assert_eq!(lines.len(), 9);
    ok(&qgnn(d.path(), &args));
    assert_eq!(first, std::fs::read_to_string(d.path().join("expressibility.csv")).unwrap());
}

#[test]
fn config_file_flags_and_environment_precedence() {
    let d = tempfile::tempdir().unwrap();
    let env_dir = d.path().join("from-env");
    let file_dir = d.path().join("from-file");
    let config = d.path().join("run.toml");
    std::fs::write(
        &config,
        format!(
            "output_dir = {:?}\n[expressibility]\nsamples = 30\nbins = 10\nlayers = [2]\n",
            file_dir.to_str().unwrap()
        ),
    )
    .unwrap();

    // the environment beats the file
    let out = Command::new(env!("CARGO_BIN_EXE_qgnn"))
        .args(["--config", config.to_str().unwrap(), "expressibility", "--bins", "5"])
        .env("QGNN_OUTPUT_DIR", &env_dir)
        .output()
        .unwrap();
    ok(&out);
    let resolved = std::fs::read_to_string(env_dir.join("expressibility-config.toml")).unwrap();
    // flags beat the file, the file beats defaults
    assert!(resolved.contains("bins = 5"), "{resolved}");
    assert!(resolved.contains("samples = 30"), "{resolved}");
    assert!(resolved.contains("batch_size = 128"), "{resolved}");
    assert!(!file_dir.exists());

    // an explicit flag beats the environment
    let flag_dir = d.path().join("from-flag");
    let out = Command::new(env!("CARGO_BIN_EXE_qgnn"))
        .args(["--config", config.to_str().unwrap(), "--output-dir", flag_dir.to_str().unwrap(), "expressibility"])
        .env("QGNN_OUTPUT_DIR", &env_dir)
        .output()
        .unwrap();
    ok(&out);
    assert!(flag_dir.join("expressibility.csv").exists());
}

#[test]
fn bad_config_is_a_parse_error() {
    let d = tempfile::tempdir().unwrap();
    let config = d.path().join("run.toml");
    std::fs::write(&config, "[train]\nlayers = 3\n").unwrap();
    let out = qgnn(d.path(), &["--config", config.to_str().unwrap(), "expressibility"]);
    assert_eq!(out.status.code(), Some(4));
}

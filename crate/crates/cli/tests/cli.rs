use std::fs;
use std::path::Path;
use std::process::Command;

const CONFIG: &str = r#"
seed = 3

[data]
input = "log.csv"
train = "out/train.csv"
test = "out/test.csv"

[task]
outcome = "total_time"
protected = ["gender"]

[training]
epochs = 3
predictor_hidden = [16, 4]
adversary_hidden = []

[explain]
background_size = 10
max_support = 12

[evaluate]
min_support = 5

[generate]
n_traces = 150
output = "log.csv"
"#;

fn fairpm(dir: &Path, args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_fairpm"))
        .current_dir(dir)
        .args(["--config", "fairpm.toml"])
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = fairpm(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn workspace(config: &str) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("fairpm.toml"), config).unwrap();
    dir
}

fn read_csv(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(String::from).collect())
        .collect()
}

#[test]
fn full_pipeline() {
    let dir = workspace(CONFIG);
    let d = dir.path();
    ok(d, &["generate"]);
    let split = ok(d, &["split"]);
    assert!(split.contains("150 traces: 105 for training, 45 for testing"), "{split}");
    ok(d, &["train"]);
    // The model names the manifest that produced it.
    let model: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(d.join("out/model.json")).unwrap()).unwrap();
    let manifest = fs::read_to_string(d.join("out/train.manifest.toml")).unwrap();
    let hash = model["manifest_hash"].as_str().unwrap();
    assert!(manifest.contains(hash));
    ok(d, &["train", "--lambda", "0", "--model", "out/plain.json"]);
    ok(d, &["evaluate"]);

    // Accuracy recomputed from the exported rows.
    let rows = read_csv(&d.join("out/predictions.csv"));
    let (mut sum, mut n) = (0.0, 0.0);
    for r in &rows {
        let (a, p): (f64, f64) = (r[3].parse().unwrap(), r[4].parse().unwrap());
        if a != 0.0 {
            sum += (a - p).abs() / a.abs();
            n += 1.0;
        }
    }
    let apa = (100.0 * (1.0 - sum / n)).max(0.0);
    let summary = fs::read_to_string(d.join("out/fairness_summary.txt")).unwrap();
    let reported: f64 = summary.lines().next().unwrap().trim_start_matches("apa = ").parse().unwrap();
    assert!((apa - reported).abs() < 1e-9, "{apa} vs {reported}");

    ok(d, &["explain", "--baseline-model", "out/plain.json"]);
    let shapley = read_csv(&d.join("out/shapley.csv"));
    let abs: Vec<f64> = shapley.iter().map(|r| r[2].parse().unwrap()).collect();
    assert!(abs.windows(2).all(|w| w[0] >= w[1]), "sorted by magnitude: {abs:?}");
    let ratio = read_csv(&d.join("out/ratio.csv"));
    assert_eq!(ratio.len(), shapley.len());
    assert!(ratio.iter().any(|r| r[0] == "gender"));

}

#[test]
fn fraction_one_is_a_config_error() {
    let dir = workspace(&CONFIG.replace("[data]\n", "[data]\ntrain_fraction = 1.0\n"));
    let out = fairpm(dir.path(), &["split"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn apa_on_classification_model_not_applicable() {
    let config = CONFIG
        .replace("outcome = \"total_time\"", "outcome = \"occurs:review\"")
        .replace("[evaluate]\n", "[evaluate]\nmetric = \"apa\"\n");
    let dir = workspace(&config);
    let d = dir.path();
    ok(d, &["generate"]);
    ok(d, &["split"]);
    ok(d, &["train"]);
    let out = fairpm(d, &["evaluate"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("not applicable"));
}

#[test]
fn parse_error_names_file_and_line() {
    let dir = workspace(CONFIG);
    let d = dir.path();
    fs::write(
        d.join("log.csv"),
        "case_id,activity,timestamp\nc1,a,2020-01-01T00:00:00Z\nc1,b,yesterday\n",
    )
    .unwrap();
    let out = fairpm(d, &["split"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("log.csv") && err.contains("line 3"), "{err}");
}

#[test]
fn divergence_exit_code() {
    let dir = workspace(&CONFIG.replace("epochs = 3", "epochs = 3\nlearning_rate = 1e300"));
    let d = dir.path();
    ok(d, &["generate"]);
    ok(d, &["split"]);
    assert_eq!(fairpm(d, &["train"]).status.code(), Some(3));
}

#[test]
fn exact_mode_refuses_thirteen_players() {
    let dir = workspace(CONFIG);
    let d = dir.path();
    let mut log = String::from("case_id,activity,timestamp,gender\n");
    for c in 0..20 {
        for a in 0..13 {
            log.push_str(&format!(
                "c{c},act{a},2020-01-{:02}T{:02}:00:00Z,{}\n",
                c + 1,
                a,
                if c % 2 == 0 { "f" } else { "m" }
            ));
        }
    }
    fs::write(d.join("log.csv"), log).unwrap();
    ok(d, &["split"]);
    ok(d, &["train"]);
    let out = fairpm(d, &["explain"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("sampled"));
}

#[test]
fn missing_config_file() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(fairpm(dir.path(), &["split"]).status.code(), Some(1));
}

use std::path::Path;
use std::process::{Command, Output};

fn vtraj(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vtraj"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn synth(dir: &Path, name: &str, scenario: &str, scenes: &str, seed: &str) -> std::path::PathBuf {
    let path = dir.join(name);
    let o = vtraj(&["synth", "--scenario", scenario, "--agents", "3", "--scenes", scenes, "--seed", seed, "--out", p(&path)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    path
}

fn write_config(dir: &Path, epochs: usize) -> std::path::PathBuf {
    let path = dir.join("config.json");
    let text = format!(
        r#"{{"hidden_dim": 8, "virtual_count": 2, "heads": 4, "epochs": {epochs}, "batch_size": 4,
            "synthetic_agents": 3, "synthetic_train_scenes": 8, "synthetic_val_scenes": 2}}"#
    );
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn demo_chain_reports_the_known_row() {
    let o = vtraj(&["analyze-graph", "--demo-chain"]);
    assert!(o.status.success());
    let out = stdout(&o);
    assert!(out.starts_with("scene_id,i,j,r_before,r_after,reduction_pct\n"));
    let row = out.lines().find(|l| l.starts_with("chain5,0,4,")).unwrap();
    let vals: Vec<f64> = row.split(',').skip(3).map(|v| v.parse().unwrap()).collect();
    assert!((vals[0] - 4.0).abs() < 1e-9 && (vals[1] - 1.2).abs() < 1e-9);
}

#[test]
fn train_eval_export_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), 2);
    let run = dir.path().join("run");
    let o = vtraj(&["train", "--config", p(&cfg), "--out", p(&run)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let log = std::fs::read_to_string(run.join("metrics.csv")).unwrap();
    assert!(log.starts_with("epoch,pred_loss,imp_loss,total_loss,val_min_ade,val_min_fde\n"));
    assert_eq!(log.lines().count(), 3);

    let data = synth(dir.path(), "test.json", "crossing", "3", "9");
    let ck = run.join("checkpoint.json");
    let k1 = vtraj(&["eval", "--checkpoint", p(&ck), "--data", p(&data), "--k", "1"]);
    let k4 = vtraj(&["eval", "--checkpoint", p(&ck), "--data", p(&data), "--k", "4"]);
    assert!(k1.status.success() && k4.status.success());
    let ade = |o: &Output| -> f64 { stdout(o).lines().nth(1).unwrap().split(',').nth(2).unwrap().parse().unwrap() };
    assert!(stdout(&k4).starts_with("dataset,scene_count,min_ade_k,min_fde_k,k\ntest,3,"));
    assert!(ade(&k1) >= ade(&k4));

    let gates = vtraj(&["export-gates", "--checkpoint", p(&ck), "--data", p(&data)]);
    assert!(gates.status.success());
    let text = stdout(&gates);
    assert!(text.starts_with("scene_id,agent_id,g_onehop,g_high,active_set\n"));
    assert_eq!(text.lines().count(), 1 + 3 * 3);

    let graphs = vtraj(&["analyze-graph", "--checkpoint", p(&ck), "--data", p(&data)]);
    assert!(graphs.status.success());
    assert_eq!(stdout(&graphs).lines().count(), 1 + 3 * 3);
}

#[test]
fn untrained_checkpoint_has_uniform_gates() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), 0);
    let run = dir.path().join("run");
    assert!(vtraj(&["train", "--config", p(&cfg), "--out", p(&run)]).status.success());
    let data = synth(dir.path(), "d.json", "mixed", "2", "1");
    let o = vtraj(&["export-gates", "--checkpoint", p(&run.join("checkpoint.json")), "--data", p(&data)]);
    for line in stdout(&o).lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        assert_eq!((f[2], f[3], f[4]), ("0.5", "0.5", "onehop;high"));
    }
}

#[test]
fn seed_override_changes_results_and_runs_repeat() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), 2);
    let log = |name: &str, seed: &str| {
        let out = dir.path().join(name);
        assert!(vtraj(&["train", "--config", p(&cfg), "--seed", seed, "--out", p(&out)]).status.success());
        std::fs::read(out.join("metrics.csv")).unwrap()
    };
    assert_eq!(log("a", "3"), log("b", "3"));
    assert_ne!(log("a", "3"), log("c", "4"));
}

#[test]
fn baseline_on_straight_lines_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), "cv.json", "constant-velocity", "4", "2");
    let o = vtraj(&["baseline", "--data", p(&data)]);
    assert!(o.status.success());
    let row: Vec<String> = stdout(&o).lines().nth(1).unwrap().split(',').map(String::from).collect();
    assert!(row[2].parse::<f64>().unwrap() < 1e-12);
    assert_eq!(row[4], "1");
}

#[test]
fn input_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.txt");
    assert_eq!(vtraj(&["baseline", "--data", p(&missing)]).status.code(), Some(2));

    let empty = dir.path().join("empty.txt");
    std::fs::write(&empty, "# nothing here\n").unwrap();
    assert_eq!(vtraj(&["baseline", "--data", p(&empty)]).status.code(), Some(2));

    let bad_cfg = dir.path().join("bad.json");
    std::fs::write(&bad_cfg, r#"{"hidden": 3}"#).unwrap();
    assert_eq!(vtraj(&["train", "--config", p(&bad_cfg)]).status.code(), Some(2));

    let cfg = write_config(dir.path(), 0);
    let run = dir.path().join("run");
    assert!(vtraj(&["train", "--config", p(&cfg), "--out", p(&run)]).status.success());
    let data = synth(dir.path(), "d.json", "mixed", "1", "1");
    let ck = run.join("checkpoint.json");
    let o = vtraj(&["eval", "--checkpoint", p(&ck), "--data", p(&data), "--k", "5"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(vtraj(&["eval", "--checkpoint", p(&data), "--data", p(&data)]).status.code(), Some(2));
}

#[test]
fn trajectory_text_files_are_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("walk.txt");
    let mut text = String::new();
    for f in 0..22 {
        for a in 1..=2 {
            text.push_str(&format!("{}\t{a}.0\t{:.2}\t{:.2}\n", f * 10, f as f64 * 0.4, a as f64));
        }
    }
    std::fs::write(&path, text).unwrap();
    let o = vtraj(&["baseline", "--data", p(&path)]);
    assert!(o.status.success());
    assert!(stdout(&o).lines().nth(1).unwrap().starts_with("walk,3,"));
}

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn dir_lab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dir-lab"))
        .args(args)
        .env("DIRLAB_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

const TINY: &str = r#"{
  "env": {"name": "duty_walker", "horizon": 40},
  "dir": {"population_size": 2, "iterations_per_policy": 2, "idm_batch_size": 32, "idm_hidden": [16]},
  "ppo": {"steps_per_update": 64, "batch_size": 32, "n_epochs": 2, "policy_hidden": [16], "value_hidden": [16]},
  "seeds": [4]
}
"#;

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("cfg.json");
    fs::write(&p, text).unwrap();
    p
}

fn train(tmp: &Path, name: &str) -> PathBuf {
    let cfg = write_config(tmp, TINY);
    let out = tmp.join(name);
    let res = dir_lab(&["train", "-c", cfg.to_str().unwrap(), "-o", out.to_str().unwrap()]);
    assert_eq!(code(&res), 0, "{}", stderr(&res));
    out.join("seed_4")
}

fn read_dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

#[test]
fn training_twice_gives_identical_archives() {
    let tmp = tempfile::tempdir().unwrap();
    let a = train(tmp.path(), "a");
    let b = train(tmp.path(), "b");
    let fa = read_dir_bytes(&a);
    assert!(fa.iter().any(|(n, _)| n == "policy_2.bin"));
    assert_eq!(fa, read_dir_bytes(&b));
}

#[test]
fn existing_archive_needs_resume() {
    let tmp = tempfile::tempdir().unwrap();
    let seed_dir = train(tmp.path(), "run");
    let cfg = tmp.path().join("cfg.json");
    let out = tmp.path().join("run");
    let res = dir_lab(&["train", "-c", cfg.to_str().unwrap(), "-o", out.to_str().unwrap()]);
    assert_eq!(code(&res), 2);
    let before = read_dir_bytes(&seed_dir);
    let res = dir_lab(&["train", "-c", cfg.to_str().unwrap(), "-o", out.to_str().unwrap(), "--resume"]);
    assert_eq!(code(&res), 0, "{}", stderr(&res));
    assert_eq!(before, read_dir_bytes(&seed_dir));
}

#[test]
fn config_errors_exit_2_and_name_the_field() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "{\n  \"env\": {\"name\": \"hopper\"},\n  \"seeds\": [1]\n}\n");
    let res = dir_lab(&["train", "-c", cfg.to_str().unwrap()]);
    assert_eq!(code(&res), 2);
    let err = stderr(&res);
    assert!(err.contains("cfg.json:2:") && err.contains("`env"), "{err}");

    let cfg = write_config(tmp.path(), "{\n  \"env\": {\"name\": \"duty_walker\"},\n  \"seeds\": [1],\n  \"ppo\": {\"gama\": 0.9}\n}\n");
    let res = dir_lab(&["train", "-c", cfg.to_str().unwrap()]);
    assert_eq!(code(&res), 2);
    assert!(stderr(&res).contains("ppo"), "{}", stderr(&res));
}

#[test]
fn printed_config_reparses() {
    let tmp = tempfile::tempdir().unwrap();
    let res = dir_lab(&["train", "--preset", "duty_walker", "--print-config"]);
    assert_eq!(code(&res), 0);
    let cfg = write_config(tmp.path(), &String::from_utf8(res.stdout.clone()).unwrap());
    let again = dir_lab(&["train", "-c", cfg.to_str().unwrap(), "--print-config"]);
    assert_eq!(code(&again), 0);
    assert_eq!(again.stdout, res.stdout);
}

#[test]
fn adapt_marks_one_policy_per_variant() {
    let tmp = tempfile::tempdir().unwrap();
    let archive = train(tmp.path(), "run");
    let variants = tmp.path().join("variants.json");
    fs::write(&variants, r#"[{"kind": "broken_actuator", "actuator_index": 0}]"#).unwrap();
    let out = tmp.path().join("adapt");
    let args = [
        "adapt",
        "-a",
        archive.to_str().unwrap(),
        "-v",
        variants.to_str().unwrap(),
        "-n",
        "3",
        "-o",
        out.to_str().unwrap(),
    ];
    let res = dir_lab(&args);
    assert_eq!(code(&res), 0, "{}", stderr(&res));
    let csv = fs::read_to_string(out.join("adaptation.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 4);
    for variant in ["base", "broken0"] {
        let mine: Vec<&&str> = rows.iter().filter(|r| r.starts_with(&format!("{variant},"))).collect();
        assert_eq!(mine.len(), 2);
        assert_eq!(mine.iter().filter(|r| r.ends_with(",1")).count(), 1);
    }
    let first = fs::read(out.join("adaptation.csv")).unwrap();
    assert_eq!(code(&dir_lab(&args)), 0);
    assert_eq!(first, fs::read(out.join("adaptation.csv")).unwrap());

    let res = dir_lab(&["adapt", "-a", archive.to_str().unwrap(), "-n", "2", "-o", out.to_str().unwrap()]);
    assert_eq!(code(&res), 0);
    let csv = fs::read_to_string(out.join("adaptation.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn corrupt_archive_exits_4() {
    let tmp = tempfile::tempdir().unwrap();
    let archive = train(tmp.path(), "run");
    fs::write(archive.join("policy_1.bin"), b"DIRN garbage").unwrap();
    let res = dir_lab(&["adapt", "-a", archive.to_str().unwrap()]);
    assert_eq!(code(&res), 4, "{}", stderr(&res));
    let res = dir_lab(&["diag", "percentile", "-a", tmp.path().join("missing").to_str().unwrap()]);
    assert_eq!(code(&res), 4);
}

#[test]
fn diag_kinds() {
    let res = dir_lab(&["diag", "klce", "--random-instances", "100"]);
    assert_eq!(code(&res), 0, "{}", stderr(&res));
    assert!(stderr(&res).contains("max gap error"));
    assert_eq!(String::from_utf8(res.stdout).unwrap().lines().count(), 101);

    assert_eq!(code(&dir_lab(&["diag", "entropy"])), 2);

    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("mi.json");
    let pi = r#"{"n_states": 2, "n_actions": 2, "probs": [0.3, 0.7, 0.6, 0.4]}"#;
    fs::write(
        &input,
        format!(
            r#"{{"mdp": {{"n_states": 2, "n_actions": 2, "transition": [0.5, 0.5, 0.2, 0.8, 1.0, 0.0, 0.0, 1.0],
                "reward": [0, 0, 0, 1], "initial": [1, 0], "gamma": 0.9, "coords": [[0], [1]]}},
               "policies": [{pi}, {pi}], "filtration": [0]}}"#
        ),
    )
    .unwrap();
    let res = dir_lab(&["diag", "mi", "-i", input.to_str().unwrap()]);
    assert_eq!(code(&res), 0, "{}", stderr(&res));
    let out = String::from_utf8(res.stdout).unwrap();
    let mi: f64 = out.lines().nth(1).unwrap().split(',').nth(1).unwrap().parse().unwrap();
    assert!(mi.abs() < 1e-12);
}

#[test]
fn percentile_and_descriptors_of_a_single_policy_archive() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &TINY.replace("\"population_size\": 2", "\"population_size\": 1"));
    let out = tmp.path().join("run");
    assert_eq!(code(&dir_lab(&["train", "-c", cfg.to_str().unwrap(), "-o", out.to_str().unwrap()])), 0);
    let archive = out.join("seed_4");
    let res = dir_lab(&["diag", "percentile", "-a", archive.to_str().unwrap(), "-n", "2"]);
    assert_eq!(code(&res), 0);
    assert_eq!(String::from_utf8(res.stdout).unwrap().lines().count(), 2);
    let res = dir_lab(&["diag", "descriptors", "-a", archive.to_str().unwrap(), "-n", "3"]);
    assert_eq!(code(&res), 0);
    let text = String::from_utf8(res.stdout).unwrap();
    assert!(text.starts_with("policy_idx,episode,channel_0,channel_1\n"));
    assert_eq!(text.lines().count(), 4);
    let res = dir_lab(&["diag", "diversity-score", "-a", archive.to_str().unwrap()]);
    assert_eq!(code(&res), 2);
}

use std::path::Path;
use std::process::{Command, Output};

use stackq_core::learning::Checkpoint;

fn stackq(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stackq"))
        .args(args)
        .current_dir(dir)
        .env("STACKQ_OUT", dir.join("runs"))
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn write_pair_task(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("pair.json");
    std::fs::write(
        &path,
        r#"{
            "name": "pair",
            "n_columns": 2,
            "subtasks": [
                { "id": 1, "type": 3, "label": "a" },
                { "id": 2, "type": 3, "label": "b" },
                { "id": 3, "type": 4, "label": "cap" }
            ],
            "edges": [[1, 3], [2, 3]],
            "placement": [
                { "id": 1, "row": 1, "columns": [1, 1] },
                { "id": 2, "row": 1, "columns": [2, 2] },
                { "id": 3, "row": 2, "columns": [1, 2] }
            ]
        }"#,
    )
    .unwrap();
    path
}

const TINY_TRAIN: &[&str] = &[
    "--episodes",
    "30",
    "--batch-size",
    "4",
    "--buffer-capacity",
    "64",
    "--hidden",
    "8",
];

#[test]
fn train_writes_a_complete_run_directory() {
    let tmp = tempfile::tempdir().unwrap();
    let task = write_pair_task(tmp.path());
    let out_dir = tmp.path().join("run");

    let mut args = vec![
        "train",
        task.to_str().unwrap(),
        "--algo",
        "sg",
        "--seed",
        "3",
        "-o",
        out_dir.to_str().unwrap(),
    ];
    args.extend_from_slice(TINY_TRAIN);
    let out = stackq(&args, tmp.path());
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));
    assert!(stdout(&out).contains("final 100 episodes"));

    for file in ["config.json", "task.json", "metrics.csv", "timings.csv", "checkpoint.json", "summary.json"] {
        assert!(out_dir.join(file).exists(), "{file} missing");
    }
    let metrics = std::fs::read_to_string(out_dir.join("metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 1 + 30);
    assert!(metrics.starts_with("episode,steps,completed,"));

    let ckpt = Checkpoint::load(&out_dir.join("checkpoint.json")).unwrap();
    assert_eq!(ckpt.episode, 30);

    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("summary.json")).unwrap())
            .unwrap();
    assert_eq!(summary["task"], "pair");
    assert_eq!(summary["episodes"], 30);
}

#[test]
fn reruns_and_config_replay_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let task = write_pair_task(tmp.path());
    let dirs = [tmp.path().join("a"), tmp.path().join("b"), tmp.path().join("c")];

    for dir in &dirs[..2] {
        let mut args = vec![
            "train",
            task.to_str().unwrap(),
            "--seed",
            "9",
            "-o",
            dir.to_str().unwrap(),
        ];
        args.extend_from_slice(TINY_TRAIN);
        let out = stackq(&args, tmp.path());
        assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));
    }
    let config = dirs[0].join("config.json");
    let out = stackq(
        &[
            "train",
            task.to_str().unwrap(),
            "--config",
            config.to_str().unwrap(),
            "-o",
            dirs[2].to_str().unwrap(),
        ],
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));

    let reference = std::fs::read(dirs[0].join("metrics.csv")).unwrap();
    for dir in &dirs[1..] {
        assert_eq!(reference, std::fs::read(dir.join("metrics.csv")).unwrap());
    }
    assert_eq!(
        std::fs::read(dirs[0].join("config.json")).unwrap(),
        std::fs::read(dirs[2].join("config.json")).unwrap()
    );
}

#[test]
fn config_flag_conflicts_with_tuning_flags() {
    let tmp = tempfile::tempdir().unwrap();
    let task = write_pair_task(tmp.path());
    let out = stackq(
        &[
            "train",
            task.to_str().unwrap(),
            "--config",
            "whatever.json",
            "--episodes",
            "5",
        ],
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn missing_task_file_exits_with_validation_code() {
    let tmp = tempfile::tempdir().unwrap();
    let out = stackq(&["train", "does_not_exist.json", "--algo", "sg"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("task file not found"));
}

#[test]
fn usage_errors_exit_one() {
    let tmp = tempfile::tempdir().unwrap();
    let out = stackq(&["train"], tmp.path());
    assert_eq!(out.status.code(), Some(1));
    let out = stackq(&["no-such-command"], tmp.path());
    assert_eq!(out.status.code(), Some(1));
    let task = write_pair_task(tmp.path());
    let out = stackq(
        &["train", task.to_str().unwrap(), "--algo", "maddpg"],
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn invalid_config_values_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    let task = write_pair_task(tmp.path());
    let out = stackq(
        &["train", task.to_str().unwrap(), "--gamma", "1.5"],
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("gamma"));
}

#[test]
fn oracle_prints_optimum_and_witness() {
    let tmp = tempfile::tempdir().unwrap();
    let task = write_pair_task(tmp.path());
    let out = stackq(&["oracle", task.to_str().unwrap()], tmp.path());
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    // Both solos in parallel, then the joint cap.
    assert!(text.contains("optimal completion steps 2"), "{text}");
    assert!(text.contains("step  1:"));
    assert!(text.contains("step  2:"));
}

#[test]
fn gen_output_passes_validate() {
    let tmp = tempfile::tempdir().unwrap();
    let gen_path = tmp.path().join("gen.json");
    let out = stackq(
        &[
            "gen",
            "--columns",
            "3",
            "--subtasks",
            "7",
            "--seed",
            "5",
            "-o",
            gen_path.to_str().unwrap(),
        ],
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));
    let out = stackq(&["validate", gen_path.to_str().unwrap()], tmp.path());
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).contains("3 columns, 7 sub-tasks"));
}

#[test]
fn eval_and_perturb_run_from_a_checkpoint() {
    let tmp = tempfile::tempdir().unwrap();
    let task = write_pair_task(tmp.path());
    let run_dir = tmp.path().join("run");
    let mut args = vec![
        "train",
        task.to_str().unwrap(),
        "--seed",
        "4",
        "-o",
        run_dir.to_str().unwrap(),
    ];
    args.extend_from_slice(TINY_TRAIN);
    let out = stackq(&args, tmp.path());
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));

    let out = stackq(
        &[
            "eval",
            run_dir.to_str().unwrap(),
            task.to_str().unwrap(),
            "--episodes",
            "3",
            "--deterministic",
        ],
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));
    assert!(stdout(&out).contains("completion rate"));
    assert!(run_dir.join("eval.json").exists());

    let out = stackq(
        &[
            "perturb",
            run_dir.to_str().unwrap(),
            task.to_str().unwrap(),
            "--schedule",
            "L:1,F:2",
            "--runs",
            "2",
        ],
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("schedule         L:1,F:2"));
    assert!(text.contains("run   1:"));
    assert!(run_dir.join("perturb.json").exists());

    let out = stackq(
        &["eval", tmp.path().join("nope").to_str().unwrap(), task.to_str().unwrap()],
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("checkpoint not found"));
}

#[test]
fn suite_writes_results_and_prints_table() {
    let tmp = tempfile::tempdir().unwrap();
    let task = write_pair_task(tmp.path());
    let out_dir = tmp.path().join("suite");
    let out = stackq(
        &[
            "suite",
            task.to_str().unwrap(),
            "--algos",
            "sg,ind",
            "--seeds",
            "1",
            "--eval-episodes",
            "2",
            "--episodes",
            "10",
            "--batch-size",
            "4",
            "--buffer-capacity",
            "64",
            "--hidden",
            "8",
            "-o",
            out_dir.to_str().unwrap(),
        ],
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("completion steps"));
    assert!(text.contains("pair"));
    let csv = std::fs::read_to_string(out_dir.join("results.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 2 * 5);
    assert!(out_dir.join("table.txt").exists());
    assert!(out_dir.join("pair").join("sg-seed0").join("metrics.csv").exists());
    assert!(out_dir.join("pair").join("ind-seed0").join("checkpoint.json").exists());
}

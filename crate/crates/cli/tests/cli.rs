//! End-to-end tests driving the compiled binary: exit codes, run-dir
//! layout and self-description, determinism, and the REPL contract.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use dqfd_dialog::actions::ActionTemplate;
use dqfd_dialog::acts::Intent;
use dqfd_dialog::qnet::{save_checkpoint, CheckpointMeta, QNet};
use dqfd_dialog::world::World;
use dqfd_dialog_cli::commands::eval::EvalRecord;
use dqfd_dialog_cli::config::RunConfig;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dqfd-dialog"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn run_with_stdin(args: &[&str], input: &str) -> Output {
    let mut child = bin()
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .expect("binary spawns");
    child.stdin.take().expect("piped stdin").write_all(input.as_bytes()).expect("write stdin");
    child.wait_with_output().expect("binary exits")
}

fn out_text(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).into_owned()
}

fn err_text(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).into_owned()
}

fn code(output: &Output) -> i32 {
    output.status.code().expect("no signal")
}

/// A schedule small enough that a full run finishes in about a second.
const TINY_CONFIG: &str = "\
eval_episodes = 20
trend_window = 50

[agent]
total_frames = 2000
train_every = 250
batches_per_round = 10
batch_size = 8
hidden = 12
eps_decay_frames = 1000
pretrain_demo_episodes = 5
pretrain_gradient_steps = 20
checkpoint_every = 1000

[agent.replay]
capacity = 4000
";

fn write_tiny_config(dir: &Path) -> PathBuf {
    let path = dir.join("tiny.toml");
    fs::write(&path, TINY_CONFIG).expect("config written");
    path
}

fn collect_demos(dir: &Path) -> PathBuf {
    let path = dir.join("demos.bin");
    let output = run(&[
        "demo-collect",
        "--out",
        path.to_str().unwrap(),
        "--seed",
        "9",
        "--episodes",
        "5",
    ]);
    assert_eq!(code(&output), 0, "{}", err_text(&output));
    path
}

/// Writes a zero network whose advantage bias prefers one action in
/// every state, so the REPL's replies are predictable.
fn crafted_checkpoint(dir: &Path, intent: Intent, domain: &str, slot: Option<&str>) -> PathBuf {
    let world = World::desk(5);
    let mut net = QNet::zeros(world.feature_len(), 4, world.action_count());
    let template = ActionTemplate {
        intent,
        domain: (!domain.is_empty()).then(|| domain.to_string()),
        slot: slot.map(str::to_string),
    };
    let index = world.actions.index_of(&template).expect("template exists");
    net.set_param(net.param_count() - world.action_count() + index, 1.0);
    let path = dir.join("crafted.ckpt");
    let meta = CheckpointMeta { frames: 0, gamma: 0.9, lr: 0.01, tau: 0.8 };
    let file = fs::File::create(&path).expect("checkpoint file");
    save_checkpoint(BufWriter::new(file), &net, &meta).expect("checkpoint saved");
    path
}

#[test]
fn help_prints_usage_and_exits_zero() {
    let output = run(&["--help"]);
    assert_eq!(code(&output), 0);
    let text = out_text(&output);
    for sub in ["demo-collect", "train", "eval", "chat", "trends"] {
        assert!(text.contains(sub), "help must list `{sub}`:\n{text}");
    }
}

#[test]
fn bad_flags_exit_one() {
    let output = run(&["train", "--bogus-flag"]);
    assert_eq!(code(&output), 1);
}

#[test]
fn demo_collect_writes_a_demo_file() {
    let tmp = TempDir::new().unwrap();
    let path = collect_demos(tmp.path());
    assert!(path.is_file());
    let output = run(&[
        "demo-collect",
        "--out",
        tmp.path().join("again.bin").to_str().unwrap(),
        "--seed",
        "9",
        "--episodes",
        "5",
    ]);
    let text = out_text(&output);
    assert!(text.contains("success rate"), "{text}");
    assert!(!text.contains("warning"), "rule demos must not warn:\n{text}");
}

#[test]
fn demo_collect_refuses_zero_episodes() {
    let tmp = TempDir::new().unwrap();
    let output = run(&[
        "demo-collect",
        "--out",
        tmp.path().join("demos.bin").to_str().unwrap(),
        "--seed",
        "9",
        "--episodes",
        "0",
    ]);
    assert_eq!(code(&output), 1);
    assert!(err_text(&output).contains("empty demo set"), "{}", err_text(&output));
}

#[test]
fn demo_collect_warns_below_the_success_floor() {
    let tmp = TempDir::new().unwrap();
    let output = run(&[
        "demo-collect",
        "--out",
        tmp.path().join("demos.bin").to_str().unwrap(),
        "--seed",
        "9",
        "--episodes",
        "5",
        "--expert",
        "weak",
        "--error-rate",
        "0.95",
    ]);
    assert_eq!(code(&output), 0, "{}", err_text(&output));
    assert!(out_text(&output).contains("warning"), "{}", out_text(&output));
}

#[test]
fn train_requires_demos_for_dqfd() {
    let tmp = TempDir::new().unwrap();
    let config = write_tiny_config(tmp.path());
    let output = run(&[
        "train",
        "--config",
        config.to_str().unwrap(),
        "--seed",
        "1",
        "--out",
        tmp.path().join("run").to_str().unwrap(),
    ]);
    assert_eq!(code(&output), 1);
    assert!(err_text(&output).contains("missing demonstrations"), "{}", err_text(&output));
}

#[test]
fn train_rejects_demos_for_plain_dqn() {
    let tmp = TempDir::new().unwrap();
    let config = write_tiny_config(tmp.path());
    let demos = collect_demos(tmp.path());
    let output = run(&[
        "train",
        "--config",
        config.to_str().unwrap(),
        "--mode",
        "dqn",
        "--demos",
        demos.to_str().unwrap(),
        "--seed",
        "1",
        "--out",
        tmp.path().join("run").to_str().unwrap(),
    ]);
    assert_eq!(code(&output), 1);
    assert!(err_text(&output).contains("ignores demonstrations"), "{}", err_text(&output));
}

#[test]
fn training_writes_a_self_describing_run_dir() {
    let tmp = TempDir::new().unwrap();
    let config = write_tiny_config(tmp.path());
    let run_dir = tmp.path().join("run");
    let output = run(&[
        "train",
        "--config",
        config.to_str().unwrap(),
        "--mode",
        "dqn",
        "--seed",
        "1",
        "--out",
        run_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&output), 0, "{}", err_text(&output));
    assert!(out_text(&output).contains("final report written"), "{}", out_text(&output));

    for file in
        ["config.toml", "ontology.toml", "db.jsonl", "metrics.tsv", "trends.tsv", "report.txt", "report.toml"]
    {
        assert!(run_dir.join(file).is_file(), "missing {file}");
    }
    assert!(run_dir.join("checkpoints/ckpt-final.ckpt").is_file());
    assert!(run_dir.join("checkpoints/ckpt-1000.ckpt").is_file());

    // The snapshot parses back to an identical config: the round trip
    // is lossless and the recorded run matches the invocation.
    let text = fs::read_to_string(run_dir.join("config.toml")).unwrap();
    let snapshot: RunConfig = toml::from_str(&text).unwrap();
    assert_eq!(snapshot.seeds, vec![1]);
    assert_eq!(snapshot.agent.total_frames, 2000);
    let round = toml::to_string(&snapshot).unwrap();
    let reparsed: RunConfig = toml::from_str(&round).unwrap();
    assert_eq!(reparsed, snapshot);
}

#[test]
fn rerunning_into_the_same_dir_errors() {
    let tmp = TempDir::new().unwrap();
    let config = write_tiny_config(tmp.path());
    let run_dir = tmp.path().join("run");
    let args = [
        "train",
        "--config",
        config.to_str().unwrap(),
        "--mode",
        "dqn",
        "--seed",
        "1",
        "--out",
        run_dir.to_str().unwrap(),
    ];
    let first = run(&args);
    assert_eq!(code(&first), 0, "{}", err_text(&first));
    let second = run(&args);
    assert_eq!(code(&second), 1);
    assert!(err_text(&second).contains("already exists"), "{}", err_text(&second));
}

#[test]
fn dqfd_training_consumes_demo_files() {
    let tmp = TempDir::new().unwrap();
    let config = write_tiny_config(tmp.path());
    let demos = collect_demos(tmp.path());
    let run_dir = tmp.path().join("run");
    let output = run(&[
        "train",
        "--config",
        config.to_str().unwrap(),
        "--demos",
        demos.to_str().unwrap(),
        "--seed",
        "1",
        "--out",
        run_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&output), 0, "{}", err_text(&output));
    assert!(out_text(&output).contains("demonstration transitions"), "{}", out_text(&output));
    let metrics = fs::read_to_string(run_dir.join("metrics.tsv")).unwrap();
    assert!(metrics.contains("online"), "online episodes logged");
}

#[test]
fn eval_reproduces_the_run_report_from_dir_contents_alone() {
    let tmp = TempDir::new().unwrap();
    let config = write_tiny_config(tmp.path());
    let run_dir = tmp.path().join("run");
    let output = run(&[
        "train",
        "--config",
        config.to_str().unwrap(),
        "--mode",
        "dqn",
        "--seed",
        "1",
        "--out",
        run_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&output), 0, "{}", err_text(&output));

    let recorded: EvalRecord =
        toml::from_str(&fs::read_to_string(run_dir.join("report.toml")).unwrap()).unwrap();
    let checkpoint = run_dir.join(&recorded.checkpoint);
    let replay_out = tmp.path().join("replayed.toml");
    let output = run(&[
        "eval",
        "--checkpoint",
        checkpoint.to_str().unwrap(),
        "--episodes",
        &recorded.episodes.to_string(),
        "--seed",
        &recorded.seed.to_string(),
        "--out",
        replay_out.to_str().unwrap(),
    ]);
    assert_eq!(code(&output), 0, "{}", err_text(&output));
    let replayed: EvalRecord =
        toml::from_str(&fs::read_to_string(&replay_out).unwrap()).unwrap();
    assert_eq!(replayed.metrics, recorded.metrics);
}

#[test]
fn eval_is_deterministic_for_a_fixed_seed() {
    let tmp = TempDir::new().unwrap();
    let checkpoint = crafted_checkpoint(tmp.path(), Intent::ReqMore, "", None);
    let (a, b) = (tmp.path().join("a.toml"), tmp.path().join("b.toml"));
    for out in [&a, &b] {
        let output = run(&[
            "eval",
            "--checkpoint",
            checkpoint.to_str().unwrap(),
            "--episodes",
            "40",
            "--seed",
            "7",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(code(&output), 0, "{}", err_text(&output));
    }
    assert_eq!(fs::read(a).unwrap(), fs::read(b).unwrap());
}

#[test]
fn eval_requires_at_least_one_episode() {
    let tmp = TempDir::new().unwrap();
    let checkpoint = crafted_checkpoint(tmp.path(), Intent::ReqMore, "", None);
    let output = run(&[
        "eval",
        "--checkpoint",
        checkpoint.to_str().unwrap(),
        "--episodes",
        "0",
        "--seed",
        "7",
    ]);
    assert_eq!(code(&output), 1);
}

#[test]
fn untrained_networks_evaluate_poorly() {
    let tmp = TempDir::new().unwrap();
    let world = World::desk(5);
    let mut rng = ChaCha12Rng::seed_from_u64(123);
    let net = QNet::init(world.feature_len(), 100, world.action_count(), &mut rng);
    let path = tmp.path().join("fresh.ckpt");
    let meta = CheckpointMeta { frames: 0, gamma: 0.9, lr: 0.01, tau: 0.8 };
    save_checkpoint(BufWriter::new(fs::File::create(&path).unwrap()), &net, &meta).unwrap();

    let out = tmp.path().join("report.toml");
    let output = run(&[
        "eval",
        "--checkpoint",
        path.to_str().unwrap(),
        "--episodes",
        "100",
        "--seed",
        "7",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&output), 0, "{}", err_text(&output));
    let record: EvalRecord = toml::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    assert!(
        record.metrics.success_rate <= 20.0,
        "untrained policy scored {:.1}%",
        record.metrics.success_rate
    );
}

#[test]
fn chat_answers_requests_with_informs() {
    let tmp = TempDir::new().unwrap();
    let checkpoint = crafted_checkpoint(tmp.path(), Intent::Inform, "hotel", Some("phone"));
    let output = run_with_stdin(
        &["chat", "--checkpoint", checkpoint.to_str().unwrap()],
        "inform hotel area=north\nrequest hotel phone\nbye\n",
    );
    assert_eq!(code(&output), 0, "{}", err_text(&output));
    let text = out_text(&output);
    assert!(text.contains("system> inform hotel phone="), "{text}");
    assert!(text.contains("session summary"), "{text}");
}

#[test]
fn chat_hints_on_garbage_and_keeps_the_session() {
    let tmp = TempDir::new().unwrap();
    let checkpoint = crafted_checkpoint(tmp.path(), Intent::ReqMore, "", None);
    let output = run_with_stdin(
        &["chat", "--checkpoint", checkpoint.to_str().unwrap()],
        "blorp hotel\nquit\n",
    );
    assert_eq!(code(&output), 0, "{}", err_text(&output));
    let text = out_text(&output);
    assert!(text.contains("could not read"), "{text}");
    assert!(text.contains("session left open"), "{text}");
}

#[test]
fn chat_meta_commands_inspect_the_session() {
    let tmp = TempDir::new().unwrap();
    let checkpoint = crafted_checkpoint(tmp.path(), Intent::ReqMore, "", None);
    let output = run_with_stdin(
        &["chat", "--checkpoint", checkpoint.to_str().unwrap()],
        "inform hotel area=north\nstate\nq\nquit\n",
    );
    assert_eq!(code(&output), 0, "{}", err_text(&output));
    let text = out_text(&output);
    assert!(text.contains("area=north"), "{text}");
    assert!(text.contains("top actions:"), "{text}");
}

#[test]
fn trends_match_the_run_dir_curves() {
    let tmp = TempDir::new().unwrap();
    let config = write_tiny_config(tmp.path());
    let run_dir = tmp.path().join("run");
    let output = run(&[
        "train",
        "--config",
        config.to_str().unwrap(),
        "--mode",
        "dqn",
        "--seed",
        "1",
        "--out",
        run_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&output), 0, "{}", err_text(&output));

    let recomputed = tmp.path().join("recomputed.tsv");
    let output = run(&[
        "trends",
        "--log",
        run_dir.join("metrics.tsv").to_str().unwrap(),
        "--out",
        recomputed.to_str().unwrap(),
        "--window",
        "50",
    ]);
    assert_eq!(code(&output), 0, "{}", err_text(&output));
    assert_eq!(
        fs::read(recomputed).unwrap(),
        fs::read(run_dir.join("trends.tsv")).unwrap(),
        "recomputed curves must match the run's own"
    );
}

#[test]
fn trends_of_an_empty_log_are_header_only() {
    let tmp = TempDir::new().unwrap();
    let log = tmp.path().join("empty.tsv");
    fs::write(&log, "").unwrap();
    let out = tmp.path().join("trends.tsv");
    let output =
        run(&["trends", "--log", log.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&output), 0, "{}", err_text(&output));
    assert_eq!(fs::read_to_string(out).unwrap(), "frame\tsuccess_rate\tavg_turns\n");
}

#[test]
fn multi_seed_training_writes_per_seed_dirs_and_an_aggregate() {
    let tmp = TempDir::new().unwrap();
    let config = write_tiny_config(tmp.path());
    let run_dir = tmp.path().join("multi");
    let output = run(&[
        "train",
        "--config",
        config.to_str().unwrap(),
        "--mode",
        "dqn",
        "--seed",
        "1",
        "--seed",
        "2",
        "--seed",
        "3",
        "--out",
        run_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&output), 0, "{}", err_text(&output));
    assert!(out_text(&output).contains("aggregate over 3 seeds"), "{}", out_text(&output));

    for seed in 1..=3 {
        let dir = run_dir.join(format!("seed-{seed}"));
        for file in ["config.toml", "ontology.toml", "db.jsonl", "report.toml"] {
            assert!(dir.join(file).is_file(), "seed {seed} missing {file}");
        }
    }
    assert!(run_dir.join("aggregate.txt").is_file());
    assert!(run_dir.join("aggregate.toml").is_file());
    let top: RunConfig =
        toml::from_str(&fs::read_to_string(run_dir.join("config.toml")).unwrap()).unwrap();
    assert_eq!(top.seeds, vec![1, 2, 3]);
}

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use reprdice::envs::random_mdp;
use tempfile::TempDir;

const SMALL: &str = "\
env.width = 3
env.height = 3
data.horizon = 100
data.general_multiplier = 4
repr.steps = 40
repr.log_every = 10
il.total_iterations = 40
il.log_every = 10
";

fn reprdice(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_reprdice"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

struct Workspace {
    dir: TempDir,
    config: PathBuf,
}

impl Workspace {
    fn new(extra: &str) -> Self {
        Self::with_config(&format!("{SMALL}{extra}"))
    }

    fn with_config(text: &str) -> Self {
        let dir = TempDir::new().unwrap();
        let config = dir.path().join("run.cfg");
        std::fs::write(&config, text).unwrap();
        Self { dir, config }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn run(&self, cmd: &str, args: &[&str]) -> Output {
        let mut all = vec![cmd, "--config", p(&self.config)];
        all.extend_from_slice(args);
        reprdice(&all)
    }

    fn gen(&self) -> PathBuf {
        let out = self.path("data");
        let o = self.run("gen", &["--out", p(&out)]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        out
    }

    fn pretrain(&self, bundle: &Path, name: &str) -> (PathBuf, String) {
        let out = self.path(name);
        let o = self.run("pretrain", &["--bundle", p(bundle), "--out", p(&out)]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        (out, stdout(&o))
    }

    fn imitate(&self, bundle: &Path, alg: &str, extra: &[&str], name: &str) -> PathBuf {
        let out = self.path(name);
        let mut args = vec!["--bundle", p(bundle), "--algorithm", alg, "--out", p(&out)];
        args.extend_from_slice(extra);
        let o = self.run("imitate", &args);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        out
    }
}

#[test]
fn gen_prints_the_manifest() {
    let o = reprdice(&["gen", "--out", p(&TempDir::new().unwrap().path().join("d"))]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("expert: 1 trajectory of 1000 steps"), "{text}");
    assert!(text.contains("40x1"), "{text}");
}

#[test]
fn misspelled_config_key_is_a_config_error() {
    let ws = Workspace::new("repr.lamda = 0.2\n");
    let o = ws.run("gen", &["--out", p(&ws.path("d"))]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("repr.lamda"), "{}", stderr(&o));
    assert!(!ws.path("d").exists());
}

#[test]
fn unwritable_output_is_an_io_error() {
    let ws = Workspace::new("");
    let blocker = ws.path("file");
    std::fs::write(&blocker, "x").unwrap();
    let o = ws.run("gen", &["--out", p(&blocker.join("sub"))]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
}

#[test]
fn missing_bundle_is_an_io_error() {
    let ws = Workspace::new("");
    let o = ws.run(
        "pretrain",
        &["--bundle", p(&ws.path("nope")), "--out", p(&ws.path("r"))],
    );
    assert_eq!(code(&o), 3, "{}", stderr(&o));
}

#[test]
fn pretraining_twice_gives_the_same_checkpoint() {
    let ws = Workspace::new("");
    let data = ws.gen();
    let (a, text_a) = ws.pretrain(&data, "a");
    let (b, text_b) = ws.pretrain(&data, "b");
    assert_eq!(
        std::fs::read(a.join("repr.ckpt")).unwrap(),
        std::fs::read(b.join("repr.ckpt")).unwrap()
    );
    let crc = |t: &str| {
        t.split("crc32 ")
            .nth(1)
            .unwrap()
            .split_whitespace()
            .next()
            .unwrap()
            .to_string()
    };
    assert_eq!(crc(&text_a), crc(&text_b));
    assert!(text_a.contains("gap"));
}

#[test]
fn repr_valuedice_needs_a_checkpoint() {
    let ws = Workspace::new("");
    let data = ws.gen();
    let out = ws.path("runs");
    let o = ws.run(
        "imitate",
        &["--bundle", p(&data), "--algorithm", "repr_valuedice", "--out", p(&out)],
    );
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("--repr"), "{}", stderr(&o));
    assert!(!out.exists());
}

#[test]
fn unknown_algorithm_is_a_config_error() {
    let ws = Workspace::new("");
    let o = ws.run(
        "imitate",
        &[
            "--bundle",
            p(&ws.path("d")),
            "--algorithm",
            "gail",
            "--out",
            p(&ws.path("r")),
        ],
    );
    assert_eq!(code(&o), 2);
}

#[test]
fn imitation_runs_write_their_diagnostics() {
    let ws = Workspace::new("");
    let data = ws.gen();
    let (repr, _) = ws.pretrain(&data, "repr");
    let ckpt = repr.join("repr.ckpt");
    let bc = ws.imitate(&data, "bc", &[], "bc");
    let header = std::fs::read_to_string(bc.join("diagnostics.csv")).unwrap();
    assert!(header.lines().next().unwrap().split(',').any(|c| c == "log_likelihood"));
    let rv = ws.imitate(&data, "repr_valuedice", &["--repr", p(&ckpt), "--seeds", "0..2"], "rv");
    for seed in ["seed-0", "seed-1"] {
        let csv = std::fs::read_to_string(rv.join(seed).join("diagnostics.csv")).unwrap();
        let cols: Vec<&str> = csv.lines().next().unwrap().split(',').collect();
        for c in ["iter", "dice_loss", "policy_objective", "exact_kl", "mean_return"] {
            assert!(cols.contains(&c), "{cols:?}");
        }
        assert!(rv.join(seed).join("policy.bin").exists());
        assert!(std::fs::read_to_string(rv.join(seed).join("run.txt"))
            .unwrap()
            .contains("algorithm=repr_valuedice"));
    }
}

#[test]
fn seed_and_seeds_conflict() {
    let o = reprdice(&[
        "imitate",
        "--seed",
        "1",
        "--seeds",
        "0..2",
        "--bundle",
        "d",
        "--algorithm",
        "bc",
        "--out",
        "o",
    ]);
    assert_eq!(code(&o), 2);
}

#[test]
fn eval_of_the_expert_has_zero_kl() {
    let ws = Workspace::new("");
    let data = ws.gen();
    let out = ws.path("eval");
    let o = ws.run(
        "eval",
        &["--policy", p(&data.join("expert_policy.bin")), "--out", p(&out)],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let metrics = std::fs::read_to_string(out.join("metrics.csv")).unwrap();
    let get = |k: &str| -> f64 {
        metrics
            .lines()
            .find_map(|l| l.strip_prefix(&format!("{k},")))
            .unwrap()
            .parse()
            .unwrap()
    };
    assert!(get("exact_kl").abs() < 1e-10);
    assert_eq!(get("episodes"), 20.0);
    assert_eq!(metrics.lines().filter(|l| l.starts_with("return_")).count(), 20);
}

#[test]
fn corrupt_policy_is_an_io_error() {
    let ws = Workspace::new("");
    let data = ws.gen();
    let path = data.join("expert_policy.bin");
    let mut bytes = std::fs::read(&path).unwrap();
    let mid = bytes.len() / 2;
    bytes[mid] ^= 0xff;
    std::fs::write(&path, bytes).unwrap();
    let o = ws.run("eval", &["--policy", p(&path), "--out", p(&ws.path("e"))]);
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).to_lowercase().contains("checksum"), "{}", stderr(&o));
}

#[test]
fn oracle_check_passes_on_the_default_gridworld() {
    let o = reprdice(&["oracle-check"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).contains("all identities hold"));
}

#[test]
fn truncated_features_are_not_claimed() {
    let ws = Workspace::new("repr.k = 3\n");
    let o = ws.run("oracle-check", &[]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).contains("not claimed (rank-deficient)"), "{}", stdout(&o));
}

#[test]
fn tampered_mdp_file_fails_validation() {
    let ws = Workspace::new("");
    let text = random_mdp(4, 2, 0.9, 1).unwrap().to_text();
    let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
    lines[2] = lines[2].split_whitespace().map(|_| "0.5").collect::<Vec<_>>().join(" ");
    let file = ws.path("mdp.txt");
    std::fs::write(&file, lines.join("\n") + "\n").unwrap();
    std::fs::write(
        &ws.config,
        format!("env.kind = tabular_file\nenv.file = {}\n", p(&file)),
    )
    .unwrap();
    let o = ws.run("oracle-check", &[]);
    assert_eq!(code(&o), 5, "{}", stderr(&o));
    assert!(stdout(&o).contains("validate_mdp") || stderr(&o).contains("validate_mdp"));
}

#[test]
fn report_aggregates_and_rejects_bad_runs() {
    let ws = Workspace::new("");
    let data = ws.gen();
    let bc = ws.imitate(&data, "bc", &[], "bc");
    let out = ws.path("report");
    let o = reprdice(&["report", p(&bc), "--out", p(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let curves = std::fs::read_to_string(out.join("curves.csv")).unwrap();
    for row in curves.lines().skip(1) {
        let f: Vec<&str> = row.split(',').collect();
        assert_eq!(f[2], "1");
        assert_eq!(f[4], "0");
        assert_eq!(f[6], "0");
    }

    let other = Workspace::with_config(&SMALL.replace("env.width = 3", "env.width = 4"));
    let other_data = other.gen();
    let other_bc = other.imitate(&other_data, "bc", &[], "bc");
    let o = reprdice(&["report", p(&bc), p(&other_bc), "--out", p(&ws.path("mixed"))]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("incompatible runs"));

    std::fs::write(bc.join("diagnostics.csv"), "iter,mean_return\n0,oops\n").unwrap();
    let o = reprdice(&["report", p(&bc), "--out", p(&ws.path("bad"))]);
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("unreadable run"));
}

#[test]
fn runaway_step_size_is_a_divergence() {
    let ws = Workspace::new("repr.step_size = 1e200\nrepr.decay = false\n");
    let data = ws.gen();
    let out = ws.path("r");
    let o = ws.run("pretrain", &["--bundle", p(&data), "--out", p(&out)]);
    assert_eq!(code(&o), 4, "{}{}", stdout(&o), stderr(&o));
    assert!(stderr(&o).contains("last finite logged step"));
    assert!(out.join("repr_curve.csv").exists());
}

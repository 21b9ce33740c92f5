use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mpg_cli::artifacts::{read_accuracy, read_summary, read_trace};
use mpg_cli::harness::median_iterations;
use mpg_core::envs::{build_scg, CostDescriptor, DagSpec};
use mpg_core::{Environment, MdpTables, MultiAgentMdp};

fn mpg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mpg"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn single_action_env(dir: &Path) -> PathBuf {
    let mdp = MultiAgentMdp::new(MdpTables {
        n_agents: 2,
        action_counts: vec![vec![1, 1]],
        rewards: vec![vec![vec![0.5]], vec![vec![0.25]]],
        transitions: vec![vec![vec![(0, 1.0)]]],
        gamma: 0.9,
        mu: vec![1.0],
    })
    .unwrap();
    let env = Environment::new(mdp, Some(vec![0.5]), "single-action").unwrap();
    let p = dir.join("single.env");
    env.save(&p).unwrap();
    p
}

#[test]
fn single_action_run_converges_immediately() {
    let dir = tempfile::tempdir().unwrap();
    single_action_env(dir.path());
    let cfg = write(
        dir.path(),
        "c.toml",
        "runs = 1\n[environment]\ntype = \"file\"\npath = \"single.env\"\n[algorithm]\nalgorithm = \"inpg\"\neta = 1e-7\nmode = \"exact\"\n",
    );
    let out = dir.path().join("out");
    let o = mpg(&["run", "--config", s(&cfg), "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = read_trace(&out.join("runs/inpg_000.csv")).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].max_policy_step_l1, 0.0);
    assert!((rows[0].potential.unwrap() - 5.0).abs() < 1e-12);
    let summary = read_summary(&out.join("summary.csv")).unwrap();
    assert!(summary[0].converged);
    assert_eq!(summary[0].iterations_to_convergence(), Some(1));

    assert!(mpg(&["accuracy", "--out", s(&out)]).status.success());
    let acc = read_accuracy(&out.join("accuracy/inpg_000.csv")).unwrap();
    assert_eq!(acc.len(), 1);
    assert_eq!(acc[0].l1_accuracy, 0.0);
}

#[test]
fn distancing_experiment_favours_inpg() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.toml",
        "runs = 10\nsnapshot_every = 10\n[environment]\ntype = \"distancing\"\n[algorithm]\nalgorithm = [\"inpg\", \"ipg\"]\neta = 1e-4\n",
    );
    let out = dir.path().join("out");
    let o = mpg(&["run", "--config", s(&cfg), "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csvs = std::fs::read_dir(out.join("runs"))
        .unwrap()
        .filter(|e| e.as_ref().unwrap().path().extension().unwrap() == "csv")
        .count();
    assert_eq!(csvs, 20);
    let rows = read_summary(&out.join("summary.csv")).unwrap();
    let mean = |alg: &str| {
        let v: Vec<f64> = rows.iter().filter(|r| r.algorithm == alg).map(|r| r.iterations as f64).collect();
        v.iter().sum::<f64>() / v.len() as f64
    };
    assert!(mean("inpg") < mean("ipg"), "inpg {} ipg {}", mean("inpg"), mean("ipg"));
    assert!(median_iterations(&rows, "inpg").unwrap() <= median_iterations(&rows, "ipg").unwrap());

    // L1 accuracy ends at zero on every run
    assert!(mpg(&["accuracy", "--out", s(&out)]).status.success());
    for f in std::fs::read_dir(out.join("accuracy")).unwrap() {
        let acc = read_accuracy(&f.unwrap().path()).unwrap();
        assert_eq!(acc.last().unwrap().l1_accuracy, 0.0);
    }
    assert!(mpg(&["plot", "--out", s(&out)]).status.success());
    let svg = std::fs::read_to_string(out.join("plots/accuracy.svg")).unwrap();
    assert_eq!(svg.matches("<polyline").count(), 20);
    assert!(svg.contains(">INPG<") && svg.contains(">IPG<"));
    let first = std::fs::read(out.join("plots/accuracy_band.svg")).unwrap();
    assert!(mpg(&["plot", "--out", s(&out)]).status.success());
    assert_eq!(first, std::fs::read(out.join("plots/accuracy_band.svg")).unwrap());
}

fn tree_bytes(root: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut v = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                v.push((p.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&p).unwrap()));
            }
        }
    }
    v.sort();
    v
}

#[test]
fn reruns_are_byte_identical_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.toml",
        "runs = 4\nnash_gap_every = 25\n[environment]\ntype = \"scg\"\nagents = 3\ngamma = 0.95\nstate_space = \"reachable\"\n[algorithm]\nalgorithms = [\"inpg\", \"ipg\", \"mwu\"]\neta = 1e-3\nmax_iters = 200\n",
    );
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert!(mpg(&["run", "--config", s(&cfg), "--out", s(&a), "--threads", "1"]).status.success());
    assert!(mpg(&["run", "--config", s(&cfg), "--out", s(&b), "--threads", "3"]).status.success());
    for d in [&a, &b] {
        assert!(mpg(&["accuracy", "--out", s(d)]).status.success());
        assert!(mpg(&["plot", "--out", s(d)]).status.success());
    }
    let (ta, tb) = (tree_bytes(&a), tree_bytes(&b));
    assert_eq!(ta.len(), 4 * 3 * 3 + 1 + 1 + 2);
    assert!(ta == tb, "artifacts differ between runs");
    let trace = read_trace(&a.join("runs/mwu_002.csv")).unwrap();
    assert!(trace.iter().all(|r| r.potential.is_none()));
    assert_eq!(trace.iter().filter(|r| r.nash_gap.is_some()).count(), trace.len().div_ceil(25));
}

#[test]
fn seeds_flag_selects_runs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.toml",
        "[environment]\ntype = \"stage\"\nagents = 2\ncosts = [\"inverse_load(1)\", \"inverse_load(1)\"]\n[algorithm]\nalgorithm = \"inpg\"\neta = 0.002\nmode = \"exact\"\nmax_iters = 50\n",
    );
    let out = dir.path().join("o");
    assert!(mpg(&["run", "--config", s(&cfg), "--out", s(&out), "--seeds", "7..9"]).status.success());
    let rows = read_summary(&out.join("summary.csv")).unwrap();
    assert_eq!(rows.iter().map(|r| r.seed).collect::<Vec<_>>(), vec![7, 8]);

    // a step above the bound is refused unless the guard is relaxed
    let big = write(dir.path(), "big.toml", &std::fs::read_to_string(&cfg).unwrap().replace("eta = 0.002", "eta = 0.5"));
    let o = mpg(&["run", "--config", s(&big), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("step size"));
    assert!(mpg(&["run", "--config", s(&big), "--out", s(&out), "--guard", "warn"]).status.success());
}

#[test]
fn config_errors_name_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", "runs = 2\n\n[environment]\ntype = \"scg\"\ndag = \"nowhere.dag\"\n");
    let o = mpg(&["run", "--config", s(&cfg)]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("c.toml:5:"), "{err}");
    assert!(err.contains("does not exist"));
}

#[test]
fn accuracy_requires_snapshots() {
    let dir = tempfile::tempdir().unwrap();
    let runs = dir.path().join("runs");
    std::fs::create_dir_all(&runs).unwrap();
    std::fs::write(runs.join("inpg_000.csv"), "run_id,algorithm,iteration,max_policy_step_l1,potential,nash_gap\n").unwrap();
    let o = mpg(&["accuracy", "--out", s(dir.path())]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("missing policy snapshots"));
    let o = mpg(&["plot", "--out", s(dir.path()), s(&dir.path().join("accuracy"))]);
    assert!(!o.status.success());
}

#[test]
fn verify_reports_and_exit_status() {
    let dir = tempfile::tempdir().unwrap();
    let spec = DagSpec::layered(&[2, 2], CostDescriptor::InverseLoad { base: 1.0 });
    let env = build_scg(&spec, 2, 0.9).unwrap();
    let good = dir.path().join("good.env");
    env.save(&good).unwrap();
    let o = mpg(&["verify", "--env", s(&good)]);
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(o.status.success(), "{text}");
    assert!(text.contains("PASS potential identity"));

    let mut t = env.mdp().to_tables();
    let start = env.mdp().mu().iter().position(|&m| m > 0.0).unwrap();
    t.rewards[0][start][0] = (t.rewards[0][start][0] - 0.3).max(0.0);
    let bad = dir.path().join("bad.env");
    env.with_mdp(MultiAgentMdp::new(t).unwrap()).unwrap().save(&bad).unwrap();
    let o = mpg(&["verify", "--env", s(&bad)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL potential identity"));

    let plain = dir.path().join("plain.env");
    Environment::plain(env.mdp().clone(), "no-potential").save(&plain).unwrap();
    let o = mpg(&["verify", "--env", s(&plain)]);
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(o.status.success(), "{text}");
    assert!(text.contains("SKIP potential identity"));
    assert!(text.contains("PASS gradient identity"));
}

#[test]
fn shipped_configs_parse() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    for name in ["scg_4_agents", "scg_8_agents", "distancing", "stage_game", "scg_toy"] {
        let cfg = mpg_cli::ExperimentConfig::load(&root.join(format!("{name}.toml"))).unwrap();
        if let Some(a) = &cfg.algorithm {
            if a.mode == mpg_cli::config::ModeKind::Sampled {
                assert_eq!((a.eta, a.horizon, a.batch, a.convergence_threshold), (1e-4, 20, 20, 1e-15), "{name}");
            }
        }
        cfg.environment.build().unwrap();
    }
}

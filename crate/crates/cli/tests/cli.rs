use std::path::PathBuf;
use std::process::{Command, Output};

use skipfree::{parse_model, Model};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_skipfree")).args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn kv(out: &Output, key: &str) -> String {
    let prefix = format!("{key}=");
    stdout(out).lines().find_map(|l| l.strip_prefix(&prefix).map(str::to_string)).unwrap_or_else(|| panic!("no {key}"))
}

fn two_policy() -> String {
    fixture("two_policy.model").to_str().unwrap().to_string()
}

#[test]
fn solve_two_policy() {
    let out = run(&["solve", "--format", "kv", &two_policy()]);
    assert_eq!(code(&out), 0);
    let g: f64 = kv(&out, "g_star").parse().unwrap();
    assert!((g - 0.8).abs() < 1e-12);
    let h1: f64 = kv(&out, "h.1").parse().unwrap();
    assert!((h1 - 1.6).abs() < 1e-12);
    assert_eq!(kv(&out, "d.1"), "b");
    assert_eq!(kv(&out, "iterations"), "2");

    let human = run(&["solve", &two_policy()]);
    assert_eq!(code(&human), 0);
    let first = stdout(&human).lines().next().unwrap().to_string();
    let g: f64 = first.strip_prefix("g* = ").unwrap().parse().unwrap();
    assert!((g - 0.8).abs() < 1e-12);
}

#[test]
fn csv_trace_is_non_increasing() {
    for variant in ["first-return", "optimality", "mean-improvement"] {
        let out = run(&["solve", "--format", "csv", "--variant", variant, &two_policy()]);
        assert_eq!(code(&out), 0);
        let text = stdout(&out);
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("iter,g_n,u0"));
        let g: Vec<f64> = lines.map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
        assert_eq!(g.len(), 3);
        assert_eq!(g[0], 1.0);
        assert!(g.windows(2).all(|w| w[1] <= w[0]), "{variant}: {g:?}");
        assert!((g[2] - 0.8).abs() < 1e-12);
    }
}

#[test]
fn broken_model_exits_1() {
    let out = run(&["solve", fixture("broken.model").to_str().unwrap()]);
    assert_eq!(code(&out), 1);
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("state 1, action `b`"), "{err}");
    assert!(err.contains("sum to 0.9"), "{err}");
}

#[test]
fn max_iter_exits_2() {
    let out = run(&["solve", "--max-iter", "1", "--format", "csv", &two_policy()]);
    assert_eq!(code(&out), 2);
    assert_eq!(stdout(&out).lines().count(), 3);
}

#[test]
fn bad_tolerance_exits_1() {
    assert_eq!(code(&run(&["solve", "--tol", "0", &two_policy()])), 1);
}

#[test]
fn validate_and_solve_communicating() {
    let comm = fixture("comm.model");
    let comm = comm.to_str().unwrap();
    let out = run(&["validate", comm]);
    assert_eq!(code(&out), 0);
    assert_eq!(stdout(&out).trim(), "communicating (not recurrent)");
    assert_eq!(code(&run(&["solve", comm])), 1);
    let out = run(&["solve", "--communicating", "--format", "kv", comm]);
    assert_eq!(code(&out), 0);
    assert_eq!(kv(&out, "g_star"), "0.5");
    assert_eq!(kv(&out, "distinguished"), "1");
    assert_eq!(stdout(&run(&["validate", &two_policy()])).trim(), "recurrent");
}

#[test]
fn compare_agrees_and_detects_faults() {
    let out = run(&["compare", &two_policy()]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    let methods: Vec<&str> = text.lines().skip(1).map(|l| l.split_whitespace().next().unwrap()).collect();
    assert_eq!(
        methods,
        [
            "skip-free/first-return",
            "skip-free/optimality",
            "skip-free/mean-improvement",
            "policy-iteration",
            "relative-value-iteration",
            "enumeration"
        ]
    );
    for line in text.lines().skip(1) {
        let g: f64 = line.split_whitespace().nth(1).unwrap().parse().unwrap();
        assert!((g - 0.8).abs() < 1e-9, "{line}");
    }
    assert_eq!(code(&run(&["compare", "--inject-fault", "0.01", &two_policy()])), 3);
}

#[test]
fn compare_constant_cost_model() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("const.model");
    let text = std::fs::read_to_string(fixture("chain.model")).unwrap();
    let constant: String = text
        .lines()
        .map(|l| if l.starts_with("value = ") { "value = 3.0".to_string() } else { l.to_string() })
        .collect::<Vec<_>>()
        .join("\n");
    std::fs::write(&path, constant).unwrap();
    let out = run(&["compare", path.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    for line in stdout(&out).lines().skip(1) {
        let g: f64 = line.split_whitespace().nth(1).unwrap().parse().unwrap();
        assert!((g - 3.0).abs() < 1e-9, "{line}");
    }
}

#[test]
fn transform_discount_adds_one_state() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("aug.model");
    let out = run(&["transform", "--discount", "0.9", fixture("chain.model").to_str().unwrap(), "-o", out_path.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    let aug = parse_model(&std::fs::read_to_string(&out_path).unwrap()).unwrap();
    let Model::Discrete(m) = aug.model else { panic!("expected dtmdp") };
    assert_eq!(m.num_states(), 4);
    assert_eq!(m.tree().parent(3), Some(2));
    assert_eq!(code(&run(&["transform", "--discount", "1.5", fixture("chain.model").to_str().unwrap()])), 1);
}

#[test]
fn discounted_solve_reports_values() {
    let out = run(&["solve", "--discount", "0.9", "--format", "kv", fixture("chain.model").to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    assert_eq!(kv(&out, "discount"), "0.9");
    let v: Vec<f64> = (0..3).map(|i| kv(&out, &format!("v.{i}")).parse().unwrap()).collect();
    // state 2 pays 4 then moves to 1, so v_2 = 4 + 0.9 v_1
    assert!((v[2] - (4.0 + 0.9 * v[1])).abs() < 1e-8, "{v:?}");
    assert!(!stdout(&out).contains("d.3="));
}

#[test]
fn gen_queue_has_fifteen_states() {
    let out = run(&["gen", "--queue", "K=2", "M=3"]);
    assert_eq!(code(&out), 0);
    let file = parse_model(&stdout(&out)).unwrap();
    let Model::Continuous(ct) = &file.model else { panic!("expected ctmdp") };
    assert_eq!(ct.num_states(), 15);
    assert_eq!(code(&run(&["gen", "--queue", "K=2"])), 1);
}

#[test]
fn gen_output_round_trips_and_is_seeded() {
    for extra in [&[][..], &["--chain"], &["--communicating"], &["--ctmdp"]] {
        let mut args = vec!["gen", "--random", "--seed", "11"];
        args.extend_from_slice(extra);
        let first = stdout(&run(&args));
        assert_eq!(first, stdout(&run(&args)));
        let parsed = parse_model(&first).unwrap();
        assert_eq!(skipfree::emit_model(&parsed), first);
    }
}

#[test]
fn uniformize_then_solve() {
    let dir = tempfile::tempdir().unwrap();
    let ct = dir.path().join("q.model");
    let dt = dir.path().join("dq.model");
    assert_eq!(code(&run(&["gen", "--queue", "K=2", "M=2", "-o", ct.to_str().unwrap()])), 0);
    assert_eq!(code(&run(&["transform", "--uniformize", ct.to_str().unwrap(), "-o", dt.to_str().unwrap()])), 0);
    let direct = run(&["solve", "--format", "kv", ct.to_str().unwrap()]);
    let via = run(&["solve", "--format", "kv", dt.to_str().unwrap()]);
    assert_eq!(kv(&direct, "g_star"), kv(&via, "g_star"));
    let lambda: f64 = kv(&direct, "lambda").parse().unwrap();
    let h_ct: f64 = kv(&direct, "h.1").parse().unwrap();
    let h_dt: f64 = kv(&via, "h.1").parse().unwrap();
    assert_eq!(h_ct, h_dt / lambda);
}

//! End-to-end tests of the `localtime` binary: documented outputs, exit
//! codes, determinism, and the human/JSON precision contract.

use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_localtime"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(output: &Output) -> String {
    String::from_utf8(output.stdout.clone()).expect("utf8 stdout")
}

fn tmp_path(name: &str) -> PathBuf {
    let mut p = std::env::temp_dir();
    p.push(format!("localtime-cli-test-{}-{name}", std::process::id()));
    p
}

#[test]
fn bound_examples() {
    let out = run(&["bound", "--x", "0", "--sigma", "1"]);
    assert!(out.status.success());
    assert_eq!(stdout(&out), "1\n");

    let out = run(&["bound", "--x", "0.75", "--sigma", "1"]);
    assert_eq!(stdout(&out), "0.5\n");

    let out = run(&["bound", "--x", "0.75", "--sigma", "1", "--b", "1.25"]);
    assert_eq!(stdout(&out), "sharp_bound 0.5\nupcrossing_bound 0.5\n");

    // out-of-regime upcrossing interval: usage failure naming the flag
    let out = run(&["bound", "--x", "0", "--sigma", "1", "--b", "2"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("--b"), "{err}");

    let out = run(&["bound", "--x", "0", "--sigma", "0"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("--sigma"), "{err}");
}

#[test]
fn exact_examples() {
    let out = run(&["exact", "--dist", "firstexit:a=1,b=1", "--x", "0"]);
    assert_eq!(stdout(&out), "1\n");

    let out = run(&["exact", "--dist", "normal:sigma=1", "--x", "0"]);
    assert_eq!(stdout(&out), "0.797885\n");

    // nonzero mean: exit 2 and the computed mean appears in the message
    let out = run(&["exact", "--dist", "finite:-1=0.3,1=0.7", "--x", "0"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("mean"), "{err}");
    assert!(err.contains("3.99") || err.contains("0.4"), "{err}");
}

#[test]
fn human_numbers_reappear_in_json_at_full_precision() {
    let human = stdout(&run(&["exact", "--dist", "normal:sigma=1", "--x", "0"]));
    let json_out = stdout(&run(&["exact", "--dist", "normal:sigma=1", "--x", "0", "--json"]));
    let json: serde_json::Value = serde_json::from_str(&json_out).unwrap();
    let full = json["exact"].as_f64().unwrap();
    // the human figure is the full-precision value rounded to six significant digits
    let rounded: f64 = format!("{full:.5e}").parse().unwrap();
    assert_eq!(human.trim().parse::<f64>().unwrap(), rounded);
    assert_eq!(full, (2.0 / std::f64::consts::PI).sqrt());

    let json_out = stdout(&run(&["bound", "--x", "0.75", "--sigma", "1", "--json"]));
    let json: serde_json::Value = serde_json::from_str(&json_out).unwrap();
    assert_eq!(json["bound"].as_f64().unwrap(), 0.5);
}

#[test]
fn simulate_is_deterministic_and_seed_sensitive() {
    let args = [
        "simulate", "--rule", "firstexit:a=1,b=1", "--xs", "0", "--paths", "300", "--dt",
        "1e-3", "--epsilon", "0.1", "--seed", "11",
    ];
    let first = stdout(&run(&args));
    let second = stdout(&run(&args));
    assert_eq!(first, second, "identical flags must give byte-identical CSV");
    assert!(first.starts_with(
        "x,sigma,bound,exact,method,estimate,std_error,n_paths,dt,epsilon,capped_fraction,seed\n"
    ));

    let mut other_args = args;
    other_args[12] = "12";
    let third = stdout(&run(&other_args));
    assert_ne!(first, third, "a different seed must change the estimates");

    // worker count never affects results
    let mut threaded = args.to_vec();
    threaded.extend_from_slice(&["--threads", "2"]);
    assert_eq!(stdout(&run(&threaded)), first);
}

#[test]
fn simulate_dumps_a_debug_path() {
    let dump = tmp_path("path.csv");
    let out = run(&[
        "simulate", "--rule", "firstexit:a=1,b=1", "--xs", "0", "--paths", "50", "--dt",
        "1e-2", "--epsilon", "0.3", "--seed", "4", "--dump-path", dump.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let text = std::fs::read_to_string(&dump).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "t,value");
    assert_eq!(lines.next().unwrap(), "0,0");
    let last = text.lines().last().unwrap();
    let value: f64 = last.split(',').nth(1).unwrap().parse().unwrap();
    assert!(value == 1.0 || value == -1.0, "terminal must be clamped, got {last}");
    std::fs::remove_file(&dump).ok();
}

#[test]
fn simulate_env_seed_default() {
    let args = [
        "simulate", "--rule", "firstexit:a=1,b=1", "--xs", "0", "--paths", "200", "--dt",
        "1e-3", "--epsilon", "0.1",
    ];
    let via_env = bin()
        .args(args)
        .env("LOCALTIME_SEED", "77")
        .output()
        .unwrap();
    let explicit = stdout(&run(&[
        "simulate", "--rule", "firstexit:a=1,b=1", "--xs", "0", "--paths", "200", "--dt",
        "1e-3", "--epsilon", "0.1", "--seed", "77",
    ]));
    assert_eq!(stdout(&via_env), explicit);
}

#[test]
fn simulate_config_file_with_flag_overrides() {
    let conf = tmp_path("exp.conf");
    std::fs::write(&conf, "rule=firstexit:a=1,b=1\npaths=200\ndt=1e-3\nepsilon=0.1\nseed=5\n")
        .unwrap();
    let from_file = stdout(&run(&["simulate", "--config", conf.to_str().unwrap()]));
    assert!(from_file.contains("occupation"));

    // a flag overrides the file's value
    let overridden = stdout(&run(&[
        "simulate", "--config", conf.to_str().unwrap(), "--seed", "6",
    ]));
    assert_ne!(from_file, overridden);
    assert!(overridden.lines().nth(1).unwrap().ends_with(",6"));
    std::fs::remove_file(&conf).ok();

    // missing rule anywhere: validation failure
    let out = run(&["simulate", "--xs", "0"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8(out.stderr).unwrap().contains("rule"));
}

#[test]
fn sweep_writes_curve_and_nine_rows() {
    let curve = tmp_path("curve.csv");
    let out_file = tmp_path("sweep.csv");
    let out = run(&[
        "sweep", "--sigma", "1", "--xs", "0:2:0.25", "--paths", "100", "--dt", "1e-2",
        "--epsilon", "0.3", "--seed", "1", "--curve-out", curve.to_str().unwrap(), "--out",
        out_file.to_str().unwrap(),
    ]);
    assert!(out.status.success());

    let csv = std::fs::read_to_string(&out_file).unwrap();
    assert_eq!(csv.lines().count(), 1 + 9, "header plus nine grid rows");

    let curve_text = std::fs::read_to_string(&curve).unwrap();
    assert_eq!(curve_text.lines().next().unwrap(), "x,bound");
    assert_eq!(curve_text.lines().count(), 1 + 9);
    let second = curve_text.lines().nth(1).unwrap();
    assert_eq!(second, "0,1");

    std::fs::remove_file(&curve).ok();
    std::fs::remove_file(&out_file).ok();
}

#[test]
fn embed_examples() {
    let out = run(&["embed", "--target", "finite:-1=0.25,0=0.5,1=0.25"]);
    assert!(out.status.success());
    assert_eq!(stdout(&out).lines().next().unwrap(), "(-1,0.333333);(0,1)");

    let out = run(&[
        "embed", "--target", "finite:-1=0.25,0=0.5,1=0.25", "--verify", "--simulate", "2000",
        "--seed", "3",
    ]);
    let text = stdout(&out);
    assert!(text.contains("exact_match true"), "{text}");
    assert!(text.contains("chi_square_p"), "{text}");

    // two-point targets embed in a single exit
    let out = run(&["embed", "--target", "finite:-1=0.8,4=0.2", "--json"]);
    let json: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(json["plan"], "plan:-1,4");

    // a skewed target cannot be embedded from the origin
    let out = run(&["embed", "--target", "finite:-1=0.3,1=0.7"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn upcross_reports_against_bound() {
    let out = run(&[
        "upcross", "--x", "0", "--b", "0.5", "--sigma", "1", "--paths", "400", "--dt", "1e-3",
        "--seed", "9", "--json",
    ]);
    assert!(out.status.success());
    let json: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(json["bound"].as_f64().unwrap(), 1.0);
    assert!(json["mean_upcrossings"].as_f64().unwrap() > 0.0);

    // regime guard propagates
    let out = run(&["upcross", "--x", "0", "--b", "3", "--sigma", "1"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn verify_quick_reports_every_criterion() {
    let out = run(&["verify", "--quick", "--seed", "0"]);
    let text = stdout(&out);
    for id in 1..=9 {
        assert!(
            text.contains(&format!("criterion {id}:")),
            "missing line for criterion {id}: {text}"
        );
    }
    let all_passed = text.lines().filter(|l| l.starts_with("[")).all(|l| l.starts_with("[PASS]"));
    let code = out.status.code();
    // the exit code mirrors the printed outcome: 0 all-pass, 1 otherwise
    assert_eq!(code, Some(if all_passed { 0 } else { 1 }), "{text}");

    let out = run(&["verify", "--quick", "--seed", "0", "--json"]);
    let json: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(json["criteria"].as_array().unwrap().len(), 9);
    assert_eq!(json["passed"].as_bool().unwrap(), all_passed);
}

#[test]
fn unknown_flags_are_rejected() {
    let out = run(&["bound", "--x", "0", "--sigma", "1", "--mystery"]);
    assert_eq!(out.status.code(), Some(2));

    let out = run(&["nonsense"]);
    assert_eq!(out.status.code(), Some(2));
}

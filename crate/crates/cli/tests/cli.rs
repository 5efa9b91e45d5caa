use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const EXPONENTIAL: &str = "family = \"exponential\"\na = [1.0, 1.0, 1.0]\n[params]\nz = 1.0\n";

struct Run {
    code: i32,
    stdout: String,
    stderr: String,
}

fn memkernel(out: &Path, args: &[&str]) -> Run {
    let Output {
        status,
        stdout,
        stderr,
    } = Command::new(env!("CARGO_BIN_EXE_memkernel"))
        .env_remove("MEMKERNEL_OUT_DIR")
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .expect("binary runs");
    Run {
        code: status.code().expect("exit code"),
        stdout: String::from_utf8(stdout).unwrap(),
        stderr: String::from_utf8(stderr).unwrap(),
    }
}

fn spec(dir: &TempDir, name: &str, body: &str) -> PathBuf {
    let path = dir.path().join(name);
    std::fs::write(&path, body).unwrap();
    path
}

fn report(out: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap()
}

fn csv_rows(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r
        .records()
        .map(|rec| rec.unwrap().iter().map(String::from).collect())
        .collect();
    (header, rows)
}

fn column(header: &[String], name: &str) -> usize {
    header
        .iter()
        .position(|h| h == name)
        .unwrap_or_else(|| panic!("no column {name}"))
}

#[test]
fn validate_exit_codes_follow_admissibility() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    let ok = spec(&dir, "ok.toml", EXPONENTIAL);
    let bound = spec(
        &dir,
        "bound.toml",
        "family = \"exponential\"\na = [0.2, 0.2, 0.2]\n[params]\nz = 1.0\n",
    );
    let triangle = spec(
        &dir,
        "tri.toml",
        "family = \"bi_exponential\"\na = [10, 10, 1]\n[params]\nc1 = 1.0\nc2 = 2.0\n",
    );
    assert_eq!(memkernel(&out, &["validate", ok.to_str().unwrap()]).code, 0);
    assert_eq!(report(&out)["admissible"], Value::Bool(true));

    assert_eq!(
        memkernel(&out, &["validate", bound.to_str().unwrap()]).code,
        2
    );
    let failed: Vec<Value> = report(&out)["admissibility"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|v| v["passed"] == Value::Bool(false))
        .map(|v| v["check"].clone())
        .collect();
    assert!(
        failed.contains(&Value::from("integral_bound")),
        "{failed:?}"
    );

    assert_eq!(
        memkernel(&out, &["validate", triangle.to_str().unwrap()]).code,
        2
    );
    let tri = &report(&out)["admissibility"][0];
    assert_eq!(tri["check"], "triangle");
    assert_eq!(tri["passed"], false);
}

#[test]
fn schema_errors_exit_1_with_field_messages() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    let unknown = spec(
        &dir,
        "u.toml",
        "family = \"exponential\"\na = [1, 1, 1]\ncolour = \"red\"\n[params]\nz = 1.0\n",
    );
    let run = memkernel(&out, &["validate", unknown.to_str().unwrap()]);
    assert_eq!(run.code, 1);
    assert!(run.stderr.contains("colour"), "{}", run.stderr);

    let token = spec(
        &dir,
        "t.toml",
        "family = \"exponential\"\na = [1, \"big\", 1]\n[params]\nz = 1.0\n",
    );
    let run = memkernel(&out, &["validate", token.to_str().unwrap()]);
    assert_eq!(run.code, 1);
    assert!(run.stderr.contains("a[1]"), "{}", run.stderr);

    let missing = spec(
        &dir,
        "m.toml",
        "family = \"bi_exponential\"\na = [1, 1, 1]\n[params]\nc1 = 1.0\n",
    );
    let run = memkernel(&out, &["validate", missing.to_str().unwrap()]);
    assert_eq!(run.code, 1);
    assert!(run.stderr.contains("params.c2"), "{}", run.stderr);

    assert_eq!(
        memkernel(&out, &["validate", "/nonexistent/spec.toml"]).code,
        1
    );
    assert_eq!(memkernel(&out, &["frobnicate"]).code, 1);
    assert_eq!(
        memkernel(
            &out,
            &["--grid", "5", "validate", unknown.to_str().unwrap()]
        )
        .code,
        1
    );
    assert!(
        !out.join("report.json").exists(),
        "no report for schema errors"
    );
}

#[test]
fn simulate_all_routes_agree_on_the_exponential_example() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    let s = spec(&dir, "e.toml", EXPONENTIAL);
    let run = memkernel(&out, &["simulate", "--route", "all", s.to_str().unwrap()]);
    assert_eq!(run.code, 0, "{}{}", run.stdout, run.stderr);
    let r = report(&out);
    let pairs = r["cross_route"].as_array().unwrap();
    assert_eq!(pairs.len(), 3);
    for p in pairs {
        assert!(p["max_lambda_difference"].as_f64().unwrap() <= 1e-4, "{p}");
    }
    for route in ["closed", "volterra", "laplace"] {
        let path = out.join(format!("trajectory_{route}.csv"));
        let (header, rows) = csv_rows(&path);
        assert_eq!(
            header,
            [
                "t", "lambda1", "lambda2", "lambda3", "p0", "p1", "p2", "p3", "F", "gamma1",
                "gamma2", "gamma3"
            ]
        );
        assert_eq!(rows.len(), 20_001);
    }
}

#[test]
fn report_claims_are_regenerable_from_the_csvs() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    let s = spec(&dir, "e.toml", EXPONENTIAL);
    assert_eq!(
        memkernel(
            &out,
            &[
                "--grid",
                "10:2000",
                "simulate",
                "--route",
                "all",
                s.to_str().unwrap()
            ]
        )
        .code,
        0
    );
    let lambdas = |route: &str| -> Vec<[f64; 3]> {
        let (header, rows) = csv_rows(&out.join(format!("trajectory_{route}.csv")));
        let idx = ["lambda1", "lambda2", "lambda3"].map(|c| column(&header, c));
        rows.iter()
            .map(|r| idx.map(|i| r[i].parse::<f64>().unwrap()))
            .collect()
    };
    let (closed, laplace) = (lambdas("closed"), lambdas("laplace"));
    let recomputed = closed
        .iter()
        .zip(&laplace)
        .flat_map(|(a, b)| (0..3).map(move |k| (a[k] - b[k]).abs()))
        .fold(0.0, f64::max);
    let r = report(&out);
    let reported = r["cross_route"]
        .as_array()
        .unwrap()
        .iter()
        .find(|p| p["routes"] == serde_json::json!(["closed", "laplace"]))
        .unwrap()["max_lambda_difference"]
        .as_f64()
        .unwrap();
    assert_eq!(recomputed, reported);
    assert_eq!(r["grid"]["n_steps"], 2000);
}

#[test]
fn zero_waiting_function_gives_constant_identity_columns() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    let s = spec(
        &dir,
        "zero.toml",
        "family = \"tabulated\"\na = [1, 1, 1]\n[tabulated]\ntimes = [0.0, 1.0]\nvalues = [0.0, 0.0]\n[grid]\nt_max = 5.0\nn_steps = 100\n",
    );
    let run = memkernel(
        &out,
        &["simulate", "--route", "closed", s.to_str().unwrap()],
    );
    assert_eq!(run.code, 0, "{}", run.stderr);
    let (header, rows) = csv_rows(&out.join("trajectory_closed.csv"));
    assert_eq!(rows.len(), 101);
    let expect = [
        ("lambda1", 1.0),
        ("lambda2", 1.0),
        ("lambda3", 1.0),
        ("p0", 1.0),
        ("p1", 0.0),
        ("p2", 0.0),
        ("p3", 0.0),
    ];
    for row in rows {
        for (name, value) in expect {
            assert_eq!(
                row[column(&header, name)].parse::<f64>().unwrap(),
                value,
                "{name}"
            );
        }
    }
    // The Volterra route has no time-domain kernel for tabulated f; `all` skips it.
    let run = memkernel(&out, &["simulate", "--route", "all", s.to_str().unwrap()]);
    assert_eq!(run.code, 0);
    assert!(run.stdout.contains("volterra: skipped"), "{}", run.stdout);
    assert_eq!(
        memkernel(
            &out,
            &["simulate", "--route", "volterra", s.to_str().unwrap()]
        )
        .code,
        1
    );
}

#[test]
fn singular_rates_need_force_and_are_masked() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    let s = spec(
        &dir,
        "sin.toml",
        "family = \"sinusoidal\"\na = [0.5, 0.5, \"inf\"]\n[params]\nomega = 1.0\n",
    );
    let run = memkernel(
        &out,
        &["simulate", "--route", "closed", s.to_str().unwrap()],
    );
    assert_eq!(run.code, 2);
    assert!(!out.join("trajectory_closed.csv").exists());
    let run = memkernel(
        &out,
        &[
            "simulate",
            "--route",
            "closed",
            "--force",
            s.to_str().unwrap(),
        ],
    );
    assert_eq!(
        run.code, 2,
        "exit code follows admissibility even when forced"
    );
    let (header, rows) = csv_rows(&out.join("trajectory_closed.csv"));
    let g1 = column(&header, "gamma1");
    let masked: Vec<f64> = rows
        .iter()
        .filter(|r| r[g1].is_empty())
        .map(|r| r[0].parse().unwrap())
        .collect();
    assert!(!masked.is_empty());
    // F(t) = 1 - cos t reaches a1 = 0.5 at t = pi/3.
    assert!(
        masked
            .iter()
            .any(|t| (t - std::f64::consts::FRAC_PI_3).abs() < 2e-3),
        "{masked:?}"
    );
    let cptp = &report(&out)["trajectories"][0]["cptp"];
    assert_eq!(cptp["passed"], false);
}

#[test]
fn solver_blow_up_exits_3() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    let s = spec(
        &dir,
        "huge.toml",
        "family = \"exponential\"\na = [1e-7, 1e-7, 1e-7]\n[params]\nz = 1.0\n",
    );
    let run = memkernel(
        &out,
        &[
            "simulate",
            "--route",
            "volterra",
            "--force",
            s.to_str().unwrap(),
        ],
    );
    assert_eq!(run.code, 3, "{}", run.stderr);
    assert!(run.stderr.contains("blow-up"), "{}", run.stderr);
    assert_eq!(report(&out)["exit_code"], 3);
}

#[test]
fn classify_three_way() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    let markovian = spec(&dir, "e.toml", EXPONENTIAL);
    assert_eq!(
        memkernel(&out, &["classify", markovian.to_str().unwrap()]).code,
        0
    );
    let c = &report(&out)["classification"];
    assert_eq!(c["cptp"], true);
    assert_eq!(c["cp_divisible"], true);
    assert_eq!(c["blp_measure"].as_f64().unwrap(), 0.0);
    assert_eq!(c["blp_seed"], 0x00C0_FFEE_u64);

    let oscillating = spec(
        &dir,
        "s.toml",
        &format!(
            "family = \"sinusoidal\"\na = [1, 1, 1]\n[params]\nomega = {}\n",
            1.5_f64.sqrt()
        ),
    );
    let run = memkernel(
        &out,
        &[
            "classify",
            "--probes",
            "64",
            "--seed",
            "7",
            oscillating.to_str().unwrap(),
        ],
    );
    assert_eq!(run.code, 0);
    assert!(run.stdout.contains("BLP-Markovian: no"), "{}", run.stdout);
    let c = &report(&out)["classification"];
    assert_eq!(c["cptp"], true);
    assert!(c["blp_measure"].as_f64().unwrap() > 0.0);
    assert_eq!(
        (c["blp_probes"].as_u64(), c["blp_seed"].as_u64()),
        (Some(64), Some(7))
    );

    let asymmetric = spec(
        &dir,
        "a.toml",
        "family = \"exponential\"\na = [1, 2, 3]\n[params]\nz = 2.0\n",
    );
    let run = memkernel(&out, &["classify", asymmetric.to_str().unwrap()]);
    assert_eq!(run.code, 2);
    let c = &report(&out)["classification"];
    assert_eq!(c["cp_divisible"], false);
    assert_eq!(c["cp_divisible_until"].as_f64().unwrap(), 0.0);
}

#[test]
fn golden_examples_pass() {
    let dir = TempDir::new().unwrap();
    for n in 1..=4 {
        let out = dir.path().join(format!("example{n}"));
        let started = std::time::Instant::now();
        let run = memkernel(&out, &["example", &n.to_string()]);
        assert_eq!(run.code, 0, "example {n}: {}{}", run.stdout, run.stderr);
        assert!(
            started.elapsed().as_secs_f64() < 10.0,
            "example {n} took {:?}",
            started.elapsed()
        );
        let r = report(&out);
        let golden = r["golden"].as_array().unwrap();
        assert!(golden.len() >= 4);
        assert!(golden.iter().all(|g| g["passed"] == true), "{golden:?}");
        assert!(
            out.join("trajectory_closed.csv").exists()
                && out.join("trajectory_volterra.csv").exists()
        );
    }
    assert_eq!(memkernel(dir.path(), &["example", "5"]).code, 1);
}

#[test]
fn example_two_dephasing_rate_is_negative_tanh() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().to_path_buf();
    assert_eq!(
        memkernel(&out, &["--grid", "5:500", "example", "2"]).code,
        0
    );
    let (header, rows) = csv_rows(&out.join("trajectory_closed.csv"));
    let (t, g3) = (column(&header, "t"), column(&header, "gamma3"));
    for row in rows.iter().filter(|r| !r[g3].is_empty()) {
        let t: f64 = row[t].parse().unwrap();
        let g: f64 = row[g3].parse().unwrap();
        assert!((g + 0.5 * t.tanh()).abs() < 1e-9, "t = {t}");
    }
}

#[test]
fn example_four_probabilities() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().to_path_buf();
    assert_eq!(
        memkernel(&out, &["--grid", "10:1000", "example", "4"]).code,
        0
    );
    let (header, rows) = csv_rows(&out.join("trajectory_closed.csv"));
    let [t, p0, p3] = ["t", "p0", "p3"].map(|c| column(&header, c));
    for row in &rows {
        let t: f64 = row[t].parse().unwrap();
        assert!((row[p0].parse::<f64>().unwrap() - 0.5 * (1.0 + t.cos())).abs() < 1e-12);
        assert!((row[p3].parse::<f64>().unwrap() - 0.5 * (1.0 - t.cos())).abs() < 1e-12);
    }
}

#[test]
fn invlaplace_examples() {
    let dir = TempDir::new().unwrap();
    let out = dir.path();
    let value = |stdout: &str, t: f64, col: usize| -> Option<f64> {
        stdout
            .lines()
            .skip(1)
            .take_while(|l| !l.is_empty())
            .map(|l| l.split(',').collect::<Vec<_>>())
            .find(|f| f[0].parse::<f64>().unwrap() == t)
            .and_then(|f| f[col].parse().ok())
    };
    let run = memkernel(
        out,
        &["invlaplace", "--num", "1", "--den", "1,1", "--t", "1"],
    );
    assert_eq!(run.code, 0);
    assert!((value(&run.stdout, 1.0, 1).unwrap() - 0.367879).abs() < 1e-6);
    assert!((value(&run.stdout, 1.0, 2).unwrap() - (-1.0_f64).exp()).abs() < 1e-12);

    let run = memkernel(
        out,
        &["invlaplace", "--num", "1", "--den", "1,0", "--t", "5"],
    );
    assert!((value(&run.stdout, 5.0, 1).unwrap() - 1.0).abs() < 1e-8);

    let run = memkernel(
        out,
        &["invlaplace", "--num", "1", "--den", "1,3,2,0", "--t", "0,2"],
    );
    assert_eq!(run.code, 0);
    assert_eq!(
        value(&run.stdout, 0.0, 1),
        None,
        "no numerical value at t = 0"
    );
    assert!(value(&run.stdout, 0.0, 2).unwrap().abs() < 1e-14);
    let at2 = 0.5 - (-2.0_f64).exp() + 0.5 * (-4.0_f64).exp();
    assert!((value(&run.stdout, 2.0, 2).unwrap() - at2).abs() < 1e-12);
    assert!(run.stdout.contains("# pole"));

    let run = memkernel(
        out,
        &[
            "--format",
            "json",
            "invlaplace",
            "--num",
            "1",
            "--den",
            "1,0,1",
            "--t",
            "1",
            "--method",
            "talbot",
        ],
    );
    let v: Value = serde_json::from_str(&run.stdout).unwrap();
    assert!((v["samples"][0]["numerical"].as_f64().unwrap() - 1.0_f64.sin()).abs() < 1e-8);
    assert_eq!(v["expansion"]["poles"].as_array().unwrap().len(), 2);

    for bad in [
        vec!["--num", "1", "--den", "0,1"],
        vec!["--num", "1", "--den", "0"],
        vec!["--num", "1,2,3", "--den", "1,1"],
    ] {
        let mut args = vec!["invlaplace", "--t", "1"];
        args.extend(bad);
        assert_eq!(memkernel(out, &args).code, 1, "{args:?}");
    }
}

#[test]
fn identical_inputs_give_identical_outputs() {
    let dir = TempDir::new().unwrap();
    let s = spec(&dir, "e.toml", EXPONENTIAL);
    let runs: Vec<PathBuf> = (0..2)
        .map(|i| {
            let out = dir.path().join(format!("run{i}"));
            let run = memkernel(&out, &["--grid", "8:800", "simulate", s.to_str().unwrap()]);
            assert_eq!(run.code, 0);
            assert_eq!(
                memkernel(&out.join("c"), &["classify", s.to_str().unwrap()]).code,
                0
            );
            out
        })
        .collect();
    for file in [
        "trajectory_closed.csv",
        "trajectory_volterra.csv",
        "trajectory_laplace.csv",
    ] {
        assert_eq!(
            std::fs::read(runs[0].join(file)).unwrap(),
            std::fs::read(runs[1].join(file)).unwrap(),
            "{file}"
        );
    }
    for sub in ["", "c"] {
        let strip = |dir: &Path| {
            let mut r = report(&dir.join(sub));
            r.as_object_mut().unwrap().remove("wall_time_s");
            r
        };
        assert_eq!(strip(&runs[0]), strip(&runs[1]));
    }
}

#[test]
fn json_format_and_environment_output_directory() {
    let dir = TempDir::new().unwrap();
    let env_out = dir.path().join("from_env");
    let s = spec(&dir, "e.toml", "family = \"exponential\"\na = [1, 1, 1]\noutputs = [\"lambdas\", \"probs\"]\n[params]\nz = 1.0\n[grid]\nt_max = 2.0\nn_steps = 20\n");
    let status = Command::new(env!("CARGO_BIN_EXE_memkernel"))
        .env("MEMKERNEL_OUT_DIR", &env_out)
        .args([
            "--format",
            "json",
            "simulate",
            "--route",
            "closed",
            s.to_str().unwrap(),
        ])
        .output()
        .unwrap()
        .status;
    assert!(status.success());
    let traj: Value = serde_json::from_str(
        &std::fs::read_to_string(env_out.join("trajectory_closed.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(traj["t"].as_array().unwrap().len(), 21);
    assert!(traj.get("gamma").is_none(), "rates were not requested");
    let r = report(&env_out);
    assert!(
        r.get("admissibility").is_none(),
        "verdicts were not requested"
    );
    assert_eq!(r["admissible"], true);
}

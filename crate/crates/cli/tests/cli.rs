use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn dpagd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dpagd"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn path(dir: &TempDir, name: &str) -> String {
    dir.path().join(name).to_str().unwrap().to_string()
}

#[test]
fn accountant_prints_csv() {
    let o = dpagd(&[
        "accountant",
        "--sigma",
        "4,8",
        "--q",
        "0.01",
        "--steps",
        "1000",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "sigma,q,steps,delta,epsilon,method");
    assert_eq!(lines.len(), 3);
    let eps = |l: &str| l.split(',').nth(4).unwrap().parse::<f64>().unwrap();
    assert!(eps(lines[1]) > eps(lines[2]));
    assert!(lines[1].ends_with(",ma"));
}

#[test]
fn accountant_solves_for_sigma() {
    let o = dpagd(&[
        "accountant",
        "--target-eps",
        "1.22",
        "--q",
        "0.002133",
        "--steps",
        "46900",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    let row: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    let sigma: f64 = row[0].parse().unwrap();
    assert!((sigma - 2.0).abs() < 0.3, "{sigma}");
    assert!(row[4].parse::<f64>().unwrap() <= 1.22);

    let ac = dpagd(&[
        "accountant",
        "--sigma",
        "8",
        "--q",
        "0.002133",
        "--steps",
        "46900",
        "--method",
        "ac",
    ]);
    let text = stdout(&ac);
    let row: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[5], "ac");
    assert!(row[4].parse::<f64>().unwrap() > 0.28);

    let both = dpagd(&[
        "accountant",
        "--sigma",
        "2",
        "--target-eps",
        "1",
        "--q",
        "0.1",
        "--steps",
        "10",
    ]);
    assert_eq!(both.status.code(), Some(1));
}

#[test]
fn exit_codes() {
    // missing required key
    let o = dpagd(&["accountant", "--q", "0.01", "--steps", "10"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("--sigma"), "{}", stderr(&o));
    // unknown subcommand and unknown flag
    assert_eq!(dpagd(&["fly"]).status.code(), Some(1));
    assert_eq!(dpagd(&["lowerbound", "--nope", "1"]).status.code(), Some(1));
    // unparsable and out-of-range values
    assert_eq!(dpagd(&["lowerbound", "--p", "ten"]).status.code(), Some(1));
    let o = dpagd(&[
        "accountant",
        "--sigma",
        "-1",
        "--q",
        "0.01",
        "--steps",
        "10",
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(
        dpagd(&["lowerbound", "--threads", "0"]).status.code(),
        Some(1)
    );
    // runtime failure: unreadable dataset
    let o = dpagd(&[
        "train",
        "--model",
        "mlp",
        "--images",
        "/nonexistent/images",
        "--labels",
        "/nonexistent/labels",
    ]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    // help is not an error
    assert_eq!(dpagd(&["--help"]).status.code(), Some(0));
}

#[test]
fn flags_override_file_which_overrides_defaults() {
    let dir = TempDir::new().unwrap();
    let cfg = path(&dir, "run.cfg");
    std::fs::write(&cfg, "# quadratic run\neta = 0.01\nsteps = 5\n").unwrap();

    let base = ["train", "--config", cfg.as_str(), "--p", "4", "--seed", "3"];
    let from_file = stdout(&dpagd(&base));
    let mut with_flag = base.to_vec();
    with_flag.extend(["--eta", "0.1"]);
    let from_flag = stdout(&dpagd(&with_flag));
    let explicit = stdout(&dpagd(&[
        "train", "--p", "4", "--seed", "3", "--steps", "5", "--eta", "0.1",
    ]));
    assert_eq!(from_file.lines().count(), 6);
    assert_ne!(from_file, from_flag);
    assert_eq!(from_flag, explicit);
}

#[test]
fn config_errors_name_file_and_line() {
    let dir = TempDir::new().unwrap();
    let cfg = path(&dir, "bad.cfg");
    std::fs::write(&cfg, "p = 10\n\ntrails = 5\n").unwrap();
    let o = dpagd(&["lowerbound", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("bad.cfg:3"), "{err}");
    assert!(err.contains("trails"), "{err}");

    std::fs::write(&cfg, "p 10\n").unwrap();
    let o = dpagd(&["lowerbound", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("bad.cfg:1"));
}

#[test]
fn failed_runs_leave_no_output() {
    let dir = TempDir::new().unwrap();
    let out = path(&dir, "out.csv");
    let o = dpagd(&["lowerbound", "--trials", "0", "--out", &out]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!Path::new(&out).exists());
    assert!(!Path::new(&format!("{out}.manifest")).exists());
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);
}

#[test]
fn manifest_replays_byte_identically() {
    let dir = TempDir::new().unwrap();
    let first = path(&dir, "first.csv");
    let o = dpagd(&[
        "concentration",
        "--n",
        "500",
        "--p",
        "8,16",
        "--trials",
        "20",
        "--steps",
        "10",
        "--seed",
        "4",
        "--out",
        &first,
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let manifest = format!("{first}.manifest");
    let text = std::fs::read_to_string(&manifest).unwrap();
    assert!(text.contains("# command = concentration"), "{text}");
    assert!(text.contains("trials = 20"));

    let csv = std::fs::read(&first).unwrap();
    for threads in ["1", "8"] {
        let again = path(&dir, &format!("again{threads}.csv"));
        let o = dpagd(&[
            "concentration",
            "--config",
            &manifest,
            "--threads",
            threads,
            "--out",
            &again,
        ]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        assert_eq!(std::fs::read(&again).unwrap(), csv);
    }
}

#[test]
fn manifest_records_input_hashes() {
    let dir = TempDir::new().unwrap();
    let img = path(&dir, "img");
    let lab = path(&dir, "lab");
    let mut bytes = Vec::new();
    for v in [0x0803u32, 4, 2, 2] {
        bytes.extend_from_slice(&v.to_be_bytes());
    }
    bytes.extend_from_slice(&[
        0, 255, 0, 255, 10, 20, 30, 40, 255, 255, 255, 255, 0, 0, 0, 1,
    ]);
    std::fs::write(&img, &bytes).unwrap();
    let mut bytes = Vec::new();
    for v in [0x0801u32, 4] {
        bytes.extend_from_slice(&v.to_be_bytes());
    }
    bytes.extend_from_slice(&[0, 1, 0, 1]);
    std::fs::write(&lab, &bytes).unwrap();

    let out = path(&dir, "mlp.csv");
    let o = dpagd(&[
        "train", "--model", "mlp", "--images", &img, "--labels", &lab, "--hidden", "3", "--steps",
        "3", "--out", &out,
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let manifest = std::fs::read_to_string(format!("{out}.manifest")).unwrap();
    assert!(manifest.contains("sha256"), "{manifest}");
    assert_eq!(manifest.matches("sha256").count(), 2, "{manifest}");
}

#[test]
fn bounds_cover_the_grid() {
    let o = dpagd(&[
        "bounds",
        "--variant",
        "gd,adam",
        "--n",
        "1000,10000",
        "--p",
        "4,16",
        "--eps",
        "1",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(stdout(&o).lines().count(), 1 + 2 * 2 * 2);
}

#[test]
fn train_counts_epochs_and_calibrates_noise() {
    let o = dpagd(&[
        "train", "--model", "sigmoid", "--n", "1000", "--batch", "100", "--clip", "1", "--epochs",
        "2", "--sigma", "auto", "--eps", "1",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(stdout(&o).lines().count(), 1 + 20);

    let o = dpagd(&[
        "train", "--model", "mlp", "--n", "50", "--hidden", "4", "--sigma", "auto",
    ]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
}

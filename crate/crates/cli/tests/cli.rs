//! End-to-end tests of the `turnpike` binary: command wiring, exit codes,
//! cache behavior, and output files.

use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_turnpike"))
}

struct Sandbox {
    dir: PathBuf,
}

impl Sandbox {
    fn new(tag: &str) -> Self {
        let dir = std::env::temp_dir().join(format!("turnpike-cli-{tag}-{}", std::process::id()));
        let _ = fs::remove_dir_all(&dir);
        fs::create_dir_all(&dir).unwrap();
        Sandbox { dir }
    }

    fn write_model(&self, name: &str, text: &str) -> PathBuf {
        let path = self.dir.join(name);
        fs::write(&path, text).unwrap();
        path
    }

    fn out(&self) -> PathBuf {
        self.dir.join("out")
    }

    fn cache(&self) -> PathBuf {
        self.dir.join("cache")
    }
}

impl Drop for Sandbox {
    fn drop(&mut self) {
        let _ = fs::remove_dir_all(&self.dir);
    }
}

const LINEAR_MODEL: &str = "\
[coefficients]
preset = linear
rate = 0.05

[correlation]
rho = -0.5
";

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("binary should run")
}

fn stdout(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).into_owned()
}

#[test]
fn eigen_prints_eigenvalue_and_caches() {
    let sb = Sandbox::new("eigen");
    let model = sb.write_model("linear.model", LINEAR_MODEL);

    let mut first = bin();
    first
        .args(["eigen", "--model"])
        .arg(&model)
        .args(["--grid-n", "500"])
        .arg("--out-dir")
        .arg(sb.out())
        .arg("--cache-dir")
        .arg(sb.cache());
    let out1 = run(&mut first);
    assert_eq!(out1.status.code(), Some(0), "{out1:?}");
    let text1 = stdout(&out1);
    assert!(text1.contains("cache: miss"), "{text1}");
    assert!(text1.contains("lambda_c = -0.16875"), "{text1}");

    let mut second = bin();
    second
        .args(["eigen", "--model"])
        .arg(&model)
        .args(["--grid-n", "500"])
        .arg("--out-dir")
        .arg(sb.out())
        .arg("--cache-dir")
        .arg(sb.cache());
    let out2 = run(&mut second);
    let text2 = stdout(&out2);
    assert!(text2.contains("cache: hit"), "{text2}");
    // Identical numeric output either way.
    let lambda_line = |s: &str| {
        s.lines()
            .find(|l| l.starts_with("lambda_c"))
            .map(str::to_owned)
    };
    assert_eq!(lambda_line(&text1), lambda_line(&text2));

    assert!(sb.out().join("eigen.csv").exists());
    assert!(sb.out().join("manifest.txt").exists());
}

#[test]
fn check_exit_codes() {
    let sb = Sandbox::new("check");
    let model = sb.write_model("linear.model", LINEAR_MODEL);

    let ok = run(bin()
        .args(["check", "--model"])
        .arg(&model)
        .arg("--out-dir")
        .arg(sb.out())
        .arg("--cache-dir")
        .arg(sb.cache()));
    assert_eq!(ok.status.code(), Some(0), "{ok:?}");

    // p in (0, 1) makes the potential grow at infinity.
    let fail = run(bin()
        .args(["check", "--model"])
        .arg(&model)
        .args(["--p", "0.5"])
        .arg("--out-dir")
        .arg(sb.out())
        .arg("--cache-dir")
        .arg(sb.cache()));
    assert_eq!(fail.status.code(), Some(1), "{fail:?}");
    let report = fs::read_to_string(sb.out().join("conditions.txt")).unwrap();
    assert!(report.contains("c_decays_left = NotDecaying"), "{report}");

    let missing = run(bin().args(["check", "--model", "nope.model"]));
    assert_eq!(missing.status.code(), Some(64), "{missing:?}");
}

#[test]
fn check_inconclusive_exit_code() {
    // The potential decays but never past the descent threshold within the
    // schedule, so the verdict stalls.
    let sb = Sandbox::new("inconclusive");
    let model = sb.write_model(
        "slow.model",
        "\
[coefficients]
r = 0
b = -y
a = 1
mu = sqrt(log(1 + y^2))
sigma = 1
",
    );
    let out = run(bin()
        .args(["check", "--model"])
        .arg(&model)
        .arg("--out-dir")
        .arg(sb.out())
        .arg("--cache-dir")
        .arg(sb.cache()));
    assert_eq!(out.status.code(), Some(2), "{out:?}");
}

#[test]
fn usage_errors_exit_64() {
    let unknown_flag = run(bin().args(["eigen", "--frobnicate"]));
    assert_eq!(unknown_flag.status.code(), Some(64));

    let unknown_key = run(bin().args(["eigen", "--set", "bogus_key=1", "--model", "x"]));
    assert_eq!(unknown_key.status.code(), Some(64));
}

#[test]
fn turnpike_explicit_zero_correlation_control() {
    let sb = Sandbox::new("turnpike");
    let model = sb.write_model(
        "uncorrelated.model",
        "\
[coefficients]
preset = linear
rate = 0.05

[correlation]
rho = 0
",
    );
    let out = run(bin()
        .args(["turnpike", "--explicit", "--model"])
        .arg(&model)
        .args(["--grid-n", "300"])
        .args(["--set", "n_paths=200"])
        .args(["--set", "dt=0.005"])
        .args(["--set", "horizons=1 2"])
        .arg("--out-dir")
        .arg(sb.out())
        .arg("--cache-dir")
        .arg(sb.cache()));
    assert_eq!(out.status.code(), Some(0), "{out:?}");
    let csv = fs::read_to_string(sb.out().join("turnpike.csv")).unwrap();
    let mut lines = csv.lines();
    let header = lines.next().unwrap();
    assert!(header.starts_with("horizon,"));
    for line in lines {
        let cols: Vec<&str> = line.split(',').collect();
        // mean_bracket column is exactly zero when the policies coincide.
        assert_eq!(cols[3], "0", "{line}");
    }
    assert!(sb.out().join("plot_bracket.csv").exists());
}

#[test]
fn planner_runs_duality_lab() {
    let sb = Sandbox::new("planner");
    let out = run(bin()
        .args(["planner"])
        .args(["--set", "capitals=2 1"])
        .args(["--set", "gammas=2 3"])
        .args(["--set", "weights=1 1"])
        .args(["--set", "t_grid=5 10"])
        .args(["--set", "bs_rate=0.05"])
        .arg("--out-dir")
        .arg(sb.out()));
    assert_eq!(out.status.code(), Some(0), "{out:?}");
    let text = stdout(&out);
    assert!(text.contains("effective p = -1"), "{text}");
    assert!(text.contains("weight 0.5"), "{text}");
    assert!(sb.out().join("planner.csv").exists());
}

#[test]
fn eigen_window_too_small_exits_3() {
    let sb = Sandbox::new("window");
    let model = sb.write_model("linear.model", LINEAR_MODEL);
    let out = run(bin()
        .args(["eigen", "--model"])
        .arg(&model)
        .args(["--grid-n", "200", "--window", "-2", "2"])
        .arg("--out-dir")
        .arg(sb.out())
        .arg("--cache-dir")
        .arg(sb.cache()));
    assert_eq!(out.status.code(), Some(3), "{out:?}");
    let err = String::from_utf8_lossy(&out.stderr).into_owned();
    assert!(err.contains("window too small"), "{err}");
}

#[test]
fn simulate_outputs_reproduce_bitwise() {
    let sb = Sandbox::new("repro");
    let model = sb.write_model("linear.model", LINEAR_MODEL);
    let mut csvs = Vec::new();
    for run_dir in ["a", "b"] {
        let out_dir = sb.dir.join(run_dir);
        let out = run(bin()
            .args(["simulate", "--model"])
            .arg(&model)
            .args(["--grid-n", "300", "--seed", "11"])
            .args(["--set", "n_paths=300", "--set", "t_max=0.5", "--set", "dt=0.005"])
            .arg("--out-dir")
            .arg(&out_dir)
            .arg("--cache-dir")
            .arg(sb.cache()));
        assert_eq!(out.status.code(), Some(0), "{out:?}");
        csvs.push(fs::read(out_dir.join("state_stats.csv")).unwrap());
    }
    assert_eq!(csvs[0], csvs[1], "outputs differ between identical runs");
}

#[test]
fn manifest_reflects_resolved_configuration() {
    let sb = Sandbox::new("manifest");
    let model = sb.write_model("linear.model", LINEAR_MODEL);
    let config = sb.dir.join("run.conf");
    fs::write(&config, "seed = 7\nn_paths = 100\nt_max = 0.25\ndt = 0.005\n").unwrap();
    let out = run(bin()
        .args(["simulate", "--config"])
        .arg(&config)
        .arg("--model")
        .arg(&model)
        .args(["--grid-n", "300"])
        .args(["--seed", "9"]) // flag wins over the file
        .arg("--out-dir")
        .arg(sb.out())
        .arg("--cache-dir")
        .arg(sb.cache()));
    assert_eq!(out.status.code(), Some(0), "{out:?}");
    let manifest = fs::read_to_string(sb.out().join("manifest.txt")).unwrap();
    assert!(manifest.contains("command = simulate"));
    assert!(manifest.contains("seed = 9"), "{manifest}");
    assert!(manifest.contains("config_hash = "));
    assert!(manifest.contains("model_hash = "));
}

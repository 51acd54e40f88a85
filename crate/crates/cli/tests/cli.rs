use std::process::{Command, Output};

const BASELINE: [&str; 6] = ["kappa1=5.0", "mu1=1.2", "m1=0.5", "kappa2=2.1", "mu2=3.0", "m2=0.8"];

fn kmsprod(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kmsprod"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn with_fig1<'a>(cmd: &'a str, extra: &[&'a str]) -> Vec<&'a str> {
    let mut v = vec![cmd];
    v.extend(BASELINE);
    v.extend(extra);
    v
}

fn rows(out: &Output) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_reader(out.stdout.as_slice());
    r.records().map(|rec| rec.unwrap().iter().map(String::from).collect()).collect()
}

#[test]
fn zeroth_moment_is_exactly_one() {
    let out = kmsprod(&with_fig1("moments", &["--n", "0"]));
    assert!(out.status.success());
    assert_eq!(rows(&out)[0][1], "1");
}

#[test]
fn invalid_parameter_exits_2_naming_the_key() {
    let out = kmsprod(&["pdf", "mu1=0", "kappa1=1", "m1=1", "kappa2=1", "mu2=1", "m2=1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("mu1: mu must satisfy mu > 0"));
}

#[test]
fn missing_keys_are_listed() {
    let out = kmsprod(&["cdf", "kappa1=5.0", "mu1=1.2", "m1=0.5"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing required keys: kappa2, mu2, m2"));
}

#[test]
fn flags_and_assignments_agree() {
    let a = kmsprod(&with_fig1("pdf", &["--grid", "0.1:3:4:log"]));
    let b = kmsprod(&[
        "pdf", "--k1", "5", "--mu1", "1.2", "--m1", "0.5", "--k2", "2.1", "--mu2", "3", "--m2", "0.8", "--grid", "0.1:3:4:log",
    ]);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn zero_db_is_unit_threshold() {
    let op = kmsprod(&with_fig1("op-cascade", &["--grid", "-10:10:3:dB"]));
    let cdf = kmsprod(&with_fig1("cdf", &["--grid", "1:2:2"]));
    let op = rows(&op);
    let cdf = rows(&cdf);
    assert_eq!(op[1][0], "0");
    assert_eq!(op[1][1], cdf[0][1]);
}

#[test]
fn db_grid_rejected_outside_threshold_sweeps() {
    let out = kmsprod(&with_fig1("pdf", &["--grid", "-10:10:3:dB"]));
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn probabilities_stay_in_range_and_rise() {
    let out = kmsprod(&with_fig1("op-cascade", &["--grid", "-20:25:46:dB"]));
    let mut prev = 0.0;
    for r in rows(&out) {
        let (p, tail): (f64, f64) = (r[1].parse().unwrap(), r[2].parse().unwrap());
        assert!((0.0..=1.0 + tail).contains(&p));
        assert!(p >= prev - tail);
        prev = p;
    }
}

#[test]
fn seeded_output_is_byte_identical_across_thread_counts() {
    let args = with_fig1("cdf", &["--mc-samples", "150000", "--seed", "9"]);
    let a = kmsprod(&args);
    let b = Command::new(env!("CARGO_BIN_EXE_kmsprod"))
        .args(&args)
        .env("KMS_THREADS", "1")
        .output()
        .unwrap();
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(a.stderr, b.stderr);
}

#[test]
fn relay_columns_include_exact_snr_estimate() {
    let out = kmsprod(&with_fig1(
        "op-relay",
        &["kappa3=5", "mu3=1.2", "m3=1.3", "--grid", "-5:5:3:dB", "--mc-samples", "20000"],
    ));
    assert!(out.status.success());
    let head = String::from_utf8_lossy(&out.stdout).lines().next().unwrap().to_string();
    assert_eq!(head, "gamma_th_dB,op,tail_estimate,source,mc_value,mc_stderr,mc_exact_value");
}

#[test]
fn manifest_written_next_to_csv() {
    let dir = std::env::temp_dir().join(format!("kmsprod-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let csv = dir.join("af.csv");
    let out = kmsprod(&with_fig1("af", &["--out", csv.to_str().unwrap()]));
    assert!(out.status.success());
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("af.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "af");
    assert_eq!(manifest["seed"], 42);
    std::fs::remove_dir_all(&dir).unwrap();
}

/// `validate --full --seed 42` twice, compared byte for byte. The exit
/// status reflects the suite result and is checked separately.
#[test]
fn full_validation_is_reproducible() {
    let a = kmsprod(&["validate", "--full", "--seed", "42"]);
    let b = kmsprod(&["validate", "--full", "--seed", "42"]);
    assert!(matches!(a.status.code(), Some(0) | Some(4)));
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(a.stderr, b.stderr);
}

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use critex_cli::config::RunConfig;
use proptest::prelude::*;

fn critex(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_critex"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn table_value(text: &str, key: &str) -> String {
    text.lines()
        .find_map(|l| {
            let mut it = l.split_whitespace();
            (it.next() == Some(key)).then(|| it.collect::<Vec<_>>().join(" "))
        })
        .unwrap_or_else(|| panic!("no row {key} in\n{text}"))
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn exponents_table() {
    let out = critex(&["exponents", "-N", "3", "-p", "3", "--sigma", "-0.5"]);
    assert_eq!(code(&out), 0);
    let t = stdout(&out);
    assert_eq!(table_value(&t, "pStar"), "2");
    assert_eq!(table_value(&t, "d"), "3");
    assert_eq!(table_value(&t, "k"), "1.5");

    let out = critex(&["exponents", "-N", "2", "-p", "2", "--sigma", "0.5", "--check"]);
    assert_eq!(code(&out), 0);
    let t = stdout(&out);
    assert_eq!(table_value(&t, "pStar"), "inf");
    assert_eq!(table_value(&t, "regime"), "ForcedBlowUp");
}

#[test]
fn exponents_usage_errors() {
    assert_eq!(code(&critex(&["exponents", "-N", "2"])), 2);
    assert_eq!(
        code(&critex(&["exponents", "-N", "2", "-p", "0.5", "--sigma", "0.1"])),
        2
    );
    assert_eq!(code(&critex(&["frobnicate"])), 2);
    assert_eq!(code(&critex(&["--help"])), 0);
}

#[test]
fn exponents_check_flags_q_outside_window() {
    let ok = critex(&["exponents", "-N", "2", "-p", "4", "--sigma", "-0.5", "--check"]);
    assert_eq!(code(&ok), 0);
    let bad = critex(&[
        "exponents",
        "-N",
        "2",
        "-p",
        "4",
        "--sigma",
        "-0.5",
        "-q",
        "100",
        "--check",
    ]);
    assert_eq!(code(&bad), 1);
}

const ODE: &str = "\
[params]
N_dim = 1
p_exponent = 2
sigma_exponent = -0.5
[grid]
halfwidth_length = 8
points_count = 16
[data]
u0_kind = constant
u0_amplitude_value = 1
w_kind = zero
[simulate]
Tend_time = 5
";

#[test]
fn simulate_constant_data_blows_up_near_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "ode.ini", ODE);
    let out_dir = dir.path().join("out");
    let out = critex(&["simulate", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(out_dir.join("norms.csv")).unwrap();
    let last = csv.lines().last().unwrap();
    let t: f64 = last.split(',').next().unwrap().parse().unwrap();
    assert!((t - 1.0).abs() < 0.02, "t* = {t}");
    assert!(out_dir.join("manifest.ini").exists());
    assert!(out_dir.join("final.field").exists());
}

#[test]
fn simulate_small_supercritical_data_reaches_horizon() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "small.ini",
        "[params]\nN_dim = 2\np_exponent = 4\nsigma_exponent = -0.5\n\
         [data]\nu0_amplitude_value = 0.003\nw_amplitude_value = 0.003\n\
         [simulate]\nTend_time = 20\noutputs_time = 1, 10\n",
    );
    let out_dir = dir.path().join("out");
    let out = critex(&["simulate", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    let snaps = fs::read_to_string(out_dir.join("snapshots.csv")).unwrap();
    assert_eq!(snaps.lines().count(), 3);
}

#[test]
fn malformed_config_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.ini", "[params]\nN_dim = 2\np_exponent = two\n");
    let out = critex(&["simulate", &cfg, "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));
    let missing = critex(&["simulate", "/nonexistent/config.ini"]);
    assert_eq!(code(&missing), 2);
}

#[test]
fn certificate_subcritical_reports_contradiction() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "cert.ini",
        "[params]\nN_dim = 2\np_exponent = 2\nsigma_exponent = -0.5\n\
         [grid]\nhalfwidth_length = 32\npoints_count = 128\n\
         [data]\nw_kind = compact\n",
    );
    let out_dir = dir.path().join("out");
    let out = critex(&["--check", "certificate", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    let csv = fs::read_to_string(out_dir.join("certificate.csv")).unwrap();
    assert!(csv.starts_with("T,forcing,I1,I2,bound,verdict\n"));
    assert!(csv.lines().nth(1).unwrap().ends_with(",CONTRADICTION"));
    assert!(csv.contains("# verdict,CONTRADICTION"));
}

const PICARD: &str = "\
[params]
N_dim = 2
p_exponent = 4
sigma_exponent = -0.5
[data]
u0_amplitude_value = 0.003
w_amplitude_value = 0.003
[picard]
rungs_count = 32
";

#[test]
fn picard_converges_in_guarantee_region() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "pic.ini", PICARD);
    let out_dir = dir.path().join("out");
    let out = critex(&["--check", "picard", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let diag = fs::read_to_string(out_dir.join("diagnostics.csv")).unwrap();
    assert!(diag.contains("# status,Converged"));
    assert!(out_dir.join("ladder").join("rung_0031.field").exists());
    assert_eq!(
        fs::read_to_string(out_dir.join("audit.csv"))
            .unwrap()
            .lines()
            .count(),
        1 + 32 + 4
    );
}

const SWEEP: &str = "\
[params]
N_dim = 2
p_exponent = 2
sigma_exponent = -0.5
[sweep]
pvalues_exponent = 1.5, 4
sigmavalues_exponent = -0.5, 0.5
scales_value = 0.01
TendMax_time = 1000
";

#[test]
fn sweep_is_independent_of_worker_count_and_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "sweep.ini", SWEEP);
    let one = dir.path().join("one");
    let eight = dir.path().join("eight");
    assert_eq!(
        code(&critex(&[
            "sweep",
            &cfg,
            "--workers",
            "1",
            "--out",
            one.to_str().unwrap()
        ])),
        0
    );
    assert_eq!(
        code(&critex(&[
            "sweep",
            &cfg,
            "--workers",
            "8",
            "--out",
            eight.to_str().unwrap()
        ])),
        0
    );
    for f in ["phase.csv", "boundary.csv", "phase.svg"] {
        assert_eq!(
            fs::read(one.join(f)).unwrap(),
            fs::read(eight.join(f)).unwrap(),
            "{f}"
        );
    }
    let phase = fs::read_to_string(one.join("phase.csv")).unwrap();
    assert!(phase.contains(",BlowUp,"));
    assert!(phase.contains(",GlobalCandidate,,SupercriticalGlobal"));

    let again = dir.path().join("again");
    let manifest = one.join("manifest.ini");
    let out = critex(&[
        "--check",
        "sweep",
        manifest.to_str().unwrap(),
        "--out",
        again.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    assert_eq!(
        fs::read(one.join("phase.csv")).unwrap(),
        fs::read(again.join("phase.csv")).unwrap()
    );
}

#[test]
fn seed_profile_and_fingerprint_check() {
    let dir = tempfile::tempdir().unwrap();
    let g = critex::Grid::new(2, 32.0, 64).unwrap();
    let profile = critex::make_bump(&g, critex::BumpKind::Gaussian, &[1.0, 0.0], 2.0, 1.0).unwrap();
    let seed = dir.path().join("seed.field");
    profile.write_snapshot(fs::File::create(&seed).unwrap()).unwrap();
    let cfg = write(
        dir.path(),
        "sim.ini",
        "[params]\nN_dim = 2\np_exponent = 4\nsigma_exponent = -0.5\n\
         [data]\nu0_amplitude_value = 0.003\nw_amplitude_value = 0.003\n\
         [simulate]\nTend_time = 5\n",
    );
    let a = dir.path().join("a");
    let out = critex(&[
        "simulate",
        &cfg,
        "--seed-profile",
        seed.to_str().unwrap(),
        "--out",
        a.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    assert!(a.join("u0_profile.field").exists());

    // Re-running the manifest from its own directory reproduces the CSV.
    let b = dir.path().join("b");
    let manifest = a.join("manifest.ini");
    let out = critex(&[
        "--check",
        "simulate",
        manifest.to_str().unwrap(),
        "--out",
        b.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(
        fs::read(a.join("norms.csv")).unwrap(),
        fs::read(b.join("norms.csv")).unwrap()
    );

    // A tampered profile no longer matches the recorded fingerprint.
    let tampered = critex::make_bump(&g, critex::BumpKind::Gaussian, &[0.0, 0.0], 2.0, 1.0).unwrap();
    tampered
        .write_snapshot(fs::File::create(a.join("u0_profile.field")).unwrap())
        .unwrap();
    let out = critex(&[
        "--check",
        "simulate",
        manifest.to_str().unwrap(),
        "--out",
        dir.path().join("c").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 1);
}

fn finite() -> impl Strategy<Value = f64> {
    prop_oneof![-1e3..1e3f64, 1e-9..1e-3f64, Just(0.0)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn config_round_trip(
        dim in 1u32..4,
        p in 1.01..10.0f64,
        sigma in -0.99..2.0f64,
        t_end in finite(),
        outputs in proptest::collection::vec(finite(), 0..4),
        scales in proptest::collection::vec(finite(), 1..4),
        q in proptest::option::of(1.0..50.0f64),
        steep in any::<bool>(),
        workers in 1usize..9,
        amp in finite(),
    ) {
        let text = format!(
            "[params]\nN_dim = {dim}\np_exponent = {p}\nsigma_exponent = {sigma}\n\
             [data]\nu0_kind = constant\nu0_amplitude_value = {amp}\nw_kind = compact\nw_width_length = 1.5\n\
             [certificate]\ncutoffs_name = {}\n[sweep]\nworkers_count = {workers}\n",
            if steep { "steep" } else { "standard" }
        );
        let (mut cfg, _) = RunConfig::parse(&text).unwrap();
        cfg.simulate.t_end = t_end;
        cfg.simulate.output_times = outputs;
        cfg.simulate.norm_q = q;
        cfg.sweep.data_scales = scales;
        let (back, _) = RunConfig::parse(&cfg.serialize()).unwrap();
        prop_assert_eq!(&back, &cfg);
        prop_assert_eq!(back.serialize(), cfg.serialize());
    }
}

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fbm-mkv"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn header(path: &Path) -> String {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .next()
        .unwrap()
        .to_string()
}

#[test]
fn sample_fbm_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = run(&[
            "sample-fbm",
            "--h",
            "0.8",
            "--n-particles",
            "200",
            "--steps",
            "16",
            "--seed",
            "5",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for name in ["paths.csv", "covariance.csv", "report.csv"] {
        assert_eq!(
            fs::read(a.join(name)).unwrap(),
            fs::read(b.join(name)).unwrap(),
            "{name}"
        );
    }
    assert_eq!(header(&a.join("paths.csv")), "time,particle_id,state");
    assert_eq!(
        header(&a.join("covariance.csv")),
        "s,t,empirical_cov,analytic_cov"
    );
    let text = fs::read_to_string(a.join("paths.csv")).unwrap();
    assert!(!text.contains('\r'));
}

#[test]
fn single_path_has_one_row_per_grid_point() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&[
        "sample-fbm",
        "--n-particles",
        "1",
        "--steps",
        "20",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(dir.path().join("paths.csv")).unwrap();
    assert_eq!(text.lines().count(), 1 + 21);
}

#[test]
fn impossible_tolerance_fails_with_the_row_named() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&[
        "validate",
        "--l1-tol",
        "0",
        "--n-particles",
        "500",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("[FAIL] fp_l1_closed_form"), "{stdout}");
    let csv = fs::read_to_string(dir.path().join("report.csv")).unwrap();
    assert_eq!(
        csv.lines().next().unwrap(),
        "metric,value,threshold,comparison,pass"
    );
    assert!(csv
        .lines()
        .any(|l| l.starts_with("fp_l1_closed_form,") && l.ends_with(",false")));
}

#[test]
fn default_validate_passes_and_writes_documented_files() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["validate", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stdout)
    );
    assert_eq!(header(&dir.path().join("fp_solution.csv")), "t,x,density");
    assert_eq!(
        header(&dir.path().join("fp_moments.csv")),
        "t,mean,variance"
    );
    assert_eq!(header(&dir.path().join("target_density.csv")), "x,density");
    let txt = fs::read_to_string(dir.path().join("report.txt")).unwrap();
    assert!(txt.contains("time-change adjudication"));
}

#[test]
fn raw_runs_write_their_csvs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = run(&[
        "simulate",
        "--scenario",
        "custom",
        "--n-particles",
        "20",
        "--steps",
        "8",
        "--out",
        out,
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(
        header(&dir.path().join("trajectory.csv")),
        "time,particle_id,state"
    );
    assert_eq!(
        header(&dir.path().join("summary.csv")),
        "time,mean,variance,stderr"
    );
    let rows = fs::read_to_string(dir.path().join("trajectory.csv"))
        .unwrap()
        .lines()
        .count();
    assert_eq!(rows, 1 + 9 * 20);

    let o = run(&[
        "fp-solve",
        "--fp-steps",
        "32",
        "--cells",
        "100",
        "--out",
        out,
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(
        header(&dir.path().join("fp_moments.csv")),
        "t,mean,variance"
    );
}

#[test]
fn m2_table_and_fourier_check_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = run(&["m2-table", "--out", out]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));
    let m2 = fs::read_to_string(dir.path().join("m2.csv")).unwrap();
    assert_eq!(
        m2.lines().next().unwrap(),
        "t,h,m2_quadrature,m2_direct,candidate_printed,candidate_marginal,m2_normalized,slope"
    );
    // t = 0 rows are exactly zero
    assert!(m2
        .lines()
        .filter(|l| l.starts_with("0,"))
        .all(|l| l.split(',').nth(2) == Some("0")));

    let o = run(&[
        "fourier-check",
        "--fourier-particles",
        "400",
        "--fourier-steps",
        "16",
        "--refinement-levels",
        "1",
        "--out",
        out,
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));
    let f = fs::read_to_string(dir.path().join("fourier_residuals.csv")).unwrap();
    assert_eq!(f.lines().next().unwrap(), "t,y,residual_magnitude");
    assert_eq!(f.lines().count(), 1 + 15 * 4);
}

#[test]
fn config_file_and_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "# small run\nh = 0.6\nn-particles = 50\nsteps = 8\n").unwrap();
    let out = dir.path().join("out");
    let o = run(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--steps",
        "4",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let used = fs::read_to_string(out.join("config.txt")).unwrap();
    assert!(
        used.contains("h = 0.6\n")
            && used.contains("steps = 4\n")
            && used.contains("n_particles = 50\n")
    );

    fs::write(&cfg, "colour = blue\n").unwrap();
    let o = run(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("colour"));
}

#[test]
fn hurst_at_or_below_one_half_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&[
        "sample-fbm",
        "--h",
        "0.3",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    let o = run(&[
        "sample-fbm",
        "--h",
        "0.5",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
}

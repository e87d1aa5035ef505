use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn scratch(name: &str) -> PathBuf {
    let p = std::env::temp_dir().join(format!("vheat-cli-{name}-{}", std::process::id()));
    let _ = fs::remove_dir_all(&p);
    fs::create_dir_all(&p).unwrap();
    p
}

fn vheat(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vheat"))
        .arg("--out")
        .arg(out)
        .args(args)
        .env("VHEAT_WORKERS", "1")
        .output()
        .unwrap()
}

fn run_dir(o: &Output) -> PathBuf {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    PathBuf::from(String::from_utf8_lossy(&o.stdout).lines().last().unwrap().trim())
}

fn config(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.display().to_string()
}

#[test]
fn bgk_run_resume_and_plots() {
    let d = scratch("bgk");
    let c = config(
        &d,
        "bgk.cfg",
        "kn = 0.1\nf0 = 2\nn_cells = 12\nn_v1 = 32\nn_v2 = 32\nt_end = 0.4\nsample_interval = 0.1\nsnapshot_times = 0.2, 0.4\n",
    );
    let run = run_dir(&vheat(&d, &["bgk", "run", "--config", &c]));
    for f in ["series.csv", "checkpoint.bin", "manifest.txt", "config.txt"] {
        assert!(run.join(f).exists(), "{f}");
    }
    assert_eq!(fs::read_dir(run.join("snapshots")).unwrap().count(), 2);
    let series = fs::read_to_string(run.join("series.csv")).unwrap();
    assert!(series.starts_with("t,theta_av,u2_av,entropy,mass\n"));
    assert_eq!(series.lines().count(), 6);
    let manifest = fs::read_to_string(run.join("manifest.txt")).unwrap();
    assert!(manifest.contains("subcommand: bgk") && manifest.contains("series.csv"));

    let c2 = config(&d, "bgk2.cfg", "kn = 0.1\nf0 = 2\nn_cells = 12\nn_v1 = 32\nn_v2 = 32\nt_end = 0.6\nsample_interval = 0.1\n");
    let ck = run.join("checkpoint.bin").display().to_string();
    let resumed = run_dir(&vheat(&d, &["bgk", "run", "--config", &c2, "--resume", &ck]));
    let s2 = fs::read_to_string(resumed.join("series.csv")).unwrap();
    assert!(s2.lines().nth(1).unwrap().starts_with("4.0000000000e-1"), "{s2}");

    let plots = vheat(&d, &["emit-plots", "--run-dir", &run.display().to_string()]);
    assert!(plots.status.success());
    assert_eq!(String::from_utf8_lossy(&plots.stdout).lines().count(), 7);
    fs::remove_dir_all(&d).unwrap();
}

#[test]
fn dsmc_output_is_deterministic() {
    let d = scratch("dsmc");
    let c = config(
        &d,
        "dsmc.cfg",
        "kn = 0.1\nf0 = 2\nn_cells = 10\nparticles_per_cell = 20\nt_end = 1\nsample_interval = 0.25\nn_ensemble = 3\nrng_seed = 42\n",
    );
    let a = run_dir(&vheat(&d, &["dsmc", "run", "--config", &c]));
    let b = run_dir(&vheat(&d, &["dsmc", "run", "--config", &c]));
    assert_ne!(a, b);
    let read = |p: &Path| fs::read(p.join("aggregate.csv")).unwrap();
    assert_eq!(read(&a), read(&b));
    assert!(fs::read_to_string(a.join("manifest.txt")).unwrap().contains("seeds: 42,43,44"));
    assert_eq!(fs::read_dir(a.join("runs")).unwrap().count(), 3);
    fs::remove_dir_all(&d).unwrap();
}

#[test]
fn cns_run_and_slope_fit() {
    let d = scratch("cns");
    let c = config(&d, "cns.cfg", "g0 = 1\ndelta = 1\nn_cells = 16\ndt = 0.05\nt_end = 100\n");
    let run = run_dir(&vheat(&d, &["cns", "run", "--config", &c]));
    let series = run.join("series.csv").display().to_string();
    let fit = vheat(&d, &["fit", "slope", "--input", &series, "--field", "theta_av", "--window", "0.25"]);
    assert!(fit.status.success(), "{}", String::from_utf8_lossy(&fit.stderr));
    let text = String::from_utf8_lossy(&fit.stdout).to_string();
    assert!(text.starts_with("t,alpha,beta,beta_bar\n"));
    let last: f64 = text.lines().last().unwrap().split(',').nth(1).unwrap().parse().unwrap();
    // closed form gives C₁t/(2(C₁t + 1)) ≈ 0.33 at t = 100
    assert!(last > 0.3 && last < 0.37, "{last}");
    let bad = vheat(&d, &["fit", "slope", "--input", &series, "--field", "nope"]);
    assert!(!bad.status.success());
    fs::remove_dir_all(&d).unwrap();
}

#[test]
fn steady_solve_certificate_and_nonconvergence() {
    let d = scratch("steady");
    let c = config(&d, "ns.cfg", "nu = 1\ntruncation = 4\nforce = 1 0 0 0 0 0 0 0 -0.5\n");
    let run = run_dir(&vheat(&d, &["steady-ns", "solve", "--config", &c]));
    let cert = fs::read_to_string(run.join("certificate.txt")).unwrap();
    assert!(cert.contains("smallness_held: yes"), "{cert}");
    let sol = fs::read_to_string(run.join("solution.csv")).unwrap();
    assert!(sol.starts_with("kx,ky,kz,re1,im1,re2,im2,re3,im3\n"));
    let c = config(
        &d,
        "hard.cfg",
        "nu = 0.1\ntruncation = 4\nmax_iter = 2\nforce = 1 1 0 1 0 -1 0 0 0; 0 1 1 0 0 1 0 -1 0\n",
    );
    assert_eq!(vheat(&d, &["steady-ns", "solve", "--config", &c]).status.code(), Some(4));
    fs::remove_dir_all(&d).unwrap();
}

#[test]
fn config_errors_exit_with_code_two() {
    let d = scratch("errors");
    let c = config(&d, "bad.cfg", "kn = 0\nf0 = 2\n");
    let o = vheat(&d, &["bgk", "run", "--config", &c]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("kn"));
    let c = config(&d, "dup.cfg", "kn = 0.1\nf0 = 2\nf0 = 3\n");
    let o = vheat(&d, &["dsmc", "run", "--config", &c]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 3"));
    let o = Command::new(env!("CARGO_BIN_EXE_vheat"))
        .args(["--out", &d.display().to_string(), "dsmc", "run", "--config", &config(&d, "ok.cfg", "kn = 0.1\nf0 = 2\n")])
        .env("VHEAT_WORKERS", "zero")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    fs::remove_dir_all(&d).unwrap();
}

#[test]
fn moments_verify_passes() {
    let d = scratch("moments");
    let o = vheat(&d, &["moments-verify"]);
    let run = run_dir(&o);
    let csv = fs::read_to_string(run.join("moments.csv")).unwrap();
    assert!(csv.starts_with("identity,max_abs_error,tolerance,passed\n"));
    assert!(!csv.contains(",false"));
    fs::remove_dir_all(&d).unwrap();
}

//! End-to-end runs of the `nlplab` binary: output determinism, strict
//! config handling, exit codes, and the shape of the emitted files.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_nlplab")
}

fn tmp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("nlplab-test-{tag}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_cfg(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path
}

fn run(args: &[&str]) -> Output {
    Command::new(bin())
        .args(args)
        .output()
        .expect("binary runs")
}

const KERNEL_A2: &str = "\
[kernel]
psi.shape = box
psi.amplitude = 0.5
psi.dimension = 1
map.matrix = [2.0]
map.blocks = [real(2.0, 1)]
map.conjugation = [1.0]
";

#[test]
fn eigen_outputs_and_determinism() {
    let dir = tmp_dir("eigen");
    let cfg = write_cfg(
        &dir,
        "eigen.cfg",
        &format!(
            "[run]\nseed = 5\n\n{KERNEL_A2}\n[spectral]\np = 2.0\nradii = [2.0, 4.0]\nh = 0.25\nmax_iters = 40000\n"
        ),
    );
    let out1 = dir.join("a");
    let out2 = dir.join("b");
    for out in [&out1, &out2] {
        let r = run(&[
            "eigen",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(
            r.status.success(),
            "stderr: {}",
            String::from_utf8_lossy(&r.stderr)
        );
    }
    for name in ["sweep.csv", "summary.json"] {
        let a = std::fs::read(out1.join(name)).unwrap();
        let b = std::fs::read(out2.join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between identical runs");
    }
    // the echoes differ only in the out path itself
    let strip = |p: &Path| -> String {
        std::fs::read_to_string(p.join("effective.cfg"))
            .unwrap()
            .lines()
            .filter(|l| !l.starts_with("out = "))
            .collect::<Vec<_>>()
            .join("\n")
    };
    assert_eq!(strip(&out1), strip(&out2));
    assert!(std::fs::read_to_string(out1.join("effective.cfg"))
        .unwrap()
        .contains("seed = 5"));
    let summary = std::fs::read_to_string(out1.join("summary.json")).unwrap();
    assert!(
        summary.contains("\"closed_form\": 1.7157287525380985e-1"),
        "{summary}"
    );
    let sweep = std::fs::read_to_string(out1.join("sweep.csv")).unwrap();
    assert!(sweep.starts_with("R,h,p,lambda_est,iterations,residual\n"));
    assert_eq!(sweep.lines().count(), 3);
}

#[test]
fn eigen_identity_map_closed_form_zero() {
    let dir = tmp_dir("eigen-id");
    let cfg = write_cfg(
        &dir,
        "id.cfg",
        "[kernel]\npsi.shape = box\npsi.amplitude = 0.5\npsi.dimension = 1\nmap.matrix = [1.0]\n\n\
         [spectral]\np = 2.0\nradii = [2.0]\nh = 0.25\nmax_iters = 20000\n",
    );
    let out = dir.join("out");
    let r = run(&[
        "eigen",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(r.status.success());
    let summary = std::fs::read_to_string(out.join("summary.json")).unwrap();
    assert!(
        summary.contains("\"closed_form\": 0.0000000000000000e0"),
        "{summary}"
    );
}

#[test]
fn unknown_key_exits_with_config_code() {
    let dir = tmp_dir("badkey");
    let cfg = write_cfg(
        &dir,
        "bad.cfg",
        &format!("{KERNEL_A2}\n[spectral]\np = 2.0\nradii = [2.0]\nh = 0.25\nwibble = 3\n"),
    );
    let r = run(&["eigen", "--config", cfg.to_str().unwrap()]);
    assert_eq!(r.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&r.stderr).contains("wibble"));
}

#[test]
fn singular_matrix_exits_with_config_code() {
    let dir = tmp_dir("singular");
    let cfg = write_cfg(
        &dir,
        "singular.cfg",
        "[kernel]\npsi.shape = box\npsi.amplitude = 0.5\npsi.dimension = 2\n\
         map.matrix = [1.0, 2.0, 0.5, 1.0]\n\n[spectral]\np = 2.0\nradii = [2.0]\nh = 0.5\n",
    );
    let r = run(&["eigen", "--config", cfg.to_str().unwrap()]);
    assert_eq!(r.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&r.stderr).contains("invertible"));
}

#[test]
fn minimizers_requires_seed_and_threads_do_not_change_output() {
    let dir = tmp_dir("minimizers");
    let base = format!("{KERNEL_A2}\n[minimizers]\np = 2.0\nn_list = [1, 10]\nsamples = 200000\n");
    let cfg = write_cfg(&dir, "min.cfg", &base);
    // no seed anywhere: the Monte Carlo column cannot run
    let r = run(&["minimizers", "--config", cfg.to_str().unwrap()]);
    assert_eq!(r.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&r.stderr).contains("seed"));

    let out1 = dir.join("t1");
    let out4 = dir.join("t4");
    for (out, threads) in [(&out1, "1"), (&out4, "4")] {
        let r = run(&[
            "minimizers",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--seed",
            "9",
            "--threads",
            threads,
        ]);
        assert!(
            r.status.success(),
            "stderr: {}",
            String::from_utf8_lossy(&r.stderr)
        );
    }
    let a = std::fs::read(out1.join("upper_bound.csv")).unwrap();
    let b = std::fs::read(out4.join("upper_bound.csv")).unwrap();
    assert_eq!(a, b, "thread count changed the Monte Carlo bytes");

    let table = String::from_utf8(a).unwrap();
    let mut bounds = Vec::new();
    for line in table.lines().skip(1) {
        let bound: f64 = line.split(',').nth(4).unwrap().parse().unwrap();
        bounds.push(bound);
    }
    assert!(
        bounds[1] < bounds[0],
        "upper bound must tighten with n: {bounds:?}"
    );
    assert!(bounds.iter().all(|&b| b >= 0.17157287525380985 - 1e-12));
}

#[test]
fn evolve_zero_field_writes_trajectory_then_fails_fit() {
    let dir = tmp_dir("evolve-zero");
    let cfg = write_cfg(
        &dir,
        "zero.cfg",
        &format!(
            "{KERNEL_A2}\n[evolve]\np = 2.0\nhalf_width = 2.0\nh = 0.25\nt_final = 2.0\n\
             u0.kind = zero\nfit.regime = exponential\n"
        ),
    );
    let out = dir.join("out");
    let r = run(&[
        "evolve",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(r.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&r.stderr).contains("nonpositive norms"));
    let traj = std::fs::read_to_string(out.join("trajectory.csv")).unwrap();
    assert!(traj.lines().count() > 2);
    for line in traj.lines().skip(1) {
        let l2: f64 = line.split(',').nth(2).unwrap().parse().unwrap();
        assert_eq!(l2, 0.0);
    }
}

#[test]
fn evolve_decay_run_emits_law_and_snapshots() {
    let dir = tmp_dir("evolve-decay");
    let cfg = write_cfg(
        &dir,
        "decay.cfg",
        &format!(
            "{KERNEL_A2}\n[evolve]\np = 2.0\nhalf_width = 6.0\nh = 0.125\nt_final = 30.0\n\
             boundary = absorbing\nu0.kind = indicator\nu0.radius = 1.0\n\
             fit.regime = exponential\nsnapshot_every = 100\n"
        ),
    );
    let out = dir.join("out");
    let r = run(&[
        "evolve",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(
        r.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&r.stderr)
    );
    // the truncation monitor must have warned: mass reaches the boundary fast
    assert!(String::from_utf8_lossy(&r.stderr).contains("boundary mass"));
    let decay = std::fs::read_to_string(out.join("decay.json")).unwrap();
    assert!(decay.contains("\"regime\": \"exponential\""));
    let value: f64 = decay
        .lines()
        .find(|l| l.contains("\"value\""))
        .and_then(|l| l.split(':').nth(1))
        .map(|s| s.trim().trim_end_matches(',').parse().unwrap())
        .unwrap();
    assert!(value >= 0.08, "fitted rate {value}");
    assert!(out.join("snapshot_0000.csv").exists());
    let snap = std::fs::read_to_string(out.join("snapshot_0000.csv")).unwrap();
    assert!(snap.starts_with("# {\"d\": 1"));
    assert!(snap.lines().nth(1).unwrap().starts_with("x_1,value"));
}

#[test]
fn pinf_table_and_staircase() {
    let dir = tmp_dir("pinf");
    let cfg = write_cfg(
        &dir,
        "pinf.cfg",
        &format!(
            "{KERNEL_A2}\n[pinf]\np_list = [2.0, 4.0, 8.0, 16.0, 32.0]\nepsilons = [0.5, 0.25]\nh = 0.125\n"
        ),
    );
    let out = dir.join("out");
    let r = run(&[
        "pinf",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(
        r.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&r.stderr)
    );
    let table = std::fs::read_to_string(out.join("pinf.csv")).unwrap();
    let roots: Vec<f64> = table
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(2).unwrap().parse().unwrap())
        .collect();
    assert!(
        roots.windows(2).all(|w| w[1] < w[0]),
        "roots must decrease: {roots:?}"
    );
    assert!(*roots.last().unwrap() < 0.25);

    let stair = std::fs::read_to_string(out.join("staircase.csv")).unwrap();
    for line in stair.lines().skip(1) {
        let mut cols = line.split(',');
        let eps: f64 = cols.next().unwrap().parse().unwrap();
        let q: f64 = cols.next().unwrap().parse().unwrap();
        assert!(q <= eps + 1e-12, "staircase eps {eps} has Q_inf {q}");
    }
}

#[test]
fn usage_errors() {
    let r = run(&[]);
    assert_eq!(r.status.code(), Some(2));
    let r = run(&["frobnicate", "--config", "/nonexistent"]);
    assert_eq!(r.status.code(), Some(2));
    let r = run(&["eigen"]);
    assert_eq!(r.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&r.stderr).contains("--config"));
}

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = r#"
[mesh]
counts = [12, 6]

[model]
final_time = 3e-4

[output]
snapshot_times = [0.0, 3e-4]

[bench]
steps = 2
param_steps = 2
meshes = [[8, 4], [12, 6]]
param_mesh = [8, 4]
eps_list = [1e-2, 1.0]
tau_list = [1e-6, 1e-4]
eoc_taus = [1e-4, 2e-4]
eoc_tau_ref = 5e-5
eoc_final_time = 4e-4
eig_meshes = [[4, 2], [6, 3]]
eig_taus = [1e-4, 1.0]
eig_eps = [1e-3, 10.0]
"#;

fn chmorph(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_chmorph"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn setup() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("small.toml"), SMALL).unwrap();
    dir
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn run_writes_snapshots_stats_and_config() {
    let dir = setup();
    let o = chmorph(dir.path(), &["--config", "small.toml", "--out", "a", "run"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = dir.path().join("a");
    for name in ["config.toml", "stats.csv", "state_000000.vtk", "state_000003.vtk", "mask_000003.pgm"] {
        assert!(out.join(name).exists(), "missing {name}");
    }
    let stats = fs::read_to_string(out.join("stats.csv")).unwrap();
    let mut lines = stats.lines();
    assert_eq!(lines.next(), Some("step,species,iterations,residual,seconds"));
    assert_eq!(lines.count(), 6);
    let copied = chmorph::parse_config(&fs::read_to_string(out.join("config.toml")).unwrap()).unwrap();
    assert_eq!(copied.mesh.counts, vec![12, 6]);
    assert_eq!(copied.output.dir, Path::new("a"));
}

#[test]
fn deterministic_runs_are_byte_identical() {
    let dir = setup();
    for out in ["a", "b"] {
        let o = chmorph(dir.path(), &["--config", "small.toml", "--out", out, "--deterministic", "run"]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    let a = fs::read(dir.path().join("a/state_000003.vtk")).unwrap();
    let b = fs::read(dir.path().join("b/state_000003.vtk")).unwrap();
    assert_eq!(a, b);
    let o = chmorph(dir.path(), &["--config", "small.toml", "--out", "c", "--seed", "9", "run"]);
    assert_eq!(o.status.code(), Some(0));
    assert_ne!(a, fs::read(dir.path().join("c/state_000003.vtk")).unwrap());
}

#[test]
fn config_errors_exit_with_two() {
    let dir = setup();
    fs::write(dir.path().join("bad.toml"), "[model]\ntau = -1.0\n").unwrap();
    let o = chmorph(dir.path(), &["--config", "bad.toml", "run"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 2"), "{}", stderr(&o));

    fs::write(dir.path().join("typo.toml"), "[solver]\nouter_toll = 1e-7\n").unwrap();
    let o = chmorph(dir.path(), &["--config", "typo.toml", "run"]);
    assert_eq!(o.status.code(), Some(2));

    let o = chmorph(dir.path(), &["--seed", "x", "run"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn solver_failure_exits_with_three() {
    let dir = setup();
    let text = format!("{SMALL}\n[solver]\nmax_iter = 1\n");
    fs::write(dir.path().join("tight.toml"), text).unwrap();
    let o = chmorph(dir.path(), &["--config", "tight.toml", "--out", "o", "run"]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(dir.path().join("o/stats.csv").exists());
}

#[test]
fn divergence_exits_with_four() {
    let dir = setup();
    let text = SMALL
        .replace("final_time = 3e-4", "final_time = 20.0\ntau = 0.1\neps_p = 1e-7\neps_nfa = 1e-7")
        .replace("snapshot_times = [0.0, 3e-4]", "snapshot_times = []");
    fs::write(dir.path().join("wild.toml"), text).unwrap();
    let o = chmorph(dir.path(), &["--config", "wild.toml", "--out", "o", "run"]);
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
    assert!(stderr(&o).contains("diverged"));
}

#[test]
fn binarize_writes_mask() {
    let dir = setup();
    let o = chmorph(dir.path(), &["--config", "small.toml", "--out", "a", "run"]);
    assert_eq!(o.status.code(), Some(0));
    let o = chmorph(
        dir.path(),
        &["--config", "small.toml", "--out", "m", "binarize", "--input", "a/state_000003.vtk"],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let pgm = fs::read_to_string(dir.path().join("m/state_000003_mask.pgm")).unwrap();
    assert!(pgm.starts_with("P2\n12 6\n255\n"));
    let vtk = chmorph::io::read_vtk(&dir.path().join("m/state_000003_mask.vtk")).unwrap();
    assert!(vtk.field("mask").unwrap().iter().all(|&v| v == 0.0 || v == 1.0));

    let o = chmorph(dir.path(), &["--out", "m", "binarize", "--input", "a/stats.csv"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn study_commands_write_tables() {
    let dir = setup();
    let cases = [
        ("bench-mesh", "bench_mesh.csv", 3),
        ("bench-params", "bench_eps.csv", 3),
        ("eig-check", "eig.csv", 9),
        ("eoc", "eoc.csv", 5),
    ];
    for (cmd, file, lines) in cases {
        let o = chmorph(dir.path(), &["--config", "small.toml", "--out", cmd, cmd]);
        assert_eq!(o.status.code(), Some(0), "{cmd}: {}", stderr(&o));
        let text = fs::read_to_string(dir.path().join(cmd).join(file)).unwrap();
        assert_eq!(text.lines().count(), lines, "{cmd}:\n{text}");
    }
}

#[test]
fn bench_mode_selects_a_study_for_run() {
    let dir = setup();
    let text = SMALL.replace("[bench]\n", "[bench]\nmode = \"eig\"\n");
    fs::write(dir.path().join("eig.toml"), text).unwrap();
    let o = chmorph(dir.path(), &["--config", "eig.toml", "--out", "o", "run"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(dir.path().join("o/eig.csv").exists());
    assert!(!dir.path().join("o/stats.csv").exists());
}

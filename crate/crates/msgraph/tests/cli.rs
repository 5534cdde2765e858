use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn scenarios() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn msgraph(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_msgraph")).args(args).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn simulate_corridor(out: &Path, extra: &[&str]) {
    let dir = scenarios().join("corridor");
    let (w, t) = (dir.join("world.toml"), dir.join("trajectory.toml"));
    let mut args = vec!["simulate", "--world", s(&w), "--trajectory", s(&t), "--out", s(out)];
    args.extend(extra);
    let o = msgraph(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn help_documents_every_flag() {
    let cases: [(&str, &[&str]); 4] = [
        ("simulate", &["--world", "--trajectory", "--noise", "--seed", "--out"]),
        ("slam", &["--observations", "--dictionary", "--config", "--mode", "--out"]),
        ("eval", &["--estimate", "--ground-truth", "--align", "--out"]),
        ("experiment", &["--config", "--out"]),
    ];
    for (cmd, flags) in cases {
        let o = msgraph(&[cmd, "--help"]);
        assert_eq!(o.status.code(), Some(0));
        let text = String::from_utf8(o.stdout).unwrap();
        for f in flags {
            assert!(text.contains(f), "{cmd} --help lacks {f}");
        }
    }
}

#[test]
fn usage_errors_exit_with_one() {
    assert_eq!(msgraph(&[]).status.code(), Some(1));
    assert_eq!(msgraph(&["slam"]).status.code(), Some(1));
    assert_eq!(msgraph(&["eval", "--estimate", "a", "--ground-truth", "b", "--out", "c", "--align", "affine"]).status.code(), Some(1));
}

#[test]
fn eval_of_identical_trajectories_reports_zero() {
    let tmp = tempfile::tempdir().unwrap();
    simulate_corridor(tmp.path(), &[]);
    let gt = tmp.path().join("ground_truth.txt");
    let o = msgraph(&["eval", "--estimate", s(&gt), "--ground-truth", s(&gt), "--align", "none", "--out", s(tmp.path())]);
    assert!(o.status.success());
    let report: toml::Table = std::fs::read_to_string(tmp.path().join("ate.toml")).unwrap().parse().unwrap();
    assert_eq!(report["rmse"].as_float(), Some(0.0));
    assert_eq!(report["std"].as_float(), Some(0.0));
    let csv = std::fs::read_to_string(tmp.path().join("errors.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("frame_index,timestamp,error_m"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len() as i64, report["matched"].as_integer().unwrap());
    assert!(rows.iter().all(|r| r.ends_with(",0")));
}

#[test]
fn simulate_is_seeded() {
    let tmp = tempfile::tempdir().unwrap();
    let noise = scenarios().join("corridor/noise.toml");
    let run = |name: &str, seed: &str| {
        let out = tmp.path().join(name);
        simulate_corridor(&out, &["--noise", s(&noise), "--seed", seed]);
        std::fs::read(out.join("observations.rec")).unwrap()
    };
    let (a, b, c) = (run("a", "3"), run("b", "3"), run("c", "4"));
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn slam_outputs_and_modes() {
    let tmp = tempfile::tempdir().unwrap();
    simulate_corridor(tmp.path(), &[]);
    let obs = tmp.path().join("observations.rec");
    let dict = tmp.path().join("dictionary.txt");
    for mode in ["full", "baseline"] {
        let out = tmp.path().join(mode);
        let o = msgraph(&["slam", "--observations", s(&obs), "--dictionary", s(&dict), "--mode", mode, "--out", s(&out)]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let map = std::fs::read_to_string(out.join("map.txt")).unwrap();
        assert!(map.starts_with("msgraph-map 1\n"));
        let rooms = map.lines().find(|l| l.starts_with("rooms ")).unwrap();
        // room detection runs in both modes; only the optimization differs
        assert_eq!(rooms, "rooms 1");
        assert!(std::fs::metadata(out.join("events.log")).unwrap().len() > 0);
    }
    let full = std::fs::read_to_string(tmp.path().join("full/trajectory.txt")).unwrap();
    let base = std::fs::read_to_string(tmp.path().join("baseline/trajectory.txt")).unwrap();
    assert_eq!(full.lines().count(), base.lines().count());
}

#[test]
fn data_errors_exit_with_two_and_name_the_line() {
    let tmp = tempfile::tempdir().unwrap();
    let rec = tmp.path().join("bad.rec");
    std::fs::write(&rec, "msgraph-record 1\n0 odom 0 0 0 0 0 0 1 gt 0 0 0 0 0 0 1 markers 0 points 0\n0.1 odom 1 2\n").unwrap();
    let dict = tmp.path().join("d.txt");
    std::fs::write(&dict, "corridor: 1,2\n").unwrap();
    let o = msgraph(&["slam", "--observations", s(&rec), "--dictionary", s(&dict), "--out", s(tmp.path())]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8(o.stderr).unwrap();
    assert!(err.contains("bad.rec:3"), "{err}");

    let world = tmp.path().join("world.toml");
    std::fs::write(&world, "format_version = 1\n\n[[walls]]\ncorner = [0.0, 0.0, 0.0]\nlength = 1.0\nheight = 2.0\nfacing = \"+x\"\ncolour = \"red\"\n").unwrap();
    let traj = scenarios().join("corridor/trajectory.toml");
    let o = msgraph(&["simulate", "--world", s(&world), "--trajectory", s(&traj), "--out", s(tmp.path())]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8(o.stderr).unwrap().contains("world.toml:8"));

    let missing = tmp.path().join("missing.toml");
    let o = msgraph(&["experiment", "--config", s(&missing), "--out", s(tmp.path())]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn noiseless_experiment_shows_no_difference() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = scenarios().join("corridor");
    let cfg = tmp.path().join("exp.toml");
    std::fs::write(
        &cfg,
        format!(
            "format_version = 1\nworld = {:?}\ntrajectory = {:?}\nseed = 5\nruns = 2\n",
            s(&dir.join("world.toml")),
            s(&dir.join("trajectory.toml"))
        ),
    )
    .unwrap();
    let out = tmp.path().join("out");
    let o = msgraph(&["experiment", "--config", s(&cfg), "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let summary: toml::Table = std::fs::read_to_string(out.join("summary.toml")).unwrap().parse().unwrap();
    assert!(summary["median_improvement"].as_float().unwrap().abs() < 1e-3);
    let csv = std::fs::read_to_string(out.join("summary.csv")).unwrap();
    for row in csv.lines().skip(1) {
        let f: Vec<f64> = row.split(',').skip(1).map(|x| x.parse().unwrap()).collect();
        assert!(f[0] < 1e-6 && f[1] < 1e-6, "{row}");
    }
    for seed in [5, 6] {
        for label in ["full", "baseline"] {
            assert!(out.join(format!("seed_{seed}/{label}.csv")).exists());
        }
    }
}

#[test]
fn experiment_requires_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("exp.toml");
    std::fs::write(&cfg, "format_version = 1\nworld = \"w.toml\"\ntrajectory = \"t.toml\"\nruns = 2\n").unwrap();
    let o = msgraph(&["experiment", "--config", s(&cfg), "--out", s(tmp.path())]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8(o.stderr).unwrap().contains("seed"));
}

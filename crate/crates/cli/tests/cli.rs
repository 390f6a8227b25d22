use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn skm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_skm"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const HALFSPACE: &str = r#"{"A":[[1,0]],"b":[0],"C":[],"d":[],"y0":[2,0]}"#;
const LINE_WITH_FLOOR: &str = r#"{"A":[[-1,0]],"b":[-0.8],"C":[[1,1]],"d":[1],"y0":[0,0]}"#;

#[test]
fn feasible_input_takes_no_iterations() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "f.json", r#"{"A":[[1,0]],"b":[0],"C":[],"d":[],"y0":[-1,4]}"#);
    let out_path = dir.path().join("r.json");
    let o = skm(&["project", "--input", &input, "--output", out_path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let json = fs::read_to_string(out_path).unwrap();
    assert!(json.contains("\"already_feasible\""));
    assert!(json.contains("\"iterations\": 0"));
}

#[test]
fn bad_delta_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "h.json", HALFSPACE);
    let o = skm(&["project", "--input", &input, "--delta", "2.5"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("delta must be in (0,2)"));
}

#[test]
fn naive_flag_runs_the_baseline() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "l.json", LINE_WITH_FLOOR);
    let tskm = skm(&["project", "--input", &input]);
    let naive = skm(&["project", "--input", &input, "--naive"]);
    assert_eq!(tskm.status.code(), Some(0));
    assert_eq!(naive.status.code(), Some(0));
    let field = |o: &Output, key: &str| -> f64 {
        stdout(o)
            .lines()
            .find_map(|l| l.strip_prefix(key))
            .unwrap()
            .parse()
            .unwrap()
    };
    let worst = |o: &Output| field(o, "max_ineq_violation: ").max(field(o, "max_eq_violation: "));
    assert!(field(&tskm, "max_eq_violation: ") <= 1e-12);
    assert!(worst(&tskm) <= 1e-6);
    // the baseline stops within tolerance but not exactly on the constraint set
    assert!(worst(&naive) > 0.0 && worst(&naive) <= 1e-6);
    assert!(field(&naive, "iterations: ") > field(&tskm, "iterations: "));
}

#[test]
fn iteration_cap_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "l.json", LINE_WITH_FLOOR);
    let o = skm(&["project", "--input", &input, "--naive", "--max-iters", "1"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn invalid_inputs_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let zero_row = write(dir.path(), "z.json", r#"{"A":[[0,0]],"b":[1],"C":[],"d":[]}"#);
    let o = skm(&["project", "--input", &zero_row]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("zero"), "{}", stderr(&o));

    let missing_b = write(dir.path(), "m.json", r#"{"A":[[1,0]],"C":[],"d":[]}"#);
    assert_eq!(skm(&["project", "--input", &missing_b]).status.code(), Some(1));
    assert_eq!(skm(&["project", "--input", "/nonexistent/x.json"]).status.code(), Some(1));
    assert_eq!(skm(&["project"]).status.code(), Some(1));
    assert_eq!(skm(&["--help"]).status.code(), Some(0));
}

#[test]
fn gradcheck_on_halfspace_passes_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "h.json", HALFSPACE);
    let csv = dir.path().join("g.csv");
    let o = skm(&["gradcheck", "--input", &input, "--csv", csv.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let text = fs::read_to_string(csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "path,seed,max_rel_error,nondifferentiable_steps,active_ties,excluded"
    );
    for line in lines {
        let err: f64 = line.split(',').nth(2).unwrap().parse().unwrap();
        assert!(err < 1e-8);
    }
}

#[test]
fn gradcheck_excludes_tied_paths() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(
        dir.path(),
        "t.json",
        r#"{"A":[[1,1],[1,1]],"b":[0,0],"C":[],"d":[],"y0":[1,2]}"#,
    );
    let o = skm(&["gradcheck", "--input", &input, "--beta", "2", "--sampling", "without", "--paths", "50"]);
    let text = stdout(&o);
    let excluded: usize = text
        .lines()
        .find_map(|l| l.strip_prefix("excluded: "))
        .unwrap()
        .parse()
        .unwrap();
    assert!(excluded > 0, "{text}");
}

#[test]
fn gradcheck_rejects_nonpositive_eps() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "h.json", HALFSPACE);
    let o = skm(&["gradcheck", "--input", &input, "--eps", "0"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("eps must be positive"));
}

#[test]
fn sweep_with_no_trials_writes_only_the_header() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("s.csv");
    let o = skm(&[
        "sweep", "--param", "delta", "--values", "0.5,1.0", "--dims", "8", "--trials", "0",
        "--csv", csv.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(
        fs::read_to_string(csv).unwrap(),
        "param_value,dim,trial,iterations,wall_time_ns,max_violation,distance_moved,oracle_distance\n"
    );
}

#[test]
fn sweep_rows_follow_value_dim_trial_order() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("s.csv");
    let o = skm(&[
        "sweep", "--param", "beta", "--values", "1,3", "--dims", "6,30", "--trials", "2",
        "--csv", csv.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = fs::read_to_string(csv).unwrap();
    let rows: Vec<Vec<&str>> = text.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 8);
    let keys: Vec<(&str, &str, &str)> = rows.iter().map(|r| (r[0], r[1], r[2])).collect();
    assert_eq!(keys[0], ("1", "6", "0"));
    assert_eq!(keys[3], ("1", "30", "1"));
    assert_eq!(keys[4], ("3", "6", "0"));
    // oracle distance only within the enumeration budget
    assert!(!rows[0][7].is_empty());
    assert!(rows[2][7].is_empty());
    assert!(rows.iter().all(|r| !r[4].is_empty()));
}

#[test]
fn sweep_rejects_bad_ranges() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("s.csv");
    let o = skm(&[
        "sweep", "--param", "delta", "--values", "1.8:0.2:0.2", "--dims", "8", "--trials", "1",
        "--csv", csv.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn bench_single_trial_gives_one_row_per_mode() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("b.csv");
    let o = skm(&[
        "bench", "--dims", "12", "--trials", "1", "--modes", "tskm,naive,gskm,nskm,mskm",
        "--csv", csv.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = fs::read_to_string(csv).unwrap();
    let modes: Vec<&str> = text.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(modes, ["tskm", "naive", "gskm", "nskm", "mskm"]);
    assert_eq!(stdout(&o).lines().count(), 5);
}

#[test]
fn thread_count_does_not_change_output() {
    let dir = tempfile::tempdir().unwrap();
    let run = |threads: &str, name: &str| {
        let csv = dir.path().join(name);
        let o = Command::new(env!("CARGO_BIN_EXE_skm"))
            .env("SKM_THREADS", threads)
            .args([
                "sweep", "--param", "delta", "--values", "0.5:1.5:0.5", "--dims", "8,16",
                "--trials", "3", "--seed", "4", "--no-timing", "--csv", csv.to_str().unwrap(),
            ])
            .output()
            .unwrap();
        assert_eq!(o.status.code(), Some(0));
        fs::read(csv).unwrap()
    };
    assert_eq!(run("1", "a.csv"), run("4", "b.csv"));

    let bad = Command::new(env!("CARGO_BIN_EXE_skm"))
        .env("SKM_THREADS", "many")
        .args(["bench", "--dims", "4", "--trials", "1", "--csv", dir.path().join("c.csv").to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(1));
}

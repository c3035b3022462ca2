use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_follownet");

fn follownet(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN)
        .current_dir(dir)
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn write(path: &Path, text: &str) {
    fs::write(path, text).unwrap();
}

fn simulated(dir: &Path, n_agents: usize, weeks: u32) {
    write(
        &dir.join("sim.toml"),
        &format!(
            "weeks = {weeks}\n[simulate]\nn_agents = {n_agents}\nweeks = {weeks}\ncandidate_rate = 4\ntheta_edges = -2.5\nobserve_prob = 0.8\n"
        ),
    );
    let out = follownet(dir, &["-c", "sim.toml", "--seed", "11", "--out", "sim", "simulate"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

fn run_config(dir: &Path, weeks: u32, realizations: usize) -> PathBuf {
    let p = dir.join("run.toml");
    write(
        &p,
        &format!(
            "weeks = {weeks}\n[input]\nevents = \"sim/events.csv\"\nscores = \"sim/scores.csv\"\n[nulls]\nrealizations = {realizations}\n"
        ),
    );
    p
}

fn files_under(root: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p.strip_prefix(root).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

fn assert_same_tree(a: &Path, b: &Path) {
    let fa = files_under(a);
    assert_eq!(fa, files_under(b));
    for f in fa {
        assert!(
            fs::read(a.join(&f)).unwrap() == fs::read(b.join(&f)).unwrap(),
            "{} differs",
            f.display()
        );
    }
}

#[test]
fn simulator_output_round_trips_through_build() {
    let dir = tempfile::tempdir().unwrap();
    simulated(dir.path(), 120, 12);
    run_config(dir.path(), 12, 5);
    let out = follownet(dir.path(), &["-c", "run.toml", "--out", "res", "build"]);
    assert!(out.status.success());
    assert!(out.stderr.is_empty(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("res/build.json")).unwrap()).unwrap();
    let sim_events = fs::read_to_string(dir.path().join("sim/events.csv")).unwrap();
    let n_rows = sim_events.lines().filter(|l| !l.starts_with('#')).count() - 1;
    assert_eq!(summary["events"], n_rows);
    assert_eq!(summary["collapsed_duplicates"], 0);
    assert_eq!(summary["weeks"], 12);
}

#[test]
fn corrupted_csv_is_an_input_error_with_line() {
    let dir = tempfile::tempdir().unwrap();
    write(
        &dir.path().join("events.csv"),
        "follower,followee,week\na,b,1\nb,c,x\n",
    );
    write(&dir.path().join("scores.csv"), "agent,week,score\na,1,5\n");
    write(
        &dir.path().join("run.toml"),
        "weeks = 4\n[input]\nevents = \"events.csv\"\nscores = \"scores.csv\"\n",
    );
    let out = follownet(dir.path(), &["-c", "run.toml", "--out", "res", "build"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 3"), "{err}");
    assert!(err.contains("events.csv"), "{err}");
}

#[test]
fn missing_input_and_bad_config_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    write(
        &dir.path().join("run.toml"),
        "[input]\nevents = \"nope.csv\"\nscores = \"nope.csv\"\n",
    );
    let out = follownet(dir.path(), &["-c", "run.toml", "build"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("does not exist"));

    write(&dir.path().join("bad.toml"), "weeks = \"many\"\n");
    let out = follownet(dir.path(), &["-c", "bad.toml", "simulate"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn rebuild_gives_identical_digests() {
    let dir = tempfile::tempdir().unwrap();
    simulated(dir.path(), 80, 10);
    run_config(dir.path(), 10, 5);
    for out in ["a", "b"] {
        let o = follownet(dir.path(), &["-c", "run.toml", "--out", out, "build"]);
        assert!(o.status.success());
    }
    let digests = |d: &str| {
        let v: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.path().join(d).join("build.json")).unwrap())
                .unwrap();
        v["outputs"].clone()
    };
    assert_eq!(digests("a"), digests("b"));
    assert_same_tree(&dir.path().join("a"), &dir.path().join("b"));
}

#[test]
fn stages_report_missing_prerequisites() {
    let dir = tempfile::tempdir().unwrap();
    simulated(dir.path(), 80, 10);
    run_config(dir.path(), 10, 5);
    let out = follownet(dir.path(), &["-c", "run.toml", "--out", "res", "metrics"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("follownet build"));

    assert!(follownet(dir.path(), &["-c", "run.toml", "--out", "res", "build"]).status.success());
    let out = follownet(dir.path(), &["-c", "run.toml", "--out", "res", "homophily"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("follownet nulls"), "{err}");
}

#[test]
fn unfittable_selection_is_an_analysis_failure() {
    // Every tie exists from week 1 on, so no block has a formation event.
    let dir = tempfile::tempdir().unwrap();
    write(
        &dir.path().join("events.csv"),
        "follower,followee,week\na,b,1\nb,c,1\nc,a,1\nd,a,1\n",
    );
    write(
        &dir.path().join("scores.csv"),
        "agent,week,score\na,1,10\nb,1,40\nc,1,70\nd,1,90\n",
    );
    write(
        &dir.path().join("run.toml"),
        "weeks = 4\n[input]\nevents = \"events.csv\"\nscores = \"scores.csv\"\n",
    );
    assert!(follownet(dir.path(), &["-c", "run.toml", "--out", "res", "build"]).status.success());
    let out = follownet(dir.path(), &["-c", "run.toml", "--out", "res", "selection"]);
    assert_eq!(out.status.code(), Some(1));
    let table = fs::read_to_string(dir.path().join("res/selection.csv")).unwrap();
    assert!(table.contains("separation"), "{table}");
}

#[test]
fn all_on_500_agents_is_complete_and_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    simulated(dir.path(), 500, 52);
    run_config(dir.path(), 52, 100);
    let out = follownet(dir.path(), &["-c", "run.toml", "--out", "one", "all"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let root = dir.path().join("one");
    for table in ["metrics", "nulls", "homophily", "selection", "influence"] {
        let text = fs::read_to_string(root.join(format!("{table}.csv"))).unwrap();
        assert!(text.lines().count() > 2, "{table} is empty");
        assert!(root.join(format!("{table}.json")).is_file());
    }
    let nulls = fs::read_to_string(root.join("nulls.csv")).unwrap();
    assert_eq!(nulls.lines().count(), 2 + 52 * 2 * 100);
    let selection = fs::read_to_string(root.join("selection.csv")).unwrap();
    assert_eq!(selection.lines().count(), 2 + 7);

    for f in files_under(&root) {
        let text = fs::read_to_string(root.join(&f)).unwrap();
        if f.extension().is_some_and(|e| e == "csv") {
            assert!(text.starts_with("# follownet "), "{}", f.display());
            assert!(text.lines().next().unwrap().contains(" seed=1 "));
        } else {
            let v: serde_json::Value = serde_json::from_str(&text).unwrap();
            assert_eq!(v["provenance"]["tool"], "follownet");
        }
    }

    // Same seeds and a different worker count reproduce every byte.
    let out = follownet(
        dir.path(),
        &["-c", "run.toml", "--out", "two", "--workers", "2", "all"],
    );
    assert!(out.status.success());
    assert_same_tree(&root, &dir.path().join("two"));

    // Running the stages one by one gives the same tables as `all`.
    for stage in ["build", "metrics", "nulls", "homophily", "selection", "influence"] {
        let out = follownet(dir.path(), &["-c", "run.toml", "--out", "staged", stage]);
        assert!(out.status.success(), "{stage}");
    }
    assert_same_tree(&root, &dir.path().join("staged"));

    let out = follownet(
        dir.path(),
        &["-c", "run.toml", "--out", "other", "--seed", "2", "nulls"],
    );
    assert_eq!(out.status.code(), Some(2));
}

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use decsig::cli::{InstanceFile, COMPARE_HEADER, SWEEP_HEADER};
use decsig::{bounds, LocationModel, SystemModel};

fn decsig(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_decsig")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn write_instance(dir: &Path, name: &str, system: &SystemModel) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, InstanceFile::from_system(system).to_json()).unwrap();
    path
}

fn example(dir: &Path) -> PathBuf {
    write_instance(dir, "example.json", &bounds::make_tightness_instance(2, 3.0).unwrap().system)
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn solve_modes_print_expected_numbers() {
    let dir = tempfile::tempdir().unwrap();
    let p = example(dir.path());
    let o = decsig(&["solve", path_str(&p), "--mode", "centralized"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("Th = 1.000000"));
    let o = decsig(&["solve", path_str(&p), "--mode", "decentralized", "--summary"]);
    let s = stdout(&o);
    assert!(s.contains("Th_D = 0.784610") && s.contains("Th_iso = (0.535898, 0.535898)"), "{s}");
    assert!(!s.contains("mechanism"));
    let o = decsig(&["solve", path_str(&p), "--mode", "no-info"]);
    assert!(stdout(&o).contains("Th = 0.000000"));
    let o = decsig(&["solve", path_str(&p), "--mode", "heterogeneous"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("Val_D = 0.784610"));
}

#[test]
fn exit_codes_follow_error_classes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();

    let malformed = d.join("malformed.json");
    std::fs::write(&malformed, "{\"locations\": [ {\"name\": \"a\",, }").unwrap();
    let o = decsig(&["solve", path_str(&malformed)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 1"));

    let unknown = d.join("unknown.json");
    std::fs::write(&unknown, r#"{"locations": [], "extra": 1}"#).unwrap();
    let o = decsig(&["solve", path_str(&unknown)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("extra"));

    let bad_prior = d.join("bad_prior.json");
    std::fs::write(
        &bad_prior,
        r#"{"locations": [{"name": "a", "states": ["g", "b"], "prior": [0.3, 0.3], "utility": [1, -1]}]}"#,
    )
    .unwrap();
    let o = decsig(&["solve", path_str(&bad_prior)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("locations[0].prior"));

    let o = decsig(&["solve", path_str(&d.join("missing.json"))]);
    assert_eq!(o.status.code(), Some(2));

    let o = decsig(&["solve", path_str(&example(d)), "--mode", "bogus"]);
    assert_eq!(o.status.code(), Some(2));

    // nonnegative mean breaks the heterogeneous precondition
    let easy = SystemModel::independent(vec![LocationModel::with_indexed_states("a", vec![0.6, 0.4], vec![1.0, -1.0])])
        .unwrap();
    let easy = write_instance(d, "easy.json", &easy);
    let o = decsig(&["solve", path_str(&easy), "--mode", "heterogeneous"]);
    assert_eq!(o.status.code(), Some(3));

    let joint = write_instance(d, "joint.json", &bounds::make_correlated_instance(2, 10.0).unwrap());
    let o = decsig(&["solve", path_str(&joint), "--mode", "decentralized"]);
    assert_eq!(o.status.code(), Some(3));
    let o = decsig(&["solve", path_str(&joint), "--mode", "decentralized", "--fallback", "--summary"]);
    assert_eq!(o.status.code(), Some(0));

    let o = decsig(&["verify", "nonsense"]);
    assert_eq!(o.status.code(), Some(2));
    let o = decsig(&["verify", "tightness", "--K", "5..2"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn verify_failure_prints_replayable_instance() {
    // demanding one unit of slack makes every guarantee check fail
    let o = decsig(&["verify", "tightness", "--K", "2", "--X", "3", "--tolerance=-1"]);
    assert_eq!(o.status.code(), Some(1));
    let s = stdout(&o);
    assert!(s.contains("FAIL"));
    let start = s.find('{').unwrap();
    let mut depth = 0;
    let mut end = start;
    for (i, ch) in s[start..].char_indices() {
        match ch {
            '{' => depth += 1,
            '}' => {
                depth -= 1;
                if depth == 0 {
                    end = start + i + 1;
                    break;
                }
            }
            _ => {}
        }
    }
    let sys = InstanceFile::parse(&s[start..end]).unwrap().to_system().unwrap();
    assert_eq!(sys.num_locations(), 2);
}

#[test]
fn verify_suites_pass_and_are_reproducible() {
    let a = decsig(&["verify", "independent-bound", "--K", "2..5", "--trials", "200", "--seed", "7"]);
    assert_eq!(a.status.code(), Some(0), "{}", stdout(&a));
    assert!(!stdout(&a).contains("FAIL"));
    let b = decsig(&["verify", "independent-bound", "--K", "2..5", "--trials", "200", "--seed", "7"]);
    assert_eq!(a.stdout, b.stdout);
    let c = decsig(&["verify", "independent-bound", "--K", "2..5", "--trials", "200", "--seed", "8"]);
    assert_ne!(a.stdout, c.stdout);
    let o = decsig(&["verify", "tightness", "--K", "2..4", "--X", "2,3,10"]);
    assert_eq!(o.status.code(), Some(0));
    let o = decsig(&["verify", "lemmas", "--trials", "10000"]);
    assert_eq!(o.status.code(), Some(0));
}

fn read_csv(text: &str) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r.records().map(|rec| rec.unwrap().iter().map(String::from).collect()).collect();
    (header, rows)
}

#[test]
fn compare_csv_schema() {
    let dir = tempfile::tempdir().unwrap();
    let o = decsig(&["compare", path_str(&example(dir.path()))]);
    assert_eq!(o.status.code(), Some(0));
    let (header, rows) = read_csv(&stdout(&o));
    assert_eq!(header, COMPARE_HEADER);
    let get = |name: &str| rows.iter().find(|r| r[0] == name).unwrap().clone();
    assert_eq!(get("centralized")[1].parse::<f64>().unwrap(), 1.0);
    let d = get("decentralized");
    assert!((d[1].parse::<f64>().unwrap() - 0.784609691).abs() < 1e-9);
    assert!(d[2].parse::<f64>().unwrap() >= 0.75);
    assert_eq!(d[3], "0.75");
    assert_eq!(get("full-info")[1], "0.25");
    assert_eq!(get("no-info")[1], "0");

    let single = SystemModel::independent(vec![LocationModel::with_indexed_states("a", vec![0.2, 0.8], vec![1.0, -1.0])])
        .unwrap();
    let o = decsig(&["compare", path_str(&write_instance(dir.path(), "single.json", &single))]);
    let (_, rows) = read_csv(&stdout(&o));
    let d = rows.iter().find(|r| r[0] == "decentralized").unwrap();
    assert_eq!((d[2].as_str(), d[3].as_str()), ("1", "1"));

    let joint = write_instance(dir.path(), "joint.json", &bounds::make_correlated_instance(2, 10.0).unwrap());
    let (_, rows) = read_csv(&stdout(&decsig(&["compare", path_str(&joint)])));
    let fb = rows.iter().find(|r| r[0] == "fallback").unwrap();
    assert!(fb[2].parse::<f64>().unwrap() >= 0.5 - 1e-7);
    assert_eq!(fb[3], "0.5");
}

#[test]
fn compare_includes_heterogeneous_row_for_mixed_payoffs() {
    let dir = tempfile::tempdir().unwrap();
    let loc = |v: f64| LocationModel::with_indexed_states("l", vec![0.2, 0.8], vec![1.0, -1.0]).with_payoff(v);
    let sys = SystemModel::independent(vec![loc(2.0), loc(1.0)]).unwrap();
    let o = decsig(&["compare", path_str(&write_instance(dir.path(), "het.json", &sys))]);
    let (_, rows) = read_csv(&stdout(&o));
    let h = rows.iter().find(|r| r[0] == "heterogeneous").unwrap();
    assert!((h[1].parse::<f64>().unwrap() - 1.04).abs() < 1e-9);
    assert!(h[2].parse::<f64>().unwrap() >= 0.75 - 1e-7);
}

#[test]
fn sweep_csv_schema_and_output_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep.csv");
    let o = decsig(&["sweep", "tightness", "--K", "2..6", "--X", "1000", "--output", path_str(&out)]);
    assert_eq!(o.status.code(), Some(0));
    assert!(o.stdout.is_empty());
    let (header, rows) = read_csv(&std::fs::read_to_string(&out).unwrap());
    assert_eq!(header, SWEEP_HEADER);
    assert_eq!(rows.len(), 5);
    for r in &rows {
        let nums: Vec<f64> = r.iter().map(|c| c.parse().unwrap()).collect();
        assert!(nums[4] >= nums[5] - 1e-9, "ratio below gamma: {r:?}");
    }
    let first = &rows[0];
    assert_eq!((first[5].as_str(), first[6].as_str(), first[7].as_str()), ("0.75", "0.5", "0.666666667"));

    let o = decsig(&["sweep", "correlated", "--K", "2..64"]);
    let (_, rows) = read_csv(&stdout(&o));
    assert_eq!(rows.len(), 63);
    assert!(rows.iter().all(|r| r[1].is_empty() && r[2].is_empty()));

    let o = decsig(&["sweep", "tightness", "--K", "2..3"]);
    assert_eq!(o.status.code(), Some(2));
    let o = decsig(&["sweep", "correlated", "--K", "2..3", "--X", "2"]);
    assert_eq!(o.status.code(), Some(2));
}

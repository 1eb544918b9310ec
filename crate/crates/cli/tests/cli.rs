use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn humanoid(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_humanoid"))
        .args(["--log", "error"])
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn bundled_motion(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../core/data/motions")
        .join(format!("{name}.toml"))
}

#[test]
fn lists_bundled_scenarios() {
    let o = humanoid(&["sim", "list"]);
    assert!(o.status.success());
    let names: Vec<String> = stdout(&o).lines().map(String::from).collect();
    assert_eq!(names, ["soccer", "fall", "obstacle"]);
}

#[test]
fn scenario_exit_codes_and_bag() {
    let dir = tempfile::tempdir().unwrap();
    let quiet = write(
        dir.path(),
        "quiet.toml",
        "name = \"quiet\"\nduration = 1.0\nsuccess = \"complete\"\n",
    );
    let bag = dir.path().join("quiet.hbag");
    let o = humanoid(&["sim", "run", quiet.to_str().unwrap(), "--bag", bag.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("SUCCESS"));
    let info = humanoid(&["bag", "info", bag.to_str().unwrap()]);
    assert!(info.status.success(), "{}", stderr(&info));
    assert!(stdout(&info).contains("/joint_states"));

    let goal = write(
        dir.path(),
        "goal.toml",
        "name = \"goal\"\nduration = 1.0\nsuccess = \"goal\"\nball = [3.0, 0.0]\n",
    );
    let o = humanoid(&["sim", "run", goal.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("FAILURE"));

    let o = humanoid(&["sim", "run", "no_such_scenario"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn launch_rejects_typos_unless_lenient() {
    let dir = tempfile::tempdir().unwrap();
    let file = write(dir.path(), "robot.toml", "seed = 3\nduraton = 2.0\n");
    let o = humanoid(&["launch", file.to_str().unwrap(), "--duration", "0.2"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("duraton"), "{}", stderr(&o));
    let o = humanoid(&["launch", file.to_str().unwrap(), "--duration", "0.2", "--lenient"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let typo = write(dir.path(), "typo.toml", "modules = [\"gait\", \"haed\"]\n");
    let o = humanoid(&["launch", typo.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("haed"));
}

#[test]
fn config_file_get_and_set() {
    let dir = tempfile::tempdir().unwrap();
    let file = write(dir.path(), "params.toml", "[behavior]\nmax_vx = 0.2\n");
    let f = file.to_str().unwrap();
    let o = humanoid(&["config", "set", "/behavior/standoff", "0.3", "--file", f]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(
        stdout(&humanoid(&["config", "get", "/behavior/standoff", "--file", f])).trim(),
        "0.3"
    );
    assert_eq!(
        stdout(&humanoid(&["config", "get", "/behavior/max_vx", "--file", f])).trim(),
        "0.2"
    );
    // a path that would turn a value into a table is refused and the file kept
    let o = humanoid(&["config", "set", "/behavior/max_vx/deeper", "1", "--file", f]);
    assert!(!o.status.success());
    assert!(std::fs::read_to_string(&file).unwrap().contains("max_vx = 0.2"));
}

#[test]
fn motion_tools() {
    let kick = bundled_motion("kick");
    let o = humanoid(&["motion", "check", kick.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("kick: ok"));

    let o = humanoid(&["motion", "sample", kick.to_str().unwrap(), "--rate", "50"]);
    assert!(o.status.success());
    let mut rows = csv::Reader::from_reader(o.stdout.as_slice());
    let width = rows.headers().unwrap().len();
    let times: Vec<f64> = rows.records().map(|r| r.unwrap()[0].parse().unwrap()).collect();
    assert!(width > 1 && times.len() > 2);
    assert!(times.windows(2).all(|w| w[0] < w[1]));

    let dir = tempfile::tempdir().unwrap();
    let slow = dir.path().join("slow.toml");
    let o = humanoid(&[
        "motion",
        "retime",
        kick.to_str().unwrap(),
        "2.0",
        "-o",
        slow.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let listed = stdout(&humanoid(&["motion", "list", "--dir", dir.path().to_str().unwrap()]));
    let original = stdout(&humanoid(&["motion", "list"]));
    let duration = |text: &str| -> f64 {
        let line = text.lines().find(|l| l.starts_with("kick\t")).expect("kick listed");
        line.split('\t').nth(1).unwrap().trim_end_matches(" s").parse().unwrap()
    };
    // keyframe times double; the original's stretched segment may no longer need stretching
    assert!(duration(&listed) > 1.5 * duration(&original));
}

use humanoid_core::config::ParamValue;
use humanoid_core::launch::{run_scenario, LaunchError, LaunchSpec, System};
use humanoid_core::telemetry::Client;
use serde_json::{json, Value};
use std::net::TcpListener;
use std::path::Path;

fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn launch_file_errors_are_reported() {
    let bad = |text: &str| LaunchSpec::parse(text, false).and_then(|s| s.validate().map(|_| s));
    assert!(matches!(bad("nodes = [\"robot_control\""), Err(LaunchError::Parse(_))));
    assert!(matches!(bad("seed = \"seven\"\n"), Err(LaunchError::Parse(_))));
    assert!(matches!(bad("nodse = []\n"), Err(LaunchError::UnknownKey(k)) if k == "nodse"));
    assert!(matches!(bad("nodes = [\"behaviour\"]\n"), Err(LaunchError::UnknownNode(n)) if n == "behaviour"));
    assert!(matches!(
        bad("nodes = [\"behavior\", \"behavior\"]\n"),
        Err(LaunchError::DuplicateNode(_))
    ));
    assert!(matches!(
        bad("hardware = \"robot\"\n"),
        Err(LaunchError::UnknownHardware(_))
    ));
    assert!(matches!(bad("scenario = \"socer\"\n"), Err(LaunchError::Scenario(_))));
    assert!(matches!(bad("duration = -1.0\n"), Err(LaunchError::Invalid(_))));
    assert!(matches!(
        bad("[telemetry]\ngatway = \"x\"\n"),
        Err(LaunchError::Parse(_))
    ));
    let spec = "nodes = [\"robot_control\"]\n[overrides.behavior]\n\"/behavior/max_vx\" = 0.1\n";
    assert!(matches!(bad(spec), Err(LaunchError::OverrideNode(n)) if n == "behavior"));
    // lenient mode only forgives unknown top-level keys
    assert!(LaunchSpec::parse("nodse = []\n", true).is_ok());
    assert!(LaunchSpec::parse("[telemetry]\ngatway = \"x\"\n", true).is_err());
}

#[test]
fn omitted_nodes_are_not_started() {
    let spec = LaunchSpec::parse(
        "nodes = [\"robot_control\", \"world_sim\", \"telemetry\"]\nseed = 4\n",
        false,
    )
    .unwrap();
    let mut sys = System::launch(spec).unwrap();
    assert_eq!(sys.node_names(), vec!["telemetry", "world_sim", "robot_control"]);
    sys.run_for(1.0).unwrap();
    let bag = sys.bag().unwrap();
    let topics = bag.topics();
    assert!(topics.iter().any(|t| t.starts_with("/joint")), "{topics:?}");
    assert!(!topics.iter().any(|t| t.starts_with("/behavior")), "{topics:?}");
}

#[test]
fn relative_paths_resolve_against_the_launch_file() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "params.toml", "[behavior]\nmax_vx = 0.15\n");
    let launch = write(
        dir.path(),
        "robot.toml",
        "config = \"params.toml\"\nseed = 9\n[overrides.behavior]\n\"/behavior/standoff\" = 0.25\n",
    );
    let spec = LaunchSpec::load(&launch, false).unwrap();
    assert_eq!(spec.config.as_deref(), Some(dir.path().join("params.toml").as_path()));
    let sys = System::launch(spec).unwrap();
    assert_eq!(sys.config().get("/behavior/max_vx").unwrap(), ParamValue::from(0.15));
    assert_eq!(sys.config().get("/behavior/standoff").unwrap(), ParamValue::from(0.25));
    let missing = write(dir.path(), "broken.toml", "config = \"nope.toml\"\n");
    assert!(matches!(
        LaunchSpec::load(&missing, false),
        Err(LaunchError::MissingConfig(_))
    ));
}

fn free_port() -> u16 {
    TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port()
}

#[test]
fn hardware_init_failure_tears_down_started_nodes() {
    let port = free_port();
    let text = format!(
        "nodes = [\"telemetry\", \"perception\", \"state_estimation\", \"behavior\", \"robot_control\"]\n\
         hardware = \"external\"\n[telemetry]\ngateway = \"127.0.0.1:{port}\"\n"
    );
    let spec = LaunchSpec::parse(&text, false).unwrap();
    match System::launch(spec) {
        Err(LaunchError::Init { node, .. }) => assert_eq!(node, "robot_control"),
        Err(e) => panic!("unexpected error {e}"),
        Ok(_) => panic!("external hardware should not initialize"),
    }
    // the gateway started before control was shut down again and freed its port
    TcpListener::bind(("127.0.0.1", port)).expect("gateway port released");
}

#[test]
fn teardown_is_idempotent() {
    let mut sys = System::launch(LaunchSpec::default()).unwrap();
    sys.run_for(0.5).unwrap();
    sys.stop();
    assert!(sys.is_stopped());
    sys.stop();
    assert!(sys.step().is_err());
    // the bag stays readable after shutdown
    assert!(!sys.bag().unwrap().records.is_empty());
    drop(sys);
}

#[test]
fn same_seed_launches_record_identical_bags() {
    let record = |seed: u64| {
        let spec = LaunchSpec {
            seed,
            scenario: Some("soccer".into()),
            ..LaunchSpec::default()
        };
        let mut sys = System::launch(spec).unwrap();
        sys.run_for(3.0).unwrap();
        sys.stop();
        sys.bag().unwrap().to_bytes().unwrap()
    };
    let a = record(11);
    assert!(a.len() > 1000);
    assert_eq!(a, record(11));
    assert_ne!(a, record(12));
}

#[test]
fn scenario_outcome_sets_the_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let short_goal = write(
        dir.path(),
        "short.toml",
        "name = \"short\"\nduration = 1.0\nsuccess = \"goal\"\nrobot = [-3.0, 0.0, 0.0]\nball = [2.0, 0.0]\n",
    );
    let quiet = write(
        dir.path(),
        "quiet.toml",
        "name = \"quiet\"\nduration = 1.0\nsuccess = \"complete\"\n",
    );
    let fail = run_scenario(short_goal.to_str().unwrap(), Some(1)).unwrap();
    assert!(!fail.success);
    assert_eq!(fail.exit_code(), 1);
    let ok = run_scenario(quiet.to_str().unwrap(), Some(1)).unwrap();
    assert!(ok.success, "{:?}", ok.report);
    assert_eq!(ok.exit_code(), 0);
    assert!((ok.report.time - 1.0).abs() < 0.05, "{:?}", ok.report);
}

#[test]
fn launched_gateway_serves_live_topics() {
    let spec = LaunchSpec::parse("seed = 2\n[telemetry]\ngateway = \"127.0.0.1:0\"\n", false).unwrap();
    let mut sys = System::launch(spec).unwrap();
    let addr = sys.gateway_addr().expect("gateway address");
    sys.run_for(0.2).unwrap();
    let mut c = Client::connect(&format!("ws://{addr}")).unwrap();
    let topics = c.request("topics", None, Value::Null).unwrap().payload;
    let names: Vec<&str> = topics
        .as_array()
        .unwrap()
        .iter()
        .filter_map(|t| t["topic"].as_str())
        .collect();
    assert!(names.contains(&"/joint_states"), "{names:?}");
    let f = c
        .request("subscribe", Some("/joint_states"), json!({ "rate": 50.0 }))
        .unwrap();
    assert_eq!(f.op, "ack");
    sys.run_for(0.2).unwrap();
    let push = loop {
        let f = c.read_frame().unwrap();
        if f.op == "push" {
            break f;
        }
    };
    assert_eq!(push.path.as_deref(), Some("/joint_states"));
    assert!(push.payload["stamp"].as_f64().unwrap() > 0.2);
    sys.stop();
}

#[test]
fn shipped_launch_files_validate() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../launch");
    for name in ["sim.toml", "headless.toml"] {
        let spec = LaunchSpec::load(&dir.join(name), false).unwrap_or_else(|e| panic!("{name}: {e}"));
        let config = humanoid_core::config::ConfigServer::new();
        spec.apply_config(&config).unwrap();
    }
}

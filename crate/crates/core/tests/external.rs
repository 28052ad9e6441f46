use crlearn::simulator::{run_replications, simulate, SimulatorSpec};
use crlearn::summary::ReplicationConfig;
use crlearn::{Error, ThetaPoint};

fn sh(script: &str) -> SimulatorSpec {
    SimulatorSpec::External {
        command: "sh".into(),
        args: vec!["-c".into(), script.into()],
        timeout_sec: 10.0,
        theta_dim: 2,
    }
}

fn theta() -> ThetaPoint {
    ThetaPoint::unbounded(vec![0.0, 1.0])
}

#[test]
fn well_formed_reply_is_parsed_in_order() {
    let spec = sh(r#"read l; echo '{"y": [[1.5, -2], [3, 4e-3]]}'"#);
    let d = simulate(&spec, &theta(), 2, 0).unwrap();
    assert_eq!(d.rows(), 2);
    assert_eq!(d.cols(), 2);
    assert_eq!(d.values(), &[1.5, -2.0, 3.0, 4e-3]);
}

#[test]
fn request_carries_theta_n_and_seed() {
    // Echo the request back inside an error so its content shows up.
    let spec = sh(
        r#"read l; printf '{"error": %s}\n' "$(printf '%s' "$l" | sed 's/"/\\"/g; s/^/"/; s/$/"/')""#,
    );
    let msg = simulate(&spec, &theta(), 7, 42).unwrap_err().to_string();
    assert!(
        msg.contains("\\\"n\\\":7") || msg.contains("\"n\":7"),
        "{msg}"
    );
    assert!(msg.contains("42"), "{msg}");
}

#[test]
fn missing_command_is_an_external_failure() {
    let spec = SimulatorSpec::External {
        command: "/nonexistent/simulator".into(),
        args: vec![],
        timeout_sec: 1.0,
        theta_dim: 2,
    };
    assert!(matches!(
        simulate(&spec, &theta(), 3, 0),
        Err(Error::ExternalFailure(_))
    ));
}

#[test]
fn replication_failures_are_aggregated() {
    let cfg = ReplicationConfig {
        n_reps: 3,
        base_seed: 1,
        parallel: false,
    };
    match run_replications(&sh("read l; echo nope"), &theta(), 2, &cfg) {
        Err(Error::Replications(errs)) => assert_eq!(errs.len(), 3),
        other => panic!("{other:?}"),
    }
}

#[test]
fn wrong_theta_length_is_rejected_before_spawning() {
    let t = ThetaPoint::unbounded(vec![0.0]);
    assert!(simulate(&sh("exit 1"), &t, 3, 0).is_err());
}

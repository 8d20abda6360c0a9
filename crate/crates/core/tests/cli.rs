mod common;

use std::path::Path;

use common::{read_bytes, run_cli, UnitProcess};
use mimo_testbed::capacity::CapacityCurve;
use mimo_testbed::channel::ChannelMatrix;
use mimo_testbed::harness::{PipelineReport, RunManifest};
use tempfile::TempDir;

fn ok(args: &[&str], cwd: &Path) -> String {
    let out = run_cli(args, cwd);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn manifest(dir: &Path) -> RunManifest {
    RunManifest::read(&dir.join("manifest.json")).unwrap()
}

fn report(dir: &Path) -> PipelineReport {
    serde_json::from_slice(&read_bytes(dir, "report.json")).unwrap()
}

/// Replays `dir`'s manifest into a fresh directory and compares every artifact.
fn assert_replays(root: &Path, dir: &str) {
    let again = format!("{dir}-replay");
    ok(
        &[
            "replay",
            "--manifest",
            &format!("{dir}/manifest.json"),
            "--out-dir",
            &again,
        ],
        root,
    );
    let m = manifest(&root.join(dir));
    assert!(!m.artifacts.is_empty());
    for name in m
        .artifacts
        .iter()
        .map(String::as_str)
        .chain(["manifest.json"])
    {
        assert_eq!(
            read_bytes(&root.join(dir), name),
            read_bytes(&root.join(&again), name),
            "{name}"
        );
    }
}

#[test]
fn gen_channel_writes_matrix_and_manifest() {
    let tmp = TempDir::new().unwrap();
    ok(
        &[
            "gen-channel",
            "--size",
            "3",
            "--users",
            "2",
            "--ensemble",
            "vandermonde",
            "--seed",
            "4",
            "--out-dir",
            "g",
        ],
        tmp.path(),
    );
    let h = ChannelMatrix::from_csv(
        &String::from_utf8(read_bytes(&tmp.path().join("g"), "channel.csv")).unwrap(),
    )
    .unwrap();
    assert_eq!((h.rows(), h.cols()), (3, 2));
    let m = manifest(&tmp.path().join("g"));
    assert_eq!(m.seed, 4);
    assert_eq!(m.artifacts, vec!["channel.csv"]);
    assert_replays(tmp.path(), "g");
}

#[test]
fn gen_channel_matches_pipeline_truth() {
    let tmp = TempDir::new().unwrap();
    ok(
        &[
            "gen-channel",
            "--size",
            "4",
            "--seed",
            "9",
            "--out-dir",
            "g",
        ],
        tmp.path(),
    );
    ok(
        &["pipeline", "--size", "4", "--seed", "9", "--out-dir", "p"],
        tmp.path(),
    );
    assert_eq!(
        read_bytes(&tmp.path().join("g"), "channel.csv"),
        read_bytes(&tmp.path().join("p"), "h_true.csv")
    );
}

#[test]
fn noiseless_pipeline_keeps_capacity() {
    let tmp = TempDir::new().unwrap();
    ok(
        &[
            "pipeline",
            "--size",
            "4",
            "--noiseless",
            "--seed",
            "7",
            "--out-dir",
            "p",
        ],
        tmp.path(),
    );
    let r = report(&tmp.path().join("p"));
    assert!(
        (r.capacity_estimated_bps_hz - r.capacity_true_bps_hz).abs()
            <= 1e-9 * r.capacity_true_bps_hz
    );
    assert_eq!(r.round_duration_ms, 200.0);
    assert_replays(tmp.path(), "p");
}

#[test]
fn thirty_by_thirty_reports_one_and_a_half_seconds() {
    let tmp = TempDir::new().unwrap();
    let stdout = ok(
        &[
            "pipeline",
            "--size",
            "30",
            "--slot-ms",
            "50",
            "--out-dir",
            "p",
        ],
        tmp.path(),
    );
    assert!(stdout.contains("round duration: 1.5 s"), "{stdout}");
    assert_eq!(report(&tmp.path().join("p")).round_duration_s, 1.5);
}

#[test]
fn curve_then_fit_then_pipeline_with_fit() {
    let tmp = TempDir::new().unwrap();
    let root = tmp.path();
    ok(
        &[
            "capacity-curve",
            "--ensemble",
            "vandermonde",
            "--d",
            "1.1",
            "--alpha-deg",
            "32",
            "--sizes",
            "2-6",
            "--trials",
            "200",
            "--seed",
            "1",
            "--out-dir",
            "c",
        ],
        root,
    );
    let curve = CapacityCurve::from_csv(
        &String::from_utf8(read_bytes(&root.join("c"), "capacity_curve.csv")).unwrap(),
    )
    .unwrap();
    assert_eq!(curve.sizes, vec![2, 3, 4, 5, 6]);
    assert_replays(root, "c");

    ok(
        &[
            "fit",
            "--target",
            "c/capacity_curve.csv",
            "--d-grid",
            "1.0,1.1",
            "--alpha-grid-deg",
            "20,32",
            "--trials",
            "100",
            "--out-dir",
            "f",
        ],
        root,
    );
    let m = manifest(&root.join("f"));
    assert_eq!(
        m.artifacts,
        vec!["score_table.csv", "best_fit_curve.csv", "fit.json"]
    );
    let table = String::from_utf8(read_bytes(&root.join("f"), "score_table.csv")).unwrap();
    assert_eq!(table.lines().count(), 5);
    assert!(table.starts_with("d_over_halflambda,alpha_deg,mme\n"));
    assert_replays(root, "f");

    ok(
        &[
            "pipeline",
            "--size",
            "3",
            "--target",
            "c/capacity_curve.csv",
            "--d-grid",
            "1.1",
            "--alpha-grid-deg",
            "32",
            "--trials",
            "20",
            "--out-dir",
            "p",
        ],
        root,
    );
    let r = report(&root.join("p"));
    let fit = r.fit.expect("fit summary");
    assert_eq!((fit.d_over_halflambda, fit.alpha_deg), (1.1, 32.0));
    assert!(manifest(&root.join("p"))
        .artifacts
        .contains(&"score_table.csv".to_owned()));
}

#[test]
fn sound_accepts_an_external_channel() {
    let tmp = TempDir::new().unwrap();
    let root = tmp.path();
    ok(
        &[
            "gen-channel",
            "--size",
            "3",
            "--users",
            "5",
            "--out-dir",
            "g",
        ],
        root,
    );
    ok(
        &[
            "sound",
            "--channel",
            "g/channel.csv",
            "--noiseless",
            "--out-dir",
            "s",
        ],
        root,
    );
    let read = |name| {
        ChannelMatrix::from_csv(&String::from_utf8(read_bytes(&root.join("s"), name)).unwrap())
            .unwrap()
    };
    let (h, est) = (read("h_true.csv"), read("h_est.csv"));
    assert_eq!((est.rows(), est.cols()), (3, 5));
    for (a, b) in h.as_slice().iter().zip(est.as_slice()) {
        assert!((a - b).norm() < 1e-9);
    }
    assert_replays(root, "s");
}

#[test]
fn controller_with_unit_processes_matches_pipeline() {
    let tmp = TempDir::new().unwrap();
    let units: Vec<UnitProcess> = (0..2).map(|_| UnitProcess::spawn(&[])).collect();
    let eps = units
        .iter()
        .map(|u| u.addr.as_str())
        .collect::<Vec<_>>()
        .join(",");
    ok(
        &[
            "emulate-controller",
            "--size",
            "4",
            "--seed",
            "7",
            "--endpoints",
            &eps,
            "--out-dir",
            "c",
        ],
        tmp.path(),
    );
    for u in units {
        let (success, rest) = u.finish();
        assert!(success);
        assert!(rest.contains("sent 8 results"), "{rest}");
    }
    ok(
        &["pipeline", "--size", "4", "--seed", "7", "--out-dir", "p"],
        tmp.path(),
    );
    for name in ["h_true.csv", "h_est.csv", "schedule.json", "report.json"] {
        assert_eq!(
            read_bytes(&tmp.path().join("c"), name),
            read_bytes(&tmp.path().join("p"), name),
            "{name}"
        );
    }
}

#[test]
fn unreachable_unit_is_named_in_the_error() {
    let tmp = TempDir::new().unwrap();
    let port = std::net::TcpListener::bind("127.0.0.1:0")
        .unwrap()
        .local_addr()
        .unwrap()
        .port();
    let ep = format!("127.0.0.1:{port}");
    let out = run_cli(
        &[
            "emulate-controller",
            "--size",
            "2",
            "--endpoints",
            &ep,
            "--out-dir",
            "c",
        ],
        tmp.path(),
    );
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains(&ep));
    assert!(!tmp.path().join("c").join("manifest.json").exists());
}

#[test]
fn invalid_arguments_fail_cleanly() {
    let tmp = TempDir::new().unwrap();
    for args in [
        vec!["pipeline", "--size", "0"],
        vec!["pipeline", "--pn-degree", "40"],
        vec![
            "pipeline",
            "--ensemble",
            "vandermonde",
            "--alpha-deg",
            "120",
        ],
        vec!["capacity-curve", "--sizes", "5-2"],
        vec!["emulate-controller", "--size", "2"],
        vec!["fit", "--target", "missing.csv"],
    ] {
        let out = run_cli(&args, tmp.path());
        assert!(!out.status.success(), "{args:?} should fail");
    }
}

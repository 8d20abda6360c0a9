use std::io::BufReader;
use std::net::TcpListener;
use std::thread;

use mimo_testbed::harness::protocol::{
    complex_to_pair, pair_to_complex, read_message, write_message, ControlMessage, Payload,
    RoundDone, SlotResult,
};
use mimo_testbed::harness::{
    run_controller, run_pipeline, run_unit, ControllerOptions, ExperimentConfig, UnitOptions,
};
use mimo_testbed::rng::RandomSeed;
use mimo_testbed::sounding::{link_seed, sound_link};
use mimo_testbed::Error;

fn spawn_unit(opts: UnitOptions) -> (String, thread::JoinHandle<mimo_testbed::Result<()>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap().to_string();
    let handle = thread::spawn(move || run_unit(listener, &opts).map(|_| ()));
    (addr, handle)
}

/// How a scripted unit mangles its honest result list before sending it.
type Mangle = fn(Vec<SlotResult>) -> Vec<SlotResult>;

/// A unit that computes honest results and then sends them mangled.
fn spawn_scripted_unit(mangle: Mangle) -> String {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap().to_string();
    thread::spawn(move || {
        let (mut stream, _) = listener.accept().unwrap();
        let mut reader = BufReader::new(stream.try_clone().unwrap());
        let Some(ControlMessage {
            round_id,
            unit_id,
            payload: Payload::Configure(cfg),
        }) = read_message(&mut reader).unwrap()
        else {
            panic!("expected CONFIGURE")
        };
        assert!(matches!(
            read_message(&mut reader).unwrap().unwrap().payload,
            Payload::Start
        ));
        let pn = cfg.pn.generate().unwrap();
        let mut results = Vec::new();
        for (slot, tx) in cfg.schedule.slots() {
            for (row, &rx) in cfg.rx_indices.iter().enumerate() {
                let seed = link_seed(RandomSeed(cfg.seed), tx, rx);
                let est = sound_link(
                    pair_to_complex(cfg.gains[row][tx]),
                    &pn,
                    &cfg.impairments,
                    seed,
                )
                .unwrap();
                results.push(SlotResult {
                    slot,
                    tx,
                    rx,
                    gain: complex_to_pair(est),
                });
            }
        }
        let results = mangle(results);
        for r in &results {
            let msg = ControlMessage::new(round_id, unit_id, Payload::SlotResult(*r));
            write_message(&mut stream, &msg).unwrap();
        }
        let done = RoundDone {
            results: results.len(),
        };
        let _ = write_message(
            &mut stream,
            &ControlMessage::new(round_id, unit_id, Payload::RoundDone(done)),
        );
        if let Ok(Some(m)) = read_message(&mut reader) {
            let _ = write_message(
                &mut stream,
                &ControlMessage::new(m.round_id, unit_id, Payload::Stop),
            );
        }
    });
    addr
}

fn config(size: usize, seed: u64) -> ExperimentConfig {
    ExperimentConfig {
        size,
        snr_db: 20.0,
        seed,
        ..Default::default()
    }
}

#[test]
fn two_units_match_in_process_run() {
    let cfg = config(4, 7);
    let (a, ha) = spawn_unit(UnitOptions::default());
    let (b, hb) = spawn_unit(UnitOptions::default());
    let run = run_controller(&cfg, None, &[a, b], &ControllerOptions::default()).unwrap();
    ha.join().unwrap().unwrap();
    hb.join().unwrap().unwrap();
    let local = run_pipeline(&cfg, None).unwrap();
    assert_eq!(run.h_est, local.h_est);
    assert_eq!(run.h_est.to_csv(), local.h_est.to_csv());
    assert_eq!(run.report, local.report);
}

#[test]
fn explicit_partition_matches_too() {
    let cfg = config(5, 3);
    let (a, _) = spawn_unit(UnitOptions::default());
    let (b, _) = spawn_unit(UnitOptions::default());
    let opts = ControllerOptions {
        partition: Some(vec![vec![4, 0], vec![2, 1, 3]]),
        ..Default::default()
    };
    let run = run_controller(&cfg, None, &[a, b], &opts).unwrap();
    assert_eq!(run.h_est, run_pipeline(&cfg, None).unwrap().h_est);
}

#[test]
fn arrival_order_and_duplicates_do_not_matter() {
    let cfg = config(4, 11);
    let local = run_pipeline(&cfg, None).unwrap();
    let manglers: [Mangle; 3] = [
        |mut r| {
            r.reverse();
            r
        },
        |r| r.iter().chain(r.iter()).copied().collect(),
        |mut r| {
            r.rotate_left(3);
            r
        },
    ];
    for mangle in manglers {
        let eps = vec![spawn_scripted_unit(mangle), spawn_scripted_unit(mangle)];
        let run = run_controller(&cfg, None, &eps, &ControllerOptions::default()).unwrap();
        assert_eq!(run.h_est, local.h_est);
    }
}

#[test]
fn dropped_results_are_listed() {
    let cfg = config(4, 1);
    // second unit owns rx 2 and 3 and skips its last two results: slot 3, rx 2 and 3
    let eps = vec![
        spawn_scripted_unit(|r| r),
        spawn_scripted_unit(|mut r| {
            r.truncate(r.len() - 2);
            r
        }),
    ];
    match run_controller(&cfg, None, &eps, &ControllerOptions::default()) {
        Err(Error::IncompleteRound { missing }) => assert_eq!(missing, vec![(3, 2), (3, 3)]),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn foreign_antenna_is_a_protocol_error() {
    let cfg = config(4, 1);
    let eps = vec![
        spawn_scripted_unit(|r| r),
        spawn_scripted_unit(|mut r| {
            r[0].rx = 0;
            r
        }),
    ];
    let err = run_controller(&cfg, None, &eps, &ControllerOptions::default()).unwrap_err();
    assert!(matches!(err, Error::Protocol(_)), "{err:?}");
}

#[test]
fn garbage_from_a_unit_is_a_protocol_error() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap().to_string();
    thread::spawn(move || {
        let (mut stream, _) = listener.accept().unwrap();
        let mut reader = BufReader::new(stream.try_clone().unwrap());
        read_message(&mut reader).unwrap();
        read_message(&mut reader).unwrap();
        std::io::Write::write_all(
            &mut stream,
            b"{\"kind\":\"PING\",\"round_id\":1,\"unit_id\":0}\n",
        )
        .unwrap();
        let _ = read_message(&mut reader);
    });
    let err =
        run_controller(&config(2, 0), None, &[addr], &ControllerOptions::default()).unwrap_err();
    assert!(matches!(err, Error::Protocol(_)), "{err:?}");
}

#[test]
fn unit_crash_mid_round_lists_its_pairs() {
    let cfg = config(4, 2);
    let (a, ha) = spawn_unit(UnitOptions::default());
    let (b, hb) = spawn_unit(UnitOptions {
        fail_after_results: Some(5),
        ..Default::default()
    });
    let err = run_controller(&cfg, None, &[a, b], &ControllerOptions::default()).unwrap_err();
    ha.join().unwrap().unwrap();
    assert!(hb.join().unwrap().is_err());
    // unit 1 owns rx 2, 3; results go slot by slot, so 5 sent means slot 2 rx 3 onward is missing
    match err {
        Error::IncompleteRound { missing } => {
            assert_eq!(missing, vec![(2, 3), (3, 2), (3, 3)]);
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn seed_offset_breaks_equivalence() {
    let cfg = config(2, 4);
    let (a, _) = spawn_unit(UnitOptions {
        seed_offset: 1,
        ..Default::default()
    });
    let run = run_controller(&cfg, None, &[a], &ControllerOptions::default()).unwrap();
    assert_ne!(run.h_est, run_pipeline(&cfg, None).unwrap().h_est);
}

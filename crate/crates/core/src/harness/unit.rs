//! Emulated baseband processing unit.
//!
//! A unit owns a subset of the receive antennas. It is a single-round state
//! machine: CONFIGURE, then START (repeats of the same round id are ignored),
//! then STOP. A malformed or out-of-order frame gets an ERROR reply and the
//! connection is closed.

use std::collections::HashSet;
use std::io::{BufRead, BufReader, Write};
use std::net::TcpListener;

use super::protocol::{
    complex_to_pair, pair_to_complex, read_message, write_message, ConfigurePayload,
    ControlMessage, ErrorPayload, Payload, RoundDone, SlotResult,
};
use crate::rng::RandomSeed;
use crate::sounding::{link_seed, sound_link, PnSequence};
use crate::{Error, Result};

#[derive(Debug, Clone, Default)]
pub struct UnitOptions {
    /// Added to the round seed before deriving per-link streams. Any value
    /// other than zero decorrelates this unit from the in-process run.
    pub seed_offset: u64,
    /// Fault injection: drop the connection after this many SLOT_RESULTs.
    pub fail_after_results: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UnitOutcome {
    pub results_sent: usize,
    /// Whether the session ended with STOP rather than a closed stream.
    pub stopped: bool,
}

/// Accepts one controller connection on `listener` and serves it.
pub fn run_unit(listener: TcpListener, opts: &UnitOptions) -> Result<UnitOutcome> {
    let (stream, _) = listener.accept()?;
    stream.set_nodelay(true)?;
    let reader = BufReader::new(stream.try_clone()?);
    serve_connection(reader, stream, opts)
}

struct Configured {
    round_id: u64,
    unit_id: usize,
    payload: ConfigurePayload,
    pn: PnSequence,
}

fn validate_configure(p: &ConfigurePayload) -> Result<PnSequence> {
    let num_tx = p.schedule.num_tx();
    if p.gains.len() != p.rx_indices.len() {
        return Err(Error::Protocol(format!(
            "{} gain rows for {} receive antennas",
            p.gains.len(),
            p.rx_indices.len()
        )));
    }
    if let Some(row) = p.gains.iter().find(|r| r.len() != num_tx) {
        return Err(Error::Protocol(format!(
            "gain row has {} entries, schedule has {num_tx} transmitters",
            row.len()
        )));
    }
    if p.gains.iter().flatten().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Protocol("non-finite link gain".into()));
    }
    p.impairments.validate()?;
    p.pn.generate()
}

fn fail(writer: &mut impl Write, round_id: u64, unit_id: usize, err: Error) -> Result<UnitOutcome> {
    let reply = ControlMessage::new(
        round_id,
        unit_id,
        Payload::Error(ErrorPayload {
            message: err.to_string(),
        }),
    );
    let _ = write_message(writer, &reply);
    Err(err)
}

/// Serves one controller session over an arbitrary byte stream.
pub fn serve_connection(
    mut reader: impl BufRead,
    mut writer: impl Write,
    opts: &UnitOptions,
) -> Result<UnitOutcome> {
    let mut state: Option<Configured> = None;
    let mut completed: HashSet<u64> = HashSet::new();
    let mut sent = 0usize;

    loop {
        let msg = match read_message(&mut reader) {
            Ok(Some(m)) => m,
            Ok(None) => {
                return Ok(UnitOutcome {
                    results_sent: sent,
                    stopped: false,
                })
            }
            Err(e @ Error::Protocol(_)) => return fail(&mut writer, 0, 0, e),
            Err(e) => return Err(e),
        };
        match msg.payload {
            Payload::Configure(cfg) => match validate_configure(&cfg) {
                Ok(pn) => {
                    state = Some(Configured {
                        round_id: msg.round_id,
                        unit_id: msg.unit_id,
                        payload: *cfg,
                        pn,
                    })
                }
                Err(e) => return fail(&mut writer, msg.round_id, msg.unit_id, e),
            },
            Payload::Start => {
                let Some(st) = &state else {
                    let e = Error::Protocol("START before CONFIGURE".into());
                    return fail(&mut writer, msg.round_id, msg.unit_id, e);
                };
                if msg.round_id != st.round_id {
                    let e = Error::Protocol(format!(
                        "START for round {} but configured for round {}",
                        msg.round_id, st.round_id
                    ));
                    return fail(&mut writer, msg.round_id, st.unit_id, e);
                }
                if !completed.insert(msg.round_id) {
                    continue;
                }
                let p = &st.payload;
                let round_seed = RandomSeed(p.seed.wrapping_add(opts.seed_offset));
                let mut count = 0;
                for (slot, tx) in p.schedule.slots() {
                    for (row, &rx) in p.rx_indices.iter().enumerate() {
                        if opts.fail_after_results == Some(sent) {
                            return Err(Error::Protocol(format!(
                                "fault injected after {sent} results"
                            )));
                        }
                        let gain = pair_to_complex(p.gains[row][tx]);
                        let est = sound_link(
                            gain,
                            &st.pn,
                            &p.impairments,
                            link_seed(round_seed, tx, rx),
                        )?;
                        let result = SlotResult {
                            slot,
                            tx,
                            rx,
                            gain: complex_to_pair(est),
                        };
                        write_message(
                            &mut writer,
                            &ControlMessage::new(
                                st.round_id,
                                st.unit_id,
                                Payload::SlotResult(result),
                            ),
                        )?;
                        sent += 1;
                        count += 1;
                    }
                }
                write_message(
                    &mut writer,
                    &ControlMessage::new(
                        st.round_id,
                        st.unit_id,
                        Payload::RoundDone(RoundDone { results: count }),
                    ),
                )?;
            }
            Payload::Stop => {
                let unit_id = state.as_ref().map_or(msg.unit_id, |s| s.unit_id);
                write_message(
                    &mut writer,
                    &ControlMessage::new(msg.round_id, unit_id, Payload::Stop),
                )?;
                return Ok(UnitOutcome {
                    results_sent: sent,
                    stopped: true,
                });
            }
            other => {
                let e = Error::Protocol(format!("unexpected {:?} from controller", other.kind()));
                return fail(&mut writer, msg.round_id, msg.unit_id, e);
            }
        }
    }
}

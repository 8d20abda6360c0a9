//! Central controller: configures the units, starts the round, collects one
//! SLOT_RESULT per `(slot, rx)` pair and assembles the estimated channel.

use std::io::BufReader;
use std::net::{TcpStream, ToSocketAddrs};
use std::sync::mpsc;
use std::time::Duration;

use num_complex::Complex64;

use super::protocol::{
    complex_to_pair, pair_to_complex, read_message, write_message, ConfigurePayload,
    ControlMessage, Payload,
};
use super::{finish_run, ExperimentConfig, FitConfig, PipelineRun};
use crate::channel::ChannelMatrix;
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct ControllerOptions {
    /// Receive antennas per unit; defaults to [`default_partition`].
    pub partition: Option<Vec<Vec<usize>>>,
    pub connect_timeout: Duration,
    /// Longest silence tolerated from a unit during the round.
    pub round_timeout: Duration,
    pub round_id: u64,
}

impl Default for ControllerOptions {
    fn default() -> Self {
        Self {
            partition: None,
            connect_timeout: Duration::from_secs(5),
            round_timeout: Duration::from_secs(30),
            round_id: 1,
        }
    }
}

/// Contiguous, balanced split of `0..num_rx` over `units` units.
pub fn default_partition(num_rx: usize, units: usize) -> Result<Vec<Vec<usize>>> {
    if units == 0 {
        return Err(Error::Config("no unit endpoints given".into()));
    }
    if units > num_rx {
        return Err(Error::Config(format!(
            "{units} units for only {num_rx} receive antennas"
        )));
    }
    Ok((0..units)
        .map(|u| (u * num_rx / units..(u + 1) * num_rx / units).collect())
        .collect())
}

fn check_partition(partition: &[Vec<usize>], num_rx: usize, units: usize) -> Result<()> {
    if partition.len() != units {
        return Err(Error::Config(format!(
            "partition lists {} units but {units} endpoints were given",
            partition.len()
        )));
    }
    let mut owner = vec![None; num_rx];
    for (u, rxs) in partition.iter().enumerate() {
        if rxs.is_empty() {
            return Err(Error::Config(format!("unit {u} owns no receive antennas")));
        }
        for &rx in rxs {
            if rx >= num_rx {
                return Err(Error::Config(format!(
                    "unit {u} lists antenna {rx} of {num_rx}"
                )));
            }
            if let Some(prev) = owner[rx].replace(u) {
                return Err(Error::Config(format!(
                    "antenna {rx} given to units {prev} and {u}"
                )));
            }
        }
    }
    if let Some(rx) = owner.iter().position(Option::is_none) {
        return Err(Error::Config(format!(
            "antenna {rx} is not assigned to any unit"
        )));
    }
    Ok(())
}

fn connect(endpoint: &str, timeout: Duration) -> Result<TcpStream> {
    let conn_err = |reason: String| Error::Connection {
        endpoint: endpoint.to_owned(),
        reason,
    };
    let addrs: Vec<_> = endpoint
        .to_socket_addrs()
        .map_err(|e| conn_err(e.to_string()))?
        .collect();
    let mut last = String::from("address did not resolve");
    for addr in addrs {
        match TcpStream::connect_timeout(&addr, timeout) {
            Ok(s) => {
                s.set_nodelay(true).map_err(|e| conn_err(e.to_string()))?;
                return Ok(s);
            }
            Err(e) => last = e.to_string(),
        }
    }
    Err(conn_err(last))
}

enum Event {
    Message(usize, ControlMessage),
    Failed(usize, Error),
    Closed,
}

/// Runs one distributed sounding round. The result is bit-identical to
/// [`super::run_pipeline`] for the same configuration.
pub fn run_controller(
    config: &ExperimentConfig,
    fit: Option<&FitConfig>,
    endpoints: &[String],
    opts: &ControllerOptions,
) -> Result<PipelineRun> {
    config.validate()?;
    let n = config.size;
    let partition = match &opts.partition {
        Some(p) => p.clone(),
        None => default_partition(n, endpoints.len())?,
    };
    check_partition(&partition, n, endpoints.len())?;

    let schedule = config.schedule()?;
    let h_true = config.true_channel()?;
    let round_id = opts.round_id;

    let mut streams = endpoints
        .iter()
        .map(|ep| connect(ep, opts.connect_timeout))
        .collect::<Result<Vec<_>>>()?;

    for (unit, (stream, rxs)) in streams.iter_mut().zip(&partition).enumerate() {
        let payload = ConfigurePayload {
            rx_indices: rxs.clone(),
            gains: rxs
                .iter()
                .map(|&rx| h_true.row(rx).iter().map(|&g| complex_to_pair(g)).collect())
                .collect(),
            schedule: schedule.clone(),
            pn: config.pn,
            impairments: config.impairments(),
            seed: config.round_seed().0,
        };
        let msg = ControlMessage::new(round_id, unit, Payload::Configure(Box::new(payload)));
        write_message(stream, &msg).map_err(|e| Error::Connection {
            endpoint: endpoints[unit].clone(),
            reason: e.to_string(),
        })?;
    }
    for (unit, stream) in streams.iter_mut().enumerate() {
        write_message(stream, &ControlMessage::new(round_id, unit, Payload::Start)).map_err(
            |e| Error::Connection {
                endpoint: endpoints[unit].clone(),
                reason: e.to_string(),
            },
        )?;
    }

    // estimates[rx][tx]
    let mut estimates: Vec<Vec<Option<Complex64>>> = vec![vec![None; n]; n];
    let mut protocol_error: Option<Error> = None;

    let (tx_events, rx_events) = mpsc::channel::<Event>();
    std::thread::scope(|scope| -> Result<()> {
        for (unit, stream) in streams.iter().enumerate() {
            let reader_stream = stream.try_clone()?;
            reader_stream.set_read_timeout(Some(opts.round_timeout))?;
            let events = tx_events.clone();
            scope.spawn(move || {
                let mut reader = BufReader::new(reader_stream);
                loop {
                    match read_message(&mut reader) {
                        Ok(Some(msg)) => {
                            let done =
                                matches!(msg.payload, Payload::RoundDone(_) | Payload::Error(_));
                            let _ = events.send(Event::Message(unit, msg));
                            if done {
                                break;
                            }
                        }
                        Ok(None) => {
                            let _ = events.send(Event::Closed);
                            break;
                        }
                        Err(e) => {
                            let _ = events.send(Event::Failed(unit, e));
                            break;
                        }
                    }
                }
            });
        }
        drop(tx_events);

        for event in rx_events {
            match event {
                Event::Message(unit, msg) => {
                    if let Err(e) =
                        absorb(unit, &msg, round_id, &partition, &schedule, &mut estimates)
                    {
                        protocol_error.get_or_insert(e);
                    }
                }
                Event::Failed(unit, e @ Error::Protocol(_)) => {
                    protocol_error.get_or_insert(Error::Protocol(format!("unit {unit}: {e}")));
                }
                // silence or a dropped link only shows up as missing results
                Event::Failed(..) | Event::Closed => {}
            }
        }
        Ok(())
    })?;

    for (unit, stream) in streams.iter_mut().enumerate() {
        if write_message(stream, &ControlMessage::new(round_id, unit, Payload::Stop)).is_ok() {
            let _ = stream.set_read_timeout(Some(Duration::from_secs(2)));
            if let Ok(clone) = stream.try_clone() {
                let _ = read_message(&mut BufReader::new(clone));
            }
        }
    }

    if let Some(e) = protocol_error {
        return Err(e);
    }

    let mut missing: Vec<(usize, usize)> = Vec::new();
    for (slot, tx) in schedule.slots() {
        for (rx, row) in estimates.iter().enumerate() {
            if row[tx].is_none() {
                missing.push((slot, rx));
            }
        }
    }
    if !missing.is_empty() {
        return Err(Error::IncompleteRound { missing });
    }

    let h_est = ChannelMatrix::from_fn(n, n, |rx, tx| estimates[rx][tx].unwrap_or_default())?;
    finish_run(config, fit, schedule, h_true, h_est)
}

/// Folds one unit message into the estimate table. Duplicates of an
/// already-filled `(tx, rx)` are ignored.
fn absorb(
    unit: usize,
    msg: &ControlMessage,
    round_id: u64,
    partition: &[Vec<usize>],
    schedule: &crate::sounding::TdmaSchedule,
    estimates: &mut [Vec<Option<Complex64>>],
) -> Result<()> {
    if msg.round_id != round_id || msg.unit_id != unit {
        return Err(Error::Protocol(format!(
            "unit {unit} sent a frame tagged round {} unit {}",
            msg.round_id, msg.unit_id
        )));
    }
    match &msg.payload {
        Payload::SlotResult(r) => {
            if r.tx >= schedule.num_tx() || schedule.slot_of(r.tx) != r.slot {
                return Err(Error::Protocol(format!(
                    "unit {unit}: tx {} does not own slot {}",
                    r.tx, r.slot
                )));
            }
            if !partition[unit].contains(&r.rx) {
                return Err(Error::Protocol(format!(
                    "unit {unit} does not own antenna {}",
                    r.rx
                )));
            }
            let gain = pair_to_complex(r.gain);
            if !(gain.re.is_finite() && gain.im.is_finite()) {
                return Err(Error::Protocol(format!("unit {unit}: non-finite gain")));
            }
            estimates[r.rx][r.tx].get_or_insert(gain);
            Ok(())
        }
        Payload::RoundDone(_) => Ok(()),
        Payload::Error(e) => Err(Error::Protocol(format!(
            "unit {unit} reported: {}",
            e.message
        ))),
        other => Err(Error::Protocol(format!(
            "unit {unit} sent unexpected {:?}",
            other.kind()
        ))),
    }
}

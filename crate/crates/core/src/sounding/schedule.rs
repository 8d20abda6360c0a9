//! TDMA slot assignment for channel sounding.
//!
//! Slots are logical turns; wall-clock timing is only reported, never waited on.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Transmitter-to-slot assignment for one sounding round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ScheduleDoc", into = "ScheduleDoc")]
pub struct TdmaSchedule {
    slot_ms: f64,
    /// `assignments[tx] = slot`
    assignments: Vec<usize>,
}

/// On-disk form: `{num_tx, slot_ms, assignments:[...]}`.
#[derive(Serialize, Deserialize)]
struct ScheduleDoc {
    num_tx: usize,
    slot_ms: f64,
    assignments: Vec<usize>,
}

impl TryFrom<ScheduleDoc> for TdmaSchedule {
    type Error = Error;

    fn try_from(doc: ScheduleDoc) -> Result<Self> {
        if doc.assignments.len() != doc.num_tx {
            return Err(Error::Schedule(format!(
                "num_tx = {} but {} assignments",
                doc.num_tx,
                doc.assignments.len()
            )));
        }
        TdmaSchedule::with_assignments(doc.slot_ms, doc.assignments)
    }
}

impl From<TdmaSchedule> for ScheduleDoc {
    fn from(s: TdmaSchedule) -> Self {
        ScheduleDoc {
            num_tx: s.num_tx(),
            slot_ms: s.slot_ms,
            assignments: s.assignments,
        }
    }
}

/// Transmitter `i` sounds in slot `i`.
pub fn build_tdma_schedule(num_tx: usize, slot_ms: f64) -> Result<TdmaSchedule> {
    TdmaSchedule::with_assignments(slot_ms, (0..num_tx).collect())
}

impl TdmaSchedule {
    /// Custom assignment; `assignments[tx]` must be a permutation of `0..num_tx`.
    pub fn with_assignments(slot_ms: f64, assignments: Vec<usize>) -> Result<Self> {
        if assignments.is_empty() {
            return Err(Error::Schedule(
                "schedule needs at least one transmitter".into(),
            ));
        }
        if !(slot_ms > 0.0 && slot_ms.is_finite()) {
            return Err(Error::Schedule(format!(
                "slot duration must be > 0 ms, got {slot_ms}"
            )));
        }
        let n = assignments.len();
        let mut taken = vec![false; n];
        for (tx, &slot) in assignments.iter().enumerate() {
            if slot >= n {
                return Err(Error::Schedule(format!(
                    "tx {tx} assigned to slot {slot} of {n}"
                )));
            }
            if std::mem::replace(&mut taken[slot], true) {
                return Err(Error::Schedule(format!("slot {slot} assigned twice")));
            }
        }
        Ok(Self {
            slot_ms,
            assignments,
        })
    }

    pub fn num_tx(&self) -> usize {
        self.assignments.len()
    }

    pub fn slot_ms(&self) -> f64 {
        self.slot_ms
    }

    pub fn round_duration_ms(&self) -> f64 {
        self.num_tx() as f64 * self.slot_ms
    }

    pub fn slot_of(&self, tx: usize) -> usize {
        self.assignments[tx]
    }

    pub fn assignments(&self) -> &[usize] {
        &self.assignments
    }

    /// `(slot, tx)` pairs in slot order.
    pub fn slots(&self) -> Vec<(usize, usize)> {
        let mut by_slot = vec![0; self.num_tx()];
        for (tx, &slot) in self.assignments.iter().enumerate() {
            by_slot[slot] = tx;
        }
        by_slot.into_iter().enumerate().collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Schedule(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_durations() {
        assert_eq!(
            build_tdma_schedule(4, 50.0).unwrap().round_duration_ms(),
            200.0
        );
        assert_eq!(
            build_tdma_schedule(30, 50.0).unwrap().round_duration_ms(),
            1500.0
        );
        assert_eq!(
            build_tdma_schedule(1, 12.5).unwrap().round_duration_ms(),
            12.5
        );
    }

    #[test]
    fn identity_assignment() {
        let s = build_tdma_schedule(5, 50.0).unwrap();
        assert_eq!(s.assignments(), &[0, 1, 2, 3, 4]);
        assert_eq!(s.slots(), vec![(0, 0), (1, 1), (2, 2), (3, 3), (4, 4)]);
    }

    #[test]
    fn invalid_schedules() {
        assert!(matches!(
            build_tdma_schedule(0, 50.0),
            Err(Error::Schedule(_))
        ));
        assert!(build_tdma_schedule(3, 0.0).is_err());
        assert!(build_tdma_schedule(3, f64::NAN).is_err());
        assert!(TdmaSchedule::with_assignments(50.0, vec![0, 0, 1]).is_err());
        assert!(TdmaSchedule::with_assignments(50.0, vec![0, 3, 1]).is_err());
    }

    #[test]
    fn json_shape_and_validation() {
        let s = TdmaSchedule::with_assignments(50.0, vec![2, 0, 1]).unwrap();
        let text = s.to_json().unwrap();
        assert_eq!(text, r#"{"num_tx":3,"slot_ms":50.0,"assignments":[2,0,1]}"#);
        assert_eq!(TdmaSchedule::from_json(&text).unwrap(), s);
        assert_eq!(s.slots(), vec![(0, 1), (1, 2), (2, 0)]);
        assert!(
            TdmaSchedule::from_json(r#"{"num_tx":2,"slot_ms":50.0,"assignments":[1,1]}"#).is_err()
        );
        assert!(
            TdmaSchedule::from_json(r#"{"num_tx":3,"slot_ms":50.0,"assignments":[0,1]}"#).is_err()
        );
    }
}

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{
    AttendanceResult, AttendanceStatus, AuthEvent, AuthPayload, ClassSession, Evidence, MacAddr,
    Reason, Registry, StudentRecord,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FraudRule {
    ProxyScan,
    DuplicateTagUse,
    SharedDevice,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FraudFlag {
    pub student_id: String,
    pub rule: FraudRule,
    /// Events that triggered the rule.
    pub event_seqs: Vec<u64>,
}

impl FraudFlag {
    pub fn reason(&self) -> Reason {
        match self.rule {
            FraudRule::DuplicateTagUse => Reason::DuplicateTagUse,
            FraudRule::ProxyScan | FraudRule::SharedDevice => Reason::TagMacMismatch,
        }
    }
}

/// One result per registered student, in `student_id` order.
///
/// Present requires a scan of the student's tag and a presence event of the
/// student's MAC on the session network, both inside the session window and
/// at most `pairing_window_ms` apart. Evidence is the pair minimising
/// `(t_rfid, t_wifi, seq_rfid, seq_wifi)`. Students caught by an enabled fraud
/// rule are Flagged regardless of pairing.
pub fn evaluate_attendance(session: &ClassSession, registry: &Registry) -> Vec<AttendanceResult> {
    let flags = detect_fraud(session, registry);
    registry
        .iter()
        .map(|student| {
            if let Some(flag) = flags.iter().find(|f| f.student_id == student.student_id) {
                return AttendanceResult {
                    student_id: student.student_id.clone(),
                    status: AttendanceStatus::Flagged,
                    evidence: None,
                    reason: flag.reason(),
                };
            }
            match pair_student(session, student) {
                Ok(evidence) => AttendanceResult {
                    student_id: student.student_id.clone(),
                    status: AttendanceStatus::Present,
                    evidence: Some(evidence),
                    reason: Reason::Ok,
                },
                Err(reason) => AttendanceResult {
                    student_id: student.student_id.clone(),
                    status: AttendanceStatus::Absent,
                    evidence: None,
                    reason,
                },
            }
        })
        .collect()
}

fn scans_of<'a>(session: &'a ClassSession, student: &'a StudentRecord) -> impl Iterator<Item = &'a AuthEvent> {
    session.events().iter().filter(move |e| {
        matches!(&e.payload, AuthPayload::RfidScan { tag_uid } if *tag_uid == student.tag_uid)
    })
}

fn presences_of<'a>(session: &'a ClassSession, mac: MacAddr) -> impl Iterator<Item = &'a AuthEvent> {
    session
        .events()
        .iter()
        .filter(move |e| matches!(&e.payload, AuthPayload::WifiPresence { mac: m, .. } if *m == mac))
}

fn on_network(session: &ClassSession, e: &AuthEvent) -> bool {
    matches!(&e.payload, AuthPayload::WifiPresence { network_id, .. } if *network_id == session.network_id)
}

/// Earliest qualifying pair, or the most specific reason there is none.
fn pair_student(session: &ClassSession, student: &StudentRecord) -> Result<Evidence, Reason> {
    let scans: Vec<&AuthEvent> = scans_of(session, student).collect();
    let presences: Vec<&AuthEvent> = presences_of(session, student.mac).collect();
    if scans.is_empty() {
        return Err(Reason::NoRfid);
    }
    if presences.is_empty() {
        return Err(Reason::NoWifi);
    }
    let scans: Vec<&AuthEvent> = scans.into_iter().filter(|e| session.in_window(e.timestamp)).collect();
    let presences: Vec<&AuthEvent> =
        presences.into_iter().filter(|e| session.in_window(e.timestamp)).collect();
    if scans.is_empty() || presences.is_empty() {
        return Err(Reason::OutsideWindow);
    }
    let presences: Vec<&AuthEvent> = presences.into_iter().filter(|e| on_network(session, e)).collect();
    if presences.is_empty() {
        return Err(Reason::WrongNetwork);
    }
    scans
        .iter()
        .flat_map(|r| presences.iter().map(move |w| (*r, *w)))
        .filter(|(r, w)| r.timestamp.abs_diff(w.timestamp) <= session.pairing_window_ms)
        .min_by_key(|(r, w)| (r.timestamp, w.timestamp, r.seq, w.seq))
        .map(|(r, w)| Evidence { rfid_seq: r.seq, wifi_seq: w.seq })
        .ok_or(Reason::PairingTooFar)
}

/// Applies the enabled fraud rules. At most one flag per (student, rule),
/// sorted by student id then rule.
pub fn detect_fraud(session: &ClassSession, registry: &Registry) -> Vec<FraudFlag> {
    let rules = session.fraud_rules;
    let mut flags = Vec::new();

    for student in registry.iter() {
        let mut scans: Vec<&AuthEvent> =
            scans_of(session, student).filter(|e| session.in_window(e.timestamp)).collect();
        scans.sort_by_key(|e| (e.timestamp, e.seq));

        if rules.proxy_scan {
            let proxy = scans.iter().find_map(|scan| {
                let nearby: Vec<&AuthEvent> = session
                    .events()
                    .iter()
                    .filter(|w| on_network(session, w) && session.in_window(w.timestamp))
                    .filter(|w| w.timestamp.abs_diff(scan.timestamp) <= session.pairing_window_ms)
                    .filter(|w| match &w.payload {
                        AuthPayload::WifiPresence { mac, .. } => registry.by_mac(mac).is_some(),
                        AuthPayload::RfidScan { .. } => false,
                    })
                    .collect();
                let own_device_nearby = nearby.iter().any(|w| {
                    matches!(&w.payload, AuthPayload::WifiPresence { mac, .. } if *mac == student.mac)
                });
                if nearby.is_empty() || own_device_nearby {
                    None
                } else {
                    let mut seqs = vec![scan.seq];
                    seqs.extend(nearby.iter().map(|w| w.seq));
                    Some(seqs)
                }
            });
            if let Some(event_seqs) = proxy {
                flags.push(FraudFlag {
                    student_id: student.student_id.clone(),
                    rule: FraudRule::ProxyScan,
                    event_seqs,
                });
            }
        }

        if rules.duplicate_tag {
            let dup = scans
                .windows(2)
                .find(|w| w[1].timestamp - w[0].timestamp <= session.pairing_window_ms);
            if let Some(w) = dup {
                flags.push(FraudFlag {
                    student_id: student.student_id.clone(),
                    rule: FraudRule::DuplicateTagUse,
                    event_seqs: vec![w[0].seq, w[1].seq],
                });
            }
        }
    }

    if rules.shared_device {
        let mut by_device: BTreeMap<MacAddr, Vec<(&str, Evidence)>> = BTreeMap::new();
        for student in registry.iter() {
            if let Ok(ev) = pair_student(session, student) {
                let mac = session
                    .events()
                    .iter()
                    .find(|e| e.seq == ev.wifi_seq)
                    .and_then(|e| match &e.payload {
                        AuthPayload::WifiPresence { mac, .. } => Some(*mac),
                        AuthPayload::RfidScan { .. } => None,
                    });
                if let Some(mac) = mac {
                    by_device.entry(mac).or_default().push((&student.student_id, ev));
                }
            }
        }
        for users in by_device.values().filter(|u| u.len() > 1) {
            for (student_id, ev) in users {
                flags.push(FraudFlag {
                    student_id: student_id.to_string(),
                    rule: FraudRule::SharedDevice,
                    event_seqs: vec![ev.rfid_seq, ev.wifi_seq],
                });
            }
        }
    }

    flags.sort_by(|a, b| (&a.student_id, a.rule).cmp(&(&b.student_id, b.rule)));
    flags
}

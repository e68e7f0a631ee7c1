//! Fuzz generators and independent oracles shared by the integration and
//! acceptance tests. Oracles are written from the definitions, not from the
//! library code, and only use public data.

#![allow(dead_code)]

use std::cmp::Ordering;
use std::collections::BTreeMap;

use rand::Rng;
use smartclass_core::attendance::{
    AttendanceStatus, AuthEvent, AuthPayload, ClassSession, Evidence, FraudRules, MacAddr, Registry,
    SessionParams, StudentRecord,
};
use smartclass_core::ecosmart::SensorSample;

pub const NET: &str = "campus";
pub const GUEST_NET: &str = "guest";

pub fn tag_for(i: usize) -> String {
    format!("04{:06x}", 0xa30000 + i)
}

pub fn mac_for(i: usize) -> MacAddr {
    MacAddr::new([0xaa, 0xbb, 0xcc, 0xdd, (i >> 8) as u8, i as u8])
}

pub fn registry(n: usize) -> Registry {
    let mut reg = Registry::new();
    for i in 0..n {
        reg.register(&format!("s{i:02}"), &format!("Student {i}"), &tag_for(i), &mac_for(i).to_string())
            .expect("distinct credentials");
    }
    reg
}

/// A random session over a random registry: up to 20 students and 200
/// events. Some students get a correlated scan and join so that Present,
/// near-miss and absent cases all occur.
pub fn fuzz_session(rng: &mut impl Rng, fraud_rules: FraudRules) -> (Registry, ClassSession) {
    let students = rng.random_range(1..=20);
    let reg = registry(students);
    let window_start = rng.random_range(0..1_000_000u64);
    let window_end = window_start + rng.random_range(60_000..3_000_000u64);
    let pairing = rng.random_range(1..=600_000u64);
    let mut session = ClassSession::open(
        "fuzz".into(),
        SessionParams {
            class_id: "c".into(),
            window_start,
            window_end,
            pairing_window_ms: pairing,
            network_id: NET.into(),
            fraud_rules,
        },
    )
    .expect("valid params");

    let lo = window_start.saturating_sub(pairing);
    let hi = window_end + pairing;
    let events = rng.random_range(0..=200);
    while session.events().len() < events {
        let student = rng.random_range(0..students + 2); // the last two are unregistered
        let t = rng.random_range(lo..=hi);
        let network = if rng.random_bool(0.85) { NET } else { GUEST_NET };
        let scan = AuthPayload::RfidScan { tag_uid: tag_for(student).parse().unwrap() };
        let join = AuthPayload::WifiPresence { mac: mac_for(student), network_id: network.into() };
        if rng.random_bool(0.4) && session.events().len() + 2 <= events {
            // Correlated pair, sometimes just outside the pairing window.
            let gap = rng.random_range(0..=pairing + pairing / 2);
            let t2 = if rng.random_bool(0.5) { t + gap } else { t.saturating_sub(gap) };
            session.push_event(t, "door", scan);
            session.push_event(t2, "ap", join);
        } else if rng.random_bool(0.5) {
            session.push_event(t, "door", scan);
        } else {
            session.push_event(t, "ap", join);
        }
    }
    (reg, session)
}

/// Exhaustive pair enumeration: the lexicographically smallest
/// `(t_rfid, t_wifi, seq_rfid, seq_wifi)` over all qualifying pairs, if any.
pub fn oracle_evidence(session: &ClassSession, student: &StudentRecord) -> Option<Evidence> {
    let in_window = |t: u64| session.window_start <= t && t <= session.window_end;
    let mut best: Option<(u64, u64, u64, u64)> = None;
    for r in session.events() {
        for w in session.events() {
            let AuthPayload::RfidScan { tag_uid } = &r.payload else { continue };
            let AuthPayload::WifiPresence { mac, network_id } = &w.payload else { continue };
            let qualifies = *tag_uid == student.tag_uid
                && *mac == student.mac
                && *network_id == session.network_id
                && in_window(r.timestamp)
                && in_window(w.timestamp)
                && r.timestamp.abs_diff(w.timestamp) <= session.pairing_window_ms;
            let key = (r.timestamp, w.timestamp, r.seq, w.seq);
            if qualifies && best.is_none_or(|b| key < b) {
                best = Some(key);
            }
        }
    }
    best.map(|(_, _, rfid_seq, wifi_seq)| Evidence { rfid_seq, wifi_seq })
}

pub fn is_rfid(e: &AuthEvent) -> bool {
    matches!(e.payload, AuthPayload::RfidScan { .. })
}

pub fn present_count(results: &[smartclass_core::attendance::AttendanceResult]) -> usize {
    results.iter().filter(|r| r.status == AttendanceStatus::Present).count()
}

/// Threshold semantics stated directly: a rising band turns on at or above
/// `on` and off at or below `off`; a falling band the other way round.
#[derive(Debug, Clone, Copy)]
pub struct Band {
    pub on: f64,
    pub off: f64,
    pub rising: bool,
}

impl Band {
    pub fn reaches_on(&self, m: f64) -> bool {
        if self.rising { m >= self.on } else { m <= self.on }
    }

    pub fn reaches_off(&self, m: f64) -> bool {
        if self.rising { m <= self.off } else { m >= self.off }
    }

    pub fn strictly_inside(&self, m: f64) -> bool {
        let (lo, hi) = if self.on < self.off { (self.on, self.off) } else { (self.off, self.on) };
        lo < m && m < hi
    }
}

pub const HVAC: Band = Band { on: 26.0, off: 24.0, rising: true };
pub const LIGHT: Band = Band { on: 300.0, off: 400.0, rising: false };
pub const AIR: Band = Band { on: 600.0, off: 400.0, rising: true };
pub const HUMID: Band = Band { on: 70.0, off: 60.0, rising: true };

/// Reference thermostat: on/off per sample for each actuator (hvac,
/// lighting, ventilation) starting from all off. Ventilation is on while
/// either the air or the humidity band holds it on.
pub fn oracle_states(trace: &[SensorSample]) -> Vec<[bool; 3]> {
    let (mut hvac, mut light, mut vent) = (false, false, false);
    let step = |on: bool, band: Band, m: f64| {
        if !on && band.reaches_on(m) {
            true
        } else if on && band.reaches_off(m) {
            false
        } else {
            on
        }
    };
    trace
        .iter()
        .map(|s| {
            hvac = step(hvac, HVAC, s.temp_c);
            light = step(light, LIGHT, s.lux);
            vent = step(vent, AIR, s.air_ppm) || step(vent, HUMID, s.humidity_pct);
            [hvac, light, vent]
        })
        .collect()
}

/// Bounded random walk over plausible indoor readings.
pub fn random_trace(rng: &mut impl Rng, len: usize) -> Vec<SensorSample> {
    let mut s = SensorSample {
        timestamp: 0,
        temp_c: rng.random_range(18.0..32.0),
        humidity_pct: rng.random_range(30.0..90.0),
        lux: rng.random_range(0.0..800.0),
        air_ppm: rng.random_range(200.0..900.0),
    };
    (0..len)
        .map(|i| {
            s.timestamp = i as u64 * 1000;
            s.temp_c = (s.temp_c + rng.random_range(-0.8..0.8)).clamp(10.0, 40.0);
            s.humidity_pct = (s.humidity_pct + rng.random_range(-3.0..3.0)).clamp(0.0, 100.0);
            s.lux = (s.lux + rng.random_range(-40.0..40.0)).clamp(0.0, 1200.0);
            s.air_ppm = (s.air_ppm + rng.random_range(-40.0..40.0)).clamp(0.0, 1200.0);
            s
        })
        .collect()
}

/// Signed bucket counts of `text` under the documented hashing scheme:
/// lowercase alphanumeric tokens, 64-bit FNV-1a, bucket `hash % dims`,
/// negative when bit 63 is set.
pub fn bucket_counts(text: &str, dims: usize) -> BTreeMap<usize, i64> {
    let mut counts = BTreeMap::new();
    for token in text.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()) {
        let mut h: u64 = 0xcbf29ce484222325;
        for b in token.to_lowercase().bytes() {
            h = (h ^ u64::from(b)).wrapping_mul(0x100000001b3);
        }
        *counts.entry((h % dims as u64) as usize).or_insert(0) += if h >> 63 == 1 { -1 } else { 1 };
    }
    counts.retain(|_, c| *c != 0);
    counts
}

/// Cosine as an exact pair `(dot, |q|^2 * |v|^2)` of integers.
#[derive(Debug, Clone, Copy)]
pub struct ExactCosine {
    pub dot: i128,
    pub norms: i128,
}

impl ExactCosine {
    pub fn new(q: &BTreeMap<usize, i64>, v: &BTreeMap<usize, i64>) -> Self {
        let sq = |m: &BTreeMap<usize, i64>| m.values().map(|c| i128::from(*c) * i128::from(*c)).sum::<i128>();
        let norms = sq(q) * sq(v);
        let dot = if norms == 0 { 0 } else { q.iter().map(|(i, c)| i128::from(*c) * i128::from(*v.get(i).unwrap_or(&0))).sum() };
        Self { dot, norms }
    }

    pub fn value(&self) -> f64 {
        if self.norms == 0 { 0.0 } else { self.dot as f64 / (self.norms as f64).sqrt() }
    }

    /// Exact comparison of dot/sqrt(norms) without rounding.
    pub fn cmp(&self, other: &Self) -> Ordering {
        let sign = |c: &Self| c.dot.signum();
        match sign(self).cmp(&sign(other)) {
            Ordering::Equal if sign(self) == 0 => Ordering::Equal,
            Ordering::Equal => {
                let lhs = self.dot * self.dot * other.norms;
                let rhs = other.dot * other.dot * self.norms;
                if sign(self) > 0 { lhs.cmp(&rhs) } else { rhs.cmp(&lhs) }
            }
            o => o,
        }
    }
}

/// Brute-force top `k`: best first, exact ties to the lower chunk id.
pub fn exact_ranking(query: &str, chunks: &[(usize, &str)], dims: usize, k: usize) -> Vec<(usize, f64)> {
    let q = bucket_counts(query, dims);
    let mut scored: Vec<(usize, ExactCosine)> =
        chunks.iter().map(|(id, text)| (*id, ExactCosine::new(&q, &bucket_counts(text, dims)))).collect();
    scored.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    scored.into_iter().take(k).map(|(id, c)| (id, c.value())).collect()
}

/// Lowercase pseudo-words, distinct with overwhelming probability.
pub fn vocabulary(rng: &mut impl Rng, n: usize) -> Vec<String> {
    const LETTERS: &[u8] = b"abcdefghijklmnopqrstuvwxyz";
    (0..n)
        .map(|_| {
            let len = rng.random_range(3..10);
            (0..len).map(|_| LETTERS[rng.random_range(0..LETTERS.len())] as char).collect()
        })
        .collect()
}

/// Random prose with sentence and paragraph breaks.
pub fn random_text(rng: &mut impl Rng, vocab: &[String], words: usize) -> String {
    let mut out = String::new();
    for i in 0..words {
        if i > 0 {
            let r = rng.next_u32() % 100;
            out.push_str(match r {
                0..=1 => ".\n\n",
                2..=5 => ".\n",
                6..=12 => ". ",
                _ => " ",
            });
        }
        out.push_str(&vocab[rng.random_range(0..vocab.len())]);
    }
    out.push('.');
    out
}

pub const COURSE: &str = include_str!("../fixtures/course.txt");

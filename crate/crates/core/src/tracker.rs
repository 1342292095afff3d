//! Machine-state ledger: light combination → state, detection scheduling,
//! occlusion checks, duration accounting and alarms.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::detect::Detection;
use crate::error::{invalid, Result};
use crate::imaging::{iou, BoundingBox};
use crate::label::{Lamp, LightCombination};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum MachineState {
    Running,
    Idle,
    Error,
    Off,
    Occluded,
}

impl MachineState {
    pub const ALL: [MachineState; 5] = [MachineState::Running, MachineState::Idle, MachineState::Error, MachineState::Off, MachineState::Occluded];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            MachineState::Running => "Running",
            MachineState::Idle => "Idle",
            MachineState::Error => "Error",
            MachineState::Off => "Off",
            MachineState::Occluded => "Occluded",
        }
    }
}

impl fmt::Display for MachineState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Red dominates yellow, yellow dominates green; white alone never decides.
pub fn map_state(c: LightCombination) -> MachineState {
    match c {
        LightCombination::Off => MachineState::Off,
        LightCombination::Other => MachineState::Occluded,
        c if c.contains(Lamp::Red) => MachineState::Error,
        c if c.contains(Lamp::Yellow) => MachineState::Idle,
        _ => MachineState::Running,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackerConfig {
    pub detection_interval_s: f64,
    pub fps: f64,
    pub smoothing_window: usize,
    /// A machine counts as visible when some detection overlaps its box at
    /// least this much.
    pub occlusion_iou: f64,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self { detection_interval_s: 0.2, fps: 22.0, smoothing_window: 5, occlusion_iou: 0.5 }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.detection_interval_s > 0.0 && self.detection_interval_s.is_finite()) || !(self.fps > 0.0 && self.fps.is_finite()) {
            return Err(invalid!("detection interval and fps must be positive"));
        }
        if self.smoothing_window == 0 || !(0.0..=1.0).contains(&self.occlusion_iou) {
            return Err(invalid!("smoothing window must be positive and occlusion IoU in [0, 1]"));
        }
        Ok(())
    }

    /// Timestamp of frame `i` at the configured rate.
    pub fn frame_time(&self, i: usize) -> f64 {
        i as f64 / self.fps
    }
}

/// A monitored machine and the static box of its stack light.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Machine {
    pub id: String,
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "lowercase")]
pub enum Event {
    Transition { t: f64, frame: usize, machine: String, from: MachineState, to: MachineState },
    Alarm { t: f64, frame: usize, machine: String },
}

/// Seconds → integer microseconds, so durations add up exactly.
fn ticks(t: f64) -> Result<i64> {
    if !t.is_finite() || libm::fabs(t) > 9.0e12 {
        return Err(invalid!("timestamp {t} is not representable"));
    }
    Ok(libm::round(t * 1e6) as i64)
}

#[derive(Clone, Debug)]
struct Slot {
    state: Option<MachineState>,
    occluded: bool,
    micros: [i64; 5],
    transitions: usize,
    alarms: usize,
}

/// Per-machine duration ledger fed one frame at a time.
#[derive(Clone, Debug)]
pub struct Tracker {
    cfg: TrackerConfig,
    machines: Vec<Machine>,
    slots: Vec<Slot>,
    first: Option<i64>,
    last: Option<i64>,
    last_pass: Option<i64>,
    interval: i64,
    events: Vec<Event>,
}

impl Tracker {
    pub fn new(cfg: TrackerConfig, machines: Vec<Machine>) -> Result<Self> {
        cfg.validate()?;
        for (i, m) in machines.iter().enumerate() {
            if machines[..i].iter().any(|o| o.id == m.id) {
                return Err(invalid!("machine id {} used twice", m.id));
            }
        }
        let interval = ticks(cfg.detection_interval_s)?;
        let slots = vec![Slot { state: None, occluded: false, micros: [0; 5], transitions: 0, alarms: 0 }; machines.len()];
        Ok(Self { cfg, machines, slots, first: None, last: None, last_pass: None, interval, events: Vec::new() })
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.cfg
    }

    pub fn machines(&self) -> &[Machine] {
        &self.machines
    }

    /// Whether a detection pass is due at `t`: the first frame, then the
    /// first frame at least one interval after the previous pass.
    pub fn detection_due(&self, t: f64) -> Result<bool> {
        let t = ticks(t)?;
        Ok(self.last_pass.is_none_or(|p| t >= p + self.interval))
    }

    pub fn current_state(&self, machine: usize) -> Option<MachineState> {
        self.slots.get(machine).and_then(|s| s.state)
    }

    /// Accounts the time since the previous frame to each machine's current
    /// state, then applies this frame's labels (and, when given, a detection
    /// pass). Returns the events raised by this frame.
    pub fn step(&mut self, frame: usize, t: f64, labels: &[LightCombination], detections: Option<&[Detection]>) -> Result<Vec<Event>> {
        if labels.len() != self.machines.len() {
            return Err(invalid!("expected {} labels, got {}", self.machines.len(), labels.len()));
        }
        let now = ticks(t)?;
        if let Some(prev) = self.last {
            if now <= prev {
                return Err(invalid!("timestamp {t} does not advance past the previous frame"));
            }
            for s in &mut self.slots {
                if let Some(state) = s.state {
                    s.micros[state.index()] += now - prev;
                }
            }
        } else {
            self.first = Some(now);
        }
        self.last = Some(now);

        if let Some(dets) = detections {
            for (s, m) in self.slots.iter_mut().zip(&self.machines) {
                s.occluded = !dets.iter().any(|d| iou(&d.bbox, &m.bbox) >= self.cfg.occlusion_iou);
            }
            self.last_pass = Some(now);
        }

        let mut raised = Vec::new();
        for ((s, m), &label) in self.slots.iter_mut().zip(&self.machines).zip(labels) {
            let next = if s.occluded { MachineState::Occluded } else { map_state(label) };
            match s.state {
                Some(prev) if prev != next => {
                    s.transitions += 1;
                    raised.push(Event::Transition { t, frame, machine: m.id.clone(), from: prev, to: next });
                    if next == MachineState::Error {
                        s.alarms += 1;
                        raised.push(Event::Alarm { t, frame, machine: m.id.clone() });
                    }
                }
                _ => {}
            }
            s.state = Some(next);
        }
        self.events.extend(raised.iter().cloned());
        Ok(raised)
    }

    /// Every event so far, in time order.
    pub fn events(&self) -> &[Event] {
        &self.events
    }

    /// Monitored time in microseconds.
    pub fn elapsed_micros(&self) -> i64 {
        match (self.first, self.last) {
            (Some(a), Some(b)) => b - a,
            _ => 0,
        }
    }

    pub fn report(&self) -> Report {
        let machines = self
            .slots
            .iter()
            .zip(&self.machines)
            .map(|(s, m)| {
                let denom = s.micros.iter().sum::<i64>() - s.micros[MachineState::Occluded.index()];
                MachineReport {
                    id: m.id.clone(),
                    micros: s.micros,
                    seconds: s.micros.map(|u| u as f64 / 1e6),
                    utilization: if denom > 0 { s.micros[MachineState::Running.index()] as f64 / denom as f64 } else { 0.0 },
                    transitions: s.transitions,
                    alarms: s.alarms,
                    state: s.state,
                }
            })
            .collect();
        Report { elapsed_s: self.elapsed_micros() as f64 / 1e6, machines }
    }
}

/// Ledger of one machine. Duration arrays are indexed like
/// [`MachineState::ALL`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MachineReport {
    pub id: String,
    pub micros: [i64; 5],
    pub seconds: [f64; 5],
    /// Running time over non-occluded time; 0 when nothing was visible.
    pub utilization: f64,
    pub transitions: usize,
    pub alarms: usize,
    pub state: Option<MachineState>,
}

impl MachineReport {
    pub fn seconds_in(&self, s: MachineState) -> f64 {
        self.seconds[s.index()]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub elapsed_s: f64,
    pub machines: Vec<MachineReport>,
}

impl Report {
    /// `machine,state,seconds` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("machine,state,seconds\n");
        for m in &self.machines {
            for s in MachineState::ALL {
                out.push_str(&format!("{},{},{:.6}\n", m.id, s, m.micros[s.index()] as f64 / 1e6));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::label::LightCombination as L;
    use alloc::string::ToString;
    use proptest::prelude::*;

    fn machines(n: usize) -> Vec<Machine> {
        (0..n).map(|i| Machine { id: format!("m{i}"), bbox: BoundingBox::new(100 * i as u32, 0, 20, 50) }).collect()
    }

    #[test]
    fn state_table() {
        let expected = [
            (L::Green, MachineState::Running),
            (L::GreenRed, MachineState::Error),
            (L::GreenWhite, MachineState::Running),
            (L::GreenYellow, MachineState::Idle),
            (L::GreenYellowRed, MachineState::Error),
            (L::Yellow, MachineState::Idle),
            (L::YellowRed, MachineState::Error),
            (L::Red, MachineState::Error),
            (L::Off, MachineState::Off),
            (L::Other, MachineState::Occluded),
        ];
        for (c, s) in expected {
            assert_eq!(map_state(c), s, "{c}");
        }
        // brute force over lamp sets: red wins, then yellow, then green
        for bits in 0..16u8 {
            let (g, y, r, w) = (bits & 1 != 0, bits & 2 != 0, bits & 4 != 0, bits & 8 != 0);
            if let Some(c) = L::from_lamps(g, y, r, w) {
                let s = if r {
                    MachineState::Error
                } else if y {
                    MachineState::Idle
                } else if g {
                    MachineState::Running
                } else {
                    MachineState::Off
                };
                assert_eq!(map_state(c), s);
            }
        }
    }

    #[test]
    fn green_for_ten_seconds() {
        let mut t = Tracker::new(TrackerConfig::default(), machines(1)).unwrap();
        for i in 0..=220 {
            t.step(i, i as f64 / 22.0, &[L::Green], None).unwrap();
        }
        let r = t.report();
        assert!((r.machines[0].seconds_in(MachineState::Running) - 10.0).abs() <= 1.0 / 22.0);
        assert_eq!(r.machines[0].utilization, 1.0);
        assert_eq!(r.machines[0].transitions, 0);
        assert!(t.events().is_empty());
    }

    #[test]
    fn detection_schedule_is_every_fifth_frame() {
        let cfg = TrackerConfig::default();
        let mut t = Tracker::new(cfg.clone(), machines(1)).unwrap();
        let visible = [Detection { bbox: BoundingBox::new(0, 0, 20, 50), score: 0.9 }];
        let mut passes = Vec::new();
        for i in 0..2000 {
            let ts = cfg.frame_time(i);
            let due = t.detection_due(ts).unwrap();
            if due {
                passes.push(i);
            }
            t.step(i, ts, &[L::Green], due.then_some(&visible[..])).unwrap();
        }
        assert!(passes.iter().enumerate().all(|(k, &f)| f == 5 * k), "{:?}", &passes[..10]);
    }

    #[test]
    fn occlusion_span_is_accounted() {
        let cfg = TrackerConfig::default();
        let mut t = Tracker::new(cfg.clone(), machines(2)).unwrap();
        let both = [Detection { bbox: BoundingBox::new(0, 0, 20, 50), score: 0.9 }, Detection { bbox: BoundingBox::new(100, 0, 20, 50), score: 0.9 }];
        for i in 0..300 {
            let ts = cfg.frame_time(i);
            let hidden = (100..200).contains(&i);
            // an occluded tower is classified as "other" and missed by the detector
            let labels = [if hidden { L::Other } else { L::Green }, L::Yellow];
            let dets: &[Detection] = if hidden { &both[1..] } else { &both };
            let due = t.detection_due(ts).unwrap();
            t.step(i, ts, &labels, due.then_some(dets)).unwrap();
        }
        let r = t.report();
        let occ = r.machines[0].micros[MachineState::Occluded.index()];
        assert_eq!(occ, ticks(200.0 / 22.0).unwrap() - ticks(100.0 / 22.0).unwrap());
        assert_eq!(r.machines[1].micros[MachineState::Idle.index()], t.elapsed_micros());
        assert_eq!(r.machines[0].utilization, 1.0);
    }

    #[test]
    fn detection_miss_marks_occluded_until_next_pass() {
        let mut t = Tracker::new(TrackerConfig::default(), machines(1)).unwrap();
        t.step(0, 0.0, &[L::Green], Some(&[])).unwrap();
        assert_eq!(t.current_state(0), Some(MachineState::Occluded));
        t.step(1, 0.1, &[L::Green], None).unwrap();
        assert_eq!(t.current_state(0), Some(MachineState::Occluded));
        let seen = [Detection { bbox: BoundingBox::new(1, 1, 20, 50), score: 0.7 }];
        assert!(t.detection_due(0.2).unwrap());
        t.step(2, 0.2, &[L::Green], Some(&seen)).unwrap();
        assert_eq!(t.current_state(0), Some(MachineState::Running));
    }

    #[test]
    fn alarm_on_entering_error() {
        let cfg = TrackerConfig::default();
        let mut t = Tracker::new(cfg.clone(), machines(1)).unwrap();
        let mut alarms = Vec::new();
        for i in 0..300 {
            let ts = cfg.frame_time(i);
            let label = if ts >= 5.0 && ts < 8.0 { L::Red } else if ts >= 8.0 && ts < 9.0 { L::YellowRed } else { L::Green };
            for e in t.step(i, ts, &[label], None).unwrap() {
                if let Event::Alarm { t, .. } = e {
                    alarms.push(t);
                }
            }
        }
        assert_eq!(alarms.len(), 1);
        assert_eq!(alarms[0], cfg.frame_time(110));
        let r = t.report();
        assert_eq!(r.machines[0].alarms, 1);
        assert_eq!(r.machines[0].transitions, 2);
    }

    #[test]
    fn initial_error_is_not_an_alarm() {
        let mut t = Tracker::new(TrackerConfig::default(), machines(1)).unwrap();
        assert!(t.step(0, 0.0, &[L::Red], None).unwrap().is_empty());
    }

    #[test]
    fn timestamps_must_increase() {
        let mut t = Tracker::new(TrackerConfig::default(), machines(1)).unwrap();
        t.step(0, 1.0, &[L::Green], None).unwrap();
        assert!(t.step(1, 1.0, &[L::Green], None).is_err());
        assert!(t.step(1, 0.5, &[L::Green], None).is_err());
        assert!(t.step(1, f64::NAN, &[L::Green], None).is_err());
        assert!(t.step(1, 2.0, &[], None).is_err());
    }

    #[test]
    fn empty_session_report() {
        let t = Tracker::new(TrackerConfig::default(), machines(2)).unwrap();
        let r = t.report();
        assert_eq!(r.elapsed_s, 0.0);
        assert!(r.machines.iter().all(|m| m.micros == [0; 5] && m.transitions == 0 && m.utilization == 0.0));
        let csv = r.to_csv();
        assert_eq!(csv.lines().count(), 1 + 2 * 5);
        assert!(csv.contains("m1,Occluded,0.000000"));
    }

    #[test]
    fn config_and_machine_validation() {
        assert!(Tracker::new(TrackerConfig { fps: 0.0, ..Default::default() }, machines(1)).is_err());
        assert!(Tracker::new(TrackerConfig { detection_interval_s: -1.0, ..Default::default() }, machines(1)).is_err());
        let dup = vec![Machine { id: "a".to_string(), bbox: BoundingBox::new(0, 0, 1, 1) }; 2];
        assert!(Tracker::new(TrackerConfig::default(), dup).is_err());
    }

    #[test]
    fn event_json_shape() {
        let e = Event::Alarm { t: 1.5, frame: 33, machine: "m0".to_string() };
        assert_eq!(serde_json::to_value(&e).unwrap(), serde_json::json!({"event": "alarm", "t": 1.5, "frame": 33, "machine": "m0"}));
    }

    proptest! {
        #[test]
        fn durations_are_conserved(seed in any::<u64>(), n in 1usize..400) {
            let mut rng = crate::seed::rng(seed, 600, 0);
            use rand::Rng;
            let mut t = Tracker::new(TrackerConfig::default(), machines(3)).unwrap();
            let mut ts = rng.random_range(0.0..100.0);
            let mut alarms_seen = 0;
            for i in 0..n {
                ts += rng.random_range(0.001..0.2);
                let labels: Vec<L> = (0..3).map(|_| L::ALL[rng.random_range(0..10)]).collect();
                let dets: Option<Vec<Detection>> = rng.random_bool(0.3).then(|| vec![Detection { bbox: BoundingBox::new(0, 0, 20, 50), score: 1.0 }]);
                alarms_seen += t.step(i, ts, &labels, dets.as_deref()).unwrap().iter().filter(|e| matches!(e, Event::Alarm { .. })).count();
            }
            let r = t.report();
            for m in &r.machines {
                prop_assert_eq!(m.micros.iter().sum::<i64>(), t.elapsed_micros());
            }
            let into_error = t.events().iter().filter(|e| matches!(e, Event::Transition { to: MachineState::Error, .. })).count();
            prop_assert_eq!(alarms_seen, into_error);
            let mut last = f64::NEG_INFINITY;
            for e in t.events() {
                if let Event::Transition { t, from, to, .. } = e {
                    prop_assert!(from != to);
                    prop_assert!(*t >= last);
                    last = *t;
                }
            }
        }
    }
}

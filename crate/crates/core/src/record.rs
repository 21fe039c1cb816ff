//! Time-tagged detection records, gating and the binary/CSV record formats.
//!
//! Binary layout (little endian):
//!
//! ```text
//! magic "PHRC" | version u16 | tick_ns u16 | config_hash u64 | seed u64
//! first_shot u64 | shot_count u64
//! n_trials u32 | trial_period u32 | read_start u64
//! d1 offset u32, width u32 | d2 offset u32, width u32 | d3 offset u32, width u32
//! entries until end of stream:
//!   varint shot gap | varint herald trial (0 = none) | varint event count
//!   per event: u8 detector id (1..=3) | varint tick
//! ```
//!
//! Only shots with a herald or at least one click are stored; the shot gap is
//! the number of skipped (empty) shots since the previous entry.

use std::io::{self, BufRead, Read, Write};

use integer_encoding::{VarIntReader, VarIntWriter};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"PHRC";
pub const VERSION: u16 = 1;
/// Time-interval analyzer resolution.
pub const TICK_NS: u16 = 2;
pub const TICK_SECONDS: f64 = TICK_NS as f64 * 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Detector {
    D1 = 1,
    D2 = 2,
    D3 = 3,
}

impl Detector {
    fn from_id(id: u8) -> Result<Self> {
        match id {
            1 => Ok(Detector::D1),
            2 => Ok(Detector::D2),
            3 => Ok(Detector::D3),
            _ => Err(Error::Malformed(format!("unknown detector id {id}"))),
        }
    }
}

/// Gate window in ticks, relative to its reference time. Half-open:
/// `[offset, offset + width)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub offset: u32,
    pub width: u32,
}

impl Window {
    fn contains(&self, rel: u64) -> bool {
        rel >= u64::from(self.offset) && rel < u64::from(self.offset) + u64::from(self.width)
    }

    pub fn center(&self) -> u64 {
        u64::from(self.offset) + u64::from(self.width / 2)
    }
}

/// Per-detector gate windows: 120 ns for the herald detector, 100 ns for the
/// two idler detectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GateWindows {
    pub d1: Window,
    pub d2: Window,
    pub d3: Window,
}

impl Default for GateWindows {
    fn default() -> Self {
        GateWindows {
            d1: Window { offset: 0, width: 60 },
            d2: Window { offset: 0, width: 50 },
            d3: Window { offset: 0, width: 50 },
        }
    }
}

/// Where the gates sit within one shot. D1 has one window per write trial,
/// starting at `(j - 1) * trial_period`; D2 and D3 have one window relative to
/// `read_start`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GateSchedule {
    pub n_trials: u32,
    pub trial_period: u32,
    pub read_start: u64,
    pub windows: GateWindows,
}

impl GateSchedule {
    pub fn validate(&self) -> Result<()> {
        let w = &self.windows;
        if self.n_trials == 0 || self.trial_period == 0 {
            return Err(Error::Config("gate schedule needs n_trials >= 1 and a trial period".into()));
        }
        if w.d1.width == 0 || w.d2.width == 0 || w.d3.width == 0 {
            return Err(Error::Config("gate widths must be positive".into()));
        }
        if self.n_trials > 1 && u64::from(w.d1.offset % self.trial_period) + u64::from(w.d1.width) > u64::from(self.trial_period) {
            return Err(Error::Config("D1 windows of consecutive trials overlap".into()));
        }
        Ok(())
    }

    /// Trial index (1-based) whose D1 window contains `tick`.
    pub fn herald_window(&self, tick: u64) -> Option<u32> {
        let period = u64::from(self.trial_period);
        (0..u64::from(self.n_trials))
            .find(|j| tick >= j * period && self.windows.d1.contains(tick - j * period))
            .map(|j| j as u32 + 1)
    }

    fn in_read_window(&self, w: &Window, tick: u64) -> bool {
        tick >= self.read_start && w.contains(tick - self.read_start)
    }

    pub fn d1_tick(&self, trial: u32) -> u64 {
        u64::from(trial - 1) * u64::from(self.trial_period) + self.windows.d1.center()
    }

    pub fn d2_tick(&self) -> u64 {
        self.read_start + self.windows.d2.center()
    }

    pub fn d3_tick(&self) -> u64 {
        self.read_start + self.windows.d3.center()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RecordHeader {
    pub version: u16,
    pub tick_ns: u16,
    pub config_hash: u64,
    pub seed: u64,
    pub first_shot: u64,
    pub shot_count: u64,
    pub schedule: GateSchedule,
}

impl RecordHeader {
    pub fn new(config_hash: u64, seed: u64, first_shot: u64, shot_count: u64, schedule: GateSchedule) -> Self {
        RecordHeader {
            version: VERSION,
            tick_ns: TICK_NS,
            config_hash,
            seed,
            first_shot,
            shot_count,
            schedule,
        }
    }

    fn end_shot(&self) -> u64 {
        self.first_shot + self.shot_count
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&self.version.to_le_bytes())?;
        w.write_all(&self.tick_ns.to_le_bytes())?;
        for v in [self.config_hash, self.seed, self.first_shot, self.shot_count] {
            w.write_all(&v.to_le_bytes())?;
        }
        let s = &self.schedule;
        w.write_all(&s.n_trials.to_le_bytes())?;
        w.write_all(&s.trial_period.to_le_bytes())?;
        w.write_all(&s.read_start.to_le_bytes())?;
        for win in [s.windows.d1, s.windows.d2, s.windows.d3] {
            w.write_all(&win.offset.to_le_bytes())?;
            w.write_all(&win.width.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Malformed("bad magic".into()));
        }
        let version = read_u16(r)?;
        if version != VERSION {
            return Err(Error::Malformed(format!("unsupported version {version}")));
        }
        let tick_ns = read_u16(r)?;
        let config_hash = read_u64(r)?;
        let seed = read_u64(r)?;
        let first_shot = read_u64(r)?;
        let shot_count = read_u64(r)?;
        let n_trials = read_u32(r)?;
        let trial_period = read_u32(r)?;
        let read_start = read_u64(r)?;
        let mut win = [Window { offset: 0, width: 0 }; 3];
        for w in &mut win {
            w.offset = read_u32(r)?;
            w.width = read_u32(r)?;
        }
        Ok(RecordHeader {
            version,
            tick_ns,
            config_hash,
            seed,
            first_shot,
            shot_count,
            schedule: GateSchedule {
                n_trials,
                trial_period,
                read_start,
                windows: GateWindows {
                    d1: win[0],
                    d2: win[1],
                    d3: win[2],
                },
            },
        })
    }
}

fn read_u16<R: Read>(r: &mut R) -> io::Result<u16> {
    let mut b = [0u8; 2];
    r.read_exact(&mut b)?;
    Ok(u16::from_le_bytes(b))
}

fn read_u32<R: Read>(r: &mut R) -> io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> io::Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

/// Gated outcome of one shot: herald trial and first click tick per detector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ShotEntry {
    pub shot: u64,
    pub herald_trial: Option<u32>,
    pub d1: Option<u64>,
    pub d2: Option<u64>,
    pub d3: Option<u64>,
}

impl ShotEntry {
    pub fn empty(shot: u64) -> Self {
        ShotEntry {
            shot,
            herald_trial: None,
            d1: None,
            d2: None,
            d3: None,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.herald_trial.is_none() && self.d1.is_none() && self.d2.is_none() && self.d3.is_none()
    }

    fn events(&self) -> impl Iterator<Item = (Detector, u64)> {
        [(Detector::D1, self.d1), (Detector::D2, self.d2), (Detector::D3, self.d3)]
            .into_iter()
            .filter_map(|(d, t)| t.map(|t| (d, t)))
    }

    fn write_to<W: Write>(&self, w: &mut W, gap: u64) -> io::Result<()> {
        w.write_varint(gap)?;
        w.write_varint(self.herald_trial.unwrap_or(0))?;
        w.write_varint(self.events().count() as u32)?;
        for (d, t) in self.events() {
            w.write_all(&[d as u8])?;
            w.write_varint(t)?;
        }
        Ok(())
    }
}

/// Raw, ungated photoelectric event.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RawEvent {
    pub shot: u64,
    pub detector: Detector,
    pub tick: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionRecord {
    header: RecordHeader,
    entries: Vec<ShotEntry>,
}

impl DetectionRecord {
    /// Builds a record from gated entries, checking ordering and gate membership.
    pub fn new(header: RecordHeader, entries: Vec<ShotEntry>) -> Result<Self> {
        header.schedule.validate()?;
        let rec = DetectionRecord { header, entries };
        rec.check()?;
        Ok(rec)
    }

    pub(crate) fn from_parts_unchecked(header: RecordHeader, entries: Vec<ShotEntry>) -> Self {
        DetectionRecord { header, entries }
    }

    fn check(&self) -> Result<()> {
        let s = &self.header.schedule;
        let mut prev: Option<u64> = None;
        for e in &self.entries {
            if prev.is_some_and(|p| e.shot <= p) {
                return Err(Error::Malformed(format!("shot index {} not increasing", e.shot)));
            }
            if e.shot < self.header.first_shot || e.shot >= self.header.end_shot() {
                return Err(Error::Malformed(format!("shot index {} outside the record", e.shot)));
            }
            prev = Some(e.shot);
            let d1_ok = match (e.herald_trial, e.d1) {
                (None, None) => true,
                (Some(j), Some(t)) => s.herald_window(t) == Some(j),
                _ => false,
            };
            let d2_ok = e.d2.is_none_or(|t| s.in_read_window(&s.windows.d2, t));
            let d3_ok = e.d3.is_none_or(|t| s.in_read_window(&s.windows.d3, t));
            if !(d1_ok && d2_ok && d3_ok) || e.is_empty() {
                return Err(Error::Malformed(format!("shot {} has an event outside its gate", e.shot)));
            }
        }
        Ok(())
    }

    pub fn header(&self) -> &RecordHeader {
        &self.header
    }

    pub fn entries(&self) -> &[ShotEntry] {
        &self.entries
    }

    /// Every shot in order, including empty ones.
    pub fn shots(&self) -> impl Iterator<Item = ShotEntry> + '_ {
        let mut stored = self.entries.iter().peekable();
        (self.header.first_shot..self.header.end_shot()).map(move |shot| match stored.peek() {
            Some(e) if e.shot == shot => *stored.next().unwrap(),
            _ => ShotEntry::empty(shot),
        })
    }

    pub fn raw_events(&self) -> impl Iterator<Item = RawEvent> + '_ {
        self.entries.iter().flat_map(|e| {
            e.events().map(move |(detector, tick)| RawEvent {
                shot: e.shot,
                detector,
                tick,
            })
        })
    }

    /// Concatenates a record covering the shots directly after this one.
    pub fn merge(mut self, next: DetectionRecord) -> Result<Self> {
        let (a, b) = (&self.header, &next.header);
        if a.config_hash != b.config_hash || a.seed != b.seed || a.schedule != b.schedule {
            return Err(Error::Malformed("records come from different configurations".into()));
        }
        if a.end_shot() != b.first_shot {
            return Err(Error::Malformed("records are not contiguous".into()));
        }
        self.header.shot_count += b.shot_count;
        self.entries.extend(next.entries);
        Ok(self)
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> io::Result<()> {
        let mut writer = RecordWriter::new(w, self.header)?;
        for e in &self.entries {
            writer.push(e)?;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    pub fn read_from<R: BufRead>(r: &mut R) -> Result<Self> {
        let header = RecordHeader::read_from(r)?;
        let mut entries = Vec::new();
        let mut next = header.first_shot;
        while !r.fill_buf()?.is_empty() {
            let gap: u64 = r.read_varint()?;
            let herald: u32 = r.read_varint()?;
            let count: u32 = r.read_varint()?;
            let mut e = ShotEntry::empty(next + gap);
            e.herald_trial = (herald != 0).then_some(herald);
            for _ in 0..count {
                let mut id = [0u8; 1];
                r.read_exact(&mut id)?;
                let tick: u64 = r.read_varint()?;
                let slot = match Detector::from_id(id[0])? {
                    Detector::D1 => &mut e.d1,
                    Detector::D2 => &mut e.d2,
                    Detector::D3 => &mut e.d3,
                };
                if slot.replace(tick).is_some() {
                    return Err(Error::Malformed(format!("duplicate detector in shot {}", e.shot)));
                }
            }
            next = e.shot + 1;
            entries.push(e);
        }
        DetectionRecord::new(header, entries)
    }

    /// Text export with one row per shot; `-1` marks an absent value.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let io_err = |e: csv::Error| Error::Io(e.to_string());
        out.write_record(["shot", "herald_trial", "d1_tick", "d2_tick", "d3_tick"])
            .map_err(io_err)?;
        let opt = |v: Option<u64>| v.map_or_else(|| "-1".to_string(), |t| t.to_string());
        for e in self.shots() {
            out.write_record([
                e.shot.to_string(),
                opt(e.herald_trial.map(u64::from)),
                opt(e.d1),
                opt(e.d2),
                opt(e.d3),
            ])
            .map_err(io_err)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Streams entries after a header, encoding shot gaps on the fly.
pub struct RecordWriter<W: Write> {
    inner: W,
    next_shot: u64,
}

impl<W: Write> RecordWriter<W> {
    pub fn new(mut inner: W, header: RecordHeader) -> io::Result<Self> {
        header.write_to(&mut inner)?;
        Ok(RecordWriter {
            inner,
            next_shot: header.first_shot,
        })
    }

    pub fn push(&mut self, e: &ShotEntry) -> io::Result<()> {
        debug_assert!(e.shot >= self.next_shot);
        e.write_to(&mut self.inner, e.shot - self.next_shot)?;
        self.next_shot = e.shot + 1;
        Ok(())
    }

    pub fn finish(mut self) -> io::Result<W> {
        self.inner.flush()?;
        Ok(self.inner)
    }
}

/// Keeps events inside their gate windows (half-open, in ticks) and reduces
/// each detector to its first gated click per shot. Events must arrive with
/// non-decreasing shot index.
pub fn apply_gates(header: RecordHeader, raw: impl IntoIterator<Item = RawEvent>) -> Result<DetectionRecord> {
    header.schedule.validate()?;
    let s = header.schedule;
    let mut entries: Vec<ShotEntry> = Vec::new();
    let mut last_shot: Option<u64> = None;
    for ev in raw {
        if last_shot.is_some_and(|p| ev.shot < p) {
            return Err(Error::Malformed(format!("shot index {} after {}", ev.shot, last_shot.unwrap())));
        }
        if ev.shot < header.first_shot || ev.shot >= header.end_shot() {
            return Err(Error::Malformed(format!("shot index {} outside the record", ev.shot)));
        }
        last_shot = Some(ev.shot);
        let (kept, herald) = match ev.detector {
            Detector::D1 => match s.herald_window(ev.tick) {
                Some(j) => (true, Some(j)),
                None => (false, None),
            },
            Detector::D2 => (s.in_read_window(&s.windows.d2, ev.tick), None),
            Detector::D3 => (s.in_read_window(&s.windows.d3, ev.tick), None),
        };
        if !kept {
            continue;
        }
        if entries.last().is_none_or(|e| e.shot != ev.shot) {
            entries.push(ShotEntry::empty(ev.shot));
        }
        let e = entries.last_mut().unwrap();
        let slot = match ev.detector {
            Detector::D1 => &mut e.d1,
            Detector::D2 => &mut e.d2,
            Detector::D3 => &mut e.d3,
        };
        if slot.is_none_or(|t| ev.tick < t) {
            *slot = Some(ev.tick);
            if herald.is_some() {
                e.herald_trial = herald;
            }
        }
    }
    Ok(DetectionRecord::from_parts_unchecked(header, entries))
}

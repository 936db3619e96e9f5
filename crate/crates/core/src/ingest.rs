//! Parsing of raw multitouch kernel-event logs and of metric CSV files into
//! validated touch metric rows.
//!
//! Two input shapes are supported:
//!
//! * line-oriented event logs in the dump format of the Android capture tool,
//!   `[ <seconds> ] <device>: <TYPE> <CODE> <value>`, folded into one metric
//!   row per sync frame per active contact (multitouch protocol type B);
//! * metric CSVs with the canonical nine-column header, one file per user.
//!
//! Missing or unparseable numeric cells are kept as explicit missing markers
//! (`NaN` for floats, `-1` for tracking ids, [`FINGER_MISSING`] for the finger
//! flag) so the cleaning stage can drop those rows; the reader never invents
//! values and never silently drops an event line.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;

/// Canonical metric CSV header, in order.
pub const METRIC_CSV_HEADER: [&str; 9] = [
    "Timestamp",
    "X",
    "Y",
    "BTN_TOUCH",
    "TOUCH_MAJOR",
    "TOUCH_MINOR",
    "TRACKING_ID",
    "PRESSURE",
    "FINGER",
];

/// Coordinate value a device reports before a slot has seen a real position.
pub const COORD_SENTINEL: f64 = -420.0;

/// Missing marker for the finger flag (valid values are 0 and 1).
pub const FINGER_MISSING: u8 = u8::MAX;

/// Tracking-id release sentinel in the raw event stream (all-ones / -1).
pub const TRACKING_RELEASE: i32 = -1;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EventType {
    Abs,
    Key,
    Syn,
    /// Event types outside {ABS, KEY, SYN}; the raw token is preserved.
    Other(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EventCode {
    MtPositionX,
    MtPositionY,
    MtTouchMajor,
    MtTouchMinor,
    MtTrackingId,
    MtPressure,
    MtSlot,
    BtnTouch,
    SynReport,
    /// Codes the pipeline does not consume; preserved verbatim.
    Other(String),
}

/// One line of a raw kernel-event capture.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelEvent {
    pub timestamp_s: f64,
    pub event_type: EventType,
    pub event_code: EventCode,
    /// Raw device units; tracking-id release is the all-ones sentinel (-1).
    pub value: i32,
    /// Source line, for diagnostics.
    pub line: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BtnTouch {
    Down,
    Held,
    Up,
}

impl BtnTouch {
    pub fn as_str(&self) -> &'static str {
        match self {
            BtnTouch::Down => "Down",
            BtnTouch::Held => "Held",
            BtnTouch::Up => "Up",
        }
    }

    /// Numeric encoding used after cleaning (Down=0, Held=1, Up=2).
    pub fn as_numeric(&self) -> f64 {
        match self {
            BtnTouch::Down => 0.0,
            BtnTouch::Held => 1.0,
            BtnTouch::Up => 2.0,
        }
    }
}

/// One raw capture row in the canonical nine-column schema, plus the user
/// label attached from file provenance.
///
/// `btn_touch == None`, `NaN` floats, `tracking_id < 0` and
/// `finger == FINGER_MISSING` are missing markers; they survive until the
/// cleaning stage removes the affected rows.
#[derive(Debug, Clone, PartialEq)]
pub struct TouchMetricRow {
    pub timestamp: f64,
    pub x: f64,
    pub y: f64,
    pub btn_touch: Option<BtnTouch>,
    pub touch_major: f64,
    pub touch_minor: f64,
    pub tracking_id: i64,
    pub pressure: f64,
    pub finger: u8,
    pub user: u8,
}

impl TouchMetricRow {
    /// True when any field carries a missing marker.
    pub fn has_missing(&self) -> bool {
        self.timestamp.is_nan()
            || self.x.is_nan()
            || self.y.is_nan()
            || self.touch_major.is_nan()
            || self.touch_minor.is_nan()
            || self.pressure.is_nan()
            || self.btn_touch.is_none()
            || self.tracking_id < 0
            || self.finger > 1
    }
}

#[derive(Debug)]
pub enum IngestError {
    MalformedLine {
        line: usize,
        message: String,
    },
    ProtocolViolation {
        frame: usize,
        message: String,
    },
    HeaderMismatch {
        expected: Vec<String>,
        got: Vec<String>,
    },
    Io(std::io::Error),
}

impl fmt::Display for IngestError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IngestError::MalformedLine { line, message } => {
                write!(f, "malformed event line {line}: {message}")
            }
            IngestError::ProtocolViolation { frame, message } => {
                write!(
                    f,
                    "multitouch protocol violation in frame {frame}: {message}"
                )
            }
            IngestError::HeaderMismatch { expected, got } => {
                write!(f, "CSV header mismatch: expected {expected:?}, got {got:?}")
            }
            IngestError::Io(e) => write!(f, "I/O error: {e}"),
        }
    }
}

impl std::error::Error for IngestError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            IngestError::Io(e) => Some(e),
            _ => None,
        }
    }
}

impl From<std::io::Error> for IngestError {
    fn from(e: std::io::Error) -> Self {
        IngestError::Io(e)
    }
}

fn event_type_token(t: &EventType) -> &str {
    match t {
        EventType::Abs => "EV_ABS",
        EventType::Key => "EV_KEY",
        EventType::Syn => "EV_SYN",
        EventType::Other(tok) => tok,
    }
}

fn event_code_token(c: &EventCode) -> &str {
    match c {
        EventCode::MtPositionX => "ABS_MT_POSITION_X",
        EventCode::MtPositionY => "ABS_MT_POSITION_Y",
        EventCode::MtTouchMajor => "ABS_MT_TOUCH_MAJOR",
        EventCode::MtTouchMinor => "ABS_MT_TOUCH_MINOR",
        EventCode::MtTrackingId => "ABS_MT_TRACKING_ID",
        EventCode::MtPressure => "ABS_MT_PRESSURE",
        EventCode::MtSlot => "ABS_MT_SLOT",
        EventCode::BtnTouch => "BTN_TOUCH",
        EventCode::SynReport => "SYN_REPORT",
        EventCode::Other(tok) => tok,
    }
}

fn classify_code(event_type: &EventType, token: &str) -> EventCode {
    match event_type {
        EventType::Abs => match token {
            "ABS_MT_POSITION_X" => EventCode::MtPositionX,
            "ABS_MT_POSITION_Y" => EventCode::MtPositionY,
            "ABS_MT_TOUCH_MAJOR" => EventCode::MtTouchMajor,
            "ABS_MT_TOUCH_MINOR" => EventCode::MtTouchMinor,
            "ABS_MT_TRACKING_ID" => EventCode::MtTrackingId,
            "ABS_MT_PRESSURE" => EventCode::MtPressure,
            "ABS_MT_SLOT" => EventCode::MtSlot,
            _ => EventCode::Other(token.to_string()),
        },
        EventType::Key => match token {
            "BTN_TOUCH" => EventCode::BtnTouch,
            _ => EventCode::Other(token.to_string()),
        },
        EventType::Syn => match token {
            "SYN_REPORT" => EventCode::SynReport,
            _ => EventCode::Other(token.to_string()),
        },
        EventType::Other(_) => EventCode::Other(token.to_string()),
    }
}

/// Parses an event value: 8 hex digits (device dump form, `ffffffff` = -1) or
/// a signed decimal.
fn parse_value(token: &str) -> Option<i32> {
    if token.len() == 8 && token.bytes().all(|b| b.is_ascii_hexdigit()) {
        return u32::from_str_radix(token, 16).ok().map(|v| v as i32);
    }
    token.parse::<i32>().ok()
}

/// Parses a line-oriented kernel-event log.
///
/// Blank lines and `#` comments are skipped; anything else must match
/// `[ <seconds> ] <device>: <TYPE> <CODE> <value>` or the whole parse fails
/// with `MalformedLine` (a broken event line is never silently dropped).
/// Unknown type/code tokens are preserved as `Other`.
pub fn parse_getevent_log(text: &str) -> Result<Vec<KernelEvent>, IngestError> {
    let mut events = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let malformed = |message: String| IngestError::MalformedLine {
            line: line_no,
            message,
        };
        let rest = line
            .strip_prefix('[')
            .ok_or_else(|| malformed("expected leading `[`".into()))?;
        let close = rest
            .find(']')
            .ok_or_else(|| malformed("unterminated timestamp bracket".into()))?;
        let ts_text = rest[..close].trim();
        let timestamp_s: f64 = ts_text
            .parse()
            .map_err(|_| malformed(format!("bad timestamp `{ts_text}`")))?;
        if !timestamp_s.is_finite() || timestamp_s < 0.0 {
            return Err(malformed(format!("timestamp `{ts_text}` out of range")));
        }
        let tail = rest[close + 1..].trim_start();
        let colon = tail
            .find(':')
            .ok_or_else(|| malformed("missing `<device>:` field".into()))?;
        let mut tokens = tail[colon + 1..].split_whitespace();
        let type_tok = tokens
            .next()
            .ok_or_else(|| malformed("missing event type".into()))?;
        let code_tok = tokens
            .next()
            .ok_or_else(|| malformed("missing event code".into()))?;
        let value_tok = tokens
            .next()
            .ok_or_else(|| malformed("missing event value".into()))?;
        if let Some(extra) = tokens.next() {
            return Err(malformed(format!("unexpected trailing token `{extra}`")));
        }
        if !type_tok.starts_with("EV_") {
            return Err(malformed(format!("bad event type `{type_tok}`")));
        }
        let event_type = match type_tok {
            "EV_ABS" => EventType::Abs,
            "EV_KEY" => EventType::Key,
            "EV_SYN" => EventType::Syn,
            other => EventType::Other(other.to_string()),
        };
        let event_code = classify_code(&event_type, code_tok);
        let value = parse_value(value_tok)
            .ok_or_else(|| malformed(format!("bad event value `{value_tok}`")))?;
        events.push(KernelEvent {
            timestamp_s,
            event_type,
            event_code,
            value,
            line: line_no,
        });
    }
    Ok(events)
}

/// Serializes events back into the log line format (the inverse of
/// [`parse_getevent_log`] up to the synthetic device name).
pub fn write_getevent_log(events: &[KernelEvent]) -> String {
    let mut out = String::new();
    for ev in events {
        out.push_str(&format!(
            "[ {} ] /dev/input/event0: {} {} {:08x}\n",
            ev.timestamp_s,
            event_type_token(&ev.event_type),
            event_code_token(&ev.event_code),
            ev.value as u32,
        ));
    }
    out
}

#[derive(Debug, Clone, Default)]
struct SlotState {
    tracking_id: Option<i64>,
    /// Appearance order of the current contact, for finger seniority.
    seq: u64,
    x: Option<i32>,
    y: Option<i32>,
    touch_major: i32,
    touch_minor: i32,
    pressure: i32,
    down_pending: bool,
    up_pending: bool,
}

/// Folds a type-B multitouch event stream into metric rows: one row per
/// SYN_REPORT frame per active contact.
///
/// Contact lifecycle drives `btn_touch` (Down on appearance, Up on release,
/// Held between); `finger` is 1 for any contact that is not the oldest active
/// contact in its frame. Per-slot fields persist between frames; coordinates
/// never seen for a slot carry the -420 sentinel, other fields 0. The user
/// label comes from file provenance and is attached verbatim.
pub fn fold_events_to_rows(
    events: &[KernelEvent],
    user: u8,
) -> Result<Vec<TouchMetricRow>, IngestError> {
    let mut slots: BTreeMap<i32, SlotState> = BTreeMap::new();
    let mut current_slot: i32 = 0;
    let mut frame_no: usize = 0;
    let mut seq_counter: u64 = 0;
    let mut rows = Vec::new();

    for ev in events {
        match (&ev.event_type, &ev.event_code) {
            (EventType::Abs, EventCode::MtSlot) => {
                if ev.value < 0 {
                    return Err(IngestError::ProtocolViolation {
                        frame: frame_no,
                        message: format!("negative slot index {}", ev.value),
                    });
                }
                current_slot = ev.value;
            }
            (EventType::Abs, EventCode::MtTrackingId) => {
                let st = slots.entry(current_slot).or_default();
                if ev.value == TRACKING_RELEASE || ev.value < 0 {
                    if st.tracking_id.is_none() || st.up_pending {
                        return Err(IngestError::ProtocolViolation {
                            frame: frame_no,
                            message: format!("tracking id released twice in slot {current_slot}"),
                        });
                    }
                    st.up_pending = true;
                } else {
                    st.tracking_id = Some(ev.value as i64);
                    st.seq = seq_counter;
                    seq_counter += 1;
                    st.down_pending = true;
                    st.up_pending = false;
                }
            }
            (EventType::Abs, EventCode::MtPositionX) => {
                slots.entry(current_slot).or_default().x = Some(ev.value);
            }
            (EventType::Abs, EventCode::MtPositionY) => {
                slots.entry(current_slot).or_default().y = Some(ev.value);
            }
            (EventType::Abs, EventCode::MtTouchMajor) => {
                slots.entry(current_slot).or_default().touch_major = ev.value;
            }
            (EventType::Abs, EventCode::MtTouchMinor) => {
                slots.entry(current_slot).or_default().touch_minor = ev.value;
            }
            (EventType::Abs, EventCode::MtPressure) => {
                slots.entry(current_slot).or_default().pressure = ev.value;
            }
            (EventType::Syn, EventCode::SynReport) => {
                let oldest_seq = slots
                    .values()
                    .filter(|st| st.tracking_id.is_some())
                    .map(|st| st.seq)
                    .min();
                for st in slots.values_mut() {
                    let Some(tracking_id) = st.tracking_id else {
                        continue;
                    };
                    let btn = if st.down_pending {
                        BtnTouch::Down
                    } else if st.up_pending {
                        BtnTouch::Up
                    } else {
                        BtnTouch::Held
                    };
                    rows.push(TouchMetricRow {
                        timestamp: ev.timestamp_s,
                        x: st.x.map(|v| v as f64).unwrap_or(COORD_SENTINEL),
                        y: st.y.map(|v| v as f64).unwrap_or(COORD_SENTINEL),
                        btn_touch: Some(btn),
                        touch_major: st.touch_major as f64,
                        touch_minor: st.touch_minor as f64,
                        tracking_id,
                        pressure: st.pressure as f64,
                        finger: if Some(st.seq) == oldest_seq { 0 } else { 1 },
                        user,
                    });
                    st.down_pending = false;
                    if st.up_pending {
                        st.tracking_id = None;
                        st.up_pending = false;
                    }
                }
                frame_no += 1;
            }
            // BTN_TOUCH key events and unknown codes carry no per-contact
            // information the Table-1 row needs.
            _ => {}
        }
    }
    Ok(rows)
}

/// A btn_touch lifecycle defect found in one tracking id's row sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LifecycleViolation {
    pub tracking_id: i64,
    pub message: String,
}

/// Checks that each tracking id's rows, sorted by timestamp, form a
/// `Down (Held)* Up` sequence. Violations are reported, never repaired.
pub fn lifecycle_violations(rows: &[TouchMetricRow]) -> Vec<LifecycleViolation> {
    let mut by_id: BTreeMap<i64, Vec<(f64, usize, Option<BtnTouch>)>> = BTreeMap::new();
    for (i, row) in rows.iter().enumerate() {
        by_id
            .entry(row.tracking_id)
            .or_default()
            .push((row.timestamp, i, row.btn_touch));
    }
    let mut violations = Vec::new();
    for (tracking_id, mut seq) in by_id {
        seq.sort_by(|a, b| {
            a.0.partial_cmp(&b.0)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.1.cmp(&b.1))
        });
        let n = seq.len();
        for (pos, (_, _, btn)) in seq.iter().enumerate() {
            let expected = if pos == 0 {
                BtnTouch::Down
            } else if pos == n - 1 {
                BtnTouch::Up
            } else {
                BtnTouch::Held
            };
            match btn {
                None => violations.push(LifecycleViolation {
                    tracking_id,
                    message: format!("row {pos} of {n} has missing btn_touch"),
                }),
                Some(b) if *b != expected => violations.push(LifecycleViolation {
                    tracking_id,
                    message: format!(
                        "row {pos} of {n} is {} (expected {})",
                        b.as_str(),
                        expected.as_str()
                    ),
                }),
                _ => {}
            }
        }
        if n == 1 {
            violations.push(LifecycleViolation {
                tracking_id,
                message: "single-row stroke cannot both start Down and end Up".into(),
            });
        }
    }
    violations
}

/// Reader options for the metric CSV contract.
#[derive(Debug, Clone, Copy, Default)]
pub struct CsvOptions {
    /// Accept the canonical columns in any order (the on-disk layout of the
    /// published dataset is not guaranteed).
    pub allow_reorder: bool,
}

fn fmt_cell(v: f64) -> String {
    if v.is_nan() {
        "NaN".to_string()
    } else {
        format!("{v}")
    }
}

/// Parses metric CSV text. Unparseable cells become missing markers rather
/// than hard errors; only a wrong header aborts.
pub fn parse_metric_csv(
    text: &str,
    user: u8,
    opts: CsvOptions,
) -> Result<Vec<TouchMetricRow>, IngestError> {
    let mut lines = text.lines();
    let header_line = lines.next().unwrap_or("");
    let got: Vec<String> = header_line
        .trim_end_matches('\r')
        .split(',')
        .map(|s| s.trim().to_string())
        .collect();
    let expected: Vec<String> = METRIC_CSV_HEADER.iter().map(|s| s.to_string()).collect();

    // Map canonical column -> position in this file.
    let mut positions = [0usize; 9];
    if opts.allow_reorder {
        for (i, name) in METRIC_CSV_HEADER.iter().enumerate() {
            match got.iter().position(|g| g == name) {
                Some(p) => positions[i] = p,
                None => return Err(IngestError::HeaderMismatch { expected, got }),
            }
        }
        if got.len() != 9 {
            return Err(IngestError::HeaderMismatch { expected, got });
        }
    } else {
        if got != expected {
            return Err(IngestError::HeaderMismatch { expected, got });
        }
        for (i, p) in positions.iter_mut().enumerate() {
            *p = i;
        }
    }

    let mut rows = Vec::new();
    for raw in lines {
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        let cell = |i: usize| -> &str { cells.get(positions[i]).copied().unwrap_or("").trim() };
        let num = |i: usize| -> f64 { cell(i).parse::<f64>().unwrap_or(f64::NAN) };
        let btn_touch = match cell(3) {
            "Down" => Some(BtnTouch::Down),
            "Held" => Some(BtnTouch::Held),
            "Up" => Some(BtnTouch::Up),
            _ => None,
        };
        let tracking_id = match cell(6).parse::<i64>() {
            Ok(v) if v >= 0 => v,
            _ => -1,
        };
        let finger = match cell(8).parse::<f64>() {
            Ok(v) if v == 0.0 => 0,
            Ok(v) if v == 1.0 => 1,
            _ => FINGER_MISSING,
        };
        rows.push(TouchMetricRow {
            timestamp: num(0),
            x: num(1),
            y: num(2),
            btn_touch,
            touch_major: num(4),
            touch_minor: num(5),
            tracking_id,
            pressure: num(7),
            finger,
            user,
        });
    }
    Ok(rows)
}

/// Renders rows as metric CSV text with the canonical header.
pub fn metric_csv_string(rows: &[TouchMetricRow]) -> String {
    let mut out = String::new();
    out.push_str(&METRIC_CSV_HEADER.join(","));
    out.push('\n');
    for r in rows {
        let btn = r.btn_touch.map(|b| b.as_str()).unwrap_or("");
        let finger = if r.finger > 1 {
            String::new()
        } else {
            r.finger.to_string()
        };
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            fmt_cell(r.timestamp),
            fmt_cell(r.x),
            fmt_cell(r.y),
            btn,
            fmt_cell(r.touch_major),
            fmt_cell(r.touch_minor),
            r.tracking_id,
            fmt_cell(r.pressure),
            finger,
        ));
    }
    out
}

/// Reads one user's metric CSV file; the user label comes from the caller
/// (file provenance).
pub fn read_metric_csv(
    path: &Path,
    user: u8,
    opts: CsvOptions,
) -> Result<Vec<TouchMetricRow>, IngestError> {
    let text = fs::read_to_string(path)?;
    parse_metric_csv(&text, user, opts)
}

/// Writes rows to a metric CSV file.
pub fn write_metric_csv(rows: &[TouchMetricRow], path: &Path) -> Result<(), IngestError> {
    let mut file = fs::File::create(path)?;
    file.write_all(metric_csv_string(rows).as_bytes())?;
    Ok(())
}

/// Extracts the user label from a `user<N>.csv` / `user<N>.log` file name.
pub fn user_from_filename(path: &Path) -> Option<u8> {
    let stem = path.file_stem()?.to_str()?;
    let digits = stem.strip_prefix("user")?;
    let digits: String = digits.chars().take_while(|c| c.is_ascii_digit()).collect();
    if digits.is_empty() || digits.len() != stem.len() - 4 {
        return None;
    }
    digits.parse().ok()
}

//! Synthetic capture generator: 15 distinct kinematic user profiles, smooth
//! parametric stroke paths sampled at the device rate, proper
//! Down/Held/Up lifecycles, occasional second-finger contacts, and a
//! configurable fraction of sentinel / missing cells to exercise cleaning.
//!
//! Everything derives deterministically from the master seed; the same seed
//! produces byte-identical files. Ground-truth stroke membership is persisted
//! alongside each CSV for oracle tests.

use std::f64::consts::TAU;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use touchauth_core::ingest::{metric_csv_string, BtnTouch, TouchMetricRow};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    #[serde(default = "default_n_users")]
    pub n_users: u8,
    #[serde(default = "default_session_minutes")]
    pub session_minutes: f64,
    #[serde(default = "default_sample_rate")]
    pub sample_rate_hz: f64,
    #[serde(default = "default_strokes_per_minute")]
    pub strokes_per_minute: f64,
    /// Fraction of strokes that are short taps (too short to yield features).
    #[serde(default = "default_tap_fraction")]
    pub tap_fraction: f64,
    /// Per-row probability of a -420 coordinate sentinel.
    #[serde(default = "default_sentinel_fraction")]
    pub sentinel_fraction: f64,
    /// Per-row probability of one missing (NaN) numeric cell.
    #[serde(default = "default_missing_fraction")]
    pub missing_fraction: f64,
    /// Per-drag probability of a concurrent second-finger contact.
    #[serde(default = "default_second_finger")]
    pub second_finger_fraction: f64,
}

fn default_n_users() -> u8 {
    15
}

fn default_session_minutes() -> f64 {
    15.0
}

fn default_sample_rate() -> f64 {
    60.0
}

fn default_strokes_per_minute() -> f64 {
    4.4
}

fn default_tap_fraction() -> f64 {
    0.12
}

fn default_sentinel_fraction() -> f64 {
    0.02
}

fn default_missing_fraction() -> f64 {
    0.01
}

fn default_second_finger() -> f64 {
    0.06
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            n_users: default_n_users(),
            session_minutes: default_session_minutes(),
            sample_rate_hz: default_sample_rate(),
            strokes_per_minute: default_strokes_per_minute(),
            tap_fraction: default_tap_fraction(),
            sentinel_fraction: default_sentinel_fraction(),
            missing_fraction: default_missing_fraction(),
            second_finger_fraction: default_second_finger(),
        }
    }
}

/// Per-user kinematic parameters. Profiles sit on a speed x curvature grid
/// with a user-specific preferred stroke direction, so per-sample features
/// separate the users without being trivially disjoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticUserProfile {
    pub user: u8,
    /// Mean drag speed, device units per second.
    pub mean_stroke_speed: f64,
    /// Relative amplitude of the within-stroke speed modulation.
    pub speed_variation: f64,
    /// Mean unsigned curvature, radians per second.
    pub curvature: f64,
    pub preferred_heading: f64,
    pub heading_spread: f64,
    pub tap_fraction: f64,
    pub sample_rate_hz: f64,
    pub session_minutes: f64,
    pub strokes_per_minute: f64,
    /// Contact-geometry baselines (not used by the feature set).
    pub touch_major_base: f64,
    pub pressure_base: f64,
    pub seed: u64,
}

fn sub_seed(seed: u64, unit: u64) -> u64 {
    seed.wrapping_add(unit.wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Deterministic profile grid: five speed levels times three preferred
/// stroke directions (120 degrees apart), plus a mild per-user curvature.
///
/// Touch panels report integer device units, so per-sample chord directions
/// carry quantization noise of roughly `1/step` radians; the slowest level
/// moves about 4 units per sample tick to keep that noise below the
/// between-user separation.
pub fn default_profiles(spec: &SynthSpec, seed: u64) -> Vec<SyntheticUserProfile> {
    (1..=spec.n_users)
        .map(|user| {
            let i = (user - 1) as usize;
            let speed_level = (i % 5) as f64;
            let heading_group = (i / 5) as f64;
            SyntheticUserProfile {
                user,
                mean_stroke_speed: 400.0 * 1.64f64.powf(speed_level),
                speed_variation: 0.12,
                curvature: [0.8, 1.6, 2.4][i % 3],
                preferred_heading: TAU / 3.0 * heading_group,
                heading_spread: 0.20,
                tap_fraction: spec.tap_fraction,
                sample_rate_hz: spec.sample_rate_hz,
                session_minutes: spec.session_minutes,
                strokes_per_minute: spec.strokes_per_minute,
                touch_major_base: 8.0 + (i % 7) as f64,
                pressure_base: 30.0 + i as f64,
                seed: sub_seed(seed, user as u64),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StrokeInfo {
    pub tracking_id: i64,
    pub n_samples: usize,
    pub finger: u8,
    pub tap: bool,
}

/// Ground-truth stroke membership for one generated user file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StrokeTruth {
    pub user: u8,
    pub strokes: Vec<StrokeInfo>,
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller.
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (TAU * u2).cos()
}

struct StrokeParams {
    /// Stroke grid origin; sample i sits at `base_t + (tick_offset + i) * dt`
    /// so concurrent contacts share bit-identical frame timestamps.
    base_t: f64,
    tick_offset: usize,
    n: usize,
    start_x: f64,
    start_y: f64,
    heading: f64,
    curvature: f64,
    base_speed: f64,
    phase: f64,
    finger: u8,
}

fn sample_stroke(
    profile: &SyntheticUserProfile,
    params: &StrokeParams,
    tracking_id: i64,
    rng: &mut ChaCha8Rng,
) -> Vec<TouchMetricRow> {
    let dt = 1.0 / profile.sample_rate_hz;
    let mut x = params.start_x;
    let mut y = params.start_y;
    let mut heading = params.heading;
    let n = params.n;
    let mut rows = Vec::with_capacity(n);
    for i in 0..n {
        if i > 0 {
            let along = i as f64 / n as f64;
            let speed = params.base_speed
                * (1.0 + profile.speed_variation * (TAU * along + params.phase).sin())
                * (1.0 + 0.015 * normal(rng));
            x += speed * heading.cos() * dt;
            y += speed * heading.sin() * dt;
            heading += params.curvature * dt + 0.003 * normal(rng);
        }
        let btn = if i == 0 {
            BtnTouch::Down
        } else if i == n - 1 {
            BtnTouch::Up
        } else {
            BtnTouch::Held
        };
        let major = (profile.touch_major_base + 0.8 * normal(rng))
            .round()
            .max(1.0);
        rows.push(TouchMetricRow {
            timestamp: params.base_t + (params.tick_offset + i) as f64 * dt,
            x: x.round(),
            y: y.round(),
            btn_touch: Some(btn),
            touch_major: major,
            touch_minor: (major - 2.0).max(1.0),
            tracking_id,
            pressure: (profile.pressure_base + 2.0 * normal(rng)).round().max(1.0),
            finger: params.finger,
            user: profile.user,
        });
    }
    rows
}

/// Generates one user's full session. Returns rows sorted by
/// (timestamp, tracking_id) plus the pre-corruption ground truth.
pub fn generate_user_rows(
    profile: &SyntheticUserProfile,
    spec: &SynthSpec,
) -> (Vec<TouchMetricRow>, StrokeTruth) {
    let mut rng = ChaCha8Rng::seed_from_u64(profile.seed);
    let dt = 1.0 / profile.sample_rate_hz;
    let session_s = profile.session_minutes * 60.0;
    let mean_gap = 60.0 / profile.strokes_per_minute;
    let mut tracking_counter: i64 = profile.user as i64 * 1_000_000;
    let mut rows: Vec<TouchMetricRow> = Vec::new();
    let mut truth = StrokeTruth {
        user: profile.user,
        strokes: Vec::new(),
    };

    let mut t = mean_gap * rng.gen_range(0.2..0.8);
    while t + 1.0 < session_s {
        let tap = rng.gen_range(0.0..1.0) < profile.tap_fraction;
        let n = if tap {
            rng.gen_range(2..=3)
        } else {
            let duration = rng.gen_range(0.30..0.55);
            ((duration * profile.sample_rate_hz).round() as usize).max(8)
        };
        let tid = tracking_counter;
        tracking_counter += 1;
        let start_x = rng.gen_range(1200.0..4500.0);
        let start_y = rng.gen_range(1200.0..4500.0);
        let mut heading = profile.preferred_heading
            + profile.heading_spread * normal(&mut rng)
            + if rng.gen_bool(0.3) { TAU / 2.0 } else { 0.0 };
        let base_speed =
            profile.mean_stroke_speed * if tap { 0.2 } else { rng.gen_range(0.95..1.05) };
        // Keep the path inside the panel's device range: if the straight-line
        // endpoint would leave it, swipe the other way.
        let reach = base_speed * (n as f64 / profile.sample_rate_hz);
        let end_x = start_x + reach * heading.cos();
        let end_y = start_y + reach * heading.sin();
        if !(500.0..=5500.0).contains(&end_x) || !(500.0..=5500.0).contains(&end_y) {
            heading += TAU / 2.0;
        }
        // Fast swipes flatten out; damping the curvature with the speed level
        // also bounds how far an arc can stray from its straight endpoint.
        let speed_level = (profile.mean_stroke_speed / 400.0)
            .log(1.64)
            .round()
            .max(0.0);
        let params = StrokeParams {
            base_t: t,
            tick_offset: 0,
            n,
            start_x,
            start_y,
            heading,
            curvature: profile.curvature / (1.0 + 0.8 * speed_level)
                * (0.9 + 0.2 * rng.gen_range(0.0..1.0))
                * if rng.gen_bool(0.5) { 1.0 } else { -1.0 },
            base_speed,
            phase: rng.gen_range(0.0..TAU),
            finger: 0,
        };
        let stroke_rows = sample_stroke(profile, &params, tid, &mut rng);
        truth.strokes.push(StrokeInfo {
            tracking_id: tid,
            n_samples: n,
            finger: 0,
            tap,
        });
        rows.extend(stroke_rows);

        // Occasional second finger, strictly contained within the drag so the
        // primary contact stays the oldest for the secondary's whole life.
        if !tap && n >= 12 && rng.gen_range(0.0..1.0) < spec.second_finger_fraction {
            let offset = n / 4;
            let m = n / 3;
            let tid2 = tracking_counter;
            tracking_counter += 1;
            let params2 = StrokeParams {
                base_t: t,
                tick_offset: offset,
                n: m,
                start_x: rng.gen_range(1200.0..4500.0),
                start_y: rng.gen_range(1200.0..4500.0),
                heading: params.heading + TAU / 12.0,
                curvature: params.curvature * 0.8,
                base_speed: params.base_speed,
                phase: rng.gen_range(0.0..TAU),
                finger: 1,
            };
            rows.extend(sample_stroke(profile, &params2, tid2, &mut rng));
            truth.strokes.push(StrokeInfo {
                tracking_id: tid2,
                n_samples: m,
                finger: 1,
                tap: false,
            });
        }

        t += n as f64 * dt + mean_gap * rng.gen_range(0.6..1.4);
    }

    rows.sort_by(|a, b| {
        a.timestamp
            .partial_cmp(&b.timestamp)
            .expect("generated timestamps are finite")
            .then(a.tracking_id.cmp(&b.tracking_id))
    });

    // Corruption pass: coordinate sentinels and missing cells, to exercise
    // the cleaning rules downstream.
    for row in rows.iter_mut() {
        let draw: f64 = rng.gen_range(0.0..1.0);
        if draw < spec.sentinel_fraction {
            if rng.gen_bool(0.5) {
                row.x = -420.0;
            } else {
                row.y = -420.0;
            }
        } else if draw < spec.sentinel_fraction + spec.missing_fraction {
            match rng.gen_range(0..3) {
                0 => row.touch_major = f64::NAN,
                1 => row.touch_minor = f64::NAN,
                _ => row.pressure = f64::NAN,
            }
        }
    }
    (rows, truth)
}

/// Writes `user<N>.csv` and `user<N>_truth.json` per profile into `dir`.
pub fn synth_generate(spec: &SynthSpec, seed: u64, dir: &Path) -> io::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut paths = Vec::new();
    for profile in default_profiles(spec, seed) {
        let (rows, truth) = generate_user_rows(&profile, spec);
        let csv_path = dir.join(format!("user{}.csv", profile.user));
        fs::write(&csv_path, metric_csv_string(&rows))?;
        let truth_path = dir.join(format!("user{}_truth.json", profile.user));
        fs::write(&truth_path, serde_json::to_string_pretty(&truth)?)?;
        paths.push(csv_path);
    }
    Ok(paths)
}

/// Reconstructs a type-B kernel-event log from uncorrupted metric rows
/// (integer-valued coordinates, no missing cells, rows sorted by timestamp).
/// Slots are allocated lowest-free-first per contact.
pub fn rows_to_event_log(rows: &[TouchMetricRow]) -> Result<String, String> {
    let mut out = String::new();
    let mut slot_of: Vec<(i64, usize)> = Vec::new(); // (tracking_id, slot)
    let mut used_slots: Vec<bool> = Vec::new();
    let mut i = 0;
    let push = |out: &mut String, ts: f64, code: &str, value: i64| {
        out.push_str(&format!(
            "[ {ts} ] /dev/input/event0: EV_ABS {code} {:08x}\n",
            value as i32 as u32
        ));
    };
    while i < rows.len() {
        let ts = rows[i].timestamp;
        let mut j = i;
        while j < rows.len() && rows[j].timestamp == ts {
            j += 1;
        }
        for row in &rows[i..j] {
            if row.has_missing() {
                return Err(format!(
                    "row at t={ts} carries missing markers; event logs cannot represent them"
                ));
            }
            let btn = row.btn_touch.expect("checked by has_missing");
            let slot = match slot_of.iter().find(|(tid, _)| *tid == row.tracking_id) {
                Some((_, s)) => *s,
                None => {
                    if btn != BtnTouch::Down {
                        return Err(format!(
                            "tracking id {} appears mid-life at t={ts}",
                            row.tracking_id
                        ));
                    }
                    let s = used_slots.iter().position(|u| !u).unwrap_or_else(|| {
                        used_slots.push(false);
                        used_slots.len() - 1
                    });
                    used_slots[s] = true;
                    slot_of.push((row.tracking_id, s));
                    s
                }
            };
            push(&mut out, ts, "ABS_MT_SLOT", slot as i64);
            if btn == BtnTouch::Down {
                push(&mut out, ts, "ABS_MT_TRACKING_ID", row.tracking_id);
            }
            push(&mut out, ts, "ABS_MT_POSITION_X", row.x as i64);
            push(&mut out, ts, "ABS_MT_POSITION_Y", row.y as i64);
            push(&mut out, ts, "ABS_MT_TOUCH_MAJOR", row.touch_major as i64);
            push(&mut out, ts, "ABS_MT_TOUCH_MINOR", row.touch_minor as i64);
            push(&mut out, ts, "ABS_MT_PRESSURE", row.pressure as i64);
            if btn == BtnTouch::Up {
                push(&mut out, ts, "ABS_MT_TRACKING_ID", -1);
                if let Some(pos) = slot_of.iter().position(|(tid, _)| *tid == row.tracking_id) {
                    used_slots[slot_of[pos].1] = false;
                    slot_of.swap_remove(pos);
                }
            }
        }
        out.push_str(&format!(
            "[ {ts} ] /dev/input/event0: EV_SYN SYN_REPORT 00000000\n"
        ));
        i = j;
    }
    Ok(out)
}

/// Writes `user<N>.log` raw event captures (corruption disabled, since event
/// streams cannot carry sentinel or missing cells) plus the truth files.
pub fn synth_generate_logs(spec: &SynthSpec, seed: u64, dir: &Path) -> io::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let clean_spec = SynthSpec {
        sentinel_fraction: 0.0,
        missing_fraction: 0.0,
        ..spec.clone()
    };
    let mut paths = Vec::new();
    for profile in default_profiles(&clean_spec, seed) {
        let (rows, truth) = generate_user_rows(&profile, &clean_spec);
        let log =
            rows_to_event_log(&rows).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
        let log_path = dir.join(format!("user{}.log", profile.user));
        fs::write(&log_path, log)?;
        fs::write(
            dir.join(format!("user{}_truth.json", profile.user)),
            serde_json::to_string_pretty(&truth)?,
        )?;
        paths.push(log_path);
    }
    Ok(paths)
}

//! Text corpora, trajectory files, and the scripted stern-conversion and
//! toy-grammar generators used for desk-scale experiments.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{bearing_deg, engagement, wrap_deg, AircraftState};
use crate::rng::{lane_rng, standard_normal};
use crate::sequence::{RealSequence, TokenSequence};
use crate::vocab::{encode, tokenize, Vocabulary};

/// Features recorded per fighter.
pub const FEATURES: usize = 16;
/// Steps per synthetic trajectory.
pub const DEFAULT_STEPS: usize = 40;

pub const FEATURE_NAMES: [&str; FEATURES] = [
    "x",
    "y",
    "heading",
    "speed",
    "turn_rate",
    "range",
    "bearing",
    "aspect_angle",
    "antenna_train_angle",
    "reserved_0",
    "reserved_1",
    "reserved_2",
    "reserved_3",
    "reserved_4",
    "reserved_5",
    "reserved_6",
];

/// Column indices into the per-fighter feature block.
pub mod feature {
    pub const X: usize = 0;
    pub const Y: usize = 1;
    pub const HEADING: usize = 2;
    pub const SPEED: usize = 3;
    pub const TURN_RATE: usize = 4;
    pub const RANGE: usize = 5;
    pub const BEARING: usize = 6;
    pub const ASPECT: usize = 7;
    pub const ANTENNA_TRAIN: usize = 8;
}

/// Reads one sentence per line and encodes each to length `seq_len`.
/// Blank lines are skipped.
pub fn load_text_corpus(path: impl AsRef<Path>, vocab: &Vocabulary, seq_len: usize) -> Result<Vec<TokenSequence>> {
    let sentences = read_sentences(&path)?;
    Ok(sentences.iter().map(|s| encode(s, vocab, seq_len)).collect())
}

/// Tokenised non-blank lines of a UTF-8 corpus file.
pub fn read_sentences(path: impl AsRef<Path>) -> Result<Vec<Vec<String>>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let sentences: Vec<Vec<String>> = text.lines().map(tokenize).filter(|s| !s.is_empty()).collect();
    if sentences.is_empty() {
        return Err(Error::parse(path, "corpus file has no sentences"));
    }
    Ok(sentences)
}

pub fn write_sentences(path: impl AsRef<Path>, sentences: &[Vec<String>]) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    for s in sentences {
        out.push_str(&s.join(" "));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// One engagement: blue and red feature tracks of equal length.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub blue: RealSequence<f64>,
    pub red: RealSequence<f64>,
    pub dt: f64,
}

impl TrajectoryRecord {
    pub fn new(blue: RealSequence<f64>, red: RealSequence<f64>, dt: f64) -> Result<Self> {
        if blue.values.dim() != red.values.dim() {
            return Err(Error::Shape(format!(
                "blue is {:?} but red is {:?}",
                blue.values.dim(),
                red.values.dim()
            )));
        }
        if blue.features() <= feature::HEADING {
            return Err(Error::Shape("records need at least x, y and heading".into()));
        }
        if !(dt > 0.0) {
            return Err(Error::Config(format!("dt must be positive, got {dt}")));
        }
        Ok(TrajectoryRecord { blue, red, dt })
    }

    pub fn steps(&self) -> usize {
        self.blue.steps()
    }

    pub fn features(&self) -> usize {
        self.blue.features()
    }

    pub fn blue_state(&self, t: usize) -> AircraftState {
        state_of(&self.blue.values, t)
    }

    pub fn red_state(&self, t: usize) -> AircraftState {
        state_of(&self.red.values, t)
    }

    /// Blue columns followed by red columns, `T × 2F`.
    pub fn to_joint(&self) -> RealSequence<f64> {
        let f = self.features();
        let values = Array2::from_shape_fn((self.steps(), 2 * f), |(t, c)| {
            if c < f {
                self.blue.values[[t, c]]
            } else {
                self.red.values[[t, c - f]]
            }
        });
        RealSequence { values }
    }

    pub fn from_joint(joint: &RealSequence<f64>, dt: f64) -> Result<Self> {
        let w = joint.features();
        if w % 2 != 0 {
            return Err(Error::Shape(format!("joint width {w} is odd")));
        }
        let f = w / 2;
        let blue = joint.values.slice(ndarray::s![.., ..f]).to_owned();
        let red = joint.values.slice(ndarray::s![.., f..]).to_owned();
        TrajectoryRecord::new(RealSequence::new(blue)?, RealSequence::new(red)?, dt)
    }

    /// Largest ratio of per-step displacement to `speed · dt` over both fighters.
    pub fn max_displacement_ratio(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for track in [&self.blue.values, &self.red.values] {
            for t in 1..track.nrows() {
                let d = (track[[t, feature::X]] - track[[t - 1, feature::X]])
                    .hypot(track[[t, feature::Y]] - track[[t - 1, feature::Y]]);
                let allowed = track[[t - 1, feature::SPEED]].max(track[[t, feature::SPEED]]) * self.dt;
                worst = worst.max(d / allowed);
            }
        }
        worst
    }
}

fn state_of(values: &Array2<f64>, t: usize) -> AircraftState {
    AircraftState::new(
        values[[t, feature::X]],
        values[[t, feature::Y]],
        values[[t, feature::HEADING]],
    )
}

fn header(features: usize) -> String {
    let names = |side: &str| -> Vec<String> {
        (0..features)
            .map(|i| match FEATURE_NAMES.get(i) {
                Some(n) if features == FEATURES => format!("{side}_{n}"),
                _ => format!("{side}_f{i}"),
            })
            .collect()
    };
    let mut cols = names("blue");
    cols.extend(names("red"));
    cols.join(",")
}

/// Writes records as CSV: a header, then one row per step, `T` rows per record.
pub fn write_trajectories(path: impl AsRef<Path>, records: &[TrajectoryRecord]) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    if let Some(first) = records.first() {
        let shape = (first.steps(), first.features());
        out.push_str(&header(shape.1));
        out.push('\n');
        for (i, r) in records.iter().enumerate() {
            if (r.steps(), r.features()) != shape {
                return Err(Error::Trajectory {
                    index: i,
                    reason: format!("shape {:?} differs from {:?}", (r.steps(), r.features()), shape),
                });
            }
            let joint = r.to_joint();
            for row in joint.values.rows() {
                let mut first = true;
                for v in row {
                    if !first {
                        out.push(',');
                    }
                    first = false;
                    write!(out, "{v}").expect("writing to a String");
                }
                out.push('\n');
            }
        }
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Loads records of [`DEFAULT_STEPS`] rows each.
pub fn load_trajectories(path: impl AsRef<Path>) -> Result<Vec<TrajectoryRecord>> {
    load_trajectories_with(path, DEFAULT_STEPS, 1.0)
}

/// Loads a trajectory CSV whose records are `steps` rows long.
pub fn load_trajectories_with(path: impl AsRef<Path>, steps: usize, dt: f64) -> Result<Vec<TrajectoryRecord>> {
    let path = path.as_ref();
    if steps == 0 {
        return Err(Error::Config("steps per trajectory must be positive".into()));
    }
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let Some(head) = lines.next() else {
        return Ok(Vec::new());
    };
    let width = head.split(',').count();
    if width % 2 != 0 || width < 2 * (feature::HEADING + 1) {
        return Err(Error::parse(path, format!("header has {width} columns; expected 2·F")));
    }
    let rows: Vec<&str> = lines.collect();
    let mut records = Vec::with_capacity(rows.len() / steps);
    for (index, chunk) in rows.chunks(steps).enumerate() {
        if chunk.len() != steps {
            return Err(Error::Trajectory {
                index,
                reason: format!("has {} rows, expected {steps}", chunk.len()),
            });
        }
        let mut values = Array2::zeros((steps, width));
        for (t, line) in chunk.iter().enumerate() {
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != width {
                return Err(Error::Trajectory {
                    index,
                    reason: format!("row {t} has {} columns, expected {width}", cells.len()),
                });
            }
            for (c, cell) in cells.iter().enumerate() {
                let v: f64 = cell.trim().parse().map_err(|_| Error::Trajectory {
                    index,
                    reason: format!("row {t}, column {c}: cannot parse `{cell}`"),
                })?;
                if !v.is_finite() {
                    return Err(Error::Trajectory {
                        index,
                        reason: format!("row {t}, column {c}: non-finite value"),
                    });
                }
                values[[t, c]] = v;
            }
        }
        let joint = RealSequence::new(values)?;
        records.push(TrajectoryRecord::from_joint(&joint, dt).map_err(|e| Error::Trajectory {
            index,
            reason: e.to_string(),
        })?);
    }
    Ok(records)
}

/// Scripted stern-conversion scenario. Red flies straight and level along
/// +x; blue starts ahead and to one side on an opposing heading and turns
/// toward a point trailing red, then pursues it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SternConversionParams {
    pub red_speed: f64,
    pub blue_speed: f64,
    /// Blue start relative to red; the lateral side is drawn per trajectory.
    pub initial_offset: (f64, f64),
    pub turn_rate: f64,
    pub noise_std: f64,
    pub seed: u64,
    pub steps: usize,
    pub dt: f64,
    /// Distance behind red of the point blue steers for.
    pub trail_distance: f64,
    /// Relative spread of the per-trajectory start offset.
    pub offset_jitter: f64,
}

impl Default for SternConversionParams {
    fn default() -> Self {
        SternConversionParams {
            red_speed: 200.0,
            blue_speed: 300.0,
            initial_offset: (3000.0, 1500.0),
            turn_rate: 15.0,
            noise_std: 5.0,
            seed: 0,
            steps: DEFAULT_STEPS,
            dt: 1.0,
            trail_distance: 500.0,
            offset_jitter: 0.2,
        }
    }
}

impl SternConversionParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.red_speed > 0.0 && self.blue_speed > 0.0) {
            return Err(Error::Config("speeds must be positive".into()));
        }
        if !(self.turn_rate > 0.0) {
            return Err(Error::Config("turn rate must be positive".into()));
        }
        if !(self.noise_std >= 0.0) || !(self.dt > 0.0) || self.steps == 0 {
            return Err(Error::Config("noise_std ≥ 0, dt > 0 and steps ≥ 1 required".into()));
        }
        if !(0.0..1.0).contains(&self.offset_jitter) {
            return Err(Error::Config("offset_jitter must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

struct Kinematics {
    x: f64,
    y: f64,
    heading: f64,
    speed: f64,
    turn_rate: f64,
}

/// Generates `n` trajectories; trajectory `i` draws only from the stream
/// derived from `(seed, i)`.
pub fn synth_stern_conversion(params: &SternConversionParams, n: usize) -> Result<Vec<TrajectoryRecord>> {
    params.validate()?;
    if n == 0 {
        return Err(Error::Config("n must be at least 1".into()));
    }
    (0..n).map(|i| synth_one(params, i)).collect()
}

fn synth_one(p: &SternConversionParams, index: usize) -> Result<TrajectoryRecord> {
    let mut rng = lane_rng(p.seed, index as u64, 0);
    let jitter = |rng: &mut crate::rng::SeededRng| 1.0 + p.offset_jitter * (2.0 * rng.random::<f64>() - 1.0);
    let dx = p.initial_offset.0 * jitter(&mut rng);
    let side = if rng.random::<bool>() { 1.0 } else { -1.0 };
    let dy = side * p.initial_offset.1 * jitter(&mut rng);

    let mut red = Kinematics {
        x: 0.0,
        y: 0.0,
        heading: 0.0,
        speed: p.red_speed,
        turn_rate: 0.0,
    };
    let mut blue = Kinematics {
        x: dx,
        y: dy,
        heading: 180.0,
        speed: p.blue_speed,
        turn_rate: 0.0,
    };
    let max_turn = p.turn_rate * p.dt;
    let mut track = Vec::with_capacity(p.steps);
    for _ in 0..p.steps {
        track.push(((blue.x, blue.y, blue.heading, blue.speed, blue.turn_rate), (red.x, red.y, red.heading, red.speed)));

        let r = red.heading.to_radians();
        let aim = (red.x - p.trail_distance * r.cos(), red.y - p.trail_distance * r.sin());
        let want = (aim.1 - blue.y).atan2(aim.0 - blue.x).to_degrees();
        let turn = wrap_deg(want - blue.heading).clamp(-max_turn, max_turn);
        blue.heading += turn;
        blue.turn_rate = turn / p.dt;
        // Close at full speed, then settle to red's speed near the aim point.
        let gap = (aim.0 - blue.x).hypot(aim.1 - blue.y);
        let ahead = (blue.x - aim.0) * r.cos() + (blue.y - aim.1) * r.sin() > 0.0;
        blue.speed = if ahead {
            p.blue_speed
        } else {
            p.red_speed + (p.blue_speed - p.red_speed) * (gap / 1000.0).min(1.0)
        };
        let b = blue.heading.to_radians();
        blue.x += blue.speed * p.dt * b.cos();
        blue.y += blue.speed * p.dt * b.sin();
        red.x += red.speed * p.dt * r.cos();
        red.y += red.speed * p.dt * r.sin();
    }

    let mut blue_v = Array2::zeros((p.steps, FEATURES));
    let mut red_v = Array2::zeros((p.steps, FEATURES));
    for (t, &((bx, by, bh, bs, btr), (rx, ry, rh, rs))) in track.iter().enumerate() {
        let mut noise = || if p.noise_std > 0.0 { p.noise_std * standard_normal(&mut rng) } else { 0.0 };
        let bs_ = AircraftState::new(bx + noise(), by + noise(), bh);
        let rs_ = AircraftState::new(rx + noise(), ry + noise(), rh);
        let blue_view = engagement(&bs_, &rs_);
        let red_view = engagement(&rs_, &bs_);
        let fill = |m: &mut Array2<f64>, me: &AircraftState, other: &AircraftState, speed: f64, tr: f64, e: crate::geometry::Engagement| {
            m[[t, feature::X]] = me.x;
            m[[t, feature::Y]] = me.y;
            m[[t, feature::HEADING]] = me.heading_deg;
            m[[t, feature::SPEED]] = speed;
            m[[t, feature::TURN_RATE]] = tr;
            m[[t, feature::RANGE]] = e.range;
            m[[t, feature::BEARING]] = bearing_deg(me, other);
            m[[t, feature::ASPECT]] = e.aspect_deg;
            m[[t, feature::ANTENNA_TRAIN]] = e.antenna_train_deg;
        };
        fill(&mut blue_v, &bs_, &rs_, bs, btr, blue_view);
        fill(&mut red_v, &rs_, &bs_, rs, 0.0, red_view);
    }
    TrajectoryRecord::new(RealSequence::new(blue_v)?, RealSequence::new(red_v)?, p.dt)
}

const DETERMINERS: [&str; 2] = ["the", "a"];
const ADJECTIVES: [&str; 5] = ["small", "old", "red", "quiet", "happy"];
const NOUNS: [&str; 11] = ["cat", "dog", "man", "woman", "bird", "boy", "girl", "car", "house", "tree", "ball"];
const VERBS: [&str; 6] = ["sees", "likes", "chases", "finds", "watches", "follows"];
const PREPOSITIONS: [&str; 4] = ["near", "under", "behind", "with"];

fn zipf_pick<'a, R: Rng + ?Sized>(words: &[&'a str], rng: &mut R) -> &'a str {
    let total: f64 = (1..=words.len()).map(|k| 1.0 / k as f64).sum();
    let mut u = rng.random::<f64>() * total;
    for (k, w) in words.iter().enumerate() {
        u -= 1.0 / (k + 1) as f64;
        if u <= 0.0 {
            return w;
        }
    }
    words[words.len() - 1]
}

/// Sentences from a small fixed grammar over 30 words, at most 12 tokens:
/// `DET [[very] ADJ] NOUN VERB DET [ADJ] NOUN [PREP DET NOUN] .`
pub fn grammar_corpus<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<Vec<String>> {
    (0..n)
        .map(|_| {
            let mut s: Vec<&str> = Vec::with_capacity(12);
            s.push(zipf_pick(&DETERMINERS, rng));
            if rng.random::<f64>() < 0.5 {
                if rng.random::<f64>() < 0.3 {
                    s.push("very");
                }
                s.push(zipf_pick(&ADJECTIVES, rng));
            }
            s.push(zipf_pick(&NOUNS, rng));
            s.push(zipf_pick(&VERBS, rng));
            s.push(zipf_pick(&DETERMINERS, rng));
            if rng.random::<f64>() < 0.4 {
                s.push(zipf_pick(&ADJECTIVES, rng));
            }
            s.push(zipf_pick(&NOUNS, rng));
            if rng.random::<f64>() < 0.4 {
                s.push(zipf_pick(&PREPOSITIONS, rng));
                s.push(zipf_pick(&DETERMINERS, rng));
                s.push(zipf_pick(&NOUNS, rng));
            }
            s.push(".");
            s.into_iter().map(str::to_string).collect()
        })
        .collect()
}

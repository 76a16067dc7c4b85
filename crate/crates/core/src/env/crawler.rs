//! Kinematic biped crawler.
//!
//! A rigid body carries two limbs, one at each end, and each limb has an
//! upper and a lower segment. The four joint angles are discretized into bins;
//! every action moves each joint by at most one bin.
//!
//! # Geometry
//!
//! Hips sit at `x = +body_length / 2` (front limb) and `x = -body_length / 2`
//! (back limb) relative to the body centre, `hip_height` above the ground.
//! Angles are measured from straight down, positive pointing away from the
//! body. With upper angle `u` and lower (knee) angle `l`, the upper segment
//! points along `u` and the lower segment along `u - l`:
//!
//! ```text
//! tip_x = side * (body_length / 2 + upper_len * sin(u) + lower_len * sin(u - l))
//! tip_y = hip_height - upper_len * cos(u) - lower_len * cos(u - l)
//! ```
//!
//! # Contact model
//!
//! Quasi-static: a tip with `tip_y <= 0` touches the ground. A limb that
//! touches the ground both before and after a move is an anchor, and the body
//! translates so that the anchor tip keeps its ground position. With two
//! anchors the body moves by the mean of the two implied translations; with
//! none it does not move. The reward is the horizontal body displacement.
//!
//! # Encoding
//!
//! Joint bins `(upper_1, lower_1, upper_2, lower_2)` (front limb first) map to
//! a state id by mixed radix `(upper_bins, lower_bins, upper_bins,
//! lower_bins)`, most significant first. Composite actions are four ternary
//! digits `d_j` (`0` = one bin down, `1` = hold, `2` = one bin up), joint 0
//! least significant; the all-hold code 40 is removed from the space, so codes
//! above 40 shift down by one and there are `3^4 - 1 = 80` actions.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::mdp::{Action, EnvModel, Environment, State};

const CONTACT_EPS: f64 = 1e-9;
const HOLD_ALL: usize = 40;
pub const COMPOSITE_ACTIONS: usize = 80;

#[derive(Debug, Clone, PartialEq)]
pub struct CrawlerSpec {
    pub upper_bins: usize,
    pub lower_bins: usize,
    /// Upper joint range in radians.
    pub upper_range: (f64, f64),
    /// Lower (knee) joint range in radians.
    pub lower_range: (f64, f64),
    pub upper_len: f64,
    pub lower_len: f64,
    pub body_len: f64,
    pub hip_height: f64,
}

impl Default for CrawlerSpec {
    /// Full 9 x 13 discretization.
    fn default() -> Self {
        Self {
            upper_bins: 9,
            lower_bins: 13,
            upper_range: (-PI / 6.0, PI / 2.0),
            lower_range: (0.0, 5.0 * PI / 6.0),
            upper_len: 2.0,
            lower_len: 2.0,
            body_len: 4.0,
            hip_height: 2.0,
        }
    }
}

impl CrawlerSpec {
    /// 5 x 5 bins per limb, 625 states.
    pub fn reduced() -> Self {
        Self {
            upper_bins: 5,
            lower_bins: 5,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.upper_bins < 2 {
            return Err(Error::config("crawler.upper_bins", "must be at least 2"));
        }
        if self.lower_bins < 2 {
            return Err(Error::config("crawler.lower_bins", "must be at least 2"));
        }
        for (field, (lo, hi)) in [
            ("crawler.upper_range", self.upper_range),
            ("crawler.lower_range", self.lower_range),
        ] {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::config(field, format!("invalid range [{lo}, {hi}]")));
            }
        }
        for (field, v) in [
            ("crawler.upper_len", self.upper_len),
            ("crawler.lower_len", self.lower_len),
            ("crawler.body_len", self.body_len),
            ("crawler.hip_height", self.hip_height),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(field, format!("{v} must be positive")));
            }
        }
        Ok(())
    }

    pub fn state_count(&self) -> usize {
        (self.upper_bins * self.lower_bins).pow(2)
    }

    fn radices(&self) -> [usize; 4] {
        [
            self.upper_bins,
            self.lower_bins,
            self.upper_bins,
            self.lower_bins,
        ]
    }

    fn upper_angle(&self, bin: usize) -> f64 {
        bin_angle(self.upper_range, self.upper_bins, bin)
    }

    fn lower_angle(&self, bin: usize) -> f64 {
        bin_angle(self.lower_range, self.lower_bins, bin)
    }
}

fn bin_angle((lo, hi): (f64, f64), bins: usize, bin: usize) -> f64 {
    lo + (hi - lo) * bin as f64 / (bins - 1) as f64
}

/// Joint bins `[upper_1, lower_1, upper_2, lower_2]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CrawlerState {
    pub joints: [usize; 4],
}

impl CrawlerState {
    pub fn new(joints: [usize; 4]) -> Self {
        Self { joints }
    }

    /// Swaps the two limbs.
    pub fn mirrored(self) -> Self {
        let [u1, l1, u2, l2] = self.joints;
        Self::new([u2, l2, u1, l1])
    }
}

pub fn crawler_encode(spec: &CrawlerSpec, state: CrawlerState) -> Result<State> {
    let mut id = 0;
    for (&bin, radix) in state.joints.iter().zip(spec.radices()) {
        if bin >= radix {
            return Err(Error::InputDomain(format!(
                "joint bins {:?} exceed radices {:?}",
                state.joints,
                spec.radices()
            )));
        }
        id = id * radix + bin;
    }
    Ok(State(id))
}

pub fn crawler_decode(spec: &CrawlerSpec, s: State) -> Result<CrawlerState> {
    if s.0 >= spec.state_count() {
        return Err(Error::InputDomain(format!(
            "state {} not in [0, {})",
            s.0,
            spec.state_count()
        )));
    }
    let mut joints = [0; 4];
    let mut rest = s.0;
    for (slot, radix) in joints.iter_mut().zip(spec.radices()).rev() {
        *slot = rest % radix;
        rest /= radix;
    }
    Ok(CrawlerState::new(joints))
}

/// Per-joint moves in `{-1, 0, +1}` for a composite action id.
pub fn decode_action(a: Action) -> Result<[i8; 4]> {
    if a.0 >= COMPOSITE_ACTIONS {
        return Err(Error::InputDomain(format!(
            "composite action {} not in [0, {COMPOSITE_ACTIONS})",
            a.0
        )));
    }
    let mut code = if a.0 < HOLD_ALL { a.0 } else { a.0 + 1 };
    let mut moves = [0i8; 4];
    for m in moves.iter_mut() {
        *m = (code % 3) as i8 - 1;
        code /= 3;
    }
    Ok(moves)
}

/// Composite action id for per-joint moves; holding every joint is not an
/// action.
pub fn encode_action(moves: [i8; 4]) -> Result<Action> {
    if moves.iter().any(|m| !(-1..=1).contains(m)) {
        return Err(Error::InputDomain(format!(
            "moves {moves:?} not in {{-1, 0, 1}}"
        )));
    }
    let code = moves
        .iter()
        .rev()
        .fold(0usize, |acc, &m| acc * 3 + (m + 1) as usize);
    match code {
        HOLD_ALL => Err(Error::InputDomain(
            "holding every joint still is not an action".into(),
        )),
        c if c < HOLD_ALL => Ok(Action(c)),
        c => Ok(Action(c - 1)),
    }
}

/// Tip position of one limb relative to the body centre.
fn tip(spec: &CrawlerSpec, side: f64, upper_bin: usize, lower_bin: usize) -> (f64, f64) {
    let u = spec.upper_angle(upper_bin);
    let knee = u - spec.lower_angle(lower_bin);
    let x = side * (spec.body_len / 2.0 + spec.upper_len * u.sin() + spec.lower_len * knee.sin());
    let y = spec.hip_height - spec.upper_len * u.cos() - spec.lower_len * knee.cos();
    (x, y)
}

fn limb_tips(spec: &CrawlerSpec, s: &CrawlerState) -> [(f64, f64); 2] {
    [
        tip(spec, 1.0, s.joints[0], s.joints[1]),
        tip(spec, -1.0, s.joints[2], s.joints[3]),
    ]
}

/// Applies one composite action: moves each joint by its digit (clamped to
/// the bin range) and returns the new state with the body displacement.
pub fn crawler_step(
    spec: &CrawlerSpec,
    s: CrawlerState,
    action: Action,
) -> Result<(CrawlerState, f64)> {
    let moves = decode_action(action)?;
    let mut next = s;
    for ((bin, radix), m) in next.joints.iter_mut().zip(spec.radices()).zip(moves) {
        *bin = (*bin as i64 + m as i64).clamp(0, radix as i64 - 1) as usize;
    }
    Ok((next, displacement(spec, &s, &next)))
}

fn displacement(spec: &CrawlerSpec, before: &CrawlerState, after: &CrawlerState) -> f64 {
    let (b, a) = (limb_tips(spec, before), limb_tips(spec, after));
    let mut total = 0.0;
    let mut anchors = 0;
    for (tb, ta) in b.iter().zip(a.iter()) {
        if tb.1 <= CONTACT_EPS && ta.1 <= CONTACT_EPS {
            total += tb.0 - ta.0;
            anchors += 1;
        }
    }
    if anchors == 0 {
        0.0
    } else {
        total / anchors as f64
    }
}

#[derive(Debug, Clone)]
pub struct Crawler {
    spec: CrawlerSpec,
    current: State,
    body_x: f64,
}

impl Crawler {
    pub fn new(spec: CrawlerSpec) -> Result<Self> {
        spec.validate()?;
        let mut crawler = Self {
            spec,
            current: State(0),
            body_x: 0.0,
        };
        crawler.current = crawler.start_state();
        Ok(crawler)
    }

    pub fn spec(&self) -> &CrawlerSpec {
        &self.spec
    }

    pub fn joints(&self) -> CrawlerState {
        crawler_decode(&self.spec, self.current).expect("current state is valid")
    }

    /// Accumulated horizontal body position; not part of the state id.
    pub fn body_x(&self) -> f64 {
        self.body_x
    }

    /// Whether each limb tip (front, back) touches the ground in `s`.
    pub fn contacts(&self, s: &CrawlerState) -> [bool; 2] {
        limb_tips(&self.spec, s).map(|(_, y)| y <= CONTACT_EPS)
    }
}

impl EnvModel for Crawler {
    fn state_count(&self) -> usize {
        self.spec.state_count()
    }

    fn action_count(&self) -> usize {
        COMPOSITE_ACTIONS
    }

    fn transition(&self, s: State, a: Action) -> Result<(State, f64)> {
        let joints = crawler_decode(&self.spec, s)?;
        let (next, reward) = crawler_step(&self.spec, joints, a)?;
        Ok((crawler_encode(&self.spec, next)?, reward))
    }
}

impl Environment for Crawler {
    fn current(&self) -> State {
        self.current
    }

    fn set_state(&mut self, s: State) -> Result<()> {
        self.check_state(s)?;
        self.current = s;
        Ok(())
    }

    /// Every joint at its middle bin.
    fn start_state(&self) -> State {
        let (u, l) = (self.spec.upper_bins / 2, self.spec.lower_bins / 2);
        crawler_encode(&self.spec, CrawlerState::new([u, l, u, l])).expect("middle bins are valid")
    }

    fn step(&mut self, a: Action) -> Result<(State, f64)> {
        let (next, reward) = self.transition(self.current, a)?;
        self.current = next;
        self.body_x += reward;
        Ok((next, reward))
    }
}

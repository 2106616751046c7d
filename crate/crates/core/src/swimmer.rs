//! Dimensionless swimmer models.
//!
//! Lengths are in units of the link length `a`. For Purcell's swimmer the time unit
//! is `T / (2 d_max)`, for the three-sphere swimmer it is `a T / (d_max - d_min)`,
//! where `T` is the time one actuation takes. With those choices every actuation is
//! a rate of `-1`, `0` or `+1` and `T` never appears at runtime.
//!
//! Purcell geometry: the middle link is centred at `rc` with orientation `dc`. Link 1
//! hangs off the rear joint (`rc - t/2`) pointing along angle `dc - d1` away from
//! the body, link 2 hangs off the front joint (`rc + t/2`) along `dc + d2`. This is
//! the orientation under which the closed-form velocities below agree with the
//! numerical resistive-force solve in [`crate::oracle`].

use core::fmt;

use alloc::vec::Vec;
use libm::{cos, sin};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Purcell,
    Ng,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Purcell => "purcell",
            ModelKind::Ng => "ng",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Target swimming direction along `e_x`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    #[serde(rename = "+x")]
    PlusX,
    #[serde(rename = "-x")]
    MinusX,
}

impl Direction {
    pub fn sign(self) -> f64 {
        match self {
            Direction::PlusX => 1.0,
            Direction::MinusX => -1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Direction::PlusX => "+x",
            Direction::MinusX => "-x",
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Degree of freedom index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Dof {
    One,
    Two,
}

impl TryFrom<u8> for Dof {
    type Error = Error;
    fn try_from(v: u8) -> Result<Self> {
        match v {
            1 => Ok(Dof::One),
            2 => Ok(Dof::Two),
            _ => Err(Error::InvalidAction(alloc::format!("DOF {v}"))),
        }
    }
}

impl From<Dof> for u8 {
    fn from(d: Dof) -> u8 {
        match d {
            Dof::One => 1,
            Dof::Two => 2,
        }
    }
}

/// Rate-of-change token.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "i8", into = "i8")]
pub enum Roc {
    Minus,
    Zero,
    Plus,
}

impl Roc {
    pub fn value(self) -> f64 {
        i8::from(self) as f64
    }
}

impl TryFrom<i8> for Roc {
    type Error = Error;
    fn try_from(v: i8) -> Result<Self> {
        match v {
            -1 => Ok(Roc::Minus),
            0 => Ok(Roc::Zero),
            1 => Ok(Roc::Plus),
            _ => Err(Error::InvalidAction(alloc::format!("ROC {v}"))),
        }
    }
}

impl From<Roc> for i8 {
    fn from(r: Roc) -> i8 {
        match r {
            Roc::Minus => -1,
            Roc::Zero => 0,
            Roc::Plus => 1,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct RawAction {
    dof: Dof,
    roc: Roc,
}

/// One actuation: a DOF and its rate of change. Every zero-rate action is the
/// same null action, stored as `(DOF 1, 0)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "RawAction", into = "RawAction")]
pub struct Action {
    dof: Dof,
    roc: Roc,
}

impl From<RawAction> for Action {
    fn from(r: RawAction) -> Self {
        Action::new(r.dof, r.roc)
    }
}

impl From<Action> for RawAction {
    fn from(a: Action) -> Self {
        RawAction { dof: a.dof, roc: a.roc }
    }
}

impl Action {
    pub const NULL: Action = Action { dof: Dof::One, roc: Roc::Zero };
    /// Number of distinct actions, null included.
    pub const COUNT: usize = 5;

    pub fn new(dof: Dof, roc: Roc) -> Self {
        if roc == Roc::Zero {
            Self::NULL
        } else {
            Action { dof, roc }
        }
    }

    pub fn dof(self) -> Dof {
        self.dof
    }

    pub fn roc(self) -> Roc {
        self.roc
    }

    pub fn is_null(self) -> bool {
        self.roc == Roc::Zero
    }

    /// Dense id: `(1,-1)=0, (1,+1)=1, (2,-1)=2, (2,+1)=3, null=4`.
    pub fn id(self) -> usize {
        match (self.dof, self.roc) {
            (_, Roc::Zero) => 4,
            (Dof::One, Roc::Minus) => 0,
            (Dof::One, Roc::Plus) => 1,
            (Dof::Two, Roc::Minus) => 2,
            (Dof::Two, Roc::Plus) => 3,
        }
    }

    pub fn from_id(id: usize) -> Option<Action> {
        Some(match id {
            0 => Action::new(Dof::One, Roc::Minus),
            1 => Action::new(Dof::One, Roc::Plus),
            2 => Action::new(Dof::Two, Roc::Minus),
            3 => Action::new(Dof::Two, Roc::Plus),
            4 => Action::NULL,
            _ => return None,
        })
    }

    /// The action that undoes this one.
    pub fn inverse(self) -> Action {
        let roc = match self.roc {
            Roc::Minus => Roc::Plus,
            Roc::Zero => Roc::Zero,
            Roc::Plus => Roc::Minus,
        };
        Action::new(self.dof, roc)
    }

    pub fn rates(self) -> RateVector {
        match self.dof {
            Dof::One => RateVector::new(self.roc.value(), 0.0),
            Dof::Two => RateVector::new(0.0, self.roc.value()),
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let roc = match self.roc {
            Roc::Minus => "-1",
            Roc::Zero => "0",
            Roc::Plus => "+1",
        };
        write!(f, "DOF {} ROC {}", u8::from(self.dof), roc)
    }
}

/// Rates of change of the two DOFs.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RateVector {
    pub dd1: f64,
    pub dd2: f64,
}

impl RateVector {
    pub fn new(dd1: f64, dd2: f64) -> Self {
        Self { dd1, dd2 }
    }

    pub fn scale(self, k: f64) -> Self {
        Self::new(self.dd1 * k, self.dd2 * k)
    }
}

/// One of the four extreme shapes, numbered in Gray-code order over `(d1, d2)`:
/// `0 = (lo, lo)`, `1 = (lo, hi)`, `2 = (hi, hi)`, `3 = (hi, lo)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct ShapeId(u8);

impl ShapeId {
    pub const ALL: [ShapeId; 4] = [ShapeId(0), ShapeId(1), ShapeId(2), ShapeId(3)];

    pub fn new(id: u8) -> Option<Self> {
        (id < 4).then_some(ShapeId(id))
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn from_levels(d1_high: bool, d2_high: bool) -> Self {
        ShapeId(match (d1_high, d2_high) {
            (false, false) => 0,
            (false, true) => 1,
            (true, true) => 2,
            (true, false) => 3,
        })
    }

    /// `(d1 at upper limit, d2 at upper limit)`.
    pub fn levels(self) -> (bool, bool) {
        match self.0 {
            0 => (false, false),
            1 => (false, true),
            2 => (true, true),
            _ => (true, false),
        }
    }

    /// Shape reached by applying `a`, or `None` if `a` leaves the box.
    pub fn apply(self, a: Action) -> Option<ShapeId> {
        let (h1, h2) = self.levels();
        let high = |h: bool| match (h, a.roc) {
            (_, Roc::Zero) => Some(h),
            (false, Roc::Plus) => Some(true),
            (true, Roc::Minus) => Some(false),
            _ => None,
        };
        match a.dof {
            _ if a.is_null() => Some(self),
            Dof::One => high(h1).map(|n| ShapeId::from_levels(n, h2)),
            Dof::Two => high(h2).map(|n| ShapeId::from_levels(h1, n)),
        }
    }

    /// Non-null actions legal from this shape, ordered by action id.
    pub fn moves(self) -> [Action; 2] {
        let (h1, h2) = self.levels();
        let r = |h: bool| if h { Roc::Minus } else { Roc::Plus };
        [Action::new(Dof::One, r(h1)), Action::new(Dof::Two, r(h2))]
    }
}

impl TryFrom<u8> for ShapeId {
    type Error = Error;
    fn try_from(v: u8) -> Result<Self> {
        ShapeId::new(v).ok_or_else(|| Error::Config(alloc::format!("shape id {v} not in 0..=3")))
    }
}

impl From<ShapeId> for u8 {
    fn from(s: ShapeId) -> u8 {
        s.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PurcellState {
    pub d1: f64,
    pub d2: f64,
    /// Middle-link orientation, unwrapped.
    pub dc: f64,
    pub rc: [f64; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NgState {
    pub d1: f64,
    pub d2: f64,
    pub rc: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase")]
pub enum SwimmerState {
    Purcell(PurcellState),
    Ng(NgState),
}

impl SwimmerState {
    /// Swimmer at the given extreme shape with its centroid at the origin.
    pub fn at_shape(kind: ModelKind, p: &ModelParams, shape: ShapeId) -> Self {
        let (lo, hi) = p.bounds(kind);
        let (h1, h2) = shape.levels();
        let pick = |h: bool| if h { hi } else { lo };
        match kind {
            ModelKind::Purcell => SwimmerState::Purcell(PurcellState {
                d1: pick(h1),
                d2: pick(h2),
                dc: 0.0,
                rc: [0.0, 0.0],
            }),
            ModelKind::Ng => SwimmerState::Ng(NgState { d1: pick(h1), d2: pick(h2), rc: 0.0 }),
        }
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            SwimmerState::Purcell(_) => ModelKind::Purcell,
            SwimmerState::Ng(_) => ModelKind::Ng,
        }
    }

    pub fn dofs(&self) -> (f64, f64) {
        match self {
            SwimmerState::Purcell(s) => (s.d1, s.d2),
            SwimmerState::Ng(s) => (s.d1, s.d2),
        }
    }

    /// Centroid coordinate along `e_x`.
    pub fn x(&self) -> f64 {
        match self {
            SwimmerState::Purcell(s) => s.rc[0],
            SwimmerState::Ng(s) => s.rc,
        }
    }

    pub fn y(&self) -> f64 {
        match self {
            SwimmerState::Purcell(s) => s.rc[1],
            SwimmerState::Ng(_) => 0.0,
        }
    }

    /// Body orientation; identically zero for the three-sphere swimmer.
    pub fn orientation(&self) -> f64 {
        match self {
            SwimmerState::Purcell(s) => s.dc,
            SwimmerState::Ng(_) => 0.0,
        }
    }

    /// The extreme shape this state sits at, if both DOFs are exactly at a bound.
    pub fn shape(&self, p: &ModelParams) -> Option<ShapeId> {
        let (lo, hi) = p.bounds(self.kind());
        let level = |d: f64| {
            if d == lo {
                Some(false)
            } else if d == hi {
                Some(true)
            } else {
                None
            }
        };
        let (d1, d2) = self.dofs();
        Some(ShapeId::from_levels(level(d1)?, level(d2)?))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Upper DOF bound; Purcell angles live in `[-d_max, d_max]`.
    pub d_max: f64,
    /// Lower length bound of the three-sphere swimmer (unused by Purcell).
    pub d_min: f64,
    /// RK4 substeps per actuation.
    pub substeps: u32,
    /// Whether the null action is offered by [`valid_actions`].
    pub null_action: bool,
}

impl ModelParams {
    pub fn purcell() -> Self {
        Self { d_max: core::f64::consts::FRAC_PI_6, d_min: 0.0, substeps: 200, null_action: true }
    }

    pub fn ng() -> Self {
        Self { d_max: 10.0, d_min: 8.0, substeps: 200, null_action: true }
    }

    pub fn default_for(kind: ModelKind) -> Self {
        match kind {
            ModelKind::Purcell => Self::purcell(),
            ModelKind::Ng => Self::ng(),
        }
    }

    /// `(lo, hi)` DOF bounds for the given model.
    pub fn bounds(&self, kind: ModelKind) -> (f64, f64) {
        match kind {
            ModelKind::Purcell => (-self.d_max, self.d_max),
            ModelKind::Ng => (self.d_min, self.d_max),
        }
    }

    /// Dimensionless duration of one unit-rate actuation.
    pub fn stroke(&self, kind: ModelKind) -> f64 {
        let (lo, hi) = self.bounds(kind);
        hi - lo
    }

    pub fn validate(&self, kind: ModelKind) -> Result<()> {
        if self.substeps == 0 {
            return Err(Error::Config("substeps must be positive".into()));
        }
        let ok = match kind {
            ModelKind::Purcell => self.d_max > 0.0 && self.d_max <= core::f64::consts::FRAC_PI_3,
            ModelKind::Ng => self.d_min > 0.0 && self.d_min < self.d_max,
        };
        if !ok || !self.d_max.is_finite() || !self.d_min.is_finite() {
            return Err(Error::Config(alloc::format!(
                "bounds d_min={} d_max={} invalid for {kind}",
                self.d_min,
                self.d_max
            )));
        }
        Ok(())
    }
}

/// Rigid-body velocity of Purcell's middle link.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BodyVelocity {
    pub u: f64,
    pub v: f64,
    /// Angular velocity `d(dc)/dt`.
    pub omega: f64,
}

/// Common denominator of the closed-form Purcell velocities.
pub fn purcell_delta(d1: f64, d2: f64) -> f64 {
    3.0 * (136.0 * cos(d1) + 14.0 * cos(2.0 * d1) - 8.0 * cos(d1 - d2) - cos(2.0 * (d1 - d2))
        - 4.0 * cos(2.0 * d1 - d2)
        + 14.0 * cos(2.0 * d2)
        + 56.0 * cos(d1 + d2)
        + 136.0 * cos(d2)
        + 3.0 * cos(2.0 * (d1 + d2))
        + 12.0 * cos(2.0 * d1 + d2)
        + 12.0 * cos(d1 + 2.0 * d2)
        - 4.0 * cos(d1 - 2.0 * d2)
        + 282.0)
}

// Coefficient of dd1 in u (with f = sin) and in -v (with f = cos).
fn purcell_a(f: fn(f64) -> f64, d1: f64, d2: f64, c: f64) -> f64 {
    262.0 * f(c - d1) - 26.0 * f(d1 + c) - 2.0 * f(2.0 * d1 + c) + 18.0 * f(c - 2.0 * d1)
        - 16.0 * f(c - d2)
        + 78.0 * f(-d1 - d2 + c)
        - 18.0 * f(d1 - d2 + c)
        + 8.0 * f(-2.0 * d1 - d2 + c)
        + 104.0 * f(d2 + c)
        + 126.0 * f(-d1 + d2 + c)
        + 30.0 * f(d1 + d2 + c)
        + 24.0 * f(2.0 * d2 + c)
        + 21.0 * f(-d1 + 2.0 * d2 + c)
        + f(d1 + 2.0 * d2 + c)
        - 2.0 * f(2.0 * d1 + 2.0 * d2 + c)
        - 4.0 * f(c - 2.0 * d2)
        + 9.0 * f(-d1 - 2.0 * d2 + c)
        - 3.0 * f(d1 - 2.0 * d2 + c)
        + 2.0 * f(-2.0 * d1 - 2.0 * d2 + c)
        + 36.0 * f(c)
}

// Coefficient of dd2 in u (f = sin) and in -v (f = cos).
fn purcell_b(f: fn(f64) -> f64, d1: f64, d2: f64, c: f64) -> f64 {
    104.0 * f(c - d1) - 16.0 * f(d1 + c) - 4.0 * f(2.0 * d1 + c) + 24.0 * f(c - 2.0 * d1)
        - 26.0 * f(c - d2)
        + 30.0 * f(-d1 - d2 + c)
        - 18.0 * f(d1 - d2 + c)
        - 3.0 * f(2.0 * d1 - d2 + c)
        + f(-2.0 * d1 - d2 + c)
        + 262.0 * f(d2 + c)
        + 126.0 * f(-d1 + d2 + c)
        + 78.0 * f(d1 + d2 + c)
        + 9.0 * f(2.0 * d1 + d2 + c)
        + 21.0 * f(-2.0 * d1 + d2 + c)
        + 18.0 * f(2.0 * d2 + c)
        + 8.0 * f(d1 + 2.0 * d2 + c)
        + 2.0 * f(2.0 * d1 + 2.0 * d2 + c)
        - 2.0 * f(c - 2.0 * d2)
        - 2.0 * f(-2.0 * d1 - 2.0 * d2 + c)
        + 36.0 * f(c)
}

fn purcell_omega_terms(d1: f64, d2: f64) -> (f64, f64) {
    let w1 = 102.0 * cos(d1) + 2.0 * cos(2.0 * d1) - 6.0 * cos(d1 - d2) - 4.0 * cos(2.0 * d2)
        + 42.0 * cos(d1 + d2)
        + 2.0 * cos(2.0 * (d1 + d2))
        + 9.0 * cos(d1 + 2.0 * d2)
        - 3.0 * cos(d1 - 2.0 * d2)
        + 108.0;
    let w2 = 4.0 * cos(2.0 * d1) + 6.0 * cos(d1 - d2) + 3.0 * cos(2.0 * d1 - d2)
        - 102.0 * cos(d2)
        - 2.0 * cos(2.0 * d2)
        - 42.0 * cos(d1 + d2)
        - 2.0 * cos(2.0 * (d1 + d2))
        - 9.0 * cos(2.0 * d1 + d2)
        - 108.0;
    (w1, w2)
}

/// Closed-form translational and angular velocity of Purcell's middle link.
pub fn purcell_velocity(s: &PurcellState, r: RateVector) -> Result<BodyVelocity> {
    let delta = purcell_delta(s.d1, s.d2);
    if delta.abs() < 1e-12 {
        return Err(Error::Singular(delta));
    }
    let (d1, d2, c) = (s.d1, s.d2, s.dc);
    let u = (r.dd1 * purcell_a(sin, d1, d2, c) + r.dd2 * purcell_b(sin, d1, d2, c)) / (2.0 * delta);
    let v = -(r.dd1 * purcell_a(cos, d1, d2, c) + r.dd2 * purcell_b(cos, d1, d2, c)) / (2.0 * delta);
    let (w1, w2) = purcell_omega_terms(d1, d2);
    let omega = 2.0 / delta * (r.dd1 * w1 + r.dd2 * w2);
    Ok(BodyVelocity { u, v, omega })
}

/// Axial centroid velocity of the three-sphere swimmer.
pub fn ng_velocity(d1: f64, d2: f64, r: RateVector) -> Result<f64> {
    if !(d1 > 0.0 && d2 > 0.0) {
        return Err(Error::Domain(alloc::format!("link lengths must be positive, got ({d1}, {d2})")));
    }
    Ok(((r.dd2 - r.dd1) / (d1 + d2) + 2.0 * (r.dd1 / d2 - r.dd2 / d1)) / 6.0)
}

/// Actions available from a boundary state: one legal direction per DOF, plus the
/// null action when `p.null_action` is set.
pub fn valid_actions(s: &SwimmerState, p: &ModelParams) -> Result<Vec<Action>> {
    let shape = s
        .shape(p)
        .ok_or_else(|| Error::Domain("state is not at an actuation boundary".into()))?;
    let mut out: Vec<Action> = shape.moves().to_vec();
    if p.null_action {
        out.push(Action::NULL);
    }
    Ok(out)
}

fn rk4<const N: usize>(
    y: [f64; N],
    t: f64,
    h: f64,
    mut f: impl FnMut(f64, &[f64; N]) -> [f64; N],
) -> [f64; N] {
    let add = |a: &[f64; N], b: &[f64; N], k: f64| {
        let mut o = *a;
        for i in 0..N {
            o[i] += k * b[i];
        }
        o
    };
    let k1 = f(t, &y);
    let k2 = f(t + h / 2.0, &add(&y, &k1, h / 2.0));
    let k3 = f(t + h / 2.0, &add(&y, &k2, h / 2.0));
    let k4 = f(t + h, &add(&y, &k3, h));
    let mut o = y;
    for i in 0..N {
        o[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    o
}

/// Advance one actuation: the chosen DOF sweeps linearly from one bound to the other
/// at unit rate while the pose is integrated with `p.substeps` RK4 steps. Returns the
/// new state and its displacement along `e_x`.
pub fn integrate_step(s: &SwimmerState, a: Action, p: &ModelParams) -> Result<(SwimmerState, f64)> {
    let kind = s.kind();
    if !valid_actions(s, p)?.contains(&a) {
        return Err(Error::InvalidAction(alloc::format!("{a} from ({}, {})", s.dofs().0, s.dofs().1)));
    }
    if a.is_null() {
        return Ok((*s, 0.0));
    }
    let (lo, hi) = p.bounds(kind);
    let rates = a.rates();
    let duration = hi - lo;
    let n = p.substeps.max(1);
    let h = duration / n as f64;
    let (d1_0, d2_0) = s.dofs();
    let shape = move |t: f64| (d1_0 + rates.dd1 * t, d2_0 + rates.dd2 * t);
    let snap = |d: f64, rate: f64| {
        if rate > 0.0 {
            hi
        } else if rate < 0.0 {
            lo
        } else {
            d
        }
    };
    let d1_end = snap(d1_0, rates.dd1);
    let d2_end = snap(d2_0, rates.dd2);

    match s {
        SwimmerState::Purcell(ps) => {
            let mut y = [ps.rc[0], ps.rc[1], ps.dc];
            let mut err = None;
            for i in 0..n {
                let t = i as f64 * h;
                y = rk4(y, t, h, |t, y| {
                    let (d1, d2) = shape(t);
                    let st = PurcellState { d1, d2, dc: y[2], rc: [y[0], y[1]] };
                    match purcell_velocity(&st, rates) {
                        Ok(w) => [w.u, w.v, w.omega],
                        Err(e) => {
                            err.get_or_insert(e);
                            [0.0; 3]
                        }
                    }
                });
            }
            if let Some(e) = err {
                return Err(e);
            }
            let next = PurcellState { d1: d1_end, d2: d2_end, dc: y[2], rc: [y[0], y[1]] };
            Ok((SwimmerState::Purcell(next), y[0] - ps.rc[0]))
        }
        SwimmerState::Ng(ns) => {
            // d1, d2 >= d_min > 0 along the whole sweep.
            let mut y = [ns.rc];
            for i in 0..n {
                let t = i as f64 * h;
                y = rk4(y, t, h, |t, _| {
                    let (d1, d2) = shape(t);
                    [((rates.dd2 - rates.dd1) / (d1 + d2) + 2.0 * (rates.dd1 / d2 - rates.dd2 / d1)) / 6.0]
                });
            }
            let next = NgState { d1: d1_end, d2: d2_end, rc: y[0] };
            Ok((SwimmerState::Ng(next), y[0] - ns.rc))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SimRng;
    use core::f64::consts::{FRAC_PI_3, FRAC_PI_6};

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
    }

    #[test]
    fn delta_at_origin() {
        assert_eq!(purcell_delta(0.0, 0.0), 1944.0);
    }

    #[test]
    fn delta_symmetric_and_positive() {
        let mut rng = SimRng::new(11);
        for _ in 0..200 {
            let d1 = rng.range(-1.5, 1.5);
            let d2 = rng.range(-1.5, 1.5);
            assert!(rel(purcell_delta(d1, d2), purcell_delta(d2, d1)) < 1e-14);
        }
        assert!(purcell_delta(0.5, -0.5) > 0.0);
        let dm = FRAC_PI_6;
        for i in 0..100 {
            for j in 0..100 {
                let d1 = -dm + 2.0 * dm * i as f64 / 99.0;
                let d2 = -dm + 2.0 * dm * j as f64 / 99.0;
                assert!(purcell_delta(d1, d2) > 0.0);
            }
        }
    }

    #[test]
    fn delta_positive_up_to_largest_allowed_amplitude() {
        let dm = FRAC_PI_3;
        let mut min = f64::INFINITY;
        for i in 0..=200 {
            for j in 0..=200 {
                let d1 = -dm + 2.0 * dm * i as f64 / 200.0;
                let d2 = -dm + 2.0 * dm * j as f64 / 200.0;
                min = min.min(purcell_delta(d1, d2));
            }
        }
        assert!(min > 100.0, "min delta {min}");
    }

    #[test]
    fn purcell_zero_rates() {
        let s = PurcellState { d1: 0.3, d2: -0.2, dc: 1.1, rc: [0.4, 0.1] };
        let w = purcell_velocity(&s, RateVector::new(0.0, 0.0)).unwrap();
        assert_eq!((w.u, w.v, w.omega), (0.0, 0.0, 0.0));
    }

    #[test]
    fn purcell_straight_equal_rates_do_not_rotate() {
        let s = PurcellState { d1: 0.0, d2: 0.0, dc: 0.0, rc: [0.0, 0.0] };
        let w = purcell_velocity(&s, RateVector::new(1.0, 1.0)).unwrap();
        assert!(w.omega.abs() < 1e-15);
    }

    #[test]
    fn purcell_rate_reversal_and_frame_rotation() {
        let mut rng = SimRng::new(5);
        for _ in 0..50 {
            let s = PurcellState {
                d1: rng.range(-0.5, 0.5),
                d2: rng.range(-0.5, 0.5),
                dc: rng.range(-3.0, 3.0),
                rc: [0.0, 0.0],
            };
            let r = RateVector::new(rng.symmetric(), rng.symmetric());
            let a = purcell_velocity(&s, r).unwrap();
            let b = purcell_velocity(&s, r.scale(-1.0)).unwrap();
            assert_eq!((a.u, a.v, a.omega), (-b.u, -b.v, -b.omega));

            let phi = rng.range(-3.0, 3.0);
            let rot = purcell_velocity(&PurcellState { dc: s.dc + phi, ..s }, r).unwrap();
            let (c, sn) = (cos(phi), sin(phi));
            let scale = a.u.abs().max(a.v.abs());
            assert!((rot.u - (c * a.u - sn * a.v)).abs() < 1e-12 * scale.max(1.0));
            assert!((rot.v - (sn * a.u + c * a.v)).abs() < 1e-12 * scale.max(1.0));
            assert!((rot.omega - a.omega).abs() < 1e-14);
        }
    }

    #[test]
    fn ng_spot_values() {
        assert_eq!(ng_velocity(2.0, 2.0, RateVector::new(0.0, 0.0)).unwrap(), 0.0);
        assert_eq!(ng_velocity(2.0, 2.0, RateVector::new(1.0, 0.0)).unwrap(), 0.125);
        for d in [0.5, 2.0, 9.0] {
            for w in [-1.0, 0.3, 1.0] {
                assert!(ng_velocity(d, d, RateVector::new(w, w)).unwrap().abs() < 1e-16);
            }
        }
        assert!(matches!(ng_velocity(0.0, 1.0, RateVector::default()), Err(Error::Domain(_))));
        assert!(matches!(ng_velocity(1.0, -1.0, RateVector::default()), Err(Error::Domain(_))));
    }

    #[test]
    fn valid_action_sets() {
        let p = ModelParams::purcell();
        let s = SwimmerState::Purcell(PurcellState { d1: p.d_max, d2: -p.d_max, dc: 0.0, rc: [0.0; 2] });
        let acts = valid_actions(&s, &p).unwrap();
        assert_eq!(
            acts,
            [Action::new(Dof::One, Roc::Minus), Action::new(Dof::Two, Roc::Plus), Action::NULL]
        );

        let p = ModelParams { null_action: false, ..ModelParams::ng() };
        let s = SwimmerState::at_shape(ModelKind::Ng, &p, ShapeId::new(0).unwrap());
        let acts = valid_actions(&s, &p).unwrap();
        assert_eq!(acts, [Action::new(Dof::One, Roc::Plus), Action::new(Dof::Two, Roc::Plus)]);

        for kind in [ModelKind::Purcell, ModelKind::Ng] {
            for null in [false, true] {
                let p = ModelParams { null_action: null, ..ModelParams::default_for(kind) };
                for id in ShapeId::ALL {
                    let s = SwimmerState::at_shape(kind, &p, id);
                    let n = valid_actions(&s, &p).unwrap().len();
                    assert_eq!(n, if null { 3 } else { 2 });
                }
            }
        }
    }

    #[test]
    fn interior_state_has_no_action_set() {
        let p = ModelParams::ng();
        let s = SwimmerState::Ng(NgState { d1: 9.0, d2: 8.0, rc: 0.0 });
        assert!(valid_actions(&s, &p).is_err());
    }

    #[test]
    fn null_step_is_identity() {
        let p = ModelParams::ng();
        let s = SwimmerState::at_shape(ModelKind::Ng, &p, ShapeId::new(2).unwrap());
        let (t, dx) = integrate_step(&s, Action::NULL, &p).unwrap();
        assert_eq!(t, s);
        assert_eq!(dx, 0.0);
    }

    #[test]
    fn illegal_step_rejected() {
        let p = ModelParams::ng();
        let s = SwimmerState::at_shape(ModelKind::Ng, &p, ShapeId::new(0).unwrap());
        let err = integrate_step(&s, Action::new(Dof::One, Roc::Minus), &p).unwrap_err();
        assert!(matches!(err, Error::InvalidAction(_)));
        let p2 = ModelParams { null_action: false, ..p };
        assert!(integrate_step(&s, Action::NULL, &p2).is_err());
    }

    #[test]
    fn purcell_flip_and_back_returns_home() {
        let p = ModelParams::purcell();
        let s0 = SwimmerState::at_shape(ModelKind::Purcell, &p, ShapeId::new(0).unwrap());
        let up = Action::new(Dof::One, Roc::Plus);
        let (s1, dx1) = integrate_step(&s0, up, &p).unwrap();
        assert!(dx1.abs() > 1e-4);
        let (s2, dx2) = integrate_step(&s1, up.inverse(), &p).unwrap();
        assert_eq!(s2.dofs(), s0.dofs());
        assert!((dx1 + dx2).abs() <= 1e-8);
        assert!(s2.y().abs() <= 1e-8);
        assert!(s2.orientation().abs() <= 1e-8);
    }

    #[test]
    fn step_endpoints_are_snapped() {
        for kind in [ModelKind::Purcell, ModelKind::Ng] {
            let p = ModelParams { substeps: 7, ..ModelParams::default_for(kind) };
            let mut s = SwimmerState::at_shape(kind, &p, ShapeId::new(0).unwrap());
            for a in [
                Action::new(Dof::One, Roc::Plus),
                Action::new(Dof::Two, Roc::Plus),
                Action::new(Dof::One, Roc::Minus),
                Action::new(Dof::Two, Roc::Minus),
            ] {
                s = integrate_step(&s, a, &p).unwrap().0;
                assert!(s.shape(&p).is_some());
            }
            assert_eq!(s.shape(&p), ShapeId::new(0));
        }
    }

    #[test]
    fn ng_pose_independent() {
        let p = ModelParams::ng();
        let a = Action::new(Dof::One, Roc::Plus);
        let s0 = SwimmerState::Ng(NgState { d1: 8.0, d2: 8.0, rc: 0.0 });
        let s1 = SwimmerState::Ng(NgState { d1: 8.0, d2: 8.0, rc: 123.5 });
        let dx0 = integrate_step(&s0, a, &p).unwrap().1;
        let dx1 = integrate_step(&s1, a, &p).unwrap().1;
        assert!((dx0 - dx1).abs() < 1e-12);
    }

    #[test]
    fn shape_graph_is_gray_code() {
        for id in ShapeId::ALL {
            for a in id.moves() {
                let next = id.apply(a).unwrap();
                let diff = (next.index() as i32 - id.index() as i32).rem_euclid(4);
                assert!(diff == 1 || diff == 3);
                assert_eq!(next.apply(a.inverse()), Some(id));
                assert_eq!(id.apply(a.inverse()), None);
            }
        }
    }

    #[test]
    fn action_ids_round_trip() {
        for id in 0..Action::COUNT {
            assert_eq!(Action::from_id(id).unwrap().id(), id);
        }
        assert_eq!(Action::new(Dof::Two, Roc::Zero), Action::NULL);
    }

    #[test]
    fn params_validation() {
        assert!(ModelParams::purcell().validate(ModelKind::Purcell).is_ok());
        assert!(ModelParams::ng().validate(ModelKind::Ng).is_ok());
        let bad = ModelParams { d_max: 1.2, ..ModelParams::purcell() };
        assert!(bad.validate(ModelKind::Purcell).is_err());
        let bad = ModelParams { d_min: 0.0, ..ModelParams::ng() };
        assert!(bad.validate(ModelKind::Ng).is_err());
        let bad = ModelParams { substeps: 0, ..ModelParams::ng() };
        assert!(bad.validate(ModelKind::Ng).is_err());
    }
}

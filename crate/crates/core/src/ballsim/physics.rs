use nalgebra::Vector3;

use crate::config::KeyValues;
use crate::error::{Error, Result};
use crate::trajkit::{Point3, TimeGrid, Trajectory};

const BOUNCE_TOLERANCE: f64 = 1e-6;
const MAX_BISECTIONS: usize = 200;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BallState {
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    pub time: f64,
}

impl BallState {
    pub fn new(position: Point3, velocity: Point3, time: f64) -> Self {
        BallState {
            position: Vector3::from(position),
            velocity: Vector3::from(velocity),
            time,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.position.iter().chain(self.velocity.iter()).all(|c| c.is_finite()) && self.time.is_finite()
    }

    pub fn point(&self) -> Point3 {
        self.position.into()
    }

    /// Kinetic plus potential energy per unit mass.
    pub fn specific_energy(&self, p: &PhysicsParams) -> f64 {
        0.5 * self.velocity.norm_squared() + p.gravity * self.position.z
    }
}

/// Flight constants. Gravity acts along −z.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhysicsParams {
    pub gravity: f64,
    /// Quadratic drag: acceleration −k·|v|·v, in 1/m.
    pub drag_coeff: f64,
    pub table_height: f64,
    pub table_x: (f64, f64),
    pub table_y: (f64, f64),
    /// v_z scale on bounce.
    pub restitution_z: f64,
    /// (v_x, v_y) scale on bounce.
    pub tangential_retain: f64,
    /// Simulated trajectories end once the ball drops below this height.
    pub floor_height: f64,
}

impl Default for PhysicsParams {
    fn default() -> Self {
        PhysicsParams {
            gravity: 9.81,
            drag_coeff: 0.112,
            table_height: 0.76,
            table_x: (0.0, 2.74),
            table_y: (-0.7625, 0.7625),
            restitution_z: 0.88,
            tangential_retain: 0.80,
            floor_height: 0.0,
        }
    }
}

impl PhysicsParams {
    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.gravity,
            self.drag_coeff,
            self.table_height,
            self.restitution_z,
            self.tangential_retain,
            self.floor_height,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err(Error::Config("physics parameters must be finite".into()));
        }
        if self.drag_coeff < 0.0 {
            return Err(Error::Config(format!("drag_coeff = {} < 0", self.drag_coeff)));
        }
        if !(self.restitution_z > 0.0 && self.restitution_z <= 1.0) {
            return Err(Error::Config(format!("restitution_z = {} not in (0, 1]", self.restitution_z)));
        }
        if !(self.tangential_retain > 0.0 && self.tangential_retain <= 1.0) {
            return Err(Error::Config(format!(
                "tangential_retain = {} not in (0, 1]",
                self.tangential_retain
            )));
        }
        if self.table_x.0 > self.table_x.1 || self.table_y.0 > self.table_y.1 {
            return Err(Error::Config("empty table extent".into()));
        }
        Ok(())
    }

    /// Table with unbounded extent in x and y.
    pub fn with_infinite_table(mut self) -> Self {
        self.table_x = (f64::NEG_INFINITY, f64::INFINITY);
        self.table_y = (f64::NEG_INFINITY, f64::INFINITY);
        self
    }

    fn over_table(&self, p: &Vector3<f64>) -> bool {
        p.x >= self.table_x.0 && p.x <= self.table_x.1 && p.y >= self.table_y.0 && p.y <= self.table_y.1
    }

    pub fn to_key_values(&self) -> KeyValues {
        let mut kv = KeyValues::default();
        kv.set("gravity", self.gravity);
        kv.set("drag_coeff", self.drag_coeff);
        kv.set("table_height", self.table_height);
        kv.set("table_x_min", self.table_x.0);
        kv.set("table_x_max", self.table_x.1);
        kv.set("table_y_min", self.table_y.0);
        kv.set("table_y_max", self.table_y.1);
        kv.set("restitution_z", self.restitution_z);
        kv.set("tangential_retain", self.tangential_retain);
        kv.set("floor_height", self.floor_height);
        kv
    }

    /// Defaults overridden by whichever physics keys are present.
    pub fn from_key_values(kv: &KeyValues) -> Result<Self> {
        let mut p = PhysicsParams::default();
        macro_rules! take {
            ($key:literal, $field:expr) => {
                if let Some(v) = kv.parsed::<f64>($key)? {
                    $field = v;
                }
            };
        }
        take!("gravity", p.gravity);
        take!("drag_coeff", p.drag_coeff);
        take!("table_height", p.table_height);
        take!("table_x_min", p.table_x.0);
        take!("table_x_max", p.table_x.1);
        take!("table_y_min", p.table_y.0);
        take!("table_y_max", p.table_y.1);
        take!("restitution_z", p.restitution_z);
        take!("tangential_retain", p.tangential_retain);
        take!("floor_height", p.floor_height);
        p.validate()?;
        Ok(p)
    }
}

/// Time derivative of (position, velocity).
pub fn ball_dynamics(s: &BallState, p: &PhysicsParams) -> (Vector3<f64>, Vector3<f64>) {
    let v = s.velocity;
    let accel = Vector3::new(0.0, 0.0, -p.gravity) - p.drag_coeff * v.norm() * v;
    (v, accel)
}

fn rk4(s: &BallState, h: f64, p: &PhysicsParams) -> BallState {
    let shifted = |dp: Vector3<f64>, dv: Vector3<f64>, scale: f64| BallState {
        position: s.position + dp * scale,
        velocity: s.velocity + dv * scale,
        time: s.time + scale,
    };
    let (k1p, k1v) = ball_dynamics(s, p);
    let (k2p, k2v) = ball_dynamics(&shifted(k1p, k1v, 0.5 * h), p);
    let (k3p, k3v) = ball_dynamics(&shifted(k2p, k2v, 0.5 * h), p);
    let (k4p, k4v) = ball_dynamics(&shifted(k3p, k3v, h), p);
    BallState {
        position: s.position + (k1p + 2.0 * k2p + 2.0 * k3p + k4p) * (h / 6.0),
        velocity: s.velocity + (k1v + 2.0 * k2v + 2.0 * k3v + k4v) * (h / 6.0),
        time: s.time + h,
    }
}

/// One RK4 step of length `dt`, with a table bounce located by bisection when the
/// step crosses the table surface from above.
pub fn integrate_step(s: &BallState, dt: f64, p: &PhysicsParams) -> Result<BallState> {
    let next = rk4(s, dt, p);
    if !next.is_finite() {
        return Err(Error::Diverged { time: s.time + dt });
    }
    let h = p.table_height;
    if !(s.position.z > h && next.position.z < h) {
        return Ok(next);
    }

    let (mut lo, mut hi) = (0.0, dt);
    let mut contact = next;
    for _ in 0..MAX_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        contact = rk4(s, mid, p);
        let gap = contact.position.z - h;
        if gap.abs() < BOUNCE_TOLERANCE {
            break;
        }
        if gap > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if !p.over_table(&contact.position) {
        return Ok(next);
    }

    let tau = contact.time - s.time;
    contact.position.z = h;
    contact.velocity.z *= -p.restitution_z;
    contact.velocity.x *= p.tangential_retain;
    contact.velocity.y *= p.tangential_retain;
    let rest = dt - tau;
    if rest <= 0.0 {
        return Ok(contact);
    }
    integrate_step(&contact, rest, p)
}

/// Every grid state from `init` on, `steps` in total (the first is `init`).
pub fn propagate(init: &BallState, dt: f64, steps: usize, p: &PhysicsParams) -> Result<Vec<BallState>> {
    if !init.is_finite() {
        return Err(Error::Diverged { time: init.time });
    }
    let mut out = Vec::with_capacity(steps);
    let mut s = *init;
    for i in 0..steps {
        if i > 0 {
            s = integrate_step(&s, dt, p)?;
            // keep the grid clock exact instead of accumulating dt
            s.time = init.time + i as f64 * dt;
        }
        out.push(s);
    }
    Ok(out)
}

/// Ball flight sampled on `grid`, starting from `init` at the grid origin.
///
/// The trajectory ends at the last sample above the floor.
pub fn simulate(init: &BallState, grid: &TimeGrid, p: &PhysicsParams) -> Result<Trajectory> {
    let start = BallState {
        time: grid.origin(),
        ..*init
    };
    let states = propagate(&start, grid.dt(), grid.steps(), p)?;
    let kept: Vec<&BallState> = states
        .iter()
        .take_while(|s| s.position.z >= p.floor_height)
        .collect();
    let times = kept.iter().map(|s| s.time).collect();
    let positions = kept.iter().map(|s| s.point()).collect();
    Trajectory::from_samples(0, times, positions)
}

//! Moving sites and per-tick Voronoi recomputation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fortune::{build_voronoi, DiagramStats, VoronoiDiagram, VoronoiError};
use crate::geometry::{BoundingBox, Point, Site, SiteId};

pub const DEFAULT_DT: f64 = 0.1;

/// Stream id for the random-walk generator, kept apart from the stream that
/// draws initial velocities and waypoints.
const WALK_STREAM: u64 = 1;

#[derive(Debug, Error)]
pub enum DynamicError {
    #[error(transparent)]
    Voronoi(#[from] VoronoiError),
    #[error("invalid motion config: {0}")]
    InvalidConfig(String),
    #[error("site {0} starts outside the clip box")]
    SiteOutsideBox(SiteId),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Motion {
    Static,
    /// Constant velocity with specular reflection at the box walls.
    Bounce {
        velocity: Point,
    },
    /// Walks the waypoint list in a loop at constant speed.
    WaypointLoop {
        waypoints: Vec<Point>,
        speed: f64,
        next: usize,
    },
    /// Gaussian steps with standard deviation `scale * sqrt(dt)` per axis.
    RandomWalk {
        scale: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MovingSite {
    pub id: SiteId,
    pub position: Point,
    pub motion: Motion,
}

#[derive(Debug, Clone)]
pub struct DynamicWorld {
    pub sites: Vec<MovingSite>,
    pub clip_box: BoundingBox,
    pub tick: u64,
    pub dt: f64,
    pub rng_seed: u64,
    rng: ChaCha8Rng,
}

impl DynamicWorld {
    pub fn new(
        sites: Vec<MovingSite>,
        clip_box: BoundingBox,
        dt: f64,
        rng_seed: u64,
    ) -> Result<Self, DynamicError> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(DynamicError::InvalidConfig(format!(
                "dt must be positive, got {dt}"
            )));
        }
        for s in &sites {
            if !clip_box.strictly_contains(s.position) {
                return Err(DynamicError::SiteOutsideBox(s.id));
            }
            match &s.motion {
                Motion::WaypointLoop {
                    waypoints, speed, ..
                } => {
                    if waypoints.is_empty() || !(*speed >= 0.0) {
                        return Err(DynamicError::InvalidConfig(format!(
                            "site {}: waypoint loop needs waypoints and a non-negative speed",
                            s.id
                        )));
                    }
                    if waypoints.iter().any(|w| !clip_box.strictly_contains(*w)) {
                        return Err(DynamicError::InvalidConfig(format!(
                            "site {}: waypoint outside the clip box",
                            s.id
                        )));
                    }
                }
                Motion::RandomWalk { scale } if !(*scale >= 0.0) => {
                    return Err(DynamicError::InvalidConfig(format!(
                        "site {}: random walk scale must be non-negative",
                        s.id
                    )));
                }
                Motion::Bounce { velocity } if !velocity.is_finite() => {
                    return Err(DynamicError::InvalidConfig(format!(
                        "site {}: velocity must be finite",
                        s.id
                    )));
                }
                _ => {}
            }
        }
        let start: Vec<Site> = sites
            .iter()
            .map(|s| Site {
                id: s.id,
                position: s.position,
            })
            .collect();
        crate::fortune::validate(&start, &clip_box)?;
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
        rng.set_stream(WALK_STREAM);
        Ok(Self {
            sites,
            clip_box,
            tick: 0,
            dt,
            rng_seed,
            rng,
        })
    }

    pub fn positions(&self) -> Vec<Site> {
        self.sites
            .iter()
            .map(|s| Site {
                id: s.id,
                position: s.position,
            })
            .collect()
    }

    /// Advances every site by one `dt` and increments the tick.
    pub fn step(&mut self) {
        let b = self.clip_box;
        let dt = self.dt;
        for s in &mut self.sites {
            match &mut s.motion {
                Motion::Static => {}
                Motion::Bounce { velocity } => {
                    let (x, flip_x) = reflect(s.position.x + velocity.x * dt, b.min.x, b.max.x);
                    let (y, flip_y) = reflect(s.position.y + velocity.y * dt, b.min.y, b.max.y);
                    if flip_x {
                        velocity.x = -velocity.x;
                    }
                    if flip_y {
                        velocity.y = -velocity.y;
                    }
                    s.position = Point::new(x, y);
                }
                Motion::WaypointLoop {
                    waypoints,
                    speed,
                    next,
                } => {
                    let mut budget = *speed * dt;
                    // Bounded by one lap so coincident waypoints cannot spin.
                    for _ in 0..=waypoints.len() {
                        let target = waypoints[*next % waypoints.len()];
                        let d = s.position.dist(target);
                        if d > budget {
                            let t = budget / d;
                            s.position = s.position + (target - s.position) * t;
                            break;
                        }
                        s.position = target;
                        budget -= d;
                        *next = (*next + 1) % waypoints.len();
                    }
                }
                Motion::RandomWalk { scale } => {
                    let sd = *scale * dt.sqrt();
                    if sd > 0.0 {
                        let n = Normal::new(0.0, sd).expect("finite sd");
                        let (x, _) =
                            reflect(s.position.x + n.sample(&mut self.rng), b.min.x, b.max.x);
                        let (y, _) =
                            reflect(s.position.y + n.sample(&mut self.rng), b.min.y, b.max.y);
                        s.position = Point::new(x, y);
                    }
                }
            }
        }
        self.tick += 1;
    }
}

/// Folds `c` back into `(lo, hi)` by mirror reflection. Returns the new
/// coordinate and whether an odd number of reflections happened. Results
/// landing exactly on a wall are nudged inside.
fn reflect(mut c: f64, lo: f64, hi: f64) -> (f64, bool) {
    let span = hi - lo;
    let mut flipped = false;
    // Large jumps: reduce modulo the mirror period first.
    if c < lo - 2.0 * span || c > hi + 2.0 * span {
        let period = 2.0 * span;
        let k = ((c - lo) / period).floor();
        c -= k * period;
    }
    while c > hi || c < lo {
        c = if c > hi { 2.0 * hi - c } else { 2.0 * lo - c };
        flipped = !flipped;
    }
    let nudge = 1e-9 * span;
    if c <= lo {
        c = lo + nudge;
    } else if c >= hi {
        c = hi - nudge;
    }
    (c, flipped)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub tick: u64,
    pub sites: Vec<Site>,
    pub stats: DiagramStats,
    /// Rendered frame file name, when the caller writes one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<String>,
}

#[derive(Debug, Clone)]
pub struct Frame {
    pub record: FrameRecord,
    pub diagram: VoronoiDiagram,
}

/// Records `n_ticks` frames, stepping the world between them, then builds
/// each frame's diagram. Trajectories are fixed first, so diagrams are built
/// in parallel; the output order is by tick.
pub fn run_dynamic(world: &mut DynamicWorld, n_ticks: usize) -> Result<Vec<Frame>, DynamicError> {
    if n_ticks == 0 {
        return Err(DynamicError::InvalidConfig(
            "n_ticks must be at least 1".into(),
        ));
    }
    let mut snapshots = Vec::with_capacity(n_ticks);
    for i in 0..n_ticks {
        if i > 0 {
            world.step();
        }
        snapshots.push((world.tick, world.positions()));
    }
    let clip = world.clip_box;
    let built: Vec<Result<Frame, VoronoiError>> = snapshots
        .into_par_iter()
        .map(|(tick, sites)| {
            let diagram = build_voronoi(&sites, clip)?;
            Ok(Frame {
                record: FrameRecord {
                    tick,
                    sites,
                    stats: diagram.stats.clone(),
                    file: None,
                },
                diagram,
            })
        })
        .collect();
    built
        .into_iter()
        .map(|r| r.map_err(DynamicError::from))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MotionKind {
    Static,
    Bounce,
    WaypointLoop,
    RandomWalk,
}

/// File-level motion settings applied to every site. Velocities directions
/// and waypoints are drawn from the seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MotionConfig {
    #[serde(default = "one")]
    pub version: u32,
    pub model: MotionKind,
    #[serde(default = "default_dt")]
    pub dt: f64,
    /// Speed for bounce and waypoint models (world units per second).
    #[serde(default = "one_f")]
    pub speed: f64,
    /// Waypoints per site for the waypoint model.
    #[serde(default = "four")]
    pub waypoints: usize,
    /// Random-walk scale.
    #[serde(default = "one_f")]
    pub scale: f64,
}

fn one() -> u32 {
    1
}
fn one_f() -> f64 {
    1.0
}
fn four() -> usize {
    4
}
fn default_dt() -> f64 {
    DEFAULT_DT
}

impl Default for MotionConfig {
    fn default() -> Self {
        Self {
            version: 1,
            model: MotionKind::Static,
            dt: DEFAULT_DT,
            speed: 1.0,
            waypoints: 4,
            scale: 1.0,
        }
    }
}

impl MotionConfig {
    pub fn build_world(
        &self,
        sites: &[Site],
        clip_box: BoundingBox,
        seed: u64,
    ) -> Result<DynamicWorld, DynamicError> {
        if self.version != 1 {
            return Err(DynamicError::InvalidConfig(format!(
                "version: unsupported value {}",
                self.version
            )));
        }
        if !(self.speed.is_finite() && self.speed >= 0.0) {
            return Err(DynamicError::InvalidConfig(
                "speed: must be non-negative".into(),
            ));
        }
        if self.model == MotionKind::WaypointLoop && self.waypoints == 0 {
            return Err(DynamicError::InvalidConfig(
                "waypoints: must be at least 1".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b = clip_box;
        let moving = sites
            .iter()
            .map(|s| {
                let motion = match self.model {
                    MotionKind::Static => Motion::Static,
                    MotionKind::Bounce => {
                        let a = rng.random_range(0.0..std::f64::consts::TAU);
                        Motion::Bounce {
                            velocity: Point::new(self.speed * a.cos(), self.speed * a.sin()),
                        }
                    }
                    MotionKind::WaypointLoop => Motion::WaypointLoop {
                        waypoints: (0..self.waypoints)
                            .map(|_| {
                                Point::new(
                                    interior(&mut rng, b.min.x, b.max.x),
                                    interior(&mut rng, b.min.y, b.max.y),
                                )
                            })
                            .collect(),
                        speed: self.speed,
                        next: 0,
                    },
                    MotionKind::RandomWalk => Motion::RandomWalk { scale: self.scale },
                };
                MovingSite {
                    id: s.id,
                    position: s.position,
                    motion,
                }
            })
            .collect();
        DynamicWorld::new(moving, clip_box, self.dt, seed)
    }
}

/// Uniform draw strictly inside `(lo, hi)`.
pub(crate) fn interior<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    loop {
        let v = rng.random_range(lo..hi);
        if v > lo {
            return v;
        }
    }
}

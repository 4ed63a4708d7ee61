//! Mass–spring cloth with capsule collisions.
//!
//! Springs come in three classes built from the mesh: structural (edges),
//! shear (across each interior edge) and bend (two hops along a nearly
//! straight path). Integration is semi-implicit Euler with fixed substeps of
//! at most 1 ms, followed by a projection of penetrating particles onto the
//! collider surfaces.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mesh::{Capsule, TriMesh};
use crate::Vec3;

/// Longest internal substep, seconds.
pub const MAX_SUBSTEP: f64 = 1e-3;
/// Simulated settling time before recording starts, seconds.
pub const WARM_START: f64 = 2.0;

/// A 2-hop pair counts as a bend spring when the path turns by less than
/// this much (angle at the middle vertex above 150°).
const BEND_MIN_ANGLE_DEG: f64 = 150.0;
/// Time constant converting dimensionless damping to N·s/m: c = damping · m / τ.
const DAMPING_TIME: f64 = 0.1;
/// Weight scale in the stiffness mapping. Fixed, so that changing `gravity`
/// loads the cloth without also stiffening it.
const STANDARD_GRAVITY: f64 = 9.81;
const COLLISION_ITERATIONS: usize = 3;

#[derive(Debug, Error, PartialEq)]
pub enum ClothError {
    #[error("edge ({0}, {1}) is shared by more than two faces")]
    NonManifold(usize, usize),
    #[error("invalid cloth parameter {name}: {value}")]
    BadParam { name: &'static str, value: f64 },
    #[error("time step {0} s outside (0, 1/60]")]
    BadStep(f64),
    #[error("state has {state} particles but the network expects {expected}")]
    SizeMismatch { state: usize, expected: usize },
    #[error("particle {particle} became non-finite at substep {substep}")]
    NonFinite { particle: usize, substep: usize },
    #[error("frame {frame}: {source}")]
    Frame { frame: usize, source: Box<ClothError> },
    #[error("no body frames to simulate")]
    NoFrames,
    #[error("frame {frame} has {found} pin targets, expected {expected}")]
    PinMismatch { frame: usize, expected: usize, found: usize },
}

/// Cloth material. Defaults are woven-cotton values: vertex mass 0.05 kg,
/// tension/compression stiffness 15, shear stiffness 10, bending stiffness and
/// damping 0.5, tension/compression/shear damping 5.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClothParams {
    pub vertex_mass: f64,
    pub stiffness_tension: f64,
    pub stiffness_compression: f64,
    pub stiffness_shear: f64,
    pub stiffness_bending: f64,
    pub damping_tension: f64,
    pub damping_compression: f64,
    pub damping_shear: f64,
    pub damping_bending: f64,
    pub gravity: f64,
    /// Extra gain in `k = gain · stiffness · m · g / L₀`.
    pub stiffness_gain: f64,
    /// Cloth thickness kept between particles and collider surfaces, meters.
    pub collision_offset: f64,
    /// Coulomb friction coefficient against colliders.
    pub friction: f64,
    /// Velocity decay rate, 1/s.
    pub air_damping: f64,
}

impl Default for ClothParams {
    fn default() -> Self {
        Self {
            vertex_mass: 0.05,
            stiffness_tension: 15.0,
            stiffness_compression: 15.0,
            stiffness_shear: 10.0,
            stiffness_bending: 0.5,
            damping_tension: 5.0,
            damping_compression: 5.0,
            damping_shear: 5.0,
            damping_bending: 0.5,
            gravity: 9.81,
            stiffness_gain: 8.0,
            collision_offset: 0.003,
            friction: 0.3,
            air_damping: 3.0,
        }
    }
}

impl ClothParams {
    pub fn validate(&self) -> Result<(), ClothError> {
        let fields = [
            ("vertex_mass", self.vertex_mass),
            ("stiffness_tension", self.stiffness_tension),
            ("stiffness_compression", self.stiffness_compression),
            ("stiffness_shear", self.stiffness_shear),
            ("stiffness_bending", self.stiffness_bending),
            ("damping_tension", self.damping_tension),
            ("damping_compression", self.damping_compression),
            ("damping_shear", self.damping_shear),
            ("damping_bending", self.damping_bending),
            ("gravity", self.gravity),
            ("stiffness_gain", self.stiffness_gain),
            ("collision_offset", self.collision_offset),
            ("friction", self.friction),
            ("air_damping", self.air_damping),
        ];
        for (name, value) in fields {
            if !(value.is_finite() && value >= 0.0) {
                return Err(ClothError::BadParam { name, value });
            }
        }
        if self.vertex_mass <= 0.0 {
            return Err(ClothError::BadParam { name: "vertex_mass", value: self.vertex_mass });
        }
        Ok(())
    }

    /// Spring constant (N/m) for a stiffness value and rest length.
    pub fn spring_constant(&self, stiffness: f64, rest: f64) -> f64 {
        self.stiffness_gain * stiffness * self.vertex_mass * STANDARD_GRAVITY / rest
    }

    /// Damping coefficient (N·s/m) for a dimensionless damping value.
    pub fn damping_coefficient(&self, damping: f64) -> f64 {
        damping * self.vertex_mass / DAMPING_TIME
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spring {
    pub i: usize,
    pub j: usize,
    pub rest: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpringNetwork {
    pub particles: usize,
    pub structural: Vec<Spring>,
    pub shear: Vec<Spring>,
    pub bend: Vec<Spring>,
}

impl SpringNetwork {
    pub fn len(&self) -> usize {
        self.structural.len() + self.shear.len() + self.bend.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn key(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

pub fn build_spring_network(mesh: &TriMesh) -> Result<SpringNetwork, ClothError> {
    let v = mesh.vertices();
    // Opposite vertices of each undirected edge, in face order.
    let mut edges: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
    for f in mesh.faces() {
        for k in 0..3 {
            edges.entry(key(f[k], f[(k + 1) % 3])).or_default().push(f[(k + 2) % 3]);
        }
    }
    let mut edge_list: Vec<_> = edges.into_iter().collect();
    edge_list.sort_unstable_by_key(|e| e.0);
    if let Some(((a, b), _)) = edge_list.iter().find(|(_, o)| o.len() > 2) {
        return Err(ClothError::NonManifold(*a, *b));
    }
    let spring = |(i, j): (usize, usize)| Spring { i, j, rest: (v[j] - v[i]).norm() };
    let mut seen: HashSet<(usize, usize)> = HashSet::new();
    let mut neighbors: Vec<Vec<usize>> = vec![Vec::new(); v.len()];
    let mut structural = Vec::new();
    for (e, _) in &edge_list {
        seen.insert(*e);
        structural.push(spring(*e));
        neighbors[e.0].push(e.1);
        neighbors[e.1].push(e.0);
    }
    let mut shear = Vec::new();
    for (_, opp) in &edge_list {
        if let [c, d] = opp[..] {
            let k = key(c, d);
            if c != d && seen.insert(k) {
                shear.push(spring(k));
            }
        }
    }
    let cos_limit = BEND_MIN_ANGLE_DEG.to_radians().cos();
    let mut bend = Vec::new();
    for (m, nb) in neighbors.iter_mut().enumerate() {
        nb.sort_unstable();
        for (x, &a) in nb.iter().enumerate() {
            for &b in &nb[x + 1..] {
                let (da, db) = ((v[a] - v[m]).normalize(), (v[b] - v[m]).normalize());
                if da.dot(&db) < cos_limit {
                    let k = key(a, b);
                    if seen.insert(k) {
                        bend.push(spring(k));
                    }
                }
            }
        }
    }
    bend.sort_unstable_by_key(|s| (s.i, s.j));
    Ok(SpringNetwork { particles: v.len(), structural, shear, bend })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClothState {
    pub positions: Vec<Vec3>,
    pub velocities: Vec<Vec3>,
    pub pinned: Vec<bool>,
    pub time: f64,
}

impl ClothState {
    pub fn at_rest(positions: Vec<Vec3>, pinned: Vec<bool>) -> Self {
        let n = positions.len();
        Self { positions, velocities: vec![Vec3::zeros(); n], pinned, time: 0.0 }
    }

    pub fn kinetic_energy(&self, params: &ClothParams) -> f64 {
        0.5 * params.vertex_mass
            * self
                .velocities
                .iter()
                .zip(&self.pinned)
                .filter(|(_, p)| !**p)
                .map(|(v, _)| v.norm_squared())
                .sum::<f64>()
    }
}

/// Capsule with endpoint velocities, for one substep.
#[derive(Debug, Clone, Copy)]
struct MovingCapsule {
    cap: Capsule,
    va: Vec3,
    vb: Vec3,
    lo: Vec3,
    hi: Vec3,
}

/// Per-spring constants flattened for the inner loop.
struct Solver {
    i: Vec<usize>,
    j: Vec<usize>,
    rest: Vec<f64>,
    k_stretch: Vec<f64>,
    k_compress: Vec<f64>,
    c_stretch: Vec<f64>,
    c_compress: Vec<f64>,
    params: ClothParams,
    forces: Vec<Vec3>,
    substeps: usize,
}

impl Solver {
    fn new(net: &SpringNetwork, params: &ClothParams) -> Result<Self, ClothError> {
        params.validate()?;
        let p = params;
        let mut s = Solver {
            i: Vec::with_capacity(net.len()),
            j: Vec::with_capacity(net.len()),
            rest: Vec::with_capacity(net.len()),
            k_stretch: Vec::with_capacity(net.len()),
            k_compress: Vec::with_capacity(net.len()),
            c_stretch: Vec::with_capacity(net.len()),
            c_compress: Vec::with_capacity(net.len()),
            params: *p,
            forces: vec![Vec3::zeros(); net.particles],
            substeps: 0,
        };
        let classes = [
            (&net.structural, (p.stiffness_tension, p.stiffness_compression), (p.damping_tension, p.damping_compression)),
            (&net.shear, (p.stiffness_shear, p.stiffness_shear), (p.damping_shear, p.damping_shear)),
            (&net.bend, (p.stiffness_bending, p.stiffness_bending), (p.damping_bending, p.damping_bending)),
        ];
        for (springs, (ks, kc), (cs, cc)) in classes {
            for sp in springs {
                s.i.push(sp.i);
                s.j.push(sp.j);
                s.rest.push(sp.rest);
                s.k_stretch.push(p.spring_constant(ks, sp.rest));
                s.k_compress.push(p.spring_constant(kc, sp.rest));
                s.c_stretch.push(p.damping_coefficient(cs));
                s.c_compress.push(p.damping_coefficient(cc));
            }
        }
        Ok(s)
    }

    fn substep(
        &mut self,
        state: &mut ClothState,
        colliders: &[MovingCapsule],
        pin_targets: Option<(&[usize], &[Vec3])>,
        dt: f64,
    ) -> Result<(), ClothError> {
        let p = &self.params;
        let m = p.vertex_mass;
        let gravity = Vec3::new(0.0, -p.gravity * m, 0.0);
        for f in self.forces.iter_mut() {
            *f = gravity;
        }
        let x = &state.positions;
        let v = &state.velocities;
        for s in 0..self.i.len() {
            let (a, b) = (self.i[s], self.j[s]);
            let d = x[b] - x[a];
            let len = d.norm();
            if len == 0.0 {
                continue;
            }
            let dir = d / len;
            let stretch = len - self.rest[s];
            let (k, c) = if stretch > 0.0 {
                (self.k_stretch[s], self.c_stretch[s])
            } else {
                (self.k_compress[s], self.c_compress[s])
            };
            let rel = (v[b] - v[a]).dot(&dir);
            let f = dir * (k * stretch + c * rel);
            self.forces[a] += f;
            self.forces[b] -= f;
        }
        let decay = (1.0 - p.air_damping * dt).max(0.0);
        for idx in 0..x.len() {
            if state.pinned[idx] {
                continue;
            }
            let vel = (state.velocities[idx] + self.forces[idx] * (dt / m)) * decay;
            state.velocities[idx] = vel;
            state.positions[idx] += vel * dt;
        }
        if let Some((indices, targets)) = pin_targets {
            for (&idx, t) in indices.iter().zip(targets) {
                state.velocities[idx] = (t - state.positions[idx]) / dt;
                state.positions[idx] = *t;
            }
        }
        collide(state, colliders, p, dt);
        self.substeps += 1;
        if let Some(particle) = state
            .positions
            .iter()
            .zip(&state.velocities)
            .position(|(x, v)| !(x.iter().all(|c| c.is_finite()) && v.iter().all(|c| c.is_finite())))
        {
            return Err(ClothError::NonFinite { particle, substep: self.substeps });
        }
        state.time += dt;
        Ok(())
    }
}

fn collide(state: &mut ClothState, colliders: &[MovingCapsule], p: &ClothParams, _dt: f64) {
    if colliders.is_empty() {
        return;
    }
    for idx in 0..state.positions.len() {
        if state.pinned[idx] {
            continue;
        }
        let mut x = state.positions[idx];
        let mut vel = state.velocities[idx];
        for _ in 0..COLLISION_ITERATIONS {
            let mut moved = false;
            for c in colliders {
                if x.x < c.lo.x || x.y < c.lo.y || x.z < c.lo.z || x.x > c.hi.x || x.y > c.hi.y || x.z > c.hi.z {
                    continue;
                }
                let t = c.cap.closest_param(&x);
                let axis_pt = c.cap.a + (c.cap.b - c.cap.a) * t;
                let off = x - axis_pt;
                let dist = off.norm();
                let target = c.cap.radius + p.collision_offset;
                if dist >= target {
                    continue;
                }
                let n = if dist > 1e-12 {
                    off / dist
                } else {
                    // Degenerate: on the axis; push along any perpendicular.
                    let ax = c.cap.b - c.cap.a;
                    let perp = ax.cross(&Vec3::x());
                    if perp.norm() > 1e-12 { perp.normalize() } else { Vec3::y() }
                };
                x = axis_pt + n * target;
                let surf_v = c.va + (c.vb - c.va) * t;
                let rel = vel - surf_v;
                let vn = rel.dot(&n);
                if vn < 0.0 {
                    let tangential = rel - n * vn;
                    let tn = tangential.norm();
                    let scale = if tn > 0.0 { (1.0 - p.friction * (-vn) / tn).max(0.0) } else { 0.0 };
                    vel = surf_v + tangential * scale;
                }
                moved = true;
            }
            if !moved {
                break;
            }
        }
        state.positions[idx] = x;
        state.velocities[idx] = vel;
    }
}

fn moving(prev: &Capsule, next: &Capsule, dt: f64, margin: f64) -> MovingCapsule {
    let (lo, hi) = next.aabb(margin);
    MovingCapsule { cap: *next, va: (next.a - prev.a) / dt, vb: (next.b - prev.b) / dt, lo, hi }
}

fn lerp_capsule(a: &Capsule, b: &Capsule, u: f64) -> Capsule {
    Capsule { a: a.a + (b.a - a.a) * u, b: a.b + (b.b - a.b) * u, radius: a.radius + (b.radius - a.radius) * u }
}

/// Advances `state` by `dt` against static colliders; pinned particles stay put.
pub fn step(
    state: &ClothState,
    net: &SpringNetwork,
    params: &ClothParams,
    colliders: &[Capsule],
    dt: f64,
) -> Result<ClothState, ClothError> {
    if !(dt > 0.0 && dt <= 1.0 / 60.0 + 1e-15) {
        return Err(ClothError::BadStep(dt));
    }
    check_sizes(state, net)?;
    let mut solver = Solver::new(net, params)?;
    let n = (dt / MAX_SUBSTEP).ceil() as usize;
    let h = dt / n as f64;
    let margin = params.collision_offset + 1e-6;
    let cols: Vec<MovingCapsule> = colliders
        .iter()
        .map(|c| {
            let (lo, hi) = c.aabb(margin);
            MovingCapsule { cap: *c, va: Vec3::zeros(), vb: Vec3::zeros(), lo, hi }
        })
        .collect();
    let mut out = state.clone();
    for _ in 0..n {
        solver.substep(&mut out, &cols, None, h)?;
    }
    Ok(out)
}

fn check_sizes(state: &ClothState, net: &SpringNetwork) -> Result<(), ClothError> {
    for len in [state.positions.len(), state.velocities.len(), state.pinned.len()] {
        if len != net.particles {
            return Err(ClothError::SizeMismatch { state: len, expected: net.particles });
        }
    }
    Ok(())
}

/// Body state at one motion frame: collider capsules and the prescribed
/// positions of the pinned particles (in `pinned` order).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BodyFrame {
    pub capsules: Vec<Capsule>,
    pub pin_positions: Vec<Vec3>,
}

/// Simulates a garment over a body animation.
///
/// `mesh` holds the starting particle positions (already posed to frame 0).
/// The cloth first settles for [`WARM_START`] seconds against frame 0, then
/// colliders and pin targets are interpolated linearly across substeps. One
/// state is returned per body frame.
pub fn simulate_sequence(
    mesh: &TriMesh,
    pinned: &[usize],
    params: &ClothParams,
    frames: &[BodyFrame],
    fps: f64,
) -> Result<Vec<ClothState>, ClothError> {
    let net = build_spring_network(mesh)?;
    simulate_network(mesh.vertices().to_vec(), &net, pinned, params, frames, fps)
}

pub(crate) fn simulate_network(
    start: Vec<Vec3>,
    net: &SpringNetwork,
    pinned: &[usize],
    params: &ClothParams,
    frames: &[BodyFrame],
    fps: f64,
) -> Result<Vec<ClothState>, ClothError> {
    if frames.is_empty() {
        return Err(ClothError::NoFrames);
    }
    if !(fps.is_finite() && fps > 0.0) {
        return Err(ClothError::BadParam { name: "fps", value: fps });
    }
    for (frame, f) in frames.iter().enumerate() {
        if f.pin_positions.len() != pinned.len() {
            return Err(ClothError::PinMismatch { frame, expected: pinned.len(), found: f.pin_positions.len() });
        }
    }
    let mut flags = vec![false; start.len()];
    for &i in pinned {
        flags[i] = true;
    }
    let mut state = ClothState::at_rest(start, flags);
    for (&i, t) in pinned.iter().zip(&frames[0].pin_positions) {
        state.positions[i] = *t;
    }
    check_sizes(&state, net)?;
    let mut solver = Solver::new(net, params)?;
    let frame_dt = 1.0 / fps;
    let n = (frame_dt / MAX_SUBSTEP).ceil() as usize;
    let h = frame_dt / n as f64;
    let margin = params.collision_offset + 1e-6;
    let wrap = |frame: usize, e: ClothError| ClothError::Frame { frame, source: Box::new(e) };

    let still: Vec<MovingCapsule> = frames[0].capsules.iter().map(|c| moving(c, c, h, margin)).collect();
    let settle = (WARM_START / h).round() as usize;
    for _ in 0..settle {
        solver
            .substep(&mut state, &still, Some((pinned, &frames[0].pin_positions)), h)
            .map_err(|e| wrap(0, e))?;
    }
    state.time = 0.0;
    let mut out = Vec::with_capacity(frames.len());
    out.push(state.clone());
    let mut pins = vec![Vec3::zeros(); pinned.len()];
    for fi in 1..frames.len() {
        let (f0, f1) = (&frames[fi - 1], &frames[fi]);
        let mut prev: Vec<Capsule> = f0.capsules.clone();
        for s in 1..=n {
            let u = s as f64 / n as f64;
            let caps: Vec<MovingCapsule> = f0
                .capsules
                .iter()
                .zip(&f1.capsules)
                .zip(prev.iter_mut())
                .map(|((a, b), pr)| {
                    let c = lerp_capsule(a, b, u);
                    let mc = moving(pr, &c, h, margin);
                    *pr = c;
                    mc
                })
                .collect();
            for ((p, a), b) in pins.iter_mut().zip(&f0.pin_positions).zip(&f1.pin_positions) {
                *p = a + (b - a) * u;
            }
            solver.substep(&mut state, &caps, Some((pinned, &pins)), h).map_err(|e| wrap(fi, e))?;
        }
        state.time = fi as f64 * frame_dt;
        out.push(state.clone());
    }
    Ok(out)
}

//! Hexagonal cell layout, user drops and vehicle mobility.
//!
//! Sites sit on a hexagonal lattice addressed by axial coordinates `(q, r)`;
//! site `(q, r)` is at `isd * (q + r/2, r * sqrt(3)/2)`. Each cell's coverage
//! region is the Voronoi hexagon of its site, i.e. a hexagon with inradius
//! `isd / 2`. The innermost rings form the MBSFN area and the outer rings act
//! as interferers.

use std::collections::BTreeSet;
use std::ops::{Add, Mul, Sub};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::rng::stream_seed;

const SQRT3: f64 = 1.732_050_807_568_877_2;

/// A position or velocity in the plane, meters or meters per second.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn dot(self, other: Vec2) -> f64 {
        self.x * other.x + self.y * other.y
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, k: f64) -> Vec2 {
        Vec2::new(self.x * k, self.y * k)
    }
}

/// Axial hex coordinate of a site.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Axial {
    pub q: i32,
    pub r: i32,
}

impl Axial {
    pub const fn new(q: i32, r: i32) -> Self {
        Self { q, r }
    }

    /// Hex (ring) distance from the origin.
    pub fn ring(self) -> u32 {
        let s = -self.q - self.r;
        self.q.unsigned_abs().max(self.r.unsigned_abs()).max(s.unsigned_abs())
    }

    /// 60 degree counter-clockwise rotation about the origin.
    fn rotated(self) -> Axial {
        Axial::new(-self.r, self.q + self.r)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub id: usize,
    pub axial: Axial,
    pub position: Vec2,
}

/// Hexagonal multi-ring layout. Cell 0 is the center; ids grow ring by ring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellLayout {
    pub cells: Vec<Cell>,
    pub mbsfn_set: BTreeSet<usize>,
    pub inter_site_distance: f64,
    /// Total number of rings around the center cell.
    pub rings: u32,
}

impl CellLayout {
    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn is_mbsfn(&self, cell: usize) -> bool {
        self.mbsfn_set.contains(&cell)
    }

    /// Boolean mask over cell ids, handy for per-cell loops.
    pub fn mbsfn_mask(&self) -> Vec<bool> {
        (0..self.cells.len()).map(|c| self.is_mbsfn(c)).collect()
    }

    /// Axial coordinate of the site whose hexagon contains `p` (on the
    /// unbounded lattice).
    pub fn nearest_axial(&self, p: Vec2) -> Axial {
        let isd = self.inter_site_distance;
        let rf = p.y / (isd * SQRT3 / 2.0);
        let qf = p.x / isd - rf / 2.0;
        cube_round(qf, rf)
    }

    /// Id of the cell whose hexagon contains `p`, if `p` is inside the layout.
    pub fn cell_at(&self, p: Vec2) -> Option<usize> {
        let a = self.nearest_axial(p);
        if a.ring() > self.rings {
            return None;
        }
        self.cells.iter().position(|c| c.axial == a)
    }

    pub fn contains(&self, p: Vec2) -> bool {
        self.nearest_axial(p).ring() <= self.rings
    }

    /// True if `p` lies in the hexagon of `cell` (boundary inclusive).
    pub fn in_hexagon(&self, cell: usize, p: Vec2) -> bool {
        let d = p - self.cells[cell].position;
        let half = self.inter_site_distance / 2.0 * (1.0 + 1e-12);
        [0.0f64, 60.0, 120.0].iter().all(|deg| {
            let (s, c) = deg.to_radians().sin_cos();
            d.dot(Vec2::new(c, s)).abs() <= half
        })
    }

    /// Lattice translations under which the layout tiles the plane.
    fn tiling_shifts(&self) -> [Vec2; 6] {
        let r = self.rings as i32;
        let mut a = Axial::new(2 * r + 1, -r);
        let mut out = [Vec2::default(); 6];
        for slot in out.iter_mut() {
            *slot = self.axial_to_point(a);
            a = a.rotated();
        }
        out
    }

    fn axial_to_point(&self, a: Axial) -> Vec2 {
        let isd = self.inter_site_distance;
        Vec2::new(
            isd * (a.q as f64 + a.r as f64 / 2.0),
            isd * a.r as f64 * SQRT3 / 2.0,
        )
    }

    /// Maps a point outside the layout back inside by a tiling translation.
    pub fn wrap(&self, mut p: Vec2) -> Vec2 {
        let shifts = self.tiling_shifts();
        // A handful of hops covers any displacement smaller than the layout.
        for _ in 0..8 {
            if self.contains(p) {
                return p;
            }
            let best = shifts
                .iter()
                .map(|s| p - *s)
                .min_by(|a, b| a.norm().total_cmp(&b.norm()))
                .expect("six shifts");
            p = best;
        }
        p
    }
}

fn cube_round(qf: f64, rf: f64) -> Axial {
    let sf = -qf - rf;
    let mut q = qf.round();
    let mut r = rf.round();
    let s = sf.round();
    let dq = (q - qf).abs();
    let dr = (r - rf).abs();
    let ds = (s - sf).abs();
    if dq > dr && dq > ds {
        q = -r - s;
    } else if dr > ds {
        r = -q - s;
    }
    Axial::new(q as i32, r as i32)
}

/// Builds a hexagonal grid centered at the origin.
///
/// Cells within `n_mbsfn_rings` rings of the center form the MBSFN area, the
/// next `n_interference_rings` rings are interferers.
pub fn build_layout(
    n_mbsfn_rings: u32,
    n_interference_rings: u32,
    inter_site_distance: f64,
) -> Result<CellLayout> {
    if !(inter_site_distance > 0.0) || !inter_site_distance.is_finite() {
        return Err(SimError::Config(format!(
            "inter-site distance must be positive, got {inter_site_distance}"
        )));
    }
    if n_interference_rings < 1 {
        return Err(SimError::Config(
            "at least one interference ring is required".into(),
        ));
    }
    let rings = n_mbsfn_rings + n_interference_rings;
    let mut layout = CellLayout {
        cells: Vec::new(),
        mbsfn_set: BTreeSet::new(),
        inter_site_distance,
        rings,
    };
    let mut axials = vec![Axial::new(0, 0)];
    for ring in 1..=rings as i32 {
        // Walk the ring starting at (ring, 0) in six straight edges.
        let dirs = [(-1, 1), (-1, 0), (0, -1), (1, -1), (1, 0), (0, 1)];
        let mut a = Axial::new(ring, 0);
        for (dq, dr) in dirs {
            for _ in 0..ring {
                axials.push(a);
                a = Axial::new(a.q + dq, a.r + dr);
            }
        }
    }
    for (id, axial) in axials.into_iter().enumerate() {
        let position = layout.axial_to_point(axial);
        if axial.ring() <= n_mbsfn_rings {
            layout.mbsfn_set.insert(id);
        }
        layout.cells.push(Cell { id, axial, position });
    }
    Ok(layout)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UserKind {
    Car,
    Ordinary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct User {
    pub id: usize,
    pub kind: UserKind,
    pub serving_cell: usize,
    /// Cell the user was dropped into. Fixed for the whole run.
    pub home_cell: usize,
    pub position: Vec2,
    pub velocity: Vec2,
}

impl User {
    pub fn is_car(&self) -> bool {
        self.kind == UserKind::Car
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserPopulation {
    pub users: Vec<User>,
}

impl UserPopulation {
    pub fn len(&self) -> usize {
        self.users.len()
    }

    pub fn is_empty(&self) -> bool {
        self.users.is_empty()
    }

    pub fn cars(&self) -> impl Iterator<Item = &User> {
        self.users.iter().filter(|u| u.is_car())
    }
}

/// Drops `n_users_per_cell` users uniformly inside every hexagon, the first
/// `n_cars_per_cell` of which are cars with a uniformly random heading.
pub fn drop_users(
    layout: &CellLayout,
    n_users_per_cell: usize,
    n_cars_per_cell: usize,
    car_speed: f64,
    seed: u64,
) -> Result<UserPopulation> {
    if n_cars_per_cell > n_users_per_cell {
        return Err(SimError::Config(format!(
            "{n_cars_per_cell} cars per cell exceed {n_users_per_cell} users per cell"
        )));
    }
    if !(car_speed >= 0.0) {
        return Err(SimError::Config(format!("car speed must be >= 0, got {car_speed}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, &[0x70_0d, 0, 0]));
    let isd = layout.inter_site_distance;
    let half_w = isd / 2.0;
    let half_h = isd / SQRT3;
    let mut users = Vec::with_capacity(layout.n_cells() * n_users_per_cell);
    for cell in &layout.cells {
        for k in 0..n_users_per_cell {
            let position = loop {
                let p = cell.position
                    + Vec2::new(
                        rng.gen_range(-half_w..=half_w),
                        rng.gen_range(-half_h..=half_h),
                    );
                if layout.in_hexagon(cell.id, p) {
                    break p;
                }
            };
            let (kind, velocity) = if k < n_cars_per_cell {
                let heading: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
                let (s, c) = heading.sin_cos();
                (UserKind::Car, Vec2::new(c, s) * car_speed)
            } else {
                (UserKind::Ordinary, Vec2::default())
            };
            users.push(User {
                id: users.len(),
                kind,
                serving_cell: cell.id,
                home_cell: cell.id,
                position,
                velocity,
            });
        }
    }
    Ok(UserPopulation { users })
}

/// Distance-only macroscopic gain ranking: the serving cell is the site with
/// the strongest pathloss gain, i.e. the nearest one.
pub fn strongest_cell(layout: &CellLayout, p: Vec2) -> usize {
    layout
        .cells
        .iter()
        .min_by(|a, b| (p - a.position).norm().total_cmp(&(p - b.position).norm()))
        .map(|c| c.id)
        .expect("layout has cells")
}

/// Moves every user by `velocity * dt`, wrapping positions that leave the
/// layout and re-selecting the serving cell of moved users.
pub fn advance_mobility(layout: &CellLayout, pop: &UserPopulation, dt: f64) -> UserPopulation {
    let mut next = pop.clone();
    advance_mobility_in_place(layout, &mut next, dt);
    next
}

pub fn advance_mobility_in_place(layout: &CellLayout, pop: &mut UserPopulation, dt: f64) {
    if dt <= 0.0 {
        return;
    }
    for u in pop.users.iter_mut() {
        if u.velocity == Vec2::default() {
            continue;
        }
        let moved = u.position + u.velocity * dt;
        u.position = layout.wrap(moved);
        u.serving_cell = strongest_cell(layout, u.position);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ring_counts() {
        let l = build_layout(1, 1, 500.0).unwrap();
        assert_eq!(l.n_cells(), 19);
        assert_eq!(l.mbsfn_set.len(), 7);
        let l = build_layout(0, 1, 500.0).unwrap();
        assert_eq!((l.n_cells(), l.mbsfn_set.len()), (7, 1));
        let l = build_layout(2, 1, 500.0).unwrap();
        assert_eq!((l.n_cells(), l.mbsfn_set.len()), (37, 19));
    }

    #[test]
    fn rejects_bad_geometry() {
        assert!(matches!(build_layout(1, 1, 0.0), Err(SimError::Config(_))));
        assert!(matches!(build_layout(1, 1, -3.0), Err(SimError::Config(_))));
        assert!(matches!(build_layout(1, 0, 500.0), Err(SimError::Config(_))));
    }

    #[test]
    fn sites_are_unique_and_neighbours_at_isd() {
        let l = build_layout(1, 1, 500.0).unwrap();
        let ax: BTreeSet<_> = l.cells.iter().map(|c| c.axial).collect();
        assert_eq!(ax.len(), 19);
        for c in &l.cells[1..7] {
            assert!((c.position.norm() - 500.0).abs() < 1e-9);
        }
    }

    #[test]
    fn interference_cells_touch_mbsfn_area() {
        let l = build_layout(1, 1, 500.0).unwrap();
        for c in l.cells.iter().filter(|c| !l.is_mbsfn(c.id)) {
            let touches = l
                .mbsfn_set
                .iter()
                .any(|&m| ((l.cells[m].position - c.position).norm() - 500.0).abs() < 1e-6);
            assert!(touches, "cell {} not adjacent to the MBSFN area", c.id);
        }
    }

    #[test]
    fn drop_counts_and_membership() {
        let l = build_layout(1, 1, 500.0).unwrap();
        let pop = drop_users(&l, 6, 3, 27.78, 1).unwrap();
        assert_eq!(pop.len(), 114);
        assert_eq!(pop.cars().count(), 57);
        assert_eq!(pop.cars().filter(|u| l.is_mbsfn(u.serving_cell)).count(), 21);
        for u in &pop.users {
            assert!(l.in_hexagon(u.serving_cell, u.position));
            assert_eq!(l.cell_at(u.position), Some(u.serving_cell));
            match u.kind {
                UserKind::Car => assert!((u.velocity.norm() - 27.78).abs() < 1e-9),
                UserKind::Ordinary => assert_eq!(u.velocity, Vec2::default()),
            }
        }
    }

    #[test]
    fn drop_without_cars_and_bad_counts() {
        let l = build_layout(1, 1, 500.0).unwrap();
        let pop = drop_users(&l, 1, 0, 0.0, 9).unwrap();
        assert_eq!(pop.len(), 19);
        assert_eq!(pop.cars().count(), 0);
        assert!(matches!(drop_users(&l, 2, 3, 1.0, 0), Err(SimError::Config(_))));
    }

    #[test]
    fn drop_is_deterministic() {
        let l = build_layout(1, 1, 500.0).unwrap();
        let a = drop_users(&l, 6, 3, 27.78, 42).unwrap();
        let b = drop_users(&l, 6, 3, 27.78, 42).unwrap();
        assert_eq!(a, b);
        let c = drop_users(&l, 6, 3, 27.78, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn kinematics_and_identity() {
        let l = build_layout(1, 1, 500.0).unwrap();
        let pop = UserPopulation {
            users: vec![User {
                id: 0,
                kind: UserKind::Car,
                serving_cell: 0,
                home_cell: 0,
                position: Vec2::default(),
                velocity: Vec2::new(27.78, 0.0),
            }],
        };
        let moved = advance_mobility(&l, &pop, 1.0);
        assert!((moved.users[0].position.x - 27.78).abs() < 1e-12);
        assert_eq!(moved.users[0].position.y, 0.0);
        assert_eq!(advance_mobility(&l, &pop, 0.0), pop);
    }

    #[test]
    fn wrap_brings_points_back() {
        let l = build_layout(1, 1, 500.0).unwrap();
        for k in 0..360 {
            let (s, c) = (k as f64).to_radians().sin_cos();
            let p = Vec2::new(c, s) * 1400.0;
            let w = l.wrap(p);
            assert!(l.contains(w), "{p:?} wrapped to {w:?}");
        }
    }
}

//! Planar zonotopes `{c + G·β : ‖β‖∞ ≤ 1}`.
//!
//! Collision checks go through the half-space form: each generator `g`
//! contributes the normal `(−g_y, g_x)/‖g‖` and its negation, and the offsets
//! are `n·c + Σ_j |n·g_j|`. Two zonotopes are disjoint iff the center of one
//! lies outside the other re-centered with both generator sets concatenated.

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec2 = Vector2<f64>;

/// Generators with norm at or below this are treated as absent.
pub const TOL_GEN: f64 = 1e-9;
/// Slack on `max(A·p − b) ≤ 0`; boundary points count as contained.
pub const TOL_CONTAIN: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Zonotope2 {
    center: Vec2,
    generators: Vec<Vec2>,
}

impl Zonotope2 {
    pub fn new(center: Vec2, generators: Vec<Vec2>) -> Result<Self> {
        if generators.is_empty() {
            return Err(Error::InvalidZonotope("needs at least one generator".into()));
        }
        let finite = center.iter().all(|v| v.is_finite())
            && generators.iter().flat_map(|g| g.iter()).all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidZonotope("non-finite entry".into()));
        }
        Ok(Self { center, generators })
    }

    /// Axis-aligned box with half-widths `hx`, `hy`.
    pub fn aabb(center: Vec2, hx: f64, hy: f64) -> Result<Self> {
        Self::new(center, vec![Vec2::new(hx, 0.0), Vec2::new(0.0, hy)])
    }

    pub fn center(&self) -> Vec2 {
        self.center
    }

    pub fn generators(&self) -> &[Vec2] {
        &self.generators
    }

    pub fn n_generators(&self) -> usize {
        self.generators.len()
    }

    pub fn translated(&self, offset: Vec2) -> Self {
        Self {
            center: self.center + offset,
            generators: self.generators.clone(),
        }
    }

    /// `c + G·β`; `beta` must have one entry per generator.
    pub fn point_at(&self, beta: &[f64]) -> Vec2 {
        assert_eq!(beta.len(), self.generators.len());
        self.generators
            .iter()
            .zip(beta)
            .fold(self.center, |acc, (g, b)| acc + g * *b)
    }

    /// Support value `max_{p ∈ Z} d·p`.
    pub fn support(&self, direction: Vec2) -> f64 {
        direction.dot(&self.center) + self.generators.iter().map(|g| direction.dot(g).abs()).sum::<f64>()
    }

    /// Copy without generators shorter than [`TOL_GEN`]. `None` when nothing is left.
    pub fn pruned(&self) -> Option<Self> {
        let generators: Vec<Vec2> = self
            .generators
            .iter()
            .copied()
            .filter(|g| g.norm() > TOL_GEN)
            .collect();
        (!generators.is_empty()).then_some(Self {
            center: self.center,
            generators,
        })
    }

    /// Boundary vertices in counter-clockwise order.
    ///
    /// Generators are flipped into the upper half-plane and sorted by angle;
    /// walking them forward then backward from the lowest vertex traces the
    /// boundary. Degenerate generators are skipped, so a point zonotope yields
    /// a single vertex.
    pub fn vertices(&self) -> Vec<Vec2> {
        let mut gens: Vec<Vec2> = self
            .generators
            .iter()
            .filter(|g| g.norm() > TOL_GEN)
            .map(|g| if g.y < 0.0 || (g.y == 0.0 && g.x < 0.0) { -g } else { *g })
            .collect();
        if gens.is_empty() {
            return vec![self.center];
        }
        gens.sort_by(|a, b| a.y.atan2(a.x).total_cmp(&b.y.atan2(b.x)));
        let sum: Vec2 = gens.iter().sum();
        let mut v = self.center - sum;
        let mut out = Vec::with_capacity(2 * gens.len());
        for g in &gens {
            out.push(v);
            v += 2.0 * g;
        }
        for g in &gens {
            out.push(v);
            v -= 2.0 * g;
        }
        out
    }
}

/// `Z1 ⊕ Z2`: centers add, generator lists concatenate.
pub fn minkowski_sum(z1: &Zonotope2, z2: &Zonotope2) -> Zonotope2 {
    let mut generators = Vec::with_capacity(z1.n_generators() + z2.n_generators());
    generators.extend_from_slice(&z1.generators);
    generators.extend_from_slice(&z2.generators);
    Zonotope2 {
        center: z1.center + z2.center,
        generators,
    }
}

/// `{p : A·p ≤ b}` with unit-norm rows in antipodal pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct HalfspacePoly {
    normals: Vec<Vec2>,
    offsets: Vec<f64>,
}

impl HalfspacePoly {
    pub fn normals(&self) -> &[Vec2] {
        &self.normals
    }

    pub fn offsets(&self) -> &[f64] {
        &self.offsets
    }

    pub fn n_rows(&self) -> usize {
        self.normals.len()
    }

    /// `max(A·p − b)`: non-positive inside, positive outside.
    pub fn max_violation(&self, p: Vec2) -> f64 {
        self.normals
            .iter()
            .zip(&self.offsets)
            .map(|(n, b)| n.dot(&p) - b)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn contains(&self, p: Vec2) -> bool {
        self.max_violation(p) <= TOL_CONTAIN
    }
}

/// Half-space form of `z`. Rows follow generator order, positive normals
/// first and their negations after.
pub fn to_halfspace(z: &Zonotope2) -> Result<HalfspacePoly> {
    let n = z.n_generators();
    let mut normals = Vec::with_capacity(2 * n);
    for (index, g) in z.generators.iter().enumerate() {
        let norm = g.norm();
        if norm <= TOL_GEN {
            return Err(Error::DegenerateGenerator { index, norm });
        }
        normals.push(Vec2::new(-g.y, g.x) / norm);
    }
    let mut offsets = Vec::with_capacity(2 * n);
    for nrm in &normals {
        let span: f64 = z.generators.iter().map(|g| nrm.dot(g).abs()).sum();
        offsets.push(nrm.dot(&z.center) + span);
    }
    for i in 0..n {
        let span = offsets[i] - normals[i].dot(&z.center);
        normals.push(-normals[i]);
        offsets.push(-normals[i].dot(&z.center) + span);
    }
    Ok(HalfspacePoly { normals, offsets })
}

/// Signed containment measure `max(A·p − b)` after pruning degenerate
/// generators. A zonotope with no usable generator is its center, and the
/// measure becomes the distance to it.
pub fn containment_margin(z: &Zonotope2, p: Vec2) -> f64 {
    match z.pruned() {
        Some(zp) => to_halfspace(&zp)
            .expect("pruned generators are non-degenerate")
            .max_violation(p),
        None => (p - z.center).norm(),
    }
}

pub fn contains_point(z: &Zonotope2, p: Vec2) -> bool {
    containment_margin(z, p) <= TOL_CONTAIN
}

/// Zonotope collision test: `Z1 ∩ Z2 ≠ ∅ ⟺ c1 ∈ Z(c2, [G1 G2])`.
pub fn intersects(z1: &Zonotope2, z2: &Zonotope2) -> bool {
    let mut generators = z1.generators.clone();
    generators.extend_from_slice(&z2.generators);
    let combined = Zonotope2 {
        center: z2.center,
        generators,
    };
    contains_point(&combined, z1.center)
}

pub mod soft;

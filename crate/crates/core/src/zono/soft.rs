//! Differentiable half-space residuals for zonotopes whose center and
//! generators come out of a network.
//!
//! Generator lengths use `sqrt(‖g‖² + NORM_GUARD)` so that collapsed
//! generators keep a finite normal and a finite gradient. Row layout matches
//! [`super::to_halfspace`]: positive rows in generator order, then negations.

use super::Vec2;

pub const NORM_GUARD: f64 = 1e-12;

/// Gradient buffer mirroring a zonotope's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ZonoGrad {
    pub center: Vec2,
    pub generators: Vec<Vec2>,
}

impl ZonoGrad {
    pub fn zeros(n_generators: usize) -> Self {
        Self {
            center: Vec2::zeros(),
            generators: vec![Vec2::zeros(); n_generators],
        }
    }
}

pub fn guarded_norm(g: &Vec2) -> f64 {
    (g.norm_squared() + NORM_GUARD).sqrt()
}

/// `d‖g‖_guarded / dg`
pub fn guarded_norm_grad(g: &Vec2) -> Vec2 {
    g / guarded_norm(g)
}

fn sgn(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

#[derive(Debug, Clone)]
pub struct SoftHalfspace<'a> {
    center: Vec2,
    generators: &'a [Vec2],
    normals: Vec<Vec2>,
    lengths: Vec<f64>,
    spans: Vec<f64>,
}

impl<'a> SoftHalfspace<'a> {
    pub fn new(center: Vec2, generators: &'a [Vec2]) -> Self {
        let lengths: Vec<f64> = generators.iter().map(guarded_norm).collect();
        let normals: Vec<Vec2> = generators
            .iter()
            .zip(&lengths)
            .map(|(g, l)| Vec2::new(-g.y, g.x) / *l)
            .collect();
        let spans = normals
            .iter()
            .map(|n| generators.iter().map(|g| n.dot(g).abs()).sum())
            .collect();
        Self {
            center,
            generators,
            normals,
            lengths,
            spans,
        }
    }

    pub fn n_rows(&self) -> usize {
        2 * self.generators.len()
    }

    fn split(&self, row: usize) -> (usize, f64) {
        let n = self.generators.len();
        if row < n {
            (row, 1.0)
        } else {
            (row - n, -1.0)
        }
    }

    /// `A[row]·p − b[row]`
    pub fn residual(&self, row: usize, p: Vec2) -> f64 {
        let (j, s) = self.split(row);
        s * self.normals[j].dot(&(p - self.center)) - self.spans[j]
    }

    pub fn residuals(&self, p: Vec2) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_rows()).map(move |r| self.residual(r, p))
    }

    /// Active row and value of `max(A·p − b)`; the first row wins ties.
    pub fn max_residual(&self, p: Vec2) -> (usize, f64) {
        let mut best = (0, f64::NEG_INFINITY);
        for (r, v) in self.residuals(p).enumerate() {
            if v > best.1 {
                best = (r, v);
            }
        }
        best
    }

    /// Accumulates `weight · ∂residual(row, p)` into the point and zonotope
    /// gradients.
    pub fn backprop_row(
        &self,
        row: usize,
        p: Vec2,
        weight: f64,
        d_point: &mut Vec2,
        grad: &mut ZonoGrad,
    ) {
        let (j, s) = self.split(row);
        let n = self.normals[j];
        *d_point += n * (weight * s);
        grad.center -= n * (weight * s);

        // ∂r/∂n with the span term's subgradient
        let mut w_n = (p - self.center) * s;
        for (k, g) in self.generators.iter().enumerate() {
            let sg = sgn(n.dot(g));
            if sg != 0.0 {
                w_n -= g * sg;
                grad.generators[k] -= n * (weight * sg);
            }
        }
        // n = R·g / L with R the +90° rotation
        let g = self.generators[j];
        let l = self.lengths[j];
        let rt_w = Vec2::new(w_n.y, -w_n.x);
        let rg_w = Vec2::new(-g.y, g.x).dot(&w_n);
        grad.generators[j] += (rt_w / l - g * (rg_w / (l * l * l))) * weight;
    }
}

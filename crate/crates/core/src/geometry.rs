//! Convex regions described by half-spaces.
//!
//! Margins are signed Euclidean distances to face planes (normals are
//! normalised on construction), so `inside_margin` is positive strictly inside
//! the region and `exterior_margin` is positive strictly outside it.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const FEAS_TOL: f64 = 1e-9;

/// `normal . x <= offset`, with a unit normal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HalfSpace {
    pub normal: Vector3<f64>,
    pub offset: f64,
}

impl HalfSpace {
    pub fn new(normal: Vector3<f64>, offset: f64) -> Result<Self> {
        let n = normal.norm();
        if !(n > 0.0) || !n.is_finite() || !offset.is_finite() {
            return Err(Error::invalid("half-space normal must be finite and non-zero"));
        }
        Ok(HalfSpace {
            normal: normal / n,
            offset: offset / n,
        })
    }

    /// Signed distance to the face plane, positive on the inner side.
    #[inline]
    pub fn slack(&self, p: &Vector3<f64>) -> f64 {
        self.offset - self.normal.dot(p)
    }
}

/// Intersection of finitely many half-spaces.
#[derive(Debug, Clone, PartialEq)]
pub struct Polytope {
    faces: Vec<HalfSpace>,
}

impl Polytope {
    pub fn new(faces: Vec<HalfSpace>) -> Result<Self> {
        if faces.is_empty() {
            return Err(Error::invalid("polytope needs at least one face"));
        }
        Ok(Polytope { faces })
    }

    pub fn faces(&self) -> &[HalfSpace] {
        &self.faces
    }

    /// Minimum face slack and the face attaining it.
    pub fn inside_margin(&self, p: &Vector3<f64>) -> (f64, usize) {
        let mut best = (f64::INFINITY, 0);
        for (i, f) in self.faces.iter().enumerate() {
            let s = f.slack(p);
            if s < best.0 {
                best = (s, i);
            }
        }
        best
    }

    /// Maximum face violation and the face attaining it.
    pub fn exterior_margin(&self, p: &Vector3<f64>) -> (f64, usize) {
        let mut best = (f64::NEG_INFINITY, 0);
        for (i, f) in self.faces.iter().enumerate() {
            let v = -f.slack(p);
            if v > best.0 {
                best = (v, i);
            }
        }
        best
    }

    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        self.inside_margin(p).0 >= -FEAS_TOL
    }

    /// Vertices by brute-force enumeration of face triples.
    pub fn vertices(&self) -> Vec<Vector3<f64>> {
        let n = self.faces.len();
        let mut out: Vec<Vector3<f64>> = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                for k in (j + 1)..n {
                    let (a, b, c) = (&self.faces[i], &self.faces[j], &self.faces[k]);
                    let m = Matrix3::from_rows(&[
                        a.normal.transpose(),
                        b.normal.transpose(),
                        c.normal.transpose(),
                    ]);
                    if m.determinant().abs() < 1e-12 {
                        continue;
                    }
                    let Some(inv) = m.try_inverse() else { continue };
                    let v = inv * Vector3::new(a.offset, b.offset, c.offset);
                    let scale = 1.0 + v.norm();
                    if self.faces.iter().all(|f| f.slack(&v) >= -FEAS_TOL * scale)
                        && !out.iter().any(|w| (w - v).norm() < 1e-9 * scale)
                    {
                        out.push(v);
                    }
                }
            }
        }
        out
    }

    /// True when the recession cone `{d : n_f . d <= 0 for all f}` is `{0}`.
    pub fn is_bounded(&self) -> bool {
        let normals: Vec<Vector3<f64>> = self.faces.iter().map(|f| f.normal).collect();
        let mut candidates = Vec::new();
        for i in 0..normals.len() {
            for j in (i + 1)..normals.len() {
                let d = normals[i].cross(&normals[j]);
                if d.norm() > 1e-12 {
                    candidates.push(d.normalize());
                    candidates.push(-d.normalize());
                }
            }
        }
        if candidates.is_empty() {
            // All normals parallel: any perpendicular direction is a recession direction.
            return false;
        }
        !candidates
            .iter()
            .any(|d| normals.iter().all(|n| n.dot(d) <= 1e-12))
    }

    /// Closed intersection with another polytope is non-empty (touching counts).
    pub fn intersects(&self, other: &Polytope) -> bool {
        let mut faces = self.faces.clone();
        faces.extend_from_slice(&other.faces);
        !Polytope { faces }.vertices().is_empty()
    }

    /// Intersection with another polytope has non-empty interior.
    pub fn overlaps(&self, other: &Polytope) -> bool {
        let mut faces = self.faces.clone();
        faces.extend_from_slice(&other.faces);
        let joint = Polytope { faces };
        let verts = joint.vertices();
        if verts.is_empty() {
            return false;
        }
        let centroid = verts.iter().sum::<Vector3<f64>>() / verts.len() as f64;
        joint.inside_margin(&centroid).0 > 1e-9
    }
}

/// Serialised face of a polyhedron: `normal . x <= offset`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Face {
    pub normal: [f64; 3],
    pub offset: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Shape {
    Box { min: [f64; 3], max: [f64; 3] },
    Polyhedron { faces: Vec<Face> },
}

/// A named convex region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Region {
    pub name: String,
    pub shape: Shape,
}

impl Region {
    pub fn cuboid(name: impl Into<String>, min: [f64; 3], max: [f64; 3]) -> Self {
        Region {
            name: name.into(),
            shape: Shape::Box { min, max },
        }
    }

    /// Axis-aligned cube of edge `edge` centred at `center`.
    pub fn cube(name: impl Into<String>, center: Vector3<f64>, edge: f64) -> Self {
        let h = edge / 2.0;
        Region::cuboid(
            name,
            [center.x - h, center.y - h, center.z - h],
            [center.x + h, center.y + h, center.z + h],
        )
    }

    pub fn polyhedron(name: impl Into<String>, faces: Vec<Face>) -> Self {
        Region {
            name: name.into(),
            shape: Shape::Polyhedron { faces },
        }
    }

    /// Checks shape invariants; `path` prefixes error messages.
    pub fn validate(&self, path: &str) -> Result<()> {
        match &self.shape {
            Shape::Box { min, max } => {
                if min.iter().chain(max).any(|v| !v.is_finite()) {
                    return Err(Error::validation(path, "box corners must be finite"));
                }
                if (0..3).any(|i| min[i] >= max[i]) {
                    return Err(Error::validation(
                        path,
                        format!("box min {min:?} must be strictly below max {max:?}"),
                    ));
                }
            }
            Shape::Polyhedron { faces } => {
                if faces.is_empty() {
                    return Err(Error::validation(path, "polyhedron has no faces"));
                }
                let poly = self
                    .polytope()
                    .map_err(|e| Error::validation(path, e.to_string()))?;
                if !poly.is_bounded() {
                    return Err(Error::validation(path, "polyhedron is unbounded"));
                }
                if poly.vertices().len() < 4 {
                    return Err(Error::validation(path, "polyhedron is empty or degenerate"));
                }
            }
        }
        Ok(())
    }

    pub fn polytope(&self) -> Result<Polytope> {
        match &self.shape {
            Shape::Box { min, max } => {
                let mut faces = Vec::with_capacity(6);
                for axis in 0..3 {
                    let mut e = Vector3::zeros();
                    e[axis] = 1.0;
                    faces.push(HalfSpace::new(-e, -min[axis])?);
                    faces.push(HalfSpace::new(e, max[axis])?);
                }
                Polytope::new(faces)
            }
            Shape::Polyhedron { faces } => Polytope::new(
                faces
                    .iter()
                    .map(|f| HalfSpace::new(Vector3::from(f.normal), f.offset))
                    .collect::<Result<Vec<_>>>()?,
            ),
        }
    }

    pub fn vertices(&self) -> Vec<Vector3<f64>> {
        self.polytope().map(|p| p.vertices()).unwrap_or_default()
    }

    /// Mean of the vertices; the box centre for cuboids.
    pub fn center(&self) -> Vector3<f64> {
        match &self.shape {
            Shape::Box { min, max } => (Vector3::from(*min) + Vector3::from(*max)) / 2.0,
            Shape::Polyhedron { .. } => {
                let v = self.vertices();
                if v.is_empty() {
                    return Vector3::zeros();
                }
                v.iter().sum::<Vector3<f64>>() / v.len() as f64
            }
        }
    }

    /// Every vertex of `other` lies inside `self`.
    pub fn contains_region(&self, other: &Region) -> bool {
        let Ok(p) = self.polytope() else { return false };
        let verts = other.vertices();
        !verts.is_empty() && verts.iter().all(|v| p.contains(v))
    }

    pub fn overlaps(&self, other: &Region) -> bool {
        match (self.polytope(), other.polytope()) {
            (Ok(a), Ok(b)) => a.overlaps(&b),
            _ => false,
        }
    }

    pub fn intersects(&self, other: &Region) -> bool {
        match (self.polytope(), other.polytope()) {
            (Ok(a), Ok(b)) => a.intersects(&b),
            _ => false,
        }
    }
}

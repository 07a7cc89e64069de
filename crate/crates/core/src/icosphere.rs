//! Subdivided icosahedra with a fixed gravity-aligned embedding, plus exact
//! point location with barycentric weights.
//!
//! The level-0 icosahedron is pinned so the two poles sit on the world ±z axis
//! (vertex 0 at +z, vertex 11 at −z), the upper ring of five vertices sits at
//! latitude atan(1/2) with one vertex at longitude 0, and the lower ring is
//! offset by 36°. Subdivision inserts normalized edge midpoints, so level-k
//! vertices are a prefix of level-(k+1) vertices and the poles keep their
//! indices at every level.

use std::collections::HashMap;
use std::io::Write;

use nalgebra::Vector3;

use crate::error::{Error, Result};

/// Vertex index of the north pole (world +z) at every level.
pub const NORTH_POLE: usize = 0;
/// Vertex index of the south pole (world −z) at every level.
pub const SOUTH_POLE: usize = 11;

/// Default upper bound on the subdivision level accepted by [`build_icosphere`].
pub const MAX_LEVEL: usize = 10;

/// Number of vertices of the icosphere at subdivision level `level`.
pub fn vertex_count(level: usize) -> usize {
    2 + 10 * 4usize.pow(level as u32)
}

/// Number of faces of the icosphere at subdivision level `level`.
pub fn face_count(level: usize) -> usize {
    20 * 4usize.pow(level as u32)
}

/// A subdivided icosahedron approximating the unit sphere.
///
/// Keeps the whole subdivision hierarchy: faces of every level and the
/// edge-midpoint tables between consecutive levels. Children of face `f` at
/// level `k` are faces `4f..4f+4` at level `k+1`.
pub struct Icosphere {
    level: usize,
    vertices: Vec<Vector3<f64>>,
    faces: Vec<Vec<[u32; 3]>>,
    midpoints: Vec<HashMap<(u32, u32), u32>>,
}

/// Result of locating a direction on the icosphere: the containing top-level
/// face and the planar barycentric weights of the ray-plane intersection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Located {
    pub face: usize,
    pub verts: [u32; 3],
    pub weights: [f64; 3],
}

/// Builds the icosphere at the requested subdivision level.
///
/// Rejects levels above [`MAX_LEVEL`] as a memory guard; use
/// [`build_icosphere_with_limit`] to override.
pub fn build_icosphere(level: usize) -> Result<Icosphere> {
    build_icosphere_with_limit(level, MAX_LEVEL)
}

/// Same as [`build_icosphere`] with a caller-chosen level cap.
pub fn build_icosphere_with_limit(level: usize, max_level: usize) -> Result<Icosphere> {
    if level > max_level {
        return Err(Error::validation(
            "icosphere level",
            format!("level {level} exceeds limit {max_level}"),
        ));
    }
    let mut ico = Icosphere::level0();
    for _ in 0..level {
        ico.subdivide();
    }
    Ok(ico)
}

impl Icosphere {
    fn level0() -> Icosphere {
        // Poles on ±z; rings at latitude ±atan(1/2); lower ring offset 36°.
        let lat_z = 1.0 / 5.0_f64.sqrt();
        let lat_r = 2.0 / 5.0_f64.sqrt();
        let mut vertices = Vec::with_capacity(12);
        vertices.push(Vector3::new(0.0, 0.0, 1.0));
        for i in 0..5 {
            let lon = (72.0 * i as f64).to_radians();
            vertices.push(Vector3::new(lat_r * lon.cos(), lat_r * lon.sin(), lat_z));
        }
        for i in 0..5 {
            let lon = (36.0 + 72.0 * i as f64).to_radians();
            vertices.push(Vector3::new(lat_r * lon.cos(), lat_r * lon.sin(), -lat_z));
        }
        vertices.push(Vector3::new(0.0, 0.0, -1.0));

        let n = NORTH_POLE as u32;
        let s = SOUTH_POLE as u32;
        let u = |r: u32| 1 + (r % 5);
        let l = |r: u32| 6 + (r % 5);
        let mut faces = Vec::with_capacity(20);
        // Strip r covers: cap at N, two middle faces, cap at S. All CCW from outside.
        for r in 0..5u32 {
            faces.push([n, u(r), u(r + 1)]);
        }
        for r in 0..5u32 {
            faces.push([u(r), l(r), u(r + 1)]);
        }
        for r in 0..5u32 {
            faces.push([u(r + 1), l(r), l(r + 1)]);
        }
        for r in 0..5u32 {
            faces.push([l(r), s, l(r + 1)]);
        }

        Icosphere {
            level: 0,
            vertices,
            faces: vec![faces],
            midpoints: Vec::new(),
        }
    }

    fn subdivide(&mut self) {
        let parent = &self.faces[self.level];
        let mut table: HashMap<(u32, u32), u32> = HashMap::new();
        let mut children = Vec::with_capacity(parent.len() * 4);
        let vertices = &mut self.vertices;

        let mut midpoint = |a: u32, b: u32| -> u32 {
            let key = if a < b { (a, b) } else { (b, a) };
            *table.entry(key).or_insert_with(|| {
                let m = (vertices[a as usize] + vertices[b as usize]).normalize();
                vertices.push(m);
                (vertices.len() - 1) as u32
            })
        };

        for &[a, b, c] in parent {
            let mab = midpoint(a, b);
            let mbc = midpoint(b, c);
            let mca = midpoint(c, a);
            children.push([a, mab, mca]);
            children.push([mab, b, mbc]);
            children.push([mca, mbc, c]);
            children.push([mab, mbc, mca]);
        }

        self.faces.push(children);
        self.midpoints.push(table);
        self.level += 1;
    }

    pub fn level(&self) -> usize {
        self.level
    }

    /// All vertices up to and including the top level (level-k vertices are the
    /// prefix of length `vertex_count(k)`).
    pub fn vertices(&self) -> &[Vector3<f64>] {
        &self.vertices
    }

    pub fn vertex(&self, i: usize) -> Vector3<f64> {
        self.vertices[i]
    }

    pub fn num_vertices(&self) -> usize {
        vertex_count(self.level)
    }

    /// Faces of the top level.
    pub fn faces(&self) -> &[[u32; 3]] {
        &self.faces[self.level]
    }

    /// Faces of an intermediate level `k ≤ level`.
    pub fn faces_at(&self, k: usize) -> &[[u32; 3]] {
        &self.faces[k]
    }

    /// The four level-(k+1) children of face `f` at level `k`.
    pub fn face_children(&self, f: usize) -> [usize; 4] {
        [4 * f, 4 * f + 1, 4 * f + 2, 4 * f + 3]
    }

    /// Midpoint vertex of the level-k edge (a, b), if one was created by
    /// subdividing level k into k+1.
    pub fn edge_midpoint(&self, k: usize, a: u32, b: u32) -> Option<u32> {
        let key = if a < b { (a, b) } else { (b, a) };
        self.midpoints.get(k).and_then(|t| t.get(&key).copied())
    }

    /// Locates the face containing a unit direction by hierarchical descent
    /// and returns planar barycentric weights at the ray-plane intersection.
    ///
    /// Ties on shared arcs resolve to the lowest face index: candidates are
    /// scanned in index order at every level, which together with the child
    /// numbering makes the winner the globally lowest-index containing face.
    pub fn locate(&self, dir: &Vector3<f64>) -> Located {
        debug_assert!((dir.norm() - 1.0).abs() < 1e-9, "dir must be unit length");
        const EPS: f64 = 1e-12;

        let contains = |f: &[u32; 3]| -> bool {
            let a = &self.vertices[f[0] as usize];
            let b = &self.vertices[f[1] as usize];
            let c = &self.vertices[f[2] as usize];
            dir.dot(&b.cross(c)) >= -EPS && dir.dot(&c.cross(a)) >= -EPS && dir.dot(&a.cross(b)) >= -EPS
        };

        let mut face = usize::MAX;
        for (i, f) in self.faces[0].iter().enumerate() {
            if contains(f) {
                face = i;
                break;
            }
        }
        assert!(face != usize::MAX, "unit sphere tiling must cover every direction");

        for k in 1..=self.level {
            let mut next = usize::MAX;
            let mut best = (usize::MAX, f64::NEG_INFINITY);
            for child in self.face_children(face) {
                let f = &self.faces[k][child];
                if contains(f) {
                    next = child;
                    break;
                }
                // Track the closest child in case accumulated rounding leaves
                // the direction marginally outside all four.
                let a = &self.vertices[f[0] as usize];
                let b = &self.vertices[f[1] as usize];
                let c = &self.vertices[f[2] as usize];
                let margin = dir
                    .dot(&b.cross(c))
                    .min(dir.dot(&c.cross(a)))
                    .min(dir.dot(&a.cross(b)));
                if margin > best.1 {
                    best = (child, margin);
                }
            }
            face = if next != usize::MAX { next } else { best.0 };
        }

        let verts = self.faces[self.level][face];
        let weights = self.barycentric(&verts, dir);
        Located { face, verts, weights }
    }

    /// Planar barycentric weights of the intersection of ray `t·dir` with the
    /// plane of the face `(a, b, c)`; clamped to [0, 1] and renormalized.
    pub fn barycentric(&self, verts: &[u32; 3], dir: &Vector3<f64>) -> [f64; 3] {
        let a = &self.vertices[verts[0] as usize];
        let b = &self.vertices[verts[1] as usize];
        let c = &self.vertices[verts[2] as usize];
        // det(dir,b,c) : det(a,dir,c) : det(a,b,dir) are proportional to the
        // sub-triangle areas of Eq-style planar interpolation; normalizing by
        // their sum lands exactly on the ray-plane intersection point.
        let w0 = dir.dot(&b.cross(c));
        let w1 = a.dot(&dir.cross(c));
        let w2 = a.dot(&b.cross(dir));
        let mut w = [w0, w1, w2];
        for x in &mut w {
            if *x < 0.0 {
                *x = 0.0;
            }
        }
        let s = w[0] + w[1] + w[2];
        debug_assert!(s > 0.0, "degenerate barycentric solve");
        [w[0] / s, w[1] / s, w[2] / s]
    }

    /// Writes the top-level mesh as ASCII OBJ (v/f records, 1-based indices).
    pub fn write_obj<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for v in &self.vertices[..self.num_vertices()] {
            writeln!(out, "v {} {} {}", v.x, v.y, v.z)?;
        }
        for f in self.faces() {
            writeln!(out, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn random_unit(rng: &mut impl Rng) -> Vector3<f64> {
        loop {
            let v = Vector3::new(
                rng.gen::<f64>() * 2.0 - 1.0,
                rng.gen::<f64>() * 2.0 - 1.0,
                rng.gen::<f64>() * 2.0 - 1.0,
            );
            let n = v.norm();
            if n > 1e-3 && n < 1.0 {
                return v / n;
            }
        }
    }

    #[test]
    fn counts_match_closed_forms() {
        for level in 0..=6 {
            let ico = build_icosphere(level).unwrap();
            assert_eq!(ico.num_vertices(), 2 + 10 * 4usize.pow(level as u32));
            assert_eq!(ico.faces().len(), 20 * 4usize.pow(level as u32));
        }
    }

    #[test]
    fn vertices_unit_norm() {
        let ico = build_icosphere(3).unwrap();
        for v in ico.vertices() {
            assert!((v.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn poles_fixed_on_z_axis() {
        for level in 0..=5 {
            let ico = build_icosphere(level).unwrap();
            assert_eq!(ico.vertex(NORTH_POLE), Vector3::new(0.0, 0.0, 1.0));
            assert_eq!(ico.vertex(SOUTH_POLE), Vector3::new(0.0, 0.0, -1.0));
        }
    }

    #[test]
    fn faces_ccw_from_outside() {
        let ico = build_icosphere(2).unwrap();
        for k in 0..=2 {
            for f in ico.faces_at(k) {
                let a = ico.vertex(f[0] as usize);
                let b = ico.vertex(f[1] as usize);
                let c = ico.vertex(f[2] as usize);
                let n = (b - a).cross(&(c - a));
                let centroid = (a + b + c) / 3.0;
                assert!(n.dot(&centroid) > 0.0, "face {f:?} at level {k} is not CCW");
            }
        }
    }

    #[test]
    fn neighbor_valence() {
        let ico = build_icosphere(3).unwrap();
        let mut valence = vec![std::collections::BTreeSet::new(); ico.num_vertices()];
        for f in ico.faces() {
            for i in 0..3 {
                valence[f[i] as usize].insert(f[(i + 1) % 3]);
                valence[f[i] as usize].insert(f[(i + 2) % 3]);
            }
        }
        let five: Vec<usize> = valence
            .iter()
            .enumerate()
            .filter(|(_, s)| s.len() == 5)
            .map(|(i, _)| i)
            .collect();
        assert_eq!(five, (0..12).collect::<Vec<_>>());
        assert!(valence.iter().skip(12).all(|s| s.len() == 6));
    }

    #[test]
    fn rejects_oversized_level() {
        assert!(build_icosphere(11).is_err());
        assert!(build_icosphere_with_limit(11, 11).is_ok());
    }

    #[test]
    fn locate_vertex_identity() {
        let ico = build_icosphere(3).unwrap();
        for i in [0usize, 1, 11, 13, 100, 600] {
            let hit = ico.locate(&ico.vertex(i));
            let mut found = false;
            for t in 0..3 {
                if hit.verts[t] as usize == i {
                    assert!((hit.weights[t] - 1.0).abs() < 1e-9);
                    found = true;
                } else {
                    assert!(hit.weights[t].abs() < 1e-9);
                }
            }
            assert!(found, "vertex {i} not a corner of its located face");
        }
    }

    #[test]
    fn locate_centroid_thirds() {
        let ico = build_icosphere(2).unwrap();
        for face in [0usize, 7, 100, 319] {
            let f = ico.faces()[face];
            let centroid = (ico.vertex(f[0] as usize)
                + ico.vertex(f[1] as usize)
                + ico.vertex(f[2] as usize))
            .normalize();
            let hit = ico.locate(&centroid);
            for w in hit.weights {
                assert!((w - 1.0 / 3.0).abs() < 1e-9, "weights {:?}", hit.weights);
            }
        }
    }

    /// Brute-force oracle: scan every top-level face in index order and return
    /// the first whose spherical triangle contains the direction.
    fn locate_brute(ico: &Icosphere, dir: &Vector3<f64>) -> usize {
        const EPS: f64 = 1e-12;
        for (i, f) in ico.faces().iter().enumerate() {
            let a = ico.vertex(f[0] as usize);
            let b = ico.vertex(f[1] as usize);
            let c = ico.vertex(f[2] as usize);
            if dir.dot(&b.cross(&c)) >= -EPS
                && dir.dot(&c.cross(&a)) >= -EPS
                && dir.dot(&a.cross(&b)) >= -EPS
            {
                return i;
            }
        }
        panic!("direction not covered by any face");
    }

    #[test]
    fn locate_agrees_with_brute_force() {
        let ico = build_icosphere(3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..2000 {
            let dir = random_unit(&mut rng);
            let fast = ico.locate(&dir);
            let brute = locate_brute(&ico, &dir);
            assert_eq!(fast.face, brute, "dir {dir:?}");
        }
    }

    #[test]
    fn locate_exact_on_linear_fields() {
        // f(x) = a·x restricted to a face plane: barycentric blending of the
        // corner values must reproduce f at the ray-plane intersection.
        let ico = build_icosphere(4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let a = Vector3::new(0.3, -1.2, 0.7);
        for _ in 0..500 {
            let dir = random_unit(&mut rng);
            let hit = ico.locate(&dir);
            let v0 = ico.vertex(hit.verts[0] as usize);
            let v1 = ico.vertex(hit.verts[1] as usize);
            let v2 = ico.vertex(hit.verts[2] as usize);
            let p = v0 * hit.weights[0] + v1 * hit.weights[1] + v2 * hit.weights[2];
            let blended =
                hit.weights[0] * a.dot(&v0) + hit.weights[1] * a.dot(&v1) + hit.weights[2] * a.dot(&v2);
            assert!((blended - a.dot(&p)).abs() < 1e-9);
            // p lies on the ray through dir.
            assert!(p.normalize().dot(&dir) > 1.0 - 1e-9);
        }
    }

    #[test]
    fn obj_export_roundtrips_counts() {
        let ico = build_icosphere(1).unwrap();
        let mut buf = Vec::new();
        ico.write_obj(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().filter(|l| l.starts_with("v ")).count(), 42);
        assert_eq!(text.lines().filter(|l| l.starts_with("f ")).count(), 80);
    }
}

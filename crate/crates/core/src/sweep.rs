//! Icospherical sweeping: virtual sphere radii, the cached barycentric
//! sampling table, and cost-volume assembly.
//!
//! For sphere `j` and vertex `i`, each camera samples its features at
//! `p = center + d_j·v_i − t_wc` normalized onto the unit sphere. Only the
//! camera translation enters; rotation was already absorbed when images were
//! projected onto the icosphere. The (face, weight) part of every cache entry
//! is therefore invariant under camera rotation; the validity flag also folds
//! in the camera's FoV coverage, which does move with rotation.

use std::io::{Read, Write};
use std::path::Path;

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::camera::{fov_mask, CameraRig, FisheyeIntrinsics};
use crate::error::{Error, Result};
use crate::icosphere::{vertex_count, Icosphere};
use crate::tensor::Tensor;

/// The swept sphere radii: inverse depth affine in the sphere index (Eq-style
/// `1/d_j = (j−1)/(N−1)·(1/d_min) + ε`, 1-based `j`).
#[derive(Debug, Clone, PartialEq)]
pub struct SphereSet {
    pub d_min: f64,
    pub eps: f64,
    radii: Vec<f64>,
}

pub fn sphere_radii(n: usize, d_min: f64, eps: f64) -> SphereSet {
    assert!(n >= 2, "need at least two spheres");
    assert!(d_min > 0.0 && eps > 0.0);
    let radii: Vec<f64> = (1..=n)
        .map(|j| 1.0 / ((j - 1) as f64 / (n - 1) as f64 / d_min + eps))
        .collect();
    debug_assert!(radii.windows(2).all(|w| w[0] > w[1]));
    debug_assert!(radii.iter().all(|d| d.is_finite() && *d > 0.0));
    SphereSet { d_min, eps, radii }
}

impl SphereSet {
    pub fn len(&self) -> usize {
        self.radii.len()
    }

    pub fn is_empty(&self) -> bool {
        self.radii.is_empty()
    }

    /// Radius of sphere `j` (0-based index into the descending radii).
    pub fn radius(&self, j: usize) -> f64 {
        self.radii[j]
    }

    pub fn radii(&self) -> &[f64] {
        &self.radii
    }
}

/// One cached sample: the face the normalized sweep point lands on, its
/// barycentric weights, and validity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CacheEntry {
    pub face: u32,
    pub verts: [u32; 3],
    pub weights: [f64; 3],
    /// FoV-valid and non-degenerate: this camera contributes here.
    pub valid: bool,
    /// The sweep point coincided with the camera center.
    pub degenerate: bool,
}

/// Precomputed interpolation table per (camera, vertex, sphere).
pub struct SweepCache {
    pub level: usize,
    pub num_cameras: usize,
    pub num_spheres: usize,
    pub d_min: f64,
    pub eps: f64,
    pub rig_hash: [u8; 32],
    entries: Vec<CacheEntry>,
}

impl SweepCache {
    pub fn num_vertices(&self) -> usize {
        vertex_count(self.level)
    }

    #[inline]
    pub fn entry(&self, cam: usize, vertex: usize, sphere: usize) -> &CacheEntry {
        &self.entries[(cam * self.num_vertices() + vertex) * self.num_spheres + sphere]
    }

    /// The cache for the same rig with camera labels cyclically shifted by
    /// `shift` (camera k of the result is camera (k+shift) mod K). For a
    /// rotationally symmetric rig this equals the cache of the yawed rig.
    pub fn with_camera_shift(&self, shift: usize) -> SweepCache {
        let v = self.num_vertices();
        let n = self.num_spheres;
        let k = self.num_cameras;
        let mut entries = Vec::with_capacity(self.entries.len());
        for cam in 0..k {
            let src = (cam + shift) % k;
            entries.extend_from_slice(&self.entries[src * v * n..(src + 1) * v * n]);
        }
        SweepCache {
            level: self.level,
            num_cameras: k,
            num_spheres: n,
            d_min: self.d_min,
            eps: self.eps,
            rig_hash: self.rig_hash,
            entries,
        }
    }

    /// Same geometry with validity flags recomputed from fresh per-camera
    /// vertex masks (degenerate entries stay invalid).
    pub fn with_fov_masks(&self, masks: &[Vec<bool>]) -> SweepCache {
        assert_eq!(masks.len(), self.num_cameras);
        let v = self.num_vertices();
        for m in masks {
            assert_eq!(m.len(), v);
        }
        let n = self.num_spheres;
        let mut entries = self.entries.clone();
        for (idx, e) in entries.iter_mut().enumerate() {
            let cam = idx / (v * n);
            e.valid = !e.degenerate && e.verts.iter().all(|&t| masks[cam][t as usize]);
        }
        SweepCache {
            level: self.level,
            num_cameras: self.num_cameras,
            num_spheres: n,
            d_min: self.d_min,
            eps: self.eps,
            rig_hash: self.rig_hash,
            entries,
        }
    }

    /// True when the rotation-independent part (faces, weights, degeneracy)
    /// matches bitwise; validity flags are excluded since FoV coverage moves
    /// with camera rotation.
    pub fn geometry_eq(&self, other: &SweepCache) -> bool {
        self.level == other.level
            && self.entries.len() == other.entries.len()
            && self
                .entries
                .iter()
                .zip(&other.entries)
                .all(|(a, b)| {
                    a.face == b.face && a.weights == b.weights && a.degenerate == b.degenerate
                })
    }
}

/// Canonical content hash of a rig (extrinsics + intrinsics), used to key
/// persisted caches.
pub fn rig_content_hash(rig: &CameraRig) -> [u8; 32] {
    let mut h = Sha256::new();
    for cam in &rig.cameras {
        let r = cam.extrinsics.r_cw();
        for i in 0..3 {
            for j in 0..3 {
                h.update(r[(i, j)].to_le_bytes());
            }
        }
        for x in cam.extrinsics.t_cw().iter() {
            h.update(x.to_le_bytes());
        }
        match &cam.intrinsics {
            FisheyeIntrinsics::Equiangular(m) => {
                h.update([0u8]);
                h.update(m.focal.to_le_bytes());
                h.update(m.center.0.to_le_bytes());
                h.update(m.center.1.to_le_bytes());
                h.update((m.width as u64).to_le_bytes());
                h.update((m.height as u64).to_le_bytes());
                h.update(m.fov_deg.to_le_bytes());
            }
            FisheyeIntrinsics::Polynomial(m) => {
                h.update([1u8]);
                for c in m.poly.iter().chain(&m.invpoly) {
                    h.update(c.to_le_bytes());
                }
                h.update(m.affine.0.to_le_bytes());
                h.update(m.affine.1.to_le_bytes());
                h.update(m.affine.2.to_le_bytes());
                h.update(m.center.0.to_le_bytes());
                h.update(m.center.1.to_le_bytes());
                h.update((m.width as u64).to_le_bytes());
                h.update((m.height as u64).to_le_bytes());
                h.update(m.fov_deg.to_le_bytes());
            }
        }
    }
    h.finalize().into()
}

/// Cache key for one (rig, level, N, d_min, eps) combination.
pub fn cache_key(rig: &CameraRig, level: usize, spheres: &SphereSet) -> String {
    let mut h = Sha256::new();
    h.update(rig_content_hash(rig));
    h.update((level as u64).to_le_bytes());
    h.update((spheres.len() as u64).to_le_bytes());
    h.update(spheres.d_min.to_le_bytes());
    h.update(spheres.eps.to_le_bytes());
    let digest: [u8; 32] = h.finalize().into();
    digest[..12].iter().map(|b| format!("{b:02x}")).collect()
}

/// Builds the interpolation table for every (camera, vertex, sphere) triple.
///
/// Validity requires the landing face's three vertices to all be inside the
/// camera's FoV; a sweep point coinciding with the camera center is marked
/// degenerate and invalid.
pub fn build_sweep_cache(rig: &CameraRig, ico: &Icosphere, spheres: &SphereSet) -> SweepCache {
    let v = ico.num_vertices();
    let n = spheres.len();
    let center = rig.center();
    let masks: Vec<Vec<bool>> = rig
        .cameras
        .iter()
        .map(|cam| fov_mask(&cam.intrinsics, &cam.extrinsics, &ico.vertices()[..v]))
        .collect();

    let placeholder = CacheEntry {
        face: 0,
        verts: [0; 3],
        weights: [0.0; 3],
        valid: false,
        degenerate: false,
    };
    let mut entries = vec![placeholder; rig.len() * v * n];
    entries
        .par_chunks_mut(n)
        .enumerate()
        .for_each(|(slot, chunk)| {
            let cam = slot / v;
            let vertex = slot % v;
            let t_wc = rig.cameras[cam].extrinsics.t_wc();
            let dir = ico.vertex(vertex);
            let mask = &masks[cam];
            for (j, e) in chunk.iter_mut().enumerate() {
                let p = center + dir * spheres.radius(j) - t_wc;
                let norm = p.norm();
                if norm < 1e-12 {
                    e.degenerate = true;
                    e.valid = false;
                    continue;
                }
                let hit = ico.locate(&(p / norm));
                e.face = hit.face as u32;
                e.verts = hit.verts;
                e.weights = hit.weights;
                e.valid = hit
                    .verts
                    .iter()
                    .all(|&t| mask[t as usize]);
            }
        });

    SweepCache {
        level: ico.level(),
        num_cameras: rig.len(),
        num_spheres: n,
        d_min: spheres.d_min,
        eps: spheres.eps,
        rig_hash: rig_content_hash(rig),
        entries,
    }
}

/// Assembles the cost volume `[V, N, K·C]` by barycentric blending of each
/// camera's per-vertex features; invalid entries are zero-filled. Channel
/// blocks are ordered by camera index. With `append_validity` the volume
/// carries K extra 0/1 channels marking which camera blocks hold real
/// samples, giving the regularizer an explicit filler signal.
pub fn cost_volume_forward(
    features: &[&Tensor],
    cache: &SweepCache,
    append_validity: bool,
) -> Tensor {
    let k = features.len();
    assert_eq!(k, cache.num_cameras, "feature count != cached camera count");
    let v = cache.num_vertices();
    let n = cache.num_spheres;
    let c = features[0].shape()[1];
    for f in features {
        assert_eq!(f.shape(), &[v, c], "all cameras must share [V, C] features");
    }
    let width = k * c + if append_validity { k } else { 0 };
    let mut out = Tensor::zeros(&[v, n, width]);
    out.data_mut()
        .par_chunks_mut(n * width)
        .enumerate()
        .for_each(|(i, row)| {
            for j in 0..n {
                for cam in 0..k {
                    let e = cache.entry(cam, i, j);
                    if !e.valid {
                        continue;
                    }
                    if append_validity {
                        row[j * width + k * c + cam] = 1.0;
                    }
                    let fd = features[cam].data();
                    let dst = &mut row[j * width + cam * c..][..c];
                    let f0 = &fd[e.verts[0] as usize * c..][..c];
                    let f1 = &fd[e.verts[1] as usize * c..][..c];
                    let f2 = &fd[e.verts[2] as usize * c..][..c];
                    let [w0, w1, w2] = e.weights;
                    for ch in 0..c {
                        dst[ch] = w0 * f0[ch] + w1 * f1[ch] + w2 * f2[ch];
                    }
                }
            }
        });
    out
}

/// Adjoint of [`cost_volume_forward`]: scatter the volume gradient back onto
/// each camera's feature gradient (validity channels are constants and get
/// no gradient).
pub fn cost_volume_adjoint(
    d_out: &Tensor,
    cache: &SweepCache,
    num_cams: usize,
    c_feat: usize,
) -> Vec<Tensor> {
    let v = cache.num_vertices();
    let n = cache.num_spheres;
    let width = d_out.shape()[2];
    assert!(width == num_cams * c_feat || width == num_cams * c_feat + num_cams);
    assert_eq!(d_out.shape()[..2], [v, n]);
    let gd = d_out.data();
    (0..num_cams)
        .into_par_iter()
        .map(|cam| {
            let mut df = Tensor::zeros(&[v, c_feat]);
            let dd = df.data_mut();
            for i in 0..v {
                for j in 0..n {
                    let e = cache.entry(cam, i, j);
                    if !e.valid {
                        continue;
                    }
                    let src = &gd[(i * n + j) * width + cam * c_feat..][..c_feat];
                    for (t, &vt) in e.verts.iter().enumerate() {
                        let w = e.weights[t];
                        let dst = &mut dd[vt as usize * c_feat..][..c_feat];
                        for ch in 0..c_feat {
                            dst[ch] += w * src[ch];
                        }
                    }
                }
            }
            df
        })
        .collect()
}

/// Vertices with enough stereo overlap to evaluate: at least two cameras
/// valid in the cache at the sphere nearest the true depth's index.
pub fn overlap_mask(cache: &SweepCache, gt_index: &[f64]) -> Vec<bool> {
    let v = cache.num_vertices();
    assert_eq!(gt_index.len(), v);
    (0..v)
        .map(|i| {
            let j = (gt_index[i].round().clamp(1.0, cache.num_spheres as f64) - 1.0) as usize;
            let cams = (0..cache.num_cameras)
                .filter(|&k| cache.entry(k, i, j).valid)
                .count();
            cams >= 2
        })
        .collect()
}

const CACHE_MAGIC: &[u8; 4] = b"SWPC";

/// Persists the cache: magic, header (level, N, camera count, d_min, eps,
/// rig hash), then per entry a u32 face index, three f32 weights, and a u8
/// validity flag.
pub fn write_cache(cache: &SweepCache, path: &Path) -> Result<()> {
    let mut out = std::io::BufWriter::new(
        std::fs::File::create(path).map_err(|e| Error::io(path, e))?,
    );
    let werr = |e| Error::io(path, e);
    out.write_all(CACHE_MAGIC).map_err(werr)?;
    out.write_all(&(cache.level as u32).to_le_bytes()).map_err(werr)?;
    out.write_all(&(cache.num_spheres as u32).to_le_bytes())
        .map_err(werr)?;
    out.write_all(&(cache.num_cameras as u32).to_le_bytes())
        .map_err(werr)?;
    out.write_all(&cache.d_min.to_le_bytes()).map_err(werr)?;
    out.write_all(&cache.eps.to_le_bytes()).map_err(werr)?;
    out.write_all(&cache.rig_hash).map_err(werr)?;
    for e in &cache.entries {
        out.write_all(&e.face.to_le_bytes()).map_err(werr)?;
        for w in e.weights {
            out.write_all(&(w as f32).to_le_bytes()).map_err(werr)?;
        }
        let flags = u8::from(e.valid) | (u8::from(e.degenerate) << 1);
        out.write_all(&[flags]).map_err(werr)?;
    }
    Ok(())
}

/// Loads a persisted cache, resolving face indices back to vertex triples
/// through the icosphere (which must be at the stored level).
pub fn read_cache(path: &Path, ico: &Icosphere) -> Result<SweepCache> {
    let mut file = std::io::BufReader::new(
        std::fs::File::open(path).map_err(|e| Error::io(path, e))?,
    );
    let rerr = |e| Error::io(path, e);
    let mut magic = [0u8; 4];
    file.read_exact(&mut magic).map_err(rerr)?;
    if &magic != CACHE_MAGIC {
        return Err(Error::format(path, "not a sweep cache (bad magic)"));
    }
    let mut u32buf = [0u8; 4];
    let mut f64buf = [0u8; 8];
    let mut read_u32 = |f: &mut dyn Read| -> Result<u32> {
        f.read_exact(&mut u32buf).map_err(|e| Error::io(path, e))?;
        Ok(u32::from_le_bytes(u32buf))
    };
    let level = read_u32(&mut file)? as usize;
    let n = read_u32(&mut file)? as usize;
    let cams = read_u32(&mut file)? as usize;
    file.read_exact(&mut f64buf).map_err(rerr)?;
    let d_min = f64::from_le_bytes(f64buf);
    file.read_exact(&mut f64buf).map_err(rerr)?;
    let eps = f64::from_le_bytes(f64buf);
    let mut rig_hash = [0u8; 32];
    file.read_exact(&mut rig_hash).map_err(rerr)?;

    if ico.level() != level {
        return Err(Error::format(
            path,
            format!("cache level {level} != icosphere level {}", ico.level()),
        ));
    }
    let v = vertex_count(level);
    let count = cams * v * n;
    let mut entries = Vec::with_capacity(count);
    let faces = ico.faces();
    let mut rec = [0u8; 17];
    for _ in 0..count {
        file.read_exact(&mut rec).map_err(rerr)?;
        let face = u32::from_le_bytes(rec[0..4].try_into().unwrap());
        let w = [
            f32::from_le_bytes(rec[4..8].try_into().unwrap()) as f64,
            f32::from_le_bytes(rec[8..12].try_into().unwrap()) as f64,
            f32::from_le_bytes(rec[12..16].try_into().unwrap()) as f64,
        ];
        let flags = rec[16];
        if face as usize >= faces.len() {
            return Err(Error::format(path, "face index out of range"));
        }
        entries.push(CacheEntry {
            face,
            verts: faces[face as usize],
            weights: w,
            valid: flags & 1 != 0,
            degenerate: flags & 2 != 0,
        });
    }
    Ok(SweepCache {
        level,
        num_cameras: cams,
        num_spheres: n,
        d_min,
        eps,
        rig_hash,
        entries,
    })
}

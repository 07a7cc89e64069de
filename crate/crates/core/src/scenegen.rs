//! Synthetic indoor scenes with exact ray-cast ground truth: a textured box
//! room, sphere/box props, Lambertian shading with one directional light.
//! Serves as the training and evaluation oracle for the whole pipeline.

use std::path::Path;

use nalgebra::{Matrix3, Unit, Vector3};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::camera::{
    CameraRig, EquiangularModel, Extrinsics, FisheyeIntrinsics, Image, RigCamera,
};
use crate::error::{Error, Result};
use crate::icosphere::Icosphere;

/// Procedural surface color.
#[derive(Debug, Clone, PartialEq)]
pub enum Texture {
    /// 3D checkerboard evaluated at the world-space hit point.
    Checker {
        scale: f64,
        a: [f64; 3],
        b: [f64; 3],
    },
    /// Linear color ramp along a world direction.
    Gradient {
        dir: Vector3<f64>,
        span: f64,
        a: [f64; 3],
        b: [f64; 3],
    },
}

impl Texture {
    fn albedo(&self, p: &Vector3<f64>) -> [f64; 3] {
        match self {
            Texture::Checker { scale, a, b } => {
                let parity = ((p.x / scale).floor() + (p.y / scale).floor()
                    + (p.z / scale).floor()) as i64;
                if parity.rem_euclid(2) == 0 {
                    *a
                } else {
                    *b
                }
            }
            Texture::Gradient { dir, span, a, b } => {
                let t = ((p.dot(dir) / span) + 0.5).clamp(0.0, 1.0);
                [
                    a[0] * (1.0 - t) + b[0] * t,
                    a[1] * (1.0 - t) + b[1] * t,
                    a[2] * (1.0 - t) + b[2] * t,
                ]
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Shape {
    Sphere { center: Vector3<f64>, radius: f64 },
    Box { center: Vector3<f64>, half: Vector3<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prop {
    pub shape: Shape,
    pub texture: Texture,
}

/// An axis-aligned room centered at the origin with textured walls, props,
/// ambient plus one directional light.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub room_half: Vector3<f64>,
    /// Textures for −x, +x, −y, +y, −z, +z walls.
    pub wall_textures: [Texture; 6],
    pub props: Vec<Prop>,
    /// Direction light travels (normalized at construction).
    pub light_dir: Vector3<f64>,
    pub ambient: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy)]
pub struct Hit {
    pub t: f64,
    pub normal: Vector3<f64>,
    prop: Option<usize>,
    wall: usize,
}

impl Scene {
    /// Checks the safety margins: the origin (rig center) must lie inside the
    /// room and no prop may intrude into the rig sphere of radius `clearance`.
    pub fn validate(&self, clearance: f64) -> Result<()> {
        if self.room_half.min() <= clearance {
            return Err(Error::validation(
                "scene",
                "room too small: rig center not strictly inside",
            ));
        }
        for p in &self.props {
            let ok = match &p.shape {
                Shape::Sphere { center, radius } => center.norm() > radius + clearance,
                Shape::Box { center, half } => {
                    let d = Vector3::new(
                        (center.x.abs() - half.x).max(0.0),
                        (center.y.abs() - half.y).max(0.0),
                        (center.z.abs() - half.z).max(0.0),
                    );
                    d.norm() > clearance
                }
            };
            if !ok {
                return Err(Error::validation("scene", "prop intrudes into the rig volume"));
            }
        }
        Ok(())
    }

    /// First intersection of the ray `o + t·d` with the scene, `t > 1e-9`.
    /// The room is closed, so a hit always exists for interior origins.
    pub fn cast(&self, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Hit {
        let mut best: Option<Hit> = None;
        for (i, prop) in self.props.iter().enumerate() {
            let hit = match &prop.shape {
                Shape::Sphere { center, radius } => ray_sphere(origin, dir, center, *radius),
                Shape::Box { center, half } => ray_box(origin, dir, center, half),
            };
            if let Some((t, normal)) = hit {
                if best.map_or(true, |b| t < b.t) {
                    best = Some(Hit {
                        t,
                        normal,
                        prop: Some(i),
                        wall: 0,
                    });
                }
            }
        }
        // Exit point of the ray through the room box (origin inside).
        let mut t_exit = f64::INFINITY;
        let mut wall = 0;
        for axis in 0..3 {
            let d = dir[axis];
            if d.abs() < 1e-300 {
                continue;
            }
            let bound = if d > 0.0 {
                self.room_half[axis]
            } else {
                -self.room_half[axis]
            };
            let t = (bound - origin[axis]) / d;
            if t > 1e-9 && t < t_exit {
                t_exit = t;
                wall = axis * 2 + usize::from(d > 0.0);
            }
        }
        if best.map_or(true, |b| t_exit < b.t) {
            let mut normal = Vector3::zeros();
            let axis = wall / 2;
            normal[axis] = if wall % 2 == 1 { -1.0 } else { 1.0 };
            best = Some(Hit {
                t: t_exit,
                normal,
                prop: None,
                wall,
            });
        }
        best.expect("closed room guarantees an intersection")
    }

    /// Shaded color at a hit: albedo × (ambient + (1−ambient)·max(0, n·−L)).
    pub fn shade(&self, origin: &Vector3<f64>, dir: &Vector3<f64>, hit: &Hit) -> [f64; 3] {
        let p = origin + dir * hit.t;
        let albedo = match hit.prop {
            Some(i) => self.props[i].texture.albedo(&p),
            None => self.wall_textures[hit.wall].albedo(&p),
        };
        let diffuse = hit.normal.dot(&-self.light_dir).max(0.0);
        let l = self.ambient + (1.0 - self.ambient) * diffuse;
        [albedo[0] * l, albedo[1] * l, albedo[2] * l]
    }
}

fn ray_sphere(
    o: &Vector3<f64>,
    d: &Vector3<f64>,
    c: &Vector3<f64>,
    r: f64,
) -> Option<(f64, Vector3<f64>)> {
    let oc = o - c;
    let b = oc.dot(d);
    let disc = b * b - (oc.norm_squared() - r * r);
    if disc < 0.0 {
        return None;
    }
    let sq = disc.sqrt();
    let t = if -b - sq > 1e-9 {
        -b - sq
    } else if -b + sq > 1e-9 {
        -b + sq
    } else {
        return None;
    };
    let n = (o + d * t - c).normalize();
    Some((t, n))
}

fn ray_box(
    o: &Vector3<f64>,
    d: &Vector3<f64>,
    c: &Vector3<f64>,
    half: &Vector3<f64>,
) -> Option<(f64, Vector3<f64>)> {
    let mut t_near = f64::NEG_INFINITY;
    let mut t_far = f64::INFINITY;
    let mut near_axis = 0usize;
    for axis in 0..3 {
        let od = o[axis] - c[axis];
        if d[axis].abs() < 1e-300 {
            if od.abs() > half[axis] {
                return None;
            }
            continue;
        }
        let mut t0 = (-half[axis] - od) / d[axis];
        let mut t1 = (half[axis] - od) / d[axis];
        if t0 > t1 {
            std::mem::swap(&mut t0, &mut t1);
        }
        if t0 > t_near {
            t_near = t0;
            near_axis = axis;
        }
        t_far = t_far.min(t1);
        if t_near > t_far {
            return None;
        }
    }
    if t_near <= 1e-9 {
        return None; // origin inside or box behind
    }
    let p = o + d * t_near;
    let mut n = Vector3::zeros();
    n[near_axis] = (p[near_axis] - c[near_axis]).signum();
    Some((t_near, n))
}

/// Renders a fisheye view: every pixel's ray is unprojected through the
/// camera model, rotated to the world, and cast. Out-of-FoV pixels stay black.
pub fn render_fisheye(
    scene: &Scene,
    extr: &Extrinsics,
    intr: &FisheyeIntrinsics,
    width: usize,
    height: usize,
) -> Image {
    let origin = extr.t_wc();
    let mut img = Image::new(width, height);
    img.data_mut()
        .par_chunks_mut(width * 3)
        .enumerate()
        .for_each(|(y, row)| {
            for x in 0..width {
                if let Some(d_cam) = intr.unproject(x as f64, y as f64) {
                    let d_w = extr.rotate_cam_dir(&d_cam);
                    let hit = scene.cast(&origin, &d_w);
                    let rgb = scene.shade(&origin, &d_w, &hit);
                    row[x * 3..x * 3 + 3].copy_from_slice(&rgb);
                }
            }
        });
    img
}

/// Depth along each pixel ray (meters); out-of-FoV pixels get 0.
pub fn render_fisheye_depth(
    scene: &Scene,
    extr: &Extrinsics,
    intr: &FisheyeIntrinsics,
    width: usize,
    height: usize,
) -> Vec<f64> {
    let origin = extr.t_wc();
    let mut out = vec![0.0; width * height];
    out.par_chunks_mut(width)
        .enumerate()
        .for_each(|(y, row)| {
            for (x, slot) in row.iter_mut().enumerate() {
                if let Some(d_cam) = intr.unproject(x as f64, y as f64) {
                    let d_w = extr.rotate_cam_dir(&d_cam);
                    *slot = scene.cast(&origin, &d_w).t;
                }
            }
        });
    out
}

/// Exact per-vertex ground-truth depth from the rig center along each vertex
/// direction.
pub fn gt_depth_ico(scene: &Scene, center: &Vector3<f64>, ico: &Icosphere) -> Vec<f64> {
    ico.vertices()[..ico.num_vertices()]
        .iter()
        .map(|v| scene.cast(center, v).t)
        .collect()
}

/// Pitches every camera downward by `pitch_deg` about the horizontal tangent
/// axis at its own position; positions (and hence the rig center) unchanged.
pub fn rotate_rig(rig: &CameraRig, pitch_deg: f64) -> CameraRig {
    assert!((0.0..=90.0).contains(&pitch_deg), "pitch must be in [0, 90]");
    let center = rig.center();
    let z = Vector3::new(0.0, 0.0, 1.0);
    let cameras = rig
        .cameras
        .iter()
        .map(|cam| {
            let offset = cam.extrinsics.t_wc() - center;
            let mut radial = Vector3::new(offset.x, offset.y, 0.0);
            if radial.norm() < 1e-9 {
                // Camera at the rig center: fall back to its optical axis.
                let axis_w = cam.extrinsics.rotate_cam_dir(&z);
                radial = Vector3::new(axis_w.x, axis_w.y, 0.0);
            }
            let radial = Unit::new_normalize(radial);
            let tangent = Unit::new_normalize(z.cross(&radial));
            let rot = nalgebra::Rotation3::from_axis_angle(&tangent, pitch_deg.to_radians());
            let r_wc_new = rot.matrix() * cam.extrinsics.r_cw().transpose();
            RigCamera {
                name: cam.name.clone(),
                intrinsics: cam.intrinsics.clone(),
                extrinsics: cam
                    .extrinsics
                    .with_rotation(r_wc_new.transpose())
                    .expect("rotating a valid rotation stays valid"),
            }
        })
        .collect();
    CameraRig::new(cameras)
}

/// The default four-camera rig: equiangular fisheyes at `baseline` meters from
/// the center facing front, left, back, and right (+x, +y, −x, −y), optical
/// axes horizontal, world up mapped to image up.
pub fn default_rig(baseline: f64, fov_deg: f64, image_size: usize) -> CameraRig {
    let focal = (image_size as f64 / 2.0 - 8.0) / (fov_deg.to_radians() / 2.0);
    let face = Matrix3::new(
        0.0, 0.0, 1.0, //
        -1.0, 0.0, 0.0, //
        0.0, -1.0, 0.0,
    );
    let names = ["front", "left", "back", "right"];
    let cameras = (0..4)
        .map(|i| {
            let yaw = (90.0 * i as f64).to_radians();
            let pos = Vector3::new(baseline * yaw.cos(), baseline * yaw.sin(), 0.0);
            let r_wc = nalgebra::Rotation3::from_axis_angle(
                &Unit::new_normalize(Vector3::new(0.0, 0.0, 1.0)),
                yaw,
            )
            .matrix()
                * face;
            let r_cw = r_wc.transpose();
            RigCamera {
                name: names[i].to_string(),
                intrinsics: FisheyeIntrinsics::Equiangular(EquiangularModel {
                    focal,
                    center: (image_size as f64 / 2.0, image_size as f64 / 2.0),
                    width: image_size,
                    height: image_size,
                    fov_deg,
                }),
                extrinsics: Extrinsics::from_position(r_cw, pos).unwrap(),
            }
        })
        .collect();
    CameraRig::new(cameras)
}

fn random_color(rng: &mut impl Rng) -> [f64; 3] {
    [
        0.15 + 0.85 * rng.gen::<f64>(),
        0.15 + 0.85 * rng.gen::<f64>(),
        0.15 + 0.85 * rng.gen::<f64>(),
    ]
}

fn random_checker(rng: &mut impl Rng) -> Texture {
    Texture::Checker {
        scale: 0.25 + 0.25 * rng.gen::<f64>(),
        a: random_color(rng),
        b: random_color(rng),
    }
}

/// Deterministic scene from a seed: a room of a few meters, checkered walls,
/// and a handful of textured props placed clear of the rig.
pub fn generate(seed: u64) -> Scene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9e3779b97f4a7c15).wrapping_add(1));
    let room_half = Vector3::new(
        2.2 + rng.gen::<f64>(),
        2.0 + rng.gen::<f64>(),
        1.3 + 0.5 * rng.gen::<f64>(),
    );
    let wall_textures = std::array::from_fn(|_| random_checker(&mut rng));
    let mut props = Vec::new();
    let count = 3 + (rng.gen::<f64>() * 3.0) as usize;
    for _ in 0..count {
        let azimuth = rng.gen::<f64>() * std::f64::consts::TAU;
        let dist = 1.0 + 1.0 * rng.gen::<f64>();
        let zpos = (rng.gen::<f64>() - 0.5) * (room_half.z - 0.6);
        let center = Vector3::new(dist * azimuth.cos(), dist * azimuth.sin(), zpos);
        let texture = random_checker(&mut rng);
        if rng.gen::<bool>() {
            let radius = (0.25 + 0.2 * rng.gen::<f64>()).min(dist - 0.45);
            props.push(Prop {
                shape: Shape::Sphere { center, radius },
                texture,
            });
        } else {
            let h = 0.2 + 0.15 * rng.gen::<f64>();
            let half = Vector3::new(h, h * (0.6 + 0.8 * rng.gen::<f64>()), h * 1.4)
                .map(|x| x.min(dist - 0.45));
            props.push(Prop {
                shape: Shape::Box { center, half },
                texture,
            });
        }
    }
    let light_dir = Vector3::new(
        0.4 * (rng.gen::<f64>() - 0.5),
        0.4 * (rng.gen::<f64>() - 0.5),
        -1.0,
    )
    .normalize();
    let scene = Scene {
        room_half,
        wall_textures,
        props,
        light_dir,
        ambient: 0.35,
        seed,
    };
    scene.validate(0.3).expect("generated scenes keep rig clearance");
    scene
}

/// Parses the scene config: `room X Y Z` (full extents, meters), `seed U64`,
/// `light dx dy dz`, `ambient A`, and `prop sphere cx cy cz r` /
/// `prop box cx cy cz hx hy hz` lines. Textures derive from the seed.
pub fn parse_scene(text: &str, src: &Path) -> Result<Scene> {
    let mut room: Option<Vector3<f64>> = None;
    let mut seed = 0u64;
    let mut light = Vector3::new(-0.2, 0.1, -1.0);
    let mut ambient = 0.35;
    let mut raw_props: Vec<(Shape, usize)> = Vec::new();

    for (ln, rawline) in text.lines().enumerate() {
        let ln = ln + 1;
        let line = rawline.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        let nums = |slice: &[&str]| -> Result<Vec<f64>> {
            slice
                .iter()
                .map(|t| {
                    t.parse::<f64>()
                        .map_err(|_| Error::parse(src, ln, format!("bad number '{t}'")))
                })
                .collect()
        };
        match toks[0] {
            "room" => {
                let v = nums(&toks[1..])?;
                if v.len() != 3 {
                    return Err(Error::parse(src, ln, "room needs X Y Z extents"));
                }
                room = Some(Vector3::new(v[0] / 2.0, v[1] / 2.0, v[2] / 2.0));
            }
            "seed" => {
                seed = toks
                    .get(1)
                    .and_then(|t| t.parse::<u64>().ok())
                    .ok_or_else(|| Error::parse(src, ln, "seed needs an integer"))?;
            }
            "light" => {
                let v = nums(&toks[1..])?;
                if v.len() != 3 {
                    return Err(Error::parse(src, ln, "light needs dx dy dz"));
                }
                light = Vector3::new(v[0], v[1], v[2]);
            }
            "ambient" => {
                let v = nums(&toks[1..])?;
                ambient = *v.first().ok_or_else(|| Error::parse(src, ln, "ambient needs a value"))?;
            }
            "prop" => match toks.get(1) {
                Some(&"sphere") => {
                    let v = nums(&toks[2..])?;
                    if v.len() != 4 {
                        return Err(Error::parse(src, ln, "prop sphere needs cx cy cz r"));
                    }
                    raw_props.push((
                        Shape::Sphere {
                            center: Vector3::new(v[0], v[1], v[2]),
                            radius: v[3],
                        },
                        ln,
                    ));
                }
                Some(&"box") => {
                    let v = nums(&toks[2..])?;
                    if v.len() != 6 {
                        return Err(Error::parse(src, ln, "prop box needs cx cy cz hx hy hz"));
                    }
                    raw_props.push((
                        Shape::Box {
                            center: Vector3::new(v[0], v[1], v[2]),
                            half: Vector3::new(v[3], v[4], v[5]),
                        },
                        ln,
                    ));
                }
                other => return Err(Error::parse(src, ln, format!("unknown prop {other:?}"))),
            },
            other => return Err(Error::parse(src, ln, format!("unknown key '{other}'"))),
        }
    }

    let room_half =
        room.ok_or_else(|| Error::parse(src, 0, "missing 'room' line"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9e3779b97f4a7c15).wrapping_add(1));
    let wall_textures = std::array::from_fn(|_| random_checker(&mut rng));
    let props = raw_props
        .into_iter()
        .map(|(shape, _)| Prop {
            shape,
            texture: random_checker(&mut rng),
        })
        .collect();
    let scene = Scene {
        room_half,
        wall_textures,
        props,
        light_dir: light.normalize(),
        ambient,
        seed,
    };
    scene.validate(0.3)?;
    Ok(scene)
}

pub fn load_scene(path: &Path) -> Result<Scene> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_scene(&text, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::icosphere::build_icosphere;

    fn flat_scene() -> Scene {
        // Uniform-albedo room, full ambient: every surface shades to 0.5.
        let tex = Texture::Gradient {
            dir: Vector3::new(1.0, 0.0, 0.0),
            span: 1e9,
            a: [0.5; 3],
            b: [0.5; 3],
        };
        Scene {
            room_half: Vector3::new(2.0, 2.0, 1.5),
            wall_textures: std::array::from_fn(|_| tex.clone()),
            props: vec![],
            light_dir: Vector3::new(0.0, 0.0, -1.0),
            ambient: 1.0,
            seed: 0,
        }
    }

    #[test]
    fn generate_is_deterministic() {
        let a = generate(42);
        let b = generate(42);
        assert_eq!(a, b);
        assert_ne!(a, generate(43));
    }

    #[test]
    fn empty_room_depth_is_analytic_slab_distance() {
        let scene = flat_scene();
        let ico = build_icosphere(3).unwrap();
        let depths = gt_depth_ico(&scene, &Vector3::zeros(), &ico);
        for (i, v) in ico.vertices()[..ico.num_vertices()].iter().enumerate() {
            let mut t = f64::INFINITY;
            for a in 0..3 {
                if v[a].abs() > 1e-300 {
                    t = t.min(scene.room_half[a] / v[a].abs());
                }
            }
            assert!((depths[i] - t).abs() < 1e-9, "vertex {i}");
        }
        // Axis-aligned directions hit the walls at the half extents.
        assert!((scene.cast(&Vector3::zeros(), &Vector3::new(1.0, 0.0, 0.0)).t - 2.0).abs() < 1e-12);
        assert!((scene.cast(&Vector3::zeros(), &Vector3::new(0.0, 0.0, -1.0)).t - 1.5).abs() < 1e-12);
    }

    #[test]
    fn sphere_prop_depth_along_its_ray() {
        let mut scene = flat_scene();
        let ico = build_icosphere(2).unwrap();
        let v = ico.vertex(17);
        scene.props.push(Prop {
            shape: Shape::Sphere {
                center: v * 1.4,
                radius: 0.3,
            },
            texture: Texture::Checker {
                scale: 0.3,
                a: [1.0; 3],
                b: [0.0; 3],
            },
        });
        let depths = gt_depth_ico(&scene, &Vector3::zeros(), &ico);
        assert!((depths[17] - 1.1).abs() < 1e-9);
    }

    #[test]
    fn constant_room_renders_constant_in_fov() {
        let scene = flat_scene();
        let rig = default_rig(0.2, 200.0, 128);
        let cam = &rig.cameras[0];
        let img = render_fisheye(&scene, &cam.extrinsics, &cam.intrinsics, 128, 128);
        let mut seen_dark = false;
        for y in 0..128 {
            for x in 0..128 {
                let px = img.pixel(x, y);
                if cam.intrinsics.unproject(x as f64, y as f64).is_some() {
                    assert!((px[0] - 0.5).abs() < 1e-9);
                } else {
                    assert_eq!(px, [0.0; 3]);
                    seen_dark = true;
                }
            }
        }
        assert!(seen_dark, "200° fisheye leaves image corners out of FoV");
    }

    #[test]
    fn principal_point_sees_surface_on_optical_axis() {
        let mut scene = flat_scene();
        scene.ambient = 1.0;
        // Distinctive wall straight ahead of the front camera (+x).
        scene.wall_textures[1] = Texture::Gradient {
            dir: Vector3::new(0.0, 1.0, 0.0),
            span: 1e9,
            a: [0.9, 0.1, 0.2],
            b: [0.9, 0.1, 0.2],
        };
        let rig = default_rig(0.2, 200.0, 128);
        let cam = &rig.cameras[0];
        let img = render_fisheye(&scene, &cam.extrinsics, &cam.intrinsics, 128, 128);
        let px = img.pixel(64, 64);
        assert!((px[0] - 0.9).abs() < 1e-9 && (px[1] - 0.1).abs() < 1e-9);
    }

    #[test]
    fn rendered_depth_matches_analytic_slabs() {
        let scene = flat_scene();
        let rig = default_rig(0.2, 200.0, 96);
        let cam = &rig.cameras[2];
        let depth = render_fisheye_depth(&scene, &cam.extrinsics, &cam.intrinsics, 96, 96);
        let origin = cam.extrinsics.t_wc();
        for y in (0..96).step_by(7) {
            for x in (0..96).step_by(7) {
                let Some(d_cam) = cam.intrinsics.unproject(x as f64, y as f64) else {
                    continue;
                };
                let d = cam.extrinsics.rotate_cam_dir(&d_cam);
                let mut t = f64::INFINITY;
                for a in 0..3 {
                    if d[a].abs() > 1e-300 {
                        let bound = if d[a] > 0.0 { scene.room_half[a] } else { -scene.room_half[a] };
                        t = t.min((bound - origin[a]) / d[a]);
                    }
                }
                assert!((depth[y * 96 + x] - t).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn rotate_rig_zero_is_identity_and_45_tilts_axes() {
        let rig = default_rig(0.2, 220.0, 64);
        let same = rotate_rig(&rig, 0.0);
        for (a, b) in rig.cameras.iter().zip(&same.cameras) {
            assert!((a.extrinsics.r_cw() - b.extrinsics.r_cw()).abs().max() < 1e-12);
            assert!((a.extrinsics.t_wc() - b.extrinsics.t_wc()).norm() < 1e-12);
        }
        let tilted = rotate_rig(&rig, 45.0);
        for (orig, cam) in rig.cameras.iter().zip(&tilted.cameras) {
            assert!((orig.extrinsics.t_wc() - cam.extrinsics.t_wc()).norm() < 1e-12);
            let axis = cam.extrinsics.rotate_cam_dir(&Vector3::new(0.0, 0.0, 1.0));
            assert!(
                (axis.z + 45.0_f64.to_radians().sin()).abs() < 1e-9,
                "optical axis should point 45° below horizontal, z = {}",
                axis.z
            );
        }
        assert!((rig.center() - tilted.center()).norm() < 1e-12);
    }

    #[test]
    fn scene_config_round_trip_parsing() {
        let text = "\
# test scene
room 5.0 4.4 3.0
seed 9
light -0.3 0.2 -0.9
ambient 0.4
prop sphere 1.5 0.5 -0.2 0.4
prop box -1.2 -1.0 0.0 0.3 0.2 0.5
";
        let scene = parse_scene(text, Path::new("scene.cfg")).unwrap();
        assert_eq!(scene.room_half, Vector3::new(2.5, 2.2, 1.5));
        assert_eq!(scene.props.len(), 2);
        assert!((scene.ambient - 0.4).abs() < 1e-12);

        let bad = "room 5 5 3\nprop sphere 0.1 0 0 0.5\n";
        assert!(parse_scene(bad, Path::new("bad.cfg")).is_err());
    }

    #[test]
    fn renders_are_deterministic() {
        let scene = generate(7);
        let rig = default_rig(0.2, 220.0, 96);
        let cam = &rig.cameras[1];
        let a = render_fisheye(&scene, &cam.extrinsics, &cam.intrinsics, 96, 96);
        let b = render_fisheye(&scene, &cam.extrinsics, &cam.intrinsics, 96, 96);
        assert_eq!(a, b);
    }
}

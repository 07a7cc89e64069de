//! Fisheye camera models, extrinsics, calibration ingestion, and
//! gravity-aware projection of images onto the icosphere.
//!
//! Projection onto the icosphere applies only the camera rotation to each
//! vertex direction before sampling, so world-up always lands on the north
//! pole of the grid no matter how the camera is mounted. Translation plays no
//! part here; it enters later through the sweeping geometry.

use std::path::{Path, PathBuf};

use nalgebra::{Matrix2, Matrix3, Vector2, Vector3};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::icosphere::Icosphere;
use crate::tensor::Tensor;

/// World→camera rigid transform. The camera position is the stored quantity
/// (so rotating a camera in place leaves it bitwise untouched); the
/// translation column t_cw = −R_cw·t_wc is derived.
#[derive(Debug, Clone, PartialEq)]
pub struct Extrinsics {
    r_cw: Matrix3<f64>,
    t_wc: Vector3<f64>,
}

impl Extrinsics {
    /// From the conventional (R_cw, t_cw) pair. Validates orthonormality and
    /// det = +1 to 1e-9.
    pub fn new(r_cw: Matrix3<f64>, t_cw: Vector3<f64>) -> Result<Extrinsics> {
        Self::check_rotation(&r_cw)?;
        Ok(Extrinsics {
            r_cw,
            t_wc: -r_cw.transpose() * t_cw,
        })
    }

    /// From a rotation and the camera position in world coordinates.
    pub fn from_position(r_cw: Matrix3<f64>, t_wc: Vector3<f64>) -> Result<Extrinsics> {
        Self::check_rotation(&r_cw)?;
        Ok(Extrinsics { r_cw, t_wc })
    }

    fn check_rotation(r_cw: &Matrix3<f64>) -> Result<()> {
        let gram = r_cw.transpose() * r_cw;
        let dev = (gram - Matrix3::identity()).abs().max();
        if dev > 1e-9 {
            return Err(Error::validation(
                "extrinsics",
                format!("rotation not orthonormal (deviation {dev:.3e})"),
            ));
        }
        let det = r_cw.determinant();
        if (det - 1.0).abs() > 1e-9 {
            return Err(Error::validation(
                "extrinsics",
                format!("rotation determinant {det} != 1"),
            ));
        }
        Ok(())
    }

    pub fn r_cw(&self) -> &Matrix3<f64> {
        &self.r_cw
    }

    /// Translation column of the world→camera transform: −R_cw·t_wc.
    pub fn t_cw(&self) -> Vector3<f64> {
        -self.r_cw * self.t_wc
    }

    /// Camera position in world coordinates.
    pub fn t_wc(&self) -> Vector3<f64> {
        self.t_wc
    }

    pub fn world_to_cam(&self, p_w: &Vector3<f64>) -> Vector3<f64> {
        self.r_cw * (p_w - self.t_wc)
    }

    pub fn cam_to_world(&self, p_c: &Vector3<f64>) -> Vector3<f64> {
        self.r_cw.transpose() * p_c + self.t_wc
    }

    /// Rotates a world direction into the camera frame (no translation).
    pub fn rotate_world_dir(&self, d: &Vector3<f64>) -> Vector3<f64> {
        self.r_cw * d
    }

    /// Rotates a camera-frame direction out into the world frame.
    pub fn rotate_cam_dir(&self, d: &Vector3<f64>) -> Vector3<f64> {
        self.r_cw.transpose() * d
    }

    /// Replaces the rotation, keeping the camera position bitwise fixed.
    pub fn with_rotation(&self, r_cw: Matrix3<f64>) -> Result<Extrinsics> {
        Self::check_rotation(&r_cw)?;
        Ok(Extrinsics {
            r_cw,
            t_wc: self.t_wc,
        })
    }
}

/// OCamCalib-style polynomial fisheye: `z(ρ)` forward polynomial in image
/// radius, `ρ(θ)` inverse polynomial in the incidence angle, plus the affine
/// sensor alignment `[u;v] = [c d; e 1]·[x';y'] + [cx;cy]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolynomialModel {
    pub poly: Vec<f64>,
    pub invpoly: Vec<f64>,
    pub affine: (f64, f64, f64),
    pub center: (f64, f64),
    pub width: usize,
    pub height: usize,
    pub fov_deg: f64,
}

/// Ideal equiangular fisheye: radius = focal · θ.
#[derive(Debug, Clone, PartialEq)]
pub struct EquiangularModel {
    pub focal: f64,
    pub center: (f64, f64),
    pub width: usize,
    pub height: usize,
    pub fov_deg: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum FisheyeIntrinsics {
    Polynomial(PolynomialModel),
    Equiangular(EquiangularModel),
}

fn eval_poly(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
}

impl FisheyeIntrinsics {
    pub fn width(&self) -> usize {
        match self {
            FisheyeIntrinsics::Polynomial(m) => m.width,
            FisheyeIntrinsics::Equiangular(m) => m.width,
        }
    }

    pub fn height(&self) -> usize {
        match self {
            FisheyeIntrinsics::Polynomial(m) => m.height,
            FisheyeIntrinsics::Equiangular(m) => m.height,
        }
    }

    pub fn fov_deg(&self) -> f64 {
        match self {
            FisheyeIntrinsics::Polynomial(m) => m.fov_deg,
            FisheyeIntrinsics::Equiangular(m) => m.fov_deg,
        }
    }

    /// Projects a camera-frame point to a pixel. Out-of-FoV (incidence angle
    /// beyond fov/2) and out-of-bounds pixels return `None`; that is a regular
    /// outcome, not an error.
    pub fn project(&self, p_cam: &Vector3<f64>) -> Option<(f64, f64)> {
        let r3 = p_cam.norm();
        if r3 < 1e-12 {
            return None;
        }
        let theta = (p_cam.z / r3).clamp(-1.0, 1.0).acos();
        if theta > self.fov_deg().to_radians() / 2.0 {
            return None;
        }
        let rxy = (p_cam.x * p_cam.x + p_cam.y * p_cam.y).sqrt();
        let (u, v) = match self {
            FisheyeIntrinsics::Equiangular(m) => {
                let rho = m.focal * theta;
                if rxy < 1e-12 {
                    (m.center.0, m.center.1)
                } else {
                    (
                        m.center.0 + rho * p_cam.x / rxy,
                        m.center.1 + rho * p_cam.y / rxy,
                    )
                }
            }
            FisheyeIntrinsics::Polynomial(m) => {
                let rho = eval_poly(&m.invpoly, theta);
                let (xs, ys) = if rxy < 1e-12 {
                    (0.0, 0.0)
                } else {
                    (rho * p_cam.x / rxy, rho * p_cam.y / rxy)
                };
                let (c, d, e) = m.affine;
                (
                    c * xs + d * ys + m.center.0,
                    e * xs + ys + m.center.1,
                )
            }
        };
        let (w, h) = (self.width() as f64, self.height() as f64);
        if u < 0.0 || u > w - 1.0 || v < 0.0 || v > h - 1.0 {
            return None;
        }
        Some((u, v))
    }

    /// Back-projects a pixel to a unit direction in the camera frame, or
    /// `None` outside the FoV.
    pub fn unproject(&self, u: f64, v: f64) -> Option<Vector3<f64>> {
        let half_fov = self.fov_deg().to_radians() / 2.0;
        let dir = match self {
            FisheyeIntrinsics::Equiangular(m) => {
                let dx = u - m.center.0;
                let dy = v - m.center.1;
                let rho = (dx * dx + dy * dy).sqrt();
                let theta = rho / m.focal;
                if theta > half_fov {
                    return None;
                }
                if rho < 1e-12 {
                    Vector3::new(0.0, 0.0, 1.0)
                } else {
                    let s = theta.sin() / rho;
                    Vector3::new(s * dx, s * dy, theta.cos())
                }
            }
            FisheyeIntrinsics::Polynomial(m) => {
                let (c, d, e) = m.affine;
                let a = Matrix2::new(c, d, e, 1.0);
                let inv = a.try_inverse()?;
                let p = inv * Vector2::new(u - m.center.0, v - m.center.1);
                let rho = p.norm();
                let z = eval_poly(&m.poly, rho);
                let dir = Vector3::new(p.x, p.y, z).normalize();
                let theta = dir.z.clamp(-1.0, 1.0).acos();
                if theta > half_fov {
                    return None;
                }
                dir
            }
        };
        Some(dir)
    }

    /// The same model restricted (or widened) to another field of view.
    pub fn with_fov(&self, fov_deg: f64) -> FisheyeIntrinsics {
        match self {
            FisheyeIntrinsics::Polynomial(m) => FisheyeIntrinsics::Polynomial(PolynomialModel {
                fov_deg,
                ..m.clone()
            }),
            FisheyeIntrinsics::Equiangular(m) => FisheyeIntrinsics::Equiangular(EquiangularModel {
                fov_deg,
                ..m.clone()
            }),
        }
    }

    /// Checks the principal-point anchor and the project∘unproject round trip
    /// on 1000 random in-FoV pixels (< 0.1 px each).
    pub fn validate(&self) -> Result<()> {
        let axis = Vector3::new(0.0, 0.0, 1.0);
        let (cx, cy) = match self {
            FisheyeIntrinsics::Polynomial(m) => m.center,
            FisheyeIntrinsics::Equiangular(m) => m.center,
        };
        match self.project(&axis) {
            Some((u, v)) if (u - cx).abs() < 1e-6 && (v - cy).abs() < 1e-6 => {}
            other => {
                return Err(Error::validation(
                    "intrinsics",
                    format!("optical axis projects to {other:?}, expected principal point"),
                ))
            }
        }

        let mut rng = ChaCha8Rng::seed_from_u64(0x1c05);
        let (w, h) = (self.width() as f64, self.height() as f64);
        let mut checked = 0;
        let mut attempts = 0;
        while checked < 1000 {
            attempts += 1;
            if attempts > 200_000 {
                return Err(Error::validation(
                    "intrinsics",
                    "field of view covers too few pixels to validate",
                ));
            }
            let u = rng.gen::<f64>() * (w - 1.0);
            let v = rng.gen::<f64>() * (h - 1.0);
            let Some(dir) = self.unproject(u, v) else {
                continue;
            };
            let Some((u2, v2)) = self.project(&dir) else {
                // A pixel whose ray re-projects outside bounds sits on the FoV
                // circle edge; skip rather than fail.
                continue;
            };
            let err = ((u - u2).powi(2) + (v - v2).powi(2)).sqrt();
            if err >= 0.1 {
                return Err(Error::validation(
                    "intrinsics",
                    format!("round-trip error {err:.4} px at ({u:.1}, {v:.1})"),
                ));
            }
            checked += 1;
        }
        Ok(())
    }
}

/// RGB image with values normalized to [0, 1], interleaved row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize) -> Image {
        Image {
            width,
            height,
            data: vec![0.0; width * height * 3],
        }
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn pixel(&self, x: usize, y: usize) -> [f64; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set_pixel(&mut self, x: usize, y: usize, rgb: [f64; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn load_png(path: &Path) -> Result<Image> {
        let img = image::open(path)
            .map_err(|e| Error::format(path, format!("cannot decode image: {e}")))?
            .to_rgb8();
        let (w, h) = (img.width() as usize, img.height() as usize);
        let mut out = Image::new(w, h);
        for (i, p) in img.pixels().enumerate() {
            out.data[i * 3] = p.0[0] as f64 / 255.0;
            out.data[i * 3 + 1] = p.0[1] as f64 / 255.0;
            out.data[i * 3 + 2] = p.0[2] as f64 / 255.0;
        }
        Ok(out)
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        let mut img = image::RgbImage::new(self.width as u32, self.height as u32);
        for (i, p) in img.pixels_mut().enumerate() {
            for ch in 0..3 {
                p.0[ch] = (self.data[i * 3 + ch].clamp(0.0, 1.0) * 255.0).round() as u8;
            }
        }
        img.save(path)
            .map_err(|e| Error::format(path, format!("cannot encode image: {e}")))
    }
}

/// Standard bilinear blend of the four pixels around `(u, v)`; exact at
/// integer coordinates. `None` outside `[0, w−1]×[0, h−1]`.
pub fn bilinear_sample(img: &Image, u: f64, v: f64) -> Option<[f64; 3]> {
    if !(0.0..=(img.width as f64 - 1.0)).contains(&u)
        || !(0.0..=(img.height as f64 - 1.0)).contains(&v)
    {
        return None;
    }
    let x0 = u.floor() as usize;
    let y0 = v.floor() as usize;
    let x1 = (x0 + 1).min(img.width - 1);
    let y1 = (y0 + 1).min(img.height - 1);
    let fx = u - x0 as f64;
    let fy = v - y0 as f64;
    let p00 = img.pixel(x0, y0);
    let p10 = img.pixel(x1, y0);
    let p01 = img.pixel(x0, y1);
    let p11 = img.pixel(x1, y1);
    let mut out = [0.0; 3];
    for c in 0..3 {
        let top = p00[c] * (1.0 - fx) + p10[c] * fx;
        let bot = p01[c] * (1.0 - fx) + p11[c] * fx;
        out[c] = top * (1.0 - fy) + bot * fy;
    }
    Some(out)
}

/// Per-vertex RGB samples of one camera on the icosphere, with a validity
/// mask. Invalid vertices hold zero.
#[derive(Debug, Clone, PartialEq)]
pub struct IcoImage {
    pub level: usize,
    pub values: Tensor,
    pub valid: Vec<bool>,
}

/// Projects an image onto the icosphere per the gravity-aware rule: each
/// vertex direction is rotated by R_cw only (no translation) and sampled
/// bilinearly. Vertices outside the camera FoV are masked invalid.
pub fn project_to_icosphere(
    img: &Image,
    intr: &FisheyeIntrinsics,
    extr: &Extrinsics,
    ico: &Icosphere,
) -> IcoImage {
    assert_eq!(
        (img.width, img.height),
        (intr.width(), intr.height()),
        "image dimensions do not match intrinsics"
    );
    let n = ico.num_vertices();
    let mut values = Tensor::zeros(&[n, 3]);
    let mut valid = vec![false; n];
    let vd = values.data_mut();
    for (i, v) in ico.vertices()[..n].iter().enumerate() {
        let d_cam = extr.rotate_world_dir(v);
        if let Some((u, w)) = intr.project(&d_cam) {
            if let Some(rgb) = bilinear_sample(img, u, w) {
                vd[i * 3..i * 3 + 3].copy_from_slice(&rgb);
                valid[i] = true;
            }
        }
    }
    IcoImage {
        level: ico.level(),
        values,
        valid,
    }
}

/// Which vertices of `vertices` fall inside the camera's FoV (and image
/// bounds) under the gravity-aware rotation.
pub fn fov_mask(
    intr: &FisheyeIntrinsics,
    extr: &Extrinsics,
    vertices: &[Vector3<f64>],
) -> Vec<bool> {
    vertices
        .iter()
        .map(|v| intr.project(&extr.rotate_world_dir(v)).is_some())
        .collect()
}

/// Persists a projected icosphere image (values at f32, mask, level).
pub fn save_ico_image(ii: &IcoImage, path: &Path) -> Result<()> {
    let valid = Tensor::from_vec(
        &[ii.valid.len()],
        ii.valid.iter().map(|&b| f64::from(u8::from(b))).collect(),
    );
    let level = Tensor::scalar(ii.level as f64);
    crate::weights::write_tensors(
        path,
        &[
            ("values", &ii.values, crate::weights::Dtype::F32),
            ("valid", &valid, crate::weights::Dtype::F32),
            ("level", &level, crate::weights::Dtype::F64),
        ],
    )
}

pub fn load_ico_image(path: &Path) -> Result<IcoImage> {
    let tensors = crate::weights::read_tensors(path)?;
    let find = |name: &str| -> Result<&Tensor> {
        tensors
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
            .ok_or_else(|| Error::format(path, format!("missing tensor '{name}'")))
    };
    let values = find("values")?.clone();
    let valid: Vec<bool> = find("valid")?.data().iter().map(|&x| x != 0.0).collect();
    let level = find("level")?.item() as usize;
    if values.shape() != [crate::icosphere::vertex_count(level), 3] {
        return Err(Error::format(path, "values shape does not match level"));
    }
    Ok(IcoImage {
        level,
        values,
        valid,
    })
}

/// One camera of a rig.
#[derive(Debug, Clone)]
pub struct RigCamera {
    pub name: String,
    pub intrinsics: FisheyeIntrinsics,
    pub extrinsics: Extrinsics,
}

/// A calibrated multi-camera rig. The center is the arithmetic mean of the
/// camera positions.
#[derive(Debug, Clone)]
pub struct CameraRig {
    pub cameras: Vec<RigCamera>,
}

impl CameraRig {
    pub fn new(cameras: Vec<RigCamera>) -> CameraRig {
        assert!(!cameras.is_empty(), "rig needs at least one camera");
        CameraRig { cameras }
    }

    pub fn center(&self) -> Vector3<f64> {
        let sum: Vector3<f64> = self.cameras.iter().map(|c| c.extrinsics.t_wc()).sum();
        sum / self.cameras.len() as f64
    }

    pub fn len(&self) -> usize {
        self.cameras.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cameras.is_empty()
    }
}

/// Parses the line-oriented calibration format.
pub fn parse_calibration(text: &str, src: &Path) -> Result<FisheyeIntrinsics> {
    let mut model: Option<&str> = None;
    let mut poly: Option<Vec<f64>> = None;
    let mut invpoly: Option<Vec<f64>> = None;
    let mut affine: Option<(f64, f64, f64)> = None;
    let mut center: Option<(f64, f64)> = None;
    let mut size: Option<(usize, usize)> = None;
    let mut fov: Option<f64> = None;
    let mut focal: Option<f64> = None;

    for (ln, raw) in text.lines().enumerate() {
        let ln = ln + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut it = line.split_whitespace();
        let key = it.next().unwrap();
        let rest: Vec<&str> = it.collect();
        let nums = |rest: &[&str]| -> Result<Vec<f64>> {
            rest.iter()
                .map(|t| {
                    t.parse::<f64>()
                        .map_err(|_| Error::parse(src, ln, format!("bad number '{t}'")))
                })
                .collect()
        };
        match key {
            "model" => match rest.first() {
                Some(&"polynomial") => model = Some("polynomial"),
                Some(&"equiangular") => model = Some("equiangular"),
                other => {
                    return Err(Error::parse(src, ln, format!("unknown model {other:?}")));
                }
            },
            "poly" | "invpoly" => {
                let v = nums(&rest)?;
                if v.is_empty() {
                    return Err(Error::parse(src, ln, "missing degree"));
                }
                let degree = v[0] as usize;
                if v.len() != degree + 2 {
                    return Err(Error::parse(
                        src,
                        ln,
                        format!("degree {degree} needs {} coefficients", degree + 1),
                    ));
                }
                let coeffs = v[1..].to_vec();
                if key == "poly" {
                    poly = Some(coeffs);
                } else {
                    invpoly = Some(coeffs);
                }
            }
            "affine" => {
                let v = nums(&rest)?;
                if v.len() != 3 {
                    return Err(Error::parse(src, ln, "affine needs c d e"));
                }
                affine = Some((v[0], v[1], v[2]));
            }
            "center" => {
                let v = nums(&rest)?;
                if v.len() != 2 {
                    return Err(Error::parse(src, ln, "center needs cx cy"));
                }
                center = Some((v[0], v[1]));
            }
            "size" => {
                let v = nums(&rest)?;
                if v.len() != 2 {
                    return Err(Error::parse(src, ln, "size needs width height"));
                }
                size = Some((v[0] as usize, v[1] as usize));
            }
            "fov" => {
                let v = nums(&rest)?;
                if v.len() != 1 {
                    return Err(Error::parse(src, ln, "fov needs one value"));
                }
                fov = Some(v[0]);
            }
            "focal" => {
                let v = nums(&rest)?;
                if v.len() != 1 {
                    return Err(Error::parse(src, ln, "focal needs one value"));
                }
                focal = Some(v[0]);
            }
            other => return Err(Error::parse(src, ln, format!("unknown key '{other}'"))),
        }
    }

    let need = |opt_name: &str, missing: bool| -> Result<()> {
        if missing {
            Err(Error::parse(src, 0, format!("missing '{opt_name}'")))
        } else {
            Ok(())
        }
    };
    let fov_deg = {
        need("fov", fov.is_none())?;
        let f = fov.unwrap();
        if !(0.0..360.0).contains(&f) || f <= 0.0 {
            return Err(Error::validation("intrinsics", format!("fov {f} out of (0, 360)")));
        }
        f
    };
    need("size", size.is_none())?;
    need("center", center.is_none())?;
    let (width, height) = size.unwrap();
    let center = center.unwrap();

    let intr = match model {
        Some("polynomial") => {
            need("poly", poly.is_none())?;
            if invpoly.is_none() {
                return Err(Error::validation(
                    "intrinsics",
                    "polynomial model requires an inverse polynomial (invpoly)",
                ));
            }
            FisheyeIntrinsics::Polynomial(PolynomialModel {
                poly: poly.unwrap(),
                invpoly: invpoly.unwrap(),
                affine: affine.unwrap_or((1.0, 0.0, 0.0)),
                center,
                width,
                height,
                fov_deg,
            })
        }
        Some("equiangular") => {
            need("focal", focal.is_none())?;
            FisheyeIntrinsics::Equiangular(EquiangularModel {
                focal: focal.unwrap(),
                center,
                width,
                height,
                fov_deg,
            })
        }
        _ => return Err(Error::parse(src, 0, "missing 'model' line")),
    };
    intr.validate()?;
    Ok(intr)
}

/// Reads and validates a calibration file.
pub fn load_calibration(path: &Path) -> Result<FisheyeIntrinsics> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_calibration(&text, path)
}

/// Writes a calibration file in the same format [`parse_calibration`] reads.
pub fn save_calibration(intr: &FisheyeIntrinsics, path: &Path) -> Result<()> {
    let mut out = String::new();
    match intr {
        FisheyeIntrinsics::Equiangular(m) => {
            out.push_str("model equiangular\n");
            out.push_str(&format!("focal {}\n", m.focal));
            out.push_str(&format!("center {} {}\n", m.center.0, m.center.1));
            out.push_str(&format!("size {} {}\n", m.width, m.height));
            out.push_str(&format!("fov {}\n", m.fov_deg));
        }
        FisheyeIntrinsics::Polynomial(m) => {
            out.push_str("model polynomial\n");
            out.push_str(&format!("poly {}", m.poly.len() - 1));
            for c in &m.poly {
                out.push_str(&format!(" {c:e}"));
            }
            out.push('\n');
            out.push_str(&format!("invpoly {}", m.invpoly.len() - 1));
            for c in &m.invpoly {
                out.push_str(&format!(" {c:e}"));
            }
            out.push('\n');
            out.push_str(&format!(
                "affine {} {} {}\n",
                m.affine.0, m.affine.1, m.affine.2
            ));
            out.push_str(&format!("center {} {}\n", m.center.0, m.center.1));
            out.push_str(&format!("size {} {}\n", m.width, m.height));
            out.push_str(&format!("fov {}\n", m.fov_deg));
        }
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Parses a rig file: one `cam <name> <calib-path> R r00..r22 t tx ty tz`
/// line per camera, calibration paths resolved relative to the rig file.
pub fn load_rig(path: &Path) -> Result<CameraRig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut cameras = Vec::new();
    for (ln, raw) in text.lines().enumerate() {
        let ln = ln + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != 17 || toks[0] != "cam" || toks[3] != "R" || toks[13] != "t" {
            return Err(Error::parse(
                path,
                ln,
                "expected: cam <name> <calib> R r00..r22 t tx ty tz",
            ));
        }
        let name = toks[1].to_string();
        let calib_path = base.join(toks[2]);
        let nums: Vec<f64> = toks[4..13]
            .iter()
            .chain(toks[14..17].iter())
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|_| Error::parse(path, ln, format!("bad number '{t}'")))
            })
            .collect::<Result<_>>()?;
        let r_cw = Matrix3::from_row_slice(&nums[0..9]);
        let t_cw = Vector3::new(nums[9], nums[10], nums[11]);
        let intrinsics = load_calibration(&calib_path)?;
        let extrinsics = Extrinsics::new(r_cw, t_cw)?;
        cameras.push(RigCamera {
            name,
            intrinsics,
            extrinsics,
        });
    }
    if cameras.is_empty() {
        return Err(Error::format(path, "rig file defines no cameras"));
    }
    Ok(CameraRig::new(cameras))
}

/// Writes a rig file plus one calibration file per camera next to it.
pub fn save_rig(rig: &CameraRig, path: &Path) -> Result<PathBuf> {
    let base = path.parent().unwrap_or(Path::new("."));
    std::fs::create_dir_all(base).map_err(|e| Error::io(base, e))?;
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().to_string())
        .unwrap_or_else(|| "rig".to_string());
    let mut out = String::new();
    for cam in &rig.cameras {
        let calib_name = format!("{stem}_{}.calib", cam.name);
        save_calibration(&cam.intrinsics, &base.join(&calib_name))?;
        let r = cam.extrinsics.r_cw();
        let t = cam.extrinsics.t_cw();
        out.push_str(&format!("cam {} {calib_name} R", cam.name));
        for i in 0..3 {
            for j in 0..3 {
                out.push_str(&format!(" {}", r[(i, j)]));
            }
        }
        out.push_str(&format!(" t {} {} {}\n", t.x, t.y, t.z));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))?;
    Ok(path.to_path_buf())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::icosphere::build_icosphere;
    use approx::assert_relative_eq;

    const POLY_CALIB: &str = "\
model polynomial
poly 4 1.644506193097e2 4.781354386457e-2 -2.953824483154e-3 6.431462265038e-6 -2.006195857277e-8
invpoly 9 0.0 1.645014587868e2 7.005707533355e0 -1.974072568736e1 9.247791669421e0 2.714535708450e1 -4.078756208829e1 2.294480701831e1 -5.905269787082e0 5.873586176575e-1
affine 1.001 0.0005 -0.0003
center 320.0 320.0
size 640 640
fov 219
";

    const EQUI_CALIB: &str = "\
model equiangular
focal 200.0
center 512.0 512.0
size 1024 1024
fov 185
";

    fn equi() -> FisheyeIntrinsics {
        parse_calibration(EQUI_CALIB, Path::new("equi.calib")).unwrap()
    }

    fn poly() -> FisheyeIntrinsics {
        parse_calibration(POLY_CALIB, Path::new("poly.calib")).unwrap()
    }

    #[test]
    fn equiangular_radius_formula() {
        let intr = equi();
        // θ = 0.5 rad must land 100 px from the principal point.
        let theta: f64 = 0.5;
        let p = Vector3::new(theta.sin(), 0.0, theta.cos());
        let (u, v) = intr.project(&p).unwrap();
        assert_relative_eq!(u, 512.0 + 100.0, epsilon = 1e-9);
        assert_relative_eq!(v, 512.0, epsilon = 1e-9);
    }

    #[test]
    fn optical_axis_hits_principal_point() {
        for intr in [equi(), poly()] {
            let (u, v) = intr.project(&Vector3::new(0.0, 0.0, 1.0)).unwrap();
            let (cx, cy) = match &intr {
                FisheyeIntrinsics::Polynomial(m) => m.center,
                FisheyeIntrinsics::Equiangular(m) => m.center,
            };
            assert!((u - cx).abs() < 1e-6 && (v - cy).abs() < 1e-6);
        }
    }

    #[test]
    fn fov_boundary_circle() {
        let intr = equi();
        let half = 92.5_f64.to_radians();
        let p = Vector3::new(half.sin(), 0.0, half.cos());
        let (u, _) = intr.project(&p).unwrap();
        assert_relative_eq!(u - 512.0, 200.0 * half, epsilon = 1e-9);
        // Just past the boundary is out of FoV.
        let over = (92.5_f64 + 1e-6).to_radians();
        let q = Vector3::new(over.sin(), 0.0, over.cos());
        assert!(intr.project(&q).is_none());
    }

    #[test]
    fn polynomial_requires_inverse() {
        let text = POLY_CALIB
            .lines()
            .filter(|l| !l.starts_with("invpoly"))
            .collect::<Vec<_>>()
            .join("\n");
        let err = parse_calibration(&text, Path::new("x.calib")).unwrap_err();
        assert!(err.to_string().contains("inverse polynomial"));
    }

    #[test]
    fn malformed_line_reports_position() {
        let text = "model equiangular\nfocal abc\n";
        let err = parse_calibration(text, Path::new("bad.calib")).unwrap_err();
        assert!(err.to_string().contains("bad.calib:2"));
    }

    #[test]
    fn roundtrip_validation_accepts_fixtures() {
        // parse_calibration already runs validate(); double-check explicitly.
        equi().validate().unwrap();
        poly().validate().unwrap();
    }

    #[test]
    fn roundtrip_error_is_small_on_grid() {
        let intr = poly();
        let mut worst: f64 = 0.0;
        for gy in 0..40 {
            for gx in 0..40 {
                let u = 10.0 + gx as f64 * 15.5;
                let v = 10.0 + gy as f64 * 15.5;
                if let Some(d) = intr.unproject(u, v) {
                    if let Some((u2, v2)) = intr.project(&d) {
                        worst = worst.max(((u - u2).powi(2) + (v - v2).powi(2)).sqrt());
                    }
                }
            }
        }
        assert!(worst < 0.1, "worst grid round-trip {worst}");
    }

    #[test]
    fn extrinsics_validation_and_inverse() {
        let bad = Matrix3::new(1.0, 0.1, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0);
        assert!(Extrinsics::new(bad, Vector3::zeros()).is_err());

        let angle = 0.7_f64;
        let r = nalgebra::Rotation3::from_euler_angles(0.3, angle, -1.1);
        let e = Extrinsics::new(*r.matrix(), Vector3::new(0.2, -0.4, 1.0)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let p = Vector3::new(rng.gen::<f64>(), rng.gen::<f64>(), rng.gen::<f64>());
            let back = e.cam_to_world(&e.world_to_cam(&p));
            assert!((back - p).norm() < 1e-9);
        }
        assert!((e.world_to_cam(&e.t_wc())).norm() < 1e-12);
    }

    #[test]
    fn bilinear_exact_at_integers_and_midpoints() {
        let mut img = Image::new(4, 4);
        img.set_pixel(1, 1, [0.25, 0.5, 0.75]);
        assert_eq!(bilinear_sample(&img, 1.0, 1.0).unwrap(), [0.25, 0.5, 0.75]);

        let mut img2 = Image::new(2, 2);
        img2.set_pixel(0, 0, [0.0; 3]);
        img2.set_pixel(1, 0, [0.0; 3]);
        img2.set_pixel(0, 1, [1.0; 3]);
        img2.set_pixel(1, 1, [1.0; 3]);
        let mid = bilinear_sample(&img2, 0.5, 0.5).unwrap();
        assert_relative_eq!(mid[0], 0.5, epsilon = 1e-12);

        assert!(bilinear_sample(&img2, -0.1, 0.0).is_none());
        assert!(bilinear_sample(&img2, 0.0, 1.1).is_none());
    }

    #[test]
    fn bilinear_exact_on_linear_ramp() {
        let mut img = Image::new(16, 16);
        for y in 0..16 {
            for x in 0..16 {
                let val = 0.02 * x as f64 + 0.03 * y as f64;
                img.set_pixel(x, y, [val; 3]);
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let u = rng.gen::<f64>() * 15.0;
            let v = rng.gen::<f64>() * 15.0;
            let s = bilinear_sample(&img, u, v).unwrap();
            assert!((s[0] - (0.02 * u + 0.03 * v)).abs() < 1e-12);
        }
    }

    #[test]
    fn projection_ignores_translation() {
        let ico = build_icosphere(2).unwrap();
        let intr = equi();
        let mut img = Image::new(1024, 1024);
        for y in 0..1024 {
            for x in 0..1024 {
                img.set_pixel(x, y, [(x % 7) as f64 / 7.0, (y % 5) as f64 / 5.0, 0.5]);
            }
        }
        let r = nalgebra::Rotation3::from_euler_angles(0.2, -0.4, 0.9);
        let e1 = Extrinsics::new(*r.matrix(), Vector3::new(0.0, 0.0, 0.0)).unwrap();
        let e2 = Extrinsics::new(*r.matrix(), Vector3::new(5.0, -2.0, 1.0)).unwrap();
        let a = project_to_icosphere(&img, &intr, &e1, &ico);
        let b = project_to_icosphere(&img, &intr, &e2, &ico);
        assert_eq!(a.values, b.values);
        assert_eq!(a.valid, b.valid);
    }

    #[test]
    fn constant_image_projects_constant() {
        let ico = build_icosphere(2).unwrap();
        let intr = equi();
        let mut img = Image::new(1024, 1024);
        for i in 0..img.data.len() {
            img.data[i] = 0.6;
        }
        let e = Extrinsics::new(Matrix3::identity(), Vector3::zeros()).unwrap();
        let ii = project_to_icosphere(&img, &intr, &e, &ico);
        for (i, ok) in ii.valid.iter().enumerate() {
            let px = &ii.values.data()[i * 3..i * 3 + 3];
            if *ok {
                assert!(px.iter().all(|&x| (x - 0.6).abs() < 1e-12));
            } else {
                assert!(px.iter().all(|&x| x == 0.0));
            }
        }
        // 185° FoV leaves a cap around −z invalid.
        assert!(ii.valid.iter().any(|v| !v));
        assert!(ii.valid[crate::icosphere::NORTH_POLE]);
    }

    #[test]
    fn rig_save_load_roundtrip() {
        let dir = std::env::temp_dir().join(format!("icosweep_rig_{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let r = nalgebra::Rotation3::from_euler_angles(0.0, 0.0, 1.2);
        let cam = RigCamera {
            name: "front".into(),
            intrinsics: equi(),
            extrinsics: Extrinsics::new(*r.matrix(), Vector3::new(0.1, 0.0, -0.2)).unwrap(),
        };
        let rig = CameraRig::new(vec![cam.clone(), cam]);
        let path = dir.join("test.rig");
        save_rig(&rig, &path).unwrap();
        let loaded = load_rig(&path).unwrap();
        assert_eq!(loaded.len(), 2);
        assert!((loaded.cameras[0].extrinsics.t_cw() - Vector3::new(0.1, 0.0, -0.2)).norm() < 1e-12);
        assert!((loaded.center() - rig.center()).norm() < 1e-12);
        std::fs::remove_dir_all(&dir).ok();
    }
}

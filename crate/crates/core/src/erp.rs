//! Equirectangular visualization export: per-pixel barycentric lookup of an
//! icosphere depth-index map, plus an inverse-depth colormap.

use nalgebra::Vector3;

use crate::camera::Image;
use crate::icosphere::Icosphere;
use crate::regress::index_to_depth;

/// Unit direction of the latitude/longitude pair (degrees). Latitude +90 is
/// the north pole (+z).
pub fn latlon_dir(lat_deg: f64, lon_deg: f64) -> Vector3<f64> {
    let lat = lat_deg.to_radians();
    let lon = lon_deg.to_radians();
    Vector3::new(lat.cos() * lon.cos(), lat.cos() * lon.sin(), lat.sin())
}

/// Direction of the center of ERP pixel (x, y): longitude spans −180..180
/// left to right, latitude +90..−90 top to bottom.
pub fn erp_pixel_dir(x: usize, y: usize, width: usize, height: usize) -> Vector3<f64> {
    let lon = ((x as f64 + 0.5) / width as f64) * 360.0 - 180.0;
    let lat = 90.0 - ((y as f64 + 0.5) / height as f64) * 180.0;
    latlon_dir(lat, lon)
}

/// Resamples a per-vertex scalar map into an ERP grid by barycentric blending
/// on the located face.
pub fn erp_resample(values: &[f64], ico: &Icosphere, width: usize, height: usize) -> Vec<f64> {
    assert_eq!(values.len(), ico.num_vertices());
    let mut out = vec![0.0; width * height];
    use rayon::prelude::*;
    out.par_chunks_mut(width).enumerate().for_each(|(y, row)| {
        for (x, slot) in row.iter_mut().enumerate() {
            let dir = erp_pixel_dir(x, y, width, height);
            let hit = ico.locate(&dir);
            *slot = hit
                .verts
                .iter()
                .zip(hit.weights)
                .map(|(&v, w)| values[v as usize] * w)
                .sum();
        }
    });
    out
}

/// Converts an index map to meters per pixel (far-plane indices clamp to the
/// farthest representable depth).
pub fn indices_to_meters(indices: &[f64], d_min: f64, n: usize) -> Vec<f64> {
    let far = d_min * (n - 1) as f64 / 1e-6;
    indices
        .iter()
        .map(|&d| index_to_depth(d, d_min, n).unwrap_or(far).min(far))
        .collect()
}

/// Inverse-depth colormap image: nearer is warmer. Index range [1, N] maps
/// the full ramp.
pub fn colorize_indices(indices: &[f64], n: usize, width: usize, height: usize) -> Image {
    assert_eq!(indices.len(), width * height);
    let mut img = Image::new(width, height);
    for y in 0..height {
        for x in 0..width {
            let t = ((indices[y * width + x] - 1.0) / (n as f64 - 1.0)).clamp(0.0, 1.0);
            img.set_pixel(x, y, ramp(t));
        }
    }
    img
}

/// Compact jet-like ramp on [0, 1]: blue (far) through green to red (near).
fn ramp(t: f64) -> [f64; 3] {
    let r = (1.5 - (4.0 * t - 3.0).abs()).clamp(0.0, 1.0);
    let g = (1.5 - (4.0 * t - 2.0).abs()).clamp(0.0, 1.0);
    let b = (1.5 - (4.0 * t - 1.0).abs()).clamp(0.0, 1.0);
    [r, g, b]
}

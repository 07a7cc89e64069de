//! Conversions between per-vertex icosphere features and the ten-rectangle
//! crown representation, plus replicate-border padding.
//!
//! `to_crown` (Π) replicates each vertex value into every chart cell that maps
//! to it; `from_crown` (Π⁻¹) averages the duplicated cells back onto vertices,
//! which is also the only place the two rectangle families exchange
//! information. The mean uses the offset form `d₀ + Σ(dᵢ−d₀)/n` so averaging
//! equal duplicates returns the value bitwise.

use std::io::Write;
use std::path::Path;

use crate::chart::{rect_shape, Orientation, UnfoldChart};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Per-vertex features reshaped into the five rectangles of one family.
///
/// `Col` output is `[5, C, 2^(l+1)+1, 2^l+1]`, `Row` is the transposed shape.
pub fn to_crown(f: &Tensor, chart: &UnfoldChart, orientation: Orientation) -> Tensor {
    let s = f.shape();
    assert_eq!(s.len(), 2, "vertex features must be [V, C]");
    let (v, c) = (s[0], s[1]);
    assert_eq!(
        v,
        chart.num_vertices(),
        "feature level does not match chart level"
    );
    let (h, w) = grid_shape(chart.level(), orientation);
    let mut out = Tensor::zeros(&[5, c, h, w]);
    let fd = f.data();
    let od = out.data_mut();
    for rect in 0..5 {
        let g = chart.map(orientation, rect);
        for ch in 0..c {
            let plane = &mut od[(rect * c + ch) * h * w..][..h * w];
            for (cell, vid) in plane.iter_mut().zip(g.cells()) {
                *cell = fd[*vid as usize * c + ch];
            }
        }
    }
    out
}

/// Adjoint of [`to_crown`]: scatter-add cell gradients onto their vertices.
pub fn to_crown_adjoint(d: &Tensor, chart: &UnfoldChart, orientation: Orientation) -> Tensor {
    let s = d.shape();
    let c = s[1];
    let (h, w) = grid_shape(chart.level(), orientation);
    assert_eq!(s, &[5, c, h, w]);
    let mut out = Tensor::zeros(&[chart.num_vertices(), c]);
    let od = out.data_mut();
    let dd = d.data();
    for rect in 0..5 {
        let g = chart.map(orientation, rect);
        for ch in 0..c {
            let plane = &dd[(rect * c + ch) * h * w..][..h * w];
            for (cell, vid) in plane.iter().zip(g.cells()) {
                od[*vid as usize * c + ch] += cell;
            }
        }
    }
    out
}

/// Volume variant of Π: `[V, N, C]` → `[5, C, N, H, W]`, carrying the sphere
/// axis as convolution depth.
pub fn to_crown_vol(vol: &Tensor, chart: &UnfoldChart, orientation: Orientation) -> Tensor {
    let s = vol.shape();
    assert_eq!(s.len(), 3, "volume must be [V, N, C]");
    let (v, n, c) = (s[0], s[1], s[2]);
    assert_eq!(v, chart.num_vertices());
    let (h, w) = grid_shape(chart.level(), orientation);
    let mut out = Tensor::zeros(&[5, c, n, h, w]);
    let vd = vol.data();
    let od = out.data_mut();
    for rect in 0..5 {
        let g = chart.map(orientation, rect);
        for ch in 0..c {
            for sp in 0..n {
                let plane = &mut od[((rect * c + ch) * n + sp) * h * w..][..h * w];
                for (cell, vid) in plane.iter_mut().zip(g.cells()) {
                    *cell = vd[(*vid as usize * n + sp) * c + ch];
                }
            }
        }
    }
    out
}

pub fn to_crown_vol_adjoint(d: &Tensor, chart: &UnfoldChart, orientation: Orientation) -> Tensor {
    let s = d.shape();
    let (c, n) = (s[1], s[2]);
    let (h, w) = grid_shape(chart.level(), orientation);
    assert_eq!(s, &[5, c, n, h, w]);
    let mut out = Tensor::zeros(&[chart.num_vertices(), n, c]);
    let od = out.data_mut();
    let dd = d.data();
    for rect in 0..5 {
        let g = chart.map(orientation, rect);
        for ch in 0..c {
            for sp in 0..n {
                let plane = &dd[((rect * c + ch) * n + sp) * h * w..][..h * w];
                for (cell, vid) in plane.iter().zip(g.cells()) {
                    od[(*vid as usize * n + sp) * c + ch] += cell;
                }
            }
        }
    }
    out
}

/// Π⁻¹: averages every cell mapping to a vertex, over both families.
pub fn from_crown(col: &Tensor, row: &Tensor, chart: &UnfoldChart) -> Tensor {
    let c = col.shape()[1];
    check_grid_pair(col, row, chart, c, None);
    let v = chart.num_vertices();
    let mut out = Tensor::zeros(&[v, c]);
    let od = out.data_mut();
    for vid in 0..v {
        let dups = chart.duplicates(vid);
        let n = dups.len() as f64;
        for ch in 0..c {
            let first = cell_value(col, row, chart, dups[0], ch, None);
            let mut corr = 0.0;
            for cell in &dups[1..] {
                corr += cell_value(col, row, chart, *cell, ch, None) - first;
            }
            od[vid * c + ch] = first + corr / n;
        }
    }
    out
}

/// Adjoint of [`from_crown`]: each duplicate cell receives 1/n of the vertex
/// gradient.
pub fn from_crown_adjoint(d: &Tensor, chart: &UnfoldChart) -> (Tensor, Tensor) {
    let s = d.shape();
    assert_eq!(s.len(), 2);
    let (v, c) = (s[0], s[1]);
    assert_eq!(v, chart.num_vertices());
    let (h, w) = rect_shape(chart.level());
    let mut dcol = Tensor::zeros(&[5, c, h, w]);
    let mut drow = Tensor::zeros(&[5, c, w, h]);
    for vid in 0..v {
        let dups = chart.duplicates(vid);
        let inv = 1.0 / dups.len() as f64;
        for ch in 0..c {
            let g = d.data()[vid * c + ch] * inv;
            for cell in dups {
                *cell_slot(&mut dcol, &mut drow, chart, *cell, ch, None) += g;
            }
        }
    }
    (dcol, drow)
}

/// Volume variant of Π⁻¹: `[5, C, N, H, W]` pair → `[V, N, C]`.
pub fn from_crown_vol(col: &Tensor, row: &Tensor, chart: &UnfoldChart) -> Tensor {
    let c = col.shape()[1];
    let n = col.shape()[2];
    check_grid_pair(col, row, chart, c, Some(n));
    let v = chart.num_vertices();
    let mut out = Tensor::zeros(&[v, n, c]);
    let od = out.data_mut();
    for vid in 0..v {
        let dups = chart.duplicates(vid);
        let cnt = dups.len() as f64;
        for sp in 0..n {
            for ch in 0..c {
                let first = cell_value(col, row, chart, dups[0], ch, Some((sp, n)));
                let mut corr = 0.0;
                for cell in &dups[1..] {
                    corr += cell_value(col, row, chart, *cell, ch, Some((sp, n))) - first;
                }
                od[(vid * n + sp) * c + ch] = first + corr / cnt;
            }
        }
    }
    out
}

pub fn from_crown_vol_adjoint(
    d: &Tensor,
    chart: &UnfoldChart,
    col_shape: &[usize],
) -> (Tensor, Tensor) {
    let s = d.shape();
    assert_eq!(s.len(), 3);
    let (v, n, c) = (s[0], s[1], s[2]);
    assert_eq!(v, chart.num_vertices());
    assert_eq!(col_shape[1], c);
    assert_eq!(col_shape[2], n);
    let (h, w) = rect_shape(chart.level());
    let mut dcol = Tensor::zeros(&[5, c, n, h, w]);
    let mut drow = Tensor::zeros(&[5, c, n, w, h]);
    for vid in 0..v {
        let dups = chart.duplicates(vid);
        let inv = 1.0 / dups.len() as f64;
        for sp in 0..n {
            for ch in 0..c {
                let g = d.data()[(vid * n + sp) * c + ch] * inv;
                for cell in dups {
                    *cell_slot(&mut dcol, &mut drow, chart, *cell, ch, Some((sp, n))) += g;
                }
            }
        }
    }
    (dcol, drow)
}

fn grid_shape(level: usize, orientation: Orientation) -> (usize, usize) {
    let (h, w) = rect_shape(level);
    match orientation {
        Orientation::Col => (h, w),
        Orientation::Row => (w, h),
    }
}

fn check_grid_pair(col: &Tensor, row: &Tensor, chart: &UnfoldChart, c: usize, n: Option<usize>) {
    let (h, w) = rect_shape(chart.level());
    match n {
        None => {
            assert_eq!(col.shape(), &[5, c, h, w], "col grids shape mismatch");
            assert_eq!(row.shape(), &[5, c, w, h], "row grids shape mismatch");
        }
        Some(n) => {
            assert_eq!(col.shape(), &[5, c, n, h, w], "col volume shape mismatch");
            assert_eq!(row.shape(), &[5, c, n, w, h], "row volume shape mismatch");
        }
    }
}

fn cell_value(
    col: &Tensor,
    row: &Tensor,
    chart: &UnfoldChart,
    cell: crate::chart::CellRef,
    ch: usize,
    vol: Option<(usize, usize)>,
) -> f64 {
    let (t, h, w) = match cell.orientation {
        Orientation::Col => {
            let (h, w) = grid_shape(chart.level(), Orientation::Col);
            (col, h, w)
        }
        Orientation::Row => {
            let (h, w) = grid_shape(chart.level(), Orientation::Row);
            (row, h, w)
        }
    };
    let c = t.shape()[1];
    let base = match vol {
        None => (cell.rect as usize * c + ch) * h * w,
        Some((sp, n)) => ((cell.rect as usize * c + ch) * n + sp) * h * w,
    };
    t.data()[base + cell.row as usize * w + cell.col as usize]
}

fn cell_slot<'a>(
    col: &'a mut Tensor,
    row: &'a mut Tensor,
    chart: &UnfoldChart,
    cell: crate::chart::CellRef,
    ch: usize,
    vol: Option<(usize, usize)>,
) -> &'a mut f64 {
    let (t, h, w) = match cell.orientation {
        Orientation::Col => {
            let (h, w) = grid_shape(chart.level(), Orientation::Col);
            (col, h, w)
        }
        Orientation::Row => {
            let (h, w) = grid_shape(chart.level(), Orientation::Row);
            (row, h, w)
        }
    };
    let c = t.shape()[1];
    let base = match vol {
        None => (cell.rect as usize * c + ch) * h * w,
        Some((sp, n)) => ((cell.rect as usize * c + ch) * n + sp) * h * w,
    };
    &mut t.data_mut()[base + cell.row as usize * w + cell.col as usize]
}

/// Replicate-border padding of the last two dims of `[R, C, H, W]`.
pub fn pad_replicate2(t: &Tensor, margin: usize) -> Tensor {
    assert!(margin >= 1);
    let s = t.shape();
    assert_eq!(s.len(), 4);
    let (r, c, h, w) = (s[0], s[1], s[2], s[3]);
    let (hp, wp) = (h + 2 * margin, w + 2 * margin);
    let mut out = Tensor::zeros(&[r, c, hp, wp]);
    let td = t.data();
    let od = out.data_mut();
    for p in 0..r * c {
        let src = &td[p * h * w..][..h * w];
        let dst = &mut od[p * hp * wp..][..hp * wp];
        for y in 0..hp {
            let sy = y.saturating_sub(margin).min(h - 1);
            for x in 0..wp {
                let sx = x.saturating_sub(margin).min(w - 1);
                dst[y * wp + x] = src[sy * w + sx];
            }
        }
    }
    out
}

/// Adjoint of [`pad_replicate2`]: border gradients fold back onto their source
/// edge cells.
pub fn pad_replicate2_adjoint(d: &Tensor, margin: usize) -> Tensor {
    let s = d.shape();
    assert_eq!(s.len(), 4);
    let (r, c, hp, wp) = (s[0], s[1], s[2], s[3]);
    let (h, w) = (hp - 2 * margin, wp - 2 * margin);
    let mut out = Tensor::zeros(&[r, c, h, w]);
    let dd = d.data();
    let od = out.data_mut();
    for p in 0..r * c {
        let src = &dd[p * hp * wp..][..hp * wp];
        let dst = &mut od[p * h * w..][..h * w];
        for y in 0..hp {
            let sy = y.saturating_sub(margin).min(h - 1);
            for x in 0..wp {
                let sx = x.saturating_sub(margin).min(w - 1);
                dst[sy * w + sx] += src[y * wp + x];
            }
        }
    }
    out
}

/// Replicate-border padding of the last three dims of `[R, C, D, H, W]`.
pub fn pad_replicate3(t: &Tensor, margin: usize) -> Tensor {
    assert!(margin >= 1);
    let s = t.shape();
    assert_eq!(s.len(), 5);
    let (r, c, d, h, w) = (s[0], s[1], s[2], s[3], s[4]);
    let (dp, hp, wp) = (d + 2 * margin, h + 2 * margin, w + 2 * margin);
    let mut out = Tensor::zeros(&[r, c, dp, hp, wp]);
    let td = t.data();
    let od = out.data_mut();
    for p in 0..r * c {
        let src = &td[p * d * h * w..][..d * h * w];
        let dst = &mut od[p * dp * hp * wp..][..dp * hp * wp];
        for z in 0..dp {
            let sz = z.saturating_sub(margin).min(d - 1);
            for y in 0..hp {
                let sy = y.saturating_sub(margin).min(h - 1);
                for x in 0..wp {
                    let sx = x.saturating_sub(margin).min(w - 1);
                    dst[(z * hp + y) * wp + x] = src[(sz * h + sy) * w + sx];
                }
            }
        }
    }
    out
}

pub fn pad_replicate3_adjoint(d: &Tensor, margin: usize) -> Tensor {
    let s = d.shape();
    assert_eq!(s.len(), 5);
    let (r, c, dp, hp, wp) = (s[0], s[1], s[2], s[3], s[4]);
    let (dd_, h, w) = (dp - 2 * margin, hp - 2 * margin, wp - 2 * margin);
    let mut out = Tensor::zeros(&[r, c, dd_, h, w]);
    let sd = d.data();
    let od = out.data_mut();
    for p in 0..r * c {
        let src = &sd[p * dp * hp * wp..][..dp * hp * wp];
        let dst = &mut od[p * dd_ * h * w..][..dd_ * h * w];
        for z in 0..dp {
            let sz = z.saturating_sub(margin).min(dd_ - 1);
            for y in 0..hp {
                let sy = y.saturating_sub(margin).min(h - 1);
                for x in 0..wp {
                    let sx = x.saturating_sub(margin).min(w - 1);
                    dst[(sz * h + sy) * w + sx] += src[(z * hp + y) * wp + x];
                }
            }
        }
    }
    out
}

/// Dumps one channel of a crown grid pair as ten binary PGM images
/// (`col0..col4.pgm`, `row0..row4.pgm`), normalized to the channel's range.
pub fn dump_crown_pgm(col: &Tensor, row: &Tensor, channel: usize, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (name, t) in [("col", col), ("row", row)] {
        let s = t.shape();
        let (c, h, w) = (s[1], s[2], s[3]);
        assert!(channel < c, "channel out of range");
        for rect in 0..5 {
            let plane = &t.data()[(rect * c + channel) * h * w..][..h * w];
            let lo = plane.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = plane.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let scale = if hi > lo { 255.0 / (hi - lo) } else { 0.0 };
            let path = dir.join(format!("{name}{rect}.pgm"));
            let mut file =
                std::io::BufWriter::new(std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?);
            write!(file, "P5\n{w} {h}\n255\n").map_err(|e| Error::io(&path, e))?;
            let bytes: Vec<u8> = plane
                .iter()
                .map(|v| ((v - lo) * scale).round().clamp(0.0, 255.0) as u8)
                .collect();
            file.write_all(&bytes).map_err(|e| Error::io(&path, e))?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chart::build_chart;
    use crate::icosphere::build_icosphere;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn random_features(v: usize, c: usize, seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::from_vec(
            &[v, c],
            (0..v * c).map(|_| rng.gen::<f64>() * 4.0 - 2.0).collect(),
        )
    }

    #[test]
    fn to_crown_places_vertex_ids() {
        let ico = build_icosphere(2).unwrap();
        let chart = build_chart(&ico);
        let f = Tensor::from_vec(
            &[162, 1],
            (0..162).map(|i| i as f64).collect(),
        );
        for orientation in [Orientation::Col, Orientation::Row] {
            let g = to_crown(&f, &chart, orientation);
            let s = g.shape();
            let (h, w) = (s[2], s[3]);
            for rect in 0..5 {
                let m = chart.map(orientation, rect);
                for y in 0..h {
                    for x in 0..w {
                        assert_eq!(
                            g.data()[(rect * h * w) + y * w + x],
                            m.at(y, x) as f64
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn round_trip_is_bitwise_identity() {
        for level in 2..=5 {
            let ico = build_icosphere(level).unwrap();
            let chart = build_chart(&ico);
            let f = random_features(chart.num_vertices(), 3, level as u64);
            let col = to_crown(&f, &chart, Orientation::Col);
            let row = to_crown(&f, &chart, Orientation::Row);
            let back = from_crown(&col, &row, &chart);
            assert_eq!(back, f, "round trip not exact at level {level}");
        }
    }

    #[test]
    fn from_crown_matches_naive_duplicate_scan() {
        let ico = build_icosphere(3).unwrap();
        let chart = build_chart(&ico);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (h, w) = rect_shape(3);
        let c = 2;
        let col = Tensor::from_vec(
            &[5, c, h, w],
            (0..5 * c * h * w).map(|_| rng.gen::<f64>()).collect(),
        );
        let row = Tensor::from_vec(
            &[5, c, w, h],
            (0..5 * c * h * w).map(|_| rng.gen::<f64>()).collect(),
        );
        let f = from_crown(&col, &row, &chart);
        for v in 0..chart.num_vertices() {
            let dups = chart.duplicates(v);
            for ch in 0..c {
                let naive: f64 = dups
                    .iter()
                    .map(|cell| cell_value(&col, &row, &chart, *cell, ch, None))
                    .sum::<f64>()
                    / dups.len() as f64;
                assert!((f.data()[v * c + ch] - naive).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn pole_mean_of_one_to_ten() {
        let ico = build_icosphere(2).unwrap();
        let chart = build_chart(&ico);
        let (h, w) = rect_shape(2);
        let mut col = Tensor::zeros(&[5, 1, h, w]);
        let mut row = Tensor::zeros(&[5, 1, w, h]);
        let dups = chart.duplicates(crate::icosphere::NORTH_POLE).to_vec();
        assert_eq!(dups.len(), 10);
        for (i, cell) in dups.iter().enumerate() {
            *cell_slot(&mut col, &mut row, &chart, *cell, 0, None) = (i + 1) as f64;
        }
        let f = from_crown(&col, &row, &chart);
        assert!((f.data()[crate::icosphere::NORTH_POLE] - 5.5).abs() < 1e-12);
    }

    #[test]
    fn constant_field_stays_constant() {
        let ico = build_icosphere(2).unwrap();
        let chart = build_chart(&ico);
        let f = Tensor::filled(&[162, 2], 3.25);
        let col = to_crown(&f, &chart, Orientation::Col);
        let row = to_crown(&f, &chart, Orientation::Row);
        assert!(col.data().iter().all(|&x| x == 3.25));
        assert!(row.data().iter().all(|&x| x == 3.25));
        let back = from_crown(&col, &row, &chart);
        assert!(back.data().iter().all(|&x| x == 3.25));
    }

    #[test]
    fn resync_equalizes_duplicates() {
        // After Π⁻¹∘Π the duplicated cells of any grids hold identical values.
        let ico = build_icosphere(2).unwrap();
        let chart = build_chart(&ico);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (h, w) = rect_shape(2);
        let col0 = Tensor::from_vec(
            &[5, 1, h, w],
            (0..5 * h * w).map(|_| rng.gen::<f64>()).collect(),
        );
        let row0 = Tensor::from_vec(
            &[5, 1, w, h],
            (0..5 * h * w).map(|_| rng.gen::<f64>()).collect(),
        );
        let f = from_crown(&col0, &row0, &chart);
        let col = to_crown(&f, &chart, Orientation::Col);
        let row = to_crown(&f, &chart, Orientation::Row);
        for v in 0..chart.num_vertices() {
            let dups = chart.duplicates(v);
            let first = cell_value(&col, &row, &chart, dups[0], 0, None);
            for cell in dups {
                assert_eq!(cell_value(&col, &row, &chart, *cell, 0, None), first);
            }
        }
    }

    #[test]
    fn both_maps_are_linear() {
        let ico = build_icosphere(2).unwrap();
        let chart = build_chart(&ico);
        let f1 = random_features(162, 2, 1);
        let f2 = random_features(162, 2, 2);
        let (a, b) = (0.7, -1.3);
        let mut combo = f1.clone();
        for (x, y) in combo.data_mut().iter_mut().zip(f2.data()) {
            *x = a * *x + b * y;
        }
        for orientation in [Orientation::Col, Orientation::Row] {
            let g1 = to_crown(&f1, &chart, orientation);
            let g2 = to_crown(&f2, &chart, orientation);
            let gc = to_crown(&combo, &chart, orientation);
            for i in 0..gc.numel() {
                assert!((gc.data()[i] - (a * g1.data()[i] + b * g2.data()[i])).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn volume_round_trip() {
        let ico = build_icosphere(2).unwrap();
        let chart = build_chart(&ico);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (v, n, c) = (162, 4, 3);
        let vol = Tensor::from_vec(
            &[v, n, c],
            (0..v * n * c).map(|_| rng.gen::<f64>()).collect(),
        );
        let col = to_crown_vol(&vol, &chart, Orientation::Col);
        let row = to_crown_vol(&vol, &chart, Orientation::Row);
        let back = from_crown_vol(&col, &row, &chart);
        assert_eq!(back, vol);
    }

    #[test]
    fn pad_single_cell() {
        let t = Tensor::from_vec(&[1, 1, 1, 1], vec![7.5]);
        let p = pad_replicate2(&t, 1);
        assert_eq!(p.shape(), &[1, 1, 3, 3]);
        assert!(p.data().iter().all(|&x| x == 7.5));
    }

    #[test]
    fn pad_ramp_borders_replicate_edges() {
        let t = Tensor::from_vec(&[1, 1, 2, 3], vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0]);
        let p = pad_replicate2(&t, 1);
        let expect = [
            0.0, 0.0, 1.0, 2.0, 2.0, //
            0.0, 0.0, 1.0, 2.0, 2.0, //
            3.0, 3.0, 4.0, 5.0, 5.0, //
            3.0, 3.0, 4.0, 5.0, 5.0,
        ];
        assert_eq!(p.data(), &expect);
    }

    #[test]
    fn pad_adjoint_is_transpose() {
        // <pad(x), y> == <x, pad_adjoint(y)> for random x, y.
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = Tensor::from_vec(&[1, 2, 3, 4], (0..24).map(|_| rng.gen::<f64>()).collect());
        let y = Tensor::from_vec(
            &[1, 2, 5, 6],
            (0..60).map(|_| rng.gen::<f64>()).collect(),
        );
        let px = pad_replicate2(&x, 1);
        let ay = pad_replicate2_adjoint(&y, 1);
        let lhs: f64 = px.data().iter().zip(y.data()).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.data().iter().zip(ay.data()).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10);
    }

    #[test]
    fn pad3_constant_volume() {
        let t = Tensor::filled(&[1, 1, 2, 2, 2], 1.5);
        let p = pad_replicate3(&t, 1);
        assert_eq!(p.shape(), &[1, 1, 4, 4, 4]);
        assert!(p.data().iter().all(|&x| x == 1.5));
    }
}

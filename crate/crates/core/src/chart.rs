//! The unfolding chart: ten rectangles of vertex indices (five per direction)
//! that flatten the icosphere for ordinary 2D convolution.
//!
//! Each rectangle covers one four-face strip of the icosahedron running pole
//! to pole; the two families of five lean opposite ways across the equator, so
//! a feature split across rectangle borders in one family is interior in the
//! other. Level-(k+1) charts are the 2D midpoint refinement of level-k charts,
//! mirroring 3D edge-midpoint subdivision, which makes cell (2r, 2c) at level
//! k+1 land on the same vertex as cell (r, c) at level k.

use std::io::Write;

use crate::icosphere::{Icosphere, NORTH_POLE, SOUTH_POLE};

/// Which rectangle family a cell belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Orientation {
    /// Vertical rectangles: the longer axis is the row axis.
    Col,
    /// Horizontal rectangles: the longer axis is the column axis.
    Row,
}

/// One rectangle of vertex indices, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Grid {
    rows: usize,
    cols: usize,
    idx: Vec<u32>,
}

impl Grid {
    fn from_rows(rows: Vec<Vec<u32>>) -> Grid {
        let r = rows.len();
        let c = rows[0].len();
        let mut idx = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c);
            idx.extend(row);
        }
        Grid { rows: r, cols: c, idx }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn at(&self, row: usize, col: usize) -> u32 {
        self.idx[row * self.cols + col]
    }

    pub fn cells(&self) -> &[u32] {
        &self.idx
    }

    /// Midpoint refinement: even cells keep their vertex, odd cells take the
    /// subdivision midpoint of the corresponding level-k edge (the quad
    /// diagonal for odd-odd cells).
    fn refine(&self, ico: &Icosphere, from_level: usize) -> Grid {
        let mid = |a: u32, b: u32| -> u32 {
            ico.edge_midpoint(from_level, a, b)
                .expect("chart quad edges must be mesh edges")
        };
        let rows = self.rows * 2 - 1;
        let cols = self.cols * 2 - 1;
        let mut idx = vec![0u32; rows * cols];
        for r in 0..rows {
            for c in 0..cols {
                let v = match (r % 2, c % 2) {
                    (0, 0) => self.at(r / 2, c / 2),
                    (1, 0) => mid(self.at(r / 2, c / 2), self.at(r / 2 + 1, c / 2)),
                    (0, 1) => mid(self.at(r / 2, c / 2), self.at(r / 2, c / 2 + 1)),
                    _ => mid(self.at(r / 2 + 1, c / 2), self.at(r / 2, c / 2 + 1)),
                };
                idx[r * cols + c] = v;
            }
        }
        Grid { rows, cols, idx }
    }
}

/// Address of one chart cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CellRef {
    pub orientation: Orientation,
    pub rect: u8,
    pub row: u32,
    pub col: u32,
}

/// The full ten-rectangle chart at one level, with the reverse map from each
/// vertex to every cell that carries it.
pub struct UnfoldChart {
    level: usize,
    col_maps: Vec<Grid>,
    row_maps: Vec<Grid>,
    duplicates: Vec<Vec<CellRef>>,
}

/// Rectangle shape of the `Col` family at `level`: (2^(l+1)+1, 2^l+1).
pub fn rect_shape(level: usize) -> (usize, usize) {
    ((1 << (level + 1)) + 1, (1 << level) + 1)
}

/// Builds the chart for an icosphere, at the icosphere's own level.
pub fn build_chart(ico: &Icosphere) -> UnfoldChart {
    build_chart_at(ico, ico.level())
}

/// Builds the chart at any level `k ≤ ico.level()` (the subdivision hierarchy
/// carries every intermediate level).
pub fn build_chart_at(ico: &Icosphere, level: usize) -> UnfoldChart {
    assert!(level <= ico.level(), "chart level exceeds icosphere level");
    let n = NORTH_POLE as u32;
    let s = SOUTH_POLE as u32;
    let u = |r: u32| 1 + (r % 5);
    let l = |r: u32| 6 + (r % 5);

    let mut col_maps = Vec::with_capacity(5);
    let mut row_maps = Vec::with_capacity(5);
    for r in 0..5u32 {
        // Strip leaning one way: N / u_r on top, S in the lower-right corner.
        col_maps.push(Grid::from_rows(vec![
            vec![n, u(r)],
            vec![u(r + 1), l(r)],
            vec![l(r + 1), s],
        ]));
        // The mirrored strip family, long axis horizontal.
        row_maps.push(Grid::from_rows(vec![
            vec![n, u(r), l(r + 4)],
            vec![u(r + 1), l(r), s],
        ]));
    }
    for k in 0..level {
        for g in col_maps.iter_mut().chain(row_maps.iter_mut()) {
            *g = g.refine(ico, k);
        }
    }

    let (rr, rc) = rect_shape(level);
    for g in &col_maps {
        assert_eq!((g.rows(), g.cols()), (rr, rc));
    }
    for g in &row_maps {
        assert_eq!((g.rows(), g.cols()), (rc, rr));
    }

    let mut duplicates = vec![Vec::new(); crate::icosphere::vertex_count(level)];
    for (orientation, maps) in [(Orientation::Col, &col_maps), (Orientation::Row, &row_maps)] {
        for (rect, g) in maps.iter().enumerate() {
            for row in 0..g.rows() {
                for col in 0..g.cols() {
                    duplicates[g.at(row, col) as usize].push(CellRef {
                        orientation,
                        rect: rect as u8,
                        row: row as u32,
                        col: col as u32,
                    });
                }
            }
        }
    }
    assert!(
        duplicates.iter().all(|d| d.len() >= 2),
        "every vertex must appear in at least one rectangle per family"
    );

    UnfoldChart {
        level,
        col_maps,
        row_maps,
        duplicates,
    }
}

impl UnfoldChart {
    pub fn level(&self) -> usize {
        self.level
    }

    pub fn num_vertices(&self) -> usize {
        self.duplicates.len()
    }

    pub fn col_map(&self, rect: usize) -> &Grid {
        &self.col_maps[rect]
    }

    pub fn row_map(&self, rect: usize) -> &Grid {
        &self.row_maps[rect]
    }

    pub fn map(&self, orientation: Orientation, rect: usize) -> &Grid {
        match orientation {
            Orientation::Col => &self.col_maps[rect],
            Orientation::Row => &self.row_maps[rect],
        }
    }

    /// Every cell carrying vertex `v`.
    pub fn duplicates(&self, v: usize) -> &[CellRef] {
        &self.duplicates[v]
    }

    /// Total number of chart cells across all ten rectangles.
    pub fn total_cells(&self) -> usize {
        let (rr, rc) = rect_shape(self.level);
        10 * rr * rc
    }

    /// Dumps the chart as CSV: `orientation,rect,row,col,vertex_id`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "orientation,rect,row,col,vertex_id")?;
        for (name, maps) in [("col", &self.col_maps), ("row", &self.row_maps)] {
            for (rect, g) in maps.iter().enumerate() {
                for row in 0..g.rows() {
                    for col in 0..g.cols() {
                        writeln!(out, "{name},{rect},{row},{col},{}", g.at(row, col))?;
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::icosphere::build_icosphere;

    #[test]
    fn rect_shapes() {
        let ico = build_icosphere(2).unwrap();
        let chart = build_chart(&ico);
        for r in 0..5 {
            assert_eq!((chart.col_map(r).rows(), chart.col_map(r).cols()), (9, 5));
            assert_eq!((chart.row_map(r).rows(), chart.row_map(r).cols()), (5, 9));
        }
        assert_eq!(rect_shape(5), (65, 33));
    }

    #[test]
    fn covers_every_vertex_in_both_families() {
        let ico = build_icosphere(3).unwrap();
        let chart = build_chart(&ico);
        for v in 0..chart.num_vertices() {
            let dups = chart.duplicates(v);
            assert!(dups.iter().any(|c| c.orientation == Orientation::Col));
            assert!(dups.iter().any(|c| c.orientation == Orientation::Row));
        }
    }

    #[test]
    fn cell_total_and_unique_vertices_level2() {
        let ico = build_icosphere(2).unwrap();
        let chart = build_chart(&ico);
        assert_eq!(chart.total_cells(), 450);
        let total: usize = (0..chart.num_vertices()).map(|v| chart.duplicates(v).len()).sum();
        assert_eq!(total, 450);
        assert_eq!(chart.num_vertices(), 162);
    }

    #[test]
    fn poles_have_ten_duplicates() {
        let ico = build_icosphere(3).unwrap();
        let chart = build_chart(&ico);
        assert_eq!(chart.duplicates(NORTH_POLE).len(), 10);
        assert_eq!(chart.duplicates(SOUTH_POLE).len(), 10);
        for c in chart.duplicates(NORTH_POLE) {
            assert_eq!((c.row, c.col), (0, 0));
        }
    }

    #[test]
    fn interior_cells_unique_within_family() {
        let ico = build_icosphere(3).unwrap();
        let chart = build_chart(&ico);
        for family in [Orientation::Col, Orientation::Row] {
            let mut seen = vec![0usize; chart.num_vertices()];
            for rect in 0..5 {
                let g = chart.map(family, rect);
                for row in 0..g.rows() {
                    for col in 0..g.cols() {
                        seen[g.at(row, col) as usize] += 1;
                    }
                }
            }
            for rect in 0..5 {
                let g = chart.map(family, rect);
                for row in 1..g.rows() - 1 {
                    for col in 1..g.cols() - 1 {
                        let v = g.at(row, col) as usize;
                        assert_eq!(seen[v], 1, "interior vertex {v} duplicated within family");
                    }
                }
            }
        }
    }

    #[test]
    fn even_cells_align_with_coarser_chart() {
        let ico = build_icosphere(4).unwrap();
        for level in 1..=4 {
            let fine = build_chart_at(&ico, level);
            let coarse = build_chart_at(&ico, level - 1);
            for rect in 0..5 {
                for family in [Orientation::Col, Orientation::Row] {
                    let f = fine.map(family, rect);
                    let c = coarse.map(family, rect);
                    for row in 0..c.rows() {
                        for col in 0..c.cols() {
                            assert_eq!(f.at(2 * row, 2 * col), c.at(row, col));
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn csv_dump_lists_all_cells() {
        let ico = build_icosphere(1).unwrap();
        let chart = build_chart(&ico);
        let mut buf = Vec::new();
        chart.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1 + chart.total_cells());
        assert!(text.starts_with("orientation,rect,row,col,vertex_id"));
    }
}

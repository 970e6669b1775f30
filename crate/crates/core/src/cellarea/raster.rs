use crate::geometry::Rect;

use super::{CellArea, CellAreaError, CellDesign};

/// Grid lines of an equidistant raster over a bounding box. The last row and
/// column are clipped to the box.
#[derive(Debug, Clone)]
pub(super) struct RasterGrid {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
}

impl RasterGrid {
    pub fn new(bbox: &Rect, cell_size: f64) -> Result<Self, CellAreaError> {
        if !(cell_size > 0.0) || !cell_size.is_finite() {
            return Err(CellAreaError::InvalidCellSize(cell_size));
        }
        if bbox.is_degenerate() {
            return Err(CellAreaError::DegenerateRegion);
        }
        Ok(Self {
            xs: grid_lines(bbox.min.x, bbox.max.x, cell_size),
            ys: grid_lines(bbox.min.y, bbox.max.y, cell_size),
        })
    }

    pub fn rows(&self) -> usize {
        self.ys.len() - 1
    }

    pub fn cols(&self) -> usize {
        self.xs.len() - 1
    }

    pub fn len(&self) -> usize {
        self.rows() * self.cols()
    }

    pub fn rect(&self, row: usize, col: usize) -> Rect {
        Rect::new(self.xs[col], self.ys[row], self.xs[col + 1], self.ys[row + 1])
    }

    /// Row-major index of the cell containing `(x, y)`; points on an inner grid
    /// line belong to the cell above/right of it.
    pub fn locate(&self, x: f64, y: f64) -> Option<usize> {
        let col = locate_1d(&self.xs, x)?;
        let row = locate_1d(&self.ys, y)?;
        Some(row * self.cols() + col)
    }
}

fn grid_lines(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    // tolerate rounding so that an exact multiple does not spawn a sliver cell
    let n = (((hi - lo) / step) - 1e-9).ceil().max(1.0) as usize;
    let mut lines: Vec<f64> = (0..n).map(|k| lo + k as f64 * step).collect();
    lines.push(hi);
    lines
}

fn locate_1d(lines: &[f64], v: f64) -> Option<usize> {
    let (first, last) = (lines[0], *lines.last()?);
    if v < first || v > last {
        return None;
    }
    let idx = lines.partition_point(|&l| l <= v);
    Some(idx.saturating_sub(1).min(lines.len() - 2))
}

/// Tiles `region` with axis-aligned square cells of side `cell_size`.
///
/// Cells are numbered row-major from the lower-left corner with ids
/// `r{row}_c{col}`.
pub fn rasterize(region: &Rect, cell_size: f64) -> Result<Vec<CellArea>, CellAreaError> {
    let grid = RasterGrid::new(region, cell_size)?;
    let mut cells = Vec::with_capacity(grid.len());
    for row in 0..grid.rows() {
        for col in 0..grid.cols() {
            let rect = grid.rect(row, col);
            cells.push(CellArea::new(
                format!("r{row}_c{col}"),
                rect.to_polygon(),
                CellDesign::Raster,
            )?);
        }
    }
    Ok(cells)
}

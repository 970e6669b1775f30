//! Floating cells: cell borders that follow homogeneous structures.
//!
//! A raster seed is grown into regions greedily. Seeds are visited in
//! row-major order; each unassigned seed starts a region that absorbs
//! 4-adjacent unassigned seeds (breadth first, neighbours ordered
//! below/left/right/above) as long as the coefficient of variation of the
//! attribute over the region's seeds stays within the threshold. A threshold of
//! zero disables merging.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::geometry::{Point, Polygon, Rect};

use super::raster::RasterGrid;
use super::{CellArea, CellAreaError, CellDesign, FactorBasis, KeyFactor, PointFeature};

/// How feature attributes are aggregated into a seed value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    /// Attribute sum per m² of seed area; empty seeds have density zero.
    #[default]
    Density,
    /// Mean attribute of the features in the seed; empty seeds carry no value
    /// and join whichever region reaches them first.
    Mean,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FloatingOptions {
    pub cell_size: f64,
    /// Maximum coefficient of variation within a merged cell.
    pub threshold: f64,
    #[serde(default)]
    pub aggregation: Aggregation,
}

#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    n: usize,
    sum: f64,
    sum_sq: f64,
}

impl Moments {
    fn with(mut self, v: Option<f64>) -> Self {
        if let Some(v) = v {
            self.n += 1;
            self.sum += v;
            self.sum_sq += v * v;
        }
        self
    }

    fn cv(&self) -> f64 {
        if self.n == 0 {
            return 0.0;
        }
        let n = self.n as f64;
        let mean = self.sum / n;
        let var = (self.sum_sq / n - mean * mean).max(0.0);
        if mean == 0.0 {
            return if var == 0.0 { 0.0 } else { f64::INFINITY };
        }
        var.sqrt() / mean.abs()
    }
}

pub fn floating_cells(
    region: &Rect,
    features: &[PointFeature],
    attribute: &str,
    options: &FloatingOptions,
) -> Result<Vec<CellArea>, CellAreaError> {
    if let Some(_missing) = features.iter().find(|f| !f.attributes.contains_key(attribute)) {
        return Err(CellAreaError::UnknownAttribute(attribute.to_string()));
    }
    if !(options.threshold >= 0.0) {
        return Err(CellAreaError::InvalidConcept(format!(
            "homogeneity threshold {} must be non-negative",
            options.threshold
        )));
    }
    let grid = RasterGrid::new(region, options.cell_size)?;
    let (rows, cols) = (grid.rows(), grid.cols());
    let n = grid.len();

    let mut sums = vec![0.0; n];
    let mut counts = vec![0usize; n];
    for f in features {
        if let Some(idx) = grid.locate(f.position.x, f.position.y) {
            sums[idx] += f.attributes[attribute];
            counts[idx] += 1;
        }
    }
    let seed_value: Vec<Option<f64>> = (0..n)
        .map(|i| match options.aggregation {
            Aggregation::Density => Some(sums[i] / grid.rect(i / cols, i % cols).area()),
            Aggregation::Mean => (counts[i] > 0).then(|| sums[i] / counts[i] as f64),
        })
        .collect();

    let mut region_of: Vec<Option<usize>> = vec![None; n];
    let mut regions: Vec<Vec<usize>> = Vec::new();
    for start in 0..n {
        if region_of[start].is_some() {
            continue;
        }
        let id = regions.len();
        region_of[start] = Some(id);
        let mut members = vec![start];
        let mut moments = Moments::default().with(seed_value[start]);
        let mut queue = VecDeque::from([start]);
        while let Some(cur) = queue.pop_front() {
            if options.threshold <= 0.0 {
                break;
            }
            let (r, c) = (cur / cols, cur % cols);
            let mut neighbours = Vec::with_capacity(4);
            if r > 0 {
                neighbours.push(cur - cols);
            }
            if c > 0 {
                neighbours.push(cur - 1);
            }
            if c + 1 < cols {
                neighbours.push(cur + 1);
            }
            if r + 1 < rows {
                neighbours.push(cur + cols);
            }
            for nb in neighbours {
                if region_of[nb].is_some() {
                    continue;
                }
                let candidate = moments.with(seed_value[nb]);
                if candidate.cv() <= options.threshold {
                    moments = candidate;
                    region_of[nb] = Some(id);
                    members.push(nb);
                    queue.push_back(nb);
                }
            }
        }
        regions.push(members);
    }

    regions
        .iter()
        .enumerate()
        .map(|(k, members)| {
            let geometry = region_polygon(&grid, members);
            let area = geometry.area();
            let mut cell = CellArea {
                id: format!("f{k}"),
                geometry,
                design: CellDesign::Floating,
                key_factors: BTreeMap::new(),
                annual_demand_kwh: BTreeMap::new(),
            };
            let total: f64 = members.iter().map(|&i| sums[i]).sum();
            let count: usize = members.iter().map(|&i| counts[i]).sum();
            let aggregated = match options.aggregation {
                Aggregation::Density => KeyFactor::ratio(
                    attribute,
                    total,
                    area,
                    super::factor::BASE_AREA,
                    "1/m²",
                    FactorBasis::PerArea,
                ),
                Aggregation::Mean => KeyFactor::ratio(
                    attribute,
                    total,
                    count as f64,
                    "feature_count",
                    "",
                    FactorBasis::Absolute,
                ),
            };
            cell.key_factors.insert(attribute.to_string(), aggregated);
            cell.key_factors.insert(
                "seed_cells".into(),
                KeyFactor::defined("seed_cells", members.len() as f64, "", FactorBasis::Absolute),
            );
            cell.validate()?;
            Ok(cell)
        })
        .collect()
}

/// Traces the outline of a set of raster cells into an exterior ring and holes.
fn region_polygon(grid: &RasterGrid, members: &[usize]) -> Polygon {
    let cols = grid.cols();
    let rows = grid.rows();
    let inside: std::collections::HashSet<usize> = members.iter().copied().collect();
    let has = |r: isize, c: isize| {
        r >= 0
            && c >= 0
            && (r as usize) < rows
            && (c as usize) < cols
            && inside.contains(&(r as usize * cols + c as usize))
    };

    // directed boundary edges on lattice vertices (col, row), interior on the left
    // direction codes: 0 east, 1 north, 2 west, 3 south
    let mut outgoing: BTreeMap<(usize, usize), Vec<((usize, usize), u8)>> = BTreeMap::new();
    for &m in members {
        let (r, c) = (m / cols, m % cols);
        let (ri, ci) = (r as isize, c as isize);
        if !has(ri - 1, ci) {
            outgoing.entry((c, r)).or_default().push(((c + 1, r), 0));
        }
        if !has(ri, ci + 1) {
            outgoing.entry((c + 1, r)).or_default().push(((c + 1, r + 1), 1));
        }
        if !has(ri + 1, ci) {
            outgoing.entry((c + 1, r + 1)).or_default().push(((c, r + 1), 2));
        }
        if !has(ri, ci - 1) {
            outgoing.entry((c, r + 1)).or_default().push(((c, r), 3));
        }
    }

    let next_edge = |v: (usize, usize), incoming: u8| -> ((usize, usize), u8) {
        let options = &outgoing[&v];
        // prefer the leftmost turn so that rings pinched at a vertex separate
        for turn in [1u8, 0, 3] {
            let want = (incoming + turn) % 4;
            if let Some(&e) = options.iter().find(|e| e.1 == want) {
                return e;
            }
        }
        options[0]
    };

    let mut used: std::collections::HashSet<((usize, usize), (usize, usize))> = Default::default();
    let mut rings: Vec<Vec<Point>> = Vec::new();
    for (&start, edges) in &outgoing {
        for &(first_end, first_dir) in edges {
            if used.contains(&(start, first_end)) {
                continue;
            }
            let mut lattice = vec![start];
            let mut dirs = vec![first_dir];
            used.insert((start, first_end));
            let (mut v, mut d) = (first_end, first_dir);
            loop {
                let (to, nd) = next_edge(v, d);
                if v == start && to == first_end {
                    break;
                }
                lattice.push(v);
                dirs.push(nd);
                used.insert((v, to));
                v = to;
                d = nd;
            }
            // keep only corners
            let k = lattice.len();
            let ring: Vec<Point> = (0..k)
                .filter(|&i| dirs[i] != dirs[(i + k - 1) % k])
                .map(|i| Point::new(grid.xs[lattice[i].0], grid.ys[lattice[i].1]))
                .collect();
            rings.push(ring);
        }
    }

    let mut exterior: Option<Vec<Point>> = None;
    let mut holes = Vec::new();
    for ring in rings {
        if crate::geometry::ring_signed_area(&ring) > 0.0 {
            debug_assert!(exterior.is_none(), "4-connected region with two shells");
            match &exterior {
                Some(e)
                    if crate::geometry::ring_signed_area(e)
                        >= crate::geometry::ring_signed_area(&ring) => {}
                _ => exterior = Some(ring),
            }
        } else {
            holes.push(ring);
        }
    }
    Polygon::with_holes(exterior.unwrap_or_default(), holes)
}

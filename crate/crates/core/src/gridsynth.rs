//! Distribution-grid topology from building footprints and street polylines.
//!
//! Houses sit at their footprint centroids and are connected to the nearest
//! point on any street. Lines then run along the streets: street vertices,
//! street crossings and connection points become nodes, and the street
//! segments between consecutive nodes become edges. Street-side points closer
//! than the merge tolerance share one node.

use std::collections::{BTreeSet, HashMap};

use petgraph::graph::UnGraph;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Point, Segment, SegmentIntersection};
use crate::heatdemand::Building;

pub const DEFAULT_MERGE_EPSILON_M: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GridSynthError {
    #[error("footprint of building `{0}` has zero area")]
    DegenerateFootprint(String),
    #[error("buildings need at least one street to connect to")]
    NoStreets,
    #[error("street `{id}` is invalid: {reason}")]
    InvalidStreet { id: String, reason: String },
    #[error("merge tolerance {0} must be positive")]
    InvalidEpsilon(f64),
}

impl GridSynthError {
    pub fn code(&self) -> &'static str {
        match self {
            GridSynthError::DegenerateFootprint(_) => "DegenerateFootprint",
            GridSynthError::NoStreets => "NoStreets",
            GridSynthError::InvalidStreet { .. } => "InvalidStreet",
            GridSynthError::InvalidEpsilon(_) => "InvalidEpsilon",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Street {
    pub id: String,
    pub points: Vec<Point>,
}

impl Street {
    pub fn segments(&self) -> impl Iterator<Item = Segment> + '_ {
        self.points.windows(2).map(|w| Segment::new(w[0], w[1]))
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct StreetNetwork {
    pub streets: Vec<Street>,
}

impl StreetNetwork {
    pub fn new(streets: Vec<Street>) -> Result<Self, GridSynthError> {
        let net = Self { streets };
        net.validate()?;
        Ok(net)
    }

    pub fn validate(&self) -> Result<(), GridSynthError> {
        let mut ids = BTreeSet::new();
        for s in &self.streets {
            let bad = |reason: &str| GridSynthError::InvalidStreet {
                id: s.id.clone(),
                reason: reason.to_string(),
            };
            if !ids.insert(s.id.as_str()) {
                return Err(bad("duplicate id"));
            }
            if s.points.len() < 2 {
                return Err(bad("fewer than 2 points"));
            }
            if s.points.iter().any(|p| !p.x.is_finite() || !p.y.is_finite()) {
                return Err(bad("non-finite coordinate"));
            }
            if s.segments().any(|seg| seg.length() == 0.0) {
                return Err(bad("zero-length segment"));
            }
        }
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.streets.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    House,
    Connection,
    Street,
    Intersection,
}

impl NodeKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            NodeKind::House => "house",
            NodeKind::Connection => "connection",
            NodeKind::Street => "street",
            NodeKind::Intersection => "intersection",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeKind {
    Service,
    Street,
}

impl EdgeKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            EdgeKind::Service => "service",
            EdgeKind::Street => "street",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthNode {
    pub id: usize,
    pub position: Point,
    pub kind: NodeKind,
    /// Building served by a house node.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub building_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthEdge {
    pub id: usize,
    pub from: usize,
    pub to: usize,
    pub kind: EdgeKind,
    pub length_m: f64,
    /// Street carrying a street edge.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub street_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SynthGraph {
    pub nodes: Vec<SynthNode>,
    pub edges: Vec<SynthEdge>,
    pub components: usize,
}

impl SynthGraph {
    pub fn count(&self, kind: NodeKind) -> usize {
        self.nodes.iter().filter(|n| n.kind == kind).count()
    }

    pub fn street_length(&self) -> f64 {
        self.edges
            .iter()
            .filter(|e| e.kind == EdgeKind::Street)
            .map(|e| e.length_m)
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HouseNode {
    pub building_id: String,
    pub position: Point,
}

/// One house node per building at its area-weighted footprint centroid.
pub fn building_nodes(buildings: &[Building]) -> Result<Vec<HouseNode>, GridSynthError> {
    buildings
        .iter()
        .map(|b| {
            let position = b
                .footprint
                .centroid()
                .filter(|_| b.footprint.area() > 0.0)
                .ok_or_else(|| GridSynthError::DegenerateFootprint(b.id.clone()))?;
            Ok(HouseNode {
                building_id: b.id.clone(),
                position,
            })
        })
        .collect()
}

/// Nearest point of the street network to a house.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConnectionPoint {
    pub position: Point,
    pub street: usize,
    pub segment: usize,
    /// Parameter of the point on its segment.
    pub t: f64,
    /// Length of the service line.
    pub distance: f64,
}

/// Globally nearest point on any street segment; ties go to the lowest street
/// id, then the lowest segment index.
pub fn connection_point(house: &Point, streets: &StreetNetwork) -> Result<ConnectionPoint, GridSynthError> {
    let mut best: Option<(ConnectionPoint, &str)> = None;
    for (si, street) in streets.streets.iter().enumerate() {
        for (gi, seg) in street.segments().enumerate() {
            let (position, t) = seg.closest_point(house);
            let distance = position.distance(house);
            let better = match &best {
                None => true,
                Some((b, id)) => {
                    distance < b.distance
                        || (distance == b.distance
                            && (street.id.as_str(), gi) < (*id, b.segment))
                }
            };
            if better {
                best = Some((
                    ConnectionPoint {
                        position,
                        street: si,
                        segment: gi,
                        t,
                        distance,
                    },
                    street.id.as_str(),
                ));
            }
        }
    }
    best.map(|b| b.0).ok_or(GridSynthError::NoStreets)
}

/// Street nodes and edges alone.
pub fn street_graph(streets: &StreetNetwork, epsilon: f64) -> Result<SynthGraph, GridSynthError> {
    synthesize(&[], streets, epsilon)
}

/// Split point on a raw street segment.
#[derive(Debug, Clone, Copy)]
struct SplitPoint {
    t: f64,
    position: Point,
    kind: NodeKind,
}

/// Street-side nodes, merged on a hash grid with cell size `epsilon`.
struct NodeIndex {
    epsilon: f64,
    positions: Vec<Point>,
    kinds: Vec<NodeKind>,
    cells: HashMap<(i64, i64), Vec<usize>>,
    offset: usize,
}

impl NodeIndex {
    fn cell(&self, p: &Point) -> (i64, i64) {
        ((p.x / self.epsilon).floor() as i64, (p.y / self.epsilon).floor() as i64)
    }

    /// Id of the node within `epsilon` of `p` with the lowest id, or a new one.
    fn insert(&mut self, p: Point, kind: NodeKind) -> usize {
        let (cx, cy) = self.cell(&p);
        let mut found: Option<usize> = None;
        for dx in -1..=1 {
            for dy in -1..=1 {
                if let Some(ids) = self.cells.get(&(cx + dx, cy + dy)) {
                    for &i in ids {
                        if self.positions[i].distance(&p) <= self.epsilon && found.is_none_or(|f| i < f) {
                            found = Some(i);
                        }
                    }
                }
            }
        }
        let local = match found {
            Some(i) => {
                self.kinds[i] = self.kinds[i].max(kind);
                i
            }
            None => {
                self.positions.push(p);
                self.kinds.push(kind);
                self.cells.entry((cx, cy)).or_default().push(self.positions.len() - 1);
                self.positions.len() - 1
            }
        };
        local + self.offset
    }
}

/// Builds the full grid topology.
///
/// Node ids: houses first in building order, then street-side nodes in the
/// order they are met walking the streets in input order. Connection points
/// split their host segment. A street node touching two or more streets, or
/// with three or more street edges, is an intersection; collinear
/// overlapping street pieces yield a single edge.
pub fn synthesize(
    buildings: &[Building],
    streets: &StreetNetwork,
    epsilon: f64,
) -> Result<SynthGraph, GridSynthError> {
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(GridSynthError::InvalidEpsilon(epsilon));
    }
    streets.validate()?;
    if !buildings.is_empty() && streets.is_empty() {
        return Err(GridSynthError::NoStreets);
    }
    let houses = building_nodes(buildings)?;
    let connections: Vec<ConnectionPoint> = houses
        .iter()
        .map(|h| connection_point(&h.position, streets))
        .collect::<Result<_, _>>()?;

    // raw segments with their street index
    let segments: Vec<(usize, Segment)> = streets
        .streets
        .iter()
        .enumerate()
        .flat_map(|(si, s)| s.segments().map(move |seg| (si, seg)))
        .collect();
    let segment_offset: Vec<usize> = streets
        .streets
        .iter()
        .scan(0, |acc, s| {
            let start = *acc;
            *acc += s.points.len() - 1;
            Some(start)
        })
        .collect();

    let mut splits: Vec<Vec<SplitPoint>> = segments
        .iter()
        .map(|(_, seg)| {
            vec![
                SplitPoint { t: 0.0, position: seg.a, kind: NodeKind::Street },
                SplitPoint { t: 1.0, position: seg.b, kind: NodeKind::Street },
            ]
        })
        .collect();

    for i in 0..segments.len() {
        for j in i + 1..segments.len() {
            let (a, b) = (segments[i].1, segments[j].1);
            if !boxes_touch(&a, &b, epsilon) {
                continue;
            }
            match a.intersect(&b) {
                SegmentIntersection::None => {}
                SegmentIntersection::Point { point, t, u } => {
                    splits[i].push(SplitPoint { t, position: point, kind: NodeKind::Street });
                    splits[j].push(SplitPoint { t: u, position: point, kind: NodeKind::Street });
                }
                SegmentIntersection::Overlap { t0, t1 } => {
                    for t in [t0, t1] {
                        let p = a.point_at(t);
                        splits[i].push(SplitPoint { t, position: p, kind: NodeKind::Street });
                        let u = b.closest_point(&p).1;
                        splits[j].push(SplitPoint { t: u, position: p, kind: NodeKind::Street });
                    }
                }
            }
            // vertices that end just short of, or slightly past, another segment
            for (k, other, target) in [(i, b, j), (j, a, i)] {
                let seg = segments[k].1;
                for v in [seg.a, seg.b] {
                    let (foot, u) = other.closest_point(&v);
                    if u > 0.0 && u < 1.0 && foot.distance(&v) <= epsilon {
                        splits[target].push(SplitPoint { t: u, position: foot, kind: NodeKind::Street });
                    }
                }
            }
        }
    }

    for c in &connections {
        splits[segment_offset[c.street] + c.segment].push(SplitPoint {
            t: c.t,
            position: c.position,
            kind: NodeKind::Connection,
        });
    }

    let mut index = NodeIndex {
        epsilon,
        positions: Vec::new(),
        kinds: Vec::new(),
        cells: HashMap::new(),
        offset: houses.len(),
    };
    let mut street_edges: Vec<(usize, usize, usize)> = Vec::new();
    let mut seen_pairs: BTreeSet<(usize, usize)> = BTreeSet::new();
    let mut connection_nodes: Vec<Option<usize>> = vec![None; connections.len()];
    let mut node_streets: HashMap<usize, BTreeSet<usize>> = HashMap::new();

    for (k, pts) in splits.iter_mut().enumerate() {
        pts.sort_by(|p, q| p.t.total_cmp(&q.t).then(p.kind.cmp(&q.kind)));
        let street = segments[k].0;
        let mut prev: Option<usize> = None;
        for p in pts.iter() {
            let id = index.insert(p.position, p.kind);
            node_streets.entry(id).or_default().insert(street);
            if let Some(q) = prev {
                let key = (q.min(id), q.max(id));
                if q != id && seen_pairs.insert(key) {
                    street_edges.push((q, id, street));
                }
            }
            prev = Some(id);
        }
    }
    // connection nodes resolved after all merging so every house maps to the final id
    for (h, c) in connections.iter().enumerate() {
        connection_nodes[h] = Some(index.insert(c.position, NodeKind::Connection));
    }

    let mut street_degree: HashMap<usize, usize> = HashMap::new();
    for &(a, b, _) in &street_edges {
        *street_degree.entry(a).or_default() += 1;
        *street_degree.entry(b).or_default() += 1;
    }

    let mut nodes: Vec<SynthNode> = houses
        .iter()
        .enumerate()
        .map(|(i, h)| SynthNode {
            id: i,
            position: h.position,
            kind: NodeKind::House,
            building_id: Some(h.building_id.clone()),
        })
        .collect();
    for (local, (&position, &kind)) in index.positions.iter().zip(&index.kinds).enumerate() {
        let id = local + houses.len();
        let distinct_streets = node_streets.get(&id).map_or(0, |s| s.len());
        let degree = street_degree.get(&id).copied().unwrap_or(0);
        let kind = if distinct_streets >= 2 || degree >= 3 {
            NodeKind::Intersection
        } else {
            kind
        };
        nodes.push(SynthNode {
            id,
            position,
            kind,
            building_id: None,
        });
    }

    let mut edges = Vec::with_capacity(street_edges.len() + houses.len());
    for (h, c) in connection_nodes.iter().enumerate() {
        let to = c.expect("every house has a connection");
        edges.push(SynthEdge {
            id: edges.len(),
            from: h,
            to,
            kind: EdgeKind::Service,
            length_m: nodes[h].position.distance(&nodes[to].position),
            street_id: None,
        });
    }
    for &(a, b, street) in &street_edges {
        edges.push(SynthEdge {
            id: edges.len(),
            from: a,
            to: b,
            kind: EdgeKind::Street,
            length_m: nodes[a].position.distance(&nodes[b].position),
            street_id: Some(streets.streets[street].id.clone()),
        });
    }

    let mut g: UnGraph<(), ()> = UnGraph::with_capacity(nodes.len(), edges.len());
    let idx: Vec<_> = nodes.iter().map(|_| g.add_node(())).collect();
    for e in &edges {
        g.add_edge(idx[e.from], idx[e.to], ());
    }
    let components = petgraph::algo::connected_components(&g);

    Ok(SynthGraph {
        nodes,
        edges,
        components,
    })
}

fn boxes_touch(a: &Segment, b: &Segment, pad: f64) -> bool {
    let (ax0, ax1) = (a.a.x.min(a.b.x), a.a.x.max(a.b.x));
    let (ay0, ay1) = (a.a.y.min(a.b.y), a.a.y.max(a.b.y));
    let (bx0, bx1) = (b.a.x.min(b.b.x), b.a.x.max(b.b.x));
    let (by0, by1) = (b.a.y.min(b.b.y), b.a.y.max(b.b.y));
    ax0 <= bx1 + pad && bx0 <= ax1 + pad && ay0 <= by1 + pad && by0 <= ay1 + pad
}

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use geojson::{Feature, FeatureCollection, GeoJson, Geometry, JsonObject, JsonValue, Value};
use mgplan::cellarea::{attribute, PointFeature};
use mgplan::gridsynth::{Street, StreetNetwork};
use mgplan::heatdemand::{Building, WeatherDay};
use mgplan::{HeatingTech, Point, Polygon};
use serde::Serialize;

use crate::config::Crs;
use crate::CliError;

/// Mean earth radius in metres.
const EARTH_RADIUS_M: f64 = 6_371_008.8;

/// Equirectangular projection around a reference point, or the identity for
/// planar inputs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    origin: Option<(f64, f64, f64)>,
}

impl Projection {
    pub fn planar() -> Self {
        Self { origin: None }
    }

    /// Projection centred on the bounding box of `positions` (lon, lat).
    pub fn around<'a>(positions: impl IntoIterator<Item = &'a [f64]>) -> Self {
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for p in positions {
            for k in 0..2 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        if !lo[0].is_finite() {
            return Self::planar();
        }
        let lon0 = 0.5 * (lo[0] + hi[0]);
        let lat0 = 0.5 * (lo[1] + hi[1]);
        Self {
            origin: Some((lon0, lat0, lat0.to_radians().cos())),
        }
    }

    pub fn forward(&self, p: &[f64]) -> Point {
        match self.origin {
            None => Point::new(p[0], p[1]),
            Some((lon0, lat0, cos)) => Point::new(
                EARTH_RADIUS_M * (p[0] - lon0).to_radians() * cos,
                EARTH_RADIUS_M * (p[1] - lat0).to_radians(),
            ),
        }
    }

    pub fn inverse(&self, p: &Point) -> Vec<f64> {
        match self.origin {
            None => vec![p.x, p.y],
            Some((lon0, lat0, cos)) => vec![
                lon0 + (p.x / (EARTH_RADIUS_M * cos)).to_degrees(),
                lat0 + (p.y / EARTH_RADIUS_M).to_degrees(),
            ],
        }
    }
}

/// Vector inputs in planar metres with the projection that produced them.
#[derive(Debug, Clone)]
pub struct VectorInputs {
    pub buildings: Vec<Building>,
    /// Building attributes such as inhabitants, placed at the centroids.
    pub points: Vec<PointFeature>,
    pub streets: StreetNetwork,
    pub projection: Projection,
}

struct RawBuilding {
    id: String,
    rings: Vec<Vec<Vec<f64>>>,
    annual_heat_demand_kwh: f64,
    heating_tech: HeatingTech,
    attributes: BTreeMap<String, f64>,
}

struct RawStreet {
    id: String,
    lines: Vec<Vec<Vec<f64>>>,
}

fn invalid(path: &Path, msg: impl std::fmt::Display) -> CliError {
    CliError::ConfigInvalid(format!("`{}`: {msg}", path.display()))
}

fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| invalid(path, format!("cannot read: {e}")))
}

fn read_features(path: &Path) -> Result<Vec<Feature>, CliError> {
    let gj: GeoJson = read_text(path)?.parse().map_err(|e| invalid(path, e))?;
    match gj {
        GeoJson::FeatureCollection(fc) => Ok(fc.features),
        GeoJson::Feature(f) => Ok(vec![f]),
        GeoJson::Geometry(_) => Err(invalid(path, "expected features, found a bare geometry")),
    }
}

fn feature_id(f: &Feature, index: usize, prefix: &str) -> String {
    match f.property("id") {
        Some(JsonValue::String(s)) => return s.clone(),
        Some(JsonValue::Number(n)) => return n.to_string(),
        _ => {}
    }
    match &f.id {
        Some(geojson::feature::Id::String(s)) => s.clone(),
        Some(geojson::feature::Id::Number(n)) => n.to_string(),
        None => format!("{prefix}{index}"),
    }
}

fn ring_area(ring: &[Vec<f64>]) -> f64 {
    let n = ring.len();
    (0..n)
        .map(|i| {
            let (a, b) = (&ring[i], &ring[(i + 1) % n]);
            a[0] * b[1] - b[0] * a[1]
        })
        .sum::<f64>()
        .abs()
        / 2.0
}

fn read_buildings(path: &Path) -> Result<Vec<RawBuilding>, CliError> {
    let mut out = Vec::new();
    for (i, f) in read_features(path)?.iter().enumerate() {
        let id = feature_id(f, i, "b");
        let bad = |m: String| invalid(path, format!("building `{id}`: {m}"));
        let rings = match f.geometry.as_ref().map(|g| &g.value) {
            Some(Value::Polygon(rings)) => rings.clone(),
            // the largest part stands for the building
            Some(Value::MultiPolygon(parts)) => parts
                .iter()
                .max_by(|a, b| ring_area(&a[0]).total_cmp(&ring_area(&b[0])))
                .cloned()
                .ok_or_else(|| bad("empty multipolygon".into()))?,
            _ => return Err(bad("geometry must be a polygon".into())),
        };
        if rings.is_empty() || rings.iter().flatten().any(|p| p.len() < 2) {
            return Err(bad("malformed polygon".into()));
        }
        let annual_heat_demand_kwh = f
            .property("annual_heat_demand_kwh")
            .and_then(JsonValue::as_f64)
            .ok_or_else(|| bad("missing numeric `annual_heat_demand_kwh`".into()))?;
        let heating_tech = f
            .property("heating_tech")
            .and_then(JsonValue::as_str)
            .ok_or_else(|| bad("missing `heating_tech`".into()))?
            .parse()
            .map_err(bad)?;
        let attributes = [
            attribute::INHABITANTS,
            attribute::CARS,
            attribute::INSTALLED_GENERATION_KW,
            attribute::INSTALLED_STORAGE_KWH,
        ]
        .into_iter()
        .filter_map(|k| f.property(k).and_then(JsonValue::as_f64).map(|v| (k.to_string(), v)))
        .collect();
        out.push(RawBuilding {
            id,
            rings,
            annual_heat_demand_kwh,
            heating_tech,
            attributes,
        });
    }
    Ok(out)
}

fn read_streets(path: &Path) -> Result<Vec<RawStreet>, CliError> {
    let mut out = Vec::new();
    for (i, f) in read_features(path)?.iter().enumerate() {
        let id = feature_id(f, i, "s");
        let lines = match f.geometry.as_ref().map(|g| &g.value) {
            Some(Value::LineString(l)) => vec![l.clone()],
            Some(Value::MultiLineString(ls)) => ls.clone(),
            _ => return Err(invalid(path, format!("street `{id}`: geometry must be a line string"))),
        };
        if lines.iter().flatten().any(|p| p.len() < 2) {
            return Err(invalid(path, format!("street `{id}`: malformed coordinates")));
        }
        out.push(RawStreet { id, lines });
    }
    Ok(out)
}

/// Reads buildings and streets and projects them to planar metres.
pub fn read_vectors(buildings: &Path, streets: &Path, crs: Crs) -> Result<VectorInputs, CliError> {
    let raw_buildings = read_buildings(buildings)?;
    let raw_streets = read_streets(streets)?;
    let projection = match crs {
        Crs::Planar => Projection::planar(),
        Crs::Lonlat => Projection::around(
            raw_buildings
                .iter()
                .flat_map(|b| b.rings.iter().flatten())
                .chain(raw_streets.iter().flat_map(|s| s.lines.iter().flatten()))
                .map(Vec::as_slice),
        ),
    };
    let project = |ring: &[Vec<f64>]| ring.iter().map(|p| projection.forward(p)).collect::<Vec<_>>();

    let mut out_buildings = Vec::with_capacity(raw_buildings.len());
    let mut points = Vec::new();
    for b in raw_buildings {
        let footprint = Polygon::with_holes(project(&b.rings[0]), b.rings[1..].iter().map(|r| project(r)).collect());
        if !b.attributes.is_empty() {
            if let Some(position) = footprint.centroid() {
                points.push(PointFeature {
                    position,
                    attributes: b.attributes,
                });
            }
        }
        // validation is left to the modules so that bad values surface as module errors
        out_buildings.push(Building {
            id: b.id,
            footprint,
            annual_heat_demand_kwh: b.annual_heat_demand_kwh,
            heating_tech: b.heating_tech,
        });
    }

    let mut out_streets = Vec::new();
    for s in raw_streets {
        let parts = s.lines.len();
        for (k, line) in s.lines.iter().enumerate() {
            out_streets.push(Street {
                id: if parts == 1 { s.id.clone() } else { format!("{}#{k}", s.id) },
                points: project(line),
            });
        }
    }
    Ok(VectorInputs {
        buildings: out_buildings,
        points,
        streets: StreetNetwork { streets: out_streets },
        projection,
    })
}

/// Daily weather from a `date,temp_c` CSV.
pub fn read_weather(path: &Path) -> Result<Vec<WeatherDay>, CliError> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| invalid(path, e))?;
    reader
        .deserialize()
        .collect::<Result<Vec<WeatherDay>, _>>()
        .map_err(|e| invalid(path, e))
}

/// Node demand series from a wide CSV whose first column is the timestep.
pub fn read_profiles(path: &Path) -> Result<BTreeMap<String, Vec<f64>>, CliError> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| invalid(path, e))?;
    let headers = reader.headers().map_err(|e| invalid(path, e))?.clone();
    if headers.len() < 2 {
        return Err(invalid(path, "expected a timestep column and at least one node column"));
    }
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); headers.len() - 1];
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| invalid(path, e))?;
        for (k, col) in columns.iter_mut().enumerate() {
            let cell = record.get(k + 1).unwrap_or("");
            let v = cell
                .trim()
                .parse()
                .map_err(|_| invalid(path, format!("row {}: `{cell}` is not a number", row + 1)))?;
            col.push(v);
        }
    }
    let mut out = BTreeMap::new();
    for (name, col) in headers.iter().skip(1).zip(columns) {
        if out.insert(name.to_string(), col).is_some() {
            return Err(invalid(path, format!("duplicate column `{name}`")));
        }
    }
    Ok(out)
}

/// Writes output files below one directory.
pub struct OutputDir {
    root: PathBuf,
}

impl OutputDir {
    pub fn create(root: PathBuf) -> Result<Self, CliError> {
        std::fs::create_dir_all(&root).map_err(|e| CliError::output(&root, e))?;
        Ok(Self { root })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn json<T: Serialize + ?Sized>(&self, name: &str, value: &T) -> Result<(), CliError> {
        let path = self.path(name);
        let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::output(&path, e))?;
        text.push('\n');
        std::fs::write(&path, text).map_err(|e| CliError::output(&path, e))
    }

    /// CSV with a header row followed by `rows`.
    pub fn csv<R: Serialize>(&self, name: &str, header: &[&str], rows: impl IntoIterator<Item = R>) -> Result<(), CliError> {
        let path = self.path(name);
        let err = |e: csv::Error| CliError::output(&path, e);
        let mut w = csv::WriterBuilder::new().has_headers(false).from_path(&path).map_err(err)?;
        w.write_record(header).map_err(err)?;
        for r in rows {
            w.serialize(r).map_err(err)?;
        }
        w.flush().map_err(|e| CliError::output(&path, e))
    }

    pub fn geojson(&self, name: &str, features: Vec<Feature>) -> Result<(), CliError> {
        let fc = FeatureCollection {
            bbox: None,
            features,
            foreign_members: None,
        };
        self.json(name, &fc)
    }
}

pub fn feature(value: Value, properties: JsonObject) -> Feature {
    Feature {
        bbox: None,
        geometry: Some(Geometry::new(value)),
        id: None,
        properties: Some(properties),
        foreign_members: None,
    }
}

pub fn polygon_value(p: &Polygon, projection: &Projection) -> Value {
    let ring = |r: &[Point]| {
        let mut coords: Vec<Vec<f64>> = r.iter().map(|q| projection.inverse(q)).collect();
        if let Some(first) = coords.first().cloned() {
            coords.push(first);
        }
        coords
    };
    let mut rings = vec![ring(&p.exterior)];
    rings.extend(p.holes.iter().map(|h| ring(h)));
    Value::Polygon(rings)
}

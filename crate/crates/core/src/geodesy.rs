//! WGS84 geodetic conversion of world-frame coordinates, and GeoJSON
//! export.
//!
//! World-frame convention: +X east-ish, +Y along the anchor's heading,
//! +Z up. The anchor's heading (degrees clockwise from true north) resolves
//! the rotation from the world frame into the local east-north-up tangent
//! frame; ENU then maps to ECEF and ECEF to geodetic coordinates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::WorldPoint;

/// WGS84 semi-major axis, metres.
pub const WGS84_A: f64 = 6_378_137.0;
/// WGS84 flattening.
pub const WGS84_F: f64 = 1.0 / 298.257_223_563;

fn eccentricity_squared() -> f64 {
    WGS84_F * (2.0 - WGS84_F)
}

/// Geodetic position and world-frame orientation of the local origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoAnchor {
    /// Latitude, degrees.
    pub lat: f64,
    /// Longitude, degrees.
    pub lon: f64,
    /// Ellipsoidal altitude, metres.
    pub alt: f64,
    /// Heading of the world frame's +Y axis, degrees clockwise from true
    /// north.
    pub heading: f64,
}

impl GeoAnchor {
    pub fn new(lat: f64, lon: f64, alt: f64, heading: f64) -> Result<Self> {
        if !(-90.0..=90.0).contains(&lat) {
            return Err(Error::ConfigError(format!("latitude {lat} out of range")));
        }
        if !(-180.0..=180.0).contains(&lon) || lon == -180.0 {
            return Err(Error::ConfigError(format!("longitude {lon} out of range")));
        }
        if !(0.0..360.0).contains(&heading) {
            return Err(Error::ConfigError(format!("heading {heading} out of range")));
        }
        if !alt.is_finite() {
            return Err(Error::ConfigError(format!("altitude {alt} is not finite")));
        }
        Ok(Self { lat, lon, alt, heading })
    }
}

/// A WGS84 geodetic position.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
    pub alt: f64,
}

/// Geodetic to earth-centered earth-fixed, metres.
fn geodetic_to_ecef(lat_rad: f64, lon_rad: f64, alt: f64) -> [f64; 3] {
    let e2 = eccentricity_squared();
    let (sin_lat, cos_lat) = lat_rad.sin_cos();
    let (sin_lon, cos_lon) = lon_rad.sin_cos();
    let n = WGS84_A / (1.0 - e2 * sin_lat * sin_lat).sqrt();
    [
        (n + alt) * cos_lat * cos_lon,
        (n + alt) * cos_lat * sin_lon,
        (n * (1.0 - e2) + alt) * sin_lat,
    ]
}

/// ECEF to geodetic by iterative latitude refinement. The stop tolerance
/// sits at the float limit so kilometre-scale offsets round-trip to
/// micrometres.
fn ecef_to_geodetic(x: f64, y: f64, z: f64) -> GeoPoint {
    let e2 = eccentricity_squared();
    let lon = y.atan2(x);
    let p = x.hypot(y);
    // Geocentric latitude as the starting guess.
    let mut lat = z.atan2(p);
    let mut alt = 0.0;
    for _ in 0..20 {
        let (sin_lat, cos_lat) = lat.sin_cos();
        let n = WGS84_A / (1.0 - e2 * sin_lat * sin_lat).sqrt();
        alt = if cos_lat.abs() > 1e-12 {
            p / cos_lat - n
        } else {
            z.abs() - n * (1.0 - e2)
        };
        let next = (z / p.max(1e-12)).atan2(1.0 - e2 * n / (n + alt)) ;
        let delta = next - lat;
        lat = next;
        if delta.abs() < 1e-15 {
            break;
        }
    }
    GeoPoint {
        lat: lat.to_degrees(),
        lon: lon.to_degrees(),
        alt,
    }
}

/// Rotate a world point into the anchor's east-north-up frame.
fn world_to_enu(p: WorldPoint, heading_deg: f64) -> [f64; 3] {
    let (sin_h, cos_h) = heading_deg.to_radians().sin_cos();
    [
        p.x * cos_h + p.y * sin_h,
        -p.x * sin_h + p.y * cos_h,
        p.z,
    ]
}

fn enu_axes(lat_rad: f64, lon_rad: f64) -> [[f64; 3]; 3] {
    let (sin_lat, cos_lat) = lat_rad.sin_cos();
    let (sin_lon, cos_lon) = lon_rad.sin_cos();
    [
        [-sin_lon, cos_lon, 0.0],
        [-sin_lat * cos_lon, -sin_lat * sin_lon, cos_lat],
        [cos_lat * cos_lon, cos_lat * sin_lon, sin_lat],
    ]
}

/// Transform a world-frame point into WGS84 geodetic coordinates. The
/// world origin is the anchor by definition and maps to it exactly.
pub fn world_to_geodetic(p: WorldPoint, anchor: &GeoAnchor) -> GeoPoint {
    if p.x == 0.0 && p.y == 0.0 && p.z == 0.0 {
        return GeoPoint {
            lat: anchor.lat,
            lon: anchor.lon,
            alt: anchor.alt,
        };
    }
    let enu = world_to_enu(p, anchor.heading);
    let lat = anchor.lat.to_radians();
    let lon = anchor.lon.to_radians();
    let origin = geodetic_to_ecef(lat, lon, anchor.alt);
    let axes = enu_axes(lat, lon);
    let mut ecef = origin;
    for i in 0..3 {
        ecef[0] += axes[i][0] * enu[i];
        ecef[1] += axes[i][1] * enu[i];
        ecef[2] += axes[i][2] * enu[i];
    }
    ecef_to_geodetic(ecef[0], ecef[1], ecef[2])
}

/// East-north-up offset of `point` relative to `origin`, metres.
pub fn enu_offset(point: &GeoPoint, origin: &GeoPoint) -> [f64; 3] {
    let lat = origin.lat.to_radians();
    let lon = origin.lon.to_radians();
    let o = geodetic_to_ecef(lat, lon, origin.alt);
    let p = geodetic_to_ecef(point.lat.to_radians(), point.lon.to_radians(), point.alt);
    let d = [p[0] - o[0], p[1] - o[1], p[2] - o[2]];
    let axes = enu_axes(lat, lon);
    [
        axes[0][0] * d[0] + axes[0][1] * d[1] + axes[0][2] * d[2],
        axes[1][0] * d[0] + axes[1][1] * d[1] + axes[1][2] * d[2],
        axes[2][0] * d[0] + axes[2][1] * d[1] + axes[2][2] * d[2],
    ]
}

/// RMS ground distance between estimated and true geodetic positions,
/// metres. Each pair is differenced in the local ENU frame of the truth
/// point; the vertical component is excluded.
pub fn geodetic_rms(estimated: &[GeoPoint], truth: &[GeoPoint]) -> Result<f64> {
    if estimated.len() != truth.len() {
        return Err(Error::LengthMismatch {
            expected: truth.len(),
            got: estimated.len(),
        });
    }
    if estimated.is_empty() {
        return Ok(0.0);
    }
    let mut sum = 0.0;
    for (est, tru) in estimated.iter().zip(truth) {
        let enu = enu_offset(est, tru);
        sum += enu[0] * enu[0] + enu[1] * enu[1];
    }
    Ok((sum / estimated.len() as f64).sqrt())
}

#[derive(Serialize, Deserialize)]
struct GeoJsonGeometry {
    #[serde(rename = "type")]
    kind: String,
    /// `[lon, lat]` ordering per the GeoJSON conventions.
    coordinates: [f64; 2],
}

#[derive(Serialize, Deserialize)]
struct GeoJsonProperties {
    label: String,
    alt_m: f64,
}

#[derive(Serialize, Deserialize)]
struct GeoJsonFeature {
    #[serde(rename = "type")]
    kind: String,
    geometry: GeoJsonGeometry,
    properties: GeoJsonProperties,
}

#[derive(Serialize, Deserialize)]
struct GeoJsonFeatureCollection {
    #[serde(rename = "type")]
    kind: String,
    features: Vec<GeoJsonFeature>,
}

/// Serialize labelled geodetic points as a GeoJSON FeatureCollection.
pub fn export_geojson(points: &[(String, GeoPoint)]) -> String {
    let collection = GeoJsonFeatureCollection {
        kind: "FeatureCollection".into(),
        features: points
            .iter()
            .map(|(label, p)| GeoJsonFeature {
                kind: "Feature".into(),
                geometry: GeoJsonGeometry {
                    kind: "Point".into(),
                    coordinates: [p.lon, p.lat],
                },
                properties: GeoJsonProperties {
                    label: label.clone(),
                    alt_m: p.alt,
                },
            })
            .collect(),
    };
    serde_json::to_string(&collection).expect("GeoJSON structs always serialize")
}

/// Parse a GeoJSON FeatureCollection produced by [`export_geojson`].
pub fn parse_geojson(text: &str) -> Result<Vec<(String, GeoPoint)>> {
    let collection: GeoJsonFeatureCollection = serde_json::from_str(text)?;
    Ok(collection
        .features
        .into_iter()
        .map(|f| {
            (
                f.properties.label,
                GeoPoint {
                    lat: f.geometry.coordinates[1],
                    lon: f.geometry.coordinates[0],
                    alt: f.properties.alt_m,
                },
            )
        })
        .collect())
}

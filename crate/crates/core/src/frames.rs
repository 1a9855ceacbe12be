//! WGS-84 geodetic helpers and the local East-North-Up frame.

use nalgebra::{Matrix3, Vector3};

const WGS84_A: f64 = 6_378_137.0;
const WGS84_F: f64 = 1.0 / 298.257_223_563;

/// Geodetic latitude, longitude (radians) and ellipsoidal height (meters).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Geodetic {
    pub lat: f64,
    pub lon: f64,
    pub height: f64,
}

pub fn geodetic_to_ecef(g: Geodetic) -> Vector3<f64> {
    let e2 = WGS84_F * (2.0 - WGS84_F);
    let (sl, cl) = g.lat.sin_cos();
    let n = WGS84_A / (1.0 - e2 * sl * sl).sqrt();
    Vector3::new(
        (n + g.height) * cl * g.lon.cos(),
        (n + g.height) * cl * g.lon.sin(),
        (n * (1.0 - e2) + g.height) * sl,
    )
}

pub fn ecef_to_geodetic(p: &Vector3<f64>) -> Geodetic {
    let e2 = WGS84_F * (2.0 - WGS84_F);
    let r2 = p.x * p.x + p.y * p.y;
    let mut z = p.z;
    let mut zk = 0.0;
    let mut v = WGS84_A;
    // Fixed-point iteration on the z-offset; converges to sub-micrometre in a few steps.
    for _ in 0..20 {
        if (z - zk).abs() < 1e-6 {
            break;
        }
        zk = z;
        let sinp = z / (r2 + z * z).sqrt();
        v = WGS84_A / (1.0 - e2 * sinp * sinp).sqrt();
        z = p.z + v * e2 * sinp;
    }
    let lat = if r2 > 1e-12 {
        (z / r2.sqrt()).atan()
    } else if p.z > 0.0 {
        std::f64::consts::FRAC_PI_2
    } else {
        -std::f64::consts::FRAC_PI_2
    };
    let lon = if r2 > 1e-12 { p.y.atan2(p.x) } else { 0.0 };
    Geodetic {
        lat,
        lon,
        height: (r2 + z * z).sqrt() - v,
    }
}

/// Rotation taking ECEF difference vectors into ENU at `origin`. Rows are E, N, U.
pub fn enu_rotation(origin: &Vector3<f64>) -> Matrix3<f64> {
    let g = ecef_to_geodetic(origin);
    let (sp, cp) = g.lat.sin_cos();
    let (sl, cl) = g.lon.sin_cos();
    Matrix3::new(
        -sl,
        cl,
        0.0,
        -sp * cl,
        -sp * sl,
        cp,
        cp * cl,
        cp * sl,
        sp,
    )
}

/// A local tangent frame anchored at a fixed ECEF point.
#[derive(Debug, Clone)]
pub struct LocalFrame {
    origin: Vector3<f64>,
    rot: Matrix3<f64>,
}

impl LocalFrame {
    pub fn new(origin: Vector3<f64>) -> Self {
        Self {
            rot: enu_rotation(&origin),
            origin,
        }
    }

    pub fn origin(&self) -> &Vector3<f64> {
        &self.origin
    }

    pub fn to_enu(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rot * (p - self.origin)
    }

    pub fn delta_to_enu(&self, d: &Vector3<f64>) -> Vector3<f64> {
        self.rot * d
    }

    pub fn from_enu(&self, enu: &Vector3<f64>) -> Vector3<f64> {
        self.origin + self.enu_to_delta(enu)
    }

    /// ECEF vector (no origin shift) of a local ENU vector.
    pub fn enu_to_delta(&self, enu: &Vector3<f64>) -> Vector3<f64> {
        self.rot.transpose() * enu
    }

    pub fn up(&self) -> Vector3<f64> {
        self.rot.row(2).transpose()
    }
}

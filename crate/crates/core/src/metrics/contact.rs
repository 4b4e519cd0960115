#[allow(unused_imports)]
use num_traits::Float as _;
use alloc::vec::Vec;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Cone test slack, in cosine units.
const CONE_EPS: f64 = 1e-12;

/// A surface point with its outward unit normal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Contact {
    pub point: Vector3<f64>,
    pub normal: Vector3<f64>,
}

impl Contact {
    /// Builds a contact, normalizing `normal`.
    pub fn new(point: Vector3<f64>, normal: Vector3<f64>) -> Self {
        Self {
            point,
            normal: normal.normalize(),
        }
    }
}

/// `{0.1, 0.2, ..., 1.0}`, each value produced as `i / 10`.
pub fn friction_grid() -> Vec<f64> {
    (1..=10).map(|i| i as f64 / 10.0).collect()
}

/// Two-finger force closure under Coulomb friction: the line joining the
/// contacts must lie inside both friction cones of half-angle `atan(mu)`.
pub fn force_closure(c1: &Contact, c2: &Contact, mu: f64) -> Result<bool> {
    if !(mu > 0.0) {
        return Err(Error::Config(alloc::format!("friction coefficient {mu} must be positive")));
    }
    let line = c2.point - c1.point;
    let len = line.norm();
    if !(len > 1e-12) {
        return Err(Error::InvalidContact);
    }
    let toward_second = line / len;
    let cos_limit = 1.0 / (1.0 + mu * mu).sqrt();
    // At c1 the grip force pushes along +line, so the outward normal must sit
    // inside the cone around -line; symmetrically at c2.
    let cos1 = -toward_second.dot(&c1.normal);
    let cos2 = toward_second.dot(&c2.normal);
    Ok(cos1 >= cos_limit - CONE_EPS && cos2 >= cos_limit - CONE_EPS)
}

/// Smallest `mu` in the ascending `grid` that yields force closure.
pub fn min_friction(c1: &Contact, c2: &Contact, grid: &[f64]) -> Result<Option<f64>> {
    if grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config("friction grid must be strictly ascending".into()));
    }
    for &mu in grid {
        if force_closure(c1, c2, mu)? {
            return Ok(Some(mu));
        }
    }
    Ok(None)
}

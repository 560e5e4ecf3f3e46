//! The degenerate benchmark shared by tests, acceptance checks and the lab:
//! a Weierstrass-type `b` vanishing at `t = 0`, a Gevrey bump `a` vanishing on
//! half the circle, and bump-shaped Cauchy data.

use std::f64::consts::PI;

use crate::coefficients::{
    make_space_coefficient, make_time_coefficient, HolderIndex, SpaceCoefficient, SpaceFamily, TimeCoefficient,
    TimeFamily,
};
use crate::error::Result;
use crate::spectral_grid::{Grid, GridFunction};
use crate::symbol_calculus::GevreyParams;

pub const PERIOD: f64 = 2.0 * PI;
pub const S: f64 = 1.2;
pub const S_PRIME: f64 = 1.5;
pub const HOLDER_N: u32 = 2;
pub const HOLDER_ALPHA: f64 = 0.0;

/// `b(t) = Σ_{j≤5} 2^{-2j}(1 - cos 2^j t)`.
pub fn weierstrass_b(horizon: f64) -> Result<TimeCoefficient> {
    make_time_coefficient(
        TimeFamily::Weierstrass { base: 2, terms: 5 },
        HolderIndex::new(HOLDER_N, HOLDER_ALPHA)?,
        horizon,
    )
}

pub fn bump_family() -> SpaceFamily {
    SpaceFamily::GevreyBump { center: PI, radius: PI / 2.0, order: S, height: 1.0 }
}

/// Order-`s` bump of height 1 on `|x - π| < π/2`.
pub fn bump_a(grid: &Grid) -> Result<SpaceCoefficient> {
    make_space_coefficient(bump_family(), grid)
}

pub fn params(mu: f64, tau: f64, theta: f64) -> Result<GevreyParams> {
    GevreyParams::new(S, S_PRIME, HOLDER_N, HOLDER_ALPHA, mu, tau, theta)
}

/// Order-`s` bump of unit height, used as Cauchy data.
pub fn bump_data(grid: &Grid, center: f64, radius: f64) -> Result<GridFunction> {
    let f = make_space_coefficient(SpaceFamily::GevreyBump { center, radius, order: S, height: 1.0 }, grid)?;
    Ok(f.sample(grid))
}

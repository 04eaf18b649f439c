//! Model domains and their exact kernels.
//!
//! Three geometries are supported: the unit disk in the plane, the unit ball in
//! three dimensions, and all of three-space (computationally truncated to a
//! ball of radius `truncation_radius` that contains the support of `q`).
//!
//! The Green's function is written in the cancellation-free form
//!
//! ```text
//! ball:  G(x,y) = (1-|x|^2)(1-|y|^2) / (4 pi |x-y| [x,y] ([x,y] + |x-y|))
//! disk:  G(x,y) = log(1 + (1-|x|^2)(1-|y|^2)/|x-y|^2) / (4 pi)
//! ```
//!
//! with `[x,y]^2 = |x|^2 |y|^2 - 2 x.y + 1`, which stays accurate close to the
//! boundary where the direct and image terms nearly cancel.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainKind {
    UnitDisk2D,
    UnitBall3D,
    WholeSpace3D,
}

impl DomainKind {
    pub fn code(self) -> u32 {
        match self {
            DomainKind::UnitDisk2D => 1,
            DomainKind::UnitBall3D => 2,
            DomainKind::WholeSpace3D => 3,
        }
    }

    pub fn from_code(code: u32) -> Option<Self> {
        match code {
            1 => Some(DomainKind::UnitDisk2D),
            2 => Some(DomainKind::UnitBall3D),
            3 => Some(DomainKind::WholeSpace3D),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DomainKind::UnitDisk2D => "unit_disk_2d",
            DomainKind::UnitBall3D => "unit_ball_3d",
            DomainKind::WholeSpace3D => "whole_space_3d",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "unit_disk_2d" => Some(DomainKind::UnitDisk2D),
            "unit_ball_3d" => Some(DomainKind::UnitBall3D),
            "whole_space_3d" => Some(DomainKind::WholeSpace3D),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelDomain {
    pub kind: DomainKind,
    /// Radius of the computational ball; only meaningful for `WholeSpace3D`.
    pub truncation_radius: f64,
}

impl ModelDomain {
    pub fn unit_disk() -> Self {
        ModelDomain { kind: DomainKind::UnitDisk2D, truncation_radius: 1.0 }
    }

    pub fn unit_ball() -> Self {
        ModelDomain { kind: DomainKind::UnitBall3D, truncation_radius: 1.0 }
    }

    pub fn whole_space(truncation_radius: f64) -> Result<Self> {
        if !(truncation_radius.is_finite() && truncation_radius > 0.0) {
            return Err(invalid(format!("truncation_radius must be positive, got {truncation_radius}")));
        }
        Ok(ModelDomain { kind: DomainKind::WholeSpace3D, truncation_radius })
    }

    pub fn new(kind: DomainKind, truncation_radius: f64) -> Result<Self> {
        match kind {
            DomainKind::UnitDisk2D => Ok(Self::unit_disk()),
            DomainKind::UnitBall3D => Ok(Self::unit_ball()),
            DomainKind::WholeSpace3D => Self::whole_space(truncation_radius),
        }
    }

    pub fn dim(&self) -> usize {
        match self.kind {
            DomainKind::UnitDisk2D => 2,
            _ => 3,
        }
    }

    pub fn is_bounded(&self) -> bool {
        self.kind != DomainKind::WholeSpace3D
    }

    /// Radius of the ball carrying the mesh (1 for the bounded domains).
    pub fn mesh_radius(&self) -> f64 {
        if self.is_bounded() {
            1.0
        } else {
            self.truncation_radius
        }
    }

    /// Lebesgue measure of the meshed region.
    pub fn volume(&self) -> f64 {
        let r = self.mesh_radius();
        match self.dim() {
            2 => PI * r * r,
            _ => 4.0 * PI * r * r * r / 3.0,
        }
    }

    pub fn boundary_measure(&self) -> Result<f64> {
        self.require_bounded("boundary_measure")?;
        Ok(match self.dim() {
            2 => 2.0 * PI,
            _ => 4.0 * PI,
        })
    }

    pub fn diameter(&self) -> f64 {
        2.0 * self.mesh_radius()
    }

    pub(crate) fn require_bounded(&self, op: &'static str) -> Result<()> {
        if self.is_bounded() {
            Ok(())
        } else {
            Err(Error::Unsupported { op, domain: self.kind.name() })
        }
    }
}

/// A point of the plane or of three-space. Planar points keep `z = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point(pub [f64; 3]);

impl Point {
    pub const ORIGIN: Point = Point([0.0; 3]);

    pub fn new2(x: f64, y: f64) -> Self {
        Point([x, y, 0.0])
    }

    pub fn new3(x: f64, y: f64, z: f64) -> Self {
        Point([x, y, z])
    }

    pub fn coords(&self, dim: usize) -> &[f64] {
        &self.0[..dim]
    }

    #[inline]
    pub fn norm2(&self) -> f64 {
        let [x, y, z] = self.0;
        x * x + y * y + z * z
    }

    #[inline]
    pub fn norm(&self) -> f64 {
        self.norm2().sqrt()
    }

    #[inline]
    pub fn dot(&self, other: &Point) -> f64 {
        self.0[0] * other.0[0] + self.0[1] * other.0[1] + self.0[2] * other.0[2]
    }

    #[inline]
    pub fn dist2(&self, other: &Point) -> f64 {
        let dx = self.0[0] - other.0[0];
        let dy = self.0[1] - other.0[1];
        let dz = self.0[2] - other.0[2];
        dx * dx + dy * dy + dz * dz
    }

    #[inline]
    pub fn dist(&self, other: &Point) -> f64 {
        self.dist2(other).sqrt()
    }

    pub fn scaled(&self, s: f64) -> Point {
        Point([self.0[0] * s, self.0[1] * s, self.0[2] * s])
    }
}

const BOUNDARY_SLACK: f64 = 1e-12;

pub fn boundary_distance(domain: &ModelDomain, x: &Point) -> Result<f64> {
    domain.require_bounded("boundary_distance")?;
    let r = x.norm();
    if r > 1.0 + BOUNDARY_SLACK {
        return Err(invalid(format!("point with |x| = {r} lies outside the closed unit domain")));
    }
    Ok((1.0 - r).max(0.0))
}

/// `[x,y]^2 = |x|^2|y|^2 - 2x.y + 1`, the squared distance scale of the image term.
#[inline]
fn image_dist2(x: &Point, y: &Point) -> f64 {
    x.norm2() * y.norm2() - 2.0 * x.dot(y) + 1.0
}

/// Green's function of `-Δ` with zero Dirichlet data; `+∞` on the diagonal.
pub fn green_kernel(domain: &ModelDomain, x: &Point, y: &Point) -> f64 {
    let d2 = x.dist2(y);
    if d2 == 0.0 {
        return f64::INFINITY;
    }
    match domain.kind {
        DomainKind::WholeSpace3D => 1.0 / (4.0 * PI * d2.sqrt()),
        DomainKind::UnitBall3D => {
            let num = ((1.0 - x.norm2()) * (1.0 - y.norm2())).max(0.0);
            let d = d2.sqrt();
            let img = image_dist2(x, y).max(d2).sqrt();
            num / (4.0 * PI * d * img * (img + d))
        }
        DomainKind::UnitDisk2D => {
            let num = ((1.0 - x.norm2()) * (1.0 - y.norm2())).max(0.0);
            (num / d2).ln_1p() / (4.0 * PI)
        }
    }
}

/// Poisson kernel normalized so that `∫_{∂Ω} P(x,z) dσ(z) = 1`.
pub fn poisson_kernel(domain: &ModelDomain, x: &Point, z: &Point) -> Result<f64> {
    domain.require_bounded("poisson_kernel")?;
    Ok(poisson_unchecked(domain.dim(), x, z))
}

#[inline]
pub(crate) fn poisson_unchecked(dim: usize, x: &Point, z: &Point) -> f64 {
    let num = (1.0 - x.norm2()).max(0.0);
    let d2 = x.dist2(z);
    if dim == 2 {
        num / (2.0 * PI * d2)
    } else {
        num / (4.0 * PI * d2 * d2.sqrt())
    }
}

/// Integral of the free-space part of `G(x, ·)` over the ball of volume `vol`
/// centred at `x`, minus the regular image part frozen at `x`. Used for cells
/// that contain the singular point.
pub(crate) fn green_self_cell(domain: &ModelDomain, x: &Point, vol: f64) -> f64 {
    match domain.kind {
        DomainKind::UnitDisk2D => {
            let rho2 = vol / PI;
            let rho = rho2.sqrt();
            let newton = rho2 * (0.5 + (1.0 / rho).ln()) / 2.0;
            let image = vol * (1.0 - x.norm2()).max(f64::MIN_POSITIVE).ln() / (2.0 * PI);
            (newton + image).max(0.0)
        }
        DomainKind::UnitBall3D => {
            let rho = (3.0 * vol / (4.0 * PI)).cbrt();
            let newton = rho * rho / 2.0;
            let image = vol / (4.0 * PI * (1.0 - x.norm2()).max(f64::MIN_POSITIVE));
            (newton - image).max(0.0)
        }
        DomainKind::WholeSpace3D => {
            let rho = (3.0 * vol / (4.0 * PI)).cbrt();
            rho * rho / 2.0
        }
    }
}

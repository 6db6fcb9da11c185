//! Physical parameter vectors and their feasible ranges.
//!
//! Each part carries six quantities, in this fixed order: Young's modulus
//! (Pa), Poisson's ratio, yield stress (Pa), plastic viscosity (Pa s),
//! internal friction angle (degrees), density (kg/m^3).

use serde::{Deserialize, Serialize};

use crate::real::Real;

pub const PARAM_COUNT: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamIndex {
    YoungModulus = 0,
    PoissonRatio = 1,
    YieldStress = 2,
    PlasticViscosity = 3,
    FrictionAngle = 4,
    Density = 5,
}

impl ParamIndex {
    pub const ALL: [ParamIndex; PARAM_COUNT] = [
        ParamIndex::YoungModulus,
        ParamIndex::PoissonRatio,
        ParamIndex::YieldStress,
        ParamIndex::PlasticViscosity,
        ParamIndex::FrictionAngle,
        ParamIndex::Density,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ParamIndex::YoungModulus => "young_modulus",
            ParamIndex::PoissonRatio => "poisson_ratio",
            ParamIndex::YieldStress => "yield_stress",
            ParamIndex::PlasticViscosity => "plastic_viscosity",
            ParamIndex::FrictionAngle => "friction_angle",
            ParamIndex::Density => "density",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamVector<T> {
    pub young_modulus: T,
    pub poisson_ratio: T,
    pub yield_stress: T,
    pub plastic_viscosity: T,
    pub friction_angle: T,
    pub density: T,
}

impl<T: Real> ParamVector<T> {
    pub fn to_array(&self) -> [T; PARAM_COUNT] {
        [
            self.young_modulus,
            self.poisson_ratio,
            self.yield_stress,
            self.plastic_viscosity,
            self.friction_angle,
            self.density,
        ]
    }

    pub fn from_array(a: [T; PARAM_COUNT]) -> Self {
        ParamVector {
            young_modulus: a[0],
            poisson_ratio: a[1],
            yield_stress: a[2],
            plastic_viscosity: a[3],
            friction_angle: a[4],
            density: a[5],
        }
    }

    pub fn get(&self, j: usize) -> T {
        self.to_array()[j]
    }

    pub fn set(&mut self, j: usize, v: T) {
        let mut a = self.to_array();
        a[j] = v;
        *self = Self::from_array(a);
    }
}

/// Per-parameter feasible ranges plus the positivity floor used by the
/// log-domain transforms.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParamBounds<T> {
    pub lower: [T; PARAM_COUNT],
    pub upper: [T; PARAM_COUNT],
    pub floor: T,
}

impl<T: Real> Default for ParamBounds<T> {
    fn default() -> Self {
        ParamBounds {
            lower: [
                T::cast(1e3),
                T::cast(0.05),
                T::cast(1e2),
                T::cast(1.0),
                T::cast(10.0),
                T::cast(1e2),
            ],
            upper: [
                T::cast(1e7),
                T::cast(0.45),
                T::cast(1e6),
                T::cast(1e4),
                T::cast(45.0),
                T::cast(1e4),
            ],
            floor: T::cast(1e-8),
        }
    }
}

impl<T: Real> ParamBounds<T> {
    pub fn validate(&self) -> Result<(), String> {
        for j in 0..PARAM_COUNT {
            if !(T::zero() < self.lower[j] && self.lower[j] < self.upper[j]) {
                return Err(format!(
                    "bounds for {} must satisfy 0 < lower < upper",
                    ParamIndex::ALL[j].name()
                ));
            }
        }
        if self.upper[ParamIndex::PoissonRatio as usize] >= T::cast(0.5) {
            return Err("poisson_ratio upper bound must stay below 0.5".into());
        }
        if self.floor <= T::zero() {
            return Err("positivity floor must be > 0".into());
        }
        Ok(())
    }

    pub fn contains(&self, theta: &ParamVector<T>) -> bool {
        let a = theta.to_array();
        (0..PARAM_COUNT).all(|j| a[j] >= self.lower[j] && a[j] <= self.upper[j])
    }

    pub fn clamp(&self, theta: &ParamVector<T>) -> ParamVector<T> {
        let mut a = theta.to_array();
        for j in 0..PARAM_COUNT {
            a[j] = a[j].max(self.lower[j]).min(self.upper[j]);
        }
        ParamVector::from_array(a)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_bounds_are_valid() {
        ParamBounds::<f64>::default().validate().unwrap();
        ParamBounds::<f32>::default().validate().unwrap();
    }

    #[test]
    fn array_round_trip_preserves_order() {
        let theta = ParamVector {
            young_modulus: 1.0,
            poisson_ratio: 2.0,
            yield_stress: 3.0,
            plastic_viscosity: 4.0,
            friction_angle: 5.0,
            density: 6.0,
        };
        let a = theta.to_array();
        assert_eq!(a, [1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(ParamVector::from_array(a), theta);
        assert_eq!(theta.get(ParamIndex::Density as usize), 6.0);
    }

    #[test]
    fn clamp_projects_into_bounds() {
        let b = ParamBounds::<f64>::default();
        let mut theta = ParamVector::from_array([1e9, 0.6, 1.0, 0.5, 90.0, 1.0]);
        theta = b.clamp(&theta);
        assert!(b.contains(&theta));
        assert_eq!(theta.young_modulus, 1e7);
        assert_eq!(theta.poisson_ratio, 0.45);
    }
}

//! Seeded random instance generators.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{GeoError, Result};
use crate::geometry::PointSet;
use crate::io::write_points;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Generator {
    #[default]
    UniformBox,
    GaussianMixture,
    GridPlusNoise,
}

impl std::str::FromStr for Generator {
    type Err = GeoError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform_box" | "uniform" => Ok(Generator::UniformBox),
            "gaussian_mixture" | "gaussian" => Ok(Generator::GaussianMixture),
            "grid_plus_noise" | "grid" => Ok(Generator::GridPlusNoise),
            other => Err(GeoError::InvalidParameter(format!("unknown generator {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InstanceSpec {
    pub generator: Generator,
    pub n: usize,
    pub d: usize,
    /// Side length of the box `[0, box_size]^d`.
    pub box_size: f64,
    /// Mixture components.
    pub components: usize,
    /// Standard deviation of each mixture component, or of the grid noise.
    pub spread: f64,
    pub seed: u64,
}

impl Default for InstanceSpec {
    fn default() -> Self {
        Self {
            generator: Generator::UniformBox,
            n: 100,
            d: 2,
            box_size: 1.0,
            components: 3,
            spread: 0.05,
            seed: 0,
        }
    }
}

impl InstanceSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(GeoError::InvalidParameter("n must be >= 1".into()));
        }
        if self.d == 0 {
            return Err(GeoError::InvalidParameter("d must be >= 1".into()));
        }
        if !(self.box_size > 0.0 && self.box_size.is_finite()) {
            return Err(GeoError::InvalidParameter(format!("box_size must be > 0, got {}", self.box_size)));
        }
        if !(self.spread >= 0.0 && self.spread.is_finite()) {
            return Err(GeoError::InvalidParameter(format!("spread must be >= 0, got {}", self.spread)));
        }
        if self.generator == Generator::GaussianMixture && self.components == 0 {
            return Err(GeoError::InvalidParameter("components must be >= 1".into()));
        }
        Ok(())
    }
}

pub fn gen_instance(spec: &InstanceSpec) -> Result<PointSet> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let side = spec.box_size;
    let noise = Normal::new(0.0, spec.spread).map_err(|e| GeoError::InvalidParameter(e.to_string()))?;
    let rows: Vec<Vec<f64>> = match spec.generator {
        Generator::UniformBox => (0..spec.n)
            .map(|_| (0..spec.d).map(|_| rng.random_range(0.0..side)).collect())
            .collect(),
        Generator::GaussianMixture => {
            let centers: Vec<Vec<f64>> = (0..spec.components)
                .map(|_| (0..spec.d).map(|_| rng.random_range(0.0..side)).collect())
                .collect();
            (0..spec.n)
                .map(|_| {
                    let c = &centers[rng.random_range(0..centers.len())];
                    c.iter().map(|&x| x + noise.sample(&mut rng)).collect()
                })
                .collect()
        }
        Generator::GridPlusNoise => {
            let per_axis = (spec.n as f64).powf(1.0 / spec.d as f64).ceil().max(1.0) as usize;
            let step = side / per_axis as f64;
            (0..spec.n)
                .map(|i| {
                    let mut rest = i;
                    (0..spec.d)
                        .map(|_| {
                            let k = rest % per_axis;
                            rest /= per_axis;
                            (k as f64 + 0.5) * step + noise.sample(&mut rng)
                        })
                        .collect()
                })
                .collect()
        }
    };
    PointSet::from_rows(rows)
}

pub fn gen_instance_to(spec: &InstanceSpec, path: impl AsRef<Path>) -> Result<PointSet> {
    let points = gen_instance(spec)?;
    write_points(path, &points)?;
    Ok(points)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shapes() {
        for generator in [Generator::UniformBox, Generator::GaussianMixture, Generator::GridPlusNoise] {
            let spec = InstanceSpec { generator, n: 37, d: 3, seed: 4, ..Default::default() };
            let p = gen_instance(&spec).unwrap();
            assert_eq!((p.len(), p.dim()), (37, 3));
            assert_eq!(p, gen_instance(&spec).unwrap());
        }
    }

    #[test]
    fn uniform_stays_in_box() {
        let spec = InstanceSpec { n: 500, d: 2, box_size: 3.0, seed: 9, ..Default::default() };
        let p = gen_instance(&spec).unwrap();
        assert!(p.iter().all(|q| q.coords().iter().all(|&x| (0.0..3.0).contains(&x))));
    }

    #[test]
    fn zero_noise_grid_is_exact() {
        let spec = InstanceSpec { generator: Generator::GridPlusNoise, n: 4, d: 2, spread: 0.0, ..Default::default() };
        let p = gen_instance(&spec).unwrap();
        assert_eq!(p.to_rows(), vec![vec![0.25, 0.25], vec![0.75, 0.25], vec![0.25, 0.75], vec![0.75, 0.75]]);
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(gen_instance(&InstanceSpec { n: 0, ..Default::default() }).is_err());
        assert!(gen_instance(&InstanceSpec { d: 0, ..Default::default() }).is_err());
        assert!(gen_instance(&InstanceSpec { spread: -1.0, ..Default::default() }).is_err());
        assert!("mystery".parse::<Generator>().is_err());
    }
}

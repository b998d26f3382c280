use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{Grid3, LabelVolume};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sphere {
    /// Center in mm, `(z, y, x)`.
    pub center: [f64; 3],
    pub radius: f64,
    pub class: u32,
}

/// Synthetic label volume made of spheres painted in order over background.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub grid: Grid3,
    pub spheres: Vec<Sphere>,
    pub num_classes: usize,
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::InvalidConfig(
                "a scene needs background plus at least one class".into(),
            ));
        }
        for (i, s) in self.spheres.iter().enumerate() {
            if s.class == 0 || s.class as usize >= self.num_classes {
                return Err(Error::InvalidConfig(format!(
                    "sphere {i} has class {} outside [1, {}]",
                    s.class,
                    self.num_classes - 1
                )));
            }
            if !(s.radius.is_finite() && s.radius > 0.0) || s.center.iter().any(|c| !c.is_finite())
            {
                return Err(Error::InvalidConfig(format!(
                    "sphere {i} needs a finite center and a positive radius"
                )));
            }
        }
        Ok(())
    }
}

/// Labels voxel `v` with the class of the last sphere containing its center.
pub fn make_scene(spec: &SceneSpec) -> Result<LabelVolume> {
    spec.validate()?;
    let grid = spec.grid;
    let extent: Vec<f64> = (0..3)
        .map(|a| grid.shape()[a] as f64 * grid.spacing()[a])
        .collect();
    for (i, s) in spec.spheres.iter().enumerate() {
        let outside =
            (0..3).any(|a| s.center[a] + s.radius < 0.0 || s.center[a] - s.radius > extent[a]);
        if outside {
            log::warn!("sphere {i} lies entirely outside the grid");
        }
    }
    let labels = (0..grid.len())
        .map(|i| {
            let c = grid.center_mm(i);
            spec.spheres
                .iter()
                .rev()
                .find(|s| {
                    let d: f64 = (0..3).map(|a| (c[a] - s.center[a]).powi(2)).sum();
                    d <= s.radius * s.radius
                })
                .map_or(0, |s| s.class)
        })
        .collect();
    LabelVolume::new(grid, labels, spec.num_classes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> Grid3 {
        Grid3::new([6, 6, 6], [1.0, 2.0, 1.5]).unwrap()
    }

    #[test]
    fn no_spheres_is_background() {
        let spec = SceneSpec {
            grid: grid(),
            spheres: vec![],
            num_classes: 2,
        };
        assert!(make_scene(&spec).unwrap().labels().iter().all(|&l| l == 0));
    }

    #[test]
    fn tiny_sphere_marks_one_voxel() {
        let g = grid();
        let center = g.center_mm(g.index(2, 3, 4));
        let spec = SceneSpec {
            grid: g,
            spheres: vec![Sphere {
                center,
                radius: 0.4,
                class: 1,
            }],
            num_classes: 2,
        };
        let lv = make_scene(&spec).unwrap();
        assert_eq!(lv.class_counts(), vec![215, 1]);
        assert_eq!(lv.labels()[g.index(2, 3, 4)], 1);
    }

    #[test]
    fn counts_match_enumeration() {
        let g = Grid3::isotropic([10, 10, 10]).unwrap();
        let a = Sphere {
            center: [3.0, 3.0, 3.0],
            radius: 2.0,
            class: 1,
        };
        let b = Sphere {
            center: [7.5, 7.5, 7.5],
            radius: 1.5,
            class: 2,
        };
        let inside = |s: &Sphere| {
            (0..g.len())
                .filter(|&i| {
                    let c = g.center_mm(i);
                    (0..3).map(|k| (c[k] - s.center[k]).powi(2)).sum::<f64>() <= s.radius.powi(2)
                })
                .count() as u64
        };
        let spec = SceneSpec {
            grid: g,
            spheres: vec![a.clone(), b.clone()],
            num_classes: 3,
        };
        let counts = make_scene(&spec).unwrap().class_counts();
        assert_eq!(counts[1], inside(&a));
        assert_eq!(counts[2], inside(&b));
        assert!(counts[1] > 0 && counts[2] > 0);
    }

    #[test]
    fn later_spheres_overwrite() {
        let g = Grid3::isotropic([4, 4, 4]).unwrap();
        let big = Sphere {
            center: [2.0; 3],
            radius: 10.0,
            class: 1,
        };
        let small = Sphere {
            center: [0.5; 3],
            radius: 0.1,
            class: 2,
        };
        let spec = SceneSpec {
            grid: g,
            spheres: vec![big, small],
            num_classes: 3,
        };
        assert_eq!(make_scene(&spec).unwrap().class_counts(), vec![0, 63, 1]);
    }

    #[test]
    fn invalid_specs() {
        let mut spec = SceneSpec {
            grid: grid(),
            spheres: vec![Sphere {
                center: [0.0; 3],
                radius: 1.0,
                class: 0,
            }],
            num_classes: 2,
        };
        assert!(make_scene(&spec).is_err());
        spec.spheres[0].class = 1;
        spec.spheres[0].radius = 0.0;
        assert!(make_scene(&spec).is_err());
    }

    #[test]
    fn outside_sphere_is_only_a_warning() {
        let spec = SceneSpec {
            grid: grid(),
            spheres: vec![Sphere {
                center: [100.0, 0.0, 0.0],
                radius: 1.0,
                class: 1,
            }],
            num_classes: 2,
        };
        assert_eq!(make_scene(&spec).unwrap().class_counts()[1], 0);
    }
}

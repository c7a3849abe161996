//! Synthetic two-class blob images with overlapping size distributions.
//!
//! Benign objects are smooth soft-edged disks; malignant ones have a
//! sinusoidally perturbed boundary. Benign diameters concentrate on small
//! sizes and malignant ones on large sizes, with both classes present in the
//! 5–12 px band where size alone is ambiguous.

use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::parallel::Exec;
use crate::seed;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Label {
    Benign = 0,
    Malignant = 1,
}

impl Label {
    pub fn as_u8(self) -> u8 {
        self as u8
    }

    pub fn as_f32(self) -> f32 {
        self as u8 as f32
    }

    pub fn from_u8(v: u8) -> Result<Self> {
        match v {
            0 => Ok(Label::Benign),
            1 => Ok(Label::Malignant),
            _ => Err(Error::InvalidLabel(v.to_string())),
        }
    }
}

/// Extents of the tight box around the object's non-background pixels.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BBox {
    pub width: u16,
    pub height: u16,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    /// `1 × S × S`
    pub image: Tensor<f32>,
    pub label: Label,
    pub diameter_px: f32,
    pub bbox: Option<BBox>,
}

/// Width × height of the object's bounding box.
pub fn object_area(sample: &Sample) -> Result<f64> {
    let b = sample
        .bbox
        .ok_or_else(|| Error::InvalidArgument("sample has no bounding box".into()))?;
    Ok(b.width as f64 * b.height as f64)
}

/// Normal distribution clipped into the global diameter band. A zero
/// standard deviation gives a fixed size.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiameterModel {
    pub mean: f64,
    pub std: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSpec {
    pub n_samples: usize,
    pub benign_fraction: f64,
    pub image_size: usize,
    pub min_diameter: f64,
    pub max_diameter: f64,
    pub benign_diameter: DiameterModel,
    pub malignant_diameter: DiameterModel,
    /// Relative boundary perturbation range for malignant objects.
    pub irregularity: (f64, f64),
    /// Standard deviation of the additive Gaussian background noise.
    pub noise_std: f64,
    /// Maximum offset of the object centre from the canvas centre.
    pub center_jitter: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_samples: 2000,
            benign_fraction: 0.52,
            image_size: 32,
            min_diameter: 3.0,
            max_diameter: 25.0,
            benign_diameter: DiameterModel { mean: 6.0, std: 2.0 },
            malignant_diameter: DiameterModel { mean: 17.5, std: 3.5 },
            irregularity: (0.15, 0.3),
            noise_std: 0.15,
            center_jitter: 1.5,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::InfeasibleSpec(m));
        if self.n_samples < 10 {
            return fail(format!("need at least 10 samples, got {}", self.n_samples));
        }
        if !(0.0..=1.0).contains(&self.benign_fraction) {
            return fail(format!("benign fraction {} outside [0, 1]", self.benign_fraction));
        }
        if !(self.min_diameter > 0.0 && self.min_diameter <= self.max_diameter) {
            return fail(format!(
                "diameter band [{}, {}] is empty or non-positive",
                self.min_diameter, self.max_diameter
            ));
        }
        let room = self.image_size as f64 - 2.0 * self.center_jitter - 2.0;
        if self.max_diameter > room {
            return fail(format!(
                "diameter {} does not fit a {}-px canvas with {} px jitter",
                self.max_diameter, self.image_size, self.center_jitter
            ));
        }
        for m in [self.benign_diameter, self.malignant_diameter] {
            if !(m.std >= 0.0 && m.mean.is_finite()) {
                return fail(format!("invalid diameter model {m:?}"));
            }
        }
        let (lo, hi) = self.irregularity;
        if !(0.0 <= lo && lo <= hi && hi < 1.0) {
            return fail(format!("irregularity range ({lo}, {hi}) outside [0, 1)"));
        }
        if self.noise_std < 0.0 || self.center_jitter < 0.0 {
            return fail("noise and jitter must be non-negative".into());
        }
        Ok(())
    }

    pub fn benign_count(&self) -> usize {
        (self.n_samples as f64 * self.benign_fraction).round() as usize
    }

    fn draw_diameter(&self, model: DiameterModel, rng: &mut seed::Rng) -> f64 {
        let d = if model.std == 0.0 {
            model.mean
        } else {
            Normal::new(model.mean, model.std)
                .expect("validated")
                .sample(rng)
        };
        d.clamp(self.min_diameter, self.max_diameter)
    }
}

/// Boundary radius as a function of polar angle.
#[derive(Clone, Copy, Debug)]
struct Outline {
    radius: f64,
    amplitude: f64,
    lobes: f64,
    phase: f64,
    cap: f64,
}

impl Outline {
    fn at(&self, theta: f64) -> f64 {
        (self.radius * (1.0 + self.amplitude * (self.lobes * theta + self.phase).sin())).min(self.cap)
    }
}

/// Render one object with a one-pixel anti-aliased edge. Returns the clean
/// image (no noise) and its bounding box.
fn render(size: usize, cy: f64, cx: f64, outline: Outline, contrast: f64) -> (Vec<f64>, BBox) {
    let mut img = vec![0.0; size * size];
    let (mut r0, mut r1, mut c0, mut c1) = (usize::MAX, 0, usize::MAX, 0);
    for r in 0..size {
        for c in 0..size {
            let (dy, dx) = (r as f64 + 0.5 - cy, c as f64 + 0.5 - cx);
            let dist = (dy * dy + dx * dx).sqrt();
            let edge = outline.at(dy.atan2(dx));
            let v = (edge - dist + 0.5).clamp(0.0, 1.0);
            if v > 0.0 {
                img[r * size + c] = v * contrast;
                r0 = r0.min(r);
                r1 = r1.max(r);
                c0 = c0.min(c);
                c1 = c1.max(c);
            }
        }
    }
    let bbox = if r0 == usize::MAX {
        BBox { width: 0, height: 0 }
    } else {
        BBox {
            width: (c1 - c0 + 1) as u16,
            height: (r1 - r0 + 1) as u16,
        }
    };
    (img, bbox)
}

fn make_sample(spec: &SyntheticSpec, index: usize, label: Label) -> Sample {
    let mut rng = seed::derived_rng(spec.seed, &[1, index as u64]);
    let model = match label {
        Label::Benign => spec.benign_diameter,
        Label::Malignant => spec.malignant_diameter,
    };
    let diameter = spec.draw_diameter(model, &mut rng);
    let centre = spec.image_size as f64 / 2.0;
    let j = spec.center_jitter;
    let (oy, ox) = if j > 0.0 {
        (rng.random_range(-j..=j), rng.random_range(-j..=j))
    } else {
        (0.0, 0.0)
    };
    let (cy, cx) = (centre + oy, centre + ox);
    let cap = centre - oy.abs().max(ox.abs()) - 0.5;
    let outline = match label {
        Label::Benign => Outline {
            radius: diameter / 2.0,
            amplitude: 0.0,
            lobes: 0.0,
            phase: 0.0,
            cap,
        },
        Label::Malignant => {
            let (lo, hi) = spec.irregularity;
            Outline {
                radius: diameter / 2.0,
                amplitude: if hi > lo { rng.random_range(lo..=hi) } else { lo },
                lobes: rng.random_range(3..=6) as f64,
                phase: rng.random_range(0.0..2.0 * PI),
                cap,
            }
        }
    };
    let contrast = rng.random_range(0.8..=1.0);
    let (clean, bbox) = render(spec.image_size, cy, cx, outline, contrast);
    let noise = Normal::new(0.0, spec.noise_std.max(f64::MIN_POSITIVE)).expect("finite");
    let pixels = clean
        .iter()
        .map(|&v| {
            let n = if spec.noise_std > 0.0 { noise.sample(&mut rng) } else { 0.0 };
            (v + n) as f32
        })
        .collect();
    Sample {
        image: Tensor::new(&[1, spec.image_size, spec.image_size], pixels).expect("square canvas"),
        label,
        diameter_px: diameter as f32,
        bbox: Some(bbox),
    }
}

/// Generate `spec.n_samples` samples; bitwise deterministic per seed and
/// independent of the execution strategy.
pub fn generate_dataset(spec: &SyntheticSpec) -> Result<Vec<Sample>> {
    generate_dataset_with(Exec::default(), spec)
}

pub fn generate_dataset_with(exec: Exec, spec: &SyntheticSpec) -> Result<Vec<Sample>> {
    spec.validate()?;
    let n_benign = spec.benign_count();
    let mut labels: Vec<Label> = (0..spec.n_samples)
        .map(|i| if i < n_benign { Label::Benign } else { Label::Malignant })
        .collect();
    labels.shuffle(&mut seed::derived_rng(spec.seed, &[0]));
    Ok(exec.map_collect(spec.n_samples, |i| make_sample(spec, i, labels[i])))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn clean_spec(n: usize, diameter: f64) -> SyntheticSpec {
        SyntheticSpec {
            n_samples: n,
            benign_fraction: 1.0,
            benign_diameter: DiameterModel { mean: diameter, std: 0.0 },
            noise_std: 0.0,
            ..SyntheticSpec::default()
        }
    }

    #[test]
    fn fixed_disk_bbox_matches_diameter() {
        for s in generate_dataset(&clean_spec(20, 8.0)).unwrap() {
            let b = s.bbox.unwrap();
            assert!((7..=9).contains(&b.width) && (7..=9).contains(&b.height), "{b:?}");
            assert_eq!(s.label, Label::Benign);
        }
    }

    #[test]
    fn area_of_diameter_ten_disk() {
        for s in generate_dataset(&clean_spec(20, 10.0)).unwrap() {
            let a = object_area(&s).unwrap();
            assert!((81.0..=121.0).contains(&a), "area {a}");
        }
    }

    #[test]
    fn object_area_is_width_times_height() {
        let mut s = generate_dataset(&clean_spec(10, 8.0)).unwrap().remove(0);
        s.bbox = Some(BBox { width: 3, height: 5 });
        assert_eq!(object_area(&s).unwrap(), 15.0);
        s.bbox = Some(BBox { width: 8, height: 8 });
        assert_eq!(object_area(&s).unwrap(), 64.0);
        s.bbox = None;
        assert!(object_area(&s).is_err());
    }

    #[test]
    fn class_counts_follow_fraction() {
        let spec = SyntheticSpec {
            n_samples: 848,
            benign_fraction: 442.0 / 848.0,
            ..SyntheticSpec::default()
        };
        let data = generate_dataset(&spec).unwrap();
        let benign = data.iter().filter(|s| s.label == Label::Benign).count();
        assert_eq!(benign, 442);
        assert!(data
            .iter()
            .all(|s| (3.0..=25.0).contains(&s.diameter_px)));
    }

    #[test]
    fn infeasible_specs_rejected() {
        let base = SyntheticSpec::default();
        for bad in [
            SyntheticSpec { n_samples: 5, ..base.clone() },
            SyntheticSpec { max_diameter: 40.0, ..base.clone() },
            SyntheticSpec { min_diameter: 0.0, ..base.clone() },
            SyntheticSpec { benign_fraction: 1.5, ..base.clone() },
        ] {
            assert!(matches!(generate_dataset(&bad), Err(Error::InfeasibleSpec(_))));
        }
    }

    #[test]
    fn strategies_produce_identical_data() {
        let spec = SyntheticSpec { n_samples: 40, seed: 9, ..SyntheticSpec::default() };
        assert_eq!(
            generate_dataset_with(Exec::Sequential, &spec).unwrap(),
            generate_dataset_with(Exec::Parallel, &spec).unwrap()
        );
    }
}

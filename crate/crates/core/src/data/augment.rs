//! Lossless rotations, Gaussian blur and z-score normalization of
//! single-channel square images (`1 × S × S`).

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const BLUR_SIGMA: f64 = 1.0;

fn square_side(image: &Tensor<f32>) -> Result<usize> {
    match *image.shape() {
        [1, h, w] if h == w => Ok(h),
        _ => Err(Error::InvalidShape(format!(
            "expected a 1×S×S image, got {:?}",
            image.shape()
        ))),
    }
}

/// Rotate by 90° counter-clockwise: the pixel at `(r, c)` moves to
/// `(S − 1 − c, r)`.
pub fn rotate90(image: &Tensor<f32>) -> Result<Tensor<f32>> {
    let s = square_side(image)?;
    let src = image.data();
    let data = (0..s * s)
        .map(|i| {
            let (r, c) = (i / s, i % s);
            src[c * s + (s - 1 - r)]
        })
        .collect();
    Tensor::new(image.shape(), data)
}

/// The image at 0°, 90°, 180° and 270°.
pub fn rotate_views(image: &Tensor<f32>) -> Result<[Tensor<f32>; 4]> {
    let r90 = rotate90(image)?;
    let r180 = rotate90(&r90)?;
    let r270 = rotate90(&r180)?;
    Ok([image.clone(), r90, r180, r270])
}

/// Normalized discrete Gaussian truncated at radius `ceil(3σ)`.
pub fn gaussian_kernel(sigma: f64) -> Result<Vec<f64>> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidArgument(format!("blur sigma must be positive, got {sigma}")));
    }
    let radius = (3.0 * sigma).ceil() as i64;
    let raw: Vec<f64> = (-radius..=radius)
        .map(|x| (-(x * x) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = raw.iter().sum();
    Ok(raw.into_iter().map(|v| v / total).collect())
}

/// Mirror an out-of-range index back into `[0, n)` without repeating the
/// edge sample (`… 2 1 | 0 1 2 … n−1 | n−2 …`).
pub fn reflect_index(i: i64, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as i64 - 1);
    let m = i.rem_euclid(period);
    (if m < n as i64 { m } else { period - m }) as usize
}

/// Separable Gaussian blur with reflect padding.
pub fn gaussian_blur(image: &Tensor<f32>, sigma: f64) -> Result<Tensor<f32>> {
    let s = square_side(image)?;
    let kernel = gaussian_kernel(sigma)?;
    let radius = (kernel.len() / 2) as i64;
    let src: Vec<f64> = image.data().iter().map(|&v| v as f64).collect();
    let mut rows = vec![0.0f64; s * s];
    for r in 0..s {
        for c in 0..s {
            rows[r * s + c] = kernel
                .iter()
                .enumerate()
                .map(|(t, &k)| k * src[r * s + reflect_index(c as i64 + t as i64 - radius, s)])
                .sum();
        }
    }
    let mut out = vec![0.0f32; s * s];
    for r in 0..s {
        for c in 0..s {
            let v: f64 = kernel
                .iter()
                .enumerate()
                .map(|(t, &k)| k * rows[reflect_index(r as i64 + t as i64 - radius, s) * s + c])
                .sum();
            out[r * s + c] = v as f32;
        }
    }
    Tensor::new(image.shape(), out)
}

/// Training-time expansion of one image: four rotations plus a blurred copy
/// of the unrotated image.
pub fn augment_training(image: &Tensor<f32>) -> Result<Vec<Tensor<f32>>> {
    let mut views: Vec<_> = rotate_views(image)?.into();
    views.push(gaussian_blur(image, BLUR_SIGMA)?);
    Ok(views)
}

pub const TRAINING_VIEWS: usize = 5;

/// Standard-score statistics fitted on a training set.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ZScore {
    pub mean: f64,
    pub std: f64,
}

impl ZScore {
    /// Mean and population standard deviation over every pixel of `images`.
    pub fn fit<'a>(images: impl IntoIterator<Item = &'a Tensor<f32>>) -> Result<Self> {
        let images: Vec<&Tensor<f32>> = images.into_iter().collect();
        let n: usize = images.iter().map(|t| t.numel()).sum();
        if n == 0 {
            return Err(Error::InvalidArgument("cannot fit z-score on an empty set".into()));
        }
        let pixels = || images.iter().flat_map(|t| t.data().iter().map(|&v| v as f64));
        let mean = pixels().sum::<f64>() / n as f64;
        let var = pixels().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
        let std = var.sqrt();
        if std.is_nan() || std <= 0.0 {
            return Err(Error::ZeroVariance("training pixels are constant".into()));
        }
        Ok(Self { mean, std })
    }

    pub fn apply(&self, image: &Tensor<f32>) -> Tensor<f32> {
        let (m, s) = (self.mean, self.std);
        image.map(|v| ((v as f64 - m) / s) as f32)
    }
}

type Images = Vec<Tensor<f32>>;

/// Fit statistics on `train` and apply them to both sets.
pub fn zscore_fit_apply(train: &[Tensor<f32>], test: &[Tensor<f32>]) -> Result<(Images, Images, ZScore)> {
    let z = ZScore::fit(train)?;
    Ok((
        train.iter().map(|t| z.apply(t)).collect(),
        test.iter().map(|t| z.apply(t)).collect(),
        z,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(s: usize) -> Tensor<f32> {
        Tensor::from_fn(&[1, s, s], |i| (i * 7 % 13) as f32)
    }

    #[test]
    fn four_quarter_turns_are_identity() {
        let img = ramp(6);
        let mut r = img.clone();
        for _ in 0..4 {
            r = rotate90(&r).unwrap();
        }
        assert_eq!(r, img);
        let half = rotate90(&rotate90(&img).unwrap()).unwrap();
        assert_eq!(rotate90(&rotate90(&half).unwrap()).unwrap(), img);
    }

    #[test]
    fn hot_pixel_moves_counter_clockwise() {
        let s = 32;
        let (r, c) = (3usize, 20usize);
        let mut img = Tensor::<f32>::zeros(&[1, s, s]);
        img.data_mut()[r * s + c] = 1.0;
        let rot = rotate90(&img).unwrap();
        let hot: Vec<usize> = (0..s * s).filter(|&i| rot.data()[i] == 1.0).collect();
        assert_eq!(hot, vec![(s - 1 - c) * s + r]);
    }

    #[test]
    fn blur_preserves_constants() {
        let img = Tensor::<f32>::full(&[1, 32, 32], 2.5);
        let b = gaussian_blur(&img, 1.0).unwrap();
        assert!(b.data().iter().all(|&v| (v - 2.5).abs() < 1e-6));
    }

    #[test]
    fn kernel_shape() {
        let k = gaussian_kernel(1.0).unwrap();
        assert_eq!(k.len(), 7);
        assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(gaussian_kernel(0.0).is_err());
    }

    #[test]
    fn reflect_indices() {
        assert_eq!(reflect_index(-1, 5), 1);
        assert_eq!(reflect_index(-2, 5), 2);
        assert_eq!(reflect_index(5, 5), 3);
        assert_eq!(reflect_index(6, 5), 2);
        assert_eq!(reflect_index(3, 1), 0);
    }

    #[test]
    fn augmentation_yields_five_views() {
        assert_eq!(augment_training(&ramp(8)).unwrap().len(), TRAINING_VIEWS);
    }

    #[test]
    fn zscore_normalizes_training_set() {
        let train: Vec<_> = (0..4).map(|k| Tensor::from_fn(&[1, 4, 4], |i| (i + k) as f32)).collect();
        let test = vec![Tensor::full(&[1, 4, 4], 100.0f32)];
        let (tn, te, z) = zscore_fit_apply(&train, &test).unwrap();
        let all: Vec<f64> = tn.iter().flat_map(|t| t.data().iter().map(|&v| v as f64)).collect();
        let mean = all.iter().sum::<f64>() / all.len() as f64;
        let var = all.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / all.len() as f64;
        assert!(mean.abs() < 1e-5);
        assert!((var.sqrt() - 1.0).abs() < 1e-4);
        assert_eq!(te[0].data()[0], ((100.0 - z.mean) / z.std) as f32);
        let flat = vec![Tensor::full(&[1, 4, 4], 3.0f32)];
        assert!(matches!(ZScore::fit(&flat), Err(Error::ZeroVariance(_))));
    }
}

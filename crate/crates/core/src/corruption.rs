//! Seeded synthetic corruption: block, cross, and salt & pepper masks
//! covering a fixed pixel budget (`round(fraction * height * width)`),
//! applied per image with a fill rule.
//!
//! Pixels are indexed row-major within an image, matching the vectorization
//! used throughout the crate. Per-image masks are drawn from an RNG seeded
//! with `seed XOR column_index`, so corruption is reproducible per column
//! and independent across columns.

use std::fmt;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_chacha::rand_core::SeedableRng;

use crate::error::{CrtError, Result};
use crate::io::LabeledDataset;
use crate::Matrix;

/// Corruption geometry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseKind {
    /// One axis-aligned square (plus a partial row to hit the budget).
    Block,
    /// A horizontal and a vertical bar through a common center.
    Cross,
    /// Uniformly scattered pixels.
    SaltPepper,
}

impl fmt::Display for NoiseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NoiseKind::Block => "block",
            NoiseKind::Cross => "cross",
            NoiseKind::SaltPepper => "saltpepper",
        })
    }
}

impl FromStr for NoiseKind {
    type Err = CrtError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "block" => Ok(NoiseKind::Block),
            "cross" => Ok(NoiseKind::Cross),
            "saltpepper" | "salt_pepper" | "salt-pepper" => Ok(NoiseKind::SaltPepper),
            other => Err(CrtError::InvalidArgument(format!(
                "unknown noise kind {other:?} (expected block, cross, or saltpepper)"
            ))),
        }
    }
}

/// Replacement value for corrupted pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FillRule {
    Zeros,
    /// Full brightness (1.0 on normalized data).
    Max,
    /// Independent 0/1 per pixel; the salt & pepper look.
    RandomBinary,
}

impl fmt::Display for FillRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FillRule::Zeros => "zeros",
            FillRule::Max => "max",
            FillRule::RandomBinary => "random_binary",
        })
    }
}

impl FromStr for FillRule {
    type Err = CrtError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "zeros" => Ok(FillRule::Zeros),
            "max" => Ok(FillRule::Max),
            "random_binary" | "random-binary" => Ok(FillRule::RandomBinary),
            other => Err(CrtError::InvalidArgument(format!(
                "unknown fill rule {other:?} (expected zeros, max, or random_binary)"
            ))),
        }
    }
}

/// Parameters of a corruption pass.
#[derive(Debug, Clone, Copy)]
pub struct CorruptionSpec {
    pub kind: NoiseKind,
    /// Fraction of the image area to corrupt, in (0, 1).
    pub fraction: f64,
    pub seed: u64,
    pub fill: FillRule,
}

impl CorruptionSpec {
    /// Spec with the conventional fill for the kind: random 0/1 for salt &
    /// pepper, zeros for block and cross.
    pub fn new(kind: NoiseKind, fraction: f64, seed: u64) -> Self {
        let fill = match kind {
            NoiseKind::SaltPepper => FillRule::RandomBinary,
            _ => FillRule::Zeros,
        };
        CorruptionSpec {
            kind,
            fraction,
            seed,
            fill,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fraction > 0.0 && self.fraction < 1.0) {
            return Err(CrtError::InvalidArgument(format!(
                "fraction must be in (0, 1), got {}",
                self.fraction
            )));
        }
        Ok(())
    }
}

/// Boolean corruption support over an image's pixels (row-major).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorruptionMask {
    bits: Vec<bool>,
}

impl CorruptionMask {
    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    /// Number of corrupted pixels.
    pub fn cardinality(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_set(&self, pixel: usize) -> bool {
        self.bits[pixel]
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.bits
    }
}

fn pixel_budget(spec: &CorruptionSpec, height: usize, width: usize) -> Result<usize> {
    spec.validate()?;
    let area = height * width;
    if area == 0 {
        return Err(CrtError::InvalidArgument("empty image geometry".to_string()));
    }
    let budget = (spec.fraction * area as f64).round() as usize;
    if budget == 0 {
        return Err(CrtError::InvalidArgument(
            "corruption budget rounds to zero pixels".to_string(),
        ));
    }
    if budget >= area {
        return Err(CrtError::InvalidArgument(format!(
            "corruption budget {budget} covers the whole {height}x{width} image"
        )));
    }
    Ok(budget)
}

/// Draw one corruption mask with exactly the budgeted cardinality.
pub fn make_mask(
    spec: &CorruptionSpec,
    height: usize,
    width: usize,
    rng: &mut ChaCha8Rng,
) -> Result<CorruptionMask> {
    let budget = pixel_budget(spec, height, width)?;
    let mut bits = vec![false; height * width];
    match spec.kind {
        NoiseKind::Block => {
            let side = (budget as f64).sqrt().floor() as usize;
            let extra = budget - side * side;
            let rows_needed = side + usize::from(extra > 0);
            let cols_needed = side.max(extra);
            if rows_needed > height || cols_needed > width {
                return Err(CrtError::InvalidArgument(format!(
                    "block of {budget} pixels does not fit a {height}x{width} image"
                )));
            }
            let r0 = rng.random_range(0..=height - rows_needed);
            let c0 = rng.random_range(0..=width - cols_needed);
            for r in r0..r0 + side {
                for c in c0..c0 + side {
                    bits[r * width + c] = true;
                }
            }
            // partial row below the square to hit the budget exactly
            for c in c0..c0 + extra {
                bits[(r0 + side) * width + c] = true;
            }
        }
        NoiseKind::Cross => {
            // Thickness whose bar-union cardinality is closest to the budget,
            // then grow/trim pixels nearest the center to hit it exactly.
            let max_t = height.min(width);
            let card = |t: usize| t * (height + width) - t * t;
            let thickness = (1..=max_t)
                .min_by_key(|&t| (card(t) as i64 - budget as i64).abs())
                .expect("at least thickness 1");
            let hr0 = rng.random_range(0..=height - thickness);
            let vc0 = rng.random_range(0..=width - thickness);
            let center_r = hr0 as f64 + (thickness as f64 - 1.0) / 2.0;
            let center_c = vc0 as f64 + (thickness as f64 - 1.0) / 2.0;
            let in_cross = |r: usize, c: usize| {
                (r >= hr0 && r < hr0 + thickness) || (c >= vc0 && c < vc0 + thickness)
            };
            let dist = |pixel: &usize| {
                let r = (pixel / width) as f64;
                let c = (pixel % width) as f64;
                let d = (r - center_r).powi(2) + (c - center_c).powi(2);
                // order by distance, ties by pixel index
                (ordered_float(d), *pixel)
            };
            let (mut member, mut outside): (Vec<usize>, Vec<usize>) =
                (0..height * width).partition(|&p| in_cross(p / width, p % width));
            member.sort_by_key(dist);
            if member.len() >= budget {
                member.truncate(budget);
            } else {
                outside.sort_by_key(dist);
                let need = budget - member.len();
                member.extend_from_slice(&outside[..need]);
            }
            for p in member {
                bits[p] = true;
            }
        }
        NoiseKind::SaltPepper => {
            for idx in sample(rng, height * width, budget) {
                bits[idx] = true;
            }
        }
    }
    let mask = CorruptionMask { bits };
    debug_assert_eq!(mask.cardinality(), budget);
    Ok(mask)
}

// total order on finite nonnegative distances
fn ordered_float(d: f64) -> u64 {
    d.to_bits()
}

/// Corrupt every image of a dataset with an independently drawn mask.
///
/// Unmasked pixels are bit-identical to the input; labels and geometry are
/// untouched. Returns the corrupted dataset and the per-column masks.
pub fn apply_corruption(
    data: &LabeledDataset,
    spec: &CorruptionSpec,
) -> Result<(LabeledDataset, Vec<CorruptionMask>)> {
    let mut corrupted = data.data.clone();
    let mut masks = Vec::with_capacity(data.num_samples());
    for j in 0..data.num_samples() {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ j as u64);
        let mask = make_mask(spec, data.height, data.width, &mut rng)?;
        {
            let mut col = corrupted.column_mut(j);
            for pixel in 0..mask.len() {
                if !mask.is_set(pixel) {
                    continue;
                }
                col[pixel] = match spec.fill {
                    FillRule::Zeros => 0.0,
                    FillRule::Max => 1.0,
                    FillRule::RandomBinary => {
                        if rng.random_bool(0.5) {
                            1.0
                        } else {
                            0.0
                        }
                    }
                };
            }
        }
        masks.push(mask);
    }
    let out = LabeledDataset::new(corrupted, data.labels.clone(), data.height, data.width)?;
    Ok((out, masks))
}

/// Masks as a 0/1 matrix with the dataset's shape, for file export.
pub fn masks_to_matrix(masks: &[CorruptionMask]) -> Matrix {
    assert!(!masks.is_empty(), "no masks");
    let p = masks[0].len();
    Matrix::from_fn(p, masks.len(), |i, j| {
        if masks[j].is_set(i) {
            1.0
        } else {
            0.0
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn mask_for(kind: NoiseKind, fraction: f64, seed: u64, h: usize, w: usize) -> CorruptionMask {
        let spec = CorruptionSpec::new(kind, fraction, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        make_mask(&spec, h, w, &mut rng).unwrap()
    }

    #[test]
    fn ten_percent_of_20x20_is_40_pixels() {
        for kind in [NoiseKind::Block, NoiseKind::Cross, NoiseKind::SaltPepper] {
            let mask = mask_for(kind, 0.10, 7, 20, 20);
            assert_eq!(mask.cardinality(), 40, "{kind}");
        }
    }

    #[test]
    fn unit_budget_is_a_single_pixel() {
        // fraction small enough that the budget rounds to one pixel
        let mask = mask_for(NoiseKind::Block, 0.01, 3, 10, 10);
        assert_eq!(mask.cardinality(), 1);
    }

    #[test]
    fn zero_budget_rejected() {
        let spec = CorruptionSpec::new(NoiseKind::Block, 0.001, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let err = make_mask(&spec, 10, 10, &mut rng).unwrap_err();
        assert!(err.to_string().contains("zero"));
    }

    #[test]
    fn whole_image_budget_rejected() {
        let spec = CorruptionSpec::new(NoiseKind::SaltPepper, 0.999, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert!(make_mask(&spec, 2, 2, &mut rng).is_err());
    }

    #[test]
    fn masks_are_reproducible_per_seed() {
        for kind in [NoiseKind::Block, NoiseKind::Cross, NoiseKind::SaltPepper] {
            let a = mask_for(kind, 0.1, 42, 16, 16);
            let b = mask_for(kind, 0.1, 42, 16, 16);
            assert_eq!(a, b);
            let mut distinct = 0;
            for seed in 0..20 {
                if mask_for(kind, 0.1, seed, 16, 16) != a {
                    distinct += 1;
                }
            }
            assert!(distinct >= 19, "{kind}: masks barely vary across seeds");
        }
    }

    #[test]
    fn block_mask_is_contiguous_square_plus_partial_row() {
        // 20x20 at 10%: budget 40 = 6^2 + 4 extras
        let mask = mask_for(NoiseKind::Block, 0.1, 9, 20, 20);
        let rows: Vec<usize> = (0..400).filter(|&p| mask.is_set(p)).map(|p| p / 20).collect();
        let cols: Vec<usize> = (0..400).filter(|&p| mask.is_set(p)).map(|p| p % 20).collect();
        let rspan = rows.iter().max().unwrap() - rows.iter().min().unwrap() + 1;
        let cspan = cols.iter().max().unwrap() - cols.iter().min().unwrap() + 1;
        assert_eq!(rspan, 7); // 6 full rows + 1 partial
        assert_eq!(cspan, 6);
    }

    #[test]
    fn corrupting_constant_image_zeroes_exactly_the_budget() {
        let data = Matrix::from_element(400, 3, 1.0);
        let ds = LabeledDataset::new(data, vec![0, 1, 2], 20, 20).unwrap();
        let spec = CorruptionSpec::new(NoiseKind::Block, 0.1, 5);
        let (out, masks) = apply_corruption(&ds, &spec).unwrap();
        for j in 0..3 {
            let zeros = out.data.column(j).iter().filter(|&&v| v == 0.0).count();
            assert_eq!(zeros, 40);
            assert_eq!(masks[j].cardinality(), 40);
        }
        assert_eq!(out.labels, ds.labels);
        assert_eq!((out.height, out.width), (20, 20));
    }

    #[test]
    fn unmasked_pixels_are_bit_identical() {
        let data = Matrix::from_fn(64, 5, |i, j| ((i * 7 + j * 3) as f64 * 0.013).sin().abs());
        let ds = LabeledDataset::new(data, vec![0, 0, 1, 1, 1], 8, 8).unwrap();
        let spec = CorruptionSpec::new(NoiseKind::Cross, 0.12, 77);
        let (out, masks) = apply_corruption(&ds, &spec).unwrap();
        for j in 0..5 {
            for pixel in 0..64 {
                if !masks[j].is_set(pixel) {
                    assert_eq!(
                        out.data[(pixel, j)].to_bits(),
                        ds.data[(pixel, j)].to_bits()
                    );
                }
            }
        }
    }

    #[test]
    fn salt_pepper_fills_binary_values_on_mid_gray() {
        let data = Matrix::from_element(100, 4, 0.5);
        let ds = LabeledDataset::new(data, vec![0, 0, 1, 1], 10, 10).unwrap();
        let spec = CorruptionSpec::new(NoiseKind::SaltPepper, 0.1, 11);
        assert_eq!(spec.fill, FillRule::RandomBinary);
        let (out, masks) = apply_corruption(&ds, &spec).unwrap();
        for j in 0..4 {
            let mut corrupted_count = 0;
            for pixel in 0..100 {
                if masks[j].is_set(pixel) {
                    corrupted_count += 1;
                    let v = out.data[(pixel, j)];
                    assert!(v == 0.0 || v == 1.0, "fill value {v}");
                } else {
                    assert_eq!(out.data[(pixel, j)], 0.5);
                }
            }
            assert_eq!(corrupted_count, 10);
        }
    }

    #[test]
    fn max_fill_writes_ones() {
        let data = Matrix::from_element(16, 2, 0.25);
        let ds = LabeledDataset::new(data, vec![0, 1], 4, 4).unwrap();
        let spec = CorruptionSpec {
            fill: FillRule::Max,
            ..CorruptionSpec::new(NoiseKind::Block, 0.2, 1)
        };
        let (out, masks) = apply_corruption(&ds, &spec).unwrap();
        for j in 0..2 {
            let ones = out.data.column(j).iter().filter(|&&v| v == 1.0).count();
            assert_eq!(ones, masks[j].cardinality());
        }
    }

    #[test]
    fn apply_corruption_is_deterministic() {
        let data = Matrix::from_fn(64, 6, |i, j| ((i + j) as f64 * 0.07) % 1.0);
        let ds = LabeledDataset::new(data, vec![0, 0, 0, 1, 1, 1], 8, 8).unwrap();
        let spec = CorruptionSpec::new(NoiseKind::SaltPepper, 0.15, 1234);
        let (a, am) = apply_corruption(&ds, &spec).unwrap();
        let (b, bm) = apply_corruption(&ds, &spec).unwrap();
        assert_eq!(a.data.as_slice(), b.data.as_slice());
        assert_eq!(am, bm);
    }

    #[test]
    fn masks_export_as_zero_one_matrix() {
        let masks = vec![
            mask_for(NoiseKind::SaltPepper, 0.25, 2, 4, 4),
            mask_for(NoiseKind::SaltPepper, 0.25, 3, 4, 4),
        ];
        let m = masks_to_matrix(&masks);
        assert_eq!(m.shape(), (16, 2));
        for j in 0..2 {
            let sum: f64 = m.column(j).sum();
            assert_eq!(sum as usize, masks[j].cardinality());
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn cardinality_always_equals_budget(
            seed in 0u64..500,
            h in 8usize..24,
            w in 8usize..24,
            pct in 2usize..25,
            kind_pick in 0usize..3,
        ) {
            let kind = [NoiseKind::Block, NoiseKind::Cross, NoiseKind::SaltPepper][kind_pick];
            let fraction = pct as f64 / 100.0;
            let spec = CorruptionSpec::new(kind, fraction, seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            if let Ok(mask) = make_mask(&spec, h, w, &mut rng) {
                let budget = (fraction * (h * w) as f64).round() as usize;
                prop_assert_eq!(mask.cardinality(), budget);
            }
        }
    }
}

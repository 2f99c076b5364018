//! Paired toy segmentation domains.
//!
//! Every sample is a square grid, flattened row-major. The label is a union
//! of one to three axis-aligned ellipses. The input is
//!
//! ```text
//! x = contrast · mask + background + σ · noise
//! ```
//!
//! with a unit-variance Gaussian background texture. Mask and background
//! come from the *mask* seed and noise from the *render* seed, so two
//! domains built with the same mask seed share labels and anatomy and differ
//! only in contrast and noise, like two co-registered scan modalities.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::parallel;
use crate::rng::{derive_seed, rng_from, stream};
use crate::tensor::{DomainBatch, Matrix};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    pub domain: usize,
    /// Side length of the square image.
    pub grid: usize,
    pub contrast: f64,
    pub noise_sigma: f64,
    pub count: usize,
    pub mask_seed: u64,
    pub render_seed: u64,
}

impl DomainSpec {
    pub fn validate(&self) -> Result<()> {
        if self.grid == 0 || self.count == 0 {
            return Err(Error::config("grid size and sample count must be positive"));
        }
        if !(self.contrast >= 0.0 && self.contrast.is_finite()) {
            return Err(Error::config(format!("contrast {} must be >= 0", self.contrast)));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::config(format!("noise σ {} must be >= 0", self.noise_sigma)));
        }
        Ok(())
    }

    pub fn pixels(&self) -> usize {
        self.grid * self.grid
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub domain: usize,
    pub inputs: Matrix,
    pub labels: Matrix,
}

impl Dataset {
    pub fn new(domain: usize, inputs: Matrix, labels: Matrix) -> Result<Self> {
        if inputs.rows() != labels.rows() || inputs.cols() != labels.cols() {
            return Err(Error::shape(format!(
                "inputs {}x{} vs labels {}x{}",
                inputs.rows(),
                inputs.cols(),
                labels.rows(),
                labels.cols()
            )));
        }
        if labels.as_slice().iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::shape("labels must be binary"));
        }
        Ok(Self { domain, inputs, labels })
    }

    pub fn len(&self) -> usize {
        self.inputs.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            domain: self.domain,
            inputs: self.inputs.select_rows(indices),
            labels: self.labels.select_rows(indices),
        }
    }

    pub fn as_batch(&self) -> DomainBatch {
        DomainBatch {
            domain: self.domain,
            inputs: self.inputs.clone(),
            labels: self.labels.clone(),
        }
    }
}

fn render_mask<R: Rng>(rng: &mut R, grid: usize) -> Vec<f64> {
    let g = grid as f64;
    let blobs = rng.random_range(1..=3);
    let ellipses: Vec<(f64, f64, f64, f64)> = (0..blobs)
        .map(|_| {
            let cx = rng.random_range(0.0..g);
            let cy = rng.random_range(0.0..g);
            let rx = rng.random_range(g / 10.0..=g / 4.0);
            let ry = rng.random_range(g / 10.0..=g / 4.0);
            (cx, cy, rx, ry)
        })
        .collect();
    let mut mask = vec![0.0; grid * grid];
    for r in 0..grid {
        for c in 0..grid {
            let (x, y) = (c as f64 + 0.5, r as f64 + 0.5);
            let inside = ellipses
                .iter()
                .any(|&(cx, cy, rx, ry)| ((x - cx) / rx).powi(2) + ((y - cy) / ry).powi(2) <= 1.0);
            if inside {
                mask[r * grid + c] = 1.0;
            }
        }
    }
    mask
}

fn render_sample(spec: &DomainSpec, index: usize) -> (Vec<f64>, Vec<f64>) {
    let mut anatomy = rng_from(derive_seed(spec.mask_seed, stream::SAMPLE, index as u64));
    let mask = render_mask(&mut anatomy, spec.grid);
    let background: Vec<f64> = (0..spec.pixels()).map(|_| anatomy.sample(StandardNormal)).collect();

    let mut noise = rng_from(derive_seed(spec.render_seed, stream::SAMPLE, index as u64));
    let input = mask
        .iter()
        .zip(&background)
        .map(|(m, b)| {
            let n: f64 = noise.sample(StandardNormal);
            spec.contrast * m + b + spec.noise_sigma * n
        })
        .collect();
    (input, mask)
}

/// Synthesizes one domain. Each sample draws from its own derived seeds,
/// so the output does not depend on evaluation order.
pub fn gen_domain(spec: &DomainSpec) -> Result<Dataset> {
    spec.validate()?;
    let samples = parallel::map_indexed(spec.count, |i| render_sample(spec, i));
    let (mut inputs, mut labels) = (
        Vec::with_capacity(spec.count * spec.pixels()),
        Vec::with_capacity(spec.count * spec.pixels()),
    );
    for (x, y) in samples {
        inputs.extend(x);
        labels.extend(y);
    }
    Dataset::new(
        spec.domain,
        Matrix::new(spec.count, spec.pixels(), inputs)?,
        Matrix::new(spec.count, spec.pixels(), labels)?,
    )
}

/// Uniform subset of `round(fraction · n)` samples without replacement,
/// kept in original order.
pub fn downsample(data: &Dataset, fraction: f64, seed: u64) -> Result<Dataset> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::config(format!("fraction {fraction} outside (0, 1]")));
    }
    let keep = (fraction * data.len() as f64).round() as usize;
    if keep == 0 {
        return Err(Error::config(format!(
            "keeping {fraction} of {} samples leaves none",
            data.len()
        )));
    }
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut rng_from(derive_seed(seed, stream::DOWNSAMPLE, 0)));
    let mut chosen = order[..keep].to_vec();
    chosen.sort_unstable();
    Ok(data.subset(&chosen))
}

/// Endless stream of mini-batches. Each epoch visits every sample once in
/// a fresh permutation derived from `(seed, epoch)`. A tail shorter than
/// two samples is folded into the epoch's last batch, so every batch can
/// be split into meta-train and meta-test halves.
#[derive(Debug, Clone)]
pub struct Batcher<'a> {
    data: &'a Dataset,
    batch_size: usize,
    seed: u64,
    epoch: u64,
    order: Vec<usize>,
    pos: usize,
}

impl<'a> Batcher<'a> {
    pub fn new(data: &'a Dataset, batch_size: usize, seed: u64) -> Result<Self> {
        if batch_size == 0 || batch_size > data.len() {
            return Err(Error::config(format!(
                "batch size {batch_size} must be in 1..={}",
                data.len()
            )));
        }
        let mut b = Self {
            data,
            batch_size,
            seed,
            epoch: 0,
            order: Vec::new(),
            pos: 0,
        };
        b.reshuffle();
        Ok(b)
    }

    fn reshuffle(&mut self) {
        self.order = (0..self.data.len()).collect();
        self.order
            .shuffle(&mut rng_from(derive_seed(self.seed, stream::EPOCH, self.epoch)));
        self.pos = 0;
    }

    /// Zero-based epoch of the next batch.
    pub fn epoch(&self) -> u64 {
        if self.pos >= self.order.len() {
            self.epoch + 1
        } else {
            self.epoch
        }
    }
}

impl Iterator for Batcher<'_> {
    type Item = DomainBatch;

    fn next(&mut self) -> Option<DomainBatch> {
        if self.pos >= self.order.len() {
            self.epoch += 1;
            self.reshuffle();
        }
        let n = self.order.len();
        let mut end = (self.pos + self.batch_size).min(n);
        if n - end < 2 {
            end = n;
        }
        let batch = self.data.subset(&self.order[self.pos..end]).as_batch();
        self.pos = end;
        Some(batch)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(contrast: f64, sigma: f64, count: usize) -> DomainSpec {
        DomainSpec {
            domain: 0,
            grid: 16,
            contrast,
            noise_sigma: sigma,
            count,
            mask_seed: 42,
            render_seed: 7,
        }
    }

    #[test]
    fn deterministic_generation() {
        let a = gen_domain(&spec(2.0, 0.5, 6)).unwrap();
        let b = gen_domain(&spec(2.0, 0.5, 6)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.inputs.cols(), 256);
        assert!(a.inputs.as_slice().iter().all(|v| v.is_finite()));
        assert!(a.labels.as_slice().contains(&1.0));
    }

    #[test]
    fn paired_domains_share_labels() {
        let a = gen_domain(&spec(4.0, 0.1, 8)).unwrap();
        let mut sb = spec(0.5, 1.5, 8);
        sb.domain = 1;
        sb.render_seed = 99;
        let b = gen_domain(&sb).unwrap();
        assert_eq!(a.labels, b.labels);
        assert_ne!(a.inputs, b.inputs);
    }

    #[test]
    fn noiseless_high_contrast_thresholds_cleanly() {
        let d = gen_domain(&spec(12.0, 0.0, 10)).unwrap();
        let pred = crate::losses::binarize(d.inputs.as_slice(), 6.0);
        let dsc = crate::losses::dsc_metric(&pred, d.labels.as_slice()).unwrap();
        assert!(dsc > 0.999, "{dsc}");
    }

    #[test]
    fn zero_contrast_carries_no_signal() {
        let d = gen_domain(&spec(0.0, 0.5, 40)).unwrap();
        let (x, y) = (d.inputs.as_slice(), d.labels.as_slice());
        let n = x.len() as f64;
        let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
        let cov: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / n;
        let sx = (x.iter().map(|a| (a - mx).powi(2)).sum::<f64>() / n).sqrt();
        let sy = (y.iter().map(|b| (b - my).powi(2)).sum::<f64>() / n).sqrt();
        assert!((cov / (sx * sy)).abs() < 0.05);
    }

    #[test]
    fn invalid_specs() {
        assert!(gen_domain(&spec(-1.0, 0.0, 4)).is_err());
        assert!(gen_domain(&spec(1.0, -0.1, 4)).is_err());
    }

    #[test]
    fn downsample_examples() {
        let d = gen_domain(&spec(1.0, 1.0, 12)).unwrap();
        assert_eq!(downsample(&d, 1.0, 3).unwrap(), d);
        let eight = downsample(&d, 2.0 / 3.0, 3).unwrap();
        assert_eq!(eight.len(), 8);
        assert_eq!(eight, downsample(&d, 2.0 / 3.0, 3).unwrap());
        assert!(matches!(downsample(&d, 0.01, 3), Err(Error::Config(_))));
        assert!(downsample(&d, 1.5, 3).is_err());
    }

    #[test]
    fn batcher_epochs() {
        let d = gen_domain(&spec(1.0, 1.0, 16)).unwrap();
        let mut b = Batcher::new(&d, 8, 5).unwrap();
        let first: Vec<DomainBatch> = b.by_ref().take(2).collect();
        assert_eq!(b.epoch(), 1);
        let mut rows: Vec<Vec<u64>> = first
            .iter()
            .flat_map(|batch| (0..batch.len()).map(|r| batch.inputs.row(r).iter().map(|v| v.to_bits()).collect()))
            .collect();
        rows.sort();
        let mut all: Vec<Vec<u64>> = (0..16)
            .map(|r| d.inputs.row(r).iter().map(|v| v.to_bits()).collect())
            .collect();
        all.sort();
        assert_eq!(rows, all);

        let second: Vec<DomainBatch> = b.take(2).collect();
        assert_ne!(first, second);

        let again: Vec<DomainBatch> = Batcher::new(&d, 8, 5).unwrap().take(4).collect();
        assert_eq!(again[..2], first[..]);
        assert_eq!(again[2..], second[..]);
    }

    #[test]
    fn batcher_folds_short_tail() {
        let d = gen_domain(&spec(1.0, 1.0, 9)).unwrap();
        let sizes: Vec<usize> = Batcher::new(&d, 4, 1).unwrap().take(3).map(|b| b.len()).collect();
        assert_eq!(sizes, vec![4, 5, 4]);
        assert!(Batcher::new(&d, 10, 1).is_err());
    }
}

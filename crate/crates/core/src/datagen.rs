//! Seeded synthetic inputs: activations, INT8 weights and KV caches.
//!
//! Every row is drawn from its own ChaCha8 stream: the key is derived from
//! `(seed, stream_id)` with SplitMix64 and the ChaCha stream number is the
//! row index. Output bytes therefore do not depend on how rows are scheduled
//! across threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal, StandardNormal, StudentT as StudentTDist};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{MsdError, Result};
use crate::matrix::{Matrix, QuantizedWeight, ScaleAxis, SimMatrix};

/// Heavy-tailed samples are clipped here so FP32 references stay finite.
pub const HEAVY_TAIL_CLIP: f64 = 1e6;

pub const WEIGHT_SCALE_LOW: f32 = 0.01;
pub const WEIGHT_SCALE_HIGH: f32 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DistributionSpec {
    Gaussian { mean: f64, std: f64 },
    Uniform { low: f64, high: f64 },
    Laplacian { loc: f64, scale: f64 },
    Exponential { rate: f64 },
    StudentT { df: f64 },
    Cauchy,
    /// Standard normal with a fraction `rate` of entries replaced by
    /// `±magnitude`.
    GaussianWithOutliers { rate: f64, magnitude: f64 },
}

impl DistributionSpec {
    pub fn standard_normal() -> Self {
        DistributionSpec::Gaussian { mean: 0.0, std: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        use DistributionSpec::*;
        let ok = match *self {
            Gaussian { mean, std } => mean.is_finite() && std.is_finite() && std >= 0.0,
            Uniform { low, high } => low.is_finite() && high.is_finite() && low <= high,
            Laplacian { loc, scale } => loc.is_finite() && scale.is_finite() && scale >= 0.0,
            Exponential { rate } => rate.is_finite() && rate > 0.0,
            StudentT { df } => df.is_finite() && df > 0.0,
            Cauchy => true,
            GaussianWithOutliers { rate, magnitude } => {
                (0.0..=1.0).contains(&rate) && magnitude.is_finite()
            }
        };
        if ok {
            Ok(())
        } else {
            Err(MsdError::InvalidArgument(format!("bad distribution parameters {self:?}")))
        }
    }

    /// Short label used in reports, e.g. `N(0,1)` or `t(df=3)`.
    pub fn label(&self) -> String {
        use DistributionSpec::*;
        match *self {
            Gaussian { mean, std } => format!("N({mean},{std})"),
            Uniform { low, high } => format!("U({low},{high})"),
            Laplacian { loc, scale } => format!("Laplace({loc},{scale})"),
            Exponential { rate } => format!("Exp({rate})"),
            StudentT { df } => format!("t(df={df})"),
            Cauchy => "Cauchy".to_string(),
            GaussianWithOutliers { rate, magnitude } => {
                format!("N(0,1)+outliers({rate},{magnitude})")
            }
        }
    }

    fn sampler(&self) -> Result<Sampler> {
        self.validate()?;
        use DistributionSpec::*;
        Ok(match *self {
            Gaussian { std: 0.0, mean } => Sampler::Constant(mean),
            Gaussian { mean, std } => {
                Sampler::Normal(Normal::new(mean, std).expect("validated"))
            }
            Uniform { low, high } if low == high => Sampler::Constant(low),
            Uniform { low, high } => Sampler::Uniform(low, high),
            Laplacian { loc, scale } => Sampler::Laplace(loc, scale),
            Exponential { rate } => Sampler::Exp(Exp::new(rate).expect("validated")),
            StudentT { df } => Sampler::StudentT(StudentTDist::new(df).expect("validated")),
            Cauchy => Sampler::StudentT(StudentTDist::new(1.0).expect("df=1")),
            GaussianWithOutliers { rate, magnitude } => Sampler::Outliers(rate, magnitude),
        })
    }
}

enum Sampler {
    Constant(f64),
    Normal(Normal<f64>),
    Uniform(f64, f64),
    Laplace(f64, f64),
    Exp(Exp<f64>),
    StudentT(StudentTDist<f64>),
    Outliers(f64, f64),
}

impl Sampler {
    #[inline]
    /// Fills `out` in order. The match is hoisted so each arm gets its own
    /// inlined loop.
    fn fill<R: Rng>(&self, rng: &mut R, out: &mut [f32]) {
        fn each<R: Rng>(rng: &mut R, out: &mut [f32], mut f: impl FnMut(&mut R) -> f64) {
            for v in out {
                *v = f(rng) as f32;
            }
        }
        match *self {
            Sampler::Constant(c) => out.fill(c as f32),
            Sampler::Normal(d) => each(rng, out, |r| d.sample(r)),
            Sampler::Uniform(a, b) => each(rng, out, |r| r.gen_range(a..b)),
            Sampler::Laplace(loc, b) => each(rng, out, |r| {
                // inverse CDF on u in (-1/2, 1/2)
                let u: f64 = r.gen::<f64>() - 0.5;
                loc - b * u.signum() * (1.0 - 2.0 * u.abs()).max(f64::MIN_POSITIVE).ln()
            }),
            Sampler::Exp(d) => each(rng, out, |r| d.sample(r)),
            Sampler::StudentT(d) => each(rng, out, |r| d.sample(r).clamp(-HEAVY_TAIL_CLIP, HEAVY_TAIL_CLIP)),
            Sampler::Outliers(rate, mag) => each(rng, out, |r| {
                if r.gen_bool(rate) {
                    if r.gen::<bool>() {
                        mag
                    } else {
                        -mag
                    }
                } else {
                    r.sample::<f64, _>(StandardNormal)
                }
            }),
        }
    }
}

/// Root seed plus a stream identifier. Distinct streams give independent
/// data from the same root seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ExperimentSeed {
    pub seed: u64,
    pub stream_id: u64,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn hash_tag(tag: &str) -> u64 {
    // FNV-1a
    tag.bytes().fold(0xCBF2_9CE4_8422_2325u64, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01B3)
    })
}

impl ExperimentSeed {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        Self { seed, stream_id }
    }

    /// Deterministic sub-stream named by `tag`.
    pub fn child(&self, tag: &str) -> Self {
        Self {
            seed: self.seed,
            stream_id: splitmix64(self.stream_id ^ hash_tag(tag)),
        }
    }

    /// Sub-stream for trial `t`.
    pub fn trial(&self, t: u64) -> Self {
        Self {
            seed: self.seed,
            stream_id: splitmix64(self.stream_id.wrapping_add(t.wrapping_mul(0xA24B_AED4_963E_E407))),
        }
    }

    /// Generator for one row of a tensor.
    pub fn row_rng(&self, row: u64) -> ChaCha8Rng {
        let key = splitmix64(self.seed ^ splitmix64(self.stream_id));
        let mut rng = ChaCha8Rng::seed_from_u64(key);
        rng.set_stream(row);
        rng
    }
}

fn check_shape(rows: usize, cols: usize) -> Result<()> {
    if rows == 0 || cols == 0 {
        return Err(MsdError::InvalidArgument(format!("empty shape {rows}x{cols}")));
    }
    Ok(())
}

fn fill_rows<T, F>(rows: usize, cols: usize, seed: ExperimentSeed, f: F) -> Vec<T>
where
    T: Send + Default + Clone,
    F: Fn(&mut ChaCha8Rng, &mut [T]) + Sync,
{
    let mut data = vec![T::default(); rows * cols];
    data.par_chunks_mut(cols).enumerate().for_each(|(i, row)| {
        let mut rng = seed.row_rng(i as u64);
        f(&mut rng, row);
    });
    data
}

/// Samples in binary32 without BF16 truncation.
pub fn gen_activation_fp32(
    rows: usize,
    cols: usize,
    spec: &DistributionSpec,
    seed: ExperimentSeed,
) -> Result<Matrix> {
    check_shape(rows, cols)?;
    let sampler = spec.sampler()?;
    let data = fill_rows(rows, cols, seed, |rng, row: &mut [f32]| sampler.fill(rng, row));
    Matrix::new(rows, cols, data)
}

/// Samples truncated to BF16.
pub fn gen_activation(
    rows: usize,
    cols: usize,
    spec: &DistributionSpec,
    seed: ExperimentSeed,
) -> Result<SimMatrix> {
    Ok(SimMatrix::from_fp32_truncated(gen_activation_fp32(rows, cols, spec, seed)?))
}

fn gen_int8_values(rows: usize, cols: usize, seed: ExperimentSeed) -> Vec<i8> {
    fill_rows(rows, cols, seed, |rng, row: &mut [i8]| {
        for v in row {
            *v = rng.gen_range(-127i8..=127);
        }
    })
}

fn gen_scales(len: usize, seed: ExperimentSeed) -> Vec<f32> {
    let mut rng = seed.row_rng(0);
    (0..len)
        .map(|_| rng.gen_range(WEIGHT_SCALE_LOW..=WEIGHT_SCALE_HIGH))
        .collect()
}

/// `m x n` INT8 weight, values uniform on `[-127, 127]`, one scale per row
/// drawn uniformly from `[0.01, 1.0]`.
pub fn gen_int8_weight(m: usize, n: usize, seed: ExperimentSeed) -> Result<QuantizedWeight> {
    check_shape(m, n)?;
    let values = gen_int8_values(m, n, seed.child("values"));
    let scales = gen_scales(m, seed.child("scales"));
    QuantizedWeight::new(m, n, values, scales, ScaleAxis::Row)
}

/// INT8 `K` and `V` caches of shape `tokens x d` with per-channel scales.
pub fn gen_kv_cache(
    tokens: usize,
    d: usize,
    seed: ExperimentSeed,
) -> Result<(QuantizedWeight, QuantizedWeight)> {
    check_shape(tokens, d)?;
    let make = |tag: &str| {
        let s = seed.child(tag);
        QuantizedWeight::new(
            tokens,
            d,
            gen_int8_values(tokens, d, s.child("values")),
            gen_scales(d, s.child("scales")),
            ScaleAxis::Column,
        )
    };
    Ok((make("k")?, make("v")?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seed() -> ExperimentSeed {
        ExperimentSeed::new(42, 0)
    }

    #[test]
    fn degenerate_distributions() {
        let z = gen_activation(1, 1, &DistributionSpec::Gaussian { mean: 0.0, std: 0.0 }, seed())
            .unwrap();
        assert_eq!(z.data(), &[0.0]);
        let a = 1.2345f64;
        let c = gen_activation(3, 5, &DistributionSpec::Uniform { low: a, high: a }, seed())
            .unwrap();
        let t = crate::numerics::mask_bf16(a as f32);
        assert!(c.data().iter().all(|&v| v == t));
        assert!(c.is_bf16());
    }

    #[test]
    fn invalid_specs() {
        assert!(DistributionSpec::Gaussian { mean: 0.0, std: -1.0 }.validate().is_err());
        assert!(DistributionSpec::Uniform { low: 1.0, high: 0.0 }.validate().is_err());
        assert!(DistributionSpec::GaussianWithOutliers { rate: 1.5, magnitude: 1.0 }
            .validate()
            .is_err());
        assert!(gen_activation(0, 3, &DistributionSpec::standard_normal(), seed()).is_err());
    }

    #[test]
    fn gaussian_moments() {
        let x = gen_activation(2048, 2048, &DistributionSpec::standard_normal(), seed()).unwrap();
        let n = x.data().len() as f64;
        let mean = x.data().iter().map(|&v| v as f64).sum::<f64>() / n;
        let var = x.data().iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n;
        assert!(mean.abs() < 0.01, "mean {mean}");
        assert!((var.sqrt() - 1.0).abs() < 0.01, "std {}", var.sqrt());
    }

    #[test]
    fn weight_ranges_and_determinism() {
        let w = gen_int8_weight(64, 96, seed()).unwrap();
        assert!(w.values.iter().all(|&v| v >= -127));
        assert!(w.scales.iter().all(|&s| (0.01..=1.0).contains(&s)));
        assert_eq!(w.scales.len(), 64);
        assert_eq!(w, gen_int8_weight(64, 96, seed()).unwrap());
        assert_ne!(w, gen_int8_weight(64, 96, ExperimentSeed::new(43, 0)).unwrap());
    }

    #[test]
    fn kv_shapes() {
        let (k, v) = gen_kv_cache(128, 64, seed()).unwrap();
        assert_eq!((k.rows, k.cols, k.scales.len()), (128, 64, 64));
        assert_eq!((v.rows, v.cols, v.scales.len()), (128, 64, 64));
        assert_eq!(k.axis, ScaleAxis::Column);
        assert_ne!(k.values, v.values);
        assert!(k.scales.iter().chain(&v.scales).all(|&s| (0.01..=1.0).contains(&s)));
        assert_eq!((k.clone(), v.clone()), gen_kv_cache(128, 64, seed()).unwrap());
    }

    #[test]
    fn thread_count_independence() {
        let spec = DistributionSpec::Laplacian { loc: 0.0, scale: 1.0 };
        let a = gen_activation_fp32(300, 77, &spec, seed()).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let b = pool.install(|| gen_activation_fp32(300, 77, &spec, seed()).unwrap());
        let c = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| gen_activation_fp32(300, 77, &spec, seed()).unwrap());
        assert_eq!(a, b);
        assert_eq!(a, c);
    }

    #[test]
    fn outlier_rate_within_binomial_bounds() {
        let rate = 0.01;
        let mag = 100.0;
        let spec = DistributionSpec::GaussianWithOutliers { rate, magnitude: mag };
        let x = gen_activation_fp32(1000, 1000, &spec, seed()).unwrap();
        let n = x.data.len() as f64;
        let hits = x.data.iter().filter(|v| v.abs() > 50.0).count() as f64;
        let sigma = (n * rate * (1.0 - rate)).sqrt();
        assert!((hits - n * rate).abs() <= 3.0 * sigma, "hits {hits}");
    }

    #[test]
    fn heavy_tails_clipped() {
        let x = gen_activation_fp32(200, 1000, &DistributionSpec::Cauchy, seed()).unwrap();
        assert!(x.is_finite());
        assert!(x.data.iter().all(|v| v.abs() as f64 <= HEAVY_TAIL_CLIP));
    }
}

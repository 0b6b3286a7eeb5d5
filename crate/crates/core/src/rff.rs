//! Random Fourier features for the Gaussian kernel.
//!
//! A [`FeatureSet`] holds `M` sampled pairs `(w_i, b_i)` and evaluates the
//! cosine features `cos(w_i·z + b_i)`. A [`ParamEstimate`] holds one row of
//! coefficients per output dimension; all rows share the same features, and
//! the prediction is the feature average `(1/M) Σ_i cos(w_i·z + b_i) α_i`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{check_dim, Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelKind {
    Gaussian,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelSpec<T> {
    pub kind: KernelKind,
    /// Length scale `σ`; frequencies are drawn with per-component std `1/σ`.
    pub bandwidth: T,
    pub input_dim: usize,
}

impl<T: Real> KernelSpec<T> {
    pub fn gaussian(bandwidth: T, input_dim: usize) -> Result<Self> {
        if !(bandwidth > T::zero()) || !bandwidth.is_finite_value() {
            return Err(Error::InvalidParameter(format!(
                "kernel bandwidth must be positive, got {}",
                bandwidth.as_f64()
            )));
        }
        if input_dim == 0 {
            return Err(Error::InvalidParameter(
                "kernel input dimension must be at least 1".into(),
            ));
        }
        Ok(Self {
            kind: KernelKind::Gaussian,
            bandwidth,
            input_dim,
        })
    }

    /// `exp(-‖z1 - z2‖² / (2σ²))`.
    pub fn value(&self, z1: &DVector<T>, z2: &DVector<T>) -> Result<T> {
        check_dim("kernel_value", self.input_dim, z1.len())?;
        check_dim("kernel_value", self.input_dim, z2.len())?;
        let d2 = (z1 - z2).norm_squared();
        let s2 = self.bandwidth * self.bandwidth;
        Ok((-d2 / (T::lit(2.0) * s2)).exp())
    }
}

/// Sampled feature pairs; immutable once drawn.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet<T> {
    /// `M × d_z`, row `i` is `w_iᵀ`.
    frequencies: DMatrix<T>,
    phases: DVector<T>,
    kernel: KernelSpec<T>,
    seed: u64,
}

impl<T: Real> FeatureSet<T> {
    /// Draws `count` features. Pairs are drawn one feature at a time, so the
    /// first `k` features of a larger draw coincide with a draw of size `k`.
    pub fn sample(kernel: KernelSpec<T>, count: usize, seed: u64) -> Result<Self> {
        if count == 0 {
            return Err(Error::InvalidParameter("feature count must be at least 1".into()));
        }
        // revalidate in case the kernel was built by hand
        let kernel = KernelSpec::gaussian(kernel.bandwidth, kernel.input_dim)?;
        let d = kernel.input_dim;
        let inv_sigma = 1.0 / kernel.bandwidth.as_f64();
        let two_pi = T::two_pi();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut frequencies = DMatrix::zeros(count, d);
        let mut phases = DVector::zeros(count);
        for i in 0..count {
            for j in 0..d {
                let g: f64 = rng.sample(StandardNormal);
                frequencies[(i, j)] = T::lit(g * inv_sigma);
            }
            let mut b = T::lit(rng.random_range(0.0..std::f64::consts::TAU));
            // f32 rounding can land exactly on 2π
            if b >= two_pi {
                b -= two_pi;
            }
            phases[i] = b;
        }
        Ok(Self {
            frequencies,
            phases,
            kernel,
            seed,
        })
    }

    /// Builds a feature set from explicit frequencies (rows) and phases.
    pub fn from_parts(kernel: KernelSpec<T>, frequencies: DMatrix<T>, phases: DVector<T>) -> Result<Self> {
        check_dim("feature frequencies", kernel.input_dim, frequencies.ncols())?;
        check_dim("feature phases", frequencies.nrows(), phases.len())?;
        if phases.is_empty() {
            return Err(Error::InvalidParameter("feature count must be at least 1".into()));
        }
        Ok(Self {
            frequencies,
            phases,
            kernel,
            seed: 0,
        })
    }

    pub fn count(&self) -> usize {
        self.phases.len()
    }

    pub fn input_dim(&self) -> usize {
        self.kernel.input_dim
    }

    pub fn kernel(&self) -> &KernelSpec<T> {
        &self.kernel
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn frequencies(&self) -> &DMatrix<T> {
        &self.frequencies
    }

    pub fn phases(&self) -> &DVector<T> {
        &self.phases
    }

    fn arguments(&self, z: &DVector<T>) -> Result<DVector<T>> {
        check_dim("feature input", self.input_dim(), z.len())?;
        Ok(&self.frequencies * z + &self.phases)
    }

    /// `[cos(w_i·z + b_i)]_i`.
    pub fn evaluate(&self, z: &DVector<T>) -> Result<DVector<T>> {
        Ok(self.arguments(z)?.map(|a| a.cos()))
    }

    /// `M × d_z` Jacobian of [`evaluate`](Self::evaluate): row `i` is `-sin(w_i·z + b_i) w_iᵀ`.
    pub fn jacobian(&self, z: &DVector<T>) -> Result<DMatrix<T>> {
        let args = self.arguments(z)?;
        let mut jac = self.frequencies.clone();
        for (i, a) in args.iter().enumerate() {
            let s = -a.sin();
            jac.row_mut(i).scale_mut(s);
        }
        Ok(jac)
    }

    /// Averaged feature expansion `(1/M) blocks · φ(z)`.
    pub fn predict(&self, params: &ParamEstimate<T>, z: &DVector<T>) -> Result<DVector<T>> {
        let phi = self.evaluate(z)?;
        params.combine(&phi)
    }
}

/// Online coefficients, one row per output dimension, each entry kept inside
/// `[-radius, radius]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamEstimate<T> {
    blocks: DMatrix<T>,
    radius: T,
}

impl<T: Real> ParamEstimate<T> {
    pub fn zeros(output_dim: usize, count: usize, radius: T) -> Result<Self> {
        Self::new(DMatrix::zeros(output_dim, count), radius)
    }

    /// Wraps explicit coefficients. Entries outside the box are rejected; use
    /// [`project`](Self::project) on an unconstrained matrix instead.
    pub fn new(blocks: DMatrix<T>, radius: T) -> Result<Self> {
        if !(radius > T::zero()) {
            return Err(Error::InvalidParameter(format!(
                "projection radius must be positive, got {}",
                radius.as_f64()
            )));
        }
        if let Some(v) = blocks.iter().find(|v| v.abs() > radius) {
            return Err(Error::InvalidParameter(format!(
                "coefficient {} lies outside [-{r}, {r}]",
                v.as_f64(),
                r = radius.as_f64()
            )));
        }
        Ok(Self { blocks, radius })
    }

    /// Clamps every coefficient of `blocks` into `[-radius, radius]`.
    pub fn project(blocks: DMatrix<T>, radius: T) -> Result<Self> {
        if !(radius > T::zero()) {
            return Err(Error::InvalidParameter(format!(
                "projection radius must be positive, got {}",
                radius.as_f64()
            )));
        }
        let blocks = blocks.map(|v| clamp_scalar(v, radius));
        Ok(Self { blocks, radius })
    }

    pub fn blocks(&self) -> &DMatrix<T> {
        &self.blocks
    }

    pub fn radius(&self) -> T {
        self.radius
    }

    pub fn output_dim(&self) -> usize {
        self.blocks.nrows()
    }

    pub fn count(&self) -> usize {
        self.blocks.ncols()
    }

    pub fn is_zero(&self) -> bool {
        self.blocks.iter().all(|v| *v == T::zero())
    }

    pub fn max_abs(&self) -> T {
        self.blocks.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    /// `(1/M) blocks · phi`.
    pub fn combine(&self, phi: &DVector<T>) -> Result<DVector<T>> {
        check_dim("parameter columns", self.count(), phi.len())?;
        let inv_m = T::one() / T::lit(self.count() as f64);
        Ok((&self.blocks * phi) * inv_m)
    }
}

#[inline]
pub(crate) fn clamp_scalar<T: Real>(v: T, radius: T) -> T {
    if v > radius {
        radius
    } else if v < -radius {
        -radius
    } else {
        v
    }
}

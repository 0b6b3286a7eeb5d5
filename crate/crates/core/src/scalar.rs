use nalgebra::RealField;
use num_traits::ToPrimitive;

/// Floating-point scalar the numerical core is written against: `f32` or `f64`.
pub trait Real: RealField + Copy + ToPrimitive + Send + Sync + 'static {
    /// Base step for central finite differences.
    const FD_STEP: f64;

    /// Converts an `f64` literal, rounding to the nearest representable value.
    #[inline]
    fn lit(v: f64) -> Self {
        nalgebra::convert(v)
    }

    #[inline]
    fn as_f64(self) -> f64 {
        ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }

    #[inline]
    fn is_finite_value(self) -> bool {
        self.as_f64().is_finite()
    }
}

impl Real for f64 {
    const FD_STEP: f64 = 1e-6;
}

impl Real for f32 {
    const FD_STEP: f64 = 1e-3;
}

pub(crate) fn all_finite<T: Real>(v: &nalgebra::DVector<T>) -> bool {
    v.iter().all(|x| x.is_finite_value())
}

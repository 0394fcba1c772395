use std::fmt::Debug;
use std::iter::Sum;

use num_traits::{Float, FromPrimitive};

/// Scalar type the analytic layer is generic over.
///
/// The correlation functions, the Lyapunov function and the control-field
/// machinery only need ordinary float arithmetic, so they work for `f32`
/// and `f64` alike. The Monte Carlo and linear-algebra layers are pinned
/// to `f64` (see the aliases at the crate root).
pub trait Real: Float + FromPrimitive + Sum + Debug + Send + Sync + 'static {
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 constant must convert into the scalar type")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().expect("scalar must convert to f64")
    }
}

impl Real for f32 {}
impl Real for f64 {}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conversions_round_trip() {
        assert_eq!(f64::of(1.5), 1.5);
        assert_eq!(f32::of(0.25), 0.25f32);
        assert_eq!(0.25f32.to_f64_lossy(), 0.25);
    }
}

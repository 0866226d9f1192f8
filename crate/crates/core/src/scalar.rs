//! Scalar abstraction for the floating-point parts of the crate (cost model,
//! latency constants, modeled time, host-side quantization).

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, NumCast};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Real scalar used for modeled times and quantization scales.
pub trait Real:
    Float + FromPrimitive + Debug + Display + Default + Send + Sync + Serialize + DeserializeOwned + 'static
{
    /// Converts a literal or count. Panics only on non-representable input,
    /// which cannot happen for the finite values used in this crate.
    #[inline]
    fn of<N: NumCast>(n: N) -> Self {
        <Self as NumCast>::from(n).expect("value representable as float")
    }
}

impl Real for f32 {}
impl Real for f64 {}

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumCast};

/// Real scalar used throughout the crate: `f32` or `f64`.
pub trait Scalar: Float + FromPrimitive + NumCast + Sum + Debug + Display + Default + Send + Sync + 'static {
    /// Converts an `f64` literal, panicking only if the type cannot represent it at all.
    #[inline]
    fn lit(x: f64) -> Self {
        <Self as NumCast>::from(x).expect("literal representable in scalar type")
    }

    #[inline]
    fn from_count(n: usize) -> Self {
        <Self as NumCast>::from(n).expect("count representable in scalar type")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl<T> Scalar for T where T: Float + FromPrimitive + NumCast + Sum + Debug + Display + Default + Send + Sync + 'static {}

/// Euclidean distance between two equal-length slices.
#[inline]
pub fn l2<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .fold(T::zero(), |acc, (&x, &y)| {
            let diff = x - y;
            acc + diff * diff
        })
        .sqrt()
}

#[inline]
pub fn norm<T: Scalar>(a: &[T]) -> T {
    a.iter().fold(T::zero(), |acc, &x| acc + x * x).sqrt()
}

/// Mean of a set of equal-length vectors, accumulated in iteration order.
pub fn mean_of<'a, T, I>(vectors: I, dim: usize) -> Option<Vec<T>>
where
    T: Scalar,
    I: IntoIterator<Item = &'a [T]>,
{
    let mut acc = vec![T::zero(); dim];
    let mut n = 0usize;
    for v in vectors {
        debug_assert_eq!(v.len(), dim);
        for (a, &x) in acc.iter_mut().zip(v) {
            *a = *a + x;
        }
        n += 1;
    }
    if n == 0 {
        return None;
    }
    let n = T::from_count(n);
    acc.iter_mut().for_each(|a| *a = *a / n);
    Some(acc)
}

/// Scales a vector to unit L2 norm; zero vectors are returned unchanged.
pub fn unit<T: Scalar>(a: &[T]) -> Vec<T> {
    let n = norm(a);
    if n > T::zero() {
        a.iter().map(|&x| x / n).collect()
    } else {
        a.to_vec()
    }
}

//! Scalar types usable as aggregate scores.
//!
//! Scores are sums of reciprocal ranks. With ranks capped at 5 every
//! denominator divides 60, so exact rationals never grow; floats are
//! supported with an epsilon comparator.

use std::cmp::Ordering;
use std::fmt::{Debug, Display};
use std::num::NonZeroU32;
use std::ops::{Add, AddAssign, Div, Mul};

use num_rational::Ratio;
use num_traits::{FromPrimitive, One, ToPrimitive, Zero};

/// Tolerance used when comparing floating-point scores.
pub const FLOAT_SCORE_EPSILON: f64 = 1e-9;

/// 1-based position of a diagnosis inside a differential.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize, serde::Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub struct Rank(NonZeroU32);

impl Rank {
    pub const FIRST: Rank = Rank(NonZeroU32::MIN);

    /// `None` for rank 0.
    pub fn new(rank: u32) -> Option<Self> {
        NonZeroU32::new(rank).map(Rank)
    }

    /// Rank of the element at 0-based `index`.
    pub fn from_index(index: usize) -> Self {
        let r = u32::try_from(index + 1).expect("rank fits in u32");
        Rank(NonZeroU32::new(r).expect("index + 1 is non-zero"))
    }

    pub fn get(self) -> u32 {
        self.0.get()
    }
}

impl TryFrom<u32> for Rank {
    type Error = String;

    fn try_from(value: u32) -> Result<Self, Self::Error> {
        Rank::new(value).ok_or_else(|| "rank must be at least 1".to_string())
    }
}

impl From<Rank> for u32 {
    fn from(r: Rank) -> u32 {
        r.get()
    }
}

impl Display for Rank {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

pub trait Score:
    Clone
    + Debug
    + Display
    + PartialOrd
    + Zero
    + One
    + Add<Output = Self>
    + AddAssign
    + Mul<Output = Self>
    + Div<Output = Self>
    + FromPrimitive
    + ToPrimitive
    + Send
    + Sync
{
    /// Total order used for ranking; floats treat values within
    /// [`FLOAT_SCORE_EPSILON`] as equal.
    fn score_cmp(&self, other: &Self) -> Ordering;

    fn to_f64_lossy(&self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl<T> Score for Ratio<T>
where
    T: num_traits::PrimInt + num_traits::NumAssignOps + num_integer::Integer + Debug + Display + FromPrimitive + Send + Sync,
    Ratio<T>: FromPrimitive + ToPrimitive,
{
    fn score_cmp(&self, other: &Self) -> Ordering {
        self.cmp(other)
    }
}

macro_rules! float_score {
    ($t:ty) => {
        impl Score for $t {
            fn score_cmp(&self, other: &Self) -> Ordering {
                let (a, b) = (f64::from(*self), f64::from(*other));
                if (a - b).abs() <= FLOAT_SCORE_EPSILON {
                    Ordering::Equal
                } else {
                    a.partial_cmp(&b).unwrap_or(Ordering::Equal)
                }
            }
        }
    };
}

float_score!(f32);
float_score!(f64);

/// The individual score of a diagnosis at `rank`: exactly `1 / rank`.
pub fn individual_score<S: Score>(rank: Rank) -> S {
    S::one() / S::from_u32(rank.get()).expect("rank representable in score type")
}

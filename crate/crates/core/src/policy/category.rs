//! Behavior categories: sign patterns of `(λ_gap, λ_ttc, λ_progress)`.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::density::RationalityVector;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BehaviorCategory {
    B1,
    B2,
    B3,
    B4,
    B5,
    B6,
    B7,
    B8,
}

impl BehaviorCategory {
    pub const ALL: [BehaviorCategory; 8] = [
        BehaviorCategory::B1,
        BehaviorCategory::B2,
        BehaviorCategory::B3,
        BehaviorCategory::B4,
        BehaviorCategory::B5,
        BehaviorCategory::B6,
        BehaviorCategory::B7,
        BehaviorCategory::B8,
    ];

    /// Sign of each λ, `true` meaning positive.
    pub fn signs(self) -> [bool; 3] {
        use BehaviorCategory::*;
        match self {
            B1 => [false, false, true],
            B2 => [false, true, true],
            B3 => [true, true, false],
            B4 => [true, false, false],
            B5 => [false, false, false],
            B6 => [false, true, false],
            B7 => [true, true, true],
            B8 => [true, false, true],
        }
    }

    pub fn from_signs(signs: [bool; 3]) -> Self {
        *Self::ALL
            .iter()
            .find(|c| c.signs() == signs)
            .expect("the eight categories cover every sign triple")
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn description(self) -> &'static str {
        use BehaviorCategory::*;
        match self {
            B1 => "cut-in with high speed at close distance with low ttc",
            B2 => "high speed at close distance with high ttc",
            B3 => "low speed at longer distance with high ttc",
            B4 => "low speed at longer distance with low ttc",
            B5 => "low speed at close distance with low ttc",
            B6 => "low speed at close distance with high ttc",
            B7 => "high speed at longer distance with high ttc",
            B8 => "high speed at longer distance with low ttc",
        }
    }
}

impl fmt::Display for BehaviorCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "B{}", self.index() + 1)
    }
}

impl FromStr for BehaviorCategory {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        Self::ALL
            .iter()
            .copied()
            .find(|c| c.to_string().eq_ignore_ascii_case(t))
            .ok_or_else(|| Error::Config(format!("unknown behavior category '{s}'")))
    }
}

/// Category of a rationality vector; a zero λ has no sign and is rejected.
pub fn behavior_category_of(lam: &RationalityVector) -> Result<BehaviorCategory> {
    let l = lam.lambdas();
    if l.contains(&0.0) {
        return Err(Error::AmbiguousCategory(format!("zero lambda in {l:?}")));
    }
    Ok(BehaviorCategory::from_signs(l.map(|x| x > 0.0)))
}

/// Draw each `|λ_i|` uniformly from `(0, lambda_max]` with the category's signs.
pub fn sample_lambda_in_category<R: Rng + ?Sized>(
    cat: BehaviorCategory,
    lambda_max: f64,
    rng: &mut R,
) -> RationalityVector {
    let s = cat.signs();
    let mut l = [0.0; 3];
    for i in 0..3 {
        // gen() is in [0, 1), so the magnitude is in (0, lambda_max].
        let mag = lambda_max * (1.0 - rng.gen::<f64>());
        l[i] = if s[i] { mag } else { -mag };
    }
    RationalityVector::new(l[0], l[1], l[2]).expect("finite by construction")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn table_rows() {
        let cat = |a, b, c| behavior_category_of(&RationalityVector::new(a, b, c).unwrap()).unwrap();
        assert_eq!(cat(-1.0, -5.0, 3.0), BehaviorCategory::B1);
        assert_eq!(cat(2.0, 2.0, 2.0), BehaviorCategory::B7);
        assert_eq!(cat(1.0, -1.0, -1.0), BehaviorCategory::B4);
        assert_eq!(cat(-1.0, 1.0, 1.0), BehaviorCategory::B2);
        assert_eq!(cat(1.0, 1.0, -1.0), BehaviorCategory::B3);
        assert_eq!(cat(-1.0, -1.0, -1.0), BehaviorCategory::B5);
        assert_eq!(cat(-1.0, 1.0, -1.0), BehaviorCategory::B6);
        assert_eq!(cat(1.0, -1.0, 1.0), BehaviorCategory::B8);
    }

    #[test]
    fn signs_are_a_bijection() {
        let mut seen = std::collections::HashSet::new();
        for c in BehaviorCategory::ALL {
            assert!(seen.insert(c.signs()));
            assert_eq!(BehaviorCategory::from_signs(c.signs()), c);
        }
    }

    #[test]
    fn zero_lambda_is_ambiguous() {
        let v = RationalityVector::new(0.0, 1.0, 1.0).unwrap();
        assert!(matches!(behavior_category_of(&v), Err(Error::AmbiguousCategory(_))));
    }

    #[test]
    fn sampling_respects_category() {
        for cat in BehaviorCategory::ALL {
            for seed in 0..100 {
                let mut r = rng::stream(seed, "test", 0);
                let lam = sample_lambda_in_category(cat, 100.0, &mut r);
                assert_eq!(behavior_category_of(&lam).unwrap(), cat);
                lam.check_bounds(100.0).unwrap();
            }
        }
        let a = sample_lambda_in_category(BehaviorCategory::B7, 100.0, &mut rng::stream(5, "t", 0));
        let b = sample_lambda_in_category(BehaviorCategory::B7, 100.0, &mut rng::stream(5, "t", 0));
        assert_eq!(a, b);
        assert!(a.lambdas().iter().all(|&l| l > 0.0));
        let c = sample_lambda_in_category(BehaviorCategory::B5, 100.0, &mut rng::stream(5, "t", 0));
        assert!(c.lambdas().iter().all(|&l| l < 0.0));
    }

    #[test]
    fn parse_and_display() {
        assert_eq!("b3".parse::<BehaviorCategory>().unwrap(), BehaviorCategory::B3);
        assert_eq!(BehaviorCategory::B8.to_string(), "B8");
        assert!("B9".parse::<BehaviorCategory>().is_err());
    }
}

//! Hyperrectangular parameter sets.
//!
//! A [`ParameterBox`] stores interval bounds per parameter. Its halfspace view
//! `{θ | Aθ ≤ b}` is derived on demand with a fixed row order: the first `d`
//! rows are `+I` with `b = upper`, the last `d` rows are `-I` with
//! `b = -lower`. Dual vectors attached to robust constraints follow this row
//! order.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Closed interval product `[lower_1, upper_1] × … × [lower_d, upper_d]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawBox", into = "RawBox")]
pub struct ParameterBox {
    lower: DVector<f64>,
    upper: DVector<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawBox {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl TryFrom<RawBox> for ParameterBox {
    type Error = Error;

    fn try_from(raw: RawBox) -> Result<Self> {
        ParameterBox::new(raw.lower, raw.upper)
    }
}

impl From<ParameterBox> for RawBox {
    fn from(b: ParameterBox) -> Self {
        RawBox {
            lower: b.lower.iter().copied().collect(),
            upper: b.upper.iter().copied().collect(),
        }
    }
}

/// Halfspace description `A θ ≤ b` of a box (canonical row order).
#[derive(Debug, Clone, PartialEq)]
pub struct HalfspaceForm {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
}

impl HalfspaceForm {
    /// Number of parameters.
    pub fn dim(&self) -> usize {
        self.a.ncols()
    }

    /// Number of halfspace rows.
    pub fn rows(&self) -> usize {
        self.a.nrows()
    }
}

/// Which extreme of a linear function over the box is requested.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Extremum {
    Min,
    Max,
}

impl ParameterBox {
    pub fn new(lower: impl Into<Vec<f64>>, upper: impl Into<Vec<f64>>) -> Result<Self> {
        let lower = lower.into();
        let upper = upper.into();
        if lower.is_empty() {
            return Err(Error::InvalidBox("a box needs at least one coordinate".into()));
        }
        if lower.len() != upper.len() {
            return Err(Error::dim("ParameterBox::new", lower.len(), upper.len()));
        }
        for (i, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            if !lo.is_finite() || !hi.is_finite() {
                return Err(Error::InvalidBox(format!("coordinate {i} has a non-finite bound")));
            }
            if lo > hi {
                return Err(Error::InvalidBox(format!(
                    "coordinate {i}: lower {lo} exceeds upper {hi}"
                )));
            }
        }
        Ok(Self {
            lower: DVector::from_vec(lower),
            upper: DVector::from_vec(upper),
        })
    }

    /// Singleton box `{θ}`.
    pub fn singleton(theta: &DVector<f64>) -> Result<Self> {
        let v: Vec<f64> = theta.iter().copied().collect();
        Self::new(v.clone(), v)
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &DVector<f64> {
        &self.lower
    }

    pub fn upper(&self) -> &DVector<f64> {
        &self.upper
    }

    pub fn widths(&self) -> DVector<f64> {
        &self.upper - &self.lower
    }

    pub fn volume(&self) -> f64 {
        self.widths().iter().product()
    }

    pub fn center(&self) -> DVector<f64> {
        (&self.upper + &self.lower) * 0.5
    }

    /// Canonical halfspace form: `+I` rows with `b = upper`, then `-I` rows
    /// with `b = -lower`.
    pub fn to_halfspace(&self) -> HalfspaceForm {
        let d = self.dim();
        let mut a = DMatrix::zeros(2 * d, d);
        let mut b = DVector::zeros(2 * d);
        for i in 0..d {
            a[(i, i)] = 1.0;
            b[i] = self.upper[i];
            a[(d + i, i)] = -1.0;
            b[d + i] = -self.lower[i];
        }
        HalfspaceForm { a, b }
    }

    /// Closed-interval membership.
    pub fn contains(&self, theta: &DVector<f64>) -> Result<bool> {
        if theta.len() != self.dim() {
            return Err(Error::dim("ParameterBox::contains", self.dim(), theta.len()));
        }
        Ok(theta
            .iter()
            .enumerate()
            .all(|(i, &t)| self.lower[i] <= t && t <= self.upper[i]))
    }

    /// `self ⊆ other`, componentwise and exact.
    pub fn is_subset_of(&self, other: &ParameterBox) -> bool {
        self.dim() == other.dim()
            && (0..self.dim())
                .all(|i| other.lower[i] <= self.lower[i] && self.upper[i] <= other.upper[i])
    }

    /// Extreme value of `c·θ` over the box, with the vertex attaining it.
    ///
    /// Each coordinate is chosen independently by the sign of `c_i`; zero
    /// coefficients resolve to the lower bound.
    pub fn worst_case(&self, c: &DVector<f64>, extremum: Extremum) -> Result<(f64, DVector<f64>)> {
        if c.len() != self.dim() {
            return Err(Error::dim("ParameterBox::worst_case", self.dim(), c.len()));
        }
        let mut value = 0.0;
        let mut arg = DVector::zeros(self.dim());
        for i in 0..self.dim() {
            let pick_upper = match extremum {
                Extremum::Min => c[i] < 0.0,
                Extremum::Max => c[i] > 0.0,
            };
            let t = if pick_upper { self.upper[i] } else { self.lower[i] };
            arg[i] = t;
            value += c[i] * t;
        }
        Ok((value, arg))
    }

    /// Intersect with `[lower, upper]` bounds, clamped so the result stays
    /// inside `self`.
    pub fn tightened(&self, lower: &DVector<f64>, upper: &DVector<f64>) -> Result<ParameterBox> {
        let d = self.dim();
        if lower.len() != d || upper.len() != d {
            return Err(Error::dim("ParameterBox::tightened", d, lower.len().min(upper.len())));
        }
        let mut lo = Vec::with_capacity(d);
        let mut hi = Vec::with_capacity(d);
        for i in 0..d {
            let mut l = lower[i].max(self.lower[i]).min(self.upper[i]);
            let mut h = upper[i].min(self.upper[i]).max(self.lower[i]);
            if l > h {
                // crossing by round-off only; callers detect real conflicts upstream
                let mid = 0.5 * (l + h);
                l = mid;
                h = mid;
            }
            lo.push(l);
            hi.push(h);
        }
        ParameterBox::new(lo, hi)
    }

    /// All `2^d` vertices, first coordinate varying fastest.
    pub fn vertices(&self) -> Vec<DVector<f64>> {
        let d = self.dim();
        (0..(1usize << d))
            .map(|mask| {
                DVector::from_fn(d, |i, _| {
                    if mask >> i & 1 == 1 {
                        self.upper[i]
                    } else {
                        self.lower[i]
                    }
                })
            })
            .collect()
    }
}

/// Free-function form of [`ParameterBox::to_halfspace`].
pub fn to_halfspace(bx: &ParameterBox) -> HalfspaceForm {
    bx.to_halfspace()
}

/// Free-function form of [`ParameterBox::contains`].
pub fn contains(bx: &ParameterBox, theta: &DVector<f64>) -> Result<bool> {
    bx.contains(theta)
}

/// Free-function form of [`ParameterBox::worst_case`].
pub fn box_worst_case(
    c: &DVector<f64>,
    bx: &ParameterBox,
    extremum: Extremum,
) -> Result<(f64, DVector<f64>)> {
    bx.worst_case(c, extremum)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample_box() -> ParameterBox {
        ParameterBox::new(vec![-1.2, -2.0, 0.5, 0.8], vec![-0.2, -0.1, 1.4, 1.2]).unwrap()
    }

    #[test]
    fn halfspace_of_unit_interval() {
        let hs = ParameterBox::new(vec![0.0], vec![1.0]).unwrap().to_halfspace();
        assert_eq!(hs.a, DMatrix::from_row_slice(2, 1, &[1.0, -1.0]));
        assert_eq!(hs.b, DVector::from_vec(vec![1.0, 0.0]));
    }

    #[test]
    fn halfspace_of_nonlinear_example_box() {
        let hs = sample_box().to_halfspace();
        assert_eq!(hs.a.shape(), (8, 4));
        let expected = [-0.2, -0.1, 1.4, 1.2, 1.2, 2.0, -0.5, -0.8];
        for (got, want) in hs.b.iter().zip(expected) {
            assert_eq!(*got, want);
        }
        for i in 0..4 {
            assert_eq!(hs.a[(i, i)], 1.0);
            assert_eq!(hs.a[(4 + i, i)], -1.0);
        }
    }

    #[test]
    fn singleton_halfspace_rows_mirror() {
        let c = 0.37;
        let hs = ParameterBox::new(vec![c], vec![c]).unwrap().to_halfspace();
        assert_eq!(hs.b[0], c);
        assert_eq!(-hs.b[1], c);
    }

    #[test]
    fn containment_is_closed() {
        let unit = ParameterBox::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        assert!(unit.contains(&DVector::from_vec(vec![0.0, 1.0])).unwrap());
        assert!(!unit.contains(&DVector::from_vec(vec![1.0001, 0.5])).unwrap());
        assert!(sample_box()
            .contains(&DVector::from_vec(vec![-0.6, -1.0, 1.0, 1.0]))
            .unwrap());
        assert!(matches!(
            unit.contains(&DVector::from_vec(vec![0.5])),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn rejects_bad_boxes() {
        assert!(ParameterBox::new(vec![], vec![]).is_err());
        assert!(ParameterBox::new(vec![1.0], vec![0.0]).is_err());
        assert!(ParameterBox::new(vec![0.0, 0.0], vec![1.0]).is_err());
        assert!(ParameterBox::new(vec![f64::NAN], vec![1.0]).is_err());
    }

    #[test]
    fn worst_case_sign_rule() {
        let bx = ParameterBox::new(vec![-1.0, 0.0], vec![1.0, 2.0]).unwrap();
        let (v, arg) = bx
            .worst_case(&DVector::from_vec(vec![2.0, -3.0]), Extremum::Min)
            .unwrap();
        assert_eq!(v, -8.0);
        assert_eq!(arg, DVector::from_vec(vec![-1.0, 2.0]));

        let zero = DVector::zeros(2);
        assert_eq!(bx.worst_case(&zero, Extremum::Min).unwrap().0, 0.0);
        assert_eq!(bx.worst_case(&zero, Extremum::Max).unwrap().0, 0.0);
        // ties resolve to lower
        assert_eq!(bx.worst_case(&zero, Extremum::Max).unwrap().1, bx.lower().clone());

        let c = DVector::from_vec(vec![-1.0, 0.0, 0.0, 0.0]);
        let (v, arg) = sample_box().worst_case(&c, Extremum::Min).unwrap();
        assert!((v - 0.2).abs() < 1e-15);
        assert_eq!(arg[0], -0.2);
    }

    #[test]
    fn vertices_enumerate_corners() {
        let bx = ParameterBox::new(vec![0.0, 10.0], vec![1.0, 20.0]).unwrap();
        let v = bx.vertices();
        assert_eq!(v.len(), 4);
        assert_eq!(v[0], DVector::from_vec(vec![0.0, 10.0]));
        assert_eq!(v[3], DVector::from_vec(vec![1.0, 20.0]));
    }

    #[test]
    fn serde_shape() {
        let bx = ParameterBox::new(vec![0.0, 1.0], vec![1.0, 2.0]).unwrap();
        let json = serde_json::to_string(&bx).unwrap();
        assert_eq!(json, r#"{"lower":[0.0,1.0],"upper":[1.0,2.0]}"#);
        let back: ParameterBox = serde_json::from_str(&json).unwrap();
        assert_eq!(back, bx);
        assert!(serde_json::from_str::<ParameterBox>(r#"{"lower":[2.0],"upper":[1.0]}"#).is_err());
    }

    fn arb_box_and_c() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, Vec<f64>)> {
        (1usize..6).prop_flat_map(|d| {
            (
                prop::collection::vec(-5.0..5.0f64, d),
                prop::collection::vec(0.0..3.0f64, d),
                prop::collection::vec(-4.0..4.0f64, d),
            )
        })
    }

    proptest! {
        #[test]
        fn worst_case_bounds_grid_samples((lo, w, c) in arb_box_and_c()) {
            let hi: Vec<f64> = lo.iter().zip(&w).map(|(l, w)| l + w).collect();
            let bx = ParameterBox::new(lo.clone(), hi.clone()).unwrap();
            let c = DVector::from_vec(c);
            let (vmin, _) = bx.worst_case(&c, Extremum::Min).unwrap();
            let (vmax, _) = bx.worst_case(&c, Extremum::Max).unwrap();
            let d = bx.dim();
            let steps = 4usize;
            let total = (steps + 1).pow(d as u32);
            for k in 0..total {
                let mut idx = k;
                let theta = DVector::from_fn(d, |i, _| {
                    let s = idx % (steps + 1);
                    idx /= steps + 1;
                    lo[i] + (hi[i] - lo[i]) * s as f64 / steps as f64
                });
                let val = c.dot(&theta);
                prop_assert!(vmin <= val + 1e-12);
                prop_assert!(val <= vmax + 1e-12);
            }
        }

        #[test]
        fn worst_case_monotone_under_nesting((lo, w, c) in arb_box_and_c(), shrink in prop::collection::vec((0.0..1.0f64, 0.0..1.0f64), 6)) {
            let hi: Vec<f64> = lo.iter().zip(&w).map(|(l, w)| l + w).collect();
            let outer = ParameterBox::new(lo.clone(), hi.clone()).unwrap();
            let mut ilo = lo.clone();
            let mut ihi = hi.clone();
            for i in 0..lo.len() {
                let (a, b) = shrink[i];
                let (a, b) = if a <= b { (a, b) } else { (b, a) };
                ilo[i] = lo[i] + a * w[i];
                ihi[i] = (lo[i] + b * w[i]).max(ilo[i]);
            }
            let inner = ParameterBox::new(ilo, ihi).unwrap();
            prop_assert!(inner.is_subset_of(&outer));
            let c = DVector::from_vec(c);
            let (o, _) = outer.worst_case(&c, Extremum::Min).unwrap();
            let (i, _) = inner.worst_case(&c, Extremum::Min).unwrap();
            prop_assert!(i >= o - 1e-12);
            let (o, _) = outer.worst_case(&c, Extremum::Max).unwrap();
            let (i, _) = inner.worst_case(&c, Extremum::Max).unwrap();
            prop_assert!(i <= o + 1e-12);
        }
    }
}

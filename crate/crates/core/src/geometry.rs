use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Axis-aligned box in pixels, stored as center plus size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct BBox<T> {
    pub cx: T,
    pub cy: T,
    pub w: T,
    pub h: T,
}

impl<T: Scalar> BBox<T> {
    pub fn new(cx: T, cy: T, w: T, h: T) -> Result<Self> {
        let b = BBox { cx, cy, w, h };
        b.validate()?;
        Ok(b)
    }

    pub fn from_corners(left: T, top: T, right: T, bottom: T) -> Self {
        let two = T::lit(2.0);
        BBox {
            cx: (left + right) / two,
            cy: (top + bottom) / two,
            w: right - left,
            h: bottom - top,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.cx, self.cy, self.w, self.h]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::validation(format!("non-finite box {self:?}")));
        }
        if self.w <= T::zero() || self.h <= T::zero() {
            return Err(Error::validation(format!(
                "box must have positive size, got w={} h={}",
                self.w, self.h
            )));
        }
        Ok(())
    }

    pub fn left(&self) -> T {
        self.cx - self.w / T::lit(2.0)
    }

    pub fn right(&self) -> T {
        self.cx + self.w / T::lit(2.0)
    }

    pub fn top(&self) -> T {
        self.cy - self.h / T::lit(2.0)
    }

    pub fn bottom(&self) -> T {
        self.cy + self.h / T::lit(2.0)
    }

    pub fn area(&self) -> T {
        self.w * self.h
    }

    pub fn intersection_area(&self, other: &Self) -> T {
        let iw = self.right().min(other.right()) - self.left().max(other.left());
        let ih = self.bottom().min(other.bottom()) - self.top().max(other.top());
        iw.max(T::zero()) * ih.max(T::zero())
    }

    pub fn iou(&self, other: &Self) -> T {
        let inter = self.intersection_area(other);
        let union = self.area() + other.area() - inter;
        if union <= T::zero() {
            return T::zero();
        }
        inter / union
    }

    /// Smallest box containing both.
    pub fn union(&self, other: &Self) -> Self {
        BBox::from_corners(
            self.left().min(other.left()),
            self.top().min(other.top()),
            self.right().max(other.right()),
            self.bottom().max(other.bottom()),
        )
    }

    /// Containment up to a few ulps of the coordinate magnitude, since the
    /// center form cannot reproduce corner extents exactly.
    pub fn contains(&self, other: &Self) -> bool {
        let mag = [self.left(), self.right(), self.top(), self.bottom()]
            .iter()
            .fold(T::one(), |m, v| m.max(v.abs()));
        let eps = T::epsilon() * T::lit(8.0) * mag;
        self.left() <= other.left() + eps
            && self.top() <= other.top() + eps
            && self.right() + eps >= other.right()
            && self.bottom() + eps >= other.bottom()
    }

    /// Clips the box to `[0, width] x [0, height]`. `None` if nothing remains.
    pub fn clamp_to(&self, width: T, height: T) -> Option<Self> {
        let left = self.left().max(T::zero());
        let top = self.top().max(T::zero());
        let right = self.right().min(width);
        let bottom = self.bottom().min(height);
        (right > left && bottom > top).then(|| BBox::from_corners(left, top, right, bottom))
    }

    pub fn cast<U: Scalar>(&self) -> BBox<U> {
        BBox {
            cx: U::lit(self.cx.as_f64()),
            cy: U::lit(self.cy.as_f64()),
            w: U::lit(self.w.as_f64()),
            h: U::lit(self.h.as_f64()),
        }
    }
}

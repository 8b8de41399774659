//! Incremental convex hulls over points with strictly increasing x.
//!
//! The detector state feeds points `(j, S_j)` in order of `j`, so each hull
//! is maintained by the monotone-chain push rule in amortized O(1). A hull
//! answers `max_j (a * S_j + b * j)` in O(log n): along the upper hull the
//! objective is concave in the vertex index whenever `a > 0` (and along the
//! lower hull whenever `a < 0`), so the maximizer is found by binary search
//! on the edge increments.

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Side {
    Upper,
    Lower,
}

#[derive(Clone, Debug)]
pub(crate) struct MonotoneHull {
    side: Side,
    xs: Vec<f64>,
    ys: Vec<f64>,
}

impl MonotoneHull {
    pub(crate) fn new(side: Side) -> Self {
        Self {
            side,
            xs: Vec::new(),
            ys: Vec::new(),
        }
    }

    pub(crate) fn len(&self) -> usize {
        self.xs.len()
    }

    /// Insert `(x, y)`; `x` must exceed every previously inserted x.
    pub(crate) fn push(&mut self, x: f64, y: f64) {
        while self.len() >= 2 {
            let n = self.len();
            let cross = (self.xs[n - 1] - self.xs[n - 2]) * (y - self.ys[n - 2])
                - (self.ys[n - 1] - self.ys[n - 2]) * (x - self.xs[n - 2]);
            let middle_redundant = match self.side {
                Side::Upper => cross >= 0.0,
                Side::Lower => cross <= 0.0,
            };
            if middle_redundant {
                self.xs.pop();
                self.ys.pop();
            } else {
                break;
            }
        }
        self.xs.push(x);
        self.ys.push(y);
    }

    /// Maximum of `a * y + b * x` over the hull vertices.
    ///
    /// Requires `a > 0` on the upper hull and `a < 0` on the lower hull;
    /// those are the cases in which hull vertices dominate interior points.
    pub(crate) fn max_linear(&self, a: f64, b: f64) -> f64 {
        debug_assert!(!self.xs.is_empty());
        debug_assert!(match self.side {
            Side::Upper => a > 0.0,
            Side::Lower => a < 0.0,
        });
        let eval = |i: usize| a * self.ys[i] + b * self.xs[i];
        // Increments eval(i+1) - eval(i) are nonincreasing; find the peak.
        let (mut lo, mut hi) = (0usize, self.len() - 1);
        while lo < hi {
            let mid = (lo + hi) / 2;
            if eval(mid + 1) > eval(mid) {
                lo = mid + 1;
            } else {
                hi = mid;
            }
        }
        eval(lo)
    }
}

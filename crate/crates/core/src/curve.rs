//! Cubic Hermite segment resampled at uniform arc length.
//!
//! Arc length is integrated with a fixed composite Gauss-Legendre rule, so the
//! sampled points are a smooth function of the end conditions. The inverse
//! map from arc length to curve parameter uses a bracketed Newton iteration.

use nalgebra::Vector2;

const PANELS: usize = 64;

// 5-point Gauss-Legendre nodes and weights on [-1, 1].
const GL_NODES: [f64; 5] = [
    0.0,
    -0.538_469_310_105_683_1,
    0.538_469_310_105_683_1,
    -0.906_179_845_938_664,
    0.906_179_845_938_664,
];
const GL_WEIGHTS: [f64; 5] = [
    0.568_888_888_888_888_9,
    0.478_628_670_499_366_47,
    0.478_628_670_499_366_47,
    0.236_926_885_056_189_08,
    0.236_926_885_056_189_08,
];

#[derive(Debug, Clone, Copy)]
pub(crate) struct Hermite {
    p0: Vector2<f64>,
    m0: Vector2<f64>,
    p1: Vector2<f64>,
    m1: Vector2<f64>,
}

impl Hermite {
    pub(crate) fn new(p0: Vector2<f64>, m0: Vector2<f64>, p1: Vector2<f64>, m1: Vector2<f64>) -> Self {
        Self { p0, m0, p1, m1 }
    }

    pub(crate) fn point(&self, t: f64) -> Vector2<f64> {
        let t2 = t * t;
        let t3 = t2 * t;
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        self.p0 * h00 + self.m0 * h10 + self.p1 * h01 + self.m1 * h11
    }

    fn speed(&self, t: f64) -> f64 {
        let t2 = t * t;
        let d00 = 6.0 * t2 - 6.0 * t;
        let d10 = 3.0 * t2 - 4.0 * t + 1.0;
        let d01 = -6.0 * t2 + 6.0 * t;
        let d11 = 3.0 * t2 - 2.0 * t;
        (self.p0 * d00 + self.m0 * d10 + self.p1 * d01 + self.m1 * d11).norm()
    }

    fn length_between(&self, a: f64, b: f64) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        GL_NODES
            .iter()
            .zip(GL_WEIGHTS.iter())
            .map(|(x, w)| w * self.speed(mid + half * x))
            .sum::<f64>()
            * half
    }

    /// `n` points spaced uniformly in arc length, endpoints included.
    pub(crate) fn sample_arc_length(&self, n: usize) -> Vec<Vector2<f64>> {
        let width = 1.0 / PANELS as f64;
        let mut cumulative = Vec::with_capacity(PANELS + 1);
        cumulative.push(0.0);
        for j in 0..PANELS {
            let a = j as f64 * width;
            let next = cumulative[j] + self.length_between(a, a + width);
            cumulative.push(next);
        }
        let total = cumulative[PANELS];

        let length_to = |t: f64| -> f64 {
            let j = ((t / width) as usize).min(PANELS - 1);
            let a = j as f64 * width;
            cumulative[j] + self.length_between(a, t)
        };

        let mut points = Vec::with_capacity(n);
        points.push(self.point(0.0));
        let mut lo_start = 0.0;
        for i in 1..n - 1 {
            let target = total * i as f64 / (n - 1) as f64;
            let t = solve_parameter(target, lo_start, 1.0, length_to, |t| self.speed(t));
            lo_start = t;
            points.push(self.point(t));
        }
        points.push(self.point(1.0));
        points
    }
}

fn solve_parameter(
    target: f64,
    mut lo: f64,
    mut hi: f64,
    length_to: impl Fn(f64) -> f64,
    speed: impl Fn(f64) -> f64,
) -> f64 {
    // Start from the linear interpolation between the bracket ends.
    let f_lo = length_to(lo) - target;
    let f_hi = length_to(hi) - target;
    let mut t = if f_hi > f_lo {
        (lo - f_lo * (hi - lo) / (f_hi - f_lo)).clamp(lo, hi)
    } else {
        0.5 * (lo + hi)
    };
    for _ in 0..100 {
        let f = length_to(t) - target;
        if f == 0.0 {
            return t;
        }
        if f < 0.0 {
            lo = t;
        } else {
            hi = t;
        }
        let v = speed(t);
        let newton = t - f / v;
        let next = if v > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (next - t).abs() <= 1e-16 * t.abs().max(1.0) {
            return next;
        }
        t = next;
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;

    fn straight() -> Hermite {
        Hermite::new(
            Vector2::new(0.0, 0.0),
            Vector2::new(1.0, 0.0),
            Vector2::new(1.0, 0.0),
            Vector2::new(1.0, 0.0),
        )
    }

    #[test]
    fn endpoints_interpolate() {
        let h = Hermite::new(
            Vector2::new(0.1, -0.2),
            Vector2::new(0.3, 0.0),
            Vector2::new(0.5, 0.4),
            Vector2::new(0.0, 0.3),
        );
        assert_eq!(h.point(0.0), Vector2::new(0.1, -0.2));
        assert!((h.point(1.0) - Vector2::new(0.5, 0.4)).norm() < 1e-15);
    }

    #[test]
    fn straight_segment_is_evenly_spaced() {
        let pts = straight().sample_arc_length(11);
        for (i, p) in pts.iter().enumerate() {
            assert!((p.x - i as f64 / 10.0).abs() < 1e-12, "{i}: {p}");
            assert!(p.y.abs() < 1e-15);
        }
    }

    #[test]
    fn curved_segment_has_equal_chords() {
        let h = Hermite::new(
            Vector2::new(0.0, 0.0),
            Vector2::new(0.4, 0.0),
            Vector2::new(0.3, 0.2),
            Vector2::new(-0.2, 0.35),
        );
        let pts = h.sample_arc_length(200);
        let chords: Vec<f64> = pts.windows(2).map(|w| (w[1] - w[0]).norm()).collect();
        let max = chords.iter().cloned().fold(f64::MIN, f64::max);
        let min = chords.iter().cloned().fold(f64::MAX, f64::min);
        // Chords approximate equal arc steps on a finely sampled smooth curve.
        assert!((max - min) / max < 1e-3, "min {min} max {max}");
    }
}

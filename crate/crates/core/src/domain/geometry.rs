//! Planar geometry helpers for cut-cell quadrature and boundary crossings.

/// Area of the intersection of the disk `|p - c| <= r` with the axis-aligned
/// rectangle `[x0, x1] × [y0, y1]`.
///
/// The integrand in `x` is piecewise of the form `a + b·sqrt(r² - x²)`; it is
/// split at its kinks and integrated in closed form.
pub fn disk_rect_area(c: [f64; 2], r: f64, x0: f64, x1: f64, y0: f64, y1: f64) -> f64 {
    // shift to the disk centre
    let (x0, x1, y0, y1) = (x0 - c[0], x1 - c[0], y0 - c[1], y1 - c[1]);
    let lo = x0.max(-r);
    let hi = x1.min(r);
    if hi <= lo || y1 <= y0 {
        return 0.0;
    }
    let mut breaks = vec![lo, hi];
    for y in [y0, y1] {
        if y.abs() < r {
            let xb = (r * r - y * y).sqrt();
            for x in [-xb, xb] {
                if x > lo && x < hi {
                    breaks.push(x);
                }
            }
        }
    }
    breaks.sort_by(|a, b| a.partial_cmp(b).unwrap());

    let s = |x: f64| (r * r - x * x).max(0.0).sqrt();
    // antiderivative of sqrt(r² - x²)
    let big_s = |x: f64| {
        let t = (x / r).clamp(-1.0, 1.0);
        0.5 * (x * s(x) + r * r * t.asin())
    };

    let mut area = 0.0;
    for w in breaks.windows(2) {
        let (a, b) = (w[0], w[1]);
        if b - a <= 0.0 {
            continue;
        }
        let m = 0.5 * (a + b);
        let sm = s(m);
        let top_is_circle = sm < y1;
        let bottom_is_circle = -sm > y0;
        if (if top_is_circle { sm } else { y1 }) <= (if bottom_is_circle { -sm } else { y0 }) {
            continue;
        }
        let int_s = big_s(b) - big_s(a);
        let len = b - a;
        let top = if top_is_circle { int_s } else { y1 * len };
        let bottom = if bottom_is_circle { -int_s } else { y0 * len };
        area += top - bottom;
    }
    area.max(0.0)
}

/// Area of the intersection of two axis-aligned rectangles.
pub fn rect_rect_area(a: [f64; 4], b: [f64; 4]) -> f64 {
    let w = (a[1].min(b[1]) - a[0].max(b[0])).max(0.0);
    let h = (a[3].min(b[3]) - a[2].max(b[2])).max(0.0);
    w * h
}

/// Smallest `t` in `(0, 1]` with `|p + t·d - c| = r`, for `p` strictly inside
/// or strictly outside the circle and `p + d` on the other side.
pub fn segment_circle_crossing(p: [f64; 2], d: [f64; 2], c: [f64; 2], r: f64) -> Option<f64> {
    let fx = p[0] - c[0];
    let fy = p[1] - c[1];
    let a = d[0] * d[0] + d[1] * d[1];
    let b = 2.0 * (fx * d[0] + fy * d[1]);
    let cc = fx * fx + fy * fy - r * r;
    let disc = b * b - 4.0 * a * cc;
    if disc < 0.0 {
        return None;
    }
    let sq = disc.sqrt();
    // numerically stable roots
    let qq = -0.5 * (b + b.signum() * sq);
    let mut roots = [qq / a, if qq != 0.0 { cc / qq } else { f64::NAN }];
    roots.sort_by(|x, y| x.partial_cmp(y).unwrap_or(std::cmp::Ordering::Equal));
    roots.into_iter().find(|t| t.is_finite() && *t > 0.0 && *t <= 1.0)
}

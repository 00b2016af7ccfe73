//! Ordinary least squares on a line, the workhorse of every exponent fit.

/// Result of fitting `y = intercept + slope * x`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    /// Standard error of the slope (NaN with fewer than three points).
    pub slope_se: f64,
    /// Largest absolute residual.
    pub max_residual: f64,
    pub points: usize,
}

/// Fits a line through `(x, y)` pairs. Returns `None` with fewer than two
/// points or when all `x` coincide.
pub fn fit_line(points: &[(f64, f64)]) -> Option<LineFit> {
    let n = points.len();
    if n < 2 {
        return None;
    }
    let nf = n as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / nf;
    let my = points.iter().map(|p| p.1).sum::<f64>() / nf;
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for &(x, y) in points {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
    }
    if sxx <= 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let mut sse = 0.0;
    let mut max_residual: f64 = 0.0;
    for &(x, y) in points {
        let r = y - (intercept + slope * x);
        sse += r * r;
        max_residual = max_residual.max(r.abs());
    }
    let slope_se = if n > 2 {
        (sse / (nf - 2.0) / sxx).sqrt()
    } else {
        f64::NAN
    };
    Some(LineFit {
        slope,
        intercept,
        slope_se,
        max_residual,
        points: n,
    })
}

/// Smallest constant `c` with `y <= ln c + slope * x` on every point, as `c`.
pub(crate) fn envelope_constant(points: &[(f64, f64)], slope: f64) -> f64 {
    points
        .iter()
        .map(|&(x, y)| y - slope * x)
        .fold(f64::NEG_INFINITY, f64::max)
        .exp()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_line_is_recovered() {
        let pts: Vec<_> = (0..5).map(|i| (i as f64, 3.0 - 0.5 * i as f64)).collect();
        let fit = fit_line(&pts).unwrap();
        assert!((fit.slope + 0.5).abs() < 1e-14);
        assert!((fit.intercept - 3.0).abs() < 1e-14);
        assert!(fit.max_residual < 1e-14);
        assert!(fit.slope_se < 1e-14);
    }

    #[test]
    fn degenerate_inputs() {
        assert!(fit_line(&[(1.0, 2.0)]).is_none());
        assert!(fit_line(&[(1.0, 2.0), (1.0, 3.0)]).is_none());
    }

    #[test]
    fn envelope_dominates_all_points() {
        let pts = [(0.0, 1.0), (1.0, 2.5), (2.0, 2.9)];
        let c = envelope_constant(&pts, 1.0);
        for (x, y) in pts {
            assert!(y <= c.ln() + x + 1e-12);
        }
    }
}

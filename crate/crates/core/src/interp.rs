//! Piecewise cubic Hermite interpolation on strictly increasing grids.
//!
//! Node tangents come from the derivative of the five-point Lagrange
//! polynomial through the surrounding nodes (fourth-order on smooth data), so
//! the interpolant is C1 and linear in the tabulated data. The linearity
//! matters: a slice of the tensor-product surface interpolant at a fixed
//! coordinate is exactly the 1-D interpolant of the sliced values.

const MAX_STENCIL: usize = 6;
const TANGENT_POINTS: usize = 5;

/// Stencil of consecutive node indices with value and derivative weights.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Stencil {
    pub start: usize,
    pub len: usize,
    pub w: [f64; MAX_STENCIL],
    pub dw: [f64; MAX_STENCIL],
}

impl Stencil {
    pub fn apply(&self, data: impl Fn(usize) -> f64) -> (f64, f64) {
        let mut v = 0.0;
        let mut d = 0.0;
        for k in 0..self.len {
            let y = data(self.start + k);
            v += self.w[k] * y;
            d += self.dw[k] * y;
        }
        (v, d)
    }
}

/// Returns true when `grid` is strictly increasing and finite.
pub(crate) fn strictly_increasing(grid: &[f64]) -> bool {
    grid.iter().all(|v| v.is_finite()) && grid.windows(2).all(|w| w[1] > w[0])
}

/// Tangent at node `i` as `m_i = sum_k c[k] * y[start + k]`.
fn tangent_weights(grid: &[f64], i: usize) -> (usize, [f64; TANGENT_POINTS], usize) {
    let n = grid.len();
    let len = n.min(TANGENT_POINTS);
    let start = i.saturating_sub(len / 2).min(n - len);
    let xi = grid[i];
    let mut c = [0.0; TANGENT_POINTS];
    for j in 0..len {
        let gj = start + j;
        if gj == i {
            c[j] = (0..len).filter(|&m| start + m != i).map(|m| 1.0 / (xi - grid[start + m])).sum();
        } else {
            let mut num = 1.0;
            let mut den = 1.0;
            for m in 0..len {
                let gm = start + m;
                if gm != gj {
                    den *= grid[gj] - grid[gm];
                    if gm != i {
                        num *= xi - grid[gm];
                    }
                }
            }
            c[j] = num / den;
        }
    }
    (start, c, len)
}

/// Locates the cell containing `t` and returns the Hermite stencil. Outside
/// the grid the end cell is extrapolated.
pub(crate) fn stencil(grid: &[f64], t: f64) -> Stencil {
    let n = grid.len();
    debug_assert!(n >= 2);
    let mut w = [0.0; MAX_STENCIL];
    let mut dw = [0.0; MAX_STENCIL];
    let cell = match grid.binary_search_by(|g| g.partial_cmp(&t).unwrap_or(std::cmp::Ordering::Less)) {
        Ok(i) => {
            // exact node hit: reproduce the sample bit-for-bit
            let (s, c, len) = tangent_weights(grid, i);
            w[i - s] = 1.0;
            dw[..len].copy_from_slice(&c[..len]);
            return Stencil { start: s, len, w, dw };
        }
        Err(0) => 0,
        Err(i) if i >= n => n - 2,
        Err(i) => i - 1,
    };
    let x0 = grid[cell];
    let x1 = grid[cell + 1];
    let h = x1 - x0;
    let s = (t - x0) / h;
    let s2 = s * s;
    let s3 = s2 * s;
    let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
    let h10 = s3 - 2.0 * s2 + s;
    let h01 = -2.0 * s3 + 3.0 * s2;
    let h11 = s3 - s2;
    let d00 = (6.0 * s2 - 6.0 * s) / h;
    let d10 = 3.0 * s2 - 4.0 * s + 1.0;
    let d01 = (-6.0 * s2 + 6.0 * s) / h;
    let d11 = 3.0 * s2 - 2.0 * s;

    let (sa, ca, la) = tangent_weights(grid, cell);
    let (sb, cb, lb) = tangent_weights(grid, cell + 1);
    let start = sa.min(cell);
    let end = (sb + lb).max(cell + 2).max(sa + la);
    let len = end - start;
    debug_assert!(len <= MAX_STENCIL);
    w[cell - start] += h00;
    w[cell + 1 - start] += h01;
    dw[cell - start] += d00;
    dw[cell + 1 - start] += d01;
    for k in 0..la {
        w[sa + k - start] += h10 * h * ca[k];
        dw[sa + k - start] += d10 * ca[k];
    }
    for k in 0..lb {
        w[sb + k - start] += h11 * h * cb[k];
        dw[sb + k - start] += d11 * cb[k];
    }
    Stencil { start, len, w, dw }
}

/// Evaluates the 1-D interpolant and its derivative.
pub(crate) fn eval(grid: &[f64], values: &[f64], t: f64) -> (f64, f64) {
    stencil(grid, t).apply(|i| values[i])
}

/// Golden-section maximisation of `f` on `[a, b]`.
pub(crate) fn golden_max(mut a: f64, mut b: f64, tol: f64, f: impl Fn(f64) -> f64) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    let mut iter = 0;
    while (b - a).abs() > tol && iter < 200 {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
        iter += 1;
    }
    let x = 0.5 * (a + b);
    let fx = f(x);
    if fc > fx && fc >= fd {
        (c, fc)
    } else if fd > fx {
        (d, fd)
    } else {
        (x, fx)
    }
}

/// Pairwise (fixed-tree) summation; the result depends only on the order of
/// `xs`, never on how the caller computed them.
pub(crate) fn pairwise_sum(xs: &[f64]) -> f64 {
    match xs.len() {
        0 => 0.0,
        1 => xs[0],
        n if n <= 8 => xs.iter().sum(),
        n => {
            let (a, b) = xs.split_at(n / 2);
            pairwise_sum(a) + pairwise_sum(b)
        }
    }
}

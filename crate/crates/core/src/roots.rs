//! Bracketed scalar root finding: Newton steps kept inside a shrinking
//! bisection bracket.

/// Finds a root of `f` inside `[a, b]`, where `f(a)` and `f(b)` differ in sign.
///
/// `f` returns the value and the derivative. A Newton step is accepted only
/// if it stays strictly inside the current bracket and at least halves the
/// residual; otherwise the bracket is bisected. Terminates when the bracket
/// is narrower than `xtol` or cannot shrink further in floating point.
pub fn newton_bisect<F>(mut f: F, mut a: f64, mut b: f64, xtol: f64) -> Option<f64>
where
    F: FnMut(f64) -> (f64, f64),
{
    let (mut fa, _) = f(a);
    let (fb, _) = f(b);
    if fa == 0.0 {
        return Some(a);
    }
    if fb == 0.0 {
        return Some(b);
    }
    if fa.signum() == fb.signum() || !fa.is_finite() || !fb.is_finite() {
        return None;
    }
    if a > b {
        std::mem::swap(&mut a, &mut b);
        fa = fb;
    }

    let mut x = 0.5 * (a + b);
    let (mut fx, mut dfx) = f(x);
    for _ in 0..200 {
        if fx == 0.0 {
            return Some(x);
        }
        if fx.signum() == fa.signum() {
            a = x;
            fa = fx;
        } else {
            b = x;
        }
        if b - a <= xtol {
            break;
        }

        let newton = x - fx / dfx;
        let candidate = if dfx != 0.0 && newton > a && newton < b {
            let (fn_, dfn) = f(newton);
            if fn_.abs() <= 0.5 * fx.abs() {
                Some((newton, fn_, dfn))
            } else {
                None
            }
        } else {
            None
        };
        let (nx, nfx, ndfx) = match candidate {
            Some(c) => c,
            None => {
                let mid = 0.5 * (a + b);
                if mid <= a || mid >= b {
                    break;
                }
                let (fm, dfm) = f(mid);
                (mid, fm, dfm)
            }
        };
        if nx == x {
            break;
        }
        x = nx;
        fx = nfx;
        dfx = ndfx;
    }
    Some(x)
}

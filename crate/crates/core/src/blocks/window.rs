//! Window partitioning of channels-last `[N, H, W, C]` token grids.

use crate::error::{Error, Result};
use crate::numerics::Var;

/// Largest window side `<= window` that tiles an `h x w` grid.
pub fn effective_window(h: usize, w: usize, window: usize) -> usize {
    (1..=window.min(h).min(w)).rev().find(|s| h.is_multiple_of(*s) && w.is_multiple_of(*s)).unwrap_or(1)
}

/// Shift used for the second attention pass: half a window, or 0 when one
/// window already covers the grid.
pub fn shift_for(h: usize, w: usize, window: usize) -> usize {
    if window < h || window < w {
        window / 2
    } else {
        0
    }
}

fn check(dims: &[usize], window: usize, shift: usize) -> Result<(usize, usize, usize, usize)> {
    let [n, h, w, c] = *dims else {
        return Err(Error::shape(format!("window ops expect [N, H, W, C], got {dims:?}")));
    };
    if window == 0 || h % window != 0 || w % window != 0 {
        return Err(Error::shape(format!("grid {h}x{w} not divisible by window {window}")));
    }
    if shift != 0 && shift != window / 2 {
        return Err(Error::config(format!("shift must be 0 or window/2 = {}, got {shift}", window / 2)));
    }
    Ok((n, h, w, c))
}

/// `[N, H, W, C] -> [N * nW, window^2, C]`. With `shift > 0` the grid is first
/// rolled by `(-shift, -shift)`. Windows are ordered row-major within each
/// sample, tokens row-major within each window.
pub fn window_partition<'t>(x: &Var<'t>, window: usize, shift: usize) -> Result<Var<'t>> {
    let (n, h, w, c) = check(&x.dims(), window, shift)?;
    let rolled = if shift > 0 { x.roll(1, -(shift as isize))?.roll(2, -(shift as isize))? } else { *x };
    rolled.reshape(&[n, h / window, window, w / window, window, c])?.permute(&[0, 1, 3, 2, 4, 5])?.reshape(&[
        n * (h / window) * (w / window),
        window * window,
        c,
    ])
}

/// Inverse of [`window_partition`] for an `n x h x w` grid.
pub fn window_reverse<'t>(
    windows: &Var<'t>,
    n: usize,
    h: usize,
    w: usize,
    window: usize,
    shift: usize,
) -> Result<Var<'t>> {
    let dims = windows.dims();
    let expected = n * (h / window.max(1)) * (w / window.max(1));
    let c = match dims[..] {
        [b, t, c] if b == expected && t == window * window => c,
        _ => return Err(Error::shape(format!("{dims:?} are not windows of a {n}x{h}x{w} grid with window {window}"))),
    };
    check(&[n, h, w, c], window, shift)?;
    let grid = windows
        .reshape(&[n, h / window, w / window, window, window, c])?
        .permute(&[0, 1, 3, 2, 4, 5])?
        .reshape(&[n, h, w, c])?;
    if shift > 0 {
        grid.roll(1, shift as isize)?.roll(2, shift as isize)
    } else {
        Ok(grid)
    }
}

/// Region labels of the rolled grid used to mask attention between tokens
/// that were not neighbours before the cyclic shift. Returns `[nW, T, T]`
/// additive mask values (0 or -100).
pub fn shifted_window_mask(h: usize, w: usize, window: usize, shift: usize) -> Vec<f64> {
    let region = |i: usize, n: usize| {
        if i < n - window {
            0
        } else if i < n - shift {
            1
        } else {
            2
        }
    };
    let (nh, nw) = (h / window, w / window);
    let t = window * window;
    let mut out = vec![0.0; nh * nw * t * t];
    for wy in 0..nh {
        for wx in 0..nw {
            let base = (wy * nw + wx) * t * t;
            let label = |k: usize| {
                let (y, x) = (wy * window + k / window, wx * window + k % window);
                region(y, h) * 3 + region(x, w)
            };
            for a in 0..t {
                for b in 0..t {
                    if label(a) != label(b) {
                        out[base + a * t + b] = -100.0;
                    }
                }
            }
        }
    }
    out
}

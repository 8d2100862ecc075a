//! Scalar search and quadrature helpers shared by the solvers.
//!
//! Every maximizer here is deterministic: grid values are evaluated in
//! parallel but reduced in index order, and ties resolve to the smallest
//! abscissa.

use rayon::prelude::*;

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Uniformly spaced points on `[lo, hi]`, endpoints included.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let step = (hi - lo) / (n - 1) as f64;
            (0..n)
                .map(|i| if i == n - 1 { hi } else { lo + step * i as f64 })
                .collect()
        }
    }
}

/// Log-spaced points on `[lo, hi]`; requires `0 < lo < hi`.
pub fn logspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (llo, lhi) = (lo.ln(), hi.ln());
    let mut pts: Vec<f64> = linspace(llo, lhi, n).into_iter().map(f64::exp).collect();
    if let Some(first) = pts.first_mut() {
        *first = lo;
    }
    if let Some(last) = pts.last_mut() {
        *last = hi;
    }
    pts
}

/// Golden-section search for the maximum of `f` on `[lo, hi]`.
///
/// Only interior points are evaluated, so `f` may be discontinuous at the
/// endpoints. Returns `(x, f(x))`.
pub fn golden_max(f: impl Fn(f64) -> f64, lo: f64, hi: f64, iters: usize) -> (f64, f64) {
    let (mut a, mut b) = (lo, hi);
    let mut x1 = b - INV_PHI * (b - a);
    let mut x2 = a + INV_PHI * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..iters {
        if b - a <= f64::EPSILON * (a.abs() + b.abs()) {
            break;
        }
        if f1 >= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INV_PHI * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INV_PHI * (b - a);
            f2 = f(x2);
        }
    }
    if f1 >= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// A located maximum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Argmax {
    pub x: f64,
    pub value: f64,
}

fn better(candidate: Argmax, incumbent: Argmax) -> bool {
    candidate.value > incumbent.value
        || (candidate.value == incumbent.value && candidate.x < incumbent.x)
}

/// Index of the largest value, ties to the smallest index. NaN never wins.
pub fn argmax_index(values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, v) in values.iter().enumerate() {
        if v.is_nan() {
            continue;
        }
        match best {
            Some(j) if values[j] >= *v => {}
            _ => best = Some(i),
        }
    }
    best
}

/// Grid scan of `f` over `[lo, hi]` followed by golden-section refinement
/// in the two cells adjacent to the best node.
///
/// `extra` points inside the interval (discontinuities, kinks, known
/// candidates) are merged into the node set, so each refinement cell lies
/// inside a single smooth piece of `f` whenever its breakpoints are listed.
pub fn grid_max_refined<F>(f: F, lo: f64, hi: f64, n: usize, iters: usize, extra: &[f64]) -> Argmax
where
    F: Fn(f64) -> f64 + Sync,
{
    let mut nodes = linspace(lo, hi, n.max(2));
    nodes.extend(extra.iter().copied().filter(|x| *x >= lo && *x <= hi));
    nodes.sort_by(f64::total_cmp);
    nodes.dedup();

    let values: Vec<f64> = nodes.par_iter().map(|&x| f(x)).collect();
    refine_best(&f, &nodes, &values, iters)
}

/// Sequential variant of [`grid_max_refined`] over caller-supplied sorted nodes.
pub fn max_on_nodes(f: impl Fn(f64) -> f64, nodes: &[f64], iters: usize) -> Argmax {
    let values: Vec<f64> = nodes.iter().map(|&x| f(x)).collect();
    refine_best(&f, nodes, &values, iters)
}

fn refine_best(f: &impl Fn(f64) -> f64, nodes: &[f64], values: &[f64], iters: usize) -> Argmax {
    let i = argmax_index(values).unwrap_or(0);
    let mut best = Argmax { x: nodes[i], value: values[i] };

    let mut cells = Vec::with_capacity(2);
    if i > 0 {
        cells.push((nodes[i - 1], nodes[i]));
    }
    if i + 1 < nodes.len() {
        cells.push((nodes[i], nodes[i + 1]));
    }
    for (a, b) in cells {
        let (x, value) = golden_max(f, a, b, iters);
        let cand = Argmax { x, value };
        if !value.is_nan() && better(cand, best) {
            best = cand;
        }
    }
    best
}

/// Bisection for `g(x) = target` with `g` nondecreasing on `[lo, hi]`.
///
/// Returns `None` when the target is not bracketed.
pub fn bisect_increasing(
    g: impl Fn(f64) -> f64,
    target: f64,
    mut lo: f64,
    mut hi: f64,
    width_tol: f64,
) -> Option<f64> {
    let (glo, ghi) = (g(lo), g(hi));
    if !(glo <= target && target <= ghi) {
        return None;
    }
    if glo == target {
        return Some(lo);
    }
    if ghi == target {
        return Some(hi);
    }
    for _ in 0..400 {
        if hi - lo <= width_tol {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if g(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

/// Simpson's rule on a single panel `[a, b]`.
pub fn simpson_panel(f: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let m = 0.5 * (a + b);
    (b - a) / 6.0 * (f(a) + 4.0 * f(m) + f(b))
}

/// Composite Simpson rule with `panels` equal panels on `[a, b]`.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    let panels = panels.max(1);
    let h = (b - a) / panels as f64;
    (0..panels)
        .map(|i| {
            let x0 = a + h * i as f64;
            let x1 = if i + 1 == panels { b } else { x0 + h };
            simpson_panel(&f, x0, x1)
        })
        .sum()
}

/// Rounds to `digits` significant decimal digits.
pub fn round_sig(x: f64, digits: usize) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{:.*e}", digits.saturating_sub(1), x).parse().unwrap_or(x)
}

/// Renders a float with 12 significant digits, `%g` style.
pub fn fmt_sig(x: f64) -> String {
    const DIGITS: i32 = 12;
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{:.*e}", (DIGITS - 1) as usize, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("exponent digits");
    if (-5..DIGITS).contains(&exp) {
        let decimals = (DIGITS - 1 - exp).max(0) as usize;
        trim_zeros(format!("{:.*}", decimals, x))
    } else {
        format!("{}e{}", trim_zeros(mantissa.to_string()), exp)
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

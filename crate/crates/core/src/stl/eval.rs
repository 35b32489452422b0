//! Window-based evaluation of [`Formula`] over a [`Trace`].
//!
//! Each node is evaluated on a contiguous index range `[lo, hi]` and returns
//! one value per index; temporal operators widen the range of their operands
//! by their interval. The gradient pass is reverse mode: a node receives the
//! adjoint of its own values, distributes it through the LSE weights of its
//! max/min and recurses, finally landing on predicate gradients.

use super::formula::Formula;
use super::grid::interval_to_indices;
use super::trace::{Trace, TraceGradient};
use crate::error::{Error, Result};
use crate::lse;

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Semantics {
    Exact,
    Smooth(f64),
}

impl Semantics {
    #[inline]
    fn max(self, v: &[f64]) -> f64 {
        match self {
            Semantics::Exact => lse::max(v),
            Semantics::Smooth(c) => lse::smooth_max(v, c),
        }
    }

    #[inline]
    fn min(self, v: &[f64]) -> f64 {
        match self {
            Semantics::Exact => lse::min(v),
            Semantics::Smooth(c) => lse::smooth_min(v, c),
        }
    }
}

fn check_range(trace: &Trace, hi: usize) -> Result<()> {
    let last = trace.grid().steps();
    if hi > last {
        return Err(Error::HorizonOverflow { needed: hi, last });
    }
    Ok(())
}

/// Running minimum of `r[0..=j]` for every `j`, exact or LSE.
///
/// For the smooth case also returns the log-sum-exp accumulators
/// `S_j = ln sum_{i<=j} exp(-c r_i)`, so that `inner_j = -S_j / c`.
fn prefix_mins(r: &[f64], sem: Semantics) -> (Vec<f64>, Vec<f64>) {
    let mut inner = Vec::with_capacity(r.len());
    let mut acc = Vec::with_capacity(r.len());
    match sem {
        Semantics::Exact => {
            let mut m = f64::INFINITY;
            for &x in r {
                m = m.min(x);
                inner.push(m);
            }
        }
        Semantics::Smooth(c) => {
            let mut s = f64::NEG_INFINITY;
            for &x in r {
                let e = -c * x;
                s = if s == f64::NEG_INFINITY {
                    e
                } else {
                    let m = s.max(e);
                    m + ((s - m).exp() + (e - m).exp()).ln()
                };
                acc.push(s);
                inner.push(if acc.len() == 1 { x } else { -s / c });
            }
        }
    }
    (inner, acc)
}

/// Values of `f` at indices `lo..=hi`.
pub(crate) fn values(
    f: &Formula,
    trace: &Trace,
    lo: usize,
    hi: usize,
    sem: Semantics,
) -> Result<Vec<f64>> {
    check_range(trace, hi)?;
    let grid = trace.grid();
    Ok(match f {
        Formula::Pred(p) => (lo..=hi).map(|k| p.value(trace, k)).collect(),
        Formula::Not(s) => values(s, trace, lo, hi, sem)?.into_iter().map(|v| -v).collect(),
        Formula::And(subs) => {
            let cols = subs
                .iter()
                .map(|s| values(s, trace, lo, hi, sem))
                .collect::<Result<Vec<_>>>()?;
            let mut buf = vec![0.0; subs.len()];
            (0..=hi - lo)
                .map(|i| {
                    for (b, col) in buf.iter_mut().zip(&cols) {
                        *b = col[i];
                    }
                    sem.min(&buf)
                })
                .collect()
        }
        Formula::Or(subs) => {
            // not(and(not ...))
            let cols = subs
                .iter()
                .map(|s| values(s, trace, lo, hi, sem))
                .collect::<Result<Vec<_>>>()?;
            let mut buf = vec![0.0; subs.len()];
            (0..=hi - lo)
                .map(|i| {
                    for (b, col) in buf.iter_mut().zip(&cols) {
                        *b = -col[i];
                    }
                    -sem.min(&buf)
                })
                .collect()
        }
        Formula::Always { interval, sub } | Formula::Eventually { interval, sub } => {
            let (a, b) = interval_to_indices(*interval, grid)?;
            let inner = values(sub, trace, lo + a, hi + b, sem)?;
            let w = b - a + 1;
            let is_always = matches!(f, Formula::Always { .. });
            (0..=hi - lo)
                .map(|i| {
                    let win = &inner[i..i + w];
                    if is_always {
                        sem.min(win)
                    } else {
                        sem.max(win)
                    }
                })
                .collect()
        }
        Formula::Until {
            interval,
            left,
            right,
        } => {
            let (a, b) = interval_to_indices(*interval, grid)?;
            let r2 = values(right, trace, lo + a, hi + b, sem)?;
            let r1 = values(left, trace, lo, hi + b, sem)?;
            let mut pairs = Vec::with_capacity(b - a + 1);
            (0..=hi - lo)
                .map(|i| {
                    let (inner, _) = prefix_mins(&r1[i..=i + b], sem);
                    pairs.clear();
                    for off in a..=b {
                        pairs.push(sem.min(&[r2[i + off - a], inner[off]]));
                    }
                    sem.max(&pairs)
                })
                .collect()
        }
    })
}

/// Reverse-mode pass of the smooth semantics.
///
/// `adj[i]` is the adjoint of the node value at `lo + i`. Returns the node's
/// smooth values on `[lo, hi]`.
pub(crate) fn backprop(
    f: &Formula,
    trace: &Trace,
    lo: usize,
    hi: usize,
    c: f64,
    adj: &[f64],
    grad: &mut TraceGradient,
) -> Result<Vec<f64>> {
    check_range(trace, hi)?;
    debug_assert_eq!(adj.len(), hi - lo + 1);
    let sem = Semantics::Smooth(c);
    let grid = trace.grid();
    let n = hi - lo + 1;
    match f {
        Formula::Pred(p) => Ok((lo..=hi)
            .zip(adj)
            .map(|(k, &w)| {
                p.backprop(trace, k, w, grad);
                p.value(trace, k)
            })
            .collect()),
        Formula::Not(s) => {
            let neg: Vec<f64> = adj.iter().map(|a| -a).collect();
            Ok(backprop(s, trace, lo, hi, c, &neg, grad)?
                .into_iter()
                .map(|v| -v)
                .collect())
        }
        Formula::And(subs) | Formula::Or(subs) => {
            let is_or = matches!(f, Formula::Or(_));
            let cols = subs
                .iter()
                .map(|s| values(s, trace, lo, hi, sem))
                .collect::<Result<Vec<_>>>()?;
            let m = subs.len();
            let mut child_adj = vec![vec![0.0; n]; m];
            let mut buf = vec![0.0; m];
            let mut w = vec![0.0; m];
            let mut out = Vec::with_capacity(n);
            for i in 0..n {
                for (b, col) in buf.iter_mut().zip(&cols) {
                    *b = if is_or { -col[i] } else { col[i] };
                }
                let v = sem.min(&buf);
                out.push(if is_or { -v } else { v });
                lse::smooth_min_weights(&buf, c, &mut w);
                for (ca, &wj) in child_adj.iter_mut().zip(&w) {
                    ca[i] = adj[i] * wj;
                }
            }
            for (s, ca) in subs.iter().zip(&child_adj) {
                backprop(s, trace, lo, hi, c, ca, grad)?;
            }
            Ok(out)
        }
        Formula::Always { interval, sub } | Formula::Eventually { interval, sub } => {
            let is_always = matches!(f, Formula::Always { .. });
            let (a, b) = interval_to_indices(*interval, grid)?;
            let inner = values(sub, trace, lo + a, hi + b, sem)?;
            let w = b - a + 1;
            let mut sub_adj = vec![0.0; inner.len()];
            let mut weights = vec![0.0; w];
            let mut out = Vec::with_capacity(n);
            for i in 0..n {
                let win = &inner[i..i + w];
                if is_always {
                    out.push(sem.min(win));
                    lse::smooth_min_weights(win, c, &mut weights);
                } else {
                    out.push(sem.max(win));
                    lse::smooth_max_weights(win, c, &mut weights);
                }
                if adj[i] != 0.0 {
                    for (sa, &wt) in sub_adj[i..i + w].iter_mut().zip(&weights) {
                        *sa += adj[i] * wt;
                    }
                }
            }
            backprop(sub, trace, lo + a, hi + b, c, &sub_adj, grad)?;
            Ok(out)
        }
        Formula::Until {
            interval,
            left,
            right,
        } => {
            let (a, b) = interval_to_indices(*interval, grid)?;
            let r2 = values(right, trace, lo + a, hi + b, sem)?;
            let r1 = values(left, trace, lo, hi + b, sem)?;
            let mut adj2 = vec![0.0; r2.len()];
            let mut adj1 = vec![0.0; r1.len()];
            let w = b - a + 1;
            let mut pairs = vec![0.0; w];
            let mut outer_w = vec![0.0; w];
            let mut pair_w = [0.0; 2];
            let mut g_inner = vec![0.0; b + 1];
            let mut out = Vec::with_capacity(n);
            for i in 0..n {
                let seg = &r1[i..=i + b];
                let (inner, acc) = prefix_mins(seg, sem);
                for off in a..=b {
                    pairs[off - a] = sem.min(&[r2[i + off - a], inner[off]]);
                }
                out.push(sem.max(&pairs));
                if adj[i] == 0.0 {
                    continue;
                }
                lse::smooth_max_weights(&pairs, c, &mut outer_w);
                g_inner.iter_mut().for_each(|g| *g = 0.0);
                for off in a..=b {
                    let ow = adj[i] * outer_w[off - a];
                    lse::smooth_min_weights(&[r2[i + off - a], inner[off]], c, &mut pair_w);
                    adj2[i + off - a] += ow * pair_w[0];
                    g_inner[off] = ow * pair_w[1];
                }
                // d inner_j' / d r_j = exp(-c r_j - S_j') for j <= j'; accumulate
                // T_j = sum_{j' >= j} g(j') exp(S_j - S_j') backwards.
                let mut t = 0.0;
                for j in (0..=b).rev() {
                    if j < b {
                        t *= (acc[j] - acc[j + 1]).exp();
                    }
                    t += g_inner[j];
                    adj1[i + j] += (-c * seg[j] - acc[j]).exp() * t;
                }
            }
            backprop(right, trace, lo + a, hi + b, c, &adj2, grad)?;
            backprop(left, trace, lo, hi + b, c, &adj1, grad)?;
            Ok(out)
        }
    }
}

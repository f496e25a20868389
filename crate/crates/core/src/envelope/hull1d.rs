//! Exact one-dimensional biconjugate.
//!
//! The conjugate of a sampled function is the upper envelope of the lines
//! `p -> x_i p - f_i`. Its breakpoints are the slopes at which the supporting
//! node changes; the biconjugate at `x` is attained at one of them.

/// `f**` at every point of `(xs, fs)`; `xs` strictly increasing.
pub(crate) fn biconjugate(xs: &[f64], fs: &[f64]) -> Vec<f64> {
    debug_assert_eq!(xs.len(), fs.len());
    // indices of the lines that appear on the upper envelope, by increasing slope
    let mut env: Vec<usize> = Vec::with_capacity(xs.len());
    for c in 0..xs.len() {
        while env.len() >= 2 {
            let (a, b) = (env[env.len() - 2], env[env.len() - 1]);
            // b never dominates once the a/c crossing comes no later than a/b
            let ab = (fs[b] - fs[a]) * (xs[c] - xs[a]);
            let ac = (fs[c] - fs[a]) * (xs[b] - xs[a]);
            if ab >= ac {
                env.pop();
            } else {
                break;
            }
        }
        env.push(c);
    }
    let mut out = Vec::with_capacity(xs.len());
    let mut seg = 0;
    for (j, &x) in xs.iter().enumerate() {
        if env.len() == 1 {
            out.push(fs[j]);
            continue;
        }
        while seg + 2 < env.len() && xs[env[seg + 1]] <= x {
            seg += 1;
        }
        let (a, b) = (env[seg], env[seg + 1]);
        if j == a || j == b {
            out.push(fs[j]);
            continue;
        }
        // breakpoint slope p and f*(p) = x_a p - f_a
        let p = (fs[b] - fs[a]) / (xs[b] - xs[a]);
        let v = fs[a] + p * (x - xs[a]);
        out.push(v.min(fs[j]));
    }
    out
}

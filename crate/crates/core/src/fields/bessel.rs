//! Spherical Bessel functions and Legendre polynomials for the partial-wave
//! series. First kind by downward (Miller) recurrence where the upward pass
//! is unstable, second kind by upward recurrence which is always stable.

/// j_n(x) and derivatives for n = 0..=nmax.
pub fn spherical_jn(nmax: usize, x: f64) -> (Vec<f64>, Vec<f64>) {
    let mut j = vec![0.0; nmax + 1];
    let mut jp = vec![0.0; nmax + 1];
    if x == 0.0 {
        j[0] = 1.0;
        if nmax >= 1 {
            jp[1] = 1.0 / 3.0;
        }
        return (j, jp);
    }
    if (nmax as f64) < x {
        // upward recurrence is stable when the order stays below the argument
        j[0] = x.sin() / x;
        if nmax >= 1 {
            j[1] = x.sin() / (x * x) - x.cos() / x;
            for n in 1..nmax {
                j[n + 1] = (2.0 * n as f64 + 1.0) / x * j[n] - j[n - 1];
            }
        }
    } else {
        // Miller's downward recurrence from a safely large start order
        let start = nmax + (16.0 + 1.5 * x.abs().sqrt() * 4.0) as usize;
        let mut plus2 = 0.0f64;
        let mut plus1 = 1e-300f64;
        let mut tail = vec![0.0; start + 1];
        tail[start] = plus1;
        for m in (0..start).rev() {
            let cur = (2.0 * m as f64 + 3.0) / x * plus1 - plus2;
            plus2 = plus1;
            plus1 = cur;
            tail[m] = cur;
            // rescale to avoid overflow
            if cur.abs() > 1e250 {
                let s = 1.0 / cur.abs();
                plus1 *= s;
                plus2 *= s;
                for v in tail.iter_mut().skip(m) {
                    *v *= s;
                }
            }
        }
        let scale = (x.sin() / x) / tail[0];
        for n in 0..=nmax {
            j[n] = tail[n] * scale;
        }
    }
    jp[0] = if nmax >= 1 {
        // fill below after j[1] is known
        0.0
    } else {
        x.cos() / x - x.sin() / (x * x)
    };
    if nmax >= 1 {
        jp[0] = -j[1];
        for n in 1..=nmax {
            jp[n] = j[n - 1] - (n as f64 + 1.0) / x * j[n];
        }
    }
    (j, jp)
}

/// y_n(x) and derivatives for n = 0..=nmax; x must be positive.
pub fn spherical_yn(nmax: usize, x: f64) -> (Vec<f64>, Vec<f64>) {
    assert!(x > 0.0, "y_n requires a positive argument");
    let mut y = vec![0.0; nmax + 1];
    let mut yp = vec![0.0; nmax + 1];
    y[0] = -x.cos() / x;
    if nmax >= 1 {
        y[1] = -x.cos() / (x * x) - x.sin() / x;
        for n in 1..nmax {
            y[n + 1] = (2.0 * n as f64 + 1.0) / x * y[n] - y[n - 1];
        }
        yp[0] = -y[1];
        for n in 1..=nmax {
            yp[n] = y[n - 1] - (n as f64 + 1.0) / x * y[n];
        }
    } else {
        yp[0] = x.sin() / x + x.cos() / (x * x);
    }
    (y, yp)
}

/// Legendre polynomials P_0..P_nmax at a point in [-1, 1].
pub fn legendre_p(nmax: usize, x: f64) -> Vec<f64> {
    let mut p = vec![0.0; nmax + 1];
    p[0] = 1.0;
    if nmax >= 1 {
        p[1] = x;
        for n in 1..nmax {
            let nf = n as f64;
            p[n + 1] = ((2.0 * nf + 1.0) * x * p[n] - nf * p[n - 1]) / (nf + 1.0);
        }
    }
    p
}

//! Reference computations for tests. Each one takes the long, obvious
//! route (enumeration, iteration, differencing) and shares no code with
//! the crates under test.

pub mod lp {
    #[derive(Debug, Clone, Copy, PartialEq, Eq)]
    pub enum Rel {
        Le,
        Ge,
        Eq,
    }

    #[derive(Debug, Clone)]
    pub struct Row {
        pub a: Vec<f64>,
        pub rel: Rel,
        pub b: f64,
    }

    /// A box-bounded LP in plain arrays.
    #[derive(Debug, Clone)]
    pub struct Plain {
        pub objective: Vec<f64>,
        pub maximize: bool,
        pub rows: Vec<Row>,
        pub lower: Vec<f64>,
        pub upper: Vec<f64>,
    }

    /// Random LP with at most `max_vars` variables and `max_rows` rows.
    /// Coefficients sit on a half-integer grid so that degenerate and
    /// tied vertices turn up. Most instances are feasible by construction
    /// (right-hand sides taken around an interior point); about one in ten
    /// gets arbitrary right-hand sides.
    pub fn random<R: rand::Rng + ?Sized>(rng: &mut R, max_vars: usize, max_rows: usize) -> Plain {
        let n = rng.gen_range(1..=max_vars);
        let m = rng.gen_range(0..=max_rows);
        let grid = |rng: &mut R, r: f64| (rng.gen_range(-r..=r) * 2.0).round() / 2.0;
        let lower: Vec<f64> = (0..n).map(|_| grid(rng, 3.0)).collect();
        let upper: Vec<f64> = lower.iter().map(|l| l + 0.5 + rng.gen_range(0..8) as f64 * 0.5).collect();
        let x0: Vec<f64> = lower.iter().zip(&upper).map(|(l, u)| rng.gen_range(*l..=*u)).collect();
        let wild = rng.gen_bool(0.1);
        let rows = (0..m)
            .map(|_| {
                let a: Vec<f64> = (0..n).map(|_| grid(rng, 5.0)).collect();
                let at: f64 = a.iter().zip(&x0).map(|(a, x)| a * x).sum();
                let rel = match rng.gen_range(0..10) {
                    0 => Rel::Eq,
                    1..=5 => Rel::Le,
                    _ => Rel::Ge,
                };
                let slack = rng.gen_range(0.0..3.0);
                let b = if wild {
                    grid(rng, 10.0)
                } else {
                    match rel {
                        Rel::Le => at + slack,
                        Rel::Ge => at - slack,
                        Rel::Eq => at,
                    }
                };
                Row { a, rel, b }
            })
            .collect();
        Plain {
            objective: (0..n).map(|_| grid(rng, 4.0)).collect(),
            maximize: rng.gen_bool(0.5),
            rows,
            lower,
            upper,
        }
    }

    impl Plain {
        pub fn vertex_optimum(&self) -> Option<f64> {
            vertex_optimum(&self.objective, self.maximize, &self.rows, &self.lower, &self.upper)
        }
    }

    /// Solves the square system `m x = rhs` by Gaussian elimination with
    /// partial pivoting; `None` when (numerically) singular.
    pub fn solve_square(mut m: Vec<Vec<f64>>, mut rhs: Vec<f64>) -> Option<Vec<f64>> {
        let n = rhs.len();
        for col in 0..n {
            let piv = (col..n).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))?;
            if m[piv][col].abs() < 1e-10 {
                return None;
            }
            m.swap(col, piv);
            rhs.swap(col, piv);
            for r in col + 1..n {
                let f = m[r][col] / m[col][col];
                if f != 0.0 {
                    for c in col..n {
                        m[r][c] -= f * m[col][c];
                    }
                    rhs[r] -= f * rhs[col];
                }
            }
        }
        let mut x = vec![0.0; n];
        for r in (0..n).rev() {
            let s: f64 = (r + 1..n).map(|c| m[r][c] * x[c]).sum();
            x[r] = (rhs[r] - s) / m[r][r];
        }
        Some(x)
    }

    fn feasible(rows: &[Row], lower: &[f64], upper: &[f64], x: &[f64], tol: f64) -> bool {
        for (i, v) in x.iter().enumerate() {
            if *v < lower[i] - tol || *v > upper[i] + tol {
                return false;
            }
        }
        rows.iter().all(|r| {
            let lhs: f64 = r.a.iter().zip(x).map(|(a, b)| a * b).sum();
            let t = tol * (1.0 + r.b.abs());
            match r.rel {
                Rel::Le => lhs <= r.b + t,
                Rel::Ge => lhs >= r.b - t,
                Rel::Eq => (lhs - r.b).abs() <= t,
            }
        })
    }

    fn combinations(n: usize, k: usize, f: &mut impl FnMut(&[usize])) {
        fn go(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, f: &mut impl FnMut(&[usize])) {
            if cur.len() == k {
                f(cur);
                return;
            }
            for i in start..n {
                if n - i < k - cur.len() {
                    break;
                }
                cur.push(i);
                go(i + 1, n, k, cur, f);
                cur.pop();
            }
        }
        go(0, n, k, &mut Vec::with_capacity(k), f);
    }

    /// Optimal objective of a box-bounded LP by visiting every vertex.
    /// `None` when infeasible. All bounds must be finite.
    pub fn vertex_optimum(
        objective: &[f64],
        maximize: bool,
        rows: &[Row],
        lower: &[f64],
        upper: &[f64],
    ) -> Option<f64> {
        let n = objective.len();
        assert!(lower.iter().chain(upper).all(|v| v.is_finite()), "bounded problems only");
        // candidate hyperplanes: rows, then lower and upper bounds
        let mut planes: Vec<(Vec<f64>, f64)> = rows.iter().map(|r| (r.a.clone(), r.b)).collect();
        for i in 0..n {
            let mut e = vec![0.0; n];
            e[i] = 1.0;
            planes.push((e.clone(), lower[i]));
            planes.push((e, upper[i]));
        }
        // a vertex is the unique solution of some n independent active
        // planes; feasibility then enforces the equalities
        let mut best: Option<f64> = None;
        combinations(planes.len(), n, &mut |pick| {
            let m = pick.iter().map(|&i| planes[i].0.clone()).collect();
            let rhs = pick.iter().map(|&i| planes[i].1).collect();
            if let Some(x) = solve_square(m, rhs) {
                if feasible(rows, lower, upper, &x, 1e-9) {
                    let v: f64 = objective.iter().zip(&x).map(|(c, x)| c * x).sum();
                    best = Some(match best {
                        None => v,
                        Some(b) if maximize => b.max(v),
                        Some(b) => b.min(v),
                    });
                }
            }
        });
        best
    }
}

pub mod bellman {
    /// Fixed point of `V = r + gamma P V` by repeated substitution.
    /// `p[i][j]` is the probability of moving from `i` to `j`.
    pub fn iterate(p: &[Vec<f64>], r: &[f64], gamma: f64, tol: f64) -> Vec<f64> {
        let n = r.len();
        let mut v = vec![0.0; n];
        loop {
            let next: Vec<f64> = (0..n)
                .map(|i| r[i] + gamma * (0..n).map(|j| p[i][j] * v[j]).sum::<f64>())
                .collect();
            let delta = next.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            v = next;
            if delta <= tol {
                return v;
            }
        }
    }
}

pub mod mlp {
    /// Forward pass of a rectifier network stored as consecutive
    /// (weights `[out][in]`, bias `[out]`) blocks, identity output layer.
    pub fn forward(sizes: &[usize], params: &[f64], x: &[f64]) -> Vec<f64> {
        let mut act = x.to_vec();
        let mut offset = 0;
        let layers = sizes.len() - 1;
        for l in 0..layers {
            let (inp, out) = (sizes[l], sizes[l + 1]);
            let w = &params[offset..offset + inp * out];
            let b = &params[offset + inp * out..offset + inp * out + out];
            offset += inp * out + out;
            let mut next = b.to_vec();
            for i in 0..inp {
                for o in 0..out {
                    next[o] += w[o * inp + i] * act[i];
                }
            }
            if l + 1 < layers {
                for v in next.iter_mut() {
                    if *v < 0.0 {
                        *v = 0.0;
                    }
                }
            }
            act = next;
        }
        act
    }
}

pub mod diff {
    /// Central difference of `f` along coordinate `i`.
    pub fn central(f: impl Fn(&[f64]) -> f64, x: &[f64], i: usize, h: f64) -> f64 {
        let mut plus = x.to_vec();
        let mut minus = x.to_vec();
        plus[i] += h;
        minus[i] -= h;
        (f(&plus) - f(&minus)) / (2.0 * h)
    }
}

pub mod stats {
    /// Mean absolute error by explicit accumulation.
    pub fn mae(a: &[f64], b: &[f64]) -> f64 {
        let mut s = 0.0;
        for i in 0..a.len() {
            s += if a[i] > b[i] { a[i] - b[i] } else { b[i] - a[i] };
        }
        s / a.len() as f64
    }

    pub fn mse(a: &[f64], b: &[f64]) -> f64 {
        let mut s = 0.0;
        for i in 0..a.len() {
            s += (a[i] - b[i]).powi(2);
        }
        s / a.len() as f64
    }

    /// Pearson correlation from raw moment sums.
    pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let (mut sx, mut sy, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for i in 0..a.len() {
            sx += a[i];
            sy += b[i];
            sxx += a[i] * a[i];
            syy += b[i] * b[i];
            sxy += a[i] * b[i];
        }
        (n * sxy - sx * sy) / ((n * sxx - sx * sx).sqrt() * (n * syy - sy * sy).sqrt())
    }
}

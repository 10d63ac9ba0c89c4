//! Minimum-cost partial assignment with forbidden entries.
//!
//! A forbidden entry never appears in the output. Among assignments using
//! only allowed entries, the solver first maximizes the number of matched
//! pairs and then minimizes their total cost; remaining ties go to the
//! lexicographically smallest sorted `(row, col)` list.

/// Dense matrix of allowed costs; `None` marks a forbidden entry.
#[derive(Clone, Debug, PartialEq)]
pub struct CostMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Option<f64>>,
}

impl CostMatrix {
    pub fn forbidden(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![None; rows * cols] }
    }

    pub fn from_rows(rows: &[Vec<Option<f64>>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == cols), "ragged cost matrix");
        Self { rows: rows.len(), cols, data: rows.concat() }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> Option<f64> {
        self.data[r * self.cols + c]
    }

    /// Stores `cost`; non-finite values are stored as forbidden.
    pub fn set(&mut self, r: usize, c: usize, cost: Option<f64>) {
        self.data[r * self.cols + c] = cost.filter(|v| v.is_finite());
    }

    /// Sum of allowed costs over `pairs`.
    pub fn total(&self, pairs: &[(usize, usize)]) -> f64 {
        pairs.iter().filter_map(|&(r, c)| self.get(r, c)).sum()
    }
}

#[derive(Clone, Copy, Debug)]
struct Optimum {
    matched: usize,
    cost: f64,
}

/// Optimal assignment restricted to `rows × cols` (index lists into `m`).
fn solve(m: &CostMatrix, rows: &[usize], cols: &[usize]) -> (Optimum, Vec<(usize, usize)>) {
    let allowed: Vec<f64> = rows
        .iter()
        .flat_map(|&r| cols.iter().filter_map(move |&c| m.get(r, c)))
        .collect();
    if allowed.is_empty() {
        return (Optimum { matched: 0, cost: 0.0 }, Vec::new());
    }
    let lo = allowed.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = allowed.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let k = rows.len().min(cols.len()) as f64;
    // Any single forbidden cell outweighs every possible sum of allowed (shifted) costs.
    let penalty = (hi - lo + 1.0) * (k + 1.0) * 2.0;

    let transpose = rows.len() > cols.len();
    let (n, w) = if transpose { (cols.len(), rows.len()) } else { (rows.len(), cols.len()) };
    let cell = |i: usize, j: usize| -> f64 {
        let (r, c) = if transpose { (rows[j], cols[i]) } else { (rows[i], cols[j]) };
        m.get(r, c).map_or(penalty, |v| v - lo)
    };

    let assignment = shortest_augmenting_path(n, w, cell);
    let mut pairs = Vec::new();
    let mut cost = 0.0;
    for (i, &j) in assignment.iter().enumerate() {
        let (r, c) = if transpose { (rows[j], cols[i]) } else { (rows[i], cols[j]) };
        if let Some(v) = m.get(r, c) {
            pairs.push((r, c));
            cost += v;
        }
    }
    pairs.sort_unstable();
    (Optimum { matched: pairs.len(), cost }, pairs)
}

/// Classic O(n²·w) potentials-based Hungarian method for `n ≤ w`; returns the
/// column assigned to each row.
fn shortest_augmenting_path(n: usize, w: usize, cost: impl Fn(usize, usize) -> f64) -> Vec<usize> {
    const NONE: usize = usize::MAX;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; w + 1];
    // row_of[j] for column j (1-based); 0 means free
    let mut row_of = vec![0usize; w + 1];
    let mut way = vec![0usize; w + 1];
    for i in 1..=n {
        row_of[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; w + 1];
        let mut used = vec![false; w + 1];
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = NONE;
            for j in 1..=w {
                if used[j] {
                    continue;
                }
                let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=w {
                if used[j] {
                    u[row_of[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut col_of = vec![0usize; n];
    for j in 1..=w {
        if row_of[j] != 0 {
            col_of[row_of[j] - 1] = j - 1;
        }
    }
    col_of
}

fn same_cost(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

/// Optimal one-to-one partial assignment; see the module docs for the objective.
pub fn hungarian_assign(costs: &CostMatrix) -> Vec<(usize, usize)> {
    let all_rows: Vec<usize> = (0..costs.rows()).collect();
    let all_cols: Vec<usize> = (0..costs.cols()).collect();
    let (best, first) = solve(costs, &all_rows, &all_cols);
    if best.matched == 0 {
        return Vec::new();
    }

    // Lexicographic refinement: walk rows in order, keep the smallest column
    // that still admits an optimal completion.
    let mut chosen = Vec::with_capacity(best.matched);
    let mut free_cols = all_cols;
    let mut need = best;
    let mut follows_first = true;
    for r in 0..costs.rows() {
        if need.matched == 0 {
            break;
        }
        let rest: Vec<usize> = (r + 1..costs.rows()).collect();
        let current = first.iter().find(|p| p.0 == r).map(|p| p.1);
        let mut picked = None;
        for &c in &free_cols {
            let Some(cost) = costs.get(r, c) else { continue };
            if !(follows_first && Some(c) == current) {
                let cols: Vec<usize> = free_cols.iter().cloned().filter(|&x| x != c).collect();
                let (sub, _) = solve(costs, &rest, &cols);
                if sub.matched + 1 != need.matched || !same_cost(sub.cost + cost, need.cost) {
                    continue;
                }
            }
            picked = Some((c, cost));
            break;
        }
        follows_first &= picked.map(|p| p.0) == current;
        if let Some((c, cost)) = picked {
            chosen.push((r, c));
            free_cols.retain(|&x| x != c);
            need = Optimum { matched: need.matched - 1, cost: need.cost - cost };
        }
    }
    chosen
}

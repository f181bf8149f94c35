//! Linear-time tidy tree drawing (Walker's algorithm with Buchheim, Jünger
//! and Leipert's corrections), written without recursion so deep trees do
//! not exhaust the stack.

/// Horizontal positions for a rooted ordered tree.
///
/// `children[v]` lists the children of `v` left to right and node 0 is the
/// root. Adjacent nodes on one level end up at least `distance` apart, a
/// parent is centred over its children and the root sits at x = 0.
pub fn tidy_x(children: &[Vec<usize>], distance: f64) -> Vec<f64> {
    let n = children.len();
    if n == 0 {
        return Vec::new();
    }
    let mut t = Tidy::new(children, distance);
    // Post-order: every child before its parent.
    let mut order = Vec::with_capacity(n);
    let mut stack = vec![0usize];
    while let Some(v) = stack.pop() {
        order.push(v);
        stack.extend(children[v].iter().copied());
    }
    order.reverse();
    for &v in &order {
        t.first_walk(v);
    }
    t.place(0);
    t.second_walk()
}

struct Tidy<'a> {
    children: &'a [Vec<usize>],
    distance: f64,
    parent: Vec<Option<usize>>,
    /// 1-based position among siblings.
    number: Vec<usize>,
    prelim: Vec<f64>,
    modifier: Vec<f64>,
    shift: Vec<f64>,
    change: Vec<f64>,
    thread: Vec<Option<usize>>,
    ancestor: Vec<usize>,
    midpoint: Vec<f64>,
}

impl<'a> Tidy<'a> {
    fn new(children: &'a [Vec<usize>], distance: f64) -> Self {
        let n = children.len();
        let mut parent = vec![None; n];
        let mut number = vec![1; n];
        for (v, kids) in children.iter().enumerate() {
            for (i, &w) in kids.iter().enumerate() {
                parent[w] = Some(v);
                number[w] = i + 1;
            }
        }
        Self {
            children,
            distance,
            parent,
            number,
            prelim: vec![0.0; n],
            modifier: vec![0.0; n],
            shift: vec![0.0; n],
            change: vec![0.0; n],
            thread: vec![None; n],
            ancestor: (0..n).collect(),
            midpoint: vec![0.0; n],
        }
    }

    fn left_sibling(&self, v: usize) -> Option<usize> {
        let p = self.parent[v]?;
        let i = self.number[v];
        (i > 1).then(|| self.children[p][i - 2])
    }

    fn leftmost_sibling(&self, v: usize) -> usize {
        self.parent[v].map_or(v, |p| self.children[p][0])
    }

    fn next_left(&self, v: usize) -> Option<usize> {
        self.children[v].first().copied().or(self.thread[v])
    }

    fn next_right(&self, v: usize) -> Option<usize> {
        self.children[v].last().copied().or(self.thread[v])
    }

    /// Lays out the subtrees of `v`'s children side by side.
    fn first_walk(&mut self, v: usize) {
        let kids = &self.children[v];
        if kids.is_empty() {
            return;
        }
        let mut default_ancestor = kids[0];
        for &w in kids {
            self.place(w);
            default_ancestor = self.apportion(w, default_ancestor);
        }
        self.execute_shifts(v);
        let first = kids[0];
        let last = kids[kids.len() - 1];
        self.midpoint[v] = (self.prelim[first] + self.prelim[last]) / 2.0;
    }

    /// Sets the preliminary x of `v` relative to its left sibling.
    fn place(&mut self, v: usize) {
        let left = self.left_sibling(v);
        if self.children[v].is_empty() {
            self.prelim[v] = left.map_or(0.0, |w| self.prelim[w] + self.distance);
        } else if let Some(w) = left {
            self.prelim[v] = self.prelim[w] + self.distance;
            self.modifier[v] = self.prelim[v] - self.midpoint[v];
        } else {
            self.prelim[v] = self.midpoint[v];
        }
    }

    fn apportion(&mut self, v: usize, mut default_ancestor: usize) -> usize {
        let Some(w) = self.left_sibling(v) else {
            return default_ancestor;
        };
        let (mut vir, mut vor) = (v, v);
        let mut vil = w;
        let mut vol = self.leftmost_sibling(v);
        let mut sir = self.modifier[vir];
        let mut sor = self.modifier[vor];
        let mut sil = self.modifier[vil];
        let mut sol = self.modifier[vol];
        while let (Some(nr), Some(nl)) = (self.next_right(vil), self.next_left(vir)) {
            vil = nr;
            vir = nl;
            vol = self.next_left(vol).expect("left contour is at least as deep");
            vor = self.next_right(vor).expect("right contour matches the subtree depth");
            self.ancestor[vor] = v;
            let shift = (self.prelim[vil] + sil) - (self.prelim[vir] + sir) + self.distance;
            if shift > 0.0 {
                let a = self.greatest_uncommon_ancestor(vil, v, default_ancestor);
                self.move_subtree(a, v, shift);
                sir += shift;
                sor += shift;
            }
            sil += self.modifier[vil];
            sir += self.modifier[vir];
            sol += self.modifier[vol];
            sor += self.modifier[vor];
        }
        if let (Some(t), None) = (self.next_right(vil), self.next_right(vor)) {
            self.thread[vor] = Some(t);
            self.modifier[vor] += sil - sor;
        }
        if let (Some(t), None) = (self.next_left(vir), self.next_left(vol)) {
            self.thread[vol] = Some(t);
            self.modifier[vol] += sir - sol;
            default_ancestor = v;
        }
        default_ancestor
    }

    fn greatest_uncommon_ancestor(&self, vil: usize, v: usize, default_ancestor: usize) -> usize {
        let a = self.ancestor[vil];
        if self.parent[a] == self.parent[v] {
            a
        } else {
            default_ancestor
        }
    }

    fn move_subtree(&mut self, wl: usize, wr: usize, shift: f64) {
        let subtrees = (self.number[wr] - self.number[wl]) as f64;
        self.change[wr] -= shift / subtrees;
        self.shift[wr] += shift;
        self.change[wl] += shift / subtrees;
        self.prelim[wr] += shift;
        self.modifier[wr] += shift;
    }

    fn execute_shifts(&mut self, v: usize) {
        let mut shift = 0.0;
        let mut change = 0.0;
        for &w in self.children[v].iter().rev() {
            self.prelim[w] += shift;
            self.modifier[w] += shift;
            change += self.change[w];
            shift += self.shift[w] + change;
        }
    }

    fn second_walk(&self) -> Vec<f64> {
        let mut x = vec![0.0; self.children.len()];
        let mut stack = vec![(0usize, -self.prelim[0])];
        while let Some((v, m)) = stack.pop() {
            x[v] = self.prelim[v] + m;
            for &w in &self.children[v] {
                stack.push((w, m + self.modifier[v]));
            }
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn check(children: &[Vec<usize>], d: f64) -> Vec<f64> {
        let x = tidy_x(children, d);
        assert_eq!(x[0], 0.0);
        // Per-level left-to-right order and spacing.
        let mut levels: Vec<Vec<usize>> = Vec::new();
        let mut frontier = vec![0usize];
        while !frontier.is_empty() {
            levels.push(frontier.clone());
            frontier = frontier.iter().flat_map(|&v| children[v].iter().copied()).collect();
        }
        for level in levels {
            for pair in level.windows(2) {
                assert!(x[pair[1]] - x[pair[0]] >= d - 1e-9, "{pair:?}: {x:?}");
            }
        }
        for (v, kids) in children.iter().enumerate() {
            if let (Some(f), Some(l)) = (kids.first(), kids.last()) {
                assert!((x[v] - (x[*f] + x[*l]) / 2.0).abs() < 1e-9);
            }
        }
        x
    }

    #[test]
    fn small_shapes() {
        assert_eq!(check(&[vec![]], 1.0), vec![0.0]);
        assert_eq!(check(&[vec![1, 2], vec![], vec![]], 2.0), vec![0.0, -1.0, 1.0]);
        check(&[vec![1], vec![2], vec![3], vec![]], 1.0);
    }

    #[test]
    fn inner_subtrees_are_spread_evenly() {
        // Two wide subtrees pushed apart with two leaves between them.
        let mut c = vec![vec![1, 2, 3, 4], (5..10).collect(), vec![], vec![], (10..15).collect()];
        c.extend(std::iter::repeat_with(Vec::new).take(10));
        let x = check(&c, 1.0);
        assert!((x[4] - x[1] - 5.0).abs() < 1e-9);
        assert!((x[2] - x[1] - 5.0 / 3.0).abs() < 1e-9);
        assert!((x[3] - x[2] - 5.0 / 3.0).abs() < 1e-9);
    }
}

use super::Skeleton;

/// Number of directed paths between process transitions, saturated at 2.
///
/// Two transitions are in FIFO relation iff exactly one path connects them.
#[derive(Debug, Clone)]
pub struct FifoMatrix {
    n: usize,
    counts: Vec<u8>,
    succ: Vec<Vec<usize>>,
    acyclic: bool,
}

impl FifoMatrix {
    pub(super) fn new(sk: &Skeleton) -> Self {
        let n = sk.transitions.len();
        let succ: Vec<Vec<usize>> = (0..n).map(|t| sk.successors(t).collect()).collect();
        let order = topological_order(&succ);
        let acyclic = order.is_some();
        let mut counts = vec![0u8; n * n];
        match order {
            Some(order) => {
                // Reverse topological order: successors are complete first.
                for &t in order.iter().rev() {
                    counts[t * n + t] = 1;
                    for &s in &succ[t] {
                        for u in 0..n {
                            let add = counts[s * n + u];
                            let cell = &mut counts[t * n + u];
                            *cell = (*cell + add).min(2);
                        }
                    }
                }
            }
            None => {
                for t in 0..n {
                    for u in 0..n {
                        counts[t * n + u] = simple_paths(&succ, t, u);
                    }
                }
            }
        }
        FifoMatrix {
            n,
            counts,
            succ,
            acyclic,
        }
    }

    pub fn acyclic(&self) -> bool {
        self.acyclic
    }

    /// 0, 1, or 2 meaning "two or more".
    pub fn path_count(&self, from: usize, to: usize) -> u8 {
        self.counts[from * self.n + to]
    }

    pub fn related(&self, from: usize, to: usize) -> bool {
        self.path_count(from, to) == 1
    }

    /// The transitions on the unique path from `from` to `to`, both included.
    pub fn unique_path(&self, from: usize, to: usize) -> Option<Vec<usize>> {
        if !self.related(from, to) {
            return None;
        }
        let mut path = vec![from];
        let mut cur = from;
        while cur != to {
            cur = *self.succ[cur].iter().find(|&&s| self.path_count(s, to) > 0)?;
            if path.contains(&cur) {
                return None;
            }
            path.push(cur);
        }
        Some(path)
    }
}

fn topological_order(succ: &[Vec<usize>]) -> Option<Vec<usize>> {
    let n = succ.len();
    let mut indegree = vec![0usize; n];
    for ss in succ {
        for &s in ss {
            indegree[s] += 1;
        }
    }
    let mut stack: Vec<usize> = (0..n).filter(|&t| indegree[t] == 0).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(t) = stack.pop() {
        order.push(t);
        for &s in &succ[t] {
            indegree[s] -= 1;
            if indegree[s] == 0 {
                stack.push(s);
            }
        }
    }
    (order.len() == n).then_some(order)
}

/// Simple paths from `from` to `to`, stopping at 2.
fn simple_paths(succ: &[Vec<usize>], from: usize, to: usize) -> u8 {
    fn go(succ: &[Vec<usize>], v: usize, to: usize, on_path: &mut [bool], found: &mut u8) {
        if *found >= 2 {
            return;
        }
        if v == to {
            *found += 1;
            return;
        }
        on_path[v] = true;
        for &s in &succ[v] {
            if !on_path[s] {
                go(succ, s, to, on_path, found);
            }
        }
        on_path[v] = false;
    }
    let mut found = 0;
    go(succ, from, to, &mut vec![false; succ.len()], &mut found);
    found
}

//! Dense square bit matrices used for adjacency and reachability.

use std::collections::VecDeque;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BitMatrix {
    n: usize,
    words: usize,
    data: Vec<u64>,
}

impl BitMatrix {
    pub fn new(n: usize) -> Self {
        let words = n.div_ceil(64).max(1);
        Self {
            n,
            words,
            data: vec![0; n * words],
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> bool {
        self.data[i * self.words + j / 64] >> (j % 64) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize) {
        self.data[i * self.words + j / 64] |= 1 << (j % 64);
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[u64] {
        &self.data[i * self.words..(i + 1) * self.words]
    }

    /// `row(dst) |= row(src)`.
    pub fn or_row_into(&mut self, dst: usize, src: usize) {
        if dst == src {
            return;
        }
        let w = self.words;
        let (d, s) = if dst < src {
            let (lo, hi) = self.data.split_at_mut(src * w);
            (&mut lo[dst * w..dst * w + w], &hi[..w])
        } else {
            let (lo, hi) = self.data.split_at_mut(dst * w);
            (&mut hi[..w], &lo[src * w..src * w + w])
        };
        for (a, b) in d.iter_mut().zip(s) {
            *a |= *b;
        }
    }

    /// `row(dst) |= other.row(src)`.
    pub fn or_row_from(&mut self, dst: usize, other: &BitMatrix, src: usize) {
        let w = self.words;
        for (a, b) in self.data[dst * w..dst * w + w].iter_mut().zip(other.row(src)) {
            *a |= *b;
        }
    }

    pub fn row_ones(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.row(i).iter().enumerate().flat_map(|(wi, &word)| {
            let mut bits = word;
            std::iter::from_fn(move || {
                if bits == 0 {
                    return None;
                }
                let b = bits.trailing_zeros() as usize;
                bits &= bits - 1;
                Some(wi * 64 + b)
            })
        })
    }

    pub fn rows_intersect(&self, i: usize, other: &BitMatrix, j: usize) -> bool {
        self.row(i).iter().zip(other.row(j)).any(|(a, b)| a & b != 0)
    }

    pub fn count_ones(&self) -> usize {
        self.data.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn transpose(&self) -> BitMatrix {
        let mut t = BitMatrix::new(self.n);
        for i in 0..self.n {
            for j in self.row_ones(i) {
                t.set(j, i);
            }
        }
        t
    }
}

/// Transitive closure R⁺ by Floyd–Warshall over bit rows. `reach(i, i)`
/// holds only when `i` lies on a cycle.
pub fn floyd_warshall(adj: &BitMatrix) -> BitMatrix {
    let mut reach = adj.clone();
    for k in 0..reach.n {
        for i in 0..reach.n {
            if reach.get(i, k) {
                reach.or_row_into(i, k);
            }
        }
    }
    reach
}

/// Transitive closure R⁺ by one breadth-first search per source.
pub fn bfs_closure(adj: &BitMatrix) -> BitMatrix {
    let n = adj.len();
    let mut reach = BitMatrix::new(n);
    let mut seen = vec![false; n];
    let mut queue = VecDeque::new();
    for s in 0..n {
        seen.iter_mut().for_each(|x| *x = false);
        queue.clear();
        for t in adj.row_ones(s) {
            if !seen[t] {
                seen[t] = true;
                queue.push_back(t);
            }
        }
        while let Some(v) = queue.pop_front() {
            reach.set(s, v);
            for t in adj.row_ones(v) {
                if !seen[t] {
                    seen[t] = true;
                    queue.push_back(t);
                }
            }
        }
    }
    reach
}

//! Direct and 2-hop path sets between every ordered pod pair.

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Path {
    pub src: usize,
    pub dst: usize,
    /// Intermediate pod, `None` for the direct path.
    pub via: Option<usize>,
}

impl Path {
    pub fn is_direct(&self) -> bool {
        self.via.is_none()
    }

    /// The (i, j) links this path crosses, in order.
    pub fn links(&self) -> impl Iterator<Item = (usize, usize)> {
        let (a, b) = match self.via {
            None => ((self.src, self.dst), None),
            Some(m) => ((self.src, m), Some((m, self.dst))),
        };
        std::iter::once(a).chain(b)
    }

    pub fn hops(&self) -> usize {
        if self.via.is_some() {
            2
        } else {
            1
        }
    }
}

/// Paths grouped by ordered pair: for pair (i, j) the direct path comes first,
/// then 2-hop paths in ascending intermediate order.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSet {
    n: usize,
    paths: Vec<Path>,
}

pub fn build_path_set(n: usize) -> Result<PathSet> {
    if n < 2 {
        return Err(Error::InvalidFabric(format!("path set needs n >= 2, got {n}")));
    }
    let mut paths = Vec::with_capacity(n * (n - 1) * (n - 1));
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            paths.push(Path { src: i, dst: j, via: None });
            for m in (0..n).filter(|&m| m != i && m != j) {
                paths.push(Path { src: i, dst: j, via: Some(m) });
            }
        }
    }
    Ok(PathSet { n, paths })
}

impl PathSet {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    pub fn paths(&self) -> &[Path] {
        &self.paths
    }

    pub fn per_pair(&self) -> usize {
        self.n - 1
    }

    /// Index range into `paths()` for the ordered pair (i, j), i != j.
    pub fn pair_range(&self, i: usize, j: usize) -> std::ops::Range<usize> {
        debug_assert!(i != j);
        let slot = i * (self.n - 1) + if j > i { j - 1 } else { j };
        let start = slot * (self.n - 1);
        start..start + self.n - 1
    }

    pub fn pair_paths(&self, i: usize, j: usize) -> &[Path] {
        &self.paths[self.pair_range(i, j)]
    }

    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let n = self.n;
        (0..n).flat_map(move |i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn small_counts() {
        assert_eq!(build_path_set(2).unwrap().len(), 2);
        assert_eq!(build_path_set(3).unwrap().len(), 12);
        assert!(build_path_set(1).is_err());
    }

    #[test]
    fn n8_matches_enumeration() {
        let ps = build_path_set(8).unwrap();
        let mut brute = HashSet::new();
        for i in 0..8 {
            for j in 0..8 {
                for m in 0..8 {
                    if i != j {
                        if m == i || m == j {
                            brute.insert((i, j, None));
                        } else {
                            brute.insert((i, j, Some(m)));
                        }
                    }
                }
            }
        }
        assert_eq!(brute.len(), 392);
        let got: HashSet<_> = ps.paths().iter().map(|p| (p.src, p.dst, p.via)).collect();
        assert_eq!(got, brute);
        assert_eq!(ps.len(), 392);
    }

    #[test]
    fn pair_ranges_line_up() {
        let ps = build_path_set(5).unwrap();
        for (i, j) in ps.pairs() {
            let pp = ps.pair_paths(i, j);
            assert_eq!(pp.len(), 4);
            assert!(pp[0].is_direct());
            assert!(pp.iter().all(|p| p.src == i && p.dst == j));
            for p in pp {
                let pods: Vec<_> = std::iter::once(p.src).chain(p.via).chain([p.dst]).collect();
                let uniq: HashSet<_> = pods.iter().collect();
                assert_eq!(uniq.len(), pods.len());
            }
        }
    }
}

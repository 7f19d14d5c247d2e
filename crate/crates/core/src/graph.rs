//! Undirected interaction graphs and κ-hop neighbourhoods.

use std::collections::VecDeque;
use std::fmt::Write as _;

use crate::error::{Error, Result};

/// Undirected graph over agents `0..n`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Graph {
    n: usize,
    edges: Vec<(usize, usize)>,
    adjacency: Vec<Vec<usize>>,
}

impl Graph {
    /// Builds a graph from an undirected edge list.
    ///
    /// Duplicate edges (in either orientation) are merged; self-loops and
    /// out-of-range endpoints are rejected.
    pub fn new(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidGraph("graph needs at least one agent".into()));
        }
        let mut adjacency = vec![Vec::new(); n];
        for &(u, v) in edges {
            if u >= n || v >= n {
                return Err(Error::InvalidGraph(format!(
                    "edge ({u}, {v}) has an endpoint >= n = {n}"
                )));
            }
            if u == v {
                return Err(Error::InvalidGraph(format!("self-loop at {u}")));
            }
            adjacency[u].push(v);
            adjacency[v].push(u);
        }
        for list in &mut adjacency {
            list.sort_unstable();
            list.dedup();
        }
        let edges = adjacency
            .iter()
            .enumerate()
            .flat_map(|(u, list)| list.iter().filter(move |&&v| u < v).map(move |&v| (u, v)))
            .collect();
        Ok(Graph {
            n,
            edges,
            adjacency,
        })
    }

    /// Path `0 - 1 - ... - (n-1)`.
    pub fn path(n: usize) -> Result<Self> {
        let edges: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
        Graph::new(n, &edges)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Canonical edge list with `u < v`, sorted.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Direct neighbours of `i`, excluding `i`, sorted.
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.adjacency[i]
    }

    fn check_agent(&self, i: usize) -> Result<()> {
        if i >= self.n {
            Err(Error::AgentOutOfRange { agent: i, n: self.n })
        } else {
            Ok(())
        }
    }

    /// BFS distances from `i`; `None` for unreachable agents.
    pub fn distances_from(&self, i: usize) -> Result<Vec<Option<usize>>> {
        self.check_agent(i)?;
        let mut dist = vec![None; self.n];
        let mut queue = VecDeque::from([i]);
        dist[i] = Some(0);
        while let Some(u) = queue.pop_front() {
            let du = dist[u].unwrap_or(0);
            for &v in &self.adjacency[u] {
                if dist[v].is_none() {
                    dist[v] = Some(du + 1);
                    queue.push_back(v);
                }
            }
        }
        Ok(dist)
    }

    /// All agents within graph distance `kappa` of `i`, including `i`.
    pub fn khop_neighborhood(&self, i: usize, kappa: usize) -> Result<Neighborhood> {
        let members = self
            .distances_from(i)?
            .into_iter()
            .enumerate()
            .filter_map(|(j, d)| d.filter(|&d| d <= kappa).map(|_| j))
            .collect();
        Ok(Neighborhood {
            center: i,
            kappa,
            members,
        })
    }

    /// `f(κ) = max_i |N_i^κ|`.
    pub fn max_neighborhood_size(&self, kappa: usize) -> usize {
        (0..self.n)
            .map(|i| self.khop_neighborhood(i, kappa).map_or(0, |nb| nb.len()))
            .max()
            .unwrap_or(0)
    }

    /// Largest finite eccentricity of `i`.
    pub fn eccentricity(&self, i: usize) -> Result<usize> {
        Ok(self
            .distances_from(i)?
            .into_iter()
            .flatten()
            .max()
            .unwrap_or(0))
    }

    /// Longest shortest path; `None` if the graph is disconnected.
    pub fn diameter(&self) -> Option<usize> {
        let mut best = 0;
        for i in 0..self.n {
            let dist = self.distances_from(i).ok()?;
            for d in dist {
                best = best.max(d?);
            }
        }
        Some(best)
    }

    /// Parses the edge-list text format: a header `n <count>` followed by one
    /// `u v` pair per line. Blank lines and `#` comments are ignored.
    pub fn parse_edge_list(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .map(|l| l.split('#').next().unwrap_or("").trim())
            .enumerate()
            .filter(|(_, l)| !l.is_empty());
        let (_, header) = lines
            .next()
            .ok_or_else(|| Error::InvalidGraph("missing `n <count>` header".into()))?;
        let mut parts = header.split_whitespace();
        let n = match (parts.next(), parts.next(), parts.next()) {
            (Some("n"), Some(count), None) => count
                .parse::<usize>()
                .map_err(|e| Error::InvalidGraph(format!("bad agent count {count:?}: {e}")))?,
            _ => {
                return Err(Error::InvalidGraph(format!(
                    "expected header `n <count>`, found {header:?}"
                )))
            }
        };
        let mut edges = Vec::new();
        for (lineno, line) in lines {
            let fields: Vec<_> = line.split_whitespace().collect();
            let parse = |s: &str| {
                s.parse::<usize>().map_err(|e| {
                    Error::InvalidGraph(format!("line {}: bad vertex {s:?}: {e}", lineno + 1))
                })
            };
            match fields.as_slice() {
                [u, v] => edges.push((parse(u)?, parse(v)?)),
                _ => {
                    return Err(Error::InvalidGraph(format!(
                        "line {}: expected `u v`, found {line:?}",
                        lineno + 1
                    )))
                }
            }
        }
        Graph::new(n, &edges)
    }

    pub fn to_edge_list(&self) -> String {
        let mut out = format!("n {}\n", self.n);
        for (u, v) in &self.edges {
            let _ = writeln!(out, "{u} {v}");
        }
        out
    }
}

/// κ-hop neighbourhood `N_i^κ`; members are sorted and always contain the center.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Neighborhood {
    pub center: usize,
    pub kappa: usize,
    pub members: Vec<usize>,
}

impl Neighborhood {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, agent: usize) -> bool {
        self.members.binary_search(&agent).is_ok()
    }

    /// Position of the center inside `members`.
    pub fn center_position(&self) -> usize {
        self.members
            .binary_search(&self.center)
            .expect("neighbourhood always contains its center")
    }

    /// Agents outside the neighbourhood, sorted.
    pub fn complement(&self, n: usize) -> Vec<usize> {
        (0..n).filter(|j| !self.contains(*j)).collect()
    }
}

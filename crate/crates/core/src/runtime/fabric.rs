//! In-process collectives with per-pair traffic accounting.

use std::collections::BTreeMap;

use crate::error::{KgeError, Result};

/// What a collective carried, for per-purpose accounting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TrafficKind {
    /// Tail and negative entity rows sent to the requesting worker.
    RowExchange,
    /// Tail and negative gradients returned to their owners.
    GradientReturn,
    /// Replicated relation, normal and projection parameters.
    ParamGather,
    /// Gradients of the replicated parameters.
    GradientReduce,
    QueryGather,
    TopKReturn,
    Other,
}

/// Bytes sent from worker `i` to worker `j` at `(i, j)`. Local copies on
/// the diagonal do not cross the fabric and stay zero.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrafficMatrix {
    workers: usize,
    bytes: Vec<u64>,
}

impl TrafficMatrix {
    pub fn new(workers: usize) -> Self {
        TrafficMatrix {
            workers,
            bytes: vec![0; workers * workers],
        }
    }

    pub fn workers(&self) -> usize {
        self.workers
    }

    pub fn get(&self, from: usize, to: usize) -> u64 {
        self.bytes[from * self.workers + to]
    }

    fn add(&mut self, from: usize, to: usize, bytes: u64) {
        if from != to {
            self.bytes[from * self.workers + to] += bytes;
        }
    }

    fn add_matrix(&mut self, other: &TrafficMatrix) {
        for (a, b) in self.bytes.iter_mut().zip(&other.bytes) {
            *a += b;
        }
    }

    pub fn total(&self) -> u64 {
        self.bytes.iter().sum()
    }

    /// The common off-diagonal value when every ordered pair `i ≠ j` carried
    /// the same number of bytes.
    pub fn uniform_off_diagonal(&self) -> Option<u64> {
        let d = self.workers;
        let mut value = None;
        for i in 0..d {
            for j in 0..d {
                if i == j {
                    continue;
                }
                let b = self.get(i, j);
                match value {
                    None => value = Some(b),
                    Some(v) if v != b => return None,
                    _ => {}
                }
            }
        }
        value.or(Some(0))
    }

    pub fn is_symmetric(&self) -> bool {
        let d = self.workers;
        (0..d).all(|i| (0..d).all(|j| self.get(i, j) == self.get(j, i)))
    }
}

/// `D` endpoints exchanging buffers in lockstep.
#[derive(Debug, Clone)]
pub struct CollectiveFabric {
    workers: usize,
    current: TrafficMatrix,
    by_kind: BTreeMap<TrafficKind, TrafficMatrix>,
    lifetime: TrafficMatrix,
}

impl CollectiveFabric {
    pub fn new(workers: usize) -> Self {
        CollectiveFabric {
            workers,
            current: TrafficMatrix::new(workers),
            by_kind: BTreeMap::new(),
            lifetime: TrafficMatrix::new(workers),
        }
    }

    pub fn workers(&self) -> usize {
        self.workers
    }

    /// Starts a new accounting window (one training or inference step).
    pub fn begin_step(&mut self) {
        self.lifetime.add_matrix(&self.current);
        self.current = TrafficMatrix::new(self.workers);
        self.by_kind.clear();
    }

    /// Traffic since the last `begin_step`.
    pub fn step_traffic(&self) -> &TrafficMatrix {
        &self.current
    }

    pub fn step_traffic_of(&self, kind: TrafficKind) -> TrafficMatrix {
        self.by_kind
            .get(&kind)
            .cloned()
            .unwrap_or_else(|| TrafficMatrix::new(self.workers))
    }

    pub fn lifetime_traffic(&self) -> TrafficMatrix {
        let mut t = self.lifetime.clone();
        t.add_matrix(&self.current);
        t
    }

    fn record(&mut self, kind: TrafficKind, from: usize, to: usize, bytes: u64) {
        self.current.add(from, to, bytes);
        self.by_kind
            .entry(kind)
            .or_insert_with(|| TrafficMatrix::new(self.workers))
            .add(from, to, bytes);
    }

    /// Every worker receives the concatenation of all buffers in worker
    /// order. Buffers must have equal length.
    pub fn all_gather<T: Clone>(
        &mut self,
        kind: TrafficKind,
        buffers: Vec<Vec<T>>,
        elem_bytes: usize,
    ) -> Result<Vec<Vec<T>>> {
        let d = self.workers;
        if buffers.len() != d {
            return Err(KgeError::Fabric(format!(
                "all_gather expects {d} buffers, got {}",
                buffers.len()
            )));
        }
        let len = buffers[0].len();
        if let Some((i, b)) = buffers.iter().enumerate().find(|(_, b)| b.len() != len) {
            return Err(KgeError::Fabric(format!(
                "all_gather buffer {i} has {} elements, worker 0 has {len}",
                b.len()
            )));
        }
        for i in 0..d {
            for j in 0..d {
                self.record(kind, i, j, (len * elem_bytes) as u64);
            }
        }
        let joined: Vec<T> = buffers.into_iter().flatten().collect();
        Ok(vec![joined; d])
    }

    /// `send[i][j]` goes from worker `i` to worker `j`; the result holds
    /// `recv[j][i]`. All `D²` chunks must have equal length.
    pub fn all_to_all<T>(
        &mut self,
        kind: TrafficKind,
        send: Vec<Vec<Vec<T>>>,
        elem_bytes: usize,
    ) -> Result<Vec<Vec<Vec<T>>>> {
        let d = self.workers;
        if send.len() != d || send.iter().any(|row| row.len() != d) {
            return Err(KgeError::Fabric(format!("all_to_all expects a {d}×{d} chunk matrix")));
        }
        let len = send[0][0].len();
        for (i, row) in send.iter().enumerate() {
            for (j, chunk) in row.iter().enumerate() {
                if chunk.len() != len {
                    return Err(KgeError::Fabric(format!(
                        "all_to_all chunk ({i}→{j}) has {} elements, chunk (0→0) has {len}",
                        chunk.len()
                    )));
                }
            }
        }
        for i in 0..d {
            for j in 0..d {
                self.record(kind, i, j, (len * elem_bytes) as u64);
            }
        }
        let mut recv: Vec<Vec<Option<Vec<T>>>> = (0..d).map(|_| (0..d).map(|_| None).collect()).collect();
        for (i, row) in send.into_iter().enumerate() {
            for (j, chunk) in row.into_iter().enumerate() {
                recv[j][i] = Some(chunk);
            }
        }
        Ok(recv
            .into_iter()
            .map(|row| row.into_iter().map(|c| c.expect("filled")).collect())
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gather_two() {
        let mut f = CollectiveFabric::new(2);
        let out = f.all_gather(TrafficKind::Other, vec![vec!['a'], vec!['b']], 1).unwrap();
        assert_eq!(out, vec![vec!['a', 'b'], vec!['a', 'b']]);
        assert_eq!(f.step_traffic().get(0, 1), 1);
        assert_eq!(f.step_traffic().get(0, 0), 0);
    }

    #[test]
    fn all_to_all_transposes() {
        let mut f = CollectiveFabric::new(2);
        let send = vec![vec![vec!['a'], vec!['b']], vec![vec!['c'], vec!['d']]];
        let recv = f.all_to_all(TrafficKind::Other, send, 4).unwrap();
        assert_eq!(recv, vec![vec![vec!['a'], vec!['c']], vec![vec!['b'], vec!['d']]]);
        assert_eq!(f.step_traffic().uniform_off_diagonal(), Some(4));
    }

    #[test]
    fn single_worker_is_identity_with_no_traffic() {
        let mut f = CollectiveFabric::new(1);
        assert_eq!(f.all_gather(TrafficKind::Other, vec![vec![1, 2]], 8).unwrap(), vec![vec![1, 2]]);
        assert_eq!(f.all_to_all(TrafficKind::Other, vec![vec![vec![3]]], 8).unwrap(), vec![vec![vec![3]]]);
        assert_eq!(f.step_traffic().total(), 0);
    }

    #[test]
    fn unequal_sizes_are_rejected() {
        let mut f = CollectiveFabric::new(2);
        assert!(f.all_gather(TrafficKind::Other, vec![vec![1], vec![1, 2]], 1).is_err());
        let send = vec![vec![vec![1], vec![2]], vec![vec![3], vec![]]];
        assert!(f.all_to_all(TrafficKind::Other, send, 1).is_err());
    }
}

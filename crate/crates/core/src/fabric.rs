//! In-process message passing between `p` ranks.
//!
//! Each rank runs on its own thread and owns a [`RankEndpoint`] holding one
//! channel to and from every other rank. Sends are buffered and never block;
//! receives block until a message with the requested tag arrives from the
//! requested peer, or the deadlock timeout expires. Messages with other tags
//! are stashed in arrival order, so ordering is FIFO per (sender, receiver,
//! tag).

use std::collections::{BTreeMap, VecDeque};
use std::env;
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::thread;
use std::time::{Duration, Instant};

use thiserror::Error;

pub type Tag = u32;

/// Tags at or above this value are used by the collectives.
pub const RESERVED_TAG: Tag = 0x8000_0000;
const TAG_ALLGATHER: Tag = RESERVED_TAG;
const TAG_REDUCE: Tag = RESERVED_TAG + 1;
const TAG_BCAST: Tag = RESERVED_TAG + 2;

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);
pub const TIMEOUT_ENV: &str = "JACOBI_SPLIT_TIMEOUT_S";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FabricError {
    #[error("rank {rank}: timed out waiting for tag {tag} from rank {peer}")]
    Timeout { rank: usize, peer: usize, tag: Tag },
    #[error("rank {rank}: rank {peer} hung up")]
    Disconnected { rank: usize, peer: usize },
    #[error("rank {rank}: invalid peer {peer}")]
    InvalidPeer { rank: usize, peer: usize },
    #[error("rank {rank}: tag {tag} is reserved")]
    ReservedTag { rank: usize, tag: Tag },
    #[error("rank {rank}: expected {expected} values with tag {tag} from rank {peer}, got {found}")]
    LengthMismatch {
        rank: usize,
        peer: usize,
        tag: Tag,
        expected: usize,
        found: usize,
    },
    #[error("rank {rank}: collective mismatch: {msg}")]
    CollectiveMismatch { rank: usize, msg: String },
    #[error("rank {rank} panicked: {msg}")]
    WorkerPanic { rank: usize, msg: String },
    #[error("world size must be at least 1")]
    EmptyWorld,
}

#[derive(Debug)]
struct Message {
    tag: Tag,
    values: Vec<f64>,
}

/// Traffic and timing counters of one endpoint.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CommStats {
    /// Wall time spent inside fabric calls.
    pub comm_time: Duration,
    /// Point-to-point payload bytes sent, collectives excluded.
    pub bytes_sent: u64,
    /// Payload bytes sent by reductions and broadcasts.
    pub collective_bytes: u64,
    /// Messages sent per (destination, tag).
    pub sent: BTreeMap<(usize, Tag), u64>,
    /// Messages received per (source, tag).
    pub received: BTreeMap<(usize, Tag), u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ReduceOp {
    Sum,
    Max,
    Min,
}

impl ReduceOp {
    fn apply(self, acc: &mut [f64], other: &[f64]) {
        for (a, &b) in acc.iter_mut().zip(other) {
            *a = match self {
                ReduceOp::Sum => *a + b,
                _ if a.is_nan() || b.is_nan() => f64::NAN,
                ReduceOp::Max => a.max(b),
                ReduceOp::Min => a.min(b),
            };
        }
    }
}

pub struct RankEndpoint {
    rank: usize,
    world_size: usize,
    senders: Vec<Option<Sender<Message>>>,
    receivers: Vec<Option<Receiver<Message>>>,
    stash: Vec<VecDeque<Message>>,
    timeout: Duration,
    stats: CommStats,
}

impl RankEndpoint {
    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn world_size(&self) -> usize {
        self.world_size
    }

    pub fn stats(&self) -> &CommStats {
        &self.stats
    }

    pub fn comm_time(&self) -> Duration {
        self.stats.comm_time
    }

    fn check_peer(&self, peer: usize) -> Result<(), FabricError> {
        if peer >= self.world_size || peer == self.rank {
            return Err(FabricError::InvalidPeer { rank: self.rank, peer });
        }
        Ok(())
    }

    fn check_tag(&self, tag: Tag) -> Result<(), FabricError> {
        if tag >= RESERVED_TAG {
            return Err(FabricError::ReservedTag { rank: self.rank, tag });
        }
        Ok(())
    }

    pub fn send(&mut self, to: usize, tag: Tag, values: Vec<f64>) -> Result<(), FabricError> {
        self.check_tag(tag)?;
        self.send_raw(to, tag, values)
    }

    pub fn recv(&mut self, from: usize, tag: Tag) -> Result<Vec<f64>, FabricError> {
        self.check_tag(tag)?;
        self.recv_raw(from, tag)
    }

    /// Receives and checks the payload length.
    pub fn recv_exact(&mut self, from: usize, tag: Tag, len: usize) -> Result<Vec<f64>, FabricError> {
        self.check_tag(tag)?;
        self.recv_len(from, tag, len)
    }

    fn send_raw(&mut self, to: usize, tag: Tag, values: Vec<f64>) -> Result<(), FabricError> {
        self.check_peer(to)?;
        let start = Instant::now();
        let bytes = 8 * values.len() as u64;
        let sender = self.senders[to].as_ref().expect("channel to every other rank");
        let sent = sender.send(Message { tag, values });
        self.stats.comm_time += start.elapsed();
        sent.map_err(|_| FabricError::Disconnected { rank: self.rank, peer: to })?;
        if tag >= RESERVED_TAG && tag != TAG_ALLGATHER {
            self.stats.collective_bytes += bytes;
        } else {
            self.stats.bytes_sent += bytes;
        }
        *self.stats.sent.entry((to, tag)).or_default() += 1;
        Ok(())
    }

    fn recv_raw(&mut self, from: usize, tag: Tag) -> Result<Vec<f64>, FabricError> {
        self.check_peer(from)?;
        let start = Instant::now();
        let got = self.wait_for(from, tag, start);
        self.stats.comm_time += start.elapsed();
        let values = got?;
        *self.stats.received.entry((from, tag)).or_default() += 1;
        Ok(values)
    }

    fn wait_for(&mut self, from: usize, tag: Tag, start: Instant) -> Result<Vec<f64>, FabricError> {
        if let Some(k) = self.stash[from].iter().position(|m| m.tag == tag) {
            return Ok(self.stash[from].remove(k).unwrap().values);
        }
        let rx = self.receivers[from].as_ref().expect("channel from every other rank");
        loop {
            let left = self.timeout.saturating_sub(start.elapsed());
            match rx.recv_timeout(left) {
                Ok(m) if m.tag == tag => return Ok(m.values),
                Ok(m) => self.stash[from].push_back(m),
                Err(RecvTimeoutError::Timeout) => {
                    return Err(FabricError::Timeout {
                        rank: self.rank,
                        peer: from,
                        tag,
                    })
                }
                Err(RecvTimeoutError::Disconnected) => {
                    return Err(FabricError::Disconnected { rank: self.rank, peer: from })
                }
            }
        }
    }

    fn recv_len(&mut self, from: usize, tag: Tag, len: usize) -> Result<Vec<f64>, FabricError> {
        let values = self.recv_raw(from, tag)?;
        if values.len() != len {
            return Err(FabricError::LengthMismatch {
                rank: self.rank,
                peer: from,
                tag,
                expected: len,
                found: values.len(),
            });
        }
        Ok(values)
    }

    /// Partner sequence `r-1, r+1, r-2, r+2, ...` without wraparound.
    pub fn left_right_order(&self) -> Vec<usize> {
        left_right_order(self.rank, self.world_size)
    }

    /// Exchanges `values` with `peer`: the lower rank sends first, the
    /// higher rank receives first.
    pub fn exchange(&mut self, peer: usize, tag: Tag, values: Vec<f64>, recv_len: usize) -> Result<Vec<f64>, FabricError> {
        self.check_tag(tag)?;
        self.exchange_raw(peer, tag, values, recv_len)
    }

    fn exchange_raw(&mut self, peer: usize, tag: Tag, values: Vec<f64>, recv_len: usize) -> Result<Vec<f64>, FabricError> {
        if self.rank < peer {
            self.send_raw(peer, tag, values)?;
            self.recv_len(peer, tag, recv_len)
        } else {
            let got = self.recv_len(peer, tag, recv_len)?;
            self.send_raw(peer, tag, values)?;
            Ok(got)
        }
    }

    /// Gathers every rank's block on every rank, concatenated in rank order.
    /// `block_sizes[q]` is the length of rank `q`'s block.
    pub fn left_right_allgather(&mut self, local: &[f64], block_sizes: &[usize]) -> Result<Vec<f64>, FabricError> {
        if block_sizes.len() != self.world_size || block_sizes[self.rank] != local.len() {
            return Err(FabricError::CollectiveMismatch {
                rank: self.rank,
                msg: format!(
                    "local block of {} values against layout {:?}",
                    local.len(),
                    block_sizes
                ),
            });
        }
        let mut offsets = Vec::with_capacity(block_sizes.len() + 1);
        offsets.push(0);
        for &s in block_sizes {
            offsets.push(offsets.last().unwrap() + s);
        }
        let mut full = vec![0.0; offsets[self.world_size]];
        full[offsets[self.rank]..offsets[self.rank + 1]].copy_from_slice(local);
        for q in self.left_right_order() {
            let got = self.exchange_raw(q, TAG_ALLGATHER, local.to_vec(), block_sizes[q])?;
            full[offsets[q]..offsets[q + 1]].copy_from_slice(&got);
        }
        Ok(full)
    }

    /// Reduces to rank 0 over a binary tree, combining partial results in
    /// ascending rank order, then broadcasts back down the same tree.
    fn all_reduce(&mut self, values: &[f64], op: ReduceOp) -> Result<Vec<f64>, FabricError> {
        let (r, p, len) = (self.rank, self.world_size, values.len());
        let mismatch = |e: FabricError| match e {
            FabricError::LengthMismatch { rank, peer, expected, found, .. } => FabricError::CollectiveMismatch {
                rank,
                msg: format!("reduction of {expected} values met {found} from rank {peer}"),
            },
            e => e,
        };
        let mut acc = values.to_vec();
        let mut step = 1;
        while step < p {
            if r % (2 * step) == step {
                self.send_raw(r - step, TAG_REDUCE, acc.clone())?;
                break;
            }
            if r + step < p {
                let other = self.recv_len(r + step, TAG_REDUCE, len).map_err(mismatch)?;
                op.apply(&mut acc, &other);
            }
            step *= 2;
        }
        let mut step = p.next_power_of_two() / 2;
        while step >= 1 {
            if r % (2 * step) == step {
                acc = self.recv_len(r - step, TAG_BCAST, len).map_err(mismatch)?;
            } else if r % (2 * step) == 0 && r + step < p {
                self.send_raw(r + step, TAG_BCAST, acc.clone())?;
            }
            step /= 2;
        }
        Ok(acc)
    }

    pub fn all_reduce_sum(&mut self, values: &[f64]) -> Result<Vec<f64>, FabricError> {
        self.all_reduce(values, ReduceOp::Sum)
    }

    pub fn all_reduce_max(&mut self, value: f64) -> Result<f64, FabricError> {
        Ok(self.all_reduce(&[value], ReduceOp::Max)?[0])
    }

    pub fn all_reduce_land(&mut self, flag: bool) -> Result<bool, FabricError> {
        Ok(self.all_reduce(&[f64::from(u8::from(flag))], ReduceOp::Min)?[0] == 1.0)
    }
}

pub fn left_right_order(rank: usize, world_size: usize) -> Vec<usize> {
    let mut order = Vec::with_capacity(world_size.saturating_sub(1));
    for d in 1..world_size {
        if rank >= d {
            order.push(rank - d);
        }
        if rank + d < world_size {
            order.push(rank + d);
        }
    }
    order
}

/// Deadlock timeout from the environment, falling back to 30 s.
pub fn timeout_from_env() -> Duration {
    env::var(TIMEOUT_ENV)
        .ok()
        .and_then(|s| s.trim().parse::<f64>().ok())
        .filter(|s| s.is_finite() && *s > 0.0)
        .map_or(DEFAULT_TIMEOUT, Duration::from_secs_f64)
}

fn panic_message(payload: Box<dyn std::any::Any + Send>) -> String {
    payload
        .downcast_ref::<&str>()
        .map(|s| s.to_string())
        .or_else(|| payload.downcast_ref::<String>().cloned())
        .unwrap_or_else(|| "unknown panic".into())
}

/// Runs `program` on `p` concurrent ranks and returns each rank's result
/// with its communication counters.
///
/// A rank that returns drops its endpoint, so peers still waiting on it see
/// a hang-up instead of waiting for the timeout.
pub fn spawn_world_with<T, F>(p: usize, timeout: Duration, program: F) -> Result<Vec<(T, CommStats)>, FabricError>
where
    T: Send,
    F: Fn(&mut RankEndpoint) -> T + Sync,
{
    if p == 0 {
        return Err(FabricError::EmptyWorld);
    }
    let mut senders: Vec<Vec<Option<Sender<Message>>>> = (0..p).map(|_| (0..p).map(|_| None).collect()).collect();
    let mut receivers: Vec<Vec<Option<Receiver<Message>>>> = (0..p).map(|_| (0..p).map(|_| None).collect()).collect();
    for s in 0..p {
        for q in (0..p).filter(|&q| q != s) {
            let (tx, rx) = mpsc::channel();
            senders[s][q] = Some(tx);
            receivers[q][s] = Some(rx);
        }
    }
    let endpoints: Vec<RankEndpoint> = senders
        .into_iter()
        .zip(receivers)
        .enumerate()
        .map(|(rank, (senders, receivers))| RankEndpoint {
            rank,
            world_size: p,
            senders,
            receivers,
            stash: (0..p).map(|_| VecDeque::new()).collect(),
            timeout,
            stats: CommStats::default(),
        })
        .collect();

    let program = &program;
    let joined: Vec<thread::Result<(T, CommStats)>> = thread::scope(|scope| {
        let handles: Vec<_> = endpoints
            .into_iter()
            .map(|mut ep| {
                thread::Builder::new()
                    .name(format!("rank-{}", ep.rank))
                    .spawn_scoped(scope, move || {
                        let out = program(&mut ep);
                        (out, ep.stats.clone())
                    })
                    .expect("spawn rank thread")
            })
            .collect();
        handles.into_iter().map(|h| h.join()).collect()
    });
    joined
        .into_iter()
        .enumerate()
        .map(|(rank, r)| {
            r.map_err(|e| FabricError::WorkerPanic {
                rank,
                msg: panic_message(e),
            })
        })
        .collect()
}

pub fn spawn_world_with_stats<T, F>(p: usize, program: F) -> Result<Vec<(T, CommStats)>, FabricError>
where
    T: Send,
    F: Fn(&mut RankEndpoint) -> T + Sync,
{
    spawn_world_with(p, timeout_from_env(), program)
}

/// Runs `program` on `p` ranks and returns the per-rank results in rank order.
pub fn spawn_world<T, F>(p: usize, program: F) -> Result<Vec<T>, FabricError>
where
    T: Send,
    F: Fn(&mut RankEndpoint) -> T + Sync,
{
    Ok(spawn_world_with_stats(p, program)?
        .into_iter()
        .map(|(t, _)| t)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_rank() {
        assert_eq!(spawn_world(1, |ep| ep.rank()).unwrap(), vec![0]);
        let out = spawn_world_with_stats(1, |ep| ep.all_reduce_sum(&[2.0]).unwrap()).unwrap();
        assert_eq!(out[0].0, vec![2.0]);
        assert_eq!(out[0].1.comm_time, Duration::ZERO);
        assert!(matches!(spawn_world(0, |_| ()), Err(FabricError::EmptyWorld)));
    }

    #[test]
    fn gather_ids_at_root() {
        let out = spawn_world(4, |ep| {
            if ep.rank() == 0 {
                (1..4).map(|q| ep.recv_exact(q, 7, 1).unwrap()[0]).sum::<f64>()
            } else {
                ep.send(0, 7, vec![ep.rank() as f64]).unwrap();
                0.0
            }
        })
        .unwrap();
        assert_eq!(out[0], 6.0);
    }

    #[test]
    fn ring_forward() {
        let out = spawn_world(3, |ep| {
            let (r, p) = (ep.rank(), ep.world_size());
            ep.send((r + 1) % p, 1, vec![r as f64; 2]).unwrap();
            ep.recv((r + p - 1) % p, 1).unwrap()
        })
        .unwrap();
        assert_eq!(out, vec![vec![2.0; 2], vec![0.0; 2], vec![1.0; 2]]);
    }

    #[test]
    fn tags_are_matched_out_of_order() {
        let out = spawn_world(2, |ep| {
            if ep.rank() == 0 {
                ep.send(1, 1, vec![1.0]).unwrap();
                ep.send(1, 2, vec![2.0]).unwrap();
                ep.send(1, 1, vec![3.0]).unwrap();
                vec![]
            } else {
                let b = ep.recv(0, 2).unwrap()[0];
                let a = ep.recv(0, 1).unwrap()[0];
                let c = ep.recv(0, 1).unwrap()[0];
                vec![a, b, c]
            }
        })
        .unwrap();
        assert_eq!(out[1], vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn partner_order() {
        assert_eq!(left_right_order(2, 5), vec![1, 3, 0, 4]);
        assert_eq!(left_right_order(0, 3), vec![1, 2]);
        assert!(left_right_order(0, 1).is_empty());
    }

    #[test]
    fn allgather_three_blocks() {
        let sizes = [1, 2, 1];
        let out = spawn_world(3, |ep| {
            let local: Vec<f64> = vec![ep.rank() as f64 + 1.0; sizes[ep.rank()]];
            ep.left_right_allgather(&local, &sizes).unwrap()
        })
        .unwrap();
        for v in out {
            assert_eq!(v, vec![1.0, 2.0, 2.0, 3.0]);
        }
    }

    #[test]
    fn reductions() {
        let out = spawn_world(4, |ep| ep.all_reduce_sum(&[ep.rank() as f64 + 1.0]).unwrap()[0]).unwrap();
        assert_eq!(out, vec![10.0; 4]);
        let out = spawn_world(3, |ep| ep.all_reduce_land(ep.rank() != 2).unwrap()).unwrap();
        assert_eq!(out, vec![false; 3]);
        let out = spawn_world(2, |ep| {
            let mut v = vec![0.0; 2];
            v[ep.rank()] = 1.0;
            ep.all_reduce_sum(&v).unwrap()
        })
        .unwrap();
        assert_eq!(out, vec![vec![1.0, 1.0]; 2]);
        let out = spawn_world(5, |ep| ep.all_reduce_max(-(ep.rank() as f64)).unwrap()).unwrap();
        assert_eq!(out, vec![0.0; 5]);
    }

    #[test]
    fn reduction_shape_mismatch() {
        let out = spawn_world(2, |ep| ep.all_reduce_sum(&vec![1.0; ep.rank() + 1])).unwrap();
        assert!(out.iter().any(|r| matches!(r, Err(FabricError::CollectiveMismatch { .. }))));
    }

    #[test]
    fn deadlock_times_out() {
        let out = spawn_world_with(2, Duration::from_millis(50), |ep| {
            let peer = 1 - ep.rank();
            ep.recv(peer, 3).map(|_| ())
        })
        .unwrap();
        for (r, _) in out {
            assert!(matches!(r, Err(FabricError::Timeout { tag: 3, .. }) | Err(FabricError::Disconnected { .. })));
        }
    }

    #[test]
    fn failed_rank_releases_peers() {
        let start = Instant::now();
        let out = spawn_world(2, |ep| {
            if ep.rank() == 0 {
                Err(FabricError::EmptyWorld)
            } else {
                ep.recv(0, 1).map(|_| ())
            }
        })
        .unwrap();
        assert!(matches!(out[1], Err(FabricError::Disconnected { rank: 1, peer: 0 })));
        assert!(start.elapsed() < Duration::from_secs(5));
    }

    #[test]
    fn panic_is_reported() {
        let err = spawn_world(2, |ep| {
            if ep.rank() == 1 {
                panic!("boom");
            }
        })
        .unwrap_err();
        assert_eq!(
            err,
            FabricError::WorkerPanic {
                rank: 1,
                msg: "boom".into()
            }
        );
    }

    #[test]
    fn invalid_use() {
        let out = spawn_world(2, |ep| {
            (
                ep.send(ep.rank(), 1, vec![]).is_err(),
                ep.send(5, 1, vec![]).is_err(),
                ep.send(1 - ep.rank(), RESERVED_TAG, vec![]).is_err(),
            )
        })
        .unwrap();
        assert!(out.iter().all(|&(a, b, c)| a && b && c));
    }

    #[test]
    fn collective_traffic_is_counted_apart() {
        let out = spawn_world_with_stats(2, |ep| {
            ep.all_reduce_sum(&[1.0, 2.0]).unwrap();
            ep.left_right_allgather(&[1.0], &[1, 1]).unwrap();
        })
        .unwrap();
        for (_, s) in &out {
            assert_eq!(s.bytes_sent, 8);
        }
        assert_eq!(out[0].1.collective_bytes + out[1].1.collective_bytes, 32);
    }
}

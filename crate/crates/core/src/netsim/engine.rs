//! Event calendar and per-host resources shared by both architecture flows.

use crate::model::HostCapacity;
use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};

/// One-way propagation delay inside the data center.
pub(crate) const LINK_LATENCY_S: f64 = 0.0002;

struct Entry<E> {
    t: f64,
    seq: u64,
    kind: Pending<E>,
}

enum Pending<E> {
    User(E),
    JobDone { host: usize, core: usize, class: usize, then: E },
    Start { host: usize, class: usize, cpu_ms: f64, then: E },
    Tick(u32),
}

impl<E> PartialEq for Entry<E> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl<E> Eq for Entry<E> {}
impl<E> PartialOrd for Entry<E> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<E> Ord for Entry<E> {
    // reversed: BinaryHeap is a max-heap
    fn cmp(&self, other: &Self) -> Ordering {
        other.t.total_cmp(&self.t).then_with(|| other.seq.cmp(&self.seq))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum ClassMode {
    /// Shared pool, at most this many jobs in flight.
    Pool(usize),
    Core(usize),
}

struct Job<E> {
    cpu_s: f64,
    then: E,
}

struct JobClass<E> {
    mode: ClassMode,
    queue: VecDeque<Job<E>>,
    in_flight: usize,
}

struct Host<E> {
    busy: Vec<bool>,
    pool_cores: Vec<usize>,
    classes: Vec<JobClass<E>>,
    out_free: f64,
    in_free: f64,
    disk_free: f64,
    core_time: Vec<f64>,
    bytes_in: Vec<f64>,
    bytes_out: Vec<f64>,
    disk_time: Vec<f64>,
}

pub(crate) enum Popped<E> {
    Event(E),
    Tick(u32),
}

pub(crate) struct Engine<E> {
    pub now: f64,
    end: f64,
    seq: u64,
    calendar: BinaryHeap<Entry<E>>,
    hosts: Vec<Host<E>>,
    n_cores: usize,
    n_secs: usize,
    nic: f64,
    core_rate: f64,
    disk_bw: f64,
}

/// Spreads the interval [start, end) over one-second buckets, weighting
/// each bucket by `per_s` per second of overlap.
fn spread(buf: &mut [f64], stride: usize, offset: usize, start: f64, end: f64, per_s: f64) {
    if end <= start {
        return;
    }
    let n = buf.len() / stride;
    let first = start.floor().max(0.0) as usize;
    let last = (end.ceil().max(0.0) as usize).min(n);
    for sec in first..last {
        let overlap = end.min(sec as f64 + 1.0) - start.max(sec as f64);
        if overlap > 0.0 {
            buf[sec * stride + offset] += overlap * per_s;
        }
    }
}

impl<E> Engine<E> {
    pub fn new(n_hosts: usize, cap: &HostCapacity, duration_s: u32) -> Self {
        let n_secs = duration_s as usize;
        let host = || Host {
            busy: vec![false; cap.n_cores],
            pool_cores: Vec::new(),
            classes: Vec::new(),
            out_free: 0.0,
            in_free: 0.0,
            disk_free: 0.0,
            core_time: vec![0.0; n_secs * cap.n_cores],
            bytes_in: vec![0.0; n_secs],
            bytes_out: vec![0.0; n_secs],
            disk_time: vec![0.0; n_secs],
        };
        let mut engine = Engine {
            now: 0.0,
            end: duration_s as f64,
            seq: 0,
            calendar: BinaryHeap::new(),
            hosts: (0..n_hosts).map(|_| host()).collect(),
            n_cores: cap.n_cores,
            n_secs,
            nic: cap.nic_bandwidth,
            core_rate: cap.core_capacity,
            disk_bw: cap.disk_bandwidth,
        };
        for s in 0..duration_s {
            engine.push(s as f64 + 1.0 - 1e-9, Pending::Tick(s));
        }
        engine
    }

    /// Registers a job class; returns its index on that host. Pool cores are
    /// those not claimed by a dedicated class (all cores if none remain), so
    /// register dedicated classes first.
    pub fn add_class(&mut self, host: usize, mode: ClassMode) -> usize {
        let n_cores = self.n_cores;
        let h = &mut self.hosts[host];
        h.classes.push(JobClass { mode, queue: VecDeque::new(), in_flight: 0 });
        let dedicated: Vec<usize> = h
            .classes
            .iter()
            .filter_map(|c| match c.mode {
                ClassMode::Core(k) => Some(k),
                ClassMode::Pool(_) => None,
            })
            .collect();
        h.pool_cores = (0..n_cores).filter(|k| !dedicated.contains(k)).collect();
        if h.pool_cores.is_empty() {
            h.pool_cores = (0..n_cores).collect();
        }
        h.classes.len() - 1
    }

    fn push(&mut self, t: f64, kind: Pending<E>) {
        self.seq += 1;
        self.calendar.push(Entry { t, seq: self.seq, kind });
    }

    pub fn schedule(&mut self, t: f64, ev: E) {
        if t < self.end {
            self.push(t.max(self.now), Pending::User(ev));
        }
    }

    /// Like [`submit`](Self::submit) but the job is queued no earlier than `t`.
    pub fn submit_at(&mut self, t: f64, host: usize, class: usize, cpu_ms: f64, then: E) {
        if t <= self.now {
            self.submit(host, class, cpu_ms, then);
        } else if t < self.end {
            self.push(t, Pending::Start { host, class, cpu_ms, then });
        }
    }

    /// Queues `cpu_ms` of work; `then` fires when it completes. Zero-cost
    /// jobs complete immediately without touching a core.
    pub fn submit(&mut self, host: usize, class: usize, cpu_ms: f64, then: E) {
        if cpu_ms <= 0.0 {
            let now = self.now;
            self.schedule(now, then);
            return;
        }
        let cpu_s = cpu_ms / self.core_rate;
        self.hosts[host].classes[class].queue.push_back(Job { cpu_s, then });
        self.dispatch(host);
    }

    pub fn queued(&self, host: usize) -> usize {
        self.hosts[host].classes.iter().map(|c| c.queue.len() + c.in_flight).sum()
    }

    pub fn class_backlog(&self, host: usize, class: usize) -> usize {
        let c = &self.hosts[host].classes[class];
        c.queue.len() + c.in_flight
    }

    fn dispatch(&mut self, host: usize) {
        loop {
            let h = &self.hosts[host];
            // a dedicated class with a free core wins, else the first pool
            // class with spare workers
            let mut pick: Option<(usize, usize)> = None;
            for (ci, class) in h.classes.iter().enumerate() {
                if class.queue.is_empty() {
                    continue;
                }
                match class.mode {
                    ClassMode::Core(k) => {
                        if !h.busy[k] {
                            pick = Some((ci, k));
                            break;
                        }
                    }
                    ClassMode::Pool(workers) => {
                        if pick.is_none() && class.in_flight < workers {
                            if let Some(&k) = h.pool_cores.iter().find(|&&k| !h.busy[k]) {
                                pick = Some((ci, k));
                            }
                        }
                    }
                }
            }
            let Some((ci, core)) = pick else { return };
            let now = self.now;
            let n_cores = self.n_cores;
            let h = &mut self.hosts[host];
            let job = h.classes[ci].queue.pop_front().expect("non-empty");
            h.classes[ci].in_flight += 1;
            h.busy[core] = true;
            let end = now + job.cpu_s;
            spread(&mut h.core_time, n_cores, core, now, end, 1.0);
            self.push(end, Pending::JobDone { host, core, class: ci, then: job.then });
        }
    }

    /// Transfers `bytes` from `from` to `to`, serialized on the sender's
    /// outbound and the receiver's inbound link; `then` fires on arrival.
    pub fn send(&mut self, from: usize, to: usize, bytes: f64, then: E) {
        let t = self.transfer(from, to, bytes);
        self.schedule(t, then);
    }

    /// Like [`send`](Self::send) but without a delivery event.
    pub fn transfer(&mut self, from: usize, to: usize, bytes: f64) -> f64 {
        let dur = bytes / self.nic;
        let start = self.now.max(self.hosts[from].out_free).max(self.hosts[to].in_free);
        let end = start + dur;
        self.hosts[from].out_free = end;
        self.hosts[to].in_free = end;
        if dur > 0.0 {
            let rate = bytes / dur;
            spread(&mut self.hosts[from].bytes_out, 1, 0, start, end, rate);
            spread(&mut self.hosts[to].bytes_in, 1, 0, start, end, rate);
        }
        end + LINK_LATENCY_S
    }

    /// Serialized disk write; returns the completion time.
    pub fn write_disk(&mut self, host: usize, bytes: f64) -> f64 {
        if bytes <= 0.0 {
            return self.now;
        }
        let h = &mut self.hosts[host];
        let start = self.now.max(h.disk_free);
        let end = start + bytes / self.disk_bw;
        h.disk_free = end;
        spread(&mut h.disk_time, 1, 0, start, end, 1.0);
        end
    }

    pub fn next(&mut self) -> Option<Popped<E>> {
        loop {
            let entry = self.calendar.pop()?;
            if entry.t >= self.end {
                self.calendar.clear();
                return None;
            }
            self.now = entry.t;
            match entry.kind {
                Pending::User(ev) => return Some(Popped::Event(ev)),
                Pending::Tick(s) => return Some(Popped::Tick(s)),
                Pending::Start { host, class, cpu_ms, then } => self.submit(host, class, cpu_ms, then),
                Pending::JobDone { host, core, class, then } => {
                    let h = &mut self.hosts[host];
                    h.busy[core] = false;
                    h.classes[class].in_flight -= 1;
                    self.dispatch(host);
                    return Some(Popped::Event(then));
                }
            }
        }
    }

    pub fn n_secs(&self) -> usize {
        self.n_secs
    }

    pub fn core_util(&self, host: usize, sec: usize) -> Vec<f64> {
        let h = &self.hosts[host];
        h.core_time[sec * self.n_cores..(sec + 1) * self.n_cores].iter().map(|&v| v.clamp(0.0, 1.0)).collect()
    }

    pub fn bytes(&self, host: usize, sec: usize) -> (f64, f64) {
        let h = &self.hosts[host];
        (h.bytes_in[sec], h.bytes_out[sec])
    }

    pub fn disk_util(&self, host: usize, sec: usize) -> f64 {
        self.hosts[host].disk_time[sec].clamp(0.0, 1.0)
    }
}

"""Slot-level Monte Carlo simulation of the broadcast network.

Nodes are dropped as a Poisson process on a square torus.  Each node runs
slotted CSMA/CA with unbounded binary exponential backoff, produces one
update per frame (replaced by a neighbour's update if one is heard during
the frame) and keeps a FIFO queue of updates to broadcast.  The broadcast
age of a node is ``slot - U`` of its latest successfully broadcast update,
growing by one per slot in between.

A broadcast succeeds when none of the transmitter's neighbours transmit in
the same slot.  Collisions are known to the transmitter at the end of the
slot; the backoff timer is frozen in slots where a neighbour transmits.

The slot loop is compiled with numba.  All randomness comes from one
:class:`numpy.random.Generator` per replication, consumed as a single stream
of uniforms, so a run is reproducible from ``(config, seed)``.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field

import numba
import numpy as np
from scipy import stats
from scipy.spatial import cKDTree

from .model_core import NetworkParams

ADMISSIONS = ("frame_end", "immediate")
CONTENTIONS = ("on_demand", "saturated")

_ADMISSION_CODE = {"frame_end": 0, "immediate": 1}
_CONTENTION_CODE = {"on_demand": 0, "saturated": 1}

# stage cap only guards int64 overflow; a window of 2**40 slots never expires in practice
_MAX_STAGE = 40
_RNG_CHUNK = 1 << 20


class DegenerateTopology(RuntimeError):
    """The drawn topology has no nodes (or none with a neighbour)."""


@dataclass(frozen=True)
class SimConfig:
    params: NetworkParams
    area_side: float = 40.0
    frames: int = 5000
    warmup: int | None = None
    seed: int = 0
    reps: int = 10
    admission: str = "frame_end"
    contention: str = "on_demand"
    queue_capacity: int = 4096

    def __post_init__(self):
        if self.area_side < 10 * self.params.transmit_range:
            raise ValueError("area_side must be at least 10x the transmit range")
        if self.frames < 1:
            raise ValueError("frames must be >= 1")
        if self.reps < 1:
            raise ValueError("reps must be >= 1")
        if self.admission not in ADMISSIONS:
            raise ValueError(f"admission must be one of {ADMISSIONS}")
        if self.contention not in CONTENTIONS:
            raise ValueError(f"contention must be one of {CONTENTIONS}")
        if not 0 <= self.warmup_frames < self.frames:
            raise ValueError("warmup must be smaller than the number of frames")

    @property
    def warmup_frames(self) -> int:
        if self.warmup is not None:
            return self.warmup
        return min(max(self.frames // 5, 100), self.frames - 1)


@dataclass
class Topology:
    positions: np.ndarray
    side: float
    transmit_range: float
    indptr: np.ndarray
    indices: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.positions)

    @property
    def degree(self) -> np.ndarray:
        return np.diff(self.indptr)

    def neighbors(self, i: int) -> np.ndarray:
        return self.indices[self.indptr[i] : self.indptr[i + 1]]

    @classmethod
    def from_positions(cls, positions, side, transmit_range):
        positions = np.asarray(positions, dtype=float).reshape(-1, 2)
        n = len(positions)
        if n:
            tree = cKDTree(np.mod(positions, side), boxsize=side)
            pairs = tree.query_pairs(transmit_range, output_type="ndarray")
        else:
            pairs = np.empty((0, 2), dtype=np.int64)
        src = np.concatenate([pairs[:, 0], pairs[:, 1]]).astype(np.int64)
        dst = np.concatenate([pairs[:, 1], pairs[:, 0]]).astype(np.int64)
        order = np.lexsort((dst, src))
        src, dst = src[order], dst[order]
        indptr = np.zeros(n + 1, dtype=np.int64)
        np.add.at(indptr, src + 1, 1)
        indptr = np.cumsum(indptr)
        return cls(positions, side, transmit_range, indptr, dst)


def generate_topology(params: NetworkParams, side: float, rng) -> Topology:
    """Poisson(rho L^2) nodes, uniform on the torus, linked within range."""
    rng = np.random.default_rng(rng)
    n = rng.poisson(params.density * side * side)
    if n == 0:
        raise DegenerateTopology("no nodes drawn")
    pos = rng.uniform(0.0, side, size=(n, 2))
    return Topology.from_positions(pos, side, params.transmit_range)


# ---------------------------------------------------------------------------
# slot kernel


@numba.njit(cache=True)
def _draw_timer(stage, w_min, u):
    w = (1 << min(stage, _MAX_STAGE)) * w_min
    t = int(u * w)
    return min(t, w - 1)


@numba.njit(cache=True)
def _advance(
    s0, s_end, T_F, w_min, admission, contention, warmup_slot,
    indptr, indices,
    stage, timer, age,
    q_arr, q_org, q_head, q_len,
    gen_slot, recv_arr, recv_org, frame_pos,
    tx, success, busy,
    n_attempt, n_contend, n_collide, n_success, n_pending, age_sum, n_overflow,
    unif, upos,
    trace, trace_len, trace_on,
):
    """Advance slots ``s0 .. s_end-1``; stop early if the uniform buffer runs low.

    Returns ``(next_slot, next_uniform_position)``.
    """
    n = stage.shape[0]
    cap = q_arr.shape[1]
    s = s0
    while s < s_end:
        if upos + 2 * n > unif.shape[0]:
            break
        in_frame = s % T_F
        counted = s >= warmup_slot

        if in_frame == 0:
            for i in range(n):
                gen_slot[i] = s + min(int(unif[upos] * T_F), T_F - 1)
                upos += 1
                recv_arr[i] = -1
                recv_org[i] = -1
                frame_pos[i] = -1

        # (1) who transmits
        for i in range(n):
            active = q_len[i] > 0 or (contention == 1 and indptr[i + 1] > indptr[i])
            tx[i] = active and timer[i] == 0
        # (2) carrier sense / collision outcome
        for i in range(n):
            b = False
            for k in range(indptr[i], indptr[i + 1]):
                if tx[indices[k]]:
                    b = True
                    break
            busy[i] = b
            success[i] = tx[i] and not b

        # (3)-(4) MAC state
        for i in range(n):
            has_nb = indptr[i + 1] > indptr[i]
            pending = q_len[i] > 0
            if counted and pending:
                n_pending[i] += 1
            if tx[i]:
                if counted:
                    n_attempt[i] += 1
                    n_contend[i] += 1
                if success[i]:
                    stage[i] = 0
                else:
                    if counted:
                        n_collide[i] += 1
                    stage[i] += 1
                timer[i] = _draw_timer(stage[i], w_min, unif[upos])
                upos += 1
            elif (pending or (contention == 1 and has_nb)) and not busy[i]:
                timer[i] -= 1
                if counted:
                    n_contend[i] += 1

        # deliveries: pop head-of-line, age reset, neighbours hear the update
        for i in range(n):
            if success[i] and q_len[i] > 0:
                h = q_head[i]
                u_arr = q_arr[i, h]
                u_org = q_org[i, h]
                if frame_pos[i] == h:
                    frame_pos[i] = -2
                q_head[i] = (h + 1) % cap
                q_len[i] -= 1
                age[i] = s - u_arr
                if counted:
                    n_success[i] += 1
                if trace_on and trace_len[0] < trace.shape[0]:
                    t = trace_len[0]
                    trace[t, 0] = i
                    trace[t, 1] = s
                    trace[t, 2] = u_arr
                    trace[t, 3] = u_org
                    trace[t, 4] = s - u_arr
                    trace_len[0] = t + 1
                for k in range(indptr[i], indptr[i + 1]):
                    j = indices[k]
                    if frame_pos[j] >= 0 and admission == 1:
                        # replace the frame's queued update in place
                        if u_org >= q_org[j, frame_pos[j]]:
                            q_arr[j, frame_pos[j]] = s
                            q_org[j, frame_pos[j]] = u_org
                    elif frame_pos[j] == -1 and u_org >= recv_org[j]:
                        # held until admission; latest-generated wins
                        recv_arr[j] = s
                        recv_org[j] = u_org
                    # frame_pos == -2: this frame's update already left
            else:
                age[i] += 1

        # admissions at the end of the slot
        for i in range(n):
            admit = False
            if admission == 1:
                admit = s == gen_slot[i] and frame_pos[i] == -1
            else:
                admit = in_frame == T_F - 1
            if admit:
                if recv_arr[i] >= 0:
                    a, o = recv_arr[i], recv_org[i]
                else:
                    a, o = gen_slot[i], gen_slot[i]
                if q_len[i] == cap:
                    # drop the oldest; only reachable in unstable regimes
                    q_head[i] = (q_head[i] + 1) % cap
                    q_len[i] -= 1
                    n_overflow[i] += 1
                p = (q_head[i] + q_len[i]) % cap
                q_arr[i, p] = a
                q_org[i, p] = o
                q_len[i] += 1
                frame_pos[i] = p

        if counted:
            for i in range(n):
                age_sum[i] += age[i]
        s += 1
    return s, upos


# ---------------------------------------------------------------------------
# world: python-side state wrapper around the kernel


@dataclass
class World:
    """Complete simulation state of one replication."""

    topology: Topology
    params: NetworkParams
    rng: np.random.Generator
    admission: str = "frame_end"
    contention: str = "on_demand"
    warmup_slot: int = 0
    queue_capacity: int = 4096
    trace_capacity: int = 0
    slot: int = 0
    arrays: dict = field(default_factory=dict)

    @classmethod
    def create(cls, topology, params, rng, **kw) -> "World":
        w = cls(topology, params, np.random.default_rng(rng), **kw)
        n = topology.n_nodes
        cap = w.queue_capacity
        i64 = np.int64
        a = dict(
            stage=np.zeros(n, i64),
            timer=np.zeros(n, i64),
            age=np.zeros(n, i64),
            q_arr=np.zeros((n, cap), i64),
            q_org=np.zeros((n, cap), i64),
            q_head=np.zeros(n, i64),
            q_len=np.zeros(n, i64),
            gen_slot=np.full(n, -1, i64),
            recv_arr=np.full(n, -1, i64),
            recv_org=np.full(n, -1, i64),
            frame_pos=np.full(n, -1, i64),
            tx=np.zeros(n, np.bool_),
            success=np.zeros(n, np.bool_),
            busy=np.zeros(n, np.bool_),
            n_attempt=np.zeros(n, i64),
            n_contend=np.zeros(n, i64),
            n_collide=np.zeros(n, i64),
            n_success=np.zeros(n, i64),
            n_pending=np.zeros(n, i64),
            age_sum=np.zeros(n, np.float64),
            n_overflow=np.zeros(n, i64),
            trace=np.zeros((max(w.trace_capacity, 1), 5), i64),
            trace_len=np.zeros(1, i64),
        )
        w.arrays = a
        w._unif = np.empty(0)
        w._upos = 0
        # initial backoff timers at stage 0
        a["timer"][:] = np.minimum((w.rng.random(n) * params.w_min).astype(i64), params.w_min - 1)
        return w

    def __getattr__(self, name):
        arrays = self.__dict__.get("arrays")
        if arrays is not None and name in arrays:
            return arrays[name]
        raise AttributeError(name)

    def enqueue(self, node: int, arrival_slot: int, origin_slot: int | None = None):
        """Push an update onto a node's queue (test and scenario hook)."""
        a = self.arrays
        cap = self.queue_capacity
        if a["q_len"][node] == cap:
            raise OverflowError("queue full")
        p = (a["q_head"][node] + a["q_len"][node]) % cap
        a["q_arr"][node, p] = arrival_slot
        a["q_org"][node, p] = arrival_slot if origin_slot is None else origin_slot
        a["q_len"][node] += 1

    def queue(self, node: int) -> list[tuple[int, int]]:
        a = self.arrays
        cap = self.queue_capacity
        h, n = a["q_head"][node], a["q_len"][node]
        return [(int(a["q_arr"][node, (h + k) % cap]), int(a["q_org"][node, (h + k) % cap])) for k in range(n)]

    def _refill(self, need):
        if len(self._unif) - self._upos >= need:
            return
        fresh = self.rng.random(max(_RNG_CHUNK, need))
        self._unif = np.concatenate([self._unif[self._upos :], fresh])
        self._upos = 0

    def advance(self, n_slots: int) -> "World":
        a = self.arrays
        p = self.params
        end = self.slot + n_slots
        n = self.topology.n_nodes
        while self.slot < end:
            self._refill(2 * n)
            self.slot, self._upos = _advance(
                self.slot, end, p.frame_length, p.w_min,
                _ADMISSION_CODE[self.admission], _CONTENTION_CODE[self.contention], self.warmup_slot,
                self.topology.indptr, self.topology.indices,
                a["stage"], a["timer"], a["age"],
                a["q_arr"], a["q_org"], a["q_head"], a["q_len"],
                a["gen_slot"], a["recv_arr"], a["recv_org"], a["frame_pos"],
                a["tx"], a["success"], a["busy"],
                a["n_attempt"], a["n_contend"], a["n_collide"], a["n_success"], a["n_pending"],
                a["age_sum"], a["n_overflow"],
                self._unif, self._upos,
                a["trace"], a["trace_len"], self.trace_capacity > 0,
            )
        return self

    def trace_records(self) -> np.ndarray:
        """Rows of (node, slot, arrival_slot, origin_slot, new_age)."""
        return self.arrays["trace"][: self.arrays["trace_len"][0]].copy()


def step_slot(world: World) -> World:
    """Advance ``world`` by exactly one slot (in place)."""
    return world.advance(1)


# ---------------------------------------------------------------------------
# replications


@dataclass(frozen=True)
class ReplicationResult:
    seed: int
    n_nodes: int
    n_active: int
    p_tx: float
    p_cl: float
    mu: float
    baoi: float
    overflow: int


@dataclass(frozen=True)
class SimReport:
    config: SimConfig
    replications: tuple
    p_tx: float
    p_cl: float
    mu: float
    baoi: float
    p_tx_ci: float
    p_cl_ci: float
    mu_ci: float
    baoi_ci: float


def _half_width(values, level=0.95):
    values = np.asarray(values, dtype=float)
    if len(values) < 2:
        return float("nan")
    return float(stats.t.ppf(0.5 + level / 2, len(values) - 1) * values.std(ddof=1) / math.sqrt(len(values)))


def run_replication(config: SimConfig, seed: int, trace: bool = False):
    """One replication; returns ``(ReplicationResult, World)``.

    The topology is redrawn from the same stream until at least one node has
    a neighbour (at most 100 attempts).  With ``trace`` every delivery is
    logged; a node delivers at most one update per frame, which bounds the
    log at ``n_nodes * frames`` rows.
    """
    p = config.params
    rng = np.random.default_rng(seed)
    for _ in range(100):
        try:
            topo = generate_topology(p, config.area_side, rng)
        except DegenerateTopology:
            continue
        if np.any(topo.degree > 0):
            break
    else:
        raise DegenerateTopology(f"no usable topology after 100 draws (seed={seed})")

    world = World.create(
        topo, p, rng,
        admission=config.admission,
        contention=config.contention,
        warmup_slot=config.warmup_frames * p.frame_length,
        queue_capacity=config.queue_capacity,
        trace_capacity=topo.n_nodes * config.frames if trace else 0,
    )
    world.advance(config.frames * p.frame_length)

    a = world.arrays
    sel = topo.degree > 0
    attempts = a["n_attempt"][sel].sum()
    measured = (config.frames - config.warmup_frames) * p.frame_length
    res = ReplicationResult(
        seed=seed,
        n_nodes=topo.n_nodes,
        n_active=int(sel.sum()),
        p_tx=float(attempts / max(a["n_contend"][sel].sum(), 1)),
        p_cl=float(a["n_collide"][sel].sum() / max(attempts, 1)),
        mu=float(a["n_success"][sel].sum() / max(a["n_pending"][sel].sum(), 1)),
        baoi=float(np.mean(a["age_sum"][sel] / measured)),
        overflow=int(a["n_overflow"].sum()),
    )
    return res, world


def run(config: SimConfig, workers: int | None = None) -> SimReport:
    """Run ``config.reps`` replications with seeds ``seed, seed+1, ...``.

    Replications are independent and may run in a process pool; results are
    assembled in replication order, so the report does not depend on
    ``workers``.
    """
    seeds = [config.seed + k for k in range(config.reps)]
    if workers is None:
        workers = 1
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(workers) as ex:
            reps = list(ex.map(_rep_only, [config] * len(seeds), seeds))
    else:
        reps = [_rep_only(config, s) for s in seeds]
    return summarize(config, reps)


def _rep_only(config, seed):
    return run_replication(config, seed)[0]


def summarize(config: SimConfig, reps) -> SimReport:
    cols = {k: [getattr(r, k) for r in reps] for k in ("p_tx", "p_cl", "mu", "baoi")}
    return SimReport(
        config=config,
        replications=tuple(reps),
        p_tx=float(np.mean(cols["p_tx"])),
        p_cl=float(np.mean(cols["p_cl"])),
        mu=float(np.mean(cols["mu"])),
        baoi=float(np.mean(cols["baoi"])),
        p_tx_ci=_half_width(cols["p_tx"]),
        p_cl_ci=_half_width(cols["p_cl"]),
        mu_ci=_half_width(cols["mu"]),
        baoi_ci=_half_width(cols["baoi"]),
    )


# ---------------------------------------------------------------------------
# queue-recursion oracle


@numba.njit(cache=True)
def _queue_recursion(x, s):
    n = x.shape[0]
    y = np.empty(n, np.int64)
    xw = np.empty(n, np.int64)
    t_before = np.empty(n, np.int64)
    t_prev = 0
    for k in range(n):
        t_before[k] = t_prev
        w = t_prev - x[k]
        if w < 0:
            w = 0
        xw[k] = x[k] * w
        if x[k] < t_prev:
            y[k] = s[k]
        else:
            y[k] = x[k] + s[k] - t_prev
        t_prev = w + s[k]
    return y, xw, t_before


@dataclass(frozen=True)
class RecursionSample:
    y: np.ndarray  # inter-departure times Y_k
    xw: np.ndarray  # X_k * W_k
    t_prev: np.ndarray  # system time T_{k-1} of the previous update


def sample_queue_recursion(
    mu: float, T_F: int, n: int, seed=0, burn_in: int = 10_000, interarrival: str = "iid"
) -> RecursionSample:
    """Sample the single-node update queue directly from its recursion.

    ``W_k = max(0, T_{k-1} - X_k)``, ``T_k = W_k + S_k`` with geometric ``S_k``,
    and ``Y_k`` is ``S_k`` if ``X_k < T_{k-1}`` else ``X_k + S_k - T_{k-1}``.

    ``interarrival="iid"`` draws each X independently from the triangular
    law; ``"frames"`` builds X from per-frame offsets as the network does,
    so consecutive X share an offset and are negatively correlated.
    """
    rng = np.random.default_rng(seed)
    m = n + burn_in
    if interarrival == "iid":
        x = T_F + rng.integers(0, T_F, size=m) - rng.integers(0, T_F, size=m)
    elif interarrival == "frames":
        off = rng.integers(0, T_F, size=m + 1)
        x = T_F + off[1:] - off[:-1]
    else:
        raise ValueError("interarrival must be 'iid' or 'frames'")
    s = rng.geometric(mu, size=m)
    y, xw, t_prev = _queue_recursion(x.astype(np.int64), s.astype(np.int64))
    return RecursionSample(y[burn_in:], xw[burn_in:], t_prev[burn_in:])


def write_trace_csv(path, records) -> None:
    """One row per successful broadcast: node, slot, arrival slot, origin slot, new BAoI."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["node", "slot", "arrival_slot", "origin_slot", "baoi"])
        for row in records:
            w.writerow([int(v) for v in row])



def default_workers() -> int:
    return max(1, min(os.cpu_count() or 1, 8))

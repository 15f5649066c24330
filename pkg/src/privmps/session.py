"""Multi-party session: data owners, CSPs (CSP 0 coordinates) and the dealer.

Data owners answer count requests with fresh additive shares of their local
contingency vectors. The CSPs run the lattice traversal with a secure
scoring backend, opening only comparison bits, inserted records and masked
gadget values. The dealer serves input-independent material and never sees
an opened value.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import os
import threading
import time
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

from . import mpc
from .field import DEFAULT_PARAMS, FieldParams, FieldRNG, decode_elems, encode_elems, signed_lift
from .lattice import MODES, PGStructure, maximal_parent_sets
from .scoring import (DataTable, Schema, SchemaError, ScoringBackend, build_log_table, contingency, max_score2,
                      q_of)
from .sharing import Dealer, MaterialKind, encode_material, share, share_vector
from .transcript import FULL_CONTEXT, SETUP_CONTEXT, LeakageClass, Transcript, candidate_context
from .transport import LocalHub, Link, ProtocolAbort, TcpEndpoint
from .wire import MsgType

log = logging.getLogger(__name__)

DEALER = "dealer"


class ConfigError(ValueError):
    pass


@dataclass
class SessionConfig:
    schema: Schema
    target: str
    n_owners: int
    n_csps: int = 3
    l_max: int | None = None
    mode: str = "corrected"
    empty_set_penalty: bool = False
    params: FieldParams = DEFAULT_PARAMS
    seed: int | None = None
    session_id: bytes | None = None
    cell_budget: int = 10**6
    timeout: float = 120.0
    addresses: dict[str, tuple[str, int]] | None = None

    def __post_init__(self):
        if self.session_id is None:
            if self.seed is None:
                self.session_id = os.urandom(16)
            else:
                self.session_id = hashlib.sha256(f"privmps-session|{self.seed}".encode()).digest()[:16]
        self.validate()

    @property
    def csp_ids(self) -> list[str]:
        return [f"csp{k}" for k in range(self.n_csps)]

    @property
    def do_ids(self) -> list[str]:
        return [f"do{ell}" for ell in range(self.n_owners)]

    @property
    def roster(self) -> list[str]:
        return [DEALER] + self.csp_ids + self.do_ids

    @property
    def target_index(self) -> int:
        return self.schema.index(self.target)

    def validate(self) -> None:
        if self.n_csps < 2:
            raise ConfigError("need at least two CSPs")
        if self.n_owners < 1:
            raise ConfigError("need at least one data owner")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}")
        if self.l_max is not None and self.l_max < 0:
            raise ConfigError("l_max must be non-negative")
        if len(self.session_id) != 16:
            raise ConfigError("session id must be 16 bytes")
        try:
            target = self.target_index
        except SchemaError as exc:
            raise ConfigError(str(exc)) from None
        cells = math.prod(a for v, a in enumerate(self.schema.arities) if v != target)
        if cells > self.cell_budget:
            raise ConfigError(f"full conditioning set has {cells} cells, budget is {self.cell_budget}")
        bound = max_score2(self.schema, target, build_log_table(self.schema.m_max, self.params.f))
        if bound >= 1 << self.params.K:
            raise ConfigError(f"doubled scores may reach {bound}, which exceeds 2^K = 2^{self.params.K}")
        if self.addresses is not None:
            missing = set(self.roster) - set(self.addresses)
            if missing:
                raise ConfigError(f"no address for {sorted(missing)}")

    def public_dict(self) -> dict:
        """Everything all parties must agree on (no seeds, no timeouts)."""
        d = {
            "session_id": self.session_id.hex(),
            "schema": self.schema.to_dict(),
            "target": self.target,
            "n_owners": self.n_owners,
            "n_csps": self.n_csps,
            "l_max": self.l_max,
            "mode": self.mode,
            "empty_set_penalty": self.empty_set_penalty,
            "params": self.params.to_dict(),
            "cell_budget": self.cell_budget,
        }
        if self.addresses is not None:
            d["roster"] = {pid: f"{h}:{p}" for pid, (h, p) in sorted(self.addresses.items())}
        return d

    def digest(self) -> bytes:
        return hashlib.sha256(json.dumps(self.public_dict(), sort_keys=True).encode()).digest()

    def to_dict(self) -> dict:
        return {**self.public_dict(), "seed": self.seed, "timeout": self.timeout}

    @classmethod
    def from_dict(cls, d: dict) -> SessionConfig:
        addresses = None
        if d.get("roster"):
            addresses = {}
            for pid, addr in d["roster"].items():
                host, _, port = addr.rpartition(":")
                addresses[pid] = (host, int(port))
        return cls(
            schema=Schema.from_dict(d["schema"]),
            target=d["target"],
            n_owners=int(d["n_owners"]),
            n_csps=int(d.get("n_csps", 3)),
            l_max=d.get("l_max"),
            mode=d.get("mode", "corrected"),
            empty_set_penalty=bool(d.get("empty_set_penalty", False)),
            params=FieldParams(**{k: int(v) for k, v in d.get("params", {}).items()}),
            seed=d.get("seed"),
            session_id=bytes.fromhex(d["session_id"]) if d.get("session_id") else None,
            cell_budget=int(d.get("cell_budget", 10**6)),
            timeout=float(d.get("timeout", 120.0)),
            addresses=addresses,
        )

    @classmethod
    def load(cls, path) -> SessionConfig:
        return cls.from_dict(json.loads(Path(path).read_text()))

    def dump(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    def rng_for(self, pid: str) -> FieldRNG:
        return FieldRNG(None if self.seed is None else f"{self.seed}|{pid}", self.params.p)

    def peers_of(self, pid: str) -> list[str]:
        if pid == DEALER:
            return self.csp_ids
        if pid in self.csp_ids:
            return [DEALER] + [c for c in self.csp_ids if c != pid] + self.do_ids
        return self.csp_ids


def tcp_endpoint(config: SessionConfig, pid: str) -> TcpEndpoint:
    """Later roster entries dial earlier ones they talk to."""
    roster = config.roster
    me = roster.index(pid)
    peers = config.peers_of(pid)
    return TcpEndpoint(pid, config.addresses,
                       connect_to=[q for q in peers if roster.index(q) < me],
                       accept_from=[q for q in peers if roster.index(q) > me],
                       roster=roster, timeout=config.timeout, connect_timeout=min(20.0, config.timeout))


def handshake(link: Link, config: SessionConfig, pid: str, peers: list[str]) -> None:
    digest = config.digest()
    roster = config.roster
    hello = encode_elems([roster.index(pid), int.from_bytes(digest[:16], "little"),
                          int.from_bytes(digest[16:], "little")])
    for peer in peers:
        link.send(peer, MsgType.SETUP, hello)
    for peer in peers:
        vals = decode_elems(link.recv(peer, MsgType.SETUP).payload)
        if len(vals) != 3 or vals[0] != roster.index(peer):
            raise ProtocolAbort(f"{peer} announced itself as roster entry {vals[:1]}")
        theirs = vals[1].to_bytes(16, "little") + vals[2].to_bytes(16, "little")
        if theirs != digest:
            raise ProtocolAbort(f"config digest mismatch with {peer}")
    for peer in peers:
        link.send(peer, MsgType.SETUP_ACK, digest)
    for peer in peers:
        link.recv(peer, MsgType.SETUP_ACK)


# -- data owner --------------------------------------------------------------

def _count_request_header(target: int, parents) -> list[int]:
    return [target, len(parents), *parents]


def run_data_owner(config: SessionConfig, index: int, table: DataTable, endpoint) -> PGStructure:
    """Serve count requests from the CSPs, then return the agreed PG."""
    pid = config.do_ids[index]
    link = Link(pid, endpoint, config.session_id, config.timeout)
    try:
        endpoint.start()
        handshake(link, config, pid, config.csp_ids)
        schema, beta, p = config.schema, config.n_csps, config.params.p
        table.validate(schema)
        if table.m > schema.m_max:
            raise ProtocolAbort(f"{pid} holds {table.m} rows, more than m_max = {schema.m_max}")
        rng = config.rng_for(pid)
        for csp, s in zip(config.csp_ids, share(table.m, beta, rng, p)):
            link.send(csp, MsgType.INPUT_M_SHARE, encode_elems([s.value]))

        coordinator = config.csp_ids[0]
        while True:
            frame = link.recv(coordinator, (MsgType.COUNT_REQUEST, MsgType.RESULT))
            if frame.mtype == MsgType.RESULT:
                break
            vals = decode_elems(frame.payload)
            if len(vals) < 2 or len(vals) != 2 + vals[1]:
                raise ProtocolAbort("malformed count request")
            target, parents = vals[0], tuple(vals[2:])
            if target != config.target_index:
                raise ProtocolAbort(f"count request for target {target}, session target is {config.target_index}")
            if target in parents or list(parents) != sorted(set(parents)) or any(v >= schema.n for v in parents):
                raise ProtocolAbort(f"invalid candidate set {parents}")
            counts = contingency(table, schema.arities, target, parents).counts
            header = _count_request_header(target, parents)
            for csp, vec in zip(config.csp_ids, share_vector(list(counts), beta, rng, p)):
                link.send(csp, MsgType.COUNT_SHARES, encode_elems(header + vec), frame.round, frame.gadget)

        payloads = [frame.payload] + [link.recv(c, MsgType.RESULT).payload for c in config.csp_ids[1:]]
        if any(pl != payloads[0] for pl in payloads):
            raise ProtocolAbort("CSPs returned different results")
        return PGStructure.from_dict(json.loads(payloads[0]))
    except Exception as exc:
        link.abort(f"{pid}: {exc}", config.csp_ids)
        raise
    finally:
        endpoint.close()


# -- dealer ------------------------------------------------------------------

@dataclass
class DealerReport:
    issued: dict[str, int]
    requests: int
    inbound_types: dict[str, int]


def serve_material(link: Link, csp_ids: list[str], dealer: Dealer, max_length: int | None = None,
                   inbound: Counter | None = None) -> int:
    """Answer lockstep material requests until every CSP sends END."""
    served = 0
    while True:
        frames = [link.recv(c, MsgType.MATERIAL_REQUEST) for c in csp_ids]
        if inbound is not None:
            inbound[MsgType.MATERIAL_REQUEST.name] += len(frames)
        reqs = []
        for f in frames:
            vals = decode_elems(f.payload)
            if len(vals) != 3:
                raise ProtocolAbort("material request must carry kind, count, length")
            reqs.append((f.round, f.gadget, *vals))
        if any(r != reqs[0] for r in reqs):
            raise ProtocolAbort(f"CSPs disagree on material request: {reqs}")
        rnd, gadget, kind, count, length = reqs[0]
        try:
            kind = MaterialKind(kind)
        except ValueError:
            raise ProtocolAbort(f"unknown material kind {kind}") from None
        if kind == MaterialKind.END:
            return served
        if kind == MaterialKind.LOOKUP and (length < 1 or (max_length is not None and length > max_length)):
            raise ProtocolAbort(f"lookup length {length} not allowed")
        batch = dealer.generate(kind, count, length)
        for i, c in enumerate(csp_ids):
            link.send(c, MsgType.MATERIAL, encode_material(kind, batch[i]), rnd, gadget)
        served += 1


def run_dealer(config: SessionConfig, endpoint) -> DealerReport:
    link = Link(DEALER, endpoint, config.session_id, config.timeout)
    try:
        endpoint.start()
        handshake(link, config, DEALER, config.csp_ids)
        inbound = Counter({MsgType.SETUP.name: config.n_csps, MsgType.SETUP_ACK.name: config.n_csps})
        dealer = Dealer(config.params, config.n_csps, config.rng_for(DEALER))
        served = serve_material(link, config.csp_ids, dealer, config.schema.m_max + 1, inbound)
        return DealerReport({k.name: v for k, v in dealer.issued.items() if k != MaterialKind.END},
                            served, dict(inbound))
    except Exception as exc:
        link.abort(f"{DEALER}: {exc}", config.csp_ids)
        raise
    finally:
        endpoint.close()


# -- CSP ---------------------------------------------------------------------

@dataclass(frozen=True)
class Shared:
    """This CSP's share of a secret doubled score."""

    value: int


class SecureBackend(ScoringBackend):
    """Scores computed on shares; realizes the traversal's scoring contract."""

    def __init__(self, rt: mpc.Runtime, config: SessionConfig):
        self.rt = rt
        self.config = config
        self.link = rt.link
        self.p = config.params.p
        self.f = config.params.f
        self.n_vars = config.schema.n
        self.target = config.target_index
        self.arities = config.schema.arities
        self.r_i = self.arities[self.target]
        log_table = build_log_table(config.schema.m_max, self.f)
        self.table = list(log_table.entries)
        self.coordinator = rt.index == 0
        self.t_m: int | None = None
        # scores and bounds lie in [0, max_score2], so differences need this many bits
        self.cmp_bits = max_score2(config.schema, self.target, log_table).bit_length()

    def setup(self) -> None:
        self.rt.context = SETUP_CONTEXT
        m_share = sum(decode_elems(self.link.recv(d, MsgType.INPUT_M_SHARE).payload)[0]
                      for d in self.config.do_ids) % self.p
        (self.t_m,) = mpc.lookup(self.rt, [m_share], self.table)

    def _counts(self, parents) -> list[int]:
        rt = self.rt
        rt.next_gadget()
        header = _count_request_header(self.target, parents)
        if self.coordinator:
            for d in self.config.do_ids:
                self.link.send(d, MsgType.COUNT_REQUEST, encode_elems(header), rt.round, rt.gadget)
        size = q_of(parents, self.arities) * self.r_i
        total = [0] * size
        for d in self.config.do_ids:
            vals = decode_elems(self.link.recv(d, MsgType.COUNT_SHARES, rt.round, rt.gadget).payload)
            if vals[:len(header)] != header or len(vals) != len(header) + size:
                raise ProtocolAbort(f"{d} answered a different count request")
            total = [a + b for a, b in zip(total, vals[len(header):])]
        return [v % self.p for v in total]

    def _entropy2(self, parents) -> Shared:
        rt, p, r = self.rt, self.p, self.r_i
        counts = self._counts(parents)
        q = len(counts) // r
        cell_totals = [sum(counts[j * r:(j + 1) * r]) % p for j in range(q)]
        logs = mpc.lookup(rt, cell_totals + counts, self.table)
        log_cells, log_counts = logs[:q], logs[q:]
        diffs = [(log_cells[jk // r] - log_counts[jk]) % p for jk in range(q * r)]
        terms = mpc.mul(rt, counts, diffs)
        return Shared(2 * sum(terms) % p)

    def entropy2(self, parents) -> Shared:
        self.rt.context = candidate_context(parents)
        return self._entropy2(tuple(parents))

    def entropy2_full(self) -> Shared:
        self.rt.context = FULL_CONTEXT
        return self._entropy2(self.full_set)

    def nc2(self, parents) -> Shared:
        return Shared(q_of(parents, self.arities) * (self.r_i - 1) * self.t_m % self.p)

    def add(self, a: Shared, b: Shared) -> Shared:
        return Shared((a.value + b.value) % self.p)

    def _share_of(self, x) -> int:
        return x.value if isinstance(x, Shared) else self.rt.const(x)

    def lt(self, a, b) -> bool:
        return bool(mpc.cmp_open_lt(self.rt, self._share_of(a), self._share_of(b), self.cmp_bits))

    def reveal(self, h: Shared) -> int:
        return signed_lift(mpc.open_value(self.rt, h.value, LeakageClass.INSERTED_RECORD), self.p)

    def end_layer(self, layer: int, next_sets, records) -> None:
        """Cross-check the public control flow with the other CSPs."""
        h = hashlib.sha256(repr((layer, list(next_sets), [(r.parents, r.score2) for r in records])).encode())
        digest = h.digest()
        rt = self.rt
        for peer in rt.others:
            self.link.send(peer, MsgType.LAYER_DIGEST, digest, rt.round, layer)
        for peer in rt.others:
            if self.link.recv(peer, MsgType.LAYER_DIGEST, rt.round, layer).payload != digest:
                raise ProtocolAbort(f"traversal diverged from {peer} at layer {layer}")


@dataclass
class CspOutcome:
    pg: PGStructure
    transcript: Transcript
    trace: list
    material: dict[str, int]
    timings: dict[str, float]


def run_csp(config: SessionConfig, index: int, endpoint) -> CspOutcome:
    pid = config.csp_ids[index]
    link = Link(pid, endpoint, config.session_id, config.timeout)
    peers = config.peers_of(pid)
    try:
        endpoint.start()
        t0 = time.perf_counter()
        handshake(link, config, pid, peers)
        rt = mpc.Runtime(index, config.n_csps, config.params, link, config.csp_ids, DEALER)
        backend = SecureBackend(rt, config)
        backend.setup()
        t1 = time.perf_counter()
        trace: list = []
        pg = maximal_parent_sets(backend, config.l_max, config.mode, config.empty_set_penalty, trace)
        t2 = time.perf_counter()
        rt.end_session()
        result = pg.to_json().encode()
        for d in config.do_ids:
            link.send(d, MsgType.RESULT, result)
        timings = {"setup": t1 - t0, "traversal": t2 - t1, "result": time.perf_counter() - t2}
        return CspOutcome(pg, rt.transcript, trace, {k.name: v for k, v in rt.consumed.items()}, timings)
    except Exception as exc:
        link.abort(f"{pid}: {exc}", peers)
        raise
    finally:
        endpoint.close()


# -- in-process driver -------------------------------------------------------

class SessionError(RuntimeError):
    def __init__(self, errors: dict[str, BaseException]):
        self.errors = errors
        root = next((e for e in errors.values() if "peer aborted" not in str(e)), next(iter(errors.values())))
        self.root = root
        super().__init__(f"session aborted: {root}")


@dataclass
class SessionResult:
    pg: PGStructure
    csp: list[CspOutcome]
    owner_pgs: list[PGStructure]
    dealer: DealerReport
    timings: dict[str, float] = field(default_factory=dict)

    @property
    def transcript(self) -> Transcript:
        return self.csp[0].transcript


def _run_parties(jobs: dict[str, callable], timeout: float) -> dict:
    results: dict = {}
    errors: dict = {}

    def wrap(pid, fn):
        try:
            results[pid] = fn()
        except BaseException as exc:  # noqa: BLE001 - collected and re-raised below
            errors[pid] = exc

    threads = [threading.Thread(target=wrap, args=(pid, fn), name=pid, daemon=True) for pid, fn in jobs.items()]
    for t in threads:
        t.start()
    deadline = time.monotonic() + timeout
    for t in threads:
        t.join(max(0.0, deadline - time.monotonic()))
    stuck = [t.name for t in threads if t.is_alive()]
    if stuck:
        errors.setdefault(stuck[0], TimeoutError(f"parties still running: {stuck}"))
    if errors:
        raise SessionError(errors)
    return results


def run_inprocess(config: SessionConfig, tables: list[DataTable], hub: LocalHub | None = None) -> SessionResult:
    """All parties as threads over the in-process transport."""
    if len(tables) != config.n_owners:
        raise ConfigError(f"{len(tables)} tables for {config.n_owners} owners")
    hub = hub or LocalHub()
    jobs = {DEALER: lambda: run_dealer(config, hub.endpoint(DEALER))}
    for k, pid in enumerate(config.csp_ids):
        jobs[pid] = lambda k=k, pid=pid: run_csp(config, k, hub.endpoint(pid))
    for ell, pid in enumerate(config.do_ids):
        jobs[pid] = lambda ell=ell, pid=pid: run_data_owner(config, ell, tables[ell], hub.endpoint(pid))
    t0 = time.perf_counter()
    res = _run_parties(jobs, 4 * config.timeout)
    csp = [res[c] for c in config.csp_ids]
    return SessionResult(csp[0].pg, csp, [res[d] for d in config.do_ids], res[DEALER],
                         {"wall": time.perf_counter() - t0, **csp[0].timings})


def run_gadgets(beta: int, fn, params: FieldParams = DEFAULT_PARAMS, seed=None, timeout: float = 120.0) -> list:
    """Run ``fn(runtime)`` at each of ``beta`` CSPs with a live dealer; returns per-party results."""
    hub = LocalHub()
    sid = bytes(16)
    csp_ids = [f"csp{k}" for k in range(beta)]
    dealer = Dealer(params, beta, FieldRNG(seed, params.p))

    def dealer_job():
        return serve_material(Link(DEALER, hub.endpoint(DEALER), sid, timeout), csp_ids, dealer)

    def csp_job(k):
        link = Link(csp_ids[k], hub.endpoint(csp_ids[k]), sid, timeout)
        rt = mpc.Runtime(k, beta, params, link, csp_ids)
        try:
            out = fn(rt)
            rt.end_session()
        except Exception as exc:
            link.abort(f"{csp_ids[k]}: {exc}", [DEALER, *rt.others])
            raise
        return out, rt

    jobs = {DEALER: dealer_job, **{c: (lambda k=k: csp_job(k)) for k, c in enumerate(csp_ids)}}
    res = _run_parties(jobs, timeout)
    return [res[c] for c in csp_ids]

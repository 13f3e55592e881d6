"""Simulated disaggregated storage fabric.

Virtual devices expose sequential-write bandwidth and real byte storage;
they can be striped into a RAID0-style composition or partitioned into
namespaces that clients treat as exclusive devices. A discrete-event engine
arbitrates concurrent requests: each physical device splits an efficiency-
scaled bandwidth equally among its active requests, recomputing shares at
every arrival and departure (piecewise-constant service).

The efficiency factor is keyed on the number of attached sharers (clients
with an open attachment window on the device), which is what makes bursts
lose peak bandwidth as more concurrent instances are added even when their
requests do not overlap in time.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from typing import Callable, Iterator, Optional

KIND_WRITE = "write"
KIND_READ = "read"

DEFAULT_BW = 2_000_000_000  # 2 GB/s sequential write
DEFAULT_STRIPE = 128 * 1024
DEFAULT_FABRIC_LATENCY = 15e-6

_COMPLETION_EPS = 0.5  # bytes


class FabricError(Exception):
    pass


class CompositionError(FabricError):
    pass


class CapacityError(FabricError):
    pass


class BoundsError(FabricError):
    pass


class EfficiencyCurve:
    """Bandwidth factor per sharer count; non-increasing, e(1) = 1.

    Values beyond the configured points clamp to the last one.
    """

    def __init__(self, values: list[float]):
        if not values:
            raise ValueError("efficiency curve needs at least one point")
        if abs(values[0] - 1.0) > 1e-12:
            raise ValueError("e(1) must be 1.0")
        for a, b in zip(values, values[1:]):
            if b > a + 1e-12:
                raise ValueError("efficiency curve must be non-increasing")
        if any(not 0.0 < v <= 1.0 for v in values):
            raise ValueError("efficiency factors must be in (0, 1]")
        self.values = list(values)

    def __call__(self, n: int) -> float:
        if n <= 0:
            return 1.0
        return self.values[min(n, len(self.values)) - 1]

    def __eq__(self, other) -> bool:
        return isinstance(other, EfficiencyCurve) and self.values == other.values


DEFAULT_CURVE = EfficiencyCurve([1.0, 1.0, 0.97, 0.88, 0.80])


class MemoryBacking:
    """Grow-on-write byte store for simulated device contents."""

    def __init__(self):
        self._data = bytearray()

    def write(self, addr: int, data: bytes) -> None:
        end = addr + len(data)
        if end > len(self._data):
            self._data.extend(b"\x00" * (end - len(self._data)))
        self._data[addr:end] = data

    def read(self, addr: int, length: int) -> bytes:
        end = addr + length
        if end > len(self._data):
            self._data.extend(b"\x00" * (end - len(self._data)))
        return bytes(self._data[addr:end])


class FileBacking:
    """Sparse-file byte store so pipeline checkpoints survive process reruns."""

    def __init__(self, path):
        self._path = path
        if not path.exists():
            path.touch()

    def write(self, addr: int, data: bytes) -> None:
        with open(self._path, "r+b") as fh:
            fh.seek(addr)
            fh.write(data)

    def read(self, addr: int, length: int) -> bytes:
        with open(self._path, "rb") as fh:
            fh.seek(addr)
            data = fh.read(length)
        return data + b"\x00" * (length - len(data))


class VirtualDevice:
    def __init__(
        self,
        device_id: int,
        max_seq_write_bw: float = DEFAULT_BW,
        capacity: int = 40_000_000_000,
        efficiency_curve: EfficiencyCurve | None = None,
        fabric_latency: float = DEFAULT_FABRIC_LATENCY,
        backing=None,
    ):
        self.id = device_id
        self.max_seq_write_bw = float(max_seq_write_bw)
        self.capacity = int(capacity)
        self.efficiency_curve = efficiency_curve or DEFAULT_CURVE
        self.fabric_latency = fabric_latency
        self.backing = backing if backing is not None else MemoryBacking()

    # single-member "composition" interface so namespaces treat both alike
    @property
    def members(self) -> list["VirtualDevice"]:
        return [self]

    def member_bytes(self, start: int, length: int) -> dict[int, int]:
        return {0: length} if length else {}

    def spans(self, start: int, length: int) -> Iterator[tuple["VirtualDevice", int, int]]:
        if length:
            yield (self, start, length)

    def write_data(self, addr: int, data: bytes) -> None:
        self.backing.write(addr, data)

    def read_data(self, addr: int, length: int) -> bytes:
        return self.backing.read(addr, length)


class ComposedDevice:
    """RAID0 striping over equal-capacity members; flat summed address space."""

    def __init__(self, members: list[VirtualDevice], stripe_size: int = DEFAULT_STRIPE):
        if len(members) < 2:
            raise CompositionError("composition needs at least 2 devices")
        caps = {m.capacity for m in members}
        if len(caps) != 1:
            raise CompositionError(f"members must have equal capacity, got {sorted(caps)}")
        if stripe_size <= 0:
            raise CompositionError("stripe size must be positive")
        self._members = list(members)
        self.stripe_size = stripe_size
        self.capacity = sum(m.capacity for m in members)
        self.max_seq_write_bw = sum(m.max_seq_write_bw for m in members)
        self.fabric_latency = max(m.fabric_latency for m in members)

    @property
    def members(self) -> list[VirtualDevice]:
        return self._members

    def locate(self, addr: int) -> tuple[VirtualDevice, int]:
        s = self.stripe_size
        m = len(self._members)
        stripe = addr // s
        member = self._members[stripe % m]
        return member, (stripe // m) * s + addr % s

    def _bytes_before(self, addr: int, j: int) -> int:
        # bytes of [0, addr) landing on member j
        s = self.stripe_size
        cycle = s * len(self._members)
        r = addr % cycle
        return (addr // cycle) * s + min(max(r - j * s, 0), s)

    def member_bytes(self, start: int, length: int) -> dict[int, int]:
        out = {}
        for j in range(len(self._members)):
            n = self._bytes_before(start + length, j) - self._bytes_before(start, j)
            if n:
                out[j] = n
        return out

    def spans(self, start: int, length: int) -> Iterator[tuple[VirtualDevice, int, int]]:
        s = self.stripe_size
        addr = start
        left = length
        while left > 0:
            member, off = self.locate(addr)
            take = min(s - addr % s, left)
            yield (member, off, take)
            addr += take
            left -= take

    def write_data(self, addr: int, data: bytes) -> None:
        pos = 0
        for member, off, take in self.spans(addr, len(data)):
            member.write_data(off, data[pos:pos + take])
            pos += take

    def read_data(self, addr: int, length: int) -> bytes:
        parts = []
        for member, off, take in self.spans(addr, length):
            parts.append(member.read_data(off, take))
        return b"".join(parts)


ATTACH_LOCAL = "local"
ATTACH_FABRIC = "fabric"


@dataclass
class Namespace:
    parent: VirtualDevice | ComposedDevice
    offset: int
    size: int
    attachment: str = ATTACH_LOCAL
    name: str = ""

    def _check(self, start: int, length: int) -> None:
        if start < 0 or length <= 0 or start + length > self.size:
            raise BoundsError(
                f"namespace {self.name or id(self)}: [{start}, {start + length}) "
                f"outside size {self.size}"
            )

    def write_data(self, start: int, data: bytes) -> None:
        self._check(start, len(data))
        self.parent.write_data(self.offset + start, data)

    def read_data(self, start: int, length: int) -> bytes:
        self._check(start, length)
        return self.parent.read_data(self.offset + start, length)


def compose(devices: list[VirtualDevice], stripe_size: int = DEFAULT_STRIPE) -> ComposedDevice:
    return ComposedDevice(devices, stripe_size)


def partition_namespaces(
    parent: VirtualDevice | ComposedDevice,
    sizes: list[int],
    attachment: str = ATTACH_LOCAL,
    names: list[str] | None = None,
) -> list[Namespace]:
    """Carve disjoint consecutive namespaces; error on oversubscription."""
    total = sum(sizes)
    if total > parent.capacity:
        raise CapacityError(f"requested {total} bytes on {parent.capacity}-byte parent")
    out = []
    offset = 0
    for i, size in enumerate(sizes):
        name = names[i] if names else f"ns{i}"
        out.append(Namespace(parent=parent, offset=offset, size=size,
                             attachment=attachment, name=name))
        offset += size
    return out


@dataclass
class IoCompletion:
    request_id: int
    namespace: Namespace
    kind: str
    start: int
    length: int
    issue_time: float
    finish_time: float
    served_bytes: float  # integral of the granted rate over the lifetime

    @property
    def served_bw(self) -> float:
        dt = self.finish_time - self.issue_time
        return self.length / dt if dt > 0 else float("inf")


class _Flow:
    __slots__ = ("device_state", "remaining", "rate", "request", "version", "seq")

    def __init__(self, device_state, remaining, request, seq):
        self.device_state = device_state
        self.remaining = float(remaining)
        self.rate = 0.0
        self.request = request
        self.version = 0
        self.seq = seq


class _Request:
    __slots__ = ("rid", "namespace", "kind", "start", "length", "issue_time",
                 "flows_left", "served", "on_complete")

    def __init__(self, rid, namespace, kind, start, length, issue_time, on_complete):
        self.rid = rid
        self.namespace = namespace
        self.kind = kind
        self.start = start
        self.length = length
        self.issue_time = issue_time
        self.flows_left = 0
        self.served = 0.0
        self.on_complete = on_complete


class _DeviceState:
    __slots__ = ("device", "flows", "sharers", "last_update", "segments")

    def __init__(self, device: VirtualDevice):
        self.device = device
        self.flows: list[_Flow] = []
        self.sharers: dict[int, int] = {}  # client key -> refcount (attachments)
        self.last_update = 0.0
        self.segments: list[tuple[float, float, float]] = []  # (t0, t1, bytes/s)


class FabricEngine:
    """Deterministic event engine: same submissions, same completion times."""

    def __init__(self, stats: bool = True):
        self.now = 0.0
        self._heap: list = []
        self._seq = 0
        self._states: dict[int, _DeviceState] = {}
        self._stats = stats
        self.completions: list[IoCompletion] = []
        self._rid = 0

    # -- device/sharer bookkeeping ------------------------------------------

    def _state(self, device: VirtualDevice) -> _DeviceState:
        st = self._states.get(device.id)
        if st is None:
            st = _DeviceState(device)
            self._states[device.id] = st
        return st

    def attach(self, namespace: Namespace, client: object | None = None) -> None:
        """Open a sharer window on every member device of the namespace parent."""
        key = id(client) if client is not None else id(namespace)
        for member in namespace.parent.members:
            st = self._state(member)
            self._advance_device(st)
            st.sharers[key] = st.sharers.get(key, 0) + 1
            self._recompute(st)

    def detach(self, namespace: Namespace, client: object | None = None) -> None:
        key = id(client) if client is not None else id(namespace)
        for member in namespace.parent.members:
            st = self._state(member)
            if key not in st.sharers:
                continue
            self._advance_device(st)
            st.sharers[key] -= 1
            if st.sharers[key] <= 0:
                del st.sharers[key]
            self._recompute(st)

    # -- event plumbing ------------------------------------------------------

    def schedule(self, when: float, fn: Callable[[], None]) -> None:
        self._seq += 1
        heapq.heappush(self._heap, (when, self._seq, fn))

    def _advance_device(self, st: _DeviceState) -> None:
        dt = self.now - st.last_update
        if dt > 0 and st.flows:
            aggregate = 0.0
            for fl in st.flows:
                moved = fl.rate * dt
                fl.remaining -= moved
                fl.request.served += moved
                aggregate += fl.rate
            if self._stats:
                st.segments.append((st.last_update, self.now, aggregate))
        st.last_update = self.now

    def _recompute(self, st: _DeviceState) -> None:
        n = len(st.flows)
        if n == 0:
            return
        eff = st.device.efficiency_curve(max(1, len(st.sharers)))
        rate = eff * st.device.max_seq_write_bw / n
        for fl in st.flows:
            fl.rate = rate
            fl.version += 1
            finish = self.now + max(0.0, fl.remaining) / rate
            self._seq += 1
            heapq.heappush(self._heap, (finish, self._seq, (fl, fl.version)))

    def submit(
        self,
        namespace: Namespace,
        kind: str,
        start: int,
        length: int,
        when: float | None = None,
        data: bytes | None = None,
        on_complete: Optional[Callable[[IoCompletion], None]] = None,
        client: object | None = None,
    ) -> int:
        """Queue a request; returns its id. Data, if given, is stored at once."""
        namespace._check(start, length)
        if kind not in (KIND_WRITE, KIND_READ):
            raise ValueError(f"unknown request kind {kind!r}")
        if data is not None:
            if len(data) != length:
                raise ValueError("data length mismatch")
            namespace.write_data(start, data)
        issue = self.now if when is None else when
        if issue < self.now:
            raise ValueError("cannot submit in the past")
        self._rid += 1
        req = _Request(self._rid, namespace, kind, start, length, issue, on_complete)
        latency = namespace.parent.fabric_latency if namespace.attachment == ATTACH_FABRIC else 0.0
        key = id(client) if client is not None else None
        self.schedule(issue + latency, lambda: self._start_request(req, key))
        return req.rid

    def _start_request(self, req: _Request, client_key) -> None:
        parent = req.namespace.parent
        per_member = parent.member_bytes(req.namespace.offset + req.start, req.length)
        members = parent.members
        req.flows_left = len(per_member)
        for j, nbytes in per_member.items():
            st = self._state(members[j])
            self._advance_device(st)
            if client_key is not None and client_key not in st.sharers:
                # lazy sharer window: opens on first traffic, closes on detach
                st.sharers[client_key] = 1
            self._seq += 1
            st.flows.append(_Flow(st, nbytes, req, self._seq))
            self._recompute(st)

    def _finish_flow(self, fl: _Flow) -> None:
        st = fl.device_state
        self._advance_device(st)
        fl.request.served += fl.remaining  # signed float-dust correction
        fl.remaining = 0.0
        st.flows.remove(fl)
        self._recompute(st)
        fl.request.flows_left -= 1
        if fl.request.flows_left == 0:
            req = fl.request
            comp = IoCompletion(req.rid, req.namespace, req.kind, req.start,
                                req.length, req.issue_time, self.now, req.served)
            self.completions.append(comp)
            if req.on_complete is not None:
                req.on_complete(comp)

    def run(self, until: float | None = None) -> float:
        """Drain events (optionally up to a time); returns the final clock."""
        while self._heap:
            when, _, payload = self._heap[0]
            if until is not None and when > until:
                break
            heapq.heappop(self._heap)
            self.now = max(self.now, when)
            if isinstance(payload, tuple):
                fl, version = payload
                if fl.version != version or fl not in fl.device_state.flows:
                    continue  # stale prediction
                self._advance_device(fl.device_state)
                if fl.remaining > _COMPLETION_EPS:
                    continue  # rate changed since prediction; a newer event exists
                self._finish_flow(fl)
            else:
                payload()
        if until is not None and self.now < until:
            self.now = until
        return self.now

    # -- generator-based client processes -------------------------------------

    def spawn(self, gen) -> None:
        """Drive a generator yielding ("sleep", dt) or
        ("write"/"read", namespace, start, length[, client]); completions are
        sent back into the generator."""
        self.schedule(self.now, lambda: self._resume(gen, None))

    def _resume(self, gen, value) -> None:
        try:
            cmd = gen.send(value)
        except StopIteration:
            return
        op = cmd[0]
        if op == "sleep":
            self.schedule(self.now + cmd[1], lambda: self._resume(gen, self.now + cmd[1]))
        elif op in (KIND_WRITE, KIND_READ):
            ns, start, length = cmd[1], cmd[2], cmd[3]
            client = cmd[4] if len(cmd) > 4 else None
            self.submit(ns, op, start, length, client=client,
                        on_complete=lambda comp: self._resume(gen, comp))
        else:
            raise ValueError(f"unknown process command {op!r}")

    # -- statistics ------------------------------------------------------------

    def device_segments(self, device: VirtualDevice) -> list[tuple[float, float, float]]:
        st = self._states.get(device.id)
        return list(st.segments) if st else []

    def device_stats(self, device: VirtualDevice, bucket_s: float = 0.01,
                     horizon: float | None = None) -> list[tuple[float, float]]:
        """Aggregate served bandwidth per time bucket: [(bucket_start_s, bytes/s)]."""
        segments = self.device_segments(device)
        end = horizon if horizon is not None else self.now
        n_buckets = max(1, int(end / bucket_s) + 1)
        acc = [0.0] * n_buckets
        for t0, t1, rate in segments:
            b = int(t0 / bucket_s)
            while t0 < t1 and b < n_buckets:
                edge = min(t1, (b + 1) * bucket_s)
                acc[b] += rate * (edge - t0)
                t0 = edge
                b += 1
        return [(i * bucket_s, acc[i] / bucket_s) for i in range(n_buckets)]


def stats_csv(engine: FabricEngine, devices: list[VirtualDevice], bucket_s: float = 0.01) -> str:
    """CSV export: bucket_start_us,device_id,bytes_per_s."""
    lines = ["bucket_start_us,device_id,bytes_per_s"]
    for dev in devices:
        for t, bw in engine.device_stats(dev, bucket_s):
            lines.append(f"{t * 1e6:.0f},{dev.id},{bw:.0f}")
    return "\n".join(lines) + "\n"

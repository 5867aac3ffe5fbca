"""Deterministic execution engine for timed, hierarchical coloured Petri nets.

Model time is an integer tick count. Tokens carry a timestamp and may only be
consumed once the global clock has reached it. Among simultaneously enabled
transitions the one with the lowest ``(priority, declaration index)`` fires
first, and inside a transition tokens are bound in ``(timestamp, insertion
sequence)`` order, so a run is a pure function of how the net was built.

Hierarchy is flattened at construction time: :meth:`Net.merge` instantiates a
subnet under a name prefix and fuses its port places with socket places of the
enclosing net, so both ids refer to the very same :class:`Place` object.

Tokens are stored as plain ``(timestamp, seq, value)`` tuples kept sorted in
each place; this keeps the inner loop cheap enough for the million-firing runs
the converter model needs.
"""

from __future__ import annotations

import bisect
import gc
import heapq
import itertools
from dataclasses import dataclass, is_dataclass
from operator import itemgetter
from typing import Any, Callable, Iterable, NamedTuple, Sequence

__all__ = [
    "UNIT",
    "DEADLOCK",
    "COLORS",
    "KernelError",
    "ConstructionError",
    "DeadlockError",
    "ConflictError",
    "Place",
    "Transition",
    "Binding",
    "FireEvent",
    "Monitor",
    "Net",
]

UNIT = ()

_ts_key = itemgetter(0)


class _Deadlock:
    def __repr__(self) -> str:
        return "DEADLOCK"

    def __bool__(self) -> bool:
        return False


#: Returned by :meth:`Net.advance_clock` when no future enabling exists.
DEADLOCK = _Deadlock()


class KernelError(Exception):
    """A defect in the net or in the way the kernel was driven."""


class ConstructionError(KernelError):
    pass


class ConflictError(KernelError):
    pass


class DeadlockError(KernelError):
    """The net stopped before reaching the requested horizon."""

    def __init__(self, clock: int, until: int, summary: str, records: list):
        super().__init__(f"deadlock at clock {clock} (until={until}); marking: {summary}")
        self.clock = clock
        self.until = until
        self.summary = summary
        self.records = records


def _is_real(v: Any) -> bool:
    return isinstance(v, (float, int)) and not isinstance(v, bool)


def _is_pair(v: Any) -> bool:
    if v.__class__ is tuple and len(v) == 2:
        a, b = v
        if a.__class__ is float and b.__class__ is float:
            return True
    return isinstance(v, tuple) and len(v) == 2 and _is_real(v[0]) and _is_real(v[1])


COLORS: dict[str, Callable[[Any], bool]] = {
    "unit": lambda v: v == UNIT,
    "int": lambda v: isinstance(v, int) and not isinstance(v, bool),
    "real": _is_real,
    "pair": _is_pair,
    "record": lambda v: isinstance(v, tuple) or (is_dataclass(v) and not isinstance(v, type)),
}

# value classes that satisfy a colour without calling its checker
_FAST = {"real": frozenset({float, int}), "int": frozenset({int}), "record": frozenset({tuple})}


class Place:
    __slots__ = ("id", "color", "tokens", "port", "_check", "_fast", "_consumers")

    def __init__(self, pid: str, color: str, port: str | None = None):
        if color not in COLORS:
            raise ConstructionError(f"place {pid!r}: unknown colour {color!r}")
        if port not in (None, "in", "out", "inout"):
            raise ConstructionError(f"place {pid!r}: bad port direction {port!r}")
        self.id = pid
        self.color = color
        self.port = port
        self.tokens: list[tuple[int, int, Any]] = []
        self._check = COLORS[color]
        self._fast = _FAST.get(color, frozenset())
        self._consumers: list[int] = []

    def values(self) -> list:
        return [tok[2] for tok in self.tokens]

    def timed(self) -> list[tuple[Any, int]]:
        return [(tok[2], tok[0]) for tok in self.tokens]

    def __len__(self) -> int:
        return len(self.tokens)

    def __repr__(self) -> str:
        return f"Place({self.id!r}, {self.color!r}, {len(self.tokens)} tokens)"


class Transition:
    __slots__ = (
        "id", "inputs", "reads", "outputs", "guard", "action", "priority",
        "_outmap", "_in", "_rd", "_inp", "_unary", "_out", "_idx",
    )

    def __init__(self, tid, inputs, reads, outputs, action, guard, priority, outmap):
        self.id = tid
        self.inputs: tuple[tuple[str, int], ...] = inputs
        self.reads: tuple[str, ...] = reads
        self.outputs: tuple[str, ...] = outputs
        self.action = action
        self.guard = guard
        self.priority = priority
        # action output id (as written by the author of the subnet) -> Place
        self._outmap: dict[str, str] = outmap
        self._in: list[tuple[Place, int]] = []
        self._rd: list[Place] = []
        self._inp: list[Place] = []
        self._unary = False
        self._out: dict[str, Place] = {}
        self._idx = -1

    def __repr__(self) -> str:
        return f"Transition({self.id!r})"


#: Marker binding: the first token of every input place.
HEADS = object()


class Binding(NamedTuple):
    consumed: tuple[tuple[tuple[int, int, Any], ...], ...]
    read: tuple[tuple[int, int, Any], ...]


class FireEvent(NamedTuple):
    clock: int
    transition: str
    consumed: tuple[tuple[str, tuple], ...]
    read: tuple[tuple[str, Any], ...]
    produced: tuple[tuple[str, Any, int], ...]


@dataclass
class Monitor:
    """Samples a net after each firing that touches one of ``places``.

    ``sample(event)`` may return a record (appended to the run result) or
    ``None``. Place ids may be port aliases; they are resolved on attach.
    ``transitions``, when given, narrows sampling to those transition ids.
    """

    places: Sequence[str]
    sample: Callable[[FireEvent], Any]
    transitions: Sequence[str] | None = None


class Net:
    def __init__(self, name: str = "net"):
        self.name = name
        self.clock = 0
        self.places: dict[str, Place] = {}
        self.transitions: list[Transition] = []
        self.observers: list[Callable[[FireEvent], None]] = []
        self._alias: dict[str, str] = {}
        self._tids: set[str] = set()
        self._seq = 0
        self._order: list[Transition] | None = None
        self._heap: list[int] = []
        self._queued: list[bool] = []

    # -- construction -------------------------------------------------------

    def add_place(self, pid: str, color: str, initial: Iterable = (), port: str | None = None) -> Place:
        """Declare a place. ``initial`` entries are untimed values or :func:`timed` pairs."""
        if pid in self.places or pid in self._alias:
            raise ConstructionError(f"duplicate place id {pid!r}")
        place = Place(pid, color, port)
        self.places[pid] = place
        self._order = None
        for item in initial:
            if isinstance(item, _Timed):
                self.add_token(pid, item.value, item.timestamp)
            else:
                self.add_token(pid, item, 0)
        return place

    def add_transition(
        self,
        tid: str,
        inputs: Iterable[str | tuple[str, int]],
        outputs: Iterable[str],
        action: Callable[..., Iterable[tuple[str, Any, int]]],
        guard: Callable[..., bool] | None = None,
        reads: Iterable[str] = (),
        priority: int = 0,
    ) -> Transition:
        """Declare a transition.

        ``action(now, *values)`` returns ``(output place, value, timestamp)``
        triples. ``values`` lists one entry per input arc (a tuple when the
        arc arity exceeds one) followed by the values seen on read arcs.
        Read arcs stand in for CPN double arcs on constant places.
        """
        if tid in self._tids:
            raise ConstructionError(f"duplicate transition id {tid!r}")
        ins = []
        for arc in inputs:
            pid, arity = (arc, 1) if isinstance(arc, str) else arc
            if arity < 1:
                raise ConstructionError(f"transition {tid!r}: arity must be >= 1")
            ins.append((self._resolve(pid, tid), arity))
        rds = tuple(self._resolve(pid, tid) for pid in reads)
        outmap = {}
        for pid in outputs:
            outmap[pid] = self._resolve(pid, tid)
        t = Transition(tid, tuple(ins), rds, tuple(dict.fromkeys(outmap.values())),
                       action, guard, priority, outmap)
        self.transitions.append(t)
        self._tids.add(tid)
        self._order = None
        return t

    def alias(self, name: str, target: str) -> None:
        if name in self.places or name in self._alias:
            raise ConstructionError(f"duplicate place id {name!r}")
        self._alias[name] = self._resolve(target)

    def merge(self, sub: "Net", name: str, sockets: dict[str, str] | None = None) -> None:
        """Instantiate ``sub`` as the submodule ``name``.

        Port places listed in ``sockets`` are fused with the named socket place
        of this net; every other place becomes ``name.<id>``. The subnet is
        consumed: its tokens move into this net.
        """
        sockets = dict(sockets or {})
        mapping: dict[str, str] = {}
        for pid, place in sub.places.items():
            if pid in sockets:
                if place.port is None:
                    raise ConstructionError(f"{name}.{pid} is not a port place")
                target = self.place(sockets.pop(pid))
                if target.color != place.color:
                    raise ConstructionError(
                        f"port {name}.{pid} ({place.color}) cannot fuse with socket "
                        f"{target.id} ({target.color})")
                mapping[pid] = target.id
                self._alias[f"{name}.{pid}"] = target.id
            else:
                new = self.add_place(f"{name}.{pid}", place.color, port=None)
                mapping[pid] = new.id
        if sockets:
            raise ConstructionError(f"{name}: no such port(s) {sorted(sockets)}")
        for a, target in sub._alias.items():
            self._alias[f"{name}.{a}"] = mapping[target]
        # re-sequence tokens in the subnet's own order
        pending = sorted(
            ((tok[0], tok[1], mapping[p.id], tok[2]) for p in sub.places.values() for tok in p.tokens),
            key=lambda x: (x[0], x[1]),
        )
        for ts, _, pid, value in pending:
            self.add_token(pid, value, ts)
        for t in sub.transitions:
            tid = f"{name}.{t.id}"
            if tid in self._tids:
                raise ConstructionError(f"duplicate transition id {tid!r}")
            nt = Transition(
                tid,
                tuple((mapping[p], a) for p, a in t.inputs),
                tuple(mapping[p] for p in t.reads),
                tuple(mapping[p] for p in t.outputs),
                t.action, t.guard, t.priority,
                {k: mapping[v] for k, v in t._outmap.items()},
            )
            self.transitions.append(nt)
            self._tids.add(tid)
        self._order = None

    def _resolve(self, pid: str, who: str | None = None) -> str:
        pid = self._alias.get(pid, pid)
        if pid not in self.places:
            where = f" (transition {who!r})" if who else ""
            raise ConstructionError(f"unknown place {pid!r}{where}")
        return pid

    def place(self, pid: str) -> Place:
        return self.places[self._resolve(pid)]

    def marking(self, pid: str) -> list:
        return self.place(pid).values()

    def add_token(self, pid: str, value: Any, timestamp: int = 0) -> None:
        place = self.place(pid)
        if not place._check(value):
            raise ConstructionError(f"place {place.id!r}: value {value!r} does not match colour {place.color!r}")
        if not isinstance(timestamp, int) or timestamp < 0:
            raise ConstructionError(f"place {place.id!r}: timestamp must be a non-negative int, got {timestamp!r}")
        self._insert(place, value, timestamp)
        if self._order is not None:
            for i in place._consumers:
                self._push(i)

    # -- compiled view --------------------------------------------------------

    def _compile(self) -> list[Transition]:
        if self._order is not None:
            return self._order
        order = sorted(
            range(len(self.transitions)),
            key=lambda i: (self.transitions[i].priority, i),
        )
        self._order = [self.transitions[i] for i in order]
        for p in self.places.values():
            p._consumers = []
        for idx, t in enumerate(self._order):
            t._in = [(self.places[p], a) for p, a in t.inputs]
            t._rd = [self.places[p] for p in t.reads]
            t._inp = [p for p, _ in t._in]
            t._unary = all(a == 1 for _, a in t._in)
            t._out = {k: self.places[v] for k, v in t._outmap.items()}
            t._idx = idx
            for p in {*(p for p, _ in t.inputs), *t.reads}:
                self.places[p]._consumers.append(idx)
        self._watched = [p for p in self.places.values() if p._consumers]
        self._heap = list(range(len(self._order)))
        self._queued = [True] * len(self._order)
        return self._order

    def _push(self, i: int) -> None:
        if not self._queued[i]:
            self._queued[i] = True
            heapq.heappush(self._heap, i)

    def _invalidate(self) -> None:
        order = self._compile()
        self._heap[:] = range(len(order))
        self._queued[:] = [True] * len(order)

    # -- enabling ---------------------------------------------------------------

    @staticmethod
    def _values(t: Transition, consumed, read) -> list:
        vals = [toks[0][2] if len(toks) == 1 else tuple(tok[2] for tok in toks) for toks in consumed]
        vals.extend(tok[2] for tok in read)
        return vals

    def _bind(self, t: Transition, clock: int):
        """First enabled binding of ``t`` at ``clock`` as (Binding, values), or None.

        The binding is ``HEADS`` when it is simply the first token of every
        input place, which is the common case and skips building tuples.
        """
        if t._unary:
            vals = []
            for place in t._inp:
                toks = place.tokens
                if not toks or toks[0][0] > clock:
                    return None
                vals.append(toks[0][2])
            for place in t._rd:
                toks = place.tokens
                if not toks or toks[0][0] > clock:
                    return None
                vals.append(toks[0][2])
            if t.guard is None or t.guard(*vals):
                return HEADS, vals
            return self._search(t, clock)
        consumed = []
        for place, arity in t._in:
            toks = place.tokens
            if len(toks) < arity or toks[arity - 1][0] > clock:
                return None
            consumed.append(tuple(toks[:arity]))
        read = []
        for place in t._rd:
            toks = place.tokens
            if not toks or toks[0][0] > clock:
                return None
            read.append(toks[0])
        vals = self._values(t, consumed, read)
        if t.guard is None or t.guard(*vals):
            return Binding(tuple(consumed), tuple(read)), vals
        return self._search(t, clock)

    def _search(self, t: Transition, clock: int):
        # the canonical binding failed the guard: try the rest in lexicographic order
        choices = []
        for place, arity in t._in:
            ready = place.tokens[: bisect.bisect_right(place.tokens, clock, key=_ts_key)]
            choices.append(itertools.combinations(ready, arity))
        for place in t._rd:
            choices.append(place.tokens[: bisect.bisect_right(place.tokens, clock, key=_ts_key)])
        n_in = len(t._in)
        for combo in itertools.product(*choices):
            consumed, read = combo[:n_in], combo[n_in:]
            vals = self._values(t, consumed, read)
            if t.guard(*vals):
                return Binding(tuple(consumed), tuple(read)), vals
        return None

    def enabled_transitions(self) -> list[tuple[str, Binding]]:
        """Every enabled transition with its chosen binding, in firing order."""
        out = []
        for t in self._compile():
            b = self._bind(t, self.clock)
            if b is not None:
                out.append((t.id, self._materialize(t, b[0])))
        return out

    @staticmethod
    def _materialize(t: Transition, binding) -> Binding:
        if binding is not HEADS:
            return binding
        return Binding(tuple((p.tokens[0],) for p in t._inp), tuple(p.tokens[0] for p in t._rd))

    def _first_enabled(self):
        order = self._compile()
        heap, queued, clock = self._heap, self._queued, self.clock
        while heap:
            i = heap[0]
            b = self._bind(order[i], clock)
            if b is not None:
                return order[i], b
            heapq.heappop(heap)
            queued[i] = False
        return None

    # -- firing -----------------------------------------------------------------

    def _insert(self, place: Place, value: Any, ts: int) -> None:
        self._seq += 1
        toks = place.tokens
        tok = (ts, self._seq, value)
        if not toks or toks[-1][0] <= ts:
            toks.append(tok)
        else:
            # seq numbers are unique, so the value is never compared
            toks.insert(bisect.bisect_right(toks, ts, key=_ts_key), tok)

    @staticmethod
    def _remove(place: Place, tok) -> None:
        toks = place.tokens
        if toks and toks[0] is tok:
            del toks[0]
            return
        i = bisect.bisect_left(toks, (tok[0], tok[1]))
        if i < len(toks) and toks[i][1] == tok[1]:
            del toks[i]
            return
        raise KernelError(f"token {tok[:2]} missing from {place.id!r}")

    def _do_fire(self, t: Transition, binding, vals, want_event: bool):
        clock = self.clock
        if binding is HEADS:
            for place in t._inp:
                del place.tokens[0]
        else:
            for (place, _), toks in zip(t._in, binding.consumed):
                for tok in toks:
                    self._remove(place, tok)
        produced = t.action(clock, *vals)
        out = t._out
        queued, heap = self._queued, self._heap
        record = [] if want_event else None
        seq = self._seq
        for pid, value, ts in produced:
            try:
                place = out[pid]
            except KeyError:
                raise KernelError(f"transition {t.id!r} produced to undeclared place {pid!r}") from None
            if value.__class__ not in place._fast and not place._check(value):
                raise KernelError(f"transition {t.id!r}: value {value!r} does not match colour of {place.id!r}")
            if ts.__class__ is not int or ts < clock:
                raise KernelError(f"transition {t.id!r}: bad timestamp {ts!r} at clock {clock}")
            seq += 1
            toks = place.tokens
            if not toks or toks[-1][0] <= ts:
                toks.append((ts, seq, value))
            else:
                toks.insert(bisect.bisect_right(toks, ts, key=_ts_key), (ts, seq, value))
            for i in place._consumers:
                if not queued[i]:
                    queued[i] = True
                    heapq.heappush(heap, i)
            if want_event:
                record.append((place.id, value, ts))
        self._seq = seq
        if not want_event:
            return None
        if binding is HEADS:
            n = len(t._inp)
            return FireEvent(
                clock,
                t.id,
                tuple((p.id, (v,)) for p, v in zip(t._inp, vals)),
                tuple((p.id, v) for p, v in zip(t._rd, vals[n:])),
                tuple(record),
            )
        return FireEvent(
            clock,
            t.id,
            tuple((place.id, tuple(tok[2] for tok in toks)) for (place, _), toks in zip(t._in, binding.consumed)),
            tuple((place.id, tok[2]) for place, tok in zip(t._rd, binding.read)),
            tuple(record),
        )

    def fire(self, tid: str, binding: Binding) -> FireEvent:
        """Fire ``tid`` in ``binding``; the binding must be enabled right now."""
        order = self._compile()
        t = next((t for t in order if t.id == tid), None)
        if t is None:
            raise KernelError(f"unknown transition {tid!r}")
        if len(binding.consumed) != len(t._in) or len(binding.read) != len(t._rd):
            raise KernelError(f"binding shape does not match transition {tid!r}")
        for (place, arity), toks in zip(t._in, binding.consumed):
            if len(toks) != arity or len({tok[1] for tok in toks}) != arity:
                raise KernelError(f"transition {tid!r}: wrong token count on {place.id!r}")
            self._check_present(tid, place, toks)
        for place, tok in zip(t._rd, binding.read):
            self._check_present(tid, place, (tok,))
        vals = self._values(t, binding.consumed, binding.read)
        if t.guard is not None and not t.guard(*vals):
            raise KernelError(f"transition {tid!r} is not enabled: guard is false")
        event = self._do_fire(t, binding, vals, True)
        self._invalidate()
        self._notify(event)
        return event

    def _check_present(self, tid: str, place: Place, toks) -> None:
        seqs = {tok[1] for tok in place.tokens}
        for tok in toks:
            if tok[1] not in seqs:
                raise KernelError(f"transition {tid!r} is not enabled: token missing on {place.id!r}")
            if tok[0] > self.clock:
                raise KernelError(
                    f"transition {tid!r} is not enabled: token on {place.id!r} "
                    f"stamped {tok[0]} > clock {self.clock}")

    def _notify(self, event: FireEvent) -> None:
        for obs in self.observers:
            obs(event)

    # -- time -------------------------------------------------------------------

    def advance_clock(self) -> int | _Deadlock:
        """Move the clock to the earliest time at which something becomes enabled."""
        if self._first_enabled() is not None:
            raise KernelError(f"advance_clock called at {self.clock} while a transition is enabled")
        nxt = self._next_enabling()
        if nxt is DEADLOCK:
            return DEADLOCK
        self.clock = nxt
        return nxt

    def _next_enabling(self):
        order = self._compile()
        t = self.clock
        while True:
            nxt = None
            ripe: list[Place] = []
            for p in self._watched:
                toks = p.tokens
                if not toks or toks[-1][0] <= t:
                    continue
                i = bisect.bisect_right(toks, t, key=_ts_key)
                ts = toks[i][0]
                if nxt is None or ts < nxt:
                    nxt, ripe = ts, [p]
                elif ts == nxt:
                    ripe.append(p)
            if nxt is None:
                return DEADLOCK
            # only transitions next to a maturing token can change status
            cand = sorted({i for p in ripe for i in p._consumers})
            if any(self._bind(order[i], nxt) is not None for i in cand):
                for i in cand:
                    self._push(i)
                return nxt
            t = nxt

    # -- running ----------------------------------------------------------------

    def run(
        self,
        until: int,
        monitors: Sequence[Monitor] = (),
        check_conflicts: bool = False,
        max_steps: int | None = None,
    ) -> list:
        """Fire and advance until the next enabling lies beyond ``until``.

        Returns the records produced by ``monitors``. Raises
        :class:`DeadlockError` if the net dies while the clock is still below
        ``until``.
        """
        if until < self.clock:
            raise KernelError(f"until={until} is before the current clock {self.clock}")
        order = self._compile()
        watch: dict[int, list[Monitor]] = {}
        for m in monitors:
            ids = {self._resolve(p) for p in m.places}
            only = None if m.transitions is None else set(m.transitions)
            for i, t in enumerate(order):
                if only is not None and t.id not in only:
                    continue
                if ids.intersection(t.outputs) or ids.intersection(p for p, _ in t.inputs) or ids.intersection(t.reads):
                    watch.setdefault(i, []).append(m)
        # the loop allocates many short-lived tuples and no cycles; pausing the
        # cyclic collector avoids repeated scans of a large caller heap
        paused = gc.isenabled()
        gc.disable()
        try:
            return self._loop(order, until, watch, check_conflicts, max_steps)
        finally:
            if paused:
                gc.enable()

    def _loop(self, order, until, watch, check_conflicts, max_steps) -> list:
        observers = self.observers
        records: list = []
        steps = 0
        heap, queued, bind = self._heap, self._queued, self._bind
        while True:
            found = None
            clock = self.clock
            while heap:
                i = heap[0]
                b = bind(order[i], clock)
                if b is not None:
                    found = order[i], b
                    break
                heapq.heappop(heap)
                queued[i] = False
            if found is None:
                nxt = self._next_enabling()
                if nxt is DEADLOCK:
                    if self.clock < until:
                        raise DeadlockError(self.clock, until, self.summary(), records)
                    return records
                if nxt > until:
                    return records
                self.clock = nxt
                continue
            t, (binding, vals) = found
            if check_conflicts:
                self._check_conflicts()
            mons = watch.get(t._idx)
            event = self._do_fire(t, binding, vals, bool(mons or observers))
            if event is not None:
                for obs in observers:
                    obs(event)
                if mons:
                    for m in mons:
                        rec = m.sample(event)
                        if rec is not None:
                            records.append(rec)
            steps += 1
            if max_steps is not None and steps >= max_steps:
                return records

    def _check_conflicts(self) -> None:
        taken: dict[int, str] = {}
        for tid, b in self.enabled_transitions():
            for toks in b.consumed:
                for tok in toks:
                    other = taken.setdefault(tok[1], tid)
                    if other != tid:
                        raise ConflictError(
                            f"transitions {other!r} and {tid!r} compete for the same token at clock {self.clock}")

    def summary(self) -> str:
        parts = []
        for pid, p in self.places.items():
            if p.tokens:
                ts = [tok[0] for tok in p.tokens]
                parts.append(f"{pid}: {len(ts)} @[{min(ts)}..{max(ts)}]")
        return "; ".join(parts) or "empty"


class _Timed(NamedTuple):
    value: Any
    timestamp: int


def timed(value: Any, timestamp: int) -> _Timed:
    """Mark an initial-marking entry with an explicit timestamp."""
    return _Timed(value, timestamp)


__all__.append("timed")

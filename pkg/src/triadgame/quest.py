"""Directed zone graph forming the multi-staged quest state machine.

A group advances when ANY of its members enters a successor zone of the
group's current stage; entries into non-successor zones never advance.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .chronos import Millis
from .errors import (
    DanglingEdge,
    NonEnterEvent,
    NotAMember,
    UnknownGroup,
    UnknownStart,
    UnreachableStage,
)
from .stquery import EventKind, ZoneEvent
from .triad_store import TriadStore


@dataclass(frozen=True)
class QuestGraph:
    stages: frozenset[str]
    edges: frozenset[tuple[str, str]]
    start: str

    def successors(self, stage: str) -> set[str]:
        return {to for frm, to in self.edges if frm == stage}


def validate_graph(g: QuestGraph) -> None:
    """Raise when an edge dangles, the start is unknown, or a stage is unreachable."""
    if g.start not in g.stages:
        raise UnknownStart(f"start stage {g.start!r} not declared")
    for frm, to in g.edges:
        if frm not in g.stages or to not in g.stages:
            raise DanglingEdge(f"edge {frm!r} -> {to!r} references an undeclared stage")
    reached = {g.start}
    frontier = [g.start]
    while frontier:
        here = frontier.pop()
        for nxt in g.successors(here):
            if nxt not in reached:
                reached.add(nxt)
                frontier.append(nxt)
    missing = g.stages - reached
    if missing:
        raise UnreachableStage(f"stages unreachable from start: {sorted(missing)}")


def load_quest_graph(source: str | Path | dict) -> QuestGraph:
    """Load ``{"start":..., "stages":[...], "edges":[[from,to],...]}``."""
    if isinstance(source, (str, Path)):
        doc = json.loads(Path(source).read_text(encoding="utf-8"))
    else:
        doc = source
    g = QuestGraph(
        stages=frozenset(doc["stages"]),
        edges=frozenset((frm, to) for frm, to in doc["edges"]),
        start=doc["start"],
    )
    validate_graph(g)
    return g


def quest_graph_to_dict(g: QuestGraph) -> dict:
    return {
        "start": g.start,
        "stages": sorted(g.stages),
        "edges": sorted([frm, to] for frm, to in g.edges),
    }


@dataclass(frozen=True)
class GroupProgress:
    """A group's position in the quest: current stage plus visit history."""

    group: str
    current: str
    history: tuple[tuple[str, Millis], ...]


def advance(
    progress: GroupProgress,
    event: ZoneEvent,
    g: QuestGraph,
    store: TriadStore,
) -> GroupProgress:
    """Apply one zone ENTER event; returns updated progress, or the same
    progress unchanged when the entered zone is not a successor of the
    current stage."""
    if event.kind is not EventKind.ENTER:
        raise NonEnterEvent(f"quest advancement only consumes ENTER events, got {event.kind}")
    if event.object not in store.members(progress.group):
        raise NotAMember(f"{event.object!r} is not a member of {progress.group!r}")
    if (progress.current, event.zone) not in g.edges:
        return progress
    return GroupProgress(
        group=progress.group,
        current=event.zone,
        history=progress.history + ((event.zone, event.time),),
    )


class QuestTracker:
    """Tracks every group's progress and mirrors it into the store's WHERE.

    On each advance the group object's zone binding is updated, so
    ``TriadStore.locate`` answers with the group's current quest stage.
    """

    def __init__(self, store: TriadStore, graph: QuestGraph) -> None:
        validate_graph(graph)
        self.store = store
        self.graph = graph
        self._progress: dict[str, GroupProgress] = {}

    def init_group(self, group: str, at: Millis = 0) -> GroupProgress:
        progress = GroupProgress(
            group=group,
            current=self.graph.start,
            history=((self.graph.start, at),),
        )
        self._progress[group] = progress
        self.store.bind_zone(group, self.graph.start)
        return progress

    def groups(self) -> list[str]:
        return sorted(self._progress)

    def progress(self, group: str) -> GroupProgress:
        try:
            return self._progress[group]
        except KeyError:
            raise UnknownGroup(f"no quest progress for group {group!r}") from None

    def current_stage(self, group: str) -> str:
        return self.progress(group).current

    def on_event(self, event: ZoneEvent) -> list[tuple[str, str]]:
        """Feed one zone event; returns (group, new_stage) for each advance.

        Only ENTER events by a member of a tracked group can advance it;
        everything else is a no-op.
        """
        if event.kind is not EventKind.ENTER:
            return []
        advanced = []
        for group in sorted(self._progress):
            if event.object not in self.store.members(group):
                continue
            before = self._progress[group]
            after = advance(before, event, self.graph, self.store)
            if after is not before:
                self._progress[group] = after
                self.store.bind_zone(group, after.current)
                advanced.append((group, after.current))
        return advanced

    def apply_events(self, events: list[ZoneEvent]) -> list[tuple[str, str]]:
        """Apply a batch in deterministic order: by time, ties by object id."""
        advanced = []
        for event in sorted(events, key=lambda e: (e.time, e.object, e.zone)):
            advanced.extend(self.on_event(event))
        return advanced

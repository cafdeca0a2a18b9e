"""Exception hierarchy shared by all subsystems.

Every error carries a stable machine-readable ``code`` used by the CLI and
the wire protocol when reporting failures.
"""

from __future__ import annotations


class GameModelError(Exception):
    """Base class for all domain errors."""

    code = "error"


class DuplicateId(GameModelError):
    code = "duplicate_id"


class UnknownParent(GameModelError):
    code = "unknown_parent"


class CycleDetected(GameModelError):
    code = "cycle_detected"


class UnknownObject(GameModelError):
    code = "unknown_object"


class NotAGroup(GameModelError):
    code = "not_a_group"


class StaleSequence(GameModelError):
    code = "stale_sequence"


class InvalidZone(GameModelError):
    code = "invalid_zone"


class UnknownZone(GameModelError):
    code = "unknown_zone"


class DegenerateInterval(GameModelError):
    code = "degenerate_interval"


class InvalidInterval(GameModelError):
    code = "invalid_interval"


class EmptyResult(GameModelError):
    code = "empty_result"


class NoFixBefore(GameModelError):
    code = "no_fix_before"


class DanglingEdge(GameModelError):
    code = "dangling_edge"


class UnreachableStage(GameModelError):
    code = "unreachable_stage"


class UnknownStart(GameModelError):
    code = "unknown_start"


class NotAMember(GameModelError):
    code = "not_a_member"


class NonEnterEvent(GameModelError):
    code = "non_enter_event"


class UnknownGroup(GameModelError):
    code = "unknown_group"


class InvalidHandshake(GameModelError):
    code = "invalid_handshake"


class MalformedMessage(GameModelError):
    code = "malformed_message"


class ProtocolError(GameModelError):
    code = "protocol_error"


class InvalidScenario(GameModelError):
    code = "invalid_scenario"

"""A set CRDT decomposed over an ordered key-value store."""

from bigset.clock import ContractError, Dot, LogicalClock
from bigset.merge_stream import MergedStream, merge_streams, replica_stream
from bigset.orswot_ref import Orswot, orswot_merge, orswot_value
from bigset.replica import Delta, Replica

__all__ = [
    "ContractError",
    "Delta",
    "Dot",
    "LogicalClock",
    "MergedStream",
    "Orswot",
    "Replica",
    "merge_streams",
    "orswot_merge",
    "orswot_value",
    "replica_stream",
]

from bigset.store.keys import (
    BigsetKey,
    Kind,
    clock_key,
    decode_key,
    element_key,
    element_prefix,
    elements_start,
    encode_key,
    prefix_end,
    set_prefix,
    tombstone_key,
)
from bigset.store.log import LogStore
from bigset.store.memory import (
    RECORD_OVERHEAD,
    CompactionFilter,
    CompactionReport,
    Decision,
    MemoryStore,
    StoreError,
    StoreMetrics,
    WriteBatch,
)

__all__ = [
    "BigsetKey",
    "CompactionFilter",
    "CompactionReport",
    "Decision",
    "Kind",
    "LogStore",
    "MemoryStore",
    "RECORD_OVERHEAD",
    "StoreError",
    "StoreMetrics",
    "WriteBatch",
    "clock_key",
    "decode_key",
    "element_key",
    "element_prefix",
    "elements_start",
    "encode_key",
    "prefix_end",
    "set_prefix",
    "tombstone_key",
]

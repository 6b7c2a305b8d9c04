"""Fixed-capacity replay buffers addressed by transition id."""

from __future__ import annotations

import numpy as np


class ReplayBuffer:
    """Ring buffer of transitions; evicts the oldest entry when full.

    Every stored transition gets an increasing integer id, so two buffers that
    see the same stream can be indexed consistently.  Retained transitions are
    never reordered.
    """

    def __init__(self, capacity: int, shapes: dict):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = int(capacity)
        self.data = {k: np.zeros((self.capacity,) + tuple(s)) for k, s in shapes.items()}
        self.ids = np.full(self.capacity, -1, dtype=np.int64)
        self.size = 0
        self.next_id = 0

    def __len__(self) -> int:
        return self.size

    def add(self, tid: int = None, **fields) -> int:
        tid = self.next_id if tid is None else int(tid)
        if self.size and tid != self.next_id:
            raise ValueError("transition ids must be consecutive")
        slot = tid % self.capacity
        for k, arr in self.data.items():
            arr[slot] = fields[k]
        self.ids[slot] = tid
        self.size = min(self.size + 1, self.capacity)
        self.next_id = tid + 1
        return tid

    @property
    def newest_id(self) -> int:
        return self.next_id - 1

    @property
    def oldest_id(self) -> int:
        return self.next_id - self.size

    def contains(self, ids) -> np.ndarray:
        ids = np.asarray(ids)
        return (ids >= self.oldest_id) & (ids <= self.newest_id) & (self.ids[ids % self.capacity] == ids)

    def get(self, ids) -> dict:
        ids = np.asarray(ids, dtype=np.int64)
        if not np.all(self.contains(ids)):
            raise KeyError("requested transition ids are not in the buffer")
        slots = ids % self.capacity
        return {k: arr[slots] for k, arr in self.data.items()}

    def retained_ids(self) -> np.ndarray:
        return np.arange(self.oldest_id, self.next_id)

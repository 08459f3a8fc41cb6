"""state_manager.py: bookkeeping for one training run."""
from __future__ import annotations

import time
from dataclasses import dataclass, field

from loguru import logger


class RunStatus:
    IDLE = "IDLE"
    TRAINING = "TRAINING"
    DONE = "DONE"
    ABORTED = "ABORTED"

    ALL = {
        IDLE,
        TRAINING,
        DONE,
        ABORTED,
    }


@dataclass
class RunState:
    step:             int   = 0        # next step index to run
    steps_this_run:   int   = 0
    first_total:      float | None = None
    last_total:       float | None = None
    best_total:       float | None = None
    history:          list[float] = field(default_factory=list)

    # Explicit run state machine
    status:           str   = RunStatus.IDLE
    last_status_reason: str = ""
    last_status_ts:   float = 0.0

    def set_status(self, new_status: str, reason: str = "") -> bool:
        """Transition the run status and emit a log line."""
        if new_status not in RunStatus.ALL:
            raise ValueError(f"Invalid run status: {new_status}")
        if self.status == new_status:
            return False
        old_status = self.status
        self.status = new_status
        self.last_status_reason = reason
        self.last_status_ts = time.time()
        suffix = f" ({reason})" if reason else ""
        logger.info("[TRAIN] {} -> {}{}", old_status, new_status, suffix)
        return True

    def record(self, total: float) -> None:
        if self.first_total is None:
            self.first_total = total
        self.last_total = total
        self.best_total = total if self.best_total is None else min(self.best_total, total)
        self.history.append(total)
        self.step += 1
        self.steps_this_run += 1

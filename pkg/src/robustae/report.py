"""Solver progress reporting shared by the iterative methods."""

import json
from dataclasses import dataclass, field


@dataclass
class SolveReport:
    """Iteration count, objective trace, and terminal state of one solve.

    `objective_trace` holds one entry per `trace_stride` iterations (the
    mini-batch trainers record per-epoch means; the ADMM solvers record
    every iteration).
    """

    iterations: int
    objective_trace: list = field(default_factory=list)
    terminal_residual: float = 0.0
    converged: bool = True
    trace_stride: int = 1
    skipped_steps: int = 0

    def to_dict(self):
        return {
            "iterations": self.iterations,
            "objective_trace": list(self.objective_trace),
            "terminal_residual": self.terminal_residual,
            "converged": self.converged,
            "trace_stride": self.trace_stride,
            "skipped_steps": self.skipped_steps,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)

    def save(self, path):
        with open(path, "w") as fh:
            fh.write(self.to_json())
            fh.write("\n")

    @classmethod
    def from_json(cls, text):
        return cls(**json.loads(text))

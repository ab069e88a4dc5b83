"""Emit the core pipeline's adjusted buffers for the process-step parity sweep.

Reads a JSON job description on argv[1]:
    {"schedule": {...flat schedule fields...}, "reflection_ids": [...],
     "vocab_size": V, "steps": N, "buffer_seed": S}
Buffers are generated from the shared (seed, index) hash so both sides of
the parity harness construct identical inputs without shipping them.
Writes one JSON line per step: {"v": [adjusted logits...]}.
"""

import json
import sys

import numpy as np

from reflexsched.engine import adjust_logits
from reflexsched.schedule import ScheduleKind, ScheduleSpec, evaluate, hash_unit
from reflexsched.vocab import ReflectionSet


def spec_from(doc):
    kinds = {k.value: k for k in ScheduleKind}
    return ScheduleSpec(
        kind=kinds[doc.get("schedule_kind", "none")],
        amplitude=float(doc.get("amplitude", 0.0)),
        period=float(doc.get("period", 1.0)),
        phase_shift=float(doc.get("phase_shift", 0.0)),
        alpha=float(doc.get("alpha", 0.0)),
        window=int(doc.get("window", 0)),
        decay_horizon=int(doc.get("decay_horizon", 1)),
        noise_sigma=float(doc.get("noise_sigma", 0.0)),
        noise_seed=int(doc.get("noise_seed", 0)),
    )


def main():
    job = json.loads(sys.argv[1])
    spec = spec_from(job["schedule"])
    rset = ReflectionSet(word_list=(), token_ids=set(job["reflection_ids"]))
    size = job["vocab_size"]
    steps = job["steps"]
    buffer_seed = job["buffer_seed"]
    out = []
    for t in range(steps):
        buffer = np.array(
            [(hash_unit(buffer_seed, t * size + i) * 20.0) - 10.0 for i in range(size)],
            dtype=np.float64,
        )
        delta = evaluate(spec, t).delta
        adjusted = adjust_logits(buffer, rset, delta) if delta != 0.0 else buffer
        out.append(json.dumps({"v": [float(x) for x in adjusted]}, separators=(",", ":")))
    sys.stdout.write("\n".join(out) + "\n")


if __name__ == "__main__":
    main()

"""Bounded exhaustive check of the value-selection rule.

Enumerates every interleaving of a small model (3 acceptors, 2 proposers,
2 values, one slot, bounded step count) where each step is a prepare round
or an accept batch against an adversarially chosen acceptor subset.  The
correct rule, re-proposing the prior with the highest ballot, must show
zero states where both values are chosen; swapping in the lowest-ballot
rule must expose at least one such state, which is what makes the check
meaningful rather than vacuous.

The search runs on a compiled kernel when one was built, else on the pure
reference implementation; both produce identical counts by construction
and by test.  Set CCNPAXOS_PURE=1 to force the pure kernel.
"""

from __future__ import annotations

import os

from ._kernel import search_py
from ._kernel.search_py import (
    HIGHEST,
    LOWEST,
    SearchResult,
    chosen_flags,
    render_step,
    replay,
    step_code,
)

if os.environ.get("CCNPAXOS_PURE"):
    _backend = search_py
else:
    try:
        from ._kernel import _search as _backend  # type: ignore[no-redef]
    except ImportError:
        _backend = search_py


def backend_name() -> str:
    return "compiled" if _backend is not search_py else "pure"


def enumerate_model(rule: int = HIGHEST, max_steps: int = 8,
                    stop_on_first: bool = False) -> SearchResult:
    """Exhaustively enumerate the model; see module docstring for bounds."""
    return SearchResult(*_backend.search(rule, max_steps, stop_on_first))


def value_rule_audit(max_steps: int = 8) -> dict:
    """Run both rules; the pair of results is the whole safety argument.

    "highest" must report zero violations over the full enumeration and
    "lowest" must report at least one, proving the enumeration is strong
    enough to notice a broken selection rule.
    """
    return {
        "highest": enumerate_model(HIGHEST, max_steps),
        "lowest": enumerate_model(LOWEST, max_steps, stop_on_first=True),
    }


# A six-step witness for why the highest-ballot rule matters.  p0 gets X
# accepted at one acceptor only; p1 gets Y chosen by a majority; p0 then
# prepares again and sees both priors.  Taking the lowest (X) re-chooses X
# after Y was already chosen; taking the highest re-confirms Y.
COUNTEREXAMPLE_STEPS = (
    step_code(search_py.PREPARE_STEP, 0, 0b011, 0),
    step_code(search_py.ACCEPT_STEP, 0, 0b001),
    step_code(search_py.PREPARE_STEP, 1, 0b110, 1),
    step_code(search_py.ACCEPT_STEP, 1, 0b110),
    step_code(search_py.PREPARE_STEP, 0, 0b011, 0),
    step_code(search_py.ACCEPT_STEP, 0, 0b011),
)


def counterexample() -> dict:
    """Replay the scripted witness under both rules; returns transcripts."""
    bad_state, bad_lines = replay(COUNTEREXAMPLE_STEPS, LOWEST)
    good_state, good_lines = replay(COUNTEREXAMPLE_STEPS, HIGHEST)
    return {
        "lowest_violates": chosen_flags(bad_state) == 3,
        "highest_violates": chosen_flags(good_state) == 3,
        "lowest_transcript": bad_lines,
        "highest_transcript": good_lines,
    }

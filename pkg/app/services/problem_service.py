"""Problem-file parsing, validation and serialization.

1. Parse:     UTF-8 JSON text → ProblemFile (schema errors carry field paths,
              JSON syntax errors carry line / column).
2. Validate:  shape checks every matrix must pass before any numerics run.
3. Build:     ProblemFile → MatrixFamily or MarkovModel plus weight hints.
4. Serialize: ProblemFile → JSON text that parses back to the same values.
"""

from __future__ import annotations
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Sequence, Tuple, Union

from pydantic import ValidationError

from app.exceptions import ProblemFileError
from app.models.schemas import (
    MarkovModel,
    MarkovWeightSet,
    MatrixFamily,
    ProblemFile,
    WeightSet,
)

logger = logging.getLogger(__name__)

Target = Union[MatrixFamily, MarkovModel]
Hint = Union[WeightSet, MarkovWeightSet]


def _loc(parts: Sequence) -> str:
    out = ""
    for part in parts:
        out += f"[{part}]" if isinstance(part, int) else (f".{part}" if out else str(part))
    return out


# ── 1. Parse ──────────────────────────────────────────────────────────────

def parse_problem(text: str) -> ProblemFile:
    """Parse and validate problem JSON; raises :class:`ProblemFileError`."""
    try:
        raw = json.loads(text, parse_constant=_reject_constant)
    except json.JSONDecodeError as e:
        raise ProblemFileError(e.msg, f"line {e.lineno} column {e.colno}") from e
    if not isinstance(raw, dict):
        raise ProblemFileError("top level must be a JSON object")
    try:
        problem = ProblemFile.model_validate(raw)
    except ValidationError as e:
        first = e.errors()[0]
        raise ProblemFileError(first["msg"], _loc(first["loc"]) or None) from e
    validate_shapes(problem)
    return problem


def _reject_constant(name: str):
    raise ProblemFileError(f"non-finite number {name} is not allowed")


def load_problem(path: Union[str, Path]) -> ProblemFile:
    """Read and parse a problem file."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise ProblemFileError(f"cannot read file ({e.strerror})", str(path)) from e
    return parse_problem(text)

# ── 2. Validate ───────────────────────────────────────────────────────────

def _check_square(matrix: List[List[float]], where: str, size: int | None = None) -> int:
    rows = len(matrix)
    if rows == 0:
        raise ProblemFileError("matrix has no rows", where)
    for r, row in enumerate(matrix):
        if len(row) != rows:
            raise ProblemFileError(
                f"row has {len(row)} entries, expected {rows} (matrices must be square)",
                f"{where}[{r}]",
            )
    if size is not None and rows != size:
        raise ProblemFileError(f"matrix is {rows}×{rows}, expected {size}×{size}", where)
    return rows


def validate_shapes(problem: ProblemFile) -> None:
    """Square, equally sized matrices; transition sized N×N; hints conforming.

    Checks performed:
      • Every row has as many entries as the matrix has rows
      • All matrices share the dimension of matrices[0]
      • transition is N×N
      • hint weights match N (i.i.d.) or form an N×N grid (Markov)
    """
    n = _check_square(problem.matrices[0], "matrices[0]")
    for i, matrix in enumerate(problem.matrices[1:], start=1):
        _check_square(matrix, f"matrices[{i}]", n)
    count = len(problem.matrices)
    if problem.transition is not None:
        _check_square(problem.transition, "transition", count)
    for h, hint in enumerate(problem.hints):
        where = f"hints[{h}]"
        if hint.weights is not None:
            if problem.transition is not None:
                raise ProblemFileError("Markov problems take a 'grid' hint", where)
            if len(hint.weights) != count:
                raise ProblemFileError(f"{len(hint.weights)} weights for {count} matrices", where)
            m = _check_square(hint.weights[0], f"{where}.weights[0]")
            for i, w in enumerate(hint.weights[1:], start=1):
                _check_square(w, f"{where}.weights[{i}]", m)
        else:
            if problem.transition is None:
                raise ProblemFileError("i.i.d. problems take a 'weights' hint", where)
            if len(hint.grid) != count or any(len(row) != count for row in hint.grid):
                raise ProblemFileError(f"grid must be {count}×{count}", where)
            m = _check_square(hint.grid[0][0], f"{where}.grid[0][0]")
            for i, row in enumerate(hint.grid):
                for j, w in enumerate(row):
                    _check_square(w, f"{where}.grid[{i}][{j}]", m)

# ── 3. Build ──────────────────────────────────────────────────────────────

def build_target(problem: ProblemFile) -> Target:
    """MatrixFamily, or MarkovModel when a transition matrix is present."""
    try:
        family = MatrixFamily(members=problem.matrices)
        if problem.transition is None:
            return family
        return MarkovModel(family=family, transition=problem.transition)
    except ValidationError as e:
        first = e.errors()[0]
        message = first["msg"].removeprefix("Value error, ")
        location = _loc(first["loc"]).replace("members", "matrices")
        if not location or message.startswith(location):
            location = None
        raise ProblemFileError(message.replace("members", "matrices"), location) from e


def build_hints(problem: ProblemFile) -> List[Tuple[str, Hint]]:
    """(label, unchecked weights) for every hint in the file."""
    hints: list[tuple[str, Hint]] = []
    for hint in problem.hints:
        if hint.weights is not None:
            hints.append((hint.label, WeightSet(weights=hint.weights)))
        else:
            hints.append((hint.label, MarkovWeightSet(weights=hint.grid)))
    return hints

# ── 4. Serialize ──────────────────────────────────────────────────────────

def dump_problem(problem: ProblemFile) -> str:
    """JSON text; floats use shortest round-trip repr so parsing restores them bit-for-bit."""
    payload = problem.model_dump(exclude_none=True)
    if not payload.get("hints"):
        payload.pop("hints", None)
    return json.dumps(payload, indent=2, ensure_ascii=False)


@dataclass(frozen=True)
class LoadedProblem:
    """A parsed file with its numeric target and hints, ready for the services."""
    problem: ProblemFile
    target: Target
    hints: List[Tuple[str, Hint]]

    @property
    def markov(self) -> bool:
        return isinstance(self.target, MarkovModel)

    def hint_weights(self) -> List[Hint]:
        return [weights for _, weights in self.hints]


def open_problem(path: Union[str, Path]) -> LoadedProblem:
    """load → validate → build, raising :class:`ProblemFileError` on any defect."""
    problem = load_problem(path)
    target = build_target(problem)
    hints = build_hints(problem)
    logger.info(
        "loaded %s: N=%d, n=%d, %s switching, %d hint(s)",
        path, target.count, target.n, "Markov" if problem.transition is not None else "i.i.d.", len(hints),
    )
    return LoadedProblem(problem=problem, target=target, hints=hints)

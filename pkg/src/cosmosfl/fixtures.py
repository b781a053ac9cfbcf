"""Recorded bug fixtures and the three agent tools served from them.

A fixture file is a JSON document::

    {"format": "cosmos-fixture/1", "project": "Chart", "bugs": [ {...}, ... ]}

with one object per bug carrying ``bug_id``, ``project``, ``failing_tests``
(``name``/``message``/``stack_trace``), ``coverage`` (class -> covered
methods), ``snippets``, ``comments`` and ``faulty_methods``.
"""

from __future__ import annotations

import json
from collections.abc import Callable, Mapping
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

from cosmosfl.scoring import GroundTruth

FORMAT_VERSION = "cosmos-fixture/1"
NO_COMMENTS = "no comments available"


class FixtureError(ValueError):
    pass


@dataclass(frozen=True)
class FailingTest:
    name: str
    message: str
    stack_trace: str


@dataclass(frozen=True)
class BugFixture:
    bug_id: str
    project: str
    failing_tests: tuple[FailingTest, ...]
    coverage: Mapping[str, tuple[str, ...]]
    snippets: Mapping[str, str]
    comments: Mapping[str, str]
    ground_truth: GroundTruth

    def violations(self) -> list[str]:
        problems = []
        if not self.bug_id:
            problems.append("empty bug_id")
        if not self.failing_tests:
            problems.append("no failing tests")
        covered = {m for methods in self.coverage.values() for m in methods}
        for m in sorted(self.ground_truth.faulty_methods - covered):
            problems.append(f"faulty method {m} is not covered by any class (not localisable)")
        for m in sorted(covered - set(self.snippets)):
            problems.append(f"covered method {m} has no snippet")
        return problems


def _bug_from_json(obj: Mapping[str, Any], where: str, default_project: str | None) -> BugFixture:
    try:
        bug_id = obj["bug_id"]
        tests = tuple(
            FailingTest(t["name"], t.get("message", ""), t.get("stack_trace", ""))
            for t in obj["failing_tests"]
        )
        coverage = {cls: tuple(methods) for cls, methods in obj["coverage"].items()}
        faulty = obj["faulty_methods"]
    except (KeyError, TypeError, AttributeError) as exc:
        raise FixtureError(f"{where}: malformed bug entry ({exc!r})") from None
    project = obj.get("project", default_project)
    if not project:
        raise FixtureError(f"{where}: bug {bug_id!r} has no project tag")
    if not faulty:
        raise FixtureError(f"{where}: bug {bug_id!r}: ground truth has no faulty methods")
    return BugFixture(
        bug_id=bug_id,
        project=project,
        failing_tests=tests,
        coverage=coverage,
        snippets=dict(obj.get("snippets", {})),
        comments=dict(obj.get("comments", {})),
        ground_truth=GroundTruth(bug_id, frozenset(faulty)),
    )


def parse_fixture_document(doc: Any, source: str = "<fixture>") -> list[BugFixture]:
    if not isinstance(doc, dict):
        raise FixtureError(f"{source}: top level must be an object")
    if doc.get("format") != FORMAT_VERSION:
        raise FixtureError(f"{source}: expected format {FORMAT_VERSION!r}, got {doc.get('format')!r}")
    bugs = doc.get("bugs")
    if not isinstance(bugs, list):
        raise FixtureError(f"{source}: 'bugs' must be an array")
    out = []
    for i, obj in enumerate(bugs):
        fixture = _bug_from_json(obj, f"{source}: bugs[{i}]", doc.get("project"))
        problems = fixture.violations()
        if problems:
            raise FixtureError(f"{source}: bug {fixture.bug_id!r}: " + "; ".join(problems))
        out.append(fixture)
    return out


def load_fixture_set(path: str | Path) -> dict[str, BugFixture]:
    """Load one fixture file, or every ``*.json`` file in a directory."""
    path = Path(path)
    files = sorted(path.glob("*.json")) if path.is_dir() else [path]
    if not files:
        raise FixtureError(f"{path}: no fixture files found")
    fixtures: dict[str, BugFixture] = {}
    for f in files:
        try:
            doc = json.loads(f.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise FixtureError(f"{f}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
        for fixture in parse_fixture_document(doc, str(f)):
            if fixture.bug_id in fixtures:
                raise FixtureError(f"{f}: duplicate bug_id {fixture.bug_id!r}")
            fixtures[fixture.bug_id] = fixture
    return fixtures


def desk_d4j_path() -> Path:
    """Directory of the bundled 12-bug synthetic corpus."""
    return Path(str(resources.files("cosmosfl") / "data" / "desk-d4j"))


def ground_truth(fixtures: Mapping[str, BugFixture]) -> dict[str, GroundTruth]:
    return {bug_id: fx.ground_truth for bug_id, fx in fixtures.items()}


# ---------------------------------------------------------------------------
# Tools


def tool_method_coverage(fixture: BugFixture, class_name: str) -> list[str]:
    return list(fixture.coverage.get(class_name, ()))


def tool_code_snippet(fixture: BugFixture, method: str) -> str:
    return fixture.snippets.get(method, f"method not found: {method}")


def tool_comments(fixture: BugFixture, method: str) -> str:
    if method not in fixture.snippets:
        return f"method not found: {method}"
    return fixture.comments.get(method) or NO_COMMENTS


def _coverage_text(fixture: BugFixture, class_name: str) -> str:
    methods = tool_method_coverage(fixture, class_name)
    if not methods:
        return f"class not covered: {class_name}"
    return "\n".join(methods)


@dataclass(frozen=True)
class ToolSpec:
    name: str
    description: str
    parameters: Mapping[str, str]
    handler: Callable[..., str] = field(compare=False)

    def declaration(self) -> dict[str, Any]:
        """Chat-completions style ``tools`` entry."""
        return {
            "type": "function",
            "function": {
                "name": self.name,
                "description": self.description,
                "parameters": {
                    "type": "object",
                    "properties": {p: {"type": t} for p, t in self.parameters.items()},
                    "required": list(self.parameters),
                },
            },
        }


# Smaller models looped on this tool, so it is never registered.
FORBIDDEN_TOOLS = frozenset({"get_covered_classes", "get_class_coverage"})


def check_registry(tools: list[ToolSpec]) -> list[ToolSpec]:
    names = [t.name for t in tools]
    if len(set(names)) != len(names):
        raise ValueError(f"duplicate tool names: {names}")
    banned = FORBIDDEN_TOOLS.intersection(names)
    if banned:
        raise ValueError(f"class-level coverage tool may not be registered: {sorted(banned)}")
    return tools


def default_tools() -> list[ToolSpec]:
    return check_registry(
        [
            ToolSpec(
                "get_method_coverage",
                "List the methods of a class that are covered by the failing tests.",
                {"class_name": "string"},
                _coverage_text,
            ),
            ToolSpec(
                "get_code_snippet",
                "Return the source code of a method, given its fully qualified signature.",
                {"method": "string"},
                tool_code_snippet,
            ),
            ToolSpec(
                "get_comments",
                "Return the documentation comments attached to a method.",
                {"method": "string"},
                tool_comments,
            ),
        ]
    )

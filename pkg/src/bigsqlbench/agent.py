"""ReAct controller/executor loop with four SQL tools and per-stage timing.

The controller LLM reasons in Thought/Action/Observation turns over four
tools (list_tables, get_schema, check_query, run_query).  The episode ends
at the first run_query by default: on large engines, letting an agent re-run
queries at will is how bills explode.  Every iteration is timed and
token-counted; iterations calling the same tool aggregate into a stage.
"""

from __future__ import annotations

import json
import re
import time
from dataclasses import dataclass, field, asdict
from typing import Any, Sequence

from .engine import EngineAdapter, EngineError, SessionClosedError, TableNotFoundError
from .llmclient import (
    ChatExchange,
    LlmBackend,
    LlmTransportError,
    ReplayExhaustedError,
    ReplayMismatchError,
)
from .resultset import ResultTable

STAGES = ("list", "schema", "check", "run", "finalize")

_TOOL_STAGE = {
    "list_tables": "list",
    "get_schema": "schema",
    "check_query": "check",
    "run_query": "run",
}

FINAL_ANSWER_ACTION = "final_answer"

OUTCOME_COMPLETED = "completed"
OUTCOME_EXHAUSTED = "exhausted"
OUTCOME_TOOL_ERROR = "tool-error"
OUTCOME_LLM_ERROR = "llm-error"

DEFAULT_OBSERVATION_CAP = 4000
TRUNCATION_MARKER = "\n...[observation truncated]"

DEFAULT_SYSTEM_PROMPT = """\
You answer analytics questions by writing SQL against the connected database.
Work in turns. Reply with either:

Thought: <reasoning>
Action: <one of list_tables, get_schema, check_query, run_query>
Action Input: <JSON arguments>

or, when finished:

Thought: <reasoning>
Final Answer: <answer>

Tools:
- list_tables: {} lists the available tables.
- get_schema: {"tables": ["t1", ...], "sample_rows": n} shows table DDL plus sample rows.
- check_query: {"sql": "..."} has a reviewer validate the query text.
- run_query: {"sql": "..."} executes the SQL. The episode ends after the first run,
  so only run a query you believe is final.
"""

DEFAULT_CHECKER_PROMPT = """\
You review a single SQL query before it is executed. Check identifier and
literal quoting, join columns, function arguments, and casts. If the query
looks correct reply exactly: query OK. Otherwise reply with a corrected query.
"""

TOOL_SCHEMAS: list[dict[str, Any]] = [
    {
        "type": "function",
        "function": {
            "name": "list_tables",
            "description": "List the tables available in the connected database.",
            "parameters": {"type": "object", "properties": {}},
        },
    },
    {
        "type": "function",
        "function": {
            "name": "get_schema",
            "description": "Fetch CREATE TABLE text and sample rows for tables.",
            "parameters": {
                "type": "object",
                "properties": {
                    "tables": {"type": "array", "items": {"type": "string"}},
                    "sample_rows": {"type": "integer"},
                },
                "required": ["tables"],
            },
        },
    },
    {
        "type": "function",
        "function": {
            "name": "check_query",
            "description": "Have a reviewer validate a SQL query before running it.",
            "parameters": {
                "type": "object",
                "properties": {"sql": {"type": "string"}},
                "required": ["sql"],
            },
        },
    },
    {
        "type": "function",
        "function": {
            "name": "run_query",
            "description": "Execute a SQL query; the episode ends after the first run.",
            "parameters": {
                "type": "object",
                "properties": {"sql": {"type": "string"}},
                "required": ["sql"],
            },
        },
    },
]


class ToolError(RuntimeError):
    """A tool invocation failed in a way the episode cannot recover from."""


class ActionParseError(ValueError):
    """The controller reply did not follow the action grammar."""


@dataclass(frozen=True)
class AgentConfig:
    """Episode-level knobs for the controller loop."""

    max_iterations: int = 15
    sample_rows: int = 3
    terminate_after_first_run: bool = True
    system_prompt: str = DEFAULT_SYSTEM_PROMPT
    checker_prompt: str = DEFAULT_CHECKER_PROMPT
    observation_cap: int = DEFAULT_OBSERVATION_CAP

    def __post_init__(self) -> None:
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.sample_rows < 0:
            raise ValueError("sample_rows must be >= 0")


@dataclass
class Iteration:
    """One Thought/Action/Observation turn with timing and token usage."""

    index: int
    thought: str
    action: str | None
    action_input: dict[str, Any]
    observation: str
    started_at: float
    ended_at: float
    input_tokens: int = 0
    output_tokens: int = 0
    engine_seconds: float = 0.0
    engine_bytes: int = 0
    exchanges: list[dict[str, Any]] = field(default_factory=list)

    @property
    def duration(self) -> float:
        return self.ended_at - self.started_at


@dataclass
class AgentTrace:
    """Ordered iterations of one episode plus its terminal state."""

    iterations: list[Iteration] = field(default_factory=list)
    outcome: str = OUTCOME_EXHAUSTED
    final_sql: str | None = None
    final_result: ResultTable | None = None
    final_answer: str | None = None
    error: str | None = None
    question: str = ""
    model_id: str = ""

    @property
    def e2e_seconds(self) -> float:
        if not self.iterations:
            return 0.0
        return self.iterations[-1].ended_at - self.iterations[0].started_at

    @property
    def generated_runtime(self) -> float:
        """Engine runtime of the run_query iteration (T_gen); 0 if none ran."""
        for it in self.iterations:
            if it.action == "run_query":
                return it.engine_seconds
        return 0.0

    @property
    def total_input_tokens(self) -> int:
        return sum(it.input_tokens for it in self.iterations)

    @property
    def total_output_tokens(self) -> int:
        return sum(it.output_tokens for it in self.iterations)

    @property
    def uses_estimated_tokens(self) -> bool:
        """True when any exchange lacked provider counts and was estimated."""
        return any(
            ex.get("estimated", False)
            for it in self.iterations
            for ex in it.exchanges
        )


@dataclass
class StageBreakdown:
    """Wall-clock seconds and share of end-to-end time per stage."""

    seconds: dict[str, float]
    percentages: dict[str, float]
    e2e_seconds: float


def stage_for_action(action: str | None) -> str:
    """Stage a tool action belongs to; tool-free turns form the finalize stage."""
    if action is None or action == FINAL_ANSWER_ACTION:
        return "finalize"
    return _TOOL_STAGE.get(action, "finalize")


def truncate_observation(text: str, cap: int = DEFAULT_OBSERVATION_CAP) -> str:
    if len(text) <= cap:
        return text
    return text[:cap] + TRUNCATION_MARKER


# --- tools -----------------------------------------------------------------


def tool_list_tables(engine: EngineAdapter) -> str:
    """Newline-separated table names from the session catalog."""
    try:
        return "\n".join(engine.list_tables())
    except (SessionClosedError, EngineError) as exc:
        raise ToolError(f"list_tables failed: {exc}") from exc


def tool_get_schema(
    engine: EngineAdapter, tables: Sequence[str], sample_rows: int
) -> str:
    """DDL per table plus up to sample_rows example rows as a text grid.

    An unknown table produces an inline 'table not found' line instead of
    aborting, leaving the controller room to correct itself next turn.
    """
    sections: list[str] = []
    for table in tables:
        try:
            ddl = engine.get_create_table(table)
        except TableNotFoundError:
            sections.append(f"table not found: {table}")
            continue
        part = ddl
        if sample_rows > 0:
            result, _, _ = engine.execute_timed(
                f'SELECT * FROM "{table}" LIMIT {int(sample_rows)}'
            )
            part += "\nsample rows:\n" + _render_grid(result)
        sections.append(part)
    return "\n\n".join(sections)


def tool_check_query(llm: LlmBackend, sql: str, checker_prompt: str) -> ChatExchange:
    """Send the query to the checker model; its verdict text is the observation."""
    if not sql.strip():
        raise ToolError("check_query requires a non-empty sql string")
    messages = [
        {"role": "system", "content": checker_prompt},
        {"role": "user", "content": sql},
    ]
    try:
        return llm.complete(messages)
    except (LlmTransportError, ReplayMismatchError, ReplayExhaustedError) as exc:
        raise ToolError(f"checker llm failed: {exc}") from exc


def tool_run_query(engine: EngineAdapter, sql: str) -> tuple[ResultTable, float]:
    """Execute the query, returning the full result and its runtime."""
    if not sql.strip():
        raise ToolError("run_query requires a non-empty sql string")
    try:
        result, seconds, _ = engine.execute_timed(sql)
    except EngineError as exc:
        raise ToolError(f"run_query failed: {exc}") from exc
    return result, seconds


def _render_grid(table: ResultTable) -> str:
    headers = list(table.column_names)
    rows = [[_cell_text(v) for v in row] for row in table.rows]
    widths = [len(h) for h in headers]
    for row in rows:
        for i, cell in enumerate(row):
            widths[i] = max(widths[i], len(cell))
    lines = ["  ".join(h.ljust(w) for h, w in zip(headers, widths))]
    for row in rows:
        lines.append("  ".join(c.ljust(w) for c, w in zip(row, widths)))
    return "\n".join(lines)


def _cell_text(value: Any) -> str:
    if value is None:
        return "NULL"
    return str(value)


# --- controller reply parsing ------------------------------------------------

_ACTION_RE = re.compile(r"^Action:\s*(\S+)\s*$", re.MULTILINE)
_ACTION_INPUT_RE = re.compile(r"^Action Input:\s*(.*)$", re.MULTILINE | re.DOTALL)
_FINAL_RE = re.compile(r"^Final Answer:\s*(.*)$", re.MULTILINE | re.DOTALL)
_THOUGHT_RE = re.compile(
    r"Thought:\s*(.*?)(?=^(?:Action|Final Answer):|\Z)", re.MULTILINE | re.DOTALL
)


@dataclass(frozen=True)
class ParsedStep:
    thought: str
    action: str | None
    action_input: dict[str, Any]
    final_answer: str | None


def parse_controller_reply(exchange: ChatExchange) -> ParsedStep:
    """Decode a controller reply: structured tool call or the text protocol."""
    if exchange.tool_call is not None:
        return ParsedStep(
            thought=exchange.response_text.strip(),
            action=exchange.tool_call.get("name"),
            action_input=dict(exchange.tool_call.get("arguments") or {}),
            final_answer=None,
        )
    text = exchange.response_text
    thought_match = _THOUGHT_RE.search(text)
    thought = thought_match.group(1).strip() if thought_match else ""
    action_match = _ACTION_RE.search(text)
    final_match = _FINAL_RE.search(text)
    if action_match and (not final_match or action_match.start() < final_match.start()):
        input_match = _ACTION_INPUT_RE.search(text, action_match.end())
        raw = input_match.group(1).strip() if input_match else ""
        return ParsedStep(
            thought=thought,
            action=action_match.group(1),
            action_input=_parse_action_input(raw),
            final_answer=None,
        )
    if final_match:
        return ParsedStep(
            thought=thought,
            action=None,
            action_input={},
            final_answer=final_match.group(1).strip(),
        )
    raise ActionParseError(
        f"reply has neither an Action nor a Final Answer: {text[:200]!r}"
    )


def _parse_action_input(raw: str) -> dict[str, Any]:
    if not raw:
        return {}
    try:
        parsed = json.loads(raw)
    except json.JSONDecodeError:
        return {"raw": raw}
    if isinstance(parsed, dict):
        return parsed
    if isinstance(parsed, list):
        return {"tables": parsed}
    return {"raw": str(parsed)}


def _sql_argument(args: dict[str, Any]) -> str:
    return str(args.get("sql") or args.get("raw") or "")


def _tables_argument(args: dict[str, Any]) -> list[str]:
    tables = args.get("tables")
    if tables is None:
        raw = str(args.get("raw") or "")
        tables = [t for t in re.split(r"[,\s]+", raw) if t]
    return [str(t) for t in tables]


# --- the loop ----------------------------------------------------------------


def run_agent(
    question: str,
    config: AgentConfig,
    llm: LlmBackend,
    engine: EngineAdapter,
) -> AgentTrace:
    """Drive one episode: prompt, parse, dispatch, observe, repeat.

    Stops at the final answer, the first run_query (when configured), the
    iteration cap, or an unrecoverable error.  The checker shares the
    controller backend; its tokens bill to the check iteration.
    """
    trace = AgentTrace(question=question, model_id=llm.model_id)
    messages: list[dict[str, str]] = [
        {"role": "system", "content": config.system_prompt},
        {"role": "user", "content": question},
    ]

    # Iterations tile the episode: each starts where the previous ended, so
    # stage seconds sum to e2e and breakdown percentages sum to 100.
    cursor = time.perf_counter()
    for index in range(config.max_iterations):
        started = cursor
        try:
            exchange = llm.complete(messages, TOOL_SCHEMAS)
        except (LlmTransportError, ReplayMismatchError, ReplayExhaustedError) as exc:
            trace.outcome = OUTCOME_LLM_ERROR
            trace.error = str(exc)
            return trace

        exchanges = [_exchange_record(exchange)]
        input_tokens = exchange.input_tokens
        output_tokens = exchange.output_tokens

        try:
            step = parse_controller_reply(exchange)
        except ActionParseError as exc:
            cursor = time.perf_counter()
            trace.iterations.append(
                Iteration(
                    index=index,
                    thought="",
                    action=None,
                    action_input={},
                    observation=f"unparseable reply: {exc}",
                    started_at=started,
                    ended_at=cursor,
                    input_tokens=input_tokens,
                    output_tokens=output_tokens,
                    exchanges=exchanges,
                )
            )
            trace.outcome = OUTCOME_LLM_ERROR
            trace.error = str(exc)
            return trace

        if step.final_answer is not None:
            cursor = time.perf_counter()
            trace.iterations.append(
                Iteration(
                    index=index,
                    thought=step.thought,
                    action=FINAL_ANSWER_ACTION,
                    action_input={},
                    observation="",
                    started_at=started,
                    ended_at=cursor,
                    input_tokens=input_tokens,
                    output_tokens=output_tokens,
                    exchanges=exchanges,
                )
            )
            trace.final_answer = step.final_answer
            trace.outcome = OUTCOME_COMPLETED
            return trace

        messages.append({"role": "assistant", "content": exchange.response_text})

        action = step.action or ""
        if action not in _TOOL_STAGE:
            cursor = time.perf_counter()
            trace.outcome = OUTCOME_LLM_ERROR
            trace.error = f"unknown tool: {action!r}"
            trace.iterations.append(
                Iteration(
                    index=index,
                    thought=step.thought,
                    action=None,
                    action_input=step.action_input,
                    observation=f"unknown tool: {action}",
                    started_at=started,
                    ended_at=cursor,
                    input_tokens=input_tokens,
                    output_tokens=output_tokens,
                    exchanges=exchanges,
                )
            )
            return trace

        observation = ""
        engine_seconds = 0.0
        failed = False
        run_result: ResultTable | None = None
        run_sql: str | None = None
        try:
            if action == "list_tables":
                t0 = time.perf_counter()
                observation = tool_list_tables(engine)
                engine_seconds = time.perf_counter() - t0
            elif action == "get_schema":
                tables = _tables_argument(step.action_input)
                sample_rows = int(
                    step.action_input.get("sample_rows", config.sample_rows)
                )
                t0 = time.perf_counter()
                observation = tool_get_schema(engine, tables, sample_rows)
                engine_seconds = time.perf_counter() - t0
            elif action == "check_query":
                checker_exchange = tool_check_query(
                    llm, _sql_argument(step.action_input), config.checker_prompt
                )
                exchanges.append(_exchange_record(checker_exchange))
                input_tokens += checker_exchange.input_tokens
                output_tokens += checker_exchange.output_tokens
                observation = checker_exchange.response_text
            elif action == "run_query":
                run_sql = _sql_argument(step.action_input)
                run_result, engine_seconds = tool_run_query(engine, run_sql)
                observation = (
                    f"query returned {run_result.n_rows} row(s), "
                    f"{len(run_result.columns)} column(s)"
                )
        except ToolError as exc:
            observation = str(exc)
            failed = True

        observation = truncate_observation(observation, config.observation_cap)
        messages.append({"role": "user", "content": f"Observation: {observation}"})
        cursor = time.perf_counter()
        trace.iterations.append(
            Iteration(
                index=index,
                thought=step.thought,
                action=action,
                action_input=step.action_input,
                observation=observation,
                started_at=started,
                ended_at=cursor,
                input_tokens=input_tokens,
                output_tokens=output_tokens,
                engine_seconds=engine_seconds,
                exchanges=exchanges,
            )
        )

        if failed:
            # run_query errors end the episode: re-running queries to
            # self-correct is exactly the loop this harness refuses to pay for.
            trace.outcome = OUTCOME_TOOL_ERROR
            trace.error = observation
            if action == "run_query":
                trace.final_sql = run_sql
            return trace

        if action == "run_query":
            trace.final_sql = run_sql
            trace.final_result = run_result
            trace.outcome = OUTCOME_COMPLETED
            if config.terminate_after_first_run:
                return trace

    if trace.outcome == OUTCOME_COMPLETED:
        return trace
    trace.outcome = OUTCOME_EXHAUSTED
    return trace


def _exchange_record(exchange: ChatExchange) -> dict[str, Any]:
    return {
        "fingerprint": None,
        "response": exchange.response_json_dict(),
        "usage": {
            "input_tokens": exchange.input_tokens,
            "output_tokens": exchange.output_tokens,
        },
        "estimated": exchange.estimated,
    }


def stage_breakdown(trace: AgentTrace) -> StageBreakdown:
    """Attribute each iteration's wall-clock to its tool's stage.

    An iteration's full duration (LLM thinking plus tool execution) belongs
    to the stage of the tool it called; tool-free turns go to finalize.
    """
    seconds = {stage: 0.0 for stage in STAGES}
    for it in trace.iterations:
        seconds[stage_for_action(it.action)] += it.duration
    e2e = trace.e2e_seconds
    if e2e > 0:
        percentages = {s: 100.0 * v / e2e for s, v in seconds.items()}
    else:
        percentages = {s: 0.0 for s in STAGES}
    return StageBreakdown(seconds=seconds, percentages=percentages, e2e_seconds=e2e)


# --- episode log serialization ------------------------------------------------


def trace_to_jsonl(trace: AgentTrace, include_timing: bool = True) -> str:
    """Serialize an episode to JSON lines: meta, one line per iteration, outcome.

    With include_timing=False all clock-derived fields are dropped, giving a
    stable byte representation for replay comparison.
    """
    lines = [
        json.dumps(
            {"type": "meta", "question": trace.question, "model_id": trace.model_id},
            sort_keys=True,
        )
    ]
    for it in trace.iterations:
        record = asdict(it)
        if not include_timing:
            for key in ("started_at", "ended_at", "engine_seconds"):
                record.pop(key, None)
        lines.append(json.dumps({"type": "iteration", **record}, sort_keys=True))
    outcome = {
        "type": "outcome",
        "outcome": trace.outcome,
        "final_sql": trace.final_sql,
        "final_answer": trace.final_answer,
        "error": trace.error,
        "final_result": (
            trace.final_result.to_json_dict() if trace.final_result else None
        ),
    }
    lines.append(json.dumps(outcome, sort_keys=True))
    return "\n".join(lines) + "\n"


def trace_from_jsonl(text: str) -> AgentTrace:
    """Rebuild an AgentTrace from its episode log."""
    trace = AgentTrace()
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        record = json.loads(line)
        kind = record.pop("type", None)
        if kind == "meta":
            trace.question = record.get("question", "")
            trace.model_id = record.get("model_id", "")
        elif kind == "iteration":
            record.setdefault("started_at", 0.0)
            record.setdefault("ended_at", 0.0)
            record.setdefault("engine_seconds", 0.0)
            trace.iterations.append(Iteration(**record))
        elif kind == "outcome":
            trace.outcome = record.get("outcome", OUTCOME_EXHAUSTED)
            trace.final_sql = record.get("final_sql")
            trace.final_answer = record.get("final_answer")
            trace.error = record.get("error")
            table = record.get("final_result")
            if table is not None:
                trace.final_result = ResultTable.from_json_dict(table)
    return trace

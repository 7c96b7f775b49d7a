from __future__ import annotations

import json

import pytest

from bigsqlbench.agent import (
    ActionParseError,
    AgentConfig,
    AgentTrace,
    Iteration,
    ToolError,
    parse_controller_reply,
    run_agent,
    stage_breakdown,
    stage_for_action,
    tool_check_query,
    tool_get_schema,
    tool_list_tables,
    tool_run_query,
    trace_from_jsonl,
    trace_to_jsonl,
    truncate_observation,
)
from bigsqlbench.engine import EmbeddedEngine, EngineConfig
from bigsqlbench.llmclient import ChatExchange, ReplayBackend


def entry(text, in_tok=100, out_tok=10):
    return {
        "fingerprint": None,
        "response": {"text": text, "tool_call": None},
        "usage": {"input_tokens": in_tok, "output_tokens": out_tok},
    }


def action_text(tool, payload):
    return f"Thought: next step.\nAction: {tool}\nAction Input: {json.dumps(payload)}"


FOUR_TOOL_SCRIPT = [
    entry(action_text("list_tables", {})),
    entry(action_text("get_schema", {"tables": ["orders"], "sample_rows": 2})),
    entry(action_text("check_query", {"sql": "SELECT COUNT(*) AS n FROM orders"})),
    entry("query OK"),
    entry(action_text("run_query", {"sql": "SELECT COUNT(*) AS n FROM orders"})),
]


@pytest.fixture
def shop_engine(mini_suite_dir):
    data_dir = mini_suite_dir / "databases" / "shop"
    with EmbeddedEngine(EngineConfig(data_dir=data_dir, database="shop")) as engine:
        yield engine


# --- the four tools ---


def test_tool_list_tables_newline_separated(shop_engine):
    assert tool_list_tables(shop_engine) == "orders\nproducts"


def test_tool_list_tables_empty_catalog(tmp_path):
    with EmbeddedEngine(EngineConfig(data_dir=tmp_path)) as engine:
        assert tool_list_tables(engine) == ""


def test_tool_list_tables_closed_session(tmp_path):
    engine = EmbeddedEngine(EngineConfig(data_dir=tmp_path))
    engine.close()
    with pytest.raises(ToolError):
        tool_list_tables(engine)


def test_tool_get_schema_ddl_only(shop_engine):
    text = tool_get_schema(shop_engine, ["products"], sample_rows=0)
    assert "CREATE TABLE" in text
    assert "sample rows" not in text


def test_tool_get_schema_with_samples(shop_engine):
    text = tool_get_schema(shop_engine, ["products"], sample_rows=3)
    assert "sample rows:" in text
    # header plus exactly three data lines after the marker
    grid = text.split("sample rows:\n", 1)[1]
    assert len(grid.splitlines()) == 4


def test_tool_get_schema_unknown_table_inline_error(shop_engine):
    text = tool_get_schema(shop_engine, ["nope", "products"], sample_rows=0)
    assert "table not found: nope" in text
    assert "CREATE TABLE" in text


def test_tool_check_query_verbatim_verdict():
    checker = ReplayBackend([entry("query OK")])
    exchange = tool_check_query(checker, "SELECT 1", "review this")
    assert exchange.response_text == "query OK"


def test_tool_check_query_corrected_sql():
    checker = ReplayBackend([entry("SELECT name FROM t WHERE x = 'y'")])
    exchange = tool_check_query(checker, "SELECT name FROM t WHERE x = 'y", "review")
    assert "SELECT name" in exchange.response_text


def test_tool_check_query_empty_sql():
    with pytest.raises(ToolError):
        tool_check_query(ReplayBackend([]), "   ", "review")


def test_tool_run_query_constant(shop_engine):
    result, seconds = tool_run_query(shop_engine, "SELECT 1 AS x")
    assert result.to_json_dict() == {
        "columns": [{"name": "x", "type": "integer"}],
        "rows": [[1]],
    }
    assert seconds > 0


def test_tool_run_query_invalid_sql(shop_engine):
    with pytest.raises(ToolError):
        tool_run_query(shop_engine, "SELECT FROM nothing WHERE")


# --- reply parsing ---


def test_parse_text_protocol_action():
    step = parse_controller_reply(
        ChatExchange(response_text=action_text("run_query", {"sql": "SELECT 1"}))
    )
    assert step.action == "run_query"
    assert step.action_input == {"sql": "SELECT 1"}
    assert step.thought == "next step."


def test_parse_final_answer():
    step = parse_controller_reply(
        ChatExchange(response_text="Thought: done.\nFinal Answer: 42 orders")
    )
    assert step.final_answer == "42 orders"
    assert step.action is None


def test_parse_structured_tool_call_takes_precedence():
    step = parse_controller_reply(
        ChatExchange(
            response_text="calling tool",
            tool_call={"name": "list_tables", "arguments": {}},
        )
    )
    assert step.action == "list_tables"


def test_parse_malformed_raises():
    with pytest.raises(ActionParseError):
        parse_controller_reply(ChatExchange(response_text="just some prose"))


def test_parse_raw_action_input_fallback():
    step = parse_controller_reply(
        ChatExchange(
            response_text="Thought: t\nAction: run_query\nAction Input: SELECT 1"
        )
    )
    assert step.action_input == {"raw": "SELECT 1"}


# --- the loop ---


def test_four_tool_episode_completes(shop_engine):
    llm = ReplayBackend(FOUR_TOOL_SCRIPT, model_id="scripted")
    trace = run_agent("how many orders?", AgentConfig(), llm, shop_engine)
    assert trace.outcome == "completed"
    assert [it.action for it in trace.iterations] == [
        "list_tables", "get_schema", "check_query", "run_query",
    ]
    assert trace.final_sql == "SELECT COUNT(*) AS n FROM orders"
    assert trace.final_result is not None
    assert trace.final_result.rows == ((20,),)


def test_final_answer_episode_has_no_result(shop_engine):
    llm = ReplayBackend([entry("Thought: trivial.\nFinal Answer: nothing to run")])
    trace = run_agent("no-op", AgentConfig(), llm, shop_engine)
    assert trace.outcome == "completed"
    assert len(trace.iterations) == 1
    assert trace.final_result is None
    assert trace.final_sql is None
    assert trace.final_answer == "nothing to run"


def test_loop_cap_exhausts_at_config_value(shop_engine):
    script = [entry(action_text("list_tables", {})) for _ in range(40)]
    config = AgentConfig(max_iterations=15)
    trace = run_agent("loop", config, ReplayBackend(script), shop_engine)
    assert trace.outcome == "exhausted"
    assert len(trace.iterations) == config.max_iterations


def test_terminate_after_first_run(shop_engine):
    script = [
        entry(action_text("run_query", {"sql": "SELECT 1 AS x"})),
        entry(action_text("run_query", {"sql": "SELECT 2 AS x"})),
    ]
    trace = run_agent("run twice?", AgentConfig(), ReplayBackend(script), shop_engine)
    runs = [it for it in trace.iterations if it.action == "run_query"]
    assert len(runs) == 1
    assert trace.outcome == "completed"


def test_no_termination_flag_allows_second_run(shop_engine):
    script = [
        entry(action_text("run_query", {"sql": "SELECT 1 AS x"})),
        entry(action_text("run_query", {"sql": "SELECT 2 AS x"})),
        entry("Thought: done.\nFinal Answer: ran twice"),
    ]
    config = AgentConfig(terminate_after_first_run=False)
    trace = run_agent("run twice", config, ReplayBackend(script), shop_engine)
    runs = [it for it in trace.iterations if it.action == "run_query"]
    assert len(runs) == 2
    assert trace.final_result is not None
    assert trace.final_result.rows == ((2,),)


def test_run_query_error_terminates_episode(shop_engine):
    script = [
        entry(action_text("run_query", {"sql": "SELECT broken FROM nowhere"})),
        entry(action_text("run_query", {"sql": "SELECT 1"})),
    ]
    trace = run_agent("bad sql", AgentConfig(), ReplayBackend(script), shop_engine)
    assert trace.outcome == "tool-error"
    assert len(trace.iterations) == 1
    assert trace.final_result is None


def test_replay_exhaustion_is_llm_error(shop_engine):
    trace = run_agent("empty", AgentConfig(), ReplayBackend([]), shop_engine)
    assert trace.outcome == "llm-error"
    assert trace.iterations == []


def test_malformed_reply_is_llm_error(shop_engine):
    trace = run_agent(
        "prose", AgentConfig(), ReplayBackend([entry("no action here")]), shop_engine
    )
    assert trace.outcome == "llm-error"
    # tokens of the malformed reply still count toward cost
    assert trace.total_input_tokens == 100


def test_unknown_tool_is_llm_error(shop_engine):
    script = [entry(action_text("drop_tables", {}))]
    trace = run_agent("bad tool", AgentConfig(), ReplayBackend(script), shop_engine)
    assert trace.outcome == "llm-error"


def test_checker_tokens_billed_to_check_iteration(shop_engine):
    llm = ReplayBackend(FOUR_TOOL_SCRIPT)
    trace = run_agent("q", AgentConfig(), llm, shop_engine)
    check = next(it for it in trace.iterations if it.action == "check_query")
    # controller turn 100/10 plus checker turn 100/10
    assert (check.input_tokens, check.output_tokens) == (200, 20)
    assert len(check.exchanges) == 2


def test_every_iteration_token_lands_in_one_stage(shop_engine):
    llm = ReplayBackend(FOUR_TOOL_SCRIPT)
    trace = run_agent("q", AgentConfig(), llm, shop_engine)
    stage_tokens: dict[str, int] = {}
    for it in trace.iterations:
        stage_tokens[stage_for_action(it.action)] = (
            stage_tokens.get(stage_for_action(it.action), 0) + it.input_tokens
        )
    assert sum(stage_tokens.values()) == trace.total_input_tokens


def test_estimated_usage_flag_propagates(shop_engine):
    script = [
        {"response": {"text": "Thought: done.\nFinal Answer: n/a", "tool_call": None}}
    ]
    trace = run_agent("q", AgentConfig(), ReplayBackend(script), shop_engine)
    assert trace.uses_estimated_tokens

    counted = ReplayBackend(FOUR_TOOL_SCRIPT)
    trace = run_agent("q", AgentConfig(), counted, shop_engine)
    assert not trace.uses_estimated_tokens


def test_observation_truncation_marker():
    text = truncate_observation("x" * 5000, cap=4000)
    assert len(text) == 4000 + len("\n...[observation truncated]")
    assert text.endswith("truncated]")
    assert truncate_observation("short") == "short"


def test_durations_tile_the_episode(shop_engine):
    llm = ReplayBackend(FOUR_TOOL_SCRIPT)
    trace = run_agent("q", AgentConfig(), llm, shop_engine)
    total = sum(it.duration for it in trace.iterations)
    assert total <= trace.e2e_seconds + 1e-9
    assert trace.e2e_seconds <= total + 0.050 * len(trace.iterations)


# --- stage breakdown ---


def stub_iteration(index, action, start, end):
    return Iteration(
        index=index,
        thought="",
        action=action,
        action_input={},
        observation="",
        started_at=start,
        ended_at=end,
    )


def test_stage_breakdown_stubbed_durations():
    trace = AgentTrace(
        iterations=[
            stub_iteration(0, "list_tables", 0.0, 1.0),
            stub_iteration(1, "get_schema", 1.0, 2.0),
            stub_iteration(2, "check_query", 2.0, 8.0),
            stub_iteration(3, "run_query", 8.0, 10.0),
        ]
    )
    bd = stage_breakdown(trace)
    assert bd.percentages["list"] == pytest.approx(10.0)
    assert bd.percentages["schema"] == pytest.approx(10.0)
    assert bd.percentages["check"] == pytest.approx(60.0)
    assert bd.percentages["run"] == pytest.approx(20.0)
    assert sum(bd.percentages.values()) == pytest.approx(100.0, abs=0.1)


def test_stage_breakdown_single_iteration_is_all_of_e2e():
    trace = AgentTrace(iterations=[stub_iteration(0, "run_query", 0.0, 3.0)])
    bd = stage_breakdown(trace)
    assert bd.percentages["run"] == pytest.approx(100.0)


def test_stage_breakdown_empty_trace():
    bd = stage_breakdown(AgentTrace())
    assert bd.e2e_seconds == 0.0
    assert all(v == 0.0 for v in bd.percentages.values())


def test_stage_breakdown_live_percentages_sum_to_100(shop_engine):
    llm = ReplayBackend(FOUR_TOOL_SCRIPT)
    trace = run_agent("q", AgentConfig(), llm, shop_engine)
    bd = stage_breakdown(trace)
    assert sum(bd.percentages.values()) == pytest.approx(100.0, abs=0.1)


# --- determinism and serialization ---


def run_scripted(engine):
    llm = ReplayBackend(FOUR_TOOL_SCRIPT)
    return run_agent("how many orders?", AgentConfig(), llm, engine)


def test_replay_reruns_identical_without_timestamps(mini_suite_dir):
    data_dir = mini_suite_dir / "databases" / "shop"
    traces = []
    for _ in range(2):
        with EmbeddedEngine(EngineConfig(data_dir=data_dir)) as engine:
            traces.append(run_scripted(engine))
    a = trace_to_jsonl(traces[0], include_timing=False)
    b = trace_to_jsonl(traces[1], include_timing=False)
    assert a.encode() == b.encode()


def test_trace_jsonl_round_trip(shop_engine):
    trace = run_scripted(shop_engine)
    restored = trace_from_jsonl(trace_to_jsonl(trace))
    assert restored.outcome == trace.outcome
    assert restored.final_sql == trace.final_sql
    assert [it.action for it in restored.iterations] == [
        it.action for it in trace.iterations
    ]
    assert restored.final_result == trace.final_result


def test_episode_log_replays_as_script(shop_engine, tmp_path, mini_suite_dir):
    trace = run_scripted(shop_engine)
    log_path = tmp_path / "episode.jsonl"
    log_path.write_text(trace_to_jsonl(trace))

    replay = ReplayBackend.from_path(log_path)
    data_dir = mini_suite_dir / "databases" / "shop"
    with EmbeddedEngine(EngineConfig(data_dir=data_dir)) as engine:
        replayed = run_agent("how many orders?", AgentConfig(), replay, engine)
    assert trace_to_jsonl(replayed, include_timing=False) == trace_to_jsonl(
        trace, include_timing=False
    )

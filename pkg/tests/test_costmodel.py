from __future__ import annotations

import json

import pytest

from bigsqlbench.agent import AgentTrace, Iteration
from bigsqlbench.costmodel import (
    EnginePricing,
    MissingPricingError,
    PricingConfig,
    PricingEntry,
    compose_ledger,
    engine_cost,
    llm_cost,
)

FLASH = PricingEntry("flash", input_per_mtok=0.5, output_per_mtok=3.0)
HEAVY = PricingEntry("heavy", input_per_mtok=2.5, output_per_mtok=10.0)


def iteration(index, action, in_tok, out_tok, engine_seconds=0.0):
    return Iteration(
        index=index,
        thought="",
        action=action,
        action_input={},
        observation="",
        started_at=float(index),
        ended_at=float(index + 1),
        input_tokens=in_tok,
        output_tokens=out_tok,
        engine_seconds=engine_seconds,
    )


# --- llm_cost ---


def test_llm_cost_million_tokens_each_way():
    assert llm_cost(FLASH, 1_000_000, 1_000_000) == 3.50


def test_llm_cost_zero_tokens():
    assert llm_cost(FLASH, 0, 0) == 0.0


def test_llm_cost_input_only():
    assert llm_cost(HEAVY, 2_000_000, 0) == 5.00


def test_llm_cost_linear_in_each_count():
    base = llm_cost(FLASH, 1000, 500)
    assert llm_cost(FLASH, 2000, 500) == pytest.approx(
        base + llm_cost(FLASH, 1000, 0)
    )
    assert llm_cost(FLASH, 1000, 1000) == pytest.approx(
        base + llm_cost(FLASH, 0, 500)
    )


def test_llm_cost_rejects_negative():
    with pytest.raises(ValueError):
        llm_cost(FLASH, -1, 0)


# --- engine_cost ---


def test_engine_cost_per_second():
    assert engine_cost(EnginePricing("per-second", 0.001), 60.0, None) == pytest.approx(
        0.06
    )


def test_engine_cost_free():
    assert engine_cost(EnginePricing("free", 0.0), 1000.0, 10**12) == 0.0


def test_engine_cost_per_byte():
    per_tb = 5.0 / 1e12
    cost = engine_cost(
        EnginePricing("per-byte-scanned", per_tb), 10.0, int(0.2e12)
    )
    assert cost == pytest.approx(1.00)


def test_engine_cost_per_byte_without_bytes_is_zero():
    assert engine_cost(EnginePricing("per-byte-scanned", 1e-12), 10.0, None) == 0.0


def test_engine_pricing_validation():
    with pytest.raises(ValueError):
        EnginePricing("free", 1.0)
    with pytest.raises(ValueError):
        EnginePricing("per-hour", 1.0)


# --- pricing config ---


def test_pricing_lookup_missing_model_fails_loudly():
    config = PricingConfig(models={"flash": FLASH})
    with pytest.raises(MissingPricingError):
        config.lookup("unknown-model")


def test_pricing_config_from_json(tmp_path):
    path = tmp_path / "pricing.json"
    path.write_text(
        json.dumps(
            {
                "models": [
                    {"id": "flash", "input_per_mtok": 0.5, "output_per_mtok": 3.0}
                ],
                "engine": {"mode": "per-second", "rate": 0.002},
            }
        )
    )
    config = PricingConfig.from_json_file(path)
    assert config.lookup("flash").output_per_mtok == 3.0
    assert config.engine.mode == "per-second"
    assert config.engine.rate == 0.002


# --- compose_ledger ---


def test_ledger_zero_tokens_free_engine():
    trace = AgentTrace(iterations=[iteration(0, "list_tables", 0, 0)])
    ledger = compose_ledger(trace, FLASH, EnginePricing())
    assert ledger.total == 0.0


def test_ledger_single_stage_equals_stage_cost():
    trace = AgentTrace(iterations=[iteration(0, "run_query", 1000, 200, 2.0)])
    ledger = compose_ledger(trace, FLASH, EnginePricing("per-second", 0.01))
    stage = ledger.stages["run"]
    assert ledger.total == pytest.approx(stage.total)
    assert stage.llm_cost == pytest.approx(llm_cost(FLASH, 1000, 200))
    assert stage.engine_cost == pytest.approx(0.02)


def test_ledger_four_stage_hand_summed():
    # spreadsheet oracle: token counts chosen for exact decimal arithmetic
    trace = AgentTrace(
        iterations=[
            iteration(0, "list_tables", 1_000_000, 100_000),
            iteration(1, "get_schema", 2_000_000, 200_000),
            iteration(2, "check_query", 3_000_000, 300_000),
            iteration(3, "run_query", 4_000_000, 400_000),
        ]
    )
    ledger = compose_ledger(trace, HEAVY, EnginePricing())
    # in: 10M * 2.5/M = 25.0; out: 1M * 10/M = 10.0
    assert ledger.total == 35.0
    assert ledger.stages["list"].llm_cost == 2.5 + 1.0
    assert ledger.stages["schema"].llm_cost == 5.0 + 2.0
    assert ledger.stages["check"].llm_cost == 7.5 + 3.0
    assert ledger.stages["run"].llm_cost == 10.0 + 4.0


def test_ledger_total_equals_sum_of_stage_entries():
    trace = AgentTrace(
        iterations=[
            iteration(0, "list_tables", 123, 45),
            iteration(1, "run_query", 678, 90, 1.5),
            iteration(2, None, 11, 22),
        ]
    )
    ledger = compose_ledger(trace, FLASH, EnginePricing("per-second", 0.001))
    assert ledger.total == pytest.approx(
        sum(s.total for s in ledger.stages.values())
    )
    assert "finalize" in ledger.stages


def test_ledger_total_invariant_under_stage_partitioning():
    # billing the same tokens through one stage or four changes nothing
    iterations = [
        iteration(0, "list_tables", 100, 10),
        iteration(1, "get_schema", 200, 20),
        iteration(2, "check_query", 300, 30),
        iteration(3, "run_query", 400, 40),
    ]
    split = compose_ledger(AgentTrace(iterations=iterations), FLASH, EnginePricing())
    merged_tokens = llm_cost(FLASH, 1000, 100)
    assert split.total == pytest.approx(merged_tokens)


def test_ledger_total_at_least_each_stage():
    trace = AgentTrace(
        iterations=[
            iteration(0, "list_tables", 500, 50),
            iteration(1, "run_query", 700, 70),
        ]
    )
    ledger = compose_ledger(trace, FLASH, EnginePricing())
    for stage in ledger.stages.values():
        assert ledger.total >= stage.total


def test_ledger_bills_every_token_exactly_once():
    trace = AgentTrace(
        iterations=[iteration(i, "check_query", 100 + i, 10 + i) for i in range(5)]
    )
    ledger = compose_ledger(trace, FLASH, EnginePricing())
    assert ledger.stages["check"].input_tokens == sum(100 + i for i in range(5))
    assert ledger.stages["check"].output_tokens == sum(10 + i for i in range(5))

#!/usr/bin/env python3
"""Regenerate the bundled mini suite under suites/mini.

The suite is a small shop database, five question/SQL cases, and scripted
replay dialogues for two stand-in models: alpha always produces the golden
query; beta projects a superfluous column on one case, drops a required
column on another, and mis-filters a third, so reports show the full
validity spectrum.
"""

from __future__ import annotations

import json
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
SUITE = ROOT / "suites" / "mini"

PRODUCTS = [
    (1, "aurora lamp", "home", 34.50),
    (2, "basil planter", "home", 12.25),
    (3, "copper kettle", "home", 48.00),
    (4, "denim tote", "apparel", 22.40),
    (5, "espadrille", "apparel", 9.75),
    (6, "fleece scarf", "apparel", 14.10),
    (7, "granola tin", "food", 6.80),
    (8, "honey jar", "food", 11.30),
    (9, "instant oats", "food", 4.95),
    (10, "juniper soap", "home", 7.60),
    (11, "knit beanie", "apparel", 13.85),
    (12, "lemon preserve", "food", 8.20),
]

ORDERS = [
    (1, 3, "wang", 2, "2025-01-04"),
    (2, 7, "imani", 5, "2025-01-05"),
    (3, 1, "sato", 1, "2025-01-09"),
    (4, 12, "wang", 3, "2025-01-11"),
    (5, 5, "lopez", 2, "2025-01-12"),
    (6, 8, "novak", 1, "2025-01-15"),
    (7, 2, "wang", 4, "2025-01-18"),
    (8, 9, "imani", 6, "2025-01-21"),
    (9, 4, "sato", 2, "2025-01-22"),
    (10, 11, "wang", 1, "2025-01-25"),
    (11, 6, "lopez", 3, "2025-01-27"),
    (12, 10, "novak", 2, "2025-02-01"),
    (13, 1, "wang", 1, "2025-02-03"),
    (14, 7, "sato", 4, "2025-02-06"),
    (15, 3, "imani", 2, "2025-02-08"),
    (16, 12, "lopez", 5, "2025-02-11"),
    (17, 9, "wang", 2, "2025-02-14"),
    (18, 5, "novak", 3, "2025-02-17"),
    (19, 8, "imani", 1, "2025-02-20"),
    (20, 4, "sato", 2, "2025-02-24"),
]

CASES = [
    {
        "case_id": "orders_count",
        "question": "How many orders have been placed in total?",
        "SQL": "SELECT COUNT(*) FROM orders",
        "db_id": "shop",
    },
    {
        "case_id": "category_quantity",
        "question": "What is the total ordered quantity per product category?",
        "SQL": (
            "SELECT p.category, SUM(o.quantity) AS total_quantity "
            "FROM orders o JOIN products p ON o.product_id = p.product_id "
            "GROUP BY p.category"
        ),
        "db_id": "shop",
    },
    {
        "case_id": "pricey_products",
        "question": "Which product names cost more than 10 dollars?",
        "SQL": "SELECT name FROM products WHERE price > 10",
        "db_id": "shop",
    },
    {
        "case_id": "top_customer",
        "question": "Which customer placed the most orders?",
        "SQL": (
            "SELECT customer, COUNT(*) AS order_count FROM orders "
            "GROUP BY customer ORDER BY order_count DESC, customer LIMIT 1"
        ),
        "db_id": "shop",
        "ordered": True,
    },
    {
        "case_id": "avg_category_price",
        "question": "What is the average product price per category?",
        "SQL": (
            "SELECT category, AVG(price) AS avg_price FROM products "
            "GROUP BY category"
        ),
        "db_id": "shop",
    },
]

# generated SQL per model; alpha mirrors the golden query (modulo keyword
# case on one query and an alias on the unaliased aggregate)
GENERATED = {
    "alpha": {
        "orders_count": "SELECT COUNT(*) AS n FROM orders",
        "category_quantity": CASES[1]["SQL"],
        "pricey_products": "select name from products where price > 10",
        "top_customer": CASES[3]["SQL"],
        "avg_category_price": CASES[4]["SQL"],
    },
    "beta": {
        "orders_count": "SELECT COUNT(*) AS n, 42 AS extra FROM orders",
        "category_quantity": (
            "SELECT p.category, SUM(o.quantity) AS total_quantity "
            "FROM orders o JOIN products p ON o.product_id = p.product_id "
            "WHERE o.quantity > 1 GROUP BY p.category"
        ),
        "pricey_products": CASES[2]["SQL"],
        "top_customer": (
            "SELECT customer FROM orders GROUP BY customer "
            "ORDER BY COUNT(*) DESC, customer LIMIT 1"
        ),
        "avg_category_price": CASES[4]["SQL"],
    },
}

# (input, output) token stubs per exchange, per model: controller turns for
# list/schema/check, the checker verdict, then the run turn
TOKENS = {
    "alpha": [(1200, 60), (1400, 80), (1600, 90), (700, 20), (1800, 70)],
    "beta": [(900, 50), (1000, 60), (1100, 70), (500, 15), (1200, 55)],
}


def entry(text: str, tokens: tuple[int, int]) -> dict:
    return {
        "fingerprint": None,
        "response": {"text": text, "tool_call": None},
        "usage": {"input_tokens": tokens[0], "output_tokens": tokens[1]},
    }


def dialogue(model: str, sql: str) -> list[dict]:
    tokens = TOKENS[model]
    check_input = json.dumps({"sql": sql})
    run_input = json.dumps({"sql": sql})
    return [
        entry(
            "Thought: I should see which tables exist.\n"
            "Action: list_tables\nAction Input: {}",
            tokens[0],
        ),
        entry(
            "Thought: Inspect both tables with a few sample rows.\n"
            "Action: get_schema\n"
            'Action Input: {"tables": ["orders", "products"], "sample_rows": 2}',
            tokens[1],
        ),
        entry(
            "Thought: Validate my candidate query before running it.\n"
            f"Action: check_query\nAction Input: {check_input}",
            tokens[2],
        ),
        entry("query OK", tokens[3]),
        entry(
            "Thought: The query passed review, run it.\n"
            f"Action: run_query\nAction Input: {run_input}",
            tokens[4],
        ),
    ]


def write_csv(path: Path, header: list[str], rows: list[tuple]) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(str(v) for v in row))
    path.write_text("\n".join(lines) + "\n")


def main() -> None:
    shop = SUITE / "databases" / "shop"
    shop.mkdir(parents=True, exist_ok=True)

    write_csv(
        shop / "products.csv",
        ["product_id", "name", "category", "price"],
        [(i, n, c, f"{p:.2f}") for i, n, c, p in PRODUCTS],
    )
    (shop / "products.schema").write_text(
        "product_id integer\nname text\ncategory text\nprice float\n"
    )
    write_csv(
        shop / "orders.csv",
        ["order_id", "product_id", "customer", "quantity", "order_date"],
        ORDERS,
    )
    (shop / "orders.schema").write_text(
        "order_id integer\nproduct_id integer\ncustomer text\n"
        "quantity integer\norder_date date\n"
    )

    (SUITE / "manifest.json").write_text(json.dumps({"cases": CASES}, indent=2) + "\n")

    for model in ("alpha", "beta"):
        replay_dir = SUITE / "replays" / model
        replay_dir.mkdir(parents=True, exist_ok=True)
        for case in CASES:
            sql = GENERATED[model][case["case_id"]]
            lines = [json.dumps(e) for e in dialogue(model, sql)]
            (replay_dir / f"{case['case_id']}.jsonl").write_text(
                "\n".join(lines) + "\n"
            )

    (SUITE / "pricing.json").write_text(
        json.dumps(
            {
                "models": [
                    {"id": "replay-alpha", "input_per_mtok": 2.5,
                     "output_per_mtok": 10.0},
                    {"id": "replay-beta", "input_per_mtok": 0.5,
                     "output_per_mtok": 3.0},
                ],
                "engine": {"mode": "free", "rate": 0},
            },
            indent=2,
        )
        + "\n"
    )

    (SUITE / "plan.json").write_text(
        json.dumps(
            {
                "suite": ".",
                "backends": [
                    {"name": "replay-alpha", "kind": "replay",
                     "model_id": "replay-alpha", "scripts_dir": "replays/alpha"},
                    {"name": "replay-beta", "kind": "replay",
                     "model_id": "replay-beta", "scripts_dir": "replays/beta"},
                ],
                "repetitions": 2,
                "scale_factors": [1.0],
                "pricing": "pricing.json",
                "output_dir": "out",
                "concurrency": 2,
                "seed": 7,
                "max_spend_usd": 5.0,
                "agent": {"max_iterations": 15, "sample_rows": 2},
            },
            indent=2,
        )
        + "\n"
    )
    print(f"mini suite written under {SUITE}")


if __name__ == "__main__":
    main()

"""Build a local DuckDB index over the report CSVs.

Tables: domain_report, per_trajectory, pct_increase (one row per CSV row,
``source`` tags validity vs observer). View: domain_overview.
"""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Dict, Union

import duckdb

from .errors import DataError

logger = logging.getLogger(__name__)

TABLES = {
    "domain_report": "consolidated_domain_report.csv",
    "per_trajectory": "per_trajectory_long.csv",
    "pct_increase": "pct_increase_long.csv",
}


def build_index(report_dir: Union[str, Path], out: Union[str, Path]) -> Dict[str, int]:
    report_dir = Path(report_dir)
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)

    for csv in TABLES.values():
        if not (report_dir / csv).exists():
            raise DataError(f"missing {report_dir / csv}")

    con = duckdb.connect(str(out))
    try:
        for table, csv in TABLES.items():
            con.execute(f"DROP TABLE IF EXISTS {table}")
            con.execute(
                f"""
                CREATE TABLE {table} AS
                SELECT * FROM read_csv_auto(?, header=true)
                """,
                [str(report_dir / csv)],
            )

        con.execute("DROP VIEW IF EXISTS domain_overview")
        con.execute(
            """
            CREATE VIEW domain_overview AS
            SELECT
              d.source,
              d.model,
              d.variable,
              max(CASE WHEN d.domain = 'below_0.5g' THEN d.mae END) AS mae_below,
              max(CASE WHEN d.domain = 'above_0.5g' THEN d.mae END) AS mae_above,
              max(CASE WHEN d.domain = 'below_0.5g' THEN d.n END) AS n_below,
              max(CASE WHEN d.domain = 'above_0.5g' THEN d.n END) AS n_above,
              max(d.pct_increase) AS pct_increase
            FROM domain_report d
            GROUP BY d.source, d.model, d.variable
            ORDER BY d.source, d.model, d.variable;
            """
        )

        counts = {t: con.execute(f"SELECT COUNT(*) FROM {t}").fetchone()[0] for t in TABLES}
    finally:
        con.close()
    logger.info("indexed %s -> %s", counts, out)
    return counts

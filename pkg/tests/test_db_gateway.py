"""Read-only gateway: safety, diagnostics, introspection and error
rendering."""

import sqlite3

import pytest

from sqlmender.db import ConnectionParams
from sqlmender.db.embedded import EmbeddedGateway, _rewrite_generate_series
from sqlmender.db.gateway import (
    ErrorDiagnostics,
    QueryResult,
    format_error,
    open_gateway,
    render_sample_value,
)
from sqlmender.errors import ConnectFailed, UnknownTable

from conftest import embedded_params

MUTATING_STATEMENTS = [
    "INSERT INTO customers (id, name, country) VALUES (99, 'X', 'US')",
    "UPDATE customers SET name = 'X' WHERE id = 1",
    "DELETE FROM customers WHERE id = 1",
    "DROP TABLE customers",
    "CREATE TABLE t (x INTEGER)",
    "ALTER TABLE customers ADD COLUMN extra TEXT",
    "REPLACE INTO customers (id, name, country) VALUES (1, 'X', 'US')",
]


def _checksum(path):
    conn = sqlite3.connect(path)
    try:
        total = 0
        for (table,) in conn.execute(
            "SELECT name FROM sqlite_master WHERE type = 'table'"
        ):
            for row in conn.execute(f'SELECT * FROM "{table}"'):
                total = hash((total, row)) & 0xFFFFFFFF
        return total
    finally:
        conn.close()


class TestConnectionParams:
    def test_rejects_empty_fields(self):
        with pytest.raises(ValueError):
            ConnectionParams(host="", port=5432, dbname="d", user="u", password="")

    @pytest.mark.parametrize("port", [0, -1, 70000])
    def test_rejects_bad_port(self, port):
        with pytest.raises(ValueError):
            ConnectionParams(host="h", port=port, dbname="d", user="u", password="p")

    def test_redacted_never_contains_password(self):
        p = ConnectionParams(
            host="h", port=5432, dbname="d", user="u", password="hunter2"
        )
        assert "hunter2" not in p.redacted()

    def test_connect_failure_never_leaks_password(self, tmp_path):
        params = ConnectionParams(
            host="embedded",
            port=5432,
            dbname=str(tmp_path / "missing" / "nope.sqlite"),
            user="u",
            password="hunter2",
        )
        with pytest.raises(ConnectFailed) as excinfo:
            EmbeddedGateway(params)
        assert "hunter2" not in str(excinfo.value)


class TestReadOnly:
    @pytest.mark.parametrize("sql", MUTATING_STATEMENTS)
    def test_mutations_rejected_and_data_unchanged(self, gateway, shop_db_path, sql):
        before = _checksum(shop_db_path)
        outcome = gateway.execute_readonly(sql, 50)
        assert isinstance(outcome, ErrorDiagnostics)
        assert _checksum(shop_db_path) == before

    def test_usable_after_each_induced_error(self, gateway):
        for sql in [
            "SELECT * FROM no_such_table",  # 42P01
            "SELECT wrong_col FROM customers",  # 42703
            "SELEC nonsense",  # 42601
            "DELETE FROM customers",  # 25006
        ]:
            assert isinstance(gateway.execute_readonly(sql, 50), ErrorDiagnostics)
            probe = gateway.execute_readonly("SELECT 1", 50)
            assert isinstance(probe, QueryResult)
            assert probe.rows == ((1,),)


class TestDiagnostics:
    def test_undefined_table(self, gateway):
        d = gateway.execute_readonly("SELECT * FROM custmers", 50)
        assert d.sqlstate == "42P01"
        assert d.error_type == "UndefinedTable"
        assert 'relation "custmers" does not exist' == d.message

    def test_undefined_column_with_near_miss_hint(self, gateway):
        d = gateway.execute_readonly("SELECT emial FROM customers", 50)
        assert d.sqlstate == "42703"
        assert d.error_type == "UndefinedColumn"
        assert d.diag_hint == 'Perhaps you meant to reference the column "customers.email".'

    def test_syntax_error(self, gateway):
        d = gateway.execute_readonly("SELECT FROM WHERE", 50)
        assert d.sqlstate == "42601"

    def test_undefined_function(self, gateway):
        d = gateway.execute_readonly("SELECT frobnicate(name) FROM customers", 50)
        assert d.sqlstate == "42883"

    def test_ambiguous_column(self, gateway):
        d = gateway.execute_readonly(
            "SELECT id FROM customers JOIN orders ON customers.id = orders.customer_id",
            50,
        )
        assert d.sqlstate == "42702"

    def test_readonly_sqlstate(self, gateway):
        d = gateway.execute_readonly("DELETE FROM customers", 50)
        assert d.sqlstate == "25006"
        assert d.error_type == "ReadOnlySqlTransaction"


class TestExecution:
    def test_row_limit_truncates(self, gateway):
        r = gateway.execute_readonly("SELECT generate_series(1, 100)", 50)
        assert isinstance(r, QueryResult)
        assert r.row_count == 50
        assert r.truncated is True

    def test_under_limit_not_truncated(self, gateway):
        r = gateway.execute_readonly("SELECT * FROM customers", 50)
        assert r.row_count == 5
        assert r.truncated is False

    def test_row_limit_must_be_positive(self, gateway):
        with pytest.raises(ValueError):
            gateway.execute_readonly("SELECT 1", 0)

    def test_generate_series_rewrite_in_from(self, gateway):
        r = gateway.execute_readonly(
            "SELECT generate_series FROM generate_series(1, 3)", 50
        )
        assert r.rows == ((1,), (2,), (3,))

    def test_rewrite_leaves_plain_sql_alone(self):
        assert _rewrite_generate_series("SELECT 1") == "SELECT 1"

    def test_pg_function_shims(self, gateway):
        r = gateway.execute_readonly(
            "SELECT to_char(order_date, 'YYYY/MM'), substring(status, 1, 4) "
            "FROM orders WHERE id = 1",
            50,
        )
        assert r.rows == (("2025/01", "ship"),)
        r = gateway.execute_readonly(
            "SELECT string_agg(name, '; ') FROM products WHERE category = 'furniture'",
            50,
        )
        assert r.rows == (("Desk; Chair",),)


class TestIntrospection:
    def test_list_tables_sorted(self, gateway):
        assert gateway.list_tables() == [
            "customers", "order_items", "orders", "products",
        ]

    def test_table_schema(self, gateway):
        specs = gateway.get_table_schema("customers")
        by_name = {s.name: s for s in specs}
        assert by_name["id"].data_type == "integer"
        assert by_name["email"].is_nullable is True
        assert by_name["name"].is_nullable is False

    def test_unknown_table_raises(self, gateway):
        with pytest.raises(UnknownTable):
            gateway.get_table_schema("nope")

    def test_schema_dump_markdown(self, gateway):
        dump = gateway.get_schema_dump(sample_rows=2)
        assert dump.table_count == 4
        assert "## Table: customers" in dump.markdown
        assert "- email (text, NULL)" in dump.markdown
        assert "Sample rows (up to 2):" in dump.markdown
        assert "Ada Fox" in dump.markdown

    def test_schema_dump_rejects_negative(self, gateway):
        with pytest.raises(ValueError):
            gateway.get_schema_dump(-1)

    def test_statement_count_tracks_usage(self, shop_db_path):
        gw = EmbeddedGateway(embedded_params(shop_db_path))
        assert gw.statement_count == 0
        gw.execute_readonly("SELECT 1", 50)
        gw.list_tables()
        assert gw.statement_count == 2
        gw.close()


class TestFormatError:
    def test_full_rendering_order(self):
        d = ErrorDiagnostics(
            error_type="UndefinedColumn",
            message='column "x" does not exist',
            sqlstate="42703",
            diag_detail="detail here",
            diag_hint="hint here",
            traceback_text="tb line\n",
        )
        assert format_error(d) == (
            "Error type: UndefinedColumn\n"
            'Error message: column "x" does not exist\n'
            "SQLSTATE code: 42703\n"
            "Error detail: detail here\n"
            "Error hint: hint here\n"
            "Traceback:\n"
            "tb line"
        )

    def test_optional_fields_omitted(self):
        d = ErrorDiagnostics(error_type="E", message="m")
        text = format_error(d)
        assert "SQLSTATE" not in text
        assert "detail" not in text
        assert "hint" not in text
        assert "Traceback" not in text

    def test_deterministic(self):
        d = ErrorDiagnostics(error_type="E", message="m", sqlstate="42601")
        assert format_error(d) == format_error(d)


class TestRenderSampleValue:
    def test_null(self):
        assert render_sample_value(None) == "NULL"

    def test_bytes_hex(self):
        assert render_sample_value(b"\x01\xff") == "01ff"

    def test_json_compact(self):
        assert render_sample_value('{"a": 1}', "jsonb") == '{"a":1}'

    def test_datetime_isoformat(self):
        import datetime

        v = datetime.datetime(2025, 1, 5, 12, 30)
        assert render_sample_value(v) == "2025-01-05T12:30:00"


class TestFactory:
    def test_embedded_selection(self, shop_db_path):
        gw = open_gateway(embedded_params(shop_db_path))
        assert isinstance(gw, EmbeddedGateway)
        gw.close()

    def test_postgres_unavailable_maps_to_connect_failed(self):
        params = ConnectionParams(
            host="db.example.invalid", port=5432, dbname="d", user="u", password="p"
        )
        try:
            import psycopg  # noqa: F401
        except ImportError:
            with pytest.raises(ConnectFailed) as excinfo:
                open_gateway(params)
            assert "p@" not in str(excinfo.value)
        else:
            pytest.skip("psycopg installed; connection would be attempted")

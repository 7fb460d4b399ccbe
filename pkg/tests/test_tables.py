import json

import numpy as np
import pandas as pd
import pytest

from core.errors import ConfigError
from core.mc import McConfig
from features.tables import TABLES, otm_implied_vol, run_table, table_spec, write_table
from core.market import black_price


def test_table_ids():
    assert set(TABLES) == {"lv1d_calib", "basket2d", "basket3d", "hw_adj", "heston", "glv_calib"}


def test_calibration_table_cells():
    spec = table_spec("lv1d_calib")
    cells = spec.cells()
    assert len(cells) == 56
    assert (200, 2.0) not in cells and (200, 3.0) in cells
    assert (100, 0.25) in cells and (50, 1.0) not in cells
    per_strike = [sum(1 for K, _ in cells if K == strike) for strike in spec.strikes]
    assert per_strike == [3, 4, 5, 6, 6, 6, 6, 6, 5, 4, 3, 2]


def test_table_defaults_and_overrides():
    spec = table_spec("basket3d")
    assert spec.steps == 12 and spec.grid_finess == (0.2, 0.2, 0.2)
    assert spec.correlation == (0.5, 0.5, 0.5)
    changed = table_spec("basket3d", steps=6, grid_finess=0.4, correlation=0.3)
    assert changed.steps == 6 and changed.grid_finess == (0.4, 0.4, 0.4)
    assert changed.correlation == (0.3, 0.3, 0.3)
    assert table_spec("basket2d", correlation=-0.2).correlation == -0.2
    assert TABLES["basket3d"].steps == 12


def test_unknown_table_and_bad_override():
    with pytest.raises(ConfigError):
        table_spec("lv4d_calib")
    with pytest.raises(ConfigError):
        table_spec("heston", correlation=0.3)


@pytest.mark.parametrize("strike,is_call", [(80.0, False), (100.0, True), (120.0, True)])
def test_otm_implied_vol_picks_the_out_of_the_money_side(strike, is_call):
    seen = []

    def price(payoff):
        seen.append(payoff.name)
        kind = "call" if payoff.name.startswith("call") else "put"
        return black_price(100.0, strike, 1.0, 0.3, is_call=kind == "call")

    assert otm_implied_vol(price, strike, 1.0, 100.0, 1.0) == pytest.approx(0.3, abs=1e-10)
    assert seen[0].startswith("call" if is_call else "put")


def test_heston_table_layout():
    frame = run_table("heston", steps=8)
    assert list(frame.index) == [90, 100, 110]
    assert frame.index.name == "strike"
    assert list(frame.columns) == ["call_grid", "call_grid_full"]
    np.testing.assert_allclose(frame["call_grid"], np.round(frame["call_grid_full"], 2))
    assert frame["call_grid_full"].is_monotonic_decreasing


def test_heston_table_with_monte_carlo_columns():
    frame = run_table("heston", with_mc=True, mc=McConfig(paths=4_000, steps_per_year=10, seed=1), steps=8)
    assert list(frame.columns) == ["call_grid", "call_grid_full", "call_mc", "call_mc_full", "call_mc_stderr"]
    assert np.all(frame["call_mc_stderr"] > 0.0)


def test_vol_difference_table_layout():
    frame = run_table("hw_adj", steps=10)
    assert list(frame.columns) == ["T=0.5", "T=0.5_full", "T=1", "T=1_full", "T=3", "T=3_full"]
    assert frame.notna().all().all()


def test_write_table_csv_and_json(tmp_path):
    frame = pd.DataFrame({"call_grid": [1.23], "call_grid_full": [1.2345]}, index=pd.Index([100], name="strike"))
    out = tmp_path / "table.csv"
    text = write_table(frame, str(out))
    assert out.read_text() == text
    assert text.splitlines()[0] == "strike,call_grid,call_grid_full"
    records = json.loads(write_table(frame, as_json=True))
    assert records == [{"strike": 100, "call_grid": 1.23, "call_grid_full": 1.2345}]

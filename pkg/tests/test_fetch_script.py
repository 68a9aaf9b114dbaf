import importlib.util
import os

import pytest

from multiconf.data import CONCRETE_COVARIATES, CONCRETE_RESPONSES, load_csv

_PATH = os.path.join(os.path.dirname(__file__), "..", "scripts", "fetch_concrete.py")
_spec = importlib.util.spec_from_file_location("fetch_concrete", _PATH)
fetch = importlib.util.module_from_spec(_spec)
_spec.loader.exec_module(fetch)

RAW = (
    b"No,Cement,Slag,Fly ash,Water,SP,Coarse Aggr.,Fine Aggr.,SLUMP(cm),FLOW(cm),Compressive Strength (28-day)(Mpa)\n"
    b"1,273,82,105,210,9,904,680,23,62,34.99\n"
    b"2,163,149,191,180,12,843,746,0,20,41.14\n"
)


def test_convert_drops_index_and_loads_as_q2(tmp_path):
    rows = fetch.convert(RAW)
    assert rows[0][0] == "273" and len(rows[0]) == len(fetch.COLUMNS)
    out = tmp_path / "c.csv"
    out.write_text(",".join(fetch.COLUMNS) + "\n" + "\n".join(",".join(r) for r in rows) + "\n")
    data = load_csv(out, CONCRETE_COVARIATES, CONCRETE_RESPONSES)
    assert (data.n, data.p, data.q) == (2, 7, 2)
    assert data.responses[1].tolist() == [0.0, 20.0]


def test_convert_rejects_wrong_width():
    with pytest.raises(ValueError):
        fetch.convert(b"h\n1,2,3\n")

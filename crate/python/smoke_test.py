"""Smoke test for the tdmh Python extension.

Build and install first:  pip install ./crates/py
"""

import tdmh

GRAPH = "0 1 1.0\n1 2 1.0\n2 3 1.0\n1 3 0.9\n"
STREAMS = "3 0 200 2 1\n2 0 100 1 1\n"
SCENARIO = """
[config]
max_nodes = 8

[graph]
0 1 1.0
0 2 1.0
1 2 1.0
1 3 1.0
2 3 1.0

[streams]
2000 3 0 200 1 1

[run]
duration_ms = 20000
"""


def main():
    assert tdmh.validate_config("") == []
    assert tdmh.validate_config('control_superframe = ["downlink"]\n')
    overhead = tdmh.control_overhead("")
    assert 0.0 < overhead < 1.0

    out = tdmh.schedule(GRAPH, STREAMS)
    assert out["rejections"] == [], out["rejections"]
    assert out["dump"].startswith("# schedule")
    assert tdmh.verify(out["bytes"], GRAPH) == []
    for stream_id, ms in out["latency"].items():
        assert ms <= 200, (stream_id, ms)

    m = tdmh.simulate(SCENARIO, seed=3)
    assert m["formation_ms"] is not None
    assert m["streams"][0]["reliability"] == 1.0
    assert m == tdmh.simulate(SCENARIO, seed=3)

    idle, busy = tdmh.power(0.0, 0.2), tdmh.power(1.0, 0.2)
    assert 0.0 < idle < busy

    try:
        tdmh.schedule("0 1 nope\n", STREAMS)
    except ValueError:
        pass
    else:
        raise AssertionError("bad graph accepted")

    print(f"ok: overhead {overhead:.4f}, formation {m['formation_ms']} ms, "
          f"power {idle:.3f}..{busy:.3f} mA")


if __name__ == "__main__":
    main()

"""Smoke test for the pyecsw extension module."""

import json
import math

import pyecsw

SIN = json.dumps({"family": "sinusoid", "amplitude": 1.0, "frequency": 1.0, "phase": 0.0})


def main():
    spec = pyecsw.RoterSpec(4, [[1.0, 0.0], [0.0, 1.0]], [[1.0, 0.0], [0.0, -1.0]], SIN)
    assert spec.n == 4

    c = spec.curvature([math.pi / 2, 0.0, 0.0, 0.0])
    assert abs(c["ricci"][0][0] + 2.0) < 1e-12, c
    assert abs(c["scalar"]) < 1e-12, c
    assert c["weyl_max"] > 1e-3

    o = spec.olszak([0.3, 0.1, 0.2, -0.4])
    assert o["dim_d"] == 1
    assert abs(o["a"][0][0] - 1.0) < 1e-6 and abs(o["a"][1][1] + 1.0) < 1e-6, o

    basis = [[1.0 if i == j else 0.0 for j in range(4)] for i in range(4)]
    euler, generating = spec.charforms([0.3, 0.1, 0.2, -0.4], basis)
    assert abs(euler) < 1e-8 and abs(generating) < 1e-8

    g = spec.geodesic([0.0, 0.0, 0.1, 0.0], [1.0, 0.0, 0.2, -0.1], (0.0, 2.0), 1e-3)
    assert g["norm_drift"] < 1e-7 and g["t_affinity_deviation"] < 1e-7
    assert abs(g["positions"][-1][0] - 2.0) < 1e-9

    config = {"spec": json.loads(spec.to_json()), "sample_count": 5, "seed": 3,
              "checks": ["lemma_2_1_scalar", "ricci_roter_form", "lemma_2_2_i_dimension"]}
    report = json.loads(pyecsw.verify(json.dumps(config)))
    assert report["summary"]["all_passed"], report["summary"]
    assert pyecsw.verify(json.dumps(config)) == pyecsw.verify(json.dumps(config))

    try:
        pyecsw.RoterSpec(4, [[1.0, 0.0], [0.0, 1.0]], [[1.0, 0.0], [0.0, 1.0]], SIN)
    except ValueError as e:
        assert "traceless" in str(e)
    else:
        raise AssertionError("non-traceless A accepted")

    print("pyecsw", pyecsw.__version__, "smoke test passed")


if __name__ == "__main__":
    main()

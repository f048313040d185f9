"""Smoke test for the pydtm extension.

Build and run from the repository root:

    cargo build --release -p dtm-py --features extension-module
    cp target/release/libpydtm.so python/pydtm.so
    python3 python/smoke_test.py
"""

import math
import os
import sys

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import pydtm  # noqa: E402


def main():
    system, partition, dtlps = pydtm.worked_example()
    assert system.dim == 4
    assert partition.num_subgraphs == 2 and partition.num_pairs == 2
    assert partition.vertices(0) == ["1", "2a", "3a"]

    reassembles, hypothesis, classes = partition.validate()
    assert reassembles and hypothesis and classes == ["SPD", "SPD"]

    reduced = partition.reduced_matrices(dtlps)
    assert abs(reduced[0][1][1] - 7.5) < 1e-14
    assert abs(reduced[0][2][2] - 13.3) < 1e-14
    assert abs(reduced[1][0][0] - 8.5) < 1e-14

    x = system.solve()
    trace = pydtm.run_async(partition, dtlps, 2000.0, tol=1e-10)
    assert trace.converged_at is not None and trace.converged_at <= 2000.0
    err = math.sqrt(sum((a - b) ** 2 for a, b in zip(trace.final_x, x)) / len(x))
    assert err <= 1e-8, err
    assert trace.to_csv().startswith("t,subgraph,rms_residual,port_id,u,omega")
    assert "converged_at=" in trace.summary()

    unit = [pydtm.DtlpSpec(d.z, 1.0, 1.0) for d in dtlps]
    vtm = pydtm.run_vtm(partition, unit, 200, tol=1e-10)
    assert vtm.converged_at is not None

    plan = "ASSIGN 1 0\nASSIGN 2 0 1\nASSIGN 3 0 1\nASSIGN 4 1\n"
    halves = pydtm.Partition.from_plan(system, plan)
    assert halves.validate()[0]

    eig = pydtm.za_eigen([[2.0, 0.5], [0.5, 1.0]], [1.0, 3.0])
    assert len(eig) == 2 and all(v > 0 for v in eig)
    l1, l2 = pydtm.lambda_bounds([0.5])
    assert abs(l1[0] - 3.0) < 1e-15 and abs(l2[0] - 1.0 / 3.0) < 1e-15
    try:
        pydtm.lambda_bounds([1.0])
    except ValueError:
        pass
    else:
        raise AssertionError("t = 1 must raise")

    random = pydtm.gen_random_spd(20, 0.2, 7)
    assert random.dim == 20
    assert all(passed for _, passed, _ in pydtm.verify_suite(seed=3, cases=5))
    print("pydtm smoke test passed")


if __name__ == "__main__":
    main()

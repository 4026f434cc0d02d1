"""Smoke test for the fractal_spectra_py extension module.

Build and install first, e.g.
    pip install maturin
    maturin build --release -m crates/py/Cargo.toml
    pip install target/wheels/fractal_spectra_py-*.whl
then run  python python/smoke_test.py
"""

import math

import fractal_spectra_py as fs


def close(x, y, rel):
    return abs(x - y) <= rel * abs(y)


def main():
    sixth = fs.parse_rational("1/6")
    assert sixth == 1 / 6

    p = fs.Problem("hanoi", 1, sixth, sixth)
    assert p.vertex_count() == 9
    assert close(p.rho, 13 / 18, 1e-15)
    assert abs(p.total_mass() - 1.0) < 1e-12

    spec = p.spectrum("dirichlet")
    assert len(spec) == 6
    printed = [(43.20, 1), (57.19, 2), (135.55, 2), (149.54, 1)]
    for (value, mult), (want, want_mult) in zip(spec.clusters, printed):
        assert close(value, want, 5e-3) and mult == want_mult, (value, mult)
    # alternating hexagon mode
    assert close(spec.values[-1], 9720 / 65, 1e-10)

    u = p.eigenfunction(5)
    assert len(u) == 9 and len(p.layout()) == 9

    # boundary resistance against the closed-form series
    for level in (1, 2, 3):
        q = fs.Problem("hanoi", level, sixth, sixth)
        assert abs(q.boundary_resistance() - fs.hanoi_boundary_series(sixth, level)) < 1e-10

    sg = fs.Problem("sg3", 2, 1 / 12, 1 / 12, b=1 / 13)
    assert abs(sg.total_mass() - 1.0) < 1e-12
    assert fs.check_compatibility("sg3", 1 / 12) < 1e-10
    assert fs.check_compatibility("hanoi", sixth, rho=1.01 * 13 / 18) > 1e-4

    regime, d_s, _ = fs.sg3_regime(1 / 6, 1 / 6)
    assert regime == "critical"
    assert abs(d_s - 2 * math.log(3) / math.log(5)) < 1e-12

    assert close(fs.renormalization_factor(sixth, sixth), 13 / 3, 1e-14)
    qg = fs.qg_spectrum(1, sixth, 4.0)
    assert close(qg[0], 10.247, 1e-3), qg[:3]

    fit = fs.Problem("hanoi", 4, sixth, sixth).spectrum().fit_exponent()
    assert 0.4 < fit.slope < 0.8, fit

    try:
        fs.Problem("sg3", 1, 0.5, 1 / 12, b=1 / 13)
    except ValueError:
        pass
    else:
        raise AssertionError("r = 1/2 must be rejected for sg3")

    print("smoke test passed")


if __name__ == "__main__":
    main()

import cmath
import json
import math

import numpy as np
import pytest

from cuspvol.moebius import MoebiusMap, canonical_circles, maps_exterior_into
from cuspvol.schottky import (AdmissibleFamily, DegeneratingGenerator, FamilyNotAdmissible,
                              FixedGenerator, NotAdapted, PairingViolated, SpecError,
                              circle_gap, circle_path_lipschitz, family_parameters,
                              geometric_grid, good_domain_circles, parse_spec, tangency_points,
                              validate_family_at, validate_group)


def genus2():
    g1 = MoebiusMap.from_fixed_points(-1, 1, 9)
    g2 = MoebiusMap.from_fixed_points(10 - 0.5j, 10 + 0.5j, 9 * cmath.exp(0.3j))
    circles = list(canonical_circles(g1)) + list(canonical_circles(g2))
    return [g1, g2], circles


def test_validate_genus2():
    gens, circles = genus2()
    G = validate_group(gens, circles)
    assert G.genus == 2 and G.min_gap > 0.49 and G.max_pairing_dev < 1e-10
    assert G.in_domain(5.0) and not G.in_domain(1.25)


def test_validate_overlap():
    gens, circles = genus2()
    g2 = MoebiusMap.from_fixed_points(1.5, 2.5, 9)
    with pytest.raises(NotAdapted) as info:
        validate_group([gens[0], g2], circles[:2] + list(canonical_circles(g2)))
    assert "not adapted" in str(info.value) and info.value.pair == (1, 2)


def test_validate_wrong_pair():
    gens, circles = genus2()
    swapped = [circles[1], circles[0]] + circles[2:]
    with pytest.raises(PairingViolated) as info:
        validate_group(gens, swapped)
    assert "pairing violated" in str(info.value) and info.value.deviation > 1e-3


def cyclic_family(nu=0.7, c=1.3 - 0.4j, p=0.3 + 0.1j):
    gen = DegeneratingGenerator(p, c, lambda e: e, lambda e: nu)
    return AdmissibleFamily((gen,), geometric_grid(0.1, 8))


def test_family_parameters():
    fam = AdmissibleFamily((DegeneratingGenerator(0, 1, lambda e: e, lambda e: 0.0,
                                                  p_minus=lambda e: 0, p_plus=lambda e: e),))
    lam, nu = family_parameters(fam, 0, 0.01)
    assert abs(lam - 1) < 1e-14 and nu == 0
    fam = AdmissibleFamily((DegeneratingGenerator(0, 1, lambda e: e, lambda e: 1.0),))
    lam0, _ = family_parameters(fam, 0, 0.0)
    assert abs(lam0 - math.sqrt(2)) < 1e-14
    fam = AdmissibleFamily((DegeneratingGenerator(0, 1, lambda e: e, lambda e: e * e / e),))
    assert abs(family_parameters(fam, 0, 1e-3)[1] - 1e-3) < 1e-15


def test_family_parameters_continuous_at_zero():
    fam = cyclic_family()
    lam0, _ = family_parameters(fam, 0, 0.0)
    vals = [family_parameters(fam, 0, e)[0] for e in fam.eps_grid]
    assert abs(vals[-1] - lam0) < 1e-12
    assert max(abs(a - b) for a, b in zip(vals, vals[1:])) < 1e-12


def test_good_domain_cyclic_and_limit():
    fam = cyclic_family()
    fam.check_multipliers()
    for e in fam.eps_grid:
        G = validate_family_at(fam, e)
        assert G.max_pairing_dev < 1e-8
    c0 = good_domain_circles(fam, 0.0)
    assert abs(c0[0].radius - math.sqrt(1 + 0.49) / abs(1.3 - 0.4j)) < 1e-14
    assert abs(circle_gap(c0[0], c0[1])) < 1e-8
    tp = tangency_points(fam)[0]
    assert abs(tp - (0.3 + 0.1j)) < 1e-8
    assert circle_path_lipschitz(fam) < 10


def test_fixed_generator_unchanged_and_admissibility_failure():
    gens, circles = genus2()
    deg = DegeneratingGenerator(0.0, 1.0, lambda e: e, lambda e: 0.0)
    fam = AdmissibleFamily((deg, FixedGenerator(gens[1])), geometric_grid(0.1, 4))
    a = good_domain_circles(fam, 0.1)[2:]
    b = good_domain_circles(fam, 0.0)[2:]
    assert a == b
    bad = AdmissibleFamily((deg, FixedGenerator(MoebiusMap.from_fixed_points(0.5, 1.5, 9))), (0.1,))
    with pytest.raises(FamilyNotAdmissible):
        good_domain_circles(bad, 0.1)


def test_parse_spec_roundtrip(tmp_path):
    text = json.dumps({"generators": [
        {"type": "degenerating", "p": "0.3+0.1j", "c": [1.3, -0.4], "ell": "eps", "nu": "0.7"},
        {"type": "fixed", "matrix": [["1", "0"], ["0.1", "1"]], "circles": [[[5, 0], 1], [[-5, 0], 1]]}],
        "eps_grid": {"eps0": 0.2, "n": 5}})
    kind, fam = parse_spec(text)
    assert kind == "family" and fam.genus == 2 and len(fam.eps_grid) == 5
    assert abs(fam.generators[0].c - (1.3 - 0.4j)) == 0
    tab = {"eps": [0.0, 0.1, 0.2, 0.3], "values": [0.0, 0.1, 0.2, 0.3]}
    kind, fam = parse_spec(json.dumps({"generators": [
        {"type": "degenerating", "p": 0, "c": 1, "ell": tab}], "eps_grid": [0.2, 0.1]}))
    assert abs(fam.generators[0].ell(0.15) - 0.15) < 1e-12


def test_parse_spec_errors():
    with pytest.raises(SpecError, match="line 2"):
        parse_spec('{"generators":\n [1,,2]}')
    with pytest.raises(SpecError):
        parse_spec('{"generators": [{"type": "degenerating", "p": 0, "c": 1, "ell": "eps + t"}]}')
    with pytest.raises(SpecError):
        parse_spec('{"nothing": 1}')


def test_group_spec_canonical_default():
    g1 = MoebiusMap.from_fixed_points(-1, 1, 9)
    m = [[str(g1.a), str(g1.b)], [str(g1.c), str(g1.d)]]
    kind, gens, circles = parse_spec(json.dumps({"generators": [{"matrix": m}]}))
    assert kind == "group" and gens[0] == g1
    dev, ok = maps_exterior_into(gens[0], circles[0], circles[1])
    assert ok

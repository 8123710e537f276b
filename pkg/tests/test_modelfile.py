import numpy as np
import pytest

from hdmn.errors import ModelError
from hdmn.exact import brute_force_marginals, exact_filter, jtc_infer
from hdmn.modelfile import dump, dumps, load, loads
from hdmn.network import DynamicMixedNetwork, MixedNetwork, unroll
from hdmn.random_models import random_dbn, random_hmm, random_hmn, sample_dbn
from hdmn.transport import build_transport_model, default_goals, grid_graph

HMM_TEXT = """hdmn/1
# two-state chain
DYNAMICS
dynamic toy
interface x
VARIABLES
discrete x 2 off on
continuous z
CPDS
[prior]
table x | = 0.5 0.5
gaussian z | x ; = 0 1.0  3 2.0
[transition]
table x | x' = 0.9 0.1
    0.2 0.8
gaussian z | x ; = 0 1.0  3 2.0
CONSTRAINTS
[transition]
allow stay-or-rise : x' x = 0 0, 0 1, 1 1
"""


def _same_static(a: MixedNetwork, b: MixedNetwork):
    assert sorted(a.variables) == sorted(b.variables)
    for v in a.variables:
        assert a.variables[v].name == b.variables[v].name
        assert a.variables[v].domain_size == b.variables[v].domain_size
    assert sorted(a.cpds) == sorted(b.cpds)
    for v, c in a.cpds.items():
        d = b.cpds[v]
        assert c.scope == d.scope if hasattr(c, "scope") else True
        for name in ("table", "intercept", "coefficients", "variance"):
            if hasattr(c, name):
                assert np.array_equal(np.asarray(getattr(c, name)), np.asarray(getattr(d, name)))
    assert [(r.scope, r.allowed) for r in a.constraints] == [(r.scope, r.allowed) for r in b.constraints]


def test_parse_small_dynamic_model():
    dmn = loads(HMM_TEXT)
    assert isinstance(dmn, DynamicMixedNetwork) and dmn.name == "toy"
    assert dmn.interface == (0,)
    assert dmn.variable(0).labels == ("off", "on")
    np.testing.assert_allclose(dmn.transition.cpds[0].table, [[0.9, 0.1], [0.2, 0.8]])
    (c,) = dmn.transition.constraints
    assert c.name == "stay-or-rise" and (1, 0) not in c.allowed
    zs = [0.1, 3.2, 0.0]
    out = exact_filter(dmn, [{1: z} for z in zs])
    ref = brute_force_marginals(unroll(dmn, 2), {dmn.unrolled_id(t, 1): z for t, z in enumerate(zs)})
    np.testing.assert_allclose(out[2].marginals[0], ref[dmn.unrolled_id(2, 0)], atol=1e-10)


@pytest.mark.parametrize("seed", range(5))
def test_round_trip_static(seed):
    net = random_hmn(seed, n_discrete=4, n_continuous=3, n_constraints=2)
    back = loads(dumps(net))
    _same_static(net, back)
    a, b = jtc_infer(net), jtc_infer(back)
    for v in net.discrete_ids:
        np.testing.assert_array_equal(a[v], b[v])


@pytest.mark.parametrize("seed", range(5))
def test_round_trip_dynamic(seed, tmp_path):
    dmn = random_dbn(seed, n_discrete=3, n_continuous=1, n_constraints=2)
    dump(dmn, tmp_path / "m.hdmn")
    back = load(tmp_path / "m.hdmn")
    _same_static(dmn.prior, back.prior)
    _same_static(dmn.transition, back.transition)
    assert back.previous == dmn.previous and back.interface == dmn.interface
    obs = [{v: s[v] for v in dmn.state_ids[-1:]} for s in sample_dbn(dmn, 3, seed)]
    for x, y in zip(exact_filter(dmn, obs), exact_filter(back, obs)):
        for v in range(3):
            np.testing.assert_array_equal(x.marginals[v], y.marginals[v])


def test_round_trip_transport_model():
    g = grid_graph(3, 3)
    m = build_transport_model(g, default_goals(g, [0, 2, 8]))
    back = loads(dumps(m.dmn))
    _same_static(m.dmn.transition, back.transition)
    assert dumps(back) == dumps(m.dmn)


def test_switch_rules_macro():
    text = """hdmn/1
DYNAMICS
dynamic
VARIABLES
discrete eq 2
discrete f 3
discrete sw 2
CPDS
[prior]
table eq | = 0.5 0.5
table f | = 1 0 0
table sw | = 1 0
[transition]
table eq | = 0.5 0.5
table f | = 0.3 0.3 0.4
table sw | = 0.5 0.5
CONSTRAINTS
[transition]
switch-rules D=2 : eq' f' f sw
"""
    dmn = loads(text)
    assert [c.name for c in dmn.transition.constraints] == [f"rule{k}" for k in range(1, 9)]


@pytest.mark.parametrize("text, where", [
    ("nope\n", "first line"),
    ("hdmn/1\nVARIABLES\ndiscrete x 2\n", "DYNAMICS must come first"),
    ("hdmn/1\nDYNAMICS\nstatic\nVARIABLES\ndiscrete x 2\nBOGUS\n", "unknown section"),
    ("hdmn/1\nDYNAMICS\nstatic\nVARIABLES\ndiscrete x 2\nCPDS\n[network]\ntable y | = 1 0\n", "unknown variable"),
    ("hdmn/1\nDYNAMICS\nstatic\nVARIABLES\ndiscrete x 2\nCPDS\n[network]\ntable x | = 1 0 0\n", "needs 2 numbers"),
    ("hdmn/1\nDYNAMICS\nstatic\nVARIABLES\ndiscrete x 2\nCPDS\n[prior]\ntable x | = 1 0\n", "not valid"),
    ("hdmn/1\nDYNAMICS\nstatic\nVARIABLES\ndiscrete x 2 a\n", "label count"),
    ("hdmn/1\nDYNAMICS\nstatic\nVARIABLES\ndiscrete x 2\nCPDS\n[network]\ntable x | = 0.7 0.7\n", "sum"),
])
def test_errors_name_the_problem(text, where):
    with pytest.raises(ModelError, match=where):
        loads(text, "m.hdmn")


def test_error_reports_line_number():
    with pytest.raises(ModelError, match=r"m\.hdmn:6:"):
        loads("hdmn/1\nDYNAMICS\nstatic\nVARIABLES\ndiscrete x 2\nfoo x\n", "m.hdmn")


def test_interface_mismatch_detected():
    bad = HMM_TEXT.replace("interface x", "interface z")
    with pytest.raises(ModelError, match="interface"):
        loads(bad)


def test_hmm_dump_is_stable():
    dmn = random_hmm(1, 2, 2)
    assert dumps(loads(dumps(dmn))) == dumps(dmn)

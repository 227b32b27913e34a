import json

import numpy as np
import pytest

from varsns.errors import ConfigError, ModelValidationError
from varsns.model import (
    LinearModel,
    Reaction,
    ReactionNetwork,
    builtin_model,
    bundled_fixture,
    eval_rates,
    eval_rhs,
    eval_rhs_jacobian,
    load_model,
    model_from_dict,
    model_to_dict,
    perturb_initial_state,
)


def small_network():
    # A + B -> C (k=2), 2C -> A (k=0.5), C -> 0 (k=1)
    return ReactionNetwork(
        ["A", "B", "C"],
        [
            Reaction({0: 1, 1: 1}, {2: 1}, 2.0),
            Reaction({2: 2}, {0: 1}, 0.5),
            Reaction({2: 1}, {}, 1.0),
        ],
    )


def test_stoichiometry_built_from_orders():
    net = small_network()
    expected = np.array([[-1, 1, 0], [-1, 0, 0], [1, -2, -1]], dtype=float)
    np.testing.assert_array_equal(net.theta, expected)


def test_rates_match_hand_computation():
    net = small_network()
    x = np.array([0.3, 2.0, 1.5])
    np.testing.assert_allclose(eval_rates(net, x), [2.0 * 0.3 * 2.0, 0.5 * 1.5**2, 1.5], rtol=1e-15)


def test_rhs_is_theta_times_rates():
    net = small_network()
    x = np.array([0.3, 2.0, 1.5])
    psi = np.array([1.2, 1.125, 1.5])
    np.testing.assert_allclose(eval_rhs(net, x), net.theta @ psi, rtol=1e-14)


def test_zero_concentration_convention():
    # 0 ** 0 = 1: a reaction not involving a zero species is unaffected.
    net = small_network()
    rates = eval_rates(net, np.array([0.0, 0.0, 2.0]))
    assert rates[0] == 0.0
    assert rates[1] == 0.5 * 4.0


@pytest.mark.parametrize("x", [[0.3, 2.0, 1.5], [0.0, 1.0, 0.0], [1e-3, 5.0, 2.0]])
def test_jacobian_matches_central_differences(x):
    net = small_network()
    x = np.array(x)
    J = eval_rhs_jacobian(net, x)
    h = 1e-6
    fd = np.column_stack(
        [(net.rhs(x + h * e) - net.rhs(x - h * e)) / (2 * h) for e in np.eye(3)]
    )
    np.testing.assert_allclose(J, fd, atol=1e-8)


def test_batch_methods_agree_with_single():
    net = load_model(bundled_fixture("h2o2_toy"))
    rng = np.random.default_rng(3)
    X = rng.uniform(0, 2, size=(4, net.dimension))
    np.testing.assert_allclose(net.rhs_batch(X), np.stack([net.rhs(x) for x in X]), rtol=1e-14)
    np.testing.assert_allclose(net.jacobian_batch(X), np.stack([net.jacobian(x) for x in X]), rtol=1e-14)


def test_bundled_network_stoichiometry():
    # Net change in molecule count per reaction, checked by hand from the mechanism.
    net = load_model(bundled_fixture("h2o2_toy"))
    assert net.dimension == 9 and net.n_reactions == 24
    expected = [0, 0, 0, 0, 0, 0, 0, 0, 1, -1, -1, 1, -1, 1, -1, 1, 0, 0, 0, 0, 0, 0, 1, -1]
    np.testing.assert_array_equal(net.theta.sum(axis=0), expected)


@pytest.mark.parametrize("name", ["h2o2_toy", "oxidation_toy"])
def test_bundled_networks_conserve_mass(name):
    net = load_model(bundled_fixture(name))
    assert net.closed
    np.testing.assert_allclose(net.masses @ net.theta, 0.0, atol=1e-12)


def test_json_round_trip(tmp_path):
    net = load_model(bundled_fixture("h2o2_toy"))
    doc = model_to_dict(net)
    path = tmp_path / "m.json"
    path.write_text(json.dumps(doc))
    again = load_model(path)
    np.testing.assert_array_equal(again.theta, net.theta)
    np.testing.assert_array_equal(again.kappa, net.kappa)
    assert again.closed == net.closed and again.species == net.species


def test_missing_file_names_the_path(tmp_path):
    path = tmp_path / "absent.json"
    with pytest.raises(ConfigError, match="absent.json"):
        load_model(path)


@pytest.mark.parametrize(
    "doc, field",
    [
        ({"species": ["A"], "reactions": [{"reactants": {"0": 1}, "products": {}, "rate_constant": -1}]}, "rate_constant"),
        ({"species": ["A"], "reactions": [{"reactants": {"x": 1}, "products": {}, "rate_constant": 1}]}, "reactants"),
        ({"species": ["A"], "reactions": [{"reactants": {"0": 1.5}, "products": {}, "rate_constant": 1}]}, "reactants"),
        ({"species": ["A"], "reactions": [{"reactants": {"3": 1}, "products": {}, "rate_constant": 1}]}, "reactions[0]"),
        ({"species": ["A"], "reactions": [{"reactants": {}, "products": {}, "rate_constant": 1}]}, "reactions[0]"),
        ({"species": "A", "reactions": []}, "species"),
    ],
)
def test_invalid_documents_name_the_field(doc, field):
    with pytest.raises(ModelValidationError) as info:
        model_from_dict(doc)
    assert field in str(info.value)


def test_builtins():
    zero = builtin_model("zero")
    assert np.all(zero.rhs(np.ones(3)) == 0)
    lin = builtin_model("scalar-linear")
    assert isinstance(lin, LinearModel) and lin.rhs(np.array([2.0]))[0] == -2.0
    with pytest.raises(ConfigError):
        builtin_model("nope")


def test_shape_checks():
    net = small_network()
    with pytest.raises(ConfigError):
        eval_rhs(net, np.ones(4))
    with pytest.raises(ConfigError):
        eval_rates(builtin_model("linear"), np.ones(3))


def test_perturbation_in_range_and_reproducible():
    x0 = np.array([1.0, 2.0])
    a = [perturb_initial_state(x0, 0.2, np.random.default_rng(s)) for s in range(50)]
    for state, alpha in a:
        assert 0.0 < alpha < 0.2
        np.testing.assert_allclose(state, (1 + alpha) * x0)
    again = perturb_initial_state(x0, 0.2, np.random.default_rng(7))
    np.testing.assert_array_equal(again[0], a[7][0])
    with pytest.raises(ConfigError):
        perturb_initial_state(x0, 0.0, np.random.default_rng(0))


def test_bundled_rates_match_naive_monomials():
    net = load_model(bundled_fixture("h2o2_toy"))
    x = np.random.default_rng(5).uniform(0.1, 3.0, net.dimension)
    naive = []
    for rxn in net.reactions:
        p = rxn.rate_constant
        for i, q in rxn.reactants.items():
            for _ in range(q):
                p *= x[i]
        naive.append(p)
    np.testing.assert_allclose(eval_rates(net, x), naive, rtol=1e-14)

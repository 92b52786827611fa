from __future__ import annotations

import random

import pytest

from cloudline.common import DocumentError
from cloudline.feature_model import (
    Configuration,
    Excludes,
    ModelFormatError,
    Requires,
    AttrPredicate,
    UnboundAttributeError,
    ViolationRule,
    config_digest,
    enumerate_configurations,
    evaluate_constraint,
    parse_configuration,
    parse_feature_model,
    propagate_decisions,
    serialize_feature_model,
    validate_configuration,
)
from oracles import oracle_enumerate, oracle_key
from randmodels import random_model


def cfg(fm, *ids, **bindings):
    flat = {}
    for fid_attr, value in bindings.items():
        fid, attr = fid_attr.split("__")
        flat[(fid, attr)] = value
    return Configuration(model_id=fm.model_id, selected=frozenset(ids), bindings=flat)


# ---------------------------------------------------------------------------
# Parsing


def test_parse_figure1_shape(fig1):
    assert len(fig1.features) == 5
    assert fig1.root == "IaaS"
    groups = [f.group for f in fig1.features.values() if f.group is not None]
    assert len(groups) == 1
    assert (groups[0].min, groups[0].max) == (1, 1)
    assert groups[0].members == ("Linux", "Windows")


def test_parse_single_root():
    fm = parse_feature_model(
        {"model_id": "m", "provider_id": "p", "layer": "PaaS", "features": [{"id": "r", "name": "r"}]}
    )
    assert len(fm.features) == 1
    assert all(f.group is None for f in fm.features.values())


def test_parse_dangling_group_member(fig1_doc):
    fig1_doc["features"][1]["group"]["members"] = ["Linux", "BSD"]
    with pytest.raises(ModelFormatError, match="dangling group member: BSD"):
        parse_feature_model(fig1_doc)


def test_parse_duplicate_id(fig1_doc):
    fig1_doc["features"].append({"id": "IDE", "name": "IDE2", "parent": "IaaS"})
    with pytest.raises(ModelFormatError, match="duplicate feature id: IDE"):
        parse_feature_model(fig1_doc)


def test_parse_duplicate_name(fig1_doc):
    fig1_doc["features"].append({"id": "IDE2", "name": "IDE", "parent": "IaaS"})
    with pytest.raises(ModelFormatError, match="duplicate feature name: IDE"):
        parse_feature_model(fig1_doc)


def test_parse_dangling_parent(fig1_doc):
    fig1_doc["features"][2]["parent"] = "Ghost"
    with pytest.raises(ModelFormatError, match="dangling parent: Ghost"):
        parse_feature_model(fig1_doc)


def test_parse_invalid_cardinality(fig1_doc):
    fig1_doc["features"][1]["group"]["min"] = 2
    fig1_doc["features"][1]["group"]["max"] = 1
    with pytest.raises(ModelFormatError, match="invalid cardinality: min 2 > max 1"):
        parse_feature_model(fig1_doc)


def test_parse_cardinality_exceeds_members(fig1_doc):
    fig1_doc["features"][1]["group"]["max"] = 3
    with pytest.raises(ModelFormatError, match="invalid cardinality: max 3 > 2 members"):
        parse_feature_model(fig1_doc)


def test_parse_default_outside_domain(fig1_doc):
    fig1_doc["features"][0]["attributes"] = [{"name": "ram", "domain": [2, 4], "default": 16}]
    with pytest.raises(ModelFormatError, match="default outside domain: ram=16"):
        parse_feature_model(fig1_doc)


def test_parse_constraint_unknown_feature(fig1_doc):
    fig1_doc["constraints"] = [{"kind": "requires", "a": "IDE", "b": "Ghost"}]
    with pytest.raises(ModelFormatError, match="unknown feature in constraint: Ghost"):
        parse_feature_model(fig1_doc)


def test_parse_constraint_unknown_attribute(fig1_doc):
    fig1_doc["constraints"] = [
        {"kind": "attr_predicate", "feature": "IDE", "attr": "ram", "comparator": ">=", "literal": 1}
    ]
    with pytest.raises(ModelFormatError, match="unknown attribute in constraint: ram"):
        parse_feature_model(fig1_doc)


def test_parse_rejects_unknown_keys(fig1_doc):
    fig1_doc["extra"] = 1
    with pytest.raises(DocumentError, match="unknown keys: extra"):
        parse_feature_model(fig1_doc)


def test_parse_rejects_parent_cycle():
    doc = {
        "model_id": "m",
        "provider_id": "p",
        "layer": "IaaS",
        "features": [
            {"id": "r", "name": "r"},
            {"id": "a", "name": "a", "parent": "b"},
            {"id": "b", "name": "b", "parent": "a"},
        ],
    }
    with pytest.raises(ModelFormatError, match="parent cycle"):
        parse_feature_model(doc)


def test_parse_rejects_undeclared_placeholder(fig1_doc):
    fig1_doc["features"][2]["artifact_templates"] = [
        {"kind": "entry", "key": "ide.mem", "value": "${ram}"}
    ]
    with pytest.raises(ModelFormatError, match=r"undeclared placeholder: \$\{ram\}"):
        parse_feature_model(fig1_doc)


def test_round_trip_figure1(fig1):
    text = serialize_feature_model(fig1)
    assert parse_feature_model(text) == fig1
    assert serialize_feature_model(parse_feature_model(text)) == text


def test_round_trip_random_models():
    rng = random.Random(7201)
    for _ in range(40):
        fm = random_model(rng, max_features=10)
        text = serialize_feature_model(fm)
        assert parse_feature_model(text) == fm


# ---------------------------------------------------------------------------
# Validation


def test_validate_figure1_valid(fig1):
    report = validate_configuration(fig1, cfg(fig1, "IaaS", "OS", "Linux"))
    assert report.ok
    # cross-check against the brute-force oracle
    assert any(c.selected == frozenset({"IaaS", "OS", "Linux"}) for c in oracle_enumerate(fig1))


def test_validate_xor_both(fig1):
    report = validate_configuration(fig1, cfg(fig1, "IaaS", "OS", "Linux", "Windows"))
    assert [(v.rule, v.offenders) for v in report.violations] == [
        (ViolationRule.GROUP_CARDINALITY, ("OS",))
    ]


def test_validate_missing_mandatory_and_parent(fig1):
    report = validate_configuration(fig1, cfg(fig1, "IaaS", "Linux"))
    assert [(v.rule, v.offenders) for v in report.violations] == [
        (ViolationRule.MANDATORY_MISSING, ("OS",)),
        (ViolationRule.PARENT_MISSING, ("Linux",)),
    ]


def test_validate_root_missing(fig1):
    report = validate_configuration(fig1, cfg(fig1))
    assert report.violations[0].rule is ViolationRule.ROOT_MISSING


def test_validate_requires_excludes_and_predicates(fig1_doc):
    fig1_doc["features"][2]["attributes"] = [{"name": "mem", "domain": [1, 2, 4], "default": 1}]
    fig1_doc["constraints"] = [
        {"kind": "requires", "a": "IDE", "b": "Linux"},
        {"kind": "excludes", "a": "IDE", "b": "Windows"},
        {"kind": "attr_predicate", "feature": "IDE", "attr": "mem", "comparator": ">=", "literal": 2},
    ]
    fm = parse_feature_model(fig1_doc)
    report = validate_configuration(
        fm, cfg(fm, "IaaS", "OS", "Windows", "IDE", IDE__mem=1)
    )
    assert [v.rule for v in report.violations] == [
        ViolationRule.REQUIRES,
        ViolationRule.EXCLUDES,
        ViolationRule.ATTR_PREDICATE,
    ]
    unbound = validate_configuration(fm, cfg(fm, "IaaS", "OS", "Linux", "IDE"))
    assert [v.rule for v in unbound.violations] == [ViolationRule.ATTR_UNBOUND]


def test_validate_model_mismatch(fig1):
    with pytest.raises(ValueError, match="targets model"):
        validate_configuration(fig1, Configuration(model_id="other", selected=frozenset()))


def test_validate_unknown_feature(fig1):
    with pytest.raises(ValueError, match="unknown feature id: Ghost"):
        validate_configuration(fig1, cfg(fig1, "IaaS", "Ghost"))


def test_validate_binding_outside_domain(fig1_doc):
    fig1_doc["features"][0]["attributes"] = [{"name": "ram", "domain": [2, 4], "default": 2}]
    fm = parse_feature_model(fig1_doc)
    with pytest.raises(ValueError, match="binding outside domain"):
        validate_configuration(fm, cfg(fm, "IaaS", "OS", "Linux", IaaS__ram=3))


# ---------------------------------------------------------------------------
# Enumeration


def test_enumerate_figure1(fig1):
    result = enumerate_configurations(fig1, 100)
    selections = [sorted(c.selected) for c in result.configurations]
    assert selections == [
        ["IDE", "IaaS", "Linux", "OS"],
        ["IDE", "IaaS", "OS", "Windows"],
        ["IaaS", "Linux", "OS"],
        ["IaaS", "OS", "Windows"],
    ]
    assert not result.truncated


def test_enumerate_single_root():
    fm = parse_feature_model(
        {"model_id": "m", "provider_id": "p", "layer": "SaaS", "features": [{"id": "r", "name": "r"}]}
    )
    result = enumerate_configurations(fm, 10)
    assert [c.selected for c in result.configurations] == [frozenset({"r"})]


def test_enumerate_attribute_bindings():
    fm = parse_feature_model(
        {
            "model_id": "m",
            "provider_id": "p",
            "layer": "IaaS",
            "features": [
                {"id": "r", "name": "r", "attributes": [{"name": "ram_gb", "domain": [2, 4, 8], "default": 2}]}
            ],
        }
    )
    result = enumerate_configurations(fm, 10)
    assert [c.bindings[("r", "ram_gb")] for c in result.configurations] == [2, 4, 8]
    assert {c.selected for c in result.configurations} == {frozenset({"r"})}


def test_enumerate_limit_truncates(fig1):
    result = enumerate_configurations(fig1, 2)
    assert len(result.configurations) == 2
    assert result.truncated
    with pytest.raises(ValueError):
        enumerate_configurations(fig1, 0)


def test_enumerate_matches_oracle_on_random_models():
    rng = random.Random(4242)
    for _ in range(40):
        fm = random_model(rng, max_features=8)
        got = enumerate_configurations(fm, 100000).configurations
        expected = oracle_enumerate(fm)
        assert [oracle_key(fm, c) for c in got] == [oracle_key(fm, c) for c in expected]
        assert list(got) == expected
        for c in got:
            assert validate_configuration(fm, c).ok


def test_enumerate_deterministic(fig1):
    a = enumerate_configurations(fig1, 100)
    b = enumerate_configurations(fig1, 100)
    assert [config_digest(c) for c in a.configurations] == [config_digest(c) for c in b.configurations]


# ---------------------------------------------------------------------------
# Propagation


def test_propagate_from_linux(fig1):
    result = propagate_decisions(fig1, {"Linux": True})
    assert result.ok
    assert result.decisions == {"IaaS": True, "Linux": True, "OS": True, "Windows": False}


def test_propagate_empty_decisions(fig1):
    result = propagate_decisions(fig1, {})
    assert result.decisions == {"IaaS": True, "OS": True}


def test_propagate_xor_contradiction(fig1):
    result = propagate_decisions(fig1, {"Linux": True, "Windows": True})
    assert not result.ok
    assert result.contradiction.features == ("OS",)
    assert set(result.contradiction.conflicting_decisions) == {"Linux", "Windows"}


def test_propagate_unknown_feature(fig1):
    with pytest.raises(KeyError, match="unknown feature id: Ghost"):
        propagate_decisions(fig1, {"Ghost": True})


def test_propagate_requires_and_excludes(fig1_doc):
    fig1_doc["constraints"] = [
        {"kind": "requires", "a": "IDE", "b": "Linux"},
        {"kind": "excludes", "a": "IDE", "b": "Windows"},
    ]
    fm = parse_feature_model(fig1_doc)
    result = propagate_decisions(fm, {"IDE": True})
    assert result.decisions["Linux"] is True
    assert result.decisions["Windows"] is False


def _extensions(fm, decisions, configs):
    return [
        c
        for c in configs
        if all((fid in c.selected) == value for fid, value in decisions.items())
    ]


def test_propagate_agrees_with_enumeration_oracle():
    # contradiction <=> no valid full configuration extends the decisions,
    # and extensions never disagree with a propagated literal
    rng = random.Random(90125)
    for _ in range(60):
        fm = random_model(rng, max_features=7)
        all_configs = oracle_enumerate(fm)
        ids = sorted(fm.features)
        decisions = {
            fid: rng.random() < 0.5 for fid in rng.sample(ids, rng.randint(0, min(3, len(ids))))
        }
        result = propagate_decisions(fm, decisions)
        extensions = _extensions(fm, decisions, all_configs)
        if result.ok:
            assert extensions, f"propagation accepted decisions with no valid extension: {decisions}"
            for c in extensions:
                for fid, value in result.decisions.items():
                    assert (fid in c.selected) == value
        else:
            assert not extensions, f"propagation rejected extensible decisions: {decisions}"


# ---------------------------------------------------------------------------
# Constraint evaluation


def test_evaluate_requires_vacuous(fig1_doc):
    fig1_doc["constraints"] = [{"kind": "requires", "a": "IDE", "b": "Linux"}]
    fm = parse_feature_model(fig1_doc)
    assert evaluate_constraint(fm, cfg(fm, "IaaS", "OS", "Windows"), fm.constraints[0])


def test_evaluate_attr_predicate():
    fm = parse_feature_model(
        {
            "model_id": "m",
            "provider_id": "p",
            "layer": "IaaS",
            "features": [
                {"id": "VM", "name": "VM", "attributes": [{"name": "ram_gb", "domain": [2, 4, 8], "default": 2}]}
            ],
        }
    )
    predicate = AttrPredicate(feature="VM", attr="ram_gb", comparator=">=", literal=3)
    assert evaluate_constraint(fm, cfg(fm, "VM", VM__ram_gb=4), predicate)
    assert not evaluate_constraint(fm, cfg(fm, "VM", VM__ram_gb=2), predicate)
    with pytest.raises(UnboundAttributeError):
        evaluate_constraint(fm, cfg(fm, "VM"), predicate)


def test_evaluate_excludes(fig1):
    assert not evaluate_constraint(
        fig1, cfg(fig1, "IaaS", "OS", "Linux", "IDE"), Excludes(a="IDE", b="Linux")
    )
    assert evaluate_constraint(fig1, cfg(fig1, "IaaS", "OS", "Linux"), Requires(a="IDE", b="Windows"))

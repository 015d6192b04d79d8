import json

import numpy as np
import pytest

from greencomp.errors import InstanceValidationError
from greencomp.ingest import build_instance, dump_instance, interleave, parse_document
from greencomp.uncertainty import PolyhedralSet


def test_build_instance(tiny_doc):
    inst = build_instance(tiny_doc)
    assert (inst.dims.T, inst.dims.I, inst.dims.K, inst.dims.M) == (2, 2, 2, 1)
    assert np.allclose(inst.channel(0, 0).hHat, [1.0, 0.4 + 0.2j])
    assert isinstance(inst.bs[0].res, PolyhedralSet)
    assert inst.bs[0].res.subhorizons[0].e_max == 2.5
    assert inst.meta["seed"] == 7


def test_interleave_layout():
    assert interleave(np.array([1 + 2j, -3j])) == [1.0, 2.0, 0.0, -3.0]


def test_selling_ratio(tiny_doc):
    tiny_doc["prices"] = {"alpha": [0.4, 1.2], "r": 0.5}
    inst = build_instance(tiny_doc)
    assert np.allclose(inst.prices.beta, [0.2, 0.6])
    assert inst.meta["r"] == 0.5


def test_selling_rule_must_be_unique(tiny_doc):
    tiny_doc["prices"]["r"] = 0.5
    with pytest.raises(InstanceValidationError):
        build_instance(tiny_doc)


def test_price_invariant_named(tiny_doc):
    tiny_doc["prices"]["beta"] = [0.4, 0.6]
    with pytest.raises(InstanceValidationError) as err:
        build_instance(tiny_doc)
    assert "alpha^t > beta^t" in str(err.value)


def test_missing_and_duplicate_channels(tiny_doc):
    dup = dict(tiny_doc)
    dup["channels"] = tiny_doc["channels"] + [tiny_doc["channels"][0]]
    with pytest.raises(InstanceValidationError, match="duplicate"):
        build_instance(dup)
    tiny_doc["channels"] = tiny_doc["channels"][1:]
    with pytest.raises(InstanceValidationError, match="missing"):
        build_instance(tiny_doc)


def test_empty_res_set_rejected(tiny_doc):
    tiny_doc["base_stations"][0]["res"]["lower"] = [2.0, 0.5]
    with pytest.raises(InstanceValidationError, match="RES set nonempty"):
        build_instance(tiny_doc)


def test_unknown_field_rejected(tiny_doc):
    tiny_doc["dimensions"]["N"] = 3
    with pytest.raises(InstanceValidationError, match="config schema"):
        build_instance(tiny_doc)


def test_parse_document_from_file(tmp_path, tiny_doc):
    path = tmp_path / "config.json"
    path.write_text(json.dumps(tiny_doc))
    doc = parse_document(path)
    assert doc.dimensions.K == 2
    assert doc.seed == 7


def test_dump_instance_rebuilds_same_instance(tiny_instance):
    again = build_instance(json.loads(json.dumps(dump_instance(tiny_instance))))
    assert np.array_equal(again.prices.alpha, tiny_instance.prices.alpha)
    assert np.array_equal(again.bs[1].res.upper, tiny_instance.bs[1].res.upper)
    assert np.array_equal(again.channel(1, 0).hHat, tiny_instance.channel(1, 0).hHat)
    assert again.meta["seed"] == 7

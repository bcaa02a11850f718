import numpy as np
import pytest

from semmap.catalog import CatalogError, ClassCatalog, as_distribution, extend_prior, \
    new_catalog, whitelist_prior


def test_new_catalog_indices():
    cat = new_catalog(["corridor", "office"])
    assert len(cat) == 2
    assert cat.index("corridor") == 0 and cat.index("office") == 1
    assert cat.expansion_labels == ()


def test_205_base_labels():
    cat = new_catalog([f"class_{i}" for i in range(205)])
    assert len(cat) == 205 and cat.n_base == 205


@pytest.mark.parametrize("names", [["a", "a"], [], ["a", ""]])
def test_bad_catalogs(names):
    with pytest.raises(CatalogError):
        new_catalog(names)


def test_append_door_to_205():
    cat = new_catalog([f"class_{i}" for i in range(205)])
    assert cat.append_label("door") == 205
    assert len(cat) == 206
    assert cat.is_expansion(205) and not cat.is_expansion(204)


def test_append_preserves_order():
    cat = new_catalog(["corridor", "office"])
    before = {n: cat.index(n) for n in cat}
    assert cat.append_label("kitchen") == 2
    assert all(cat.index(n) == i for n, i in before.items())
    with pytest.raises(CatalogError):
        cat.append_label("office")


def test_roundtrip_dict():
    cat = new_catalog(["a", "b"])
    cat.append_label("c")
    again = ClassCatalog.from_dict(cat.to_dict())
    assert again.labels == cat.labels and again.n_base == 2


def test_whitelist_uniform():
    cat = new_catalog(["a", "b", "c"])
    np.testing.assert_array_equal(whitelist_prior(cat, {"a", "b"}), [0.5, 0.5, 0.0])
    np.testing.assert_allclose(whitelist_prior(cat), [1 / 3] * 3, atol=1e-15)


def test_whitelist_weights():
    cat = new_catalog(["a", "b"])
    np.testing.assert_allclose(whitelist_prior(cat, ["a", "b"], {"a": 3, "b": 1}), [0.75, 0.25])


def test_whitelist_errors():
    cat = new_catalog(["a", "b"])
    with pytest.raises(CatalogError):
        whitelist_prior(cat, ["zzz"])
    with pytest.raises(CatalogError):
        whitelist_prior(cat, [])


def test_whitelist_idempotent(rng):
    cat = new_catalog([f"l{i}" for i in range(10)])
    allowed = [f"l{i}" for i in range(0, 10, 3)]
    w = {n: float(rng.uniform(0.1, 5)) for n in allowed}
    p1 = whitelist_prior(cat, allowed, w)
    p2 = whitelist_prior(cat, allowed, w)
    np.testing.assert_array_equal(p1, p2)
    assert abs(p1.sum() - 1) <= 1e-9 and p1.min() >= 0


def test_as_distribution_tolerances():
    np.testing.assert_allclose(as_distribution([0.5, 0.5 + 1e-8]).sum(), 1.0, atol=1e-15)
    with pytest.raises(ValueError):
        as_distribution([0.5, 0.6])
    with pytest.raises(ValueError):
        as_distribution([1.5, -0.5])


def test_extend_prior_keeps_zeros():
    p = extend_prior([0.5, 0.5, 0.0])
    assert p[2] == 0.0 and p[3] > 0 and abs(p.sum() - 1) < 1e-12

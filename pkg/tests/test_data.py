import warnings

import numpy as np
import pytest

from osdl.data import (DataFormatError, RatingDataset, dumps_jester, gen_synthetic, load_cells,
                       load_jester, loads_jester, save_cells, save_jester, subsample_users,
                       user_stream)
from osdl.groups import from_groups, tree_groups


def row(values, count=None):
    count = sum(v != 99 for v in values) if count is None else count
    return ",".join([str(count)] + [str(v) for v in values])


def test_parse_two_ratings():
    values = [99] * 98 + [4.5, -3.2]
    ds = loads_jester(row(values) + "\n")
    assert (ds.n_users, ds.n_items, len(ds)) == (1, 100, 2)
    assert ds.items.tolist() == [98, 99]
    assert ds.ratings.tolist() == [4.5, -3.2]


def test_parse_empty_user_retained():
    ds = loads_jester(row([99] * 5) + "\n" + row([1, 99, 99, 99, 2]) + "\n")
    assert ds.n_users == 2 and len(ds) == 2
    per_user = ds.by_user()
    assert per_user[0][0].size == 0
    assert per_user[1][0].tolist() == [0, 4]
    # empty users never reach the training stream
    assert [len(o) for o, _ in user_stream(per_user)] == [2]


def test_parse_errors_name_the_line():
    good = row([1, 2, 3])
    with pytest.raises(DataFormatError, match=":2:"):
        loads_jester(good + "\n" + "2,1,x,3\n")
    with pytest.raises(DataFormatError, match=":2:"):
        loads_jester(good + "\n" + row([1, 2]) + "\n")
    with pytest.raises(DataFormatError, match="outside"):
        loads_jester(row([1, 10.5, 3]))
    with pytest.raises(DataFormatError):
        loads_jester("3\n")


def test_count_mismatch_warns():
    with pytest.warns(UserWarning, match="count column"):
        ds = loads_jester(row([1, 2, 99], count=3))
    assert len(ds) == 2


def test_boundary_ratings_accepted():
    ds = loads_jester(row([-10, 10, 0, 99]))
    assert ds.ratings.tolist() == [-10.0, 10.0, 0.0]


def test_jester_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    X = np.round(rng.uniform(-10, 10, size=(30, 100)), 2)
    X[rng.random(X.shape) < 0.4] = 99
    text = "\n".join(row(list(r)) for r in X) + "\n"
    ds = loads_jester(text)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        back = loads_jester(dumps_jester(ds))
    for a in ("users", "items", "ratings"):
        np.testing.assert_array_equal(getattr(ds, a), getattr(back, a))
    path = tmp_path / "j.csv"
    save_jester(ds, path)
    again = load_jester(path)
    np.testing.assert_array_equal(again.ratings, ds.ratings)
    assert again.fingerprint() == ds.fingerprint()


def test_load_multiple_files(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    a.write_text(row([1, 99, 2]) + "\n")
    b.write_text(row([99, 3, 99]) + "\n" + row([4, 5, 6]) + "\n")
    ds = load_jester([a, b])
    assert ds.n_users == 3 and len(ds) == 6
    assert ds.users.tolist() == [0, 0, 1, 2, 2, 2]
    c = tmp_path / "c.csv"
    c.write_text(row([1, 2]) + "\n")
    with pytest.raises(DataFormatError):
        load_jester([a, c])


def test_cells_roundtrip(tmp_path):
    path = tmp_path / "c.csv"
    save_cells(path, [0, 3], [5, 1], [1.25, -7.0])
    u, i, r = load_cells(path)
    assert u.tolist() == [0, 3] and i.tolist() == [5, 1] and r.tolist() == [1.25, -7.0]
    save_cells(path, [2], [4])
    u, i, r = load_cells(path)
    assert r is None and u.tolist() == [2]
    path.write_text("a,b\n1,2\n")
    with pytest.raises(DataFormatError):
        load_cells(path)


def test_dataset_checks():
    ds = RatingDataset(2, 2, [0, 0, 1], [1, 1, 5], [0.0, 11.0, 1.0])
    problems = ds.check()
    assert "item index out of range" in problems
    assert "duplicate (user, item) cells" in problems
    assert any("outside" in p for p in problems)
    with pytest.raises(ValueError):
        RatingDataset(1, 1, [0], [0, 0], [1.0])


def test_item_means_and_dense():
    ds = RatingDataset(2, 3, [0, 1, 1], [0, 0, 2], [1.0, 3.0, -4.0])
    np.testing.assert_allclose(ds.item_means(default=9.0), [2.0, 9.0, -4.0])
    X = ds.dense()
    assert X[1, 2] == -4.0 and np.isnan(X[0, 1])


def test_subsample_users():
    ds = loads_jester("\n".join(row([k, 99, 1]) for k in range(-5, 5)) + "\n")
    sub = subsample_users(ds, 4, seed=2)
    assert sub.n_users == 4 and set(sub.users.tolist()) == {0, 1, 2, 3}
    assert subsample_users(ds, 4, seed=2).fingerprint() == sub.fingerprint()
    assert subsample_users(ds, 100, seed=0) is ds


def test_synthetic_singletons_give_scaled_columns():
    gs = from_groups(5, [[i] for i in range(5)])
    syn = gen_synthetic(40, 8, gs, noise=0.0, missing=0.0, seed=3)
    for x, a in zip(syn.full, syn.codes):
        j = int(np.flatnonzero(a)[0])
        np.testing.assert_allclose(x, a[j] * syn.dictionary[:, j], atol=1e-14)
    np.testing.assert_allclose(np.linalg.norm(syn.dictionary, axis=0), 1.0)
    assert len(syn.dataset) == 40 * 8


def test_synthetic_missing_count():
    syn = gen_synthetic(1000, 20, tree_groups(3), missing=0.3, seed=0)
    assert len(syn.dataset) == round(0.7 * 20000)
    u, i, v = syn.hidden_cells()
    assert u.size == 6000
    np.testing.assert_array_equal(v, syn.full[u, i])


def test_synthetic_sparsity_and_determinism():
    gs = tree_groups(4)
    a = gen_synthetic(500, 20, gs, sparsity=4, noise=0.1, missing=0.3, seed=1)
    b = gen_synthetic(500, 20, gs, sparsity=4, noise=0.1, missing=0.3, seed=1)
    assert a.dataset.fingerprint() == b.dataset.fingerprint()
    supports = {tuple(np.flatnonzero(c)) for c in a.codes}
    allowed = {tuple(g.tolist()) for g in gs.groups if len(g) <= 4}
    assert supports <= allowed
    assert max(len(s) for s in supports) == 3
    with pytest.raises(ValueError):
        gen_synthetic(5, 5, gs, sparsity=0)


def test_user_stream_epochs_and_seed():
    per_user = [(np.array([k]), np.array([float(k)])) for k in range(6)]
    a = [int(o[0]) for o, _ in user_stream(per_user, epochs=2, seed=4)]
    assert sorted(a) == sorted(list(range(6)) * 2)
    assert a == [int(o[0]) for o, _ in user_stream(per_user, epochs=2, seed=4)]

import json
import struct

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from mvcca import MultiViewCCA
from mvcca.exceptions import ValidationError
from mvcca.harness import SynthConfig, dataset_from_synth, generate_three_view
from mvcca.harness.cli import main
from mvcca.harness.io import (
    FormatError,
    load_dataset,
    load_model,
    parse_query_line,
    read_assignments,
    read_dense,
    read_keywords,
    read_matrix,
    read_sparse,
    save_dataset,
    save_model,
    write_assignments,
    write_dense,
    write_keywords,
    write_sparse,
)
from mvcca.kernel_maps import FeatureAssembler
from mvcca.text import TagFeaturizer

SMALL = json.dumps({"rff_dim": 120, "pca_dim": 20, "tag_dim": 20, "candidate_dims": [4, 8]})


class TestMatrixFiles:
    @given(arrays(np.float64, st.tuples(st.integers(0, 6), st.integers(0, 6)),
                  elements=st.floats(allow_nan=False)))
    def test_dense_round_trip(self, X):
        import tempfile, os
        with tempfile.TemporaryDirectory() as d:
            p = os.path.join(d, "x.mvx")
            write_dense(p, X)
            Y = read_dense(p)
        assert Y.shape == X.shape
        assert Y.tobytes() == np.ascontiguousarray(X).tobytes()

    def test_dense_layout(self, tmp_path):
        p = tmp_path / "x.mvx"
        write_dense(p, np.array([[1.0, 2.0, 3.0]]))
        raw = p.read_bytes()
        assert raw[:4] == b"MVX1"
        assert struct.unpack("<QQ", raw[4:20]) == (1, 3)
        assert struct.unpack("<3d", raw[20:]) == (1.0, 2.0, 3.0)

    def test_dense_truncated(self, tmp_path):
        p = tmp_path / "x.mvx"
        write_dense(p, np.ones((3, 3)))
        p.write_bytes(p.read_bytes()[:-8])
        with pytest.raises(FormatError):
            read_dense(p)
        p.write_bytes(b"NOPE" + bytes(16))
        with pytest.raises(FormatError):
            read_dense(p)

    def test_sparse_round_trip(self, tmp_path):
        M = sp.random(7, 5, density=0.3, random_state=0, format="csr")
        p = tmp_path / "m.txt"
        write_sparse(p, M)
        lines = p.read_text().splitlines()
        assert lines[0] == f"7 5 {M.nnz}"
        np.testing.assert_array_equal(read_sparse(p).toarray(), M.toarray())
        assert sp.issparse(read_matrix(p))
        write_dense(tmp_path / "d.mvx", M.toarray())
        assert isinstance(read_matrix(tmp_path / "d.mvx"), np.ndarray)

    def test_sparse_bad(self, tmp_path):
        p = tmp_path / "m.txt"
        p.write_text("2 2 1\n5 0 1.0\n")
        with pytest.raises(FormatError):
            read_sparse(p)

    def test_keywords_and_assignments(self, tmp_path):
        write_keywords(tmp_path / "k.tsv", ["a", "b"], [{"sky", "sea"}, set()])
        assert read_keywords(tmp_path / "k.tsv") == {"a": {"sky", "sea"}, "b": set()}
        write_assignments(tmp_path / "c.tsv", ["a", "b"], np.array([1, 0]))
        assert (tmp_path / "c.tsv").read_text() == "a\t1\nb\t0\n"
        assert read_assignments(tmp_path / "c.tsv") == {"a": 1, "b": 0}


class TestQueryLines:
    def test_forms(self):
        assert parse_query_line("12\n") == ("row", 12)
        assert parse_query_line("deer snow:6") == ("tags", ["deer", "snow"], {"snow": 6.0})
        assert parse_query_line("a,b") == ("tags", ["a", "b"], {})

    def test_errors(self):
        for bad in ("", "a:x", ":3"):
            with pytest.raises(ValidationError):
                parse_query_line(bad)


class TestModelDirectory:
    def test_round_trip(self, tmp_path, rng):
        n = 200
        blocks = [rng.normal(size=(n, 5)), rng.dirichlet(np.ones(6), size=n)]
        docs = [[f"t{rng.integers(8)}", f"u{rng.integers(3)}"] for _ in range(n)]
        K = np.eye(3)[rng.integers(3, size=n)]
        model = MultiViewCCA(
            4, preprocessors=[FeatureAssembler(("rff", "sqrt"), rff_dim=32, pca_dim=5),
                              TagFeaturizer(n_components=4, tfidf=True), None],
            view_names=["V", "T", "K"])
        model.fit([blocks, docs, K])
        save_model(model, tmp_path / "m", p=4, seeds=[0])
        loaded, manifest = load_model(tmp_path / "m")
        assert manifest["format_version"] == 1 and manifest["d"] == 4
        np.testing.assert_array_equal(loaded.eigenvalues_, model.eigenvalues_)
        for raw, view in ((blocks, "V"), (docs, "T"), (K, "K")):
            np.testing.assert_allclose(loaded.transform_view(raw, view),
                                       model.transform_view(raw, view), atol=1e-12)

    def test_missing(self, tmp_path):
        with pytest.raises(OSError):
            load_model(tmp_path / "nowhere")


def test_dataset_round_trip(tmp_path):
    ds = dataset_from_synth(generate_three_view(SynthConfig(n_items=200, seed=2)))
    back = load_dataset(save_dataset(ds, tmp_path / "ds"))
    assert back.ids == ds.ids and back.tags == ds.tags and back.labels == ds.labels
    assert back.keywords == ds.keywords and back.map_kinds == ds.map_kinds
    for a, b in zip(back.visual, ds.visual):
        np.testing.assert_array_equal(a, b)
    for s in ds.splits:
        np.testing.assert_array_equal(back.splits[s], ds.splits[s])


@pytest.fixture(scope="module")
def work(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert main(["synth", "--out", str(root / "ds"), "--n-items", "600", "--seed", "3"]) == 0
    ds = root / "ds" / "manifest.json"
    assert main(["fit", "--dataset", str(ds), "--experiment", SMALL, "--d", "6",
                 "--out", str(root / "model")]) == 0
    assert main(["index", "--dataset", str(ds), "--model", str(root / "model"),
                 "--out", str(root / "index")]) == 0
    tag_index = root / "tag_index"
    assert main(["index", "--dataset", str(ds), "--model", str(root / "model"), "--view", "T",
                 "--split", "train", "--out", str(tag_index)]) == 0
    return root, ds


class TestCLI:
    def test_search_tags(self, work, tmp_path):
        root, _ = work
        out = tmp_path / "r.tsv"
        rc = main(["search", "--model", str(root / "model"), "--index", str(root / "index"),
                   "--tags", "kw01", "--weight", "kw01=2", "-k", "5", "--out", str(out)])
        assert rc == 0
        rows = [line.split("\t") for line in out.read_text().splitlines()]
        assert [r[0] for r in rows] == ["1", "2", "3", "4", "5"]
        scores = [float(r[2]) for r in rows]
        assert scores == sorted(scores, reverse=True)

    def test_search_batch(self, work, tmp_path):
        root, ds = work
        q = tmp_path / "q.txt"
        q.write_text("kw01 kw02:3\n\n7\n")
        out = tmp_path / "r.tsv"
        rc = main(["search", "--model", str(root / "model"), "--index", str(root / "index"),
                   "--queries", str(q), "--features", str(ds.parent / "feature0.mvx"),
                   str(ds.parent / "feature1.mvx"), "-k", "3", "--out", str(out)])
        assert rc == 0
        rows = [line.split("\t") for line in out.read_text().splitlines()]
        assert [r[0] for r in rows] == ["0"] * 3 + ["1"] * 3
        rc = main(["search", "--model", str(root / "model"), "--index", str(root / "index"),
                   "--queries", str(q), "-k", "3", "--out", str(out)])
        assert rc == 2

    def test_search_item_matches_library(self, work, tmp_path):
        root, ds = work
        out = tmp_path / "r.tsv"
        assert main(["search", "--model", str(root / "model"), "--index", str(root / "index"),
                     "--item", "item005", "--dataset", str(ds), "-k", "1",
                     "--out", str(out)]) == 0
        assert float(out.read_text().split("\t")[2]) <= 1.0 + 1e-12

    def test_annotate_eval_export(self, work, tmp_path):
        root, ds = work
        m = str(root / "model")
        assert main(["annotate", "--model", m, "--index", str(root / "tag_index"),
                     "--dataset", str(ds), "--item", "item010", "--out",
                     str(tmp_path / "a.tsv")]) == 0
        item, tags = (tmp_path / "a.tsv").read_text().strip().split("\t")
        assert item == "item010" and 1 <= len(tags.split(",")) <= 5
        assert main(["eval", "--dataset", str(ds), "--model", m, "--experiment", SMALL,
                     "--out", str(tmp_path / "e.json")]) == 0
        scores = json.loads((tmp_path / "e.json").read_text())
        assert set(scores) == {"I2I", "T2I"}
        assert main(["export-2d", "--dataset", str(ds), "--model", m,
                     "--out", str(tmp_path / "x.tsv")]) == 0
        assert (tmp_path / "x.tsv").read_text().startswith("item_id\tview\tx1\tx2\tlabel\n")

    def test_featurize_project_cluster_vocab(self, work, tmp_path):
        root, ds = work
        m = str(root / "model")
        assert main(["featurize", "--dataset", str(ds), "--model", m,
                     "--out", str(tmp_path / "f.mvx")]) == 0
        assert main(["project", "--model", m, "--input", str(ds.parent / "feature0.mvx"),
                     str(ds.parent / "feature1.mvx"), "--out", str(tmp_path / "z.mvx")]) == 0
        assert read_dense(tmp_path / "z.mvx").shape == (600, 6)
        assert main(["cluster-tags", "--dataset", str(ds), "--method", "nc",
                     "--out", str(tmp_path / "c.tsv")]) == 0
        assert len(read_assignments(tmp_path / "c.tsv")) > 0
        assert main(["build-vocab", "--corpus", str(ds.parent / "tags.txt"), "--min-count", "5",
                     "--out", str(tmp_path / "v.tsv")]) == 0
        counts = [int(line.split("\t")[1]) for line in (tmp_path / "v.tsv").read_text().splitlines()]
        assert counts == sorted(counts, reverse=True) and min(counts) >= 5

    def test_config_and_flag_precedence(self, work, tmp_path):
        root, _ = work
        cfg = tmp_path / "c.yaml"
        cfg.write_text(f"corpus: {root / 'ds' / 'tags.txt'}\nmin-count: 1000000\n")
        assert main(["build-vocab", "--config", str(cfg)]) == 2
        assert main(["build-vocab", "--config", str(cfg), "--min-count", "1",
                     "--out", str(tmp_path / "v.tsv")]) == 0
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"no_such_option": 1}))
        assert main(["build-vocab", "--config", str(bad), "--corpus", "x"]) == 2

    def test_exit_codes(self, work, tmp_path):
        root, _ = work
        m, idx = str(root / "model"), str(root / "index")
        assert main(["search", "--model", m, "--index", idx, "--tags", "zzz-unknown"]) == 2
        assert main(["search", "--model", m, "--index", str(tmp_path / "none"),
                     "--tags", "kw01"]) == 4
        assert main(["fit", "--dataset", str(tmp_path / "none.json"), "--out", "x"]) == 4

    def test_numerical_exit_code(self, tmp_path):
        # constant features with no ridge make the covariance singular
        root = tmp_path / "ds"
        assert main(["synth", "--out", str(root), "--n-items", "200"]) == 0
        write_dense(root / "feature0.mvx", np.zeros((200, 3)))
        write_dense(root / "feature1.mvx", np.zeros((200, 3)))
        manifest = root / "manifest.json"
        m = json.loads(manifest.read_text())
        m["features"] = [{"path": "feature0.mvx", "map": "none"},
                         {"path": "feature1.mvx", "map": "none"}]
        manifest.write_text(json.dumps(m))
        exp = json.dumps({"pca_dim": None, "tag_dim": 5, "candidate_dims": [4], "epsilon": 0.0})
        rc = main(["fit", "--dataset", str(manifest), "--experiment", exp, "--views", "V,K",
                   "--d", "2", "--out", str(tmp_path / "m")])
        assert rc == 3

    def test_experiment_deterministic(self, work, tmp_path):
        _, ds = work
        args = ["experiment", "--dataset", str(ds), "--experiment", SMALL,
                "--roster", "V,V+T", "--tasks", "I2I,T2I"]
        assert main(args + ["--out", str(tmp_path / "a.json")]) == 0
        assert main(args + ["--out", str(tmp_path / "b.json")]) == 0
        assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()
        assert (tmp_path / "a.json.timings.json").exists()

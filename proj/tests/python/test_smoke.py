import math

import numpy as np
import pytest

import amdprep


def smooth(h, w):
    y, x = np.mgrid[0:h, 0:w]
    r = 127.5 + 100 * np.sin(x / 37.0) * np.cos(y / 53.0)
    g = 127.5 + 100 * np.cos((x + y) / 61.0)
    b = (x * 255.0 / max(w - 1, 1))
    return np.clip(np.rint(np.stack([r, g, b], axis=-1)), 0, 255).astype(np.uint8)


def test_estimate_recovers_transform():
    t = amdprep.SimilarityTransform(1.3, 0.7, 12.0, -4.5)
    src = np.array([[0, 0], [100, 20], [40, 300], [250, 250]], dtype=float)
    est = amdprep.estimate_similarity(src, t.apply(src))
    assert est.scale == pytest.approx(1.3, abs=1e-9)
    assert est.rotation == pytest.approx(0.7, abs=1e-9)
    assert (est.tx, est.ty) == pytest.approx((12.0, -4.5), abs=1e-9)
    assert max(amdprep.residuals(est, src, t.apply(src))) < 1e-9
    assert est.compose(est.inverse()).scale == pytest.approx(1.0)


def test_too_few_pairs_maps_to_error_code():
    with pytest.raises(amdprep.AmdprepError) as info:
        amdprep.estimate_similarity(np.zeros((1, 2)), np.zeros((1, 2)))
    assert info.value.code == "TooFewPairs"
    assert isinstance(info.value, RuntimeError)


def test_raster_round_trips_through_numpy():
    img = smooth(40, 60)
    assert np.array_equal(amdprep.warp(img, amdprep.SimilarityTransform(), 60, 40), img)
    gray = img[..., 0].copy()
    out = amdprep.equalize_histogram(gray)
    assert out.shape == gray.shape and out.dtype == np.uint8 and out.max() == 255
    assert amdprep.center_crop_scale(img).shape == (512, 512, 3)
    assert np.array_equal(amdprep.decode_png(amdprep.encode_png(img)), img)


def test_binarize_and_overlay():
    prob = np.array([[0.0, 0.05], [0.5, 1.0]])
    mask = amdprep.binarize(prob, 0.05)
    assert mask.tolist() == [[False, True], [True, True]]
    rgb = np.zeros((2, 2, 3), dtype=np.uint8)
    over = amdprep.overlay(rgb, mask, alpha=0.4)
    assert over[0, 1].tolist() == [102, 0, 0] and over[0, 0].tolist() == [0, 0, 0]
    with pytest.raises(amdprep.AmdprepError) as info:
        amdprep.binarize(prob, 1.5)
    assert info.value.code == "InvalidThreshold"


def test_sweep_matches_numpy_recount():
    rng = np.random.default_rng(3)
    truths = [rng.random((16, 16)) < 0.3 for _ in range(3)]
    maps = [np.round(rng.random((16, 16)) * 255) / 255 for _ in range(3)]
    rows = amdprep.sweep([("m", maps)], truths)
    assert [r.threshold for r in rows] == amdprep.DEFAULT_THRESHOLDS
    for row in rows:
        pred = np.concatenate([(m >= row.threshold).ravel() for m in maps])
        truth = np.concatenate([t.ravel() for t in truths])
        tp = int(np.sum(pred & truth))
        fp = int(np.sum(pred & ~truth))
        fn = int(np.sum(~pred & truth))
        assert (row.counts.tp, row.counts.fp, row.counts.fn) == (tp, fp, fn)
        assert row.metrics.dice == pytest.approx(2 * tp / (2 * tp + fp + fn), abs=1e-12)
    report = amdprep.render_report(rows)
    assert report.startswith("| Network model | Threshold |")
    assert amdprep.render_report(rows, "csv").splitlines()[0].startswith("model,threshold,tp")


def test_run_case_gate():
    rgb = smooth(8, 8)
    neg = amdprep.run_case(rgb, 0.49)
    assert neg["decision"] is False and neg["mask"] is None
    pos = amdprep.run_case(rgb, 0.5, np.full((8, 8), 0.2))
    assert pos["decision"] is True and pos["mask"].all() and pos["overlay"].shape == (8, 8, 3)
    with pytest.raises(amdprep.AmdprepError) as info:
        amdprep.run_case(rgb, 0.9)
    assert info.value.code == "MissingSegmentationMap"


def test_dataset_and_sync_round_trip(tmp_path):
    rgb = smooth(512, 512)
    src = np.array([[10, 10], [400, 30], [200, 480]], dtype=float)
    mask = np.zeros((512, 512), dtype=bool)
    mask[200:240, 100:180] = True
    s = amdprep.assemble_set(rgb, rgb, src, src, mask, id="s1")
    assert s.transform.scale == pytest.approx(1.0)
    manifest = amdprep.save_set(s, tmp_path / "local")
    assert manifest["revision"] == 1 and set(manifest["checksums"]) >= {"rgb.png", "mask.png"}
    assert amdprep.load_set(tmp_path / "local", "s1") == s

    server = amdprep.SyncServer(tmp_path / "server")
    server.start()
    try:
        client = amdprep.SyncClient("127.0.0.1", server.port)
        assert client.healthy()
        bundle = amdprep.pack_bundle(tmp_path / "local", "s1")
        assert client.upload("s1", bundle)["revision"] == 1
        with pytest.raises(amdprep.RevisionConflictError) as info:
            client.upload("s1", bundle, expected_revision=0)
        assert info.value.current_revision == 1
        with pytest.raises(amdprep.AmdprepError) as info:
            client.upload("s1", b"not a zip")
        assert info.value.code == "ValidationFailed"
        assert info.value.invariant == "bundle must be a valid zip archive"
        record, data = client.download("s1")
        assert record["manifest"]["checksums"] == manifest["checksums"]
        amdprep.install_bundle(data, tmp_path / "copy")
        assert amdprep.load_set(tmp_path / "copy", "s1") == s
        assert [r["id"] for r in client.list()] == ["s1"]
    finally:
        server.stop()


def test_healthy_set_has_black_contrast():
    s = amdprep.assemble_healthy_set(smooth(300, 400), id="h")
    assert s.label == "healthy" and not s.contrast.any() and not s.mask.any()
    assert math.isclose(s.transform.scale, 1.0)

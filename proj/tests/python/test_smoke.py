"""Smoke tests for the python bindings."""

import numpy as np
import pytest

import voxqa


def test_phantom_is_deterministic_and_labeled():
    img1, gt1 = voxqa.generate_phantom(dims=(16, 16, 16), classes=2, seed=7)
    img2, gt2 = voxqa.generate_phantom(dims=(16, 16, 16), classes=2, seed=7)
    assert np.array_equal(img1.array, img2.array)
    assert np.array_equal(gt1.array, gt2.array)
    labels = gt1.array
    for c in range(3):
        assert (labels == c).sum() > 0
    assert img1.array.dtype == np.float32
    assert labels.dtype == np.uint8


def test_vvol_round_trip(tmp_path):
    img, gt = voxqa.generate_phantom(dims=(16, 16, 16), classes=2, seed=3)
    ipath = str(tmp_path / "img.vvol")
    gpath = str(tmp_path / "gt.vvol")
    voxqa.save_grid(img, ipath)
    voxqa.save_grid(gt, gpath)
    back_img = voxqa.load_image(ipath)
    back_gt = voxqa.load_labels(gpath)
    assert np.array_equal(back_img.array, img.array)
    assert np.array_equal(back_gt.array, gt.array)
    assert back_gt.num_classes == 2
    with pytest.raises(IOError):
        voxqa.load_image(str(tmp_path / "missing.vvol"))


def test_normalize_and_resample():
    rng = np.random.default_rng(5)
    arr = rng.uniform(-50, 50, size=(8, 8, 8)).astype(np.float32)
    grid = voxqa.VoxelGrid(arr, spacing=(1.0, 1.0, 1.0))
    normed = voxqa.normalize_intensity(grid)
    assert normed.array.min() == pytest.approx(-1.0)
    assert normed.array.max() == pytest.approx(1.0)

    half = voxqa.resample_isotropic(grid, 2.0)
    assert half.array.shape == (4, 4, 4)
    assert half.spacing == (2.0, 2.0, 2.0)


def test_qi_equals_accuracy_exactly():
    rng = np.random.default_rng(11)
    a = rng.integers(0, 3, size=(6, 6, 6)).astype(np.uint8)
    b = rng.integers(0, 3, size=(6, 6, 6)).astype(np.uint8)
    ma = voxqa.LabelMask(a, num_classes=2)
    mb = voxqa.LabelMask(b, num_classes=2)
    acc = float((a == b).mean())
    assert voxqa.qi_from_truth(ma, mb) == acc
    em = voxqa.true_error_map(ma, mb)
    assert voxqa.quality_indicator(em) == acc
    assert np.array_equal(em.array, (a != b).astype(np.uint8))


def test_metrics_against_numpy():
    rng = np.random.default_rng(13)
    xs = rng.uniform(0, 1, 50)
    ys = 0.8 * xs + rng.uniform(0, 0.1, 50)
    r = voxqa.pearson(list(xs), list(ys))
    assert r == pytest.approx(np.corrcoef(xs, ys)[0, 1], abs=1e-12)
    assert voxqa.mae(list(xs), list(ys)) == pytest.approx(np.abs(xs - ys).mean(), abs=1e-12)

    counts = voxqa.histogram(list(xs), [0.0, 0.5, 1.0])
    assert sum(counts) == 50


def test_one_hot_partition():
    _, gt = voxqa.generate_phantom(dims=(16, 16, 16), classes=3, seed=1)
    oh = voxqa.one_hot(gt)
    assert oh.shape == (4, 16, 16, 16)
    assert np.array_equal(oh.sum(axis=0), np.ones((16, 16, 16), dtype=np.float32))
    assert np.array_equal(oh.argmax(axis=0).astype(np.uint8), gt.array)


def test_tiny_training_and_prediction():
    scans = []
    for i in range(2):
        img, gt = voxqa.generate_phantom(dims=(16, 16, 16), classes=2, seed=100 + i)
        scans.append(voxqa.preprocess(f"s{i}", img, gt))

    seg3d = voxqa.train_segmentor(scans, rank=3, epochs=1, steps=3, seed=1,
                                  base_channels=2, patch=12)
    seg2d = voxqa.train_segmentor(scans, rank=2, epochs=1, steps=3, seed=2,
                                  base_channels=2, patch=12)
    records = voxqa.generate_masks(seg3d, seg2d, scans)
    assert len(records) == 20  # 10 per scan

    pred = voxqa.train_predictor(seg3d, seg2d, scans, epochs=1, steps=3, seed=3,
                                 base_channels=2, patch=12)
    soft, binary, qi = voxqa.predict_error_map(pred, scans[0].image, scans[0].gt, tau=0.5)
    assert 0.0 <= qi <= 1.0
    assert soft.array.shape == scans[0].image.array.shape
    assert set(np.unique(binary.array)) <= {0, 1}

    report = voxqa.evaluate_with_predictor(pred, records, scans, tau=0.5)
    assert len(report["rows"]) == 22  # 10 auto + 1 GT per scan


def test_oracle_evaluation_identity():
    scans = []
    for i in range(2):
        img, gt = voxqa.generate_phantom(dims=(16, 16, 16), classes=2, seed=200 + i)
        scans.append(voxqa.preprocess(f"s{i}", img, gt))
    seg3d = voxqa.train_segmentor(scans, rank=3, epochs=1, steps=2, seed=4,
                                  base_channels=2, patch=12)
    seg2d = voxqa.train_segmentor(scans, rank=2, epochs=1, steps=2, seed=5,
                                  base_channels=2, patch=12)
    records = voxqa.generate_masks(seg3d, seg2d, scans)
    report = voxqa.evaluate_with_oracle(records, scans, tau=0.5)
    assert report["corr"]["pcc_qi_acc"] == 1.0
    assert report["corr"]["mae_qi_acc"] == 0.0


def test_kfold_partition():
    ids = [f"scan_{i}" for i in range(20)]
    folds = voxqa.kfold_split(ids, 5, seed=9)
    assert len(folds) == 5
    seen = set()
    for train, test in folds:
        assert len(train) == 16 and len(test) == 4
        assert not (set(train) & set(test))
        seen |= set(test)
    assert seen == set(ids)


def test_checkpoint_round_trip(tmp_path):
    img, gt = voxqa.generate_phantom(dims=(16, 16, 16), classes=2, seed=42)
    scans = [voxqa.preprocess("s", img, gt)]
    net = voxqa.train_segmentor(scans, epochs=1, steps=2, seed=6, base_channels=2, patch=12)
    path = str(tmp_path / "net.ckpt")
    net.save(path)
    other = voxqa.train_segmentor(scans, epochs=0, steps=0, seed=7, base_channels=2, patch=12)
    other.load(path)
    rec1 = voxqa.generate_masks(net, voxqa.train_segmentor(scans, rank=2, epochs=0, steps=0,
                                                           seed=8, base_channels=2, patch=12),
                                scans)
    rec2 = voxqa.generate_masks(other, voxqa.train_segmentor(scans, rank=2, epochs=0, steps=0,
                                                             seed=8, base_channels=2,
                                                             patch=12), scans)
    for a, b in zip(rec1, rec2):
        if a.mask_type.startswith("3D"):
            assert np.array_equal(a.mask.array, b.mask.array)

"""Volumetric segmentation error-map prediction and quality assessment."""

from ._core import (  # noqa: F401
    DivergenceError,
    ErrorMap,
    IoError,
    LabelMask,
    MaskRecord,
    Scan,
    SegNet,
    ShapeError,
    SoftErrorMap,
    ValueError,
    VoxelGrid,
    __version__,
    binarize,
    dice_multiclass,
    error_map_metrics,
    evaluate_with_oracle,
    evaluate_with_predictor,
    generate_masks,
    generate_phantom,
    histogram,
    kfold_split,
    load_image,
    load_labels,
    mae,
    normalize_intensity,
    one_hot,
    pearson,
    predict_error_map,
    preprocess,
    qi_from_truth,
    quality_indicator,
    resample_isotropic,
    resample_isotropic_labels,
    roi_from_mask,
    save_grid,
    train_predictor,
    train_segmentor,
    true_error_map,
)

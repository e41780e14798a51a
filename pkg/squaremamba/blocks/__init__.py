from .windows import (
    SpatialAugmentation,
    Standardization,
    TargetAttachment,
    augment_spatial,
    impute_frame,
    standardize_window,
)

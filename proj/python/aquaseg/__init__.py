from ._aquaseg import (
    ConfigError,
    ContractError,
    FormatError,
    IoError,
    ShapeError,
    UNet,
    dice,
    evaluate,
    iou,
    patch_count,
    read_raster,
    run_cli,
    synth,
    train,
    write_raster,
)

__all__ = [
    "ConfigError",
    "ContractError",
    "FormatError",
    "IoError",
    "ShapeError",
    "UNet",
    "dice",
    "evaluate",
    "iou",
    "patch_count",
    "read_raster",
    "run_cli",
    "synth",
    "train",
    "write_raster",
]

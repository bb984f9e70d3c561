"""Operator-learning MRE inversion: numpy front end to the C++ core."""

from ._onli import (
    CapacityError,
    ConfigError,
    ContractError,
    Error,
    GeometryError,
    Model,
    ModelConfig,
    NumericalError,
    SizingError,
    ape,
    assemble_input,
    curl,
    direct_inversion,
    fftn,
    fold_stats,
    naive_dftn,
    paired_t_test,
    pearson_r,
    read_complex_field,
    read_mask,
    read_real_field,
    relative_l2_loss,
    run_cli,
    solve_forward,
    ssim3d,
    write_complex_field,
    write_real_field,
)

__version__ = "0.1.0"


def main(argv=None):
    import sys

    return run_cli(list(sys.argv[1:] if argv is None else argv))

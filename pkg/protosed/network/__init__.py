from protosed.network.mcs_net import (
    MCSNet,
    bl_block,
    channel_excitation,
    cs_se,
    init_params,
    pl_block,
    spatial_excitation,
)

__all__ = [
    "MCSNet",
    "bl_block",
    "channel_excitation",
    "cs_se",
    "init_params",
    "pl_block",
    "spatial_excitation",
]

"""Cooperative downlink precoding in cell-free massive MIMO with over-the-air CSI exchange."""

from .orchestrator import AlgorithmId, IterationTrace, run
from .pilots import PilotBook, make_pilots, orthogonal_pilots, random_pilots
from .scenario import (ChannelSet, ConfigError, ScenarioConfig, Topology, draw_channels,
                       draw_drop, generate_topology, load_config, pathloss_db)

__version__ = "0.1.0"

from .delay import DelayModel, UnknownLink, sample_link_delay
from .synth import kth_prefix_config, random_topology_config
from .topology import (
    NOT_EXISTING,
    ConfigError,
    FarasKind,
    FarasPattern,
    RouterView,
    Session,
    Topology,
    build_topology,
    lg_snapshot,
    load_config,
    topology_from_file,
)
from .traceroute import (
    Hop,
    ProbeSpec,
    TraceRecord,
    campaign,
    read_traces,
    run_traceroute,
    tick_time,
    write_traces,
)

__all__ = [
    "ConfigError", "DelayModel", "FarasKind", "FarasPattern", "Hop", "NOT_EXISTING",
    "ProbeSpec", "RouterView", "Session", "Topology", "TraceRecord", "UnknownLink",
    "build_topology", "campaign", "kth_prefix_config", "lg_snapshot", "load_config",
    "random_topology_config", "read_traces", "run_traceroute", "sample_link_delay", "tick_time",
    "topology_from_file", "write_traces",
]

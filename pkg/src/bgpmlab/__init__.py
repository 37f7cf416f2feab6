"""BGP-Multipath laboratory: a seeded inter-domain routing simulator with
ECMP border routers, plus the looking-glass and traceroute analysis
pipeline that recovers its planted multipath cases."""

__version__ = "0.1.0"

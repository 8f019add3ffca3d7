"""Stable throughput of an energy-harvesting cognitive relay network.

A primary user shares its channel with a battery-powered secondary user
that relays some of the primary packets through a finite queue.  The
package computes the largest secondary service rate that keeps both users
stable, for the full battery/relay chain and for two reduced systems, and
checks the analysis against a slot-level simulator.
"""

__version__ = "0.1.0"

from .model import (  # noqa: E402
    ArrivalRates,
    D1Policy,
    D2Policy,
    PolicyMatrix,
    SystemParams,
    ThroughputPoint,
)

__all__ = ["ArrivalRates", "D1Policy", "D2Policy", "PolicyMatrix", "SystemParams",
           "ThroughputPoint", "__version__"]

"""Templates for classical and decentralized methods."""
from .circuits import (DECENTRALIZED, AlgorithmId, ZooAlgorithm, ZooCircuit, ZooEquilibrium, build,
                       metropolis_resistances, resistor_mixing)
from .graph import DEFAULT_GRAPH, Graph, MixingMatrix, format_graph, metropolis, parse_graph
from .reference import lemma_h1_descent, reference_update

__all__ = ["AlgorithmId", "Graph", "MixingMatrix", "ZooAlgorithm", "ZooCircuit", "ZooEquilibrium", "build",
           "metropolis", "metropolis_resistances", "parse_graph", "format_graph", "reference_update",
           "lemma_h1_descent", "resistor_mixing", "DEFAULT_GRAPH", "DECENTRALIZED"]

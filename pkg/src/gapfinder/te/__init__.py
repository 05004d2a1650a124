"""Traffic engineering: topologies, heuristic encodings, simulators and analysis."""

from .analysis import (HEURISTICS, REFERENCES, Goalpost, TEAnalysis, analyze_te, demands_from_rows,
                       load_demands, save_demands)
from .encode import (ClientSplit, DemandVars, DPConfig, POPConfig, RealisticSpec, demand_name,
                     dp_follower, feasible_flow_constraints, opt_max_flow_follower,
                     pop_client_split_constraints, pop_follower_sample, pop_objective,
                     pop_partition, realistic_input_constraints)
from .simulate import TEResult, simulate_dp, simulate_opt, simulate_pop, simulate_pop_aggregate
from .topology import (DETOUR_DEMANDS, Pair, Topology, TopologyError, detour_topology, random_topology,
                       yen_k_shortest_paths)

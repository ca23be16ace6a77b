"""railopt: rerouting and rescheduling of rail traffic on microscopic networks.

Modules:
    milp           generic MILP container, LP relaxation, branch-and-bound
    network        track circuits, routes, derived topology
    scenario       trains, nominal timetables, random perturbed scenarios
    formulation    full reference/extended scheduling models
    decomposition  stage-1 routing/ordering models, schedule reconstruction
    pipeline       one-shot and two-stage solution flows
    evaluation     benchmark harness and aggregate metrics
    cli            command-line entry point
"""

__version__ = "0.1.0"

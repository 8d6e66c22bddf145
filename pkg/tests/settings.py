"""Desk-scale gridworld settings shared by the driver and acceptance tests.

REINFORCE was tuned on seeds 100-102 by area under the evaluation curve and
VR-SCP on seeds 100-104 by PR over a 32-point grid, both at a 60k-probe
budget.  The tests use seeds 0-9.
"""

GRIDWORLD_BUDGET = 60_000
GRIDWORLD_GRID_STEP = 3000
GRIDWORLD_VRSCP = dict(eps=3e-3, rho=0.1, L=1.0, Q=2, b_check=100, b_h=20, c_S=1e-4)
GRIDWORLD_REINFORCE = dict(step_size=1.0, batch=1)

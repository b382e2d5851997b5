"""Local trajectory prediction on ego occupancy windows.

Subpackages: octree (3D mapping), kinematics (skid-steer model), world (2D
simulator and teacher), dataset (samples and labels), seq2seq (model and
training), planners (hybrid A*), eval (metrics and benchmarks), cli.
"""

__version__ = "0.1.0"

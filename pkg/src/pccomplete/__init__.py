"""Point cloud completion: self-projected depth views, dual-path refinement, metrics."""

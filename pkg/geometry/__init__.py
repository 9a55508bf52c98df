# Structured grids, embedded fracture meshes and coarse-cell maps

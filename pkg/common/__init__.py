# Common linear-algebra kernels and shared utilities

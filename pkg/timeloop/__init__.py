# Time-stepping schemes and the transient driver

# Nonlocal multicontinuum coarse spaces

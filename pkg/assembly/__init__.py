# Finite-volume assembly of fine-scale block operators

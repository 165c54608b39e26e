"""
Numerical core: ECM simulator, QdLinear features, reverse-mode tensors,
the Y-shaped model, the physics-guided loss and optimizers.
"""

__all__ = [
    "coherence",
    "device",
    "dynamics",
    "hamiltonians",
    "navigator",
    "perturbation",
    "spectroscopy",
    "spin_algebra",
    "stark",
    "tomography",
]

"""Monte Carlo laboratory for Fleming-Viot particle systems.

Modules:

* ``specfun``      closed-form special functions, densities and tube constants
* ``sampling``     seeded streams and exact samplers (gamma, hitting times, alpha^2)
* ``paths``        Euler-Maruyama paths and the tube-deviation check
* ``fleming_viot`` particle systems, scaling construction, sum-of-squares coupling
* ``diagnostics``  summary statistics, perpetuity/KS tests, exponential tail fits
* ``cli``          batch experiment runner (``fvlab``)
"""
__version__ = "0.1.0"

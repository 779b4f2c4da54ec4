"""
Density- and viscosity-driven fingering in porous media

Structured-grid discretisation of Darcy flow coupled to a convection-diffusion
equation with linear adsorption and first-order reaction.
"""

"""
Fingering

Simulation of density- and viscosity-driven fingering in porous media with
adsorption and reaction
"""
import importlib.metadata

__version__ = importlib.metadata.version("adsorption-fingering")

"""hklab: transport distances, Renyi-type divergences and functional inequalities
on finite metric measure spaces."""

__version__ = "0.3.0"

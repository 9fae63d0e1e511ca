"""Face-based discretization of the unsteady incompressible Navier-Stokes
equations on polytopal meshes, with monolithic and artificial-compressibility
time stepping and a Taylor-Green benchmark harness."""

__version__ = "0.1.0"

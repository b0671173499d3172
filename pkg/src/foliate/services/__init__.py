"""Service layer.

Each module turns a `GeometryContext` into results (residual suites,
functionals, flow traces, reports). Commands call services; services never
touch argv or exit codes.
"""

"""Numerical substrate: charts and fields, frames, transverse geometry, basic operators."""

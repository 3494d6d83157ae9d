"""Astronomical image quality diagnosis engine."""

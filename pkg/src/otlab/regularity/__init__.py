"""Measurement pipeline for partial W^{2,p} regularity of discrete potentials."""

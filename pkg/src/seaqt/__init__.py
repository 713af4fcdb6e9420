"""Steepest-entropy-ascent quantum thermodynamics: dynamics, diagnostics, CLI."""

"""Coned-off graph flows, cocycles and induction."""

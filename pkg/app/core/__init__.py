"""Core utilities package."""


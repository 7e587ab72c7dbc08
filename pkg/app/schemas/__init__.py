"""Pydantic schemas package."""


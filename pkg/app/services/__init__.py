"""Services package."""


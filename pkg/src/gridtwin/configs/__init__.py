"""Default configuration documents shipped with the package."""

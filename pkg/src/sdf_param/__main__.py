"""Allow running as ``python -m sdf_param``."""

from .cli import app

if __name__ == "__main__":
    app()

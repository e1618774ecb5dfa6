"""sdf-param Tests Package."""
